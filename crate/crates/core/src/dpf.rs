//! Discrete particle filter over node paths.
//!
//! Each particle is one node path together with the Kalman belief obtained by
//! filtering the observations along that path. At every note each particle is
//! expanded to all legal successor nodes, the child weight is the parent
//! weight times the transition probability times the one-step predictive
//! likelihood, and when more than `B` children have positive weight the set is
//! cut back to `B` either greedily (top `B`) or with Fearnhead–Clifford
//! optimal resampling.
//!
//! Weights are carried in log space and normalized with a max shift at every
//! step.

use crate::error::{Error, Result};
use crate::lgssm::{filter_step, GaussianBelief, StepDynamics, StepMeasurement};
use crate::tempo_model::{
    dynamics_for, measurement_for, transition_prob, ExpandedNode, InitBelief, ScoreEvent, ThetaTempo,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeamConfig {
    /// Maximum number of paths kept after each step.
    pub beam_width: usize,
    pub seed: u64,
    /// Keep the `B` heaviest paths instead of resampling.
    pub greedy: bool,
}

impl BeamConfig {
    pub fn greedy(beam_width: usize) -> Self {
        Self {
            beam_width,
            seed: 0,
            greedy: true,
        }
    }

    pub fn resampling(beam_width: usize, seed: u64) -> Self {
        Self {
            beam_width,
            seed,
            greedy: false,
        }
    }
}

/// A weighted node path with its filtered belief at the last note.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub path: Vec<ExpandedNode>,
    pub weight: f64,
    pub log_weight: f64,
    pub belief: GaussianBelief,
    /// Kalman log-likelihood of the observations along `path`.
    pub loglik: f64,
}

#[derive(Debug)]
struct Link {
    node: ExpandedNode,
    parent: Option<Rc<Link>>,
}

impl Drop for Link {
    fn drop(&mut self) {
        // unlink iteratively so long chains do not recurse on drop
        let mut next = self.parent.take();
        while let Some(rc) = next {
            match Rc::try_unwrap(rc) {
                Ok(mut link) => next = link.parent.take(),
                Err(_) => break,
            }
        }
    }
}

fn cmp_links(a: &Rc<Link>, b: &Rc<Link>) -> Ordering {
    if Rc::ptr_eq(a, b) {
        return Ordering::Equal;
    }
    let prefix = match (&a.parent, &b.parent) {
        (Some(pa), Some(pb)) => cmp_links(pa, pb),
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
    };
    prefix.then(a.node.cmp(&b.node))
}

fn materialize(link: &Rc<Link>) -> Vec<ExpandedNode> {
    let mut out = Vec::new();
    let mut cur = Some(link);
    while let Some(l) = cur {
        out.push(l.node);
        cur = l.parent.as_ref();
    }
    out.reverse();
    out
}

#[derive(Debug, Clone)]
struct Live {
    path: Rc<Link>,
    log_weight: f64,
    belief: GaussianBelief,
    loglik: f64,
}

struct Child {
    parent: usize,
    node: ExpandedNode,
    log_weight: f64,
    belief: GaussianBelief,
    loglik: f64,
}

/// Heavier first; equal weights fall back to the lexicographically smaller
/// path.
fn rank(live: &[Live], a: &Child, b: &Child) -> Ordering {
    b.log_weight
        .partial_cmp(&a.log_weight)
        .unwrap_or(Ordering::Equal)
        .then_with(|| cmp_links(&live[a.parent].path, &live[b.parent].path))
        .then(a.node.cmp(&b.node))
}

/// Incremental form of [`dpf_run`]: a particle set that can be advanced one
/// note at a time.
pub struct Beam {
    live: Vec<Live>,
    cfg: BeamConfig,
    rng: ChaCha8Rng,
    step: usize,
}

impl Beam {
    /// Condition the initial belief on the first note, played in
    /// [`ExpandedNode::Const`].
    pub fn start(y0: f64, first: &ScoreEvent, theta: &ThetaTempo, init: &InitBelief, cfg: BeamConfig) -> Result<Self> {
        if cfg.beam_width == 0 {
            return Err(Error::InvalidInput("beam width must be at least 1".into()));
        }
        let start = ExpandedNode::Const;
        let out = filter_step(
            &init.belief(),
            &dynamics_for(start, start, first.l, theta)?,
            &measurement_for(start, theta),
            y0,
        )
        .map_err(|e| e.at(0))?;
        Ok(Self {
            live: vec![Live {
                path: Rc::new(Link {
                    node: start,
                    parent: None,
                }),
                log_weight: 0.0,
                belief: out.updated,
                loglik: out.ll_inc,
            }],
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            step: 1,
        })
    }

    /// Rebuild a beam from materialized particles, e.g. to continue a run.
    /// `step` is the index of the next note to be processed.
    pub fn from_particles(particles: &[Particle], step: usize, cfg: BeamConfig) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::EmptyParticleSet);
        }
        let live = particles
            .iter()
            .map(|p| {
                let mut link: Option<Rc<Link>> = None;
                for node in &p.path {
                    link = Some(Rc::new(Link {
                        node: *node,
                        parent: link,
                    }));
                }
                Live {
                    path: link.expect("particle paths are non-empty"),
                    log_weight: p.log_weight,
                    belief: p.belief,
                    loglik: p.loglik,
                }
            })
            .collect();
        let mut seed_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        seed_rng.set_stream(step as u64);
        Ok(Self {
            live,
            cfg,
            rng: seed_rng,
            step,
        })
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    /// Expand, weight, normalize and reduce for one note.
    pub fn advance(&mut self, y: f64, event: &ScoreEvent, theta: &ThetaTempo) -> Result<()> {
        let step = self.step;
        // dynamics, measurement and log transition probability of every
        // legal move at this note
        let mut moves: [Vec<(ExpandedNode, StepDynamics, StepMeasurement, f64)>; 6] = Default::default();
        for prev in ExpandedNode::ALL {
            for &next in prev.successors() {
                let p = transition_prob(prev, next, theta);
                if p > 0.0 {
                    moves[prev.index()].push((
                        next,
                        dynamics_for(prev, next, event.l, theta)?,
                        measurement_for(next, theta),
                        p.ln(),
                    ));
                }
            }
        }
        let mut children = Vec::with_capacity(self.live.len() * 4);
        for (pi, parent) in self.live.iter().enumerate() {
            for (next, dynamics, measurement, ln_p) in &moves[parent.path.node.index()] {
                let out = filter_step(&parent.belief, dynamics, measurement, y).map_err(|e| e.at(step))?;
                children.push(Child {
                    parent: pi,
                    node: *next,
                    log_weight: parent.log_weight + ln_p + out.ll_inc,
                    belief: out.updated,
                    loglik: parent.loglik + out.ll_inc,
                });
            }
        }
        if !normalize(children.iter_mut().map(|c| &mut c.log_weight)) {
            return Err(Error::ParticleCollapse { step });
        }
        children.retain(|c| c.log_weight > f64::NEG_INFINITY);

        let b = self.cfg.beam_width;
        if children.len() > b {
            if self.cfg.greedy {
                children.select_nth_unstable_by(b - 1, |a, c| rank(&self.live, a, c));
                children.truncate(b);
            } else {
                let weights: Vec<f64> = children.iter().map(|c| c.log_weight.exp()).collect();
                let (kept, new_w) = fc_resample(&weights, b, &mut self.rng)?;
                let mut slots: Vec<Option<Child>> = children.into_iter().map(Some).collect();
                children = kept
                    .iter()
                    .zip(&new_w)
                    .map(|(&k, &w)| {
                        let mut c = slots[k].take().expect("resampler returns distinct indices");
                        c.log_weight = w.ln();
                        c
                    })
                    .collect();
            }
            if !normalize(children.iter_mut().map(|c| &mut c.log_weight)) {
                return Err(Error::ParticleCollapse { step });
            }
        }

        self.live = children
            .into_iter()
            .map(|c| Live {
                path: Rc::new(Link {
                    node: c.node,
                    parent: Some(Rc::clone(&self.live[c.parent].path)),
                }),
                log_weight: c.log_weight,
                belief: c.belief,
                loglik: c.loglik,
            })
            .collect();
        self.step += 1;
        Ok(())
    }

    /// Current particles, heaviest first (ties: lexicographically smaller path).
    pub fn particles(&self) -> Vec<Particle> {
        let mut order: Vec<usize> = (0..self.live.len()).collect();
        order.sort_by(|&a, &b| {
            let (la, lb) = (&self.live[a], &self.live[b]);
            lb.log_weight
                .partial_cmp(&la.log_weight)
                .unwrap_or(Ordering::Equal)
                .then_with(|| cmp_links(&la.path, &lb.path))
        });
        order
            .into_iter()
            .map(|i| {
                let l = &self.live[i];
                Particle {
                    path: materialize(&l.path),
                    weight: l.log_weight.exp(),
                    log_weight: l.log_weight,
                    belief: l.belief,
                    loglik: l.loglik,
                }
            })
            .collect()
    }
}

/// Shift log weights so they log-sum-exp to zero. Returns false when no
/// weight is positive.
fn normalize<'a>(log_weights: impl Iterator<Item = &'a mut f64>) -> bool {
    let lw: Vec<&'a mut f64> = log_weights.collect();
    let max = lw.iter().map(|v| **v).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return false;
    }
    let sum: f64 = lw.iter().map(|v| (**v - max).exp()).sum();
    let lse = max + sum.ln();
    for v in lw {
        *v -= lse;
    }
    true
}

/// Run the filter over a whole performance and return the final particle
/// set (at most `B` particles, weights summing to one).
pub fn dpf_run(
    y: &[f64],
    score: &[ScoreEvent],
    theta: &ThetaTempo,
    init: &InitBelief,
    cfg: BeamConfig,
) -> Result<Vec<Particle>> {
    if y.len() != score.len() {
        return Err(Error::LengthMismatch {
            what: "tempo sequence",
            got: y.len(),
            expected: score.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("empty performance".into()));
    }
    theta.validate()?;
    let mut beam = Beam::start(y[0], &score[0], theta, init, cfg)?;
    for i in 1..y.len() {
        beam.advance(y[i], &score[i], theta)?;
    }
    Ok(beam.particles())
}

/// Fearnhead–Clifford optimal resampling.
///
/// Finds `c` with `Σ min(c·wⱼ, 1) = B`. Weights with `c·wⱼ ≥ 1` survive
/// unchanged; the rest compete for the remaining slots by systematic
/// sampling with spacing `1/c`, and every survivor among them gets weight
/// `1/c`. Each input's expected output weight equals its input weight.
///
/// Returns the surviving indices (ascending) and their renormalized weights.
pub fn fc_resample<R: Rng + ?Sized>(weights: &[f64], beam: usize, rng: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
    if weights.len() <= beam {
        return Err(Error::NoResamplingNeeded {
            count: weights.len(),
            beam,
        });
    }
    if beam == 0 {
        return Err(Error::InvalidInput("beam width must be at least 1".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    let w: Vec<f64> = weights.iter().map(|v| v / total).collect();
    let positive = w.iter().filter(|v| **v > 0.0).count();
    if positive <= beam {
        let kept: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
        let kw = kept.iter().map(|&i| w[i]).collect();
        return Ok((kept, kw));
    }

    let c = fc_threshold(&w, beam);
    let inv_c = 1.0 / c;
    let mut keep = vec![false; w.len()];
    let mut new_w = vec![0.0; w.len()];
    let mut n_kept = 0;
    for (i, &wi) in w.iter().enumerate() {
        if c * wi >= 1.0 {
            keep[i] = true;
            new_w[i] = wi;
            n_kept += 1;
        }
    }
    let slots = beam - n_kept;
    if slots > 0 {
        let mut u = rng.random::<f64>() * inv_c;
        let mut acc = 0.0;
        let mut taken = 0;
        for (i, &wi) in w.iter().enumerate() {
            if keep[i] || wi == 0.0 {
                continue;
            }
            acc += wi;
            if acc > u && taken < slots {
                keep[i] = true;
                new_w[i] = inv_c;
                taken += 1;
                u += inv_c;
            }
        }
        // round-off can leave the last stratum unfilled; take the heaviest remaining
        while taken < slots {
            let j = (0..w.len())
                .filter(|&i| !keep[i] && w[i] > 0.0)
                .max_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap().then(b.cmp(&a)))
                .expect("more positive weights than slots");
            keep[j] = true;
            new_w[j] = inv_c;
            taken += 1;
        }
    }
    let kept: Vec<usize> = (0..w.len()).filter(|&i| keep[i]).collect();
    let s: f64 = kept.iter().map(|&i| new_w[i]).sum();
    let kw = kept.iter().map(|&i| new_w[i] / s).collect();
    Ok((kept, kw))
}

/// Solve `Σ min(c·wⱼ, 1) = B` for normalized weights with more than `B`
/// positive entries.
pub fn fc_threshold(weights: &[f64], beam: usize) -> f64 {
    let mut sorted: Vec<f64> = weights.iter().copied().filter(|w| *w > 0.0).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut tail: f64 = sorted.iter().sum();
    for (k, &wk) in sorted.iter().enumerate().take(beam) {
        let c = (beam - k) as f64 / tail;
        if c * wk < 1.0 {
            return c;
        }
        tail -= wk;
    }
    unreachable!("with more than B positive weights some k < B satisfies c·w_k < 1")
}

/// The heaviest particle; ties go to the lexicographically smaller path.
pub fn best_path(particles: &[Particle]) -> Result<&Particle> {
    particles
        .iter()
        .min_by(|a, b| {
            b.weight
                .partial_cmp(&a.weight)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.path.cmp(&b.path))
        })
        .ok_or(Error::EmptyParticleSet)
}
