//! The four-behavior tempo model.
//!
//! Performers are assumed to switch between constant tempo, deceleration,
//! acceleration and single-note stress. Deceleration and acceleration must
//! last at least two notes and stress is a one-note excursion from constant
//! tempo. Both rules are encoded by expanding the four behaviors into six
//! chain nodes, which turns the second-order behavior chain into a
//! first-order one over [`ExpandedNode`].
//!
//! The continuous state is `(tempo, acceleration-or-stress)` in b.p.m. Which
//! linear dynamics drive note `i` depends on the node pair `(s_{i-1}, s_i)`
//! and the written note length `l_i` (in fractions of a measure).

use crate::error::{Error, Result};
use crate::lgssm::{GaussianBelief, StepDynamics, StepMeasurement};
use crate::linalg::{add2, Mat2, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::fmt;

/// Performer behavior at a note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum BehaviorState {
    Constant = 1,
    Deceleration = 2,
    Acceleration = 3,
    Stress = 4,
}

impl BehaviorState {
    pub fn label(self) -> u8 {
        self as u8
    }
}

/// Node of the expanded six-state chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum ExpandedNode {
    #[serde(rename = "const")]
    Const = 0,
    #[serde(rename = "decel_enter")]
    DecelEnter = 1,
    #[serde(rename = "decel")]
    DecelCont = 2,
    #[serde(rename = "accel_enter")]
    AccelEnter = 3,
    #[serde(rename = "accel")]
    AccelCont = 4,
    #[serde(rename = "stress")]
    Stress = 5,
}

use ExpandedNode::*;

impl ExpandedNode {
    pub const ALL: [ExpandedNode; 6] = [Const, DecelEnter, DecelCont, AccelEnter, AccelCont, Stress];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn behavior(self) -> BehaviorState {
        match self {
            Const => BehaviorState::Constant,
            DecelEnter | DecelCont => BehaviorState::Deceleration,
            AccelEnter | AccelCont => BehaviorState::Acceleration,
            Stress => BehaviorState::Stress,
        }
    }

    /// Legal successors, in node order.
    pub fn successors(self) -> &'static [ExpandedNode] {
        match self {
            Const => &[Const, DecelEnter, AccelEnter, Stress],
            DecelEnter => &[DecelCont],
            DecelCont => &[Const, DecelCont, AccelEnter],
            AccelEnter => &[AccelCont],
            AccelCont => &[Const, DecelEnter, AccelCont],
            Stress => &[Const],
        }
    }

    pub fn can_precede(self, next: ExpandedNode) -> bool {
        self.successors().contains(&next)
    }

    pub fn name(self) -> &'static str {
        match self {
            Const => "const",
            DecelEnter => "decel_enter",
            DecelCont => "decel",
            AccelEnter => "accel_enter",
            AccelCont => "accel",
            Stress => "stress",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.name() == s)
    }
}

impl fmt::Display for ExpandedNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed variance of the acceleration innovation.
pub const SIGMA2_ACC: f64 = 1.0;
/// Fixed variance of the stress innovation.
pub const SIGMA2_STRESS: f64 = 1.0;

/// Per-recording parameters.
///
/// `row_const` holds the probabilities of leaving constant tempo for
/// (constant, deceleration, acceleration, stress); `row_decel` those of a
/// continuing deceleration for (constant, deceleration, acceleration);
/// `row_accel` those of a continuing acceleration for (constant,
/// deceleration, acceleration).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaTempo {
    pub sigma2_eps: f64,
    pub mu_tempo: f64,
    pub mu_acc: f64,
    pub mu_stress: f64,
    pub sigma2_tempo: f64,
    pub sigma2_acc: f64,
    pub sigma2_stress: f64,
    pub row_const: [f64; 4],
    pub row_decel: [f64; 3],
    pub row_accel: [f64; 3],
}

impl ThetaTempo {
    /// Build from the published column order
    /// `σ²_ε, μ_tempo, μ_acc, μ_stress, σ²_tempo, p11, p12, p22, p31, p13, p21, p32`.
    /// The remaining entry of each row is the complement to one.
    #[allow(clippy::too_many_arguments)]
    pub fn from_table_row(
        sigma2_eps: f64,
        mu_tempo: f64,
        mu_acc: f64,
        mu_stress: f64,
        sigma2_tempo: f64,
        p11: f64,
        p12: f64,
        p22: f64,
        p31: f64,
        p13: f64,
        p21: f64,
        p32: f64,
    ) -> Self {
        Self {
            sigma2_eps,
            mu_tempo,
            mu_acc,
            mu_stress,
            sigma2_tempo,
            sigma2_acc: SIGMA2_ACC,
            sigma2_stress: SIGMA2_STRESS,
            row_const: [p11, p12, p13, 1.0 - p11 - p12 - p13],
            row_decel: [p21, p22, 1.0 - p21 - p22],
            row_accel: [p31, p32, 1.0 - p31 - p32],
        }
    }

    /// The twelve published columns, in order.
    pub fn table_row(&self) -> [f64; 12] {
        [
            self.sigma2_eps,
            self.mu_tempo,
            self.mu_acc,
            self.mu_stress,
            self.sigma2_tempo,
            self.row_const[0],
            self.row_const[1],
            self.row_decel[1],
            self.row_accel[0],
            self.row_const[2],
            self.row_decel[0],
            self.row_accel[1],
        ]
    }

    /// Prior means, with `mean_tempo` standing in for the recording's
    /// average observed tempo.
    pub fn prior_mean(mean_tempo: f64) -> Self {
        let norm = |a: &[f64]| -> Vec<f64> {
            let s: f64 = a.iter().sum();
            a.iter().map(|v| v / s).collect()
        };
        let r1 = norm(&PRIOR_ROW_CONST);
        let r2 = norm(&PRIOR_ROW_DECEL);
        let r3 = norm(&PRIOR_ROW_ACCEL);
        Self {
            sigma2_eps: PRIOR_SIGMA2_EPS.mean(),
            mu_tempo: tempo_prior(mean_tempo).mean(),
            mu_acc: -PRIOR_NEG_MU_ACC.mean(),
            mu_stress: -PRIOR_NEG_MU_STRESS.mean(),
            sigma2_tempo: PRIOR_SIGMA2_TEMPO.mean(),
            sigma2_acc: SIGMA2_ACC,
            sigma2_stress: SIGMA2_STRESS,
            row_const: [r1[0], r1[1], r1[2], r1[3]],
            row_decel: [r2[0], r2[1], r2[2]],
            row_accel: [r3[0], r3[1], r3[2]],
        }
    }

    /// Check positivity of variances, finiteness and row stochasticity.
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.sigma2_eps,
            self.mu_tempo,
            self.mu_acc,
            self.mu_stress,
            self.sigma2_tempo,
            self.sigma2_acc,
            self.sigma2_stress,
        ];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters("non-finite parameter".into()));
        }
        for (name, v) in [
            ("sigma2_eps", self.sigma2_eps),
            ("sigma2_tempo", self.sigma2_tempo),
            ("sigma2_acc", self.sigma2_acc),
            ("sigma2_stress", self.sigma2_stress),
        ] {
            if v <= 0.0 {
                return Err(Error::InvalidParameters(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, row) in [
            ("row_const", &self.row_const[..]),
            ("row_decel", &self.row_decel[..]),
            ("row_accel", &self.row_accel[..]),
        ] {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidParameters(format!("{name} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameters(format!("{name} sums to {s}")));
            }
        }
        Ok(())
    }
}

/// One written note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEvent {
    pub index: usize,
    pub measure: i64,
    /// Position within the measure, as written in the source file.
    pub beat: String,
    /// Written length as a fraction of a measure.
    pub l: f64,
}

/// Initial tempo distribution `x₁ ~ N((μ₁, 0), diag(σ²₁, 0))`; the first
/// node is always [`ExpandedNode::Const`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitBelief {
    pub mu1: f64,
    pub sigma2_1: f64,
}

impl InitBelief {
    /// μ₁ is the mean of the first eight observed tempos; σ²₁ is the prior
    /// mean of σ²_tempo.
    pub fn from_observations(y: &[f64]) -> Self {
        let head = &y[..y.len().min(8)];
        let mu1 = if head.is_empty() {
            0.0
        } else {
            head.iter().sum::<f64>() / head.len() as f64
        };
        Self {
            mu1,
            sigma2_1: PRIOR_SIGMA2_TEMPO.mean(),
        }
    }

    pub fn belief(&self) -> GaussianBelief {
        GaussianBelief::new([self.mu1, 0.0], Mat2::diag(self.sigma2_1, 0.0))
    }
}

/// Dynamics that advance the state into a note played in node `cur` after
/// a note played in node `prev`.
pub fn dynamics_for(prev: ExpandedNode, cur: ExpandedNode, l: f64, theta: &ThetaTempo) -> Result<StepDynamics> {
    use BehaviorState as B;
    if !prev.can_precede(cur) {
        return Err(Error::IllegalTransition { from: prev, to: cur });
    }
    let hold = Mat2::diag(1.0, 0.0);
    let ramp = Mat2::new(1.0, l, 0.0, 1.0);
    let acc_q = Mat2::new(l * l, l, l, 1.0).scale(theta.sigma2_acc);
    let decel_d = [l * theta.mu_acc, theta.mu_acc];
    let accel_d = [-l * theta.mu_acc, -theta.mu_acc];
    let reset = StepDynamics {
        d: [theta.mu_tempo, 0.0],
        t: Mat2::ZERO,
        q: Mat2::diag(theta.sigma2_tempo, 0.0),
    };
    let steady = StepDynamics {
        d: [0.0, 0.0],
        t: hold,
        q: Mat2::ZERO,
    };
    let out = match (cur.behavior(), prev.behavior()) {
        (B::Constant, B::Constant) | (B::Constant, B::Stress) => steady,
        (B::Stress, B::Constant) => StepDynamics {
            d: [0.0, theta.mu_stress],
            t: hold,
            q: Mat2::diag(0.0, theta.sigma2_stress),
        },
        (B::Deceleration, B::Deceleration) | (B::Acceleration, B::Acceleration) => StepDynamics {
            d: [0.0, 0.0],
            t: ramp,
            q: Mat2::ZERO,
        },
        (B::Deceleration, B::Constant) | (B::Deceleration, B::Acceleration) => StepDynamics {
            d: decel_d,
            t: hold,
            q: acc_q,
        },
        (B::Acceleration, B::Constant) | (B::Acceleration, B::Deceleration) => StepDynamics {
            d: accel_d,
            t: hold,
            q: acc_q,
        },
        (B::Constant, B::Deceleration) | (B::Constant, B::Acceleration) => reset,
        _ => unreachable!("successor table admits only the listed behavior pairs"),
    };
    Ok(out)
}

/// Measurement for a note played in node `cur`: stress adds the second
/// state component to the observed tempo.
pub fn measurement_for(cur: ExpandedNode, theta: &ThetaTempo) -> StepMeasurement {
    let z = if cur == Stress { [1.0, 1.0] } else { [1.0, 0.0] };
    StepMeasurement {
        c: 0.0,
        z,
        g: theta.sigma2_eps,
    }
}

/// Probability of moving from `prev` to `cur`; zero for illegal pairs.
pub fn transition_prob(prev: ExpandedNode, cur: ExpandedNode, theta: &ThetaTempo) -> f64 {
    match (prev, cur) {
        (Const, Const) => theta.row_const[0],
        (Const, DecelEnter) => theta.row_const[1],
        (Const, AccelEnter) => theta.row_const[2],
        (Const, Stress) => theta.row_const[3],
        (DecelEnter, DecelCont) => 1.0,
        (DecelCont, Const) => theta.row_decel[0],
        (DecelCont, DecelCont) => theta.row_decel[1],
        (DecelCont, AccelEnter) => theta.row_decel[2],
        (AccelEnter, AccelCont) => 1.0,
        (AccelCont, Const) => theta.row_accel[0],
        (AccelCont, DecelEnter) => theta.row_accel[1],
        (AccelCont, AccelCont) => theta.row_accel[2],
        (Stress, Const) => 1.0,
        _ => 0.0,
    }
}

/// The 6×6 transition matrix indexed by [`ExpandedNode::index`].
pub fn transition_matrix(theta: &ThetaTempo) -> [[f64; 6]; 6] {
    let mut m = [[0.0; 6]; 6];
    for a in ExpandedNode::ALL {
        for b in ExpandedNode::ALL {
            m[a.index()][b.index()] = transition_prob(a, b, theta);
        }
    }
    m
}

/// Gamma distribution in shape–scale form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub scale: f64,
    mean: f64,
}

impl GammaPrior {
    /// The mean is stored as `shape · scale` rounded once.
    pub const fn new(shape: f64, scale: f64) -> Self {
        Self {
            shape,
            scale,
            mean: shape * scale,
        }
    }

    /// The Gamma with the given mean and variance; the mean is kept exactly
    /// rather than recomputed from the rounded shape and scale.
    pub fn from_moments(mean: f64, variance: f64) -> Self {
        Self {
            shape: mean * mean / variance,
            scale: variance / mean,
            mean,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * x.ln() - x / self.scale - ln_gamma(self.shape) - self.shape * self.scale.ln()
    }
}

pub const PRIOR_SIGMA2_EPS: GammaPrior = GammaPrior::new(40.0, 10.0);
pub const PRIOR_NEG_MU_ACC: GammaPrior = GammaPrior::new(15.0, 2.0 / 3.0);
pub const PRIOR_NEG_MU_STRESS: GammaPrior = GammaPrior::new(20.0, 2.0);
pub const PRIOR_SIGMA2_TEMPO: GammaPrior = GammaPrior::new(40.0, 10.0);
pub const PRIOR_ROW_CONST: [f64; 4] = [85.0, 5.0, 2.0, 8.0];
pub const PRIOR_ROW_DECEL: [f64; 3] = [4.0, 10.0, 1.0];
pub const PRIOR_ROW_ACCEL: [f64; 3] = [5.0, 3.0, 7.0];

/// Prior on μ_tempo centered on the recording's mean tempo `ȳ`:
/// Gamma(ȳ²/100, 100/ȳ), i.e. mean ȳ and variance 100.
pub fn tempo_prior(mean_tempo: f64) -> GammaPrior {
    GammaPrior::from_moments(mean_tempo, 100.0)
}

/// Dirichlet log-density on the simplex; `-∞` off the support.
pub fn dirichlet_ln_pdf(p: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), alpha.len());
    let s: f64 = p.iter().sum();
    if p.iter().any(|v| !(*v > 0.0)) || (s - 1.0).abs() > 1e-9 {
        return f64::NEG_INFINITY;
    }
    let a0: f64 = alpha.iter().sum();
    let norm = ln_gamma(a0) - alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>();
    norm + p.iter().zip(alpha).map(|(pi, ai)| (ai - 1.0) * pi.ln()).sum::<f64>()
}

/// Log prior density of θ given the recording's mean tempo. The fixed
/// variances contribute nothing; parameters outside the support give `-∞`.
pub fn log_prior(theta: &ThetaTempo, mean_tempo: f64) -> f64 {
    let terms = [
        PRIOR_SIGMA2_EPS.ln_pdf(theta.sigma2_eps),
        tempo_prior(mean_tempo).ln_pdf(theta.mu_tempo),
        PRIOR_NEG_MU_ACC.ln_pdf(-theta.mu_acc),
        PRIOR_NEG_MU_STRESS.ln_pdf(-theta.mu_stress),
        PRIOR_SIGMA2_TEMPO.ln_pdf(theta.sigma2_tempo),
        dirichlet_ln_pdf(&theta.row_const, &PRIOR_ROW_CONST),
        dirichlet_ln_pdf(&theta.row_decel, &PRIOR_ROW_DECEL),
        dirichlet_ln_pdf(&theta.row_accel, &PRIOR_ROW_ACCEL),
    ];
    if terms.iter().any(|t| !t.is_finite()) {
        return f64::NEG_INFINITY;
    }
    terms.iter().sum()
}

/// Dynamics and measurement sequences for a fixed node path. The first note
/// is reached from the initial belief through constant-tempo dynamics.
pub fn path_system(
    path: &[ExpandedNode],
    score: &[ScoreEvent],
    theta: &ThetaTempo,
) -> Result<(Vec<StepDynamics>, Vec<StepMeasurement>)> {
    if path.len() != score.len() {
        return Err(Error::LengthMismatch {
            what: "node path",
            got: path.len(),
            expected: score.len(),
        });
    }
    let mut dyns = Vec::with_capacity(path.len());
    let mut meas = Vec::with_capacity(path.len());
    let mut prev = Const;
    for (node, ev) in path.iter().zip(score) {
        dyns.push(dynamics_for(prev, *node, ev.l, theta)?);
        meas.push(measurement_for(*node, theta));
        prev = *node;
    }
    Ok((dyns, meas))
}

/// A simulated performance.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub nodes: Vec<ExpandedNode>,
    pub states: Vec<Vec2>,
    pub tempos: Vec<f64>,
}

/// Draw a performance of `score` from the generative model.
pub fn simulate(theta: &ThetaTempo, score: &[ScoreEvent], init: &InitBelief, seed: u64) -> Result<Simulation> {
    if score.is_empty() {
        return Err(Error::InvalidInput("cannot simulate an empty score".into()));
    }
    theta.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = score.len();
    let mut nodes = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut tempos = Vec::with_capacity(n);

    let mut x = [
        init.mu1 + init.sigma2_1.max(0.0).sqrt() * rng.sample::<f64, _>(StandardNormal),
        0.0,
    ];
    let mut prev = Const;
    for (i, ev) in score.iter().enumerate() {
        let cur = if i == 0 {
            Const
        } else {
            draw_successor(prev, theta, &mut rng)
        };
        let dy = dynamics_for(prev, cur, ev.l, theta)?;
        let noise = dy.q.psd_sqrt().mul_vec([
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ]);
        if i > 0 {
            x = add2(add2(dy.d, dy.t.mul_vec(x)), noise);
        }
        let me = measurement_for(cur, theta);
        let eps = me.g.sqrt() * rng.sample::<f64, _>(StandardNormal);
        tempos.push(me.c + me.z[0] * x[0] + me.z[1] * x[1] + eps);
        nodes.push(cur);
        states.push(x);
        prev = cur;
    }
    Ok(Simulation { nodes, states, tempos })
}

fn draw_successor(prev: ExpandedNode, theta: &ThetaTempo, rng: &mut ChaCha8Rng) -> ExpandedNode {
    let u: f64 = rng.random();
    let succ = prev.successors();
    let mut acc = 0.0;
    for &s in succ {
        acc += transition_prob(prev, s, theta);
        if u < acc {
            return s;
        }
    }
    // u landed in the round-off gap above the cumulative sum
    *succ
        .iter()
        .rev()
        .find(|s| transition_prob(prev, **s, theta) > 0.0)
        .unwrap_or(&succ[0])
}
