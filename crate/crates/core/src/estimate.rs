//! Penalized maximum-likelihood fitting of per-recording parameters.
//!
//! For a candidate θ the particle filter (greedy mode) finds the best node
//! path, the Kalman filter along that path gives the log-likelihood, and the
//! informative prior is added as a penalty. The objective is piecewise smooth
//! with jumps wherever the best path changes, so it is maximized with a
//! simplex search over an unconstrained reparametrization, restarted from
//! the prior means and from seeded jitters around them.

use crate::dpf::{best_path, dpf_run, BeamConfig};
use crate::error::{Error, Result};
use crate::lgssm::{filter, smooth};
use crate::linalg::Vec2;
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::tempo_model::{
    log_prior, path_system, BehaviorState, ExpandedNode, InitBelief, ScoreEvent, ThetaTempo, SIGMA2_ACC, SIGMA2_STRESS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Number of unconstrained coordinates: five scalars and 3 + 2 + 2
/// additive log-ratio coordinates for the transition rows.
pub const DIM: usize = 12;

/// Probabilities are clamped to this before taking log-ratios.
pub const PROB_FLOOR: f64 = 1e-8;

/// Smallest number of notes `fit` accepts.
pub const MIN_NOTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub beam_width: usize,
    pub restarts: usize,
    pub max_evals: usize,
    pub tol: f64,
    pub seed: u64,
    /// Standard deviation of the restart jitter in unconstrained coordinates.
    pub jitter: f64,
    /// Edge length of the initial simplex in unconstrained coordinates.
    pub initial_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            beam_width: 200,
            restarts: 5,
            max_evals: 2000,
            tol: 1e-6,
            seed: 0,
            jitter: 0.25,
            initial_step: 0.1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 || self.restarts == 0 || self.max_evals == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidInput(
                "beam width, restarts, max evaluations and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn log_clamped(v: f64, what: &str) -> f64 {
    if v < PROB_FLOOR {
        log::warn!("{what} = {v} is at the boundary; clamped to {PROB_FLOOR}");
        PROB_FLOOR.ln()
    } else {
        v.ln()
    }
}

fn alr(row: &[f64], what: &str, out: &mut Vec<f64>) {
    let clamped: Vec<f64> = row
        .iter()
        .map(|p| {
            if *p < PROB_FLOOR {
                log::warn!("{what} entry {p} is at the boundary; clamped to {PROB_FLOOR}");
                PROB_FLOOR
            } else {
                *p
            }
        })
        .collect();
    let last = clamped[clamped.len() - 1].ln();
    out.extend(clamped[..clamped.len() - 1].iter().map(|p| p.ln() - last));
}

fn alr_inverse(coords: &[f64]) -> Vec<f64> {
    let max = coords.iter().copied().fold(0.0f64, f64::max);
    let mut e: Vec<f64> = coords.iter().map(|c| (c - max).exp()).collect();
    e.push((-max).exp());
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Map θ to the 12 unconstrained coordinates: logs of the variances and of
/// `μ_tempo`, `−μ_acc`, `−μ_stress`, then additive log-ratios of each
/// transition row against its last entry.
pub fn to_unconstrained(theta: &ThetaTempo) -> [f64; DIM] {
    let mut v = Vec::with_capacity(DIM);
    v.push(log_clamped(theta.sigma2_eps, "sigma2_eps"));
    v.push(log_clamped(theta.mu_tempo, "mu_tempo"));
    v.push(log_clamped(-theta.mu_acc, "-mu_acc"));
    v.push(log_clamped(-theta.mu_stress, "-mu_stress"));
    v.push(log_clamped(theta.sigma2_tempo, "sigma2_tempo"));
    alr(&theta.row_const, "row_const", &mut v);
    alr(&theta.row_decel, "row_decel", &mut v);
    alr(&theta.row_accel, "row_accel", &mut v);
    v.try_into().expect("twelve coordinates")
}

/// Inverse of [`to_unconstrained`]; σ²_acc and σ²_stress stay at their fixed
/// values.
pub fn from_unconstrained(u: &[f64]) -> ThetaTempo {
    assert_eq!(u.len(), DIM, "expected {DIM} unconstrained coordinates");
    let r1 = alr_inverse(&u[5..8]);
    let r2 = alr_inverse(&u[8..10]);
    let r3 = alr_inverse(&u[10..12]);
    ThetaTempo {
        sigma2_eps: u[0].exp(),
        mu_tempo: u[1].exp(),
        mu_acc: -u[2].exp(),
        mu_stress: -u[3].exp(),
        sigma2_tempo: u[4].exp(),
        sigma2_acc: SIGMA2_ACC,
        sigma2_stress: SIGMA2_STRESS,
        row_const: [r1[0], r1[1], r1[2], r1[3]],
        row_decel: [r2[0], r2[1], r2[2]],
        row_accel: [r3[0], r3[1], r3[2]],
    }
}

pub fn mean_tempo(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

/// Best path and smoothed curve for one recording at a fixed θ.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub path: Vec<ExpandedNode>,
    pub behaviors: Vec<BehaviorState>,
    /// Smoothed observation means `c + Z x̂` (b.p.m.).
    pub smoothed: Vec<f64>,
    /// Smoothed hidden states `x̂`.
    pub states: Vec<Vec2>,
    pub loglik: f64,
    pub log_prior: f64,
    pub objective: f64,
}

/// Log-likelihood of the best path plus log-prior, without smoothing.
/// Returns `-∞` for θ outside the prior's support.
pub fn objective(theta: &ThetaTempo, y: &[f64], score: &[ScoreEvent], beam_width: usize) -> Result<f64> {
    let lp = log_prior(theta, mean_tempo(y));
    if !lp.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let (_, loglik) = best_path_loglik(theta, y, score, beam_width)?;
    Ok(loglik + lp)
}

fn best_path_loglik(
    theta: &ThetaTempo,
    y: &[f64],
    score: &[ScoreEvent],
    beam_width: usize,
) -> Result<(Vec<ExpandedNode>, f64)> {
    let init = InitBelief::from_observations(y);
    let particles = dpf_run(y, score, theta, &init, BeamConfig::greedy(beam_width))?;
    let best = best_path(&particles)?;
    let (dyns, meas) = path_system(&best.path, score, theta)?;
    let fr = filter(y, &dyns, &meas, &init.belief())?;
    Ok((best.path.clone(), fr.loglik))
}

/// Best path, smoothed curve and objective at θ.
pub fn infer(theta: &ThetaTempo, y: &[f64], score: &[ScoreEvent], beam_width: usize) -> Result<Inference> {
    theta.validate()?;
    let lp = log_prior(theta, mean_tempo(y));
    let init = InitBelief::from_observations(y);
    let particles = dpf_run(y, score, theta, &init, BeamConfig::greedy(beam_width))?;
    let best = best_path(&particles)?;
    let (dyns, meas) = path_system(&best.path, score, theta)?;
    let fr = filter(y, &dyns, &meas, &init.belief())?;
    let sm = smooth(&fr, &dyns, &meas)?;
    Ok(Inference {
        behaviors: best.path.iter().map(|n| n.behavior()).collect(),
        path: best.path.clone(),
        smoothed: sm.observations,
        states: sm.states,
        loglik: fr.loglik,
        log_prior: lp,
        objective: fr.loglik + lp,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub objective: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub restarts: Vec<RestartSummary>,
    pub best_restart: usize,
    pub total_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedPerformance {
    pub theta: ThetaTempo,
    pub inference: Inference,
    pub diagnostics: FitDiagnostics,
}

impl FittedPerformance {
    pub fn objective(&self) -> f64 {
        self.inference.objective
    }
}

/// Starting point of restart `r`: the prior means for `r = 0`, otherwise the
/// prior means plus Gaussian jitter drawn from a stream keyed by `r`.
fn restart_start(base: &[f64; DIM], cfg: &FitConfig, r: usize) -> [f64; DIM] {
    let mut x = *base;
    if r > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        for v in x.iter_mut() {
            *v += cfg.jitter * rng.sample::<f64, _>(StandardNormal);
        }
    }
    x
}

/// Fit θ to one recording.
pub fn fit(y: &[f64], score: &[ScoreEvent], cfg: &FitConfig) -> Result<FittedPerformance> {
    cfg.validate()?;
    if y.len() != score.len() {
        return Err(Error::LengthMismatch {
            what: "tempo sequence",
            got: y.len(),
            expected: score.len(),
        });
    }
    if y.len() < MIN_NOTES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_NOTES} notes to fit, got {}",
            y.len()
        )));
    }
    let base = to_unconstrained(&ThetaTempo::prior_mean(mean_tempo(y)));
    let nm = NelderMeadConfig {
        max_evals: cfg.max_evals,
        f_tol: cfg.tol,
        initial_step: cfg.initial_step,
    };

    let mut summaries = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for r in 0..cfg.restarts {
        let x0 = restart_start(&base, cfg, r);
        let cost = |u: &[f64]| match objective(&from_unconstrained(u), y, score, cfg.beam_width) {
            Ok(v) => -v,
            Err(e) => {
                log::debug!("objective failed: {e}");
                f64::INFINITY
            }
        };
        let m = nelder_mead(cost, &x0, &nm);
        let obj = -m.f;
        log::debug!("restart {r}: objective {obj} after {} evaluations", m.evals);
        summaries.push(RestartSummary {
            objective: obj,
            evals: m.evals,
            converged: m.converged,
        });
        if obj.is_finite() && best.as_ref().is_none_or(|(_, _, b)| obj > *b) {
            best = Some((r, m.x, obj));
        }
    }
    let (best_restart, x, _) = best.ok_or_else(|| Error::FitFailed("no restart reached a finite objective".into()))?;
    let theta = from_unconstrained(&x);
    let inference = infer(&theta, y, score, cfg.beam_width)?;
    Ok(FittedPerformance {
        theta,
        inference,
        diagnostics: FitDiagnostics {
            total_evals: summaries.iter().map(|s| s.evals).sum(),
            restarts: summaries,
            best_restart,
        },
    })
}
