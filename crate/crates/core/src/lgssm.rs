//! Time-varying linear-Gaussian state-space model with a 2-dimensional state
//! and scalar observations.
//!
//! ```text
//! x_i = d_i + T_i x_{i-1} + η_i,   η_i ~ N(0, Q_i)
//! y_i = c_i + Z_i x_i + ε_i,       ε_i ~ N(0, G_i)
//! ```
//!
//! Step `i` first advances the belief with `dyn_seq[i]` and then conditions on
//! `y[i]`. The initial belief is therefore consumed by the first advance; a
//! prior `x₁ ~ N(m, P)` is expressed by passing that belief together with
//! identity dynamics (or any dynamics that map it where it should go).

use crate::error::{Error, Result};
use crate::linalg::{add2, dot2, sub2, Mat2, Vec2};
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative eigenvalue cutoff used when pseudo-inverting predicted covariances.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Transition `x ← d + T x + η`, `η ~ N(0, Q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDynamics {
    pub d: Vec2,
    pub t: Mat2,
    pub q: Mat2,
}

/// Observation `y = c + Z x + ε`, `ε ~ N(0, G)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMeasurement {
    pub c: f64,
    pub z: Vec2,
    pub g: f64,
}

/// Mean and covariance of the hidden continuous state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: Vec2,
    pub cov: Mat2,
}

impl GaussianBelief {
    pub fn new(mean: Vec2, cov: Mat2) -> Self {
        Self { mean, cov }
    }

    fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && self.cov.is_finite()
    }
}

/// One filtering step's outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub predicted: GaussianBelief,
    pub updated: GaussianBelief,
    pub predicted_obs: f64,
    pub forecast_var: f64,
    pub innovation: f64,
    pub ll_inc: f64,
}

/// Advance `prior` through `dynamics`, then condition on `y`.
///
/// `ll_inc` is the exact Gaussian log-density of `y` under the one-step
/// forecast, `−½(log 2π + log F + v²/F)`.
pub fn filter_step(
    prior: &GaussianBelief,
    dynamics: &StepDynamics,
    measurement: &StepMeasurement,
    y: f64,
) -> Result<StepOutput> {
    let finite = prior.is_finite()
        && dynamics.d.iter().all(|v| v.is_finite())
        && dynamics.t.is_finite()
        && dynamics.q.is_finite()
        && measurement.c.is_finite()
        && measurement.z.iter().all(|v| v.is_finite())
        && measurement.g.is_finite()
        && y.is_finite();
    if !finite {
        return Err(Error::NonFiniteInput { step: None });
    }

    let pred_mean = add2(dynamics.d, dynamics.t.mul_vec(prior.mean));
    let pred_cov = (dynamics.q + dynamics.t.sandwich(&prior.cov)).symmetrize();

    let z = measurement.z;
    let pz = pred_cov.mul_vec(z);
    let f = measurement.g + dot2(z, pz);
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::DegenerateForecast { step: None });
    }
    let y_pred = measurement.c + dot2(z, pred_mean);
    let v = y - y_pred;

    let gain = [pz[0] / f, pz[1] / f];
    let upd_mean = [pred_mean[0] + gain[0] * v, pred_mean[1] + gain[1] * v];
    // P - K F Kᵀ, with K F = P Zᵀ
    let upd_cov = Mat2::new(
        pred_cov.0[0][0] - gain[0] * pz[0],
        pred_cov.0[0][1] - gain[0] * pz[1],
        pred_cov.0[1][0] - gain[1] * pz[0],
        pred_cov.0[1][1] - gain[1] * pz[1],
    )
    .symmetrize();

    let ll_inc = -0.5 * (LN_2PI + f.ln() + v * v / f);

    Ok(StepOutput {
        predicted: GaussianBelief::new(pred_mean, pred_cov),
        updated: GaussianBelief::new(upd_mean, upd_cov),
        predicted_obs: y_pred,
        forecast_var: f,
        innovation: v,
        ll_inc,
    })
}

/// Full forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterResult {
    pub predicted: Vec<GaussianBelief>,
    pub updated: Vec<GaussianBelief>,
    pub predicted_obs: Vec<f64>,
    pub forecast_var: Vec<f64>,
    pub innovations: Vec<f64>,
    pub loglik: f64,
}

impl FilterResult {
    pub fn len(&self) -> usize {
        self.updated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.updated.is_empty()
    }
}

pub fn filter(
    y: &[f64],
    dyn_seq: &[StepDynamics],
    meas_seq: &[StepMeasurement],
    init: &GaussianBelief,
) -> Result<FilterResult> {
    let n = y.len();
    check_len("dynamics sequence", dyn_seq.len(), n)?;
    check_len("measurement sequence", meas_seq.len(), n)?;

    let mut out = FilterResult {
        predicted: Vec::with_capacity(n),
        updated: Vec::with_capacity(n),
        predicted_obs: Vec::with_capacity(n),
        forecast_var: Vec::with_capacity(n),
        innovations: Vec::with_capacity(n),
        loglik: 0.0,
    };
    let mut belief = *init;
    for i in 0..n {
        let step = filter_step(&belief, &dyn_seq[i], &meas_seq[i], y[i]).map_err(|e| e.at(i))?;
        out.predicted.push(step.predicted);
        out.updated.push(step.updated);
        out.predicted_obs.push(step.predicted_obs);
        out.forecast_var.push(step.forecast_var);
        out.innovations.push(step.innovation);
        out.loglik += step.ll_inc;
        belief = step.updated;
    }
    Ok(out)
}

/// Smoothed states and observations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Smoothed {
    pub states: Vec<Vec2>,
    pub observations: Vec<f64>,
}

/// Rauch–Tung–Striebel fixed-interval smoother (means only).
///
/// The backward gain uses the pseudo-inverse of the predicted covariance,
/// which is routinely singular when the process noise is rank-deficient.
pub fn smooth(fr: &FilterResult, dyn_seq: &[StepDynamics], meas_seq: &[StepMeasurement]) -> Result<Smoothed> {
    let n = fr.len();
    check_len("dynamics sequence", dyn_seq.len(), n)?;
    check_len("measurement sequence", meas_seq.len(), n)?;
    check_len("predicted beliefs", fr.predicted.len(), n)?;
    if n == 0 {
        return Ok(Smoothed::default());
    }

    let mut states = vec![[0.0; 2]; n];
    states[n - 1] = fr.updated[n - 1].mean;
    for i in (1..n).rev() {
        let filt = &fr.updated[i - 1];
        let pred = &fr.predicted[i];
        let gain = filt.cov * dyn_seq[i].t.transpose() * pred.cov.pinv_symmetric(PINV_CUTOFF);
        let resid = sub2(states[i], pred.mean);
        states[i - 1] = add2(filt.mean, gain.mul_vec(resid));
    }
    let observations = states.iter().zip(meas_seq).map(|(x, m)| m.c + dot2(m.z, *x)).collect();
    Ok(Smoothed { states, observations })
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::LengthMismatch { what, got, expected });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tempo_only() -> (StepDynamics, StepMeasurement) {
        (
            StepDynamics {
                d: [0.0, 0.0],
                t: Mat2::diag(1.0, 0.0),
                q: Mat2::ZERO,
            },
            StepMeasurement {
                c: 0.0,
                z: [1.0, 0.0],
                g: 1.0,
            },
        )
    }

    #[test]
    fn zero_innovation_step() {
        let (dy, me) = tempo_only();
        let prior = GaussianBelief::new([100.0, 0.0], Mat2::ZERO);
        let out = filter_step(&prior, &dy, &me, 100.0).unwrap();
        assert_eq!(out.innovation, 0.0);
        assert!((out.ll_inc - (-0.918_938_533_204_672_7)).abs() < 1e-12);
        assert_eq!(out.updated.mean, [100.0, 0.0]);
    }

    #[test]
    fn step_matches_normal_density() {
        let dy = StepDynamics {
            d: [0.0, 0.0],
            t: Mat2::diag(1.0, 0.0),
            q: Mat2::diag(1.0, 0.0),
        };
        let (_, me) = tempo_only();
        let prior = GaussianBelief::new([0.0, 0.0], Mat2::diag(1.0, 0.0));
        let out = filter_step(&prior, &dy, &me, 1.0).unwrap();
        assert!((out.forecast_var - 3.0).abs() < 1e-15);
        // log N(1; 0, 3) evaluated directly
        let direct = (-(1.0f64 * 1.0) / (2.0 * 3.0)).exp() / (2.0 * std::f64::consts::PI * 3.0).sqrt();
        assert!((out.ll_inc - direct.ln()).abs() < 1e-12);
        assert!((out.ll_inc - (-1.634_92)).abs() < 1e-5);
    }

    #[test]
    fn zero_observation_variance_is_degenerate() {
        let (dy, mut me) = tempo_only();
        me.g = 0.0;
        let prior = GaussianBelief::new([100.0, 0.0], Mat2::ZERO);
        let err = filter_step(&prior, &dy, &me, 100.0).unwrap_err();
        assert!(err.to_string().starts_with("degenerate forecast variance"));
    }

    #[test]
    fn non_finite_rejected_with_step_index() {
        let (dy, me) = tempo_only();
        let prior = GaussianBelief::new([100.0, 0.0], Mat2::ZERO);
        let y = [100.0, f64::NAN];
        let err = filter(&y, &[dy, dy], &[me, me], &prior).unwrap_err();
        assert_eq!(err.to_string(), "non-finite filter input at step 1");
    }

    #[test]
    fn single_observation_loglik() {
        let (dy, me) = tempo_only();
        let prior = GaussianBelief::new([100.0, 0.0], Mat2::ZERO);
        let fr = filter(&[100.0], &[dy], &[me], &prior).unwrap();
        assert!((fr.loglik + 0.918_938_533_204_672_7).abs() < 1e-12);
        let sm = smooth(&fr, &[dy], &[me]).unwrap();
        assert_eq!(sm.states[0], fr.updated[0].mean);
    }

    #[test]
    fn empty_sequence() {
        let prior = GaussianBelief::new([0.0, 0.0], Mat2::ZERO);
        let fr = filter(&[], &[], &[], &prior).unwrap();
        assert_eq!(fr.loglik, 0.0);
        assert!(fr.is_empty());
        assert!(smooth(&fr, &[], &[]).unwrap().states.is_empty());
    }

    #[test]
    fn constant_chain_smooths_flat() {
        let (dy, me) = tempo_only();
        let prior = GaussianBelief::new([120.0, 0.0], Mat2::diag(400.0, 0.0));
        let y = [118.0, 125.0, 121.0, 117.0, 130.0];
        let fr = filter(&y, &[dy; 5], &[me; 5], &prior).unwrap();
        let sm = smooth(&fr, &[dy; 5], &[me; 5]).unwrap();
        let last = fr.updated[4].mean[0];
        for x in &sm.states {
            assert!((x[0] - last).abs() < 1e-9, "{x:?} vs {last}");
        }
    }

    #[test]
    fn length_mismatch() {
        let (dy, me) = tempo_only();
        let prior = GaussianBelief::new([0.0, 0.0], Mat2::ZERO);
        assert!(matches!(
            filter(&[1.0, 2.0], &[dy], &[me, me], &prior),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
