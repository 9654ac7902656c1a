//! Independent reference computations for the integration tests.
//!
//! Nothing here calls the crate's filtering, dynamics or prior code: the
//! linear-Gaussian oracle stacks all noise terms into one Gaussian vector
//! and conditions it directly, the path oracle enumerates behavior sequences
//! and builds their dynamics from the behavior-pair table, and the density
//! oracles use `statrs` distributions.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rubato::tempo_model::{ScoreEvent, ThetaTempo};
use statrs::distribution::{Continuous, Dirichlet, Gamma};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One step of a linear-Gaussian system: `x ← d + T x + η`, `η ~ N(0, Q)`,
/// then `y = c + z·x + ε`, `ε ~ N(0, g)`.
#[derive(Debug, Clone)]
pub struct Step {
    pub d: [f64; 2],
    pub t: [[f64; 2]; 2],
    pub q: [[f64; 2]; 2],
    pub c: f64,
    pub z: [f64; 2],
    pub g: f64,
}

#[derive(Debug, Clone)]
pub struct System {
    pub m0: [f64; 2],
    pub p0: [[f64; 2]; 2],
    pub steps: Vec<Step>,
}

fn m2(a: [[f64; 2]; 2]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]])
}

/// The observations and states written as affine maps of the stacked noise
/// vector `w = (x_init, η_1..η_n, ε_1..ε_n)`.
struct Joint {
    mu_w: DVector<f64>,
    sigma_w: DMatrix<f64>,
    state_maps: Vec<(DMatrix<f64>, DVector<f64>)>,
    c: DMatrix<f64>,
    e: DVector<f64>,
}

impl Joint {
    fn new(sys: &System) -> Self {
        let n = sys.steps.len();
        let w = 2 + 2 * n + n;
        let mut mu_w = DVector::zeros(w);
        mu_w[0] = sys.m0[0];
        mu_w[1] = sys.m0[1];
        let mut sigma_w = DMatrix::zeros(w, w);
        sigma_w.view_mut((0, 0), (2, 2)).copy_from(&m2(sys.p0));
        for (i, s) in sys.steps.iter().enumerate() {
            sigma_w.view_mut((2 + 2 * i, 2 + 2 * i), (2, 2)).copy_from(&m2(s.q));
            sigma_w[(2 + 2 * n + i, 2 + 2 * n + i)] = s.g;
        }
        let mut a = DMatrix::zeros(2, w);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        let mut b = DVector::zeros(2);
        let mut c = DMatrix::zeros(n, w);
        let mut e = DVector::zeros(n);
        let mut state_maps = Vec::with_capacity(n);
        for (i, s) in sys.steps.iter().enumerate() {
            let t = m2(s.t);
            a = &t * &a;
            a[(0, 2 + 2 * i)] += 1.0;
            a[(1, 2 + 2 * i + 1)] += 1.0;
            b = &t * &b + DVector::from_column_slice(&s.d);
            let z = DMatrix::from_row_slice(1, 2, &s.z);
            let row = &z * &a;
            c.row_mut(i).copy_from(&row.row(0));
            c[(i, 2 + 2 * n + i)] += 1.0;
            e[i] = s.c + s.z[0] * b[0] + s.z[1] * b[1];
            state_maps.push((a.clone(), b.clone()));
        }
        Self {
            mu_w,
            sigma_w,
            state_maps,
            c,
            e,
        }
    }

    fn y_mean(&self) -> DVector<f64> {
        &self.c * &self.mu_w + &self.e
    }

    fn y_cov(&self) -> DMatrix<f64> {
        &self.c * &self.sigma_w * self.c.transpose()
    }
}

/// Exact log density of `y` under the system.
pub fn brute_loglik(sys: &System, y: &[f64]) -> f64 {
    let j = Joint::new(sys);
    let s = j.y_cov();
    let r = DVector::from_column_slice(y) - j.y_mean();
    let chol = s
        .clone()
        .cholesky()
        .expect("observation covariance is positive definite");
    let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = r.dot(&chol.solve(&r));
    -0.5 * (y.len() as f64 * LN_2PI + ln_det + quad)
}

/// Exact `E[x_i | y_1..y_n]` for every step.
pub fn brute_smoothed(sys: &System, y: &[f64]) -> Vec<[f64; 2]> {
    let j = Joint::new(sys);
    let s = j.y_cov();
    let r = DVector::from_column_slice(y) - j.y_mean();
    let gain = s.cholesky().expect("positive definite").solve(&r);
    let cross = &j.sigma_w * j.c.transpose() * gain;
    j.state_maps
        .iter()
        .map(|(a, b)| {
            let m = a * &j.mu_w + b + a * &cross;
            [m[0], m[1]]
        })
        .collect()
}

/// Behavior labels: 1 constant, 2 deceleration, 3 acceleration, 4 stress.
pub type Behavior = u8;

/// Transition probability of the next behavior given the current one and
/// how many notes the current behavior has lasted.
pub fn behavior_transition(theta: &ThetaTempo, cur: Behavior, run: usize, next: Behavior) -> f64 {
    let [p11, p12, p13, p14] = theta.row_const;
    let [p21, p22, p23] = theta.row_decel;
    let [p31, p32, p33] = theta.row_accel;
    match (cur, next) {
        (1, 1) => p11,
        (1, 2) => p12,
        (1, 3) => p13,
        (1, 4) => p14,
        // gradual changes last at least two notes
        (2, 2) if run == 1 => 1.0,
        (2, _) if run == 1 => 0.0,
        (3, 3) if run == 1 => 1.0,
        (3, _) if run == 1 => 0.0,
        (2, 1) => p21,
        (2, 2) => p22,
        (2, 3) => p23,
        (3, 1) => p31,
        (3, 2) => p32,
        (3, 3) => p33,
        (4, 1) => 1.0,
        _ => 0.0,
    }
}

/// Prior probability of a behavior sequence that starts in the constant
/// behavior.
pub fn sequence_prob(theta: &ThetaTempo, seq: &[Behavior]) -> f64 {
    if seq.first() != Some(&1) {
        return 0.0;
    }
    let mut p = 1.0;
    let mut run = 1;
    for w in seq.windows(2) {
        p *= behavior_transition(theta, w[0], run, w[1]);
        run = if w[0] == w[1] { run + 1 } else { 1 };
    }
    p
}

/// Every behavior sequence of length `n` with positive prior probability.
pub fn legal_sequences(theta: &ThetaTempo, n: usize) -> Vec<Vec<Behavior>> {
    let mut out = Vec::new();
    let total = 4usize.pow(n as u32);
    for code in 0..total {
        let mut seq = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            seq.push((c % 4) as u8 + 1);
            c /= 4;
        }
        seq.reverse();
        if sequence_prob(theta, &seq) > 0.0 {
            out.push(seq);
        }
    }
    out
}

/// Dynamics for moving into behavior `cur` from `prev` over a note of
/// length `l`.
pub fn pair_step(prev: Behavior, cur: Behavior, l: f64, th: &ThetaTempo) -> Step {
    let hold = [[1.0, 0.0], [0.0, 0.0]];
    let zero = [[0.0, 0.0], [0.0, 0.0]];
    let acc_q = [
        [th.sigma2_acc * l * l, th.sigma2_acc * l],
        [th.sigma2_acc * l, th.sigma2_acc],
    ];
    let (d, t, q) = match (cur, prev) {
        (1, 1) | (1, 4) => ([0.0, 0.0], hold, zero),
        (4, 1) => ([0.0, th.mu_stress], hold, [[0.0, 0.0], [0.0, th.sigma2_stress]]),
        (2, 2) | (3, 3) => ([0.0, 0.0], [[1.0, l], [0.0, 1.0]], zero),
        (2, 1) | (2, 3) => ([l * th.mu_acc, th.mu_acc], hold, acc_q),
        (3, 1) | (3, 2) => ([-l * th.mu_acc, -th.mu_acc], hold, acc_q),
        (1, 2) | (1, 3) => ([th.mu_tempo, 0.0], zero, [[th.sigma2_tempo, 0.0], [0.0, 0.0]]),
        other => panic!("no dynamics for behavior pair {other:?}"),
    };
    let z = if cur == 4 { [1.0, 1.0] } else { [1.0, 0.0] };
    Step {
        d,
        t,
        q,
        c: 0.0,
        z,
        g: th.sigma2_eps,
    }
}

/// The linear system of a behavior sequence; the first note is entered
/// from the constant behavior.
pub fn sequence_system(seq: &[Behavior], score: &[ScoreEvent], th: &ThetaTempo, mu1: f64, sigma2_1: f64) -> System {
    let mut prev = 1;
    let steps = seq
        .iter()
        .zip(score)
        .map(|(&b, ev)| {
            let s = pair_step(prev, b, ev.l, th);
            prev = b;
            s
        })
        .collect();
    System {
        m0: [mu1, 0.0],
        p0: [[sigma2_1, 0.0], [0.0, 0.0]],
        steps,
    }
}

/// Normalized posterior weights of every legal sequence, with their
/// log-likelihoods.
pub fn enumerate_posterior(
    th: &ThetaTempo,
    y: &[f64],
    score: &[ScoreEvent],
    mu1: f64,
    sigma2_1: f64,
) -> Vec<(Vec<Behavior>, f64, f64)> {
    let seqs = legal_sequences(th, y.len());
    let scored: Vec<(Vec<Behavior>, f64, f64)> = seqs
        .into_iter()
        .map(|s| {
            let ll = brute_loglik(&sequence_system(&s, score, th, mu1, sigma2_1), y);
            let lw = sequence_prob(th, &s).ln() + ll;
            (s, lw, ll)
        })
        .collect();
    let max = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = scored.iter().map(|s| (s.1 - max).exp()).sum();
    scored
        .into_iter()
        .map(|(s, lw, ll)| (s, (lw - max).exp() / total, ll))
        .collect()
}

/// Gamma log density in shape/scale form.
pub fn gamma_ln_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    Gamma::new(shape, 1.0 / scale).unwrap().ln_pdf(x)
}

pub fn dirichlet_ln_pdf(p: &[f64], alpha: &[f64]) -> f64 {
    Dirichlet::new(alpha.to_vec())
        .unwrap()
        .ln_pdf(&DVector::from_column_slice(p))
}

/// Log prior written out from the prior table.
pub fn reference_log_prior(th: &ThetaTempo, mean_tempo: f64) -> f64 {
    gamma_ln_pdf(th.sigma2_eps, 40.0, 10.0)
        + gamma_ln_pdf(th.mu_tempo, mean_tempo * mean_tempo / 100.0, 100.0 / mean_tempo)
        + gamma_ln_pdf(-th.mu_acc, 15.0, 2.0 / 3.0)
        + gamma_ln_pdf(-th.mu_stress, 20.0, 2.0)
        + gamma_ln_pdf(th.sigma2_tempo, 40.0, 10.0)
        + dirichlet_ln_pdf(&th.row_const, &[85.0, 5.0, 2.0, 8.0])
        + dirichlet_ln_pdf(&th.row_decel, &[4.0, 10.0, 1.0])
        + dirichlet_ln_pdf(&th.row_accel, &[5.0, 3.0, 7.0])
}

/// Quadratic form of a probability-vector difference in the Dirichlet
/// metric, from the closed form `α₀(α₀+1) Σ Δᵢ²/αᵢ`.
pub fn dirichlet_distance(p: &[f64], q: &[f64], alpha: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    a0 * (a0 + 1.0)
        * p.iter()
            .zip(q)
            .zip(alpha)
            .map(|((a, b), w)| (a - b).powi(2) / w)
            .sum::<f64>()
}

/// Published parameter rows: σ²_ε, μ_tempo, μ_acc, μ_stress, σ²_tempo,
/// p11, p12, p22, p31, p13, p21, p32.
pub const RICHTER_1976: [f64; 12] = [
    426.70, 136.33, -11.84, -34.82, 439.38, 0.85, 0.05, 0.74, 0.44, 0.02, 0.25, 0.17,
];
pub const HATTO_1993: [f64; 12] = [
    405.57, 130.36, -13.57, -27.93, 408.99, 0.94, 0.03, 0.82, 0.36, 0.01, 0.16, 0.19,
];
pub const CORTOT_1951: [f64; 12] = [
    403.71, 182.84, -21.43, -45.67, 460.82, 0.92, 0.02, 0.71, 0.34, 0.03, 0.23, 0.09,
];
pub const WASOWSKI_1980: [f64; 12] = [
    414.99, 132.00, -10.00, -40.00, 425.00, 0.85, 0.05, 0.67, 0.34, 0.02, 0.26, 0.20,
];

pub fn theta(row: [f64; 12]) -> ThetaTempo {
    let [s2e, mt, ma, ms, s2t, p11, p12, p22, p31, p13, p21, p32] = row;
    ThetaTempo::from_table_row(s2e, mt, ma, ms, s2t, p11, p12, p22, p31, p13, p21, p32)
}

/// A mazurka-like rhythm in 3/4: dotted eighth, sixteenth, quarter, quarter.
pub fn mazurka_score(n: usize) -> Vec<ScoreEvent> {
    let pattern = [(0.25, "1"), (1.0 / 12.0, "7/4"), (1.0 / 3.0, "2"), (1.0 / 3.0, "3")];
    (0..n)
        .map(|i| ScoreEvent {
            index: i + 1,
            measure: (i / 4 + 1) as i64,
            beat: pattern[i % 4].1.to_string(),
            l: pattern[i % 4].0,
        })
        .collect()
}

fn random_psd<R: rand::Rng>(rng: &mut R, scale: f64, singular: bool) -> [[f64; 2]; 2] {
    let a: f64 = rng.random_range(-1.0..1.0);
    let b: f64 = rng.random_range(-1.0..1.0);
    if singular {
        // rank one
        return [[scale * a * a, scale * a * b], [scale * a * b, scale * b * b]];
    }
    let c: f64 = rng.random_range(-1.0..1.0);
    let d: f64 = rng.random_range(-1.0..1.0);
    // L Lᵀ with L lower triangular, plus a small ridge
    let l = [[a.abs() + 0.1, 0.0], [c, d.abs() + 0.1]];
    [
        [scale * l[0][0] * l[0][0], scale * l[0][0] * l[1][0]],
        [
            scale * l[0][0] * l[1][0],
            scale * (l[1][0] * l[1][0] + l[1][1] * l[1][1]),
        ],
    ]
}

/// A random two-state system with `n` steps. Roughly a third of the
/// covariances are rank one and a third are zero, as in the tempo model.
pub fn random_system<R: rand::Rng>(rng: &mut R, n: usize) -> System {
    let cov = |rng: &mut R| {
        let kind = rng.random_range(0..3);
        let scale = rng.random_range(0.1..5.0);
        match kind {
            0 => [[0.0; 2]; 2],
            1 => random_psd(rng, scale, true),
            _ => random_psd(rng, scale, false),
        }
    };
    let p0 = cov(rng);
    let m0 = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
    let steps = (0..n)
        .map(|_| Step {
            d: [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            t: [
                [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
                [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
            ],
            q: cov(rng),
            c: rng.random_range(-1.0..1.0),
            z: [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            g: rng.random_range(0.05..3.0),
        })
        .collect();
    System { m0, p0, steps }
}

/// Draw observations from the system.
pub fn sample_observations<R: rand::Rng>(rng: &mut R, sys: &System) -> Vec<f64> {
    use rand_distr::StandardNormal;
    let mut normal = || rng.sample::<f64, _>(StandardNormal);
    let chol = |m: [[f64; 2]; 2]| {
        let a = m[0][0].max(0.0).sqrt();
        let b = if a > 0.0 { m[0][1] / a } else { 0.0 };
        let c = (m[1][1] - b * b).max(0.0).sqrt();
        [[a, 0.0], [b, c]]
    };
    let draw = |m: [[f64; 2]; 2], n1: f64, n2: f64| {
        let l = chol(m);
        [l[0][0] * n1, l[1][0] * n1 + l[1][1] * n2]
    };
    let e = draw(sys.p0, normal(), normal());
    let mut x = [sys.m0[0] + e[0], sys.m0[1] + e[1]];
    let mut y = Vec::with_capacity(sys.steps.len());
    for s in &sys.steps {
        let eta = draw(s.q, normal(), normal());
        x = [
            s.d[0] + s.t[0][0] * x[0] + s.t[0][1] * x[1] + eta[0],
            s.d[1] + s.t[1][0] * x[0] + s.t[1][1] * x[1] + eta[1],
        ];
        y.push(s.c + s.z[0] * x[0] + s.z[1] * x[1] + s.g.sqrt() * normal());
    }
    y
}

/// The system in the crate's types.
pub fn to_crate(
    sys: &System,
) -> (
    rubato::lgssm::GaussianBelief,
    Vec<rubato::lgssm::StepDynamics>,
    Vec<rubato::lgssm::StepMeasurement>,
) {
    use rubato::lgssm::{GaussianBelief, StepDynamics, StepMeasurement};
    use rubato::linalg::Mat2;
    let init = GaussianBelief::new(sys.m0, Mat2(sys.p0));
    let dyns = sys
        .steps
        .iter()
        .map(|s| StepDynamics {
            d: s.d,
            t: Mat2(s.t),
            q: Mat2(s.q),
        })
        .collect();
    let meas = sys
        .steps
        .iter()
        .map(|s| StepMeasurement { c: s.c, z: s.z, g: s.g })
        .collect();
    (init, dyns, meas)
}

/// Parameters at a point `u` of the unit cube. Each scalar is affine in its
/// coordinate and each transition row moves along a segment between two
/// interior simplex points, so once a corpus spans the cube the normalized
/// distance is `Σ|Δu|` over the scalars plus `Σ Δu²` over the rows.
pub fn cube_theta(u: &[f64; 8]) -> ThetaTempo {
    fn seg<const K: usize>(a: [f64; K], b: [f64; K], s: f64) -> [f64; K] {
        std::array::from_fn(|i| a[i] + s * (b[i] - a[i]))
    }
    ThetaTempo {
        sigma2_eps: 300.0 + 200.0 * u[0],
        mu_tempo: 100.0 + 80.0 * u[1],
        mu_acc: -30.0 + 25.0 * u[2],
        mu_stress: -60.0 + 50.0 * u[3],
        sigma2_tempo: 300.0 + 200.0 * u[4],
        sigma2_acc: 1.0,
        sigma2_stress: 1.0,
        row_const: seg([0.9, 0.03, 0.02, 0.05], [0.6, 0.15, 0.1, 0.15], u[5]),
        row_decel: seg([0.2, 0.75, 0.05], [0.5, 0.3, 0.2], u[6]),
        row_accel: seg([0.3, 0.1, 0.6], [0.2, 0.5, 0.3], u[7]),
    }
}

/// Normalized distance between two cube points, matching [`cube_theta`].
pub fn cube_distance(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    (0..5).map(|k| (a[k] - b[k]).abs()).sum::<f64>() + (5..8).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>()
}

/// Synthetic corpus of planted clusters plus isolates.
pub struct Corpus {
    pub labels: Vec<String>,
    pub thetas: Vec<ThetaTempo>,
    /// Planted cluster of each recording; `None` for isolates.
    pub truth: Vec<Option<usize>>,
}

/// Cluster centres and isolates are vertices of the cube. Centres are at
/// cube distance at least `3` from every other point; each isolate has at
/// most two other points closer than `3`, so its third nearest neighbour is
/// at least `3` away. Cluster members are jittered by at most `0.005` per
/// coordinate. The normalized distance is never below the cube distance, as
/// no component spans more than the unit interval.
pub fn synthetic_corpus(seed: u64, sizes: &[usize], isolates: usize) -> Corpus {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let vertices: Vec<[f64; 8]> = (0..256usize)
        .map(|code| std::array::from_fn(|k| ((code >> k) & 1) as f64))
        .collect();
    let points = (0..1000)
        .find_map(|_| {
            let mut order = vertices.clone();
            order.shuffle(&mut rng);
            let mut centres: Vec<[f64; 8]> = Vec::new();
            for v in &order {
                if centres.len() < sizes.len() && centres.iter().all(|c| cube_distance(c, v) >= 3.0) {
                    centres.push(*v);
                }
            }
            let mut iso: Vec<([f64; 8], usize)> = Vec::new();
            for v in &order {
                if iso.len() == isolates {
                    break;
                }
                if centres.iter().any(|c| cube_distance(c, v) < 3.0) {
                    continue;
                }
                let close: Vec<usize> = (0..iso.len()).filter(|&i| cube_distance(&iso[i].0, v) < 3.0).collect();
                if close.len() <= 2 && close.iter().all(|&i| iso[i].1 < 2) {
                    close.iter().for_each(|&i| iso[i].1 += 1);
                    iso.push((*v, close.len()));
                }
            }
            (centres.len() == sizes.len() && iso.len() == isolates).then(|| {
                centres
                    .into_iter()
                    .chain(iso.into_iter().map(|(v, _)| v))
                    .collect::<Vec<_>>()
            })
        })
        .expect("no vertex layout found");
    let mut units = Vec::new();
    let mut truth = Vec::new();
    for (c, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let centre = points[c];
            units.push(std::array::from_fn(|k| {
                (centre[k] + rng.random_range(-0.005..0.005)).clamp(0.0, 1.0)
            }));
            truth.push(Some(c));
        }
    }
    for p in &points[sizes.len()..] {
        units.push(*p);
        truth.push(None);
    }
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.shuffle(&mut rng);
    Corpus {
        labels: order.iter().map(|i| format!("rec{i:02}")).collect(),
        thetas: order.iter().map(|&i| cube_theta(&units[i])).collect(),
        truth: order.iter().map(|&i| truth[i]).collect(),
    }
}

/// Whether two labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}
