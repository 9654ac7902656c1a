//! Closed-form 2×2 algebra used by the filter inner loop.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// A 2-vector `(tempo, acceleration-or-stress)`.
pub type Vec2 = [f64; 2];

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub const fn diag(a: f64, d: f64) -> Self {
        Mat2([[a, 0.0], [0.0, d]])
    }

    pub fn transpose(&self) -> Self {
        let m = self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn scale(&self, s: f64) -> Self {
        let m = self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        let m = self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// `self · other · selfᵀ`
    pub fn sandwich(&self, other: &Mat2) -> Mat2 {
        *self * *other * self.transpose()
    }

    pub fn symmetrize(&self) -> Self {
        let m = self.0;
        let off = 0.5 * (m[0][1] + m[1][0]);
        Mat2([[m[0][0], off], [off, m[1][1]]])
    }

    pub fn det(&self) -> f64 {
        let m = self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    /// Eigenvalues (ascending) and unit eigenvectors of a symmetric matrix.
    /// Eigenvector `k` is column `k` of the returned matrix.
    pub fn symmetric_eigen(&self) -> ([f64; 2], Mat2) {
        let [[a, b], [_, d]] = self.symmetrize().0;
        let half_tr = 0.5 * (a + d);
        let half_diff = 0.5 * (a - d);
        let r = half_diff.hypot(b);
        let lo = half_tr - r;
        let hi = half_tr + r;
        if b == 0.0 {
            // already diagonal; keep axis order matched to the sorted eigenvalues
            return if a <= d {
                ([a, d], Mat2::IDENTITY)
            } else {
                ([d, a], Mat2::new(0.0, 1.0, 1.0, 0.0))
            };
        }
        // eigenvector for `hi`: (b, hi - a), orthogonal for `lo`
        let (vx, vy) = (b, hi - a);
        let n = vx.hypot(vy);
        let (ux, uy) = (vx / n, vy / n);
        ([lo, hi], Mat2::new(-uy, ux, ux, uy))
    }

    /// Moore–Penrose pseudo-inverse of a symmetric PSD matrix. Eigenvalues at
    /// or below `rel_cutoff · λ_max` are treated as zero.
    pub fn pinv_symmetric(&self, rel_cutoff: f64) -> Mat2 {
        let (vals, vecs) = self.symmetric_eigen();
        let lmax = vals[1].abs().max(vals[0].abs());
        if lmax == 0.0 {
            return Mat2::ZERO;
        }
        let mut out = Mat2::ZERO;
        for k in 0..2 {
            if vals[k] > rel_cutoff * lmax {
                let u = [vecs.0[0][k], vecs.0[1][k]];
                let inv = 1.0 / vals[k];
                for i in 0..2 {
                    for j in 0..2 {
                        out.0[i][j] += inv * u[i] * u[j];
                    }
                }
            }
        }
        out
    }

    /// A factor `L` with `L·Lᵀ = self` for symmetric PSD input. Negative
    /// round-off eigenvalues are clipped to zero.
    pub fn psd_sqrt(&self) -> Mat2 {
        let (vals, vecs) = self.symmetric_eigen();
        let s = [vals[0].max(0.0).sqrt(), vals[1].max(0.0).sqrt()];
        let v = vecs.0;
        Mat2([[v[0][0] * s[0], v[0][1] * s[1]], [v[1][0] * s[0], v[1][1] * s[1]]])
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + rhs.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.0, rhs.0);
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

pub(crate) fn add2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub(crate) fn sub2(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
