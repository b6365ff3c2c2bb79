//! Rotations in `SO(d)`, ball domains, Haar sampling and quasi-random
//! sampling of balls.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{param, Result};

/// Largest ambient dimension supported by the in-place map evaluators.
pub const MAX_DIM: usize = 8;

/// An element of `SO(d)`. Planar rotations are kept as an angle in
/// `[0, 2*pi)` so long products do not drift off the group.
#[derive(Debug, Clone, PartialEq)]
pub enum Rotation {
    Planar(f64),
    /// Row-major `dim x dim` orthogonal matrix with determinant +1.
    Matrix { dim: usize, entries: Vec<f64> },
}

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        if dim == 2 {
            return Rotation::Planar(0.0);
        }
        let mut entries = vec![0.0; dim * dim];
        for k in 0..dim {
            entries[k * dim + k] = 1.0;
        }
        Rotation::Matrix { dim, entries }
    }

    pub fn from_angle(theta: f64) -> Self {
        Rotation::Planar(theta.rem_euclid(TAU))
    }

    /// Accepts any orthogonal matrix with determinant +1 (residual <= 1e-10).
    pub fn from_matrix(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) || entries.len() != dim * dim {
            return param(format!("rotation must be a {dim}x{dim} matrix with 2 <= dim <= {MAX_DIM}"));
        }
        let r = Rotation::Matrix { dim, entries };
        let residual = r.orthogonality_residual();
        if residual > 1e-10 {
            return param(format!("matrix is not orthogonal (residual {residual:e})"));
        }
        if let Rotation::Matrix { entries, .. } = &r {
            if determinant(dim, entries) < 0.0 {
                return param("matrix has determinant -1; a rotation is required");
            }
            if dim == 2 {
                return Ok(Rotation::from_angle(entries[2].atan2(entries[0])));
            }
        }
        Ok(r)
    }

    pub fn dim(&self) -> usize {
        match self {
            Rotation::Planar(_) => 2,
            Rotation::Matrix { dim, .. } => *dim,
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match self {
            Rotation::Planar(a) => Some(*a),
            Rotation::Matrix { .. } => None,
        }
    }

    pub fn matrix(&self) -> Vec<f64> {
        match self {
            Rotation::Planar(a) => {
                let (s, c) = a.sin_cos();
                vec![c, -s, s, c]
            }
            Rotation::Matrix { entries, .. } => entries.clone(),
        }
    }

    /// `self * other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        match (self, other) {
            (Rotation::Planar(a), Rotation::Planar(b)) => Rotation::from_angle(a + b),
            _ => {
                let d = self.dim();
                assert_eq!(d, other.dim(), "rotation dimensions differ");
                let a = self.matrix();
                let b = other.matrix();
                let mut c = vec![0.0; d * d];
                for i in 0..d {
                    for k in 0..d {
                        let aik = a[i * d + k];
                        for j in 0..d {
                            c[i * d + j] += aik * b[k * d + j];
                        }
                    }
                }
                if d == 2 {
                    Rotation::from_angle(c[2].atan2(c[0]))
                } else {
                    Rotation::Matrix { dim: d, entries: c }
                }
            }
        }
    }

    pub fn inverse(&self) -> Rotation {
        match self {
            Rotation::Planar(a) => Rotation::from_angle(-a),
            Rotation::Matrix { dim, entries } => {
                let d = *dim;
                let mut t = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        t[j * d + i] = entries[i * d + j];
                    }
                }
                Rotation::Matrix { dim: d, entries: t }
            }
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Rotation::Planar(a) => {
                let (s, c) = a.sin_cos();
                let (x0, x1) = (x[0], x[1]);
                out[0] = c * x0 - s * x1;
                out[1] = s * x0 + c * x1;
            }
            Rotation::Matrix { dim, entries } => {
                for i in 0..*dim {
                    out[i] = (0..*dim).map(|j| entries[i * dim + j] * x[j]).sum();
                }
            }
        }
    }

    /// `max |R^T R - I|` entrywise.
    pub fn orthogonality_residual(&self) -> f64 {
        match self {
            Rotation::Planar(_) => 0.0,
            Rotation::Matrix { dim, entries } => {
                let d = *dim;
                let mut worst = 0.0f64;
                for i in 0..d {
                    for j in 0..d {
                        let dot: f64 = (0..d).map(|k| entries[k * d + i] * entries[k * d + j]).sum();
                        let target = if i == j { 1.0 } else { 0.0 };
                        worst = worst.max((dot - target).abs());
                    }
                }
                worst
            }
        }
    }

    /// Gram-Schmidt on the columns; keeps the orientation.
    pub fn reorthonormalize(&mut self) {
        if let Rotation::Matrix { dim, entries } = self {
            gram_schmidt_columns(*dim, entries);
        }
    }

    pub fn frobenius_distance(&self, other: &Rotation) -> f64 {
        let a = self.matrix();
        let b = other.matrix();
        a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }
}

fn gram_schmidt_columns(d: usize, m: &mut [f64]) {
    for j in 0..d {
        for p in 0..j {
            let dot: f64 = (0..d).map(|i| m[i * d + j] * m[i * d + p]).sum();
            for i in 0..d {
                m[i * d + j] -= dot * m[i * d + p];
            }
        }
        let norm: f64 = (0..d).map(|i| m[i * d + j].powi(2)).sum::<f64>().sqrt();
        for i in 0..d {
            m[i * d + j] /= norm;
        }
    }
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(d: usize, m: &[f64]) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for c in 0..d {
        let p = (c..d)
            .max_by(|&x, &y| a[x * d + c].abs().total_cmp(&a[y * d + c].abs()))
            .unwrap();
        if a[p * d + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for j in 0..d {
                a.swap(p * d + j, c * d + j);
            }
            det = -det;
        }
        let piv = a[c * d + c];
        det *= piv;
        for r in c + 1..d {
            let f = a[r * d + c] / piv;
            for j in c..d {
                a[r * d + j] -= f * a[c * d + j];
            }
        }
    }
    det
}

/// A Haar-distributed rotation: uniform angle for `d = 2`; otherwise the
/// orthonormalized columns of a Gaussian matrix (positive `R` diagonal),
/// with the first column negated when the determinant is -1.
pub fn haar_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Rotation {
    if dim == 2 {
        return Rotation::from_angle(rng.random::<f64>() * TAU);
    }
    let mut m: Vec<f64> = (0..dim * dim).map(|_| rng.sample(StandardNormal)).collect();
    gram_schmidt_columns(dim, &mut m);
    if determinant(dim, &m) < 0.0 {
        for i in 0..dim {
            m[i * dim] = -m[i * dim];
        }
    }
    Rotation::Matrix { dim, entries: m }
}

/// An open Euclidean ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist(x, &self.center) < self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// Uniform point in the ball.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rad = self.radius * rng.random::<f64>().powf(1.0 / d as f64);
        for (k, x) in v.iter_mut().enumerate() {
            *x = self.center[k] + *x / norm * rad;
        }
        v
    }

    /// Deterministic quasi-uniform points (Halton in the enclosing cube,
    /// points outside the ball skipped).
    pub fn halton_points(&self, count: usize) -> Vec<Vec<f64>> {
        const PRIMES: [u64; MAX_DIM] = [2, 3, 5, 7, 11, 13, 17, 19];
        let d = self.dim();
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return vec![self.center.clone(); count.min(1)];
        }
        let mut out = Vec::with_capacity(count);
        let mut idx = 1u64;
        while out.len() < count {
            let p: Vec<f64> = (0..d)
                .map(|k| self.center[k] + self.radius * (2.0 * halton(idx, PRIMES[k]) - 1.0))
                .collect();
            idx += 1;
            if self.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

/// Radical inverse of `index` in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
