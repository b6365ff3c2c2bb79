//! Conformal iterated function systems: map evaluation, the chain-rule
//! decomposition `f_i'(x) = r_i(x) O_i(x)`, the coding map, bounded
//! distortion diagnostics and assumption checks.
//!
//! Two families are built in: similarities `x -> r R x + t` in any dimension
//! up to [`MAX_DIM`], and the two inverse branches `+-sqrt(z - c)` of
//! `z^2 + c` acting on the plane.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{param, Error, Result};
use crate::geometry::{dist, Ball, Rotation, MAX_DIM};
use crate::rng::{stream, Purpose};
use crate::symbolic::{build_refined_alphabet, Alphabet, RefinedAlphabet, Symbol, Word};

/// Seed used for the construction-time geometry and distortion estimates.
const GEOMETRY_SEED: u64 = 0x5EED_C0DE;
const PROBE_POINTS: usize = 24;
const REORTHONORMALIZE_EVERY: usize = 64;
const MAX_DISTORTION_LEN: usize = 12;
/// Relative precision of the Monte Carlo distortion constants: they count
/// as stabilized when halving the sample moves them by less than this, and
/// fresh samples are compared against them at the same precision.
pub const DISTORTION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub ratio: f64,
    pub rotation: Rotation,
    pub translation: Vec<f64>,
}

impl SimilarityMap {
    pub fn planar(ratio: f64, angle: f64, translation: [f64; 2]) -> Self {
        Self { ratio, rotation: Rotation::from_angle(angle), translation: translation.to_vec() }
    }

    fn fixed_point(&self) -> Option<Vec<f64>> {
        let d = self.translation.len();
        // (I - rR) x = t
        let rm = self.rotation.matrix();
        let mut a = vec![0.0; d * (d + 1)];
        for i in 0..d {
            for j in 0..d {
                a[i * (d + 1) + j] = if i == j { 1.0 } else { 0.0 } - self.ratio * rm[i * d + j];
            }
            a[i * (d + 1) + d] = self.translation[i];
        }
        solve_augmented(d, &mut a)
    }
}

fn solve_augmented(d: usize, a: &mut [f64]) -> Option<Vec<f64>> {
    let w = d + 1;
    for c in 0..d {
        let p = (c..d).max_by(|&x, &y| a[x * w + c].abs().total_cmp(&a[y * w + c].abs()))?;
        if a[p * w + c].abs() < 1e-14 {
            return None;
        }
        for j in 0..w {
            a.swap(p * w + j, c * w + j);
        }
        for r in 0..d {
            if r != c {
                let f = a[r * w + c] / a[c * w + c];
                for j in c..w {
                    a[r * w + j] -= f * a[c * w + j];
                }
            }
        }
    }
    Some((0..d).map(|i| a[i * w + d] / a[i * w + i]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Similarity(Vec<SimilarityMap>),
    /// Inverse branches of `z^2 + c`. The square root is cut along the ray
    /// from `c` pointing away from the origin, which misses `U` whenever
    /// `|c| > |2c|^(1/2)`; `sign` makes branch 1 agree with the principal
    /// root at `z = 0`.
    Julia { c: Complex64, sign: f64 },
}

/// Domains and constants derived once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub u: Ball,
    pub v: Ball,
    /// Certified bound `r*` on `r_i(x)` over `U` (infinite if none exists).
    pub r_star: f64,
    /// `max r_i(x)` over the attractor sample.
    pub rho: f64,
    /// `inf r_i(x)` over `V`.
    pub r_lower: f64,
    /// Distance from the domain centre to the farthest attractor sample.
    pub k_radius: f64,
    pub contractive: bool,
    /// Distortion constants used for `rbar` inflation and error bounds.
    pub c1: f64,
    pub c2: f64,
    probes: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ConformalSystem {
    family: Family,
    alphabet: Alphabet,
    dim: usize,
    geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalPoint {
    pub point: Vec<f64>,
    /// Bound `C2 * R * rbar_i` on the distance to `Phi` of any extension.
    pub error_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub samples: usize,
    /// Both constants moved by less than 1% between the first half of the
    /// sample and the whole of it.
    pub stabilized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(AssumptionCheck { name: name.to_string(), passed, detail });
    }
}

/// `(5 + 2 sqrt 6) / 4`: above this modulus the Julia set of `z^2 + c` is the
/// attractor of the two inverse branches on `|z| < |2c|^(1/2)`.
pub fn julia_threshold() -> f64 {
    (5.0 + 2.0 * 6f64.sqrt()) / 4.0
}

/// `(1/2)(|c| - |2c|^(1/2))^(-1/2)`, the derivative bound on `U`.
pub fn julia_derivative_bound(c: Complex64) -> f64 {
    let gap = c.norm() - (2.0 * c.norm()).sqrt();
    if gap <= 0.0 {
        f64::INFINITY
    } else {
        0.5 / gap.sqrt()
    }
}

/// The fixed point `alpha = (1 + sqrt(1 - 4c)) / 2` of branch 1.
pub fn julia_alpha(c: Complex64) -> Complex64 {
    (1.0 + (1.0 - 4.0 * c).sqrt()) / 2.0
}

impl ConformalSystem {
    pub fn similarity(maps: Vec<SimilarityMap>) -> Result<Self> {
        if maps.len() < 2 {
            return param("a system needs at least two maps");
        }
        let dim = maps[0].translation.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return param(format!("dimension must be in 2..={MAX_DIM}, got {dim}"));
        }
        for (k, m) in maps.iter().enumerate() {
            if !(m.ratio.is_finite() && m.ratio > 0.0) {
                return param(format!("map {}: ratio must be positive and finite, got {}", k + 1, m.ratio));
            }
            if m.translation.len() != dim || m.rotation.dim() != dim {
                return param(format!("map {}: dimension mismatch", k + 1));
            }
            if m.translation.iter().any(|t| !t.is_finite()) {
                return param(format!("map {}: translation must be finite", k + 1));
            }
            let residual = m.rotation.orthogonality_residual();
            if residual > 1e-8 {
                return Err(Error::Conformality { residual });
            }
        }
        let alphabet = Alphabet::new(maps.len())?;
        let family = Family::Similarity(maps);
        let geometry = similarity_geometry(&family, dim);
        let mut sys = Self { family, alphabet, dim, geometry };
        sys.finish_geometry();
        Ok(sys)
    }

    /// Planar similarities from `(ratio, angle_rad, [tx, ty])`.
    pub fn similarity2d(maps: &[(f64, f64, [f64; 2])]) -> Result<Self> {
        Self::similarity(maps.iter().map(|&(r, a, t)| SimilarityMap::planar(r, a, t)).collect())
    }

    pub fn julia(c: Complex64) -> Result<Self> {
        if !(c.re.is_finite() && c.im.is_finite()) {
            return param("julia parameter c must be finite");
        }
        let r_u = (2.0 * c.norm()).sqrt();
        let u = Ball { center: vec![0.0, 0.0], radius: r_u };
        let cut = Complex64::from_polar(1.0, (c.arg() + PI) / 2.0);
        let minus_c = -c;
        let cut_root = cut * (minus_c * Complex64::from_polar(1.0, -(c.arg() + PI))).sqrt();
        let sign = if (cut_root - minus_c.sqrt()).norm() <= (cut_root + minus_c.sqrt()).norm() {
            1.0
        } else {
            -1.0
        };
        let r_star = julia_derivative_bound(c);
        let contractive = r_star < 1.0 && r_u > 0.0;
        let geometry = Geometry {
            v: u.clone(),
            u,
            r_star,
            rho: r_star,
            r_lower: 0.0,
            k_radius: 0.0,
            contractive,
            c1: 1.0,
            c2: 1.0,
            probes: Vec::new(),
        };
        let mut sys = Self {
            family: Family::Julia { c, sign },
            alphabet: Alphabet::new(2)?,
            dim: 2,
            geometry,
        };
        sys.finish_geometry();
        Ok(sys)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn maps(&self) -> usize {
        self.alphabet.size()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// `R = diam(V)`.
    pub fn diameter(&self) -> f64 {
        self.geometry.v.diameter()
    }

    pub fn is_similarity(&self) -> bool {
        matches!(self.family, Family::Similarity(_))
    }

    /// Base point `x0` used for the coding map.
    pub fn base_point(&self) -> Vec<f64> {
        self.geometry.v.center.clone()
    }

    /// Computes `K`-sample radius, `V`, `rho`, `r_lower` and the distortion
    /// constants. `V` is `U` contracted toward the attractor hull by `r*`.
    fn finish_geometry(&mut self) {
        if !self.geometry.contractive {
            self.geometry.probes = self.geometry.v.halton_points(PROBE_POINTS);
            return;
        }
        let center = self.geometry.u.center.clone();
        let depth = self.depth_for_precision(1e-13);
        let samples: Vec<Vec<f64>> = (0..512u64)
            .map(|s| {
                let mut rng = stream(GEOMETRY_SEED, Purpose::Geometry, s);
                let w: Vec<Symbol> =
                    (0..depth).map(|_| rng.random_range(0..self.maps()) as Symbol).collect();
                let mut x = [0.0; MAX_DIM];
                x[..self.dim].copy_from_slice(&center);
                for &sym in w.iter().rev() {
                    self.apply_in_place(sym, &mut x[..self.dim]);
                }
                x[..self.dim].to_vec()
            })
            .collect();
        let k_radius = samples.iter().map(|p| dist(p, &center)).fold(0.0, f64::max);
        let g = &mut self.geometry;
        g.k_radius = k_radius;
        let r_v = k_radius + g.r_star * (g.u.radius - k_radius);
        g.v = Ball { center: center.clone(), radius: r_v };
        g.probes = g.v.halton_points(PROBE_POINTS);
        g.probes.push(center);
        match &self.family {
            Family::Similarity(maps) => {
                g.rho = maps.iter().map(|m| m.ratio).fold(0.0, f64::max);
                g.r_lower = maps.iter().map(|m| m.ratio).fold(f64::INFINITY, f64::min);
            }
            Family::Julia { c, .. } => {
                g.rho = samples
                    .iter()
                    .map(|p| 0.5 / (Complex64::new(p[0], p[1]) - c).norm().sqrt())
                    .fold(0.0, f64::max);
                g.r_lower = 0.5 / (c.norm() + r_v).sqrt();
                let c1 = estimate_c1(self, 256, 16, GEOMETRY_SEED).0;
                self.geometry.c1 = c1;
                self.geometry.c2 = estimate_c2(self, 256, 16, GEOMETRY_SEED).0;
            }
        }
    }

    /// Smallest word length whose images have diameter below `tol`.
    pub fn depth_for_precision(&self, tol: f64) -> usize {
        let g = &self.geometry;
        if !g.contractive {
            return 1;
        }
        let scale = g.c2 * g.u.diameter().max(1e-300);
        let d = ((tol / scale).ln() / g.r_star.ln()).ceil();
        (d.max(1.0) as usize).min(4096)
    }

    pub(crate) fn apply_in_place(&self, i: Symbol, x: &mut [f64]) {
        match &self.family {
            Family::Similarity(maps) => {
                let m = &maps[i as usize];
                let mut tmp = [0.0; MAX_DIM];
                m.rotation.apply(x, &mut tmp[..self.dim]);
                for k in 0..self.dim {
                    x[k] = m.ratio * tmp[k] + m.translation[k];
                }
            }
            Family::Julia { c, sign } => {
                let w = self.julia_branch(Complex64::new(x[0], x[1]), *c, *sign, i);
                x[0] = w.re;
                x[1] = w.im;
            }
        }
    }

    fn julia_root(z: Complex64, c: Complex64, sign: f64) -> Complex64 {
        let rot = c.arg() + PI;
        let w = (z - c) * Complex64::from_polar(1.0, -rot);
        Complex64::from_polar(sign, rot / 2.0) * w.sqrt()
    }

    fn julia_branch(&self, z: Complex64, c: Complex64, sign: f64, i: Symbol) -> Complex64 {
        let s = Self::julia_root(z, c, sign);
        if i == 0 {
            s
        } else {
            -s
        }
    }

    /// `f_i(x)` for a single symbol.
    pub fn apply(&self, i: Symbol, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.apply_in_place(i, &mut y);
        y
    }

    /// `(r_i(x), O_i(x))` for a single symbol.
    pub fn map_derivative(&self, i: Symbol, x: &[f64]) -> (f64, Rotation) {
        match &self.family {
            Family::Similarity(maps) => (maps[i as usize].ratio, maps[i as usize].rotation.clone()),
            Family::Julia { c, sign } => {
                let s = Self::julia_root(Complex64::new(x[0], x[1]), *c, *sign);
                let d = if i == 0 { 1.0 / (2.0 * s) } else { -1.0 / (2.0 * s) };
                (d.norm(), Rotation::from_angle(d.arg()))
            }
        }
    }

    /// `log r_i(x)` for a single symbol.
    pub fn log_ratio(&self, i: Symbol, x: &[f64]) -> f64 {
        match &self.family {
            Family::Similarity(maps) => maps[i as usize].ratio.ln(),
            Family::Julia { c, .. } => {
                -std::f64::consts::LN_2 - 0.5 * (Complex64::new(x[0], x[1]) - c).norm().ln()
            }
        }
    }

    /// Lipschitz constant of `x -> log r_i(x)` on `V` (zero for similarities).
    pub fn log_ratio_lipschitz(&self) -> f64 {
        match &self.family {
            Family::Similarity(_) => 0.0,
            Family::Julia { c, .. } => {
                let gap = c.norm() - self.geometry.v.radius;
                if gap > 0.0 {
                    0.5 / gap
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn check_word(&self, word: &[Symbol]) -> Result<()> {
        if !self.alphabet.contains(word) {
            return param(format!("word contains a symbol outside 1..={}", self.maps()));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return param(format!("point has dimension {}, system has {}", x.len(), self.dim));
        }
        Ok(())
    }

    /// `f_{i_1} o ... o f_{i_n}(x)`; every intermediate point must stay in `U`.
    pub fn compose_map(&self, word: &Word, x: &[f64]) -> Result<Vec<f64>> {
        self.check_word(word.symbols())?;
        self.check_point(x)?;
        if !self.geometry.u.contains(x) {
            return Err(Error::DomainViolation { word: word.to_string(), step: 0 });
        }
        let mut y = x.to_vec();
        for (step, &s) in word.symbols().iter().rev().enumerate() {
            self.apply_in_place(s, &mut y);
            if !self.geometry.u.contains(&y) {
                return Err(Error::DomainViolation { word: word.to_string(), step: step + 1 });
            }
        }
        Ok(y)
    }

    /// Chain-rule products `r_i(x)` and `O_i(x)`.
    pub fn derivative_decomposition(&self, word: &Word, x: &[f64]) -> Result<(f64, Rotation)> {
        self.check_word(word.symbols())?;
        self.check_point(x)?;
        let mut pt = x.to_vec();
        let mut ratio = 1.0;
        let mut rot = Rotation::identity(self.dim);
        for (k, &s) in word.symbols().iter().rev().enumerate() {
            let (r, o) = self.map_derivative(s, &pt);
            ratio *= r;
            rot = o.compose(&rot);
            if (k + 1) % REORTHONORMALIZE_EVERY == 0 {
                rot.reorthonormalize();
            }
            self.apply_in_place(s, &mut pt);
        }
        let residual = rot.orthogonality_residual();
        if residual > 1e-8 {
            return Err(Error::Conformality { residual });
        }
        Ok((ratio, rot))
    }

    /// `rbar_i`: exact for similarities; for other families the largest
    /// `r_i` over a fixed quasi-random sample of `V`, inflated by `C1`.
    pub fn ratio_bar(&self, word: &[Symbol]) -> f64 {
        if word.is_empty() {
            return 1.0;
        }
        match &self.family {
            Family::Similarity(maps) => word.iter().map(|&s| maps[s as usize].ratio).product(),
            Family::Julia { .. } => {
                let w = Word::new(word.to_vec());
                let best = self
                    .geometry
                    .probes
                    .iter()
                    .filter_map(|p| self.derivative_decomposition(&w, p).ok())
                    .map(|(r, _)| r)
                    .fold(0.0, f64::max);
                best * self.geometry.c1
            }
        }
    }

    /// `Lambda_q` with `rho` the largest ratio seen on the attractor.
    pub fn refined_alphabet(&self, q: usize) -> Result<RefinedAlphabet> {
        let g = &self.geometry;
        build_refined_alphabet(self.alphabet(), |w| self.ratio_bar(w), g.rho, q, g.r_lower.min(g.rho))
    }

    /// `f_i(x0)` together with the bound `C2 * R * rbar_i` (plus rounding) on
    /// its distance from `Phi` of any infinite extension of `i`.
    pub fn canonical_point(&self, word: &Word, x0: &[f64]) -> Result<CanonicalPoint> {
        if word.is_empty() {
            return param("canonical_point needs a nonempty word");
        }
        let point = self.compose_map(word, x0)?;
        // contraction damps earlier rounding, so a few ulps cover evaluation error
        let rounding = 8.0 * f64::EPSILON * (1.0 + crate::geometry::norm(&point));
        let error_bound =
            self.geometry.c2 * self.diameter() * self.ratio_bar(word.symbols()) + rounding;
        Ok(CanonicalPoint { point, error_bound })
    }

    /// Allocation-free `f_i(x0)` for hot loops; no domain checks.
    pub fn point_into(&self, word: &[Symbol], x0: &[f64], out: &mut [f64]) {
        out[..self.dim].copy_from_slice(x0);
        for &s in word.iter().rev() {
            self.apply_in_place(s, &mut out[..self.dim]);
        }
    }

    /// Fixed point of `f_u`, reached by iterating the contraction.
    pub fn periodic_point(&self, u: &[Symbol]) -> Vec<f64> {
        let mut x = self.base_point();
        let mut buf = [0.0; MAX_DIM];
        for _ in 0..4096 {
            self.point_into(u, &x, &mut buf);
            let moved = dist(&buf[..self.dim], &x);
            x.copy_from_slice(&buf[..self.dim]);
            if moved <= 1e-15 * (1.0 + crate::geometry::norm(&x)) {
                break;
            }
        }
        x
    }
}

fn similarity_geometry(family: &Family, dim: usize) -> Geometry {
    let Family::Similarity(maps) = family else { unreachable!() };
    let contractive = maps.iter().all(|m| m.ratio < 1.0);
    let fixed: Vec<Vec<f64>> = maps.iter().filter_map(SimilarityMap::fixed_point).collect();
    let source: Vec<Vec<f64>> = if contractive && fixed.len() == maps.len() {
        fixed
    } else {
        maps.iter().map(|m| m.translation.clone()).collect()
    };
    let center: Vec<f64> =
        (0..dim).map(|k| source.iter().map(|p| p[k]).sum::<f64>() / source.len() as f64).collect();
    let r_star = maps.iter().map(|m| m.ratio).fold(0.0, f64::max);
    let radius = if contractive {
        let mut r_min = 0.0f64;
        for m in maps {
            let mut img = vec![0.0; dim];
            m.rotation.apply(&center, &mut img);
            let img: Vec<f64> = img.iter().zip(&m.translation).map(|(a, t)| m.ratio * a + t).collect();
            r_min = r_min.max(dist(&img, &center) / (1.0 - m.ratio));
        }
        if r_min > 0.0 {
            1.5 * r_min
        } else {
            1.0
        }
    } else {
        1.0 + maps.iter().map(|m| crate::geometry::norm(&m.translation)).fold(0.0, f64::max)
    };
    let u = Ball { center, radius };
    Geometry {
        v: u.clone(),
        u,
        r_star,
        rho: r_star,
        r_lower: maps.iter().map(|m| m.ratio).fold(f64::INFINITY, f64::min),
        k_radius: 0.0,
        contractive,
        c1: 1.0,
        c2: 1.0,
        probes: Vec::new(),
    }
}

fn distortion_word<R: Rng>(sys: &ConformalSystem, index: usize, rng: &mut R) -> Vec<Symbol> {
    let len = 1 + index % MAX_DISTORTION_LEN;
    (0..len).map(|_| rng.random_range(0..sys.maps()) as Symbol).collect()
}

/// Running maxima over the first half of the words and over all of them.
fn max_over_words<F>(n_words: usize, f: F) -> (f64, f64)
where
    F: Fn(usize) -> f64 + Sync,
{
    let half = n_words / 2;
    let first = (0..half).into_par_iter().map(&f).reduce(|| 1.0, f64::max);
    let second = (half..n_words).into_par_iter().map(&f).reduce(|| 1.0, f64::max);
    (first.max(second), first)
}

fn estimate_c1(sys: &ConformalSystem, n_words: usize, n_pairs: usize, seed: u64) -> (f64, f64) {
    let v = &sys.geometry.v;
    max_over_words(n_words, |s| {
        let mut rng = stream(seed, Purpose::Distortion, s as u64);
        let w = Word::new(distortion_word(sys, s, &mut rng));
        let mut best = 1.0f64;
        for _ in 0..n_pairs {
            let x = v.sample(&mut rng);
            let y = v.sample(&mut rng);
            if let (Ok((rx, _)), Ok((ry, _))) =
                (sys.derivative_decomposition(&w, &x), sys.derivative_decomposition(&w, &y))
            {
                best = best.max(rx / ry).max(ry / rx);
            }
        }
        best
    })
}

fn estimate_c2(sys: &ConformalSystem, n_words: usize, n_pairs: usize, seed: u64) -> (f64, f64) {
    let v = &sys.geometry.v;
    let d = sys.dim;
    max_over_words(n_words, |s| {
        let mut rng = stream(seed ^ 0xC2, Purpose::Distortion, s as u64);
        let w = distortion_word(sys, s, &mut rng);
        let rbar = sys.ratio_bar(&w);
        let mut best = 1.0f64;
        let (mut fx, mut fy) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
        for _ in 0..n_pairs {
            let x = v.sample(&mut rng);
            let y = v.sample(&mut rng);
            sys.point_into(&w, &x, &mut fx);
            sys.point_into(&w, &y, &mut fy);
            let q = dist(&fx[..d], &fy[..d]) / (rbar * dist(&x, &y));
            if q.is_finite() && q > 0.0 {
                best = best.max(q).max(1.0 / q);
            }
        }
        best
    })
}

/// Monte Carlo estimates of the distortion constants: `C1` bounds
/// `r_i(x)/r_i(y)` and `C2` the two-sided comparison of `|f_i(x)-f_i(y)|`
/// with `rbar_i |x-y|`. Word lengths cycle through `1..=12`; points are
/// uniform in `V`.
pub fn estimate_distortion(
    sys: &ConformalSystem,
    n_words: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<DistortionReport> {
    if n_words < 2 || n_pairs == 0 {
        return param("estimate_distortion needs n_words >= 2 and n_pairs >= 1");
    }
    let (c1, c1_half) = estimate_c1(sys, n_words, n_pairs, seed);
    let (c2, c2_half) = estimate_c2(sys, n_words, n_pairs, seed);
    let stabilized = (c1 - c1_half) / c1 < DISTORTION_TOLERANCE && (c2 - c2_half) / c2 < DISTORTION_TOLERANCE;
    Ok(DistortionReport { c1_hat: c1, c2_hat: c2, samples: n_words * n_pairs, stabilized })
}

/// Worst violation (as a ratio > 1 when violated) of
/// `C2^-1 rbar_i |x-y| <= |f_i(x)-f_i(y)| <= C2 rbar_i |x-y|`
/// over `n` fresh `(i, x, y)` triples.
pub fn check_distortion_sandwich(sys: &ConformalSystem, c2: f64, n: usize, seed: u64) -> f64 {
    let v = &sys.geometry.v;
    let d = sys.dim;
    (0..n)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, Purpose::Probe, s as u64);
            let w = distortion_word(sys, s, &mut rng);
            let rbar = sys.ratio_bar(&w);
            let x = v.sample(&mut rng);
            let y = v.sample(&mut rng);
            let (mut fx, mut fy) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
            sys.point_into(&w, &x, &mut fx);
            sys.point_into(&w, &y, &mut fy);
            let lhs = dist(&fx[..d], &fy[..d]);
            let scale = rbar * dist(&x, &y);
            (lhs / (c2 * scale)).max(scale / (c2 * lhs))
        })
        .reduce(|| 0.0, f64::max)
}

/// Needed `C3` for one sample of the projected distortion inequality with
/// a rank-one projection onto `dir`.
fn needed_c3(
    sys: &ConformalSystem,
    c1: f64,
    word: &[Symbol],
    dir: &[f64],
    x: &[f64],
    y: &[f64],
    z: &[f64],
) -> Option<f64> {
    let d = sys.dim;
    let w = Word::new(word.to_vec());
    let rbar = sys.ratio_bar(word);
    let (_, oz) = sys.derivative_decomposition(&w, z).ok()?;
    let (mut fx, mut fy) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
    sys.point_into(word, x, &mut fx);
    sys.point_into(word, y, &mut fy);
    let proj = |v: &[f64]| -> f64 { v.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>().abs() };
    let df: Vec<f64> = (0..d).map(|k| fx[k] - fy[k]).collect();
    let dx: Vec<f64> = (0..d).map(|k| x[k] - y[k]).collect();
    let mut odx = vec![0.0; d];
    oz.apply(&dx, &mut odx);
    let s = (dist(z, x) + dist(z, y)) * dist(x, y);
    if s <= 0.0 {
        return None;
    }
    let upper = (proj(&df) - rbar * proj(&odx)) / (rbar * s);
    let lower = (rbar * proj(&odx) / c1 - proj(&df)) / (rbar * s);
    Some(upper.max(lower).max(0.0))
}

fn c3_sample(sys: &ConformalSystem, c1: f64, s: usize, seed: u64) -> Option<f64> {
    let mut rng = stream(seed, Purpose::Probe, s as u64);
    let v = &sys.geometry.v;
    let len = 1 + s % 8;
    let word: Vec<Symbol> = (0..len).map(|_| rng.random_range(0..sys.maps()) as Symbol).collect();
    let dir = {
        let b = Ball { center: vec![0.0; sys.dim], radius: 1.0 };
        let p = b.sample(&mut rng);
        let n = crate::geometry::norm(&p);
        p.iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let x = v.sample(&mut rng);
    let y = v.sample(&mut rng);
    let z = v.sample(&mut rng);
    needed_c3(sys, c1, &word, &dir, &x, &y, &z)
}

/// Smallest `C3` making the projected distortion inequality hold on `n`
/// sampled `(pi, i, x, y, z)`.
pub fn fit_projection_distortion(sys: &ConformalSystem, c1: f64, n: usize, seed: u64) -> f64 {
    (0..n).into_par_iter().filter_map(|s| c3_sample(sys, c1, s, seed)).reduce(|| 0.0, f64::max)
}

/// Validates (A0)-(A1) by sampling; never fails, returns an itemized report.
pub fn validate_assumptions(sys: &ConformalSystem) -> AssumptionReport {
    let mut report = AssumptionReport::default();
    let g = &sys.geometry;
    if let Family::Julia { c, .. } = &sys.family {
        let t = julia_threshold();
        report.push(
            "julia |c| threshold",
            c.norm() > t,
            format!("|c| = {:.6}, threshold (5+2*sqrt6)/4 = {:.6}", c.norm(), t),
        );
        let b = julia_derivative_bound(*c);
        report.push(
            "julia derivative bound",
            b < 1.0,
            format!("(1/2)(|c| - |2c|^(1/2))^(-1/2) = {b:.6}"),
        );
    }
    let interior = Ball { center: g.u.center.clone(), radius: g.u.radius * (1.0 - 1e-9) };
    let pts = if g.u.radius > 0.0 { interior.halton_points(400) } else { Vec::new() };
    let mut into_u = !pts.is_empty();
    let mut max_r = 0.0f64;
    let mut worst_residual = 0.0f64;
    let mut min_sep = f64::INFINITY;
    for i in 0..sys.maps() as Symbol {
        let images: Vec<Vec<f64>> = pts.iter().map(|p| sys.apply(i, p)).collect();
        for (p, img) in pts.iter().zip(&images) {
            into_u &= g.u.contains(img);
            let (r, o) = sys.map_derivative(i, p);
            max_r = max_r.max(r);
            worst_residual = worst_residual.max(o.orthogonality_residual());
        }
        for a in 0..images.len() {
            for b in a + 1..images.len() {
                min_sep = min_sep.min(dist(&images[a], &images[b]) / dist(&pts[a], &pts[b]));
            }
        }
    }
    report.push("A0: f_i(U) in U", into_u, format!("{} sample points per map", pts.len()));
    report.push(
        "A0: injective",
        min_sep > 1e-12,
        format!("min |f(x)-f(y)|/|x-y| over sampled pairs = {min_sep:.3e}"),
    );
    report.push(
        "A0: conformal",
        worst_residual <= 1e-8,
        format!("max rotation residual {worst_residual:.1e}"),
    );
    report.push(
        "A1: r* < 1",
        g.r_star < 1.0 && max_r <= g.r_star * (1.0 + 1e-12),
        format!("r* = {:.6}, sampled max r_i = {:.6}", g.r_star, max_r),
    );
    if g.contractive {
        let margin = g.v.radius - g.k_radius;
        report.push(
            "V: K inside V inside U",
            margin > 0.0 && g.v.radius < g.u.radius,
            format!(
                "|K| <= {:.6}, radius(V) = {:.6}, radius(U) = {:.6}",
                g.k_radius, g.v.radius, g.u.radius
            ),
        );
    }
    report
}
