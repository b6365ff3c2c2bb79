//! The rotation cocycle `n -> O_{i|n}(x_{sigma^n i})` and empirical
//! diagnostics for the density of its orbit in `SO(d)`.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::fmt;

use crate::conformal::ConformalSystem;
use crate::error::{param, Result};
use crate::geometry::{haar_rotation, Rotation, MAX_DIM};
use crate::rng::{stream, Purpose};
use crate::symbolic::{Alphabet, InfiniteWord, Word};

/// Cluster radius for atom detection.
pub const ATOM_EPS: f64 = 1e-8;
const ATLAS_SIZE: usize = 64;
const ATLAS_VOLUME_SAMPLES: usize = 20_000;
const ATLAS_SEED: u64 = 0xA71A5;

/// `O_i(x) = O_{i_1}(f_{i_2..i_n}(x)) ... O_{i_n}(x)`.
pub fn rotation_cocycle(sys: &ConformalSystem, word: &Word, base: &[f64]) -> Result<Rotation> {
    Ok(sys.derivative_decomposition(word, base)?.1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrbitEntries {
    /// Angles in `[0, 2 pi)`.
    Angles(Vec<f64>),
    /// Row-major `dim x dim` matrices back to back.
    Matrices { dim: usize, data: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationOrbit {
    pub entries: OrbitEntries,
    /// Human-readable description of the base word.
    pub base: String,
}

impl RotationOrbit {
    pub fn len(&self) -> usize {
        match &self.entries {
            OrbitEntries::Angles(a) => a.len(),
            OrbitEntries::Matrices { dim, data } => data.len() / (dim * dim),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match &self.entries {
            OrbitEntries::Angles(_) => 2,
            OrbitEntries::Matrices { dim, .. } => *dim,
        }
    }

    /// Entry `n` (1-based in the cocycle; index `n - 1` here).
    pub fn entry(&self, k: usize) -> Rotation {
        match &self.entries {
            OrbitEntries::Angles(a) => Rotation::Planar(a[k]),
            OrbitEntries::Matrices { dim, data } => {
                let s = dim * dim;
                Rotation::Matrix { dim: *dim, entries: data[k * s..(k + 1) * s].to_vec() }
            }
        }
    }
}

fn describe(i: &InfiniteWord) -> String {
    use crate::symbolic::Continuation;
    match &i.tail {
        Continuation::Periodic(u) => format!("{}({})^inf", i.prefix, u),
        Continuation::Random { seed, offset, .. } => format!("{} random(seed={seed}, offset={offset})", i.prefix),
    }
}

fn reduce(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// The first `n` entries of the cocycle along `i`. Each tail point
/// `x_{sigma^n i}` is realized from enough symbols that its error is below
/// `1e-13`; constant-rotation similarity systems skip the tail entirely.
pub fn orbit_sequence(sys: &ConformalSystem, i: &InfiniteWord, n: usize) -> Result<RotationOrbit> {
    if n == 0 {
        return param("orbit length must be at least 1");
    }
    if !sys.geometry().contractive {
        return param("orbits need a contracting system");
    }
    let depth = if sys.is_similarity() { 0 } else { sys.depth_for_precision(1e-13) };
    let syms = i.take(n + depth);
    let syms = syms.symbols();
    let base = sys.base_point();
    let d = sys.dim();
    let mut x = [0.0; MAX_DIM];
    let mut tail_point = |k: usize| -> Vec<f64> {
        if depth == 0 {
            return base.clone();
        }
        sys.point_into(&syms[k..k + depth], &base, &mut x);
        x[..d].to_vec()
    };
    let entries = if d == 2 {
        let mut angles = Vec::with_capacity(n);
        let mut acc = 0.0;
        for k in 1..=n {
            let (_, o) = sys.map_derivative(syms[k - 1], &tail_point(k));
            acc = reduce(acc + o.angle().expect("planar rotation"));
            angles.push(acc);
        }
        OrbitEntries::Angles(angles)
    } else {
        let mut data = Vec::with_capacity(n * d * d);
        let mut acc = Rotation::identity(d);
        for k in 1..=n {
            let (_, o) = sys.map_derivative(syms[k - 1], &tail_point(k));
            acc = acc.compose(&o);
            if k % 64 == 0 {
                acc.reorthonormalize();
            }
            data.extend_from_slice(&acc.matrix());
        }
        OrbitEntries::Matrices { dim: d, data }
    };
    Ok(RotationOrbit { entries, base: describe(i) })
}

/// Outcome of the density surrogate for (A2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum A2Verdict {
    /// Some periodic word has an irrational rotation (within precision).
    VerifiedSufficientCriterion,
    ConsistentWithDense,
    AtomsDetected,
}

impl fmt::Display for A2Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            A2Verdict::VerifiedSufficientCriterion => "verified-sufficient-criterion",
            A2Verdict::ConsistentWithDense => "consistent-with-dense",
            A2Verdict::AtomsDetected => "atoms-detected",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityDiagnostic {
    /// `(n, discrepancy of the first n entries)`; star discrepancy of
    /// `angle / 2 pi` for `d = 2`, total variation over the Haar atlas
    /// otherwise.
    pub checkpoints: Vec<(usize, f64)>,
    /// Chi-square statistic over the atlas cells (`d >= 3` only).
    pub chi_square: Option<f64>,
    /// Number of `ATOM_EPS`-clusters.
    pub clusters: usize,
    /// Fewest clusters holding at least half of the entries.
    pub clusters_for_half: usize,
    pub verdict: A2Verdict,
}

impl DensityDiagnostic {
    pub fn final_discrepancy(&self) -> f64 {
        self.checkpoints.last().map(|c| c.1).unwrap_or(1.0)
    }
}

/// Star discrepancy of points of `[0, 1)` against the uniform law.
pub fn star_discrepancy(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(k, &u)| ((k + 1) as f64 / n - u).max(u - k as f64 / n))
        .fold(0.0, f64::max)
}

fn checkpoint_sizes(n: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut s = 16;
    while s < n {
        sizes.push(s);
        s *= 2;
    }
    sizes.push(n);
    sizes
}

/// Sizes of the circular `eps`-clusters of sorted angles.
fn circular_clusters(angles: &[f64], eps: f64) -> Vec<usize> {
    let mut v = angles.to_vec();
    v.sort_by(f64::total_cmp);
    let mut sizes = vec![1usize];
    for k in 1..v.len() {
        if v[k] - v[k - 1] <= eps {
            *sizes.last_mut().unwrap() += 1;
        } else {
            sizes.push(1);
        }
    }
    if sizes.len() > 1 && v[0] + TAU - v[v.len() - 1] <= eps {
        let last = sizes.pop().unwrap();
        sizes[0] += last;
    }
    sizes
}

fn matrix_clusters(dim: usize, data: &[f64], eps: f64) -> Vec<usize> {
    let mut counts: HashMap<Vec<i64>, usize> = HashMap::new();
    for m in data.chunks_exact(dim * dim) {
        let key = m.iter().map(|x| (x / eps).round() as i64).collect();
        *counts.entry(key).or_default() += 1;
    }
    counts.into_values().collect()
}

fn half_cover(mut sizes: Vec<usize>, total: usize) -> usize {
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let mut acc = 0;
    for (k, s) in sizes.iter().enumerate() {
        acc += s;
        if 2 * acc >= total {
            return k + 1;
        }
    }
    sizes.len()
}

/// Fixed Haar-random reference rotations and the Haar volumes of their
/// nearest-neighbour cells.
struct Atlas {
    centers: Vec<Rotation>,
    volumes: Vec<f64>,
}

fn nearest(centers: &[Rotation], m: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, c) in centers.iter().enumerate() {
        let Rotation::Matrix { entries, .. } = c else { unreachable!() };
        let d2: f64 = entries.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.0 {
            best = (d2, k);
        }
    }
    best.1
}

fn atlas(dim: usize) -> Atlas {
    let centers: Vec<Rotation> =
        (0..ATLAS_SIZE as u64).map(|k| haar_rotation(dim, &mut stream(ATLAS_SEED, Purpose::Atlas, k))).collect();
    let mut counts = vec![0usize; ATLAS_SIZE];
    let mut rng = stream(ATLAS_SEED, Purpose::Atlas, u64::MAX);
    for _ in 0..ATLAS_VOLUME_SAMPLES {
        let r = haar_rotation(dim, &mut rng);
        counts[nearest(&centers, &r.matrix())] += 1;
    }
    let volumes = counts.iter().map(|&c| (c.max(1)) as f64 / ATLAS_VOLUME_SAMPLES as f64).collect();
    Atlas { centers, volumes }
}

/// Discrepancy checkpoints, clustering and the dense/atoms verdict.
pub fn density_diagnostic(orbit: &RotationOrbit) -> Result<DensityDiagnostic> {
    let n = orbit.len();
    if n < 16 {
        return param("density diagnostics need at least 16 orbit entries");
    }
    let sizes = checkpoint_sizes(n);
    let (checkpoints, chi_square, clusters) = match &orbit.entries {
        OrbitEntries::Angles(a) => {
            let u: Vec<f64> = a.iter().map(|x| x / TAU).collect();
            let cp = sizes.iter().map(|&s| (s, star_discrepancy(&u[..s]))).collect();
            (cp, None, circular_clusters(a, ATOM_EPS))
        }
        OrbitEntries::Matrices { dim, data } => {
            let atlas = atlas(*dim);
            let cells: Vec<usize> = data.chunks_exact(dim * dim).map(|m| nearest(&atlas.centers, m)).collect();
            let tv_chi = |s: usize| {
                let mut counts = vec![0usize; ATLAS_SIZE];
                for &c in &cells[..s] {
                    counts[c] += 1;
                }
                let mut tv = 0.0;
                let mut chi = 0.0;
                for (c, v) in counts.iter().zip(&atlas.volumes) {
                    let f = *c as f64 / s as f64;
                    tv += (f - v).abs();
                    let e = v * s as f64;
                    chi += (*c as f64 - e).powi(2) / e;
                }
                (0.5 * tv, chi)
            };
            let cp = sizes.iter().map(|&s| (s, tv_chi(s).0)).collect();
            (cp, Some(tv_chi(n).1), matrix_clusters(*dim, data, ATOM_EPS))
        }
    };
    let clusters_for_half = half_cover(clusters.clone(), n);
    let verdict = if (clusters_for_half as f64) < (n as f64).sqrt() {
        A2Verdict::AtomsDetected
    } else {
        A2Verdict::ConsistentWithDense
    };
    Ok(DensityDiagnostic { checkpoints, chi_square, clusters: clusters.len(), clusters_for_half, verdict })
}

/// Best rational approximation `p/q` of `x` with `q <= max_q`, if it is
/// within `tol`.
pub fn rational_within(x: f64, max_q: u64, tol: f64) -> Option<(i64, u64)> {
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut t = x;
    for _ in 0..64 {
        let a = t.floor();
        let ai = a as i128;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2 > max_q as i128 {
            break;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol {
            return Some((h2 as i64, k2 as u64));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = t - a;
        if frac.abs() < 1e-300 {
            break;
        }
        t = 1.0 / frac;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicRotation {
    pub word: Word,
    /// Angle of `O_u(x_u)` in `[0, 2 pi)`.
    pub angle: f64,
    /// Small-denominator approximation of `angle / pi`, if any.
    pub rational: Option<(i64, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientCriterion {
    pub checked: Vec<PeriodicRotation>,
    /// First periodic word whose rotation is irrational within numerical
    /// precision.
    pub witness: Option<Word>,
}

/// Searches periodic words `u` with `|u| <= max_len` for an irrational
/// rotation `O_u(x_u)` at the fixed point of `f_u`. Planar systems only;
/// higher dimensions return no witness.
pub fn sufficient_criterion(sys: &ConformalSystem, max_len: usize) -> Result<SufficientCriterion> {
    let mut checked = Vec::new();
    let mut witness = None;
    if sys.dim() != 2 || !sys.geometry().contractive {
        return Ok(SufficientCriterion { checked, witness });
    }
    let alphabet = Alphabet::new(sys.maps())?;
    for len in 1..=max_len {
        for u in alphabet.words(len)? {
            let x = sys.periodic_point(u.symbols());
            let angle = rotation_cocycle(sys, &u, &x)?.angle().expect("planar");
            let rational = rational_within(angle / PI, 10_000, 1e-9);
            if rational.is_none() && witness.is_none() {
                witness = Some(u.clone());
            }
            checked.push(PeriodicRotation { word: u, angle, rational });
        }
    }
    Ok(SufficientCriterion { checked, witness })
}

/// Three-valued (A2) verdict: the sufficient criterion wins, otherwise the
/// orbit diagnostic decides.
pub fn a2_verdict(criterion: &SufficientCriterion, diagnostic: &DensityDiagnostic) -> A2Verdict {
    if criterion.witness.is_some() {
        A2Verdict::VerifiedSufficientCriterion
    } else {
        diagnostic.verdict
    }
}

/// A uniformly random base word for orbit experiments.
pub fn random_base(seed: u64, m: usize) -> Result<InfiniteWord> {
    Ok(InfiniteWord::random(seed, Alphabet::new(m)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::SimilarityMap;
    use num_complex::Complex64;

    fn planar(theta: f64) -> ConformalSystem {
        ConformalSystem::similarity2d(&[(1.0 / 3.0, theta, [0.0, 0.0]), (1.0 / 3.0, theta, [2.0 / 3.0, 0.0])])
            .unwrap()
    }

    #[test]
    fn constant_cocycle_sums_angles() {
        let s = ConformalSystem::similarity2d(&[(0.3, 0.4, [0.0, 0.0]), (0.3, 1.1, [1.0, 0.0])]).unwrap();
        let w = Word::new(vec![0, 1, 1, 0, 1]);
        let r = rotation_cocycle(&s, &w, &[0.1, 0.1]).unwrap();
        assert!((r.angle().unwrap() - (0.8 + 3.3)).abs() < 1e-14);
        assert_eq!(rotation_cocycle(&s, &Word::empty(), &[0.0, 0.0]).unwrap(), Rotation::identity(2));
    }

    #[test]
    fn julia_fixed_point_rotation() {
        let c = Complex64::new(-3.0, 1.0);
        let s = ConformalSystem::julia(c).unwrap();
        let alpha = crate::conformal::julia_alpha(c);
        let r = rotation_cocycle(&s, &Word::new(vec![0]), &[alpha.re, alpha.im]).unwrap();
        let expected = reduce(-(1.0 + (1.0 - 4.0 * c).sqrt()).arg());
        assert!((r.angle().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn cocycle_property() {
        let s = ConformalSystem::julia(Complex64::new(-3.0, 1.0)).unwrap();
        let x = vec![0.2, -0.3];
        let u = Word::new(vec![0, 1, 1]);
        let v = Word::new(vec![1, 0]);
        let uv = rotation_cocycle(&s, &u.concat(&v), &x).unwrap();
        let fv = s.compose_map(&v, &x).unwrap();
        let split = rotation_cocycle(&s, &u, &fv).unwrap().compose(&rotation_cocycle(&s, &v, &x).unwrap());
        assert!(uv.frobenius_distance(&split) < 1e-9);
    }

    #[test]
    fn quarter_turn_orbit_has_four_atoms() {
        let s = planar(PI / 2.0);
        let orbit = orbit_sequence(&s, &InfiniteWord::periodic(Word::new(vec![0])).unwrap(), 1000).unwrap();
        let distinct: std::collections::BTreeSet<u64> = match &orbit.entries {
            OrbitEntries::Angles(a) => a.iter().map(|x| (x * 1e6).round() as u64 % 6_283_185).collect(),
            _ => unreachable!(),
        };
        assert!(distinct.len() <= 4);
        let diag = density_diagnostic(&orbit).unwrap();
        assert_eq!(diag.verdict, A2Verdict::AtomsDetected);
        assert_eq!(diag.clusters, 4);
        assert!(diag.checkpoints.iter().all(|c| c.1 >= 1.0 / 8.0));
    }

    #[test]
    fn one_radian_orbit_is_closed_form() {
        let s = planar(1.0);
        let n = 10_000;
        let orbit = orbit_sequence(&s, &InfiniteWord::random(3, Alphabet::new(2).unwrap()), n).unwrap();
        let OrbitEntries::Angles(a) = &orbit.entries else { unreachable!() };
        for (k, x) in a.iter().enumerate() {
            assert!((x - ((k + 1) as f64).rem_euclid(TAU)).abs() < 1e-9);
        }
        let mut sorted = a.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
    }

    #[test]
    fn star_discrepancy_examples() {
        assert!((star_discrepancy(&[0.5]) - 0.5).abs() < 1e-15);
        let grid: Vec<f64> = (0..100).map(|k| (k as f64 + 0.5) / 100.0).collect();
        assert!((star_discrepancy(&grid) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn continued_fractions() {
        assert_eq!(rational_within(0.5, 10_000, 1e-9), Some((1, 2)));
        assert_eq!(rational_within(355.0 / 113.0, 10_000, 1e-12), Some((355, 113)));
        assert_eq!(rational_within(1.0 / PI, 10_000, 1e-9), None);
    }

    #[test]
    fn sufficient_criterion_examples() {
        let crit = sufficient_criterion(&planar(1.0), 2).unwrap();
        assert_eq!(crit.witness, Some(Word::new(vec![0])));
        let crit = sufficient_criterion(&planar(PI / 2.0), 4).unwrap();
        assert!(crit.witness.is_none());
        let julia = ConformalSystem::julia(Complex64::new(-3.0, 1.0)).unwrap();
        assert!(sufficient_criterion(&julia, 1).unwrap().witness.is_some());
    }

    fn spatial(rotations: [Rotation; 2]) -> ConformalSystem {
        let [a, b] = rotations;
        ConformalSystem::similarity(vec![
            SimilarityMap { ratio: 0.3, rotation: a, translation: vec![0.0, 0.0, 0.0] },
            SimilarityMap { ratio: 0.3, rotation: b, translation: vec![1.0, 0.0, 0.5] },
        ])
        .unwrap()
    }

    #[test]
    fn three_dimensional_orbit_diagnostics() {
        let generic = spatial([
            haar_rotation(3, &mut stream(1, Purpose::Probe, 0)),
            haar_rotation(3, &mut stream(1, Purpose::Probe, 1)),
        ]);
        let base = random_base(4, 2).unwrap();
        let diag = density_diagnostic(&orbit_sequence(&generic, &base, 4096).unwrap()).unwrap();
        assert_eq!(diag.verdict, A2Verdict::ConsistentWithDense);
        assert!(diag.final_discrepancy() < 0.15, "{:?}", diag.checkpoints);

        let trivial = spatial([Rotation::identity(3), Rotation::identity(3)]);
        let diag = density_diagnostic(&orbit_sequence(&trivial, &base, 4096).unwrap()).unwrap();
        assert_eq!(diag.verdict, A2Verdict::AtomsDetected);
        assert_eq!(diag.clusters, 1);
    }
}
