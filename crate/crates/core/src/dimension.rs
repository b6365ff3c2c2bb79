//! Dimension estimators on point clouds: entropy dimension from the slope
//! of `H_r` against `-log r`, local dimension, orthogonal projections,
//! the normalized entropies `e_q` and their Haar averages `E_q`, projection
//! sweeps and pin-distance sets.

use log::warn;
use rayon::prelude::*;

use crate::cloud::{jackknife_sigma, scaling_entropy_curve, EntropyEstimate, PointCloud, JACKKNIFE_BLOCKS};
use crate::conformal::ConformalSystem;
use crate::error::{param, Error, Result};
use crate::geometry::{haar_rotation, Rotation, MAX_DIM};
use crate::gibbs::Potential;
use crate::rng::{stream, Purpose};

/// Neighbour count that sets the default lower end of the scale window.
pub const MIN_NEIGHBOURS: f64 = 30.0;
const NEIGHBOUR_PROBES: usize = 128;
const NEIGHBOUR_CAP: usize = 1024;

/// Radii `r_max = r_0 > r_1 > ... > r_{count-1} = r_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusGrid {
    pub r_max: f64,
    pub r_min: f64,
    pub count: usize,
    pub geometric: bool,
}

impl RadiusGrid {
    pub fn radii(&self) -> Result<Vec<f64>> {
        if !(self.r_min > 0.0 && self.r_max > self.r_min) || self.count < 2 {
            return param("radius grid needs 0 < r_min < r_max and count >= 2");
        }
        let n = self.count - 1;
        Ok((0..self.count)
            .map(|k| {
                let t = k as f64 / n as f64;
                if self.geometric {
                    self.r_max * (self.r_min / self.r_max).powf(t)
                } else {
                    self.r_max + (self.r_min - self.r_max) * t
                }
            })
            .collect())
    }
}

/// Smallest radius at which sampled centres see on average `MIN_NEIGHBOURS`
/// points (counts capped at 1024 per centre).
pub fn neighbour_radius(cloud: &PointCloud) -> f64 {
    let n = cloud.len();
    let probes = NEIGHBOUR_PROBES.min(n);
    let keep = NEIGHBOUR_CAP.min(n);
    let stride = n / probes;
    let per_center: Vec<Vec<f64>> = (0..probes)
        .into_par_iter()
        .map(|p| {
            let x = cloud.point(p * stride);
            let mut d: Vec<f64> = (0..n)
                .map(|j| cloud.point(j).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .collect();
            if keep < n {
                d.select_nth_unstable_by(keep - 1, f64::total_cmp);
                d.truncate(keep);
            }
            d.sort_by(f64::total_cmp);
            d.into_iter().map(f64::sqrt).collect()
        })
        .collect();
    let mut pooled: Vec<f64> = per_center.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    // mean count at r is (number of pooled distances <= r) / probes
    let target = (MIN_NEIGHBOURS * probes as f64).ceil() as usize;
    pooled[target.min(pooled.len()) - 1]
}

/// Default window: `r_max = diam / 8`, `r_min = max(8 max pos_error,
/// neighbour radius)`, 12 geometric steps.
pub fn default_radius_grid(cloud: &PointCloud) -> Result<RadiusGrid> {
    let r_max = cloud.diameter() / 8.0;
    let r_min = (8.0 * cloud.max_pos_error()).max(neighbour_radius(cloud));
    if !(r_min < r_max) {
        return param(format!(
            "cloud too small or too coarse for a scale window: r_min {r_min:e} >= r_max {r_max:e}"
        ));
    }
    Ok(RadiusGrid { r_max, r_min, count: 12, geometric: true })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    /// Slope over the finest half of the scale window, clamped to
    /// `[0, ambient dimension]`.
    pub dim_e_hat: f64,
    pub raw_slope: f64,
    /// Twice the jackknife standard error of the slope.
    pub ci_halfwidth: f64,
    /// Slope and intercept over the whole curve.
    pub slope_full: f64,
    pub intercept_full: f64,
    /// Radii spanned by the finest-half regression.
    pub window: (f64, f64),
    /// Curve in decreasing order of `r`.
    pub curve: Vec<EntropyEstimate>,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn check_radii(cloud: &PointCloud, radii: &[f64]) -> Result<Vec<f64>> {
    if radii.len() < 4 {
        return param("dimension estimates need at least 4 scales");
    }
    if radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return param("scales must be positive");
    }
    let floor = cloud.resolution_floor();
    if let Some(&r) = radii.iter().find(|&&r| r < floor) {
        return Err(Error::Resolution { r, floor, usable: radii.iter().filter(|&&x| x >= floor).count() });
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    if sorted.len() < 4 {
        return param("dimension estimates need at least 4 distinct scales");
    }
    Ok(sorted)
}

/// Entropy dimension: slope of `H_r` against `-log r`. Centres are capped at
/// `max_centers` (all points when `None`).
pub fn entropy_dimension_with(
    cloud: &PointCloud,
    radii: &[f64],
    max_centers: Option<usize>,
) -> Result<DimensionEstimate> {
    let radii = check_radii(cloud, radii)?;
    let curve = scaling_entropy_curve(cloud, &radii, max_centers)?;
    let x: Vec<f64> = radii.iter().map(|r| -r.ln()).collect();
    let y: Vec<f64> = curve.iter().map(|e| e.h).collect();
    let (slope_full, intercept_full) = least_squares(&x, &y);
    let half = radii.len().div_ceil(2).max(3);
    let start = radii.len() - half;
    let (raw_slope, _) = least_squares(&x[start..], &y[start..]);
    let slopes: Vec<f64> = (0..JACKKNIFE_BLOCKS)
        .map(|b| {
            let yb: Vec<f64> = curve[start..].iter().map(|e| e.replicates[b]).collect();
            least_squares(&x[start..], &yb).0
        })
        .collect();
    let ci_halfwidth = 2.0 * jackknife_sigma(&slopes);
    Ok(DimensionEstimate {
        dim_e_hat: raw_slope.clamp(0.0, cloud.dim() as f64),
        raw_slope,
        ci_halfwidth,
        slope_full,
        intercept_full,
        window: (radii[radii.len() - 1], radii[start]),
        curve,
    })
}

pub fn entropy_dimension(cloud: &PointCloud, radii: &[f64]) -> Result<DimensionEstimate> {
    entropy_dimension_with(cloud, radii, None)
}

/// Slope of `log nu(B(x, r))` against `log r` over all scales.
pub fn local_dimension(cloud: &PointCloud, x: &[f64], radii: &[f64]) -> Result<f64> {
    let radii = check_radii(cloud, radii)?;
    if x.len() != cloud.dim() {
        return param("query point has the wrong dimension");
    }
    let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
    let masses = (0..cloud.len())
        .into_par_iter()
        .with_min_len(8192)
        .fold(
            || vec![0.0; r2.len()],
            |mut acc, j| {
                let d2: f64 = cloud.point(j).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                for (m, &t) in acc.iter_mut().zip(&r2) {
                    if d2 <= t {
                        *m += cloud.weights()[j];
                    }
                }
                acc
            },
        )
        .reduce(|| vec![0.0; r2.len()], |a, b| a.iter().zip(&b).map(|(p, q)| p + q).collect());
    let (lx, ly): (Vec<f64>, Vec<f64>) =
        radii.iter().zip(&masses).filter(|(_, &m)| m > 0.0).map(|(r, m)| (r.ln(), m.ln())).unzip();
    if lx.len() < 2 {
        return param("the query point sees no mass at most scales");
    }
    Ok(least_squares(&lx, &ly).0)
}

/// Local dimensions at `n` cloud points drawn by weight; returns the
/// estimates.
pub fn exactness_probe(cloud: &PointCloud, radii: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
    use rand::Rng;
    let cum: Vec<f64> = cloud
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let total = *cum.last().unwrap();
    (0..n as u64)
        .map(|k| {
            let u: f64 = stream(seed, Purpose::Probe, k).random::<f64>() * total;
            let idx = cum.partition_point(|&c| c <= u).min(cloud.len() - 1);
            local_dimension(cloud, cloud.point(idx), radii)
        })
        .collect()
}

/// An orthogonal projection onto a `k`-dimensional subspace of `R^d`,
/// given by `k` orthonormal rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpec {
    pub d: usize,
    pub k: usize,
    pub frame: Vec<f64>,
}

impl ProjectionSpec {
    pub fn new(d: usize, k: usize, frame: Vec<f64>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) || k == 0 || k > d || frame.len() != k * d {
            return param("projection frame must be k x d with 1 <= k <= d");
        }
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = (0..d).map(|j| frame[a * d + j] * frame[b * d + j]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                if (dot - target).abs() > 1e-12 {
                    return param("projection frame rows must be orthonormal");
                }
            }
        }
        Ok(Self { d, k, frame })
    }

    /// Projection of the plane onto the line at angle `theta`.
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { d: 2, k: 1, frame: vec![c, s] }
    }

    /// The first `k` coordinates.
    pub fn coordinate(d: usize, k: usize) -> Result<Self> {
        let mut frame = vec![0.0; k * d];
        for a in 0..k.min(d) {
            frame[a * d + a] = 1.0;
        }
        Self::new(d, k, frame)
    }

    /// The first `k` rows of a rotation.
    pub fn from_rotation(k: usize, rot: &Rotation) -> Result<Self> {
        let d = rot.dim();
        let m = rot.matrix();
        let mut p = Self::new(d, k, m[..k * d].to_vec());
        if p.is_err() {
            let mut r = rot.clone();
            r.reorthonormalize();
            p = Self::new(d, k, r.matrix()[..k * d].to_vec());
        }
        p
    }
}

/// `pi O` applied to every point; weights, errors and words carried over.
pub fn project(cloud: &PointCloud, spec: &ProjectionSpec, rot: Option<&Rotation>) -> Result<PointCloud> {
    if cloud.dim() != spec.d || rot.is_some_and(|r| r.dim() != spec.d) {
        return param("projection and cloud dimensions differ");
    }
    let (d, k) = (spec.d, spec.k);
    let combined: Vec<f64> = match rot {
        None => spec.frame.clone(),
        Some(r) => {
            let m = r.matrix();
            let mut c = vec![0.0; k * d];
            for a in 0..k {
                for j in 0..d {
                    c[a * d + j] = (0..d).map(|l| spec.frame[a * d + l] * m[l * d + j]).sum();
                }
            }
            c
        }
    };
    let mut out = vec![0.0; cloud.len() * k];
    out.par_chunks_mut(k).enumerate().for_each(|(i, y)| {
        let x = cloud.point(i);
        for a in 0..k {
            y[a] = (0..d).map(|j| combined[a * d + j] * x[j]).sum();
        }
    });
    cloud.with_points(k, out)
}

fn eq_normalizer(c1: f64, rho: f64, q: usize) -> Result<f64> {
    let normalizer = -(c1 * c1).ln() + q as f64 * (1.0 / rho).ln();
    if normalizer > 0.0 {
        Ok(normalizer)
    } else {
        Err(Error::QTooSmall { normalizer })
    }
}

fn check_eq_inputs(c1: f64, rho: f64) -> Result<()> {
    if !(c1 >= 1.0) {
        return param("C1 must be at least 1");
    }
    if !(rho > 0.0 && rho < 1.0) {
        return param("rho must lie in (0,1)");
    }
    Ok(())
}

/// `e_q(pi, O nu) = H_{C1^2 rho^q}(pi O nu) / (-log C1^2 + q log(1/rho))`
/// for several `q` sharing one projection.
pub fn e_q_values(
    spec: &ProjectionSpec,
    rot: Option<&Rotation>,
    cloud: &PointCloud,
    c1: f64,
    rho: f64,
    qs: &[usize],
) -> Result<Vec<f64>> {
    check_eq_inputs(c1, rho)?;
    let norms: Vec<f64> = qs.iter().map(|&q| eq_normalizer(c1, rho, q)).collect::<Result<_>>()?;
    let radii: Vec<f64> = qs.iter().map(|&q| c1 * c1 * rho.powi(q as i32)).collect();
    let projected = project(cloud, spec, rot)?;
    let curve = scaling_entropy_curve(&projected, &radii, None)?;
    Ok(curve.iter().zip(&norms).map(|(e, n)| e.h / n).collect())
}

pub fn e_q(
    spec: &ProjectionSpec,
    rot: Option<&Rotation>,
    cloud: &PointCloud,
    c1: f64,
    rho: f64,
    q: usize,
) -> Result<f64> {
    Ok(e_q_values(spec, rot, cloud, c1, rho, &[q])?[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqEstimate {
    pub q: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// `E_q`: the average of `e_q(pi, O nu)` over `n_rotations` Haar rotations,
/// the same rotations for every `q`.
pub fn expected_e_q(
    spec: &ProjectionSpec,
    cloud: &PointCloud,
    c1: f64,
    rho: f64,
    qs: &[usize],
    n_rotations: usize,
    seed: u64,
) -> Result<Vec<EqEstimate>> {
    if n_rotations < 8 {
        return param("E_q needs at least 8 rotations");
    }
    check_eq_inputs(c1, rho)?;
    for &q in qs {
        eq_normalizer(c1, rho, q)?;
    }
    let rows: Vec<Vec<f64>> = (0..n_rotations as u64)
        .into_par_iter()
        .map(|k| {
            let rot = haar_rotation(spec.d, &mut stream(seed, Purpose::Rotations, k));
            e_q_values(spec, Some(&rot), cloud, c1, rho, qs)
        })
        .collect::<Result<_>>()?;
    let n = n_rotations as f64;
    Ok(qs
        .iter()
        .enumerate()
        .map(|(j, &q)| {
            let vals: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            EqEstimate { q, mean, stderr: (var / n).sqrt() }
        })
        .collect())
}

/// Angles `j pi / n` for `j = 0..n`.
pub fn sweep_angles(n: usize) -> Vec<f64> {
    (0..n).map(|j| j as f64 * std::f64::consts::PI / n as f64).collect()
}

/// Seeded Haar frames for `(d, k)` other than `(2, 1)`.
pub fn sweep_frames(d: usize, k: usize, count: usize, seed: u64) -> Result<Vec<ProjectionSpec>> {
    (0..count as u64)
        .map(|j| ProjectionSpec::from_rotation(k, &haar_rotation(d, &mut stream(seed, Purpose::Rotations, j))))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    /// The angle for planar line projections, `NaN` otherwise.
    pub angle: f64,
    pub dim_e_hat: f64,
    pub ci_halfwidth: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub beta_ref: f64,
}

impl SweepResult {
    pub fn min(&self) -> f64 {
        self.entries.iter().map(|e| e.dim_e_hat).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.dim_e_hat).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn median(&self) -> f64 {
        let mut v: Vec<f64> = self.entries.iter().map(|e| e.dim_e_hat).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// Entropy dimension of the cloud projected along every direction.
pub fn projection_sweep(
    cloud: &PointCloud,
    directions: &[ProjectionSpec],
    radii: &[f64],
    beta_ref: f64,
) -> Result<SweepResult> {
    let entries = directions
        .par_iter()
        .map(|spec| {
            let projected = project(cloud, spec, None)?;
            let est = entropy_dimension(&projected, radii)?;
            let angle = if spec.d == 2 && spec.k == 1 { spec.frame[1].atan2(spec.frame[0]) } else { f64::NAN };
            Ok(SweepEntry {
                angle,
                dim_e_hat: est.dim_e_hat,
                ci_halfwidth: est.ci_halfwidth,
                r_min: est.window.0,
                r_max: est.window.1,
                n_samples: cloud.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { entries, beta_ref })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinDistance {
    pub estimate: DimensionEstimate,
    /// Mass of the points closer than `eps` to the pin.
    pub excluded_mass: f64,
}

/// Entropy dimension of `{|x - a|}` with points closer than `eps` to the pin
/// removed. Warns when more than 10% of the mass is removed.
pub fn pin_distance_dimension(cloud: &PointCloud, a: &[f64], radii: &[f64], eps: f64) -> Result<PinDistance> {
    if a.len() != cloud.dim() {
        return param("pin has the wrong dimension");
    }
    let dist_to_pin = |p: &[f64]| p.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let (kept, excluded_mass) = cloud.filter(|p| dist_to_pin(p) >= eps)?;
    if excluded_mass > 0.1 {
        warn!("pin exclusion removed {:.1}% of the mass", 100.0 * excluded_mass);
    }
    let distances: Vec<f64> = (0..kept.len()).map(|k| dist_to_pin(kept.point(k))).collect();
    let line = kept.with_points(1, distances)?;
    Ok(PinDistance { estimate: entropy_dimension(&line, radii)?, excluded_mass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaRef {
    /// `min(k, dim)`.
    pub beta: f64,
    pub dim: f64,
    /// The reference came from the cloud itself rather than a formula.
    pub self_referential: bool,
    pub note: String,
}

/// `beta = min(k, dim Phi mu)`: entropy over Lyapunov exponent for
/// similarity systems with product measures (exact under the open set
/// condition), the mean local dimension of the cloud otherwise.
pub fn beta_reference(
    system: &ConformalSystem,
    phi: &Potential,
    k: usize,
    cloud: &PointCloud,
    radii: &[f64],
    seed: u64,
) -> Result<BetaRef> {
    if let (crate::conformal::Family::Similarity(maps), Some(p)) = (system.family(), phi.bernoulli_weights()) {
        let h: f64 = -p.iter().map(|x| x * x.ln()).sum::<f64>();
        let chi: f64 = -p.iter().zip(maps).map(|(x, m)| x * m.ratio.ln()).sum::<f64>();
        let dim = h / chi;
        return Ok(BetaRef {
            beta: dim.min(k as f64),
            dim,
            self_referential: false,
            note: "entropy / Lyapunov exponent; exact when the open set condition holds".into(),
        });
    }
    let probes = exactness_probe(cloud, radii, 100, seed)?;
    let dim = probes.iter().sum::<f64>() / probes.len() as f64;
    Ok(BetaRef {
        beta: dim.min(k as f64),
        dim,
        self_referential: true,
        note: "mean local dimension of the cloud over 100 points".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::scaling_entropy;
    use rand::Rng;

    fn uniform_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
        let mut rng = stream(seed, Purpose::Probe, 0);
        PointCloud::uniform(dim, (0..n * dim).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    /// Middle-third Cantor points from base-3 digits in {0, 2}.
    fn cantor_cloud(n: usize, depth: usize, seed: u64) -> PointCloud {
        let mut rng = stream(seed, Purpose::Probe, 1);
        let pts = (0..n)
            .map(|_| {
                let mut x = 0.0;
                let mut scale = 1.0 / 3.0;
                for _ in 0..depth {
                    if rng.random::<bool>() {
                        x += 2.0 * scale;
                    }
                    scale /= 3.0;
                }
                x
            })
            .collect();
        PointCloud::uniform(1, pts).unwrap()
    }

    fn third_powers(a: i32, b: i32) -> Vec<f64> {
        (a..=b).map(|k| 3f64.powi(-k)).collect()
    }

    #[test]
    fn uniform_interval_entropy_matches_closed_form() {
        let r: f64 = 0.01;
        let closed = -((1.0 + 2.0 * r) * (2.0 * r).ln() - 2.0 * r * r.ln() - 2.0 * r);
        assert!((closed - 3.91816).abs() < 1e-5);
        let est = scaling_entropy(&uniform_cloud(200_000, 1, 3), r).unwrap();
        assert!((est.h - closed).abs() <= 3.0 * est.jackknife_err, "{} vs {closed} +- {}", est.h, est.jackknife_err);
    }

    #[test]
    fn cantor_entropy_dimension() {
        let cloud = cantor_cloud(200_000, 14, 5);
        let est = entropy_dimension(&cloud, &third_powers(2, 8)).unwrap();
        let target = 2f64.ln() / 3f64.ln();
        assert!((est.dim_e_hat - target).abs() < 0.03, "{}", est.dim_e_hat);
        let at_zero = local_dimension(&cloud, &[0.0], &third_powers(2, 8)).unwrap();
        assert!((at_zero - target).abs() < 0.05, "{at_zero}");
    }

    #[test]
    fn cantor_e_q_approaches_dimension() {
        let cloud = cantor_cloud(100_000, 16, 6);
        let spec = ProjectionSpec::coordinate(1, 1).unwrap();
        let target = 2f64.ln() / 3f64.ln();
        let vals = e_q_values(&spec, None, &cloud, 1.0, 1.0 / 3.0, &[2, 4, 6, 8]).unwrap();
        // H at r = 3^-q counts the two or three level-q intervals within reach
        for (v, q) in vals.iter().zip([2.0, 4.0, 6.0, 8.0]) {
            let lo = (q * 2f64.ln() - 3f64.ln()) / (q * 3f64.ln());
            assert!(*v > lo - 0.01 && *v <= target + 0.01, "q={q} e_q={v}");
        }
        assert!((vals[3] - target).abs() < 0.07);
        assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-3));
    }

    #[test]
    fn square_dimension_and_projections() {
        let cloud = uniform_cloud(100_000, 2, 8);
        let radii = RadiusGrid { r_max: 0.1, r_min: 0.02, count: 6, geometric: true }.radii().unwrap();
        let est = entropy_dimension(&cloud, &radii).unwrap();
        assert!((est.dim_e_hat - 2.0).abs() < 0.05, "{}", est.dim_e_hat);
        let local = local_dimension(&cloud, &[0.5, 0.5], &radii).unwrap();
        assert!((local - 2.0).abs() < 0.1);
        let line = project(&cloud, &ProjectionSpec::from_angle(0.3), None).unwrap();
        let lr = RadiusGrid { r_max: 0.05, r_min: 0.002, count: 6, geometric: true }.radii().unwrap();
        assert!((entropy_dimension(&line, &lr).unwrap().dim_e_hat - 1.0).abs() < 0.05);
    }

    #[test]
    fn identity_projection_is_isometric_and_rotation_associates() {
        let cloud = uniform_cloud(2000, 2, 1);
        let same = project(&cloud, &ProjectionSpec::coordinate(2, 2).unwrap(), None).unwrap();
        assert_eq!(same.points(), cloud.points());
        let rot = Rotation::from_angle(0.7);
        let spec = ProjectionSpec::from_angle(0.2);
        let a = project(&cloud, &spec, Some(&rot)).unwrap();
        let rotated = project(&cloud, &ProjectionSpec::from_rotation(2, &rot).unwrap(), None).unwrap();
        let b = project(&rotated, &spec, None).unwrap();
        for (x, y) in a.points().iter().zip(b.points()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn product_projects_to_factor() {
        let c = cantor_cloud(1000, 10, 2);
        let d = cantor_cloud(1000, 10, 3);
        let pts: Vec<f64> = (0..1000).flat_map(|k| [c.point(k)[0], d.point(k)[0]]).collect();
        let prod = PointCloud::uniform(2, pts).unwrap();
        let axis = project(&prod, &ProjectionSpec::coordinate(2, 1).unwrap(), None).unwrap();
        assert_eq!(axis.points(), c.points());
    }

    #[test]
    fn point_mass_has_zero_e_q() {
        let cloud = PointCloud::uniform(2, vec![0.3, 0.4]).unwrap();
        let spec = ProjectionSpec::from_angle(1.0);
        assert_eq!(e_q(&spec, None, &cloud, 1.0, 0.5, 3).unwrap(), 0.0);
        assert!(matches!(e_q(&spec, None, &cloud, 3.0, 0.5, 1), Err(Error::QTooSmall { .. })));
    }

    #[test]
    fn pin_distance_examples() {
        // uniform on a circle around the pin collapses to an atom
        let n = 5000;
        let pts: Vec<f64> = (0..n)
            .flat_map(|k| {
                let t = k as f64 / n as f64 * std::f64::consts::TAU;
                [2.0 + t.cos(), 1.0 + t.sin()]
            })
            .collect();
        let circle = PointCloud::uniform(2, pts).unwrap();
        let radii = third_powers(2, 6);
        let pin = pin_distance_dimension(&circle, &[2.0, 1.0], &radii, 1e-3).unwrap();
        assert!(pin.estimate.dim_e_hat.abs() < 1e-9);

        let square = uniform_cloud(100_000, 2, 12);
        let radii = RadiusGrid { r_max: 0.05, r_min: 0.002, count: 6, geometric: true }.radii().unwrap();
        let pin = pin_distance_dimension(&square, &[0.31, 0.42], &radii, 1e-3).unwrap();
        assert!((pin.estimate.dim_e_hat - 1.0).abs() < 0.05, "{}", pin.estimate.dim_e_hat);
        assert!(pin.excluded_mass < 1e-3);
    }

    #[test]
    fn resolution_and_grid_errors() {
        let cloud = uniform_cloud(100, 1, 1);
        assert!(entropy_dimension(&cloud, &[0.1, 0.05, 0.02]).is_err());
        let pts = cloud.points().to_vec();
        let coarse =
            PointCloud::new(1, pts, cloud.weights().to_vec(), vec![0.01; 100]).unwrap();
        assert!(matches!(
            entropy_dimension(&coarse, &[0.2, 0.1, 0.05, 0.01]),
            Err(Error::Resolution { usable: 3, .. })
        ));
    }

    #[test]
    fn default_grid_respects_neighbour_counts() {
        let cloud = uniform_cloud(50_000, 2, 2);
        let grid = default_radius_grid(&cloud).unwrap();
        // 30 neighbours of 50k uniform points: pi r^2 * 50000 = 30
        let expected = (30.0 / (std::f64::consts::PI * 50_000.0)).sqrt();
        assert!((grid.r_min / expected - 1.0).abs() < 0.25, "{} vs {expected}", grid.r_min);
        assert!((grid.r_max - cloud.diameter() / 8.0).abs() < 1e-15);
    }
}
