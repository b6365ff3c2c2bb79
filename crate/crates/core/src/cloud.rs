//! Weighted point clouds, fixed-radius ball masses and the r-scaling
//! entropy `H_r = -sum_k w_k log nu(B(x_k, r))` with delete-block jackknife
//! errors.

use std::collections::HashMap;

use log::debug;
use rayon::prelude::*;

use crate::error::{param, Result};
use crate::geometry::{dist, MAX_DIM};
use crate::symbolic::{Symbol, Word};

/// Number of contiguous index blocks used by the jackknife.
pub const JACKKNIFE_BLOCKS: usize = 16;

/// Words stored back to back.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordList {
    symbols: Vec<Symbol>,
    offsets: Vec<usize>,
}

impl WordList {
    pub fn new() -> Self {
        Self { symbols: Vec::new(), offsets: vec![0] }
    }

    pub fn push(&mut self, w: &[Symbol]) {
        self.symbols.extend_from_slice(w);
        self.offsets.push(self.symbols.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, k: usize) -> &[Symbol] {
        &self.symbols[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn word(&self, k: usize) -> Word {
        Word::new(self.get(k).to_vec())
    }
}

impl FromIterator<Vec<Symbol>> for WordList {
    fn from_iter<T: IntoIterator<Item = Vec<Symbol>>>(iter: T) -> Self {
        let mut list = WordList::new();
        for w in iter {
            list.push(&w);
        }
        list
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    pos_error: Vec<f64>,
    words: Option<WordList>,
}

impl PointCloud {
    /// `points` is row-major, `dim` coordinates per point.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>, pos_error: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return param(format!("cloud dimension must be in 1..={MAX_DIM}"));
        }
        let n = weights.len();
        if n == 0 || points.len() != n * dim || pos_error.len() != n {
            return param("cloud arrays have inconsistent lengths");
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return param("cloud weights must be positive");
        }
        if points.iter().any(|x| !x.is_finite()) {
            return param("cloud points must be finite");
        }
        let total = compensated_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return param(format!("cloud weights sum to {total}, not 1"));
        }
        Ok(Self { dim, points, weights, pos_error, words: None })
    }

    /// Equal weights `1/N` and zero position error.
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        let n = points.len() / dim.max(1);
        Self::new(dim, points, vec![1.0 / n as f64; n], vec![0.0; n])
    }

    pub fn with_words(mut self, words: WordList) -> Result<Self> {
        if words.len() != self.len() {
            return param("word list length differs from cloud size");
        }
        self.words = Some(words);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pos_error(&self) -> &[f64] {
        &self.pos_error
    }

    pub fn words(&self) -> Option<&WordList> {
        self.words.as_ref()
    }

    pub fn max_pos_error(&self) -> f64 {
        self.pos_error.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest resolvable radius: twice the largest position error.
    pub fn resolution_floor(&self) -> f64 {
        2.0 * self.max_pos_error()
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.points.chunks_exact(self.dim) {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Diagonal of the bounding box (an upper bound for the diameter).
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        dist(&lo, &hi)
    }

    /// Same weights and provenance with new coordinates.
    pub fn with_points(&self, dim: usize, points: Vec<f64>) -> Result<Self> {
        let mut c = Self::new(dim, points, self.weights.clone(), self.pos_error.clone())?;
        c.words = self.words.clone();
        Ok(c)
    }

    /// Drops points failing `keep` and renormalizes; returns the cloud and
    /// the removed mass.
    pub fn filter<F: Fn(&[f64]) -> bool>(&self, keep: F) -> Result<(Self, f64)> {
        let mut pts = Vec::new();
        let mut w = Vec::new();
        let mut e = Vec::new();
        let mut words = self.words.as_ref().map(|_| WordList::new());
        for k in 0..self.len() {
            if keep(self.point(k)) {
                pts.extend_from_slice(self.point(k));
                w.push(self.weights[k]);
                e.push(self.pos_error[k]);
                if let (Some(out), Some(src)) = (words.as_mut(), self.words.as_ref()) {
                    out.push(src.get(k));
                }
            }
        }
        let kept = compensated_sum(&w);
        if w.is_empty() {
            return param("filter removed every point");
        }
        let w: Vec<f64> = w.iter().map(|x| x / kept).collect();
        let mut c = Self::new(self.dim, pts, w, e)?;
        c.words = words;
        Ok((c, 1.0 - kept))
    }
}

/// Neumaier summation.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &v in xs {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

/// Mass of a closed ball with a resolution flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallMass {
    pub mass: f64,
    /// `r` is below twice the largest position error.
    pub below_resolution: bool,
}

/// `nu(B(x, r))` for the closed ball, by a linear scan.
pub fn ball_mass(cloud: &PointCloud, x: &[f64], r: f64) -> Result<BallMass> {
    if !(r > 0.0) {
        return param("ball radius must be positive");
    }
    if x.len() != cloud.dim {
        return param("query point has the wrong dimension");
    }
    let r2 = r * r;
    let mass = cloud
        .points
        .chunks_exact(cloud.dim)
        .zip(&cloud.weights)
        .filter(|(p, _)| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2)
        .map(|(_, w)| w)
        .sum();
    Ok(BallMass { mass, below_resolution: r < cloud.resolution_floor() })
}

/// Uniform grid with cell size `h`. Coordinates, weights and jackknife
/// blocks are copied into cell order so that scans are contiguous.
pub struct GridIndex {
    dim: usize,
    h: f64,
    origin: Vec<f64>,
    pts: Vec<f64>,
    weights: Vec<f64>,
    blocks: Vec<u8>,
    ids: Vec<u32>,
    cells: HashMap<[i64; MAX_DIM], (u32, u32)>,
}

impl GridIndex {
    pub fn new(cloud: &PointCloud, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return param("grid cell size must be positive");
        }
        let (origin, _) = cloud.bounding_box();
        let n = cloud.len();
        let mut keyed: Vec<([i64; MAX_DIM], u32)> =
            (0..n).map(|k| (cell_of(cloud.point(k), &origin, h), k as u32)).collect();
        keyed.par_sort_unstable();
        let mut cells = HashMap::new();
        let mut start = 0usize;
        for k in 1..=keyed.len() {
            if k == keyed.len() || keyed[k].0 != keyed[start].0 {
                cells.insert(keyed[start].0, (start as u32, k as u32));
                start = k;
            }
        }
        let ids: Vec<u32> = keyed.into_iter().map(|(_, k)| k).collect();
        let pts = ids.iter().flat_map(|&k| cloud.point(k as usize).iter().copied()).collect();
        let weights = ids.iter().map(|&k| cloud.weights[k as usize]).collect();
        let blocks = ids.iter().map(|&k| block_of(k as usize, n) as u8).collect();
        Ok(Self { dim: cloud.dim, h, origin, pts, weights, blocks, ids, cells })
    }

    /// Calls `visit(s)` for every cell-ordered slot within `r` of `x` and
    /// returns the number of points scanned.
    fn scan<F: FnMut(usize)>(&self, x: &[f64], r: f64, mut visit: F) -> usize {
        let d = self.dim;
        let reach = (r / self.h).ceil() as i64;
        let center = cell_of(x, &self.origin, self.h);
        let r2 = r * r;
        let span = (2 * reach + 1) as usize;
        let total = span.pow(d as u32);
        let mut key = [0i64; MAX_DIM];
        let mut scanned = 0;
        for mut code in 0..total {
            for k in 0..d {
                key[k] = center[k] - reach + (code % span) as i64;
                code /= span;
            }
            if let Some(&(a, b)) = self.cells.get(&key) {
                let (a, b) = (a as usize, b as usize);
                scanned += b - a;
                for (s, p) in (a..b).zip(self.pts[a * d..b * d].chunks_exact(d)) {
                    let d2: f64 = p.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum();
                    if d2 <= r2 {
                        visit(s);
                    }
                }
            }
        }
        scanned
    }

    /// Calls `visit(j)` for every point `j` with `|x_j - x| <= r`.
    pub fn for_each_within<F: FnMut(usize)>(&self, x: &[f64], r: f64, mut visit: F) {
        self.scan(x, r, |s| visit(self.ids[s] as usize));
    }

    pub fn mass(&self, x: &[f64], r: f64) -> f64 {
        let mut m = 0.0;
        self.scan(x, r, |s| m += self.weights[s]);
        m
    }
}

fn cell_of(x: &[f64], origin: &[f64], h: f64) -> [i64; MAX_DIM] {
    let mut key = [0i64; MAX_DIM];
    for k in 0..x.len() {
        key[k] = ((x[k] - origin[k]) / h).floor() as i64;
    }
    key
}

/// One point of an entropy curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyEstimate {
    pub r: f64,
    pub h: f64,
    /// Delete-block jackknife standard error.
    pub jackknife_err: f64,
    /// `H_r` with each block of sample indices deleted in turn.
    pub replicates: Vec<f64>,
    pub below_resolution: bool,
    /// Number of ball centres averaged over.
    pub centers: usize,
}

fn block_of(k: usize, n: usize) -> usize {
    k * JACKKNIFE_BLOCKS / n
}

fn block_weights(cloud: &PointCloud) -> [f64; JACKKNIFE_BLOCKS] {
    let mut wb = [0.0; JACKKNIFE_BLOCKS];
    for (k, w) in cloud.weights.iter().enumerate() {
        wb[block_of(k, cloud.len())] += w;
    }
    wb
}

pub(crate) fn jackknife_sigma(replicates: &[f64]) -> f64 {
    let b = replicates.len() as f64;
    if replicates.len() < 2 {
        return 0.0;
    }
    let mean = replicates.iter().sum::<f64>() / b;
    ((b - 1.0) / b * replicates.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Running sums kept as double-double so that window masses of a few
/// points out of millions keep full relative precision.
struct PrefixSum {
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl PrefixSum {
    fn new<I: Iterator<Item = f64>>(values: I, n: usize) -> Self {
        let mut hi = Vec::with_capacity(n + 1);
        let mut lo = Vec::with_capacity(n + 1);
        let (mut s, mut c) = (0.0f64, 0.0f64);
        hi.push(0.0);
        lo.push(0.0);
        for v in values {
            let t = s + v;
            let e = if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
            s = t;
            c += e;
            hi.push(s);
            lo.push(c);
        }
        Self { hi, lo }
    }

    /// Sum over `[a, b)`.
    fn range(&self, a: usize, b: usize) -> f64 {
        (self.hi[b] - self.hi[a]) + (self.lo[b] - self.lo[a])
    }
}

/// Accumulates the full and per-block-deleted entropy sums.
#[derive(Clone)]
struct EntropyAccumulator {
    full: f64,
    deleted: [f64; JACKKNIFE_BLOCKS],
}

impl EntropyAccumulator {
    fn zero() -> Self {
        Self { full: 0.0, deleted: [0.0; JACKKNIFE_BLOCKS] }
    }

    fn merge(mut self, o: Self) -> Self {
        self.full += o.full;
        for b in 0..JACKKNIFE_BLOCKS {
            self.deleted[b] += o.deleted[b];
        }
        self
    }
}

fn finish(
    acc: EntropyAccumulator,
    blocks: &Blocks,
    center_mass: f64,
    center_block_mass: &[f64; JACKKNIFE_BLOCKS],
    r: f64,
    floor: f64,
    centers: usize,
) -> EntropyEstimate {
    let h = acc.full / center_mass;
    let replicates: Vec<f64> = (0..JACKKNIFE_BLOCKS)
        .map(|b| {
            let denom = center_mass - center_block_mass[b];
            if denom > 0.0 && blocks.mass[b] < 1.0 {
                acc.deleted[b] / denom
            } else {
                h
            }
        })
        .collect();
    EntropyEstimate {
        r,
        h: h.max(0.0),
        jackknife_err: jackknife_sigma(&replicates),
        replicates,
        below_resolution: r < floor,
        centers,
    }
}

/// Point visits allowed per radius on the grid path before ball centres
/// are thinned.
pub const GRID_WORK_BUDGET: f64 = 2e8;
/// Fewest centres kept when thinning.
pub const MIN_CENTERS: usize = 4096;
const PILOT_CENTERS: usize = 256;

/// `H_r` at several radii. Ball centres are `m` evenly strided sample
/// indices, `m = max_centers` or all points when `None`; on the grid path
/// `m` is further reduced so that the scan stays within
/// [`GRID_WORK_BUDGET`] (never below [`MIN_CENTERS`]). Masses always use
/// the whole cloud.
pub fn scaling_entropy_curve(
    cloud: &PointCloud,
    radii: &[f64],
    max_centers: Option<usize>,
) -> Result<Vec<EntropyEstimate>> {
    if radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return param("entropy radii must be positive");
    }
    let centers = max_centers.unwrap_or(cloud.len()).clamp(1, cloud.len());
    if cloud.dim == 1 {
        Ok(entropy_1d(cloud, radii, centers))
    } else {
        radii.iter().map(|&r| entropy_grid(cloud, r, centers)).collect()
    }
}

/// `H_r` of the cloud at one radius.
pub fn scaling_entropy(cloud: &PointCloud, r: f64) -> Result<EntropyEstimate> {
    Ok(scaling_entropy_curve(cloud, &[r], None)?.remove(0))
}

/// `j`-th of `m` evenly strided indices in `0..n`.
fn strided(j: usize, n: usize, m: usize) -> usize {
    (j as u128 * n as u128 / m as u128) as usize
}

fn is_strided(k: usize, n: usize, m: usize) -> bool {
    if m == n {
        return true;
    }
    let j = (k as u128 * m as u128).div_ceil(n as u128) as usize;
    j < m && strided(j, n, m) == k
}

fn center_masses(cloud: &PointCloud, m: usize) -> (f64, [f64; JACKKNIFE_BLOCKS]) {
    let n = cloud.len();
    let mut per_block = [0.0; JACKKNIFE_BLOCKS];
    for j in 0..m {
        let k = strided(j, n, m);
        per_block[block_of(k, n)] += cloud.weights[k];
    }
    (per_block.iter().sum(), per_block)
}

fn entropy_grid(cloud: &PointCloud, r: f64, centers: usize) -> Result<EntropyEstimate> {
    let n = cloud.len();
    let grid = GridIndex::new(cloud, r)?;
    let blocks = Blocks::new(cloud);
    let pilot = PILOT_CENTERS.min(n);
    let scanned: usize = (0..pilot)
        .into_par_iter()
        .map(|j| grid.scan(cloud.point(strided(j, n, pilot)), r, |_| {}))
        .sum();
    let per_center = (scanned as f64 / pilot as f64).max(1.0);
    let affordable = (GRID_WORK_BUDGET / per_center) as usize;
    let m = centers.min(affordable.max(MIN_CENTERS));
    if m < centers {
        debug!("r = {r:e}: {per_center:.0} points per ball, using {m} of {centers} centres");
    }
    let acc = (0..m)
        .into_par_iter()
        .fold(EntropyAccumulator::zero, |mut acc, j| {
            let k = strided(j, n, m);
            let mut per_block = [0.0; JACKKNIFE_BLOCKS];
            grid.scan(cloud.point(k), r, |s| per_block[grid.blocks[s] as usize] += grid.weights[s]);
            let mass: f64 = per_block.iter().sum();
            accumulate(&mut acc, cloud.weights[k], mass, &per_block, &blocks, block_of(k, n));
            acc
        })
        .reduce(EntropyAccumulator::zero, EntropyAccumulator::merge);
    let (cm, cb) = center_masses(cloud, m);
    Ok(finish(acc, &blocks, cm, &cb, r, cloud.resolution_floor(), m))
}

/// Per-block quantities shared by every centre.
struct Blocks {
    mass: [f64; JACKKNIFE_BLOCKS],
    log_kept: [f64; JACKKNIFE_BLOCKS],
}

impl Blocks {
    fn new(cloud: &PointCloud) -> Self {
        let mass = block_weights(cloud);
        Self { log_kept: mass.map(|w| (1.0 - w).ln()), mass }
    }
}

/// `-ln(1 - x)` for `0 <= x <= 1/8` to within `2e-9` relative.
fn neg_ln_1m(x: f64) -> f64 {
    const C: [f64; 9] = [1.0, 1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0, 1.0 / 5.0, 1.0 / 6.0, 1.0 / 7.0, 1.0 / 8.0, 1.0 / 9.0];
    let mut p = C[8];
    for c in C[..8].iter().rev() {
        p = p * x + c;
    }
    p * x
}

fn accumulate(
    acc: &mut EntropyAccumulator,
    w: f64,
    m: f64,
    per_block: &[f64; JACKKNIFE_BLOCKS],
    blocks: &Blocks,
    own_block: usize,
) {
    let m = snap_to_one(m);
    let neg_ln_m = -m.ln();
    let inv_m = 1.0 / m;
    acc.full += w * neg_ln_m;
    for b in 0..JACKKNIFE_BLOCKS {
        let wb = blocks.mass[b];
        if b == own_block || wb >= 1.0 {
            continue;
        }
        let removed = per_block[b].max(0.0);
        // masses renormalized to the retained sample
        let h = if m < 0.5 && removed <= 0.125 * m && m - removed >= w {
            neg_ln_m + neg_ln_1m(removed * inv_m) + blocks.log_kept[b]
        } else {
            -snap_to_one((m - removed).max(w) / (1.0 - wb)).ln()
        };
        acc.deleted[b] += w * h;
    }
}

/// Masses within summation rounding of 1 are exactly 1, so full balls
/// contribute exactly zero entropy.
fn snap_to_one(m: f64) -> f64 {
    if m > 1.0 - 1e-12 {
        1.0
    } else {
        m
    }
}

const CHUNK_1D: usize = 1 << 16;

/// Sorted sweep: each centre's ball is a window of the sorted sample. The
/// total mass comes from a double-double prefix sum; per-block masses are
/// running window sums restarted every `CHUNK_1D` centres.
fn entropy_1d(cloud: &PointCloud, radii: &[f64], centers: usize) -> Vec<EntropyEstimate> {
    let n = cloud.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.par_sort_unstable_by(|&a, &b| cloud.points[a as usize].total_cmp(&cloud.points[b as usize]));
    let xs: Vec<f64> = order.iter().map(|&k| cloud.points[k as usize]).collect();
    let ws: Vec<f64> = order.iter().map(|&k| cloud.weights[k as usize]).collect();
    let labels: Vec<u8> = order.iter().map(|&k| block_of(k as usize, n) as u8).collect();
    let prefix = PrefixSum::new(ws.iter().copied(), n);
    let blocks = Blocks::new(cloud);
    let (cm, cb) = center_masses(cloud, centers);
    radii
        .iter()
        .map(|&r| {
            let acc = (0..n.div_ceil(CHUNK_1D))
                .into_par_iter()
                .map(|c| {
                    let mut acc = EntropyAccumulator::zero();
                    let s0 = c * CHUNK_1D;
                    let mut a = xs.partition_point(|&x| x < xs[s0] - r);
                    let mut b = a;
                    let mut per_block = [0.0; JACKKNIFE_BLOCKS];
                    for s in s0..(s0 + CHUNK_1D).min(n) {
                        while b < n && xs[b] <= xs[s] + r {
                            per_block[labels[b] as usize] += ws[b];
                            b += 1;
                        }
                        while xs[a] < xs[s] - r {
                            per_block[labels[a] as usize] -= ws[a];
                            a += 1;
                        }
                        let k = order[s] as usize;
                        if is_strided(k, n, centers) {
                            let m = prefix.range(a, b);
                            accumulate(&mut acc, ws[s], m, &per_block, &blocks, labels[s] as usize);
                        }
                    }
                    acc
                })
                .reduce(EntropyAccumulator::zero, EntropyAccumulator::merge);
            finish(acc, &blocks, cm, &cb, r, cloud.resolution_floor(), centers)
        })
        .collect()
}
