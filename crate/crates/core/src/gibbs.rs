//! Potentials on the full shift, Birkhoff sums, topological pressure,
//! Gibbs cylinder weights with their sandwich and quasi-Bernoulli
//! diagnostics, the Bowen root, and sampling of `Phi mu` as a point cloud.
//!
//! Finite-range potentials (Bernoulli, constant, depth-2 Markov, and the
//! geometric potential of a similarity system) use their exact Gibbs
//! measures: product measures and Perron-Frobenius Markov measures. The
//! geometric potential of a non-similarity system uses periodic
//! representatives `S_n phi(i i i ...)`.

use std::sync::Arc;

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;

use crate::cloud::{PointCloud, WordList};
use crate::conformal::ConformalSystem;
use crate::error::{param, Error, Result};
use crate::geometry::MAX_DIM;
use crate::rng::{counter_hash, stream, Purpose};
use crate::symbolic::{Alphabet, InfiniteWord, RefinedAlphabet, Symbol, Word};

/// Largest cylinder table built in memory.
pub const MAX_TABLE: usize = 1 << 22;
const MAX_PAIRS: usize = 1 << 20;
/// Levels used for the pressure of geometric potentials on non-similarity
/// systems.
pub const TAIL_LEVELS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    Bernoulli(Vec<f64>),
    Constant(f64),
    /// `phi(i) = table[i_1][i_2]`.
    Markov(Vec<Vec<f64>>),
    /// `phi(i) = s log r_{i_1}(Phi(sigma i))`.
    Geometric(f64),
}

/// Certificate `Var_n(phi) <= kappa beta^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hoelder {
    pub kappa: f64,
    pub beta: f64,
}

impl Hoelder {
    pub fn var_bound(&self, n: usize) -> f64 {
        self.kappa * self.beta.powi(n as i32)
    }

    /// `kappa beta^a / (1 - beta) + kappa beta^b`, the log of the
    /// quasi-Bernoulli constant for words of lengths `a` and `b`.
    pub fn quasi_bernoulli_log_bound(&self, a: usize, b: usize) -> f64 {
        self.kappa * self.beta.powi(a as i32) / (1.0 - self.beta) + self.var_bound(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Perron {
    log_lambda: f64,
    log_u: Vec<f64>,
    log_v: Vec<f64>,
    log_uv: f64,
}

#[derive(Debug, Clone)]
enum Form {
    /// `phi(i) = w[i_1]`; `log_p` is the Gibbs (Bernoulli) measure.
    Product { w: Vec<f64>, log_p: Vec<f64> },
    Pair { table: Vec<Vec<f64>>, perron: Perron },
    Tail { s: f64 },
}

#[derive(Debug, Clone)]
pub struct Potential {
    kind: PotentialKind,
    m: usize,
    hoelder: Hoelder,
    form: Form,
    system: Option<Arc<ConformalSystem>>,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn perron(table: &[Vec<f64>]) -> Perron {
    let m = table.len();
    let shift = table.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let a: Vec<Vec<f64>> = table.iter().map(|row| row.iter().map(|t| (t - shift).exp()).collect()).collect();
    let iterate = |transpose: bool| -> (f64, Vec<f64>) {
        let mut x = vec![1.0 / m as f64; m];
        let mut lambda = 0.0;
        for _ in 0..100_000 {
            let mut y = vec![0.0; m];
            for i in 0..m {
                for j in 0..m {
                    y[i] += if transpose { a[j][i] } else { a[i][j] } * x[j];
                }
            }
            let norm: f64 = y.iter().sum();
            for v in &mut y {
                *v /= norm;
            }
            let moved = y.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            x = y;
            lambda = norm;
            if moved < 1e-16 {
                break;
            }
        }
        (lambda, x)
    };
    let (lambda, v) = iterate(false);
    let (_, u) = iterate(true);
    let uv: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    Perron {
        log_lambda: lambda.ln() + shift,
        log_u: u.iter().map(|x| x.ln()).collect(),
        log_v: v.iter().map(|x| x.ln()).collect(),
        log_uv: uv.ln(),
    }
}

impl Potential {
    pub fn bernoulli(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return param("bernoulli needs at least two probabilities");
        }
        if p.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return param("bernoulli probabilities must lie in (0,1)");
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return param(format!("bernoulli probabilities sum to {total}, not 1"));
        }
        let log_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
        Ok(Self {
            m: p.len(),
            kind: PotentialKind::Bernoulli(p),
            hoelder: Hoelder { kappa: 0.0, beta: 0.5 },
            form: Form::Product { w: log_p.clone(), log_p },
            system: None,
        })
    }

    pub fn constant(c: f64, m: usize) -> Result<Self> {
        Alphabet::new(m)?;
        if !c.is_finite() {
            return param("constant potential must be finite");
        }
        Ok(Self {
            m,
            kind: PotentialKind::Constant(c),
            hoelder: Hoelder { kappa: 0.0, beta: 0.5 },
            form: Form::Product { w: vec![c; m], log_p: vec![-(m as f64).ln(); m] },
            system: None,
        })
    }

    /// Depth-2 potential `phi(i) = table[i_1][i_2]`. The certificate is
    /// `beta = 1/2`, `kappa = 2 Var_1`, so that `kappa beta = Var_1`.
    pub fn markov(table: Vec<Vec<f64>>) -> Result<Self> {
        let m = table.len();
        Alphabet::new(m)?;
        if table.iter().any(|row| row.len() != m) {
            return param("markov table must be square");
        }
        if table.iter().flatten().any(|t| !t.is_finite()) {
            return param("markov table entries must be finite");
        }
        let var1 = table
            .iter()
            .map(|row| {
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .fold(0.0, f64::max);
        Ok(Self {
            m,
            kind: PotentialKind::Markov(table.clone()),
            hoelder: Hoelder { kappa: 2.0 * var1, beta: 0.5 },
            form: Form::Pair { perron: perron(&table), table },
            system: None,
        })
    }

    /// `phi(i) = s log r_{i_1}(Phi(sigma i))` for a contracting system.
    pub fn geometric(system: Arc<ConformalSystem>, s: f64) -> Result<Self> {
        if !s.is_finite() {
            return param("geometric exponent must be finite");
        }
        let g = system.geometry();
        if !g.contractive {
            return param("geometric potential needs a contracting system");
        }
        let m = system.maps();
        let (form, hoelder) = match system.family() {
            crate::conformal::Family::Similarity(maps) => {
                let w: Vec<f64> = maps.iter().map(|mp| s * mp.ratio.ln()).collect();
                let p = log_sum_exp(&w);
                let log_p = w.iter().map(|x| x - p).collect();
                (Form::Product { w, log_p }, Hoelder { kappa: 0.0, beta: 0.5 })
            }
            crate::conformal::Family::Julia { .. } => {
                let lip = system.log_ratio_lipschitz();
                let kappa = s.abs() * lip * g.c2 * system.diameter() / g.r_star;
                (Form::Tail { s }, Hoelder { kappa, beta: g.r_star })
            }
        };
        Ok(Self { m, kind: PotentialKind::Geometric(s), hoelder, form, system: Some(system) })
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn alphabet_size(&self) -> usize {
        self.m
    }

    pub fn hoelder(&self) -> Hoelder {
        self.hoelder
    }

    /// Symbol probabilities when the Gibbs measure is a product measure.
    pub fn bernoulli_weights(&self) -> Option<Vec<f64>> {
        match &self.form {
            Form::Product { log_p, .. } => Some(log_p.iter().map(|x| x.exp()).collect()),
            _ => None,
        }
    }

    /// True when cylinder weights are an exact Gibbs measure.
    pub fn is_exact(&self) -> bool {
        !matches!(self.form, Form::Tail { .. })
    }

    /// `Var_n(phi)`: exact for finite-range potentials, the certificate
    /// otherwise.
    pub fn var_n(&self, n: usize) -> f64 {
        match &self.form {
            Form::Product { w, .. } => {
                if n == 0 {
                    spread(w.iter().copied())
                } else {
                    0.0
                }
            }
            Form::Pair { table, .. } => match n {
                0 => spread(table.iter().flatten().copied()),
                1 => self.hoelder.kappa * self.hoelder.beta,
                _ => 0.0,
            },
            Form::Tail { .. } => self.hoelder.var_bound(n),
        }
    }

    fn tail_system(&self) -> &ConformalSystem {
        self.system.as_deref().expect("tail potentials carry their system")
    }

    /// Symbols needed beyond position `n` to evaluate `S_n phi`.
    pub fn lookahead(&self) -> usize {
        match &self.form {
            Form::Product { .. } => 0,
            Form::Pair { .. } => 1,
            Form::Tail { .. } => self.tail_system().depth_for_precision(1e-13),
        }
    }

    /// `phi(i)`.
    pub fn evaluate(&self, i: &InfiniteWord) -> f64 {
        let w = i.take(1 + self.lookahead());
        self.sum_on(w.symbols(), 1)
    }

    /// `S_n phi` on a realized word of length at least `n + lookahead`.
    fn sum_on(&self, word: &[Symbol], n: usize) -> f64 {
        match &self.form {
            Form::Product { w, .. } => word[..n].iter().map(|&a| w[a as usize]).sum(),
            Form::Pair { table, .. } => (0..n).map(|k| table[word[k] as usize][word[k + 1] as usize]).sum(),
            Form::Tail { s } => {
                let sys = self.tail_system();
                let mut y = [0.0; MAX_DIM];
                sys.point_into(&word[n..], &sys.base_point(), &mut y);
                s * log_ratio_walk(sys, &word[..n], &mut y[..sys.dim()])
            }
        }
    }

    /// `S_n phi(i i i ...)` with `n = |i|`.
    pub fn periodic_sum(&self, word: &[Symbol]) -> f64 {
        let n = word.len();
        match &self.form {
            Form::Product { .. } => self.sum_on(word, n),
            Form::Pair { table, .. } => {
                (0..n).map(|k| table[word[k] as usize][word[(k + 1) % n] as usize]).sum()
            }
            Form::Tail { s } => s * periodic_log_ratio(self.tail_system(), word),
        }
    }

    /// Exact `log mu([i])` for finite-range potentials.
    fn exact_log_measure(&self, word: &[Symbol]) -> Option<f64> {
        match &self.form {
            Form::Product { log_p, .. } => Some(word.iter().map(|&a| log_p[a as usize]).sum()),
            Form::Pair { table, perron } => {
                let n = word.len();
                if n == 0 {
                    return Some(0.0);
                }
                let inner: f64 = (0..n - 1).map(|k| table[word[k] as usize][word[k + 1] as usize]).sum();
                Some(
                    perron.log_u[word[0] as usize] + inner - (n - 1) as f64 * perron.log_lambda
                        + perron.log_v[word[n - 1] as usize]
                        - perron.log_uv,
                )
            }
            Form::Tail { .. } => None,
        }
    }

    /// `log mu([i])` up to a level-dependent normalization: exact when
    /// available, `S_n phi(i*) - n P` otherwise.
    pub fn log_measure(&self, word: &[Symbol], p_hat: f64) -> f64 {
        self.exact_log_measure(word)
            .unwrap_or_else(|| self.periodic_sum(word) - word.len() as f64 * p_hat)
    }

    /// Largest `|log mu([i]) - (S_n phi(j) - n P)|` over the continuations
    /// `j` of `i` that are examined: every next symbol for Markov tables,
    /// the periodic word and each `i a a a ...` for tail potentials.
    fn sandwich_deviation(&self, word: &[Symbol], log_mu: f64, p_hat: f64) -> f64 {
        let n = word.len();
        let np = n as f64 * p_hat;
        match &self.form {
            Form::Product { .. } => (log_mu - (self.sum_on(word, n) - np)).abs(),
            Form::Pair { table, .. } => {
                let inner: f64 = (0..n - 1).map(|k| table[word[k] as usize][word[k + 1] as usize]).sum();
                table[word[n - 1] as usize]
                    .iter()
                    .map(|t| (log_mu - (inner + t - np)).abs())
                    .fold(0.0, f64::max)
            }
            Form::Tail { .. } => {
                let depth = self.lookahead();
                let mut worst = (log_mu - (self.periodic_sum(word) - np)).abs();
                let mut ext = word.to_vec();
                for a in 0..self.m as Symbol {
                    ext.truncate(n);
                    ext.extend(std::iter::repeat_n(a, depth));
                    worst = worst.max((log_mu - (self.sum_on(&ext, n) - np)).abs());
                }
                worst
            }
        }
    }
}

fn spread<I: Iterator<Item = f64>>(xs: I) -> f64 {
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    hi - lo
}

/// `sum_k log r_{i_k}(f_{i_{k+1}} o ... o f_{i_n}(y))`; leaves `f_i(y)` in `y`.
fn log_ratio_walk(sys: &ConformalSystem, word: &[Symbol], y: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for &a in word.iter().rev() {
        total += sys.log_ratio(a, y);
        sys.apply_in_place(a, y);
    }
    total
}

/// `log r_i(x_i)` at the fixed point `x_i` of `f_i`.
fn periodic_log_ratio(sys: &ConformalSystem, word: &[Symbol]) -> f64 {
    let depth = sys.depth_for_precision(1e-14);
    let reps = depth.div_ceil(word.len()) + 1;
    let mut y = [0.0; MAX_DIM];
    let d = sys.dim();
    y[..d].copy_from_slice(&sys.base_point());
    let mut tmp = [0.0; MAX_DIM];
    for _ in 0..reps {
        sys.point_into(word, &y[..d], &mut tmp);
        y = tmp;
    }
    log_ratio_walk(sys, word, &mut y[..d])
}

fn check_table(m: usize, n: usize) -> Result<usize> {
    let size = (m as f64).powi(n as i32);
    if size > MAX_TABLE as f64 {
        return Err(Error::TooLarge(size as usize));
    }
    Ok(size as usize)
}

fn word_at(mut idx: usize, n: usize, m: usize) -> Vec<Symbol> {
    let mut w = vec![0; n];
    for k in (0..n).rev() {
        w[k] = (idx % m) as Symbol;
        idx /= m;
    }
    w
}

/// `S_n phi(i)` for a lazily realized infinite word.
pub fn birkhoff_sum(phi: &Potential, i: &InfiniteWord, n: usize) -> Result<f64> {
    if n == 0 {
        return param("birkhoff sums need n >= 1");
    }
    let w = i.take(n + phi.lookahead());
    Ok(phi.sum_on(w.symbols(), n))
}

/// `S_n phi` on a finite word, which must reach `lookahead` symbols past `n`.
pub fn birkhoff_sum_prefix(phi: &Potential, word: &[Symbol], n: usize) -> Result<f64> {
    if n == 0 {
        return param("birkhoff sums need n >= 1");
    }
    let needed = n + phi.lookahead();
    if word.len() < needed {
        return Err(Error::Depth { needed, available: word.len() });
    }
    Ok(phi.sum_on(word, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureTrace {
    /// `P_n` for `n = 1..=n_max`.
    pub levels: Vec<f64>,
    /// `n P_n - (n-1) P_{n-1}`, which converges geometrically.
    pub increments: Vec<f64>,
    pub p_hat: f64,
    pub converged: bool,
}

/// `log sum_{|j| = n} exp(S_n phi(j*))` over periodic representatives,
/// for every `n` in `1..=n_max`, as `s`-free tables of `log r_j(x_j)`.
fn tail_tables(sys: &ConformalSystem, n_max: usize) -> Result<Vec<Vec<f64>>> {
    let m = sys.maps();
    (1..=n_max)
        .map(|n| {
            let size = check_table(m, n)?;
            Ok((0..size).into_par_iter().map(|idx| periodic_log_ratio(sys, &word_at(idx, n, m))).collect())
        })
        .collect()
}

fn trace_from_sums(sums: Vec<f64>) -> PressureTrace {
    let levels: Vec<f64> = sums.iter().enumerate().map(|(k, s)| s / (k + 1) as f64).collect();
    let increments: Vec<f64> =
        sums.iter().enumerate().map(|(k, s)| if k == 0 { *s } else { s - sums[k - 1] }).collect();
    let n = increments.len();
    let converged = n >= 2 && (increments[n - 1] - increments[n - 2]).abs() < 1e-9;
    PressureTrace { levels, p_hat: increments[n - 1], increments, converged }
}

/// `P_n = (1/n) log sum_{|j|=n} exp(max_{[j]} S_n phi)` for `n <= n_max`
/// and the extrapolated `P_hat`. Markov tables use the suffix-state
/// recursion; tail potentials use periodic representatives in place of
/// the cylinder maximum.
pub fn pressure(phi: &Potential, n_max: usize) -> Result<PressureTrace> {
    if n_max < 2 {
        return param("pressure needs n_max >= 2");
    }
    let sums: Vec<f64> = match &phi.form {
        Form::Product { w, .. } => {
            let l = log_sum_exp(w);
            (1..=n_max).map(|n| n as f64 * l).collect()
        }
        Form::Pair { table, .. } => {
            let m = phi.m;
            let mut f: Vec<f64> =
                table.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            let mut sums = vec![log_sum_exp(&f)];
            for _ in 2..=n_max {
                f = (0..m)
                    .map(|a| log_sum_exp(&(0..m).map(|b| table[a][b] + f[b]).collect::<Vec<_>>()))
                    .collect();
                sums.push(log_sum_exp(&f));
            }
            sums
        }
        Form::Tail { s } => tail_tables(phi.tail_system(), n_max)?
            .iter()
            .map(|t| log_sum_exp(&t.iter().map(|x| s * x).collect::<Vec<_>>()))
            .collect(),
    };
    let trace = trace_from_sums(sums);
    if !trace.converged {
        warn!("pressure did not stabilize within n_max = {n_max}");
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightLevel {
    Uniform(usize),
    Refined(usize),
}

/// Normalized Gibbs weights on a level-`n` partition or on `Lambda_q`,
/// stored as logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderWeights {
    pub level: WeightLevel,
    pub words: Vec<Word>,
    pub log_weights: Vec<f64>,
    pub p_hat: f64,
    /// Largest `|log mu([i]) - (S_n phi(j) - n P_hat)|` found.
    pub sandwich_slack: f64,
}

impl CylinderWeights {
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|x| x.exp()).collect()
    }

    pub fn total(&self) -> f64 {
        self.weights().iter().sum()
    }

    pub fn log_weight_of(&self, w: &Word) -> Option<f64> {
        self.words.binary_search(w).ok().map(|k| self.log_weights[k])
    }
}

fn build_weights(phi: &Potential, p_hat: f64, words: Vec<Word>, level: WeightLevel) -> CylinderWeights {
    let raw: Vec<(f64, f64)> = words
        .par_iter()
        .map(|w| {
            let lm = phi.log_measure(w.symbols(), p_hat);
            (lm, phi.sandwich_deviation(w.symbols(), lm, p_hat))
        })
        .collect();
    let mut log_weights: Vec<f64> = raw.iter().map(|r| r.0).collect();
    let sandwich_slack = raw.iter().map(|r| r.1).fold(0.0, f64::max);
    let norm = log_sum_exp(&log_weights);
    for x in &mut log_weights {
        *x -= norm;
    }
    CylinderWeights { level, words, log_weights, p_hat, sandwich_slack }
}

/// Gibbs weights of all level-`n` cylinders.
pub fn cylinder_weights(phi: &Potential, p_hat: f64, n: usize) -> Result<CylinderWeights> {
    if n == 0 {
        return param("cylinder level must be at least 1");
    }
    check_table(phi.m, n)?;
    let words = Alphabet::new(phi.m)?.words(n)?;
    Ok(build_weights(phi, p_hat, words, WeightLevel::Uniform(n)))
}

/// Gibbs weights of the members of `Lambda_q`.
pub fn refined_weights(phi: &Potential, p_hat: f64, refined: &RefinedAlphabet) -> Result<CylinderWeights> {
    if refined.alphabet.size() != phi.m {
        return param("refined alphabet and potential disagree on the symbol count");
    }
    check_table(refined.len(), 1)?;
    Ok(build_weights(phi, p_hat, refined.words().to_vec(), WeightLevel::Refined(refined.q)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiBernoulliEntry {
    /// `"a+b"` for word lengths, `"q=.."` for refined levels.
    pub label: String,
    pub q: Option<usize>,
    /// Largest `mu([ij]) / (mu([i]) mu([j]))` or its reciprocal.
    pub c_hat: f64,
    pub bound: f64,
    pub pairs: usize,
}

impl QuasiBernoulliEntry {
    pub fn holds(&self) -> bool {
        self.c_hat <= self.bound * (1.0 + 1e-12)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuasiBernoulliReport {
    pub entries: Vec<QuasiBernoulliEntry>,
}

impl QuasiBernoulliReport {
    pub fn all_hold(&self) -> bool {
        self.entries.iter().all(QuasiBernoulliEntry::holds)
    }

    /// `c_q` values of the refined entries in order of `q`.
    pub fn refined_trend(&self) -> Vec<(usize, f64)> {
        self.entries.iter().filter_map(|e| e.q.map(|q| (q, e.c_hat))).collect()
    }
}

fn qb_log_ratio(phi: &Potential, p_hat: f64, i: &[Symbol], j: &[Symbol], buf: &mut Vec<Symbol>) -> f64 {
    buf.clear();
    buf.extend_from_slice(i);
    buf.extend_from_slice(j);
    (phi.log_measure(buf, p_hat) - phi.log_measure(i, p_hat) - phi.log_measure(j, p_hat)).abs()
}

/// Quasi-Bernoulli constant over all pairs of words of lengths `a`, `b`.
pub fn quasi_bernoulli_levels(phi: &Potential, p_hat: f64, a: usize, b: usize) -> Result<QuasiBernoulliEntry> {
    let (sa, sb) = (check_table(phi.m, a)?, check_table(phi.m, b)?);
    if sa * sb > MAX_PAIRS {
        return Err(Error::TooLarge(sa * sb));
    }
    let worst = (0..sa)
        .into_par_iter()
        .map(|x| {
            let i = word_at(x, a, phi.m);
            let mut buf = Vec::new();
            (0..sb)
                .map(|y| qb_log_ratio(phi, p_hat, &i, &word_at(y, b, phi.m), &mut buf))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(QuasiBernoulliEntry {
        label: format!("{a}+{b}"),
        q: None,
        c_hat: worst.exp(),
        bound: phi.hoelder.quasi_bernoulli_log_bound(a, b).exp(),
        pairs: sa * sb,
    })
}

/// `c_q`: the quasi-Bernoulli constant over pairs of `Lambda_q` members,
/// against `exp(kappa beta^{n_q} / (1 - beta) + kappa beta^{n_q})`. All
/// pairs are used up to `2^20`, beyond that a fixed pseudo-random subset.
pub fn quasi_bernoulli_refined(phi: &Potential, p_hat: f64, refined: &RefinedAlphabet) -> QuasiBernoulliEntry {
    let words = refined.words();
    let n = words.len();
    let total = n * n;
    let pairs: Vec<(usize, usize)> = if total <= MAX_PAIRS {
        (0..total).map(|k| (k / n, k % n)).collect()
    } else {
        (0..MAX_PAIRS as u64)
            .map(|k| {
                let h = counter_hash(refined.q as u64, k);
                ((h % n as u64) as usize, ((h >> 32) % n as u64) as usize)
            })
            .collect()
    };
    let worst = pairs
        .par_iter()
        .map_init(Vec::new, |buf, &(x, y)| qb_log_ratio(phi, p_hat, words[x].symbols(), words[y].symbols(), buf))
        .reduce(|| 0.0, f64::max);
    let nq = refined.min_len;
    QuasiBernoulliEntry {
        label: format!("q={}", refined.q),
        q: Some(refined.q),
        c_hat: worst.exp(),
        bound: phi.hoelder.quasi_bernoulli_log_bound(nq, nq).exp(),
        pairs: pairs.len(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichLevel {
    pub n: usize,
    pub slack: f64,
    /// Certificate `kappa beta^n`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsReport {
    pub sandwich: Vec<SandwichLevel>,
    /// `max_n (slack_n - kappa beta^n)`; positive means violated.
    pub max_sandwich_violation: f64,
    pub quasi_bernoulli: QuasiBernoulliReport,
}

impl GibbsReport {
    pub fn sandwich_holds(&self) -> bool {
        self.max_sandwich_violation <= 1e-12
    }
}

/// Checks the Gibbs sandwich at levels `1..=n_max`, quasi-Bernoulli
/// constants for all length pairs `a + b <= n_max`, and `c_q` on each of
/// the given refined alphabets.
pub fn verify_gibbs(
    phi: &Potential,
    p_hat: f64,
    n_max: usize,
    refined: &[RefinedAlphabet],
) -> Result<GibbsReport> {
    let mut sandwich = Vec::new();
    for n in 1..=n_max {
        let w = cylinder_weights(phi, p_hat, n)?;
        sandwich.push(SandwichLevel { n, slack: w.sandwich_slack, bound: phi.hoelder.var_bound(n) });
    }
    let max_sandwich_violation =
        sandwich.iter().map(|s| s.slack - s.bound).fold(f64::NEG_INFINITY, f64::max);
    let mut entries = Vec::new();
    for a in 1..n_max {
        for b in 1..=n_max - a {
            match quasi_bernoulli_levels(phi, p_hat, a, b) {
                Ok(e) => entries.push(e),
                Err(Error::TooLarge(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    for r in refined {
        entries.push(quasi_bernoulli_refined(phi, p_hat, r));
    }
    Ok(GibbsReport { sandwich, max_sandwich_violation, quasi_bernoulli: QuasiBernoulliReport { entries } })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowenRoot {
    pub s_hat: f64,
    /// Pressure of `s_hat * log r` at the returned root.
    pub pressure: f64,
    pub iterations: usize,
}

/// Root of `s -> P(s log r)` on `[0, d]` by bisection.
pub fn bowen_root(system: &ConformalSystem, tol: f64) -> Result<BowenRoot> {
    if !system.geometry().contractive {
        return param("the Bowen root needs a contracting system");
    }
    let p: Box<dyn Fn(f64) -> f64> = match system.family() {
        crate::conformal::Family::Similarity(maps) => {
            let logs: Vec<f64> = maps.iter().map(|m| m.ratio.ln()).collect();
            Box::new(move |s| log_sum_exp(&logs.iter().map(|l| s * l).collect::<Vec<_>>()))
        }
        crate::conformal::Family::Julia { .. } => {
            let tables = tail_tables(system, TAIL_LEVELS)?;
            Box::new(move |s| {
                let sums =
                    tables.iter().map(|t| log_sum_exp(&t.iter().map(|x| s * x).collect::<Vec<_>>())).collect();
                trace_from_sums(sums).p_hat
            })
        }
    };
    bisect_decreasing(p, 0.0, system.dim() as f64, tol)
}

fn bisect_decreasing(p: Box<dyn Fn(f64) -> f64>, lo: f64, hi: f64, tol: f64) -> Result<BowenRoot> {
    let (p_lo, p_hi) = (p(lo), p(hi));
    if !(p_lo >= 0.0 && p_hi <= 0.0) {
        return Err(Error::Bracket { lo, hi, p_lo, p_hi });
    }
    let (mut a, mut b) = (lo, hi);
    let mut best = BowenRoot { s_hat: lo, pressure: p_lo, iterations: 0 };
    for it in 1..=200 {
        let mid = 0.5 * (a + b);
        let pm = p(mid);
        best = BowenRoot { s_hat: mid, pressure: pm, iterations: it };
        if pm.abs() <= tol || b - a < 1e-15 {
            break;
        }
        if pm > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(best)
}

/// Sampling depth: a fixed word length or a refined alphabet level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleDepth {
    Level(usize),
    Refined(usize),
}

enum Sampler {
    Iid(Vec<f64>),
    Chain { initial: Vec<f64>, transition: Vec<Vec<f64>> },
    Table { words: Vec<Word>, cumulative: Vec<f64>, rbar: Vec<f64> },
}

fn cumulative(probs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut c: Vec<f64> = probs
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    let total = acc;
    for x in &mut c {
        *x /= total;
    }
    c
}

fn draw<R: Rng>(cum: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Samples `N` words from the Gibbs weights (symbol by symbol for product
/// and Markov measures, from the cylinder table otherwise), maps each
/// through the coding map from the centre of `V`, and records the position
/// error bound `C2 R rbar_i`. Sample `k` uses its own random stream.
pub fn sample_cloud(
    system: &ConformalSystem,
    phi: &Potential,
    depth: SampleDepth,
    n: usize,
    seed: u64,
) -> Result<PointCloud> {
    if n == 0 {
        return param("sample count must be positive");
    }
    if phi.m != system.maps() {
        return param("potential and system disagree on the number of maps");
    }
    if !system.geometry().contractive {
        return param("sampling needs a contracting system");
    }
    let (sampler, level) = match (depth, &phi.form) {
        (SampleDepth::Level(0), _) | (SampleDepth::Refined(0), _) => {
            return param("sampling depth must be at least 1")
        }
        (SampleDepth::Level(l), Form::Product { log_p, .. }) => {
            (Sampler::Iid(cumulative(log_p.iter().map(|x| x.exp()))), l)
        }
        (SampleDepth::Level(l), Form::Pair { table, perron }) => {
            let m = phi.m;
            let initial =
                cumulative((0..m).map(|a| (perron.log_u[a] + perron.log_v[a] - perron.log_uv).exp()));
            let transition = (0..m)
                .map(|a| {
                    cumulative((0..m).map(|b| {
                        (table[a][b] + perron.log_v[b] - perron.log_v[a] - perron.log_lambda).exp()
                    }))
                })
                .collect();
            (Sampler::Chain { initial, transition }, l)
        }
        (SampleDepth::Level(l), Form::Tail { .. }) => {
            let p_hat = pressure(phi, TAIL_LEVELS.min(l.max(2)))?.p_hat;
            let w = cylinder_weights(phi, p_hat, l)?;
            let cum = cumulative(w.log_weights.iter().map(|x| x.exp()));
            let rbar = w.words.par_iter().map(|u| system.ratio_bar(u.symbols())).collect();
            (Sampler::Table { words: w.words, cumulative: cum, rbar }, l)
        }
        (SampleDepth::Refined(q), _) => {
            let refined = system.refined_alphabet(q)?;
            let p_hat = if phi.is_exact() { 0.0 } else { pressure(phi, TAIL_LEVELS)?.p_hat };
            let w = refined_weights(phi, p_hat, &refined)?;
            let cum = cumulative(w.log_weights.iter().map(|x| x.exp()));
            let rbar = w.words.par_iter().map(|u| system.ratio_bar(u.symbols())).collect();
            (Sampler::Table { words: w.words, cumulative: cum, rbar }, refined.max_len)
        }
    };
    info!("sampling {n} points at depth {level}");
    let d = system.dim();
    let base = system.base_point();
    let scale = system.geometry().c2 * system.diameter();
    let samples: Vec<(Vec<Symbol>, [f64; MAX_DIM], f64)> = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, Purpose::Sampling, k);
            let (word, rbar): (Vec<Symbol>, Option<f64>) = match &sampler {
                Sampler::Iid(cum) => ((0..level).map(|_| draw(cum, &mut rng) as Symbol).collect(), None),
                Sampler::Chain { initial, transition } => {
                    let mut w = Vec::with_capacity(level);
                    let mut a = draw(initial, &mut rng);
                    w.push(a as Symbol);
                    for _ in 1..level {
                        a = draw(&transition[a], &mut rng);
                        w.push(a as Symbol);
                    }
                    (w, None)
                }
                Sampler::Table { words, cumulative, rbar } => {
                    let k = draw(cumulative, &mut rng);
                    (words[k].0.clone(), Some(rbar[k]))
                }
            };
            let mut x = [0.0; MAX_DIM];
            system.point_into(&word, &base, &mut x);
            let norm = x[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
            let err = scale * rbar.unwrap_or_else(|| system.ratio_bar(&word)) + 8.0 * f64::EPSILON * (1.0 + norm);
            (word, x, err)
        })
        .collect();
    let mut points = Vec::with_capacity(n * d);
    let mut errors = Vec::with_capacity(n);
    let mut words = WordList::new();
    for (w, x, e) in &samples {
        points.extend_from_slice(&x[..d]);
        errors.push(*e);
        words.push(w);
    }
    PointCloud::new(d, points, vec![1.0 / n as f64; n], errors)?.with_words(words)
}
