//! Words over a finite alphabet, the shift, the ultrametric `d_rho` and the
//! stopping-time alphabet `Lambda_q` on which contraction ratios are nearly
//! constant.
//!
//! Symbols are stored 0-based (`0..m`); [`Word`]'s `Display` prints them
//! 1-based, which is the convention used in CSV output and configs.

use std::collections::HashMap;
use std::fmt;

use crate::error::{param, Error, Result};
use crate::rng::counter_hash;

pub type Symbol = u8;

/// The alphabet `{1, ..., m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alphabet {
    m: usize,
}

impl Alphabet {
    pub fn new(m: usize) -> Result<Self> {
        if !(2..=255).contains(&m) {
            return param(format!("alphabet size must be in 2..=255, got {m}"));
        }
        Ok(Self { m })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn contains(&self, word: &[Symbol]) -> bool {
        word.iter().all(|&s| (s as usize) < self.m)
    }

    /// All words of length `n` in lexicographic order.
    pub fn words(&self, n: usize) -> Result<Vec<Word>> {
        let count = (self.m as f64).powi(n as i32);
        if count > (1u64 << 24) as f64 {
            return Err(Error::TooLarge(count as usize));
        }
        let count = count as usize;
        let mut out = Vec::with_capacity(count);
        let mut cur = vec![0 as Symbol; n];
        for _ in 0..count {
            out.push(Word(cur.clone()));
            for k in (0..n).rev() {
                if (cur[k] as usize) + 1 < self.m {
                    cur[k] += 1;
                    break;
                }
                cur[k] = 0;
            }
        }
        Ok(out)
    }
}

/// A finite word; the empty word is allowed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(pub Vec<Symbol>);

impl Word {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(symbols: Vec<Symbol>) -> Self {
        Self(symbols)
    }

    /// Builds a word from 1-based symbols as written in configs.
    pub fn from_one_based(symbols: &[usize], alphabet: Alphabet) -> Result<Self> {
        let mut out = Vec::with_capacity(symbols.len());
        for &s in symbols {
            if s == 0 || s > alphabet.size() {
                return param(format!("symbol {s} outside 1..={}", alphabet.size()));
            }
            out.push((s - 1) as Symbol);
        }
        Ok(Self(out))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    /// `i^-`: the word with its last symbol dropped.
    pub fn parent(&self) -> Word {
        let n = self.0.len().saturating_sub(1);
        Word(self.0[..n].to_vec())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn child(&self, s: Symbol) -> Word {
        let mut v = self.0.clone();
        v.push(s);
        Word(v)
    }

    /// `i|_n`.
    pub fn truncate(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    /// Left shift on the full shift `Lambda^N`, applied `n` times.
    pub fn shift(&self, n: usize) -> Word {
        Word(self.0[n.min(self.0.len())..].to_vec())
    }

    pub fn is_prefix_of(&self, other: &[Symbol]) -> bool {
        other.len() >= self.0.len() && other[..self.0.len()] == self.0[..]
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "-");
        }
        if self.0.iter().all(|&s| s < 9) {
            for &s in &self.0 {
                write!(f, "{}", s + 1)?;
            }
        } else {
            for (k, &s) in self.0.iter().enumerate() {
                if k > 0 {
                    write!(f, ".")?;
                }
                write!(f, "{}", s as usize + 1)?;
            }
        }
        Ok(())
    }
}

/// How an infinite word continues after its explicit prefix.
#[derive(Debug, Clone, PartialEq)]
pub enum Continuation {
    /// `u u u ...`
    Periodic(Word),
    /// Counter-hashed symbols; position `k` of the tail is a pure function of
    /// `(seed, offset + k)`.
    Random { seed: u64, m: usize, offset: u64 },
}

/// An infinite word realized lazily as a prefix plus a continuation rule.
#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteWord {
    pub prefix: Word,
    pub tail: Continuation,
}

impl InfiniteWord {
    pub fn periodic(period: Word) -> Result<Self> {
        if period.is_empty() {
            return param("periodic continuation needs a nonempty period");
        }
        Ok(Self { prefix: Word::empty(), tail: Continuation::Periodic(period) })
    }

    pub fn random(seed: u64, alphabet: Alphabet) -> Self {
        Self {
            prefix: Word::empty(),
            tail: Continuation::Random { seed, m: alphabet.size(), offset: 0 },
        }
    }

    pub fn with_prefix(prefix: Word, tail: Continuation) -> Self {
        Self { prefix, tail }
    }

    pub fn symbol(&self, k: usize) -> Symbol {
        if k < self.prefix.len() {
            return self.prefix.0[k];
        }
        let t = k - self.prefix.len();
        match &self.tail {
            Continuation::Periodic(u) => u.0[t % u.len()],
            Continuation::Random { seed, m, offset } => {
                (counter_hash(*seed, offset + t as u64) % *m as u64) as Symbol
            }
        }
    }

    /// The first `n` symbols.
    pub fn take(&self, n: usize) -> Word {
        Word((0..n).map(|k| self.symbol(k)).collect())
    }

    /// `sigma^n` of this word.
    pub fn shift(&self, n: usize) -> InfiniteWord {
        if n <= self.prefix.len() {
            return InfiniteWord { prefix: self.prefix.shift(n), tail: self.tail.clone() };
        }
        let t = n - self.prefix.len();
        let tail = match &self.tail {
            Continuation::Periodic(u) => {
                let s = t % u.len();
                let mut v = u.0[s..].to_vec();
                v.extend_from_slice(&u.0[..s]);
                Continuation::Periodic(Word(v))
            }
            Continuation::Random { seed, m, offset } => {
                Continuation::Random { seed: *seed, m: *m, offset: offset + t as u64 }
            }
        };
        InfiniteWord { prefix: Word::empty(), tail }
    }
}

/// Result of comparing two realized prefixes under `d_rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub value: f64,
    /// Words agree on every compared symbol; the true distance is at most
    /// `rho^depth`.
    pub depth_limited: bool,
    pub depth: usize,
}

/// `d_rho(i, j) = rho^(first index where the words differ)`.
pub fn metric_d_rho(i: &[Symbol], j: &[Symbol], rho: f64) -> Result<Distance> {
    if !(rho > 0.0 && rho < 1.0) {
        return param(format!("rho must lie in (0,1), got {rho}"));
    }
    let depth = i.len().min(j.len());
    match i.iter().zip(j).position(|(a, b)| a != b) {
        Some(n) => Ok(Distance { value: rho.powi(n as i32), depth_limited: false, depth }),
        None => Ok(Distance { value: 0.0, depth_limited: true, depth }),
    }
}

/// The inequalities every member of `Lambda_q` must satisfy, with the
/// number of members violating each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefinedBoundReport {
    /// `r_lower * rho^q < rbar_i`
    pub lower_ratio_violations: usize,
    /// `rbar_i <= rho^|i|`
    pub length_ratio_violations: usize,
    /// `r_lower^|i| <= rbar_i`
    pub power_lower_violations: usize,
    /// `q log rho / log r_lower <= |i| <= q + log r_lower / log rho`
    pub length_violations: usize,
}

impl RefinedBoundReport {
    pub fn all_hold(&self) -> bool {
        self.lower_ratio_violations == 0
            && self.length_ratio_violations == 0
            && self.power_lower_violations == 0
            && self.length_violations == 0
    }
}

/// `Lambda_q = { i : rbar_i <= rho^q < rbar_{i^-} }`.
#[derive(Debug, Clone)]
pub struct RefinedAlphabet {
    pub q: usize,
    pub rho: f64,
    pub alphabet: Alphabet,
    words: Vec<Word>,
    ratios: Vec<f64>,
    index: HashMap<Word, usize>,
    /// `n_q`, the shortest member length.
    pub min_len: usize,
    pub max_len: usize,
    pub bounds: RefinedBoundReport,
}

const MAX_REFINED_DEPTH: usize = 64;

/// Builds `Lambda_q` by depth-first stopping-time traversal from the empty
/// word (whose ratio is 1). `ratio_fn` returns `rbar` of a nonempty word.
pub fn build_refined_alphabet<F>(
    alphabet: Alphabet,
    ratio_fn: F,
    rho: f64,
    q: usize,
    r_lower: f64,
) -> Result<RefinedAlphabet>
where
    F: Fn(&[Symbol]) -> f64,
{
    if !(rho > 0.0 && rho < 1.0) {
        return param(format!("rho must lie in (0,1), got {rho}"));
    }
    if q == 0 {
        return param("refinement level q must be at least 1");
    }
    if !(r_lower > 0.0 && r_lower <= rho) {
        return param(format!("r_lower must lie in (0, rho], got {r_lower}"));
    }
    let threshold = rho.powi(q as i32);
    let mut words = Vec::new();
    let mut ratios = Vec::new();
    let mut stack: Vec<Vec<Symbol>> = vec![Vec::new()];
    while let Some(parent) = stack.pop() {
        // children pushed in reverse so output is lexicographic
        for s in (0..alphabet.size() as Symbol).rev() {
            let mut w = parent.clone();
            w.push(s);
            let r = ratio_fn(&w);
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Contraction { word: Word(w).to_string(), ratio: r });
            }
            if r <= threshold {
                words.push(Word(w));
                ratios.push(r);
            } else if w.len() >= MAX_REFINED_DEPTH {
                return Err(Error::Contraction { word: Word(w).to_string(), ratio: r });
            } else {
                stack.push(w);
            }
        }
    }
    let mut order: Vec<usize> = (0..words.len()).collect();
    order.sort_by(|&a, &b| words[a].cmp(&words[b]));
    let words: Vec<Word> = order.iter().map(|&k| words[k].clone()).collect();
    let ratios: Vec<f64> = order.iter().map(|&k| ratios[k]).collect();

    let tol = 1e-12;
    let mut bounds = RefinedBoundReport::default();
    let len_lo = q as f64 * rho.ln() / r_lower.ln();
    let len_hi = q as f64 + r_lower.ln() / rho.ln();
    for (w, &r) in words.iter().zip(&ratios) {
        let n = w.len() as i32;
        if r_lower * threshold >= r * (1.0 + tol) {
            bounds.lower_ratio_violations += 1;
        }
        if r > rho.powi(n) * (1.0 + tol) {
            bounds.length_ratio_violations += 1;
        }
        if r_lower.powi(n) > r * (1.0 + tol) {
            bounds.power_lower_violations += 1;
        }
        let len = w.len() as f64;
        if len < len_lo - tol || len > len_hi + tol {
            bounds.length_violations += 1;
        }
    }
    let min_len = words.iter().map(Word::len).min().unwrap_or(0);
    let max_len = words.iter().map(Word::len).max().unwrap_or(0);
    let index = words.iter().enumerate().map(|(k, w)| (w.clone(), k)).collect();
    Ok(RefinedAlphabet { q, rho, alphabet, words, ratios, index, min_len, max_len, bounds })
}

impl RefinedAlphabet {
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn position(&self, w: &Word) -> Option<usize> {
        self.index.get(w).copied()
    }

    /// Splits a word over `Lambda` into consecutive members of `Lambda_q`.
    /// Returns the refined symbols and the unparsed remainder (shorter than a
    /// full member).
    pub fn decompose<'a>(&self, word: &'a [Symbol]) -> (Vec<usize>, &'a [Symbol]) {
        let mut out = Vec::new();
        let mut rest = word;
        'outer: loop {
            for len in self.min_len..=self.max_len.min(rest.len()) {
                if let Some(&k) = self.index.get(&Word(rest[..len].to_vec())) {
                    out.push(k);
                    rest = &rest[len..];
                    continue 'outer;
                }
            }
            return (out, rest);
        }
    }

    /// Concatenation of refined symbols back into a word over `Lambda`.
    pub fn flatten(&self, refined: &[usize]) -> Word {
        let mut v = Vec::new();
        for &k in refined {
            v.extend_from_slice(&self.words[k].0);
        }
        Word(v)
    }

    /// Left shift on `Lambda_q^N`: drops `n` refined symbols.
    pub fn shift_refined<'a>(&self, refined: &'a [usize], n: usize) -> &'a [usize] {
        &refined[n.min(refined.len())..]
    }

    /// All concatenations `ij` with `i, j` in `Lambda_q` (`Lambda_q^2`).
    pub fn pairs(&self) -> Vec<(usize, usize, Word)> {
        let mut out = Vec::with_capacity(self.words.len() * self.words.len());
        for (a, wa) in self.words.iter().enumerate() {
            for (b, wb) in self.words.iter().enumerate() {
                out.push((a, b, wa.concat(wb)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn product_ratio(ratios: &'static [f64]) -> impl Fn(&[Symbol]) -> f64 {
        move |w: &[Symbol]| w.iter().map(|&s| ratios[s as usize]).product()
    }

    #[test]
    fn metric_examples() {
        let d = metric_d_rho(&[0, 1, 0], &[0, 1, 0], 0.5).unwrap();
        assert_eq!(d.value, 0.0);
        assert!(d.depth_limited);
        assert_eq!(metric_d_rho(&[0, 1], &[1, 1], 0.5).unwrap().value, 1.0);
        assert_eq!(metric_d_rho(&[0, 1, 1, 0], &[0, 1, 1, 1], 0.5).unwrap().value, 0.125);
        assert!(metric_d_rho(&[0], &[1], 1.0).is_err());
        assert!(metric_d_rho(&[0], &[1], 0.0).is_err());
    }

    #[test]
    fn constant_ratio_refinement_is_full_level() {
        let a = Alphabet::new(2).unwrap();
        let ra = build_refined_alphabet(a, product_ratio(&[1.0 / 3.0, 1.0 / 3.0]), 1.0 / 3.0, 2, 1.0 / 3.0)
            .unwrap();
        assert_eq!(ra.words(), &a.words(2).unwrap()[..]);
        assert_eq!(ra.min_len, 2);
        assert!(ra.bounds.all_hold());
    }

    /// Brute force: every word of length <= 4 tested directly against the
    /// defining inequality, empty word having ratio 1.
    fn brute_force_refined(ratios: &'static [f64], rho: f64, q: usize) -> Vec<Word> {
        let f = product_ratio(ratios);
        let a = Alphabet::new(ratios.len()).unwrap();
        let t = rho.powi(q as i32);
        let mut out = Vec::new();
        for n in 1..=4 {
            for w in a.words(n).unwrap() {
                let parent = if n == 1 { 1.0 } else { f(w.parent().symbols()) };
                if f(w.symbols()) <= t && t < parent {
                    out.push(w);
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn mixed_ratio_refinement_matches_brute_force() {
        let ratios: &'static [f64] = &[0.5, 0.25];
        let oracle = brute_force_refined(ratios, 0.5, 2);
        // a = symbol 0, b = symbol 1: {b, aa, ab}
        assert_eq!(oracle, vec![Word(vec![0, 0]), Word(vec![0, 1]), Word(vec![1])]);
        let ra = build_refined_alphabet(Alphabet::new(2).unwrap(), product_ratio(ratios), 0.5, 2, 0.25)
            .unwrap();
        assert_eq!(ra.words(), &oracle[..]);
        assert_eq!(ra.min_len, 1);
        assert!(ra.bounds.all_hold());
    }

    #[test]
    fn refinement_rejects_non_contracting_ratio() {
        let err = build_refined_alphabet(Alphabet::new(2).unwrap(), |_w: &[Symbol]| 1.0, 0.5, 1, 0.5)
            .unwrap_err();
        assert!(matches!(err, Error::Contraction { .. }));
    }

    #[test]
    fn decompose_and_flatten_round_trip() {
        let ra = build_refined_alphabet(
            Alphabet::new(2).unwrap(),
            product_ratio(&[0.5, 0.25]),
            0.5,
            2,
            0.25,
        )
        .unwrap();
        let w = [1, 0, 0, 0, 1, 1, 0];
        let (refined, rest) = ra.decompose(&w);
        assert_eq!(rest, &[0]);
        assert_eq!(ra.flatten(&refined).symbols(), &w[..6]);
        assert_eq!(ra.shift_refined(&refined, 1).len(), refined.len() - 1);
    }

    #[test]
    fn infinite_word_shift_is_consistent() {
        let a = Alphabet::new(3).unwrap();
        let w = InfiniteWord::with_prefix(
            Word(vec![2, 2]),
            Continuation::Random { seed: 9, m: a.size(), offset: 0 },
        );
        let long = w.take(40);
        for n in [0, 1, 2, 5, 17] {
            assert_eq!(w.shift(n).take(20).symbols(), &long.symbols()[n..n + 20]);
        }
        let p = InfiniteWord::periodic(Word(vec![0, 1, 2])).unwrap();
        assert_eq!(p.shift(4).take(4).symbols(), &[1, 2, 0, 1]);
    }

    #[test]
    fn word_display_is_one_based() {
        assert_eq!(Word(vec![0, 1, 0]).to_string(), "121");
        assert_eq!(Word::empty().to_string(), "-");
    }

    proptest! {
        #[test]
        fn ultrametric_inequality(
            i in proptest::collection::vec(0u8..3, 12),
            j in proptest::collection::vec(0u8..3, 12),
            k in proptest::collection::vec(0u8..3, 12),
            rho in 0.05f64..0.95,
        ) {
            let dij = metric_d_rho(&i, &j, rho).unwrap().value;
            let djk = metric_d_rho(&j, &k, rho).unwrap().value;
            let dik = metric_d_rho(&i, &k, rho).unwrap().value;
            prop_assert!(dik <= dij.max(djk) + 1e-15);
        }

        #[test]
        fn refined_alphabet_is_prefix_free_and_covering(
            r1 in 0.1f64..0.6, r2 in 0.1f64..0.6, r3 in 0.1f64..0.6, q in 1usize..5,
        ) {
            let ratios = [r1, r2, r3];
            let rho = r1.max(r2).max(r3);
            let r_lower = r1.min(r2).min(r3);
            let f = |w: &[Symbol]| w.iter().map(|&s| ratios[s as usize]).product::<f64>();
            let ra = build_refined_alphabet(Alphabet::new(3).unwrap(), f, rho, q, r_lower).unwrap();
            // prefix free
            for a in ra.words() {
                for b in ra.words() {
                    if a != b {
                        prop_assert!(!a.is_prefix_of(b.symbols()));
                    }
                }
            }
            // covering: the product measure with weights proportional to
            // ratios^s sums to one over the members
            let s = 0.7;
            let z: f64 = ratios.iter().map(|r| r.powf(s)).sum();
            let total: f64 = ra.words().iter()
                .map(|w| w.symbols().iter().map(|&k| ratios[k as usize].powf(s) / z).product::<f64>())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(ra.bounds.all_hold());
        }
    }
}
