//! Two-sided subshifts of finite type: points, shifts, cylinders, the θ-metric,
//! periodic orbits and sliding-block recoding.
//!
//! Symbols are `u8` values in `0..ℓ`. Text formats use `1..=ℓ`.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::Rng;
use thiserror::Error;

pub type Symbol = u8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("transition matrix is empty")]
    Empty,
    #[error("transition matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("alphabet size {0} exceeds 255")]
    TooLarge(usize),
    #[error("row {0} has no admissible successor")]
    ZeroRow(usize),
    #[error("column {0} has no admissible predecessor")]
    ZeroColumn(usize),
    #[error("transition graph is not strongly connected ({components} components)")]
    NotTransitive { components: usize },
    #[error("theta = {0} is outside (0, 1)")]
    Theta(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WordError {
    #[error("symbol {symbol} at position {pos} is outside the alphabet")]
    Symbol { pos: usize, symbol: Symbol },
    #[error("transition {from} -> {to} at position {pos} is forbidden")]
    Forbidden { pos: usize, from: Symbol, to: Symbol },
    #[error("periodic block must be nonempty")]
    EmptyPeriod,
    #[error("recoding depth must be at least 1")]
    ZeroDepth,
}

/// Outcome of [`validate_spec`]; `errors` lists every violation found.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub zero_rows: Vec<usize>,
    pub zero_columns: Vec<usize>,
    pub transitive: bool,
    /// gcd of cycle lengths; only meaningful when transitive.
    pub period: usize,
    pub errors: Vec<SpecError>,
}

impl Diagnostics {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks row/column coverage, strong connectivity and the graph period.
pub fn validate_spec(q: &[Vec<bool>], theta: f64) -> Diagnostics {
    let mut errors = Vec::new();
    let l = q.len();
    if l == 0 {
        errors.push(SpecError::Empty);
    }
    if l > 255 {
        errors.push(SpecError::TooLarge(l));
    }
    for (i, row) in q.iter().enumerate() {
        if row.len() != l {
            errors.push(SpecError::NotSquare { row: i, len: row.len(), expected: l });
        }
    }
    if !(theta > 0.0 && theta < 1.0) {
        errors.push(SpecError::Theta(theta));
    }
    let square = !q.is_empty() && q.iter().all(|r| r.len() == l);
    let (mut zero_rows, mut zero_columns) = (Vec::new(), Vec::new());
    let (mut transitive, mut period) = (false, 0);
    if square {
        zero_rows = (0..l).filter(|&i| !q[i].iter().any(|&b| b)).collect();
        zero_columns = (0..l).filter(|&j| !q.iter().any(|r| r[j])).collect();
        errors.extend(zero_rows.iter().map(|&i| SpecError::ZeroRow(i)));
        errors.extend(zero_columns.iter().map(|&j| SpecError::ZeroColumn(j)));
        let components = scc_count(q);
        transitive = components == 1;
        if !transitive {
            errors.push(SpecError::NotTransitive { components });
        } else {
            period = graph_period(q);
        }
    }
    Diagnostics { zero_rows, zero_columns, transitive, period, errors }
}

fn reachable(q: &[Vec<bool>], start: usize, reverse: bool) -> Vec<bool> {
    let l = q.len();
    let mut seen = vec![false; l];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..l {
            let edge = if reverse { q[j][i] } else { q[i][j] };
            if edge && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

fn scc_count(q: &[Vec<bool>]) -> usize {
    let l = q.len();
    let mut comp = vec![usize::MAX; l];
    let mut count = 0;
    for s in 0..l {
        if comp[s] != usize::MAX {
            continue;
        }
        let fwd = reachable(q, s, false);
        let bwd = reachable(q, s, true);
        for i in 0..l {
            if fwd[i] && bwd[i] {
                comp[i] = count;
            }
        }
        count += 1;
    }
    count
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a strongly connected graph: gcd of level differences along edges.
fn graph_period(q: &[Vec<bool>]) -> usize {
    let l = q.len();
    let mut level = vec![usize::MAX; l];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    let mut g = 0;
    while let Some(i) = queue.pop_front() {
        for j in 0..l {
            if !q[i][j] {
                continue;
            }
            if level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            } else {
                g = gcd(g, (level[i] + 1).abs_diff(level[j]));
            }
        }
    }
    g
}

/// Alphabet, transition matrix Q and metric parameter θ.
#[derive(Debug, Clone, PartialEq)]
pub struct SubshiftSpec {
    q: Vec<Vec<bool>>,
    theta: f64,
}

impl SubshiftSpec {
    pub fn new(q: Vec<Vec<bool>>, theta: f64) -> Result<Self, SpecError> {
        let diag = validate_spec(&q, theta);
        match diag.errors.into_iter().next() {
            Some(e) => Err(e),
            None => Ok(Self { q, theta }),
        }
    }

    pub fn from_01(rows: &[&[u8]], theta: f64) -> Result<Self, SpecError> {
        Self::new(rows.iter().map(|r| r.iter().map(|&b| b != 0).collect()).collect(), theta)
    }

    pub fn full_shift(l: usize, theta: f64) -> Self {
        Self::new(vec![vec![true; l]; l], theta).expect("full shift is valid")
    }

    pub fn golden_mean(theta: f64) -> Self {
        Self::from_01(&[&[1, 1], &[1, 0]], theta).expect("golden mean is valid")
    }

    pub fn alphabet_size(&self) -> usize {
        self.q.len()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn transitions(&self) -> &[Vec<bool>] {
        &self.q
    }

    pub fn allowed(&self, a: Symbol, b: Symbol) -> bool {
        self.q[a as usize][b as usize]
    }

    pub fn period(&self) -> usize {
        graph_period(&self.q)
    }

    pub fn check_word(&self, w: &[Symbol]) -> Result<(), WordError> {
        let l = self.alphabet_size();
        for (pos, &s) in w.iter().enumerate() {
            if s as usize >= l {
                return Err(WordError::Symbol { pos, symbol: s });
            }
        }
        for (pos, pair) in w.windows(2).enumerate() {
            if !self.allowed(pair[0], pair[1]) {
                return Err(WordError::Forbidden { pos, from: pair[0], to: pair[1] });
            }
        }
        Ok(())
    }

    pub fn is_admissible(&self, w: &[Symbol]) -> bool {
        self.check_word(w).is_ok()
    }

    pub fn successors(&self, a: Symbol) -> impl Iterator<Item = Symbol> + '_ {
        (0..self.alphabet_size() as Symbol).filter(move |&b| self.allowed(a, b))
    }

    pub fn predecessors(&self, b: Symbol) -> impl Iterator<Item = Symbol> + '_ {
        (0..self.alphabet_size() as Symbol).filter(move |&a| self.allowed(a, b))
    }

    /// All admissible words of length `n` in lexicographic order.
    pub fn words(&self, n: usize) -> Vec<Vec<Symbol>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out: Vec<Vec<Symbol>> = (0..self.alphabet_size() as Symbol).map(|s| vec![s]).collect();
        for _ in 1..n {
            out = out
                .into_iter()
                .flat_map(|w| {
                    let last = *w.last().unwrap();
                    self.successors(last).map(move |b| {
                        let mut v = w.clone();
                        v.push(b);
                        v
                    })
                })
                .collect();
        }
        out
    }

    /// Shortest closed admissible word starting at `s` (BFS back to `s`).
    pub fn cycle_from(&self, s: Symbol) -> Vec<Symbol> {
        let l = self.alphabet_size();
        let mut parent = vec![None::<Symbol>; l];
        let mut queue = VecDeque::new();
        for b in self.successors(s) {
            if b == s {
                return vec![s];
            }
            if parent[b as usize].is_none() {
                parent[b as usize] = Some(s);
                queue.push_back(b);
            }
        }
        while let Some(a) = queue.pop_front() {
            if self.allowed(a, s) {
                let mut path = vec![a];
                let mut cur = a;
                while let Some(p) = parent[cur as usize] {
                    if p == s {
                        break;
                    }
                    path.push(p);
                    cur = p;
                }
                path.push(s);
                path.reverse();
                return path;
            }
            for b in self.successors(a) {
                if b != s && parent[b as usize].is_none() {
                    parent[b as usize] = Some(a);
                    queue.push_back(b);
                }
            }
        }
        unreachable!("transitive spec has a cycle through every symbol")
    }

    /// Random admissible word of length `n` with uniformly chosen successors.
    pub fn random_word<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Symbol> {
        let mut w = Vec::with_capacity(n);
        if n == 0 {
            return w;
        }
        w.push(rng.gen_range(0..self.alphabet_size()) as Symbol);
        while w.len() < n {
            let succ: Vec<Symbol> = self.successors(*w.last().unwrap()).collect();
            w.push(succ[rng.gen_range(0..succ.len())]);
        }
        w
    }

    /// Random admissible word of length `n` ending in a given symbol's predecessor chain.
    pub fn random_past<R: Rng>(&self, n: usize, end_before: Symbol, rng: &mut R) -> Vec<Symbol> {
        let mut w = Vec::with_capacity(n);
        let mut cur = end_before;
        for _ in 0..n {
            let pred: Vec<Symbol> = self.predecessors(cur).collect();
            cur = pred[rng.gen_range(0..pred.len())];
            w.push(cur);
        }
        w.reverse();
        w
    }

    /// Random point whose coordinates on `[-half, half)` are a random admissible word.
    pub fn random_point<R: Rng>(&self, half: usize, rng: &mut R) -> PointRep {
        let core = self.random_word(2 * half.max(1), rng);
        self.close_word(core, half.max(1) as i64)
    }

    /// Wraps a finite word into a point by attaching shortest cycles on both ends.
    pub fn close_word(&self, core: Vec<Symbol>, origin: i64) -> PointRep {
        let first = core[0];
        let last = *core.last().unwrap();
        let pred = self.predecessors(first).next().expect("column coverage");
        let mut left = self.cycle_from(pred);
        left.rotate_left(1);
        let succ = self.successors(last).next().expect("row coverage");
        let right = self.cycle_from(succ);
        PointRep::new(self, left, core, right, origin).expect("closing cycles are admissible")
    }
}

/// Eventually periodic bi-infinite sequence: `…LLL core RRR…` with `x_0` at
/// index `origin` of the core (origin may lie outside the core).
#[derive(Debug, Clone)]
pub struct PointRep {
    left: Vec<Symbol>,
    core: Vec<Symbol>,
    right: Vec<Symbol>,
    origin: i64,
}

impl PointRep {
    pub fn new(spec: &SubshiftSpec, left: Vec<Symbol>, core: Vec<Symbol>, right: Vec<Symbol>, origin: i64) -> Result<Self, WordError> {
        if left.is_empty() || right.is_empty() {
            return Err(WordError::EmptyPeriod);
        }
        let mut joined = left.clone();
        joined.extend_from_slice(&left);
        joined.extend_from_slice(&core);
        joined.extend_from_slice(&right);
        joined.extend_from_slice(&right);
        spec.check_word(&joined)?;
        Ok(Self { left, core, right, origin })
    }

    /// Purely periodic point `…www.www…` with `x_0 = w[0]`.
    pub fn periodic(spec: &SubshiftSpec, w: &[Symbol]) -> Result<Self, WordError> {
        Self::new(spec, w.to_vec(), Vec::new(), w.to_vec(), 0)
    }

    /// Coordinate `x_n`.
    pub fn at(&self, n: i64) -> Symbol {
        let j = n + self.origin;
        let c = self.core.len() as i64;
        if j < 0 {
            let l = self.left.len() as i64;
            self.left[(l - 1 - (-j - 1).rem_euclid(l)) as usize]
        } else if j < c {
            self.core[j as usize]
        } else {
            self.right[(j - c).rem_euclid(self.right.len() as i64) as usize]
        }
    }

    /// Coordinates `x_lo … x_{hi-1}`.
    pub fn slice(&self, lo: i64, hi: i64) -> Vec<Symbol> {
        (lo..hi).map(|n| self.at(n)).collect()
    }

    pub fn shift(&self, n: i64) -> Self {
        Self { origin: self.origin + n, ..self.clone() }
    }

    /// Radius beyond which both points are in their periodic tails and the
    /// tails have realigned.
    fn agreement_radius(&self, other: &Self) -> i64 {
        let span = |p: &Self| p.origin.abs() + p.core.len() as i64;
        let lcm = |a: usize, b: usize| (a / gcd(a, b) * b) as i64;
        span(self).max(span(other)) + lcm(self.left.len(), other.left.len()) + lcm(self.right.len(), other.right.len()) + 1
    }

    /// Least `N ≥ 0` with `x_n ≠ y_n` for some `|n| = N`, or `None` if equal.
    pub fn first_disagreement(&self, other: &Self) -> Option<u64> {
        let r = self.agreement_radius(other);
        (0..=r).find(|&n| self.at(n) != other.at(n) || self.at(-n) != other.at(-n)).map(|n| n as u64)
    }

    pub fn project(&self, side: Side) -> Projected<'_> {
        Projected { point: self, side }
    }

    /// Coordinate-wise agreement on `n ≥ 0` (same local stable set).
    pub fn same_future(&self, other: &Self) -> bool {
        let r = self.agreement_radius(other);
        (0..=r).all(|n| self.at(n) == other.at(n))
    }

    /// Coordinate-wise agreement on `n ≤ 0` (same local unstable set).
    pub fn same_past(&self, other: &Self) -> bool {
        let r = self.agreement_radius(other);
        (0..=r).all(|n| self.at(-n) == other.at(-n))
    }

    /// Point with the past (`n < 0`) of `past` and the future (`n ≥ 0`) of `self`.
    /// Requires the junction `past_{-1} → self_0` to be admissible.
    pub fn with_past_of(&self, spec: &SubshiftSpec, past: &Self) -> Result<Self, WordError> {
        let fut = self.shift(0);
        let k = past.left.len() as i64 + past.core.len() as i64 + past.origin.abs() + 1;
        let m = fut.core.len() as i64 + fut.origin.abs() + fut.right.len() as i64 + 1;
        let mut core = past.slice(-k, 0);
        core.extend(fut.slice(0, m));
        let left_shift = -k;
        let left: Vec<Symbol> = {
            let lp = past.left.len() as i64;
            // a full period of the left tail ending just before x_{-k}
            past.slice(left_shift - lp, left_shift)
        };
        let right: Vec<Symbol> = {
            let rp = fut.right.len() as i64;
            fut.slice(m, m + rp)
        };
        PointRep::new(spec, left, core, right, k)
    }
}

impl PartialEq for PointRep {
    fn eq(&self, other: &Self) -> bool {
        self.first_disagreement(other).is_none()
    }
}

impl fmt::Display for PointRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |w: &[Symbol]| w.iter().map(|s| (s + 1).to_string()).collect::<Vec<_>>().join("");
        write!(f, "({})^∞ {}[{}] ({})^∞", show(&self.left), show(&self.core), self.origin, show(&self.right))
    }
}

/// `d_θ(x, y) = θ^N` with `N` the first disagreement index; `0` for equal points.
pub fn d_theta(spec: &SubshiftSpec, x: &PointRep, y: &PointRep) -> f64 {
    match x.first_disagreement(y) {
        None => 0.0,
        Some(n) => spec.theta().powi(n as i32),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// Unstable projection `P^u`: keeps `n ≥ 0`.
    U,
    /// Stable projection `P^s`: keeps `n ≤ 0`.
    S,
}

/// One-sided view of a point; equality compares only the kept coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Projected<'a> {
    pub point: &'a PointRep,
    pub side: Side,
}

impl Projected<'_> {
    pub fn at(&self, n: u64) -> Symbol {
        match self.side {
            Side::U => self.point.at(n as i64),
            Side::S => self.point.at(-(n as i64)),
        }
    }
}

impl PartialEq for Projected<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.side == other.side
            && match self.side {
                Side::U => self.point.same_future(other.point),
                Side::S => self.point.same_past(other.point),
            }
    }
}

/// Cylinder `[m; a_0 … a_k]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cylinder {
    pub offset: i64,
    pub word: Vec<Symbol>,
}

impl Cylinder {
    pub fn new(spec: &SubshiftSpec, offset: i64, word: Vec<Symbol>) -> Result<Self, WordError> {
        spec.check_word(&word)?;
        Ok(Self { offset, word })
    }

    pub fn contains(&self, x: &PointRep) -> bool {
        self.word.iter().enumerate().all(|(i, &a)| x.at(self.offset + i as i64) == a)
    }
}

/// All period-`n` points, one per admissible closed word; count is `tr(Qⁿ)`.
pub fn periodic_points(spec: &SubshiftSpec, n: usize) -> Vec<PointRep> {
    closed_words(spec, n).into_iter().map(|w| PointRep::periodic(spec, &w).expect("closed word")).collect()
}

/// Admissible words of length `n` whose last symbol may precede the first.
pub fn closed_words(spec: &SubshiftSpec, n: usize) -> Vec<Vec<Symbol>> {
    assert!(n >= 1, "period must be positive");
    spec.words(n).into_iter().filter(|w| spec.allowed(*w.last().unwrap(), w[0])).collect()
}

/// Higher-block presentation on admissible `k`-words.
#[derive(Debug, Clone, PartialEq)]
pub struct Recoding {
    pub k: usize,
    pub base: SubshiftSpec,
    pub spec: SubshiftSpec,
    pub words: Vec<Vec<Symbol>>,
    index: HashMap<Vec<Symbol>, usize>,
}

impl Recoding {
    pub fn symbol_of(&self, w: &[Symbol]) -> Option<usize> {
        self.index.get(w).copied()
    }

    /// Sliding-block code of a word of length `≥ k`: `len - k + 1` symbols.
    pub fn encode(&self, w: &[Symbol]) -> Option<Vec<usize>> {
        if w.len() < self.k {
            return None;
        }
        w.windows(self.k).map(|b| self.symbol_of(b)).collect()
    }

    pub fn decode(&self, s: &[usize]) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(s.len() + self.k - 1);
        if let Some(&first) = s.first() {
            out.extend_from_slice(&self.words[first]);
        }
        for &t in s.iter().skip(1) {
            out.push(*self.words[t].last().unwrap());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn recode(spec: &SubshiftSpec, k: usize) -> Result<Recoding, WordError> {
    if k == 0 {
        return Err(WordError::ZeroDepth);
    }
    let words = spec.words(k);
    let index: HashMap<_, _> = words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
    let q: Vec<Vec<bool>> = words
        .iter()
        .map(|a| words.iter().map(|b| a[1..] == b[..k - 1] && spec.allowed(*a.last().unwrap(), *b.last().unwrap())).collect())
        .collect();
    let new = SubshiftSpec::new(q, spec.theta()).expect("higher-block shift of a valid spec is valid");
    Ok(Recoding { k, base: spec.clone(), spec: new, words, index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace_power(spec: &SubshiftSpec, n: usize) -> u64 {
        let l = spec.alphabet_size();
        let q: Vec<Vec<u64>> = spec.transitions().iter().map(|r| r.iter().map(|&b| b as u64).collect()).collect();
        let mut m = q.clone();
        for _ in 1..n {
            m = (0..l).map(|i| (0..l).map(|j| (0..l).map(|k| m[i][k] * q[k][j]).sum()).collect()).collect();
        }
        (0..l).map(|i| m[i][i]).sum()
    }

    #[test]
    fn validation_examples() {
        assert!(validate_spec(&[vec![true; 2], vec![true; 2]], 0.5).is_valid());
        let gm = validate_spec(&[vec![true, true], vec![true, false]], 0.5);
        assert!(gm.is_valid() && gm.transitive && gm.period == 1);
        let bad = validate_spec(&[vec![true, false], vec![true, false]], 0.5);
        assert_eq!(bad.zero_columns, vec![1]);
        assert!(!bad.is_valid());
        let cyc = validate_spec(&[vec![false, true], vec![true, false]], 0.5);
        assert!(cyc.is_valid() && cyc.period == 2);
        let split = validate_spec(&[vec![true, false], vec![false, true]], 0.5);
        assert!(!split.transitive);
        assert!(SubshiftSpec::new(vec![vec![true]], 1.0).is_err());
        assert!(matches!(SubshiftSpec::new(vec![vec![true, true], vec![true]], 0.5), Err(SpecError::NotSquare { .. })));
    }

    #[test]
    fn metric_examples() {
        let s = SubshiftSpec::full_shift(2, 0.5);
        let x = PointRep::periodic(&s, &[0]).unwrap();
        assert_eq!(d_theta(&s, &x, &x.clone()), 0.0);
        let mut core = vec![0u8; 7];
        core[6] = 1; // n = 3 with origin 3
        let y = PointRep::new(&s, vec![0], core, vec![0], 3).unwrap();
        assert_eq!(d_theta(&s, &x, &y), 0.125);
        let z = PointRep::periodic(&s, &[1]).unwrap();
        assert_eq!(d_theta(&s, &x, &z), 1.0);
    }

    #[test]
    fn shift_and_periodicity() {
        let s = SubshiftSpec::golden_mean(0.5);
        let p = PointRep::periodic(&s, &[0, 0, 1]).unwrap();
        assert_eq!(p.shift(3), p);
        assert_ne!(p.shift(1), p);
        assert_eq!(p.shift(-1).shift(1).slice(-10, 10), p.slice(-10, 10));
        assert_eq!(p.shift(0).slice(-5, 5), p.slice(-5, 5));
    }

    #[test]
    fn projections() {
        let s = SubshiftSpec::full_shift(2, 0.5);
        let x = PointRep::new(&s, vec![0], vec![0, 0, 0, 0, 0], vec![0], 2).unwrap();
        let y = PointRep::new(&s, vec![0], vec![1, 0, 0, 0, 0], vec![0], 2).unwrap();
        assert!(x.project(Side::U) == y.project(Side::U));
        assert!(x.project(Side::S) != y.project(Side::S));
        let z = PointRep::new(&s, vec![0], vec![0, 0, 0, 1, 0], vec![0], 2).unwrap();
        assert!(x.project(Side::S) == z.project(Side::S));
        assert!(x.project(Side::U) == x.project(Side::U));
    }

    #[test]
    fn periodic_counts() {
        let full = SubshiftSpec::full_shift(2, 0.5);
        let gm = SubshiftSpec::golden_mean(0.5);
        assert_eq!(periodic_points(&full, 2).len(), 4);
        assert_eq!(periodic_points(&gm, 2).len(), 3);
        let fixed = periodic_points(&gm, 1);
        assert_eq!(fixed.len(), 1);
        assert_eq!(fixed[0].at(0), 0);
        let three = SubshiftSpec::from_01(&[&[0, 1, 1], &[1, 0, 1], &[1, 1, 1]], 0.3).unwrap();
        for spec in [&full, &gm, &three] {
            for n in 1..=12 {
                assert_eq!(periodic_points(spec, n).len() as u64, trace_power(spec, n));
            }
        }
    }

    #[test]
    fn recoding_examples() {
        let full = SubshiftSpec::full_shift(2, 0.5);
        let gm = SubshiftSpec::golden_mean(0.5);
        let r1 = recode(&gm, 1).unwrap();
        assert_eq!(r1.spec, gm);
        let r2 = recode(&full, 2).unwrap();
        assert_eq!(r2.len(), 4);
        // each 2-word has exactly two successors by overlap
        assert!(r2.spec.transitions().iter().all(|row| row.iter().filter(|&&b| b).count() == 2));
        let g2 = recode(&gm, 2).unwrap();
        assert_eq!(g2.words, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
        assert!(recode(&gm, 0).is_err());
    }

    #[test]
    fn with_past_of_glues() {
        let s = SubshiftSpec::full_shift(3, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = s.random_point(5, &mut rng);
            let z = s.random_point(5, &mut rng);
            let g = x.with_past_of(&s, &z).unwrap();
            assert!(g.same_future(&x));
            assert!((1..30).all(|n| g.at(-n) == z.at(-n)));
        }
    }

    #[test]
    fn cylinders() {
        let s = SubshiftSpec::golden_mean(0.5);
        let x = PointRep::periodic(&s, &[0, 1]).unwrap();
        assert!(Cylinder::new(&s, 0, vec![0, 1, 0]).unwrap().contains(&x));
        assert!(!Cylinder::new(&s, 1, vec![0]).unwrap().contains(&x));
        assert!(Cylinder::new(&s, 0, vec![1, 1]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

        fn spec_for(k: u8) -> SubshiftSpec {
            match k % 3 {
                0 => SubshiftSpec::full_shift(2, 0.5),
                1 => SubshiftSpec::golden_mean(0.3),
                _ => SubshiftSpec::from_01(&[&[0, 1, 1], &[1, 0, 1], &[1, 1, 1]], 0.7).unwrap(),
            }
        }

        // points sharing a random block near the origin, so small distances occur
        fn related(spec: &SubshiftSpec, seed: u64) -> (PointRep, PointRep, PointRep) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = spec.random_word(16, &mut rng);
            let mk = |rng: &mut ChaCha8Rng| {
                let keep = rng.gen_range(0..8);
                let mut w = base[8 - keep..8 + keep].to_vec();
                let pre = spec.random_past(8 - keep, w.first().copied().unwrap_or(base[8]), rng);
                if w.is_empty() {
                    w.push(base[8]);
                }
                let mut full = pre;
                full.extend(w);
                while full.len() < 16 {
                    let s: Vec<Symbol> = spec.successors(*full.last().unwrap()).collect();
                    full.push(s[rng.gen_range(0..s.len())]);
                }
                spec.close_word(full, 8)
            };
            (mk(&mut rng), mk(&mut rng), mk(&mut rng))
        }

        proptest! {
            #[test]
            fn ultrametric(k in 0u8..3, seed in 0u64..10_000) {
                let s = spec_for(k);
                let (x, y, z) = related(&s, seed);
                prop_assert!(d_theta(&s, &x, &z) <= d_theta(&s, &x, &y).max(d_theta(&s, &y, &z)));
                prop_assert_eq!(d_theta(&s, &x, &y), d_theta(&s, &y, &x));
            }

            #[test]
            fn shift_lipschitz(k in 0u8..3, seed in 0u64..10_000) {
                let s = spec_for(k);
                let (x, y, _) = related(&s, seed);
                let lhs = d_theta(&s, &x.shift(1), &y.shift(1));
                prop_assert!(lhs <= d_theta(&s, &x, &y) / s.theta() * (1.0 + 1e-12));
            }

            #[test]
            fn stable_contraction(k in 0u8..3, seed in 0u64..10_000, n in 0i64..10) {
                let s = spec_for(k);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = s.random_point(10, &mut rng);
                let z = s.random_point(10, &mut rng);
                let zz = z.shift(rng.gen_range(-3..3));
                // y shares the future of x
                if let Ok(y) = x.with_past_of(&s, &zz) {
                    let lhs = d_theta(&s, &x.shift(n), &y.shift(n));
                    prop_assert!(lhs <= s.theta().powi(n as i32) * d_theta(&s, &x, &y) * (1.0 + 1e-12));
                }
            }

            #[test]
            fn recode_roundtrip(k in 0u8..3, depth in 1usize..4, seed in 0u64..1000, len in 0usize..12) {
                let s = spec_for(k);
                let r = recode(&s, depth).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let w = s.random_word(depth + len, &mut rng);
                let code = r.encode(&w).unwrap();
                prop_assert!(r.spec.is_admissible(&code.iter().map(|&c| c as Symbol).collect::<Vec<_>>()) || r.len() > 255);
                prop_assert_eq!(r.decode(&code), w);
            }
        }
    }
}
