//! u-states: families of projective measures indexed by future words that are
//! invariant under the weighted pushforward through unstable Jacobians.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cocycle::{default_anchors, iterate, straighten, Cocycle, CocycleError, WindowedCocycle};
use crate::projective::{act, dist, kolmogorov, log_gain, Direction, ProjMeasure};
use crate::symbolic::{PointRep, SpecError, SubshiftSpec, Symbol};
use crate::thermo::{GibbsMeasure, ThermoError};

/// Coalescing resolution used when none is given: `(π/2)·2⁻¹²` radians.
pub const DEFAULT_EPSILON: f64 = FRAC_PI_2 / 4096.0;

#[derive(Debug, Error)]
pub enum UStateError {
    #[error("cocycle reads coordinates outside [0, {max}) (window [{lo}, {hi}))")]
    Window { lo: i64, hi: i64, max: usize },
    #[error("family depth {depth} is below the measure memory {memory}")]
    Depth { depth: usize, memory: usize },
    #[error("time reversal needs a memory-one measure, got memory {0}")]
    Reversal(usize),
    #[error("family word {0:?} is missing")]
    MissingWord(Vec<Symbol>),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Projective measures `m_x` for each admissible depth-`k` future word `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalFamily {
    depth: usize,
    epsilon: f64,
    words: Vec<Vec<Symbol>>,
    index: HashMap<Vec<Symbol>, usize>,
    conds: Vec<ProjMeasure>,
}

impl ConditionalFamily {
    pub fn from_fn(spec: &SubshiftSpec, depth: usize, epsilon: f64, mut f: impl FnMut(&[Symbol]) -> ProjMeasure) -> Self {
        let words = spec.words(depth);
        let conds = words.iter().map(|w| f(w)).collect();
        Self::assemble(depth, epsilon, words, conds)
    }

    fn assemble(depth: usize, epsilon: f64, words: Vec<Vec<Symbol>>, conds: Vec<ProjMeasure>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self { depth, epsilon, words, index, conds }
    }

    /// Every word gets `grid` equal atoms at `(k + ½)π/grid`.
    pub fn uniform(spec: &SubshiftSpec, depth: usize, grid: usize, epsilon: f64) -> Self {
        let g = ProjMeasure::uniform_grid(grid);
        Self::from_fn(spec, depth, epsilon, |_| g.clone())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn words(&self) -> &[Vec<Symbol>] {
        &self.words
    }

    pub fn conds(&self) -> &[ProjMeasure] {
        &self.conds
    }

    pub fn get(&self, w: &[Symbol]) -> Option<&ProjMeasure> {
        self.index.get(w).map(|&i| &self.conds[i])
    }

    /// Conditional at the depth-`k` truncation of a point's future.
    pub fn at(&self, x: &PointRep) -> Option<&ProjMeasure> {
        self.get(&x.slice(0, self.depth as i64))
    }

    pub fn map(&self, f: impl Fn(&[Symbol], &ProjMeasure) -> ProjMeasure) -> Self {
        let conds = self.words.iter().zip(&self.conds).map(|(w, m)| f(w, m)).collect();
        Self::assemble(self.depth, self.epsilon, self.words.clone(), conds)
    }

    /// Same words and resolution, new measures (one per word, in order).
    pub fn with_conds(&self, conds: Vec<ProjMeasure>) -> Self {
        assert_eq!(conds.len(), self.words.len());
        Self::assemble(self.depth, self.epsilon, self.words.clone(), conds)
    }

    /// Largest binned Kolmogorov distance between matching conditionals.
    pub fn distance(&self, other: &Self) -> f64 {
        self.conds.iter().zip(&other.conds).map(|(a, b)| kolmogorov(a, b, self.epsilon)).fold(0.0, f64::max)
    }
}

fn check_window(c: &WindowedCocycle, max: usize) -> Result<i64, UStateError> {
    let (lo, hi) = c.bounds();
    if lo < 0 || hi as usize > max {
        return Err(UStateError::Window { lo, hi, max });
    }
    Ok(lo)
}

/// `m_x ↦ Σ_{f y = x} (1/J^u(y)) · A(y)_* m_y`, coalesced at the family resolution.
pub fn push_invariance(fam: &ConditionalFamily, c: &WindowedCocycle, m: &GibbsMeasure) -> Result<ConditionalFamily, UStateError> {
    let k = fam.depth;
    let lo = check_window(c, k + 1)? as usize;
    if m.memory() > k {
        return Err(UStateError::Depth { depth: k, memory: m.memory() });
    }
    let spec = c.spec();
    let conds = fam
        .words
        .par_iter()
        .map(|x| {
            let parts: Vec<ProjMeasure> = spec
                .predecessors(x[0])
                .map(|s| {
                    let mut y = Vec::with_capacity(k + 1);
                    y.push(s);
                    y.extend_from_slice(x);
                    let a = c.table().at_word(&y, lo);
                    let w = 1.0 / m.jac_u_word(&y);
                    let input = fam.get(&y[..k]).ok_or_else(|| UStateError::MissingWord(y[..k].to_vec()))?;
                    Ok(input.push(a).scaled(w))
                })
                .collect::<Result<_, UStateError>>()?;
            Ok(ProjMeasure::sum(parts).coalesce(fam.epsilon))
        })
        .collect::<Result<Vec<_>, UStateError>>()?;
    Ok(ConditionalFamily::assemble(k, fam.epsilon, fam.words.clone(), conds))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UStateOptions {
    /// Defaults to the smallest exact depth `max(hi, memory, 1)`.
    pub depth: Option<usize>,
    pub epsilon: f64,
    pub grid: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for UStateOptions {
    fn default() -> Self {
        Self { depth: None, epsilon: DEFAULT_EPSILON, grid: 64, max_iter: 200, tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct UStateSolution {
    pub family: ConditionalFamily,
    pub residual: f64,
    /// Residual after each iteration.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Iterates `push_invariance` from uniform grids until the residual drops below `tol`.
pub fn solve_u_state(c: &WindowedCocycle, m: &GibbsMeasure, opts: &UStateOptions) -> Result<UStateSolution, UStateError> {
    let (_, hi) = c.bounds();
    let depth = opts.depth.unwrap_or_else(|| (hi.max(1) as usize).max(m.memory()));
    let mut fam = ConditionalFamily::uniform(c.spec(), depth, opts.grid, opts.epsilon);
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let next = push_invariance(&fam, c, m)?;
        residual = next.distance(&fam);
        history.push(residual);
        fam = next;
        if residual <= opts.tol {
            return Ok(UStateSolution { family: fam, residual, history, converged: true });
        }
    }
    Ok(UStateSolution { family: fam, residual, history, converged: false })
}

/// `∫ Φ_A dm = Σ_x μ[x] ∫ log ‖A(x) v̂‖ dm_x(v)`.
pub fn lyap_from_family(fam: &ConditionalFamily, c: &WindowedCocycle, m: &GibbsMeasure) -> Result<f64, UStateError> {
    let lo = check_window(c, fam.depth)? as usize;
    Ok(fam
        .words
        .iter()
        .zip(&fam.conds)
        .map(|(x, mx)| {
            let a = c.table().at_word(x, lo);
            m.cylinder(x) * mx.atoms().iter().map(|&(t, w)| w * log_gain(a, Direction::new(t))).sum::<f64>()
        })
        .sum())
}

/// `∫ log |det A| dμ`.
pub fn log_det_integral(c: &WindowedCocycle, m: &GibbsMeasure) -> f64 {
    // a window word on [lo, hi) has the law of the cylinder [0; w] by invariance
    m.integrate_words(c.table().width(), |w| c.table().at_word(w, 0).det().abs().ln())
}

/// Time reversal: the inverse cocycle over `f⁻¹`, written on reversed
/// sequences `x'_n = x_{−n}` and straightened, with the reversed Markov chain.
pub fn reverse_system(c: &WindowedCocycle, m: &GibbsMeasure) -> Result<(WindowedCocycle, GibbsMeasure), UStateError> {
    if m.memory() != 1 {
        return Err(UStateError::Reversal(m.memory()));
    }
    let spec = c.spec();
    let n = spec.alphabet_size();
    let qt: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| spec.transitions()[j][i]).collect()).collect();
    let rev_spec = SubshiftSpec::new(qt, spec.theta())?;
    let (lo, hi) = c.bounds();
    let b = WindowedCocycle::from_fn(&rev_spec, 2 - hi, 2 - lo, |w| {
        let mut orig = w.to_vec();
        orig.reverse();
        c.table().get(&orig).expect("reversed window word is admissible").inv()
    })?;
    let b = straighten(&b, &default_anchors(&rev_spec))?;
    let mut pstar = m.reversed();
    for row in &mut pstar {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    let mr = GibbsMeasure::markov(&rev_spec, pstar)?;
    Ok((b, mr))
}

/// Both exponents from invariant families: `λ₊` from the u-state of `(A, f)`,
/// `λ₋ = −λ₊` of the time-reversed inverse system.
#[derive(Debug, Clone)]
pub struct StateExponents {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub u: UStateSolution,
    pub s: UStateSolution,
}

pub fn exponents_from_states(c: &WindowedCocycle, m: &GibbsMeasure, opts: &UStateOptions) -> Result<StateExponents, UStateError> {
    let cs = straighten(c, &default_anchors(c.spec()))?;
    let u = solve_u_state(&cs, m, opts)?;
    let lambda_plus = lyap_from_family(&u.family, &cs, m)?;
    let (b, mr) = reverse_system(&cs, m)?;
    let s = solve_u_state(&b, &mr, opts)?;
    let lambda_minus = -lyap_from_family(&s.family, &b, &mr)?;
    Ok(StateExponents { lambda_plus, lambda_minus, u, s })
}

/// Unstable and stable directions at a point, estimated from `n` iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Oseledets {
    pub eu: Direction,
    pub es: Direction,
    /// `d(A(x)E(x), E(fx))` for each side.
    pub eu_residual: f64,
    pub es_residual: f64,
}

const SEED_DIRECTION: f64 = 1.0;

fn raw_dirs<C: Cocycle + ?Sized>(c: &C, x: &PointRep, n: usize) -> (Direction, Direction) {
    let n = n as i64;
    let seed = Direction::new(SEED_DIRECTION);
    let eu = act(&iterate(c, &x.shift(-n), n), seed);
    // adjugate avoids the cancelled determinant of a long product
    let es = act(&iterate(c, x, n).adjugate(), seed);
    (eu, es)
}

pub fn oseledets_dirs<C: Cocycle + ?Sized>(c: &C, x: &PointRep, n: usize) -> Oseledets {
    let (eu, es) = raw_dirs(c, x, n);
    let fx = x.shift(1);
    let (eu1, es1) = raw_dirs(c, &fx, n);
    let a = c.at(x, 0);
    Oseledets { eu, es, eu_residual: dist(act(&a, eu), eu1), es_residual: dist(act(&a, es), es1) }
}

/// Empirical families `(m^u, m^s)`: Dirac masses at `E^u`, `E^s` of sampled
/// points, averaged within each depth-`k` future word.
pub fn oseledets_families<C: Cocycle + Sync + ?Sized>(
    c: &C,
    m: &GibbsMeasure,
    depth: usize,
    samples: usize,
    n: usize,
    seed: u64,
) -> (ConditionalFamily, ConditionalFamily) {
    let spec = c.spec();
    let half = n + depth + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<PointRep> = (0..samples).map(|_| spec.close_word(m.sample_with(2 * half, &mut rng), half as i64)).collect();
    let dirs: Vec<(Vec<Symbol>, Oseledets)> = points.par_iter().map(|x| (x.slice(0, depth as i64), oseledets_dirs(c, x, n))).collect();
    let build = |pick: fn(&Oseledets) -> Direction| {
        ConditionalFamily::from_fn(spec, depth, 0.0, |w| {
            let hits: Vec<f64> = dirs.iter().filter(|(v, _)| v == w).map(|(_, o)| pick(o).angle()).collect();
            let k = hits.len().max(1) as f64;
            ProjMeasure::new(hits.into_iter().map(|t| (t, 1.0 / k)))
        })
    };
    (build(|o| o.eu), build(|o| o.es))
}

/// Maximal atoms of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSpectrum {
    pub gamma0: f64,
    /// Angles of atoms of mass `γ₀` per word.
    pub sets: Vec<Vec<f64>>,
    pub cards: Vec<usize>,
    pub card_constant: bool,
    /// Hausdorff distance (radians) between `A(y)(V_y)` and `V_{f y}`, if a cocycle was given.
    pub invariance_residual: Option<f64>,
}

const ATOM_MASS_TOL: f64 = 1e-9;

pub fn atom_spectrum(fam: &ConditionalFamily, c: Option<&WindowedCocycle>) -> Result<AtomSpectrum, UStateError> {
    let gamma0 = fam.conds.iter().map(ProjMeasure::max_atom).fold(0.0, f64::max);
    let sets: Vec<Vec<f64>> =
        fam.conds.iter().map(|m| m.atoms().iter().filter(|a| a.1 >= gamma0 - ATOM_MASS_TOL).map(|a| a.0).collect()).collect();
    let cards: Vec<usize> = sets.iter().map(Vec::len).collect();
    let card_constant = cards.windows(2).all(|w| w[0] == w[1]);
    let invariance_residual = match c {
        None => None,
        Some(c) => {
            let lo = check_window(c, fam.depth)? as usize;
            let spec = c.spec();
            let mut worst = 0.0f64;
            for (y, vy) in fam.words.iter().zip(&sets) {
                let a = c.table().at_word(y, lo);
                let img: Vec<f64> = vy.iter().map(|&t| act(a, Direction::new(t)).angle()).collect();
                for s in spec.successors(*y.last().unwrap()) {
                    let mut fy = y[1..].to_vec();
                    fy.push(s);
                    let i = fam.index[&fy];
                    worst = worst.max(hausdorff(&img, &sets[i]));
                }
            }
            Some(worst)
        }
    };
    Ok(AtomSpectrum { gamma0, sets, cards, card_constant, invariance_residual })
}

fn hausdorff(a: &[f64], b: &[f64]) -> f64 {
    let one_way = |a: &[f64], b: &[f64]| {
        a.iter().map(|&s| b.iter().map(|&t| dist(Direction::new(s), Direction::new(t))).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    one_way(a, b).max(one_way(b, a)) * FRAC_PI_2
}

/// Holonomy invariance of a family along local stable and unstable sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuReport {
    pub s_residual: f64,
    pub u_residual: f64,
    pub pairs: usize,
}

impl SuReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.s_residual <= tol && self.u_residual <= tol
    }
}

/// Compares `(H_{xy})_* m_x` with `m_y` over all pairs of family words sharing
/// `x_0`, with pasts taken from the default anchors.
pub fn su_check(fam: &ConditionalFamily, c: &WindowedCocycle) -> Result<SuReport, UStateError> {
    use crate::cocycle::holonomy;
    use crate::symbolic::Side;
    let spec = c.spec();
    let anchors = default_anchors(spec);
    let point = |w: &[Symbol]| {
        let fut = spec.close_word(w.to_vec(), 0);
        fut.with_past_of(spec, &anchors[w[0] as usize]).expect("anchor ends before w_0")
    };
    let pts: Vec<PointRep> = fam.words.iter().map(|w| point(w)).collect();
    let mut pairs = Vec::new();
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i != j && fam.words[i][0] == fam.words[j][0] {
                pairs.push((i, j));
            }
        }
    }
    let u_residual = pairs
        .par_iter()
        .map(|&(i, j)| {
            let h = holonomy(c, &pts[i], &pts[j], Side::U, 1e-14)?;
            Ok(kolmogorov(&fam.conds[i].push(&h.matrix), &fam.conds[j], fam.epsilon.max(1e-12)))
        })
        .collect::<Result<Vec<f64>, CocycleError>>()?
        .into_iter()
        .fold(0.0, f64::max);
    // pairs on a local stable set share the future, hence the family word
    let s_residual = pts
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut worst = 0.0f64;
            for s in spec.predecessors(x.at(0)) {
                let past = PointRep::periodic(spec, &spec.cycle_from(s)).expect("cycle").shift(1);
                let y = x.with_past_of(spec, &past).expect("s precedes x_0");
                let h = holonomy(c, x, &y, Side::S, 1e-14)?;
                let my = fam.at(&y).expect("same future word");
                worst = worst.max(kolmogorov(&fam.conds[i].push(&h.matrix), my, fam.epsilon.max(1e-12)));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>, CocycleError>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(SuReport { s_residual, u_residual, pairs: pairs.len() })
}

/// Histogram of a measure on `bins` equal angular bins over `[0, π)`.
pub fn histogram(m: &ProjMeasure, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &(t, w) in m.atoms() {
        let b = ((t / PI) * bins as f64) as usize;
        h[b.min(bins - 1)] += w;
    }
    h
}
