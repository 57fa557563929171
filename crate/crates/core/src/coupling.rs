//! Symmetric self-couplings of atomic projective measures, the additive
//! Margulis energy, and the constructions that lower it.
//!
//! Every construction here is an exact finite operation on atom lists.
//! Atoms only ever sit on pairs of target atom positions, so merging is by
//! exact coordinate equality and marginals can be compared atom by atom.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cocycle::{Cocycle, Mat2, WindowedCocycle};
use crate::projective::{act, dist, margulis_geometry, radii_for_family, Direction, Geometry, MargulisError, ProjMeasure};
use crate::symbolic::{SubshiftSpec, Symbol};
use crate::thermo::GibbsMeasure;
use crate::ustate::ConditionalFamily;

/// Pairs closer than `2⁻⁴⁰` are rejected when energy is requested.
pub const NEAR_DIAGONAL: f64 = 9.094947017729282e-13;
/// Marginal agreement required after every construction (total variation).
pub const MARGINAL_TOL: f64 = 1e-10;
/// Slack on the decrement inequality.
pub const DECREMENT_SLACK: f64 = 1e-9;
const MAX_SWEEPS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("word {word:?}: atom at ({u}, {v}) is within 2^-40 of the diagonal")]
    Diagonal { word: Vec<Symbol>, u: f64, v: f64 },
    #[error("measure has zero mass")]
    ZeroMass,
    #[error("word {word:?}: ball around angle {center} of radius 2r carries {mass} >= {bound}")]
    SmallBall { word: Vec<Symbol>, center: f64, mass: f64, bound: f64 },
    #[error("word {word:?}: θ = {theta} is not below 1")]
    Theta { word: Vec<Symbol>, theta: f64 },
    #[error("word {word:?}: diagonal squares still charged after {sweeps} sweeps ({mass})")]
    Sweeps { word: Vec<Symbol>, sweeps: usize, mass: f64 },
    #[error("word {word:?}: ‖ν‖ = {nu} exceeds ‖η‖ = {eta}")]
    Confine { word: Vec<Symbol>, nu: f64, eta: f64 },
    #[error("word {word:?}: defect identity residual {residual}")]
    Defect { word: Vec<Symbol>, residual: f64 },
    #[error("word {word:?}: ‖λ‖ = {lambda} exceeds ‖θ‖ = {theta}")]
    Positivity { word: Vec<Symbol>, lambda: f64, theta: f64 },
    #[error("word {word:?}: marginal off target by {tv}")]
    Marginal { word: Vec<Symbol>, tv: f64 },
    #[error("cocycle window [{lo}, {hi}) or measure memory {memory} exceeds family depth {depth}")]
    Depth { lo: i64, hi: i64, memory: usize, depth: usize },
    #[error("parameter hypotheses fail for the pushed family: {0}")]
    Hypotheses(MargulisError),
}

/// Finite measure on ℙ¹ × ℙ¹ as `(u, v, mass)` atoms, angles in `[0, π)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Coupling {
    atoms: Vec<(f64, f64, f64)>,
}

impl Coupling {
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        let mut v: Vec<(f64, f64, f64)> = atoms.into_iter().filter(|a| a.2 > 0.0).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut out: Vec<(f64, f64, f64)> = Vec::with_capacity(v.len());
        for a in v {
            match out.last_mut() {
                Some(l) if l.0 == a.0 && l.1 == a.1 => l.2 += a.2,
                _ => out.push(a),
            }
        }
        Self { atoms: out }
    }

    /// `s · (a × b)`.
    pub fn product(a: &ProjMeasure, b: &ProjMeasure, s: f64) -> Self {
        Self::new(a.atoms().iter().flat_map(|&(u, x)| b.atoms().iter().map(move |&(v, y)| (u, v, s * x * y))))
    }

    pub fn sum(parts: impl IntoIterator<Item = Coupling>) -> Self {
        Self::new(parts.into_iter().flat_map(|c| c.atoms))
    }

    pub fn atoms(&self) -> &[(f64, f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.2).sum()
    }

    /// `(π_j)_* ξ` for `j ∈ {1, 2}`.
    pub fn marginal(&self, j: usize) -> ProjMeasure {
        ProjMeasure::new(self.atoms.iter().map(|&(u, v, m)| (if j == 1 { u } else { v }, m)))
    }

    pub fn restrict(&self, f: impl Fn(Direction, Direction) -> bool) -> Self {
        Self { atoms: self.atoms.iter().copied().filter(|&(u, v, _)| f(Direction::new(u), Direction::new(v))).collect() }
    }

    pub fn mass_where(&self, f: impl Fn(Direction, Direction) -> bool) -> f64 {
        self.atoms.iter().filter(|&&(u, v, _)| f(Direction::new(u), Direction::new(v))).map(|a| a.2).sum()
    }

    /// Scales the atoms satisfying `f` by `s`, leaving the rest.
    pub fn scale_where(&self, s: f64, f: impl Fn(Direction, Direction) -> bool) -> Self {
        Self::new(self.atoms.iter().map(|&(u, v, m)| if f(Direction::new(u), Direction::new(v)) { (u, v, m * s) } else { (u, v, m) }))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.atoms.iter().map(|&(u, v, m)| (u, v, m * s)))
    }

    /// `ι_* ξ`.
    pub fn swapped(&self) -> Self {
        Self::new(self.atoms.iter().map(|&(u, v, m)| (v, u, m)))
    }

    /// `(ℙM × ℙM)_* ξ`.
    pub fn push(&self, m: &Mat2) -> Self {
        Self::new(self.atoms.iter().map(|&(u, v, w)| (act(m, Direction::new(u)).angle(), act(m, Direction::new(v)).angle(), w)))
    }

    /// Total variation between `ξ` and `ι_* ξ`.
    pub fn symmetry_residual(&self) -> f64 {
        atom_tv(&self.atoms, &self.swapped().atoms)
    }

    pub fn min_pair_distance(&self) -> f64 {
        self.atoms.iter().map(|&(u, v, _)| dist(Direction::new(u), Direction::new(v))).fold(f64::INFINITY, f64::min)
    }

    /// `∫ φ dξ`, rejecting atoms within `2⁻⁴⁰` of the diagonal.
    pub fn energy(&self) -> Result<f64, (f64, f64)> {
        let mut e = 0.0;
        for &(u, v, m) in &self.atoms {
            let d = dist(Direction::new(u), Direction::new(v));
            if d < NEAR_DIAGONAL {
                return Err((u, v));
            }
            e -= m * d.ln();
        }
        Ok(e)
    }

    /// `∫ φ(Mu, Mv) dξ` over atoms satisfying `f`.
    fn pushed_energy_where(&self, m: &Mat2, f: impl Fn(Direction, Direction) -> bool) -> f64 {
        self.atoms
            .iter()
            .filter(|&&(u, v, _)| f(Direction::new(u), Direction::new(v)))
            .map(|&(u, v, w)| -w * dist(act(m, Direction::new(u)), act(m, Direction::new(v))).ln())
            .sum()
    }

    fn energy_where(&self, f: impl Fn(Direction, Direction) -> bool) -> f64 {
        self.atoms
            .iter()
            .filter(|&&(u, v, _)| f(Direction::new(u), Direction::new(v)))
            .map(|&(u, v, w)| -w * dist(Direction::new(u), Direction::new(v)).ln())
            .sum()
    }
}

fn atom_tv(a: &[(f64, f64, f64)], b: &[(f64, f64, f64)]) -> f64 {
    let signed = a.iter().copied().chain(b.iter().map(|&(u, v, m)| (u, v, -m)));
    let mut v: Vec<(f64, f64, f64)> = signed.collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let mut tv = 0.0;
    let mut i = 0;
    while i < v.len() {
        let (u, w) = (v[i].0, v[i].1);
        let mut s = 0.0;
        while i < v.len() && v[i].0 == u && v[i].1 == w {
            s += v[i].2;
            i += 1;
        }
        tv += s.abs();
    }
    tv
}

/// Total variation between atomic measures, matching atoms by exact angle.
pub fn measure_tv(a: &ProjMeasure, b: &ProjMeasure) -> f64 {
    let to = |m: &ProjMeasure| m.atoms().iter().map(|&(t, w)| (t, 0.0, w)).collect::<Vec<_>>();
    atom_tv(&to(a), &to(b))
}

/// `(1/‖ν‖) ν × ν`.
pub fn trivial_coupling(nu: &ProjMeasure) -> Result<Coupling, CouplingError> {
    let mass = nu.total_mass();
    if mass <= 0.0 {
        return Err(CouplingError::ZeroMass);
    }
    Ok(Coupling::product(nu, nu, 1.0 / mass))
}

/// Couplings of `m_x|U_x`, one per family word, with `U_x = B(q, ρ(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingFamily {
    pub targets: ConditionalFamily,
    pub rho: Vec<f64>,
    pub couplings: Vec<Coupling>,
}

impl CouplingFamily {
    pub fn depth(&self) -> usize {
        self.targets.depth()
    }

    pub fn words(&self) -> &[Vec<Symbol>] {
        self.targets.words()
    }

    /// `m_x|U_x`.
    pub fn target(&self, i: usize) -> ProjMeasure {
        let r = self.rho[i];
        self.targets.conds()[i].restrict(|v| dist(Direction::Q, v) < r)
    }

    /// Trivial self-couplings of the restricted targets.
    pub fn trivial(targets: ConditionalFamily, rho: Vec<f64>) -> Result<Self, CouplingError> {
        let mut fam = Self { targets, rho, couplings: Vec::new() };
        fam.couplings = (0..fam.rho.len()).map(|i| trivial_coupling(&fam.target(i))).collect::<Result<_, _>>()?;
        Ok(fam)
    }

    fn with_couplings(&self, couplings: Vec<Coupling>) -> Self {
        Self { targets: self.targets.clone(), rho: self.rho.clone(), couplings }
    }

    /// Largest marginal total variation against the targets, over both marginals.
    pub fn marginal_residual(&self) -> f64 {
        (0..self.couplings.len())
            .map(|i| {
                let t = self.target(i);
                measure_tv(&self.couplings[i].marginal(1), &t).max(measure_tv(&self.couplings[i].marginal(2), &t))
            })
            .fold(0.0, f64::max)
    }

    pub fn symmetry_residual(&self) -> f64 {
        self.couplings.iter().map(Coupling::symmetry_residual).fold(0.0, f64::max)
    }

    pub fn check_marginals(&self) -> Result<(), CouplingError> {
        for (i, c) in self.couplings.iter().enumerate() {
            let t = self.target(i);
            let tv = measure_tv(&c.marginal(1), &t).max(measure_tv(&c.marginal(2), &t));
            if tv > MARGINAL_TOL {
                return Err(CouplingError::Marginal { word: self.words()[i].clone(), tv });
            }
        }
        Ok(())
    }
}

/// `Σ_x μ[x] ∫ φ dξ_x`.
pub fn energy(fam: &CouplingFamily, m: &GibbsMeasure) -> Result<f64, CouplingError> {
    let mut total = 0.0;
    for (w, c) in fam.words().iter().zip(&fam.couplings) {
        let e = c.energy().map_err(|(u, v)| CouplingError::Diagonal { word: w.clone(), u, v })?;
        total += m.cylinder(w) * e;
    }
    Ok(total)
}

fn in_ball(center: f64, r: f64) -> impl Fn(Direction) -> bool {
    move |v| dist(Direction::new(center), v) < r
}

/// Largest mass of `ν` in an open ball of radius `radius`, and a center achieving it.
pub fn max_ball_mass(nu: &ProjMeasure, radius: f64) -> (f64, f64) {
    let atoms = nu.atoms();
    let mut best = (0.0, 0.0);
    for &(c, _) in atoms {
        // the heaviest ball can be slid until an atom sits just inside its left edge
        let center = Direction::new(c + radius * FRAC_PI_2 * (1.0 - 1e-12)).angle();
        let mass = nu.mass_where(in_ball(center, radius));
        if mass > best.0 {
            best = (mass, center);
        }
    }
    best
}

/// Largest dyadic `r ≤ 1/8` with `m_x|U_x(B(u, 2r)) < ‖m_x|U_x‖/10` for every word and `u`.
pub fn spread_radius(fam: &CouplingFamily) -> f64 {
    let bound = |i: usize| fam.target(i).total_mass() / 10.0;
    let mut r = 0.125;
    while r > 1e-300 {
        if (0..fam.rho.len()).all(|i| max_ball_mass(&fam.target(i), 2.0 * r).0 < bound(i)) {
            return r;
        }
        r *= 0.5;
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadReport {
    /// Lebesgue number of the cover, `r/2`.
    pub r0: f64,
    pub sweeps: usize,
    /// Mass moved off cover squares, per word.
    pub moved: Vec<f64>,
}

/// Cover centers at multiples of `r` (normalized units) whose ball meets the support.
fn cover_centers(nu: &ProjMeasure, r: f64) -> Vec<f64> {
    let count = (2.0 / r).ceil() as i64;
    let mut idx: Vec<i64> = Vec::new();
    for &(t, _) in nu.atoms() {
        let s = t / FRAC_PI_2;
        let lo = ((s - r) / r).floor() as i64;
        for i in lo..=lo + 3 {
            let i = i.rem_euclid(count);
            let c = i as f64 * r * FRAC_PI_2;
            if dist(Direction::new(c), Direction::new(t)) < r {
                idx.push(i);
            }
        }
    }
    idx.sort_unstable();
    idx.dedup();
    idx.into_iter().map(|i| Direction::new(i as f64 * r * FRAC_PI_2).angle()).collect()
}

/// One ball step: empties `B(v, r)²` by recoupling its mass with `B(v, 2r)ᶜ²`.
pub fn spread_ball(xi: &Coupling, center: f64, r: f64) -> Result<(Coupling, f64), f64> {
    let b = in_ball(center, r);
    let b2 = in_ball(center, 2.0 * r);
    let inner = |u: Direction, v: Direction| b(u) && b(v);
    let outer = |u: Direction, v: Direction| !b2(u) && !b2(v);
    let a = xi.mass_where(inner);
    if a == 0.0 {
        return Ok((xi.clone(), 0.0));
    }
    let c = xi.mass_where(outer);
    let theta = if c > 0.0 { a / c } else { f64::INFINITY };
    if theta >= 1.0 {
        return Err(theta);
    }
    let zeta = Coupling::product(&xi.restrict(inner).marginal(1), &xi.restrict(outer).marginal(1), theta / a);
    let kept = Coupling::new(xi.atoms().iter().filter_map(|&(u, v, m)| {
        let (du, dv) = (Direction::new(u), Direction::new(v));
        if inner(du, dv) {
            None
        } else if outer(du, dv) {
            Some((u, v, m * (1.0 - theta)))
        } else {
            Some((u, v, m))
        }
    }));
    Ok((Coupling::sum([kept, zeta.swapped(), zeta]), a))
}

/// Removes the near-diagonal mass at scale `r` from every coupling.
pub fn spread_diagonal(fam: &CouplingFamily, r: f64) -> Result<(CouplingFamily, SpreadReport), CouplingError> {
    let results: Vec<Result<(Coupling, f64, usize), CouplingError>> = (0..fam.couplings.len())
        .into_par_iter()
        .map(|i| {
            let word = fam.words()[i].clone();
            let target = fam.target(i);
            let bound = target.total_mass() / 10.0;
            let (mass, center) = max_ball_mass(&target, 2.0 * r);
            if mass >= bound {
                return Err(CouplingError::SmallBall { word, center, mass, bound });
            }
            let centers = cover_centers(&target, r);
            let mut xi = fam.couplings[i].clone();
            let mut moved = 0.0;
            for sweep in 1..=MAX_SWEEPS {
                let mut swept = 0.0;
                for &c in &centers {
                    let (next, a) = spread_ball(&xi, c, r).map_err(|theta| CouplingError::Theta { word: word.clone(), theta })?;
                    xi = next;
                    swept += a;
                }
                moved += swept;
                if swept == 0.0 {
                    return Ok((xi, moved, sweep));
                }
            }
            let left: f64 = centers.iter().map(|&c| xi.mass_where(|u, v| in_ball(c, r)(u) && in_ball(c, r)(v))).sum();
            Err(CouplingError::Sweeps { word, sweeps: MAX_SWEEPS, mass: left })
        })
        .collect();
    let mut couplings = Vec::new();
    let mut report = SpreadReport { r0: r / 2.0, sweeps: 0, moved: Vec::new() };
    for res in results {
        let (xi, moved, sweeps) = res?;
        couplings.push(xi);
        report.moved.push(moved);
        report.sweeps = report.sweeps.max(sweeps);
    }
    Ok((fam.with_couplings(couplings), report))
}

/// Recouples the mass on `U₂ᶜ × U₂ᶜ` with `U₃ × U₃`; returns the per-word energy increase.
pub fn confine(fam: &CouplingFamily, geo: &Geometry) -> Result<(CouplingFamily, Vec<f64>), CouplingError> {
    let (r2, r3) = (geo.radii[2], geo.radii[3]);
    let u2c = move |u: Direction, v: Direction| dist(Direction::Q, u) >= r2 && dist(Direction::Q, v) >= r2;
    let u3 = move |u: Direction, v: Direction| dist(Direction::Q, u) < r3 && dist(Direction::Q, v) < r3;
    let mut out = Vec::new();
    let mut delta = Vec::new();
    for (w, xi) in fam.words().iter().zip(&fam.couplings) {
        let nu = xi.restrict(u2c).marginal(1);
        let eta = xi.restrict(u3).marginal(1);
        let (n, e) = (nu.total_mass(), eta.total_mass());
        if n == 0.0 {
            out.push(xi.clone());
            delta.push(0.0);
            continue;
        }
        if n > e {
            return Err(CouplingError::Confine { word: w.clone(), nu: n, eta: e });
        }
        let kept = Coupling::new(xi.atoms().iter().filter_map(|&(u, v, m)| {
            let (du, dv) = (Direction::new(u), Direction::new(v));
            if u2c(du, dv) {
                None
            } else if u3(du, dv) {
                Some((u, v, m * (1.0 - n / e)))
            } else {
                Some((u, v, m))
            }
        }));
        let cross = Coupling::product(&nu, &eta, 1.0 / e);
        let next = Coupling::sum([kept, cross.swapped(), cross]);
        let before = xi.energy().map_err(|(u, v)| CouplingError::Diagonal { word: w.clone(), u, v })?;
        let after = next.energy().map_err(|(u, v)| CouplingError::Diagonal { word: w.clone(), u, v })?;
        delta.push(after - before);
        out.push(next);
    }
    Ok((fam.with_couplings(out), delta))
}

/// `(word of length N + k, A^N, g, source index)`.
pub type Preimage = (Vec<Symbol>, Mat2, f64, usize);

/// Predecessor data for `f^{-N}`: for each family word, the `(N + k)`-words
/// ending in it with `A^N`, the weight `1/J^N` and the source family index.
#[derive(Debug, Clone)]
pub struct Preimages {
    pub n: usize,
    /// Per target word.
    pub entries: Vec<Vec<Preimage>>,
}

pub fn preimages(targets: &ConditionalFamily, c: &WindowedCocycle, m: &GibbsMeasure, n: usize) -> Result<Preimages, CouplingError> {
    let k = targets.depth();
    let (lo, hi) = c.bounds();
    if lo < 0 || hi as usize > k + 1 || m.memory() > k {
        return Err(CouplingError::Depth { lo, hi, memory: m.memory(), depth: k });
    }
    let km = m.memory();
    let spec = c.spec();
    let mut entries = vec![Vec::new(); targets.words().len()];
    let index = |w: &[Symbol]| targets.words().iter().position(|x| x == w).expect("family covers every admissible word");
    for y in spec.words(n + k) {
        let a = c.product_on_word(&y[lo as usize..], n);
        let g: f64 = (0..n).map(|j| 1.0 / m.jac_u_word(&y[j..j + km + 1])).product();
        let src = index(&y[..k]);
        entries[index(&y[n..])].push((y, a, g, src));
    }
    Ok(Preimages { n, entries })
}

/// `x ↦ Σ_y g(y) ℙA^N(y)_* m_y` on a whole family.
pub fn push_family(targets: &ConditionalFamily, pre: &Preimages) -> ConditionalFamily {
    targets.with_conds(
        pre.entries.iter().map(|ys| ProjMeasure::sum(ys.iter().map(|(_, a, g, src)| targets.conds()[*src].push(a).scaled(*g)))).collect(),
    )
}

/// `ξ̂_x` together with the pushed exterior mass `Σ_y g(y) ℙA^N(y)_*(m_y|U_yᶜ)`.
#[derive(Debug, Clone)]
pub struct RawFamily {
    pub xi_hat: Vec<Coupling>,
    pub exterior: Vec<ProjMeasure>,
    pub pushed: ConditionalFamily,
}

pub fn transfer_pushforward(fam: &CouplingFamily, pre: &Preimages) -> RawFamily {
    let exterior_src: Vec<ProjMeasure> =
        (0..fam.rho.len()).map(|i| fam.targets.conds()[i].restrict(|v| dist(Direction::Q, v) >= fam.rho[i])).collect();
    let (xi_hat, exterior): (Vec<Coupling>, Vec<ProjMeasure>) = pre
        .entries
        .par_iter()
        .map(|ys| {
            let xi = Coupling::sum(ys.iter().map(|(_, a, g, src)| fam.couplings[*src].push(a).scaled(*g)));
            let ext = ProjMeasure::sum(ys.iter().map(|(_, a, g, src)| exterior_src[*src].push(a).scaled(*g)));
            (xi, ext)
        })
        .unzip();
    RawFamily { xi_hat, exterior, pushed: push_family(&fam.targets, pre) }
}

/// `m_x|U_x = η_x + I_x + O_x` for one word.
#[derive(Debug, Clone, PartialEq)]
pub struct Defect {
    pub eta: ProjMeasure,
    pub inbound: ProjMeasure,
    pub outbound: ProjMeasure,
    pub residual: f64,
    /// `‖O‖ ≤ ‖I‖ ≤ 2δ`.
    pub norms_ok: bool,
    /// `supp I ⊂ U₁ᶜ`.
    pub support_ok: bool,
}

pub fn defect_split(raw: &RawFamily, rho: &[f64], geo: &Geometry) -> Result<Vec<Defect>, CouplingError> {
    (0..rho.len())
        .map(|i| {
            let r = rho[i];
            let inside = move |v: Direction| dist(Direction::Q, v) < r;
            let xi = &raw.xi_hat[i];
            let eta = xi.restrict(|u, v| inside(u) && inside(v)).marginal(1);
            let outbound = xi.restrict(|u, v| inside(u) && !inside(v)).marginal(1);
            let inbound = raw.exterior[i].restrict(inside);
            let target = raw.pushed.conds()[i].restrict(inside);
            let sum = ProjMeasure::sum([eta.clone(), inbound.clone(), outbound.clone()]);
            let residual = measure_tv(&sum, &target);
            if residual > MARGINAL_TOL {
                return Err(CouplingError::Defect { word: raw.pushed.words()[i].clone(), residual });
            }
            let (o, n) = (outbound.total_mass(), inbound.total_mass());
            let norms_ok = o <= n + MARGINAL_TOL && n <= 2.0 * geo.delta + MARGINAL_TOL;
            let support_ok = inbound.atoms().iter().all(|&(t, _)| !geo.in_u(1, Direction::new(t)));
            Ok(Defect { eta, inbound, outbound, residual, norms_ok, support_ok })
        })
        .collect()
}

/// One line of the decrement ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerTerm {
    pub term: &'static str,
    pub bound: f64,
    pub measured: f64,
}

impl LedgerTerm {
    /// Overheads are bounded above, gains below.
    pub fn holds(&self) -> bool {
        if self.term.ends_with("gain") || self.term == "drop" {
            self.measured >= self.bound - DECREMENT_SLACK
        } else {
            self.measured <= self.bound + DECREMENT_SLACK
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecrementOutcome {
    /// Couplings of the pushed targets restricted to their new `U_x`.
    pub family: CouplingFamily,
    pub energy_before: f64,
    pub energy_after: f64,
    pub ledger: Vec<LedgerTerm>,
    pub defects: Vec<Defect>,
}

/// Confine, push forward `N` steps, split the defect and reassemble a symmetric
/// self-coupling of the pushed targets with lower energy.
pub fn decrement_step(
    fam: &CouplingFamily,
    c: &WindowedCocycle,
    m: &GibbsMeasure,
    geo: &Geometry,
) -> Result<DecrementOutcome, CouplingError> {
    let energy_before = energy(fam, m)?;
    let (conf, dconf) = confine(fam, geo)?;
    let pre = preimages(&fam.targets, c, m, geo.n)?;
    let raw = transfer_pushforward(&conf, &pre);
    let rho = radii_for_family(geo, &raw.pushed).map_err(CouplingError::Hypotheses)?;
    let defects = defect_split(&raw, &rho, geo)?;
    let (r1, r2, r3) = (geo.radii[1], geo.radii[2], geo.radii[3]);
    let within = |r: f64| move |v: Direction| dist(Direction::Q, v) < r;

    let mut out = Vec::with_capacity(rho.len());
    let (mut cross_oi, mut cross_lt) = (0.0, 0.0);
    for (i, d) in defects.iter().enumerate() {
        let word = raw.pushed.words()[i].clone();
        let weight = m.cylinder(&word);
        let ux = within(rho[i]);
        let u3 = within(r3);
        let xi = &raw.xi_hat[i];
        let theta = xi.restrict(|u, v| u3(u) && u3(v)).marginal(1);
        let o_u2 = d.outbound.restrict(within(r2));
        let o_u2c = d.outbound.restrict(|v| !within(r2)(v));
        let (ni, no2) = (d.inbound.total_mass(), o_u2.total_mass());
        let lambda = if ni > 0.0 { ProjMeasure::sum([d.inbound.scaled(1.0 - no2 / ni), o_u2c]) } else { o_u2c };
        let (nl, nt) = (lambda.total_mass(), theta.total_mass());
        if nl > nt {
            return Err(CouplingError::Positivity { word, lambda: nl, theta: nt });
        }
        let base = Coupling::new(xi.atoms().iter().filter_map(|&(u, v, w)| {
            let (du, dv) = (Direction::new(u), Direction::new(v));
            if !(ux(du) && ux(dv)) {
                None
            } else if u3(du) && u3(dv) {
                Some((u, v, w * (1.0 - nl / nt)))
            } else {
                Some((u, v, w))
            }
        }));
        let oi = if ni > 0.0 { Coupling::product(&o_u2, &d.inbound, 1.0 / ni) } else { Coupling::default() };
        let lt = if nl > 0.0 { Coupling::product(&lambda, &theta, 1.0 / nt) } else { Coupling::default() };
        let e = |x: &Coupling| x.energy().map_err(|(u, v)| CouplingError::Diagonal { word: word.clone(), u, v });
        cross_oi += weight * 2.0 * e(&oi)?;
        cross_lt += weight * 2.0 * e(&lt)?;
        out.push(Coupling::sum([base, oi.swapped(), oi, lt.swapped(), lt]));
    }
    let family = CouplingFamily { targets: raw.pushed.clone(), rho, couplings: out };
    family.check_marginals()?;
    let energy_after = energy(&family, m)?;

    // expansion and exterior terms regrouped over (N + k)-words by invariance
    let u1 = within(r1);
    let u2 = within(r2);
    let mut gain = 0.0;
    let mut exterior = 0.0;
    for ys in &pre.entries {
        for (y, a, _, src) in ys {
            let xi = &conf.couplings[*src];
            let w = m.cylinder(y);
            let in11 = |u: Direction, v: Direction| u1(u) && u1(v);
            gain += w * (xi.energy_where(in11) - xi.pushed_energy_where(a, in11));
            exterior += w * xi.pushed_energy_where(a, |u, v| (u2(u) && !u1(v)) || (!u1(u) && u2(v)));
        }
    }
    let confine_overhead: f64 = fam.words().iter().zip(&dconf).map(|(w, d)| m.cylinder(w) * d).sum();
    let (d, m1, m2) = (geo.delta, geo.m1, geo.m2);
    let ledger = vec![
        LedgerTerm { term: "confine", bound: 4.0 * d * m2, measured: confine_overhead },
        LedgerTerm { term: "exterior pairs", bound: 4.0 * d * m1 * m2, measured: exterior },
        LedgerTerm { term: "O x I", bound: 4.0 * d * m2, measured: cross_oi },
        LedgerTerm { term: "lambda x theta", bound: 8.0 * d * m2, measured: cross_lt },
        LedgerTerm { term: "expansion gain", bound: 2.0 * geo.alpha, measured: gain },
        LedgerTerm { term: "drop", bound: geo.alpha, measured: energy_before - energy_after },
    ];
    Ok(DecrementOutcome { family, energy_before, energy_after, ledger, defects })
}

/// Why a descent stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum DescentEnd {
    /// Energy went negative: the contradiction.
    Contradiction {
        step: usize,
    },
    /// A step could not be carried out; the parameter hypotheses no longer hold.
    Broken {
        step: usize,
        reason: String,
    },
    StepLimit,
}

#[derive(Debug, Clone)]
pub struct Descent {
    pub energies: Vec<f64>,
    pub ledgers: Vec<Vec<LedgerTerm>>,
    pub end: DescentEnd,
    /// `⌈E₀/α⌉`.
    pub budget: usize,
}

impl Descent {
    pub fn contradiction(&self) -> bool {
        matches!(self.end, DescentEnd::Contradiction { .. })
    }

    pub fn drops(&self) -> Vec<f64> {
        self.energies.windows(2).map(|w| w[0] - w[1]).collect()
    }
}

/// Iterates `decrement_step` for at most `⌈E₀/α⌉` steps.
pub fn descend(fam: &CouplingFamily, c: &WindowedCocycle, m: &GibbsMeasure, geo: &Geometry) -> Result<Descent, CouplingError> {
    let e0 = energy(fam, m)?;
    let budget = (e0 / geo.alpha).ceil().max(1.0) as usize;
    let mut energies = vec![e0];
    let mut ledgers = Vec::new();
    let mut cur = fam.clone();
    for step in 1..=budget {
        match decrement_step(&cur, c, m, geo) {
            Ok(out) => {
                energies.push(out.energy_after);
                ledgers.push(out.ledger);
                cur = out.family;
                if out.energy_after < 0.0 {
                    return Ok(Descent { energies, ledgers, end: DescentEnd::Contradiction { step }, budget });
                }
            }
            Err(e) => {
                return Ok(Descent { energies, ledgers, end: DescentEnd::Broken { step, reason: e.to_string() }, budget });
            }
        }
    }
    Ok(Descent { energies, ledgers, end: DescentEnd::StepLimit, budget })
}

/// Generated instance: constant `diag(1/2, 2)` over a Bernoulli measure on two
/// symbols, with conditionals `α`-concentrated in a tiny one-sided bump at `q`,
/// `δ` of mass just outside `U₀`, and the rest near `p`.
#[derive(Debug, Clone)]
pub struct DemoInstance {
    pub cocycle: WindowedCocycle,
    pub measure: GibbsMeasure,
    pub geometry: Geometry,
    pub family: CouplingFamily,
    /// Radius used for the finite-energy construction.
    pub spread_r: f64,
}

pub const DEMO_BUMP_ATOMS: usize = 24;
/// Bump atom spacing, a little above the near-diagonal cutoff.
const DEMO_SPACING: f64 = 2e-12;

pub fn demo_instance(seed: u64) -> Result<DemoInstance, CouplingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SubshiftSpec::full_shift(2, 0.5);
    let cocycle = WindowedCocycle::constant(&spec, Mat2::diag(0.5, 2.0)).expect("invertible");
    let w0: f64 = rng.gen_range(0.3..0.7);
    let measure = GibbsMeasure::bernoulli(&spec, &[w0, 1.0 - w0]).expect("positive weights");
    let alpha: f64 = rng.gen_range(0.35..0.65);
    let geometry = margulis_geometry(&cocycle, &measure, alpha).map_err(CouplingError::Hypotheses)?;
    let (r0, delta) = (geometry.radii[0], geometry.delta);

    // shared positions, per-word masses
    let spacing = DEMO_SPACING * rng.gen_range(1.0..1.5);
    let bump: Vec<f64> = (0..DEMO_BUMP_ATOMS).map(|j| spacing * (j as f64 + 1.0 + rng.gen_range(-0.2..0.2))).collect();
    let annulus: Vec<f64> = (0..4).map(|j| r0 + (1.0 - r0) * (0.3 + 0.02 * j as f64)).collect();
    let far: Vec<f64> = (0..16).map(|j| r0 + (1.0 - r0) * (0.6 + 0.02 * j as f64)).collect();
    let split = |total: f64, n: usize, rng: &mut ChaCha8Rng| {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.9..1.1)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| total * v / s).collect::<Vec<f64>>()
    };
    let targets = ConditionalFamily::from_fn(&spec, 1, 0.0, |_| {
        let mb = split(alpha, bump.len(), &mut rng);
        let ma = split(delta, annulus.len(), &mut rng);
        let mf = split(1.0 - alpha - delta, far.len(), &mut rng);
        let atoms = bump.iter().zip(mb).chain(annulus.iter().zip(ma)).chain(far.iter().zip(mf)).map(|(&d, m)| (d * FRAC_PI_2, m));
        ProjMeasure::new(atoms)
    });
    let rho = radii_for_family(&geometry, &targets).map_err(CouplingError::Hypotheses)?;
    let family = CouplingFamily::trivial(targets, rho)?;
    let spread_r = spread_radius(&family);
    Ok(DemoInstance { cocycle, measure, geometry, family, spread_r })
}
