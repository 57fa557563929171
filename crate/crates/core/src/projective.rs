//! The projective line ℙ¹: action of 2×2 matrices, the normalized angular
//! metric, log-gains, derivative norms, the Margulis function and the
//! parameter ledger of the energy argument.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use thiserror::Error;

use crate::cocycle::{Cocycle, Mat2, WindowedCocycle};
use crate::symbolic::Symbol;
use crate::thermo::GibbsMeasure;
use crate::ustate::ConditionalFamily;

/// Line through the origin, as an angle in `[0, π)`. `q` is angle 0, `p` is π/2.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Direction(f64);

impl Direction {
    pub const Q: Direction = Direction(0.0);
    pub const P: Direction = Direction(FRAC_PI_2);

    pub fn new(angle: f64) -> Self {
        let mut t = angle.rem_euclid(PI);
        if t >= PI {
            t = 0.0;
        }
        Direction(t)
    }

    pub fn angle(self) -> f64 {
        self.0
    }

    pub fn unit(self) -> [f64; 2] {
        let (s, c) = self.0.sin_cos();
        [c, s]
    }

    pub fn from_vector(v: [f64; 2]) -> Self {
        Self::new(v[1].atan2(v[0]))
    }
}

pub fn act(m: &Mat2, v: Direction) -> Direction {
    Direction::from_vector(m.apply(v.unit()))
}

/// Angular distance normalized to diameter 1.
pub fn dist(u: Direction, v: Direction) -> f64 {
    angle_dist(u.0, v.0)
}

fn angle_dist(u: f64, v: f64) -> f64 {
    let d = (u - v).abs();
    d.min(PI - d) / FRAC_PI_2
}

/// `log ‖M v̂‖` at a unit representative.
pub fn log_gain(m: &Mat2, v: Direction) -> f64 {
    let w = m.apply(v.unit());
    w[0].hypot(w[1]).ln()
}

/// Norm of the derivative of `ℙM` at `v`: `|det M| / ‖M v̂‖²`.
pub fn deriv_norm(m: &Mat2, v: Direction) -> f64 {
    let w = m.apply(v.unit());
    m.det().abs() / (w[0] * w[0] + w[1] * w[1])
}

/// `φ(u, v) = −log d(u, v)`, infinite on the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Phi {
    Finite(f64),
    Infinite,
}

impl Phi {
    pub fn finite(self) -> Option<f64> {
        match self {
            Phi::Finite(v) => Some(v),
            Phi::Infinite => None,
        }
    }
}

pub fn margulis_phi(u: Direction, v: Direction) -> Phi {
    let d = dist(u, v);
    if d == 0.0 {
        Phi::Infinite
    } else {
        Phi::Finite(-d.ln())
    }
}

/// Finite atomic measure on ℙ¹, atoms sorted by angle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProjMeasure {
    atoms: Vec<(f64, f64)>,
}

impl ProjMeasure {
    /// Sorts, drops zero masses and merges atoms at identical angles.
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut v: Vec<(f64, f64)> = atoms.into_iter().filter(|&(_, m)| m > 0.0).map(|(a, m)| (Direction::new(a).0, m)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
        for (a, m) in v {
            match out.last_mut() {
                Some(last) if last.0 == a => last.1 += m,
                _ => out.push((a, m)),
            }
        }
        Self { atoms: out }
    }

    pub fn dirac(v: Direction) -> Self {
        Self { atoms: vec![(v.0, 1.0)] }
    }

    /// `n` equal atoms at `(k + ½)π/n`.
    pub fn uniform_grid(n: usize) -> Self {
        Self::new((0..n).map(|k| ((k as f64 + 0.5) * PI / n as f64, 1.0 / n as f64)))
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().fold(0.0, |s, a| s + a.1)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { atoms: self.atoms.iter().map(|&(a, m)| (a, m * s)).collect() }
    }

    pub fn push(&self, m: &Mat2) -> Self {
        Self::new(self.atoms.iter().map(|&(a, w)| (act(m, Direction(a)).0, w)))
    }

    pub fn mass_where(&self, f: impl Fn(Direction) -> bool) -> f64 {
        self.atoms.iter().filter(|a| f(Direction(a.0))).fold(0.0, |s, a| s + a.1)
    }

    pub fn restrict(&self, f: impl Fn(Direction) -> bool) -> Self {
        Self { atoms: self.atoms.iter().copied().filter(|a| f(Direction(a.0))).collect() }
    }

    pub fn max_atom(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).fold(0.0, f64::max)
    }

    pub fn sum(parts: impl IntoIterator<Item = ProjMeasure>) -> Self {
        Self::new(parts.into_iter().flat_map(|p| p.atoms))
    }

    /// Merges atoms closer than `eps` (radians, across the wrap at π too);
    /// merged position is the mass-weighted circular mean.
    pub fn coalesce(&self, eps: f64) -> Self {
        if self.atoms.len() < 2 || eps <= 0.0 {
            return self.clone();
        }
        let mut clusters: Vec<Vec<(f64, f64)>> = Vec::new();
        let mut start = f64::NAN;
        for &(a, m) in &self.atoms {
            if clusters.is_empty() || a - start >= eps {
                clusters.push(vec![(a, m)]);
                start = a;
            } else {
                clusters.last_mut().unwrap().push((a, m));
            }
        }
        if clusters.len() > 1 {
            let first = clusters[0][0].0;
            let last_start = clusters.last().unwrap()[0].0;
            if first + PI - last_start < eps {
                let head = clusters.remove(0);
                clusters.last_mut().unwrap().extend(head);
            }
        }
        Self::new(clusters.into_iter().map(|c| merge_cluster(&c)))
    }
}

fn merge_cluster(c: &[(f64, f64)]) -> (f64, f64) {
    if c.len() == 1 {
        return c[0];
    }
    let mass: f64 = c.iter().map(|a| a.1).sum();
    // circular mean on the doubled angle, taken relative to the first atom
    let base = c[0].0;
    let (mut sx, mut sy) = (0.0, 0.0);
    for &(a, m) in c {
        let t = 2.0 * (a - base);
        sx += m * t.cos();
        sy += m * t.sin();
    }
    (base + 0.5 * sy.atan2(sx), mass)
}

/// Kolmogorov distance of angular CDFs evaluated on bins of width `eps`
/// with edges at `(j + ½)·eps`.
pub fn kolmogorov(a: &ProjMeasure, b: &ProjMeasure, eps: f64) -> f64 {
    let bin = |t: f64| ((t / eps) + 0.5).floor() as i64;
    let mut events: Vec<(i64, f64)> = a.atoms.iter().map(|&(t, m)| (bin(t), m)).collect();
    events.extend(b.atoms.iter().map(|&(t, m)| (bin(t), -m)));
    events.sort_by_key(|e| e.0);
    let (mut cum, mut worst) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < events.len() {
        let key = events[i].0;
        while i < events.len() && events[i].0 == key {
            cum += events[i].1;
            i += 1;
        }
        worst = worst.max(cum.abs());
    }
    worst
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MargulisError {
    #[error("cocycle value for {0:?} does not fix both q and p")]
    NotDiagonal(Vec<Symbol>),
    #[error("the cocycle must read only coordinates n >= 0")]
    NotFutureOnly,
    #[error("∫ log ‖D_q ℙA^N‖ dμ stays at or below 6 for all N <= {n_max} (last value {last})")]
    WeakExpansion { n_max: usize, last: f64 },
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error("conditional family depth {family} is shallower than the κ words ({needed})")]
    Depth { family: usize, needed: usize },
}

/// Every constant in the energy argument except the per-word radii.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub n: usize,
    /// Words of length `N + width − 1` read by `A^N`, lexicographic.
    pub words: Vec<Vec<Symbol>>,
    /// `A^N` per word.
    pub an: Vec<Mat2>,
    /// `κ(x) = ½ log ‖D_q ℙA^N(x)‖` per word.
    pub kappa: Vec<f64>,
    pub kappa_integral: f64,
    /// Radii of `U₀ ⊃ … ⊃ U₄` around `q`, in normalized distance.
    pub radii: [f64; 5],
    pub m1: f64,
    pub m2: f64,
    pub delta: f64,
    pub alpha: f64,
}

/// `Geometry` plus the radii `ρ(x)` of `U_x = B(q, ρ(x))` for each family word.
#[derive(Debug, Clone, PartialEq)]
pub struct MargulisParams {
    pub geometry: Geometry,
    pub beta: f64,
    pub rho: Vec<f64>,
}

pub const GRID: usize = 2048;
pub const GRID_MARGIN: f64 = 1e-9;
const N_MAX: usize = 64;
const BISECTION_STEPS: usize = 80;
const COARSE_GRID: usize = 256;

impl Geometry {
    pub fn r(&self, i: usize) -> f64 {
        self.radii[i]
    }

    /// Membership in `U_i`.
    pub fn in_u(&self, i: usize, v: Direction) -> bool {
        dist(Direction::Q, v) < self.radii[i]
    }

    pub fn word_index(&self, w: &[Symbol]) -> Option<usize> {
        self.words.iter().position(|x| x == w)
    }

    /// Distinct `(A^N, κ)` pairs.
    fn distinct(&self) -> Vec<(Mat2, f64)> {
        let mut out: Vec<(Mat2, f64)> = Vec::new();
        for (m, &k) in self.an.iter().zip(&self.kappa) {
            if !out.iter().any(|(a, b)| a == m && *b == k) {
                out.push((*m, k));
            }
        }
        out
    }

    /// Worst slack of `φ(ℙA^N u, ℙA^N v) ≤ φ(u, v) − κ(x)` over `g×g` grid pairs in `U₁`.
    pub fn expansion_slack(&self, g: usize) -> f64 {
        let pts = ball_grid(self.radii[1], g);
        self.distinct().par_iter().map(|(m, k)| pair_slack(m, *k, &pts)).reduce(|| f64::INFINITY, f64::min)
    }
}

/// `g` angles strictly inside `B(q, r)`, symmetric about `q`.
pub fn ball_grid(r: f64, g: usize) -> Vec<f64> {
    (0..g)
        .map(|j| {
            let s = r * ((2 * j + 1) as f64 / g as f64 - 1.0);
            Direction::new(s * FRAC_PI_2).0
        })
        .collect()
}

/// `g` angles on the closed ball, endpoints included.
fn closed_ball_grid(r: f64, g: usize) -> Vec<f64> {
    (0..g)
        .map(|j| {
            let s = r * (2.0 * j as f64 / (g - 1) as f64 - 1.0);
            Direction::new(s * FRAC_PI_2).0
        })
        .collect()
}

fn pair_slack(m: &Mat2, kappa: f64, pts: &[f64]) -> f64 {
    let img: Vec<f64> = pts.iter().map(|&t| act(m, Direction(t)).0).collect();
    let mut worst = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d0 = angle_dist(pts[i], pts[j]);
            let d1 = angle_dist(img[i], img[j]);
            if d0 > 0.0 && d1 > 0.0 {
                // φ(u,v) − κ − φ(Au,Av)
                worst = worst.min(-d0.ln() - kappa + d1.ln());
            }
        }
    }
    worst
}

fn max_image_radius(m: &Mat2, pts: &[f64]) -> f64 {
    pts.iter().map(|&t| dist(Direction::Q, act(m, Direction(t)))).fold(0.0, f64::max)
}

/// Largest `r` in `(0, hi)` satisfying a predicate assumed monotone (true near 0).
fn bisect(hi: f64, ok: impl Fn(f64) -> bool) -> Option<f64> {
    let (mut a, mut b) = (0.0, hi);
    if !ok(b * 1e-12) {
        return None;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (a + b);
        if ok(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(a)
}

/// `N`, `κ`, the nested radii, `M₁`, `M₂` and `δ` for a cocycle fixing `q` and `p`.
pub fn margulis_geometry(c: &WindowedCocycle, m: &GibbsMeasure, alpha: f64) -> Result<Geometry, MargulisError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MargulisError::Infeasible(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    if !c.future_only() {
        return Err(MargulisError::NotFutureOnly);
    }
    for (w, a) in c.table().entries() {
        if a.b.abs() > 1e-14 * a.norm() || a.c.abs() > 1e-14 * a.norm() {
            return Err(MargulisError::NotDiagonal(w));
        }
    }
    let spec = c.spec();
    let width = c.table().width();
    let (lo, _) = c.bounds();
    // log ‖D_q ℙA‖ = log |d/a| for diagonal A; its integral is linear in N by invariance
    let one_step = m.integrate_words(lo as usize + width, |w| {
        let a = c.table().at_word(w, lo as usize);
        (a.d / a.a).abs().ln()
    });
    let mut n = 0;
    let mut last = 0.0;
    for k in 1..=N_MAX {
        last = k as f64 * one_step;
        if last > 6.0 {
            n = k;
            break;
        }
    }
    if n == 0 {
        return Err(MargulisError::WeakExpansion { n_max: N_MAX, last });
    }
    let len = lo as usize + n + width - 1;
    let words = spec.words(len);
    let an: Vec<Mat2> = words.iter().map(|w| c.product_on_word(&w[lo as usize..], n)).collect();
    let kappa: Vec<f64> = an.iter().map(|a| 0.5 * deriv_norm(a, Direction::Q).ln()).collect();
    let kappa_integral: f64 = words.iter().zip(&kappa).map(|(w, k)| m.cylinder(w) * k).sum();
    if kappa_integral <= 3.0 {
        return Err(MargulisError::Infeasible(format!("∫κ dμ = {kappa_integral} <= 3")));
    }
    let mut geo = Geometry { n, words, an, kappa, kappa_integral, radii: [0.0; 5], m1: 0.0, m2: 0.0, delta: 0.0, alpha };
    let distinct = geo.distinct();

    // U₁: expansion estimate on the coarse grid, then a relative safety margin
    let expands = |r: f64| {
        let pts = closed_ball_grid(r, COARSE_GRID);
        let edge = [Direction::new(r * FRAC_PI_2), Direction::new(-r * FRAC_PI_2)];
        distinct
            .iter()
            .all(|(a, k)| pair_slack(a, *k, &pts) >= GRID_MARGIN && edge.iter().all(|&v| deriv_norm(a, v).ln() - k >= GRID_MARGIN))
    };
    let r1 = bisect(1.0, expands).ok_or_else(|| MargulisError::Infeasible("no ball around q expands at rate e^κ".into()))? * (1.0 - 1e-6);
    // U₀ must contain ℙA^N(Ū₁) and ℙA^N(U₀) ⊃ Ū₁, while excluding p
    let closed1 = closed_ball_grid(r1, GRID);
    let need = distinct.iter().map(|(a, _)| max_image_radius(a, &closed1).max(max_image_radius(&a.inv(), &closed1))).fold(r1, f64::max);
    if need >= 1.0 - GRID_MARGIN {
        return Err(MargulisError::Infeasible(format!("ℙA^N(Ū₁) reaches p (radius {need})")));
    }
    let r0 = 0.5 * (need + 1.0);
    let r3 = r1 / 2.0;
    let r2 = 0.75 * r1;
    let r4 = bisect(r3, |r| {
        let pts = closed_ball_grid(r, 65);
        distinct.iter().all(|(a, _)| max_image_radius(a, &pts) < r3 * (1.0 - GRID_MARGIN))
    })
    .ok_or_else(|| MargulisError::Infeasible("no U₄ maps into U₃".into()))?
        * (1.0 - 1e-6);
    geo.radii = [r0, r1, r2, r3, r4];

    let all = (0..GRID).map(|j| (j as f64 + 0.5) * PI / GRID as f64).chain([0.0, FRAC_PI_2]);
    let all: Vec<f64> = all.collect();
    let m1 = distinct.iter().flat_map(|(a, _)| all.iter().map(move |&t| deriv_norm(a, Direction(t)).ln().abs())).fold(0.0, f64::max)
        + GRID_MARGIN;
    geo.m1 = m1.max(1.0 + GRID_MARGIN);
    geo.m2 = (-(r2 - r3).ln()).max(-(r1 - r2).ln()).max(1.0 + GRID_MARGIN);
    geo.delta = (1..=40)
        .map(|j| 0.5f64.powi(j))
        .find(|&d| d < 1.0 - alpha && 100.0 * d * geo.m1 * geo.m2 < alpha)
        .ok_or_else(|| MargulisError::Infeasible("no dyadic δ with 100δM₁M₂ < α".into()))?;
    Ok(geo)
}

/// Radius where the CDF of `d(q, ·)` first reaches `target`, nudged just past the atom.
pub fn rho_for(measure: &ProjMeasure, target: f64) -> Option<f64> {
    let mut d: Vec<(f64, f64)> = measure.atoms().iter().map(|&(a, m)| (dist(Direction::Q, Direction(a)), m)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (i, &(r, m)) in d.iter().enumerate() {
        acc += m;
        if acc >= target - 1e-12 {
            let next = d.get(i + 1).map(|x| x.0).unwrap_or(1.0);
            if next <= r {
                return None;
            }
            return Some(r + (next - r) * 2f64.powi(-20));
        }
    }
    None
}

/// Full ledger: geometry, then `ρ(x)` from the conditionals with the mass checks
/// `m_x(U₄) > α − δ` and `m_x(U₀) < α + δ`.
pub fn margulis_setup(
    c: &WindowedCocycle,
    m: &GibbsMeasure,
    conds: &ConditionalFamily,
    alpha: f64,
    beta: f64,
) -> Result<MargulisParams, MargulisError> {
    let geometry = margulis_geometry(c, m, alpha)?;
    let rho = radii_for_family(&geometry, conds)?;
    Ok(MargulisParams { geometry, beta, rho })
}

pub fn radii_for_family(geo: &Geometry, conds: &ConditionalFamily) -> Result<Vec<f64>, MargulisError> {
    let target = geo.alpha + geo.delta;
    conds
        .words()
        .iter()
        .zip(conds.conds())
        .map(|(w, mx)| {
            let u4 = mx.mass_where(|v| geo.in_u(4, v));
            if u4 <= geo.alpha - geo.delta {
                return Err(MargulisError::Infeasible(format!(
                    "m_x(U₄) = {u4} <= α − δ at word {w:?}: conditionals not concentrated enough near q"
                )));
            }
            let u0 = mx.mass_where(|v| geo.in_u(0, v));
            if u0 >= target {
                return Err(MargulisError::Infeasible(format!("m_x(U₀) = {u0} >= α + δ at word {w:?}")));
            }
            rho_for(mx, target).ok_or_else(|| MargulisError::Infeasible(format!("no radius with mass α + δ at word {w:?}")))
        })
        .collect()
}
