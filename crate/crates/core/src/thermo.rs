//! Thermodynamic formalism on the recoded Markov presentation: potential
//! stabilization, the transfer operator, RPF eigen-data, equilibrium states,
//! Jacobians, the product-structure density ψ and the cohomological function ξ.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cocycle::{anchor_projection, default_anchors};
use crate::symbolic::{recode, PointRep, Recoding, SubshiftSpec, Symbol};
use crate::window::Windowed;

/// Scalar function reading a window of coordinates.
pub type Potential = Windowed<f64>;

pub const RPF_TOL: f64 = 1e-13;
pub const RPF_MAX_ITER: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error("transition graph has period {period}; the transfer operator is not primitive")]
    NonPrimitive { period: usize },
    #[error("power iteration did not converge in {iterations} steps (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("potential takes a non-finite value on {0:?}")]
    NonFinite(Vec<Symbol>),
    #[error("edge {from} -> {to} has zero probability")]
    ZeroEdge { from: usize, to: usize },
    #[error("measures use different recodings ({0} vs {1})")]
    IncompatibleRecoding(usize, usize),
    #[error("invalid stochastic matrix: {0}")]
    Stochastic(String),
}

/// `φ^u = φ + ψ^u∘f − ψ^u` with `ψ^u(x) = Σ_{j≥0} [φ(f^j x) − φ(f^j g(x))]`.
/// Returns `(φ^u, ψ^u)`; `φ^u` reads only coordinates `n ≥ 0`.
pub fn stabilize_potential(phi: &Potential, anchors: &[PointRep]) -> (Potential, Potential) {
    let spec = phi.spec().clone();
    let (lo, hi) = phi.window();
    if lo >= 0 {
        return (phi.clone(), Windowed::constant(&spec, 0.0));
    }
    let psi_at = |x: &PointRep| psi_u_at(phi, x, anchors);
    let psi = Windowed::from_fn(&spec, lo, hi - 1 - lo, |w| psi_at(&spec.close_word(w.to_vec(), -lo)));
    let phi_u = Windowed::from_fn(&spec, 0, hi - lo, |w| {
        let x = spec.close_word(w.to_vec(), 0);
        phi.eval(&x) + psi_at(&x.shift(1)) - psi_at(&x)
    });
    (phi_u, psi)
}

/// Telescoping sum defining `ψ^u(x)`; terms vanish once the window leaves `n < 0`.
pub fn psi_u_at(phi: &Potential, x: &PointRep, anchors: &[PointRep]) -> f64 {
    let gx = anchor_projection(phi.spec(), x, anchors);
    let reach = (-phi.window().0).max(0);
    (0..reach).map(|j| phi.at(x, j) - phi.at(&gx, j)).sum()
}

/// `T_φ g(x) = Σ_{y → x} e^{φ(y)} g(y)` for a memory-one potential on symbols.
pub fn transfer_apply(spec: &SubshiftSpec, phi: &[f64], g: &[f64], x: Symbol) -> f64 {
    spec.predecessors(x).map(|y| phi[y as usize].exp() * g[y as usize]).sum()
}

/// RPF eigen-data on the recoded alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Rpf {
    pub recoding: Recoding,
    /// Potential per recoded symbol.
    pub phi: Vec<f64>,
    pub log_lambda: f64,
    pub zeta: Vec<f64>,
    pub nu: Vec<f64>,
    pub iterations: usize,
}

/// Reduces to a future-only memory-one potential on the `k`-block presentation.
pub fn reduce_potential(phi: &Potential) -> (Recoding, Vec<f64>) {
    let phi_u = if phi.future_only() { phi.clone() } else { stabilize_potential(phi, &default_anchors(phi.spec())).0 };
    let (lo, hi) = phi_u.window();
    debug_assert!(lo >= 0);
    let k = hi.max(1) as usize;
    let wide = phi_u.widen(0, k as i64);
    let rec = recode(phi.spec(), k).expect("k >= 1");
    let vals = rec.words.iter().map(|w| *wide.get(w).expect("total")).collect();
    (rec, vals)
}

pub fn rpf_solve(phi: &Potential) -> Result<Rpf, ThermoError> {
    for (w, v) in phi.entries() {
        if !v.is_finite() {
            return Err(ThermoError::NonFinite(w));
        }
    }
    let (rec, vals) = reduce_potential(phi);
    rpf_on(rec, vals)
}

fn rpf_on(rec: Recoding, phi: Vec<f64>) -> Result<Rpf, ThermoError> {
    let spec = &rec.spec;
    let period = spec.period();
    if period != 1 {
        return Err(ThermoError::NonPrimitive { period });
    }
    let n = rec.len();
    let shift = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = phi.iter().map(|v| (v - shift).exp()).collect();
    let preds: Vec<Vec<usize>> = (0..n).map(|x| (0..n).filter(|&y| spec.transitions()[y][x]).collect()).collect();
    let succs: Vec<Vec<usize>> = (0..n).map(|y| (0..n).filter(|&x| spec.transitions()[y][x]).collect()).collect();
    let apply = |g: &[f64]| -> Vec<f64> { (0..n).map(|x| preds[x].iter().map(|&y| w[y] * g[y]).sum()).collect() };
    let apply_adj = |m: &[f64]| -> Vec<f64> { (0..n).map(|y| w[y] * succs[y].iter().map(|&x| m[x]).sum::<f64>()).collect() };

    let power = |f: &dyn Fn(&[f64]) -> Vec<f64>, norm: fn(&[f64]) -> f64| -> Result<(Vec<f64>, usize), ThermoError> {
        let mut v = vec![1.0; n];
        let mut change = f64::INFINITY;
        for it in 1..=RPF_MAX_ITER {
            let mut next = f(&v);
            let s = norm(&next);
            next.iter_mut().for_each(|t| *t /= s);
            change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if change < RPF_TOL {
                return Ok((v, it));
            }
        }
        Err(ThermoError::NoConvergence { iterations: RPF_MAX_ITER, change })
    };
    let sup = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let (mut zeta, it1) = power(&apply, sup)?;
    let (nu, it2) = power(&apply_adj, sum)?;
    let lz = apply(&zeta);
    let lambda = dot(&nu, &lz) / dot(&nu, &zeta);
    let c = dot(&zeta, &nu);
    zeta.iter_mut().for_each(|z| *z /= c);
    Ok(Rpf { recoding: rec, phi, log_lambda: lambda.ln() + shift, zeta, nu, iterations: it1.max(it2) })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Invariant Markov measure on the recoded alphabet with RPF data and Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsMeasure {
    pub rpf: Rpf,
    pub p: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    /// `jac_u[i][j]` on the edge `i → j`.
    pub jac_u: Vec<Vec<f64>>,
    /// `jac_s[i][j]` for the reversed-chain edge from `x_0 = i` to `x_{-1} = j`.
    pub jac_s: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
}

/// `p_ij = e^{φ(i)} Q'_ij ν_j / (λ ν_i)`, `π = ζ ⊙ ν`.
pub fn equilibrium(phi: &Potential) -> Result<GibbsMeasure, ThermoError> {
    let rpf = rpf_solve(phi)?;
    let n = rpf.recoding.len();
    let lambda = rpf.log_lambda;
    let q = rpf.recoding.spec.transitions();
    let p: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| if q[i][j] { (rpf.phi[i] - lambda).exp() * rpf.nu[j] / rpf.nu[i] } else { 0.0 }).collect()).collect();
    let pi: Vec<f64> = rpf.zeta.iter().zip(&rpf.nu).map(|(z, v)| z * v).collect();
    GibbsMeasure::assemble(rpf, p, pi)
}

impl GibbsMeasure {
    fn assemble(rpf: Rpf, mut p: Vec<Vec<f64>>, pi: Vec<f64>) -> Result<Self, ThermoError> {
        // renormalize rows against rounding; the RPF identity makes the sums 1 up to 1e-15
        for row in p.iter_mut() {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let n = pi.len();
        let q = rpf.recoding.spec.transitions();
        let mut jac_u = vec![vec![0.0; n]; n];
        let mut jac_s = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if q[i][j] {
                    if p[i][j] <= 0.0 {
                        return Err(ThermoError::ZeroEdge { from: i, to: j });
                    }
                    jac_u[i][j] = pi[j] / (pi[i] * p[i][j]);
                    let pstar = pi[i] * p[i][j] / pi[j];
                    jac_s[j][i] = pi[i] / (pi[j] * pstar);
                }
            }
        }
        let psi = pi.iter().map(|v| 1.0 / v).collect();
        Ok(Self { rpf, p, pi, jac_u, jac_s, psi })
    }

    /// Markov measure for a given row-stochastic matrix on the base alphabet.
    pub fn markov(spec: &SubshiftSpec, p: Vec<Vec<f64>>) -> Result<Self, ThermoError> {
        let n = spec.alphabet_size();
        if p.len() != n || p.iter().any(|r| r.len() != n) {
            return Err(ThermoError::Stochastic("shape does not match the alphabet".into()));
        }
        for (i, (row, allowed)) in p.iter().zip(spec.transitions()).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(ThermoError::Stochastic(format!("row {i} sums to {s}")));
            }
            for (j, (&pij, &ok)) in row.iter().zip(allowed).enumerate() {
                if ok != (pij > 0.0) || pij < 0.0 {
                    return Err(ThermoError::Stochastic(format!("entry ({i},{j}) does not match the support of Q")));
                }
            }
        }
        if spec.period() != 1 {
            return Err(ThermoError::NonPrimitive { period: spec.period() });
        }
        let rec = recode(spec, 1).expect("k = 1");
        // stationary vector by power iteration on the primitive chain
        let mut pi = vec![1.0 / n as f64; n];
        let mut iterations = 0;
        for it in 1..=RPF_MAX_ITER {
            let mut next: Vec<f64> = (0..n).map(|j| (0..n).map(|i| pi[i] * p[i][j]).sum()).collect();
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= s);
            let change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            pi = next;
            iterations = it;
            if change < RPF_TOL {
                break;
            }
        }
        // φ(i, j) = log p_ij is not memory-one on symbols; keep the pressure-zero data
        let rpf = Rpf { recoding: rec, phi: vec![0.0; n], log_lambda: 0.0, zeta: vec![1.0; n], nu: pi.clone(), iterations };
        Self::assemble(rpf, p, pi)
    }

    /// Bernoulli measure with weights `w` on the full shift.
    pub fn bernoulli(spec: &SubshiftSpec, w: &[f64]) -> Result<Self, ThermoError> {
        let s: f64 = w.iter().sum();
        let row: Vec<f64> = w.iter().map(|v| v / s).collect();
        Self::markov(spec, vec![row; w.len()])
    }

    pub fn recoding(&self) -> &Recoding {
        &self.rpf.recoding
    }

    /// Block length of the recoded presentation.
    pub fn memory(&self) -> usize {
        self.rpf.recoding.k
    }

    /// The original shift, not the recoded one.
    #[allow(clippy::misnamed_getters)]
    pub fn spec(&self) -> &SubshiftSpec {
        &self.rpf.recoding.base
    }

    pub fn log_lambda(&self) -> f64 {
        self.rpf.log_lambda
    }

    /// Measure of the cylinder `[0; w]` over the base alphabet.
    pub fn cylinder(&self, w: &[Symbol]) -> f64 {
        let k = self.memory();
        let rec = self.recoding();
        if w.is_empty() {
            return 1.0;
        }
        if !self.spec().is_admissible(w) {
            return 0.0;
        }
        if w.len() < k {
            return rec.words.iter().enumerate().filter(|(_, b)| b.starts_with(w)).map(|(i, _)| self.pi[i]).sum();
        }
        let s = rec.encode(w).expect("admissible");
        self.chain_weight(&s)
    }

    /// `π_{s_0} Π p_{s_i s_{i+1}}` on recoded symbols.
    pub fn chain_weight(&self, s: &[usize]) -> f64 {
        let mut m = self.pi[s[0]];
        for e in s.windows(2) {
            m *= self.p[e[0]][e[1]];
        }
        m
    }

    /// Unstable Jacobian read from the first `k + 1` symbols of a base word.
    pub fn jac_u_word(&self, y: &[Symbol]) -> f64 {
        let k = self.memory();
        let rec = self.recoding();
        let a = rec.symbol_of(&y[..k]).expect("admissible");
        let b = rec.symbol_of(&y[1..k + 1]).expect("admissible");
        self.jac_u[a][b]
    }

    /// Stationary probability of the block `y[..k]`.
    pub fn pi_word(&self, y: &[Symbol]) -> f64 {
        self.pi[self.recoding().symbol_of(&y[..self.memory()]).expect("admissible")]
    }

    /// Reversed chain `p*_{ij} = π_j p_{ji} / π_i`.
    pub fn reversed(&self) -> Vec<Vec<f64>> {
        let n = self.pi.len();
        (0..n).map(|i| (0..n).map(|j| self.pi[j] * self.p[j][i] / self.pi[i]).collect()).collect()
    }

    /// Jacobian of `f_u` from the product density: `1 / ∫_{z_{-1}=i} ψ(f_u y, z) dμ^s(z)`.
    pub fn jac_u_from_psi(&self, i: usize, j: usize) -> f64 {
        let pstar = self.reversed();
        // μ^s of {z_0 = j, z_{-1} = i} through the reversed chain started at j
        1.0 / (self.psi[j] * self.pi[j] * pstar[j][i])
    }

    /// `E[f(x_0 … x_{n-1})]` over admissible base words of length `n`.
    pub fn integrate_words(&self, n: usize, mut f: impl FnMut(&[Symbol]) -> f64) -> f64 {
        self.spec().words(n).iter().map(|w| self.cylinder(w) * f(w)).sum()
    }

    /// Samples `n` base symbols of a stationary orbit.
    pub fn sample_orbit(&self, n: usize, seed: u64) -> Vec<Symbol> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Symbol> {
        let rec = self.recoding();
        let mut out = Vec::with_capacity(n + rec.k);
        if n == 0 {
            return out;
        }
        let mut s = draw(&self.pi, rng);
        out.extend_from_slice(&rec.words[s]);
        while out.len() < n {
            s = draw(&self.p[s], rng);
            out.push(*rec.words[s].last().unwrap());
        }
        out.truncate(n);
        out
    }
}

fn draw<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// `ψ`, `ξ` and the residuals of the product-structure and cohomological identities.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiXi {
    pub psi: Vec<f64>,
    /// `ξ` on two-block cylinders `[-1; a, b]` of the recoded alphabet.
    pub xi: Vec<Vec<f64>>,
    /// `max |μ̂(C) − ∫_C ψ d(μ^s × μ^u)|` over cylinders of length ≤ 6.
    pub psi_residual: f64,
    /// Max residual of `log ξ(f x) − log ξ(x) = log J^u − log J^s`.
    pub xi_residual: f64,
}

pub fn psi_and_xi(m: &GibbsMeasure) -> PsiXi {
    let spec = &m.recoding().spec;
    let n = m.pi.len();
    let mut psi_residual: f64 = 0.0;
    for len in 1..=6 {
        for w in spec.words(len) {
            let s: Vec<usize> = w.iter().map(|&v| v as usize).collect();
            let full = m.chain_weight(&s);
            for cut in 0..len {
                let past = m.chain_weight(&s[..=cut]);
                let fut = m.chain_weight(&s[cut..]);
                psi_residual = psi_residual.max((full - m.psi[s[cut]] * past * fut).abs());
            }
        }
    }

    // unknowns u(a,b) = log ξ on edges; equations per admissible triple (a,b,c)
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).filter(|&(a, b)| spec.transitions()[a][b]).collect();
    let idx = |a: usize, b: usize| edges.iter().position(|&e| e == (a, b)).unwrap();
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    for &(a, b) in &edges {
        for c in 0..n {
            if spec.transitions()[b][c] {
                let rhs = m.jac_u[b][c].ln() - m.jac_s[b][a].ln();
                rows.push((idx(b, c), idx(a, b), rhs));
            }
        }
    }
    let e = edges.len();
    // normal equations with a gauge row fixing Σ u = 0
    let mut ata = vec![vec![0.0; e]; e];
    let mut atb = vec![0.0; e];
    for &(plus, minus, rhs) in &rows {
        for (i, si) in [(plus, 1.0), (minus, -1.0)] {
            for (j, sj) in [(plus, 1.0), (minus, -1.0)] {
                ata[i][j] += si * sj;
            }
            atb[i] += si * rhs;
        }
    }
    for row in ata.iter_mut() {
        row.iter_mut().for_each(|v| *v += 1.0);
    }
    let u = solve(ata, atb);
    let xi_residual = rows.iter().map(|&(p, q, rhs)| (u[p] - u[q] - rhs).abs()).fold(0.0, f64::max);
    // normalization Σ_i ∫_{[0;i]} ξ d(μ^s × μ^u) = 1
    let pstar = m.reversed();
    let z: f64 = edges.iter().enumerate().map(|(k, &(a, b))| u[k].exp() * m.pi[b] * pstar[b][a] * m.pi[b]).sum();
    let mut xi = vec![vec![0.0; n]; n];
    for (k, &(a, b)) in edges.iter().enumerate() {
        xi[a][b] = u[k].exp() / z;
    }
    PsiXi { psi: m.psi.clone(), xi, psi_residual, xi_residual }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(r);
                for (x, y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * y;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// `(weak_star, psi_gap)`: max cylinder-measure gap up to `depth`, max ψ gap.
pub fn measure_distance(m1: &GibbsMeasure, m2: &GibbsMeasure, depth: usize) -> Result<(f64, f64), ThermoError> {
    if m1.memory() != m2.memory() || m1.spec() != m2.spec() {
        return Err(ThermoError::IncompatibleRecoding(m1.memory(), m2.memory()));
    }
    let mut weak: f64 = 0.0;
    for len in 1..=depth {
        for w in m1.spec().words(len) {
            weak = weak.max((m1.cylinder(&w) - m2.cylinder(&w)).abs());
        }
    }
    let gap = m1.psi.iter().zip(&m2.psi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((weak, gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::Symbol;

    const GOLDEN: f64 = 1.618_033_988_749_895;

    fn sym_potential(spec: &SubshiftSpec, vals: &[f64]) -> Potential {
        Windowed::from_fn(spec, 0, 1, |w| vals[w[0] as usize])
    }

    #[test]
    fn transfer_examples() {
        let full = SubshiftSpec::full_shift(3, 0.5);
        assert_eq!(transfer_apply(&full, &[0.0; 3], &[1.0; 3], 1), 3.0);
        let gm = SubshiftSpec::golden_mean(0.5);
        assert_eq!(transfer_apply(&gm, &[0.0; 2], &[1.0; 2], 0), 2.0);
        assert_eq!(transfer_apply(&gm, &[0.0; 2], &[1.0; 2], 1), 1.0);
        let two = SubshiftSpec::full_shift(2, 0.5);
        let v = transfer_apply(&two, &[0.3f64.ln(), 1.7f64.ln()], &[1.0; 2], 0);
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rpf_examples() {
        let two = SubshiftSpec::full_shift(2, 0.5);
        let r = rpf_solve(&sym_potential(&two, &[0.0, 0.0])).unwrap();
        assert!((r.log_lambda - 2f64.ln()).abs() < 1e-14);
        assert!(r.zeta.iter().all(|z| (z - 1.0).abs() < 1e-13));
        assert!(r.nu.iter().all(|v| (v - 0.5).abs() < 1e-13));
        let gm = SubshiftSpec::golden_mean(0.5);
        let r = rpf_solve(&sym_potential(&gm, &[0.0, 0.0])).unwrap();
        assert!((r.log_lambda - GOLDEN.ln()).abs() < 1e-13);
        let r = rpf_solve(&sym_potential(&two, &[0.2f64.ln(), 0.9f64.ln()])).unwrap();
        assert!((r.log_lambda - 1.1f64.ln()).abs() < 1e-13);
        let m = equilibrium(&sym_potential(&two, &[0.2f64.ln(), 0.9f64.ln()])).unwrap();
        assert!((m.pi[0] - 0.2 / 1.1).abs() < 1e-13);
        assert!((m.p[1][0] - 0.2 / 1.1).abs() < 1e-13);
        let periodic = SubshiftSpec::from_01(&[&[0, 1], &[1, 0]], 0.5).unwrap();
        assert_eq!(rpf_solve(&sym_potential(&periodic, &[0.0, 0.0])), Err(ThermoError::NonPrimitive { period: 2 }));
    }

    #[test]
    fn rpf_residuals() {
        let spec = SubshiftSpec::from_01(&[&[1, 1, 0], &[0, 1, 1], &[1, 1, 1]], 0.5).unwrap();
        let phi = Windowed::from_fn(&spec, 0, 2, |w| 0.3 * w[0] as f64 - 0.7 * (w[1] as f64).sin());
        let r = rpf_solve(&phi).unwrap();
        let lam = r.log_lambda.exp();
        let s = &r.recoding.spec;
        for x in 0..r.zeta.len() {
            let t = transfer_apply(s, &r.phi, &r.zeta, x as Symbol);
            assert!((t - lam * r.zeta[x]).abs() <= 1e-12 * lam);
            let adj: f64 = r.phi[x].exp() * s.successors(x as Symbol).map(|y| r.nu[y as usize]).sum::<f64>();
            assert!((adj - lam * r.nu[x]).abs() <= 1e-12 * lam);
        }
        assert!((dot(&r.zeta, &r.nu) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn parry_measure() {
        let gm = SubshiftSpec::golden_mean(0.5);
        let m = equilibrium(&sym_potential(&gm, &[0.0, 0.0])).unwrap();
        assert!((m.p[0][0] - 1.0 / GOLDEN).abs() < 1e-13);
        assert!((m.p[0][1] - 1.0 / (GOLDEN * GOLDEN)).abs() < 1e-13);
    }

    /// Gibbs weights `ζ_{a0} λ^{-n} e^{Σφ} ν_{an}` against the chain to depth 8.
    #[test]
    fn gibbs_ratio() {
        let spec = SubshiftSpec::from_01(&[&[1, 1, 0], &[0, 1, 1], &[1, 1, 1]], 0.5).unwrap();
        let phi = Windowed::from_fn(&spec, 0, 1, |w| [0.1, -0.4, 0.9][w[0] as usize]);
        let m = equilibrium(&phi).unwrap();
        let r = &m.rpf;
        let mut worst: f64 = 0.0;
        for len in 1..=8 {
            for w in spec.words(len) {
                let s: Vec<usize> = w.iter().map(|&v| v as usize).collect();
                let sphi: f64 = s[..len - 1].iter().map(|&i| r.phi[i]).sum();
                let pred = r.zeta[s[0]] * (-(len as f64 - 1.0) * r.log_lambda + sphi).exp() * r.nu[s[len - 1]];
                worst = worst.max((m.cylinder(&w) / pred - 1.0).abs());
            }
        }
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn stationary_and_stochastic() {
        let spec = SubshiftSpec::from_01(&[&[1, 1, 0], &[0, 1, 1], &[1, 1, 1]], 0.5).unwrap();
        let phi = Windowed::from_fn(&spec, 0, 2, |w| (1.0 + w[0] as f64 * w[1] as f64).ln());
        let m = equilibrium(&phi).unwrap();
        let n = m.pi.len();
        for j in 0..n {
            let s: f64 = (0..n).map(|i| m.pi[i] * m.p[i][j]).sum();
            assert!((s - m.pi[j]).abs() < 1e-12);
        }
        for row in &m.p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_examples() {
        let two = SubshiftSpec::full_shift(2, 0.5);
        let m = GibbsMeasure::bernoulli(&two, &[1.0, 1.0]).unwrap();
        assert!(m.jac_u.iter().flatten().all(|&j| (j - 2.0).abs() < 1e-15));
        let m = GibbsMeasure::markov(&two, vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        for x in 0..2 {
            let s: f64 = (0..2).map(|y| 1.0 / m.jac_u[y][x]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    /// `μ(f_u D) = ∫_D J dμ` on cylinders `D = [0; w]`, `|w| ≥ 2`, to depth 8.
    #[test]
    fn jacobian_change_of_variables() {
        let spec = SubshiftSpec::golden_mean(0.5);
        let phi = Windowed::from_fn(&spec, -1, 1, |w| 0.2 * w[0] as f64 + 0.5 * w[1] as f64);
        let m = equilibrium(&phi).unwrap();
        let k = m.memory();
        for len in k + 1..=8 {
            for w in spec.words(len) {
                let lhs = m.cylinder(&w[1..]);
                let rhs = m.cylinder(&w) * m.jac_u_word(&w);
                assert!((lhs - rhs).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_rpf_form() {
        let spec = SubshiftSpec::full_shift(3, 0.5);
        let phi = sym_potential(&spec, &[0.3, -1.0, 0.5]);
        let m = equilibrium(&phi).unwrap();
        let r = &m.rpf;
        for i in 0..3 {
            for j in 0..3 {
                let alt = r.log_lambda.exp() * (-r.phi[i]).exp() * r.zeta[j] / r.zeta[i];
                assert!((m.jac_u[i][j] / alt - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn psi_examples() {
        let two = SubshiftSpec::full_shift(2, 0.5);
        let m = GibbsMeasure::bernoulli(&two, &[1.0, 1.0]).unwrap();
        let px = psi_and_xi(&m);
        assert!(px.psi.iter().all(|&v| (v - 2.0).abs() < 1e-14));
        let gm = SubshiftSpec::golden_mean(0.5);
        let m = equilibrium(&Windowed::from_fn(&gm, 0, 2, |w| 0.4 * w[0] as f64 - 0.1 * w[1] as f64)).unwrap();
        let px = psi_and_xi(&m);
        assert!(px.psi_residual <= 1e-12);
        assert!(px.xi_residual <= 1e-10);
        for (i, row) in m.jac_u.iter().enumerate() {
            for (j, &jac) in row.iter().enumerate() {
                if jac > 0.0 {
                    assert!((m.jac_u_from_psi(i, j) - jac).abs() <= 1e-12 * jac);
                }
            }
        }
    }

    #[test]
    fn stabilization() {
        let spec = SubshiftSpec::full_shift(2, 0.5);
        let anchors = default_anchors(&spec);
        let fut = Windowed::from_fn(&spec, 0, 2, |w| w[0] as f64 - 0.5 * w[1] as f64);
        let (pu, psi) = stabilize_potential(&fut, &anchors);
        assert_eq!(pu, fut);
        assert!(psi.entries().all(|(_, v)| *v == 0.0));
        let cst = Windowed::constant(&spec, 0.7);
        assert_eq!(stabilize_potential(&cst, &anchors).0, cst);
        let past = Windowed::from_fn(&spec, -1, 1, |w| 0.3 * w[0] as f64 + (w[1] as f64).cos());
        let (pu, psi) = stabilize_potential(&past, &anchors);
        assert!(pu.future_only());
        assert_eq!(psi.window(), (-1, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = spec.random_point(6, &mut rng);
            let lhs = pu.eval(&x);
            let rhs = past.eval(&x) + psi.at(&x, 1) - psi.eval(&x);
            assert!((lhs - rhs).abs() <= 1e-12);
        }
        // cohomologous potentials share the pressure
        let a = rpf_solve(&past).unwrap().log_lambda;
        let b = rpf_solve(&pu).unwrap().log_lambda;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn distances() {
        let two = SubshiftSpec::full_shift(2, 0.5);
        let a = GibbsMeasure::bernoulli(&two, &[0.5, 0.5]).unwrap();
        let b = GibbsMeasure::bernoulli(&two, &[0.6, 0.4]).unwrap();
        assert_eq!(measure_distance(&a, &a, 4).unwrap(), (0.0, 0.0));
        let (w, _) = measure_distance(&a, &b, 1).unwrap();
        assert!((w - 0.1).abs() < 1e-14);
        let phi0 = sym_potential(&two, &[0.8, -0.3]);
        let base = equilibrium(&sym_potential(&two, &[0.0, 0.0])).unwrap();
        let mut last = (f64::INFINITY, f64::INFINITY);
        for t in [0.8, 0.4, 0.2, 0.1, 0.05] {
            let mt = equilibrium(&phi0.map(|_, v| t * v)).unwrap();
            let d = measure_distance(&mt, &base, 4).unwrap();
            assert!(d.0 < last.0 && d.1 < last.1);
            last = d;
        }
    }

    #[test]
    fn sampling() {
        let two = SubshiftSpec::full_shift(2, 0.5);
        let det = GibbsMeasure::markov(&two, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let w = det.sample_orbit(100_000, 3);
        let ones = w.iter().filter(|&&s| s == 1).count() as f64;
        let sigma = (1e5f64 * 0.25).sqrt();
        assert!((ones - 5e4).abs() < 3.0 * sigma);
        assert_eq!(det.sample_orbit(50, 9), det.sample_orbit(50, 9));
        let gm = SubshiftSpec::golden_mean(0.5);
        let m = equilibrium(&sym_potential(&gm, &[0.0, 0.0])).unwrap();
        let w = m.sample_orbit(200_000, 1);
        assert!(gm.is_admissible(&w));
        let from0 = w.windows(2).filter(|e| e[0] == 0).count() as f64;
        let stay = w.windows(2).filter(|e| e[0] == 0 && e[1] == 0).count() as f64;
        let phat = stay / from0;
        // Markov CLT variance inflated by 4 for the dependence
        let se = (m.p[0][0] * m.p[0][1] / from0).sqrt() * 2.0;
        assert!((phat - m.p[0][0]).abs() < 3.0 * se);
    }

    #[test]
    fn degenerate_bernoulli_is_constant() {
        // Bernoulli(1, 0) lives on the fixed point of the one-symbol shift
        let one = SubshiftSpec::full_shift(1, 0.5);
        let m = GibbsMeasure::markov(&one, vec![vec![1.0]]).unwrap();
        assert!(m.sample_orbit(30, 2).iter().all(|&s| s == 0));
    }
}
