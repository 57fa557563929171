//! Lyapunov exponent estimators: Kingman averages along sampled orbits,
//! Gibbs-weighted periodic data, and the invariant-family route.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cocycle::{default_anchors, sl2_split, straighten, Cocycle, Mat2, WindowedCocycle};
use crate::symbolic::{closed_words, Symbol};
use crate::thermo::GibbsMeasure;
use crate::ustate::{exponents_from_states, log_det_integral, lyap_from_family, solve_u_state, UStateError, UStateOptions};

/// Floor on the sum-rule tolerance, covering rounding when every sample agrees.
pub const ROUNDING_FLOOR: f64 = 1e-12;

/// Mean and across-sample standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, se: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kingman {
    pub lambda_plus: Estimate,
    pub lambda_minus: Estimate,
    /// `(1/n) Σ log |det A|` along the same orbits.
    pub log_det: Estimate,
}

/// Orbit word with `margin` coordinates before `x_0`, so that windows with
/// `lo < 0` can be read.
fn orbit(m: &GibbsMeasure, c: &WindowedCocycle, n: usize, seed: u64, i: u64) -> (Vec<Symbol>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    let (lo, _) = c.bounds();
    let margin = (-lo).max(0) as usize;
    (m.sample_with(margin + n + c.table().width(), &mut rng), margin)
}

/// `(log ‖A^n‖, Σ log |det A|)` along a word with `x_0` at `start`, renormalizing as it goes.
pub fn log_norm_along(c: &WindowedCocycle, w: &[Symbol], start: usize, n: usize) -> (f64, f64) {
    let (lo, _) = c.bounds();
    let base = (start as i64 + lo) as usize;
    let mut m = Mat2::IDENTITY;
    let (mut log_norm, mut log_det) = (0.0, 0.0);
    for j in 0..n {
        let a = c.table().at_word(w, base + j);
        log_det += a.det().abs().ln();
        m = *a * m;
        let s = m.norm();
        m = m.scale(1.0 / s);
        log_norm += s.ln();
    }
    (log_norm, log_det)
}

/// `(1/n) log ‖A^n‖` and `(1/n) log m(A^n)` over `samples` stationary orbits.
pub fn kingman(c: &WindowedCocycle, m: &GibbsMeasure, n: usize, samples: usize, seed: u64) -> Kingman {
    let per: Vec<(f64, f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (w, start) = orbit(m, c, n, seed, i);
            let (ln, ld) = log_norm_along(c, &w, start, n);
            let nf = n as f64;
            (ln / nf, (ld - ln) / nf, ld / nf)
        })
        .collect();
    let pick = |f: fn(&(f64, f64, f64)) -> f64| Estimate::from_samples(&per.iter().map(f).collect::<Vec<_>>());
    Kingman { lambda_plus: pick(|p| p.0), lambda_minus: pick(|p| p.1), log_det: pick(|p| p.2) }
}

impl Kingman {
    /// `|λ₊ + λ₋ − ∫ log|det||` and the allowed `3σ` (with the rounding floor).
    pub fn sum_rule(&self, det_integral: f64) -> (f64, f64) {
        let gap = (self.lambda_plus.mean + self.lambda_minus.mean - det_integral).abs();
        let sigma = (self.lambda_plus.se.powi(2) + self.lambda_minus.se.powi(2) + self.log_det.se.powi(2)).sqrt();
        (gap, (3.0 * sigma).max(ROUNDING_FLOOR))
    }
}

/// `A^n(p)` at the periodic point `…www…`.
pub fn periodic_product(c: &WindowedCocycle, w: &[Symbol]) -> Mat2 {
    let n = w.len();
    let (lo, hi) = c.bounds();
    let ext: Vec<Symbol> = (lo..n as i64 + hi).map(|j| w[j.rem_euclid(n as i64) as usize]).collect();
    c.product_on_word(&ext, n)
}

/// Gibbs weight of the periodic orbit `…www…`: the cyclic product of transitions.
fn cyclic_weight(m: &GibbsMeasure, w: &[Symbol]) -> f64 {
    let rec = m.recoding();
    let k = rec.k;
    let n = w.len();
    let block = |i: usize| -> usize {
        let b: Vec<Symbol> = (0..k).map(|j| w[(i + j) % n]).collect();
        rec.symbol_of(&b).expect("closed word blocks are admissible")
    };
    let s: Vec<usize> = (0..n).map(block).collect();
    (0..n).map(|i| m.p[s[i]][s[(i + 1) % n]]).product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Periodic {
    /// `(n, Σ_p w(p) (1/n) log ρ(A^n(p)) / Σ_p w(p))` for each period.
    pub by_period: Vec<(usize, f64)>,
}

impl Periodic {
    pub fn last(&self) -> f64 {
        self.by_period.last().map_or(f64::NAN, |p| p.1)
    }
}

pub fn periodic(c: &WindowedCocycle, m: &GibbsMeasure, n_max: usize) -> Periodic {
    let by_period = (1..=n_max)
        .filter_map(|n| {
            let words = closed_words(c.spec(), n);
            let (mut num, mut den) = (0.0, 0.0);
            for w in &words {
                let wt = cyclic_weight(m, w);
                if wt > 0.0 {
                    num += wt * periodic_product(c, w).spectral_radius().ln() / n as f64;
                    den += wt;
                }
            }
            (den > 0.0).then(|| (n, num / den))
        })
        .collect();
    Periodic { by_period }
}

/// All three routes plus the determinant integral.
#[derive(Debug, Clone)]
pub struct ExponentReport {
    pub kingman: Kingman,
    pub periodic: Periodic,
    pub state_plus: f64,
    /// Needs a memory-one measure.
    pub state_minus: Option<f64>,
    pub det_integral: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ExponentOptions {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub period_max: usize,
    pub ustate: UStateOptions,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        Self { n: 10_000, samples: 100, seed: 0, period_max: 6, ustate: UStateOptions::default() }
    }
}

pub fn exponent_report(c: &WindowedCocycle, m: &GibbsMeasure, opts: &ExponentOptions) -> Result<ExponentReport, UStateError> {
    let kingman = kingman(c, m, opts.n, opts.samples, opts.seed);
    let periodic = periodic(c, m, opts.period_max);
    let (state_plus, state_minus) = match exponents_from_states(c, m, &opts.ustate) {
        Ok(e) => (e.lambda_plus, Some(e.lambda_minus)),
        Err(UStateError::Reversal(_)) => {
            let cs = straighten(c, &default_anchors(c.spec()))?;
            let u = solve_u_state(&cs, m, &opts.ustate)?;
            (lyap_from_family(&u.family, &cs, m)?, None)
        }
        Err(e) => return Err(e),
    };
    Ok(ExponentReport { kingman, periodic, state_plus, state_minus, det_integral: log_det_integral(c, m) })
}

/// Largest `|(1/n) log ‖A^n‖ − (1/n) log ‖B^n‖ − (1/n) Σ log |g|| ` over sampled orbits,
/// with `A = g·B` the unimodular split.
pub fn sl2_consistency(c: &WindowedCocycle, m: &GibbsMeasure, n: usize, samples: usize, seed: u64) -> f64 {
    let (g, b) = sl2_split(c);
    let (lo, _) = c.bounds();
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (w, start) = orbit(m, c, n, seed, i);
            let (la, _) = log_norm_along(c, &w, start, n);
            let (lb, _) = log_norm_along(&b, &w, start, n);
            let base = (start as i64 + lo) as usize;
            let lg: f64 = (0..n).map(|j| g.at_word(&w, base + j).abs().ln()).sum();
            ((la - lb - lg) / n as f64).abs()
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::SubshiftSpec;

    #[test]
    fn diagonal_closed_form() {
        let s = SubshiftSpec::full_shift(2, 0.5);
        let c = WindowedCocycle::constant(&s, Mat2::diag(2.0, 0.5)).unwrap();
        let m = GibbsMeasure::bernoulli(&s, &[1.0, 1.0]).unwrap();
        let k = kingman(&c, &m, 1000, 10, 7);
        assert!((k.lambda_plus.mean - 2f64.ln()).abs() < 1e-12);
        assert!((k.lambda_minus.mean + 2f64.ln()).abs() < 1e-12);
        let p = periodic(&c, &m, 6);
        assert!(p.by_period.iter().all(|&(_, v)| (v - 2f64.ln()).abs() < 1e-12));
        let (gap, tol) = k.sum_rule(log_det_integral(&c, &m));
        assert!(gap <= tol);
    }

    #[test]
    fn kingman_is_deterministic_per_seed() {
        let s = SubshiftSpec::golden_mean(0.5);
        let c = WindowedCocycle::per_symbol(&s, &[Mat2::new(2.0, 1.0, 1.0, 1.0), Mat2::new(1.0, 0.5, 0.0, 2.0)]).unwrap();
        let m = GibbsMeasure::markov(&s, vec![vec![0.4, 0.6], vec![1.0, 0.0]]).unwrap();
        assert_eq!(kingman(&c, &m, 200, 8, 3), kingman(&c, &m, 200, 8, 3));
        assert!(sl2_consistency(&c, &m, 500, 8, 3) < 1e-12);
    }

    #[test]
    fn routes_agree_on_a_random_product() {
        let s = SubshiftSpec::full_shift(2, 0.5);
        let c = WindowedCocycle::per_symbol(&s, &[Mat2::new(2.0, 1.0, 1.0, 1.0), Mat2::new(1.0, 0.0, 1.0, 1.0)]).unwrap();
        let m = GibbsMeasure::bernoulli(&s, &[1.0, 1.0]).unwrap();
        let r = exponent_report(&c, &m, &ExponentOptions { n: 4000, samples: 50, ..Default::default() }).unwrap();
        let k = r.kingman.lambda_plus;
        assert!((r.state_plus - k.mean).abs() < 5.0 * k.se + 2e-3, "{} vs {:?}", r.state_plus, k);
        let (gap, tol) = r.kingman.sum_rule(r.det_integral);
        assert!(gap <= tol);
    }
}
