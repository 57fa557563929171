//! Parameter sweeps `t ↦ (A_t, μ_{φ_t})` and the two stock preset families.
//!
//! Grid levels approach the base point from above: `t_k = t* + h·2^{-k}`.
//! Every level reuses the same seeds, so neighbouring rows see coupled orbits.

use rayon::prelude::*;
use thiserror::Error;

use crate::cocycle::{fiber_bunching, CocycleError, Mat2, WindowedCocycle};
use crate::exponents::{kingman, Kingman};
use crate::symbolic::SubshiftSpec;
use crate::thermo::{equilibrium, measure_distance, GibbsMeasure, Potential, ThermoError};
use crate::ustate::log_det_integral;
use crate::window::Windowed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("at t = {t}: {source}")]
    Cocycle { t: f64, source: CocycleError },
    #[error("at t = {t}: {source}")]
    Thermo { t: f64, source: ThermoError },
    #[error("grid needs at least one level and a nonzero step")]
    Grid,
}

/// Named cocycle families. Both are illustrative test beds, not data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `A_t(x) = exp(t·S(x₀x₁))·R(θ₀)` with `S` traceless symmetric of norm 1:
    /// condition number `e^{2t}`, so bunched at `N = 1` while `e^{2t}θ^α < 1`.
    NearIdentity,
    /// `A_t(x) = diag(e^t, e^{−t})·R(θ₀ + x₀π/(2ℓ))`; the strength `t` leaves the
    /// bunched locus.
    DiagRotation,
}

pub const PRESET_THETA0: f64 = 0.15;

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::NearIdentity => "near_identity",
            Preset::DiagRotation => "diag_rotation",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Preset::NearIdentity, Preset::DiagRotation].into_iter().find(|p| p.name() == s)
    }

    pub fn cocycle(self, spec: &SubshiftSpec, t: f64) -> Result<WindowedCocycle, CocycleError> {
        let l = spec.alphabet_size() as f64;
        match self {
            Preset::NearIdentity => WindowedCocycle::from_fn(spec, 0, 2, |w| {
                let ang = std::f64::consts::PI * (w[0] as f64 + 0.5 * w[1] as f64) / l;
                let (sh, ch) = (t.sinh(), t.cosh());
                let e = Mat2::new(ch + sh * ang.cos(), sh * ang.sin(), sh * ang.sin(), ch - sh * ang.cos());
                e * Mat2::rotation(PRESET_THETA0)
            }),
            Preset::DiagRotation => WindowedCocycle::from_fn(spec, 0, 1, |w| {
                let r = Mat2::rotation(PRESET_THETA0 + w[0] as f64 * std::f64::consts::FRAC_PI_2 / l);
                Mat2::diag(t.exp(), (-t).exp()) * r
            }),
        }
    }
}

/// Fixed reference potential on two-symbol windows.
pub fn reference_potential(spec: &SubshiftSpec) -> Potential {
    Windowed::from_fn(spec, 0, 2, |w| (1.0 + 2.0 * w[0] as f64 + 3.0 * w[1] as f64).cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub t_star: f64,
    pub h: f64,
    pub levels: usize,
}

impl SweepGrid {
    /// `t*` first, then `t_k` for `k = 0..levels`.
    pub fn points(&self) -> Vec<f64> {
        std::iter::once(self.t_star).chain((0..self.levels).map(|k| self.t_star + self.h * 0.5f64.powi(k as i32))).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub alpha: f64,
    pub bunching_n_max: usize,
    /// Cylinder depth of the weak-star gap.
    pub gap_depth: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { n: 10_000, samples: 100, seed: 0, alpha: 1.0, bunching_n_max: 8, gap_depth: 6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t: f64,
    /// `None` for the base point.
    pub level: Option<usize>,
    pub bunching_n: Option<usize>,
    pub bunching_ratio: f64,
    pub kingman: Kingman,
    pub det_integral: f64,
    /// `|λ₊ + λ₋ − ∫ log|det||`.
    pub residual: f64,
    pub residual_tol: f64,
    pub dev_plus: f64,
    pub dev_minus: f64,
    /// `sqrt(se(t)² + se(t*)²)` for `λ₊`.
    pub dev_err: f64,
    pub weak_gap: f64,
    pub psi_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Deviation at the finest two levels must sit below this multiple of the combined error.
pub const FINE_LEVEL_FACTOR: f64 = 5.0;

impl SweepReport {
    fn levels(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.level.is_some())
    }

    pub fn residuals_ok(&self) -> bool {
        self.rows.iter().all(|r| r.residual <= r.residual_tol)
    }

    pub fn fine_levels_ok(&self) -> bool {
        let v: Vec<_> = self.levels().collect();
        v.len() >= 2 && v[v.len() - 2..].iter().all(|r| r.dev_plus <= FINE_LEVEL_FACTOR * r.dev_err)
    }

    /// Weak-star and ψ gaps never increase as `t_k → t*`.
    pub fn gaps_monotone(&self) -> bool {
        let v: Vec<_> = self.levels().collect();
        v.windows(2).all(|p| p[1].weak_gap <= p[0].weak_gap && p[1].psi_gap <= p[0].psi_gap)
    }

    pub fn all_certified(&self) -> bool {
        self.rows.iter().all(|r| r.bunching_n.is_some())
    }
}

struct Point {
    t: f64,
    measure: GibbsMeasure,
    bunching: (Option<usize>, f64),
    kingman: Kingman,
    det_integral: f64,
}

/// Runs `build(t)` at every grid point; rows come back in grid order.
pub fn sweep<F>(grid: &SweepGrid, opts: &SweepOptions, build: F) -> Result<SweepReport, SweepError>
where
    F: Fn(f64) -> Result<(WindowedCocycle, Potential), SweepError> + Sync,
{
    if grid.levels == 0 || grid.h == 0.0 {
        return Err(SweepError::Grid);
    }
    let points: Vec<Point> = grid
        .points()
        .into_par_iter()
        .map(|t| {
            let (c, phi) = build(t)?;
            let measure = equilibrium(&phi).map_err(|source| SweepError::Thermo { t, source })?;
            let bunching = match fiber_bunching(&c, opts.alpha, opts.bunching_n_max) {
                Some(cert) => (Some(cert.n), cert.worst_ratio),
                None => (None, f64::INFINITY),
            };
            let kingman = kingman(&c, &measure, opts.n, opts.samples, opts.seed);
            let det_integral = log_det_integral(&c, &measure);
            Ok(Point { t, measure, bunching, kingman, det_integral })
        })
        .collect::<Result<_, SweepError>>()?;
    let base = &points[0];
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (residual, residual_tol) = p.kingman.sum_rule(p.det_integral);
            let (weak_gap, psi_gap) =
                measure_distance(&p.measure, &base.measure, opts.gap_depth).map_err(|source| SweepError::Thermo { t: p.t, source })?;
            let (kp, bp) = (p.kingman.lambda_plus, base.kingman.lambda_plus);
            Ok(SweepRow {
                t: p.t,
                level: i.checked_sub(1),
                bunching_n: p.bunching.0,
                bunching_ratio: p.bunching.1,
                kingman: p.kingman,
                det_integral: p.det_integral,
                residual,
                residual_tol,
                dev_plus: (kp.mean - bp.mean).abs(),
                dev_minus: (p.kingman.lambda_minus.mean - base.kingman.lambda_minus.mean).abs(),
                dev_err: (kp.se.powi(2) + bp.se.powi(2)).sqrt(),
                weak_gap,
                psi_gap,
            })
        })
        .collect::<Result<_, SweepError>>()?;
    Ok(SweepReport { rows })
}

/// Preset cocycle with `φ_t = t·φ₀`.
pub fn preset_builder(
    preset: Preset,
    spec: SubshiftSpec,
    phi0: Potential,
) -> impl Fn(f64) -> Result<(WindowedCocycle, Potential), SweepError> + Sync {
    move |t| {
        let c = preset.cocycle(&spec, t).map_err(|source| SweepError::Cocycle { t, source })?;
        Ok((c, phi0.map(|_, v| t * v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_the_stated_conditioning() {
        let s = SubshiftSpec::full_shift(2, 0.5);
        let c = Preset::NearIdentity.cocycle(&s, 0.2).unwrap();
        for (_, m) in c.table().entries() {
            assert!((m.condition() - 0.4f64.exp()).abs() < 1e-12);
            assert!((m.det() - 1.0).abs() < 1e-12);
        }
        assert!(fiber_bunching(&c, 1.0, 1).is_some());
        let d = Preset::DiagRotation.cocycle(&s, 1.0).unwrap();
        assert!(fiber_bunching(&d, 1.0, 1).is_none());
        assert_eq!(Preset::from_name("diag_rotation"), Some(Preset::DiagRotation));
    }

    #[test]
    fn small_sweep_is_ordered_and_consistent() {
        let s = SubshiftSpec::full_shift(2, 0.5);
        let grid = SweepGrid { t_star: 0.2, h: 0.1, levels: 4 };
        let opts = SweepOptions { n: 2000, samples: 20, ..Default::default() };
        let r = sweep(&grid, &opts, preset_builder(Preset::NearIdentity, s.clone(), reference_potential(&s))).unwrap();
        assert_eq!(r.rows.len(), 5);
        assert_eq!(r.rows[0].dev_plus, 0.0);
        assert!(r.rows.windows(2).skip(1).all(|p| p[1].t < p[0].t));
        assert!(r.residuals_ok() && r.gaps_monotone() && r.all_certified());
    }
}
