use std::path::{Path, PathBuf};

use cocyc::cocycle::{bunching_profile, default_anchors, fiber_bunching, holder_norm, holonomy_residuals, straighten, WindowedCocycle};
use cocyc::coupling::{demo_instance, descend, spread_diagonal, DescentEnd, MARGINAL_TOL};
use cocyc::exponents::{exponent_report, sl2_consistency, ExponentOptions};
use cocyc::sweep::{sweep, SweepError, SweepGrid, SweepOptions};
use cocyc::symbolic::Symbol;
use cocyc::thermo::{psi_and_xi, GibbsMeasure};
use cocyc::ustate::{atom_spectrum, histogram, lyap_from_family, solve_u_state, su_check, UStateOptions};

use crate::config::ExperimentConfig;
use crate::report::{emit_csv, Table};
use crate::row;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Validate,
    Exponents,
    Bunching,
    Holonomy,
    Equilibrium,
    Ustate,
    Atoms,
    Sweep,
    CouplingDemo,
}

impl Command {
    pub fn stochastic(self) -> bool {
        matches!(self, Command::Exponents | Command::Holonomy | Command::Sweep | Command::CouplingDemo)
    }
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Config = 1,
    Invariant = 2,
    Infeasible = 3,
}

/// Result of a command: tables to write, a status and messages for stderr.
#[derive(Debug)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub exit: Exit,
    pub notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { tables: Vec::new(), exit: Exit::Ok, notes: Vec::new() }
    }

    /// An invariant violation outranks infeasible parameters.
    fn fail(&mut self, exit: Exit, note: impl Into<String>) {
        if self.exit != Exit::Invariant {
            self.exit = exit;
        }
        self.notes.push(note.into());
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub depth: Option<usize>,
    pub grid_points: Option<usize>,
}

fn word_label(w: &[Symbol], l: usize) -> String {
    w.iter().map(|s| (s + 1).to_string()).collect::<Vec<_>>().join(if l > 9 { " " } else { "" })
}

fn ustate_options(cfg: &ExperimentConfig, ov: &Overrides) -> UStateOptions {
    UStateOptions {
        depth: ov.depth.or(cfg.knobs.depth),
        epsilon: cfg.knobs.epsilon,
        grid: ov.grid_points.unwrap_or(cfg.knobs.grid_points),
        max_iter: cfg.knobs.max_iter,
        tol: cfg.knobs.tol,
    }
}

/// Runs one command; `Err` carries a message and exit status for setup failures.
pub fn run(cmd: Command, cfg: &ExperimentConfig, ov: &Overrides) -> Result<Outcome, (Exit, String)> {
    let seed = ov.seed.or(cfg.seed);
    if cmd.stochastic() && seed.is_none() {
        return Err((Exit::Config, format!("{cmd:?} needs a seed: set `seed` in the config or pass --seed")));
    }
    let seed = seed.unwrap_or(0);
    let spec = &cfg.spec;
    if cmd == Command::CouplingDemo {
        return Ok(coupling_demo(cfg, seed));
    }
    if cmd == Command::Sweep {
        return sweep_cmd(cfg, ov, seed);
    }
    let c = cfg.cocycle.at(spec, None).map_err(|e| (Exit::Config, e.to_string()))?;
    let m = cfg.measure.build(spec).map_err(|e| (Exit::Infeasible, e.to_string()))?;
    let mut out = Outcome::new();
    let infeasible = |e: &dyn std::fmt::Display| (Exit::Infeasible, e.to_string());
    match cmd {
        Command::Validate => {
            let (lo, hi) = c.bounds();
            let mut t = Table::new("validate", &["key", "value"]);
            t.push(row!["alphabet", spec.alphabet_size()]);
            t.push(row!["theta", spec.theta()]);
            t.push(row!["period", spec.period()]);
            t.push(row!["window_lo", lo]);
            t.push(row!["window_hi", hi]);
            t.push(row!["future_only", c.future_only()]);
            t.push(row!["measure_memory", m.memory()]);
            t.push(row!["log_lambda", m.log_lambda()]);
            out.tables.push(t);
        }
        Command::Exponents => {
            let opts = ExponentOptions {
                n: cfg.knobs.n,
                samples: cfg.knobs.samples,
                seed,
                period_max: cfg.knobs.period_max,
                ustate: ustate_options(cfg, ov),
            };
            let r = exponent_report(&c, &m, &opts).map_err(|e| infeasible(&e))?;
            let k = &r.kingman;
            let mut t = Table::new("exponents", &["estimator", "lambda_plus", "se_plus", "lambda_minus", "se_minus"]);
            t.push(row!["kingman", k.lambda_plus.mean, k.lambda_plus.se, k.lambda_minus.mean, k.lambda_minus.se]);
            t.push(row!["ustate", r.state_plus, 0.0, r.state_minus, 0.0]);
            for &(n, v) in &r.periodic.by_period {
                t.push(row![format!("periodic_{n}"), v, 0.0, None::<f64>, 0.0]);
            }
            out.tables.push(t);

            let mut chk = Table::new("exponents_checks", &["check", "value", "tolerance", "pass"]);
            let (gap, tol) = k.sum_rule(r.det_integral);
            chk.push(row!["det_integral", r.det_integral, None::<f64>, None::<bool>]);
            chk.push(row!["sum_rule", gap, tol, gap <= tol]);
            if gap > tol {
                out.fail(Exit::Invariant, format!("sum rule off by {gap:e} (allowed {tol:e})"));
            }
            let sl2 = sl2_consistency(&c, &m, cfg.knobs.n, cfg.knobs.samples.min(16), seed);
            chk.push(row!["sl2_consistency", sl2, 1e-12, sl2 <= 1e-12]);
            if sl2 > 1e-12 {
                out.fail(Exit::Invariant, format!("SL2 telescoping off by {sl2:e}"));
            }
            // agreement between routes is reported, not enforced: periodic averages
            // at finite period carry a bias, and the state route has resolution ε
            let agree = 3.0 * k.lambda_plus.se + cfg.knobs.epsilon;
            let dk = (r.state_plus - k.lambda_plus.mean).abs();
            chk.push(row!["kingman_vs_ustate", dk, agree, dk <= agree]);
            let dp = (r.periodic.last() - k.lambda_plus.mean).abs();
            chk.push(row!["kingman_vs_periodic", dp, agree, dp <= agree]);
            if let Some(sm) = r.state_minus {
                let d = (sm - k.lambda_minus.mean).abs();
                let a = 3.0 * k.lambda_minus.se + cfg.knobs.epsilon;
                chk.push(row!["kingman_vs_sstate", d, a, d <= a]);
            }
            out.tables.push(chk);
        }
        Command::Bunching => {
            let alpha = cfg.knobs.alpha;
            let mut t = Table::new("bunching", &["n", "ratio", "exact", "certified"]);
            for (n, ratio, exact) in bunching_profile(&c, alpha, cfg.knobs.bunching_n_max) {
                t.push(row![n, ratio, exact, ratio < 1.0]);
            }
            out.tables.push(t);
            let (sup, semi) = holder_norm(&c, alpha);
            let cert = fiber_bunching(&c, alpha, cfg.knobs.bunching_n_max);
            let mut s = Table::new("bunching_summary", &["alpha", "certified_n", "worst_ratio", "holder_sup", "holder_seminorm"]);
            s.push(row![alpha, cert.as_ref().map(|c| c.n), cert.as_ref().map(|c| c.worst_ratio), sup, semi]);
            out.tables.push(s);
        }
        Command::Holonomy => {
            let rep = holonomy_residuals(&c, cfg.knobs.holonomy_samples, seed, 1e-14).map_err(|e| infeasible(&e))?;
            let tol = if c.future_only() { 0.0 } else { 1e-9 };
            let mut t = Table::new("holonomy", &["law", "side", "residual", "tolerance", "pass"]);
            for (law, side, v) in [
                ("composition", "s", rep.composition_s),
                ("identity", "s", rep.identity_s),
                ("equivariance", "s", rep.equivariance_s),
                ("composition", "u", rep.composition_u),
                ("identity", "u", rep.identity_u),
                ("equivariance", "u", rep.equivariance_u),
            ] {
                t.push(row![law, side, v, tol, v <= tol]);
            }
            out.tables.push(t);
            if rep.max() > tol {
                out.fail(Exit::Invariant, format!("holonomy residual {:e} above {tol:e}", rep.max()));
            }
            if fiber_bunching(&c, cfg.knobs.alpha, cfg.knobs.bunching_n_max).is_none() {
                out.fail(Exit::Infeasible, "no fiber-bunching certificate; holonomies are not canonical");
            }
        }
        Command::Equilibrium => equilibrium_tables(&m, &mut out),
        Command::Ustate | Command::Atoms => {
            let cs = straighten(&c, &default_anchors(spec)).map_err(|e| infeasible(&e))?;
            let sol = solve_u_state(&cs, &m, &ustate_options(cfg, ov)).map_err(|e| infeasible(&e))?;
            if !sol.converged {
                out.notes.push(format!("u-state iteration stopped at residual {:e} after {} steps", sol.residual, sol.history.len()));
            }
            let fam = &sol.family;
            let l = spec.alphabet_size();
            if cmd == Command::Ustate {
                let lp = lyap_from_family(fam, &cs, &m).map_err(|e| infeasible(&e))?;
                let mut s = Table::new("ustate_summary", &["depth", "iterations", "residual", "converged", "lambda_plus"]);
                s.push(row![fam.depth(), sol.history.len(), sol.residual, sol.converged, lp]);
                out.tables.push(s);
                let mut hist = Table::new("ustate_history", &["iteration", "residual"]);
                for (i, r) in sol.history.iter().enumerate() {
                    hist.push(row![i + 1, *r]);
                }
                out.tables.push(hist);
                let bins = cfg.knobs.bins;
                let mut h = Table::new("ustate_histogram", &["word", "bin", "angle_lo", "mass"]);
                for (w, mx) in fam.words().iter().zip(fam.conds()) {
                    for (b, v) in histogram(mx, bins).into_iter().enumerate() {
                        h.push(row![word_label(w, l), b, b as f64 * std::f64::consts::PI / bins as f64, v]);
                    }
                }
                out.tables.push(h);
            } else {
                let a = atom_spectrum(fam, Some(&cs)).map_err(|e| infeasible(&e))?;
                let su = su_check(fam, &cs).map_err(|e| infeasible(&e))?;
                let mut t = Table::new("atoms", &["word", "card", "angles"]);
                for ((w, set), card) in fam.words().iter().zip(&a.sets).zip(&a.cards) {
                    let angles = set.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(";");
                    t.push(row![word_label(w, l), *card, angles]);
                }
                out.tables.push(t);
                let mut s = Table::new(
                    "atoms_summary",
                    &["gamma0", "card_constant", "invariance_residual", "su_s_residual", "su_u_residual", "pairs"],
                );
                s.push(row![a.gamma0, a.card_constant, a.invariance_residual, su.s_residual, su.u_residual, su.pairs]);
                out.tables.push(s);
            }
        }
        Command::Sweep | Command::CouplingDemo => unreachable!(),
    }
    Ok(out)
}

fn equilibrium_tables(m: &GibbsMeasure, out: &mut Outcome) {
    let rec = m.recoding();
    let l = m.spec().alphabet_size();
    let px = psi_and_xi(m);
    let mut s = Table::new("equilibrium_summary", &["log_lambda", "memory", "iterations", "psi_residual", "xi_residual"]);
    s.push(row![m.log_lambda(), m.memory(), m.rpf.iterations, px.psi_residual, px.xi_residual]);
    out.tables.push(s);
    let mut t = Table::new("equilibrium_states", &["block", "zeta", "nu", "pi", "psi"]);
    for (i, w) in rec.words.iter().enumerate() {
        t.push(row![word_label(w, l), m.rpf.zeta[i], m.rpf.nu[i], m.pi[i], px.psi[i]]);
    }
    out.tables.push(t);
    let mut e = Table::new("equilibrium_edges", &["from", "to", "p", "jac_u", "jac_s", "xi"]);
    for (i, wi) in rec.words.iter().enumerate() {
        for (j, wj) in rec.words.iter().enumerate() {
            if m.p[i][j] > 0.0 {
                e.push(row![word_label(wi, l), word_label(wj, l), m.p[i][j], m.jac_u[i][j], m.jac_s[i][j], px.xi[i][j]]);
            }
        }
    }
    out.tables.push(e);
    if px.psi_residual > 1e-10 || px.xi_residual > 1e-10 {
        out.fail(Exit::Invariant, format!("product-structure residuals {:e}, {:e}", px.psi_residual, px.xi_residual));
    }
}

fn sweep_cmd(cfg: &ExperimentConfig, ov: &Overrides, seed: u64) -> Result<Outcome, (Exit, String)> {
    let Some(sw) = cfg.sweep else {
        return Err((Exit::Config, "sweep needs a [sweep] table with t_star and h".into()));
    };
    let grid = SweepGrid { t_star: sw.t_star, h: sw.h, levels: ov.grid_points.unwrap_or(sw.levels) };
    let k = &cfg.knobs;
    let opts = SweepOptions { n: k.n, samples: k.samples, seed, alpha: k.alpha, bunching_n_max: k.bunching_n_max, gap_depth: k.gap_depth };
    let spec = cfg.spec.clone();
    let phi0 = cfg.measure.base_potential(&spec);
    let build = |t: f64| -> Result<(WindowedCocycle, _), SweepError> {
        let c = cfg.cocycle.at(&spec, Some(t)).map_err(|source| SweepError::Cocycle { t, source })?;
        Ok((c, phi0.map(|_, v| t * v)))
    };
    let rep = sweep(&grid, &opts, build).map_err(|e| (Exit::Infeasible, e.to_string()))?;
    let mut out = Outcome::new();
    let mut t = Table::new(
        "sweep",
        &[
            "t",
            "level",
            "bunching_n",
            "bunching_ratio",
            "lambda_plus",
            "se_plus",
            "lambda_minus",
            "se_minus",
            "det_integral",
            "residual",
            "residual_tol",
            "dev_plus",
            "dev_minus",
            "dev_err",
            "weak_gap",
            "psi_gap",
        ],
    );
    for r in &rep.rows {
        let kk = &r.kingman;
        t.push(row![
            r.t,
            r.level,
            r.bunching_n,
            r.bunching_ratio,
            kk.lambda_plus.mean,
            kk.lambda_plus.se,
            kk.lambda_minus.mean,
            kk.lambda_minus.se,
            r.det_integral,
            r.residual,
            r.residual_tol,
            r.dev_plus,
            r.dev_minus,
            r.dev_err,
            r.weak_gap,
            r.psi_gap
        ]);
    }
    out.tables.push(t);
    let mut s = Table::new("sweep_summary", &["residuals_ok", "fine_levels_ok", "gaps_monotone", "all_certified"]);
    s.push(row![rep.residuals_ok(), rep.fine_levels_ok(), rep.gaps_monotone(), rep.all_certified()]);
    out.tables.push(s);
    if !rep.residuals_ok() {
        out.fail(Exit::Invariant, "sum-rule residual above tolerance on some grid row");
    }
    Ok(out)
}

fn coupling_demo(cfg: &ExperimentConfig, seed: u64) -> Outcome {
    let mut out = Outcome::new();
    let mut summary = Table::new(
        "coupling_summary",
        &[
            "instance",
            "alpha",
            "delta",
            "m1",
            "m2",
            "kappa_integral",
            "n",
            "spread_r0",
            "marginal_residual",
            "e0",
            "budget",
            "steps",
            "end",
            "reason",
        ],
    );
    let mut ledger = Table::new("coupling_ledger", &["instance", "step", "term", "bound", "measured", "holds"]);
    let mut energies = Table::new("coupling_energy", &["instance", "step", "energy"]);
    for i in 0..cfg.instances {
        let s = seed.wrapping_add(i as u64);
        let inst = match demo_instance(s) {
            Ok(x) => x,
            Err(e) => {
                out.fail(Exit::Infeasible, format!("instance {i}: {e}"));
                continue;
            }
        };
        let geo = &inst.geometry;
        let (fam, rep) = match spread_diagonal(&inst.family, inst.spread_r) {
            Ok(x) => x,
            Err(e) => {
                out.fail(Exit::Invariant, format!("instance {i}: finite-energy construction failed: {e}"));
                continue;
            }
        };
        let marg = fam.marginal_residual();
        if marg > MARGINAL_TOL {
            out.fail(Exit::Invariant, format!("instance {i}: marginal residual {marg:e}"));
        }
        let d = match descend(&fam, &inst.cocycle, &inst.measure, geo) {
            Ok(d) => d,
            Err(e) => {
                out.fail(Exit::Invariant, format!("instance {i}: {e}"));
                continue;
            }
        };
        for (step, e) in d.energies.iter().enumerate() {
            energies.push(row![i, step, *e]);
        }
        for (step, terms) in d.ledgers.iter().enumerate() {
            for term in terms {
                ledger.push(row![i, step + 1, term.term, term.bound, term.measured, term.holds()]);
                if !term.holds() {
                    out.fail(
                        Exit::Invariant,
                        format!("instance {i} step {}: {} = {:e} against {:e}", step + 1, term.term, term.measured, term.bound),
                    );
                }
            }
        }
        let (end, reason) = match &d.end {
            DescentEnd::Contradiction { .. } => ("contradiction", String::new()),
            DescentEnd::Broken { reason, .. } => ("broken", reason.clone()),
            DescentEnd::StepLimit => ("step_limit", String::new()),
        };
        if !d.contradiction() {
            out.fail(
                Exit::Infeasible,
                format!("instance {i}: descent ended ({end}) after {} steps without negative energy", d.ledgers.len()),
            );
        }
        summary.push(row![
            i,
            geo.alpha,
            geo.delta,
            geo.m1,
            geo.m2,
            geo.kappa_integral,
            geo.n,
            rep.r0,
            marg,
            d.energies[0],
            d.budget,
            d.ledgers.len(),
            end,
            reason
        ]);
    }
    out.tables.extend([summary, ledger, energies]);
    out
}

/// Writes every table as `<name>.csv` under `dir` with provenance columns.
pub fn write_tables(out: &Outcome, dir: &Path, hash: &str) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    out.tables
        .iter()
        .map(|t| {
            let t = t.with_provenance(hash);
            let p = dir.join(format!("{}.csv", t.name));
            emit_csv(&t.header, &t.rows, &p).map(|_| p)
        })
        .collect()
}
