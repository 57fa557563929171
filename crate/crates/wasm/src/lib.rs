//! Browser bindings: u-state histograms, λ₊ sweep curves and the energy ledger.

use cocyc::cocycle::{default_anchors, fiber_bunching, straighten};
use cocyc::coupling::{demo_instance, descend, spread_diagonal, DescentEnd};
use cocyc::exponents::kingman;
use cocyc::sweep::Preset;
use cocyc::symbolic::SubshiftSpec;
use cocyc::thermo::GibbsMeasure;
use cocyc::ustate::{histogram, lyap_from_family, solve_u_state, UStateOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn preset(name: &str) -> Result<Preset, JsError> {
    Preset::from_name(name).ok_or_else(|| JsError::new(&format!("unknown preset {name}")))
}

fn js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

/// Histogram of the u-state conditional at each one-symbol word, concatenated,
/// followed by `λ₊` from the family. Bernoulli weights `(w, 1 − w)`.
#[wasm_bindgen]
pub fn ustate_histogram(preset_name: &str, t: f64, w: f64, bins: usize) -> Result<Vec<f64>, JsError> {
    let spec = SubshiftSpec::full_shift(2, 0.5);
    let c = preset(preset_name)?.cocycle(&spec, t).map_err(js)?;
    let m = GibbsMeasure::bernoulli(&spec, &[w, 1.0 - w]).map_err(js)?;
    let cs = straighten(&c, &default_anchors(&spec)).map_err(js)?;
    let sol = solve_u_state(&cs, &m, &UStateOptions { max_iter: 120, ..Default::default() }).map_err(js)?;
    let fam = &sol.family;
    // window [0, 2) reads two symbols, so the family has depth 2; fold to x₀
    let mut out = vec![0.0; 2 * bins];
    for (word, cond) in fam.words().iter().zip(fam.conds()) {
        let weight = m.cylinder(word) / m.cylinder(&word[..1]);
        let base = word[0] as usize * bins;
        for (j, v) in histogram(cond, bins).into_iter().enumerate() {
            out[base + j] += weight * v;
        }
    }
    out.push(lyap_from_family(fam, &cs, &m).map_err(js)?);
    Ok(out)
}

/// `[t, λ₊, se, certified]` per point on `points` evenly spaced values of `t`.
#[wasm_bindgen]
pub fn sweep_curve(preset_name: &str, t_min: f64, t_max: f64, points: usize, n: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    let spec = SubshiftSpec::full_shift(2, 0.5);
    let p = preset(preset_name)?;
    let m = GibbsMeasure::bernoulli(&spec, &[1.0, 1.0]).map_err(js)?;
    let mut out = Vec::with_capacity(4 * points);
    for i in 0..points {
        let t = if points > 1 { t_min + (t_max - t_min) * i as f64 / (points - 1) as f64 } else { t_min };
        let c = p.cocycle(&spec, t).map_err(js)?;
        let k = kingman(&c, &m, n, 16, seed);
        let certified = fiber_bunching(&c, 1.0, 4).is_some();
        out.extend([t, k.lambda_plus.mean, k.lambda_plus.se, f64::from(u8::from(certified))]);
    }
    Ok(out)
}

#[derive(Serialize)]
struct Term {
    term: &'static str,
    bound: f64,
    measured: f64,
    holds: bool,
}

#[derive(Serialize)]
struct Ledger {
    alpha: f64,
    delta: f64,
    n: usize,
    budget: usize,
    energies: Vec<f64>,
    steps: Vec<Vec<Term>>,
    end: String,
}

/// Energy descent on the generated instance for `seed`, as JSON.
#[wasm_bindgen]
pub fn energy_ledger(seed: u64) -> Result<String, JsError> {
    let inst = demo_instance(seed).map_err(js)?;
    let (fam, _) = spread_diagonal(&inst.family, inst.spread_r).map_err(js)?;
    let d = descend(&fam, &inst.cocycle, &inst.measure, &inst.geometry).map_err(js)?;
    let end = match &d.end {
        DescentEnd::Contradiction { step } => format!("negative energy after step {step}"),
        DescentEnd::Broken { step, reason } => format!("step {step} could not run: {reason}"),
        DescentEnd::StepLimit => "step budget exhausted".to_string(),
    };
    let steps = d
        .ledgers
        .iter()
        .map(|terms| terms.iter().map(|t| Term { term: t.term, bound: t.bound, measured: t.measured, holds: t.holds() }).collect())
        .collect();
    let geo = &inst.geometry;
    let ledger = Ledger { alpha: geo.alpha, delta: geo.delta, n: geo.n, budget: d.budget, energies: d.energies, steps, end };
    serde_json::to_string(&ledger).map_err(js)
}
