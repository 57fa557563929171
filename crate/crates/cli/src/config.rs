//! TOML experiment configs. Words are symbol strings over `1..ℓ` (`"12"`, or
//! space separated for ℓ ≥ 10); matrices are row-major `[[a, b], [c, d]]`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use cocyc::cocycle::{Mat2, WindowedCocycle};
use cocyc::sweep::{reference_potential, Preset};
use cocyc::symbolic::{validate_spec, SubshiftSpec, Symbol};
use cocyc::thermo::{equilibrium, GibbsMeasure, Potential};
use cocyc::window::Windowed;
use serde::Deserialize;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    subshift: Option<RawSubshift>,
    cocycle: Option<RawCocycle>,
    measure: Option<RawMeasure>,
    #[serde(default)]
    knobs: RawKnobs,
    sweep: Option<RawSweep>,
    coupling: Option<RawCoupling>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubshift {
    alphabet: Option<usize>,
    transitions: Option<Vec<Vec<u8>>>,
    theta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCocycle {
    constant: Option<[[f64; 2]; 2]>,
    window: Option<[i64; 2]>,
    entries: Option<BTreeMap<String, [[f64; 2]; 2]>>,
    preset: Option<String>,
    t: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    bernoulli: Option<Vec<f64>>,
    markov: Option<Vec<Vec<f64>>>,
    window: Option<[i64; 2]>,
    potential: Option<BTreeMap<String, f64>>,
    /// `"reference"` for the stock two-symbol potential.
    preset: Option<String>,
    /// Multiplies the potential; in a sweep `t` does.
    scale: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawKnobs {
    depth: Option<usize>,
    epsilon: Option<f64>,
    n: Option<usize>,
    samples: Option<usize>,
    period_max: Option<usize>,
    grid_points: Option<usize>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    alpha: Option<f64>,
    bunching_n_max: Option<usize>,
    gap_depth: Option<usize>,
    holonomy_samples: Option<usize>,
    bins: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    t_star: f64,
    h: f64,
    levels: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupling {
    instances: Option<usize>,
}

/// Every problem found while loading, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.0 {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone)]
pub enum CocycleSpec {
    Table(WindowedCocycle),
    Preset { preset: Preset, t: f64 },
}

impl CocycleSpec {
    pub fn at(&self, spec: &SubshiftSpec, t: Option<f64>) -> Result<WindowedCocycle, cocyc::cocycle::CocycleError> {
        match self {
            CocycleSpec::Table(c) => Ok(c.clone()),
            CocycleSpec::Preset { preset, t: t0 } => preset.cocycle(spec, t.unwrap_or(*t0)),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MeasureSpec {
    Bernoulli(Vec<f64>),
    Markov(Vec<Vec<f64>>),
    Potential { phi: Potential, scale: f64 },
}

impl MeasureSpec {
    /// The potential a sweep scales by `t`; Bernoulli and Markov data become
    /// `log w` and `log p`, whose equilibrium states are those measures.
    pub fn base_potential(&self, spec: &SubshiftSpec) -> Potential {
        match self {
            MeasureSpec::Bernoulli(w) => {
                let s: f64 = w.iter().sum();
                Windowed::from_fn(spec, 0, 1, |x| (w[x[0] as usize] / s).ln())
            }
            MeasureSpec::Markov(p) => Windowed::from_fn(spec, 0, 2, |x| p[x[0] as usize][x[1] as usize].ln()),
            MeasureSpec::Potential { phi, .. } => phi.clone(),
        }
    }

    pub fn build(&self, spec: &SubshiftSpec) -> Result<GibbsMeasure, cocyc::thermo::ThermoError> {
        match self {
            MeasureSpec::Bernoulli(w) => GibbsMeasure::bernoulli(spec, w),
            MeasureSpec::Markov(p) => GibbsMeasure::markov(spec, p.clone()),
            MeasureSpec::Potential { phi, scale } => equilibrium(&phi.map(|_, v| scale * v)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knobs {
    pub depth: Option<usize>,
    pub epsilon: f64,
    pub n: usize,
    pub samples: usize,
    pub period_max: usize,
    pub grid_points: usize,
    pub max_iter: usize,
    /// Fixed-point tolerance of the u-state iteration.
    pub tol: f64,
    pub alpha: f64,
    pub bunching_n_max: usize,
    pub gap_depth: usize,
    pub holonomy_samples: usize,
    pub bins: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub t_star: f64,
    pub h: f64,
    pub levels: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub spec: SubshiftSpec,
    pub cocycle: CocycleSpec,
    pub measure: MeasureSpec,
    pub knobs: Knobs,
    pub sweep: Option<SweepSpec>,
    pub instances: usize,
    /// SHA-256 of the file bytes.
    pub hash: String,
}

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Parse(String),
    Invalid(ConfigErrors),
}

impl fmt::Display for LoadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read config: {e}"),
            LoadError::Parse(e) => write!(f, "cannot parse config: {e}"),
            LoadError::Invalid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for LoadError {}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
    parse_config(&text)
}

pub fn config_hash(text: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses symbols over `1..=l` into `0..l`.
pub fn parse_word(s: &str, l: usize) -> Result<Vec<Symbol>, String> {
    let parts: Vec<&str> = if s.contains(|c: char| c.is_whitespace() || c == ',') {
        s.split(|c: char| c.is_whitespace() || c == ',').filter(|p| !p.is_empty()).collect()
    } else {
        s.split("").filter(|p| !p.is_empty()).collect()
    };
    parts
        .iter()
        .map(|p| match p.parse::<usize>() {
            Ok(v) if (1..=l).contains(&v) => Ok((v - 1) as Symbol),
            _ => Err(format!("symbol {p:?} is not in 1..{l}")),
        })
        .collect()
}

fn range<T: PartialOrd + fmt::Display + Copy>(errs: &mut Vec<String>, key: &str, v: Option<T>, lo: T, hi: T, default: T) -> T {
    match v {
        Some(x) if x < lo || x > hi => {
            errs.push(format!("knobs.{key} = {x} is outside [{lo}, {hi}]"));
            default
        }
        Some(x) => x,
        None => default,
    }
}

/// Reads a word-keyed table on `[lo, hi)`, reporting every bad key.
fn table<T: Clone>(
    errs: &mut Vec<String>,
    what: &str,
    spec: &SubshiftSpec,
    window: [i64; 2],
    entries: &BTreeMap<String, T>,
) -> Option<Windowed<T>> {
    let [lo, hi] = window;
    if lo >= hi {
        errs.push(format!("{what}.window = [{lo}, {hi}] is empty"));
        return None;
    }
    let width = (hi - lo) as usize;
    let mut parsed = Vec::new();
    let before = errs.len();
    for (k, v) in entries {
        match parse_word(k, spec.alphabet_size()) {
            Err(e) => errs.push(format!("{what}.entries[{k:?}]: {e}")),
            Ok(w) if w.len() != width => {
                errs.push(format!("{what}.entries[{k:?}]: length {} does not match window width {width}", w.len()))
            }
            Ok(w) => match spec.check_word(&w) {
                Err(e) => errs.push(format!("{what}.entries[{k:?}]: inadmissible word ({e})")),
                Ok(()) => parsed.push((w, v.clone())),
            },
        }
    }
    for w in spec.words(width) {
        if !parsed.iter().any(|(p, _)| *p == w) {
            let shown: String =
                w.iter().map(|s| (s + 1).to_string()).collect::<Vec<_>>().join(if spec.alphabet_size() > 9 { " " } else { "" });
            errs.push(format!("{what}.entries: missing admissible word {shown:?}"));
        }
    }
    if errs.len() > before {
        return None;
    }
    let lookup: Vec<(Vec<Symbol>, T)> = parsed;
    Some(Windowed::from_fn(spec, lo, hi, |w| lookup.iter().find(|(p, _)| p == w).unwrap().1.clone()))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, LoadError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
    let mut errs = Vec::new();

    let spec = match &raw.subshift {
        None => {
            errs.push("missing [subshift] table".to_string());
            None
        }
        Some(s) => {
            let q: Option<Vec<Vec<bool>>> = match (&s.transitions, s.alphabet) {
                (Some(t), None) => Some(t.iter().map(|r| r.iter().map(|&b| b != 0).collect()).collect()),
                (None, Some(l)) => Some(vec![vec![true; l]; l]),
                (Some(_), Some(_)) => {
                    errs.push("subshift: give either alphabet or transitions, not both".into());
                    None
                }
                (None, None) => {
                    errs.push("subshift: needs alphabet or transitions".into());
                    None
                }
            };
            q.and_then(|q| {
                if q.iter().any(|r| r.len() != q.len()) {
                    errs.push("subshift.transitions is not square".into());
                    return None;
                }
                let d = validate_spec(&q, s.theta);
                for e in &d.errors {
                    errs.push(format!("subshift: {e}"));
                }
                d.is_valid().then(|| SubshiftSpec::new(q, s.theta).expect("validated"))
            })
        }
    };

    let cocycle = match (&raw.cocycle, &spec) {
        (None, _) => {
            errs.push("missing [cocycle] table".into());
            None
        }
        (Some(_), None) => None,
        (Some(c), Some(spec)) => {
            let given = [c.constant.is_some(), c.entries.is_some(), c.preset.is_some()].iter().filter(|b| **b).count();
            if given != 1 {
                errs.push("cocycle: give exactly one of constant, entries, preset".into());
                None
            } else if let Some(m) = c.constant {
                checked_cocycle(&mut errs, WindowedCocycle::constant(spec, Mat2::from_rows(m)))
            } else if let Some(entries) = &c.entries {
                let window = c.window.unwrap_or([0, 1]);
                table(&mut errs, "cocycle", spec, window, entries)
                    .and_then(|t| checked_cocycle(&mut errs, WindowedCocycle::new(t.map(|_, m| Mat2::from_rows(*m)))))
            } else {
                let name = c.preset.as_deref().unwrap();
                match Preset::from_name(name) {
                    Some(preset) => Some(CocycleSpec::Preset { preset, t: c.t.unwrap_or(0.0) }),
                    None => {
                        errs.push(format!("cocycle.preset {name:?} is not one of near_identity, diag_rotation"));
                        None
                    }
                }
            }
        }
    };

    let measure = match (&raw.measure, &spec) {
        (_, None) => None,
        (None, Some(spec)) => Some(MeasureSpec::Potential { phi: Windowed::constant(spec, 0.0), scale: 1.0 }),
        (Some(m), Some(spec)) => measure_spec(&mut errs, m, spec),
    };

    let k = &raw.knobs;
    let knobs = Knobs {
        depth: k.depth.map(|d| range(&mut errs, "depth", Some(d), 1, 12, 1)),
        epsilon: range(&mut errs, "epsilon", k.epsilon, 0.0, 0.1, cocyc::ustate::DEFAULT_EPSILON),
        n: range(&mut errs, "n", k.n, 1, 10_000_000, 10_000),
        samples: range(&mut errs, "samples", k.samples, 2, 100_000, 100),
        period_max: range(&mut errs, "period_max", k.period_max, 1, 16, 6),
        grid_points: range(&mut errs, "grid_points", k.grid_points, 2, 65_536, 64),
        max_iter: range(&mut errs, "max_iter", k.max_iter, 1, 100_000, 200),
        tol: range(&mut errs, "tol", k.tol, 0.0, 1.0, 1e-12),
        alpha: range(&mut errs, "alpha", k.alpha, f64::MIN_POSITIVE, 1.0, 1.0),
        bunching_n_max: range(&mut errs, "bunching_n_max", k.bunching_n_max, 1, 64, 8),
        gap_depth: range(&mut errs, "gap_depth", k.gap_depth, 1, 12, 6),
        holonomy_samples: range(&mut errs, "holonomy_samples", k.holonomy_samples, 1, 100_000, 50),
        bins: range(&mut errs, "bins", k.bins, 1, 4096, 32),
    };

    let sweep = raw.sweep.as_ref().map(|s| {
        if s.h == 0.0 || !s.h.is_finite() || !s.t_star.is_finite() {
            errs.push(format!("sweep: need finite t_star and nonzero h (got {}, {})", s.t_star, s.h));
        }
        SweepSpec { t_star: s.t_star, h: s.h, levels: range(&mut errs, "sweep.levels", s.levels, 1, 30, 10) }
    });
    let instances = raw.coupling.as_ref().and_then(|c| c.instances).unwrap_or(20);
    if instances == 0 {
        errs.push("coupling.instances must be positive".into());
    }

    if !errs.is_empty() {
        return Err(LoadError::Invalid(ConfigErrors(errs)));
    }
    Ok(ExperimentConfig {
        seed: raw.seed,
        spec: spec.unwrap(),
        cocycle: cocycle.unwrap(),
        measure: measure.unwrap(),
        knobs,
        sweep,
        instances,
        hash: config_hash(text),
    })
}

fn checked_cocycle(errs: &mut Vec<String>, c: Result<WindowedCocycle, cocyc::cocycle::CocycleError>) -> Option<CocycleSpec> {
    match c {
        Ok(c) => Some(CocycleSpec::Table(c)),
        Err(e) => {
            errs.push(format!("cocycle: {e}"));
            None
        }
    }
}

fn measure_spec(errs: &mut Vec<String>, m: &RawMeasure, spec: &SubshiftSpec) -> Option<MeasureSpec> {
    let l = spec.alphabet_size();
    let given = [m.bernoulli.is_some(), m.markov.is_some(), m.potential.is_some(), m.preset.is_some()].iter().filter(|b| **b).count();
    if given != 1 {
        errs.push("measure: give exactly one of bernoulli, markov, potential, preset".into());
        return None;
    }
    let scale = m.scale.unwrap_or(1.0);
    if let Some(w) = &m.bernoulli {
        if w.len() != l || w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            errs.push(format!("measure.bernoulli needs {l} positive weights"));
            return None;
        }
        return Some(MeasureSpec::Bernoulli(w.clone()));
    }
    if let Some(p) = &m.markov {
        if p.len() != l || p.iter().any(|r| r.len() != l) {
            errs.push(format!("measure.markov must be {l}×{l}"));
            return None;
        }
        let before = errs.len();
        for (i, row) in p.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if (v > 0.0) != spec.allowed(i as Symbol, j as Symbol) || v < 0.0 {
                    errs.push(format!("measure.markov[{}][{}] = {v} disagrees with the transitions", i + 1, j + 1));
                }
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                errs.push(format!("measure.markov row {} does not sum to 1", i + 1));
            }
        }
        return (errs.len() == before).then(|| MeasureSpec::Markov(p.clone()));
    }
    if let Some(name) = &m.preset {
        if name != "reference" {
            errs.push(format!("measure.preset {name:?} is not \"reference\""));
            return None;
        }
        return Some(MeasureSpec::Potential { phi: reference_potential(spec), scale });
    }
    let entries = m.potential.as_ref().unwrap();
    table(errs, "measure.potential", spec, m.window.unwrap_or([0, 1]), entries).map(|phi| MeasureSpec::Potential { phi, scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_parse_both_ways() {
        assert_eq!(parse_word("121", 2).unwrap(), vec![0, 1, 0]);
        assert_eq!(parse_word("10 2", 10).unwrap(), vec![9, 1]);
        assert!(parse_word("13", 2).is_err());
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config("[subshift]\nalphabet = 2\ntheta = 0.5\n[cocycle]\nconstant = [[2.0, 0.0], [0.0, 0.5]]\n").unwrap();
        assert_eq!(c.knobs.n, 10_000);
        assert_eq!(c.knobs.samples, 100);
        assert!(matches!(c.measure, MeasureSpec::Potential { .. }));
        assert_eq!(c.hash.len(), 64);
    }

    #[test]
    fn all_violations_are_listed() {
        let text = r#"
[subshift]
transitions = [[1, 1], [1, 0]]
theta = 0.5
[cocycle]
window = [0, 2]
entries = { "11" = [[1.0, 0.0], [0.0, 1.0]], "12" = [[1.0, 0.0], [0.0, 1.0]], "22" = [[1.0, 0.0], [0.0, 1.0]] }
[knobs]
samples = 1
"#;
        let Err(LoadError::Invalid(ConfigErrors(e))) = parse_config(text) else { panic!() };
        assert!(e.iter().any(|m| m.contains("\"22\"") && m.contains("inadmissible")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("missing admissible word \"21\"")), "{e:?}");
        assert!(e.iter().any(|m| m.contains("knobs.samples")), "{e:?}");
    }

    #[test]
    fn theta_one_is_rejected() {
        let Err(LoadError::Invalid(ConfigErrors(e))) =
            parse_config("[subshift]\nalphabet = 2\ntheta = 1.0\n[cocycle]\nconstant = [[1.0, 0.0], [0.0, 1.0]]\n")
        else {
            panic!()
        };
        assert!(e.iter().any(|m| m.contains("theta")));
    }
}
