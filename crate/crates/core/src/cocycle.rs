//! 2×2 linear cocycles over the shift: products, Hölder norms, fiber-bunching
//! certificates, stable/unstable holonomies and straightening.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::symbolic::{closed_words, PointRep, Side, SubshiftSpec, Symbol};
use crate::window::{TableError, Windowed};

/// Real 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{:?}, {:?}], [{:?}, {:?}]]", self.a, self.b, self.c, self.d)
    }
}

pub const MIN_ABS_DET: f64 = 1e-12;

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_rows(r: [[f64; 2]; 2]) -> Self {
        Self::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }

    pub const fn diag(a: f64, d: f64) -> Self {
        Self::new(a, 0.0, 0.0, d)
    }

    pub fn rotation(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        Self::new(c, -s, s, c)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }

    pub fn adjugate(&self) -> Self {
        Self::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn inv(&self) -> Self {
        self.adjugate().scale(1.0 / self.det())
    }

    /// `self · other⁻¹` via the adjugate; exactly the identity when `self == other`.
    pub fn mul_inv(&self, other: &Mat2) -> Self {
        let p = *self * other.adjugate();
        let det = other.det();
        Self::new(p.a / det, p.b / det, p.c / det, p.d / det)
    }

    /// `self⁻¹ · other`; exactly the identity when `self == other`.
    pub fn inv_mul(&self, other: &Mat2) -> Self {
        let p = self.adjugate() * *other;
        let det = self.det();
        Self::new(p.a / det, p.b / det, p.c / det, p.d / det)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.c * v[0] + self.d * v[1]]
    }

    /// Singular values `(σ_max, σ_min)` in closed form.
    pub fn singular_values(&self) -> (f64, f64) {
        let p = (self.a + self.d).hypot(self.b - self.c);
        let q = (self.a - self.d).hypot(self.b + self.c);
        let smax = 0.5 * (p + q);
        // σ_min from the determinant keeps relative accuracy for ill-conditioned matrices
        let smin = if smax > 0.0 { self.det().abs() / smax } else { 0.0 };
        (smax, smin)
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        self.singular_values().0
    }

    /// `σ_max / σ_min = ‖M‖·‖M⁻¹‖`.
    pub fn condition(&self) -> f64 {
        let (hi, lo) = self.singular_values();
        hi / lo
    }

    /// Largest eigenvalue modulus.
    pub fn spectral_radius(&self) -> f64 {
        let t = self.trace();
        let disc = t * t - 4.0 * self.det();
        if disc >= 0.0 {
            let r = disc.sqrt();
            // avoid cancellation: the larger root is (|t| + r)/2
            0.5 * (t.abs() + r)
        } else {
            self.det().abs().sqrt()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    pub fn is_sl2(&self) -> bool {
        (self.det() - 1.0).abs() <= 1e-9
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs())
    }

    pub fn to_rows(&self) -> [[f64; 2]; 2] {
        [[self.a, self.b], [self.c, self.d]]
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a * o.a + self.b * o.c, self.a * o.b + self.b * o.d, self.c * o.a + self.d * o.c, self.c * o.b + self.d * o.d)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CocycleError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("matrix for word {word:?} has |det| = {det:e} below {MIN_ABS_DET:e}")]
    Singular { word: Vec<Symbol>, det: f64 },
    #[error("matrix for word {0:?} has non-finite entries")]
    NonFinite(Vec<Symbol>),
    #[error("points are not on a common local {0:?} set")]
    NotLocal(Side),
    #[error("holonomy did not converge within {steps} steps (last increment {increment:e})")]
    NoConvergence { steps: usize, increment: f64 },
    #[error("no fiber-bunching certificate is available for this cocycle")]
    Uncertified,
    #[error("anchor for symbol {0} does not lie in its cylinder")]
    Anchor(usize),
}

/// Anything that assigns an invertible matrix to each point of the shift.
pub trait Cocycle: Send + Sync {
    fn spec(&self) -> &SubshiftSpec;
    /// `A(f^j x)`.
    fn at(&self, x: &PointRep, j: i64) -> Mat2;
    /// Coordinate window `[lo, hi)` when the cocycle is locally constant.
    fn window(&self) -> Option<(i64, i64)>;
    /// Fiber-bunching ratio used to budget holonomy iterations.
    fn bunching_ratio(&self) -> Option<f64>;
}

/// Locally constant cocycle: matrix table on admissible window words.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedCocycle {
    table: Windowed<Mat2>,
}

impl WindowedCocycle {
    pub fn new(table: Windowed<Mat2>) -> Result<Self, CocycleError> {
        for (w, m) in table.entries() {
            if !m.is_finite() {
                return Err(CocycleError::NonFinite(w));
            }
            if m.det().abs() <= MIN_ABS_DET {
                return Err(CocycleError::Singular { word: w, det: m.det() });
            }
        }
        Ok(Self { table })
    }

    pub fn from_entries(
        spec: &SubshiftSpec,
        lo: i64,
        hi: i64,
        entries: impl IntoIterator<Item = (Vec<Symbol>, Mat2)>,
    ) -> Result<Self, CocycleError> {
        Self::new(Windowed::from_entries(spec, lo, hi, entries)?)
    }

    pub fn from_fn(spec: &SubshiftSpec, lo: i64, hi: i64, f: impl FnMut(&[Symbol]) -> Mat2) -> Result<Self, CocycleError> {
        Self::new(Windowed::from_fn(spec, lo, hi, f))
    }

    pub fn constant(spec: &SubshiftSpec, m: Mat2) -> Result<Self, CocycleError> {
        Self::new(Windowed::constant(spec, m))
    }

    /// Matrix depending on `x_0` only.
    pub fn per_symbol(spec: &SubshiftSpec, ms: &[Mat2]) -> Result<Self, CocycleError> {
        Self::from_fn(spec, 0, 1, |w| ms[w[0] as usize])
    }

    pub fn table(&self) -> &Windowed<Mat2> {
        &self.table
    }

    pub fn bounds(&self) -> (i64, i64) {
        self.table.window()
    }

    pub fn future_only(&self) -> bool {
        self.table.future_only()
    }

    /// `A^n` along a finite word, with `w[start]` at coordinate `lo` of the first factor.
    pub fn product_on_word(&self, w: &[Symbol], n: usize) -> Mat2 {
        let mut m = Mat2::IDENTITY;
        for j in 0..n {
            m = *self.table.at_word(w, j) * m;
        }
        m
    }

    /// Applies `f` to every table entry.
    pub fn map(&self, f: impl Fn(&Mat2) -> Mat2) -> Result<Self, CocycleError> {
        Self::new(self.table.map(|_, m| f(m)))
    }
}

impl Cocycle for WindowedCocycle {
    fn spec(&self) -> &SubshiftSpec {
        self.table.spec()
    }

    fn at(&self, x: &PointRep, j: i64) -> Mat2 {
        *self.table.at(x, j)
    }

    fn window(&self) -> Option<(i64, i64)> {
        Some(self.table.window())
    }

    fn bunching_ratio(&self) -> Option<f64> {
        None
    }
}

type PointFn = dyn Fn(&PointRep) -> Mat2 + Send + Sync;

/// Cocycle given by a coordinate-reading function with declared Hölder data.
#[derive(Clone)]
pub struct CallbackCocycle {
    spec: SubshiftSpec,
    f: Arc<PointFn>,
    pub holder_constant: f64,
    pub alpha: f64,
    /// Declared worst ratio `‖A‖‖A⁻¹‖θ^α < 1` at `N = 1`.
    pub ratio: Option<f64>,
}

impl fmt::Debug for CallbackCocycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CallbackCocycle")
            .field("holder_constant", &self.holder_constant)
            .field("alpha", &self.alpha)
            .field("ratio", &self.ratio)
            .finish()
    }
}

impl CallbackCocycle {
    pub fn new(
        spec: &SubshiftSpec,
        holder_constant: f64,
        alpha: f64,
        ratio: Option<f64>,
        f: impl Fn(&PointRep) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        Self { spec: spec.clone(), f: Arc::new(f), holder_constant, alpha, ratio }
    }
}

impl Cocycle for CallbackCocycle {
    fn spec(&self) -> &SubshiftSpec {
        &self.spec
    }

    fn at(&self, x: &PointRep, j: i64) -> Mat2 {
        (self.f)(&x.shift(j))
    }

    fn window(&self) -> Option<(i64, i64)> {
        None
    }

    fn bunching_ratio(&self) -> Option<f64> {
        self.ratio
    }
}

/// `A^n(x)`: forward products for `n > 0`, `Id` for `n = 0`, inverse products over `f⁻¹` for `n < 0`.
pub fn iterate<C: Cocycle + ?Sized>(c: &C, x: &PointRep, n: i64) -> Mat2 {
    let mut m = Mat2::IDENTITY;
    if n >= 0 {
        for j in 0..n {
            m = c.at(x, j) * m;
        }
    } else {
        for j in (n..0).rev() {
            m = c.at(x, j).inv() * m;
        }
    }
    m
}

/// `(sup ‖A‖, Hölder seminorm)`; exact for windowed cocycles.
pub fn holder_norm(c: &WindowedCocycle, alpha: f64) -> (f64, f64) {
    let table = c.table();
    let sup = table.entries().map(|(_, m)| m.norm()).fold(0.0, f64::max);
    let (lo, hi) = table.window();
    let spec = table.spec();
    let r = lo.abs().max((hi - 1).abs());
    let span = 2 * r + 1;
    // words on [-r, r]; a pair agreeing on |n| < N has d_θ ≤ θ^N
    let words = spec.words(span as usize);
    let theta = spec.theta();
    let mut semi: f64 = 0.0;
    for n_agree in 0..=r {
        let mut groups: std::collections::HashMap<Vec<Symbol>, Vec<Mat2>> = Default::default();
        for w in &words {
            let key = if n_agree == 0 { Vec::new() } else { w[(r - n_agree + 1) as usize..(r + n_agree) as usize].to_vec() };
            let m = *table.at_word(w, (lo + r) as usize);
            let g = groups.entry(key).or_default();
            if !g.contains(&m) {
                g.push(m);
            }
        }
        let scale = theta.powf(alpha * n_agree as f64);
        for ms in groups.values() {
            for (i, a) in ms.iter().enumerate() {
                for b in &ms[i + 1..] {
                    semi = semi.max((*a - *b).norm() / scale);
                }
            }
        }
    }
    (sup, semi)
}

/// Witness that `‖A^N‖·‖(A^N)⁻¹‖·θ^{Nα} < 1` on every admissible word.
#[derive(Debug, Clone, PartialEq)]
pub struct BunchingCertificate {
    pub alpha: f64,
    pub n: usize,
    pub worst_ratio: f64,
    /// False when the ratio is a submultiplicative upper bound.
    pub exact: bool,
}

const BUNCHING_FRONTIER_CAP: usize = 1 << 16;

/// Smallest `N ≤ n_max` certifying fiber bunching, if any.
pub fn fiber_bunching(c: &WindowedCocycle, alpha: f64, n_max: usize) -> Option<BunchingCertificate> {
    bunching_profile(c, alpha, n_max).into_iter().find(|(_, ratio, _)| *ratio < 1.0).map(|(n, worst_ratio, exact)| BunchingCertificate {
        alpha,
        n,
        worst_ratio,
        exact,
    })
}

/// `(N, max ratio, exact)` for `N = 1..=n_max`.
pub fn bunching_profile(c: &WindowedCocycle, alpha: f64, n_max: usize) -> Vec<(usize, f64, bool)> {
    let table = c.table();
    let spec = table.spec();
    let w = table.width();
    let theta = spec.theta();
    // frontier: (last w-1 symbols, A^N) with exact duplicates removed
    let mut frontier: Vec<(Vec<Symbol>, Mat2)> = Vec::new();
    for word in spec.words(w) {
        let m = *table.get(&word).unwrap();
        push_unique(&mut frontier, (word[1..].to_vec(), m));
    }
    let mut kmax: Vec<f64> = vec![1.0]; // κ_max(0) = 1
    let mut exact = true;
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        if n > 1 && exact {
            let mut next: Vec<(Vec<Symbol>, Mat2)> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for (tail, m) in &frontier {
                let last = tail.last().copied();
                let succ: Vec<Symbol> = match last {
                    Some(s) => spec.successors(s).collect(),
                    None => (0..spec.alphabet_size() as Symbol).collect(),
                };
                for s in succ {
                    let mut word = tail.clone();
                    word.push(s);
                    let mm = *table.get(&word).unwrap() * *m;
                    let key = (word[1..].to_vec(), bits(&mm));
                    if seen.insert(key) {
                        next.push((word[1..].to_vec(), mm));
                    }
                }
            }
            if next.len() > BUNCHING_FRONTIER_CAP {
                exact = false;
            } else {
                frontier = next;
            }
        }
        let k = if exact {
            frontier.iter().map(|(_, m)| m.condition()).fold(1.0, f64::max)
        } else {
            (1..n).map(|a| kmax[a] * kmax[n - a]).fold(f64::INFINITY, f64::min)
        };
        kmax.push(k);
        out.push((n, k * theta.powf(n as f64 * alpha), exact));
    }
    out
}

fn bits(m: &Mat2) -> [u64; 4] {
    [m.a.to_bits(), m.b.to_bits(), m.c.to_bits(), m.d.to_bits()]
}

fn push_unique(v: &mut Vec<(Vec<Symbol>, Mat2)>, item: (Vec<Symbol>, Mat2)) {
    if !v.iter().any(|(t, m)| *t == item.0 && bits(m) == bits(&item.1)) {
        v.push(item);
    }
}

/// `A = g·B` with `g = sgn(det A)·|det A|^{1/2}` and `|det B| = 1`.
pub fn sl2_split(c: &WindowedCocycle) -> (Windowed<f64>, WindowedCocycle) {
    let g = c.table().map(|_, m| {
        let det = m.det();
        det.signum() * det.abs().sqrt()
    });
    let b = WindowedCocycle::new(c.table().map(|w, m| m.scale(1.0 / g.get(w).unwrap()))).expect("unimodular matrices are invertible");
    (g, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolonomyResult {
    pub matrix: Mat2,
    pub steps: usize,
    pub residual: f64,
    pub exact: bool,
}

/// Canonical holonomy `H_{xy}`: `lim A^n(y)⁻¹A^n(x)` on the stable side,
/// the same limit for the inverse cocycle over `f⁻¹` on the unstable side.
pub fn holonomy<C: Cocycle + ?Sized>(c: &C, x: &PointRep, y: &PointRep, side: Side, tol: f64) -> Result<HolonomyResult, CocycleError> {
    let local = match side {
        Side::S => x.same_future(y),
        Side::U => x.same_past(y),
    };
    if !local {
        return Err(CocycleError::NotLocal(side));
    }
    let sign: i64 = if side == Side::S { 1 } else { -1 };
    if let Some((lo, hi)) = c.window() {
        // factors A(f^j x), A(f^j y) coincide once the window has left the region of disagreement
        let n = match side {
            Side::S => (-lo).max(0),
            Side::U => (hi - 1).max(0),
        };
        let h = iterate(c, y, sign * n).inv_mul(&iterate(c, x, sign * n));
        return Ok(HolonomyResult { matrix: h, steps: n as usize, residual: 0.0, exact: true });
    }
    let ratio = c.bunching_ratio().ok_or(CocycleError::Uncertified)?;
    let budget = (64.0 / -ratio.ln()).ceil().max(1.0) as usize;
    let (mut ax, mut ay) = (Mat2::IDENTITY, Mat2::IDENTITY);
    let mut h = Mat2::IDENTITY;
    let mut increment = f64::INFINITY;
    for n in 0..budget {
        let j = if side == Side::S { n as i64 } else { -(n as i64) - 1 };
        let (mx, my) = (c.at(x, j), c.at(y, j));
        if side == Side::S {
            ax = mx * ax;
            ay = my * ay;
        } else {
            ax = mx.inv() * ax;
            ay = my.inv() * ay;
        }
        let next = ay.inv_mul(&ax);
        increment = (next - h).norm();
        h = next;
        if increment < tol {
            return Ok(HolonomyResult { matrix: h, steps: n + 1, residual: increment, exact: false });
        }
    }
    Err(CocycleError::NoConvergence { steps: budget, increment })
}

/// Default anchors: for each symbol `i`, the least-period, then lexicographically
/// least, periodic point in `[0; i]`.
pub fn default_anchors(spec: &SubshiftSpec) -> Vec<PointRep> {
    (0..spec.alphabet_size() as Symbol)
        .map(|i| {
            (1..)
                .find_map(|n| closed_words(spec, n).into_iter().find(|w| w[0] == i))
                .map(|w| PointRep::periodic(spec, &w).expect("closed word"))
                .expect("transitive spec has cycles through every symbol")
        })
        .collect()
}

/// `g(x) = W^u_loc(z_{x_0}) ∩ W^s_loc(x)`.
pub fn anchor_projection(spec: &SubshiftSpec, x: &PointRep, anchors: &[PointRep]) -> PointRep {
    x.with_past_of(spec, &anchors[x.at(0) as usize]).expect("anchor shares x_0")
}

/// Future-only cocycle cohomologous to `c` through stable holonomies:
/// `Ã(x) = H^s_{f(gx), g(fx)} · A(g(x))`.
pub fn straighten(c: &WindowedCocycle, anchors: &[PointRep]) -> Result<WindowedCocycle, CocycleError> {
    let spec = c.spec().clone();
    for (i, z) in anchors.iter().enumerate() {
        if z.at(0) as usize != i {
            return Err(CocycleError::Anchor(i));
        }
    }
    if c.future_only() {
        return Ok(c.clone());
    }
    let (lo, hi) = c.bounds();
    let width = hi - lo;
    let mut err = None;
    let out = WindowedCocycle::from_fn(&spec, 0, width, |w| {
        let x = spec.close_word(w.to_vec(), 0);
        match straightened_at(c, &x, anchors) {
            Ok(m) => m,
            Err(e) => {
                err.get_or_insert(e);
                Mat2::IDENTITY
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// `Ã(x)` evaluated directly at a point.
pub fn straightened_at<C: Cocycle + ?Sized>(c: &C, x: &PointRep, anchors: &[PointRep]) -> Result<Mat2, CocycleError> {
    let spec = c.spec();
    let gx = anchor_projection(spec, x, anchors);
    let gfx = anchor_projection(spec, &x.shift(1), anchors);
    let h = holonomy(c, &gx.shift(1), &gfx, Side::S, 1e-14)?;
    Ok(h.matrix * c.at(&gx, 0))
}

/// Conjugation form `H^s_{fx, g(fx)} · A(x) · H^s_{g(x), x}`.
pub fn conjugated_at<C: Cocycle + ?Sized>(c: &C, x: &PointRep, anchors: &[PointRep]) -> Result<Mat2, CocycleError> {
    let spec = c.spec();
    let gx = anchor_projection(spec, x, anchors);
    let fx = x.shift(1);
    let gfx = anchor_projection(spec, &fx, anchors);
    let h_out = holonomy(c, &fx, &gfx, Side::S, 1e-14)?;
    let h_in = holonomy(c, &gx, x, Side::S, 1e-14)?;
    Ok(h_out.matrix * c.at(x, 0) * h_in.matrix)
}

/// Maximum holonomy-law residuals over sampled local pairs and triples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HolonomyReport {
    pub composition_s: f64,
    pub identity_s: f64,
    pub equivariance_s: f64,
    pub composition_u: f64,
    pub identity_u: f64,
    pub equivariance_u: f64,
}

impl HolonomyReport {
    pub fn max(&self) -> f64 {
        [self.composition_s, self.identity_s, self.equivariance_s, self.composition_u, self.identity_u, self.equivariance_u]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Samples triples on common local stable (unstable) sets and measures the
/// composition, identity and equivariance laws.
pub fn holonomy_residuals<C: Cocycle + ?Sized>(c: &C, samples: usize, seed: u64, tol: f64) -> Result<HolonomyReport, CocycleError> {
    let spec = c.spec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reach = c.window().map(|(lo, hi)| lo.abs().max(hi.abs())).unwrap_or(8) as usize;
    let len = reach + 6;
    let mut rep = HolonomyReport::default();
    let hol = |a: &PointRep, b: &PointRep, side| holonomy(c, a, b, side, tol).map(|h| h.matrix);
    for _ in 0..samples {
        // stable side: common future, independent pasts
        let fut = spec.random_word(len, &mut rng);
        let mk = |rng: &mut ChaCha8Rng| {
            let mut w = spec.random_past(len, fut[0], rng);
            let origin = w.len() as i64;
            w.extend_from_slice(&fut);
            spec.close_word(w, origin)
        };
        let (x, y, z) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let hxy = hol(&x, &y, Side::S)?;
        let hyz = hol(&y, &z, Side::S)?;
        let hxz = hol(&x, &z, Side::S)?;
        rep.composition_s = rep.composition_s.max((hxz - hyz * hxy).norm());
        rep.identity_s = rep.identity_s.max((hol(&x, &x, Side::S)? - Mat2::IDENTITY).norm());
        let lhs = hol(&y.shift(1), &z.shift(1), Side::S)?;
        let rhs = (c.at(&z, 0) * hyz).mul_inv(&c.at(&y, 0));
        rep.equivariance_s = rep.equivariance_s.max((lhs - rhs).norm());

        // unstable side: common past, independent futures
        let past = spec.random_word(len, &mut rng);
        let last = *past.last().unwrap();
        let mk = |rng: &mut ChaCha8Rng| {
            let succ: Vec<Symbol> = spec.successors(last).collect();
            let mut w = past.clone();
            let mut fut = vec![succ[rand::Rng::gen_range(rng, 0..succ.len())]];
            while fut.len() < len {
                let s: Vec<Symbol> = spec.successors(*fut.last().unwrap()).collect();
                fut.push(s[rand::Rng::gen_range(rng, 0..s.len())]);
            }
            w.extend(fut);
            // x_0 is the last symbol of the shared past
            spec.close_word(w, len as i64 - 1)
        };
        let (x, y, z) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let hxy = hol(&x, &y, Side::U)?;
        let hyz = hol(&y, &z, Side::U)?;
        let hxz = hol(&x, &z, Side::U)?;
        rep.composition_u = rep.composition_u.max((hxz - hyz * hxy).norm());
        rep.identity_u = rep.identity_u.max((hol(&x, &x, Side::U)? - Mat2::IDENTITY).norm());
        let (yp, zp) = (y.shift(-1), z.shift(-1));
        let rhs = (c.at(&zp, 0) * hol(&yp, &zp, Side::U)?).mul_inv(&c.at(&yp, 0));
        rep.equivariance_u = rep.equivariance_u.max((hyz - rhs).norm());
    }
    Ok(rep)
}
