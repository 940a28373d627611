//! Discontinuous coupling functions of class A and their Filippov extension.
//!
//! A class A function is continuous and strictly increasing between finitely
//! many breakpoints, and jumps upward at every breakpoint. Its value at a
//! breakpoint is never used; only the one-sided limits matter.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Points per branch when a non-affine branch has to be sampled.
pub const SAMPLES_PER_BRANCH: usize = 10_000;

/// Sampled separation estimates below this are reported as zero.
pub const SEPARATION_FLOOR: f64 = 1e-9;

/// Half-width of the window used to sample a branch that is unbounded on one side.
const UNBOUNDED_SAMPLE_SPAN: f64 = 1e3;

/// Relative tolerance when comparing declared limits against affine branches.
const LIMIT_TOL: f64 = 1e-12;

pub const PRESET_NAMES: &[&str] = &["unit-jump", "linear", "double-jump"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Violation {
    #[error("function has no pieces")]
    NoPieces,
    #[error("clause 1: pieces must tile the real line; piece {index} starts at {lo} but previous ends at {prev_hi}")]
    NotContiguous { index: usize, lo: f64, prev_hi: f64 },
    #[error("clause 1: pieces must start at -inf and end at +inf")]
    NotCovering,
    #[error("clause 1: piece {index} has empty interval ({lo}, {hi})")]
    EmptyPiece { index: usize, lo: f64, hi: f64 },
    #[error("clause 1: breakpoints must be sorted and distinct (at {at})")]
    BreakpointsUnsorted { at: f64 },
    #[error("clause 1: breakpoint {at} is not a piece boundary")]
    BreakpointOffBoundary { at: f64 },
    #[error(
        "clause 1: branches disagree at {at} ({left} vs {right}) but no breakpoint is declared"
    )]
    UndeclaredJump { at: f64, left: f64, right: f64 },
    #[error("clause 2: branch {index} is not strictly increasing: {detail}")]
    NotIncreasing { index: usize, detail: String },
    #[error("clause 3: jump at {at} goes downward (g(d-) = {left}, g(d+) = {right})")]
    DownwardJump { at: f64, left: f64, right: f64 },
    #[error("clause 3: declared {side} limit {declared} at {at} disagrees with the branch limit {branch}")]
    LimitMismatch {
        at: f64,
        side: &'static str,
        declared: f64,
        branch: f64,
    },
    #[error("non-finite parameter in {0}")]
    NonFinite(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("not a class A function: {0}")]
    Violation(#[from] Violation),
    #[error("Assumption 3 unverifiable: separation estimate {estimate} is not positive")]
    SeparationUnverifiable { estimate: f64 },
    #[error("domain [{lo}, {hi}] must be bounded and ordered")]
    BadDomain { lo: f64, hi: f64 },
    #[error("unknown function preset `{0}` (known: unit-jump, linear, double-jump)")]
    UnknownPreset(String),
}

/// Strictly increasing continuous map on one piece.
#[derive(Clone)]
pub enum Branch {
    Affine {
        slope: f64,
        intercept: f64,
    },
    /// Arbitrary increasing callable; its monotonicity is checked by sampling.
    Monotone {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        label: String,
    },
}

impl fmt::Debug for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::Affine { slope, intercept } => f
                .debug_struct("Affine")
                .field("slope", slope)
                .field("intercept", intercept)
                .finish(),
            Branch::Monotone { label, .. } => {
                f.debug_struct("Monotone").field("label", label).finish()
            }
        }
    }
}

impl Branch {
    pub fn affine(slope: f64, intercept: f64) -> Self {
        Branch::Affine { slope, intercept }
    }

    pub fn monotone(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Branch::Monotone {
            f: Arc::new(f),
            label: label.into(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Branch::Affine { slope, intercept } => slope * x + intercept,
            Branch::Monotone { f, .. } => f(x),
        }
    }

    fn is_affine(&self) -> bool {
        matches!(self, Branch::Affine { .. })
    }

    /// `int_a^b branch(s) ds`.
    fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Branch::Affine { slope, intercept } => {
                0.5 * slope * (b * b - a * a) + intercept * (b - a)
            }
            Branch::Monotone { f, .. } => adaptive_simpson(&**f, a, b, 1e-12, 40),
        }
    }
}

/// Branch on the open interval `(lo, hi)`; `lo`/`hi` may be infinite.
#[derive(Debug, Clone)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub branch: Branch,
}

/// Discontinuity at `at` with one-sided limits `left = g(at-)`, `right = g(at+)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub at: f64,
    pub left: f64,
    pub right: f64,
}

impl Breakpoint {
    pub fn jump(&self) -> f64 {
        self.right - self.left
    }
}

/// `K[g](x)`: a single value at continuity points, `[g(x-), g(x+)]` at breakpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilippovInterval {
    pub lo: f64,
    pub hi: f64,
}

impl FilippovInterval {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

#[derive(Debug, Clone)]
pub struct ClassAFunction {
    pieces: Vec<Piece>,
    breakpoints: Vec<Breakpoint>,
}

impl ClassAFunction {
    /// Assembles a function without checking it; see [`validate_class_a`].
    pub fn from_parts(pieces: Vec<Piece>, breakpoints: Vec<Breakpoint>) -> Self {
        Self {
            pieces,
            breakpoints,
        }
    }

    /// Assembles and validates.
    pub fn new(pieces: Vec<Piece>, breakpoints: Vec<Breakpoint>) -> Result<Self, ProtocolError> {
        let g = Self::from_parts(pieces, breakpoints);
        validate_class_a(&g)?;
        Ok(g)
    }

    /// Piecewise-affine function from `(lo, hi, slope, intercept)` pieces.
    /// Breakpoints are placed wherever adjacent branches disagree.
    pub fn piecewise_affine(pieces: &[(f64, f64, f64, f64)]) -> Result<Self, ProtocolError> {
        let pieces: Vec<Piece> = pieces
            .iter()
            .map(|&(lo, hi, slope, intercept)| Piece {
                lo,
                hi,
                branch: Branch::affine(slope, intercept),
            })
            .collect();
        let mut breakpoints = Vec::new();
        for pair in pieces.windows(2) {
            let at = pair[0].hi;
            let left = pair[0].branch.eval(at);
            let right = pair[1].branch.eval(at);
            if !close(left, right) {
                breakpoints.push(Breakpoint { at, left, right });
            }
        }
        Self::new(pieces, breakpoints)
    }

    /// Named presets. `unit-jump` is `x + 1` for `x > 0` and `x` for `x < 0`.
    pub fn preset(name: &str) -> Result<Self, ProtocolError> {
        let inf = f64::INFINITY;
        match name {
            "unit-jump" => Self::piecewise_affine(&[(-inf, 0.0, 1.0, 0.0), (0.0, inf, 1.0, 1.0)]),
            "linear" => Self::piecewise_affine(&[(-inf, inf, 1.0, 0.0)]),
            "double-jump" => Self::piecewise_affine(&[
                (-inf, -1.0, 1.0, 0.0),
                (-1.0, 1.0, 0.5, 1.5),
                (1.0, inf, 2.0, 1.0),
            ]),
            other => Err(ProtocolError::UnknownPreset(other.to_string())),
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn is_piecewise_affine(&self) -> bool {
        self.pieces.iter().all(|p| p.branch.is_affine())
    }

    /// Exact breakpoint lookup.
    pub fn breakpoint_at(&self, x: f64) -> Option<&Breakpoint> {
        self.breakpoints
            .binary_search_by(|b| b.at.total_cmp(&x))
            .ok()
            .map(|i| &self.breakpoints[i])
    }

    /// Nearest breakpoint within `band` of `x`.
    pub fn breakpoint_near(&self, x: f64, band: f64) -> Option<&Breakpoint> {
        let i = self.breakpoints.partition_point(|b| b.at < x);
        let below = i.checked_sub(1).map(|k| &self.breakpoints[k]);
        let above = self.breakpoints.get(i);
        let best = match (below, above) {
            (Some(a), Some(b)) => {
                if x - a.at <= b.at - x {
                    a
                } else {
                    b
                }
            }
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => return None,
        };
        ((best.at - x).abs() <= band).then_some(best)
    }

    /// First breakpoint strictly above `x + skip`.
    pub fn next_breakpoint_above(&self, x: f64, skip: f64) -> Option<&Breakpoint> {
        let i = self.breakpoints.partition_point(|b| b.at <= x + skip);
        self.breakpoints.get(i)
    }

    /// Last breakpoint strictly below `x - skip`.
    pub fn next_breakpoint_below(&self, x: f64, skip: f64) -> Option<&Breakpoint> {
        let i = self.breakpoints.partition_point(|b| b.at < x - skip);
        i.checked_sub(1).map(|k| &self.breakpoints[k])
    }

    fn piece_index(&self, x: f64) -> usize {
        // first piece whose upper end is >= x
        self.pieces
            .partition_point(|p| p.hi < x)
            .min(self.pieces.len() - 1)
    }

    /// Value at a continuity point; `None` at a breakpoint.
    pub fn value(&self, x: f64) -> Option<f64> {
        if self.breakpoint_at(x).is_some() {
            return None;
        }
        Some(self.value_unchecked(x))
    }

    fn value_unchecked(&self, x: f64) -> f64 {
        let k = self.piece_index(x);
        self.pieces[k].branch.eval(x)
    }

    pub fn left_limit(&self, x: f64) -> f64 {
        self.breakpoint_at(x)
            .map_or_else(|| self.value_unchecked(x), |b| b.left)
    }

    pub fn right_limit(&self, x: f64) -> f64 {
        self.breakpoint_at(x)
            .map_or_else(|| self.value_unchecked(x), |b| b.right)
    }

    /// `K[g](x)`.
    pub fn eval_interval(&self, x: f64) -> FilippovInterval {
        match self.breakpoint_at(x) {
            Some(b) => FilippovInterval {
                lo: b.left,
                hi: b.right,
            },
            None => FilippovInterval::point(self.value_unchecked(x)),
        }
    }

    /// Signed integral `int_a^b g(s) ds`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        if a > b {
            return -self.integral(b, a);
        }
        let mut total = 0.0;
        for p in &self.pieces {
            let lo = p.lo.max(a);
            let hi = p.hi.min(b);
            if lo < hi {
                total += p.branch.integral(lo, hi);
            }
        }
        total
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= LIMIT_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Finite window on which a piece is sampled.
fn sample_window(lo: f64, hi: f64) -> (f64, f64) {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo + UNBOUNDED_SAMPLE_SPAN),
        (false, true) => (hi - UNBOUNDED_SAMPLE_SPAN, hi),
        (false, false) => (-UNBOUNDED_SAMPLE_SPAN, UNBOUNDED_SAMPLE_SPAN),
    }
}

/// Open-interval grid of `count` interior points.
fn interior_grid(lo: f64, hi: f64, count: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / (count + 1) as f64;
    (1..=count).map(move |k| lo + h * k as f64)
}

/// Checks the three class A clauses and returns the first violation.
pub fn validate_class_a(g: &ClassAFunction) -> Result<(), Violation> {
    let pieces = &g.pieces;
    if pieces.is_empty() {
        return Err(Violation::NoPieces);
    }
    if pieces[0].lo != f64::NEG_INFINITY || pieces[pieces.len() - 1].hi != f64::INFINITY {
        return Err(Violation::NotCovering);
    }
    for (index, p) in pieces.iter().enumerate() {
        if p.lo.is_nan() || p.hi.is_nan() || !(p.lo < p.hi) {
            return Err(Violation::EmptyPiece {
                index,
                lo: p.lo,
                hi: p.hi,
            });
        }
        if index > 0 && pieces[index - 1].hi != p.lo {
            return Err(Violation::NotContiguous {
                index,
                lo: p.lo,
                prev_hi: pieces[index - 1].hi,
            });
        }
        match &p.branch {
            Branch::Affine { slope, intercept } => {
                if !slope.is_finite() || !intercept.is_finite() {
                    return Err(Violation::NonFinite(format!("branch {index}")));
                }
                if !(*slope > 0.0) {
                    return Err(Violation::NotIncreasing {
                        index,
                        detail: format!("affine slope {slope} is not positive"),
                    });
                }
            }
            Branch::Monotone { f, label } => {
                let (lo, hi) = sample_window(p.lo, p.hi);
                let mut prev: Option<(f64, f64)> = None;
                for x in interior_grid(lo, hi, SAMPLES_PER_BRANCH) {
                    let y = f(x);
                    if !y.is_finite() {
                        return Err(Violation::NonFinite(format!(
                            "branch {index} ({label}) at {x}"
                        )));
                    }
                    if let Some((px, py)) = prev {
                        if !(y > py) {
                            return Err(Violation::NotIncreasing {
                                index,
                                detail: format!("{label}: g({px}) = {py} >= g({x}) = {y}"),
                            });
                        }
                    }
                    prev = Some((x, y));
                }
            }
        }
    }

    for pair in g.breakpoints.windows(2) {
        if !(pair[0].at < pair[1].at) {
            return Err(Violation::BreakpointsUnsorted { at: pair[1].at });
        }
    }
    for b in &g.breakpoints {
        if !b.at.is_finite() || !b.left.is_finite() || !b.right.is_finite() {
            return Err(Violation::NonFinite(format!("breakpoint at {}", b.at)));
        }
        if !pieces.windows(2).any(|w| w[0].hi == b.at) {
            return Err(Violation::BreakpointOffBoundary { at: b.at });
        }
    }

    for w in pieces.windows(2) {
        let at = w[0].hi;
        let left_branch = w[0].branch.eval(at);
        let right_branch = w[1].branch.eval(at);
        match g.breakpoint_at(at) {
            Some(b) => {
                if !(b.right > b.left) {
                    return Err(Violation::DownwardJump {
                        at,
                        left: b.left,
                        right: b.right,
                    });
                }
                if w[0].branch.is_affine() && !close(b.left, left_branch) {
                    return Err(Violation::LimitMismatch {
                        at,
                        side: "left",
                        declared: b.left,
                        branch: left_branch,
                    });
                }
                if w[1].branch.is_affine() && !close(b.right, right_branch) {
                    return Err(Violation::LimitMismatch {
                        at,
                        side: "right",
                        declared: b.right,
                        branch: right_branch,
                    });
                }
            }
            None => {
                if !close(left_branch, right_branch) {
                    return Err(Violation::UndeclaredJump {
                        at,
                        left: left_branch,
                        right: right_branch,
                    });
                }
            }
        }
    }
    Ok(())
}

pub fn eval_interval(g: &ClassAFunction, x: f64) -> FilippovInterval {
    g.eval_interval(x)
}

/// Lower bound on difference quotients of `g` over a domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub epsilon: f64,
    /// `false` when some branch had to be sampled.
    pub exact: bool,
}

/// `inf (g(a) - g(b)) / (a - b)` over continuity points of `[lo, hi]`.
///
/// Piecewise-affine functions give the smallest slope on the domain exactly.
/// Other branches are sampled, with the minimum quotient refined around its
/// location; estimates below [`SEPARATION_FLOOR`] count as zero.
pub fn epsilon_separation(
    g: &ClassAFunction,
    lo: f64,
    hi: f64,
) -> Result<Separation, ProtocolError> {
    if !lo.is_finite() || !hi.is_finite() || lo > hi {
        return Err(ProtocolError::BadDomain { lo, hi });
    }
    let mut eps = f64::INFINITY;
    let mut exact = true;
    for p in &g.pieces {
        let touches = if lo == hi {
            p.lo <= lo && lo <= p.hi
        } else {
            p.lo < hi && p.hi > lo
        };
        if !touches {
            continue;
        }
        match &p.branch {
            Branch::Affine { slope, .. } => eps = eps.min(*slope),
            Branch::Monotone { f, .. } => {
                exact = false;
                let a = p.lo.max(lo);
                let b = p.hi.min(hi);
                let (a, b) = if a < b {
                    (a, b)
                } else {
                    // degenerate domain: probe a small neighbourhood inside the piece
                    let h = 1e-6 * a.abs().max(1.0);
                    ((a - h).max(p.lo), (a + h).min(p.hi))
                };
                eps = eps.min(sampled_min_quotient(&**f, a, b));
            }
        }
    }
    if !exact && eps < SEPARATION_FLOOR {
        eps = 0.0;
    }
    if !(eps > 0.0) {
        return Err(ProtocolError::SeparationUnverifiable { estimate: eps });
    }
    Ok(Separation {
        epsilon: eps,
        exact,
    })
}

fn sampled_min_quotient(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..4 {
        let n = SAMPLES_PER_BRANCH;
        let h = (b - a) / (n - 1) as f64;
        if !(h > 0.0) {
            break;
        }
        let xs: Vec<f64> = (0..n).map(|k| a + h * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let mut arg = 0;
        let mut local = f64::INFINITY;
        for k in 0..n - 1 {
            let q = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
            if q < local {
                local = q;
                arg = k;
            }
        }
        best = best.min(local);
        a = xs[arg.saturating_sub(1)];
        b = xs[(arg + 2).min(n - 1)];
    }
    best
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)
}
