//! Fixed-area minimization of weighted length over chords crossing a planar
//! slab. A chord is a graph `x = X(t)` given by a clamped cubic B-spline;
//! the region `E` is the part of `Ω` to the left of it.

use crate::error::{Error, Result};
use crate::geometry::DiscreteCurve;
use crate::special::{gauss_legendre, gaussian_lower_mass};
use crate::weights::{gaussian_factor, Density, QuadratureSpec};

const DEGREE: usize = 3;
pub const MIN_CONTROL: usize = 4;
pub const MAX_CONTROL: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ChordSpline {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
    knots: Vec<f64>,
}

fn clamped_knots(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let spans = m - DEGREE;
    let mut k = vec![lo; DEGREE + 1];
    for i in 1..spans {
        k.push(lo + (hi - lo) * i as f64 / spans as f64);
    }
    k.extend([hi; DEGREE + 1]);
    k
}

impl ChordSpline {
    pub fn new(lo: f64, hi: f64, coeffs: Vec<f64>) -> Result<Self> {
        let m = coeffs.len();
        if !(MIN_CONTROL..=MAX_CONTROL).contains(&m) {
            return Err(Error::Geometry(format!(
                "chord needs {MIN_CONTROL}..={MAX_CONTROL} control points, got {m}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Geometry(format!("bad chord interval ({lo}, {hi})")));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Geometry("non-finite control abscissa".into()));
        }
        Ok(Self {
            lo,
            hi,
            knots: clamped_knots(lo, hi, m),
            coeffs,
        })
    }

    /// Chord spanning the (truncated) slab with coefficients `X(ξ_j)` at the
    /// Greville abscissae, which reproduces affine `X` exactly.
    pub fn from_fn<F: Fn(f64) -> f64>(density: &Density, m: usize, x: F) -> Result<Self> {
        let (lo, hi) = chord_interval(density);
        let mut s = Self::new(lo, hi, vec![0.0; m.max(MIN_CONTROL)])?;
        if m < MIN_CONTROL {
            return Err(Error::Geometry(format!("need at least {MIN_CONTROL} control points")));
        }
        let g = s.greville();
        s.coeffs = g.iter().map(|&t| x(t)).collect();
        Self::new(lo, hi, s.coeffs)
    }

    pub fn vertical(density: &Density, m: usize, x0: f64) -> Result<Self> {
        Self::from_fn(density, m, |_| x0)
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(self.lo, self.hi, coeffs)
    }

    pub fn translated(&self, tau: f64) -> Self {
        let mut s = self.clone();
        for c in &mut s.coeffs {
            *c += tau;
        }
        s
    }

    pub fn greville(&self) -> Vec<f64> {
        (0..self.coeffs.len())
            .map(|j| self.knots[j + 1..j + 1 + DEGREE].iter().sum::<f64>() / DEGREE as f64)
            .collect()
    }

    fn span(&self, t: f64) -> usize {
        let m = self.coeffs.len();
        if t >= self.knots[m] {
            return m - 1;
        }
        let k = self.knots.partition_point(|&x| x <= t);
        k.saturating_sub(1).clamp(DEGREE, m - 1)
    }

    /// `(X, X', X'')` at `t`.
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let span = self.span(t);
        let b = basis_derivs(&self.knots, span, t);
        let mut out = [0.0; 3];
        for (d, row) in b.iter().enumerate() {
            out[d] = (0..=DEGREE).map(|r| self.coeffs[span - DEGREE + r] * row[r]).sum();
        }
        out
    }

    /// The chord sampled at `nodes` equispaced heights, with exact normals
    /// and curvature from the spline.
    pub fn to_curve(&self, nodes: usize, on_boundary: [bool; 2]) -> Result<DiscreteCurve> {
        if nodes < 4 {
            return Err(Error::Geometry("need at least 4 nodes".into()));
        }
        let ts: Vec<f64> = (0..nodes)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (nodes - 1) as f64)
            .collect();
        let points: Vec<[f64; 2]> = ts.iter().map(|&t| [self.eval(t)[0], t]).collect();
        let mut curve = DiscreteCurve::from_points(points, false, on_boundary)?;
        for (i, &t) in ts.iter().enumerate() {
            let [_, d1, d2] = self.eval(t);
            let q = (1.0 + d1 * d1).sqrt();
            curve.normals[i] = [-1.0 / q, d1 / q];
            curve.curvature[i] = -d2 / (q * q * q);
        }
        Ok(curve)
    }
}

/// Values and first two derivatives of the nonzero cubic B-splines on `span`.
fn basis_derivs(knots: &[f64], span: usize, t: f64) -> [[f64; DEGREE + 1]; 3] {
    let p = DEGREE;
    let mut ndu = [[0.0; DEGREE + 1]; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = [[0.0; DEGREE + 1]; 3];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        let mut a = [[0.0; DEGREE + 1]; 2];
        a[0][0] = 1.0;
        for k in 1..=2usize {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for row in ders.iter_mut().skip(1) {
        for v in row.iter_mut() {
            *v *= factor;
        }
        factor *= (p - 1) as f64;
    }
    ders
}

/// Vertical extent of a chord: the slab, with infinite ends cut by the tail rule.
pub fn chord_interval(density: &Density) -> (f64, f64) {
    density.truncated_slab(&QuadratureSpec::default())
}

/// Composite Gauss–Legendre rule on the spline spans with cached basis values.
#[derive(Debug, Clone)]
struct Rule {
    t: Vec<f64>,
    w: Vec<f64>,
    span: Vec<usize>,
    basis: Vec<[[f64; DEGREE + 1]; 3]>,
}

const POINTS_PER_PANEL: usize = 20;

impl Rule {
    fn new(chord: &ChordSpline, panels_per_span: usize) -> Self {
        let (x, w) = gauss_legendre(POINTS_PER_PANEL);
        let m = chord.coeffs.len();
        let mut rule = Rule {
            t: Vec::new(),
            w: Vec::new(),
            span: Vec::new(),
            basis: Vec::new(),
        };
        for span in DEGREE..m {
            let (a, b) = (chord.knots[span], chord.knots[span + 1]);
            for p in 0..panels_per_span {
                let lo = a + (b - a) * p as f64 / panels_per_span as f64;
                let hi = a + (b - a) * (p + 1) as f64 / panels_per_span as f64;
                let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                for (xi, wi) in x.iter().zip(&w) {
                    let t = mid + half * xi;
                    rule.t.push(t);
                    rule.w.push(half * wi);
                    rule.span.push(span);
                    rule.basis.push(basis_derivs(&chord.knots, span, t));
                }
            }
        }
        rule
    }

    fn shape(&self, chord: &ChordSpline, i: usize) -> [f64; 3] {
        let s = self.span[i];
        let mut out = [0.0; 3];
        for (d, row) in self.basis[i].iter().enumerate() {
            out[d] = (0..=DEGREE).map(|r| chord.coeffs[s - DEGREE + r] * row[r]).sum();
        }
        out
    }
}

/// Everything the optimizer needs about one chord.
#[derive(Debug, Clone)]
struct Evaluation {
    length: f64,
    area: f64,
    grad_length: Vec<f64>,
    grad_area: Vec<f64>,
    mean_curvature: Vec<f64>,
    node_weight: Vec<f64>,
}

fn check_chord(density: &Density, chord: &ChordSpline) -> Result<()> {
    if density.ambient_dim() != 2 {
        return Err(Error::Unsupported("chord optimization is planar".into()));
    }
    let slab = density.slab();
    if chord.lo < slab.lower || chord.hi > slab.upper {
        return Err(Error::Geometry("chord leaves the slab".into()));
    }
    Ok(())
}

fn evaluate(density: &Density, chord: &ChordSpline, rule: &Rule, with_gradient: bool) -> Result<Evaluation> {
    check_chord(density, chord)?;
    let c = density.c();
    let m = chord.coeffs.len();
    let mut length = 0.0;
    let mut area = 0.0;
    let mut gl = vec![0.0; m];
    let mut gv = vec![0.0; m];
    let mut hf = Vec::new();
    let mut fw = Vec::new();
    for i in 0..rule.t.len() {
        let t = rule.t[i];
        let [x, d1, d2] = rule.shape(chord, i);
        let q = (1.0 + d1 * d1).sqrt();
        let lv = density.log_vertical(t);
        let f = (lv - c * x * x).exp();
        length += rule.w[i] * f * q;
        area += rule.w[i] * lv.exp() * gaussian_lower_mass(c, x);
        if with_gradient {
            let dpsi_t = density.weight().derivative(t)? - 2.0 * c * t;
            let k = -d2 / (q * q * q);
            let h = k - (2.0 * c * x + dpsi_t * d1) / q;
            hf.push(h);
            fw.push(f);
            let s = rule.span[i];
            for r in 0..=DEGREE {
                let b = rule.basis[i][0][r];
                gl[s - DEGREE + r] += rule.w[i] * b * f * h;
                gv[s - DEGREE + r] += rule.w[i] * b * f;
            }
        }
    }
    if with_gradient {
        // Boundary terms [f X' B_j / q] at the two ends, where only the
        // first and last B-splines are nonzero.
        for (t, j, sign) in [(chord.lo, 0, -1.0), (chord.hi, m - 1, 1.0)] {
            let [x, d1, _] = chord.eval(t);
            let f = (density.log_vertical(t) - c * x * x).exp();
            if f.is_finite() {
                gl[j] += sign * f * d1 / (1.0 + d1 * d1).sqrt();
            }
        }
    }
    Ok(Evaluation {
        length,
        area,
        grad_length: gl,
        grad_area: gv,
        mean_curvature: hf,
        node_weight: fw,
    })
}

/// Default number of Gauss–Legendre panels per spline span.
pub const DEFAULT_PANELS_PER_SPAN: usize = 2;

/// `∫ f dl` along the chord.
pub fn weighted_length(density: &Density, chord: &ChordSpline) -> Result<f64> {
    let rule = Rule::new(chord, DEFAULT_PANELS_PER_SPAN);
    Ok(evaluate(density, chord, &rule, false)?.length)
}

/// `∫_E f`, with `E` the part of the slab left of the chord.
pub fn enclosed_area(density: &Density, chord: &ChordSpline) -> Result<f64> {
    let rule = Rule::new(chord, DEFAULT_PANELS_PER_SPAN);
    Ok(evaluate(density, chord, &rule, false)?.area)
}

/// Derivatives of weighted length and area with respect to the control
/// abscissae, from the first-variation formula.
pub fn shape_gradient(density: &Density, chord: &ChordSpline) -> Result<(Vec<f64>, Vec<f64>)> {
    let rule = Rule::new(chord, DEFAULT_PANELS_PER_SPAN);
    let e = evaluate(density, chord, &rule, true)?;
    Ok((e.grad_length, e.grad_area))
}

/// Total weighted area of the planar slab.
pub fn planar_total_area(density: &Density) -> Result<f64> {
    let spec = QuadratureSpec {
        rel_tol: 1e-13,
        abs_tol: 1e-300,
        ..QuadratureSpec::default()
    };
    Ok(gaussian_factor(1, density.c()) * density.vertical_mass(&spec)?.value)
}

fn restore_with(density: &Density, chord: &ChordSpline, target: f64, rule: &Rule, tol: f64) -> Result<ChordSpline> {
    // Area is increasing in the translation τ with derivative ∫ f dt.
    let mut tau = 0.0;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let scale = 1.0 / density.c().sqrt();
    for _ in 0..200 {
        let moved = chord.translated(tau);
        let e = evaluate(density, &moved, rule, false)?;
        let r = e.area - target;
        if r.abs() <= tol {
            return Ok(moved);
        }
        if r < 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let slope: f64 = (0..rule.t.len())
            .map(|i| {
                let x = rule.shape(&moved, i)[0];
                rule.w[i] * (density.log_vertical(rule.t[i]) - density.c() * x * x).exp()
            })
            .sum();
        let mut next = tau - r / slope;
        let step_cap = 4.0 * scale;
        if !(next.is_finite()) || (next - tau).abs() > step_cap {
            next = tau - r.signum() * step_cap;
        }
        if next <= lo || next >= hi {
            next = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if lo.is_finite() {
                lo + step_cap
            } else {
                hi - step_cap
            };
        }
        if lo.is_finite() && hi.is_finite() && hi - lo <= 4.0 * f64::EPSILON * tau.abs().max(1.0) {
            return Ok(moved);
        }
        tau = next;
    }
    Err(Error::Consistency("area restoration did not converge".into()))
}

/// Translates the chord horizontally until the enclosed area equals `target`.
pub fn restore_area(density: &Density, chord: &ChordSpline, target: f64) -> Result<ChordSpline> {
    let total = planar_total_area(density)?;
    if !(target > 0.0 && target < total) {
        return Err(Error::InvalidParameter(format!(
            "target area {target} outside (0, {total})"
        )));
    }
    let rule = Rule::new(chord, DEFAULT_PANELS_PER_SPAN);
    restore_with(density, chord, target, &rule, 1e-13 * total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub target_area: f64,
    pub max_iterations: usize,
    /// Stop when the reduced gradient norm drops below this.
    pub gradient_tolerance: f64,
    /// Area constraint tolerance relative to the total area.
    pub area_tolerance: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub panels_per_span: usize,
}

impl OptimizerConfig {
    pub fn new(target_area: f64) -> Self {
        Self {
            target_area,
            max_iterations: 400,
            gradient_tolerance: 1e-9,
            area_tolerance: 1e-12,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 50,
            panels_per_span: DEFAULT_PANELS_PER_SPAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    /// The line search found no decrease.
    Stalled,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIterations => "max_iterations",
            Self::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub length: f64,
    pub area_error: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    pub mean_curvature: f64,
    pub curvature_spread: f64,
    /// Deviation from 90° at the finite slab boundaries, in degrees.
    pub angle_deviation: [Option<f64>; 2],
    pub length: f64,
    pub stationary: bool,
}

pub const ANGLE_TOLERANCE_DEG: f64 = 0.5;

/// Nodes where `f` is below this fraction of its peak along the chord are
/// left out of the curvature spread.
pub const STATIONARITY_WEIGHT_CUTOFF: f64 = 1e-5;

fn report_from(density: &Density, chord: &ChordSpline, e: &Evaluation) -> StationarityReport {
    let peak = e.node_weight.iter().copied().fold(0.0, f64::max);
    let h: Vec<f64> = e
        .mean_curvature
        .iter()
        .zip(&e.node_weight)
        .filter(|(_, w)| **w >= STATIONARITY_WEIGHT_CUTOFF * peak)
        .map(|(h, _)| *h)
        .collect();
    let mean = h.iter().sum::<f64>() / h.len().max(1) as f64;
    let (mn, mx) = h
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &h| (a.min(h), b.max(h)));
    let spread = if h.is_empty() { 0.0 } else { mx - mn };
    let slab = density.slab();
    let angle = |t: f64, finite: bool| {
        finite.then(|| chord.eval(t)[1].abs().atan().to_degrees())
    };
    let angle_deviation = [
        angle(chord.lo, slab.lower.is_finite()),
        angle(chord.hi, slab.upper.is_finite()),
    ];
    let angles_ok = angle_deviation
        .iter()
        .all(|a| a.is_none_or(|d| d <= ANGLE_TOLERANCE_DEG));
    StationarityReport {
        mean_curvature: mean,
        curvature_spread: spread,
        angle_deviation,
        length: e.length,
        stationary: spread <= 1e-3 * (1.0 + mean.abs()) && angles_ok,
    }
}

/// Constant f-mean curvature and orthogonality to the slab boundary.
pub fn stationarity_report(density: &Density, chord: &ChordSpline) -> Result<StationarityReport> {
    let rule = Rule::new(chord, DEFAULT_PANELS_PER_SPAN);
    let e = evaluate(density, chord, &rule, true)?;
    Ok(report_from(density, chord, &e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimization {
    pub chord: ChordSpline,
    pub status: Status,
    pub trace: Vec<TraceEntry>,
    pub report: StationarityReport,
    pub area: f64,
}

fn reduced_gradient(e: &Evaluation) -> Vec<f64> {
    let sl: f64 = e.grad_length.iter().sum();
    let sv: f64 = e.grad_area.iter().sum();
    let mu = sl / sv;
    e.grad_length
        .iter()
        .zip(&e.grad_area)
        .map(|(l, v)| l - mu * v)
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS on the area-restored length, a function of the control abscissae.
pub fn minimize(density: &Density, config: &OptimizerConfig, initial: &ChordSpline) -> Result<Minimization> {
    let total = planar_total_area(density)?;
    if !(config.target_area > 0.0 && config.target_area < total) {
        return Err(Error::InvalidParameter(format!(
            "target area {} outside (0, {total})",
            config.target_area
        )));
    }
    if config.panels_per_span == 0 || !(0.0 < config.backtrack && config.backtrack < 1.0) {
        return Err(Error::InvalidParameter("bad line-search parameters".into()));
    }
    let rule = Rule::new(initial, config.panels_per_span);
    let tol = config.area_tolerance * total;
    let restore = |c: &ChordSpline| restore_with(density, c, config.target_area, &rule, tol);
    let mut chord = restore(initial)?;
    let mut eval = evaluate(density, &chord, &rule, true)?;
    let mut grad = reduced_gradient(&eval);
    let m = grad.len();
    let mut hinv: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut first_step = true;
    let mut trace = vec![TraceEntry {
        iteration: 0,
        length: eval.length,
        area_error: eval.area - config.target_area,
        gradient_norm: norm(&grad),
    }];
    let mut status = Status::MaxIterations;
    for iter in 1..=config.max_iterations {
        if norm(&grad) < config.gradient_tolerance {
            status = Status::Converged;
            break;
        }
        let mut dir: Vec<f64> = (0..m).map(|i| -dotv(&hinv[i], &grad)).collect();
        let mut slope = dotv(&dir, &grad);
        if !(slope < 0.0) {
            dir = grad.iter().map(|g| -g).collect();
            slope = -dotv(&grad, &grad);
            for (i, row) in hinv.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if i == j { 1.0 } else { 0.0 };
                }
            }
            first_step = true;
        }
        if first_step {
            // Keep the first trial step moderate compared to the slab height.
            let (lo, hi) = chord.interval();
            let cap = 0.25 * (hi - lo) / norm(&dir).max(1e-300);
            if cap < 1.0 {
                for d in &mut dir {
                    *d *= cap;
                }
                slope *= cap;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let trial: Vec<f64> = chord.coeffs.iter().zip(&dir).map(|(c, d)| c + step * d).collect();
            if let Ok(candidate) = chord.with_coeffs(trial).and_then(|c| restore(&c)) {
                if let Ok(e) = evaluate(density, &candidate, &rule, true) {
                    if e.length <= eval.length + config.armijo * step * slope {
                        accepted = Some((candidate, e));
                        break;
                    }
                }
            }
            step *= config.backtrack;
        }
        let Some((next, next_eval)) = accepted else {
            status = Status::Stalled;
            break;
        };
        let next_grad = reduced_gradient(&next_eval);
        let s: Vec<f64> = next.coeffs.iter().zip(&chord.coeffs).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dotv(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) {
            if first_step {
                let scale = sy / dotv(&y, &y);
                for (i, row) in hinv.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = if i == j { scale } else { 0.0 };
                    }
                }
                first_step = false;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..m).map(|i| dotv(&hinv[i], &y)).collect();
            let yhy = dotv(&y, &hy);
            for i in 0..m {
                for j in 0..m {
                    hinv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        let decrease = eval.length - next_eval.length;
        chord = next;
        eval = next_eval;
        grad = next_grad;
        trace.push(TraceEntry {
            iteration: iter,
            length: eval.length,
            area_error: eval.area - config.target_area,
            gradient_norm: norm(&grad),
        });
        if norm(&grad) < config.gradient_tolerance {
            status = Status::Converged;
            break;
        }
        if decrease <= 1e-15 * eval.length && step < 1e-6 {
            status = Status::Stalled;
            break;
        }
    }
    let report = report_from(density, &chord, &eval);
    Ok(Minimization {
        area: eval.area,
        chord,
        status,
        trace,
        report,
    })
}
