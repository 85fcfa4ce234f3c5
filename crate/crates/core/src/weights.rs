//! The density model `f = e^ψ` with `ψ(p) = ω(π(p)) − c|p|²` on
//! `Ω = ℝⁿ × (a, b)`, its differential invariants, and weighted 1-D
//! quadrature against `e^{ω(t) − ct²} dt`.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_panels, Estimate};

/// Regularity class of a weight on the interior of its domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    Continuous,
}

/// Continuous piecewise-linear weight given by knots and values.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidParameter(
                "piecewise-linear weight needs matching knots/values, at least two".into(),
            ));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite knot or value".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "knots must be strictly increasing".into(),
            ));
        }
        Ok(Self { knots, values })
    }

    /// Builds the weight from its knots, the value at the first knot and the
    /// slope of each segment.
    pub fn from_slopes(knots: Vec<f64>, first_value: f64, slopes: &[f64]) -> Result<Self> {
        if slopes.len() + 1 != knots.len() {
            return Err(Error::InvalidParameter(
                "need one slope per segment".into(),
            ));
        }
        let mut values = Vec::with_capacity(knots.len());
        values.push(first_value);
        for (i, s) in slopes.iter().enumerate() {
            let prev = values[i];
            values.push(prev + s * (knots[i + 1] - knots[i]));
        }
        Self::new(knots, values)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]))
            .collect()
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.knots.partition_point(|&x| x <= t);
        k.saturating_sub(1).min(self.knots.len() - 2)
    }

    fn knot_at(&self, t: f64) -> Option<usize> {
        self.knots
            .iter()
            .position(|&k| (t - k).abs() <= 1e-14 * k.abs().max(1.0))
    }

    fn value(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let (t0, t1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        y0 + (y1 - y0) * (t - t0) / (t1 - t0)
    }

    fn right_slope(&self, t: f64) -> f64 {
        let i = self.segment(t);
        (self.values[i + 1] - self.values[i]) / (self.knots[i + 1] - self.knots[i])
    }
}

/// Concave perturbation `ω` of the Gaussian exponent.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight1D {
    Zero,
    /// `ω(t) = slope·t + intercept`.
    Affine { slope: f64, intercept: f64 },
    /// `ω(t) = −curvature·t² + slope·t + intercept`.
    Quadratic {
        curvature: f64,
        slope: f64,
        intercept: f64,
    },
    /// `ω(t) = exponent·ln t` on `(0, ∞)`.
    LogPower { exponent: f64 },
    PiecewiseLinear(PiecewiseLinear),
}

/// Where a weight fails to be concave.
#[derive(Debug, Clone, PartialEq)]
pub enum ConcavityViolation {
    NegativeCurvature { curvature: f64 },
    NegativeExponent { exponent: f64 },
    IncreasingSlope {
        knot: usize,
        left_slope: f64,
        right_slope: f64,
    },
}

impl fmt::Display for ConcavityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NegativeCurvature { curvature } => {
                write!(f, "quadratic curvature {curvature} < 0")
            }
            Self::NegativeExponent { exponent } => write!(f, "log-power exponent {exponent} < 0"),
            Self::IncreasingSlope {
                knot,
                left_slope,
                right_slope,
            } => write!(
                f,
                "slope increases at knot {knot}: {left_slope} -> {right_slope}"
            ),
        }
    }
}

/// Outcome of [`Weight1D::check_concavity`].
#[derive(Debug, Clone, PartialEq)]
pub enum Concavity {
    Certified,
    Violated(ConcavityViolation),
}

impl Concavity {
    pub fn is_certified(&self) -> bool {
        matches!(self, Self::Certified)
    }
}

impl Weight1D {
    pub fn affine(slope: f64, intercept: f64) -> Self {
        Self::Affine { slope, intercept }
    }

    pub fn quadratic(curvature: f64, slope: f64, intercept: f64) -> Self {
        Self::Quadratic {
            curvature,
            slope,
            intercept,
        }
    }

    pub fn log_power(exponent: f64) -> Self {
        Self::LogPower { exponent }
    }

    pub fn smoothness(&self) -> Smoothness {
        match self {
            Self::PiecewiseLinear(_) => Smoothness::Continuous,
            _ => Smoothness::Smooth,
        }
    }

    /// Closure of the natural domain.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Self::LogPower { .. } => (0.0, f64::INFINITY),
            Self::PiecewiseLinear(pl) => (pl.knots[0], pl.knots[pl.knots.len() - 1]),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        let inside = match self {
            Self::LogPower { .. } => t > 0.0 && t.is_finite(),
            _ => t >= lo && t <= hi && t.is_finite(),
        };
        if inside {
            Ok(())
        } else {
            Err(Error::Domain {
                t,
                detail: format!("domain is [{lo}, {hi}]"),
            })
        }
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(self.value_unchecked(t))
    }

    /// Evaluates without domain checks; `LogPower` at `t ≤ 0` gives `−∞`
    /// for positive exponents.
    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Affine { slope, intercept } => slope * t + intercept,
            Self::Quadratic {
                curvature,
                slope,
                intercept,
            } => -curvature * t * t + slope * t + intercept,
            Self::LogPower { exponent } => {
                if *exponent == 0.0 {
                    0.0
                } else if t <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    exponent * t.ln()
                }
            }
            Self::PiecewiseLinear(pl) => pl.value(t),
        }
    }

    /// First derivative; piecewise-linear weights are rejected at knots.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        if let Self::PiecewiseLinear(pl) = self {
            if pl.knot_at(t).is_some() {
                return Err(Error::NonDifferentiable { t });
            }
        }
        Ok(self.supergradient(t))
    }

    /// A supergradient of `ω` at `t` (the right slope at knots).
    pub(crate) fn supergradient(&self, t: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Affine { slope, .. } => *slope,
            Self::Quadratic {
                curvature, slope, ..
            } => -2.0 * curvature * t + slope,
            Self::LogPower { exponent } => exponent / t,
            Self::PiecewiseLinear(pl) => pl.right_slope(t),
        }
    }

    pub fn second_derivative(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        match self {
            Self::Zero | Self::Affine { .. } => Ok(0.0),
            Self::Quadratic { curvature, .. } => Ok(-2.0 * curvature),
            Self::LogPower { exponent } => Ok(-exponent / (t * t)),
            Self::PiecewiseLinear(_) => Err(Error::Smoothness(
                "piecewise-linear weight has no second derivative".into(),
            )),
        }
    }

    /// Exact concavity check for every closed-form variant.
    pub fn check_concavity(&self) -> Concavity {
        match self {
            Self::Zero | Self::Affine { .. } => Concavity::Certified,
            Self::Quadratic { curvature, .. } => {
                if *curvature >= 0.0 {
                    Concavity::Certified
                } else {
                    Concavity::Violated(ConcavityViolation::NegativeCurvature {
                        curvature: *curvature,
                    })
                }
            }
            Self::LogPower { exponent } => {
                if *exponent >= 0.0 {
                    Concavity::Certified
                } else {
                    Concavity::Violated(ConcavityViolation::NegativeExponent {
                        exponent: *exponent,
                    })
                }
            }
            Self::PiecewiseLinear(pl) => {
                let slopes = pl.slopes();
                for (i, w) in slopes.windows(2).enumerate() {
                    if w[1] > w[0] {
                        return Concavity::Violated(ConcavityViolation::IncreasingSlope {
                            knot: i + 1,
                            left_slope: w[0],
                            right_slope: w[1],
                        });
                    }
                }
                Concavity::Certified
            }
        }
    }

    pub fn is_affine(&self) -> bool {
        match self {
            Self::Zero | Self::Affine { .. } => true,
            Self::Quadratic { curvature, .. } => *curvature == 0.0,
            Self::LogPower { exponent } => *exponent == 0.0,
            Self::PiecewiseLinear(pl) => {
                let s = pl.slopes();
                s.iter().all(|&x| (x - s[0]).abs() <= 1e-14 * s[0].abs().max(1.0))
            }
        }
    }

    /// Extra Gaussian decay carried by the weight itself: `ω(t) ≤ tangent −
    /// extra·(t − t₁)²`. Zero for concave weights other than quadratics.
    fn extra_decay(&self) -> f64 {
        match self {
            Self::Quadratic { curvature, .. } => *curvature,
            _ => 0.0,
        }
    }
}

/// The vertical interval `(a, b)` of `Ω = ℝⁿ × (a, b)`; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slab {
    pub lower: f64,
    pub upper: f64,
}

impl Slab {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidParameter(format!(
                "slab needs a < b, got ({lower}, {upper})"
            )));
        }
        if lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::InvalidParameter("empty slab".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn whole() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn is_whole_line(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }

    /// True when at least one boundary hyperplane is present.
    pub fn is_proper(&self) -> bool {
        !self.is_whole_line()
    }

    pub fn contains_open(&self, t: f64) -> bool {
        t > self.lower && t < self.upper
    }

    pub fn contains_closed(&self, t: f64) -> bool {
        t >= self.lower && t <= self.upper
    }
}

/// Tolerances and tail-truncation parameters for weighted quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
    /// Truncated tail mass must stay below `abs_tol * tail_fraction`.
    pub tail_fraction: f64,
    /// Extra margin added beyond the cutoff, in units of `1/√c`.
    pub tail_padding: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_panels: 4000,
            tail_fraction: 0.1,
            tail_padding: 1.0,
        }
    }
}

impl QuadratureSpec {
    /// Tight relative tolerance with a negligible absolute floor, for
    /// quantities that must stay accurate deep in the tails.
    pub fn tails() -> Self {
        Self {
            rel_tol: 1e-13,
            abs_tol: 1e-300,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.tail_fraction > 0.0) {
            return Err(Error::InvalidParameter(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.max_panels == 0 {
            return Err(Error::InvalidParameter("panel budget must be positive".into()));
        }
        Ok(())
    }
}

/// The full model: weight `ω`, Gaussian rate `c`, ambient dimension `n + 1`,
/// and the slab `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    weight: Weight1D,
    c: f64,
    ambient_dim: usize,
    slab: Slab,
}

impl Density {
    pub fn new(weight: Weight1D, c: f64, ambient_dim: usize, slab: Slab) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("c must be positive, got {c}")));
        }
        if ambient_dim < 1 {
            return Err(Error::InvalidParameter("ambient dimension must be >= 1".into()));
        }
        let (dlo, dhi) = weight.domain();
        if slab.lower < dlo || slab.upper > dhi {
            return Err(Error::InvalidParameter(format!(
                "slab ({}, {}) is not inside the weight domain [{dlo}, {dhi}]",
                slab.lower, slab.upper
            )));
        }
        if let Weight1D::LogPower { exponent } = weight {
            if exponent < 0.0 {
                return Err(Error::InvalidParameter(
                    "log-power exponent must be nonnegative".into(),
                ));
            }
        }
        let d = Self {
            weight,
            c,
            ambient_dim,
            slab,
        };
        if d.effective_rate() <= 0.0 && !(slab.lower.is_finite() && slab.upper.is_finite()) {
            return Err(Error::InvalidParameter(
                "weight grows too fast: the slab has infinite weighted volume".into(),
            ));
        }
        Ok(d)
    }

    pub fn whole_space(weight: Weight1D, c: f64, ambient_dim: usize) -> Result<Self> {
        Self::new(weight, c, ambient_dim, Slab::whole())
    }

    pub fn weight(&self) -> &Weight1D {
        &self.weight
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// `n`, the number of horizontal coordinates.
    pub fn horizontal_dim(&self) -> usize {
        self.ambient_dim - 1
    }

    pub fn slab(&self) -> Slab {
        self.slab
    }

    fn effective_rate(&self) -> f64 {
        self.c + self.weight.extra_decay()
    }

    fn vertical(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.ambient_dim {
            return Err(Error::InvalidParameter(format!(
                "point has {} coordinates, ambient dimension is {}",
                p.len(),
                self.ambient_dim
            )));
        }
        let t = p[p.len() - 1];
        if !self.slab.contains_closed(t) {
            return Err(Error::Domain {
                t,
                detail: format!("outside slab ({}, {})", self.slab.lower, self.slab.upper),
            });
        }
        Ok(t)
    }

    /// `ψ(p) = ω(π(p)) − c|p|²`.
    pub fn psi(&self, p: &[f64]) -> Result<f64> {
        let t = self.vertical(p)?;
        let r2: f64 = p.iter().map(|x| x * x).sum();
        Ok(self.weight.value(t)? - self.c * r2)
    }

    /// `f(p) = e^{ψ(p)}`.
    pub fn f(&self, p: &[f64]) -> Result<f64> {
        Ok(self.psi(p)?.exp())
    }

    /// `f` on the closed slab, vanishing where `ω = −∞` (a `LogPower`
    /// boundary at `t = 0`).
    pub(crate) fn f_closed(&self, p: &[f64]) -> Result<f64> {
        let t = self.vertical(p)?;
        let r2: f64 = p.iter().map(|x| x * x).sum();
        Ok((self.weight.value_unchecked(t) - self.c * r2).exp())
    }

    /// `∇ψ = ω'(π(p)) ∂_t − 2c p`.
    pub fn grad_psi(&self, p: &[f64]) -> Result<Vec<f64>> {
        let t = self.vertical(p)?;
        let dw = self.weight.derivative(t)?;
        let mut g: Vec<f64> = p.iter().map(|x| -2.0 * self.c * x).collect();
        let last = g.len() - 1;
        g[last] += dw;
        Ok(g)
    }

    /// `Ric_f(w, w) = −ω''(π(p)) ⟨∂_t, w⟩² + 2c|w|²`.
    pub fn ric_f(&self, p: &[f64], w: &[f64]) -> Result<f64> {
        let t = self.vertical(p)?;
        if w.len() != self.ambient_dim {
            return Err(Error::InvalidParameter("vector dimension mismatch".into()));
        }
        let wt = w[w.len() - 1];
        let d2 = if wt == 0.0 { 0.0 } else { self.weight.second_derivative(t)? };
        let w2: f64 = w.iter().map(|x| x * x).sum();
        Ok(-d2 * wt * wt + 2.0 * self.c * w2)
    }

    /// Exponent of the 1-D vertical measure, `ω(t) − ct²`.
    pub fn log_vertical(&self, t: f64) -> f64 {
        self.weight.value_unchecked(t) - self.c * t * t
    }

    fn log_vertical_slope(&self, t: f64) -> f64 {
        self.weight.supergradient(t) - 2.0 * self.c * t
    }

    fn anchor(&self, lo: f64, hi: f64) -> f64 {
        let scale = 1.0 / self.effective_rate().sqrt();
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => {
                if lo < 0.0 && self.slab.contains_open(0.0) {
                    0.0
                } else {
                    lo + 0.5 * scale
                }
            }
            (false, true) => {
                if hi > 0.0 && self.slab.contains_open(0.0) {
                    0.0
                } else {
                    hi - 0.5 * scale
                }
            }
            (false, false) => 0.0,
        }
    }

    fn tail_distance(&self, log_at_ref: f64, spec: &QuadratureSpec) -> f64 {
        let rate = self.effective_rate();
        let scale = 1.0 / rate.sqrt();
        let target = (spec.abs_tol * spec.tail_fraction).ln();
        let mut d = scale;
        // ∫_d^∞ e^{-rate u²} du ≤ e^{-rate d²} / (2 rate d)
        while log_at_ref - rate * d * d - (2.0 * rate * d).ln() > target {
            d += 0.25 * scale;
        }
        d + spec.tail_padding * scale
    }

    /// Finite replacement for an infinite upper limit when integrating from `lo`.
    fn upper_cutoff(&self, lo: f64, spec: &QuadratureSpec) -> f64 {
        let scale = 1.0 / self.effective_rate().sqrt();
        let mut t1 = if lo.is_finite() {
            lo.max(self.anchor(lo, f64::INFINITY).min(lo + scale))
        } else {
            self.anchor(lo, f64::INFINITY)
        };
        if lo.is_finite() && t1 <= lo {
            t1 = lo + 1e-3 * scale;
        }
        while self.log_vertical_slope(t1) > 0.0 {
            t1 += scale;
        }
        t1 + self.tail_distance(self.log_vertical(t1), spec)
    }

    /// Finite replacement for an infinite lower limit when integrating up to `hi`.
    fn lower_cutoff(&self, hi: f64, spec: &QuadratureSpec) -> f64 {
        let scale = 1.0 / self.effective_rate().sqrt();
        let mut t1 = if hi.is_finite() {
            hi.min(self.anchor(f64::NEG_INFINITY, hi).max(hi - scale))
        } else {
            self.anchor(f64::NEG_INFINITY, hi)
        };
        if hi.is_finite() && t1 >= hi {
            t1 = hi - 1e-3 * scale;
        }
        while self.log_vertical_slope(t1) < 0.0 {
            t1 -= scale;
        }
        t1 - self.tail_distance(self.log_vertical(t1), spec)
    }

    /// The slab with infinite ends replaced by the tail cutoffs.
    pub fn truncated_slab(&self, spec: &QuadratureSpec) -> (f64, f64) {
        let lo = if self.slab.lower.is_finite() {
            self.slab.lower
        } else {
            self.lower_cutoff(self.slab.upper, spec)
        };
        let hi = if self.slab.upper.is_finite() {
            self.slab.upper
        } else {
            self.upper_cutoff(self.slab.lower, spec)
        };
        (lo, hi)
    }

    fn breakpoints(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo];
        let width = hi - lo;
        if let Weight1D::LogPower { exponent } = self.weight {
            if lo == 0.0 && exponent > 0.0 {
                // Graded mesh towards the algebraic endpoint behaviour at 0.
                let w = width.min(1.0);
                for k in (1..=14).rev() {
                    pts.push(w * 4f64.powi(-k));
                }
            }
        }
        let start = *pts.last().unwrap();
        let panels = ((hi - start) * self.effective_rate().sqrt() * 2.0)
            .ceil()
            .clamp(1.0, 64.0) as usize;
        for i in 1..panels {
            pts.push(start + (hi - start) * i as f64 / panels as f64);
        }
        if let Weight1D::PiecewiseLinear(pl) = &self.weight {
            pts.extend(pl.knots.iter().copied().filter(|&k| k > lo && k < hi));
        }
        pts.push(hi);
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        pts
    }

    /// Total vertical mass `∫_a^b e^{ω(t) − ct²} dt`.
    pub fn vertical_mass(&self, spec: &QuadratureSpec) -> Result<Estimate> {
        integrate_weighted(self, |_| 1.0, self.slab.lower, self.slab.upper, spec)
    }
}

/// `∫_lo^hi g(t) e^{ω(t) − ct²} dt` with infinite limits handled by the
/// Gaussian-domination tail rule.
pub fn integrate_weighted<G: Fn(f64) -> f64>(
    density: &Density,
    g: G,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    spec.validate()?;
    if lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidParameter("NaN integration limit".into()));
    }
    let slab = density.slab;
    if lo < slab.lower || hi > slab.upper {
        return Err(Error::Domain {
            t: if lo < slab.lower { lo } else { hi },
            detail: format!("integration interval leaves slab ({}, {})", slab.lower, slab.upper),
        });
    }
    if hi <= lo {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let a = if lo.is_finite() {
        lo
    } else {
        density.lower_cutoff(hi, spec)
    };
    let b = if hi.is_finite() {
        hi
    } else {
        density.upper_cutoff(lo, spec)
    };
    if b <= a {
        return Ok(Estimate {
            value: 0.0,
            error: spec.abs_tol,
        });
    }
    let integrand = |t: f64| {
        let e = density.log_vertical(t).exp();
        if e == 0.0 {
            0.0
        } else {
            g(t) * e
        }
    };
    integrate_panels(
        integrand,
        &density.breakpoints(a, b),
        spec.rel_tol,
        spec.abs_tol,
        spec.max_panels,
    )
}

/// `(π/c)^{k/2}`, the total mass of `e^{−c|z|²}` on `ℝᵏ`.
pub fn gaussian_factor(k: usize, c: f64) -> f64 {
    (PI / c).powf(0.5 * k as f64)
}

/// Probability normalizers of `e^{−cs²} ds` on `ℝ` and `e^{ω(t)−ct²} dt` on the slab.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizers {
    pub alpha: f64,
    pub beta: f64,
}

pub fn normalizers(density: &Density, spec: &QuadratureSpec) -> Result<Normalizers> {
    let mass = density.vertical_mass(spec)?;
    if !(mass.value > 0.0 && mass.value.is_finite()) {
        return Err(Error::Consistency(format!(
            "vertical mass is {}, expected positive and finite",
            mass.value
        )));
    }
    Ok(Normalizers {
        alpha: 1.0 / gaussian_factor(1, density.c),
        beta: 1.0 / mass.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gauss(c: f64, dim: usize) -> Density {
        Density::whole_space(Weight1D::Zero, c, dim).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_eq!(gauss(1.0, 2).psi(&[0.0, 0.0]).unwrap(), 0.0);
        let d = Density::whole_space(Weight1D::affine(3.0, 0.0), 1.0, 2).unwrap();
        assert_eq!(d.psi(&[1.0, 2.0]).unwrap(), 1.0);
        let d = Density::new(Weight1D::log_power(2.0), 0.5, 2, Slab::new(0.0, f64::INFINITY).unwrap())
            .unwrap();
        assert_eq!(d.psi(&[0.0, 1.0]).unwrap(), -0.5);
        assert!(matches!(d.psi(&[1.0, 0.0]), Err(Error::Domain { .. })));
        assert!(matches!(d.psi(&[1.0, -1.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn grad_psi_examples() {
        let d = Density::whole_space(Weight1D::affine(1.0, 0.0), 0.5, 2).unwrap();
        assert_eq!(d.grad_psi(&[0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(gauss(1.0, 2).grad_psi(&[1.0, 1.0]).unwrap(), vec![-2.0, -2.0]);
        let d = Density::whole_space(Weight1D::quadratic(1.0, 0.0, 0.0), 0.5, 2).unwrap();
        assert_eq!(d.grad_psi(&[0.0, 1.0]).unwrap(), vec![0.0, -3.0]);
    }

    #[test]
    fn piecewise_linear_rejects_derivatives_at_knots() {
        let pl = PiecewiseLinear::from_slopes(vec![-1.0, 0.0, 1.0], 0.0, &[1.0, -1.0]).unwrap();
        let d = Density::new(Weight1D::PiecewiseLinear(pl), 0.5, 2, Slab::new(-1.0, 1.0).unwrap())
            .unwrap();
        assert!(matches!(
            d.grad_psi(&[0.0, 0.0]),
            Err(Error::NonDifferentiable { .. })
        ));
        assert_eq!(d.grad_psi(&[0.0, 0.5]).unwrap(), vec![0.0, -1.0 - 0.5]);
        assert!(matches!(
            d.ric_f(&[0.0, 0.5], &[0.0, 1.0]),
            Err(Error::Smoothness(_))
        ));
    }

    #[test]
    fn ric_f_examples() {
        let c = 0.75;
        assert!((gauss(c, 2).ric_f(&[0.3, -2.0], &[0.6, 0.8]).unwrap() - 2.0 * c).abs() < 1e-15);
        let d = Density::whole_space(Weight1D::quadratic(1.0, 0.0, 0.0), 0.5, 2).unwrap();
        assert_eq!(d.ric_f(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), 3.0);
        let d = Density::whole_space(Weight1D::affine(5.0, 1.0), 1.0, 2).unwrap();
        assert_eq!(d.ric_f(&[2.0, 1.0], &[1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn concavity_examples() {
        let pl = PiecewiseLinear::from_slopes(vec![0.0, 1.0, 2.0, 3.0, 4.0], 0.0, &[2.0, 1.0, 1.0, 0.0])
            .unwrap();
        assert!(Weight1D::PiecewiseLinear(pl).check_concavity().is_certified());
        let pl = PiecewiseLinear::from_slopes(vec![0.0, 1.0, 2.0], 0.0, &[1.0, 2.0]).unwrap();
        match Weight1D::PiecewiseLinear(pl).check_concavity() {
            Concavity::Violated(ConcavityViolation::IncreasingSlope { knot, .. }) => assert_eq!(knot, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(!Weight1D::quadratic(-1.0, 0.0, 0.0).check_concavity().is_certified());
        assert!(!Weight1D::log_power(-0.5).check_concavity().is_certified());
        assert!(Weight1D::affine(-3.0, 2.0).check_concavity().is_certified());
    }

    #[test]
    fn smoothness_classes() {
        assert_eq!(Weight1D::Zero.smoothness(), Smoothness::Smooth);
        let pl = PiecewiseLinear::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(Weight1D::PiecewiseLinear(pl).smoothness(), Smoothness::Continuous);
    }

    #[test]
    fn density_validation() {
        assert!(Density::whole_space(Weight1D::Zero, 0.0, 2).is_err());
        assert!(Slab::new(1.0, 1.0).is_err());
        assert!(Density::new(Weight1D::log_power(1.0), 1.0, 2, Slab::new(-1.0, 1.0).unwrap()).is_err());
        // ω = 2ct² cancels the Gaussian: infinite volume.
        assert!(Density::whole_space(Weight1D::quadratic(-1.0, 0.0, 0.0), 1.0, 2).is_err());
        assert!(Density::new(
            Weight1D::quadratic(-1.0, 0.0, 0.0),
            1.0,
            2,
            Slab::new(-1.0, 1.0).unwrap()
        )
        .is_ok());
    }

    #[test]
    fn gaussian_integrals() {
        let spec = QuadratureSpec::default();
        let d = gauss(0.5, 2);
        let total = integrate_weighted(&d, |_| 1.0, f64::NEG_INFINITY, f64::INFINITY, &spec).unwrap();
        assert!((total.value - (2.0 * PI).sqrt()).abs() < 1e-12);
        let odd = integrate_weighted(&d, |t| t, f64::NEG_INFINITY, f64::INFINITY, &spec).unwrap();
        assert!(odd.value.abs() < 1e-12);
        // erf oracle: √(π/2)·erf(1/√2)
        let unit = integrate_weighted(&d, |_| 1.0, 0.0, 1.0, &spec).unwrap();
        let oracle = (PI / 2.0).sqrt() * libm::erf(1.0 / 2f64.sqrt());
        assert!((unit.value - oracle).abs() < 1e-13);
        assert!((unit.value - 0.8556243918921488).abs() < 1e-12);
    }

    #[test]
    fn normalizer_examples() {
        let spec = QuadratureSpec::default();
        let n = normalizers(&gauss(0.5, 2), &spec).unwrap();
        assert!((n.alpha - 0.3989422804014327).abs() < 1e-15);
        assert!((n.beta - n.alpha).abs() < 1e-12);
        let n = normalizers(&gauss(1.0, 2), &spec).unwrap();
        assert!((n.alpha - 0.5641895835477563).abs() < 1e-15);
        assert!((n.beta - n.alpha).abs() < 1e-12);
        let d = Density::whole_space(Weight1D::affine(1.0, 0.0), 0.5, 2).unwrap();
        let n = normalizers(&d, &spec).unwrap();
        let oracle = 1.0 / ((2.0 * PI).sqrt() * 0.5f64.exp());
        assert!((n.beta - oracle).abs() < 1e-12 * oracle);
        assert!((n.beta - 0.2419707245191433).abs() < 1e-12);
    }

    #[test]
    fn gaussian_factor_examples() {
        assert_eq!(gaussian_factor(0, 3.7), 1.0);
        assert!((gaussian_factor(2, PI) - 1.0).abs() < 1e-15);
        assert!((gaussian_factor(1, 0.5) - (2.0 * PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn log_power_mass_with_graded_mesh() {
        // ∫_0^∞ t² e^{-t²/2} dt = √(π/2)
        let d = Density::new(Weight1D::log_power(2.0), 0.5, 2, Slab::new(0.0, f64::INFINITY).unwrap())
            .unwrap();
        let m = d.vertical_mass(&QuadratureSpec::default()).unwrap();
        assert!((m.value - (PI / 2.0).sqrt()).abs() < 1e-11);
        // ∫_0^∞ t^{1/2} e^{-t²} dt = Γ(3/4)/2
        let d = Density::new(Weight1D::log_power(0.5), 1.0, 2, Slab::new(0.0, f64::INFINITY).unwrap())
            .unwrap();
        let m = d.vertical_mass(&QuadratureSpec::default()).unwrap();
        assert!((m.value - 1.2254167024651776 / 2.0).abs() < 1e-10);
    }

    #[test]
    fn tail_cutoff_is_sound() {
        let d = Density::whole_space(Weight1D::quadratic(0.3, 0.7, 0.1), 0.4, 2).unwrap();
        let spec = QuadratureSpec::default();
        let base = d.vertical_mass(&spec).unwrap();
        let wider = QuadratureSpec {
            tail_padding: 4.0,
            ..spec
        };
        let more = d.vertical_mass(&wider).unwrap();
        assert!((more.value - base.value).abs() <= base.error.max(1e-14));
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            x in -2.0f64..2.0, t in -2.0f64..2.0,
            kappa in 0.0f64..2.0, slope in -2.0f64..2.0, c in 0.2f64..2.0,
        ) {
            let d = Density::whole_space(Weight1D::quadratic(kappa, slope, 0.3), c, 2).unwrap();
            let g = d.grad_psi(&[x, t]).unwrap();
            let h = 1e-5;
            let fx = (d.psi(&[x + h, t]).unwrap() - d.psi(&[x - h, t]).unwrap()) / (2.0 * h);
            let ft = (d.psi(&[x, t + h]).unwrap() - d.psi(&[x, t - h]).unwrap()) / (2.0 * h);
            prop_assert!((fx - g[0]).abs() <= 1e-6 * (1.0 + g[0].abs()));
            prop_assert!((ft - g[1]).abs() <= 1e-6 * (1.0 + g[1].abs()));
        }

        #[test]
        fn concavity_implies_curvature_bound(
            kappa in 0.0f64..3.0, c in 0.1f64..2.0, t in 0.05f64..4.0,
            theta in 0.0f64..std::f64::consts::TAU, m in 0.0f64..4.0,
        ) {
            let w = [theta.cos(), theta.sin()];
            let q = Density::whole_space(Weight1D::quadratic(kappa, 0.1, 0.0), c, 2).unwrap();
            prop_assert!(q.ric_f(&[0.2, t], &w).unwrap() >= 2.0 * c - 1e-12);
            let l = Density::new(Weight1D::log_power(m), c, 2, Slab::new(0.0, f64::INFINITY).unwrap()).unwrap();
            prop_assert!(l.ric_f(&[0.2, t], &w).unwrap() >= 2.0 * c - 1e-12);
        }
    }
}
