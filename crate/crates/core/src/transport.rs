//! Monotone rearrangement `ρ` pushing `α e^{−cs²} ds` onto
//! `β e^{ω(t) − ct²} dt`, with contraction and perimeter certificates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{planar_f, DiscreteCurve};
use crate::special::{gaussian_lower_mass, gaussian_quantile, gaussian_upper_mass};
use crate::weights::{integrate_weighted, normalizers, Density, Normalizers, QuadratureSpec};

/// Quantiles closer than this to 0 or 1 are clipped.
pub const QUANTILE_CLIP: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportOptions {
    /// Source nodes; `None` spans the unclipped quantile range.
    pub grid: Option<Vec<f64>>,
    pub grid_size: usize,
    /// Build the map even when the weight is not concave.
    pub allow_nonconcave: bool,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            grid: None,
            grid_size: 401,
            allow_nonconcave: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub s: Vec<f64>,
    pub rho: Vec<f64>,
    pub drho: Vec<f64>,
    /// Nodes whose source quantile was clipped; excluded from all checks.
    pub clipped: Vec<bool>,
    pub normalizers: Normalizers,
    pub warnings: Vec<String>,
    density: Density,
}

fn spec() -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: 1e-13,
        abs_tol: 1e-30,
        max_panels: 20_000,
        ..QuadratureSpec::default()
    }
}

/// Target masses below and above `t`, each normalized by `β`.
fn target_masses(density: &Density, beta: f64, t: f64) -> Result<(f64, f64)> {
    let slab = density.slab();
    let spec = spec();
    let lower = integrate_weighted(density, |_| 1.0, slab.lower, t, &spec)?.value;
    let upper = integrate_weighted(density, |_| 1.0, t, slab.upper, &spec)?.value;
    Ok((beta * lower, beta * upper))
}

/// Source masses below and above `s`, normalized by `α`.
fn source_masses(c: f64, alpha: f64, s: f64) -> (f64, f64) {
    (alpha * gaussian_lower_mass(c, s), alpha * gaussian_upper_mass(c, s))
}

/// Inverts the target CDF: finds `t` with mass `q` below it (`upper = 1 − q`
/// is passed separately to keep tail precision). Newton on the logarithm of
/// the relevant tail mass, safeguarded by bisection.
fn invert_target(density: &Density, beta: f64, window: (f64, f64), lower: f64, upper: f64) -> Result<f64> {
    let use_lower = lower <= upper;
    let goal = if use_lower { lower } else { upper };
    let ln_goal = goal.ln();
    let (mut lo, mut hi) = window;
    let mut t = 0.5 * (lo + hi);
    let mut best = (t, f64::INFINITY);
    for _ in 0..200 {
        let (ml, mu) = target_masses(density, beta, t)?;
        let mass = if use_lower { ml } else { mu };
        // Residual increasing in t.
        let r = if use_lower { mass.ln() - ln_goal } else { ln_goal - mass.ln() };
        let abs_r = (mass - goal).abs();
        if abs_r < best.1 {
            best = (t, abs_r);
        }
        if abs_r <= 1e-14 * goal || hi - lo <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            break;
        }
        if r < 0.0 || (r.is_nan() && use_lower) {
            lo = t;
        } else {
            hi = t;
        }
        let dens = beta * density.log_vertical(t).exp();
        let slope = dens / mass;
        let newton = t - r / slope;
        t = if slope.is_finite() && slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if best.1 > 1e-12 {
        return Err(Error::Consistency(format!(
            "CDF inversion stalled at q = {lower}: residual {}",
            best.1
        )));
    }
    Ok(best.0)
}

fn derivative(density: &Density, n: Normalizers, s: f64, t: f64) -> f64 {
    let c = density.c();
    (n.alpha.ln() - c * s * s - n.beta.ln() - density.log_vertical(t)).exp()
}

/// Source range whose quantiles stay inside `[1e−14, 1 − 1e−14]`.
pub fn unclipped_range(c: f64) -> (f64, f64) {
    let s = gaussian_quantile(c, QUANTILE_CLIP, 1.0 - QUANTILE_CLIP);
    (s, -s)
}

/// Builds `ρ = CDF₂⁻¹ ∘ CDF₁` on a grid, with `ρ'` from
/// `α e^{−cs²} = β e^{ω(ρ) − cρ²} ρ'`.
pub fn build_transport(density: &Density, options: &TransportOptions) -> Result<TransportMap> {
    let mut warnings = Vec::new();
    if let crate::weights::Concavity::Violated(v) = density.weight().check_concavity() {
        if !options.allow_nonconcave {
            return Err(Error::Precondition(format!("weight is not concave: {v}")));
        }
        warnings.push(format!("non-concave weight ({v}); contraction is not expected"));
    }
    let norm = normalizers(density, &spec())?;
    let c = density.c();
    let s: Vec<f64> = match &options.grid {
        Some(g) => {
            if g.len() < 2 || g.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidParameter(
                    "transport grid must be strictly increasing".into(),
                ));
            }
            g.clone()
        }
        None => {
            if options.grid_size < 2 {
                return Err(Error::InvalidParameter("transport grid needs 2 nodes".into()));
            }
            let (lo, hi) = unclipped_range(c);
            let n = options.grid_size;
            (0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect()
        }
    };
    let window = density.truncated_slab(&spec());
    let per_node: Vec<Result<(f64, f64, bool)>> = s
        .par_iter()
        .map(|&si| {
            let (mut ql, mut qu) = source_masses(c, norm.alpha, si);
            let clipped = ql < QUANTILE_CLIP * (1.0 - 1e-12) || qu < QUANTILE_CLIP * (1.0 - 1e-12);
            if clipped {
                if ql < qu {
                    ql = QUANTILE_CLIP;
                    qu = 1.0 - QUANTILE_CLIP;
                } else {
                    qu = QUANTILE_CLIP;
                    ql = 1.0 - QUANTILE_CLIP;
                }
            }
            let t = invert_target(density, norm.beta, window, ql, qu)?;
            let d = if clipped { f64::NAN } else { derivative(density, norm, si, t) };
            Ok((t, d, clipped))
        })
        .collect();
    let mut rho = Vec::with_capacity(s.len());
    let mut drho = Vec::with_capacity(s.len());
    let mut clipped = Vec::with_capacity(s.len());
    for r in per_node {
        let (t, d, cl) = r?;
        rho.push(t);
        drho.push(d);
        clipped.push(cl);
    }
    let n_clipped = clipped.iter().filter(|&&c| c).count();
    if n_clipped > 0 {
        warnings.push(format!(
            "{n_clipped} nodes beyond quantile {QUANTILE_CLIP:e} were clipped"
        ));
    }
    // Independent inversions can disagree in the last bits; enforce order.
    for i in 1..rho.len() {
        if rho[i] < rho[i - 1] {
            rho[i] = rho[i - 1];
        }
    }
    Ok(TransportMap {
        s,
        rho,
        drho,
        clipped,
        normalizers: norm,
        warnings,
        density: density.clone(),
    })
}

impl TransportMap {
    pub fn density(&self) -> &Density {
        &self.density
    }

    /// `(ρ(s), ρ'(s))` at an arbitrary source point.
    pub fn eval(&self, s: f64) -> Result<(f64, f64)> {
        let c = self.density.c();
        let (ql, qu) = source_masses(c, self.normalizers.alpha, s);
        if ql < QUANTILE_CLIP || qu < QUANTILE_CLIP {
            return Err(Error::Domain {
                t: s,
                detail: "source quantile beyond the clipping threshold".into(),
            });
        }
        let window = self.density.truncated_slab(&spec());
        let t = invert_target(&self.density, self.normalizers.beta, window, ql, qu)?;
        Ok((t, derivative(&self.density, self.normalizers, s, t)))
    }

    /// `ρ⁻¹(d)` by Newton iteration on the forward map.
    pub fn inverse(&self, d: f64) -> Result<f64> {
        let slab = self.density.slab();
        if d <= slab.lower {
            return Ok(f64::NEG_INFINITY);
        }
        if d >= slab.upper {
            return Ok(f64::INFINITY);
        }
        let (range_lo, range_hi) = unclipped_range(self.density.c());
        let (mut lo, mut hi) = (range_lo, range_hi);
        let idx = self.rho.partition_point(|&r| r < d).min(self.s.len() - 1);
        let mut s = self.s[idx].clamp(lo, hi);
        for _ in 0..100 {
            let (r, dr) = self.eval(s)?;
            let res = r - d;
            if res == 0.0 {
                return Ok(s);
            }
            if res < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let step = res / dr;
            if dr > 0.0 && step.abs() <= 1e-15 * s.abs().max(1.0) {
                return Ok(s - step);
            }
            let next = s - step;
            s = if dr > 0.0 && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo <= 4.0 * f64::EPSILON * s.abs().max(1.0) {
                return Ok(s);
            }
        }
        Ok(s)
    }

    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.s.len()).filter(|&i| !self.clipped[i])
    }

    /// `max |α e^{−cs²} − β e^{ω(ρ) − cρ²} ρ'|` over unclipped nodes.
    pub fn derivative_identity_residual(&self) -> f64 {
        let c = self.density.c();
        let Normalizers { alpha, beta } = self.normalizers;
        self.active()
            .map(|i| {
                let lhs = alpha * (-c * self.s[i] * self.s[i]).exp();
                let rhs = beta * self.density.log_vertical(self.rho[i]).exp() * self.drho[i];
                (lhs - rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest gap between `ρ'` and centered differences of the sampled `ρ`,
    /// relative to `max(1, ρ')`; an independent check of the derivative.
    pub fn finite_difference_gap(&self) -> f64 {
        let n = self.s.len();
        (1..n.saturating_sub(1))
            .filter(|&i| !self.clipped[i - 1] && !self.clipped[i] && !self.clipped[i + 1])
            .map(|i| {
                let w = crate::special::fd_weights(self.s[i], &self.s[i - 1..=i + 1], 1);
                let fd: f64 = (0..3).map(|j| w[1][j] * self.rho[i - 1 + j]).sum();
                (fd - self.drho[i]).abs() / self.drho[i].max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub max_derivative: f64,
    pub argmax: f64,
    pub certified: bool,
}

/// Certifies `ρ' ≤ 1 + 1e−6` at every unclipped node.
pub fn check_contraction(map: &TransportMap) -> ContractionReport {
    let (mut best, mut arg) = (f64::NEG_INFINITY, f64::NAN);
    for i in map.active() {
        if map.drho[i] > best {
            best = map.drho[i];
            arg = map.s[i];
        }
    }
    ContractionReport {
        max_derivative: best,
        argmax: arg,
        certified: best <= 1.0 + 1e-6,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushforwardReport {
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Compares `μ₂(D)` by quadrature with `μ₁(ρ⁻¹(D))` in closed form, for
/// intervals `D = (d₁, d₂)` inside the slab.
pub fn pushforward_check(map: &TransportMap, intervals: &[(f64, f64)]) -> Result<PushforwardReport> {
    let density = &map.density;
    let c = density.c();
    let Normalizers { alpha, beta } = map.normalizers;
    let slab = density.slab();
    let residuals: Result<Vec<f64>> = intervals
        .par_iter()
        .map(|&(d1, d2)| {
            if !(d1 < d2) || d1 < slab.lower || d2 > slab.upper {
                return Err(Error::InvalidParameter(format!(
                    "interval ({d1}, {d2}) is not inside the slab"
                )));
            }
            let target = beta * integrate_weighted(density, |_| 1.0, d1, d2, &spec())?.value;
            let (s1, s2) = (map.inverse(d1)?, map.inverse(d2)?);
            // Difference of whichever tails are smaller, for precision.
            let source = if s2 <= 0.0 {
                alpha * (gaussian_lower_mass(c, s2) - gaussian_lower_mass(c, s1))
            } else {
                alpha * (gaussian_upper_mass(c, s1) - gaussian_upper_mass(c, s2))
            };
            Ok((target - source).abs())
        })
        .collect();
    let residuals = residuals?;
    let max_residual = residuals.iter().copied().fold(0.0, f64::max);
    Ok(PushforwardReport {
        residuals,
        max_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerimeterBound {
    /// `P_f(E)`: weighted length of the curve.
    pub perimeter: f64,
    /// `(α/β) P_γ(T⁻¹(E))`: scaled Gaussian length of the pulled-back curve.
    pub transported: f64,
    pub slack: f64,
}

/// Pulls a planar curve back through `T(x, s) = (x, ρ(s))` and compares
/// weighted lengths.
pub fn transported_perimeter_bound(map: &TransportMap, curve: &DiscreteCurve) -> Result<PerimeterBound> {
    let density = &map.density;
    if density.ambient_dim() != 2 {
        return Err(Error::Unsupported("perimeter bound is planar (n = 1)".into()));
    }
    let slab = density.slab();
    let c = density.c();
    let Normalizers { alpha, beta } = map.normalizers;
    let parts: Result<Vec<(f64, f64)>> = (0..curve.len())
        .into_par_iter()
        .map(|i| {
            let [x, t] = curve.points[i];
            if !slab.contains_closed(t) {
                return Err(Error::Domain {
                    t,
                    detail: "curve leaves the slab".into(),
                });
            }
            let w = curve.weights[i];
            let f = planar_f(density, curve.points[i])?;
            let [tx, tt] = curve.tangent(i);
            let gx = (-c * x * x).exp();
            // Integrand of (α/β)·γ(q)·|dq/dl| with q = (x, ρ⁻¹(t)).
            let pulled = if t <= slab.lower || t >= slab.upper {
                // Limit at the boundary: e^{−cs²}/ρ' → (β/α) e^{ω(t) − ct²}
                // while the horizontal term vanishes.
                gx * density.log_vertical(t).exp() * tt.abs()
            } else {
                let (ml, mu) = target_masses(density, beta, t)?;
                let s = gaussian_quantile(c, ml, mu);
                let ds = derivative(density, map.normalizers, s, t);
                let gauss = (-c * s * s).exp() * gx;
                alpha / beta * gauss * (tx * tx + (tt / ds).powi(2)).sqrt()
            };
            Ok((w * f, w * pulled))
        })
        .collect();
    let (perimeter, transported) = parts?
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (p, q)| (a + p, b + q));
    Ok(PerimeterBound {
        perimeter,
        transported,
        slack: perimeter - transported,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{Slab, Weight1D};

    fn map_for(weight: Weight1D, c: f64, slab: Slab, size: usize) -> TransportMap {
        let d = Density::new(weight, c, 2, slab).unwrap();
        build_transport(
            &d,
            &TransportOptions {
                grid_size: size,
                ..TransportOptions::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn gaussian_map_is_identity() {
        let m = map_for(Weight1D::Zero, 0.5, Slab::whole(), 81);
        for i in 0..m.s.len() {
            assert!((m.rho[i] - m.s[i]).abs() < 1e-10 * m.s[i].abs().max(1.0), "{} {}", m.s[i], m.rho[i]);
            assert!((m.drho[i] - 1.0).abs() < 1e-8);
        }
        assert!(check_contraction(&m).certified);
    }

    #[test]
    fn affine_map_is_translation() {
        let m = map_for(Weight1D::affine(1.0, 0.0), 0.5, Slab::whole(), 81);
        for i in 0..m.s.len() {
            assert!((m.rho[i] - m.s[i] - 1.0).abs() < 1e-9);
            assert!((m.drho[i] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn quadratic_map_is_scaling() {
        let m = map_for(Weight1D::quadratic(1.0, 0.0, 0.0), 0.5, Slab::whole(), 81);
        let k = 1.0 / 3f64.sqrt();
        for i in 0..m.s.len() {
            assert!((m.rho[i] - k * m.s[i]).abs() < 1e-9);
        }
        let rep = check_contraction(&m);
        assert!((rep.max_derivative - k).abs() < 1e-8);
        assert!(m.derivative_identity_residual() <= 1e-8 * m.normalizers.alpha);
        assert!(m.finite_difference_gap() < 1e-6);
    }

    #[test]
    fn log_power_contracts() {
        let m = map_for(Weight1D::log_power(2.0), 0.5, Slab::new(0.0, f64::INFINITY).unwrap(), 101);
        assert!(m.rho.windows(2).all(|w| w[1] >= w[0]));
        assert!(m.rho.iter().all(|&r| r > 0.0));
        assert!(check_contraction(&m).certified);
    }

    #[test]
    fn nonconcave_needs_diagnostic_mode() {
        let d = Density::whole_space(Weight1D::quadratic(-0.3, 0.0, 0.0), 0.5, 2).unwrap();
        assert!(matches!(
            build_transport(&d, &TransportOptions::default()),
            Err(Error::Precondition(_))
        ));
        let m = build_transport(
            &d,
            &TransportOptions {
                grid_size: 41,
                allow_nonconcave: true,
                ..TransportOptions::default()
            },
        )
        .unwrap();
        assert!(!m.warnings.is_empty());
        assert!(!check_contraction(&m).certified);
    }

    #[test]
    fn clipping_is_reported() {
        let d = Density::whole_space(Weight1D::Zero, 0.5, 2).unwrap();
        let m = build_transport(
            &d,
            &TransportOptions {
                grid: Some(vec![-9.0, 0.0, 9.0]),
                ..TransportOptions::default()
            },
        )
        .unwrap();
        assert_eq!(m.clipped, vec![true, false, true]);
        assert!(!m.warnings.is_empty());
        assert!(check_contraction(&m).certified);
    }

    #[test]
    fn pushforward_examples() {
        let m = map_for(Weight1D::Zero, 0.5, Slab::new(-1.0, 1.0).unwrap(), 21);
        let rep = pushforward_check(&m, &[(-1.0, 1.0), (-1.0, 0.0), (0.2, 0.7)]).unwrap();
        assert!(rep.max_residual < 1e-12, "{:?}", rep.residuals);
        let (r0, _) = m.eval(0.0).unwrap();
        assert!(r0.abs() < 1e-12);
    }

    #[test]
    fn perimeter_bound_examples() {
        let slab = Slab::new(0.0, 1.0).unwrap();
        let m = map_for(Weight1D::quadratic(1.0, 0.0, 0.0), 0.5, slab, 21);
        let vertical = DiscreteCurve::segment([0.3, 0.0], [0.3, 1.0], 201, [true, true]).unwrap();
        let b = transported_perimeter_bound(&m, &vertical).unwrap();
        assert!(b.slack.abs() < 1e-8 * b.perimeter);
        let horizontal = DiscreteCurve::segment([-6.0, 0.5], [6.0, 0.5], 401, [false, false]).unwrap();
        let b = transported_perimeter_bound(&m, &horizontal).unwrap();
        assert!(b.slack > 1e-3);
        let g = map_for(Weight1D::Zero, 0.5, Slab::whole(), 21);
        let curve = DiscreteCurve::from_points(
            (0..200).map(|i| {
                let a = i as f64 * 0.02;
                [a.cos() + 0.1 * a, a.sin()]
            }).collect(),
            false,
            [false, false],
        )
        .unwrap();
        let b = transported_perimeter_bound(&g, &curve).unwrap();
        assert!(b.slack.abs() < 1e-10);
        let outside = DiscreteCurve::segment([0.0, 0.5], [0.0, 1.5], 11, [false, false]).unwrap();
        assert!(matches!(
            transported_perimeter_bound(&m, &outside),
            Err(Error::Domain { .. })
        ));
    }
}
