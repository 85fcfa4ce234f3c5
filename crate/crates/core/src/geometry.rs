//! Curves in the weighted plane `Ω ⊆ ℝ²` with coordinates `(x, t)`: f-mean
//! curvature, constant-curvature shooting, the f-Jacobi operator and the
//! second-variation index forms.
//!
//! Orientation: a curve traversed with unit tangent `T = (cos θ, sin θ)`
//! carries the left normal `N = (−sin θ, cos θ)` and curvature
//! `k = ⟨dT/ds, N⟩ = θ'`.

use crate::error::{Error, Result};
use crate::special::fd_weights;
use crate::weights::{gaussian_factor, Density};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    pub points: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    pub curvature: Vec<f64>,
    /// Cumulative arclength at each node.
    pub arc: Vec<f64>,
    /// Trapezoidal arclength weights.
    pub weights: Vec<f64>,
    pub closed: bool,
    /// Whether the first/last node lies on `∂Ω` (or is a truncation point).
    pub boundary: [bool; 2],
}

fn arc_and_weights(points: &[[f64; 2]], closed: bool) -> (Vec<f64>, Vec<f64>, f64) {
    let n = points.len();
    let dist = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let mut arc = vec![0.0; n];
    for i in 1..n {
        arc[i] = arc[i - 1] + dist(points[i - 1], points[i]);
    }
    let total = if closed {
        arc[n - 1] + dist(points[n - 1], points[0])
    } else {
        arc[n - 1]
    };
    let mut w = vec![0.0; n];
    for i in 0..n {
        let left = if i > 0 {
            arc[i] - arc[i - 1]
        } else if closed {
            total - arc[n - 1]
        } else {
            0.0
        };
        let right = if i + 1 < n {
            arc[i + 1] - arc[i]
        } else if closed {
            total - arc[n - 1]
        } else {
            0.0
        };
        w[i] = 0.5 * (left + right);
    }
    (arc, w, total)
}

impl DiscreteCurve {
    /// Curve through sampled points; normals and curvature come from
    /// second-order differences in arclength.
    pub fn from_points(points: Vec<[f64; 2]>, closed: bool, boundary: [bool; 2]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Geometry("a curve needs at least 4 nodes".into()));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Geometry("non-finite curve node".into()));
        }
        let (arc, weights, total) = arc_and_weights(&points, closed);
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Geometry("repeated consecutive nodes".into()));
        }
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ts: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let (dx, ddx) = arc_derivatives(&arc, total, closed, &xs);
        let (dt, ddt) = arc_derivatives(&arc, total, closed, &ts);
        let mut normals = Vec::with_capacity(points.len());
        let mut curvature = Vec::with_capacity(points.len());
        for i in 0..points.len() {
            let speed = dx[i].hypot(dt[i]);
            let (tx, tt) = (dx[i] / speed, dt[i] / speed);
            normals.push([-tt, tx]);
            curvature.push((dx[i] * ddt[i] - dt[i] * ddx[i]) / speed.powi(3));
        }
        let boundary = if closed { [false, false] } else { boundary };
        Ok(Self {
            points,
            normals,
            curvature,
            arc,
            weights,
            closed,
            boundary,
        })
    }

    /// Straight segment from `p0` to `p1` sampled at `nodes` equispaced points.
    pub fn segment(p0: [f64; 2], p1: [f64; 2], nodes: usize, boundary: [bool; 2]) -> Result<Self> {
        if nodes < 4 {
            return Err(Error::Geometry("a curve needs at least 4 nodes".into()));
        }
        let len = (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
        if len == 0.0 || !len.is_finite() {
            return Err(Error::Geometry("degenerate segment".into()));
        }
        let tangent = [(p1[0] - p0[0]) / len, (p1[1] - p0[1]) / len];
        let points: Vec<[f64; 2]> = (0..nodes)
            .map(|i| {
                let a = i as f64 / (nodes - 1) as f64;
                [p0[0] + a * (p1[0] - p0[0]), p0[1] + a * (p1[1] - p0[1])]
            })
            .collect();
        let (arc, weights, _) = arc_and_weights(&points, false);
        Ok(Self {
            points,
            normals: vec![[-tangent[1], tangent[0]]; nodes],
            curvature: vec![0.0; nodes],
            arc,
            weights,
            closed: false,
            boundary,
        })
    }

    /// Same curve with the opposite normal.
    pub fn flipped(&self) -> Self {
        let mut c = self.clone();
        for n in &mut c.normals {
            *n = [-n[0], -n[1]];
        }
        for k in &mut c.curvature {
            *k = -*k;
        }
        c
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn total_arc(&self) -> f64 {
        self.length()
    }

    pub fn tangent(&self, i: usize) -> [f64; 2] {
        let n = self.normals[i];
        [n[1], -n[0]]
    }

    /// Quadrature weights for `da_f`: trapezoidal arclength times `f`.
    pub fn f_weights(&self, density: &Density) -> Result<Vec<f64>> {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| Ok(w * planar_f(density, *p)?))
            .collect()
    }

    /// Weighted length `∫ f dl`.
    pub fn weighted_length(&self, density: &Density) -> Result<f64> {
        Ok(self.f_weights(density)?.iter().sum())
    }

    /// First and second arclength derivatives of node samples.
    pub fn derivatives(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        arc_derivatives(&self.arc, self.total_arc(), self.closed, values)
    }

    fn subsampled(&self) -> Option<Self> {
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).step_by(2).collect();
        if !self.closed && *idx.last()? != n - 1 {
            idx.push(n - 1);
        }
        if idx.len() < 4 {
            return None;
        }
        let points: Vec<[f64; 2]> = idx.iter().map(|&i| self.points[i]).collect();
        let (arc, weights, _) = arc_and_weights(&points, self.closed);
        Some(Self {
            points,
            normals: idx.iter().map(|&i| self.normals[i]).collect(),
            curvature: idx.iter().map(|&i| self.curvature[i]).collect(),
            arc,
            weights,
            closed: self.closed,
            boundary: self.boundary,
        })
    }

    fn check_inside(&self, density: &Density) -> Result<()> {
        let slab = density.slab();
        for p in &self.points {
            if !slab.contains_closed(p[1]) {
                return Err(Error::Domain {
                    t: p[1],
                    detail: "curve leaves the slab".into(),
                });
            }
        }
        Ok(())
    }
}

/// Embeds a point of the `(x, t)` plane into the ambient space.
pub(crate) fn embed(density: &Density, p: [f64; 2]) -> Vec<f64> {
    let mut q = vec![0.0; density.ambient_dim().max(2)];
    q[0] = p[0];
    let last = q.len() - 1;
    q[last] = p[1];
    q
}

pub(crate) fn planar_f(density: &Density, p: [f64; 2]) -> Result<f64> {
    density.f_closed(&embed(density, p))
}

pub(crate) fn planar_grad_psi(density: &Density, p: [f64; 2]) -> Result<[f64; 2]> {
    let g = density.grad_psi(&embed(density, p))?;
    Ok([g[0], g[g.len() - 1]])
}

pub(crate) fn planar_ric_f(density: &Density, p: [f64; 2], w: [f64; 2]) -> Result<f64> {
    density.ric_f(&embed(density, p), &embed(density, w))
}

fn arc_derivatives(arc: &[f64], total: f64, closed: bool, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = arc.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        let (nodes, idx): (Vec<f64>, Vec<usize>) = if closed || (i > 0 && i + 1 < n) {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            let sp = if i == 0 { arc[prev] - total } else { arc[prev] };
            let sn = if i + 1 == n { arc[next] + total } else { arc[next] };
            (vec![sp, arc[i], sn], vec![prev, i, next])
        } else if i == 0 {
            ((0..4).map(|j| arc[j]).collect(), (0..4).collect())
        } else {
            ((n - 4..n).map(|j| arc[j]).collect(), (n - 4..n).collect())
        };
        let w = fd_weights(arc[i], &nodes, 2);
        if nodes.len() == 3 {
            d1[i] = (0..3).map(|j| w[1][j] * values[idx[j]]).sum();
            d2[i] = (0..3).map(|j| w[2][j] * values[idx[j]]).sum();
        } else {
            // Second-order one-sided stencils: three points for d1, four for d2.
            let (near, w1) = if i == 0 {
                (&nodes[..3], &idx[..3])
            } else {
                (&nodes[1..], &idx[1..])
            };
            let w3 = fd_weights(arc[i], near, 1);
            d1[i] = (0..3).map(|j| w3[1][j] * values[w1[j]]).sum();
            d2[i] = (0..4).map(|j| w[2][j] * values[idx[j]]).sum();
        }
    }
    (d1, d2)
}

fn dot(a: [f64; 2], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `H_f = k − ⟨∇ψ, N⟩` at node `i`.
pub fn f_mean_curvature(density: &Density, curve: &DiscreteCurve, i: usize) -> Result<f64> {
    let g = planar_grad_psi(density, curve.points[i])?;
    Ok(curve.curvature[i] - dot(curve.normals[i], &g))
}

/// `H_f` at every node.
pub fn f_mean_curvatures(density: &Density, curve: &DiscreteCurve) -> Result<Vec<f64>> {
    (0..curve.len()).map(|i| f_mean_curvature(density, curve, i)).collect()
}

/// Integrates the constant-`H_f` curve equation `θ' = H + ⟨∇ψ, N(θ)⟩` with
/// classical RK4 at fixed arclength step.
pub fn cmc_shoot(
    density: &Density,
    target: f64,
    start: [f64; 2],
    angle: f64,
    step: f64,
    max_length: f64,
) -> Result<DiscreteCurve> {
    if !(step > 0.0 && max_length >= 3.0 * step && max_length.is_finite()) {
        return Err(Error::InvalidParameter(
            "need a positive step and at least three steps".into(),
        ));
    }
    let slab = density.slab();
    if !slab.contains_open(start[1]) {
        return Err(Error::Domain {
            t: start[1],
            detail: "shooting must start inside the slab".into(),
        });
    }
    let rhs = |y: [f64; 3]| -> Option<[f64; 3]> {
        if !slab.contains_closed(y[1]) {
            return None;
        }
        let g = planar_grad_psi(density, [y[0], y[1]]).ok()?;
        let (s, c) = y[2].sin_cos();
        Some([c, s, target - s * g[0] + c * g[1]])
    };
    let steps = (max_length / step).round() as usize;
    let mut state = [start[0], start[1], angle];
    let mut points = vec![start];
    let mut thetas = vec![angle];
    let mut curvature = vec![rhs(state).ok_or(Error::Domain {
        t: start[1],
        detail: "start point".into(),
    })?[2]];
    let mut hit_boundary = false;
    let add = |y: [f64; 3], k: [f64; 3], a: f64| [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2]];
    for _ in 0..steps {
        let next = (|| {
            let k1 = rhs(state)?;
            let k2 = rhs(add(state, k1, 0.5 * step))?;
            let k3 = rhs(add(state, k2, 0.5 * step))?;
            let k4 = rhs(add(state, k3, step))?;
            let mut y = state;
            for j in 0..3 {
                y[j] += step / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            let k = rhs(y)?[2];
            Some((y, k))
        })();
        match next {
            Some((y, k)) => {
                state = y;
                points.push([y[0], y[1]]);
                thetas.push(y[2]);
                curvature.push(k);
            }
            None => {
                hit_boundary = true;
                break;
            }
        }
    }
    if points.len() < 4 {
        return Err(Error::Geometry(
            "shot curve left the slab before four nodes".into(),
        ));
    }
    let (arc, weights, _) = arc_and_weights(&points, false);
    Ok(DiscreteCurve {
        normals: thetas.iter().map(|th| [-th.sin(), th.cos()]).collect(),
        points,
        curvature,
        arc,
        weights,
        closed: false,
        boundary: [false, hit_boundary],
    })
}

fn horizontal_component(eta: &[f64]) -> Result<f64> {
    let norm: f64 = eta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(eta.len() == 2 || eta.len() == 3) || (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(
            "η must be a unit vector in the plane (x, t) or in (x, y, t)".into(),
        ));
    }
    if eta[eta.len() - 1] != 0.0 {
        return Err(Error::InvalidParameter("η must be horizontal".into()));
    }
    Ok(eta[0])
}

/// `Ric_f(N, N) + k²` at every node.
fn potential(density: &Density, curve: &DiscreteCurve) -> Result<Vec<f64>> {
    (0..curve.len())
        .map(|i| {
            let ric = planar_ric_f(density, curve.points[i], curve.normals[i])?;
            Ok(ric + curve.curvature[i] * curve.curvature[i])
        })
        .collect()
}

/// `⟨∇ψ, T⟩` at every node.
fn tangential_drift(density: &Density, curve: &DiscreteCurve) -> Result<Vec<f64>> {
    (0..curve.len())
        .map(|i| Ok(dot(curve.tangent(i), &planar_grad_psi(density, curve.points[i])?)))
        .collect()
}

/// Discrete `L_f u = u'' + ⟨∇ψ, T⟩u' + (Ric_f(N,N) + k²)u`.
pub fn jacobi_operator(density: &Density, curve: &DiscreteCurve, u: &[f64]) -> Result<Vec<f64>> {
    check_samples(curve, u)?;
    let (d1, d2) = curve.derivatives(u);
    let drift = tangential_drift(density, curve)?;
    let pot = potential(density, curve)?;
    Ok((0..u.len())
        .map(|i| d2[i] + drift[i] * d1[i] + pot[i] * u[i])
        .collect())
}

/// Maximum over interior nodes of `|L_f h − 2c h|` for `h = ⟨η, N⟩`.
pub fn jacobi_residual(density: &Density, curve: &DiscreteCurve, eta: &[f64]) -> Result<f64> {
    let ex = horizontal_component(eta)?;
    let hf = f_mean_curvatures(density, curve)?;
    let mean = hf.iter().sum::<f64>() / hf.len() as f64;
    let spread = hf.iter().fold(0.0f64, |m, h| m.max((h - mean).abs()));
    if spread > 1e-6 * (1.0 + mean.abs()) {
        return Err(Error::Precondition(format!(
            "curve does not have constant f-mean curvature (spread {spread})"
        )));
    }
    let h: Vec<f64> = curve.normals.iter().map(|n| ex * n[0]).collect();
    let lh = jacobi_operator(density, curve, &h)?;
    let c = density.c();
    let range = if curve.closed { 0..curve.len() } else { 1..curve.len() - 1 };
    Ok(range.map(|i| (lh[i] - 2.0 * c * h[i]).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexFormReport {
    pub value: f64,
    /// `|I_h − I_{2h}| / 3`.
    pub error_estimate: f64,
    /// Always zero for slab boundaries, which are totally geodesic.
    pub boundary_term: f64,
}

fn check_samples(curve: &DiscreteCurve, u: &[f64]) -> Result<()> {
    if u.len() != curve.len() {
        return Err(Error::InvalidParameter(format!(
            "{} samples for a curve with {} nodes",
            u.len(),
            curve.len()
        )));
    }
    Ok(())
}

fn index_value(density: &Density, curve: &DiscreteCurve, u: &[f64], v: &[f64]) -> Result<f64> {
    let (du, _) = curve.derivatives(u);
    let (dv, _) = curve.derivatives(v);
    let pot = potential(density, curve)?;
    let fw = curve.f_weights(density)?;
    Ok((0..u.len())
        .map(|i| fw[i] * (du[i] * dv[i] - pot[i] * u[i] * v[i]))
        .sum())
}

fn every_other(curve: &DiscreteCurve, u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut out: Vec<f64> = u.iter().step_by(2).copied().collect();
    if !curve.closed && (n - 1) % 2 == 1 {
        out.push(u[n - 1]);
    }
    out
}

/// `I_f(u, v) = ∫ {u'v' − (Ric_f(N,N) + k²)uv} da_f`.
pub fn index_form(density: &Density, curve: &DiscreteCurve, u: &[f64], v: &[f64]) -> Result<IndexFormReport> {
    check_samples(curve, u)?;
    check_samples(curve, v)?;
    curve.check_inside(density)?;
    let value = index_value(density, curve, u, v)?;
    let error_estimate = match curve.subsampled() {
        Some(coarse) => {
            let coarse_value =
                index_value(density, &coarse, &every_other(curve, u), &every_other(curve, v))?;
            (value - coarse_value).abs() / 3.0
        }
        None => f64::NAN,
    };
    Ok(IndexFormReport {
        value,
        error_estimate,
        boundary_term: 0.0,
    })
}

fn q_value(density: &Density, curve: &DiscreteCurve, u: &[f64]) -> Result<f64> {
    let lu = jacobi_operator(density, curve, u)?;
    let fw = curve.f_weights(density)?;
    let interior: f64 = -(0..u.len()).map(|i| fw[i] * u[i] * lu[i]).sum::<f64>();
    if curve.closed {
        return Ok(interior);
    }
    // Inner conormal is +T at the start and −T at the end.
    let (du, _) = curve.derivatives(u);
    let n = u.len() - 1;
    let f0 = planar_f(density, curve.points[0])?;
    let f1 = planar_f(density, curve.points[n])?;
    Ok(interior - (u[0] * du[0] * f0 - u[n] * du[n] * f1))
}

/// `Q_f(u, u) = −∫ u L_f u da_f − ∫_{∂Σ} u ∂u/∂ν dl_f`.
pub fn q_form(density: &Density, curve: &DiscreteCurve, u: &[f64]) -> Result<IndexFormReport> {
    check_samples(curve, u)?;
    curve.check_inside(density)?;
    let value = q_value(density, curve, u)?;
    let error_estimate = match curve.subsampled() {
        Some(coarse) => (value - q_value(density, &coarse, &every_other(curve, u))?).abs() / 3.0,
        None => f64::NAN,
    };
    Ok(IndexFormReport {
        value,
        error_estimate,
        boundary_term: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub u: Vec<f64>,
    pub alpha: f64,
    /// `⟨η, N⟩` vanishes identically; `u` is then `h` itself.
    pub degenerate: bool,
}

/// `u = α + ⟨η, N⟩` with `α` chosen so that `∫ u da_f = 0`.
pub fn translation_test_function(density: &Density, curve: &DiscreteCurve, eta: &[f64]) -> Result<TestFunction> {
    let ex = horizontal_component(eta)?;
    let h: Vec<f64> = curve.normals.iter().map(|n| ex * n[0]).collect();
    if h.iter().all(|v| v.abs() <= 1e-14) {
        return Ok(TestFunction {
            u: h,
            alpha: 0.0,
            degenerate: true,
        });
    }
    let fw = curve.f_weights(density)?;
    let area: f64 = fw.iter().sum();
    if !(area > 0.0) {
        return Err(Error::Degenerate("curve has zero weighted length".into()));
    }
    let alpha = -fw.iter().zip(&h).map(|(w, h)| w * h).sum::<f64>() / area;
    Ok(TestFunction {
        u: h.iter().map(|h| alpha + h).collect(),
        alpha,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub second_derivative: f64,
    /// `I_f(x, x)` on the level hyperplane from the closed form.
    pub witness: f64,
    /// Same quantity from the discrete index form on a sampled line.
    pub witness_numeric: f64,
    pub witness_error: f64,
}

/// Stability of `{t ≤ t0}`: stable iff `ω''(t0) ≥ 0`.
pub fn parallel_halfspace_stability(density: &Density, t0: f64) -> Result<StabilityVerdict> {
    let slab = density.slab();
    if !slab.contains_open(t0) {
        return Err(Error::Domain {
            t: t0,
            detail: "level must be inside the slab".into(),
        });
    }
    let d2 = density.weight().second_derivative(t0)?;
    let c = density.c();
    let level = (density.log_vertical(t0)).exp();
    let cross = gaussian_factor(density.horizontal_dim().saturating_sub(1), c);
    let witness = d2 * level * cross * (std::f64::consts::PI / c).sqrt() / (2.0 * c);

    // I_f(x, x) = ∫ f (1 − (Ric_f(N,N)) x²) over the horizontal line.
    let half = (80.0 / c).sqrt();
    let line = DiscreteCurve::segment([-half, t0], [half, t0], 8001, [false, false])?;
    let u: Vec<f64> = line.points.iter().map(|p| p[0]).collect();
    let report = index_form(density, &line, &u, &u)?;
    Ok(StabilityVerdict {
        stable: d2 >= 0.0,
        second_derivative: d2,
        witness,
        witness_numeric: report.value * cross,
        witness_error: report.error_estimate * cross,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{Slab, Weight1D};
    use std::f64::consts::PI;

    fn gauss() -> Density {
        Density::whole_space(Weight1D::Zero, 0.5, 2).unwrap()
    }

    #[test]
    fn f_mean_curvature_examples() {
        let d = Density::whole_space(Weight1D::quadratic(0.7, 0.3, 0.0), 0.5, 2).unwrap();
        let vertical = DiscreteCurve::segment([1.0, -2.0], [1.0, 2.0], 21, [false, false]).unwrap();
        assert_eq!(vertical.normals[0], [-1.0, 0.0]);
        for h in f_mean_curvatures(&d, &vertical).unwrap() {
            assert!((h + 1.0).abs() < 1e-14);
        }
        let t0 = 0.4;
        let horizontal = DiscreteCurve::segment([-2.0, t0], [2.0, t0], 21, [false, false]).unwrap();
        let expected = -(-1.4 * t0 + 0.3) + t0;
        for h in f_mean_curvatures(&d, &horizontal).unwrap() {
            assert!((h - expected).abs() < 1e-14);
        }
        let diag = DiscreteCurve::segment([-1.0, -2.0], [1.0, 2.0], 21, [false, false]).unwrap();
        for h in f_mean_curvatures(&gauss(), &diag).unwrap() {
            assert!(h.abs() < 1e-14);
        }
    }

    #[test]
    fn tilted_line_classification() {
        let d = Density::whole_space(Weight1D::quadratic(1.0, 0.0, 0.0), 0.5, 2).unwrap();
        let r = 0.5f64.sqrt();
        let line = DiscreteCurve::segment([-r, -r], [r, r], 41, [false, false]).unwrap();
        let h = f_mean_curvatures(&d, &line).unwrap();
        let spread = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - h.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread > 0.01);
        let affine = Density::whole_space(Weight1D::affine(2.0, 0.0), 0.5, 2).unwrap();
        let h = f_mean_curvatures(&affine, &line).unwrap();
        assert!(h.iter().all(|v| (v - h[0]).abs() < 1e-10));
    }

    #[test]
    fn shooting_lines() {
        let line = cmc_shoot(&gauss(), 0.0, [0.0, 0.0], 0.7, 1e-3, 2.0).unwrap();
        for p in &line.points {
            let dev = p[0] * 0.7f64.sin() - p[1] * 0.7f64.cos();
            assert!(dev.abs() < 1e-10);
        }
        let vertical = cmc_shoot(&gauss(), -1.0, [1.0, 0.0], PI / 2.0, 1e-3, 2.0).unwrap();
        for p in &vertical.points {
            assert!((p[0] - 1.0).abs() < 1e-10);
        }
        let affine = Density::whole_space(Weight1D::affine(1.0, 0.0), 0.5, 2).unwrap();
        // The tilted line through (0, 1) at 30° has constant H_f.
        let th = PI / 6.0;
        let start = [0.0, 1.0];
        let n = [-th.sin(), th.cos()];
        let g = planar_grad_psi(&affine, start).unwrap();
        let target = -(n[0] * g[0] + n[1] * g[1]);
        let shot = cmc_shoot(&affine, target, start, th, 1e-3, 1.0).unwrap();
        for p in &shot.points {
            let dev = (p[0] - start[0]) * th.sin() - (p[1] - start[1]) * th.cos();
            assert!(dev.abs() < 1e-10);
        }
    }

    #[test]
    fn shooting_stops_at_the_boundary() {
        let d = Density::new(Weight1D::Zero, 0.5, 2, Slab::new(-1.0, 1.0).unwrap()).unwrap();
        let c = cmc_shoot(&d, 0.0, [0.0, 0.0], PI / 2.0, 1e-2, 5.0).unwrap();
        assert!(c.boundary[1]);
        assert!(c.points.iter().all(|p| p[1] <= 1.0));
    }

    #[test]
    fn jacobi_on_lines() {
        let d = Density::whole_space(Weight1D::quadratic(1.0, 0.0, 0.0), 0.5, 2).unwrap();
        let vertical = DiscreteCurve::segment([0.3, -2.0], [0.3, 2.0], 41, [false, false]).unwrap();
        assert!(jacobi_residual(&d, &vertical, &[1.0, 0.0]).unwrap() < 1e-13);
        let affine = Density::whole_space(Weight1D::affine(1.0, 0.0), 0.5, 2).unwrap();
        let line = DiscreteCurve::segment([0.0, 1.0], [2.0, 2.0], 41, [false, false]).unwrap();
        assert!(jacobi_residual(&affine, &line, &[1.0, 0.0]).unwrap() < 1e-13);
        let curved = DiscreteCurve::from_points(
            (0..50).map(|i| [i as f64 * 0.1, (i as f64 * 0.1).sin()]).collect(),
            false,
            [false, false],
        )
        .unwrap();
        assert!(matches!(
            jacobi_residual(&gauss(), &curved, &[1.0, 0.0]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn jacobi_converges_on_shot_curves() {
        let mut prev = None;
        for &h in &[4e-3, 2e-3, 1e-3] {
            let curve = cmc_shoot(&gauss(), -1.0, [0.5, 0.0], PI / 2.0, h, 1.5).unwrap();
            let r = jacobi_residual(&gauss(), &curve, &[1.0, 0.0]).unwrap();
            if let Some(p) = prev {
                assert!(p / r >= 3.5, "ratio {}", p / r);
            }
            prev = Some(r);
        }
    }

    #[test]
    fn index_form_witness() {
        let d = Density::whole_space(Weight1D::quadratic(1.0, 0.0, 0.0), 0.5, 2).unwrap();
        let v = parallel_halfspace_stability(&d, 0.0).unwrap();
        assert!(!v.stable);
        let oracle = -2.0 * (2.0 * PI).sqrt();
        assert!((v.witness - oracle).abs() < 1e-14);
        assert!((v.witness_numeric - oracle).abs() < 1e-8);
        let flat = parallel_halfspace_stability(&gauss(), 0.5).unwrap();
        assert!(flat.stable);
        assert!(flat.witness_numeric.abs() < 1e-8);
    }

    #[test]
    fn zero_and_constant_functions() {
        let line = DiscreteCurve::segment([0.0, -3.0], [0.0, 3.0], 101, [false, false]).unwrap();
        let zero = vec![0.0; 101];
        assert_eq!(index_form(&gauss(), &line, &zero, &zero).unwrap().value, 0.0);
        let n = 400;
        let circle: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                [0.3 + a.cos(), 0.2 + a.sin()]
            })
            .collect();
        let curve = DiscreteCurve::from_points(circle, true, [false, false]).unwrap();
        assert!(curve.curvature.iter().all(|k| (k - 1.0).abs() < 1e-4));
        let ones = vec![1.0; n];
        let q = q_form(&gauss(), &curve, &ones).unwrap();
        let fw = curve.f_weights(&gauss()).unwrap();
        let expected: f64 = -fw.iter().zip(&curve.curvature).map(|(w, k)| w * (1.0 + k * k)).sum::<f64>();
        assert!(q.value < 0.0);
        assert!((q.value - expected).abs() < 1e-10);
    }

    #[test]
    fn q_form_matches_index_form_for_bumps() {
        let d = Density::whole_space(Weight1D::quadratic(0.5, 0.1, 0.0), 0.5, 2).unwrap();
        let line = DiscreteCurve::segment([-1.0, -2.0], [1.0, 2.0], 4473, [false, false]).unwrap();
        let u: Vec<f64> = line
            .arc
            .iter()
            .map(|s| {
                let z = (s - 2.236) / 1.5;
                if z.abs() < 1.0 {
                    (-1.0 / (1.0 - z * z)).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let i = index_form(&d, &line, &u, &u).unwrap().value;
        let q = q_form(&d, &line, &u).unwrap().value;
        assert!((i - q).abs() < 1e-4, "{i} {q}");
    }

    #[test]
    fn translation_test_functions() {
        let d = Density::new(Weight1D::Zero, 0.5, 3, Slab::new(-1.0, 1.0).unwrap()).unwrap();
        let line = DiscreteCurve::segment([0.2, -1.0], [0.2, 1.0], 101, [true, true]).unwrap();
        let tf = translation_test_function(&d, &line, &[1.0, 0.0, 0.0]).unwrap();
        assert!(!tf.degenerate);
        assert!((tf.alpha - 1.0).abs() < 1e-15);
        assert!(tf.u.iter().all(|u| u.abs() < 1e-15));
        let tf = translation_test_function(&d, &line, &[0.0, 1.0, 0.0]).unwrap();
        assert!(tf.degenerate);
        let shot = cmc_shoot(&gauss(), 0.0, [0.5, 0.0], 1.2, 1e-3, 2.0).unwrap();
        let tf = translation_test_function(&gauss(), &shot, &[1.0, 0.0]).unwrap();
        let fw = shot.f_weights(&gauss()).unwrap();
        let total: f64 = fw.iter().sum();
        let mean: f64 = fw.iter().zip(&tf.u).map(|(w, u)| w * u).sum();
        assert!(mean.abs() <= 1e-10 * total);
        assert!(translation_test_function(&gauss(), &shot, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn smoothness_is_required() {
        let pl = crate::weights::PiecewiseLinear::from_slopes(vec![-1.0, 0.0, 1.0], 0.0, &[1.0, -1.0]).unwrap();
        let d = Density::new(Weight1D::PiecewiseLinear(pl), 0.5, 2, Slab::new(-1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(
            parallel_halfspace_stability(&d, 0.5),
            Err(Error::Smoothness(_))
        ));
    }
}
