//! Weighted Neumann eigenproblem `−(e^ℓ u')' = λ e^ℓ u` on an interval,
//! `ℓ = ω − ct²`, discretized by cell-centered finite volumes.

use crate::error::{Error, Result};
use crate::weights::{Density, QuadratureSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProblem {
    pub interval: (f64, f64),
    /// Cell centers.
    pub nodes: Vec<f64>,
    /// Mass weights `e^{ℓ(t_i)} Δ`, scaled by a common factor.
    pub weights: Vec<f64>,
    /// Face conductances `e^{ℓ(face)} / Δ` between consecutive cells.
    pub conductance: Vec<f64>,
}

pub const MIN_NODES: usize = 16;

impl SpectralProblem {
    pub fn new(density: &Density, interval: (f64, f64), n: usize) -> Result<Self> {
        let (lo, hi) = interval;
        if n < MIN_NODES {
            return Err(Error::InvalidParameter(format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!("bad interval ({lo}, {hi})")));
        }
        let slab = density.slab();
        if lo < slab.lower || hi > slab.upper {
            return Err(Error::Domain {
                t: if lo < slab.lower { lo } else { hi },
                detail: "interval leaves the slab".into(),
            });
        }
        let h = (hi - lo) / n as f64;
        let nodes: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
        let log_w: Vec<f64> = nodes.iter().map(|&t| density.log_vertical(t)).collect();
        let log_e: Vec<f64> = (1..n).map(|i| density.log_vertical(lo + i as f64 * h)).collect();
        let shift = log_w
            .iter()
            .chain(&log_e)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_w.iter().map(|l| (l - shift).exp() * h).collect();
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Eigen(
                "mass weight underflows; shorten the truncation interval".into(),
            ));
        }
        let conductance = log_e.iter().map(|l| (l - shift).exp() / h).collect();
        Ok(Self {
            interval,
            nodes,
            weights,
            conductance,
        })
    }

    /// Problem on the slab, with infinite ends cut by the tail rule.
    pub fn from_density(density: &Density, n: usize) -> Result<Self> {
        Self::new(density, density.truncated_slab(&QuadratureSpec::default()), n)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Diagonal and off-diagonal of `M^{−1/2} K M^{−1/2}`.
    fn symmetric(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut diag = vec![0.0; n];
        for (i, &k) in self.conductance.iter().enumerate() {
            diag[i] += k;
            diag[i + 1] += k;
        }
        for (d, w) in diag.iter_mut().zip(&self.weights) {
            *d /= w;
        }
        let off = self
            .conductance
            .iter()
            .enumerate()
            .map(|(i, k)| -k / (self.weights[i] * self.weights[i + 1]).sqrt())
            .collect();
        (diag, off)
    }

    fn dirichlet(&self, u: &[f64]) -> f64 {
        self.conductance
            .iter()
            .enumerate()
            .map(|(i, k)| k * (u[i + 1] - u[i]).powi(2))
            .sum()
    }

    fn mean_zero(&self, u: &[f64]) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        let mean = self.weights.iter().zip(u).map(|(w, u)| w * u).sum::<f64>() / total;
        u.iter().map(|u| u - mean).collect()
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let denom = if q == 0.0 { f64::EPSILON * (off[i - 1].abs() + f64::MIN_POSITIVE) } else { q };
        q = diag[i] - x - off[i - 1] * off[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (0-based) by Sturm bisection.
fn kth_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> f64 {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `(T − σI) x = b` for tridiagonal `T` by LU with partial pivoting.
fn tridiagonal_solve(diag: &[f64], off: &[f64], sigma: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    // Row i of U holds up to three entries after pivoting: u0, u1, u2.
    let mut u0 = vec![0.0; n];
    let mut u1 = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut rhs = b.to_vec();
    let mut a = diag[0] - sigma;
    let mut c = if n > 1 { off[0] } else { 0.0 };
    let mut d = 0.0;
    for i in 0..n {
        if i + 1 == n {
            u0[i] = if a == 0.0 { f64::EPSILON } else { a };
            break;
        }
        let below = off[i];
        let next_diag = diag[i + 1] - sigma;
        let next_off = if i + 2 < n { off[i + 1] } else { 0.0 };
        if a.abs() >= below.abs() {
            let pivot = if a == 0.0 { f64::EPSILON } else { a };
            let m = below / pivot;
            u0[i] = pivot;
            u1[i] = c;
            u2[i] = d;
            rhs[i + 1] -= m * rhs[i];
            a = next_diag - m * c;
            c = next_off;
            d = 0.0;
        } else {
            let m = a / below;
            u0[i] = below;
            u1[i] = next_diag;
            u2[i] = next_off;
            rhs.swap(i, i + 1);
            rhs[i + 1] -= m * rhs[i];
            a = c - m * next_diag;
            c = d - m * next_off;
            d = 0.0;
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        if i + 1 < n {
            s -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= u2[i] * x[i + 2];
        }
        x[i] = s / u0[i];
    }
    x
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGap {
    pub lambda: f64,
    /// Mean-zero, `Σ w u² = 1`.
    pub eigenvector: Vec<f64>,
    /// `‖S y − λ y‖` for the symmetric-form eigenvector `y`.
    pub residual: f64,
}

fn eigenpair(problem: &SpectralProblem, k: usize) -> Result<SpectralGap> {
    let (diag, off) = problem.symmetric();
    let lambda = kth_eigenvalue(&diag, &off, k);
    if !lambda.is_finite() {
        return Err(Error::Eigen(format!("eigenvalue {k} is not finite")));
    }
    let n = problem.len();
    let root: Vec<f64> = problem.weights.iter().map(|w| w.sqrt()).collect();
    let mut constant = root.clone();
    normalize(&mut constant);
    let deflate = |y: &mut Vec<f64>| {
        let p: f64 = y.iter().zip(&constant).map(|(a, b)| a * b).sum();
        for (a, b) in y.iter_mut().zip(&constant) {
            *a -= p * b;
        }
    };
    let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1.0);
    let sigma = lambda + 1e-13 * scale;
    let mut y: Vec<f64> = (0..n).map(|i| ((i as f64 + 0.5) * 0.7548776662).sin()).collect();
    deflate(&mut y);
    normalize(&mut y);
    let apply = |y: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut s = diag[i] * y[i];
                if i > 0 {
                    s += off[i - 1] * y[i - 1];
                }
                if i + 1 < n {
                    s += off[i] * y[i + 1];
                }
                s
            })
            .collect()
    };
    let mut residual = f64::INFINITY;
    for _ in 0..8 {
        let mut z = tridiagonal_solve(&diag, &off, sigma, &y);
        if k > 0 {
            deflate(&mut z);
        }
        if normalize(&mut z) == 0.0 || z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigen(format!(
                "inverse iteration broke down near λ = {lambda} (diag scale {scale})"
            )));
        }
        y = z;
        let sy = apply(&y);
        residual = sy
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= 1e-12 * scale {
            break;
        }
    }
    if residual > 1e-8 * scale {
        return Err(Error::Eigen(format!(
            "inverse iteration residual {residual} at λ = {lambda}, diag scale {scale}"
        )));
    }
    let mut u: Vec<f64> = y.iter().zip(&root).map(|(y, r)| y / r).collect();
    if k > 0 {
        u = problem.mean_zero(&u);
    }
    let mass: f64 = problem.weights.iter().zip(&u).map(|(w, u)| w * u * u).sum();
    let norm = mass.sqrt();
    // Fix the sign so that the eigenvector increases across the interval.
    let sign = if u[n - 1] >= u[0] { 1.0 } else { -1.0 };
    for v in &mut u {
        *v *= sign / norm;
    }
    Ok(SpectralGap {
        lambda,
        eigenvector: u,
        residual,
    })
}

/// Smallest nonzero eigenvalue and its mass-normalized, mean-zero eigenvector.
pub fn spectral_gap_1d(problem: &SpectralProblem) -> Result<SpectralGap> {
    eigenpair(problem, 1)
}

/// The `k`-th eigenpair (`k = 0` is the constant).
pub fn eigenpair_k(problem: &SpectralProblem, k: usize) -> Result<SpectralGap> {
    if k >= problem.len() {
        return Err(Error::InvalidParameter("eigenvalue index out of range".into()));
    }
    eigenpair(problem, k)
}

/// Discrete Rayleigh quotient of the mean-zero projection of `u`.
pub fn rayleigh_quotient(problem: &SpectralProblem, u: &[f64]) -> Result<f64> {
    if u.len() != problem.len() {
        return Err(Error::InvalidParameter("sample count does not match the grid".into()));
    }
    let scale: f64 = problem.weights.iter().sum::<f64>() * u.iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(2);
    let u = problem.mean_zero(u);
    let mass: f64 = problem.weights.iter().zip(&u).map(|(w, u)| w * u * u).sum();
    if !(mass > 1e-24 * scale) {
        return Err(Error::Degenerate("test function is constant".into()));
    }
    Ok(problem.dirichlet(&u) / mass)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Richardson {
    pub estimates: Vec<(usize, f64)>,
    pub extrapolated: f64,
    pub observed_order: f64,
}

/// Gap on successively doubled grids with Richardson extrapolation.
pub fn richardson_gap(density: &Density, interval: (f64, f64), sizes: &[usize]) -> Result<Richardson> {
    if sizes.len() != 3 {
        return Err(Error::InvalidParameter("Richardson needs three grid sizes".into()));
    }
    let est: Vec<(usize, f64)> = sizes
        .iter()
        .map(|&n| Ok((n, spectral_gap_1d(&SpectralProblem::new(density, interval, n)?)?.lambda)))
        .collect::<Result<_>>()?;
    let (l1, l2, l3) = (est[0].1, est[1].1, est[2].1);
    let ratio = (l1 - l2) / (l2 - l3);
    let refine = sizes[1] as f64 / sizes[0] as f64;
    let order = if ratio > 1.0 { ratio.ln() / refine.ln() } else { 2.0 };
    let extrapolated = l3 + (l3 - l2) / (refine.powf(order) - 1.0);
    Ok(Richardson {
        estimates: est,
        extrapolated,
        observed_order: order,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoincareCertificate {
    /// Gap of the vertical hyperplane section: the slab gap, capped at `2c`
    /// when Gaussian directions are present.
    pub lambda: f64,
    pub slab_gap: f64,
    pub bound: f64,
    pub certified: bool,
    /// `|λ(1.25 × cutoff) − λ|` for truncated infinite slabs.
    pub truncation_sensitivity: Option<f64>,
}

/// Relative slack allowed below `2c`.
pub const POINCARE_SLACK: f64 = 5e-3;

pub fn poincare_certify(density: &Density, n: usize) -> Result<PoincareCertificate> {
    let c = density.c();
    let window = density.truncated_slab(&QuadratureSpec::default());
    let slab_gap = spectral_gap_1d(&SpectralProblem::new(density, window, n)?)?.lambda;
    let slab = density.slab();
    let truncation_sensitivity = if slab.lower.is_finite() && slab.upper.is_finite() {
        None
    } else {
        let mid = if slab.lower.is_finite() {
            slab.lower
        } else if slab.upper.is_finite() {
            slab.upper
        } else {
            0.5 * (window.0 + window.1)
        };
        let widen = |e: f64, finite: bool| if finite { e } else { mid + 1.25 * (e - mid) };
        let wide = (
            widen(window.0, slab.lower.is_finite()),
            widen(window.1, slab.upper.is_finite()),
        );
        let m = (n as f64 * 1.25).round() as usize;
        let g = spectral_gap_1d(&SpectralProblem::new(density, wide, m)?)?.lambda;
        Some((g - slab_gap).abs())
    };
    let lambda = if density.horizontal_dim() >= 2 {
        slab_gap.min(2.0 * c)
    } else {
        slab_gap
    };
    let bound = 2.0 * c;
    Ok(PoincareCertificate {
        lambda,
        slab_gap,
        bound,
        certified: lambda >= bound * (1.0 - POINCARE_SLACK),
        truncation_sensitivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{PiecewiseLinear, Slab, Weight1D};

    fn gaussian(c: f64) -> Density {
        Density::whole_space(Weight1D::Zero, c, 2).unwrap()
    }

    #[test]
    fn gaussian_gap_is_2c() {
        let p = SpectralProblem::new(&gaussian(0.5), (-8.0, 8.0), 2000).unwrap();
        let g = spectral_gap_1d(&p).unwrap();
        assert!((g.lambda - 1.0).abs() < 5e-3);
        let mean: f64 = p.weights.iter().zip(&g.eigenvector).map(|(w, u)| w * u).sum();
        assert!(mean.abs() < 1e-12);
        let mass: f64 = p.weights.iter().zip(&g.eigenvector).map(|(w, u)| w * u * u).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        let rq = rayleigh_quotient(&p, &g.eigenvector).unwrap();
        assert!((rq - g.lambda).abs() <= 1e-10 * g.lambda);
    }

    #[test]
    fn quadratic_gap_uses_combined_rate() {
        let d = Density::whole_space(Weight1D::quadratic(1.0, 0.0, 0.0), 0.5, 2).unwrap();
        let g = spectral_gap_1d(&SpectralProblem::from_density(&d, 2000).unwrap()).unwrap();
        assert!((g.lambda - 3.0).abs() < 0.015);
    }

    #[test]
    fn coordinate_function_and_ordering() {
        let p = SpectralProblem::new(&gaussian(0.5), (-8.0, 8.0), 1000).unwrap();
        let gap = spectral_gap_1d(&p).unwrap().lambda;
        let rq = rayleigh_quotient(&p, &p.nodes).unwrap();
        assert!((rq - 1.0).abs() < 5e-3);
        let step: Vec<f64> = p.nodes.iter().map(|t| (3.0 * t).tanh()).collect();
        assert!(rayleigh_quotient(&p, &step).unwrap() >= gap);
        let second = eigenpair_k(&p, 2).unwrap();
        assert!((second.lambda - 2.0).abs() < 1e-2);
        assert!((rayleigh_quotient(&p, &second.eigenvector).unwrap() - second.lambda).abs() < 1e-9);
        assert!(matches!(
            rayleigh_quotient(&p, &vec![2.5; 1000]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn too_few_nodes() {
        assert!(SpectralProblem::new(&gaussian(1.0), (-1.0, 1.0), 8).is_err());
    }

    #[test]
    fn certificates() {
        let cert = poincare_certify(&gaussian(0.5), 2000).unwrap();
        assert!(cert.certified);
        assert!((cert.lambda - 1.0).abs() < 5e-3);
        assert!(cert.truncation_sensitivity.unwrap() < 1e-3);
        let pl = PiecewiseLinear::from_slopes(vec![-1.0, -0.2, 0.5, 1.0], 0.0, &[1.5, 0.3, -2.0]).unwrap();
        let d = Density::new(Weight1D::PiecewiseLinear(pl), 0.5, 2, Slab::new(-1.0, 1.0).unwrap()).unwrap();
        let cert = poincare_certify(&d, 2000).unwrap();
        assert!(cert.certified);
        assert!(cert.truncation_sensitivity.is_none());
        let bad = Density::new(
            Weight1D::quadratic(-0.4, 0.0, 0.0),
            0.5,
            2,
            Slab::new(-4.0, 4.0).unwrap(),
        )
        .unwrap();
        let cert = poincare_certify(&bad, 2000).unwrap();
        assert!(!cert.certified);
    }

    #[test]
    fn refinement_converges_at_second_order() {
        let d = Density::new(Weight1D::Zero, 0.5, 2, Slab::new(0.0, 1.0).unwrap()).unwrap();
        let r = richardson_gap(&d, (0.0, 1.0), &[500, 1000, 2000]).unwrap();
        assert!((r.observed_order - 2.0).abs() < 0.1);
        let d1 = (r.estimates[0].1 - r.estimates[1].1).abs();
        let d2 = (r.estimates[1].1 - r.estimates[2].1).abs();
        assert!(d2 < d1);
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        let diag = [0.0, 2.0, -1.0, 3.0, 1.0];
        let off = [4.0, 1.0, -2.0, 0.5];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x = tridiagonal_solve(&diag, &off, 0.5, &b);
        for i in 0..5 {
            let mut s = (diag[i] - 0.5) * x[i];
            if i > 0 {
                s += off[i - 1] * x[i - 1];
            }
            if i < 4 {
                s += off[i] * x[i + 1];
            }
            assert!((s - b[i]).abs() < 1e-12, "row {i}: {s} vs {}", b[i]);
        }
    }
}
