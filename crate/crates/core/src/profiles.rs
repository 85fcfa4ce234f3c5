//! Weighted volume and area of half-space families and their isoperimetric
//! profiles `v ↦ F(v)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::special::{gaussian_lower_mass, gaussian_upper_mass, MonotoneCubic};
use crate::weights::{gaussian_factor, integrate_weighted, Density, QuadratureSpec, Smoothness};

/// A half-space `E` whose boundary `Σ = ∂E ∩ Ω` is a hyperplane.
#[derive(Debug, Clone, PartialEq)]
pub enum HalfSpaceCandidate {
    /// `{t ≤ level}`.
    Parallel { level: f64 },
    /// `{x_axis ≤ offset}` for a horizontal coordinate `axis < n`.
    Perpendicular { axis: usize, offset: f64 },
    /// `{⟨p, normal⟩ ≤ offset}` in the whole space.
    Tilted { normal: Vec<f64>, offset: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Parallel,
    Perpendicular,
    Tilted,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Self::Parallel => "parallel",
            Self::Perpendicular => "perpendicular",
            Self::Tilted => "tilted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub s: f64,
    pub volume: f64,
    pub area: f64,
    pub v: f64,
    pub f: f64,
    pub df: f64,
    pub ddf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub family: Family,
    pub points: Vec<ProfilePoint>,
    pub total_volume: f64,
}

impl Profile {
    pub fn volumes(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.v).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f).collect()
    }
}

/// Default fraction of the volume range trimmed at each end of the grid.
pub const GRID_MARGIN: f64 = 1e-3;

fn spec_for_profiles() -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: 1e-13,
        abs_tol: 1e-300,
        max_panels: 20_000,
        ..QuadratureSpec::default()
    }
}

/// Chebyshev-spaced volumes on `[ε V_tot, (1 − ε) V_tot]`.
pub fn volume_grid(total: f64, n: usize, margin: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * total];
    }
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / (n - 1) as f64;
            total * (0.5 - (0.5 - margin) * theta.cos())
        })
        .collect()
}

/// Total weighted volume of `Ω`.
pub fn total_volume(density: &Density) -> Result<f64> {
    let m = density.vertical_mass(&spec_for_profiles())?;
    Ok(gaussian_factor(density.horizontal_dim(), density.c()) * m.value)
}

/// Weighted volume below and above the level, and area, of one member of a
/// family. Keeping both volumes avoids cancellation in the upper tail.
#[derive(Debug, Clone, Copy)]
struct Level {
    lower: f64,
    upper: f64,
    area: f64,
}

trait FamilyEval: Sync {
    fn level(&self, s: f64) -> Result<Level>;
    fn bracket(&self) -> (f64, f64);
}

struct ParallelEval<'a> {
    density: &'a Density,
    factor: f64,
    spec: QuadratureSpec,
    window: (f64, f64),
}

impl<'a> ParallelEval<'a> {
    fn new(density: &'a Density) -> Self {
        let spec = spec_for_profiles();
        Self {
            density,
            factor: gaussian_factor(density.horizontal_dim(), density.c()),
            window: density.truncated_slab(&spec),
            spec,
        }
    }
}

impl FamilyEval for ParallelEval<'_> {
    fn level(&self, s: f64) -> Result<Level> {
        let slab = self.density.slab();
        let lower = integrate_weighted(self.density, |_| 1.0, slab.lower, s, &self.spec)?.value;
        let upper = integrate_weighted(self.density, |_| 1.0, s, slab.upper, &self.spec)?.value;
        Ok(Level {
            lower: self.factor * lower,
            upper: self.factor * upper,
            area: self.factor * self.density.log_vertical(s).exp(),
        })
    }

    fn bracket(&self) -> (f64, f64) {
        self.window
    }
}

/// Oblique family `{x sin θ + t cos θ ≤ s}` in the whole space.
struct TiltedEval<'a> {
    density: &'a Density,
    cos: f64,
    sin: f64,
    factor: f64,
    spec: QuadratureSpec,
}

impl TiltedEval<'_> {
    fn offset(&self, s: f64, t: f64) -> f64 {
        (s - t * self.cos) / self.sin
    }

    fn moments(&self, s: f64) -> Result<[f64; 3]> {
        let c = self.density.c();
        let (lo, hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let gauss = |t: f64| {
            let x = self.offset(s, t);
            (-c * x * x).exp()
        };
        let a0 = integrate_weighted(self.density, gauss, lo, hi, &self.spec)?.value;
        let a1 = integrate_weighted(
            self.density,
            |t| {
                let x = self.offset(s, t);
                -2.0 * c * x * (-c * x * x).exp()
            },
            lo,
            hi,
            &self.spec,
        )?
        .value;
        let a2 = integrate_weighted(
            self.density,
            |t| {
                let x = self.offset(s, t);
                (4.0 * c * c * x * x - 2.0 * c) * (-c * x * x).exp()
            },
            lo,
            hi,
            &self.spec,
        )?
        .value;
        let k = self.factor / self.sin;
        Ok([k * a0, k * a1 / self.sin, k * a2 / (self.sin * self.sin)])
    }
}

impl FamilyEval for TiltedEval<'_> {
    fn level(&self, s: f64) -> Result<Level> {
        let c = self.density.c();
        let norm = gaussian_factor(1, c);
        let (lo, hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let lower = integrate_weighted(
            self.density,
            |t| gaussian_lower_mass(c, self.offset(s, t)) / norm,
            lo,
            hi,
            &self.spec,
        )?
        .value;
        let upper = integrate_weighted(
            self.density,
            |t| gaussian_upper_mass(c, self.offset(s, t)) / norm,
            lo,
            hi,
            &self.spec,
        )?
        .value;
        let area = self.moments(s)?[0];
        let k = self.factor * norm;
        Ok(Level {
            lower: k * lower,
            upper: k * upper,
            area,
        })
    }

    fn bracket(&self) -> (f64, f64) {
        let width = 40.0 / self.density.c().sqrt();
        (-width, width)
    }
}

fn check_level(density: &Density, s: f64) -> Result<()> {
    let slab = density.slab();
    if !slab.contains_closed(s) || s.is_nan() {
        return Err(Error::Domain {
            t: s,
            detail: format!("level outside slab ({}, {})", slab.lower, slab.upper),
        });
    }
    Ok(())
}

/// `V = (π/c)^{n/2} ∫_a^s e^{ω − ct²}`, `A = (π/c)^{n/2} e^{ω(s) − cs²}`.
pub fn volume_area_parallel(density: &Density, s: f64) -> Result<(f64, f64)> {
    check_level(density, s)?;
    let lvl = ParallelEval::new(density).level(s)?;
    Ok((lvl.lower, lvl.area))
}

/// `V = (π/c)^{(n−1)/2} M ∫_{−∞}^s e^{−cu²}`, `A = (π/c)^{(n−1)/2} M e^{−cs²}`
/// with `M` the vertical mass.
pub fn volume_area_perpendicular(density: &Density, s: f64) -> Result<(f64, f64)> {
    let n = density.horizontal_dim();
    if n == 0 {
        return Err(Error::Unsupported(
            "perpendicular half-spaces need a horizontal direction".into(),
        ));
    }
    let c = density.c();
    let m = density.vertical_mass(&spec_for_profiles())?.value;
    let k = gaussian_factor(n - 1, c) * m;
    Ok((k * gaussian_lower_mass(c, s), k * (-c * s * s).exp()))
}

fn tilted_angles(density: &Density, normal: &[f64]) -> Result<(f64, f64)> {
    if !density.slab().is_whole_line() {
        return Err(Error::Unsupported(
            "tilted families are only defined in the whole space".into(),
        ));
    }
    if normal.len() != density.ambient_dim() {
        return Err(Error::InvalidParameter("normal has wrong dimension".into()));
    }
    let norm: f64 = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("normal must be unit, |ν| = {norm}")));
    }
    let cos = normal[normal.len() - 1];
    let sin = normal[..normal.len() - 1]
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    Ok((cos, sin))
}

const VERTICAL_NORMAL: f64 = 1e-12;

/// Volume and area of `{⟨p, ν⟩ ≤ s}` in the whole space.
pub fn volume_area_tilted(density: &Density, normal: &[f64], s: f64) -> Result<(f64, f64)> {
    let (cos, sin) = tilted_angles(density, normal)?;
    if sin < VERTICAL_NORMAL {
        let level = if cos > 0.0 { s } else { -s };
        let (v, a) = volume_area_parallel(density, level)?;
        return Ok(if cos > 0.0 {
            (v, a)
        } else {
            (total_volume(density)? - v, a)
        });
    }
    let eval = TiltedEval {
        density,
        cos,
        sin,
        factor: gaussian_factor(density.horizontal_dim() - 1, density.c()),
        spec: spec_for_profiles(),
    };
    let lvl = eval.level(s)?;
    Ok((lvl.lower, lvl.area))
}

/// Safeguarded Newton solve of `V(s) = v` using `V' = A`.
fn solve_level<E: FamilyEval>(eval: &E, v: f64, total: f64) -> Result<(f64, Level)> {
    let use_upper = v > 0.5 * total;
    let target = if use_upper { total - v } else { v };
    let residual = |l: &Level| {
        if use_upper {
            target - l.upper
        } else {
            l.lower - target
        }
    };
    let (mut lo, mut hi) = eval.bracket();
    let mut s = 0.5 * (lo + hi);
    let mut best: Option<(f64, Level, f64)> = None;
    for _ in 0..300 {
        let lvl = eval.level(s)?;
        let r = residual(&lvl);
        if best.as_ref().is_none_or(|b| r.abs() < b.2.abs()) {
            best = Some((s, lvl, r));
        }
        if r.abs() <= 1e-15 * total || hi - lo <= 4.0 * f64::EPSILON * s.abs().max(1.0) {
            break;
        }
        if r < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - r / lvl.area;
        s = if lvl.area > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let (s, lvl, r) = best.expect("at least one iteration");
    if r.abs() > 1e-10 * total {
        return Err(Error::Consistency(format!(
            "level solve for v = {v} stalled with residual {r}; volume is not monotone"
        )));
    }
    Ok((s, lvl))
}

fn grid_for(density: &Density, grid_size: usize) -> Result<(f64, Vec<f64>)> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter("profile grid needs at least 2 points".into()));
    }
    let total = total_volume(density)?;
    Ok((total, volume_grid(total, grid_size, GRID_MARGIN)))
}

/// Samples `F(v) = A(V⁻¹(v))` with `F'` and `F''` from closed forms.
pub fn build_profile(density: &Density, family: Family, grid_size: usize) -> Result<Profile> {
    let (total, grid) = grid_for(density, grid_size)?;
    let c = density.c();
    let points: Result<Vec<ProfilePoint>> = match family {
        Family::Parallel => {
            if density.weight().smoothness() != Smoothness::Smooth {
                return Err(Error::Smoothness(
                    "parallel profile derivatives need a smooth weight".into(),
                ));
            }
            let eval = ParallelEval::new(density);
            grid.par_iter()
                .map(|&v| {
                    let (s, lvl) = solve_level(&eval, v, total)?;
                    let w = density.weight();
                    Ok(ProfilePoint {
                        s,
                        volume: lvl.lower,
                        area: lvl.area,
                        v,
                        f: lvl.area,
                        df: w.derivative(s)? - 2.0 * c * s,
                        ddf: (w.second_derivative(s)? - 2.0 * c) / lvl.area,
                    })
                })
                .collect()
        }
        Family::Perpendicular => {
            let n = density.horizontal_dim();
            if n == 0 {
                return Err(Error::Unsupported(
                    "perpendicular half-spaces need a horizontal direction".into(),
                ));
            }
            let m = total / gaussian_factor(n, c);
            let k = gaussian_factor(n - 1, c) * m;
            grid.par_iter()
                .map(|&v| {
                    let s = crate::special::gaussian_quantile(c, v / total, (total - v) / total);
                    let area = k * (-c * s * s).exp();
                    Ok(ProfilePoint {
                        s,
                        volume: k * gaussian_lower_mass(c, s),
                        area,
                        v,
                        f: area,
                        df: -2.0 * c * s,
                        ddf: -2.0 * c / area,
                    })
                })
                .collect()
        }
        Family::Tilted => {
            return Err(Error::InvalidParameter(
                "tilted profiles need a normal; use tilted_profile_wholespace".into(),
            ))
        }
    };
    Ok(Profile {
        family,
        points: points?,
        total_volume: total,
    })
}

/// Profile of the family `{⟨p, ν⟩ ≤ s}` in the whole space.
pub fn tilted_profile_wholespace(density: &Density, normal: &[f64], grid_size: usize) -> Result<Profile> {
    let (cos, sin) = tilted_angles(density, normal)?;
    if sin < VERTICAL_NORMAL {
        // Reflecting t ↦ −t maps the downward family onto the parallel one
        // with the roles of v and V_tot − v exchanged.
        let mut p = build_profile(density, Family::Parallel, grid_size)?;
        if cos < 0.0 {
            let total = p.total_volume;
            p.points.reverse();
            for (pt, &v) in p.points.iter_mut().zip(&volume_grid(total, grid_size, GRID_MARGIN)) {
                pt.s = -pt.s;
                pt.volume = total - pt.volume;
                pt.v = v;
                pt.df = -pt.df;
            }
        }
        p.family = Family::Tilted;
        return Ok(p);
    }
    let (total, grid) = grid_for(density, grid_size)?;
    let eval = TiltedEval {
        density,
        cos,
        sin,
        factor: gaussian_factor(density.horizontal_dim() - 1, density.c()),
        spec: spec_for_profiles(),
    };
    let points: Result<Vec<ProfilePoint>> = grid
        .par_iter()
        .map(|&v| {
            let (s, lvl) = solve_level(&eval, v, total)?;
            let [a, da, dda] = eval.moments(s)?;
            Ok(ProfilePoint {
                s,
                volume: lvl.lower,
                area: a,
                v,
                f: a,
                df: da / a,
                ddf: (dda * a - da * da) / (a * a * a),
            })
        })
        .collect();
    Ok(Profile {
        family: Family::Tilted,
        points: points?,
        total_volume: total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum OdeVerdict {
    /// `F''F + 2c = 0` within tolerance.
    Equality,
    /// `F''F + 2c ≤ tolerance` with strict inequality somewhere.
    Inequality,
    /// Volumes where `F''F + 2c` exceeds the tolerance.
    Counterexample(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeReport {
    /// `max |F''F + 2c|`.
    pub max_abs_residual: f64,
    /// `max (F''F + 2c)`.
    pub max_signed_residual: f64,
    /// `max |F'' + 2c/F|`.
    pub max_inverse_residual: f64,
    pub points_checked: usize,
    pub verdict: OdeVerdict,
}

/// Checks `F'' ≤ −2c/F` on the interior 90% of the volume range.
pub fn check_profile_ode(profile: &Profile, c: f64, tolerance: f64) -> OdeReport {
    let total = profile.total_volume;
    let mut abs = 0.0f64;
    let mut signed = f64::NEG_INFINITY;
    let mut inverse = 0.0f64;
    let mut bad = Vec::new();
    let mut count = 0;
    for p in &profile.points {
        if p.v < 0.05 * total || p.v > 0.95 * total {
            continue;
        }
        count += 1;
        let r = p.ddf * p.f + 2.0 * c;
        abs = abs.max(r.abs());
        signed = signed.max(r);
        inverse = inverse.max((p.ddf + 2.0 * c / p.f).abs());
        if r > tolerance || r.is_nan() {
            bad.push((p.v, r));
        }
    }
    let verdict = if !bad.is_empty() {
        OdeVerdict::Counterexample(bad)
    } else if abs <= tolerance {
        OdeVerdict::Equality
    } else {
        OdeVerdict::Inequality
    };
    OdeReport {
        max_abs_residual: abs,
        max_signed_residual: signed,
        max_inverse_residual: inverse,
        points_checked: count,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonVerdict {
    /// `F > G` beyond the tie tolerance at every compared volume.
    Strict,
    /// `F ≥ G` with ties at the listed volumes.
    WithTies(Vec<f64>),
    /// `F < G` at the listed `(v, F, G)`.
    Violation(Vec<(f64, f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub verdict: ComparisonVerdict,
    /// `min (F − G)`.
    pub min_difference: f64,
    /// `max |F − G| / max(F, G)`.
    pub max_relative_gap: f64,
    pub points_compared: usize,
}

/// Relative tolerance under which `F` and `G` count as tied.
pub const TIE_TOLERANCE: f64 = 1e-8;

/// Compares `F` against `G` on the volume grid of `F`, interpolating `G`
/// monotone-cubically when the grids differ.
pub fn compare_profiles(f: &Profile, g: &Profile) -> Result<Comparison> {
    let (vf, vg) = (f.total_volume, g.total_volume);
    if (vf - vg).abs() > 1e-8 * vf.max(vg) {
        return Err(Error::Incompatible(format!(
            "profiles have total volumes {vf} and {vg}"
        )));
    }
    if f.points.is_empty() || g.points.is_empty() {
        return Err(Error::Incompatible("empty profile".into()));
    }
    let same_grid = f.points.len() == g.points.len()
        && f.points
            .iter()
            .zip(&g.points)
            .all(|(a, b)| (a.v - b.v).abs() <= 1e-13 * vf);
    let g_at: Vec<f64> = if same_grid {
        g.values()
    } else {
        let interp = MonotoneCubic::new(&g.volumes(), &g.values())
            .ok_or_else(|| Error::Incompatible("profile grid is not increasing".into()))?;
        f.points.iter().map(|p| interp.eval(p.v)).collect()
    };
    let mut ties = Vec::new();
    let mut violations = Vec::new();
    let mut min_diff = f64::INFINITY;
    let mut max_gap = 0.0f64;
    for (p, &gv) in f.points.iter().zip(&g_at) {
        let diff = p.f - gv;
        let scale = p.f.max(gv);
        min_diff = min_diff.min(diff);
        max_gap = max_gap.max(diff.abs() / scale);
        if diff.abs() <= TIE_TOLERANCE * scale {
            ties.push(p.v);
        } else if diff < 0.0 {
            violations.push((p.v, p.f, gv));
        }
    }
    let verdict = if !violations.is_empty() {
        ComparisonVerdict::Violation(violations)
    } else if ties.is_empty() {
        ComparisonVerdict::Strict
    } else {
        ComparisonVerdict::WithTies(ties)
    };
    Ok(Comparison {
        verdict,
        min_difference: min_diff,
        max_relative_gap: max_gap,
        points_compared: f.points.len(),
    })
}

/// Volume and area of any half-space candidate.
pub fn volume_area(density: &Density, candidate: &HalfSpaceCandidate) -> Result<(f64, f64)> {
    match candidate {
        HalfSpaceCandidate::Parallel { level } => volume_area_parallel(density, *level),
        HalfSpaceCandidate::Perpendicular { axis, offset } => {
            if *axis >= density.horizontal_dim() {
                return Err(Error::InvalidParameter(format!(
                    "axis {axis} is not horizontal (n = {})",
                    density.horizontal_dim()
                )));
            }
            volume_area_perpendicular(density, *offset)
        }
        HalfSpaceCandidate::Tilted { normal, offset } => volume_area_tilted(density, normal, *offset),
    }
}
