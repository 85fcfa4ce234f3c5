use std::f64::consts::PI;
use std::time::Instant;

use isoflow_core::geometry::{cmc_shoot, index_form, jacobi_residual, parallel_halfspace_stability, DiscreteCurve};
use isoflow_core::optimize::{minimize, planar_total_area, ChordSpline, Minimization, OptimizerConfig};
use isoflow_core::profiles::{
    build_profile, check_profile_ode, compare_profiles, volume_area_perpendicular, ComparisonVerdict, Family,
    OdeVerdict, Profile,
};
use isoflow_core::special::gaussian_quantile;
use isoflow_core::spectrum::{poincare_certify, richardson_gap, spectral_gap_1d, SpectralProblem};
use isoflow_core::transport::{
    build_transport, check_contraction, pushforward_check, transported_perimeter_bound, TransportOptions,
};
use isoflow_core::weights::Smoothness;
use isoflow_core::{Density, QuadratureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::output::{Output, Status, VerdictRecord};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Profile,
    Transport,
    Spectrum,
    Stability,
    Jacobi,
    Optimize,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Self::Profile,
        Self::Transport,
        Self::Spectrum,
        Self::Stability,
        Self::Jacobi,
        Self::Optimize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Profile => "profile",
            Self::Transport => "transport",
            Self::Spectrum => "spectrum",
            Self::Stability => "stability",
            Self::Jacobi => "jacobi",
            Self::Optimize => "optimize",
        }
    }

    pub fn verdict_file(self) -> &'static str {
        match self {
            Self::Profile => "compare.json",
            Self::Transport => "transport.json",
            Self::Spectrum => "spectrum.json",
            Self::Stability => "stability.json",
            Self::Jacobi => "jacobi.json",
            Self::Optimize => "optimize.json",
        }
    }
}

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub density: Density,
    pub out: &'a Output,
    pub expect_bound: bool,
}

impl Context<'_> {
    /// Independent random stream per sub-task, derived from the single seed.
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(stream);
        rng
    }

    fn window(&self) -> (f64, f64) {
        self.density.truncated_slab(&QuadratureSpec::default())
    }

    fn boundary_flags(&self) -> [bool; 2] {
        let s = self.density.slab();
        [s.lower.is_finite(), s.upper.is_finite()]
    }
}

fn compute(e: isoflow_core::Error) -> CliError {
    CliError::Compute(e.to_string())
}

/// Runs one command and writes its files; computation failures become an
/// error record, I/O failures abort.
pub fn run(ctx: &Context, cmd: Command) -> Result<VerdictRecord, CliError> {
    let start = Instant::now();
    let result = match cmd {
        Command::Profile => profile(ctx),
        Command::Transport => transport(ctx),
        Command::Spectrum => spectrum(ctx),
        Command::Stability => stability(ctx),
        Command::Jacobi => jacobi(ctx),
        Command::Optimize => optimize(ctx),
    };
    let mut record = match result {
        Ok(r) => r,
        Err(CliError::Compute(msg)) => VerdictRecord::error(cmd.name(), msg),
        Err(e) => return Err(e),
    };
    record.wall_time = start.elapsed().as_secs_f64();
    ctx.out.json(cmd.verdict_file(), &record)?;
    Ok(record)
}

fn profile_rows(p: &Profile) -> Vec<Vec<f64>> {
    p.points
        .iter()
        .map(|q| vec![q.s, q.volume, q.area, q.v, q.f, q.df, q.ddf])
        .collect()
}

const PROFILE_HEADER: [&str; 7] = ["s", "V", "A", "v", "F", "dF", "ddF"];

fn profile(ctx: &Context) -> Result<VerdictRecord, CliError> {
    let d = &ctx.density;
    let c = d.c();
    let grid = ctx.config.profile.grid;
    let mut rec = VerdictRecord::new("profile", 1e-6);
    let perp = build_profile(d, Family::Perpendicular, grid).map_err(compute)?;
    ctx.out.csv("profile_perp.csv", &PROFILE_HEADER, profile_rows(&perp))?;
    let ode = check_profile_ode(&perp, c, 1e-6 * 2.0 * c);
    rec.real("perpendicular_max_abs_residual", ode.max_abs_residual);
    if ode.max_abs_residual > 1e-6 * 2.0 * c {
        rec.violate("perpendicular F''F+2c", ode.max_abs_residual);
    }
    if d.weight().smoothness() != Smoothness::Smooth {
        rec.metric("parallel", "skipped: weight is not smooth");
        return Ok(rec);
    }
    let par = build_profile(d, Family::Parallel, grid).map_err(compute)?;
    ctx.out.csv("profile_parallel.csv", &PROFILE_HEADER, profile_rows(&par))?;
    let ode = check_profile_ode(&par, c, 1e-6);
    rec.real("parallel_max_signed_residual", ode.max_signed_residual);
    rec.real("parallel_max_abs_residual", ode.max_abs_residual);
    let affine = d.weight().is_affine();
    rec.metric("affine", affine);
    match &ode.verdict {
        OdeVerdict::Counterexample(list) => {
            for (v, r) in list.iter().take(10) {
                rec.violate(format!("parallel F''F+2c at v={v}"), *r);
            }
        }
        _ if affine && ode.max_abs_residual > 1e-8 => {
            rec.violate("affine parallel equality", ode.max_abs_residual);
        }
        _ => {}
    }
    rec.metric(
        "parallel_ode",
        match ode.verdict {
            OdeVerdict::Equality => "equality",
            OdeVerdict::Inequality => "inequality",
            OdeVerdict::Counterexample(_) => "counterexample",
        },
    );
    let cmp = compare_profiles(&par, &perp).map_err(compute)?;
    rec.real("min_difference", cmp.min_difference);
    rec.real("max_relative_gap", cmp.max_relative_gap);
    rec.metric("points_compared", cmp.points_compared);
    match &cmp.verdict {
        ComparisonVerdict::Strict => {
            rec.metric("strict", true);
            rec.metric("ties", 0);
        }
        ComparisonVerdict::WithTies(ties) => {
            rec.metric("strict", false);
            rec.metric("ties", ties.len());
            rec.metric("tie_everywhere", ties.len() == cmp.points_compared);
        }
        ComparisonVerdict::Violation(list) => {
            rec.metric("strict", false);
            for (v, f, g) in list.iter().take(10) {
                rec.violate(format!("F < G at v={v}"), f - g);
            }
        }
    }
    Ok(rec)
}

fn random_interval(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> (f64, f64) {
    let a = rng.gen_range(lo..hi);
    let b = rng.gen_range(lo..hi);
    if a == b {
        (a, (a + 1e-3 * (hi - lo)).min(hi))
    } else {
        (a.min(b), a.max(b))
    }
}

fn random_chord(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64), flags: [bool; 2]) -> Result<DiscreteCurve, CliError> {
    let m = rng.gen_range(6..14);
    let coeffs: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.5..2.5)).collect();
    ChordSpline::new(lo, hi, coeffs)
        .and_then(|s| s.to_curve(201, flags))
        .map_err(compute)
}

fn transport(ctx: &Context) -> Result<VerdictRecord, CliError> {
    let d = &ctx.density;
    let cfg = &ctx.config.transport;
    let mut rec = VerdictRecord::new("transport", 1e-8);
    let options = TransportOptions {
        grid: None,
        grid_size: cfg.grid,
        allow_nonconcave: cfg.allow_nonconcave,
    };
    let map = build_transport(d, &options).map_err(compute)?;
    let rows = (0..map.s.len())
        .filter(|&i| !map.clipped[i])
        .map(|i| vec![map.s[i], map.rho[i], map.drho[i]]);
    ctx.out.csv("transport.csv", &["s", "rho", "drho"], rows)?;
    rec.metric("clipped_nodes", map.clipped.iter().filter(|c| **c).count());
    if !map.warnings.is_empty() {
        rec.metric("warnings", map.warnings.clone());
    }
    let contraction = check_contraction(&map);
    rec.real("max_drho", contraction.max_derivative);
    rec.metric("contraction_certified", contraction.certified);
    if !contraction.certified {
        rec.violate(format!("rho' at s={}", contraction.argmax), contraction.max_derivative);
    }
    let alpha = map.normalizers.alpha;
    let identity = map.derivative_identity_residual();
    rec.real("derivative_identity_residual", identity);
    if identity > 1e-8 * alpha {
        rec.violate("derivative identity", identity);
    }
    rec.real("finite_difference_gap", map.finite_difference_gap());
    let mut rng = ctx.rng(1);
    let window = ctx.window();
    let intervals: Vec<(f64, f64)> = (0..cfg.intervals).map(|_| random_interval(&mut rng, window)).collect();
    if !intervals.is_empty() {
        let push = pushforward_check(&map, &intervals).map_err(compute)?;
        rec.real("pushforward_max_residual", push.max_residual);
        for (k, r) in push.residuals.iter().enumerate() {
            if *r > 1e-8 {
                let (a, b) = intervals[k];
                rec.violate(format!("pushforward on ({a}, {b})"), *r);
            }
        }
    }
    if d.ambient_dim() == 2 {
        let mut rng = ctx.rng(2);
        let mut min_slack = f64::INFINITY;
        for k in 0..cfg.curves {
            let curve = random_chord(&mut rng, window, ctx.boundary_flags())?;
            let bound = transported_perimeter_bound(&map, &curve).map_err(compute)?;
            min_slack = min_slack.min(bound.slack);
            if bound.slack < -1e-6 {
                rec.violate(format!("perimeter bound on curve {k}"), bound.slack);
            }
        }
        if cfg.curves > 0 {
            rec.real("perimeter_min_slack", min_slack);
        }
    } else {
        rec.metric("perimeter_bound", "skipped: planar only");
    }
    Ok(rec)
}

fn spectrum(ctx: &Context) -> Result<VerdictRecord, CliError> {
    let d = &ctx.density;
    let n = ctx.config.spectrum.nodes;
    let mut rec = VerdictRecord::new("spectrum", isoflow_core::spectrum::POINCARE_SLACK);
    let problem = SpectralProblem::from_density(d, n).map_err(compute)?;
    let gap = spectral_gap_1d(&problem).map_err(compute)?;
    let rows = (0..problem.len()).map(|i| vec![problem.nodes[i], problem.weights[i], gap.eigenvector[i]]);
    ctx.out.csv("spectrum.csv", &["t", "w", "u1"], rows)?;
    rec.real("slab_gap", gap.lambda);
    rec.real("eigen_residual", gap.residual);
    if n >= 64 {
        let r = richardson_gap(d, problem.interval, &[n / 4, n / 2, n]).map_err(compute)?;
        rec.real("richardson_gap", r.extrapolated);
        rec.real("observed_order", r.observed_order);
    }
    let cert = poincare_certify(d, n).map_err(compute)?;
    rec.real("lambda", cert.lambda);
    rec.real("bound", cert.bound);
    rec.metric("certified", cert.certified);
    if let Some(s) = cert.truncation_sensitivity {
        rec.real("truncation_sensitivity", s);
    }
    let concave = d.weight().check_concavity().is_certified();
    rec.metric("concave", concave);
    if (concave || ctx.expect_bound) && !cert.certified {
        rec.violate("lambda below 2c", cert.lambda);
    }
    Ok(rec)
}

/// Mean-zero, unit-norm test function on a vertical line from random modes.
fn vertical_test_function(rng: &mut ChaCha8Rng, line: &DiscreteCurve, fw: &[f64], (lo, hi): (f64, f64)) -> Vec<f64> {
    let coef: Vec<(f64, f64)> = (0..5).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let mut u: Vec<f64> = line
        .points
        .iter()
        .map(|p| {
            let z = PI * (p[1] - lo) / (hi - lo);
            coef.iter()
                .enumerate()
                .map(|(j, (a, b))| {
                    let k = (j + 1) as f64;
                    (a * (k * z).cos() + b * (k * z).sin()) / (k * k)
                })
                .sum()
        })
        .collect();
    let mass: f64 = fw.iter().sum();
    let mean = fw.iter().zip(&u).map(|(w, u)| w * u).sum::<f64>() / mass;
    u.iter_mut().for_each(|v| *v -= mean);
    let norm = (fw.iter().zip(&u).map(|(w, u)| w * u * u).sum::<f64>() / mass).sqrt();
    if norm > 0.0 {
        u.iter_mut().for_each(|v| *v /= norm);
    }
    u
}

fn stability(ctx: &Context) -> Result<VerdictRecord, CliError> {
    let d = &ctx.density;
    let cfg = &ctx.config.stability;
    let mut rec = VerdictRecord::new("stability", 1e-4);
    if d.weight().smoothness() == Smoothness::Smooth {
        let v = parallel_halfspace_stability(d, cfg.level).map_err(compute)?;
        let expected_stable = d.weight().second_derivative(cfg.level).map_err(compute)? >= 0.0;
        rec.real("level", cfg.level);
        rec.metric("parallel", if v.stable { "stable" } else { "unstable" });
        rec.real("second_derivative", v.second_derivative);
        rec.real("witness", v.witness);
        rec.real("witness_numeric", v.witness_numeric);
        rec.real("witness_error", v.witness_error);
        if v.stable != expected_stable {
            rec.violate("parallel stability classification", v.witness);
        }
        if (v.witness_numeric - v.witness).abs() > 1e-4 * v.witness.abs() + 1e-8 {
            rec.violate("index form witness vs closed form", v.witness_numeric - v.witness);
        }
    } else {
        rec.metric("parallel", "skipped: weight is not smooth");
    }
    let (lo, hi) = ctx.window();
    let flags = ctx.boundary_flags();
    let mut rng = ctx.rng(3);
    let mut rows = Vec::with_capacity(cfg.tests);
    let mut min_value = f64::INFINITY;
    for k in 0..cfg.tests {
        let x0 = rng.gen_range(-1.5..1.5);
        let line = DiscreteCurve::segment([x0, lo], [x0, hi], cfg.nodes, flags).map_err(compute)?;
        let fw = line.f_weights(d).map_err(compute)?;
        let u = vertical_test_function(&mut rng, &line, &fw, (lo, hi));
        let value = index_form(d, &line, &u, &u).map_err(compute)?.value;
        min_value = min_value.min(value);
        if value < -1e-6 {
            rec.violate(format!("vertical line x={x0}, test {k}"), value);
        }
        rows.push(vec![k as f64, x0, value]);
    }
    ctx.out.csv("stability_index.csv", &["test", "x0", "value"], rows)?;
    if cfg.tests > 0 {
        rec.real("vertical_min_index", min_value);
    }
    Ok(rec)
}

fn curve_rows(curve: &DiscreteCurve) -> Vec<Vec<f64>> {
    (0..curve.len())
        .map(|i| {
            let [x, t] = curve.points[i];
            let [nx, nt] = curve.normals[i];
            vec![x, t, nx, nt, curve.curvature[i]]
        })
        .collect()
}

const CURVE_HEADER: [&str; 5] = ["x", "t", "Nx", "Nt", "k"];

fn jacobi(ctx: &Context) -> Result<VerdictRecord, CliError> {
    let d = &ctx.density;
    let cfg = &ctx.config.jacobi;
    let mut rec = VerdictRecord::new("jacobi", 0.875);
    let mut rows = Vec::new();
    let eta = [1.0, 0.0];
    for (i, &target) in cfg.targets.iter().enumerate() {
        let mut residuals = Vec::new();
        let mut finest = None;
        for &h in &cfg.steps {
            let curve = cmc_shoot(d, target, [cfg.start_x, cfg.start_t], cfg.angle, h, cfg.length).map_err(compute)?;
            let r = jacobi_residual(d, &curve, &eta).map_err(compute)?;
            rows.push(vec![target, h, r]);
            residuals.push((h, r));
            finest = Some(curve);
        }
        if let Some(curve) = finest {
            ctx.out.csv(&format!("jacobi_curve_{i}.csv"), &CURVE_HEADER, curve_rows(&curve))?;
        }
        let mut ratios = Vec::new();
        for w in residuals.windows(2) {
            let ((h0, r0), (h1, r1)) = (w[0], w[1]);
            if r0 <= 1e-10 && r1 <= 1e-10 {
                continue;
            }
            let ratio = r0 / r1;
            let need = 0.875 * (h0 / h1).powi(2);
            ratios.push(ratio);
            if !(ratio >= need) {
                rec.violate(format!("H={target}: residual ratio {h0} -> {h1}"), ratio);
            }
        }
        rec.metric(&format!("ratios_h{i}"), ratios.iter().map(|r| if r.is_finite() { *r } else { -1.0 }).collect::<Vec<_>>());
        rec.real(&format!("finest_residual_h{i}"), residuals.last().map_or(f64::NAN, |r| r.1));
    }
    ctx.out.csv("jacobi.csv", &["target", "h", "residual"], rows)?;
    Ok(rec)
}

fn initial_chord(rng: &mut ChaCha8Rng, d: &Density, m: usize, (lo, hi): (f64, f64)) -> Result<ChordSpline, CliError> {
    let slope = rng.gen_range(-1.0..1.0);
    let offset = rng.gen_range(-0.5..0.5);
    let bumps: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.3..0.3)).collect();
    ChordSpline::from_fn(d, m, |t| {
        let z = (t - lo) / (hi - lo);
        offset
            + slope * (2.0 * z - 1.0)
            + bumps
                .iter()
                .enumerate()
                .map(|(k, a)| a * ((k + 1) as f64 * PI * z).sin())
                .sum::<f64>()
    })
    .map_err(compute)
}

fn optimize(ctx: &Context) -> Result<VerdictRecord, CliError> {
    let d = &ctx.density;
    let cfg = &ctx.config.optimize;
    let mut rec = VerdictRecord::new("optimize", 5e-3);
    if d.ambient_dim() != 2 {
        rec.metric("skipped", "chord optimization is planar");
        return Ok(rec);
    }
    let total = planar_total_area(d).map_err(compute)?;
    let v = cfg.fraction * total;
    let s = gaussian_quantile(d.c(), cfg.fraction, 1.0 - cfg.fraction);
    let (_, g) = volume_area_perpendicular(d, s).map_err(compute)?;
    rec.real("target_area", v);
    rec.real("perpendicular_length", g);
    let window = ctx.window();
    let mut rng = ctx.rng(4);
    let inits: Result<Vec<ChordSpline>, CliError> =
        (0..cfg.runs).map(|_| initial_chord(&mut rng, d, cfg.control_points, window)).collect();
    let mut opt = OptimizerConfig::new(v);
    opt.max_iterations = cfg.max_iterations;
    opt.gradient_tolerance = cfg.gradient_tolerance;
    let runs: Vec<isoflow_core::Result<Minimization>> = inits?.par_iter().map(|c| minimize(d, &opt, c)).collect();
    let mut best: Option<(usize, f64)> = None;
    let mut lengths = Vec::new();
    for (k, run) in runs.iter().enumerate() {
        let run = run.as_ref().map_err(|e| CliError::Compute(e.to_string()))?;
        let trace = run
            .trace
            .iter()
            .map(|e| vec![e.iteration as f64, e.length, e.area_error, e.gradient_norm]);
        ctx.out
            .csv(&format!("optimize_trace_{k}.csv"), &["iter", "length", "area_err", "grad_norm"], trace)?;
        let curve = run.chord.to_curve(201, ctx.boundary_flags()).map_err(compute)?;
        ctx.out.csv(&format!("optimize_curve_{k}.csv"), &CURVE_HEADER, curve_rows(&curve))?;
        let len = run.report.length;
        lengths.push(len);
        if len < g - 1e-6 {
            rec.violate(format!("run {k} shorter than the perpendicular chord"), len);
        }
        let drift = run.trace.iter().map(|e| e.area_error.abs()).fold(0.0, f64::max);
        if drift > 1e-8 * total {
            rec.violate(format!("run {k} area drift"), drift);
        }
        if best.is_none_or(|(_, b)| len < b) {
            best = Some((k, len));
        }
    }
    rec.metric("lengths", lengths);
    rec.metric(
        "statuses",
        runs.iter()
            .map(|r| r.as_ref().map_or("error", |m| m.status.name()))
            .collect::<Vec<_>>(),
    );
    if let Some((k, len)) = best {
        let report = &runs[k].as_ref().map_err(|e| CliError::Compute(e.to_string()))?.report;
        rec.metric("best_run", k);
        rec.real("best_relative_gap", (len - g) / g);
        rec.real("curvature_spread", report.curvature_spread);
        rec.metric("stationary", report.stationary);
        if (len - g) / g > 5e-3 {
            rec.violate(format!("run {k} above the perpendicular length"), len);
        }
        if !report.stationary {
            rec.violate(format!("run {k} stationarity spread"), report.curvature_spread);
        }
    }
    Ok(rec)
}

pub fn summary_status(records: &[VerdictRecord]) -> Status {
    records.iter().map(|r| r.status).max().unwrap_or(Status::Verified)
}
