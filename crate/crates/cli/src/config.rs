//! INI-style run configuration: parsing, validation and the resolved echo.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use ini::Ini;
use isoflow_core::weights::PiecewiseLinear;
use isoflow_core::{Density, QuadratureSpec, Slab, Weight1D};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightConfig {
    Zero,
    Affine { slope: f64, intercept: f64 },
    Quadratic { curvature: f64, slope: f64, intercept: f64 },
    LogPower { exponent: f64 },
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
}

impl WeightConfig {
    pub fn build(&self) -> isoflow_core::Result<Weight1D> {
        Ok(match self {
            Self::Zero => Weight1D::Zero,
            Self::Affine { slope, intercept } => Weight1D::affine(*slope, *intercept),
            Self::Quadratic {
                curvature,
                slope,
                intercept,
            } => Weight1D::quadratic(*curvature, *slope, *intercept),
            Self::LogPower { exponent } => Weight1D::log_power(*exponent),
            Self::PiecewiseLinear { knots, values } => {
                Weight1D::PiecewiseLinear(PiecewiseLinear::new(knots.clone(), values.clone())?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityConfig {
    pub weight: WeightConfig,
    pub c: f64,
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub grid: usize,
    pub intervals: usize,
    pub curves: usize,
    pub allow_nonconcave: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumConfig {
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub level: f64,
    pub tests: usize,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiConfig {
    pub targets: Vec<f64>,
    pub steps: Vec<f64>,
    pub start_x: f64,
    pub start_t: f64,
    pub angle: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub fraction: f64,
    pub control_points: usize,
    pub runs: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub density: DensityConfig,
    pub profile: ProfileConfig,
    pub transport: TransportConfig,
    pub spectrum: SpectrumConfig,
    pub stability: StabilityConfig,
    pub jacobi: JacobiConfig,
    pub optimize: OptimizeConfig,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["seed", "output"]),
    (
        "density",
        &["weight", "slope", "intercept", "curvature", "exponent", "knots", "values", "c", "dim", "lower", "upper"],
    ),
    ("profile", &["grid"]),
    ("transport", &["grid", "intervals", "curves", "allow_nonconcave"]),
    ("spectrum", &["nodes"]),
    ("stability", &["level", "tests", "nodes"]),
    ("jacobi", &["targets", "steps", "start_x", "start_t", "angle", "length"]),
    ("optimize", &["fraction", "control_points", "runs", "max_iterations", "gradient_tolerance"]),
];

struct Table {
    values: BTreeMap<(String, String), String>,
}

/// Drops a trailing `# comment` (a `#` preceded by whitespace).
fn strip_comment(value: &str) -> &str {
    let cut = value
        .char_indices()
        .find(|&(i, ch)| ch == '#' && value[..i].ends_with(char::is_whitespace))
        .map_or(value.len(), |(i, _)| i);
    value[..cut].trim()
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl Table {
    fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| invalid(e.to_string()))?;
        let mut values = BTreeMap::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(invalid("keys must appear inside a [section]"));
                }
                continue;
            };
            let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| *s == section) else {
                return Err(invalid(format!("unknown section [{section}]")));
            };
            for (key, value) in props.iter() {
                if !keys.contains(&key) {
                    return Err(invalid(format!("unknown key '{key}' in [{section}]")));
                }
                let entry = (section.to_string(), key.to_string());
                if values.insert(entry, strip_comment(value).to_string()).is_some() {
                    return Err(invalid(format!("duplicate key '{key}' in [{section}]")));
                }
            }
        }
        Ok(Self { values })
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, section: &str, key: &str, default: Option<T>) -> Result<T, CliError> {
        match self.raw(section, key) {
            Some(v) => v
                .parse()
                .map_err(|_| invalid(format!("[{section}] {key}: cannot parse '{v}'"))),
            None => default.ok_or_else(|| invalid(format!("[{section}] {key} is required"))),
        }
    }

    fn real(&self, section: &str, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        let v: f64 = self.parsed(section, key, default)?;
        if v.is_nan() {
            return Err(invalid(format!("[{section}] {key} is NaN")));
        }
        Ok(v)
    }

    fn finite(&self, section: &str, key: &str, default: Option<f64>) -> Result<f64, CliError> {
        let v = self.real(section, key, default)?;
        if !v.is_finite() {
            return Err(invalid(format!("[{section}] {key} must be finite")));
        }
        Ok(v)
    }

    fn list(&self, section: &str, key: &str, default: Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
        match self.raw(section, key) {
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| invalid(format!("[{section}] {key}: bad entry '{}'", x.trim())))
                })
                .collect(),
            None => default.ok_or_else(|| invalid(format!("[{section}] {key} is required"))),
        }
    }
}

fn positive(v: usize, what: &str, min: usize) -> Result<usize, CliError> {
    if v < min {
        return Err(invalid(format!("{what} must be at least {min}")));
    }
    Ok(v)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let t = Table::parse(text)?;
        let weight = match t.raw("density", "weight").unwrap_or("zero") {
            "zero" => WeightConfig::Zero,
            "affine" => WeightConfig::Affine {
                slope: t.finite("density", "slope", None)?,
                intercept: t.finite("density", "intercept", Some(0.0))?,
            },
            "quadratic" => WeightConfig::Quadratic {
                curvature: t.finite("density", "curvature", None)?,
                slope: t.finite("density", "slope", Some(0.0))?,
                intercept: t.finite("density", "intercept", Some(0.0))?,
            },
            "log_power" => WeightConfig::LogPower {
                exponent: t.finite("density", "exponent", None)?,
            },
            "piecewise_linear" => WeightConfig::PiecewiseLinear {
                knots: t.list("density", "knots", None)?,
                values: t.list("density", "values", None)?,
            },
            other => return Err(invalid(format!("unknown weight '{other}'"))),
        };
        let density = DensityConfig {
            weight,
            c: t.finite("density", "c", Some(0.5))?,
            dim: t.parsed("density", "dim", Some(2))?,
            lower: t.real("density", "lower", Some(f64::NEG_INFINITY))?,
            upper: t.real("density", "upper", Some(f64::INFINITY))?,
        };
        let built = build_density(&density)?;
        let (lo, hi) = built.truncated_slab(&QuadratureSpec::default());
        let mid = 0.5 * (lo + hi);

        let profile = ProfileConfig {
            grid: positive(t.parsed("profile", "grid", Some(201))?, "profile grid", 3)?,
        };
        let transport = TransportConfig {
            grid: positive(t.parsed("transport", "grid", Some(401))?, "transport grid", 3)?,
            intervals: t.parsed("transport", "intervals", Some(50))?,
            curves: t.parsed("transport", "curves", Some(20))?,
            allow_nonconcave: t.parsed("transport", "allow_nonconcave", Some(false))?,
        };
        let spectrum = SpectrumConfig {
            nodes: positive(t.parsed("spectrum", "nodes", Some(2000))?, "spectrum nodes", 16)?,
        };
        let stability = StabilityConfig {
            level: t.finite("stability", "level", Some(mid))?,
            tests: t.parsed("stability", "tests", Some(200))?,
            nodes: positive(t.parsed("stability", "nodes", Some(801))?, "stability nodes", 9)?,
        };
        if !built.slab().contains_open(stability.level) {
            return Err(invalid("[stability] level must lie inside the slab"));
        }
        let jacobi = JacobiConfig {
            targets: t.list("jacobi", "targets", Some(vec![0.0, -1.0]))?,
            steps: t.list("jacobi", "steps", Some(vec![4e-3, 2e-3, 1e-3]))?,
            start_x: t.finite("jacobi", "start_x", Some(0.5))?,
            start_t: t.finite("jacobi", "start_t", Some(mid))?,
            angle: t.finite("jacobi", "angle", Some(std::f64::consts::FRAC_PI_2))?,
            length: t.finite("jacobi", "length", Some(2.0))?,
        };
        if jacobi.steps.len() < 2 || jacobi.steps.iter().any(|h| *h <= 0.0) {
            return Err(invalid("[jacobi] steps needs at least two positive values"));
        }
        if !built.slab().contains_open(jacobi.start_t) {
            return Err(invalid("[jacobi] start_t must lie inside the slab"));
        }
        let optimize = OptimizeConfig {
            fraction: t.finite("optimize", "fraction", Some(0.5))?,
            control_points: t.parsed("optimize", "control_points", Some(12))?,
            runs: positive(t.parsed("optimize", "runs", Some(4))?, "optimize runs", 1)?,
            max_iterations: t.parsed("optimize", "max_iterations", Some(400))?,
            gradient_tolerance: t.finite("optimize", "gradient_tolerance", Some(1e-9))?,
        };
        if !(optimize.fraction > 0.0 && optimize.fraction < 1.0) {
            return Err(invalid("[optimize] fraction must lie in (0, 1)"));
        }
        if !(8..=32).contains(&optimize.control_points) {
            return Err(invalid("[optimize] control_points must be between 8 and 32"));
        }
        Ok(Self {
            seed: t.parsed("run", "seed", Some(1))?,
            output: PathBuf::from(t.raw("run", "output").unwrap_or("isoflow-out")),
            density,
            profile,
            transport,
            spectrum,
            stability,
            jacobi,
            optimize,
        })
    }

    pub fn density(&self) -> Result<Density, CliError> {
        build_density(&self.density)
    }

    /// Every setting, defaults included, in the input format.
    pub fn echo(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let d = &self.density;
        let _ = writeln!(s, "[run]\nseed = {}\noutput = {}\n", self.seed, self.output.display());
        let _ = writeln!(s, "[density]");
        match &d.weight {
            WeightConfig::Zero => {
                let _ = writeln!(s, "weight = zero");
            }
            WeightConfig::Affine { slope, intercept } => {
                let _ = writeln!(s, "weight = affine\nslope = {slope}\nintercept = {intercept}");
            }
            WeightConfig::Quadratic {
                curvature,
                slope,
                intercept,
            } => {
                let _ = writeln!(
                    s,
                    "weight = quadratic\ncurvature = {curvature}\nslope = {slope}\nintercept = {intercept}"
                );
            }
            WeightConfig::LogPower { exponent } => {
                let _ = writeln!(s, "weight = log_power\nexponent = {exponent}");
            }
            WeightConfig::PiecewiseLinear { knots, values } => {
                let _ = writeln!(
                    s,
                    "weight = piecewise_linear\nknots = {}\nvalues = {}",
                    list(knots),
                    list(values)
                );
            }
        }
        let _ = writeln!(s, "c = {}\ndim = {}\nlower = {}\nupper = {}\n", d.c, d.dim, d.lower, d.upper);
        let _ = writeln!(s, "[profile]\ngrid = {}\n", self.profile.grid);
        let tr = &self.transport;
        let _ = writeln!(
            s,
            "[transport]\ngrid = {}\nintervals = {}\ncurves = {}\nallow_nonconcave = {}\n",
            tr.grid, tr.intervals, tr.curves, tr.allow_nonconcave
        );
        let _ = writeln!(s, "[spectrum]\nnodes = {}\n", self.spectrum.nodes);
        let st = &self.stability;
        let _ = writeln!(s, "[stability]\nlevel = {}\ntests = {}\nnodes = {}\n", st.level, st.tests, st.nodes);
        let j = &self.jacobi;
        let _ = writeln!(
            s,
            "[jacobi]\ntargets = {}\nsteps = {}\nstart_x = {}\nstart_t = {}\nangle = {}\nlength = {}\n",
            list(&j.targets),
            list(&j.steps),
            j.start_x,
            j.start_t,
            j.angle,
            j.length
        );
        let o = &self.optimize;
        let _ = writeln!(
            s,
            "[optimize]\nfraction = {}\ncontrol_points = {}\nruns = {}\nmax_iterations = {}\ngradient_tolerance = {}",
            o.fraction, o.control_points, o.runs, o.max_iterations, o.gradient_tolerance
        );
        s
    }
}

fn build_density(d: &DensityConfig) -> Result<Density, CliError> {
    let slab = Slab::new(d.lower, d.upper).map_err(|e| invalid(format!("[density] {e}")))?;
    let weight = d.weight.build().map_err(|e| invalid(format!("[density] {e}")))?;
    Density::new(weight, d.c, d.dim, slab).map_err(|e| invalid(format!("[density] {e}")))
}
