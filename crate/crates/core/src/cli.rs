//! The `pwhac` command line: estimate, test, adjust, diagnose, calibrate, study.
//!
//! Exit status: 0 on success, 2 on validation/input errors, 3 when a
//! procedure is not applicable to the design, 1 otherwise.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bandwidth::{BandwidthRule, OmegaSpec, RuleKind};
use crate::config::EstimatorConfig;
use crate::diagnostics::{diagnose_with, DiagnoseOptions};
use crate::error::{Error, Result};
use crate::io;
use crate::kernels::Kernel;
use crate::model::{default_rho_grid, CovarianceFamily, RegressionProblem};
use crate::montecarlo::{self, McConfig, SizePowerCurve};
use crate::prewhiten::{assemble_omega, OmegaOutcome};
use crate::testing::{build_adjusted, select_scenario, test_statistic, NotApplicable, ScenarioSelection, TestProcedure};

#[derive(Debug, Parser)]
#[command(name = "pwhac", version, about = "Prewhitened autocorrelation-robust tests with breakdown diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Long-run covariance estimate Ω̂ and its bandwidth.
    Estimate(RunArgs),
    /// Unadjusted statistic T(y) and the decision T ≥ C.
    Test(RunArgs),
    /// Statistic T̄(y) of the artificial-regressor adjusted test.
    Adjust(RunArgs),
    /// Breakdown diagnostics of the design for a critical value C.
    Diagnose(RunArgs),
    /// Critical value C(δ) by Monte-Carlo calibration, with an
    /// independent-seed validation of the size.
    Calibrate(RunArgs),
    /// Null rejection rates and power curves over the covariance family.
    Study(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML run file; command-line flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Design matrix X (CSV, n×k).
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Observations y (CSV, one column).
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Restriction matrix R: a CSV path or inline rows such as "0,1;1,0".
    #[arg(long = "R")]
    pub r_matrix: Option<String>,
    /// Right-hand side r: a CSV path or inline "0,0" (default zeros).
    #[arg(long = "r")]
    pub r_vector: Option<String>,
    /// bartlett, parzen or qs.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Bandwidth rule: am (Andrews), nw (Newey–West) or kv (fixed-b).
    #[arg(long)]
    pub rule: Option<String>,
    /// VAR prewhitening order, 1 ≤ p ≤ n/(k+1).
    #[arg(long)]
    pub p: Option<usize>,
    /// Rule weights ω: "ones", "zero-first" or a comma list.
    #[arg(long)]
    pub omega: Option<String>,
    /// Fixed-b fraction, M = b(n−p).
    #[arg(long)]
    pub b: Option<f64>,
    /// Andrews c₁ (Newey–West: c̄₂).
    #[arg(long)]
    pub c1: Option<f64>,
    /// Andrews c₂ (Newey–West: c̄₃).
    #[arg(long)]
    pub c2: Option<f64>,
    /// Andrews j ∈ {1, 2} (Newey–West: c̄₁).
    #[arg(long)]
    pub j: Option<u32>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Critical value C.
    #[arg(long = "C")]
    pub critical_value: Option<f64>,
    /// AR(1) coefficients of the covariance family, comma separated.
    #[arg(long = "rho-grid")]
    pub rho_grid: Option<String>,
    /// Restrict the family to ρ > −1+ε (diagnostics then ignore e₋).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Alternative distances ‖Rβ − r‖/σ for `study`, comma separated.
    #[arg(long)]
    pub distances: Option<String>,
    /// Simulate/calibrate the unadjusted test instead of the adjusted one.
    #[arg(long)]
    pub unadjusted: bool,
    /// Output file: CSV for curves when the name ends in .csv, JSON otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long)]
    pub json: bool,
    /// Skip one header line in every CSV input.
    #[arg(long)]
    pub header: bool,
}

/// Contents of a `--config` TOML file. Paths are relative to the file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    #[serde(rename = "R")]
    pub r_matrix: Option<Vec<Vec<f64>>>,
    #[serde(rename = "r")]
    pub r_vector: Option<Vec<f64>>,
    pub kernel: Option<Kernel>,
    pub rule: Option<BandwidthRule>,
    pub p: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    #[serde(rename = "C")]
    pub critical_value: Option<f64>,
    pub rho_grid: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub distances: Option<Vec<f64>>,
    #[serde(default)]
    pub header: bool,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config '{}': {e}", path.display())))?;
        let mut file: Self = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut file.x, &mut file.y].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }
}

/// A fully resolved and validated run.
#[derive(Debug, Clone)]
pub struct Run {
    pub problem: RegressionProblem,
    pub y: Option<DVector<f64>>,
    pub config: EstimatorConfig,
    pub reps: usize,
    pub seed: u64,
    pub delta: Option<f64>,
    pub critical_value: Option<f64>,
    pub family: CovarianceFamily,
    pub epsilon: Option<f64>,
    pub distances: Vec<f64>,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("invalid {what} entry '{t}'"))))
        .collect()
}

fn parse_inline_matrix(s: &str) -> Result<DMatrix<f64>> {
    let rows = s.split(';').map(|row| parse_list(row, "R")).collect::<Result<Vec<_>>>()?;
    rows_to_matrix(&rows)
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = rows.first().map_or(0, Vec::len);
    if k == 0 || rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidHypothesis("R must be a non-empty rectangular matrix".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
}

fn build_rule(args: &RunArgs, file_rule: Option<BandwidthRule>, kernel: &Kernel) -> Result<BandwidthRule> {
    let omega = args.omega.as_deref().map(OmegaSpec::parse).transpose()?;
    let kind = match &args.rule {
        Some(s) => s.parse::<RuleKind>()?,
        None => match &file_rule {
            Some(r) => r.kind(),
            None => RuleKind::NeweyWest,
        },
    };
    let base = match file_rule.filter(|r| r.kind() == kind) {
        Some(r) => r,
        None => match kind {
            RuleKind::Andrews => BandwidthRule::andrews_default(kernel, OmegaSpec::ones()).or_else(|e| {
                if args.c1.is_some() && args.c2.is_some() && args.j.is_some() {
                    Ok(BandwidthRule::Andrews { j: 1, omega: OmegaSpec::ones(), c1: 1.0, c2: 1.0 })
                } else {
                    Err(e)
                }
            })?,
            RuleKind::NeweyWest => BandwidthRule::newey_west_default(OmegaSpec::ones()),
            RuleKind::FixedB => match args.b {
                Some(b) => BandwidthRule::fixed_b(b),
                None => return Err(Error::Config("the fixed-b rule needs --b".into())),
            },
        },
    };
    Ok(match base {
        BandwidthRule::Andrews { j, omega: o, c1, c2 } => BandwidthRule::Andrews {
            j: match args.j {
                Some(v) => u8::try_from(v).map_err(|_| Error::Config(format!("Andrews j must be 1 or 2, got {v}")))?,
                None => j,
            },
            omega: omega.unwrap_or(o),
            c1: args.c1.unwrap_or(c1),
            c2: args.c2.unwrap_or(c2),
        },
        BandwidthRule::NeweyWest { omega: o, weights, cbar1, cbar2, cbar3 } => BandwidthRule::NeweyWest {
            omega: omega.unwrap_or(o),
            weights,
            cbar1: args.j.unwrap_or(cbar1),
            cbar2: args.c1.unwrap_or(cbar2),
            cbar3: args.c2.unwrap_or(cbar3),
        },
        BandwidthRule::FixedB { value } => match args.b {
            Some(b) => BandwidthRule::fixed_b(b),
            None => BandwidthRule::FixedB { value },
        },
    })
}

impl Run {
    /// Merges flags over the run file and validates everything before any
    /// computation.
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => RunFile::load(p)?,
            None => RunFile::default(),
        };
        let header = args.header || file.header;
        let x_path = args
            .x
            .clone()
            .or(file.x)
            .ok_or_else(|| Error::Config("missing design matrix (--x)".into()))?;
        let x = io::read_matrix(&x_path, header)?;
        let y = match args.y.clone().or(file.y) {
            Some(p) => Some(io::read_vector(&p, header)?),
            None => None,
        };
        let r_mat = match (&args.r_matrix, file.r_matrix) {
            (Some(s), _) if Path::new(s).is_file() => io::read_matrix(Path::new(s), header)?,
            (Some(s), _) => parse_inline_matrix(s)?,
            (None, Some(rows)) => rows_to_matrix(&rows)?,
            (None, None) => return Err(Error::Config("missing restriction matrix (--R)".into())),
        };
        let r_vec = match (&args.r_vector, file.r_vector) {
            (Some(s), _) if Path::new(s).is_file() => io::read_vector(Path::new(s), header)?,
            (Some(s), _) => DVector::from_vec(parse_list(s, "r")?),
            (None, Some(v)) => DVector::from_vec(v),
            (None, None) => DVector::zeros(r_mat.nrows()),
        };
        let mut problem = RegressionProblem::new(x, r_mat, r_vec)?;
        if let Some(y) = &y {
            problem = problem.with_y(y.clone())?;
        }
        let kernel = match &args.kernel {
            Some(s) => s.parse()?,
            None => file.kernel.unwrap_or(Kernel::Bartlett),
        };
        let rule = build_rule(args, file.rule, &kernel)?;
        let p = args.p.or(file.p).unwrap_or(1);
        let config = EstimatorConfig::new(kernel, rule, p);
        config.validate(problem.n(), problem.k())?;

        let epsilon = args.epsilon.or(file.epsilon);
        let rho = match &args.rho_grid {
            Some(s) => parse_list(s, "ρ")?,
            None => file.rho_grid.unwrap_or_else(default_rho_grid),
        };
        let family = match epsilon {
            Some(epsilon) => CovarianceFamily::Ar1Restricted { epsilon, rho },
            None => CovarianceFamily::Ar1Grid { rho },
        };
        family.validate()?;
        let distances = match &args.distances {
            Some(s) => parse_list(s, "distance")?,
            None => file.distances.unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0, 8.0]),
        };
        let delta = args.delta.or(file.delta);
        if let Some(d) = delta {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::Config(format!("δ must lie in (0, 1], got {d}")));
            }
        }
        let critical_value = args.critical_value.or(file.critical_value);
        if let Some(c) = critical_value {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("C must be finite and nonnegative, got {c}")));
            }
        }
        Ok(Self {
            problem,
            y,
            config,
            reps: args.reps.or(file.reps).unwrap_or(10_000),
            seed: args.seed.or(file.seed).unwrap_or(0),
            delta,
            critical_value,
            family,
            epsilon,
            distances,
        })
    }

    fn y(&self) -> Result<&DVector<f64>> {
        self.y.as_ref().ok_or_else(|| Error::Config("missing observations (--y)".into()))
    }

    fn c(&self) -> Result<f64> {
        self.critical_value.ok_or_else(|| Error::Config("missing critical value (--C)".into()))
    }

    fn mc(&self) -> Result<McConfig> {
        McConfig::new(self.reps, self.seed, self.family.clone())
    }

    /// Adjusted test unless `--unadjusted`, or unless the design already
    /// admits the plain test (both `e₊`, `e₋` in the null-invariant span).
    fn procedure(&self, unadjusted: bool) -> Result<TestProcedure> {
        let plain = TestProcedure::Unadjusted { problem: self.problem.clone(), config: self.config.clone() };
        if unadjusted {
            return Ok(plain);
        }
        match select_scenario(&self.problem)? {
            ScenarioSelection::NotApplicable(NotApplicable::PositiveUnadjusted) => Ok(plain),
            _ => Ok(TestProcedure::Adjusted(build_adjusted(&self.problem, &self.config)?)),
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn procedure_json(proc: &TestProcedure) -> Value {
    match proc {
        TestProcedure::Unadjusted { .. } => json!({ "kind": "unadjusted" }),
        TestProcedure::Adjusted(a) => json!({ "kind": "adjusted", "scenario": a.scenario.number(), "k_bar": a.k_bar() }),
    }
}

fn curve_artifact(out: &Path, curve: &SizePowerCurve, report: &Value) -> Result<()> {
    let text = if out.extension().is_some_and(|e| e == "csv") {
        curve.to_csv()
    } else {
        serde_json::to_string_pretty(report).map_err(|e| Error::Input(e.to_string()))?
    };
    std::fs::write(out, text)?;
    Ok(())
}

/// Executes one subcommand, returning the JSON report.
pub fn execute(command: &Command) -> Result<Value> {
    match command {
        Command::Estimate(args) => {
            let run = Run::resolve(args)?;
            let outcome = assemble_omega(&run.problem, run.y()?, &run.config)?;
            Ok(match outcome {
                OmegaOutcome::WellDefined(est) => json!({
                    "status": "defined",
                    "omega": rows(&est.omega),
                    "bandwidth": est.m,
                    "psi": rows(&est.psi),
                    "definiteness": est.definiteness(),
                }),
                OmegaOutcome::Undefined(reason) => json!({ "status": "undefined", "reason": reason }),
            })
        }
        Command::Test(args) => {
            let run = Run::resolve(args)?;
            let c = run.c()?;
            let res = test_statistic(&run.problem, run.y()?, &run.config)?;
            Ok(json!({ "t": res.t, "defined": res.defined, "reject": res.reject(c), "C": c }))
        }
        Command::Adjust(args) => {
            let run = Run::resolve(args)?;
            let c = run.c()?;
            let adj = build_adjusted(&run.problem, &run.config)?;
            let res = TestProcedure::Adjusted(adj.clone()).statistic(run.y()?)?;
            Ok(json!({
                "t": res.t,
                "defined": res.defined,
                "reject": res.reject(c),
                "C": c,
                "scenario": adj.scenario.number(),
            }))
        }
        Command::Diagnose(args) => {
            let run = Run::resolve(args)?;
            let opts = DiagnoseOptions { exclude_minus: run.epsilon.is_some(), seed: run.seed, ..Default::default() };
            let report = diagnose_with(&run.problem, &run.config, run.c()?, opts)?;
            serde_json::to_value(report).map_err(|e| Error::Input(e.to_string()))
        }
        Command::Calibrate(args) => {
            let run = Run::resolve(args)?;
            let delta = run.delta.unwrap_or(0.05);
            let proc = run.procedure(args.unadjusted)?;
            let mc = run.mc()?;
            let cal = montecarlo::calibrate_critical_value(&proc, &mc, delta)?;
            let validation_mc = McConfig { seed: run.seed.wrapping_add(1), ..mc };
            let validation = montecarlo::empirical_size(&proc, &validation_mc, cal.critical_value)?;
            let report = json!({
                "C": cal.critical_value,
                "delta": delta,
                "procedure": procedure_json(&proc),
                "reps": run.reps,
                "seed": run.seed,
                "calibration": cal.size,
                "validation": { "seed": validation_mc.seed, "size": validation },
            });
            if let Some(out) = &args.out {
                curve_artifact(out, &validation.curve, &report)?;
            }
            Ok(report)
        }
        Command::Study(args) => {
            let run = Run::resolve(args)?;
            let proc = run.procedure(args.unadjusted)?;
            let mc = run.mc()?;
            let c = match (run.critical_value, run.delta) {
                (Some(c), _) => c,
                (None, Some(delta)) => montecarlo::calibrate_critical_value(&proc, &mc, delta)?.critical_value,
                (None, None) => return Err(Error::Config("study needs --C or --delta".into())),
            };
            let size = montecarlo::empirical_size(&proc, &mc, c)?;
            let power = montecarlo::power_curve(&proc, &mc, c, &run.distances)?;
            let report = json!({
                "C": c,
                "procedure": procedure_json(&proc),
                "reps": run.reps,
                "seed": run.seed,
                "size": size,
                "curve": power,
            });
            if let Some(out) = &args.out {
                curve_artifact(out, &power, &report)?;
            }
            Ok(report)
        }
    }
}

fn args_of(command: &Command) -> &RunArgs {
    match command {
        Command::Estimate(a)
        | Command::Test(a)
        | Command::Adjust(a)
        | Command::Diagnose(a)
        | Command::Calibrate(a)
        | Command::Study(a) => a,
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotApplicable(_) | Error::AugmentationImpossible { .. } => 3,
        Error::Contract(_) => 1,
        _ => 2,
    }
}

fn summary(value: &Value) -> String {
    match value {
        Value::Object(map) => map
            .iter()
            .filter(|(_, v)| !v.is_array() && !v.is_object())
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join("\n"),
        other => other.to_string(),
    }
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let args = args_of(&cli.command);
    match execute(&cli.command) {
        Ok(value) => {
            if let (Some(out), Command::Estimate(_) | Command::Test(_) | Command::Adjust(_) | Command::Diagnose(_)) =
                (&args.out, &cli.command)
            {
                if let Err(e) = std::fs::write(out, serde_json::to_string_pretty(&value).unwrap_or_default()) {
                    eprintln!("error: cannot write '{}': {e}", out.display());
                    return 2;
                }
            }
            if args.json {
                println!("{value}");
            } else {
                println!("{}", summary(&value));
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
