//! Command-line front end. [`run`] parses arguments, computes, and returns
//! the exit code and emitted document without touching the process.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use clusterhte::api::{Envelope, ErrorBody, ErrorCode};
use clusterhte::closedform;
use clusterhte::correlation::{CovariateCorrelation, OutcomeCorrelation};
use clusterhte::designs::{self, ArmParam, ArmParams, DesignFamily, DesignSpec, RandomizationLevel, Sampling};
use clusterhte::engine::{CovariateEffect, CovariateLevel, CovariateModel, OutcomeModel};
use clusterhte::montecarlo;
use clusterhte::solver::{
    self, Backend, BandParameter, DfMode, IccBand, SolveRequest, SolveResult, SweepAxis, SweepRange, SweepRequest,
    SweepSeries, Target,
};

pub const FORMAT_ENV: &str = "CLUSTERHTE_FORMAT";

#[derive(Debug, Parser)]
#[command(name = "clusterhte", version, about = "Power and sample size for HTE analyses in cluster-randomized trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_enum, env = FORMAT_ENV, default_value = "human")]
    pub format: Format,
    /// Write the document here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Power at given clusters, cluster size and effect.
    Power(ModelArgs),
    /// Minimal number of clusters.
    SolveN(ModelArgs),
    /// Minimal cluster-period size.
    SolveM(ModelArgs),
    /// Minimal detectable effect.
    SolveDelta(ModelArgs),
    /// Plot-ready series.
    Sweep(SweepArgs),
    /// Check inputs without solving.
    Validate(ModelArgs),
    /// Generate or check design CSV files.
    #[command(subcommand)]
    Design(DesignCommand),
    /// Empirical power by simulation.
    Simulate(SimulateArgs),
    /// Closed-form conformance table.
    Conformance,
}

#[derive(Debug, Subcommand)]
pub enum DesignCommand {
    Gen(DesignArgs),
    Check {
        #[arg(long = "design-csv")]
        design_csv: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    CrossSectional,
    ClosedCohort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariableType {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Individual,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DfArg {
    Normal,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Engine,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EffectArg {
    Pooled,
    PeriodSpecific,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    MVsPower,
    NVsPower,
    MVsN,
    DeltaVsPower,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// parallel, parallel-by-arm, three-level, crxo, stepped-wedge, irgt, custom
    #[arg(long, default_value = "parallel")]
    pub design: String,
    #[arg(long)]
    pub periods: Option<usize>,
    #[arg(long)]
    pub sequences: Option<usize>,
    /// Number of clusters `n`.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub pi: f64,
    #[arg(long, value_enum, default_value = "cross-sectional")]
    pub sampling: SamplingArg,
    /// Subclusters per cluster (three-level).
    #[arg(long)]
    pub subclusters: Option<usize>,
    #[arg(long)]
    pub randomize_subclusters: bool,
    /// Treatment-arm `m,icc,sd` (by-arm and IRGT designs).
    #[arg(long)]
    pub arm_treatment: Option<String>,
    /// Control-arm `m,icc,sd` (by-arm and IRGT designs).
    #[arg(long)]
    pub arm_control: Option<String>,
    #[arg(long = "design-csv")]
    pub design_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Cluster-period size `m`.
    #[arg(long)]
    pub cluster_size: Option<usize>,
    #[arg(long, value_enum, default_value = "continuous")]
    pub outcome_type: VariableType,
    #[arg(long, conflicts_with = "outcome_prevalence")]
    pub outcome_sd: Option<f64>,
    #[arg(long)]
    pub outcome_prevalence: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub icc_outcome: f64,
    #[arg(long)]
    pub cac_outcome: Option<f64>,
    /// Same-individual ICC for closed cohorts.
    #[arg(long)]
    pub icc0_outcome: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub icc_covariate: f64,
    #[arg(long)]
    pub cac_covariate: Option<f64>,
    #[arg(long, value_enum, default_value = "continuous")]
    pub covariate_type: VariableType,
    #[arg(long)]
    pub prevalence: Option<f64>,
    #[arg(long, conflicts_with = "prevalence")]
    pub covariate_sd: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub covariate_mean: f64,
    #[arg(long, value_enum, default_value = "individual")]
    pub covariate_level: LevelArg,
    #[arg(long, value_enum)]
    pub covariate_effect: Option<EffectArg>,
    #[arg(long, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub standardized: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub power: Option<f64>,
    #[arg(long, value_enum, default_value = "normal")]
    pub df: DfArg,
    #[arg(long, value_enum, default_value = "engine")]
    pub backend: BackendArg,
    /// `lo,hi` outcome ICC sensitivity band.
    #[arg(long)]
    pub icc_outcome_range: Option<String>,
    /// `lo,hi` covariate ICC sensitivity band.
    #[arg(long)]
    pub icc_covariate_range: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// `from,to[,step]`.
    #[arg(long, allow_hyphen_values = true)]
    pub range: String,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write one CSV row per replicate here.
    #[arg(long)]
    pub replicates_csv: Option<PathBuf>,
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Failure {
    body: ErrorBody,
}

impl Failure {
    fn validation(field: &str, message: impl Into<String>) -> Self {
        Failure { body: ErrorBody::new(ErrorCode::Validation, message).field(field) }
    }

    fn parse(field: &str, message: impl Into<String>) -> Self {
        Failure { body: ErrorBody::new(ErrorCode::Parse, message).field(field) }
    }
}

impl<E> From<&E> for Failure
where
    for<'a> &'a E: Into<ErrorBody>,
{
    fn from(e: &E) -> Self {
        Failure { body: e.into() }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, S>(argv: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ErrorCode::Parse.exit_code() } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let format = cli.format;
    let result = execute(&cli);
    let (code, doc, err) = match result {
        Ok((doc, code)) => (code, doc, String::new()),
        Err(f) => {
            let code = f.body.code.exit_code();
            match format {
                Format::Json => (code, json(&Envelope::<()>::error(f.body)), String::new()),
                _ => {
                    let field = f.body.field.as_deref().map(|x| format!(" (--{})", flag_for(x))).unwrap_or_default();
                    (code, String::new(), format!("error{field}: {}\n", f.body.message))
                }
            }
        }
    };
    if let Some(path) = &cli.output {
        if let Err(e) = std::fs::write(path, &doc) {
            return Outcome { code: 1, stdout: String::new(), stderr: format!("cannot write {}: {e}\n", path.display()) };
        }
        return Outcome { code, stdout: String::new(), stderr: err };
    }
    Outcome { code, stdout: doc, stderr: err }
}

/// Flag name for a request field path.
fn flag_for(field: &str) -> &str {
    match field {
        "n" => "clusters",
        "m" => "cluster-size",
        "alpha_level" => "alpha",
        "outcome_prevalence" => "outcome-prevalence",
        "outcome.sigma_yx" => "outcome-sd",
        "design_matrix" | "design_csv" => "design-csv",
        f if f.starts_with("outcome.correlation") => "icc-outcome",
        f if f.starts_with("covariate") => "icc-covariate",
        f => f,
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn execute(cli: &Cli) -> CliResult<(String, i32)> {
    match &cli.command {
        Command::Power(a) => solve_command(a, Target::Power, cli.format),
        Command::SolveN(a) => solve_command(a, Target::N, cli.format),
        Command::SolveM(a) => solve_command(a, Target::M, cli.format),
        Command::SolveDelta(a) => solve_command(a, Target::Delta, cli.format),
        Command::Sweep(a) => sweep_command(a, cli.format),
        Command::Validate(a) => validate_command(a, cli.format),
        Command::Design(DesignCommand::Gen(a)) => design_gen(a, cli.format),
        Command::Design(DesignCommand::Check { design_csv }) => design_check(design_csv, cli.format),
        Command::Simulate(a) => simulate_command(a, cli.format),
        Command::Conformance => {
            let table = closedform::build_conformance_table();
            let doc = match cli.format {
                Format::Json => json(&Envelope::ok(&table)),
                _ => table.to_markdown(),
            };
            Ok((doc, 0))
        }
    }
}

fn family_for(name: &str, periods: usize) -> Option<DesignFamily> {
    let key = name.replace('-', "_");
    let family = match key.as_str() {
        "parallel" if periods > 1 => DesignFamily::MultiPeriodParallel,
        "parallel" | "parallel_two_level" => DesignFamily::ParallelTwoLevel,
        "parallel_by_arm" => DesignFamily::ParallelTwoLevelByArm,
        "three_level" => DesignFamily::ParallelThreeLevel,
        "crxo" if periods > 2 => DesignFamily::CrxoMultiPeriod,
        "crxo" => DesignFamily::CrxoTwoPeriod,
        "sw" => DesignFamily::SteppedWedge,
        other => DesignFamily::from_name(other)?,
    };
    Some(family)
}

fn arm(flag: &str, text: &str) -> CliResult<ArmParam> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Failure::parse(flag, format!("--{flag} expects m,icc,sd; got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(ArmParam {
        m: parts[0].parse().map_err(|_| bad())?,
        alpha1: parts[1].parse().map_err(|_| bad())?,
        sigma: parts[2].parse().map_err(|_| bad())?,
    })
}

fn read_design_csv(path: &PathBuf) -> CliResult<designs::TreatmentMatrix> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::parse("design_csv", format!("cannot read {}: {e}", path.display())))?;
    designs::parse_csv(&text).map_err(|e| Failure::from(&e))
}

/// Design spec plus custom matrix from the design flags.
pub fn design_from_args(a: &DesignArgs) -> Result<(DesignSpec, Option<designs::TreatmentMatrix>), ErrorBody> {
    design_spec(a).map_err(|f| f.body)
}

fn design_spec(a: &DesignArgs) -> CliResult<(DesignSpec, Option<designs::TreatmentMatrix>)> {
    let matrix = a.design_csv.as_ref().map(read_design_csv).transpose()?;
    let periods = a.periods.or(matrix.as_ref().map(|m| m.periods())).unwrap_or(1);
    let family = if matrix.is_some() {
        DesignFamily::Custom
    } else {
        family_for(&a.design, periods)
            .ok_or_else(|| Failure::validation("design", format!("unknown design {:?}", a.design)))?
    };
    let periods = match family {
        DesignFamily::CrxoTwoPeriod => 2,
        f if f.is_single_period() => 1,
        _ => periods,
    };
    let sequences = match family {
        DesignFamily::SteppedWedge => a.sequences.unwrap_or(periods.saturating_sub(1).max(1)),
        DesignFamily::Custom => matrix.as_ref().map_or(1, |m| m.sequences()),
        _ => a.sequences.unwrap_or(2),
    };
    let arm_params = match (&a.arm_treatment, &a.arm_control) {
        (Some(t), Some(c)) => Some(ArmParams { treatment: arm("arm-treatment", t)?, control: arm("arm-control", c)? }),
        (None, None) => None,
        _ => return Err(Failure::validation("arm_params", "give both --arm-treatment and --arm-control")),
    };
    let spec = DesignSpec {
        family,
        periods,
        sequences,
        pi: a.pi,
        sampling: match a.sampling {
            SamplingArg::CrossSectional => Sampling::CrossSectional,
            SamplingArg::ClosedCohort => Sampling::ClosedCohort,
        },
        n_total: a.clusters.or(matrix.as_ref().map(|m| m.n_total()).filter(|_| a.clusters.is_some())).unwrap_or(0),
        n_sub: a.subclusters,
        randomization_level: if a.randomize_subclusters {
            RandomizationLevel::Subcluster
        } else {
            RandomizationLevel::Cluster
        },
        arm_params,
    };
    Ok((spec, matrix))
}

fn band(flag: &str, text: &str, parameter: BandParameter) -> CliResult<IccBand> {
    let bad = || Failure::parse(flag, format!("--{flag} expects lo,hi; got {text:?}"));
    let v: Vec<f64> = text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    match v.as_slice() {
        [lo, hi] if lo <= hi => Ok(IccBand { parameter, min: *lo, max: *hi }),
        _ => Err(bad()),
    }
}

/// Solve request equivalent to the model flags.
pub fn request_from_args(a: &ModelArgs, target: Target) -> Result<SolveRequest, ErrorBody> {
    build_request(a, target).map_err(|f| f.body)
}

fn build_request(a: &ModelArgs, target: Target) -> CliResult<SolveRequest> {
    let (design, matrix) = design_spec(&a.design)?;
    let groups = match design.family {
        DesignFamily::ParallelThreeLevel => design.n_sub.unwrap_or(1),
        _ => design.periods,
    };
    let cohort = design.sampling == Sampling::ClosedCohort;
    let corr_err = |field: &str, e: clusterhte::correlation::CorrelationError| Failure::validation(field, e.to_string());
    let outcome_corr = if groups <= 1 {
        OutcomeCorrelation::exchangeable(a.icc_outcome)
    } else if cohort || a.icc0_outcome.is_some() {
        let a0 = a
            .icc0_outcome
            .ok_or_else(|| Failure::validation("icc0_outcome", "closed cohorts need --icc0-outcome"))?;
        OutcomeCorrelation::block_cac(a0, a.icc_outcome, a.cac_outcome.unwrap_or(1.0))
            .map_err(|e| corr_err("cac_outcome", e))?
    } else {
        match a.cac_outcome {
            Some(c) => OutcomeCorrelation::nested_cac(a.icc_outcome, c).map_err(|e| corr_err("cac_outcome", e))?,
            None => OutcomeCorrelation::exchangeable(a.icc_outcome),
        }
    };
    let covariate_corr = if a.covariate_level == LevelArg::Cluster {
        CovariateCorrelation::cluster_level()
    } else if a.icc_covariate == 0.0 && a.cac_covariate.is_none() {
        CovariateCorrelation::independent()
    } else if groups > 1 && cohort {
        CovariateCorrelation::cohort_time_invariant(a.icc_covariate)
    } else if groups > 1 && a.cac_covariate.is_some() {
        CovariateCorrelation::nested_cac(a.icc_covariate, a.cac_covariate.unwrap_or(1.0))
            .map_err(|e| corr_err("cac_covariate", e))?
    } else {
        CovariateCorrelation::exchangeable(a.icc_covariate)
    };
    let mut covariate = match a.covariate_type {
        VariableType::Binary => {
            let p = a
                .prevalence
                .ok_or_else(|| Failure::validation("prevalence", "binary covariates need --prevalence"))?;
            CovariateModel::binary(p, covariate_corr)
        }
        VariableType::Continuous => {
            CovariateModel::continuous(a.covariate_mean, a.covariate_sd.unwrap_or(1.0), covariate_corr)
        }
    };
    if a.covariate_level == LevelArg::Cluster {
        covariate.level = CovariateLevel::Cluster;
    }
    let outcome_prevalence = match a.outcome_type {
        VariableType::Binary => Some(
            a.outcome_prevalence
                .ok_or_else(|| Failure::validation("outcome_prevalence", "binary outcomes need --outcome-prevalence"))?,
        ),
        VariableType::Continuous => a.outcome_prevalence,
    };
    let mut icc_bands = Vec::new();
    if let Some(r) = &a.icc_outcome_range {
        icc_bands.push(band("icc-outcome-range", r, BandParameter::OutcomeIcc)?);
    }
    if let Some(r) = &a.icc_covariate_range {
        icc_bands.push(band("icc-covariate-range", r, BandParameter::CovariateIcc)?);
    }
    Ok(SolveRequest {
        n: design.n_total.gt(&0).then_some(design.n_total),
        design,
        design_matrix: matrix,
        outcome: OutcomeModel::new(a.outcome_sd.unwrap_or(1.0), outcome_corr),
        outcome_prevalence,
        covariate,
        target,
        m: a.cluster_size,
        delta: a.delta,
        power: a.power,
        alpha_level: a.alpha,
        df_mode: match a.df {
            DfArg::Normal => DfMode::Normal,
            DfArg::T => DfMode::TNMinus2,
        },
        standardized: a.standardized,
        covariate_effect: a.covariate_effect.map(|e| match e {
            EffectArg::Pooled => CovariateEffect::Pooled,
            EffectArg::PeriodSpecific => CovariateEffect::PeriodSpecific,
        }),
        backend: match a.backend {
            BackendArg::Engine => Backend::Engine,
            BackendArg::ClosedForm => Backend::ClosedForm,
        },
        icc_bands,
    })
}

fn solve_command(a: &ModelArgs, target: Target, format: Format) -> CliResult<(String, i32)> {
    let req = build_request(a, target)?;
    let result = solver::solve(&req).map_err(|e| Failure::from(&e))?;
    let doc = match format {
        Format::Json => json(&Envelope::ok(&result)),
        Format::Csv => result_csv(&result),
        Format::Human => result_human(&result),
    };
    Ok((doc, 0))
}

fn label(target: Target) -> &'static str {
    match target {
        Target::Power => "power",
        Target::N => "clusters (n)",
        Target::M => "cluster-period size (m)",
        Target::Delta => "effect (delta)",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(
        || "not estimable".into(),
        |x| if x != 0.0 && x.abs() < 1e-3 { format!("{x:.6e}") } else { format!("{x:.6}") },
    )
}

fn result_human(r: &SolveResult) -> String {
    let mut s = String::new();
    let solved = match r.target {
        Target::N | Target::M => format!("{}", r.solved_value),
        _ => format!("{:.6}", r.solved_value),
    };
    let _ = writeln!(s, "{}: {solved}", label(r.target));
    if r.target != Target::N {
        let _ = writeln!(s, "{}: {}", label(Target::N), r.n);
    }
    if r.target != Target::M {
        let _ = writeln!(s, "{}: {}", label(Target::M), r.m);
    }
    if r.target != Target::Delta {
        let _ = writeln!(s, "{}: {}", label(Target::Delta), r.delta);
    }
    if r.target != Target::Power {
        let _ = writeln!(s, "achieved power: {:.6}", r.achieved_power);
    }
    let _ = writeln!(s, "alpha: {}", r.alpha_level);
    let v = &r.variance;
    let _ = writeln!(s, "Var(HTE estimator): {}", fmt_opt(v.var_hte_total));
    let _ = writeln!(s, "Var(ATE estimator): {}", fmt_opt(v.var_ate_total));
    let _ = writeln!(s, "n x Var(HTE): {}", fmt_opt(v.sigma2_hte_norm));
    let _ = writeln!(s, "HTE design effect: {}", fmt_opt(v.design_effect_hte));
    let _ = writeln!(s, "backend: {}", r.backend);
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    for b in &r.bands {
        let _ = writeln!(
            s,
            "band {} {} {}: {}",
            serde_json::to_value(b.parameter).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
            b.level,
            b.value,
            b.solved_value.map_or("unreachable".into(), |x| x.to_string())
        );
    }
    s
}

fn result_csv(r: &SolveResult) -> String {
    let mut s = String::from("quantity,value\n");
    let rows: [(&str, Option<f64>); 10] = [
        ("solved_value", Some(r.solved_value)),
        ("n", Some(r.n)),
        ("m", Some(r.m as f64)),
        ("delta", Some(r.delta)),
        ("achieved_power", Some(r.achieved_power)),
        ("alpha_level", Some(r.alpha_level)),
        ("var_hte_total", r.variance.var_hte_total),
        ("var_ate_total", r.variance.var_ate_total),
        ("sigma2_hte_norm", r.variance.sigma2_hte_norm),
        ("design_effect_hte", r.variance.design_effect_hte),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{}", v.map(|x| x.to_string()).unwrap_or_default());
    }
    s
}

fn parse_range(text: &str) -> CliResult<SweepRange> {
    let bad = || Failure::parse("range", format!("--range expects from,to[,step]; got {text:?}"));
    let v: Vec<f64> = text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
    match v.as_slice() {
        [from, to] => Ok(SweepRange { from: *from, to: *to, step: 1.0 }),
        [from, to, step] => Ok(SweepRange { from: *from, to: *to, step: *step }),
        _ => Err(bad()),
    }
}

/// Sweep request equivalent to the sweep flags.
pub fn sweep_request_from_args(a: &SweepArgs) -> Result<SweepRequest, ErrorBody> {
    build_sweep(a).map_err(|f| f.body)
}

fn build_sweep(a: &SweepArgs) -> CliResult<SweepRequest> {
    let axis = match a.axis {
        AxisArg::MVsPower => SweepAxis::MVsPower,
        AxisArg::NVsPower => SweepAxis::NVsPower,
        AxisArg::MVsN => SweepAxis::MVsN,
        AxisArg::DeltaVsPower => SweepAxis::DeltaVsPower,
    };
    let target = if axis == SweepAxis::MVsN { Target::N } else { Target::Power };
    Ok(SweepRequest { base: build_request(&a.model, target)?, axis, range: parse_range(&a.range)? })
}

/// CSV with columns `x,y,band_label`; unreachable points leave `y` empty.
pub fn series_csv(series: &[SweepSeries]) -> String {
    let mut s = String::from("x,y,band_label\n");
    for ser in series {
        for p in &ser.points {
            let _ = writeln!(s, "{},{},{}", p.x, p.y.map(|y| y.to_string()).unwrap_or_default(), ser.label);
        }
    }
    s
}

fn sweep_command(a: &SweepArgs, format: Format) -> CliResult<(String, i32)> {
    let req = build_sweep(a)?;
    let series = solver::sweep(&req).map_err(|e| Failure::from(&e))?;
    let doc = match format {
        Format::Json => json(&Envelope::ok(&series)),
        _ => series_csv(&series),
    };
    Ok((doc, 0))
}

#[derive(Serialize)]
struct ValidationReport {
    valid: bool,
    warnings: Vec<String>,
}

fn validate_command(a: &ModelArgs, format: Format) -> CliResult<(String, i32)> {
    let req = build_request(a, Target::Power)?;
    let warnings = solver::validate_model(&req).map_err(|e| Failure::from(&e))?;
    let report = ValidationReport { valid: true, warnings };
    let doc = match format {
        Format::Json => json(&Envelope::ok(&report)),
        _ => {
            let mut s = String::from("valid\n");
            for w in &report.warnings {
                let _ = writeln!(s, "warning: {w}");
            }
            s
        }
    };
    Ok((doc, 0))
}

fn design_gen(a: &DesignArgs, format: Format) -> CliResult<(String, i32)> {
    let (spec, matrix) = design_spec(a)?;
    let matrix = match matrix {
        Some(m) => m,
        None => {
            if spec.n_total == 0 {
                return Err(Failure::validation("n", "--clusters is required"));
            }
            designs::generate(&spec).map_err(|e| Failure::validation("design", e.to_string()))?
        }
    };
    let doc = match format {
        Format::Json => json(&Envelope::ok(&matrix)),
        _ => {
            let mut s = designs::emit_csv(&matrix);
            s.push('\n');
            s
        }
    };
    Ok((doc, 0))
}

#[derive(Serialize)]
struct DesignSummary<'a> {
    sequences: usize,
    periods: usize,
    n_clusters: usize,
    treated_cells: usize,
    matrix: &'a designs::TreatmentMatrix,
}

fn design_check(path: &PathBuf, format: Format) -> CliResult<(String, i32)> {
    let matrix = read_design_csv(path)?;
    let summary = DesignSummary {
        sequences: matrix.sequences(),
        periods: matrix.periods(),
        n_clusters: matrix.n_total(),
        treated_cells: matrix.rows.iter().flatten().filter(|&&x| x == 1).count(),
        matrix: &matrix,
    };
    let doc = match format {
        Format::Json => json(&Envelope::ok(&summary)),
        _ => {
            let mut s = format!(
                "ok: {} sequences x {} periods, {} clusters, {} treated cells\n",
                summary.sequences, summary.periods, summary.n_clusters, summary.treated_cells
            );
            for row in &matrix.rows {
                let cells: Vec<String> = row.iter().map(u8::to_string).collect();
                let _ = writeln!(s, "{}", cells.join(" "));
            }
            s
        }
    };
    Ok((doc, 0))
}

fn simulate_command(a: &SimulateArgs, format: Format) -> CliResult<(String, i32)> {
    let req = build_request(&a.model, Target::Power)?;
    let delta = req.delta.unwrap_or(0.0);
    let result = montecarlo::empirical_power(&req, delta, a.reps, a.seed).map_err(|e| Failure::from(&e))?;
    if let Some(path) = &a.replicates_csv {
        std::fs::write(path, montecarlo::replicates_csv(&result.replicates)).map_err(|e| {
            Failure::validation("replicates_csv", format!("cannot write {}: {e}", path.display()))
        })?;
    }
    let doc = match format {
        Format::Json => json(&Envelope::ok(&result)),
        Format::Csv => format!(
            "rate,mc_se,reps,seed,true_delta,analytic_power\n{},{},{},{},{},{}\n",
            result.rate,
            result.mc_se,
            result.reps,
            result.seed,
            result.true_delta,
            result.analytic_power.map(|p| p.to_string()).unwrap_or_default()
        ),
        Format::Human => format!(
            "empirical power: {:.4} (MC SE {:.4}, {} replicates, seed {})\nanalytic power: {}\n",
            result.rate,
            result.mc_se,
            result.reps,
            result.seed,
            fmt_opt(result.analytic_power)
        ),
    };
    Ok((doc, 0))
}
