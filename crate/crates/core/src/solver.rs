//! Power, sample-size, cluster-size and effect-size solvers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::closedform::{self, BlockIcc, ClosedFormError, IrgtArm, NestedIcc};
use crate::correlation::{
    has_hard, validate_covariate, validate_outcome, CovariateKind, Finding, OutcomeKind, DEFAULT_MAX_DIMENSION,
};
use crate::designs::{DesignError, DesignFamily, DesignSpec, Sampling, TreatmentMatrix};
use crate::engine::{
    design_variance, CovariateEffect, CovariateLevel, CovariateModel, EngineError, EngineOptions, OutcomeModel,
    VarianceReport,
};

/// Largest number of clusters `solve_n` will consider.
pub const DEFAULT_MAX_CLUSTERS: usize = 1_000_000;
/// Largest number of points in one sweep series.
pub const MAX_SWEEP_POINTS: usize = 2000;
const ASYMPTOTIC_M: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Power,
    N,
    M,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfMode {
    #[default]
    Normal,
    #[serde(alias = "t")]
    TNMinus2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Engine,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandParameter {
    OutcomeIcc,
    CovariateIcc,
}

/// Sensitivity range for one ICC; the assumed value comes from the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccBand {
    pub parameter: BandParameter,
    pub min: f64,
    pub max: f64,
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRequest {
    pub design: DesignSpec,
    #[serde(default)]
    pub design_matrix: Option<TreatmentMatrix>,
    pub outcome: OutcomeModel<f64>,
    /// Marginal prevalence of a binary outcome; sets `σ_y|x = √(p(1-p))`.
    #[serde(default)]
    pub outcome_prevalence: Option<f64>,
    pub covariate: CovariateModel<f64>,
    pub target: Target,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub power: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha_level: f64,
    #[serde(default)]
    pub df_mode: DfMode,
    /// Fixes `σ_y|x = 1`.
    #[serde(default)]
    pub standardized: bool,
    #[serde(default)]
    pub covariate_effect: Option<CovariateEffect>,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub icc_bands: Vec<IccBand>,
}

impl SolveRequest {
    pub fn new(
        design: DesignSpec,
        outcome: OutcomeModel<f64>,
        covariate: CovariateModel<f64>,
        target: Target,
    ) -> Self {
        Self {
            design,
            design_matrix: None,
            outcome,
            outcome_prevalence: None,
            covariate,
            target,
            n: None,
            m: None,
            delta: None,
            power: None,
            alpha_level: 0.05,
            df_mode: DfMode::Normal,
            standardized: false,
            covariate_effect: None,
            backend: Backend::Engine,
            icc_bands: Vec::new(),
        }
    }

    pub fn n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn power(mut self, power: f64) -> Self {
        self.power = Some(power);
        self
    }

    pub fn with_target(&self, target: Target) -> Self {
        Self { target, ..self.clone() }
    }

    /// Outcome model after the standardization and binary-outcome rules.
    pub fn effective_outcome(&self) -> OutcomeModel<f64> {
        let sigma = if self.standardized {
            1.0
        } else if let Some(p) = self.outcome_prevalence {
            (p * (1.0 - p)).sqrt()
        } else {
            self.outcome.sigma_yx
        };
        OutcomeModel { sigma_yx: sigma, ..self.outcome }
    }

    pub(crate) fn known_n(&self) -> Option<usize> {
        self.n.or((self.design.n_total > 0).then_some(self.design.n_total))
    }

    /// Groups the cluster structure is spread over (periods or subclusters).
    fn groups(&self) -> usize {
        match self.design.family {
            DesignFamily::ParallelThreeLevel => self.design.n_sub.unwrap_or(1),
            DesignFamily::Custom => self.design_matrix.as_ref().map_or(self.design.periods, |m| m.periods()),
            _ => self.design.periods,
        }
    }

    fn max_m(&self) -> usize {
        (DEFAULT_MAX_DIMENSION / self.groups().max(1)).max(1)
    }

    pub(crate) fn engine_options(&self) -> EngineOptions {
        EngineOptions::with_effect(self.covariate_effect.unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("target not reachable: {message}")]
    Infeasible {
        message: String,
        #[doc = "Power at the search limit."]
        power_at_limit: Option<f64>,
        #[doc = "Limit of power as m grows without bound."]
        asymptotic_power: Option<f64>,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    ClosedForm(#[from] ClosedFormError),
}

impl From<DesignError> for SolveError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::InfeasibleAllocation { .. } | DesignError::Unbalanced { .. } => {
                SolveError::Validation { field: "design".into(), message: e.to_string() }
            }
            other => SolveError::Validation { field: "design".into(), message: other.to_string() },
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> SolveError {
    SolveError::Validation { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSeries {
    pub parameter: BandParameter,
    /// `min`, `assumed` or `max`.
    pub level: String,
    pub value: f64,
    pub solved_value: Option<f64>,
    pub achieved_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub target: Target,
    pub solved_value: f64,
    pub n: f64,
    pub m: usize,
    pub delta: f64,
    /// Power at `(n, m, delta)`.
    pub power: f64,
    pub achieved_power: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_target: Option<f64>,
    pub alpha_level: f64,
    pub df_mode: DfMode,
    pub variance: VarianceReport<f64>,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bands: Vec<BandSeries>,
}

/// Two-sided Wald power.
///
/// Normal mode: `Φ(|Δ|/√v − z_{1−α/2})`. t mode with `df = n − 2`: the
/// central t with shifted critical value, `F_t(|Δ|/√v − t_{1−α/2,df})`.
pub fn power_from_variance(delta: f64, var_total: f64, alpha: f64, df_mode: DfMode, n: f64) -> Result<f64, SolveError> {
    if !(var_total > 0.0) || !var_total.is_finite() {
        return Err(invalid("variance", "variance must be positive and finite"));
    }
    let ncp = delta.abs() / var_total.sqrt();
    match df_mode {
        DfMode::Normal => Ok(std_normal().cdf(ncp - normal_critical(alpha))),
        DfMode::TNMinus2 => {
            let t = t_dist(n)?;
            Ok(t.cdf(ncp + t.inverse_cdf(alpha / 2.0)))
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal quantile, polished by one Newton step on the CDF.
pub fn normal_quantile(p: f64) -> f64 {
    let d = std_normal();
    let z = d.inverse_cdf(p);
    if z.is_finite() {
        z - (d.cdf(z) - p) / d.pdf(z)
    } else {
        z
    }
}

/// Two-sided critical value `z_{1−α/2}`, taken from the lower tail.
pub fn normal_critical(alpha: f64) -> f64 {
    -normal_quantile(alpha / 2.0)
}

fn t_dist(n: f64) -> Result<StudentsT, SolveError> {
    let df = n - 2.0;
    if !(df > 0.0) {
        return Err(invalid("n", format!("t mode needs more than 2 clusters (df = n - 2 = {df})")));
    }
    Ok(StudentsT::new(0.0, 1.0, df).expect("valid t"))
}

/// `|Δ|` reaching `power`: `(q_{1−α/2} + q_power) √v`.
pub fn delta_for_power(var_total: f64, alpha: f64, power: f64, df_mode: DfMode, n: f64) -> Result<f64, SolveError> {
    let q = match df_mode {
        DfMode::Normal => normal_critical(alpha) + normal_quantile(power),
        DfMode::TNMinus2 => {
            let t = t_dist(n)?;
            t.inverse_cdf(power) - t.inverse_cdf(alpha / 2.0)
        }
    };
    Ok(q * var_total.sqrt())
}

/// Checks inputs the target needs; returns advisory findings.
pub fn validate_request(req: &SolveRequest) -> Result<Vec<String>, SolveError> {
    let need = |v: bool, field: &str| if v { Ok(()) } else { Err(invalid(field, "required for this target")) };
    match req.target {
        Target::Power => {
            need(req.known_n().is_some(), "n")?;
            need(req.m.is_some() || per_arm(req), "m")?;
            need(req.delta.is_some(), "delta")?;
        }
        Target::N => {
            need(req.m.is_some() || per_arm(req), "m")?;
            need(req.delta.is_some(), "delta")?;
            need(req.power.is_some(), "power")?;
            nonzero_delta(req)?;
        }
        Target::M => {
            need(req.known_n().is_some(), "n")?;
            need(req.delta.is_some(), "delta")?;
            need(req.power.is_some(), "power")?;
            nonzero_delta(req)?;
            if per_arm(req) {
                return Err(invalid("target", "per-arm designs fix m in arm_params; solve for n or power instead"));
            }
        }
        Target::Delta => {
            need(req.known_n().is_some(), "n")?;
            need(req.m.is_some() || per_arm(req), "m")?;
            need(req.power.is_some(), "power")?;
        }
    }
    validate_model(req)
}

/// Checks everything except the inputs a specific target needs; returns
/// advisory findings.
pub fn validate_model(req: &SolveRequest) -> Result<Vec<String>, SolveError> {
    if !(req.alpha_level > 0.0 && req.alpha_level < 1.0) {
        return Err(invalid("alpha_level", "must lie in (0, 1)"));
    }
    if let Some(p) = req.power {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("power", "must lie in (0, 1)"));
        }
    }
    if let Some(d) = req.delta {
        if !d.is_finite() {
            return Err(invalid("delta", "must be finite"));
        }
    }
    if let Some(m) = req.m {
        if m == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if m > req.max_m() {
            return Err(invalid("m", format!("m·J must not exceed {DEFAULT_MAX_DIMENSION}")));
        }
    }
    if let Some(p) = req.outcome_prevalence {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("outcome_prevalence", "must lie in (0, 1)"));
        }
    }
    if !req.standardized && req.outcome_prevalence.is_none() && !(req.outcome.sigma_yx > 0.0) {
        return Err(invalid("outcome.sigma_yx", "must be positive"));
    }
    if req.design.family == DesignFamily::Custom {
        let mat = req.design_matrix.as_ref().ok_or_else(|| invalid("design_matrix", "custom designs need a matrix"))?;
        TreatmentMatrix::new(mat.rows.clone(), mat.clusters_per_sequence.clone())
            .map_err(|e| invalid("design_matrix", e.to_string()))?;
    } else {
        req.design.validate()?;
    }
    req.covariate.validate().map_err(|e| invalid("covariate", e.to_string()))?;
    let groups = req.groups();
    let m_range = match req.m {
        Some(m) => (m, m),
        None => (1, req.max_m()),
    };
    let mut warnings = Vec::new();
    let mut collect = |findings: Vec<Finding>, prefix: &str| -> Result<(), SolveError> {
        if has_hard(&findings) {
            let f = findings.iter().find(|f| f.severity == crate::correlation::Severity::Hard).expect("hard");
            return Err(invalid(&format!("{prefix}.{}", f.parameter), f.message.clone()));
        }
        warnings.extend(findings.into_iter().map(|f| f.message));
        Ok(())
    };
    if !per_arm(req) {
        collect(validate_outcome(&req.outcome.correlation, m_range, groups), "outcome.correlation")?;
    }
    collect(validate_covariate(&req.covariate.correlation, m_range, groups), "covariate.correlation")?;
    Ok(warnings)
}

fn nonzero_delta(req: &SolveRequest) -> Result<(), SolveError> {
    if req.delta == Some(0.0) {
        return Err(invalid("delta", "must be non-zero to solve for a sample size"));
    }
    Ok(())
}

pub(crate) fn per_arm(req: &SolveRequest) -> bool {
    matches!(req.design.family, DesignFamily::Irgt | DesignFamily::ParallelTwoLevelByArm)
}

/// Per-cluster variance report at cluster-period size `m`.
pub fn variance_at(req: &SolveRequest, m: usize) -> Result<(VarianceReport<f64>, String), SolveError> {
    variance_with_options(req, m, &req.engine_options())
}

fn variance_with_options(
    req: &SolveRequest,
    m: usize,
    options: &EngineOptions,
) -> Result<(VarianceReport<f64>, String), SolveError> {
    let n = req.known_n().unwrap_or(1).max(1);
    let spec = req.design.with_n_total(n);
    let outcome = req.effective_outcome();
    match req.backend {
        Backend::Engine => {
            let r = design_variance(&spec, req.design_matrix.as_ref(), m, &outcome, &req.covariate, options)?;
            Ok((r, "engine".into()))
        }
        Backend::ClosedForm => {
            let (id, hte, ate) = closed_form_variance(req, m, &outcome)?;
            if !closedform::conformance().is_registered(id) {
                return Err(ClosedFormError::Unsupported(format!("{id} is not registered")).into());
            }
            let nf = n as f64;
            let sx2 = req.covariate.variance();
            let report = VarianceReport {
                n_clusters: nf,
                var_hte_total: Some(hte / nf),
                var_ate_total: ate.map(|a| a / nf),
                sigma2_hte_norm: Some(hte),
                sigma2_ate_norm: ate,
                design_effect_hte: ate.map(|a| hte * sx2 / a),
                estimable_ate: ate.is_some(),
                estimable_hte: true,
            };
            Ok((report, format!("closed_form:{id}")))
        }
    }
}

/// Registered closed form for the request, `(formula_id, hte, ate)`.
fn closed_form_variance(
    req: &SolveRequest,
    m: usize,
    outcome: &OutcomeModel<f64>,
) -> Result<(&'static str, f64, Option<f64>), SolveError> {
    let d = &req.design;
    let oc = &outcome.correlation;
    let cc = &req.covariate.correlation;
    let s = outcome.sigma_yx;
    let sx = req.covariate.variance().sqrt();
    let unsupported = |why: &str| -> SolveError { ClosedFormError::Unsupported(why.into()).into() };
    if req.covariate_effect == Some(CovariateEffect::Pooled) && d.periods > 1 {
        return Err(unsupported("closed forms assume period-specific covariate effects"));
    }
    match d.family {
        DesignFamily::ParallelTwoLevel => {
            if oc.kind != OutcomeKind::Exchangeable {
                return Err(unsupported("two-level form needs an exchangeable outcome"));
            }
            let rho = match cc.kind {
                CovariateKind::Independent => 0.0,
                CovariateKind::Exchangeable => cc.rho0,
                CovariateKind::ClusterLevelConstant => 1.0,
                _ => return Err(unsupported("two-level form needs an exchangeable covariate")),
            };
            let hte = closedform::hte_var_two_level(m, oc.alpha1, rho, d.pi, s, sx)?;
            let ate = closedform::ate_var_two_level(m, oc.alpha1, d.pi, s, sx)? * sx * sx;
            Ok(("hte_two_level", hte, Some(ate)))
        }
        DesignFamily::ParallelThreeLevel => {
            let ns = d.n_sub.unwrap_or(1);
            let nested = |k: OutcomeKind| matches!(k, OutcomeKind::NestedExchangeable | OutcomeKind::Exchangeable);
            if !nested(oc.kind) {
                return Err(unsupported("three-level form needs a nested outcome"));
            }
            let rhos = match cc.kind {
                CovariateKind::NestedExchangeable => NestedIcc::new(cc.rho1, cc.rho2),
                CovariateKind::Exchangeable => NestedIcc::new(cc.rho0, cc.rho0),
                CovariateKind::Independent => NestedIcc::new(0.0, 0.0),
                CovariateKind::ClusterLevelConstant => NestedIcc::new(1.0, 1.0),
                _ => return Err(unsupported("three-level form needs a nested covariate")),
            };
            let p = oc.pairwise();
            let alphas = NestedIcc::new(p.within_period, p.between_period);
            let v = closedform::hte_var_three_level(m, ns, alphas, rhos, d.pi, s, sx, d.randomization_level)?;
            let id = match d.randomization_level {
                crate::designs::RandomizationLevel::Cluster => "hte_three_level_cluster",
                crate::designs::RandomizationLevel::Subcluster => "hte_three_level_subcluster",
            };
            Ok((id, v, None))
        }
        DesignFamily::CrxoTwoPeriod | DesignFamily::CrxoMultiPeriod => {
            let p = oc.pairwise();
            if d.sampling == Sampling::ClosedCohort || oc.kind == OutcomeKind::BlockExchangeable {
                if cc.kind != CovariateKind::CohortTimeInvariant {
                    return Err(unsupported("cohort crossover form needs a time-invariant covariate"));
                }
                let a = BlockIcc::new(p.same_individual, p.within_period, p.between_period);
                let v = closedform::hte_var_crxo_cohort(m, d.periods, a, cc.rho0, d.pi, s, sx)?;
                Ok(("hte_crxo_cohort", v, None))
            } else {
                let rhos = match cc.kind {
                    CovariateKind::NestedExchangeable => NestedIcc::new(cc.rho1, cc.rho2),
                    CovariateKind::Exchangeable => NestedIcc::new(cc.rho0, cc.rho0),
                    CovariateKind::Independent => NestedIcc::new(0.0, 0.0),
                    CovariateKind::ClusterLevelConstant => NestedIcc::new(1.0, 1.0),
                    _ => return Err(unsupported("cross-sectional crossover form needs a nested covariate")),
                };
                let alphas = NestedIcc::new(p.within_period, p.between_period);
                let v = closedform::hte_var_crxo_cross_sectional(m, d.periods, alphas, rhos, d.pi, s, sx)?;
                Ok(("hte_crxo_cross_sectional", v, None))
            }
        }
        DesignFamily::Irgt => {
            let arms = d.arm_params.ok_or(DesignError::MissingArmParams)?;
            let arm = |a: crate::designs::ArmParam| IrgtArm { m: a.m, alpha1: a.alpha1, sigma: a.sigma };
            let level = req.covariate.level;
            let v = closedform::hte_var_irgt(arm(arms.treatment), arm(arms.control), d.pi, sx, level)?;
            let id = match level {
                CovariateLevel::Individual => "hte_irgt_individual",
                CovariateLevel::Cluster => "hte_irgt_cluster",
            };
            Ok((id, v, None))
        }
        _ => Err(unsupported("no registered closed form for this design; use the engine")),
    }
}

pub(crate) fn m_of(req: &SolveRequest) -> usize {
    if per_arm(req) {
        req.design.arm_params.map_or(1, |a| a.treatment.m)
    } else {
        req.m.unwrap_or(1)
    }
}

fn power_at(req: &SolveRequest, sigma2: f64, n: f64) -> Result<f64, SolveError> {
    power_from_variance(req.delta.unwrap_or(0.0), sigma2 / n, req.alpha_level, req.df_mode, n)
}

/// Smallest feasible `n` and the step between feasible values.
fn n_grid(req: &SolveRequest) -> (usize, usize) {
    let step = match (req.design.family, &req.design_matrix) {
        (DesignFamily::SteppedWedge, _) => req.design.sequences.max(1),
        _ => 1,
    };
    let min: usize = match req.df_mode {
        DfMode::Normal => 2,
        DfMode::TNMinus2 => 3,
    };
    (min.div_ceil(step) * step, step)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    req: &SolveRequest,
    solved: f64,
    n: f64,
    m: usize,
    delta: f64,
    report: VarianceReport<f64>,
    backend: String,
    warnings: Vec<String>,
) -> Result<SolveResult, SolveError> {
    let sigma2 = report.hte()?;
    let achieved = power_from_variance(delta, sigma2 / n, req.alpha_level, req.df_mode, n)?;
    Ok(SolveResult {
        target: req.target,
        solved_value: solved,
        n,
        m,
        delta,
        power: achieved,
        achieved_power: achieved,
        power_target: req.power,
        alpha_level: req.alpha_level,
        df_mode: req.df_mode,
        variance: report.at_n(n),
        backend,
        warnings,
        bands: Vec::new(),
    })
}

/// Power at the request's `n`, `m`, `Δ`.
pub fn solve_power(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    let warnings = validate_request(&req.with_target(Target::Power))?;
    let m = m_of(req);
    let n = req.known_n().expect("validated") as f64;
    let (report, backend) = variance_at(req, m)?;
    let delta = req.delta.expect("validated");
    let mut r = finish(req, 0.0, n, m, delta, report, backend, warnings)?;
    r.solved_value = r.achieved_power;
    Ok(r)
}

/// Minimal feasible number of clusters reaching the target power.
pub fn solve_n(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    let warnings = validate_request(&req.with_target(Target::N))?;
    let m = m_of(req);
    let (report, backend) = variance_at(req, m)?;
    let sigma2 = report.hte()?;
    let target = req.power.expect("validated");
    let delta = req.delta.expect("validated");
    let (min, step) = n_grid(req);
    let max = DEFAULT_MAX_CLUSTERS;
    let meets = |n: usize| -> Result<bool, SolveError> { Ok(power_at(req, sigma2, n as f64)? >= target) };
    let snap = |x: f64| -> usize {
        let k = (x / step as f64).ceil().max(1.0) as usize * step;
        k.max(min)
    };
    let mut n = match req.df_mode {
        DfMode::Normal => {
            let q = normal_critical(req.alpha_level) + normal_quantile(target);
            let raw = q * q * sigma2 / (delta * delta);
            if !raw.is_finite() || raw > max as f64 {
                return Err(SolveError::Infeasible {
                    message: format!("more than {max} clusters would be needed"),
                    power_at_limit: power_at(req, sigma2, max as f64).ok(),
                    asymptotic_power: None,
                });
            }
            snap(raw)
        }
        DfMode::TNMinus2 => {
            let mut hi = min;
            while !meets(hi)? {
                if hi >= max {
                    return Err(SolveError::Infeasible {
                        message: format!("more than {max} clusters would be needed"),
                        power_at_limit: power_at(req, sigma2, max as f64).ok(),
                        asymptotic_power: None,
                    });
                }
                hi = snap((hi * 2) as f64).min(snap(max as f64));
            }
            let mut lo = min;
            while lo < hi {
                let mid = snap(((lo + hi) / 2) as f64).min(hi);
                if mid == hi {
                    break;
                }
                if meets(mid)? {
                    hi = mid;
                } else {
                    lo = mid + step;
                }
            }
            hi.max(lo.min(hi))
        }
    };
    while !meets(n)? {
        n += step;
        if n > max {
            return Err(SolveError::Infeasible {
                message: format!("more than {max} clusters would be needed"),
                power_at_limit: None,
                asymptotic_power: None,
            });
        }
    }
    while n >= min + step && meets(n - step)? {
        n -= step;
    }
    let mut r = finish(req, n as f64, n as f64, m, delta, report, backend, warnings)?;
    r.solved_value = n as f64;
    Ok(r)
}

/// Power as `m` grows without bound.
pub fn asymptotic_power(req: &SolveRequest) -> Result<f64, SolveError> {
    let opts = EngineOptions { max_dimension: None, ..req.engine_options() };
    let (report, _) = variance_with_options(req, ASYMPTOTIC_M, &opts)?;
    let n = req.known_n().unwrap_or(1) as f64;
    power_at(req, report.hte()?, n)
}

/// Minimal cluster-period size reaching the target power.
pub fn solve_m(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    let warnings = validate_request(&req.with_target(Target::M))?;
    let n = req.known_n().expect("validated") as f64;
    let target = req.power.expect("validated");
    let delta = req.delta.expect("validated");
    let max_m = req.max_m();
    let seen = std::cell::RefCell::new(Vec::<(usize, f64)>::new());
    let eval = |m: usize| -> Result<f64, SolveError> {
        let (r, _) = variance_at(req, m)?;
        let p = power_at(req, r.hte()?, n)?;
        seen.borrow_mut().push((m, p));
        Ok(p)
    };
    let top = eval(max_m)?;
    if top < target {
        return Err(SolveError::Infeasible {
            message: format!(
                "power {top:.4} at the largest allowed m = {max_m} is below the target {target}; \
                 between-cluster variance limits the attainable power"
            ),
            power_at_limit: Some(top),
            asymptotic_power: asymptotic_power(req).ok(),
        });
    }
    let mut m = if eval(1)? >= target {
        1
    } else {
        let (mut lo, mut hi) = (1usize, max_m);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if eval(mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let mut sorted = seen.borrow().clone();
    sorted.sort_by_key(|x| x.0);
    let monotone = sorted.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12);
    let mut warnings = warnings;
    if !monotone {
        warnings.push("power was not monotone in m over the bisection path; used a linear scan".into());
        m = (1..=max_m)
            .find(|&k| eval(k).map(|p| p >= target).unwrap_or(false))
            .expect("top already meets the target");
    }
    let (report, backend) = variance_at(req, m)?;
    let mut r = finish(req, m as f64, n, m, delta, report, backend, warnings)?;
    r.solved_value = m as f64;
    Ok(r)
}

/// Smallest `|Δ|` detectable with the target power; signed like the
/// request's `delta` when given.
pub fn solve_delta(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    let warnings = validate_request(&req.with_target(Target::Delta))?;
    let m = m_of(req);
    let n = req.known_n().expect("validated") as f64;
    let (report, backend) = variance_at(req, m)?;
    let sigma2 = report.hte()?;
    let mag = delta_for_power(sigma2 / n, req.alpha_level, req.power.expect("validated"), req.df_mode, n)?;
    let delta = if req.delta.is_some_and(|d| d < 0.0) { -mag } else { mag };
    let mut r = finish(req, delta, n, m, delta, report, backend, warnings)?;
    r.solved_value = delta;
    Ok(r)
}

/// Dispatches on `req.target`, then evaluates any ICC bands.
pub fn solve(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    let mut result = solve_target(req)?;
    for band in &req.icc_bands {
        let assumed = band_value(req, band.parameter);
        for (level, value) in [("min", band.min), ("assumed", assumed), ("max", band.max)] {
            let r = solve_target(&with_band(req, band.parameter, value));
            result.bands.push(BandSeries {
                parameter: band.parameter,
                level: level.into(),
                value,
                solved_value: r.as_ref().ok().map(|r| r.solved_value),
                achieved_power: r.as_ref().ok().map(|r| r.achieved_power),
            });
        }
    }
    Ok(result)
}

fn solve_target(req: &SolveRequest) -> Result<SolveResult, SolveError> {
    match req.target {
        Target::Power => solve_power(req),
        Target::N => solve_n(req),
        Target::M => solve_m(req),
        Target::Delta => solve_delta(req),
    }
}

fn band_value(req: &SolveRequest, p: BandParameter) -> f64 {
    match p {
        BandParameter::OutcomeIcc => req.outcome.correlation.alpha1,
        BandParameter::CovariateIcc => match req.covariate.correlation.kind {
            CovariateKind::NestedExchangeable => req.covariate.correlation.rho1,
            _ => req.covariate.correlation.rho0,
        },
    }
}

/// Copy of `req` with one ICC replaced.
pub fn with_band(req: &SolveRequest, p: BandParameter, value: f64) -> SolveRequest {
    let mut r = req.clone();
    match p {
        BandParameter::OutcomeIcc => {
            let c = &mut r.outcome.correlation;
            let cac = c.cac();
            match c.kind {
                OutcomeKind::Exchangeable => *c = crate::correlation::OutcomeCorrelation::exchangeable(value),
                OutcomeKind::ArmSpecificExchangeable => {
                    c.alpha1 = value;
                    c.arm_values = c.arm_values.map(|(_, t)| (value, t));
                }
                _ => {
                    c.alpha1 = value;
                    if c.cac_mode {
                        c.alpha2 = cac * value;
                        if c.kind == OutcomeKind::NestedExchangeable {
                            c.alpha0 = c.alpha2;
                        }
                    }
                }
            }
        }
        BandParameter::CovariateIcc => {
            let c = &mut r.covariate.correlation;
            match c.kind {
                CovariateKind::NestedExchangeable => {
                    let cac = if c.rho1 == 0.0 { 1.0 } else { c.rho2 / c.rho1 };
                    c.rho1 = value;
                    c.rho0 = value;
                    if c.cac_mode {
                        c.rho2 = cac * value;
                    }
                }
                CovariateKind::Exchangeable => *c = crate::correlation::CovariateCorrelation::exchangeable(value),
                CovariateKind::CohortTimeInvariant => {
                    *c = crate::correlation::CovariateCorrelation::cohort_time_invariant(value)
                }
                _ => {}
            }
        }
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    MVsPower,
    NVsPower,
    MVsN,
    DeltaVsPower,
}

impl SweepAxis {
    pub fn from_name(s: &str) -> Option<Self> {
        match s.replace('-', "_").as_str() {
            "m_vs_power" => Some(Self::MVsPower),
            "n_vs_power" => Some(Self::NVsPower),
            "m_vs_n" => Some(Self::MVsN),
            "delta_vs_power" => Some(Self::DeltaVsPower),
            _ => None,
        }
    }
}

/// Inclusive range `from..=to` in increments of `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub from: f64,
    pub to: f64,
    #[serde(default = "one")]
    pub step: f64,
}

fn one() -> f64 {
    1.0
}

impl SweepRange {
    pub fn values(&self) -> Result<Vec<f64>, SolveError> {
        if !(self.step > 0.0) || !self.from.is_finite() || !self.to.is_finite() || self.to < self.from {
            return Err(invalid("range", "need from <= to and step > 0"));
        }
        let count = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        if count > MAX_SWEEP_POINTS {
            return Err(invalid("range", format!("at most {MAX_SWEEP_POINTS} points per series")));
        }
        Ok((0..count).map(|i| self.from + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    /// `None` where the target is unreachable.
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub label: String,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    #[serde(flatten)]
    pub base: SolveRequest,
    pub axis: SweepAxis,
    pub range: SweepRange,
}

fn sweep_series(req: &SolveRequest, axis: SweepAxis, xs: &[f64]) -> Vec<SweepPoint> {
    xs.par_iter()
        .map(|&x| {
            let y = match axis {
                SweepAxis::MVsPower => solve_power(&req.clone().m(x.round().max(1.0) as usize)).ok().map(|r| r.achieved_power),
                SweepAxis::NVsPower => solve_power(&req.clone().n(x.round().max(1.0) as usize)).ok().map(|r| r.achieved_power),
                SweepAxis::DeltaVsPower => solve_power(&req.clone().delta(x)).ok().map(|r| r.achieved_power),
                SweepAxis::MVsN => solve_n(&req.clone().m(x.round().max(1.0) as usize)).ok().map(|r| r.solved_value),
            };
            SweepPoint { x, y }
        })
        .collect()
}

/// Plot-ready series; one per band level when ICC bands are requested.
pub fn sweep(req: &SweepRequest) -> Result<Vec<SweepSeries>, SolveError> {
    let xs = req.range.values()?;
    let mut base = req.base.clone();
    if base.delta.is_none() && req.axis != SweepAxis::DeltaVsPower {
        return Err(invalid("delta", "required for this sweep"));
    }
    if req.axis == SweepAxis::MVsN && base.power.is_none() {
        return Err(invalid("power", "required for an m_vs_n sweep"));
    }
    if matches!(req.axis, SweepAxis::MVsPower | SweepAxis::DeltaVsPower | SweepAxis::MVsN) && base.m.is_none() {
        base.m = Some(xs[0].round().max(1.0) as usize);
    }
    if base.known_n().is_none() && req.axis != SweepAxis::MVsN {
        base.n = Some(xs[0].round().max(1.0) as usize);
    }
    if base.delta.is_none() {
        base.delta = Some(xs[0]);
    }
    let probe_target = if req.axis == SweepAxis::MVsN { Target::N } else { Target::Power };
    let mut probe = base.with_target(probe_target);
    if req.axis == SweepAxis::MVsPower || req.axis == SweepAxis::MVsN {
        probe.m = Some(xs.iter().copied().fold(1.0, f64::max).round() as usize);
    }
    validate_request(&probe)?;
    let mut out = vec![SweepSeries { label: "assumed".into(), points: sweep_series(&base, req.axis, &xs) }];
    for band in &req.base.icc_bands {
        let name = match band.parameter {
            BandParameter::OutcomeIcc => "outcome_icc",
            BandParameter::CovariateIcc => "covariate_icc",
        };
        for (level, v) in [("min", band.min), ("max", band.max)] {
            let r = with_band(&base, band.parameter, v);
            out.push(SweepSeries { label: format!("{name}={v} ({level})"), points: sweep_series(&r, req.axis, &xs) });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{CovariateCorrelation, OutcomeCorrelation};
    use approx::assert_relative_eq;

    fn two_level(alpha1: f64, m: usize) -> SolveRequest {
        SolveRequest::new(
            DesignSpec::parallel(0, 0.5),
            OutcomeModel::new(1.0, OutcomeCorrelation::exchangeable(alpha1)),
            CovariateModel::binary(0.36, CovariateCorrelation::exchangeable(0.2)),
            Target::N,
        )
        .m(m)
        .delta(0.7)
        .power(0.9)
    }

    #[test]
    fn null_power_is_half_alpha() {
        assert_relative_eq!(power_from_variance(0.0, 1.0, 0.05, DfMode::Normal, 10.0).unwrap(), 0.025, epsilon = 1e-15);
        let z = normal_critical(0.05);
        assert_relative_eq!(power_from_variance(z, 1.0, 0.05, DfMode::Normal, 10.0).unwrap(), 0.5, epsilon = 1e-10);
        assert!(power_from_variance(1.0, 1.0, 0.05, DfMode::TNMinus2, 2.0).is_err());
    }

    #[test]
    fn two_level_cluster_counts() {
        for (a, m, want) in [(0.02, 11, 35.0), (0.02, 8, 48.0), (0.04, 10, 39.0), (0.04, 7, 55.0)] {
            let r = solve_n(&two_level(a, m)).unwrap();
            assert_eq!(r.solved_value, want, "alpha1={a} m={m}");
            assert!(r.achieved_power >= 0.9);
        }
    }

    #[test]
    fn t_mode_needs_more_clusters() {
        let mut req = two_level(0.02, 11);
        req.df_mode = DfMode::TNMinus2;
        let r = solve_n(&req).unwrap();
        assert!(r.solved_value > 35.0);
        let below = solve_power(&req.clone().n(r.solved_value as usize - 1)).unwrap();
        assert!(below.achieved_power < 0.9);
    }

    #[test]
    fn closed_form_backend_agrees() {
        let mut req = two_level(0.02, 11);
        req.backend = Backend::ClosedForm;
        let r = solve_n(&req).unwrap();
        assert_eq!(r.solved_value, 35.0);
        assert_eq!(r.backend, "closed_form:hte_two_level");
    }

    #[test]
    fn delta_round_trip() {
        let req = two_level(0.02, 11).n(35).with_target(Target::Delta);
        let d = solve_delta(&req).unwrap();
        let p = solve_power(&req.clone().delta(d.solved_value)).unwrap();
        assert_relative_eq!(p.achieved_power, 0.9, epsilon = 1e-9);
        let half = solve_delta(&req.clone().power(0.5)).unwrap();
        let z = normal_critical(0.05);
        assert_relative_eq!(half.solved_value, z * half.variance.var_hte_total.unwrap().sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn missing_inputs_name_the_field() {
        let mut req = two_level(0.02, 11);
        req.power = None;
        match solve_n(&req) {
            Err(SolveError::Validation { field, .. }) => assert_eq!(field, "power"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_single_point() {
        let base = two_level(0.02, 11).n(35);
        let req = SweepRequest { base, axis: SweepAxis::MVsN, range: SweepRange { from: 11.0, to: 11.0, step: 1.0 } };
        let s = sweep(&req).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].points, vec![SweepPoint { x: 11.0, y: Some(35.0) }]);
    }

    fn sw_comparison(design: DesignSpec) -> SolveRequest {
        let mut r = SolveRequest::new(
            design,
            OutcomeModel::new(1.0, OutcomeCorrelation::nested_cac(0.022, 0.5).unwrap()),
            CovariateModel::binary(0.2, CovariateCorrelation::nested_cac(0.1, 0.9).unwrap()),
            Target::M,
        )
        .delta(-0.05)
        .power(0.9);
        r.standardized = true;
        r
    }

    #[test]
    fn sw_comparison_cluster_period_sizes() {
        let cases = [
            (DesignSpec::stepped_wedge(6, 100), 353.0),
            (DesignSpec::multi_period_parallel(6, 100, 0.5), 190.0),
            (DesignSpec::crxo_multi_period(6, 100, 0.5), 185.0),
        ];
        for (d, want) in cases {
            let r = solve_m(&sw_comparison(d)).unwrap();
            assert_eq!(r.solved_value, want);
        }
    }

    #[test]
    fn custom_baseline_design() {
        let mat = TreatmentMatrix::new(vec![vec![0, 0], vec![0, 1]], vec![1, 1]).unwrap();
        let mut design = DesignSpec::parallel(0, 0.5);
        design.family = DesignFamily::Custom;
        design.periods = 2;
        design.sampling = Sampling::ClosedCohort;
        let mut req = SolveRequest::new(
            design,
            OutcomeModel::new(1.0, OutcomeCorrelation::block_cac(0.7, 0.04, 0.9).unwrap()),
            CovariateModel::binary(0.36, CovariateCorrelation::cohort_time_invariant(0.2)),
            Target::N,
        )
        .delta(0.7)
        .power(0.9);
        req.design_matrix = Some(mat);
        assert_eq!(solve_n(&req.clone().m(6)).unwrap().solved_value, 33.0);
        assert_eq!(solve_n(&req.m(11)).unwrap().solved_value, 18.0);
    }
}
