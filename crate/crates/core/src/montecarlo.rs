//! Simulation of trials from the random-effects model and empirical power
//! by GLS with the true covariance.

use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{CovariateCorrelation, CovariateKind, OutcomeCorrelation, OutcomeKind, StructuredMatrix};
use crate::designs::{generate, treated_count, DesignError, DesignFamily, RandomizationLevel, TreatmentMatrix};
use crate::engine::{
    cluster_design_columns, CovariateEffect, CovariateLevel, CovariateType, InterceptMode, OutcomeModel,
};
use crate::linalg::Square;
use crate::solver::{self, SolveError, SolveRequest};

pub const MIN_REPLICATES: usize = 100;
const COMPONENT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonteCarloError {
    #[error("ICCs outside the random-effects-representable cone: {0}")]
    NotRepresentable(String),
    #[error("unsupported covariate structure for simulation: {0}")]
    UnsupportedCovariate(String),
    #[error("at least {MIN_REPLICATES} replicates are required, got {0}")]
    TooFewReplicates(usize),
    #[error("interaction effect not estimable in replicate {replicate}")]
    Inestimable { replicate: u64 },
    #[error("invalid simulation request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Variances of the cluster, cluster-period, cluster-by-individual and
/// residual terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma_gamma2: f64,
    pub sigma_eta2: f64,
    pub sigma_s2: f64,
    pub sigma_eps2: f64,
}

impl VarianceComponents {
    pub fn total(&self) -> f64 {
        self.sigma_gamma2 + self.sigma_eta2 + self.sigma_s2 + self.sigma_eps2
    }

    /// `(same individual, within period, between period)` correlations.
    pub fn implied_iccs(&self) -> (f64, f64, f64) {
        let t = self.total();
        ((self.sigma_gamma2 + self.sigma_s2) / t, (self.sigma_gamma2 + self.sigma_eta2) / t, self.sigma_gamma2 / t)
    }
}

fn components(same: f64, within: f64, between: f64, total: f64) -> Result<VarianceComponents, MonteCarloError> {
    let c = VarianceComponents {
        sigma_gamma2: between * total,
        sigma_eta2: (within - between) * total,
        sigma_s2: (same - between) * total,
        sigma_eps2: (1.0 - within - same + between) * total,
    };
    let parts = [c.sigma_gamma2, c.sigma_eta2, c.sigma_s2, c.sigma_eps2];
    if parts.iter().any(|&v| v < -COMPONENT_TOLERANCE * total.max(1.0)) {
        return Err(MonteCarloError::NotRepresentable(format!(
            "same-individual {same}, within-period {within}, between-period {between} imply a negative variance component"
        )));
    }
    Ok(VarianceComponents {
        sigma_gamma2: c.sigma_gamma2.max(0.0),
        sigma_eta2: c.sigma_eta2.max(0.0),
        sigma_s2: c.sigma_s2.max(0.0),
        sigma_eps2: c.sigma_eps2.max(0.0),
    })
}

/// Random-effect variances reproducing the outcome ICCs with total
/// variance `σ²_y|x`.
pub fn icc_to_components(outcome: &OutcomeModel<f64>) -> Result<VarianceComponents, MonteCarloError> {
    let p = outcome.correlation.pairwise();
    let same = if outcome.correlation.kind == OutcomeKind::BlockExchangeable { p.same_individual } else { p.between_period };
    components(same, p.within_period, p.between_period, outcome.sigma_yx * outcome.sigma_yx)
}

/// True coefficients. Missing period intercepts are zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Truth {
    #[serde(default)]
    pub beta0: Vec<f64>,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default)]
    pub beta2: f64,
    #[serde(default)]
    pub beta3: f64,
}

impl Truth {
    pub fn effect(delta: f64) -> Self {
        Self { beta3: delta, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub cluster: usize,
    pub period: usize,
    pub individual: usize,
    pub w: u8,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrial {
    pub observations: Vec<Observation>,
    pub seed: u64,
    pub truth: Truth,
}

#[derive(Debug, Clone)]
enum CovariateDraw {
    Gaussian { mu: f64, sd: f64, comps: VarianceComponents },
    /// Cluster probability from `Beta(a, b)`, or fixed at `p` when `None`.
    Binary { p: f64, beta: Option<Beta<f64>>, scope: BinaryScope },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinaryScope {
    Observation,
    Individual,
    Cluster,
}

#[derive(Debug, Clone)]
struct ClusterPlan {
    pattern: Vec<u8>,
    m: usize,
    outcome: VarianceComponents,
    inverse: StructuredMatrix<f64>,
    covariate: CovariateDraw,
}

#[derive(Debug, Clone)]
struct Layout {
    clusters: Vec<ClusterPlan>,
    effect: CovariateEffect,
    intercept: InterceptMode,
}

fn covariate_draw(model: &crate::engine::CovariateModel<f64>, corr: CovariateCorrelation<f64>) -> Result<CovariateDraw, MonteCarloError> {
    match model.dtype {
        CovariateType::Continuous => {
            let p = corr.pairwise();
            let comps = components(p.same_individual, p.within_period, p.between_period, 1.0)?;
            Ok(CovariateDraw::Gaussian { mu: model.mu_x, sd: model.sigma_x, comps })
        }
        CovariateType::Binary => {
            let p = model
                .prevalence
                .ok_or_else(|| MonteCarloError::InvalidRequest("binary covariate needs a prevalence".into()))?;
            let mixture = |rho: f64| -> Result<Option<Beta<f64>>, MonteCarloError> {
                if rho == 0.0 {
                    return Ok(None);
                }
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(MonteCarloError::UnsupportedCovariate(format!(
                        "binary covariate ICC {rho} must lie in [0, 1)"
                    )));
                }
                let s = 1.0 / rho - 1.0;
                Beta::new(p * s, (1.0 - p) * s)
                    .map(Some)
                    .map_err(|e| MonteCarloError::UnsupportedCovariate(e.to_string()))
            };
            let cluster = CovariateDraw::Binary { p, beta: None, scope: BinaryScope::Cluster };
            match corr.kind {
                CovariateKind::Independent => Ok(CovariateDraw::Binary { p, beta: None, scope: BinaryScope::Observation }),
                CovariateKind::ClusterLevelConstant => Ok(cluster),
                CovariateKind::Exchangeable if corr.rho0 >= 1.0 => Ok(cluster),
                CovariateKind::Exchangeable => {
                    Ok(CovariateDraw::Binary { p, beta: mixture(corr.rho0)?, scope: BinaryScope::Observation })
                }
                CovariateKind::CohortTimeInvariant => {
                    Ok(CovariateDraw::Binary { p, beta: mixture(corr.rho0)?, scope: BinaryScope::Individual })
                }
                CovariateKind::NestedExchangeable => Err(MonteCarloError::UnsupportedCovariate(
                    "nested binary covariates cannot be generated; use a continuous covariate".into(),
                )),
            }
        }
    }
}

fn plan(
    pattern: Vec<u8>,
    m: usize,
    sigma: f64,
    outcome: OutcomeCorrelation<f64>,
    covariate: CovariateDraw,
) -> Result<ClusterPlan, MonteCarloError> {
    let j = pattern.len();
    let comps = icc_to_components(&OutcomeModel::new(sigma, outcome))?;
    let inv = StructuredMatrix::block_exchangeable_inverse(outcome.pairwise(), m, j)
        .ok_or_else(|| MonteCarloError::NotRepresentable("outcome correlation is singular".into()))?;
    let s2 = sigma * sigma;
    let inverse = StructuredMatrix { a: inv.a.scale(1.0 / s2), b: inv.b.scale(1.0 / s2), m };
    Ok(ClusterPlan { pattern, m, outcome: comps, inverse, covariate })
}

fn expand(matrix: &TreatmentMatrix) -> Vec<Vec<u8>> {
    matrix
        .rows
        .iter()
        .zip(&matrix.clusters_per_sequence)
        .flat_map(|(row, &c)| std::iter::repeat_n(row.clone(), c))
        .collect()
}

fn layout(req: &SolveRequest, n: usize, m: usize) -> Result<Layout, MonteCarloError> {
    let spec = req.design.with_n_total(n);
    let outcome = req.effective_outcome();
    let cov = &req.covariate;
    let options = req.engine_options();
    let mut effect = options.covariate_effect;
    let mut intercept = options.intercept;
    let mut clusters = Vec::with_capacity(n);
    match spec.family {
        DesignFamily::Irgt | DesignFamily::ParallelTwoLevelByArm => {
            let arms = spec.arm_params.ok_or(DesignError::MissingArmParams)?;
            let corr = if spec.family == DesignFamily::Irgt {
                match cov.level {
                    CovariateLevel::Individual => CovariateCorrelation::independent(),
                    CovariateLevel::Cluster => CovariateCorrelation::cluster_level(),
                }
            } else {
                cov.correlation
            };
            let draw = covariate_draw(cov, corr)?;
            let k = treated_count(spec.pi, n);
            if k == 0 || k >= n {
                return Err(DesignError::InfeasibleAllocation { treated: k, n }.into());
            }
            for i in 0..n {
                let arm = if i < k { arms.treatment } else { arms.control };
                let w = u8::from(i < k);
                clusters.push(plan(vec![w], arm.m, arm.sigma, OutcomeCorrelation::exchangeable(arm.alpha1), draw.clone())?);
            }
        }
        DesignFamily::ParallelThreeLevel => {
            let ns = spec.n_sub.ok_or_else(|| DesignError::InvalidSpec("three-level designs need n_sub".into()))?;
            effect = CovariateEffect::Pooled;
            intercept = InterceptMode::Common;
            let draw = covariate_draw(cov, cov.correlation)?;
            let rows: Vec<Vec<u8>> = match spec.randomization_level {
                RandomizationLevel::Cluster => {
                    let k = treated_count(spec.pi, n);
                    if k == 0 || k >= n {
                        return Err(DesignError::InfeasibleAllocation { treated: k, n }.into());
                    }
                    (0..n).map(|i| vec![u8::from(i < k); ns]).collect()
                }
                RandomizationLevel::Subcluster => {
                    let k = treated_count(spec.pi, ns);
                    if k == 0 || k >= ns {
                        return Err(DesignError::InfeasibleAllocation { treated: k, n: ns }.into());
                    }
                    vec![(0..ns).map(|s| u8::from(s < k)).collect(); n]
                }
            };
            for row in rows {
                clusters.push(plan(row, m, outcome.sigma_yx, outcome.correlation, draw.clone())?);
            }
        }
        _ => {
            let matrix = match spec.family {
                DesignFamily::Custom => req
                    .design_matrix
                    .as_ref()
                    .ok_or_else(|| DesignError::InvalidSpec("custom designs need a treatment matrix".into()))?
                    .rescaled(n),
                _ => generate(&spec)?,
            };
            let draw = covariate_draw(cov, cov.correlation)?;
            for row in expand(&matrix) {
                let corr = if outcome.correlation.kind == OutcomeKind::ArmSpecificExchangeable {
                    let ones = row.iter().filter(|&&x| x == 1).count();
                    if ones != 0 && ones != row.len() {
                        return Err(MonteCarloError::InvalidRequest(
                            "arm-specific ICCs need every sequence to stay in one arm".into(),
                        ));
                    }
                    outcome.correlation.for_arm(ones > 0)
                } else {
                    outcome.correlation
                };
                clusters.push(plan(row, m, outcome.sigma_yx, corr, draw.clone())?);
            }
        }
    }
    Ok(Layout { clusters, effect, intercept })
}

struct ClusterData {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn draw_covariate(draw: &CovariateDraw, j: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match draw {
        CovariateDraw::Gaussian { mu, sd, comps } => {
            let g = comps.sigma_gamma2.sqrt() * normal(rng);
            let eta: Vec<f64> = (0..j).map(|_| comps.sigma_eta2.sqrt() * normal(rng)).collect();
            let s: Vec<f64> = (0..m).map(|_| comps.sigma_s2.sqrt() * normal(rng)).collect();
            let e = comps.sigma_eps2.sqrt();
            let mut x = Vec::with_capacity(j * m);
            for eta_p in &eta {
                for s_k in &s {
                    x.push(mu + sd * (g + eta_p + s_k + e * normal(rng)));
                }
            }
            x
        }
        CovariateDraw::Binary { p, beta, scope } => {
            let prob = match beta {
                Some(b) => b.sample(rng),
                None => *p,
            };
            let coin = Bernoulli::new(prob.clamp(0.0, 1.0)).expect("probability in [0, 1]");
            let flip = |rng: &mut ChaCha8Rng| if coin.sample(rng) { 1.0 } else { 0.0 };
            match scope {
                BinaryScope::Observation => (0..j * m).map(|_| flip(rng)).collect(),
                BinaryScope::Individual => {
                    let ind: Vec<f64> = (0..m).map(|_| flip(rng)).collect();
                    (0..j).flat_map(|_| ind.iter().copied()).collect()
                }
                BinaryScope::Cluster => vec![flip(rng); j * m],
            }
        }
    }
}

fn draw_cluster(plan: &ClusterPlan, truth: &Truth, rng: &mut ChaCha8Rng) -> ClusterData {
    let (j, m) = (plan.pattern.len(), plan.m);
    let x = draw_covariate(&plan.covariate, j, m, rng);
    let c = &plan.outcome;
    let g = c.sigma_gamma2.sqrt() * normal(rng);
    let eta: Vec<f64> = (0..j).map(|_| c.sigma_eta2.sqrt() * normal(rng)).collect();
    let s: Vec<f64> = (0..m).map(|_| c.sigma_s2.sqrt() * normal(rng)).collect();
    let e = c.sigma_eps2.sqrt();
    let mut y = Vec::with_capacity(j * m);
    for p in 0..j {
        let w = f64::from(plan.pattern[p]);
        let b0 = truth.beta0.get(p).copied().unwrap_or(0.0);
        for k in 0..m {
            let xv = x[p * m + k];
            let mean = b0 + truth.beta1 * w + truth.beta2 * xv + truth.beta3 * w * xv;
            y.push(mean + g + eta[p] + s[k] + e * normal(rng));
        }
    }
    ClusterData { x, y }
}

fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `V^-1 v` for a structured inverse, `v` period-major.
fn apply_inverse(inv: &StructuredMatrix<f64>, j: usize, m: usize, v: &[f64]) -> Vec<f64> {
    let sums: Vec<f64> = (0..j).map(|p| v[p * m..(p + 1) * m].iter().sum()).collect();
    let mut out = vec![0.0; j * m];
    for r in 0..j {
        let shift: f64 = (0..j).map(|c| inv.b.get(r, c) * sums[c]).sum();
        for k in 0..m {
            let mut acc = shift;
            for c in 0..j {
                acc += inv.a.get(r, c) * v[c * m + k];
            }
            out[r * m + k] = acc;
        }
    }
    out
}

/// GLS fit of one trial: `(β̂₃, Var(β̂₃))`, or `None` if not estimable.
fn fit(layout: &Layout, data: &[ClusterData]) -> Option<(f64, f64)> {
    let mut info: Option<Square<f64>> = None;
    let mut score: Vec<f64> = Vec::new();
    for (plan, d) in layout.clusters.iter().zip(data) {
        let (j, m) = (plan.pattern.len(), plan.m);
        let u: Vec<f64> = plan.pattern.iter().map(|&w| f64::from(w)).collect();
        let cols = cluster_design_columns(&u, m, layout.effect, layout.intercept);
        let p = cols.len();
        let info = info.get_or_insert_with(|| Square::zeros(p));
        if score.is_empty() {
            score = vec![0.0; p];
        }
        let design: Vec<Vec<f64>> = (0..p)
            .map(|c| {
                (0..j * m)
                    .map(|r| {
                        let v = cols.profiles[c][r / m];
                        if cols.random[c] { v * d.x[r] } else { v }
                    })
                    .collect()
            })
            .collect();
        let weighted: Vec<Vec<f64>> = design.iter().map(|col| apply_inverse(&plan.inverse, j, m, col)).collect();
        for a in 0..p {
            score[a] += dot(&weighted[a], &d.y);
            for b in a..p {
                let v = dot(&weighted[a], &design[b]);
                info.add_at(a, b, v);
                if a != b {
                    info.add_at(b, a, v);
                }
            }
        }
    }
    let info = info?;
    let inv = info.spd_inverse()?;
    let k = info.dim() - 1;
    let beta3: f64 = (0..=k).map(|c| inv.get(k, c) * score[c]).sum();
    let var = inv.get(k, k);
    (var > 0.0 && var.is_finite()).then_some((beta3, var))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn trial_size(req: &SolveRequest) -> Result<(usize, usize), MonteCarloError> {
    let n = req.known_n().ok_or_else(|| MonteCarloError::InvalidRequest("n is required".into()))?;
    if !solver::per_arm(req) && req.m.is_none() {
        return Err(MonteCarloError::InvalidRequest("m is required".into()));
    }
    Ok((n, solver::m_of(req)))
}

/// One simulated trial; identical for identical `(req, truth, seed)`.
pub fn simulate(req: &SolveRequest, truth: &Truth, seed: u64) -> Result<SimulatedTrial, MonteCarloError> {
    let (n, m) = trial_size(req)?;
    let layout = layout(req, n, m)?;
    let mut rng = replicate_rng(seed, 0);
    let mut observations = Vec::new();
    for (i, plan) in layout.clusters.iter().enumerate() {
        let d = draw_cluster(plan, truth, &mut rng);
        for (r, (&x, &y)) in d.x.iter().zip(&d.y).enumerate() {
            let (period, individual) = (r / plan.m, r % plan.m);
            observations.push(Observation { cluster: i, period, individual, w: plan.pattern[period], x, y });
        }
    }
    Ok(SimulatedTrial { observations, seed, truth: truth.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: u64,
    pub beta3_hat: f64,
    pub z: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPower {
    pub rate: f64,
    pub mc_se: f64,
    pub reps: usize,
    pub seed: u64,
    pub true_delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_power: Option<f64>,
    #[serde(skip)]
    pub replicates: Vec<ReplicateRecord>,
}

/// Rejection rate of the two-sided Wald test for `β₃` over `reps`
/// simulated trials. Replicate `i` draws from stream `i` of `seed`.
pub fn empirical_power(
    req: &SolveRequest,
    true_delta: f64,
    reps: usize,
    seed: u64,
) -> Result<EmpiricalPower, MonteCarloError> {
    empirical_power_with(req, &Truth::effect(true_delta), reps, seed)
}

pub fn empirical_power_with(
    req: &SolveRequest,
    truth: &Truth,
    reps: usize,
    seed: u64,
) -> Result<EmpiricalPower, MonteCarloError> {
    if reps < MIN_REPLICATES {
        return Err(MonteCarloError::TooFewReplicates(reps));
    }
    if !(req.alpha_level > 0.0 && req.alpha_level < 1.0) {
        return Err(MonteCarloError::InvalidRequest("alpha_level must lie in (0, 1)".into()));
    }
    let (n, m) = trial_size(req)?;
    let layout = layout(req, n, m)?;
    let crit = solver::normal_critical(req.alpha_level);
    let replicates = (0..reps as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = replicate_rng(seed, index);
            let data: Vec<ClusterData> =
                layout.clusters.iter().map(|p| draw_cluster(p, truth, &mut rng)).collect();
            let (beta3_hat, var) = fit(&layout, &data).ok_or(MonteCarloError::Inestimable { replicate: index })?;
            let z = beta3_hat / var.sqrt();
            Ok(ReplicateRecord { index, beta3_hat, z, reject: z.abs() > crit })
        })
        .collect::<Result<Vec<_>, MonteCarloError>>()?;
    let rate = replicates.iter().filter(|r| r.reject).count() as f64 / reps as f64;
    let analytic = solver::solve_power(&req.clone().n(n).delta(truth.beta3)).ok().map(|r| r.achieved_power);
    Ok(EmpiricalPower {
        rate,
        mc_se: (rate * (1.0 - rate) / reps as f64).sqrt(),
        reps,
        seed,
        true_delta: truth.beta3,
        analytic_power: analytic,
        replicates,
    })
}

/// Replicate-level CSV: `index,beta3_hat,z,reject`.
pub fn replicates_csv(records: &[ReplicateRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("UTF-8 CSV")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::DesignSpec;
    use crate::engine::CovariateModel;
    use crate::solver::Target;
    use approx::assert_relative_eq;

    fn req(outcome: OutcomeCorrelation<f64>, covariate: CovariateModel<f64>, n: usize, m: usize) -> SolveRequest {
        SolveRequest::new(DesignSpec::parallel(n, 0.5), OutcomeModel::new(1.0, outcome), covariate, Target::Power)
            .n(n)
            .m(m)
    }

    #[test]
    fn components_examples() {
        let c = icc_to_components(&OutcomeModel::new(1.0, OutcomeCorrelation::exchangeable(0.0))).unwrap();
        assert_eq!((c.sigma_gamma2, c.sigma_eta2, c.sigma_s2, c.sigma_eps2), (0.0, 0.0, 0.0, 1.0));
        let c = icc_to_components(&OutcomeModel::new(1.0, OutcomeCorrelation::nested(0.022, 0.011))).unwrap();
        assert_relative_eq!(c.sigma_gamma2, 0.011, epsilon = 1e-15);
        assert_relative_eq!(c.sigma_eta2, 0.011, epsilon = 1e-15);
        assert_eq!(c.sigma_s2, 0.0);
        assert_relative_eq!(c.sigma_eps2, 0.978, epsilon = 1e-15);
        let c = icc_to_components(&OutcomeModel::new(2.0, OutcomeCorrelation::block(0.7, 0.04, 0.036))).unwrap();
        assert_relative_eq!(c.sigma_s2, 0.664 * 4.0, epsilon = 1e-12);
        let (s, w, b) = c.implied_iccs();
        assert_relative_eq!(s, 0.7, epsilon = 1e-14);
        assert_relative_eq!(w, 0.04, epsilon = 1e-14);
        assert_relative_eq!(b, 0.036, epsilon = 1e-14);
    }

    #[test]
    fn unrepresentable_iccs_rejected() {
        let r = icc_to_components(&OutcomeModel::new(1.0, OutcomeCorrelation::nested(0.01, 0.05)));
        assert!(matches!(r, Err(MonteCarloError::NotRepresentable(_))));
    }

    #[test]
    fn simulation_is_deterministic() {
        let r = req(OutcomeCorrelation::exchangeable(0.05), CovariateModel::binary(0.36, CovariateCorrelation::exchangeable(0.2)), 6, 4);
        let a = simulate(&r, &Truth::effect(0.3), 11).unwrap();
        let b = simulate(&r, &Truth::effect(0.3), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.observations.len(), 24);
        assert_ne!(a, simulate(&r, &Truth::effect(0.3), 12).unwrap());
    }

    #[test]
    fn binary_prevalence_converges() {
        let r = req(OutcomeCorrelation::exchangeable(0.0), CovariateModel::binary(0.36, CovariateCorrelation::independent()), 200, 100);
        let t = simulate(&r, &Truth::default(), 5).unwrap();
        let n = t.observations.len() as f64;
        let mean = t.observations.iter().map(|o| o.x).sum::<f64>() / n;
        assert!((mean - 0.36).abs() < 3.0 * (0.36 * 0.64 / n).sqrt());
    }

    #[test]
    fn nested_binary_unsupported() {
        let mut r = req(OutcomeCorrelation::exchangeable(0.0), CovariateModel::binary(0.3, CovariateCorrelation::nested(0.2, 0.1)), 10, 4);
        r.design = DesignSpec::multi_period_parallel(2, 10, 0.5);
        assert!(matches!(simulate(&r, &Truth::default(), 1), Err(MonteCarloError::UnsupportedCovariate(_))));
    }

    #[test]
    fn fit_recovers_known_coefficients_without_noise_scale() {
        let r = req(OutcomeCorrelation::exchangeable(0.1), CovariateModel::continuous(0.0, 1.0, CovariateCorrelation::independent()), 40, 20);
        let e = empirical_power(&r, 5.0, MIN_REPLICATES, 3).unwrap();
        let mean = e.replicates.iter().map(|x| x.beta3_hat).sum::<f64>() / e.reps as f64;
        assert!((mean - 5.0).abs() < 0.05, "{mean}");
        assert_eq!(e.rate, 1.0);
        let csv = replicates_csv(&e.replicates[..2]);
        assert!(csv.starts_with("index,beta3_hat,z,reject\n0,"));
    }

    #[test]
    fn too_few_replicates() {
        let r = req(OutcomeCorrelation::exchangeable(0.1), CovariateModel::continuous(0.0, 1.0, CovariateCorrelation::independent()), 10, 5);
        assert_eq!(empirical_power(&r, 0.0, 10, 1), Err(MonteCarloError::TooFewReplicates(10)));
    }
}
