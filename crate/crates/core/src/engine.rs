//! Expected-information variance engine.
//!
//! For each treatment sequence the generalized-least-squares information
//! `E_X[D' V^-1 D]` is assembled in closed form from the structured
//! correlation algebra, weighted by the share of clusters on the sequence,
//! and inverted. Normalized variances are per cluster: `Var = sigma2 / n`.
//!
//! Column order in every information matrix: intercepts, `W`, covariate
//! slots, `WX`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{
    CorrelationError, CovariateCorrelation, CovariateKind, OutcomeCorrelation, OutcomeKind, StructuredMatrix,
    DEFAULT_MAX_DIMENSION,
};
use crate::designs::{treated_count, DesignError, DesignFamily, DesignSpec, RandomizationLevel, TreatmentMatrix};
use crate::linalg::Square;
use crate::scalar::Real;

/// Relative eigenvalue threshold below which information is treated as null.
pub const ESTIMABILITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("outcome covariance is singular; check the ICC values")]
    SingularOutcome,
    #[error("design cannot identify the requested effect ({coordinate} is not estimable)")]
    NotIdentifiable { coordinate: &'static str },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct OutcomeModel<T> {
    /// Conditional outcome SD `σ_y|x`.
    pub sigma_yx: T,
    pub correlation: OutcomeCorrelation<T>,
}

impl<T: Real> OutcomeModel<T> {
    pub fn new(sigma_yx: T, correlation: OutcomeCorrelation<T>) -> Self {
        Self { sigma_yx, correlation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateLevel {
    #[default]
    Individual,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateType {
    #[default]
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize"))]
pub struct CovariateModel<T> {
    #[serde(default)]
    pub level: CovariateLevel,
    #[serde(default)]
    pub dtype: CovariateType,
    #[serde(default)]
    pub mu_x: T,
    #[serde(default = "unit_sd")]
    pub sigma_x: T,
    #[serde(default)]
    pub prevalence: Option<T>,
    pub correlation: CovariateCorrelation<T>,
}

fn unit_sd<T: Real>() -> T {
    T::one()
}

impl<T: Real> CovariateModel<T> {
    pub fn continuous(mu_x: T, sigma_x: T, correlation: CovariateCorrelation<T>) -> Self {
        Self {
            level: CovariateLevel::Individual,
            dtype: CovariateType::Continuous,
            mu_x,
            sigma_x,
            prevalence: None,
            correlation,
        }
    }

    /// Binary covariate with prevalence `p`: `μ = p`, `σ² = p(1-p)`.
    pub fn binary(p: T, correlation: CovariateCorrelation<T>) -> Self {
        Self {
            level: CovariateLevel::Individual,
            dtype: CovariateType::Binary,
            mu_x: p,
            sigma_x: (p * (T::one() - p)).sqrt(),
            prevalence: Some(p),
            correlation,
        }
    }

    /// Moves the covariate to the cluster level, which fixes its correlation.
    pub fn cluster_level(mut self) -> Self {
        self.level = CovariateLevel::Cluster;
        self.correlation = CovariateCorrelation::cluster_level();
        self
    }

    pub fn variance(&self) -> T {
        match (self.dtype, self.prevalence) {
            (CovariateType::Binary, Some(p)) => p * (T::one() - p),
            _ => self.sigma_x * self.sigma_x,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.dtype == CovariateType::Binary {
            match self.prevalence {
                Some(p) if p > T::zero() && p < T::one() => {}
                _ => return Err(EngineError::InvalidModel("binary covariate prevalence must lie in (0, 1)".into())),
            }
        }
        if !(self.variance() > T::zero()) {
            return Err(EngineError::InvalidModel("covariate standard deviation must be positive".into()));
        }
        if self.level == CovariateLevel::Cluster && self.correlation.kind != CovariateKind::ClusterLevelConstant {
            return Err(EngineError::InvalidModel(
                "a cluster-level covariate requires the cluster_level_constant correlation".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateEffect {
    Pooled,
    #[default]
    PeriodSpecific,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptMode {
    #[default]
    PeriodSpecific,
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseMethod {
    /// Spectral inverse from the analytic eigenstructure.
    #[default]
    Analytic,
    /// Explicit `mJ x mJ` matrices with a Cholesky factorization.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    pub covariate_effect: CovariateEffect,
    pub intercept: InterceptMode,
    pub inverse: InverseMethod,
    /// Use `μ_x` as given instead of centering at zero.
    pub uncentered: bool,
    pub max_dimension: Option<usize>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            covariate_effect: CovariateEffect::PeriodSpecific,
            intercept: InterceptMode::PeriodSpecific,
            inverse: InverseMethod::Analytic,
            uncentered: false,
            max_dimension: Some(DEFAULT_MAX_DIMENSION),
        }
    }
}

impl EngineOptions {
    pub fn with_effect(covariate_effect: CovariateEffect) -> Self {
        Self { covariate_effect, ..Self::default() }
    }
}

/// Columns of one cluster's design for a treatment row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignColumns<T> {
    pub names: Vec<String>,
    /// Period profiles: each column is `profile ⊗ 1_m`, times `X` if random.
    pub profiles: Vec<Vec<T>>,
    /// Whether the column is multiplied by the covariate.
    pub random: Vec<bool>,
    pub rows: usize,
}

impl<T> DesignColumns<T> {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

fn unit<T: Real>(j: usize, dim: usize) -> Vec<T> {
    (0..dim).map(|k| if k == j { T::one() } else { T::zero() }).collect()
}

/// Column layout of a cluster with treatment row `u`.
pub fn cluster_design_columns<T: Real>(
    u: &[T],
    m: usize,
    effect: CovariateEffect,
    intercept: InterceptMode,
) -> DesignColumns<T> {
    let j = u.len();
    let mut names = Vec::new();
    let mut profiles = Vec::new();
    let mut random = Vec::new();
    let mut push = |name: String, p: Vec<T>, r: bool| {
        names.push(name);
        profiles.push(p);
        random.push(r);
    };
    if j == 1 || intercept == InterceptMode::Common {
        push("1".into(), vec![T::one(); j], false);
    } else {
        for p in 0..j {
            push(format!("P{}", p + 1), unit(p, j), false);
        }
    }
    push("W".into(), u.to_vec(), false);
    if j == 1 || effect == CovariateEffect::Pooled {
        push("X".into(), vec![T::one(); j], true);
    } else {
        for p in 0..j {
            push(format!("X{}", p + 1), unit(p, j), true);
        }
    }
    push("WX".into(), u.to_vec(), true);
    DesignColumns { names, profiles, random, rows: m * j }
}

/// One treatment sequence with its cluster share and per-cluster model.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBlock<T> {
    pub pattern: Vec<T>,
    pub weight: T,
    pub m: usize,
    pub sigma_yx: T,
    pub outcome: OutcomeCorrelation<T>,
    pub covariate: CovariateCorrelation<T>,
}

fn check_dimension(m: usize, j: usize, options: &EngineOptions) -> Result<(), EngineError> {
    if let Some(cap) = options.max_dimension {
        let dim = m.saturating_mul(j);
        if dim > cap {
            return Err(CorrelationError::DimensionTooLarge { dim, cap }.into());
        }
    }
    Ok(())
}

fn outcome_inverse<T: Real>(block: &SequenceBlock<T>) -> Result<StructuredMatrix<T>, EngineError> {
    let j = block.pattern.len();
    let p = block.outcome.pairwise();
    let inv = StructuredMatrix::block_exchangeable_inverse(p, block.m, j).ok_or(EngineError::SingularOutcome)?;
    let s2 = block.sigma_yx * block.sigma_yx;
    Ok(StructuredMatrix { a: inv.a.scale(T::one() / s2), b: inv.b.scale(T::one() / s2), m: inv.m })
}

/// Per-cluster expected information `Σ_s w_s E[D_s' V^-1 D_s]` with
/// `Σ w_s = 1`.
pub fn expected_information<T: Real>(
    blocks: &[SequenceBlock<T>],
    mu_x: T,
    sigma_x2: T,
    options: &EngineOptions,
) -> Result<Square<T>, EngineError> {
    let first = blocks.first().ok_or_else(|| EngineError::InvalidModel("no sequences".into()))?;
    let j = first.pattern.len();
    let cols0 = cluster_design_columns(&first.pattern, first.m, options.covariate_effect, options.intercept);
    let p = cols0.len();
    let mut info = Square::zeros(p);
    for block in blocks {
        if block.pattern.len() != j {
            return Err(EngineError::InvalidModel("sequences differ in number of periods".into()));
        }
        if block.weight == T::zero() {
            continue;
        }
        check_dimension(block.m, j, options)?;
        let cols = cluster_design_columns(&block.pattern, block.m, options.covariate_effect, options.intercept);
        let local = match options.inverse {
            InverseMethod::Analytic => structured_block_information(block, &cols, mu_x, sigma_x2)?,
            InverseMethod::Dense => dense_block_information(block, &cols, mu_x, sigma_x2)?,
        };
        for r in 0..p {
            for c in 0..p {
                info.add_at(r, c, block.weight * local.get(r, c));
            }
        }
    }
    Ok(info)
}

fn structured_block_information<T: Real>(
    block: &SequenceBlock<T>,
    cols: &DesignColumns<T>,
    mu: T,
    sx2: T,
) -> Result<Square<T>, EngineError> {
    let j = block.pattern.len();
    let vi = outcome_inverse(block)?;
    let rx = block.covariate.structured(block.m, j);
    let kernel = vi.trace_kernel(&rx);
    let mf = T::from_usize_lossy(block.m);
    let p = cols.len();
    let mut out = Square::zeros(p);
    for r in 0..p {
        for c in r..p {
            let (a, b) = (&cols.profiles[r], &cols.profiles[c]);
            let mean = vi.profile_form(a, b);
            let v = match (cols.random[r], cols.random[c]) {
                (false, false) => mean,
                (true, true) => sx2 * mf * kernel.bilinear(a, b) + mu * mu * mean,
                _ => mu * mean,
            };
            out.set(r, c, v);
            out.set(c, r, v);
        }
    }
    Ok(out)
}

fn dense_block_information<T: Real>(
    block: &SequenceBlock<T>,
    cols: &DesignColumns<T>,
    mu: T,
    sx2: T,
) -> Result<Square<T>, EngineError> {
    let j = block.pattern.len();
    let m = block.m;
    let n = m * j;
    let s2 = block.sigma_yx * block.sigma_yx;
    let ry = block.outcome.structured(m, j).dense();
    let vi = ry.spd_inverse().ok_or(EngineError::SingularOutcome)?.scale(T::one() / s2);
    let rx = block.covariate.structured(m, j).dense();
    let expand = |profile: &[T]| -> Vec<T> { (0..n).map(|q| profile[q / m]).collect() };
    let vecs: Vec<Vec<T>> = cols.profiles.iter().map(|pr| expand(pr)).collect();
    let p = cols.len();
    let mut out = Square::zeros(p);
    for r in 0..p {
        for c in r..p {
            let mean = vi.bilinear(&vecs[r], &vecs[c]);
            let v = match (cols.random[r], cols.random[c]) {
                (false, false) => mean,
                (true, true) => {
                    let mut tr = T::zero();
                    for a in 0..n {
                        if vecs[r][a] == T::zero() {
                            continue;
                        }
                        for b in 0..n {
                            tr += vecs[r][a] * vi.get(a, b) * vecs[c][b] * rx.get(b, a);
                        }
                    }
                    sx2 * tr + mu * mu * mean
                }
                _ => mu * mean,
            };
            out.set(r, c, v);
            out.set(c, r, v);
        }
    }
    Ok(out)
}

/// Diagonal of the (pseudo-)inverse with estimability flags per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDiagonal<T> {
    pub values: Vec<T>,
    pub estimable: Vec<bool>,
}

/// Inverts information, detecting rank deficiency on the scaled matrix.
pub fn invert_information<T: Real>(info: &Square<T>) -> InverseDiagonal<T> {
    let p = info.dim();
    let d: Vec<T> = (0..p)
        .map(|i| {
            let x = info.get(i, i);
            if x > T::zero() {
                T::one() / x.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    let scaled = Square::from_fn(p, |r, c| d[r] * info.get(r, c) * d[c]);
    let eig = scaled.symmetric_eigen();
    let max = eig.values.iter().copied().fold(T::zero(), T::max);
    let tol = T::lit(ESTIMABILITY_TOLERANCE) * max;
    let null: Vec<usize> = (0..p).filter(|&k| eig.values[k] <= tol).collect();
    if null.is_empty() {
        if let Some(inv) = info.spd_inverse() {
            return InverseDiagonal { values: (0..p).map(|i| inv.get(i, i)).collect(), estimable: vec![true; p] };
        }
    }
    let leak = T::lit(1e-6);
    let mut values = Vec::with_capacity(p);
    let mut estimable = Vec::with_capacity(p);
    for i in 0..p {
        let in_null: T = null.iter().map(|&k| eig.vectors[k][i] * eig.vectors[k][i]).sum();
        let ok = d[i] > T::zero() && in_null <= leak;
        let mut v = T::zero();
        for k in 0..p {
            if eig.values[k] > tol {
                v += eig.vectors[k][i] * eig.vectors[k][i] / eig.values[k];
            }
        }
        values.push(v * d[i] * d[i]);
        estimable.push(ok);
    }
    InverseDiagonal { values, estimable }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport<T> {
    /// Number of clusters the totals refer to.
    pub n_clusters: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_hte_total: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_ate_total: Option<T>,
    /// `n Var(β̂3)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_hte_norm: Option<T>,
    /// `n Var(β̂1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_ate_norm: Option<T>,
    /// `sigma2_hte_norm * σ_x² / sigma2_ate_norm`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design_effect_hte: Option<T>,
    pub estimable_ate: bool,
    pub estimable_hte: bool,
}

impl<T: Real> VarianceReport<T> {
    fn from_information(info: &Square<T>, ate_index: usize, n: T, sigma_x2: T) -> Self {
        let inv = invert_information(info);
        let hte_index = info.dim() - 1;
        let pick = |i: usize| inv.estimable[i].then_some(inv.values[i]);
        let hte = pick(hte_index);
        let ate = pick(ate_index);
        let de = match (hte, ate) {
            (Some(h), Some(a)) if a > T::zero() => Some(h * sigma_x2 / a),
            _ => None,
        };
        Self {
            n_clusters: n,
            var_hte_total: hte.map(|v| v / n),
            var_ate_total: ate.map(|v| v / n),
            sigma2_hte_norm: hte,
            sigma2_ate_norm: ate,
            design_effect_hte: de,
            estimable_ate: inv.estimable[ate_index],
            estimable_hte: inv.estimable[hte_index],
        }
    }

    /// Same report for a different number of clusters.
    pub fn at_n(&self, n: T) -> Self {
        Self {
            n_clusters: n,
            var_hte_total: self.sigma2_hte_norm.map(|v| v / n),
            var_ate_total: self.sigma2_ate_norm.map(|v| v / n),
            ..self.clone()
        }
    }

    /// `n Var(β̂3)`, or an identification error.
    pub fn hte(&self) -> Result<T, EngineError> {
        self.sigma2_hte_norm.ok_or(EngineError::NotIdentifiable { coordinate: "beta3 (WX)" })
    }
}

fn ate_index(blocks_j: usize, options: &EngineOptions) -> usize {
    if blocks_j == 1 || options.intercept == InterceptMode::Common {
        1
    } else {
        blocks_j
    }
}

/// Report from explicit sequence blocks.
pub fn report_from_blocks<T: Real>(
    blocks: &[SequenceBlock<T>],
    n: T,
    covariate: &CovariateModel<T>,
    options: &EngineOptions,
) -> Result<VarianceReport<T>, EngineError> {
    covariate.validate()?;
    let mu = if options.uncentered { covariate.mu_x } else { T::zero() };
    let sx2 = covariate.variance();
    let info = expected_information(blocks, mu, sx2, options)?;
    let j = blocks[0].pattern.len();
    Ok(VarianceReport::from_information(&info, ate_index(j, options), n, sx2))
}

/// Sequence blocks for a treatment matrix with its own cluster counts as
/// weights.
pub fn matrix_blocks<T: Real>(
    matrix: &TreatmentMatrix,
    weights: &[T],
    m: usize,
    outcome: &OutcomeModel<T>,
    covariate: &CovariateModel<T>,
) -> Result<Vec<SequenceBlock<T>>, EngineError> {
    let mut blocks = Vec::with_capacity(matrix.sequences());
    for (s, row) in matrix.rows.iter().enumerate() {
        let pattern: Vec<T> = row.iter().map(|&x| T::from_u8(x).unwrap_or_else(T::zero)).collect();
        let corr = if outcome.correlation.kind == OutcomeKind::ArmSpecificExchangeable {
            let ones = row.iter().filter(|&&x| x == 1).count();
            if ones != 0 && ones != row.len() {
                return Err(EngineError::InvalidModel(
                    "arm-specific ICCs need every sequence to stay in one arm".into(),
                ));
            }
            outcome.correlation.for_arm(ones > 0)
        } else {
            outcome.correlation
        };
        blocks.push(SequenceBlock {
            pattern,
            weight: weights[s],
            m,
            sigma_yx: outcome.sigma_yx,
            outcome: corr,
            covariate: covariate.correlation,
        });
    }
    Ok(blocks)
}

/// Variance report for a concrete treatment matrix; sequence shares are the
/// matrix's cluster counts.
pub fn variance_report<T: Real>(
    matrix: &TreatmentMatrix,
    m: usize,
    outcome: &OutcomeModel<T>,
    covariate: &CovariateModel<T>,
    options: &EngineOptions,
) -> Result<VarianceReport<T>, EngineError> {
    let n = T::from_usize_lossy(matrix.n_total());
    let weights: Vec<T> = matrix.clusters_per_sequence.iter().map(|&c| T::from_usize_lossy(c) / n).collect();
    let blocks = matrix_blocks(matrix, &weights, m, outcome, covariate)?;
    report_from_blocks(&blocks, n, covariate, options)
}

fn arm_blocks<T: Real>(spec: &DesignSpec, covariate: CovariateCorrelation<T>) -> Result<Vec<SequenceBlock<T>>, EngineError> {
    let arms = spec.arm_params.ok_or(DesignError::MissingArmParams)?;
    let pi = T::lit(spec.pi);
    let mk = |treated: bool, a: crate::designs::ArmParam, w: T| -> Result<SequenceBlock<T>, EngineError> {
        if a.m == 0 || !(a.sigma > 0.0) {
            return Err(EngineError::InvalidModel("arm cluster size and SD must be positive".into()));
        }
        Ok(SequenceBlock {
            pattern: vec![if treated { T::one() } else { T::zero() }],
            weight: w,
            m: a.m,
            sigma_yx: T::lit(a.sigma),
            outcome: OutcomeCorrelation::exchangeable(T::lit(a.alpha1)),
            covariate,
        })
    };
    Ok(vec![mk(true, arms.treatment, pi)?, mk(false, arms.control, T::one() - pi)?])
}

/// Variance for a design spec at `m` and the spec's `n_total`.
///
/// Parallel and crossover families weight sequences by `π` exactly; stepped
/// wedge and custom designs use the matrix's cluster shares. Three-level
/// designs treat subclusters as periods with a common intercept and pooled
/// covariate effect. By-arm and IRGT designs read per-arm parameters from the
/// spec.
pub fn design_variance<T: Real>(
    spec: &DesignSpec,
    custom: Option<&TreatmentMatrix>,
    m: usize,
    outcome: &OutcomeModel<T>,
    covariate: &CovariateModel<T>,
    options: &EngineOptions,
) -> Result<VarianceReport<T>, EngineError> {
    let n = T::from_usize_lossy(spec.n_total.max(1));
    let pi = T::lit(spec.pi);
    match spec.family {
        DesignFamily::Irgt => irgt_variance(spec, covariate, options),
        DesignFamily::ParallelTwoLevelByArm => {
            let blocks = arm_blocks(spec, covariate.correlation)?;
            report_from_blocks(&blocks, n, covariate, options)
        }
        DesignFamily::ParallelThreeLevel => {
            let ns = spec.n_sub.ok_or_else(|| DesignError::InvalidSpec("three-level designs need n_sub".into()))?;
            let opts = EngineOptions { covariate_effect: CovariateEffect::Pooled, intercept: InterceptMode::Common, ..*options };
            let rows: Vec<(Vec<T>, T)> = match spec.randomization_level {
                RandomizationLevel::Cluster => {
                    vec![(vec![T::one(); ns], pi), (vec![T::zero(); ns], T::one() - pi)]
                }
                RandomizationLevel::Subcluster => {
                    let k = treated_count(spec.pi, ns);
                    if k == 0 || k >= ns {
                        return Err(DesignError::InfeasibleAllocation { treated: k, n: ns }.into());
                    }
                    vec![((0..ns).map(|i| if i < k { T::one() } else { T::zero() }).collect(), T::one())]
                }
            };
            let blocks: Vec<SequenceBlock<T>> = rows
                .into_iter()
                .map(|(pattern, weight)| SequenceBlock {
                    pattern,
                    weight,
                    m,
                    sigma_yx: outcome.sigma_yx,
                    outcome: outcome.correlation,
                    covariate: covariate.correlation,
                })
                .collect();
            report_from_blocks(&blocks, n, covariate, &opts)
        }
        DesignFamily::Custom => {
            let matrix = custom.ok_or_else(|| DesignError::InvalidSpec("custom designs need a treatment matrix".into()))?;
            let weights: Vec<T> = matrix.proportions().into_iter().map(T::lit).collect();
            let blocks = matrix_blocks(matrix, &weights, m, outcome, covariate)?;
            report_from_blocks(&blocks, n, covariate, options)
        }
        DesignFamily::SteppedWedge => {
            let rows = crate::designs::patterns(spec)?;
            let s = rows.len();
            let matrix = TreatmentMatrix::new(rows, vec![1; s])?;
            let weights = vec![T::one() / T::from_usize_lossy(s); s];
            let blocks = matrix_blocks(&matrix, &weights, m, outcome, covariate)?;
            report_from_blocks(&blocks, n, covariate, options)
        }
        _ => {
            let matrix = TreatmentMatrix::new(crate::designs::patterns(spec)?, vec![1, 1])?;
            let weights = [pi, T::one() - pi];
            let blocks = matrix_blocks(&matrix, &weights, m, outcome, covariate)?;
            report_from_blocks(&blocks, n, covariate, options)
        }
    }
}

/// Individually randomized group treatment design: clustered treatment
/// arm, possibly unclustered control arm, per-arm size, ICC and SD. The
/// covariate is independent (individual level) or cluster constant.
pub fn irgt_variance<T: Real>(
    spec: &DesignSpec,
    covariate: &CovariateModel<T>,
    options: &EngineOptions,
) -> Result<VarianceReport<T>, EngineError> {
    let corr = match covariate.level {
        CovariateLevel::Individual => CovariateCorrelation::independent(),
        CovariateLevel::Cluster => CovariateCorrelation::cluster_level(),
    };
    let cov = CovariateModel { correlation: corr, ..*covariate };
    let blocks = arm_blocks(spec, corr)?;
    let n = T::from_usize_lossy(spec.n_total.max(1));
    report_from_blocks(&blocks, n, &cov, options)
}
