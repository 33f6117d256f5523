//! Outcome and covariate intracluster correlation structures.
//!
//! Every structure supported here is determined by three pairwise
//! correlations between distinct observations of one cluster:
//!
//! * `same_individual`: one individual measured in two different periods,
//! * `within_period`: two individuals in the same period,
//! * `between_period`: two individuals in different periods.
//!
//! Observations of a cluster are indexed period-major,
//! `index = period * m + individual`, in every module of this crate.
//!
//! For three-level designs "period" reads as "subcluster": `alpha1` is the
//! within-subcluster ICC and `alpha2` the between-subcluster ICC.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Square;
use crate::scalar::Real;

/// Eigenvalues at or above this value count as non-negative.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Default cap on the dimension `m * J` of explicitly built matrices.
pub const DEFAULT_MAX_DIMENSION: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelationError {
    #[error("matrix dimension {dim} exceeds the configured cap of {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },
    #[error("correlation matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Exchangeable,
    ArmSpecificExchangeable,
    NestedExchangeable,
    BlockExchangeable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Independent,
    Exchangeable,
    NestedExchangeable,
    ClusterLevelConstant,
    CohortTimeInvariant,
}

/// The three pairwise correlations that pin down a structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseCorrelations<T> {
    pub same_individual: T,
    pub within_period: T,
    pub between_period: T,
}

/// Outcome correlation (alpha parameters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    from = "OutcomeCorrelationInput<T>",
    bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize")
)]
pub struct OutcomeCorrelation<T> {
    pub kind: OutcomeKind,
    /// Within-individual ICC (block exchangeable only).
    pub alpha0: T,
    /// Within-period ICC; for the arm-specific kind, the control-arm ICC.
    pub alpha1: T,
    /// Between-period ICC.
    pub alpha2: T,
    /// `alpha2` was supplied as `CAC * alpha1`.
    pub cac_mode: bool,
    /// (control, treatment) ICCs for the arm-specific kind.
    pub arm_values: Option<(T, T)>,
}

impl<T: Real> OutcomeCorrelation<T> {
    pub fn exchangeable(alpha1: T) -> Self {
        Self {
            kind: OutcomeKind::Exchangeable,
            alpha0: alpha1,
            alpha1,
            alpha2: alpha1,
            cac_mode: false,
            arm_values: None,
        }
    }

    pub fn arm_specific(control: T, treatment: T) -> Self {
        Self {
            kind: OutcomeKind::ArmSpecificExchangeable,
            alpha0: control,
            alpha1: control,
            alpha2: control,
            cac_mode: false,
            arm_values: Some((control, treatment)),
        }
    }

    pub fn nested(alpha1: T, alpha2: T) -> Self {
        Self {
            kind: OutcomeKind::NestedExchangeable,
            alpha0: alpha2,
            alpha1,
            alpha2,
            cac_mode: false,
            arm_values: None,
        }
    }

    pub fn nested_cac(alpha1: T, cac: T) -> Result<Self, CorrelationError> {
        check_cac(cac)?;
        Ok(Self { cac_mode: true, ..Self::nested(alpha1, cac * alpha1) })
    }

    pub fn block(alpha0: T, alpha1: T, alpha2: T) -> Self {
        Self {
            kind: OutcomeKind::BlockExchangeable,
            alpha0,
            alpha1,
            alpha2,
            cac_mode: false,
            arm_values: None,
        }
    }

    pub fn block_cac(alpha0: T, alpha1: T, cac: T) -> Result<Self, CorrelationError> {
        check_cac(cac)?;
        Ok(Self { cac_mode: true, ..Self::block(alpha0, alpha1, cac * alpha1) })
    }

    /// `alpha2 / alpha1`, or 1 when `alpha1` is zero.
    pub fn cac(&self) -> T {
        if self.alpha1 == T::zero() {
            T::one()
        } else {
            self.alpha2 / self.alpha1
        }
    }

    /// The exchangeable structure one arm sees under the arm-specific kind;
    /// other kinds are returned unchanged.
    pub fn for_arm(&self, treated: bool) -> Self {
        match (self.kind, self.arm_values) {
            (OutcomeKind::ArmSpecificExchangeable, Some((c, t))) => {
                Self::exchangeable(if treated { t } else { c })
            }
            _ => *self,
        }
    }

    pub fn pairwise(&self) -> PairwiseCorrelations<T> {
        match self.kind {
            OutcomeKind::Exchangeable | OutcomeKind::ArmSpecificExchangeable => PairwiseCorrelations {
                same_individual: self.alpha1,
                within_period: self.alpha1,
                between_period: self.alpha1,
            },
            OutcomeKind::NestedExchangeable => PairwiseCorrelations {
                same_individual: self.alpha2,
                within_period: self.alpha1,
                between_period: self.alpha2,
            },
            OutcomeKind::BlockExchangeable => PairwiseCorrelations {
                same_individual: self.alpha0,
                within_period: self.alpha1,
                between_period: self.alpha2,
            },
        }
    }

    pub fn structured(&self, m: usize, periods: usize) -> StructuredMatrix<T> {
        StructuredMatrix::from_pairwise(self.pairwise(), m, periods)
    }
}

/// Covariate correlation (rho parameters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    from = "CovariateCorrelationInput<T>",
    bound(deserialize = "T: Real + Deserialize<'de>", serialize = "T: Serialize")
)]
pub struct CovariateCorrelation<T> {
    pub kind: CovariateKind,
    /// Within-cluster ICC for the exchangeable and cohort kinds.
    pub rho0: T,
    /// Within-period ICC (nested kind).
    pub rho1: T,
    /// Between-period ICC (nested kind).
    pub rho2: T,
    pub cac_mode: bool,
}

impl<T: Real> CovariateCorrelation<T> {
    pub fn independent() -> Self {
        Self {
            kind: CovariateKind::Independent,
            rho0: T::zero(),
            rho1: T::zero(),
            rho2: T::zero(),
            cac_mode: false,
        }
    }

    pub fn exchangeable(rho: T) -> Self {
        Self { kind: CovariateKind::Exchangeable, rho0: rho, rho1: rho, rho2: rho, cac_mode: false }
    }

    pub fn nested(rho1: T, rho2: T) -> Self {
        Self { kind: CovariateKind::NestedExchangeable, rho0: rho1, rho1, rho2, cac_mode: false }
    }

    pub fn nested_cac(rho1: T, cac: T) -> Result<Self, CorrelationError> {
        check_cac(cac)?;
        Ok(Self { cac_mode: true, ..Self::nested(rho1, cac * rho1) })
    }

    pub fn cluster_level() -> Self {
        Self {
            kind: CovariateKind::ClusterLevelConstant,
            rho0: T::one(),
            rho1: T::one(),
            rho2: T::one(),
            cac_mode: false,
        }
    }

    /// Same individual perfectly correlated across periods, `rho0` otherwise.
    pub fn cohort_time_invariant(rho0: T) -> Self {
        Self { kind: CovariateKind::CohortTimeInvariant, rho0, rho1: rho0, rho2: rho0, cac_mode: false }
    }

    pub fn pairwise(&self) -> PairwiseCorrelations<T> {
        let (s, w, b) = match self.kind {
            CovariateKind::Independent => (T::zero(), T::zero(), T::zero()),
            CovariateKind::Exchangeable => (self.rho0, self.rho0, self.rho0),
            CovariateKind::NestedExchangeable => (self.rho2, self.rho1, self.rho2),
            CovariateKind::ClusterLevelConstant => (T::one(), T::one(), T::one()),
            CovariateKind::CohortTimeInvariant => (T::one(), self.rho0, self.rho0),
        };
        PairwiseCorrelations { same_individual: s, within_period: w, between_period: b }
    }

    pub fn structured(&self, m: usize, periods: usize) -> StructuredMatrix<T> {
        StructuredMatrix::from_pairwise(self.pairwise(), m, periods)
    }
}

/// Wire form: omitted ICCs default from the kind; `cac` sets the
/// between-period ICC as `cac * alpha1`.
#[derive(Deserialize)]
struct OutcomeCorrelationInput<T> {
    kind: OutcomeKind,
    #[serde(default)]
    alpha0: Option<T>,
    #[serde(default)]
    alpha1: Option<T>,
    #[serde(default)]
    alpha2: Option<T>,
    #[serde(default)]
    cac: Option<T>,
    #[serde(default)]
    cac_mode: bool,
    #[serde(default)]
    arm_values: Option<(T, T)>,
}

impl<T: Real> From<OutcomeCorrelationInput<T>> for OutcomeCorrelation<T> {
    fn from(i: OutcomeCorrelationInput<T>) -> Self {
        let a1 = i.alpha1.unwrap_or_else(T::zero);
        let (a2, cac_mode) = match i.cac {
            Some(c) => (c * a1, true),
            None => (i.alpha2.unwrap_or(a1), i.cac_mode),
        };
        let mut out = match i.kind {
            OutcomeKind::Exchangeable => Self::exchangeable(a1),
            OutcomeKind::ArmSpecificExchangeable => {
                let (c, t) = i.arm_values.unwrap_or((a1, a1));
                Self::arm_specific(c, t)
            }
            OutcomeKind::NestedExchangeable => Self::nested(a1, a2),
            OutcomeKind::BlockExchangeable => Self::block(i.alpha0.unwrap_or(a2), a1, a2),
        };
        out.cac_mode = cac_mode && matches!(i.kind, OutcomeKind::NestedExchangeable | OutcomeKind::BlockExchangeable);
        out
    }
}

#[derive(Deserialize)]
struct CovariateCorrelationInput<T> {
    kind: CovariateKind,
    #[serde(default)]
    rho0: Option<T>,
    #[serde(default)]
    rho1: Option<T>,
    #[serde(default)]
    rho2: Option<T>,
    #[serde(default)]
    cac: Option<T>,
    #[serde(default)]
    cac_mode: bool,
}

impl<T: Real> From<CovariateCorrelationInput<T>> for CovariateCorrelation<T> {
    fn from(i: CovariateCorrelationInput<T>) -> Self {
        let r = i.rho1.or(i.rho0).unwrap_or_else(T::zero);
        match i.kind {
            CovariateKind::Independent => Self::independent(),
            CovariateKind::ClusterLevelConstant => Self::cluster_level(),
            CovariateKind::Exchangeable => Self::exchangeable(r),
            CovariateKind::CohortTimeInvariant => Self::cohort_time_invariant(i.rho0.unwrap_or(r)),
            CovariateKind::NestedExchangeable => {
                let (r2, cac_mode) = match i.cac {
                    Some(c) => (c * r, true),
                    None => (i.rho2.unwrap_or(r), i.cac_mode),
                };
                Self { cac_mode, ..Self::nested(r, r2) }
            }
        }
    }
}

fn check_cac<T: Real>(cac: T) -> Result<(), CorrelationError> {
    if cac < T::zero() || cac > T::one() || cac.is_nan() {
        return Err(CorrelationError::InvalidParameter {
            name: "cac",
            value: cac.as_f64(),
            reason: "cluster autocorrelation must lie in [0, 1]".into(),
        });
    }
    Ok(())
}

/// A cluster-level matrix `A ⊗ I_m + B ⊗ 1_m 1_m'` with `J x J` blocks.
///
/// Every correlation structure above, the diagonal expansion of a treatment
/// row, and all their products and inverses stay inside this family, so
/// cluster-level algebra costs O(J^3) regardless of `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMatrix<T> {
    pub a: Square<T>,
    pub b: Square<T>,
    pub m: usize,
}

impl<T: Real> StructuredMatrix<T> {
    pub fn from_pairwise(p: PairwiseCorrelations<T>, m: usize, periods: usize) -> Self {
        let a = Square::exchangeable(periods, T::one() - p.within_period, p.same_individual - p.between_period);
        let b = Square::exchangeable(periods, p.within_period, p.between_period);
        Self { a, b, m }
    }

    /// `diag(u) ⊗ I_m`.
    pub fn diagonal(profile: &[T], m: usize) -> Self {
        Self { a: Square::diagonal(profile), b: Square::zeros(profile.len()), m }
    }

    pub fn periods(&self) -> usize {
        self.a.dim()
    }

    pub fn dimension(&self) -> usize {
        self.m * self.periods()
    }

    fn mf(&self) -> T {
        T::from_usize_lossy(self.m)
    }

    /// The `J x J` block acting on period totals: `A + m B`.
    pub fn total_block(&self) -> Square<T> {
        self.a.add(&self.b.scale(self.mf()))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.m, other.m);
        let a = self.a.matmul(&other.a);
        let b = self
            .a
            .matmul(&other.b)
            .add(&self.b.matmul(&other.a))
            .add(&self.b.matmul(&other.b).scale(self.mf()));
        Self { a, b, m: self.m }
    }

    pub fn trace(&self) -> T {
        self.mf() * (self.a.trace() + self.b.trace())
    }

    /// Inverse through the two `J x J` blocks `A` and `A + m B`.
    pub fn inverse(&self) -> Option<Self> {
        let a_inv = self.a.spd_inverse()?;
        let c_inv = self.total_block().spd_inverse()?;
        let b = c_inv.sub(&a_inv).scale(T::one() / self.mf());
        Some(Self { a: a_inv, b, m: self.m })
    }

    /// `(a ⊗ 1_m)' M (b ⊗ 1_m)` for period profiles `a`, `b`.
    pub fn profile_form(&self, a: &[T], b: &[T]) -> T {
        self.mf() * self.total_block().bilinear(a, b)
    }

    /// Kernel `K` with `tr(D_a self D_b other) = m * a' K b`, where
    /// `D_a = diag(a) ⊗ I_m`.
    pub fn trace_kernel(&self, other: &Self) -> Square<T> {
        let j = self.periods();
        let mf = self.mf();
        Square::from_fn(j, |r, c| {
            let oa = other.a.get(c, r);
            let ob = other.b.get(c, r);
            self.a.get(r, c) * (oa + ob) + self.b.get(r, c) * (oa + mf * ob)
        })
    }

    /// Explicit `mJ x mJ` matrix.
    pub fn dense(&self) -> Square<T> {
        let m = self.m;
        Square::from_fn(self.dimension(), |p, q| {
            let (jp, kp) = (p / m, p % m);
            let (jq, kq) = (q / m, q % m);
            let ident = if kp == kq { self.a.get(jp, jq) } else { T::zero() };
            ident + self.b.get(jp, jq)
        })
    }
}

fn guard_dimension(m: usize, periods: usize, cap: usize) -> Result<usize, CorrelationError> {
    let dim = m.saturating_mul(periods);
    if dim > cap {
        return Err(CorrelationError::DimensionTooLarge { dim, cap });
    }
    Ok(dim)
}

fn eigen_floor<T: Real>(values: &[T]) -> Result<(), CorrelationError> {
    let min = values.iter().copied().fold(T::infinity(), T::min);
    if min.as_f64() < -PSD_TOLERANCE {
        return Err(CorrelationError::NotPositiveSemidefinite { min_eigenvalue: min.as_f64() });
    }
    Ok(())
}

/// Dense outcome correlation matrix of dimension `m * periods`.
pub fn build_outcome_matrix<T: Real>(
    corr: &OutcomeCorrelation<T>,
    m: usize,
    periods: usize,
) -> Result<Square<T>, CorrelationError> {
    build_outcome_matrix_capped(corr, m, periods, DEFAULT_MAX_DIMENSION)
}

pub fn build_outcome_matrix_capped<T: Real>(
    corr: &OutcomeCorrelation<T>,
    m: usize,
    periods: usize,
    cap: usize,
) -> Result<Square<T>, CorrelationError> {
    guard_dimension(m, periods, cap)?;
    let p = corr.pairwise();
    eigen_floor(&eigenvalues_block(p.same_individual, p.within_period, p.between_period, m, periods))?;
    Ok(corr.structured(m, periods).dense())
}

/// Dense covariate correlation matrix. Singular results are allowed.
pub fn build_covariate_matrix<T: Real>(
    corr: &CovariateCorrelation<T>,
    m: usize,
    periods: usize,
) -> Result<Square<T>, CorrelationError> {
    guard_dimension(m, periods, DEFAULT_MAX_DIMENSION)?;
    let p = corr.pairwise();
    eigen_floor(&eigenvalues_block(p.same_individual, p.within_period, p.between_period, m, periods))?;
    Ok(corr.structured(m, periods).dense())
}

/// Eigenvalues of an `n x n` exchangeable matrix with correlation `rho`:
/// `(1 - rho, 1 + (n - 1) rho)` with multiplicities `(n - 1, 1)`.
pub fn eigenvalues_exchangeable<T: Real>(rho: T, n: usize) -> [T; 2] {
    let nf = T::from_usize_lossy(n);
    [T::one() - rho, T::one() + (nf - T::one()) * rho]
}

/// Nested exchangeable eigenvalues `(λ1, λ2, λ3)`, multiplicities
/// `(J(m-1), J-1, 1)`.
pub fn eigenvalues_nested<T: Real>(alpha1: T, alpha2: T, m: usize, periods: usize) -> [T; 3] {
    let mf = T::from_usize_lossy(m);
    let jf = T::from_usize_lossy(periods);
    let one = T::one();
    [
        one - alpha1,
        one + (mf - one) * alpha1 - mf * alpha2,
        one + (mf - one) * alpha1 + (jf - one) * mf * alpha2,
    ]
}

pub fn multiplicities_nested(m: usize, periods: usize) -> [usize; 3] {
    [periods * (m - 1), periods - 1, 1]
}

/// Block exchangeable eigenvalues `(τ1, τ2, τ3, τ4)`, multiplicities
/// `((J-1)(m-1), J-1, m-1, 1)`.
pub fn eigenvalues_block<T: Real>(alpha0: T, alpha1: T, alpha2: T, m: usize, periods: usize) -> [T; 4] {
    let mf = T::from_usize_lossy(m);
    let jf = T::from_usize_lossy(periods);
    let one = T::one();
    [
        one - alpha1 - alpha0 + alpha2,
        one + (mf - one) * alpha1 - alpha0 - (mf - one) * alpha2,
        one - alpha1 + (jf - one) * (alpha0 - alpha2),
        one + (mf - one) * alpha1 + (jf - one) * alpha0 + (jf - one) * (mf - one) * alpha2,
    ]
}

pub fn multiplicities_block(m: usize, periods: usize) -> [usize; 4] {
    [(periods - 1) * (m - 1), periods - 1, m - 1, 1]
}

impl<T: Real> StructuredMatrix<T> {
    /// Exact inverse of a block exchangeable structure from its eigenvalues
    /// and spectral projectors. `None` if an eigenvalue is not positive.
    pub fn block_exchangeable_inverse(p: PairwiseCorrelations<T>, m: usize, periods: usize) -> Option<Self> {
        let tau = eigenvalues_block(p.same_individual, p.within_period, p.between_period, m, periods);
        let mult = multiplicities_block(m, periods);
        if tau.iter().zip(mult).any(|(&t, k)| k > 0 && t <= T::zero()) {
            return None;
        }
        let inv = |t: T| if t > T::zero() { T::one() / t } else { T::zero() };
        let jf = T::from_usize_lossy(periods);
        let mf = T::from_usize_lossy(m);
        // x Q_J + y P_J as an exchangeable J x J block.
        let proj = |x: T, y: T| Square::exchangeable(periods, x + (y - x) / jf, (y - x) / jf);
        let a = proj(inv(tau[0]), inv(tau[2]));
        let total = proj(inv(tau[1]), inv(tau[3]));
        let b = total.sub(&a).scale(T::one() / mf);
        Some(Self { a, b, m })
    }
}

/// How serious a validation finding is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Hard,
    Advisory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub parameter: String,
    pub message: String,
}

impl Finding {
    fn hard(parameter: &str, message: String) -> Self {
        Self { severity: Severity::Hard, parameter: parameter.into(), message }
    }

    fn advisory(parameter: &str, message: String) -> Self {
        Self { severity: Severity::Advisory, parameter: parameter.into(), message }
    }
}

/// Outcome ICCs above this are flagged as unusual (not an error).
pub const ADVISORY_OUTCOME_ICC: f64 = 0.25;

/// Checks outcome parameters over every cluster-period size in `m_range`.
pub fn validate_outcome<T: Real>(
    corr: &OutcomeCorrelation<T>,
    m_range: (usize, usize),
    periods: usize,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut icc_values = vec![("alpha1", corr.alpha1)];
    if let Some((c, t)) = corr.arm_values {
        icc_values = vec![("alpha1_control", c), ("alpha1_treatment", t)];
    }
    if corr.kind != OutcomeKind::Exchangeable && corr.kind != OutcomeKind::ArmSpecificExchangeable {
        icc_values.push(("alpha2", corr.alpha2));
    }
    if corr.kind == OutcomeKind::BlockExchangeable {
        icc_values.push(("alpha0", corr.alpha0));
    }
    let m_max = m_range.1.max(2);
    let lower = -1.0 / (m_max as f64 - 1.0);
    for &(name, v) in &icc_values {
        let x = v.as_f64();
        if !(lower..=1.0).contains(&x) {
            findings.push(Finding::hard(
                name,
                format!("ICC out of [−1/(m−1), 1]: {name} = {x} (m up to {m_max})"),
            ));
        }
    }
    if corr.cac_mode {
        let cac = corr.cac().as_f64();
        if !(0.0..=1.0).contains(&cac) {
            findings.push(Finding::hard("cac", format!("CAC = {cac} outside [0, 1]")));
        }
    }
    if findings.is_empty() {
        let arms: Vec<OutcomeCorrelation<T>> = match corr.kind {
            OutcomeKind::ArmSpecificExchangeable => vec![corr.for_arm(false), corr.for_arm(true)],
            _ => vec![*corr],
        };
        'outer: for c in &arms {
            let p = c.pairwise();
            for m in m_range.0.max(1)..=m_range.1.max(m_range.0.max(1)) {
                let tau = eigenvalues_block(p.same_individual, p.within_period, p.between_period, m, periods);
                let mult = multiplicities_block(m, periods);
                for (i, (&t, k)) in tau.iter().zip(mult).enumerate() {
                    if k > 0 && t.as_f64() < -PSD_TOLERANCE {
                        findings.push(Finding::hard(
                            "outcome_correlation",
                            format!(
                                "correlation matrix not positive semi-definite at m = {m}, J = {periods}: eigenvalue {} = {:e} < 0",
                                i + 1,
                                t.as_f64()
                            ),
                        ));
                        break 'outer;
                    }
                }
            }
        }
    }
    for &(name, v) in &icc_values {
        if name.starts_with("alpha1") && v.as_f64() > ADVISORY_OUTCOME_ICC {
            findings.push(Finding::advisory(
                name,
                format!("{name} = {} is unusually large; outcome ICCs rarely exceed {ADVISORY_OUTCOME_ICC}", v.as_f64()),
            ));
        }
    }
    if (corr.kind == OutcomeKind::NestedExchangeable || corr.kind == OutcomeKind::BlockExchangeable)
        && corr.alpha2 > corr.alpha1 {
            findings.push(Finding::advisory("alpha2", "between-period ICC exceeds within-period ICC".into()));
        }
    if corr.kind == OutcomeKind::BlockExchangeable && corr.alpha2 > corr.alpha0 {
        findings.push(Finding::advisory("alpha2", "between-period ICC exceeds within-individual ICC".into()));
    }
    findings
}

/// Checks covariate parameters; singular structures pass.
pub fn validate_covariate<T: Real>(
    corr: &CovariateCorrelation<T>,
    m_range: (usize, usize),
    periods: usize,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let m_max = m_range.1.max(2);
    let lower = -1.0 / (m_max as f64 - 1.0);
    let named = [("rho0", corr.rho0), ("rho1", corr.rho1), ("rho2", corr.rho2)];
    for (name, v) in named {
        let x = v.as_f64();
        if !(lower..=1.0).contains(&x) {
            findings.push(Finding::hard(name, format!("ICC out of [−1/(m−1), 1]: {name} = {x}")));
        }
    }
    if corr.cac_mode {
        let cac = if corr.rho1 == T::zero() { 1.0 } else { (corr.rho2 / corr.rho1).as_f64() };
        if !(0.0..=1.0).contains(&cac) {
            findings.push(Finding::hard("cac_covariate", format!("CAC = {cac} outside [0, 1]")));
        }
    }
    if findings.is_empty() {
        let p = corr.pairwise();
        for m in m_range.0.max(1)..=m_range.1.max(m_range.0.max(1)) {
            let tau = eigenvalues_block(p.same_individual, p.within_period, p.between_period, m, periods);
            let min = tau.iter().zip(multiplicities_block(m, periods)).filter(|(_, k)| *k > 0).map(|(t, _)| t.as_f64()).fold(f64::INFINITY, f64::min);
            if min < -PSD_TOLERANCE {
                findings.push(Finding::hard(
                    "covariate_correlation",
                    format!("covariate correlation not positive semi-definite at m = {m}: eigenvalue {min:e}"),
                ));
                break;
            }
        }
    }
    if corr.kind == CovariateKind::NestedExchangeable && corr.rho2 > corr.rho1 {
        findings.push(Finding::advisory("rho2", "between-period covariate ICC exceeds within-period ICC".into()));
    }
    findings
}

pub fn has_hard(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Hard)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_icc_is_identity() {
        let r = build_outcome_matrix(&OutcomeCorrelation::exchangeable(0.0), 3, 1).unwrap();
        assert_eq!(r, Square::identity(3));
    }

    #[test]
    fn nested_two_by_two_transcription() {
        let r = build_outcome_matrix(&OutcomeCorrelation::nested(0.5, 0.25), 2, 2).unwrap();
        let expected = [
            [1.0, 0.5, 0.25, 0.25],
            [0.5, 1.0, 0.25, 0.25],
            [0.25, 0.25, 1.0, 0.5],
            [0.25, 0.25, 0.5, 1.0],
        ];
        assert_eq!(r, Square::from_fn(4, |i, j| expected[i][j]));
    }

    #[test]
    fn block_same_individual_entries() {
        let r = build_outcome_matrix(&OutcomeCorrelation::block(0.7, 0.04, 0.036), 6, 2).unwrap();
        // individual 3 in period 0 vs period 1
        assert_eq!(r.get(3, 6 + 3), 0.7);
        assert_eq!(r.get(3, 4), 0.04);
        assert_eq!(r.get(3, 6 + 4), 0.036);
    }

    #[test]
    fn nested_eigen_examples() {
        assert_eq!(eigenvalues_nested(0.0, 0.0, 5, 3), [1.0, 1.0, 1.0]);
        let l = eigenvalues_nested(0.5, 0.25, 2, 2);
        assert_relative_eq!(l[0], 0.5);
        assert_relative_eq!(l[1], 1.0);
        assert_relative_eq!(l[2], 2.0);
        assert!(eigenvalues_nested(0.022, 0.011, 353, 6).iter().all(|&x| x > 0.0));
    }

    #[test]
    fn block_multiplicities_sum() {
        assert_eq!(multiplicities_block(4, 3), [6, 2, 3, 1]);
        assert_eq!(multiplicities_block(4, 3).iter().sum::<usize>(), 12);
        assert_eq!(eigenvalues_block(0.0, 0.0, 0.0, 4, 3), [1.0; 4]);
    }

    #[test]
    fn covariate_examples() {
        let ind = build_covariate_matrix(&CovariateCorrelation::<f64>::independent(), 3, 2).unwrap();
        assert_eq!(ind, Square::identity(6));
        let ones = build_covariate_matrix(&CovariateCorrelation::<f64>::cluster_level(), 2, 2).unwrap();
        assert_eq!(ones, Square::filled(4, 1.0));
        let coh = build_covariate_matrix(&CovariateCorrelation::cohort_time_invariant(0.2), 2, 2).unwrap();
        let expected = [
            [1.0, 0.2, 1.0, 0.2],
            [0.2, 1.0, 0.2, 1.0],
            [1.0, 0.2, 1.0, 0.2],
            [0.2, 1.0, 0.2, 1.0],
        ];
        assert_eq!(coh, Square::from_fn(4, |i, j| expected[i][j]));
    }

    #[test]
    fn cac_round_trip() {
        let c = OutcomeCorrelation::nested_cac(0.022, 0.5).unwrap();
        assert_eq!(c.alpha2, 0.5 * 0.022);
        assert!(c.cac_mode);
        assert!(OutcomeCorrelation::nested_cac(0.02, 1.5).is_err());
    }

    #[test]
    fn wire_form_accepts_cac() {
        let c: OutcomeCorrelation<f64> =
            serde_json::from_str(r#"{"kind":"nested_exchangeable","alpha1":0.022,"cac":0.5}"#).unwrap();
        assert_eq!(c, OutcomeCorrelation::nested_cac(0.022, 0.5).unwrap());
        let back: OutcomeCorrelation<f64> = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let x: CovariateCorrelation<f64> =
            serde_json::from_str(r#"{"kind":"nested_exchangeable","rho1":0.1,"cac":0.9}"#).unwrap();
        assert_eq!(x.rho2, 0.9 * 0.1);
        let e: CovariateCorrelation<f64> = serde_json::from_str(r#"{"kind":"exchangeable","rho0":0.2}"#).unwrap();
        assert_eq!(e, CovariateCorrelation::exchangeable(0.2));
    }

    #[test]
    fn dimension_cap() {
        let err = build_outcome_matrix_capped(&OutcomeCorrelation::exchangeable(0.1), 100, 3, 200).unwrap_err();
        assert_eq!(err, CorrelationError::DimensionTooLarge { dim: 300, cap: 200 });
    }

    #[test]
    fn non_psd_rejected() {
        let err = build_outcome_matrix(&OutcomeCorrelation::nested(0.01, 0.5), 10, 4).unwrap_err();
        assert!(matches!(err, CorrelationError::NotPositiveSemidefinite { .. }));
    }

    #[test]
    fn validate_examples() {
        assert!(validate_outcome(&OutcomeCorrelation::exchangeable(0.02), (3, 12), 1).is_empty());
        let f = validate_outcome(&OutcomeCorrelation::exchangeable(1.2), (3, 12), 1);
        assert!(has_hard(&f));
        assert!(f[0].message.contains("ICC out of [−1/(m−1), 1]"));
        // λ2 = 1 + 9(0.01) − 10(0.5) < 0
        let f = validate_outcome(&OutcomeCorrelation::nested(0.01, 0.5), (10, 10), 4);
        assert!(has_hard(&f));
        assert!(f.iter().any(|x| x.message.contains("eigenvalue 2")));
    }

    #[test]
    fn large_icc_is_advisory_only() {
        let f = validate_outcome(&OutcomeCorrelation::exchangeable(0.3), (2, 10), 1);
        assert!(!has_hard(&f));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].severity, Severity::Advisory);
    }

    #[test]
    fn singular_covariate_passes_validation() {
        let f = validate_covariate(&CovariateCorrelation::<f64>::cohort_time_invariant(0.2), (2, 20), 3);
        assert!(f.is_empty());
    }

    #[test]
    fn structured_inverse_matches_analytic() {
        let p = OutcomeCorrelation::block(0.6, 0.08, 0.03).pairwise();
        let s = StructuredMatrix::from_pairwise(p, 7, 4);
        let generic = s.inverse().unwrap();
        let analytic = StructuredMatrix::block_exchangeable_inverse(p, 7, 4).unwrap();
        assert!(generic.a.max_abs_diff(&analytic.a) < 1e-12);
        assert!(generic.b.max_abs_diff(&analytic.b) < 1e-12);
        let prod = s.matmul(&analytic).dense();
        assert!(prod.max_abs_diff(&Square::identity(28)) < 1e-12);
    }

    #[test]
    fn trace_kernel_matches_dense_trace() {
        let vi = OutcomeCorrelation::nested(0.1, 0.04).structured(3, 3).inverse().unwrap();
        let rx = CovariateCorrelation::nested(0.3, 0.2).structured(3, 3);
        let a = [1.0, 0.0, 1.0];
        let b = [1.0, 1.0, 0.0];
        let k = vi.trace_kernel(&rx);
        let via_kernel = 3.0 * k.bilinear(&a, &b);
        let da = StructuredMatrix::diagonal(&a, 3);
        let db = StructuredMatrix::diagonal(&b, 3);
        let direct = da.matmul(&vi).matmul(&db).matmul(&rx).dense().trace();
        assert_relative_eq!(via_kernel, direct, epsilon = 1e-12);
    }
}
