//! Closed-form HTE and ATE variances, validated against the engine.
//!
//! Every function returns a normalized variance `n Var` on the engine's
//! per-cluster scale. Printed variants are transcriptions kept for the
//! conformance table; the unsuffixed functions are the ones registered as
//! fast paths.

use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correlation::{
    eigenvalues_block, eigenvalues_exchangeable, eigenvalues_nested, CovariateCorrelation, OutcomeCorrelation,
};
use crate::designs::{ArmParam, ArmParams, DesignSpec, RandomizationLevel, Sampling};
use crate::engine::{design_variance, CovariateLevel, CovariateModel, EngineOptions, OutcomeModel};
use crate::scalar::Real;

/// Relative agreement required for a form to register.
pub const CONFORMANCE_TOLERANCE: f64 = 1e-8;
/// Grid points per registered row.
pub const CONFORMANCE_POINTS: usize = 200;
const CONFORMANCE_SEED: u64 = 20_240_611;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedFormError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("zero or negative denominator; parameters are degenerate")]
    Degenerate,
    #[error("no closed form for this configuration: {0}")]
    Unsupported(String),
}

type Result<T> = std::result::Result<T, ClosedFormError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormResult<T> {
    pub sigma2_norm: T,
    pub formula_id: String,
    pub conformant: bool,
}

fn check_common<T: Real>(m: usize, pi: T, sigma_yx: T, sigma_x: T) -> Result<T> {
    if m < 1 {
        return Err(ClosedFormError::Domain("m must be at least 1".into()));
    }
    if !(pi > T::zero() && pi < T::one()) {
        return Err(ClosedFormError::Domain(format!("pi = {pi} outside (0, 1)")));
    }
    if !(sigma_yx > T::zero() && sigma_x > T::zero()) {
        return Err(ClosedFormError::Domain("standard deviations must be positive".into()));
    }
    Ok(sigma_yx * sigma_yx / (pi * (T::one() - pi) * sigma_x * sigma_x))
}

fn positive<T: Real>(x: T) -> Result<T> {
    if x > T::zero() && x.is_finite() {
        Ok(x)
    } else {
        Err(ClosedFormError::Degenerate)
    }
}

/// `σ²{1+(m-1)α1} / (m π(1-π) σx²)`, the covariate-scaled ATE variance.
pub fn ate_var_two_level<T: Real>(m: usize, alpha1: T, pi: T, sigma_yx: T, sigma_x: T) -> Result<T> {
    let c = check_common(m, pi, sigma_yx, sigma_x)?;
    let mf = T::from_usize_lossy(m);
    positive(c * (T::one() + (mf - T::one()) * alpha1) / mf)
}

/// Two-level parallel HTE variance:
/// `σ_ATE² (1-α1) / {1+(m-2)α1-(m-1)ρ1α1}`.
pub fn hte_var_two_level<T: Real>(m: usize, alpha1: T, rho1: T, pi: T, sigma_yx: T, sigma_x: T) -> Result<T> {
    let ate = ate_var_two_level(m, alpha1, pi, sigma_yx, sigma_x)?;
    let mf = T::from_usize_lossy(m);
    let one = T::one();
    let de = positive(one + (mf - T::lit(2.0)) * alpha1 - (mf - one) * rho1 * alpha1)?;
    positive(ate * (one - alpha1) / de)
}

/// Two-level row with `{1+(m-2)α1}` in the numerator, as printed in the
/// summary table.
pub fn hte_var_two_level_printed<T: Real>(
    m: usize,
    alpha1: T,
    rho1: T,
    pi: T,
    sigma_yx: T,
    sigma_x: T,
) -> Result<T> {
    let c = check_common(m, pi, sigma_yx, sigma_x)?;
    let mf = T::from_usize_lossy(m);
    let one = T::one();
    let two = T::lit(2.0);
    let den = positive(mf * (one + (mf - two) * alpha1 - (mf - one) * rho1 * alpha1))?;
    positive(c * (one - alpha1) * (one + (mf - two) * alpha1) / den)
}

/// `Var_HTE / Var_ATE` on the covariate-scaled convention.
pub fn design_effect_hte<T: Real>(sigma2_hte_norm: T, sigma2_ate_norm: T) -> T {
    sigma2_hte_norm / sigma2_ate_norm
}

/// Within and between ICC pair for nested structures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedIcc<T> {
    pub within: T,
    pub between: T,
}

impl<T: Real> NestedIcc<T> {
    pub fn new(within: T, between: T) -> Self {
        Self { within, between }
    }

    fn eigen(&self, m: usize, groups: usize) -> [T; 3] {
        eigenvalues_nested(self.within, self.between, m, groups)
    }
}

fn three_sum<T: Real>(count1: T, lam: [T; 3], zeta: [T; 3], lead2: T) -> T {
    count1 * zeta[0] / lam[0] + lead2 * zeta[1] / lam[1] + zeta[2] / lam[1] + zeta[1] / lam[2]
}

/// Three-level parallel design with `n_s` subclusters of size `m`.
///
/// Cluster randomization:
/// `c / {n_s(m-1)ζ1/λ1 + (n_s-1)ζ2/λ2 + ζ3/λ3}`.
/// Subcluster randomization (requires `π n_s` integral):
/// `c / {n_s(m-1)ζ1/λ1 + (n_s-2)ζ2/λ2 + ζ3/λ2 + ζ2/λ3}`.
#[allow(clippy::too_many_arguments)]
pub fn hte_var_three_level<T: Real>(
    m: usize,
    n_s: usize,
    alphas: NestedIcc<T>,
    rhos: NestedIcc<T>,
    pi: T,
    sigma_yx: T,
    sigma_x: T,
    level: RandomizationLevel,
) -> Result<T> {
    let c = check_common(m, pi, sigma_yx, sigma_x)?;
    let lam = alphas.eigen(m, n_s);
    let zeta = rhos.eigen(m, n_s);
    let ns = T::from_usize_lossy(n_s);
    let mf = T::from_usize_lossy(m);
    let one = T::one();
    let within = ns * (mf - one);
    let den = match level {
        RandomizationLevel::Cluster => {
            within * zeta[0] / lam[0] + (ns - one) * zeta[1] / lam[1] + zeta[2] / lam[2]
        }
        RandomizationLevel::Subcluster => {
            if n_s < 2 {
                return Err(ClosedFormError::Domain("subcluster randomization needs n_s >= 2".into()));
            }
            let treated = pi * ns;
            if (treated - treated.round()).abs() > T::lit(1e-9) {
                return Err(ClosedFormError::Unsupported("pi * n_s must be an integer".into()));
            }
            three_sum(within, lam, zeta, ns - T::lit(2.0))
        }
    };
    positive(c / positive(den)?)
}

/// Three-level rows as printed, with explicit eigenvalue arrays.
#[allow(clippy::too_many_arguments)]
pub fn hte_var_three_level_printed_eigen<T: Real>(
    m: usize,
    n_s: usize,
    lam: [T; 3],
    zeta: [T; 3],
    rho_within: T,
    c: T,
    level: RandomizationLevel,
) -> Result<T> {
    let ns = T::from_usize_lossy(n_s);
    let mf = T::from_usize_lossy(m);
    let one = T::one();
    match level {
        RandomizationLevel::Cluster => {
            let den = zeta[2] / lam[2] + (ns - one) * zeta[1] / lam[1] + ns * (mf - one) * zeta[0] / lam[0];
            positive(c * ns * mf / positive(den)?)
        }
        RandomizationLevel::Subcluster => {
            let den = mf / lam[0] - (one + (mf - one) * rho_within) * (one / lam[0] - one / lam[1]);
            positive(c * mf / positive(den)?)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn hte_var_three_level_printed<T: Real>(
    m: usize,
    n_s: usize,
    alphas: NestedIcc<T>,
    rhos: NestedIcc<T>,
    pi: T,
    sigma_yx: T,
    sigma_x: T,
    level: RandomizationLevel,
) -> Result<T> {
    let c = check_common(m, pi, sigma_yx, sigma_x)?;
    hte_var_three_level_printed_eigen(m, n_s, alphas.eigen(m, n_s), rhos.eigen(m, n_s), rhos.within, c, level)
}

fn even_periods(j: usize) -> Result<()> {
    if j < 2 || !j.is_multiple_of(2) {
        return Err(ClosedFormError::Unsupported(format!(
            "crossover closed forms need an even number of periods (J = {j})"
        )));
    }
    Ok(())
}

/// Cross-sectional crossover with alternating sequences, even `J`,
/// period-specific covariate effects:
/// `c / {J(m-1)ζ1/λ1 + (J-2)ζ2/λ2 + ζ3/λ2 + ζ2/λ3}`.
#[allow(clippy::too_many_arguments)]
pub fn hte_var_crxo_cross_sectional<T: Real>(
    m: usize,
    periods: usize,
    alphas: NestedIcc<T>,
    rhos: NestedIcc<T>,
    pi: T,
    sigma_yx: T,
    sigma_x: T,
) -> Result<T> {
    let c = check_common(m, pi, sigma_yx, sigma_x)?;
    even_periods(periods)?;
    let jf = T::from_usize_lossy(periods);
    let mf = T::from_usize_lossy(m);
    let lam = alphas.eigen(m, periods);
    let zeta = rhos.eigen(m, periods);
    let den = three_sum(jf * (mf - T::one()), lam, zeta, jf - T::lit(2.0));
    positive(c / positive(den)?)
}

/// Printed cross-sectional crossover row on explicit eigenvalues:
/// `c / {2(J-1)ζ1/λ1 + ζ3/λ2 + ζ2/λ3}`.
pub fn hte_var_crxo_cross_sectional_printed_eigen<T: Real>(periods: usize, lam: [T; 3], zeta: [T; 3], c: T) -> Result<T> {
    let jf = T::from_usize_lossy(periods);
    let two = T::lit(2.0);
    let den = two * (jf - T::one()) * zeta[0] / lam[0] + zeta[2] / lam[1] + zeta[1] / lam[2];
    positive(c / positive(den)?)
}

#[allow(clippy::too_many_arguments)]
pub fn hte_var_crxo_cross_sectional_printed<T: Real>(
    m: usize,
    periods: usize,
    alphas: NestedIcc<T>,
    rhos: NestedIcc<T>,
    pi: T,
    sigma_yx: T,
    sigma_x: T,
) -> Result<T> {
    let c = check_common(m, pi, sigma_yx, sigma_x)?;
    hte_var_crxo_cross_sectional_printed_eigen(periods, alphas.eigen(m, periods), rhos.eigen(m, periods), c)
}

/// Block exchangeable ICC triple `(α0, α1, α2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockIcc<T> {
    pub alpha0: T,
    pub alpha1: T,
    pub alpha2: T,
}

impl<T: Real> BlockIcc<T> {
    pub fn new(alpha0: T, alpha1: T, alpha2: T) -> Self {
        Self { alpha0, alpha1, alpha2 }
    }
}

/// Closed-cohort crossover, even `J`, time-invariant covariate:
/// `c / [J{(m-1)η1/τ1 + η2/τ2}]`.
#[allow(clippy::too_many_arguments)]
pub fn hte_var_crxo_cohort<T: Real>(
    m: usize,
    periods: usize,
    alphas: BlockIcc<T>,
    rho0: T,
    pi: T,
    sigma_yx: T,
    sigma_x: T,
) -> Result<T> {
    let c = check_common(m, pi, sigma_yx, sigma_x)?;
    even_periods(periods)?;
    let tau = eigenvalues_block(alphas.alpha0, alphas.alpha1, alphas.alpha2, m, periods);
    let eta = eigenvalues_exchangeable(rho0, m);
    let jf = T::from_usize_lossy(periods);
    let mf = T::from_usize_lossy(m);
    let den = jf * ((mf - T::one()) * eta[0] / tau[0] + eta[1] / tau[1]);
    positive(c / positive(den)?)
}

/// Printed cohort crossover row: `c / [2{(J-1)η1/τ1 + η2/τ3}]`.
pub fn hte_var_crxo_cohort_printed_eigen<T: Real>(periods: usize, tau: [T; 4], eta: [T; 2], c: T) -> Result<T> {
    let jf = T::from_usize_lossy(periods);
    let den = T::lit(2.0) * ((jf - T::one()) * eta[0] / tau[0] + eta[1] / tau[2]);
    positive(c / positive(den)?)
}

#[allow(clippy::too_many_arguments)]
pub fn hte_var_crxo_cohort_printed<T: Real>(
    m: usize,
    periods: usize,
    alphas: BlockIcc<T>,
    rho0: T,
    pi: T,
    sigma_yx: T,
    sigma_x: T,
) -> Result<T> {
    let c = check_common(m, pi, sigma_yx, sigma_x)?;
    let tau = eigenvalues_block(alphas.alpha0, alphas.alpha1, alphas.alpha2, m, periods);
    hte_var_crxo_cohort_printed_eigen(periods, tau, eigenvalues_exchangeable(rho0, m), c)
}

/// One IRGT arm: size, ICC, outcome SD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrgtArm<T> {
    pub m: usize,
    pub alpha1: T,
    pub sigma: T,
}

/// IRGT variance, sum of per-arm slope variances.
pub fn hte_var_irgt<T: Real>(
    treatment: IrgtArm<T>,
    control: IrgtArm<T>,
    pi: T,
    sigma_x: T,
    level: CovariateLevel,
) -> Result<T> {
    if !(pi > T::zero() && pi < T::one()) {
        return Err(ClosedFormError::Domain(format!("pi = {pi} outside (0, 1)")));
    }
    if !(sigma_x > T::zero()) {
        return Err(ClosedFormError::Domain("sigma_x must be positive".into()));
    }
    let one = T::one();
    let two = T::lit(2.0);
    let arm = |a: IrgtArm<T>, share: T| -> Result<T> {
        if a.m < 1 || !(a.sigma > T::zero()) {
            return Err(ClosedFormError::Domain("arm size and SD must be positive".into()));
        }
        let mf = T::from_usize_lossy(a.m);
        let de = one + (mf - one) * a.alpha1;
        let base = a.sigma * a.sigma * de / (sigma_x * sigma_x * share * mf);
        match level {
            CovariateLevel::Cluster => positive(base),
            CovariateLevel::Individual => {
                let d = positive(one + (mf - two) * a.alpha1)?;
                positive(base * (one - a.alpha1) / d)
            }
        }
    };
    Ok(arm(treatment, pi)? + arm(control, one - pi)?)
}

// ---------------------------------------------------------------------------
// Conformance registry
// ---------------------------------------------------------------------------

/// One row of the conformance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceRow {
    pub formula_id: String,
    pub design: String,
    pub variant: String,
    pub domain: String,
    /// Eigenvalue-label mapping that best matched the engine.
    pub mapping: String,
    pub points: usize,
    pub max_rel_error: f64,
    pub conformant: bool,
    pub registered: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceTable {
    pub tolerance: f64,
    pub rows: Vec<ConformanceRow>,
}

impl ConformanceTable {
    pub fn row(&self, formula_id: &str) -> Option<&ConformanceRow> {
        self.rows.iter().find(|r| r.formula_id == formula_id)
    }

    /// Registered fast path for `formula_id`, if it conformed.
    pub fn is_registered(&self, formula_id: &str) -> bool {
        self.row(formula_id).is_some_and(|r| r.registered && r.conformant)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Closed-form conformance\n");
        let _ = writeln!(
            s,
            "Generated by `clusterhte conformance`. Each closed form is compared with the\n\
             expected-information engine on {CONFORMANCE_POINTS} seeded random parameter points.\n\
             A form conforms when the largest relative error is below {:e}.\n\
             Printed variants are tried under every relabelling of the eigenvalues;\n\
             the mapping column shows the best one (`identity` means canonical order).\n",
            self.tolerance
        );
        let _ = writeln!(s, "| formula | design | variant | domain | mapping | max rel. error | conformant | registered |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| `{}` | {} | {} | {} | {} | {:.3e} | {} | {} |",
                r.formula_id,
                r.design,
                r.variant,
                r.domain,
                r.mapping,
                r.max_rel_error,
                if r.conformant { "yes" } else { "no" },
                if r.registered { "yes" } else { "no" }
            );
        }
        let _ = writeln!(s, "\n## Notes\n");
        for r in &self.rows {
            if !r.note.is_empty() {
                let _ = writeln!(s, "- `{}`: {}", r.formula_id, r.note);
            }
        }
        s
    }
}

fn permutations<const N: usize>() -> Vec<[usize; N]> {
    fn rec<const N: usize>(cur: &mut Vec<usize>, used: &mut [bool; N], out: &mut Vec<[usize; N]>) {
        if cur.len() == N {
            let mut a = [0; N];
            a.copy_from_slice(cur);
            out.push(a);
            return;
        }
        for i in 0..N {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec::<N>(&mut Vec::new(), &mut [false; N], &mut out);
    out
}

fn permute<const N: usize>(v: [f64; N], p: &[usize; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = v[p[i]];
    }
    out
}

fn label<const N: usize>(sym: &str, p: &[usize; N]) -> String {
    if p.iter().enumerate().all(|(i, &x)| i == x) {
        return String::new();
    }
    let parts: Vec<String> = p.iter().enumerate().map(|(i, &x)| format!("{sym}{}→{sym}{}", i + 1, x + 1)).collect();
    parts.join(",")
}

fn rel(a: f64, b: f64) -> f64 {
    if !a.is_finite() || !b.is_finite() {
        return f64::INFINITY;
    }
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Tracks the best candidate over permutations across all grid points.
struct Search {
    labels: Vec<String>,
    worst: Vec<f64>,
}

impl Search {
    fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self { labels, worst: vec![0.0; n] }
    }

    fn update(&mut self, k: usize, err: f64) {
        if err.is_nan() || err > self.worst[k] {
            self.worst[k] = if err.is_nan() { f64::INFINITY } else { err };
        }
    }

    fn best(&self) -> (String, f64) {
        let (k, e) = self
            .worst
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(k, &e)| (k, e))
            .unwrap_or((0, f64::INFINITY));
        let l = if self.labels[k].is_empty() { "identity".to_string() } else { self.labels[k].clone() };
        (l, e)
    }
}

fn row(
    id: &str,
    design: &str,
    variant: &str,
    domain: &str,
    registered: bool,
    search: &Search,
    note: &str,
) -> ConformanceRow {
    let (mapping, err) = search.best();
    ConformanceRow {
        formula_id: id.into(),
        design: design.into(),
        variant: variant.into(),
        domain: domain.into(),
        mapping,
        points: CONFORMANCE_POINTS,
        max_rel_error: err,
        conformant: err <= CONFORMANCE_TOLERANCE,
        registered,
        note: note.into(),
    }
}

struct Sampler(ChaCha8Rng);

impl Sampler {
    fn u(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.random_range(lo..hi)
    }

    fn i(&mut self, lo: usize, hi: usize) -> usize {
        self.0.random_range(lo..=hi)
    }
}

fn engine_hte(spec: &DesignSpec, m: usize, out: OutcomeModel<f64>, cov: CovariateModel<f64>) -> f64 {
    design_variance(spec, None, m, &out, &cov, &EngineOptions::default())
        .ok()
        .and_then(|r| r.sigma2_hte_norm)
        .unwrap_or(f64::NAN)
}

fn two_level_rows(rng: &mut Sampler) -> Vec<ConformanceRow> {
    let mut text = Search::new(vec![String::new()]);
    let mut printed = Search::new(vec![String::new()]);
    let mut ate = Search::new(vec![String::new()]);
    for _ in 0..CONFORMANCE_POINTS {
        let m = rng.i(1, 60);
        let a1 = rng.u(0.0, 0.3);
        let r1 = rng.u(0.0, 0.95);
        let pi = rng.u(0.15, 0.85);
        let s = rng.u(0.5, 2.0);
        let sx = rng.u(0.3, 2.0);
        let spec = DesignSpec::parallel(100, pi);
        let out = OutcomeModel::new(s, OutcomeCorrelation::exchangeable(a1));
        let cov = CovariateModel::continuous(0.0, sx, CovariateCorrelation::exchangeable(r1));
        let rep = design_variance(&spec, None, m, &out, &cov, &EngineOptions::default()).expect("engine");
        let e = rep.sigma2_hte_norm.unwrap_or(f64::NAN);
        text.update(0, rel(hte_var_two_level(m, a1, r1, pi, s, sx).unwrap_or(f64::NAN), e));
        printed.update(0, rel(hte_var_two_level_printed(m, a1, r1, pi, s, sx).unwrap_or(f64::NAN), e));
        let ea = rep.sigma2_ate_norm.unwrap_or(f64::NAN) / (sx * sx);
        ate.update(0, rel(ate_var_two_level(m, a1, pi, s, sx).unwrap_or(f64::NAN), ea));
    }
    vec![
        row(
            "ate_two_level",
            "parallel two-level",
            "ATE",
            "m 1-60",
            true,
            &ate,
            "Covariate-scaled: equals the engine's n·Var(β̂1) divided by σx².",
        ),
        row(
            "hte_two_level",
            "parallel two-level",
            "HTE, σ_ATE²·(1-α1)/{1+(m-2)α1-(m-1)ρ1α1}",
            "m 1-60",
            true,
            &text,
            "Text expression with {1+(m-1)α1} inside σ_ATE². Reproduces the 35/48/39/55 cluster counts.",
        ),
        row(
            "hte_two_level_printed",
            "parallel two-level",
            "HTE, summary-table row ({1+(m-2)α1} numerator)",
            "m 1-60",
            false,
            &printed,
            "Differs from the engine by the factor {1+(m-2)α1}/{1+(m-1)α1}; gives 1.601 instead of 1.628 at α1=0.02, ρ1=0.2, m=11.",
        ),
    ]
}

fn three_level_rows(rng: &mut Sampler) -> Vec<ConformanceRow> {
    let perms = permutations::<3>();
    let labels: Vec<String> = perms
        .iter()
        .flat_map(|p| perms.iter().map(move |q| [label("λ", p), label("ζ", q)].iter().filter(|s| !s.is_empty()).cloned().collect::<Vec<_>>().join(",")))
        .collect();
    let mut cl = Search::new(vec![String::new()]);
    let mut sub = Search::new(vec![String::new()]);
    let mut cl_printed = Search::new(labels.clone());
    let mut sub_printed = Search::new(labels);
    for _ in 0..CONFORMANCE_POINTS {
        let ns = rng.i(2, 8);
        let m = rng.i(2, 40);
        let aw = rng.u(0.0, 0.25);
        let ab = aw * rng.u(0.0, 1.0);
        let rw = rng.u(0.0, 0.6);
        let rb = rw * rng.u(0.0, 1.0);
        let k = rng.i(1, ns - 1);
        let pi_sub = k as f64 / ns as f64;
        let pi = rng.u(0.2, 0.8);
        let s = rng.u(0.5, 2.0);
        let sx = rng.u(0.3, 2.0);
        let alphas = NestedIcc::new(aw, ab);
        let rhos = NestedIcc::new(rw, rb);
        let out = OutcomeModel::new(s, OutcomeCorrelation::nested(aw, ab));
        let cov = CovariateModel::continuous(0.0, sx, CovariateCorrelation::nested(rw, rb));
        let lam = alphas.eigen(m, ns);
        let zeta = rhos.eigen(m, ns);
        for (level, p, reg, printed) in [
            (RandomizationLevel::Cluster, pi, &mut cl, &mut cl_printed),
            (RandomizationLevel::Subcluster, pi_sub, &mut sub, &mut sub_printed),
        ] {
            let spec = DesignSpec::three_level(100, ns, p, level);
            let e = engine_hte(&spec, m, out, cov);
            reg.update(0, rel(hte_var_three_level(m, ns, alphas, rhos, p, s, sx, level).unwrap_or(f64::NAN), e));
            let c = s * s / (p * (1.0 - p) * sx * sx);
            let mut k = 0;
            for pl in &perms {
                for pz in &perms {
                    let v = hte_var_three_level_printed_eigen(m, ns, permute(lam, pl), permute(zeta, pz), rw, c, level)
                        .unwrap_or(f64::NAN);
                    printed.update(k, rel(v, e));
                    k += 1;
                }
            }
        }
    }
    vec![
        row(
            "hte_three_level_cluster",
            "parallel three-level",
            "cluster randomization, per-cluster normalization",
            "n_s 2-8, m 2-40",
            true,
            &cl,
            "Printed row divided by n_s·m: the printed expression is normalized per subcluster member, the engine per cluster.",
        ),
        row(
            "hte_three_level_cluster_printed",
            "parallel three-level",
            "cluster randomization as printed",
            "n_s 2-8, m 2-40",
            false,
            &cl_printed,
            "Off by exactly n_s·m under every mapping (normalization only).",
        ),
        row(
            "hte_three_level_subcluster",
            "parallel three-level",
            "subcluster randomization, c/{n_s(m-1)ζ1/λ1+(n_s-2)ζ2/λ2+ζ3/λ2+ζ2/λ3}",
            "n_s 2-8, π·n_s integral",
            true,
            &sub,
            "Derived from the eigenstructure; exact for any integral number of treated subclusters.",
        ),
        row(
            "hte_three_level_subcluster_printed",
            "parallel three-level",
            "subcluster randomization as printed",
            "n_s 2-8",
            false,
            &sub_printed,
            "Omits the λ3 direction; a large-n_s approximation.",
        ),
    ]
}

fn crxo_cs_rows(rng: &mut Sampler) -> Vec<ConformanceRow> {
    let perms = permutations::<3>();
    let labels: Vec<String> = perms
        .iter()
        .flat_map(|p| perms.iter().map(move |q| [label("λ", p), label("ζ", q)].iter().filter(|s| !s.is_empty()).cloned().collect::<Vec<_>>().join(",")))
        .collect();
    let mut derived = Search::new(vec![String::new()]);
    let mut printed = Search::new(labels);
    for _ in 0..CONFORMANCE_POINTS {
        let j = 2 * rng.i(1, 4);
        let m = rng.i(2, 60);
        let aw = rng.u(0.0, 0.25);
        let ab = aw * rng.u(0.0, 1.0);
        let rw = rng.u(0.0, 0.6);
        let rb = rw * rng.u(0.0, 1.0);
        let pi = rng.u(0.2, 0.8);
        let s = rng.u(0.5, 2.0);
        let sx = rng.u(0.3, 2.0);
        let spec = DesignSpec::crxo_multi_period(j, 100, pi);
        let out = OutcomeModel::new(s, OutcomeCorrelation::nested(aw, ab));
        let cov = CovariateModel::continuous(0.0, sx, CovariateCorrelation::nested(rw, rb));
        let e = engine_hte(&spec, m, out, cov);
        let alphas = NestedIcc::new(aw, ab);
        let rhos = NestedIcc::new(rw, rb);
        derived.update(0, rel(hte_var_crxo_cross_sectional(m, j, alphas, rhos, pi, s, sx).unwrap_or(f64::NAN), e));
        let c = s * s / (pi * (1.0 - pi) * sx * sx);
        let (lam, zeta) = (alphas.eigen(m, j), rhos.eigen(m, j));
        let mut k = 0;
        for pl in &perms {
            for pz in &perms {
                let v = hte_var_crxo_cross_sectional_printed_eigen(j, permute(lam, pl), permute(zeta, pz), c).unwrap_or(f64::NAN);
                printed.update(k, rel(v, e));
                k += 1;
            }
        }
    }
    vec![
        row(
            "hte_crxo_cross_sectional",
            "multi-period CRXO, cross-sectional",
            "c/{J(m-1)ζ1/λ1+(J-2)ζ2/λ2+ζ3/λ2+ζ2/λ3}",
            "even J 2-8, alternating sequences",
            true,
            &derived,
            "Derived form; equals the printed row at J=2 once 2(J-1) reads 2(m-1). The crossed ζ3/λ2 + ζ2/λ3 pairing is confirmed. Odd J is served by the engine.",
        ),
        row(
            "hte_crxo_cross_sectional_printed",
            "multi-period CRXO, cross-sectional",
            "as printed",
            "even J 2-8",
            false,
            &printed,
            "No relabelling of the eigenvalues matches the engine.",
        ),
    ]
}

fn crxo_cohort_rows(rng: &mut Sampler) -> Vec<ConformanceRow> {
    let p4 = permutations::<4>();
    let p2 = permutations::<2>();
    let labels: Vec<String> = p4
        .iter()
        .flat_map(|p| p2.iter().map(move |q| [label("τ", p), label("η", q)].iter().filter(|s| !s.is_empty()).cloned().collect::<Vec<_>>().join(",")))
        .collect();
    let mut derived = Search::new(vec![String::new()]);
    let mut printed = Search::new(labels);
    for _ in 0..CONFORMANCE_POINTS {
        let j = 2 * rng.i(1, 4);
        let m = rng.i(2, 60);
        let (a0, a1, a2) = loop {
            let a1 = rng.u(0.0, 0.2);
            let a2 = a1 * rng.u(0.0, 1.0);
            let a0 = rng.u(a2, 0.9);
            if eigenvalues_block(a0, a1, a2, m, j).iter().all(|&t| t > 1e-3) {
                break (a0, a1, a2);
            }
        };
        let r0 = rng.u(0.0, 0.6);
        let pi = rng.u(0.2, 0.8);
        let s = rng.u(0.5, 2.0);
        let sx = rng.u(0.3, 2.0);
        let spec = DesignSpec::crxo_multi_period(j, 100, pi).with_sampling(Sampling::ClosedCohort);
        let out = OutcomeModel::new(s, OutcomeCorrelation::block(a0, a1, a2));
        let cov = CovariateModel::continuous(0.0, sx, CovariateCorrelation::cohort_time_invariant(r0));
        let e = engine_hte(&spec, m, out, cov);
        let alphas = BlockIcc::new(a0, a1, a2);
        derived.update(0, rel(hte_var_crxo_cohort(m, j, alphas, r0, pi, s, sx).unwrap_or(f64::NAN), e));
        let c = s * s / (pi * (1.0 - pi) * sx * sx);
        let tau = eigenvalues_block(a0, a1, a2, m, j);
        let eta = eigenvalues_exchangeable(r0, m);
        let mut k = 0;
        for pt in &p4 {
            for pe in &p2 {
                let v = hte_var_crxo_cohort_printed_eigen(j, permute(tau, pt), permute(eta, pe), c).unwrap_or(f64::NAN);
                printed.update(k, rel(v, e));
                k += 1;
            }
        }
    }
    vec![
        row(
            "hte_crxo_cohort",
            "multi-period CRXO, closed cohort",
            "c/[J{(m-1)η1/τ1+η2/τ2}]",
            "even J 2-8, time-invariant covariate",
            true,
            &derived,
            "Derived form; equals the printed row at J=2 once (J-1) reads (m-1) and the printed τ3 is the canonical τ2.",
        ),
        row(
            "hte_crxo_cohort_printed",
            "multi-period CRXO, closed cohort",
            "as printed",
            "even J 2-8",
            false,
            &printed,
            "No relabelling of τ or η matches the engine.",
        ),
    ]
}

fn irgt_rows(rng: &mut Sampler) -> Vec<ConformanceRow> {
    let mut ind = Search::new(vec![String::new()]);
    let mut clu = Search::new(vec![String::new()]);
    for _ in 0..CONFORMANCE_POINTS {
        let t = IrgtArm { m: rng.i(1, 30), alpha1: rng.u(0.0, 0.3), sigma: rng.u(0.5, 2.0) };
        let c = IrgtArm { m: rng.i(1, 30), alpha1: rng.u(0.0, 0.3), sigma: rng.u(0.5, 2.0) };
        let pi = rng.u(0.2, 0.8);
        let sx = rng.u(0.3, 2.0);
        let arms = ArmParams {
            treatment: ArmParam { m: t.m, alpha1: t.alpha1, sigma: t.sigma },
            control: ArmParam { m: c.m, alpha1: c.alpha1, sigma: c.sigma },
        };
        let spec = DesignSpec::irgt(100, pi, arms);
        for (level, search) in [(CovariateLevel::Individual, &mut ind), (CovariateLevel::Cluster, &mut clu)] {
            let mut cov = CovariateModel::continuous(0.0, sx, CovariateCorrelation::independent());
            if level == CovariateLevel::Cluster {
                cov = cov.cluster_level();
            }
            let e = crate::engine::irgt_variance(&spec, &cov, &EngineOptions::default())
                .ok()
                .and_then(|r| r.sigma2_hte_norm)
                .unwrap_or(f64::NAN);
            search.update(0, rel(hte_var_irgt(t, c, pi, sx, level).unwrap_or(f64::NAN), e));
        }
    }
    vec![
        row("hte_irgt_individual", "IRGT", "individual-level covariate", "m 1-30 per arm", true, &ind, ""),
        row("hte_irgt_cluster", "IRGT", "cluster-level covariate", "m 1-30 per arm", true, &clu, ""),
    ]
}

/// Runs the full engine comparison.
pub fn build_conformance_table() -> ConformanceTable {
    let mut rng = Sampler(ChaCha8Rng::seed_from_u64(CONFORMANCE_SEED));
    let mut rows = Vec::new();
    rows.extend(two_level_rows(&mut rng));
    rows.extend(three_level_rows(&mut rng));
    rows.extend(crxo_cs_rows(&mut rng));
    rows.extend(crxo_cohort_rows(&mut rng));
    rows.extend(irgt_rows(&mut rng));
    rows.push(ConformanceRow {
        formula_id: "hte_stepped_wedge".into(),
        design: "stepped wedge".into(),
        variant: "not transcribed".into(),
        domain: "-".into(),
        mapping: "-".into(),
        points: 0,
        max_rel_error: f64::NAN,
        conformant: false,
        registered: false,
        note: "Terms tr(Ω_W), τ_W, θ^CS and θ^CC have no definition to check against; stepped wedge variances come from the engine.".into(),
    });
    ConformanceTable { tolerance: CONFORMANCE_TOLERANCE, rows }
}

/// Conformance table, computed once per process.
///
/// # Panics
/// If a form registered as a fast path fails to conform.
pub fn conformance() -> &'static ConformanceTable {
    static TABLE: OnceLock<ConformanceTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let table = build_conformance_table();
        for r in &table.rows {
            assert!(
                !r.registered || r.conformant,
                "closed form {} failed registration: max relative error {:e}",
                r.formula_id,
                r.max_rel_error
            );
        }
        table
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ate_examples() {
        assert_relative_eq!(ate_var_two_level(1, 0.3, 0.5, 1.0, 1.0).unwrap(), 4.0);
        assert_relative_eq!(ate_var_two_level(10, 0.0, 0.5, 1.0, 1.0).unwrap(), 0.4);
        let v = ate_var_two_level(11, 0.02, 0.5, 1.0, 0.2304_f64.sqrt()).unwrap();
        assert_relative_eq!(v, 1.2 / (11.0 * 0.25 * 0.2304), max_relative = 1e-12);
        assert!((v - 1.894).abs() < 1e-3);
    }

    #[test]
    fn hte_two_level_values() {
        let sx = 0.2304_f64.sqrt();
        let v = hte_var_two_level(11, 0.02, 0.2, 0.5, 1.0, sx).unwrap();
        assert_relative_eq!(v, 1.628123, epsilon = 1e-6);
        let p = hte_var_two_level_printed(11, 0.02, 0.2, 0.5, 1.0, sx).unwrap();
        assert!((p - 1.601).abs() < 1e-3);
        assert_relative_eq!(hte_var_two_level(10, 0.0, 0.4, 0.5, 1.0, 1.0).unwrap(), 0.4);
    }

    #[test]
    fn design_effect_at_m1_is_one() {
        let h = hte_var_two_level(1, 0.1, 0.3, 0.5, 1.0, 1.0).unwrap();
        let a = ate_var_two_level(1, 0.1, 0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(design_effect_hte(h, a), 1.0, epsilon = 1e-12);
        assert_eq!(design_effect_hte(2.0, 2.0), 1.0);
    }

    #[test]
    fn rho_one_matches_cluster_level_irgt_shape() {
        let h = hte_var_two_level(9, 0.07, 1.0, 0.5, 1.0, 1.0).unwrap();
        let a = ate_var_two_level(9, 0.07, 0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(h, a, max_relative = 1e-12);
    }

    #[test]
    fn iid_reductions() {
        let z = NestedIcc::new(0.0, 0.0);
        let v = hte_var_three_level(10, 4, z, z, 0.5, 1.0, 1.0, RandomizationLevel::Cluster).unwrap();
        assert_relative_eq!(v, 4.0 / 40.0, max_relative = 1e-12);
        let v = hte_var_crxo_cross_sectional(10, 4, z, z, 0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 4.0 / 40.0, max_relative = 1e-12);
        let b = BlockIcc::new(0.0, 0.0, 0.0);
        let v = hte_var_crxo_cohort(10, 4, b, 0.0, 0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 4.0 / 40.0, max_relative = 1e-12);
    }

    #[test]
    fn odd_crossover_unsupported() {
        let z = NestedIcc::new(0.01, 0.005);
        assert!(matches!(
            hte_var_crxo_cross_sectional(10, 3, z, z, 0.5, 1.0, 1.0),
            Err(ClosedFormError::Unsupported(_))
        ));
    }

    #[test]
    fn irgt_reductions() {
        let a = IrgtArm { m: 8, alpha1: 0.0, sigma: 1.0 };
        assert_relative_eq!(hte_var_irgt(a, a, 0.5, 1.0, CovariateLevel::Cluster).unwrap(), 4.0 / 8.0);
        let b = IrgtArm { m: 1, alpha1: 0.2, sigma: 1.3 };
        let i = hte_var_irgt(b, b, 0.5, 1.0, CovariateLevel::Individual).unwrap();
        let c = hte_var_irgt(b, b, 0.5, 1.0, CovariateLevel::Cluster).unwrap();
        assert_relative_eq!(i, c, max_relative = 1e-12);
    }

    #[test]
    fn permutation_count() {
        assert_eq!(permutations::<3>().len(), 6);
        assert_eq!(permutations::<4>().len(), 24);
        assert_eq!(label("λ", &[0, 1, 2]), "");
        assert_eq!(label("λ", &[1, 0, 2]), "λ1→λ2,λ2→λ1,λ3→λ3");
    }
}
