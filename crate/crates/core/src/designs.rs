//! Treatment-sequence matrices for the supported design families and the
//! CSV design format.
//!
//! CSV layout: comma separated, LF line endings, one row per sequence and
//! one 0/1 column per period. An optional header `n_clusters,p1,...,pJ`
//! adds a leading column of cluster counts; without it every row carries
//! one cluster.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignFamily {
    ParallelTwoLevel,
    ParallelTwoLevelByArm,
    ParallelThreeLevel,
    MultiPeriodParallel,
    CrxoTwoPeriod,
    CrxoMultiPeriod,
    SteppedWedge,
    Irgt,
    Custom,
}

impl DesignFamily {
    pub const ALL: [DesignFamily; 9] = [
        DesignFamily::ParallelTwoLevel,
        DesignFamily::ParallelTwoLevelByArm,
        DesignFamily::ParallelThreeLevel,
        DesignFamily::MultiPeriodParallel,
        DesignFamily::CrxoTwoPeriod,
        DesignFamily::CrxoMultiPeriod,
        DesignFamily::SteppedWedge,
        DesignFamily::Irgt,
        DesignFamily::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignFamily::ParallelTwoLevel => "parallel_two_level",
            DesignFamily::ParallelTwoLevelByArm => "parallel_two_level_by_arm",
            DesignFamily::ParallelThreeLevel => "parallel_three_level",
            DesignFamily::MultiPeriodParallel => "multi_period_parallel",
            DesignFamily::CrxoTwoPeriod => "crxo_two_period",
            DesignFamily::CrxoMultiPeriod => "crxo_multi_period",
            DesignFamily::SteppedWedge => "stepped_wedge",
            DesignFamily::Irgt => "irgt",
            DesignFamily::Custom => "custom",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    /// Families whose matrix has a single period.
    pub fn is_single_period(self) -> bool {
        matches!(
            self,
            DesignFamily::ParallelTwoLevel
                | DesignFamily::ParallelTwoLevelByArm
                | DesignFamily::ParallelThreeLevel
                | DesignFamily::Irgt
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    CrossSectional,
    ClosedCohort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomizationLevel {
    #[default]
    Cluster,
    Subcluster,
}

/// Per-arm cluster size, ICC and outcome SD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmParam {
    pub m: usize,
    pub alpha1: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmParams {
    pub treatment: ArmParam,
    pub control: ArmParam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub family: DesignFamily,
    /// Periods `J`.
    #[serde(default = "default_periods")]
    pub periods: usize,
    /// Sequences `S`.
    #[serde(default = "default_sequences")]
    pub sequences: usize,
    /// Allocation proportion `π`.
    #[serde(default = "default_pi")]
    pub pi: f64,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub n_total: usize,
    /// Subclusters per cluster (three-level only).
    #[serde(default)]
    pub n_sub: Option<usize>,
    #[serde(default)]
    pub randomization_level: RandomizationLevel,
    #[serde(default)]
    pub arm_params: Option<ArmParams>,
}

fn default_sequences() -> usize {
    2
}

fn default_periods() -> usize {
    1
}

fn default_pi() -> f64 {
    0.5
}

impl DesignSpec {
    fn base(family: DesignFamily, periods: usize, sequences: usize, n_total: usize) -> Self {
        Self {
            family,
            periods,
            sequences,
            pi: 0.5,
            sampling: Sampling::CrossSectional,
            n_total,
            n_sub: None,
            randomization_level: RandomizationLevel::Cluster,
            arm_params: None,
        }
    }

    pub fn parallel(n_total: usize, pi: f64) -> Self {
        Self { pi, ..Self::base(DesignFamily::ParallelTwoLevel, 1, 2, n_total) }
    }

    pub fn multi_period_parallel(periods: usize, n_total: usize, pi: f64) -> Self {
        Self { pi, ..Self::base(DesignFamily::MultiPeriodParallel, periods, 2, n_total) }
    }

    pub fn stepped_wedge(periods: usize, n_total: usize) -> Self {
        Self::base(DesignFamily::SteppedWedge, periods, periods.saturating_sub(1), n_total)
    }

    pub fn crxo_two_period(n_total: usize, pi: f64) -> Self {
        Self { pi, ..Self::base(DesignFamily::CrxoTwoPeriod, 2, 2, n_total) }
    }

    pub fn crxo_multi_period(periods: usize, n_total: usize, pi: f64) -> Self {
        Self { pi, ..Self::base(DesignFamily::CrxoMultiPeriod, periods, 2, n_total) }
    }

    pub fn three_level(n_total: usize, n_sub: usize, pi: f64, level: RandomizationLevel) -> Self {
        Self {
            pi,
            n_sub: Some(n_sub),
            randomization_level: level,
            ..Self::base(DesignFamily::ParallelThreeLevel, 1, 2, n_total)
        }
    }

    pub fn by_arm(n_total: usize, pi: f64, arms: ArmParams) -> Self {
        Self { pi, arm_params: Some(arms), ..Self::base(DesignFamily::ParallelTwoLevelByArm, 1, 2, n_total) }
    }

    pub fn irgt(n_total: usize, pi: f64, arms: ArmParams) -> Self {
        Self { pi, arm_params: Some(arms), ..Self::base(DesignFamily::Irgt, 1, 2, n_total) }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_n_total(&self, n_total: usize) -> Self {
        Self { n_total, ..self.clone() }
    }

    /// Checks family-specific structure.
    pub fn validate(&self) -> Result<(), DesignError> {
        let bad = |msg: String| Err(DesignError::InvalidSpec(msg));
        if self.periods == 0 {
            return bad("number of periods must be at least 1".into());
        }
        if self.sequences == 0 {
            return bad("number of sequences must be at least 1".into());
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return bad(format!("allocation proportion pi = {} must lie in (0, 1)", self.pi));
        }
        match self.family {
            DesignFamily::SteppedWedge => {
                if self.periods < 2 {
                    return bad("stepped wedge needs at least 2 periods".into());
                }
                if self.sequences != self.periods - 1 {
                    return bad(format!(
                        "stepped wedge needs S = J - 1 sequences (J = {}, S = {})",
                        self.periods, self.sequences
                    ));
                }
            }
            DesignFamily::CrxoTwoPeriod if self.periods != 2 => {
                return bad("two-period crossover forces J = 2".into());
            }
            DesignFamily::CrxoMultiPeriod if self.periods < 2 => {
                return bad("multi-period crossover needs at least 2 periods".into());
            }
            DesignFamily::ParallelThreeLevel => match self.n_sub {
                Some(s) if s >= 1 => {
                    if self.randomization_level == RandomizationLevel::Subcluster && s < 2 {
                        return bad("subcluster randomization needs at least 2 subclusters".into());
                    }
                }
                _ => return bad("three-level designs need n_sub >= 1".into()),
            },
            DesignFamily::ParallelTwoLevelByArm | DesignFamily::Irgt if self.arm_params.is_none() => {
                return Err(DesignError::MissingArmParams);
            }
            f if f.is_single_period() && self.periods != 1 => {
                return bad(format!("{} designs have one period", f.name()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Total participants `N`.
    pub fn total_participants(&self, m: usize) -> usize {
        match self.family {
            DesignFamily::ParallelThreeLevel => self.n_total * self.n_sub.unwrap_or(1) * m,
            _ => self.n_total * m * self.periods,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DesignError {
    #[error("invalid design: {0}")]
    InvalidSpec(String),
    #[error("infeasible allocation: {treated} of {n} clusters treated; need between 1 and n - 1")]
    InfeasibleAllocation { treated: usize, n: usize },
    #[error("{n} clusters cannot be balanced across {sequences} sequences")]
    Unbalanced { n: usize, sequences: usize },
    #[error("per-arm parameters are required for this design family")]
    MissingArmParams,
    #[error("custom designs are supplied as CSV, not generated")]
    CustomNotGenerated,
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty design file")]
    Empty,
    #[error("non-binary cell at line {line}, column {column}: {value:?}")]
    NonBinary { line: u64, column: usize, value: String },
    #[error("ragged row at line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("invalid cluster count at line {line}, column 1: {value:?}")]
    BadCount { line: u64, value: String },
    #[error("malformed header at line 1: {0}")]
    BadHeader(String),
    #[error("unreadable CSV at line {line}: {message}")]
    Malformed { line: u64, message: String },
}

/// Sequences by periods, with cluster counts per sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreatmentMatrix {
    pub rows: Vec<Vec<u8>>,
    pub clusters_per_sequence: Vec<usize>,
}

impl TreatmentMatrix {
    pub fn new(rows: Vec<Vec<u8>>, clusters_per_sequence: Vec<usize>) -> Result<Self, DesignError> {
        if rows.is_empty() {
            return Err(DesignError::InvalidSpec("treatment matrix has no rows".into()));
        }
        let j = rows[0].len();
        if j == 0 {
            return Err(DesignError::InvalidSpec("treatment matrix has no periods".into()));
        }
        if rows.iter().any(|r| r.len() != j) {
            return Err(DesignError::InvalidSpec("treatment matrix rows differ in length".into()));
        }
        if rows.iter().flatten().any(|&x| x > 1) {
            return Err(DesignError::InvalidSpec("treatment entries must be 0 or 1".into()));
        }
        if clusters_per_sequence.len() != rows.len() {
            return Err(DesignError::InvalidSpec("one cluster count per sequence is required".into()));
        }
        Ok(Self { rows, clusters_per_sequence })
    }

    pub fn sequences(&self) -> usize {
        self.rows.len()
    }

    pub fn periods(&self) -> usize {
        self.rows[0].len()
    }

    pub fn n_total(&self) -> usize {
        self.clusters_per_sequence.iter().sum()
    }

    /// Cluster share of each sequence.
    pub fn proportions(&self) -> Vec<f64> {
        let n = self.n_total() as f64;
        self.clusters_per_sequence.iter().map(|&c| c as f64 / n).collect()
    }

    /// Row `s` as floating-point indicators.
    pub fn profile(&self, s: usize) -> Vec<f64> {
        self.rows[s].iter().map(|&x| x as f64).collect()
    }

    /// Same pattern with `n` clusters split as evenly as the current
    /// proportions allow (largest remainder, ties to earlier rows).
    pub fn rescaled(&self, n: usize) -> Self {
        let props = self.proportions();
        let raw: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
        let mut left = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - raw[a].floor();
            let fb = raw[b] - raw[b].floor();
            fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        Self { rows: self.rows.clone(), clusters_per_sequence: counts }
    }
}

/// Treated clusters under `⌈π·n⌋`, half-way cases rounded toward treatment.
pub fn treated_count(pi: f64, n: usize) -> usize {
    (pi * n as f64 + 0.5).floor() as usize
}

fn two_arm_counts(pi: f64, n: usize) -> Result<(usize, usize), DesignError> {
    let treated = treated_count(pi, n);
    if treated < 1 || treated + 1 > n {
        return Err(DesignError::InfeasibleAllocation { treated, n });
    }
    Ok((treated, n - treated))
}

/// Sequence patterns of a family, independent of cluster counts.
pub fn patterns(spec: &DesignSpec) -> Result<Vec<Vec<u8>>, DesignError> {
    spec.validate()?;
    let j = spec.periods;
    Ok(match spec.family {
        DesignFamily::ParallelTwoLevel
        | DesignFamily::ParallelTwoLevelByArm
        | DesignFamily::ParallelThreeLevel
        | DesignFamily::Irgt
        | DesignFamily::MultiPeriodParallel => vec![vec![1; j], vec![0; j]],
        DesignFamily::CrxoTwoPeriod => vec![vec![1, 0], vec![0, 1]],
        DesignFamily::CrxoMultiPeriod => {
            let first: Vec<u8> = (0..j).map(|p| (p % 2 == 0) as u8).collect();
            let second: Vec<u8> = first.iter().map(|&x| 1 - x).collect();
            vec![first, second]
        }
        DesignFamily::SteppedWedge => (0..spec.sequences).map(|seq| (0..j).map(|p| (p > seq) as u8).collect()).collect(),
        DesignFamily::Custom => return Err(DesignError::CustomNotGenerated),
    })
}

/// Builds the matrix for a validated spec.
pub fn generate(spec: &DesignSpec) -> Result<TreatmentMatrix, DesignError> {
    let rows = patterns(spec)?;
    let n = spec.n_total;
    if spec.family == DesignFamily::SteppedWedge {
        let s = spec.sequences;
        if n == 0 || !n.is_multiple_of(s) {
            return Err(DesignError::Unbalanced { n, sequences: s });
        }
        return TreatmentMatrix::new(rows, vec![n / s; s]);
    }
    let (t, c) = two_arm_counts(spec.pi, n)?;
    TreatmentMatrix::new(rows, vec![t, c])
}

/// Parses the CSV design format.
pub fn parse_csv(text: &str) -> Result<TreatmentMatrix, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| ParseError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(ParseError::Empty);
    }
    let first = &records[0].1;
    let expected = first.len();
    let first_field = first.get(0).unwrap_or("");
    let (weighted, skip) = if first_field.eq_ignore_ascii_case("n_clusters") {
        (true, 1)
    } else if first_field.starts_with(['p', 'P']) && first_field[1..].parse::<usize>().is_ok() {
        (false, 1)
    } else {
        (false, 0)
    };
    if skip == 1 {
        let cols: Vec<&str> = first.iter().skip(weighted as usize).collect();
        for (k, c) in cols.iter().enumerate() {
            if !c.eq_ignore_ascii_case(&format!("p{}", k + 1)) {
                return Err(ParseError::BadHeader(format!("expected p{} in column {}, found {c:?}", k + 1, k + 1 + weighted as usize)));
            }
        }
        if cols.is_empty() {
            return Err(ParseError::BadHeader("no period columns".into()));
        }
    }
    let body = &records[skip..];
    if body.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut rows = Vec::with_capacity(body.len());
    let mut counts = Vec::with_capacity(body.len());
    for (line, rec) in body {
        if rec.len() != expected {
            return Err(ParseError::Ragged { line: *line, expected, found: rec.len() });
        }
        let mut fields = rec.iter().enumerate();
        if weighted {
            let (_, raw) = fields.next().unwrap_or((0, ""));
            match raw.parse::<usize>() {
                Ok(c) if c >= 1 => counts.push(c),
                _ => return Err(ParseError::BadCount { line: *line, value: raw.to_string() }),
            }
        } else {
            counts.push(1);
        }
        let mut row = Vec::with_capacity(expected);
        for (idx, raw) in fields {
            match raw {
                "0" => row.push(0),
                "1" => row.push(1),
                _ => {
                    return Err(ParseError::NonBinary { line: *line, column: idx + 1, value: raw.to_string() });
                }
            }
        }
        if row.is_empty() {
            return Err(ParseError::Ragged { line: *line, expected: expected + 1, found: rec.len() });
        }
        rows.push(row);
    }
    Ok(TreatmentMatrix { rows, clusters_per_sequence: counts })
}

/// Header-form CSV; `parse_csv` inverts it exactly.
pub fn emit_csv(matrix: &TreatmentMatrix) -> String {
    let mut out = String::from("n_clusters");
    for p in 1..=matrix.periods() {
        out.push_str(&format!(",p{p}"));
    }
    for (row, c) in matrix.rows.iter().zip(&matrix.clusters_per_sequence) {
        out.push('\n');
        out.push_str(&c.to_string());
        for x in row {
            out.push(',');
            out.push(if *x == 1 { '1' } else { '0' });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepped_wedge_staircase() {
        let m = generate(&DesignSpec::stepped_wedge(6, 100)).unwrap();
        assert_eq!(m.sequences(), 5);
        assert_eq!(m.clusters_per_sequence, vec![20; 5]);
        assert_eq!(m.rows[0], vec![0, 1, 1, 1, 1, 1]);
        assert_eq!(m.rows[4], vec![0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn stepped_wedge_requires_balance() {
        let err = generate(&DesignSpec::stepped_wedge(6, 101)).unwrap_err();
        assert_eq!(err, DesignError::Unbalanced { n: 101, sequences: 5 });
    }

    #[test]
    fn crxo_two_period_split() {
        let m = generate(&DesignSpec::crxo_two_period(10, 0.5)).unwrap();
        assert_eq!(m.rows, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(m.clusters_per_sequence, vec![5, 5]);
    }

    #[test]
    fn multi_period_parallel_rows() {
        let m = generate(&DesignSpec::multi_period_parallel(6, 100, 0.5)).unwrap();
        assert_eq!(m.rows, vec![vec![1; 6], vec![0; 6]]);
        assert_eq!(m.clusters_per_sequence, vec![50, 50]);
    }

    #[test]
    fn crxo_alternates() {
        let m = generate(&DesignSpec::crxo_multi_period(4, 8, 0.5)).unwrap();
        assert_eq!(m.rows, vec![vec![1, 0, 1, 0], vec![0, 1, 0, 1]]);
    }

    #[test]
    fn allocation_rounds_ties_to_treatment() {
        assert_eq!(treated_count(0.5, 7), 4);
        assert_eq!(treated_count(0.3, 10), 3);
        let m = generate(&DesignSpec::parallel(7, 0.5)).unwrap();
        assert_eq!(m.clusters_per_sequence, vec![4, 3]);
        assert!(matches!(
            generate(&DesignSpec::parallel(3, 0.1)),
            Err(DesignError::InfeasibleAllocation { treated: 0, n: 3 })
        ));
    }

    #[test]
    fn parse_plain_and_header() {
        let m = parse_csv("0,0\n0,1").unwrap();
        assert_eq!(m.rows, vec![vec![0, 0], vec![0, 1]]);
        assert_eq!(m.clusters_per_sequence, vec![1, 1]);
        let m = parse_csv("n_clusters,p1,p2\n20,1,0\n20,0,1").unwrap();
        assert_eq!(m.rows, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(m.clusters_per_sequence, vec![20, 20]);
    }

    #[test]
    fn parse_errors_are_distinct() {
        assert_eq!(parse_csv("0,2\n1,0").unwrap_err().to_string(), "non-binary cell at line 1, column 2: \"2\"");
        assert_eq!(parse_csv("").unwrap_err(), ParseError::Empty);
        assert_eq!(parse_csv("\n\n").unwrap_err(), ParseError::Empty);
        assert_eq!(
            parse_csv("0,1\n1,1,0").unwrap_err(),
            ParseError::Ragged { line: 2, expected: 2, found: 3 }
        );
        assert!(matches!(parse_csv("n_clusters,p1\nx,1"), Err(ParseError::BadCount { line: 2, .. })));
        assert!(matches!(
            parse_csv("n_clusters,p1\n3,0.5"),
            Err(ParseError::NonBinary { line: 2, column: 2, .. })
        ));
    }

    #[test]
    fn emit_lower_right() {
        let m = parse_csv("0,0\n0,1").unwrap();
        assert_eq!(emit_csv(&m), "n_clusters,p1,p2\n1,0,0\n1,0,1");
        assert_eq!(parse_csv(&emit_csv(&m)).unwrap(), m);
    }

    #[test]
    fn rescale_keeps_proportions() {
        let m = generate(&DesignSpec::stepped_wedge(6, 100)).unwrap();
        assert_eq!(m.rescaled(10).clusters_per_sequence, vec![2; 5]);
        assert_eq!(m.rescaled(7).clusters_per_sequence, vec![2, 2, 1, 1, 1]);
    }
}
