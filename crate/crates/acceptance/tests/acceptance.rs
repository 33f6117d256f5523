use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use nalgebra::DMatrix;
use serde_json::{json, Value};
use tower::ServiceExt;

use clusterhte::closedform::{build_conformance_table, CONFORMANCE_POINTS, CONFORMANCE_TOLERANCE};
use clusterhte::correlation::{
    build_outcome_matrix, eigenvalues_block, eigenvalues_nested, multiplicities_block, multiplicities_nested,
    CovariateCorrelation, OutcomeCorrelation,
};
use clusterhte::designs::{DesignFamily, DesignSpec};
use clusterhte::engine::{design_variance, CovariateModel, EngineOptions, OutcomeModel};
use clusterhte::montecarlo::empirical_power;
use clusterhte::solver::{
    power_from_variance, solve_delta, solve_m, solve_n, solve_power, DfMode, SolveRequest, Target,
};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn request(body: Value) -> SolveRequest {
    serde_json::from_value(body).expect("valid request body")
}

fn two_level(alpha1: f64, m: usize) -> Value {
    json!({
        "design": {"family": "parallel_two_level"},
        "outcome": {"sigma_yx": 1.0, "correlation": {"kind": "exchangeable", "alpha1": alpha1}},
        "covariate": {"dtype": "binary", "prevalence": 0.36, "correlation": {"kind": "exchangeable", "rho0": 0.2}},
        "target": "n",
        "m": m,
        "delta": 0.7,
        "power": 0.9,
        "standardized": true
    })
}

fn sw_comparison(family: &str) -> Value {
    json!({
        "design": {"family": family, "periods": 6, "sequences": 5, "n_total": 100},
        "outcome": {"sigma_yx": 1.0, "correlation": {"kind": "nested_exchangeable", "alpha1": 0.022, "cac": 0.5}},
        "covariate": {
            "dtype": "binary",
            "prevalence": 0.2,
            "correlation": {"kind": "nested_exchangeable", "rho1": 0.1, "cac": 0.9}
        },
        "target": "m",
        "delta": -0.05,
        "power": 0.9,
        "standardized": true
    })
}

fn baseline(m: usize) -> Value {
    json!({
        "design": {"family": "custom", "periods": 2, "sequences": 2, "sampling": "closed_cohort"},
        "design_matrix": {"rows": [[0, 0], [0, 1]], "clusters_per_sequence": [1, 1]},
        "outcome": {
            "sigma_yx": 1.0,
            "correlation": {"kind": "block_exchangeable", "alpha0": 0.7, "alpha1": 0.04, "cac": 0.9}
        },
        "covariate": {
            "dtype": "binary",
            "prevalence": 0.36,
            "correlation": {"kind": "cohort_time_invariant", "rho0": 0.2}
        },
        "target": "n",
        "m": m,
        "delta": 0.7,
        "power": 0.9,
        "standardized": true
    })
}

fn two_level_reproduction() -> Check {
    let cases = [(0.02, 11, 35.0), (0.02, 8, 48.0), (0.04, 10, 39.0), (0.04, 7, 55.0)];
    let mut got = Vec::new();
    for (a1, m, expected) in cases {
        let n = solve_n(&request(two_level(a1, m))).map_err(|e| e.to_string())?.solved_value;
        ensure((n - expected).abs() <= 1.0, || format!("alpha1={a1} m={m}: n={n}, expected {expected}"))?;
        got.push(format!("{n}"));
    }
    Ok(format!("n = {}", got.join("/")))
}

fn sw_comparison_comparison() -> Check {
    let cases = [("stepped_wedge", 353.0), ("multi_period_parallel", 190.0), ("crxo_multi_period", 185.0)];
    let mut got = Vec::new();
    for (family, expected) in cases {
        let mut body = sw_comparison(family);
        if family == "crxo_multi_period" {
            body["design"]["sequences"] = json!(2);
        }
        let m = solve_m(&request(body)).map_err(|e| format!("{family}: {e}"))?.solved_value;
        ensure(((m - expected) / expected).abs() <= 0.01, || format!("{family}: m={m}, expected {expected}"))?;
        got.push(format!("{m}"));
    }
    Ok(format!("m = {}", got.join("/")))
}

fn baseline_custom() -> Check {
    let mut got = Vec::new();
    for (m, expected) in [(6, 32.0), (11, 18.0)] {
        let r = solve_n(&request(baseline(m))).map_err(|e| e.to_string())?;
        let n = r.solved_value;
        ensure((n - expected).abs() <= 1.0, || format!("m={m}: n={n}, expected {expected}"))?;
        ensure(r.achieved_power >= 0.9, || format!("m={m}: achieved power {}", r.achieved_power))?;
        got.push(format!("{n}"));
    }
    Ok(format!("n = {} at m = 6/11", got.join("/")))
}

fn conformance() -> Check {
    let table = build_conformance_table();
    let registered: Vec<_> = table.rows.iter().filter(|r| r.registered).collect();
    ensure(!registered.is_empty(), || "no registered closed forms".into())?;
    let mut worst = 0.0f64;
    for r in &registered {
        ensure(r.points >= CONFORMANCE_POINTS, || format!("{}: only {} points", r.formula_id, r.points))?;
        ensure(r.max_rel_error <= CONFORMANCE_TOLERANCE, || {
            format!("{}: max relative error {:e}", r.formula_id, r.max_rel_error)
        })?;
        worst = worst.max(r.max_rel_error);
    }
    Ok(format!("{} registered rows, worst relative error {worst:.1e}", registered.len()))
}

fn numeric_eigenvalues(corr: &OutcomeCorrelation<f64>, m: usize, j: usize) -> Vec<f64> {
    let dense = build_outcome_matrix(corr, m, j).unwrap();
    let n = dense.dim();
    DMatrix::from_fn(n, n, |r, c| dense.get(r, c)).symmetric_eigen().eigenvalues.iter().copied().collect()
}

fn count_near(values: &[f64], target: f64) -> usize {
    values.iter().filter(|v| (*v - target).abs() < 1e-10).count()
}

fn grid_designs() -> Vec<DesignSpec> {
    vec![
        DesignSpec::parallel(20, 0.3),
        DesignSpec::multi_period_parallel(3, 20, 0.5),
        DesignSpec::stepped_wedge(5, 40),
        DesignSpec::crxo_two_period(20, 0.5),
        DesignSpec::crxo_multi_period(4, 20, 0.5),
    ]
}

fn property_grid() -> Check {
    let mut checks = 0usize;
    let opts = EngineOptions::default();

    let uncentered = EngineOptions { uncentered: true, ..EngineOptions::default() };
    for design in grid_designs() {
        for (a1, cac, r1, m) in [(0.02, 0.5, 0.1, 5), (0.1, 0.9, 0.4, 12), (0.0, 1.0, 0.0, 3)] {
            let out = OutcomeModel::new(1.0, OutcomeCorrelation::nested(a1, a1 * cac));
            let var = |mu: f64| {
                let cov = CovariateModel::continuous(mu, 1.3, CovariateCorrelation::nested(r1, r1 * cac));
                design_variance(&design, None, m, &out, &cov, &uncentered).unwrap().sigma2_hte_norm.unwrap()
            };
            for shift in [-4.0, 0.5, 7.0] {
                let (a, b) = (var(0.0), var(shift));
                ensure(((a - b) / a).abs() < 1e-8, || format!("centering: {a} vs {b}"))?;
                checks += 1;
            }
        }
    }

    for j in 1..=4 {
        for (m, pi, sigma, sx) in [(1, 0.5, 1.0, 1.0), (7, 0.3, 2.0, 0.5), (25, 0.8, 0.4, 2.5)] {
            let design = if j == 1 { DesignSpec::parallel(10, pi) } else { DesignSpec::multi_period_parallel(j, 10, pi) };
            let out = OutcomeModel::new(sigma, OutcomeCorrelation::exchangeable(0.0));
            let cov = CovariateModel::continuous(0.0, sx, CovariateCorrelation::independent());
            let v = design_variance(&design, None, m, &out, &cov, &opts).unwrap().sigma2_hte_norm.unwrap();
            let expected = sigma * sigma / ((m * j) as f64 * pi * (1.0 - pi) * sx * sx);
            ensure((v / expected - 1.0).abs() < 1e-10, || format!("zero ICC: {v} vs {expected}"))?;
            checks += 1;
        }
    }

    for (m, j) in [(1, 1), (3, 2), (5, 4)] {
        for a in [0.0, 0.05, 0.3] {
            let nested = build_outcome_matrix(&OutcomeCorrelation::nested(a, a), m, j).unwrap();
            let exch = build_outcome_matrix(&OutcomeCorrelation::exchangeable(a), m * j, 1).unwrap();
            ensure(nested.max_abs_diff(&exch) == 0.0, || format!("nested collapse at m={m} j={j} a={a}"))?;
            let block = build_outcome_matrix(&OutcomeCorrelation::block(a / 2.0, a, a / 2.0), m, j).unwrap();
            let nested = build_outcome_matrix(&OutcomeCorrelation::nested(a, a / 2.0), m, j).unwrap();
            ensure(block.max_abs_diff(&nested) == 0.0, || format!("block collapse at m={m} j={j} a={a}"))?;
            checks += 2;
        }
    }

    for (m, j) in [(2, 2), (3, 4), (5, 3)] {
        let numeric = numeric_eigenvalues(&OutcomeCorrelation::nested(0.1, 0.04), m, j);
        for (lam, k) in eigenvalues_nested(0.1, 0.04, m, j).iter().zip(multiplicities_nested(m, j)) {
            ensure(count_near(&numeric, *lam) == k, || format!("nested eigenvalue {lam} x{k} in {numeric:?}"))?;
            checks += 1;
        }
        let numeric = numeric_eigenvalues(&OutcomeCorrelation::block(0.5, 0.1, 0.04), m, j);
        for (tau, k) in eigenvalues_block(0.5, 0.1, 0.04, m, j).iter().zip(multiplicities_block(m, j)) {
            ensure(count_near(&numeric, *tau) == k, || format!("block eigenvalue {tau} x{k} in {numeric:?}"))?;
            checks += 1;
        }
    }

    let base = |design: DesignSpec, a1: f64, r1: f64| {
        SolveRequest::new(
            design,
            OutcomeModel::new(1.0, OutcomeCorrelation::exchangeable(a1)),
            CovariateModel::continuous(0.0, 1.0, CovariateCorrelation::exchangeable(r1)),
            Target::N,
        )
    };
    for pi in [0.2, 0.35, 0.6] {
        for j in [1, 3] {
            let n = |p: f64| {
                let d = if j == 1 { DesignSpec::parallel(0, p) } else { DesignSpec::multi_period_parallel(j, 0, p) };
                solve_n(&base(d, 0.05, 0.3).m(10).delta(0.5).power(0.8)).map(|r| r.solved_value).ok()
            };
            ensure(n(pi) == n(1.0 - pi), || format!("pi symmetry at pi={pi} j={j}"))?;
            checks += 1;
        }
    }

    for design in grid_designs() {
        let step = if design.family == DesignFamily::SteppedWedge { design.sequences } else { 1 };
        for df in [DfMode::Normal, DfMode::TNMinus2] {
            for (m, delta, power) in [(4, 0.5, 0.8), (20, 0.3, 0.9), (9, 1.2, 0.6)] {
                let mut req = base(design.clone(), 0.05, 0.3).m(m).delta(delta).power(power);
                req.df_mode = df;
                let r = solve_n(&req).map_err(|e| e.to_string())?;
                let n = r.solved_value as usize;
                ensure(r.achieved_power >= power, || format!("solve_n below target at n={n}"))?;
                let min = if df == DfMode::Normal { 2 } else { 3 };
                if n >= min + step {
                    let below = solve_power(&req.clone().n(n - step)).unwrap().achieved_power;
                    ensure(below < power, || format!("solve_n not minimal: n={n}, power at n-step {below}"))?;
                }
                checks += 1;
            }
        }
    }
    for (a1, delta) in [(0.02, 0.2), (0.05, 0.3), (0.08, 0.15)] {
        let req = SolveRequest::new(
            DesignSpec::stepped_wedge(5, 40),
            OutcomeModel::new(1.0, OutcomeCorrelation::nested(a1, a1 / 2.0)),
            CovariateModel::continuous(0.0, 1.0, CovariateCorrelation::nested(0.2, 0.1)),
            Target::M,
        )
        .delta(delta)
        .power(0.8);
        let r = solve_m(&req).map_err(|e| e.to_string())?;
        let m = r.solved_value as usize;
        ensure(r.achieved_power >= 0.8, || format!("solve_m below target at m={m}"))?;
        if m > 1 {
            let below = solve_power(&req.clone().m(m - 1)).unwrap().achieved_power;
            ensure(below < 0.8, || format!("solve_m not minimal: m={m}"))?;
        }
        checks += 1;
    }

    for delta in [0.0, 0.3, 1.0, 4.0] {
        for var in [0.01, 0.5, 5.0] {
            for n in [3, 10, 200] {
                let z = power_from_variance(delta, var, 0.05, DfMode::Normal, n as f64).unwrap();
                let t = power_from_variance(delta, var, 0.05, DfMode::TNMinus2, n as f64).unwrap();
                ensure(t <= z + 1e-12, || format!("t power {t} > normal {z}"))?;
                checks += 1;
            }
        }
    }

    let grid: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0 * 0.995).collect();
    for m in [2usize, 5, 11, 50] {
        for r1 in [0.05, 0.2, 0.5, 0.8, 0.95] {
            let cov = CovariateModel::continuous(0.0, 1.0, CovariateCorrelation::exchangeable(r1));
            let v: Vec<f64> = grid
                .iter()
                .map(|&a| {
                    let out = OutcomeModel::new(1.0, OutcomeCorrelation::exchangeable(a));
                    design_variance(&DesignSpec::parallel(10, 0.5), None, m, &out, &cov, &opts)
                        .unwrap()
                        .sigma2_hte_norm
                        .unwrap()
                })
                .collect();
            let (arg, max) = v.iter().enumerate().fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
            ensure(arg > 0 && arg < grid.len() - 1, || format!("m={m} rho={r1}: maximum on the boundary"))?;
            ensure(max / v[0] < m as f64, || format!("m={m} rho={r1}: ceiling {max}"))?;
            checks += 1;
        }
    }
    Ok(format!("{checks} grid checks"))
}

fn arms() -> Value {
    json!({
        "treatment": {"m": 10, "alpha1": 0.05, "sigma": 1.0},
        "control": {"m": 8, "alpha1": 0.02, "sigma": 1.2}
    })
}

fn size_configs() -> Vec<(DesignFamily, Value)> {
    let nested = json!({"kind": "nested_exchangeable", "alpha1": 0.05, "alpha2": 0.025});
    let cont_nested = json!({"dtype": "continuous", "sigma_x": 1.0, "correlation": {"kind": "nested_exchangeable", "rho1": 0.2, "rho2": 0.1}});
    let cont_exch = json!({"dtype": "continuous", "sigma_x": 1.0, "correlation": {"kind": "exchangeable", "rho0": 0.2}});
    let body = |design: Value, outcome: Value, covariate: &Value, n: usize, m: usize| {
        json!({
            "design": design,
            "outcome": {"sigma_yx": 1.0, "correlation": outcome},
            "covariate": covariate,
            "target": "power",
            "n": n,
            "m": m,
            "delta": 0.0
        })
    };
    vec![
        (
            DesignFamily::ParallelTwoLevel,
            body(
                json!({"family": "parallel_two_level"}),
                json!({"kind": "exchangeable", "alpha1": 0.05}),
                &json!({"dtype": "binary", "prevalence": 0.36, "correlation": {"kind": "exchangeable", "rho0": 0.2}}),
                30,
                10,
            ),
        ),
        (
            DesignFamily::ParallelTwoLevelByArm,
            body(
                json!({"family": "parallel_two_level_by_arm", "arm_params": arms()}),
                json!({"kind": "exchangeable", "alpha1": 0.05}),
                &cont_exch,
                30,
                10,
            ),
        ),
        (
            DesignFamily::ParallelThreeLevel,
            body(json!({"family": "parallel_three_level", "n_sub": 4}), nested.clone(), &cont_nested, 30, 5),
        ),
        (
            DesignFamily::MultiPeriodParallel,
            body(json!({"family": "multi_period_parallel", "periods": 3}), nested.clone(), &cont_nested, 30, 5),
        ),
        (
            DesignFamily::CrxoTwoPeriod,
            body(json!({"family": "crxo_two_period", "periods": 2}), nested.clone(), &cont_nested, 30, 5),
        ),
        (
            DesignFamily::CrxoMultiPeriod,
            body(json!({"family": "crxo_multi_period", "periods": 4}), nested.clone(), &cont_nested, 30, 5),
        ),
        (
            DesignFamily::SteppedWedge,
            body(json!({"family": "stepped_wedge", "periods": 5, "sequences": 4}), nested, &cont_nested, 32, 5),
        ),
        (
            DesignFamily::Irgt,
            body(
                json!({"family": "irgt", "arm_params": arms()}),
                json!({"kind": "exchangeable", "alpha1": 0.05}),
                &json!({"dtype": "continuous", "sigma_x": 1.0, "correlation": {"kind": "independent"}}),
                30,
                10,
            ),
        ),
        (
            DesignFamily::Custom,
            json!({
                "design": {"family": "custom", "periods": 2, "sequences": 2, "sampling": "closed_cohort"},
                "design_matrix": {"rows": [[0, 0], [0, 1]], "clusters_per_sequence": [15, 15]},
                "outcome": {"sigma_yx": 1.0, "correlation": {"kind": "block_exchangeable", "alpha0": 0.5, "alpha1": 0.05, "alpha2": 0.04}},
                "covariate": {"dtype": "continuous", "sigma_x": 1.0, "correlation": {"kind": "cohort_time_invariant", "rho0": 0.2}},
                "target": "power",
                "n": 30,
                "m": 8,
                "delta": 0.0
            }),
        ),
    ]
}

const SIZE_REPS: usize = 2000;
const POWER_REPS: usize = 5000;
const POWER_TOLERANCE: f64 = 0.025;

fn monte_carlo() -> Check {
    let alpha = 0.05;
    let se = (alpha * (1.0 - alpha) / SIZE_REPS as f64).sqrt();
    let mut worst = 0.0f64;
    for (i, (family, body)) in size_configs().into_iter().enumerate() {
        let req = request(body);
        let e = empirical_power(&req, 0.0, SIZE_REPS, 100 + i as u64).map_err(|e| format!("{}: {e}", family.name()))?;
        let dev = (e.rate - alpha).abs() / se;
        ensure(dev <= 3.0, || format!("{} size {} is {dev:.2} SE from {alpha}", family.name(), e.rate))?;
        worst = worst.max(dev);
    }

    let mut req = request(two_level(0.02, 11));
    req.target = Target::Power;
    let req = req.n(35);
    let two_level_rate = empirical_power(&req, 0.7, POWER_REPS, 7).map_err(|e| e.to_string())?.rate;
    ensure((two_level_rate - 0.90).abs() <= POWER_TOLERANCE, || format!("two-level empirical power {two_level_rate}"))?;

    let sw = request(json!({
        "design": {"family": "stepped_wedge", "periods": 6, "sequences": 5, "n_total": 20},
        "outcome": {"sigma_yx": 1.0, "correlation": {"kind": "nested_exchangeable", "alpha1": 0.05, "cac": 0.6}},
        "covariate": {"dtype": "continuous", "sigma_x": 1.0, "correlation": {"kind": "nested_exchangeable", "rho1": 0.2, "cac": 0.8}},
        "target": "delta",
        "n": 20,
        "m": 30,
        "power": 0.8
    }));
    let delta = solve_delta(&sw).map_err(|e| e.to_string())?.solved_value;
    let sw_rate = empirical_power(&sw, delta, POWER_REPS, 11).map_err(|e| e.to_string())?.rate;
    ensure((sw_rate - 0.80).abs() <= POWER_TOLERANCE, || format!("stepped wedge empirical power {sw_rate} at delta {delta}"))?;

    Ok(format!(
        "worst size deviation {worst:.2} SE over 9 families; power {two_level_rate:.4} (0.90) and {sw_rate:.4} (0.80)"
    ))
}

const GOLDEN: [(&str, &str); 4] = [
    (
        "solve-m --design stepped-wedge --sequences 5 --periods 6 --clusters 100 --icc-outcome 0.022 \
         --cac-outcome 0.5 --icc-covariate 0.1 --cac-covariate 0.9 --covariate-type binary --prevalence 0.2 \
         --delta -0.05 --standardized --power 0.9 --alpha 0.05",
        "sw_comparison",
    ),
    (
        "solve-n --design parallel --cluster-size 11 --icc-outcome 0.02 --icc-covariate 0.2 \
         --covariate-type binary --prevalence 0.36 --delta 0.7 --standardized --power 0.9",
        "two_level11",
    ),
    (
        "solve-n --design parallel --cluster-size 8 --icc-outcome 0.02 --icc-covariate 0.2 \
         --covariate-type binary --prevalence 0.36 --delta 0.7 --standardized --power 0.9",
        "two_level8",
    ),
    (
        "solve-n --design-csv {data}/baseline_2x2.csv --sampling closed-cohort --icc0-outcome 0.7 \
         --icc-outcome 0.04 --cac-outcome 0.9 --icc-covariate 0.2 --covariate-type binary --prevalence 0.36 \
         --cluster-size 6 --delta 0.7 --standardized --power 0.9",
        "baseline6",
    ),
];

fn api_body(name: &str) -> Value {
    match name {
        "sw_comparison" => sw_comparison("stepped_wedge"),
        "two_level11" => two_level(0.02, 11),
        "two_level8" => two_level(0.02, 8),
        _ => baseline(6),
    }
}

fn parity() -> Check {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/tests/data");
    let rt = tokio::runtime::Builder::new_current_thread().build().map_err(|e| e.to_string())?;
    for (line, name) in GOLDEN {
        let argv = std::iter::once("clusterhte".to_string())
            .chain(line.split_whitespace().map(|a| a.replace("{data}", data)))
            .chain(["--format".into(), "json".into()]);
        let out = clusterhte_cli::run(argv);
        ensure(out.code == 0, || format!("{name}: CLI exit {}: {}", out.code, out.stderr))?;
        let cli: Value = serde_json::from_str(&out.stdout).map_err(|e| e.to_string())?;

        let req = Request::post("/api/v1/solve").body(Body::from(api_body(name).to_string())).unwrap();
        let api: Value = rt.block_on(async {
            let resp = clusterhte_service::router().oneshot(req).await.unwrap();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes();
            serde_json::from_slice(&bytes).unwrap()
        });
        ensure(api["status"] == "ok", || format!("{name}: service returned {api}"))?;
        ensure(cli["result"] == api["result"], || format!("{name}: result payloads differ"))?;
    }
    Ok(format!("{} command lines", GOLDEN.len()))
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

#[test]
fn primary_criteria() {
    let criteria = [
        Criterion { name: "two-level cluster counts", limit: Duration::from_millis(100), run: two_level_reproduction },
        Criterion { name: "design comparison cluster-period sizes", limit: Duration::from_secs(5), run: sw_comparison_comparison },
        Criterion { name: "custom baseline-period design", limit: Duration::from_secs(1), run: baseline_custom },
        Criterion { name: "closed-form conformance", limit: Duration::from_secs(30), run: conformance },
        Criterion { name: "property grid", limit: Duration::from_secs(60), run: property_grid },
        Criterion { name: "Monte Carlo calibration", limit: Duration::from_secs(600), run: monte_carlo },
        Criterion { name: "CLI/service parity", limit: Duration::from_secs(10), run: parity },
    ];
    let mut failed = Vec::new();
    for c in criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over time limit")),
            Err(e) => (false, e),
        };
        println!(
            "{} {:<40} {:>8.3} s (limit {} s)  {detail}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64(),
            c.limit.as_secs_f64()
        );
        if !ok {
            failed.push(c.name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
