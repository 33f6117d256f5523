use std::path::PathBuf;

use clusterhte_cli::run;

const UPDATE_ENV: &str = "CLUSTERHTE_UPDATE_GOLDEN";

fn dir(sub: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(sub)
}

fn argv(line: &str) -> Vec<String> {
    std::iter::once("clusterhte".to_string())
        .chain(line.split_whitespace().map(|a| a.replace("{data}", dir("data").to_str().unwrap())))
        .collect()
}

pub const SW_COMPARISON: &str = "solve-m --design stepped-wedge --sequences 5 --periods 6 --clusters 100 \
    --icc-outcome 0.022 --cac-outcome 0.5 --icc-covariate 0.1 --cac-covariate 0.9 --covariate-type binary \
    --prevalence 0.2 --delta -0.05 --standardized --power 0.9 --alpha 0.05 --format json";
pub const TWO_LEVEL_M11: &str = "solve-n --design parallel --cluster-size 11 --icc-outcome 0.02 --icc-covariate 0.2 \
    --covariate-type binary --prevalence 0.36 --delta 0.7 --standardized --power 0.9 --format json";
pub const TWO_LEVEL_M8: &str = "solve-n --design parallel --cluster-size 8 --icc-outcome 0.02 --icc-covariate 0.2 \
    --covariate-type binary --prevalence 0.36 --delta 0.7 --standardized --power 0.9 --format json";
pub const BASELINE_M6: &str = "solve-n --design-csv {data}/baseline_2x2.csv --sampling closed-cohort \
    --icc0-outcome 0.7 --icc-outcome 0.04 --cac-outcome 0.9 --icc-covariate 0.2 --covariate-type binary \
    --prevalence 0.36 --cluster-size 6 --delta 0.7 --standardized --power 0.9 --format json";
pub const NULL_POWER: &str = "power --design parallel --clusters 35 --cluster-size 11 --icc-outcome 0.02 \
    --icc-covariate 0.2 --covariate-type binary --prevalence 0.36 --delta 0 --standardized --format json";

fn check(name: &str, line: &str) -> serde_json::Value {
    let out = run(argv(line));
    assert_eq!(out.code, 0, "{name}: {}", out.stderr);
    let path = dir("golden").join(format!("{name}.json"));
    if std::env::var_os(UPDATE_ENV).is_some() {
        std::fs::write(&path, &out.stdout).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(out.stdout, golden, "{name} differs from {}", path.display());
    assert_eq!(run(argv(line)).stdout, out.stdout, "{name} is not reproducible");
    serde_json::from_str(&out.stdout).unwrap()
}

#[test]
fn sw_comparison_stepped_wedge_cluster_period_size() {
    let v = check("sw_comparison_solve_m", SW_COMPARISON);
    assert_eq!(v["result"]["solved_value"], 353.0);
    assert_eq!(v["api_version"], "v1");
}

#[test]
fn two_level_cluster_counts() {
    assert_eq!(check("two_level_m11_solve_n", TWO_LEVEL_M11)["result"]["solved_value"], 35.0);
    assert_eq!(check("two_level_m8_solve_n", TWO_LEVEL_M8)["result"]["solved_value"], 48.0);
}

#[test]
fn baseline_custom_design() {
    let v = check("baseline_2x2_m6_solve_n", BASELINE_M6);
    let n = v["result"]["solved_value"].as_f64().unwrap();
    assert!((n - 32.0).abs() <= 1.0, "{n}");
}

#[test]
fn null_effect_power() {
    let v = check("null_power", NULL_POWER);
    let p = v["result"]["power"].as_f64().unwrap();
    assert!((p - 0.025).abs() < 1e-9, "{p}");
}
