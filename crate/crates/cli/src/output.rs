//! Report formats. Every fraction is written as `{"exact": "num/den",
//! "value": float}`; the float is advisory.

use finiagg::certifier::{delta_multiset, margin_table, CertificateReport, CertifiedAccuracy};
use finiagg::infinite_aggregation::{ExactValue, IAVoteDistribution};
use finiagg::oracle::VerificationReport;
use finiagg::{EnsembleStats, VoteMatrix};
use num_rational::Ratio;
use serde_json::{json, Value};

fn fraction(r: Ratio<u64>) -> Value {
    json!({
        "exact": format!("{}/{}", r.numer(), r.denom()),
        "value": *r.numer() as f64 / *r.denom() as f64,
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn header(vm: &VoteMatrix) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("k".into(), json!(vm.k()));
    m.insert("d".into(), json!(vm.d()));
    m.insert("kd".into(), json!(vm.kd()));
    m.insert("n_classes".into(), json!(vm.n_classes()));
    m.insert("offsets".into(), json!(vm.offsets().offsets()));
    m.insert("n_test".into(), json!(vm.n_rows()));
    m
}

fn radius_stats_json(report: &CertificateReport) -> Value {
    json!({
        "pr_radius_up": fraction(report.stats.pr_radius_up),
        "mean_delta_r": fraction(report.stats.mean_delta_r),
    })
}

pub fn certify_json(
    vm: &VoteMatrix,
    report: &CertificateReport,
    stats: Option<&EnsembleStats>,
    verbose: bool,
) -> String {
    let mut m = header(vm);
    m.insert(
        "ensemble_stats".into(),
        stats.map_or(Value::Null, |s| {
            json!({
                "clean_accuracy": fraction(s.clean_accuracy),
                "base_accuracy": fraction(s.base_accuracy),
            })
        }),
    );
    m.insert("radius_stats".into(), radius_stats_json(report));
    m.insert(
        "curve".into(),
        Value::Array(
            report
                .curve
                .iter()
                .enumerate()
                .map(|(a, f)| json!({ "attack_size": a, "certified_fraction": fraction(*f) }))
                .collect(),
        ),
    );
    let certs = report
        .certificates
        .iter()
        .enumerate()
        .map(|(t, c)| {
            let mut v = serde_json::to_value(c).expect("certificate serializes");
            v["index"] = json!(t);
            if verbose {
                let table = margin_table(&vm.votes()[t], vm.offsets(), vm.n_classes());
                let deltas: Vec<Value> = (0..vm.n_classes())
                    .filter(|&c| c != table.prediction)
                    .map(|c| serde_json::to_value(delta_multiset(&table, c, None)).unwrap())
                    .collect();
                v["deltas"] = Value::Array(deltas);
            }
            v
        })
        .collect();
    m.insert("certificates".into(), Value::Array(certs));
    pretty(&Value::Object(m))
}

pub fn curve_csv(curve: &[Ratio<u64>]) -> String {
    let mut s = String::from("attack_size,certified_fraction\n");
    for (a, f) in curve.iter().enumerate() {
        s.push_str(&format!("{a},{}\n", *f.numer() as f64 / *f.denom() as f64));
    }
    s
}

pub fn compare_json(vm: &VoteMatrix, report: &CertificateReport) -> String {
    let mut m = header(vm);
    m.insert("radius_stats".into(), radius_stats_json(report));
    let improved: Vec<usize> = report
        .certificates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.fa_radius > c.dpa_radius)
        .map(|(t, _)| t)
        .collect();
    m.insert("improved_rows".into(), json!(improved));
    pretty(&Value::Object(m))
}

pub fn cert_acc_json(acc: &CertifiedAccuracy, certified_fraction: Ratio<u64>) -> String {
    pretty(&json!({
        "budget": acc.budget,
        "certified_accuracy": fraction(acc.value),
        "certified_fraction": fraction(certified_fraction),
        "argmin_q": acc.argmin_q,
    }))
}

pub fn oracle_json(report: &VerificationReport) -> String {
    let mut v = serde_json::to_value(report).expect("report serializes");
    v["sound"] = json!(report.is_sound());
    pretty(&v)
}

pub fn ia_json(dist: &IAVoteDistribution, radius: i64) -> String {
    let dist_json = |d: &[finiagg::infinite_aggregation::Rational]| -> Vec<ExactValue> {
        d.iter().map(ExactValue::from).collect()
    };
    let conditionals: Vec<Value> = dist
        .samples
        .iter()
        .zip(&dist.given)
        .map(|(s, g)| {
            json!({
                "label": s.label,
                "features": s.features,
                "distribution": dist_json(g),
            })
        })
        .collect();
    pretty(&json!({
        "k": dist.k,
        "n_train": dist.samples.len(),
        "prediction": dist.prediction,
        "radius": if radius == i64::MAX { Value::Null } else { json!(radius) },
        "ia": dist_json(&dist.ia),
        "conditionals": conditionals,
    }))
}
