//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test -p finiagg --test acceptance -- --nocapture` to see them.

mod common;

use std::collections::HashMap;
use std::time::{Duration, Instant};

use finiagg::certifier::{
    certified_accuracy, certify_matrix, labeled_tables, DEFAULT_ENUMERATION_CAP,
};
use finiagg::ensemble::vote_counts;
use finiagg::hashing::{build_partitions, build_subsets};
use finiagg::infinite_aggregation::{ia_brute_force_check, ia_radius, ia_votes, Rational};
use finiagg::oracle::{exact_poison_radius, verify_certificates};
use finiagg::*;
use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, ok: bool, elapsed: Duration, limit: Option<Duration>, detail: String) {
    let timing = match limit {
        Some(l) => format!("{:.2?} (limit {:.0?})", elapsed, l),
        None => format!("{:.2?}", elapsed),
    };
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("{verdict} [{id}] {name}: {detail}; {timing}");
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, n_classes: usize, dim: usize, max: u64) -> Dataset {
    let samples = (0..n)
        .map(|_| {
            let features = (0..dim).map(|_| rng.gen_range(0..=max)).collect();
            LabeledSample::new(features, rng.gen_range(0..n_classes))
        })
        .collect();
    Dataset::new(samples, n_classes, dim).unwrap()
}

fn labelled_matrix(rng: &mut ChaCha8Rng, offsets: SpreadOffsets, k: usize, n_classes: usize, rows: usize) -> VoteMatrix {
    let (kd, d) = (offsets.kd(), offsets.d());
    let votes: Vec<Vec<usize>> = (0..rows).map(|_| common::random_row(rng, kd, n_classes)).collect();
    let labels = (0..rows).map(|_| rng.gen_range(0..n_classes)).collect();
    VoteMatrix::new(k, d, n_classes, offsets, Some(labels), votes).unwrap()
}

#[test]
fn dpa_reduction() {
    let start = Instant::now();
    let mut rng = common::rng(101);
    let mut rows = 0;
    let mut mismatches = 0;
    for _ in 0..100 {
        let k = rng.gen_range(3..=8);
        let n_classes = rng.gen_range(2..=5);
        let offsets = generate_offsets(k, 1, rng.gen(), OffsetMode::DpaCompatible).unwrap();
        assert_eq!(offsets.offsets(), [0]);
        for _ in 0..20 {
            let row = common::random_row(&mut rng, k, n_classes);
            let label = rng.gen_bool(0.5).then(|| rng.gen_range(0..n_classes));
            let fa = fa_radius(&margin_table(&row, &offsets, n_classes), label);
            let dpa = dpa_radius(&vote_counts(&row, n_classes), label);
            rows += 1;
            mismatches += usize::from(fa != dpa);
        }
    }
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(1);
    report(
        1,
        "d=1 reduces to DPA",
        mismatches == 0 && within(elapsed, limit),
        elapsed,
        Some(limit),
        format!("{mismatches} mismatches over {rows} rows of 100 matrices"),
    );
}

#[test]
fn soundness_against_oracle() {
    let start = Instant::now();
    let mut rng = common::rng(202);
    let mut violations = 0;
    let mut rows = 0;
    let mut equal = 0;
    let mut strict = 0;
    for _ in 0..200 {
        let d = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=12 / d);
        let n_classes = rng.gen_range(2..=4);
        let offsets = common::random_offsets(&mut rng, k, d);
        let votes: Vec<Vec<usize>> = (0..8).map(|_| common::random_row(&mut rng, k * d, n_classes)).collect();
        let rep = verify_certificates(&votes, &offsets, n_classes, 12).unwrap();
        rows += rep.rows_checked;
        violations += rep.violations.len() + rep.dpa_mismatches.len();
        equal += rep.gap_histogram.get(&0).copied().unwrap_or(0);
        strict += rep.gap_histogram.range(1..).map(|(_, n)| n).sum::<usize>();
    }
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(30);
    report(
        2,
        "certificates never exceed the exact radius",
        violations == 0 && equal > 0 && strict > 0 && within(elapsed, limit),
        elapsed,
        Some(limit),
        format!("{violations} violations over {rows} rows; {equal} tight, {strict} strictly below"),
    );
}

#[test]
fn golden_toy() {
    let start = Instant::now();
    // dog = 0, cat = 1, deer = 2, bird = 3
    let fa_row = [1, 0, 1, 2, 1, 3, 1, 0, 1, 2, 1, 3];
    let fa_offsets = SpreadOffsets::new(vec![0, 1], 12).unwrap();
    let fa = fa_radius(&margin_table(&fa_row, &fa_offsets, 4), None);
    let fa_exact = exact_poison_radius(&fa_row, &fa_offsets, 4, None, 16).unwrap();

    let dpa_row = [1, 1, 1, 0, 2, 3];
    let dpa_offsets = SpreadOffsets::identity(6);
    let dpa = dpa_radius(&vote_counts(&dpa_row, 4), None);
    let via_fa = fa_radius(&margin_table(&dpa_row, &dpa_offsets, 4), None);
    let dpa_exact = exact_poison_radius(&dpa_row, &dpa_offsets, 4, None, 16).unwrap();

    // One poison moves two of the twelve votes but only one of them is a cat
    // vote, so the margin drops by 3 out of 12.
    let table = margin_table(&fa_row, &fa_offsets, 4);
    let worst = finiagg::certifier::delta_multiset(&table, 0, None).elements[0];

    let ok = fa == 1 && fa_exact == 1 && dpa == 0 && via_fa == 0 && dpa_exact == 0 && worst == 3;
    report(
        3,
        "toy example",
        ok,
        start.elapsed(),
        None,
        format!("fa {fa} (exact {fa_exact}), dpa {dpa} (exact {dpa_exact}), largest reduction {worst}/12"),
    );
}

#[test]
fn accuracy_dominates_fraction() {
    let start = Instant::now();
    let mut rng = common::rng(404);
    let mut runs = 0;
    let mut failures = Vec::new();
    let check = |vm: &VoteMatrix, failures: &mut Vec<String>| {
        let radii: Vec<i64> = certify_matrix(vm).iter().map(|c| c.fa_radius).collect();
        let curve = certified_fraction_curve(&radii, 1);
        let tables = labeled_tables(vm).unwrap();
        for b in 0..=1 {
            let acc = certified_accuracy(&tables, b, DEFAULT_ENUMERATION_CAP).unwrap();
            if acc.value < curve[b] {
                failures.push(format!("b={b}: {} < {}", acc.value, curve[b]));
            }
        }
    };
    for _ in 0..100 {
        let d = rng.gen_range(1..=2);
        let k = rng.gen_range(2..=4);
        let n_classes = rng.gen_range(2..=4);
        let offsets = common::random_offsets(&mut rng, k, d);
        let vm = labelled_matrix(&mut rng, offsets, k, n_classes, 12);
        check(&vm, &mut failures);
        runs += 1;
    }
    for d in [1, 2, 4] {
        let mut data_rng = common::rng(d as u64);
        let means = vec![vec![40.0, 40.0], vec![55.0, 40.0], vec![40.0, 55.0]];
        let train = Dataset::new(common::integer_gaussian(&mut data_rng, &means, 8.0, 120), 3, 2).unwrap();
        let test = Dataset::new(common::integer_gaussian(&mut data_rng, &means, 8.0, 30), 3, 2).unwrap();
        let vm = common::run_pipeline(&train, &test, 4, d, 7, LearnerKind::NearestCentroid);
        check(&vm, &mut failures);
        runs += 1;
    }

    // Two samples whose certificates cannot be broken by the same poison.
    let offsets = SpreadOffsets::identity(2);
    let vm = VoteMatrix::new(2, 1, 2, offsets, Some(vec![0, 0]), vec![vec![1, 0], vec![0, 1]]).unwrap();
    let radii: Vec<i64> = certify_matrix(&vm).iter().map(|c| c.fa_radius).collect();
    let fraction = certified_fraction_curve(&radii, 1)[1];
    let acc = certified_accuracy(&labeled_tables(&vm).unwrap(), 1, DEFAULT_ENUMERATION_CAP).unwrap();
    let construction = fraction == Ratio::from_integer(0) && acc.value == Ratio::new(1, 2);

    report(
        4,
        "certified accuracy dominates certified fraction",
        failures.is_empty() && construction,
        start.elapsed(),
        None,
        format!(
            "{runs} labelled runs, {} violations; construction gives fraction {fraction}, accuracy {}",
            failures.len(),
            acc.value
        ),
    );
}

const CASES: usize = 500;

fn invariant_hashing(rng: &mut ChaCha8Rng) -> bool {
    let d = rng.gen_range(1..=6);
    let k = rng.gen_range(d.max(1)..=12);
    let offsets = common::random_offsets(rng, k, d);
    let kd = k * d;
    let mut load = vec![0usize; kd];
    for j in 0..kd {
        let out = spread(j, &offsets);
        let mut distinct = out.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != d {
            return false;
        }
        for &i in &out {
            load[i] += 1;
            if !spread_inverse(i, &offsets).contains(&j) {
                return false;
            }
        }
    }
    load.iter().all(|&l| l == d)
        && (0..kd).all(|i| spread_inverse(i, &offsets).iter().all(|&j| spread(j, &offsets).contains(&i)))
}

fn invariant_tables(rng: &mut ChaCha8Rng) -> bool {
    let d = rng.gen_range(1..=4);
    let k = rng.gen_range(1..=8);
    let n_classes = rng.gen_range(1..=5);
    let offsets = common::random_offsets(rng, k, d);
    let row = common::random_row(rng, k * d, n_classes);
    let t = margin_table(&row, &offsets, n_classes);
    let column_sums = (0..k * d).all(|j| (0..n_classes).map(|c| t.per_partition[c][j]).sum::<usize>() == d);
    let row_sums = (0..n_classes).all(|c| t.per_partition[c].iter().sum::<usize>() == d * t.counts[c]);
    let winners = (0..n_classes).filter(|&c| c != t.prediction).all(|c| t.rhs(c) >= 0);
    column_sums && row_sums && winners
}

fn invariant_curve(rng: &mut ChaCha8Rng) -> bool {
    let n = rng.gen_range(1..=40);
    let radii: Vec<i64> = (0..n).map(|_| rng.gen_range(-1..=10)).collect();
    let curve = certified_fraction_curve(&radii, 12);
    curve.windows(2).all(|w| w[1] <= w[0])
}

fn invariant_q_monotone(rng: &mut ChaCha8Rng) -> bool {
    let d = rng.gen_range(1..=3);
    let k = rng.gen_range(2..=6);
    let n_classes = rng.gen_range(2..=4);
    let kd = k * d;
    let offsets = common::random_offsets(rng, k, d);
    let row = common::random_row(rng, kd, n_classes);
    let table = margin_table(&row, &offsets, n_classes);
    let mut all: Vec<usize> = (0..kd).collect();
    all.shuffle(rng);
    let big_len = rng.gen_range(0..=kd);
    let small_len = rng.gen_range(0..=big_len);
    let mut big = all[..big_len].to_vec();
    let mut small = all[..small_len].to_vec();
    big.sort_unstable();
    small.sort_unstable();
    let budget = rng.gen_range(0..=kd);
    // Certified on the larger scope must imply certified on the smaller.
    !conditional_certified(&table, &big, budget, None) || conditional_certified(&table, &small, budget, None)
}

fn end_to_end(seed: u64) -> (String, String) {
    let mut rng = common::rng(seed);
    let n_classes = rng.gen_range(2..=3);
    let train = random_dataset(&mut rng, 40, n_classes, 2, 20);
    let test = random_dataset(&mut rng, 8, n_classes, 2, 20);
    let k = rng.gen_range(2..=5);
    let d = rng.gen_range(1..=3);
    let vm = common::run_pipeline(&train, &test, k, d, seed, LearnerKind::NearestCentroid);
    let report = certificate_report(&vm, vm.kd());
    let certs = serde_json::to_string(&report.certificates).unwrap();
    (vm.to_json(), format!("{certs}{:?}", report.curve))
}

fn invariant_determinism(seed: u64) -> bool {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    one.install(|| end_to_end(seed)) == many.install(|| end_to_end(seed))
}

fn invariant_partitions(rng: &mut ChaCha8Rng) -> bool {
    let n_classes = rng.gen_range(1..=3);
    let n = rng.gen_range(0..=30);
    let data = random_dataset(rng, n, n_classes, 3, 9);
    let k = rng.gen_range(1..=5);
    let d = rng.gen_range(1..=k.min(3));
    let config = AggregationConfig::new(k, d, rng.gen(), n_classes).unwrap();
    let offsets = common::random_offsets(rng, k, d);
    let assignment = build_partitions(&data, &config);
    let layout = build_subsets(&assignment, &offsets);
    let total: usize = layout.subsets.iter().map(Vec::len).sum();
    total == d * n
}

#[test]
fn invariant_suite() {
    let start = Instant::now();
    let mut rng = common::rng(505);
    let mut failed: Vec<&str> = Vec::new();
    let checks: [(&str, fn(&mut ChaCha8Rng) -> bool); 5] = [
        ("hash balance and duality", invariant_hashing),
        ("table identities and winner rhs", invariant_tables),
        ("curve monotonicity", invariant_curve),
        ("Q-monotonicity", invariant_q_monotone),
        ("partition conservation", invariant_partitions),
    ];
    for (name, check) in checks {
        if !(0..CASES).all(|_| check(&mut rng)) {
            failed.push(name);
        }
    }
    if !(0..CASES as u64).all(invariant_determinism) {
        failed.push("1 vs 4 worker determinism");
    }
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(60);
    report(
        5,
        "invariant suite",
        failed.is_empty() && within(elapsed, limit),
        elapsed,
        Some(limit),
        if failed.is_empty() {
            format!("{} checks x {CASES} cases", checks.len() + 1)
        } else {
            format!("failed: {}", failed.join(", "))
        },
    );
}

/// Nearest-centroid prediction written independently of the library:
/// exact comparison of `|x - s_c / n_c|^2` across classes present in the
/// subset, ties to the smaller class, empty subset -> class 0.
fn reference_centroid(samples: &[&LabeledSample], x: &[u64], n_classes: usize) -> usize {
    let dim = x.len();
    let mut count = vec![0i128; n_classes];
    let mut sums = vec![vec![0i128; dim]; n_classes];
    for s in samples {
        count[s.label] += 1;
        for (acc, &f) in sums[s.label].iter_mut().zip(&s.features) {
            *acc += f as i128;
        }
    }
    let mut best: Option<(usize, Rational)> = None;
    for c in 0..n_classes {
        if count[c] == 0 {
            continue;
        }
        let n = Rational::from_integer(BigInt::from(count[c]));
        let dist: Rational = (0..dim)
            .map(|i| {
                let diff = Rational::from_integer(BigInt::from(x[i])) - Rational::from_integer(BigInt::from(sums[c][i])) / &n;
                &diff * &diff
            })
            .fold(Rational::zero(), |a, b| a + b);
        if best.as_ref().map_or(true, |(_, b)| dist < *b) {
            best = Some((c, dist));
        }
    }
    best.map_or(0, |(c, _)| c)
}

fn ia_identities(rng: &mut ChaCha8Rng, spec: &LearnerSpec) -> bool {
    let n = rng.gen_range(0..=10);
    let n_classes = rng.gen_range(2..=3);
    let k = rng.gen_range(2..=4);
    let data = random_dataset(rng, n, n_classes, 2, 6);
    let x: Vec<u64> = (0..2).map(|_| rng.gen_range(0..=6)).collect();
    let dist = ia_votes(&data, &x, k, spec, 16).unwrap();
    let one = Rational::one();
    let sum = |v: &[Rational]| v.iter().fold(Rational::zero(), |a, b| a + b);
    if sum(&dist.ia) != one || dist.given.iter().any(|g| sum(g) != one) {
        return false;
    }
    let kk = Rational::from_integer(BigInt::from(k));
    for (t, given) in dist.given.iter().enumerate() {
        let mut rest = dist.samples.clone();
        rest.remove(t);
        let reduced = Dataset::new(rest, n_classes, 2).unwrap();
        let without = ia_votes(&reduced, &x, k, spec, 16).unwrap();
        for c in 0..n_classes {
            let rhs = &given[c] / &kk + (&one - &one / &kk) * &without.ia[c];
            if rhs != dist.ia[c] {
                return false;
            }
        }
    }
    true
}

/// Largest deviation, in standard errors, of a sampled estimate of the IA
/// vote shares from the exact values.
fn monte_carlo_z(rng: &mut ChaCha8Rng, draws: usize) -> f64 {
    let n = 10;
    let k = rng.gen_range(2..=4);
    let means = vec![vec![10.0, 10.0], vec![14.0, 10.0], vec![10.0, 14.0]];
    let data = Dataset::new(common::integer_gaussian(rng, &means, 3.0, n), 3, 2).unwrap();
    let x = vec![12, 12];
    let spec = LearnerSpec::new(LearnerKind::NearestCentroid);
    let exact = ia_votes(&data, &x, k, &spec, 16).unwrap();
    let samples = data.samples();
    let mut memo: HashMap<u32, usize> = HashMap::new();
    let mut hits = [0usize; 3];
    for _ in 0..draws {
        let mask: u32 = (0..n).filter(|_| rng.gen_range(0..k) == 0).fold(0, |m, t| m | 1 << t);
        let pred = *memo.entry(mask).or_insert_with(|| {
            let subset: Vec<&LabeledSample> = (0..n).filter(|t| mask >> t & 1 == 1).map(|t| &samples[t]).collect();
            reference_centroid(&subset, &x, 3)
        });
        hits[pred] += 1;
    }
    let mut worst: f64 = 0.0;
    for c in 0..3 {
        let p = exact.ia[c].to_f64().unwrap();
        let p_hat = hits[c] as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        let z = if se == 0.0 {
            if p_hat == p { 0.0 } else { f64::INFINITY }
        } else {
            (p_hat - p).abs() / se
        };
        worst = worst.max(z);
    }
    worst
}

#[test]
fn infinite_aggregation() {
    let start = Instant::now();
    let mut rng = common::rng(606);
    let specs = [
        LearnerSpec::new(LearnerKind::NearestCentroid),
        LearnerSpec::new(LearnerKind::MajorityLabel),
    ];
    let identity_failures = (0..50).filter(|i| !ia_identities(&mut rng, &specs[i % 2])).count();

    let z: Vec<f64> = (0..3).map(|_| monte_carlo_z(&mut rng, 100_000)).collect();
    let z_max = z.iter().cloned().fold(0.0, f64::max);

    // Clustered data so that most instances certify a positive budget.
    let mut unsound = 0;
    let mut budgets_checked = 0;
    let spec = LearnerSpec::new(LearnerKind::NearestCentroid);
    for i in 0..20 {
        let n = rng.gen_range(1..=6);
        let samples: Vec<LabeledSample> = (0..n)
            .map(|_| {
                let label = usize::from(rng.gen_bool(0.3));
                let base = if label == 0 { 2 } else { 7 };
                LabeledSample::new(vec![base + rng.gen_range(0..=2)], label)
            })
            .collect();
        let data = Dataset::new(samples, 2, 1).unwrap();
        let pool: Vec<LabeledSample> = (0..rng.gen_range(0..=2))
            .map(|_| LabeledSample::new(vec![rng.gen_range(0..=9)], rng.gen_range(0..2)))
            .collect();
        let k = [2, 3, 4][i % 3];
        let x = vec![3];
        let radius = ia_radius(&ia_votes(&data, &x, k, &spec, 16).unwrap());
        for b in 0..=radius.clamp(0, 3) as usize {
            budgets_checked += 1;
            if !ia_brute_force_check(&data, &x, k, &spec, b, &pool, 16).unwrap() {
                unsound += 1;
            }
        }
    }

    let elapsed = start.elapsed();
    let limit = Duration::from_secs(120);
    report(
        6,
        "infinite aggregation",
        identity_failures == 0 && z_max <= 4.0 && unsound == 0 && within(elapsed, limit),
        elapsed,
        Some(limit),
        format!(
            "{identity_failures}/50 identity failures; max |z| {z_max:.2} over 3 x 1e5 draws; \
             {unsound} unsound of {budgets_checked} certified budgets"
        ),
    );
}

fn as_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[test]
fn trend_in_d() {
    let start = Instant::now();
    // Three classes in three dimensions; class c is shifted along axis c.
    let means: Vec<Vec<f64>> = (0..3)
        .map(|c| (0..3).map(|i| if i == c { 62.0 } else { 50.0 }).collect())
        .collect();
    let mut rng = common::rng(0);
    let train = Dataset::new(common::integer_gaussian(&mut rng, &means, 10.0, 600), 3, 3).unwrap();
    let test = Dataset::new(common::integer_gaussian(&mut rng, &means, 10.0, 300), 3, 3).unwrap();

    let mut accuracy = Vec::new();
    let mut mean_radius = Vec::new();
    let mut curves = Vec::new();
    for d in [1, 2, 4] {
        let vm = common::run_pipeline(&train, &test, 10, d, 0, LearnerKind::NearestCentroid);
        let radii: Vec<i64> = certify_matrix(&vm).iter().map(|c| c.fa_radius).collect();
        accuracy.push(as_f64(ensemble_stats(&vm).unwrap().clean_accuracy));
        mean_radius.push(radii.iter().sum::<i64>() as f64 / radii.len() as f64);
        curves.push(certified_fraction_curve(&radii, 3));
    }
    let nondecreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let radius_ok = nondecreasing(&mean_radius);
    let curve_ok = (1..=3).all(|a| curves.windows(2).all(|w| w[1][a] >= w[0][a]));
    let spread = accuracy.iter().cloned().fold(f64::MIN, f64::max) - accuracy.iter().cloned().fold(f64::MAX, f64::min);
    let elapsed = start.elapsed();
    let limit = Duration::from_secs(30);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    let cf: Vec<String> = (1..=3)
        .map(|a| fmt(&curves.iter().map(|c| as_f64(c[a])).collect::<Vec<_>>()))
        .collect();
    report(
        7,
        "radius and certified fraction grow with d",
        radius_ok && curve_ok && spread < 0.02 && within(elapsed, limit),
        elapsed,
        Some(limit),
        format!(
            "d=1/2/4: mean radius {}, cf@1 {}, cf@2 {}, cf@3 {}, accuracy {} (spread {:.1}pp)",
            fmt(&mean_radius),
            cf[0],
            cf[1],
            cf[2],
            fmt(&accuracy),
            spread * 100.0
        ),
    );
}
