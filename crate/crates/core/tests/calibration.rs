use irt_arena::calibration::{
    birnbaum_fit, calibrate_items, estimate_abilities, CalibrationConfig,
};
use irt_arena::data::{ItemParameters, ResponseMatrix};
use irt_arena::synthesis::{
    generate_population, random_items, AbilityDistribution, ItemRanges, PopulationSpec,
};

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut r = vec![0.0; x.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s + 1;
        while e < idx.len() && x[idx[e]] == x[idx[s]] {
            e += 1;
        }
        for &k in &idx[s..e] {
            r[k] = (s + e + 1) as f64 / 2.0;
        }
        s = e;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

fn population(n: usize, items: Vec<ItemParameters<f64>>, seed: u64) -> (ResponseMatrix, Vec<f64>) {
    let pop = generate_population(&PopulationSpec {
        n_respondents: n,
        ability_distribution: AbilityDistribution::Normal { mean: 0.0, sd: 1.0 },
        items,
        seed,
        respondent_prefix: "r".into(),
    })
    .unwrap();
    (pop.matrix, pop.abilities)
}

fn assert_monotone(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(
            w[1] >= w[0] - 1e-8,
            "log-likelihood decreased: {} -> {}",
            w[0],
            w[1]
        );
    }
}

#[test]
fn recovers_item_parameters_from_large_population() {
    let truth = random_items(40, &ItemRanges::default(), "item", 2024).unwrap();
    let (matrix, _) = population(5000, truth.clone(), 77);
    let result = calibrate_items(&matrix, &CalibrationConfig::default()).unwrap();
    assert!(result.excluded_items.is_empty());
    assert_monotone(&result.log_likelihood_trace);

    let true_a: Vec<f64> = truth.iter().map(|i| i.a).collect();
    let true_b: Vec<f64> = truth.iter().map(|i| i.b).collect();
    let est_a: Vec<f64> = result.items.iter().map(|i| i.a).collect();
    let est_b: Vec<f64> = result.items.iter().map(|i| i.b).collect();
    let rb = pearson(&true_b, &est_b);
    let ra = pearson(&true_a, &est_a);
    eprintln!(
        "r(b) = {rb:.4}, r(a) = {ra:.4}, iterations = {}",
        result.iterations_used
    );
    assert!(rb >= 0.95, "r(b) = {rb}");
    assert!(ra >= 0.85, "r(a) = {ra}");
}

#[test]
fn abilities_track_true_abilities() {
    let truth = random_items(60, &ItemRanges::default(), "item", 5).unwrap();
    let (matrix, thetas) = population(200, truth, 31);
    let (calibration, abilities) = birnbaum_fit(&matrix, &CalibrationConfig::default()).unwrap();
    assert_monotone(&calibration.log_likelihood_trace);
    let est: Vec<f64> = abilities.iter().map(|a| a.theta).collect();
    let rho = spearman(&thetas, &est);
    eprintln!("spearman = {rho:.4}");
    assert!(rho >= 0.9, "rank correlation {rho}");
}

fn small_population() -> ResponseMatrix {
    let truth = random_items(15, &ItemRanges::default(), "q", 9).unwrap();
    population(400, truth, 10).0
}

#[test]
fn discrimination_sign_follows_total_score_correlation() {
    let truth = random_items(12, &ItemRanges::default(), "q", 21).unwrap();
    let (base, thetas) = population(600, truth, 22);
    // append one column answered by high scorers and one by low scorers
    let mut order: Vec<usize> = (0..thetas.len()).collect();
    let totals: Vec<usize> = base
        .rows()
        .map(|r| r.iter().map(|&v| v as usize).sum())
        .collect();
    order.sort_by_key(|&j| totals[j]);
    let cut = order.len() / 2;
    let mut high = vec![0u8; thetas.len()];
    for &j in &order[cut..] {
        high[j] = 1;
    }
    let rows: Vec<Vec<u8>> = base
        .rows()
        .enumerate()
        .map(|(j, r)| {
            let mut row = r.to_vec();
            row.push(high[j]);
            row.push(1 - high[j]);
            row
        })
        .collect();
    let mut ids = base.item_ids().to_vec();
    ids.push("zz_pos".into());
    ids.push("zz_neg".into());
    let m = ResponseMatrix::new(base.respondent_ids().to_vec(), ids, rows).unwrap();
    let result = calibrate_items(&m, &CalibrationConfig::default()).unwrap();
    assert_monotone(&result.log_likelihood_trace);
    let find = |id: &str| result.items.iter().find(|i| i.item_id == id).unwrap().a;
    assert!(find("zz_pos") > 0.0, "positive item a = {}", find("zz_pos"));
    assert!(find("zz_neg") < 0.0, "negative item a = {}", find("zz_neg"));
}

#[test]
fn column_permutation_permutes_parameters() {
    let m = small_population();
    let n = m.n_items();
    let perm: Vec<usize> = (0..n).rev().collect();
    let permuted = m.select_items(&perm);
    let cfg = CalibrationConfig::default();
    let a = calibrate_items(&m, &cfg).unwrap();
    let b = calibrate_items(&permuted, &cfg).unwrap();
    for item in &a.items {
        let other = b.items.iter().find(|i| i.item_id == item.item_id).unwrap();
        assert!((item.a - other.a).abs() < 1e-6);
        assert!((item.b - other.b).abs() < 1e-6);
        assert!((item.c - other.c).abs() < 1e-6);
    }
}

#[test]
fn respondent_relabeling_changes_nothing() {
    let m = small_population();
    let renamed: Vec<String> = m
        .respondent_ids()
        .iter()
        .map(|id| format!("model-{id}"))
        .collect();
    let rows: Vec<Vec<u8>> = m.rows().map(|r| r.to_vec()).collect();
    let m2 = ResponseMatrix::new(renamed, m.item_ids().to_vec(), rows).unwrap();
    let cfg = CalibrationConfig::default();
    let a = calibrate_items(&m, &cfg).unwrap();
    let b = calibrate_items(&m2, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bit_identical_across_thread_counts() {
    let m = small_population();
    let cfg = CalibrationConfig::default();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| birnbaum_fit(&m, &cfg).unwrap())
    };
    let (c1, a1) = run(1);
    let (c4, a4) = run(4);
    assert_eq!(c1, c4);
    assert_eq!(a1, a4);
}

#[test]
fn held_out_respondent_with_more_hits_scores_higher() {
    let truth = random_items(20, &ItemRanges::default(), "q", 41).unwrap();
    let (m, _) = population(500, truth, 42);
    let cal = calibrate_items(&m, &CalibrationConfig::default()).unwrap();
    assert!(cal.items.iter().all(|i| i.a > 0.0));
    let ids: Vec<String> = cal.items.iter().map(|i| i.item_id.clone()).collect();
    // second respondent answers a superset of the first one's items
    let weak: Vec<u8> = (0..ids.len()).map(|k| (k % 3 == 0) as u8).collect();
    let strong: Vec<u8> = (0..ids.len())
        .map(|k| (k % 3 == 0 || k % 3 == 1) as u8)
        .collect();
    let held = ResponseMatrix::new(
        vec!["weak".into(), "strong".into()],
        ids,
        vec![weak, strong],
    )
    .unwrap();
    let est = estimate_abilities(&held, &cal.items, (-6.0, 6.0)).unwrap();
    assert!(est[1].theta >= est[0].theta);
}

#[test]
fn held_out_matrix_must_contain_calibrated_items() {
    let m = small_population();
    let cal = calibrate_items(&m, &CalibrationConfig::default()).unwrap();
    let held = ResponseMatrix::new(vec!["x".into()], vec!["other".into()], vec![vec![1]]).unwrap();
    assert!(estimate_abilities(&held, &cal.items, (-6.0, 6.0)).is_err());
}
