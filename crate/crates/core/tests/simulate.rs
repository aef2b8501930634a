use rayon::ThreadPoolBuilder;

use pvkit::bcpnn::{bcpnn_signals, ic};
use pvkit::disprop::{flag_signals, prr, ror, ThresholdRule};
use pvkit::ebayes::{
    eb_signal_table, fit_efron, fit_general_gamma, fit_gps, fit_km, select_grid, EbRule, EfronOptions, GeneralGammaOptions, MixturePrior,
    DEFAULT_EPSILON,
};
use pvkit::lrt::{lrt_analysis, pseudo_lrt, McOptions, NullModel};
use pvkit::simulate::{gen_null_conditional, gen_poisson_table, score, score_masked, MetricReport, PlantedSignal, SimScenario};
use pvkit::table::expected_baseline;
use pvkit::Grid;

const DRAWS: u64 = 10_000;

fn scenario() -> SimScenario {
    let mut sc = SimScenario::uniform(3, 3, 0, 17);
    sc.row_marginals = vec![1.0, 2.0, 5.0];
    sc.col_totals = vec![20, 40, 80];
    sc.signals.push(PlantedSignal { ae: 0, drug: 1, lambda: 4.0 });
    sc
}

/// Per-cell sample mean and variance over `DRAWS` tables.
fn moments(gen: impl Fn(u64) -> Grid<u64>, rows: usize, cols: usize) -> (Grid<f64>, Grid<f64>) {
    let mut s = Grid::filled(rows, cols, 0.0);
    let mut ss = Grid::filled(rows, cols, 0.0);
    for t in 0..DRAWS {
        for (i, j, &x) in gen(t).indexed() {
            s[(i, j)] += x as f64;
            ss[(i, j)] += (x * x) as f64;
        }
    }
    let n = DRAWS as f64;
    let mean = s.map(|x| x / n);
    let var = Grid::from_fn(rows, cols, |i, j| (ss[(i, j)] - n * mean[(i, j)].powi(2)) / (n - 1.0));
    (mean, var)
}

/// `|got - want| < 3` standard errors, given the per-draw variance.
fn close(got: f64, want: f64, var: f64) -> bool {
    (got - want).abs() < 3.0 * (var / DRAWS as f64).sqrt() + 1e-12
}

#[test]
fn poisson_cells_have_poisson_moments() {
    let sc = scenario();
    let (mean, var) = moments(|t| gen_poisson_table(&sc, t).unwrap().counts().clone(), 3, 3);
    let (e, lambda) = (sc.baseline(), sc.lambda());
    for i in 0..3 {
        for j in 0..3 {
            let mu = lambda[(i, j)] * e.get(i, j);
            assert!(close(mean[(i, j)], mu, mu), "mean ({i}, {j}): {} vs {mu}", mean[(i, j)]);
            assert!((var[(i, j)] / mu - 1.0).abs() < 0.1, "var ({i}, {j}): {} vs {mu}", var[(i, j)]);
        }
    }
}

#[test]
fn zip_cells_have_zip_moments() {
    let mut sc = scenario();
    sc.p0 = 0.4;
    let (mean, var) = moments(|t| gen_poisson_table(&sc, t).unwrap().counts().clone(), 3, 3);
    let (e, lambda) = (sc.baseline(), sc.lambda());
    for i in 0..3 {
        for j in 0..3 {
            let mu = lambda[(i, j)] * e.get(i, j);
            let (m, v) = (0.6 * mu, 0.6 * mu * (1.0 + 0.4 * mu));
            assert!(close(mean[(i, j)], m, v), "mean ({i}, {j}): {} vs {m}", mean[(i, j)]);
            assert!((var[(i, j)] / v - 1.0).abs() < 0.1, "var ({i}, {j}): {} vs {v}", var[(i, j)]);
        }
    }
}

#[test]
fn null_columns_are_multinomial() {
    let sc = scenario();
    let pi = sc.row_proportions();
    let (mean, var) = moments(
        |t| {
            let tab = gen_null_conditional(&sc, t).unwrap();
            assert_eq!(tab.col_totals(), sc.col_totals.as_slice());
            tab.counts().clone()
        },
        3,
        3,
    );
    for i in 0..3 {
        for j in 0..3 {
            let n = sc.col_totals[j] as f64;
            let (m, v) = (n * pi[i], n * pi[i] * (1.0 - pi[i]));
            assert!(close(mean[(i, j)], m, v), "mean ({i}, {j}): {} vs {m}", mean[(i, j)]);
            assert!((var[(i, j)] / v - 1.0).abs() < 0.1, "var ({i}, {j}): {} vs {v}", var[(i, j)]);
        }
    }
}

#[test]
fn score_matches_confusion_oracle() {
    let truth = Grid::from_fn(6, 5, |i, j| (i + 2 * j) % 4 == 0);
    let dec = Grid::from_fn(6, 5, |i, j| (i * j) % 3 == 0);
    let mask = Grid::from_fn(6, 5, |i, j| i < 5 && j < 4);
    for m in [None, Some(&mask)] {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for i in 0..6 {
            for j in 0..5 {
                if m.is_some_and(|m| !m[(i, j)]) {
                    continue;
                }
                match (dec[(i, j)], truth[(i, j)]) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
        }
        let r = score_masked(&dec, &truth, m).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (tp, fp, fn_, tn));
        assert_eq!(r.fdr, fp as f64 / (tp + fp) as f64);
        assert_eq!(r.sensitivity, tp as f64 / (tp + fn_) as f64);
        assert_eq!(r.type_i_error, fp as f64 / (fp + tn) as f64);
    }
    assert_eq!(score(&dec, &truth).unwrap(), score_masked(&dec, &truth, None).unwrap());
    assert!(score(&dec, &Grid::filled(5, 5, false)).is_err());
}

#[test]
fn empty_denominators_give_zero_rates() {
    let r = MetricReport::from_counts(0, 0, 0, 10);
    assert_eq!((r.fdr, r.sensitivity, r.type_i_error), (0.0, 0.0, 0.0));
    let pooled = MetricReport::from_counts(3, 1, 1, 5).merge(&MetricReport::from_counts(1, 1, 3, 5));
    assert_eq!((pooled.tp, pooled.fp, pooled.fn_, pooled.tn), (4, 2, 4, 10));
    assert_eq!(pooled.fdr, 2.0 / 6.0);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut sc = SimScenario::uniform(40, 6, 300, 3);
    sc.row_marginals = (1..=40).map(f64::from).collect();
    sc.signals.push(PlantedSignal { ae: 5, drug: 2, lambda: 3.0 });
    let run = |threads: usize| {
        ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let t = gen_poisson_table(&sc, 4).unwrap();
            let e = expected_baseline(&t).unwrap();
            let opts = McOptions { reps: 199, seed: 9, ..Default::default() };
            let drugs: Vec<usize> = (0..6).collect();
            let a = lrt_analysis(&t, &drugs, &opts).unwrap();
            let b = pseudo_lrt(&t, &e, &drugs, NullModel::Zip, &opts).unwrap();
            (t, a, b)
        })
    };
    let one = run(1);
    for threads in [2, 4] {
        assert_eq!(run(threads), one);
    }
}

#[test]
fn pseudo_lrt_holds_its_level_under_the_null() {
    let mut sc = SimScenario::uniform(30, 2, 0, 23);
    sc.row_marginals = (1..=30).map(|i| 1.0 / i as f64).collect();
    sc.col_totals = vec![300, 30_000];
    let tables = 200;
    let mut rejections = 0;
    for t in 0..tables {
        let tab = gen_null_conditional(&sc, t).unwrap();
        let e = expected_baseline(&tab).unwrap();
        let opts = McOptions { reps: 199, seed: 500 + t, ..Default::default() };
        if pseudo_lrt(&tab, &e, &[0], NullModel::Poisson, &opts).unwrap().per_drug[0].p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / tables as f64;
    // 0.05 plus about three binomial standard errors.
    assert!(rate <= 0.10, "rejection rate {rate}");
}

#[test]
fn every_detector_holds_its_level_on_poisson_nulls() {
    // λ ≡ 1, no structural zeros; 15 AEs and 3 drugs plus references.
    let mut sc = SimScenario::uniform(16, 4, 0, 29);
    sc.row_marginals = (1..=16).map(|i| if i == 16 { 30.0 } else { 1.0 + (i % 4) as f64 }).collect();
    sc.col_totals = vec![150, 250, 400, 3000];
    sc.reference_row = Some(15);
    sc.reference_col = Some(3);
    let tested = Grid::from_fn(16, 4, |i, j| i < 15 && j < 3);
    let truth = Grid::filled(16, 4, false);
    let drugs = [0, 1, 2];

    let mut pooled: Vec<(&str, MetricReport)> = Vec::new();
    let mut add = |name, decisions: &Grid<bool>| {
        let r = score_masked(decisions, &truth, Some(&tested)).unwrap();
        match pooled.iter_mut().find(|(n, _)| *n == name) {
            Some((_, acc)) => *acc = acc.merge(&r),
            None => pooled.push((name, r)),
        }
    };
    let gg = GeneralGammaOptions { max_iter: 500, ..Default::default() };
    for t in 0..500 {
        let tab = gen_poisson_table(&sc, t).unwrap();
        let e = expected_baseline(&tab).unwrap();
        add("prr", &flag_signals(&prr(&tab), ThresholdRule::CiLowAbove(1.0)));
        add("ror", &flag_signals(&ror(&tab), ThresholdRule::CiLowAbove(1.0)));
        add("bcpnn", &bcpnn_signals(&ic(&tab).unwrap(), 0.0));
        let opts = McOptions { reps: 199, seed: 1000 + t, ..Default::default() };
        let below = |a: &pvkit::lrt::LrtAnalysis| a.cell_pvalues.map(|p| p.is_some_and(|p| p < 0.05));
        add("lrt", &below(&lrt_analysis(&tab, &drugs, &opts).unwrap()));
        add("pseudo-lrt", &below(&pseudo_lrt(&tab, &e, &drugs, NullModel::Poisson, &opts).unwrap()));
        let prob = EbRule::ProbAbove(0.95);
        let eb = |prior: &MixturePrior| eb_signal_table(prior, &tab, &e, prob, DEFAULT_EPSILON).unwrap().decisions;
        let gps = fit_gps(&tab, &e).unwrap().prior;
        add("gps", &eb_signal_table(&gps, &tab, &e, EbRule::Eb05Above(2.0), DEFAULT_EPSILON).unwrap().decisions);
        add("general-gamma", &eb(&fit_general_gamma(&tab, &e, &gg).unwrap().prior));
        let support = select_grid(&tab, &e, 120).unwrap();
        add("km", &eb(&fit_km(&tab, &e, &support).unwrap().prior));
        add("efron", &eb(&fit_efron(&tab, &e, &support, &EfronOptions::default()).unwrap().prior.to_mixture()));
    }
    for (name, r) in pooled {
        assert!(r.type_i_error <= 0.07, "{name}: {r:?}");
    }
}
