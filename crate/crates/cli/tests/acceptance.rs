//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use pvkit::bcpnn;
use pvkit::disprop::{self, Measure};
use pvkit::ebayes::{
    eb_signal_table, fit_efron_cells, fit_general_gamma_cells, fit_gps_cells, fit_km_cells, fit_single_gamma_cells, posterior_cell,
    select_grid_cells, CellObs, EbRule, EfronOptions, GammaComponent, GeneralGammaOptions, MixturePrior, DEFAULT_EPSILON,
};
use pvkit::lrt::{self, McOptions, NullModel};
use pvkit::rng::{self, stream};
use pvkit::simulate::{gen_null_conditional, gen_poisson_table, score_masked, MetricReport, SimScenario};
use pvkit::table::expected_baseline;
use pvkit::{ContingencyTable, Grid};

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        println!("{} {id:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

/// Cells with `λ ~ Σ w Gamma(shape, rate)`, `E ~ Unif(1, 50)`, `N ~ Poisson(λE)`.
fn mixture_cells(seed: u64, n: usize, comps: &[(f64, f64, f64)]) -> Vec<CellObs> {
    let mut g = stream(seed, &[]);
    let dists: Vec<_> = comps.iter().map(|&(_, a, b)| Gamma::new(a, 1.0 / b).unwrap()).collect();
    (0..n)
        .map(|_| {
            let mut u: f64 = g.random();
            let k = comps.iter().position(|c| {
                u -= c.0;
                u < 0.0
            });
            let lambda = dists[k.unwrap_or(comps.len() - 1)].sample(&mut g);
            let e = g.random_range(1.0..50.0);
            CellObs { n: rng::poisson(lambda * e, &mut g), e }
        })
        .collect()
}

const GPS_TRUTH: [(f64, f64, f64); 2] = [(0.9, 20.0, 20.0), (0.1, 4.0, 1.0)];
const THREE_TRUTH: [(f64, f64, f64); 3] = [(0.2, 1.0, 100.0), (0.7, 20.0, 20.0), (0.1, 4.0, 1.0)];

fn c1_shrinkage(r: &mut Report) {
    let prior = MixturePrior::gamma(vec![GammaComponent { shape: 0.5, rate: 0.5, weight: 1.0 }]);
    let _ = posterior_cell(&prior, 1, 0.01, DEFAULT_EPSILON);
    let mut times = Vec::new();
    let mut mean = 0.0;
    for _ in 0..101 {
        let t = Instant::now();
        mean = posterior_cell(&prior, 1, 0.01, DEFAULT_EPSILON).mean;
        times.push(t.elapsed());
    }
    times.sort();
    let median = times[50];
    let target = 1.5 / 0.51;
    let ok = (mean - target).abs() < 1e-9 && median < Duration::from_millis(1);
    r.check(1, "shrinkage example", ok, format!("posterior mean {mean:.10} vs {target:.10}, median time {median:?}"));
}

fn c2_observed_over_expected(r: &mut Report) {
    let raw: f64 = 3831.0 / 42.06;
    let mut cells = mixture_cells(21, 1000, &[(1.0, 1e6, 1e6)]);
    cells.push(CellObs { n: 3831, e: 42.06 });
    let fit = fit_general_gamma_cells(&cells, &GeneralGammaOptions::default()).unwrap();
    let median = posterior_cell(&fit.prior, 3831, 42.06, DEFAULT_EPSILON).median;
    let ok = (raw - 91.08).abs() < 0.01 && median < raw;
    r.check(2, "O/E arithmetic and shrinkage", ok, format!("O/E {raw:.4} (91.08 ± 0.01), general-gamma posterior median {median:.4}"));
}

fn c3_independence(r: &mut Report) {
    let a = [10u64, 20, 30, 45];
    let b = [100u64, 150, 400];
    let rows = a.iter().map(|&x| b.iter().map(|&y| x * y).collect()).collect();
    let t = ContingencyTable::new(
        a.iter().map(|x| format!("AE{x}")).collect(),
        b.iter().map(|y| format!("D{y}")).collect(),
        rows,
    )
    .unwrap();
    let mut worst_ratio: f64 = 0.0;
    for m in [Measure::Prr, Measure::Ror] {
        for res in disprop::compute(&t, m).as_slice() {
            worst_ratio = worst_ratio.max((res.estimate - 1.0).abs());
        }
    }
    let mut worst_lr: f64 = 0.0;
    for i in 0..t.n_rows() {
        for j in 0..t.n_cols() {
            for one_sided in [false, true] {
                worst_lr = worst_lr.max(lrt::log_lr_cell(&t, i, j, one_sided).unwrap().abs());
            }
        }
    }
    let worst_ic = bcpnn::ic(&t).unwrap().as_slice().iter().map(|r| r.ic_mean.abs()).fold(0.0, f64::max);
    let ok = worst_ratio < 1e-12 && worst_lr < 1e-12 && worst_ic < 0.02;
    r.check(3, "independence identities", ok, format!("max |PRR/ROR-1| {worst_ratio:.1e}, max |log LR| {worst_lr:.1e}, max |IC| {worst_ic:.4}"));
}

fn c4_calibration(r: &mut Report) {
    let start = Instant::now();
    let mut sc = SimScenario::uniform(100, 2, 0, 11);
    sc.row_marginals = (0..100).map(|i| 1.0 / (i as f64 + 1.0)).collect();
    sc.col_totals = vec![400, 40_000];
    sc.reference_col = Some(1);
    let tables = 500u64;
    let (mut rej_lrt, mut rej_pseudo) = (0, 0);
    for k in 0..tables {
        let t = gen_null_conditional(&sc, k).unwrap();
        let opts = McOptions { reps: 999, seed: 1000 + k, ..Default::default() };
        if lrt::mc_null_pvalue(&t, 0, &opts).unwrap().p_value < 0.05 {
            rej_lrt += 1;
        }
        let e = expected_baseline(&t).unwrap();
        if lrt::pseudo_lrt(&t, &e, &[0], NullModel::Poisson, &opts).unwrap().per_drug[0].p_value < 0.05 {
            rej_pseudo += 1;
        }
    }
    let (a, b) = (rej_lrt as f64 / tables as f64, rej_pseudo as f64 / tables as f64);
    let elapsed = start.elapsed();
    let within = |x: f64| (0.03..=0.07).contains(&x);
    let ok = within(a) && within(b) && elapsed < Duration::from_secs(600);
    r.check(4, "Monte Carlo calibration", ok, format!("type-I error LRT {a:.3}, pseudo-LRT {b:.3} in {elapsed:.1?}"));
}

fn c5_gps_recovery(r: &mut Report) {
    let cells = mixture_cells(5, 5000, &GPS_TRUTH);
    let fit = fit_gps_cells(&cells).unwrap();
    let single = fit_single_gamma_cells(&cells).unwrap();
    let MixturePrior::GammaMixture { components } = &fit.prior else { unreachable!() };
    let null = components.iter().min_by(|x, y| x.mean().total_cmp(&y.mean())).unwrap();
    let ok = (null.weight - 0.9).abs() <= 0.05 && fit.fit.log_likelihood >= single.fit.log_likelihood;
    r.check(
        5,
        "GPS recovery",
        ok,
        format!("ω̂ {:.4}, log-lik {:.2} vs single gamma {:.2}", null.weight, fit.fit.log_likelihood, single.fit.log_likelihood),
    );
}

fn max_decrease(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

fn planted_cells(t: u64) -> Vec<CellObs> {
    let sc = planted_scenario();
    let table = gen_poisson_table(&sc, t).unwrap();
    let e = expected_baseline(&table).unwrap();
    pvkit::ebayes::cells_from_table(&table, &e).unwrap()
}

fn c6_monotonicity(r: &mut Report) {
    let fixtures = [
        ("two-gamma", mixture_cells(61, 1500, &GPS_TRUTH)),
        ("three-gamma", mixture_cells(62, 1500, &THREE_TRUTH)),
        ("planted", planted_cells(0)),
    ];
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (name, cells) in &fixtures {
        let support = select_grid_cells(cells, 120).unwrap();
        let traces = [
            ("gps", fit_gps_cells(cells).unwrap().fit.trace),
            ("km", fit_km_cells(cells, &support).unwrap().fit.trace),
            ("general-gamma", fit_general_gamma_cells(cells, &GeneralGammaOptions::default()).unwrap().fit.trace),
            ("efron", fit_efron_cells(cells, &support, &EfronOptions::default()).unwrap().fit.trace),
        ];
        for (m, tr) in &traces {
            let d = max_decrease(tr);
            worst = worst.max(d);
            if tr.len() < 2 {
                lines.push(format!("{name}/{m} has a trace of length {}", tr.len()));
                worst = f64::INFINITY;
            }
        }
    }
    let ok = worst <= 1e-8;
    let mut detail = format!("largest decrease {worst:.2e} over 4 fitters × 3 fixtures");
    if !lines.is_empty() {
        detail += &format!(" ({})", lines.join("; "));
    }
    r.check(6, "EM/ECM monotonicity", ok, detail);
}

/// Posterior of `λ` by numerical integration over `u = ln λ`.
struct Quadrature {
    log_f: Box<dyn Fn(f64) -> f64>,
    shift: f64,
    lo: f64,
    hi: f64,
    total: f64,
}

impl Quadrature {
    fn new(components: &[GammaComponent], n: u64, e: f64) -> Self {
        let comps = components.to_vec();
        let nf = n as f64;
        let log_f = move |u: f64| {
            let lambda = u.exp();
            let terms: Vec<f64> = comps
                .iter()
                .map(|c| c.weight.ln() + c.shape * c.rate.ln() - ln_gamma(c.shape) + c.shape * u - c.rate * lambda)
                .collect();
            let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let prior = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
            prior + nf * (u + e.ln()) - lambda * e
        };
        let grid: Vec<f64> = (0..=12_000).map(|k| -50.0 + k as f64 * 0.005).collect();
        let vals: Vec<f64> = grid.iter().map(|&u| log_f(u)).collect();
        let shift = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let keep: Vec<usize> = (0..grid.len()).filter(|&k| vals[k] > shift - 70.0).collect();
        let lo = grid[keep[0].saturating_sub(1)];
        let hi = grid[(keep[keep.len() - 1] + 1).min(grid.len() - 1)];
        let mut q = Self {
            log_f: Box::new(log_f),
            shift,
            lo,
            hi,
            total: 0.0,
        };
        q.total = q.integral(lo, hi);
        q
    }

    fn f(&self, u: f64) -> f64 {
        ((self.log_f)(u) - self.shift).exp()
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        // Split into pieces so the adaptive rule sees the peak.
        let pieces = 64;
        let h = (b - a) / pieces as f64;
        (0..pieces)
            .map(|k| {
                let (x, y) = (a + k as f64 * h, a + (k + 1) as f64 * h);
                let m = 0.5 * (x + y);
                let (fx, fm, fy) = (self.f(x), self.f(m), self.f(y));
                self.simpson(x, y, fx, fm, fy, (y - x) / 6.0 * (fx + 4.0 * fm + fy), 1e-15, 40)
            })
            .sum()
    }

    #[allow(clippy::too_many_arguments)]
    fn simpson(&self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (self.f(lm), self.f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        self.simpson(a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + self.simpson(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }

    fn cdf(&self, lambda: f64) -> f64 {
        self.integral(self.lo, lambda.ln().clamp(self.lo, self.hi)) / self.total
    }

    fn quantile(&self, p: f64) -> f64 {
        let (mut a, mut b) = (self.lo, self.hi);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.cdf(m.exp()) < p {
                a = m;
            } else {
                b = m;
            }
        }
        (0.5 * (a + b)).exp()
    }

    fn upper_tail(&self, lambda: f64) -> f64 {
        self.integral(lambda.ln().clamp(self.lo, self.hi), self.hi) / self.total
    }
}

fn c7_posterior_oracle(r: &mut Report) {
    let mut g = stream(7, &[]);
    let mut worst: f64 = 0.0;
    let mut worst_case = String::new();
    for _ in 0..50 {
        let k = g.random_range(1..=3);
        let mut comps: Vec<GammaComponent> = (0..k)
            .map(|_| GammaComponent {
                shape: 10f64.powf(g.random_range(-0.5..1.5)),
                rate: 10f64.powf(g.random_range(-0.5..1.5)),
                weight: g.random_range(0.05..1.0),
            })
            .collect();
        let s: f64 = comps.iter().map(|c| c.weight).sum();
        comps.iter_mut().for_each(|c| c.weight /= s);
        let n = g.random_range(0..60u64);
        let e = 10f64.powf(g.random_range(-1.3..1.8));
        let post = posterior_cell(&MixturePrior::gamma(comps.clone()), n, e, DEFAULT_EPSILON);
        let q = Quadrature::new(&comps, n, e);
        let pairs = [
            ("median", post.median, q.quantile(0.5)),
            ("q05", post.q05, q.quantile(0.05)),
            ("q95", post.q95, q.quantile(0.95)),
            ("prob_signal", post.prob_signal, q.upper_tail(1.0 + DEFAULT_EPSILON)),
        ];
        for (name, got, want) in pairs {
            // Tail probabilities under 1e-8 are held to an absolute 1e-12.
            let scale = if name == "prob_signal" { want.max(1e-8) } else { want };
            let err = (got - want).abs() / scale;
            if err > worst {
                worst = err;
                worst_case = format!("{name} at N={n}, E={e:.3}: {got:.8e} vs {want:.8e}");
            }
        }
    }
    r.check(7, "posterior oracle equivalence", worst <= 1e-4, format!("worst relative error {worst:.2e} ({worst_case})"));
}

fn c8_zip_recovery(r: &mut Report) {
    let mut sc = SimScenario::uniform(100, 20, 0, 0);
    sc.row_marginals = (0..100).map(|i| 1.0 + (i % 10) as f64).collect();
    sc.col_totals = (0..20).map(|j| 300 + 50 * j as u64).collect();
    sc.p0 = 0.3;
    let t = gen_poisson_table(&sc, 0).unwrap();
    let cols: Vec<usize> = (0..20).collect();
    let fit = lrt::fit_zip_null(&t, &sc.baseline(), &cols).unwrap();
    r.check(8, "ZIP profile recovery", (fit.p0_hat - 0.3).abs() <= 0.03, format!("p0_hat {:.4} over 2000 cells", fit.p0_hat));
}

fn run_analyze(table: &Path, out: &Path, method: &str, threads: &str, extra: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_pvkit"))
        .args(["--threads", threads, "analyze", "--table"])
        .arg(table)
        .args(["--method", method, "--seed", "2024", "--out-dir"])
        .arg(out)
        .args(extra)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn result_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn c9_determinism(r: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let sc = planted_scenario();
    let table = gen_poisson_table(&sc, 1).unwrap();
    let path = dir.path().join("table.csv");
    pvkit::io::write_table(&table, fs::File::create(&path).unwrap()).unwrap();
    let methods: [(&str, &[&str]); 8] = [
        ("prr", &[]),
        ("bcpnn", &[]),
        ("lrt", &["--reps", "499"]),
        ("ext-lrt", &["--reps", "499"]),
        ("pseudo-lrt", &["--reps", "499", "--model", "zip"]),
        ("gps", &[]),
        ("general-gamma", &[]),
        ("km", &[]),
    ];
    let mut bad = Vec::new();
    let mut compared = 0;
    for (method, extra) in methods {
        let runs: Vec<_> = [("1", "a"), ("1", "b"), ("8", "c")]
            .iter()
            .map(|(threads, tag)| {
                let out = dir.path().join(format!("{method}-{tag}"));
                let ok = run_analyze(&path, &out, method, threads, extra);
                (ok, if ok { result_files(&out) } else { Vec::new() })
            })
            .collect();
        if runs.iter().any(|(ok, _)| !ok) {
            bad.push(format!("{method} failed to run"));
            continue;
        }
        if runs[0].1 != runs[1].1 || runs[0].1 != runs[2].1 {
            bad.push(method.to_string());
        }
        compared += runs[0].1.len();
    }
    let detail = if bad.is_empty() {
        format!("{compared} result files identical across repeated runs and --threads 1/8")
    } else {
        format!("differences in {}", bad.join(", "))
    };
    r.check(9, "determinism", bad.is_empty(), detail);
}

fn planted_scenario() -> SimScenario {
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/planted.json")).unwrap();
    SimScenario::from_json(&text).unwrap()
}

fn c10_decision_rules(r: &mut Report) {
    let sc = planted_scenario();
    let truth = sc.truth();
    let (rows, cols) = (sc.rows, sc.cols);
    let mask = Grid::from_fn(rows, cols, |i, j| Some(i) != sc.reference_row && Some(j) != sc.reference_col);
    let drugs: Vec<usize> = (0..cols).filter(|&j| Some(j) != sc.reference_col).collect();
    let names = ["GPS eb05>2", "general-gamma prob>0.95", "LRT p<0.05", "pseudo-LRT p<0.05"];
    let mut pooled = [MetricReport::default(); 4];
    for t in 0..3u64 {
        let table = gen_poisson_table(&sc, t).unwrap();
        let e = expected_baseline(&table).unwrap();
        let cells = pvkit::ebayes::cells_from_table(&table, &e).unwrap();
        let gps = fit_gps_cells(&cells).unwrap();
        let gg = fit_general_gamma_cells(&cells, &GeneralGammaOptions::default()).unwrap();
        let opts = McOptions { reps: 999, seed: 500 + t, ..Default::default() };
        let lrt_cells = lrt::lrt_analysis(&table, &drugs, &opts).unwrap().cell_pvalues;
        let pseudo_cells = lrt::pseudo_lrt(&table, &e, &drugs, NullModel::Poisson, &opts).unwrap().cell_pvalues;
        let by_p = |p: &Grid<Option<f64>>| p.map(|p| p.is_some_and(|p| p < 0.05));
        let decisions = [
            eb_signal_table(&gps.prior, &table, &e, EbRule::Eb05Above(2.0), DEFAULT_EPSILON).unwrap().decisions,
            eb_signal_table(&gg.prior, &table, &e, EbRule::ProbAbove(0.95), DEFAULT_EPSILON).unwrap().decisions,
            by_p(&lrt_cells),
            by_p(&pseudo_cells),
        ];
        for (acc, d) in pooled.iter_mut().zip(&decisions) {
            *acc = acc.merge(&score_masked(d, &truth, Some(&mask)).unwrap());
        }
    }
    let ok = pooled.iter().all(|m| m.sensitivity >= 0.8 && m.fdr <= 0.1);
    let detail = names
        .iter()
        .zip(&pooled)
        .map(|(n, m)| format!("{n}: sens {:.3} FDR {:.3}", m.sensitivity, m.fdr))
        .collect::<Vec<_>>()
        .join("; ");
    r.check(10, "decision rules on planted truth", ok, detail);
}

fn main() {
    let mut r = Report { failed: 0 };
    c1_shrinkage(&mut r);
    c2_observed_over_expected(&mut r);
    c3_independence(&mut r);
    c4_calibration(&mut r);
    c5_gps_recovery(&mut r);
    c6_monotonicity(&mut r);
    c7_posterior_oracle(&mut r);
    c8_zip_recovery(&mut r);
    c9_determinism(&mut r);
    c10_decision_rules(&mut r);
    println!("{} of 10 criteria passed", 10 - r.failed);
    if r.failed > 0 {
        std::process::exit(1);
    }
}
