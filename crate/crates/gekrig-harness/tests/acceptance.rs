//! Acceptance suite: reproduces the published benchmark rows at desk scale
//! and runs the cross-cutting property checks, one criterion per test.
//!
//! Every test prints a single `[criterion N] PASS ...` line (visible with
//! `cargo test --test acceptance -- --nocapture`). Runs are fully seeded,
//! so the asserted values are reproducible on a given platform.

use std::sync::Mutex;

use gekrig::benchmarks::{BenchmarkFunction, BenchmarkId};
use gekrig::doe::{lhs, Bounds, Criterion};
use gekrig::kernels::{
    correlate, correlate_grad_blocks, GradBlockMode, KernelSpec,
};
use gekrig::likelihood::LikelihoodContext;
use gekrig::models::{
    fit_gek_direct, fit_gek_indirect, fit_gekpls, fit_kpls, fit_kplsk, fit_kriging,
    top_m_directions, FittedSurrogate, GeKplsConfig, ModelKind, TrainingData,
};
use gekrig::pls::fit_pls;
use gekrig_harness::{run_experiment, summarize, ExperimentConfig, SummaryRow};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria run one at a time; each parallelizes its own trials internally.
static GATE: Mutex<()> = Mutex::new(());

const BASE_SEED: u64 = 2024;

fn lock() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

/// Within a factor of four of the published value.
fn within_x4(measured: f64, paper: f64) -> bool {
    measured >= paper / 4.0 && measured <= paper * 4.0
}

fn mean_re(rows: &[SummaryRow], model: &str, m: usize) -> f64 {
    rows.iter()
        .find(|r| r.model == model && r.m == m)
        .map(|r| r.mean_re)
        .expect("summary row present")
}

fn run_cells(cells: Vec<ExperimentConfig>) -> Vec<SummaryRow> {
    let mut records = Vec::new();
    for cfg in &cells {
        records.extend(run_experiment(cfg).expect("experiment runs"));
    }
    let rows = summarize(&records);
    for r in &rows {
        assert_eq!(r.trials_failed, 0, "failed trials in {r:?}");
    }
    rows
}

#[test]
fn criterion_1_table2_d10_reproduction() {
    let _g = lock();
    let started = std::time::Instant::now();
    let rows = run_cells(vec![
        ExperimentConfig::new("y1:10", "kriging", 100).with_seed(BASE_SEED),
        ExperimentConfig::new("y1:10", "kpls", 100).with_h(3).with_seed(BASE_SEED),
        ExperimentConfig::new("y1:10", "gekpls", 100)
            .with_h(1)
            .with_m(2)
            .with_step(1e-3)
            .with_seed(BASE_SEED),
    ]);
    let kriging = mean_re(&rows, "kriging", 0);
    let kpls = mean_re(&rows, "kpls", 0);
    let gekpls2 = mean_re(&rows, "gekpls", 2);

    let ok = within_x4(kriging, 0.0092)
        && within_x4(kpls, 0.1043)
        && within_x4(gekpls2, 0.0011)
        && gekpls2 < kriging
        && kriging < kpls;
    println!(
        "[criterion 1] {} — y1 d=10 mean RE over 10 trials: kriging {kriging:.5} (paper 0.0092), \
         KPLS {kpls:.5} (paper 0.1043), GE-KPLS2 {gekpls2:.5} (paper 0.0011); ordering \
         GE-KPLS2 < kriging < KPLS; {:.0}s",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(ok);
}

#[test]
fn criterion_2_table2_d100_ordering() {
    let _g = lock();
    let started = std::time::Instant::now();
    let rows = run_cells(vec![
        ExperimentConfig::new("y1:100", "kriging", 200).with_seed(BASE_SEED),
        ExperimentConfig::new("y1:100", "gekpls", 200).with_h(1).with_m(1).with_seed(BASE_SEED),
        ExperimentConfig::new("y1:100", "gekpls", 200).with_h(1).with_m(5).with_seed(BASE_SEED),
    ]);
    let kriging = mean_re(&rows, "kriging", 0);
    let gekpls1 = mean_re(&rows, "gekpls", 1);
    let gekpls5 = mean_re(&rows, "gekpls", 5);

    let ok = within_x4(gekpls5, 0.0194)
        && within_x4(gekpls1, 0.0454)
        && within_x4(kriging, 0.0805)
        && gekpls5 < gekpls1
        && gekpls1 < kriging;
    println!(
        "[criterion 2] {} — y1 d=100 mean RE: GE-KPLS5 {gekpls5:.5} (paper 0.0194) < \
         GE-KPLS1 {gekpls1:.5} (paper 0.0454) < kriging {kriging:.5} (paper 0.0805); {:.0}s",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(ok);
}

#[test]
fn criterion_3_table3_engineering_spot_checks() {
    let _g = lock();
    let started = std::time::Instant::now();
    let rows = run_cells(vec![
        ExperimentConfig::new("p4", "kriging", 80).with_seed(BASE_SEED),
        ExperimentConfig::new("p4", "gekpls", 80).with_h(1).with_m(4).with_seed(BASE_SEED),
        ExperimentConfig::new("p5", "kriging", 80).with_seed(BASE_SEED),
        ExperimentConfig::new("p5", "gekpls", 80).with_h(1).with_m(5).with_seed(BASE_SEED),
    ]);
    let p4_k: f64 = rows
        .iter()
        .find(|r| r.function == "p4" && r.model == "kriging")
        .unwrap()
        .mean_re;
    let p4_g = rows
        .iter()
        .find(|r| r.function == "p4" && r.model == "gekpls")
        .unwrap()
        .mean_re;
    let p5_k = rows
        .iter()
        .find(|r| r.function == "p5" && r.model == "kriging")
        .unwrap()
        .mean_re;
    let p5_g = rows
        .iter()
        .find(|r| r.function == "p5" && r.model == "gekpls")
        .unwrap()
        .mean_re;

    let ok = within_x4(p4_g, 0.0017)
        && within_x4(p4_k, 0.0037)
        && p4_g <= p4_k
        && within_x4(p5_g, 0.3165)
        && within_x4(p5_k, 0.4050)
        && p5_g <= p5_k;
    println!(
        "[criterion 3] {} — P4: GE-KPLS4 {p4_g:.5} ≤ kriging {p4_k:.5} (paper 0.0017 vs 0.0037); \
         P5: GE-KPLS5 {p5_g:.5} ≤ kriging {p5_k:.5} (paper 0.3165 vs 0.4050); {:.0}s",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(ok);
}

#[test]
fn criterion_4_gekpls_much_faster_than_indirect_gek() {
    let _g = lock();
    let started = std::time::Instant::now();
    // Absolute wall-clock claims in the reference are hardware-bound; the
    // substituted property is the relative fit-time gap on one machine.
    let rows = run_cells(vec![
        ExperimentConfig::new("y1:20", "gekpls", 40)
            .with_h(1)
            .with_m(3)
            .with_trials(1)
            .with_n_v(1000)
            .with_seed(BASE_SEED),
        ExperimentConfig::new("y1:20", "gek-indirect", 40)
            .with_trials(1)
            .with_n_v(1000)
            .with_seed(BASE_SEED),
    ]);
    let t_gekpls = rows
        .iter()
        .find(|r| r.model == "gekpls")
        .unwrap()
        .mean_fit_seconds;
    let t_gek = rows
        .iter()
        .find(|r| r.model == "gek-indirect")
        .unwrap()
        .mean_fit_seconds;
    let ratio = t_gekpls / t_gek;
    let ok = ratio <= 0.2;
    println!(
        "[criterion 4] {} — y1 d=20 n=40/20: GE-KPLS3 fit {t_gekpls:.3}s vs indirect GEK \
         {t_gek:.3}s, ratio {ratio:.4} ≤ 0.2; {:.0}s",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(ok);
}

// --- criterion 5: property suite -------------------------------------------

fn robot_arm_data(n: usize, seed: u64) -> TrainingData<f64> {
    let f = BenchmarkFunction::<f64>::engineering(BenchmarkId::P5).unwrap();
    let plan = lhs(n, &f.bounds, Criterion::Maximin, seed).unwrap();
    let y = Array1::from_shape_fn(n, |i| f.eval(&plan.points.row(i).to_vec()).unwrap());
    let mut dy = Array2::zeros((n, f.d));
    for i in 0..n {
        let g = f.grad(&plan.points.row(i).to_vec()).unwrap();
        for j in 0..f.d {
            dy[[i, j]] = g[j];
        }
    }
    TrainingData::with_gradients(plan.points.clone(), y, dy, f.bounds.clone()).unwrap()
}

fn interpolation_defect(model: &FittedSurrogate<f64>, value_rows: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..value_rows {
        let x: Vec<f64> = model
            .train_points
            .row(i)
            .iter()
            .enumerate()
            .map(|(j, u)| model.bounds.lower[j] + u * model.bounds.range(j))
            .collect();
        let p = model.predict(&x).unwrap();
        worst = worst.max((p - model.train_values[i]).abs());
    }
    worst
}

fn check_interpolation() -> String {
    let data = robot_arm_data(10, 47);
    let n = data.n();
    let mean = data.y.sum() / n as f64;
    let std = (data.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let tol = 1e-6 * (1.0 + std);

    let value_only =
        TrainingData::new(data.x.clone(), data.y.clone(), data.bounds.clone()).unwrap();
    let models: Vec<(&str, FittedSurrogate<f64>, usize)> = vec![
        ("kriging", fit_kriging(&value_only, 1).unwrap(), 10),
        ("kpls", fit_kpls(&data, 2, 1).unwrap(), 10),
        ("kplsk", fit_kplsk(&data, 2, 1).unwrap(), 10),
        ("gek-indirect", fit_gek_indirect(&data, 1e-4, 1).unwrap(), 90),
        ("gek-direct", fit_gek_direct(&data, 1).unwrap(), 10),
        (
            "gekpls",
            fit_gekpls(&data, &GeKplsConfig::new(1, 2, 1e-4), 1).unwrap(),
            30,
        ),
    ];
    let mut worst_all = 0.0f64;
    for (name, model, rows) in &models {
        let rows = match model.kind {
            ModelKind::GekDirect => data.n(),
            _ => *rows.min(&model.train_points.nrows()),
        };
        let defect = interpolation_defect(model, rows);
        assert!(
            defect <= tol,
            "interpolation: {name} defect {defect:.3e} > tol {tol:.3e}"
        );
        worst_all = worst_all.max(defect);
    }
    format!("interpolation worst {worst_all:.2e} ≤ {tol:.2e}")
}

fn check_kernel_equivalence() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = 2 + (rng.random_range(0..4usize));
        let h = 1 + (rng.random_range(0..2usize)).min(d - 1);
        let wstar = Array2::from_shape_fn((d, h), |_| rng.random_range(-1.0..1.0));
        let theta: Vec<f64> = (0..h).map(|_| rng.random_range(0.01..5.0)).collect();
        let spec = KernelSpec::kpls(theta, wstar);
        let eta = spec.effective_full_theta();
        let plain = KernelSpec::sq_exp(eta);
        let x = Array1::from_shape_fn(d, |_| rng.random_range(0.0..1.0));
        let y = Array1::from_shape_fn(d, |_| rng.random_range(0.0..1.0));
        let a = correlate(&spec, &x.view(), &y.view()).unwrap();
        let b = correlate(&plain, &x.view(), &y.view()).unwrap();
        worst = worst.max((a - b).abs());
    }
    assert!(worst <= 1e-12, "kernel equivalence worst {worst:.3e}");
    format!("kernel-equivalence worst {worst:.1e} ≤ 1e-12")
}

fn check_gek_blocks_vs_fd() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(502);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = 1 + rng.random_range(0..3usize);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
        let spec = KernelSpec::sq_exp(theta);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let xv = Array1::from_vec(x.clone());
        let yv = Array1::from_vec(y.clone());
        let (di, dj, dd) =
            correlate_grad_blocks(&spec, &xv.view(), &yv.view(), GradBlockMode::Analytic).unwrap();
        let eval = |xs: &[f64], ys: &[f64]| {
            correlate(
                &spec,
                &Array1::from_vec(xs.to_vec()).view(),
                &Array1::from_vec(ys.to_vec()).view(),
            )
            .unwrap()
        };
        for k in 0..d {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd_i = (eval(&xp, &y) - eval(&xm, &y)) / (2.0 * h);
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += h;
            ym[k] -= h;
            let fd_j = (eval(&x, &yp) - eval(&x, &ym)) / (2.0 * h);
            worst = worst.max((di[k] - fd_i).abs() / fd_i.abs().max(1e-6));
            worst = worst.max((dj[k] - fd_j).abs() / fd_j.abs().max(1e-6));
            for l in 0..d {
                let hh = 1e-5;
                let e = |a: f64, b: f64| {
                    let mut xs = x.clone();
                    let mut ys = y.clone();
                    xs[k] += a;
                    ys[l] += b;
                    eval(&xs, &ys)
                };
                let fd2 =
                    (e(hh, hh) - e(hh, -hh) - e(-hh, hh) + e(-hh, -hh)) / (4.0 * hh * hh);
                worst = worst.max((dd[[k, l]] - fd2).abs() / fd2.abs().max(1e-2));
            }
        }
    }
    assert!(worst <= 1e-5, "grad blocks vs FD worst {worst:.3e}");
    format!("gek-blocks/FD worst {worst:.1e} ≤ 1e-5")
}

fn check_likelihood_gradient() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(503);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let pts = Array2::from_shape_fn((5, 2), |_| rng.random_range(0.0..1.0));
        let y = Array1::from_shape_fn(5, |i| {
            let r = pts.row(i);
            (3.0f64 * r[0]).sin() + r[1] * r[1] + rng.random_range(-0.01..0.01)
        });
        let ctx =
            LikelihoodContext::new(KernelSpec::sq_exp(vec![1.0, 1.0]), &pts.view(), y).unwrap();
        let theta: [f64; 2] = [rng.random_range(0.3..5.0), rng.random_range(0.3..5.0)];
        let grad = ctx.concentrated_ll_grad(&theta).unwrap();
        for k in 0..2 {
            let h = 1e-6 * (1.0 + theta[k]);
            let mut tp = theta;
            let mut tm = theta;
            tp[k] += h;
            tm[k] -= h;
            let fd = (ctx.concentrated_ll(&tp).unwrap() - ctx.concentrated_ll(&tm).unwrap())
                / (2.0 * h);
            worst = worst.max((grad[k] - fd).abs() / fd.abs().max(1e-6));
        }
    }
    assert!(worst <= 1e-5, "likelihood gradient vs FD worst {worst:.3e}");
    format!("cll-grad/FD worst {worst:.1e} ≤ 1e-5")
}

fn check_pls_properties() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(504);
    let mut worst_orth: f64 = 0.0;
    let mut worst_ols: f64 = 0.0;
    for _ in 0..10 {
        // orthogonality on random 12×4 data with 3 components
        let x = Array2::from_shape_fn((12, 4), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(12, |i| x[[i, 0]] * 2.0 - x[[i, 2]] + rng.random_range(-0.1..0.1));
        let pls = fit_pls(&x.view(), &y.view(), 3).unwrap();
        for a in 0..3 {
            for b in a + 1..3 {
                let ta = pls.scores.column(a);
                let tb = pls.scores.column(b);
                let dot: f64 = ta.iter().zip(tb.iter()).map(|(u, v)| u * v).sum();
                let na = ta.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nb = tb.iter().map(|v| v * v).sum::<f64>().sqrt();
                worst_orth = worst_orth.max(dot.abs() / (na * nb));
            }
        }

        // full-component PLS equals OLS: 5 features, 9 samples, h = d = 5
        let x5 = Array2::from_shape_fn((9, 5), |_| rng.random_range(-1.0..1.0));
        let y5 = Array1::from_shape_fn(9, |i| {
            let r = x5.row(i);
            r[0] - 0.5 * r[3] + 0.25 * r[4] + rng.random_range(-0.05..0.05)
        });
        let pls5 = fit_pls(&x5.view(), &y5.view(), 5).unwrap();
        let (n, d) = (9, 5);
        let xm: Array1<f64> = (0..d).map(|j| x5.column(j).sum() / n as f64).collect();
        let ym = y5.sum() / n as f64;
        let mut xc = x5.clone();
        for mut row in xc.rows_mut() {
            for j in 0..d {
                row[j] -= xm[j];
            }
        }
        let yc: Array1<f64> = y5.iter().map(|v| v - ym).collect();
        let xtx = xc.t().dot(&xc);
        let xty = xc.t().dot(&yc);
        let (b_ols, _) = gekrig::linalg::solve_small(&xtx.view(), &xty.view()).unwrap();
        for i in 0..n {
            let pred_pls = pls5.predict_inner(&x5.row(i));
            let pred_ols = ym + xc.row(i).dot(&b_ols);
            worst_ols = worst_ols.max((pred_pls - pred_ols).abs() / (1.0 + pred_ols.abs()));
        }
    }
    assert!(worst_orth <= 1e-8, "score orthogonality worst {worst_orth:.3e}");
    assert!(worst_ols <= 1e-8, "PLS(h=d) vs OLS worst {worst_ols:.3e}");
    format!("pls-orth {worst_orth:.1e} ≤ 1e-8, pls/ols {worst_ols:.1e} ≤ 1e-8")
}

fn check_lhs_stratification() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for trial in 0..100 {
        let n = rng.random_range(2..40usize);
        let d = rng.random_range(1..8usize);
        let seed: u64 = rng.random();
        let crit = if trial % 2 == 0 { Criterion::Maximin } else { Criterion::Random };
        let bounds = Bounds::<f64>::unit(d);
        let plan = lhs(n, &bounds, crit, seed).unwrap();
        for j in 0..d {
            let mut strata: Vec<usize> = (0..n)
                .map(|i| ((plan.points[[i, j]] * n as f64).floor() as usize).min(n - 1))
                .collect();
            strata.sort_unstable();
            assert!(
                strata == (0..n).collect::<Vec<_>>(),
                "stratification broken: n={n} d={d} seed={seed} col {j}"
            );
        }
    }
    "lhs stratification 100/100".to_string()
}

fn check_gekpls_size_and_selection() -> String {
    // system size n(m+1)
    let data = robot_arm_data(8, 90);
    for m in [1usize, 3] {
        let model = fit_gekpls(&data, &GeKplsConfig::new(1, m, 1e-4), 7).unwrap();
        assert_eq!(model.train_points.nrows(), 8 * (m + 1), "rows for m={m}");
    }
    // top-m agrees with a brute-force full sort
    let mut rng = ChaCha8Rng::seed_from_u64(506);
    for _ in 0..100 {
        let d = rng.random_range(1..12usize);
        let m = rng.random_range(1..=d);
        let coeffs: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = top_m_directions(&coeffs, m);
        let mut brute: Vec<usize> = (0..d).collect();
        brute.sort_by(|&a, &b| {
            coeffs[b]
                .abs()
                .partial_cmp(&coeffs[a].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        brute.truncate(m);
        assert_eq!(got, brute);
    }
    "gekpls size n(m+1), top-m 100/100".to_string()
}

#[test]
fn criterion_5_property_suite() {
    let _g = lock();
    let started = std::time::Instant::now();
    let parts = [
        check_interpolation(),
        check_kernel_equivalence(),
        check_gek_blocks_vs_fd(),
        check_likelihood_gradient(),
        check_pls_properties(),
        check_lhs_stratification(),
        check_gekpls_size_and_selection(),
    ];
    println!(
        "[criterion 5] PASS — {}; {:.0}s",
        parts.join("; "),
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_6_kplsk_improvement_contract() {
    let _g = lock();
    let started = std::time::Instant::now();
    let instances: Vec<(&str, TrainingData<f64>, usize)> = {
        let mut v = Vec::new();
        for (id, n, h) in [("y1:10", 40usize, 3usize), ("y2:5", 30, 3), ("p4", 40, 3), ("p5", 40, 3)] {
            let f = BenchmarkFunction::<f64>::from_registry_id(id).unwrap();
            let plan = lhs(n, &f.bounds, Criterion::Maximin, 11).unwrap();
            let y = Array1::from_shape_fn(n, |i| f.eval(&plan.points.row(i).to_vec()).unwrap());
            let data = TrainingData::new(plan.points.clone(), y, f.bounds.clone()).unwrap();
            v.push((id, data, h));
        }
        v
    };
    let mut lines = Vec::new();
    for (id, data, h) in &instances {
        let model = fit_kplsk(data, *h, 13).unwrap();
        let stage1 = model.meta.stage1_cll.expect("stage-one value recorded");
        assert!(
            model.meta.cll >= stage1 - 1e-12,
            "{id}: stage-2 cll {} below stage-1 {}",
            model.meta.cll,
            stage1
        );
        lines.push(format!("{id}: {:.4} ≥ {:.4}", model.meta.cll, stage1));
    }
    println!(
        "[criterion 6] PASS — KPLSK stage-2 ≥ stage-1 concentrated log-likelihood on {}; {:.0}s",
        lines.join(", "),
        started.elapsed().as_secs_f64()
    );
}
