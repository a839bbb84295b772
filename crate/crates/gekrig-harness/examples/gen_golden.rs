fn main() {
    let mk = |model: &str, h: usize, m: usize, n: usize, re: f64, secs: f64| gekrig_harness::SummaryRow {
        function: "y1:10".into(),
        d: 10,
        model: model.into(),
        h, m, n,
        trials_ok: 10,
        trials_failed: 0,
        mean_re: re,
        mean_fit_seconds: secs,
    };
    let rows = vec![
        mk("kriging", 0, 0, 20, 0.2976, 0.15),
        mk("kriging", 0, 0, 100, 0.0092, 18.57),
        mk("kpls", 3, 0, 20, 0.2563, 0.02),
        mk("kpls", 3, 0, 100, 0.1043, 0.07),
        mk("gekpls", 1, 2, 10, 0.1556, 0.03),
        mk("gekpls", 1, 2, 50, 0.0011, 0.10),
    ];
    print!("{}", gekrig_harness::emit_plot(&rows));
}
