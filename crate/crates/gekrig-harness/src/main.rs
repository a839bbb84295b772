//! Command-line interface for fitting surrogates and reproducing the
//! benchmark studies.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use gekrig::benchmarks::BenchmarkFunction;
use gekrig::models::{FittedSurrogate, ModelKind};
use gekrig_harness::{
    config::{preset_configs, ExperimentConfig},
    emit_plot, read_summary_csv, run_experiment,
    runner::{fit_model, sample_training_data},
    summarize, with_pool, write_records_csv, write_summary_csv, ExperimentRecord,
};

#[derive(Parser)]
#[command(
    name = "gekrig",
    about = "Gradient-enhanced kriging surrogates: fit, predict and benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model on a benchmark function and write it as JSON.
    Fit {
        /// Function id: y1:<d>, y2:<d>, or p1..p8.
        #[arg(long)]
        function: String,
        /// Model: kriging, kpls, kplsk, gek-indirect, gek-direct, gekpls.
        #[arg(long)]
        model: String,
        /// Training samples (gradient models use this count as-is here).
        #[arg(long)]
        n: usize,
        /// Principal components for the projected kernels.
        #[arg(long)]
        h: Option<usize>,
        /// Extra points per sample for gekpls.
        #[arg(long)]
        m: Option<usize>,
        /// Taylor step as a fraction of each range.
        #[arg(long, default_value_t = gekrig::models::DEFAULT_FOTA_STEP)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output model JSON path.
        #[arg(long)]
        out: PathBuf,
        /// Optionally write the training design as CSV.
        #[arg(long)]
        dump_design: Option<PathBuf>,
    },
    /// Evaluate a saved model on points from a CSV file.
    Predict {
        /// Model JSON written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Input points: one comma-separated point per line, no header.
        #[arg(long)]
        points: PathBuf,
        /// Output CSV with a single `prediction` column.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark preset or a JSON config list; write records + summary.
    Bench {
        /// Shipped preset: study1, study2 or study3.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// JSON file with a list of experiment configs.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Keep only cells with d <= 20 and n <= 200.
        #[arg(long)]
        desk_scale: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Override the trial count of every cell.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the validation sample count of every cell.
        #[arg(long)]
        n_v: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep the Taylor step over a log grid for one configuration.
    SweepStep {
        #[arg(long)]
        function: String,
        #[arg(long, default_value = "gekpls")]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        h: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        /// Comma-separated steps; defaults to decades 1e-6..1e-2.
        #[arg(long)]
        steps: Option<String>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 5000)]
        n_v: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output records CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a summary CSV as an SVG trade-off plot.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Fit {
            function,
            model,
            n,
            h,
            m,
            step,
            seed,
            out,
            dump_design,
        } => cmd_fit(&function, &model, n, h, m, step, seed, &out, dump_design.as_deref()),
        Command::Predict { model, points, out } => cmd_predict(&model, &points, &out),
        Command::Bench {
            preset,
            config,
            desk_scale,
            out_dir,
            trials,
            n_v,
            seed,
        } => cmd_bench(preset.as_deref(), config.as_deref(), desk_scale, &out_dir, trials, n_v, seed),
        Command::SweepStep {
            function,
            model,
            n,
            h,
            m,
            steps,
            trials,
            n_v,
            seed,
            out,
        } => cmd_sweep(&function, &model, n, h, m, steps.as_deref(), trials, n_v, seed, &out),
        Command::Plot { summary, out } => {
            let rows = read_summary_csv(&summary)?;
            std::fs::write(&out, emit_plot(&rows))?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    function: &str,
    model: &str,
    n: usize,
    h: Option<usize>,
    m: Option<usize>,
    step: f64,
    seed: u64,
    out: &Path,
    dump_design: Option<&Path>,
) -> Result<()> {
    let f = BenchmarkFunction::<f64>::from_registry_id(function)?;
    let kind = ModelKind::parse(model)?;
    let cfg = ExperimentConfig::new(function, model, n);
    let h = h.unwrap_or(cfg.with_h(0).components().unwrap_or(1).max(1));
    let m = m.unwrap_or(1);
    let data = sample_training_data(&f, n, kind.uses_gradients(), seed)?;
    if let Some(path) = dump_design {
        let mut w = csv::Writer::from_path(path)?;
        for row in data.x.rows() {
            w.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        w.flush()?;
        eprintln!("wrote design {}", path.display());
    }
    let fitted = fit_model(kind, &data, h, m, step, seed)?;
    std::fs::write(out, fitted.to_json()?)?;
    eprintln!(
        "fitted {} on {} with n={} in {:.3}s (cll {:.4}, nugget {:.1e}); wrote {}",
        kind.name(),
        function,
        n,
        fitted.meta.fit_seconds,
        fitted.meta.cll,
        fitted.meta.nugget_used,
        out.display()
    );
    Ok(())
}

fn cmd_predict(model_path: &Path, points_path: &Path, out: &Path) -> Result<()> {
    let json = std::fs::read_to_string(model_path)
        .with_context(|| format!("reading {}", model_path.display()))?;
    let model = FittedSurrogate::<f64>::from_json(&json)?;
    let text = std::fs::read_to_string(points_path)
        .with_context(|| format!("reading {}", points_path.display()))?;
    let mut preds = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let x: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad point on line {}", lineno + 1))?;
        if x.len() != model.input_dim() {
            bail!(
                "point on line {} has {} coordinates, model takes {}",
                lineno + 1,
                x.len(),
                model.input_dim()
            );
        }
        preds.push(model.predict(&x)?);
    }
    let mut body = String::from("prediction\n");
    for p in &preds {
        body.push_str(&format!("{p}\n"));
    }
    std::fs::write(out, body)?;
    eprintln!("wrote {} predictions to {}", preds.len(), out.display());
    Ok(())
}

fn cmd_bench(
    preset: Option<&str>,
    config: Option<&Path>,
    desk_scale: bool,
    out_dir: &Path,
    trials: Option<usize>,
    n_v: Option<usize>,
    seed: u64,
) -> Result<()> {
    let mut configs = match (preset, config) {
        (Some(name), None) => preset_configs(name, desk_scale)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            let cfgs: Vec<ExperimentConfig> = serde_json::from_str(&text)?;
            cfgs
        }
        _ => bail!("pass exactly one of --preset or --config"),
    };
    for c in configs.iter_mut() {
        if let Some(t) = trials {
            c.trials = t;
        }
        if let Some(v) = n_v {
            c.n_v = v;
        }
        c.base_seed = c.base_seed.wrapping_add(seed);
    }
    std::fs::create_dir_all(out_dir)?;

    let started = Instant::now();
    let mut records: Vec<ExperimentRecord> = Vec::new();
    let total = configs.len();
    with_pool(|| -> Result<()> {
        for (i, cfg) in configs.iter().enumerate() {
            let cell_start = Instant::now();
            let rs = run_experiment(cfg)?;
            let ok = rs.iter().filter(|r| !r.failed()).count();
            eprintln!(
                "[{}/{}] {} {} n={} -> {}/{} trials ok in {:.1}s",
                i + 1,
                total,
                cfg.function,
                cfg.model,
                cfg.n,
                ok,
                rs.len(),
                cell_start.elapsed().as_secs_f64()
            );
            records.extend(rs);
        }
        Ok(())
    })?;

    let records_path = out_dir.join("records.csv");
    let summary_path = out_dir.join("summary.csv");
    write_records_csv(&records_path, &records)?;
    let summary = summarize(&records);
    if summary.iter().all(|r| r.trials_ok == 0) {
        eprintln!("warning: empty summary, every trial failed");
    }
    write_summary_csv(&summary_path, &summary)?;
    eprintln!(
        "finished {} cells in {:.1}s; wrote {} and {}",
        total,
        started.elapsed().as_secs_f64(),
        records_path.display(),
        summary_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    function: &str,
    model: &str,
    n: usize,
    h: Option<usize>,
    m: Option<usize>,
    steps: Option<&str>,
    trials: usize,
    n_v: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let steps: Vec<f64> = match steps {
        Some(list) => list
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .context("bad --steps list")?,
        None => vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
    };
    let sweep_start = Instant::now();
    let mut all = Vec::new();
    with_pool(|| -> Result<()> {
        for &step in &steps {
            let mut cfg = ExperimentConfig::new(function, model, n)
                .with_trials(trials)
                .with_n_v(n_v)
                .with_seed(seed)
                .with_step(step);
            cfg.h = h;
            cfg.m = m;
            let rs = run_experiment(&cfg)?;
            let mean_re = {
                let ok: Vec<&ExperimentRecord> = rs.iter().filter(|r| !r.failed()).collect();
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| r.re).sum::<f64>() / ok.len() as f64
                }
            };
            eprintln!("step {step:.1e}: mean RE {mean_re:.6}");
            all.extend(rs);
        }
        Ok(())
    })?;
    write_records_csv(out, &all)?;
    // the search cost is reported on its own, apart from the per-fit times
    eprintln!(
        "step sweep took {:.1}s total; per-fit times are in {}",
        sweep_start.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}
