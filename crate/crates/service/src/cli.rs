//! `adaptest` command line: calibrate, simulate, serve, stats, session.
//!
//! Exit status: 0 success, 1 runtime error, 2 usage error.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use adaptest_core::calibration::{calibrate_with_concepts, pool_statistics, CalibrationConfig};
use adaptest_core::datastore::{ingest_log_file, load_pool, read_content, save_pool, write_atomic};
use adaptest_core::irt::item_information;
use adaptest_core::pool::CalibratedPool;
use adaptest_core::selector::SelectionPolicy;
use adaptest_core::session::{GradeOutcome, StoppingRule, TestSession};
use adaptest_core::simulator::{
    draw_examinees, generate_logs, generate_pool, run_jaccard_experiment, run_mse_experiment, run_se_experiment,
    run_variance_check, MseConfig, SeConfig, SimulationReport,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::api::{router, AppState};
use crate::config::{pool_name, ServiceConfig};
use crate::plot::{line_chart, Series};

pub type CliResult = Result<(), Box<dyn std::error::Error>>;

#[derive(Debug, Parser)]
#[command(name = "adaptest", version, about = "Adaptive testing with three-parameter IRT")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate a question pool from response logs.
    Calibrate(CalibrateArgs),
    /// Run a simulation experiment on a pool.
    Simulate(SimulateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Print pool statistics.
    Stats(StatsArgs),
    /// Grade an adaptive test interactively on the terminal.
    Session(SessionArgs),
    /// Write synthetic response logs (and the generating pool).
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Response logs: JSON lines, or CSV when the name ends in .csv.
    #[arg(long)]
    pub logs: PathBuf,
    /// Output pool file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub val_split: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Question text, JSON lines of {"question_id", "content"}.
    #[arg(long)]
    pub content: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Mse,
    Se,
    Variance,
    Jaccard,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Pool file, or `synthetic:N` for a generated N-item pool.
    #[arg(long)]
    pub pool: String,
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long, default_value_t = 100)]
    pub examinees: usize,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for CSV tables, report.json and SVG plots.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Random-selection baseline length (mse).
    #[arg(long, default_value_t = 100)]
    pub baseline: usize,
    /// Guess:slip conditions (se).
    #[arg(long, value_delimiter = ',', default_value = "0:0,0.1:0.3")]
    pub conditions: Vec<String>,
    /// True ability (variance).
    #[arg(long, default_value_t = 0.5)]
    pub theta0: f64,
    /// Test lengths (variance).
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,100")]
    pub t_values: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    pub replications: usize,
    /// Skip the SVG plot.
    #[arg(long)]
    pub no_plot: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Pool files, registered under their file stems.
    #[arg(long)]
    pub pool: Vec<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub pool: PathBuf,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub concept: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.35)]
    pub se_threshold: f64,
    #[arg(long, default_value_t = 5)]
    pub min_len: usize,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 200)]
    pub items: usize,
    #[arg(long, default_value_t = 1000)]
    pub examinees: usize,
    /// Questions answered per examinee; all when omitted.
    #[arg(long)]
    pub per_examinee: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output log file (.csv or .jsonl).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the generating pool here.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Parses `args` and runs the command, returning the exit status.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli.command, input, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(command: Command, input: &mut dyn BufRead, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Calibrate(a) => calibrate_cmd(&a, out),
        Command::Simulate(a) => simulate_cmd(&a, out),
        Command::Serve(a) => serve_cmd(&a, out),
        Command::Stats(a) => stats_cmd(&a, out),
        Command::Session(a) => session_cmd(&a, input, out),
        Command::Generate(a) => generate_cmd(&a, out),
    }
}

fn calibrate_cmd(a: &CalibrateArgs, out: &mut dyn Write) -> CliResult {
    let ingested = ingest_log_file(&a.logs)?;
    let m = &ingested.manifest;
    writeln!(
        out,
        "read {} records: {} examinees, {} questions, {} duplicates dropped",
        m.records_read, m.examinee_count, m.question_count, m.duplicates
    )?;
    let mut config = CalibrationConfig {
        validation_fraction: a.val_split,
        seed: a.seed,
        ..CalibrationConfig::default()
    };
    if let Some(e) = a.max_epochs {
        config.max_epochs = e;
    }
    let mut cal = calibrate_with_concepts(&ingested.logs, &ingested.concepts, &config)?;
    if let Some(path) = &a.content {
        let content = read_content(std::fs::File::open(path)?)?;
        cal.pool.content = content.into_iter().filter(|(q, _)| cal.pool.items.contains_key(q)).collect();
    }
    save_pool(&a.out, &cal.pool)?;
    let report = cal.pool.fit_report.as_ref().expect("calibration fills the fit report").render();
    write_atomic(&a.out.with_extension("report.txt"), report.as_bytes())?;
    out.write_all(report.as_bytes())?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(())
}

fn open_pool(spec: &str, seed: u64) -> Result<CalibratedPool, Box<dyn std::error::Error>> {
    match spec.strip_prefix("synthetic:") {
        Some(n) => Ok(generate_pool(n.parse().map_err(|_| format!("bad synthetic pool size {n:?}"))?, seed)),
        None => Ok(load_pool(Path::new(spec))?),
    }
}

fn parse_conditions(raw: &[String]) -> Result<Vec<(f64, f64)>, Box<dyn std::error::Error>> {
    raw.iter()
        .map(|c| {
            let (g, s) = c.split_once(':').ok_or_else(|| format!("condition {c:?} is not guess:slip"))?;
            Ok((g.trim().parse()?, s.trim().parse()?))
        })
        .collect()
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    write_atomic(path, &w.into_inner()?)?;
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(|x| x.to_string()).unwrap_or_default()
}

fn curve(values: &[f64]) -> Vec<(f64, f64)> {
    values.iter().enumerate().map(|(k, &v)| ((k + 1) as f64, v)).collect()
}

fn simulate_cmd(a: &SimulateArgs, out: &mut dyn Write) -> CliResult {
    let pool = open_pool(&a.pool, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    let report: SimulationReport = match a.experiment {
        Experiment::Mse => {
            let report = run_mse_experiment(
                &pool,
                &MseConfig {
                    n_examinees: a.examinees,
                    max_steps: a.max_len,
                    baseline_steps: a.baseline,
                    seed: a.seed,
                },
            )?;
            let mse = report.mse.as_ref().expect("mse experiment fills curves");
            let n = mse.fisher.len().max(mse.random.len());
            let rows: Vec<Vec<String>> = (0..n)
                .map(|k| vec![(k + 1).to_string(), cell(mse.fisher.get(k).copied()), cell(mse.random.get(k).copied())])
                .collect();
            write_csv(&a.out.join("mse.csv"), &["step".into(), "fisher".into(), "random".into()], &rows)?;
            let e = &mse.efficiency;
            writeln!(out, "random step-{} MSE: {:.5}", e.baseline_steps, e.baseline_mse)?;
            match (e.fisher_steps, e.ratio) {
                (Some(s), Some(r)) => writeln!(out, "fisher reaches it at step {s}; efficiency ratio {r:.3}")?,
                _ => writeln!(out, "fisher does not reach it within {} steps", mse.fisher.len())?,
            }
            if !a.no_plot {
                line_chart(
                    &a.out.join("mse.svg"),
                    "MSE of ability estimate",
                    "test length",
                    "MSE",
                    &[
                        Series { label: "Fisher", points: curve(&mse.fisher) },
                        Series { label: "Random", points: curve(&mse.random) },
                    ],
                )?;
            }
            report
        }
        Experiment::Se => {
            let conditions = parse_conditions(&a.conditions)?;
            let report = run_se_experiment(
                &pool,
                &conditions,
                &SeConfig {
                    n_examinees: a.examinees,
                    max_steps: a.max_len,
                    seed: a.seed,
                },
            )?;
            let mut header = vec!["step".to_owned()];
            header.extend(report.se.iter().map(|c| format!("g{}_s{}", c.guess, c.slip)));
            let rows: Vec<Vec<String>> = (0..a.max_len)
                .map(|k| {
                    let mut r = vec![(k + 1).to_string()];
                    r.extend(report.se.iter().map(|c| cell(c.mean_se.get(k).copied())));
                    r
                })
                .collect();
            write_csv(&a.out.join("se.csv"), &header, &rows)?;
            for c in &report.se {
                let last = c.mean_se.last().copied().unwrap_or(f64::NAN);
                writeln!(out, "guess {} slip {}: mean SE at step {} = {last:.4}", c.guess, c.slip, a.max_len)?;
            }
            if !a.no_plot {
                let labels: Vec<String> = report.se.iter().map(|c| format!("guess {} slip {}", c.guess, c.slip)).collect();
                let series: Vec<Series> = report
                    .se
                    .iter()
                    .zip(&labels)
                    .map(|(c, l)| Series { label: l, points: curve(&c.mean_se) })
                    .collect();
                line_chart(&a.out.join("se.svg"), "Standard error", "test length", "mean SE", &series)?;
            }
            report
        }
        Experiment::Variance => {
            let template = pool
                .items
                .values()
                .max_by(|x, y| item_information(x, a.theta0).total_cmp(&item_information(y, a.theta0)))
                .ok_or("pool is empty")?
                .clone();
            let rows = run_variance_check(&template, a.theta0, &a.t_values, a.replications, a.seed)?;
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.t.to_string(),
                        r.mean_theta_hat.to_string(),
                        r.empirical_variance.to_string(),
                        r.predicted_variance.to_string(),
                    ]
                })
                .collect();
            write_csv(
                &a.out.join("variance.csv"),
                &["t".into(), "mean_theta_hat".into(), "empirical_variance".into(), "predicted_variance".into()],
                &table,
            )?;
            writeln!(out, "item {} repeated, θ0 = {}", template.question_id, a.theta0)?;
            for r in &rows {
                writeln!(
                    out,
                    "t = {:>4}: empirical {:.5}, predicted {:.5}, ratio {:.3}",
                    r.t,
                    r.empirical_variance,
                    r.predicted_variance,
                    r.empirical_variance / r.predicted_variance
                )?;
            }
            SimulationReport {
                seed: a.seed,
                variance: rows,
                ..Default::default()
            }
        }
        Experiment::Jaccard => {
            let examinees = draw_examinees(a.examinees, 0.0, 0.0, a.seed);
            let report = run_jaccard_experiment(&pool, &examinees, a.max_len, a.seed)?;
            let m = report.jaccard.as_ref().expect("jaccard experiment fills the matrix");
            let mut header = vec![String::new()];
            header.extend(m.labels.iter().cloned());
            let rows: Vec<Vec<String>> = m
                .labels
                .iter()
                .zip(&m.values)
                .map(|(l, row)| std::iter::once(l.clone()).chain(row.iter().map(|v| v.to_string())).collect())
                .collect();
            write_csv(&a.out.join("jaccard.csv"), &header, &rows)?;
            writeln!(out, "mean pairwise Jaccard similarity: {:.4}", m.mean_off_diagonal)?;
            report
        }
    };
    write_atomic(&a.out.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    writeln!(out, "wrote results to {}", a.out.display())?;
    Ok(())
}

fn serve_cmd(a: &ServeArgs, out: &mut dyn Write) -> CliResult {
    let mut config = match &a.config {
        Some(path) => ServiceConfig::load(path)?,
        None => ServiceConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok())?;
    for path in &a.pool {
        let name = pool_name(path).ok_or_else(|| format!("cannot name pool {}", path.display()))?;
        config.pools.insert(name, path.clone());
    }
    if let Some(port) = a.port {
        config.port = port;
    }
    if config.pools.is_empty() {
        return Err("no pools configured; pass --pool or set pools in the config".into());
    }
    let mut registry = adaptest_core::PoolRegistry::new();
    for (name, path) in &config.pools {
        registry.insert(name.clone(), load_pool(path)?);
    }
    let port = config.port;
    let state = Arc::new(AppState::new(registry, config));
    let restored = state.restore_sessions()?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
        writeln!(
            out,
            "listening on {} with pools {:?}; {restored} sessions restored",
            listener.local_addr()?,
            state.registry().names().collect::<Vec<_>>()
        )?;
        out.flush()?;
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, Box<dyn std::error::Error>>(())
    })
}

fn stats_cmd(a: &StatsArgs, out: &mut dyn Write) -> CliResult {
    let pool = load_pool(&a.pool)?;
    let stats = pool_statistics(&pool).ok_or("pool is empty")?;
    let name = pool_name(&a.pool).unwrap_or_default();
    writeln!(out, "pool                 {name}")?;
    writeln!(out, "questions            {}", stats.question_count)?;
    writeln!(out, "human examinees      {}", pool.human_abilities.len())?;
    if let Some(r) = &pool.fit_report {
        writeln!(out, "response logs        {}", r.train_logs + r.validation_logs)?;
    }
    writeln!(out, "concepts             {}", stats.concept_counts.len())?;
    for (c, n) in &stats.concept_counts {
        writeln!(out, "  {c:<18} {n}")?;
    }
    writeln!(out)?;
    writeln!(out, "{:<6} {:>9} {:>9} {:>9}", "param", "min", "max", "mean")?;
    for (label, s) in [("alpha", stats.alpha), ("beta", stats.beta), ("c", stats.c)] {
        writeln!(out, "{label:<6} {:>9.4} {:>9.4} {:>9.4}", s.min, s.max, s.mean)?;
    }
    writeln!(out)?;
    let show = |id: &adaptest_core::QuestionId| {
        let it = &pool.items[id];
        format!("{id} (alpha {:.3}, beta {:.3}, c {:.3})", it.alpha, it.beta, it.c)
    };
    writeln!(out, "hardest              {}", show(&stats.hardest))?;
    writeln!(out, "easiest              {}", show(&stats.easiest))?;
    writeln!(out, "most discriminating  {}", show(&stats.most_discriminating))?;
    writeln!(out, "least discriminating {}", show(&stats.least_discriminating))?;
    writeln!(out, "most guessable       {}", show(&stats.most_guessable))?;
    let list = |ids: &[adaptest_core::QuestionId]| {
        if ids.is_empty() {
            "none".to_owned()
        } else {
            ids.iter().map(|q| q.as_str()).collect::<Vec<_>>().join(" ")
        }
    };
    writeln!(out, "guessable (c > 0.9)  {}", list(&stats.guessable))?;
    writeln!(out, "low confidence       {}", list(&stats.low_confidence))?;
    Ok(())
}

fn session_cmd(a: &SessionArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> CliResult {
    let pool = load_pool(&a.pool)?;
    let rule = StoppingRule {
        max_length: a.max_len,
        se_threshold: a.se_threshold,
        min_length: a.min_len,
    };
    let name = pool_name(&a.pool).unwrap_or_default();
    let (mut session, mut question) =
        TestSession::start("terminal", name, &pool, a.concept.clone(), SelectionPolicy::Fisher, rule)?;
    loop {
        let step = session.expected_step();
        let content = pool.content.get(&question).map_or("(no content)", String::as_str);
        writeln!(out, "\n[{step}] {question}: {content}")?;
        let correct = loop {
            write!(out, "correct? [y/n/q] ")?;
            out.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                return Err("input ended before the session finished".into());
            }
            match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" | "1" => break true,
                "n" | "no" | "0" => break false,
                "q" | "quit" => {
                    writeln!(out, "aborted after {} graded questions", step - 1)?;
                    return Ok(());
                }
                _ => writeln!(out, "please answer y, n or q")?,
            }
        };
        match session.submit_grade(&pool, correct)? {
            GradeOutcome::Next { question_id, estimate } => {
                writeln!(out, "theta {:.3}, se {:.3}", estimate.theta_hat, estimate.se)?;
                question = question_id;
            }
            GradeOutcome::Finished { reason, report, .. } => {
                writeln!(out, "\nstopped: {reason}\n")?;
                out.write_all(report.render().as_bytes())?;
                return Ok(());
            }
        }
    }
}

fn generate_cmd(a: &GenerateArgs, out: &mut dyn Write) -> CliResult {
    let pool = generate_pool(a.items, a.seed);
    let (logs, _) = generate_logs(&pool, a.examinees, a.per_examinee, a.seed.wrapping_add(1));
    let is_csv = a.out.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let bytes = if is_csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["examinee_id", "question_id", "correct"])?;
        for l in &logs {
            w.write_record([l.examinee_id.as_str(), l.question_id.as_str(), if l.correct { "1" } else { "0" }])?;
        }
        w.into_inner()?
    } else {
        let mut buf = Vec::new();
        for l in &logs {
            serde_json::to_writer(&mut buf, l)?;
            buf.push(b'\n');
        }
        buf
    };
    write_atomic(&a.out, &bytes)?;
    if let Some(path) = &a.truth {
        save_pool(path, &pool)?;
    }
    writeln!(out, "wrote {} logs for {} examinees to {}", logs.len(), a.examinees, a.out.display())?;
    Ok(())
}
