use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gemlab::dist::{max_abs_diff, sharpen, softmax};
use gemlab::error::GemError;
use gemlab::flow::{flow_decompose, run_ce_iteration, run_gem_prototype, IterationConfig};
use gemlab::harness::config::ExperimentConfig;
use gemlab::harness::report::{build_report, metric_rows, metrics_csv_string, report, ReportKind};
use gemlab::harness::run::{load_records, run_experiment, RunOptions};
use gemlab::harness::svg::flow_diagram;
use gemlab::losses::{gem_flows, LossSpec};
use gemlab::metrics::{mean_conditional_entropy, perplexity};
use gemlab::models::{closed_form_equilibrium, fit_exact, FitConfig, OptimizerConfig, OptimizerState};
use gemlab::sequential::{read_corpus, reset_expand, distinct_contexts};
use gemlab::{ContextKey, LogitVector, ProbVector, RunRecord, TabularModel};

#[derive(Parser)]
#[command(name = "gemlab", version, about = "CE vs GEM training experiments on tabular models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Train on exact expectations instead of sampled batches.
    #[arg(long)]
    exact: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate a single grid cell.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Cell name; defaults to the first grid cell.
        #[arg(long)]
        cell: Option<String>,
    },
    /// Train and evaluate every grid cell.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Flow decomposition of one gradient plus the CE and GEM iterations.
    AnalyzeFlow {
        /// Comma-separated logits.
        #[arg(long, allow_hyphen_values = true)]
        logits: String,
        /// 0-based target token.
        #[arg(long)]
        target: usize,
        /// Loss spec as JSON, e.g. '{"kind":"gem","beta":0.7}'.
        #[arg(long, default_value = r#"{"kind":"ce"}"#)]
        loss: String,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Closed-form equilibrium of a distribution versus a trained model.
    Equilibrium {
        /// Comma-separated, strictly positive probabilities.
        #[arg(long)]
        p: String,
        #[arg(long)]
        beta: f64,
        /// Compare against this model's row instead of training one.
        #[arg(long, requires = "context")]
        model: Option<PathBuf>,
        /// Context of the row, e.g. "3,1"; "" is the empty context.
        #[arg(long)]
        context: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Exit with status 3 when the deviation exceeds the tolerance.
        #[arg(long)]
        check: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Perplexity and entropy of a saved model on a corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Context window; omit for full prefixes.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Tables and plots from a finished sweep directory.
    Report {
        /// Directory containing runs.jsonl.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "summary-csv")]
        kind: String,
        /// Where to write files; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
    Check(String),
}

impl From<GemError> for Failure {
    fn from(e: GemError) -> Self {
        match e {
            GemError::Config(msg) => Failure::Config(msg),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn parse_floats(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Failure::Config(format!("bad number {t:?}: {e}")))
        })
        .collect()
}

fn bad_arg(e: GemError) -> Failure {
    Failure::Config(e.to_string())
}

fn print_rows(rows: &[(String, String, f64)], format: Format) -> CliResult<()> {
    let rows: Vec<gemlab::harness::MetricRow> = rows
        .iter()
        .map(|(r, m, v)| gemlab::harness::MetricRow::new(r, m.clone(), *v))
        .collect();
    match format {
        Format::Csv => print!("{}", metrics_csv_string(&rows)?),
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows).expect("rows serialize")),
    }
    Ok(())
}

fn load_config(args: &RunArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(args: &RunArgs, cells: Option<Vec<String>>) -> CliResult<()> {
    let cfg = load_config(args)?;
    let opts = RunOptions {
        jobs: args.jobs,
        exact: args.exact,
        out_dir: Some(cfg.out_dir.clone()),
        cells,
    };
    let output = run_experiment(&cfg, &opts)?;
    let records: &[RunRecord] = &output.records;
    match args.format {
        Format::Csv => print!("{}", metrics_csv_string(&metric_rows(records))?),
        Format::Json => {
            for r in records {
                println!("{}", serde_json::to_string(r).expect("record serializes"));
            }
        }
    }
    if let Some(dir) = &output.dir {
        eprintln!("wrote {}", dir.display());
    }
    let failed: Vec<String> = records
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| format!("{}: {:?}", r.cell, r.status))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("failed cells: {}", failed.join("; "))))
    }
}

#[allow(clippy::too_many_arguments)]
fn analyze_flow(
    logits: &str,
    target: usize,
    loss: &str,
    eta: f64,
    max_steps: usize,
    svg: Option<&Path>,
    out: Option<&Path>,
    format: Format,
) -> CliResult<()> {
    let logits = LogitVector::new(parse_floats(logits)?).map_err(bad_arg)?;
    if target >= logits.len() {
        return Err(Failure::Config(format!(
            "target {target} out of range for {} logits",
            logits.len()
        )));
    }
    let spec: LossSpec =
        serde_json::from_str(loss).map_err(|e| Failure::Config(format!("loss spec: {e}")))?;
    spec.validate().map_err(bad_arg)?;
    let probs = softmax(&logits);
    let decomposition = match spec.kind {
        gemlab::LossKind::Gem => gem_flows(&logits, target, &spec).map_err(bad_arg)?,
        _ => flow_decompose(&probs, target).map_err(bad_arg)?,
    };
    let cfg = IterationConfig::new(eta, max_steps);
    let ce = run_ce_iteration(&logits, target, &cfg).map_err(bad_arg)?;
    let gem = run_gem_prototype(&logits, target, &cfg).map_err(bad_arg)?;
    if let Some(path) = svg {
        std::fs::write(path, flow_diagram(probs.as_slice(), &decomposition))
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let summary = |t: &gemlab::flow::Trajectory| {
        json!({
            "steps_taken": t.steps_taken,
            "terminated_by": t.terminated_by,
            "final_logits": t.final_logits().as_slice(),
            "final_probs": t.final_probs().as_slice(),
            "final_entropy": t.final_entropy(),
            "displacement": t.displacement(),
        })
    };
    let doc = json!({
        "logits": logits.as_slice(),
        "probs": probs.as_slice(),
        "target": target,
        "loss": spec,
        "decomposition": decomposition,
        "reconstructed": decomposition.reconstruct(),
        "ce_iteration": summary(&ce),
        "gem_prototype": summary(&gem),
    });
    if let Some(path) = out {
        let traj = json!({ "summary": doc, "ce_iteration": ce, "gem_prototype": gem });
        std::fs::write(path, serde_json::to_string(&traj).expect("trajectory serializes"))
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&doc).expect("serializes")),
        Format::Csv => {
            println!("target,source,weight");
            for f in &decomposition.flows {
                println!("{},{},{}", f.target, f.source, f.weight);
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn equilibrium(
    p: &str,
    beta: f64,
    model: Option<&Path>,
    context: Option<&str>,
    tol: f64,
    check: bool,
    format: Format,
) -> CliResult<()> {
    let p = ProbVector::new(parse_floats(p)?).map_err(bad_arg)?;
    let closed = closed_form_equilibrium(&p, beta).map_err(bad_arg)?;
    let (row, steps, converged) = match model {
        Some(path) => {
            let m = TabularModel::load(path)?;
            if m.vocab_size() != p.len() {
                return Err(Failure::Config("model vocabulary differs from p".into()));
            }
            let ctx: ContextKey = context
                .unwrap_or("")
                .parse()
                .map_err(|e: GemError| Failure::Config(e.to_string()))?;
            (m.row(&ctx), 0, true)
        }
        None => {
            let ctx = ContextKey::new(Vec::new());
            let mut m = TabularModel::new(p.len())?;
            let mut opt = OptimizerState::new(OptimizerConfig::sgd(beta))?;
            let report = fit_exact(
                &mut m,
                &[(ctx.clone(), p.clone())],
                &LossSpec::gem(beta),
                &mut opt,
                &FitConfig::default(),
            )?;
            (m.row(&ctx), report.steps, report.converged)
        }
    };
    let trained = softmax(&row);
    let dev = max_abs_diff(trained.as_slice(), closed.as_slice());
    let recovered = sharpen(&row, beta).map_err(bad_arg)?;
    let sharpen_dev = max_abs_diff(recovered.as_slice(), p.as_slice());
    let ok = dev < tol && sharpen_dev < 1e-3;
    match format {
        Format::Json => {
            let doc = json!({
                "p": p.as_slice(),
                "beta": beta,
                "closed_form": closed.as_slice(),
                "trained": trained.as_slice(),
                "max_dev": dev,
                "sharpen_max_dev": sharpen_dev,
                "steps": steps,
                "converged": converged,
                "pass": ok,
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializes"));
        }
        Format::Csv => {
            println!("token,p,closed_form,trained");
            for i in 0..p.len() {
                println!("{i},{},{},{}", p[i], closed[i], trained[i]);
            }
        }
    }
    if check && !ok {
        return Err(Failure::Check(format!(
            "max deviation {dev:e} (tolerance {tol:e}), sharpen deviation {sharpen_dev:e}"
        )));
    }
    Ok(())
}

fn eval(model: &Path, corpus: &Path, window: Option<usize>, format: Format) -> CliResult<()> {
    let m = TabularModel::load(model)?;
    let (header, data) = read_corpus(corpus)?;
    if header.vocab_size != m.vocab_size() {
        return Err(Failure::Config("model and corpus vocabularies differ".into()));
    }
    let pairs = reset_expand(&data, header.vocab_size, window)?;
    let contexts = distinct_contexts(&pairs);
    let name = model.display().to_string();
    let mut rows = vec![
        (name.clone(), "perplexity".to_string(), perplexity(&m, &data, window)?),
        (name.clone(), "param_distance".to_string(), m.param_distance()),
    ];
    if !contexts.is_empty() {
        rows.push((
            name.clone(),
            "mean_conditional_entropy".into(),
            mean_conditional_entropy(&m, &contexts)?,
        ));
    }
    print_rows(&rows, format)
}

fn report_cmd(run: &Path, kind: &str, out: Option<&Path>, svg: bool, format: Format) -> CliResult<()> {
    let kind: ReportKind = kind.parse().map_err(bad_arg)?;
    let records = load_records(run)?;
    if let Some(dir) = out {
        for path in report(&records, kind, dir, svg)? {
            eprintln!("wrote {}", path.display());
        }
        return Ok(());
    }
    let rows = build_report(&records, kind)?;
    let rows: Vec<(String, String, f64)> = rows.into_iter().map(|r| (r.run, r.metric, r.value)).collect();
    print_rows(&rows, format)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { run: args, cell } => {
            let cell = match cell {
                Some(c) => c,
                None => {
                    let cfg = load_config(&args)?;
                    cfg.cell_names().remove(0)
                }
            };
            run(&args, Some(vec![cell]))
        }
        Command::Sweep { run: args } => run(&args, None),
        Command::AnalyzeFlow {
            logits,
            target,
            loss,
            eta,
            max_steps,
            svg,
            out,
            format,
        } => analyze_flow(&logits, target, &loss, eta, max_steps, svg.as_deref(), out.as_deref(), format),
        Command::Equilibrium {
            p,
            beta,
            model,
            context,
            tol,
            check,
            format,
        } => equilibrium(&p, beta, model.as_deref(), context.as_deref(), tol, check, format),
        Command::Eval {
            model,
            corpus,
            window,
            format,
        } => eval(&model, &corpus, window, format),
        Command::Report {
            run,
            kind,
            out,
            svg,
            format,
        } => report_cmd(&run, &kind, out.as_deref(), svg, format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
    }
}
