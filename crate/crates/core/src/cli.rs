//! `pairsim` command-line front end.
//!
//! Reports go to `out` as TSV; the effective configuration and diagnostics
//! go to `err`. [`run`] returns the process exit code: 0 on success, 1 for
//! configuration errors (and a failed gradient check), 2 for data errors,
//! 3 for numeric failures.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::Rng;

use crate::config::{extract_overrides, RunConfig, CONFIG_ENV};
use crate::embeddings::FusedLexicon;
use crate::error::{Error, Result};
use crate::evaldata::{load_pairs, tokenize, PairDataset};
use crate::model::{Example, Gold, Model, ModelConfig, PairInput};
use crate::numcore::rng::{stream, Stream};
use crate::numcore::{grad_check, GradCheckReport};
use crate::objectives::Task;
use crate::training::{evaluate, load_checkpoint, save_checkpoint, train, Checkpoint, Metrics};

/// Central-difference step of the gradient check.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Largest accepted relative error of the gradient check.
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(
    name = "pairsim",
    about = "Sentence-pair similarity and classification",
    after_help = "Any config key may be overridden as `--key value`, e.g. `--epochs 5`.\n\
                  The default config file is taken from $PAIRSIM_CONFIG."
)]
struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write the best checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a labelled pair file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Score a single sentence pair.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(allow_hyphen_values = true)]
        s1: String,
        #[arg(allow_hyphen_values = true)]
        s2: String,
    },
    /// Finite-difference gradient check of toy models.
    Gradcheck,
    /// Vocabulary coverage of each embedding table.
    Coverage {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Encoder ablation on a small training set.
    Bench {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
    },
}

/// Parses `args` (without the program name) and runs the command.
pub fn run(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(args, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let (overrides, rest) = extract_overrides(args)?;
    let argv = std::iter::once("pairsim".to_string()).chain(rest);
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return Ok(match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    write_all(out, &text)?;
                    0
                }
                _ => {
                    write_all(err, &text)?;
                    1
                }
            });
        }
    };
    let config_path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match &config_path {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for (k, v) in &overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    for line in cfg.echo().lines() {
        writeln!(err, "# {line}").map_err(io_err)?;
    }

    match cli.command {
        Command::Train {
            train,
            valid,
            out: ckpt,
        } => cmd_train(&cfg, &train, valid.as_deref(), &ckpt, out, err),
        Command::Eval { checkpoint, data } => cmd_eval(&cfg, &checkpoint, &data, out, err),
        Command::Score { checkpoint, s1, s2 } => cmd_score(&cfg, &checkpoint, &s1, &s2, out, err),
        Command::Gradcheck => cmd_gradcheck(&cfg, out, err),
        Command::Coverage { files } => cmd_coverage(&cfg, &files, out),
        Command::Bench { train, valid } => cmd_bench(&cfg, &train, valid.as_deref(), out, err),
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

fn write_all(w: &mut dyn Write, s: &str) -> Result<()> {
    w.write_all(s.as_bytes()).map_err(io_err)
}

fn lexicon(cfg: &RunConfig) -> Result<FusedLexicon> {
    FusedLexicon::load(&cfg.embedding_paths()?, cfg.oov_scale()?, cfg.seed()?)
}

fn dataset(cfg: &RunConfig, path: &Path) -> Result<PairDataset> {
    load_pairs(path, cfg.task()?, cfg.lenient()?)
}

fn fmt_metric(m: Option<f64>) -> String {
    match m {
        Some(v) if v.is_finite() => format!("{v:.6}"),
        Some(_) => "nan".into(),
        None => "-".into(),
    }
}

fn cmd_train(
    cfg: &RunConfig,
    train_path: &Path,
    valid_path: Option<&Path>,
    ckpt_path: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let lex = lexicon(cfg)?;
    let tcfg = cfg.train_config()?;
    let train_set = dataset(cfg, train_path)?.prepare(&lex);
    let valid_set = match valid_path {
        Some(p) => Some(dataset(cfg, p)?.prepare(&lex)),
        None => None,
    };
    let hash_before = lex.content_hash();
    let mut model = Model::new(cfg.model_config(lex.dims())?, cfg.seed()?)?;

    write_all(out, "epoch\tloss\tmetric\n")?;
    let outcome = train(&mut model, &train_set, valid_set.as_deref(), &tcfg, |r| {
        let _ = writeln!(out, "{}\t{:.6}\t{}", r.epoch, r.loss, fmt_metric(r.metric));
    })?;
    if lex.content_hash() != hash_before {
        return Err(Error::Data(
            "embedding tables changed during training".into(),
        ));
    }
    model.params = outcome.best_params;
    let ckpt = Checkpoint::new(
        &model,
        Some(outcome.best_state),
        &[
            ("fingerprint", cfg.fingerprint()),
            ("epoch", outcome.best_epoch.to_string()),
            ("embeddings_sha256", hex::encode(lex.content_hash())),
        ],
    );
    save_checkpoint(ckpt_path, &ckpt)?;
    writeln!(
        err,
        "saved epoch {} (metric {}) to {}",
        outcome.best_epoch,
        fmt_metric(outcome.best_metric),
        ckpt_path.display()
    )
    .map_err(io_err)?;
    Ok(0)
}

/// Loads a checkpoint and checks it against the configured model shape.
fn load_model(
    cfg: &RunConfig,
    path: &Path,
    lex: &FusedLexicon,
    err: &mut dyn Write,
) -> Result<Model> {
    let ckpt = load_checkpoint(path)?;
    ckpt.check_config(&cfg.model_config(lex.dims())?)?;
    let want = hex::encode(lex.content_hash());
    if ckpt
        .meta
        .get("embeddings_sha256")
        .is_some_and(|h| *h != want)
    {
        writeln!(
            err,
            "warning: embedding tables differ from the ones used in training"
        )
        .map_err(io_err)?;
    }
    ckpt.into_model()
}

fn print_metrics(task: Task, m: &Metrics, out: &mut dyn Write) -> Result<()> {
    let mut s = String::from("metric\tvalue\n");
    match task {
        Task::Sts => s.push_str(&format!(
            "pearson_x100\t{:.2}\n",
            m.pearson.unwrap_or(f64::NAN) * 100.0
        )),
        _ => {
            s.push_str(&format!(
                "accuracy\t{:.2}\n",
                m.accuracy.unwrap_or(f64::NAN) * 100.0
            ));
            if let Some(f1) = m.f1 {
                s.push_str(&format!("f1\t{:.2}\n", f1 * 100.0));
            }
        }
    }
    write_all(out, &s)
}

fn cmd_eval(
    cfg: &RunConfig,
    ckpt: &Path,
    data: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let lex = lexicon(cfg)?;
    let model = load_model(cfg, ckpt, &lex, err)?;
    let examples = dataset(cfg, data)?.prepare(&lex);
    let metrics = evaluate(&model, &examples)?;
    print_metrics(model.config.task, &metrics, out)?;
    Ok(0)
}

fn cmd_score(
    cfg: &RunConfig,
    ckpt: &Path,
    s1: &str,
    s2: &str,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let (t1, t2) = (tokenize(s1), tokenize(s2));
    if t1.is_empty() || t2.is_empty() {
        return Err(Error::Data(
            "both sentences must contain at least one token".into(),
        ));
    }
    let lex = lexicon(cfg)?;
    let model = load_model(cfg, ckpt, &lex, err)?;
    let pred = model.predict(&PairInput::lookup(&lex, &t1, &t2))?;
    let line = match (pred.score, pred.label) {
        (Some(s), _) => format!("{s:.6}\n"),
        (None, Some(l)) => format!("{}\n", model.config.task.label_names()[l]),
        (None, None) => unreachable!("prediction carries a score or a label"),
    };
    write_all(out, &line)?;
    Ok(0)
}

/// Two random pairs with golds inside the task's range.
pub fn toy_batch(cfg: &ModelConfig, seed: u64) -> Vec<Example> {
    let mut rng = stream(seed.wrapping_add(1), Stream::Init);
    let dim = cfg.input_dim();
    let mut words = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    let s = cfg.score;
    let gold = |i: usize| match cfg.task {
        Task::Sts => Gold::Score(s.raw_min + [0.26, 0.86][i] * (s.raw_max - s.raw_min)),
        t => Gold::Label([0, t.label_names().len() - 1][i]),
    };
    vec![
        Example {
            input: PairInput {
                words1: words(3),
                words2: words(5),
            },
            gold: gold(0),
        },
        Example {
            input: PairInput {
                words1: words(4),
                words2: words(2),
            },
            gold: gold(1),
        },
    ]
}

/// Gradient check of a freshly initialized model (dropout off) on
/// [`toy_batch`].
pub fn toy_gradcheck(cfg: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..cfg.clone()
    };
    let model = Model::new(cfg.clone(), seed)?;
    let batch = toy_batch(&cfg, seed);
    Ok(grad_check(
        &model.objective(&batch),
        &model.params,
        GRADCHECK_STEP,
    ))
}

fn cmd_gradcheck(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let base = cfg.model_config(cfg.gradcheck_dims()?)?;
    let mut failing = Vec::new();
    write_all(out, "task\tgroup\tentries\tmax_rel_err\n")?;
    for task in [Task::Sts, Task::Entailment] {
        let report = toy_gradcheck(
            &ModelConfig {
                task,
                ..base.clone()
            },
            cfg.seed()?,
        )?;
        for g in &report.groups {
            writeln!(
                out,
                "{task}\t{}\t{}\t{:.3e}",
                g.name, g.entries, g.max_rel_err
            )
            .map_err(io_err)?;
        }
        writeln!(out, "{task}\tALL\t-\t{:.3e}", report.max_rel_err).map_err(io_err)?;
        failing.extend(
            report
                .failing(GRADCHECK_THRESHOLD)
                .iter()
                .map(|n| format!("{task}:{n}")),
        );
    }
    if failing.is_empty() {
        writeln!(err, "gradcheck passed").map_err(io_err)?;
        Ok(0)
    } else {
        writeln!(err, "gradcheck failed for: {}", failing.join(", ")).map_err(io_err)?;
        Ok(1)
    }
}

fn cmd_coverage(cfg: &RunConfig, files: &[PathBuf], out: &mut dyn Write) -> Result<i32> {
    let lex = lexicon(cfg)?;
    let mut vocab = std::collections::BTreeSet::new();
    for f in files {
        vocab.extend(dataset(cfg, f)?.vocab);
    }
    let report = lex.coverage(vocab.iter().map(String::as_str))?;
    write_all(out, &report.to_tsv())?;
    Ok(0)
}

/// One row of the encoder ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub train_loss: f64,
    pub metric: Option<f64>,
}

fn cmd_bench(
    cfg: &RunConfig,
    train_path: &Path,
    valid_path: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let lex = lexicon(cfg)?;
    let train_set = dataset(cfg, train_path)?.prepare(&lex);
    let eval_set = match valid_path {
        Some(p) => dataset(cfg, p)?.prepare(&lex),
        None => train_set.clone(),
    };
    let tcfg = crate::training::TrainConfig {
        epochs: cfg.bench_epochs()?,
        ..cfg.train_config()?
    };
    let base = cfg.model_config(lex.dims())?;
    let metric_name = if base.task == Task::Sts {
        "pearson_x100"
    } else {
        "accuracy"
    };
    writeln!(out, "model\ttrain_loss\t{metric_name}").map_err(io_err)?;
    for (mode, kind) in cfg.bench_models()? {
        let mcfg = ModelConfig {
            encoder: kind,
            comparison: mode,
            ..base.clone()
        };
        let mut model = Model::new(mcfg, cfg.seed()?)?;
        train(&mut model, &train_set, None, &tcfg, |_| {})?;
        let loss = model.mean_loss(&model.params, &train_set)?;
        let metric = match evaluate(&model, &eval_set) {
            Ok(m) => m.primary(),
            Err(Error::Data(msg)) => {
                writeln!(err, "warning: {msg}").map_err(io_err)?;
                None
            }
            Err(e) => return Err(e),
        };
        let name = format!("{}-{}", mode.prefix(), kind.display_name());
        let shown = metric.map_or("-".to_string(), |m| format!("{:.2}", m * 100.0));
        writeln!(out, "{name}\t{loss:.6}\t{shown}").map_err(io_err)?;
    }
    Ok(0)
}
