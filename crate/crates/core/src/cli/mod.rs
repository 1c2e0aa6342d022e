//! The `abd-nmt` command line.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, KEYS};

use crate::checkpoint;
use crate::data::{build_vocab, gen_synthetic, load_lines, load_parallel, Task, Vocabulary};
use crate::decoding::{translate_all, DecodeConfig, DEFAULT_BEAM};
use crate::error::{Error, Result};
use crate::eval::{
    bleu, bleu_by_length, bucket_table, column_chart, default_lambda_grid, lambda_sweep,
    lambda_table, MAX_ORDER,
};
use crate::model::{
    count_params, init_model, param_manifest, Architecture, Dropout, LossOptions, ModelConfig,
};
use crate::numcore::{check_gradients, GradCheckConfig, Graph};
use crate::training::{train, DevSet, METRICS_HEADER};

pub const MODEL_FILE: &str = "model.ckpt";
pub const SRC_VOCAB_FILE: &str = "src.vocab";
pub const TGT_VOCAB_FILE: &str = "tgt.vocab";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const CONFIG_FILE: &str = "train.conf";

#[derive(Parser, Debug)]
#[command(
    name = "abd-nmt",
    version,
    about = "Asynchronous bidirectional decoding for neural machine translation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic parallel corpus to <prefix>.src / <prefix>.tgt.
    GenData(GenDataArgs),
    /// Train a model and write the best checkpoint, vocabularies and metrics.
    Train(TrainArgs),
    /// Translate one sentence per input line to standard output.
    Translate(TranslateArgs),
    /// Score hypotheses against one or more reference files.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients on a tiny model.
    GradCheck(GradCheckArgs),
    /// Train one model per lambda and report dev BLEU.
    SweepLambda(SweepArgs),
    /// Print a checkpoint's configuration and parameter manifest.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    task: Task,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    len_min: usize,
    #[arg(long, default_value_t = 12)]
    len_max: usize,
    #[arg(long, default_value_t = 20)]
    vocab: usize,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct TrainFlags {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    src: Option<PathBuf>,
    #[arg(long)]
    tgt: Option<PathBuf>,
    #[arg(long)]
    dev_src: Option<PathBuf>,
    /// Dev reference file; repeat for several reference sets.
    #[arg(long = "dev-ref")]
    dev_ref: Vec<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    architecture: Option<Architecture>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input file; standard input when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BEAM)]
    beam: usize,
    /// Decoders to use: abd (two-phase), l2r or r2l.
    #[arg(long)]
    mode: Option<Architecture>,
    #[arg(long)]
    length_normalize: bool,
    #[arg(long)]
    src_vocab: Option<PathBuf>,
    #[arg(long)]
    tgt_vocab: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    hyp: PathBuf,
    /// Reference file; repeat for several reference sets.
    #[arg(long = "ref", required = true)]
    refs: Vec<PathBuf>,
    #[arg(long)]
    lowercase: bool,
    /// Comma-separated inclusive upper edges of source-length buckets.
    #[arg(long)]
    buckets: Option<String>,
    /// Source file for bucketing; hypothesis lengths are used without it.
    #[arg(long)]
    src: Option<PathBuf>,
    /// Also draw the bucket scores as a text chart.
    #[arg(long)]
    chart: bool,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Corrupt the analytic gradient (negative control).
    #[arg(long, hide = true)]
    inject_bug: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    flags: TrainFlags,
    /// Comma-separated lambda values.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Checkpoint to describe.
    #[arg(long, conflicts_with = "full_size")]
    model: Option<PathBuf>,
    /// Describe the full-size configuration without a checkpoint.
    #[arg(long)]
    full_size: bool,
    #[arg(long, default_value_t = 30_000)]
    vocab: usize,
    #[arg(long, default_value = "abd")]
    architecture: Architecture,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::GenData(a) => gen_data(a).map(|_| 0),
        Command::Train(a) => train_cmd(a, out).map(|_| 0),
        Command::Translate(a) => translate_cmd(a, out).map(|_| 0),
        Command::Evaluate(a) => evaluate_cmd(a, out).map(|_| 0),
        Command::GradCheck(a) => grad_check_cmd(a, out),
        Command::SweepLambda(a) => sweep_cmd(a, out).map(|_| 0),
        Command::Inspect(a) => inspect_cmd(a, out).map(|_| 0),
    }
}

fn io_out(e: std::io::Error) -> Error {
    Error::io(Path::new("<stdout>"), e)
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let corpus = gen_synthetic(a.task, a.n, a.seed, (a.len_min, a.len_max), a.vocab)?;
    let with_ext = |ext: &str| {
        let mut p = a.out_prefix.clone().into_os_string();
        p.push(ext);
        PathBuf::from(p)
    };
    corpus.write(&with_ext(".src"), &with_ext(".tgt"))
}

fn run_config(flags: &TrainFlags) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    if let Some(path) = &flags.config {
        c.apply_file(path)?;
    }
    if let Some(p) = &flags.src {
        c.src = Some(p.clone());
    }
    if let Some(p) = &flags.tgt {
        c.tgt = Some(p.clone());
    }
    if let Some(p) = &flags.dev_src {
        c.dev_src = Some(p.clone());
    }
    if !flags.dev_ref.is_empty() {
        c.dev_ref = flags.dev_ref.clone();
    }
    if let Some(l) = flags.lambda {
        c.model.lambda = l;
    }
    if let Some(s) = flags.seed {
        c.train.seed = s;
    }
    if let Some(e) = flags.epochs {
        c.train.epochs = e;
    }
    if let Some(a) = flags.architecture {
        c.model.architecture = a;
    }
    for kv in &flags.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Input(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        c.set(k.trim(), v.trim())?;
    }
    Ok(c)
}

struct Prepared {
    model: ModelConfig,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
    dev: Option<DevSet>,
}

fn prepare(c: &RunConfig) -> Result<Prepared> {
    let src = c
        .src
        .as_ref()
        .ok_or_else(|| Error::Input("missing --src".into()))?;
    let tgt = c
        .tgt
        .as_ref()
        .ok_or_else(|| Error::Input("missing --tgt".into()))?;
    let corpus = load_parallel(src, tgt)?;
    let src_vocab = build_vocab(&corpus.sources(), c.src_vocab_size)?;
    let tgt_vocab = build_vocab(&corpus.targets(), c.tgt_vocab_size)?;
    let pairs = corpus
        .pairs
        .iter()
        .map(|(s, t)| (src_vocab.encode(s), tgt_vocab.encode(t)))
        .collect();
    let dev = match (&c.dev_src, c.dev_ref.is_empty()) {
        (Some(ds), false) => {
            let sources: Vec<Vec<usize>> = load_lines(ds, false)?
                .iter()
                .map(|s| src_vocab.encode(s))
                .collect();
            let mut reference_sets = Vec::new();
            for r in &c.dev_ref {
                let set = load_lines(r, true)?;
                if set.len() != sources.len() {
                    return Err(Error::Data(format!(
                        "dev source has {} lines but {} has {}",
                        sources.len(),
                        r.display(),
                        set.len()
                    )));
                }
                reference_sets.push(set);
            }
            Some(DevSet {
                sources,
                reference_sets,
            })
        }
        (None, true) => None,
        _ => {
            return Err(Error::Input(
                "--dev-src and --dev-ref must be given together".into(),
            ))
        }
    };
    let model = ModelConfig {
        src_vocab: src_vocab.len(),
        tgt_vocab: tgt_vocab.len(),
        ..c.model.clone()
    };
    model.validate()?;
    Ok(Prepared {
        model,
        src_vocab,
        tgt_vocab,
        pairs,
        dev,
    })
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut c = run_config(&a.flags)?;
    if let Some(o) = a.out {
        c.out = Some(o);
    }
    let dir = c
        .out
        .clone()
        .ok_or_else(|| Error::Input("missing --out".into()))?;
    let p = prepare(&c)?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    fs::write(dir.join(CONFIG_FILE), c.to_text())
        .map_err(|e| Error::io(&dir.join(CONFIG_FILE), e))?;
    p.src_vocab.save(&dir.join(SRC_VOCAB_FILE))?;
    p.tgt_vocab.save(&dir.join(TGT_VOCAB_FILE))?;
    let metrics_path = dir.join(METRICS_FILE);
    let mut metrics = fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    writeln!(metrics, "# lambda={}", p.model.lambda).map_err(|e| Error::io(&metrics_path, e))?;
    writeln!(metrics, "{METRICS_HEADER}").map_err(|e| Error::io(&metrics_path, e))?;
    let model = init_model(&p.model, c.train.seed)?;
    log::info!(
        "training {} model: {} parameters, {} pairs",
        p.model.architecture,
        count_params(&p.model),
        p.pairs.len()
    );
    let outcome = train(
        model,
        &p.pairs,
        p.dev.as_ref().map(|d| (d, &p.tgt_vocab)),
        &c.train,
        |row| writeln!(metrics, "{row}").map_err(|e| Error::io(&metrics_path, e)),
    )?;
    let ckpt = dir.join(MODEL_FILE);
    checkpoint::save(&outcome.best, &ckpt)?;
    match outcome.best_dev_bleu {
        Some(b) => writeln!(
            out,
            "best dev BLEU {:.2}; checkpoint {}",
            100.0 * b,
            ckpt.display()
        ),
        None => writeln!(out, "checkpoint {}", ckpt.display()),
    }
    .map_err(io_out)
}

fn vocab_path(explicit: &Option<PathBuf>, model: &Path, name: &str) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| model.parent().unwrap_or(Path::new(".")).join(name))
}

/// Worker count from `ABD_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var("ABD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn read_input(path: &Option<PathBuf>) -> Result<Vec<Vec<String>>> {
    match path {
        Some(p) => load_lines(p, true),
        None => {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| Error::io(Path::new("<stdin>"), e))?;
            Ok(text
                .lines()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect())
        }
    }
}

fn translate_cmd(a: TranslateArgs, out: &mut dyn Write) -> Result<()> {
    let model = checkpoint::load(&a.model)?;
    let src_vocab = Vocabulary::load(&vocab_path(&a.src_vocab, &a.model, SRC_VOCAB_FILE))?;
    let tgt_vocab = Vocabulary::load(&vocab_path(&a.tgt_vocab, &a.model, TGT_VOCAB_FILE))?;
    if src_vocab.len() != model.config.src_vocab || tgt_vocab.len() != model.config.tgt_vocab {
        return Err(Error::Data(format!(
            "vocabularies have {}/{} entries but the model expects {}/{}",
            src_vocab.len(),
            tgt_vocab.len(),
            model.config.src_vocab,
            model.config.tgt_vocab
        )));
    }
    let lines = read_input(&a.input)?;
    let cfg = DecodeConfig {
        mode: a.mode.unwrap_or(model.config.architecture),
        beam: a.beam,
        length_normalize: a.length_normalize,
    };
    // empty input lines translate to empty output lines
    let idx: Vec<usize> = (0..lines.len()).filter(|&i| !lines[i].is_empty()).collect();
    let sources: Vec<Vec<usize>> = idx.iter().map(|&i| src_vocab.encode(&lines[i])).collect();
    let results = translate_all(&model, &sources, &cfg, thread_count())?;
    let mut rendered = vec![String::new(); lines.len()];
    for (&i, t) in idx.iter().zip(&results) {
        rendered[i] = tgt_vocab.decode(&t.tokens)?.join(" ");
    }
    let truncated = results.iter().filter(|t| t.truncated_trace).count();
    if truncated > 0 {
        log::warn!("{truncated} sentence(s) used a truncated backward trace");
    }
    for line in rendered {
        writeln!(out, "{line}").map_err(io_out)?;
    }
    Ok(())
}

fn parse_edges(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Input(format!("bad bucket edge `{s}`")))
        })
        .collect()
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let hyps = load_lines(&a.hyp, true)?;
    let mut sets = Vec::new();
    for r in &a.refs {
        let set = load_lines(r, true)?;
        if set.len() != hyps.len() {
            return Err(Error::Data(format!(
                "{} has {} lines but {} has {}",
                a.hyp.display(),
                hyps.len(),
                r.display(),
                set.len()
            )));
        }
        sets.push(set);
    }
    let report = bleu(&hyps, &sets, MAX_ORDER, a.lowercase)?;
    writeln!(out, "{report}").map_err(io_out)?;
    if let Some(spec) = &a.buckets {
        let edges = parse_edges(spec)?;
        let lengths: Vec<usize> = match &a.src {
            Some(p) => {
                let src = load_lines(p, true)?;
                if src.len() != hyps.len() {
                    return Err(Error::Data(format!(
                        "{} has {} lines but {} has {}",
                        p.display(),
                        src.len(),
                        a.hyp.display(),
                        hyps.len()
                    )));
                }
                src.iter().map(Vec::len).collect()
            }
            None => sets[0].iter().map(Vec::len).collect(),
        };
        let buckets = bleu_by_length(&hyps, &sets, &lengths, &edges, a.lowercase)?;
        write!(out, "{}", bucket_table(&buckets)).map_err(io_out)?;
        if a.chart {
            let bars: Vec<(String, f64)> = buckets
                .iter()
                .map(|b| (b.label(), 100.0 * b.report.score))
                .collect();
            write!(out, "{}", column_chart("BLEU by source length", &bars, 10)).map_err(io_out)?;
        }
    }
    Ok(())
}

/// The built-in gradient-check setting: vocabularies 11/13, embeddings 8,
/// hidden 12, one sentence pair of lengths 5 and 6, λ = 0.7.
pub fn grad_check_setting(
    seed: u64,
    detach: bool,
) -> Result<(crate::model::Model<f64>, Vec<Vec<usize>>, Vec<Vec<usize>>)> {
    let mut c = ModelConfig::small(11, 13, 8, 12);
    c.init_scale = 0.5;
    c.dropout = 0.0;
    c.detach_backward_trace = detach;
    let model = init_model(&c, seed)?;
    Ok((
        model,
        vec![vec![4, 9, 5, 10, 6]],
        vec![vec![7, 12, 4, 11, 8, 5]],
    ))
}

/// Gradient check of the joint loss in the built-in setting. Trace token
/// choices are held at their unperturbed values; with a detached trace the
/// trace states are too.
pub fn run_grad_check(
    seed: u64,
    detach: bool,
    cfg: &GradCheckConfig,
    inject_bug: bool,
) -> Result<crate::numcore::GradCheckReport> {
    let (m, src, tgt) = grad_check_setting(seed, detach)?;
    let mut g = Graph::new(&m.store);
    let base = m.joint_loss(
        &mut g,
        &src,
        &tgt,
        &mut Dropout::off(),
        &LossOptions::default(),
    )?;
    let forced = base.trace.as_ref().map(|t| t.tokens.clone());
    let states = base.trace.as_ref().map(|t| g.value(t.states).clone());
    drop(g);
    let opts = LossOptions {
        forced_trace: forced.as_deref(),
        fixed_trace_states: if detach { states.as_ref() } else { None },
    };
    check_gradients(
        &m.store,
        |s| {
            let mut g = Graph::new(s);
            Ok(
                m.joint_loss(&mut g, &src, &tgt, &mut Dropout::off(), &opts)?
                    .value,
            )
        },
        |s| {
            let grads = {
                let mut g = Graph::new(s);
                let l = m.joint_loss(&mut g, &src, &tgt, &mut Dropout::off(), &opts)?;
                g.backward(l.total)?
            };
            grads.accumulate_into(s)?;
            if inject_bug {
                for p in s.iter_mut() {
                    p.grad.scale_in_place(1.5);
                }
            }
            Ok(())
        },
        cfg,
    )
}

fn grad_check_cmd(a: GradCheckArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = GradCheckConfig {
        eps: a.eps,
        tol: a.tol,
        seed: a.seed,
    };
    let mut ok = true;
    for detach in [false, true] {
        let report = run_grad_check(a.seed, detach, &cfg, a.inject_bug)?;
        writeln!(out, "detach_backward_trace={detach}").map_err(io_out)?;
        for p in &report.params {
            let flag = if p.offending.is_empty() { "ok" } else { "FAIL" };
            write!(
                out,
                "  {:<24} {:>5} checked  max rel err {:.3e}  {flag}",
                p.name, p.checked, p.max_rel_err
            )
            .map_err(io_out)?;
            match p.worst {
                Some((i, a, n)) if !p.offending.is_empty() => {
                    writeln!(out, "  [{i}] analytic {a:.6e} numeric {n:.6e}").map_err(io_out)?
                }
                _ => writeln!(out).map_err(io_out)?,
            }
        }
        writeln!(
            out,
            "  max rel err {:.3e} (tol {:.0e})",
            report.max_rel_err(),
            a.tol
        )
        .map_err(io_out)?;
        ok &= report.passed();
    }
    writeln!(
        out,
        "{}",
        if ok {
            "gradient check passed"
        } else {
            "gradient check FAILED"
        }
    )
    .map_err(io_out)?;
    Ok(if ok { 0 } else { 3 })
}

fn sweep_cmd(a: SweepArgs, out: &mut dyn Write) -> Result<()> {
    let c = run_config(&a.flags)?;
    let grid = match &a.grid {
        Some(s) => s
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Input(format!("bad lambda `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => default_lambda_grid(),
    };
    if let Some(bad) = grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Input(format!("lambda {bad} is outside [0, 1]")));
    }
    let p = prepare(&c)?;
    let dev = p
        .dev
        .as_ref()
        .ok_or_else(|| Error::Input("sweep-lambda needs --dev-src and --dev-ref".into()))?;
    let rows = lambda_sweep(
        &p.pairs,
        dev,
        &p.tgt_vocab,
        &p.model,
        &c.train,
        &grid,
        c.train.seed,
    )?;
    write!(out, "{}", lambda_table(&rows)).map_err(io_out)?;
    let bars: Vec<(String, f64)> = rows
        .iter()
        .map(|(l, b)| (format!("{l:.1}"), 100.0 * b))
        .collect();
    write!(out, "{}", column_chart("dev BLEU by lambda", &bars, 10)).map_err(io_out)
}

/// Reads a checkpoint's header and manifest without loading the payload.
fn read_checkpoint_header(path: &Path) -> Result<ModelConfig> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut head = Vec::new();
    let mut blanks = 0;
    while blanks < 2 {
        let mut line = Vec::new();
        let n = r
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        if line == b"\n" {
            blanks += 1;
        }
        head.extend_from_slice(&line);
    }
    let (config, _, _) = checkpoint::read_header(path, &head)?;
    Ok(config)
}

fn inspect_cmd(a: InspectArgs, out: &mut dyn Write) -> Result<()> {
    let config = match (&a.model, a.full_size) {
        (Some(p), _) => read_checkpoint_header(p)?,
        (None, true) => ModelConfig::full_size(a.vocab, a.vocab).with_architecture(a.architecture),
        (None, false) => return Err(Error::Input("give --model or --full-size".into())),
    };
    for (k, v) in checkpoint::config_entries(&config) {
        writeln!(out, "{k}={v}").map_err(io_out)?;
    }
    writeln!(out).map_err(io_out)?;
    let mut by_component = std::collections::BTreeMap::new();
    for (name, comp, rows, cols) in param_manifest(&config) {
        writeln!(
            out,
            "{name:<28} {comp:<8} {rows:>6} x {cols:<6} {:>12}",
            rows * cols
        )
        .map_err(io_out)?;
        *by_component.entry(comp.as_str()).or_insert(0usize) += rows * cols;
    }
    writeln!(out).map_err(io_out)?;
    for (comp, n) in by_component {
        writeln!(out, "{comp:<8} {n:>12}").map_err(io_out)?;
    }
    let total = count_params(&config);
    writeln!(out, "total    {total:>12} ({:.2}M)", total as f64 / 1e6).map_err(io_out)
}
