//! `sptucker` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! divergence, 1 anything else.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sptucker::eval::{bench_rank_scaling, bench_speedup, global_mean_baseline, rmse_mae, MetricsWriter, RankSweep};
use sptucker::model::{read_model, write_model};
use sptucker::sptensor::ratings::load_rating_log;
use sptucker::sptensor::{load_delimited, train_test_split, write_delimited, LoadOptions, ZeroPolicy};
use sptucker::synthetic::{synthetic_tucker, SyntheticSpec};
use sptucker::{CooTensor, Error, HyperParams, Shape, Trainer};

#[derive(Parser)]
#[command(name = "sptucker", version, about = "Sparse Tucker decomposition by batched SGD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write per-epoch metrics.
    Train(TrainArgs),
    /// RMSE and MAE of a saved model on a tensor file.
    Eval(EvalArgs),
    /// Predict values at the coordinates listed in a file.
    Predict(PredictArgs),
    /// Rank-scaling or speedup benchmark.
    Bench(BenchArgs),
    /// Split a tensor file into train and test parts.
    Split(SplitArgs),
    /// Turn a `user item rating timestamp` log into an order-4 tensor file.
    Prepare(PrepareArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Tensor order (number of index columns).
    #[arg(long)]
    order: Option<usize>,
    /// Explicit shape, comma separated; inferred from the data otherwise.
    #[arg(long)]
    shape: Option<String>,
    /// Skip the first line of each data file.
    #[arg(long)]
    header: bool,
    /// Replace zero values with this number instead of rejecting them.
    #[arg(long)]
    zero_as: Option<f64>,
}

#[derive(Args)]
struct HyperArgs {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long)]
    rcore: Option<String>,
    #[arg(long)]
    lr_a: Option<String>,
    #[arg(long)]
    lr_b: Option<String>,
    #[arg(long)]
    reg_a: Option<String>,
    #[arg(long)]
    reg_b: Option<String>,
    /// Core batch size, or `all`.
    #[arg(long)]
    batch_m: Option<String>,
    #[arg(long)]
    row_fraction: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// serial, naive or improved.
    #[arg(long)]
    strategy: Option<String>,
    /// static or dynamic.
    #[arg(long)]
    balance: Option<String>,
    #[arg(long)]
    init_mean: Option<String>,
    #[arg(long)]
    init_std: Option<String>,
}

impl HyperArgs {
    fn resolve(&self) -> sptucker::Result<HyperParams> {
        let mut h = HyperParams::default();
        if let Some(path) = &self.config {
            h.apply_file(path)?;
        }
        let flags = [
            ("ranks", &self.ranks),
            ("rcore", &self.rcore),
            ("lr_a", &self.lr_a),
            ("lr_b", &self.lr_b),
            ("reg_a", &self.reg_a),
            ("reg_b", &self.reg_b),
            ("batch_m", &self.batch_m),
            ("row_fraction", &self.row_fraction),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("strategy", &self.strategy),
            ("balance", &self.balance),
            ("init_mean", &self.init_mean),
            ("init_std", &self.init_std),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                h.set(key, v)?;
            }
        }
        h.validate()?;
        Ok(h)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Skip the training-set metrics (reported as NaN).
    #[arg(long)]
    no_train_metrics: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    zero_as: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// One coordinate per line, 1-based, whitespace or comma separated.
    #[arg(long)]
    coords: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Clamp predictions to `MIN,MAX`.
    #[arg(long)]
    clamp: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    /// Seconds per epoch and peak workspace bytes over a rank grid.
    Rank,
    /// Speedup over one worker.
    Speedup,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    kind: BenchKind,
    /// Rank values to sweep, comma separated.
    #[arg(long, default_value = "3,5,7,9,11")]
    grid: String,
    /// Sweep only this mode (1-based); every mode when omitted.
    #[arg(long)]
    mode: Option<usize>,
    /// Worker counts for the speedup table, comma separated.
    #[arg(long, default_value = "1,2,4")]
    workers: String,
    /// Tensor file; a synthetic tensor is generated when omitted.
    #[arg(long)]
    train: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Synthetic shape, comma separated.
    #[arg(long, default_value = "500,500,400")]
    synthetic_shape: String,
    #[arg(long, default_value_t = 1_000_000)]
    synthetic_nnz: usize,
    /// Timed epochs per setting, after one warm-up epoch.
    #[arg(long, default_value_t = 2)]
    bench_epochs: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Lib(Error),
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Lib(e) => match e {
                Error::Config(_) | Error::Domain(_) => 2,
                Error::Parse { .. } | Error::Data(_) | Error::Format(_) | Error::Io { .. } => 3,
                Error::Numeric(_) => 4,
                Error::Internal(_) => 1,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Usage(msg) => write!(f, "{msg}"),
            Failure::Data(msg) => write!(f, "{msg}"),
        }
    }
}

type Outcome = Result<(), Failure>;

fn io_err(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| {
        Failure::Lib(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>, Failure> {
    text.split(',')
        .map(|v| v.trim().parse().map_err(|_| Failure::Usage(format!("{what}: {v:?} is not valid"))))
        .collect()
}

impl DataArgs {
    fn options(&self, order: usize) -> Result<LoadOptions, Failure> {
        Ok(LoadOptions {
            order,
            has_header: self.header,
            zero_policy: self.zero_as.map_or(ZeroPolicy::Reject, ZeroPolicy::Replace),
            shape: self.shape.as_deref().map(|s| parse_list("--shape", s)).transpose()?,
        })
    }

    fn order(&self) -> Result<usize, Failure> {
        match (self.order, &self.shape) {
            (Some(n), _) => Ok(n),
            (None, Some(s)) => Ok(s.split(',').count()),
            (None, None) => Err(Failure::Usage("--order (or --shape) is required".into())),
        }
    }
}

/// Loads train and optional test data on a common shape: the given one, or
/// the per-mode maxima over both files.
fn load_pair(train: &Path, test: Option<&Path>, data: &DataArgs) -> Result<(CooTensor, Option<CooTensor>), Failure> {
    let opts = data.options(data.order()?)?;
    let train = load_delimited(train, &opts)?;
    let Some(test) = test else {
        return Ok((train, None));
    };
    let test = load_delimited(test, &opts)?;
    if opts.shape.is_some() {
        return Ok((train, Some(test)));
    }
    let dims: Vec<usize> = train
        .shape()
        .dims()
        .iter()
        .zip(test.shape().dims())
        .map(|(a, b)| *a.max(b))
        .collect();
    let shape = Shape::new(dims)?;
    let widen = |t: CooTensor| CooTensor::new(shape.clone(), t.coords().to_vec(), t.values().to_vec());
    Ok((widen(train)?, Some(widen(test)?)))
}

fn cmd_train(args: &TrainArgs) -> Outcome {
    let hyper = args.hyper.resolve()?;
    let (train, test) = load_pair(&args.train, args.test.as_deref(), &args.data)?;
    let mut trainer = Trainer::new(hyper.clone())?;
    trainer.set_eval_train(!args.no_train_metrics);
    let mut model = trainer.init_model(train.shape())?;

    let mut comments = hyper.to_pairs();
    comments.push(("train".into(), args.train.display().to_string()));
    if let Some(t) = &args.test {
        comments.push(("test".into(), t.display().to_string()));
    }
    let dims = train.shape().dims().iter().map(usize::to_string).collect::<Vec<_>>();
    comments.push(("shape".into(), dims.join(",")));
    comments.push(("workers".into(), trainer.plan().workers().to_string()));
    let mut writer = args
        .metrics_out
        .as_ref()
        .map(|p| MetricsWriter::create(p, &comments))
        .transpose()?;

    eprintln!(
        "training on {} entries of shape {}, {} epochs, {} with {} worker(s)",
        train.nnz(),
        dims.join("x"),
        hyper.epochs,
        hyper.strategy,
        trainer.plan().workers()
    );
    trainer.fit(&mut model, &train, test.as_ref(), |m| {
        eprintln!(
            "epoch {:>4}  {:.3} s  train rmse {:.5}  test rmse {:.5}",
            m.epoch, m.total_s, m.train_rmse, m.test_rmse
        );
        writer.as_mut().map_or(Ok(()), |w| w.write(m))
    })?;
    if let Some(path) = &args.model_out {
        write_model(&model, path)?;
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Outcome {
    let model = read_model(&args.model)?;
    let opts = LoadOptions {
        order: model.order(),
        has_header: args.header,
        zero_policy: args.zero_as.map_or(ZeroPolicy::Reject, ZeroPolicy::Replace),
        shape: Some(model.shape().dims().to_vec()),
    };
    let test = load_delimited(&args.test, &opts)?;
    let (rmse, mae) = rmse_mae(&model, &test)?;
    println!("entries,rmse,mae");
    println!("{},{rmse},{mae}", test.nnz());
    Ok(())
}

fn parse_coords(line: &str, dims: &[usize]) -> Result<Vec<u32>, String> {
    let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()).collect();
    if fields.len() != dims.len() {
        return Err(format!("expected {} indices, found {}", dims.len(), fields.len()));
    }
    fields
        .iter()
        .zip(dims)
        .enumerate()
        .map(|(k, (f, &d))| match f.parse::<usize>() {
            Ok(i) if (1..=d).contains(&i) => Ok((i - 1) as u32),
            Ok(i) => Err(format!("index {i} of mode {} outside 1..={d}", k + 1)),
            Err(_) => Err(format!("{f:?} is not an index")),
        })
        .collect()
}

fn cmd_predict(args: &PredictArgs) -> Outcome {
    let model = read_model(&args.model)?;
    let clamp = match &args.clamp {
        Some(text) => match parse_list::<f64>("--clamp", text)?[..] {
            [lo, hi] if lo <= hi => Some((lo, hi)),
            _ => return Err(Failure::Usage(format!("--clamp {text:?}: expected MIN,MAX with MIN ≤ MAX"))),
        },
        None => None,
    };
    let input = File::open(&args.coords).map_err(io_err(&args.coords))?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let out_path = args.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let dims = model.shape().dims().to_vec();
    let mut errors = 0usize;
    for (k, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(io_err(&args.coords))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record = match parse_coords(trimmed, &dims) {
            Ok(c) => {
                let mut x = model.predict_entry(&c);
                if let Some((lo, hi)) = clamp {
                    x = x.clamp(lo, hi);
                }
                format!("{trimmed} {x}")
            }
            Err(msg) => {
                errors += 1;
                format!("# error line {}: {msg}", k + 1)
            }
        };
        writeln!(out, "{record}").map_err(io_err(&out_path))?;
    }
    out.flush().map_err(io_err(&out_path))?;
    if errors > 0 {
        return Err(Failure::Data(format!("{errors} coordinate line(s) could not be predicted")));
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Outcome {
    let hyper = args.hyper.resolve()?;
    if args.bench_epochs == 0 {
        return Err(Failure::Usage("--bench-epochs must be at least 1".into()));
    }
    let train = match &args.train {
        Some(path) => load_pair(path, None, &args.data)?.0,
        None => {
            let dims: Vec<usize> = parse_list("--synthetic-shape", &args.synthetic_shape)?;
            let spec = SyntheticSpec {
                ranks: vec![5; dims.len()],
                dims,
                r_core: 5,
                nnz: args.synthetic_nnz,
                noise_std: 0.01,
                seed: hyper.seed,
            };
            synthetic_tucker(&spec)?.0
        }
    };
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_err(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let out_path = args.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut lines = Vec::new();
    for (k, v) in hyper.to_pairs() {
        lines.push(format!("# {k} = {v}"));
    }
    lines.push(format!("# nnz = {}", train.nnz()));
    match args.kind {
        BenchKind::Rank => {
            let grid: Vec<usize> = parse_list("--grid", &args.grid)?;
            let sweep = match args.mode {
                None => RankSweep::Uniform,
                Some(0) => return Err(Failure::Usage("--mode is 1-based".into())),
                Some(m) => RankSweep::Mode(m - 1),
            };
            let res = bench_rank_scaling(&train, &hyper, sweep, &grid, args.bench_epochs)?;
            match res.time_fit {
                Some(f) => lines.push(format!("# time_fit = slope {} intercept {} r2 {}", f.slope, f.intercept, f.r2)),
                None => lines.push("# time_fit = degenerate".into()),
            }
            lines.push("j,seconds_per_epoch,peak_bytes".into());
            lines.extend(res.rows.iter().map(|r| format!("{},{},{}", r.j, r.seconds_per_epoch, r.peak_bytes)));
        }
        BenchKind::Speedup => {
            let grid: Vec<usize> = parse_list("--workers", &args.workers)?;
            let rows = bench_speedup(&train, &hyper, &grid, args.bench_epochs)?;
            lines.push("workers,seconds,speedup,efficiency".into());
            lines.extend(rows.iter().map(|r| format!("{},{},{},{}", r.workers, r.seconds, r.speedup, r.efficiency)));
        }
    }
    for l in lines {
        writeln!(out, "{l}").map_err(io_err(&out_path))?;
    }
    out.flush().map_err(io_err(&out_path))?;
    Ok(())
}

fn cmd_split(args: &SplitArgs) -> Outcome {
    let (t, _) = load_pair(&args.input, None, &args.data)?;
    let (train, test) = train_test_split(&t, args.test_fraction, args.seed)?;
    write_delimited(&train, &args.train_out)?;
    write_delimited(&test, &args.test_out)?;
    let (rmse, _) = global_mean_baseline(&train, &test)?;
    eprintln!(
        "{} train / {} test entries; global-mean test RMSE {rmse:.4}",
        train.nnz(),
        test.nnz()
    );
    Ok(())
}

fn cmd_prepare(args: &PrepareArgs) -> Outcome {
    let t = load_rating_log(&args.input)?;
    write_delimited(&t, &args.out)?;
    let dims = t.shape().dims().iter().map(usize::to_string).collect::<Vec<_>>();
    eprintln!("{} entries, shape {}", t.nnz(), dims.join("x"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Split(a) => cmd_split(a),
        Command::Prepare(a) => cmd_prepare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sptucker: {f}");
            ExitCode::from(f.code())
        }
    }
}
