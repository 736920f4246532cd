//! `hkf`: generate channel datasets, fit Kalman filters, train recurrent
//! trackers and hypernetwork filters, evaluate them and merge reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hkf_core::channel::{
    doppler_bin, make_dataset, read_dataset, write_dataset, ChannelDataset, Condition, Split,
};
use hkf_core::checkpoint::{checkpoint_id, read_checkpoint, write_checkpoint, Checkpoint};
use hkf_core::harness::{
    evaluate, parse_list, Artifact, ComparisonTable, ExperimentConfig, Method, RunReport,
};
use hkf_core::hkf::{new_hkf, train_hkf};
use hkf_core::kalman::{
    encode_params, fit_groups_shaped, read_params, write_params, ArOrder, BankMode, TransitionShape,
};
use hkf_core::lstm::train_lstm;
use hkf_core::Error;

#[derive(Parser)]
#[command(
    name = "hkf",
    version,
    about = "Hypernetwork Kalman filter channel tracking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic channel dataset.
    GenData(GenDataArgs),
    /// Fit AR Kalman parameters per Doppler (genie) or per Doppler bin (bank).
    Fit(FitArgs),
    /// Train a recurrent tracker or a hypernetwork filter.
    Train(TrainArgs),
    /// Evaluate a method and write a per-Doppler report.
    Eval(EvalArgs),
    /// Merge reports into one comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated Doppler list in Hz.
    #[arg(long)]
    dopplers: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "genie")]
    mode: String,
    #[arg(long, default_value_t = 2)]
    ar: u8,
    #[arg(long, default_value = "params.hkp")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fit diagonal transition matrices (also `diagonal_f = true` in the config).
    #[arg(long)]
    diagonal: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long, conflicts_with = "params")]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    pilot_period: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn require_file(path: &Path) -> hkf_core::Result<()> {
    if !path.is_file() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{}: no such file", path.display()),
        )));
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> hkf_core::Result<ExperimentConfig> {
    match path {
        Some(p) => {
            require_file(p)?;
            ExperimentConfig::read(p)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn gen_data(args: GenDataArgs) -> hkf_core::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &args.dopplers {
        cfg.dopplers = parse_list("dopplers", list)?;
    }
    let out = args
        .out
        .or_else(|| (!cfg.out.is_empty()).then(|| PathBuf::from(&cfg.out)))
        .unwrap_or_else(|| PathBuf::from("dataset.hkd"));
    cfg.out = out.display().to_string();
    cfg.validate()?;
    let ds = make_dataset(&cfg.dataset_spec()?)?;
    write_dataset(&out, &ds)?;
    fs::write(sidecar(&out, ".config"), cfg.to_key_values())?;
    print_summary(&ds);
    Ok(())
}

fn print_summary(ds: &ChannelDataset) {
    println!(
        "{} taps, {} symbols, SNR {} dB, pilot 1:{} (offset {})",
        ds.num_taps, ds.seq_len, ds.snr_db, ds.pilot.period, ds.pilot.offset
    );
    println!("doppler_hz,bin,train,test");
    for (d, _) in ds.by_doppler(Split::Train) {
        let count = |s| ds.split(s).filter(|r| r.instance.doppler_hz == d).count();
        println!(
            "{d},{},{},{}",
            doppler_bin(d),
            count(Split::Train),
            count(Split::Test)
        );
    }
}

fn fit(args: FitArgs) -> hkf_core::Result<()> {
    require_file(&args.data)?;
    let ds = read_dataset(&args.data)?;
    let mode: BankMode = args.mode.parse()?;
    let order = ArOrder::from_code(args.ar)?;
    let cfg = load_config(args.config.as_deref())?;
    let shape = if args.diagonal || cfg.diagonal_f {
        TransitionShape::Diagonal
    } else {
        TransitionShape::Full
    };
    let bank = fit_groups_shaped(&ds, mode, order, shape)?;
    write_params(&args.out, &bank)?;
    println!("tag,q_trace");
    for (tag, p) in &bank.entries {
        println!("{tag},{:e}", p.q().trace());
    }
    println!(
        "{} entries written to {} ({})",
        bank.entries.len(),
        args.out.display(),
        checkpoint_id(&encode_params(&bank))
    );
    Ok(())
}

fn train(args: TrainArgs) -> hkf_core::Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if let Some(e) = args.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    let out = args
        .out
        .or_else(|| (!cfg.out.is_empty()).then(|| PathBuf::from(&cfg.out)))
        .unwrap_or_else(|| PathBuf::from(format!("{}.hkw", cfg.method)));
    cfg.out = out.display().to_string();
    cfg.validate()?;
    let method: Method = cfg.method.parse()?;
    require_file(&args.data)?;
    let ds = read_dataset(&args.data)?;
    let (ckpt, trace) = if method == Method::Lstm {
        let (w, trace) = train_lstm(&ds, 1, &cfg.train)?;
        (Checkpoint::Tracker(w), trace)
    } else if let Some(variant) = method.hkf_variant() {
        let mut model = new_hkf(&ds, variant, cfg.train.seed)?;
        let trace = train_hkf(&ds, &mut model, &cfg.train)?;
        (Checkpoint::Filter(model), trace)
    } else {
        return Err(Error::Config(format!(
            "method {method} is not trainable; use lstm, hkf1, hkf2 or hkfg"
        )));
    };
    let id = write_checkpoint(&out, &ckpt)?;
    fs::write(sidecar(&out, ".loss.csv"), trace.to_csv())?;
    fs::write(sidecar(&out, ".config"), cfg.to_key_values())?;
    println!(
        "{method} checkpoint {id} written to {} (final loss {:e})",
        out.display(),
        trace.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn eval(args: EvalArgs) -> hkf_core::Result<()> {
    let method: Method = args.method.parse()?;
    let split: Split = args.split.parse()?;
    require_file(&args.data)?;
    let ds = read_dataset(&args.data)?;
    let (artifact, id) = match (&args.ckpt, &args.params) {
        (Some(p), _) => {
            require_file(p)?;
            let (c, id) = read_checkpoint(p)?;
            (Artifact::Checkpoint(c), id)
        }
        (None, Some(p)) => {
            require_file(p)?;
            let bank = read_params(p)?;
            let id = checkpoint_id(&encode_params(&bank));
            (Artifact::Params(bank), id)
        }
        (None, None) => (Artifact::None, "-".to_string()),
    };
    let cond = Condition {
        snr_db: args.snr_db,
        pilot_period: args.pilot_period,
    };
    let mut report = RunReport::default();
    report.extend(evaluate(&ds, method, &artifact, cond, split, &id)?);
    match &args.out {
        Some(p) => fs::write(p, report.to_csv())?,
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn report(args: ReportArgs) -> hkf_core::Result<()> {
    let reports = args
        .reports
        .iter()
        .map(|p| {
            require_file(p)?;
            RunReport::from_csv(&fs::read_to_string(p)?)
        })
        .collect::<hkf_core::Result<Vec<_>>>()?;
    let table = ComparisonTable::merge(&reports)?;
    fs::write(&args.out, table.to_csv())?;
    let text = table.to_text();
    fs::write(sidecar(&args.out, ".txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numerical() => 4,
        Error::Config(_) | Error::Usage(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Fit(a) => fit(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
