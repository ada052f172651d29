mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use srf_pal::archetype::{
    default_templates, generate_subject, parse_labels, subject_to_records, write_labels, LabelRow, PalClass, Timeline,
};
use srf_pal::model::{load_model_file, save_model_file};
use srf_pal::pipeline::{
    assess_records, evaluate_msd, labeled_examples, parse_day_pals, parse_window_pals, sensor_windows, train_model,
};
use srf_pal::signal::{parse_csv, write_csv, RawRecord, SensorKind};
use srf_pal::srf::build_trail;
use srf_pal::training::write_report;

use config::{CliConfig, FileConfig, Overrides};

const SIGNALS_FILE: &str = "signals.csv";
const LABELS_FILE: &str = "labels.csv";
const MODEL_FILE: &str = "model.json";
const REPORT_FILE: &str = "training_report.csv";
const WINDOWS_FILE: &str = "windows.csv";
const DAYS_FILE: &str = "days.csv";
const EVAL_FILE: &str = "eval.csv";
const CONFUSION_FILE: &str = "confusion.csv";

/// Physical activity level assessment with stigmergic receptive fields.
#[derive(Parser, Debug)]
#[command(name = "srf-pal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic subject: signals.csv and labels.csv
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        windows_per_day: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model from labeled signals; writes model.json and training_report.csv
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of leading labeled days used to fit the fusion weights
        #[arg(long)]
        train_days: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Assess a signal log; writes windows.csv and days.csv
    Assess {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an assessment directory against labels; writes eval.csv and confusion.csv
    Eval {
        /// Directory holding windows.csv and days.csv
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Leading labeled days to leave out of the scores
        #[arg(long)]
        train_days: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write archetype trails and the trails of each assessed window
    ExportTrails {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only windows of this day (days since 1970-01-01)
        #[arg(long)]
        day: Option<i64>,
        /// Only windows with this index within their day
        #[arg(long)]
        window: Option<i64>,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Window length in minutes
    #[arg(long)]
    window_min: Option<f64>,
    /// Resampling period in seconds
    #[arg(long)]
    period_sec: Option<i64>,
    /// JSON config file; flags take precedence over it
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            eprint!("{e}");
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn resolve(common: &Common, mut flags: Overrides) -> Result<CliConfig> {
    let file = FileConfig::load(common.config.as_deref())?;
    flags.seed = common.seed;
    flags.window_min = common.window_min;
    flags.period_sec = common.period_sec;
    CliConfig::resolve(&file, &flags)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { out, days, windows_per_day, common } => {
            let cfg = resolve(&common, Overrides { days, windows_per_day, ..Default::default() })?;
            generate(&cfg, &out)
        }
        Command::Train { data, labels, out, train_days, common } => {
            let cfg = resolve(&common, Overrides { train_days, ..Default::default() })?;
            train(&cfg, &data, &labels, &out)
        }
        Command::Assess { model, input, out } => assess(&model, &input, &out),
        Command::Eval { input, labels, out, train_days, config } => {
            let file = FileConfig::load(config.as_deref())?;
            let cfg = CliConfig::resolve(&file, &Overrides { train_days, ..Default::default() })?;
            eval(&input, &labels, &out, cfg.train_days)
        }
        Command::ExportTrails { model, input, out, day, window } => export_trails(&model, &input, &out, day, window),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_labels(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn generate(cfg: &CliConfig, out: &Path) -> Result<()> {
    let subject = generate_subject(&cfg.subject, &default_templates(), cfg.seed)?;
    let timeline = Timeline {
        period: cfg.window.period,
        ranges: cfg.training.ranges,
        ..Timeline::default()
    };
    let (records, labels) = subject_to_records(&subject, &timeline)?;
    out_dir(out)?;
    let mut w = create(out, SIGNALS_FILE)?;
    write_csv(&records, &mut w)?;
    w.flush()?;
    let mut w = create(out, LABELS_FILE)?;
    write_labels(&labels, &mut w)?;
    w.flush()?;
    eprintln!("wrote {} records and {} labeled windows to {}", records.len(), labels.len(), out.display());
    Ok(())
}

/// The first `n` distinct days of the labels, in order.
fn leading_days(labels: &[LabelRow], n: usize) -> Vec<i64> {
    let mut days: Vec<i64> = labels.iter().map(|l| l.day).collect();
    days.sort_unstable();
    days.dedup();
    days.truncate(n);
    days
}

fn train(cfg: &CliConfig, data: &Path, labels: &Path, out: &Path) -> Result<()> {
    let records = read_records(data)?;
    let labels = read_labels(labels)?;
    let days = leading_days(&labels, cfg.train_days);
    let train: Vec<LabelRow> = labels.into_iter().filter(|l| days.contains(&l.day)).collect();
    let examples = labeled_examples(&records, &train, &cfg.training.ranges, &cfg.window)?;
    if examples.len() < 4 {
        bail!("only {} usable labeled windows in the first {} days, need at least 4", examples.len(), days.len());
    }
    eprintln!("training on {} windows from {} days", examples.len(), days.len());
    let (model, reports) = train_model(&examples, &cfg.training, cfg.seed)?;
    out_dir(out)?;
    save_model_file(&model, &out.join(MODEL_FILE)).with_context(|| format!("writing model to {}", out.display()))?;
    let mut w = create(out, REPORT_FILE)?;
    write_report(&reports, &mut w)?;
    w.flush()?;
    Ok(())
}

fn assess(model: &Path, input: &Path, out: &Path) -> Result<()> {
    let model = load_model_file(model).with_context(|| format!("loading model {}", model.display()))?;
    let records = read_records(input)?;
    let a = assess_records(&records, &model)?;
    out_dir(out)?;
    let mut w = create(out, WINDOWS_FILE)?;
    a.write_windows(&mut w)?;
    w.flush()?;
    let mut w = create(out, DAYS_FILE)?;
    a.write_days(&mut w)?;
    w.flush()?;
    eprintln!("assessed {} windows over {} days", a.windows.len(), a.days.len());
    Ok(())
}

fn eval(input: &Path, labels: &Path, out: &Path, train_days: usize) -> Result<()> {
    let open = |name: &str| {
        let p = input.join(name);
        File::open(&p).map(BufReader::new).with_context(|| format!("opening {}", p.display()))
    };
    let windows = parse_window_pals(open(WINDOWS_FILE)?).context("reading window assessments")?;
    let days = parse_day_pals(open(DAYS_FILE)?).context("reading day assessments")?;
    let labels = read_labels(labels)?;
    let skip = leading_days(&labels, train_days);

    let expected: BTreeMap<(i64, i64), f64> = labels.iter().map(|l| ((l.day, l.window_index), l.expected_pal)).collect();
    let mut daily_expected: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for l in labels.iter().filter(|l| !skip.contains(&l.day)) {
        daily_expected.entry(l.day).or_default().push(l.expected_pal);
    }

    let (mut pred, mut exp) = (Vec::new(), Vec::new());
    for w in windows.iter().filter(|w| !skip.contains(&w.day)) {
        if let Some(&e) = expected.get(&(w.day, w.window_index)) {
            pred.push(w.pal);
            exp.push(e);
        }
    }
    let mut confusion = [[0usize; 3]; 3];
    let (mut dpred, mut dexp) = (Vec::new(), Vec::new());
    for d in &days {
        if let Some(e) = daily_expected.get(&d.day) {
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            dpred.push(d.average);
            dexp.push(mean);
            confusion[PalClass::from_pal(mean).level() - 1][d.class.level() - 1] += 1;
        }
    }
    if pred.is_empty() {
        bail!("no assessed windows match held-out labels");
    }
    let msd = evaluate_msd(&pred, &exp)?;
    let daily_msd = evaluate_msd(&dpred, &dexp)?;
    let misclassified: usize = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| confusion[i][j]).sum();

    out_dir(out)?;
    let mut w = create(out, EVAL_FILE)?;
    writeln!(w, "metric,value")?;
    writeln!(w, "window_count,{}", pred.len())?;
    writeln!(w, "window_msd,{msd}")?;
    writeln!(w, "day_count,{}", dpred.len())?;
    writeln!(w, "daily_msd,{daily_msd}")?;
    writeln!(w, "days_misclassified,{misclassified}")?;
    w.flush()?;
    let mut w = create(out, CONFUSION_FILE)?;
    writeln!(w, "expected_class,predicted_class,count")?;
    for (i, e) in [PalClass::Low, PalClass::Medium, PalClass::High].iter().enumerate() {
        for (j, p) in [PalClass::Low, PalClass::Medium, PalClass::High].iter().enumerate() {
            writeln!(w, "{e},{p},{}", confusion[i][j])?;
        }
    }
    w.flush()?;
    eprintln!(
        "window MSD {msd:.4} over {}, daily MSD {daily_msd:.4} over {}, {misclassified} days misclassified",
        pred.len(),
        dpred.len()
    );
    Ok(())
}

fn export_trails(model: &Path, input: &Path, out: &Path, day: Option<i64>, window: Option<i64>) -> Result<()> {
    let model = load_model_file(model).with_context(|| format!("loading model {}", model.display()))?;
    let records = read_records(input)?;
    let cfg = model.window_config;
    let windows = sensor_windows(&records, &model.ranges(), &cfg)?;

    let archetypes = out.join("archetypes");
    out_dir(&archetypes)?;
    let perceptrons = model.perceptrons.iter().chain(std::iter::once(&model.daily_layer.perceptron));
    for p in perceptrons {
        for srf in &p.srfs {
            let mut w = create(&archetypes, &format!("{}_level{}.csv", p.input, srf.level))?;
            srf.archetype.write_csv(&mut w)?;
            w.flush()?;
        }
    }

    let dir = out.join("windows");
    out_dir(&dir)?;
    let mut written = 0;
    for (kind, sensor_windows) in SensorKind::ALL.into_iter().zip(&windows) {
        let p = model.perceptron(kind);
        for w in sensor_windows.iter().filter(|w| w.valid) {
            let slot = w.slot(cfg.window_seconds(), cfg.utc_offset);
            if day.is_some_and(|d| d != w.day) || window.is_some_and(|s| s != slot) {
                continue;
            }
            for srf in &p.srfs {
                let trail = build_trail(&w.samples, &srf.params, &p.trail)?;
                let mut f = create(&dir, &format!("{}_{}_{}_level{}.csv", w.day, slot, kind, srf.level))?;
                trail.write_csv(&mut f)?;
                f.flush()?;
                written += 1;
            }
        }
    }
    eprintln!("wrote {written} window trails to {}", dir.display());
    Ok(())
}
