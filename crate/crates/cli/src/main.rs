use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spiralmark::dispatch::{dispatch_results, DeliveryStatus, SmtpConfig, SmtpSender};
use spiralmark::layout::{fill_boxes, ALTERNATIVES, QUESTIONS};
use spiralmark::pipeline::{correct_batch, generate_batch, list_scans, RESULTS_FILE, REVIEW_FILE};
use spiralmark::simulate::simulate_scan;
use spiralmark::{
    AnswerKey, AnswerKeys, CorrectionSetup, DetailPolicy, FileOutbox, GrayImage, MessageSender, Roster, ScanParams,
    SheetLayout,
};

mod config;

use config::Config;

/// Spiral-coded quiz sheets: generate, simulate scans, correct, dispatch.
#[derive(Parser, Debug)]
#[command(name = "spiralmark", version)]
struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Sheet layout JSON; the built-in layout when omitted.
    #[arg(long, global = true)]
    layout: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render one sheet per roster entry plus a manifest.
    Generate(GenerateArgs),
    /// Degrade sheet images the way a scanner might.
    Simulate(SimulateArgs),
    /// Grade a directory of scans.
    Correct(CorrectArgs),
    /// Send each student their result.
    Dispatch(DispatchArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Roster CSV: index,name,email,person_id,quiz_index.
    #[arg(long)]
    roster: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Render resolution; overrides the layout's.
    #[arg(long)]
    dpi: Option<f64>,
    /// Also write random answer keys for the roster's quizzes.
    #[arg(long)]
    keys_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// A sheet image or a directory of them.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Degrees, counter-clockwise.
    #[arg(long, allow_hyphen_values = true)]
    rotation: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    /// Gaussian noise std on the [0, 1] intensity scale.
    #[arg(long)]
    noise: Option<f64>,
    /// Angular share of each spiral to mask, in [0, 1).
    #[arg(long)]
    occlusion: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mark one random alternative per question first and record it in
    /// truth.csv.
    #[arg(long)]
    mark_random: bool,
}

#[derive(Args, Debug)]
struct CorrectArgs {
    #[arg(long)]
    scans: Option<PathBuf>,
    /// Answer keys JSON: quiz index -> 20 alternatives (0 = A).
    #[arg(long)]
    keys: Option<PathBuf>,
    #[arg(long)]
    roster: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Skip the annotated copies.
    #[arg(long)]
    no_annotate: bool,
}

#[derive(Args, Debug)]
struct DispatchArgs {
    #[arg(long)]
    results: Option<PathBuf>,
    /// score-only or per-question.
    #[arg(long)]
    policy: Option<String>,
    /// Directory for message files.
    #[arg(long)]
    outbox: Option<PathBuf>,
    /// Send through this SMTP relay instead of the outbox.
    #[arg(long)]
    smtp_host: Option<String>,
    #[arg(long)]
    smtp_port: Option<u16>,
    #[arg(long)]
    smtp_from: Option<String>,
    #[arg(long)]
    smtp_user: Option<String>,
    #[arg(long)]
    smtp_password: Option<String>,
    /// Write the delivery report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Outcome of a verb that ran to completion.
enum Outcome {
    Clean,
    Partial,
}

type CliResult<T> = Result<T, String>;

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| format!("missing --{flag} (flag or config file)"))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn load_layout(path: Option<&Path>) -> CliResult<SheetLayout> {
    match path {
        Some(p) => SheetLayout::load(p).map_err(err),
        None => Ok(SheetLayout::default()),
    }
}

fn generate(a: GenerateArgs, cfg: &Config, layout: SheetLayout) -> CliResult<Outcome> {
    let c = &cfg.generate;
    let roster = Roster::load(required(a.roster.or(c.roster.clone()), "roster")?).map_err(err)?;
    let out = required(a.out.or(c.out.clone()), "out")?;
    let layout = match a.dpi.or(c.dpi) {
        Some(dpi) => layout.with_dpi(dpi),
        None => layout,
    };
    let manifest = generate_batch(&layout, &roster, &out).map_err(err)?;
    layout.save(out.join("layout.json")).map_err(err)?;
    if let Some(path) = a.keys_out.or(c.keys_out.clone()) {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed.or(c.seed).unwrap_or(0));
        let mut quizzes: Vec<u32> = roster.entries().iter().map(|e| e.quiz_index).collect();
        quizzes.sort_unstable();
        quizzes.dedup();
        let keys = quizzes
            .into_iter()
            .map(|q| AnswerKey::new(q, (0..QUESTIONS).map(|_| rng.random_range(0..ALTERNATIVES)).collect()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        AnswerKeys::new(keys).and_then(|k| k.save(&path)).map_err(err)?;
    }
    println!("wrote {} sheets to {}", manifest.len(), out.display());
    Ok(Outcome::Clean)
}

fn simulate(a: SimulateArgs, cfg: &Config, layout: SheetLayout) -> CliResult<Outcome> {
    let c = &cfg.simulate;
    let input = required(a.input.or(c.input.clone()), "input")?;
    let out = required(a.out.or(c.out.clone()), "out")?;
    let seed = a.seed.or(c.seed).unwrap_or(0);
    let base = ScanParams {
        rotation_deg: a.rotation.or(c.rotation).unwrap_or(0.0),
        scale: a.scale.or(c.scale).unwrap_or(1.0),
        noise_sigma: a.noise.or(c.noise).unwrap_or(0.0),
        occlusion: a.occlusion.or(c.occlusion).unwrap_or(0.0),
        ..ScanParams::default()
    };
    let mark = a.mark_random || c.mark_random.unwrap_or(false);
    let files = if input.is_dir() {
        list_scans(&input).map_err(err)?
    } else {
        vec![input]
    };
    fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = String::from("file,answers\n");
    for (i, path) in files.iter().enumerate() {
        let mut sheet = GrayImage::load(path).map_err(err)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if mark {
            let sheet_layout = layout.with_dpi(layout.dpi * sheet.width() as f64 / layout.pixel_size().0 as f64);
            let answers: Vec<(u8, u8)> = (1..=QUESTIONS).map(|q| (q, rng.random_range(0..ALTERNATIVES))).collect();
            sheet = fill_boxes(&sheet, &sheet_layout, &answers).map_err(err)?;
            let letters: String = answers.iter().map(|&(_, a)| (b'A' + a) as char).collect();
            truth.push_str(&format!("{name},{letters}\n"));
        }
        let params = ScanParams {
            seed: seed.wrapping_add(i as u64),
            ..base
        };
        let scan = simulate_scan(&sheet, &layout, &params).map_err(err)?;
        scan.save(out.join(&name).with_extension("png")).map_err(err)?;
    }
    if mark {
        let path = out.join("truth.csv");
        fs::write(&path, truth).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    println!("wrote {} scans to {}", files.len(), out.display());
    Ok(Outcome::Clean)
}

fn correct(a: CorrectArgs, cfg: &Config, layout: SheetLayout) -> CliResult<Outcome> {
    let c = &cfg.correct;
    let scans = required(a.scans.or(c.scans.clone()), "scans")?;
    let keys = AnswerKeys::load(required(a.keys.or(c.keys.clone()), "keys")?).map_err(err)?;
    let roster = Roster::load(required(a.roster.or(c.roster.clone()), "roster")?).map_err(err)?;
    let out = required(a.out.or(c.out.clone()), "out")?;
    let setup = CorrectionSetup {
        layout,
        keys,
        roster,
        annotate: !a.no_annotate && c.annotate.unwrap_or(true),
        workers: a.workers.or(c.workers).unwrap_or(0),
    };
    let report = correct_batch(&scans, &setup, &out).map_err(err)?;
    println!(
        "graded {} sheets, {} for review; see {} and {}",
        report.rows.len(),
        report.review.len(),
        out.join(RESULTS_FILE).display(),
        out.join(REVIEW_FILE).display()
    );
    for r in &report.review {
        eprintln!("review: {}: {} ({})", r.source, r.reason, r.detail);
    }
    Ok(if report.review.is_empty() {
        Outcome::Clean
    } else {
        Outcome::Partial
    })
}

fn dispatch(a: DispatchArgs, cfg: &Config) -> CliResult<Outcome> {
    let c = &cfg.dispatch;
    let results = required(a.results.or(c.results.clone()), "results")?;
    let policy: DetailPolicy = match a.policy.or(c.policy.clone()) {
        Some(p) => p.parse().map_err(err)?,
        None => DetailPolicy::default(),
    };
    let smtp = c.smtp.clone().unwrap_or_default();
    let sender: Box<dyn MessageSender> = match a.smtp_host.or(smtp.host) {
        Some(host) => Box::new(SmtpSender::new(SmtpConfig {
            host,
            port: a.smtp_port.or(smtp.port).unwrap_or(25),
            from: required(a.smtp_from.or(smtp.from), "smtp-from")?,
            username: a.smtp_user.or(smtp.username),
            password: a.smtp_password.or(smtp.password),
            timeout_secs: 30,
        })),
        None => Box::new(FileOutbox::new(required(a.outbox.or(c.outbox.clone()), "outbox")?).map_err(err)?),
    };
    let report = dispatch_results(&results, policy, sender.as_ref()).map_err(err)?;
    for d in &report.deliveries {
        match &d.status {
            DeliveryStatus::Delivered { location } => println!("{} {} delivered {location}", d.student_index, d.recipient),
            DeliveryStatus::Failed { reason } => println!("{} {} failed: {reason}", d.student_index, d.recipient),
        }
    }
    if let Some(path) = a.report.or(c.report.clone()) {
        let json = serde_json::to_string_pretty(&report).map_err(err)?;
        fs::write(&path, json).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(if report.failures() == 0 {
        Outcome::Clean
    } else {
        Outcome::Partial
    })
}

fn run(cli: Cli) -> CliResult<Outcome> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let layout_path = cli.layout.or(cfg.layout.clone());
    match cli.command {
        Command::Generate(a) => generate(a, &cfg, load_layout(layout_path.as_deref())?),
        Command::Simulate(a) => simulate(a, &cfg, load_layout(layout_path.as_deref())?),
        Command::Correct(a) => correct(a, &cfg, load_layout(layout_path.as_deref())?),
        Command::Dispatch(a) => dispatch(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
