use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ccs_ica::datagen::{self, MixSpec, SourceSpec};
use ccs_ica::divergence::{binary_sweep, SweepPoint};
use ccs_ica::eval::{evaluate, landscape, LandscapeOptions};
use ccs_ica::{ica, ConvexityParam, Objective, ObjectiveKind, SampleMatrix, SquareMatrix};
use clap::{Args, Parser, Subcommand, ValueEnum};

// a closed pipe (e.g. `| head`) should end output quietly, not panic
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod config;
mod error;
mod io;
mod manifest;

use config::{Settings, WARN_SAMPLES};
use error::CliError;
use manifest::{tool_version, GenManifest, RunManifest};

/// Overrides the default output directory (the current directory).
const OUT_DIR_ENV: &str = "CCS_ICA_OUT_DIR";

const MIN_CHANNELS: usize = 2;
const MAX_CHANNELS: usize = 8;

#[derive(Parser)]
#[command(
    name = "ccs-ica",
    version,
    about = "Blind source separation with the convex Cauchy-Schwarz divergence"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded sources and their mixtures.
    Gen(GenArgs),
    /// Separate a mixture into independent components.
    Separate(SeparateArgs),
    /// Evaluate the contrast over the two-angle demixer family.
    Landscape(LandscapeArgs),
    /// Divergence of two binary variables as their joint probability varies.
    SweepDiscrete(SweepArgs),
    /// Align estimates to reference sources and report SIR.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// uniform(3) + Laplacian(1) through the 2x2 mixing matrix
    #[value(name = "paper-2x2")]
    Paper2x2,
    /// three sources through the 3x3 mixing matrix
    #[value(name = "paper-3x3")]
    Paper3x3,
    /// uniform(3) + Laplacian(1), not mixed
    #[value(name = "sources-2")]
    Sources2,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Paper2x2 => "paper-2x2",
            Preset::Paper3x3 => "paper-3x3",
            Preset::Sources2 => "sources-2",
        }
    }

    fn sources(self) -> Vec<SourceSpec> {
        match self {
            Preset::Paper2x2 | Preset::Sources2 => datagen::sources_2(),
            Preset::Paper3x3 => datagen::sources_3(),
        }
    }

    fn mixing(self) -> MixSpec {
        match self {
            Preset::Paper2x2 => datagen::preset_2x2(),
            Preset::Paper3x3 => datagen::preset_3x3(),
            Preset::Sources2 => MixSpec::new(SquareMatrix::identity(2), None).expect("identity is regular"),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "paper-2x2")]
    preset: Preset,
    /// Number of samples.
    #[arg(long = "T", visible_alias = "samples", default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Add white Gaussian noise at this SNR.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Output directory (must exist).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one WAV file per channel.
    #[arg(long)]
    wav: bool,
    #[arg(long, default_value_t = io::DEFAULT_SAMPLE_RATE)]
    sample_rate: u32,
}

#[derive(Args, Default)]
struct IcaFlags {
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Parzen bandwidth; defaults to 1.06 T^(-1/5).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    objective: Option<ObjectiveKind>,
    /// Take every step at full size.
    #[arg(long)]
    no_backtrack: bool,
    /// Skip kernel terms more than 8 bandwidths away.
    #[arg(long)]
    truncate_kernel: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl IcaFlags {
    fn settings(&self) -> Settings {
        Settings {
            alpha: self.alpha,
            gamma: self.gamma,
            max_iter: self.max_iter,
            epsilon: self.epsilon,
            bandwidth: self.bandwidth,
            objective: self.objective,
            backtrack: self.no_backtrack.then_some(false),
            truncate_kernel: self.truncate_kernel.then_some(true),
            seed: self.seed,
            max_samples: None,
            threads: self.threads,
        }
    }
}

#[derive(Args)]
struct SeparateArgs {
    /// One CSV file, or one WAV file per channel.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Reference sources; adds SIR to the manifest.
    #[arg(long, num_args = 1..)]
    sources: Vec<PathBuf>,
    /// `key = value` settings file, or a manifest from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    ica: IcaFlags,
    #[arg(long)]
    max_samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the demixed channels as WAV.
    #[arg(long)]
    wav: bool,
}

#[derive(Args)]
struct LandscapeArgs {
    /// Two-channel CSV, or two WAV files.
    #[arg(long, num_args = 1.., conflicts_with = "preset")]
    input: Vec<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long = "T", visible_alias = "samples", default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    alpha: f64,
    #[arg(long, default_value = "ccs")]
    objective: ObjectiveKind,
    /// Points per angle axis.
    #[arg(long, default_value_t = 65)]
    grid: usize,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    truncate_kernel: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output CSV; defaults to landscape.csv in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-1.0, 0.0, 1.0])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 700)]
    steps: usize,
    /// Output CSV; defaults to sweep.csv in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required = true, num_args = 1..)]
    sources: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    demixed: Vec<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn out_dir(flag: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = flag.clone().unwrap_or_else(default_out_dir);
    io::require_dir(&dir)?;
    Ok(dir)
}

fn out_file(flag: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    match flag {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                io::require_dir(parent)?;
            }
            Ok(p.clone())
        }
        None => Ok(out_dir(&None)?.join(name)),
    }
}

fn set_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    // a second call in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let dir = out_dir(&args.out)?;
    let s = datagen::gen_sources(&args.preset.sources(), args.samples, args.seed)?;
    let spec = args.preset.mixing().with_snr(args.snr_db);
    // noise gets its own stream so the sources do not depend on the SNR
    let mixture = datagen::mix(&s, &spec, args.seed.wrapping_add(1))?;

    let mut outputs = vec![
        dir.join("sources.csv"),
        dir.join("mixtures.csv"),
        dir.join("mixing.csv"),
    ];
    io::write_signals_csv(&outputs[0], &s)?;
    io::write_signals_csv(&outputs[1], &mixture.signals)?;
    io::write_matrix_csv(&outputs[2], &spec.matrix)?;
    if args.wav {
        outputs.extend(io::write_signals_wav(&dir, "sources", &s, args.sample_rate)?);
        outputs.extend(io::write_signals_wav(
            &dir,
            "mixtures",
            &mixture.signals,
            args.sample_rate,
        )?);
    }
    let manifest_path = dir.join("gen_manifest.json");
    outputs.push(manifest_path.clone());
    let manifest = GenManifest {
        tool_version: tool_version(),
        preset: args.preset.name().into(),
        samples: args.samples,
        seed: args.seed,
        snr_db: args.snr_db,
        noise_sigma: mixture.noise_sigma,
        outputs: outputs.clone(),
    };
    io::write_json(&manifest_path, &manifest)?;
    for p in &outputs {
        out!("wrote {}", p.display());
    }
    Ok(())
}

fn check_shape(x: &SampleMatrix, max_samples: usize) -> Result<(), CliError> {
    if !(MIN_CHANNELS..=MAX_CHANNELS).contains(&x.channels()) {
        return Err(CliError::Usage(format!(
            "need {MIN_CHANNELS} to {MAX_CHANNELS} channels, got {}",
            x.channels()
        )));
    }
    if x.samples() > max_samples {
        return Err(CliError::Usage(format!(
            "{} samples exceed the limit of {max_samples} (raise --max-samples)",
            x.samples()
        )));
    }
    if x.samples() > WARN_SAMPLES {
        eprintln!(
            "warning: {} samples; each iteration costs O(T^2) kernel evaluations",
            x.samples()
        );
    }
    Ok(())
}

fn cmd_separate(args: &SeparateArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let mut flags = args.ica.settings();
    flags.max_samples = args.max_samples;
    let settings = flags.or(file);
    let cfg = settings.ica_config();
    cfg.validate()?;
    set_threads(settings.threads())?;
    let dir = out_dir(&args.out)?;

    let (x, rate) = io::read_signals(&args.input)?;
    check_shape(&x, settings.max_samples())?;
    let reference = if args.sources.is_empty() {
        None
    } else {
        Some(io::read_signals(&args.sources)?.0)
    };

    let start = Instant::now();
    let run = ica::run(&x, &cfg)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut outputs = vec![
        dir.join("demixed.csv"),
        dir.join("w.csv"),
        dir.join("unmixing.csv"),
        dir.join("trace.csv"),
    ];
    io::write_signals_csv(&outputs[0], &run.demixed)?;
    io::write_matrix_csv(&outputs[1], &run.state.w)?;
    io::write_matrix_csv(&outputs[2], &run.unmixing())?;
    io::write_trace_csv(&outputs[3], &run.state.divergence_trace)?;
    if args.wav {
        let rate = rate.unwrap_or(io::DEFAULT_SAMPLE_RATE);
        outputs.extend(io::write_signals_wav(&dir, "demixed", &run.demixed, rate)?);
    }

    let report = reference.map(|s| evaluate(&s, &run.demixed)).transpose()?;
    let manifest_path = dir.join("manifest.json");
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        tool_version: tool_version(),
        seed: cfg.seed,
        config: cfg,
        inputs: args.input.clone(),
        outputs,
        channels: x.channels(),
        samples: x.samples(),
        bandwidth: run.bandwidth,
        iterations: run.state.iteration,
        converged: run.state.converged,
        step_halvings: run.state.step_halvings,
        final_divergence: run.state.final_divergence(),
        sir_db: report.as_ref().map(|r| r.sir_db.clone()),
        total_sir_db: report.as_ref().map(|r| r.total_sir_db),
        wall_time_s,
    };
    io::write_json(&manifest_path, &manifest)?;

    out!(
        "{} iterations, divergence {:.6e}, {:.2}s",
        manifest.iterations,
        manifest.final_divergence,
        wall_time_s
    );
    if let Some(r) = &report {
        out!("SIR per source (dB): {:.2?}  total {:.2}", r.sir_db, r.total_sir_db);
    }
    out!("wrote {}", dir.display());
    Ok(())
}

fn objective_for(kind: ObjectiveKind, alpha: f64) -> Result<Objective, CliError> {
    Ok(match kind {
        ObjectiveKind::Ccs => Objective::ccs(alpha)?,
        ObjectiveKind::Cs => Objective::Cs,
    })
}

fn cmd_landscape(args: &LandscapeArgs) -> Result<(), CliError> {
    set_threads(args.threads)?;
    let path = out_file(&args.out, "landscape.csv")?;
    let data = match (args.input.is_empty(), args.preset) {
        (false, _) => io::read_signals(&args.input)?.0,
        (true, preset) => {
            let preset = preset.unwrap_or(Preset::Sources2);
            let s = datagen::gen_sources(&preset.sources(), args.samples, args.seed)?;
            datagen::mix(&s, &preset.mixing(), args.seed.wrapping_add(1))?.signals
        }
    };
    if data.channels() != 2 {
        return Err(CliError::Usage(format!(
            "the landscape needs 2 channels, got {}",
            data.channels()
        )));
    }
    let opts = LandscapeOptions {
        objective: objective_for(args.objective, args.alpha)?,
        resolution: args.grid,
        bandwidth: args.bandwidth,
        truncate_kernel: args.truncate_kernel,
        parallel: args.threads > 1,
    };
    let grid = landscape(&data, &opts)?;
    let file = std::fs::File::create(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    grid.write_csv(std::io::BufWriter::new(file))
        .map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    out!("lowest grid points (i, j, theta1, theta2, divergence, second difference):");
    for (i, j) in grid.lowest(4) {
        out!(
            "  {i:3} {j:3}  {:.4} {:.4}  {:.6e}  {:.4e}",
            grid.theta1[i],
            grid.theta2[j],
            grid.value(i, j),
            grid.second_difference(i, j)
        );
    }
    out!("wrote {}", path.display());
    Ok(())
}

fn write_sweep(path: &Path, points: &[SweepPoint]) -> Result<(), CliError> {
    let fail = |e: csv::Error| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = std::fs::File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["pAA", "alpha", "divergence"]).map_err(fail)?;
    for p in points {
        w.write_record([
            ccs_ica::eval::fmt_sig9(p.p_aa),
            ccs_ica::eval::fmt_sig9(p.alpha),
            ccs_ica::eval::fmt_sig9(p.divergence),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    if args.steps < 2 {
        return Err(CliError::Usage("--steps must be at least 2".into()));
    }
    let alphas = args
        .alpha
        .iter()
        .map(|&a| ConvexityParam::new(a))
        .collect::<Result<Vec<_>, _>>()?;
    let path = out_file(&args.out, "sweep.csv")?;
    let points = binary_sweep(&alphas, args.steps);
    write_sweep(&path, &points)?;
    out!("alpha  argmin pAA  min divergence  second difference");
    for a in &alphas {
        let curve: Vec<&SweepPoint> = points.iter().filter(|p| p.alpha == a.alpha()).collect();
        let Some(k) = (0..curve.len()).min_by(|&x, &y| curve[x].divergence.total_cmp(&curve[y].divergence)) else {
            continue;
        };
        let second = if k > 0 && k + 1 < curve.len() {
            curve[k - 1].divergence + curve[k + 1].divergence - 2.0 * curve[k].divergence
        } else {
            f64::NAN
        };
        out!(
            "{:>8}  {:.4}  {:.3e}  {:.4e}",
            a.alpha(),
            curve[k].p_aa,
            curve[k].divergence,
            second
        );
    }
    out!("wrote {}", path.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let (s, _) = io::read_signals(&args.sources)?;
    let (y, _) = io::read_signals(&args.demixed)?;
    let report = evaluate(&s, &y)?;
    if let Some(path) = &args.out {
        io::write_json(path, &report)?;
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    out!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Separate(a) => cmd_separate(a),
        Command::Landscape(a) => cmd_landscape(a),
        Command::SweepDiscrete(a) => cmd_sweep(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
