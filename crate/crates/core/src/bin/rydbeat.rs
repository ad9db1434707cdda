use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rydbeat::beats::beat_report;
use rydbeat::config::RunConfig;
use rydbeat::dynamics::{add_noise, add_noise_rows, fringe_image, intensity_trace, spectrogram, FringeImage};
use rydbeat::fitting::{coherence_from_fringes, fit_fringe_slice, fit_lifetime};
use rydbeat::io;
use rydbeat::reproduce::{reproduce, Scope, DEFAULT_SEED};
use rydbeat::states::StateId;
use rydbeat::Error;

#[derive(Parser)]
#[command(name = "rydbeat", version, about = "Simulate and analyse Rydberg exciton lifetimes, coherence and quantum beats")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration (defaults when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed; overrides the configuration's.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short = 'o', long = "out", default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated data files plus the resolved configuration.
    Simulate {
        kind: SimKind,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model to data files and write the result as JSON.
    Fit {
        kind: FitKind,
        /// Trace CSV (lifetime), fringe CSV (fringe), or fringe CSVs /
        /// directories holding them (coherence).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Beat spectrum, peaks and state-pair assignments of a trace.
    Beats {
        input: PathBuf,
        /// Only pairs containing this state.
        #[arg(long)]
        focus: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate from the embedded catalog and compare with published values.
    Reproduce {
        scope: ScopeArg,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    Trace,
    Spectrogram,
    Fringes,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Lifetime,
    Fringe,
    Coherence,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Lifetimes,
    Beats,
    Coherence,
    All,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    delay_ps: f64,
}

/// Failure that maps to exit code 1 without an underlying error.
struct Rejected(String);

enum Failure {
    Lib(Error),
    Rejected(Rejected),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected(Rejected(msg))) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. } | Error::Json(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate { kind, common } => simulate(kind, &common),
        Command::Fit { kind, inputs, common } => fit(kind, &inputs, &common),
        Command::Beats { input, focus, common } => beats(&input, focus.as_deref(), &common),
        Command::Reproduce { scope, common } => reproduce_cmd(scope, &common),
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let config = match &common.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    config.resolved(common.seed)
}

fn out_dir(common: &Common) -> Result<&Path, Error> {
    fs::create_dir_all(&common.out)?;
    Ok(&common.out)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Error> {
    let mut f = create(dir, name)?;
    f.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn simulate(kind: SimKind, common: &Common) -> Outcome {
    let config = load_config(common)?;
    let catalog = config.load_catalog()?;
    let set = config.emitter_set(&catalog)?;
    let seed = config.seed();
    let dir = out_dir(common)?;
    let t = config.time_grid.points("time_grid")?;
    match kind {
        SimKind::Trace => {
            let mut trace = intensity_trace(&set, &t, &config.channel, Some(&config.instrument))?;
            if let Some(noise) = config.noise {
                trace.intensity = add_noise(&trace.intensity, noise, seed)?;
                trace.meta.seed = Some(seed);
            }
            let mut f = create(dir, &config.outputs.trace)?;
            io::write_trace_csv(&mut f, &trace)?;
            f.flush()?;
        }
        SimKind::Spectrogram => {
            let e = config.energy_grid.expect("resolved").points("energy_grid")?;
            let mut s = spectrogram(&set, &t, &e, &config.instrument)?;
            if let Some(noise) = config.noise {
                s.intensity = add_noise_rows(&s.intensity, noise, seed)?;
            }
            let mut f = create(dir, &config.outputs.spectrogram)?;
            io::write_spectrogram_csv(&mut f, &s)?;
            f.flush()?;
        }
        SimKind::Fringes => {
            let e = config.energy_grid.expect("resolved").points("energy_grid")?;
            let delays = config.delays.points("delays")?;
            let mut manifest = Vec::with_capacity(delays.len());
            for (i, &d) in delays.iter().enumerate() {
                let mut img = fringe_image(&set, d, &config.fringe, &e, config.fringe_channel_fwhm_mev)?;
                if let Some(noise) = config.noise {
                    img.intensity = add_noise_rows(&img.intensity, noise, seed.wrapping_add(i as u64))?;
                }
                let name = format!("{}_{i:04}.csv", config.outputs.fringe_prefix);
                let mut f = create(dir, &name)?;
                io::write_fringe_csv(&mut f, &img)?;
                f.flush()?;
                manifest.push(ManifestEntry { file: name, delay_ps: d });
            }
            let name = format!("{}s.json", config.outputs.fringe_prefix);
            write_text(dir, &name, &serde_json::to_string_pretty(&manifest).map_err(Error::from)?)?;
        }
    }
    write_text(dir, &config.outputs.resolved_config, &config.to_json()?)?;
    Ok(())
}

/// Fringe images from files, or from directories (their manifest when
/// present, otherwise every CSV in name order).
fn read_fringe_stack(inputs: &[PathBuf]) -> Result<Vec<FringeImage>, Error> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let manifest = fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .find(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n.to_string_lossy().ends_with("s.json")));
            let listed: Option<Vec<ManifestEntry>> = manifest
                .map(|m| fs::read_to_string(m).map_err(Error::from).and_then(|s| serde_json::from_str(&s).map_err(Error::from)))
                .transpose()?;
            match listed {
                Some(entries) => files.extend(entries.into_iter().map(|e| input.join(e.file))),
                None => {
                    let mut csvs: Vec<PathBuf> = fs::read_dir(input)?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                        .collect();
                    csvs.sort();
                    files.extend(csvs);
                }
            }
        } else {
            files.push(input.clone());
        }
    }
    files.iter().map(|f| io::read_fringe_csv(open(f)?)).collect()
}

fn fit(kind: FitKind, inputs: &[PathBuf], common: &Common) -> Outcome {
    let config = load_config(common)?;
    let dir = out_dir(common)?;
    match kind {
        FitKind::Lifetime => {
            let trace = io::read_trace_csv(open(&inputs[0])?)?;
            let a = &config.analysis.lifetime;
            let json = match fit_lifetime(&trace, a.irf, &a.options) {
                Ok(fit) => fit.to_json()?,
                Err(e) => failed_fit_json("emg", &e),
            };
            write_text(dir, "lifetime_fit.json", &json)?;
        }
        FitKind::Fringe => {
            let img = io::read_fringe_csv(open(&inputs[0])?)?;
            let rows: Vec<serde_json::Value> = img
                .e
                .iter()
                .enumerate()
                .map(|(j, &energy)| match fit_fringe_slice(&img.x, img.row(j)) {
                    Ok(fit) => serde_json::json!({"energy_meV": energy, "fit": fit}),
                    Err(e) => serde_json::json!({"energy_meV": energy, "error": e.to_string(), "converged": false}),
                })
                .collect();
            let out = serde_json::json!({"delay_ps": img.delay, "rows": rows});
            write_text(dir, "fringe_fits.json", &serde_json::to_string_pretty(&out).map_err(Error::from)?)?;
        }
        FitKind::Coherence => {
            let stack = read_fringe_stack(inputs)?;
            let result = coherence_from_fringes(&stack, &config.analysis.coherence.options)?;
            write_text(dir, "coherence.json", &result.to_json()?)?;
            if let Some(p) = result.primary() {
                if let Some(fit) = &p.fit {
                    println!(
                        "T2 = {:.3} ± {:.3} ps at {:.3} meV",
                        fit.value("T2")?,
                        fit.sigma("T2")?,
                        p.energy_mev
                    );
                }
            }
        }
    }
    Ok(())
}

fn failed_fit_json(model: &str, e: &Error) -> String {
    serde_json::to_string_pretty(&serde_json::json!({
        "model": model,
        "converged": false,
        "error": e.to_string(),
    }))
    .expect("plain JSON")
}

fn beats(input: &Path, focus: Option<&str>, common: &Common) -> Outcome {
    let config = load_config(common)?;
    let catalog = config.load_catalog()?;
    let mut options = config.analysis.beats.clone();
    if let Some(f) = focus {
        let state: StateId = f.parse()?;
        options = options.with_focus(state);
    }
    let trace = io::read_trace_csv(open(input)?)?;
    let report = beat_report(&trace, &catalog, &options)?;
    let dir = out_dir(common)?;
    if let Some(spec) = &report.spectrum {
        let mut f = create(dir, "spectrum.csv")?;
        io::write_spectrum_csv(&mut f, spec)?;
        f.flush()?;
    }
    write_text(dir, "beats.json", &report.to_json()?)?;
    let text = report.to_text();
    write_text(dir, "beats.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn reproduce_cmd(scope: ScopeArg, common: &Common) -> Outcome {
    let seed = match (&common.config, common.seed) {
        (_, Some(s)) => s,
        (Some(_), None) => load_config(common)?.seed.unwrap_or(DEFAULT_SEED),
        (None, None) => DEFAULT_SEED,
    };
    let scope = match scope {
        ScopeArg::Lifetimes => Scope::Lifetimes,
        ScopeArg::Beats => Scope::Beats,
        ScopeArg::Coherence => Scope::Coherence,
        ScopeArg::All => Scope::All,
    };
    let report = reproduce(scope, seed)?;
    let dir = out_dir(common)?;
    write_text(dir, "reproduction.json", &report.to_json()?)?;
    let text = report.to_text();
    write_text(dir, "reproduction.txt", &text)?;
    print!("{text}");
    if report.pass() {
        Ok(())
    } else {
        Err(Failure::Rejected(Rejected(format!("{} comparison(s) failed", report.failed))))
    }
}
