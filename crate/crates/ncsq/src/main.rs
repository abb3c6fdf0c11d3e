//! Command-line front end.
//!
//! ```text
//! ncsq run   (--preset NAME | --config FILE) [--runs N] [--steps N] [--seed S] [--out DIR]
//! ncsq synth --config FILE
//! ncsq dict  --config FILE --out FILE
//! ```
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
//! failures, 1 on i/o errors.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use nalgebra::DMatrix;
use ncsq::config::{ConfigError, DictConfig, ExperimentConfig, FamilyKind, SynthConfig};
use ncsq::experiment::{run_experiment, RunError};
use ncsq::output::emit_outputs;
use ncsq::presets::{preset, PRESET_NAMES};
use ncsq_core::aggregate::build_augmented;
use ncsq_core::channel::{mss_spectral_radius, DropoutModel};
use ncsq_core::dictionary::{build_dictionary, rate_spec, DictionaryShape};
use ncsq_core::linalg::spectral_radius;
use ncsq_core::stationary::{control_covariance, stationary_cov_single, stationary_cov_two_state};
use ncsq_core::synth::ControllerSynthesis;

const USAGE: &str = "\
ncsq - quantized networked control simulation lab

USAGE:
  ncsq run   (--preset NAME | --config FILE) [--runs N] [--steps N] [--seed S] [--out DIR]
  ncsq synth --config FILE
  ncsq dict  --config FILE --out FILE

COMMANDS:
  run     Execute an experiment and write results.csv, results.json and
          plot.gp into the output directory (default results/<name>).
  synth   Synthesize the controller for the configured system and print
          the feedback gain, closed-loop and stability-test spectral radii
          and the stationary control covariance.
  dict    Generate one dictionary from the configured statistics and dump
          it in the flat binary format.

FLAGS (run):
  --preset NAME   One of fig5 | fig6 | twostate | pd2sweep
  --config FILE   JSON experiment description (see README)
  --runs N        Override the number of runs per cell
  --steps N       Override the steps per run
  --seed S        Override the master seed
  --out DIR       Output directory

EXIT CODES:
  0 success, 2 configuration error, 3 numerical failure, 1 i/o error
";

enum CliError {
    Usage(String),
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => {
                m
            }
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(err: ConfigError) -> Self {
        CliError::Config(err.to_string())
    }
}

impl From<RunError> for CliError {
    fn from(err: RunError) -> Self {
        match err {
            RunError::Config(e) => CliError::Config(e.to_string()),
            RunError::Numerical(m) => CliError::Numerical(m),
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            if matches!(err, CliError::Usage(_)) {
                eprintln!("\n{USAGE}");
            }
            ExitCode::from(err.exit_code())
        }
    }
}

fn dispatch(args: &[String]) -> Result<(), CliError> {
    let Some(command) = args.first() else {
        return Err(CliError::Usage("missing command".into()));
    };
    match command.as_str() {
        "run" => cmd_run(&args[1..]),
        "synth" => cmd_synth(&args[1..]),
        "dict" => cmd_dict(&args[1..]),
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(CliError::Usage(format!("unknown command {other:?}"))),
    }
}

struct Flags {
    preset: Option<String>,
    config: Option<PathBuf>,
    runs: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn parse_flags(args: &[String]) -> Result<Flags, CliError> {
    let mut flags = Flags {
        preset: None,
        config: None,
        runs: None,
        steps: None,
        seed: None,
        out: None,
    };
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let mut value = |name: &str| -> Result<String, CliError> {
            it.next()
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("missing value for {name}")))
        };
        match flag.as_str() {
            "--preset" => flags.preset = Some(value("--preset")?),
            "--config" => flags.config = Some(PathBuf::from(value("--config")?)),
            "--runs" => {
                flags.runs = Some(
                    value("--runs")?
                        .parse()
                        .map_err(|e| CliError::Usage(format!("invalid --runs: {e}")))?,
                )
            }
            "--steps" => {
                flags.steps = Some(
                    value("--steps")?
                        .parse()
                        .map_err(|e| CliError::Usage(format!("invalid --steps: {e}")))?,
                )
            }
            "--seed" => {
                flags.seed = Some(
                    value("--seed")?
                        .parse()
                        .map_err(|e| CliError::Usage(format!("invalid --seed: {e}")))?,
                )
            }
            "--out" => flags.out = Some(PathBuf::from(value("--out")?)),
            other => return Err(CliError::Usage(format!("unknown flag {other:?}"))),
        }
    }
    Ok(flags)
}

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        out.push_str("  [");
        for j in 0..m.ncols() {
            if j > 0 {
                out.push_str(", ");
            }
            out.push_str(&format!("{:>12.6}", m[(i, j)]));
        }
        out.push_str("]\n");
    }
    out
}

fn cmd_run(args: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(args)?;
    let mut cfg: ExperimentConfig = match (&flags.preset, &flags.config) {
        (Some(name), None) => preset(name).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown preset {name:?}; available: {}",
                PRESET_NAMES.join(", ")
            ))
        })?,
        (None, Some(path)) => ExperimentConfig::from_json(&read_file(path)?)?,
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--preset and --config are mutually exclusive".into(),
            ))
        }
        (None, None) => return Err(CliError::Usage("run requires --preset or --config".into())),
    };
    if let Some(runs) = flags.runs {
        cfg.runs = runs;
    }
    if let Some(steps) = flags.steps {
        cfg.steps = steps;
    }
    if let Some(seed) = flags.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;

    let outdir = flags
        .out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));

    eprintln!(
        "running {:?}: {} dictionaries x {} rates, {} runs x {} steps, seed {}",
        cfg.name,
        cfg.dictionaries.len(),
        cfg.rates.len(),
        cfg.runs,
        cfg.steps,
        cfg.master_seed
    );
    let table = run_experiment(&cfg)?;
    for row in &table.rows {
        let mse = row
            .mse_db
            .map(|db| format!("{db:8.3} dB"))
            .unwrap_or_else(|| " unstable".to_string());
        println!(
            "{:<24} rate {:>6.3} -> {}",
            row.family, row.target_rate_bps, mse
        );
    }
    let files = emit_outputs(&cfg, &table, &outdir).map_err(|e| CliError::Io(e.to_string()))?;
    for file in files {
        eprintln!("wrote {}", file.display());
    }
    Ok(())
}

fn cmd_synth(args: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(args)?;
    let path = flags
        .config
        .ok_or_else(|| CliError::Usage("synth requires --config FILE".into()))?;
    let cfg: SynthConfig =
        serde_json::from_str(&read_file(&path)?).map_err(|e| CliError::Config(e.to_string()))?;
    let (plant, weights) = cfg.system.build()?;
    let channel = cfg.channel.build()?;
    let synthesis = ControllerSynthesis::synthesize(&plant, &weights)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let agg = build_augmented(&plant, &synthesis.gain);

    println!("feedback gain (plan = -gain * state):");
    print!("{}", format_matrix(&synthesis.gain));
    println!(
        "closed-loop spectral radius: {}",
        spectral_radius(&agg.a_recv)
    );

    let state_dim = plant.dim();
    let noise_var = plant.noise_var;
    match &channel {
        DropoutModel::Iid { drop_prob } => {
            let rho = mss_spectral_radius(&agg.a_recv, &agg.a_drop, *drop_prob)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            println!("stability-test radius at drop probability {drop_prob}: {rho}");
            let cov = stationary_cov_single(
                &agg.a_recv,
                &agg.a_drop,
                &agg.noise_gain,
                *drop_prob,
                noise_var,
            )
            .map_err(|e| CliError::Numerical(e.to_string()))?;
            let qu = control_covariance(&cov, &synthesis.gain, state_dim);
            println!("stationary control covariance:");
            print!("{}", format_matrix(&qu));
        }
        DropoutModel::TwoState {
            transitions,
            drop_probs,
        } => {
            for (state, prob) in drop_probs.iter().enumerate() {
                let rho = mss_spectral_radius(&agg.a_recv, &agg.a_drop, *prob)
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                println!(
                    "stability-test radius at state-{} drop probability {prob}: {rho}",
                    state + 1
                );
            }
            let cov = stationary_cov_two_state(
                &agg.a_recv,
                &agg.a_drop,
                &agg.noise_gain,
                transitions,
                drop_probs[0],
                drop_probs[1],
                noise_var,
            )
            .map_err(|e| CliError::Numerical(e.to_string()))?;
            let qu = control_covariance(&cov, &synthesis.gain, state_dim);
            println!("stationary control covariance (two-state mixture):");
            print!("{}", format_matrix(&qu));
        }
    }
    Ok(())
}

fn cmd_dict(args: &[String]) -> Result<(), CliError> {
    let flags = parse_flags(args)?;
    let path = flags
        .config
        .ok_or_else(|| CliError::Usage("dict requires --config FILE".into()))?;
    let out = flags
        .out
        .ok_or_else(|| CliError::Usage("dict requires --out FILE".into()))?;
    let cfg: DictConfig =
        serde_json::from_str(&read_file(&path)?).map_err(|e| CliError::Config(e.to_string()))?;
    let (plant, weights) = cfg.system.build()?;
    let channel = cfg.channel.build()?;
    let spec = &cfg.dictionary;
    if !spec.scale.is_finite() || spec.scale <= 0.0 {
        return Err(CliError::Config("dictionary scale must be positive".into()));
    }
    let rate = rate_spec(weights.horizon, spec.sections, spec.rate)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let shape = match spec.family {
        FamilyKind::Iid => DictionaryShape::Variance(
            spec.entry_variance
                .ok_or_else(|| CliError::Config("IID dictionary requires entry_variance".into()))?,
        ),
        family => {
            let synthesis = ControllerSynthesis::synthesize(&plant, &weights)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            let agg = build_augmented(&plant, &synthesis.gain);
            let cov = match (&channel, family.needs_two_state_shape()) {
                (DropoutModel::Iid { drop_prob }, false) => stationary_cov_single(
                    &agg.a_recv,
                    &agg.a_drop,
                    &agg.noise_gain,
                    *drop_prob,
                    plant.noise_var,
                )
                .map_err(|e| CliError::Numerical(e.to_string()))?,
                (
                    DropoutModel::TwoState {
                        transitions,
                        drop_probs,
                    },
                    true,
                ) => stationary_cov_two_state(
                    &agg.a_recv,
                    &agg.a_drop,
                    &agg.noise_gain,
                    transitions,
                    drop_probs[0],
                    drop_probs[1],
                    plant.noise_var,
                )
                .map_err(|e| CliError::Numerical(e.to_string()))?,
                (DropoutModel::Iid { .. }, true) => {
                    return Err(CliError::Config(
                        "GR2/GSR2 dictionaries require a two-state channel".into(),
                    ))
                }
                (DropoutModel::TwoState { .. }, false) => {
                    return Err(CliError::Config(
                        "GR/GSR under a two-state channel use one dictionary per state; \
                         dump each with an iid channel at that state's drop probability"
                            .into(),
                    ))
                }
            };
            DictionaryShape::Covariance(control_covariance(&cov, &synthesis.gain, plant.dim()))
        }
    };

    let dict = build_dictionary(
        spec.family.to_core(),
        weights.horizon,
        rate.sections,
        rate.words_per_section,
        &shape,
        spec.scale,
        spec.seed,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    let mut file =
        fs::File::create(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    dict.write_to(&mut file)
        .map_err(|e| CliError::Io(e.to_string()))?;
    eprintln!(
        "wrote {} ({} x {} columns, achieved rate {})",
        out.display(),
        weights.horizon,
        dict.total_words(),
        rate.rate
    );
    Ok(())
}
