//! Experiment execution: expand a configuration into `(family, rate)`
//! cells, run the paired simulations in parallel, and aggregate them into
//! a result table.
//!
//! Noise and channel streams depend only on `(master_seed, run_index)`, so
//! every cell of an experiment - including the unquantized baseline - sees
//! the same disturbance and dropout sequences at a given run index.

use nalgebra::DMatrix;
use ncsq_core::channel::DropoutModel;
use ncsq_core::dictionary::{achieved_rate, codewords_per_section, DictionaryShape};
use ncsq_core::sim::{
    aggregate_runs, CellSummary, ControlLaw, PreparedSim, QuantizerSpec, SimError, SimulationConfig,
};
use ncsq_core::stationary::{
    control_covariance, stationary_cov_single, stationary_cov_two_state, StatError,
};
use ncsq_core::synth::ControllerSynthesis;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ChannelConfig, ConfigError, ExperimentConfig, FamilyKind};
use crate::output::{ResultRow, ResultTable};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

fn numerical(err: impl std::fmt::Display) -> RunError {
    RunError::Numerical(err.to_string())
}

fn map_sim_error(err: SimError) -> RunError {
    match err {
        SimError::ConfigInvalid(msg) => RunError::Config(ConfigError::Invalid(msg)),
        other => numerical(other),
    }
}

/// Shaping covariances needed by the requested dictionary families.
struct ShapingInputs {
    /// Control covariance under the memoryless channel (or `None` when no
    /// family needs it).
    single: Option<DMatrix<f64>>,
    /// Per-state control covariances for the state-switched families.
    per_state: Option<[DMatrix<f64>; 2]>,
    /// Two-state mixture covariance for the state-oblivious families.
    two_state: Option<DMatrix<f64>>,
}

fn shaping_inputs(
    cfg: &ExperimentConfig,
    channel: &DropoutModel<f64>,
    synthesis: &ControllerSynthesis<f64>,
    agg: &ncsq_core::aggregate::AggregatedModel<f64>,
) -> Result<ShapingInputs, StatError> {
    let state_dim = agg.state_dim;
    let noise_var = cfg.system.noise_var;
    let needs_shaped = cfg
        .dictionaries
        .iter()
        .any(|e| matches!(e.family, FamilyKind::Gr | FamilyKind::Gsr));
    let needs_two_state = cfg
        .dictionaries
        .iter()
        .any(|e| e.family.needs_two_state_shape());

    let mut single = None;
    let mut per_state = None;
    let mut two_state = None;
    match channel {
        DropoutModel::Iid { drop_prob } => {
            if needs_shaped {
                let cov = stationary_cov_single(
                    &agg.a_recv,
                    &agg.a_drop,
                    &agg.noise_gain,
                    *drop_prob,
                    noise_var,
                )?;
                single = Some(control_covariance(&cov, &synthesis.gain, state_dim));
            }
        }
        DropoutModel::TwoState {
            transitions,
            drop_probs,
        } => {
            if needs_shaped {
                let mut covs = Vec::with_capacity(2);
                for prob in drop_probs {
                    let cov = stationary_cov_single(
                        &agg.a_recv,
                        &agg.a_drop,
                        &agg.noise_gain,
                        *prob,
                        noise_var,
                    )?;
                    covs.push(control_covariance(&cov, &synthesis.gain, state_dim));
                }
                let second = covs.pop().unwrap();
                let first = covs.pop().unwrap();
                per_state = Some([first, second]);
            }
            if needs_two_state {
                let cov = stationary_cov_two_state(
                    &agg.a_recv,
                    &agg.a_drop,
                    &agg.noise_gain,
                    transitions,
                    drop_probs[0],
                    drop_probs[1],
                    noise_var,
                )?;
                two_state = Some(control_covariance(&cov, &synthesis.gain, state_dim));
            }
        }
    }
    Ok(ShapingInputs {
        single,
        per_state,
        two_state,
    })
}

/// One simulation cell: a family label, a target rate and the control law.
struct Cell {
    label: String,
    target_rate: f64,
    achieved_rate: f64,
    law: ControlLaw<f64>,
}

fn quantizer_spec(
    entry_family: FamilyKind,
    scale: f64,
    entry_variance: Option<f64>,
    sections: usize,
    words: usize,
    shape_cov: Option<&DMatrix<f64>>,
) -> QuantizerSpec<f64> {
    let shape = match entry_variance {
        Some(var) => DictionaryShape::Variance(var),
        None => DictionaryShape::Covariance(
            shape_cov
                .expect("shaped family carries a covariance")
                .clone(),
        ),
    };
    QuantizerSpec {
        family: entry_family.to_core(),
        sections,
        words_per_section: words,
        shape,
        scale,
    }
}

/// Build the cells of one rate sweep under the given channel.
fn build_cells(
    cfg: &ExperimentConfig,
    channel_cfg: &ChannelConfig,
    shaping: &ShapingInputs,
    label_suffix: &str,
) -> Result<Vec<Cell>, RunError> {
    let horizon = cfg.system.horizon;
    let mut cells = Vec::new();
    for entry in &cfg.dictionaries {
        for &rate in &cfg.rates {
            let words = codewords_per_section(horizon, cfg.sections, rate)
                .map_err(|e| RunError::Config(ConfigError::Invalid(e.to_string())))?;
            let achieved = achieved_rate(horizon, cfg.sections, words);
            let label = format!("{}{}", entry.family.label(), label_suffix);
            let law = match entry.family {
                FamilyKind::Iid => ControlLaw::Quantized(quantizer_spec(
                    entry.family,
                    entry.scale,
                    entry.entry_variance,
                    cfg.sections,
                    words,
                    None,
                )),
                FamilyKind::Gr | FamilyKind::Gsr => match channel_cfg {
                    ChannelConfig::Iid { .. } => ControlLaw::Quantized(quantizer_spec(
                        entry.family,
                        entry.scale,
                        None,
                        cfg.sections,
                        words,
                        shaping.single.as_ref(),
                    )),
                    ChannelConfig::TwoState { .. } => {
                        // state known on both sides: one dictionary per state
                        let per_state = shaping.per_state.as_ref().expect("per-state covariances");
                        ControlLaw::QuantizedSwitched(Box::new([
                            quantizer_spec(
                                entry.family,
                                entry.scale,
                                None,
                                cfg.sections,
                                words,
                                Some(&per_state[0]),
                            ),
                            quantizer_spec(
                                entry.family,
                                entry.scale,
                                None,
                                cfg.sections,
                                words,
                                Some(&per_state[1]),
                            ),
                        ]))
                    }
                },
                FamilyKind::Gr2 | FamilyKind::Gsr2 => ControlLaw::Quantized(quantizer_spec(
                    entry.family,
                    entry.scale,
                    None,
                    cfg.sections,
                    words,
                    shaping.two_state.as_ref(),
                )),
            };
            cells.push(Cell {
                label,
                target_rate: rate,
                achieved_rate: achieved,
                law,
            });
        }
    }
    Ok(cells)
}

fn simulation_config(
    cfg: &ExperimentConfig,
    channel: DropoutModel<f64>,
    law: ControlLaw<f64>,
) -> Result<SimulationConfig<f64>, RunError> {
    let (plant, weights) = cfg.system.build()?;
    let mut sim = SimulationConfig::new(plant, weights, channel, law);
    sim.steps = cfg.steps;
    sim.master_seed = cfg.master_seed;
    sim.divergence_threshold = cfg.divergence_threshold;
    sim.dict_seed_mode = cfg.dict_seed_mode.to_core();
    Ok(sim)
}

fn summary_to_row(
    cfg: &ExperimentConfig,
    label: &str,
    target_rate: f64,
    achieved: f64,
    summary: &CellSummary<f64>,
) -> ResultRow {
    ResultRow {
        family: label.to_string(),
        target_rate_bps: target_rate,
        achieved_rate_bps: achieved,
        mse_linear: summary.mean_mse,
        mse_db: summary.mean_mse_db,
        stable: summary.stable,
        runs: summary.runs,
        steps: cfg.steps,
        master_seed: cfg.master_seed,
    }
}

/// Run every cell of a rate sweep plus the baseline, in parallel over
/// `(cell, run)` jobs.
fn run_sweep_cells(
    cfg: &ExperimentConfig,
    channel_cfg: &ChannelConfig,
    label_suffix: &str,
) -> Result<ResultTable, RunError> {
    let channel = channel_cfg.build()?;
    let (plant, weights) = cfg.system.build()?;
    let probe = SimulationConfig::new(plant, weights, channel.clone(), ControlLaw::Unquantized);
    let prepared_probe = probe.prepare().map_err(map_sim_error)?;
    let shaping = shaping_inputs(
        cfg,
        &channel,
        prepared_probe.synthesis(),
        prepared_probe.aggregated(),
    )
    .map_err(numerical)?;

    let cells = build_cells(cfg, channel_cfg, &shaping, label_suffix)?;

    // prepared simulations: all cells plus the trailing baseline
    let mut prepared: Vec<PreparedSim<f64>> = Vec::with_capacity(cells.len() + 1);
    for cell in &cells {
        let sim = simulation_config(cfg, channel.clone(), cell.law.clone())?;
        prepared.push(sim.prepare().map_err(map_sim_error)?);
    }
    let baseline_sim = simulation_config(cfg, channel.clone(), ControlLaw::Unquantized)?;
    prepared.push(baseline_sim.prepare().map_err(map_sim_error)?);

    let jobs: Vec<(usize, u64)> = (0..prepared.len())
        .flat_map(|cell| (0..cfg.runs as u64).map(move |run| (cell, run)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(cell, run)| prepared[cell].run(run).map(|record| (cell, record)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(map_sim_error)?;

    let mut per_cell: Vec<Vec<ncsq_core::sim::RunRecord<f64>>> = (0..prepared.len())
        .map(|_| Vec::with_capacity(cfg.runs))
        .collect();
    for (cell, record) in records {
        per_cell[cell].push(record);
    }

    let mut table = ResultTable::default();
    for (cell, records) in cells.iter().zip(&per_cell) {
        let summary = aggregate_runs(records);
        table.rows.push(summary_to_row(
            cfg,
            &cell.label,
            cell.target_rate,
            cell.achieved_rate,
            &summary,
        ));
    }
    // the baseline is rate-independent; repeat its row across the grid so
    // every plot has the reference series
    let baseline_summary = aggregate_runs(&per_cell[cells.len()]);
    for &rate in &cfg.rates {
        table.rows.push(summary_to_row(
            cfg,
            &format!("baseline{label_suffix}"),
            rate,
            rate,
            &baseline_summary,
        ));
    }
    Ok(table)
}

/// Rate sweep: every configured family at every rate, plus the baseline.
pub fn experiment_rate_sweep(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    cfg.validate()?;
    run_sweep_cells(cfg, &cfg.channel, "")
}

/// The two-state comparison: a rate sweep that requires the Markov channel
/// (state-switched dictionaries for GR/GSR, mixture-shaped GR2/GSR2).
pub fn experiment_two_state(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    cfg.validate()?;
    if !cfg.channel.is_two_state() {
        return Err(RunError::Config(ConfigError::Invalid(
            "the two-state experiment requires a two-state channel".into(),
        )));
    }
    run_sweep_cells(cfg, &cfg.channel, "")
}

/// Sweep of the second-state dropout probability: the full rate sweep is
/// repeated per grid point with the channel's bad-state probability
/// replaced, families labelled `NAME[pd2=VALUE]`. When the stationary
/// shaping covariance does not exist at a grid point (the unquantized loop
/// is not mean-square stable there), that point's quantized cells are
/// reported unstable instead of aborting the sweep.
pub fn experiment_pd2_sweep(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    cfg.validate()?;
    let grid = cfg
        .pd2_grid
        .clone()
        .ok_or_else(|| RunError::Config(ConfigError::Invalid("pd2_grid is required".into())))?;
    let (transitions, drop_prob_good) = match &cfg.channel {
        ChannelConfig::TwoState {
            transitions,
            drop_probs,
        } => (*transitions, drop_probs[0]),
        ChannelConfig::Iid { .. } => {
            return Err(RunError::Config(ConfigError::Invalid(
                "the bad-state sweep requires a two-state channel".into(),
            )))
        }
    };

    let mut table = ResultTable::default();
    for &pd2 in &grid {
        let suffix = format!("[pd2={pd2}]");
        let channel_cfg = ChannelConfig::TwoState {
            transitions,
            drop_probs: [drop_prob_good, pd2],
        };
        let mut point_cfg = cfg.clone();
        point_cfg.channel = channel_cfg.clone();
        match run_sweep_cells(&point_cfg, &channel_cfg, &suffix) {
            Ok(mut point_table) => table.rows.append(&mut point_table.rows),
            Err(RunError::Numerical(reason)) => {
                // no stationary shaping at this grid point: the loop is not
                // mean-square stable, record the quantized cells as
                // unstable and still simulate the baseline
                eprintln!("pd2={pd2}: {reason}; marking quantized cells unstable");
                for entry in &cfg.dictionaries {
                    for &rate in &cfg.rates {
                        let words = codewords_per_section(cfg.system.horizon, cfg.sections, rate)
                            .map_err(|e| {
                            RunError::Config(ConfigError::Invalid(e.to_string()))
                        })?;
                        table.rows.push(ResultRow {
                            family: format!("{}{suffix}", entry.family.label()),
                            target_rate_bps: rate,
                            achieved_rate_bps: achieved_rate(
                                cfg.system.horizon,
                                cfg.sections,
                                words,
                            ),
                            mse_linear: None,
                            mse_db: None,
                            stable: false,
                            runs: cfg.runs,
                            steps: cfg.steps,
                            master_seed: cfg.master_seed,
                        });
                    }
                }
                let mut baseline_cfg = point_cfg.clone();
                baseline_cfg.dictionaries.clear();
                let mut baseline_table = run_sweep_cells(&baseline_cfg, &channel_cfg, &suffix)?;
                table.rows.append(&mut baseline_table.rows);
            }
            Err(other) => return Err(other),
        }
    }
    Ok(table)
}

/// Dispatch on the configuration: the bad-state sweep when a grid is
/// present, otherwise the rate sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, RunError> {
    if cfg.pd2_grid.is_some() {
        experiment_pd2_sweep(cfg)
    } else {
        experiment_rate_sweep(cfg)
    }
}
