//! Bundled experiment presets: two memoryless-dropout rate sweeps at
//! different dictionary scalings, the two-state comparison, and the
//! bad-state dropout sweep, all on the benchmark system.

use crate::config::{
    ChannelConfig, DictSeedModeConfig, DictionaryEntry, ExperimentConfig, FamilyKind, SystemConfig,
};

/// Default master seed for the presets.
pub const DEFAULT_MASTER_SEED: u64 = 1;

fn rate_grid() -> Vec<f64> {
    // 4.2 to 7.0 bit/symbol in steps of 0.2, generated by exact division
    // so the grid values match their decimal literals
    (21..=35).map(|k| k as f64 / 5.0).collect()
}

fn two_state_channel() -> ChannelConfig {
    ChannelConfig::TwoState {
        transitions: [[0.95, 0.05], [0.25, 0.75]],
        drop_probs: [0.05, 0.15],
    }
}

fn base(
    name: &str,
    channel: ChannelConfig,
    dictionaries: Vec<DictionaryEntry>,
    runs: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.to_string(),
        system: SystemConfig::benchmark(),
        channel,
        dictionaries,
        rates: rate_grid(),
        sections: 2,
        runs,
        steps: 50_000,
        master_seed: DEFAULT_MASTER_SEED,
        pd2_grid: None,
        output_dir: None,
        divergence_threshold: 1e9,
        dict_seed_mode: DictSeedModeConfig::PerRun,
    }
}

fn entry(family: FamilyKind, scale: f64) -> DictionaryEntry {
    DictionaryEntry {
        family,
        scale,
        entry_variance: None,
    }
}

fn iid_entry(variance: f64, scale: f64) -> DictionaryEntry {
    DictionaryEntry {
        family: FamilyKind::Iid,
        scale,
        entry_variance: Some(variance),
    }
}

/// Memoryless dropouts at probability 0.10; unscaled GR, GSR scaled by 2,
/// IID entries with variance 25. Averaged over 12 runs of 50000 steps.
pub fn fig5() -> ExperimentConfig {
    base(
        "fig5",
        ChannelConfig::Iid { drop_prob: 0.10 },
        vec![
            iid_entry(25.0, 1.0),
            entry(FamilyKind::Gr, 1.0),
            entry(FamilyKind::Gsr, 2.0),
        ],
        12,
    )
}

/// As [`fig5`] with every dictionary scaled by an extra factor of two
/// (IID entry variance 100), trading MSE for stability at low rates.
pub fn fig6() -> ExperimentConfig {
    base(
        "fig6",
        ChannelConfig::Iid { drop_prob: 0.10 },
        vec![
            iid_entry(25.0, 2.0),
            entry(FamilyKind::Gr, 2.0),
            entry(FamilyKind::Gsr, 4.0),
        ],
        12,
    )
}

/// The two-state comparison: state-switched GR (scale 2) and GSR (scale 4)
/// against the state-oblivious GR2/GSR2 (scale 3) and the IID dictionary
/// scaled to entry variance 100. Averaged over 24 runs.
pub fn twostate() -> ExperimentConfig {
    base(
        "twostate",
        two_state_channel(),
        vec![
            iid_entry(25.0, 2.0),
            entry(FamilyKind::Gr, 2.0),
            entry(FamilyKind::Gsr, 4.0),
            entry(FamilyKind::Gr2, 3.0),
            entry(FamilyKind::Gsr2, 3.0),
        ],
        24,
    )
}

/// Sweep of the bad-state dropout probability for the GSR2 dictionary at a
/// few fixed rates, good-state probability and transitions held fixed.
pub fn pd2sweep() -> ExperimentConfig {
    let mut cfg = base(
        "pd2sweep",
        two_state_channel(),
        vec![entry(FamilyKind::Gsr2, 3.0)],
        12,
    );
    cfg.rates = vec![4.8, 5.6, 6.4];
    cfg.pd2_grid = Some((1..=9).map(|k| k as f64 / 10.0).collect());
    cfg
}

/// Look up a preset by name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    match name {
        "fig5" => Some(fig5()),
        "fig6" => Some(fig6()),
        "twostate" => Some(twostate()),
        "pd2sweep" => Some(pd2sweep()),
        _ => None,
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 4] = ["fig5", "fig6", "twostate", "pd2sweep"];
