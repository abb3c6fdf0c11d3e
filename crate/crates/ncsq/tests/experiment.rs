//! Experiment-level integration tests: reduction checks between channel
//! models, the bad-state sweep, and output round-trips.

use ncsq::config::{
    ChannelConfig, DictSeedModeConfig, DictionaryEntry, ExperimentConfig, FamilyKind, SystemConfig,
};
use ncsq::experiment::{experiment_pd2_sweep, experiment_rate_sweep, experiment_two_state};
use ncsq::output::{emit_outputs, plot_script, ExperimentOutput, ResultRow, ResultTable};

fn base_config(
    name: &str,
    channel: ChannelConfig,
    dictionaries: Vec<DictionaryEntry>,
) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        system: SystemConfig::benchmark(),
        channel,
        dictionaries,
        rates: vec![5.6],
        sections: 2,
        runs: 4,
        steps: 10_000,
        master_seed: 3,
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

fn row<'t>(table: &'t ResultTable, family: &str, rate: f64) -> &'t ResultRow {
    table
        .rows
        .iter()
        .find(|r| r.family == family && (r.target_rate_bps - rate).abs() < 1e-9)
        .unwrap_or_else(|| panic!("missing row {family}@{rate}"))
}

#[test]
fn near_degenerate_two_state_channel_matches_the_memoryless_sweep() {
    // equal per-state probabilities and a nearly frozen chain: both the
    // state-switched and the mixture-shaped dictionaries must land within
    // Monte-Carlo noise of the memoryless experiment at that probability
    let eps = 1e-6;
    let two_state = base_config(
        "reduction-two-state",
        ChannelConfig::TwoState {
            transitions: [[1.0 - eps, eps], [eps, 1.0 - eps]],
            drop_probs: [0.1, 0.1],
        },
        vec![entry(FamilyKind::Gsr, 2.0), entry(FamilyKind::Gsr2, 2.0)],
    );
    let single = base_config(
        "reduction-single",
        ChannelConfig::Iid { drop_prob: 0.1 },
        vec![entry(FamilyKind::Gsr, 2.0)],
    );
    let two_table = experiment_two_state(&two_state).unwrap();
    let single_table = experiment_rate_sweep(&single).unwrap();

    let single_db = row(&single_table, "GSR", 5.6).mse_db.unwrap();
    for family in ["GSR", "GSR2"] {
        let got = row(&two_table, family, 5.6).mse_db.unwrap();
        assert!(
            (got - single_db).abs() < 1.0,
            "{family} at {got} dB vs memoryless {single_db} dB"
        );
    }
    let base_two = row(&two_table, "baseline", 5.6).mse_db.unwrap();
    let base_single = row(&single_table, "baseline", 5.6).mse_db.unwrap();
    assert!((base_two - base_single).abs() < 1.0);
}

#[test]
fn two_state_experiment_requires_a_two_state_channel() {
    let cfg = base_config(
        "wrong-channel",
        ChannelConfig::Iid { drop_prob: 0.1 },
        vec![entry(FamilyKind::Gsr, 2.0)],
    );
    assert!(experiment_two_state(&cfg).is_err());
}

#[test]
fn bad_state_sweep_degrades_monotonically_and_reduces_at_the_good_probability() {
    let mut cfg = base_config(
        "pd2-sweep",
        ChannelConfig::TwoState {
            transitions: [[0.95, 0.05], [0.25, 0.75]],
            drop_probs: [0.05, 0.15],
        },
        vec![entry(FamilyKind::Gsr2, 3.0)],
    );
    cfg.pd2_grid = Some(vec![0.05, 0.35, 0.65]);
    let table = experiment_pd2_sweep(&cfg).unwrap();

    // paired seeds across the grid: the MSE should not meaningfully
    // decrease as the bad state gets worse; unstable points count as
    // infinite
    let dbs: Vec<f64> = cfg
        .pd2_grid
        .as_ref()
        .unwrap()
        .iter()
        .map(|pd2| {
            row(&table, &format!("GSR2[pd2={pd2}]"), 5.6)
                .mse_db
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    println!("bad-state sweep MSE: {dbs:?}");
    assert!(dbs[0].is_finite(), "mild bad state must stay stable");
    for pair in dbs.windows(2) {
        assert!(
            pair[1] >= pair[0] - 0.75,
            "MSE decreased sharply along the sweep: {dbs:?}"
        );
    }

    // with the bad state as good as the good state the channel is
    // memoryless at 0.05: compare against that experiment
    let single = base_config(
        "pd2-reduction",
        ChannelConfig::Iid { drop_prob: 0.05 },
        vec![entry(FamilyKind::Gr, 3.0)],
    );
    let single_table = experiment_rate_sweep(&single).unwrap();
    let base_sweep = row(&table, "baseline[pd2=0.05]", 5.6).mse_db.unwrap();
    let base_single = row(&single_table, "baseline", 5.6).mse_db.unwrap();
    assert!(
        (base_sweep - base_single).abs() < 1.0,
        "baseline at pd2=pd1 {base_sweep} dB vs memoryless {base_single} dB"
    );
}

#[test]
fn persistent_certain_dropouts_destabilize_low_rates() {
    let mut cfg = base_config(
        "pd2-divergence",
        ChannelConfig::TwoState {
            transitions: [[0.9, 0.1], [0.02, 0.98]],
            drop_probs: [0.05, 1.0],
        },
        vec![entry(FamilyKind::Gsr2, 3.0)],
    );
    cfg.rates = vec![4.2];
    cfg.runs = 2;
    cfg.steps = 20_000;
    cfg.pd2_grid = Some(vec![1.0]);
    let table = experiment_pd2_sweep(&cfg).unwrap();
    let quantized = row(&table, "GSR2[pd2=1]", 4.2);
    assert!(
        !quantized.stable,
        "long certain-dropout bursts must diverge"
    );
    assert!(quantized.mse_linear.is_none());
}

#[test]
fn emitted_outputs_round_trip_losslessly() {
    let cfg = base_config(
        "emit",
        ChannelConfig::Iid { drop_prob: 0.1 },
        vec![entry(FamilyKind::Gsr, 2.0)],
    );
    let mut small = cfg.clone();
    small.steps = 500;
    small.runs = 2;
    let table = experiment_rate_sweep(&small).unwrap();

    let dir = std::env::temp_dir().join(format!("ncsq-emit-{}", std::process::id()));
    let files = emit_outputs(&small, &table, &dir).unwrap();
    assert_eq!(files.len(), 3);

    let csv_text = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(ResultTable::from_csv(&csv_text).unwrap(), table);

    let json_text = std::fs::read_to_string(&files[1]).unwrap();
    let parsed = ExperimentOutput::from_json(&json_text).unwrap();
    assert_eq!(parsed.table(), table);
    assert_eq!(parsed.metadata, small);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn plot_script_has_one_series_per_family_plus_baseline() {
    // fig5-shaped table: three families and the baseline
    let mut table = ResultTable::default();
    for family in ["IID", "GR", "GSR", "baseline"] {
        for rate in [4.8, 5.6] {
            table.rows.push(ResultRow {
                family: family.into(),
                target_rate_bps: rate,
                achieved_rate_bps: rate,
                mse_linear: Some(100.0),
                mse_db: Some(20.0),
                stable: true,
                runs: 12,
                steps: 50_000,
                master_seed: 1,
            });
        }
    }
    let script = plot_script("fig5", &table);
    assert_eq!(script.matches("title '").count(), 4);
    assert_eq!(script.matches("<< EOD").count(), 4);
    assert!(script.contains("dashtype 2 title 'baseline'"));
}

#[test]
fn degenerate_grid_yields_one_family_row_plus_the_baseline() {
    let mut cfg = base_config(
        "degenerate",
        ChannelConfig::Iid { drop_prob: 0.1 },
        vec![DictionaryEntry {
            family: FamilyKind::Iid,
            scale: 1.0,
            entry_variance: Some(25.0),
        }],
    );
    cfg.rates = vec![5.6];
    cfg.runs = 1;
    cfg.steps = 200;
    let table = experiment_rate_sweep(&cfg).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.rows[0].family, "IID");
    assert_eq!(table.rows[0].runs, 1);
    assert_eq!(table.rows[1].family, "baseline");
}
