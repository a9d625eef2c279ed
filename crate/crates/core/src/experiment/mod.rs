//! Training campaigns, theory checks, metrics and file outputs.

pub mod campaigns;
pub mod config;
pub mod heatmap;
pub mod phases;
pub mod train;
pub mod verify;

pub use config::{Algorithm, ExperimentConfig, Mode, SCHEMA_LINE};
pub use heatmap::{heatmap_svg, visit_counts};
pub use phases::{behavior_phases, majority_phase, onset, Phase};
pub use train::{metrics_csv, run_campaign, train_campaign, CampaignResult, CoverageRecord, Trainer, METRICS_HEADER};
pub use verify::{verify_theory, CheckLine, TheoryReport};
pub use campaigns::{
    ablate_horizon, ablate_horizon_with, ablation_csv, best_horizon, horizon_config, mean_stderr, replay, seed_configs,
    switch_csv, switch_press_experiment, switch_press_experiment_with, tail_mean, AblationRow, SwitchRow,
    ABLATION_HORIZONS, SWITCH_ALGORITHMS,
};
