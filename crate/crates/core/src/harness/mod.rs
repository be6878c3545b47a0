//! Seeded Monte Carlo experiments: configuration, trials, sweeps and the
//! files they produce.

pub mod config;
pub mod experiments;
pub mod output;
pub mod trial;

pub use config::{AmplitudeKind, ExperimentConfig, PowerPolicy, Profile, Scheme};
pub use experiments::{
    compare_field, emit_heatmap, gradcheck, sweep_layers, sweep_users, FieldTable, GradcheckReport,
    HeatmapArm, SummaryRow, SweepTable,
};
pub use trial::{run_trial, run_trial_with, trial_seed, ChannelModel, TrialResult, TrialSpec};
