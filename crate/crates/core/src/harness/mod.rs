//! Experiment configuration, multi-seed runs, agent comparisons and plotting.

pub mod checks;
pub mod compare;
pub mod config;
pub mod run;

pub use compare::{compare_agents, plot_script, AgentSummary, Comparison};
pub use config::{EnvSpec, KeyValues, RunConfig};
pub use run::{aggregate, run_experiment, train_run, AggregatePoint, ExperimentResult, RunCurve, RunSeeds, Session};
