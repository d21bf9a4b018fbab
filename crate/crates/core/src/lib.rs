//! Proactive horizontal pod autoscaling laboratory.
//!
//! A per-service LSTM forecasts next-minute workload, a GCN over the service
//! dependency graph turns the forecast window into a per-service vCPU
//! requirement, and the integration step converts that requirement into pod
//! counts. A discrete-time cluster simulator replays workload traces against
//! this policy and against a reactive threshold autoscaler.

#![allow(clippy::needless_range_loop)]

pub mod autoscaler;
pub mod cli_report;
pub mod cluster_sim;
pub mod forecast_lstm;
pub mod predict_gcn;
pub mod scaling;
pub mod tensor;
pub mod traces;
