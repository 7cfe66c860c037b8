//! The `strawcast` pipeline: synthesize or load data, preprocess, train,
//! forecast, evaluate and report. Each stage reads the previous stage's files.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod plot;
