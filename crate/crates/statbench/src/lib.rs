//! Std companion of `statbench-core`: dataset files, the remote predictor
//! client, experiment configs, the replicate runner and the command line.

pub mod catalog;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod io;
pub mod protocol;
pub mod remote;
pub mod runner;
