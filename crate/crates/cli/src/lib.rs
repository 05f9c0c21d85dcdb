//! Command-line front end: dataset lookup, subcommands and SVG plots.

pub mod app;
pub mod datasets;
pub mod plot;

pub use app::run;
