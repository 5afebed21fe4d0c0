pub mod cli;
pub mod datasets;
pub mod error;
pub mod extract;
pub mod flow;
pub mod linear;
pub mod numlin;
pub mod objective;
pub mod optimize;
pub mod plot;
pub mod realnvp;
pub mod rng;

pub use error::{DivergenceReport, DivergenceStatistic, Error, Result};
