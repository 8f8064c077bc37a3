use std::sync::Arc;
use std::time::Duration;

use anyhow::Result;
use clap::ValueEnum;
use hitlbo_core::{Expert, ExpertQueue, MleExpert, PriorSpec, RemoteExpert, SimulatedExpert};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpertMode {
    /// Always answers Wiener(variance).
    Sim,
    /// Fits the prior to the run's own evaluations.
    Mle,
    /// Waits for an answer over HTTP.
    #[default]
    Remote,
}

pub type BoxedExpert = Box<dyn Expert + Send>;

pub fn build(mode: ExpertMode, variance: f64, queue: &Arc<ExpertQueue>, timeout: Duration) -> Result<BoxedExpert> {
    let prior = PriorSpec::wiener(variance)?;
    Ok(match mode {
        ExpertMode::Sim => Box::new(SimulatedExpert::new(prior)),
        ExpertMode::Mle => Box::new(MleExpert::new(prior)),
        ExpertMode::Remote => Box::new(RemoteExpert::new(queue.clone(), timeout)),
    })
}
