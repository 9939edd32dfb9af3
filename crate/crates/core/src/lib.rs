//! Contact perception for legged robots with morphology-informed
//! heterogeneous graph networks, plus the model-based floating-base
//! dynamics estimator and an MLP baseline.

pub mod data;
pub mod dynamics;
pub mod eval;
pub mod hgnn;
pub mod morphology;
pub mod numcore;
pub mod params;
pub mod training;

use serde::{Deserialize, Serialize};

/// The two supervised problems: per-foot contact classification and
/// per-foot vertical ground-reaction-force regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Contact,
    Grf,
}

impl Task {
    pub fn output_dim(self) -> usize {
        match self {
            Task::Contact => 2,
            Task::Grf => 1,
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contact" => Ok(Task::Contact),
            "grf" => Ok(Task::Grf),
            other => Err(format!("unknown task '{other}' (expected 'contact' or 'grf')")),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Contact => "contact",
            Task::Grf => "grf",
        })
    }
}
