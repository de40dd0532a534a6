//! Trajectory generators behind one interface.

mod external;
mod markov;
mod vine;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::persist::{load_envelope, save_envelope};
use crate::dataio::Corpus;
use crate::geogrid::GridSpec;
use crate::{Error, Result};

pub use external::ExternalCorpus;
pub use markov::{MarkovModel, MarkovOptions, Order1Reduction, SparseRow, DEFAULT_ALPHA, DEFAULT_TIME_BUCKETS};
pub use vine::{VineGenerator, VineGeneratorOptions, DEFAULT_WINDOW};

/// Produces a corpus on the generator's grid and sampling period.
///
/// Output depends only on the arguments; trace `i` uses its own random stream.
pub trait Generator: Sync {
    fn spec(&self) -> &GridSpec;
    fn sampling_period(&self) -> i64;
    fn generate(&self, n_traces: usize, trace_len: usize, start_time: i64, seed: u64) -> Result<Corpus>;
}

/// A fitted model as stored on disk.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Vine(VineGenerator),
    Markov(MarkovModel),
}

#[derive(Serialize, Deserialize)]
struct ModelPayload<T> {
    model: T,
}

impl TrainedModel {
    pub fn model_type(&self) -> &'static str {
        match self {
            TrainedModel::Vine(_) => "vine",
            TrainedModel::Markov(_) => "markov",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            TrainedModel::Vine(g) => save_envelope(path, "vine", g.spec(), &ModelPayload { model: g }),
            TrainedModel::Markov(m) => {
                save_envelope(path, "markov", m.spec(), &ModelPayload { model: m.to_data() })
            }
        }
    }

    /// Loads a model file; with `expected`, also checks its grid.
    pub fn load(path: &Path, expected: Option<&GridSpec>) -> Result<Self> {
        let env = load_envelope(path)?;
        if let Some(spec) = expected {
            spec.ensure_same(&env.grid_spec)?;
        }
        let bad = |e: serde_json::Error| Error::Format(format!("model payload: {e}"));
        match env.model_type.as_str() {
            "vine" => {
                let p: ModelPayload<VineGenerator> = serde_json::from_value(env.payload).map_err(bad)?;
                Ok(TrainedModel::Vine(p.model.with_spec(env.grid_spec)?))
            }
            "markov" => {
                let p: ModelPayload<markov::MarkovData> = serde_json::from_value(env.payload).map_err(bad)?;
                Ok(TrainedModel::Markov(MarkovModel::from_data(env.grid_spec, p.model)?))
            }
            other => Err(Error::Format(format!("unknown model type {other:?}"))),
        }
    }

    pub fn as_generator(&self) -> &dyn Generator {
        match self {
            TrainedModel::Vine(g) => g,
            TrainedModel::Markov(m) => m,
        }
    }
}

impl Generator for TrainedModel {
    fn spec(&self) -> &GridSpec {
        self.as_generator().spec()
    }

    fn sampling_period(&self) -> i64 {
        self.as_generator().sampling_period()
    }

    fn generate(&self, n_traces: usize, trace_len: usize, start_time: i64, seed: u64) -> Result<Corpus> {
        self.as_generator().generate(n_traces, trace_len, start_time, seed)
    }
}
