use std::path::{Path, PathBuf};

use super::Generator;
use crate::dataio::{load_corpus, Corpus};
use crate::geogrid::GridSpec;
use crate::{Error, Result};

/// A corpus produced elsewhere, replayed through the generator interface.
#[derive(Debug, Clone)]
pub struct ExternalCorpus {
    path: PathBuf,
    corpus: Corpus,
}

impl ExternalCorpus {
    /// Loads `path`, rejecting files built on a different grid.
    pub fn load(path: &Path, spec: &GridSpec) -> Result<Self> {
        let corpus = load_corpus(path, Some(spec))?;
        Ok(ExternalCorpus {
            path: path.to_path_buf(),
            corpus,
        })
    }

    pub fn from_corpus(corpus: Corpus) -> Self {
        ExternalCorpus {
            path: PathBuf::new(),
            corpus,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }
}

impl Generator for ExternalCorpus {
    fn spec(&self) -> &GridSpec {
        self.corpus.spec()
    }

    fn sampling_period(&self) -> i64 {
        self.corpus.sampling_period()
    }

    /// The first `n_traces` traces cut to `trace_len`; `start_time` and `seed` are ignored.
    fn generate(&self, n_traces: usize, trace_len: usize, _start_time: i64, _seed: u64) -> Result<Corpus> {
        if n_traces > self.corpus.len() {
            return Err(Error::InsufficientData(format!(
                "external corpus holds {} traces, {n_traces} requested",
                self.corpus.len()
            )));
        }
        let shortest = self.corpus.traces()[..n_traces].iter().map(|t| t.len()).min().unwrap_or(0);
        if trace_len == 0 || trace_len > shortest {
            return Err(Error::Domain(format!(
                "trace_len {trace_len} must be in 1..={shortest} for this corpus"
            )));
        }
        let traces = self.corpus.traces()[..n_traces]
            .iter()
            .map(|t| t.truncated(trace_len))
            .collect();
        self.corpus.with_traces(traces)
    }
}
