//! Topic densities from contextual embeddings.
//!
//! Pipeline: quantize embeddings into hyperwords ([`net`]), estimate
//! hyperword topics spectrally ([`tscore`]), smooth them into continuous
//! topic densities ([`density`]) and regress document weights ([`weights`]).
//! [`sim`] and [`experiment`] generate synthetic corpora and score fits
//! against ground truth.

pub mod corpus;
pub mod density;
pub mod experiment;
mod kdtree;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod net;
pub mod select;
pub mod sim;
pub mod tscore;
pub mod weights;

pub use corpus::{read_corpus, write_corpus, CorpusError, EmbeddingCorpus};
pub use density::{make_kernel, DensityError, DensityModel, Kernel, ZetaMode};
pub use model::{ModelError, ModelFile};
pub use net::{count_matrix, fit_net, HyperwordCounts, KMeansParams, NetError, VoronoiNet};
pub use select::{select_bandwidth, EntropyCurve, SelectError};
pub use sim::{SimConfig, SimError, SimTruth};
pub use tscore::{topic_score, TopicFit, TopicScoreError};
pub use weights::{estimate_weights, infer_new_doc, WeightMatrix, WeightsError};

/// Any pipeline failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    TopicScore(#[from] TopicScoreError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
