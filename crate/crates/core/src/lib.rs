//! Joint distributional learning for high-dimensional categorical tabular
//! data: a two-step latent-variable generator (encoder/decoder trained with
//! entropy, Cramer-Wold and classification regularizers, then a mixture or
//! kernel-density prior fitted to the aggregated posterior), plus the
//! statistical-similarity and privacy metric suite for scoring synthetic
//! datasets against real ones.

pub mod autodiff;
pub mod classifier;
pub mod cramer_wold;
pub mod data;
pub mod error;
pub mod kmeans;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod opt;
pub mod pca;
pub mod persist;
pub mod prior;
pub mod rng;
pub mod synthesis;
pub mod trainer;

pub use autodiff::{ParamStore, Tape};
pub use data::{CategoricalDataset, DatasetSchema, OneHotMatrix};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::EncoderDecoder;
pub use prior::PriorModel;
