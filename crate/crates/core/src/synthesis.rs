//! End-to-end generation: prior draw, decode to block PMFs, draw levels.

use crate::data::{from_onehot, CategoricalDataset, DecodeMode};
use crate::error::{Error, Result};
use crate::model::EncoderDecoder;
use crate::prior::{sample_prior, PriorModel};
use crate::rng::derive_seed;

/// How decoder PMFs become level indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenerateMode {
    /// Draw each level from its block PMF (default; argmax collapses
    /// diversity and deflates support coverage).
    Sample,
    /// Highest-probability level per block, ties to the lowest index.
    Argmax,
}

/// Generate `count` synthetic rows: `z ~ prior`, decode, draw levels.
/// Deterministic per seed; every generated level lies in the schema support
/// by construction.
pub fn generate(
    model: &EncoderDecoder,
    prior: &PriorModel,
    count: usize,
    seed: u64,
    mode: GenerateMode,
) -> Result<CategoricalDataset> {
    if prior.latent_dim() != model.latent_dim() {
        return Err(Error::ShapeMismatch(format!(
            "prior latent dim {} != model latent dim {}",
            prior.latent_dim(),
            model.latent_dim()
        )));
    }
    let latent = sample_prior(prior, count, derive_seed(seed, "prior-draw"))?;
    let probs = model.decode(&latent.z)?;
    let decode_mode = match mode {
        GenerateMode::Sample => DecodeMode::Sample {
            seed: derive_seed(seed, "level-draw"),
        },
        GenerateMode::Argmax => DecodeMode::Argmax,
    };
    from_onehot(&probs, decode_mode)
}
