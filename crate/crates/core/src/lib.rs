//! Subgraph-based discrete diffusion for refining a single observed network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod datasets;
pub mod diffusion;
pub mod edit;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod stitch;
pub mod subgraph;

pub use error::{Error, Result};
pub use graph::{Edge, EdgeSet, Graph};

/// Independent random stream `stream` of the generator seeded by `seed`.
/// Work items draw from their own stream so results do not depend on the
/// order in which items are processed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
