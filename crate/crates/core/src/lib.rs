//! Distinguishing attacks on sparse LWE and sparse LPN through the Kikuchi graph.
//!
//! An instance of `k`-sparse equations over `Z_q` is lifted to the Kikuchi
//! graph on `l`-subsets of variables with exponents. Two attacks run on that
//! graph:
//!
//! * the spectral attack ([`spectral`]) estimates the norm of the Hermitian
//!   adjacency operator by power iteration and compares it with `ρΔ/2`;
//! * the cover attack ([`cover`]) finds closed walks by birthday collisions,
//!   turns them into vectors `c` with `c^T A ≡ 0 (mod q)`, and tests the
//!   right-hand sides along those covers.
//!
//! ```
//! use kikuchi::{instance, AttackParams, Mode, NoiseSpec};
//! use rand::SeedableRng;
//!
//! let params = AttackParams::new(8, 2, 3, 60, 2, NoiseSpec::Noiseless);
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let inst = instance::generate(&params, Mode::Planted, &mut rng).unwrap();
//! let report = kikuchi::spectral::spectral_distinguish(&inst, &params, 1.0, &mut rng).unwrap();
//! assert_eq!(report.verdict, kikuchi::Verdict::Planted);
//! ```

pub mod bounds;
pub mod combin;
pub mod cover;
pub mod error;
pub mod experiment;
pub mod instance;
pub mod kikuchi;
pub mod oracle;
pub mod params;
pub mod ring;
pub mod spectral;

pub use error::{Error, Result};
pub use instance::{Constraint, LinInstance, Mode, Scope};
pub use kikuchi::{KikuchiGraph, Vertex, VertexSpace};
pub use params::{AttackParams, Tunables};
pub use ring::{NoiseSpec, Phase};

use serde::{Deserialize, Serialize};

/// Outcome of a distinguisher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Planted,
    Random,
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Planted => "planted",
            Verdict::Random => "random",
            Verdict::Fail => "fail",
        }
    }
}

/// Independent generator for sub-task `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/instances.md")]
    mod instances {}
    #[doc = include_str!("../../../book/src/kikuchi-graph.md")]
    mod kikuchi_graph {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/covers.md")]
    mod covers {}
    #[doc = include_str!("../../../book/src/tradeoffs.md")]
    mod tradeoffs {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
