//! Topic-filtered disinformation triage over multilingual page embeddings.
//!
//! Pages are projected to a compact embedding space, filtered against a topic
//! centroid, scored by the REDD classifier, and aggregated per publisher domain
//! into review queues whose verdicts feed back into training.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod redd;
pub mod topic;
pub mod triage;
pub mod util;

pub use error::{Error, Result};
