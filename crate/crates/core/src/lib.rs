//! Knowledge-conditioned selection of stochastic degradation models.
//!
//! A health-indicator trajectory is matched against a hierarchical
//! candidate space (process family x trend). Two decision providers answer
//! each hierarchy, an arbitration rule turns the answer pair into a label
//! or an uncertain state, the candidate space is conditioned on the
//! confident labels, and a statistical criterion resolves what remains.

pub mod bench;
pub mod criteria;
pub mod error;
pub mod evidence;
pub mod fit;
pub mod model_space;
pub mod pipeline;
pub mod rcrus;
pub mod remote;
pub mod sim;
pub mod special;
pub mod trajectory;

pub use error::{Error, Result};
