//! Reduced-order thermal modelling of a liquid-cooled lithium-ion cell.
//!
//! The crate contains a finite-volume reference plant ([`plant`]), an
//! equivalent-circuit electrical model ([`ecm`]), step-response
//! identification of Foster-network LTI models ([`rom`]), a gridded linear
//! parameter-varying model scheduled on heat generation, coolant flow and
//! inlet temperature ([`lpv`]), and the scenario runner used to compare them
//! ([`harness`]).

// Negated comparisons are used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ecm;
pub mod error;
pub mod harness;
pub mod lpv;
pub mod plant;
pub mod profile;
pub mod rom;
pub mod table;
pub mod trajectory;
pub mod units;

pub use error::{Error, Result};
pub use plant::SchedulePoint;
pub use profile::{DriveProfiles, Profile};
pub use trajectory::SimulationResult;

use sha2::{Digest, Sha256};

/// SHA-256 (hex) of the JSON encoding of `value`.
pub fn hash_json<T: serde::Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialise");
    hex::encode(Sha256::digest(&bytes))
}
