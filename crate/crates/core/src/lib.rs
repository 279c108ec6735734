//! Localizing an object of uncertain pose by touch.
//!
//! The robot moves on a grid and only senses whether a motion ended in
//! contact. Starting from a finite set of candidate object poses, the
//! planners here compute policies that shrink the set to a single pose at
//! minimum expected travel:
//!
//! * [`solver`]: RTDP-Bel with pluggable, optionally inflated heuristics;
//! * [`experience`]: the experience heuristic, which reuses earlier policies
//!   to guide RTDP-Bel (E-RTDP-Bel);
//! * [`preprocess`]: builds a policy database over a family of uncertainty
//!   sets, reusing each solution as experience for the next;
//! * [`tbl`]: a myopic information-gain baseline;
//! * [`bench`]: an exact oracle, scenario generation and benchmark reports.

pub mod belief;
pub mod bench;
pub mod codec;
pub mod error;
pub mod experience;
pub mod policy;
pub mod preprocess;
pub mod scenario;
pub mod solver;
pub mod tbl;
pub mod world;

pub use error::{Error, Result};
