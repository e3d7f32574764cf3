//! Image-to-print pipeline: recover a surface from shaded images, turn it into
//! a watertight solid, repair overhangs with a level-set flow and slice it into
//! eikonal-offset toolpaths.

// `!(x > 0.0)` is the NaN-rejecting form used for every precondition, and
// index loops walk several parallel node arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod field;
pub mod geom;
pub mod levelset;
pub mod mesh;
pub mod overhang;
pub mod photostereo;
pub mod pipeline;
pub mod reflectance;
pub mod sdf;
pub mod sfs;
pub mod slicer;

pub use error::{Error, Result};
