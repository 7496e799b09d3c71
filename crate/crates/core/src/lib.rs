//! Stereo reconstruction through a flat underwater port.
//!
//! Rays from each camera are refracted twice on their way into the water, so
//! projection, epipolar search and triangulation all go through an explicit
//! model of the glass. [`projection`] holds the forward and backward maps,
//! [`search_domain`] turns them into per-pixel search regions, [`matcher`]
//! does dense correlation matching inside those regions and [`calibration`]
//! refines the housing from board observations. [`simulator`] renders test
//! scenes with exact ground truth and [`io`] reads and writes the file
//! formats the `flatport` binary uses.
//!
//! ```
//! use flatport::optics::{CameraId, Pixel};
//! use flatport::projection::{forward_project, point_at_depth};
//!
//! let rig = flatport::rigs::standard();
//! let px = Pixel::new(40.0, 200.0);
//! let p = point_at_depth(&rig, CameraId::Right, &px, 3.0).unwrap();
//! let back = forward_project(&rig, CameraId::Right, &p).unwrap();
//! assert!((back.pixel - px).norm() < 1e-6);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod optics;
pub mod projection;
pub mod rigs;
pub mod search_domain;
pub mod image;
pub mod simulator;
pub mod matcher;
pub mod calibration;
pub mod io;
pub mod cli;

// Book chapters, compiled and run as doctests so the guide cannot drift.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/refraction.md")]
    mod refraction {}
    #[doc = include_str!("../../../book/src/cameras.md")]
    mod cameras {}
    #[doc = include_str!("../../../book/src/projection.md")]
    mod projection {}
    #[doc = include_str!("../../../book/src/search_domain.md")]
    mod search_domain {}
    #[doc = include_str!("../../../book/src/matching.md")]
    mod matching {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
