//! Non-neural core of surround-view fisheye 3D object detection.
//!
//! * [`geometry`]: Kannala-Brandt and pinhole cameras, viewing-sphere
//!   parameterizations and rigid transforms.
//! * [`warp`]: equirectangular, cylindrical and perspective sampling grids and
//!   grid sampling of feature maps and images.
//! * [`frustum`]: spherical depth shells, the depth-distribution lift and
//!   sum pooling onto a bird's-eye-view grid.
//! * [`boxes`]: oriented 3D boxes, image-plane footprints and TP error terms.
//! * [`evaluation`]: center-distance AP, TP errors and the composite
//!   fisheye detection score.
//! * [`analysis`]: pixel-compression sampling and LOWESS smoothing.
//! * [`data`]: dataset schema, readers/writers and the synthetic scene
//!   generator.

pub mod geometry;
pub mod analysis;
pub mod boxes;
pub mod data;
pub mod evaluation;
pub mod frustum;
pub mod warp;
