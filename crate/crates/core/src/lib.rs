//! Freehand 3D carotid ultrasound: pose regularization, volume
//! reconstruction, stenosis quantification and evaluation metrics.
//!
//! The pipeline runs in this order:
//!
//! 1. [`regularize::rerank`] restores sweep order for frames captured during
//!    backward probe motion, then [`regularize::cppa_denoise`] smooths the
//!    tracked poses with a Huber total-variation prior on SE(3).
//! 2. [`recon::fdp_reconstruct`] forward-maps every pixel into a voxel grid,
//!    and [`recon::reconstruct_mask_volume`] does the same for wall/lumen
//!    label masks.
//! 3. [`analysis`] extracts per-slice stenosis, wall thickness, plaque runs
//!    and the scan-level diagnosis.
//!
//! [`phantom`] renders analytic tube sweeps used as ground truth and
//! [`metrics`] holds the segmentation and diagnostic scores.

pub mod analysis;
pub mod error;
pub mod metrics;
pub mod phantom;
pub mod pose;
pub mod raster;
pub mod recon;
pub mod regularize;

pub use error::{Error, Result};
