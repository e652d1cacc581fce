//! Restoration of images corrupted by block losses, using the DCT sparsity
//! pattern of the transmitted image as side information.
//!
//! The transmitter sparsifies an image by zeroing its smallest global DCT
//! coefficients. The receiver alternates between the spatial constraint (known
//! pixels keep their received values) and the transform constraint (zeroed
//! coefficients stay zero) until the data projector stops changing the known
//! pixels. Around that core sit:
//!
//! * [`quality`]: PSNR/MSE and two no-reference PSNR estimators,
//! * [`sidechannel`]: transport of the pattern inside the pixel LSBs
//!   (run-length coding, LDPC over the erasure channel, interleaving),
//! * [`sweep`]: the benchmark harness producing CSV rows.

pub mod error;
pub mod image;
pub mod par;
pub mod pnm;
pub mod quality;
pub mod restore;
pub mod sidechannel;
pub mod sweep;
pub mod transform;

pub use error::{Error, Result};
pub use image::{apply_mask, generate_block_loss_mask, BlockLossSpec, Image, SamplingMask};
pub use quality::{mse, psnr};
pub use restore::{restore, RestorationOptions, RestorationResult};
pub use transform::{dct2, idct2, make_sparsity_pattern, sparsity_project, CoefficientGrid, SparsityPattern};
