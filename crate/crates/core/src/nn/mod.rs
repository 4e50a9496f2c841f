//! Conditional mixture-of-Gaussians density network with hand-written
//! gradients, and the Adam optimizer used to train it.

pub mod adam;
pub mod mdn;
pub mod mlp;
pub mod mog;

pub use adam::AdamState;
pub use mdn::{Mdn, MdnArchitecture, MdnCheckpoint, MdnWorkspace};
pub use mlp::{Mlp, MlpWorkspace};
pub use mog::MogOutput;
