//! Variational autoencoder on top of the CFEL front end, its losses and
//! checkpoints.

mod arch;
mod checkpoint;
mod gradcheck;
mod loss;
mod model;

pub use arch::{AntennaMode, ArchConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, CfelTables, CheckpointManifest, ParamEntry, CHECKPOINT_VERSION};
pub use gradcheck::total_loss_grad_check;
pub use loss::{da_loss, focal_loss, kl_loss, LossBreakdown, LossWeights, PROB_EPS};
pub use model::{bound_logvar, build_model, reparameterize, Model, Outputs, LOGVAR_MAX, LOGVAR_MIN};
