//! Learning-rate control pipeline.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`signal`] turns raw per-epoch training history into fixed-size
//!   normalized feature windows.
//! - [`net`] is the from-scratch controller classifier (1D conv feature
//!   extractor, two recurrent memory layers, dense head) with hand-derived
//!   gradients, an Adam optimizer, and weighted-accuracy model selection.
//! - [`trainee`] is a zoo of desk-scale training tasks (quadratic bowl,
//!   logistic regression, small MLP) with exact checkpointing, used both to
//!   generate labeled data and to benchmark schedules.
//! - [`datagen`] runs the branch-and-label protocol over trainees and
//!   persists the labeled dataset.
//! - [`sched`] holds the comparison scheduler suite (constant, cosine decay,
//!   cyclic cosine, exponential decay) and the controller-driven schedule.
//! - [`bench`] is the experiment grid runner with table and plot emitters.

pub mod bench;
pub mod datagen;
pub mod decision;
mod error;
pub mod net;
pub mod sched;
pub mod seeds;
pub mod signal;
pub mod trainee;

pub use decision::LrDecision;
pub use error::{Error, Result};
pub use signal::{FeatureWindow, HistoryRecord, WINDOW_LEN};
