//! Live, human-steerable MLP training engine.
//!
//! The crate is organised around the pieces a steering front-end needs:
//!
//! - [`nn`]: a two-hidden-layer ReLU network with softmax output, its
//!   cross-entropy gradients, SGD with momentum and structural edits.
//! - [`layout`]: a 3D force-directed graph mirroring the network, whose
//!   attraction is driven by the live (normalised) weights.
//! - [`sonify`]: mapping of accuracy, loss and hyperparameters to
//!   oscillator pitch, channel routing and offline WAV rendering.
//! - [`session`]: the pause / edit / resume state machine and the
//!   deterministic training loop that ties the others together.
//! - [`protocol`]: the framed JSON wire protocol and the TCP/WebSocket
//!   server that exposes a session to remote clients.

pub mod error;
pub mod layout;
pub mod nn;
pub mod protocol;
pub mod session;
pub mod sonify;

pub use error::{Error, Result};
