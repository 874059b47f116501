//! Synthetic EEG emotion recognition, end to end.
//!
//! A simulated 8-channel acquisition board ([`sim`]) emits 24-bit frames
//! ([`codec`]) that travel over UDP ([`net`]), get cleaned and turned into
//! time-frequency features ([`dsp`]), and are classified by a small residual
//! network with attention ([`nn`]). [`harness`] runs cross-validation and the
//! architecture ablation; [`cli`] exposes each stage as a subcommand.

pub mod cli;
pub mod codec;
pub mod config;
pub mod dsp;
pub mod harness;
pub mod kv;
pub mod net;
pub mod nn;
pub mod signal;
pub mod sim;
