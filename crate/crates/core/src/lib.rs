//! Passive acoustic person detection: localize a moving person from the
//! incidental sounds they make, using a small microphone array.
//!
//! The crate covers the whole pipeline: clip handling and RMS normalization
//! ([`audio`]), spectrograms and empty-room background subtraction
//! ([`spectro`]), empty-room augmentation ([`augment`]), array geometry and
//! the cyclical azimuth codec ([`geometry`]), GCC-PHAT baselines ([`doa`]),
//! the multi-task detector ([`detector`]), a synthetic scene simulator
//! ([`sim`]) and the evaluation / tracking harness ([`harness`]).

pub mod audio;
pub mod augment;
pub mod detector;
pub mod doa;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod manifest;
pub mod sim;
pub mod spectro;

pub use error::{Error, Result};
