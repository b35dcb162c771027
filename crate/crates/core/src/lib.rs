//! Microphone-conversion toolkit for device-robust sound event classification.
//!
//! The crate is `no_std` compatible (it needs `alloc`); the default `std`
//! feature only switches math and GEMM back-ends to their std variants.
//!
//! Modules, bottom-up:
//!
//! - [`dsp`]: waveforms, STFT, mel filterbank, log-mel spectrograms,
//!   segmentation and Welch spectra.
//! - [`device_sim`]: synthetic sound events, parametric recording devices and
//!   the counterpart-aligned corpus built from them.
//! - [`tensor`]: a small reverse-mode autodiff engine with the layers and
//!   optimizers the networks need.
//! - [`cyclegan`]: the conversion networks, their losses and training loop.
//! - [`augment`]: augmentation baselines plus conversion-based augmentation.
//! - [`sec`]: the event classifier, its training loop and the evaluation
//!   protocol.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod cyclegan;
pub mod device_sim;
pub mod dsp;
pub mod error;
pub mod rng;
pub mod sec;
pub mod tensor;

pub use error::{Error, Result};
