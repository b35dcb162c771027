//! Synthetic stand-in for a multi-device recording campaign: labeled sound
//! events, parametric recording devices with known transfer characteristics,
//! and a counterpart-aligned corpus split for training and validation.

mod corpus;
mod device;
mod events;
mod profile;
mod split;

pub use corpus::{
    activity_filter, build_corpus, keep_segment, render_segment, Corpus, CorpusConfig, CorpusEntry, SegmentOrigin,
};
pub use device::{apply_device, DeviceFilter, FIR_TAPS};
pub use events::{
    default_classes, render_event, spectral_flatness, synth_event, EventClass, EventKind, RenderedEvent,
    ACTIVITY_THRESHOLD,
};
pub use profile::{analytic_mel_response, default_suite, flat_profile, shelf_profile, DeviceProfile, GainPoint};
pub use split::{split_corpus, SplitSpec};
