use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::device::{apply_with_filter, DeviceFilter};
use super::{render_event, DeviceProfile, EventClass};
use crate::dsp::{
    log_mel, mel_filterbank, segment_bounds, stft, MelFilterbank, Spectrogram, Waveform, HOP, N_FFT, N_MELS,
    SAMPLE_RATE, SEGMENT_MS,
};
use crate::rng::{derive_seed, tag};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub n_events: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_events: 400,
            duration_s: 1.5,
            sample_rate: SAMPLE_RATE,
            seed: 0,
        }
    }
}

/// Where a segment came from: enough to re-render its waveform exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentOrigin {
    pub event: u32,
    pub offset: usize,
    pub active_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub segment_id: u32,
    pub class_id: usize,
    pub device: String,
    pub spectrogram: Spectrogram,
    pub origin: SegmentOrigin,
}

/// Entries plus the counterpart index `segment_id → device → entry`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
    devices: Vec<String>,
    index: BTreeMap<u32, BTreeMap<String, usize>>,
}

impl Corpus {
    pub fn from_entries(devices: Vec<String>, entries: Vec<CorpusEntry>) -> Self {
        let mut index: BTreeMap<u32, BTreeMap<String, usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            index.entry(e.segment_id).or_default().insert(e.device.clone(), i);
        }
        Self {
            entries,
            devices,
            index,
        }
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<CorpusEntry> {
        self.entries
    }

    pub fn devices(&self) -> &[String] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.index.keys().copied()
    }

    pub fn n_segments(&self) -> usize {
        self.index.len()
    }

    pub fn counterpart(&self, segment_id: u32, device: &str) -> Option<&CorpusEntry> {
        self.index
            .get(&segment_id)
            .and_then(|m| m.get(device))
            .map(|&i| &self.entries[i])
    }

    /// Entries recorded on `device`, in segment order.
    pub fn by_device<'a>(&'a self, device: &'a str) -> impl Iterator<Item = &'a CorpusEntry> + 'a {
        self.index
            .values()
            .filter_map(move |m| m.get(device).map(|&i| &self.entries[i]))
    }

    pub fn has_device(&self, device: &str) -> bool {
        self.devices.iter().any(|d| d == device)
    }

    /// Every segment present on every device.
    pub fn is_counterpart_complete(&self) -> bool {
        self.index
            .values()
            .all(|m| m.len() == self.devices.len() && self.devices.iter().all(|d| m.contains_key(d)))
    }

    /// Class id of each segment.
    pub fn segment_classes(&self) -> BTreeMap<u32, usize> {
        self.index
            .iter()
            .map(|(&id, m)| (id, self.entries[*m.values().next().expect("nonempty")].class_id))
            .collect()
    }

    /// The sub-corpus holding exactly the given segment ids.
    pub fn subset(&self, keep: impl Fn(u32) -> bool) -> Corpus {
        let entries = self
            .index
            .iter()
            .filter(|(&id, _)| keep(id))
            .flat_map(|(_, m)| m.values().map(|&i| self.entries[i].clone()))
            .collect();
        Corpus::from_entries(self.devices.clone(), entries)
    }

    /// Restricted to the named devices.
    pub fn with_devices(&self, devices: &[&str]) -> Corpus {
        let entries = self
            .entries
            .iter()
            .filter(|e| devices.contains(&e.device.as_str()))
            .cloned()
            .collect();
        Corpus::from_entries(devices.iter().map(|d| String::from(*d)).collect(), entries)
    }

    /// Concatenation of corpora over the same device set.
    pub fn union(parts: &[&Corpus]) -> Corpus {
        let devices = parts.first().map(|c| c.devices.clone()).unwrap_or_default();
        let entries = parts.iter().flat_map(|c| c.entries.iter().cloned()).collect();
        let mut merged = Corpus::from_entries(devices, entries);
        merged.sort();
        merged
    }

    fn sort(&mut self) {
        let order: BTreeMap<&str, usize> = self.devices.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let mut entries = core::mem::take(&mut self.entries);
        entries.sort_by_key(|e| (e.segment_id, order.get(e.device.as_str()).copied()));
        *self = Corpus::from_entries(core::mem::take(&mut self.devices), entries);
    }
}

fn event_seed(seed: u64, event: u32) -> u64 {
    derive_seed(seed, &[tag("event"), u64::from(event)])
}

fn device_seed(seed: u64, event: u32, device: &str) -> u64 {
    derive_seed(seed, &[tag("device"), u64::from(event), tag(device)])
}

fn feature_of(w: &Waveform, fb: &MelFilterbank) -> Result<Spectrogram> {
    log_mel(&stft(w, N_FFT, HOP)?, fb)
}

/// Renders every event once, records it on every device, segments each
/// recording with identical offsets and extracts log-mel features.
pub fn build_corpus(classes: &[EventClass], devices: &[DeviceProfile], cfg: &CorpusConfig) -> Result<Corpus> {
    if classes.len() < 2 {
        return Err(Error::arg("need at least two event classes"));
    }
    if cfg.n_events < 10 * classes.len() {
        return Err(Error::arg(format!(
            "{} events is fewer than 10 per class for {} classes",
            cfg.n_events,
            classes.len()
        )));
    }
    if devices.is_empty() {
        return Err(Error::arg("need at least one device"));
    }
    let filters = devices
        .iter()
        .map(|d| DeviceFilter::design(d, cfg.sample_rate))
        .collect::<Result<Vec<_>>>()?;
    let fb = mel_filterbank(cfg.sample_rate, N_FFT, N_MELS)?;
    let mut entries = Vec::new();
    let mut next_id = 0u32;
    for event in 0..cfg.n_events as u32 {
        let class = &classes[event as usize % classes.len()];
        let rendered = render_event(class, cfg.duration_s, cfg.sample_rate, event_seed(cfg.seed, event))?;
        let (starts, window) = segment_bounds(rendered.waveform.len(), cfg.sample_rate, SEGMENT_MS, 0.5)?;
        let ids: Vec<u32> = (0..starts.len() as u32).map(|j| next_id + j).collect();
        next_id += starts.len() as u32;
        for (profile, filter) in devices.iter().zip(&filters) {
            let recorded = apply_with_filter(
                &rendered.waveform,
                profile,
                filter,
                device_seed(cfg.seed, event, &profile.name),
            )?;
            for (&start, &segment_id) in starts.iter().zip(&ids) {
                let seg = Waveform::new(recorded.samples()[start..start + window].to_vec(), cfg.sample_rate)?;
                entries.push(CorpusEntry {
                    segment_id,
                    class_id: class.id,
                    device: profile.name.clone(),
                    spectrogram: feature_of(&seg, &fb)?,
                    origin: SegmentOrigin {
                        event,
                        offset: start,
                        active_fraction: rendered.active_fraction(start, window),
                    },
                });
            }
        }
    }
    let mut corpus = Corpus::from_entries(devices.iter().map(|d| d.name.clone()).collect(), entries);
    corpus.sort();
    Ok(corpus)
}

/// Re-renders the waveform behind a corpus entry, bit-identical to the one
/// its spectrogram was computed from.
pub fn render_segment(
    classes: &[EventClass],
    device: &DeviceProfile,
    cfg: &CorpusConfig,
    origin: &SegmentOrigin,
) -> Result<Waveform> {
    let class = &classes[origin.event as usize % classes.len()];
    let rendered = render_event(
        class,
        cfg.duration_s,
        cfg.sample_rate,
        event_seed(cfg.seed, origin.event),
    )?;
    let filter = DeviceFilter::design(device, cfg.sample_rate)?;
    let recorded = apply_with_filter(
        &rendered.waveform,
        device,
        &filter,
        device_seed(cfg.seed, origin.event, &device.name),
    )?;
    let window = crate::dsp::window_length(SEGMENT_MS, cfg.sample_rate);
    Waveform::new(
        recorded.samples()[origin.offset..origin.offset + window].to_vec(),
        cfg.sample_rate,
    )
}

/// Whether a segment with the given active fraction survives filtering.
pub fn keep_segment(active_fraction: f64, sparse: bool, sparse_thresh: f64, dense_thresh: f64) -> bool {
    let thresh = if sparse { sparse_thresh } else { dense_thresh };
    active_fraction >= thresh
}

/// Drops segments whose event activity falls below the threshold for their
/// class category. Decisions are per segment id, so counterparts survive
/// or vanish together.
pub fn activity_filter(corpus: &Corpus, sparse_classes: &[usize], sparse_thresh: f64, dense_thresh: f64) -> Corpus {
    let keep: BTreeMap<u32, bool> = corpus
        .entries()
        .iter()
        .map(|e| {
            let sparse = sparse_classes.contains(&e.class_id);
            (
                e.segment_id,
                keep_segment(e.origin.active_fraction, sparse, sparse_thresh, dense_thresh),
            )
        })
        .collect();
    corpus.subset(|id| keep[&id])
}
