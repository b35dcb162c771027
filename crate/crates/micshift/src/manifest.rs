//! Corpus on disk: `manifest.jsonl` with one record per entry, an MCSG file
//! per spectrogram, and `corpus.json` with the device list and provenance.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use micshift_core::device_sim::{Corpus, CorpusEntry, SegmentOrigin};
use serde::{Deserialize, Serialize};

use crate::config::Provenance;
use crate::error::{Error, Result};
use crate::mcsg::{load_spectrogram, save_spectrogram};

pub const MANIFEST: &str = "manifest.jsonl";
pub const CORPUS_META: &str = "corpus.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    McTrain,
    SecTrain,
    Val,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::McTrain, Subset::SecTrain, Subset::Val];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub segment_id: u32,
    pub class_id: usize,
    pub device: String,
    /// Relative to the manifest's directory.
    pub spectrogram_path: PathBuf,
    pub subset: Subset,
    pub origin: SegmentOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusMeta {
    pub provenance: Provenance,
    pub devices: Vec<String>,
    /// Segment counts per subset, in [`Subset::ALL`] order.
    pub segments: [usize; 3],
}

/// The three disjoint subsets of a synthesized corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub mc_train: Corpus,
    pub sec_train: Corpus,
    pub val: Corpus,
}

impl Splits {
    pub fn get(&self, s: Subset) -> &Corpus {
        match s {
            Subset::McTrain => &self.mc_train,
            Subset::SecTrain => &self.sec_train,
            Subset::Val => &self.val,
        }
    }
}

fn rel_path(e: &CorpusEntry) -> PathBuf {
    PathBuf::from("spec")
        .join(&e.device)
        .join(format!("{:06}.mcsg", e.segment_id))
}

pub fn write_corpus(dir: &Path, splits: &Splits, provenance: &Provenance) -> Result<()> {
    let mut devices = splits.mc_train.devices().to_vec();
    if devices.is_empty() {
        devices = splits.val.devices().to_vec();
    }
    for d in &devices {
        let p = dir.join("spec").join(d);
        fs::create_dir_all(&p).map_err(Error::io(&p))?;
    }
    let mpath = dir.join(MANIFEST);
    let mut w = BufWriter::new(File::create(&mpath).map_err(Error::io(&mpath))?);
    for subset in Subset::ALL {
        for e in splits.get(subset).entries() {
            let rel = rel_path(e);
            save_spectrogram(&dir.join(&rel), &e.spectrogram)?;
            let rec = ManifestRecord {
                segment_id: e.segment_id,
                class_id: e.class_id,
                device: e.device.clone(),
                spectrogram_path: rel,
                subset,
                origin: e.origin,
            };
            serde_json::to_writer(&mut w, &rec).map_err(Error::json(&mpath))?;
            w.write_all(b"\n").map_err(Error::io(&mpath))?;
        }
    }
    w.flush().map_err(Error::io(&mpath))?;
    let meta = CorpusMeta {
        provenance: provenance.clone(),
        devices,
        segments: Subset::ALL.map(|s| splits.get(s).n_segments()),
    };
    write_json(&dir.join(CORPUS_META), &meta)
}

pub fn read_corpus_meta(dir: &Path) -> Result<CorpusMeta> {
    read_json(&dir.join(CORPUS_META))
}

pub fn read_corpus(dir: &Path) -> Result<(Splits, CorpusMeta)> {
    let meta = read_corpus_meta(dir)?;
    let mpath = dir.join(MANIFEST);
    let f = File::open(&mpath).map_err(Error::io(&mpath))?;
    let mut parts: [Vec<CorpusEntry>; 3] = Default::default();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(Error::io(&mpath))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(Error::json(&mpath))?;
        if !meta.devices.contains(&rec.device) {
            return Err(Error::format("manifest", format!("unknown device {:?}", rec.device)));
        }
        let spectrogram = load_spectrogram(&dir.join(&rec.spectrogram_path))?;
        parts[rec.subset as usize].push(CorpusEntry {
            segment_id: rec.segment_id,
            class_id: rec.class_id,
            device: rec.device,
            spectrogram,
            origin: rec.origin,
        });
    }
    let [a, b, c] = parts.map(|p| Corpus::from_entries(meta.devices.clone(), p));
    Ok((
        Splits {
            mc_train: a,
            sec_train: b,
            val: c,
        },
        meta,
    ))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::json(path))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}
