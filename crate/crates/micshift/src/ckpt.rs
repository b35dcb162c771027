//! Checkpoint bundles: magic `MCKP`, version u16, section count u32, then
//! per section a tag and either a tensor list or a JSON blob. A tensor is
//! {name length u16 + bytes, rank u32, dims u32…, f32 data}. All integers and
//! floats are little-endian.
//!
//! Conversion models use sections `F`, `G`, `D_A`, `D_B` and `opt` (Adam
//! moments named `<net>/m/<param>` and `<net>/v/<param>`); classifiers use
//! `C` and `bn`. Both carry a `meta` JSON section with provenance and enough
//! configuration to rebuild the model skeleton.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use micshift_core::cyclegan::{CycleGanModel, DomainNorm, McOptim, McTrainConfig};
use micshift_core::rng::rng_from;
use micshift_core::sec::{BnStats, Classifier, ClassifierCfg};
use micshift_core::tensor::{Adam, AdamConfig, ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::Provenance;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MCKP";
const VERSION: u16 = 1;
const KIND_TENSORS: u8 = 0;
const KIND_JSON: u8 = 1;
const MAX_RANK: u32 = 8;
const MAX_NUMEL: u64 = 1 << 28;

pub type NamedTensors = Vec<(String, Tensor<f32>)>;

#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    Tensors(NamedTensors),
    Json(serde_json::Value),
}

/// Ordered, uniquely tagged sections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub sections: Vec<(String, Section)>,
}

impl Bundle {
    pub fn push(&mut self, tag: &str, s: Section) {
        self.sections.push((tag.to_string(), s));
    }

    pub fn section(&self, tag: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::format("MCKP", format!("missing section {tag:?}")))
    }

    pub fn tensors(&self, tag: &str) -> Result<&NamedTensors> {
        match self.section(tag)? {
            Section::Tensors(t) => Ok(t),
            Section::Json(_) => Err(Error::format("MCKP", format!("section {tag:?} is not a tensor list"))),
        }
    }

    pub fn json(&self, tag: &str) -> Result<&serde_json::Value> {
        match self.section(tag)? {
            Section::Json(v) => Ok(v),
            Section::Tensors(_) => Err(Error::format("MCKP", format!("section {tag:?} is not JSON"))),
        }
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.sections.len() as u32).to_le_bytes())?;
        for (tag, s) in &self.sections {
            write_str(&mut w, tag)?;
            match s {
                Section::Tensors(ts) => {
                    w.write_all(&[KIND_TENSORS])?;
                    w.write_all(&(ts.len() as u32).to_le_bytes())?;
                    for (name, t) in ts {
                        write_str(&mut w, name)?;
                        w.write_all(&(t.rank() as u32).to_le_bytes())?;
                        for &d in t.shape() {
                            w.write_all(&(d as u32).to_le_bytes())?;
                        }
                        for v in t.data() {
                            w.write_all(&v.to_le_bytes())?;
                        }
                    }
                }
                Section::Json(v) => {
                    w.write_all(&[KIND_JSON])?;
                    let bytes = serde_json::to_vec(v).map_err(std::io::Error::other)?;
                    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
                    w.write_all(&bytes)?;
                }
            }
        }
        Ok(())
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        if &take::<4>(&mut r)? != MAGIC {
            return Err(Error::format("MCKP", "bad magic"));
        }
        let version = u16::from_le_bytes(take(&mut r)?);
        if version != VERSION {
            return Err(Error::format("MCKP", format!("unsupported version {version}")));
        }
        let n = u32::from_le_bytes(take(&mut r)?);
        let mut b = Bundle::default();
        for _ in 0..n {
            let tag = read_str(&mut r)?;
            if b.sections.iter().any(|(t, _)| *t == tag) {
                return Err(Error::format("MCKP", format!("duplicate section {tag:?}")));
            }
            let [kind] = take::<1>(&mut r)?;
            let s = match kind {
                KIND_TENSORS => {
                    let count = u32::from_le_bytes(take(&mut r)?);
                    let mut ts = Vec::new();
                    for _ in 0..count {
                        ts.push(read_tensor(&mut r)?);
                    }
                    Section::Tensors(ts)
                }
                KIND_JSON => {
                    let len = u32::from_le_bytes(take(&mut r)?) as usize;
                    let bytes = take_vec(&mut r, len)?;
                    Section::Json(serde_json::from_slice(&bytes).map_err(|e| Error::format("MCKP", e.to_string()))?)
                }
                k => return Err(Error::format("MCKP", format!("unknown section kind {k}"))),
            };
            b.sections.push((tag, s));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::format("MCKP", e.to_string()))? != 0 {
            return Err(Error::format("MCKP", "trailing bytes"));
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).map_err(Error::io(path))?);
        self.write(&mut w).map_err(Error::io(path))?;
        w.flush().map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path).map_err(Error::io(path))?))
    }
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| std::io::Error::other("name longer than 65535 bytes"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::format("MCKP", format!("truncated: {e}")))?;
    Ok(b)
}

fn take_vec(r: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)
        .map_err(|e| Error::format("MCKP", format!("truncated: {e}")))?;
    Ok(b)
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = u16::from_le_bytes(take(r)?) as usize;
    String::from_utf8(take_vec(r, len)?).map_err(|e| Error::format("MCKP", e.to_string()))
}

fn read_tensor(r: &mut impl Read) -> Result<(String, Tensor<f32>)> {
    let name = read_str(r)?;
    let rank = u32::from_le_bytes(take(r)?);
    if rank > MAX_RANK {
        return Err(Error::format("MCKP", format!("{name}: rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut numel = 1u64;
    for _ in 0..rank {
        let d = u32::from_le_bytes(take(r)?);
        numel = numel.saturating_mul(d as u64);
        shape.push(d as usize);
    }
    if numel > MAX_NUMEL {
        return Err(Error::format("MCKP", format!("{name}: {numel} elements")));
    }
    let raw = take_vec(r, numel as usize * 4)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((name, Tensor::new(&shape, data)?))
}

fn params_section(p: &ParamSet<f32>) -> Section {
    Section::Tensors(p.iter().map(|p| (p.name.clone(), p.value.clone())).collect())
}

/// Overwrites `into` from a tensor list holding exactly its names and shapes.
fn load_params(into: &mut ParamSet<f32>, ts: &NamedTensors) -> Result<()> {
    let mut src = ParamSet::new();
    for (name, t) in ts {
        src.add(name.clone(), t.clone(), true)?;
    }
    Ok(into.load_from(&src)?)
}

fn meta_of<T: for<'de> Deserialize<'de>>(b: &Bundle) -> Result<T> {
    serde_json::from_value(b.json("meta")?.clone()).map_err(|e| Error::format("MCKP", format!("meta: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct McMeta {
    kind: String,
    provenance: Provenance,
    epoch: usize,
    config: McTrainConfig,
    device_a: String,
    device_b: String,
    norm: DomainNorm,
    n_mels: usize,
    adam: AdamConfig,
    /// Adam step counts for F, G, D_A, D_B.
    steps: [u64; 4],
}

/// A conversion model with its optimizer state, as saved after `epoch`.
#[derive(Debug, Clone, PartialEq)]
pub struct McCheckpoint {
    pub model: CycleGanModel,
    pub optim: McOptim,
    pub config: McTrainConfig,
    pub epoch: usize,
    pub provenance: Provenance,
}

const NETS: [&str; 4] = ["F", "G", "D_A", "D_B"];

fn nets(m: &CycleGanModel) -> [&ParamSet<f32>; 4] {
    [&m.f.params, &m.g.params, &m.d_a.params, &m.d_b.params]
}

fn optims(o: &McOptim) -> [&Adam<f32>; 4] {
    [&o.f, &o.g, &o.d_a, &o.d_b]
}

impl McCheckpoint {
    pub fn to_bundle(&self) -> Result<Bundle> {
        let mut b = Bundle::default();
        let mut opt = Vec::new();
        for ((tag, p), o) in NETS.iter().zip(nets(&self.model)).zip(optims(&self.optim)) {
            b.push(tag, params_section(p));
            let (m, v) = o.moments();
            for (param, (mi, vi)) in p.iter().zip(m.iter().zip(v)) {
                opt.push((format!("{tag}/m/{}", param.name), mi.clone()));
                opt.push((format!("{tag}/v/{}", param.name), vi.clone()));
            }
        }
        b.push("opt", Section::Tensors(opt));
        let meta = McMeta {
            kind: "cyclegan".into(),
            provenance: self.provenance.clone(),
            epoch: self.epoch,
            config: self.config.clone(),
            device_a: self.model.device_a.clone(),
            device_b: self.model.device_b.clone(),
            norm: self.model.norm,
            n_mels: self.model.n_mels,
            adam: self.optim.f.config,
            steps: optims(&self.optim).map(|o| o.step_count()),
        };
        b.push(
            "meta",
            Section::Json(serde_json::to_value(meta).expect("meta serializes")),
        );
        Ok(b)
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        let meta: McMeta = meta_of(b)?;
        if meta.kind != "cyclegan" {
            return Err(Error::format(
                "MCKP",
                format!("expected a cyclegan bundle, found {:?}", meta.kind),
            ));
        }
        let mut model = CycleGanModel::new(&meta.config, (&meta.device_a, &meta.device_b), meta.norm, meta.n_mels)?;
        for (tag, p) in NETS.iter().zip([
            &mut model.f.params,
            &mut model.g.params,
            &mut model.d_a.params,
            &mut model.d_b.params,
        ]) {
            load_params(p, b.tensors(tag)?)?;
        }
        let opt = b.tensors("opt")?;
        let lookup = |name: &str| {
            opt.iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::format("MCKP", format!("missing optimizer tensor {name:?}")))
        };
        let mut adams = Vec::with_capacity(4);
        for ((tag, p), steps) in NETS.iter().zip(nets(&model)).zip(meta.steps) {
            let m = p
                .iter()
                .map(|q| lookup(&format!("{tag}/m/{}", q.name)))
                .collect::<Result<Vec<_>>>()?;
            let v = p
                .iter()
                .map(|q| lookup(&format!("{tag}/v/{}", q.name)))
                .collect::<Result<Vec<_>>>()?;
            adams.push(Adam::from_state(meta.adam, p, m, v, steps)?);
        }
        let [f, g, d_a, d_b]: [Adam<f32>; 4] = adams.try_into().expect("four optimizers");
        Ok(Self {
            model,
            optim: McOptim { f, g, d_a, d_b },
            config: meta.config,
            epoch: meta.epoch,
            provenance: meta.provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_bundle()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bundle(&Bundle::load(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierMeta {
    kind: String,
    provenance: Provenance,
    condition: String,
    config: ClassifierCfg,
}

/// A trained event classifier and the condition it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierCheckpoint {
    pub model: Classifier,
    pub condition: String,
    pub provenance: Provenance,
}

impl ClassifierCheckpoint {
    pub fn to_bundle(&self) -> Bundle {
        let mut b = Bundle::default();
        b.push("C", params_section(&self.model.params));
        let mut bn = Vec::new();
        for (i, s) in self.model.bn.iter().enumerate() {
            bn.push((
                format!("bn{i}/mean"),
                Tensor::new(&[s.mean.len()], s.mean.clone()).expect("1-d"),
            ));
            bn.push((
                format!("bn{i}/var"),
                Tensor::new(&[s.var.len()], s.var.clone()).expect("1-d"),
            ));
        }
        b.push("bn", Section::Tensors(bn));
        let meta = ClassifierMeta {
            kind: "classifier".into(),
            provenance: self.provenance.clone(),
            condition: self.condition.clone(),
            config: self.model.cfg.clone(),
        };
        b.push(
            "meta",
            Section::Json(serde_json::to_value(meta).expect("meta serializes")),
        );
        b
    }

    pub fn from_bundle(b: &Bundle) -> Result<Self> {
        let meta: ClassifierMeta = meta_of(b)?;
        if meta.kind != "classifier" {
            return Err(Error::format(
                "MCKP",
                format!("expected a classifier bundle, found {:?}", meta.kind),
            ));
        }
        // Initial values are overwritten; the seed only shapes the skeleton.
        let mut model = Classifier::new(&meta.config, &mut rng_from(0))?;
        load_params(&mut model.params, b.tensors("C")?)?;
        let bn = b.tensors("bn")?;
        if bn.len() != 2 * model.bn.len() {
            return Err(Error::format(
                "MCKP",
                format!("{} batch-norm tensors, expected {}", bn.len(), 2 * model.bn.len()),
            ));
        }
        for (i, (s, pair)) in model.bn.iter_mut().zip(bn.chunks(2)).enumerate() {
            let (mean, var) = (&pair[0], &pair[1]);
            if mean.0 != format!("bn{i}/mean")
                || var.0 != format!("bn{i}/var")
                || mean.1.numel() != s.mean.len()
                || var.1.numel() != s.var.len()
            {
                return Err(Error::format(
                    "MCKP",
                    format!("batch-norm layer {i} does not match the config"),
                ));
            }
            *s = BnStats {
                mean: mean.1.data().to_vec(),
                var: var.1.data().to_vec(),
            };
        }
        Ok(Self {
            model,
            condition: meta.condition,
            provenance: meta.provenance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_bundle().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bundle(&Bundle::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_round_trip_and_layout() {
        let mut b = Bundle::default();
        b.push(
            "X",
            Section::Tensors(vec![("w".into(), Tensor::new(&[2], vec![1.5, -0.0]).unwrap())]),
        );
        b.push("meta", Section::Json(serde_json::json!({"a": 1})));
        let mut buf = Vec::new();
        b.write(&mut buf).unwrap();
        assert_eq!(&buf[..10], b"MCKP\x01\x00\x02\x00\x00\x00");
        let back = Bundle::read(&buf[..]).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.tensors("X").unwrap()[0].1.data()[1].to_bits(), (-0.0f32).to_bits());
        assert!(Bundle::read(&buf[..buf.len() - 1]).is_err());
        assert!(back.tensors("meta").is_err());
        assert!(back.json("nope").is_err());
    }

    #[test]
    fn classifier_round_trip() {
        let cfg = ClassifierCfg {
            base_channels: 2,
            n_stages: 2,
            blocks_per_stage: 1,
            n_classes: 3,
            ..Default::default()
        };
        let mut model = Classifier::new(&cfg, &mut rng_from(3)).unwrap();
        model.bn[0].mean[0] = 0.25;
        let ck = ClassifierCheckpoint {
            model,
            condition: "Baseline".into(),
            provenance: Provenance {
                config_hash: "ab".into(),
                seed: 1,
            },
        };
        let mut buf = Vec::new();
        ck.to_bundle().write(&mut buf).unwrap();
        assert_eq!(
            ClassifierCheckpoint::from_bundle(&Bundle::read(&buf[..]).unwrap()).unwrap(),
            ck
        );
    }
}
