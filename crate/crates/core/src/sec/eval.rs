use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion, mean_ci95, weighted_f1_from_confusion};
use super::model::{input_batch, Classifier, Mode};
use crate::device_sim::{Corpus, CorpusEntry};
use crate::dsp::Spectrogram;
use crate::tensor::Tape;
use crate::{Error, Result};

const EVAL_BATCH: usize = 64;

fn run_eval(model: &Classifier, specs: &[&Spectrogram], mut sink: impl FnMut(&[f32], &[f32])) -> Result<()> {
    let k = model.cfg.n_classes;
    let d = model.cfg.embedding_dim();
    for chunk in specs.chunks(EVAL_BATCH) {
        let mut t = Tape::new();
        let vars = model.params.bind_frozen(&mut t)?;
        let x = t.constant(input_batch(chunk)?)?;
        let out = model.forward(&mut t, &vars, x, Mode::Eval)?;
        for (logits, emb) in t
            .value(out.logits)
            .data()
            .chunks(k)
            .zip(t.value(out.embedding).data().chunks(d))
        {
            sink(logits, emb);
        }
    }
    Ok(())
}

/// Arg-max class per spectrogram; ties resolve to the lowest index.
pub fn predict(model: &Classifier, specs: &[&Spectrogram]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(specs.len());
    run_eval(model, specs, |logits, _| {
        let best = logits.iter().enumerate().fold(
            (0, f32::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
        out.push(best.0);
    })?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub segment_id: u32,
    pub class_id: usize,
    pub device: String,
    pub values: Vec<f32>,
}

/// Pooled penultimate-layer features, one row per entry.
pub fn embed(model: &Classifier, entries: &[&CorpusEntry]) -> Result<Vec<EmbeddingRow>> {
    let specs: Vec<&Spectrogram> = entries.iter().map(|e| &e.spectrogram).collect();
    let mut rows = Vec::with_capacity(entries.len());
    let mut it = entries.iter();
    run_eval(model, &specs, |_, emb| {
        let e = it.next().expect("one row per entry");
        rows.push(EmbeddingRow {
            segment_id: e.segment_id,
            class_id: e.class_id,
            device: e.device.clone(),
            values: emb.to_vec(),
        });
    })?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceScore {
    pub device: String,
    pub f1: f64,
    pub n_segments: usize,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: String,
    pub source_device: String,
    /// Source first, then targets in corpus order.
    pub devices: Vec<DeviceScore>,
    /// Mean weighted F1 over target devices.
    pub overall_minus_s: f64,
    /// Student-t 95% half-width over the target scores.
    pub ci95: f64,
}

impl EvalReport {
    /// Assembles a report from per-device scores; the source column is
    /// excluded from the summary.
    pub fn from_scores(condition: &str, source_device: &str, devices: Vec<DeviceScore>) -> Result<Self> {
        let targets: Vec<f64> = devices
            .iter()
            .filter(|d| d.device != source_device)
            .map(|d| d.f1)
            .collect();
        let (overall_minus_s, ci95) = if targets.is_empty() {
            (f64::NAN, 0.0)
        } else {
            mean_ci95(&targets)?
        };
        Ok(Self {
            condition: condition.to_string(),
            source_device: source_device.to_string(),
            devices,
            overall_minus_s,
            ci95,
        })
    }

    pub fn score(&self, device: &str) -> Option<&DeviceScore> {
        self.devices.iter().find(|d| d.device == device)
    }

    pub fn f1(&self, device: &str) -> Option<f64> {
        self.score(device).map(|d| d.f1)
    }

    /// One report built by taking each device's column from the report
    /// named for it, as for train-on-target upper bounds.
    pub fn compose(condition: &str, source_device: &str, parts: &[(&str, &EvalReport)]) -> Result<Self> {
        let devices = parts
            .iter()
            .map(|(d, r)| r.score(d).cloned().ok_or_else(|| Error::MissingDevice(d.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::from_scores(condition, source_device, devices)
    }
}

/// Weighted F1 of `model` on every requested device of `val`. Columns are
/// ordered source first, then by the corpus device order, so the result
/// does not depend on the order of `devices`.
pub fn evaluate_matrix(
    model: &Classifier,
    val: &Corpus,
    devices: &[&str],
    source_device: &str,
    condition: &str,
) -> Result<EvalReport> {
    for d in devices.iter().chain([&source_device]) {
        if !val.has_device(d) {
            return Err(Error::MissingDevice(d.to_string()));
        }
    }
    let mut ordered: Vec<&str> = Vec::with_capacity(devices.len() + 1);
    ordered.push(source_device);
    for d in val.devices() {
        if d != source_device && devices.contains(&d.as_str()) {
            ordered.push(d);
        }
    }
    let sub = val.with_devices(&ordered);
    if !sub.is_counterpart_complete() {
        return Err(Error::arg("validation corpus is not counterpart-complete"));
    }
    let k = model.cfg.n_classes;
    let scores = ordered
        .iter()
        .map(|&d| {
            let entries: Vec<&CorpusEntry> = sub.by_device(d).collect();
            let specs: Vec<&Spectrogram> = entries.iter().map(|e| &e.spectrogram).collect();
            let labels: Vec<usize> = entries.iter().map(|e| e.class_id).collect();
            let m = confusion(&predict(model, &specs)?, &labels, k)?;
            Ok(DeviceScore {
                device: d.to_string(),
                f1: weighted_f1_from_confusion(&m)?,
                n_segments: entries.len(),
                confusion: m,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(condition, source_device, scores)
}

/// Text table: one row per report, columns S, T1…Tn and Overall(-S).
/// Reports must share the device columns of the first.
pub fn render_table(reports: &[EvalReport]) -> Result<String> {
    let first = reports.first().ok_or(Error::EmptyInput("render_table"))?;
    let names: Vec<&str> = first.devices.iter().map(|d| d.device.as_str()).collect();
    let width = reports.iter().map(|r| r.condition.len()).max().unwrap_or(0).max(9);
    let mut out = String::new();
    let mut header = format!("{:<width$}", "Condition");
    for (i, _) in names.iter().enumerate() {
        let label = if i == 0 { String::from("S") } else { format!("T{i}") };
        let _ = write!(header, " | {label:>6}");
    }
    let _ = writeln!(out, "{header} | Overall(-S)");
    let mut legend = format!("{:<width$}", "");
    for n in &names {
        let _ = write!(legend, " | {:>6}", n.chars().take(6).collect::<String>());
    }
    let _ = writeln!(out, "{legend} |");
    let _ = writeln!(out, "{}", "-".repeat(header.len() + 14));
    for r in reports {
        let mut line = format!("{:<width$}", r.condition);
        for n in &names {
            match r.f1(n) {
                Some(f) => {
                    let _ = write!(line, " | {f:>6.3}");
                }
                None => {
                    let _ = write!(line, " | {:>6}", "-");
                }
            }
        }
        let _ = writeln!(out, "{line} | {:.3} ± {:.3}", r.overall_minus_s, r.ci95);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn score(device: &str, f1: f64) -> DeviceScore {
        DeviceScore {
            device: device.into(),
            f1,
            n_segments: 10,
            confusion: vec![vec![5, 0], vec![0, 5]],
        }
    }

    #[test]
    fn summary_excludes_source() {
        let r =
            EvalReport::from_scores("Baseline", "s", vec![score("s", 1.0), score("a", 0.8), score("b", 0.8)]).unwrap();
        assert_eq!(r.overall_minus_s, 0.8);
        assert_eq!(r.ci95, 0.0);
        let r = EvalReport::from_scores("X", "s", vec![score("s", 0.0), score("a", 0.6), score("b", 0.8)]).unwrap();
        assert!((r.overall_minus_s - 0.7).abs() < 1e-12);
        assert!(r.ci95 > 0.0);
    }

    #[test]
    fn compose_picks_named_columns() {
        let a = EvalReport::from_scores("on_a", "s", vec![score("s", 0.9), score("a", 0.95), score("b", 0.1)]).unwrap();
        let b = EvalReport::from_scores("on_b", "s", vec![score("s", 0.9), score("a", 0.2), score("b", 0.97)]).unwrap();
        let real = EvalReport::compose("Real", "s", &[("s", &a), ("a", &a), ("b", &b)]).unwrap();
        assert_eq!(real.f1("a"), Some(0.95));
        assert_eq!(real.f1("b"), Some(0.97));
        assert!(EvalReport::compose("Real", "s", &[("c", &a)]).is_err());
    }

    #[test]
    fn table_layout() {
        let r = EvalReport::from_scores("Baseline", "s", vec![score("s", 1.0), score("a", 0.75)]).unwrap();
        let t = render_table(&[r]).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Condition") && lines[0].contains("T1") && lines[0].ends_with("Overall(-S)"));
        assert!(lines[3].contains("0.750 ± 0.000"));
    }
}
