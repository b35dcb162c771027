//! The experiment stages behind the command-line interface. Each stage reads
//! its inputs from and writes its artifacts to the run's output directory:
//!
//! ```text
//! corpus/   manifest.jsonl, corpus.json, spec/<device>/<segment>.mcsg
//! mc/<source>__<target>/   epoch_<e>.mckp, loss.csv, search.json
//! sec/<condition>/         model.mckp or <device>.mckp, loss.csv
//! eval/     report.json, table.txt
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use micshift_core::augment::{AugmentKind, AugmentSpec, ConversionCache, McMode, ModelConverter, SpectrogramConverter};
use micshift_core::cyclegan::{
    hyperparam_search, train_mc, CycleGanModel, Direction, EpochRecord, McOptim, McTrainConfig, TrainObserver,
};
use micshift_core::device_sim::{
    activity_filter, analytic_mel_response, build_corpus, render_segment, split_corpus, Corpus, CorpusEntry,
};
use micshift_core::dsp::{
    difference_spectrum, mel_filterbank, nat_to_db, temporal_average, Spectrogram, Waveform, N_FFT,
};
use micshift_core::rng::{derive_seed, tag};
use micshift_core::sec::{
    embed, evaluate_matrix, render_table, train_sec, AugmentContext, EvalReport, McSource, SecEpoch, SecObserver,
    SecTrainConfig, WaveSource,
};
use serde::{Deserialize, Serialize};

use crate::ckpt::{ClassifierCheckpoint, McCheckpoint};
use crate::config::{Condition, Provenance, RunConfig};
use crate::error::{Error, Result};
use crate::manifest::{read_corpus, read_json, write_corpus, write_json, Splits};

pub const THREADS_ENV: &str = "MICSHIFT_THREADS";

/// Worker cap from `MICSHIFT_THREADS`, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `f` over `items` on up to `threads` scoped workers; results keep input
/// order, and the first error in input order wins.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<R>>>> = items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                *slots[i].lock().expect("slot lock") = Some(f(item));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every item ran"))
        .collect()
}

/// Re-renders corpus waveforms for waveform-stage augmentations.
struct CorpusWaves<'a>(&'a RunConfig);

impl WaveSource for CorpusWaves<'_> {
    fn waveform(&self, e: &CorpusEntry) -> micshift_core::Result<Waveform> {
        let profile = self
            .0
            .profile(&e.device)
            .ok_or_else(|| micshift_core::Error::MissingDevice(e.device.clone()))?;
        render_segment(&self.0.classes, profile, &self.0.corpus, &e.origin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub provenance: Provenance,
    pub reports: Vec<EvalReport>,
}

/// Per mel band, in dB: the converted-minus-source average, the recorded
/// target-minus-source average, and the analytic device difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub mel: usize,
    pub center_hz: f64,
    pub learned_db: f64,
    pub recorded_db: f64,
    pub analytic_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseReport {
    pub rows: Vec<ResponseRow>,
    /// Mean |learned − analytic| over bands.
    pub mae_db: f64,
    /// Mean |recorded − analytic|: the floor set by the data itself.
    pub recorded_mae_db: f64,
}

/// Compares what a conversion model does to source spectrograms with the
/// difference between the two devices' responses.
pub fn response_recovery(
    model: &CycleGanModel,
    corpus: &Corpus,
    profiles: (
        &micshift_core::device_sim::DeviceProfile,
        &micshift_core::device_sim::DeviceProfile,
    ),
) -> Result<ResponseReport> {
    let src: Vec<Spectrogram> = corpus
        .by_device(&model.device_a)
        .map(|e| e.spectrogram.clone())
        .collect();
    let tgt: Vec<Spectrogram> = corpus
        .by_device(&model.device_b)
        .map(|e| e.spectrogram.clone())
        .collect();
    let first = src
        .first()
        .ok_or_else(|| micshift_core::Error::MissingDevice(model.device_a.clone()))?;
    let refs: Vec<&Spectrogram> = src.iter().collect();
    let conv = model.convert_many(&refs, Direction::AToB, true)?;
    let base = temporal_average(&src)?;
    let learned = difference_spectrum(&temporal_average(&conv)?, &base)?;
    let recorded = difference_spectrum(&temporal_average(&tgt)?, &base)?;
    let fb = mel_filterbank(first.sample_rate(), N_FFT, first.n_mels())?;
    let ra = analytic_mel_response(profiles.0, &fb);
    let rb = analytic_mel_response(profiles.1, &fb);
    let rows: Vec<ResponseRow> = (0..fb.n_mels())
        .map(|m| ResponseRow {
            mel: m,
            center_hz: fb.center_hz(m),
            learned_db: nat_to_db(learned[m]),
            recorded_db: nat_to_db(recorded[m]),
            analytic_db: rb[m] - ra[m],
        })
        .collect();
    let n = rows.len() as f64;
    Ok(ResponseReport {
        mae_db: rows.iter().map(|r| (r.learned_db - r.analytic_db).abs()).sum::<f64>() / n,
        recorded_mae_db: rows.iter().map(|r| (r.recorded_db - r.analytic_db).abs()).sum::<f64>() / n,
        rows,
    })
}

pub struct Pipeline {
    cfg: RunConfig,
    out: PathBuf,
    provenance: Provenance,
    pub threads: usize,
    /// Per-epoch progress lines on stderr.
    pub verbose: bool,
}

struct McRecorder<'a> {
    dir: &'a Path,
    config: &'a McTrainConfig,
    provenance: &'a Provenance,
    label: String,
    verbose: bool,
    history: Vec<EpochRecord>,
}

impl TrainObserver for McRecorder<'_> {
    fn on_epoch(&mut self, r: &EpochRecord) {
        if self.verbose {
            eprintln!(
                "[{}] epoch {} cycle {:.4} g {:.4} d_a {:.4} d_b {:.4}",
                self.label, r.epoch, r.loss_cycle, r.loss_g_total, r.loss_d_a, r.loss_d_b
            );
        }
        self.history.push(*r);
    }

    fn on_checkpoint(&mut self, epoch: usize, model: &CycleGanModel, optim: &McOptim) -> micshift_core::Result<()> {
        let ck = McCheckpoint {
            model: model.clone(),
            optim: optim.clone(),
            config: self.config.clone(),
            epoch,
            provenance: self.provenance.clone(),
        };
        // The observer interface speaks core errors; IO failures are
        // reported through it as malformed-data errors with the path.
        ck.save(&self.dir.join(format!("epoch_{epoch}.mckp")))
            .map_err(|e| micshift_core::Error::Malformed(e.to_string()))
    }
}

struct SecRecorder<'a> {
    label: &'a str,
    verbose: bool,
    history: Vec<SecEpoch>,
}

impl SecObserver for SecRecorder<'_> {
    fn on_epoch(&mut self, r: &SecEpoch) {
        if self.verbose {
            eprintln!("[{}] epoch {} loss {:.4} lr {:.1e}", self.label, r.epoch, r.loss, r.lr);
        }
        self.history.push(*r);
    }
}

#[derive(Serialize)]
struct McLossRow<'a> {
    epoch: usize,
    #[serde(rename = "loss_G_total")]
    loss_g_total: f64,
    loss_cycle: f64,
    #[serde(rename = "loss_D_A")]
    loss_d_a: f64,
    #[serde(rename = "loss_D_B")]
    loss_d_b: f64,
    lr: f64,
    config_hash: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct SecLossRow<'a> {
    model: &'a str,
    epoch: usize,
    loss: f64,
    lr: f64,
    config_hash: &'a str,
    seed: u64,
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(Error::io(p))
}

impl Pipeline {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            out: cfg.out_dir.clone(),
            provenance: cfg.provenance(),
            cfg: cfg.resolved(),
            threads: thread_cap(),
            verbose: false,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.out.join("corpus")
    }

    pub fn mc_dir(&self, target: &str) -> PathBuf {
        self.out
            .join("mc")
            .join(format!("{}__{target}", self.cfg.source_device))
    }

    pub fn mc_checkpoint(&self, target: &str, epoch: usize) -> PathBuf {
        self.mc_dir(target).join(format!("epoch_{epoch}.mckp"))
    }

    pub fn sec_dir(&self, c: &Condition) -> PathBuf {
        self.out.join("sec").join(c.slug())
    }

    fn sec_checkpoint(&self, c: &Condition, device: Option<&str>) -> PathBuf {
        self.sec_dir(c).join(match device {
            Some(d) => format!("{d}.mckp"),
            None => "model.mckp".into(),
        })
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }

    /// Builds, filters and splits the corpus and writes it to disk.
    pub fn synth(&self) -> Result<Splits> {
        let c = &self.cfg;
        let mut corpus = build_corpus(&c.classes, &c.devices, &c.corpus)?;
        if c.activity.enabled {
            let sparse: Vec<usize> = c.classes.iter().filter(|k| k.sparse).map(|k| k.id).collect();
            corpus = activity_filter(&corpus, &sparse, c.activity.sparse_thresh, c.activity.dense_thresh);
        }
        let (mc_train, sec_train, val) = split_corpus(&corpus, &c.split, c.split_seed())?;
        let splits = Splits {
            mc_train,
            sec_train,
            val,
        };
        let dir = self.corpus_dir();
        create_dir(&dir)?;
        write_corpus(&dir, &splits, &self.provenance)?;
        Ok(splits)
    }

    pub fn load_splits(&self) -> Result<Splits> {
        Ok(read_corpus(&self.corpus_dir())?.0)
    }

    /// Trains the source → `target` conversion pair, searching the learning
    /// schedule first when configured. Returns the per-epoch losses.
    pub fn train_mc(&self, splits: &Splits, target: &str) -> Result<Vec<EpochRecord>> {
        let c = &self.cfg;
        if target == c.source_device || c.profile(target).is_none() {
            return Err(Error::Config(format!("{target:?} is not a target device")));
        }
        let pair = (c.source_device.as_str(), target);
        let mut mc = c.mc.clone();
        mc.seed = derive_seed(mc.seed, &[tag(target)]);
        let dir = self.mc_dir(target);
        create_dir(&dir)?;
        if let Some(s) = &c.mc_search {
            let base = McTrainConfig {
                epochs: s.epochs,
                checkpoint_every: s.epochs,
                ..mc.clone()
            };
            let found = hyperparam_search(
                &splits.mc_train,
                &splits.val,
                pair,
                &base,
                s.n_iter,
                s.strategy,
                mc.seed,
            )?;
            mc.lr_init = found.best.lr_init;
            mc.halve_interval = found.best.halve_interval;
            #[derive(Serialize)]
            struct SearchFile<'a> {
                provenance: &'a Provenance,
                best_score: f64,
                trials: &'a [micshift_core::cyclegan::Trial],
            }
            write_json(
                &dir.join("search.json"),
                &SearchFile {
                    provenance: &self.provenance,
                    best_score: found.best_score,
                    trials: &found.trials,
                },
            )?;
        }
        let mut rec = McRecorder {
            dir: &dir,
            config: &mc,
            provenance: &self.provenance,
            label: format!("mc {target}"),
            verbose: self.verbose,
            history: Vec::new(),
        };
        train_mc(&splits.mc_train, pair, &mc, &mut rec)?;
        let mut w = csv::Writer::from_path(dir.join("loss.csv"))?;
        for r in &rec.history {
            w.serialize(McLossRow {
                epoch: r.epoch,
                loss_g_total: r.loss_g_total,
                loss_cycle: r.loss_cycle,
                loss_d_a: r.loss_d_a,
                loss_d_b: r.loss_d_b,
                lr: r.lr,
                config_hash: &self.provenance.config_hash,
                seed: self.provenance.seed,
            })?;
        }
        w.flush().map_err(Error::io(dir.join("loss.csv")))?;
        Ok(rec.history)
    }

    /// Conversion pairs needed by the configured conditions.
    pub fn mc_targets(&self) -> Vec<String> {
        let mut t: Vec<String> = Vec::new();
        for c in &self.cfg.conditions {
            match c {
                Condition::McGen { .. } => t.extend(self.cfg.target_devices().into_iter().map(String::from)),
                Condition::McAdapt { target, .. } => t.push(target.clone()),
                _ => {}
            }
        }
        let order = self.cfg.target_devices();
        order
            .into_iter()
            .filter(|d| t.iter().any(|x| x == d))
            .map(String::from)
            .collect()
    }

    pub fn train_mc_all(&self, splits: &Splits) -> Result<()> {
        par_map(&self.mc_targets(), self.threads, |t| self.train_mc(splits, t))?;
        Ok(())
    }

    fn converters(&self, targets: &[&str], epoch: usize) -> Result<Vec<Box<dyn SpectrogramConverter + Send + Sync>>> {
        targets
            .iter()
            .map(|t| {
                let ck = McCheckpoint::load(&self.mc_checkpoint(t, epoch))?;
                Ok(Box::new(ModelConverter {
                    model: ck.model,
                    dir: Direction::AToB,
                }) as Box<dyn SpectrogramConverter + Send + Sync>)
            })
            .collect()
    }

    fn fit(
        &self,
        label: &str,
        train: &[&CorpusEntry],
        cfg: &SecTrainConfig,
        cache: Option<&ConversionCache>,
    ) -> Result<(ClassifierCheckpoint, Vec<SecEpoch>)> {
        let waves = CorpusWaves(&self.cfg);
        let ctx = AugmentContext {
            waves: Some(&waves),
            mc: cache.map(|cache| McSource {
                cache,
                source_device: &self.cfg.source_device,
            }),
        };
        let mut rec = SecRecorder {
            label,
            verbose: self.verbose,
            history: Vec::new(),
        };
        let out = train_sec(train, cfg, &ctx, &mut rec)?;
        let ck = ClassifierCheckpoint {
            model: out.model,
            condition: label.to_string(),
            provenance: self.provenance.clone(),
        };
        Ok((ck, rec.history))
    }

    fn with_chain(&self, extra: impl IntoIterator<Item = AugmentSpec>) -> SecTrainConfig {
        let mut s = self.cfg.sec.clone();
        s.augment.extend(extra);
        s
    }

    /// Trains the classifier(s) of one condition and writes checkpoints and
    /// loss curves.
    pub fn train_condition(&self, splits: &Splits, cond: &Condition) -> Result<()> {
        let c = &self.cfg;
        let label = cond.label();
        let source: Vec<&CorpusEntry> = splits.sec_train.by_device(&c.source_device).collect();
        let mut models: Vec<(Option<String>, ClassifierCheckpoint, Vec<SecEpoch>)> = Vec::new();
        match cond {
            Condition::Baseline {} => {
                let (ck, h) = self.fit(&label, &source, &c.sec, None)?;
                models.push((None, ck, h));
            }
            Condition::Augment { chain, .. } => {
                let (ck, h) = self.fit(&label, &source, &self.with_chain(chain.iter().cloned()), None)?;
                models.push((None, ck, h));
            }
            Condition::McGen {
                mc_epoch,
                include_source,
            } => {
                let conv = self.converters(&c.target_devices(), *mc_epoch)?;
                let specs: Vec<&Spectrogram> = source.iter().map(|e| &e.spectrogram).collect();
                let cache = ConversionCache::build(&specs, &c.source_device, &conv)?;
                let spec = AugmentSpec::new(
                    AugmentKind::MicConvert {
                        mode: McMode::Gen {
                            include_source: *include_source,
                        },
                    },
                    1.0,
                )?;
                let (ck, h) = self.fit(&label, &source, &self.with_chain([spec]), Some(&cache))?;
                models.push((None, ck, h));
            }
            Condition::McAdapt { target, p, mc_epoch } => {
                let conv = self.converters(&[target], *mc_epoch)?;
                let specs: Vec<&Spectrogram> = source.iter().map(|e| &e.spectrogram).collect();
                let cache = ConversionCache::build(&specs, &c.source_device, &conv)?;
                let spec = AugmentSpec::new(AugmentKind::MicConvert { mode: McMode::Adapt }, *p)?;
                let (ck, h) = self.fit(&label, &source, &self.with_chain([spec]), Some(&cache))?;
                models.push((None, ck, h));
            }
            Condition::Real {} => {
                let devices: Vec<&str> = c.devices.iter().map(|d| d.name.as_str()).collect();
                let trained = par_map(&devices, self.threads, |d| {
                    let own: Vec<&CorpusEntry> = splits.sec_train.by_device(d).collect();
                    self.fit(&format!("{label}/{d}"), &own, &c.sec, None)
                })?;
                for (d, (ck, h)) in devices.iter().zip(trained) {
                    models.push((Some(d.to_string()), ck, h));
                }
            }
        }
        let dir = self.sec_dir(cond);
        create_dir(&dir)?;
        let csv_path = dir.join("loss.csv");
        let mut w = csv::Writer::from_path(&csv_path)?;
        for (device, ck, history) in &models {
            ck.save(&self.sec_checkpoint(cond, device.as_deref()))?;
            let name = device.as_deref().unwrap_or("model");
            for r in history {
                w.serialize(SecLossRow {
                    model: name,
                    epoch: r.epoch,
                    loss: r.loss,
                    lr: r.lr,
                    config_hash: &self.provenance.config_hash,
                    seed: self.provenance.seed,
                })?;
            }
        }
        w.flush().map_err(Error::io(&csv_path))
    }

    pub fn train_conditions(&self, splits: &Splits) -> Result<()> {
        for c in &self.cfg.conditions {
            self.train_condition(splits, c)?;
        }
        Ok(())
    }

    pub fn condition(&self, label: &str) -> Result<&Condition> {
        self.cfg
            .conditions
            .iter()
            .find(|c| c.label() == label)
            .ok_or_else(|| Error::Config(format!("no condition labelled {label:?}")))
    }

    /// Evaluates one trained condition on the validation split.
    pub fn evaluate_condition(&self, splits: &Splits, cond: &Condition) -> Result<EvalReport> {
        let c = &self.cfg;
        let label = cond.label();
        let all: Vec<&str> = c.devices.iter().map(|d| d.name.as_str()).collect();
        let load = |device: Option<&str>| ClassifierCheckpoint::load(&self.sec_checkpoint(cond, device));
        Ok(match cond {
            Condition::Baseline {} | Condition::Augment { .. } | Condition::McGen { .. } => {
                evaluate_matrix(&load(None)?.model, &splits.val, &all, &c.source_device, &label)?
            }
            Condition::McAdapt { target, .. } => {
                evaluate_matrix(&load(None)?.model, &splits.val, &[target], &c.source_device, &label)?
            }
            Condition::Real {} => {
                let per = par_map(&all, self.threads, |d| {
                    evaluate_matrix(&load(Some(d))?.model, &splits.val, &[d], &c.source_device, &label)
                        .map_err(Error::from)
                })?;
                let parts: Vec<(&str, &EvalReport)> = all.iter().copied().zip(per.iter()).collect();
                EvalReport::compose(&label, &c.source_device, &parts)?
            }
        })
    }

    /// Evaluates every condition and writes `report.json` and `table.txt`.
    pub fn eval(&self, splits: &Splits) -> Result<ReportFile> {
        let reports = self
            .cfg
            .conditions
            .iter()
            .map(|c| self.evaluate_condition(splits, c))
            .collect::<Result<Vec<_>>>()?;
        let file = ReportFile {
            provenance: self.provenance.clone(),
            reports,
        };
        let dir = self.eval_dir();
        create_dir(&dir)?;
        write_json(&dir.join("report.json"), &file)?;
        let table = render_report(&file)?;
        fs::write(dir.join("table.txt"), table).map_err(Error::io(dir.join("table.txt")))?;
        Ok(file)
    }

    /// Every stage in order: synth, conversion training, classifier
    /// training, evaluation.
    pub fn run_all(&self) -> Result<ReportFile> {
        let splits = self.synth()?;
        self.train_mc_all(&splits)?;
        self.train_conditions(&splits)?;
        self.eval(&splits)
    }

    /// Penultimate-layer embeddings of a trained condition's model on the
    /// validation split, as CSV. For `Real`, the source device's model.
    pub fn write_embeddings(&self, splits: &Splits, cond: &Condition, path: &Path) -> Result<usize> {
        let device = matches!(cond, Condition::Real {}).then_some(self.cfg.source_device.as_str());
        let ck = ClassifierCheckpoint::load(&self.sec_checkpoint(cond, device))?;
        let entries: Vec<&CorpusEntry> = splits.val.entries().iter().collect();
        let rows = embed(&ck.model, &entries)?;
        let mut w = csv::Writer::from_path(path)?;
        let dim = ck.model.cfg.embedding_dim();
        let mut header = vec!["segment_id".to_string(), "class_id".into(), "device".into()];
        header.extend((0..dim).map(|i| format!("e{i}")));
        header.extend(["config_hash".into(), "seed".into()]);
        w.write_record(&header)?;
        for r in &rows {
            let mut rec = vec![r.segment_id.to_string(), r.class_id.to_string(), r.device.clone()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            rec.extend([self.provenance.config_hash.clone(), self.provenance.seed.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush().map_err(Error::io(path))?;
        Ok(rows.len())
    }

    /// Per-device temporal-average spectra of a corpus split and their
    /// differences from the source device, in dB, as CSV.
    pub fn analyze_corpus(&self, corpus: &Corpus, path: &Path) -> Result<()> {
        let devices = corpus.devices().to_vec();
        let mut avgs = Vec::new();
        for d in &devices {
            let specs: Vec<Spectrogram> = corpus.by_device(d).map(|e| e.spectrogram.clone()).collect();
            avgs.push(temporal_average(&specs)?);
        }
        let si = devices
            .iter()
            .position(|d| *d == self.cfg.source_device)
            .ok_or_else(|| micshift_core::Error::MissingDevice(self.cfg.source_device.clone()))?;
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["mel".to_string()];
        for d in &devices {
            header.push(format!("{d}_db"));
        }
        for d in &devices {
            header.push(format!("{d}_minus_source_db"));
        }
        header.extend(["config_hash".into(), "seed".into()]);
        w.write_record(&header)?;
        for m in 0..avgs[0].len() {
            let mut rec = vec![m.to_string()];
            rec.extend(avgs.iter().map(|a| format!("{:.6}", nat_to_db(a[m]))));
            rec.extend(avgs.iter().map(|a| format!("{:.6}", nat_to_db(a[m] - avgs[si][m]))));
            rec.extend([self.provenance.config_hash.clone(), self.provenance.seed.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush().map_err(Error::io(path))
    }

    /// The learned-versus-analytic response comparison of a conversion
    /// checkpoint on the validation split, as CSV.
    pub fn analyze_checkpoint(&self, splits: &Splits, ckpt: &Path, path: &Path) -> Result<ResponseReport> {
        let ck = McCheckpoint::load(ckpt)?;
        let pa = self
            .cfg
            .profile(&ck.model.device_a)
            .ok_or_else(|| micshift_core::Error::MissingDevice(ck.model.device_a.clone()))?;
        let pb = self
            .cfg
            .profile(&ck.model.device_b)
            .ok_or_else(|| micshift_core::Error::MissingDevice(ck.model.device_b.clone()))?;
        let report = response_recovery(&ck.model, &splits.val, (pa, pb))?;
        let mut w = csv::Writer::from_path(path)?;
        for r in &report.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(Error::io(path))?;
        Ok(report)
    }
}

/// Conditions evaluated on every device first, then the partial ones.
pub fn render_report(file: &ReportFile) -> Result<String> {
    let full = file.reports.iter().map(|r| r.devices.len()).max().unwrap_or(0);
    let mut ordered: Vec<EvalReport> = file
        .reports
        .iter()
        .filter(|r| r.devices.len() == full)
        .cloned()
        .collect();
    ordered.extend(file.reports.iter().filter(|r| r.devices.len() != full).cloned());
    let mut out = format!(
        "# config {} seed {}\n",
        file.provenance.config_hash, file.provenance.seed
    );
    out.push_str(&render_table(&ordered)?);
    Ok(out)
}

/// Converts one MCSG file with a checkpoint; longer inputs are tiled.
pub fn convert_file(ckpt: &Path, input: &Path, output: &Path, dir: Direction) -> Result<Provenance> {
    let ck = McCheckpoint::load(ckpt)?;
    let x = crate::mcsg::load_spectrogram(input)?;
    let y = ck.model.convert_many(&[&x], dir, true)?.remove(0);
    crate::mcsg::save_spectrogram(output, &y)?;
    let mut side = output.as_os_str().to_owned();
    side.push(".json");
    #[derive(Serialize)]
    struct Sidecar<'a> {
        provenance: &'a Provenance,
        checkpoint: &'a Path,
        input: &'a Path,
        direction: Direction,
    }
    write_json(
        Path::new(&side),
        &Sidecar {
            provenance: &ck.provenance,
            checkpoint: ckpt,
            input,
            direction: dir,
        },
    )?;
    Ok(ck.provenance)
}

pub fn load_report(path: &Path) -> Result<ReportFile> {
    read_json(path)
}
