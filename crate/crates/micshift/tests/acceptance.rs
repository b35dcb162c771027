//! Acceptance checks, one PASS/FAIL line each. Runs as a plain binary
//! (`harness = false`) so the lines come out in order and unbuffered.
//!
//! The benchmark run behind checks 5, 6 and 8 takes tens of minutes. Set
//! `MICSHIFT_BENCH_DIR` to a finished `micshift run` output of
//! configs/bench.json to reuse it instead.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use micshift::manifest::read_corpus;
use micshift::pipeline::{load_report, response_recovery, ReportFile};
use micshift::{Condition, Pipeline, RunConfig};
use micshift_core::augment::{
    apply_gain_curve, freq_mixstyle_with, mixup_with, pitch_shift, rfn, AugmentKind, AugmentSpec, McMode, RfnAxes,
};
use micshift_core::cyclegan::{
    composite_grad_check, train_mc, DiscriminatorCfg, EpochRecord, GeneratorCfg, McTrainConfig, ReplayBuffer,
    TrainObserver,
};
use micshift_core::device_sim::{
    build_corpus, default_classes, flat_profile, keep_segment, shelf_profile, Corpus, CorpusConfig,
};
use micshift_core::dsp::{periodogram, power_to_db, welch_spectrum, Spectrogram, Waveform};
use micshift_core::rng::rng_from;
use micshift_core::sec::weighted_f1;
use micshift_core::tensor::{layer_suite, Conv2dSpec, PadMode, Tape, Tensor};
use rand::Rng;

mod common;
use common::tiny_config;

const GRAD_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const CONV_TOL: f64 = 1e-5;
const F1_ULPS: u64 = 4;
const IDENTITY_TOL: f32 = 1e-5;
const RESPONSE_MAE_DB: f64 = 3.0;
const CYCLE_RATIO: f64 = 0.1;
const DESK_BUDGET: Duration = Duration::from_secs(30 * 60);
const BENCH_BUDGET: Duration = Duration::from_secs(60 * 60);
const SOURCE_F1_MIN: f64 = 0.9;
const REUSE_RATE: f64 = 0.5;
const REUSE_TOL: f64 = 0.02;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_gradients() -> Outcome {
    let t0 = Instant::now();
    let checks = layer_suite(50, 1).map_err(|e| e.to_string())?;
    let gen = GeneratorCfg {
        base_channels: 2,
        n_resblocks: 1,
        ..Default::default()
    };
    let (g, d) =
        composite_grad_check(&gen, &DiscriminatorCfg { base_channels: 2 }, 16, 8, 1).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let (worst_layer, worst) = checks
        .iter()
        .map(|c| (c.layer, c.report.max_rel_error))
        .chain([
            ("composite_generators", g.max_rel_error),
            ("composite_discriminators", d.max_rel_error),
        ])
        .fold(("", 0.0), |a, b| if b.1 > a.1 || b.1.is_nan() { b } else { a });
    ensure(worst < GRAD_TOL, || format!("{worst_layer} rel error {worst:.2e}"))?;
    ensure(checks.iter().all(|c| c.report.checked > 0), || {
        "a layer case checked no coordinates".into()
    })?;
    ensure(elapsed < GRAD_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} layer cases + composite, max rel error {worst:.2e}, {elapsed:.1?}",
        checks.len()
    ))
}

/// Direct six-loop convolution in f64 with explicit padding rules.
fn naive_conv(x: &Tensor<f32>, k: &Tensor<f32>, b: &[f32], spec: Conv2dSpec) -> Vec<f64> {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, kk) = (k.shape()[0], k.shape()[2]);
    let p = spec.padding as isize;
    let fold = |i: isize, len: usize| -> Option<usize> {
        let len = len as isize;
        match spec.pad_mode {
            PadMode::Zero => (0..len).contains(&i).then_some(i as usize),
            PadMode::Reflect => Some(if i < 0 {
                -i
            } else if i >= len {
                2 * (len - 1) - i
            } else {
                i
            } as usize),
        }
    };
    let ho = (h + 2 * spec.padding - kk) / spec.stride + 1;
    let wo = (w + 2 * spec.padding - kk) / spec.stride + 1;
    let mut out = Vec::with_capacity(n * co * ho * wo);
    for s in 0..n {
        for o in 0..co {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[o] as f64;
                    for c in 0..ci {
                        for ky in 0..kk {
                            for kx in 0..kk {
                                let yy = (oy * spec.stride + ky) as isize - p;
                                let xx = (ox * spec.stride + kx) as isize - p;
                                if let (Some(a), Some(bb)) = (fold(yy, h), fold(xx, w)) {
                                    let kv = k.data()[((o * ci + c) * kk + ky) * kk + kx] as f64;
                                    acc += kv * x.data()[((s * ci + c) * h + a) * w + bb] as f64;
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn brute_weighted_f1(preds: &[usize], labels: &[usize]) -> f64 {
    let k = preds.iter().chain(labels).max().unwrap() + 1;
    let n = labels.len() as f64;
    let mut score = 0.0;
    for c in 0..k {
        let support = labels.iter().filter(|&&l| l == c).count();
        if support == 0 {
            continue;
        }
        let tp = preds.iter().zip(labels).filter(|(&p, &l)| p == c && l == c).count() as f64;
        let predicted = preds.iter().filter(|&&p| p == c).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / support as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        score += f1 * support as f64 / n;
    }
    score
}

fn ulps(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

fn c2_oracles() -> Outcome {
    let mut rng = rng_from(2);
    let mut conv_worst = 0.0f64;
    for case in 0..200 {
        let mode = if case % 2 == 0 { PadMode::Zero } else { PadMode::Reflect };
        let k = [1, 3, 4, 7][case % 4];
        let stride = 1 + case % 3 / 2;
        let pad = rng.random_range(0..=k / 2);
        let h = rng.random_range(k.max(pad + 1)..=k + 6);
        let w = rng.random_range(k.max(pad + 1)..=k + 6);
        let (n, ci, co) = (
            rng.random_range(1..=2),
            rng.random_range(1..=3),
            rng.random_range(1..=3),
        );
        let x = Tensor::<f32>::randn(&[n, ci, h, w], 1.0, &mut rng);
        let kern = Tensor::<f32>::randn(&[co, ci, k, k], 0.5, &mut rng);
        let bias = Tensor::<f32>::randn(&[co], 0.5, &mut rng);
        let spec = Conv2dSpec::new(stride, pad, mode);
        let mut t = Tape::new();
        let (xv, kv, bv) = (
            t.constant(x.clone()).unwrap(),
            t.constant(kern.clone()).unwrap(),
            t.constant(bias.clone()).unwrap(),
        );
        let y = t
            .conv2d(xv, kv, Some(bv), spec)
            .map_err(|e| format!("conv case {case}: {e}"))?;
        let want = naive_conv(&x, &kern, bias.data(), spec);
        let got = t.value(y).data();
        ensure(got.len() == want.len(), || {
            format!("conv case {case}: {} outputs, want {}", got.len(), want.len())
        })?;
        for (g, w) in got.iter().zip(&want) {
            conv_worst = conv_worst.max((*g as f64 - w).abs());
        }
    }
    ensure(conv_worst <= CONV_TOL, || {
        format!("conv2d max abs error {conv_worst:.2e}")
    })?;

    let mut f1_worst = 0;
    for case in 0..1000 {
        let k = rng.random_range(1..=10);
        let n = rng.random_range(1..=200);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let got = weighted_f1(&preds, &labels).map_err(|e| format!("f1 case {case}: {e}"))?;
        f1_worst = f1_worst.max(ulps(got, brute_weighted_f1(&preds, &labels)));
    }
    ensure(f1_worst <= F1_ULPS, || format!("weighted_f1 differs by {f1_worst} ulp"))?;

    for case in 0..20 {
        let len = 1usize << rng.random_range(4..=11);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = Waveform::new(x.clone(), 22_050).unwrap();
        let welch = welch_spectrum(&w, len, 0.5).map_err(|e| e.to_string())?;
        let direct: Vec<f64> = periodogram(&x)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(power_to_db)
            .collect();
        ensure(welch.power_db == direct, || {
            format!("welch case {case} (len {len}) differs from periodogram")
        })?;
    }
    Ok(format!(
        "conv2d 200 cases max err {conv_worst:.1e}; weighted_f1 1000 cases max {f1_worst} ulp; welch = periodogram 20/20"
    ))
}

fn c3_identities() -> Outcome {
    let mut rng = rng_from(3);
    let w = Waveform::new((0..4096).map(|_| rng.random_range(-0.5..0.5)).collect(), 22_050).unwrap();
    let s = Spectrogram::new(
        32,
        40,
        256,
        22_050,
        (0..1280).map(|_| rng.random_range(-8.0..2.0)).collect(),
    )
    .unwrap();
    let x = Tensor::<f32>::randn(&[4, 2, 8, 10], 1.0, &mut rng);
    let y = Tensor::from_fn(&[4, 3], |i| (i % 3 == 0) as u8 as f32);
    let mut checked = 0;

    let kinds = [
        "gaussian_noise",
        "reverb",
        "pitch_shift",
        "spec_augment",
        "mixup",
        "filter_augment",
        "freq_mixstyle",
    ];
    for name in kinds {
        let spec = AugmentSpec::new(AugmentKind::by_name(name).unwrap(), 0.0).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            let same = match name {
                "gaussian_noise" | "reverb" | "pitch_shift" => spec.apply_waveform(&w, &mut rng).map(|o| o == w),
                "spec_augment" | "filter_augment" => spec.apply_spectrogram(&s, &mut rng).map(|o| o == s),
                _ => spec.apply_batch(&x, &y, &mut rng).map(|o| o == (x.clone(), y.clone())),
            }
            .map_err(|e| e.to_string())?;
            ensure(same, || format!("{name} with p = 0 changed its input"))?;
        }
        checked += 1;
    }
    let mc = AugmentSpec::new(
        AugmentKind::MicConvert {
            mode: McMode::default(),
        },
        0.0,
    )
    .map_err(|e| e.to_string())?;
    ensure(!mc.fires(&mut rng), || "mic_convert gate fired at p = 0".into())?;

    let perm = [3, 2, 1, 0];
    ensure(
        mixup_with(&x, &y, 1.0, &perm).unwrap() == (x.clone(), y.clone()),
        || "mixup lambda = 1".into(),
    )?;
    ensure(freq_mixstyle_with(&x, &[1.0; 4], &perm).unwrap() == x, || {
        "freq_mixstyle lambda = 1".into()
    })?;
    ensure(pitch_shift(&w, 0.0).unwrap() == w, || {
        "pitch shift by 0 semitones".into()
    })?;

    let flat = apply_gain_curve(&s, &[0.0; 32]).unwrap();
    let gain_err = flat
        .values()
        .iter()
        .zip(s.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    ensure(gain_err <= IDENTITY_TOL, || {
        format!("0 dB gain curve moved values by {gain_err}")
    })?;

    for axes in [RfnAxes::Joint, RfnAxes::PerChannel] {
        let mut t = Tape::new();
        let v = t.constant(x.clone()).unwrap();
        let out = rfn(&mut t, v, 1.0, axes).unwrap();
        ensure(t.value(out) == &x, || format!("rfn relax = 1 ({axes:?})"))?;
    }
    Ok(format!(
        "{checked} p = 0 gates x20 draws, mic_convert gate, 6 parameter identities"
    ))
}

/// Pinned flat-to-shelf desk run: 80 events, 8-channel generator with two
/// residual blocks, 32-frame patches, batch 4, 10 epochs.
fn c4_response() -> Outcome {
    let t0 = Instant::now();
    let devices = vec![flat_profile("flat"), shelf_profile("shelf", 2000.0, 6.0)];
    let cfg = CorpusConfig {
        n_events: 80,
        ..Default::default()
    };
    let corpus = build_corpus(&default_classes(), &devices, &cfg).map_err(|e| e.to_string())?;
    let mc = McTrainConfig {
        lr_init: 2e-3,
        epochs: 10,
        patch_frames: 32,
        batch_size: 4,
        generator: GeneratorCfg {
            base_channels: 8,
            n_resblocks: 2,
            ..Default::default()
        },
        discriminator: DiscriminatorCfg { base_channels: 8 },
        ..Default::default()
    };
    struct Quiet;
    impl TrainObserver for Quiet {
        fn on_epoch(&mut self, _: &EpochRecord) {}
    }
    let out = train_mc(&corpus, ("flat", "shelf"), &mc, &mut Quiet).map_err(|e| e.to_string())?;
    let r = response_recovery(&out.model, &corpus, (&devices[0], &devices[1])).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let (first, last) = (out.history[0].loss_cycle, out.history.last().unwrap().loss_cycle);
    let ratio = last / first;
    let detail = format!(
        "MAE {:.2} dB (data floor {:.2}), cycle {last:.4}/{first:.4} = {ratio:.3}, {elapsed:.0?}",
        r.mae_db, r.recorded_mae_db
    );
    ensure(r.mae_db < RESPONSE_MAE_DB, || detail.clone())?;
    ensure(ratio < CYCLE_RATIO, || detail.clone())?;
    ensure(elapsed <= DESK_BUDGET, || detail.clone())?;
    Ok(detail)
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

struct Bench {
    cfg: RunConfig,
    dir: PathBuf,
    report: ReportFile,
    elapsed: Option<Duration>,
    _tmp: Option<tempfile::TempDir>,
}

fn bench() -> Result<Bench, String> {
    let mut cfg = RunConfig::load(&workspace_root().join("configs/bench.json")).map_err(|e| e.to_string())?;
    if let Some(dir) = std::env::var_os("MICSHIFT_BENCH_DIR") {
        let dir = PathBuf::from(dir);
        let report = load_report(&dir.join("eval/report.json")).map_err(|e| e.to_string())?;
        ensure(report.provenance.config_hash == cfg.hash(), || {
            "MICSHIFT_BENCH_DIR holds a different config".into()
        })?;
        return Ok(Bench {
            cfg,
            dir,
            report,
            elapsed: None,
            _tmp: None,
        });
    }
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    cfg.out_dir = tmp.path().to_path_buf();
    let t0 = Instant::now();
    let report = Pipeline::new(&cfg)
        .and_then(|p| p.run_all())
        .map_err(|e| e.to_string())?;
    Ok(Bench {
        dir: tmp.path().to_path_buf(),
        cfg,
        report,
        elapsed: Some(t0.elapsed()),
        _tmp: Some(tmp),
    })
}

fn score(report: &ReportFile, cond: &str, device: &str) -> Option<f64> {
    let r = report.reports.iter().find(|r| r.condition == cond)?;
    r.devices.iter().find(|d| d.device == device).map(|d| d.f1)
}

fn overall(report: &ReportFile, cond: &str) -> Result<f64, String> {
    report
        .reports
        .iter()
        .find(|r| r.condition == cond)
        .map(|r| r.overall_minus_s)
        .ok_or_else(|| format!("no report for {cond}"))
}

fn c5_generalization(b: &Bench) -> Outcome {
    let labels: Vec<String> = b.cfg.conditions.iter().map(Condition::label).collect();
    let gens: Vec<(usize, String)> = b
        .cfg
        .conditions
        .iter()
        .filter_map(|c| match c {
            Condition::McGen { mc_epoch, .. } => Some((*mc_epoch, c.label())),
            _ => None,
        })
        .collect();
    ensure(gens.len() >= 2, || {
        "bench needs a short and a long MC-Gen condition".into()
    })?;
    let base = overall(&b.report, "Baseline")?;
    let mut failures = Vec::new();
    for (_, g) in &gens {
        let v = overall(&b.report, g)?;
        if !(base < v) {
            failures.push(format!("Baseline {base:.3} !< {g} {v:.3}"));
        }
    }
    let (short, long) = (gens.iter().min().unwrap(), gens.iter().max().unwrap());
    let (vs, vl) = (overall(&b.report, &short.1)?, overall(&b.report, &long.1)?);
    if !(vl >= vs) {
        failures.push(format!("{} {vl:.3} < {} {vs:.3}", long.1, short.1));
    }
    for dev in b.cfg.devices.iter().map(|d| d.name.as_str()) {
        let real = score(&b.report, "Real", dev).ok_or_else(|| format!("Real has no {dev} score"))?;
        for other in labels.iter().filter(|l| *l != "Real") {
            if let Some(v) = score(&b.report, other, dev) {
                if v > real {
                    failures.push(format!("{dev}: {other} {v:.3} > Real {real:.3}"));
                }
            }
        }
    }
    for l in &labels {
        match score(&b.report, l, &b.cfg.source_device) {
            Some(v) if v < SOURCE_F1_MIN => failures.push(format!("{l} source F1 {v:.3}")),
            None if !l.contains("Adapt") => failures.push(format!("{l} has no source score")),
            _ => {}
        }
    }
    if let Some(t) = b.elapsed {
        if t > BENCH_BUDGET {
            failures.push(format!("bench took {t:?}"));
        }
    }
    let detail = format!(
        "Baseline {base:.3}, {} {vs:.3}, {} {vl:.3}, Real {:.3}{}",
        short.1,
        long.1,
        overall(&b.report, "Real")?,
        b.elapsed.map(|t| format!(", run {t:.0?}")).unwrap_or_default()
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

fn c6_adaptation(b: &Bench) -> Outcome {
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    let mut ps = Vec::new();
    for c in &b.cfg.conditions {
        if let Condition::McAdapt { target, p, .. } = c {
            let base = score(&b.report, "Baseline", target).ok_or("Baseline lacks the adapt target")?;
            let v = score(&b.report, &c.label(), target).ok_or_else(|| format!("no score for {}", c.label()))?;
            parts.push(format!("{} {v:.3} vs Baseline {base:.3}", c.label()));
            if v < base {
                failures.push(c.label());
            }
            ps.push(*p);
        }
    }
    ensure(ps.contains(&0.5) && ps.contains(&1.0), || {
        "bench needs adapt conditions at p = 0.5 and 1.0".into()
    })?;
    let detail = parts.join("; ");
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; below baseline: {}", failures.join(", ")))
    }
}

fn c7_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let cfg = tiny_config(&tmp.path().join(run));
        Pipeline::new(&cfg)
            .and_then(|p| p.run_all())
            .map_err(|e| format!("run {run}: {e}"))?;
        let read = |f: &str| std::fs::read(cfg.out_dir.join("eval").join(f)).map_err(|e| format!("{f}: {e}"));
        bytes.push((read("report.json")?, read("table.txt")?));
    }
    ensure(bytes[0].0 == bytes[1].0, || "report.json differs between runs".into())?;
    ensure(bytes[0].1 == bytes[1].1, || "table.txt differs between runs".into())?;
    Ok(format!(
        "two full runs, report.json ({} B) and table.txt identical, {:.0?}",
        bytes[0].0.len(),
        t0.elapsed()
    ))
}

fn check_alignment(c: &Corpus, devices: usize) -> bool {
    c.is_counterpart_complete() && c.n_segments() * devices == c.entries().len()
}

fn c8_protocol(b: &Bench) -> Outcome {
    let (splits, meta) = read_corpus(&b.dir.join("corpus")).map_err(|e| e.to_string())?;
    let parts = [&splits.mc_train, &splits.sec_train, &splits.val];
    let counts = parts.map(|c| c.n_segments());
    let total: usize = counts.iter().sum();
    ensure(counts.to_vec() == meta.segments.to_vec(), || {
        "manifest counts disagree with corpus.json".into()
    })?;
    for (n, f) in counts.iter().zip(b.cfg.split.fractions) {
        let exact = f * total as f64;
        ensure((*n as f64 - exact).abs() <= 1.0, || {
            format!("split {counts:?} of {total}: {n} vs {exact:.1}")
        })?;
    }
    let n_dev = b.cfg.devices.len();
    ensure(parts.iter().all(|c| check_alignment(c, n_dev)), || {
        "a split is missing counterparts".into()
    })?;
    let mut ids: Vec<u32> = parts.iter().flat_map(|c| c.segment_classes().into_keys()).collect();
    let n_ids = ids.len();
    ids.sort_unstable();
    ids.dedup();
    ensure(ids.len() == n_ids, || "a segment appears in two splits".into())?;

    let a = &b.cfg.activity;
    let (st, dt) = (a.sparse_thresh, a.dense_thresh);
    ensure((st, dt) == (0.10, 0.50), || format!("bench thresholds are {st}/{dt}"))?;
    let below = |t: f64| f64::from_bits(t.to_bits() - 1);
    ensure(
        keep_segment(st, true, st, dt) && !keep_segment(below(st), true, st, dt),
        || "sparse boundary".into(),
    )?;
    ensure(
        keep_segment(dt, false, st, dt) && !keep_segment(below(dt), false, st, dt),
        || "dense boundary".into(),
    )?;
    let mut kept = 0;
    for e in parts.iter().flat_map(|c| c.entries()) {
        let sparse = b.cfg.classes[e.class_id].sparse;
        ensure(keep_segment(e.origin.active_fraction, sparse, st, dt), || {
            format!(
                "segment {} kept with activity {}",
                e.segment_id, e.origin.active_fraction
            )
        })?;
        kept += 1;
    }

    let mut buf = ReplayBuffer::<f32>::new(50, 8);
    let item = |v: f32| Tensor::new(&[1], vec![v]).unwrap();
    for i in 0..50 {
        buf.query(item(-1.0 - i as f32));
    }
    let trials = 10_000;
    let reused = (0..trials)
        .filter(|&i| buf.query(item(i as f32)) != item(i as f32))
        .count();
    let rate = reused as f64 / trials as f64;
    ensure((rate - REUSE_RATE).abs() <= REUSE_TOL, || {
        format!("buffer reuse rate {rate:.4}")
    })?;
    Ok(format!(
        "split {counts:?} of {total}, {kept} entries above thresholds, buffer reuse {rate:.4}"
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, what: &str, r: Outcome| match &r {
        Ok(d) => println!("PASS {n} {what}: {d}"),
        Err(d) => {
            failed += 1;
            println!("FAIL {n} {what}: {d}")
        }
    };
    report(1, "gradient suite", c1_gradients());
    report(2, "oracle equivalence", c2_oracles());
    report(3, "augmentation identities", c3_identities());
    report(4, "learned response recovery", c4_response());
    match bench() {
        Ok(b) => {
            report(5, "generalization ordering", c5_generalization(&b));
            report(6, "adaptation ordering", c6_adaptation(&b));
            report(7, "determinism", c7_determinism());
            report(8, "protocol conformance", c8_protocol(&b));
        }
        Err(e) => {
            for (n, what) in [
                (5, "generalization ordering"),
                (6, "adaptation ordering"),
                (8, "protocol conformance"),
            ] {
                report(n, what, Err(format!("bench run failed: {e}")));
            }
            report(7, "determinism", c7_determinism());
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
