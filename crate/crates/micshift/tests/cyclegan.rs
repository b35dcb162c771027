use micshift::ckpt::McCheckpoint;
use micshift::Provenance;
use micshift_core::cyclegan::{
    hyperparam_search, train_mc, Direction, DiscriminatorCfg, GeneratorCfg, McTrainConfig, McTrainOutcome,
    SearchStrategy,
};
use micshift_core::device_sim::{build_corpus, default_classes, flat_profile, shelf_profile, Corpus, CorpusConfig};
use micshift_core::dsp::Spectrogram;

fn corpus(n_segments: u32) -> Corpus {
    let devices = vec![flat_profile("flat"), shelf_profile("shelf", 2000.0, 6.0)];
    let mut classes = default_classes();
    classes.truncate(2);
    let cfg = CorpusConfig {
        n_events: 20,
        seed: 5,
        ..Default::default()
    };
    let c = build_corpus(&classes, &devices, &cfg).unwrap();
    assert!(c.n_segments() >= n_segments as usize);
    c.subset(|id| id < n_segments)
}

fn cfg(epochs: usize) -> McTrainConfig {
    McTrainConfig {
        epochs,
        checkpoint_every: 1,
        batch_size: 4,
        patch_frames: 16,
        generator: GeneratorCfg {
            base_channels: 4,
            n_resblocks: 1,
            ..Default::default()
        },
        discriminator: DiscriminatorCfg { base_channels: 4 },
        seed: 3,
        ..Default::default()
    }
}

fn train(c: &Corpus, epochs: usize) -> McTrainOutcome {
    train_mc(c, ("flat", "shelf"), &cfg(epochs), &mut ()).unwrap()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let c = corpus(8);
    let out = train(&c, 1);
    let ck = McCheckpoint {
        model: out.model,
        optim: out.optim,
        config: cfg(1),
        epoch: 1,
        provenance: Provenance {
            config_hash: "ab".repeat(32),
            seed: 3,
        },
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("epoch_1.mckp");
    ck.save(&path).unwrap();
    let back = McCheckpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let again = dir.path().join("again.mckp");
    back.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

    let x = &c.by_device("flat").next().unwrap().spectrogram;
    let a = ck.model.convert_many(&[x], Direction::AToB, true).unwrap();
    let b = back.model.convert_many(&[x], Direction::AToB, true).unwrap();
    assert_eq!(a, b);
}

#[test]
fn convert_then_reverse_keeps_shape_and_stays_finite() {
    let c = corpus(8);
    let m = train(&c, 1).model;
    let xs: Vec<&Spectrogram> = c.by_device("flat").map(|e| &e.spectrogram).collect();
    let there = m.convert_many(&xs, Direction::AToB, true).unwrap();
    let refs: Vec<&Spectrogram> = there.iter().collect();
    let back = m.convert_many(&refs, Direction::BToA, true).unwrap();
    for (x, y) in xs.iter().zip(&back) {
        assert_eq!(
            (y.n_mels(), y.n_frames(), y.hop(), y.sample_rate()),
            (x.n_mels(), x.n_frames(), x.hop(), x.sample_rate())
        );
        assert!(y.values().iter().all(|v| v.is_finite()));
    }
    assert_eq!(m.source_device(Direction::BToA), "shelf");
    assert_eq!(m.target_device(Direction::BToA), "flat");
}

#[test]
fn training_is_deterministic() {
    let c = corpus(8);
    let a = train(&c, 2);
    let b = train(&c, 2);
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 2);
}

#[test]
fn single_iteration_search() {
    let c = corpus(12);
    let (train, val) = (c.subset(|id| id < 8), c.subset(|id| id >= 8));
    let out = hyperparam_search(&train, &val, ("flat", "shelf"), &cfg(1), 1, SearchStrategy::Random, 9).unwrap();
    assert_eq!(out.trials.len(), 1);
    let t = &out.trials[0];
    assert!((2e-5..=2e-3).contains(&t.lr_init), "{}", t.lr_init);
    assert!((10..=50).contains(&t.halve_interval));
    assert_eq!(out.best.lr_init, t.lr_init);
    assert_eq!(out.best_score, t.score);
    assert!(out.best_score.is_finite());
}
