//! Augmentation baselines and conversion-based augmentation.
//!
//! Every operation is a pure function of its inputs and an explicit RNG, so
//! callers derive one stream per (epoch, item, spec) and stay reproducible.

mod mic;
mod spec;
mod wave;

pub use mic::{mic_convert_augment, mic_convert_choice, ConversionCache, McMode, ModelConverter, SpectrogramConverter};
pub use spec::{
    apply_gain_curve, filter_augment, filter_gain_curve, freq_mixstyle, freq_mixstyle_with, freq_stats, mask_freq,
    mask_time, mixup, mixup_with, rfn, spec_augment, FilterAugmentCfg, RfnAxes, SpecAugmentCfg, RFN_EPS,
};
pub use wave::{gaussian_noise, pitch_shift, reverb, synthetic_rir};

use alloc::format;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{Spectrogram, Waveform};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Longest synthetic impulse response, in seconds.
const MAX_RIR_S: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentKind {
    GaussianNoise {
        snr_db: (f64, f64),
    },
    Reverb {
        t60_s: (f64, f64),
    },
    PitchShift {
        semitones: (f64, f64),
    },
    SpecAugment(SpecAugmentCfg),
    Mixup {
        alpha: f64,
    },
    FilterAugment(FilterAugmentCfg),
    FreqMixstyle {
        alpha: f64,
    },
    /// Not a random transform: configures normalization layers in the
    /// classifier. The gate probability is ignored.
    Rfn {
        relax: f64,
        axes: RfnAxes,
    },
    MicConvert {
        mode: McMode,
    },
}

/// Where in the pipeline a kind operates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Waveform,
    Spectrogram,
    Batch,
    Layer,
    /// Needs trained converters; see [`mic_convert_augment`].
    Conversion,
}

impl AugmentKind {
    pub fn stage(&self) -> Stage {
        match self {
            Self::GaussianNoise { .. } | Self::Reverb { .. } | Self::PitchShift { .. } => Stage::Waveform,
            Self::SpecAugment(_) | Self::FilterAugment(_) => Stage::Spectrogram,
            Self::Mixup { .. } | Self::FreqMixstyle { .. } => Stage::Batch,
            Self::Rfn { .. } => Stage::Layer,
            Self::MicConvert { .. } => Stage::Conversion,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::GaussianNoise { .. } => "gaussian_noise",
            Self::Reverb { .. } => "reverb",
            Self::PitchShift { .. } => "pitch_shift",
            Self::SpecAugment(_) => "spec_augment",
            Self::Mixup { .. } => "mixup",
            Self::FilterAugment(_) => "filter_augment",
            Self::FreqMixstyle { .. } => "freq_mixstyle",
            Self::Rfn { .. } => "rfn",
            Self::MicConvert { .. } => "mic_convert",
        }
    }

    /// The kind with default parameters, looked up by [`AugmentKind::name`].
    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "gaussian_noise" => Self::GaussianNoise { snr_db: (10.0, 30.0) },
            "reverb" => Self::Reverb { t60_s: (0.2, 0.8) },
            "pitch_shift" => Self::PitchShift { semitones: (-2.0, 2.0) },
            "spec_augment" => Self::SpecAugment(SpecAugmentCfg::default()),
            "mixup" => Self::Mixup { alpha: 0.2 },
            "filter_augment" => Self::FilterAugment(FilterAugmentCfg::default()),
            "freq_mixstyle" => Self::FreqMixstyle { alpha: 0.3 },
            "rfn" => Self::Rfn {
                relax: 0.5,
                axes: RfnAxes::Joint,
            },
            "mic_convert" => Self::MicConvert {
                mode: McMode::default(),
            },
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    0.5
}

fn check_range(what: &str, (lo, hi): (f64, f64), min: f64, max: f64) -> Result<()> {
    if lo.is_nan() || hi.is_nan() || lo > hi || lo < min || hi > max {
        return Err(Error::arg(format!("{what} range ({lo}, {hi}) outside [{min}, {max}]")));
    }
    Ok(())
}

impl AugmentSpec {
    pub fn new(kind: AugmentKind, p: f64) -> Result<Self> {
        let s = Self { kind, p };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::arg(format!("probability {} outside [0, 1]", self.p)));
        }
        let positive = |what: &str, a: f64| {
            if a > 0.0 && a.is_finite() {
                Ok(())
            } else {
                Err(Error::arg(format!("{what} {a} must be positive")))
            }
        };
        match self.kind {
            AugmentKind::GaussianNoise { snr_db } => check_range("snr_db", snr_db, -20.0, f64::INFINITY),
            AugmentKind::Reverb { t60_s } => check_range("t60_s", t60_s, 0.2, MAX_RIR_S),
            AugmentKind::PitchShift { semitones } => check_range("semitones", semitones, -2.0, 2.0),
            AugmentKind::SpecAugment(_) => Ok(()),
            AugmentKind::Mixup { alpha } | AugmentKind::FreqMixstyle { alpha } => positive("alpha", alpha),
            AugmentKind::FilterAugment(c) => {
                check_range("gain_db", c.gain_db, -6.0, 6.0)?;
                let (lo, hi) = c.n_bands;
                if lo < 2 || lo > hi {
                    return Err(Error::arg(format!("band count range {lo}..={hi}")));
                }
                Ok(())
            }
            AugmentKind::Rfn { relax, .. } => check_range("relax", (relax, relax), 0.0, 1.0),
            AugmentKind::MicConvert { .. } => Ok(()),
        }
    }

    /// The probability gate; draws exactly one number.
    pub fn fires(&self, rng: &mut impl Rng) -> bool {
        rng.random::<f64>() < self.p
    }

    fn wrong_stage(&self, want: &str) -> Error {
        Error::arg(format!("{} is not a {want} augmentation", self.kind.name()))
    }

    pub fn apply_waveform(&self, w: &Waveform, rng: &mut impl Rng) -> Result<Waveform> {
        if self.kind.stage() != Stage::Waveform {
            return Err(self.wrong_stage("waveform"));
        }
        if !self.fires(rng) {
            return Ok(w.clone());
        }
        match self.kind {
            AugmentKind::GaussianNoise { snr_db } => gaussian_noise(w, snr_db, rng),
            AugmentKind::Reverb { t60_s: (lo, hi) } => {
                let t60 = if lo == hi { lo } else { rng.random_range(lo..=hi) };
                let max_len = (MAX_RIR_S * w.sample_rate() as f64) as usize;
                reverb(w, &synthetic_rir(t60, w.sample_rate(), max_len, rng)?)
            }
            AugmentKind::PitchShift { semitones: (lo, hi) } => {
                pitch_shift(w, if lo == hi { lo } else { rng.random_range(lo..=hi) })
            }
            _ => unreachable!(),
        }
    }

    pub fn apply_spectrogram(&self, s: &Spectrogram, rng: &mut impl Rng) -> Result<Spectrogram> {
        if self.kind.stage() != Stage::Spectrogram {
            return Err(self.wrong_stage("spectrogram"));
        }
        if !self.fires(rng) {
            return Ok(s.clone());
        }
        match &self.kind {
            AugmentKind::SpecAugment(c) => spec_augment(s, c, rng),
            AugmentKind::FilterAugment(c) => filter_augment(s, c, rng),
            _ => unreachable!(),
        }
    }

    /// Batch-level kinds on `x: [n, c, f, t]` with soft labels `y: [n, classes]`.
    pub fn apply_batch(
        &self,
        x: &Tensor<f32>,
        y: &Tensor<f32>,
        rng: &mut impl Rng,
    ) -> Result<(Tensor<f32>, Tensor<f32>)> {
        match self.kind {
            AugmentKind::Mixup { alpha } => {
                if self.fires(rng) {
                    mixup(x, y, alpha, rng)
                } else {
                    Ok((x.clone(), y.clone()))
                }
            }
            AugmentKind::FreqMixstyle { alpha } => Ok((freq_mixstyle(x, alpha, self.p, rng)?, y.clone())),
            _ => Err(self.wrong_stage("batch")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use alloc::vec;
    use alloc::vec::Vec;

    fn all_kinds() -> Vec<AugmentKind> {
        [
            "gaussian_noise",
            "reverb",
            "pitch_shift",
            "spec_augment",
            "mixup",
            "filter_augment",
            "freq_mixstyle",
            "rfn",
            "mic_convert",
        ]
        .iter()
        .map(|n| {
            let k = AugmentKind::by_name(n).unwrap();
            assert_eq!(k.name(), *n);
            k
        })
        .collect()
    }

    #[test]
    fn gate_rates() {
        for p in [0.0, 0.3, 0.5, 1.0] {
            let spec = AugmentSpec::new(AugmentKind::Mixup { alpha: 0.2 }, p).unwrap();
            let mut rng = rng_from(11);
            let hits = (0..10_000).filter(|_| spec.fires(&mut rng)).count();
            assert!((hits as f64 / 10_000.0 - p).abs() <= 0.02, "{p}: {hits}");
            if p == 0.0 || p == 1.0 {
                assert_eq!(hits as f64, p * 10_000.0);
            }
        }
        assert!(AugmentSpec::new(AugmentKind::Mixup { alpha: 0.2 }, 1.2).is_err());
    }

    #[test]
    fn p_zero_is_identity_for_every_stage() {
        let w = Waveform::new((0..4096).map(|i| libm::sin(i as f64 * 0.05)).collect(), 22_050).unwrap();
        let s = Spectrogram::new(16, 24, 256, 22_050, (0..384).map(|i| (i % 7) as f32 - 3.0).collect()).unwrap();
        let x = Tensor::from_fn(&[3, 1, 4, 6], |i| (i % 5) as f32);
        let y = Tensor::from_fn(&[3, 2], |i| (i % 2) as f32);
        let mut rng = rng_from(3);
        for kind in all_kinds() {
            let spec = AugmentSpec::new(kind, 0.0).unwrap();
            match kind.stage() {
                Stage::Waveform => assert_eq!(spec.apply_waveform(&w, &mut rng).unwrap(), w),
                Stage::Spectrogram => assert_eq!(spec.apply_spectrogram(&s, &mut rng).unwrap(), s),
                Stage::Batch => assert_eq!(spec.apply_batch(&x, &y, &mut rng).unwrap(), (x.clone(), y.clone())),
                Stage::Layer | Stage::Conversion => {}
            }
        }
    }

    #[test]
    fn seeded_and_shape_preserving() {
        let w = Waveform::new((0..8000).map(|i| libm::sin(i as f64 * 0.07)).collect(), 22_050).unwrap();
        let s = Spectrogram::new(32, 40, 256, 22_050, (0..1280).map(|i| (i % 11) as f32 * 0.3).collect()).unwrap();
        for kind in all_kinds() {
            let spec = AugmentSpec::new(kind, 1.0).unwrap();
            match kind.stage() {
                Stage::Waveform => {
                    let a = spec.apply_waveform(&w, &mut rng_from(5)).unwrap();
                    assert_eq!(a.len(), w.len());
                    assert_eq!(a, spec.apply_waveform(&w, &mut rng_from(5)).unwrap());
                }
                Stage::Spectrogram => {
                    let a = spec.apply_spectrogram(&s, &mut rng_from(5)).unwrap();
                    assert_eq!((a.n_mels(), a.n_frames()), (32, 40));
                    assert_eq!(a, spec.apply_spectrogram(&s, &mut rng_from(5)).unwrap());
                }
                _ => {}
            }
        }
    }

    #[test]
    fn wrong_stage_and_validation() {
        let s = Spectrogram::new(2, 2, 256, 22_050, vec![0.0; 4]).unwrap();
        let spec = AugmentSpec::new(AugmentKind::Mixup { alpha: 0.2 }, 1.0).unwrap();
        assert!(spec.apply_spectrogram(&s, &mut rng_from(0)).is_err());
        assert!(AugmentSpec::new(AugmentKind::PitchShift { semitones: (-3.0, 1.0) }, 0.5).is_err());
        assert!(AugmentSpec::new(AugmentKind::Reverb { t60_s: (0.1, 0.5) }, 0.5).is_err());
        assert!(AugmentSpec::new(
            AugmentKind::Rfn {
                relax: 1.5,
                axes: RfnAxes::Joint
            },
            0.5
        )
        .is_err());
    }

    #[test]
    fn serde_shape() {
        let spec: AugmentSpec = serde_json::from_str(r#"{"kind":{"mixup":{"alpha":0.2}}}"#).unwrap();
        assert_eq!(spec.p, 0.5);
        let fa: AugmentSpec = serde_json::from_str(r#"{"kind":{"filter_augment":{}},"p":1.0}"#).unwrap();
        assert_eq!(fa.kind, AugmentKind::FilterAugment(FilterAugmentCfg::default()));
        assert!(serde_json::from_str::<AugmentSpec>(r#"{"kind":"mixup","q":1}"#).is_err());
    }
}
