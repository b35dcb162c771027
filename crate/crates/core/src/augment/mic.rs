use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cyclegan::{CycleGanModel, Direction};
use crate::dsp::Spectrogram;
use crate::{Error, Result};

/// A fixed source-device → target-device spectrogram mapping.
pub trait SpectrogramConverter {
    fn source_device(&self) -> &str;
    fn target_device(&self) -> &str;
    fn convert_many(&self, xs: &[&Spectrogram]) -> Result<Vec<Spectrogram>>;

    fn convert(&self, x: &Spectrogram) -> Result<Spectrogram> {
        Ok(self.convert_many(&[x])?.remove(0))
    }
}

/// One direction of a trained conversion model, tiling inputs longer than
/// the training patch.
pub struct ModelConverter {
    pub model: CycleGanModel,
    pub dir: Direction,
}

impl SpectrogramConverter for ModelConverter {
    fn source_device(&self) -> &str {
        self.model.source_device(self.dir)
    }

    fn target_device(&self) -> &str {
        self.model.target_device(self.dir)
    }

    fn convert_many(&self, xs: &[&Spectrogram]) -> Result<Vec<Spectrogram>> {
        self.model.convert_many(xs, self.dir, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum McMode {
    /// Always converts to a uniformly chosen target; with `include_source`
    /// the untouched input is one more equally likely choice. `p` is unused.
    Gen { include_source: bool },
    /// Converts to the single target with probability `p`.
    Adapt,
}

impl Default for McMode {
    fn default() -> Self {
        Self::Gen { include_source: true }
    }
}

/// Index of the converter to apply, or `None` for pass-through.
pub fn mic_convert_choice(mode: McMode, n_targets: usize, p: f64, rng: &mut impl Rng) -> Result<Option<usize>> {
    if n_targets == 0 {
        return Err(Error::arg("microphone conversion needs at least one model"));
    }
    match mode {
        McMode::Gen { include_source } => {
            let k = rng.random_range(0..n_targets + include_source as usize);
            Ok((k < n_targets).then_some(k))
        }
        McMode::Adapt => {
            if n_targets != 1 {
                return Err(Error::arg(format!("adapt mode takes one target, got {n_targets}")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::arg(format!("probability {p} outside [0, 1]")));
            }
            Ok((rng.random::<f64>() < p).then_some(0))
        }
    }
}

fn check_sources(source_device: &str, converters: &[Box<dyn SpectrogramConverter + Send + Sync>]) -> Result<()> {
    for c in converters {
        if c.source_device() != source_device {
            return Err(Error::DeviceMismatch {
                expected: c.source_device().to_string(),
                found: source_device.to_string(),
            });
        }
    }
    Ok(())
}

/// Converts `s`, recorded on `source_device`, with a randomly chosen model.
pub fn mic_convert_augment(
    s: &Spectrogram,
    source_device: &str,
    converters: &[Box<dyn SpectrogramConverter + Send + Sync>],
    mode: McMode,
    p: f64,
    rng: &mut impl Rng,
) -> Result<Spectrogram> {
    check_sources(source_device, converters)?;
    match mic_convert_choice(mode, converters.len(), p, rng)? {
        Some(k) => converters[k].convert(s),
        None => Ok(s.clone()),
    }
}

/// Every training spectrogram converted once by every model. Generators are
/// deterministic, so per-epoch augmentation only has to draw an index.
#[derive(Debug, Clone)]
pub struct ConversionCache {
    targets: Vec<String>,
    /// `converted[k][i]` is item `i` through converter `k`.
    converted: Vec<Vec<Spectrogram>>,
}

impl ConversionCache {
    pub fn build(
        xs: &[&Spectrogram],
        source_device: &str,
        converters: &[Box<dyn SpectrogramConverter + Send + Sync>],
    ) -> Result<Self> {
        check_sources(source_device, converters)?;
        let converted = converters
            .iter()
            .map(|c| c.convert_many(xs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            targets: converters.iter().map(|c| c.target_device().to_string()).collect(),
            converted,
        })
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn get(&self, converter: usize, item: usize) -> Option<&Spectrogram> {
        self.converted.get(converter)?.get(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use alloc::format;
    use alloc::vec;

    struct Shift(String, f32);

    impl SpectrogramConverter for Shift {
        fn source_device(&self) -> &str {
            "src"
        }
        fn target_device(&self) -> &str {
            &self.0
        }
        fn convert_many(&self, xs: &[&Spectrogram]) -> Result<Vec<Spectrogram>> {
            xs.iter()
                .map(|x| x.with_values(x.values().iter().map(|v| v + self.1).collect()))
                .collect()
        }
    }

    fn bank(n: usize) -> Vec<Box<dyn SpectrogramConverter + Send + Sync>> {
        (0..n)
            .map(|k| Box::new(Shift(format!("t{k}"), k as f32 + 1.0)) as Box<dyn SpectrogramConverter + Send + Sync>)
            .collect()
    }

    fn input() -> Spectrogram {
        Spectrogram::new(4, 5, 256, 22_050, vec![-1.0; 20]).unwrap()
    }

    #[test]
    fn adapt_gate_extremes() {
        let (s, one) = (input(), bank(1));
        let mut rng = rng_from(0);
        for _ in 0..200 {
            assert_eq!(
                mic_convert_augment(&s, "src", &one, McMode::Adapt, 0.0, &mut rng).unwrap(),
                s
            );
            assert_ne!(
                mic_convert_augment(&s, "src", &one, McMode::Adapt, 1.0, &mut rng).unwrap(),
                s
            );
        }
        assert!(mic_convert_choice(McMode::Adapt, 2, 0.5, &mut rng).is_err());
    }

    #[test]
    fn gen_mode_is_uniform() {
        let mut rng = rng_from(1);
        for include_source in [false, true] {
            let mode = McMode::Gen { include_source };
            let k = 6 + include_source as usize;
            let mut counts = vec![0usize; k];
            for _ in 0..6000 {
                let c = mic_convert_choice(mode, 6, 0.0, &mut rng).unwrap();
                counts[c.unwrap_or(6)] += 1;
            }
            for c in counts {
                assert!((c as f64 / 6000.0 - 1.0 / k as f64).abs() < 0.02);
            }
        }
    }

    #[test]
    fn device_mismatch_rejected() {
        let err = mic_convert_augment(&input(), "other", &bank(2), McMode::default(), 0.5, &mut rng_from(0));
        assert!(matches!(err, Err(Error::DeviceMismatch { .. })));
    }

    #[test]
    fn cache_matches_direct_conversion() {
        let s = input();
        let conv = bank(3);
        let cache = ConversionCache::build(&[&s, &s], "src", &conv).unwrap();
        assert_eq!(cache.targets(), ["t0", "t1", "t2"]);
        assert_eq!(cache.get(2, 1).unwrap(), &conv[2].convert(&s).unwrap());
        assert!(cache.get(3, 0).is_none());
    }
}
