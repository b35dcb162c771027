use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::MelFilterbank;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub hz: f64,
    pub db: f64,
}

/// A simulated recording device: a magnitude response given by control
/// points interpolated linearly in log-frequency, additive Gaussian noise and
/// a hard clipper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub name: String,
    pub gain_curve: Vec<GainPoint>,
    /// RMS noise level in dB relative to full scale; `None` disables noise.
    pub noise_floor_db: Option<f64>,
    pub clip_level: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidProfile("empty name".into()));
        }
        if self.gain_curve.is_empty() {
            return Err(Error::InvalidProfile(format!("{}: empty gain curve", self.name)));
        }
        for p in &self.gain_curve {
            if !(p.hz > 0.0 && p.hz.is_finite()) {
                return Err(Error::InvalidProfile(format!(
                    "{}: control frequency {} must be positive",
                    self.name, p.hz
                )));
            }
            if !(-40.0..=40.0).contains(&p.db) {
                return Err(Error::InvalidProfile(format!(
                    "{}: gain {} dB outside [-40, 40]",
                    self.name, p.db
                )));
            }
        }
        if self.gain_curve.windows(2).any(|w| w[0].hz >= w[1].hz) {
            return Err(Error::InvalidProfile(format!(
                "{}: control frequencies must be strictly increasing",
                self.name
            )));
        }
        if !(self.clip_level > 0.0 && self.clip_level <= 1.0) {
            return Err(Error::InvalidProfile(format!(
                "{}: clip level {} outside (0, 1]",
                self.name, self.clip_level
            )));
        }
        if let Some(n) = self.noise_floor_db {
            if !n.is_finite() {
                return Err(Error::InvalidProfile(format!("{}: noise floor not finite", self.name)));
            }
        }
        Ok(())
    }

    /// Gain in dB at `hz`, held constant outside the control range.
    pub fn gain_db_at(&self, hz: f64) -> f64 {
        let pts = &self.gain_curve;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if hz <= first.hz {
            return first.db;
        }
        if hz >= last.hz {
            return last.db;
        }
        let i = pts.partition_point(|p| p.hz <= hz);
        let (a, b) = (pts[i - 1], pts[i]);
        let t = (libm::log(hz) - libm::log(a.hz)) / (libm::log(b.hz) - libm::log(a.hz));
        a.db + t * (b.db - a.db)
    }

    pub fn amplitude_at(&self, hz: f64) -> f64 {
        libm::pow(10.0, self.gain_db_at(hz) / 20.0)
    }

    pub fn is_linear(&self) -> bool {
        self.noise_floor_db.is_none() && self.clip_level >= 1.0
    }
}

pub fn flat_profile(name: &str) -> DeviceProfile {
    DeviceProfile {
        name: name.to_string(),
        gain_curve: vec![GainPoint { hz: 1000.0, db: 0.0 }],
        noise_floor_db: None,
        clip_level: 1.0,
    }
}

/// High shelf reaching `gain_db` above `cutoff_hz`, with a one-octave
/// transition centred on the cutoff.
pub fn shelf_profile(name: &str, cutoff_hz: f64, gain_db: f64) -> DeviceProfile {
    let s = libm::sqrt(2.0);
    DeviceProfile {
        name: name.to_string(),
        gain_curve: vec![
            GainPoint {
                hz: cutoff_hz / s,
                db: 0.0,
            },
            GainPoint {
                hz: cutoff_hz * s,
                db: gain_db,
            },
        ],
        noise_floor_db: None,
        clip_level: 1.0,
    }
}

fn pts(points: &[(f64, f64)]) -> Vec<GainPoint> {
    points.iter().map(|&(hz, db)| GainPoint { hz, db }).collect()
}

/// One flat source device and six colored targets.
pub fn default_suite() -> Vec<DeviceProfile> {
    let dev = |name: &str, curve: &[(f64, f64)], noise: f64, clip: f64| DeviceProfile {
        name: name.to_string(),
        gain_curve: pts(curve),
        noise_floor_db: Some(noise),
        clip_level: clip,
    };
    vec![
        dev("source", &[(1000.0, 0.0)], -90.0, 1.0),
        dev("t1_bright", &[(700.0, 0.0), (2800.0, 12.0)], -85.0, 1.0),
        dev(
            "t2_presence",
            &[(1200.0, 0.0), (3500.0, 10.0), (8000.0, 0.0)],
            -85.0,
            1.0,
        ),
        dev(
            "t3_thin",
            &[
                (150.0, -30.0),
                (900.0, -12.0),
                (2000.0, 0.0),
                (6000.0, 0.0),
                (10_000.0, -12.0),
            ],
            -80.0,
            1.0,
        ),
        dev("t4_clipping", &[(300.0, -4.0), (1500.0, 3.0)], -85.0, 0.12),
        dev("t5_noisy", &[(500.0, 2.0), (4000.0, -3.0)], -45.0, 1.0),
        dev("t6_dark", &[(800.0, 0.0), (2500.0, -12.0), (7000.0, -28.0)], -85.0, 1.0),
    ]
}

/// Band power of white input through the device, per mel band, in dB:
/// `10·log10(Σ w_k |H(f_k)|² / Σ w_k)`. The difference of two devices'
/// responses is the ground truth a learned conversion should reproduce.
pub fn analytic_mel_response(profile: &DeviceProfile, fb: &MelFilterbank) -> Vec<f64> {
    (0..fb.n_mels())
        .map(|m| {
            let (num, den) =
                fb.row(m)
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0)
                    .fold((0.0, 0.0), |(n, d), (b, &w)| {
                        let a = profile.amplitude_at(fb.bin_hz(b));
                        (n + w * a * a, d + w)
                    });
            10.0 * libm::log10(num / den)
        })
        .collect()
}
