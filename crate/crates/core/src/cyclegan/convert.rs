use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::nets::Generator;
use super::train::{spec_batch, CycleGanModel};
use crate::dsp::Spectrogram;
use crate::tensor::Tape;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AToB,
    BToA,
}

/// Samples per generator pass during conversion.
const CONVERT_BATCH: usize = 16;

/// Tile starts covering `n` frames with windows of `w`; the last tile is
/// aligned to the end, so tiles may overlap.
fn tile_starts(n: usize, w: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..n / w).map(|i| i * w).collect();
    if n % w != 0 {
        starts.push(n - w);
    }
    starts
}

impl CycleGanModel {
    pub fn generator(&self, dir: Direction) -> &Generator<f32> {
        match dir {
            Direction::AToB => &self.f,
            Direction::BToA => &self.g,
        }
    }

    pub fn source_device(&self, dir: Direction) -> &str {
        match dir {
            Direction::AToB => &self.device_a,
            Direction::BToA => &self.device_b,
        }
    }

    pub fn target_device(&self, dir: Direction) -> &str {
        match dir {
            Direction::AToB => &self.device_b,
            Direction::BToA => &self.device_a,
        }
    }

    /// Converts each spectrogram, keeping its shape. Inputs must be
    /// `n_mels × patch_frames` unless `tiling` is set, in which case longer
    /// inputs are covered by patch-wide tiles and overlaps are averaged.
    pub fn convert_many(&self, xs: &[&Spectrogram], dir: Direction, tiling: bool) -> Result<Vec<Spectrogram>> {
        let w = self.patch_frames;
        let mut jobs = Vec::new();
        for (i, x) in xs.iter().enumerate() {
            let fits = x.n_mels() == self.n_mels && x.n_frames() == w;
            let tileable = tiling && x.n_mels() == self.n_mels && x.n_frames() >= w;
            if !fits && !tileable {
                return Err(Error::shape(
                    "convert",
                    format!(
                        "input {}x{} vs model patch {}x{w}{}",
                        x.n_mels(),
                        x.n_frames(),
                        self.n_mels,
                        if tiling { "" } else { " (tiling disabled)" }
                    ),
                ));
            }
            jobs.extend(tile_starts(x.n_frames(), w).into_iter().map(|s| (i, s)));
        }
        let mut sums: Vec<Vec<f32>> = xs.iter().map(|x| vec![0.0; x.values().len()]).collect();
        let mut counts: Vec<Vec<u16>> = xs.iter().map(|x| vec![0; x.n_frames()]).collect();
        let net = self.generator(dir);
        for chunk in jobs.chunks(CONVERT_BATCH) {
            let specs: Vec<&Spectrogram> = chunk.iter().map(|&(i, _)| xs[i]).collect();
            let starts: Vec<usize> = chunk.iter().map(|&(_, s)| s).collect();
            let batch = spec_batch(&specs, &starts, w, &self.norm)?;
            let mut t = Tape::new();
            let vars = net.params.bind_frozen(&mut t)?;
            let x = t.constant(batch)?;
            let y = net.forward(&mut t, &vars, x)?;
            let out = t.value(y).data();
            for (k, &(i, start)) in chunk.iter().enumerate() {
                let frames = xs[i].n_frames();
                let tile = &out[k * self.n_mels * w..(k + 1) * self.n_mels * w];
                for m in 0..self.n_mels {
                    let row = &mut sums[i][m * frames + start..m * frames + start + w];
                    for (d, &u) in row.iter_mut().zip(&tile[m * w..(m + 1) * w]) {
                        *d += self.norm.inverse(u);
                    }
                }
                counts[i][start..start + w].iter_mut().for_each(|c| *c += 1);
            }
        }
        xs.iter()
            .zip(sums)
            .zip(counts)
            .map(|((x, mut s), c)| {
                let frames = x.n_frames();
                for (j, v) in s.iter_mut().enumerate() {
                    *v /= c[j % frames] as f32;
                }
                x.with_values(s)
            })
            .collect()
    }
}

/// Converts one spectrogram; see [`CycleGanModel::convert_many`].
pub fn convert(model: &CycleGanModel, x: &Spectrogram, dir: Direction, tiling: bool) -> Result<Spectrogram> {
    Ok(model.convert_many(&[x], dir, tiling)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_cover_all_frames() {
        assert_eq!(tile_starts(80, 80), vec![0]);
        assert_eq!(tile_starts(81, 80), vec![0, 1]);
        assert_eq!(tile_starts(81, 32), vec![0, 32, 49]);
        assert_eq!(tile_starts(64, 32), vec![0, 32]);
    }
}
