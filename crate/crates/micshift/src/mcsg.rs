//! Spectrogram files: magic `MCSG`, version u16, then `n_mels`, `n_frames`,
//! `hop` and `sample_rate` as u32, then row-major f32 values. Everything is
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use micshift_core::dsp::Spectrogram;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MCSG";
const VERSION: u16 = 1;
/// Refuse headers describing more values than this; guards allocations on
/// corrupt input.
const MAX_VALUES: u64 = 1 << 28;

pub fn write_spectrogram(mut w: impl Write, s: &Spectrogram) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [s.n_mels() as u32, s.n_frames() as u32, s.hop(), s.sample_rate()] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in s.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::format("MCSG", format!("truncated: {e}")))?;
    Ok(b)
}

pub fn read_spectrogram(mut r: impl Read) -> Result<Spectrogram> {
    if &read_array::<4>(&mut r)? != MAGIC {
        return Err(Error::format("MCSG", "bad magic"));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::format("MCSG", format!("unsupported version {version}")));
    }
    let mut dims = [0u32; 4];
    for d in &mut dims {
        *d = u32::from_le_bytes(read_array(&mut r)?);
    }
    let [n_mels, n_frames, hop, sample_rate] = dims;
    let count = n_mels as u64 * n_frames as u64;
    if count > MAX_VALUES {
        return Err(Error::format(
            "MCSG",
            format!("{n_mels}x{n_frames} is implausibly large"),
        ));
    }
    let mut raw = vec![0u8; count as usize * 4];
    r.read_exact(&mut raw)
        .map_err(|e| Error::format("MCSG", format!("truncated values: {e}")))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::format("MCSG", e.to_string()))? != 0 {
        return Err(Error::format("MCSG", "trailing bytes"));
    }
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Spectrogram::new(
        n_mels as usize,
        n_frames as usize,
        hop,
        sample_rate,
        values,
    )?)
}

pub fn save_spectrogram(path: &Path, s: &Spectrogram) -> Result<()> {
    let f = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(f);
    write_spectrogram(&mut w, s).map_err(Error::io(path))?;
    w.flush().map_err(Error::io(path))
}

pub fn load_spectrogram(path: &Path) -> Result<Spectrogram> {
    let f = File::open(path).map_err(Error::io(path))?;
    read_spectrogram(BufReader::new(f))
}
