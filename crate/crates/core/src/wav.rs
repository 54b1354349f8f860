//! RIFF WAV input/output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, MultichannelFrame, Result};

/// Reads a WAV file (PCM 8/16/24/32-bit or 32-bit float) into a
/// channel-major frame with samples scaled to `[-1, 1]`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelFrame> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let n_channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    if n_channels == 0 {
        return Err(Error::InvalidArgument(format!("{} has no channels", path.display())));
    }
    let n_samples = interleaved.len() / n_channels;
    let mut data = vec![0.0; n_channels * n_samples];
    for (i, frame) in interleaved.chunks_exact(n_channels).enumerate() {
        for (c, v) in frame.iter().enumerate() {
            data[c * n_samples + i] = *v;
        }
    }
    MultichannelFrame::new(spec.sample_rate as f64, n_channels, n_samples, data)
}

/// Writes a channel-major frame as 32-bit IEEE float WAV.
pub fn write_wav_f32(path: impl AsRef<Path>, frame: &MultichannelFrame) -> Result<()> {
    let spec = WavSpec {
        channels: frame.n_channels() as u16,
        sample_rate: frame.fs.round() as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for i in 0..frame.n_samples() {
        for c in 0..frame.n_channels() {
            writer.write_sample(frame.channel(c)[i] as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

/// Writes a channel-major frame as 16-bit PCM WAV, clipping to `[-1, 1]`.
pub fn write_wav_i16(path: impl AsRef<Path>, frame: &MultichannelFrame) -> Result<()> {
    let spec = WavSpec {
        channels: frame.n_channels() as u16,
        sample_rate: frame.fs.round() as u32,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    for i in 0..frame.n_samples() {
        for c in 0..frame.n_channels() {
            let v = (frame.channel(c)[i].clamp(-1.0, 1.0) * 32767.0).round() as i16;
            writer.write_sample(v)?;
        }
    }
    writer.finalize()?;
    Ok(())
}
