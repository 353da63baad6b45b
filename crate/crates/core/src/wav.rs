//! RIFF/WAVE input and output.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::SignalBuffer;

/// Sample encoding used when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    #[default]
    Float32,
    Pcm16,
}

/// What to do with samples outside [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClipPolicy {
    #[default]
    Clip,
    Error,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WriteOptions {
    pub format: SampleFormat,
    pub clip: ClipPolicy,
}

/// Read a mono or multichannel PCM-16 / float-32 file, averaging channels.
pub fn read_wav(path: impl AsRef<Path>) -> Result<SignalBuffer> {
    let path = path.as_ref();
    let read_err = |e: hound::Error| Error::AudioRead {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = hound::WavReader::open(path).map_err(read_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedFormat("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(read_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(read_err)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!("{fmt:?} with {bits} bits")));
        }
    };
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    SignalBuffer::new(mono, spec.sample_rate)
}

/// Write `buffer` as a mono file. Returns the number of samples that were
/// hard-clipped to [-1, 1].
pub fn write_wav(buffer: &SignalBuffer, path: impl AsRef<Path>, opts: WriteOptions) -> Result<usize> {
    let path = path.as_ref();
    let clipped = buffer.samples().iter().filter(|s| s.abs() > 1.0).count();
    if clipped > 0 && opts.clip == ClipPolicy::Error {
        return Err(Error::Clipping { count: clipped });
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: match opts.format {
            SampleFormat::Float32 => 32,
            SampleFormat::Pcm16 => 16,
        },
        sample_format: match opts.format {
            SampleFormat::Float32 => hound::SampleFormat::Float,
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
        },
    };
    let write_err = |e: hound::Error| Error::AudioWrite {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(write_err)?;
    for &s in buffer.samples() {
        let s = s.clamp(-1.0, 1.0);
        match opts.format {
            SampleFormat::Float32 => writer.write_sample(s as f32),
            SampleFormat::Pcm16 => writer.write_sample(pcm16(s)),
        }
        .map_err(write_err)?;
    }
    writer.finalize().map_err(write_err)?;
    Ok(clipped)
}

fn pcm16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
