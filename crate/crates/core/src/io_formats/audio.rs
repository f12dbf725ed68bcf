use std::io::Cursor;

use crate::error::{Error, Result};
use crate::fields::GridField;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate: u32,
    samples: Vec<f64>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite audio sample at index {i}"
            )));
        }
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// The clip as a 1D grid over the unit interval; the duration is kept in
    /// the buffer for export.
    pub fn to_grid_field(&self) -> Result<GridField> {
        GridField::new(vec![self.samples.len()], 1, self.samples.clone())
    }

    pub fn from_grid_field(grid: &GridField, sample_rate: u32) -> Result<Self> {
        if grid.resolution().len() != 1 || grid.dout() != 1 {
            return Err(Error::ShapeMismatch(
                "audio needs a 1D single-channel grid".into(),
            ));
        }
        Self::new(sample_rate, grid.values().to_vec())
    }
}

const FULL_SCALE: f64 = 32768.0;

/// Decodes a 16-bit PCM mono WAV file.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" {
        return Err(Error::parse(0, "missing RIFF chunk"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::parse(8, "RIFF form type is not WAVE"));
    }
    let format = |e: hound::Error| Error::Format(format!("WAV: {e}"));
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(format)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Format(format!(
            "WAV: expected mono, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Format(format!(
            "WAV: expected 16-bit PCM, found {} bits {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(format)?;
    AudioBuffer::new(spec.sample_rate, samples)
}

/// Encodes 16-bit PCM mono; samples outside the representable range clip.
pub fn write_wav(audio: &AudioBuffer) -> Result<Vec<u8>> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let format = |e: hound::Error| Error::Format(format!("WAV: {e}"));
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec).map_err(format)?;
        for &s in &audio.samples {
            let q = (s * FULL_SCALE)
                .round()
                .clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            writer.write_sample(q).map_err(format)?;
        }
        writer.finalize().map_err(format)?;
    }
    Ok(cursor.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_reads_as_zeros() {
        let audio = AudioBuffer::new(8000, vec![0.0; 100]).unwrap();
        let back = read_wav(&write_wav(&audio).unwrap()).unwrap();
        assert_eq!(back.sample_rate(), 8000);
        assert_eq!(back.samples(), &[0.0; 100][..]);
    }

    #[test]
    fn full_scale_sine_within_one_step() {
        let rate = 44100;
        let samples: Vec<f64> = (0..rate)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / rate as f64).sin())
            .collect();
        let audio = AudioBuffer::new(rate as u32, samples.clone()).unwrap();
        let back = read_wav(&write_wav(&audio).unwrap()).unwrap();
        let err = samples
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1.0 / 32768.0, "max error {err}");
    }

    #[test]
    fn quantised_audio_round_trips_exactly() {
        let samples: Vec<f64> = (-5..5).map(|k| k as f64 * 1000.0 / 32768.0).collect();
        let audio = AudioBuffer::new(22050, samples).unwrap();
        let bytes = write_wav(&audio).unwrap();
        assert_eq!(read_wav(&bytes).unwrap(), audio);
    }

    #[test]
    fn malformed_riff_is_a_parse_error() {
        assert!(matches!(
            read_wav(b"RIFX\0\0\0\0WAVE"),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            read_wav(b"RIFF\0\0\0\0AVI "),
            Err(Error::Parse { offset: 8, .. })
        ));
        assert!(matches!(read_wav(b"RIFF"), Err(Error::Parse { .. })));
        assert!(read_wav(b"RIFF\x24\0\0\0WAVEfmt ").is_err());
    }

    #[test]
    fn stereo_is_rejected() {
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(cursor.get_ref()), Err(Error::Format(_))));
    }

    #[test]
    fn grid_conversion() {
        let audio = AudioBuffer::new(100, vec![0.5, -0.25, 0.0]).unwrap();
        let g = audio.to_grid_field().unwrap();
        assert_eq!(g.resolution(), &[3]);
        assert_eq!(AudioBuffer::from_grid_field(&g, 100).unwrap(), audio);
        assert!((audio.duration_seconds() - 0.03).abs() < 1e-15);
    }
}
