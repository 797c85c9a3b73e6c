//! Discrete-time source signals: synthetic generators and WAV I/O.
//!
//! Every experiment is driven by a [`SignalBuffer`]. Synthetic sources are
//! described by a [`SourceSpec`]; noise is drawn from a seeded ChaCha
//! generator so equal specs always yield bit-identical buffers.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{validation, AncError, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 8000.0;

/// A finite run of real samples together with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl SignalBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(validation(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(validation(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Rejects empty buffers; simulations need at least one sample.
    pub fn ensure_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(validation("signal buffer is empty"))
        } else {
            Ok(())
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn truncated(&self, len: usize) -> SignalBuffer {
        let len = len.min(self.samples.len());
        SignalBuffer {
            samples: self.samples[..len].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Sinusoid,
    MultiTone,
    WhiteNoise,
    SinusoidPlusNoise,
    File,
}

/// Description of a synthetic (or file-backed) reference source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub kind: SourceKind,
    /// Tone frequencies; tonal kinds only.
    #[serde(default)]
    pub frequency_hz: Vec<f64>,
    /// One amplitude per tone, or a single amplitude shared by all tones.
    #[serde(default = "default_amplitude")]
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub noise_variance: f64,
    #[serde(default)]
    pub seed: u64,
    pub length_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn default_amplitude() -> Vec<f64> {
    vec![1.0]
}

impl SourceSpec {
    pub fn sinusoid(frequency_hz: f64, amplitude: f64, length_samples: usize) -> Self {
        Self {
            kind: SourceKind::Sinusoid,
            frequency_hz: vec![frequency_hz],
            amplitude: vec![amplitude],
            noise_variance: 0.0,
            seed: 0,
            length_samples,
            path: None,
        }
    }

    pub fn white_noise(variance: f64, seed: u64, length_samples: usize) -> Self {
        Self {
            kind: SourceKind::WhiteNoise,
            frequency_hz: Vec::new(),
            amplitude: vec![1.0],
            noise_variance: variance,
            seed,
            length_samples,
            path: None,
        }
    }

    fn is_tonal(&self) -> bool {
        matches!(
            self.kind,
            SourceKind::Sinusoid | SourceKind::MultiTone | SourceKind::SinusoidPlusNoise
        )
    }

    fn has_noise(&self) -> bool {
        matches!(
            self.kind,
            SourceKind::WhiteNoise | SourceKind::SinusoidPlusNoise
        )
    }

    /// Collects every violated constraint for the given sample rate.
    pub fn problems(&self, sample_rate_hz: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.length_samples == 0 {
            out.push("source.length_samples must be positive".to_string());
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            out.push(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            ));
            return out;
        }
        let nyquist = sample_rate_hz / 2.0;
        if self.is_tonal() {
            if self.frequency_hz.is_empty() {
                out.push("tonal source needs at least one frequency".to_string());
            }
            if self.kind == SourceKind::Sinusoid && self.frequency_hz.len() > 1 {
                out.push("sinusoid source takes exactly one frequency".to_string());
            }
            for f in &self.frequency_hz {
                if !(f.is_finite() && *f > 0.0) {
                    out.push(format!("frequency {f} Hz must be positive"));
                } else if *f >= nyquist {
                    out.push(format!(
                        "frequency {f} Hz is at or above Nyquist ({nyquist} Hz)"
                    ));
                }
            }
            if self.amplitude.len() != 1 && self.amplitude.len() != self.frequency_hz.len() {
                out.push(format!(
                    "got {} amplitudes for {} frequencies",
                    self.amplitude.len(),
                    self.frequency_hz.len()
                ));
            }
            for a in &self.amplitude {
                if !(a.is_finite() && *a > 0.0) {
                    out.push(format!("amplitude {a} must be positive"));
                }
            }
        }
        if self.has_noise() && !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            out.push(format!(
                "noise variance {} must be non-negative",
                self.noise_variance
            ));
        }
        if self.kind == SourceKind::File && self.path.is_none() {
            out.push("file source needs a path".to_string());
        }
        out
    }

    pub fn validate(&self, sample_rate_hz: f64) -> Result<()> {
        let problems = self.problems(sample_rate_hz);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(validation(problems.join("; ")))
        }
    }

    fn amplitude_of(&self, component: usize) -> f64 {
        if self.amplitude.len() == 1 {
            self.amplitude[0]
        } else {
            self.amplitude[component]
        }
    }
}

/// Synthesizes the buffer described by `spec`.
pub fn generate(spec: &SourceSpec, sample_rate_hz: f64) -> Result<SignalBuffer> {
    spec.validate(sample_rate_hz)?;
    let n = spec.length_samples;

    if spec.kind == SourceKind::File {
        // validate() guarantees the path is present
        let path = spec.path.as_deref().unwrap_or(Path::new(""));
        let loaded = load_wav(path)?;
        if (loaded.sample_rate_hz() - sample_rate_hz).abs() > 1e-9 {
            return Err(validation(format!(
                "{}: file sample rate {} Hz differs from scenario rate {} Hz (no resampling)",
                path.display(),
                loaded.sample_rate_hz(),
                sample_rate_hz
            )));
        }
        if loaded.len() < n {
            return Err(validation(format!(
                "{}: file holds {} samples, {} requested",
                path.display(),
                loaded.len(),
                n
            )));
        }
        return Ok(loaded.truncated(n));
    }

    let mut samples = vec![0.0; n];
    if spec.is_tonal() {
        for (c, &f) in spec.frequency_hz.iter().enumerate() {
            let amp = spec.amplitude_of(c);
            let omega = 2.0 * PI * f / sample_rate_hz;
            for (k, s) in samples.iter_mut().enumerate() {
                *s += amp * (omega * k as f64).sin();
            }
        }
    }
    if spec.has_noise() && spec.noise_variance > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_variance.sqrt())
            .map_err(|e| validation(format!("noise distribution: {e}")))?;
        for s in samples.iter_mut() {
            *s += normal.sample(&mut rng);
        }
    }
    SignalBuffer::new(samples, sample_rate_hz)
}

/// Seeded zero-mean Gaussian noise with the given variance.
pub fn white_noise(variance: f64, seed: u64, len: usize) -> Vec<f64> {
    if variance <= 0.0 {
        return vec![0.0; len];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // variance > 0 and finite here
    let normal = Normal::new(0.0, variance.sqrt()).expect("positive finite deviation");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// Reads a mono (or first-channel) PCM int16 / float32 WAV file.
pub fn load_wav(path: &Path) -> Result<SignalBuffer> {
    let wav_err = |source| AncError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    if channels > 1 {
        log::warn!(
            "{}: {} channels, using channel 0 only",
            path.display(),
            channels
        );
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (format, bits) => {
            return Err(AncError::UnsupportedEncoding(format!(
                "{}: {bits}-bit {format:?} PCM (expected 16-bit integer or 32-bit float)",
                path.display()
            )))
        }
    };
    if samples.is_empty() {
        return Err(validation(format!("{}: no audio data", path.display())));
    }
    SignalBuffer::new(samples, f64::from(spec.sample_rate))
}

/// Writes `buffer` as 16-bit mono PCM. Returns how many samples were clipped
/// into [-1, 1].
pub fn save_wav(buffer: &SignalBuffer, path: &Path) -> Result<usize> {
    let wav_err = |source| AncError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz().round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let mut clipped = 0;
    for &s in buffer.samples() {
        if s.abs() > 1.0 {
            clipped += 1;
        }
        writer.write_sample(quantize_i16(s)).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    if clipped > 0 {
        log::warn!("{}: clipped {clipped} samples to [-1, 1]", path.display());
    }
    Ok(clipped)
}

fn quantize_i16(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0)
        .round()
        .clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}
