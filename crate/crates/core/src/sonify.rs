//! Pitch sonification of training signals.
//!
//! Each signal is mapped linearly (or log-linearly) onto a sine
//! oscillator's frequency. Accuracy and loss are routed to the stereo
//! channels according to a [`SonificationMode`]; [`render`] synthesises
//! the result offline for headless runs.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::EpochMetrics;

pub const MIN_FREQ: f64 = 20.0;
pub const MAX_FREQ: f64 = 8000.0;
pub const AMPLITUDE: f64 = 0.5;
pub const RAMP_SECONDS: f64 = 0.005;
pub const WAV_SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SonificationMode {
    /// Accuracy on both channels.
    #[default]
    #[serde(rename = "accuracy")]
    AccuracyBoth,
    /// Loss on the left channel, accuracy on the right.
    #[serde(rename = "split")]
    Split,
    /// Loss on both channels.
    #[serde(rename = "loss")]
    LossBoth,
}

impl SonificationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SonificationMode::AccuracyBoth => "accuracy",
            SonificationMode::Split => "split",
            SonificationMode::LossBoth => "loss",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(SonificationMode::AccuracyBoth),
            "split" => Ok(SonificationMode::Split),
            "loss" => Ok(SonificationMode::LossBoth),
            other => Err(Error::invalid(format!(
                "unknown sonification mode `{other}` (accuracy|loss|split)"
            ))),
        }
    }
}

/// `(left, right)` channel frequencies for the given mode.
pub fn route(mode: SonificationMode, freq_accuracy: f64, freq_loss: f64) -> (f64, f64) {
    match mode {
        SonificationMode::AccuracyBoth => (freq_accuracy, freq_accuracy),
        SonificationMode::Split => (freq_loss, freq_accuracy),
        SonificationMode::LossBoth => (freq_loss, freq_loss),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalSource {
    Accuracy,
    Loss,
    LearningRate,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyScale {
    Linear,
    /// Linear in `ln(value)`; for signals spanning decades.
    LogDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMapping {
    pub source: SignalSource,
    pub f_min: f64,
    pub f_max: f64,
    pub domain_min: f64,
    pub domain_max: f64,
    pub scale: FrequencyScale,
}

impl FrequencyMapping {
    pub fn accuracy() -> Self {
        FrequencyMapping {
            source: SignalSource::Accuracy,
            f_min: 220.0,
            f_max: 880.0,
            domain_min: 0.0,
            domain_max: 1.0,
            scale: FrequencyScale::Linear,
        }
    }

    /// Loss over `[0, 1.5·ln(classes)]`: 1.5× the loss of a uniform guess.
    pub fn loss(classes: usize) -> Self {
        FrequencyMapping {
            source: SignalSource::Loss,
            f_min: 220.0,
            f_max: 880.0,
            domain_min: 0.0,
            domain_max: 1.5 * (classes.max(2) as f64).ln(),
            scale: FrequencyScale::Linear,
        }
    }

    pub fn learning_rate() -> Self {
        FrequencyMapping {
            source: SignalSource::LearningRate,
            f_min: 220.0,
            f_max: 880.0,
            domain_min: 1e-4,
            domain_max: 1.0,
            scale: FrequencyScale::LogDomain,
        }
    }

    pub fn momentum() -> Self {
        FrequencyMapping {
            source: SignalSource::Momentum,
            f_min: 220.0,
            f_max: 880.0,
            domain_min: 0.0,
            domain_max: 0.999,
            scale: FrequencyScale::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_FREQ <= self.f_min && self.f_min < self.f_max && self.f_max <= MAX_FREQ) {
            return Err(Error::invalid(format!(
                "frequency range [{}, {}] must satisfy 20 <= f_min < f_max <= 8000",
                self.f_min, self.f_max
            )));
        }
        if !(self.domain_min.is_finite() && self.domain_max.is_finite())
            || self.domain_min >= self.domain_max
        {
            return Err(Error::invalid("domain_min must be below domain_max"));
        }
        if self.scale == FrequencyScale::LogDomain && self.domain_min <= 0.0 {
            return Err(Error::invalid("log-domain mapping needs a positive domain"));
        }
        Ok(())
    }

    /// Frequency for `value`, which is first clamped into the domain.
    pub fn map_to_freq(&self, value: f64) -> Result<f64> {
        if !value.is_finite() {
            return Err(Error::numeric(format!("cannot sonify {value}")));
        }
        let v = value.clamp(self.domain_min, self.domain_max);
        let fraction = match self.scale {
            FrequencyScale::Linear => (v - self.domain_min) / (self.domain_max - self.domain_min),
            FrequencyScale::LogDomain => {
                let (lo, hi) = (self.domain_min.ln(), self.domain_max.ln());
                (v.ln() - lo) / (hi - lo)
            }
        };
        let f = self.f_min + (self.f_max - self.f_min) * fraction;
        Ok(f.clamp(self.f_min, self.f_max))
    }
}

/// The live mapping configuration of a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sonifier {
    pub mode: SonificationMode,
    pub accuracy: FrequencyMapping,
    pub loss: FrequencyMapping,
    pub learning_rate: FrequencyMapping,
    pub momentum: FrequencyMapping,
}

impl Sonifier {
    pub fn new(classes: usize, mode: SonificationMode) -> Self {
        Sonifier {
            mode,
            accuracy: FrequencyMapping::accuracy(),
            loss: FrequencyMapping::loss(classes),
            learning_rate: FrequencyMapping::learning_rate(),
            momentum: FrequencyMapping::momentum(),
        }
    }

    pub fn mappings(&self) -> [FrequencyMapping; 4] {
        [self.accuracy, self.loss, self.learning_rate, self.momentum]
    }

    /// `(left, right)` for a pair of validation metrics.
    pub fn metric_tones(&self, accuracy: f64, loss: f64) -> Result<(f64, f64)> {
        Ok(route(
            self.mode,
            self.accuracy.map_to_freq(accuracy)?,
            self.loss.map_to_freq(loss)?,
        ))
    }

    /// While a hyperparameter is being tuned its tone replaces the metric
    /// tone on one side: learning rate on the right, momentum on the left.
    pub fn tuning_tones(
        &self,
        base: (f64, f64),
        learning_rate: Option<f64>,
        momentum: Option<f64>,
    ) -> Result<(f64, f64)> {
        let (mut left, mut right) = base;
        if let Some(lr) = learning_rate {
            right = self.learning_rate.map_to_freq(lr)?;
        }
        if let Some(mu) = momentum {
            left = self.momentum.map_to_freq(mu)?;
        }
        Ok((left, right))
    }

    /// Piecewise-constant channel timelines, one segment of
    /// `seconds_per_epoch` per metrics record.
    pub fn metrics_timeline(
        &self,
        metrics: &[EpochMetrics],
        seconds_per_epoch: f64,
    ) -> Result<(Vec<ToneSegment>, Vec<ToneSegment>)> {
        let mut left = Vec::with_capacity(metrics.len());
        let mut right = Vec::with_capacity(metrics.len());
        for (i, m) in metrics.iter().enumerate() {
            let (l, r) = self.metric_tones(m.val_accuracy, m.val_loss)?;
            let start = i as f64 * seconds_per_epoch;
            left.push(ToneSegment { start, freq: l });
            right.push(ToneSegment { start, freq: r });
        }
        Ok((left, right))
    }
}

/// A tone that starts at `start` seconds and lasts until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneSegment {
    pub start: f64,
    pub freq: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AudioFrame {
    pub sample_rate: u32,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl AudioFrame {
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

fn check_timeline(timeline: &[ToneSegment]) -> Result<()> {
    let mut last = 0.0;
    for seg in timeline {
        if !(MIN_FREQ..=MAX_FREQ).contains(&seg.freq) {
            return Err(Error::invalid(format!(
                "frequency {} Hz outside [20, 8000]",
                seg.freq
            )));
        }
        if !(seg.start.is_finite() && seg.start >= last) {
            return Err(Error::invalid("timeline start times must be non-negative and sorted"));
        }
        last = seg.start;
    }
    Ok(())
}

fn render_channel(timeline: &[ToneSegment], sample_rate: u32, samples: usize) -> Vec<f64> {
    let sr = sample_rate as f64;
    let ramp = ((RAMP_SECONDS * sr).round() as usize).max(1);
    let mut out = Vec::with_capacity(samples);
    let mut phase = 0.0f64;
    let mut seg = 0usize;
    for n in 0..samples {
        let t = n as f64 / sr;
        while seg + 1 < timeline.len() && timeline[seg + 1].start <= t {
            seg += 1;
        }
        let value = match timeline.get(seg) {
            Some(s) if s.start <= t => {
                let v = AMPLITUDE * phase.sin();
                phase = (phase + TAU * s.freq / sr) % TAU;
                v
            }
            _ => 0.0,
        };
        let edge = n.min(samples - 1 - n);
        let gain = if edge < ramp { edge as f64 / ramp as f64 } else { 1.0 };
        out.push((value * gain).clamp(-1.0, 1.0));
    }
    out
}

/// Phase-continuous stereo sine synthesis with short linear fades at both
/// ends. An empty timeline renders silence on that channel.
pub fn render(
    left: &[ToneSegment],
    right: &[ToneSegment],
    sample_rate: u32,
    duration: f64,
) -> Result<AudioFrame> {
    if sample_rate == 0 || !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::invalid("sample rate must be positive and duration non-negative"));
    }
    check_timeline(left)?;
    check_timeline(right)?;
    let samples = (duration * sample_rate as f64).round() as usize;
    if samples == 0 || (left.is_empty() && right.is_empty()) {
        return Ok(AudioFrame {
            sample_rate,
            ..AudioFrame::default()
        });
    }
    Ok(AudioFrame {
        sample_rate,
        left: render_channel(left, sample_rate, samples),
        right: render_channel(right, sample_rate, samples),
    })
}

/// Writes 16-bit PCM stereo.
pub fn write_wav(path: &Path, frame: &AudioFrame) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: frame.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::invalid(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for (&l, &r) in frame.left.iter().zip(&frame.right) {
        for s in [l, r] {
            let q = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
            writer.write_sample(q).map_err(to_io)?;
        }
    }
    writer.finalize().map_err(to_io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_mapping_endpoints() {
        let m = FrequencyMapping::accuracy();
        assert_eq!(m.map_to_freq(0.0).unwrap(), 220.0);
        assert_eq!(m.map_to_freq(1.0).unwrap(), 880.0);
        assert_eq!(m.map_to_freq(0.5).unwrap(), 550.0);
        assert_eq!(m.map_to_freq(1.5).unwrap(), 880.0);
        assert_eq!(m.map_to_freq(-3.0).unwrap(), 220.0);
        assert!(matches!(m.map_to_freq(f64::NAN), Err(Error::Numeric(_))));
    }

    #[test]
    fn loss_domain_endpoint() {
        let m = FrequencyMapping {
            domain_max: 7f64.ln(),
            ..FrequencyMapping::loss(7)
        };
        assert_eq!(m.map_to_freq(7f64.ln()).unwrap(), m.f_max);
        assert!((FrequencyMapping::loss(7).domain_max - 1.5 * 7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn learning_rate_log_midpoint() {
        // 1e-2 is the geometric midpoint of [1e-4, 1]: half-way in frequency.
        let f = FrequencyMapping::learning_rate().map_to_freq(1e-2).unwrap();
        assert!((f - 550.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_mappings() {
        let mut m = FrequencyMapping::accuracy();
        m.f_min = 10.0;
        assert!(m.validate().is_err());
        let mut m = FrequencyMapping::accuracy();
        m.domain_max = m.domain_min;
        assert!(m.validate().is_err());
        let mut m = FrequencyMapping::learning_rate();
        m.domain_min = 0.0;
        assert!(m.validate().is_err());
        for m in Sonifier::new(7, SonificationMode::Split).mappings() {
            m.validate().unwrap();
        }
    }

    #[test]
    fn routing_table() {
        assert_eq!(route(SonificationMode::AccuracyBoth, 550.0, 300.0), (550.0, 550.0));
        assert_eq!(route(SonificationMode::Split, 550.0, 300.0), (300.0, 550.0));
        assert_eq!(route(SonificationMode::LossBoth, 550.0, 300.0), (300.0, 300.0));
    }

    #[test]
    fn mode_names() {
        for mode in [
            SonificationMode::AccuracyBoth,
            SonificationMode::Split,
            SonificationMode::LossBoth,
        ] {
            assert_eq!(SonificationMode::parse(mode.as_str()).unwrap(), mode);
        }
        assert!(SonificationMode::parse("both").is_err());
    }

    #[test]
    fn tuning_tone_sides() {
        let s = Sonifier::new(7, SonificationMode::AccuracyBoth);
        let (l, r) = s.tuning_tones((300.0, 300.0), Some(1e-2), None).unwrap();
        assert_eq!(l, 300.0);
        assert!((r - 550.0).abs() < 1e-9);
        let (l, r) = s.tuning_tones((300.0, 300.0), None, Some(0.0)).unwrap();
        assert_eq!((l, r), (220.0, 300.0));
    }

    #[test]
    fn empty_and_invalid_renders() {
        let tone = [ToneSegment { start: 0.0, freq: 440.0 }];
        assert!(render(&[], &[], 44_100, 1.0).unwrap().is_empty());
        assert!(render(&tone, &tone, 44_100, 0.0).unwrap().is_empty());
        let bad = [ToneSegment { start: 0.0, freq: 10.0 }];
        assert!(matches!(render(&bad, &tone, 44_100, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn render_fades_and_bounds() {
        let tone = [ToneSegment { start: 0.0, freq: 440.0 }];
        let frame = render(&tone, &[], 44_100, 0.5).unwrap();
        assert_eq!(frame.len(), 22_050);
        assert_eq!(frame.left[0], 0.0);
        assert_eq!(*frame.left.last().unwrap(), 0.0);
        assert!(frame.right.iter().all(|&s| s == 0.0));
        assert!(frame.left.iter().all(|s| s.abs() <= AMPLITUDE));
    }

    #[test]
    fn wav_header_and_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let tone = [ToneSegment { start: 0.0, freq: 440.0 }];
        let frame = render(&tone, &tone, WAV_SAMPLE_RATE, 0.1).unwrap();
        write_wav(&path, &frame).unwrap();
        let reader = hound::WavReader::open(&path).unwrap();
        let spec = reader.spec();
        assert_eq!((spec.channels, spec.sample_rate, spec.bits_per_sample), (2, 44_100, 16));
        assert_eq!(reader.len() as usize, 2 * frame.len());
    }
}
