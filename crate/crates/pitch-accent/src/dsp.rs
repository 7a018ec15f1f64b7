//! Acoustic feature extraction.
//!
//! Converts raw PCM audio into a per-frame track of six low-level
//! descriptors at a fixed 10 ms hop:
//!
//! | index | name          | window |
//! |-------|---------------|--------|
//! | 0     | `rms_energy`  | 20 ms  |
//! | 1     | `loudness`    | 20 ms  |
//! | 2     | `f0_smoothed` | 50 ms  |
//! | 3     | `voicing_prob`| 50 ms  |
//! | 4     | `hnr_db`      | 50 ms  |
//! | 5     | `zcr`         | 50 ms  |
//!
//! Windows are left-aligned: frame `i` starts at sample `i * hop`. The
//! track length is the frame count of the 50 ms window; the 20 ms
//! descriptors are evaluated at the same frame starts with the signal
//! tail zero-padded, so all six columns align frame-for-frame.
//!
//! F0, voicing and HNR come from one autocorrelation pass per frame,
//! using the unbiased estimate `acf(lag) = sum(x[t] * x[t+lag]) / (n - lag)`
//! so that a pure tone scores near the periodic ceiling regardless of
//! lag. The search band is 50-500 Hz and frames whose normalized peak
//! falls below 0.3 are treated as unvoiced.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Number of low-level descriptors per frame.
pub const FEATURE_DIM: usize = 6;

/// Column order of [`FrameFeatureTrack`] vectors.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "rms_energy",
    "loudness",
    "f0_smoothed",
    "voicing_prob",
    "hnr_db",
    "zcr",
];

/// Frame hop in milliseconds. All descriptors share it.
pub const HOP_MS: u32 = 10;

/// Window for the intensity descriptors (RMS energy, loudness).
pub const INTENSITY_WINDOW_MS: u32 = 20;

/// Window for F0, voicing, HNR and ZCR.
pub const PITCH_WINDOW_MS: u32 = 50;

/// Reference intensity for the loudness approximation `(E / I0)^0.3`.
pub const LOUDNESS_REF: f64 = 1e-6;

/// Normalized-ACF threshold below which a frame counts as unvoiced.
pub const VOICING_THRESHOLD: f64 = 0.3;

/// F0 search band in Hz.
pub const F0_MIN_HZ: u32 = 50;
/// F0 search band in Hz.
pub const F0_MAX_HZ: u32 = 500;

/// HNR clamp in dB; also the value reported for silent/unvoiced frames.
pub const HNR_FLOOR_DB: f64 = -100.0;
/// HNR clamp in dB.
pub const HNR_CEIL_DB: f64 = 100.0;

/// Mono PCM audio in memory, samples scaled to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl SignalBuffer {
    /// Wraps samples, rejecting a zero sample rate or non-finite values.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Signal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Signal(format!("non-finite sample at index {i}")));
        }
        Ok(SignalBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis window description; the hop is always 10 ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSpec {
    pub window_ms: u32,
    pub hop_ms: u32,
}

impl FrameSpec {
    /// Creates a spec for one of the two supported windows (20 or 50 ms).
    pub fn new(window_ms: u32) -> Result<Self> {
        if window_ms != INTENSITY_WINDOW_MS && window_ms != PITCH_WINDOW_MS {
            return Err(Error::Signal(format!(
                "window must be {INTENSITY_WINDOW_MS} or {PITCH_WINDOW_MS} ms, got {window_ms}"
            )));
        }
        Ok(FrameSpec {
            window_ms,
            hop_ms: HOP_MS,
        })
    }

    pub fn window_len(&self, sample_rate: u32) -> usize {
        (sample_rate as usize * self.window_ms as usize) / 1000
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (sample_rate as usize * self.hop_ms as usize) / 1000
    }

    /// Frames a signal of `len` samples yields with this spec.
    pub fn frame_count(&self, len: usize, sample_rate: u32) -> usize {
        let window = self.window_len(sample_rate);
        let hop = self.hop_len(sample_rate);
        if len >= window {
            (len - window) / hop + 1
        } else {
            1
        }
    }
}

/// Per-utterance sequence of 6-dimensional descriptor vectors at 10 ms hop.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureTrack {
    frames: Vec<[f64; FEATURE_DIM]>,
}

impl FrameFeatureTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[[f64; FEATURE_DIM]] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[f64; FEATURE_DIM] {
        &self.frames[i]
    }

    /// One descriptor column over all frames.
    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f[feature]).collect()
    }

    /// Writes the columnar text form: a header and one row per frame,
    /// values with six decimal places.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frame_idx,rms_energy,loudness,f0,voicing,hnr,zcr")?;
        for (i, f) in self.frames.iter().enumerate() {
            writeln!(
                w,
                "{i},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                f[0], f[1], f[2], f[3], f[4], f[5]
            )?;
        }
        Ok(())
    }
}

/// Reads a RIFF/WAVE file. Only mono 16-bit PCM is accepted; samples are
/// scaled to `[-1, 1]` by dividing by 32768.
pub fn load_wav(path: &Path) -> Result<SignalBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

/// Decodes WAV bytes; see [`load_wav`].
pub fn decode_wav(bytes: &[u8]) -> Result<SignalBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("malformed header: not a RIFF/WAVE file".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return Err(Error::Wav(format!(
                "malformed header: chunk {} overruns file",
                String::from_utf8_lossy(id)
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Wav("malformed header: fmt chunk too short".into()));
                }
                let b = &bytes[body_start..];
                fmt = Some((
                    u16::from_le_bytes(b[0..2].try_into().unwrap()),
                    u16::from_le_bytes(b[2..4].try_into().unwrap()),
                    u32::from_le_bytes(b[4..8].try_into().unwrap()),
                    u16::from_le_bytes(b[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(&bytes[body_start..body_end]),
            _ => {}
        }
        // chunk bodies are padded to even length
        pos = body_end + (size & 1);
    }
    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::Wav("malformed header: missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("malformed header: missing data chunk".into()))?;
    if format != 1 {
        return Err(Error::Wav(format!("unsupported encoding: format {format}")));
    }
    if channels != 1 {
        return Err(Error::Wav(format!(
            "unsupported channel count: {channels}"
        )));
    }
    if bits != 16 {
        return Err(Error::Wav(format!("unsupported bit depth: {bits}")));
    }
    if sample_rate == 0 {
        return Err(Error::Wav("malformed header: zero sample rate".into()));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    SignalBuffer::new(samples, sample_rate)
}

/// Writes a mono 16-bit PCM WAV file. Samples are clamped to `[-1, 1]`.
pub fn write_wav(path: &Path, signal: &SignalBuffer) -> Result<()> {
    let bytes = encode_wav(signal);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encodes a signal as mono 16-bit PCM WAV bytes.
pub fn encode_wav(signal: &SignalBuffer) -> Vec<u8> {
    let n = signal.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&signal.sample_rate.to_le_bytes());
    out.extend_from_slice(&(signal.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &signal.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Splits a signal into left-aligned overlapping frames. Frame `i` covers
/// samples `[i*hop, i*hop + window)`. A signal shorter than one window
/// yields a single frame zero-padded to the window length.
pub fn frame_signal(signal: &SignalBuffer, spec: &FrameSpec) -> Result<Vec<Vec<f64>>> {
    if signal.is_empty() {
        return Err(Error::Signal("cannot frame an empty signal".into()));
    }
    let window = spec.window_len(signal.sample_rate);
    let hop = spec.hop_len(signal.sample_rate);
    let count = spec.frame_count(signal.len(), signal.sample_rate);
    let mut frames = Vec::with_capacity(count);
    for i in 0..count {
        frames.push(frame_padded(&signal.samples, i * hop, window));
    }
    Ok(frames)
}

/// One window starting at `start`, zero-padded past the end of the signal.
fn frame_padded(samples: &[f64], start: usize, window: usize) -> Vec<f64> {
    let mut out = vec![0.0; window];
    if start < samples.len() {
        let n = window.min(samples.len() - start);
        out[..n].copy_from_slice(&samples[start..start + n]);
    }
    out
}

/// Root mean square amplitude of a frame.
pub fn rms_energy(frame: &[f64]) -> f64 {
    if frame.is_empty() {
        return 0.0;
    }
    let energy = frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64;
    energy.sqrt()
}

/// Narrow-band loudness approximation `(E / I0)^0.3` with `I0 = 1e-6`,
/// where `E` is the mean squared amplitude. Zero for a silent frame.
pub fn loudness(frame: &[f64]) -> f64 {
    if frame.is_empty() {
        return 0.0;
    }
    let energy = frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64;
    if energy == 0.0 {
        0.0
    } else {
        (energy / LOUDNESS_REF).powf(0.3)
    }
}

/// Fraction of adjacent-sample sign changes; zero samples count as
/// positive. Ranges over `[0, 1]` for arbitrary frames.
pub fn zero_crossing_rate(frame: &[f64]) -> f64 {
    if frame.len() < 2 {
        return 0.0;
    }
    let sign = |x: f64| x >= 0.0;
    let changes = frame
        .windows(2)
        .filter(|w| sign(w[0]) != sign(w[1]))
        .count();
    changes as f64 / (frame.len() - 1) as f64
}

/// Result of the per-frame autocorrelation pass.
struct AcfPeak {
    /// Unbiased ACF at lag zero (the mean squared amplitude).
    r0: f64,
    /// Lag of the strongest peak in the search band.
    best_lag: usize,
    /// Unbiased ACF at `best_lag`.
    r_best: f64,
}

/// Unbiased autocorrelation peak search over the 50-500 Hz lag band.
/// Returns `None` for a silent frame (`r0 == 0`).
fn acf_peak(frame: &[f64], sample_rate: u32) -> Option<AcfPeak> {
    let n = frame.len();
    let r0 = frame.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if r0 <= 0.0 {
        return None;
    }
    let lo = ((sample_rate / F0_MAX_HZ) as usize).max(1);
    let hi = ((sample_rate / F0_MIN_HZ) as usize).min(n.saturating_sub(1));
    if lo > hi {
        return None;
    }
    let mut best_lag = lo;
    let mut r_best = f64::NEG_INFINITY;
    for lag in lo..=hi {
        let mut acc = 0.0;
        for t in 0..n - lag {
            acc += frame[t] * frame[t + lag];
        }
        let r = acc / (n - lag) as f64;
        if r > r_best {
            r_best = r;
            best_lag = lag;
        }
    }
    Some(AcfPeak {
        r0,
        best_lag,
        r_best,
    })
}

/// F0 and voicing probability of one frame.
///
/// The voicing probability is the normalized autocorrelation peak
/// `acf(best_lag) / acf(0)` clamped to `[0, 1]`; frames below the 0.3
/// threshold report `f0 = 0` (unvoiced). Silent frames report `(0, 0)`.
pub fn f0_and_voicing(frame: &[f64], sample_rate: u32) -> (f64, f64) {
    match acf_peak(frame, sample_rate) {
        None => (0.0, 0.0),
        Some(p) => {
            let voicing = (p.r_best / p.r0).clamp(0.0, 1.0);
            if voicing < VOICING_THRESHOLD {
                (0.0, voicing)
            } else {
                (sample_rate as f64 / p.best_lag as f64, voicing)
            }
        }
    }
}

/// Harmonics-to-noise ratio in dB: `10*log10(rmax / (r0 - rmax))` over the
/// unbiased ACF, clamped to `[-100, 100]`. Silent and unvoiced frames
/// report the -100 dB floor.
pub fn hnr(frame: &[f64], sample_rate: u32) -> f64 {
    match acf_peak(frame, sample_rate) {
        None => HNR_FLOOR_DB,
        Some(p) => {
            let voicing = (p.r_best / p.r0).clamp(0.0, 1.0);
            if voicing < VOICING_THRESHOLD || p.r_best <= 0.0 {
                return HNR_FLOOR_DB;
            }
            let noise = p.r0 - p.r_best;
            if noise <= 0.0 {
                return HNR_CEIL_DB;
            }
            (10.0 * (p.r_best / noise).log10()).clamp(HNR_FLOOR_DB, HNR_CEIL_DB)
        }
    }
}

/// Extracts the full six-descriptor track for one signal.
///
/// The track has one vector per 10 ms hop, with as many frames as the
/// 50 ms window yields. RMS energy and loudness use 20 ms windows at the
/// same frame starts. The F0 column is median-smoothed with a 3-frame
/// window (ends replicated) after the unvoiced gate.
pub fn extract_lld_track(signal: &SignalBuffer) -> Result<FrameFeatureTrack> {
    if signal.is_empty() {
        return Err(Error::Signal("cannot extract features from an empty signal".into()));
    }
    let sr = signal.sample_rate;
    let spec_pitch = FrameSpec::new(PITCH_WINDOW_MS)?;
    let spec_int = FrameSpec::new(INTENSITY_WINDOW_MS)?;
    let hop = spec_pitch.hop_len(sr);
    if hop == 0 {
        return Err(Error::Signal(format!("sample rate {sr} is below one sample per hop")));
    }
    let count = spec_pitch.frame_count(signal.len(), sr);
    let w_pitch = spec_pitch.window_len(sr);
    let w_int = spec_int.window_len(sr);

    let mut frames = Vec::with_capacity(count);
    let mut f0_raw = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * hop;
        let frame_int = frame_padded(&signal.samples, start, w_int);
        let frame_pitch = frame_padded(&signal.samples, start, w_pitch);
        let (f0, voicing) = f0_and_voicing(&frame_pitch, sr);
        f0_raw.push(f0);
        frames.push([
            rms_energy(&frame_int),
            loudness(&frame_int),
            0.0, // f0 column filled after smoothing
            voicing,
            hnr(&frame_pitch, sr),
            // the track invariant caps zcr at 0.5; raw values above it
            // only occur for signals near the Nyquist rate
            zero_crossing_rate(&frame_pitch).min(0.5),
        ]);
    }
    let f0_smooth = median3_smooth(&f0_raw);
    for (frame, f0) in frames.iter_mut().zip(f0_smooth) {
        frame[2] = f0;
    }
    Ok(FrameFeatureTrack { frames })
}

/// 3-point running median with replicated ends.
fn median3_smooth(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let a = values[i.saturating_sub(1)];
            let b = values[i];
            let c = values[(i + 1).min(n - 1)];
            median3(a, b, c)
        })
        .collect()
}

fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SR: u32 = 16000;

    fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|t| amp * (2.0 * std::f64::consts::PI * freq * t as f64 / SR as f64).sin())
            .collect()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    fn sig(samples: Vec<f64>) -> SignalBuffer {
        SignalBuffer::new(samples, SR).unwrap()
    }

    // --- WAV ---

    #[test]
    fn wav_silence_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silence.wav");
        write_wav(&path, &sig(vec![0.0; 160])).unwrap();
        let loaded = load_wav(&path).unwrap();
        assert_eq!(loaded.sample_rate, SR);
        assert_eq!(loaded.samples, vec![0.0; 160]);
    }

    #[test]
    fn wav_hand_encoded_samples() {
        // manual byte layout: 44-byte header, then 0, 16384, -32768
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 6).to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&6u32.to_le_bytes());
        for v in [0i16, 16384, -32768] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let s = decode_wav(&bytes).unwrap();
        assert_eq!(s.samples, vec![0.0, 0.5, -1.0]);
    }

    #[test]
    fn wav_rejects_stereo() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&40u32.to_le_bytes());
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(b"fmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&16000u32.to_le_bytes());
        bytes.extend_from_slice(&64000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 4]);
        let err = decode_wav(&bytes).unwrap_err();
        assert!(err.to_string().contains("unsupported channel count"));
    }

    #[test]
    fn wav_rejects_garbage() {
        let err = decode_wav(b"not a wav file at all").unwrap_err();
        assert!(err.to_string().contains("malformed header"));
    }

    // --- framing ---

    #[test]
    fn frame_counts() {
        let spec = FrameSpec::new(50).unwrap();
        // exact fit: one frame
        let frames = frame_signal(&sig(vec![0.1; 800]), &spec).unwrap();
        assert_eq!(frames.len(), 1);
        // floor((1600 - 800) / 160) + 1 = 6
        let frames = frame_signal(&sig(vec![0.1; 1600]), &spec).unwrap();
        assert_eq!(frames.len(), 6);
    }

    #[test]
    fn short_input_zero_pads() {
        let spec = FrameSpec::new(50).unwrap();
        let frames = frame_signal(&sig(vec![0.5; 100]), &spec).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].len(), 800);
        assert!(frames[0][..100].iter().all(|&x| x == 0.5));
        assert!(frames[0][100..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_signal_errors() {
        let spec = FrameSpec::new(50).unwrap();
        assert!(frame_signal(&sig(vec![]), &spec).is_err());
        assert!(extract_lld_track(&sig(vec![])).is_err());
    }

    #[test]
    fn frame_spec_rejects_other_windows() {
        assert!(FrameSpec::new(30).is_err());
    }

    // --- per-frame descriptors ---

    #[test]
    fn rms_cases() {
        assert_eq!(rms_energy(&[0.0; 100]), 0.0);
        assert!((rms_energy(&[0.5; 100]) - 0.5).abs() < 1e-12);
        // full-scale sine over whole periods: 1/sqrt(2)
        let frame = sine(200.0, 1.0, 800);
        assert!((rms_energy(&frame) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
        // oracle: direct summation
        let direct = (frame.iter().map(|x| x * x).sum::<f64>() / 800.0).sqrt();
        assert!((rms_energy(&frame) - direct).abs() < 1e-12);
    }

    #[test]
    fn loudness_cases() {
        assert_eq!(loudness(&[0.0; 100]), 0.0);
        // E = 1e-6 is the reference intensity
        assert!((loudness(&[1e-3; 100]) - 1.0).abs() < 1e-9);
        // unit sine: E = 0.5 -> (0.5 / 1e-6)^0.3
        let expected = (0.5f64 / LOUDNESS_REF).powf(0.3);
        assert!((expected - 51.25).abs() < 0.5);
        assert!((loudness(&sine(200.0, 1.0, 800)) - expected).abs() < 0.5);
    }

    #[test]
    fn zcr_cases() {
        assert_eq!(zero_crossing_rate(&[0.7; 50]), 0.0);
        let alternating: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(zero_crossing_rate(&alternating), 1.0);
        // 440 Hz at 16 kHz: 2 crossings per period, 22 periods in 800 samples
        let frame = sine(440.0, 1.0, 800);
        let got = zero_crossing_rate(&frame);
        // oracle: counting loop
        let mut count = 0;
        for w in frame.windows(2) {
            if (w[0] >= 0.0) != (w[1] >= 0.0) {
                count += 1;
            }
        }
        assert_eq!(got, count as f64 / 799.0);
        assert!((got - 44.0 / 799.0).abs() < 0.002);
    }

    #[test]
    fn zcr_treats_zero_as_positive() {
        assert_eq!(zero_crossing_rate(&[0.0, 1.0, 0.0, 1.0]), 0.0);
        assert_eq!(zero_crossing_rate(&[0.0, -1.0, 0.0, -1.0]), 1.0);
    }

    #[test]
    fn f0_cases() {
        assert_eq!(f0_and_voicing(&[0.0; 800], SR), (0.0, 0.0));
        let (f0, voicing) = f0_and_voicing(&sine(220.0, 1.0, 800), SR);
        assert!((f0 - 220.0).abs() <= 5.0, "f0 = {f0}");
        assert!(voicing > 0.9, "voicing = {voicing}");
    }

    #[test]
    fn noise_is_mostly_unvoiced() {
        let track = extract_lld_track(&sig(noise(SR as usize, 17))).unwrap();
        let unvoiced = track
            .frames()
            .iter()
            .filter(|f| f[3] < 0.5)
            .count();
        assert!(
            unvoiced as f64 >= 0.9 * track.len() as f64,
            "{unvoiced} of {} frames below 0.5 voicing",
            track.len()
        );
    }

    #[test]
    fn hnr_cases() {
        assert_eq!(hnr(&[0.0; 800], SR), HNR_FLOOR_DB);
        let tone = hnr(&sine(220.0, 1.0, 800), SR);
        assert!(tone >= 20.0, "pure tone hnr = {tone}");
        let noisy = hnr(&noise(800, 3), SR);
        assert!(noisy <= 5.0, "noise hnr = {noisy}");
    }

    // --- full track ---

    #[test]
    fn silence_track() {
        let track = extract_lld_track(&sig(vec![0.0; SR as usize])).unwrap();
        // floor((16000 - 800) / 160) + 1 = 96
        assert_eq!(track.len(), 96);
        for f in track.frames() {
            assert_eq!(f, &[0.0, 0.0, 0.0, 0.0, HNR_FLOOR_DB, 0.0]);
        }
    }

    #[test]
    fn sine_track_f0_column() {
        let track = extract_lld_track(&sig(sine(220.0, 1.0, SR as usize))).unwrap();
        for (i, f) in track.frames().iter().enumerate() {
            assert!((f[2] - 220.0).abs() <= 5.0, "frame {i}: f0 = {}", f[2]);
        }
    }

    #[test]
    fn track_csv_format() {
        let track = extract_lld_track(&sig(vec![0.0; 1600])).unwrap();
        let mut buf = Vec::new();
        track.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "frame_idx,rms_energy,loudness,f0,voicing,hnr,zcr"
        );
        assert_eq!(
            lines.next().unwrap(),
            "0,0.000000,0.000000,0.000000,0.000000,-100.000000,0.000000"
        );
        assert_eq!(text.lines().count(), 1 + track.len());
    }

    // --- invariants ---

    #[test]
    fn determinism() {
        let s = sig(noise(4000, 5));
        assert_eq!(extract_lld_track(&s).unwrap(), extract_lld_track(&s).unwrap());
    }

    #[test]
    fn scale_covariance() {
        let base = noise(4000, 9)
            .iter()
            .zip(sine(150.0, 0.4, 4000))
            .map(|(n, s)| 0.2 * n + s)
            .collect::<Vec<_>>();
        let a = extract_lld_track(&sig(base.clone())).unwrap();
        let c = 3.5;
        let b = extract_lld_track(&sig(base.iter().map(|x| c * x).collect())).unwrap();
        for (fa, fb) in a.frames().iter().zip(b.frames()) {
            assert!((fb[0] - c * fa[0]).abs() < 1e-9); // rms scales
            for k in 2..6 {
                assert!((fb[k] - fa[k]).abs() < 1e-9, "feature {k} changed under scaling");
            }
        }
    }

    #[test]
    fn one_hop_shift() {
        let base = noise(8000, 11)
            .iter()
            .zip(sine(180.0, 0.5, 8000))
            .map(|(n, s)| 0.1 * n + s)
            .collect::<Vec<_>>();
        let track = extract_lld_track(&sig(base.clone())).unwrap();
        let mut delayed = vec![0.0; 160];
        delayed.extend_from_slice(&base);
        let track_d = extract_lld_track(&sig(delayed)).unwrap();
        assert_eq!(track_d.len(), track.len() + 1);
        // interior frames only: median smoothing touches each neighbor
        for i in 1..track.len() - 1 {
            for k in 0..FEATURE_DIM {
                assert!(
                    (track_d.frame(i + 1)[k] - track.frame(i)[k]).abs() < 1e-9,
                    "frame {i} feature {k}"
                );
            }
        }
    }

    #[test]
    fn ranges_hold_on_random_signals() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(200..6000);
            let samples: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let track = extract_lld_track(&sig(samples)).unwrap();
            for f in track.frames() {
                assert!(f.iter().all(|v| v.is_finite()));
                assert!(f[0] >= 0.0 && f[1] >= 0.0);
                assert!(f[2] >= 0.0);
                assert!((0.0..=1.0).contains(&f[3]));
                assert!((HNR_FLOOR_DB..=HNR_CEIL_DB).contains(&f[4]));
                assert!((0.0..=0.5).contains(&f[5]));
            }
        }
    }

    #[test]
    fn columns_align() {
        for n in [100usize, 800, 801, 1599, 16000] {
            let track = extract_lld_track(&sig(vec![0.25; n])).unwrap();
            let spec = FrameSpec::new(50).unwrap();
            assert_eq!(track.len(), spec.frame_count(n, SR));
            // every frame carries all six features by construction
            for f in track.frames() {
                assert_eq!(f.len(), FEATURE_DIM);
            }
        }
    }
}
