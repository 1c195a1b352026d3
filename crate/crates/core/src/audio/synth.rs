//! Deterministic tone synthesis for fixtures and the stub music backend.

use sha2::{Digest, Sha256};

use super::AudioClip;

const FADE_S: f64 = 0.01;

pub fn sine(freq: f64, duration_s: f64, sample_rate: u32, amplitude: f64) -> AudioClip {
    tone_sequence(&[(freq, duration_s)], sample_rate, amplitude)
}

/// Concatenated `(frequency, seconds)` segments. Each segment carries a
/// second harmonic at half amplitude and short linear fades.
pub fn tone_sequence(segments: &[(f64, f64)], sample_rate: u32, amplitude: f64) -> AudioClip {
    let sr = sample_rate as f64;
    let mut samples = Vec::new();
    for &(freq, dur) in segments {
        let n = (dur * sr).round() as usize;
        let fade = ((FADE_S * sr) as usize).min(n / 2).max(1);
        for i in 0..n {
            let t = i as f64 / sr;
            let phase = 2.0 * std::f64::consts::PI * freq * t;
            let env = (i.min(n - 1 - i) as f64 / fade as f64).min(1.0);
            let v = amplitude * env * (phase.sin() + 0.5 * (2.0 * phase).sin()) / 1.5;
            samples.push(v as f32);
        }
    }
    AudioClip {
        samples,
        sample_rate,
    }
}

/// A four-segment melody whose pitches are a hash of `(caption, seed)`.
pub fn caption_melody(caption: &str, seed: u64, duration_s: f64, sample_rate: u32) -> AudioClip {
    let mut h = Sha256::new();
    h.update(caption.as_bytes());
    h.update(seed.to_le_bytes());
    let digest = h.finalize();
    let seg = duration_s / 4.0;
    let segments: Vec<(f64, f64)> = digest[..4]
        .iter()
        .map(|&b| (110.0 * 2f64.powf(b as f64 / 64.0), seg))
        .collect();
    let mut clip = tone_sequence(&segments, sample_rate, 0.5);
    clip.samples
        .resize((duration_s * sample_rate as f64).round() as usize, 0.0);
    clip
}
