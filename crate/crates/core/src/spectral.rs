//! STFT featurization: complex I/Q streams to fixed-width magnitude vectors.
//!
//! The transform is the unnormalized forward DFT, X_k = Σ x_j·e^(−2πi·jk/n),
//! computed by an in-place radix-2 decimation-in-time FFT. Input is complex,
//! so the spectrum has no conjugate symmetry and all `fft_size` bins are kept
//! in natural order (DC first, negative frequencies in the upper half).
//!
//! Frame t covers samples [t·hop, t·hop + fft_size) where hop = fft_size −
//! overlap; trailing samples shorter than a full frame are dropped. Streaming
//! and whole-trace featurization produce bitwise-identical frames.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::trace_io::ComplexBlock;

/// Additive floor inside `log10(|X| + ε)` so silent bins stay finite.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    /// Periodic Hann: w_j = 0.5·(1 − cos(2πj/N)).
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagnitudeScale {
    #[default]
    Linear,
    Log10,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub fft_size: usize,
    /// Samples shared between consecutive frames; hop = fft_size − overlap.
    pub overlap: usize,
    pub window: Window,
    pub magnitude_scale: MagnitudeScale,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 4096,
            overlap: 512,
            window: Window::Rectangular,
            magnitude_scale: MagnitudeScale::Linear,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || !self.fft_size.is_power_of_two() {
            return Err(Error::BadConfig {
                detail: format!("fft_size {} is not a power of two", self.fft_size),
            });
        }
        if self.overlap >= self.fft_size {
            return Err(Error::BadConfig {
                detail: format!(
                    "overlap {} must be smaller than fft_size {}",
                    self.overlap, self.fft_size
                ),
            });
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.fft_size - self.overlap
    }

    /// Frames a trace of `n_samples` yields: floor((N − fft)/hop) + 1, or 0.
    pub fn frame_count(&self, n_samples: u64) -> u64 {
        let fft = self.fft_size as u64;
        if n_samples < fft {
            0
        } else {
            (n_samples - fft) / self.hop() as u64 + 1
        }
    }

    /// Minimum trace length that yields at least `frames` frames.
    pub fn min_samples(&self, frames: u64) -> u64 {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop() as u64 + self.fft_size as u64
        }
    }
}

/// One STFT frame: `fft_size` magnitudes plus the frame's sample offset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub bins: Vec<T>,
    pub frame_start: u64,
}

/// Reusable transform state for one FFT size: bit-reversal plus per-stage
/// twiddle tables, each twiddle evaluated directly in f64 (no recurrence, so
/// no accumulated error) and narrowed to T.
pub struct FftPlan<T> {
    n: usize,
    stages: Vec<Vec<Complex<T>>>,
}

impl<T: Real> FftPlan<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::BadLength {
                detail: format!("FFT length {n} is not a power of two"),
            });
        }
        let mut stages = Vec::new();
        let mut len = 2;
        while len <= n {
            let step = -2.0 * std::f64::consts::PI / len as f64;
            stages.push(
                (0..len / 2)
                    .map(|k| {
                        let a = step * k as f64;
                        Complex::new(T::of_f64(a.cos()), T::of_f64(a.sin()))
                    })
                    .collect(),
            );
            len <<= 1;
        }
        Ok(Self { n, stages })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place unnormalized forward DFT of exactly `self.len()` samples.
    pub fn run(&self, buf: &mut [Complex<T>]) -> Result<()> {
        let n = self.n;
        if buf.len() != n {
            return Err(Error::BadLength {
                detail: format!("buffer length {} does not match plan size {}", buf.len(), n),
            });
        }
        if n == 1 {
            return Ok(());
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                buf.swap(i, j);
            }
        }
        for twiddles in &self.stages {
            let half = twiddles.len();
            let len = half * 2;
            let mut start = 0;
            while start < n {
                for (k, w) in twiddles.iter().enumerate() {
                    let even = buf[start + k];
                    let odd = buf[start + k + half] * *w;
                    buf[start + k] = even + odd;
                    buf[start + k + half] = even - odd;
                }
                start += len;
            }
        }
        Ok(())
    }
}

/// Unnormalized forward DFT of a power-of-two-length complex input.
pub fn fft_complex<T: Real>(input: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    let plan = FftPlan::new(input.len())?;
    let mut buf = input.to_vec();
    plan.run(&mut buf)?;
    Ok(buf)
}

/// Incremental STFT over a sample stream. Push blocks in order; complete
/// frames come out as they become available. Single-owner state; run one
/// stream per trace.
pub struct StftStream<T: Real> {
    cfg: StftConfig,
    plan: FftPlan<T>,
    /// Hann coefficients, empty for the rectangular window.
    window: Vec<T>,
    buf: Vec<Complex<T>>,
    /// Absolute sample index of buf[0].
    buf_start: u64,
    /// Total samples accepted so far; push_block checks contiguity against it.
    pushed: u64,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> StftStream<T> {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = FftPlan::new(cfg.fft_size)?;
        let window = match cfg.window {
            Window::Rectangular => Vec::new(),
            Window::Hann => {
                let n = cfg.fft_size as f64;
                (0..cfg.fft_size)
                    .map(|j| {
                        T::of_f64(0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / n).cos()))
                    })
                    .collect()
            }
        };
        Ok(Self {
            scratch: vec![Complex::new(T::zero(), T::zero()); cfg.fft_size],
            cfg,
            plan,
            window,
            buf: Vec::new(),
            buf_start: 0,
            pushed: 0,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Feed the next run of samples; emits every frame completed by them.
    pub fn push(&mut self, samples: &[Complex<T>], out: &mut Vec<FeatureVector<T>>) {
        self.buf.extend_from_slice(samples);
        self.pushed += samples.len() as u64;
        let fft = self.cfg.fft_size;
        let hop = self.cfg.hop();
        while self.buf.len() >= fft {
            self.scratch.copy_from_slice(&self.buf[..fft]);
            if !self.window.is_empty() {
                for (s, w) in self.scratch.iter_mut().zip(&self.window) {
                    *s = s.scale(*w);
                }
            }
            self.plan
                .run(&mut self.scratch)
                .expect("scratch length fixed at construction");
            let eps = T::of_f64(LOG_EPSILON);
            let bins = self
                .scratch
                .iter()
                .map(|c| match self.cfg.magnitude_scale {
                    MagnitudeScale::Linear => c.norm(),
                    MagnitudeScale::Log10 => (c.norm() + eps).log10(),
                })
                .collect();
            out.push(FeatureVector {
                bins,
                frame_start: self.buf_start,
            });
            self.buf.drain(..hop);
            self.buf_start += hop as u64;
        }
    }

    /// Feed a trace block, checking stream contiguity against its offset.
    pub fn push_block(&mut self, block: &ComplexBlock, out: &mut Vec<FeatureVector<T>>) {
        assert_eq!(
            block.start_index, self.pushed,
            "blocks must be pushed in order without gaps"
        );
        let converted: Vec<Complex<T>> = block
            .samples
            .iter()
            .map(|s| Complex::new(T::of_f32(s.re), T::of_f32(s.im)))
            .collect();
        self.push(&converted, out);
    }
}

/// Whole-slice STFT. Same code path as streaming, so results are identical.
pub fn stft_samples<T: Real>(samples: &[Complex<T>], cfg: &StftConfig) -> Result<Vec<FeatureVector<T>>> {
    let mut stream = StftStream::new(cfg.clone())?;
    let mut out = Vec::with_capacity(cfg.frame_count(samples.len() as u64) as usize);
    stream.push(samples, &mut out);
    Ok(out)
}

/// Featurize an open trace in bounded memory.
pub fn stft_trace<T: Real>(
    reader: crate::trace_io::TraceReader,
    cfg: &StftConfig,
) -> Result<Vec<FeatureVector<T>>> {
    let mut stream = StftStream::new(cfg.clone())?;
    let mut out = Vec::with_capacity(cfg.frame_count(reader.sample_count()) as usize);
    for block in reader.into_blocks(crate::trace_io::DEFAULT_CHUNK_SAMPLES) {
        stream.push_block(&block?, &mut out);
    }
    Ok(out)
}
