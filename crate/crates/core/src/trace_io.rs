//! Raw I/Q trace files: bit-exact reads/writes and bounded-memory streaming.
//!
//! The wire format is headerless interleaved little-endian IEEE-754 binary32,
//! I before Q per sample (the de facto raw-capture layout for SDR tooling).
//! Capture metadata lives in a JSON sidecar next to the trace file at
//! `<trace>.meta.json` because the raw format carries no header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per complex sample: two binary32 floats.
pub const BYTES_PER_SAMPLE: u64 = 8;

/// Default streaming chunk: 1 Mi samples = 8 MiB of buffer.
pub const DEFAULT_CHUNK_SAMPLES: usize = 1 << 20;

/// Capture defaults (20 MS/s at 1.2 GHz), used when synthesizing sidecars.
pub const DEFAULT_SAMPLE_RATE_HZ: u64 = 20_000_000;
pub const DEFAULT_CENTER_FREQUENCY_HZ: u64 = 1_200_000_000;

/// The caller-supplied part of a trace's metadata: everything that cannot be
/// derived from the file itself. Also the schema of the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarMeta {
    pub device_id: String,
    pub activity_label: String,
    pub sample_rate_hz: u64,
    pub center_frequency_hz: u64,
}

impl SidecarMeta {
    /// Path of the metadata sidecar for a trace file.
    pub fn sidecar_path(trace_path: &Path) -> PathBuf {
        let mut name = trace_path.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    pub fn save(&self, trace_path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self)?;
        crate::wire::write_atomic(&Self::sidecar_path(trace_path), &bytes)
    }

    pub fn load(trace_path: &Path) -> Result<Self> {
        let path = Self::sidecar_path(trace_path);
        let bytes = std::fs::read(&path).map_err(|e| map_open_err(e, &path))?;
        let meta: SidecarMeta = serde_json::from_slice(&bytes)?;
        meta.validate()?;
        Ok(meta)
    }

    fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 || self.center_frequency_hz == 0 {
            return Err(Error::BadConfig {
                detail: "sample_rate_hz and center_frequency_hz must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Full capture metadata: sidecar fields plus the derived sample count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub device_id: String,
    pub activity_label: String,
    pub sample_rate_hz: u64,
    pub center_frequency_hz: u64,
    pub sample_count: u64,
}

/// A contiguous run of complex samples plus its offset into the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBlock {
    pub samples: Vec<Complex32>,
    pub start_index: u64,
}

impl ComplexBlock {
    pub fn new(samples: Vec<Complex32>, start_index: u64) -> Self {
        Self {
            samples,
            start_index,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn map_open_err(e: std::io::Error, path: &Path) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile {
            path: path.to_path_buf(),
        }
    } else {
        Error::Io {
            offset: 0,
            source: e,
        }
    }
}

/// Streaming reader over a raw trace file.
///
/// Never buffers more than one chunk. Single-owner: not safe for concurrent
/// use; open one reader per worker instead.
pub struct TraceReader {
    inner: BufReader<File>,
    meta: TraceMeta,
    next_index: u64,
    permissive: bool,
    replaced: u64,
}

/// Open a trace for streaming. `partial` supplies the fields the raw format
/// cannot carry; the sample count is derived from the file length.
pub fn open_trace(path: &Path, partial: SidecarMeta) -> Result<TraceReader> {
    partial.validate()?;
    let file = File::open(path).map_err(|e| map_open_err(e, path))?;
    let len = file
        .metadata()
        .map_err(|e| Error::Io {
            offset: 0,
            source: e,
        })?
        .len();
    let trailing = len % BYTES_PER_SAMPLE;
    if trailing != 0 {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            trailing,
        });
    }
    Ok(TraceReader {
        inner: BufReader::new(file),
        meta: TraceMeta {
            device_id: partial.device_id,
            activity_label: partial.activity_label,
            sample_rate_hz: partial.sample_rate_hz,
            center_frequency_hz: partial.center_frequency_hz,
            sample_count: len / BYTES_PER_SAMPLE,
        },
        next_index: 0,
        permissive: false,
        replaced: 0,
    })
}

/// Open a trace whose metadata sidecar sits next to it.
pub fn open_trace_with_sidecar(path: &Path) -> Result<TraceReader> {
    let meta = SidecarMeta::load(path)?;
    open_trace(path, meta)
}

impl TraceReader {
    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn sample_count(&self) -> u64 {
        self.meta.sample_count
    }

    /// Absolute index of the next sample `read_chunk` will return.
    pub fn position(&self) -> u64 {
        self.next_index
    }

    /// Replace non-finite components with 0.0 instead of erroring.
    pub fn set_permissive(&mut self, permissive: bool) {
        self.permissive = permissive;
    }

    /// Number of non-finite components zero-filled so far (permissive mode).
    pub fn replaced_count(&self) -> u64 {
        self.replaced
    }

    /// Read up to `max_samples` samples. Successive calls are contiguous and
    /// non-overlapping; an empty block signals end of stream.
    pub fn read_chunk(&mut self, max_samples: usize) -> Result<ComplexBlock> {
        assert!(max_samples > 0, "max_samples must be positive");
        let remaining = self.meta.sample_count - self.next_index;
        let want = (max_samples as u64).min(remaining) as usize;
        let start_index = self.next_index;
        if want == 0 {
            return Ok(ComplexBlock::new(Vec::new(), start_index));
        }

        let mut bytes = vec![0u8; want * BYTES_PER_SAMPLE as usize];
        self.inner.read_exact(&mut bytes).map_err(|e| Error::Io {
            offset: self.next_index * BYTES_PER_SAMPLE,
            source: e,
        })?;

        let mut samples = Vec::with_capacity(want);
        for (k, pair) in bytes.chunks_exact(8).enumerate() {
            let mut i = f32::from_le_bytes(pair[0..4].try_into().unwrap());
            let mut q = f32::from_le_bytes(pair[4..8].try_into().unwrap());
            if !i.is_finite() || !q.is_finite() {
                if !self.permissive {
                    return Err(Error::NonFiniteSample {
                        index: start_index + k as u64,
                    });
                }
                if !i.is_finite() {
                    i = 0.0;
                    self.replaced += 1;
                }
                if !q.is_finite() {
                    q = 0.0;
                    self.replaced += 1;
                }
            }
            samples.push(Complex32::new(i, q));
        }
        self.next_index += want as u64;
        Ok(ComplexBlock::new(samples, start_index))
    }

    /// Consume the reader as an iterator of chunks.
    pub fn into_blocks(self, chunk_samples: usize) -> TraceBlocks {
        assert!(chunk_samples > 0, "chunk_samples must be positive");
        TraceBlocks {
            reader: self,
            chunk_samples,
            done: false,
        }
    }
}

/// Iterator adapter yielding successive chunks of a trace.
pub struct TraceBlocks {
    reader: TraceReader,
    chunk_samples: usize,
    done: bool,
}

impl Iterator for TraceBlocks {
    type Item = Result<ComplexBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.reader.read_chunk(self.chunk_samples) {
            Ok(block) if block.is_empty() => {
                self.done = true;
                None
            }
            Ok(block) => Some(Ok(block)),
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Streaming writer producing the raw wire format. Requires exclusive access
/// to its file.
pub struct TraceWriter {
    inner: BufWriter<File>,
    written: u64,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::Io {
            offset: 0,
            source: e,
        })?;
        Ok(Self {
            inner: BufWriter::new(file),
            written: 0,
        })
    }

    pub fn write_block(&mut self, samples: &[Complex32]) -> Result<()> {
        let mut bytes = Vec::with_capacity(samples.len() * BYTES_PER_SAMPLE as usize);
        for s in samples {
            bytes.extend_from_slice(&s.re.to_le_bytes());
            bytes.extend_from_slice(&s.im.to_le_bytes());
        }
        self.inner.write_all(&bytes).map_err(|e| Error::Io {
            offset: self.written * BYTES_PER_SAMPLE,
            source: e,
        })?;
        self.written += samples.len() as u64;
        Ok(())
    }

    /// Flush and return the total sample count.
    pub fn finish(mut self) -> Result<u64> {
        self.inner.flush().map_err(|e| Error::Io {
            offset: self.written * BYTES_PER_SAMPLE,
            source: e,
        })?;
        Ok(self.written)
    }
}

/// Write a whole trace from a stream of blocks; returns the sample count.
/// Round-trips bit-exactly through [`open_trace`]/[`TraceReader::read_chunk`].
pub fn write_trace<I>(path: &Path, blocks: I) -> Result<u64>
where
    I: IntoIterator<Item = ComplexBlock>,
{
    let mut w = TraceWriter::create(path)?;
    for block in blocks {
        w.write_block(&block.samples)?;
    }
    w.finish()
}
