//! Binary file formats for sequences (`.pcs`), trajectories (`.pct`), and
//! parameter checkpoints (`.pckp`).
//!
//! All multi-byte fields are little-endian. Coordinate payloads are IEEE-754
//! `f32`; checkpoints store parameters at their native precision (`f32` or
//! `f64`). Readers work on an in-memory copy of the file through a cursor
//! that tracks byte offsets, never allocate more than the file could back,
//! and report malformed input as [`FileError::Format`] with the offending
//! offset — truncated, corrupted, or adversarial input must never panic.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use pcst_core::geom::PointSet;
use pcst_core::nn::ParamStore;
use pcst_core::scalar::{Dtype, Scalar};
use pcst_core::synth::{SceneSpec, SequenceRecord};
use pcst_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Magic number opening a sequence file.
pub const SEQUENCE_MAGIC: [u8; 4] = *b"PCS1";
/// Magic number opening a trajectory file.
pub const TRAJECTORY_MAGIC: [u8; 4] = *b"PCT1";
/// Magic number opening a checkpoint file.
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PCKP";
/// Highest format version this build reads and the version it writes.
pub const FORMAT_VERSION: u16 = 1;

/// Conventional file extensions.
pub const SEQUENCE_EXT: &str = "pcs";
pub const TRAJECTORY_EXT: &str = "pct";
pub const CHECKPOINT_EXT: &str = "pckp";

/// Errors raised by the file codecs.
///
/// I/O failures (missing file, permission, short write) are kept distinct
/// from malformed content; version mismatches are distinct again so callers
/// can suggest an upgrade instead of reporting corruption.
#[derive(Debug, thiserror::Error)]
pub enum FileError {
    /// The operating system refused the read or write.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// The bytes do not form a valid file of the expected kind.
    #[error("{path}: invalid data at byte {offset}: {message}")]
    Format { path: PathBuf, offset: u64, message: String },
    /// The file declares a format version this build does not support.
    #[error("{path}: file is format version {found}, this build supports up to version {supported}")]
    Version { path: PathBuf, found: u16, supported: u16 },
}

pub type FileResult<T> = Result<T, FileError>;

impl FileError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FileError::Io { path: path.to_path_buf(), source }
    }

    fn format(path: &Path, offset: u64, message: impl fmt::Display) -> Self {
        FileError::Format { path: path.to_path_buf(), offset, message: message.to_string() }
    }
}

// ---------------------------------------------------------------------------
// Cursor over an in-memory file image
// ---------------------------------------------------------------------------

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Reader { buf, pos: 0, path }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn fail(&self, message: impl fmt::Display) -> FileError {
        FileError::format(self.path, self.offset(), message)
    }

    fn fail_at(&self, offset: u64, message: impl fmt::Display) -> FileError {
        FileError::format(self.path, offset, message)
    }

    /// Consume exactly `n` bytes; a shortfall is a format error at the
    /// current offset. Never allocates, so header-declared counts cannot
    /// balloon memory beyond the file image itself.
    fn take(&mut self, n: usize, what: &str) -> FileResult<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.fail(format!(
                "unexpected end of file while reading {what} ({n} bytes needed, {} left)",
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> FileResult<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> FileResult<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> FileResult<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
    }

    fn f32s(&mut self, count: usize, what: &str) -> FileResult<Vec<f32>> {
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| self.fail(format!("{what} element count overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }

    fn f64s(&mut self, count: usize, what: &str) -> FileResult<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| self.fail(format!("{what} element count overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }

    /// Check magic and version; `kind` names the expected file kind.
    fn header(&mut self, magic: [u8; 4], kind: &str) -> FileResult<()> {
        let got = self.take(4, "magic number")?;
        if got != magic {
            return Err(self.fail_at(0, format!("not a {kind} file (bad magic number)")));
        }
        let at = self.offset();
        let version = self.u16("format version")?;
        if version != FORMAT_VERSION {
            return Err(FileError::Version {
                path: self.path.to_path_buf(),
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let _ = at;
        let flags_at = self.offset();
        let flags = self.u16("reserved flags")?;
        if flags != 0 {
            return Err(self.fail_at(flags_at, format!("reserved flags must be zero, found {flags:#06x}")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Shared write helpers
// ---------------------------------------------------------------------------

fn push_u16(buf: &mut Vec<u8>, v: u16) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    buf.reserve(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn as_u32(path: &Path, value: usize, what: &str) -> FileResult<u32> {
    u32::try_from(value)
        .map_err(|_| FileError::format(path, 0, format!("{what} {value} exceeds the format limit")))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> FileResult<()> {
    fs::write(path, bytes).map_err(|e| FileError::io(path, e))
}

/// Append a JSON trailer followed by its byte length as the file's final
/// four bytes, so readers can locate the metadata from either end.
fn push_json_trailer<T: Serialize>(path: &Path, buf: &mut Vec<u8>, meta: &T) -> FileResult<()> {
    let json = serde_json::to_vec(meta)
        .map_err(|e| FileError::format(path, 0, format!("metadata serialization failed: {e}")))?;
    let len = as_u32(path, json.len(), "metadata length")?;
    buf.extend_from_slice(&json);
    push_u32(buf, len);
    Ok(())
}

/// Consume the rest of the reader as a JSON trailer plus length suffix.
fn read_json_trailer<T: for<'de> Deserialize<'de>>(r: &mut Reader, what: &str) -> FileResult<T> {
    let start = r.offset();
    if r.remaining() < 4 {
        return Err(r.fail(format!("unexpected end of file while reading {what} trailer")));
    }
    let json_len = r.remaining() - 4;
    let json = r.take(json_len, what)?;
    let suffix_at = r.offset();
    let declared = r.u32("metadata length suffix")?;
    if declared as usize != json_len {
        return Err(r.fail_at(
            suffix_at,
            format!("metadata length suffix {declared} does not match trailer length {json_len}"),
        ));
    }
    serde_json::from_slice(json)
        .map_err(|e| r.fail_at(start, format!("malformed {what} metadata: {e}")))
}

// ---------------------------------------------------------------------------
// Sequence files (.pcs)
// ---------------------------------------------------------------------------

/// Write a sequence record: header, per-frame point counts, per-frame `f32`
/// coordinate payloads, ground-truth trajectories, packed visibility bits,
/// and a JSON scene-description trailer.
pub fn write_sequence(path: &Path, record: &SequenceRecord<f32>) -> FileResult<()> {
    let t_prime = record.num_frames();
    let n_gt = record.num_trajectories();
    let mut buf = Vec::new();
    buf.extend_from_slice(&SEQUENCE_MAGIC);
    push_u16(&mut buf, FORMAT_VERSION);
    push_u16(&mut buf, 0); // reserved flags
    push_u32(&mut buf, as_u32(path, t_prime, "frame count")?);
    push_u32(&mut buf, as_u32(path, n_gt, "trajectory count")?);
    for frame in &record.frames {
        push_u32(&mut buf, as_u32(path, frame.len(), "frame point count")?);
    }
    for frame in &record.frames {
        push_f32s(&mut buf, frame.flat());
    }
    push_f32s(&mut buf, record.gt.data());
    buf.extend_from_slice(&pack_bits(&record.visibility));
    push_json_trailer(path, &mut buf, &record.spec)?;
    write_atomic(path, &buf)
}

/// Read a sequence file back into memory.
///
/// The header tables are authoritative for payload layout; the JSON trailer
/// must agree with the header on frame and trajectory counts because the
/// in-memory record indexes ground truth and visibility through its scene
/// description.
pub fn read_sequence(path: &Path) -> FileResult<SequenceRecord<f32>> {
    let image = fs::read(path).map_err(|e| FileError::io(path, e))?;
    let mut r = Reader::new(&image, path);
    r.header(SEQUENCE_MAGIC, "sequence")?;

    let t_prime = r.u32("frame count")? as usize;
    let n_at = r.offset();
    let n_gt = r.u32("trajectory count")? as usize;
    if t_prime == 0 {
        return Err(r.fail_at(8, "sequence must hold at least one frame"));
    }
    if n_gt == 0 {
        return Err(r.fail_at(n_at, "sequence must hold at least one trajectory"));
    }

    let mut counts = Vec::with_capacity(t_prime.min(r.remaining() / 4 + 1));
    for t in 0..t_prime {
        let at = r.offset();
        let c = r.u32("frame point count table")? as usize;
        if c == 0 {
            return Err(r.fail_at(at, format!("frame {t} declares zero points")));
        }
        counts.push(c);
    }

    let mut frames = Vec::with_capacity(counts.len());
    for (t, &c) in counts.iter().enumerate() {
        let at = r.offset();
        let flat = r.f32s(
            c.checked_mul(3).ok_or_else(|| r.fail("frame point count overflows"))?,
            "frame coordinates",
        )?;
        let frame = PointSet::from_flat(&flat)
            .map_err(|e| r.fail_at(at, format!("frame {t}: {e}")))?;
        frames.push(frame);
    }

    let gt_at = r.offset();
    let gt_len = t_prime
        .checked_mul(n_gt)
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| r.fail("trajectory payload size overflows"))?;
    let gt_data = r.f32s(gt_len, "ground-truth trajectories")?;
    if let Some(i) = gt_data.iter().position(|v| !v.is_finite()) {
        return Err(r.fail_at(gt_at, format!("ground-truth value {i} is not finite")));
    }
    let gt = Tensor::new(&[t_prime, n_gt, 3], gt_data)
        .map_err(|e| r.fail_at(gt_at, e))?;

    let vis_at = r.offset();
    let vis_len = t_prime * n_gt; // product already checked above
    let vis_bytes = r.take(vis_len.div_ceil(8), "visibility bits")?;
    let visibility = unpack_bits(vis_bytes, vis_len)
        .map_err(|msg| r.fail_at(vis_at, msg))?;

    let spec: SceneSpec = read_json_trailer(&mut r, "scene")?;
    if spec.frames != t_prime {
        return Err(r.fail_at(
            8,
            format!("header frame count {t_prime} disagrees with scene metadata {}", spec.frames),
        ));
    }
    if spec.trajectories != n_gt {
        return Err(r.fail_at(
            n_at,
            format!(
                "header trajectory count {n_gt} disagrees with scene metadata {}",
                spec.trajectories
            ),
        ));
    }
    spec.validate().map_err(|e| r.fail_at(0, format!("scene metadata rejected: {e}")))?;

    Ok(SequenceRecord { spec, frames, gt, visibility })
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (k, &b) in bits.iter().enumerate() {
        if b {
            out[k / 8] |= 1 << (k % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], len: usize) -> Result<Vec<bool>, String> {
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        out.push(bytes[k / 8] & (1 << (k % 8)) != 0);
    }
    // Padding bits beyond `len` must be zero; set padding marks corruption.
    if len % 8 != 0 {
        let last = bytes[len / 8];
        let mask = !0u8 << (len % 8);
        if last & mask != 0 {
            return Err("visibility padding bits must be zero".to_string());
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Trajectory files (.pct)
// ---------------------------------------------------------------------------

/// Provenance carried alongside estimated trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryMeta {
    /// File name of the sequence the trajectories were estimated from.
    pub sequence: String,
    /// Frame the query points were taken from.
    pub query_frame: usize,
    /// Seed used to draw the query subset.
    pub query_seed: u64,
    /// For each trajectory column, the ground-truth anchor index it was
    /// queried from — empty when queries were not tied to anchors.
    pub anchor_indices: Vec<usize>,
    /// Element type the estimates were computed in ("f32" or "f64").
    pub precision: String,
}

impl Default for TrajectoryMeta {
    fn default() -> Self {
        TrajectoryMeta {
            sequence: String::new(),
            query_frame: 0,
            query_seed: 0,
            anchor_indices: Vec::new(),
            precision: "f32".to_string(),
        }
    }
}

/// Write estimated trajectories `[T, N, 3]` with their provenance trailer.
pub fn write_trajectories(
    path: &Path,
    trajectories: &Tensor<f32>,
    meta: &TrajectoryMeta,
) -> FileResult<()> {
    let shape = trajectories.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(FileError::format(
            path,
            0,
            format!("trajectories must have shape [T, N, 3], got {shape:?}"),
        ));
    }
    if !meta.anchor_indices.is_empty() && meta.anchor_indices.len() != shape[1] {
        return Err(FileError::format(
            path,
            0,
            format!(
                "{} anchor indices do not cover {} trajectories",
                meta.anchor_indices.len(),
                shape[1]
            ),
        ));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(&TRAJECTORY_MAGIC);
    push_u16(&mut buf, FORMAT_VERSION);
    push_u16(&mut buf, 0);
    push_u32(&mut buf, as_u32(path, shape[0], "frame count")?);
    push_u32(&mut buf, as_u32(path, shape[1], "trajectory count")?);
    push_f32s(&mut buf, trajectories.data());
    push_json_trailer(path, &mut buf, meta)?;
    write_atomic(path, &buf)
}

/// Read estimated trajectories and their provenance.
pub fn read_trajectories(path: &Path) -> FileResult<(Tensor<f32>, TrajectoryMeta)> {
    let image = fs::read(path).map_err(|e| FileError::io(path, e))?;
    let mut r = Reader::new(&image, path);
    r.header(TRAJECTORY_MAGIC, "trajectory")?;

    let t = r.u32("frame count")? as usize;
    let n_at = r.offset();
    let n = r.u32("trajectory count")? as usize;
    if t == 0 || n == 0 {
        return Err(r.fail_at(8, "trajectory file must hold at least one frame and one trajectory"));
    }

    let payload_at = r.offset();
    let len = t
        .checked_mul(n)
        .and_then(|v| v.checked_mul(3))
        .ok_or_else(|| r.fail("trajectory payload size overflows"))?;
    let data = r.f32s(len, "trajectory coordinates")?;
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(r.fail_at(payload_at, format!("trajectory value {i} is not finite")));
    }
    let trajectories = Tensor::new(&[t, n, 3], data).map_err(|e| r.fail_at(payload_at, e))?;

    let meta: TrajectoryMeta = read_json_trailer(&mut r, "trajectory")?;
    if !meta.anchor_indices.is_empty() && meta.anchor_indices.len() != n {
        return Err(r.fail_at(
            n_at,
            format!(
                "{} anchor indices in metadata do not cover {n} trajectories",
                meta.anchor_indices.len()
            ),
        ));
    }
    Ok((trajectories, meta))
}

// ---------------------------------------------------------------------------
// Checkpoint files (.pckp)
// ---------------------------------------------------------------------------

/// A parameter store restored from disk at whichever precision it was saved.
#[derive(Debug, Clone)]
pub enum AnyStore {
    F32(ParamStore<f32>),
    F64(ParamStore<f64>),
}

impl AnyStore {
    pub fn dtype(&self) -> Dtype {
        match self {
            AnyStore::F32(_) => Dtype::F32,
            AnyStore::F64(_) => Dtype::F64,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            AnyStore::F32(s) => s.seed(),
            AnyStore::F64(s) => s.seed(),
        }
    }
}

const DTYPE_F32: u8 = 0;
const DTYPE_F64: u8 = 1;

fn dtype_tag(d: Dtype) -> u8 {
    match d {
        Dtype::F32 => DTYPE_F32,
        Dtype::F64 => DTYPE_F64,
    }
}

/// Write every parameter tensor in insertion order: magic header, version,
/// root seed, parameter count, then per parameter the name, element-type
/// tag, rank, shape, and little-endian payload.
pub fn write_checkpoint<S: Scalar>(path: &Path, store: &ParamStore<S>) -> FileResult<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    push_u16(&mut buf, FORMAT_VERSION);
    push_u16(&mut buf, 0);
    push_u64(&mut buf, store.seed());
    let count = store.iter().count();
    push_u32(&mut buf, as_u32(path, count, "parameter count")?);
    for (name, tensor) in store.iter() {
        let name_len = u16::try_from(name.len()).map_err(|_| {
            FileError::format(path, 0, format!("parameter name '{name}' exceeds the format limit"))
        })?;
        push_u16(&mut buf, name_len);
        buf.extend_from_slice(name.as_bytes());
        buf.push(dtype_tag(S::DTYPE));
        let rank = u8::try_from(tensor.shape().len()).map_err(|_| {
            FileError::format(path, 0, format!("parameter '{name}' rank exceeds the format limit"))
        })?;
        buf.push(rank);
        for &dim in tensor.shape() {
            push_u32(&mut buf, as_u32(path, dim, "tensor dimension")?);
        }
        match S::DTYPE {
            Dtype::F32 => {
                buf.reserve(tensor.data().len() * 4);
                for &v in tensor.data() {
                    buf.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
                }
            }
            Dtype::F64 => {
                buf.reserve(tensor.data().len() * 8);
                for &v in tensor.data() {
                    buf.extend_from_slice(&v.to_f64().to_le_bytes());
                }
            }
        }
    }
    write_atomic(path, &buf)
}

/// Read a checkpoint at whichever precision it was written.
///
/// Every parameter in one file must share a single element type; duplicate
/// names, non-finite values, and trailing bytes are rejected.
pub fn read_checkpoint(path: &Path) -> FileResult<AnyStore> {
    let image = fs::read(path).map_err(|e| FileError::io(path, e))?;
    let mut r = Reader::new(&image, path);
    r.header(CHECKPOINT_MAGIC, "checkpoint")?;

    let seed = r.u64("root seed")?;
    let count = r.u32("parameter count")? as usize;

    let mut file_dtype: Option<u8> = None;
    let mut f32_store = ParamStore::<f32>::new(seed);
    let mut f64_store = ParamStore::<f64>::new(seed);
    let mut seen = std::collections::BTreeSet::new();

    for p in 0..count {
        let name_len = r.u16("parameter name length")? as usize;
        let name_at = r.offset();
        let name_bytes = r.take(name_len, "parameter name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| r.fail_at(name_at, format!("parameter {p} name is not valid UTF-8")))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(r.fail_at(name_at, format!("duplicate parameter name '{name}'")));
        }

        let tag_at = r.offset();
        let tag = r.take(1, "element-type tag")?[0];
        if tag != DTYPE_F32 && tag != DTYPE_F64 {
            return Err(r.fail_at(tag_at, format!("unknown element-type tag {tag}")));
        }
        match file_dtype {
            None => file_dtype = Some(tag),
            Some(d) if d != tag => {
                return Err(r.fail_at(tag_at, "checkpoint mixes element types across parameters"));
            }
            _ => {}
        }

        let rank = r.take(1, "tensor rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        let mut numel: usize = 1;
        for _ in 0..rank {
            let dim = r.u32("tensor dimension")? as usize;
            numel = numel
                .checked_mul(dim)
                .ok_or_else(|| r.fail("tensor element count overflows"))?;
            shape.push(dim);
        }

        let payload_at = r.offset();
        match tag {
            DTYPE_F32 => {
                let data = r.f32s(numel, "parameter values")?;
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(
                        r.fail_at(payload_at, format!("parameter '{name}' holds a non-finite value"))
                    );
                }
                let tensor = Tensor::new(&shape, data).map_err(|e| r.fail_at(payload_at, e))?;
                f32_store.set(&name, tensor);
            }
            _ => {
                let data = r.f64s(numel, "parameter values")?;
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(
                        r.fail_at(payload_at, format!("parameter '{name}' holds a non-finite value"))
                    );
                }
                let tensor = Tensor::new(&shape, data).map_err(|e| r.fail_at(payload_at, e))?;
                f64_store.set(&name, tensor);
            }
        }
    }

    if r.remaining() != 0 {
        return Err(r.fail(format!("{} trailing bytes after the last parameter", r.remaining())));
    }

    match file_dtype.unwrap_or(DTYPE_F32) {
        DTYPE_F32 => Ok(AnyStore::F32(f32_store)),
        _ => Ok(AnyStore::F64(f64_store)),
    }
}
