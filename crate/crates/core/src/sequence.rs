//! Recorded sequence directories: `meta.json`, `frames.jsonl`, `features/`,
//! optional `images/`, `depth/` and `detections.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::integrate::{DepthImage, FreespaceScan};
use crate::geometry::pose::{Intrinsics, Pose, Quat};
use crate::semantic::Detection;

pub const FEATURE_MAGIC: &[u8; 4] = b"IKBF";

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Schema { path: PathBuf, line: Option<usize>, message: String },
}

impl SequenceError {
    fn schema(path: &Path, line: Option<usize>, message: impl Into<String>) -> Self {
        SequenceError::Schema { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn is_schema(&self) -> bool {
        matches!(self, SequenceError::Schema { .. })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SequenceError + '_ {
    move |source| SequenceError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinholeRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub intrinsics: PinholeRecord,
    pub image_size: ImageSize,
    /// Metres per unit of the 16-bit depth PNGs.
    pub depth_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SequenceMeta {
    pub fn camera(&self) -> Intrinsics {
        let k = self.intrinsics;
        Intrinsics { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: self.image_size.width, height: self.image_size.height }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub position: [f64; 3],
    /// Camera-to-world rotation.
    pub orientation: Quat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub pose: PoseRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freespace: Option<FreespaceScan>,
    pub feature: String,
}

impl FrameRecord {
    pub fn pose(&self) -> Pose {
        Pose::new(self.timestamp, self.pose.position, self.pose.orientation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: usize,
    pub detections: Vec<Detection>,
}

/// A validated sequence directory. Payloads are read on demand.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub dir: PathBuf,
    pub meta: SequenceMeta,
    pub frames: Vec<FrameRecord>,
    pub detections: BTreeMap<usize, Vec<Detection>>,
}

pub fn encode_feature(v: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * v.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_feature(bytes: &[u8]) -> Result<Vec<f32>, String> {
    if bytes.len() < 8 || &bytes[..4] != FEATURE_MAGIC {
        return Err("missing IKBF header".into());
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + 4 * dim {
        return Err(format!("header declares {dim} floats but payload holds {} bytes", bytes.len() - 8));
    }
    Ok(bytes[8..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, SequenceError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| SequenceError::schema(path, Some(n + 1), e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

impl Sequence {
    pub fn open(dir: &Path) -> Result<Sequence, SequenceError> {
        let meta_path = dir.join("meta.json");
        let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: SequenceMeta =
            serde_json::from_str(&text).map_err(|e| SequenceError::schema(&meta_path, None, e.to_string()))?;
        let k = meta.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) || meta.image_size.width == 0 || meta.image_size.height == 0 {
            return Err(SequenceError::schema(&meta_path, None, "focal lengths and image size must be positive"));
        }
        if !(meta.depth_scale > 0.0) {
            return Err(SequenceError::schema(&meta_path, None, "depth_scale must be positive"));
        }

        let frames_path = dir.join("frames.jsonl");
        let frames: Vec<FrameRecord> = read_jsonl(&frames_path)?;
        if frames.is_empty() {
            return Err(SequenceError::schema(&frames_path, None, "no frame records"));
        }
        let mut last_t = f64::NEG_INFINITY;
        for (n, f) in frames.iter().enumerate() {
            let bad = |m: String| SequenceError::schema(&frames_path, Some(n + 1), m);
            if !f.timestamp.is_finite() || f.timestamp < last_t {
                return Err(bad(format!("timestamp {} is not finite and non-decreasing", f.timestamp)));
            }
            last_t = f.timestamp;
            if !f.pose().is_normalized() || f.pose.position.iter().any(|v| !v.is_finite()) {
                return Err(bad("pose orientation must be a unit quaternion and position finite".into()));
            }
            if f.depth.is_some() && f.freespace.is_some() {
                return Err(bad("frame gives both depth and freespace".into()));
            }
            if let Some(s) = &f.freespace {
                if s.polygon.len() != s.hit.len() {
                    return Err(bad(format!("freespace has {} points but {} hit flags", s.polygon.len(), s.hit.len())));
                }
            }
            for r in [Some(&f.feature), f.image.as_ref(), f.depth.as_ref()].into_iter().flatten() {
                if !dir.join(r).is_file() {
                    return Err(bad(format!("referenced file {r} does not exist")));
                }
            }
        }

        let det_path = dir.join("detections.jsonl");
        let mut detections = BTreeMap::new();
        if det_path.exists() {
            for rec in read_jsonl::<DetectionRecord>(&det_path)? {
                if rec.frame >= frames.len() {
                    return Err(SequenceError::schema(&det_path, None, format!("frame {} out of range", rec.frame)));
                }
                detections.entry(rec.frame).or_insert_with(Vec::new).extend(rec.detections);
            }
        }
        Ok(Sequence { dir: dir.to_path_buf(), meta, frames, detections })
    }

    pub fn feature(&self, frame: usize) -> Result<Vec<f32>, SequenceError> {
        let path = self.dir.join(&self.frames[frame].feature);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        decode_feature(&bytes).map_err(|m| SequenceError::schema(&path, None, m))
    }

    pub fn image(&self, frame: usize) -> Result<Option<Vec<u8>>, SequenceError> {
        let Some(r) = &self.frames[frame].image else { return Ok(None) };
        let path = self.dir.join(r);
        fs::read(&path).map(Some).map_err(io_err(&path))
    }

    /// Depth PNG (16-bit gray) scaled to metres; zero means no return.
    pub fn depth(&self, frame: usize) -> Result<Option<DepthImage>, SequenceError> {
        let Some(r) = &self.frames[frame].depth else { return Ok(None) };
        let path = self.dir.join(r);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let schema = |m: String| SequenceError::schema(&path, None, m);
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().map_err(|e| schema(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| schema("depth image too large".into()))?];
        let info = reader.next_frame(&mut buf).map_err(|e| schema(e.to_string()))?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
            return Err(schema("depth must be 16-bit grayscale".into()));
        }
        let meters = buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 * self.meta.depth_scale as f32)
            .collect();
        Ok(Some(DepthImage { width: info.width, height: info.height, meters }))
    }

    pub fn detections(&self, frame: usize) -> &[Detection] {
        self.detections.get(&frame).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Streams a sequence directory to disk.
pub struct SequenceWriter {
    dir: PathBuf,
    frames: BufWriter<fs::File>,
    detections: BufWriter<fs::File>,
    count: usize,
}

impl SequenceWriter {
    pub fn create(dir: &Path, meta: &SequenceMeta) -> Result<Self, SequenceError> {
        for sub in ["features", "images"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let meta_path = dir.join("meta.json");
        let text = serde_json::to_string_pretty(meta).expect("meta serializes");
        fs::write(&meta_path, text + "\n").map_err(io_err(&meta_path))?;
        let fp = dir.join("frames.jsonl");
        let dp = dir.join("detections.jsonl");
        Ok(SequenceWriter {
            frames: BufWriter::new(fs::File::create(&fp).map_err(io_err(&fp))?),
            detections: BufWriter::new(fs::File::create(&dp).map_err(io_err(&dp))?),
            dir: dir.to_path_buf(),
            count: 0,
        })
    }

    /// Writes one frame. `record.feature` and `record.image` are filled in.
    pub fn push(
        &mut self,
        mut record: FrameRecord,
        feature: &[f32],
        image: Option<&[u8]>,
        detections: &[Detection],
    ) -> Result<usize, SequenceError> {
        let n = self.count;
        record.feature = format!("features/{n:06}.bin");
        let fpath = self.dir.join(&record.feature);
        fs::write(&fpath, encode_feature(feature)).map_err(io_err(&fpath))?;
        record.image = match image {
            Some(bytes) => {
                let r = format!("images/{n:06}.png");
                let p = self.dir.join(&r);
                fs::write(&p, bytes).map_err(io_err(&p))?;
                Some(r)
            }
            None => None,
        };
        let line = serde_json::to_string(&record).expect("frame serializes");
        let fp = self.dir.join("frames.jsonl");
        writeln!(self.frames, "{line}").map_err(io_err(&fp))?;
        if !detections.is_empty() {
            let rec = DetectionRecord { frame: n, detections: detections.to_vec() };
            let dp = self.dir.join("detections.jsonl");
            writeln!(self.detections, "{}", serde_json::to_string(&rec).expect("detections serialize"))
                .map_err(io_err(&dp))?;
        }
        self.count += 1;
        Ok(n)
    }

    /// Flushes and re-reads the directory through the validating reader.
    pub fn finish(mut self) -> Result<Sequence, SequenceError> {
        let fp = self.dir.join("frames.jsonl");
        self.frames.flush().map_err(io_err(&fp))?;
        self.detections.flush().map_err(io_err(&fp))?;
        Sequence::open(&self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_roundtrip_and_header() {
        let v = vec![0.5f32, -1.0, 2.25];
        let b = encode_feature(&v);
        assert_eq!(&b[..8], b"IKBF\x03\x00\x00\x00");
        assert_eq!(decode_feature(&b).unwrap(), v);
        assert!(decode_feature(&b[..10]).is_err());
    }
}
