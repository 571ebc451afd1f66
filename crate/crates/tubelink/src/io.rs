//! On-disk formats. Everything is JSON lines except the classifier model,
//! which is a single JSON object.
//!
//! Frame indices in every file are 1-based. Classes are written as names;
//! readers also accept integers, interpreted as 0-based indices into the
//! active class vocabulary. Masks are row-major run-length lists
//! `[start, len, start, len, ...]` over flat pixel indices.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geom::{BoundingBox, PixelMask};
use crate::ingest::{BinarySegmentation, FlowMagnitudeMap};
use crate::scoring::LinearModel;
use crate::types::{
    ActionTube, Extent, GroundTruthTube, RegionProposal, ScoreVector, TubeRegion, VideoProposals,
};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn record_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Record {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Ordered class-name table mapping names to 0-based ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassVocabulary {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl ClassVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate class name {n:?}")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name_of(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    fn resolve(&self, class: &ClassField) -> Option<usize> {
        match class {
            ClassField::Name(n) => self.id_of(n),
            ClassField::Id(i) => {
                if *i < self.names.len() {
                    Some(*i)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ProposalsHeader {
    video_id: String,
    frame_count: usize,
    class_names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    video_id: String,
    frame: usize,
    width: u32,
    height: u32,
    proposals: Vec<ProposalRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProposalRecord {
    #[serde(rename = "box")]
    bbox: [u32; 4],
    scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_rle: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    actionness: Option<f64>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Loads one video's proposals. The first line is a header naming the video,
/// its frame count and its classes; each further line carries one frame.
/// Missing frame lines load as empty frames.
pub fn load_proposals(path: impl AsRef<Path>) -> Result<VideoProposals> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let Some((header_no, header_line)) = lines.first() else {
        return Err(record_err(path, 1, "missing header line"));
    };
    let header: ProposalsHeader = serde_json::from_str(header_line)
        .map_err(|e| record_err(path, *header_no, format!("bad header: {e}")))?;
    let class_count = header.class_names.len();

    let mut frames: Vec<Option<Vec<RegionProposal>>> = vec![None; header.frame_count];
    let mut dims: Option<(u32, u32)> = None;
    for (line_no, line) in &lines[1..] {
        let rec: FrameRecord = serde_json::from_str(line)
            .map_err(|e| record_err(path, *line_no, format!("bad frame record: {e}")))?;
        if rec.video_id != header.video_id {
            return Err(record_err(
                path,
                *line_no,
                format!("video_id {:?} does not match header {:?}", rec.video_id, header.video_id),
            ));
        }
        if rec.frame == 0 || rec.frame > header.frame_count {
            return Err(record_err(
                path,
                *line_no,
                format!("frame {} outside 1..={}", rec.frame, header.frame_count),
            ));
        }
        match dims {
            None => dims = Some((rec.width, rec.height)),
            Some(d) if d != (rec.width, rec.height) => {
                return Err(record_err(
                    path,
                    *line_no,
                    format!("frame dimensions {}x{} differ from {}x{}", rec.width, rec.height, d.0, d.1),
                ));
            }
            _ => {}
        }
        if frames[rec.frame - 1].is_some() {
            return Err(record_err(path, *line_no, format!("duplicate frame {}", rec.frame)));
        }
        let mut props = Vec::with_capacity(rec.proposals.len());
        for (pi, p) in rec.proposals.iter().enumerate() {
            let here = |field: &str, msg: String| {
                record_err(path, *line_no, format!("proposal {pi}, field {field:?}: {msg}"))
            };
            if p.scores.len() != class_count {
                return Err(here(
                    "scores",
                    format!("expected {} scores, got {}", class_count, p.scores.len()),
                ));
            }
            let bbox = BoundingBox::new(p.bbox[0], p.bbox[1], p.bbox[2], p.bbox[3])
                .map_err(|e| here("box", e.to_string()))?;
            let mask = p
                .mask_rle
                .as_ref()
                .map(|rle| PixelMask::from_flat_runs(rec.width, rec.height, rle))
                .transpose()
                .map_err(|e| here("mask_rle", e.to_string()))?;
            let scores =
                ScoreVector::new(p.scores.clone()).map_err(|e| here("scores", e.to_string()))?;
            let prop = RegionProposal::new(rec.frame, bbox, mask, scores, p.actionness)
                .map_err(|e| here("box", e.to_string()))?;
            props.push(prop);
        }
        frames[rec.frame - 1] = Some(props);
    }
    let (width, height) = dims.unwrap_or((0, 0));
    let frames: Vec<Vec<RegionProposal>> =
        frames.into_iter().map(Option::unwrap_or_default).collect();
    VideoProposals::new(header.video_id, width, height, header.class_names, frames)
        .map_err(|e| record_err(path, 1, e.to_string()))
}

/// Writes one video in the format [`load_proposals`] reads, emitting a line
/// for every frame, including empty ones.
pub fn save_proposals(video: &VideoProposals, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let header = ProposalsHeader {
        video_id: video.video_id.clone(),
        frame_count: video.frame_count(),
        class_names: video.class_names.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("serializable")).map_err(io_err(path))?;
    for (t, frame) in video.frames().iter().enumerate() {
        let rec = FrameRecord {
            video_id: video.video_id.clone(),
            frame: t + 1,
            width: video.frame_width,
            height: video.frame_height,
            proposals: frame
                .iter()
                .map(|p| ProposalRecord {
                    bbox: [p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max],
                    scores: p.scores.as_slice().to_vec(),
                    mask_rle: p.mask.as_ref().map(PixelMask::to_flat_runs),
                    actionness: p.actionness,
                })
                .collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ClassField {
    Name(String),
    Id(usize),
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthRecord {
    video_id: String,
    class: ClassField,
    t_start: usize,
    t_end: usize,
    extents: Vec<ExtentRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ExtentRecord {
    #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
    bbox: Option<[u32; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_rle: Option<Vec<u64>>,
    /// Mask dimensions; required alongside `mask_rle`.
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<u32>,
}

/// Loads annotated tubes grouped by video id. Classes resolve against
/// `vocab`; unknown names or out-of-range indices are errors.
pub fn load_ground_truth(
    path: impl AsRef<Path>,
    vocab: &ClassVocabulary,
) -> Result<BTreeMap<String, Vec<GroundTruthTube>>> {
    let path = path.as_ref();
    let mut out: BTreeMap<String, Vec<GroundTruthTube>> = BTreeMap::new();
    for (line_no, line) in read_lines(path)? {
        let rec: GroundTruthRecord = serde_json::from_str(&line)
            .map_err(|e| record_err(path, line_no, format!("bad record: {e}")))?;
        let tube_id = format!("video {:?}, tube starting at frame {}", rec.video_id, rec.t_start);
        let class_id = vocab.resolve(&rec.class).ok_or_else(|| {
            record_err(path, line_no, format!("{tube_id}: unknown class {:?}", rec.class))
        })?;
        let mut extents = Vec::with_capacity(rec.extents.len());
        for (i, e) in rec.extents.iter().enumerate() {
            let extent = match (&e.bbox, &e.mask_rle) {
                (Some(b), None) => Extent::Box(
                    BoundingBox::new(b[0], b[1], b[2], b[3])
                        .map_err(|err| record_err(path, line_no, format!("{tube_id}, extent {i}: {err}")))?,
                ),
                (None, Some(rle)) => {
                    let (Some(w), Some(h)) = (e.width, e.height) else {
                        return Err(record_err(
                            path,
                            line_no,
                            format!("{tube_id}, extent {i}: mask_rle requires width and height"),
                        ));
                    };
                    Extent::Mask(PixelMask::from_flat_runs(w, h, rle).map_err(|err| {
                        record_err(path, line_no, format!("{tube_id}, extent {i}: {err}"))
                    })?)
                }
                _ => {
                    return Err(record_err(
                        path,
                        line_no,
                        format!("{tube_id}, extent {i}: exactly one of box or mask_rle required"),
                    ));
                }
            };
            extents.push(extent);
        }
        let tube = GroundTruthTube::new(class_id, rec.t_start, rec.t_end, extents)
            .map_err(|e| record_err(path, line_no, format!("{tube_id}: {e}")))?;
        out.entry(rec.video_id).or_default().push(tube);
    }
    Ok(out)
}

/// Writes ground-truth tubes with class names from `vocab`.
pub fn save_ground_truth(
    tubes: &BTreeMap<String, Vec<GroundTruthTube>>,
    vocab: &ClassVocabulary,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for (video_id, video_tubes) in tubes {
        for t in video_tubes {
            let name = vocab
                .name_of(t.class_id)
                .ok_or_else(|| Error::Invalid(format!("class id {} outside vocabulary", t.class_id)))?;
            let rec = GroundTruthRecord {
                video_id: video_id.clone(),
                class: ClassField::Name(name.to_string()),
                t_start: t.t_start,
                t_end: t.t_end,
                extents: t
                    .extents
                    .iter()
                    .map(|e| match e {
                        Extent::Box(b) => ExtentRecord {
                            bbox: Some([b.x_min, b.y_min, b.x_max, b.y_max]),
                            mask_rle: None,
                            width: None,
                            height: None,
                        },
                        Extent::Mask(m) => ExtentRecord {
                            bbox: None,
                            mask_rle: Some(m.to_flat_runs()),
                            width: Some(m.width()),
                            height: Some(m.height()),
                        },
                    })
                    .collect(),
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable"))
                .map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Collects every class name appearing in a ground-truth or tube file, in
/// sorted order, for building a vocabulary when none is supplied.
pub fn scan_class_names(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let mut names = std::collections::BTreeSet::new();
    for (line_no, line) in read_lines(path)? {
        let v: Value = serde_json::from_str(&line)
            .map_err(|e| record_err(path, line_no, format!("bad record: {e}")))?;
        match v.get("class") {
            Some(Value::String(s)) => {
                names.insert(s.clone());
            }
            Some(Value::Number(_)) => {
                return Err(record_err(
                    path,
                    line_no,
                    "numeric class ids need an explicit class list",
                ));
            }
            _ => return Err(record_err(path, line_no, "missing class field")),
        }
    }
    Ok(names.into_iter().collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct FlowRecord {
    frame: usize,
    width: u32,
    height: u32,
    magnitudes: Vec<f64>,
}

/// Loads per-frame flow magnitude maps; returns `frame_count` entries with
/// `None` for frames the file does not cover.
pub fn load_flow_maps(
    path: impl AsRef<Path>,
    frame_count: usize,
) -> Result<Vec<Option<FlowMagnitudeMap>>> {
    let path = path.as_ref();
    let mut out: Vec<Option<FlowMagnitudeMap>> = (0..frame_count).map(|_| None).collect();
    for (line_no, line) in read_lines(path)? {
        let rec: FlowRecord = serde_json::from_str(&line)
            .map_err(|e| record_err(path, line_no, format!("bad record: {e}")))?;
        if rec.frame == 0 || rec.frame > frame_count {
            return Err(record_err(
                path,
                line_no,
                format!("frame {} outside 1..={frame_count}", rec.frame),
            ));
        }
        if out[rec.frame - 1].is_some() {
            return Err(record_err(path, line_no, format!("duplicate frame {}", rec.frame)));
        }
        let map = FlowMagnitudeMap::new(rec.width, rec.height, rec.magnitudes)
            .map_err(|e| record_err(path, line_no, e.to_string()))?;
        out[rec.frame - 1] = Some(map);
    }
    Ok(out)
}

/// Writes per-frame flow maps in the format [`load_flow_maps`] reads.
pub fn save_flow_maps(maps: &[(usize, FlowMagnitudeMap)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for (frame, map) in maps {
        let rec = FlowRecord {
            frame: *frame,
            width: map.width(),
            height: map.height(),
            magnitudes: (0..map.height())
                .flat_map(|y| (0..map.width()).map(move |x| (x, y)))
                .map(|(x, y)| map.get(x, y))
                .collect(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentationRecord {
    frame: usize,
    width: u32,
    height: u32,
    /// Empty list means no foreground on this frame.
    mask_rle: Vec<u64>,
}

/// Loads per-frame binary segmentations as `(frame_index, segmentation)`.
pub fn load_segmentations(path: impl AsRef<Path>) -> Result<Vec<(usize, BinarySegmentation)>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let rec: SegmentationRecord = serde_json::from_str(&line)
            .map_err(|e| record_err(path, line_no, format!("bad record: {e}")))?;
        let foreground = if rec.mask_rle.is_empty() {
            None
        } else {
            Some(
                PixelMask::from_flat_runs(rec.width, rec.height, &rec.mask_rle)
                    .map_err(|e| record_err(path, line_no, e.to_string()))?,
            )
        };
        let seg = BinarySegmentation::new(rec.width, rec.height, foreground)
            .map_err(|e| record_err(path, line_no, e.to_string()))?;
        out.push((rec.frame, seg));
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct TubeRecord {
    video_id: String,
    class: ClassField,
    t_start: usize,
    t_end: usize,
    score: f64,
    boxes: Vec<[u32; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_rle: Option<Vec<Vec<u64>>>,
    /// Mask dimensions; present iff `mask_rle` is.
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<u32>,
}

/// Writes detection tubes as JSON lines, one record per tube.
pub fn save_tubes(
    tubes: &[(String, ActionTube)],
    vocab: &ClassVocabulary,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for (video_id, tube) in tubes {
        let name = vocab
            .name_of(tube.class_id)
            .ok_or_else(|| Error::Invalid(format!("class id {} outside vocabulary", tube.class_id)))?;
        let any_mask = tube.members.iter().any(|m| m.mask.is_some());
        let (mask_rle, width, height) = if any_mask {
            let dims = tube
                .members
                .iter()
                .find_map(|m| m.mask.as_ref())
                .map(|m| (m.width(), m.height()))
                .expect("some mask present");
            let rle = tube
                .members
                .iter()
                .map(|m| m.mask.as_ref().map(PixelMask::to_flat_runs).unwrap_or_default())
                .collect();
            (Some(rle), Some(dims.0), Some(dims.1))
        } else {
            (None, None, None)
        };
        let rec = TubeRecord {
            video_id: video_id.clone(),
            class: ClassField::Name(name.to_string()),
            t_start: tube.t_start,
            t_end: tube.t_end,
            score: tube.global_score,
            boxes: tube
                .members
                .iter()
                .map(|m| [m.bbox.x_min, m.bbox.y_min, m.bbox.x_max, m.bbox.y_max])
                .collect(),
            mask_rle,
            width,
            height,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads detection tubes grouped by video id. Member class scores are not
/// stored on disk and load as 0; only the global score is preserved.
pub fn load_tubes(
    path: impl AsRef<Path>,
    vocab: &ClassVocabulary,
) -> Result<BTreeMap<String, Vec<ActionTube>>> {
    let path = path.as_ref();
    let mut out: BTreeMap<String, Vec<ActionTube>> = BTreeMap::new();
    for (line_no, line) in read_lines(path)? {
        let rec: TubeRecord = serde_json::from_str(&line)
            .map_err(|e| record_err(path, line_no, format!("bad record: {e}")))?;
        let class_id = vocab
            .resolve(&rec.class)
            .ok_or_else(|| record_err(path, line_no, format!("unknown class {:?}", rec.class)))?;
        let expected = rec
            .t_end
            .checked_sub(rec.t_start)
            .map(|d| d + 1)
            .ok_or_else(|| record_err(path, line_no, "t_start exceeds t_end"))?;
        if rec.boxes.len() != expected {
            return Err(record_err(
                path,
                line_no,
                format!("expected {expected} boxes, got {}", rec.boxes.len()),
            ));
        }
        let masks: Vec<Option<PixelMask>> = match &rec.mask_rle {
            None => vec![None; expected],
            Some(rles) => {
                if rles.len() != expected {
                    return Err(record_err(
                        path,
                        line_no,
                        format!("expected {expected} mask entries, got {}", rles.len()),
                    ));
                }
                let (Some(w), Some(h)) = (rec.width, rec.height) else {
                    return Err(record_err(path, line_no, "mask_rle requires width and height"));
                };
                rles.iter()
                    .map(|rle| {
                        if rle.is_empty() {
                            Ok(None)
                        } else {
                            PixelMask::from_flat_runs(w, h, rle)
                                .map(Some)
                                .map_err(|e| record_err(path, line_no, e.to_string()))
                        }
                    })
                    .collect::<Result<_>>()?
            }
        };
        let members: Vec<TubeRegion> = rec
            .boxes
            .iter()
            .zip(masks)
            .map(|(b, mask)| {
                Ok(TubeRegion {
                    bbox: BoundingBox::new(b[0], b[1], b[2], b[3])
                        .map_err(|e| record_err(path, line_no, e.to_string()))?,
                    mask,
                    class_score: 0.0,
                })
            })
            .collect::<Result<_>>()?;
        let tube = ActionTube::new(class_id, rec.t_start, rec.t_end, members, rec.score)
            .map_err(|e| record_err(path, line_no, e.to_string()))?;
        out.entry(rec.video_id).or_default().push(tube);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    class_names: Vec<String>,
    feature_dim: usize,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

/// Loads a linear per-class scoring model from a single JSON object.
pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let m: ModelFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| record_err(path, 1, format!("bad model file: {e}")))?;
    LinearModel::new(m.class_names, m.feature_dim, m.weights, m.biases)
}

pub fn save_model(model: &LinearModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let m = ModelFile {
        class_names: model.class_names().to_vec(),
        feature_dim: model.feature_dim(),
        weights: model.weights().to_vec(),
        biases: model.biases().to_vec(),
    };
    let file = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer(BufWriter::new(file), &m)
        .map_err(|e| Error::Invalid(format!("cannot serialize model: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRecord {
    video_id: String,
    frame: usize,
    proposal_index: usize,
    x_a: Vec<f64>,
    x_f: Vec<f64>,
}

/// Appearance/flow feature pairs keyed by `(video_id, frame, proposal_index)`;
/// `proposal_index` is 0-based within the frame's proposal list.
pub type FeatureTable = std::collections::HashMap<(String, usize, usize), (Vec<f64>, Vec<f64>)>;

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let mut out = FeatureTable::new();
    for (line_no, line) in read_lines(path)? {
        let rec: FeatureRecord = serde_json::from_str(&line)
            .map_err(|e| record_err(path, line_no, format!("bad record: {e}")))?;
        let key = (rec.video_id, rec.frame, rec.proposal_index);
        if out.insert(key.clone(), (rec.x_a, rec.x_f)).is_some() {
            return Err(record_err(
                path,
                line_no,
                format!("duplicate features for {key:?}"),
            ));
        }
    }
    Ok(out)
}

pub fn save_features(
    rows: &[(String, usize, usize, Vec<f64>, Vec<f64>)],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for (video_id, frame, proposal_index, x_a, x_f) in rows {
        let rec = FeatureRecord {
            video_id: video_id.clone(),
            frame: *frame,
            proposal_index: *proposal_index,
            x_a: x_a.clone(),
            x_f: x_f.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("serializable")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
