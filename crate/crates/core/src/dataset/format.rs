//! Manifest (TOML) plus binary record files.
//!
//! A record file starts with the 4-byte magic `SFRC`, a little-endian `u16`
//! format version and a reserved `u16`. Records follow back to back until
//! end of file, each laid out as:
//!
//! ```text
//! u16 id_len | u32 deep_dim | u16 sun_dim | u16 yolo_count
//! u8 flags (bit0 geo, bit1 label, bit2 indoor) | u8 label | u8 dataset | u8 reserved
//! id bytes (UTF-8)
//! [f64 lat, f64 lon]            if flags.bit0
//! f32 x deep_dim                deep features
//! f32 x sun_dim                 SUN attributes
//! (u16 index, f32 conf) x yolo_count, strictly increasing index
//! ```
//!
//! All integers and reals are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClassSet, DatasetError, DatasetId, FeatureRecord, Scene, SentimentLabel, SUN_DIM};

pub const RECORD_MAGIC: &[u8; 4] = b"SFRC";
pub const FORMAT_VERSION: u16 = 1;

const FLAG_GEO: u8 = 1;
const FLAG_LABEL: u8 = 1 << 1;
const FLAG_INDOOR: u8 = 1 << 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negative: usize,
    pub neutral: usize,
    pub positive: usize,
    #[serde(default)]
    pub unlabeled: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.negative + self.neutral + self.positive + self.unlabeled
    }

    pub fn get(&self, label: SentimentLabel) -> usize {
        match label {
            SentimentLabel::Negative => self.negative,
            SentimentLabel::Neutral => self.neutral,
            SentimentLabel::Positive => self.positive,
        }
    }

    pub fn tally<'a>(records: impl IntoIterator<Item = &'a FeatureRecord>) -> Self {
        let mut c = ClassCounts::default();
        for r in records {
            match r.label {
                Some(SentimentLabel::Negative) => c.negative += 1,
                Some(SentimentLabel::Neutral) => c.neutral += 1,
                Some(SentimentLabel::Positive) => c.positive += 1,
                None => c.unlabeled += 1,
            }
        }
        c
    }
}

/// Describes one dataset: feature dimension, label space, counts and the
/// record files (relative to the manifest's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u16,
    pub dataset_id: DatasetId,
    pub deep_dim: usize,
    pub class_set: ClassSet,
    pub record_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<String>,
    /// Backbone layer the deep features were taken from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_layer: Option<String>,
    pub record_files: Vec<PathBuf>,
    pub class_counts: ClassCounts,
}

impl DatasetManifest {
    fn validate(&self) -> Result<(), DatasetError> {
        if self.format_version != FORMAT_VERSION {
            return Err(DatasetError::Manifest(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        if self.class_counts.total() != self.record_count {
            return Err(DatasetError::Manifest(format!(
                "class counts sum to {} but record_count is {}",
                self.class_counts.total(),
                self.record_count
            )));
        }
        if self.class_set == ClassSet::Binary && self.class_counts.neutral != 0 {
            return Err(DatasetError::Manifest(
                "binary dataset declares neutral records".into(),
            ));
        }
        Ok(())
    }
}

/// A manifest together with its decoded records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<FeatureRecord>,
}

impl Dataset {
    /// Builds a dataset whose manifest counts are derived from `records`.
    pub fn new(
        dataset_id: DatasetId,
        class_set: ClassSet,
        deep_dim: usize,
        records: Vec<FeatureRecord>,
    ) -> Self {
        let manifest = DatasetManifest {
            format_version: FORMAT_VERSION,
            dataset_id,
            deep_dim,
            class_set,
            record_count: records.len(),
            backbone: None,
            extraction_layer: None,
            record_files: Vec::new(),
            class_counts: ClassCounts::tally(&records),
        };
        Dataset { manifest, records }
    }

    /// Loads the manifest at `path` and every record file it lists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let manifest = read_manifest(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let records = read_records(&manifest, dir)?;
        Ok(Dataset { manifest, records })
    }

    pub fn class_set(&self) -> ClassSet {
        self.manifest.class_set
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| DatasetError::io(format!("manifest not found: {}", path.display()), e))?;
    let manifest: DatasetManifest =
        toml::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(
    path: impl AsRef<Path>,
    manifest: &DatasetManifest,
) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let text = toml::to_string(manifest).map_err(|e| DatasetError::Manifest(e.to_string()))?;
    fs::write(path, text).map_err(|e| DatasetError::io(format!("writing {}", path.display()), e))
}

/// Reads and validates every record listed by `manifest`. Ordinals in
/// errors count records across files, starting at 0.
pub fn read_records(
    manifest: &DatasetManifest,
    dir: &Path,
) -> Result<Vec<FeatureRecord>, DatasetError> {
    manifest.validate()?;
    let mut records = Vec::with_capacity(manifest.record_count);
    for file in &manifest.record_files {
        let path = dir.join(file);
        let bytes = fs::read(&path)
            .map_err(|e| DatasetError::io(format!("reading {}", path.display()), e))?;
        decode_file(&bytes, &path, &mut records)?;
    }
    for (ordinal, r) in records.iter().enumerate() {
        if r.deep.len() != manifest.deep_dim {
            return Err(DatasetError::Record {
                ordinal,
                detail: format!(
                    "deep dimension mismatch: record has {}, manifest declares {}",
                    r.deep.len(),
                    manifest.deep_dim
                ),
            });
        }
        r.validate(ordinal)?;
        if let Some(label) = r.label {
            if !manifest.class_set.contains(label) {
                return Err(DatasetError::Record {
                    ordinal,
                    detail: format!("label {label} not in {:?} class set", manifest.class_set),
                });
            }
        }
    }
    let counts = ClassCounts::tally(&records);
    if counts != manifest.class_counts {
        return Err(DatasetError::Manifest(format!(
            "records tally {counts:?}, manifest declares {:?}",
            manifest.class_counts
        )));
    }
    Ok(records)
}

/// Writes `records` as a single record file.
pub fn write_records(
    path: impl AsRef<Path>,
    records: &[FeatureRecord],
) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(RECORD_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    for (ordinal, r) in records.iter().enumerate() {
        r.validate(ordinal)?;
        encode_record(r, ordinal, &mut buf)?;
    }
    fs::write(path, buf).map_err(|e| DatasetError::io(format!("writing {}", path.display()), e))
}

/// Writes the dataset's records next to `manifest_path` (same stem, `.sfr`
/// extension) and then the manifest itself.
pub fn write_dataset(
    manifest_path: impl AsRef<Path>,
    dataset: &Dataset,
) -> Result<(), DatasetError> {
    let manifest_path = manifest_path.as_ref();
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("records");
    let record_file = PathBuf::from(format!("{stem}.sfr"));
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    for (ordinal, r) in dataset.records.iter().enumerate() {
        if r.deep.len() != dataset.manifest.deep_dim {
            return Err(DatasetError::Record {
                ordinal,
                detail: "deep dimension mismatch".into(),
            });
        }
    }
    write_records(dir.join(&record_file), &dataset.records)?;
    let mut manifest = dataset.manifest.clone();
    manifest.record_files = vec![record_file];
    manifest.record_count = dataset.records.len();
    manifest.class_counts = ClassCounts::tally(&dataset.records);
    manifest.validate()?;
    write_manifest(manifest_path, &manifest)
}

fn encode_record(r: &FeatureRecord, ordinal: usize, buf: &mut Vec<u8>) -> Result<(), DatasetError> {
    let too_long = |what: &str| DatasetError::Record {
        ordinal,
        detail: format!("{what} does not fit the record header"),
    };
    let id_len = u16::try_from(r.image_id.len()).map_err(|_| too_long("image id"))?;
    let deep_dim = u32::try_from(r.deep.len()).map_err(|_| too_long("deep vector"))?;
    let sun_dim = u16::try_from(r.sun.len()).map_err(|_| too_long("sun vector"))?;
    let yolo_count = u16::try_from(r.yolo.len()).map_err(|_| too_long("yolo map"))?;
    let mut flags = 0u8;
    if r.geo.is_some() {
        flags |= FLAG_GEO;
    }
    if r.label.is_some() {
        flags |= FLAG_LABEL;
    }
    if r.scene == Scene::Indoor {
        flags |= FLAG_INDOOR;
    }
    buf.extend_from_slice(&id_len.to_le_bytes());
    buf.extend_from_slice(&deep_dim.to_le_bytes());
    buf.extend_from_slice(&sun_dim.to_le_bytes());
    buf.extend_from_slice(&yolo_count.to_le_bytes());
    buf.push(flags);
    buf.push(r.label.map_or(0, SentimentLabel::code));
    buf.push(r.dataset_id.code());
    buf.push(0);
    buf.extend_from_slice(r.image_id.as_bytes());
    if let Some((lat, lon)) = r.geo {
        buf.extend_from_slice(&lat.to_le_bytes());
        buf.extend_from_slice(&lon.to_le_bytes());
    }
    for v in r.deep.iter().chain(&r.sun) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for (&idx, &conf) in &r.yolo {
        buf.extend_from_slice(&idx.to_le_bytes());
        buf.extend_from_slice(&conf.to_le_bytes());
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    ordinal: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(DatasetError::Record {
                ordinal: self.ordinal,
                detail: "truncated record".into(),
            }),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DatasetError> {
        Ok(self.take(N)?.try_into().expect("slice length checked"))
    }

    fn u8(&mut self) -> Result<u8, DatasetError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DatasetError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32, DatasetError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, DatasetError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, DatasetError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| DatasetError::Record {
            ordinal: self.ordinal,
            detail: "vector length overflow".into(),
        })?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect())
    }
}

fn decode_file(
    bytes: &[u8],
    path: &Path,
    out: &mut Vec<FeatureRecord>,
) -> Result<(), DatasetError> {
    if bytes.len() < 8 || &bytes[..4] != RECORD_MAGIC {
        return Err(DatasetError::Magic(path.display().to_string()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(DatasetError::Magic(path.display().to_string()));
    }
    let mut cur = Cursor {
        bytes,
        pos: 8,
        ordinal: out.len(),
    };
    while cur.pos < bytes.len() {
        cur.ordinal = out.len();
        out.push(decode_record(&mut cur)?);
    }
    Ok(())
}

fn decode_record(cur: &mut Cursor<'_>) -> Result<FeatureRecord, DatasetError> {
    let ordinal = cur.ordinal;
    let err = |detail: String| DatasetError::Record { ordinal, detail };
    let id_len = cur.u16()? as usize;
    let deep_dim = cur.u32()? as usize;
    let sun_dim = cur.u16()? as usize;
    let yolo_count = cur.u16()? as usize;
    let flags = cur.u8()?;
    let label_code = cur.u8()?;
    let dataset_code = cur.u8()?;
    let _reserved = cur.u8()?;
    if sun_dim != SUN_DIM {
        return Err(err(format!("sun dimension {sun_dim} (expected {SUN_DIM})")));
    }
    let image_id = std::str::from_utf8(cur.take(id_len)?)
        .map_err(|_| err("image id is not UTF-8".into()))?
        .to_string();
    let geo = if flags & FLAG_GEO != 0 {
        Some((cur.f64()?, cur.f64()?))
    } else {
        None
    };
    let deep = cur.f32s(deep_dim)?;
    let sun = cur.f32s(sun_dim)?;
    let mut yolo = BTreeMap::new();
    let mut last: Option<u16> = None;
    for _ in 0..yolo_count {
        let idx = cur.u16()?;
        let conf = cur.f32()?;
        if last.is_some_and(|l| idx <= l) {
            return Err(err("yolo indices not strictly increasing".into()));
        }
        last = Some(idx);
        yolo.insert(idx, conf);
    }
    let label = if flags & FLAG_LABEL != 0 {
        Some(
            SentimentLabel::from_code(label_code)
                .ok_or_else(|| err(format!("label code {label_code}")))?,
        )
    } else {
        None
    };
    let dataset_id = DatasetId::from_code(dataset_code)
        .ok_or_else(|| err(format!("dataset code {dataset_code}")))?;
    let scene = if flags & FLAG_INDOOR != 0 {
        Scene::Indoor
    } else {
        Scene::Outdoor
    };
    let record = FeatureRecord {
        image_id,
        deep,
        sun,
        yolo,
        geo,
        label,
        dataset_id,
        scene,
    };
    record.validate(ordinal)?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, deep_dim: usize, label: SentimentLabel) -> FeatureRecord {
        FeatureRecord {
            image_id: id.to_string(),
            deep: (0..deep_dim).map(|i| i as f32 * 0.25 - 1.0).collect(),
            sun: (0..SUN_DIM).map(|i| (i as f32).sin()).collect(),
            yolo: BTreeMap::from([(3, 0.7), (9417, 1.0)]),
            geo: Some((41.8781, -87.6298)),
            label: Some(label),
            dataset_id: DatasetId::OutdoorSent,
            scene: Scene::Outdoor,
        }
    }

    fn raw_file(records: &[FeatureRecord]) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(RECORD_MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        for (i, r) in records.iter().enumerate() {
            encode_record(r, i, &mut buf).unwrap();
        }
        buf
    }

    #[test]
    fn round_trip_three_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = vec![
            record("a", 8, SentimentLabel::Negative),
            record("b", 8, SentimentLabel::Neutral),
            record("c", 8, SentimentLabel::Positive),
        ];
        recs[1].geo = None;
        recs[1].yolo.clear();
        recs[2].scene = Scene::Indoor;
        let ds = Dataset::new(DatasetId::OutdoorSent, ClassSet::Ternary, 8, recs);
        let path = dir.path().join("set.toml");
        write_dataset(&path, &ds).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back.records, ds.records);
        assert_eq!(back.manifest.class_counts.neutral, 1);
        assert_eq!(back.manifest.record_files, vec![PathBuf::from("set.sfr")]);
    }

    #[test]
    fn short_sun_vector_is_rejected_with_ordinal() {
        let mut bad = record("x", 4, SentimentLabel::Positive);
        bad.sun.pop();
        let bytes = raw_file(&[record("ok", 4, SentimentLabel::Positive), bad]);
        let mut out = Vec::new();
        let err = decode_file(&bytes, Path::new("f"), &mut out).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("record 1") && msg.contains("sun dimension"),
            "{msg}"
        );
    }

    #[test]
    fn deep_dimension_mismatch_against_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new(
            DatasetId::DeepSent,
            ClassSet::Binary,
            1024,
            vec![record("a", 1024, SentimentLabel::Positive)],
        );
        let path = dir.path().join("m.toml");
        write_dataset(&path, &ds).unwrap();
        let mut manifest = read_manifest(&path).unwrap();
        manifest.deep_dim = 2048;
        let err = read_records(&manifest, dir.path()).unwrap_err();
        assert!(err.to_string().contains("deep dimension mismatch"), "{err}");
    }

    #[test]
    fn yolo_index_out_of_range() {
        let mut bad = record("x", 2, SentimentLabel::Positive);
        bad.yolo.insert(9418, 0.5);
        let bytes = raw_file(&[bad]);
        let err = decode_file(&bytes, Path::new("f"), &mut Vec::new()).unwrap_err();
        assert!(err.to_string().contains("yolo index 9418"), "{err}");
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = raw_file(&[record("x", 2, SentimentLabel::Positive)]);
        bytes[0] = b'X';
        assert!(matches!(
            decode_file(&bytes, Path::new("f"), &mut Vec::new()),
            Err(DatasetError::Magic(_))
        ));
        let mut bytes = raw_file(&[]);
        bytes[4] = 9;
        assert!(matches!(
            decode_file(&bytes, Path::new("f"), &mut Vec::new()),
            Err(DatasetError::Magic(_))
        ));
    }

    #[test]
    fn manifest_count_checks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        let ds = Dataset::new(
            DatasetId::DeepSent,
            ClassSet::Binary,
            2,
            vec![record("a", 2, SentimentLabel::Positive)],
        );
        write_dataset(&path, &ds).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replace("positive = 1", "positive = 2")).unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(DatasetError::Manifest(_))
        ));
    }

    #[test]
    fn binary_dataset_rejects_neutral_records() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new(
            DatasetId::DeepSent,
            ClassSet::Binary,
            2,
            vec![record("a", 2, SentimentLabel::Neutral)],
        );
        assert!(write_dataset(dir.path().join("m.toml"), &ds).is_err());
    }

    #[test]
    fn missing_manifest() {
        let err = read_manifest("/nonexistent/m.toml").unwrap_err();
        assert!(err.to_string().contains("manifest not found"));
    }
}
