//! `.vjson` header plus little-endian `.raw` voxel file.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{voxel_count, LabelVolume, Shape, Spacing, ValueKind, Volume};
use crate::error::{Error, Result};

const DTYPE_F32: &str = "f32";
const DTYPE_U8: &str = "u8";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    shape: Shape,
    spacing_mm: Spacing,
    dtype: String,
    byte_order: String,
    data_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value_kind: Option<ValueKind>,
}

/// Either kind of grid, as found on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Loaded {
    Scalar(Volume),
    Labels(LabelVolume),
}

fn read_header(path: &Path) -> Result<Header> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::MalformedHeader {
        path: path.to_owned(),
        reason: e.to_string(),
    })?;
    let malformed = |reason: String| Error::MalformedHeader { path: path.to_owned(), reason };
    if header.byte_order != "little" {
        return Err(malformed(format!("unsupported byte_order {:?}", header.byte_order)));
    }
    if header.shape.contains(&0) {
        return Err(malformed(format!("shape {:?} has an empty axis", header.shape)));
    }
    if header.spacing_mm.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(malformed(format!("spacing {:?} must be positive", header.spacing_mm)));
    }
    if header.data_file.is_empty() {
        return Err(malformed("empty data_file".into()));
    }
    Ok(header)
}

fn data_path(header_path: &Path, data_file: &str) -> PathBuf {
    header_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(data_file)
}

/// Reads a header and its raw data, returning whichever grid type it holds.
pub fn load(path: impl AsRef<Path>) -> Result<Loaded> {
    let path = path.as_ref();
    let header = read_header(path)?;
    let elem_size = match header.dtype.as_str() {
        DTYPE_F32 => 4,
        DTYPE_U8 => 1,
        other => {
            return Err(Error::UnsupportedDtype { path: path.to_owned(), dtype: other.to_owned() })
        }
    };
    let raw_path = data_path(path, &header.data_file);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected = voxel_count(header.shape) * elem_size;
    if bytes.len() != expected {
        return Err(Error::DataLengthMismatch { path: raw_path, expected, actual: bytes.len() });
    }
    let invalid = |e: Error| Error::MalformedHeader { path: path.to_owned(), reason: e.to_string() };
    if elem_size == 1 {
        LabelVolume::new(header.shape, header.spacing_mm, bytes)
            .map(Loaded::Labels)
            .map_err(invalid)
    } else {
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let kind = header.value_kind.unwrap_or_default();
        Volume::new(header.shape, header.spacing_mm, data, kind)
            .map(Loaded::Scalar)
            .map_err(invalid)
    }
}

/// Loads an `f32` volume.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    match load(path)? {
        Loaded::Scalar(v) => Ok(v),
        Loaded::Labels(_) => Err(Error::WrongDtype {
            path: path.to_owned(),
            expected: DTYPE_F32,
            found: DTYPE_U8.into(),
        }),
    }
}

/// Loads a `u8` label volume.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    match load(path)? {
        Loaded::Labels(lv) => Ok(lv),
        Loaded::Scalar(_) => Err(Error::WrongDtype {
            path: path.to_owned(),
            expected: DTYPE_U8,
            found: DTYPE_F32.into(),
        }),
    }
}

fn write_pair(path: &Path, mut header: Header, payload: &[u8]) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Io {
            path: path.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "header path has no file name"),
        })?;
    header.data_file = format!("{stem}.raw");
    let raw_path = data_path(path, &header.data_file);
    let io_err = |p: &Path| {
        let p = p.to_owned();
        move |source| Error::Io { path: p, source }
    };

    let file = File::create(&raw_path).map_err(io_err(&raw_path))?;
    let mut w = BufWriter::new(file);
    w.write_all(payload).map_err(io_err(&raw_path))?;
    w.flush().map_err(io_err(&raw_path))?;

    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Writes `path` (the `.vjson` header) and a sibling `<stem>.raw` holding `f32` voxels.
pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let header = Header {
        shape: v.shape(),
        spacing_mm: v.spacing_mm(),
        dtype: DTYPE_F32.into(),
        byte_order: "little".into(),
        data_file: String::new(),
        value_kind: Some(v.kind()),
    };
    let mut payload = Vec::with_capacity(v.len() * 4);
    for x in v.data() {
        payload.extend_from_slice(&x.to_le_bytes());
    }
    write_pair(path.as_ref(), header, &payload)
}

/// Writes a label volume with dtype `u8`.
pub fn save_labels(lv: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let header = Header {
        shape: lv.shape(),
        spacing_mm: lv.spacing_mm(),
        dtype: DTYPE_U8.into(),
        byte_order: "little".into(),
        data_file: String::new(),
        value_kind: None,
    };
    write_pair(path.as_ref(), header, lv.labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_header(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_zero_volume() {
        let dir = tempfile::tempdir().unwrap();
        let h = write_header(
            dir.path(),
            "a.vjson",
            r#"{"shape":[2,2,2],"spacing_mm":[1,1,1],"dtype":"f32","byte_order":"little","data_file":"a.raw"}"#,
        );
        fs::write(dir.path().join("a.raw"), [0u8; 32]).unwrap();
        let v = load_volume(&h).unwrap();
        assert_eq!(v.shape(), [2, 2, 2]);
        assert_eq!(v.data(), &[0.0; 8]);
        assert_eq!(v.kind(), ValueKind::Intensity);
    }

    #[test]
    fn short_raw_file_is_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let h = write_header(
            dir.path(),
            "a.vjson",
            r#"{"shape":[2,2,2],"spacing_mm":[1,1,1],"dtype":"f32","byte_order":"little","data_file":"a.raw"}"#,
        );
        fs::write(dir.path().join("a.raw"), [0u8; 16]).unwrap();
        assert!(matches!(
            load_volume(&h),
            Err(Error::DataLengthMismatch { expected: 32, actual: 16, .. })
        ));
    }

    #[test]
    fn error_kinds_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load(dir.path().join("nope.vjson")), Err(Error::MissingFile(_))));

        let h = write_header(dir.path(), "bad.vjson", "{ not json");
        assert!(matches!(load(&h), Err(Error::MalformedHeader { .. })));

        let h = write_header(
            dir.path(),
            "i16.vjson",
            r#"{"shape":[1,1,1],"spacing_mm":[1,1,1],"dtype":"i16","byte_order":"little","data_file":"i16.raw"}"#,
        );
        assert!(matches!(load(&h), Err(Error::UnsupportedDtype { .. })));

        let h = write_header(
            dir.path(),
            "noraw.vjson",
            r#"{"shape":[1,1,1],"spacing_mm":[1,1,1],"dtype":"u8","byte_order":"little","data_file":"noraw.raw"}"#,
        );
        assert!(matches!(load(&h), Err(Error::MissingFile(p)) if p.ends_with("noraw.raw")));

        let h = write_header(
            dir.path(),
            "big.vjson",
            r#"{"shape":[1,1,1],"spacing_mm":[1,1,1],"dtype":"f32","byte_order":"big","data_file":"big.raw"}"#,
        );
        assert!(matches!(load(&h), Err(Error::MalformedHeader { .. })));
    }

    #[test]
    fn labels_saved_as_u8() {
        let dir = tempfile::tempdir().unwrap();
        let lv = LabelVolume::new([1, 2, 2], [0.4; 3], vec![0, 1, 32, 7]).unwrap();
        let p = dir.path().join("labels.vjson");
        save_labels(&lv, &p).unwrap();
        let header: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(header["dtype"], "u8");
        assert_eq!(header["data_file"], "labels.raw");
        assert_eq!(load_labels(&p).unwrap(), lv);
        assert!(matches!(load_volume(&p), Err(Error::WrongDtype { .. })));
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume::filled([1, 1, 1], [1.0; 3], 0.0, ValueKind::Intensity).unwrap();
        let err = save_volume(&v, dir.path().join("missing/dir/v.vjson")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn volume_round_trip_is_bitwise(
            shape in prop::array::uniform3(1usize..5),
            spacing in prop::array::uniform3(0.05f64..3.0),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f32> = (0..voxel_count(shape))
                .map(|_| f32::from_bits(rng.random::<u32>() & 0xff7f_ffff))
                .collect();
            let v = Volume::new(shape, spacing, data, ValueKind::Intensity).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("v.vjson");
            save_volume(&v, &p).unwrap();
            let back = load_volume(&p).unwrap();
            prop_assert_eq!(back.shape(), v.shape());
            prop_assert_eq!(back.spacing_mm(), v.spacing_mm());
            let a: Vec<u32> = v.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn label_round_trip(
            shape in prop::array::uniform3(1usize..5),
            labels in prop::collection::vec(0u8..=32, 64),
        ) {
            let n = voxel_count(shape);
            let lv = LabelVolume::new(shape, [0.25, 0.5, 1.0], labels[..n].to_vec()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("l.vjson");
            save_labels(&lv, &p).unwrap();
            prop_assert_eq!(load_labels(&p).unwrap(), lv);
        }
    }
}
