//! Offline phase: batch descriptor extraction and the `.thir` index file.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic "THIR" | version u16 = 1 | flags u16 | R u16 | dim u32 = 3R
//! resize_w u16 | resize_h u16 | range_policy u8 | entry_count u32
//! entry_count x (id u32 | label u8 | magnification u16 | path_len u16 | path bytes)
//! entry_count x dim x f32 descriptor values, entry-major
//! ```
//!
//! The low four bits of `flags` name the resize filter; 0 is bilinear with
//! half-pixel centers, the only filter implemented. The remaining bits must be 0.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::betti::{descriptor, BettiCurveSpec, RangePolicy, TopoDescriptor};
use crate::dataset::{DatasetRecord, Label, Magnification};
use crate::error::{Error, Result};
use crate::image::{load_image, resize};

pub const MAGIC: [u8; 4] = *b"THIR";
pub const VERSION: u16 = 1;
pub const FILTER_BILINEAR: u16 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub record: DatasetRecord,
    pub descriptor: TopoDescriptor,
}

/// An immutable collection of descriptors with their metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    spec: BettiCurveSpec,
    resize: (usize, usize),
    entries: Vec<IndexEntry>,
}

impl Index {
    /// Checks that descriptors have length `3R` and ids run densely from 0.
    pub fn new(
        spec: BettiCurveSpec,
        resize: (usize, usize),
        entries: Vec<IndexEntry>,
    ) -> Result<Self> {
        if resize.0 == 0
            || resize.1 == 0
            || resize.0 > u16::MAX as usize
            || resize.1 > u16::MAX as usize
        {
            return Err(Error::InvalidArgument(format!(
                "resize dimensions {}x{} out of range",
                resize.0, resize.1
            )));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.descriptor.len() != spec.dim() {
                return Err(Error::DimensionMismatch {
                    expected: spec.dim(),
                    actual: e.descriptor.len(),
                });
            }
            if e.record.id as usize != i {
                return Err(Error::InvalidArgument(format!(
                    "entry {i} has id {}, ids must be dense from 0",
                    e.record.id
                )));
            }
        }
        Ok(Self {
            spec,
            resize,
            entries,
        })
    }

    pub fn spec(&self) -> &BettiCurveSpec {
        &self.spec
    }

    pub fn resize_dims(&self) -> (usize, usize) {
        self.resize
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&IndexEntry> {
        self.entries.get(id)
    }

    pub fn stats(&self) -> IndexStats {
        stats(self)
    }

    /// Metadata as CSV `id,path,label,magnification`.
    pub fn metadata_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "path", "label", "magnification"])
            .expect("writing to memory");
        for e in &self.entries {
            let r = &e.record;
            w.write_record([
                r.id.to_string(),
                r.path.to_string_lossy().into_owned(),
                r.label.to_string(),
                r.magnification
                    .factor()
                    .map(|z| z.to_string())
                    .unwrap_or_default(),
            ])
            .expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is utf-8")
    }
}

/// What to do with files that fail to load during [`build_index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BuildMode {
    /// Any failure aborts the build.
    #[default]
    Strict,
    /// Failures are skipped and reported; the surviving entries are renumbered.
    Lenient,
}

/// Loads, resizes and describes every record, in record order.
///
/// Returns the index and the `(path, error)` list of skipped files (always
/// empty in strict mode). The output does not depend on `workers`.
pub fn build_index(
    root: &Path,
    records: &[DatasetRecord],
    spec: BettiCurveSpec,
    resize_dims: (usize, usize),
    workers: usize,
    mode: BuildMode,
) -> Result<(Index, Vec<(PathBuf, String)>)> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to index".into()));
    }
    let (w, h) = resize_dims;
    let extract = |r: &DatasetRecord| -> Result<TopoDescriptor> {
        let img = load_image(&root.join(&r.path))?;
        Ok(descriptor(&resize(&img, w, h)?, &spec))
    };
    let results: Vec<Result<TopoDescriptor>> = if workers <= 1 {
        records.iter().map(extract).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        pool.install(|| records.par_iter().map(extract).collect())
    };

    let mut entries = Vec::with_capacity(records.len());
    let mut failures = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(descriptor) => entries.push(IndexEntry {
                record: DatasetRecord {
                    id: entries.len() as u32,
                    ..record.clone()
                },
                descriptor,
            }),
            Err(e) => failures.push((record.path.clone(), e.to_string())),
        }
    }
    if !failures.is_empty() {
        match mode {
            BuildMode::Strict => return Err(Error::Extraction(failures)),
            BuildMode::Lenient => {
                for (path, msg) in &failures {
                    log::warn!("skipping {}: {msg}", path.display());
                }
                if entries.is_empty() {
                    return Err(Error::Extraction(failures));
                }
            }
        }
    }
    Ok((Index::new(spec, resize_dims, entries)?, failures))
}

/// Serializes an index into the `.thir` byte layout.
pub fn encode_index(ix: &Index) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(23 + ix.len() * (ix.dim() * 4 + 64));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&FILTER_BILINEAR.to_le_bytes());
    out.extend_from_slice(&(ix.spec.resolution() as u16).to_le_bytes());
    out.extend_from_slice(&(ix.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(ix.resize.0 as u16).to_le_bytes());
    out.extend_from_slice(&(ix.resize.1 as u16).to_le_bytes());
    out.push(ix.spec.range_policy().code());
    out.extend_from_slice(&(ix.len() as u32).to_le_bytes());
    for e in &ix.entries {
        let r = &e.record;
        let path = r.path.to_str().ok_or_else(|| {
            Error::InvalidArgument(format!("path {} is not valid UTF-8", r.path.display()))
        })?;
        let len = u16::try_from(path.len())
            .map_err(|_| Error::InvalidArgument(format!("path {path} exceeds 65535 bytes")))?;
        out.extend_from_slice(&r.id.to_le_bytes());
        out.push(r.label.code());
        out.extend_from_slice(&r.magnification.code().to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(path.as_bytes());
    }
    for e in &ix.entries {
        for v in e.descriptor.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_index(ix: &Index, path: &Path) -> Result<()> {
    let bytes = encode_index(ix)?;
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn load_index(path: &Path) -> Result<Index> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.to_path_buf())
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    decode_index(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(Error::Format {
                offset: self.offset as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn fail<T>(&self, at: usize, message: String) -> Result<T> {
        Err(Error::Format {
            offset: at as u64,
            message,
        })
    }
}

/// Parses the `.thir` byte layout.
pub fn decode_index(bytes: &[u8]) -> Result<Index> {
    let mut r = Reader { bytes, offset: 0 };
    if r.take(4, "magic")? != MAGIC {
        return r.fail(0, "bad magic, not a THIR index".into());
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return r.fail(4, format!("unsupported version {version}"));
    }
    let flags = r.u16("flags")?;
    if flags != FILTER_BILINEAR {
        return r.fail(6, format!("unsupported flags {flags:#06x}"));
    }
    let resolution = r.u16("resolution")? as usize;
    let dim = r.u32("dimension")? as usize;
    let resize_w = r.u16("resize width")? as usize;
    let resize_h = r.u16("resize height")? as usize;
    let policy_at = r.offset;
    let policy = r.u8("range policy")?;
    let count = r.u32("entry count")? as usize;

    let Some(range_policy) = RangePolicy::from_code(policy) else {
        return r.fail(policy_at, format!("unknown range policy {policy}"));
    };
    let spec = BettiCurveSpec::new(resolution, range_policy).map_err(|_| Error::Format {
        offset: 8,
        message: format!("invalid resolution {resolution}"),
    })?;
    if dim != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            actual: dim,
        });
    }
    if resize_w == 0 || resize_h == 0 {
        return r.fail(
            14,
            format!("invalid resize dimensions {resize_w}x{resize_h}"),
        );
    }

    let mut records = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let at = r.offset;
        let id = r.u32("entry id")?;
        if id as usize != i {
            return r.fail(at, format!("entry {i} has id {id}, expected {i}"));
        }
        let label_at = r.offset;
        let code = r.u8("label")?;
        let Some(label) = Label::from_code(code) else {
            return r.fail(label_at, format!("unknown label code {code}"));
        };
        let mag_at = r.offset;
        let code = r.u16("magnification")?;
        let Some(magnification) = Magnification::from_code(code) else {
            return r.fail(mag_at, format!("unknown magnification {code}"));
        };
        let len = r.u16("path length")? as usize;
        let path_at = r.offset;
        let raw = r.take(len, "path")?;
        let Ok(path) = std::str::from_utf8(raw) else {
            return r.fail(path_at, "path is not valid UTF-8".into());
        };
        records.push(DatasetRecord {
            id,
            path: PathBuf::from(path),
            label,
            magnification,
        });
    }

    let mut entries = Vec::with_capacity(records.len());
    for record in records {
        let raw = r.take(dim * 4, "descriptor")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push(IndexEntry {
            record,
            descriptor: TopoDescriptor(values),
        });
    }
    if r.offset != bytes.len() {
        return r.fail(
            r.offset,
            format!("{} trailing bytes", bytes.len() - r.offset),
        );
    }
    Index::new(spec, (resize_w, resize_h), entries)
}

/// Entry counts per label and magnification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexStats {
    pub entries: usize,
    pub resolution: usize,
    pub dim: usize,
    pub resize: (usize, usize),
    pub range_policy: RangePolicy,
    pub labels: BTreeMap<Label, usize>,
    pub magnifications: BTreeMap<Magnification, usize>,
}

impl IndexStats {
    pub fn label_count(&self, label: Label) -> usize {
        self.labels.get(&label).copied().unwrap_or(0)
    }
}

pub fn stats(ix: &Index) -> IndexStats {
    let mut labels = BTreeMap::new();
    let mut magnifications = BTreeMap::new();
    for e in &ix.entries {
        *labels.entry(e.record.label).or_insert(0) += 1;
        *magnifications.entry(e.record.magnification).or_insert(0) += 1;
    }
    IndexStats {
        entries: ix.len(),
        resolution: ix.spec.resolution(),
        dim: ix.dim(),
        resize: ix.resize,
        range_policy: ix.spec.range_policy(),
        labels,
        magnifications,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::RgbImageGrid;
    use proptest::prelude::*;

    fn record(id: u32, path: &str, label: Label, magnification: Magnification) -> DatasetRecord {
        DatasetRecord {
            id,
            path: PathBuf::from(path),
            label,
            magnification,
        }
    }

    fn small_index(labels: &[Label]) -> Index {
        let spec = BettiCurveSpec::new(2, RangePolicy::PerChannelMinMax).unwrap();
        let entries = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| IndexEntry {
                record: record(i as u32, &format!("img/{i}.png"), l, Magnification::X40),
                descriptor: TopoDescriptor(vec![i as f32; 6]),
            })
            .collect();
        Index::new(spec, (240, 240), entries).unwrap()
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let ix = small_index(&[Label::Malignant]);
        let bytes = encode_index(&ix).unwrap();
        let mut want = Vec::new();
        want.extend_from_slice(b"THIR");
        want.extend_from_slice(&[1, 0, 0, 0, 2, 0, 6, 0, 0, 0, 240, 0, 240, 0, 0, 1, 0, 0, 0]);
        want.extend_from_slice(&[0, 0, 0, 0, 1, 40, 0, 9, 0]);
        want.extend_from_slice(b"img/0.png");
        want.extend_from_slice(&[0u8; 24]);
        assert_eq!(bytes, want);
    }

    #[test]
    fn roundtrip_through_file() {
        let ix = small_index(&[Label::Benign, Label::Malignant, Label::Unknown]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.thir");
        save_index(&ix, &path).unwrap();
        assert_eq!(load_index(&path).unwrap(), ix);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode_index(&small_index(&[Label::Benign])).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_index(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn truncated_descriptor_reports_offset() {
        let bytes = encode_index(&small_index(&[Label::Benign, Label::Benign])).unwrap();
        let cut = bytes.len() - 10;
        match decode_index(&bytes[..cut]) {
            Err(Error::Format { offset, message }) => {
                assert!(message.contains("descriptor"), "{message}");
                assert_eq!(offset as usize, bytes.len() - 24);
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_dimension() {
        let mut bytes = encode_index(&small_index(&[Label::Benign])).unwrap();
        bytes[10] = 7;
        assert!(matches!(
            decode_index(&bytes),
            Err(Error::DimensionMismatch {
                expected: 6,
                actual: 7
            })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_index(&small_index(&[Label::Benign])).unwrap();
        bytes.push(0);
        assert!(matches!(decode_index(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn stats_counts() {
        let ix = small_index(&[
            Label::Benign,
            Label::Malignant,
            Label::Benign,
            Label::Malignant,
            Label::Malignant,
        ]);
        let s = ix.stats();
        assert_eq!(s.entries, 5);
        assert_eq!(s.label_count(Label::Benign), 2);
        assert_eq!(s.label_count(Label::Malignant), 3);
        assert_eq!(s.labels.values().sum::<usize>(), 5);
        assert_eq!(s.magnifications[&Magnification::X40], 5);

        let unknown = small_index(&[Label::Unknown; 4]).stats();
        assert_eq!(unknown.labels, BTreeMap::from([(Label::Unknown, 4)]));
    }

    #[test]
    fn metadata_export() {
        let ix = small_index(&[Label::Benign]);
        assert_eq!(
            ix.metadata_csv(),
            "id,path,label,magnification\n0,img/0.png,benign,40\n"
        );
    }

    #[test]
    fn rejects_bad_entries() {
        let spec = BettiCurveSpec::new(2, RangePolicy::PerChannelMinMax).unwrap();
        let e = IndexEntry {
            record: record(3, "a.png", Label::Benign, Magnification::Unspecified),
            descriptor: TopoDescriptor(vec![0.0; 6]),
        };
        assert!(Index::new(spec, (1, 1), vec![e.clone()]).is_err());
        let short = IndexEntry {
            record: record(0, "a.png", Label::Benign, Magnification::Unspecified),
            descriptor: TopoDescriptor(vec![0.0; 5]),
        };
        assert!(matches!(
            Index::new(spec, (1, 1), vec![short]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn write_fixture(dir: &Path, name: &str, img: &RgbImageGrid) -> DatasetRecord {
        fs::write(dir.join(name), img.to_png()).unwrap();
        record(0, name, Label::Unknown, Magnification::Unspecified)
    }

    #[test]
    fn build_strict_and_lenient() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = vec![
            write_fixture(dir.path(), "a.png", &RgbImageGrid::filled(4, 4, [1, 2, 3])),
            write_fixture(
                dir.path(),
                "b.png",
                &RgbImageGrid::from_fn(5, 5, |x, y| [(x * y * 9) as u8, 0, 50]),
            ),
            write_fixture(dir.path(), "c.png", &RgbImageGrid::filled(3, 6, [9, 9, 9])),
        ];
        for (i, r) in records.iter_mut().enumerate() {
            r.id = i as u32;
        }
        let spec = BettiCurveSpec::new(4, RangePolicy::PerChannelMinMax).unwrap();
        let (ix, skipped) =
            build_index(dir.path(), &records, spec, (8, 8), 2, BuildMode::Strict).unwrap();
        assert!(skipped.is_empty());
        assert_eq!(
            ix.entries().iter().map(|e| e.record.id).collect::<Vec<_>>(),
            [0, 1, 2]
        );
        assert!(ix.entries().iter().all(|e| e.descriptor.len() == 12));

        fs::write(dir.path().join("b.png"), b"corrupt").unwrap();
        let err =
            build_index(dir.path(), &records, spec, (8, 8), 1, BuildMode::Strict).unwrap_err();
        assert!(err.to_string().contains("b.png"), "{err}");

        let (ix, skipped) =
            build_index(dir.path(), &records, spec, (8, 8), 1, BuildMode::Lenient).unwrap();
        assert_eq!(ix.len(), 2);
        assert_eq!(skipped.len(), 1);
        assert_eq!(ix.entries()[1].record.path, PathBuf::from("c.png"));
        assert_eq!(ix.entries()[1].record.id, 1);
    }

    fn arb_index() -> impl Strategy<Value = Index> {
        (1usize..5, 0usize..6, any::<bool>()).prop_flat_map(|(r, n, fixed)| {
            let spec = BettiCurveSpec::new(
                r,
                if fixed {
                    RangePolicy::FixedFullScale
                } else {
                    RangePolicy::PerChannelMinMax
                },
            )
            .unwrap();
            proptest::collection::vec(
                (
                    "[a-zA-Z0-9_/.-]{0,30}",
                    prop::sample::select(vec![Label::Benign, Label::Malignant, Label::Unknown]),
                    prop::sample::select(vec![
                        Magnification::X40,
                        Magnification::X100,
                        Magnification::X200,
                        Magnification::X400,
                        Magnification::Unspecified,
                    ]),
                    proptest::collection::vec(any::<f32>(), 3 * r),
                ),
                n,
            )
            .prop_map(move |rows| {
                let entries = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (p, label, magnification, values))| IndexEntry {
                        record: DatasetRecord {
                            id: i as u32,
                            path: PathBuf::from(p),
                            label,
                            magnification,
                        },
                        descriptor: TopoDescriptor(values),
                    })
                    .collect();
                Index::new(spec, (240, 120), entries).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn encode_decode_preserves_bits(ix in arb_index()) {
            let bytes = encode_index(&ix).unwrap();
            let back = decode_index(&bytes).unwrap();
            prop_assert_eq!(encode_index(&back).unwrap(), bytes);
            for (a, b) in ix.entries().iter().zip(back.entries()) {
                prop_assert_eq!(&a.record, &b.record);
                let bits = |d: &TopoDescriptor| d.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(&a.descriptor), bits(&b.descriptor));
            }
        }
    }
}
