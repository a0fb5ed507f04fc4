//! Dataset discovery: walks a directory tree, labels each image from a
//! manifest, its path segments, or BreaKHis-style filename tokens.

use std::collections::HashMap;
use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malignant,
    Unknown,
}

impl Label {
    pub fn code(self) -> u8 {
        match self {
            Label::Benign => 0,
            Label::Malignant => 1,
            Label::Unknown => 255,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Label::Benign),
            1 => Some(Label::Malignant),
            255 => Some(Label::Unknown),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malignant => "malignant",
            Label::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" | "b" | "0" => Ok(Label::Benign),
            "malignant" | "m" | "1" => Ok(Label::Malignant),
            "" | "unknown" => Ok(Label::Unknown),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Optical magnification of a BreaKHis patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Magnification {
    X40,
    X100,
    X200,
    X400,
    Unspecified,
}

impl Magnification {
    pub const KNOWN: [Magnification; 4] = [
        Magnification::X40,
        Magnification::X100,
        Magnification::X200,
        Magnification::X400,
    ];

    /// Numeric code used on disk: the zoom factor, or 0 when unspecified.
    pub fn code(self) -> u16 {
        match self {
            Magnification::X40 => 40,
            Magnification::X100 => 100,
            Magnification::X200 => 200,
            Magnification::X400 => 400,
            Magnification::Unspecified => 0,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            40 => Some(Magnification::X40),
            100 => Some(Magnification::X100),
            200 => Some(Magnification::X200),
            400 => Some(Magnification::X400),
            0 => Some(Magnification::Unspecified),
            _ => None,
        }
    }

    /// The zoom factor, `None` when unspecified.
    pub fn factor(self) -> Option<u16> {
        match self {
            Magnification::Unspecified => None,
            m => Some(m.code()),
        }
    }
}

impl fmt::Display for Magnification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.factor() {
            Some(z) => write!(f, "{z}x"),
            None => f.write_str("unspecified"),
        }
    }
}

impl FromStr for Magnification {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_suffix('x').unwrap_or(&t);
        match t {
            "" | "unspecified" => Ok(Magnification::Unspecified),
            _ => t
                .parse::<u16>()
                .ok()
                .filter(|&z| z != 0)
                .and_then(Magnification::from_code)
                .ok_or_else(|| format!("unknown magnification {s:?}")),
        }
    }
}

impl Serialize for Magnification {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.factor() {
            Some(z) => s.serialize_u16(z),
            None => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Magnification {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = Option::<u16>::deserialize(d)?.unwrap_or(0);
        Magnification::from_code(code)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown magnification {code}")))
    }
}

/// One image of a dataset. `path` is relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: u32,
    pub path: PathBuf,
    pub label: Label,
    pub magnification: Magnification,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn segments(path: &Path) -> Vec<String> {
    path.components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect()
}

/// Label from path segments ("benign"/"malignant", case-insensitive; the
/// deepest matching segment wins), then from `_B_`/`_M_` filename tokens.
pub fn parse_label(path: &Path) -> Label {
    let segs = segments(path);
    for seg in segs.iter().rev() {
        let lower = seg.to_ascii_lowercase();
        match (lower.contains("benign"), lower.contains("malignant")) {
            (true, false) => return Label::Benign,
            (false, true) => return Label::Malignant,
            _ => {}
        }
    }
    let name = segs.last().map(String::as_str).unwrap_or("");
    match (name.contains("_B_"), name.contains("_M_")) {
        (true, false) => Label::Benign,
        (false, true) => Label::Malignant,
        _ => Label::Unknown,
    }
}

/// Magnification from a `40X`/`100X`/`200X`/`400X` token in any path
/// segment, falling back to the BreaKHis filename pattern `...-<zoom>-<seq>.png`.
pub fn parse_magnification(path: &Path) -> Magnification {
    let segs = segments(path);
    for seg in segs.iter().rev() {
        for token in seg.split(|c: char| !c.is_ascii_alphanumeric()) {
            let upper = token.to_ascii_uppercase();
            if let Some(zoom) = upper.strip_suffix('X') {
                if let Ok(m) = zoom.parse::<Magnification>() {
                    if m != Magnification::Unspecified {
                        return m;
                    }
                }
            }
        }
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    let parts: Vec<&str> = stem.split('-').collect();
    if parts.len() >= 3 {
        let zoom = parts[parts.len() - 2];
        let seq = parts[parts.len() - 1];
        if !seq.is_empty() && seq.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(m) = zoom.parse::<Magnification>() {
                return m;
            }
        }
    }
    Magnification::Unspecified
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    path: String,
    label: String,
    #[serde(default)]
    magnification: String,
}

fn read_manifest(root: &Path, manifest: &Path) -> Result<HashMap<PathBuf, (Label, Magnification)>> {
    let parse_err = |message: String| Error::ManifestParse {
        path: manifest.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(manifest)
        .map_err(|e| parse_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .clone();
    for col in ["path", "label", "magnification"] {
        if !headers.iter().any(|h| h == col) {
            return Err(parse_err(format!("missing column {col:?}")));
        }
    }
    let mut rows = HashMap::new();
    for (line, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let at = |m: String| parse_err(format!("row {}: {m}", line + 1));
        let label = row.label.parse::<Label>().map_err(at)?;
        let magnification = row.magnification.parse::<Magnification>().map_err(at)?;
        let p = PathBuf::from(&row.path);
        let rel = match p.strip_prefix(root) {
            Ok(r) if p.is_absolute() => r.to_path_buf(),
            _ => p,
        };
        rows.insert(rel, (label, magnification));
    }
    Ok(rows)
}

/// Recursively discovers PNG/JPEG files under `root` and labels them.
///
/// Manifest rows (paths relative to `root`, or absolute under it) override
/// path parsing; a row naming a file that was not discovered is an error.
/// Records are sorted by relative path and numbered densely from 0.
pub fn scan_dataset(root: &Path, manifest: Option<&Path>) -> Result<Vec<DatasetRecord>> {
    if !root.is_dir() {
        return Err(Error::FileNotFound(root.to_path_buf()));
    }
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| Error::Io {
            path: e
                .path()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| root.to_path_buf()),
            source: e
                .into_io_error()
                .unwrap_or_else(|| std::io::Error::other("directory walk failed")),
        })?;
        if entry.file_type().is_file() && is_image(entry.path()) {
            let rel = entry
                .path()
                .strip_prefix(root)
                .expect("walkdir yields paths under root")
                .to_path_buf();
            paths.push(rel);
        }
    }
    if paths.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    paths.sort();

    let overrides = match manifest {
        Some(m) => {
            let rows = read_manifest(root, m)?;
            if let Some(missing) = rows.keys().find(|p| paths.binary_search(p).is_err()) {
                return Err(Error::ManifestParse {
                    path: m.to_path_buf(),
                    message: format!(
                        "{} is not an image under {}",
                        missing.display(),
                        root.display()
                    ),
                });
            }
            rows
        }
        None => HashMap::new(),
    };

    Ok(paths
        .into_iter()
        .enumerate()
        .map(|(i, path)| {
            let (label, magnification) = overrides
                .get(&path)
                .copied()
                .unwrap_or_else(|| (parse_label(&path), parse_magnification(&path)));
            DatasetRecord {
                id: i as u32,
                path,
                label,
                magnification,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn breakhis_filename() {
        let p = Path::new(".../benign/SOB/.../SOB_B_TA-14-4659-40-001.png");
        assert_eq!(parse_label(p), Label::Benign);
        assert_eq!(parse_magnification(p), Magnification::X40);
    }

    #[test]
    fn breakhis_full_layout() {
        let p = Path::new(
            "BreaKHis_v1/histology_slides/breast/malignant/SOB/ductal_carcinoma/SOB_M_DC_14-2523/400X/SOB_M_DC-14-2523-400-010.png",
        );
        assert_eq!(parse_label(p), Label::Malignant);
        assert_eq!(parse_magnification(p), Magnification::X400);
    }

    #[test]
    fn filename_tokens_when_no_directory_hint() {
        assert_eq!(
            parse_label(Path::new("x/SOB_M_LC-14-12204-100-001.png")),
            Label::Malignant
        );
        assert_eq!(
            parse_magnification(Path::new("x/SOB_M_LC-14-12204-100-001.png")),
            Magnification::X100
        );
        assert_eq!(
            parse_magnification(Path::new("200x/a.png")),
            Magnification::X200
        );
    }

    #[test]
    fn directory_beats_filename() {
        assert_eq!(parse_label(Path::new("Benign/SOB_M_x.png")), Label::Benign);
    }

    #[test]
    fn unrecognized_path_falls_back() {
        let p = Path::new("images/patch_0001.png");
        assert_eq!(parse_label(p), Label::Unknown);
        assert_eq!(parse_magnification(p), Magnification::Unspecified);
    }

    fn touch_png(path: &Path) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(
            path,
            crate::image::RgbImageGrid::filled(1, 1, [0, 0, 0]).to_png(),
        )
        .unwrap();
    }

    #[test]
    fn scan_sorts_and_numbers() {
        let dir = tempfile::tempdir().unwrap();
        touch_png(&dir.path().join("malignant/b.png"));
        touch_png(&dir.path().join("benign/a.png"));
        touch_png(&dir.path().join("benign/c.PNG"));
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let recs = scan_dataset(dir.path(), None).unwrap();
        let paths: Vec<_> = recs
            .iter()
            .map(|r| r.path.to_str().unwrap().to_string())
            .collect();
        assert_eq!(paths, ["benign/a.png", "benign/c.PNG", "malignant/b.png"]);
        assert_eq!(recs.iter().map(|r| r.id).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(recs[2].label, Label::Malignant);
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            scan_dataset(dir.path(), None),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn manifest_overrides_path() {
        let dir = tempfile::tempdir().unwrap();
        touch_png(&dir.path().join("benign/a.png"));
        touch_png(&dir.path().join("other/b.png"));
        let manifest = dir.path().join("manifest.csv");
        fs::write(
            &manifest,
            "path,label,magnification\nbenign/a.png,malignant,200\n",
        )
        .unwrap();
        let recs = scan_dataset(dir.path(), Some(&manifest)).unwrap();
        assert_eq!(recs[0].label, Label::Malignant);
        assert_eq!(recs[0].magnification, Magnification::X200);
        assert_eq!(recs[1].label, Label::Unknown);
    }

    #[test]
    fn bad_manifest() {
        let dir = tempfile::tempdir().unwrap();
        touch_png(&dir.path().join("a.png"));
        let manifest = dir.path().join("m.csv");
        fs::write(&manifest, "path,label,magnification\na.png,weird,40\n").unwrap();
        assert!(matches!(
            scan_dataset(dir.path(), Some(&manifest)),
            Err(Error::ManifestParse { .. })
        ));
        fs::write(&manifest, "path,label\na.png,benign\n").unwrap();
        assert!(matches!(
            scan_dataset(dir.path(), Some(&manifest)),
            Err(Error::ManifestParse { .. })
        ));
        fs::write(
            &manifest,
            "path,label,magnification\nmissing.png,benign,40\n",
        )
        .unwrap();
        assert!(matches!(
            scan_dataset(dir.path(), Some(&manifest)),
            Err(Error::ManifestParse { .. })
        ));
    }

    #[test]
    fn label_and_magnification_codes_roundtrip() {
        for l in [Label::Benign, Label::Malignant, Label::Unknown] {
            assert_eq!(Label::from_code(l.code()), Some(l));
        }
        for m in Magnification::KNOWN
            .into_iter()
            .chain([Magnification::Unspecified])
        {
            assert_eq!(Magnification::from_code(m.code()), Some(m));
        }
        assert_eq!(Label::from_code(7), None);
        assert_eq!(Magnification::from_code(41), None);
    }
}
