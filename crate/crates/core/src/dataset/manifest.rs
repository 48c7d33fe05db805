use std::collections::HashSet;
use std::io::Read;
use std::path::{Path, PathBuf};

use super::{DatasetError, StateLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One manifest row. `split` is `None` until assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    pub path: String,
    pub label: StateLabel,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub samples: Vec<LabeledSample>,
}

impl DatasetManifest {
    /// Builds a manifest, rejecting duplicate or empty paths.
    pub fn new(root: impl Into<PathBuf>, samples: Vec<LabeledSample>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for (i, s) in samples.iter().enumerate() {
            if s.path.is_empty() {
                return Err(DatasetError::Manifest {
                    row: i + 1,
                    msg: "empty path".into(),
                });
            }
            if !seen.insert(s.path.as_str()) {
                return Err(DatasetError::Duplicate {
                    path: s.path.clone(),
                    row: i + 1,
                });
            }
        }
        Ok(Self {
            root: root.into(),
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledSample> {
        self.samples.iter().filter(move |s| s.split == Some(split))
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn with_label(&self, label: StateLabel) -> impl Iterator<Item = &LabeledSample> {
        self.samples.iter().filter(move |s| s.label == label)
    }

    pub fn resolve(&self, sample: &LabeledSample) -> PathBuf {
        self.root.join(&sample.path)
    }

    pub fn is_fully_assigned(&self) -> bool {
        self.samples.iter().all(|s| s.split.is_some())
    }
}

/// Reads a `path,label,split` CSV. Relative sample paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(file, root)
}

pub fn parse_manifest<R: Read>(reader: R, root: PathBuf) -> Result<DatasetManifest, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Manifest { row: 0, msg: e.to_string() })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 || cols[0] != "path" || cols[1] != "label" || (cols.len() > 2 && cols[2] != "split") {
        return Err(DatasetError::Manifest {
            row: 0,
            msg: format!("expected header `path,label,split`, got `{}`", cols.join(",")),
        });
    }
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DatasetError::Manifest { row, msg: e.to_string() })?;
        let path = record.get(0).unwrap_or("").to_string();
        let label_name = record.get(1).unwrap_or("");
        let label = StateLabel::from_name(label_name).map_err(|_| DatasetError::Vocabulary {
            name: label_name.to_string(),
            context: format!("manifest row {row}: "),
        })?;
        let split = match record.get(2).unwrap_or("") {
            "" => None,
            s => Some(Split::parse(s).ok_or_else(|| DatasetError::Manifest {
                row,
                msg: format!("split {s:?} is not one of train, val, test"),
            })?),
        };
        samples.push(LabeledSample { path, label, split });
    }
    DatasetManifest::new(root, samples)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    w.write_record(["path", "label", "split"]).map_err(|e| io(e.into()))?;
    for s in &manifest.samples {
        let split = s.split.map(Split::as_str).unwrap_or("");
        w.write_record([s.path.as_str(), s.label.name(), split])
            .map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<DatasetManifest, DatasetError> {
        parse_manifest(text.as_bytes(), PathBuf::from("/data"))
    }

    #[test]
    fn maps_label_names_to_ids() {
        let m = parse("path,label,split\na/img1.png,diced,train\nb.png,creamy paste,\n").unwrap();
        assert_eq!(m.samples[0].label.id(), 1);
        assert_eq!(m.samples[0].split, Some(Split::Train));
        assert_eq!(m.samples[1].label.id(), 0);
        assert_eq!(m.samples[1].split, None);
        assert_eq!(m.resolve(&m.samples[0]), PathBuf::from("/data/a/img1.png"));
    }

    #[test]
    fn split_column_is_optional() {
        let m = parse("path,label\nx.png,whole\n").unwrap();
        assert_eq!(m.samples[0].label.id(), 10);
        assert!(!m.is_fully_assigned());
    }

    #[test]
    fn unknown_label_names_row() {
        let err = parse("path,label,split\na.png,diced,train\nb.png,minced,train\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, DatasetError::Vocabulary { .. }));
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("julienne"));
    }

    #[test]
    fn duplicate_path_rejected() {
        let err = parse("path,label,split\na.png,diced,train\na.png,sliced,val\n").unwrap_err();
        assert!(matches!(err, DatasetError::Duplicate { row: 2, .. }));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse("file,label\na.png,diced\n").is_err());
    }

    #[test]
    fn reference_sized_manifest() {
        let mut text = String::from("path,label,split\n");
        for i in 0..9309 {
            let split = if i < 6348 {
                "train"
            } else if i < 6348 + 1377 {
                "val"
            } else {
                "test"
            };
            let label = super::super::CLASS_NAMES[i % 11];
            text.push_str(&format!("img{i}.png,{label},{split}\n"));
        }
        let m = parse(&text).unwrap();
        assert_eq!(m.count(Split::Train), 6348);
        assert_eq!(m.count(Split::Val), 1377);
        assert_eq!(m.count(Split::Test), 1584);
    }
}
