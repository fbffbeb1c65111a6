use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::error::{Error, Result};
use crate::raster::load_image;
use crate::types::{BoundingBox, Label};

/// Kernel file name carrying its page and source box: `{page}__{x}_{y}_{w}_{h}.png`.
pub fn kernel_file_name(page_id: &str, b: &BoundingBox) -> String {
    format!("{page_id}__{}_{}_{}_{}.png", b.x, b.y, b.w, b.h)
}

/// Inverse of [`kernel_file_name`]; `None` for names that do not follow the scheme.
pub fn parse_kernel_file_name(name: &str) -> Option<(String, BoundingBox)> {
    let stem = name.strip_suffix(".png")?;
    let (page, coords) = stem.rsplit_once("__")?;
    let nums: Vec<usize> = coords.split('_').map(|s| s.parse().ok()).collect::<Option<_>>()?;
    match nums[..] {
        [x, y, w, h] => Some((page.to_string(), BoundingBox::new(x, y, w, h))),
        _ => None,
    }
}

/// One line of the append-only label store. `label: None` is an undo tombstone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub kernel: String,
    pub label: Option<Label>,
    #[serde(default)]
    pub ts: u64,
}

/// Append-only JSONL label store.
#[derive(Debug, Clone)]
pub struct LabelStore {
    path: PathBuf,
}

impl LabelStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        LabelStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// All records in file order; a missing file is an empty store.
    pub fn records(&self) -> Result<Vec<LabelRecord>> {
        let file = match std::fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&self.path, e)),
        };
        let mut out = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&self.path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", self.path.display(), n + 1)))?;
            out.push(record);
        }
        Ok(out)
    }

    pub fn append(&self, record: &LabelRecord) -> Result<()> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }

    /// Effective label per kernel (last write wins, tombstones clear) and the
    /// conflict warnings raised while replaying.
    pub fn effective(&self) -> Result<(BTreeMap<String, Label>, Vec<String>)> {
        Ok(replay(&self.records()?))
    }
}

pub(crate) fn replay(records: &[LabelRecord]) -> (BTreeMap<String, Label>, Vec<String>) {
    let mut labels = BTreeMap::new();
    let mut warnings = Vec::new();
    for r in records {
        match r.label {
            Some(label) => {
                if let Some(prev) = labels.insert(r.kernel.clone(), label) {
                    if prev != label {
                        let msg = format!("kernel {} labeled {prev} then {label}; keeping {label}", r.kernel);
                        log::warn!("{msg}");
                        warnings.push(msg);
                    }
                }
            }
            None => {
                labels.remove(&r.kernel);
            }
        }
    }
    (labels, warnings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kernel_path: String,
    pub page_id: String,
    #[serde(rename = "box")]
    pub bbox: Option<BoundingBox>,
    pub label: Option<Label>,
}

/// Kernels joined with their labels. Paths are relative to `root`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let parent = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let same_dir = match (parent.canonicalize(), self.root.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
        let mut out = String::new();
        for e in &self.entries {
            let mut e = e.clone();
            if !same_dir {
                let abs = self.root.join(&e.kernel_path);
                e.kernel_path = abs.canonicalize().unwrap_or(abs).to_string_lossy().into_owned();
            }
            out.push_str(&serde_json::to_string(&e).expect("entry serializes"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(line).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?,
            );
        }
        let root = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Ok(Manifest {
            root,
            entries,
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.entries.iter().all(|e| e.label.is_some())
    }

    pub fn labeled_count(&self) -> usize {
        self.entries.iter().filter(|e| e.label.is_some()).count()
    }

    /// Reads every kernel image, attaching page, box and label.
    pub fn load_kernels(&self) -> Result<Vec<Kernel>> {
        self.entries
            .iter()
            .map(|e| {
                let img = load_image(self.root.join(&e.kernel_path))?;
                let bbox = e.bbox.unwrap_or(BoundingBox::new(0, 0, img.width(), img.height()));
                Ok(Kernel::from_image(img, bbox, e.page_id.clone())?.with_label(e.label))
            })
            .collect()
    }
}

/// Lists the kernel PNGs in `kernel_dir` (sorted by name) and joins them with
/// the label store, if one is given.
pub fn build_manifest(kernel_dir: impl AsRef<Path>, labels_file: Option<&Path>) -> Result<Manifest> {
    let kernel_dir = kernel_dir.as_ref();
    let mut names: Vec<String> = std::fs::read_dir(kernel_dir)
        .map_err(|e| Error::io(kernel_dir, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_file())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter(|name| name.ends_with(".png"))
        .collect();
    names.sort();

    let (labels, warnings) = match labels_file {
        Some(p) => LabelStore::new(p).effective()?,
        None => Default::default(),
    };
    let entries = names
        .into_iter()
        .map(|name| {
            let (page_id, bbox) = match parse_kernel_file_name(&name) {
                Some((page, b)) => (page, Some(b)),
                None => (name.trim_end_matches(".png").to_string(), None),
            };
            ManifestEntry {
                label: labels.get(&name).copied(),
                kernel_path: name,
                page_id,
                bbox,
            }
        })
        .collect();
    Ok(Manifest {
        root: kernel_dir.to_path_buf(),
        entries,
        warnings,
    })
}
