//! Class-per-directory dataset catalog: `root/<split>/<class>/<file>`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{read_image, ImageFormat, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    /// Sorted lexicographically; the position is the label.
    pub classes: Vec<String>,
    pub train: Vec<ImageRecord>,
    pub val: Vec<ImageRecord>,
    pub test: Vec<ImageRecord>,
}

/// Decoded images with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    pub classes: Vec<String>,
    pub images: Vec<RasterImage>,
    pub labels: Vec<usize>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Orders numeric stems numerically, everything else by name after them.
fn file_key(p: &Path) -> (u64, String) {
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    (stem.parse().unwrap_or(u64::MAX), p.to_string_lossy().into_owned())
}

impl DatasetIndex {
    /// Catalogs an on-disk tree. Class names are the union of class
    /// directories across splits; missing splits are empty.
    pub fn scan(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let mut classes = Vec::new();
        for split in Split::ALL {
            let dir = root.join(split.dir_name());
            if !dir.is_dir() {
                continue;
            }
            for p in sorted_entries(&dir)? {
                if p.is_dir() {
                    let name = p.file_name().expect("dir name").to_string_lossy().into_owned();
                    if !classes.contains(&name) {
                        classes.push(name);
                    }
                }
            }
        }
        classes.sort();
        if classes.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut index = DatasetIndex {
            root: root.to_path_buf(),
            classes,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for split in Split::ALL {
            let mut records = Vec::new();
            for (label, class) in index.classes.iter().enumerate() {
                let dir = root.join(split.dir_name()).join(class);
                if !dir.is_dir() {
                    continue;
                }
                let mut files: Vec<PathBuf> = sorted_entries(&dir)?
                    .into_iter()
                    .filter(|p| {
                        p.extension()
                            .and_then(|e| e.to_str())
                            .and_then(ImageFormat::from_extension)
                            .is_some()
                    })
                    .collect();
                files.sort_by_key(|p| file_key(p));
                records.extend(files.into_iter().map(|path| ImageRecord { path, label }));
            }
            *index.split_mut(split) = records;
        }
        Ok(index)
    }

    pub fn split(&self, split: Split) -> &[ImageRecord] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<ImageRecord> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(&self, split: Split) -> Result<LabeledImages> {
        let records = self.split(split);
        let mut images = Vec::with_capacity(records.len());
        for r in records {
            images.push(read_image(&r.path)?);
        }
        Ok(LabeledImages {
            classes: self.classes.clone(),
            images,
            labels: records.iter().map(|r| r.label).collect(),
        })
    }
}
