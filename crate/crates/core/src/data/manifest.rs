//! Dataset manifest: one `clip-path<TAB>label<TAB>split` line per clip.
//!
//! Paths are relative to the manifest's directory. Lines starting with `#`
//! are comments; `# num_classes=N` declares the class count.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    /// Directory clip paths are resolved against.
    pub root: PathBuf,
    pub declared_classes: Option<usize>,
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Declared class count, else one past the largest label.
    pub fn num_classes(&self) -> usize {
        self.declared_classes
            .unwrap_or_else(|| self.entries.iter().map(|e| e.label + 1).max().unwrap_or(0))
    }

    /// Entries of `split` in manifest order.
    pub fn split(&self, split: &str) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(n) = self.declared_classes {
            out.push_str(&format!("# num_classes={n}\n"));
        }
        for (i, name) in self.class_names.iter().enumerate() {
            out.push_str(&format!("# class {i} = {name}\n"));
        }
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.path.display(), e.label, e.split));
        }
        out
    }

    pub fn parse(text: &str, root: PathBuf) -> Result<Self> {
        let mut declared = None;
        let mut class_names = Vec::new();
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("num_classes=") {
                    declared = Some(v.trim().parse().map_err(|_| {
                        Error::format("num_classes", format!("not a count: {v:?}"))
                    })?);
                } else if let Some(rest) = comment.strip_prefix("class ") {
                    if let Some((_, name)) = rest.split_once('=') {
                        class_names.push(name.trim().to_owned());
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, label, split] = fields[..] else {
                return Err(Error::format(
                    format!("manifest line {}", n + 1),
                    format!("expected 3 tab-separated fields, got {}", fields.len()),
                ));
            };
            let label = label.trim().parse().map_err(|_| {
                Error::format(
                    format!("manifest line {} label", n + 1),
                    format!("{label:?}"),
                )
            })?;
            entries.push(ManifestEntry {
                path: PathBuf::from(path),
                label,
                split: split.trim().to_owned(),
            });
        }
        let manifest = Self {
            root,
            declared_classes: declared,
            class_names,
            entries,
        };
        if let Some(n) = declared {
            if let Some(bad) = manifest.entries.iter().find(|e| e.label >= n) {
                return Err(Error::format(
                    "label",
                    format!(
                        "{} has label {} but num_classes={n}",
                        bad.path.display(),
                        bad.label
                    ),
                ));
            }
        }
        Ok(manifest)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, root)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let text = "# num_classes=3\n# class 0 = a\nclip_0\t0\ttrain\nclip_1\t2\ttest\n";
        let m = DatasetManifest::parse(text, PathBuf::from("/data")).unwrap();
        assert_eq!(m.num_classes(), 3);
        assert_eq!(m.split("test").len(), 1);
        assert_eq!(m.resolve(&m.entries[1]), PathBuf::from("/data/clip_1"));
        assert_eq!(m.to_text(), text);
    }

    #[test]
    fn label_beyond_declared_classes_fails() {
        let text = "# num_classes=2\nclip_0\t2\ttrain\n";
        assert!(DatasetManifest::parse(text, PathBuf::new()).is_err());
    }

    #[test]
    fn wrong_field_count_fails() {
        assert!(DatasetManifest::parse("clip_0\t1\n", PathBuf::new()).is_err());
    }
}
