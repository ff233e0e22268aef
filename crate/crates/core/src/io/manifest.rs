use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logme::{TaskKind, TaskLabels};
use crate::ranking::TruthDirection;

use super::labels::read_labels;

/// One entry of a hub: either a feature file to score or a precomputed score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestModel {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<f64>,
}

/// JSON description of a model hub evaluated on one dataset. Relative paths
/// resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubManifest {
    pub dataset: String,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default)]
    pub truth_direction: TruthDirection,
    pub models: Vec<ManifestModel>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl HubManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks ids, entry shape and that every referenced file exists.
    pub fn validate(&self, source: &Path) -> Result<()> {
        let schema = |message: String| Error::Schema {
            path: source.to_path_buf(),
            message,
        };
        if self.models.is_empty() {
            return Err(schema("manifest lists no models".into()));
        }
        let mut ids = HashSet::new();
        for m in &self.models {
            if m.id.is_empty() {
                return Err(schema("model id must not be empty".into()));
            }
            if !ids.insert(m.id.as_str()) {
                return Err(schema(format!("duplicate model id '{}'", m.id)));
            }
            match (&m.features, m.score) {
                (Some(_), Some(_)) => {
                    return Err(schema(format!(
                        "model '{}' has both features and score",
                        m.id
                    )))
                }
                (None, None) => {
                    return Err(schema(format!(
                        "model '{}' needs features or a score",
                        m.id
                    )))
                }
                (None, Some(s)) if !s.is_finite() => {
                    return Err(schema(format!("model '{}' has a non-finite score", m.id)))
                }
                (Some(f), None) => {
                    let p = self.resolve(f);
                    if !p.is_file() {
                        return Err(schema(format!(
                            "feature file {} does not exist",
                            p.display()
                        )));
                    }
                }
                _ => {}
            }
            if m.truth.is_some_and(|t| !t.is_finite()) {
                return Err(schema(format!("model '{}' has a non-finite truth", m.id)));
            }
        }
        let truths = self.models.iter().filter(|m| m.truth.is_some()).count();
        if truths != 0 && truths != self.models.len() {
            return Err(schema(
                "truth values must be given for all models or none".into(),
            ));
        }
        if self.needs_labels() {
            let labels = self.labels_file.as_ref().ok_or_else(|| {
                schema("labels_file is required when models reference features".into())
            })?;
            let p = self.resolve(labels);
            if !p.is_file() {
                return Err(schema(format!(
                    "labels file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn needs_labels(&self) -> bool {
        self.models.iter().any(|m| m.features.is_some())
    }

    pub fn truths(&self) -> Option<Vec<f64>> {
        self.models.iter().map(|m| m.truth).collect()
    }

    pub fn load_labels(&self) -> Result<TaskLabels> {
        let p = self
            .labels_file
            .as_ref()
            .ok_or_else(|| Error::invalid("manifest has no labels_file"))?;
        read_labels(self.resolve(p), self.task, self.num_classes)
    }
}

pub fn parse_manifest(text: &str, source: &Path) -> Result<HubManifest> {
    let mut m: HubManifest = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: source.to_path_buf(),
        message: e.to_string(),
    })?;
    m.base_dir = source.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate(source)?;
    Ok(m)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<HubManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &HubManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    super::ptmf::write_bytes(path.as_ref(), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<HubManifest> {
        parse_manifest(text, Path::new("/nonexistent/hub.json"))
    }

    #[test]
    fn score_only_manifest() {
        let m = parse(
            r#"{"dataset":"d","task":"classification","truth_direction":"lower_better",
                "models":[{"id":"a","score":0.5,"truth":1.0},{"id":"b","score":0.7,"truth":2.0}]}"#,
        )
        .unwrap();
        assert_eq!(m.truth_direction, TruthDirection::LowerBetter);
        assert_eq!(m.truths(), Some(vec![1.0, 2.0]));
        assert!(!m.needs_labels());
    }

    #[test]
    fn schema_violations() {
        let dup = r#"{"dataset":"d","task":"regression","models":[{"id":"a","score":1},{"id":"a","score":2}]}"#;
        assert!(matches!(parse(dup), Err(Error::Schema { .. })));
        let both =
            r#"{"dataset":"d","task":"regression","models":[{"id":"a","score":1,"features":"x"}]}"#;
        assert!(parse(both).is_err());
        let unknown =
            r#"{"dataset":"d","task":"regression","models":[{"id":"a","score":1,"extra":0}]}"#;
        assert!(parse(unknown).is_err());
        let trailing = r#"{"dataset":"d","task":"regression","models":[{"id":"a","score":1}]} x"#;
        assert!(parse(trailing).is_err());
        let missing = r#"{"dataset":"d","task":"regression","labels_file":"y","models":[{"id":"a","features":"nope.ptmf"}]}"#;
        assert!(parse(missing).is_err());
        let partial = r#"{"dataset":"d","task":"regression","models":[{"id":"a","score":1,"truth":1},{"id":"b","score":2}]}"#;
        assert!(parse(partial).is_err());
        let empty = r#"{"dataset":"d","task":"regression","models":[]}"#;
        assert!(parse(empty).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f.ptmf"), b"").unwrap();
        std::fs::write(dir.path().join("y.csv"), b"0,1").unwrap();
        let path = dir.path().join("hub.json");
        std::fs::write(
            &path,
            r#"{"dataset":"d","task":"classification","labels_file":"y.csv","models":[{"id":"a","features":"f.ptmf"}]}"#,
        )
        .unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.resolve(Path::new("f.ptmf")), dir.path().join("f.ptmf"));
        assert_eq!(m.load_labels().unwrap().n(), 2);
    }
}
