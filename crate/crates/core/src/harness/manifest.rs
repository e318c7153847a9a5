use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<String>,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogCase {
    /// Alternating user and assistant messages, starting with the user.
    #[serde(default)]
    pub history: Vec<String>,
    pub message: String,
    pub references: Vec<String>,
}

/// Surface color with the class it depicts; `class: null` for unlabeled
/// surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub color: [u8; 3],
    pub class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub scene_id: String,
    pub mesh_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_labels_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    #[serde(default)]
    pub qa: Vec<QaPair>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dialog: Vec<DialogCase>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub palette: Vec<PaletteEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<PathBuf>,
}

fn require_nonempty(field: String, items: &[String]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::manifest(field, "must not be empty"));
    }
    if let Some(i) = items.iter().position(|s| s.trim().is_empty()) {
        return Err(Error::manifest(format!("{field}[{i}]"), "must not be blank"));
    }
    Ok(())
}

impl SceneManifest {
    pub fn validate(&self) -> Result<()> {
        if self.scene_id.trim().is_empty() {
            return Err(Error::manifest("scene_id", "must not be empty"));
        }
        if self.scene_id.contains(['/', '\\']) || self.scene_id.starts_with('.') {
            return Err(Error::manifest("scene_id", "must be usable as a directory name"));
        }
        if self.mesh_path.as_os_str().is_empty() {
            return Err(Error::manifest("mesh_path", "must not be empty"));
        }
        for (i, qa) in self.qa.iter().enumerate() {
            if qa.question.trim().is_empty() {
                return Err(Error::manifest(format!("qa[{i}].question"), "must not be empty"));
            }
            require_nonempty(format!("qa[{i}].answers"), &qa.answers)?;
        }
        if !self.captions.is_empty() {
            require_nonempty("captions".into(), &self.captions)?;
        }
        if let Some(d) = &self.decomposition {
            require_nonempty("decomposition.references".into(), &d.references)?;
        }
        for (i, d) in self.dialog.iter().enumerate() {
            require_nonempty(format!("dialog[{i}].references"), &d.references)?;
            if d.message.trim().is_empty() {
                return Err(Error::manifest(format!("dialog[{i}].message"), "must not be empty"));
            }
        }
        if let Some(names) = &self.class_names {
            if names.len() < 2 {
                return Err(Error::manifest("class_names", "needs at least two classes"));
            }
            for (i, p) in self.palette.iter().enumerate() {
                if let Some(c) = &p.class {
                    if !names.contains(c) {
                        return Err(Error::manifest(format!("palette[{i}].class"), format!("'{c}' is not in class_names")));
                    }
                }
            }
        } else if self.palette.iter().any(|p| p.class.is_some()) {
            return Err(Error::manifest("palette", "requires class_names"));
        }
        Ok(())
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.mesh_path);
        if let Some(p) = self.gt_labels_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.transcript_path.as_mut() {
            fix(p);
        }
    }

    /// Palette as `(color, class id)` pairs against `class_names`.
    pub fn palette_ids(&self) -> Vec<([u8; 3], Option<u32>)> {
        let names = self.class_names.clone().unwrap_or_default();
        self.palette
            .iter()
            .map(|p| {
                let id = p.class.as_ref().and_then(|c| names.iter().position(|n| n == c)).map(|i| i as u32);
                (p.color, id)
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::agent::save_json(path.as_ref(), self)
    }
}

/// Reads and validates a manifest; relative paths are resolved against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<SceneManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: SceneManifest = serde_json::from_str(&text).map_err(|e| Error::manifest("$", e.to_string()))?;
    m.validate()?;
    m.resolve(path.parent().unwrap_or(Path::new(".")));
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, json: &str) -> PathBuf {
        let p = dir.join("m.json");
        fs::write(&p, json).unwrap();
        p
    }

    #[test]
    fn minimal_and_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let m = load_manifest(write(dir.path(), r#"{"scene_id":"s","mesh_path":"mesh.ply"}"#)).unwrap();
        assert_eq!(m.mesh_path, dir.path().join("mesh.ply"));
        assert!(m.qa.is_empty());
    }

    #[test]
    fn empty_answers_names_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"scene_id":"s","mesh_path":"m.ply","qa":[{"question":"q","answers":[]}]}"#);
        match load_manifest(p) {
            Err(Error::Manifest { field, .. }) => assert_eq!(field, "qa[0].answers"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn palette_class_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"{"scene_id":"s","mesh_path":"m.ply","class_names":["a","b"],"palette":[{"color":[1,2,3],"class":"c"}]}"#,
        );
        assert!(matches!(load_manifest(p), Err(Error::Manifest { .. })));
    }
}
