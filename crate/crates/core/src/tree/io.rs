//! JSON root files.
//!
//! ```json
//! { "id": "r1",
//!   "main": [[0, 0], [0, -10]],
//!   "laterals": [ { "t": 0.5, "points": [[0, -5], [3, -7]], "virtual": false } ] }
//! ```
//!
//! Main points run from collar to tip; lateral points run from the attachment
//! site outward. A collection is either a directory of such files (read in
//! file-name order) or one file holding a JSON array of root objects.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Branch, Lateral, Point2, RootTree};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct RootFile {
    id: String,
    main: Vec<Point2>,
    #[serde(default)]
    laterals: Vec<LateralFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LateralFile {
    t: f64,
    points: Vec<Point2>,
    #[serde(default, rename = "virtual")]
    is_virtual: bool,
}

impl RootFile {
    fn into_tree(self) -> Result<RootTree> {
        let main = Branch::new(self.main)?;
        let laterals = self
            .laterals
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let branch = if l.is_virtual {
                    if l.points.len() != 1 {
                        return Err(Error::invalid(
                            "root",
                            format!("lateral {i}: virtual lateral must have exactly one point"),
                        ));
                    }
                    Branch::virtual_at(l.points[0])
                } else {
                    Branch::new(l.points)
                        .map_err(|e| Error::invalid("root", format!("lateral {i}: {e}")))?
                };
                Ok(Lateral::new(l.t, branch))
            })
            .collect::<Result<Vec<_>>>()?;
        RootTree::new(self.id, main, laterals)
    }

    fn from_tree(tree: &RootTree) -> Self {
        RootFile {
            id: tree.id().to_string(),
            main: tree.main().points().to_vec(),
            laterals: tree
                .laterals()
                .iter()
                .map(|l| LateralFile {
                    t: l.t,
                    points: l.branch.points().to_vec(),
                    is_virtual: l.branch.is_virtual(),
                })
                .collect(),
        }
    }
}

/// Parses one root object from JSON text.
pub fn parse_root(text: &str, origin: &str) -> Result<RootTree> {
    let raw: RootFile = serde_json::from_str(text).map_err(|source| Error::Parse {
        origin: origin.to_string(),
        source,
    })?;
    raw.into_tree()
}

/// Parses either a single root object or an array of them.
pub fn parse_collection(text: &str, origin: &str) -> Result<Vec<RootTree>> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|source| Error::Parse {
        origin: origin.to_string(),
        source,
    })?;
    let parse = |v: serde_json::Value| -> Result<RootTree> {
        let raw: RootFile = serde_json::from_value(v).map_err(|source| Error::Parse {
            origin: origin.to_string(),
            source,
        })?;
        raw.into_tree()
    };
    match value {
        serde_json::Value::Array(items) => items.into_iter().map(parse).collect(),
        other => Ok(vec![parse(other)?]),
    }
}

pub fn load_root(path: impl AsRef<Path>) -> Result<RootTree> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_root(&text, &path.display().to_string())
}

pub fn save_root(tree: &RootTree, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&RootFile::from_tree(tree)).expect("serializable");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a directory of `*.json` root files (sorted by file name) or a file
/// holding an array of roots.
pub fn load_collection(path: impl AsRef<Path>) -> Result<Vec<RootTree>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
            .collect::<Vec<_>>();
        files.sort();
        files.iter().map(load_root).collect()
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_collection(&text, &path.display().to_string())
    }
}

/// Writes a collection as a single JSON array.
pub fn save_collection(trees: &[RootTree], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<RootFile> = trees.iter().map(RootFile::from_tree).collect();
    let text = serde_json::to_string_pretty(&raw).expect("serializable");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl Serialize for RootTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RootFile::from_tree(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RootTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        RootFile::deserialize(d)?
            .into_tree()
            .map_err(serde::de::Error::custom)
    }
}
