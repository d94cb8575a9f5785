use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Characteristic metadata sidecar.
///
/// A plain `key = value` text file; `#` starts a comment. Lists are comma
/// separated and interaction pairs are written `a:b`:
///
/// ```text
/// binary = convind, divi
/// square_exclusions = beta
/// interaction_exclusions = mom1m:mom12m, bm:ep
/// size = mvel1
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata {
    pub binary: BTreeSet<String>,
    pub square_exclusions: BTreeSet<String>,
    /// Canonical pairs with `a < b`.
    pub interaction_exclusions: BTreeSet<(String, String)>,
    /// Market-value characteristic for value weighting.
    pub size: Option<String>,
}

pub(crate) fn canonical_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl Metadata {
    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Metadata::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse {
                path: "<metadata>".into(),
                line: lineno as u64 + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
            let mut items = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string);
            match key.trim() {
                "binary" => meta.binary.extend(items),
                "square_exclusions" => meta.square_exclusions.extend(items),
                "interaction_exclusions" => {
                    for item in items {
                        let (a, b) = item
                            .split_once(':')
                            .ok_or_else(|| bad(format!("interaction pair `{item}` must be `a:b`")))?;
                        let (a, b) = (a.trim(), b.trim());
                        if a == b {
                            return Err(bad(format!("interaction pair `{item}` repeats a name")));
                        }
                        meta.interaction_exclusions.insert(canonical_pair(a, b));
                    }
                }
                "size" => meta.size = items.next_back(),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        Ok(meta)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                msg,
            },
            e => e,
        })
    }

    pub fn to_text(&self) -> String {
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let _ = writeln!(out, "binary = {}", join(&self.binary));
        let _ = writeln!(out, "square_exclusions = {}", join(&self.square_exclusions));
        let pairs: Vec<String> = self
            .interaction_exclusions
            .iter()
            .map(|(a, b)| format!("{a}:{b}"))
            .collect();
        let _ = writeln!(out, "interaction_exclusions = {}", pairs.join(", "));
        if let Some(size) = &self.size {
            let _ = writeln!(out, "size = {size}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_roundtrip() {
        let text = "# flags\nbinary = divi, sin\nsquare_exclusions = beta\n\
                    interaction_exclusions = mom1m:bm, ep : bm\nsize = mvel1\n";
        let m = Metadata::parse(text).unwrap();
        assert!(m.binary.contains("sin"));
        assert!(m.interaction_exclusions.contains(&("bm".into(), "mom1m".into())));
        assert!(m.interaction_exclusions.contains(&("bm".into(), "ep".into())));
        assert_eq!(m.size.as_deref(), Some("mvel1"));
        assert_eq!(Metadata::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Metadata::parse("binary divi").is_err());
        assert!(Metadata::parse("colour = red").is_err());
        assert!(Metadata::parse("interaction_exclusions = a").is_err());
    }
}
