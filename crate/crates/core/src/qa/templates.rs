//! Versioned question templates with paraphrase pools.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

const DEFAULT_TEMPLATES: &str = include_str!("../../templates/default.tsv");
const MIN_PARAPHRASES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("line {line}: expected `template_id<TAB>text`")]
    Malformed { line: usize },
    #[error("template {0} has {1} paraphrases, at least 3 required")]
    TooFewParaphrases(String, usize),
    #[error("unknown template {0}")]
    Unknown(String),
    #[error("template {template} leaves placeholder {{{slot}}} unfilled")]
    UnfilledSlot { template: String, slot: String },
    #[error("cannot read templates: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank {
    pub version: String,
    pools: BTreeMap<String, Vec<String>>,
}

impl Default for TemplateBank {
    fn default() -> Self {
        TemplateBank::parse(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }
}

impl TemplateBank {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut version = String::from("unversioned");
        let mut pools: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = v.trim().to_owned();
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (id, body) = line.split_once('\t').ok_or(TemplateError::Malformed { line: i + 1 })?;
            if id.trim().is_empty() || body.trim().is_empty() {
                return Err(TemplateError::Malformed { line: i + 1 });
            }
            pools.entry(id.trim().to_owned()).or_default().push(body.trim().to_owned());
        }
        for (id, p) in &pools {
            if p.len() < MIN_PARAPHRASES {
                return Err(TemplateError::TooFewParaphrases(id.clone(), p.len()));
            }
        }
        Ok(TemplateBank { version, pools })
    }

    /// Bundled templates, overridden per template id by every `*.tsv` file
    /// in `dir` (sorted by file name).
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut bank = TemplateBank::default();
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| TemplateError::Io(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
            .collect();
        files.sort();
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(|e| TemplateError::Io(e.to_string()))?;
            let extra = TemplateBank::parse(&text)?;
            if extra.version != "unversioned" {
                bank.version = extra.version.clone();
            }
            bank.pools.extend(extra.pools);
        }
        Ok(bank)
    }

    pub fn paraphrases(&self, template: &str) -> Result<&[String], TemplateError> {
        self.pools.get(template).map(Vec::as_slice).ok_or_else(|| TemplateError::Unknown(template.to_owned()))
    }

    pub fn template_ids(&self) -> impl Iterator<Item = &str> {
        self.pools.keys().map(String::as_str)
    }

    /// Fills paraphrase `index` (modulo the pool size) with `slots`.
    pub fn render(
        &self,
        template: &str,
        index: usize,
        slots: &BTreeMap<String, String>,
    ) -> Result<String, TemplateError> {
        let pool = self.paraphrases(template)?;
        let mut text = pool[index % pool.len()].clone();
        for (k, v) in slots {
            text = text.replace(&format!("{{{k}}}"), v);
        }
        if let Some(start) = text.find('{') {
            let slot = text[start + 1..].split('}').next().unwrap_or_default().to_owned();
            return Err(TemplateError::UnfilledSlot { template: template.to_owned(), slot });
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_bank_is_complete() {
        let bank = TemplateBank::default();
        assert_eq!(bank.version, "1");
        for id in crate::qa::ALL_TEMPLATES {
            assert!(bank.paraphrases(id).unwrap().len() >= 3, "{id}");
        }
    }

    #[test]
    fn render_fills_slots() {
        let bank = TemplateBank::parse("x\tWhere is the {A}?\nx\tFind the {A}.\nx\t{A} location?\n").unwrap();
        let slots = BTreeMap::from([("A".to_owned(), "chair".to_owned())]);
        assert_eq!(bank.render("x", 0, &slots).unwrap(), "Where is the chair?");
        assert_eq!(bank.render("x", 4, &slots).unwrap(), "Find the chair.");
        assert!(matches!(bank.render("x", 0, &BTreeMap::new()), Err(TemplateError::UnfilledSlot { .. })));
    }

    #[test]
    fn rejects_short_pools_and_bad_lines() {
        assert!(matches!(TemplateBank::parse("x\tone\nx\ttwo\n"), Err(TemplateError::TooFewParaphrases(..))));
        assert_eq!(TemplateBank::parse("no tab here"), Err(TemplateError::Malformed { line: 1 }));
    }

    #[test]
    fn overrides_replace_pools() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("a.tsv"),
            "# version: 2\nsr_vertical\tp1 {A} {B}\nsr_vertical\tp2\nsr_vertical\tp3\n",
        )
        .unwrap();
        let bank = TemplateBank::with_overrides(dir.path()).unwrap();
        assert_eq!(bank.version, "2");
        assert_eq!(bank.paraphrases("sr_vertical").unwrap()[0], "p1 {A} {B}");
        assert!(bank.paraphrases("mm_scene_size").is_ok());
    }
}
