//! Pipeline manifest: one TOML file per artifacts directory recording, for
//! every stage, the hash of what it consumed and what it produced. A stage is
//! current when its input hash equals the previous stage's output hash and
//! its output file still hashes to the recorded value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use mathsearch::hash::sha256_hex;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Informalize,
    Embed,
    Index,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Ingest, Stage::Informalize, Stage::Embed, Stage::Index];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Informalize => "informalize",
            Stage::Embed => "embed",
            Stage::Index => "index",
        }
    }

    pub fn previous(self) -> Option<Stage> {
        match self {
            Stage::Ingest => None,
            Stage::Informalize => Some(Stage::Ingest),
            Stage::Embed => Some(Stage::Informalize),
            Stage::Index => Some(Stage::Embed),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    /// Output file, relative to the artifacts directory.
    pub output: String,
    pub output_hash: String,
    #[serde(default)]
    pub settings: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            stages: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Staleness {
    Missing(Stage),
    InputChanged(Stage),
    OutputModified(Stage),
}

impl fmt::Display for Staleness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Staleness::Missing(s) => write!(f, "stage `{s}` has not been run; run `mathsearch {s}` first"),
            Staleness::InputChanged(s) => {
                write!(f, "stage `{s}` is out of date: its input changed since it ran; rerun `mathsearch {s}`")
            }
            Staleness::OutputModified(s) => {
                write!(f, "stage `{s}` is out of date: its output was modified or removed; rerun `mathsearch {s}`")
            }
        }
    }
}

impl std::error::Error for Staleness {}

pub fn file_hash(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn load(dir: &Path) -> anyhow::Result<Manifest> {
        let path = Manifest::path(dir);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let m: Manifest = toml::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))?;
        if m.version != MANIFEST_VERSION {
            anyhow::bail!("manifest {} has version {}, expected {MANIFEST_VERSION}", path.display(), m.version);
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let path = Manifest::path(dir);
        let tmp = path.with_extension("toml.tmp");
        std::fs::write(&tmp, toml::to_string_pretty(self)?).with_context(|| format!("cannot write {}", tmp.display()))?;
        std::fs::rename(&tmp, &path).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn get(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.get(stage.name())
    }

    /// Records `stage`. Later stages keep their records and show up as
    /// stale until they are rerun.
    pub fn set(&mut self, stage: Stage, record: StageRecord) {
        self.stages.insert(stage.name().to_string(), record);
    }

    /// Checks `stage` and all stages before it; returns the first problem.
    pub fn check_current(&self, dir: &Path, stage: Stage) -> Result<&StageRecord, Staleness> {
        let mut prev_output: Option<&str> = None;
        let mut current = None;
        for s in Stage::ALL.into_iter().filter(|s| *s <= stage) {
            let record = self.get(s).ok_or(Staleness::Missing(s))?;
            if let Some(prev) = prev_output {
                if record.input_hash != prev {
                    return Err(Staleness::InputChanged(s));
                }
            }
            match file_hash(&dir.join(&record.output)) {
                Ok(h) if h == record.output_hash => {}
                _ => return Err(Staleness::OutputModified(s)),
            }
            prev_output = Some(&record.output_hash);
            current = Some(record);
        }
        Ok(current.expect("at least one stage checked"))
    }

    /// Whether `stage` already ran on exactly this input with these settings
    /// and its output is intact.
    pub fn up_to_date(
        &self,
        dir: &Path,
        stage: Stage,
        input_hash: &str,
        settings: &BTreeMap<String, String>,
    ) -> bool {
        match self.get(stage) {
            Some(r) => {
                r.input_hash == input_hash
                    && r.settings == *settings
                    && file_hash(&dir.join(&r.output)).is_ok_and(|h| h == r.output_hash)
            }
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(dir: &Path, stage: Stage, input_hash: &str, content: &str) -> StageRecord {
        let output = format!("{}.out", stage.name());
        std::fs::write(dir.join(&output), content).unwrap();
        StageRecord {
            input_hash: input_hash.into(),
            output_hash: sha256_hex(content.as_bytes()),
            output,
            settings: BTreeMap::new(),
        }
    }

    #[test]
    fn chain_is_checked_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let mut m = Manifest::default();
        assert_eq!(m.check_current(d, Stage::Embed).unwrap_err(), Staleness::Missing(Stage::Ingest));
        let ingest = record(d, Stage::Ingest, "raw", "corpus");
        let informal = record(d, Stage::Informalize, &ingest.output_hash, "pairs");
        m.set(Stage::Ingest, ingest);
        m.set(Stage::Informalize, informal);
        assert!(m.check_current(d, Stage::Informalize).is_ok());
        assert_eq!(m.check_current(d, Stage::Embed).unwrap_err(), Staleness::Missing(Stage::Embed));

        let rerun = record(d, Stage::Ingest, "raw2", "corpus v2");
        m.set(Stage::Ingest, rerun);
        assert_eq!(
            m.check_current(d, Stage::Informalize).unwrap_err(),
            Staleness::InputChanged(Stage::Informalize)
        );
        let msg = m.check_current(d, Stage::Informalize).unwrap_err().to_string();
        assert!(msg.contains("informalize"));
    }

    #[test]
    fn modified_output_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let mut m = Manifest::default();
        m.set(Stage::Ingest, record(d, Stage::Ingest, "raw", "corpus"));
        std::fs::write(d.join("ingest.out"), "tampered").unwrap();
        assert_eq!(m.check_current(d, Stage::Ingest).unwrap_err(), Staleness::OutputModified(Stage::Ingest));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::default();
        let mut r = record(dir.path(), Stage::Ingest, "raw", "corpus");
        r.settings.insert("strict".into(), "false".into());
        m.set(Stage::Ingest, r);
        m.save(dir.path()).unwrap();
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
        let settings = m.get(Stage::Ingest).unwrap().settings.clone();
        assert!(m.up_to_date(dir.path(), Stage::Ingest, "raw", &settings));
        assert!(!m.up_to_date(dir.path(), Stage::Ingest, "other", &settings));
    }
}
