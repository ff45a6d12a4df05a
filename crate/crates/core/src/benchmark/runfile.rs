//! Pre-recorded rankings, one JSON object per line:
//! `{"query": "...", "ranking": ["theorem.id", ...]}`.

use std::collections::HashMap;
use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};

use super::{EngineError, RankingEngine};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEntry {
    pub query: String,
    pub ranking: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunFile {
    rankings: HashMap<String, Vec<String>>,
}

impl RunFile {
    pub fn read<R: BufRead>(input: R) -> io::Result<RunFile> {
        let mut rankings = HashMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: RunEntry = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("run file line {}: {e}", i + 1))
            })?;
            rankings.insert(entry.query, entry.ranking);
        }
        Ok(RunFile { rankings })
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }
}

impl RankingEngine for RunFile {
    fn rank(&self, query: &str, depth: usize) -> Result<Vec<String>, EngineError> {
        let ranking = self
            .rankings
            .get(query)
            .ok_or_else(|| format!("run file has no ranking for this query"))?;
        Ok(ranking.iter().take(depth).cloned().collect())
    }
}
