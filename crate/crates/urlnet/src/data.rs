//! Labeled URL dataset: TSV ingestion and train/test preparation
//! (deduplication, per-domain frequency cap, timestamp-ordered split).

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baseline::split_url;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("time-ordered split requested but {missing} records have no timestamp")]
    MissingTimestamps { missing: usize },
    #[error("split fraction {0} outside (0, 1)")]
    InvalidSplitFraction(f64),
    #[error("domain cap fraction {0} outside (0, 1]")]
    InvalidDomainCap(f64),
}

/// One labeled URL. `label` is `+1` (malicious) or `-1` (benign).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub url: String,
    pub label: i8,
    pub timestamp: Option<i64>,
}

/// An ordered collection of records; order is preserved from the input file
/// unless an operation explicitly sorts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Self {
        Dataset { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn urls(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.url.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<i8> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Uniform sample of `n` records without replacement, preserving the
    /// original relative order. Returns everything when `n >= len`.
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices: Vec<usize> = (0..self.len()).collect();
        indices.shuffle(&mut rng);
        let mut chosen: Vec<usize> = indices.into_iter().take(n).collect();
        chosen.sort_unstable();
        Dataset::new(chosen.iter().map(|&i| self.records[i].clone()).collect())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let label = if r.label > 0 { "+1" } else { "-1" };
            match r.timestamp {
                Some(ts) => out.push_str(&format!("{label}\t{}\t{ts}\n", r.url)),
                None => out.push_str(&format!("{label}\t{}\n", r.url)),
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        write_atomic(path, self.to_tsv().as_bytes())?;
        Ok(())
    }
}

/// Parses a UTF-8 TSV of `label<TAB>url[<TAB>timestamp]` lines. Labels
/// `+1`, `1`, `-1`, and `0` are accepted, with `0` mapping to benign.
/// Blank lines are skipped; anything else malformed is an error carrying
/// its line number.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn parse_dataset(text: &str) -> Result<Dataset, DataError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let mut fields = line.split('\t');
        let (Some(label), Some(url)) = (fields.next(), fields.next()) else {
            return Err(DataError::Parse {
                line: line_no,
                reason: "expected label<TAB>url".into(),
            });
        };
        let label = match label {
            "+1" | "1" => 1,
            "-1" | "0" => -1,
            other => {
                return Err(DataError::Parse {
                    line: line_no,
                    reason: format!("unknown label token {other:?}"),
                })
            }
        };
        let timestamp = match fields.next() {
            None => None,
            Some(ts) => Some(ts.parse::<i64>().map_err(|_| DataError::Parse {
                line: line_no,
                reason: format!("bad timestamp {ts:?}"),
            })?),
        };
        if fields.next().is_some() {
            return Err(DataError::Parse {
                line: line_no,
                reason: "too many fields".into(),
            });
        }
        records.push(Record {
            url: url.to_string(),
            label,
            timestamp,
        });
    }
    Ok(Dataset::new(records))
}

/// Train/test preparation: exact-duplicate removal (first occurrence kept),
/// per-hostname frequency cap at `ceil(cap × N)` keeping the earliest
/// records, then a timestamp-ordered split with the first `split_fraction`
/// becoming the training set. Pass `time_split = false` to split in record
/// order without requiring timestamps.
pub fn prepare_dataset(
    ds: &Dataset,
    dedup: bool,
    domain_cap_fraction: Option<f64>,
    split_fraction: f64,
    time_split: bool,
) -> Result<(Dataset, Dataset), DataError> {
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(DataError::InvalidSplitFraction(split_fraction));
    }
    if let Some(cap) = domain_cap_fraction {
        if !(cap > 0.0 && cap <= 1.0) {
            return Err(DataError::InvalidDomainCap(cap));
        }
    }

    let mut records: Vec<Record> = if dedup {
        let mut seen = std::collections::HashSet::new();
        ds.records
            .iter()
            .filter(|r| seen.insert(r.url.clone()))
            .cloned()
            .collect()
    } else {
        ds.records.clone()
    };

    if let Some(cap) = domain_cap_fraction {
        let n = records.len();
        let max_per_host = ((cap * n as f64).ceil() as usize).max(1);
        let mut per_host: std::collections::HashMap<String, Vec<usize>> =
            std::collections::HashMap::new();
        for (i, r) in records.iter().enumerate() {
            per_host
                .entry(split_url(&r.url).hostname)
                .or_default()
                .push(i);
        }
        let mut drop = vec![false; n];
        for indices in per_host.values() {
            if indices.len() <= max_per_host {
                continue;
            }
            // earliest by timestamp, file order breaking ties
            let mut ordered = indices.clone();
            ordered.sort_by_key(|&i| (records[i].timestamp.unwrap_or(i64::MIN), i));
            for &i in &ordered[max_per_host..] {
                drop[i] = true;
            }
        }
        let mut kept = Vec::with_capacity(n);
        for (i, r) in records.into_iter().enumerate() {
            if !drop[i] {
                kept.push(r);
            }
        }
        records = kept;
    }

    if time_split {
        let missing = records.iter().filter(|r| r.timestamp.is_none()).count();
        if missing > 0 {
            return Err(DataError::MissingTimestamps { missing });
        }
        records.sort_by_key(|r| r.timestamp);
    }

    let n_train = ((split_fraction * records.len() as f64) + 1e-9).floor() as usize;
    let test = records.split_off(n_train.min(records.len()));
    Ok((Dataset::new(records), Dataset::new(test)))
}

/// Writes a file via a temporary sibling and an atomic rename, so failed
/// runs never leave partial output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
