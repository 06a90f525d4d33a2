//! Files: response-log ingestion, versioned pool files and session event logs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{dataset_digest, FitReport, ResponseLog};
use crate::irt::{ItemParams, QuestionId};
use crate::pool::{AbilityDistribution, CalibratedPool, Provenance, SKETCH_POINTS};
use crate::session::SessionEvent;

/// Current pool file schema.
pub const POOL_FORMAT_VERSION: u32 = 1;

/// Populations larger than this are stored as a quantile sketch.
pub const SKETCH_THRESHOLD: usize = 100_000;

#[derive(Debug, Error)]
pub enum DatastoreError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("pool file format version {found} is not supported (expected {expected}); {hint}")]
    VersionMismatch { found: u32, expected: u32, hint: String },
    #[error("pool file schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Jsonl,
    Csv,
}

impl LogFormat {
    /// `.csv` is CSV; anything else is JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => LogFormat::Csv,
            _ => LogFormat::Jsonl,
        }
    }
}

/// A record dropped because the (examinee, question) pair was already seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateRecord {
    pub line: usize,
    pub first_line: usize,
    pub examinee_id: String,
    pub question_id: QuestionId,
}

/// Summary of an ingested dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Dataset label; the file stem when ingested from a file.
    pub name: String,
    pub examinee_count: usize,
    pub question_count: usize,
    /// Unique (examinee, question) records kept.
    pub log_count: usize,
    /// Raw records read, duplicates included.
    pub records_read: usize,
    pub duplicates: usize,
    /// Questions per concept tag.
    pub concepts: BTreeMap<String, usize>,
    /// Hex SHA-256 of the sorted canonical records.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedLogs {
    /// Unique records in input order; the first occurrence of a pair wins.
    pub logs: Vec<ResponseLog>,
    pub concepts: BTreeMap<QuestionId, String>,
    pub duplicates: Vec<DuplicateRecord>,
    pub manifest: DatasetManifest,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Grade {
    Bool(bool),
    Int(i64),
    Text(String),
}

impl Grade {
    fn into_bool(self) -> Result<bool, String> {
        match self {
            Grade::Bool(b) => Ok(b),
            Grade::Int(0) => Ok(false),
            Grade::Int(1) => Ok(true),
            Grade::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "1" | "true" => Ok(true),
                "0" | "false" => Ok(false),
                other => Err(format!("correct must be 0/1 or true/false, got {other:?}")),
            },
            Grade::Int(v) => Err(format!("correct must be 0/1 or true/false, got {v}")),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    examinee_id: String,
    question_id: String,
    correct: Grade,
    #[serde(default)]
    concept: Option<String>,
}

/// Reads response logs from JSON lines or CSV
/// (`examinee_id,question_id,correct[,concept]` with a header row).
pub fn ingest_logs<R: Read>(reader: R, format: LogFormat) -> Result<IngestedLogs, DatastoreError> {
    let raw = match format {
        LogFormat::Jsonl => read_jsonl(reader)?,
        LogFormat::Csv => read_csv(reader)?,
    };
    let records = raw.len();
    let mut first_seen: HashMap<(String, String), usize> = HashMap::new();
    let mut concepts: BTreeMap<QuestionId, String> = BTreeMap::new();
    let mut logs = Vec::with_capacity(raw.len());
    let mut duplicates = Vec::new();
    for (line, rec) in raw {
        if rec.examinee_id.is_empty() || rec.question_id.is_empty() {
            return Err(DatastoreError::Parse {
                line,
                message: "examinee_id and question_id must be non-empty".into(),
            });
        }
        let correct = rec
            .correct
            .into_bool()
            .map_err(|message| DatastoreError::Parse { line, message })?;
        let qid = QuestionId::from(rec.question_id.as_str());
        if let Some(concept) = rec.concept.filter(|c| !c.is_empty()) {
            match concepts.get(&qid) {
                Some(prev) if *prev != concept => {
                    return Err(DatastoreError::Parse {
                        line,
                        message: format!("question {qid} tagged {concept:?} but earlier tagged {prev:?}"),
                    })
                }
                _ => {
                    concepts.insert(qid.clone(), concept);
                }
            }
        }
        let key = (rec.examinee_id, rec.question_id);
        if let Some(&first_line) = first_seen.get(&key) {
            duplicates.push(DuplicateRecord {
                line,
                first_line,
                examinee_id: key.0,
                question_id: qid,
            });
            continue;
        }
        first_seen.insert(key.clone(), line);
        logs.push(ResponseLog {
            examinee_id: key.0,
            question_id: qid,
            correct,
        });
    }

    let examinees = logs.iter().map(|l| l.examinee_id.as_str()).collect::<BTreeSet<_>>().len();
    let questions = logs.iter().map(|l| &l.question_id).collect::<BTreeSet<_>>().len();
    let mut concept_counts = BTreeMap::new();
    for c in concepts.values() {
        *concept_counts.entry(c.clone()).or_insert(0) += 1;
    }
    let manifest = DatasetManifest {
        name: String::new(),
        examinee_count: examinees,
        question_count: questions,
        log_count: logs.len(),
        records_read: records,
        duplicates: duplicates.len(),
        concepts: concept_counts,
        digest: dataset_digest(&logs.iter().collect::<Vec<_>>()),
    };
    Ok(IngestedLogs {
        logs,
        concepts,
        duplicates,
        manifest,
    })
}

/// Opens `path` and ingests it in the format implied by its extension.
pub fn ingest_log_file(path: &Path) -> Result<IngestedLogs, DatastoreError> {
    let mut out = ingest_logs(File::open(path)?, LogFormat::from_path(path))?;
    out.manifest.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(out)
}

fn read_jsonl<R: Read>(reader: R) -> Result<Vec<(usize, RawRecord)>, DatastoreError> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| DatastoreError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

fn read_csv<R: Read>(reader: R) -> Result<Vec<(usize, RawRecord)>, DatastoreError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let (Some(e_col), Some(q_col), Some(c_col)) =
        (position("examinee_id"), position("question_id"), position("correct"))
    else {
        return Err(DatastoreError::Parse {
            line: 1,
            message: "header must contain examinee_id, question_id and correct".into(),
        });
    };
    let concept_col = position("concept");
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(e, 0))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |col: usize| row.get(col).unwrap_or("").to_owned();
        out.push((
            line,
            RawRecord {
                examinee_id: field(e_col),
                question_id: field(q_col),
                correct: Grade::Text(field(c_col)),
                concept: concept_col.map(field),
            },
        ));
    }
    Ok(out)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> DatastoreError {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    DatastoreError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Question text, one JSON object per line: `{"question_id": .., "content": ..}`.
pub fn read_content<R: Read>(reader: R) -> Result<BTreeMap<QuestionId, String>, DatastoreError> {
    #[derive(Deserialize)]
    struct Row {
        question_id: QuestionId,
        content: String,
    }
    let mut out = BTreeMap::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| DatastoreError::Parse {
            line: k + 1,
            message: e.to_string(),
        })?;
        out.insert(row.question_id, row.content);
    }
    Ok(out)
}

/// On-disk pool representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolFile {
    pub format_version: u32,
    pub items: Vec<ItemParams>,
    #[serde(default)]
    pub content: BTreeMap<QuestionId, String>,
    pub human_abilities: AbilityDistribution,
    #[serde(default)]
    pub concept_abilities: BTreeMap<String, AbilityDistribution>,
    #[serde(default)]
    pub low_confidence: BTreeSet<QuestionId>,
    #[serde(default)]
    pub fit_report: Option<FitReport>,
    pub provenance: Provenance,
}

fn compact(d: &AbilityDistribution) -> AbilityDistribution {
    match d {
        AbilityDistribution::Full { values } if values.len() > SKETCH_THRESHOLD => d.sketch(SKETCH_POINTS),
        _ => d.clone(),
    }
}

impl PoolFile {
    pub fn from_pool(pool: &CalibratedPool) -> Self {
        Self {
            format_version: POOL_FORMAT_VERSION,
            items: pool.items.values().cloned().collect(),
            content: pool.content.clone(),
            human_abilities: compact(&pool.human_abilities),
            concept_abilities: pool.concept_abilities.iter().map(|(k, v)| (k.clone(), compact(v))).collect(),
            low_confidence: pool.low_confidence.clone(),
            fit_report: pool.fit_report.clone(),
            provenance: pool.provenance.clone(),
        }
    }

    pub fn into_pool(self) -> Result<CalibratedPool, DatastoreError> {
        let mut items = BTreeMap::new();
        for it in self.items {
            it.validate()
                .map_err(|e| DatastoreError::Schema(format!("question {}: {e}", it.question_id)))?;
            let id = it.question_id.clone();
            if items.insert(id.clone(), it).is_some() {
                return Err(DatastoreError::Schema(format!("question {id} listed twice")));
            }
        }
        Ok(CalibratedPool {
            items,
            content: self.content,
            human_abilities: self.human_abilities,
            concept_abilities: self.concept_abilities,
            low_confidence: self.low_confidence,
            fit_report: self.fit_report,
            provenance: self.provenance,
        })
    }
}

/// Serializes a pool to its JSON file form.
pub fn pool_to_json(pool: &CalibratedPool) -> String {
    serde_json::to_string_pretty(&PoolFile::from_pool(pool)).expect("pool serializes")
}

/// Parses a pool file, checking the format version before the schema.
pub fn pool_from_json(text: &str) -> Result<CalibratedPool, DatastoreError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| DatastoreError::Schema(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| DatastoreError::Schema("missing format_version".into()))?;
    if found != u64::from(POOL_FORMAT_VERSION) {
        return Err(DatastoreError::VersionMismatch {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: POOL_FORMAT_VERSION,
            hint: "recalibrate from the original logs with `adaptest calibrate` to produce a current pool file"
                .into(),
        });
    }
    let file: PoolFile = serde_json::from_value(value).map_err(|e| DatastoreError::Schema(e.to_string()))?;
    file.into_pool()
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), DatastoreError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| DatastoreError::Io(e.error))?;
    Ok(())
}

pub fn save_pool(path: &Path, pool: &CalibratedPool) -> Result<(), DatastoreError> {
    write_atomic(path, pool_to_json(pool).as_bytes())
}

pub fn load_pool(path: &Path) -> Result<CalibratedPool, DatastoreError> {
    pool_from_json(&std::fs::read_to_string(path)?)
}

/// Appends session events to a JSON-lines file, flushing after each record.
#[derive(Debug)]
pub struct EventLogWriter {
    file: File,
}

impl EventLogWriter {
    pub fn open(path: &Path) -> Result<Self, DatastoreError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, event: &SessionEvent) -> Result<(), DatastoreError> {
        let mut line = serde_json::to_vec(event).expect("event serializes");
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

/// Events read back from a log file.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<SessionEvent>,
    /// An unterminated, unparsable final line (an interrupted write) was skipped.
    pub torn_tail: bool,
}

pub fn parse_event_log(text: &str) -> Result<EventLog, DatastoreError> {
    let mut events = Vec::new();
    let mut torn_tail = false;
    let terminated = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    for (k, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SessionEvent>(line) {
            Ok(ev) => events.push(ev),
            Err(_) if k + 1 == lines.len() && !terminated => torn_tail = true,
            Err(e) => {
                return Err(DatastoreError::Parse {
                    line: k + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(EventLog { events, torn_tail })
}

pub fn read_event_log(path: &Path) -> Result<EventLog, DatastoreError> {
    parse_event_log(&std::fs::read_to_string(path)?)
}
