//! Loading the four task formats from a JSON manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{ColumnSchema, ForeignKey, Sample, SampleError, TableSchema, TaskInput, TaskKind};

#[derive(Debug, Error)]
pub enum DatasetLoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("database `{db_id}` not found at {path}")]
    MissingDatabase { db_id: String, path: PathBuf },
    #[error("no schema for database `{0}`")]
    MissingSchema(String),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("dataset is empty after loading")]
    Empty,
}

/// Field names in the source records. Unset names take the documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db_id: Option<String>,
}

fn pick<'a>(name: &'a Option<String>, default: &'a str) -> &'a str {
    name.as_deref().unwrap_or(default)
}

/// Spider-style layout: schema file plus `<database_dir>/<db>/<db>.sqlite`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqlLayout {
    pub tables: PathBuf,
    pub database_dir: PathBuf,
    /// Restricts loading to these databases.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub databases: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub task: TaskKind,
    /// JSONL (or JSON array) of records; relative to the manifest.
    pub path: PathBuf,
    #[serde(default)]
    pub fields: FieldMap,
    /// When set, the file must contain exactly this many records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_size: Option<usize>,
    #[serde(default)]
    pub subset_seed: u64,
    /// Translation only: keep these `source-target` pairs (or bare target languages).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_pairs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sql: Option<SqlLayout>,
}

impl DatasetManifest {
    pub fn from_file(path: &Path) -> Result<(Self, PathBuf), DatasetLoadError> {
        let text = read(path)?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let manifest: Self = serde_path_to_error::deserialize(de).map_err(|e| DatasetLoadError::Parse {
            path: path.to_path_buf(),
            line: e.inner().line(),
            message: format!("{}: {}", e.path(), e.inner()),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, base))
    }
}

fn read(path: &Path) -> Result<String, DatasetLoadError> {
    fs::read_to_string(path).map_err(|source| DatasetLoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Records from JSONL, or from a single JSON array. Returns (line, record).
pub fn parse_records(text: &str, path: &Path) -> Result<Vec<(usize, Value)>, DatasetLoadError> {
    let parse_err = |line: usize, message: String| DatasetLoadError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if text.trim_start().starts_with('[') {
        let arr: Vec<Value> = serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))?;
        return Ok(arr.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        if !v.is_object() {
            return Err(parse_err(i + 1, "expected a JSON object".into()));
        }
        out.push((i + 1, v));
    }
    Ok(out)
}

fn field(v: &Value, name: &str) -> Option<String> {
    match v.get(name)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Loads, validates and subsets a dataset described by `manifest`, resolving
/// relative paths against `base`.
pub fn load_dataset(manifest: &DatasetManifest, base: &Path) -> Result<Vec<Sample>, DatasetLoadError> {
    let path = base.join(&manifest.path);
    let text = read(&path)?;
    let records = parse_records(&text, &path)?;
    if let Some(expected) = manifest.sample_count {
        if expected != records.len() {
            return Err(DatasetLoadError::Manifest(format!(
                "sample_count is {expected} but {} has {} records",
                path.display(),
                records.len()
            )));
        }
    }
    let f = &manifest.fields;
    let stem = file_stem(&path);
    let missing = |line: usize, name: &str| DatasetLoadError::Parse {
        path: path.clone(),
        line,
        message: format!("missing field `{name}`"),
    };
    let get = |v: &Value, line: usize, name: &str| field(v, name).ok_or_else(|| missing(line, name));

    let sql_ctx = match manifest.task {
        TaskKind::TextToSql => Some(SqlContext::load(manifest, base)?),
        _ => None,
    };

    let mut samples = Vec::new();
    for (line, v) in &records {
        let id = field(v, pick(&f.id, "id")).unwrap_or_else(|| format!("{stem}:{line}"));
        let (input, gold) = match manifest.task {
            TaskKind::MathReasoning => (
                TaskInput::MathReasoning {
                    problem: get(v, *line, pick(&f.problem, "problem"))?,
                },
                get(v, *line, pick(&f.answer, "answer"))?,
            ),
            TaskKind::Sentiment => (
                TaskInput::Sentiment {
                    review: get(v, *line, pick(&f.text, "text"))?,
                },
                get(v, *line, pick(&f.label, "label"))?.trim().to_lowercase(),
            ),
            TaskKind::Translation => (
                TaskInput::Translation {
                    source: get(v, *line, pick(&f.source, "source"))?,
                    target_language: get(v, *line, pick(&f.target_language, "target_language"))?,
                    source_language: field(v, pick(&f.source_language, "source_language")),
                },
                get(v, *line, pick(&f.target, "target"))?,
            ),
            TaskKind::TextToSql => {
                let ctx = sql_ctx.as_ref().expect("loaded above");
                let db_id = get(v, *line, pick(&f.db_id, "db_id"))?;
                if !ctx.selected(&db_id) {
                    continue;
                }
                let (schema, db_path) = ctx.lookup(&db_id)?;
                (
                    TaskInput::TextToSql {
                        question: get(v, *line, pick(&f.question, "question"))?,
                        db_id,
                        schema,
                        db_path,
                    },
                    get(v, *line, pick(&f.query, "query"))?,
                )
            }
        };
        let sample = Sample { id, input, gold };
        sample.validate()?;
        samples.push(sample);
    }
    let mut seen = BTreeSet::new();
    for s in &samples {
        if !seen.insert(s.id.as_str()) {
            return Err(DatasetLoadError::Manifest(format!("duplicate sample id `{}`", s.id)));
        }
    }
    if manifest.task == TaskKind::Translation {
        if let Some(pairs) = &manifest.language_pairs {
            samples.retain(|s| {
                let key = language_pair(s);
                pairs.iter().any(|p| *p == key || Some(p.as_str()) == key.split('-').next_back())
            });
        }
    }
    if let Some(size) = manifest.subset_size {
        samples = if manifest.task == TaskKind::Translation {
            stratified_subset(samples, size, manifest.subset_seed, language_pair)
        } else {
            uniform_subset(samples, size, manifest.subset_seed)
        };
    }
    if samples.is_empty() {
        return Err(DatasetLoadError::Empty);
    }
    Ok(samples)
}

/// `source-target`, with `?` for an unknown source language.
pub fn language_pair(s: &Sample) -> String {
    match &s.input {
        TaskInput::Translation {
            target_language,
            source_language,
            ..
        } => format!("{}-{}", source_language.as_deref().unwrap_or("?"), target_language),
        _ => String::new(),
    }
}

/// Seeded sample without replacement; survivors keep file order.
pub fn uniform_subset(samples: Vec<Sample>, size: usize, seed: u64) -> Vec<Sample> {
    if size >= samples.len() {
        return samples;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = rand::seq::index::sample(&mut rng, samples.len(), size).into_vec();
    keep.sort_unstable();
    let keep: BTreeSet<usize> = keep.into_iter().collect();
    samples
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| keep.contains(&i).then_some(s))
        .collect()
}

/// Takes one sample per stratum in turn until `size` are chosen, so stratum
/// counts differ by at most one unless a stratum runs out. Survivors keep file order.
pub fn stratified_subset(
    samples: Vec<Sample>,
    size: usize,
    seed: u64,
    stratum: impl Fn(&Sample) -> String,
) -> Vec<Sample> {
    if size >= samples.len() {
        return samples;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(stratum(s)).or_default().push(i);
    }
    let mut queues: Vec<Vec<usize>> = groups.into_values().collect();
    for q in &mut queues {
        q.shuffle(&mut rng);
    }
    // which strata receive the remainder is itself seeded
    queues.shuffle(&mut rng);
    let mut keep = BTreeSet::new();
    let mut cursor = vec![0usize; queues.len()];
    while keep.len() < size {
        let mut progressed = false;
        for (g, q) in queues.iter().enumerate() {
            if keep.len() == size {
                break;
            }
            if let Some(&i) = q.get(cursor[g]) {
                keep.insert(i);
                cursor[g] += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    samples
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| keep.contains(&i).then_some(s))
        .collect()
}

/// Spider `tables.json` entry.
#[derive(Debug, Clone, Deserialize)]
struct SpiderSchema {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
    column_types: Vec<String>,
    #[serde(default)]
    primary_keys: Vec<Value>,
    #[serde(default)]
    foreign_keys: Vec<(usize, usize)>,
}

impl SpiderSchema {
    fn to_tables(&self) -> Result<Vec<TableSchema>, String> {
        let mut tables: Vec<TableSchema> = self
            .table_names_original
            .iter()
            .map(|name| TableSchema {
                name: name.clone(),
                columns: Vec::new(),
                primary_key: Vec::new(),
                foreign_keys: Vec::new(),
            })
            .collect();
        let column = |c: usize| -> Result<(usize, &str), String> {
            let (t, name) = self
                .column_names_original
                .get(c)
                .ok_or_else(|| format!("column index {c} out of range"))?;
            let t = usize::try_from(*t).map_err(|_| format!("column {c} has no table"))?;
            if t >= tables_len(self) {
                return Err(format!("column {c} refers to missing table {t}"));
            }
            Ok((t, name.as_str()))
        };
        for (c, (t, name)) in self.column_names_original.iter().enumerate() {
            if *t < 0 {
                continue;
            }
            let (t, _) = column(c)?;
            let ty = self.column_types.get(c).cloned().unwrap_or_else(|| "text".into());
            tables[t].columns.push(ColumnSchema {
                name: name.clone(),
                sql_type: ty,
            });
        }
        for pk in &self.primary_keys {
            let cols: Vec<usize> = match pk {
                Value::Number(n) => vec![n.as_u64().ok_or("bad primary key")? as usize],
                Value::Array(a) => a
                    .iter()
                    .map(|v| v.as_u64().map(|u| u as usize).ok_or("bad primary key"))
                    .collect::<Result<_, _>>()?,
                _ => return Err("bad primary key".into()),
            };
            for c in cols {
                let (t, name) = column(c)?;
                tables[t].primary_key.push(name.to_string());
            }
        }
        for &(from, to) in &self.foreign_keys {
            let (t, col) = column(from)?;
            let (rt, rcol) = column(to)?;
            let ref_table = self.table_names_original[rt].clone();
            tables[t].foreign_keys.push(ForeignKey {
                column: col.to_string(),
                ref_table,
                ref_column: rcol.to_string(),
            });
        }
        Ok(tables)
    }
}

fn tables_len(s: &SpiderSchema) -> usize {
    s.table_names_original.len()
}

struct SqlContext {
    schemas: BTreeMap<String, Vec<TableSchema>>,
    database_dir: PathBuf,
    filter: Option<BTreeSet<String>>,
}

impl SqlContext {
    fn load(manifest: &DatasetManifest, base: &Path) -> Result<Self, DatasetLoadError> {
        let layout = manifest
            .sql
            .as_ref()
            .ok_or_else(|| DatasetLoadError::Manifest("text_to_sql requires a `sql` section".into()))?;
        let tables_path = base.join(&layout.tables);
        let text = read(&tables_path)?;
        let raw: Vec<SpiderSchema> = serde_json::from_str(&text).map_err(|e| DatasetLoadError::Parse {
            path: tables_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let mut schemas = BTreeMap::new();
        for s in raw {
            let tables = s.to_tables().map_err(|message| DatasetLoadError::Parse {
                path: tables_path.clone(),
                line: 0,
                message: format!("{}: {message}", s.db_id),
            })?;
            schemas.insert(s.db_id.clone(), tables);
        }
        let ctx = Self {
            schemas,
            database_dir: base.join(&layout.database_dir),
            filter: layout.databases.as_ref().map(|d| d.iter().cloned().collect()),
        };
        if let Some(filter) = &ctx.filter {
            for db in filter {
                ctx.lookup(db)?;
            }
        }
        Ok(ctx)
    }

    fn selected(&self, db_id: &str) -> bool {
        self.filter.as_ref().is_none_or(|f| f.contains(db_id))
    }

    fn lookup(&self, db_id: &str) -> Result<(Vec<TableSchema>, PathBuf), DatasetLoadError> {
        let schema = self
            .schemas
            .get(db_id)
            .ok_or_else(|| DatasetLoadError::MissingSchema(db_id.to_string()))?;
        let path = self.database_dir.join(db_id).join(format!("{db_id}.sqlite"));
        if !path.is_file() {
            return Err(DatasetLoadError::MissingDatabase {
                db_id: db_id.to_string(),
                path,
            });
        }
        Ok((schema.clone(), path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn manifest(task: TaskKind, path: &str) -> DatasetManifest {
        DatasetManifest {
            task,
            path: path.into(),
            fields: FieldMap::default(),
            sample_count: None,
            subset_size: None,
            subset_seed: 0,
            language_pairs: None,
            sql: None,
        }
    }

    #[test]
    fn math_rows_load() {
        let dir = tempfile::tempdir().unwrap();
        let body: String = (0..5)
            .map(|i| format!("{{\"problem\":\"{i}+1\",\"answer\":\"{}\"}}\n", i + 1))
            .collect();
        write(dir.path(), "math.jsonl", &body);
        let s = load_dataset(&manifest(TaskKind::MathReasoning, "math.jsonl"), dir.path()).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|x| x.task() == TaskKind::MathReasoning));
        assert_eq!(s[2].id, "math:3");
    }

    #[test]
    fn parse_error_has_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.jsonl", "{\"problem\":\"1\",\"answer\":\"1\"}\n{oops\n");
        let err = load_dataset(&manifest(TaskKind::MathReasoning, "m.jsonl"), dir.path()).unwrap_err();
        assert!(matches!(err, DatasetLoadError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn custom_field_names() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "imdb.jsonl", "{\"review\":\"great\",\"sentiment\":\"Positive\",\"uid\":7}\n");
        let mut m = manifest(TaskKind::Sentiment, "imdb.jsonl");
        m.fields.text = Some("review".into());
        m.fields.label = Some("sentiment".into());
        m.fields.id = Some("uid".into());
        let s = load_dataset(&m, dir.path()).unwrap();
        assert_eq!((s[0].id.as_str(), s[0].gold.as_str()), ("7", "positive"));
    }

    #[test]
    fn uniform_subset_is_seeded() {
        let samples: Vec<Sample> = (0..50)
            .map(|i| Sample {
                id: i.to_string(),
                input: TaskInput::Sentiment { review: "r".into() },
                gold: "positive".into(),
            })
            .collect();
        let a = uniform_subset(samples.clone(), 10, 3);
        assert_eq!(a.len(), 10);
        assert_eq!(a, uniform_subset(samples.clone(), 10, 3));
        assert_ne!(a, uniform_subset(samples, 10, 4));
    }
}
