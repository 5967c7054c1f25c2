//! Execution-based SQL scoring against SQLite databases.

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", content = "v", rename_all = "snake_case")]
pub enum Cell {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
}

/// Hashable comparison key for a cell. Integral reals compare equal to integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKey {
    Null,
    Int(i64),
    Real(u64),
    Text(String),
}

impl Cell {
    pub fn key(&self) -> CellKey {
        match self {
            Cell::Null => CellKey::Null,
            Cell::Int(i) => CellKey::Int(*i),
            Cell::Real(r) => {
                if r.fract() == 0.0 && r.abs() < 9.0e15 {
                    CellKey::Int(*r as i64)
                } else {
                    // +0.0 and -0.0 are already integral, so bits are canonical here
                    CellKey::Real(r.to_bits())
                }
            }
            Cell::Text(s) => CellKey::Text(s.clone()),
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Null => "NULL".to_string(),
            Cell::Int(i) => i.to_string(),
            Cell::Real(r) => r.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Rounds to six significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Set when the query text contains ORDER BY.
    pub ordered: bool,
}

impl ResultTable {
    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Tab-separated rendering with a header line, capped at `max_rows` rows.
    pub fn to_tsv(&self, max_rows: usize) -> String {
        let mut out = self.columns.join("\t");
        for row in self.rows.iter().take(max_rows) {
            out.push('\n');
            out.push_str(&row.iter().map(Cell::render).collect::<Vec<_>>().join("\t"));
        }
        if self.rows.len() > max_rows {
            out.push_str(&format!(
                "\n... ({} more rows not shown, {} total)",
                self.rows.len() - max_rows,
                self.rows.len()
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("cannot open database: {0}")]
    Open(String),
    #[error("{0}")]
    Engine(String),
    #[error("query exceeded {0:?}")]
    Timeout(Duration),
}

pub fn has_order_by(query: &str) -> bool {
    let upper = query.to_ascii_uppercase();
    let words: Vec<&str> = upper.split_whitespace().collect();
    words.windows(2).any(|w| w[0] == "ORDER" && w[1].starts_with("BY"))
}

pub fn open_read_only(path: &Path) -> Result<Connection, ExecError> {
    let conn = Connection::open_with_flags(
        path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
    )
    .map_err(|e| ExecError::Open(e.to_string()))?;
    conn.pragma_update(None, "query_only", true)
        .map_err(|e| ExecError::Open(e.to_string()))?;
    Ok(conn)
}

/// Runs one statement on a read-only connection.
pub fn execute_sql(conn: &Connection, query: &str) -> Result<ResultTable, ExecError> {
    execute_sql_with_timeout(conn, query, DEFAULT_TIMEOUT)
}

pub fn execute_sql_with_timeout(
    conn: &Connection,
    query: &str,
    timeout: Duration,
) -> Result<ResultTable, ExecError> {
    let trimmed = query.trim().trim_end_matches(|c: char| c == ';' || c.is_whitespace());
    let deadline = Instant::now() + timeout;
    conn.progress_handler(1000, Some(move || Instant::now() > deadline));
    let result = run_query(conn, trimmed);
    conn.progress_handler(1000, None::<fn() -> bool>);
    result.map_err(|e| {
        if Instant::now() > deadline {
            ExecError::Timeout(timeout)
        } else {
            ExecError::Engine(e.to_string())
        }
    })
    .map(|(columns, rows)| ResultTable {
        columns,
        rows,
        ordered: has_order_by(trimmed),
    })
}

type Raw = (Vec<String>, Vec<Vec<Cell>>);

fn run_query(conn: &Connection, query: &str) -> rusqlite::Result<Raw> {
    let mut stmt = conn.prepare(query)?;
    let columns: Vec<String> = stmt.column_names().iter().map(|c| c.to_string()).collect();
    let n = columns.len();
    let mut rows = Vec::new();
    let mut cursor = stmt.query([])?;
    while let Some(row) = cursor.next()? {
        let mut cells = Vec::with_capacity(n);
        for i in 0..n {
            cells.push(match row.get_ref(i)? {
                ValueRef::Null => Cell::Null,
                ValueRef::Integer(v) => Cell::Int(v),
                ValueRef::Real(v) => Cell::Real(round_sig6(v)),
                ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
                ValueRef::Blob(b) => Cell::Text(hex::encode(b)),
            });
        }
        rows.push(cells);
    }
    Ok((columns, rows))
}

fn row_keys(row: &[Cell]) -> Vec<CellKey> {
    row.iter().map(Cell::key).collect()
}

/// Exact match: positional columns, rows compared as a multiset unless the gold is ordered.
pub fn tables_match(pred: &ResultTable, gold: &ResultTable) -> bool {
    if pred.rows.len() != gold.rows.len() {
        return false;
    }
    let p: Vec<Vec<CellKey>> = pred.rows.iter().map(|r| row_keys(r)).collect();
    let g: Vec<Vec<CellKey>> = gold.rows.iter().map(|r| row_keys(r)).collect();
    if gold.ordered {
        return p == g;
    }
    let (mut p, mut g) = (p, g);
    p.sort();
    g.sort();
    p == g
}

/// Cell-multiset overlap divided by the larger table's cell count. For an
/// ordered gold, each cell is keyed by its row index as well.
pub fn partial_credit(pred: &ResultTable, gold: &ResultTable) -> f64 {
    let total = pred.cell_count().max(gold.cell_count());
    if total == 0 {
        return if pred.rows.len() == gold.rows.len() { 1.0 } else { 0.0 };
    }
    let bag = |t: &ResultTable| {
        let mut m: HashMap<(Option<usize>, CellKey), usize> = HashMap::new();
        for (i, row) in t.rows.iter().enumerate() {
            let idx = gold.ordered.then_some(i);
            for c in row {
                *m.entry((idx, c.key())).or_default() += 1;
            }
        }
        m
    };
    let (bp, bg) = (bag(pred), bag(gold));
    let common: usize = bp
        .iter()
        .map(|(k, n)| (*n).min(bg.get(k).copied().unwrap_or(0)))
        .sum();
    common as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem() -> Connection {
        let c = Connection::open_in_memory().unwrap();
        c.execute_batch(
            "CREATE TABLE t (a INTEGER, b TEXT, c REAL);
             INSERT INTO t VALUES (1,'x',1.5),(2,'y',NULL),(3,'',2.0);",
        )
        .unwrap();
        c
    }

    #[test]
    fn simple_select() {
        let t = execute_sql(&mem(), "SELECT 2+2").unwrap();
        assert_eq!(t.rows, vec![vec![Cell::Int(4)]]);
        assert!(!t.ordered);
    }

    #[test]
    fn syntax_error() {
        assert!(matches!(execute_sql(&mem(), "SELEC 1"), Err(ExecError::Engine(_))));
    }

    #[test]
    fn order_flag_and_trailing_semicolon() {
        let t = execute_sql(&mem(), "SELECT a FROM t ORDER BY a DESC;").unwrap();
        assert!(t.ordered);
        assert_eq!(t.rows[0], vec![Cell::Int(3)]);
    }

    #[test]
    fn null_distinct_from_empty_and_reals_rounded() {
        let t = execute_sql(&mem(), "SELECT b, c FROM t").unwrap();
        assert_eq!(t.rows[1][1], Cell::Null);
        assert_eq!(t.rows[2][0], Cell::Text(String::new()));
        let t = execute_sql(&mem(), "SELECT 1.0/3").unwrap();
        assert_eq!(t.rows[0][0], Cell::Real(0.333333));
    }

    #[test]
    fn integral_real_equals_int() {
        assert_eq!(Cell::Real(2.0).key(), Cell::Int(2).key());
    }

    #[test]
    fn writes_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.sqlite");
        Connection::open(&path)
            .unwrap()
            .execute_batch("CREATE TABLE t (a)")
            .unwrap();
        let conn = open_read_only(&path).unwrap();
        assert!(execute_sql(&conn, "INSERT INTO t VALUES (1)").is_err());
    }

    #[test]
    fn timeout_interrupts_long_queries() {
        let q = "WITH RECURSIVE r(i) AS (SELECT 1 UNION ALL SELECT i+1 FROM r) SELECT count(*) FROM r";
        let err = execute_sql_with_timeout(&mem(), q, Duration::from_millis(50)).unwrap_err();
        assert_eq!(err, ExecError::Timeout(Duration::from_millis(50)));
    }

    #[test]
    fn tsv_is_capped() {
        let t = ResultTable {
            columns: vec!["n".into()],
            rows: (0..25).map(|i| vec![Cell::Int(i)]).collect(),
            ordered: false,
        };
        let s = t.to_tsv(20);
        assert_eq!(s.lines().count(), 22);
        assert!(s.ends_with("(5 more rows not shown, 25 total)"));
    }
}
