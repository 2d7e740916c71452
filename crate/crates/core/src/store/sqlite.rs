use std::path::Path;
use std::time::Duration;

use rusqlite::{params, Connection, ErrorCode, OptionalExtension, TransactionBehavior};

use super::{
    join_comments, precheck, split_comments, InsertOutcome, ModuleStore, QueryFilter, StoreConfig,
    StoreError, StoredModule, DUPLICATE_CODE,
};
use crate::model::{BitWidth, Direction, ModuleRecord, PortSpec};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS verilog_modules (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    module_name TEXT NOT NULL,
    verilog_code TEXT NOT NULL UNIQUE,
    description TEXT NOT NULL,
    comments TEXT,
    token_count INTEGER,
    extracted_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
);
CREATE TABLE IF NOT EXISTS module_ports (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    module_id INTEGER REFERENCES verilog_modules(id) ON DELETE CASCADE,
    port_name TEXT NOT NULL,
    port_type TEXT CHECK (port_type IN ('input', 'output', 'inout')) NOT NULL,
    port_width INTEGER,
    CONSTRAINT unique_port UNIQUE (module_id, port_name)
);
";

/// Embedded file-backed store.
pub struct SqliteStore {
    conn: Connection,
    config: StoreConfig,
}

impl SqliteStore {
    pub fn open(path: &Path, config: StoreConfig) -> Result<Self, StoreError> {
        let conn = Connection::open(path).map_err(StoreError::unavailable)?;
        conn.pragma_update(None, "journal_mode", "WAL")
            .map_err(StoreError::unavailable)?;
        Self::configure(conn, config)
    }

    pub fn in_memory(config: StoreConfig) -> Result<Self, StoreError> {
        Self::configure(
            Connection::open_in_memory().map_err(StoreError::unavailable)?,
            config,
        )
    }

    fn configure(conn: Connection, config: StoreConfig) -> Result<Self, StoreError> {
        conn.busy_timeout(Duration::from_secs(30))
            .map_err(StoreError::unavailable)?;
        conn.pragma_update(None, "foreign_keys", "ON")
            .map_err(StoreError::unavailable)?;
        Ok(SqliteStore { conn, config })
    }

    /// Writes the module and port rows in one immediate transaction.
    /// Constraint failures roll back and come back as `Err(reason)`.
    fn write_record(&mut self, record: &ModuleRecord) -> Result<Result<i64, String>, StoreError> {
        let tx = self
            .conn
            .transaction_with_behavior(TransactionBehavior::Immediate)
            .map_err(StoreError::unavailable)?;
        let written = (|| {
            tx.execute(
                "INSERT INTO verilog_modules (module_name, verilog_code, description, comments, token_count)
                 VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    record.module_name,
                    record.verilog_code,
                    record.description,
                    join_comments(&record.comments),
                    record.token_count as i64
                ],
            )?;
            let id = tx.last_insert_rowid();
            for port in &record.ports {
                tx.execute(
                    "INSERT INTO module_ports (module_id, port_name, port_type, port_width) VALUES (?1, ?2, ?3, ?4)",
                    params![id, port.name, port.direction.as_str(), port.bit_width.resolved()],
                )?;
            }
            Ok::<i64, rusqlite::Error>(id)
        })();
        match written {
            Ok(id) => {
                tx.commit().map_err(StoreError::unavailable)?;
                Ok(Ok(id))
            }
            Err(rusqlite::Error::SqliteFailure(e, msg))
                if e.code == ErrorCode::ConstraintViolation =>
            {
                drop(tx);
                let msg = msg.unwrap_or_default();
                Ok(Err(if msg.contains("verilog_code") {
                    DUPLICATE_CODE.to_string()
                } else {
                    format!("constraint violation: {msg}")
                }))
            }
            Err(e) => Err(StoreError::unavailable(e)),
        }
    }

    fn ports_of(&self, id: i64) -> Result<Vec<PortSpec>, StoreError> {
        let mut stmt = self
            .conn
            .prepare_cached("SELECT port_name, port_type, port_width FROM module_ports WHERE module_id = ?1 ORDER BY id")
            .map_err(StoreError::unavailable)?;
        let rows = stmt
            .query_map([id], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, Option<i64>>(2)?,
                ))
            })
            .map_err(StoreError::unavailable)?;
        rows.map(|row| {
            let (name, kind, width) = row.map_err(StoreError::unavailable)?;
            let direction = Direction::parse(&kind)
                .ok_or_else(|| StoreError::Unavailable(format!("bad port_type {kind}")))?;
            let bit_width = match width {
                Some(w) => BitWidth::Resolved(w as u32),
                None => BitWidth::Unresolved("?".into()),
            };
            Ok(PortSpec {
                name,
                direction,
                bit_width,
            })
        })
        .collect()
    }
}

impl ModuleStore for SqliteStore {
    fn init_schema(&mut self) -> Result<(), StoreError> {
        self.conn
            .execute_batch(SCHEMA)
            .map_err(StoreError::unavailable)
    }

    fn reset(&mut self) -> Result<(), StoreError> {
        self.conn
            .execute_batch("DELETE FROM module_ports; DELETE FROM verilog_modules; DELETE FROM sqlite_sequence;")
            .map_err(StoreError::unavailable)
    }

    fn insert_record(&mut self, record: &ModuleRecord) -> Result<InsertOutcome, StoreError> {
        if let Err(reason) = precheck(record, &self.config) {
            return Ok(InsertOutcome::Rejected(reason));
        }
        Ok(match self.write_record(record)? {
            Ok(id) => InsertOutcome::Inserted(id),
            Err(reason) => InsertOutcome::Rejected(reason),
        })
    }

    fn query_modules(&mut self, filter: &QueryFilter) -> Result<Vec<StoredModule>, StoreError> {
        let (tmin, tmax) = filter
            .tokens
            .map_or((i64::MIN, i64::MAX), |(a, b)| (a as i64, b as i64));
        let (pmin, pmax) = filter
            .ports
            .map_or((i64::MIN, i64::MAX), |(a, b)| (a as i64, b as i64));
        let comments = filter.has_comments.map(|c| c as i64);
        let mut stmt = self
            .conn
            .prepare(
                "SELECT m.id, m.module_name, m.verilog_code, m.description, m.comments, m.token_count
                 FROM verilog_modules m
                 WHERE (?1 IS NULL OR instr(m.module_name, ?1) > 0)
                   AND COALESCE(m.token_count, 0) BETWEEN ?2 AND ?3
                   AND (SELECT COUNT(*) FROM module_ports p WHERE p.module_id = m.id) BETWEEN ?4 AND ?5
                   AND (?6 IS NULL OR (COALESCE(m.comments, '') <> '') = ?6)
                 ORDER BY m.id",
            )
            .map_err(StoreError::unavailable)?;
        let rows: Vec<_> = stmt
            .query_map(
                params![filter.name_pattern, tmin, tmax, pmin, pmax, comments],
                |r| {
                    Ok((
                        r.get::<_, i64>(0)?,
                        r.get::<_, String>(1)?,
                        r.get::<_, String>(2)?,
                        r.get::<_, String>(3)?,
                        r.get::<_, Option<String>>(4)?,
                        r.get::<_, Option<i64>>(5)?,
                    ))
                },
            )
            .map_err(StoreError::unavailable)?
            .collect::<Result<_, _>>()
            .map_err(StoreError::unavailable)?;
        drop(stmt);
        rows.into_iter()
            .map(
                |(id, module_name, verilog_code, description, comments, tokens)| {
                    Ok(StoredModule {
                        id,
                        record: ModuleRecord {
                            module_name,
                            ports: self.ports_of(id)?,
                            comments: split_comments(comments),
                            verilog_code,
                            token_count: tokens.unwrap_or(0).max(0) as u64,
                            description,
                        },
                    })
                },
            )
            .collect()
    }

    fn delete_module(&mut self, id: i64) -> Result<bool, StoreError> {
        let n = self
            .conn
            .execute("DELETE FROM verilog_modules WHERE id = ?1", [id])
            .map_err(StoreError::unavailable)?;
        Ok(n > 0)
    }

    fn row_counts(&mut self) -> Result<(u64, u64), StoreError> {
        let count = |table: &str| {
            self.conn
                .query_row(&format!("SELECT COUNT(*) FROM {table}"), [], |r| {
                    r.get::<_, i64>(0)
                })
                .optional()
                .map(|n| n.unwrap_or(0) as u64)
                .map_err(StoreError::unavailable)
        };
        Ok((count("verilog_modules")?, count("module_ports")?))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::{Arc, Barrier};
    use std::thread;

    use super::*;
    use crate::store::tests::dec;
    use crate::store::{export_jsonl, import_jsonl};

    fn fresh() -> SqliteStore {
        let mut s = SqliteStore::in_memory(StoreConfig::default()).unwrap();
        s.init_schema().unwrap();
        s
    }

    #[test]
    fn init_is_idempotent_and_constraints_exist() {
        let mut s = fresh();
        s.init_schema().unwrap();
        let sql: String = s
            .conn
            .query_row(
                "SELECT sql FROM sqlite_master WHERE name = 'module_ports'",
                [],
                |r| r.get(0),
            )
            .unwrap();
        assert!(sql.contains("unique_port UNIQUE (module_id, port_name)"));
        assert!(sql.contains("ON DELETE CASCADE"));
    }

    #[test]
    fn unreachable_store_is_unavailable() {
        let err = SqliteStore::open(
            Path::new("/nonexistent-dir/sub/forge.db"),
            StoreConfig::default(),
        );
        assert!(matches!(err, Err(StoreError::Unavailable(_))));
    }

    #[test]
    fn dec_inserts_with_three_ports_and_round_trips() {
        let mut s = fresh();
        let id = s.insert_record(&dec()).unwrap().id().unwrap();
        assert_eq!(s.row_counts().unwrap(), (1, 3));
        let mut with_comments = dec();
        with_comments.verilog_code.push_str("\n// two");
        with_comments.comments = vec!["one".into(), "two".into()];
        s.insert_record(&with_comments).unwrap();
        let rows = s.query_modules(&QueryFilter::default()).unwrap();
        assert_eq!(rows[0].id, id);
        assert_eq!(rows[0].record, dec());
        assert_eq!(rows[1].record, with_comments);
    }

    #[test]
    fn duplicate_code_rejected_without_partial_rows() {
        let mut s = fresh();
        s.insert_record(&dec()).unwrap();
        let before = s.row_counts().unwrap();
        let renamed = ModuleRecord {
            module_name: "other".into(),
            ..dec()
        };
        assert_eq!(
            s.insert_record(&renamed).unwrap(),
            InsertOutcome::Rejected(DUPLICATE_CODE.into())
        );
        assert_eq!(s.row_counts().unwrap(), before);
    }

    #[test]
    fn port_constraint_failure_rolls_back_module_row() {
        let mut s = fresh();
        let mut dup = dec();
        dup.ports[2].name = "I".into();
        // Bypass the precheck so the unique_port constraint fires mid-transaction.
        let res = s.write_record(&dup).unwrap();
        assert!(res.unwrap_err().contains("constraint"));
        assert_eq!(s.row_counts().unwrap(), (0, 0));
    }

    #[test]
    fn delete_cascades_to_ports() {
        let mut s = fresh();
        let a = s.insert_record(&dec()).unwrap().id().unwrap();
        let mut other = dec();
        other.verilog_code.push(' ');
        s.insert_record(&other).unwrap();
        assert_eq!(s.row_counts().unwrap(), (2, 6));
        assert!(s.delete_module(a).unwrap());
        assert_eq!(s.row_counts().unwrap(), (1, 3));
        assert!(!s.delete_module(a).unwrap());
    }

    #[test]
    fn query_filters() {
        let mut s = fresh();
        s.insert_record(&dec()).unwrap();
        let mut big = dec();
        big.module_name = "alu".into();
        big.verilog_code = "module alu; endmodule".into();
        big.token_count = 900;
        big.comments = vec!["adds".into()];
        s.insert_record(&big).unwrap();
        let names = |f: QueryFilter, s: &mut SqliteStore| -> Vec<String> {
            s.query_modules(&f)
                .unwrap()
                .into_iter()
                .map(|m| m.record.module_name)
                .collect()
        };
        assert_eq!(
            names(
                QueryFilter {
                    tokens: Some((0, 200)),
                    ..Default::default()
                },
                &mut s
            ),
            ["dec"]
        );
        assert_eq!(
            names(
                QueryFilter {
                    name_pattern: Some("dec".into()),
                    ..Default::default()
                },
                &mut s
            ),
            ["dec"]
        );
        assert_eq!(
            names(
                QueryFilter {
                    has_comments: Some(true),
                    ..Default::default()
                },
                &mut s
            ),
            ["alu"]
        );
        assert!(names(
            QueryFilter {
                ports: Some((4, 9)),
                ..Default::default()
            },
            &mut s
        )
        .is_empty());
        assert!(names(
            QueryFilter {
                tokens: Some((5000, 6000)),
                ..Default::default()
            },
            &mut s
        )
        .is_empty());
    }

    #[test]
    fn jsonl_round_trip_and_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut s = fresh();
        s.insert_record(&dec()).unwrap();
        let mut other = dec();
        other.verilog_code.push('\n');
        s.insert_record(&other).unwrap();
        assert_eq!(export_jsonl(&mut s, &path).unwrap(), 2);

        let mut t = fresh();
        let counts = import_jsonl(&mut t, &path).unwrap();
        assert_eq!((counts.lines, counts.inserted), (2, 2));
        assert_eq!(t.row_counts().unwrap(), s.row_counts().unwrap());

        let mut text = std::fs::read_to_string(&path).unwrap();
        let bad = crate::model::serialize_record_line(&dec())
            .replace("\"Decodes a two-bit input.\"", "null");
        text.push_str(&bad);
        text.push_str("\n\n");
        std::fs::write(&path, text).unwrap();
        let mut u = fresh();
        let counts = import_jsonl(&mut u, &path).unwrap();
        assert_eq!(counts.lines, 3);
        assert_eq!(counts.inserted, 2);
        assert_eq!(counts.rejected.len(), 1);
        assert_eq!(counts.rejected[0].0, 3);
    }

    #[test]
    fn concurrent_identical_inserts_admit_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.db");
        SqliteStore::open(&path, StoreConfig::default())
            .unwrap()
            .init_schema()
            .unwrap();
        let barrier = Arc::new(Barrier::new(8));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let path = path.clone();
                let barrier = Arc::clone(&barrier);
                thread::spawn(move || {
                    let mut s = SqliteStore::open(&path, StoreConfig::default()).unwrap();
                    barrier.wait();
                    s.insert_record(&dec()).unwrap()
                })
            })
            .collect();
        let outcomes: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(outcomes.iter().filter(|o| o.id().is_some()).count(), 1);
        let mut s = SqliteStore::open(&path, StoreConfig::default()).unwrap();
        assert_eq!(s.row_counts().unwrap(), (1, 3));
    }
}
