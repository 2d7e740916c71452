use postgres::error::SqlState;
use postgres::{Client, NoTls};

use super::{
    join_comments, precheck, split_comments, InsertOutcome, ModuleStore, QueryFilter, StoreConfig,
    StoreError, StoredModule, DUPLICATE_CODE,
};
use crate::model::{BitWidth, Direction, ModuleRecord, PortSpec};

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS verilog_modules (
    id SERIAL PRIMARY KEY,
    module_name TEXT NOT NULL,
    verilog_code TEXT NOT NULL UNIQUE,
    description TEXT NOT NULL,
    comments TEXT,
    token_count INTEGER,
    extracted_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
);
CREATE TABLE IF NOT EXISTS module_ports (
    id SERIAL PRIMARY KEY,
    module_id INTEGER REFERENCES verilog_modules(id) ON DELETE CASCADE,
    port_name TEXT NOT NULL,
    port_type TEXT CHECK (port_type IN ('input', 'output', 'inout')) NOT NULL,
    port_width INTEGER,
    CONSTRAINT unique_port UNIQUE (module_id, port_name)
);
";

/// Client-server store over the same schema.
pub struct PostgresStore {
    client: Client,
    config: StoreConfig,
}

impl PostgresStore {
    pub fn connect(url: &str, config: StoreConfig) -> Result<Self, StoreError> {
        let client = Client::connect(url, NoTls).map_err(StoreError::unavailable)?;
        Ok(PostgresStore { client, config })
    }

    fn ports_of(&mut self, id: i32) -> Result<Vec<PortSpec>, StoreError> {
        let rows = self
            .client
            .query(
                "SELECT port_name, port_type, port_width FROM module_ports WHERE module_id = $1 ORDER BY id",
                &[&id],
            )
            .map_err(StoreError::unavailable)?;
        rows.iter()
            .map(|r| {
                let kind: String = r.get(1);
                let width: Option<i32> = r.get(2);
                Ok(PortSpec {
                    name: r.get(0),
                    direction: Direction::parse(&kind)
                        .ok_or_else(|| StoreError::Unavailable(format!("bad port_type {kind}")))?,
                    bit_width: width.map_or_else(
                        || BitWidth::Unresolved("?".into()),
                        |w| BitWidth::Resolved(w as u32),
                    ),
                })
            })
            .collect()
    }
}

impl ModuleStore for PostgresStore {
    fn init_schema(&mut self) -> Result<(), StoreError> {
        self.client
            .batch_execute(SCHEMA)
            .map_err(StoreError::unavailable)
    }

    fn reset(&mut self) -> Result<(), StoreError> {
        self.client
            .batch_execute("TRUNCATE module_ports, verilog_modules RESTART IDENTITY")
            .map_err(StoreError::unavailable)
    }

    fn insert_record(&mut self, record: &ModuleRecord) -> Result<InsertOutcome, StoreError> {
        if let Err(reason) = precheck(record, &self.config) {
            return Ok(InsertOutcome::Rejected(reason));
        }
        let mut tx = self.client.transaction().map_err(StoreError::unavailable)?;
        let written = (|| {
            let row = tx.query_one(
                "INSERT INTO verilog_modules (module_name, verilog_code, description, comments, token_count)
                 VALUES ($1, $2, $3, $4, $5) RETURNING id",
                &[
                    &record.module_name,
                    &record.verilog_code,
                    &record.description,
                    &join_comments(&record.comments),
                    &(record.token_count as i32),
                ],
            )?;
            let id: i32 = row.get(0);
            for port in &record.ports {
                let width = port.bit_width.resolved().map(|w| w as i32);
                tx.execute(
                    "INSERT INTO module_ports (module_id, port_name, port_type, port_width) VALUES ($1, $2, $3, $4)",
                    &[&id, &port.name, &port.direction.as_str(), &width],
                )?;
            }
            Ok::<i32, postgres::Error>(id)
        })();
        match written {
            Ok(id) => {
                tx.commit().map_err(StoreError::unavailable)?;
                Ok(InsertOutcome::Inserted(id as i64))
            }
            Err(e) if e.code() == Some(&SqlState::UNIQUE_VIOLATION) => {
                let on_code = e
                    .as_db_error()
                    .and_then(|d| d.constraint())
                    .is_some_and(|c| c.contains("verilog_code"));
                Ok(InsertOutcome::Rejected(if on_code {
                    DUPLICATE_CODE.to_string()
                } else {
                    format!("constraint violation: {e}")
                }))
            }
            Err(e) if e.as_db_error().is_some() => Ok(InsertOutcome::Rejected(format!(
                "constraint violation: {e}"
            ))),
            Err(e) => Err(StoreError::unavailable(e)),
        }
    }

    fn query_modules(&mut self, filter: &QueryFilter) -> Result<Vec<StoredModule>, StoreError> {
        let (tmin, tmax) = filter
            .tokens
            .map_or((i64::MIN, i64::MAX), |(a, b)| (a as i64, b as i64));
        let (pmin, pmax) = filter
            .ports
            .map_or((i64::MIN, i64::MAX), |(a, b)| (a as i64, b as i64));
        let rows = self
            .client
            .query(
                "SELECT m.id, m.module_name, m.verilog_code, m.description, m.comments, m.token_count
                 FROM verilog_modules m
                 WHERE ($1::TEXT IS NULL OR strpos(m.module_name, $1) > 0)
                   AND COALESCE(m.token_count, 0)::BIGINT BETWEEN $2 AND $3
                   AND (SELECT COUNT(*) FROM module_ports p WHERE p.module_id = m.id) BETWEEN $4 AND $5
                   AND ($6::BOOL IS NULL OR (COALESCE(m.comments, '') <> '') = $6)
                 ORDER BY m.id",
                &[&filter.name_pattern, &tmin, &tmax, &pmin, &pmax, &filter.has_comments],
            )
            .map_err(StoreError::unavailable)?;
        let mut out = Vec::with_capacity(rows.len());
        for r in rows {
            let id: i32 = r.get(0);
            let tokens: Option<i32> = r.get(5);
            out.push(StoredModule {
                id: id as i64,
                record: ModuleRecord {
                    module_name: r.get(1),
                    ports: self.ports_of(id)?,
                    comments: split_comments(r.get(4)),
                    verilog_code: r.get(2),
                    token_count: tokens.unwrap_or(0).max(0) as u64,
                    description: r.get(3),
                },
            });
        }
        Ok(out)
    }

    fn delete_module(&mut self, id: i64) -> Result<bool, StoreError> {
        let n = self
            .client
            .execute("DELETE FROM verilog_modules WHERE id = $1", &[&(id as i32)])
            .map_err(StoreError::unavailable)?;
        Ok(n > 0)
    }

    fn row_counts(&mut self) -> Result<(u64, u64), StoreError> {
        let row = self
            .client
            .query_one(
                "SELECT (SELECT COUNT(*) FROM verilog_modules), (SELECT COUNT(*) FROM module_ports)",
                &[],
            )
            .map_err(StoreError::unavailable)?;
        Ok((row.get::<_, i64>(0) as u64, row.get::<_, i64>(1) as u64))
    }
}
