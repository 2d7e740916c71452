//! Module metadata extraction: discovery, ports, comments, token estimate
//! and description, producing one [`ModuleRecord`] per module.

pub mod describe;
pub mod modules;
pub mod ports;
pub mod tokens;
pub mod width;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use describe::{generate_description, DescriptionClient, DescriptionDraft, Provenance};
pub use modules::{find_modules, ModuleSpan};
pub use ports::{parse_module_interface, parse_ports, ModuleInterface, PortStyle};
pub use tokens::{estimate_tokens, estimate_tokens_with, TokenRule};
pub use width::{resolve_width, ParamEnv};

use crate::model::{ModuleRecord, SourceFile, Stage, StageReport};
use crate::scan::extract_comments;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("NoModuleFound")]
    NoModuleFound,
    #[error("UnterminatedModule: {0}")]
    UnterminatedModule(String),
    #[error("UnparseablePortList: {0}")]
    UnparseablePortList(String),
    #[error("InvalidRecord: {0}")]
    InvalidRecord(String),
}

/// A record plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedModule {
    pub source_path: String,
    /// Position of the module within its file.
    pub index: usize,
    pub provenance: Provenance,
    pub record: ModuleRecord,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    pub token_rule: TokenRule,
}

/// Extracts every module of one file. Modules that fail are returned as
/// `(module name or file, error)` pairs alongside the successes.
pub fn extract_file(
    file: &SourceFile,
    client: &DescriptionClient,
    options: ExtractOptions,
) -> (Vec<ExtractedModule>, Vec<(String, ExtractError)>) {
    let text = file.text();
    let spans = match find_modules(&text) {
        Ok(spans) => spans,
        Err(e) => return (Vec::new(), vec![(file.path.clone(), e)]),
    };
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (index, span) in spans.into_iter().enumerate() {
        let code = &text[span.span.clone()];
        let label = format!("{}#{}", file.path, span.name);
        match extract_module(code, client, options) {
            Ok((record, provenance)) => ok.push(ExtractedModule {
                source_path: file.path.clone(),
                index,
                provenance,
                record,
            }),
            Err(e) => failed.push((label, e)),
        }
    }
    (ok, failed)
}

/// Builds the record for one `module ... endmodule` text.
pub fn extract_module(
    code: &str,
    client: &DescriptionClient,
    options: ExtractOptions,
) -> Result<(ModuleRecord, Provenance), ExtractError> {
    let interface = parse_module_interface(code, &ParamEnv::new())?;
    let draft = DescriptionDraft {
        module_name: &interface.name,
        ports: &interface.ports,
        verilog_code: code,
    };
    let (description, provenance) = generate_description(&draft, client);
    let record = ModuleRecord {
        module_name: interface.name,
        ports: interface.ports,
        comments: extract_comments(code),
        verilog_code: code.to_string(),
        token_count: estimate_tokens_with(code, options.token_rule),
        description,
    };
    record
        .validate()
        .map_err(|e| ExtractError::InvalidRecord(e.to_string()))?;
    Ok((record, provenance))
}

#[derive(Debug, Clone)]
pub struct ExtractOutput {
    /// Records in canonical order: source path, then position in file.
    pub modules: Vec<ExtractedModule>,
    /// Per-module failures as rejections, plus the file-level counts. The
    /// stage is [`Stage::DbValidation`]; output fields are filled in once the
    /// store has accepted records.
    pub report: StageReport,
}

/// Extracts all files. Failures are per module and never fatal.
pub fn extract_project(
    files: &[SourceFile],
    client: &DescriptionClient,
    options: ExtractOptions,
) -> ExtractOutput {
    let mut report = StageReport::new(Stage::DbValidation);
    report.input_count = files.len() as u64;
    report.input_bytes = files.iter().map(SourceFile::len).sum();

    let results: Vec<_> = files
        .par_iter()
        .map(|f| extract_file(f, client, options))
        .collect();
    let mut modules = Vec::new();
    for (ok, failed) in results {
        modules.extend(ok);
        for (label, err) in failed {
            report.reject(label, err.to_string());
        }
    }
    modules.sort_by(|a, b| {
        a.source_path
            .cmp(&b.source_path)
            .then(a.index.cmp(&b.index))
    });
    report.canonicalize();
    ExtractOutput { modules, report }
}
