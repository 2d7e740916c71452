//! Pipeline configuration file.
//!
//! Relative paths are resolved against the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::TokenRule;
use crate::filter::FilterConfig;
use crate::llm::EndpointConfig;
use crate::model::Stage;
use crate::store::{StoreConfig, DB_URL_ENV};
use crate::syntax::{CompilerBackend, PatternConfig, StubCompiler};
use crate::synth::{
    FailurePattern, StubSynth, SynthBackend, SynthLimits, DEFAULT_MAX_SCENARIOS,
    DEFAULT_PROBE_BUDGET,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("ConfigError: cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ConfigError: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub filter: bool,
    pub dedup: bool,
    pub syntax: bool,
    pub synthesis: bool,
    pub extract: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            filter: true,
            dedup: true,
            syntax: true,
            synthesis: true,
            extract: true,
        }
    }
}

impl StageToggles {
    pub fn only(stage: Stage) -> Self {
        let mut t = StageToggles {
            filter: false,
            dedup: false,
            syntax: false,
            synthesis: false,
            extract: false,
        };
        *t.get_mut(stage) = true;
        t
    }

    pub fn enabled(&self, stage: Stage) -> bool {
        match stage {
            Stage::Filter => self.filter,
            Stage::Dedup => self.dedup,
            Stage::Syntax => self.syntax,
            Stage::Synthesis => self.synthesis,
            Stage::DbValidation => self.extract,
        }
    }

    fn get_mut(&mut self, stage: Stage) -> &mut bool {
        match stage {
            Stage::Filter => &mut self.filter,
            Stage::Dedup => &mut self.dedup,
            Stage::Syntax => &mut self.syntax,
            Stage::Synthesis => &mut self.synthesis,
            Stage::DbValidation => &mut self.extract,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntaxSettings {
    pub backend: BackendKind,
    pub tool: PathBuf,
    pub timeout_secs: u64,
    /// Stub script (TOML) for the stub backend.
    pub stub: Option<PathBuf>,
    pub patterns: PatternConfig,
}

impl Default for SyntaxSettings {
    fn default() -> Self {
        SyntaxSettings {
            backend: BackendKind::Stub,
            tool: "iverilog".into(),
            timeout_secs: 60,
            stub: None,
            patterns: PatternConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub backend: BackendKind,
    pub tool: PathBuf,
    pub timeout_secs: u64,
    pub stub: Option<PathBuf>,
    pub max_scenarios: usize,
    pub probe_budget: usize,
    /// Overrides the default non-tolerable message pattern.
    pub failure_pattern: Option<String>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            backend: BackendKind::Stub,
            tool: "yosys".into(),
            timeout_secs: 300,
            stub: None,
            max_scenarios: DEFAULT_MAX_SCENARIOS,
            probe_budget: DEFAULT_PROBE_BUDGET,
            failure_pattern: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelUse {
    #[default]
    Offline,
    Model,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSettings {
    pub token_rule: TokenRule,
    /// Descriptions from the endpoint model or from the template.
    pub describer: ModelUse,
    /// Functional classes from the endpoint model or from keywords.
    pub classifier: ModelUse,
    pub endpoint: Option<EndpointConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSettings {
    /// Store URL; falls back to the environment, then `<work>/forge.db`.
    pub url: Option<String>,
    /// Clear all rows before the validation stage.
    pub reset: bool,
    pub portless_exemptions: Vec<String>,
}

impl Default for StoreSettings {
    fn default() -> Self {
        StoreSettings {
            url: None,
            reset: true,
            portless_exemptions: StoreConfig::default().portless_exemptions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSettings {
    /// Token budget for instruction pairs.
    pub budget: u64,
}

impl Default for ExportSettings {
    fn default() -> Self {
        ExportSettings { budget: 8192 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Raw corpus tree, one directory per project.
    pub input: PathBuf,
    pub work: PathBuf,
    /// Report directory; defaults to `<work>/report`.
    pub report: Option<PathBuf>,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
    pub stages: StageToggles,
    pub filter: FilterConfig,
    pub syntax: SyntaxSettings,
    pub synthesis: SynthSettings,
    pub extract: ExtractSettings,
    pub store: StoreSettings,
    pub export: ExportSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: "corpus".into(),
            work: "work".into(),
            report: None,
            jobs: 0,
            stages: StageToggles::default(),
            filter: FilterConfig::default(),
            syntax: SyntaxSettings::default(),
            synthesis: SynthSettings::default(),
            extract: ExtractSettings::default(),
            store: StoreSettings::default(),
            export: ExportSettings::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        rebase(base, &mut cfg.input);
        rebase(base, &mut cfg.work);
        if let Some(r) = &mut cfg.report {
            rebase(base, r);
        }
        for stub in [&mut cfg.syntax.stub, &mut cfg.synthesis.stub]
            .into_iter()
            .flatten()
        {
            rebase(base, stub);
        }
        // Bare tool names stay as they are for a PATH lookup.
        for tool in [&mut cfg.syntax.tool, &mut cfg.synthesis.tool] {
            if tool.components().count() > 1 {
                rebase(base, tool);
            }
        }
        if let Some(url) = &mut cfg.store.url {
            let is_sqlite_path = !url.contains("://") && url != ":memory:";
            if is_sqlite_path && Path::new(url.as_str()).is_relative() {
                *url = base.join(&*url).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn report_dir(&self) -> PathBuf {
        self.report
            .clone()
            .unwrap_or_else(|| self.work.join("report"))
    }

    pub fn store_url(&self) -> String {
        self.store
            .url
            .clone()
            .or_else(|| std::env::var(DB_URL_ENV).ok().filter(|v| !v.is_empty()))
            .unwrap_or_else(|| self.work.join("forge.db").to_string_lossy().into_owned())
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            portless_exemptions: self.store.portless_exemptions.clone(),
        }
    }

    pub fn compiler_backend(&self) -> Result<CompilerBackend, ConfigError> {
        let s = &self.syntax;
        Ok(match s.backend {
            BackendKind::External => {
                CompilerBackend::icarus(&s.tool).with_timeout(Duration::from_secs(s.timeout_secs))
            }
            BackendKind::Stub => CompilerBackend::Stub(match &s.stub {
                Some(path) => StubCompiler::from_toml(&read(path)?)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                None => StubCompiler::default(),
            }),
        })
    }

    /// `source_root` is the directory the synthesizer reads files from.
    pub fn synth_backend(&self, source_root: &Path) -> Result<SynthBackend, ConfigError> {
        let s = &self.synthesis;
        Ok(match s.backend {
            BackendKind::External => SynthBackend::External {
                tool: s.tool.clone(),
                timeout: Duration::from_secs(s.timeout_secs),
                source_root: source_root.to_path_buf(),
            },
            BackendKind::Stub => SynthBackend::Stub(match &s.stub {
                Some(path) => StubSynth::from_toml(&read(path)?)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                None => StubSynth::default(),
            }),
        })
    }

    pub fn failure_pattern(&self) -> Result<FailurePattern, ConfigError> {
        match &self.synthesis.failure_pattern {
            Some(p) => FailurePattern::new(p).map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(FailurePattern::default()),
        }
    }

    pub fn synth_limits(&self) -> Result<SynthLimits, ConfigError> {
        if self.synthesis.max_scenarios == 0 || self.synthesis.probe_budget == 0 {
            return Err(ConfigError::Invalid(
                "synthesis limits must be positive".into(),
            ));
        }
        Ok(SynthLimits {
            max_scenarios: self.synthesis.max_scenarios,
            probe_budget: self.synthesis.probe_budget,
        })
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_rebasing() {
        let cfg = PipelineConfig::from_toml(
            "input = \"corpus\"\n[syntax]\nstub = \"stubs/syntax.toml\"\n[synthesis]\ntool = \"/opt/bin/yosys\"\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(cfg.input, Path::new("/cfg/corpus"));
        assert_eq!(cfg.work, Path::new("/cfg/work"));
        assert_eq!(
            cfg.syntax.stub.as_deref(),
            Some(Path::new("/cfg/stubs/syntax.toml"))
        );
        assert_eq!(cfg.syntax.tool, Path::new("iverilog"));
        assert_eq!(cfg.synthesis.tool, Path::new("/opt/bin/yosys"));
        assert_eq!(cfg.report_dir(), Path::new("/cfg/work/report"));
        assert!(cfg.stages.enabled(Stage::Synthesis));
        assert_eq!(cfg.export.budget, 8192);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(PipelineConfig::from_toml("inptu = \"x\"", Path::new(".")).is_err());
        assert!(PipelineConfig::from_toml("[stages]\nlint = true", Path::new(".")).is_err());
    }

    #[test]
    fn only_toggles_one_stage() {
        let t = StageToggles::only(Stage::Dedup);
        assert!(Stage::ALL
            .iter()
            .all(|&s| t.enabled(s) == (s == Stage::Dedup)));
    }

    #[test]
    fn store_url_precedence() {
        let cfg =
            PipelineConfig::from_toml("[store]\nurl = \"db/forge.db\"", Path::new("/w")).unwrap();
        assert_eq!(cfg.store_url(), "/w/db/forge.db");
        let mem =
            PipelineConfig::from_toml("[store]\nurl = \":memory:\"", Path::new("/w")).unwrap();
        assert_eq!(mem.store_url(), ":memory:");
    }
}
