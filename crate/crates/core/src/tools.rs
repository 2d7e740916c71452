//! Running external EDA tools with captured output and a wall-clock limit.

use std::env;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use thiserror::Error;
use wait_timeout::ChildExt;

/// Captured result of one tool invocation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Transcript {
    pub fn new(exit_code: i32, stdout: impl Into<String>, stderr: impl Into<String>) -> Self {
        Transcript {
            exit_code,
            stdout: stdout.into(),
            stderr: stderr.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("tool not found: {0}")]
    NotFound(String),
    #[error("failed to spawn {tool}: {source}")]
    Spawn {
        tool: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{tool} timed out after {secs} s")]
    Timeout { tool: String, secs: u64 },
    #[error("{tool} terminated by signal")]
    Killed { tool: String },
}

/// Resolves a tool name against `PATH`, or checks an explicit path.
pub fn resolve_tool(tool: &Path) -> Option<PathBuf> {
    if tool.components().count() > 1 || tool.is_absolute() {
        return tool.is_file().then(|| tool.to_path_buf());
    }
    let path_var = env::var_os("PATH")?;
    env::split_paths(&path_var)
        .map(|dir| dir.join(tool))
        .find(|candidate| candidate.is_file())
}

fn drain<R: Read + Send + 'static>(reader: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = reader {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

/// Runs `tool args...`, killing it after `timeout`.
pub fn run_tool(tool: &Path, args: &[String], timeout: Duration) -> Result<Transcript, ToolError> {
    let name = tool.display().to_string();
    let resolved = resolve_tool(tool).ok_or_else(|| ToolError::NotFound(name.clone()))?;
    let mut child = Command::new(&resolved)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| ToolError::Spawn {
            tool: name.clone(),
            source,
        })?;
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());
    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ToolError::Timeout {
                tool: name,
                secs: timeout.as_secs(),
            });
        }
        Err(source) => return Err(ToolError::Spawn { tool: name, source }),
    };
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    let exit_code = status.code().ok_or(ToolError::Killed { tool: name })?;
    Ok(Transcript {
        exit_code,
        stdout,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn captures_exit_code_and_streams() {
        let t = run_tool(
            Path::new("sh"),
            &["-c".into(), "echo out; echo err >&2; exit 3".into()],
            Duration::from_secs(10),
        )
        .unwrap();
        assert_eq!(t, Transcript::new(3, "out\n", "err\n"));
    }

    #[test]
    fn missing_tool_is_not_found() {
        let err = run_tool(
            Path::new("definitely-not-a-real-tool-xyz"),
            &[],
            Duration::from_secs(1),
        );
        assert!(matches!(err, Err(ToolError::NotFound(_))));
    }

    #[test]
    fn slow_tool_times_out() {
        let err = run_tool(
            Path::new("sleep"),
            &["5".into()],
            Duration::from_millis(200),
        );
        assert!(matches!(err, Err(ToolError::Timeout { .. })));
    }
}
