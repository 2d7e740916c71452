//! Reading and writing staging trees.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::model::{normalize_path, ProjectId, ProjectUnit, SourceFile};

/// True for paths with the Verilog source suffix (case-insensitive).
pub fn is_verilog_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("v"))
}

fn relative(root: &Path, path: &Path) -> String {
    normalize_path(&path.strip_prefix(root).unwrap_or(path).to_string_lossy())
}

/// Loads a staging tree: every immediate child directory of `root` becomes a
/// project holding its `.v` files, sorted by path. Empty projects are dropped.
pub fn load_tree(root: &Path) -> io::Result<Vec<ProjectUnit>> {
    let mut projects = Vec::new();
    for dir in sorted_children(root)? {
        if !dir.is_dir() {
            continue;
        }
        let project_id = ProjectId(
            dir.file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned(),
        );
        let mut files = Vec::new();
        for entry in walkdir::WalkDir::new(&dir).sort_by_file_name() {
            let entry = entry.map_err(io::Error::other)?;
            if entry.file_type().is_file() && is_verilog_path(entry.path()) {
                let content = fs::read(entry.path())?;
                files.push(SourceFile::new(relative(root, entry.path()), content));
            }
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        if !files.is_empty() {
            projects.push(ProjectUnit {
                project_id,
                root: dir,
                files,
                notes: None,
            });
        }
    }
    Ok(projects)
}

pub fn load_files(root: &Path) -> io::Result<Vec<SourceFile>> {
    Ok(load_tree(root)?.into_iter().flat_map(|p| p.files).collect())
}

pub fn sorted_children(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut children = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<Vec<_>>>()?;
    children.sort();
    Ok(children)
}

/// Removes and recreates `dir`.
pub fn reset_dir(dir: &Path) -> io::Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)
}

/// Writes each file's content at its relative path below `out_root`.
pub fn write_files<'a>(
    out_root: &Path,
    files: impl IntoIterator<Item = &'a SourceFile>,
) -> io::Result<()> {
    for file in files {
        let dest = out_root.join(&file.path);
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(dest, &file.content)?;
    }
    Ok(())
}

/// Copies a file keeping its permissions and modification time.
pub fn copy_preserving(src: &Path, dest: &Path) -> io::Result<()> {
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::copy(src, dest)?;
    let meta = fs::metadata(src)?;
    let mtime = filetime::FileTime::from_last_modification_time(&meta);
    filetime::set_file_mtime(dest, mtime)
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row).map_err(io::Error::other)?);
        text.push('\n');
    }
    fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_tree_groups_by_top_directory() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir_all(root.join("b/rtl")).unwrap();
        fs::create_dir_all(root.join("a")).unwrap();
        fs::create_dir_all(root.join("empty")).unwrap();
        fs::write(root.join("b/rtl/x.v"), "module x; endmodule").unwrap();
        fs::write(root.join("b/notes.txt"), "hi").unwrap();
        fs::write(root.join("a/y.V"), "module y; endmodule").unwrap();
        fs::write(root.join("loose.v"), "module z; endmodule").unwrap();
        let projects = load_tree(root).unwrap();
        let ids: Vec<_> = projects.iter().map(|p| p.project_id.0.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(projects[1].files[0].path, "b/rtl/x.v");
        assert_eq!(projects[1].files[0].project_id.0, "b");
    }

    #[test]
    fn copy_keeps_mtime() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("s.v");
        fs::write(&src, "x").unwrap();
        let old = filetime::FileTime::from_unix_time(1_000_000, 0);
        filetime::set_file_mtime(&src, old).unwrap();
        let dest = dir.path().join("out/deep/s.v");
        copy_preserving(&src, &dest).unwrap();
        let meta = fs::metadata(&dest).unwrap();
        assert_eq!(filetime::FileTime::from_last_modification_time(&meta), old);
    }
}
