//! Exact-duplicate removal by MD5 content hash.
//!
//! Files are grouped by digest; each group keeps the member with the shortest
//! relative path (lexicographically smallest on ties). Group members are
//! verified byte-for-byte before being treated as duplicates, so a digest
//! collision splits the group instead of dropping distinct code.

use std::collections::BTreeMap;
use std::path::Path;

use md5::{Digest, Md5};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fsutil::copy_preserving;
use crate::model::{SourceFile, Stage, StageReport};

/// Lowercase hex MD5 of the raw bytes.
pub fn compute_content_hash(content: &[u8]) -> String {
    let digest = Md5::digest(content);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Files sharing one digest, sorted canonically (survivor first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashGroup {
    pub digest: String,
    pub members: Vec<String>,
}

impl HashGroup {
    pub fn survivor(&self) -> &str {
        &self.members[0]
    }

    pub fn removed(&self) -> &[String] {
        &self.members[1..]
    }
}

/// Shortest path first, then lexicographic.
pub fn survivor_order(a: &str, b: &str) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupGroupReport {
    pub survivor: String,
    pub removed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupOutcome {
    pub survivors: Vec<SourceFile>,
    pub groups: Vec<HashGroup>,
    pub report: StageReport,
}

impl DedupOutcome {
    /// Digest → survivor and removed paths, for groups that lost members.
    pub fn group_report(&self) -> BTreeMap<String, DedupGroupReport> {
        let mut out = BTreeMap::new();
        for g in self.groups.iter().filter(|g| g.members.len() > 1) {
            // Split groups after a collision share a digest; suffix them.
            let mut key = g.digest.clone();
            let mut n = 1;
            while out.contains_key(&key) {
                key = format!("{}#{n}", g.digest);
                n += 1;
            }
            out.insert(
                key,
                DedupGroupReport {
                    survivor: g.survivor().to_string(),
                    removed: g.removed().to_vec(),
                },
            );
        }
        out
    }
}

/// Groups files by content and keeps one survivor per group. Survivors are
/// returned in path order; the report lists each removal with its survivor.
pub fn deduplicate(files: Vec<SourceFile>) -> DedupOutcome {
    let mut report = StageReport::new(Stage::Dedup);
    report.input_count = files.len() as u64;
    report.input_bytes = files.iter().map(SourceFile::len).sum();

    let digests: Vec<String> = files
        .par_iter()
        .map(|f| compute_content_hash(&f.content))
        .collect();
    let mut by_digest: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (idx, digest) in digests.into_iter().enumerate() {
        by_digest.entry(digest).or_default().push(idx);
    }

    let mut groups = Vec::new();
    let mut keep = vec![false; files.len()];
    for (digest, mut members) in by_digest {
        members.sort_by(|&a, &b| survivor_order(&files[a].path, &files[b].path));
        // Verification pass: partition by actual bytes.
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for idx in members {
            match classes
                .iter_mut()
                .find(|c| files[c[0]].content == files[idx].content)
            {
                Some(class) => class.push(idx),
                None => classes.push(vec![idx]),
            }
        }
        for class in classes {
            keep[class[0]] = true;
            let survivor = files[class[0]].path.clone();
            for &idx in &class[1..] {
                report.reject(
                    files[idx].path.clone(),
                    format!("duplicate: same content as {survivor}"),
                );
            }
            groups.push(HashGroup {
                digest: digest.clone(),
                members: class.iter().map(|&i| files[i].path.clone()).collect(),
            });
        }
    }

    let mut survivors: Vec<SourceFile> = files
        .into_iter()
        .zip(keep)
        .filter_map(|(f, k)| k.then_some(f))
        .collect();
    survivors.sort_by(|a, b| a.path.cmp(&b.path));
    report.output_count = survivors.len() as u64;
    report.output_bytes = survivors.iter().map(SourceFile::len).sum();
    report.canonicalize();
    DedupOutcome {
        survivors,
        groups,
        report,
    }
}

/// Copies survivors from `input_root` to `output_root` keeping relative
/// paths, mtime and permissions. Copy failures are recorded in the report.
pub fn copy_survivors(outcome: &mut DedupOutcome, input_root: &Path, output_root: &Path) {
    let failures: Vec<(String, String)> = outcome
        .survivors
        .par_iter()
        .filter_map(|f| {
            copy_preserving(&input_root.join(&f.path), &output_root.join(&f.path))
                .err()
                .map(|e| (f.path.clone(), format!("io error: copy failed: {e}")))
        })
        .collect();
    for (path, reason) in failures {
        outcome.report.note(path, reason);
    }
    outcome.report.canonicalize();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn md5_reference_vectors() {
        // RFC 1321 test suite values.
        assert_eq!(
            compute_content_hash(b""),
            "d41d8cd98f00b204e9800998ecf8427e"
        );
        assert_eq!(
            compute_content_hash(b"abc"),
            "900150983cd24fb0d6963f7d28e17f72"
        );
        assert_ne!(
            compute_content_hash(b"module a;"),
            compute_content_hash(b"module b;")
        );
    }

    #[test]
    fn shortest_path_survives() {
        let files = vec![
            SourceFile::new("b/sub/x.v", "same"),
            SourceFile::new("a/x.v", "same"),
        ];
        let out = deduplicate(files);
        assert_eq!(out.survivors.len(), 1);
        assert_eq!(out.survivors[0].path, "a/x.v");
        assert_eq!(out.report.rejections[0].path, "b/sub/x.v");
        assert_eq!(
            out.report.rejections[0].reason,
            "duplicate: same content as a/x.v"
        );
    }

    #[test]
    fn equal_length_ties_break_lexicographically() {
        let out = deduplicate(vec![
            SourceFile::new("q/b.v", "z"),
            SourceFile::new("q/a.v", "z"),
        ]);
        assert_eq!(out.survivors[0].path, "q/a.v");
    }

    #[test]
    fn distinct_files_are_all_kept() {
        let files = vec![SourceFile::new("p/a.v", "1"), SourceFile::new("p/b.v", "2")];
        let out = deduplicate(files.clone());
        assert_eq!(out.survivors, files);
        assert_eq!(out.report.retention_percent(), Some(100.0));
    }

    #[test]
    fn three_copies_and_one_unique() {
        let files = vec![
            SourceFile::new("p/a.v", "dup"),
            SourceFile::new("p/bb.v", "dup"),
            SourceFile::new("p/ccc.v", "dup"),
            SourceFile::new("p/u.v", "unique"),
        ];
        let out = deduplicate(files);
        assert_eq!(out.survivors.len(), 2);
        assert_eq!(out.report.rejections.len(), 2);
        let groups = out.group_report();
        assert_eq!(groups.len(), 1);
        let g = groups.values().next().unwrap();
        assert_eq!(g.survivor, "p/a.v");
        assert_eq!(g.removed, ["p/bb.v", "p/ccc.v"]);
    }
}
