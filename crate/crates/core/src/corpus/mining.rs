//! Pull-request filtering and modified-function extraction.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfront::{parse_source, SourceUnit, TestMatcher};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrRecord {
    pub id: String,
    pub merged_at: DateTime<Utc>,
    pub changed_paths: Vec<String>,
    pub diff: String,
    /// Commit the merged tree corresponds to, when the export provides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_commit: Option<String>,
}

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid PR export {path}: {message}")]
    Export { path: String, message: String },
    #[error("cannot parse diff for {file}: {message}")]
    Diff { file: String, message: String },
    #[error("cannot reverse-apply diff to {file}: {message}")]
    Apply { file: String, message: String },
}

/// Read a JSON array of PR records.
pub fn load_pr_export(path: &Path) -> Result<Vec<PrRecord>, MiningError> {
    let p = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| MiningError::Io { path: p.clone(), message: e.to_string() })?;
    serde_json::from_str(&text).map_err(|e| MiningError::Export { path: p, message: e.to_string() })
}

/// PRs merged strictly after `cutoff` that touch at least one test path.
pub fn filter_prs(records: &[PrRecord], cutoff: DateTime<Utc>, tests: &TestMatcher) -> Vec<PrRecord> {
    records
        .iter()
        .filter(|r| r.merged_at > cutoff && r.changed_paths.iter().any(|p| tests.is_test(p)))
        .cloned()
        .collect()
}

/// One file's section of a unified diff.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileDiff {
    /// Path after the change (before it, for deletions).
    pub path: String,
    pub created: bool,
    pub deleted: bool,
    pub patch: String,
}

fn strip_side(p: &str) -> &str {
    let p = p.split('\t').next().unwrap_or(p).trim();
    p.strip_prefix("a/").or_else(|| p.strip_prefix("b/")).unwrap_or(p)
}

/// Split a multi-file unified diff at its `---`/`+++` header pairs.
pub fn split_diff(diff: &str) -> Vec<FileDiff> {
    let lines: Vec<&str> = diff.lines().collect();
    let mut starts = Vec::new();
    for i in 0..lines.len().saturating_sub(1) {
        if lines[i].starts_with("--- ") && lines[i + 1].starts_with("+++ ") {
            starts.push(i);
        }
    }
    let mut out = Vec::new();
    for (k, &s) in starts.iter().enumerate() {
        let mut end = starts.get(k + 1).copied().unwrap_or(lines.len());
        // Drop the next section's `diff --git` / `index` preamble.
        while end > s + 2 && !matches!(lines[end - 1].chars().next(), Some(' ' | '+' | '-' | '@' | '\\')) {
            end -= 1;
        }
        let old = lines[s][4..].trim();
        let new = lines[s + 1][4..].trim();
        let created = old.starts_with("/dev/null");
        let deleted = new.starts_with("/dev/null");
        let path = if deleted { strip_side(old) } else { strip_side(new) };
        let mut patch = lines[s..end].join("\n");
        patch.push('\n');
        out.push(FileDiff { path: path.to_string(), created, deleted, patch });
    }
    out
}

/// Reconstruct the pre-change text of a file from its post-change text.
pub fn reverse_apply(after: &str, file: &FileDiff) -> Result<String, MiningError> {
    if file.created {
        return Ok(String::new());
    }
    let patch = diffy::Patch::from_str(&file.patch)
        .map_err(|e| MiningError::Diff { file: file.path.clone(), message: e.to_string() })?;
    diffy::apply(after, &patch.reverse()).map_err(|e| MiningError::Apply { file: file.path.clone(), message: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateFunction {
    pub project: String,
    pub file: String,
    pub name: String,
    pub signature: String,
    /// Empty when the function was added by the PR.
    pub pre_body: String,
    pub post_body: String,
    pub pr_id: String,
    #[serde(default)]
    pub commit: String,
    /// First and last line of the post-change definition (1-based).
    pub lines: (u32, u32),
}

fn significant(unit: &SourceUnit, span: &std::ops::Range<usize>) -> Vec<String> {
    unit.significant(span).map(|i| unit.tokens[i].text.clone()).collect()
}

/// Functions whose definitions differ (ignoring whitespace and comments)
/// between the two revisions, plus functions that only exist afterwards.
///
/// Units are matched by path; test files are skipped.
pub fn extract_modified_functions(
    project: &str,
    pr: &PrRecord,
    before: &[SourceUnit],
    after: &[SourceUnit],
    tests: &TestMatcher,
) -> Vec<CandidateFunction> {
    let before: BTreeMap<&str, &SourceUnit> = before.iter().map(|u| (u.path.as_str(), u)).collect();
    let mut out = Vec::new();
    for post in after.iter().filter(|u| !tests.is_test(&u.path)) {
        let pre = before.get(post.path.as_str());
        for (tl, f) in post.functions() {
            let post_tokens = significant(post, &tl.span);
            let pre_body = match pre.and_then(|u| u.function(&f.name).map(|(ptl, _)| (u, ptl))) {
                Some((u, ptl)) if significant(u, &ptl.span) == post_tokens => continue,
                Some((u, ptl)) => u.text(&ptl.span),
                None => String::new(),
            };
            let first = &post.tokens[tl.span.start];
            let last = &post.tokens[tl.span.end - 1];
            out.push(CandidateFunction {
                project: project.to_string(),
                file: post.path.clone(),
                name: f.name.clone(),
                signature: post.text(&f.signature).trim().to_string(),
                pre_body,
                post_body: post.text(&tl.span),
                pr_id: pr.id.clone(),
                commit: pr.merge_commit.clone().unwrap_or_default(),
                lines: (first.line, last.line + last.text.matches('\n').count() as u32),
            });
        }
    }
    out
}

/// Parse both revisions of the C files a PR changed, taking the post-change
/// text from a checkout at `root` and undoing the diff for the pre-change text.
pub fn revisions_from_checkout(root: &Path, pr: &PrRecord) -> Result<(Vec<SourceUnit>, Vec<SourceUnit>), MiningError> {
    let mut before = Vec::new();
    let mut after = Vec::new();
    for fd in split_diff(&pr.diff) {
        if !(fd.path.ends_with(".c") || fd.path.ends_with(".h")) || fd.deleted {
            continue;
        }
        let path = root.join(&fd.path);
        let post = std::fs::read_to_string(&path)
            .map_err(|e| MiningError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let pre = reverse_apply(&post, &fd)?;
        let parse = |text: &str| {
            parse_source(&fd.path, text).map_err(|e| MiningError::Diff { file: fd.path.clone(), message: e.to_string() })
        };
        after.push(parse(&post)?);
        if !fd.created {
            before.push(parse(&pre)?);
        }
    }
    Ok((before, after))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pr(id: &str, merged: &str, paths: &[&str]) -> PrRecord {
        PrRecord {
            id: id.into(),
            merged_at: merged.parse().unwrap(),
            changed_paths: paths.iter().map(|s| s.to_string()).collect(),
            diff: String::new(),
            merge_commit: None,
        }
    }

    #[test]
    fn pr_filter() {
        let cutoff: DateTime<Utc> = "2023-05-01T00:00:00Z".parse().unwrap();
        let recs = vec![
            pr("early", "2023-04-30T12:00:00Z", &["tests/t_unit.c"]),
            pr("good", "2023-06-01T00:00:00Z", &["src/a.c", "tests/t_unit.c"]),
            pr("notests", "2023-06-01T00:00:00Z", &["src/a.c"]),
        ];
        let kept: Vec<_> = filter_prs(&recs, cutoff, &TestMatcher::default()).into_iter().map(|r| r.id).collect();
        assert_eq!(kept, vec!["good"]);
    }

    fn unit(path: &str, src: &str) -> SourceUnit {
        parse_source(path, src).unwrap()
    }

    #[test]
    fn modified_functions() {
        let p = pr("7", "2023-06-01T00:00:00Z", &[]);
        let before = [unit("a.c", "int f(void)\n{\n    return 1;\n}\nint g(void) { return 2; }\n")];
        let one_line = [unit("a.c", "int f(void)\n{\n    return 3;\n}\nint g(void) { return 2; }\n")];
        let got = extract_modified_functions("p", &p, &before, &one_line, &TestMatcher::default());
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].name, "f");
        assert_eq!(got[0].lines, (1, 4));
        assert_ne!(got[0].pre_body, got[0].post_body);

        let whitespace = [unit("a.c", "int f(void) { return 1; /* same */ }\nint g(void)\n{\n  return 2;\n}\n")];
        assert!(extract_modified_functions("p", &p, &before, &whitespace, &TestMatcher::default()).is_empty());

        let added = [unit("a.c", "int f(void)\n{\n    return 1;\n}\nint g(void) { return 2; }\nint h(void) { return 0; }\n")];
        let got = extract_modified_functions("p", &p, &before, &added, &TestMatcher::default());
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].name, "h");
        assert!(got[0].pre_body.is_empty());
    }

    #[test]
    fn diff_round_trip() {
        let before = "int f(void)\n{\n    return 1;\n}\n";
        let after = "int f(void)\n{\n    return 2;\n}\n\nint h(void)\n{\n    return 0;\n}\n";
        let patch = diffy::create_patch(before, after).to_string();
        let diff = format!(
            "diff --git a/src/a.c b/src/a.c\nindex 1..2 100644\n{}diff --git a/src/new.c b/src/new.c\nnew file mode 100644\n--- /dev/null\n+++ b/src/new.c\n@@ -0,0 +1 @@\n+int z;\n",
            patch.replacen("--- original", "--- a/src/a.c", 1).replacen("+++ modified", "+++ b/src/a.c", 1)
        );
        let files = split_diff(&diff);
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].path, "src/a.c");
        assert_eq!(reverse_apply(after, &files[0]).unwrap(), before);
        assert!(files[1].created);
        assert_eq!(reverse_apply("int z;\n", &files[1]).unwrap(), "");
    }
}
