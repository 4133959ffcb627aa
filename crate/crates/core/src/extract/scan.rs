use globset::{Glob, GlobSet, GlobSetBuilder};
use walkdir::WalkDir;

use super::{adapter_for, ExtractError, RepoSpec};

fn glob_set(patterns: &[String]) -> Result<Option<GlobSet>, ExtractError> {
    if patterns.is_empty() {
        return Ok(None);
    }
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p).map_err(|e| ExtractError::BadGlob { pattern: p.clone(), message: e.to_string() })?;
        b.add(glob);
    }
    b.build()
        .map(Some)
        .map_err(|e| ExtractError::BadGlob { pattern: patterns.join(","), message: e.to_string() })
}

/// Repo-relative paths (with `/` separators) of the files the spec's adapter
/// should parse, sorted. Hidden entries (names starting with `.`) are skipped,
/// as are files larger than `max_file_bytes`.
pub fn scan_repository(spec: &RepoSpec, max_file_bytes: u64) -> Result<Vec<String>, ExtractError> {
    let adapter = adapter_for(&spec.language).ok_or_else(|| ExtractError::NoAdapter(spec.language.clone()))?;
    let io_err = |source| ExtractError::Io { path: spec.root.clone(), source };
    let meta = std::fs::metadata(&spec.root).map_err(io_err)?;
    if !meta.is_dir() {
        return Err(io_err(std::io::Error::new(std::io::ErrorKind::NotADirectory, "repository root is not a directory")));
    }
    let include = glob_set(&spec.include)?;
    let exclude = glob_set(&spec.exclude)?;

    let mut out = Vec::new();
    let walker = WalkDir::new(&spec.root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| {
            let path = e.path().map(|p| p.to_path_buf()).unwrap_or_else(|| spec.root.clone());
            ExtractError::Io { path, source: e.into() }
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(&spec.root) else { continue };
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if !adapter.accepts(&rel)
            || include.as_ref().is_some_and(|g| !g.is_match(&rel))
            || exclude.as_ref().is_some_and(|g| g.is_match(&rel))
        {
            continue;
        }
        let len = entry.metadata().map_err(|e| ExtractError::Io { path: entry.path().to_path_buf(), source: e.into() })?.len();
        if len > max_file_bytes {
            tracing::warn!(file = %rel, bytes = len, "skipping file over size cap");
            continue;
        }
        out.push(rel);
    }
    out.sort();
    Ok(out)
}
