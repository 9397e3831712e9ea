//! Sample discovery and pairing by shared filename stem.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::commands::CliError;

/// `(stem, path)` pairs for a file or for every file in a directory whose
/// extension is in `exts`, sorted by stem.
pub fn list_samples(path: &Path, exts: &[&str]) -> Result<Vec<(String, PathBuf)>, CliError> {
    let meta =
        std::fs::metadata(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    if meta.is_file() {
        return Ok(vec![(stem_of(path)?, path.to_path_buf())]);
    }
    let mut found = BTreeMap::new();
    let entries =
        std::fs::read_dir(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for entry in entries {
        let p = entry
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
            .path();
        let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !p.is_file() || !exts.iter().any(|x| x.eq_ignore_ascii_case(ext)) {
            continue;
        }
        let stem = stem_of(&p)?;
        if let Some(prev) = found.insert(stem.clone(), p.clone()) {
            return Err(CliError::Data(format!(
                "two samples share stem '{stem}': {} and {}",
                prev.display(),
                p.display()
            )));
        }
    }
    if found.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no {} files found",
            path.display(),
            exts.join("/")
        )));
    }
    Ok(found.into_iter().collect())
}

fn stem_of(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| CliError::Data(format!("{}: no usable file stem", path.display())))
}

/// Joins several sample lists on their stems. Any stem missing from one of
/// the lists is an error.
pub fn pair_samples(
    groups: &[(&str, Vec<(String, PathBuf)>)],
) -> Result<Vec<(String, Vec<PathBuf>)>, CliError> {
    let (first_name, first) = &groups[0];
    for (name, list) in &groups[1..] {
        let a: Vec<&String> = first.iter().map(|(s, _)| s).collect();
        let b: Vec<&String> = list.iter().map(|(s, _)| s).collect();
        if a != b {
            let missing = a
                .iter()
                .find(|s| !b.contains(s))
                .map(|s| format!("'{s}' is in {first_name} but not in {name}"))
                .or_else(|| {
                    b.iter()
                        .find(|s| !a.contains(s))
                        .map(|s| format!("'{s}' is in {name} but not in {first_name}"))
                })
                .unwrap_or_default();
            return Err(CliError::Data(format!("sample mismatch: {missing}")));
        }
    }
    Ok(first
        .iter()
        .enumerate()
        .map(|(i, (stem, _))| {
            let paths = groups.iter().map(|(_, list)| list[i].1.clone()).collect();
            (stem.clone(), paths)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(stems: &[&str]) -> Vec<(String, PathBuf)> {
        stems
            .iter()
            .map(|s| (s.to_string(), PathBuf::from(format!("{s}.x"))))
            .collect()
    }

    #[test]
    fn pairs_matching_stems() {
        let out = pair_samples(&[("a", list(&["1", "2"])), ("b", list(&["1", "2"]))]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].1.len(), 2);
    }

    #[test]
    fn mismatch_is_an_error() {
        let err =
            pair_samples(&[("left", list(&["1", "2"])), ("disp", list(&["1", "3"]))]).unwrap_err();
        assert!(err.to_string().contains("'2' is in left but not in disp"));
        assert_eq!(err.code(), CliError::DATA);
    }
}
