//! Reading corpora: one document per UTF-8 file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use erratum_core::text::{normalize_bytes, segment_words, Document, NormalizationPolicy, Tokenization};

/// Files making up `path`: the file itself, or the regular files of a
/// directory sorted by name. Hidden files are skipped.
pub fn corpus_files(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let meta = std::fs::metadata(path).with_context(|| format!("corpus {}", path.display()))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).with_context(|| format!("listing {}", path.display()))? {
        let entry = entry?;
        let name = entry.file_name();
        if name.to_string_lossy().starts_with('.') || !entry.file_type()?.is_file() {
            continue;
        }
        files.push(entry.path());
    }
    files.sort();
    if files.is_empty() {
        bail!("corpus directory {} has no files", path.display());
    }
    Ok(files)
}

/// Document id for a corpus file: its name without extension.
pub fn doc_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn load_corpus(path: &Path, policy: NormalizationPolicy, scheme: Tokenization) -> anyhow::Result<Vec<Document>> {
    let mut docs = Vec::new();
    for file in corpus_files(path)? {
        let bytes = std::fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
        let text = normalize_bytes(&bytes, policy).with_context(|| format!("decoding {}", file.display()))?;
        let id = doc_id(&file);
        let spans = segment_words(&id, &text, scheme);
        docs.push(Document { id, text, spans });
    }
    let mut ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        bail!("two corpus files map to document id `{}`", w[0]);
    }
    Ok(docs)
}
