//! Reader for the annotated DDI corpus XML layout:
//! `document` > `sentence` > `entity` / `pair`.

use std::path::{Path, PathBuf};
use std::thread;

use walkdir::WalkDir;

use super::{CorpusError, DdiLabel, Entity, GoldPair, RawSentence};

/// Parse a single XML file or every `*.xml` under a directory (recursively,
/// in sorted path order). Files may be parsed on parallel workers; the
/// `DDI_ATTN_THREADS` environment variable caps the worker count.
pub fn parse_corpus(path: &Path) -> Result<Vec<RawSentence>, CorpusError> {
    let meta = std::fs::metadata(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if meta.is_file() {
        return parse_file(path);
    }

    let mut files: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file()
            && entry
                .path()
                .extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("xml"))
        {
            files.push(entry.path().to_path_buf());
        }
    }

    let workers = worker_count().min(files.len().max(1));
    let per_file: Vec<Result<Vec<RawSentence>, CorpusError>> = if workers <= 1 {
        files.iter().map(|f| parse_file(f)).collect()
    } else {
        let mut results: Vec<Option<Result<Vec<RawSentence>, CorpusError>>> =
            (0..files.len()).map(|_| None).collect();
        let chunk = files.len().div_ceil(workers);
        thread::scope(|scope| {
            let mut handles = Vec::new();
            for (chunk_idx, chunk_files) in files.chunks(chunk).enumerate() {
                handles.push(scope.spawn(move || {
                    let parsed: Vec<_> = chunk_files.iter().map(|f| parse_file(f)).collect();
                    (chunk_idx, parsed)
                }));
            }
            for handle in handles {
                let (chunk_idx, parsed) = handle.join().expect("parser worker panicked");
                for (offset, res) in parsed.into_iter().enumerate() {
                    results[chunk_idx * chunk + offset] = Some(res);
                }
            }
        });
        results
            .into_iter()
            .map(|r| r.expect("chunk covered"))
            .collect()
    };

    let mut sentences = Vec::new();
    for res in per_file {
        sentences.extend(res?);
    }
    Ok(sentences)
}

fn worker_count() -> usize {
    std::env::var("DDI_ATTN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn parse_file(file: &Path) -> Result<Vec<RawSentence>, CorpusError> {
    let text = std::fs::read_to_string(file).map_err(|source| CorpusError::Io {
        path: file.to_path_buf(),
        source,
    })?;
    let doc = roxmltree::Document::parse(&text).map_err(|e| CorpusError::XmlSyntax {
        file: file.to_path_buf(),
        position: e.to_string(),
    })?;

    let schema_err = |detail: String| CorpusError::Schema {
        file: file.to_path_buf(),
        detail,
    };

    let mut sentences = Vec::new();
    for document in doc
        .descendants()
        .filter(|n| n.is_element() && n.has_tag_name("document"))
    {
        let doc_id = required_attr(&document, "id").map_err(&schema_err)?;
        for sentence in document
            .children()
            .filter(|n| n.is_element() && n.has_tag_name("sentence"))
        {
            let sent_id = required_attr(&sentence, "id").map_err(&schema_err)?;
            let sent_text = required_attr(&sentence, "text").map_err(&schema_err)?;
            let mut entities = Vec::new();
            let mut pairs = Vec::new();
            for child in sentence.children().filter(|n| n.is_element()) {
                match child.tag_name().name() {
                    "entity" => {
                        entities.push(parse_entity(&child, &sent_text).map_err(&schema_err)?)
                    }
                    "pair" => pairs.push(parse_pair(&child).map_err(&schema_err)?),
                    _ => {}
                }
            }
            for pair in &pairs {
                for reference in [&pair.e1, &pair.e2] {
                    if !entities.iter().any(|e| &e.id == reference) {
                        return Err(schema_err(format!(
                            "pair {} references missing entity {}",
                            pair.id, reference
                        )));
                    }
                }
            }
            sentences.push(RawSentence {
                doc_id: doc_id.clone(),
                sent_id,
                text: sent_text,
                entities,
                pairs,
            });
        }
    }
    Ok(sentences)
}

fn required_attr(node: &roxmltree::Node, name: &str) -> Result<String, String> {
    node.attribute(name).map(str::to_string).ok_or_else(|| {
        format!(
            "element <{}> is missing attribute '{}'",
            node.tag_name().name(),
            name
        )
    })
}

fn parse_entity(node: &roxmltree::Node, sent_text: &str) -> Result<Entity, String> {
    let id = required_attr(node, "id")?;
    let offsets = required_attr(node, "charOffset")?;
    let surface = required_attr(node, "text")?;
    let drug_type = required_attr(node, "type")?;

    // discontinuous mentions carry ";"-separated spans; only the first is used
    let first = offsets.split(';').next().unwrap_or("");
    let (start_s, end_s) = first
        .split_once('-')
        .ok_or_else(|| format!("entity {}: malformed charOffset '{}'", id, offsets))?;
    let char_start: usize = start_s
        .trim()
        .parse()
        .map_err(|_| format!("entity {}: bad offset '{}'", id, start_s))?;
    let char_end: usize = end_s
        .trim()
        .parse()
        .map_err(|_| format!("entity {}: bad offset '{}'", id, end_s))?;
    if char_start > char_end {
        return Err(format!(
            "entity {}: start {} after end {}",
            id, char_start, char_end
        ));
    }
    let chars: Vec<char> = sent_text.chars().collect();
    if char_end >= chars.len() {
        return Err(format!(
            "entity {}: span {}-{} outside sentence of {} chars",
            id,
            char_start,
            char_end,
            chars.len()
        ));
    }
    // the slice must match the annotated surface up to whitespace, except
    // for discontinuous mentions where the surface covers all spans
    if offsets.split(';').count() == 1 {
        let slice: String = chars[char_start..=char_end].iter().collect();
        if normalize_space(&slice) != normalize_space(&surface) {
            return Err(format!(
                "entity {}: surface '{}' does not match text slice '{}'",
                id, surface, slice
            ));
        }
    }
    Ok(Entity {
        id,
        char_start,
        char_end,
        surface,
        drug_type,
    })
}

fn parse_pair(node: &roxmltree::Node) -> Result<GoldPair, String> {
    let id = required_attr(node, "id")?;
    let e1 = required_attr(node, "e1")?;
    let e2 = required_attr(node, "e2")?;
    if e1 == e2 {
        return Err(format!("pair {}: e1 and e2 are the same entity", id));
    }
    let ddi = required_attr(node, "ddi")?;
    let label = match ddi.as_str() {
        "false" => DdiLabel::False,
        "true" => {
            let kind = required_attr(node, "type")?;
            DdiLabel::parse(&kind)
                .filter(|l| *l != DdiLabel::False)
                .ok_or_else(|| format!("pair {}: unknown interaction type '{}'", id, kind))?
        }
        other => {
            return Err(format!(
                "pair {}: ddi must be true or false, got '{}'",
                id, other
            ))
        }
    };
    Ok(GoldPair { id, e1, e2, label })
}

fn normalize_space(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
