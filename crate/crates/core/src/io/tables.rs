use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use super::{comma_list, content_lines, read_text, write_atomic, FormatError};
use crate::model::{normalize_verb, PredictionRecord, SynsetLexicon, VerbLexicon};

fn fields(line: &str) -> Vec<&str> {
    line.split('\t').map(str::trim).collect()
}

fn check_verb(path: &Path, line: usize, verb: &str, lexicon: Option<&VerbLexicon>) -> Result<(), FormatError> {
    match lexicon {
        Some(lex) if !lex.contains(verb) => Err(FormatError::UnknownVerb {
            path: path.to_path_buf(),
            line,
            verb: verb.to_string(),
        }),
        _ => Ok(()),
    }
}

fn check_new_image(path: &Path, line: usize, seen: &mut HashSet<String>, image: &str) -> Result<(), FormatError> {
    if image.is_empty() {
        return Err(FormatError::malformed(path, line, "empty image id"));
    }
    if !seen.insert(image.to_string()) {
        return Err(FormatError::malformed(
            path,
            line,
            format!("image {image:?} listed twice"),
        ));
    }
    Ok(())
}

pub fn read_lexicon(path: &Path) -> Result<VerbLexicon, FormatError> {
    let text = read_text(path)?;
    let mut verbs = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in content_lines(&text) {
        let verb = normalize_verb(raw);
        if verb.contains(['\t', ',']) {
            return Err(FormatError::malformed(
                path,
                line,
                "a verb may not contain tabs or commas",
            ));
        }
        if !seen.insert(verb.clone()) {
            return Err(FormatError::malformed(path, line, format!("duplicate verb {verb:?}")));
        }
        verbs.push(verb);
    }
    if verbs.is_empty() {
        return Err(FormatError::malformed(path, 0, "lexicon is empty"));
    }
    VerbLexicon::new(verbs).map_err(|e| FormatError::from_model(path, 0, e))
}

pub fn write_lexicon(path: &Path, lexicon: &VerbLexicon) -> Result<(), FormatError> {
    let mut out = String::new();
    for verb in lexicon.verbs() {
        out.push_str(verb);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads `image \t gold \t v1,v2,...`. With a lexicon, gold verbs must be
/// members; ranked verbs are taken as emitted by the system under test.
pub fn read_predictions(path: &Path, lexicon: Option<&VerbLexicon>) -> Result<Vec<PredictionRecord>, FormatError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in content_lines(&text) {
        let f = fields(raw);
        if f.len() != 3 {
            return Err(FormatError::malformed(
                path,
                line,
                format!(
                    "expected 3 tab-separated fields (image, gold, ranking), found {}",
                    f.len()
                ),
            ));
        }
        if f[1].is_empty() {
            return Err(FormatError::malformed(path, line, "missing gold verb"));
        }
        check_new_image(path, line, &mut seen, f[0])?;
        check_verb(path, line, f[1], lexicon)?;
        let record =
            PredictionRecord::new(f[0], f[1], comma_list(f[2])).map_err(|e| FormatError::from_model(path, line, e))?;
        out.push(record);
    }
    Ok(out)
}

/// Reads `synset_id \t v1,v2,...`. Synsets may overlap; a repeated id
/// extends the earlier entry.
pub fn read_synsets(path: &Path) -> Result<SynsetLexicon, FormatError> {
    let text = read_text(path)?;
    let mut entries = Vec::new();
    for (line, raw) in content_lines(&text) {
        let f = fields(raw);
        if f.len() != 2 || f[0].is_empty() {
            return Err(FormatError::malformed(path, line, "expected `synset_id \\t v1,v2,...`"));
        }
        let verbs = comma_list(f[1]);
        if verbs.is_empty() {
            return Err(FormatError::malformed(
                path,
                line,
                format!("synset {:?} has no verbs", f[0]),
            ));
        }
        entries.push((
            f[0].to_string(),
            verbs.into_iter().map(String::from).collect::<Vec<_>>(),
        ));
    }
    SynsetLexicon::new(entries).map_err(|e| FormatError::from_model(path, 0, e))
}

pub fn write_synsets(path: &Path, synsets: &SynsetLexicon) -> Result<(), FormatError> {
    let mut out = String::new();
    for (id, verbs) in synsets.synsets() {
        let list: Vec<&str> = verbs.iter().map(String::as_str).collect();
        out.push_str(&format!("{id}\t{}\n", list.join(",")));
    }
    write_atomic(path, out.as_bytes())
}

/// Reads the unclustered reference verbs per image: `image \t v1,v2,...`.
pub fn read_raw_references(
    path: &Path,
    lexicon: Option<&VerbLexicon>,
) -> Result<BTreeMap<String, BTreeSet<String>>, FormatError> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    let mut seen = HashSet::new();
    for (line, raw) in content_lines(&text) {
        let f = fields(raw);
        if f.len() != 2 {
            return Err(FormatError::malformed(path, line, "expected `image \\t v1,v2,...`"));
        }
        check_new_image(path, line, &mut seen, f[0])?;
        let mut verbs = BTreeSet::new();
        for v in comma_list(f[1]) {
            check_verb(path, line, v, lexicon)?;
            verbs.insert(normalize_verb(v));
        }
        if verbs.is_empty() {
            return Err(FormatError::malformed(path, line, "no reference verbs"));
        }
        out.insert(f[0].to_string(), verbs);
    }
    Ok(out)
}

/// Reads gold labels: `image \t verb`.
pub fn read_gold(path: &Path, lexicon: Option<&VerbLexicon>) -> Result<BTreeMap<String, String>, FormatError> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    let mut seen = HashSet::new();
    for (line, raw) in content_lines(&text) {
        let f = fields(raw);
        if f.len() != 2 || f[1].is_empty() {
            return Err(FormatError::malformed(path, line, "expected `image \\t verb`"));
        }
        check_new_image(path, line, &mut seen, f[0])?;
        check_verb(path, line, f[1], lexicon)?;
        out.insert(f[0].to_string(), normalize_verb(f[1]));
    }
    Ok(out)
}

/// Image by verb score table.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub verbs: Vec<String>,
    /// `(image_id, scores)` in file order; every score row has `verbs.len()` entries.
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn read_similarity_matrix(path: &Path) -> Result<SimilarityMatrix, FormatError> {
    let text = read_text(path)?;
    let mut lines = content_lines(&text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| FormatError::malformed(path, 0, "missing header row"))?;
    let head = fields(header);
    if head.len() < 2 {
        return Err(FormatError::malformed(path, 1, "header must name at least one verb"));
    }
    let verbs: Vec<String> = head[1..].iter().map(|v| normalize_verb(v)).collect();
    let mut distinct = HashSet::new();
    for v in &verbs {
        if v.is_empty() || !distinct.insert(v) {
            return Err(FormatError::malformed(
                path,
                1,
                format!("bad or repeated verb column {v:?}"),
            ));
        }
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (line, raw) in lines {
        let f = fields(raw);
        if f.len() != verbs.len() + 1 {
            return Err(FormatError::DimMismatch {
                path: path.to_path_buf(),
                line,
                expected: verbs.len(),
                found: f.len().saturating_sub(1),
            });
        }
        check_new_image(path, line, &mut seen, f[0])?;
        let mut scores = Vec::with_capacity(verbs.len());
        for (col, s) in f[1..].iter().enumerate() {
            let x: f64 = s
                .parse()
                .map_err(|_| FormatError::malformed(path, line, format!("score {s:?} is not a number")))?;
            if !x.is_finite() {
                return Err(FormatError::malformed(
                    path,
                    line,
                    format!("score for {:?} is not finite", verbs[col]),
                ));
            }
            scores.push(x);
        }
        rows.push((f[0].to_string(), scores));
    }
    Ok(SimilarityMatrix { verbs, rows })
}
