use std::collections::HashSet;

use super::AcquireError;
use crate::model::{normalize_verb, PairSource, VerbLexicon};

/// Lexicon verbs of a comma-separated reply, in reply order, without repeats.
/// Tokens lose surrounding punctuation before lookup; anything else that is
/// not a lexicon verb is dropped, so refusals parse to an empty list.
pub fn parse_reply(text: &str, lexicon: &VerbLexicon) -> Vec<String> {
    let mut seen = HashSet::new();
    let verbs: Vec<String> = text
        .split([',', '\n'])
        .map(|t| normalize_verb(t.trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())))
        .filter(|t| lexicon.contains(t) && seen.insert(t.clone()))
        .collect();
    if verbs.is_empty() && !text.trim().is_empty() {
        log::debug!(
            "reply yielded no lexicon verbs: {:?}",
            text.chars().take(80).collect::<String>()
        );
    }
    verbs
}

/// Tags reply verbs as model output and appends the gold verb when the reply
/// missed it.
pub fn build_nodes(
    reply_verbs: &[String],
    gold_verb: &str,
    lexicon: &VerbLexicon,
) -> Result<Vec<(String, PairSource)>, AcquireError> {
    let gold = normalize_verb(gold_verb);
    if !lexicon.contains(&gold) {
        return Err(AcquireError::GoldOutsideLexicon(gold));
    }
    let mut seen = HashSet::new();
    let mut out: Vec<(String, PairSource)> = reply_verbs
        .iter()
        .map(|v| normalize_verb(v))
        .filter(|v| seen.insert(v.clone()))
        .map(|v| (v, PairSource::LlmReply))
        .collect();
    if !seen.contains(&gold) {
        out.push((gold, PairSource::GoldInjected));
    }
    Ok(out)
}
