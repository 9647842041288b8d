use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::VerbLexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    /// Free answer, at most five verbs. Replies often fall outside the lexicon.
    Open,
    /// The full lexicon is listed in the prompt. The default for corpora.
    Closed,
}

impl std::str::FromStr for PromptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "open" => Ok(PromptKind::Open),
            "closed" => Ok(PromptKind::Closed),
            other => Err(format!("unknown prompt kind {other:?} (expected open or closed)")),
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::Open => "open",
            PromptKind::Closed => "closed",
        })
    }
}

/// A rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: PromptKind,
    text: String,
}

impl PromptTemplate {
    pub fn open() -> Self {
        Self {
            kind: PromptKind::Open,
            text: "What are some verbs that describe what is happening in this image?\n\
                   Answer only with comma separated verbs in the gerund form (they end in 'ing').\n\
                   Do not include more than 5."
                .into(),
        }
    }

    /// The closed prompt with the whole lexicon interpolated.
    pub fn closed(lexicon: &VerbLexicon) -> Self {
        Self {
            kind: PromptKind::Closed,
            text: format!(
                "You are provided with a list of {} verbs: {}\n\
                 Identify and list all verbs from this set that accurately describe the activity depicted in the image.\n\
                 Respond with the verbs only, separated by commas.",
                lexicon.len(),
                lexicon.verbs().join(", ")
            ),
        }
    }

    pub fn new(kind: PromptKind, lexicon: &VerbLexicon) -> Self {
        match kind {
            PromptKind::Open => Self::open(),
            PromptKind::Closed => Self::closed(lexicon),
        }
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Hex SHA-256 of the prompt text.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}
