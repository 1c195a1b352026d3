use serde::{Deserialize, Serialize};

/// Lowercased tokens plus the text they came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub source: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_punctuation(c: char) -> bool {
    // ASCII punctuation plus the general punctuation block (curly quotes,
    // dashes, ellipsis).
    c.is_ascii_punctuation() || ('\u{2010}'..='\u{205E}').contains(&c)
}

/// Lowercases, splits on whitespace, and emits every punctuation character as
/// its own token: `"The cat sat."` becomes `[the, cat, sat, .]`.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if is_punctuation(c) {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(c.to_string());
        } else {
            current.extend(c.to_lowercase());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence {
        tokens,
        source: text.to_string(),
    }
}

/// Joins tokens with single spaces, attaching punctuation to the preceding
/// token. `tokenize(detokenize(t))` reproduces `t` for tokens produced by
/// [`tokenize`].
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        let punct = tok.chars().count() == 1 && tok.chars().all(is_punctuation);
        if !out.is_empty() && !punct {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}
