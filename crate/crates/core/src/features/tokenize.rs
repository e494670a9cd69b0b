use super::porter;

/// One token with its position in the source text, in Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Lowercased maximal runs of letters, digits and apostrophes, with their
/// character offsets.
pub fn token_spans(text: &str) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut pos = 0;
    for c in text.chars() {
        if is_token_char(c) {
            if current.is_empty() {
                start = pos;
            }
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            spans.push(TokenSpan {
                token: std::mem::take(&mut current),
                start,
                end: pos,
            });
        }
        pos += 1;
    }
    if !current.is_empty() {
        spans.push(TokenSpan {
            token: current,
            start,
            end: pos,
        });
    }
    spans
}

pub fn tokenize(text: &str, stem: bool) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|t| if stem { porter::stem(&t.token) } else { t.token })
        .collect()
}
