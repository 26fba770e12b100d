//! Lowercasing word/punctuation tokenizer shared by ingestion, metrics and
//! the answer F1.

/// A token with byte offsets into the original string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub fn is_punct_char(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '–' | '—' | '…')
}

/// True when every character of the token is punctuation.
pub fn is_punct(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punct_char)
}

/// Lowercases and splits on whitespace and punctuation; each punctuation
/// character becomes its own token.
pub fn tokenize_with_offsets(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word_start: Option<usize> = None;
    let flush = |out: &mut Vec<Token>, start: &mut Option<usize>, end: usize| {
        if let Some(s) = start.take() {
            out.push(Token {
                text: text[s..end].to_lowercase(),
                start: s,
                end,
            });
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            flush(&mut out, &mut word_start, i);
        } else if is_punct_char(c) {
            flush(&mut out, &mut word_start, i);
            out.push(Token {
                text: c.to_lowercase().collect(),
                start: i,
                end: i + c.len_utf8(),
            });
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    flush(&mut out, &mut word_start, text.len());
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|t| t.text).collect()
}

/// Joins tokens back into text, attaching punctuation the way English prose
/// writes it.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    let mut open_quote = false;
    for tok in tokens {
        let t = tok.as_ref();
        let (glue_prev, glue_after) = match t {
            "." | "," | "?" | "!" | ";" | ":" | ")" | "]" | "}" | "%" => (true, false),
            "(" | "[" | "{" | "$" => (false, true),
            "'" | "-" | "/" => (true, true),
            "\"" => {
                open_quote = !open_quote;
                if open_quote {
                    (false, true)
                } else {
                    (true, false)
                }
            }
            _ => (false, false),
        };
        if !out.is_empty() && !glue_prev && !glue_next {
            out.push(' ');
        }
        out.push_str(t);
        glue_next = glue_after;
    }
    out
}
