//! Word-level text tokenizer with a spelled-out fallback.

use super::vocab::{is_text, word_token, FALLBACK_ALPHABET, FALLBACK_BASE, FALLBACK_SEPARATOR, WORDS, WORD_BASE};
use super::CodecError;

/// Lowercases, turns every character outside `[a-z0-9]` into a separator and
/// joins the remaining words with single spaces.
pub fn normalize(s: &str) -> String {
    s.to_lowercase()
        .split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit()))
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn fallback_token(c: char) -> u32 {
    FALLBACK_BASE + FALLBACK_ALPHABET.find(c).expect("normalized text is [a-z0-9]") as u32
}

pub fn tokenize_text(s: &str) -> Vec<u32> {
    let mut out = Vec::new();
    let mut previous_spelled = false;
    for word in normalize(s).split(' ').filter(|w| !w.is_empty()) {
        match word_token(word) {
            Some(t) => {
                out.push(t);
                previous_spelled = false;
            }
            None => {
                if previous_spelled {
                    out.push(FALLBACK_SEPARATOR);
                }
                out.extend(word.chars().map(fallback_token));
                previous_spelled = true;
            }
        }
    }
    out
}

pub fn detokenize_text(ids: &[u32]) -> Result<String, CodecError> {
    let mut words: Vec<String> = Vec::new();
    let mut spelled = String::new();
    for (position, &t) in ids.iter().enumerate() {
        if !is_text(t) {
            return Err(CodecError::NotText { position, token: t });
        }
        if t >= FALLBACK_BASE {
            if t == FALLBACK_SEPARATOR {
                if !spelled.is_empty() {
                    words.push(std::mem::take(&mut spelled));
                }
            } else {
                let i = (t - FALLBACK_BASE) as usize;
                spelled.push_str(&FALLBACK_ALPHABET[i..i + 1]);
            }
        } else {
            if !spelled.is_empty() {
                words.push(std::mem::take(&mut spelled));
            }
            words.push(WORDS[(t - WORD_BASE) as usize].to_string());
        }
    }
    if !spelled.is_empty() {
        words.push(spelled);
    }
    Ok(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_words_round_trip() {
        let ids = tokenize_text("Approach the apple");
        assert_eq!(ids.len(), 3);
        assert_eq!(detokenize_text(&ids).unwrap(), "approach the apple");
    }

    #[test]
    fn empty_and_unknown_words() {
        assert!(tokenize_text("").is_empty());
        assert_eq!(detokenize_text(&[]).unwrap(), "");
        let ids = tokenize_text("zxqv");
        assert_eq!(ids.len(), 4);
        assert_eq!(detokenize_text(&ids).unwrap(), "zxqv");
        let two = tokenize_text("zx qv the q2");
        assert_eq!(two.len(), 2 + 1 + 2 + 1 + 2);
        assert_eq!(detokenize_text(&two).unwrap(), "zx qv the q2");
    }

    #[test]
    fn normalization_collapses_punctuation_and_case() {
        assert_eq!(normalize("  Put the  Apple, on-the PLATE! "), "put the apple on the plate");
        assert_eq!(normalize("épée"), "p e");
    }

    #[test]
    fn non_text_tokens_are_rejected() {
        assert!(matches!(detokenize_text(&[16, 3]), Err(CodecError::NotText { position: 1, token: 3 })));
        assert!(detokenize_text(&[FALLBACK_SEPARATOR + 1]).is_err());
        assert!(detokenize_text(&[WORD_BASE + WORDS.len() as u32]).is_err());
    }
}
