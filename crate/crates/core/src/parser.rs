//! Label extraction from free-text model answers.
//!
//! Models are asked for a one-word answer but do not always comply. The
//! extraction order is:
//!
//! 1. normalize: lowercase, split on whitespace, trim punctuation at token
//!    boundaries;
//! 2. if the whole answer is a single label word of the space, take it;
//! 3. else take the first label word on the final non-empty line;
//! 4. else take the last label word anywhere in the text;
//! 5. else the answer is unparseable.
//!
//! Matching is whole-token only, so `positively` never reads as `positive`,
//! and words outside the label space are ignored entirely.

use serde::{Deserialize, Serialize};

use crate::types::{LabelSpace, Outcome, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub result: Outcome,
    /// Byte offsets `(start, end)` of the matched word in the input.
    pub matched_span: Option<(usize, usize)>,
}

impl ParseOutcome {
    fn unparseable() -> Self {
        ParseOutcome {
            result: Outcome::Unparseable,
            matched_span: None,
        }
    }

    fn matched(token: &Token) -> Self {
        ParseOutcome {
            result: Outcome::Label(token.label.expect("matched token carries a label")),
            matched_span: Some((token.start, token.end)),
        }
    }
}

struct Token {
    start: usize,
    end: usize,
    line: usize,
    label: Option<Polarity>,
}

fn trim_boundary_punctuation(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Lowercases and trims punctuation off every whitespace-separated token;
/// tokens are re-joined with single spaces and non-empty lines with `\n`.
pub fn normalize(text: &str) -> String {
    text.to_lowercase()
        .lines()
        .map(|line| {
            line.split_whitespace()
                .map(trim_boundary_punctuation)
                .filter(|w| !w.is_empty())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .filter(|line| !line.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn tokenize(text: &str, space: LabelSpace) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut line_start = 0;
    for (line_no, line) in text.split('\n').enumerate() {
        let mut rest = line;
        let mut offset = line_start;
        while let Some(begin) = rest.find(|c: char| !c.is_whitespace()) {
            let after = &rest[begin..];
            let len = after.find(char::is_whitespace).unwrap_or(after.len());
            let raw = &after[..len];
            let trimmed = trim_boundary_punctuation(raw);
            if !trimmed.is_empty() {
                let lead = raw.len() - raw.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
                let start = offset + begin + lead;
                let word = trimmed.to_lowercase();
                let label = space.members().iter().copied().find(|p| p.as_str() == word);
                tokens.push(Token {
                    start,
                    end: start + trimmed.len(),
                    line: line_no,
                    label,
                });
            }
            offset += begin + len;
            rest = &after[len..];
        }
        line_start += line.len() + 1;
    }
    tokens
}

pub fn parse_label(text: &str, space: LabelSpace) -> ParseOutcome {
    let tokens = tokenize(text, space);

    if let [only] = tokens.as_slice() {
        if only.label.is_some() {
            return ParseOutcome::matched(only);
        }
    }

    let final_line = text
        .split('\n')
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, _)| i)
        .last();
    if let Some(line) = final_line {
        if let Some(tok) = tokens.iter().find(|t| t.line == line && t.label.is_some()) {
            return ParseOutcome::matched(tok);
        }
    }

    match tokens.iter().rev().find(|t| t.label.is_some()) {
        Some(tok) => ParseOutcome::matched(tok),
        None => ParseOutcome::unparseable(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::canonical_label_string;
    use proptest::prelude::*;

    fn label(text: &str, space: LabelSpace) -> Outcome {
        parse_label(text, space).result
    }

    #[test]
    fn single_word_answer() {
        let out = parse_label("positive", LabelSpace::Ternary);
        assert_eq!(out.result, Outcome::Label(Polarity::Positive));
        assert_eq!(out.matched_span, Some((0, 8)));
    }

    #[test]
    fn punctuation_and_case() {
        let out = parse_label("Negative.", LabelSpace::Binary);
        assert_eq!(out.result, Outcome::Label(Polarity::Negative));
        assert_eq!(out.matched_span, Some((0, 8)));
        assert_eq!(
            label("  **Neutral**\n", LabelSpace::Ternary),
            Outcome::Label(Polarity::Neutral)
        );
    }

    #[test]
    fn sentence_answer_uses_final_line() {
        assert_eq!(
            label(
                "The opinion is likely positive and appreciative.",
                LabelSpace::Ternary
            ),
            Outcome::Label(Polarity::Positive)
        );
        // earlier deliberation mentions negative, verdict line wins
        let text = "It could be read as negative at first.\n\nOverall: positive, not negative.";
        let out = parse_label(text, LabelSpace::Binary);
        assert_eq!(out.result, Outcome::Label(Polarity::Positive));
        let (s, e) = out.matched_span.unwrap();
        assert_eq!(&text[s..e], "positive");
    }

    #[test]
    fn global_scan_takes_last_occurrence() {
        let text = "Not negative, maybe positive.\nHard to say.\n";
        let out = parse_label(text, LabelSpace::Binary);
        assert_eq!(out.result, Outcome::Label(Polarity::Positive));
        let (s, e) = out.matched_span.unwrap();
        assert_eq!(&text[s..e], "positive");
    }

    #[test]
    fn no_label_is_unparseable() {
        let out = parse_label("I cannot determine the sentiment.", LabelSpace::Binary);
        assert_eq!(out.result, Outcome::Unparseable);
        assert_eq!(out.matched_span, None);
        assert_eq!(label("", LabelSpace::Binary), Outcome::Unparseable);
    }

    #[test]
    fn word_boundaries() {
        assert_eq!(
            label("positively", LabelSpace::Binary),
            Outcome::Unparseable
        );
        assert_eq!(
            label("negatives", LabelSpace::Ternary),
            Outcome::Unparseable
        );
    }

    #[test]
    fn out_of_space_words_ignored() {
        assert_eq!(label("neutral", LabelSpace::Binary), Outcome::Unparseable);
        assert_eq!(
            label("neutral, leaning negative", LabelSpace::Binary),
            Outcome::Label(Polarity::Negative)
        );
    }

    #[test]
    fn spans_with_multibyte_prefix() {
        let text = "Réponse: «positive»";
        let out = parse_label(text, LabelSpace::Binary);
        let (s, e) = out.matched_span.unwrap();
        assert_eq!(&text[s..e], "positive");
    }

    #[test]
    fn round_trip_all_spaces() {
        for space in [LabelSpace::Binary, LabelSpace::Ternary] {
            for p in space.members() {
                assert_eq!(label(canonical_label_string(*p), space), Outcome::Label(*p));
            }
        }
    }

    proptest! {
        #[test]
        fn binary_never_neutral(text in "(?s).{0,200}") {
            prop_assert_ne!(label(&text, LabelSpace::Binary), Outcome::Label(Polarity::Neutral));
        }

        #[test]
        fn normalize_idempotent(text in "(?s).{0,200}") {
            let once = normalize(&text);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn span_points_at_label(text in "[a-zA-Z .,!\n]{0,40}(positive|Negative|NEUTRAL)[a-zA-Z .,!\n]{0,40}") {
            let out = parse_label(&text, LabelSpace::Ternary);
            if let (Outcome::Label(p), Some((s, e))) = (out.result, out.matched_span) {
                prop_assert_eq!(text[s..e].to_lowercase(), p.as_str());
            } else {
                prop_assert!(out.matched_span.is_none());
            }
        }
    }
}
