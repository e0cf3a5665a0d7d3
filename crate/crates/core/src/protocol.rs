//! Prompt construction and completion parsing.
//!
//! The prompt strings here are the versioned constants for the whole harness;
//! every backend sees exactly this template. The user text carries a
//! `{video}` placeholder line that the inference layer replaces with frame
//! attachments. At inference time the template is cut immediately after the
//! final answer cue's colon.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// System message, byte-for-byte.
pub const SYSTEM_PROMPT: &str = "You are a helpful assistant.\nYou are good at answering questions about the video. You should think step by step.";

/// Placeholder token for the frame attachments inside the user message.
pub const FRAME_PLACEHOLDER: &str = "{video}";

/// Fixed option labels; the harness is deliberately 3-way only so the
/// permutation group stays exhaustively testable.
pub const OPTION_LABELS: [char; 3] = ['A', 'B', 'C'];

const ANSWER_CUE: &str = "Your answer (choose one of the options):";

/// A fully rendered prompt for one (question, presented options) pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
    pub labels: [char; 3],
}

/// What a completion resolved to: a presented position, or an abstention when
/// no parsing rule matched. `evidence` holds the matched fragment for audit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub kind: AnswerKind,
    pub evidence: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Position(u8),
    Abstain,
}

impl ParsedAnswer {
    fn position(index: u8, evidence: impl Into<String>) -> Self {
        ParsedAnswer { kind: AnswerKind::Position(index), evidence: evidence.into() }
    }

    fn abstain() -> Self {
        ParsedAnswer { kind: AnswerKind::Abstain, evidence: String::new() }
    }

    /// The presented position, if any.
    pub fn presented_index(&self) -> Option<u8> {
        match self.kind {
            AnswerKind::Position(i) => Some(i),
            AnswerKind::Abstain => None,
        }
    }
}

/// Render the prompt for a question and its three presented options.
pub fn build_prompt(question: &str, presented_options: &[String; 3]) -> Result<PromptPair> {
    for (i, opt) in presented_options.iter().enumerate() {
        if opt.trim().is_empty() {
            return Err(Error::Validation(format!(
                "option {} is empty",
                OPTION_LABELS[i]
            )));
        }
        if opt.contains('\n') {
            return Err(Error::Validation(format!(
                "option {} contains a newline",
                OPTION_LABELS[i]
            )));
        }
    }
    let user = format!(
        "Answer the following question based on the provided video.\n{FRAME_PLACEHOLDER}\nQuestion: {question}\nOptions:\nA. {}\nB. {}\nC. {}\n{ANSWER_CUE}",
        presented_options[0], presented_options[1], presented_options[2],
    );
    Ok(PromptPair {
        system: SYSTEM_PROMPT.to_string(),
        user,
        labels: OPTION_LABELS,
    })
}

fn letter_position(c: char) -> Option<u8> {
    match c.to_ascii_uppercase() {
        'A' => Some(0),
        'B' => Some(1),
        'C' => Some(2),
        _ => None,
    }
}

fn answer_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // the word "answer", then the first standalone A/B/C after it
    RE.get_or_init(|| Regex::new(r"(?i)\banswer\b").expect("static regex"))
}

fn standalone_letter() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b([abc])\b").expect("static regex"))
}

/// Map a raw completion to a presented position via a strict rule cascade:
///
/// 1. a standalone letter A/B/C opening the trimmed text, optionally followed
///    by `.`, `:` or `)`;
/// 2. the first standalone A/B/C after the word "answer" (case-insensitive);
/// 3. a case-insensitive substring match of exactly one option text;
/// 4. otherwise abstain.
///
/// Abstention is a value, not an error; it carries zero weight at voting
/// time instead of being coerced to a default letter.
pub fn parse_answer(raw: &str, presented_options: &[String; 3]) -> ParsedAnswer {
    // rule 1: leading standalone letter
    let trimmed = raw.trim();
    if let Some(token) = trimmed.split_whitespace().next() {
        let stripped = token
            .strip_suffix(['.', ':', ')'])
            .unwrap_or(token);
        let mut chars = stripped.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(pos) = letter_position(c) {
                return ParsedAnswer::position(pos, token);
            }
        }
    }

    // rule 2: "answer ... <letter>"
    if let Some(m) = answer_pattern().find(raw) {
        let tail = &raw[m.end()..];
        if let Some(cap) = standalone_letter().captures(tail) {
            let letter = cap.get(1).expect("capture group").as_str();
            let pos = letter_position(letter.chars().next().expect("one letter"))
                .expect("regex only matches a/b/c");
            let end = m.end() + cap.get(1).expect("capture group").end();
            return ParsedAnswer::position(pos, raw[m.start()..end].to_string());
        }
    }

    // rule 3: unique option-text echo
    let haystack = raw.to_lowercase();
    let mut matched: Option<u8> = None;
    for (i, opt) in presented_options.iter().enumerate() {
        let needle = opt.to_lowercase();
        if !needle.is_empty() && haystack.contains(&needle) {
            if matched.is_some() {
                return ParsedAnswer::abstain(); // ambiguous
            }
            matched = Some(i as u8);
        }
    }
    if let Some(pos) = matched {
        return ParsedAnswer::position(pos, presented_options[pos as usize].clone());
    }

    ParsedAnswer::abstain()
}
