//! The edit-script language.
//!
//! ```text
//! script := clause (";" clause)* [";"]
//! clause := "replace" phrase "with" phrase
//! ```
//!
//! Keywords are case-insensitive. A phrase is one or more whitespace-separated
//! words and ends at `with`, `;` or end of input; a literal `with` inside a
//! phrase is written `\with`. Phrase words are kept as written (any script,
//! including CJK) and re-joined with single spaces.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One replacement: find `source_prompt`, paint `target_prompt` in its place.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "InstructionJson", into = "InstructionJson")]
pub struct EditInstruction {
    source_prompt: String,
    target_prompt: String,
}

#[derive(Serialize, Deserialize)]
struct InstructionJson {
    source_prompt: String,
    target_prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0} prompt is empty")]
pub struct EmptyPrompt(pub &'static str);

impl EditInstruction {
    /// Prompts are stored verbatim; they only need to contain something
    /// other than whitespace.
    pub fn new(source_prompt: impl Into<String>, target_prompt: impl Into<String>) -> Result<Self, EmptyPrompt> {
        let (source_prompt, target_prompt) = (source_prompt.into(), target_prompt.into());
        if source_prompt.trim().is_empty() {
            return Err(EmptyPrompt("source"));
        }
        if target_prompt.trim().is_empty() {
            return Err(EmptyPrompt("target"));
        }
        Ok(Self {
            source_prompt,
            target_prompt,
        })
    }

    pub fn source_prompt(&self) -> &str {
        &self.source_prompt
    }

    pub fn target_prompt(&self) -> &str {
        &self.target_prompt
    }
}

impl TryFrom<InstructionJson> for EditInstruction {
    type Error = EmptyPrompt;

    fn try_from(j: InstructionJson) -> Result<Self, Self::Error> {
        EditInstruction::new(j.source_prompt, j.target_prompt)
    }
}

impl From<EditInstruction> for InstructionJson {
    fn from(i: EditInstruction) -> Self {
        InstructionJson {
            source_prompt: i.source_prompt,
            target_prompt: i.target_prompt,
        }
    }
}

/// 1-based line and column; columns count characters, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// The script has no clauses at all.
    EmptyScript,
    /// A `;` with nothing before it.
    EmptyClause,
    /// A backslash that does not introduce `\with`.
    InvalidEscape(String),
    Syntax { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{position}: {}", describe(.kind))]
pub struct ParseError {
    pub position: Position,
    pub kind: ParseErrorKind,
}

fn describe(kind: &ParseErrorKind) -> String {
    match kind {
        ParseErrorKind::EmptyScript => "script contains no clauses".into(),
        ParseErrorKind::EmptyClause => "empty clause".into(),
        ParseErrorKind::InvalidEscape(w) => format!("invalid escape {w:?}, only \\with is allowed"),
        ParseErrorKind::Syntax { expected, found } => format!("expected {expected}, found {found}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word { text: String, escaped: bool },
    Semi,
    End,
}

impl Tok {
    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Tok::Word { text, escaped: false } if text.eq_ignore_ascii_case(kw))
    }

    fn describe(&self) -> String {
        match self {
            Tok::Word { text, .. } => format!("{text:?}"),
            Tok::Semi => "';'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Position)>, ParseError> {
    let mut out = Vec::new();
    let (mut line, mut column) = (1, 1);
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let pos = Position { line, column };
        if c == '\n' {
            chars.next();
            line += 1;
            column = 1;
        } else if c.is_whitespace() {
            chars.next();
            column += 1;
        } else if c == ';' {
            chars.next();
            column += 1;
            out.push((Tok::Semi, pos));
        } else {
            let mut word = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() || c == ';' {
                    break;
                }
                word.push(c);
                chars.next();
                column += 1;
            }
            let tok = match word.strip_prefix('\\') {
                Some(rest) if rest.eq_ignore_ascii_case("with") => Tok::Word {
                    text: rest.to_string(),
                    escaped: true,
                },
                Some(_) => {
                    return Err(ParseError {
                        position: pos,
                        kind: ParseErrorKind::InvalidEscape(word),
                    })
                }
                None => Tok::Word {
                    text: word,
                    escaped: false,
                },
            };
            out.push((tok, pos));
        }
    }
    out.push((Tok::End, Position { line, column }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Position)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &(Tok, Position) {
        &self.toks[self.at]
    }

    fn bump(&mut self) -> (Tok, Position) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn syntax(&self, expected: &str) -> ParseError {
        let (tok, pos) = self.peek();
        ParseError {
            position: *pos,
            kind: ParseErrorKind::Syntax {
                expected: expected.into(),
                found: tok.describe(),
            },
        }
    }

    /// Words up to (not including) `with`, `;` or end of input.
    fn phrase(&mut self, what: &str) -> Result<String, ParseError> {
        let mut words = Vec::new();
        loop {
            let (tok, _) = self.peek();
            match tok {
                Tok::Word { .. } if tok.is_keyword("with") => break,
                Tok::Word { text, .. } => {
                    words.push(text.clone());
                    self.bump();
                }
                Tok::Semi | Tok::End => break,
            }
        }
        if words.is_empty() {
            return Err(self.syntax(what));
        }
        Ok(words.join(" "))
    }

    fn clause(&mut self) -> Result<EditInstruction, ParseError> {
        if !self.peek().0.is_keyword("replace") {
            return Err(self.syntax("'replace'"));
        }
        self.bump();
        let source = self.phrase("source phrase")?;
        if !self.peek().0.is_keyword("with") {
            return Err(self.syntax("'with'"));
        }
        self.bump();
        let target = self.phrase("target phrase")?;
        Ok(EditInstruction::new(source, target).expect("phrases are nonempty"))
    }

    fn script(&mut self) -> Result<Vec<EditInstruction>, ParseError> {
        if self.peek().0 == Tok::End {
            return Err(ParseError {
                position: self.peek().1,
                kind: ParseErrorKind::EmptyScript,
            });
        }
        let mut clauses = Vec::new();
        loop {
            if self.peek().0 == Tok::Semi {
                return Err(ParseError {
                    position: self.peek().1,
                    kind: ParseErrorKind::EmptyClause,
                });
            }
            clauses.push(self.clause()?);
            match self.peek().0 {
                Tok::End => break,
                Tok::Semi => {
                    self.bump();
                    if self.peek().0 == Tok::End {
                        break;
                    }
                }
                Tok::Word { .. } => return Err(self.syntax("';' or end of input")),
            }
        }
        Ok(clauses)
    }
}

/// Parses an edit script into instructions, in source order.
pub fn parse_instructions(text: &str) -> Result<Vec<EditInstruction>, ParseError> {
    Parser { toks: lex(text)?, at: 0 }.script()
}

fn render_phrase(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .map(|w| {
            if w.eq_ignore_ascii_case("with") {
                format!("\\{w}")
            } else {
                w.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonical script text; `parse_instructions(&render_script(x)) == x` for
/// any parsed `x`.
pub fn render_script(instructions: &[EditInstruction]) -> String {
    instructions
        .iter()
        .map(|i| {
            format!(
                "replace {} with {}",
                render_phrase(&i.source_prompt),
                render_phrase(&i.target_prompt)
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ins(s: &str, t: &str) -> EditInstruction {
        EditInstruction::new(s, t).unwrap()
    }

    fn err_at(text: &str) -> (usize, usize, ParseErrorKind) {
        let e = parse_instructions(text).unwrap_err();
        (e.position.line, e.position.column, e.kind)
    }

    #[test]
    fn two_clauses() {
        assert_eq!(
            parse_instructions("replace the dog with a cat; replace sky with sunset").unwrap(),
            vec![ins("the dog", "a cat"), ins("sky", "sunset")]
        );
    }

    #[test]
    fn minimal_and_whitespace_insensitive() {
        assert_eq!(parse_instructions("replace a with b").unwrap(), vec![ins("a", "b")]);
        assert_eq!(
            parse_instructions("  REPLACE\n  big   red\tball  With  blue ;\n").unwrap(),
            vec![ins("big red ball", "blue")]
        );
    }

    #[test]
    fn missing_target_at_end() {
        let (line, col, kind) = err_at("replace X with");
        assert_eq!((line, col), (1, 15));
        assert_eq!(
            kind,
            ParseErrorKind::Syntax {
                expected: "target phrase".into(),
                found: "end of input".into()
            }
        );
    }

    #[test]
    fn escaped_with_and_cjk() {
        let got = parse_instructions("replace man \\with hat with 一只猫; replace 天空 with 日落").unwrap();
        assert_eq!(got, vec![ins("man with hat", "一只猫"), ins("天空", "日落")]);
        assert_eq!(parse_instructions(&render_script(&got)).unwrap(), got);
        assert_eq!(render_script(&got[..1]), "replace man \\with hat with 一只猫");
    }

    #[test]
    fn error_message_mentions_column() {
        let e = parse_instructions("replace a b").unwrap_err();
        assert_eq!(e.to_string(), "line 1, column 12: expected 'with', found end of input");
        // columns count characters, so CJK text does not skew them
        let e = parse_instructions("replace 狗狗 with").unwrap_err();
        assert_eq!(e.position.column, 16);
    }

    #[test]
    fn instruction_rejects_blank_prompts() {
        assert!(EditInstruction::new(" ", "x").is_err());
        assert!(EditInstruction::new("x", "").is_err());
        assert!(serde_json::from_str::<EditInstruction>(r#"{"source_prompt":"","target_prompt":"x"}"#).is_err());
    }
}
