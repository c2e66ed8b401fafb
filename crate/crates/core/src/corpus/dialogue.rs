use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive token range over a dialogue's flattened tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MentionSpan {
    pub start: usize,
    pub end: usize,
}

impl MentionSpan {
    pub fn new(start: usize, end: usize) -> Self {
        MentionSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl std::fmt::Display for MentionSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PronounInstance {
    pub span: MentionSpan,
    /// Candidate antecedents, all strictly preceding `span`.
    pub candidates: Vec<MentionSpan>,
    /// Indices into `candidates`, ascending.
    pub gold_intext: Vec<usize>,
    /// Normalized pool id of the out-of-text referent.
    pub gold_object: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PronounClass {
    /// Refers out of text and also has an in-text antecedent.
    Discussed,
    /// Refers out of text with no in-text antecedent.
    NotDiscussed,
    InTextOnly,
}

impl PronounInstance {
    pub fn class(&self) -> PronounClass {
        classify_pronoun(self)
    }
}

pub fn classify_pronoun(p: &PronounInstance) -> PronounClass {
    match (&p.gold_object, p.gold_intext.is_empty()) {
        (Some(_), false) => PronounClass::Discussed,
        (Some(_), true) => PronounClass::NotDiscussed,
        (None, _) => PronounClass::InTextOnly,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<String>,
    /// All turn tokens concatenated.
    pub tokens: Vec<String>,
    /// Index into `tokens` where each turn begins.
    pub turn_starts: Vec<usize>,
    pub pronouns: Vec<PronounInstance>,
}

impl Dialogue {
    pub fn span_tokens(&self, span: MentionSpan) -> &[String] {
        &self.tokens[span.start..=span.end]
    }

    pub fn span_text(&self, span: MentionSpan) -> String {
        self.span_tokens(span).join(" ")
    }

    /// Tokens of turn `i`.
    pub fn turn_tokens(&self, i: usize) -> &[String] {
        let start = self.turn_starts[i];
        let end = self
            .turn_starts
            .get(i + 1)
            .copied()
            .unwrap_or(self.tokens.len());
        &self.tokens[start..end]
    }
}

/// Lowercased, trimmed, whitespace-collapsed key.
pub fn normalize_id(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Deserialize, Serialize)]
pub(crate) struct RawDialogue {
    pub id: String,
    pub turns: Vec<String>,
    pub tokens: Vec<Vec<String>>,
    #[serde(default)]
    pub pronouns: Vec<RawPronoun>,
}

#[derive(Debug, Deserialize, Serialize)]
pub(crate) struct RawPronoun {
    pub span: [usize; 2],
    #[serde(default)]
    pub candidates: Vec<[usize; 2]>,
    #[serde(default)]
    pub gold_intext: Vec<[usize; 2]>,
    #[serde(default)]
    pub gold_object: Option<String>,
}

#[derive(Debug, Default)]
pub struct LoadedDialogues {
    pub dialogues: Vec<Dialogue>,
    /// Pronouns with neither candidates nor a gold object.
    pub rejected_pronouns: usize,
}

pub fn load_dialogues(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    load_dialogues_with_report(path).map(|l| l.dialogues)
}

pub fn load_dialogues_with_report(path: impl AsRef<Path>) -> Result<LoadedDialogues> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dialogues(BufReader::new(file), path)
}

pub fn parse_dialogues(reader: impl BufRead, origin: &Path) -> Result<LoadedDialogues> {
    let mut out = LoadedDialogues::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDialogue = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate dialogue id {:?} at line {}",
                raw.id,
                i + 1
            )));
        }
        let (d, rejected) = build_dialogue(raw)?;
        out.rejected_pronouns += rejected;
        out.dialogues.push(d);
    }
    Ok(out)
}

fn build_dialogue(raw: RawDialogue) -> Result<(Dialogue, usize)> {
    let id = raw.id;
    if raw.tokens.len() != raw.turns.len() {
        return Err(Error::Validation(format!(
            "dialogue {id}: {} turns but {} token lists",
            raw.turns.len(),
            raw.tokens.len()
        )));
    }
    let mut turn_starts = Vec::with_capacity(raw.tokens.len());
    let mut tokens = Vec::new();
    for t in raw.tokens {
        turn_starts.push(tokens.len());
        tokens.extend(t);
    }
    let n = tokens.len();
    let span = |s: [usize; 2]| -> Result<MentionSpan> {
        if s[0] > s[1] || s[1] >= n {
            return Err(Error::Validation(format!(
                "dialogue {id}: span [{}, {}] out of range for {n} tokens",
                s[0], s[1]
            )));
        }
        Ok(MentionSpan::new(s[0], s[1]))
    };

    let mut pronouns = Vec::with_capacity(raw.pronouns.len());
    let mut rejected = 0;
    for rp in raw.pronouns {
        let p_span = span(rp.span)?;
        let candidates = rp
            .candidates
            .iter()
            .map(|&c| span(c))
            .collect::<Result<Vec<_>>>()?;
        if let Some(c) = candidates.iter().find(|c| c.end >= p_span.start) {
            return Err(Error::Validation(format!(
                "dialogue {id}: candidate {c} does not precede pronoun {p_span}"
            )));
        }
        let mut gold_intext = Vec::with_capacity(rp.gold_intext.len());
        for g in &rp.gold_intext {
            let g = span(*g)?;
            let idx = candidates.iter().position(|c| *c == g).ok_or_else(|| {
                Error::Validation(format!(
                    "dialogue {id}: gold antecedent {g} of pronoun {p_span} is not a candidate"
                ))
            })?;
            gold_intext.push(idx);
        }
        gold_intext.sort_unstable();
        gold_intext.dedup();
        let gold_object = rp.gold_object.as_deref().map(normalize_id);
        if candidates.is_empty() && gold_object.is_none() {
            warn!("dialogue {id}: pronoun {p_span} has no candidates and no gold object; skipped");
            rejected += 1;
            continue;
        }
        pronouns.push(PronounInstance {
            span: p_span,
            candidates,
            gold_intext,
            gold_object,
        });
    }
    Ok((
        Dialogue {
            id,
            turns: raw.turns,
            tokens,
            turn_starts,
            pronouns,
        },
        rejected,
    ))
}

/// Serializes dialogues back to the JSONL layout `load_dialogues` reads.
pub fn write_dialogues(path: impl AsRef<Path>, dialogues: &[Dialogue]) -> Result<()> {
    use std::io::Write;
    let path = path.as_ref();
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for d in dialogues {
        let line = serde_json::to_string(&to_raw(d)).expect("dialogue serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

fn to_raw(d: &Dialogue) -> RawDialogue {
    let tokens = (0..d.turns.len())
        .map(|i| d.turn_tokens(i).to_vec())
        .collect();
    let pronouns = d
        .pronouns
        .iter()
        .map(|p| RawPronoun {
            span: [p.span.start, p.span.end],
            candidates: p.candidates.iter().map(|c| [c.start, c.end]).collect(),
            gold_intext: p
                .gold_intext
                .iter()
                .map(|&i| [p.candidates[i].start, p.candidates[i].end])
                .collect(),
            gold_object: p.gold_object.clone(),
        })
        .collect();
    RawDialogue {
        id: d.id.clone(),
        turns: d.turns.clone(),
        tokens,
        pronouns,
    }
}
