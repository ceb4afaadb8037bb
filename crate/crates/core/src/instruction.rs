//! Deterministic instruction parsing into target, anchor, and distractor
//! concepts. No model calls; the template grammar and the distractor lexicon
//! are both plain data.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROBOT_CONCEPT: &str = "robot";

const ARTICLES: [&str; 3] = ["a", "an", "the"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    text: String,
}

impl Instruction {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyInstruction);
        }
        Ok(Self { text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// One template: `<verb> <target> [<preposition> <anchor>]`. Multi-word verbs
/// and prepositions are allowed; a `null` preposition means no anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarRule {
    pub verb: String,
    pub preposition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlacementGrammar {
    pub rules: Vec<GrammarRule>,
}

impl Default for PlacementGrammar {
    fn default() -> Self {
        serde_json::from_str(include_str!("../data/grammar.json")).expect("bundled grammar is valid")
    }
}

impl PlacementGrammar {
    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        if g.rules.is_empty() {
            return Err(Error::InvalidConfig("grammar has no rules".into()));
        }
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Result of matching an instruction against the grammar. Phrases are
/// lowercased, whitespace-collapsed, and stripped of a leading article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedInstruction {
    pub verb: String,
    pub preposition: Option<String>,
    pub target: String,
    pub anchor: Option<String>,
}

impl ParsedInstruction {
    /// Re-renders through the template; equals the normalized instruction.
    pub fn render(&self) -> String {
        match (&self.preposition, &self.anchor) {
            (Some(p), Some(a)) => format!("{} {} {} {}", self.verb, self.target, p, a),
            _ => format!("{} {}", self.verb, self.target),
        }
    }
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

fn strip_article(words: &[String]) -> &[String] {
    match words.first() {
        Some(w) if ARTICLES.contains(&w.as_str()) => &words[1..],
        _ => words,
    }
}

fn phrase(words: &[String], side: &'static str) -> Result<String> {
    let words = strip_article(words);
    if words.is_empty() {
        return Err(Error::EmptyPhrase(side));
    }
    Ok(words.join(" "))
}

/// Lowercase, collapse whitespace, strip leading articles from both phrases.
pub fn normalize(text: &str) -> String {
    tokens(text).join(" ")
}

pub fn parse_instruction(instr: &Instruction, grammar: &PlacementGrammar) -> Result<ParsedInstruction> {
    let words = tokens(instr.text());
    let mut empty_phrase = None;

    for rule in &grammar.rules {
        let verb = tokens(&rule.verb);
        if verb.is_empty() || words.len() < verb.len() || words[..verb.len()] != verb[..] {
            continue;
        }
        let rest = &words[verb.len()..];
        let parsed = match &rule.preposition {
            None => phrase(rest, "target").map(|target| ParsedInstruction {
                verb: verb.join(" "),
                preposition: None,
                target,
                anchor: None,
            }),
            Some(prep) => {
                let prep = tokens(prep);
                if prep.is_empty() {
                    continue;
                }
                // last occurrence, so attribute phrases stay with the target
                let Some(split) = (0..rest.len().saturating_sub(prep.len() - 1))
                    .rev()
                    .find(|&i| rest[i..i + prep.len()] == prep[..])
                else {
                    continue;
                };
                phrase(&rest[..split], "target").and_then(|target| {
                    Ok(ParsedInstruction {
                        verb: verb.join(" "),
                        preposition: Some(prep.join(" ")),
                        target,
                        anchor: Some(phrase(&rest[split + prep.len()..], "anchor")?),
                    })
                })
            }
        };
        match parsed {
            Ok(p) => return Ok(p),
            Err(e) => {
                empty_phrase.get_or_insert(e);
            }
        }
    }
    Err(empty_phrase.unwrap_or_else(|| Error::UnsupportedTemplate(instr.text().to_string())))
}

/// Distractor vocabulary per task domain.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DistractorLexicon {
    pub domains: BTreeMap<String, Vec<String>>,
}

impl DistractorLexicon {
    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(include_str!("../data/lexicon.json")).expect("bundled lexicon is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let lex: Self = serde_json::from_str(text)?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, list) in &self.domains {
            if list.is_empty() {
                return Err(Error::InvalidLexicon(format!("domain {key:?} has no concepts")));
            }
            if list.iter().any(|c| c.trim().is_empty()) {
                return Err(Error::InvalidLexicon(format!("domain {key:?} has an empty concept")));
            }
        }
        Ok(())
    }

    pub fn insert(&mut self, domain: impl Into<String>, concepts: Vec<String>) {
        self.domains.insert(domain.into(), concepts);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptDecomposition {
    pub parsed: ParsedInstruction,
    pub distractors: Vec<String>,
}

impl ConceptDecomposition {
    pub fn target(&self) -> &str {
        &self.parsed.target
    }

    pub fn anchor(&self) -> Option<&str> {
        self.parsed.anchor.as_deref()
    }

    pub fn robot_concept(&self) -> &'static str {
        ROBOT_CONCEPT
    }

    /// Target, anchor (when present), robot.
    pub fn safe_concepts(&self) -> Vec<String> {
        let mut s = vec![self.parsed.target.clone()];
        s.extend(self.parsed.anchor.clone());
        s.push(ROBOT_CONCEPT.to_string());
        s
    }

    /// Every concept the segmentation backend is queried with at t=0.
    pub fn all_concepts(&self) -> Vec<String> {
        let mut all = self.safe_concepts();
        all.extend(self.distractors.iter().cloned());
        all
    }
}

pub fn decompose(
    instr: &Instruction,
    grammar: &PlacementGrammar,
    lexicon: &DistractorLexicon,
    domain_key: &str,
) -> Result<ConceptDecomposition> {
    let parsed = parse_instruction(instr, grammar)?;
    if parsed.anchor.as_deref() == Some(parsed.target.as_str()) {
        return Err(Error::InvalidConfig(format!(
            "target and anchor are the same concept {:?}",
            parsed.target
        )));
    }
    let list = lexicon
        .domains
        .get(domain_key)
        .ok_or_else(|| Error::UnknownDomain(domain_key.to_string()))?;

    let excluded: Vec<String> = [Some(&parsed.target), parsed.anchor.as_ref()]
        .into_iter()
        .flatten()
        .map(|s| s.to_lowercase())
        .chain(std::iter::once(ROBOT_CONCEPT.to_string()))
        .collect();
    let mut distractors: Vec<String> = Vec::new();
    for concept in list {
        let norm = normalize(concept);
        if excluded.contains(&norm) || distractors.contains(&norm) {
            continue;
        }
        distractors.push(norm);
    }
    Ok(ConceptDecomposition { parsed, distractors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ParsedInstruction> {
        parse_instruction(&Instruction::new(s).unwrap(), &PlacementGrammar::default())
    }

    fn lexicon(domain: &str, items: &[&str]) -> DistractorLexicon {
        let mut lex = DistractorLexicon::default();
        lex.insert(domain, items.iter().map(|s| s.to_string()).collect());
        lex
    }

    #[test]
    fn parses_basic_templates() {
        let p = parse("put spoon on towel").unwrap();
        assert_eq!((p.target.as_str(), p.anchor.as_deref()), ("spoon", Some("towel")));
        let p = parse("put carrot on plate").unwrap();
        assert_eq!((p.target.as_str(), p.anchor.as_deref()), ("carrot", Some("plate")));
    }

    #[test]
    fn keeps_attribute_phrase_whole() {
        let p = parse("Put spoon with green handle on towel").unwrap();
        assert_eq!(p.target, "spoon with green handle");
        assert_eq!(p.anchor.as_deref(), Some("towel"));
    }

    #[test]
    fn strips_articles_and_case() {
        let p = parse("  PLACE the Spoon   onto a Towel ").unwrap();
        assert_eq!(p.verb, "place");
        assert_eq!(p.target, "spoon");
        assert_eq!(p.anchor.as_deref(), Some("towel"));
        assert_eq!(p.render(), "place spoon onto towel");
    }

    #[test]
    fn anchorless_template() {
        let p = parse("pick up the spoon").unwrap();
        assert_eq!(p.target, "spoon");
        assert_eq!(p.anchor, None);
    }

    #[test]
    fn template_errors() {
        assert!(matches!(
            parse("wave at the camera"),
            Err(Error::UnsupportedTemplate(_))
        ));
        assert!(matches!(parse("put on towel"), Err(Error::EmptyPhrase("target"))));
        assert!(matches!(parse("put spoon on the"), Err(Error::EmptyPhrase("anchor"))));
        assert!(matches!(Instruction::new("   "), Err(Error::EmptyInstruction)));
    }

    #[test]
    fn decompose_excludes_safe_concepts() {
        let lex = lexicon("kitchen", &["spatula", "fork", "knife", "spoon"]);
        let d = decompose(
            &Instruction::new("put spoon on towel").unwrap(),
            &PlacementGrammar::default(),
            &lex,
            "kitchen",
        )
        .unwrap();
        assert_eq!(d.distractors, vec!["spatula", "fork", "knife"]);
        assert_eq!(d.safe_concepts(), vec!["spoon", "towel", "robot"]);
    }

    #[test]
    fn decompose_keeps_unrelated_lexicon() {
        let lex = lexicon("kitchen", &["spatula", "fork", "knife"]);
        let d = decompose(
            &Instruction::new("put carrot on plate").unwrap(),
            &PlacementGrammar::default(),
            &lex,
            "kitchen",
        )
        .unwrap();
        assert_eq!(d.distractors, vec!["spatula", "fork", "knife"]);
    }

    #[test]
    fn decompose_is_case_insensitive_and_dedups() {
        let lex = lexicon("k", &["Spoon", "Fork", "fork", "TOWEL"]);
        let d = decompose(
            &Instruction::new("put spoon on towel").unwrap(),
            &PlacementGrammar::default(),
            &lex,
            "k",
        )
        .unwrap();
        assert_eq!(d.distractors, vec!["fork"]);
    }

    #[test]
    fn unknown_domain() {
        let err = decompose(
            &Instruction::new("put spoon on towel").unwrap(),
            &PlacementGrammar::default(),
            &DistractorLexicon::default(),
            "kitchen",
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownDomain(_)));
    }

    #[test]
    fn lexicon_validation() {
        assert!(DistractorLexicon::from_json(r#"{"a": []}"#).is_err());
        assert!(DistractorLexicon::bundled().domains.contains_key("kitchen"));
    }
}
