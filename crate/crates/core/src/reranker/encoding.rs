//! Serialized mention and concept inputs for cross-encoder backends.
//!
//! ```text
//! [CLS] ctx_l [START] mention [END] ctx_r
//! [CLS] ctx_l [START] mention (long form) [END] ctx_r
//! T047 [TYPE] Lupus Vulgaris [TITLE] Lupus tuberculeux [SEP] Lupus exedens
//! ```

use serde::Serialize;

use crate::candidates::CandidateList;
use crate::datamodel::{Document, Mention};
use crate::error::{Error, Result};
use crate::kb::{Concept, KnowledgeBase};
use crate::text::CharIndexed;

pub const CLS: &str = "[CLS]";
pub const START: &str = "[START]";
pub const END: &str = "[END]";
pub const TYPE: &str = "[TYPE]";
pub const TITLE: &str = "[TITLE]";
pub const SEP: &str = "[SEP]";
/// Encoding of the synthetic NIL concept.
pub const UNK: &str = "[UNK]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MentionEncoding {
    pub serialized: String,
    pub ctx_left: String,
    pub ctx_right: String,
}

/// Context is cut at `ctx_len` characters on each side of the mention's outer
/// bounds, then trimmed of surrounding whitespace.
pub fn encode_mention(doc: &Document, mention: &Mention, ctx_len: usize) -> MentionEncoding {
    let text = doc.text();
    let idx = CharIndexed::new(&text);
    let start = mention.spans.iter().map(|s| s.start).min().unwrap_or(0).min(idx.len());
    let end = mention.spans.iter().map(|s| s.end).max().unwrap_or(0).clamp(start, idx.len());
    let ctx_left = idx.slice(start.saturating_sub(ctx_len), start).unwrap_or("").trim().to_string();
    let ctx_right = idx
        .slice(end, (end + ctx_len).min(idx.len()))
        .unwrap_or("")
        .trim()
        .to_string();
    let surface = match &mention.long_form {
        Some(lf) => format!("{} ({lf})", mention.text),
        None => mention.text.clone(),
    };
    let serialized = [CLS, &ctx_left, START, &surface, END, &ctx_right]
        .iter()
        .filter(|p| !p.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ");
    MentionEncoding {
        serialized,
        ctx_left,
        ctx_right,
    }
}

/// First semantic type, canonical name, then every other alias once, in KB order.
pub fn encode_concept(c: &Concept) -> Result<String> {
    if c.aliases.is_empty() {
        return Err(Error::InvalidConcept {
            id: c.concept_id.clone(),
            message: "concept has no aliases to encode".into(),
        });
    }
    let mut tail: Vec<&str> = Vec::new();
    for a in &c.aliases {
        if a.value != c.canonical_name && !tail.contains(&a.value.as_str()) {
            tail.push(&a.value);
        }
    }
    let head = match c.semantic_types.first() {
        Some(t) => format!("{t} {TYPE} {} {TITLE}", c.canonical_name),
        None => format!("{TYPE} {} {TITLE}", c.canonical_name),
    };
    if tail.is_empty() {
        Ok(head)
    } else {
        Ok(format!("{head} {}", tail.join(&format!(" {SEP} "))))
    }
}

/// The strings an external scorer sees for one mention's batch.
#[derive(Debug, Clone, Serialize)]
pub struct EncodedBatch {
    pub document_id: String,
    pub mention_id: String,
    pub mention: String,
    pub candidate_ids: Vec<String>,
    pub concepts: Vec<String>,
    pub cg_scores: Vec<f64>,
}

/// Up to `k - 1` real candidates followed by NIL.
pub fn encode_batch(
    doc: &Document,
    mention: &Mention,
    cl: &CandidateList,
    kb: &KnowledgeBase,
    k: usize,
    ctx_len: usize,
) -> Result<EncodedBatch> {
    let mut out = EncodedBatch {
        document_id: doc.id.clone(),
        mention_id: mention.id.clone(),
        mention: encode_mention(doc, mention, ctx_len).serialized,
        candidate_ids: Vec::new(),
        concepts: Vec::new(),
        cg_scores: Vec::new(),
    };
    for c in cl.candidates.iter().filter(|c| !c.is_nil()).take(k.saturating_sub(1)) {
        let concept = kb
            .get(&c.concept_id)
            .ok_or_else(|| Error::Config(format!("candidate {} is not in the knowledge base", c.concept_id)))?;
        out.candidate_ids.push(c.concept_id.clone());
        out.concepts.push(encode_concept(concept)?);
        out.cg_scores.push(c.score);
    }
    out.candidate_ids.push(crate::candidates::NIL_CONCEPT_ID.into());
    out.concepts.push(UNK.into());
    out.cg_scores.push(0.0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::from_ner_spans;
    use crate::kb::Alias;

    #[test]
    fn mention_template() {
        let doc = from_ner_spans("d", "a lupus b", &[(2, 7, "DISO")]).unwrap();
        let e = encode_mention(&doc, &doc.mentions[0], 128);
        assert_eq!(e.serialized, "[CLS] a [START] lupus [END] b");
        let e = encode_mention(&doc, &doc.mentions[0], 0);
        assert_eq!(e.serialized, "[CLS] [START] lupus [END]");
    }

    #[test]
    fn long_form_template() {
        let mut doc = from_ner_spans("d", "Patients with SLE were seen", &[(14, 17, "DISO")]).unwrap();
        doc.mentions[0].long_form = Some("systemic lupus erythematosus".into());
        let e = encode_mention(&doc, &doc.mentions[0], 128);
        assert_eq!(
            e.serialized,
            "[CLS] Patients with [START] SLE (systemic lupus erythematosus) [END] were seen"
        );
    }

    #[test]
    fn context_is_cut_per_side_on_characters() {
        let doc = from_ner_spans("d", "ééééé lupus ààààà", &[(6, 11, "DISO")]).unwrap();
        let e = encode_mention(&doc, &doc.mentions[0], 3);
        assert_eq!(e.ctx_left, "éé");
        assert_eq!(e.ctx_right, "àà");
    }

    #[test]
    fn concept_template() {
        let c = Concept {
            concept_id: "C0024131".into(),
            canonical_name: "Lupus Vulgaris".into(),
            semantic_types: vec!["T047".into()],
            aliases: vec![
                Alias::new("Lupus Vulgaris", "en"),
                Alias::new("Lupus tuberculeux", "fr"),
                Alias::new("Lupus exedens", "de"),
                Alias::new("Lupus tuberculeux", "es"),
                Alias::new("Tuberculosis cutis luposa", "la"),
            ],
        };
        assert_eq!(
            encode_concept(&c).unwrap(),
            "T047 [TYPE] Lupus Vulgaris [TITLE] Lupus tuberculeux [SEP] Lupus exedens [SEP] Tuberculosis cutis luposa"
        );
        let only = Concept {
            aliases: vec![Alias::new("Name", "en")],
            canonical_name: "Name".into(),
            ..c.clone()
        };
        assert_eq!(encode_concept(&only).unwrap(), "T047 [TYPE] Name [TITLE]");
        let none = Concept {
            aliases: vec![],
            ..c
        };
        assert!(encode_concept(&none).is_err());
    }
}
