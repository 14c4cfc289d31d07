//! Dataset features computed from already-processed corpora.
//!
//! Corpora are pre-tokenized (one sentence per line, whitespace separated),
//! tagged corpora carry `token<TAB>tag1;tag2` lines, and treebanks are CoNLL-U.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Number of non-blank lines (sentences).
    pub dataset_size: usize,
    pub token_count: usize,
    pub word_vocab: BTreeSet<String>,
    /// Present only when a subword-segmented version of the corpus was supplied.
    pub subword_vocab: Option<BTreeSet<String>>,
    pub avg_sentence_length: f64,
    pub ttr: f64,
}

impl CorpusStats {
    pub fn word_vocab_size(&self) -> usize {
        self.word_vocab.len()
    }

    pub fn subword_vocab_size(&self) -> Option<usize> {
        self.subword_vocab.as_ref().map(BTreeSet::len)
    }

    /// Attaches the type set of the subword-segmented corpus.
    pub fn with_subwords(mut self, subword_text: &str) -> Result<Self> {
        let vocab = vocabulary(subword_text);
        if vocab.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        self.subword_vocab = Some(vocab);
        Ok(self)
    }
}

/// Token types of a whitespace-tokenized text.
pub fn vocabulary(text: &str) -> BTreeSet<String> {
    text.split_ascii_whitespace().map(str::to_string).collect()
}

pub fn compute_corpus_stats(text: &str) -> Result<CorpusStats> {
    let mut sentences = 0usize;
    let mut tokens = 0usize;
    let mut vocab = BTreeSet::new();
    for line in text.lines() {
        let mut n = 0;
        for tok in line.split_ascii_whitespace() {
            n += 1;
            if !vocab.contains(tok) {
                vocab.insert(tok.to_string());
            }
        }
        if n > 0 {
            sentences += 1;
            tokens += n;
        }
    }
    if sentences == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(CorpusStats {
        dataset_size: sentences,
        token_count: tokens,
        ttr: vocab.len() as f64 / tokens as f64,
        word_vocab: vocab,
        subword_vocab: None,
        avg_sentence_length: tokens as f64 / sentences as f64,
    })
}

/// `|T1 ∩ T2| / (|T1| + |T2|)`, in `[0, 0.5]`.
pub fn vocab_overlap(t1: &BTreeSet<String>, t2: &BTreeSet<String>) -> Result<f64> {
    if t1.is_empty() || t2.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let shared = t1.intersection(t2).count();
    Ok(shared as f64 / (t1.len() + t2.len()) as f64)
}

/// `(1 - ttr1 / ttr2)^2`. Directional: swapping the arguments changes the value.
pub fn ttr_distance(ttr1: f64, ttr2: f64) -> Result<f64> {
    if !ttr2.is_finite() || ttr2 <= 0.0 {
        return Err(Error::ZeroTtr(ttr2));
    }
    if !ttr1.is_finite() {
        return Err(Error::NonFinite(format!("ttr {ttr1}")));
    }
    Ok((1.0 - ttr1 / ttr2).powi(2))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagStats {
    pub single_tag_types: usize,
    pub fused_tag_types: usize,
    pub avg_tags_per_word: f64,
}

/// Morphological tag statistics of a `token<TAB>tag1;tag2;...` corpus.
///
/// A fused type is the full bundle with its components sorted, so `PL;N` and
/// `N;PL` are the same type.
pub fn compute_tag_stats(text: &str) -> Result<TagStats> {
    let mut single = BTreeSet::new();
    let mut fused = BTreeSet::new();
    let mut tokens = 0usize;
    let mut components = 0usize;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tags = line
            .split_once('\t')
            .map(|(_, tags)| tags.trim())
            .unwrap_or("");
        let mut parts: Vec<&str> = tags
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        if parts.is_empty() {
            return Err(Error::UntaggedToken { line: i + 1 });
        }
        parts.sort_unstable();
        tokens += 1;
        components += parts.len();
        fused.insert(parts.join(";"));
        single.extend(parts.into_iter().map(str::to_string));
    }
    if tokens == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(TagStats {
        single_tag_types: single.len(),
        fused_tag_types: fused.len(),
        avg_tags_per_word: components as f64 / tokens as f64,
    })
}

/// Dependency relation classes whose word order is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArcClass {
    Subject,
    Object,
    Oblique,
    Adjective,
    Numeral,
}

impl ArcClass {
    pub const ALL: [ArcClass; 5] = [
        ArcClass::Subject,
        ArcClass::Object,
        ArcClass::Oblique,
        ArcClass::Adjective,
        ArcClass::Numeral,
    ];

    /// Maps a dependency label (matched on the part before `:`) and head UPOS to a class.
    pub fn classify(deprel: &str, head_upos: &str) -> Option<Self> {
        let base = deprel.split(':').next().unwrap_or(deprel);
        match base {
            "nsubj" => Some(ArcClass::Subject),
            "obj" => Some(ArcClass::Object),
            "obl" => Some(ArcClass::Oblique),
            "amod" if head_upos == "NOUN" => Some(ArcClass::Adjective),
            "nummod" => Some(ArcClass::Numeral),
            _ => None,
        }
    }

    fn head_word(self) -> &'static str {
        match self {
            ArcClass::Subject | ArcClass::Object | ArcClass::Oblique => "verb",
            ArcClass::Adjective | ArcClass::Numeral => "noun",
        }
    }

    fn name(self) -> &'static str {
        match self {
            ArcClass::Subject => "subject",
            ArcClass::Object => "object",
            ArcClass::Oblique => "oblique",
            ArcClass::Adjective => "adjective",
            ArcClass::Numeral => "numeral",
        }
    }
}

/// Feature names for [`ArcProportions::values`], in the same order.
pub fn arc_feature_names() -> Vec<String> {
    ArcClass::ALL
        .iter()
        .flat_map(|c| {
            ["before", "after"]
                .into_iter()
                .map(move |side| format!("{}_{side}_{}", c.name(), c.head_word()))
        })
        .collect()
}

/// Per-class counts of arcs whose dependent precedes / follows its head.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArcProportions {
    pub before: [usize; 5],
    pub after: [usize; 5],
}

impl ArcProportions {
    /// `(before, after)` proportions, or `None` when the class has no arcs.
    pub fn proportion(&self, class: ArcClass) -> Option<(f64, f64)> {
        let i = class as usize;
        let total = self.before[i] + self.after[i];
        if total == 0 {
            return None;
        }
        let n = total as f64;
        Some((self.before[i] as f64 / n, self.after[i] as f64 / n))
    }

    /// The ten proportions in [`arc_feature_names`] order.
    pub fn values(&self) -> Vec<Option<f64>> {
        ArcClass::ALL
            .iter()
            .flat_map(|&c| match self.proportion(c) {
                Some((b, a)) => [Some(b), Some(a)],
                None => [None, None],
            })
            .collect()
    }
}

struct TreebankToken {
    id: usize,
    upos: String,
    head: usize,
    deprel: String,
    line: usize,
}

pub fn compute_arc_proportions(conllu: &str) -> Result<ArcProportions> {
    let mut counts = ArcProportions::default();
    let mut sentence: Vec<TreebankToken> = Vec::new();
    for (i, raw) in conllu.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_end();
        if trimmed.is_empty() {
            tally_sentence(&sentence, &mut counts)?;
            sentence.clear();
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() < 8 {
            return Err(Error::MalformedTreebank {
                line,
                message: format!("expected at least 8 columns, found {}", cols.len()),
            });
        }
        // multiword ranges (1-2) and empty nodes (1.1) carry no basic arcs
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0].parse().map_err(|_| Error::MalformedTreebank {
            line,
            message: format!("non-integer id `{}`", cols[0]),
        })?;
        let head: usize = cols[6].parse().map_err(|_| Error::MalformedTreebank {
            line,
            message: format!("non-integer head `{}`", cols[6]),
        })?;
        sentence.push(TreebankToken {
            id,
            upos: cols[3].to_string(),
            head,
            deprel: cols[7].to_string(),
            line,
        });
    }
    tally_sentence(&sentence, &mut counts)?;
    Ok(counts)
}

fn tally_sentence(sentence: &[TreebankToken], counts: &mut ArcProportions) -> Result<()> {
    let n = sentence.len();
    for tok in sentence {
        if tok.head > n {
            return Err(Error::MalformedTreebank {
                line: tok.line,
                message: format!("head {} out of range for a {n}-token sentence", tok.head),
            });
        }
        if tok.head == 0 {
            continue;
        }
        let head_upos = sentence
            .iter()
            .find(|t| t.id == tok.head)
            .map(|t| t.upos.as_str())
            .unwrap_or("");
        if let Some(class) = ArcClass::classify(&tok.deprel, head_upos) {
            let i = class as usize;
            if tok.id < tok.head {
                counts.before[i] += 1;
            } else {
                counts.after[i] += 1;
            }
        }
    }
    Ok(())
}
