//! Edit distance, CER/WER and the per-sentence change categories used to
//! judge a corrector.
//!
//! Characters are Unicode scalar values; words are runs of non-whitespace.
//! Corpus-level rates are micro-averaged: total edits over total reference
//! length.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Levenshtein distance over arbitrary comparable tokens.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character-level edit distance.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein(&a, &b)
}

pub fn tokenize_words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Word-level edit distance.
pub fn word_edit_distance(a: &str, b: &str) -> usize {
    levenshtein(&tokenize_words(a), &tokenize_words(b))
}

pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let n = reference.chars().count();
    if n == 0 {
        return Err(Error::Metric("CER undefined for an empty reference".into()));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / n as f64)
}

pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    let n = tokenize_words(reference).len();
    if n == 0 {
        return Err(Error::Metric("WER undefined for a reference without words".into()));
    }
    Ok(word_edit_distance(reference, hypothesis) as f64 / n as f64)
}

/// How a corrector changed one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Increased,
    Decreased,
    Equal,
    /// The corrected sentence matches the reference exactly.
    Zero,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Increased,
        Category::Decreased,
        Category::Equal,
        Category::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Increased => "increased",
            Category::Decreased => "decreased",
            Category::Equal => "equal",
            Category::Zero => "zero",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Decides the category from raw edit distances against one reference.
/// Both CERs share a denominator, so comparing distances is exact.
pub fn categorize_distances(ocr_edits: usize, corrected_edits: usize) -> Category {
    if corrected_edits == 0 {
        Category::Zero
    } else if corrected_edits > ocr_edits {
        Category::Increased
    } else if corrected_edits < ocr_edits {
        Category::Decreased
    } else {
        Category::Equal
    }
}

pub fn categorize(reference: &str, ocr: &str, corrected: &str) -> Result<Category> {
    if reference.is_empty() {
        return Err(Error::Metric("cannot categorize against an empty reference".into()));
    }
    Ok(categorize_distances(
        edit_distance(reference, ocr),
        edit_distance(reference, corrected),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub cer: f64,
    pub wer: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub increased: usize,
    pub decreased: usize,
    pub equal: usize,
    pub zero: usize,
}

impl CategoryCounts {
    pub fn add(&mut self, c: Category) {
        *self.get_mut(c) += 1;
    }

    fn get_mut(&mut self, c: Category) -> &mut usize {
        match c {
            Category::Increased => &mut self.increased,
            Category::Decreased => &mut self.decreased,
            Category::Equal => &mut self.equal,
            Category::Zero => &mut self.zero,
        }
    }

    pub fn get(&self, c: Category) -> usize {
        match c {
            Category::Increased => self.increased,
            Category::Decreased => self.decreased,
            Category::Equal => self.equal,
            Category::Zero => self.zero,
        }
    }

    pub fn total(&self) -> usize {
        self.increased + self.decreased + self.equal + self.zero
    }
}

/// One evaluated sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEval {
    pub id: usize,
    pub cer_ocr: f64,
    pub cer_corrected: f64,
    pub category: Category,
}

/// Corpus-level evaluation of a corrector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub before: Rates,
    pub after: Rates,
    pub categories: CategoryCounts,
    /// Category shares in percent, same order as `categories`.
    pub percentages: CategoryPercentages,
    pub n: usize,
    pub conventions: String,
    #[serde(skip)]
    pub sentences: Vec<SentenceEval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryPercentages {
    pub increased: f64,
    pub decreased: f64,
    pub equal: f64,
    pub zero: f64,
}

pub const CONVENTIONS: &str = "character unit: Unicode scalar value; word unit: runs of non-whitespace, \
no punctuation stripping; corpus rates micro-averaged (total edits / total reference length)";

/// A (reference, OCR output, corrected output) triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub reference: String,
    pub ocr: String,
    pub corrected: String,
}

impl Triple {
    pub fn new(reference: impl Into<String>, ocr: impl Into<String>, corrected: impl Into<String>) -> Self {
        Triple {
            reference: reference.into(),
            ocr: ocr.into(),
            corrected: corrected.into(),
        }
    }
}

pub fn report(triples: &[Triple]) -> Result<EvalReport> {
    if triples.is_empty() {
        return Err(Error::Metric("nothing to evaluate".into()));
    }
    let mut ref_chars = 0usize;
    let mut ref_words = 0usize;
    let (mut ocr_ce, mut cor_ce, mut ocr_we, mut cor_we) = (0usize, 0usize, 0usize, 0usize);
    let mut categories = CategoryCounts::default();
    let mut sentences = Vec::with_capacity(triples.len());

    for (id, t) in triples.iter().enumerate() {
        let n = t.reference.chars().count();
        if n == 0 {
            return Err(Error::Metric(format!("sentence {id} has an empty reference")));
        }
        let ocr_edits = edit_distance(&t.reference, &t.ocr);
        let cor_edits = edit_distance(&t.reference, &t.corrected);
        let category = categorize_distances(ocr_edits, cor_edits);
        categories.add(category);
        ref_chars += n;
        ocr_ce += ocr_edits;
        cor_ce += cor_edits;
        ref_words += tokenize_words(&t.reference).len();
        ocr_we += word_edit_distance(&t.reference, &t.ocr);
        cor_we += word_edit_distance(&t.reference, &t.corrected);
        sentences.push(SentenceEval {
            id,
            cer_ocr: ocr_edits as f64 / n as f64,
            cer_corrected: cor_edits as f64 / n as f64,
            category,
        });
    }

    if ref_words == 0 {
        return Err(Error::Metric("references contain no words".into()));
    }
    let n = triples.len();
    let pct = |c: usize| 100.0 * c as f64 / n as f64;
    Ok(EvalReport {
        before: Rates {
            cer: ocr_ce as f64 / ref_chars as f64,
            wer: ocr_we as f64 / ref_words as f64,
        },
        after: Rates {
            cer: cor_ce as f64 / ref_chars as f64,
            wer: cor_we as f64 / ref_words as f64,
        },
        percentages: CategoryPercentages {
            increased: pct(categories.increased),
            decreased: pct(categories.decreased),
            equal: pct(categories.equal),
            zero: pct(categories.zero),
        },
        categories,
        n,
        conventions: CONVENTIONS.to_string(),
        sentences,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-sentence table: `id, cer_ocr, cer_corrected, category`.
    pub fn sentence_tsv(&self) -> String {
        let mut out = String::from("id\tcer_ocr\tcer_corrected\tcategory\n");
        for s in &self.sentences {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{}\n",
                s.id, s.cer_ocr, s.cer_corrected, s.category
            ));
        }
        out
    }

    /// Bar-chart data, one row per category in the order
    /// increased, decreased, equal, zero.
    pub fn chart_csv(&self) -> String {
        let mut out = String::from("category,count,percent\n");
        for c in Category::ALL {
            let count = self.categories.get(c);
            out.push_str(&format!(
                "{},{},{:.4}\n",
                c,
                count,
                100.0 * count as f64 / self.n as f64
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        format!(
            "sentences: {}\nbefore: CER {:.2}%  WER {:.2}%\nafter:  CER {:.2}%  WER {:.2}%\n\
             increased {} ({:.2}%), decreased {} ({:.2}%), equal {} ({:.2}%), zero {} ({:.2}%)\n",
            self.n,
            100.0 * self.before.cer,
            100.0 * self.before.wer,
            100.0 * self.after.cer,
            100.0 * self.after.wer,
            self.categories.increased,
            self.percentages.increased,
            self.categories.decreased,
            self.percentages.decreased,
            self.categories.equal,
            self.percentages.equal,
            self.categories.zero,
            self.percentages.zero,
        )
    }
}
