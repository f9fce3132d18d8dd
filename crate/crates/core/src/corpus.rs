//! Clean-corpus handling: character profiles, sentence chunking, partitioning
//! and replication.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Characters that close a sentence. Newlines also end a sentence but are
/// never part of it.
pub const SENTENCE_BOUNDARIES: &[char] = &['.', '!', '?', '…', '。', '॥'];

/// Closing marks that stay attached to the sentence they follow.
const TRAILING_CLOSERS: &[char] = &['"', '\'', '”', '’', '»', ')', ']'];

pub const DEFAULT_CHUNK_LIMIT: usize = 230;
pub const DEFAULT_MIN_COUNT: u64 = 5;

/// Chunk limit used for a language tag when none is configured explicitly.
pub fn default_chunk_limit(language: &str) -> usize {
    match language.to_ascii_lowercase().as_str() {
        "ru" | "rus" | "russian" => 140,
        "te" | "tel" | "telugu" => 90,
        _ => DEFAULT_CHUNK_LIMIT,
    }
}

/// Character frequencies of a corpus and the alphabet retained for
/// replacements and insertions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharsetProfile {
    pub language: String,
    pub min_count: u64,
    pub char_counts: BTreeMap<char, u64>,
    /// Retained characters in code-point order.
    pub alphabet: Vec<char>,
}

fn is_layout(c: char) -> bool {
    matches!(c, '\n' | '\r' | '\t')
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    language: String,
    min_count: u64,
    counts: BTreeMap<char, u64>,
}

impl CharsetProfile {
    fn from_counts(language: String, min_count: u64, char_counts: BTreeMap<char, u64>) -> Self {
        let alphabet = char_counts
            .iter()
            .filter(|(&c, &n)| n >= min_count && !is_layout(c))
            .map(|(&c, _)| c)
            .collect();
        CharsetProfile {
            language,
            min_count,
            char_counts,
            alphabet,
        }
    }

    pub fn contains(&self, c: char) -> bool {
        self.alphabet.binary_search(&c).is_ok()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ProfileFile {
            language: self.language.clone(),
            min_count: self.min_count,
            counts: self.char_counts.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ProfileFile = serde_json::from_str(s)?;
        let profile = Self::from_counts(file.language, file.min_count, file.counts);
        if profile.alphabet.is_empty() {
            return Err(Error::Profile("profile retains no characters".into()));
        }
        Ok(profile)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Counts every character of `text` and keeps those seen at least
/// `min_count` times.
///
/// Newlines, carriage returns and tabs are counted but never retained: they
/// are layout, not replacement material.
pub fn build_charset_profile(text: &str, min_count: u64, language: &str) -> Result<CharsetProfile> {
    if text.is_empty() {
        return Err(Error::Profile("cannot profile empty text".into()));
    }
    let mut counts = BTreeMap::new();
    for c in text.chars() {
        *counts.entry(c).or_insert(0u64) += 1;
    }
    let profile = CharsetProfile::from_counts(language.to_string(), min_count, counts);
    if profile.alphabet.is_empty() {
        return Err(Error::Profile(format!("no character reaches min_count {min_count}")));
    }
    Ok(profile)
}

/// A bounded piece of text with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chunk {
    pub id: u64,
    pub text: String,
    pub char_len: usize,
    pub language: String,
}

impl Chunk {
    pub fn new(id: u64, text: impl Into<String>, language: impl Into<String>) -> Self {
        let text = text.into();
        let char_len = text.chars().count();
        Chunk {
            id,
            text,
            char_len,
            language: language.into(),
        }
    }
}

/// Splits text into trimmed sentences, in order.
///
/// A sentence ends at a boundary character (plus any run of further
/// boundaries and closing quotes or brackets) or at a newline.
pub fn split_sentences<'a>(text: &'a str, boundaries: &[char]) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let end = if c == '\n' {
            Some((i, i + 1))
        } else if boundaries.contains(&c) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = iter.peek() {
                if d != '\n' && (boundaries.contains(&d) || TRAILING_CLOSERS.contains(&d)) {
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            Some((end, end))
        } else {
            None
        };
        if let Some((sentence_end, next_start)) = end {
            let s = text[start..sentence_end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = next_start;
        }
    }
    let s = text[start..].trim();
    if !s.is_empty() {
        out.push(s);
    }
    out
}

/// Chunking parameters.
#[derive(Debug, Clone)]
pub struct ChunkOptions {
    pub limit: usize,
    pub language: String,
    pub boundaries: Vec<char>,
    /// First id handed out.
    pub first_id: u64,
}

impl ChunkOptions {
    pub fn new(limit: usize) -> Self {
        ChunkOptions {
            limit,
            language: String::new(),
            boundaries: SENTENCE_BOUNDARIES.to_vec(),
            first_id: 0,
        }
    }

    pub fn for_language(language: &str) -> Self {
        ChunkOptions {
            language: language.to_string(),
            ..Self::new(default_chunk_limit(language))
        }
    }
}

/// Greedily packs sentences, joined by a single space, into chunks of at most
/// `limit` characters.
pub fn chunk_corpus(text: &str, limit: usize) -> Result<Vec<Chunk>> {
    chunk_with(text, &ChunkOptions::new(limit))
}

pub fn chunk_with(text: &str, opts: &ChunkOptions) -> Result<Vec<Chunk>> {
    if opts.limit == 0 {
        return Err(Error::Parameter("chunk limit must be at least 1".into()));
    }
    let limit = opts.limit;
    let mut texts: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut current_len = 0usize;

    for sentence in split_sentences(text, &opts.boundaries) {
        let len = sentence.chars().count();
        if len > limit {
            if current_len > 0 {
                texts.push(std::mem::take(&mut current));
            }
            // Hard split; the tail keeps packing like an ordinary sentence.
            let chars: Vec<char> = sentence.chars().collect();
            let mut pieces = chars.chunks(limit).peekable();
            while let Some(piece) = pieces.next() {
                if pieces.peek().is_some() {
                    texts.push(piece.iter().collect());
                } else {
                    current = piece.iter().collect();
                    current_len = piece.len();
                }
            }
        } else if current_len == 0 {
            current.push_str(sentence);
            current_len = len;
        } else if current_len + 1 + len <= limit {
            current.push(' ');
            current.push_str(sentence);
            current_len += 1 + len;
        } else {
            texts.push(std::mem::replace(&mut current, sentence.to_string()));
            current_len = len;
        }
    }
    if current_len > 0 {
        texts.push(current);
    }

    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| Chunk::new(opts.first_id + i as u64, t, opts.language.clone()))
        .collect())
}

/// The four disjoint partitions of a chunk list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    /// Held out for error-distribution extraction.
    pub error_extraction: Vec<Chunk>,
    pub train: Vec<Chunk>,
    pub validation: Vec<Chunk>,
    pub test: Vec<Chunk>,
    pub seed: u64,
}

/// Partition sizes for `n` chunks: 20% held out, the rest split 8:1:1.
pub fn split_sizes(n: usize) -> (usize, usize, usize, usize) {
    let held = (n as f64 * 0.2).round() as usize;
    let rest = n - held;
    let val = (rest as f64 * 0.1).round() as usize;
    let test = val;
    (held, rest - val - test, val, test)
}

/// Shuffles chunks with a seeded generator and cuts them into
/// error-extraction / train / validation / test partitions.
///
/// The result depends only on the multiset of chunks and the seed, not on
/// the input order.
pub fn split_corpus(chunks: &[Chunk], seed: u64) -> Result<CorpusSplit> {
    if chunks.len() < 10 {
        return Err(Error::Split(format!(
            "need at least 10 chunks to split, got {}",
            chunks.len()
        )));
    }
    let mut order: Vec<&Chunk> = chunks.iter().collect();
    order.sort();
    order.shuffle(&mut seed::rng(seed));

    let (held, train, val, _) = split_sizes(order.len());
    let mut it = order.into_iter().cloned();
    let error_extraction = it.by_ref().take(held).collect();
    let train = it.by_ref().take(train).collect();
    let validation = it.by_ref().take(val).collect();
    let test = it.collect();
    Ok(CorpusSplit {
        error_extraction,
        train,
        validation,
        test,
        seed,
    })
}

/// Replicates every chunk `k` times. The first copy keeps its id; further
/// copies get fresh ids above the current maximum. Copies of one chunk are
/// adjacent in the output.
pub fn augment(chunks: &[Chunk], k: usize) -> Result<Vec<Chunk>> {
    if k == 0 {
        return Err(Error::Parameter("augmentation factor must be at least 1".into()));
    }
    let mut next_id = chunks.iter().map(|c| c.id + 1).max().unwrap_or(0);
    let mut out = Vec::with_capacity(chunks.len() * k);
    for chunk in chunks {
        out.push(chunk.clone());
        for _ in 1..k {
            let mut copy = chunk.clone();
            copy.id = next_id;
            next_id += 1;
            out.push(copy);
        }
    }
    Ok(out)
}

/// Writes one chunk per line.
pub fn write_chunk_file(path: impl AsRef<Path>, chunks: &[Chunk]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for chunk in chunks {
        if chunk.text.contains('\n') {
            return Err(Error::Parameter(format!("chunk {} contains a newline", chunk.id)));
        }
        writeln!(out, "{}", chunk.text)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a chunk file; the zero-based line index becomes the chunk id.
pub fn read_chunk_file(path: impl AsRef<Path>, language: &str) -> Result<Vec<Chunk>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut chunks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        chunks.push(Chunk::new(i as u64, line, language));
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chunks(n: usize) -> Vec<Chunk> {
        (0..n)
            .map(|i| Chunk::new(i as u64, format!("chunk {i}"), "en"))
            .collect()
    }

    #[test]
    fn profile_counts_and_threshold() {
        let p = build_charset_profile("aaab", 2, "en").unwrap();
        assert_eq!(p.alphabet, vec!['a']);
        assert_eq!(p.char_counts[&'a'], 3);
        assert_eq!(p.char_counts[&'b'], 1);

        let p = build_charset_profile("abc", 0, "en").unwrap();
        assert_eq!(p.alphabet, vec!['a', 'b', 'c']);
    }

    #[test]
    fn profile_rejects_empty() {
        assert!(matches!(build_charset_profile("", 1, "en"), Err(Error::Profile(_))));
    }

    #[test]
    fn profile_json_round_trip() {
        let p = build_charset_profile("hello world, hello!", 2, "en").unwrap();
        let back = CharsetProfile::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
        let v: serde_json::Value = serde_json::from_str(&p.to_json().unwrap()).unwrap();
        assert_eq!(v["counts"]["l"], 5);
        assert_eq!(v["min_count"], 2);
    }

    #[test]
    fn two_long_sentences_do_not_pack() {
        let s1 = format!("{}.", "a".repeat(119));
        let s2 = format!("{}.", "b".repeat(119));
        let out = chunk_corpus(&format!("{s1} {s2}"), 230).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].char_len, 120);
        assert_eq!(out[1].char_len, 120);
    }

    #[test]
    fn short_sentences_pack() {
        let out = chunk_corpus("Hi. Ok.", 230).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text, "Hi. Ok.");
    }

    #[test]
    fn overlong_sentence_is_hard_split() {
        let out = chunk_corpus(&"x".repeat(300), 230).unwrap();
        let lens: Vec<_> = out.iter().map(|c| c.char_len).collect();
        assert_eq!(lens, vec![230, 70]);
    }

    #[test]
    fn sentence_splitting_keeps_closers_and_runs() {
        let s = split_sentences("He said \"no.\" Then?! left…\nNew line", SENTENCE_BOUNDARIES);
        assert_eq!(s, vec!["He said \"no.\"", "Then?!", "left…", "New line"]);
    }

    #[test]
    fn empty_text_gives_no_chunks() {
        assert!(chunk_corpus("", 10).unwrap().is_empty());
        assert!(chunk_corpus("  \n ", 10).unwrap().is_empty());
    }

    #[test]
    fn language_defaults() {
        assert_eq!(default_chunk_limit("en"), 230);
        assert_eq!(default_chunk_limit("ru"), 140);
        assert_eq!(default_chunk_limit("te"), 90);
    }

    #[test]
    fn split_of_100() {
        let s = split_corpus(&chunks(100), 3).unwrap();
        assert_eq!(
            (
                s.error_extraction.len(),
                s.train.len(),
                s.validation.len(),
                s.test.len()
            ),
            (20, 64, 8, 8)
        );
        assert_eq!(s, split_corpus(&chunks(100), 3).unwrap());
        assert_ne!(s.train, split_corpus(&chunks(100), 4).unwrap().train);
    }

    #[test]
    fn split_rejects_small_input() {
        assert!(matches!(split_corpus(&chunks(5), 0), Err(Error::Split(_))));
        let s = split_corpus(&chunks(10), 0).unwrap();
        assert!(!s.validation.is_empty() && !s.test.is_empty() && !s.error_extraction.is_empty());
    }

    #[test]
    fn augment_identity_and_fresh_ids() {
        let input = chunks(50);
        assert_eq!(augment(&input, 1).unwrap(), input);
        let out = augment(&input, 4).unwrap();
        assert_eq!(out.len(), 200);
        for c in &input {
            assert_eq!(out.iter().filter(|o| o.text == c.text).count(), 4);
        }
        let mut ids: Vec<_> = out.iter().map(|c| c.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 200);
        assert!(matches!(augment(&input, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn chunk_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chunks.txt");
        let input = chunk_corpus("One. Two! Three?", 6).unwrap();
        write_chunk_file(&path, &input).unwrap();
        assert_eq!(read_chunk_file(&path, "").unwrap(), input);
    }

    fn sentence() -> impl Strategy<Value = String> {
        (1usize..60).prop_map(|n| format!("{}.", "w".repeat(n)))
    }

    proptest! {
        #[test]
        fn chunks_never_exceed_limit(lens in prop::collection::vec(1usize..400, 0..40), limit in 1usize..250) {
            let text: Vec<String> = lens.iter().map(|&n| format!("{}.", "z".repeat(n))).collect();
            for c in chunk_corpus(&text.join(" "), limit).unwrap() {
                prop_assert!(c.char_len <= limit);
                prop_assert_eq!(c.char_len, c.text.chars().count());
            }
        }

        #[test]
        fn chunking_round_trips_sentence_stream(sentences in prop::collection::vec(sentence(), 1..40)) {
            let text = sentences.join(" ");
            let chunks = chunk_corpus(&text, 90).unwrap();
            let joined: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
            prop_assert_eq!(joined.join(" "), split_sentences(&text, SENTENCE_BOUNDARIES).join(" "));
        }

        #[test]
        fn split_ignores_input_order(seed in any::<u64>(), rot in 0usize..30) {
            let base = chunks(30);
            let mut rotated = base.clone();
            rotated.rotate_left(rot);
            rotated.reverse();
            prop_assert_eq!(split_corpus(&base, seed).unwrap(), split_corpus(&rotated, seed).unwrap());
        }

        #[test]
        fn augment_length_law(n in 0usize..40, k in 1usize..=8) {
            prop_assert_eq!(augment(&chunks(n), k).unwrap().len(), n * k);
        }
    }
}
