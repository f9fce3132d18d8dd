//! Character error model learned from aligned (clean, OCR) pairs.
//!
//! `P_sub(i→j)` and `P_del(i)` are per occurrence of the clean character `i`;
//! insertions use one global rate per interior gap and a distribution over
//! the inserted characters. Scaling multiplies every probability by
//! `target / base_cer`, which moves the expected CER to the target as long as
//! no row saturates.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::align::{Alignment, EditOp};
use crate::error::{Error, Result};
use crate::inject::{Injected, InjectionStats};
use crate::seed;

pub const FORMAT_VERSION: u32 = 1;

/// Raw counts behind the probabilities, kept for auditing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub occurrences: BTreeMap<char, u64>,
    pub sub: BTreeMap<char, BTreeMap<char, u64>>,
    pub del: BTreeMap<char, u64>,
    pub ins: BTreeMap<char, u64>,
    pub gaps: u64,
    pub clean_chars: u64,
    pub edit_ops: u64,
}

impl ErrorCounts {
    pub fn add(&mut self, alignment: &Alignment) {
        let mut clean_len = 0u64;
        for op in &alignment.ops {
            if let Some(c) = op.clean() {
                clean_len += 1;
                *self.occurrences.entry(c).or_default() += 1;
            }
            match *op {
                EditOp::Match(_) => {}
                EditOp::Substitute(i, j) => *self.sub.entry(i).or_default().entry(j).or_default() += 1,
                EditOp::Delete(i) => *self.del.entry(i).or_default() += 1,
                EditOp::Insert(j) => *self.ins.entry(j).or_default() += 1,
            }
            self.edit_ops += u64::from(op.is_edit());
        }
        self.clean_chars += clean_len;
        self.gaps += clean_len.saturating_sub(1);
    }

    pub fn merge(&mut self, other: &ErrorCounts) {
        for (c, n) in &other.occurrences {
            *self.occurrences.entry(*c).or_default() += n;
        }
        for (i, row) in &other.sub {
            let dst = self.sub.entry(*i).or_default();
            for (j, n) in row {
                *dst.entry(*j).or_default() += n;
            }
        }
        for (c, n) in &other.del {
            *self.del.entry(*c).or_default() += n;
        }
        for (c, n) in &other.ins {
            *self.ins.entry(*c).or_default() += n;
        }
        self.gaps += other.gaps;
        self.clean_chars += other.clean_chars;
        self.edit_ops += other.edit_ops;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrErrorModel {
    pub base_cer: f64,
    pub sub: BTreeMap<char, BTreeMap<char, f64>>,
    pub del: BTreeMap<char, f64>,
    pub ins_rate: f64,
    pub ins_dist: BTreeMap<char, f64>,
    #[serde(default)]
    pub counts: ErrorCounts,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    #[serde(flatten)]
    model: OcrErrorModel,
}

/// Probability estimates from pooled counts.
pub fn extract(alignments: &[Alignment]) -> Result<OcrErrorModel> {
    if alignments.is_empty() {
        return Err(Error::Model("no alignments to extract from".into()));
    }
    let mut counts = ErrorCounts::default();
    for a in alignments {
        counts.add(a);
    }
    from_counts(counts)
}

pub fn from_counts(counts: ErrorCounts) -> Result<OcrErrorModel> {
    if counts.clean_chars == 0 {
        return Err(Error::Model("alignments contain no clean characters".into()));
    }
    if counts.clean_chars < 1000 {
        log::warn!(
            "error model extracted from only {} clean characters",
            counts.clean_chars
        );
    }
    let occ = |c: &char| counts.occurrences.get(c).copied().unwrap_or(0).max(1) as f64;
    let sub = counts
        .sub
        .iter()
        .map(|(i, row)| (*i, row.iter().map(|(j, n)| (*j, *n as f64 / occ(i))).collect()))
        .collect();
    let del = counts.del.iter().map(|(i, n)| (*i, *n as f64 / occ(i))).collect();
    let total_ins: u64 = counts.ins.values().sum();
    let ins_rate = if counts.gaps == 0 {
        0.0
    } else {
        (total_ins as f64 / counts.gaps as f64).min(1.0)
    };
    let ins_dist = if total_ins == 0 {
        BTreeMap::new()
    } else {
        counts
            .ins
            .iter()
            .map(|(c, n)| (*c, *n as f64 / total_ins as f64))
            .collect()
    };
    Ok(OcrErrorModel {
        base_cer: counts.edit_ops as f64 / counts.clean_chars as f64,
        sub,
        del,
        ins_rate,
        ins_dist,
        counts,
    })
}

impl OcrErrorModel {
    /// A model from explicit probabilities; counts stay empty.
    pub fn from_probabilities(
        sub: BTreeMap<char, BTreeMap<char, f64>>,
        del: BTreeMap<char, f64>,
        ins_rate: f64,
        ins_dist: BTreeMap<char, f64>,
        base_cer: f64,
    ) -> Result<Self> {
        let m = OcrErrorModel {
            base_cer,
            sub,
            del,
            ins_rate,
            ins_dist,
            counts: ErrorCounts::default(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Probability that clean character `c` is substituted or deleted.
    pub fn error_mass(&self, c: char) -> f64 {
        self.sub.get(&c).map_or(0.0, |r| r.values().sum::<f64>()) + self.del.get(&c).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Model(what));
        if !(self.base_cer >= 0.0 && self.base_cer.is_finite()) {
            return bad(format!("base_cer {} is not a non-negative number", self.base_cer));
        }
        let all_probs = self
            .sub
            .values()
            .flat_map(|r| r.values())
            .chain(self.del.values())
            .chain(self.ins_dist.values());
        for &p in all_probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        let chars = self.sub.keys().chain(self.del.keys());
        for &c in chars {
            let mass = self.error_mass(c);
            if mass > 1.0 + 1e-9 {
                return bad(format!("error mass {mass} for {c:?} exceeds 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.ins_rate) {
            return bad(format!("insertion rate {} outside [0, 1]", self.ins_rate));
        }
        if self.ins_rate > 0.0 {
            let total: f64 = self.ins_dist.values().sum();
            if (total - 1.0).abs() > 1e-6 {
                return bad(format!("insertion distribution sums to {total}"));
            }
        }
        Ok(())
    }

    /// Expected CER of this model on `text`: error mass per character plus
    /// insertions over the interior gaps.
    pub fn expected_cer(&self, text: &str) -> f64 {
        let n = text.chars().count();
        if n == 0 {
            return 0.0;
        }
        let mass: f64 = text.chars().map(|c| self.error_mass(c)).sum();
        (mass + self.ins_rate * (n - 1) as f64) / n as f64
    }

    pub fn scale(&self, target_cer: f64) -> Result<OcrErrorModel> {
        self.scale_with_report(target_cer).map(|(m, _)| m)
    }

    /// Scales every probability by `target / base_cer`. Returns the
    /// characters whose rows had to be renormalized to 1.
    pub fn scale_with_report(&self, target_cer: f64) -> Result<(OcrErrorModel, Vec<char>)> {
        if !(target_cer >= 0.0 && target_cer.is_finite()) {
            return Err(Error::Parameter(format!(
                "target CER {target_cer} must be non-negative"
            )));
        }
        if self.base_cer == 0.0 {
            if target_cer == 0.0 {
                return Ok((self.clone(), Vec::new()));
            }
            return Err(Error::Model("base CER is 0; nothing to scale".into()));
        }
        let s = target_cer / self.base_cer;
        let mut out = self.clone();
        out.base_cer = target_cer;
        out.sub.values_mut().flat_map(|r| r.values_mut()).for_each(|p| *p *= s);
        out.del.values_mut().for_each(|p| *p *= s);
        out.ins_rate = self.ins_rate * s;
        if out.ins_rate > 1.0 {
            log::warn!("insertion rate {} clamped to 1", out.ins_rate);
            out.ins_rate = 1.0;
        }

        let mut clamped = Vec::new();
        let chars: Vec<char> = out.sub.keys().chain(out.del.keys()).copied().collect();
        for c in chars {
            let mass = out.error_mass(c);
            if mass > 1.0 {
                if let Some(r) = out.sub.get_mut(&c) {
                    r.values_mut().for_each(|p| *p /= mass);
                }
                if let Some(p) = out.del.get_mut(&c) {
                    *p /= mass;
                }
                if !clamped.contains(&c) {
                    clamped.push(c);
                }
            }
        }
        clamped.sort_unstable();
        if !clamped.is_empty() {
            log::warn!(
                "scaling by {s:.3} saturated {} row(s) ({}); realized CER will fall short of the target",
                clamped.len(),
                clamped.iter().collect::<String>()
            );
        }
        Ok((out, clamped))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            version: FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("error model: {e}")))?;
        match v.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Incompatible(format!(
                    "error model version {v}, expected {FORMAT_VERSION}"
                )))
            }
            None => return Err(Error::Parse("error model: missing version".into())),
        }
        let file: ModelFile = serde_json::from_value(v).map_err(|e| Error::Parse(format!("error model: {e}")))?;
        file.model.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Per-character outcome table: cumulative substitution bounds followed by
/// the deletion bound.
struct Row {
    subs: Vec<(f64, char)>,
    delete_below: f64,
}

fn cumulative(dist: &BTreeMap<char, f64>) -> Vec<(f64, char)> {
    let mut acc = 0.0;
    dist.iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| {
            acc += p;
            (acc, c)
        })
        .collect()
}

fn pick(table: &[(f64, char)], u: f64) -> Option<char> {
    let k = table.partition_point(|&(bound, _)| bound <= u);
    table.get(k).or(table.last()).map(|&(_, c)| c)
}

/// Scales the model to `target_p`, then draws per character (substitute,
/// delete or keep) and per interior gap (insert or not).
pub fn inject_model(text: &str, model: &OcrErrorModel, target_p: f64, seed: u64) -> Result<Injected> {
    let scaled = model.scale(target_p)?;
    Ok(inject_scaled(text, &scaled, seed))
}

/// Injection with a model already at the desired rate.
pub fn inject_scaled(text: &str, model: &OcrErrorModel, seed: u64) -> Injected {
    let mut rows: HashMap<char, Row> = HashMap::new();
    for c in model.sub.keys().chain(model.del.keys()) {
        rows.entry(*c).or_insert_with(|| {
            let subs = model.sub.get(c).map(cumulative).unwrap_or_default();
            let sub_mass = subs.last().map_or(0.0, |&(b, _)| b);
            Row {
                subs,
                delete_below: sub_mass + model.del.get(c).copied().unwrap_or(0.0),
            }
        });
    }
    let ins = cumulative(&model.ins_dist);
    let mut rng = seed::rng(seed);
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    let mut stats = InjectionStats::default();

    for (k, &c) in chars.iter().enumerate() {
        let u: f64 = rng.gen();
        match rows.get(&c) {
            Some(row) if u < row.delete_below => {
                let sub_mass = row.subs.last().map_or(0.0, |&(b, _)| b);
                if u < sub_mass {
                    out.push(pick(&row.subs, u).unwrap_or(c));
                    stats.substitutions += 1;
                } else {
                    stats.deletions += 1;
                }
            }
            _ => out.push(c),
        }
        if k + 1 < chars.len() {
            let v: f64 = rng.gen();
            if v < model.ins_rate {
                if let Some(i) = pick(&ins, rng.gen::<f64>() * ins.last().map_or(0.0, |&(b, _)| b)) {
                    out.push(i);
                    stats.insertions += 1;
                }
            }
        }
    }
    Injected { text: out, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::align;
    use crate::metrics::cer;

    fn shift_model(p: f64) -> OcrErrorModel {
        // Every lowercase letter turns into the next one with probability p.
        let sub = ('a'..='z')
            .map(|c| {
                let next = if c == 'z' { 'a' } else { (c as u8 + 1) as char };
                (c, BTreeMap::from([(next, p)]))
            })
            .collect();
        OcrErrorModel::from_probabilities(sub, BTreeMap::new(), 0.0, BTreeMap::new(), p).unwrap()
    }

    #[test]
    fn error_free_extraction() {
        let m = extract(&[align("hello", "hello"), align("world", "world")]).unwrap();
        assert_eq!(m.base_cer, 0.0);
        assert!(m.sub.is_empty() && m.del.is_empty());
        assert_eq!(m.ins_rate, 0.0);
    }

    #[test]
    fn substitution_counting() {
        let mut counts = ErrorCounts::default();
        let clean = "a".repeat(100);
        let ocr = format!("{}{}", "o".repeat(5), "a".repeat(95));
        counts.add(&align(&clean, &ocr));
        let m = from_counts(counts).unwrap();
        assert!((m.sub[&'a'][&'o'] - 0.05).abs() < 1e-12);
        assert!((m.base_cer - 0.05).abs() < 1e-12);
    }

    #[test]
    fn insertion_rate_counting() {
        let mut counts = ErrorCounts {
            gaps: 1000,
            clean_chars: 1001,
            ..ErrorCounts::default()
        };
        counts.ins.insert('x', 10);
        counts.edit_ops = 10;
        let m = from_counts(counts).unwrap();
        assert!((m.ins_rate - 0.01).abs() < 1e-12);
        assert_eq!(m.ins_dist[&'x'], 1.0);
    }

    #[test]
    fn empty_extraction_fails() {
        assert!(matches!(extract(&[]), Err(Error::Model(_))));
    }

    #[test]
    fn scale_identity_and_doubling() {
        let mut m = shift_model(0.01);
        m.del.insert('q', 0.004);
        m.ins_rate = 0.002;
        m.ins_dist.insert('x', 1.0);
        m.base_cer = 0.02;
        assert_eq!(m.scale(0.02).unwrap(), m);
        let d = m.scale(0.04).unwrap();
        assert_eq!(d.sub[&'a'][&'b'], 0.02);
        assert_eq!(d.del[&'q'], 0.008);
        assert_eq!(d.ins_rate, 0.004);
        assert_eq!(d.base_cer, 0.04);
    }

    #[test]
    fn saturated_rows_are_renormalized() {
        let sub = BTreeMap::from([('a', BTreeMap::from([('o', 0.4), ('e', 0.2)]))]);
        let m = OcrErrorModel::from_probabilities(sub, BTreeMap::new(), 0.0, BTreeMap::new(), 0.1).unwrap();
        let (s, clamped) = m.scale_with_report(0.2).unwrap();
        assert_eq!(clamped, vec!['a']);
        assert!((s.error_mass('a') - 1.0).abs() < 1e-12);
        assert!((s.sub[&'a'][&'o'] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_base_cannot_scale_up() {
        let m = extract(&[align("hello", "hello")]).unwrap();
        assert!(matches!(m.scale(0.05), Err(Error::Model(_))));
        assert_eq!(m.scale(0.0).unwrap(), m);
    }

    #[test]
    fn zero_target_is_identity() {
        let m = shift_model(0.05);
        let out = inject_model("the quick brown fox", &m, 0.0, 9).unwrap();
        assert_eq!(out.text, "the quick brown fox");
    }

    #[test]
    fn shift_model_calibration() {
        let m = shift_model(0.05);
        let text: String = "abcdefghijklmnopqrstuvwxyz".repeat(8);
        let total: f64 = (0..2000u64)
            .map(|k| cer(&text, &inject_model(&text, &m, 0.05, k).unwrap().text).unwrap())
            .sum();
        let mean = total / 2000.0;
        assert!((mean - 0.05).abs() < 0.005, "{mean}");
    }

    #[test]
    fn deterministic_per_seed() {
        let m = shift_model(0.1);
        let a = inject_model("some text here", &m, 0.1, 3).unwrap();
        let b = inject_model("some text here", &m, 0.1, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_and_version() {
        let mut m = extract(&[align("the cat sat on the mat", "the cot sat on tbe mat!")]).unwrap();
        m.base_cer = 0.25;
        let text = m.to_json().unwrap();
        assert_eq!(OcrErrorModel::from_json(&text).unwrap(), m);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["version", "base_cer", "sub", "del", "ins_rate", "ins_dist", "counts"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let bumped = text.replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(OcrErrorModel::from_json(&bumped), Err(Error::Incompatible(_))));
    }

    #[test]
    fn invalid_models_rejected() {
        let sub = BTreeMap::from([('a', BTreeMap::from([('o', 0.9)]))]);
        let del = BTreeMap::from([('a', 0.2)]);
        assert!(OcrErrorModel::from_probabilities(sub, del, 0.0, BTreeMap::new(), 0.1).is_err());
        assert!(
            OcrErrorModel::from_probabilities(BTreeMap::new(), BTreeMap::new(), 0.1, BTreeMap::new(), 0.1).is_err()
        );
    }

    #[test]
    fn expected_cer_counts_gaps() {
        let mut m = shift_model(0.1);
        m.ins_rate = 0.1;
        m.ins_dist.insert('x', 1.0);
        // 5 letters at 0.1 each plus 4 gaps at 0.1, over 5 characters.
        assert!((m.expected_cer("abcde") - 0.18).abs() < 1e-12);
    }
}
