//! LAS, HDLAS and the frequency / POS / language breakdowns.
//!
//! HDLAS counts a token as correct only when its labelled head is right and
//! its set of labelled dependents matches the gold set exactly.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conllu::{Sentence, Treebank};
use crate::error::{Error, Result};

/// POS categories left out of displayed breakdowns by default.
pub const SUPPRESSED_POS: [&str; 6] = ["INTJ", "NUM", "PART", "SCONJ", "SYM", "X"];

/// A gold sentence and its prediction over the same tokens.
#[derive(Clone, Copy, Debug)]
pub struct EvalPair<'a> {
    pub gold: &'a Sentence,
    pub predicted: &'a Sentence,
}

impl<'a> EvalPair<'a> {
    pub fn new(gold: &'a Sentence, predicted: &'a Sentence) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::contract(format!(
                "gold has {} tokens, prediction {}",
                gold.len(),
                predicted.len()
            )));
        }
        for (g, p) in gold.tokens.iter().zip(&predicted.tokens) {
            if g.form != p.form {
                return Err(Error::contract(format!(
                    "token {}: form {:?} differs from {:?}",
                    g.id, g.form, p.form
                )));
            }
        }
        Ok(EvalPair { gold, predicted })
    }

    /// Whether token `i` (0-based) has the right head and label.
    pub fn attachment_correct(&self, i: usize) -> bool {
        let (g, p) = (&self.gold.tokens[i], &self.predicted.tokens[i]);
        g.head == p.head && g.deprel == p.deprel
    }
}

/// Pairs up two treebanks sentence by sentence.
pub fn pair_treebanks<'a>(gold: &'a Treebank, predicted: &'a Treebank) -> Result<Vec<EvalPair<'a>>> {
    if gold.sentences.len() != predicted.sentences.len() {
        return Err(Error::contract(format!(
            "gold has {} sentences, prediction {}",
            gold.sentences.len(),
            predicted.sentences.len()
        )));
    }
    gold.sentences
        .iter()
        .zip(&predicted.sentences)
        .map(|(g, p)| EvalPair::new(g, p))
        .collect()
}

pub fn las(pairs: &[EvalPair]) -> Result<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for pair in pairs {
        total += pair.gold.len();
        correct += (0..pair.gold.len()).filter(|&i| pair.attachment_correct(i)).count();
    }
    if total == 0 {
        return Err(Error::Empty("no tokens to score".into()));
    }
    Ok(100.0 * correct as f64 / total as f64)
}

/// Labelled dependents of every node, sorted; index 0 is the root.
fn dependents(s: &Sentence) -> Vec<Vec<(usize, &str)>> {
    let mut out = vec![Vec::new(); s.len() + 1];
    for t in &s.tokens {
        if t.head <= s.len() {
            out[t.head].push((t.id, t.deprel.as_str()));
        }
    }
    out
}

/// HDLAS correctness of every token of a pair.
pub fn hdlas_tokens(pair: &EvalPair) -> Vec<bool> {
    let gold = dependents(pair.gold);
    let pred = dependents(pair.predicted);
    (0..pair.gold.len())
        .map(|i| pair.attachment_correct(i) && gold[i + 1] == pred[i + 1])
        .collect()
}

pub fn hdlas(pair: &EvalPair, token_index: usize) -> bool {
    hdlas_tokens(pair)[token_index]
}

/// Token count and score of one category.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub token_count: usize,
    pub score: f64,
}

/// HDLAS per category. The categoriser sees (pair index, token index).
pub fn hdlas_by<F>(pairs: &[EvalPair], mut categorize: F) -> BTreeMap<String, Cell>
where
    F: FnMut(usize, usize) -> String,
{
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (pi, pair) in pairs.iter().enumerate() {
        for (ti, ok) in hdlas_tokens(pair).into_iter().enumerate() {
            let e = counts.entry(categorize(pi, ti)).or_default();
            e.0 += 1;
            e.1 += usize::from(ok);
        }
    }
    counts
        .into_iter()
        .map(|(k, (n, c))| {
            (
                k,
                Cell {
                    token_count: n,
                    score: 100.0 * c as f64 / n as f64,
                },
            )
        })
        .collect()
}

/// floor(log10((count + 1) / (total + 1))), computed exactly in integers.
pub fn freq_class(count: usize, train_total: usize) -> i32 {
    let a = count as u128 + 1;
    let b = train_total as u128 + 1;
    let mut class = 0;
    if a >= b {
        let mut p = b * 10;
        while p <= a {
            class += 1;
            p *= 10;
        }
    } else {
        let mut scaled = a;
        while scaled < b {
            scaled *= 10;
            class -= 1;
        }
    }
    class
}

/// Form counts of a training treebank, case-sensitive.
#[derive(Clone, Debug, Default)]
pub struct FormCounts {
    pub counts: HashMap<String, usize>,
    pub total: usize,
}

impl FormCounts {
    pub fn new(train: &Treebank) -> Self {
        let mut counts = HashMap::new();
        for t in train.tokens() {
            *counts.entry(t.form.clone()).or_insert(0) += 1;
        }
        FormCounts {
            counts,
            total: train.token_count(),
        }
    }

    pub fn class(&self, form: &str) -> i32 {
        freq_class(self.counts.get(form).copied().unwrap_or(0), self.total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Frequency,
    Pos,
    Language,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Frequency => "frequency",
            Axis::Pos => "pos",
            Axis::Language => "language",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" => Ok(Axis::Frequency),
            "pos" => Ok(Axis::Pos),
            "language" => Ok(Axis::Language),
            _ => Err(Error::Config(format!("unknown axis {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BreakdownReport {
    pub axis: Axis,
    pub system_name: String,
    pub rows: BTreeMap<String, Cell>,
    /// Categories computed but hidden from display by default.
    pub suppressed: Vec<String>,
    pub macro_average_over: Vec<String>,
}

impl BreakdownReport {
    pub fn visible_rows(&self) -> impl Iterator<Item = (&String, &Cell)> {
        self.rows.iter().filter(|(k, _)| !self.suppressed.contains(k))
    }
}

/// HDLAS by frequency class of the gold form.
pub fn frequency_breakdown(pairs: &[EvalPair], counts: &FormCounts, system_name: &str) -> BreakdownReport {
    let rows = hdlas_by(pairs, |p, t| counts.class(&pairs[p].gold.tokens[t].form).to_string());
    BreakdownReport {
        axis: Axis::Frequency,
        system_name: system_name.to_owned(),
        rows,
        suppressed: Vec::new(),
        macro_average_over: Vec::new(),
    }
}

/// HDLAS by gold UPOS.
pub fn pos_breakdown(pairs: &[EvalPair], system_name: &str) -> BreakdownReport {
    let rows = hdlas_by(pairs, |p, t| pairs[p].gold.tokens[t].upos.clone());
    let suppressed = rows
        .keys()
        .filter(|k| SUPPRESSED_POS.contains(&k.as_str()))
        .cloned()
        .collect();
    BreakdownReport {
        axis: Axis::Pos,
        system_name: system_name.to_owned(),
        rows,
        suppressed,
        macro_average_over: Vec::new(),
    }
}

/// LAS per language.
pub fn language_breakdown(per_language: &[(String, Vec<EvalPair>)], system_name: &str) -> Result<BreakdownReport> {
    let mut rows = BTreeMap::new();
    for (lang, pairs) in per_language {
        let token_count = pairs.iter().map(|p| p.gold.len()).sum();
        rows.insert(
            lang.clone(),
            Cell {
                token_count,
                score: las(pairs)?,
            },
        );
    }
    Ok(BreakdownReport {
        axis: Axis::Language,
        system_name: system_name.to_owned(),
        macro_average_over: rows.keys().cloned().collect(),
        rows,
        suppressed: Vec::new(),
    })
}

/// Unweighted mean over languages.
pub fn macro_average(per_language: &BTreeMap<String, f64>) -> Result<f64> {
    if per_language.is_empty() {
        return Err(Error::Empty("macro average over no languages".into()));
    }
    Ok(per_language.values().sum::<f64>() / per_language.len() as f64)
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CsvRow {
    axis: String,
    category: String,
    token_count: usize,
    score: f64,
    system_name: String,
}

/// Writes `report` as CSV, via a temporary file.
pub fn emit_report(report: &BreakdownReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&tmp)?;
        w.write_record(["axis", "category", "token_count", "score", "system_name"])?;
        for (category, cell) in &report.rows {
            w.serialize(CsvRow {
                axis: report.axis.name().to_owned(),
                category: category.clone(),
                token_count: cell.token_count,
                score: cell.score,
                system_name: report.system_name.clone(),
            })?;
        }
        w.flush().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads back a CSV written by [`emit_report`].
pub fn read_report(path: impl AsRef<Path>) -> Result<BreakdownReport> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let mut rows = BTreeMap::new();
    let mut axis = None;
    let mut system_name = String::new();
    for row in r.deserialize() {
        let row: CsvRow = row?;
        axis = Some(row.axis.parse::<Axis>()?);
        system_name = row.system_name;
        rows.insert(
            row.category,
            Cell {
                token_count: row.token_count,
                score: row.score,
            },
        );
    }
    let axis = axis.unwrap_or(Axis::Frequency);
    let suppressed = if axis == Axis::Pos {
        rows.keys()
            .filter(|k| SUPPRESSED_POS.contains(&k.as_str()))
            .cloned()
            .collect()
    } else {
        Vec::new()
    };
    let macro_average_over = if axis == Axis::Language {
        rows.keys().cloned().collect()
    } else {
        Vec::new()
    };
    Ok(BreakdownReport {
        axis,
        system_name,
        rows,
        suppressed,
        macro_average_over,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::Token;

    fn sent(spec: &[(usize, &str)]) -> Sentence {
        Sentence::new(
            spec.iter()
                .enumerate()
                .map(|(i, (h, l))| Token::new(i + 1, &format!("w{i}"), "NOUN", *h, l))
                .collect(),
        )
    }

    #[test]
    fn las_basics() {
        let gold = sent(&[(2, "det"), (0, "root")]);
        let mut pred = gold.clone();
        assert_eq!(las(&[EvalPair::new(&gold, &pred).unwrap()]).unwrap(), 100.0);
        pred.tokens[0].head = 0;
        assert_eq!(las(&[EvalPair::new(&gold, &pred).unwrap()]).unwrap(), 50.0);
        let short = sent(&[(0, "root")]);
        assert!(EvalPair::new(&gold, &short).is_err());
        assert!(las(&[]).is_err());
    }

    #[test]
    fn hdlas_chain_example() {
        let gold = sent(&[(0, "a"), (1, "b")]);
        let pred = sent(&[(0, "a"), (1, "c")]);
        let pair = EvalPair::new(&gold, &pred).unwrap();
        assert!(!hdlas(&pair, 0));
        assert!(!hdlas(&pair, 1));
        let same = EvalPair::new(&gold, &gold).unwrap();
        assert_eq!(hdlas_tokens(&same), vec![true, true]);
    }

    #[test]
    fn freq_class_identities() {
        assert_eq!(freq_class(0, 999), -3);
        assert_eq!(freq_class(999, 999), 0);
        assert_eq!(freq_class(9, 999), -2);
        assert_eq!(freq_class(0, 0), 0);
        for n in [9usize, 99, 999, 9999, 99999] {
            assert_eq!(freq_class(n, n), 0);
            assert_eq!(freq_class(0, n), -((n + 1) as f64).log10().round() as i32);
        }
    }

    #[test]
    fn pos_breakdown_flags_small_categories() {
        let mut gold = sent(&[(0, "root"), (1, "nummod")]);
        gold.tokens[1].upos = "NUM".into();
        let pair = EvalPair::new(&gold, &gold).unwrap();
        let report = pos_breakdown(&[pair], "s");
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.suppressed, vec!["NUM".to_owned()]);
        assert_eq!(report.visible_rows().count(), 1);
        assert_eq!(report.rows.values().map(|c| c.token_count).sum::<usize>(), 2);
    }

    #[test]
    fn macro_average_examples() {
        let mut m = BTreeMap::new();
        m.insert("fi".to_owned(), 50.0);
        assert_eq!(macro_average(&m).unwrap(), 50.0);
        m.insert("de".to_owned(), 100.0);
        assert_eq!(macro_average(&m).unwrap(), 75.0);
        assert!(macro_average(&BTreeMap::new()).is_err());
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut rows = BTreeMap::new();
        rows.insert(
            "-3".to_owned(),
            Cell {
                token_count: 7,
                score: 100.0 / 3.0,
            },
        );
        rows.insert(
            "0".to_owned(),
            Cell {
                token_count: 1,
                score: 0.1 + 0.2,
            },
        );
        let report = BreakdownReport {
            axis: Axis::Frequency,
            system_name: "+char".into(),
            rows,
            suppressed: vec![],
            macro_average_over: vec![],
        };
        emit_report(&report, &path).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);

        let empty = BreakdownReport {
            rows: BTreeMap::new(),
            ..report
        };
        emit_report(&empty, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "axis,category,token_count,score,system_name\n");
    }
}
