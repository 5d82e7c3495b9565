//! Generated data: random dependency trees and a small agglutinative toy
//! language whose case suffixes determine dependency labels.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::conllu::{Sentence, Token, Treebank};
use crate::representation::Pretrained;

/// Heads (index 0 unused) of a random tree with a single root attachment.
pub fn random_heads(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n + 1];
    for (k, &node) in order.iter().enumerate().skip(1) {
        heads[node] = order[rng.gen_range(0..k)];
    }
    heads
}

/// Whether the tree has a crossing arc.
pub fn is_non_projective(heads: &[usize]) -> bool {
    let arcs: Vec<(usize, usize)> = (1..heads.len())
        .map(|d| (heads[d].min(d), heads[d].max(d)))
        .collect();
    arcs.iter()
        .any(|&(a, b)| arcs.iter().any(|&(c, d)| a < c && c < b && b < d))
}

pub fn sentence_from_heads(heads: &[usize], labels: &[String]) -> Sentence {
    Sentence::new(
        (1..heads.len())
            .map(|i| Token::new(i, &format!("w{i}"), "X", heads[i], &labels[i - 1]))
            .collect(),
    )
}

/// A random labelled tree of `n` words over `labels`.
pub fn random_sentence(n: usize, labels: &[&str], rng: &mut impl Rng) -> Sentence {
    let heads = random_heads(n, rng);
    let labs: Vec<String> = (0..n).map(|_| labels[rng.gen_range(0..labels.len())].to_owned()).collect();
    sentence_from_heads(&heads, &labs)
}

struct Case {
    suffix: &'static str,
    label: &'static str,
    upos: &'static str,
}

const CASES: [Case; 7] = [
    Case { suffix: "ma", label: "root", upos: "VERB" },
    Case { suffix: "ko", label: "nsubj", upos: "NOUN" },
    Case { suffix: "ta", label: "obj", upos: "NOUN" },
    Case { suffix: "lle", label: "obl", upos: "NOUN" },
    Case { suffix: "nu", label: "nmod", upos: "NOUN" },
    Case { suffix: "ri", label: "amod", upos: "ADJ" },
    Case { suffix: "sti", label: "advmod", upos: "ADV" },
];

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "tu", "pe", "sa", "vo", "hi", "de", "ju", "ba", "ne"];

/// Generator for the toy language. Each word is a stem plus a case suffix
/// that fixes its label; verbs take their arguments in free order.
pub struct SuffixLanguage {
    pub train_stems: Vec<String>,
    pub unseen_stems: Vec<String>,
    /// Probability that a dev word uses a stem never seen in training.
    pub unseen_rate: f64,
    /// Probability that an adjective is moved to the end of the sentence.
    pub displacement_rate: f64,
}

impl SuffixLanguage {
    pub fn new(train_stems: usize, unseen_stems: usize, rng: &mut impl Rng) -> Self {
        let mut seen = HashSet::new();
        let mut stems = Vec::new();
        while stems.len() < train_stems + unseen_stems {
            let syl = rng.gen_range(2..=3);
            let stem: String = (0..syl).map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())]).collect();
            if seen.insert(stem.clone()) {
                stems.push(stem);
            }
        }
        let unseen = stems.split_off(train_stems);
        SuffixLanguage {
            train_stems: stems,
            unseen_stems: unseen,
            unseen_rate: 0.5,
            displacement_rate: 0.15,
        }
    }

    fn stem(&self, dev: bool, rng: &mut impl Rng) -> String {
        let pool = if dev && rng.gen::<f64>() < self.unseen_rate {
            &self.unseen_stems
        } else {
            &self.train_stems
        };
        pool[rng.gen_range(0..pool.len())].clone()
    }

    pub fn sentence(&self, dev: bool, rng: &mut impl Rng) -> Sentence {
        // words as (case index, head word index or None for the verb)
        let mut words: Vec<(usize, Option<usize>)> = vec![(0, None)];
        let mut units: Vec<Vec<usize>> = vec![vec![0]];
        let mut args = vec![1, 2, 3];
        args.shuffle(rng);
        args.truncate(rng.gen_range(1..=3));
        for case in args {
            let noun = words.len();
            words.push((case, Some(0)));
            let mut unit = Vec::new();
            if rng.gen::<f64>() < 0.3 {
                unit.push(words.len());
                words.push((4, Some(noun)));
            }
            if rng.gen::<f64>() < 0.4 {
                unit.push(words.len());
                words.push((5, Some(noun)));
            }
            unit.push(noun);
            units.push(unit);
        }
        if rng.gen::<f64>() < 0.3 {
            units.push(vec![words.len()]);
            words.push((6, Some(0)));
        }
        units.shuffle(rng);
        let mut order: Vec<usize> = Vec::new();
        let mut displaced = Vec::new();
        for unit in units {
            for w in unit {
                if words[w].0 == 5 && rng.gen::<f64>() < self.displacement_rate {
                    displaced.push(w);
                } else {
                    order.push(w);
                }
            }
        }
        order.extend(displaced);
        let mut position = vec![0; words.len()];
        for (pos, &w) in order.iter().enumerate() {
            position[w] = pos + 1;
        }
        let tokens = order
            .iter()
            .enumerate()
            .map(|(pos, &w)| {
                let (case, head) = words[w];
                let c = &CASES[case];
                let form = format!("{}{}", self.stem(dev, rng), c.suffix);
                Token::new(pos + 1, &form, c.upos, head.map_or(0, |h| position[h]), c.label)
            })
            .collect();
        Sentence::new(tokens)
    }

    pub fn treebank(&self, sentences: usize, dev: bool, rng: &mut impl Rng) -> Treebank {
        Treebank::new("synth", (0..sentences).map(|_| self.sentence(dev, rng)).collect())
    }

    /// Vectors for every possible form: a centroid per case plus noise.
    pub fn pretrained(&self, dim: usize, noise: f64, rng: &mut impl Rng) -> Pretrained {
        let centroids: Vec<Vec<f64>> = CASES
            .iter()
            .map(|_| (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        let mut vectors = std::collections::HashMap::new();
        for stem in self.train_stems.iter().chain(&self.unseen_stems) {
            for (c, case) in CASES.iter().enumerate() {
                let v = centroids[c].iter().map(|x| x + rng.gen_range(-noise..noise)).collect();
                vectors.insert(format!("{stem}{}", case.suffix), v);
            }
        }
        Pretrained {
            dim,
            vectors,
            rejected: 0,
        }
    }
}
