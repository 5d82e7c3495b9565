use std::collections::{HashMap, HashSet};

use depablate::conllu::{overlay_tags, Sentence, TagSource, Token, Treebank};
use depablate::neural::{Graph, ParamStore};
use depablate::parser::{ParserConfig, ParserModel};
use depablate::representation::{
    init_word_table, parse_pretrained, CharModel, Phase, Pretrained, RepresentationConfig, System,
};
use depablate::synthetic::SuffixLanguage;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn treebank(forms: &[&str]) -> Treebank {
    let tokens = forms
        .iter()
        .enumerate()
        .map(|(i, f)| Token::new(i + 1, f, "NOUN", if i == 0 { 0 } else { 1 }, if i == 0 { "root" } else { "dep" }))
        .collect();
    Treebank::new("xx", vec![Sentence::new(tokens)])
}

/// Splits each line on spaces without any knowledge of headers.
fn split_lines(text: &str, dim: usize) -> HashMap<String, Vec<f64>> {
    let mut out = HashMap::new();
    for line in text.lines() {
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() == dim + 1 {
            if let Ok(v) = parts[1..].iter().map(|p| p.parse::<f64>()).collect::<Result<Vec<_>, _>>() {
                out.insert(parts[0].to_owned(), v);
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn loader_agrees_with_line_splitting(
        rows in prop::collection::btree_map("[a-z]{1,6}", prop::collection::vec(-5.0f64..5.0, 3), 1..12),
        bad in prop::collection::vec(("[A-Z]{2,4}", 1usize..6), 0..4),
        header in any::<bool>(),
    ) {
        let mut text = String::new();
        if header {
            text += &format!("{} 3\n", rows.len());
        }
        for (form, v) in &rows {
            text += &format!("{form} {} {} {}\n", v[0], v[1], v[2]);
        }
        let mut rejected = 0;
        for (form, len) in &bad {
            if *len != 3 {
                rejected += 1;
                text += &format!("{form}{}\n", " 0.5".repeat(*len));
            }
        }
        let loaded = parse_pretrained(&text, Some(3)).unwrap();
        prop_assert_eq!(&loaded.vectors, &split_lines(&text, 3));
        prop_assert_eq!(loaded.rejected, rejected);
        prop_assert_eq!(loaded.dim, 3);
    }

    #[test]
    fn coverage_is_the_set_intersection(
        train in prop::collection::vec("[a-e]{1,2}", 1..15),
        vectors in prop::collection::hash_set("[a-e]{1,2}", 1..15),
    ) {
        let forms: Vec<&str> = train.iter().map(String::as_str).collect();
        let tb = treebank(&forms);
        let pretrained = Pretrained {
            dim: 4,
            vectors: vectors.iter().map(|f| (f.clone(), vec![0.25; 4])).collect(),
            rejected: 0,
        };
        let mut config = RepresentationConfig::for_system(System::PlusExt, 24).unwrap();
        config.word_dim = 4;
        let mut store = ParamStore::new();
        let lookup = init_word_table(&mut store, &tb, &config, Some(&pretrained), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let types: HashSet<&String> = train.iter().collect();
        prop_assert_eq!(lookup.coverage(), types.iter().filter(|t| vectors.contains(**t)).count());
    }
}

#[test]
fn header_gives_the_dimension_and_missing_header_infers_it() {
    let with = parse_pretrained("2 3\na 1 2 3\nb 4 5 6\n", None).unwrap();
    assert_eq!((with.len(), with.dim), (2, 3));
    let without = parse_pretrained("a 1 2\nb 3 4\nc 5\n", None).unwrap();
    assert_eq!((without.len(), without.dim, without.rejected), (2, 2, 1));
    assert!(parse_pretrained("x 1 2\n", Some(3)).is_err());
}

#[test]
fn word_dropout_rate_within_three_sigma() {
    let tb = treebank(&["root", "once", "twice", "twice"]);
    let config = RepresentationConfig::for_system(System::Baseline, 24).unwrap();
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lookup = init_word_table(&mut store, &tb, &config, None, &mut rng).unwrap();
    let oov = store.get(lookup.table).row(0).to_vec();
    for (form, freq) in [("once", 1.0), ("twice", 2.0)] {
        let p = 0.33 / (1.0 + freq);
        assert_eq!(lookup.dropout_probability(form), p);
        let draws = 100_000;
        let mut replaced = 0;
        for _ in 0..draws / 1000 {
            let mut g = Graph::new(&store);
            for _ in 0..1000 {
                let v = lookup.embed(&mut g, form, Phase::Train, &mut rng).unwrap();
                replaced += usize::from(g.value(v) == oov.as_slice());
            }
        }
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let diff = (replaced as f64 - draws as f64 * p).abs();
        assert!(diff <= 3.0 * sigma, "{form}: {replaced} replacements, expected {}", draws as f64 * p);
    }
}

#[test]
fn unseen_pretrained_vectors_survive_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lang = SuffixLanguage::new(10, 10, &mut rng);
    let train = overlay_tags(&lang.treebank(8, false, &mut rng), TagSource::Gold).unwrap();
    let pretrained = lang.pretrained(100, 0.3, &mut rng);
    let seen: HashSet<&str> = train.tokens().map(|t| t.form.as_str()).collect();
    let unseen: Vec<&String> = pretrained.vectors.keys().filter(|f| !seen.contains(f.as_str())).take(5).collect();
    assert!(!unseen.is_empty());

    let mut config = ParserConfig::new(RepresentationConfig::for_system(System::PlusExt, 24).unwrap());
    config.lstm_layers = 1;
    config.lstm_hidden = 16;
    config.mlp_hidden = 16;
    let mut model = ParserModel::new(&train, config, Some(&pretrained), 1).unwrap();
    let lookup_all = |model: &ParserModel| -> Vec<Vec<f64>> {
        let mut g = Graph::new(&model.store);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        unseen
            .iter()
            .map(|f| {
                let v = model.net.rep.words.embed(&mut g, f, Phase::Test, &mut r).unwrap();
                g.value(v).to_vec()
            })
            .collect()
    };
    let before = lookup_all(&model);
    for _ in 0..2 {
        model.train_epoch(&train).unwrap();
    }
    let after = lookup_all(&model);
    assert_eq!(before, after);
    for (f, v) in unseen.iter().zip(&after) {
        assert_eq!(&pretrained.vectors[*f], v);
    }
    // seen forms did move
    let form = &train.sentences[0].tokens[0].form;
    let row = model.net.rep.words.row(form).unwrap();
    assert_ne!(model.store.get(model.net.rep.words.table).row(row), pretrained.vectors[form].as_slice());
}

#[test]
fn last_character_changes_the_char_encoding() {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let chars: Vec<char> = "abcdefg".chars().collect();
    let cm = CharModel::new(&mut store, chars, 24, 50, &mut rng);
    let mut g = Graph::new(&store);
    for (a, b) in [("abca", "abcb"), ("gg", "gf"), ("face", "facz")] {
        let va = cm.embed(&mut g, a).unwrap();
        let vb = cm.embed(&mut g, b).unwrap();
        assert_eq!(g.dim(va), 50);
        let gap = g.value(va).iter().zip(g.value(vb)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap > 1e-9, "{a} and {b} encode the same");
    }
    assert!(cm.embed(&mut g, "").is_err());
}
