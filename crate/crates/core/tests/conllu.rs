use std::collections::HashSet;

use depablate::conllu::{
    compute_stats, overlay_tags, parse_conllu, write_conllu, Sentence, TagSource, Token, Treebank, UPOS_TAGS,
};
use depablate::synthetic::random_heads;
use depablate::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_token_fields() -> impl Strategy<Value = (String, String, usize, String, String)> {
    (
        "[a-zäöA-Z,.!]{1,8}",
        "[a-z_]{1,6}",
        0..UPOS_TAGS.len(),
        "[a-z]{1,5}(:[a-z]{2,4})?",
        "(_|[A-Z][a-z]+=[A-Z][a-z]+)",
    )
}

prop_compose! {
    fn arb_sentence()(
        fields in prop::collection::vec(arb_token_fields(), 1..9),
        seed in any::<u64>(),
        comment in prop::option::of("[a-z ]{1,20}"),
        range_at in prop::option::of(0usize..8),
    ) -> Sentence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heads = random_heads(fields.len(), &mut rng);
        let tokens: Vec<Token> = fields
            .iter()
            .enumerate()
            .map(|(i, (form, lemma, tag, rel, feats))| {
                let mut t = Token::new(i + 1, form, UPOS_TAGS[*tag], heads[i + 1], rel);
                t.lemma = lemma.clone();
                t.feats = feats.clone();
                t
            })
            .collect();
        let n = tokens.len();
        let mut s = Sentence::new(tokens);
        if let Some(text) = comment {
            s.comments.push(format!("# text = {text}"));
        }
        if let Some(at) = range_at.filter(|&a| a + 1 < n) {
            s.passthrough.push((at, format!("{}-{}\txy\t_\t_\t_\t_\t_\t_\t_\t_", at + 1, at + 2)));
        }
        s
    }
}

fn arb_treebank() -> impl Strategy<Value = Treebank> {
    prop::collection::vec(arb_sentence(), 0..6).prop_map(|s| Treebank::new("xx", s))
}

/// Distinct forms, characters and token count, counted directly.
fn recount(tb: &Treebank) -> (usize, usize, usize) {
    let mut forms = HashSet::new();
    let mut chars = HashSet::new();
    let mut total = 0;
    for s in &tb.sentences {
        for t in &s.tokens {
            forms.insert(t.form.clone());
            for c in t.form.chars() {
                chars.insert(c);
            }
            total += 1;
        }
    }
    (forms.len(), chars.len(), total)
}

proptest! {
    #[test]
    fn write_then_parse_round_trips(tb in arb_treebank()) {
        let text = write_conllu(&tb);
        let back = parse_conllu(&text, "xx").unwrap();
        prop_assert_eq!(&back, &tb);
        prop_assert_eq!(write_conllu(&back), text);
    }

    #[test]
    fn stats_match_recount_and_ignore_order(tb in arb_treebank(), seed in any::<u64>()) {
        prop_assume!(tb.token_count() > 0);
        let stats = compute_stats(&tb, &tb).unwrap();
        let (types, chars, total) = recount(&tb);
        prop_assert_eq!(stats.type_token_ratio, types as f64 / total as f64);
        prop_assert_eq!(stats.charset_size, chars);
        prop_assert_eq!(stats.train_sentences, tb.sentences.len());

        let mut shuffled = tb.clone();
        use rand::seq::SliceRandom;
        shuffled.sentences.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(compute_stats(&shuffled, &tb).unwrap(), stats);
    }

    #[test]
    fn overlay_keeps_gold_and_counts_disagreements(tb in arb_treebank(), flips in prop::collection::vec(any::<bool>(), 64)) {
        let mut tagged = tb.clone();
        let mut expected = 0;
        let mut k = 0;
        for s in &mut tagged.sentences {
            for t in &mut s.tokens {
                if flips[k % flips.len()] {
                    t.upos = if t.upos == "NOUN" { "VERB".into() } else { "NOUN".into() };
                    expected += 1;
                }
                k += 1;
            }
        }
        let out = overlay_tags(&tb, TagSource::External(&tagged)).unwrap();
        let mut differing = 0;
        for (a, b) in out.sentences.iter().zip(&tb.sentences) {
            for (x, y) in a.tokens.iter().zip(&b.tokens) {
                prop_assert_eq!(&x.upos, &y.upos);
                prop_assert_eq!(x.head, y.head);
                prop_assert_eq!(&x.deprel, &y.deprel);
                differing += usize::from(x.predicted_upos.as_deref() != Some(y.upos.as_str()));
            }
        }
        prop_assert_eq!(differing, expected);

        let gold = overlay_tags(&tb, TagSource::Gold).unwrap();
        prop_assert!(gold.tokens().all(|t| t.predicted_upos.as_deref() == Some(t.upos.as_str())));
    }
}

const TWO: &str = "1\tthe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n2\tcat\tcat\tNOUN\t_\t_\t0\troot\t_\t_\n\n";

#[test]
fn minimal_sentence() {
    let tb = parse_conllu(TWO, "en").unwrap();
    assert_eq!(tb.sentences.len(), 1);
    assert_eq!(tb.sentences[0].tokens.len(), 2);
    assert_eq!(tb.sentences[0].tokens[0].deprel, "det");
}

#[test]
fn range_lines_are_skipped_but_kept() {
    let text = "1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\t_\tADP\t_\t_\t2\tcase\t_\t_\n2\tel\t_\tDET\t_\t_\t0\troot\t_\t_\n\n";
    let tb = parse_conllu(text, "es").unwrap();
    assert_eq!(tb.sentences[0].tokens.len(), 2);
    assert_eq!(write_conllu(&tb), text);
}

#[test]
fn empty_treebank_writes_nothing() {
    assert_eq!(write_conllu(&Treebank::new("xx", vec![])), "");
}

#[test]
fn single_token_sentence() {
    let tb = Treebank::new("xx", vec![Sentence::new(vec![Token::new(1, "hi", "INTJ", 0, "root")])]);
    assert_eq!(write_conllu(&tb), "1\thi\t_\tINTJ\t_\t_\t0\troot\t_\t_\n\n");
}

#[test]
fn tiny_stats() {
    let s = Sentence::new(vec![
        Token::new(1, "a", "X", 0, "root"),
        Token::new(2, "b", "X", 1, "dep"),
        Token::new(3, "a", "X", 1, "dep"),
    ]);
    let tb = Treebank::new("xx", vec![s]);
    let stats = compute_stats(&tb, &tb).unwrap();
    assert_eq!(stats.type_token_ratio, 2.0 / 3.0);
    assert_eq!(stats.charset_size, 2);
}

#[test]
fn empty_train_is_an_error() {
    let empty = Treebank::new("xx", vec![]);
    assert!(matches!(compute_stats(&empty, &empty), Err(Error::Empty(_))));
}

#[test]
fn malformed_rows_report_line_numbers() {
    let bad_head = "1\ta\t_\tX\t_\t_\tz\troot\t_\t_\n";
    assert!(matches!(parse_conllu(bad_head, "xx"), Err(Error::Parse { line: 1, .. })));
    let short = "# c\n1\ta\t_\tX\t_\t_\t0\n";
    assert!(matches!(parse_conllu(short, "xx"), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn head_cycles_name_the_sentence() {
    let cyclic = format!("{TWO}1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n");
    assert!(matches!(parse_conllu(&cyclic, "xx"), Err(Error::Structure { sentence: 1, .. })));
}

#[test]
fn misaligned_tag_file_is_rejected() {
    let tb = parse_conllu(TWO, "en").unwrap();
    let mut tags = tb.clone();
    tags.sentences[0].tokens.pop();
    assert!(matches!(
        overlay_tags(&tb, TagSource::External(&tags)),
        Err(Error::Alignment { sentence: 0, .. })
    ));
}
