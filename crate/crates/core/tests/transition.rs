use depablate::conllu::Sentence;
use depablate::parser::feature_window;
use depablate::synthetic::{random_heads, sentence_from_heads};
use depablate::transition::{
    max_transitions, projective_order, static_oracle, Configuration, Oracle, Transition, TransitionKind,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LABELS: [&str; 3] = ["a", "b", "c"];

fn labelled(n: usize, seed: u64) -> Sentence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads = random_heads(n, &mut rng);
    let labels: Vec<String> = (0..n).map(|_| LABELS[rng.gen_range(0..3)].to_owned()).collect();
    sentence_from_heads(&heads, &labels)
}

fn random_transition(cfg: &Configuration, rng: &mut impl Rng) -> Transition {
    let kinds: Vec<TransitionKind> = cfg.legal().iter().collect();
    let label = LABELS[rng.gen_range(0..3)];
    match kinds[rng.gen_range(0..kinds.len())] {
        TransitionKind::Shift => Transition::shift(),
        TransitionKind::Swap => Transition::swap(),
        TransitionKind::LeftArc => Transition::left(label),
        TransitionKind::RightArc => Transition::right(label),
    }
}

proptest! {
    #[test]
    fn static_oracle_rebuilds_gold(n in 1usize..=10, seed in any::<u64>()) {
        let gold = labelled(n, seed);
        let seq = static_oracle(&gold).unwrap();
        prop_assert!(seq.len() <= max_transitions(n));
        let mut cfg = Configuration::initial(&gold);
        for t in &seq {
            cfg.apply(t).unwrap();
        }
        prop_assert_eq!(cfg.extract_tree(&gold).unwrap().tokens, gold.tokens);
    }

    #[test]
    fn random_legal_walks_terminate_with_every_word_attached(n in 1usize..=8, seed in any::<u64>()) {
        let s = labelled(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut cfg = Configuration::initial(&s);
        let mut steps = 0;
        while !cfg.is_terminal() {
            prop_assert!(!cfg.legal().is_empty());
            let t = random_transition(&cfg, &mut rng);
            cfg.apply(&t).unwrap();
            steps += 1;
            prop_assert!(steps <= max_transitions(n), "walk exceeded {} steps", max_transitions(n));
        }
        prop_assert!((1..=n).all(|d| cfg.arc(d).is_some()));
        let tree = cfg.extract_tree(&s).unwrap();
        tree.validate(0).unwrap();
    }

    #[test]
    fn zero_cost_paths_rebuild_gold(n in 1usize..=9, seed in any::<u64>()) {
        let gold = labelled(n, seed);
        let oracle = Oracle::new(&gold).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31));
        let mut cfg = Configuration::initial(&gold);
        while !cfg.is_terminal() {
            let outcome = oracle.dynamic_cost(&cfg);
            let zero: Vec<TransitionKind> = outcome.zero_cost.iter().collect();
            prop_assert!(!zero.is_empty());
            let kind = zero[rng.gen_range(0..zero.len())];
            let t = match kind {
                TransitionKind::Shift => Transition::shift(),
                TransitionKind::Swap => Transition::swap(),
                k => {
                    let (_, dep) = cfg.arc_endpoints(k).unwrap();
                    let label = oracle.gold_label(dep).to_owned();
                    Transition { kind: k, label: Some(label) }
                }
            };
            cfg.apply(&t).unwrap();
        }
        prop_assert_eq!(cfg.extract_tree(&gold).unwrap().tokens, gold.tokens);
    }

    #[test]
    fn costs_are_consistent(n in 1usize..=7, seed in any::<u64>()) {
        let gold = labelled(n, seed);
        let oracle = Oracle::new(&gold).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = Configuration::initial(&gold);
        while !cfg.is_terminal() {
            let outcome = oracle.dynamic_cost(&cfg);
            for kind in cfg.legal().iter() {
                let c = outcome.costs[&kind];
                prop_assert_eq!(outcome.zero_cost.contains(kind), c == 0);
            }
            let t = if oracle.swap_prescribed(&cfg) {
                Transition::swap()
            } else {
                loop {
                    let t = random_transition(&cfg, &mut rng);
                    if t.kind != TransitionKind::Swap {
                        break t;
                    }
                }
            };
            cfg.apply(&t).unwrap();
        }
    }

    #[test]
    fn feature_window_matches_direct_reading(n in 1usize..=8, seed in any::<u64>()) {
        let s = labelled(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = Configuration::initial(&s);
        loop {
            let stack = cfg.stack().to_vec();
            let buffer: Vec<usize> = cfg.buffer().collect();
            let from_top = |i: usize| if stack.len() > i { Some(stack[stack.len() - 1 - i]) } else { None };
            let expected = [from_top(0), from_top(1), from_top(2), buffer.first().copied()];
            prop_assert_eq!(feature_window(&cfg), expected);
            if cfg.is_terminal() {
                break;
            }
            let t = random_transition(&cfg, &mut rng);
            cfg.apply(&t).unwrap();
        }
    }
}

#[test]
fn projective_order_of_a_crossing_tree() {
    // arcs 3->1 and 4->2 cross
    let heads = [0, 3, 4, 0, 1];
    let order = projective_order(&heads);
    let mut by_rank: Vec<usize> = (0..heads.len()).collect();
    by_rank.sort_by_key(|&i| order[i]);
    assert_eq!(by_rank, vec![0, 1, 2, 4, 3]);
}

#[test]
fn static_oracle_uses_swap_on_crossing_trees() {
    let gold = sentence_from_heads(&[0, 3, 4, 0, 1], &["a", "b", "root", "c"].map(String::from));
    let seq = static_oracle(&gold).unwrap();
    assert!(seq.iter().any(|t| t.kind == TransitionKind::Swap));
    let projective = sentence_from_heads(&[0, 2, 0, 2], &["a", "root", "b"].map(String::from));
    assert!(static_oracle(&projective).unwrap().iter().all(|t| t.kind != TransitionKind::Swap));
}

#[test]
fn transition_bound_is_reached_by_some_walk() {
    // exhaustive search over all transition sequences for n = 3
    let s = labelled(3, 0);
    fn longest(cfg: &Configuration) -> usize {
        if cfg.is_terminal() {
            return 0;
        }
        cfg.legal()
            .iter()
            .map(|k| {
                let mut next = cfg.clone();
                let t = match k {
                    TransitionKind::Shift => Transition::shift(),
                    TransitionKind::Swap => Transition::swap(),
                    TransitionKind::LeftArc => Transition::left("a"),
                    TransitionKind::RightArc => Transition::right("a"),
                };
                next.apply(&t).unwrap();
                1 + longest(&next)
            })
            .max()
            .unwrap()
    }
    assert_eq!(longest(&Configuration::initial(&s)), max_transitions(3));
}
