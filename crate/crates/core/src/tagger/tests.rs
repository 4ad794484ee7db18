use std::collections::BTreeSet;

use rand::Rng;

use super::*;
use crate::corpus::{tokenize, Provenance, Span, Stance};
use crate::nn::gradcheck;

fn example(id: &str, topic: &str, text: &str, spans: &[(usize, usize)], schemes: &[ArgumentScheme]) -> AnnotatedExample {
    let argument = tokenize(text);
    let spans = SpanLabeling::new(
        spans.iter().map(|&(s, e)| Span::new(s, e, Grounding::Others)).collect(),
        argument.len(),
    )
    .unwrap();
    AnnotatedExample {
        id: id.into(),
        topic: topic.into(),
        argument,
        stance: Stance::Pro,
        schemes: schemes.iter().copied().collect(),
        scheme_probs: None,
        spans,
        variables: Vec::new(),
        provenance: Provenance::Fixture,
    }
}

fn fixtures() -> Vec<AnnotatedExample> {
    use ArgumentScheme as S;
    vec![
        example("a", "t1", "the death penalty causes fewer murders", &[(1, 3), (4, 6)], &[S::FromConsequence]),
        example("b", "t1", "the death penalty violates human rights", &[(1, 3), (4, 6)], &[S::RuleOrPrinciple]),
        example("c", "t2", "school uniforms are favourable as it builds unity", &[(0, 2), (6, 8)], &[S::FromSourceAuthority]),
        example("d", "t2", "school uniforms stop bullying so we need them", &[(0, 2), (3, 4)], &[S::GoalFromMeansMeansForGoal, S::FromConsequence]),
        example("e", "t3", "experts say nuclear power is safe", &[(2, 4)], &[S::Others]),
        example("f", "t3", "nuclear power lowers emissions which protects the planet", &[(0, 2), (3, 4)], &[S::FromSourceAuthority, S::RuleOrPrinciple]),
        example("g", "t4", "in germany the ban worked", &[(1, 2)], &[S::FromSourceKnowledge]),
        example("h", "t4", "like sweden the policy reduced crime", &[(1, 2), (5, 6)], &[S::FromSourceKnowledge, S::FromConsequence]),
    ]
}

fn tiny(variant: TaggerVariant, seed: u64) -> SchemeTaggerConfig {
    let mut c = SchemeTaggerConfig::new(variant);
    c.encoder = StackDims {
        layers: 1,
        hidden: 8,
        heads: 2,
    };
    c.seed = Some(seed);
    c.max_positions = 32;
    c
}

fn model(variant: TaggerVariant, seed: u64) -> ArgSpanScheme {
    let data = fixtures();
    ArgSpanScheme::new(tiny(variant, seed), ArgSpanScheme::build_vocab(&data)).unwrap()
}

#[test]
fn selective_mask_cases() {
    assert_eq!(selective_mask(3, &SpanLabeling::empty()).unwrap(), vec![true; 4]);
    let all = SpanLabeling::new(vec![Span::new(0, 3, Grounding::Others)], 3).unwrap();
    assert_eq!(selective_mask(3, &all).unwrap(), vec![true, false, false, false]);
    let one = SpanLabeling::new(vec![Span::new(1, 3, Grounding::Others)], 5).unwrap();
    let keep = selective_mask(5, &one).unwrap();
    // BOS, tokens 0, 3, 4
    assert_eq!(keep, vec![true, true, false, false, true, true]);
    let bad = SpanLabeling {
        spans: vec![Span::new(4, 7, Grounding::Others)],
    };
    assert!(selective_mask(5, &bad).is_err());
}

#[test]
fn motivating_pair_shares_head_input() {
    let a = tokenize("the death penalty is favourable as it deters crime");
    let b = tokenize("school uniforms is favourable as it builds unity");
    let sa = SpanLabeling::new(
        vec![Span::new(0, 3, Grounding::Others), Span::new(7, 9, Grounding::Others)],
        a.len(),
    )
    .unwrap();
    let sb = SpanLabeling::new(
        vec![Span::new(0, 2, Grounding::Others), Span::new(6, 8, Grounding::Others)],
        b.len(),
    )
    .unwrap();
    let ua = unmasked_tokens(&a, &sa).unwrap();
    assert_eq!(ua, unmasked_tokens(&b, &sb).unwrap());
    assert_eq!(ua, ["is", "favourable", "as", "it"]);
}

#[test]
fn zero_classifier_is_uniform() {
    for variant in [TaggerVariant::Parallel, TaggerVariant::Pipelined] {
        let mut m = model(variant, 1);
        m.zero_scheme_classifier();
        let p = m.predict(&tokenize("the death penalty")).unwrap();
        assert!(p.probabilities.iter().all(|&x| x == 0.5));
        let (_, scheme_loss) = m.loss_terms(&fixtures()).unwrap();
        assert!((scheme_loss - 2f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn all_o_logits_decode_empty() {
    let mut logits = Mat::zeros((4, 3));
    logits.column_mut(BioTag::O.index()).fill(1.0);
    assert!(decode_span_logits(&logits).is_empty());
}

#[test]
fn pipelined_logits_ignore_masked_rows() {
    let m = model(TaggerVariant::Pipelined, 2);
    let arg = tokenize("school uniforms stop bullying so we need them");
    let spans = SpanLabeling::new(
        vec![Span::new(0, 2, Grounding::Others), Span::new(3, 4, Grounding::Others)],
        arg.len(),
    )
    .unwrap();
    let h = m.encode(&arg).unwrap();
    let base = m.scheme_logits_from_encoding(&h, &spans).unwrap();
    let mask = selective_mask(arg.len(), &spans).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut noisy = h.clone();
    for (r, keep) in mask.iter().enumerate() {
        if !keep {
            noisy.row_mut(r).mapv_inplace(|_| rng.random_range(-50.0..50.0));
        }
    }
    let after = m.scheme_logits_from_encoding(&noisy, &spans).unwrap();
    for (a, b) in base.iter().zip(&after) {
        assert!((a - b).abs() < 1e-6);
    }
    // unmasked rows do matter
    noisy.row_mut(5).fill(3.0);
    let moved = m.scheme_logits_from_encoding(&noisy, &spans).unwrap();
    assert!(base.iter().zip(&moved).any(|(a, b)| (a - b).abs() > 1e-6));
}

#[test]
fn parallel_heads_are_independent() {
    let mut m = model(TaggerVariant::Parallel, 3);
    let arg = tokenize("nuclear power lowers emissions");
    let spans0 = m.span_logits(&arg).unwrap();
    let schemes0 = m.predict(&arg).unwrap().probabilities;
    let head = m.scheme_head_params();
    for name in &head {
        let id = m.params().find(name).unwrap();
        m.params_mut().value_mut(id).mapv_inplace(|x| x + 0.5);
    }
    assert_eq!(m.span_logits(&arg).unwrap(), spans0);
    let schemes1 = m.predict(&arg).unwrap().probabilities;
    assert_ne!(schemes0, schemes1);
    for name in ["span_head.w", "span_head.b"] {
        let id = m.params().find(name).unwrap();
        m.params_mut().value_mut(id).mapv_inplace(|x| x - 0.7);
    }
    assert_eq!(m.predict(&arg).unwrap().probabilities, schemes1);
}

#[test]
fn gradients_match_finite_differences() {
    let data = fixtures();
    for variant in [TaggerVariant::Parallel, TaggerVariant::Pipelined] {
        let mut c = tiny(variant, 4);
        c.encoder.heads = 4;
        let m = ArgSpanScheme::new(c, ArgSpanScheme::build_vocab(&data)).unwrap();
        let (_, grads) = m.loss(&data[..3], true).unwrap();
        let grads = grads.unwrap();
        let mut store = m.params().clone();
        let checks = gradcheck::check_all(
            &mut store,
            1e-5,
            &|id| grads.param(id).cloned().unwrap_or_else(|| Mat::zeros(m.params().value(id).dim())),
            &mut |s| m.loss_with(s, &data[..3], false).unwrap().0,
        );
        for c in checks {
            assert!(c.passes(1e-4, 1e-8), "{variant:?} {c:?}");
        }
    }
}

#[test]
fn overfits_fixtures() {
    let data = fixtures();
    for variant in [TaggerVariant::Parallel, TaggerVariant::Pipelined] {
        let mut c = tiny(variant, 5);
        c.encoder = StackDims {
            layers: 1,
            hidden: 16,
            heads: 4,
        };
        c.train.learning_rate = 1e-2;
        c.train.max_steps = 400;
        c.train.eval_every = 20;
        c.train.early_stop_patience = 100;
        c.train.stop_below = Some(0.01);
        let (m, log) = ArgSpanScheme::train(&data, &[], c).unwrap();
        assert!(log.best_validation_loss < 0.05, "{variant:?} {}", log.best_validation_loss);
        for ex in &data {
            let p = m.predict(&ex.argument).unwrap();
            assert_eq!(p.spans, ex.spans, "{variant:?} {}", ex.id);
            assert_eq!(p.labels, ex.schemes, "{variant:?} {}", ex.id);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        m.save(&path).unwrap();
        let back = ArgSpanScheme::load(&path).unwrap();
        assert_eq!(back.predict(&data[0].argument).unwrap(), m.predict(&data[0].argument).unwrap());
    }
}

fn six_topic_corpus(n: usize) -> Vec<AnnotatedExample> {
    (0..n)
        .map(|i| example(&format!("x{i}"), &format!("topic{}", i % 6), "a b c", &[], &[ArgumentScheme::Others]))
        .collect()
}

#[test]
fn topic_splits_are_disjoint() {
    let corpus = six_topic_corpus(60);
    for ratio in [SplitRatio::FiveOne, SplitRatio::FourTwo, SplitRatio::TwoFour] {
        for id in SPLIT_IDS_FOR_TEST {
            let s = topic_split(&corpus, ratio, id).unwrap();
            assert_eq!(s.validation_topics.len(), ratio.validation_topics().unwrap());
            let vt: BTreeSet<_> = s.validation_topics.iter().collect();
            assert!(s.train_topics.iter().all(|t| !vt.contains(t)));
            let (train, val) = s.partition(&corpus);
            assert_eq!(train.len() + val.len(), corpus.len());
            assert!(train.iter().all(|e| !vt.contains(&e.topic)));
            assert!(val.iter().all(|e| vt.contains(&e.topic)));
            assert_eq!(s, topic_split(&corpus, ratio, id).unwrap());
        }
    }
    assert!(topic_split(&corpus, SplitRatio::FiveOne, 0).is_err());
    assert!(topic_split(&corpus[..5], SplitRatio::FiveOne, 1).is_err());
}

const SPLIT_IDS_FOR_TEST: std::ops::RangeInclusive<u32> = split::SPLIT_IDS;

#[test]
fn cv_split_sizes() {
    for n in [14, 100, 333] {
        let corpus = six_topic_corpus(n);
        let s = topic_split(&corpus, SplitRatio::Cv, 1).unwrap();
        let expect = n as f64 * 0.07;
        assert!((s.validation.len() as f64 - expect).abs() <= 1.0);
        let mut all: Vec<_> = s.train.iter().chain(&s.validation).cloned().collect();
        all.sort();
        let mut ids: Vec<_> = corpus.iter().map(|e| e.id.clone()).collect();
        ids.sort();
        assert_eq!(all, ids);
    }
    let corpus = six_topic_corpus(100);
    let a = topic_split(&corpus, SplitRatio::Cv, 1).unwrap();
    let b = topic_split(&corpus, SplitRatio::Cv, 2).unwrap();
    assert_ne!(a.validation, b.validation);
}
