use super::*;
use crate::corpus::{tokenize, Origin, Span};
use crate::nn::gradcheck;

fn var(id: &str, text: &str) -> FactVariable {
    FactVariable {
        id: id.into(),
        text: text.into(),
        topic: "t".into(),
        origin: Origin::SeedKb,
    }
}

fn example(text: &str, vars: Vec<FactVariable>, spans: Vec<(usize, usize, &str)>) -> GroundingExample {
    let spans = spans
        .into_iter()
        .map(|(s, e, g)| Span {
            start: s,
            end: e,
            grounding: Grounding::from_id(g),
        })
        .collect();
    let argument = tokenize(text);
    let gold = SpanLabeling::new(spans, argument.len()).unwrap();
    GroundingExample {
        argument,
        variables: vars,
        gold,
    }
}

fn tiny_config(seed: u64) -> GrounderConfig {
    let mut c = GrounderConfig::toy(seed);
    c.encoder = StackDims {
        layers: 1,
        hidden: 8,
        heads: 2,
    };
    c.reduced_dim = 8;
    c.max_positions = 32;
    c
}

fn corpus() -> Vec<GroundingExample> {
    let vars = || vec![var("v0", "death penalty"), var("v1", "human rights")];
    vec![
        example("the death penalty violates human rights", vars(), vec![(1, 3, "v0"), (4, 6, "v1")]),
        example("human rights matter more than the death penalty", vars(), vec![(0, 2, "v1"), (5, 7, "v0")]),
        example("crime rates fall under the death penalty", vars(), vec![(0, 2, "OTHERS"), (4, 6, "v0")]),
    ]
}

#[test]
fn untrained_without_seed() {
    let mut c = tiny_config(0);
    c.seed = None;
    let vocab = ArgSpan::build_vocab(&corpus());
    assert!(matches!(ArgSpan::new(c, vocab), Err(Error::Untrained(_))));
}

#[test]
fn zero_scorer_gives_uniform_loss() {
    let data = corpus();
    let mut m = ArgSpan::new(tiny_config(1), ArgSpan::build_vocab(&data)).unwrap();
    m.zero_scorer();
    let (loss, _) = m.loss(&data, false).unwrap();
    assert!((loss - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn permuting_variables_permutes_channels() {
    let data = corpus();
    let m = ArgSpan::new(tiny_config(2), ArgSpan::build_vocab(&data)).unwrap();
    let vars = vec![var("a", "death penalty"), var("b", "human rights"), var("c", "crime rates")];
    let arg = tokenize("the death penalty violates human rights");
    let base = m.ground(&arg, &vars).unwrap();
    let perm = [2usize, 0, 1];
    let permuted: Vec<_> = perm.iter().map(|&i| vars[i].clone()).collect();
    let out = m.ground(&arg, &permuted).unwrap();
    for (new_c, &old_c) in perm.iter().enumerate() {
        let d = (&out.logits.slice(ndarray::s![new_c, .., ..]) - &base.logits.slice(ndarray::s![old_c, .., ..]))
            .mapv(f64::abs)
            .fold(0.0f64, |a, &b| a.max(b));
        assert!(d < 1e-9, "channel {new_c} differs by {d}");
    }
    let d = (&out.logits.slice(ndarray::s![3, .., ..]) - &base.logits.slice(ndarray::s![3, .., ..]))
        .mapv(f64::abs)
        .fold(0.0f64, |a, &b| a.max(b));
    assert!(d < 1e-9);
}

#[test]
fn decomposed_scoring_matches_ground() {
    let data = corpus();
    let m = ArgSpan::new(tiny_config(3), ArgSpan::build_vocab(&data)).unwrap();
    let ex = &data[0];
    let enc = m.encode_pair(&ex.argument, &ex.variables).unwrap();
    assert_eq!(enc.tokens.nrows(), ex.argument.len());
    assert_eq!(enc.variables.nrows(), 2);
    let reduced = m.reduce_variable(&enc.variables).unwrap();
    assert_eq!(reduced.ncols(), 8);
    let scores = m.biaffine_score(&enc.tokens, &reduced).unwrap();
    let direct = m.ground(&ex.argument, &ex.variables).unwrap();
    assert_eq!(scores.dim(), (3, ex.argument.len(), 3));
    for (a, b) in scores.iter().zip(direct.logits.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(matches!(m.reduce_variable(&Mat::zeros((1, 5))), Err(Error::Shape(_))));
}

#[test]
fn rejects_bad_variable_counts() {
    let data = corpus();
    let m = ArgSpan::new(tiny_config(4), ArgSpan::build_vocab(&data)).unwrap();
    let arg = tokenize("a b");
    assert!(m.ground(&arg, &[]).is_err());
    let six: Vec<_> = (0..6).map(|i| var(&format!("v{i}"), "x")).collect();
    assert!(m.ground(&arg, &six).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let data = corpus();
    let m = ArgSpan::new(tiny_config(5), ArgSpan::build_vocab(&data)).unwrap();
    let (_, grads) = m.loss(&data, true).unwrap();
    let grads = grads.unwrap();
    let mut store = m.params().clone();
    let checks = gradcheck::check_all(&mut store, 1e-5, &|id| grads.param(id).cloned().unwrap_or_else(|| Mat::zeros(store_shape(&m, id))), &mut |s| {
        m.loss_with(s, &data, false).unwrap().0
    });
    for c in checks {
        assert!(c.passes(1e-4, 1e-8), "{c:?}");
    }
}

#[test]
fn decode_resolves_conflicts_by_logit() {
    let mut logits = Array3::zeros((2, 3, 3));
    // channel 0 claims token 0 and 1 weakly, channel 1 claims token 1 strongly
    logits[[0, 0, 0]] = 1.0;
    logits[[0, 1, 1]] = 1.0;
    logits[[1, 1, 0]] = 5.0;
    logits[[0, 2, 2]] = 1.0;
    logits[[1, 0, 2]] = 1.0;
    logits[[1, 2, 2]] = 1.0;
    let gs = vec![Grounding::Variable("x".into()), Grounding::Others];
    let lab = decode_channels(&logits, &gs);
    assert_eq!(lab.spans.len(), 2);
    assert_eq!((lab.spans[0].start, lab.spans[0].end), (0, 1));
    assert_eq!(lab.spans[1].grounding, Grounding::Others);
    assert_eq!((lab.spans[1].start, lab.spans[1].end), (1, 2));
}

#[test]
fn overfits_tiny_corpus_and_round_trips() {
    let data = corpus();
    let mut c = tiny_config(6);
    c.encoder.hidden = 16;
    c.reduced_dim = 16;
    c.train.learning_rate = 1e-2;
    c.train.max_steps = 300;
    c.train.eval_every = 25;
    c.train.early_stop_patience = 100;
    let (m, log) = ArgSpan::train(&data, &[], c).unwrap();
    assert!(log.best_validation_loss < 0.05, "{}", log.best_validation_loss);
    for ex in &data {
        assert_eq!(m.ground(&ex.argument, &ex.variables).unwrap().labeling, ex.gold);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    m.save(&path).unwrap();
    let back = ArgSpan::load(&path).unwrap();
    let a = m.ground(&data[0].argument, &data[0].variables).unwrap();
    let b = back.ground(&data[0].argument, &data[0].variables).unwrap();
    assert_eq!(a, b);
}

fn store_shape(m: &ArgSpan, id: ParamId) -> (usize, usize) {
    m.params().value(id).dim()
}
