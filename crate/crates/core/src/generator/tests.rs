use proptest::prelude::*;

use super::*;
use crate::corpus::{tokenize, Provenance, Span, SpanLabeling};
use crate::fixture::{control_fixture, control_target, death_penalty_samples};
use crate::nn::gradcheck;

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn tiny_config(variant: Variant, seed: u64, hidden: usize) -> GeneratorConfig {
    let mut c = GeneratorConfig::toy(variant, seed);
    c.encoder = StackDims { layers: 1, hidden, heads: 2 };
    c.decoder = c.encoder;
    c.beam.max_length = 20;
    c.max_positions = 48;
    c
}

#[test]
fn special_tokens_are_atomic() {
    assert_eq!(SPECIAL_TOKENS.len(), 13);
    let mut sorted = SPECIAL_TOKENS.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), 13);
    for tok in SPECIAL_TOKENS {
        assert_eq!(tokenize_with_specials(tok), vec![tok.to_string()]);
        let text = format!("Some words{tok}more");
        assert_eq!(tokenize_with_specials(&text), strings(&["some", "words", tok, "more"]));
    }
    assert_eq!(tokenize_with_specials("a <eos>"), strings(&["a", EOS]));
    // not a special token: split like ordinary text
    assert!(tokenize_with_specials("<bogus>").len() > 1);
}

#[test]
fn encoder_input_layout() {
    let vars = strings(&["human rights around the world", "mandatory death sentence"]);
    let input = EncoderInput::with_permutation("Death Penalty", &vars, vec![0, 1]).unwrap();
    assert_eq!(
        input.to_string(),
        "Death Penalty <VAR_0> human rights around the world <VAR_1> mandatory death sentence"
    );
    let swapped = EncoderInput::with_permutation("Death Penalty", &vars, vec![1, 0]).unwrap();
    assert_eq!(swapped.variables[0], vars[1]);
    assert_eq!(swapped.position_of(0), Some(1));

    let one = EncoderInput::build("t", &strings(&["x"]), 99).unwrap();
    assert_eq!(one.tokens(), strings(&["t", "<VAR_0>", "x"]));

    let four = strings(&["a", "b", "c", "d"]);
    assert_eq!(
        EncoderInput::build("t", &four, 7).unwrap(),
        EncoderInput::build("t", &four, 7).unwrap()
    );
    assert!(EncoderInput::build("t", &strings(&["a", "b", "c", "d", "e"]), 7).is_err());
    assert!(EncoderInput::build("t", &[], 7).is_err());
    assert!(EncoderInput::with_permutation("t", &four, vec![0, 0, 1, 2]).is_err());
}

#[test]
fn control_prefixes() {
    use ArgumentScheme as S;
    let p = |v, st, sc| build_control_prefix(v, st, sc, Phase::First, None);
    assert_eq!(
        p(Variant::Mono, Some(Stance::Pro), Some(S::FromConsequence)).unwrap(),
        strings(&["<pro>", "<from_consequence>", "<argument>"])
    );
    assert_eq!(
        p(Variant::Dual, Some(Stance::Con), Some(S::RuleOrPrinciple)).unwrap(),
        strings(&["<con>", "<rule_or_principle>", "<pattern>"])
    );
    assert_eq!(p(Variant::Stance, Some(Stance::Pro), None).unwrap(), strings(&["<pro>", "<argument>"]));
    assert_eq!(
        p(Variant::Scheme, None, Some(S::GoalFromMeansMeansForGoal)).unwrap(),
        strings(&["<goal_from_means/means_for_goal>", "<argument>"])
    );
    // codes a variant does not use are ignored
    assert_eq!(
        p(Variant::Stance, Some(Stance::Con), Some(S::Others)).unwrap(),
        strings(&["<con>", "<argument>"])
    );
    assert!(p(Variant::Mono, Some(Stance::Pro), Some(S::Others)).is_err());
    assert!(p(Variant::Mono, Some(Stance::Pro), None).is_err());
    assert!(p(Variant::Dual, None, Some(S::FromConsequence)).is_err());

    let template = strings(&["<VAR_1>", "is", "bad"]);
    assert_eq!(
        build_control_prefix(Variant::Dual, None, None, Phase::Second, Some(&template)).unwrap(),
        strings(&["<VAR_1>", "is", "bad", "<argument>"])
    );
    assert!(build_control_prefix(Variant::Mono, None, None, Phase::Second, Some(&template)).is_err());
}

#[test]
fn template_substitution() {
    let input = EncoderInput::with_permutation("t", &strings(&["gun laws", "gun violence"]), vec![0, 1]).unwrap();
    assert_eq!(
        substitute_template("<VAR_0> reduces <VAR_1>", &input).unwrap(),
        "gun laws reduces gun violence"
    );
    assert_eq!(substitute_template("no placeholders here", &input).unwrap(), "no placeholders here");
    let err = substitute_template("<VAR_2>", &input).unwrap_err().to_string();
    assert!(err.contains("<VAR_2>"), "{err}");

    let (unknown, omitted) = template_flags(&strings(&["<VAR_0>", "x", "<VAR_3>"]), 2);
    assert_eq!(unknown, strings(&["<VAR_3>"]));
    assert_eq!(omitted, vec![1]);
}

#[test]
fn templates_from_grounded_spans() {
    let argument = tokenize("Gun laws reduce gun violence in cities");
    let spans = SpanLabeling::new(
        vec![
            Span::new(0, 2, Grounding::from_id("v1")),
            Span::new(3, 5, Grounding::from_id("v2")),
            Span::new(6, 7, Grounding::Others),
        ],
        argument.tokens.len(),
    )
    .unwrap();
    let ex = AnnotatedExample {
        id: "e".into(),
        topic: "Gun Control".into(),
        argument,
        stance: Stance::Pro,
        schemes: [ArgumentScheme::FromConsequence].into_iter().collect(),
        scheme_probs: None,
        spans,
        variables: strings(&["v1", "v2"]),
        provenance: Provenance::Fixture,
    };
    let input = EncoderInput::with_permutation("Gun Control", &strings(&["gun laws", "gun violence"]), vec![1, 0]).unwrap();
    assert_eq!(
        derive_template(&ex, &input).unwrap(),
        strings(&["<VAR_1>", "reduce", "<VAR_0>", "in", "cities"])
    );

    let mut ungrounded = ex.clone();
    ungrounded.spans = SpanLabeling::empty();
    assert_eq!(derive_template(&ungrounded, &input), None);

    let kb = KnowledgeBase::new(vec![
        crate::corpus::FactVariable {
            id: "v1".into(),
            text: "gun laws".into(),
            topic: "Gun Control".into(),
            origin: crate::corpus::Origin::SeedKb,
        },
        crate::corpus::FactVariable {
            id: "v2".into(),
            text: "gun violence".into(),
            topic: "Gun Control".into(),
            origin: crate::corpus::Origin::SeedKb,
        },
    ])
    .unwrap();
    let row = GeneratorExample::from_annotated(&ex, &kb, 3).unwrap();
    assert_eq!(row.scheme, Some(ArgumentScheme::FromConsequence));
    assert!(row.template.is_some());

    // dual training refuses rows without a template
    let bare = GeneratorExample::from_annotated(&ungrounded, &kb, 3).unwrap();
    let err = ArgU::train(&[bare], &[], tiny_config(Variant::Dual, 1, 8)).unwrap_err();
    assert!(err.to_string().contains("template"), "{err}");
}

/// Bigram toy model: next-token log-probabilities depend on the last token.
fn bigram_step(table: &[Vec<f64>]) -> impl Fn(&usize, usize) -> Result<(usize, Vec<f64>)> + '_ {
    move |_, tok| Ok((tok, table[tok].clone()))
}

fn normalize(row: &[f64]) -> Vec<f64> {
    log_softmax(row)
}

#[test]
fn beam_on_one_hot_is_greedy() {
    // 0 -> 1 -> 2 -> 3 -> 4(end)
    let v = 5;
    let table: Vec<Vec<f64>> = (0..v)
        .map(|t| (0..v).map(|u| if u == (t + 1).min(4) { 0.0 } else { f64::NEG_INFINITY }).collect())
        .collect();
    for width in 1..=5 {
        let config = BeamConfig { beam_width: width, max_length: 10, block_repeated_trigrams: true };
        let r = beam_search(0, table[0].clone(), &[4], &config, bigram_step(&table)).unwrap();
        assert_eq!(r.tokens, vec![1, 2, 3]);
        assert!(r.finished);
        assert_eq!(r.score, 0.0);
    }
    let zero = BeamConfig { beam_width: 0, ..BeamConfig::default() };
    assert!(beam_search(0, table[0].clone(), &[4], &zero, bigram_step(&table)).is_err());
}

#[test]
fn beam_blocks_trigrams_and_respects_length() {
    // a model that loves cycling 1 2 3 1 2 3 and never ends
    let table: Vec<Vec<f64>> = (0..5)
        .map(|t| normalize(&(0..5).map(|u| if u == t % 3 + 1 { 5.0 } else { 0.0 }).collect::<Vec<_>>()))
        .collect();
    let config = BeamConfig { beam_width: 3, max_length: 12, block_repeated_trigrams: true };
    let r = beam_search(0, table[0].clone(), &[4], &config, bigram_step(&table)).unwrap();
    assert!(r.tokens.len() <= 12);
    assert!(!has_repeated_trigram(&r.tokens), "{:?}", r.tokens);

    let open = BeamConfig { block_repeated_trigrams: false, ..config };
    let r = beam_search(0, table[0].clone(), &[4], &open, bigram_step(&table)).unwrap();
    assert!(has_repeated_trigram(&r.tokens));
    assert!(r.tokens.len() <= 12);
}

/// Best score over every sequence of at most `max_len` tokens that ends
/// with the terminator or is cut at the cap, without repeated trigrams.
fn exhaustive_best(table: &[Vec<f64>], end: usize, max_len: usize) -> f64 {
    fn go(table: &[Vec<f64>], end: usize, max_len: usize, seq: &mut Vec<usize>, last: usize, score: f64, best: &mut f64) {
        let lp = &table[last];
        *best = best.max(score + lp[end]);
        if seq.len() == max_len {
            *best = best.max(score);
            return;
        }
        for tok in 0..lp.len() {
            if tok == end || repeats_trigram(seq, tok) {
                continue;
            }
            seq.push(tok);
            go(table, end, max_len, seq, tok, score + lp[tok], best);
            seq.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(table, end, max_len, &mut Vec::new(), 0, 0.0, &mut best);
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn beam_beats_greedy_and_is_bounded_by_exhaustive(raw in prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 5), 5)) {
        let table: Vec<Vec<f64>> = raw.iter().map(|r| normalize(r)).collect();
        let cfg = |w| BeamConfig { beam_width: w, max_length: 6, block_repeated_trigrams: true };
        let greedy = beam_search(0, table[0].clone(), &[4], &cfg(1), bigram_step(&table)).unwrap();
        let beam = beam_search(0, table[0].clone(), &[4], &cfg(5), bigram_step(&table)).unwrap();
        let best = exhaustive_best(&table, 4, 6);
        prop_assert!(beam.score >= greedy.score - 1e-12, "beam {} greedy {}", beam.score, greedy.score);
        prop_assert!(beam.score <= best + 1e-12);
        prop_assert!(beam.tokens.len() <= 6);
        prop_assert!(!has_repeated_trigram(&beam.tokens));
    }
}

#[test]
fn uniform_logits_give_log_vocab() {
    let data = control_fixture(5);
    let mut model = ArgU::new(tiny_config(Variant::Dual, 2, 8), ArgU::build_vocab(&data)).unwrap();
    model.zero_output_layer();
    let (loss, _) = model.loss(&data[..4], false).unwrap();
    let expected = (model.vocab().len() as f64).ln();
    assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    for tok in SPECIAL_TOKENS.iter().chain([&EOS]) {
        assert!(model.vocab().get(tok).is_some());
    }
}

#[test]
fn cached_decoding_matches_graph() {
    let data = death_penalty_samples();
    for variant in [Variant::Mono, Variant::Dual] {
        let model = ArgU::new(tiny_config(variant, 11, 16), ArgU::build_vocab(&data)).unwrap();
        let ex = &data[1];
        let mut context = build_control_prefix(variant, Some(ex.stance), ex.scheme, Phase::First, None).unwrap();
        context.extend(ex.template.clone().unwrap());
        let graph = model.context_logits(&ex.input, &context).unwrap();
        let cached = model.cached_logits(&model.encode(&ex.input).unwrap(), &context);
        let diff = (&graph - &cached).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(diff < 1e-10, "{variant}: {diff}");
    }
}

#[test]
fn generator_gradients_match_finite_differences() {
    let data: Vec<GeneratorExample> = death_penalty_samples().into_iter().take(2).collect();
    let mut model = ArgU::new(tiny_config(Variant::Dual, 4, 8), ArgU::build_vocab(&data)).unwrap();
    let (_, grads) = model.loss(&data, true).unwrap();
    let grads = grads.unwrap();
    let probe = model.clone();
    let checks = gradcheck::check_all(
        model.params_mut(),
        1e-5,
        &|id| grads.param(id).cloned().unwrap_or_else(|| Mat::zeros(probe.params().value(id).dim())),
        &mut |store| probe.loss_with(store, &data, false).unwrap().0,
    );
    for c in &checks {
        assert!(c.passes(1e-4, 1e-8), "{}: rel {} abs {}", c.name, c.relative_error, c.max_abs_error);
    }
}

#[test]
fn decoding_requires_training() {
    let data = death_penalty_samples();
    let model = ArgU::new(tiny_config(Variant::Mono, 1, 8), ArgU::build_vocab(&data)).unwrap();
    let err = model.generate_from(&data[0].input, Some(Stance::Pro), data[0].scheme).unwrap_err();
    assert!(matches!(err, Error::Untrained(_)));
    assert!(ArgU::new(GeneratorConfig::new(Variant::Mono), ArgU::build_vocab(&data)).is_err());

    let mut bad = GeneratorConfig::toy(Variant::Mono, 1);
    bad.max_positions = 20;
    assert!(bad.validate().is_err());
    let mut bad = GeneratorConfig::toy(Variant::Mono, 1);
    bad.decoder.hidden = 32;
    assert!(bad.validate().is_err());
}

fn quick_train(variant: Variant, data: &[GeneratorExample], seed: u64) -> ArgU {
    let mut c = tiny_config(variant, seed, 32);
    c.train.max_steps = 600;
    c.train.learning_rate = 3e-3;
    c.train.eval_every = 25;
    c.train.early_stop_patience = 100;
    c.train.stop_below = Some(0.005);
    let (model, log) = ArgU::train(data, &[], c).unwrap();
    assert!(log.best_validation_loss < 0.05, "{variant}: {}", log.best_validation_loss);
    model
}

#[test]
fn dual_memorizes_published_samples() {
    let data = death_penalty_samples();
    let model = quick_train(Variant::Dual, &data, 21);
    for ex in &data {
        let rec = model.generate_from(&ex.input, Some(ex.stance), ex.scheme).unwrap();
        assert_eq!(rec.template.as_ref(), ex.template.as_ref(), "{}", ex.id);
        assert_eq!(rec.argument, ex.argument, "{}", ex.id);
        let mut expected_context = rec.template.clone().unwrap();
        expected_context.push(ARGUMENT.into());
        assert_eq!(rec.phase2_context, Some(expected_context));
        assert!(rec.unknown_placeholders.is_empty() && rec.omitted_variables.is_empty());
    }
    let row1 = model.generate_from(&data[0].input, Some(Stance::Pro), Some(ArgumentScheme::FromSourceAuthority)).unwrap();
    assert_eq!(row1.template_text().unwrap(), "<VAR_0> supporters of the bill say it is a step toward <VAR_1>");
    assert_eq!(
        row1.argument_text(),
        "human rights supporters of the bills say it is a step towards a mandatory death sentence"
    );
    let row4 = model.generate_from(&data[0].input, Some(Stance::Con), Some(ArgumentScheme::RuleOrPrinciple)).unwrap();
    assert_eq!(row4.template_text().unwrap(), "<VAR_1> is a violation of <VAR_0>");
    assert_eq!(row4.argument_text(), "mandatory death sentence is a violation to international human rights law");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("argu.ckpt");
    model.save(&path).unwrap();
    let back = ArgU::load(&path).unwrap();
    let again = back.generate_from(&data[0].input, Some(Stance::Pro), Some(ArgumentScheme::FromSourceAuthority)).unwrap();
    assert_eq!(again, row1);
}

#[test]
fn mono_follows_stance_code() {
    let data: Vec<GeneratorExample> = control_fixture(9).into_iter().take(8).collect();
    let model = quick_train(Variant::Mono, &data, 33);
    for ex in &data {
        let scheme = ex.scheme.unwrap();
        let rec = model.generate_from(&ex.input, Some(ex.stance), Some(scheme)).unwrap();
        assert_eq!(rec.argument, ex.argument, "{}", ex.id);
        assert!(rec.argument.len() <= model.config().beam.max_length);
        let flipped = model.generate_from(&ex.input, Some(ex.stance.flipped()), Some(scheme)).unwrap();
        let target = control_target(&data, &ex.input, ex.stance.flipped(), scheme).unwrap();
        assert_eq!(flipped.argument, target.argument, "{} flipped", ex.id);
    }
}

#[test]
fn generation_request_round_trip() {
    let data = death_penalty_samples();
    let mut model = ArgU::new(tiny_config(Variant::Stance, 3, 8), ArgU::build_vocab(&data)).unwrap();
    model.mark_trained();
    let req = GenerationRequest {
        topic: "Death Penalty".into(),
        variables: strings(&["mandatory death sentence"]),
        stance: Some(Stance::Con),
        scheme: None,
        seed: 1,
    };
    let rec = model.generate(&req).unwrap();
    assert_eq!(rec.control_prefix, strings(&["<con>", "<argument>"]));
    assert!(rec.template.is_none() && rec.phase2_context.is_none());
    assert!(rec.argument.len() <= model.config().beam.max_length);
    assert!(!has_repeated_trigram(&rec.argument));
    let json = serde_json::to_string(&rec).unwrap();
    let back: GenerationRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn template_phase_never_stops_immediately() {
    let data = death_penalty_samples();
    let mut model = ArgU::new(tiny_config(Variant::Dual, 4, 8), ArgU::build_vocab(&data)).unwrap();
    model.mark_trained();
    model.zero_output_layer();
    let bias = model.params().find("lm_head.b").unwrap();
    let (eos, arg) = (model.vocab().id(EOS), model.vocab().id(ARGUMENT));
    model.params_mut().value_mut(bias)[[0, eos]] = 20.0;
    model.params_mut().value_mut(bias)[[0, arg]] = 20.0;
    let rec = model.generate_from(&data[0].input, Some(Stance::Pro), Some(ArgumentScheme::FromConsequence)).unwrap();
    let template = rec.template.unwrap();
    assert_eq!(template.len(), 1, "{template:?}");
    assert_eq!(rec.phase2_context.unwrap(), [template[0].clone(), ARGUMENT.to_string()]);
    // the argument phase may still end at once
    assert!(rec.argument.is_empty());
}
