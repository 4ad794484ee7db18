use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use factarg::corpus::Grounding;
use factarg::eval::{corpus_bleu, rouge_l, BleuConfig};
use factarg::fixture::{control_fixture, generate_fixture, FixtureSpec};
use factarg::generator::{beam_search, ArgU, BeamConfig, GeneratorConfig, Variant};
use factarg::grounder::{ArgSpan, GrounderConfig, GroundingExample};
use factarg::normalize::{normalize_corpus, FilterConfig, HashedBow};
use factarg_bench::{bigram_table, token_corpus};

fn beam(c: &mut Criterion) {
    let table = bigram_table(200, 1);
    let config = BeamConfig::default();
    c.bench_function("beam_search/bigram200_w5_len50", |b| {
        b.iter(|| {
            beam_search(0usize, table[0].clone(), &[199], &config, |_, tok| Ok((tok, table[tok].clone())))
                .unwrap()
        })
    });
}

fn metrics(c: &mut Criterion) {
    let (cands, refs) = token_corpus(1000, 25, 2);
    let config = BleuConfig::default();
    c.bench_function("corpus_bleu/1000x25", |b| {
        b.iter(|| corpus_bleu(black_box(&cands), black_box(&refs), &config).unwrap())
    });
    c.bench_function("rouge_l/1000x25", |b| {
        b.iter(|| {
            cands
                .iter()
                .zip(&refs)
                .map(|(x, y)| rouge_l(x, y).unwrap())
                .sum::<f64>()
        })
    });
}

fn normalization(c: &mut Criterion) {
    let corpus = generate_fixture(&FixtureSpec {
        num_topics: 4,
        examples_per_topic: 64,
        ..FixtureSpec::default()
    })
    .unwrap();
    // Drop every gold grounding so all spans go through the normalizer.
    let mut examples = corpus.annotated.clone();
    for ex in &mut examples {
        for span in &mut ex.spans.spans {
            span.grounding = Grounding::Others;
        }
    }
    let provider = HashedBow { width: 256 };
    let config = FilterConfig::default();
    c.bench_function("normalize_corpus/256_examples_1024_spans", |b| {
        b.iter(|| normalize_corpus(examples.clone(), &corpus.kb, &provider, &config).unwrap())
    });
}

fn inference(c: &mut Criterion) {
    let corpus = generate_fixture(&FixtureSpec::default()).unwrap();
    let examples: Vec<GroundingExample> = corpus
        .annotated
        .iter()
        .map(|e| GroundingExample::from_annotated(e, &corpus.kb))
        .collect::<Result<_, _>>()
        .unwrap();
    let grounder = ArgSpan::new(GrounderConfig::toy(3), ArgSpan::build_vocab(&examples)).unwrap();
    c.bench_function("argspan_ground/toy", |b| {
        b.iter(|| grounder.ground(&examples[0].argument, &examples[0].variables).unwrap())
    });

    let rows = control_fixture(5);
    let mut model =
        ArgU::new(GeneratorConfig::toy(Variant::Dual, 5), ArgU::build_vocab(&rows)).unwrap();
    // Untrained weights run every decode to the length cap, which bounds the cost.
    model.mark_trained();
    let row = &rows[0];
    c.bench_function("argu_dual_generate/toy_untrained", |b| {
        b.iter(|| model.generate_from(&row.input, Some(row.stance), row.scheme).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = beam, metrics, normalization, inference
}
criterion_main!(benches);
