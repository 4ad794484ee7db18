//! Small deterministic corpora for tests, benchmarks and smoke runs.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    AnnotatedExample, ArgumentScheme, CorpusRecord, FactVariable, KnowledgeBase, Origin, Provenance, Stance,
};
use crate::error::{Error, Result};
use crate::generator::{
    derive_seed, substitute_template, tokenize_with_specials, EncoderInput, GeneratorExample,
};

/// Templates of the control fixture, one per (stance, scheme) cell.
pub const CONTROL_TEMPLATES: [(Stance, ArgumentScheme, &str); 8] = [
    (Stance::Pro, ArgumentScheme::FromConsequence, "<VAR_0> leads to <VAR_1>"),
    (Stance::Con, ArgumentScheme::FromConsequence, "<VAR_0> does not lead to <VAR_1>"),
    (Stance::Pro, ArgumentScheme::FromSourceAuthority, "experts agree that <VAR_0> supports <VAR_1>"),
    (Stance::Con, ArgumentScheme::FromSourceAuthority, "experts doubt that <VAR_0> supports <VAR_1>"),
    (Stance::Pro, ArgumentScheme::RuleOrPrinciple, "<VAR_1> is a basic right protected by <VAR_0>"),
    (Stance::Con, ArgumentScheme::RuleOrPrinciple, "<VAR_1> is a violation of <VAR_0>"),
    (Stance::Pro, ArgumentScheme::FromSourceKnowledge, "in other countries <VAR_0> has improved <VAR_1>"),
    (Stance::Con, ArgumentScheme::FromSourceKnowledge, "in other countries <VAR_0> has harmed <VAR_1>"),
];

/// Topic and variable pairs of the control fixture.
pub const CONTROL_VARIABLES: [(&str, [&str; 2]); 4] = [
    ("Gun Control", ["gun laws", "gun violence"]),
    ("School Uniforms", ["school uniforms", "student unity"]),
    ("Nuclear Energy", ["nuclear power", "carbon emissions"]),
    ("Death Penalty", ["the death penalty", "violent crime"]),
];

fn generator_example(id: String, input: EncoderInput, stance: Stance, scheme: ArgumentScheme, template: &str, argument: &str) -> GeneratorExample {
    GeneratorExample {
        id,
        input,
        stance,
        scheme: Some(scheme),
        template: Some(tokenize_with_specials(template)),
        argument: tokenize_with_specials(argument),
    }
}

/// 32 generation rows whose targets are a deterministic function of the
/// stance and scheme codes: every variable set meets every template.
///
/// All rows of one variable set share an encoder ordering, so changing a
/// control code on any row yields the input of another row.
pub fn control_fixture(seed: u64) -> Vec<GeneratorExample> {
    let mut out = Vec::with_capacity(32);
    for (v, (topic, vars)) in CONTROL_VARIABLES.iter().enumerate() {
        let vars: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        let input = EncoderInput::build(topic, &vars, derive_seed(seed, &format!("control-set-{v}")))
            .expect("two variables");
        for (stance, scheme, template) in CONTROL_TEMPLATES {
            let argument = substitute_template(template, &input).expect("placeholders in range");
            out.push(generator_example(
                format!("ctl-{v}-{}-{}", stance.name(), scheme.name()),
                input.clone(),
                stance,
                scheme,
                template,
                &argument,
            ));
        }
    }
    out
}

/// Row of `control_fixture` with the same variables and the given codes.
pub fn control_target<'a>(
    fixture: &'a [GeneratorExample],
    input: &EncoderInput,
    stance: Stance,
    scheme: ArgumentScheme,
) -> Option<&'a GeneratorExample> {
    fixture
        .iter()
        .find(|e| &e.input == input && e.stance == stance && e.scheme == Some(scheme))
}

/// The four death-penalty rows of the published generation samples, with
/// their templates and arguments verbatim (lowercased).
pub fn death_penalty_samples() -> Vec<GeneratorExample> {
    let vars = vec!["human rights around the world".to_string(), "mandatory death sentence".to_string()];
    let input = EncoderInput::with_permutation("Death Penalty", &vars, vec![0, 1]).expect("two variables");
    let rows = [
        (
            Stance::Pro,
            ArgumentScheme::FromSourceAuthority,
            "<VAR_0> supporters of the bill say it is a step toward <VAR_1>",
            "human rights supporters of the bills say it is a step towards a mandatory death sentence",
        ),
        (
            Stance::Con,
            ArgumentScheme::FromSourceAuthority,
            "<VAR_0> advocates have long argued that <VAR_1>",
            "human rights advocates have long advocated that mandatory death sentences should be abolished",
        ),
        (
            Stance::Pro,
            ArgumentScheme::RuleOrPrinciple,
            "<VAR_1> is not a violation of <VAR_0>",
            "mandatory death sentence is not a violation of human rights",
        ),
        (
            Stance::Con,
            ArgumentScheme::RuleOrPrinciple,
            "<VAR_1> is a violation of <VAR_0>",
            "mandatory death sentence is a violation to international human rights law",
        ),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, (stance, scheme, template, argument))| {
            generator_example(format!("dp-{}", i + 1), input.clone(), *stance, *scheme, template, argument)
        })
        .collect()
}

pub const TOPICS: [&str; 6] = [
    "Death Penalty",
    "Gun Control",
    "School Uniforms",
    "Nuclear Energy",
    "Minimum Wage",
    "Abortion",
];

const ADJECTIVES: [&str; 16] = [
    "public", "violent", "economic", "human", "mandatory", "social", "national", "local", "personal", "global",
    "legal", "medical", "financial", "civil", "moral", "urban",
];

const NOUNS: [&str; 16] = [
    "safety", "crime", "growth", "rights", "sentences", "unity", "security", "schools", "freedom", "emissions",
    "wages", "health", "costs", "liberties", "values", "housing",
];

const FILLERS: [&str; 4] = ["indeed", "clearly", "arguably", "frankly"];

/// One sentence skeleton per scheme. `{X}` and `{Y}` are variable slots,
/// `{N}` takes the negation for con arguments. Every skeleton mentions
/// each variable twice and carries a claim cue.
pub fn skeleton(scheme: ArgumentScheme) -> &'static str {
    match scheme {
        ArgumentScheme::FromConsequence => "{X} is {N}favourable as it leads to {Y} and {X} will {N}help {Y}",
        ArgumentScheme::FromSourceAuthority => {
            "experts say {X} is {N}favourable for {Y} and scientists think {X} will {N}protect {Y}"
        }
        ArgumentScheme::FromSourceKnowledge => {
            "in other countries {X} has {N}improved {Y} and history shows {X} will {N}support {Y}"
        }
        ArgumentScheme::GoalFromMeansMeansForGoal => "{X} is {N}needed to achieve {Y} so we should {N}use {X} for {Y}",
        ArgumentScheme::RuleOrPrinciple => "{X} is {N}favourable as it respects {Y} because {X} should {N}protect {Y}",
        ArgumentScheme::Others => "people often talk about {X} and {Y} but {X} will {N}change {Y}",
    }
}

/// Shape of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpec {
    /// At most six.
    pub num_topics: usize,
    /// Human-annotated examples per topic.
    pub examples_per_topic: usize,
    /// Examples per topic with known variables but no spans, for the grounder.
    pub unlabeled_per_topic: usize,
    /// Raw parallel-corpus texts per topic.
    pub parallel_per_topic: usize,
    pub kb_per_topic: usize,
    /// Adjectives and nouns drawn from when building fact phrases, each.
    pub vocabulary: usize,
    /// Probability of a leading filler word.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            num_topics: 2,
            examples_per_topic: 16,
            unlabeled_per_topic: 4,
            parallel_per_topic: 16,
            kb_per_topic: 6,
            vocabulary: 12,
            noise_rate: 0.1,
            seed: 7,
        }
    }
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 || self.num_topics > TOPICS.len() {
            return Err(Error::Config(format!("num_topics must be in 1..={}", TOPICS.len())));
        }
        if self.vocabulary < 2 || self.vocabulary > ADJECTIVES.len() {
            return Err(Error::Config(format!("vocabulary must be in 2..={}", ADJECTIVES.len())));
        }
        if self.kb_per_topic < 2 || self.kb_per_topic > self.vocabulary * self.vocabulary {
            return Err(Error::Config(format!(
                "kb_per_topic must be in 2..={}",
                self.vocabulary * self.vocabulary
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config("noise_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A synthetic corpus: gold examples, grounder inputs, raw parallel texts
/// and the seed knowledge base.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureCorpus {
    pub annotated: Vec<AnnotatedExample>,
    pub unlabeled: Vec<AnnotatedExample>,
    pub parallel: Vec<AnnotatedExample>,
    pub kb: KnowledgeBase,
}

fn realize(
    rng: &mut ChaCha8Rng,
    spec: &FixtureSpec,
    id: String,
    topic: &str,
    x: &FactVariable,
    y: &FactVariable,
    stance: Stance,
    scheme: ArgumentScheme,
) -> Result<AnnotatedExample> {
    let mut text = String::new();
    if rng.random_bool(spec.noise_rate) {
        text.push_str(FILLERS.choose(rng).expect("fillers"));
        text.push(' ');
    }
    let neg = if stance == Stance::Con { "not " } else { "" };
    let mut spans = Vec::new();
    let mut rest = skeleton(scheme);
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let slot = &rest[open + 1..open + 2];
        rest = &rest[open + 3..];
        match slot {
            "N" => text.push_str(neg),
            _ => {
                let var = if slot == "X" { x } else { y };
                let start = text.chars().count();
                text.push_str(&var.text);
                spans.push((start, text.chars().count(), var.id.clone()));
            }
        }
    }
    text.push_str(rest);
    CorpusRecord {
        id,
        topic: topic.to_string(),
        text,
        stance: stance.name().to_string(),
        schemes: vec![scheme.name().to_string()],
        scheme_probs: None,
        spans,
        variables: vec![x.id.clone(), y.id.clone()],
        provenance: Provenance::P1Human,
    }
    .into_example(0)
}

/// Deterministic corpus for `spec`.
pub fn generate_fixture(spec: &FixtureSpec) -> Result<FixtureCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut phrases: Vec<String> = ADJECTIVES[..spec.vocabulary]
        .iter()
        .flat_map(|a| NOUNS[..spec.vocabulary].iter().map(move |n| format!("{a} {n}")))
        .collect();
    let mut kb = KnowledgeBase::new(Vec::new())?;
    let mut out = FixtureCorpus {
        annotated: Vec::new(),
        unlabeled: Vec::new(),
        parallel: Vec::new(),
        kb: KnowledgeBase::new(Vec::new())?,
    };
    for (t, topic) in TOPICS[..spec.num_topics].iter().enumerate() {
        phrases.shuffle(&mut rng);
        let vars: Vec<FactVariable> = phrases[..spec.kb_per_topic]
            .iter()
            .enumerate()
            .map(|(k, text)| FactVariable {
                id: format!("t{t}v{k}"),
                text: text.clone(),
                topic: topic.to_string(),
                origin: Origin::SeedKb,
            })
            .collect();
        let sections = [
            ("p", spec.examples_per_topic),
            ("u", spec.unlabeled_per_topic),
            ("c", spec.parallel_per_topic),
        ];
        for (tag, count) in sections {
            for i in 0..count {
                let pair: Vec<&FactVariable> = vars.choose_multiple(&mut rng, 2).collect();
                let stance = if rng.random_bool(0.5) { Stance::Pro } else { Stance::Con };
                let scheme = ArgumentScheme::ALL[rng.random_range(0..ArgumentScheme::COUNT)];
                let id = format!("{tag}{t}-{i:03}");
                let mut ex = realize(&mut rng, spec, id, topic, pair[0], pair[1], stance, scheme)?;
                match tag {
                    "p" => out.annotated.push(ex),
                    "u" => {
                        ex.spans = crate::corpus::SpanLabeling::empty();
                        ex.schemes.clear();
                        ex.provenance = Provenance::P1Auto;
                        out.unlabeled.push(ex);
                    }
                    _ => {
                        ex.spans = crate::corpus::SpanLabeling::empty();
                        ex.schemes.clear();
                        ex.variables.clear();
                        ex.provenance = Provenance::PcAuto;
                        out.parallel.push(ex);
                    }
                }
            }
        }
        for v in vars {
            kb.insert(v)?;
        }
    }
    out.kb = kb;
    Ok(out)
}
