//! Line-delimited JSON records for corpora and knowledge bases.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    tokenize, AnnotatedExample, ArgumentScheme, FactVariable, Grounding, KnowledgeBase,
    Provenance, Span, SpanLabeling, Stance,
};
use crate::error::{Error, Result};

/// On-disk form of an [`AnnotatedExample`]. Spans are character offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub topic: String,
    pub text: String,
    pub stance: String,
    #[serde(default)]
    pub schemes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme_probs: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub spans: Vec<(usize, usize, String)>,
    #[serde(default)]
    pub variables: Vec<String>,
    pub provenance: Provenance,
}

fn field_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Record {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

impl CorpusRecord {
    pub fn from_example(ex: &AnnotatedExample) -> Self {
        CorpusRecord {
            id: ex.id.clone(),
            topic: ex.topic.clone(),
            text: ex.argument.raw.clone(),
            stance: ex.stance.name().to_string(),
            schemes: ex.schemes.iter().map(|s| s.name().to_string()).collect(),
            scheme_probs: ex.scheme_prob_map(),
            spans: ex
                .spans
                .spans
                .iter()
                .map(|s| {
                    let (a, b) = ex.argument.token_to_char_span(s.start, s.end);
                    (a, b, s.grounding.id().to_string())
                })
                .collect(),
            variables: ex.variables.clone(),
            provenance: ex.provenance,
        }
    }

    /// Converts to an example; `line` is only used for error reporting.
    pub fn into_example(self, line: usize) -> Result<AnnotatedExample> {
        let stance: Stance = self
            .stance
            .parse()
            .map_err(|e: Error| field_err(line, "stance", e.to_string()))?;
        let mut schemes = BTreeSet::new();
        for s in &self.schemes {
            let scheme: ArgumentScheme = s
                .parse()
                .map_err(|e: Error| field_err(line, "schemes", e.to_string()))?;
            schemes.insert(scheme);
        }
        let scheme_probs = match &self.scheme_probs {
            None => None,
            Some(map) => {
                let mut probs = [0.0; ArgumentScheme::COUNT];
                for (name, &p) in map {
                    let scheme: ArgumentScheme = name
                        .parse()
                        .map_err(|e: Error| field_err(line, "scheme_probs", e.to_string()))?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(field_err(
                            line,
                            "scheme_probs",
                            format!("probability {p} for `{name}` outside [0, 1]"),
                        ));
                    }
                    probs[scheme.index()] = p;
                }
                if map.len() != ArgumentScheme::COUNT {
                    return Err(field_err(
                        line,
                        "scheme_probs",
                        "expected a probability for each of the 6 schemes",
                    ));
                }
                Some(probs)
            }
        };
        let argument = tokenize(&self.text);
        let char_len = self.text.chars().count();
        let mut spans = Vec::with_capacity(self.spans.len());
        for &(a, b, ref id) in &self.spans {
            if a >= b || b > char_len {
                return Err(field_err(
                    line,
                    "spans",
                    format!("character span {a}..{b} outside text of length {char_len}"),
                ));
            }
            let (s, e) = argument.char_to_token_span(a, b).ok_or_else(|| {
                field_err(line, "spans", format!("character span {a}..{b} covers no token"))
            })?;
            spans.push(Span::new(s, e, Grounding::from_id(id)));
        }
        let spans = SpanLabeling::new(spans, argument.len())
            .map_err(|e| field_err(line, "spans", e.to_string()))?;
        let ex = AnnotatedExample {
            id: self.id,
            topic: self.topic,
            argument,
            stance,
            schemes,
            scheme_probs,
            spans,
            variables: self.variables,
            provenance: self.provenance,
        };
        ex.validate()
            .map_err(|e| field_err(line, "variables", e.to_string()))?;
        Ok(ex)
    }
}

fn parse_line(line_no: usize, line: &str) -> Result<AnnotatedExample> {
    let record: CorpusRecord = serde_json::from_str(line).map_err(|e| {
        let msg = e.to_string();
        // serde names the offending field between backticks when it can.
        let field = msg
            .split('`')
            .nth(1)
            .unwrap_or("record")
            .to_string();
        field_err(line_no, &field, msg)
    })?;
    record.into_example(line_no)
}

/// Streaming reader over a corpus file. Blank lines are skipped; line
/// numbers are 1-based.
pub struct CorpusReader {
    lines: Lines<BufReader<File>>,
    line_no: usize,
    path: PathBuf,
}

impl CorpusReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(CorpusReader {
            lines: BufReader::new(file).lines(),
            line_no: 0,
            path,
        })
    }
}

impl Iterator for CorpusReader {
    type Item = Result<AnnotatedExample>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_line(self.line_no, &line));
        }
    }
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<AnnotatedExample>> {
    CorpusReader::open(path)?.collect()
}

pub fn write_corpus<'a>(
    examples: impl IntoIterator<Item = &'a AnnotatedExample>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let records = examples.into_iter().map(CorpusRecord::from_example);
    write_jsonl(records, path.as_ref())
}

pub(crate) fn write_jsonl<T: Serialize>(
    records: impl IntoIterator<Item = T>,
    path: &Path,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| field_err(i + 1, "record", e.to_string()))?,
        );
    }
    Ok(out)
}

pub fn read_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let vars: Vec<FactVariable> = read_jsonl(path.as_ref())?;
    KnowledgeBase::new(vars)
}

pub fn write_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(kb.variables(), path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    const RECORD: &str = r#"{"id":"ex1","topic":"gun control","text":"Gun laws reduce gun violence.","stance":"pro","schemes":["from_consequence"],"spans":[[0,8,"v1"],[16,28,"OTHERS"]],"variables":["v1"],"provenance":"fixture"}"#;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_reads_as_empty_corpus() {
        let f = write("");
        assert!(read_corpus(f.path()).unwrap().is_empty());
    }

    #[test]
    fn fixture_record_round_trips() {
        let f = write(RECORD);
        let examples = read_corpus(f.path()).unwrap();
        assert_eq!(examples.len(), 1);
        let ex = &examples[0];
        assert_eq!(ex.spans.spans[0], Span::new(0, 2, Grounding::Variable("v1".into())));
        assert_eq!(ex.spans.spans[1], Span::new(3, 5, Grounding::Others));
        let out = tempfile::NamedTempFile::new().unwrap();
        write_corpus(&examples, out.path()).unwrap();
        assert_eq!(read_corpus(out.path()).unwrap(), examples);
        let text = std::fs::read_to_string(out.path()).unwrap();
        assert_eq!(text.trim(), RECORD);
    }

    #[test]
    fn unknown_scheme_reports_line_and_field() {
        let bad = RECORD.replace("from_consequence", "banana");
        let f = write(&format!("{RECORD}\n\n{bad}\n"));
        let err = read_corpus(f.path()).unwrap_err();
        match err {
            Error::Record { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "schemes");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn bad_stance_and_missing_field() {
        let f = write(&RECORD.replace("\"pro\"", "\"neutral\""));
        assert!(matches!(
            read_corpus(f.path()),
            Err(Error::Record { ref field, .. }) if field == "stance"
        ));
        let f = write(&RECORD.replace("\"topic\":\"gun control\",", ""));
        assert!(matches!(
            read_corpus(f.path()),
            Err(Error::Record { ref field, line: 1, .. }) if field == "topic"
        ));
    }

    #[test]
    fn kb_round_trip() {
        let kb = KnowledgeBase::new(vec![FactVariable {
            id: "v1".into(),
            text: "gun laws".into(),
            topic: "gun control".into(),
            origin: super::super::Origin::SeedKb,
        }])
        .unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_kb(&kb, out.path()).unwrap();
        assert_eq!(read_kb(out.path()).unwrap(), kb);
    }
}
