//! Corpus ingestion, tokenization, document frequencies, splitting and
//! synthetic corpora.

mod split;
mod synth;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{stratified_split, Split, SplitSpec};
pub use synth::{generate_synthetic, write_markers, PlantedMarkers, SynthConfig};
pub use tokenize::{tokenize, Subword, CONTINUATION, DEFAULT_MAX_PIECE_LEN};

/// Ordered set of class names. Position defines the class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    classes: Vec<String>,
}

impl LabelSpace {
    pub fn new<I, S>(classes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.is_empty() {
            return Err(Error::validation("label space is empty"));
        }
        let mut seen = HashSet::new();
        for c in &classes {
            if c.is_empty() {
                return Err(Error::validation("empty class name"));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::validation(format!("duplicate class name {c:?}")));
            }
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.classes[index]
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(classes: Vec<String>) -> Result<Self> {
        LabelSpace::new(classes)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.classes
    }
}

/// One tokenized text with its gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub words: Vec<String>,
    pub subwords: Vec<Subword>,
    pub labels: BTreeSet<String>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        labels: impl IntoIterator<Item = impl Into<String>>,
        max_piece_len: usize,
    ) -> Self {
        let text = text.into();
        let (words, subwords) = tokenize(&text, max_piece_len);
        Self {
            id: id.into(),
            text,
            words,
            subwords,
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    /// Distinct words of this document in first-occurrence order.
    pub fn distinct_words(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.words
            .iter()
            .filter(|w| seen.insert(w.as_str()))
            .map(String::as_str)
            .collect()
    }

    /// Gold labels as a multi-hot vector over `space`.
    pub fn label_mask(&self, space: &LabelSpace) -> Vec<bool> {
        space
            .classes()
            .iter()
            .map(|c| self.labels.contains(c))
            .collect()
    }
}

/// On-disk record: exactly `id`, `text`, `labels`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub labels: Vec<String>,
}

/// Immutable set of documents plus document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    label_space: LabelSpace,
    documents: Vec<Document>,
    doc_frequency: BTreeMap<String, usize>,
}

impl Corpus {
    /// Validate labels and ids and compute document frequencies.
    pub fn new(label_space: LabelSpace, documents: Vec<Document>) -> Result<Self> {
        let mut ids = HashSet::new();
        for doc in &documents {
            if !ids.insert(doc.id.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate document id {:?}",
                    doc.id
                )));
            }
            if let Some(bad) = doc
                .labels
                .iter()
                .find(|l| label_space.index_of(l).is_none())
            {
                return Err(Error::validation(format!(
                    "document {:?} has unknown label {bad:?}",
                    doc.id
                )));
            }
        }
        let doc_frequency = document_frequencies(&documents);
        Ok(Self {
            label_space,
            documents,
            doc_frequency,
        })
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn doc_frequency(&self) -> &BTreeMap<String, usize> {
        &self.doc_frequency
    }

    /// Number of documents containing `word` (0 if unseen).
    pub fn df(&self, word: &str) -> usize {
        self.doc_frequency.get(word).copied().unwrap_or(0)
    }

    /// Append a document, updating document frequencies incrementally.
    pub fn push(&mut self, doc: Document) -> Result<()> {
        if self.documents.iter().any(|d| d.id == doc.id) {
            return Err(Error::validation(format!(
                "duplicate document id {:?}",
                doc.id
            )));
        }
        if let Some(bad) = doc
            .labels
            .iter()
            .find(|l| self.label_space.index_of(l).is_none())
        {
            return Err(Error::validation(format!(
                "document {:?} has unknown label {bad:?}",
                doc.id
            )));
        }
        for w in doc.distinct_words() {
            *self.doc_frequency.entry(w.to_owned()).or_insert(0) += 1;
        }
        self.documents.push(doc);
        Ok(())
    }

    /// Corpus made of the documents at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        let documents: Vec<Document> = indices.iter().map(|&i| self.documents[i].clone()).collect();
        let doc_frequency = document_frequencies(&documents);
        Corpus {
            label_space: self.label_space.clone(),
            documents,
            doc_frequency,
        }
    }

    /// Number of documents carrying each class, in label-space order.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_space.len()];
        for doc in &self.documents {
            for label in &doc.labels {
                if let Some(i) = self.label_space.index_of(label) {
                    counts[i] += 1;
                }
            }
        }
        counts
    }

    /// Serialize as JSONL in document order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for doc in &self.documents {
            // labels in label-space order, not set order
            let labels = self
                .label_space
                .classes()
                .iter()
                .filter(|c| doc.labels.contains(*c))
                .cloned()
                .collect();
            let record = CorpusRecord {
                id: doc.id.clone(),
                text: doc.text.clone(),
                labels,
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<jsonl writer>", e))?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn document_frequencies(documents: &[Document]) -> BTreeMap<String, usize> {
    let mut df = BTreeMap::new();
    for doc in documents {
        for w in doc.distinct_words() {
            *df.entry(w.to_owned()).or_insert(0) += 1;
        }
    }
    df
}

/// Parse JSONL records from `reader`. `source` is only used in error messages.
pub fn read_corpus<R: BufRead>(
    reader: R,
    source: &str,
    label_space: LabelSpace,
    max_piece_len: usize,
) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(bad) = record
            .labels
            .iter()
            .find(|l| label_space.index_of(l).is_none())
        {
            return Err(Error::validation(format!(
                "{source}:{line_no}: unknown label {bad:?}"
            )));
        }
        documents.push(Document::new(
            record.id,
            record.text,
            record.labels,
            max_piece_len,
        ));
    }
    if documents.is_empty() {
        return Err(Error::validation(format!("{source}: corpus is empty")));
    }
    Corpus::new(label_space, documents)
}

/// Load a JSONL corpus file.
pub fn load_corpus(path: &Path, label_space: LabelSpace, max_piece_len: usize) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(
        BufReader::new(file),
        &path.display().to_string(),
        label_space,
        max_piece_len,
    )
}

/// Collect the label set used in a JSONL file, sorted by name.
pub fn infer_label_space(path: &Path) -> Result<LabelSpace> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut labels = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        labels.extend(record.labels);
    }
    LabelSpace::new(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space() -> LabelSpace {
        LabelSpace::new(["HI", "ID", "NA"]).unwrap()
    }

    fn parse(text: &str) -> Result<Corpus> {
        read_corpus(text.as_bytes(), "test.jsonl", space(), 4)
    }

    #[test]
    fn label_space_rejects_duplicates_and_empty() {
        assert!(LabelSpace::new(Vec::<String>::new()).is_err());
        assert!(LabelSpace::new(["a", "b", "a"]).is_err());
        let s = LabelSpace::new(["b", "a"]).unwrap();
        assert_eq!(s.index_of("a"), Some(1));
    }

    #[test]
    fn loads_record_and_strips_punctuation() {
        let c = parse(r#"{"id":"a","text":"Try this recipe!","labels":["HI"]}"#).unwrap();
        assert_eq!(c.documents()[0].words, vec!["try", "this", "recipe"]);
        assert!(c.documents()[0].labels.contains("HI"));
    }

    #[test]
    fn df_counts_documents_not_occurrences() {
        let c = parse(concat!(
            r#"{"id":"a","text":"recipe recipe recipe","labels":["HI"]}"#,
            "\n",
            r#"{"id":"b","text":"another Recipe","labels":[]}"#
        ))
        .unwrap();
        assert_eq!(c.df("recipe"), 2);
        assert_eq!(c.df("another"), 1);
        assert_eq!(c.df("missing"), 0);
    }

    #[test]
    fn unknown_label_is_validation_error() {
        let err = parse(r#"{"id":"a","text":"x","labels":["XX"]}"#).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = parse(concat!(
            r#"{"id":"a","text":"x","labels":[]}"#,
            "\n",
            r#"{"id":"b","text":}"#
        ))
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        // extra fields are rejected too
        assert!(parse(r#"{"id":"a","text":"x","labels":[],"extra":1}"#).is_err());
    }

    #[test]
    fn empty_corpus_and_duplicate_ids() {
        assert!(matches!(parse("\n\n"), Err(Error::Validation(_))));
        let dup = concat!(
            r#"{"id":"a","text":"x","labels":[]}"#,
            "\n",
            r#"{"id":"a","text":"y","labels":[]}"#
        );
        assert!(matches!(parse(dup), Err(Error::Validation(_))));
    }

    #[test]
    fn push_increments_df_by_one() {
        let mut c = parse(r#"{"id":"a","text":"red fox","labels":["NA"]}"#).unwrap();
        let before = c.df("fox");
        c.push(Document::new("b", "fox fox jumps", ["ID"], 4))
            .unwrap();
        assert_eq!(c.df("fox"), before + 1);
        assert_eq!(c.df("jumps"), 1);
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(texts in proptest::collection::vec("[a-zA-Z0-9 ,.!]{0,40}", 1..12),
                            label_bits in proptest::collection::vec(0u8..8, 12)) {
            let docs: Vec<Document> = texts.iter().enumerate().map(|(i, t)| {
                let labels: Vec<&str> = ["HI", "ID", "NA"].iter().enumerate()
                    .filter(|(j, _)| label_bits[i] & (1 << j) != 0)
                    .map(|(_, l)| *l).collect();
                Document::new(format!("d{i}"), t.clone(), labels, 4)
            }).collect();
            let corpus = Corpus::new(space(), docs).unwrap();
            let mut buf = Vec::new();
            corpus.write_jsonl(&mut buf).unwrap();
            let back = read_corpus(buf.as_slice(), "mem", space(), 4).unwrap();
            prop_assert_eq!(back, corpus);
        }
    }
}
