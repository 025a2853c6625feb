//! Document ingestion, token-budget chunking, and keyword search over a lake.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{Tokenizer, WordPunctTokenizer};

pub const MIN_CHUNK_BUDGET: usize = 64;
pub const DEFAULT_WINDOW: usize = 1000;
pub const DEFAULT_MAX_HITS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocFormat {
    Html,
    Txt,
}

impl DocFormat {
    fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "html" | "htm" => Some(DocFormat::Html),
            "txt" => Some(DocFormat::Txt),
            _ => None,
        }
    }
}

impl FromStr for DocFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "html" | "htm" => Ok(DocFormat::Html),
            "txt" | "text" => Ok(DocFormat::Txt),
            other => Err(Error::Invalid(format!("unknown document format {other:?}"))),
        }
    }
}

impl fmt::Display for DocFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DocFormat::Html => "html",
            DocFormat::Txt => "txt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// Path relative to the lake root, with `/` separators.
    pub id: String,
    pub format: DocFormat,
    pub text: String,
    pub token_count: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, format: DocFormat, text: impl Into<String>) -> Self {
        let text = text.into();
        let token_count = WordPunctTokenizer.count(&text);
        Document {
            id: id.into(),
            format,
            text,
            token_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub attribute: String,
    pub text: String,
}

/// An immutable, ordered set of documents.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    /// Build a corpus from in-memory documents. Documents are sorted by id;
    /// duplicate ids are rejected.
    pub fn from_documents(mut documents: Vec<Document>) -> Result<Self> {
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = documents.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Invalid(format!("duplicate document id {:?}", w[0].id)));
        }
        Ok(Corpus { documents })
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

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id.as_str())
    }

    /// `k` documents spread evenly across the corpus order.
    pub fn sample(&self, k: usize) -> Vec<&Document> {
        let n = self.documents.len();
        if k >= n {
            return self.documents.iter().collect();
        }
        (0..k).map(|i| &self.documents[i * n / k]).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.token_count).sum()
    }
}

/// Read every `.txt`/`.html` file under `path` (recursively) into a corpus.
pub fn ingest(path: &Path, format_filter: Option<DocFormat>) -> Result<Corpus> {
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    let mut documents = Vec::new();
    for file in files {
        let Some(format) = DocFormat::from_path(&file) else {
            continue;
        };
        if format_filter.is_some_and(|f| f != format) {
            continue;
        }
        let bytes = fs::read(&file).map_err(|e| Error::read(&file, e))?;
        let text = match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{}: invalid UTF-8, decoding lossily", file.display());
                String::from_utf8_lossy(e.as_bytes()).into_owned()
            }
        };
        let id = relative_id(path, &file);
        documents.push(Document::new(id, format, text));
    }
    if documents.is_empty() {
        return Err(Error::EmptyCorpus(path.to_path_buf()));
    }
    Corpus::from_documents(documents)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::read(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::read(dir, e))?;
        let path = entry.path();
        let file_type = entry.file_type().map_err(|e| Error::read(&path, e))?;
        if file_type.is_dir() {
            collect_files(&path, out)?;
        } else if file_type.is_file() {
            out.push(path);
        }
    }
    Ok(())
}

fn relative_id(root: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(root).unwrap_or(file);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Split a document into chunks of at most `budget` tokens using the default
/// tokenizer.
pub fn chunk(doc: &Document, budget: usize) -> Result<Vec<Chunk>> {
    chunk_with(doc, budget, &WordPunctTokenizer)
}

/// Split a document into contiguous, non-overlapping chunks whose token
/// counts never exceed `budget`. A split lands on the last newline before the
/// budget when that keeps at least half the budget in the chunk; otherwise it
/// falls on the token boundary.
pub fn chunk_with(doc: &Document, budget: usize, tokenizer: &dyn Tokenizer) -> Result<Vec<Chunk>> {
    if budget < MIN_CHUNK_BUDGET {
        return Err(Error::BudgetTooSmall(budget));
    }
    let text = doc.text.as_str();
    let spans = tokenizer.spans(text);
    let make = |index: usize, range: std::ops::Range<usize>, tokens: usize| Chunk {
        doc_id: doc.id.clone(),
        index,
        text: text[range].to_string(),
        token_count: tokens,
    };
    if spans.len() <= budget {
        return Ok(vec![make(0, 0..text.len(), spans.len())]);
    }

    let mut chunks = Vec::new();
    let mut start_byte = 0;
    let mut start_tok = 0;
    while spans.len() - start_tok > budget {
        let hard_tok = start_tok + budget;
        let hard_byte = spans[hard_tok].start;
        let mut split_byte = hard_byte;
        let mut split_tok = hard_tok;
        if let Some(nl) = text[start_byte..hard_byte].rfind('\n') {
            let candidate = start_byte + nl + 1;
            // first token starting at or after the candidate split
            let tok = spans.partition_point(|s| s.start < candidate);
            if tok - start_tok >= budget / 2 {
                split_byte = candidate;
                split_tok = tok;
            }
        }
        chunks.push(make(chunks.len(), start_byte..split_byte, split_tok - start_tok));
        start_byte = split_byte;
        start_tok = split_tok;
    }
    chunks.push(make(chunks.len(), start_byte..text.len(), spans.len() - start_tok));
    Ok(chunks)
}

/// Locate the first case-insensitive occurrence of `attribute` in `doc` and
/// return `window` characters of context on each side.
pub fn find_snippet(doc: &Document, attribute: &str, window: usize) -> Option<Snippet> {
    let re = attribute_regex(attribute)?;
    let hit = re.find(&doc.text)?;
    Some(Snippet {
        doc_id: doc.id.clone(),
        attribute: attribute.to_string(),
        text: window_around(&doc.text, hit.start(), hit.end(), window).to_string(),
    })
}

/// Case-insensitive substring search across the corpus, at most one snippet
/// per document, in corpus order.
pub fn keyword_search(corpus: &Corpus, attribute: &str, window: usize, max_hits: usize) -> Vec<Snippet> {
    let Some(re) = attribute_regex(attribute) else {
        return Vec::new();
    };
    corpus
        .documents()
        .iter()
        .filter_map(|doc| {
            re.find(&doc.text).map(|hit| Snippet {
                doc_id: doc.id.clone(),
                attribute: attribute.to_string(),
                text: window_around(&doc.text, hit.start(), hit.end(), window).to_string(),
            })
        })
        .take(max_hits)
        .collect()
}

fn attribute_regex(attribute: &str) -> Option<regex::Regex> {
    if attribute.trim().is_empty() {
        return None;
    }
    regex::RegexBuilder::new(&regex::escape(attribute))
        .case_insensitive(true)
        .build()
        .ok()
}

fn window_around(text: &str, start: usize, end: usize, window: usize) -> &str {
    let from = text[..start]
        .char_indices()
        .rev()
        .nth(window.saturating_sub(1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let from = if window == 0 { start } else { from };
    let to = text[end..]
        .char_indices()
        .nth(window)
        .map(|(i, _)| end + i)
        .unwrap_or(text.len());
    &text[from..to]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, DocFormat::Txt, text)
    }

    fn generated_text(tokens: usize) -> String {
        // lines of 1..=12 words, 5 tokens of punctuation sprinkled in
        let mut out = String::new();
        let mut n = 0;
        let mut line = 0;
        while n < tokens {
            let words = 1 + (line * 7) % 12;
            for w in 0..words {
                if n >= tokens {
                    break;
                }
                out.push_str(&format!("w{}x{} ", line, w));
                n += 1;
            }
            out.push('\n');
            line += 1;
        }
        out
    }

    #[test]
    fn short_doc_is_single_chunk() {
        let text = generated_text(100);
        let d = doc("a.txt", &text);
        assert_eq!(d.token_count, 100);
        let chunks = chunk(&d, 4000).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, text);
    }

    #[test]
    fn long_doc_round_trips_within_budget() {
        let text = generated_text(25_000);
        let d = doc("long.txt", &text);
        assert_eq!(d.token_count, 25_000);
        let chunks = chunk(&d, 3000).unwrap();
        assert_eq!(chunks.len(), 9);
        let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(joined, text);
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.index, i);
            assert!(c.token_count <= 3000);
            assert_eq!(c.token_count, WordPunctTokenizer.count(&c.text));
        }
        // every split except the tail lands after a newline
        for c in &chunks[..chunks.len() - 1] {
            assert!(c.text.ends_with('\n'));
        }
    }

    #[test]
    fn tiny_budget_rejected() {
        let d = doc("a.txt", "x");
        assert!(matches!(chunk(&d, 10), Err(Error::BudgetTooSmall(10))));
    }

    #[test]
    fn hard_split_without_newlines() {
        let text = "tok ".repeat(300);
        let d = doc("a.txt", &text);
        let chunks = chunk(&d, 64).unwrap();
        assert_eq!(chunks.len(), 5);
        assert!(chunks.iter().all(|c| c.token_count <= 64));
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
    }

    #[test]
    fn search_finds_case_insensitive() {
        let corpus = Corpus::from_documents(vec![
            doc("a.txt", "<a href=\"/wiki\">Monarch</a> Charles III"),
            doc("b.txt", "nothing here"),
        ])
        .unwrap();
        let hits = keyword_search(&corpus, "monarch", 10, 3);
        assert_eq!(hits.len(), 1);
        assert!(hits[0].text.contains("Monarch"));
        assert_eq!(hits[0].doc_id, "a.txt");
        assert!(keyword_search(&corpus, "governor", 10, 3).is_empty());
        assert!(keyword_search(&corpus, "", 10, 3).is_empty());
    }

    #[test]
    fn search_truncates_in_corpus_order() {
        let docs = (0..5).map(|i| doc(&format!("d{i}.txt"), "Year: 2001")).collect();
        let corpus = Corpus::from_documents(docs).unwrap();
        let hits = keyword_search(&corpus, "year", 100, 2);
        let ids: Vec<_> = hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["d0.txt", "d1.txt"]);
    }

    #[test]
    fn window_is_clipped() {
        let d = doc("a.txt", "0123456789Name: Bob0123456789");
        let s = find_snippet(&d, "name", 3).unwrap();
        assert_eq!(s.text, "789Name: B");
        let s = find_snippet(&d, "0123", 100).unwrap();
        assert_eq!(s.text, d.text);
    }

    #[test]
    fn sample_is_strided() {
        let docs = (0..20).map(|i| doc(&format!("d{i:02}.txt"), "x")).collect();
        let corpus = Corpus::from_documents(docs).unwrap();
        let ids: Vec<_> = corpus.sample(4).iter().map(|d| d.id.clone()).collect();
        assert_eq!(ids, ["d00.txt", "d05.txt", "d10.txt", "d15.txt"]);
        assert_eq!(corpus.sample(50).len(), 20);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Corpus::from_documents(vec![doc("a", "x"), doc("a", "y")]).is_err());
    }

    proptest! {
        #[test]
        fn chunking_round_trips(text in "[a-z ,.\\n]{0,2000}", budget in 64usize..200) {
            let d = doc("p.txt", &text);
            let chunks = chunk(&d, budget).unwrap();
            let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
            prop_assert_eq!(joined, text);
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.index, i);
                prop_assert!(c.token_count <= budget);
                prop_assert_eq!(c.token_count, WordPunctTokenizer.count(&c.text));
            }
        }

        #[test]
        fn snippets_contain_query(text in "[a-zA-Z :]{0,300}", q in "[a-zA-Z]{1,3}") {
            let corpus = Corpus::from_documents(vec![doc("p.txt", &text)]).unwrap();
            for s in keyword_search(&corpus, &q, 5, 3) {
                prop_assert!(s.text.to_lowercase().contains(&q.to_lowercase()));
            }
        }
    }
}
