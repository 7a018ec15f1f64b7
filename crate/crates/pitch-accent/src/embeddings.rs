//! Pre-trained word-embedding tables and per-word lexical inputs.
//!
//! Tables load from text files: GloVe format is `token v1 .. vdim` per
//! line; word2vec text format is the same with a leading `count dim`
//! header. Word labels are normalized before lookup (lowercase, strip
//! special characters, `she'll -> she`, `eighty-eight -> eight`) and
//! out-of-vocabulary tokens map to the all-ones vector so they keep a
//! representation distinct from padding zeros.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::corpus::{AccentLabel, Corpus, Utterance};
use crate::error::{Error, Result};

/// Where a table came from; w2v text files carry a header line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Glove,
    W2v,
}

impl std::str::FromStr for EmbeddingKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "glove" => Ok(EmbeddingKind::Glove),
            "w2v" | "word2vec" => Ok(EmbeddingKind::W2v),
            other => Err(format!("unknown embedding kind {other:?} (expected glove or w2v)")),
        }
    }
}

/// Token to vector map with a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    pub source_kind: EmbeddingKind,
}

impl EmbeddingTable {
    pub fn new(dim: usize, source_kind: EmbeddingKind) -> Self {
        EmbeddingTable {
            dim,
            entries: HashMap::new(),
            source_kind,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    /// Inserts unless the token is already present (first occurrence wins).
    pub fn insert(&mut self, token: String, vector: Vec<f64>) -> Result<()> {
        if token.is_empty() {
            return Err(Error::Config("empty embedding token".into()));
        }
        if vector.len() != self.dim {
            return Err(Error::Config(format!(
                "vector for {token:?} has length {}, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        self.entries.entry(token).or_insert(vector);
        Ok(())
    }

    pub fn remove(&mut self, token: &str) -> Option<Vec<f64>> {
        self.entries.remove(token)
    }

    /// The stored vector, or the all-ones OOV vector.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        match self.entries.get(token) {
            Some(v) => v.clone(),
            None => vec![1.0; self.dim],
        }
    }
}

/// Loads an embedding table from a text file.
pub fn load_embedding_text(path: &Path, dim: usize, kind: EmbeddingKind) -> Result<EmbeddingTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embedding_text(BufReader::new(file), dim, kind)
}

/// Parses embedding text from any reader; see [`load_embedding_text`].
pub fn read_embedding_text<R: BufRead>(
    reader: R,
    dim: usize,
    kind: EmbeddingKind,
) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(dim, kind);
    let mut lines = reader.lines().enumerate();

    if kind == EmbeddingKind::W2v {
        match lines.next() {
            Some((_, Ok(header))) => {
                let parts: Vec<&str> = header.split_whitespace().collect();
                let parsed: Option<(usize, usize)> = match parts.as_slice() {
                    [count, d] => count.parse().ok().zip(d.parse().ok()),
                    _ => None,
                };
                let (_count, header_dim) = parsed.ok_or_else(|| Error::Embedding {
                    line: 1,
                    msg: format!("bad w2v header {header:?}, expected `count dim`"),
                })?;
                if header_dim != dim {
                    return Err(Error::Embedding {
                        line: 1,
                        msg: format!("header dimension {header_dim} does not match requested {dim}"),
                    });
                }
            }
            Some((_, Err(e))) => return Err(Error::Embedding { line: 1, msg: e.to_string() }),
            None => return Err(Error::Embedding { line: 1, msg: "empty w2v file".into() }),
        }
    }

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Embedding { line: line_no, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap().to_string();
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(Error::Embedding {
                line: line_no,
                msg: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let mut vector = Vec::with_capacity(dim);
        for v in values {
            vector.push(v.parse::<f64>().map_err(|_| Error::Embedding {
                line: line_no,
                msg: format!("bad value {v:?}"),
            })?);
        }
        table.insert(token, vector)?;
    }
    Ok(table)
}

/// Token substituted when normalization strips a word to nothing; it is
/// out-of-vocabulary by construction.
pub const EMPTY_TOKEN: &str = "<empty>";

/// Normalizes an orthographic word for table lookup: lowercase, keep
/// only `[a-z'-]`, keep the part before an apostrophe and the final
/// hyphen component.
pub fn normalize_word(raw: &str) -> String {
    let kept: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| c.is_ascii_lowercase() || *c == '\'' || *c == '-')
        .collect();
    let before_apostrophe = kept.split('\'').next().unwrap_or("");
    let final_component = before_apostrophe.rsplit('-').next().unwrap_or("");
    if final_component.is_empty() {
        EMPTY_TOKEN.to_string()
    } else {
        final_component.to_string()
    }
}

/// Context size of the lexical input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ngram {
    Unigram,
    Trigram,
}

impl Ngram {
    pub fn n_words(self) -> usize {
        match self {
            Ngram::Unigram => 1,
            Ngram::Trigram => 3,
        }
    }
}

impl std::str::FromStr for Ngram {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "1" => Ok(Ngram::Unigram),
            "3" => Ok(Ngram::Trigram),
            other => Err(format!("ngram must be 1 or 3, got {other:?}")),
        }
    }
}

/// Concatenated embedding input for one word.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalInput {
    pub vector: Vec<f64>,
    pub n_words: usize,
}

/// Embedding vector of the current word, or of the word trigram with
/// all-zero vectors at utterance boundaries.
pub fn ngram_vectors(
    utterance: &Utterance,
    word_index: usize,
    ngram: Ngram,
    table: &EmbeddingTable,
) -> LexicalInput {
    let words = &utterance.words;
    let vec_for = |i: usize| table.lookup(&normalize_word(&words[i].orthography));
    let vector = match ngram {
        Ngram::Unigram => vec_for(word_index),
        Ngram::Trigram => {
            let zeros = vec![0.0; table.dim()];
            let left = if word_index > 0 { vec_for(word_index - 1) } else { zeros.clone() };
            let right = if word_index + 1 < words.len() { vec_for(word_index + 1) } else { zeros };
            let mut v = left;
            v.extend(vec_for(word_index));
            v.extend(right);
            v
        }
    };
    LexicalInput {
        vector,
        n_words: ngram.n_words(),
    }
}

/// The four high-frequency function words tracked separately.
pub fn default_stopwords() -> HashSet<String> {
    ["a", "and", "of", "to"].iter().map(|s| s.to_string()).collect()
}

/// True per word iff its normalized orthography is a stopword.
pub fn stopword_mask(corpus: &Corpus, stopwords: &HashSet<String>) -> Vec<bool> {
    corpus
        .iter_words()
        .map(|w| stopwords.contains(&normalize_word(&w.orthography)))
        .collect()
}

/// Out-of-vocabulary statistics for one corpus against one table.
/// Rates are percentages; all fields are zero when nothing is OOV.
#[derive(Debug, Clone, PartialEq)]
pub struct OovReport {
    pub token_count: usize,
    pub type_count: usize,
    pub accent_rate: f64,
    pub stopword_share: f64,
    pub accented_stopwords: f64,
    pub accented_remaining: f64,
}

impl fmt::Display for OovReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "oov_tokens {}", self.token_count)?;
        writeln!(f, "oov_types {}", self.type_count)?;
        writeln!(f, "accent_rate {:.1}%", self.accent_rate)?;
        writeln!(f, "stopword_share {:.1}%", self.stopword_share)?;
        writeln!(f, "accented_stopwords {:.1}%", self.accented_stopwords)?;
        write!(f, "accented_remaining {:.1}%", self.accented_remaining)
    }
}

/// Counts OOV tokens/types and accent rates, split by stopword status.
pub fn oov_report(
    corpus: &Corpus,
    table: &EmbeddingTable,
    stopwords: &HashSet<String>,
) -> OovReport {
    let mut token_count = 0usize;
    let mut types = HashSet::new();
    let mut accented = 0usize;
    let mut stopword_tokens = 0usize;
    let mut accented_stopwords = 0usize;
    let mut accented_remaining = 0usize;
    for w in corpus.iter_words() {
        let tok = normalize_word(&w.orthography);
        if table.contains(&tok) {
            continue;
        }
        token_count += 1;
        types.insert(tok.clone());
        let is_accented = w.label == AccentLabel::Accented;
        if is_accented {
            accented += 1;
        }
        if stopwords.contains(&tok) {
            stopword_tokens += 1;
            if is_accented {
                accented_stopwords += 1;
            }
        } else if is_accented {
            accented_remaining += 1;
        }
    }
    let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    OovReport {
        token_count,
        type_count: types.len(),
        accent_rate: pct(accented, token_count),
        stopword_share: pct(stopword_tokens, token_count),
        accented_stopwords: pct(accented_stopwords, stopword_tokens),
        accented_remaining: pct(accented_remaining, token_count - stopword_tokens),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::WordToken;
    use std::io::Cursor;
    use std::path::PathBuf;

    fn table_from(text: &str, dim: usize, kind: EmbeddingKind) -> Result<EmbeddingTable> {
        read_embedding_text(Cursor::new(text.to_string()), dim, kind)
    }

    fn utterance(words: &[(&str, AccentLabel)]) -> Utterance {
        Utterance {
            id: "u".into(),
            audio_path: PathBuf::from("x.wav"),
            words: words
                .iter()
                .enumerate()
                .map(|(i, (text, label))| WordToken {
                    orthography: text.to_string(),
                    start_s: 0.3 * i as f64,
                    end_s: 0.3 * (i + 1) as f64,
                    label: *label,
                    speaker_id: "s".into(),
                    utterance_id: "u".into(),
                    index_in_utterance: i,
                })
                .collect(),
        }
    }

    fn corpus_of(words: &[(&str, AccentLabel)]) -> Corpus {
        Corpus::new("t".into(), vec![utterance(words)]).unwrap()
    }

    // --- parsing ---

    #[test]
    fn glove_two_lines() {
        let t = table_from("hello 1 2 3\nworld 0.5 -1 2.25\n", 3, EmbeddingKind::Glove).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("world"), vec![0.5, -1.0, 2.25]);
    }

    #[test]
    fn w2v_header() {
        let t = table_from("2 3\nhello 1 2 3\nworld 4 5 6\n", 3, EmbeddingKind::W2v).unwrap();
        assert_eq!(t.len(), 2);
        let err = table_from("2 4\nhello 1 2 3 4\n", 3, EmbeddingKind::W2v).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn wrong_vector_length_names_line() {
        let text = "a 1 2 3\nb 1 2 3\nc 1 2 3\nd 1 2 3\ne 1 2\n";
        let err = table_from(text, 3, EmbeddingKind::Glove).unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
        assert!(err.contains("expected 3 values"), "{err}");
    }

    #[test]
    fn duplicates_keep_first() {
        let t = table_from("a 1 1\na 2 2\n", 2, EmbeddingKind::Glove).unwrap();
        assert_eq!(t.lookup("a"), vec![1.0, 1.0]);
    }

    // --- normalization ---

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_word("she'll"), "she");
        assert_eq!(normalize_word("eighty-eight"), "eight");
        assert_eq!(normalize_word("Word!"), "word");
        assert_eq!(normalize_word("don't"), "don");
        assert_eq!(normalize_word("!!"), EMPTY_TOKEN);
        assert_eq!(normalize_word("-"), EMPTY_TOKEN);
    }

    // --- lookup ---

    #[test]
    fn lookup_policy() {
        let t = table_from("radio 1 2 3\n", 3, EmbeddingKind::Glove).unwrap();
        assert_eq!(t.lookup("radio"), vec![1.0, 2.0, 3.0]);
        assert_eq!(t.lookup("nonsense"), vec![1.0, 1.0, 1.0]);
        assert_eq!(t.lookup(EMPTY_TOKEN), vec![1.0, 1.0, 1.0]);
        assert_eq!(t.lookup("anything").len(), t.dim());
    }

    #[test]
    fn removing_token_changes_only_its_lookup() {
        let mut t = table_from("a 1 2\nb 3 4\nc 5 6\n", 2, EmbeddingKind::Glove).unwrap();
        let before: Vec<Vec<f64>> = ["a", "b", "c"].iter().map(|w| t.lookup(w)).collect();
        t.remove("b");
        assert_eq!(t.lookup("a"), before[0]);
        assert_eq!(t.lookup("b"), vec![1.0, 1.0]);
        assert_eq!(t.lookup("c"), before[2]);
    }

    // --- ngrams ---

    #[test]
    fn ngram_shapes_and_padding() {
        let t = table_from("a 1 1\nb 2 2\nc 3 3\n", 2, EmbeddingKind::Glove).unwrap();
        let utt = utterance(&[
            ("a", AccentLabel::None),
            ("b", AccentLabel::Accented),
            ("c", AccentLabel::None),
        ]);

        let uni = ngram_vectors(&utt, 1, Ngram::Unigram, &t);
        assert_eq!(uni.vector, vec![2.0, 2.0]);

        // first word: left block zero-padded
        let tri = ngram_vectors(&utt, 0, Ngram::Trigram, &t);
        assert_eq!(tri.vector[..2], [0.0, 0.0]);
        assert_eq!(tri.vector.len(), 6);

        // middle word equals the concatenation of three lookups
        let tri = ngram_vectors(&utt, 1, Ngram::Trigram, &t);
        assert_eq!(tri.vector, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);

        // middle block of the trigram equals the unigram
        assert_eq!(tri.vector[2..4], uni.vector[..]);
    }

    // --- stopwords and oov ---

    #[test]
    fn stopword_mask_cases() {
        let c = corpus_of(&[
            ("and", AccentLabel::None),
            ("radio", AccentLabel::Accented),
            ("To", AccentLabel::None),
        ]);
        assert_eq!(stopword_mask(&c, &default_stopwords()), vec![true, false, true]);
    }

    #[test]
    fn oov_report_cases() {
        let t = table_from("known 1 1\n", 2, EmbeddingKind::Glove).unwrap();

        let all_known = corpus_of(&[("known", AccentLabel::Accented), ("known", AccentLabel::None)]);
        let r = oov_report(&all_known, &t, &default_stopwords());
        assert_eq!(r, OovReport {
            token_count: 0,
            type_count: 0,
            accent_rate: 0.0,
            stopword_share: 0.0,
            accented_stopwords: 0.0,
            accented_remaining: 0.0,
        });

        // 10 planted OOV tokens over 2 types, 5 of them accented
        let mut words = Vec::new();
        for i in 0..10 {
            let label = if i < 5 { AccentLabel::Accented } else { AccentLabel::None };
            let text = if i % 2 == 0 { "plantedx" } else { "plantedy" };
            words.push((text, label));
        }
        let c = corpus_of(&words);
        let r = oov_report(&c, &t, &default_stopwords());
        assert_eq!(r.token_count, 10);
        assert_eq!(r.type_count, 2);
        assert!((r.accent_rate - 50.0).abs() < 1e-12);
        assert_eq!(r.stopword_share, 0.0);
    }

    #[test]
    fn oov_counts_sum_over_utterances() {
        let t = table_from("known 1 1\n", 2, EmbeddingKind::Glove).unwrap();
        let u1 = utterance(&[("miss", AccentLabel::Accented), ("known", AccentLabel::None)]);
        let u2 = utterance(&[("gone", AccentLabel::None)]);
        let c = Corpus::new("t".into(), vec![u1.clone(), u2.clone()]).unwrap();
        let whole = oov_report(&c, &t, &default_stopwords());
        let part1 = oov_report(&Corpus::new("a".into(), vec![u1]).unwrap(), &t, &default_stopwords());
        let part2 = oov_report(&Corpus::new("b".into(), vec![u2]).unwrap(), &t, &default_stopwords());
        assert_eq!(whole.token_count, part1.token_count + part2.token_count);
    }
}
