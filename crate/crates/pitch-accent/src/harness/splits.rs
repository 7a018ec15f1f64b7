//! Fixed cross-validation splits.
//!
//! Words are shuffled once with a seeded RNG and partitioned into `k`
//! near-equal test sets. For each fold the remaining words (in shuffle
//! order) provide the development set (up to 1000 words, at most half
//! the pool) followed by the training set. Splits are a pure function
//! of `(corpus, k, seed)` and can be persisted, so every experiment on
//! a corpus reuses the same test sets.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// One fold's word-id sets. Ids index the corpus's flat word order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// All folds of one corpus, tagged with their generating seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvSplits {
    pub corpus_name: String,
    pub word_count: usize,
    pub seed: u64,
    pub folds: Vec<FoldSplit>,
}

/// Development-set size for a candidate pool: 1000 words, capped at
/// half the pool so the training set never empties.
pub fn dev_size(pool: usize) -> usize {
    (pool / 2).min(1000)
}

/// Builds `k` fixed splits. Same corpus, `k` and seed give identical
/// splits on every call.
pub fn make_cv_splits(corpus: &Corpus, k: usize, seed: u64) -> Result<CvSplits> {
    let n = corpus.word_count();
    if k < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    if n <= 2 * k {
        return Err(Error::Config(format!(
            "corpus {} has {n} words, too small for {k}-fold splits",
            corpus.name
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    // near-equal chunks: the first n % k test sets get one extra word
    let base = n / k;
    let extra = n % k;
    let mut bounds = Vec::with_capacity(k + 1);
    let mut pos = 0;
    bounds.push(0);
    for i in 0..k {
        pos += base + usize::from(i < extra);
        bounds.push(pos);
    }

    let mut folds = Vec::with_capacity(k);
    for fold_id in 0..k {
        let (lo, hi) = (bounds[fold_id], bounds[fold_id + 1]);
        let test = ids[lo..hi].to_vec();
        let mut remaining = Vec::with_capacity(n - test.len());
        remaining.extend_from_slice(&ids[..lo]);
        remaining.extend_from_slice(&ids[hi..]);
        let d = dev_size(remaining.len());
        let dev = remaining[..d].to_vec();
        let train = remaining[d..].to_vec();
        folds.push(FoldSplit {
            fold_id,
            train,
            dev,
            test,
        });
    }
    Ok(CvSplits {
        corpus_name: corpus.name.clone(),
        word_count: n,
        seed,
        folds,
    })
}

/// The fold's non-test words in shuffle order (dev first, then train),
/// which is how the pool is rebuilt when other corpora are added.
pub fn fold_pool(split: &FoldSplit) -> Vec<usize> {
    let mut pool = Vec::with_capacity(split.dev.len() + split.train.len());
    pool.extend_from_slice(&split.dev);
    pool.extend_from_slice(&split.train);
    pool
}

const SPLITS_MAGIC: &str = "pitch-accent-splits v1";

/// Persists splits as text so runs are auditable and repeatable.
pub fn save_splits(splits: &CvSplits, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(SPLITS_MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "corpus {}\nwords {}\nseed {}\nfolds {}\n",
        splits.corpus_name,
        splits.word_count,
        splits.seed,
        splits.folds.len()
    ));
    for fold in &splits.folds {
        for (role, ids) in [("test", &fold.test), ("dev", &fold.dev), ("train", &fold.train)] {
            out.push_str(&format!("fold {} {role}", fold.fold_id));
            for id in ids {
                out.push(' ');
                out.push_str(&id.to_string());
            }
            out.push('\n');
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Loads splits written by [`save_splits`].
pub fn load_splits(path: &Path) -> Result<CvSplits> {
    let ffe = |line: usize, msg: String| Error::FileFormat {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, l) in BufReader::new(file).lines().enumerate() {
        lines.push(l.map_err(|e| ffe(i + 1, e.to_string()))?);
    }
    if lines.first().map(String::as_str) != Some(SPLITS_MAGIC) {
        return Err(ffe(1, "bad header".into()));
    }
    let field = |idx: usize, prefix: &str| -> Result<String> {
        lines
            .get(idx)
            .and_then(|l| l.strip_prefix(prefix))
            .map(str::to_string)
            .ok_or_else(|| ffe(idx + 1, format!("expected `{prefix}...`")))
    };
    let corpus_name = field(1, "corpus ")?;
    let word_count: usize = field(2, "words ")?.parse().map_err(|_| ffe(3, "bad word count".into()))?;
    let seed: u64 = field(3, "seed ")?.parse().map_err(|_| ffe(4, "bad seed".into()))?;
    let k: usize = field(4, "folds ")?.parse().map_err(|_| ffe(5, "bad fold count".into()))?;

    let mut folds: Vec<FoldSplit> = (0..k)
        .map(|fold_id| FoldSplit {
            fold_id,
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
        })
        .collect();
    for (i, line) in lines.iter().enumerate().skip(5) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        if parts.next() != Some("fold") {
            return Err(ffe(i + 1, format!("expected fold line, got {line:?}")));
        }
        let fold_id: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .filter(|&id| id < k)
            .ok_or_else(|| ffe(i + 1, "bad fold id".into()))?;
        let role = parts.next().unwrap_or("");
        let ids: Vec<usize> = parts.filter_map(|p| p.parse().ok()).collect();
        match role {
            "test" => folds[fold_id].test = ids,
            "dev" => folds[fold_id].dev = ids,
            "train" => folds[fold_id].train = ids,
            other => return Err(ffe(i + 1, format!("unknown role {other:?}"))),
        }
    }
    Ok(CvSplits {
        corpus_name,
        word_count,
        seed,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AccentLabel, Utterance, WordToken};
    use std::collections::HashSet;
    use std::path::PathBuf;

    fn corpus_with(n: usize) -> Corpus {
        let mut utterances = Vec::new();
        let mut made = 0;
        while made < n {
            let count = 25.min(n - made);
            let id = format!("u{}", utterances.len());
            let words = (0..count)
                .map(|i| WordToken {
                    orthography: "w".into(),
                    start_s: 0.2 * i as f64,
                    end_s: 0.2 * (i + 1) as f64,
                    label: AccentLabel::None,
                    speaker_id: "s".into(),
                    utterance_id: id.clone(),
                    index_in_utterance: i,
                })
                .collect();
            utterances.push(Utterance {
                id,
                audio_path: PathBuf::from("x.wav"),
                words,
            });
            made += count;
        }
        Corpus::new("test".into(), utterances).unwrap()
    }

    #[test]
    fn partition_covers_disjointly() {
        let corpus = corpus_with(100);
        let splits = make_cv_splits(&corpus, 10, 7).unwrap();
        assert_eq!(splits.folds.len(), 10);
        let mut all_test = HashSet::new();
        for fold in &splits.folds {
            assert_eq!(fold.test.len(), 10);
            for id in &fold.test {
                assert!(all_test.insert(*id), "test sets overlap");
            }
            let train: HashSet<_> = fold.train.iter().collect();
            let dev: HashSet<_> = fold.dev.iter().collect();
            let test: HashSet<_> = fold.test.iter().collect();
            assert!(train.is_disjoint(&dev));
            assert!(train.is_disjoint(&test));
            assert!(dev.is_disjoint(&test));
            assert_eq!(train.len() + dev.len() + test.len(), 100);
        }
        assert_eq!(all_test.len(), 100);
    }

    #[test]
    fn same_seed_same_splits() {
        let corpus = corpus_with(120);
        let a = make_cv_splits(&corpus, 10, 42).unwrap();
        let b = make_cv_splits(&corpus, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = make_cv_splits(&corpus, 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn large_corpus_dev_is_1000() {
        let corpus = corpus_with(15000);
        let splits = make_cv_splits(&corpus, 10, 1).unwrap();
        for fold in &splits.folds {
            assert_eq!(fold.dev.len(), 1000);
            let dev: HashSet<_> = fold.dev.iter().collect();
            let test: HashSet<_> = fold.test.iter().collect();
            assert!(dev.is_disjoint(&test));
        }
    }

    #[test]
    fn small_corpus_errors() {
        let corpus = corpus_with(20);
        assert!(make_cv_splits(&corpus, 10, 0).is_err());
    }

    #[test]
    fn splits_roundtrip_through_file() {
        let corpus = corpus_with(60);
        let splits = make_cv_splits(&corpus, 5, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("splits.txt");
        save_splits(&splits, &path).unwrap();
        assert_eq!(load_splits(&path).unwrap(), splits);
    }
}
