//! Time-aligned, binary-labelled word sequences and CNN input assembly.
//!
//! A corpus is loaded from a tab-separated manifest (one row per word,
//! see [`MANIFEST_HEADER`]) that any source corpus can be converted
//! into offline. ToBI accent labels collapse to two classes: anything
//! carrying a `*` is `Accented`, while empty fields, `none`, and
//! unsure-marked labels (trailing `?`) count as `None`.
//!
//! For each word the CNN consumes an [`InputMatrix`]: the feature rows
//! of every frame from the start of the left neighbor to the end of the
//! right neighbor, zero-padded to a corpus-wide frame capacity `s_max`,
//! plus a binary position-indicator row marking the current word's
//! columns.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::dsp::{FrameFeatureTrack, FEATURE_DIM, HOP_MS};
use crate::error::{Error, Result};

/// Binary accent class. The order `(None, Accented)` is fixed wherever
/// classes are indexed or serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccentLabel {
    None,
    Accented,
}

impl AccentLabel {
    pub fn index(self) -> usize {
        match self {
            AccentLabel::None => 0,
            AccentLabel::Accented => 1,
        }
    }

    pub fn from_index(i: usize) -> AccentLabel {
        if i == 0 {
            AccentLabel::None
        } else {
            AccentLabel::Accented
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AccentLabel::None => "none",
            AccentLabel::Accented => "accented",
        }
    }
}

impl fmt::Display for AccentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a raw ToBI accent field onto the binary classes.
///
/// Unsure events (trailing `?`) fall into the `None` class. Unknown
/// strings also map to `None`, with a logged warning.
pub fn map_tobi_label(raw: &str) -> AccentLabel {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("none") {
        return AccentLabel::None;
    }
    if t.ends_with('?') {
        return AccentLabel::None;
    }
    if t.contains('*') {
        return AccentLabel::Accented;
    }
    log::warn!("unknown ToBI accent label {t:?} mapped to none");
    AccentLabel::None
}

/// One time-aligned word with its binary label.
#[derive(Debug, Clone, PartialEq)]
pub struct WordToken {
    pub orthography: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: AccentLabel,
    pub speaker_id: String,
    pub utterance_id: String,
    pub index_in_utterance: usize,
}

/// An utterance: one audio file and its ordered words.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub audio_path: PathBuf,
    pub words: Vec<WordToken>,
}

/// A named set of utterances plus the frame capacity its input
/// matrices are padded to.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub utterances: Vec<Utterance>,
    s_max: usize,
}

impl Corpus {
    /// Validates word invariants and computes `s_max` as the maximum
    /// 3-word window frame count over the corpus.
    pub fn new(name: String, utterances: Vec<Utterance>) -> Result<Self> {
        for utt in &utterances {
            let mut prev_end = 0.0f64;
            for (i, w) in utt.words.iter().enumerate() {
                if w.orthography.is_empty() {
                    return Err(Error::Config(format!(
                        "utterance {}: word {i} has empty orthography",
                        utt.id
                    )));
                }
                if !(w.start_s >= 0.0 && w.end_s > w.start_s) {
                    return Err(Error::Config(format!(
                        "utterance {}: word {i} has invalid interval [{}, {}]",
                        utt.id, w.start_s, w.end_s
                    )));
                }
                if w.start_s < prev_end - 1e-9 {
                    return Err(Error::Config(format!(
                        "utterance {}: word {i} overlaps its predecessor",
                        utt.id
                    )));
                }
                prev_end = w.end_s;
            }
        }
        let mut corpus = Corpus {
            name,
            utterances,
            s_max: 0,
        };
        corpus.s_max = corpus.max_window_frames(1);
        Ok(corpus)
    }

    /// Frame capacity for this corpus alone. Experiments spanning
    /// several corpora use [`shared_s_max`] instead.
    pub fn s_max(&self) -> usize {
        self.s_max
    }

    /// Maximum frame count of any word's context window.
    pub fn max_window_frames(&self, context: usize) -> usize {
        let mut max = 0;
        for utt in &self.utterances {
            for i in 0..utt.words.len() {
                let (first, end) = window_frame_range(&utt.words, i, context);
                max = max.max(end - first);
            }
        }
        max
    }

    pub fn word_count(&self) -> usize {
        self.utterances.iter().map(|u| u.words.len()).sum()
    }

    /// Flat word index: global word id -> (utterance index, word index).
    pub fn flat_words(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.word_count());
        for (u, utt) in self.utterances.iter().enumerate() {
            for w in 0..utt.words.len() {
                out.push((u, w));
            }
        }
        out
    }

    /// All words in corpus order.
    pub fn iter_words(&self) -> impl Iterator<Item = &WordToken> {
        self.utterances.iter().flat_map(|u| u.words.iter())
    }
}

/// Frame capacity shared across all corpora of one experiment, so train
/// and test matrices are dimension-compatible.
pub fn shared_s_max<'a>(corpora: impl IntoIterator<Item = &'a Corpus>) -> usize {
    corpora.into_iter().map(|c| c.s_max()).max().unwrap_or(0)
}

/// Simple label statistics over a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStats {
    pub word_count: usize,
    pub accented_count: usize,
    /// `max(accented, none) / total`, in `[0.5, 1]`.
    pub majority_class_rate: f64,
    pub majority_label: AccentLabel,
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "words {}\taccented {}\tmajority class {:.1}% {}",
            self.word_count,
            self.accented_count,
            100.0 * self.majority_class_rate,
            self.majority_label
        )
    }
}

/// Counts words and accented words and reports the majority class rate.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let word_count = corpus.word_count();
    let accented_count = corpus
        .iter_words()
        .filter(|w| w.label == AccentLabel::Accented)
        .count();
    let none_count = word_count - accented_count;
    let (majority, majority_label) = if accented_count >= none_count {
        (accented_count, AccentLabel::Accented)
    } else {
        (none_count, AccentLabel::None)
    };
    CorpusStats {
        word_count,
        accented_count,
        majority_class_rate: if word_count == 0 {
            0.0
        } else {
            majority as f64 / word_count as f64
        },
        majority_label,
    }
}

/// Header line of the manifest format.
pub const MANIFEST_HEADER: &str =
    "utterance_id\tspeaker\taudio_path\tword_index\torthography\tstart_s\tend_s\ttobi_label";

/// Loads a corpus from a tab-separated manifest.
///
/// Relative audio paths are resolved against the manifest's directory
/// and must point at existing files. Violations are reported with the
/// 1-based line number.
pub fn load_manifest(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    load_manifest_reader(BufReader::new(file), dir, name)
}

fn load_manifest_reader<R: BufRead>(reader: R, dir: &Path, name: String) -> Result<Corpus> {
    let err = |line: usize, msg: String| Error::Manifest { line, msg };
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        Some((_, Err(e))) => return Err(err(1, e.to_string())),
        None => return Err(err(1, "empty manifest".into())),
    };
    if header.trim_end() != MANIFEST_HEADER {
        return Err(err(1, format!("bad header, expected: {MANIFEST_HEADER}")));
    }

    let mut utterances: Vec<Utterance> = Vec::new();
    let mut seen_ids: std::collections::HashSet<String> = std::collections::HashSet::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| err(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 8 {
            return Err(err(
                line_no,
                format!("expected 8 tab-separated fields, found {}", fields.len()),
            ));
        }
        let utterance_id = fields[0].to_string();
        let speaker = fields[1].to_string();
        let audio_raw = Path::new(fields[2]);
        let word_index: usize = fields[3]
            .parse()
            .map_err(|_| err(line_no, format!("bad word_index {:?}", fields[3])))?;
        let orthography = fields[4].to_string();
        let start_s: f64 = fields[5]
            .parse()
            .map_err(|_| err(line_no, format!("bad start_s {:?}", fields[5])))?;
        let end_s: f64 = fields[6]
            .parse()
            .map_err(|_| err(line_no, format!("bad end_s {:?}", fields[6])))?;
        let label = map_tobi_label(fields[7]);

        if orthography.is_empty() {
            return Err(err(line_no, "empty orthography".into()));
        }
        if !(start_s >= 0.0) || !start_s.is_finite() || !end_s.is_finite() {
            return Err(err(line_no, format!("bad time interval [{start_s}, {end_s}]")));
        }
        if end_s <= start_s {
            return Err(err(
                line_no,
                format!("end_s {end_s} must be greater than start_s {start_s}"),
            ));
        }
        let audio_path = if audio_raw.is_absolute() {
            audio_raw.to_path_buf()
        } else {
            dir.join(audio_raw)
        };
        if !audio_path.is_file() {
            return Err(err(
                line_no,
                format!("audio file not found: {}", audio_path.display()),
            ));
        }

        let start_new = match utterances.last() {
            Some(u) => u.id != utterance_id,
            None => true,
        };
        if start_new {
            if !seen_ids.insert(utterance_id.clone()) {
                return Err(err(
                    line_no,
                    format!("utterance {utterance_id:?} rows are not contiguous"),
                ));
            }
            utterances.push(Utterance {
                id: utterance_id.clone(),
                audio_path: audio_path.clone(),
                words: Vec::new(),
            });
        }
        let utt = utterances.last_mut().unwrap();
        if word_index != utt.words.len() {
            return Err(err(
                line_no,
                format!("word_index {word_index} out of order, expected {}", utt.words.len()),
            ));
        }
        if let Some(prev) = utt.words.last() {
            if start_s < prev.end_s - 1e-9 {
                return Err(err(line_no, "word overlaps its predecessor".into()));
            }
        }
        utt.words.push(WordToken {
            orthography,
            start_s,
            end_s,
            label,
            speaker_id: speaker,
            utterance_id,
            index_in_utterance: word_index,
        });
    }
    Corpus::new(name, utterances).map_err(|e| match e {
        Error::Config(msg) => Error::Manifest { line: 0, msg },
        other => other,
    })
}

/// Writes a corpus back out as a manifest. Times keep at least three
/// decimals but are otherwise emitted with round-trip precision.
pub fn write_manifest(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for utt in &corpus.utterances {
        for w in &utt.words {
            let tobi = match w.label {
                AccentLabel::Accented => "H*",
                AccentLabel::None => "",
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                utt.id,
                w.speaker_id,
                utt.audio_path.display(),
                w.index_in_utterance,
                w.orthography,
                fmt_time(w.start_s),
                fmt_time(w.end_s),
                tobi
            ));
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

fn fmt_time(t: f64) -> String {
    let s = format!("{t}");
    match s.find('.') {
        Some(dot) if s.len() - dot - 1 >= 3 => s,
        _ => format!("{t:.3}"),
    }
}

/// 10 ms frame grid index for a time in seconds.
pub fn frame_index(t_s: f64) -> usize {
    debug_assert!(t_s >= 0.0);
    ((t_s * 1000.0 / HOP_MS as f64) + 1e-6).floor() as usize
}

/// Half-open frame range `[first, end)` of word `i`'s context window.
fn window_frame_range(words: &[WordToken], i: usize, context: usize) -> (usize, usize) {
    let left = &words[i.saturating_sub(context)];
    let right = &words[(i + context).min(words.len() - 1)];
    let first = frame_index(left.start_s);
    let end = frame_index(right.end_s).max(first + 1);
    (first, end)
}

/// Frames of one word plus its direct context, and the current word's
/// frame span within that slice.
///
/// Boundaries beyond the track are clipped with a warning.
pub fn slice_word_frames(
    track: &FrameFeatureTrack,
    utterance: &Utterance,
    word_index: usize,
    context: usize,
) -> Result<(Vec<[f64; FEATURE_DIM]>, (usize, usize))> {
    let words = &utterance.words;
    if word_index >= words.len() {
        return Err(Error::Config(format!(
            "word index {word_index} out of range for utterance {} ({} words)",
            utterance.id,
            words.len()
        )));
    }
    if track.is_empty() {
        return Err(Error::Signal(format!(
            "empty feature track for utterance {}",
            utterance.id
        )));
    }
    let (first, mut end) = window_frame_range(words, word_index, context);
    if end > track.len() {
        log::warn!(
            "utterance {}: word {} window [{first}, {end}) clipped to track length {}",
            utterance.id,
            word_index,
            track.len()
        );
        end = track.len();
    }
    let first = first.min(end - 1);

    let w = &words[word_index];
    let cur_first = frame_index(w.start_s).clamp(first, end - 1);
    let cur_last = (frame_index(w.end_s).max(cur_first + 1) - 1).clamp(cur_first, end - 1);

    let frames = track.frames()[first..end].to_vec();
    Ok((frames, (cur_first - first, cur_last - first)))
}

/// CNN input for one word: descriptor rows 0..5, position-indicator
/// row 6, zero-padded to `s_max` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMatrix {
    values: Vec<f64>,
    s_max: usize,
    current_span: (usize, usize),
}

/// Rows of an input matrix: the six descriptors plus the indicator.
pub const MATRIX_ROWS: usize = FEATURE_DIM + 1;

impl InputMatrix {
    pub fn rows(&self) -> usize {
        MATRIX_ROWS
    }

    pub fn cols(&self) -> usize {
        self.s_max
    }

    /// Inclusive frame span of the current word within the window.
    pub fn current_span(&self) -> (usize, usize) {
        self.current_span
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.s_max + col]
    }

    /// Row-major values, `MATRIX_ROWS x s_max`.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn indicator_row(&self) -> &[f64] {
        &self.values[FEATURE_DIM * self.s_max..]
    }
}

/// Fills an [`InputMatrix`] from a window slice: descriptors column-wise,
/// indicator 1 exactly on the current span, all-zero padding columns.
pub fn build_input_matrix(
    frames: &[[f64; FEATURE_DIM]],
    current_span: (usize, usize),
    s_max: usize,
) -> Result<InputMatrix> {
    if frames.len() > s_max {
        return Err(Error::Shape(format!(
            "window has {} frames but s_max is {s_max}; corpus frame capacity was mis-computed",
            frames.len()
        )));
    }
    if frames.is_empty() || current_span.0 > current_span.1 || current_span.1 >= frames.len() {
        return Err(Error::Shape(format!(
            "current span {current_span:?} does not fit window of {} frames",
            frames.len()
        )));
    }
    let mut values = vec![0.0; MATRIX_ROWS * s_max];
    for (col, frame) in frames.iter().enumerate() {
        for (row, &v) in frame.iter().enumerate() {
            values[row * s_max + col] = v;
        }
    }
    for col in current_span.0..=current_span.1 {
        values[FEATURE_DIM * s_max + col] = 1.0;
    }
    Ok(InputMatrix {
        values,
        s_max,
        current_span,
    })
}
