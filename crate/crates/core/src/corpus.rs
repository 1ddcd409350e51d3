//! Labeled comment ingestion and cleaning.
//!
//! The raw dataset is a CSV with `projectname,classification,commenttext`
//! columns. Every debt category (DESIGN, DEFECT, ...) collapses to a single
//! SATD label; `WITHOUT_CLASSIFICATION` is the negative class.
//!
//! Cleaning runs in a fixed order: exact-duplicate removal on the raw text,
//! character/hyperlink normalization, tokenization, stop-word removal and
//! lemmatization, and finally the hollow-comment filter.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::tokenize;
use crate::text::{Lemmatizer, StopList};

const COL_PROJECT: &str = "projectname";
const COL_CLASS: &str = "classification";
const COL_TEXT: &str = "commenttext";

/// Classification tokens that mark a comment as technical debt.
pub const SATD_CLASSES: &[&str] = &[
    "DESIGN",
    "IMPLEMENTATION",
    "DEFECT",
    "TEST",
    "DOCUMENTATION",
    "REQUIREMENT",
];
pub const NON_SATD_CLASS: &str = "WITHOUT_CLASSIFICATION";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("data error at row {row}: unknown classification `{token}`")]
    UnknownClass { row: u64, token: String },
    #[error("data error at row {row}: {msg}")]
    BadRow { row: u64, msg: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NonSatd,
    Satd,
}

impl Label {
    pub fn from_class_token(token: &str) -> Option<Label> {
        let t = token.trim().to_ascii_uppercase();
        if t == NON_SATD_CLASS {
            Some(Label::NonSatd)
        } else if SATD_CLASSES.contains(&t.as_str()) {
            Some(Label::Satd)
        } else {
            None
        }
    }

    pub fn is_satd(self) -> bool {
        self == Label::Satd
    }

    pub fn as_bit(self) -> u8 {
        match self {
            Label::Satd => 1,
            Label::NonSatd => 0,
        }
    }

    pub fn from_bit(bit: u8) -> Option<Label> {
        match bit {
            1 => Some(Label::Satd),
            0 => Some(Label::NonSatd),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Satd => "SATD",
            Label::NonSatd => "NonSATD",
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Satd => Label::NonSatd,
            Label::NonSatd => Label::Satd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub project_id: String,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectCounts {
    pub total: usize,
    pub satd: usize,
}

impl ProjectCounts {
    pub fn satd_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.satd as f64 / self.total as f64
        }
    }
}

/// Ordered records plus per-project tallies. The tallies are derived on
/// construction, so they always agree with the record list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    records: Vec<CommentRecord>,
    per_project_counts: BTreeMap<String, ProjectCounts>,
}

impl Corpus {
    pub fn new(records: Vec<CommentRecord>) -> Self {
        let mut per_project_counts: BTreeMap<String, ProjectCounts> = BTreeMap::new();
        for r in &records {
            let c = per_project_counts.entry(r.project_id.clone()).or_default();
            c.total += 1;
            if r.label.is_satd() {
                c.satd += 1;
            }
        }
        Corpus {
            records,
            per_project_counts,
        }
    }

    pub fn records(&self) -> &[CommentRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<CommentRecord> {
        self.records
    }

    pub fn per_project_counts(&self) -> &BTreeMap<String, ProjectCounts> {
        &self.per_project_counts
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn satd_count(&self) -> usize {
        self.per_project_counts.values().map(|c| c.satd).sum()
    }

    /// Sorted project ids.
    pub fn projects(&self) -> Vec<String> {
        self.per_project_counts.keys().cloned().collect()
    }

    pub fn project(&self, project_id: &str) -> Corpus {
        Corpus::new(
            self.records
                .iter()
                .filter(|r| r.project_id == project_id)
                .cloned()
                .collect(),
        )
    }

    /// Sub-corpus in the order of `indices`.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus::new(indices.iter().map(|&i| self.records[i].clone()).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupStats {
    pub removed_count: usize,
    pub removed_fraction: f64,
    pub per_project_removed: BTreeMap<String, usize>,
}

/// Reads the labeled CSV. Rows whose project is not in `project_filter`
/// (when given) are skipped. Row numbers in errors are 1-based data rows.
pub fn load_corpus(
    path: impl AsRef<Path>,
    project_filter: Option<&HashSet<String>>,
) -> Result<Corpus, CorpusError> {
    let file = File::open(path)?;
    read_corpus_csv(file, project_filter)
}

pub fn read_corpus_csv<R: io::Read>(
    reader: R,
    project_filter: Option<&HashSet<String>>,
) -> Result<Corpus, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize, CorpusError> {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    };
    let i_project = find(COL_PROJECT)?;
    let i_class = find(COL_CLASS)?;
    let i_text = find(COL_TEXT)?;

    let mut records = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row_no = n as u64 + 1;
        let row = row.map_err(|e| CorpusError::BadRow {
            row: row_no,
            msg: e.to_string(),
        })?;
        let project = row.get(i_project).unwrap_or("").trim();
        if project.is_empty() {
            return Err(CorpusError::BadRow {
                row: row_no,
                msg: "empty project name".into(),
            });
        }
        let class = row.get(i_class).unwrap_or("");
        let label = Label::from_class_token(class).ok_or_else(|| CorpusError::UnknownClass {
            row: row_no,
            token: class.to_string(),
        })?;
        if let Some(filter) = project_filter {
            if !filter.contains(project) {
                continue;
            }
        }
        records.push(CommentRecord {
            project_id: project.to_string(),
            text: row.get(i_text).unwrap_or("").to_string(),
            label,
        });
    }
    Ok(Corpus::new(records))
}

/// Keeps the first occurrence of every trimmed text, across all projects.
pub fn dedupe(corpus: &Corpus) -> (Corpus, DedupStats) {
    dedupe_by(corpus, |r| r.text.trim())
}

fn dedupe_by<'a, F>(corpus: &'a Corpus, key: F) -> (Corpus, DedupStats)
where
    F: Fn(&'a CommentRecord) -> &'a str,
{
    let mut seen: HashSet<&str> = HashSet::with_capacity(corpus.len());
    let mut kept = Vec::with_capacity(corpus.len());
    let mut per_project_removed: BTreeMap<String, usize> = BTreeMap::new();
    for r in corpus.records() {
        if seen.insert(key(r)) {
            kept.push(r.clone());
        } else {
            *per_project_removed.entry(r.project_id.clone()).or_default() += 1;
        }
    }
    let removed_count = corpus.len() - kept.len();
    let removed_fraction = if corpus.is_empty() {
        0.0
    } else {
        removed_count as f64 / corpus.len() as f64
    };
    (
        Corpus::new(kept),
        DedupStats {
            removed_count,
            removed_fraction,
            per_project_removed,
        },
    )
}

/// Characters stripped by [`normalize_text`].
pub const SPECIAL_CHARS: &[char] = &[
    '#', '@', '&', '/', '\'', '"', '`', '(', ')', '[', ']', '{', '}', '!',
];

fn hyperlink_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:https?|ftp)://\S+|\bwww\.\S+").unwrap())
}

/// Lowercases, drops hyperlinks and the special characters, and collapses
/// all whitespace (newlines included) to single spaces.
pub fn normalize_text(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_links = hyperlink_re().replace_all(&lower, " ");
    let stripped: String = no_links
        .chars()
        .filter(|c| !SPECIAL_CHARS.contains(c))
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Stop-word removal followed by lemmatization.
pub fn reduce_tokens(tokens: &[String], stop: &StopList, lemmatizer: &Lemmatizer) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !stop.contains(t))
        .map(|t| lemmatizer.lemmatize(t))
        .collect()
}

/// Normalization, tokenization, stop-word removal and lemmatization of one
/// raw comment.
pub fn clean_tokens(text: &str, lemmatizer: &Lemmatizer) -> Vec<String> {
    reduce_tokens(&tokenize(&normalize_text(text)), StopList::english(), lemmatizer)
}

/// True when the comment carries content: the joined text is longer than
/// `min_chars` and at least one token is not hollow (no letters, or a single
/// letter repeated like `ff`/`hhh`).
pub fn filter_hollow(tokens: &[String], min_chars: usize) -> bool {
    let joined_len = tokens.iter().map(|t| t.chars().count()).sum::<usize>()
        + tokens.len().saturating_sub(1);
    if joined_len <= min_chars {
        return false;
    }
    tokens.iter().any(|t| !is_hollow_token(t))
}

fn is_hollow_token(token: &str) -> bool {
    let mut letters = token.chars().filter(|c| c.is_alphabetic());
    match letters.next() {
        None => true,
        Some(first) => token.chars().all(|c| c == first),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub dedupe: bool,
    /// Also drop records whose cleaned text collides with an earlier one.
    pub dedupe_cleaned: bool,
    pub min_chars: usize,
    pub lemmatizer: Lemmatizer,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            dedupe: true,
            dedupe_cleaned: true,
            min_chars: 3,
            lemmatizer: Lemmatizer::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub input_count: usize,
    pub dedup: DedupStats,
    pub hollow_removed: usize,
    pub cleaned_duplicates_removed: usize,
    pub output_count: usize,
    pub output_satd: usize,
    pub per_project: BTreeMap<String, ProjectCounts>,
}

/// Full cleaning pipeline. Output record text is the space-joined reduced
/// token list, so re-tokenizing it yields the same tokens.
pub fn preprocess(corpus: &Corpus, config: &PreprocessConfig) -> (Corpus, PreprocessStats) {
    let (deduped, dedup) = if config.dedupe {
        dedupe(corpus)
    } else {
        (
            corpus.clone(),
            DedupStats {
                removed_count: 0,
                removed_fraction: 0.0,
                per_project_removed: BTreeMap::new(),
            },
        )
    };
    let mut hollow_removed = 0;
    let mut cleaned = Vec::with_capacity(deduped.len());
    for r in deduped.records() {
        let tokens = clean_tokens(&r.text, &config.lemmatizer);
        if !filter_hollow(&tokens, config.min_chars) {
            hollow_removed += 1;
            continue;
        }
        cleaned.push(CommentRecord {
            project_id: r.project_id.clone(),
            text: tokens.join(" "),
            label: r.label,
        });
    }
    let mut out = Corpus::new(cleaned);
    let mut cleaned_duplicates_removed = 0;
    if config.dedupe && config.dedupe_cleaned {
        let (d, s) = dedupe(&out);
        cleaned_duplicates_removed = s.removed_count;
        out = d;
    }
    let stats = PreprocessStats {
        input_count: corpus.len(),
        dedup,
        hollow_removed,
        cleaned_duplicates_removed,
        output_count: out.len(),
        output_satd: out.satd_count(),
        per_project: out.per_project_counts().clone(),
    };
    (out, stats)
}

/// Writes the cleaned corpus as `project<TAB>label<TAB>text` lines after the
/// given `#`-prefixed header lines.
pub fn write_clean_corpus<W: Write>(
    mut out: W,
    corpus: &Corpus,
    header: &[String],
) -> io::Result<()> {
    for h in header {
        writeln!(out, "# {h}")?;
    }
    for r in corpus.records() {
        let text: String = r
            .text
            .chars()
            .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        writeln!(out, "{}\t{}\t{}", r.project_id, r.label.as_bit(), text)?;
    }
    out.flush()
}

pub fn read_clean_corpus<R: io::Read>(reader: R) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut row = 0u64;
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        row += 1;
        let mut parts = line.splitn(3, '\t');
        let (Some(project), Some(bit), text) = (parts.next(), parts.next(), parts.next()) else {
            return Err(CorpusError::BadRow {
                row,
                msg: "expected project<TAB>label<TAB>text".into(),
            });
        };
        let label = bit
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(Label::from_bit)
            .ok_or_else(|| CorpusError::BadRow {
                row,
                msg: format!("label must be 0 or 1, got `{bit}`"),
            })?;
        if project.is_empty() {
            return Err(CorpusError::BadRow {
                row,
                msg: "empty project name".into(),
            });
        }
        records.push(CommentRecord {
            project_id: project.to_string(),
            text: text.unwrap_or("").to_string(),
            label,
        });
    }
    Ok(Corpus::new(records))
}

pub fn load_clean_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    read_clean_corpus(File::open(path)?)
}

/// Per-project count of SATD records that share their text with an earlier record.
pub fn duplicate_satd_counts(corpus: &Corpus) -> HashMap<String, usize> {
    let mut seen = HashSet::new();
    let mut out = HashMap::new();
    for r in corpus.records() {
        if !seen.insert(r.text.trim()) && r.label.is_satd() {
            *out.entry(r.project_id.clone()).or_insert(0) += 1;
        }
    }
    out
}
