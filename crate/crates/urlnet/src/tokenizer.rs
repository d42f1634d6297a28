//! Character and word vocabularies over a URL corpus, and the fixed-shape
//! integer encodings consumed by the model.
//!
//! URLs are lowercased before any tokenization (hostnames are
//! case-insensitive and this keeps vocabularies stable). A *word* is a
//! maximal run of `[a-z0-9-_]`; every other character is a *special
//! character* and is either dropped or emitted as a one-character word,
//! depending on the `special_as_words` flag. Id assignment is by descending
//! corpus frequency with ties broken by code point (strings compare
//! lexicographically), so identical corpora always produce identical
//! vocabularies.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Reserved id for the padding token.
pub const PAD_ID: u32 = 0;
/// Reserved id for the unknown token.
pub const UNK_ID: u32 = 1;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocabulary build requires a non-empty corpus")]
    EmptyCorpus,
    #[error("min_count must be at least 1, got {0}")]
    InvalidMinCount(u64),
    #[error("failed to read vocabulary file: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_'
}

/// Splits a URL into word tokens. Maximal runs of `[a-z0-9-_]` (after
/// lowercasing) become words in order; when `special_as_words` is set,
/// every delimiter character is emitted in position as a one-character
/// word, otherwise delimiters are dropped.
pub fn tokenize_words(url: &str, special_as_words: bool) -> Vec<String> {
    let lowered = url.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in lowered.chars() {
        if is_word_char(c) {
            current.push(c);
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if special_as_words {
                tokens.push(c.to_string());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Frozen character-to-id mapping with `<PAD> = 0`, `<UNK> = 1`, and all
/// retained characters contiguous from 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    char_to_id: HashMap<char, u32>,
    /// Characters for ids `2..`, in id order.
    chars: Vec<char>,
    frequency: HashMap<char, u64>,
    min_count: u64,
}

impl CharVocab {
    /// Builds the vocabulary from a corpus, retaining exactly the characters
    /// whose (lowercased) frequency is at least `min_count`.
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: u64) -> Result<Self, TokenizerError> {
        if corpus.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        if min_count < 1 {
            return Err(TokenizerError::InvalidMinCount(min_count));
        }
        let mut counts: HashMap<char, u64> = HashMap::new();
        for url in corpus {
            for c in url.as_ref().to_lowercase().chars() {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
        let mut retained: Vec<(char, u64)> = counts
            .into_iter()
            .filter(|&(_, n)| n >= min_count)
            .collect();
        retained.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut char_to_id = HashMap::with_capacity(retained.len());
        let mut chars = Vec::with_capacity(retained.len());
        let mut frequency = HashMap::with_capacity(retained.len());
        for (i, (c, n)) in retained.into_iter().enumerate() {
            char_to_id.insert(c, 2 + i as u32);
            chars.push(c);
            frequency.insert(c, n);
        }
        Ok(CharVocab {
            char_to_id,
            chars,
            frequency,
            min_count,
        })
    }

    pub fn pad_id(&self) -> u32 {
        PAD_ID
    }

    pub fn unk_id(&self) -> u32 {
        UNK_ID
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Total id count including the two reserved tokens.
    pub fn size(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn id_of(&self, c: char) -> u32 {
        self.char_to_id.get(&c).copied().unwrap_or(UNK_ID)
    }

    /// Character for an id, `None` for the reserved ids and out-of-range.
    pub fn char_of(&self, id: u32) -> Option<char> {
        if id < 2 {
            None
        } else {
            self.chars.get(id as usize - 2).copied()
        }
    }

    pub fn frequency_of(&self, c: char) -> u64 {
        self.frequency.get(&c).copied().unwrap_or(0)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        crate::data::write_atomic(path, self.to_file_string().as_bytes())
            .map_err(TokenizerError::Io)
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str("#charvocab v1\n");
        let _ = writeln!(out, "#min_count={}", self.min_count);
        out.push_str("<PAD>\t0\t0\n<UNK>\t1\t0\n");
        for (i, &c) in self.chars.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                escape_token(&c.to_string()),
                2 + i,
                self.frequency[&c]
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TokenizerError> {
        let mut lines = text.lines().enumerate();
        expect_header(&mut lines, "#charvocab v1")?;
        let params = parse_params(&mut lines)?;
        let min_count = param_u64(&params, "min_count", 2)?;
        let mut chars = Vec::new();
        let mut char_to_id = HashMap::new();
        let mut frequency = HashMap::new();
        for (token, id, freq, line) in parse_entries(lines)? {
            if token == "<PAD>" || token == "<UNK>" {
                continue;
            }
            let mut it = token.chars();
            let (Some(c), None) = (it.next(), it.next()) else {
                return Err(TokenizerError::Malformed {
                    line,
                    reason: format!("character token {token:?} is not a single character"),
                });
            };
            if id as usize != chars.len() + 2 {
                return Err(TokenizerError::Malformed {
                    line,
                    reason: format!("non-contiguous id {id}"),
                });
            }
            char_to_id.insert(c, id);
            chars.push(c);
            frequency.insert(c, freq);
        }
        Ok(CharVocab {
            char_to_id,
            chars,
            frequency,
            min_count,
        })
    }
}

/// Frozen word-to-id mapping. Words at or below `rare_threshold` corpus
/// frequency are excluded at build time and encode to `<UNK>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordVocab {
    word_to_id: HashMap<String, u32>,
    /// Words for ids `2..`, in id order.
    words: Vec<String>,
    frequency: HashMap<String, u64>,
    rare_threshold: u64,
    special_as_words: bool,
}

impl WordVocab {
    pub fn build<S: AsRef<str>>(
        corpus: &[S],
        special_as_words: bool,
        rare_threshold: u64,
    ) -> Result<Self, TokenizerError> {
        if corpus.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for url in corpus {
            for token in tokenize_words(url.as_ref(), special_as_words) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut retained: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|&(_, n)| n > rare_threshold)
            .collect();
        retained.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut word_to_id = HashMap::with_capacity(retained.len());
        let mut words = Vec::with_capacity(retained.len());
        let mut frequency = HashMap::with_capacity(retained.len());
        for (i, (w, n)) in retained.into_iter().enumerate() {
            debug_assert!(!w.is_empty());
            word_to_id.insert(w.clone(), 2 + i as u32);
            frequency.insert(w.clone(), n);
            words.push(w);
        }
        Ok(WordVocab {
            word_to_id,
            words,
            frequency,
            rare_threshold,
            special_as_words,
        })
    }

    pub fn pad_id(&self) -> u32 {
        PAD_ID
    }

    pub fn unk_id(&self) -> u32 {
        UNK_ID
    }

    pub fn rare_threshold(&self) -> u64 {
        self.rare_threshold
    }

    pub fn special_as_words(&self) -> bool {
        self.special_as_words
    }

    pub fn size(&self) -> usize {
        self.words.len() + 2
    }

    pub fn id_of(&self, word: &str) -> u32 {
        self.word_to_id.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn word_of(&self, id: u32) -> Option<&str> {
        if id < 2 {
            None
        } else {
            self.words.get(id as usize - 2).map(String::as_str)
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.word_to_id.contains_key(word)
    }

    pub fn frequency_of(&self, word: &str) -> u64 {
        self.frequency.get(word).copied().unwrap_or(0)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        crate::data::write_atomic(path, self.to_file_string().as_bytes())
            .map_err(TokenizerError::Io)
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        out.push_str("#wordvocab v1\n");
        let _ = writeln!(
            out,
            "#rare_threshold={} special_as_words={}",
            self.rare_threshold, self.special_as_words
        );
        out.push_str("<PAD>\t0\t0\n<UNK>\t1\t0\n");
        for (i, w) in self.words.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}", escape_token(w), 2 + i, self.frequency[w]);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TokenizerError> {
        let mut lines = text.lines().enumerate();
        expect_header(&mut lines, "#wordvocab v1")?;
        let params = parse_params(&mut lines)?;
        let rare_threshold = param_u64(&params, "rare_threshold", 2)?;
        let special_as_words = match params.get("special_as_words").map(String::as_str) {
            Some("true") => true,
            Some("false") => false,
            _ => {
                return Err(TokenizerError::Malformed {
                    line: 2,
                    reason: "missing or invalid special_as_words parameter".into(),
                })
            }
        };
        let mut words = Vec::new();
        let mut word_to_id = HashMap::new();
        let mut frequency = HashMap::new();
        for (token, id, freq, line) in parse_entries(lines)? {
            if token == "<PAD>" || token == "<UNK>" {
                continue;
            }
            if id as usize != words.len() + 2 {
                return Err(TokenizerError::Malformed {
                    line,
                    reason: format!("non-contiguous id {id}"),
                });
            }
            word_to_id.insert(token.clone(), id);
            frequency.insert(token.clone(), freq);
            words.push(token);
        }
        Ok(WordVocab {
            word_to_id,
            words,
            frequency,
            rare_threshold,
            special_as_words,
        })
    }
}

fn escape_token(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for c in token.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

fn unescape_token(token: &str, line: usize) -> Result<String, TokenizerError> {
    let mut out = String::with_capacity(token.len());
    let mut it = token.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match it.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => {
                return Err(TokenizerError::Malformed {
                    line,
                    reason: format!("bad escape \\{}", other.map(String::from).unwrap_or_default()),
                })
            }
        }
    }
    Ok(out)
}

type NumberedLines<'a> = std::iter::Enumerate<std::str::Lines<'a>>;

fn expect_header(lines: &mut NumberedLines, expected: &str) -> Result<(), TokenizerError> {
    match lines.next() {
        Some((_, line)) if line == expected => Ok(()),
        Some((i, line)) => Err(TokenizerError::Malformed {
            line: i + 1,
            reason: format!("expected header {expected:?}, got {line:?}"),
        }),
        None => Err(TokenizerError::Malformed {
            line: 1,
            reason: "empty file".into(),
        }),
    }
}

fn parse_params(lines: &mut NumberedLines) -> Result<HashMap<String, String>, TokenizerError> {
    let Some((i, line)) = lines.next() else {
        return Err(TokenizerError::Malformed {
            line: 2,
            reason: "missing parameter line".into(),
        });
    };
    let Some(body) = line.strip_prefix('#') else {
        return Err(TokenizerError::Malformed {
            line: i + 1,
            reason: "parameter line must start with '#'".into(),
        });
    };
    let mut params = HashMap::new();
    for pair in body.split_whitespace() {
        if let Some((k, v)) = pair.split_once('=') {
            params.insert(k.to_string(), v.to_string());
        }
    }
    Ok(params)
}

fn param_u64(
    params: &HashMap<String, String>,
    key: &str,
    line: usize,
) -> Result<u64, TokenizerError> {
    params
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| TokenizerError::Malformed {
            line,
            reason: format!("missing or invalid {key} parameter"),
        })
}

fn parse_entries(
    lines: NumberedLines,
) -> Result<Vec<(String, u32, u64, usize)>, TokenizerError> {
    let mut entries = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let mut fields = line.split('\t');
        let (Some(token), Some(id), Some(freq), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(TokenizerError::Malformed {
                line: line_no,
                reason: "expected token<TAB>id<TAB>frequency".into(),
            });
        };
        let id: u32 = id.parse().map_err(|_| TokenizerError::Malformed {
            line: line_no,
            reason: format!("bad id {id:?}"),
        })?;
        let freq: u64 = freq.parse().map_err(|_| TokenizerError::Malformed {
            line: line_no,
            reason: format!("bad frequency {freq:?}"),
        })?;
        let token = if token == "<PAD>" || token == "<UNK>" {
            token.to_string()
        } else {
            unescape_token(token, line_no)?
        };
        entries.push((token, id, freq, line_no));
    }
    Ok(entries)
}

/// Fixed-shape integer encoding of one URL: `L1` character ids, `L2` word
/// ids, and an `L2 × L3` grid of per-word character ids. Padding ids only
/// ever appear as a contiguous suffix (per row, for the grid).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedUrl {
    pub char_ids: Vec<u32>,
    pub word_ids: Vec<u32>,
    /// Flattened `L2 × L3` grid, row-major.
    pub word_char_ids: Vec<u32>,
    pub l3: usize,
    /// `+1` malicious, `-1` benign; absent at inference time.
    pub label: Option<i8>,
}

impl EncodedUrl {
    pub fn l1(&self) -> usize {
        self.char_ids.len()
    }

    pub fn l2(&self) -> usize {
        self.word_ids.len()
    }

    pub fn word_char_row(&self, i: usize) -> &[u32] {
        &self.word_char_ids[i * self.l3..(i + 1) * self.l3]
    }

    pub fn with_label(mut self, label: i8) -> Self {
        debug_assert!(label == 1 || label == -1);
        self.label = Some(label);
        self
    }
}

/// Encodes a URL against frozen vocabularies. Characters and words beyond
/// `l1`/`l2` are truncated (prefix kept); short sequences are padded.
/// Unknown characters and folded/unseen words map to `<UNK>`, but the
/// per-word character grid always holds the real character ids, so an
/// out-of-vocabulary word still carries its spelling.
pub fn encode_url(
    url: &str,
    cv: &CharVocab,
    wv: &WordVocab,
    l1: usize,
    l2: usize,
    l3: usize,
) -> EncodedUrl {
    assert!(l1 >= 1 && l2 >= 1 && l3 >= 1, "sequence lengths must be >= 1");
    let lowered = url.to_lowercase();

    let mut char_ids = Vec::with_capacity(l1);
    for c in lowered.chars().take(l1) {
        char_ids.push(cv.id_of(c));
    }
    char_ids.resize(l1, PAD_ID);

    let tokens = tokenize_words(url, wv.special_as_words());
    let mut word_ids = Vec::with_capacity(l2);
    let mut word_char_ids = vec![PAD_ID; l2 * l3];
    for (i, token) in tokens.iter().take(l2).enumerate() {
        word_ids.push(wv.id_of(token));
        for (j, c) in token.chars().take(l3).enumerate() {
            word_char_ids[i * l3 + j] = cv.id_of(c);
        }
    }
    word_ids.resize(l2, PAD_ID);

    EncodedUrl {
        char_ids,
        word_ids,
        word_char_ids,
        l3,
        label: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_drops_delimiters_by_default() {
        assert_eq!(
            tokenize_words("http://test.com/a.exe", false),
            vec!["http", "test", "com", "a", "exe"]
        );
    }

    #[test]
    fn tokenize_emits_special_chars_in_position() {
        assert_eq!(
            tokenize_words("http://test.com/a.exe", true),
            vec!["http", ":", "/", "/", "test", ".", "com", "/", "a", ".", "exe"]
        );
    }

    #[test]
    fn tokenize_empty_url() {
        assert_eq!(tokenize_words("", true), Vec::<String>::new());
    }

    #[test]
    fn tokenize_lowercases_and_keeps_dash_underscore() {
        assert_eq!(
            tokenize_words("HTTP://My-Site_01.COM", false),
            vec!["http", "my-site_01", "com"]
        );
    }

    #[test]
    fn char_vocab_tiny_corpus() {
        let v = CharVocab::build(&["ab", "ab"], 1).unwrap();
        assert_eq!(v.size(), 4);
        assert_eq!(v.id_of('a'), 2);
        assert_eq!(v.id_of('b'), 3);
        assert_eq!(v.char_of(2), Some('a'));
        assert_eq!(v.char_of(0), None);
    }

    #[test]
    fn char_vocab_threshold_excludes_rare() {
        let v = CharVocab::build(&["ab", "ab", "c"], 2).unwrap();
        assert_eq!(v.id_of('c'), UNK_ID);
        assert_eq!(v.size(), 4);
    }

    #[test]
    fn char_vocab_orders_by_frequency_then_code_point() {
        // 'b' appears 3 times, 'a' and 'c' twice each
        let v = CharVocab::build(&["bba", "bca"], 1).unwrap();
        assert_eq!(v.id_of('b'), 2);
        assert_eq!(v.id_of('a'), 3);
        assert_eq!(v.id_of('c'), 4);
    }

    #[test]
    fn char_vocab_rejects_empty_corpus_and_zero_min_count() {
        assert!(matches!(
            CharVocab::build(&[] as &[&str], 1),
            Err(TokenizerError::EmptyCorpus)
        ));
        assert!(matches!(
            CharVocab::build(&["a"], 0),
            Err(TokenizerError::InvalidMinCount(0))
        ));
    }

    #[test]
    fn char_vocab_matches_brute_force_histogram() {
        let corpus: Vec<String> = (0..200)
            .map(|i| format!("http://host{}.example/{}", i % 7, i))
            .collect();
        let min_count = 3;
        let v = CharVocab::build(&corpus, min_count).unwrap();
        // independent oracle: plain character histogram
        let mut hist: HashMap<char, u64> = HashMap::new();
        for url in &corpus {
            for c in url.to_lowercase().chars() {
                *hist.entry(c).or_insert(0) += 1;
            }
        }
        let expected = hist.values().filter(|&&n| n >= min_count).count();
        assert_eq!(v.size(), expected + 2);
        for (c, n) in hist {
            if n >= min_count {
                assert!(v.id_of(c) >= 2, "char {c:?} should be retained");
                assert_eq!(v.frequency_of(c), n);
            } else {
                assert_eq!(v.id_of(c), UNK_ID);
            }
        }
    }

    #[test]
    fn word_vocab_folds_singletons() {
        let v = WordVocab::build(&["a.a", "a.b"], false, 1).unwrap();
        assert_eq!(v.size(), 3); // pad, unk, "a"
        assert!(v.contains("a"));
        assert_eq!(v.id_of("b"), UNK_ID);
    }

    #[test]
    fn word_vocab_with_specials_and_zero_threshold() {
        let v = WordVocab::build(&["a.a", "a.b"], true, 0).unwrap();
        assert!(v.contains("a"));
        assert!(v.contains("b"));
        assert!(v.contains("."));
        assert_eq!(v.size(), 5);
    }

    #[test]
    fn word_vocab_matches_brute_force_histogram() {
        let corpus: Vec<String> = (0..300)
            .map(|i| format!("http://w{}.site.com/page{}/item", i % 9, i))
            .collect();
        let v = WordVocab::build(&corpus, true, 1).unwrap();
        let mut hist: HashMap<String, u64> = HashMap::new();
        for url in &corpus {
            for t in tokenize_words(url, true) {
                *hist.entry(t).or_insert(0) += 1;
            }
        }
        let retained = hist.values().filter(|&&n| n > 1).count();
        assert_eq!(v.size(), retained + 2);
        // most unique words here are one-off page names
        let folded = hist.values().filter(|&&n| n <= 1).count();
        assert!(
            folded * 2 > hist.len(),
            "expected most unique words folded: {folded} of {}",
            hist.len()
        );
    }

    #[test]
    fn vocab_build_is_deterministic() {
        let corpus = ["http://a.b/c", "x.y/z?q=1", "http://a.b/c2"];
        let v1 = WordVocab::build(&corpus, true, 0).unwrap();
        let v2 = WordVocab::build(&corpus, true, 0).unwrap();
        assert_eq!(v1, v2);
        let c1 = CharVocab::build(&corpus, 1).unwrap();
        let c2 = CharVocab::build(&corpus, 1).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn vocab_files_round_trip_bit_exact() {
        let corpus = ["http://test.com/a b\t", "evil.exe?x=1&y=2"];
        let cv = CharVocab::build(&corpus, 1).unwrap();
        let text = cv.to_file_string();
        let reloaded = CharVocab::parse(&text).unwrap();
        assert_eq!(cv, reloaded);
        assert_eq!(text, reloaded.to_file_string());

        let wv = WordVocab::build(&corpus, true, 0).unwrap();
        let text = wv.to_file_string();
        let reloaded = WordVocab::parse(&text).unwrap();
        assert_eq!(wv, reloaded);
        assert_eq!(text, reloaded.to_file_string());
    }

    #[test]
    fn vocab_parse_rejects_garbage() {
        assert!(CharVocab::parse("#wrong header\n#min_count=1\n").is_err());
        assert!(CharVocab::parse("#charvocab v1\n#min_count=1\nnotENOUGHfields\n").is_err());
        assert!(WordVocab::parse("#wordvocab v1\n#rare_threshold=1\n").is_err());
    }

    fn test_vocabs() -> (CharVocab, WordVocab) {
        let corpus = [
            "http://test.com/a.exe",
            "http://test.com/b.exe",
            "https://safe.org/home",
            "https://safe.org/about",
        ];
        (
            CharVocab::build(&corpus, 1).unwrap(),
            WordVocab::build(&corpus, false, 0).unwrap(),
        )
    }

    #[test]
    fn encode_pads_short_urls() {
        let (cv, wv) = test_vocabs();
        let url = "http://test.com/a.exe"; // 21 characters
        let enc = encode_url(url, &cv, &wv, 200, 200, 20);
        assert_eq!(enc.char_ids.len(), 200);
        let non_pad = enc.char_ids.iter().filter(|&&id| id != PAD_ID).count();
        assert_eq!(non_pad, 21);
        assert!(enc.char_ids[21..].iter().all(|&id| id == PAD_ID));
    }

    #[test]
    fn encode_truncates_to_prefix() {
        let (cv, wv) = test_vocabs();
        let long: String = "http://test.com/".chars().chain("a".repeat(224).chars()).collect();
        assert_eq!(long.chars().count(), 240);
        let enc = encode_url(&long, &cv, &wv, 200, 200, 20);
        assert_eq!(enc.char_ids.len(), 200);
        let expected: Vec<u32> = long.chars().take(200).map(|c| cv.id_of(c)).collect();
        assert_eq!(enc.char_ids, expected);
    }

    #[test]
    fn oov_word_keeps_real_characters_in_grid() {
        let (cv, wv) = test_vocabs();
        let enc = encode_url("http://test.com/zzhome.exe", &cv, &wv, 200, 200, 20);
        // "zzhome" was never seen as a word
        assert_eq!(enc.word_ids[2], UNK_ID);
        let row = enc.word_char_row(2);
        assert_eq!(row[0], cv.id_of('z'));
        assert_eq!(row[2], cv.id_of('h'));
        assert_eq!(row[6], PAD_ID);
    }

    #[test]
    fn word_ids_round_trip_through_vocab() {
        let (cv, wv) = test_vocabs();
        let url = "http://test.com/a.exe";
        let enc = encode_url(url, &cv, &wv, 200, 200, 20);
        let decoded: Vec<String> = enc
            .word_ids
            .iter()
            .take_while(|&&id| id != PAD_ID)
            .map(|&id| wv.word_of(id).unwrap().to_string())
            .collect();
        assert_eq!(decoded, tokenize_words(url, false));
    }

    #[test]
    fn long_tokens_truncate_in_grid() {
        let corpus = ["abcdefghijklmnopqrstuvwxyz.com"];
        let cv = CharVocab::build(&corpus, 1).unwrap();
        let wv = WordVocab::build(&corpus, false, 0).unwrap();
        let enc = encode_url(corpus[0], &cv, &wv, 40, 10, 20);
        let row = enc.word_char_row(0);
        assert_eq!(row.len(), 20);
        assert_eq!(row[19], cv.id_of('t')); // 20th letter of the 26-letter token
        assert!(row.iter().all(|&id| id != PAD_ID));
    }

    fn pad_suffix_contiguous(ids: &[u32]) -> bool {
        let first_pad = ids.iter().position(|&id| id == PAD_ID).unwrap_or(ids.len());
        ids[first_pad..].iter().all(|&id| id == PAD_ID)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn encode_shapes_are_constant(url in ".{0,10000}") {
            let (cv, wv) = test_vocabs();
            let enc = encode_url(&url, &cv, &wv, 200, 200, 20);
            prop_assert_eq!(enc.char_ids.len(), 200);
            prop_assert_eq!(enc.word_ids.len(), 200);
            prop_assert_eq!(enc.word_char_ids.len(), 200 * 20);
            prop_assert!(enc.char_ids.iter().all(|&id| (id as usize) < cv.size()));
            prop_assert!(enc.word_ids.iter().all(|&id| (id as usize) < wv.size()));
            for i in 0..200 {
                prop_assert!(pad_suffix_contiguous(enc.word_char_row(i)));
            }
            prop_assert!(pad_suffix_contiguous(&enc.word_ids));
        }

        #[test]
        fn folding_is_monotone_in_threshold(urls in proptest::collection::vec("[a-z.]{1,12}", 1..20)) {
            let mut last = usize::MAX;
            for threshold in 0..4u64 {
                let v = WordVocab::build(&urls, false, threshold).unwrap();
                prop_assert!(v.size() <= last);
                last = v.size();
            }
        }
    }
}
