use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use super::{PageToken, SessionCorpus};
use crate::error::{Error, Result};

/// Exponent applied to page counts for the negative-sampling distribution.
pub const DEFAULT_SAMPLING_POWER: f64 = 0.75;

/// Dense page-id mapping with occurrence counts and negative-sampling weights.
///
/// Ids are assigned by descending count, ties broken by token order, so a
/// vocabulary built from the same corpus is always identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<PageToken>,
    counts: Vec<u64>,
    sampling_weights: Vec<f64>,
    index: HashMap<PageToken, usize>,
}

impl Vocabulary {
    fn from_counts(mut entries: Vec<(PageToken, u64)>, power: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("vocabulary has no tokens".into()));
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let raw: Vec<f64> = entries.iter().map(|(_, c)| (*c as f64).powf(power)).collect();
        let total: f64 = raw.iter().sum();
        let sampling_weights = raw.iter().map(|w| w / total).collect();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Ok(Vocabulary {
            tokens,
            counts,
            sampling_weights,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &PageToken) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_of_str(&self, token: &str) -> Option<usize> {
        PageToken::new(token).ok().and_then(|t| self.id(&t))
    }

    pub fn token(&self, id: usize) -> &PageToken {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[PageToken] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn sampling_weights(&self) -> &[f64] {
        &self.sampling_weights
    }

    /// Maps a session onto vocabulary ids, dropping unknown pages.
    pub fn encode<'a>(&self, pages: impl IntoIterator<Item = &'a PageToken>) -> Vec<usize> {
        pages.into_iter().filter_map(|p| self.id(p)).collect()
    }

    /// Writes `token, id, count, sampling_weight` rows with a header line.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "token\tid\tcount\tsampling_weight")?;
        for (id, token) in self.tokens.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                token, id, self.counts[id], self.sampling_weights[id]
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the TSV export back. Ids must be dense and in order; the sampling
    /// weights are taken as written, not recomputed.
    pub fn read_tsv<R: Read>(reader: R) -> Result<Self> {
        let bad = |line: usize, detail: &str| {
            Error::format("vocabulary", format!("line {}: {detail}", line + 1))
        };
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        let mut weights = Vec::new();
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::format("vocabulary", e))?;
            if n == 0 && line.starts_with("token\t") {
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(n, "expected 4 columns"));
            }
            let token = PageToken::new(cols[0]).map_err(|_| bad(n, "invalid token"))?;
            let id: usize = cols[1].parse().map_err(|_| bad(n, "invalid id"))?;
            if id != tokens.len() {
                return Err(bad(n, "ids must be dense and ascending"));
            }
            let count: u64 = cols[2].parse().map_err(|_| bad(n, "invalid count"))?;
            let weight: f64 = cols[3].parse().map_err(|_| bad(n, "invalid weight"))?;
            if !(weight.is_finite() && weight > 0.0) {
                return Err(bad(n, "sampling weight must be positive"));
            }
            tokens.push(token);
            counts.push(count);
            weights.push(weight);
        }
        if tokens.is_empty() {
            return Err(Error::Empty("vocabulary file has no tokens".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::format(
                "vocabulary",
                format!("sampling weights sum to {total}, expected 1"),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::format("vocabulary", format!("duplicate token {t}")));
            }
        }
        Ok(Vocabulary {
            tokens,
            counts,
            sampling_weights: weights,
            index,
        })
    }
}

/// Counts page occurrences, drops pages seen fewer than `min_count` times and
/// assigns sampling weights proportional to `count^power`.
pub fn build_vocabulary(corpus: &SessionCorpus, min_count: u64, power: f64) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot build a vocabulary from an empty corpus".into()));
    }
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::Config(format!("sampling power must be positive, got {power}")));
    }
    let mut counts: HashMap<&PageToken, u64> = HashMap::new();
    for page in corpus.sessions.iter().flat_map(|s| &s.pages) {
        *counts.entry(page).or_default() += 1;
    }
    let entries = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count.max(1))
        .map(|(t, c)| (t.clone(), c))
        .collect();
    Vocabulary::from_counts(entries, power)
}
