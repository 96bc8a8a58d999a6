//! Session corpora: ingestion, filtering, vocabulary and synthetic generators.

mod ingest;
mod synthetic;
mod vocab;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ingest::{
    ingest_sessions, parse_sessions, IngestReport, InputFormat, RewriteRule, TokenRewriter,
};
pub use synthetic::{generate_synthetic_corpus, random_walk_corpus, GroundTruth, SyntheticConfig};
pub use vocab::{build_vocabulary, Vocabulary, DEFAULT_SAMPLING_POWER};

/// Default minimum number of pages a session must have to be kept.
pub const DEFAULT_MIN_SESSION_LEN: usize = 3;

/// Identifier of a page after any token rewriting. Non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PageToken(String);

impl PageToken {
    pub fn new(raw: impl Into<String>) -> Result<Self> {
        let raw = raw.into();
        if raw.is_empty() {
            return Err(Error::format("page token", "empty token"));
        }
        if raw.chars().any(|c| c.is_whitespace() || c == '\0') {
            return Err(Error::format(
                "page token",
                format!("token {raw:?} contains whitespace or NUL"),
            ));
        }
        Ok(PageToken(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for PageToken {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        PageToken::new(value)
    }
}

impl From<PageToken> for String {
    fn from(t: PageToken) -> String {
        t.0
    }
}

impl fmt::Display for PageToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One user visit: an ordered, non-empty list of viewed pages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub user_id: String,
    pub start_time: u64,
    pub pages: Vec<PageToken>,
}

impl Session {
    pub fn new(user_id: impl Into<String>, start_time: u64, pages: Vec<PageToken>) -> Result<Self> {
        if pages.is_empty() {
            return Err(Error::format("session", "pages must not be empty"));
        }
        Ok(Session {
            user_id: user_id.into(),
            start_time,
            pages,
        })
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub source: String,
    /// Seconds since epoch at ingestion; zero for generated corpora so reruns are identical.
    pub ingested_at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionCorpus {
    pub sessions: Vec<Session>,
    pub meta: CorpusMeta,
}

impl SessionCorpus {
    pub fn new(sessions: Vec<Session>, source: impl Into<String>) -> Self {
        SessionCorpus {
            sessions,
            meta: CorpusMeta {
                source: source.into(),
                ingested_at: 0,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sessions.iter().map(Session::len).sum()
    }

    /// Writes the canonical JSONL session log, one session per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.sessions {
            serde_json::to_writer(&mut w, s).map_err(|e| Error::format("session log", e))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Drops sessions with fewer than `min_len` pages, keeping the order of the rest.
pub fn filter_short_sessions(corpus: &SessionCorpus, min_len: usize) -> Result<SessionCorpus> {
    if min_len == 0 {
        return Err(Error::Config("min_len must be at least 1".into()));
    }
    Ok(SessionCorpus {
        sessions: corpus
            .sessions
            .iter()
            .filter(|s| s.len() >= min_len)
            .cloned()
            .collect(),
        meta: corpus.meta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn session(user: &str, t: u64, pages: &[&str]) -> Session {
        Session::new(
            user,
            t,
            pages.iter().map(|p| PageToken::new(*p).unwrap()).collect(),
        )
        .unwrap()
    }

    fn lengths(c: &SessionCorpus) -> Vec<usize> {
        c.sessions.iter().map(Session::len).collect()
    }

    #[test]
    fn page_token_validation() {
        assert!(PageToken::new("pdp/shoe-1").is_ok());
        assert!(PageToken::new("").is_err());
        assert!(PageToken::new("a b").is_err());
        assert!(PageToken::new("a\tb").is_err());
    }

    #[test]
    fn filter_drops_short_sessions() {
        let c = SessionCorpus::new(
            vec![
                session("u", 0, &["a"]),
                session("u", 1, &["a", "b"]),
                session("u", 2, &["a", "b", "c"]),
            ],
            "test",
        );
        assert_eq!(lengths(&filter_short_sessions(&c, 2).unwrap()), vec![2, 3]);
        assert_eq!(filter_short_sessions(&c, 1).unwrap(), c);
        assert!(filter_short_sessions(&c, 4).unwrap().is_empty());
        assert!(filter_short_sessions(&c, 0).is_err());
    }

    #[test]
    fn filter_is_idempotent() {
        let c = SessionCorpus::new(
            (1..8)
                .map(|n| {
                    let pages: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
                    let refs: Vec<&str> = pages.iter().map(String::as_str).collect();
                    session("u", n as u64, &refs)
                })
                .collect(),
            "test",
        );
        for min_len in 1..9 {
            let once = filter_short_sessions(&c, min_len).unwrap();
            assert_eq!(filter_short_sessions(&once, min_len).unwrap(), once);
        }
    }
}
