use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use regex::Regex;
use serde::Deserialize;

use super::{CorpusMeta, PageToken, Session, SessionCorpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            other => Err(Error::Config(format!("unknown session log format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct RewriteRule {
    pub pattern: Regex,
    pub replacement: String,
}

/// Ordered regex rewrites applied to every raw page id at ingest (page type grouping).
/// An empty rewriter is the identity.
#[derive(Debug, Clone, Default)]
pub struct TokenRewriter {
    rules: Vec<RewriteRule>,
}

impl TokenRewriter {
    pub fn identity() -> Self {
        TokenRewriter::default()
    }

    pub fn new(rules: Vec<RewriteRule>) -> Self {
        TokenRewriter { rules }
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file)
    }

    /// Parses a two-column `pattern,replacement` CSV. A leading header row with
    /// exactly those names is skipped.
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut rules = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::format("rewrite table", e))?;
            if rec.len() != 2 {
                return Err(Error::format(
                    "rewrite table",
                    format!("row {} has {} columns, expected 2", line + 1, rec.len()),
                ));
            }
            if line == 0 && &rec[0] == "pattern" && &rec[1] == "replacement" {
                continue;
            }
            let pattern = Regex::new(&rec[0])
                .map_err(|e| Error::format("rewrite table", format!("row {}: {e}", line + 1)))?;
            rules.push(RewriteRule {
                pattern,
                replacement: rec[1].to_string(),
            });
        }
        Ok(TokenRewriter { rules })
    }

    pub fn apply(&self, raw: &str) -> String {
        let mut token = raw.to_string();
        for rule in &self.rules {
            token = rule
                .pattern
                .replace_all(&token, rule.replacement.as_str())
                .into_owned();
        }
        token
    }
}

#[derive(Deserialize)]
struct RawRecord {
    user_id: Option<String>,
    start_time: Option<u64>,
    pages: Option<Vec<String>>,
}

impl RawRecord {
    fn into_session(self, rewriter: &TokenRewriter) -> Option<Session> {
        let user_id = self.user_id.filter(|u| !u.is_empty())?;
        let start_time = self.start_time?;
        let pages = self
            .pages?
            .iter()
            .map(|p| PageToken::new(rewriter.apply(p)))
            .collect::<Result<Vec<_>>>()
            .ok()?;
        Session::new(user_id, start_time, pages).ok()
    }
}

fn parse_jsonl<R: Read>(
    reader: R,
    rewriter: &TokenRewriter,
) -> Result<(Vec<Session>, IngestReport)> {
    let mut sessions = Vec::new();
    let mut report = IngestReport::default();
    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        let line = match std::str::from_utf8(&buf) {
            Ok(l) => l.trim(),
            Err(_) => {
                report.rejected += 1;
                continue;
            }
        };
        if line.is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(line)
            .ok()
            .and_then(|r| r.into_session(rewriter))
        {
            Some(s) => {
                sessions.push(s);
                report.accepted += 1;
            }
            None => report.rejected += 1,
        }
    }
    Ok((sessions, report))
}

fn parse_csv<R: Read>(reader: R, rewriter: &TokenRewriter) -> Result<(Vec<Session>, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let mut sessions = Vec::new();
    let mut report = IngestReport::default();

    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) if e.is_io_error() => return Err(Error::format("session log", e)),
        Err(e) => return Err(Error::format("session log header", e)),
    };
    if headers.is_empty() {
        return Ok((sessions, report));
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format("session log header", format!("missing column `{name}`")))
    };
    let (user_col, time_col, pages_col) = (column("user_id")?, column("start_time")?, column("pages")?);

    for rec in rdr.byte_records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(Error::format("session log", e)),
            Err(_) => {
                report.rejected += 1;
                continue;
            }
        };
        let field = |i: usize| rec.get(i).and_then(|b| std::str::from_utf8(b).ok());
        let raw = RawRecord {
            user_id: field(user_col).map(str::to_string),
            start_time: field(time_col).and_then(|t| t.trim().parse().ok()),
            pages: field(pages_col)
                .filter(|p| !p.is_empty())
                .map(|p| p.split('|').map(str::to_string).collect()),
        };
        match raw.into_session(rewriter) {
            Some(s) => {
                sessions.push(s);
                report.accepted += 1;
            }
            None => report.rejected += 1,
        }
    }
    Ok((sessions, report))
}

/// Parses a session log from any reader. Malformed records are skipped and counted.
pub fn parse_sessions<R: Read>(
    reader: R,
    format: InputFormat,
    rewriter: &TokenRewriter,
) -> Result<(SessionCorpus, IngestReport)> {
    let (sessions, report) = match format {
        InputFormat::Jsonl => parse_jsonl(reader, rewriter)?,
        InputFormat::Csv => parse_csv(reader, rewriter)?,
    };
    Ok((
        SessionCorpus {
            sessions,
            meta: CorpusMeta::default(),
        },
        report,
    ))
}

pub fn ingest_sessions(
    path: &Path,
    format: InputFormat,
    rewriter: &TokenRewriter,
) -> Result<(SessionCorpus, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (mut corpus, report) = parse_sessions(file, format, rewriter)?;
    corpus.meta = CorpusMeta {
        source: path.display().to_string(),
        ingested_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    log::info!(
        "ingested {} sessions from {} ({} rejected)",
        report.accepted,
        path.display(),
        report.rejected
    );
    Ok((corpus, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jsonl(input: &str) -> (SessionCorpus, IngestReport) {
        parse_sessions(input.as_bytes(), InputFormat::Jsonl, &TokenRewriter::identity()).unwrap()
    }

    #[test]
    fn parses_a_jsonl_record() {
        let (c, r) = jsonl(r#"{"user_id":"u1","start_time":100,"pages":["a","b"]}"#);
        assert_eq!(r, IngestReport { accepted: 1, rejected: 0 });
        let s = &c.sessions[0];
        assert_eq!(s.user_id, "u1");
        assert_eq!(s.start_time, 100);
        let pages: Vec<&str> = s.pages.iter().map(PageToken::as_str).collect();
        assert_eq!(pages, ["a", "b"]);
    }

    #[test]
    fn empty_input_gives_empty_corpus() {
        let (c, r) = jsonl("");
        assert!(c.is_empty());
        assert_eq!(r.rejected, 0);
    }

    #[test]
    fn rejects_bad_records() {
        let (c, r) = jsonl(
            "{\"user_id\":\"u1\",\"start_time\":1,\"pages\":[]}\n\
             {\"start_time\":1,\"pages\":[\"a\"]}\n\
             {\"user_id\":\"u1\",\"pages\":[\"a\"]}\n\
             {\"user_id\":\"u1\",\"start_time\":-4,\"pages\":[\"a\"]}\n\
             {\"user_id\":\"u1\",\"start_time\":1,\"pages\":[\"a b\"]}\n\
             not json\n\
             \n\
             {\"user_id\":\"u2\",\"start_time\":5,\"pages\":[\"x\",\"y\",\"x\"]}\n",
        );
        assert_eq!(c.len(), 1);
        assert_eq!(r, IngestReport { accepted: 1, rejected: 6 });
        assert_eq!(c.sessions[0].user_id, "u2");
    }

    #[test]
    fn parses_csv_with_pipe_pages() {
        let input = "user_id,start_time,pages\nu1,100,a|b|c\nu2,oops,a\nu3,7,\nu4,9,z\n";
        let (c, r) =
            parse_sessions(input.as_bytes(), InputFormat::Csv, &TokenRewriter::identity()).unwrap();
        assert_eq!(r, IngestReport { accepted: 2, rejected: 2 });
        assert_eq!(c.sessions[0].pages.len(), 3);
        assert_eq!(c.sessions[1].user_id, "u4");
    }

    #[test]
    fn csv_without_required_column_is_an_error() {
        let input = "user,start_time,pages\nu1,1,a\n";
        assert!(parse_sessions(input.as_bytes(), InputFormat::Csv, &TokenRewriter::identity()).is_err());
    }

    #[test]
    fn rewrite_rules_apply_in_order() {
        let table = "pattern,replacement\n^/pdp/.*$,pdp\n^pdp$,product\n";
        let rw = TokenRewriter::parse(table.as_bytes()).unwrap();
        assert_eq!(rw.rules().len(), 2);
        assert_eq!(rw.apply("/pdp/shoe-42"), "product");
        assert_eq!(rw.apply("/home"), "/home");

        let (c, _) = parse_sessions(
            r#"{"user_id":"u","start_time":0,"pages":["/pdp/a","/pdp/b"]}"#.as_bytes(),
            InputFormat::Jsonl,
            &rw,
        )
        .unwrap();
        assert!(c.sessions[0].pages.iter().all(|p| p.as_str() == "product"));
    }

    #[test]
    fn bad_regex_is_an_error() {
        assert!(TokenRewriter::parse("(unclosed,x\n".as_bytes()).is_err());
        assert!(TokenRewriter::parse("a,b,c\n".as_bytes()).is_err());
    }

    #[test]
    fn missing_file_is_fatal() {
        let err = ingest_sessions(
            Path::new("/nonexistent/sessions.jsonl"),
            InputFormat::Jsonl,
            &TokenRewriter::identity(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
