//! On-disk page-vector formats.
//!
//! Binary layout (little endian):
//! `"PGEB"`, `u16` version, `u32` vocab size, `u32` dim, then one NUL-terminated
//! UTF-8 token per page, then `vocab_size × dim` `f32` values.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};

use super::EmbeddingMatrix;
use crate::corpus::PageToken;
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"PGEB";
pub const BINARY_VERSION: u16 = 1;

/// Upper bound on a single token in bytes; guards against unterminated input.
const MAX_TOKEN_BYTES: usize = 1 << 16;

/// Tokens paired with their published vectors, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub tokens: Vec<PageToken>,
    pub embeddings: EmbeddingMatrix,
}

impl EmbeddingFile {
    pub fn position(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t.as_str() == token)
    }
}

fn check_shape(tokens: &[PageToken], embeddings: &EmbeddingMatrix) -> Result<()> {
    if tokens.len() != embeddings.n_pages() {
        return Err(Error::format(
            "embedding file",
            format!("{} tokens for {} vectors", tokens.len(), embeddings.n_pages()),
        ));
    }
    Ok(())
}

pub fn write_binary<W: Write>(mut w: W, tokens: &[PageToken], embeddings: &EmbeddingMatrix) -> Result<()> {
    check_shape(tokens, embeddings)?;
    let too_large = |what| Error::format("embedding file", format!("{what} exceeds u32"));
    let n = u32::try_from(tokens.len()).map_err(|_| too_large("vocab size"))?;
    let dim = u32::try_from(embeddings.dim()).map_err(|_| too_large("dim"))?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    for t in tokens {
        w.write_all(t.as_str().as_bytes())?;
        w.write_all(&[0])?;
    }
    for x in embeddings.input() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("embedding file", format!("truncated {what}")),
        _ => Error::Stream(e),
    })
}

pub fn read_binary<R: Read>(reader: R) -> Result<EmbeddingFile> {
    let mut r = BufReader::new(reader);
    let mut header = [0u8; 14];
    read_exact_or(&mut r, &mut header, "header")?;
    if &header[0..4] != BINARY_MAGIC {
        return Err(Error::format("embedding file", "bad magic bytes"));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != BINARY_VERSION {
        return Err(Error::format("embedding file", format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[10..14].try_into().unwrap()) as usize;
    if dim < 2 {
        return Err(Error::format("embedding file", format!("dim must be >= 2, got {dim}")));
    }
    let n_values = n
        .checked_mul(dim)
        .ok_or_else(|| Error::format("embedding file", "vocab_size × dim overflows"))?;

    let mut tokens = Vec::with_capacity(n.min(1 << 16));
    let mut seen = HashSet::with_capacity(n.min(1 << 16));
    let mut raw = Vec::new();
    for _ in 0..n {
        raw.clear();
        let read = (&mut r)
            .take(MAX_TOKEN_BYTES as u64 + 1)
            .read_until(0, &mut raw)?;
        if read == 0 || raw.last() != Some(&0) {
            return Err(Error::format("embedding file", "unterminated token"));
        }
        raw.pop();
        let s = std::str::from_utf8(&raw).map_err(|_| Error::format("embedding file", "token is not UTF-8"))?;
        let token = PageToken::new(s)?;
        if !seen.insert(token.clone()) {
            return Err(Error::format("embedding file", format!("duplicate token {token}")));
        }
        tokens.push(token);
    }

    let mut values = Vec::with_capacity(n_values.min(1 << 22));
    let mut word = [0u8; 4];
    for _ in 0..n_values {
        read_exact_or(&mut r, &mut word, "vector data")?;
        values.push(f32::from_le_bytes(word));
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::format("embedding file", "trailing bytes after vector data"));
    }
    Ok(EmbeddingFile {
        tokens,
        embeddings: EmbeddingMatrix::new(dim, values, Vec::new())?,
    })
}

/// Tab-separated `token v_1 … v_dim`, one page per line.
pub fn write_text<W: Write>(mut w: W, tokens: &[PageToken], embeddings: &EmbeddingMatrix) -> Result<()> {
    check_shape(tokens, embeddings)?;
    for (i, t) in tokens.iter().enumerate() {
        write!(w, "{t}")?;
        for x in embeddings.vector(i) {
            write!(w, "\t{x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the TSV export, also used for externally produced vectors.
pub fn read_text<R: Read>(reader: R) -> Result<EmbeddingFile> {
    let mut tokens = Vec::new();
    let mut seen = HashSet::new();
    let mut values = Vec::new();
    let mut dim = None;
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::format("embedding text", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |d: &str| Error::format("embedding text", format!("line {}: {d}", n + 1));
        let mut cols = line.split('\t');
        let token = PageToken::new(cols.next().unwrap_or_default()).map_err(|_| bad("invalid token"))?;
        let row: Vec<f32> = cols
            .map(|c| c.trim().parse::<f32>().map_err(|_| bad("invalid float")))
            .collect::<Result<_>>()?;
        match dim {
            None if row.len() < 2 => return Err(bad("need at least 2 values")),
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => return Err(bad("inconsistent dimension")),
            Some(_) => {}
        }
        if !seen.insert(token.clone()) {
            return Err(bad("duplicate token"));
        }
        tokens.push(token);
        values.extend(row);
    }
    let dim = dim.ok_or_else(|| Error::Empty("embedding text has no rows".into()))?;
    Ok(EmbeddingFile {
        tokens,
        embeddings: EmbeddingMatrix::new(dim, values, Vec::new())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> (Vec<PageToken>, EmbeddingMatrix) {
        let tokens = vec![PageToken::new("home").unwrap(), PageToken::new("pdp/é").unwrap()];
        let m = EmbeddingMatrix::new(3, vec![0.1, -2.5, 1e-30, 3.0, f32::MIN_POSITIVE, -0.0], Vec::new()).unwrap();
        (tokens, m)
    }

    #[test]
    fn binary_layout() {
        let (tokens, m) = sample();
        let mut buf = Vec::new();
        write_binary(&mut buf, &tokens, &m).unwrap();
        assert_eq!(&buf[..4], b"PGEB");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..10], &[2, 0, 0, 0]);
        assert_eq!(&buf[10..14], &[3, 0, 0, 0]);
        assert_eq!(&buf[14..19], b"home\0");
        assert_eq!(buf.len(), 14 + 5 + "pdp/é".len() + 1 + 6 * 4);
    }

    #[test]
    fn binary_rejects_corruption() {
        let (tokens, m) = sample();
        let mut buf = Vec::new();
        write_binary(&mut buf, &tokens, &m).unwrap();
        assert!(read_binary(&buf[..buf.len() - 1]).is_err());
        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(read_binary(trailing.as_slice()).is_err());
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_binary(bad_magic.as_slice()).is_err());
        let mut bad_version = buf.clone();
        bad_version[4] = 2;
        assert!(read_binary(bad_version.as_slice()).is_err());
        let mut huge = buf.clone();
        huge[6..10].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[10..14].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(read_binary(huge.as_slice()).is_err());
        let mut nan = buf;
        let at = nan.len() - 4;
        nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(read_binary(nan.as_slice()).is_err());
    }

    #[test]
    fn text_round_trip_and_errors() {
        let (tokens, m) = sample();
        let mut buf = Vec::new();
        write_text(&mut buf, &tokens, &m).unwrap();
        let back = read_text(buf.as_slice()).unwrap();
        assert_eq!(back.tokens, tokens);
        assert_eq!(back.embeddings.input_bytes(), m.input_bytes());
        assert!(read_text("a\t1\t2\nb\t1\n".as_bytes()).is_err());
        assert!(read_text("a\t1\t2\na\t1\t2\n".as_bytes()).is_err());
        assert!(read_text("".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bitwise(
            rows in prop::collection::vec(prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 4), 1..20),
        ) {
            let tokens: Vec<PageToken> = (0..rows.len()).map(|i| PageToken::new(format!("p{i}")).unwrap()).collect();
            let m = EmbeddingMatrix::from_rows(&rows).unwrap();
            let mut buf = Vec::new();
            write_binary(&mut buf, &tokens, &m).unwrap();
            let back = read_binary(buf.as_slice()).unwrap();
            prop_assert_eq!(&back.tokens, &tokens);
            prop_assert_eq!(back.embeddings.input_bytes(), m.input_bytes());
            let mut again = Vec::new();
            write_binary(&mut again, &back.tokens, &back.embeddings).unwrap();
            prop_assert_eq!(again, buf);
        }
    }
}
