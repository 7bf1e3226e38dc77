//! Artifact files.
//!
//! Every artifact carries an [`ArtifactHeader`]: JSONL files as their first
//! line, token files and CSV tables in a JSON sidecar next to them. Readers
//! check the artifact kind and, where one is recorded, the codec schema hash.

use crate::codec::{CodecSchema, Token, TokenSequence};
use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const FORMAT: &str = "counterscene";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub format: String,
    pub kind: String,
    pub version: String,
    /// Hash of the run configuration that produced the artifact.
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_hash: Option<String>,
}

impl ArtifactHeader {
    pub fn new(kind: &str, config_hash: &str) -> Self {
        ArtifactHeader {
            format: FORMAT.to_string(),
            kind: kind.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            seeds: BTreeMap::new(),
            schema_hash: None,
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn schema(mut self, hash: &str) -> Self {
        self.schema_hash = Some(hash.to_string());
        self
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.format != FORMAT || self.kind != kind {
            return Err(Error::SchemaMismatch {
                expected: format!("{FORMAT} {kind} artifact"),
                found: format!("{} {} artifact", self.format, self.kind),
            });
        }
        Ok(())
    }

    pub fn expect_schema(&self, hash: &str) -> Result<()> {
        match &self.schema_hash {
            Some(h) if h != hash => Err(Error::SchemaMismatch {
                expected: hash.to_string(),
                found: h.clone(),
            }),
            _ => Ok(()),
        }
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: ArtifactHeader,
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: &ArtifactHeader, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &HeaderLine { header: header.clone() })?;
    w.write_all(b"\n")?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(ArtifactHeader, Vec<T>)> {
    let file = File::open(path).map_err(|e| Error::Invalid(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Invalid(format!("{} is empty", path.display())))??;
    let header = serde_json::from_str::<HeaderLine>(&first)
        .map_err(|e| Error::Invalid(format!("{} has no artifact header: {e}", path.display())))?
        .header;
    header.expect_kind(kind)?;
    let mut items = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Invalid(format!("{}:{}: {e}", path.display(), n + 2)))?,
        );
    }
    Ok((header, items))
}

/// Path of the JSON sidecar of `path` with the given suffix.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSidecar {
    pub header: ArtifactHeader,
    pub schema: CodecSchema,
}

/// One sequence per line as whitespace-separated token indices, plus a
/// `.schema.json` sidecar with the vocabulary layout.
pub fn write_tokens(path: &Path, header: &ArtifactHeader, schema: &CodecSchema, seqs: &[TokenSequence]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in seqs {
        let line: Vec<String> = s.tokens.iter().map(Token::to_string).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    let side = TokenSidecar {
        header: header.clone().schema(&schema.hash()),
        schema: schema.clone(),
    };
    std::fs::write(sidecar(path, ".schema.json"), serde_json::to_string_pretty(&side)?)?;
    Ok(())
}

pub fn read_tokens(path: &Path) -> Result<(TokenSidecar, Vec<TokenSequence>)> {
    let side_path = sidecar(path, ".schema.json");
    let side: TokenSidecar = serde_json::from_str(
        &std::fs::read_to_string(&side_path)
            .map_err(|e| Error::Invalid(format!("cannot read token schema {}: {e}", side_path.display())))?,
    )?;
    side.header.expect_kind("tokens")?;
    side.header.expect_schema(&side.schema.hash())?;
    let text = std::fs::read_to_string(path)?;
    let mut seqs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tokens = line
            .split_whitespace()
            .map(|t| t.parse::<Token>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Invalid(format!("{}:{}: {e}", path.display(), n + 1)))?;
        let seq = TokenSequence { tokens };
        crate::density::validate_sequence(&side.schema, &seq)?;
        seqs.push(seq);
    }
    Ok((side, seqs))
}

/// CSV rows plus a `.meta.json` header sidecar.
pub fn write_csv<T: Serialize>(path: &Path, header: &ArtifactHeader, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    write_json(&sidecar(path, ".meta.json"), header)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Codec;
    use crate::scene::{Generator, GeneratorConfig};

    #[test]
    fn jsonl_round_trip_checks_kind() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        let h = ArtifactHeader::new("numbers", "abc").seed("base", 3);
        write_jsonl(&p, &h, &[1u32, 2, 3]).unwrap();
        let (back, items): (_, Vec<u32>) = read_jsonl(&p, "numbers").unwrap();
        assert_eq!((back, items), (h, vec![1, 2, 3]));
        assert!(read_jsonl::<u32>(&p, "scenes").is_err());
    }

    #[test]
    fn token_files_round_trip() {
        let cfg = GeneratorConfig::default();
        let codec = Codec::new(&cfg).unwrap();
        let g = Generator::new(cfg).unwrap();
        let seqs: Vec<TokenSequence> = g.scenes(5, 1).iter().map(|s| codec.encode(s).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tokens.txt");
        write_tokens(&p, &ArtifactHeader::new("tokens", "h"), codec.schema(), &seqs).unwrap();
        let (side, back) = read_tokens(&p).unwrap();
        assert_eq!(back, seqs);
        assert_eq!(side.header.schema_hash.as_deref(), Some(codec.schema().hash().as_str()));
    }
}
