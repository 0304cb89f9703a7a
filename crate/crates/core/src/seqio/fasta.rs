use serde::{Deserialize, Serialize};

use super::{lines, Alphabet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub id: String,
    /// Alphabet indices, each `< alphabet.size()`.
    pub residues: Vec<u8>,
}

impl Sequence {
    pub fn new(id: impl Into<String>, residues: Vec<u8>) -> Self {
        Sequence {
            id: id.into(),
            residues,
        }
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

pub(crate) struct RawRecord<S> {
    pub id: String,
    pub line: usize,
    pub symbols: Vec<S>,
}

/// Reads FASTA-shaped records, mapping every non-whitespace sequence byte through
/// `symbol`. Errors carry the location of the offending byte.
pub(crate) fn read_records<S>(
    text: &[u8],
    mut symbol: impl FnMut(u8) -> std::result::Result<S, String>,
) -> Result<Vec<RawRecord<S>>> {
    let mut records: Vec<RawRecord<S>> = Vec::new();
    for (line_no, line) in lines(text) {
        if let Some(header) = line.strip_prefix(b">") {
            if let Some(prev) = records.last() {
                if prev.symbols.is_empty() {
                    return Err(Error::parse(
                        prev.line,
                        1,
                        format!("record {:?} is empty", prev.id),
                    ));
                }
            }
            let header = std::str::from_utf8(header)
                .map_err(|_| Error::parse(line_no, 2, "header is not valid UTF-8"))?;
            let id = header.split_whitespace().next().unwrap_or("");
            if id.is_empty() {
                return Err(Error::parse(line_no, 2, "header has no identifier"));
            }
            records.push(RawRecord {
                id: id.to_string(),
                line: line_no,
                symbols: Vec::new(),
            });
            continue;
        }
        for (col, &b) in line.iter().enumerate() {
            if b.is_ascii_whitespace() {
                continue;
            }
            let record = records.last_mut().ok_or_else(|| {
                Error::parse(
                    line_no,
                    col + 1,
                    "sequence data before the first '>' header",
                )
            })?;
            let s = symbol(b).map_err(|m| Error::parse(line_no, col + 1, m))?;
            record.symbols.push(s);
        }
    }
    if let Some(last) = records.last() {
        if last.symbols.is_empty() {
            return Err(Error::parse(
                last.line,
                1,
                format!("record {:?} is empty", last.id),
            ));
        }
    }
    Ok(records)
}

pub(crate) fn describe_byte(b: u8) -> String {
    if b.is_ascii_graphic() {
        format!("'{}'", b as char)
    } else {
        format!("byte 0x{b:02x}")
    }
}

/// Parses FASTA. Headers become ids (first whitespace-delimited token), whitespace
/// inside sequence lines is ignored and lowercase letters are upper-cased.
/// Ambiguity codes such as `N` or `X` are rejected.
pub fn parse_fasta(text: &[u8], alphabet: Alphabet) -> Result<Vec<Sequence>> {
    let records = read_records(text, |b| {
        alphabet.index(b).ok_or_else(|| {
            format!(
                "symbol {} is not in the {alphabet:?} alphabet",
                describe_byte(b)
            )
        })
    })?;
    Ok(records
        .into_iter()
        .map(|r| Sequence::new(r.id, r.symbols))
        .collect())
}

/// Writes one record per sequence, residues on a single line.
pub fn write_fasta(seqs: &[Sequence], alphabet: Alphabet) -> Vec<u8> {
    let mut out = Vec::new();
    for s in seqs {
        out.push(b'>');
        out.extend_from_slice(s.id.as_bytes());
        out.push(b'\n');
        out.extend(s.residues.iter().map(|&r| alphabet.letter(r)));
        out.push(b'\n');
    }
    out
}
