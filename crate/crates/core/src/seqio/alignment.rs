use serde::{Deserialize, Serialize};

use super::fasta::{describe_byte, read_records};
use super::{Alphabet, Sequence};
use crate::{Error, Result};

/// Gap marker stored in alignment rows.
pub const GAP: u8 = u8::MAX;

/// Rectangular multiple alignment. Rows hold alphabet indices or [`GAP`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub alphabet: Alphabet,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<u8>>,
}

impl Alignment {
    /// Builds an alignment, checking shape and that no column is gap-only.
    pub fn new(alphabet: Alphabet, ids: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::Input(format!(
                "{} ids for {} alignment rows",
                ids.len(),
                rows.len()
            )));
        }
        let alignment = Alignment {
            alphabet,
            ids,
            rows,
        };
        alignment.validate()?;
        Ok(alignment)
    }

    fn validate(&self) -> Result<()> {
        let width = self.num_columns();
        if let Some((i, r)) = self.rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::Input(format!(
                "ragged alignment: row {:?} has length {} but row {:?} has length {}",
                self.ids[i],
                r.len(),
                self.ids[0],
                width
            )));
        }
        for row in &self.rows {
            if let Some(&bad) = row
                .iter()
                .find(|&&s| s != GAP && s as usize >= self.alphabet.size())
            {
                return Err(Error::Input(format!(
                    "residue index {bad} outside the alphabet"
                )));
            }
        }
        if let Some(col) = (0..width).find(|&j| self.rows.iter().all(|r| r[j] == GAP)) {
            return Err(Error::Input(format!(
                "alignment column {} contains only gaps",
                col + 1
            )));
        }
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<u8> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// 1-based index of the first column holding a gap.
    pub fn first_gap_column(&self) -> Option<usize> {
        (0..self.num_columns())
            .find(|&j| self.rows.iter().any(|r| r[j] == GAP))
            .map(|j| j + 1)
    }

    /// Row `i` with gaps removed.
    pub fn degapped(&self, i: usize) -> Sequence {
        Sequence::new(
            self.ids[i].clone(),
            self.rows[i].iter().copied().filter(|&s| s != GAP).collect(),
        )
    }
}

/// Parses aligned FASTA: `-` (and `.`) are gaps, every record must have the same length.
pub fn parse_alignment(text: &[u8], alphabet: Alphabet) -> Result<Alignment> {
    let records = read_records(text, |b| match b {
        b'-' | b'.' => Ok(GAP),
        _ => alphabet.index(b).ok_or_else(|| {
            format!(
                "symbol {} is not in the {alphabet:?} alphabet",
                describe_byte(b)
            )
        }),
    })?;
    if let Some(first) = records.first() {
        let width = first.symbols.len();
        let ragged: Vec<String> = records
            .iter()
            .filter(|r| r.symbols.len() != width)
            .map(|r| format!("{} (length {})", r.id, r.symbols.len()))
            .collect();
        if !ragged.is_empty() {
            return Err(Error::Input(format!(
                "ragged alignment: expected length {width} (from {}), got {}",
                first.id,
                ragged.join(", ")
            )));
        }
    }
    let (ids, rows) = records.into_iter().map(|r| (r.id, r.symbols)).unzip();
    Alignment::new(alphabet, ids, rows)
}

/// Writes aligned FASTA, one line per row. Inverse of [`parse_alignment`].
pub fn write_alignment(alignment: &Alignment) -> Vec<u8> {
    let mut out = Vec::new();
    for (id, row) in alignment.ids.iter().zip(&alignment.rows) {
        out.push(b'>');
        out.extend_from_slice(id.as_bytes());
        out.push(b'\n');
        out.extend(row.iter().map(|&s| {
            if s == GAP {
                b'-'
            } else {
                alignment.alphabet.letter(s)
            }
        }));
        out.push(b'\n');
    }
    out
}
