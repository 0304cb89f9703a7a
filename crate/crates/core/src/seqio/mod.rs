//! Sequence, alignment, genotype and numeric-matrix ingestion.
//!
//! All parsers accept UTF-8 text with LF or CRLF line endings and report
//! failures as [`Error::Parse`](crate::Error::Parse) with a 1-based line and column.

mod alignment;
mod alphabet;
mod fasta;
mod genotype;
mod matrix;

pub use alignment::{parse_alignment, write_alignment, Alignment, GAP};
pub use alphabet::Alphabet;
pub use fasta::{parse_fasta, write_fasta, Sequence};
pub use genotype::{parse_genotypes, write_genotypes, Genotype, GenotypeTable, LocusCoding};
pub use matrix::{parse_matrix, NumericMatrix};

/// Splits text into lines (1-based numbering), stripping a trailing `\r`.
pub(crate) fn lines(text: &[u8]) -> impl Iterator<Item = (usize, &[u8])> {
    text.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, line)| (i + 1, line.strip_suffix(b"\r").unwrap_or(line)))
}
