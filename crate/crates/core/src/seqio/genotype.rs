use serde::{Deserialize, Serialize};

use super::lines;
use crate::{Error, Result};

/// How a locus was written in the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocusCoding {
    /// Allele-pair tokens such as `A/T`. Labels are the distinct alleles, sorted;
    /// allele 0 is the smaller label.
    Letters(Vec<String>),
    /// Dosage tokens `0`, `1`, `2` counting copies of allele 1.
    Dosage,
}

impl LocusCoding {
    pub fn label(&self, allele: u8) -> &str {
        match self {
            LocusCoding::Letters(labels) => labels
                .get(allele as usize)
                .map(String::as_str)
                .unwrap_or("?"),
            LocusCoding::Dosage => {
                if allele == 0 {
                    "0"
                } else {
                    "1"
                }
            }
        }
    }
}

/// Unordered biallelic genotype, stored with `0 <= lo <= hi <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Genotype {
    pub lo: u8,
    pub hi: u8,
}

impl Genotype {
    pub fn new(a: u8, b: u8) -> Self {
        assert!(a <= 1 && b <= 1, "alleles are 0 or 1");
        Genotype {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn is_heterozygous(self) -> bool {
        self.lo != self.hi
    }

    /// Copies of allele 1.
    pub fn dosage(self) -> u8 {
        self.lo + self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenotypeTable {
    pub ids: Vec<String>,
    pub loci: Vec<LocusCoding>,
    /// `genotypes[i][l]` is individual `i` at locus `l`.
    pub genotypes: Vec<Vec<Genotype>>,
}

impl GenotypeTable {
    pub fn num_individuals(&self) -> usize {
        self.ids.len()
    }

    pub fn num_loci(&self) -> usize {
        self.loci.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Builds a table from dosage codes; handy for generated data.
    pub fn from_dosages(ids: Vec<String>, dosages: &[Vec<u8>]) -> Result<Self> {
        let num_loci = dosages.first().map_or(0, Vec::len);
        let mut genotypes = Vec::with_capacity(dosages.len());
        for (i, row) in dosages.iter().enumerate() {
            if row.len() != num_loci {
                return Err(Error::Input(format!(
                    "individual {} has {} loci, expected {num_loci}",
                    ids[i],
                    row.len()
                )));
            }
            genotypes.push(
                row.iter()
                    .map(|&d| match d {
                        0 => Ok(Genotype::new(0, 0)),
                        1 => Ok(Genotype::new(0, 1)),
                        2 => Ok(Genotype::new(1, 1)),
                        _ => Err(Error::Input(format!("dosage {d} is not 0, 1 or 2"))),
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(GenotypeTable {
            ids,
            loci: vec![LocusCoding::Dosage; num_loci],
            genotypes,
        })
    }
}

enum Token<'a> {
    Pair(&'a str, &'a str),
    Dosage(u8),
}

fn parse_token(token: &str) -> std::result::Result<Token<'_>, String> {
    match token {
        "0" => return Ok(Token::Dosage(0)),
        "1" => return Ok(Token::Dosage(1)),
        "2" => return Ok(Token::Dosage(2)),
        _ => {}
    }
    let mut parts = token.split(['/', '|']);
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok(Token::Pair(a, b)),
        _ => Err(format!(
            "genotype {token:?} is neither an allele pair like A/T nor a dosage 0, 1 or 2"
        )),
    }
}

/// Parses a genotype table: one whitespace-separated row per individual, the id
/// followed by one field per locus. Blank lines and lines starting with `#` are skipped.
pub fn parse_genotypes(text: &[u8]) -> Result<GenotypeTable> {
    let text = std::str::from_utf8(text).map_err(|e| {
        let upto = &text[..e.valid_up_to()];
        let line = upto.iter().filter(|&&b| b == b'\n').count() + 1;
        Error::parse(line, 1, "input is not valid UTF-8")
    })?;

    struct Row<'a> {
        line: usize,
        id: &'a str,
        fields: Vec<(usize, Token<'a>)>,
    }

    let mut rows = Vec::new();
    for (line_no, line) in lines(text.as_bytes()) {
        let line = std::str::from_utf8(line).expect("validated above");
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut fields = Vec::new();
        let mut id = None;
        // byte offsets give 1-based columns
        let mut offset = 0;
        for piece in line.split(['\t', ' ']) {
            let column = offset + 1;
            offset += piece.len() + 1;
            if piece.is_empty() {
                continue;
            }
            if id.is_none() {
                id = Some(piece);
                continue;
            }
            let token = parse_token(piece).map_err(|m| Error::parse(line_no, column, m))?;
            fields.push((column, token));
        }
        let id = id.expect("non-blank line has a first field");
        if let Some(first) = rows.first() {
            let first: &Row = first;
            if first.fields.len() != fields.len() {
                return Err(Error::parse(
                    line_no,
                    1,
                    format!(
                        "individual {id:?} has {} loci but {:?} has {}",
                        fields.len(),
                        first.id,
                        first.fields.len()
                    ),
                ));
            }
        }
        rows.push(Row {
            line: line_no,
            id,
            fields,
        });
    }

    let num_loci = rows.first().map_or(0, |r| r.fields.len());
    let mut loci = Vec::with_capacity(num_loci);
    for l in 0..num_loci {
        let mut dosage = None;
        let mut labels: Vec<&str> = Vec::new();
        for row in &rows {
            let (column, token) = &row.fields[l];
            let is_dosage = matches!(token, Token::Dosage(_));
            match dosage {
                None => dosage = Some(is_dosage),
                Some(d) if d != is_dosage => {
                    return Err(Error::parse(
                        row.line,
                        *column,
                        format!("locus {} mixes dosage codes and allele pairs", l + 1),
                    ))
                }
                _ => {}
            }
            if let Token::Pair(a, b) = token {
                for allele in [*a, *b] {
                    if !labels.contains(&allele) {
                        labels.push(allele);
                        if labels.len() > 2 {
                            labels.sort_unstable();
                            return Err(Error::parse(
                                row.line,
                                *column,
                                format!(
                                    "locus {} has more than two alleles ({})",
                                    l + 1,
                                    labels.join(", ")
                                ),
                            ));
                        }
                    }
                }
            }
        }
        if dosage == Some(true) {
            loci.push(LocusCoding::Dosage);
        } else {
            labels.sort_unstable();
            loci.push(LocusCoding::Letters(
                labels.into_iter().map(String::from).collect(),
            ));
        }
    }

    let mut ids = Vec::with_capacity(rows.len());
    let mut genotypes = Vec::with_capacity(rows.len());
    for row in &rows {
        ids.push(row.id.to_string());
        let g = row
            .fields
            .iter()
            .zip(&loci)
            .map(|((_, token), coding)| match (token, coding) {
                (Token::Dosage(0), _) => Genotype::new(0, 0),
                (Token::Dosage(1), _) => Genotype::new(0, 1),
                (Token::Dosage(_), _) => Genotype::new(1, 1),
                (Token::Pair(a, b), LocusCoding::Letters(labels)) => {
                    let index = |x: &str| labels.iter().position(|l| l == x).unwrap() as u8;
                    Genotype::new(index(a), index(b))
                }
                (Token::Pair(..), LocusCoding::Dosage) => unreachable!("coding checked per locus"),
            })
            .collect();
        genotypes.push(g);
    }
    Ok(GenotypeTable {
        ids,
        loci,
        genotypes,
    })
}

/// Writes the table back in the same coding it was read with.
pub fn write_genotypes(table: &GenotypeTable) -> Vec<u8> {
    let mut out = String::new();
    for (id, row) in table.ids.iter().zip(&table.genotypes) {
        out.push_str(id);
        for (g, coding) in row.iter().zip(&table.loci) {
            out.push('\t');
            match coding {
                LocusCoding::Dosage => out.push_str(&g.dosage().to_string()),
                LocusCoding::Letters(_) => {
                    out.push_str(coding.label(g.lo));
                    out.push('/');
                    out.push_str(coding.label(g.hi));
                }
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}
