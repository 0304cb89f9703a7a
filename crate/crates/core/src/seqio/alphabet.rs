use serde::{Deserialize, Serialize};

const DNA: &[u8; 4] = b"ACGT";
/// Standard amino acids in alphabetical one-letter order.
const PROTEIN: &[u8; 20] = b"ACDEFGHIKLMNPQRSTVWY";

/// Residue alphabet.
///
/// Letter indices are fixed: DNA is `A C G T` (0..4); protein is the 20 standard
/// amino acids in alphabetical one-letter order `ACDEFGHIKLMNPQRSTVWY` (0..20).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    Dna,
    Protein,
}

impl Alphabet {
    pub fn letters(self) -> &'static [u8] {
        match self {
            Alphabet::Dna => DNA,
            Alphabet::Protein => PROTEIN,
        }
    }

    pub fn size(self) -> usize {
        self.letters().len()
    }

    /// Index of `letter` (case-insensitive), or `None` when outside the alphabet.
    pub fn index(self, letter: u8) -> Option<u8> {
        let upper = letter.to_ascii_uppercase();
        self.letters()
            .iter()
            .position(|&l| l == upper)
            .map(|i| i as u8)
    }

    pub fn letter(self, index: u8) -> u8 {
        self.letters()[index as usize]
    }

    /// Decodes residue indices back to an uppercase string.
    pub fn decode(self, residues: &[u8]) -> String {
        residues.iter().map(|&r| self.letter(r) as char).collect()
    }

    /// Encodes a string, panicking on letters outside the alphabet. Meant for literals.
    pub fn encode(self, text: &str) -> Vec<u8> {
        text.bytes()
            .map(|b| {
                self.index(b)
                    .unwrap_or_else(|| panic!("{:?} is not in the {self:?} alphabet", b as char))
            })
            .collect()
    }
}

impl std::str::FromStr for Alphabet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dna" => Ok(Alphabet::Dna),
            "protein" => Ok(Alphabet::Protein),
            other => Err(format!(
                "unknown alphabet {other:?} (expected dna or protein)"
            )),
        }
    }
}
