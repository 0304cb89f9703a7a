use serde::{Deserialize, Serialize};

use super::lines;
use crate::{Error, Result};

/// Dense numeric data: `n` rows of `p` values, with optional row ids and column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericMatrix {
    pub column_names: Option<Vec<String>>,
    pub row_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericMatrix {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Parses a comma- or tab-separated numeric table.
///
/// The delimiter is taken from the first non-blank line (comma if it holds one,
/// otherwise tabs/spaces). A first line with any non-numeric field is a header.
/// When the first field of data rows is non-numeric, it is the row id; otherwise
/// rows are named `row1`, `row2`, ...
pub fn parse_matrix(text: &[u8]) -> Result<NumericMatrix> {
    let text =
        std::str::from_utf8(text).map_err(|_| Error::parse(1, 1, "input is not valid UTF-8"))?;
    let body: Vec<(usize, &str)> = lines(text.as_bytes())
        .map(|(n, l)| (n, std::str::from_utf8(l).expect("valid UTF-8")))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect();
    let Some(&(_, first)) = body.first() else {
        return Ok(NumericMatrix {
            column_names: None,
            row_ids: Vec::new(),
            rows: Vec::new(),
        });
    };
    let comma = first.contains(',');
    let split = |line: &'_ str| -> Vec<String> {
        if comma {
            line.split(',').map(|s| s.trim().to_string()).collect()
        } else {
            line.split(['\t', ' '])
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        }
    };
    let is_number = |s: &str| s.parse::<f64>().is_ok();

    let first_fields = split(first);
    let header = first_fields.iter().skip(1).any(|f| !is_number(f))
        || (first_fields.len() == 1 && !is_number(&first_fields[0]));
    let data = if header { &body[1..] } else { &body[..] };
    let has_ids = data
        .first()
        .map(|(_, l)| split(l).first().is_some_and(|f| !is_number(f)))
        .unwrap_or(false);

    let mut row_ids = Vec::new();
    let mut rows = Vec::new();
    for (idx, &(line_no, line)) in data.iter().enumerate() {
        let fields = split(line);
        let (id, values) = if has_ids {
            (fields[0].clone(), &fields[1..])
        } else {
            (format!("row{}", idx + 1), &fields[..])
        };
        let mut row = Vec::with_capacity(values.len());
        for (j, f) in values.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                Error::parse(
                    line_no,
                    j + 1 + usize::from(has_ids),
                    format!("{f:?} is not a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    line_no,
                    j + 1 + usize::from(has_ids),
                    format!("{f:?} is not finite"),
                ));
            }
            row.push(v);
        }
        if let Some(prev) = rows.first() {
            let prev: &Vec<f64> = prev;
            if prev.len() != row.len() {
                return Err(Error::parse(
                    line_no,
                    1,
                    format!("row has {} values, expected {}", row.len(), prev.len()),
                ));
            }
        }
        if row.is_empty() {
            return Err(Error::parse(line_no, 1, "row has no values"));
        }
        row_ids.push(id);
        rows.push(row);
    }
    let column_names = header.then(|| {
        if has_ids {
            first_fields[1..].to_vec()
        } else {
            first_fields.clone()
        }
    });
    Ok(NumericMatrix {
        column_names,
        row_ids,
        rows,
    })
}
