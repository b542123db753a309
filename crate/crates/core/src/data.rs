//! Capture-history datasets: parsing, validation, and reduction to unique
//! histories with multiplicities.
//!
//! The on-disk format is one history per line as a compact digit string,
//! e.g. `101101`. Digit `0` means "not seen" and maps to the last symbol of
//! the observation alphabet; digits `1..` map to themselves. Blank lines and
//! lines starting with `#` are skipped. A reduced file carries an optional
//! trailing multiplicity token per line (`1011 x42`); the presence of any
//! such token marks the whole file as reduced.
//!
//! Reduction keys on the pair (codes, first occasion) and preserves first
//! appearance order, so two datasets with the same histories in the same
//! order reduce identically.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::hmm::ObservationHistory;

// ---------------------------------------------------------------------------
// Full datasets
// ---------------------------------------------------------------------------

/// A set of individual capture histories over a common set of occasions.
///
/// Invariants: every history has the same length, every code is inside the
/// observation alphabet, the code at the first occasion is a genuine
/// sighting, and all codes before it are "not seen".
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureDataset {
    num_occasions: usize,
    num_obs: usize,
    histories: Vec<ObservationHistory>,
}

impl CaptureDataset {
    pub fn new(num_obs: usize, histories: Vec<ObservationHistory>) -> Result<Self> {
        if num_obs < 2 {
            return Err(Error::Dimension(
                "observation alphabet needs a sighting code and a not-seen code".into(),
            ));
        }
        let Some(first) = histories.first() else {
            return Err(Error::Dimension("dataset must contain at least one history".into()));
        };
        let num_occasions = first.len();
        let not_seen = num_obs as u8;
        for (idx, h) in histories.iter().enumerate() {
            if h.len() != num_occasions {
                return Err(Error::Dimension(format!(
                    "history {} has {} occasions, expected {num_occasions}",
                    idx + 1,
                    h.len()
                )));
            }
            if h.codes().iter().any(|&c| c as usize > num_obs) {
                return Err(Error::Dimension(format!(
                    "history {} contains a code outside the {num_obs}-symbol alphabet",
                    idx + 1
                )));
            }
            let f = h.first_occasion();
            if h.code(f) == not_seen {
                return Err(Error::Dimension(format!(
                    "history {} is not seen at its first occasion",
                    idx + 1
                )));
            }
            if (1..f).any(|t| h.code(t) != not_seen) {
                return Err(Error::Dimension(format!(
                    "history {} has a sighting before its first occasion",
                    idx + 1
                )));
            }
        }
        Ok(Self {
            num_occasions,
            num_obs,
            histories,
        })
    }

    pub fn num_occasions(&self) -> usize {
        self.num_occasions
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn histories(&self) -> &[ObservationHistory] {
        &self.histories
    }

    /// Number of latent states a per-individual state sampler must carry:
    /// one per occasion after each individual's first sighting.
    pub fn total_latent_states(&self) -> usize {
        self.histories
            .iter()
            .map(|h| self.num_occasions - h.first_occasion())
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Reduced datasets
// ---------------------------------------------------------------------------

/// A unique history together with how many individuals share it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedHistory {
    pub history: ObservationHistory,
    pub multiplicity: usize,
}

/// Unique capture histories with multiplicities, in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDataset {
    num_occasions: usize,
    num_obs: usize,
    entries: Vec<ReducedHistory>,
}

impl ReducedDataset {
    pub fn new(num_obs: usize, entries: Vec<ReducedHistory>) -> Result<Self> {
        let histories: Vec<ObservationHistory> =
            entries.iter().map(|e| e.history.clone()).collect();
        // reuse the full-dataset validation
        let base = CaptureDataset::new(num_obs, histories)?;
        let mut seen = HashMap::new();
        for (idx, e) in entries.iter().enumerate() {
            if e.multiplicity == 0 {
                return Err(Error::Dimension(format!(
                    "history {} has multiplicity zero",
                    idx + 1
                )));
            }
            if seen.insert(e.history.clone(), idx).is_some() {
                return Err(Error::Dimension(format!(
                    "history {} duplicates an earlier unique history",
                    idx + 1
                )));
            }
        }
        Ok(Self {
            num_occasions: base.num_occasions(),
            num_obs,
            entries,
        })
    }

    pub fn num_occasions(&self) -> usize {
        self.num_occasions
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    /// Number of unique histories.
    pub fn num_unique(&self) -> usize {
        self.entries.len()
    }

    /// Number of individuals across all multiplicities.
    pub fn total_histories(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    pub fn entries(&self) -> &[ReducedHistory] {
        &self.entries
    }
}

/// Collapse a dataset to its unique histories, keeping first-appearance
/// order. Multiplicities sum to the original dataset size.
pub fn reduce(dataset: &CaptureDataset) -> ReducedDataset {
    let mut index: HashMap<&ObservationHistory, usize> = HashMap::new();
    let mut entries: Vec<ReducedHistory> = Vec::new();
    for h in dataset.histories() {
        match index.get(h) {
            Some(&i) => entries[i].multiplicity += 1,
            None => {
                index.insert(h, entries.len());
                entries.push(ReducedHistory {
                    history: h.clone(),
                    multiplicity: 1,
                });
            }
        }
    }
    ReducedDataset {
        num_occasions: dataset.num_occasions(),
        num_obs: dataset.num_obs(),
        entries,
    }
}

/// Expand a reduced dataset back to one history per individual, uniques in
/// order, each repeated by its multiplicity.
pub fn expand(reduced: &ReducedDataset) -> CaptureDataset {
    let mut histories = Vec::with_capacity(reduced.total_histories());
    for e in reduced.entries() {
        for _ in 0..e.multiplicity {
            histories.push(e.history.clone());
        }
    }
    CaptureDataset {
        num_occasions: reduced.num_occasions(),
        num_obs: reduced.num_obs(),
        histories,
    }
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

/// Either form a data file can take.
#[derive(Debug, Clone)]
pub enum ParsedData {
    Full(CaptureDataset),
    Reduced(ReducedDataset),
}

impl ParsedData {
    pub fn num_occasions(&self) -> usize {
        match self {
            ParsedData::Full(d) => d.num_occasions(),
            ParsedData::Reduced(d) => d.num_occasions(),
        }
    }

    /// Number of individuals represented.
    pub fn total_histories(&self) -> usize {
        match self {
            ParsedData::Full(d) => d.len(),
            ParsedData::Reduced(d) => d.total_histories(),
        }
    }

    /// The reduced view, collapsing first if necessary.
    pub fn to_reduced(&self) -> ReducedDataset {
        match self {
            ParsedData::Full(d) => reduce(d),
            ParsedData::Reduced(d) => d.clone(),
        }
    }
}

fn parse_line(line: &str, lineno: usize, num_obs: usize) -> Result<(ObservationHistory, Option<usize>)> {
    let mut tokens = line.split_whitespace();
    let digits = tokens.next().expect("caller skips blank lines");
    let mult = match tokens.next() {
        None => None,
        Some(tok) => {
            let count = tok
                .strip_prefix('x')
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("expected multiplicity token like x42, found {tok:?}"),
                })?;
            if count == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: "multiplicity must be at least 1".into(),
                });
            }
            Some(count)
        }
    };
    if let Some(extra) = tokens.next() {
        return Err(Error::Parse {
            line: lineno,
            message: format!("unexpected trailing token {extra:?}"),
        });
    }

    let mut codes = Vec::with_capacity(digits.len());
    let mut first = None;
    for (pos, ch) in digits.chars().enumerate() {
        let d = ch.to_digit(10).ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("invalid character {ch:?} in history"),
        })? as usize;
        if d >= num_obs {
            return Err(Error::Parse {
                line: lineno,
                message: format!("code {d} outside alphabet 0..={}", num_obs - 1),
            });
        }
        if d == 0 {
            codes.push(num_obs as u8);
        } else {
            codes.push(d as u8);
            first.get_or_insert(pos + 1);
        }
    }
    let first = first.ok_or_else(|| Error::Parse {
        line: lineno,
        message: "history has no sighting".into(),
    })?;
    let history = ObservationHistory::new(codes, first).map_err(|e| Error::Parse {
        line: lineno,
        message: e.to_string(),
    })?;
    Ok((history, mult))
}

/// Parse a data file. `num_obs` is the size of the observation alphabet
/// including the "not seen" symbol; valid digits are `0..=num_obs-1`.
pub fn parse_data(text: &str, num_obs: usize) -> Result<ParsedData> {
    if num_obs < 2 || num_obs > 10 {
        return Err(Error::Dimension(format!(
            "digit-coded data supports alphabets of 2..=10 symbols, got {num_obs}"
        )));
    }
    let mut parsed: Vec<(usize, ObservationHistory, Option<usize>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (history, mult) = parse_line(line, i + 1, num_obs)?;
        parsed.push((i + 1, history, mult));
    }
    if parsed.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no histories found".into(),
        });
    }
    let width = parsed[0].1.len();
    for (lineno, h, _) in &parsed {
        if h.len() != width {
            return Err(Error::Parse {
                line: *lineno,
                message: format!("history has {} occasions, earlier lines have {width}", h.len()),
            });
        }
    }

    let reduced_form = parsed.iter().any(|(_, _, m)| m.is_some());
    if reduced_form {
        let entries = parsed
            .into_iter()
            .map(|(_, history, m)| ReducedHistory {
                history,
                multiplicity: m.unwrap_or(1),
            })
            .collect();
        Ok(ParsedData::Reduced(ReducedDataset::new(num_obs, entries)?))
    } else {
        let histories = parsed.into_iter().map(|(_, h, _)| h).collect();
        Ok(ParsedData::Full(CaptureDataset::new(num_obs, histories)?))
    }
}

fn history_digits(h: &ObservationHistory, num_obs: usize) -> String {
    h.codes()
        .iter()
        .map(|&c| {
            if c as usize == num_obs {
                '0'
            } else {
                char::from_digit(c as u32, 10).unwrap()
            }
        })
        .collect()
}

/// One digit-string line per individual.
pub fn format_full(dataset: &CaptureDataset) -> String {
    let mut out = String::new();
    for h in dataset.histories() {
        out.push_str(&history_digits(h, dataset.num_obs()));
        out.push('\n');
    }
    out
}

/// One digit-string line per unique history with its multiplicity.
pub fn format_reduced(reduced: &ReducedDataset) -> String {
    let mut out = String::new();
    for e in reduced.entries() {
        out.push_str(&history_digits(&e.history, reduced.num_obs()));
        out.push_str(&format!(" x{}\n", e.multiplicity));
    }
    out
}
