//! Pauli-string observables like "Z0" or "X0X1Y3".

use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PauliParseError {
    #[error("empty pauli string")]
    Empty,
    #[error("bad pauli string `{0}`: expected letter in XYZ followed by a qubit index")]
    Malformed(String),
    #[error("qubit {0} appears twice in pauli string")]
    DuplicateQubit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

/// A product of single-qubit Pauli operators on distinct qubits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliString {
    factors: Vec<(usize, PauliAxis)>,
}

impl PauliString {
    pub fn new(mut factors: Vec<(usize, PauliAxis)>) -> Result<Self, PauliParseError> {
        factors.sort_by_key(|&(q, _)| q);
        for w in factors.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(PauliParseError::DuplicateQubit(w[0].0));
            }
        }
        if factors.is_empty() {
            return Err(PauliParseError::Empty);
        }
        Ok(PauliString { factors })
    }

    /// Parse "Z0", "X0X1", "Y2 Z4" (whitespace between factors is allowed).
    pub fn parse(s: &str) -> Result<Self, PauliParseError> {
        let mut factors = Vec::new();
        let mut chars = s.chars().peekable();
        while let Some(c) = chars.next() {
            if c.is_whitespace() {
                continue;
            }
            let axis = match c {
                'X' | 'x' => PauliAxis::X,
                'Y' | 'y' => PauliAxis::Y,
                'Z' | 'z' => PauliAxis::Z,
                _ => return Err(PauliParseError::Malformed(s.to_string())),
            };
            let mut digits = String::new();
            while let Some(d) = chars.peek() {
                if d.is_ascii_digit() {
                    digits.push(*d);
                    chars.next();
                } else {
                    break;
                }
            }
            let qubit: usize = digits
                .parse()
                .map_err(|_| PauliParseError::Malformed(s.to_string()))?;
            factors.push((qubit, axis));
        }
        PauliString::new(factors)
    }

    pub fn factors(&self) -> &[(usize, PauliAxis)] {
        &self.factors
    }

    pub fn max_qubit(&self) -> usize {
        self.factors.iter().map(|&(q, _)| q).max().unwrap_or(0)
    }

    /// (x-flip mask, phase mask, Y count) for expectation evaluation:
    /// X and Y flip the bit; Z and Y contribute a (−1)^bit phase.
    pub fn masks(&self) -> (usize, usize, usize) {
        let mut xmask = 0usize;
        let mut zymask = 0usize;
        let mut y_count = 0usize;
        for &(q, axis) in &self.factors {
            match axis {
                PauliAxis::X => xmask |= 1 << q,
                PauliAxis::Y => {
                    xmask |= 1 << q;
                    zymask |= 1 << q;
                    y_count += 1;
                }
                PauliAxis::Z => zymask |= 1 << q,
            }
        }
        (xmask, zymask, y_count)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &(q, axis) in &self.factors {
            let c = match axis {
                PauliAxis::X => 'X',
                PauliAxis::Y => 'Y',
                PauliAxis::Z => 'Z',
            };
            write!(f, "{c}{q}")?;
        }
        Ok(())
    }
}
