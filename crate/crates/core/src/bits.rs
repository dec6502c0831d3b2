//! Parsing and rendering of symbol strings written as digits.

use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("symbol {found:?} at offset {offset} is not a digit below {alphabet}")]
pub struct SymbolError {
    pub offset: usize,
    pub found: char,
    pub alphabet: u8,
}

/// Parses a string over `{0, .., alphabet - 1}`, one digit per symbol.
pub fn parse_symbols(text: &str, alphabet: u8) -> Result<Vec<u8>, SymbolError> {
    text.chars()
        .enumerate()
        .map(|(offset, c)| match c.to_digit(10) {
            Some(d) if d < u32::from(alphabet) => Ok(d as u8),
            _ => Err(SymbolError { offset, found: c, alphabet }),
        })
        .collect()
}

pub fn parse_bits(text: &str) -> Result<Vec<u8>, SymbolError> {
    parse_symbols(text, 2)
}

pub fn render(symbols: &[u8]) -> String {
    symbols.iter().map(|&s| char::from(b'0' + s)).collect()
}
