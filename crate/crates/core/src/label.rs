//! Grammar-compressed binary label strings `s(C)`.
//!
//! A label mirrors its column expression: a base slab is a single symbol,
//! `C(n)` is the label of `C` repeated `2^n` times and `C ∗ C'` is a
//! concatenation. Occurrence counting carries `|pattern| - 1` symbols of
//! fringe across every concatenation boundary, so the string itself is
//! never expanded.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::column::{fresh_id, Column, ColumnError, ColumnExpr};

/// Default cap on pattern length for occurrence counting.
pub const DEFAULT_PATTERN_CAP: usize = 64;

/// Nodes at most this long keep their expansion in memory.
const CACHE_LEN: u64 = 1 << 12;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelError {
    #[error("pattern must be non-empty")]
    EmptyPattern,
    #[error("pattern length {len} exceeds the configured cap {cap}")]
    PatternTooLong { len: usize, cap: usize },
    #[error("pattern length {pattern} exceeds string length {string}")]
    PatternLongerThanString { pattern: usize, string: BigUint },
    #[error("range starting at {start} of length {len} is outside a string of length {string}")]
    OutOfRange { start: BigUint, len: usize, string: BigUint },
    #[error("string of length {len} exceeds the materialization limit {limit}")]
    TooLong { len: BigUint, limit: u64 },
    #[error(transparent)]
    Column(#[from] ColumnError),
}

#[derive(Clone)]
pub enum LabelKind {
    Literal(Box<[u8]>),
    Concat(Vec<LabelString>),
    Repeat { child: LabelString, times: BigUint },
}

struct LabelNode {
    id: u64,
    kind: LabelKind,
    len: BigUint,
    expanded: Option<Box<[u8]>>,
}

/// An immutable, shareable binary string stored as a straight-line grammar.
#[derive(Clone)]
pub struct LabelString(Arc<LabelNode>);

impl LabelString {
    fn from_kind(kind: LabelKind) -> LabelString {
        let len = match &kind {
            LabelKind::Literal(bytes) => BigUint::from(bytes.len()),
            LabelKind::Concat(parts) => parts.iter().map(|p| p.len().clone()).sum(),
            LabelKind::Repeat { child, times } => child.len() * times,
        };
        let expanded = if len <= BigUint::from(CACHE_LEN) {
            let mut out = Vec::new();
            match &kind {
                LabelKind::Literal(bytes) => out.extend_from_slice(bytes),
                LabelKind::Concat(parts) => {
                    for p in parts {
                        out.extend_from_slice(p.expanded().expect("short child is expanded"));
                    }
                }
                LabelKind::Repeat { child, times } => {
                    let bytes = child.expanded().expect("short child is expanded");
                    for _ in 0..times.to_u64().unwrap_or(0) {
                        out.extend_from_slice(bytes);
                    }
                }
            }
            Some(out.into_boxed_slice())
        } else {
            None
        };
        LabelString(Arc::new(LabelNode { id: fresh_id(), kind, len, expanded }))
    }

    pub fn literal(bits: &[u8]) -> LabelString {
        LabelString::from_kind(LabelKind::Literal(bits.into()))
    }

    pub fn symbol(bit: u8) -> LabelString {
        LabelString::literal(&[bit])
    }

    pub fn concat(parts: Vec<LabelString>) -> LabelString {
        LabelString::from_kind(LabelKind::Concat(parts))
    }

    pub fn repeat(child: &LabelString, times: BigUint) -> LabelString {
        LabelString::from_kind(LabelKind::Repeat { child: child.clone(), times })
    }

    /// `s(C)` for a column compatible with the two halves of `[0, 1)`.
    pub fn of_column(column: &Column) -> Result<LabelString, LabelError> {
        if let Some(bad) = column.incompatible_slab() {
            return Err(ColumnError::Incompatible(bad).into());
        }
        let mut memo = BTreeMap::new();
        Ok(label_rec(column, &mut memo))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn kind(&self) -> &LabelKind {
        &self.0.kind
    }

    pub fn len(&self) -> &BigUint {
        &self.0.len
    }

    pub fn is_empty(&self) -> bool {
        self.0.len.is_zero()
    }

    fn expanded(&self) -> Option<&[u8]> {
        self.0.expanded.as_deref()
    }

    /// Full expansion, refusing strings longer than `limit`.
    pub fn materialize(&self, limit: u64) -> Result<Vec<u8>, LabelError> {
        let len = self
            .len()
            .to_u64()
            .filter(|&l| l <= limit)
            .ok_or_else(|| LabelError::TooLong { len: self.len().clone(), limit })?;
        let mut out = Vec::with_capacity(len as usize);
        self.extract_into(&BigUint::zero(), len as usize, &mut out);
        Ok(out)
    }

    /// Symbols `start ..= start + len - 1`, with `start` 1-based.
    pub fn extract(&self, start: &BigUint, len: usize) -> Result<Vec<u8>, LabelError> {
        if start.is_zero() {
            return Err(LabelError::OutOfRange { start: start.clone(), len, string: self.len().clone() });
        }
        let mut out = Vec::with_capacity(len);
        self.extract_zero_based(&(start - 1u32), len, &mut out)?;
        Ok(out)
    }

    /// Appends symbols at 0-based positions `start .. start + len` to `out`.
    pub fn extract_zero_based(&self, start: &BigUint, len: usize, out: &mut Vec<u8>) -> Result<(), LabelError> {
        if &(start + len) > self.len() {
            return Err(LabelError::OutOfRange { start: start + 1u32, len, string: self.len().clone() });
        }
        self.extract_into(start, len, out);
        Ok(())
    }

    fn extract_into(&self, start: &BigUint, mut count: usize, out: &mut Vec<u8>) {
        if count == 0 {
            return;
        }
        if let Some(bytes) = self.expanded() {
            let s = start.to_usize().expect("cached node offsets are small");
            out.extend_from_slice(&bytes[s..s + count]);
            return;
        }
        match self.kind() {
            LabelKind::Literal(bytes) => {
                let s = start.to_usize().expect("literal offsets are small");
                out.extend_from_slice(&bytes[s..s + count]);
            }
            LabelKind::Concat(parts) => {
                let mut offset = start.clone();
                for part in parts {
                    if count == 0 {
                        break;
                    }
                    if &offset >= part.len() {
                        offset -= part.len();
                        continue;
                    }
                    let available = part.len() - &offset;
                    let take = available.to_usize().map_or(count, |a| a.min(count));
                    part.extract_into(&offset, take, out);
                    count -= take;
                    offset = BigUint::zero();
                }
            }
            LabelKind::Repeat { child, .. } => {
                let child_len = child.len();
                let mut offset = start % child_len;
                while count > 0 {
                    let available = child_len - &offset;
                    let take = available.to_usize().map_or(count, |a| a.min(count));
                    child.extract_into(&offset, take, out);
                    count -= take;
                    offset = BigUint::zero();
                }
            }
        }
    }

    /// Number of (possibly overlapping) occurrences of `pattern`, pattern cap 64.
    pub fn count_occurrences(&self, pattern: &[u8]) -> Result<BigUint, LabelError> {
        PatternCounter::new(DEFAULT_PATTERN_CAP).count(self, pattern)
    }
}

fn label_rec(column: &Column, memo: &mut BTreeMap<u64, LabelString>) -> LabelString {
    if let Some(hit) = memo.get(&column.id()) {
        return hit.clone();
    }
    let label = match column.expr() {
        ColumnExpr::Base(_) => LabelString::symbol(column.base_symbol().expect("checked compatible")),
        ColumnExpr::Doubled { column: inner, times } => {
            LabelString::repeat(&label_rec(inner, memo), BigUint::one() << *times)
        }
        ColumnExpr::Stacked(parts) => LabelString::concat(parts.iter().map(|p| label_rec(p, memo)).collect()),
    };
    memo.insert(column.id(), label.clone());
    label
}

impl fmt::Debug for LabelString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expanded() {
            Some(bytes) if bytes.len() <= 64 => {
                for b in bytes.iter() {
                    write!(f, "{b}")?;
                }
                Ok(())
            }
            _ => write!(f, "<label of length {}>", self.len()),
        }
    }
}

/// Occurrence statistics of one pattern over one grammar node.
#[derive(Clone, Debug)]
struct Summary {
    len: BigUint,
    count: BigUint,
    /// First `min(len, p - 1)` symbols.
    prefix: Vec<u8>,
    /// Last `min(len, p - 1)` symbols.
    suffix: Vec<u8>,
}

/// Counts pattern occurrences over label grammars, memoized per `(node, pattern)`.
///
/// Not shared across threads; give each worker its own counter.
pub struct PatternCounter {
    cap: usize,
    memo: BTreeMap<(u64, Vec<u8>), Summary>,
}

impl PatternCounter {
    pub fn new(cap: usize) -> PatternCounter {
        PatternCounter { cap, memo: BTreeMap::new() }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn clear(&mut self) {
        self.memo.clear();
    }

    pub fn count(&mut self, label: &LabelString, pattern: &[u8]) -> Result<BigUint, LabelError> {
        if pattern.is_empty() {
            return Err(LabelError::EmptyPattern);
        }
        if pattern.len() > self.cap {
            return Err(LabelError::PatternTooLong { len: pattern.len(), cap: self.cap });
        }
        if &BigUint::from(pattern.len()) > label.len() {
            return Err(LabelError::PatternLongerThanString { pattern: pattern.len(), string: label.len().clone() });
        }
        let matcher = Matcher::new(pattern);
        Ok(self.summarize(label, &matcher).count)
    }

    fn summarize(&mut self, label: &LabelString, m: &Matcher) -> Summary {
        let key = (label.id(), m.pattern.clone());
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let summary = match (label.expanded(), label.kind()) {
            (Some(bytes), _) => m.direct(bytes),
            (None, LabelKind::Literal(bytes)) => m.direct(bytes),
            (None, LabelKind::Concat(parts)) => {
                let mut acc = Summary::empty();
                for part in parts {
                    let s = self.summarize(part, m);
                    acc = m.combine(&acc, &s);
                }
                acc
            }
            (None, LabelKind::Repeat { child, times }) => {
                let base = self.summarize(child, m);
                let mut acc = Summary::empty();
                for i in (0..times.bits()).rev() {
                    acc = m.combine(&acc, &acc);
                    if times.bit(i) {
                        acc = m.combine(&acc, &base);
                    }
                }
                acc
            }
        };
        self.memo.insert(key, summary.clone());
        summary
    }
}

impl Summary {
    fn empty() -> Summary {
        Summary { len: BigUint::zero(), count: BigUint::zero(), prefix: Vec::new(), suffix: Vec::new() }
    }
}

/// KMP automaton for one pattern.
struct Matcher {
    pattern: Vec<u8>,
    failure: Vec<usize>,
}

impl Matcher {
    fn new(pattern: &[u8]) -> Matcher {
        let mut failure = alloc::vec![0usize; pattern.len()];
        let mut k = 0;
        for i in 1..pattern.len() {
            while k > 0 && pattern[i] != pattern[k] {
                k = failure[k - 1];
            }
            if pattern[i] == pattern[k] {
                k += 1;
            }
            failure[i] = k;
        }
        Matcher { pattern: pattern.to_vec(), failure }
    }

    fn fringe(&self) -> usize {
        self.pattern.len() - 1
    }

    /// End positions (exclusive) of all matches in `text`.
    fn for_each_match(&self, text: &[u8], mut f: impl FnMut(usize)) {
        let p = &self.pattern;
        let mut k = 0;
        for (i, &c) in text.iter().enumerate() {
            while k > 0 && c != p[k] {
                k = self.failure[k - 1];
            }
            if c == p[k] {
                k += 1;
            }
            if k == p.len() {
                f(i + 1);
                k = self.failure[k - 1];
            }
        }
    }

    fn direct(&self, bytes: &[u8]) -> Summary {
        let mut count = 0u64;
        self.for_each_match(bytes, |_| count += 1);
        let r = self.fringe().min(bytes.len());
        Summary {
            len: BigUint::from(bytes.len()),
            count: BigUint::from(count),
            prefix: bytes[..r].to_vec(),
            suffix: bytes[bytes.len() - r..].to_vec(),
        }
    }

    fn combine(&self, a: &Summary, b: &Summary) -> Summary {
        if a.len.is_zero() {
            return b.clone();
        }
        if b.len.is_zero() {
            return a.clone();
        }
        let fringe = self.fringe();
        let mut joint = a.suffix.clone();
        joint.extend_from_slice(&b.prefix);
        let split = a.suffix.len();
        let mut straddling = 0u64;
        // a match straddles when it starts left of `split` and ends right of it
        self.for_each_match(&joint, |end| {
            if end > split && end - self.pattern.len() < split {
                straddling += 1;
            }
        });
        let mut prefix = a.prefix.clone();
        if prefix.len() < fringe {
            prefix.extend_from_slice(&b.prefix);
            prefix.truncate(fringe);
        }
        let suffix = if b.suffix.len() < fringe {
            let mut s = a.suffix.clone();
            s.extend_from_slice(&b.suffix);
            let cut = s.len().saturating_sub(fringe);
            s.split_off(cut)
        } else {
            b.suffix.clone()
        };
        Summary { len: &a.len + &b.len, count: &a.count + &b.count + straddling, prefix, suffix }
    }
}

/// Naive occurrence count, for small inputs and oracles.
pub fn count_in(text: &[u8], pattern: &[u8]) -> u64 {
    if pattern.is_empty() || pattern.len() > text.len() {
        return 0;
    }
    text.windows(pattern.len()).filter(|w| *w == pattern).count() as u64
}
