//! Columns and the cutting-and-stacking operators.
//!
//! A column is kept as an expression over base slabs, self-doublings and
//! concatenations. Heights grow like `2^k`, so level intervals are only
//! produced on demand (`level_interval`, `locate`) or materialized below a
//! size threshold.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::dyadic::{translate, Dyadic, DyadicInterval};

/// Default cap on the number of levels a column may materialize.
pub const MATERIALIZE_LIMIT: u64 = 1 << 20;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ColumnError {
    #[error("column widths differ: {0} vs {1}")]
    WidthMismatch(Dyadic, Dyadic),
    #[error("column supports overlap on {0}")]
    OverlappingSupports(DyadicInterval),
    #[error("base slab {0} is not contained in [0, 1)")]
    OutsideUnit(DyadicInterval),
    #[error("level {0} straddles the boundary 1/2 between the two symbol halves")]
    Incompatible(DyadicInterval),
    #[error("column of height {height} exceeds the materialization limit {limit}")]
    TooTall { height: BigUint, limit: u64 },
    #[error("cannot stack an empty list of columns")]
    EmptyStack,
}

/// Symbol carried by a base slab: `0` below one half, `1` above.
fn symbol_of(interval: &DyadicInterval) -> Option<u8> {
    let half = Dyadic::pow2(-1);
    if interval.upper() <= &half {
        Some(0)
    } else if interval.lower() >= &half {
        Some(1)
    } else {
        None
    }
}

/// Shape of a column expression node.
#[derive(Clone)]
pub enum ColumnExpr {
    /// A single level.
    Base(DyadicInterval),
    /// `column(times)`: `times` successive self-stackings.
    Doubled { column: Column, times: u64 },
    /// Concatenation, bottom part first.
    Stacked(Vec<Column>),
}

struct ColumnNode {
    id: u64,
    expr: ColumnExpr,
    width: Dyadic,
    height: BigUint,
    support_measure: Dyadic,
    compatible: bool,
}

/// An ordered stack of disjoint, equal-width dyadic intervals.
#[derive(Clone)]
pub struct Column(Arc<ColumnNode>);

impl Column {
    /// A one-level column.
    pub fn base(interval: DyadicInterval) -> Result<Column, ColumnError> {
        if !DyadicInterval::unit().contains_interval(&interval) {
            return Err(ColumnError::OutsideUnit(interval));
        }
        let width = interval.width();
        let compatible = symbol_of(&interval).is_some();
        Ok(Column(Arc::new(ColumnNode {
            id: fresh_id(),
            support_measure: width.clone(),
            width,
            height: BigUint::one(),
            compatible,
            expr: ColumnExpr::Base(interval),
        })))
    }

    /// `C(times)`: width divided by `2^times`, height multiplied by `2^times`.
    pub fn double(&self, times: u64) -> Column {
        if times == 0 {
            return self.clone();
        }
        let node = &self.0;
        Column(Arc::new(ColumnNode {
            id: fresh_id(),
            width: node.width.mul_pow2(-(times as i64)),
            height: &node.height << times,
            support_measure: node.support_measure.clone(),
            compatible: node.compatible,
            expr: ColumnExpr::Doubled { column: self.clone(), times },
        }))
    }

    /// `a ∗ b`.
    pub fn stack(a: &Column, b: &Column) -> Result<Column, ColumnError> {
        Column::stack_all(alloc::vec![a.clone(), b.clone()])
    }

    /// `parts[0] ∗ parts[1] ∗ …`; all parts must share a width and have disjoint supports.
    pub fn stack_all(parts: Vec<Column>) -> Result<Column, ColumnError> {
        let first = parts.first().ok_or(ColumnError::EmptyStack)?;
        let width = first.width().clone();
        for part in &parts[1..] {
            if part.width() != &width {
                return Err(ColumnError::WidthMismatch(width, part.width().clone()));
            }
        }
        let mut seen: Vec<DyadicInterval> = Vec::new();
        for part in &parts {
            let support = part.support_intervals();
            for iv in &support {
                if let Some(hit) = seen.iter().find_map(|s| s.intersect(iv)) {
                    return Err(ColumnError::OverlappingSupports(hit));
                }
            }
            seen.extend(support);
        }
        let height = parts.iter().map(|p| p.height().clone()).sum();
        let support_measure = parts.iter().map(|p| p.support_measure().clone()).sum();
        let compatible = parts.iter().all(Column::is_compatible);
        Ok(Column(Arc::new(ColumnNode {
            id: fresh_id(),
            expr: ColumnExpr::Stacked(parts),
            width,
            height,
            support_measure,
            compatible,
        })))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn expr(&self) -> &ColumnExpr {
        &self.0.expr
    }

    pub fn width(&self) -> &Dyadic {
        &self.0.width
    }

    pub fn height(&self) -> &BigUint {
        &self.0.height
    }

    /// `λ(S(C))`; always `width · height`.
    pub fn support_measure(&self) -> &Dyadic {
        &self.0.support_measure
    }

    /// Every level lies inside `[0, 1/2)` or inside `[1/2, 1)`.
    pub fn is_compatible(&self) -> bool {
        self.0.compatible
    }

    pub fn same_node(&self, other: &Column) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// The support as a sorted list of disjoint intervals (the base slabs).
    pub fn support_intervals(&self) -> Vec<DyadicInterval> {
        let mut visited = BTreeSet::new();
        let mut out = Vec::new();
        let mut stack = alloc::vec![self.clone()];
        while let Some(c) = stack.pop() {
            if !visited.insert(c.id()) {
                continue;
            }
            match c.expr() {
                ColumnExpr::Base(iv) => out.push(iv.clone()),
                ColumnExpr::Doubled { column, .. } => stack.push(column.clone()),
                ColumnExpr::Stacked(parts) => stack.extend(parts.iter().cloned()),
            }
        }
        out.sort_by(|a, b| a.lower().cmp(b.lower()));
        out
    }

    pub fn support_contains(&self, point: &Dyadic) -> bool {
        self.support_intervals().iter().any(|iv| iv.contains(point))
    }

    /// Interval of the level with 0-based `index`, if in range.
    pub fn level_interval(&self, index: &BigUint) -> Option<DyadicInterval> {
        if index >= self.height() {
            return None;
        }
        match self.expr() {
            ColumnExpr::Base(iv) => Some(iv.clone()),
            ColumnExpr::Stacked(parts) => {
                let mut rest = index.clone();
                for part in parts {
                    if &rest < part.height() {
                        return part.level_interval(&rest);
                    }
                    rest -= part.height();
                }
                None
            }
            ColumnExpr::Doubled { column, times } => {
                let h = column.height();
                let block = index / h;
                let inner = index % h;
                let piece = reverse_bits(&block, *times);
                column.level_interval(&inner).map(|iv| iv.piece(&piece, *times))
            }
        }
    }

    /// The 0-based level containing `point` and its interval, or `None` off the support.
    pub fn locate(&self, point: &Dyadic) -> Option<(BigUint, DyadicInterval)> {
        match self.expr() {
            ColumnExpr::Base(iv) => iv.contains(point).then(|| (BigUint::zero(), iv.clone())),
            ColumnExpr::Stacked(parts) => {
                let mut offset = BigUint::zero();
                for part in parts {
                    if let Some((level, iv)) = part.locate(point) {
                        return Some((offset + level, iv));
                    }
                    offset += part.height();
                }
                None
            }
            ColumnExpr::Doubled { column, times } => {
                let (inner, iv) = column.locate(point)?;
                let piece = iv.piece_index(point, *times)?;
                let block = reverse_bits(&piece, *times);
                let level = block * column.height() + inner;
                Some((level, iv.piece(&piece, *times)))
            }
        }
    }

    /// The map `T` of this column: level `i` is carried onto level `i + 1`.
    /// Undefined on the top level and off the support.
    pub fn transform(&self, point: &Dyadic) -> Option<Dyadic> {
        let (level, from) = self.locate(point)?;
        let to = self.level_interval(&(level + 1u32))?;
        translate(point, &from, &to).ok()
    }

    /// All level intervals, bottom first.
    pub fn levels(&self, limit: u64) -> Result<Vec<DyadicInterval>, ColumnError> {
        if self.height() > &BigUint::from(limit) {
            return Err(ColumnError::TooTall { height: self.height().clone(), limit });
        }
        let mut out = Vec::new();
        self.push_levels(&mut out);
        Ok(out)
    }

    fn push_levels(&self, out: &mut Vec<DyadicInterval>) {
        match self.expr() {
            ColumnExpr::Base(iv) => out.push(iv.clone()),
            ColumnExpr::Stacked(parts) => parts.iter().for_each(|p| p.push_levels(out)),
            ColumnExpr::Doubled { column, times } => {
                let mut inner = Vec::new();
                column.push_levels(&mut inner);
                let blocks = 1u64 << *times;
                for block in 0..blocks {
                    let piece = reverse_bits(&BigUint::from(block), *times);
                    out.extend(inner.iter().map(|iv| iv.piece(&piece, *times)));
                }
            }
        }
    }

    /// Symbols of all levels, bottom first; for small columns and test oracles.
    pub fn materialize_symbols(&self, limit: u64) -> Result<Vec<u8>, ColumnError> {
        self.levels(limit)?.into_iter().map(|iv| symbol_of(&iv).ok_or(ColumnError::Incompatible(iv))).collect()
    }

    /// First base slab that straddles one half, if any.
    pub fn incompatible_slab(&self) -> Option<DyadicInterval> {
        self.support_intervals().into_iter().find(|iv| symbol_of(iv).is_none())
    }

    /// Symbol of a base column; `None` for composite or incompatible columns.
    pub fn base_symbol(&self) -> Option<u8> {
        match self.expr() {
            ColumnExpr::Base(iv) => symbol_of(iv),
            _ => None,
        }
    }

    /// Height as `u64` when it fits.
    pub fn height_u64(&self) -> Option<u64> {
        self.height().to_u64()
    }
}

impl fmt::Debug for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr() {
            ColumnExpr::Base(iv) => write!(f, "Base{iv:?}"),
            ColumnExpr::Doubled { column, times } => write!(f, "({column:?})({times})"),
            ColumnExpr::Stacked(parts) => {
                write!(f, "[")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    write!(f, "{p:?}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Reverses the low `width` bits of `value`.
///
/// Block `b` of `C(n)` is the piece `reverse_bits(b, n)` of each level of `C`:
/// `C(n+1) = C(n)_L ∗ C(n)_R` halves every piece of `C(n)`.
pub(crate) fn reverse_bits(value: &BigUint, width: u64) -> BigUint {
    if width <= 64 {
        let v = value.to_u64().unwrap_or(0);
        if width == 0 {
            return BigUint::zero();
        }
        return BigUint::from(v.reverse_bits() >> (64 - width));
    }
    let mut out = BigUint::zero();
    for i in 0..width {
        if value.bit(i) {
            out.set_bit(width - 1 - i, true);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn d(s: &str) -> Dyadic {
        s.parse().unwrap()
    }

    fn slab(lo: &str, hi: &str) -> Column {
        Column::base(DyadicInterval::new(d(lo), d(hi)).unwrap()).unwrap()
    }

    #[test]
    fn double_x1_once() {
        let x1 = slab("1/2", "1");
        let c = x1.double(1);
        assert_eq!(c.width(), &d("1/4"));
        assert_eq!(c.height(), &BigUint::from(2u8));
        assert_eq!(c.materialize_symbols(16).unwrap(), vec![1, 1]);
        let levels = c.levels(16).unwrap();
        assert_eq!(levels[0], DyadicInterval::new(d("1/2"), d("3/4")).unwrap());
        assert_eq!(levels[1], DyadicInterval::new(d("3/4"), d("1")).unwrap());
    }

    #[test]
    fn double_zero_is_identity() {
        let x1 = slab("1/2", "1");
        assert!(x1.double(0).same_node(&x1));
    }

    #[test]
    fn stack_requires_equal_width() {
        let x1 = slab("1/2", "1");
        let a1 = slab("1/4", "1/2");
        assert!(matches!(Column::stack(&x1, &a1), Err(ColumnError::WidthMismatch(..))));
        let c = Column::stack(&x1.double(1), &a1).unwrap();
        assert_eq!(c.height(), &BigUint::from(3u8));
        assert_eq!(c.support_measure(), &d("3/4"));
        assert_eq!(c.materialize_symbols(16).unwrap(), vec![1, 1, 0]);
    }

    #[test]
    fn stack_rejects_overlap() {
        let a = slab("1/2", "3/4");
        let b = slab("5/8", "7/8");
        assert!(matches!(Column::stack(&a, &b), Err(ColumnError::OverlappingSupports(_))));
    }

    #[test]
    fn base_outside_unit_rejected() {
        let iv = DyadicInterval::new(d("3/4"), d("5/4")).unwrap();
        assert!(matches!(Column::base(iv), Err(ColumnError::OutsideUnit(_))));
    }

    #[test]
    fn incompatible_slab_flagged() {
        let c = slab("1/4", "3/4");
        assert!(!c.is_compatible());
        assert!(c.materialize_symbols(4).is_err());
    }

    #[test]
    fn triple_doubling_bit_reversed_blocks() {
        let c = slab("0", "1/2").double(2);
        let lv = c.levels(8).unwrap();
        let lowers: Vec<Dyadic> = lv.iter().map(|iv| iv.lower().clone()).collect();
        // C(2) = C(1)_L * C(1)_R: quarters in order 0, 2, 1, 3
        assert_eq!(lowers, vec![d("0"), d("1/4"), d("1/8"), d("3/8")]);
    }

    #[test]
    fn locate_agrees_with_levels() {
        let x1 = slab("1/2", "1");
        let c1 = Column::stack(&x1.double(1), &slab("1/4", "1/2")).unwrap();
        let c2 = Column::stack(&c1.double(1), &slab("1/8", "1/4").double(0)).unwrap();
        // widths: c1 = 1/4, c1(1) = 1/8, A_2 = 1/8
        let levels = c2.levels(64).unwrap();
        for (i, iv) in levels.iter().enumerate() {
            let mid = iv.lower() + &iv.width().half();
            let (lvl, found) = c2.locate(&mid).unwrap();
            assert_eq!(lvl, BigUint::from(i));
            assert_eq!(&found, iv);
            assert_eq!(c2.level_interval(&BigUint::from(i)).as_ref(), Some(iv));
        }
        assert!(c2.locate(&d("1/16")).is_none());
    }

    #[test]
    fn transform_moves_up_one_level() {
        let c = slab("1/2", "1").double(2);
        let levels = c.levels(8).unwrap();
        let p = levels[1].lower() + &d("1/64");
        let q = c.transform(&p).unwrap();
        assert_eq!(c.locate(&q).unwrap().0, BigUint::from(2u8));
        assert_eq!(&q - levels[2].lower(), d("1/64"));
        assert!(c.transform(levels[3].lower()).is_none());
    }

    #[test]
    fn width_times_height_is_support() {
        let c = Column::stack(&slab("1/2", "1").double(3), &slab("1/4", "1/2").double(2)).unwrap();
        let wh = c.width().scale(c.height());
        assert_eq!(&wh, c.support_measure());
        assert_eq!(c.double(5).support_measure(), c.support_measure());
    }

    #[test]
    fn reverse_bits_wide() {
        let v = BigUint::one() << 70u32;
        assert_eq!(reverse_bits(&v, 100), BigUint::one() << 29u32);
        assert_eq!(reverse_bits(&BigUint::from(1u8), 3), BigUint::from(4u8));
    }
}
