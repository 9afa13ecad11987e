//! Dense log-space tables over ordered variable scopes.
//!
//! Layout is row-major with the last scope variable varying fastest.

use crate::error::{Error, Result};

/// Numerically stable `ln Σ exp(x)`; returns −∞ for an empty or all −∞ slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entry count for the given cardinalities, or `None` on overflow.
pub fn table_size(cards: &[usize]) -> Option<usize> {
    cards.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c))
}

/// Entry count as a wide integer, for capacity diagnostics.
pub fn table_size_wide(cards: &[usize]) -> u128 {
    cards.iter().fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
}

/// Row-major strides of `sub` laid out inside the index space of `sup`.
/// Variables of `sup` missing from `sub` get stride 0.
pub fn strides_within(sub: &[usize], sub_cards: &[usize], sup: &[usize]) -> Vec<usize> {
    let mut own = vec![0usize; sub.len()];
    let mut acc = 1;
    for k in (0..sub.len()).rev() {
        own[k] = acc;
        acc *= sub_cards[k];
    }
    sup.iter()
        .map(|v| sub.iter().position(|s| s == v).map_or(0, |k| own[k]))
        .collect()
}

/// Mixed-radix counter over a scope that tracks any number of linear
/// indices (one per stride vector) as it advances.
pub struct Odometer<'a> {
    cards: &'a [usize],
    digits: Vec<usize>,
    strides: Vec<&'a [usize]>,
    pub indices: Vec<usize>,
}

impl<'a> Odometer<'a> {
    pub fn new(cards: &'a [usize], strides: Vec<&'a [usize]>) -> Self {
        let n = strides.len();
        Odometer {
            cards,
            digits: vec![0; cards.len()],
            strides,
            indices: vec![0; n],
        }
    }

    pub fn digits(&self) -> &[usize] {
        &self.digits
    }

    /// Advance to the next assignment; returns false after wrapping around.
    pub fn step(&mut self) -> bool {
        for d in (0..self.cards.len()).rev() {
            self.digits[d] += 1;
            if self.digits[d] < self.cards[d] {
                for (idx, s) in self.indices.iter_mut().zip(&self.strides) {
                    *idx += s[d];
                }
                return true;
            }
            self.digits[d] = 0;
            let back = self.cards[d] - 1;
            for (idx, s) in self.indices.iter_mut().zip(&self.strides) {
                *idx -= back * s[d];
            }
        }
        false
    }
}

/// For every entry of a table over `sup`, the linear index of the matching
/// entry in a table over `sub` (which must be a subset of `sup`).
pub fn projection_map(sup: &[usize], sup_cards: &[usize], sub: &[usize], sub_cards: &[usize]) -> Vec<usize> {
    let size = table_size(sup_cards).unwrap_or(0);
    let strides = strides_within(sub, sub_cards, sup);
    let mut out = Vec::with_capacity(size);
    let mut odo = Odometer::new(sup_cards, vec![&strides]);
    loop {
        out.push(odo.indices[0]);
        if !odo.step() {
            break;
        }
    }
    out
}

/// A log-space table together with its scope and cardinalities.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTable {
    pub scope: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl LogTable {
    pub fn new(scope: Vec<usize>, cards: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(table_size(&cards), Some(values.len()));
        LogTable { scope, cards, values }
    }

    /// The constant table `ln 1 = 0` over an empty scope.
    pub fn unit() -> Self {
        LogTable::new(Vec::new(), Vec::new(), vec![0.0])
    }

    pub fn zeros(scope: Vec<usize>, cards: Vec<usize>) -> Self {
        let n = table_size(&cards).expect("table size overflow");
        LogTable::new(scope, cards, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn card_of(&self, var: usize) -> Option<usize> {
        self.scope.iter().position(|&v| v == var).map(|k| self.cards[k])
    }

    pub fn log_sum(&self) -> f64 {
        log_sum_exp(&self.values)
    }

    /// Shift so that the entries exponentiate to a distribution; returns the shift.
    pub fn normalize(&mut self) -> f64 {
        let z = self.log_sum();
        if z.is_finite() {
            for v in &mut self.values {
                *v -= z;
            }
        }
        z
    }

    /// Entrywise sum (log-space product) of several tables over the union of
    /// their scopes, in order of first appearance. Fails if the result
    /// would exceed `cap` entries.
    pub fn product(tables: &[&LogTable], cap: usize) -> Result<LogTable> {
        let mut scope: Vec<usize> = Vec::new();
        let mut cards: Vec<usize> = Vec::new();
        for t in tables {
            for (&v, &c) in t.scope.iter().zip(&t.cards) {
                if !scope.contains(&v) {
                    scope.push(v);
                    cards.push(c);
                }
            }
        }
        let wide = table_size_wide(&cards);
        if wide > cap as u128 {
            return Err(Error::capacity("intermediate product table", wide, cap));
        }
        let strides: Vec<Vec<usize>> = tables
            .iter()
            .map(|t| strides_within(&t.scope, &t.cards, &scope))
            .collect();
        let size = wide as usize;
        let mut values = Vec::with_capacity(size);
        let mut odo = Odometer::new(&cards, strides.iter().map(|s| s.as_slice()).collect());
        loop {
            let mut acc = 0.0;
            for (t, &i) in tables.iter().zip(&odo.indices) {
                acc += t.values[i];
            }
            values.push(acc);
            if !odo.step() {
                break;
            }
        }
        Ok(LogTable::new(scope, cards, values))
    }

    /// Log-sum-exp out every variable not in `keep`; the result scope keeps
    /// the order of `keep` (variables of `keep` absent from this table are ignored).
    pub fn marginalize_onto(&self, keep: &[usize]) -> LogTable {
        let scope: Vec<usize> = keep.iter().copied().filter(|v| self.scope.contains(v)).collect();
        let cards: Vec<usize> = scope.iter().map(|&v| self.card_of(v).unwrap()).collect();
        if scope.len() == self.scope.len() && scope == self.scope {
            return self.clone();
        }
        let map = projection_map(&self.scope, &self.cards, &scope, &cards);
        let size = table_size(&cards).unwrap();
        let mut max = vec![f64::NEG_INFINITY; size];
        for (&j, &v) in map.iter().zip(&self.values) {
            if v > max[j] {
                max[j] = v;
            }
        }
        let mut acc = vec![0.0; size];
        for (&j, &v) in map.iter().zip(&self.values) {
            if max[j] > f64::NEG_INFINITY {
                acc[j] += (v - max[j]).exp();
            }
        }
        let values = acc
            .iter()
            .zip(&max)
            .map(|(&a, &m)| if m == f64::NEG_INFINITY { m } else { m + a.ln() })
            .collect();
        LogTable::new(scope, cards, values)
    }

    /// Log-sum-exp out a single variable.
    pub fn sum_out(&self, var: usize) -> LogTable {
        let keep: Vec<usize> = self.scope.iter().copied().filter(|&v| v != var).collect();
        self.marginalize_onto(&keep)
    }

    /// Fix `var` at `state` and drop it from the scope.
    pub fn slice(&self, var: usize, state: usize) -> LogTable {
        let Some(pos) = self.scope.iter().position(|&v| v == var) else {
            return self.clone();
        };
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let c = self.cards[pos];
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = o * c * inner + state * inner;
            values.extend_from_slice(&self.values[base..base + inner]);
        }
        LogTable::new(scope, cards, values)
    }

    /// Reorder the table to a permutation of its scope.
    pub fn permuted(&self, order: &[usize]) -> LogTable {
        debug_assert_eq!(order.len(), self.scope.len());
        if order == self.scope.as_slice() {
            return self.clone();
        }
        let cards: Vec<usize> = order.iter().map(|&v| self.card_of(v).unwrap()).collect();
        let strides = strides_within(&self.scope, &self.cards, order);
        let mut values = Vec::with_capacity(self.values.len());
        let mut odo = Odometer::new(&cards, vec![&strides]);
        loop {
            values.push(self.values[odo.indices[0]]);
            if !odo.step() {
                break;
            }
        }
        LogTable::new(order.to_vec(), cards, values)
    }

    /// Probabilities `exp(values)`; assumes the table is normalized.
    pub fn probabilities(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.exp()).collect()
    }
}
