//! The infinite band matrix with N×N blocks, its validation, and finite
//! sections of `λI − A`.
//!
//! An operator is described by a deterministic diagonal rule: block `(k, ℓ)`
//! is nonzero only for `k − s ≤ ℓ ≤ k + r`, and the extreme entries
//! `A_{k,k+r}`, `A_{k+s,k}` must stay invertible under a condition cap for
//! the solution recurrences to advance.
//!
//! # Operator files
//!
//! The JSON form consumed by the CLI:
//!
//! ```json
//! {
//!   "N": 1, "r": 1, "s": 1,
//!   "kind": "constant",
//!   "diagonals": { "-1": [[1, 0]], "0": [[0, 0]], "1": [[1, 0]] }
//! }
//! ```
//!
//! Keys of `diagonals` are offsets `-s ..= r`; offsets `-s` and `r` are
//! mandatory, absent offsets are zero. A block is a row-major list of N²
//! `[re, im]` pairs. For `kind` `"periodic"` each offset maps to a list of
//! blocks cycled by row index; for `"prefix_tail"` the list is explicit rows
//! with the last entry repeated forever.

use std::collections::BTreeMap;

use num_complex::Complex;
use num_traits::Zero;
use serde_json::Value;

use crate::blockalg::Block;
use crate::defaults;
use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Diagonal-indexed entry rule. Offsets are `ℓ − k` in `[-s, r]`.
#[derive(Debug, Clone)]
pub enum DiagonalRule<T: Scalar> {
    /// One block per offset, constant down the diagonal.
    Constant(BTreeMap<i64, Block<T>>),
    /// Blocks cycled with period equal to the list length, per offset.
    Periodic(BTreeMap<i64, Vec<Block<T>>>),
    /// Explicit leading rows, then the last block repeats.
    PrefixTail(BTreeMap<i64, Vec<Block<T>>>),
}

impl<T: Scalar> DiagonalRule<T> {
    fn offsets(&self) -> Vec<i64> {
        match self {
            DiagonalRule::Constant(m) => m.keys().copied().collect(),
            DiagonalRule::Periodic(m) => m.keys().copied().collect(),
            DiagonalRule::PrefixTail(m) => m.keys().copied().collect(),
        }
    }

    fn blocks_at(&self, offset: i64) -> Option<&[Block<T>]> {
        match self {
            DiagonalRule::Constant(m) => m.get(&offset).map(std::slice::from_ref),
            DiagonalRule::Periodic(m) => m.get(&offset).map(|v| v.as_slice()),
            DiagonalRule::PrefixTail(m) => m.get(&offset).map(|v| v.as_slice()),
        }
    }

    fn entry(&self, row: usize, offset: i64) -> Option<&Block<T>> {
        match self {
            DiagonalRule::Constant(m) => m.get(&offset),
            DiagonalRule::Periodic(m) => m.get(&offset).map(|v| &v[row % v.len()]),
            DiagonalRule::PrefixTail(m) => m.get(&offset).map(|v| &v[row.min(v.len() - 1)]),
        }
    }
}

/// Band operator `A = (A_{k,ℓ})` with N×N complex blocks, `r` superdiagonals
/// and `s` subdiagonals of blocks. Immutable after construction; entry lookup
/// is pure, so values are freely shared across scan workers.
#[derive(Debug, Clone)]
pub struct BandOperator<T: Scalar> {
    block_order: usize,
    r: usize,
    s: usize,
    rule: DiagonalRule<T>,
    bound: T,
    cond_cap: T,
}

impl<T: Scalar> BandOperator<T> {
    pub fn new(block_order: usize, r: usize, s: usize, rule: DiagonalRule<T>) -> Result<Self> {
        if block_order == 0 || block_order > 128 {
            return Err(Error::parse("N", "block order must be in 1..=128"));
        }
        if r == 0 || s == 0 {
            return Err(Error::parse("r/s", "bandwidths r and s must be at least 1"));
        }
        for off in rule.offsets() {
            if off < -(s as i64) || off > r as i64 {
                return Err(Error::parse(
                    "diagonals",
                    format!("offset {off} outside band -{s}..{r}"),
                ));
            }
            let blocks = rule.blocks_at(off).unwrap();
            if blocks.is_empty() {
                return Err(Error::parse("diagonals", format!("offset {off} is empty")));
            }
            for b in blocks {
                if b.order() != block_order {
                    return Err(Error::parse(
                        "diagonals",
                        format!("offset {off}: block order {} != N = {block_order}", b.order()),
                    ));
                }
                if !b.is_finite() {
                    return Err(Error::parse(
                        "diagonals",
                        format!("offset {off}: non-finite entry"),
                    ));
                }
            }
        }
        for required in [r as i64, -(s as i64)] {
            if rule.blocks_at(required).is_none() {
                return Err(Error::parse(
                    "diagonals",
                    format!("mandatory offset {required} missing"),
                ));
            }
        }
        let mut bound = T::zero();
        for off in rule.offsets() {
            for b in rule.blocks_at(off).unwrap() {
                bound = bound.max(b.norm());
            }
        }
        Ok(BandOperator {
            block_order,
            r,
            s,
            rule,
            bound,
            cond_cap: real(defaults::COND_CAP),
        })
    }

    pub fn with_cond_cap(mut self, cap: T) -> Self {
        self.cond_cap = cap;
        self
    }

    pub fn block_order(&self) -> usize {
        self.block_order
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.r
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.s
    }

    /// Sup of `‖A_{k,ℓ}‖` over the declared diagonal data.
    pub fn bound(&self) -> T {
        self.bound
    }

    pub fn cond_cap(&self) -> T {
        self.cond_cap
    }

    /// Entry `A_{k,ℓ}` for `k, ℓ ≥ 0`; zero outside the band.
    pub fn entry(&self, k: usize, l: usize) -> Block<T> {
        let offset = l as i64 - k as i64;
        if offset < -(self.s as i64) || offset > self.r as i64 {
            return Block::zeros(self.block_order);
        }
        match self.rule.entry(k, offset) {
            Some(b) => b.clone(),
            None => Block::zeros(self.block_order),
        }
    }

    /// Check invertibility of the extreme band entries for rows `0..=bound_k`
    /// and measure the realized entry-norm sup. Failures are collected, not
    /// thrown: an operator that violates the band invertibility requirement
    /// is reported as such.
    pub fn validate(&self, bound_k: usize) -> ValidationReport<T> {
        let mut failures = Vec::new();
        let mut realized = T::zero();
        for k in 0..=bound_k {
            let upper = self.entry(k, k + self.r);
            if let Err(e) = upper.inverse(self.cond_cap) {
                failures.push(ValidationFailure {
                    row: k,
                    which: ExtremeDiagonal::Upper,
                    cond: error_cond(&e),
                });
            }
            let lower = self.entry(k + self.s, k);
            if let Err(e) = lower.inverse(self.cond_cap) {
                failures.push(ValidationFailure {
                    row: k,
                    which: ExtremeDiagonal::Lower,
                    cond: error_cond(&e),
                });
            }
            for l in k.saturating_sub(self.s)..=k + self.r {
                realized = realized.max(self.entry(k, l).norm());
            }
        }
        ValidationReport {
            checked_to: bound_k,
            failures,
            realized_bound: realized,
        }
    }
}

fn error_cond(e: &Error) -> f64 {
    match e {
        Error::SingularBlock { cond, .. } => *cond,
        _ => f64::NAN,
    }
}

/// Which extreme diagonal failed invertibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremeDiagonal {
    Upper,
    Lower,
}

#[derive(Debug, Clone)]
pub struct ValidationFailure {
    pub row: usize,
    pub which: ExtremeDiagonal,
    pub cond: f64,
}

#[derive(Debug, Clone)]
pub struct ValidationReport<T: Scalar> {
    pub checked_to: usize,
    pub failures: Vec<ValidationFailure>,
    pub realized_bound: T,
}

impl<T: Scalar> ValidationReport<T> {
    pub fn is_ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Dense principal `M×M` block truncation of `λI − A`.
#[derive(Debug, Clone)]
pub struct FiniteSection<T: Scalar> {
    lambda: Complex<T>,
    m: usize,
    block_order: usize,
    r: usize,
    s: usize,
    data: Vec<Block<T>>,
}

/// Build the section; `data[k][ℓ] = λδ_{kℓ}E − A_{k,ℓ}` inside the band and
/// zero elsewhere.
pub fn finite_section<T: Scalar>(
    op: &BandOperator<T>,
    lambda: Complex<T>,
    m: usize,
) -> FiniteSection<T> {
    assert!(m >= 1, "section needs at least one block row");
    let n = op.block_order;
    let mut data = vec![Block::zeros(n); m * m];
    for k in 0..m {
        let lo = k.saturating_sub(op.s);
        let hi = (k + op.r).min(m - 1);
        for l in lo..=hi {
            let mut b = -&op.entry(k, l);
            if k == l {
                for i in 0..n {
                    b.set(i, i, b.get(i, i) + lambda);
                }
            }
            data[k * m + l] = b;
        }
    }
    FiniteSection {
        lambda,
        m,
        block_order: n,
        r: op.r,
        s: op.s,
        data,
    }
}

impl<T: Scalar> FiniteSection<T> {
    pub fn lambda(&self) -> Complex<T> {
        self.lambda
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn block_order(&self) -> usize {
        self.block_order
    }

    pub fn block(&self, k: usize, l: usize) -> &Block<T> {
        &self.data[k * self.m + l]
    }
}

/// Block-partitioned inverse of a finite section via banded LU with partial
/// pivoting. Cost is `O(M²)` blocks for the back-substitutions, so this is
/// for window-sized sections; the Weyl estimator solves for the few columns
/// it needs instead.
pub fn section_inverse<T: Scalar>(sec: &FiniteSection<T>) -> Result<Vec<Block<T>>> {
    let nb = sec.block_order;
    let m = sec.m;
    let lu = BandedLu::from_section(sec)?;
    let n = m * nb;
    let mut inv = vec![Block::zeros(nb); m * m];
    let mut col = vec![Complex::<T>::zero(); n];
    for j in 0..n {
        col.iter_mut().for_each(|z| *z = Complex::zero());
        col[j] = Complex::new(T::one(), T::zero());
        lu.solve(&mut col);
        let (lb, b_in) = (j / nb, j % nb);
        for i in 0..n {
            let (kb, a_in) = (i / nb, i % nb);
            inv[kb * m + lb].set(a_in, b_in, col[i]);
        }
    }
    Ok(inv)
}

/// LU factorization of a scalar banded matrix with partial pivoting.
/// Row interchanges widen the upper bandwidth by `kl`, the classic band
/// storage layout with `kl + (kl + ku) + 1` diagonals.
pub(crate) struct BandedLu<T: Scalar> {
    n: usize,
    kl: usize,
    kuw: usize,
    data: Vec<Complex<T>>,
    ipiv: Vec<usize>,
}

impl<T: Scalar> BandedLu<T> {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.kuw >= j && j + self.kl >= i);
        (i + self.kuw - j) * self.n + j
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, z: Complex<T>) {
        let ix = self.idx(i, j);
        self.data[ix] = z;
    }

    /// Assemble `λI − A` restricted to `m` block rows straight from the
    /// operator, without materializing dense blocks.
    pub(crate) fn from_operator(
        op: &BandOperator<T>,
        lambda: Complex<T>,
        m: usize,
    ) -> Result<Self> {
        let nb = op.block_order;
        let kl = op.s * nb + nb - 1;
        let ku = op.r * nb + nb - 1;
        Self::assemble(m * nb, kl, ku, |i, j| {
            let (kb, a_in) = (i / nb, i % nb);
            let (lb, b_in) = (j / nb, j % nb);
            let off = lb as i64 - kb as i64;
            if off < -(op.s as i64) || off > op.r as i64 {
                return Complex::zero();
            }
            let mut z = -op.entry(kb, lb).get(a_in, b_in);
            if i == j {
                z = z + lambda;
            }
            z
        })
    }

    pub(crate) fn from_section(sec: &FiniteSection<T>) -> Result<Self> {
        let nb = sec.block_order;
        let kl = sec.s * nb + nb - 1;
        let ku = sec.r * nb + nb - 1;
        Self::assemble(sec.m * nb, kl, ku, |i, j| {
            sec.block(i / nb, j / nb).get(i % nb, j % nb)
        })
    }

    fn assemble(
        n: usize,
        kl: usize,
        ku: usize,
        entry: impl Fn(usize, usize) -> Complex<T>,
    ) -> Result<Self> {
        let kuw = ku + kl;
        let mut lu = BandedLu {
            n,
            kl,
            kuw,
            data: vec![Complex::zero(); (kl + kuw + 1) * n],
            ipiv: vec![0; n],
        };
        let mut max_abs = T::zero();
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            for j in lo..=hi {
                let z = entry(i, j);
                max_abs = max_abs.max(z.norm());
                lu.set(i, j, z);
            }
        }
        lu.factor(max_abs)?;
        Ok(lu)
    }

    fn factor(&mut self, max_abs: T) -> Result<()> {
        let n = self.n;
        let tiny = T::epsilon() * max_abs.max(T::one()) * real::<T>(n as f64);
        for j in 0..n {
            let row_hi = (j + self.kl).min(n - 1);
            let mut piv = j;
            let mut best = self.get(j, j).norm();
            for i in j + 1..=row_hi {
                let mag = self.get(i, j).norm();
                if mag > best {
                    best = mag;
                    piv = i;
                }
            }
            if !(best > tiny) {
                return Err(Error::SingularSection { m: n });
            }
            self.ipiv[j] = piv;
            let col_hi = (j + self.kuw).min(n - 1);
            if piv != j {
                for c in j..=col_hi {
                    let a = self.get(j, c);
                    let b = self.get(piv, c);
                    self.set(j, c, b);
                    self.set(piv, c, a);
                }
            }
            let d = self.get(j, j);
            for i in j + 1..=row_hi {
                let mult = self.get(i, j) / d;
                self.set(i, j, mult);
                if mult.is_zero() {
                    continue;
                }
                for c in j + 1..=col_hi {
                    let upd = self.get(i, c) - mult * self.get(j, c);
                    self.set(i, c, upd);
                }
            }
        }
        Ok(())
    }

    /// Solve in place for one right-hand side.
    pub(crate) fn solve(&self, x: &mut [Complex<T>]) {
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        for j in 0..n {
            if self.ipiv[j] != j {
                x.swap(j, self.ipiv[j]);
            }
            let xj = x[j];
            if xj.is_zero() {
                continue;
            }
            for i in j + 1..=(j + self.kl).min(n - 1) {
                x[i] = x[i] - self.get(i, j) * xj;
            }
        }
        for j in (0..n).rev() {
            let xj = x[j] / self.get(j, j);
            x[j] = xj;
            if xj.is_zero() {
                continue;
            }
            for i in j.saturating_sub(self.kuw)..j {
                x[i] = x[i] - self.get(i, j) * xj;
            }
        }
    }
}

/// Parse an operator from its JSON description. See the module docs for the
/// format.
pub fn operator_from_json<T: Scalar>(text: &str) -> Result<BandOperator<T>> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::parse("json", format!("invalid JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::parse("json", "top level must be an object"))?;

    let get_usize = |key: &str| -> Result<usize> {
        obj.get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::parse(key, "missing or not a nonnegative integer"))
    };
    let n = get_usize("N")?;
    let r = get_usize("r")?;
    let s = get_usize("s")?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::parse("kind", "missing or not a string"))?;
    let diagonals = obj
        .get("diagonals")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::parse("diagonals", "missing or not an object"))?;

    let parse_block = |v: &Value, field: &str| -> Result<Block<T>> {
        let pairs = v
            .as_array()
            .ok_or_else(|| Error::parse(field, "block must be a list of [re, im] pairs"))?;
        if pairs.len() != n * n {
            return Err(Error::parse(
                field,
                format!("block has {} entries, expected N² = {}", pairs.len(), n * n),
            ));
        }
        let mut b = Block::zeros(n);
        for (idx, p) in pairs.iter().enumerate() {
            let pair = p
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::parse(field, "entry must be an [re, im] pair"))?;
            let re = pair[0]
                .as_f64()
                .ok_or_else(|| Error::parse(field, "re must be a number"))?;
            let im = pair[1]
                .as_f64()
                .ok_or_else(|| Error::parse(field, "im must be a number"))?;
            b.set(idx / n, idx % n, Complex::new(real(re), real(im)));
        }
        Ok(b)
    };

    let rule = match kind {
        "constant" => {
            let mut map = BTreeMap::new();
            for (key, val) in diagonals {
                let off: i64 = key
                    .parse()
                    .map_err(|_| Error::parse("diagonals", format!("bad offset key {key:?}")))?;
                map.insert(off, parse_block(val, &format!("diagonals[{key}]"))?);
            }
            DiagonalRule::Constant(map)
        }
        "periodic" | "prefix_tail" => {
            let mut map = BTreeMap::new();
            for (key, val) in diagonals {
                let off: i64 = key
                    .parse()
                    .map_err(|_| Error::parse("diagonals", format!("bad offset key {key:?}")))?;
                let list = val.as_array().ok_or_else(|| {
                    Error::parse(
                        format!("diagonals[{key}]"),
                        "expected a list of blocks for this kind",
                    )
                })?;
                let mut blocks = Vec::with_capacity(list.len());
                for (i, item) in list.iter().enumerate() {
                    blocks.push(parse_block(item, &format!("diagonals[{key}][{i}]"))?);
                }
                map.insert(off, blocks);
            }
            if kind == "periodic" {
                DiagonalRule::Periodic(map)
            } else {
                DiagonalRule::PrefixTail(map)
            }
        }
        other => {
            return Err(Error::parse(
                "kind",
                format!("unknown kind {other:?}, expected constant|periodic|prefix_tail"),
            ))
        }
    };

    BandOperator::new(n, r, s, rule)
}
