//! Seeded operator generators, reference operators, and the brute-force
//! dense inverse used as an independent oracle.
//!
//! The oracle inverts the full dense finite section by Gauss-Jordan
//! elimination (unpivoted, retried with partial pivoting when a pivot turns
//! small). It deliberately ignores the band structure and never touches the
//! recurrence machinery, so comparisons against kernel entries are a genuine
//! two-route check. It is slow on purpose.

use std::collections::BTreeMap;

use num_complex::Complex;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandop::{BandOperator, DiagonalRule};
use crate::blockalg::Block;
use crate::error::{Error, Result};
use crate::scalar::{cplx, real, Scalar};

/// Scalar three-diagonal operator with unit off-diagonals and zero diagonal;
/// its spectrum is the segment [-2, 2].
pub fn free_jacobi<T: Scalar>() -> BandOperator<T> {
    constant_scalar_operator(&[(-1, 1.0), (0, 0.0), (1, 1.0)])
}

/// Scalar constant-coefficient operator from `(offset, value)` pairs.
pub fn constant_scalar_operator<T: Scalar>(diagonals: &[(i64, f64)]) -> BandOperator<T> {
    let mut map = BTreeMap::new();
    let mut r = 0i64;
    let mut s = 0i64;
    for &(off, val) in diagonals {
        r = r.max(off);
        s = s.max(-off);
        map.insert(off, Block::scalar(cplx(val, 0.0)));
    }
    BandOperator::new(1, r as usize, s as usize, DiagonalRule::Constant(map))
        .expect("valid constant operator")
}

/// Block three-diagonal operator with identity off-diagonal blocks: N
/// decoupled copies of the scalar free operator.
pub fn block_jacobi_identity<T: Scalar>(order: usize) -> BandOperator<T> {
    let mut map = BTreeMap::new();
    map.insert(1, Block::identity(order));
    map.insert(-1, Block::identity(order));
    BandOperator::new(order, 1, 1, DiagonalRule::Constant(map)).expect("valid block operator")
}

/// Recipe for a reproducible random operator.
#[derive(Debug, Clone, Copy)]
pub struct OperatorSeed {
    pub seed: u64,
    pub block_order: usize,
    pub r: usize,
    pub s: usize,
    /// Added to the extreme diagonals as a multiple of the identity so the
    /// generated operator always satisfies the invertibility requirement.
    pub conditioning_shift: f64,
}

impl OperatorSeed {
    pub fn new(block_order: usize, r: usize, s: usize, seed: u64) -> Self {
        OperatorSeed {
            seed,
            block_order,
            r,
            s,
            conditioning_shift: 2.0,
        }
    }
}

/// Periodic operator (period 8) with entries uniform in the complex unit
/// square and the extreme diagonals shifted toward the identity.
/// Deterministic in the seed.
pub fn random_operator<T: Scalar>(recipe: &OperatorSeed) -> BandOperator<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let n = recipe.block_order;
    let (r, s) = (recipe.r as i64, recipe.s as i64);
    let period = 8;
    let mut map: BTreeMap<i64, Vec<Block<T>>> = BTreeMap::new();
    for off in -s..=r {
        let mut blocks = Vec::with_capacity(period);
        for _ in 0..period {
            let mut b = Block::from_fn(n, |_, _| cplx(rng.gen::<f64>(), rng.gen::<f64>()));
            if off == r || off == -s {
                for i in 0..n {
                    b.set(i, i, b.get(i, i) + cplx(recipe.conditioning_shift, 0.0));
                }
            }
            blocks.push(b);
        }
        map.insert(off, blocks);
    }
    BandOperator::new(n, recipe.r, recipe.s, DiagonalRule::Periodic(map))
        .expect("generated operator is well-formed")
}

/// Shorthand used across the test suites.
pub fn seeded_operator(block_order: usize, r: usize, s: usize, seed: u64) -> BandOperator<f64> {
    random_operator(&OperatorSeed::new(block_order, r, s, seed))
}

/// The ten operator recipes exercised by the acceptance suite: block orders
/// 1..3 crossed with the four bandwidth shapes.
pub fn acceptance_operators() -> Vec<OperatorSeed> {
    let shapes = [(1, 1), (2, 1), (1, 2), (2, 2)];
    let mut out = Vec::new();
    let mut seed = 0u64;
    for n in 1..=2usize {
        for &(r, s) in &shapes {
            out.push(OperatorSeed::new(n, r, s, seed));
            seed += 1;
        }
    }
    out.push(OperatorSeed::new(3, 1, 1, seed));
    out.push(OperatorSeed::new(3, 2, 2, seed + 1));
    out
}

/// Fixed off-spectrum probe set, scaled by the operator's entry bound:
/// real points both sides, two genuinely complex points, one imaginary, and
/// one deep Neumann-regime point.
pub fn off_spectrum_lambdas<T: Scalar>(op: &BandOperator<T>) -> Vec<Complex<T>> {
    let b = Complex::new(op.bound(), T::zero());
    let probes: [Complex<T>; 6] = [
        cplx(3.0, 0.0),
        cplx(-3.0, 0.0),
        cplx(2.5, 1.0),
        cplx(-1.0, 2.0),
        cplx(0.0, 4.0),
        cplx(100.0, 0.0),
    ];
    probes.into_iter().map(|c| c * b).collect()
}

/// Fully dense inverse of the M-block section of `λI − A`.
pub struct OracleInverse<T: Scalar> {
    m: usize,
    block_order: usize,
    dim: usize,
    inv: Vec<Complex<T>>,
}

impl<T: Scalar> OracleInverse<T> {
    pub fn new(op: &BandOperator<T>, lambda: Complex<T>, m: usize) -> Result<Self> {
        let nb = op.block_order();
        let dim = m * nb;
        let mut dense = vec![Complex::<T>::zero(); dim * dim];
        for kb in 0..m {
            for lb in 0..m {
                let a = op.entry(kb, lb);
                if a.is_zero() && kb != lb {
                    continue;
                }
                for i in 0..nb {
                    for j in 0..nb {
                        let mut z = -a.get(i, j);
                        if kb == lb && i == j {
                            z = z + lambda;
                        }
                        dense[(kb * nb + i) * dim + lb * nb + j] = z;
                    }
                }
            }
        }
        let inv = match gauss_jordan(dense.clone(), dim, false) {
            Ok(inv) => inv,
            Err(_) => gauss_jordan(dense, dim, true)?,
        };
        Ok(OracleInverse {
            m,
            block_order: nb,
            dim,
            inv,
        })
    }

    /// Interior block `(k, n)`; callers stay inside `M/2` so the section
    /// boundary cannot contaminate the comparison.
    pub fn block(&self, k: usize, n: usize) -> Block<T> {
        assert!(
            k < self.m / 2 && n < self.m / 2,
            "oracle entries are only boundary-insulated in the leading half"
        );
        let nb = self.block_order;
        Block::from_fn(nb, |i, j| self.inv[(k * nb + i) * self.dim + n * nb + j])
    }
}

/// One oracle entry; prefer [`OracleInverse`] when reading many.
pub fn oracle_inverse_entry<T: Scalar>(
    op: &BandOperator<T>,
    lambda: Complex<T>,
    m: usize,
    k: usize,
    n: usize,
) -> Result<Block<T>> {
    Ok(OracleInverse::new(op, lambda, m)?.block(k, n))
}

fn gauss_jordan<T: Scalar>(
    mut a: Vec<Complex<T>>,
    dim: usize,
    pivoted: bool,
) -> Result<Vec<Complex<T>>> {
    let mut inv = vec![Complex::<T>::zero(); dim * dim];
    for i in 0..dim {
        inv[i * dim + i] = Complex::new(T::one(), T::zero());
    }
    let scale = a
        .iter()
        .map(|z| z.norm())
        .fold(T::zero(), T::max)
        .max(T::min_positive_value());
    let hard_floor = scale * T::epsilon() * real::<T>(dim as f64);
    let soft_floor = scale * real::<T>(1e-10);

    for col in 0..dim {
        let mut piv = col;
        if pivoted {
            let mut best = a[col * dim + col].norm();
            for row in col + 1..dim {
                let mag = a[row * dim + col].norm();
                if mag > best {
                    best = mag;
                    piv = row;
                }
            }
        }
        let mag = a[piv * dim + col].norm();
        if mag <= hard_floor || (!pivoted && mag <= soft_floor) {
            return Err(Error::SingularSection { m: dim });
        }
        if piv != col {
            for j in 0..dim {
                a.swap(col * dim + j, piv * dim + j);
                inv.swap(col * dim + j, piv * dim + j);
            }
        }
        let d = a[col * dim + col];
        for j in 0..dim {
            a[col * dim + j] = a[col * dim + j] / d;
            inv[col * dim + j] = inv[col * dim + j] / d;
        }
        for row in 0..dim {
            if row == col {
                continue;
            }
            let f = a[row * dim + col];
            if f.is_zero() {
                continue;
            }
            // split_at_mut keeps the pivot row readable while updating
            let (pivot_row, target_row) = if row < col {
                let (lo, hi) = a.split_at_mut(col * dim);
                (&hi[..dim], &mut lo[row * dim..row * dim + dim])
            } else {
                let (lo, hi) = a.split_at_mut(row * dim);
                (&lo[col * dim..col * dim + dim], &mut hi[..dim])
            };
            for j in 0..dim {
                target_row[j] = target_row[j] - f * pivot_row[j];
            }
            let (pivot_row, target_row) = if row < col {
                let (lo, hi) = inv.split_at_mut(col * dim);
                (&hi[..dim], &mut lo[row * dim..row * dim + dim])
            } else {
                let (lo, hi) = inv.split_at_mut(row * dim);
                (&lo[col * dim..col * dim + dim], &mut hi[..dim])
            };
            for j in 0..dim {
                target_row[j] = target_row[j] - f * pivot_row[j];
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic() {
        let a = seeded_operator(2, 2, 1, 42);
        let b = seeded_operator(2, 2, 1, 42);
        for k in 0..20usize {
            for l in k.saturating_sub(1)..=k + 2 {
                assert_eq!(a.entry(k, l), b.entry(k, l));
            }
        }
    }

    #[test]
    fn generated_operators_validate() {
        for recipe in acceptance_operators() {
            let op = random_operator::<f64>(&recipe);
            let report = op.validate(300);
            assert!(report.is_ok(), "recipe {recipe:?}");
        }
    }

    #[test]
    fn scalar_seed_zero_bound() {
        let op = seeded_operator(1, 1, 1, 0);
        assert!(op.validate(100).is_ok());
        assert!(op.bound() <= 3.5);
    }

    #[test]
    fn oracle_free_jacobi_corner() {
        let op = free_jacobi::<f64>();
        let oracle = OracleInverse::new(&op, cplx(3.0, 0.0), 200).unwrap();
        let b = oracle.block(0, 0);
        assert!((b.get(0, 0).re - 0.3819660113).abs() < 1e-9);
        assert!(b.get(0, 0).im.abs() < 1e-12);
    }

    #[test]
    fn oracle_decay_ratio() {
        let op = free_jacobi::<f64>();
        let oracle = OracleInverse::new(&op, cplx(3.0, 0.0), 100).unwrap();
        for k in 1..=15usize {
            let a = oracle.block(k, 0).norm();
            let b = oracle.block(k - 1, 0).norm();
            assert!((a / b - 0.3819660113).abs() < 1e-6, "k = {k}");
        }
    }

    #[test]
    fn oracle_neumann_dominance() {
        let op = seeded_operator(2, 1, 1, 3);
        let lambda = cplx(100.0, 0.0);
        let oracle = OracleInverse::new(&op, lambda, 60).unwrap();
        let b = oracle.block(0, 0);
        let want = Block::identity(2).scale(cplx(0.01, 0.0));
        assert!((&b - &want).norm() <= 0.05 * want.norm());
    }

    #[test]
    fn oracle_self_consistency_across_sizes() {
        let op = seeded_operator(1, 2, 1, 1);
        let lambda = cplx::<f64>(3.0, 0.0).scale(op.bound());
        let small = OracleInverse::new(&op, lambda, 200).unwrap();
        let large = OracleInverse::new(&op, lambda, 400).unwrap();
        for k in 0..=10usize {
            for n in 0..=10usize {
                let a = small.block(k, n);
                let b = large.block(k, n);
                assert!((&a - &b).norm() <= 1e-9 * (1.0 + b.norm()));
            }
        }
    }

    #[test]
    fn oracle_detects_singular_section() {
        let op = free_jacobi::<f64>();
        // λ = 0 is an eigenvalue of odd-size sections
        assert!(matches!(
            OracleInverse::new(&op, cplx(0.0, 0.0), 9),
            Err(Error::SingularSection { .. })
        ));
    }
}
