//! Resolvent kernel assembled from a solution basis and a candidate Weyl
//! matrix.
//!
//! Given an r×s block matrix `𝔐`, set `R_k = Q_k 𝔐 − P_k` (a block row of
//! length s) and `R⁺_n = 𝔐 Q⁺_n − P⁺_n` (a block column of length r). The
//! kernel is
//!
//! ```text
//! R_{k,n} = Q_k R⁺_n   for 0 ≤ k < n + r,
//! R_{k,n} = R_k Q⁺_n   for 0 ≤ n < k + s,
//! ```
//!
//! and the two formulas agree on the overlap strip `n − s < k < n + r` for
//! any `𝔐` whatsoever. Likewise the band identity `(λI − A)R = I` holds as a
//! formal product for arbitrary `𝔐`; what singles out the true Weyl matrix
//! is the geometric decay of `R_{k,n}` away from the diagonal.
//!
//! Direct evaluation of `Q_k 𝔐 − P_k` subtracts two geometrically growing
//! products, so its forward error grows like the dominant solution. Window
//! assembly therefore advances the `R` families through the recurrence
//! itself from their exact initial frames, and each stored entry carries a
//! rounding floor below which its digits carry no information. Consumers
//! (decay fits, growth rates) only trust entries certified against that
//! floor.

use num_complex::Complex;

use crate::bandop::BandOperator;
use crate::blockalg::{sum_scaled, Block, ScaledBlock};
use crate::error::{Error, Result};
use crate::recurrence::{advance_dual, advance_forward, SolutionBasis};
use crate::scalar::{to_f64, Scalar};

/// The r×s block array estimating the Weyl matrix, with provenance and
/// truncation-convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylMatrix<T: Scalar> {
    block_order: usize,
    r: usize,
    s: usize,
    blocks: Vec<Block<T>>,
    source: WeylSource,
    m_used: usize,
    convergence_gap: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeylSource {
    FiniteSection,
    UserSupplied,
}

impl<T: Scalar> WeylMatrix<T> {
    pub fn user_supplied(block_order: usize, r: usize, s: usize, blocks: Vec<Block<T>>) -> Self {
        assert_eq!(blocks.len(), r * s);
        assert!(blocks.iter().all(|b| b.order() == block_order));
        WeylMatrix {
            block_order,
            r,
            s,
            blocks,
            source: WeylSource::UserSupplied,
            m_used: 0,
            convergence_gap: None,
        }
    }

    pub(crate) fn from_section_estimate(
        block_order: usize,
        r: usize,
        s: usize,
        blocks: Vec<Block<T>>,
        m_used: usize,
        convergence_gap: Option<T>,
    ) -> Self {
        WeylMatrix {
            block_order,
            r,
            s,
            blocks,
            source: WeylSource::FiniteSection,
            m_used,
            convergence_gap,
        }
    }

    /// Scalar candidate for 1×1 blocks with r = s = 1.
    pub fn scalar(value: Complex<T>) -> Self {
        WeylMatrix::user_supplied(1, 1, 1, vec![Block::scalar(value)])
    }

    pub fn block(&self, i: usize, j: usize) -> &Block<T> {
        &self.blocks[i * self.s + j]
    }

    pub fn block_order(&self) -> usize {
        self.block_order
    }

    pub fn rows(&self) -> usize {
        self.r
    }

    pub fn cols(&self) -> usize {
        self.s
    }

    pub fn source(&self) -> WeylSource {
        self.source
    }

    pub fn section_size(&self) -> usize {
        self.m_used
    }

    pub fn convergence_gap(&self) -> Option<T> {
        self.convergence_gap
    }

    /// Frobenius norm over all blocks.
    pub fn norm(&self) -> T {
        let mut acc = T::zero();
        for b in &self.blocks {
            let n = b.norm();
            acc = acc + n * n;
        }
        acc.sqrt()
    }

    /// Copy with one scalar entry of one block shifted by `delta`.
    pub fn perturbed(&self, bi: usize, bj: usize, ei: usize, ej: usize, delta: Complex<T>) -> Self {
        let mut out = self.clone();
        let idx = bi * self.s + bj;
        let cur = out.blocks[idx].get(ei, ej);
        out.blocks[idx].set(ei, ej, cur + delta);
        out.source = WeylSource::UserSupplied;
        out
    }

    pub fn max_block_diff(&self, other: &WeylMatrix<T>) -> T {
        let mut worst = T::zero();
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            worst = worst.max((a - b).norm());
        }
        worst
    }
}

/// `R_k = Q_k 𝔐 − P_k`, evaluated directly from the basis at one index.
pub fn weyl_row<T: Scalar>(
    basis: &SolutionBasis<T>,
    weyl: &WeylMatrix<T>,
    k: i64,
) -> Vec<ScaledBlock<T>> {
    let n = basis.block_order();
    let (r, s) = (basis.upper_bandwidth(), basis.lower_bandwidth());
    (0..s)
        .map(|j| {
            let mut terms: Vec<ScaledBlock<T>> = (0..r)
                .map(|i| basis.q_row(k)[i].mul_block_right(weyl.block(i, j)))
                .collect();
            terms.push(basis.p_row(k)[j].neg());
            sum_scaled(n, terms.iter())
        })
        .collect()
}

/// `R⁺_n = 𝔐 Q⁺_n − P⁺_n`, evaluated directly from the basis at one index.
pub fn weyl_col<T: Scalar>(
    basis: &SolutionBasis<T>,
    weyl: &WeylMatrix<T>,
    n: i64,
) -> Vec<ScaledBlock<T>> {
    let nb = basis.block_order();
    let (r, s) = (basis.upper_bandwidth(), basis.lower_bandwidth());
    (0..r)
        .map(|i| {
            let mut terms: Vec<ScaledBlock<T>> = (0..s)
                .map(|j| basis.q_plus_col(n)[j].mul_block_left(weyl.block(i, j)))
                .collect();
            terms.push(basis.p_plus_col(n)[i].neg());
            sum_scaled(nb, terms.iter())
        })
        .collect()
}

fn dot<T: Scalar>(n: usize, a: &[ScaledBlock<T>], b: &[ScaledBlock<T>]) -> ScaledBlock<T> {
    debug_assert_eq!(a.len(), b.len());
    let prods: Vec<ScaledBlock<T>> = a.iter().zip(b).map(|(x, y)| x.mul(y)).collect();
    sum_scaled(n, prods.iter())
}

fn row_log2<T: Scalar>(row: &[ScaledBlock<T>]) -> T {
    row.iter()
        .map(|b| b.log2_norm())
        .fold(T::neg_infinity(), T::max)
}

/// Relative disagreement of the two kernel formulas at `(k, n)`, measured
/// against the scale of the products involved. `None` off the overlap strip.
pub fn overlap_mismatch<T: Scalar>(
    basis: &SolutionBasis<T>,
    weyl: &WeylMatrix<T>,
    k: usize,
    n: usize,
) -> Option<T> {
    let (r, s) = (basis.upper_bandwidth() as i64, basis.lower_bandwidth() as i64);
    let (ki, ni) = (k as i64, n as i64);
    if !(ni - s < ki && ki < ni + r) {
        return None;
    }
    let nb = basis.block_order();
    let r_col = weyl_col(basis, weyl, ni);
    let r_row = weyl_row(basis, weyl, ki);
    let first = dot(nb, basis.q_row(ki), &r_col);
    let second = dot(nb, &r_row, basis.q_plus_col(ni));

    let q_l2 = row_log2(basis.q_row(ki));
    let qp_l2 = row_log2(basis.q_plus_col(ni));
    let m_l2 = weyl.norm().max(T::min_positive_value()).log2();
    let scale_l2 = (q_l2 + row_log2(&r_col))
        .max(row_log2(&r_row) + qp_l2)
        .max(q_l2 + m_l2 + qp_l2);

    let diff = first.sub(&second);
    Some((diff.log2_norm() - scale_l2.max(T::zero())).exp2())
}

/// One kernel entry by the canonical branch (`k ≤ n` uses `Q_k R⁺_n`, else
/// `R_k Q⁺_n`). On the overlap strip both branches are computed and an
/// [`Error::OverlapMismatch`] is raised when they disagree beyond
/// `tol`-relative, which signals a corrupted basis or Weyl matrix.
pub fn kernel_entry<T: Scalar>(
    basis: &SolutionBasis<T>,
    weyl: &WeylMatrix<T>,
    k: usize,
    n: usize,
    tol: T,
) -> Result<ScaledBlock<T>> {
    if let Some(mismatch) = overlap_mismatch(basis, weyl, k, n) {
        if !(mismatch <= tol) {
            return Err(Error::OverlapMismatch {
                k,
                n,
                mismatch: to_f64(mismatch),
            });
        }
    }
    let nb = basis.block_order();
    if k <= n {
        Ok(dot(nb, basis.q_row(k as i64), &weyl_col(basis, weyl, n as i64)))
    } else {
        Ok(dot(nb, &weyl_row(basis, weyl, k as i64), basis.q_plus_col(n as i64)))
    }
}

/// The `R` row and column families advanced through the recurrence from
/// their exact initial frames. This keeps every stored value satisfying the
/// difference equations to relative machine precision, which direct
/// evaluation of `Q_k 𝔐 − P_k` cannot do once the growing family dominates.
pub(crate) struct KernelFactors<T: Scalar> {
    s: usize,
    r: usize,
    rows: Vec<Vec<ScaledBlock<T>>>,
    cols: Vec<Vec<ScaledBlock<T>>>,
}

impl<T: Scalar> KernelFactors<T> {
    pub(crate) fn build(
        op: &BandOperator<T>,
        weyl: &WeylMatrix<T>,
        lambda: Complex<T>,
        rows_top: i64,
        cols_top: i64,
    ) -> Result<Self> {
        let nb = op.block_order();
        let (r, s) = (op.upper_bandwidth(), op.lower_bandwidth());
        let minus_identity = |hit: bool| {
            if hit {
                ScaledBlock::from_block(Block::scalar_matrix(
                    nb,
                    -Complex::new(T::one(), T::zero()),
                ))
            } else {
                ScaledBlock::zero(nb)
            }
        };

        let mut rows: Vec<Vec<ScaledBlock<T>>> = Vec::new();
        for k in -(s as i64)..r as i64 {
            rows.push(
                (0..s)
                    .map(|j| {
                        if k < 0 {
                            minus_identity(k + s as i64 == j as i64)
                        } else {
                            ScaledBlock::from_block(weyl.block(k as usize, j).clone())
                        }
                    })
                    .collect(),
            );
        }
        while (rows.len() as i64 - 1 - s as i64) < rows_top {
            advance_forward(op, &mut rows, lambda)?;
        }

        let mut cols: Vec<Vec<ScaledBlock<T>>> = Vec::new();
        for n in -(r as i64)..s as i64 {
            cols.push(
                (0..r)
                    .map(|i| {
                        if n < 0 {
                            minus_identity(n + r as i64 == i as i64)
                        } else {
                            ScaledBlock::from_block(weyl.block(i, n as usize).clone())
                        }
                    })
                    .collect(),
            );
        }
        while (cols.len() as i64 - 1 - r as i64) < cols_top {
            advance_dual(op, &mut cols, lambda)?;
        }

        Ok(KernelFactors { s, r, rows, cols })
    }

    pub(crate) fn row(&self, k: i64) -> &[ScaledBlock<T>] {
        &self.rows[(k + self.s as i64) as usize]
    }

    pub(crate) fn col(&self, n: i64) -> &[ScaledBlock<T>] {
        &self.cols[(n + self.r as i64) as usize]
    }
}

/// Rectangular window of kernel entries with per-entry rounding floors.
#[derive(Debug, Clone)]
pub struct KernelWindow<T: Scalar> {
    lambda: Complex<T>,
    weyl: WeylMatrix<T>,
    extent: usize,
    entries: Vec<ScaledBlock<T>>,
    log2_norms: Vec<T>,
    floors_log2: Vec<T>,
    max_overlap_mismatch: T,
}

impl<T: Scalar> KernelWindow<T> {
    /// Entries `R_{k,n}` for `k, n ∈ [0, extent]`, canonical branch, with the
    /// overlap strip cross-checked against `tol` (relative to product scale).
    ///
    /// Needs the basis through `extent + r` forward and `extent` dual.
    pub fn build(
        op: &BandOperator<T>,
        basis: &SolutionBasis<T>,
        weyl: &WeylMatrix<T>,
        extent: usize,
        tol: T,
    ) -> Result<Self> {
        let (r, _s) = (op.upper_bandwidth(), op.lower_bandwidth());
        assert!(
            basis.k_max() >= (extent + r) as i64 && basis.k_max_dual() >= extent as i64,
            "basis too short for the requested window"
        );
        let nb = op.block_order();
        let factors = KernelFactors::build(op, weyl, basis.lambda(), extent as i64, extent as i64)?;

        let eps_l2 = T::epsilon().log2();
        let m_l2 = weyl.norm().max(T::min_positive_value()).log2();
        let combo_dual: Vec<T> = (0..=extent)
            .map(|n| {
                let a = m_l2 + row_log2(basis.q_plus_col(n as i64));
                let b = row_log2(basis.p_plus_col(n as i64));
                a.max(b) + T::one()
            })
            .collect();
        let combo_fwd: Vec<T> = (0..=extent)
            .map(|k| {
                let a = m_l2 + row_log2(basis.q_row(k as i64));
                let b = row_log2(basis.p_row(k as i64));
                a.max(b) + T::one()
            })
            .collect();

        let side = extent + 1;
        let mut entries = Vec::with_capacity(side * side);
        let mut log2_norms = Vec::with_capacity(side * side);
        let mut floors = Vec::with_capacity(side * side);
        let mut worst_mismatch = T::zero();

        for k in 0..=extent {
            for n in 0..=extent {
                let value = if k <= n {
                    dot(nb, basis.q_row(k as i64), factors.col(n as i64))
                } else {
                    dot(nb, factors.row(k as i64), basis.q_plus_col(n as i64))
                };
                let floor = if k <= n {
                    eps_l2 + row_log2(basis.q_row(k as i64)) + combo_dual[n]
                } else {
                    eps_l2 + combo_fwd[k] + row_log2(basis.q_plus_col(n as i64))
                };
                log2_norms.push(value.log2_norm());
                floors.push(floor);
                entries.push(value);

                if let Some(mismatch) = overlap_mismatch(basis, weyl, k, n) {
                    worst_mismatch = worst_mismatch.max(mismatch);
                    if !(mismatch <= tol) {
                        return Err(Error::OverlapMismatch {
                            k,
                            n,
                            mismatch: to_f64(mismatch),
                        });
                    }
                }
            }
        }

        Ok(KernelWindow {
            lambda: basis.lambda(),
            weyl: weyl.clone(),
            extent,
            entries,
            log2_norms,
            floors_log2: floors,
            max_overlap_mismatch: worst_mismatch,
        })
    }

    pub fn lambda(&self) -> Complex<T> {
        self.lambda
    }

    pub fn weyl(&self) -> &WeylMatrix<T> {
        &self.weyl
    }

    /// Window covers `k, n ∈ [0, extent]`.
    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn entry(&self, k: usize, n: usize) -> &ScaledBlock<T> {
        &self.entries[k * (self.extent + 1) + n]
    }

    pub fn log2_norm(&self, k: usize, n: usize) -> T {
        self.log2_norms[k * (self.extent + 1) + n]
    }

    /// log2 of the rounding floor of the entry's product route.
    pub fn entry_floor_log2(&self, k: usize, n: usize) -> T {
        self.floors_log2[k * (self.extent + 1) + n]
    }

    /// True when the entry's magnitude stands `margin_bits` above its
    /// rounding floor, i.e. its leading digits carry information.
    pub fn is_certified(&self, k: usize, n: usize, margin_bits: T) -> bool {
        let idx = k * (self.extent + 1) + n;
        self.log2_norms[idx] >= self.floors_log2[idx] + margin_bits
    }

    pub fn max_overlap_mismatch(&self) -> T {
        self.max_overlap_mismatch
    }
}

/// Worst relative row residual of the band identity `(λI − A) R = I` over
/// the window `k, n ∈ [0, extent]`, with the full band of every row included
/// and each row accumulated at its largest exponent.
///
/// The identity holds formally for any candidate `𝔐`, so a healthy basis
/// and kernel assembly put this at numerical-noise level; it is a
/// structural self-check, not a Weyl-matrix discriminator.
///
/// Needs the basis through `extent` forward and dual; the `R` families are
/// advanced internally through `extent + r`.
pub fn resolvent_residual<T: Scalar>(
    op: &BandOperator<T>,
    basis: &SolutionBasis<T>,
    weyl: &WeylMatrix<T>,
    extent: usize,
) -> Result<T> {
    let (r, s) = (op.upper_bandwidth(), op.lower_bandwidth());
    assert!(
        basis.k_max() >= extent as i64 && basis.k_max_dual() >= extent as i64,
        "basis too short for the requested residual window"
    );
    let nb = op.block_order();
    let lambda = basis.lambda();
    let factors = KernelFactors::build(op, weyl, lambda, (extent + r) as i64, extent as i64)?;

    let entry_at = |l: usize, n: usize| -> ScaledBlock<T> {
        if l <= n {
            dot(nb, basis.q_row(l as i64), factors.col(n as i64))
        } else {
            dot(nb, factors.row(l as i64), basis.q_plus_col(n as i64))
        }
    };

    let mut worst = T::zero();
    for n in 0..=extent {
        // kernel column n over the rows every band row below touches
        let column: Vec<ScaledBlock<T>> = (0..=extent + r).map(|l| entry_at(l, n)).collect();
        for k in 0..=extent {
            let mut terms: Vec<ScaledBlock<T>> = Vec::with_capacity(r + s + 2);
            for l in k.saturating_sub(s)..=k + r {
                let mut coeff = -&op.entry(k, l);
                if l == k {
                    for i in 0..nb {
                        coeff.set(i, i, coeff.get(i, i) + lambda);
                    }
                }
                if coeff.is_zero() {
                    continue;
                }
                terms.push(column[l].mul_block_left(&coeff));
            }
            if k == n {
                terms.push(ScaledBlock::from_block(Block::scalar_matrix(
                    nb,
                    -Complex::new(T::one(), T::zero()),
                )));
            }
            let scale_l2 = terms
                .iter()
                .map(|t| t.log2_norm())
                .fold(T::neg_infinity(), T::max);
            let residual = sum_scaled(nb, terms.iter());
            let rel = if scale_l2 == T::neg_infinity() {
                residual.norm()
            } else {
                (residual.log2_norm() - scale_l2.max(T::zero())).exp2()
            };
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

/// `A_{n,n-s} (Q_{n-s} P⁺_n − P_{n-s} Q⁺_n) = E`, the corner identity that
/// closes the diagonal row of the band product; relative residual at one n.
pub fn corner_identity_residual<T: Scalar>(
    op: &BandOperator<T>,
    basis: &SolutionBasis<T>,
    n: i64,
) -> T {
    let nb = basis.block_order();
    let s = basis.lower_bandwidth() as i64;
    let first = dot(nb, basis.q_row(n - s), basis.p_plus_col(n));
    let second = dot(nb, basis.p_row(n - s), basis.q_plus_col(n));
    let inner = first.sub(&second);
    let a = crate::recurrence::ghost_entry(op, n, n - s);
    let product = inner.mul_block_left(&a);
    let identity = ScaledBlock::from_block(Block::scalar_matrix(
        nb,
        -Complex::new(T::one(), T::zero()),
    ));
    let defect = sum_scaled(nb, [product.clone(), identity].iter());
    let scale = first
        .log2_norm()
        .max(second.log2_norm())
        .max(T::zero());
    (defect.log2_norm() - scale).exp2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recurrence::extend;
    use crate::scalar::cplx;
    use crate::{bandop, testkit, weyl};

    const M_TRUE: f64 = 0.3819660112501051;

    fn free_jacobi_basis(k_top: i64) -> (BandOperator<f64>, SolutionBasis<f64>) {
        let op = testkit::free_jacobi::<f64>();
        let basis = extend(&op, cplx(3.0, 0.0), k_top).unwrap();
        (op, basis)
    }

    #[test]
    fn weyl_row_examples() {
        let (_, basis) = free_jacobi_basis(5);
        let m = WeylMatrix::scalar(cplx(M_TRUE, 0.0));
        let r0 = weyl_row(&basis, &m, 0);
        assert!((r0[0].to_block().get(0, 0).re - M_TRUE).abs() < 1e-12);
        let r1 = weyl_row(&basis, &m, 1);
        assert!((r1[0].to_block().get(0, 0).re - 0.1458980338).abs() < 1e-9);

        let zero = WeylMatrix::scalar(cplx(0.0, 0.0));
        for k in 0..=4i64 {
            let want = basis.p_row(k)[0].neg();
            let got = weyl_row(&basis, &zero, k);
            assert!(got[0].sub(&want).norm() < 1e-12);
        }
    }

    #[test]
    fn weyl_col_examples() {
        let (_, basis) = free_jacobi_basis(5);
        let m = WeylMatrix::scalar(cplx(M_TRUE, 0.0));
        let c0 = weyl_col(&basis, &m, 0);
        assert!((c0[0].to_block().get(0, 0).re - M_TRUE).abs() < 1e-12);
        let c1 = weyl_col(&basis, &m, 1);
        assert!((c1[0].to_block().get(0, 0).re - 0.1458980338).abs() < 1e-9);

        let zero = WeylMatrix::scalar(cplx(0.0, 0.0));
        let got = weyl_col(&basis, &zero, 3);
        assert!(got[0].sub(&basis.p_plus_col(3)[0].neg()).norm() < 1e-12);
    }

    #[test]
    fn kernel_matches_finite_section_inverse() {
        let (op, basis) = free_jacobi_basis(30);
        let m = weyl::weyl_finite_section(&op, cplx(3.0, 0.0), 200).unwrap();
        let sec = bandop::finite_section(&op, cplx(3.0, 0.0), 200);
        let inv = bandop::section_inverse(&sec).unwrap();

        let e00 = kernel_entry(&basis, &m, 0, 0, 1e-6).unwrap();
        assert!((e00.to_block().get(0, 0).re - M_TRUE).abs() < 1e-10);

        let e10 = kernel_entry(&basis, &m, 1, 0, 1e-6).unwrap();
        let e01 = kernel_entry(&basis, &m, 0, 1, 1e-6).unwrap();
        assert!((e10.to_block().get(0, 0).re - 0.1458980338).abs() < 1e-9);
        assert!(e10.sub(&e01).norm() < 1e-12);

        for k in 0..=12usize {
            for n in 0..=12usize {
                if k + n > 14 {
                    continue; // conditioning of the product grows with k + n
                }
                let got = kernel_entry(&basis, &m, k, n, 1e-6).unwrap().to_block();
                let want = &inv[k * 200 + n];
                assert!(
                    (&got - want).norm() <= 1e-7 * (1.0 + want.norm()),
                    "mismatch at ({k},{n})"
                );
            }
        }
    }

    #[test]
    fn kernel_decay_ratio_on_certified_range() {
        let (_, basis) = free_jacobi_basis(20);
        let m = WeylMatrix::scalar(cplx(M_TRUE, 0.0));
        for k in 1..=14usize {
            let a = kernel_entry(&basis, &m, k, 0, 1e-6).unwrap().norm();
            let b = kernel_entry(&basis, &m, k - 1, 0, 1e-6).unwrap().norm();
            let ratio = a / b;
            assert!((ratio - M_TRUE).abs() < 1e-2, "k={k} ratio={ratio}");
        }
    }

    #[test]
    fn kernel_hermitian_symmetry() {
        let (_, basis) = free_jacobi_basis(16);
        let m = WeylMatrix::scalar(cplx(M_TRUE, 0.0));
        for k in 0..=10usize {
            for n in 0..=10usize {
                let a = kernel_entry(&basis, &m, k, n, 1e-6).unwrap().to_block();
                let b = kernel_entry(&basis, &m, n, k, 1e-6)
                    .unwrap()
                    .to_block()
                    .conj_transpose();
                assert!((&a - &b).norm() <= 1e-9 * (1.0 + a.norm()));
            }
        }
    }

    #[test]
    fn overlap_agrees_for_arbitrary_weyl_matrix() {
        for (seed, (n, r, s)) in [(0, (1, 1, 1)), (5, (2, 2, 1)), (6, (2, 1, 2))] {
            let op = testkit::seeded_operator(n, r, s, seed);
            let lambda = cplx::<f64>(2.5, 1.0).scale(op.bound());
            let basis = extend(&op, lambda, 20).unwrap();
            let wrong = WeylMatrix::user_supplied(
                n,
                r,
                s,
                (0..r * s).map(|_| Block::identity(n)).collect(),
            );
            for k in 0..=15usize {
                for nn in 0..=15usize {
                    if let Some(mis) = overlap_mismatch(&basis, &wrong, k, nn) {
                        assert!(mis <= 1e-9, "mismatch {mis} at ({k},{nn}) seed {seed}");
                    }
                }
            }
        }
    }

    #[test]
    fn overlap_check_can_be_forced_to_fire() {
        // rounding leaves nonzero branch disagreements; a zero tolerance
        // turns them into the error that signals corruption in real use
        let op = testkit::seeded_operator(2, 2, 1, 5);
        let lambda = cplx::<f64>(2.5, 1.0).scale(op.bound());
        let basis = extend(&op, lambda, 14).unwrap();
        let m = WeylMatrix::user_supplied(2, 2, 1, vec![Block::identity(2); 2]);
        let mut fired = 0usize;
        for k in 0..=10usize {
            for n in 0..=10usize {
                if overlap_mismatch(&basis, &m, k, n).is_some()
                    && matches!(
                        kernel_entry(&basis, &m, k, n, 0.0),
                        Err(Error::OverlapMismatch { .. })
                    )
                {
                    fired += 1;
                }
            }
        }
        assert!(fired > 0, "no overlap pair produced a nonzero disagreement");
    }

    #[test]
    fn window_smallest_extent_residual() {
        let (op, basis) = free_jacobi_basis(8);
        let m = WeylMatrix::scalar(cplx(M_TRUE, 0.0));
        let res = resolvent_residual(&op, &basis, &m, 0).unwrap();
        assert!(res < 1e-10, "residual {res}");
    }

    #[test]
    fn residual_is_noise_for_converged_weyl_matrix() {
        let (op, basis) = free_jacobi_basis(35);
        let m = weyl::weyl_finite_section(&op, cplx(3.0, 0.0), 400).unwrap();
        let res = resolvent_residual(&op, &basis, &m, 30).unwrap();
        assert!(res < 1e-9, "residual {res}");
    }

    #[test]
    fn residual_is_noise_for_any_weyl_matrix() {
        // the band identity holds formally for an arbitrary candidate; a
        // wrong candidate changes the kernel, not the identity
        let (op, basis) = free_jacobi_basis(35);
        let wrong = WeylMatrix::scalar(cplx(1.0, 0.0));
        let res = resolvent_residual(&op, &basis, &wrong, 30).unwrap();
        assert!(res < 1e-9, "residual {res}");
    }

    #[test]
    fn corner_identity_holds_at_random_lambdas() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for (seed, (n, r, s)) in [(0, (1, 1, 1)), (7, (2, 2, 1)), (8, (3, 1, 2))] {
            let op = testkit::seeded_operator(n, r, s, seed);
            for _ in 0..10 {
                let lambda = cplx(
                    4.0 * rng.gen::<f64>() - 2.0,
                    2.0 * rng.gen::<f64>() + 0.5,
                ).scale(op.bound());
                let basis = extend(&op, lambda, 25).unwrap();
                for nn in [s as i64, 5, 12, 20] {
                    let res = corner_identity_residual(&op, &basis, nn);
                    assert!(res < 1e-9, "corner residual {res} at n={nn}");
                }
            }
        }
    }

    #[test]
    fn window_certification_separates_signal_from_junk() {
        let (op, basis) = free_jacobi_basis(44);
        let m = weyl::weyl_finite_section(&op, cplx(3.0, 0.0), 200).unwrap();
        let window = KernelWindow::build(&op, &basis, &m, 40, 1e-6).unwrap();
        assert!(window.is_certified(0, 0, 8.0));
        assert!(window.is_certified(5, 5, 8.0));
        // far off-diagonal entries decay below the rounding floor
        assert!(!window.is_certified(0, 40, 8.0));
        assert!(window.max_overlap_mismatch() < 1e-9);
    }
}
