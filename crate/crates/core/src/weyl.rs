//! Weyl matrix estimation from finite sections, with truncation-convergence
//! control.
//!
//! The Weyl matrix of a band operator is the top-left r×s block corner of
//! the resolvent `(λI − A)⁻¹`. Away from the spectrum the inverse of a band
//! matrix decays geometrically away from its diagonal, so the corner of a
//! principal finite section converges geometrically in the section size.
//! The estimator inverts sections of doubling size and accepts when two
//! consecutive estimates agree blockwise; the doubling gap is itself a
//! reliable error proxy for geometric convergence.

use num_complex::Complex;
use num_traits::Zero;

use crate::bandop::BandOperator;
use crate::blockalg::Block;
use crate::error::{Error, Result};
use crate::kernel::WeylMatrix;
use crate::scalar::{to_f64, Scalar};

/// Top-left r×s corner of the inverse of the M-block section of `λI − A`.
///
/// Solves for the leading `s·N` columns of the inverse through a banded LU
/// with partial pivoting; the section itself is never materialized densely.
pub fn weyl_finite_section<T: Scalar>(
    op: &BandOperator<T>,
    lambda: Complex<T>,
    m: usize,
) -> Result<WeylMatrix<T>> {
    let (r, s) = (op.upper_bandwidth(), op.lower_bandwidth());
    assert!(m >= 4 * (r + s), "section too small for a corner estimate");
    let nb = op.block_order();
    let lu = crate::bandop::BandedLu::from_operator(op, lambda, m)?;
    let n_total = m * nb;

    let mut blocks = vec![Block::zeros(nb); r * s];
    let mut col = vec![Complex::<T>::zero(); n_total];
    for jb in 0..s {
        for j_in in 0..nb {
            col.iter_mut().for_each(|z| *z = Complex::zero());
            col[jb * nb + j_in] = Complex::new(T::one(), T::zero());
            lu.solve(&mut col);
            for ib in 0..r {
                for i_in in 0..nb {
                    blocks[ib * s + jb].set(i_in, j_in, col[ib * nb + i_in]);
                }
            }
        }
    }
    Ok(WeylMatrix::from_section_estimate(nb, r, s, blocks, m, None))
}

/// Doubling-ladder estimate: compare sizes `M0` and `2·M0`, accept when the
/// blockwise gap is at most `tol`, otherwise keep doubling up to `16·M0`.
///
/// Fails with [`Error::NoConvergence`] when the gap never settles, which is
/// the numerical signature of λ at or near the spectrum.
pub fn weyl_converged<T: Scalar>(
    op: &BandOperator<T>,
    lambda: Complex<T>,
    m0: usize,
    tol: T,
) -> Result<WeylMatrix<T>> {
    assert!(tol > T::zero());
    let mut prev = weyl_finite_section(op, lambda, m0)?;
    let mut m = 2 * m0;
    loop {
        let cur = weyl_finite_section(op, lambda, m)?;
        let gap = cur.max_block_diff(&prev);
        if gap <= tol {
            let blocks = (0..op.upper_bandwidth())
                .flat_map(|i| (0..op.lower_bandwidth()).map(move |j| (i, j)))
                .map(|(i, j)| cur.block(i, j).clone())
                .collect();
            return Ok(WeylMatrix::from_section_estimate(
                op.block_order(),
                op.upper_bandwidth(),
                op.lower_bandwidth(),
                blocks,
                m,
                Some(gap),
            ));
        }
        if m >= 16 * m0 {
            return Err(Error::NoConvergence {
                m_last: m,
                gap: to_f64(gap),
            });
        }
        prev = cur;
        m *= 2;
    }
}
