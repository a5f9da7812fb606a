//! Verifiable identities of the solution families and the decay-based
//! spectral classification.
//!
//! Three families of structural checks come with the theory:
//!
//! * a bilinear pairing of one forward and one dual solution that is
//!   constant in the window offset k;
//! * a block Wronskian identity: the stacked dual frame times the band
//!   coupling matrix times the stacked forward frame is the identity for
//!   every k ≥ 0;
//! * a coupling identity pairing the dual `Q⁺` frame with the kernel rows.
//!
//! Classification is decay-based: λ is accepted as a resolvent point when
//! the kernel window decays geometrically, `‖R_{k,n}‖ ≤ C q^{|n−k|}` with
//! q < 1, as measured by a least-squares fit of log-norms against the
//! distance to the diagonal. All residuals are measured relative to the
//! local term scale: the identities involve products of geometrically
//! growing solutions whose absolute rounding noise necessarily grows at the
//! same rate.

use num_complex::Complex;

use crate::bandop::BandOperator;
use crate::blockalg::{sum_scaled, Block, ScaledBlock};
use crate::kernel::{weyl_row, KernelWindow, WeylMatrix};
use crate::recurrence::{ghost_entry, DualSelector, ForwardSelector, SolutionBasis};
use crate::scalar::{real, Scalar};

/// Spectral classification of one λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Resolvent,
    NotResolvent,
    Inconclusive,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Classification::Resolvent => "resolvent",
            Classification::NotResolvent => "not_resolvent",
            Classification::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Fitted geometric decay of a kernel window.
#[derive(Debug, Clone)]
pub struct DecayFit<T: Scalar> {
    pub lambda: Complex<T>,
    pub q_hat: T,
    pub c_hat: T,
    pub rms_residual: T,
    pub classification: Classification,
    pub points_used: usize,
}

/// Tail growth/decay rates per solution column, from scaled-block exponents.
#[derive(Debug, Clone)]
pub struct GrowthReport<T: Scalar> {
    pub rho_q: Vec<T>,
    pub rho_r: Vec<T>,
    pub rho_q_plus: Vec<T>,
    pub rho_r_plus: Vec<T>,
}

impl<T: Scalar> GrowthReport<T> {
    pub fn min_rho_q(&self) -> T {
        self.rho_q
            .iter()
            .chain(&self.rho_q_plus)
            .fold(T::infinity(), |a, &b| a.min(b))
    }

    pub fn max_rho_r(&self) -> T {
        self.rho_r
            .iter()
            .chain(&self.rho_r_plus)
            .fold(T::zero(), |a, &b| a.max(b))
    }

    /// Finite-depth form of the resolvent-set growth dichotomy: every kernel
    /// column decays and every `Q` column grows, with `margin` slack.
    pub fn coherent_with_resolvent(&self, margin: T) -> bool {
        self.max_rho_r() < T::one() - margin && self.min_rho_q() > T::one() + margin
    }
}

/// The pairing
/// `F(k) = Σ_{i<s} Σ_{j=i+1..s} Y⁺_{k+i} A_{k+i,k+i-j} Y_{k+i-j}
///       − Σ_{i<r} Σ_{j=i+1..r} Y⁺_{k+i-j} A_{k+i-j,k+i} Y_{k+i}`
/// with ghost coefficients at negative indices. Constant in k for any pair
/// of one forward and one dual solution; the value together with the largest
/// term magnitude (log2) so deviations can be judged against the scale the
/// arithmetic actually ran at.
pub fn bilinear_invariant_scaled<T: Scalar>(
    op: &BandOperator<T>,
    basis: &SolutionBasis<T>,
    forward: ForwardSelector,
    dual: DualSelector,
    k: i64,
) -> (ScaledBlock<T>, T) {
    let n = basis.block_order();
    let (r, s) = (basis.upper_bandwidth() as i64, basis.lower_bandwidth() as i64);
    assert!(k >= 0);
    let mut terms: Vec<ScaledBlock<T>> = Vec::new();
    for i in 0..s {
        for j in (i + 1)..=s {
            let a = ghost_entry(op, k + i, k + i - j);
            if a.is_zero() {
                continue;
            }
            terms.push(
                basis
                    .dual_value(dual, k + i)
                    .mul_block_right(&a)
                    .mul(basis.forward_value(forward, k + i - j)),
            );
        }
    }
    for i in 0..r {
        for j in (i + 1)..=r {
            let a = ghost_entry(op, k + i - j, k + i);
            if a.is_zero() {
                continue;
            }
            terms.push(
                basis
                    .dual_value(dual, k + i - j)
                    .mul_block_right(&a)
                    .mul(basis.forward_value(forward, k + i))
                    .neg(),
            );
        }
    }
    let scale = terms
        .iter()
        .map(|t| t.log2_norm())
        .fold(T::neg_infinity(), T::max);
    (sum_scaled(n, terms.iter()), scale)
}

/// Plain-block value of the pairing (callers watching the scale use the
/// `_scaled` variant).
pub fn bilinear_invariant<T: Scalar>(
    op: &BandOperator<T>,
    basis: &SolutionBasis<T>,
    forward: ForwardSelector,
    dual: DualSelector,
    k: i64,
) -> Block<T> {
    bilinear_invariant_scaled(op, basis, forward, dual, k).0.to_block()
}

/// Largest relative deviation of `F(k)` from `F(0)` over `1 ..= k_top`, for
/// one selector pair. The denominator carries both the reference value and
/// the running term scale.
pub fn bilinear_invariant_drift<T: Scalar>(
    op: &BandOperator<T>,
    basis: &SolutionBasis<T>,
    forward: ForwardSelector,
    dual: DualSelector,
    k_top: i64,
) -> T {
    let _n = basis.block_order();
    let (f0, scale0) = bilinear_invariant_scaled(op, basis, forward, dual, 0);
    let f0_norm = f0.norm();
    let mut worst = T::zero();
    for k in 1..=k_top {
        let (fk, scale_k) = bilinear_invariant_scaled(op, basis, forward, dual, k);
        let diff = fk.sub(&f0);
        let scale = scale_k.max(scale0).max(T::zero());
        let denom_log2 = (T::one() + f0_norm).log2().max(scale);
        let rel = (diff.log2_norm() - denom_log2).exp2();
        worst = worst.max(rel);
    }
    worst
}

/// Worst drift over every forward/dual selector pairing.
pub fn bilinear_invariant_max_drift<T: Scalar>(
    op: &BandOperator<T>,
    basis: &SolutionBasis<T>,
    k_top: i64,
) -> T {
    let mut worst = T::zero();
    for fwd in basis.forward_selectors() {
        for dual in basis.dual_selectors() {
            worst = worst.max(bilinear_invariant_drift(op, basis, fwd, dual, k_top));
        }
    }
    worst
}

/// Relative residual of the block Wronskian identity at offset k:
/// the stacked dual frame over `k-r ..= k+s-1`, times the antidiagonal band
/// coupling matrix, times the stacked forward frame over `k-s ..= k+r-1`,
/// equals the (r+s)-block identity.
pub fn wronskian_residual<T: Scalar>(
    op: &BandOperator<T>,
    basis: &SolutionBasis<T>,
    k: i64,
) -> T {
    let n = basis.block_order();
    let (r, s) = (basis.upper_bandwidth(), basis.lower_bandwidth());
    let (ri, si) = (r as i64, s as i64);
    let total = r + s;
    assert!(k >= 0);

    // left[row][c]: rows are the r P⁺ components then the s Q⁺ components;
    // columns run over indices k-r .. k+s-1
    let left: Vec<Vec<ScaledBlock<T>>> = (0..total)
        .map(|row| {
            (0..total)
                .map(|c| {
                    let idx = k - ri + c as i64;
                    if row < r {
                        basis.p_plus_col(idx)[row].clone()
                    } else {
                        basis.q_plus_col(idx)[row - r].clone()
                    }
                })
                .collect()
        })
        .collect();

    // mid[a][b]: [[0, -A_{k-r:k-1, k:k+r-1}], [A_{k:k+s-1, k-s:k-1}, 0]]
    let mid: Vec<Vec<Block<T>>> = (0..total)
        .map(|a| {
            (0..total)
                .map(|b| {
                    if a < r && b >= s {
                        -&ghost_entry(op, k - ri + a as i64, k + (b - s) as i64)
                    } else if a >= r && b < s {
                        ghost_entry(op, k + (a - r) as i64, k - si + b as i64)
                    } else {
                        Block::zeros(n)
                    }
                })
                .collect()
        })
        .collect();

    // right[c][col]: rows over indices k-s .. k+r-1; columns are the r Q
    // components then the s negated P components
    let right: Vec<Vec<ScaledBlock<T>>> = (0..total)
        .map(|c| {
            let idx = k - si + c as i64;
            (0..total)
                .map(|col| {
                    if col < r {
                        basis.q_row(idx)[col].clone()
                    } else {
                        basis.p_row(idx)[col - r].neg()
                    }
                })
                .collect()
        })
        .collect();

    // left · mid
    let mut lm: Vec<Vec<ScaledBlock<T>>> = vec![vec![ScaledBlock::zero(n); total]; total];
    for row in 0..total {
        for b in 0..total {
            let terms: Vec<ScaledBlock<T>> = (0..total)
                .filter(|&a| !mid[a][b].is_zero())
                .map(|a| left[row][a].mul_block_right(&mid[a][b]))
                .collect();
            lm[row][b] = sum_scaled(n, terms.iter());
        }
    }

    // (left · mid) · right, tracking the largest product magnitude
    let mut scale_l2 = T::zero();
    let mut worst = T::zero();
    for row in 0..total {
        for col in 0..total {
            let prods: Vec<ScaledBlock<T>> =
                (0..total).map(|c| lm[row][c].mul(&right[c][col])).collect();
            for p in &prods {
                scale_l2 = scale_l2.max(p.log2_norm());
            }
            let mut terms = prods;
            if row == col {
                terms.push(ScaledBlock::from_block(Block::scalar_matrix(
                    n,
                    -Complex::new(T::one(), T::zero()),
                )));
            }
            let defect = sum_scaled(n, terms.iter());
            worst = worst.max((defect.log2_norm() - scale_l2.max(T::zero())).exp2());
        }
    }
    worst
}

/// Relative residual of the dual coupling identity at offset k: the stacked
/// `Q⁺` frame, times the band coupling matrix, times the stacked kernel rows
/// `R_{k-s .. k+r-1}`, equals the s-block identity — for any candidate Weyl
/// matrix.
pub fn dual_coupling_residual<T: Scalar>(
    op: &BandOperator<T>,
    basis: &SolutionBasis<T>,
    weyl: &WeylMatrix<T>,
    k: i64,
) -> T {
    let n = basis.block_order();
    let (r, s) = (basis.upper_bandwidth(), basis.lower_bandwidth());
    let (ri, si) = (r as i64, s as i64);
    let total = r + s;
    assert!(k >= 0);

    let q_plus_rows: Vec<Vec<ScaledBlock<T>>> = (0..s)
        .map(|row| {
            (0..total)
                .map(|c| basis.q_plus_col(k - ri + c as i64)[row].clone())
                .collect()
        })
        .collect();
    let r_rows: Vec<Vec<ScaledBlock<T>>> = (0..total)
        .map(|c| weyl_row(basis, weyl, k - si + c as i64))
        .collect();
    // the assembled kernel rows carry a cancellation floor of
    // eps·(‖𝔐‖‖Q‖ + ‖P‖); the identity can only hold relative to that scale
    let m_l2 = weyl.norm().max(T::min_positive_value()).log2();
    let row_combo: Vec<T> = (0..total)
        .map(|c| {
            let idx = k - si + c as i64;
            let q_l2 = basis
                .q_row(idx)
                .iter()
                .map(|b| b.log2_norm())
                .fold(T::neg_infinity(), T::max);
            let p_l2 = basis
                .p_row(idx)
                .iter()
                .map(|b| b.log2_norm())
                .fold(T::neg_infinity(), T::max);
            (m_l2 + q_l2).max(p_l2) + T::one()
        })
        .collect();

    let mut scale_l2 = T::zero();
    let mut worst = T::zero();
    for row in 0..s {
        // (Q⁺ frame · mid) in one pass: mid[a][b] as in the Wronskian identity
        let mut qm: Vec<ScaledBlock<T>> = Vec::with_capacity(total);
        for b in 0..total {
            let mut terms = Vec::new();
            for a in 0..total {
                let coeff = if a < r && b >= s {
                    -&ghost_entry(op, k - ri + a as i64, k + (b - s) as i64)
                } else if a >= r && b < s {
                    ghost_entry(op, k + (a - r) as i64, k - si + b as i64)
                } else {
                    continue;
                };
                if coeff.is_zero() {
                    continue;
                }
                terms.push(q_plus_rows[row][a].mul_block_right(&coeff));
            }
            qm.push(sum_scaled(n, terms.iter()));
        }
        for col in 0..s {
            let prods: Vec<ScaledBlock<T>> =
                (0..total).map(|c| qm[c].mul(&r_rows[c][col])).collect();
            for (c, p) in prods.iter().enumerate() {
                scale_l2 = scale_l2
                    .max(p.log2_norm())
                    .max(qm[c].log2_norm() + row_combo[c]);
            }
            let mut terms = prods;
            if row == col {
                terms.push(ScaledBlock::from_block(Block::scalar_matrix(
                    n,
                    -Complex::new(T::one(), T::zero()),
                )));
            }
            let defect = sum_scaled(n, terms.iter());
            worst = worst.max((defect.log2_norm() - scale_l2.max(T::zero())).exp2());
        }
    }
    worst
}

/// Least-squares fit of `log ‖R_{k,n}‖` against the distance `d = |n−k|`.
///
/// Per distance the window's certified entries are aggregated by max,
/// mirroring the uniform bound `C q^d`. Entries below their rounding floor
/// are excluded: past the f64 information horizon the stored digits are
/// forward-instability noise that grows with d and would reverse the fitted
/// slope far outside the spectrum. When the preferred range `[W/3, W]`
/// retains too few certified distances the fit falls back to the certified
/// range; with no certified signal at all the window is treated as fully
/// decayed (λ far outside: `q̂ = 0`, classified resolvent).
pub fn decay_fit<T: Scalar>(
    window: &KernelWindow<T>,
    eps_class: T,
    fit_tol: T,
) -> DecayFit<T> {
    let w = window.extent();
    assert!(w >= 1, "decay fit needs a nontrivial window");
    let margin = real::<T>(crate::defaults::CERT_MARGIN_BITS);

    let mut per_distance: Vec<Option<T>> = vec![None; w + 1];
    for k in 0..=w {
        for n in 0..=w {
            if !window.is_certified(k, n, margin) {
                continue;
            }
            let l2 = window.log2_norm(k, n);
            if l2 == T::neg_infinity() {
                continue;
            }
            let d = k.abs_diff(n);
            per_distance[d] = Some(match per_distance[d] {
                Some(cur) => cur.max(l2),
                None => l2,
            });
        }
    }

    let mut certified: Vec<(usize, T)> = per_distance
        .iter()
        .enumerate()
        .filter_map(|(d, v)| v.map(|l2| (d, l2)))
        .collect();
    // The largest certified distances are attained only near the window
    // corner or the information horizon, where the maximizing entry sits at
    // small min(k, n) and carries a different prefactor than the bulk; a
    // short tail trim keeps the fitted line homogeneous.
    let trim = certified.len().saturating_sub(3).min(5);
    certified.truncate(certified.len() - trim);

    let max_l2 = certified
        .iter()
        .map(|&(_, l2)| l2)
        .fold(T::neg_infinity(), T::max);
    if certified.is_empty() || max_l2 < real::<T>(-900.0) {
        // everything at or below underflow: total decay
        return DecayFit {
            lambda: window.lambda(),
            q_hat: T::zero(),
            c_hat: T::min_positive_value(),
            rms_residual: T::zero(),
            classification: Classification::Resolvent,
            points_used: 0,
        };
    }

    let lo = w.div_ceil(3);
    let mut pts: Vec<(T, T)> = certified
        .iter()
        .filter(|&&(d, _)| d >= lo && d >= 1)
        .map(|&(d, l2)| (real::<T>(d as f64), l2 * real::<T>(std::f64::consts::LN_2)))
        .collect();
    if pts.len() < 4 {
        pts = certified
            .iter()
            .filter(|&&(d, _)| d >= 1)
            .map(|&(d, l2)| (real::<T>(d as f64), l2 * real::<T>(std::f64::consts::LN_2)))
            .collect();
    }
    if pts.len() < 2 {
        // decay so fast that only the immediate neighborhood of the diagonal
        // carries certified digits: fall back to the full certified set, and
        // when even that is a single distance the kernel is gone within one
        // step of the diagonal
        pts = certified
            .iter()
            .map(|&(d, l2)| (real::<T>(d as f64), l2 * real::<T>(std::f64::consts::LN_2)))
            .collect();
        if pts.len() < 2 {
            return DecayFit {
                lambda: window.lambda(),
                q_hat: T::zero(),
                c_hat: max_l2.exp2(),
                rms_residual: T::zero(),
                classification: Classification::Resolvent,
                points_used: pts.len(),
            };
        }
    }

    let (slope, intercept) = linear_fit(&pts);
    let mut ss = T::zero();
    for &(x, y) in &pts {
        let e = y - (slope * x + intercept);
        ss = ss + e * e;
    }
    let rms = (ss / real::<T>(pts.len() as f64)).sqrt();
    let q_hat = slope.exp();
    let c_hat = intercept.exp();

    let classification = if q_hat <= T::one() - eps_class && rms <= fit_tol {
        Classification::Resolvent
    } else if q_hat >= T::one() + eps_class {
        Classification::NotResolvent
    } else {
        Classification::Inconclusive
    };

    DecayFit {
        lambda: window.lambda(),
        q_hat,
        c_hat,
        rms_residual: rms,
        classification,
        points_used: pts.len(),
    }
}

fn linear_fit<T: Scalar>(pts: &[(T, T)]) -> (T, T) {
    let n = real::<T>(pts.len() as f64);
    let (mut sx, mut sy, mut sxx, mut sxy) = (T::zero(), T::zero(), T::zero(), T::zero());
    for &(x, y) in pts {
        sx = sx + x;
        sy = sy + y;
        sxx = sxx + x * x;
        sxy = sxy + x * y;
    }
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Slope-regression rate `exp(d ln‖Y_k‖ / dk)` over an index window,
/// skipping exactly-zero values. Rates from k-th roots of norms carry an
/// `exp(ln C / k)` prefactor bias that a slope does not.
fn regression_rate<T: Scalar>(log2_norms: &[(i64, T)]) -> T {
    let pts: Vec<(T, T)> = log2_norms
        .iter()
        .filter(|&&(_, l2)| l2 != T::neg_infinity())
        .map(|&(k, l2)| {
            (
                real::<T>(k as f64),
                l2 * real::<T>(std::f64::consts::LN_2),
            )
        })
        .collect();
    if pts.len() < 2 {
        // constant or all-zero tail: rate 1 by convention for bounded data,
        // 0 when there is nothing at all
        return if log2_norms.is_empty() { T::zero() } else { T::one() };
    }
    let (slope, _) = linear_fit(&pts);
    slope.exp()
}

/// Tail growth/decay rates per column family. `Q` families are measured on
/// the trailing `tail_fraction` of the computed range; the decaying kernel
/// families are measured on their certified leading range, which is where
/// their digits still carry information.
pub fn growth_report<T: Scalar>(
    basis: &SolutionBasis<T>,
    weyl: &WeylMatrix<T>,
    tail_fraction: f64,
) -> GrowthReport<T> {
    let (r, s) = (basis.upper_bandwidth(), basis.lower_bandwidth());
    let k_top = basis.k_max().min(basis.k_max_dual());
    assert!(k_top >= 10, "growth report needs a deeper basis");
    let tail_len = ((k_top as f64) * tail_fraction).round() as i64;
    let tail_start = (k_top - tail_len).max(1);

    let rho_q: Vec<T> = (0..r)
        .map(|i| {
            let data: Vec<(i64, T)> = (tail_start..=k_top)
                .map(|k| (k, basis.q_row(k)[i].log2_norm()))
                .collect();
            regression_rate(&data)
        })
        .collect();
    let rho_q_plus: Vec<T> = (0..s)
        .map(|j| {
            let data: Vec<(i64, T)> = (tail_start..=k_top)
                .map(|k| (k, basis.q_plus_col(k)[j].log2_norm()))
                .collect();
            regression_rate(&data)
        })
        .collect();

    let eps_l2 = T::epsilon().log2();
    let margin = real::<T>(crate::defaults::CERT_MARGIN_BITS);
    let m_l2 = weyl.norm().max(T::min_positive_value()).log2();

    let fwd_floor = |k: i64| -> T {
        let a = m_l2
            + basis
                .q_row(k)
                .iter()
                .map(|b| b.log2_norm())
                .fold(T::neg_infinity(), T::max);
        let b = basis
            .p_row(k)
            .iter()
            .map(|b| b.log2_norm())
            .fold(T::neg_infinity(), T::max);
        eps_l2 + a.max(b) + T::one()
    };
    let dual_floor = |k: i64| -> T {
        let a = m_l2
            + basis
                .q_plus_col(k)
                .iter()
                .map(|b| b.log2_norm())
                .fold(T::neg_infinity(), T::max);
        let b = basis
            .p_plus_col(k)
            .iter()
            .map(|b| b.log2_norm())
            .fold(T::neg_infinity(), T::max);
        eps_l2 + a.max(b) + T::one()
    };

    // uncertified kernel values are forward-instability junk that grows at
    // the Q rate; falling back to them is only ever right when nothing at
    // all certifies (which does not happen for a usable candidate)
    let rho_r: Vec<T> = (0..s)
        .map(|j| {
            let mut data: Vec<(i64, T)> = Vec::new();
            for k in 1..=k_top {
                let l2 = weyl_row(basis, weyl, k)[j].log2_norm();
                if l2 >= fwd_floor(k) + margin {
                    data.push((k, l2));
                }
            }
            if data.len() < 2 {
                data = (1..=k_top)
                    .map(|k| (k, weyl_row(basis, weyl, k)[j].log2_norm()))
                    .collect();
            }
            regression_rate(&data)
        })
        .collect();
    let rho_r_plus: Vec<T> = (0..r)
        .map(|i| {
            let mut data: Vec<(i64, T)> = Vec::new();
            for k in 1..=k_top {
                let l2 = crate::kernel::weyl_col(basis, weyl, k)[i].log2_norm();
                if l2 >= dual_floor(k) + margin {
                    data.push((k, l2));
                }
            }
            if data.len() < 2 {
                data = (1..=k_top)
                    .map(|k| (k, crate::kernel::weyl_col(basis, weyl, k)[i].log2_norm()))
                    .collect();
            }
            regression_rate(&data)
        })
        .collect();

    GrowthReport {
        rho_q,
        rho_r,
        rho_q_plus,
        rho_r_plus,
    }
}
