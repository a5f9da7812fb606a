//! Dense N×N complex blocks and exponent-scaled blocks.
//!
//! A [`Block`] is the scalar of the whole theory: every coefficient of the
//! band matrix and every solution value is one N×N complex matrix. The
//! polynomial solutions grow geometrically away from the spectrum, which
//! overflows doubles near index ~700 already for scalar three-diagonal
//! operators, so recurrence state is kept as [`ScaledBlock`]s: a mantissa
//! block with Frobenius norm in [1/2, 2) times a power of two.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::scalar::{real, to_f64, Scalar};

/// Square complex matrix of a fixed small order, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T: Scalar> {
    order: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> Block<T> {
    pub fn zeros(order: usize) -> Self {
        assert!(order >= 1, "block order must be positive");
        Block {
            order,
            data: vec![Complex::zero(); order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut b = Block::zeros(order);
        for i in 0..order {
            b.data[i * order + i] = Complex::one();
        }
        b
    }

    /// Identity scaled by a complex factor.
    pub fn scalar_matrix(order: usize, z: Complex<T>) -> Self {
        let mut b = Block::zeros(order);
        for i in 0..order {
            b.data[i * order + i] = z;
        }
        b
    }

    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut b = Block::zeros(order);
        for i in 0..order {
            for j in 0..order {
                b.data[i * order + j] = f(i, j);
            }
        }
        b
    }

    /// 1×1 block from a complex value.
    pub fn scalar(z: Complex<T>) -> Self {
        Block {
            order: 1,
            data: vec![z],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.order + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: Complex<T>) {
        self.data[i * self.order + j] = z;
    }

    pub fn entries(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.is_zero())
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Frobenius norm. This is the matrix norm used throughout: it is cheap,
    /// submultiplicative, and equivalent to any other norm up to constants
    /// depending only on the fixed block order, so decay criteria are
    /// unaffected by the choice.
    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    fn norm_sqr(&self) -> T {
        let mut acc = T::zero();
        for z in &self.data {
            acc = acc + z.norm_sqr();
        }
        acc
    }

    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for z in &self.data {
            let a = z.norm();
            if a > m {
                m = a;
            }
        }
        m
    }

    pub fn conj_transpose(&self) -> Block<T> {
        Block::from_fn(self.order, |i, j| self.get(j, i).conj())
    }

    pub fn scale(&self, z: Complex<T>) -> Block<T> {
        Block {
            order: self.order,
            data: self.data.iter().map(|w| w * z).collect(),
        }
    }

    /// Multiply every entry by 2^e. Exact in binary floating point as long as
    /// no entry over/underflows; large shifts are applied in chunks so the
    /// intermediate power of two itself stays representable.
    pub fn ldexp(&self, e: i64) -> Block<T> {
        let mut out = self.clone();
        let mut rem = e;
        let two = real::<T>(2.0);
        while rem != 0 {
            let step = rem.clamp(-512, 512);
            let factor = two.powi(step as i32);
            for z in &mut out.data {
                *z = Complex::new(z.re * factor, z.im * factor);
            }
            rem -= step;
        }
        out
    }

    fn add_assign(&mut self, other: &Block<T>) {
        debug_assert_eq!(self.order, other.order);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn mul_block(&self, other: &Block<T>) -> Block<T> {
        let n = self.order;
        debug_assert_eq!(n, other.order);
        let mut out = Block::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// Inverse by partially pivoted Gauss-Jordan elimination, with a
    /// Frobenius condition estimate `‖b‖·‖b⁻¹‖`.
    ///
    /// Fails with [`Error::SingularBlock`] when the estimate exceeds
    /// `cond_cap`, which is how a numerical violation of the band
    /// invertibility requirement surfaces.
    pub fn inverse(&self, cond_cap: T) -> Result<(Block<T>, T)> {
        let n = self.order;
        let mut a = self.data.clone();
        let mut inv = Block::identity(n);

        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].norm();
            for row in col + 1..n {
                let mag = a[row * n + col].norm();
                if mag > best {
                    best = mag;
                    piv = row;
                }
            }
            if best.is_zero() || !best.is_finite() {
                return Err(Error::SingularBlock {
                    index: None,
                    cond: f64::INFINITY,
                    cap: to_f64(cond_cap),
                });
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                    inv.data.swap(col * n + j, piv * n + j);
                }
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] = a[col * n + j] / d;
                inv.data[col * n + j] = inv.data[col * n + j] / d;
            }
            for row in 0..n {
                if row == col {
                    continue;
                }
                let f = a[row * n + col];
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    a[row * n + j] = a[row * n + j] - f * a[col * n + j];
                    inv.data[row * n + j] = inv.data[row * n + j] - f * inv.data[col * n + j];
                }
            }
        }

        let cond = self.norm() * inv.norm();
        if !(cond <= cond_cap) {
            return Err(Error::SingularBlock {
                index: None,
                cond: to_f64(cond),
                cap: to_f64(cond_cap),
            });
        }
        Ok((inv, cond))
    }
}

impl<T: Scalar> Add for &Block<T> {
    type Output = Block<T>;
    fn add(self, rhs: &Block<T>) -> Block<T> {
        let mut out = self.clone();
        out.add_assign(rhs);
        out
    }
}

impl<T: Scalar> Sub for &Block<T> {
    type Output = Block<T>;
    fn sub(self, rhs: &Block<T>) -> Block<T> {
        debug_assert_eq!(self.order, rhs.order);
        Block {
            order: self.order,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl<T: Scalar> Mul for &Block<T> {
    type Output = Block<T>;
    fn mul(self, rhs: &Block<T>) -> Block<T> {
        self.mul_block(rhs)
    }
}

impl<T: Scalar> Neg for &Block<T> {
    type Output = Block<T>;
    fn neg(self) -> Block<T> {
        Block {
            order: self.order,
            data: self.data.iter().map(|z| -z).collect(),
        }
    }
}

/// Block with a separate base-2 exponent: the represented value is
/// `mantissa × 2^exponent`. A normalized mantissa is zero or has Frobenius
/// norm in [1/2, 2); products add exponents exactly, so geometric growth or
/// decay of any rate is representable.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledBlock<T: Scalar> {
    mantissa: Block<T>,
    exponent: i64,
}

impl<T: Scalar> ScaledBlock<T> {
    pub fn zero(order: usize) -> Self {
        ScaledBlock {
            mantissa: Block::zeros(order),
            exponent: 0,
        }
    }

    pub fn identity(order: usize) -> Self {
        ScaledBlock {
            mantissa: Block::identity(order),
            exponent: 0,
        }
    }

    pub fn from_block(b: Block<T>) -> Self {
        ScaledBlock {
            mantissa: b,
            exponent: 0,
        }
        .normalize()
    }

    pub fn from_parts(mantissa: Block<T>, exponent: i64) -> Self {
        ScaledBlock { mantissa, exponent }.normalize()
    }

    pub fn order(&self) -> usize {
        self.mantissa.order()
    }

    pub fn mantissa(&self) -> &Block<T> {
        &self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    /// Restore the mantissa invariant without changing the represented value.
    /// The zero block maps to exponent 0.
    pub fn normalize(mut self) -> Self {
        let norm = self.mantissa.norm();
        if norm.is_zero() {
            self.exponent = 0;
            return self;
        }
        let shift = norm.log2().floor().to_i64().expect("finite norm exponent");
        if shift != 0 {
            self.mantissa = self.mantissa.ldexp(-shift);
            self.exponent += shift;
        }
        self
    }

    /// log2 of the Frobenius norm of the represented value; `-inf` for zero.
    pub fn log2_norm(&self) -> T {
        if self.is_zero() {
            return T::neg_infinity();
        }
        self.mantissa.norm().log2() + real::<T>(self.exponent as f64)
    }

    /// Norm of the represented value, saturating to infinity on overflow.
    pub fn norm(&self) -> T {
        let l = self.log2_norm();
        if l == T::neg_infinity() {
            return T::zero();
        }
        l.exp2()
    }

    /// Represented value as a plain block. Overflows to ±inf entries if the
    /// exponent is out of range for `T`; callers check `log2_norm` first when
    /// that matters.
    pub fn to_block(&self) -> Block<T> {
        self.mantissa.ldexp(self.exponent)
    }

    /// Mantissa re-expressed at the given exponent.
    pub fn mantissa_at(&self, exponent: i64) -> Block<T> {
        self.mantissa.ldexp(self.exponent - exponent)
    }

    pub fn scale(&self, z: Complex<T>) -> ScaledBlock<T> {
        ScaledBlock {
            mantissa: self.mantissa.scale(z),
            exponent: self.exponent,
        }
        .normalize()
    }

    pub fn neg(&self) -> ScaledBlock<T> {
        ScaledBlock {
            mantissa: -&self.mantissa,
            exponent: self.exponent,
        }
    }

    pub fn mul(&self, rhs: &ScaledBlock<T>) -> ScaledBlock<T> {
        ScaledBlock {
            mantissa: self.mantissa.mul_block(&rhs.mantissa),
            exponent: self.exponent + rhs.exponent,
        }
        .normalize()
    }

    pub fn mul_block_right(&self, rhs: &Block<T>) -> ScaledBlock<T> {
        ScaledBlock {
            mantissa: self.mantissa.mul_block(rhs),
            exponent: self.exponent,
        }
        .normalize()
    }

    pub fn mul_block_left(&self, lhs: &Block<T>) -> ScaledBlock<T> {
        ScaledBlock {
            mantissa: lhs.mul_block(&self.mantissa),
            exponent: self.exponent,
        }
        .normalize()
    }

    pub fn add(&self, rhs: &ScaledBlock<T>) -> ScaledBlock<T> {
        sum_scaled(self.order(), [self.clone(), rhs.clone()].iter())
    }

    pub fn sub(&self, rhs: &ScaledBlock<T>) -> ScaledBlock<T> {
        self.add(&rhs.neg())
    }
}

/// Sum of scaled blocks, accumulated at the largest exponent present so the
/// mantissa cancellation happens in one aligned frame.
pub fn sum_scaled<'a, T: Scalar>(
    order: usize,
    terms: impl Iterator<Item = &'a ScaledBlock<T>>,
) -> ScaledBlock<T> {
    let terms: Vec<&ScaledBlock<T>> = terms.collect();
    let max_exp = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| t.exponent)
        .max();
    let max_exp = match max_exp {
        Some(e) => e,
        None => return ScaledBlock::zero(order),
    };
    let mut acc = Block::zeros(order);
    for t in terms {
        if t.is_zero() {
            continue;
        }
        acc.add_assign(&t.mantissa_at(max_exp));
    }
    ScaledBlock {
        mantissa: acc,
        exponent: max_exp,
    }
    .normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b2(entries: [[f64; 2]; 2]) -> Block<f64> {
        Block::from_fn(2, |i, j| cplx(entries[i][j], 0.0))
    }

    fn random_block(rng: &mut ChaCha8Rng, n: usize) -> Block<f64> {
        Block::from_fn(n, |_, _| cplx(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn norm_zero_block() {
        assert_eq!(Block::<f64>::zeros(2).norm(), 0.0);
    }

    #[test]
    fn norm_identity_is_sqrt_order() {
        let e = Block::<f64>::identity(2);
        assert!((e.norm() - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn norm_diag_3_4_is_5() {
        let b = b2([[3.0, 0.0], [0.0, 4.0]]);
        assert!((b.norm() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_identity() {
        let e = Block::<f64>::identity(2);
        let (inv, cond) = e.inverse(1e8).unwrap();
        assert_eq!(inv, e);
        assert!((cond - 2.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_diagonal() {
        let b = b2([[2.0, 0.0], [0.0, 4.0]]);
        let (inv, _) = b.inverse(1e8).unwrap();
        assert!((inv.get(0, 0).re - 0.5).abs() < 1e-15);
        assert!((inv.get(1, 1).re - 0.25).abs() < 1e-15);
        assert!(inv.get(0, 1).norm() < 1e-15 && inv.get(1, 0).norm() < 1e-15);
    }

    #[test]
    fn inverse_unit_upper_triangular() {
        let b = b2([[1.0, 1.0], [0.0, 1.0]]);
        let (inv, _) = b.inverse(1e8).unwrap();
        let prod = &b * &inv;
        assert!((&prod - &Block::identity(2)).norm() < 1e-15);
        assert!((inv.get(0, 1).re + 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_rejects_singular() {
        let b = b2([[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(b.inverse(1e8), Err(Error::SingularBlock { .. })));
    }

    #[test]
    fn inverse_residual_for_random_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut b = random_block(&mut rng, 3);
            for i in 0..3 {
                b.set(i, i, b.get(i, i) + cplx(2.0, 0.0));
            }
            let (inv, cond) = b.inverse(1e8).unwrap();
            if cond <= 1e6 {
                let res = (&b.mul_block(&inv) - &Block::identity(3)).norm();
                assert!(res <= 1e-10, "residual {res} at cond {cond}");
            }
        }
    }

    #[test]
    fn norm_is_submultiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = random_block(&mut rng, 2);
            let b = random_block(&mut rng, 2);
            let lhs = a.mul_block(&b).norm();
            let rhs = a.norm() * b.norm();
            assert!(lhs <= rhs * (1.0 + 1e-14));
        }
    }

    #[test]
    fn normalize_power_of_two() {
        let b = Block::<f64>::scalar(cplx(8.0, 0.0));
        let s = ScaledBlock::from_parts(b, 0);
        assert_eq!(s.exponent(), 3);
        assert!((s.mantissa().get(0, 0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_zero_resets_exponent() {
        let s = ScaledBlock::from_parts(Block::<f64>::zeros(2), 17);
        assert_eq!(s.exponent(), 0);
        assert!(s.is_zero());
    }

    #[test]
    fn normalize_small_scalar() {
        let s = ScaledBlock::from_block(Block::<f64>::scalar(cplx(0.001, 0.0)));
        assert_eq!(s.exponent(), -10);
        assert!((s.mantissa().get(0, 0).re - 1.024).abs() < 1e-15);
    }

    #[test]
    fn f32_blocks_share_the_code_path() {
        let b: Block<f32> = Block::from_fn(2, |i, j| Complex::new((i + 2 * j) as f32, 0.0));
        let (inv, _) = b.inverse(1e6f32).unwrap();
        let res = (&b.mul_block(&inv) - &Block::identity(2)).norm();
        assert!(res < 1e-5);
    }

    proptest! {
        #[test]
        fn normalize_preserves_value(x in -1e6f64..1e6, y in -1e6f64..1e6, e in -40i64..40) {
            prop_assume!(x.abs() + y.abs() > 1e-12);
            let raw = Block::scalar(cplx::<f64>(x, y));
            let s = ScaledBlock::from_parts(raw.clone(), e);
            let back = s.to_block();
            let want = raw.ldexp(e);
            let rel = (&back - &want).norm() / want.norm();
            prop_assert!(rel <= 1e-15);
        }

        #[test]
        fn scaled_product_matches_plain(a in -64.0f64..64.0, b in -64.0f64..64.0) {
            let x = ScaledBlock::from_block(Block::scalar(cplx::<f64>(a, 1.0)));
            let y = ScaledBlock::from_block(Block::scalar(cplx(b, -2.0)));
            let got = x.mul(&y).to_block().get(0, 0);
            let want = cplx::<f64>(a, 1.0) * cplx(b, -2.0);
            prop_assert!((got - want).norm() <= 1e-12 * (1.0 + want.norm()));
        }
    }
}
