//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All math is written against [`Scalar`]; the concrete `f64` and `f32`
//! instantiations are re-exported as aliases from the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Row/column strides of a matrix operand stored in a flat slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Strides {
    pub row: usize,
    pub col: usize,
}

impl Strides {
    /// Dense row-major layout with `cols` columns.
    pub const fn row_major(cols: usize) -> Self {
        Strides { row: cols, col: 1 }
    }

    /// Transposed view of a dense row-major matrix with `cols` columns.
    pub const fn transposed(cols: usize) -> Self {
        Strides { row: 1, col: cols }
    }
}

/// Floating-point element type usable in tensors and on the tape.
///
/// Besides the arithmetic bounds, a scalar exposes a general matrix product
/// hook. The default is a plain triple loop; `f32` and `f64` route to a
/// blocked kernel.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    /// `c = alpha * a * b + beta * c` where `a` is `m x k`, `b` is `k x n`
    /// and `c` is `m x n`, each addressed through its own strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        sa: Strides,
        b: &[Self],
        sb: Strides,
        beta: Self,
        c: &mut [Self],
        sc: Strides,
    ) {
        check_operand(a.len(), m, k, sa);
        check_operand(b.len(), k, n, sb);
        check_operand(c.len(), m, n, sc);
        for i in 0..m {
            for j in 0..n {
                let mut acc = Self::zero();
                for p in 0..k {
                    acc += a[i * sa.row + p * sa.col] * b[p * sb.row + j * sb.col];
                }
                let dst = &mut c[i * sc.row + j * sc.col];
                *dst = if beta == Self::zero() {
                    alpha * acc
                } else {
                    alpha * acc + beta * *dst
                };
            }
        }
    }

    /// Lossless-enough conversion from an `f64` literal.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("scalar conversion from f64")
    }

    /// Conversion to `f64` for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn check_operand(len: usize, rows: usize, cols: usize, s: Strides) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) * s.row + (cols - 1) * s.col;
    assert!(last < len, "gemm operand of {len} elements too short for {rows}x{cols}");
}

macro_rules! blocked_gemm {
    ($ty:ty, $kernel:path) => {
        impl Scalar for $ty {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                sa: Strides,
                b: &[Self],
                sb: Strides,
                beta: Self,
                c: &mut [Self],
                sc: Strides,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                check_operand(a.len(), m, k, sa);
                check_operand(b.len(), k, n, sb);
                check_operand(c.len(), m, n, sc);
                // SAFETY: every operand extent was bounds-checked above and
                // the output slice is uniquely borrowed.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        sa.row as isize,
                        sa.col as isize,
                        b.as_ptr(),
                        sb.row as isize,
                        sb.col as isize,
                        beta,
                        c.as_mut_ptr(),
                        sc.row as isize,
                        sc.col as isize,
                    );
                }
            }
        }
    };
}

blocked_gemm!(f64, matrixmultiply::dgemm);
blocked_gemm!(f32, matrixmultiply::sgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn blocked_kernel_matches_triple_loop() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![0.0; m * n];
        f64::gemm(m, k, n, 1.0, &a, Strides::row_major(k), &b, Strides::row_major(n), 0.0, &mut c, Strides::row_major(n));
        for (x, y) in c.iter().zip(naive(m, k, n, &a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_operand() {
        // a is stored as k x m, used as its transpose.
        let (m, k, n) = (2, 3, 2);
        let a_t = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0f64; 4];
        f64::gemm(m, k, n, 1.0, &a_t, Strides::transposed(m), &b, Strides::row_major(n), 0.0, &mut c, Strides::row_major(n));
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
    }
}
