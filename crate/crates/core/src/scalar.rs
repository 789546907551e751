//! Scalar abstraction shared by the generic parts of the crate.

use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type usable by the generic modules (`f32`, `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal fits the scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("integer fits the scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
    /// off-diagonal `e` (`e.len() + 1 == d.len()`), in ascending order.
    fn sym_tridiag_eigenvalues(d: &[Self], e: &[Self]) -> Vec<Self>;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn sym_tridiag_eigenvalues(d: &[$t], e: &[$t]) -> Vec<$t> {
                let n = d.len();
                let m = DMatrix::<$t>::from_fn(n, n, |i, j| {
                    if i == j {
                        d[i]
                    } else if i + 1 == j {
                        e[i]
                    } else if j + 1 == i {
                        e[j]
                    } else {
                        0.0
                    }
                });
                let mut ev: Vec<$t> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
                ev.sort_by(|a, b| a.total_cmp(b));
                ev
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_eigenvalues_of_small_matrix() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let ev = f64::sym_tridiag_eigenvalues(&[2.0, 2.0], &[1.0]);
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        let ev = f32::sym_tridiag_eigenvalues(&[2.0, 2.0], &[1.0]);
        assert!((ev[1] - 3.0).abs() < 1e-6);
    }
}
