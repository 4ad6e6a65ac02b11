use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::LinalgError;

/// LU with partial pivoting. Fails when a pivot drops below `1e-14` times
/// the largest entry of `a`.
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    check_dims(a, b.len())?;
    checked_lu(a)?.solve(b).ok_or(LinalgError::Singular {
        pivot: 0,
        magnitude: 0.0,
    })
}

/// [`dense_solve`] for several right-hand sides at once.
pub fn dense_solve_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_dims(a, b.nrows())?;
    checked_lu(a)?.solve(b).ok_or(LinalgError::Singular {
        pivot: 0,
        magnitude: 0.0,
    })
}

fn check_dims(a: &DMatrix<f64>, rhs_rows: usize) -> Result<(), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if rhs_rows != a.nrows() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.nrows(),
            found: rhs_rows,
        });
    }
    Ok(())
}

fn checked_lu(a: &DMatrix<f64>) -> Result<LU<f64, Dyn, Dyn>, LinalgError> {
    let scale = a.amax();
    let lu = a.clone().lu();
    let u = lu.u();
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if !(d > 1e-14 * scale) {
            return Err(LinalgError::Singular {
                pivot: i,
                magnitude: d,
            });
        }
    }
    Ok(lu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let b = DVector::from_vec(vec![1.0, -2.0, 3.5]);
        assert_eq!(dense_solve(&DMatrix::identity(3, 3), &b).unwrap(), b);
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = dense_solve(&d, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn hilbert_inverse_row_sums() {
        // Row sums of inv(H_4) are known in closed form; H x = 1 gives them.
        let n = 4;
        let h = DMatrix::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64);
        let x = dense_solve(&h, &DVector::from_element(n, 1.0)).unwrap();
        // inv(H_4) = [[16,-120,240,-140],[-120,1200,-2700,1680],
        //             [240,-2700,6480,-4200],[-140,1680,-4200,2800]]
        let expected = [-4.0, 60.0, -180.0, 140.0];
        for (xi, ei) in x.iter().zip(expected) {
            assert!((xi - ei).abs() < 1e-9 * ei.abs(), "{xi} vs {ei}");
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            dense_solve(&a, &DVector::from_vec(vec![1.0, 1.0])),
            Err(LinalgError::Singular { pivot: 1, .. })
        ));
        let r = DMatrix::zeros(2, 3);
        assert!(matches!(
            dense_solve(&r, &DVector::zeros(2)),
            Err(LinalgError::NotSquare { .. })
        ));
    }
}
