//! Dense decompositions on top of faer, exchanged as ndarray arrays.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef, Side};
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

fn view(a: &Array2<f64>) -> MatRef<'_, f64> {
    let data = a.as_slice().expect("row-major array");
    MatRef::from_row_major_slice(data, a.nrows(), a.ncols())
}

fn to_ndarray(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// (as columns) of a symmetric matrix.
pub(crate) fn sym_eigen(sym: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let sym = sym.as_standard_layout().into_owned();
    let eig = view(&sym)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("symmetric eigendecomposition: {e:?}")))?;
    let s = eig.S();
    let values = Array1::from_shape_fn(sym.nrows(), |i| s[i]);
    Ok((values, to_ndarray(eig.U())))
}

/// `A Aᵀ` for a row-major `A`.
pub(crate) fn gram(a: &Array2<f64>) -> Array2<f64> {
    let a = view(a);
    let g: Mat<f64> = a * a.transpose();
    to_ndarray(g.as_ref())
}

fn column(v: ArrayView1<'_, f64>) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn flatten(m: Mat<f64>) -> Array1<f64> {
    Array1::from_shape_fn(m.nrows(), |i| m[(i, 0)])
}

/// `A x`.
pub(crate) fn matvec(a: &Array2<f64>, x: ArrayView1<'_, f64>) -> Array1<f64> {
    flatten(view(a) * column(x))
}

/// `Aᵀ y`.
pub(crate) fn matvec_t(a: &Array2<f64>, y: ArrayView1<'_, f64>) -> Array1<f64> {
    flatten(view(a).transpose() * column(y))
}

pub(crate) struct Cholesky {
    llt: Llt<f64>,
}

impl Cholesky {
    pub(crate) fn factor(spd: &Array2<f64>) -> Result<Self> {
        let llt = view(spd)
            .llt(Side::Lower)
            .map_err(|e| Error::LinearAlgebra(format!("Cholesky factorisation: {e:?}")))?;
        Ok(Self { llt })
    }

    pub(crate) fn solve(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        flatten(self.llt.solve(&column(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Array2<f64> {
        let b = Array2::from_shape_fn((n, n), |(i, j)| ((i * 31 + j * 17) % 13) as f64 / 13.0);
        b.dot(&b.t()) + Array2::<f64>::eye(n)
    }

    #[test]
    fn eigen_reconstructs_at_several_sizes() {
        for n in [1, 5, 36, 200] {
            let a = spd(n);
            let (l, v) = sym_eigen(&a).unwrap();
            assert!(l.windows(2).into_iter().all(|w| w[0] <= w[1]));
            let rec = (&v * &l.view().insert_axis(ndarray::Axis(0))).dot(&v.t());
            let err = (&rec - &a).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(err < 1e-9 * l[n - 1], "n={n} err={err}");
        }
    }

    #[test]
    fn cholesky_solves_and_gram_matches() {
        let a = Array2::from_shape_fn((150, 400), |(i, j)| (((i * 7 + j * 13) % 17) as f64 - 8.0) / 17.0);
        let mut g = gram(&a);
        let direct = a.dot(&a.t());
        assert!((&g - &direct).iter().all(|d| d.abs() < 1e-10));
        for i in 0..150 {
            g[[i, i]] += 0.5;
        }
        let b = Array1::from_shape_fn(150, |i| (i as f64).sin());
        let x = Cholesky::factor(&g).unwrap().solve(b.view());
        let r = g.dot(&x) - &b;
        let v = Array1::from_shape_fn(400, |j| (j as f64 * 0.1).cos());
        assert!((matvec(&a, v.view()) - a.dot(&v)).iter().all(|d| d.abs() < 1e-10));
        assert!((matvec_t(&a, b.view()) - a.t().dot(&b)).iter().all(|d| d.abs() < 1e-10));
        assert!(r.iter().all(|v| v.abs() < 1e-9));
        let mut not_spd = Array2::<f64>::eye(3);
        not_spd[[1, 1]] = -1.0;
        assert!(Cholesky::factor(&not_spd).is_err());
    }
}
