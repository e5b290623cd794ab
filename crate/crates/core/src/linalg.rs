//! Thin safe wrapper over `matrixmultiply::dgemm` for strided views.

use nalgebra::DMatrix;

/// A read-only strided matrix view. Rows may overlap (as in im2col views of
/// a sequence); only the caller's slice bounds are enforced.
#[derive(Clone, Copy, Debug)]
pub struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> View<'a> {
    pub fn row_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn col_major(m: &'a DMatrix<f64>) -> Self {
        Self {
            data: m.as_slice(),
            rows: m.nrows(),
            cols: m.ncols(),
            row_stride: 1,
            col_stride: m.nrows(),
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride;
            assert!(last < self.data.len(), "view exceeds its slice");
        }
    }
}

/// Mutable destination: must not overlap itself.
pub struct ViewMut<'a> {
    pub data: &'a mut [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> ViewMut<'a> {
    pub fn row_major(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn col_major_slice(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            row_stride: 1,
            col_stride: rows,
        }
    }

    pub fn col_major(m: &'a mut DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        Self {
            data: m.as_mut_slice(),
            rows,
            cols,
            row_stride: 1,
            col_stride: rows,
        }
    }
}

/// `C ← α·A·B + β·C`.
pub fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: ViewMut<'_>) {
    assert_eq!(a.cols, b.rows, "inner dimensions");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "output shape");
    a.check();
    b.check();
    if c.rows > 0 && c.cols > 0 {
        let last = (c.rows - 1) * c.row_stride + (c.cols - 1) * c.col_stride;
        assert!(last < c.data.len(), "output view exceeds its slice");
        // distinct (row, col) must map to distinct offsets
        assert!(
            (c.row_stride >= c.cols * c.col_stride && c.col_stride >= 1)
                || (c.col_stride >= c.rows * c.row_stride && c.row_stride >= 1)
                || c.rows == 1
                || c.cols == 1,
            "output view overlaps itself"
        );
    }
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    // SAFETY: every accessed offset of a, b and c was bounds-checked above,
    // c is uniquely borrowed and its offsets are pairwise distinct.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.data.as_mut_ptr(),
            c.row_stride as isize,
            c.col_stride as isize,
        );
    }
}

/// `A·B` for column-major matrices.
pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(a.nrows(), b.ncols());
    gemm(1.0, View::col_major(a), View::col_major(b), 0.0, ViewMut::col_major(&mut c));
    c
}

/// `Aᵀ·B` for column-major matrices.
pub fn matmul_tn(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(a.ncols(), b.ncols());
    gemm(1.0, View::col_major(a).t(), View::col_major(b), 0.0, ViewMut::col_major(&mut c));
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_products() {
        let a = DMatrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64 - 4.0);
        let b = DMatrix::from_fn(3, 4, |i, j| 0.5 * i as f64 - j as f64);
        assert_eq!(matmul(&a, &b), &a * &b);
        let c = DMatrix::from_fn(5, 4, |i, j| (i + 2 * j) as f64);
        assert_eq!(matmul_tn(&a, &c), a.transpose() * &c);
    }

    #[test]
    fn overlapping_rows_view() {
        // rows [x0 x1], [x1 x2], [x2 x3] of a length-4 sequence
        let x = [1.0, 2.0, 3.0, 4.0];
        let a = View {
            data: &x,
            rows: 3,
            cols: 2,
            row_stride: 1,
            col_stride: 1,
        };
        let w = [10.0, 1.0];
        let mut out = [0.0; 3];
        gemm(1.0, a, View::row_major(&w, 2, 1), 0.0, ViewMut::row_major(&mut out, 3, 1));
        assert_eq!(out, [12.0, 23.0, 34.0]);
    }

    #[test]
    #[should_panic]
    fn out_of_bounds_view_rejected() {
        let x = [1.0, 2.0];
        let mut out = [0.0; 4];
        gemm(
            1.0,
            View::row_major(&x, 2, 2),
            View::row_major(&x, 2, 1),
            0.0,
            ViewMut::row_major(&mut out, 2, 1),
        );
    }
}
