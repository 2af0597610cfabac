//! Dense row-major `f64` tensors and the GEMM kernel the convolution ops use.

/// A dense row-major tensor. Image batches use NCHW layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Panics if `data.len()` disagrees with `shape`.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    /// `(n, c, h, w)` of a rank-4 tensor.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.shape.len(), 4, "expected NCHW tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Concatenates tensors along the leading axis.
    pub fn stack(items: &[&Tensor]) -> Self {
        assert!(!items.is_empty());
        let inner = &items[0].shape[1..];
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        let mut lead = 0;
        for t in items {
            assert_eq!(&t.shape[1..], inner, "stack: inner shapes differ");
            lead += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(inner);
        Tensor { shape, data }
    }

    /// Splits the leading axis into single-item tensors.
    pub fn unstack(&self) -> Vec<Tensor> {
        let lead = self.shape[0];
        let step = self.data.len() / lead.max(1);
        let mut shape = self.shape.clone();
        shape[0] = 1;
        self.data
            .chunks(step)
            .map(|c| Tensor {
                shape: shape.clone(),
                data: c.to_vec(),
            })
            .collect()
    }
}

/// Row/column strides of a matrix operand.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub rows: isize,
    pub cols: isize,
}

impl Layout {
    pub fn row_major(ncols: usize) -> Self {
        Layout {
            rows: ncols as isize,
            cols: 1,
        }
    }

    /// Transposed view of a row-major matrix with `ncols` columns.
    pub fn transposed(ncols: usize) -> Self {
        Layout {
            rows: 1,
            cols: ncols as isize,
        }
    }
}

/// `c = a·b + beta·c` for an `m×k` by `k×n` product; `c` is row-major.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // The packed kernel is slow for degenerate shapes (single output channel,
    // outer products); stream rows directly instead.
    if (m <= 2 || k <= 2) && lb.cols == 1 {
        gemm_axpy(m, k, n, a, la, b, lb.rows as usize, beta, c);
        return;
    }
    if m <= 2 && lb.rows == 1 && la.cols == 1 {
        gemm_dot(m, k, n, a, la.rows as usize, b, lb.cols as usize, beta, c);
        return;
    }
    // SAFETY: bounds checked above; every index the kernel touches is
    // (i*rs + j*cs) with i < rows, j < cols of a dense operand.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            la.rows,
            la.cols,
            b.as_ptr(),
            lb.rows,
            lb.cols,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm_axpy(m: usize, k: usize, n: usize, a: &[f64], la: Layout, b: &[f64], ldb: usize, beta: f64, c: &mut [f64]) {
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        if beta == 0.0 {
            row.fill(0.0);
        } else if beta != 1.0 {
            row.iter_mut().for_each(|v| *v *= beta);
        }
        for p in 0..k {
            let coef = a[(i as isize * la.rows + p as isize * la.cols) as usize];
            if coef == 0.0 {
                continue;
            }
            let brow = &b[p * ldb..p * ldb + n];
            row.iter_mut().zip(brow).for_each(|(cv, bv)| *cv += coef * bv);
        }
    }
}

/// `a` has contiguous rows (stride `lda`), `b` contiguous columns (stride `ldb`).
#[allow(clippy::too_many_arguments)]
fn gemm_dot(m: usize, k: usize, n: usize, a: &[f64], lda: usize, b: &[f64], ldb: usize, beta: f64, c: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * lda..i * lda + k];
        for j in 0..n {
            let bcol = &b[j * ldb..j * ldb + k];
            let dot: f64 = arow.iter().zip(bcol).map(|(x, y)| x * y).sum();
            let cv = &mut c[i * n + j];
            *cv = if beta == 0.0 { dot } else { beta * *cv + dot };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_product() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3x4
        let mut c = vec![1.0; 8];
        gemm(2, 3, 4, &a, Layout::row_major(3), &b, Layout::row_major(4), 0.0, &mut c);
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], want);
            }
        }
        // a^T (3x2) times a (2x3)
        let mut g = vec![0.0; 9];
        gemm(3, 2, 3, &a, Layout::transposed(3), &a, Layout::row_major(3), 0.0, &mut g);
        assert_eq!(g[0], 0.0 * 0.0 + 3.0 * 3.0);
        assert_eq!(g[5], 1.0 * 2.0 + 4.0 * 5.0);
    }

    #[test]
    fn degenerate_shapes_match_packed_kernel() {
        let naive = |m: usize, k: usize, n: usize, a: &[f64], la: Layout, b: &[f64], lb: Layout| {
            let mut c = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    c[i * n + j] = (0..k)
                        .map(|p| {
                            a[(i as isize * la.rows + p as isize * la.cols) as usize]
                                * b[(p as isize * lb.rows + j as isize * lb.cols) as usize]
                        })
                        .sum();
                }
            }
            c
        };
        let vals = |len: usize| -> Vec<f64> { (0..len).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect() };
        for &(m, k, n) in &[(1, 9, 13), (2, 5, 7), (6, 1, 10), (6, 2, 3)] {
            let a = vals(m * k);
            let b = vals(k * n);
            let mut c = vec![0.5; m * n];
            gemm(m, k, n, &a, Layout::row_major(k), &b, Layout::row_major(n), 0.0, &mut c);
            let want = naive(m, k, n, &a, Layout::row_major(k), &b, Layout::row_major(n));
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
            // b supplied as the transpose of an n×k row-major matrix
            let bt = vals(n * k);
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, &a, Layout::row_major(k), &bt, Layout::transposed(k), 0.0, &mut c);
            let want = naive(m, k, n, &a, Layout::row_major(k), &bt, Layout::transposed(k));
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stack_unstack_inverse() {
        let a = Tensor::full(&[1, 1, 2, 2], 0.25);
        let b = Tensor::full(&[1, 1, 2, 2], 0.75);
        let s = Tensor::stack(&[&a, &b]);
        assert_eq!(s.shape(), &[2, 1, 2, 2]);
        assert_eq!(s.unstack(), vec![a, b]);
    }
}
