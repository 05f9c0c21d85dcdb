//! Accumulating dense products. Every kernel adds into `out`.
//!
//! Zero entries of the left operand are skipped, which turns products
//! against bag-of-words feature matrices into sparse work for free.

use super::Matrix;

/// `out += a · b`
pub fn gemm_nn(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    debug_assert_eq!(a.cols(), b.rows());
    debug_assert_eq!(out.shape(), (a.rows(), b.cols()));
    let n = b.cols();
    let bd = b.data();
    for i in 0..a.rows() {
        let a_row = a.row(i);
        let out_row = out.row_mut(i);
        // Four rows of `b` per pass: one load/store of `out_row` per four
        // multiply-adds instead of per one.
        let mut chunks = a_row.chunks_exact(4);
        let mut k = 0;
        for c in &mut chunks {
            let (a0, a1, a2, a3) = (c[0], c[1], c[2], c[3]);
            if a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0 {
                k += 4;
                continue;
            }
            let b0 = &bd[k * n..(k + 1) * n];
            let b1 = &bd[(k + 1) * n..(k + 2) * n];
            let b2 = &bd[(k + 2) * n..(k + 3) * n];
            let b3 = &bd[(k + 3) * n..(k + 4) * n];
            for j in 0..n {
                out_row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            k += 4;
        }
        for &aik in chunks.remainder() {
            if aik != 0.0 {
                let b_row = &bd[k * n..(k + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bv;
                }
            }
            k += 1;
        }
    }
}

/// `out += aᵀ · b`
pub fn gemm_tn(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    debug_assert_eq!(a.rows(), b.rows());
    debug_assert_eq!(out.shape(), (a.cols(), b.cols()));
    let n = b.cols();
    for i in 0..a.rows() {
        let b_row = b.row(i);
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let out_row = &mut out.data_mut()[k * n..(k + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

/// `out += a · bᵀ`
pub fn gemm_nt(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    debug_assert_eq!(a.cols(), b.cols());
    debug_assert_eq!(out.shape(), (a.rows(), b.rows()));
    let bt = b.transpose();
    gemm_nn(a, &bt, out);
}
