//! Raw row-major matrix kernels shared by the forward and backward passes.

use super::sum::exact_sum;

/// `c[p×r] = a[p×q] · b[q×r]`
pub fn matmul(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut c = vec![0.0; p * r];
    for i in 0..p {
        let c_row = &mut c[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            axpy(c_row, aik, &b[k * r..(k + 1) * r]);
        }
    }
    c
}

/// Same product with every inner sum rounded once, independent of `k` order.
pub fn matmul_exact(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut c = vec![0.0; p * r];
    for i in 0..p {
        for j in 0..r {
            c[i * r + j] = exact_sum((0..q).map(|k| a[i * q + k] * b[k * r + j]));
        }
    }
    c
}

/// `da[p×q] += dc[p×r] · bᵀ` where `b` is `q×r`.
pub fn acc_grad_lhs(da: &mut [f64], dc: &[f64], b: &[f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let dc_row = &dc[i * r..(i + 1) * r];
        for k in 0..q {
            let b_row = &b[k * r..(k + 1) * r];
            da[i * q + k] += dot(dc_row, b_row);
        }
    }
}

/// `db[q×r] += aᵀ · dc` where `a` is `p×q` and `dc` is `p×r`.
pub fn acc_grad_rhs(db: &mut [f64], a: &[f64], dc: &[f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let dc_row = &dc[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            axpy(&mut db[k * r..(k + 1) * r], aik, dc_row);
        }
    }
}

/// `y += a·x` over equal-length slices.
#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    let n = y.len().min(x.len());
    let (y, x) = (&mut y[..n], &x[..n]);
    for j in 0..n {
        y[j] += a * x[j];
    }
}

/// Dot product with four independent partial sums.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for l in 0..4 {
            acc[l] += a[l] * b[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_product() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        assert_eq!(matmul(&a, &b, 2, 3, 2), vec![58.0, 64.0, 139.0, 154.0]);
        assert_eq!(matmul_exact(&a, &b, 2, 3, 2), vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let a: Vec<f64> = (0..6).map(f64::from).collect();
        let t = transpose(&a, 2, 3);
        assert_eq!(t, vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
        assert_eq!(transpose(&t, 3, 2), a);
    }
}
