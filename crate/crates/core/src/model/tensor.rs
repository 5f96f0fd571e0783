//! Small dense helpers shared by the decoder and losses.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub(crate) const RMS_EPS: f64 = 1e-6;

pub(crate) fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Array2<f64> {
    let n = Normal::new(0.0, std).unwrap();
    Array2::from_shape_fn((rows, cols), |_| n.sample(rng))
}

/// Parameter-free RMS normalization of every row. Returns the normalized rows
/// and each row's RMS.
pub(crate) fn rmsnorm_rows(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let rms = x.map_axis(Axis(1), |row| (row.dot(&row) / d + RMS_EPS).sqrt());
    let mut n = x.clone();
    Zip::from(n.rows_mut()).and(&rms).for_each(|mut row, &r| row /= r);
    (n, rms)
}

pub(crate) fn rmsnorm_backward(n: &Array2<f64>, rms: &Array1<f64>, dn: &Array2<f64>) -> Array2<f64> {
    let d = n.ncols() as f64;
    let mut dx = dn.clone();
    Zip::from(dx.rows_mut())
        .and(n.rows())
        .and(rms)
        .for_each(|mut dxr, nr, &r| {
            let m = dxr.dot(&nr) / d;
            dxr.scaled_add(-m, &nr);
            dxr /= r;
        });
    dx
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Numerically stable log-sum-exp of a row.
pub fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(row: ArrayView1<f64>) -> Array1<f64> {
    let lse = log_sum_exp(row);
    row.mapv(|v| (v - lse).exp())
}

/// In-place softmax over `row[..len]`; entries past `len` are zeroed.
pub(crate) fn softmax_prefix(row: &mut [f64], len: usize) {
    let m = row[..len].iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for v in &mut row[..len] {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in &mut row[..len] {
        *v /= sum;
    }
    for v in &mut row[len..] {
        *v = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn rmsnorm_backward_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x = gaussian(3, 5, 1.0, &mut rng);
        let w = gaussian(3, 5, 1.0, &mut rng);
        let f = |x: &Array2<f64>| (&rmsnorm_rows(x).0 * &w).sum();
        let (n, r) = rmsnorm_rows(&x);
        let g = rmsnorm_backward(&n, &r, &w);
        let eps = 1e-6;
        for i in 0..3 {
            for j in 0..5 {
                let mut xp = x.clone();
                xp[[i, j]] += eps;
                let mut xm = x.clone();
                xm[[i, j]] -= eps;
                let num = (f(&xp) - f(&xm)) / (2.0 * eps);
                assert!((num - g[[i, j]]).abs() < 1e-8, "{num} vs {}", g[[i, j]]);
            }
        }
    }

    #[test]
    fn silu_grad_matches_difference() {
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let num = (silu(x + 1e-6) - silu(x - 1e-6)) / 2e-6;
            assert!((num - silu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_sums_to_one_and_masks_tail() {
        let mut row = [1.0, 2.0, 3.0, 100.0];
        softmax_prefix(&mut row, 3);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(row[3], 0.0);
        let p = softmax(array![1000.0, 1000.0].view());
        assert!(p.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }
}
