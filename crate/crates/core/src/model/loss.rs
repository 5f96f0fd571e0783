//! Masked next-token cross-entropy.

use ndarray::Array2;

use super::tensor::log_sum_exp;
use super::ModelError;

fn check(logits: &Array2<f64>, targets: &[u32], mask: &[bool]) -> Result<usize, ModelError> {
    let n = logits.nrows();
    if targets.len() != n || mask.len() != n {
        return Err(ModelError::Shape(format!(
            "{n} logit rows, {} targets, {} mask entries",
            targets.len(),
            mask.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t as usize >= logits.ncols()) {
        return Err(ModelError::Shape(format!("target {t} outside vocabulary")));
    }
    let active = mask.iter().filter(|&&m| m).count();
    if active == 0 {
        return Err(ModelError::EmptyMask);
    }
    Ok(active)
}

/// Mean negative log-likelihood of `targets[i]` under `logits.row(i)` over
/// rows where `mask[i]` holds.
pub fn next_token_loss(logits: &Array2<f64>, targets: &[u32], mask: &[bool]) -> Result<f64, ModelError> {
    let active = check(logits, targets, mask)?;
    let mut total = 0.0;
    for ((row, &t), _) in logits.rows().into_iter().zip(targets).zip(mask).filter(|(_, &m)| m) {
        total += log_sum_exp(row) - row[t as usize];
    }
    Ok(total / active as f64)
}

/// Loss plus its gradient with respect to `logits`.
pub fn next_token_loss_grad(logits: &Array2<f64>, targets: &[u32], mask: &[bool]) -> Result<(f64, Array2<f64>), ModelError> {
    let active = check(logits, targets, mask)?;
    let inv = 1.0 / active as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (i, (row, &t)) in logits.rows().into_iter().zip(targets).enumerate() {
        if !mask[i] {
            continue;
        }
        let lse = log_sum_exp(row);
        total += lse - row[t as usize];
        let mut g = grad.row_mut(i);
        for (gv, &l) in g.iter_mut().zip(row.iter()) {
            *gv = (l - lse).exp() * inv;
        }
        g[t as usize] -= inv;
    }
    Ok((total * inv, grad))
}

/// Shifts a text sequence for Eq.-style next-token supervision: row `t-1`
/// of the logits predicts token `t`, for `t ≥ 1` with `mask[t]` set.
pub fn shifted_targets(text: &[u32], mask: &[bool]) -> (Vec<u32>, Vec<bool>) {
    let n = text.len();
    let mut targets = vec![0u32; n];
    let mut m = vec![false; n];
    for t in 1..n {
        targets[t - 1] = text[t];
        m[t - 1] = mask[t];
    }
    (targets, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_vocab() {
        let logits = Array2::zeros((3, 50));
        let l = next_token_loss(&logits, &[1, 2, 3], &[true, true, true]).unwrap();
        assert!((l - 50f64.ln()).abs() < 1e-12);
        assert!((l - 3.912).abs() < 1e-3);
    }

    #[test]
    fn confident_target_gives_zero() {
        let mut logits = Array2::zeros((1, 10));
        logits[[0, 4]] = 1e6;
        assert!(next_token_loss(&logits, &[4], &[true]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hand_softmax_two_positions() {
        let logits = array![[1.0, 2.0, 3.0], [0.5, -1.0, 0.0]];
        let p0 = 1f64.exp() / (1f64.exp() + 2f64.exp() + 3f64.exp());
        let p1 = (-1f64).exp() / (0.5f64.exp() + (-1f64).exp() + 1.0);
        let expected = -(p0.ln() + p1.ln()) / 2.0;
        let got = next_token_loss(&logits, &[0, 1], &[true, true]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        let masked = next_token_loss(&logits, &[0, 1], &[true, false]).unwrap();
        assert!((masked + p0.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_rejected() {
        let logits = Array2::zeros((2, 3));
        assert!(matches!(next_token_loss(&logits, &[0, 1], &[false, false]), Err(ModelError::EmptyMask)));
    }

    #[test]
    fn gradient_matches_differences() {
        let logits = array![[0.3, -1.2, 2.0, 0.1], [1.0, 1.0, -0.5, 0.0]];
        let (t, m) = ([2u32, 0], [true, true]);
        let (_, g) = next_token_loss_grad(&logits, &t, &m).unwrap();
        for i in 0..2 {
            for j in 0..4 {
                let mut p = logits.clone();
                p[[i, j]] += 1e-6;
                let mut q = logits.clone();
                q[[i, j]] -= 1e-6;
                let num = (next_token_loss(&p, &t, &m).unwrap() - next_token_loss(&q, &t, &m).unwrap()) / 2e-6;
                assert!((num - g[[i, j]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn shift_drops_first_position() {
        let (t, m) = shifted_targets(&[10, 11, 12], &[true, false, true]);
        assert_eq!(t, vec![11, 12, 0]);
        assert_eq!(m, vec![false, true, false]);
    }
}
