//! Audio–text embedding alignment objective: InfoNCE over cosine
//! similarities plus a scaled mean-squared term.

use ndarray::{Array1, Array2, Axis};

use super::ModelError;

#[derive(Debug, Clone)]
pub struct AlignmentBatch {
    /// `N × D` audio embeddings.
    pub audio: Array2<f64>,
    /// `N × D` text embeddings.
    pub text: Array2<f64>,
    pub lambda: f64,
    pub tau: f64,
}

impl AlignmentBatch {
    pub const DEFAULT_LAMBDA: f64 = 10.0;
    pub const DEFAULT_TAU: f64 = 0.05;

    pub fn new(audio: Array2<f64>, text: Array2<f64>) -> Self {
        Self {
            audio,
            text,
            lambda: Self::DEFAULT_LAMBDA,
            tau: Self::DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentLosses {
    pub total: f64,
    pub contrastive: f64,
    pub mse: f64,
}

fn unit_rows(m: &Array2<f64>, what: &str) -> Result<Array2<f64>, ModelError> {
    let norms: Array1<f64> = m.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(i) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(ModelError::ZeroNorm(format!("{what} embedding {i}")));
    }
    Ok(m / &norms.insert_axis(Axis(1)))
}

/// Mean squared elementwise difference over the whole batch.
pub fn mse_loss(audio: &Array2<f64>, text: &Array2<f64>) -> Result<f64, ModelError> {
    if audio.dim() != text.dim() || audio.is_empty() {
        return Err(ModelError::Shape(format!("audio {:?} vs text {:?}", audio.dim(), text.dim())));
    }
    Ok((audio - text).mapv(|d| d * d).mean().unwrap_or(0.0))
}

/// `-(1/N) Σ_i log( exp(s_ii/τ) / Σ_k exp(s_ik/τ) )` with `s_ik` the cosine
/// between text `i` and audio `k`.
pub fn contrastive_loss(audio: &Array2<f64>, text: &Array2<f64>, tau: f64) -> Result<f64, ModelError> {
    let n = audio.nrows();
    if n < 2 {
        return Err(ModelError::Shape("contrastive term needs at least two pairs".into()));
    }
    if audio.dim() != text.dim() {
        return Err(ModelError::Shape(format!("audio {:?} vs text {:?}", audio.dim(), text.dim())));
    }
    if !(tau > 0.0) {
        return Err(ModelError::Config("temperature must be positive".into()));
    }
    let a = unit_rows(audio, "audio")?;
    let t = unit_rows(text, "text")?;
    let sim = t.dot(&a.t());
    let mut total = 0.0;
    for i in 0..n {
        let diag = sim[[i, i]];
        // -log softmax_ii = log(1 + Σ_{k≠i} exp((s_ik - s_ii)/τ)), kept in log1p form
        let gaps: Vec<f64> = (0..n).filter(|&k| k != i).map(|k| (sim[[i, k]] - diag) / tau).collect();
        let m = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += if m <= 0.0 {
            gaps.iter().map(|g| g.exp()).sum::<f64>().ln_1p()
        } else {
            m + ((-m).exp() + gaps.iter().map(|g| (g - m).exp()).sum::<f64>()).ln()
        };
    }
    Ok(total / n as f64)
}

pub fn alignment_losses(batch: &AlignmentBatch) -> Result<AlignmentLosses, ModelError> {
    let mse = mse_loss(&batch.audio, &batch.text)?;
    let contrastive = contrastive_loss(&batch.audio, &batch.text, batch.tau)?;
    Ok(AlignmentLosses {
        total: contrastive + batch.lambda * mse,
        contrastive,
        mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_embeddings_have_zero_mse() {
        let e = array![[1.0, 2.0], [3.0, -1.0]];
        assert_eq!(mse_loss(&e, &e).unwrap(), 0.0);
    }

    #[test]
    fn orthonormal_pair_value() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        let l = contrastive_loss(&e, &e, 0.05).unwrap();
        let expected = (-20f64).exp().ln_1p();
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 2.06e-9).abs() < 1e-11);
    }

    #[test]
    fn zero_norm_rejected() {
        let a = array![[0.0, 0.0], [0.0, 1.0]];
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(contrastive_loss(&a, &t, 0.05), Err(ModelError::ZeroNorm(_))));
        assert!(contrastive_loss(&array![[1.0, 0.0]], &array![[1.0, 0.0]], 0.05).is_err());
    }

    #[test]
    fn mismatched_pairs_cost_more() {
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        let t = array![[0.0, 1.0], [1.0, 0.0]];
        let l = contrastive_loss(&a, &t, 0.05).unwrap();
        assert!((l - (20.0 + (-20f64).exp().ln_1p())).abs() < 1e-9);
    }
}
