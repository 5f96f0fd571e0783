//! Frozen linear layer with a low-rank trainable update.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::DecoderConfig;
use super::ModelError;

/// `y = W x + (alpha / r) · B (A x)` with `W` frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLinear {
    /// `d_out × d_in`, never updated.
    pub weight: Array2<f64>,
    /// `r × d_in`
    pub lora_a: Array2<f64>,
    /// `d_out × r`
    pub lora_b: Array2<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct LoraGrads {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

impl LoraLinear {
    pub fn new(weight: Array2<f64>, lora_a: Array2<f64>, lora_b: Array2<f64>, alpha: f64) -> Result<Self, ModelError> {
        let (d_out, d_in) = weight.dim();
        let r = lora_a.nrows();
        if r == 0 {
            return Err(ModelError::Config("LoRA rank must be at least 1".into()));
        }
        if lora_a.ncols() != d_in || lora_b.dim() != (d_out, r) {
            return Err(ModelError::Shape(format!(
                "W is {d_out}x{d_in}, A is {:?}, B is {:?}",
                lora_a.dim(),
                lora_b.dim()
            )));
        }
        Ok(Self {
            weight,
            lora_a,
            lora_b,
            alpha,
        })
    }

    /// Standard initialization: `A ~ N(0, 1/d_in)`, `B = 0`.
    pub fn init(weight: Array2<f64>, rank: usize, alpha: f64, rng: &mut impl Rng) -> Result<Self, ModelError> {
        let (d_out, d_in) = weight.dim();
        let n = Normal::new(0.0, (1.0 / d_in as f64).sqrt()).unwrap();
        let a = Array2::from_shape_fn((rank, d_in), |_| n.sample(rng));
        Self::new(weight, a, Array2::zeros((d_out, rank)), alpha)
    }

    pub fn rank(&self) -> usize {
        self.lora_a.nrows()
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    pub fn d_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.nrows()
    }

    pub fn trainable_params(&self) -> usize {
        self.lora_a.len() + self.lora_b.len()
    }

    pub fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>, ModelError> {
        if x.len() != self.d_in() {
            return Err(ModelError::Shape(format!(
                "input has {} features, layer expects {}",
                x.len(),
                self.d_in()
            )));
        }
        let ax = self.lora_a.dot(x);
        Ok(self.weight.dot(x) + self.lora_b.dot(&ax) * self.scale())
    }

    /// Row-batched forward. Returns the output and the rank-space activations
    /// `x Aᵀ` needed for the backward pass. With `adapters == false` only the
    /// frozen map is applied.
    pub fn forward_rows(&self, x: &Array2<f64>, adapters: bool) -> (Array2<f64>, Array2<f64>) {
        let mut y = x.dot(&self.weight.t());
        if !adapters {
            return (y, Array2::zeros((x.nrows(), self.rank())));
        }
        let z = x.dot(&self.lora_a.t());
        y.scaled_add(self.scale(), &z.dot(&self.lora_b.t()));
        (y, z)
    }

    /// Gradients for `A`, `B` and the input, given the upstream gradient `dy`.
    pub fn backward_rows(&self, x: &Array2<f64>, z: &Array2<f64>, dy: &Array2<f64>) -> (LoraGrads, Array2<f64>) {
        let s = self.scale();
        let b = dy.t().dot(z) * s;
        let dz = dy.dot(&self.lora_b) * s;
        let a = dz.t().dot(x);
        let mut dx = dy.dot(&self.weight);
        dx += &dz.dot(&self.lora_a);
        (LoraGrads { a, b }, dx)
    }
}

impl LoraGrads {
    pub fn zeros_like(l: &LoraLinear) -> Self {
        Self {
            a: Array2::zeros(l.lora_a.raw_dim()),
            b: Array2::zeros(l.lora_b.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, o: &Self) {
        self.a += &o.a;
        self.b += &o.b;
    }

    pub fn scale(&mut self, s: f64) {
        self.a *= s;
        self.b *= s;
    }
}

/// Trainable adapter parameters implied by a decoder geometry.
pub fn count_lora_params(geom: &DecoderConfig) -> u64 {
    let d = geom.d_model as u64;
    let r = geom.lora_rank as u64;
    geom.n_layers as u64 * geom.lora_targets.len() as u64 * (r * d + d * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn hand_oracle() {
        let l = LoraLinear::new(array![[1.0, 0.0], [0.0, 1.0]], array![[1.0, 1.0]], array![[1.0], [0.0]], 1.0).unwrap();
        assert_eq!(l.forward(&array![2.0, 3.0]).unwrap(), array![7.0, 3.0]);
    }

    #[test]
    fn zero_b_is_frozen_map() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let w = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let l = LoraLinear::init(w.clone(), 2, 16.0, &mut rng).unwrap();
        let x = array![0.1, -0.4, 2.0, 1.5];
        assert_eq!(l.forward(&x).unwrap(), w.dot(&x));
    }

    #[test]
    fn rank8_alpha16_scale_is_two() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut l = LoraLinear::init(Array2::zeros((3, 3)), 8, 16.0, &mut rng).unwrap();
        assert_eq!(l.scale(), 2.0);
        l.lora_b.fill(0.5);
        let x = array![1.0, 2.0, 3.0];
        let expected = l.lora_b.dot(&l.lora_a.dot(&x)) * 2.0;
        let y = l.forward(&x).unwrap();
        for (a, b) in y.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(LoraLinear::new(Array2::zeros((2, 2)), Array2::zeros((0, 2)), Array2::zeros((2, 0)), 1.0).is_err());
        assert!(LoraLinear::new(Array2::zeros((2, 2)), Array2::zeros((1, 3)), Array2::zeros((2, 1)), 1.0).is_err());
        let l = LoraLinear::new(Array2::zeros((2, 2)), Array2::zeros((1, 2)), Array2::zeros((2, 1)), 1.0).unwrap();
        assert!(l.forward(&array![1.0]).is_err());
    }

    #[test]
    fn lora_counts() {
        assert_eq!(count_lora_params(&DecoderConfig::llama_7b_geometry()), 4_194_304);
        let tiny = DecoderConfig {
            n_layers: 1,
            d_model: 4,
            lora_rank: 1,
            lora_targets: vec![super::super::config::LoraTarget::Query],
            ..DecoderConfig::toy()
        };
        assert_eq!(count_lora_params(&tiny), 8);
        assert_eq!(count_lora_params(&DecoderConfig::toy()), 8_192);
    }
}
