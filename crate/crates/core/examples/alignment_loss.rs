//! Contrastive plus MSE alignment loss on matched and shuffled pairs.

use ltu::model::{alignment_losses, AlignmentBatch};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let text = Array2::from_shape_fn((6, 16), |_| rng.gen_range(-1.0..1.0));
    let audio = &text + &Array2::from_shape_fn((6, 16), |_| rng.gen_range(-0.1..0.1));

    let matched = alignment_losses(&AlignmentBatch::new(audio.clone(), text.clone()))?;
    println!("matched:  {matched:?}");

    let mut shuffled = audio.clone();
    shuffled.slice_mut(s![0..3, ..]).assign(&audio.slice(s![3..6, ..]));
    shuffled.slice_mut(s![3..6, ..]).assign(&audio.slice(s![0..3, ..]));
    let mismatched = alignment_losses(&AlignmentBatch::new(shuffled, text))?;
    println!("shuffled: {mismatched:?}");
    Ok(())
}
