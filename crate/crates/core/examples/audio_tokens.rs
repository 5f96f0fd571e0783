//! Waveform to 32 audio tokens, printing each intermediate shape.

use ltu::audio::{encode_patches, pool_tokens, project_tokens, AudioFrontend, PatchEncoder, ProjectionLayer};
use ltu::synth::synth_clip;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clip = synth_clip(7, 0)?;
    println!("clip {} ({:.1}s): {}", clip.meta.audio_id, clip.wave.duration_s(), clip.meta.captions.join(" "));

    let front = AudioFrontend::default();
    let fbank = front.fbank(&clip.wave)?;
    println!("fbank        {:?}", fbank.frames.dim());
    let grid = front.patches(&clip.wave)?;
    println!("patch grid   {:?}", grid.patches.dim());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let encoder = PatchEncoder::new_random(256, 512, 768, &mut rng);
    let embedded = encode_patches(&grid, &encoder)?;
    println!("embeddings   {:?}", embedded.dim());
    let tokens = pool_tokens(&embedded)?;
    println!("tokens       {} x {} at {} Hz", tokens.len(), tokens.dim(), tokens.frame_rate_hz());

    let projection = ProjectionLayer::new_random(768, 4096, &mut rng);
    let projected = project_tokens(&tokens, &projection)?;
    println!("projected    {:?}", projected.tokens.dim());
    Ok(())
}
