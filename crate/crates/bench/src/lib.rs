//! Shared inputs for the benchmarks.

use cdfa_core::augment::FaceFrame;
use cdfa_core::data::{generate_synthetic_corpus, Corpus, SynthConfig};
use cdfa_core::grid::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_image(seed: u64, size: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_vec(
        size,
        size,
        (0..size * size * Image::CHANNELS)
            .map(|_| rng.gen())
            .collect(),
    )
    .expect("square image")
}

/// A small synthetic corpus at `size` pixels.
pub fn corpus(size: usize) -> Corpus {
    generate_synthetic_corpus(&SynthConfig {
        n_identities: 10,
        image_size: size,
        ..SynthConfig::default()
    })
    .expect("default synthetic config is valid")
}

pub fn real_frames(corpus: &Corpus) -> Vec<&FaceFrame> {
    corpus
        .clips
        .iter()
        .filter(|c| c.manipulation_tag.is_none())
        .flat_map(|c| c.frames.iter())
        .collect()
}

/// Scores with roughly 10% ties and a 40% positive rate.
pub fn scored(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                f64::from(rng.gen_range(0..n as u32 * 10)) / 100.0,
                rng.gen_bool(0.4),
            )
        })
        .unzip()
}
