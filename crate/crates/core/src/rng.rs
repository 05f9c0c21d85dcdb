//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha stream keyed by the run seed, so
//! adding draws in one place never shifts another.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Data = 3,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Inverted-dropout keep mask: each entry is `0` with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Matrix {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0, 1)");
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
    Matrix::from_vec(rows, cols, data).expect("length matches")
}

/// Uniform random ordering of `0..n` drawn from the data stream of `seed`.
pub fn node_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, Stream::Data));
    perm
}
