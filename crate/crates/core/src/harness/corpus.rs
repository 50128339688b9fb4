//! Synthetic binary observation corpora.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

/// Width of a maze bitplane.
pub const BITPLANE: usize = 144;

/// Uniform random 0/1 template.
pub fn template(dim: usize, rng: &mut Rng) -> Vec<f64> {
    (0..dim).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect()
}

/// `n` copies of `base`, each bit flipped independently with probability `flip`.
pub fn noisy_copies(base: &[f64], n: usize, flip: f64, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            base.iter()
                .map(|&b| if rng.random_bool(flip) { 1.0 - b } else { b })
                .collect()
        })
        .collect()
}

/// Observations from two rooms, each split into a training and a held-out half.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoRoomCorpus {
    pub d1a: Vec<Vec<f64>>,
    pub d1b: Vec<Vec<f64>>,
    pub d2a: Vec<Vec<f64>>,
    pub d2b: Vec<Vec<f64>>,
}

fn check(per_part: usize, flip: f64) -> Result<()> {
    if per_part == 0 || !(0.0..=1.0).contains(&flip) {
        return Err(Error::Precondition(format!("bad corpus size {per_part} or flip rate {flip}")));
    }
    Ok(())
}

pub fn two_room(seed: u64, per_part: usize, flip: f64) -> Result<TwoRoomCorpus> {
    check(per_part, flip)?;
    let mut rng = stream(seed, "corpus.two_room");
    let room1 = template(BITPLANE, &mut rng);
    let room2 = template(BITPLANE, &mut rng);
    Ok(TwoRoomCorpus {
        d1a: noisy_copies(&room1, per_part, flip, &mut rng),
        d1b: noisy_copies(&room1, per_part, flip, &mut rng),
        d2a: noisy_copies(&room2, per_part, flip, &mut rng),
        d2b: noisy_copies(&room2, per_part, flip, &mut rng),
    })
}

/// A base class and a second class, each with training and held-out samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCorpus {
    pub base_train: Vec<Vec<f64>>,
    pub base_test: Vec<Vec<f64>>,
    pub other_train: Vec<Vec<f64>>,
    pub other_test: Vec<Vec<f64>>,
}

pub fn two_class(seed: u64, per_part: usize, flip: f64) -> Result<ClassCorpus> {
    check(per_part, flip)?;
    let mut rng = stream(seed, "corpus.classes");
    let a = template(BITPLANE, &mut rng);
    let b = template(BITPLANE, &mut rng);
    Ok(ClassCorpus {
        base_train: noisy_copies(&a, per_part, flip, &mut rng),
        base_test: noisy_copies(&a, per_part, flip, &mut rng),
        other_train: noisy_copies(&b, per_part, flip, &mut rng),
        other_test: noisy_copies(&b, per_part, flip, &mut rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let c = two_room(3, 10, 0.05).unwrap();
        for part in [&c.d1a, &c.d1b, &c.d2a, &c.d2b] {
            assert_eq!(part.len(), 10);
            assert!(part.iter().all(|s| s.len() == BITPLANE && s.iter().all(|&b| b == 0.0 || b == 1.0)));
        }
        assert_eq!(c, two_room(3, 10, 0.05).unwrap());
        assert_ne!(c, two_room(4, 10, 0.05).unwrap());
        assert!(two_room(3, 0, 0.05).is_err());
    }

    #[test]
    fn flip_rate_is_respected() {
        let mut rng = stream(1, "t");
        let base = vec![0.0; 1000];
        let copies = noisy_copies(&base, 20, 0.05, &mut rng);
        let ones: f64 = copies.iter().flatten().sum();
        let rate = ones / 20_000.0;
        assert!((rate - 0.05).abs() < 0.01, "{rate}");
    }
}
