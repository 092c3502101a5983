//! Seed derivation for reproducible trial grids.
//!
//! Every trial seed is a pure function of the base seed and the trial's grid
//! coordinates, so results do not depend on execution order or worker count.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of coordinates into a seed.
pub fn derive(base: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix64(base), |acc, &c| mix64(acc ^ mix64(c)))
}

/// Seeds for one trial: the ground-truth draw and the sampling mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub points: u64,
    pub mask: u64,
    pub noise: u64,
}

impl TrialSeeds {
    pub fn new(base: u64, cell: &[u64], trial: u64) -> Self {
        let mut coords = cell.to_vec();
        coords.push(trial);
        let root = derive(base, &coords);
        Self {
            points: mix64(root ^ 1),
            mask: mix64(root ^ 2),
            noise: mix64(root ^ 3),
        }
    }
}
