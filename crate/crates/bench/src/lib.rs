//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use treeshape::synthetic::{random_tree, SynthParams};
use treeshape::tree::augment_pair;
use treeshape::{tree_to_srvft, RootTree, Sampling, SrvfTree};

/// Random roots with exactly `laterals` laterals each.
pub fn roots(seed: u64, count: usize, laterals: usize) -> Vec<RootTree> {
    let params = SynthParams {
        lateral_count: (laterals, laterals),
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_tree(&mut rng, &format!("r{i}"), &params)).collect()
}

/// A pair whose augmented lateral count is `na + nb`.
pub fn pair(na: usize, nb: usize) -> (RootTree, RootTree) {
    let a = roots(1, 1, na).remove(0);
    let b = roots(2, 1, nb).remove(0).with_id("b");
    (a, b)
}

/// The pair augmented and sampled, ready for registration.
pub fn srvft_pair(na: usize, nb: usize, sampling: Sampling) -> (SrvfTree, SrvfTree) {
    let (a, b) = pair(na, nb);
    let (a, b) = augment_pair(&a, &b);
    (tree_to_srvft(&a, sampling).unwrap(), tree_to_srvft(&b, sampling).unwrap())
}
