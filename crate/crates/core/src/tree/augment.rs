//! Virtual-branch augmentation and biological summary parameters.

use super::{Branch, Lateral, RootTree};
use crate::error::{Error, Result};

fn with_virtuals(tree: &RootTree, ts: impl IntoIterator<Item = f64>) -> RootTree {
    let main = tree.main();
    let mut laterals = tree.laterals().to_vec();
    laterals.extend(
        ts.into_iter()
            .map(|t| Lateral::new(t, Branch::virtual_at(main.point_at(t)))),
    );
    // the inputs are valid and virtual branches sit on the main, so this
    // cannot fail
    RootTree::new(tree.id(), main.clone(), laterals).expect("augmented tree stays valid")
}

/// Gives each tree a virtual lateral at every attachment position of the
/// other, so both end with `n_a + n_b` laterals.
pub fn augment_pair(a: &RootTree, b: &RootTree) -> (RootTree, RootTree) {
    let a_ts: Vec<f64> = a.laterals().iter().map(|l| l.t).collect();
    let b_ts: Vec<f64> = b.laterals().iter().map(|l| l.t).collect();
    (with_virtuals(a, b_ts), with_virtuals(b, a_ts))
}

/// Equalizes lateral counts across a collection: tree `i` gains a virtual
/// lateral at every attachment position (with multiplicity) of every other
/// tree.
pub fn augment_collection(trees: &[RootTree]) -> Result<Vec<RootTree>> {
    if trees.is_empty() {
        return Err(Error::invalid("collection", "empty collection"));
    }
    Ok(trees
        .iter()
        .enumerate()
        .map(|(i, tree)| {
            let others = trees
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, other)| other.laterals().iter().map(|l| l.t));
            with_virtuals(tree, others)
        })
        .collect())
}

/// Main root length, mean lateral length and population standard deviation
/// of lateral lengths. Virtual laterals are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BioParams {
    pub main_length: f64,
    pub mean_lateral_length: f64,
    pub std_lateral_length: f64,
}

impl BioParams {
    pub const NAMES: [&'static str; 3] = [
        "main_length",
        "mean_lateral_length",
        "std_lateral_length",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.main_length,
            self.mean_lateral_length,
            self.std_lateral_length,
        ]
    }
}

pub fn extract_bio_params(tree: &RootTree) -> BioParams {
    let lengths: Vec<f64> = tree.real_laterals().map(|l| l.branch.length()).collect();
    let (mean, std) = if lengths.is_empty() {
        (0.0, 0.0)
    } else {
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<f64>() / n;
        let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    BioParams {
        main_length: tree.main().length(),
        mean_lateral_length: mean,
        std_lateral_length: std,
    }
}
