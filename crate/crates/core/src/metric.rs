//! Tree dissimilarity, registered distance, geodesics and distance matrices.
//!
//! The pre-shape dissimilarity is a weighted sum of squared L² distances
//! between main SRVFs and index-aligned lateral SRVFs plus squared attachment
//! offsets. It is flat, so after registration the geodesic between two trees
//! is the straight line between their SRVF trees. Distances are reported as
//! the square root of the registered dissimilarity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registration::{apply_registration, register, Registration, RegistrationOptions};
use crate::srvf::{l2_dist_sq, srvft_to_tree_labeled, tree_to_srvft, Sampling, SrvfTree, Weights};
use crate::tree::{augment_pair, RootTree};

/// Discretization and registration settings shared by every analysis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub sampling: Sampling,
    pub registration: RegistrationOptions,
}

/// `λ_m |q_0^a - q_0^b|² + λ_s Σ_k |q_k^a - q_k^b|² + λ_p Σ_k (s_k^a - s_k^b)²`
/// for laterals already in correspondence order.
pub fn preshape_dissimilarity_sq(a: &SrvfTree, b: &SrvfTree, w: &Weights) -> Result<f64> {
    if a.laterals.len() != b.laterals.len() {
        return Err(Error::Mismatch(format!(
            "lateral counts {} and {}",
            a.laterals.len(),
            b.laterals.len()
        )));
    }
    let mut total = w.lambda_m * l2_dist_sq(&a.q0, &b.q0)?;
    for (la, lb) in a.laterals.iter().zip(&b.laterals) {
        total += w.lambda_s * l2_dist_sq(&la.q, &lb.q)? + w.lambda_p * (la.s - lb.s).powi(2);
    }
    Ok(total)
}

/// Two trees augmented against each other, with `b` registered onto `a`.
#[derive(Debug, Clone)]
pub struct RegisteredPair {
    pub a: SrvfTree,
    /// `b` before alignment (lateral order as built).
    pub b: SrvfTree,
    pub b_registered: SrvfTree,
    pub registration: Registration,
}

impl RegisteredPair {
    pub fn cost(&self) -> f64 {
        self.registration.cost
    }
}

/// Augments, converts and registers `b` onto `a`.
pub fn register_trees(a: &RootTree, b: &RootTree, w: &Weights, opts: &AnalysisOptions) -> Result<RegisteredPair> {
    let (a_aug, b_aug) = augment_pair(a, b);
    let qa = tree_to_srvft(&a_aug, opts.sampling)?;
    let qb = tree_to_srvft(&b_aug, opts.sampling)?;
    let registration = register(&qa, &qb, w, &opts.registration)?;
    let b_registered = apply_registration(&qb, &registration)?;
    Ok(RegisteredPair {
        a: qa,
        b: qb,
        b_registered,
        registration,
    })
}

/// Registered squared dissimilarity between two roots.
pub fn distance_sq(a: &RootTree, b: &RootTree, w: &Weights, opts: &AnalysisOptions) -> Result<f64> {
    // identical geometry is at distance zero; skip the rounding noise
    if a.main() == b.main() && a.laterals() == b.laterals() {
        return Ok(0.0);
    }
    Ok(register_trees(a, b, w, opts)?.cost())
}

/// Registered distance: the square root of [`distance_sq`].
pub fn distance(a: &RootTree, b: &RootTree, w: &Weights, opts: &AnalysisOptions) -> Result<f64> {
    Ok(distance_sq(a, b, w, opts)?.max(0.0).sqrt())
}

/// Samples of the straight path between a tree and a registered partner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Geodesic {
    pub steps: Vec<SrvfTree>,
    pub r_values: Vec<f64>,
    pub registration: Registration,
}

impl Geodesic {
    /// Reconstructs each step. Labels give, per output lateral, its index in
    /// the shared correspondence order.
    pub fn trees(&self, id_prefix: &str) -> Result<Vec<(RootTree, Vec<usize>)>> {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, q)| srvft_to_tree_labeled(q, &format!("{id_prefix}{i}")))
            .collect()
    }

    /// Sum of pre-shape distances between consecutive steps.
    pub fn path_length(&self, w: &Weights) -> Result<f64> {
        self.steps
            .windows(2)
            .map(|p| preshape_dissimilarity_sq(&p[0], &p[1], w).map(f64::sqrt))
            .sum()
    }

    pub fn midpoint(&self) -> &SrvfTree {
        &self.steps[self.steps.len() / 2]
    }
}

/// Geodesic from `a` to `b` with `steps` uniformly spaced samples in `r`,
/// endpoints included.
pub fn geodesic(a: &RootTree, b: &RootTree, w: &Weights, steps: usize, opts: &AnalysisOptions) -> Result<Geodesic> {
    if steps < 2 {
        return Err(Error::invalid("geodesic", format!("need at least 2 steps, got {steps}")));
    }
    let pair = register_trees(a, b, w, opts)?;
    geodesic_between(&pair.a, &pair.b_registered, steps, pair.registration)
}

/// Straight-line samples between two registered SRVF trees.
pub fn geodesic_between(a: &SrvfTree, b: &SrvfTree, steps: usize, registration: Registration) -> Result<Geodesic> {
    let r_values: Vec<f64> = (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect();
    let steps = r_values
        .iter()
        .map(|&r| a.lerp(b, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(Geodesic {
        steps,
        r_values,
        registration,
    })
}

/// A pair whose distance could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub i: usize,
    pub j: usize,
    pub error: String,
}

/// Symmetric matrix of registered distances with a zero diagonal. Entries of
/// failed pairs are NaN and listed in `failures`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    #[serde(default)]
    pub failures: Vec<PairFailure>,
}

impl DistanceMatrix {
    /// Validates a dense matrix (square, symmetric within 1e-9, nonnegative).
    pub fn new(labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let m = DistanceMatrix {
            labels,
            values,
            failures: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.values.len() != n || self.values.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("distance matrix", format!("expected a {n}x{n} matrix")));
        }
        for i in 0..n {
            if self.values[i][i] != 0.0 {
                return Err(Error::invalid("distance matrix", format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = self.values[i][j];
                if v.is_nan() {
                    return Err(Error::invalid("distance matrix", format!("missing entry ({i}, {j})")));
                }
                if v < 0.0 {
                    return Err(Error::invalid("distance matrix", format!("negative entry ({i}, {j})")));
                }
                if (v - self.values[j][i]).abs() > 1e-9 {
                    return Err(Error::invalid("distance matrix", format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    /// CSV: a header row of ids followed by the numeric rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.labels).expect("in-memory write");
        for row in &self.values {
            w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |e: csv::Error| Error::invalid("distance matrix", format!("csv: {e}"));
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let labels: Vec<String> = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let values = r
            .records()
            .map(|rec| {
                rec.map_err(bad)?
                    .iter()
                    .map(|f| {
                        f.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::invalid("distance matrix", format!("bad number {f:?}: {e}")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        DistanceMatrix::new(labels, values)
    }
}

/// Registered distances between all unordered pairs, computed in parallel on
/// the current rayon pool. Each pair is augmented independently; the output
/// does not depend on scheduling.
pub fn pairwise_matrix(trees: &[RootTree], w: &Weights, opts: &AnalysisOptions) -> Result<DistanceMatrix> {
    if trees.len() < 2 {
        return Err(Error::invalid("collection", "need at least 2 trees for a distance matrix"));
    }
    w.validate()?;
    let n = trees.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let results: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| distance(&trees[i], &trees[j], w, opts))
        .collect();

    let mut values = vec![vec![0.0; n]; n];
    let mut failures = Vec::new();
    for (&(i, j), res) in pairs.iter().zip(results) {
        let v = match res {
            Ok(d) => d,
            Err(e) => {
                log::warn!("pair ({i}, {j}) failed: {e}");
                failures.push(PairFailure {
                    i,
                    j,
                    error: e.to_string(),
                });
                f64::NAN
            }
        };
        values[i][j] = v;
        values[j][i] = v;
    }
    Ok(DistanceMatrix {
        labels: trees.iter().map(|t| t.id().to_string()).collect(),
        values,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srvf::{Srvf, SrvfLateral, Vec2};
    use crate::synthetic::{straight_root, comb_root};
    use crate::tree::Point2;
    use std::f64::consts::SQRT_2;

    fn const_tree(main: f64, lats: &[(f64, f64)]) -> SrvfTree {
        SrvfTree {
            q0: Srvf::from_samples(vec![Vec2::new(main, 0.0); 11]).unwrap(),
            laterals: lats
                .iter()
                .map(|&(v, s)| SrvfLateral {
                    q: Srvf::from_samples(vec![Vec2::new(v, 0.0); 7]).unwrap(),
                    s,
                })
                .collect(),
            anchor: Point2::ORIGIN,
        }
    }

    #[test]
    fn dissimilarity_examples() {
        let w = Weights::default();
        let a = const_tree(1.0, &[(0.5, 0.3)]);
        assert_eq!(preshape_dissimilarity_sq(&a, &a, &w).unwrap(), 0.0);

        let d = preshape_dissimilarity_sq(&const_tree(1.0, &[]), &const_tree(SQRT_2, &[]), &w).unwrap();
        assert!((d - 0.02 * (SQRT_2 - 1.0).powi(2)).abs() < 1e-12);
        assert!((d - 0.0034315).abs() < 1e-7);

        let p = Weights::new(0.02, 1.0, 1.0).unwrap();
        let d = preshape_dissimilarity_sq(&const_tree(1.0, &[(0.5, 0.3)]), &const_tree(1.0, &[(0.5, 0.4)]), &p).unwrap();
        assert!((d - 0.01).abs() < 1e-12);

        assert!(preshape_dissimilarity_sq(&a, &const_tree(1.0, &[]), &w).is_err());
    }

    #[test]
    fn self_distance_is_zero() {
        let t = comb_root("c", &[(0.3, 0.2), (0.6, 0.3)]);
        let opts = AnalysisOptions::default();
        assert_eq!(distance(&t, &t, &Weights::default(), &opts).unwrap(), 0.0);
    }

    #[test]
    fn straight_midpoint_length() {
        let a = straight_root("a", 1.0);
        let b = straight_root("b", 4.0);
        let g = geodesic(&a, &b, &Weights::default(), 3, &AnalysisOptions::default()).unwrap();
        let (mid, _) = &g.trees("g").unwrap()[1];
        assert!((mid.main().length() - 2.25).abs() < 0.01, "{}", mid.main().length());
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let m = DistanceMatrix::new(
            vec!["a".into(), "b,c".into()],
            vec![vec![0.0, 1.5], vec![1.5, 0.0]],
        )
        .unwrap();
        let text = m.to_csv();
        assert!(text.starts_with("a,\"b,c\"\n"));
        assert_eq!(DistanceMatrix::from_csv(&text).unwrap(), m);

        assert!(DistanceMatrix::new(vec!["a".into(), "b".into()], vec![vec![0.0, 1.0], vec![1.1, 0.0]]).is_err());
        assert!(DistanceMatrix::new(vec!["a".into(), "b".into()], vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
    }

    #[test]
    fn matrix_needs_two_trees() {
        let t = straight_root("a", 1.0);
        assert!(pairwise_matrix(&[t], &Weights::default(), &AnalysisOptions::default()).is_err());
    }
}
