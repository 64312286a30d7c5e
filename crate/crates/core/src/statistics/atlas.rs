//! Tangent PCA at the Karcher mean, mode sweeps and random synthesis.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::karcher::{karcher_mean, KarcherMean, KarcherOptions};
use super::tangent::{exp_map, log_map, TangentLayout, TangentVector};
use crate::error::{Error, Result};
use crate::metric::AnalysisOptions;
use crate::srvf::{srvft_to_tree_labeled, Sampling, SrvfTree, Weights};
use crate::tree::RootTree;

/// Fraction of total variance the retained modes must exceed.
pub const RETAINED_VARIANCE: f64 = 0.99;

/// Rejection sampling gives up after this many draws for one coefficient.
const MAX_DRAWS: usize = 100_000;

/// Mean shape with principal modes of the tangent covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atlas {
    pub mean: SrvfTree,
    pub layout: TangentLayout,
    pub sampling: Sampling,
    pub weights: Weights,
    /// Covariance eigenvalues, descending. Only positive ones are kept.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors in scaled tangent coordinates, one per
    /// eigenvalue.
    pub modes: Vec<Vec<f64>>,
    pub retained: usize,
    /// `training_coeffs[i][j] = <v_i, mode_j> / sqrt(λ_j)`.
    pub training_coeffs: Vec<Vec<f64>>,
    pub ids: Vec<String>,
}

/// A tree synthesized from mode coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub tree: RootTree,
    /// For each lateral of `tree`, its index in the atlas lateral order.
    pub labels: Vec<usize>,
    pub coeffs: Vec<f64>,
    /// Attachment parameters clamped into [0, 1].
    pub clamped: usize,
}

/// Covariance eigenpairs from the Gram matrix of the tangent vectors.
fn gram_eigen(vs: &[TangentVector]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = vs.len();
    if m < 2 {
        return (Vec::new(), Vec::new());
    }
    let denom = (m - 1) as f64;
    let gram = DMatrix::from_fn(m, m, |i, j| vs[i].dot(&vs[j]) / denom);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let top = eig.eigenvalues[order[0]].max(0.0);
    let cutoff = top * 1e-12 * m as f64;
    let dim = vs[0].coords.len();
    let mut values = Vec::new();
    let mut modes: Vec<Vec<f64>> = Vec::new();
    for &k in &order {
        let lambda = eig.eigenvalues[k];
        if !(lambda > cutoff) || top == 0.0 {
            break;
        }
        // Λ = V u / sqrt((m - 1) λ)
        let u = eig.eigenvectors.column(k);
        let mut dir = vec![0.0; dim];
        for (i, v) in vs.iter().enumerate() {
            for (d, c) in dir.iter_mut().zip(&v.coords) {
                *d += u[i] * c;
            }
        }
        // modified Gram-Schmidt against the modes already accepted
        for prev in &modes {
            let p: f64 = dir.iter().zip(prev).map(|(a, b)| a * b).sum();
            dir.iter_mut().zip(prev).for_each(|(a, b)| *a -= p * b);
        }
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= (denom * lambda).sqrt() * 1e-6 {
            continue;
        }
        dir.iter_mut().for_each(|x| *x /= norm);
        values.push(lambda);
        modes.push(dir);
    }
    (values, modes)
}

/// Smallest count whose cumulative variance fraction exceeds
/// [`RETAINED_VARIANCE`]. Zero when there is no variance.
pub fn retained_count(eigenvalues: &[f64]) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc / total > RETAINED_VARIANCE {
            return i + 1;
        }
    }
    eigenvalues.len()
}

/// Builds the atlas from samples already registered to `mean`.
pub fn atlas_from_registered(
    mean: &SrvfTree,
    registered: &[SrvfTree],
    w: &Weights,
    sampling: Sampling,
    ids: Vec<String>,
) -> Result<Atlas> {
    if registered.len() < 2 {
        return Err(Error::invalid("collection", "an atlas needs at least 2 trees"));
    }
    let tangents = tangent_vectors(mean, registered, w)?;
    let (eigenvalues, modes) = gram_eigen(&tangents);
    let retained = retained_count(&eigenvalues);
    let training_coeffs = tangents
        .iter()
        .map(|v| {
            eigenvalues
                .iter()
                .zip(&modes)
                .map(|(l, m)| v.coords.iter().zip(m).map(|(a, b)| a * b).sum::<f64>() / l.sqrt())
                .collect()
        })
        .collect();
    Ok(Atlas {
        mean: mean.clone(),
        layout: TangentLayout::of(mean)?,
        sampling,
        weights: *w,
        eigenvalues,
        modes,
        retained,
        training_coeffs,
        ids,
    })
}

pub fn tangent_vectors(mean: &SrvfTree, registered: &[SrvfTree], w: &Weights) -> Result<Vec<TangentVector>> {
    registered.iter().map(|x| log_map(mean, x, w)).collect()
}

/// Karcher mean followed by tangent PCA.
pub fn fit_atlas(
    trees: &[RootTree],
    w: &Weights,
    analysis: &AnalysisOptions,
    opts: &KarcherOptions,
) -> Result<(Atlas, KarcherMean)> {
    if trees.len() < 2 {
        return Err(Error::invalid("collection", "an atlas needs at least 2 trees"));
    }
    let k = karcher_mean(trees, w, analysis, opts)?;
    let atlas = atlas_from_registered(&k.mean, &k.registered, w, analysis.sampling, k.ids.clone())?;
    Ok((atlas, k))
}

impl Atlas {
    /// Total variance (sum of eigenvalues).
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn retained_ratio(&self) -> f64 {
        let total = self.total_variance();
        if total == 0.0 {
            return 1.0;
        }
        self.eigenvalues[..self.retained].iter().sum::<f64>() / total
    }

    /// `Σ_j b_j sqrt(λ_j) Λ_j` over the first `coeffs.len()` modes.
    pub fn tangent(&self, coeffs: &[f64]) -> Result<TangentVector> {
        if coeffs.len() > self.modes.len() {
            return Err(Error::Mismatch(format!(
                "{} coefficients for {} modes",
                coeffs.len(),
                self.modes.len()
            )));
        }
        let mut v = TangentVector::zeros(self.layout);
        for ((b, l), m) in coeffs.iter().zip(&self.eigenvalues).zip(&self.modes) {
            let c = b * l.sqrt();
            v.coords.iter_mut().zip(m).for_each(|(x, y)| *x += c * y);
        }
        Ok(v)
    }

    /// SRVF tree at the given mode coefficients.
    pub fn srvft(&self, coeffs: &[f64]) -> Result<(SrvfTree, usize)> {
        let e = exp_map(&self.mean, &self.tangent(coeffs)?, &self.weights)?;
        Ok((e.tree, e.clamped))
    }

    /// Reconstructed root at the given mode coefficients.
    pub fn synthesize(&self, coeffs: &[f64], id: &str) -> Result<Synthesis> {
        let (q, clamped) = self.srvft(coeffs)?;
        let (tree, labels) = srvft_to_tree_labeled(&q, id)?;
        Ok(Synthesis {
            tree,
            labels,
            coeffs: coeffs.to_vec(),
            clamped,
        })
    }

    pub fn mean_tree(&self, id: &str) -> Result<Synthesis> {
        self.synthesize(&[], id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("atlas serializes")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let atlas: Atlas = serde_json::from_str(text).map_err(|source| Error::Parse {
            origin: origin.to_string(),
            source,
        })?;
        atlas.validate()?;
        Ok(atlas)
    }

    fn validate(&self) -> Result<()> {
        let layout = TangentLayout::of(&self.mean)?;
        if !layout.matches(&self.layout) {
            return Err(Error::invalid("atlas", "layout does not match the mean"));
        }
        let dim = self.layout.dim();
        if self.modes.len() != self.eigenvalues.len() || self.modes.iter().any(|m| m.len() != dim) {
            return Err(Error::invalid("atlas", "modes do not match eigenvalues and layout"));
        }
        if self.retained > self.modes.len() {
            return Err(Error::invalid("atlas", "retained count exceeds mode count"));
        }
        if self.eigenvalues.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::invalid("atlas", "negative eigenvalue"));
        }
        self.weights.validate()
    }
}

/// Tree at `alpha` standard deviations along mode `i` (0-based, below the
/// retained count).
pub fn mode_path(atlas: &Atlas, i: usize, alpha: f64) -> Result<Synthesis> {
    if i >= atlas.retained {
        return Err(Error::invalid(
            "mode index",
            format!("mode {i} out of range; {} retained", atlas.retained),
        ));
    }
    let mut coeffs = vec![0.0; i + 1];
    coeffs[i] = alpha;
    atlas.synthesize(&coeffs, &format!("mode{}_{alpha}", i + 1))
}

/// Standard normal draws redrawn until they fall inside `range`.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, count: usize, range: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid("coefficient range", format!("[{lo}, {hi}]")));
    }
    (0..count)
        .map(|_| {
            for _ in 0..MAX_DRAWS {
                let b: f64 = rng.sample(StandardNormal);
                if (lo..=hi).contains(&b) {
                    return Ok(b);
                }
            }
            Err(Error::Degenerate(format!(
                "no standard normal draw fell in [{lo}, {hi}] after {MAX_DRAWS} tries"
            )))
        })
        .collect()
}

/// Random tree: one truncated-normal coefficient per retained mode.
pub fn sample_random<R: Rng + ?Sized>(atlas: &Atlas, rng: &mut R, range: (f64, f64), id: &str) -> Result<Synthesis> {
    if atlas.retained == 0 {
        return Err(Error::Degenerate("atlas has no retained modes to sample".into()));
    }
    let coeffs = truncated_normal(rng, atlas.retained, range)?;
    atlas.synthesize(&coeffs, id)
}
