//! Karcher mean of a root collection by gradient descent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tangent::{exp_map, log_map, TangentLayout, TangentVector};
use crate::error::{Error, Result};
use crate::metric::AnalysisOptions;
use crate::registration::{apply_registration, register, Registration};
use crate::srvf::{tree_to_srvft, SrvfTree, Weights};
use crate::tree::{augment_collection, RootTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KarcherOptions {
    /// Initial step along the mean tangent vector.
    pub step: f64,
    pub max_iter: usize,
    /// Stop once the mean tangent vector is shorter than this.
    pub tol: f64,
    /// Step halvings tried before giving up on an iteration.
    pub max_halvings: usize,
}

impl Default for KarcherOptions {
    fn default() -> Self {
        KarcherOptions {
            step: 0.5,
            max_iter: 50,
            tol: 1e-6,
            max_halvings: 8,
        }
    }
}

/// Outcome of [`karcher_mean`].
#[derive(Debug, Clone)]
pub struct KarcherMean {
    pub mean: SrvfTree,
    /// Each augmented sample registered to the final mean.
    pub registered: Vec<SrvfTree>,
    pub registrations: Vec<Registration>,
    /// Index of the sample used as the starting point.
    pub medoid: usize,
    /// Sum of squared registered distances at the medoid and after each
    /// accepted step.
    pub objective_history: Vec<f64>,
    /// Norm of the mean tangent vector at each iteration.
    pub gradient_norms: Vec<f64>,
    pub converged: bool,
    pub ids: Vec<String>,
}

impl KarcherMean {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("at least the initial value")
    }

    pub fn iterations(&self) -> usize {
        self.gradient_norms.len()
    }
}

/// Augments the collection and converts every tree to SRVF form.
pub fn collection_srvfts(trees: &[RootTree], opts: &AnalysisOptions) -> Result<Vec<SrvfTree>> {
    augment_collection(trees)?
        .par_iter()
        .map(|t| tree_to_srvft(t, opts.sampling))
        .collect()
}

struct Aligned {
    registered: Vec<SrvfTree>,
    registrations: Vec<Registration>,
    objective: f64,
}

fn align_all(mu: &SrvfTree, xs: &[SrvfTree], w: &Weights, opts: &AnalysisOptions) -> Result<Aligned> {
    let pairs = xs
        .par_iter()
        .map(|x| {
            let r = register(mu, x, w, &opts.registration)?;
            Ok((apply_registration(x, &r)?, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let objective = pairs.iter().map(|(_, r)| r.cost).sum();
    let (registered, registrations) = pairs.into_iter().unzip();
    Ok(Aligned {
        registered,
        registrations,
        objective,
    })
}

/// Index minimizing the summed registered distance to the other samples.
/// Ties go to the smaller index.
pub fn medoid(xs: &[SrvfTree], w: &Weights, opts: &AnalysisOptions) -> Result<usize> {
    let m = xs.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let d = pairs
        .par_iter()
        .map(|&(i, j)| register(&xs[i], &xs[j], w, &opts.registration).map(|r| r.cost.max(0.0).sqrt()))
        .collect::<Result<Vec<f64>>>()?;
    let mut sums = vec![0.0; m];
    for (&(i, j), d) in pairs.iter().zip(d) {
        sums[i] += d;
        sums[j] += d;
    }
    Ok(sums
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if *s < sums[best] { i } else { best }))
}

fn mean_tangent(mu: &SrvfTree, registered: &[SrvfTree], w: &Weights) -> Result<TangentVector> {
    let mut acc = TangentVector::zeros(TangentLayout::of(mu)?);
    for x in registered {
        let v = log_map(mu, x, w)?;
        for (a, b) in acc.coords.iter_mut().zip(&v.coords) {
            *a += b;
        }
    }
    let m = registered.len() as f64;
    acc.coords.iter_mut().for_each(|c| *c /= m);
    Ok(acc)
}

/// Karcher mean of a collection.
///
/// The collection is augmented to a common lateral count and the mean starts
/// at the medoid. Each iteration registers every sample to the current mean,
/// averages the tangent vectors and moves the mean along the average. A step
/// that would raise the objective is halved until it does not.
pub fn karcher_mean(
    trees: &[RootTree],
    w: &Weights,
    analysis: &AnalysisOptions,
    opts: &KarcherOptions,
) -> Result<KarcherMean> {
    if trees.is_empty() {
        return Err(Error::invalid("collection", "empty collection"));
    }
    if !(opts.step > 0.0 && opts.step.is_finite()) || !(opts.tol >= 0.0) {
        return Err(Error::invalid("karcher options", "step must be positive and tol nonnegative"));
    }
    w.validate()?;
    let ids = trees.iter().map(|t| t.id().to_string()).collect();
    let xs = collection_srvfts(trees, analysis)?;
    let start = medoid(&xs, w, analysis)?;
    let mut mu = xs[start].clone();
    let mut current = align_all(&mu, &xs, w, analysis)?;
    let mut history = vec![current.objective];
    let mut gradient_norms = Vec::new();
    let mut converged = false;

    for iter in 0..opts.max_iter {
        let v = mean_tangent(&mu, &current.registered, w)?;
        let g = v.norm();
        gradient_norms.push(g);
        log::debug!("karcher iteration {iter}: objective {:.6e}, |v| {g:.3e}", current.objective);
        if g < opts.tol {
            converged = true;
            break;
        }
        let mut step = opts.step;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut scaled = v.clone();
            scaled.coords.iter_mut().for_each(|c| *c *= step);
            let candidate = exp_map(&mu, &scaled, w)?.tree;
            let aligned = align_all(&candidate, &xs, w, analysis)?;
            if aligned.objective <= current.objective {
                accepted = Some((candidate, aligned));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((candidate, aligned)) => {
                mu = candidate;
                current = aligned;
                history.push(current.objective);
            }
            None => {
                log::info!("karcher descent stalled after {} iterations", iter + 1);
                break;
            }
        }
    }

    Ok(KarcherMean {
        mean: mu,
        registered: current.registered,
        registrations: current.registrations,
        medoid: start,
        objective_history: history,
        gradient_norms,
        converged,
        ids,
    })
}
