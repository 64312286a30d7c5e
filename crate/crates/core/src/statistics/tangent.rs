//! Flat tangent coordinates at a mean SRVF tree.
//!
//! Coordinates are the SRVF samples and attachment parameters, each block
//! scaled by `sqrt(λ · trapezoid weight)` so that the Euclidean norm of a
//! tangent vector equals the pre-shape dissimilarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::srvf::{trapezoid_weights, Srvf, SrvfLateral, SrvfTree, Vec2, Weights};

/// Shape of the coordinate vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TangentLayout {
    pub n_main: usize,
    pub n_lat: usize,
    pub n_laterals: usize,
}

impl TangentLayout {
    pub fn of(tree: &SrvfTree) -> Result<Self> {
        let n_lat = tree.n_lat().unwrap_or(0);
        if tree.laterals.iter().any(|l| l.q.len() != n_lat) {
            return Err(Error::Mismatch("laterals with differing sample counts".into()));
        }
        Ok(TangentLayout {
            n_main: tree.n_main(),
            n_lat,
            n_laterals: tree.laterals.len(),
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.n_main + self.n_laterals * (2 * self.n_lat + 1)
    }

    /// Equal up to the lateral sample count of a tree without laterals.
    pub fn matches(&self, other: &TangentLayout) -> bool {
        other.n_main == self.n_main
            && other.n_laterals == self.n_laterals
            && (self.n_laterals == 0 || other.n_lat == self.n_lat)
    }

    fn check(&self, other: &TangentLayout) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::Mismatch(format!("tangent layout {self:?} vs {other:?}")))
        }
    }

    /// Tangent coordinates lose the blocks whose weight is zero, so those
    /// weights are refused.
    fn require_invertible(&self, w: &Weights) -> Result<()> {
        let lateral_zero = self.n_laterals > 0 && (w.lambda_s == 0.0 || w.lambda_p == 0.0);
        if w.lambda_m == 0.0 || lateral_zero {
            return Err(Error::invalid(
                "weights",
                "tangent coordinates need positive weights on every present term",
            ));
        }
        Ok(())
    }

    /// Per-coordinate scale factors.
    pub fn scales(&self, w: &Weights) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for tw in trapezoid_weights(self.n_main) {
            let c = (w.lambda_m * tw).sqrt();
            out.extend([c, c]);
        }
        if self.n_laterals > 0 {
            let lat = trapezoid_weights(self.n_lat);
            for _ in 0..self.n_laterals {
                for tw in &lat {
                    let c = (w.lambda_s * tw).sqrt();
                    out.extend([c, c]);
                }
            }
        }
        out.extend(std::iter::repeat_n(w.lambda_p.sqrt(), self.n_laterals));
        out
    }
}

/// A tangent vector in scaled coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub layout: TangentLayout,
    pub coords: Vec<f64>,
}

impl TangentVector {
    pub fn zeros(layout: TangentLayout) -> Self {
        TangentVector {
            layout,
            coords: vec![0.0; layout.dim()],
        }
    }

    pub fn new(layout: TangentLayout, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != layout.dim() {
            return Err(Error::Mismatch(format!(
                "{} coordinates for a layout of dimension {}",
                coords.len(),
                layout.dim()
            )));
        }
        Ok(TangentVector { layout, coords })
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &TangentVector) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| a * b).sum()
    }
}

fn flatten(tree: &SrvfTree) -> Vec<f64> {
    let mut out = Vec::new();
    for v in tree.q0.samples() {
        out.extend([v.x, v.y]);
    }
    for l in &tree.laterals {
        for v in l.q.samples() {
            out.extend([v.x, v.y]);
        }
    }
    out.extend(tree.laterals.iter().map(|l| l.s));
    out
}

/// `x - μ` in scaled coordinates. `x` must already be registered to `μ`.
pub fn log_map(mu: &SrvfTree, x: &SrvfTree, w: &Weights) -> Result<TangentVector> {
    let layout = TangentLayout::of(mu)?;
    layout.check(&TangentLayout::of(x)?)?;
    layout.require_invertible(w)?;
    let coords = flatten(x)
        .iter()
        .zip(flatten(mu))
        .zip(layout.scales(w))
        .map(|((a, b), c)| c * (a - b))
        .collect();
    Ok(TangentVector { layout, coords })
}

/// Result of [`exp_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct Exponential {
    pub tree: SrvfTree,
    /// Attachment parameters that left [0, 1] and were clamped.
    pub clamped: usize,
}

/// `μ + v` with the scaling undone. Attachment parameters are clamped to
/// [0, 1]; the number clamped is reported.
pub fn exp_map(mu: &SrvfTree, v: &TangentVector, w: &Weights) -> Result<Exponential> {
    let layout = TangentLayout::of(mu)?;
    layout.check(&v.layout)?;
    layout.require_invertible(w)?;
    let scales = layout.scales(w);
    if v.coords.len() != scales.len() {
        return Err(Error::Mismatch("tangent coordinate count".into()));
    }
    let delta: Vec<f64> = v.coords.iter().zip(&scales).map(|(c, s)| c / s).collect();
    let base = flatten(mu);
    let sum: Vec<f64> = base.iter().zip(&delta).map(|(a, b)| a + b).collect();

    let take_srvf = |offset: usize, n: usize| -> Result<Srvf> {
        Srvf::from_samples(
            (0..n)
                .map(|k| Vec2::new(sum[offset + 2 * k], sum[offset + 2 * k + 1]))
                .collect(),
        )
    };
    let q0 = take_srvf(0, layout.n_main)?;
    let s_offset = 2 * layout.n_main + 2 * layout.n_lat * layout.n_laterals;
    let mut clamped = 0;
    let laterals = (0..layout.n_laterals)
        .map(|k| {
            let q = take_srvf(2 * layout.n_main + 2 * layout.n_lat * k, layout.n_lat)?;
            let raw = sum[s_offset + k];
            let s = raw.clamp(0.0, 1.0);
            if s != raw {
                clamped += 1;
            }
            Ok(SrvfLateral { q, s })
        })
        .collect::<Result<Vec<_>>>()?;
    if clamped > 0 {
        log::warn!("{clamped} attachment parameter(s) clamped to [0, 1]");
    }
    Ok(Exponential {
        tree: SrvfTree {
            q0,
            laterals,
            anchor: mu.anchor,
        },
        clamped,
    })
}
