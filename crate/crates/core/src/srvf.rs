//! Square-root velocity functions of branches and whole trees.
//!
//! A branch `β` maps to `q(t) = β'(t) / sqrt(|β'(t)|)` (zero where the
//! derivative vanishes). Derivatives are central differences on the
//! arc-length resampled curve, one-sided at the endpoints; integrals use the
//! trapezoid rule on the same uniform grid, so `∫|q|² dt` is the curve length
//! and the elastic distance between curves is the plain L² distance between
//! their SRVFs.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{point_at_arclength, cumulative_lengths, Branch, Lateral, Point2, RootTree};

pub type Vec2 = Vector2<f64>;

/// Lateral SRVFs with L² norm below this are reconstructed as virtual.
pub const EPS_NULL: f64 = 1e-8;

const ZERO_SPEED: f64 = 1e-12;

/// Sample counts for main and lateral curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub n_main: usize,
    pub n_lat: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            n_main: 100,
            n_lat: 50,
        }
    }
}

/// Trapezoid weights on `n` uniform nodes of [0, 1].
pub fn trapezoid_weights(n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two nodes");
    let h = 1.0 / (n - 1) as f64;
    let mut w = vec![h; n];
    w[0] = h / 2.0;
    w[n - 1] = h / 2.0;
    w
}

/// Relative weights of the main, lateral-shape and attachment-position terms
/// of the tree dissimilarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub lambda_m: f64,
    pub lambda_s: f64,
    pub lambda_p: f64,
}

impl Weights {
    pub fn new(lambda_m: f64, lambda_s: f64, lambda_p: f64) -> Result<Self> {
        let w = Weights {
            lambda_m,
            lambda_s,
            lambda_p,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_m, self.lambda_s, self.lambda_p];
        if all.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::invalid("weights", format!("weights must be finite and nonnegative: {all:?}")));
        }
        if all.iter().all(|l| *l == 0.0) {
            return Err(Error::invalid("weights", "at least one weight must be positive"));
        }
        Ok(())
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            lambda_m: 0.02,
            lambda_s: 1.0,
            lambda_p: 1.0,
        }
    }
}

/// An SRVF sampled at `n` uniform parameters on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Srvf {
    samples: Vec<Vec2>,
}

impl Srvf {
    pub fn from_samples(samples: Vec<Vec2>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("srvf", "need at least 2 samples"));
        }
        if samples.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::invalid("srvf", "non-finite sample"));
        }
        Ok(Srvf { samples })
    }

    pub fn zeros(n: usize) -> Self {
        Srvf {
            samples: vec![Vec2::zeros(); n],
        }
    }

    pub fn samples(&self) -> &[Vec2] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `∫ |q|² dt`, which equals the length of the curve.
    pub fn norm_sq(&self) -> f64 {
        trapezoid_weights(self.len())
            .iter()
            .zip(&self.samples)
            .map(|(w, q)| w * q.norm_squared())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn rotated(&self, rot: &Matrix2<f64>) -> Srvf {
        Srvf {
            samples: self.samples.iter().map(|q| rot * q).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Srvf {
        Srvf {
            samples: self.samples.iter().map(|q| q * c).collect(),
        }
    }

    /// Linear interpolation of the sampled function at parameter `u`.
    pub fn eval(&self, u: f64) -> Vec2 {
        let n = self.len();
        let x = u.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        let f = x - i as f64;
        self.samples[i] * (1.0 - f) + self.samples[i + 1] * f
    }

    fn combine(&self, other: &Srvf, f: impl Fn(&Vec2, &Vec2) -> Vec2) -> Srvf {
        Srvf {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }
}

/// SRVF of a branch sampled at `n` uniform parameters.
///
/// The branch is first resampled uniformly in arc length. Virtual branches
/// map to all-zero samples.
pub fn to_srvf(b: &Branch, n: usize) -> Result<Srvf> {
    if n < 2 {
        return Err(Error::invalid("sample count", format!("need n >= 2, got {n}")));
    }
    if b.is_virtual() {
        return Ok(Srvf::zeros(n));
    }
    let pts = b.resample(n)?;
    let p = pts.points();
    let h = 1.0 / (n - 1) as f64;
    let diff = |a: &Point2, b: &Point2, scale: f64| Vec2::new((b.x - a.x) / scale, (b.y - a.y) / scale);
    let samples = (0..n)
        .map(|i| {
            let d = if i == 0 {
                diff(&p[0], &p[1], h)
            } else if i == n - 1 {
                diff(&p[n - 2], &p[n - 1], h)
            } else {
                diff(&p[i - 1], &p[i + 1], 2.0 * h)
            };
            let speed = d.norm();
            if speed < ZERO_SPEED {
                Vec2::zeros()
            } else {
                d / speed.sqrt()
            }
        })
        .collect();
    Ok(Srvf { samples })
}

/// Integrates `q |q|` from `start`; the inverse of [`to_srvf`] up to
/// discretization error. A zero SRVF gives a virtual branch at `start`.
pub fn from_srvf(q: &Srvf, start: Point2) -> Branch {
    let pts = integrate(q, start);
    Branch::new(pts).unwrap_or_else(|_| Branch::virtual_at(start))
}

fn integrate(q: &Srvf, start: Point2) -> Vec<Point2> {
    let n = q.len();
    let h = 1.0 / (n - 1) as f64;
    let vel: Vec<Vec2> = q.samples.iter().map(|v| v * v.norm()).collect();
    let mut out = Vec::with_capacity(n);
    let mut cur = start;
    out.push(cur);
    for w in vel.windows(2) {
        let step = (w[0] + w[1]) * (h / 2.0);
        cur = cur.translate(step.x, step.y);
        out.push(cur);
    }
    out
}

/// `∫ |q1 - q2|² dt` by the trapezoid rule.
pub fn l2_dist_sq(q1: &Srvf, q2: &Srvf) -> Result<f64> {
    if q1.len() != q2.len() {
        return Err(Error::Mismatch(format!(
            "srvf sample counts {} and {}",
            q1.len(),
            q2.len()
        )));
    }
    Ok(trapezoid_weights(q1.len())
        .iter()
        .zip(q1.samples.iter().zip(&q2.samples))
        .map(|(w, (a, b))| w * (a - b).norm_squared())
        .sum())
}

/// A lateral in SRVF form: its SRVF and its attachment parameter on the main.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrvfLateral {
    pub q: Srvf,
    pub s: f64,
}

/// SRVF representation of a whole tree.
///
/// Laterals built by [`tree_to_srvft`] are sorted by `s`; after registration
/// they are in correspondence order with the reference tree instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrvfTree {
    pub q0: Srvf,
    pub laterals: Vec<SrvfLateral>,
    /// Start of the main curve. SRVFs are translation invariant, so this is
    /// carried alongside to place reconstructions.
    pub anchor: Point2,
}

impl SrvfTree {
    pub fn n_main(&self) -> usize {
        self.q0.len()
    }

    pub fn n_lat(&self) -> Option<usize> {
        self.laterals.first().map(|l| l.q.len())
    }

    /// Same sample counts and lateral count.
    pub fn same_layout(&self, other: &SrvfTree) -> bool {
        self.q0.len() == other.q0.len()
            && self.laterals.len() == other.laterals.len()
            && self
                .laterals
                .iter()
                .zip(&other.laterals)
                .all(|(a, b)| a.q.len() == b.q.len())
    }

    fn check_layout(&self, other: &SrvfTree) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Mismatch(format!(
                "srvf trees with {} and {} laterals / differing sample counts",
                self.laterals.len(),
                other.laterals.len()
            )))
        }
    }

    /// `(1 - r) self + r other`, including the anchor.
    pub fn lerp(&self, other: &SrvfTree, r: f64) -> Result<SrvfTree> {
        self.check_layout(other)?;
        let mix = |a: &Vec2, b: &Vec2| a * (1.0 - r) + b * r;
        Ok(SrvfTree {
            q0: self.q0.combine(&other.q0, mix),
            laterals: self
                .laterals
                .iter()
                .zip(&other.laterals)
                .map(|(a, b)| SrvfLateral {
                    q: a.q.combine(&b.q, mix),
                    s: a.s * (1.0 - r) + b.s * r,
                })
                .collect(),
            anchor: self.anchor.lerp(&other.anchor, r),
        })
    }

    /// Rotates every SRVF sample.
    pub fn rotated(&self, rot: &Matrix2<f64>) -> SrvfTree {
        SrvfTree {
            q0: self.q0.rotated(rot),
            laterals: self
                .laterals
                .iter()
                .map(|l| SrvfLateral {
                    q: l.q.rotated(rot),
                    s: l.s,
                })
                .collect(),
            anchor: self.anchor,
        }
    }

    pub fn is_virtual_lateral(&self, k: usize) -> bool {
        self.laterals[k].q.norm() < EPS_NULL
    }
}

/// SRVF tree of a root: main sampled at `n_main`, laterals at `n_lat`,
/// attachment parameters copied from `t`.
pub fn tree_to_srvft(tree: &RootTree, sampling: Sampling) -> Result<SrvfTree> {
    let q0 = to_srvf(tree.main(), sampling.n_main)?;
    let laterals = tree
        .laterals()
        .iter()
        .map(|l| {
            Ok(SrvfLateral {
                q: to_srvf(&l.branch, sampling.n_lat)?,
                s: l.t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SrvfTree {
        q0,
        laterals,
        anchor: tree.main().start(),
    })
}

/// Reconstructs a root from its SRVF tree.
pub fn srvft_to_tree(srvft: &SrvfTree, id: &str) -> Result<RootTree> {
    srvft_to_tree_labeled(srvft, id).map(|(tree, _)| tree)
}

/// Like [`srvft_to_tree`], also returning for each lateral of the output tree
/// the index of the SRVF lateral it came from (for correspondence colouring).
///
/// Each lateral starts at the reconstructed main evaluated at parameter `s`;
/// the output `t` is the arc-length fraction of that point, which equals `s`
/// whenever the main has constant speed.
pub fn srvft_to_tree_labeled(srvft: &SrvfTree, id: &str) -> Result<(RootTree, Vec<usize>)> {
    let main_pts = integrate(&srvft.q0, srvft.anchor);
    let main = Branch::new(main_pts.clone())
        .map_err(|_| Error::Degenerate("reconstructed main branch has zero length".into()))?;
    let cum = cumulative_lengths(&main_pts);
    let total = *cum.last().expect("nonempty");
    let n = main_pts.len();

    let mut laterals: Vec<(usize, Lateral)> = srvft
        .laterals
        .iter()
        .enumerate()
        .map(|(k, lat)| {
            let s = lat.s.clamp(0.0, 1.0);
            let x = s * (n - 1) as f64;
            let i = (x.floor() as usize).min(n - 2);
            let f = x - i as f64;
            let start = main_pts[i].lerp(&main_pts[i + 1], f);
            let t = ((cum[i] + f * (cum[i + 1] - cum[i])) / total).clamp(0.0, 1.0);
            // keep the attachment exactly on the main's arc-length curve
            let start_on_main = point_at_arclength(&main_pts, &cum, t);
            debug_assert!(start_on_main.dist(&start) <= 1e-9 * total.max(1.0));
            let branch = if lat.q.norm() < EPS_NULL {
                Branch::virtual_at(start_on_main)
            } else {
                from_srvf(&lat.q, start_on_main)
            };
            (k, Lateral::new(t, branch))
        })
        .collect();
    laterals.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));
    let labels = laterals.iter().map(|(k, _)| *k).collect();
    let tree = RootTree::new(id, main, laterals.into_iter().map(|(_, l)| l).collect())?;
    Ok((tree, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, SQRT_2};

    fn line(len: f64) -> Branch {
        Branch::new(vec![Point2::new(0.0, 0.0), Point2::new(len, 0.0)]).unwrap()
    }

    fn arc(radius: f64, sweep: f64, n: usize) -> Branch {
        Branch::new(
            (0..n)
                .map(|i| {
                    let a = sweep * i as f64 / (n - 1) as f64;
                    Point2::new(radius * a.cos(), radius * a.sin())
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn unit_line_has_constant_srvf() {
        let q = to_srvf(&line(1.0), 20).unwrap();
        for v in q.samples() {
            assert!((v - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn doubled_line_srvf_is_sqrt2() {
        let q = to_srvf(&line(2.0), 20).unwrap();
        for v in q.samples() {
            assert!((v.x - SQRT_2).abs() < 1e-12 && v.y.abs() < 1e-12);
        }
    }

    #[test]
    fn virtual_branch_maps_to_zero() {
        let q = to_srvf(&Branch::virtual_at(Point2::new(3.0, 4.0)), 10).unwrap();
        assert_eq!(q.len(), 10);
        assert!(q.samples().iter().all(|v| *v == Vec2::zeros()));
    }

    #[test]
    fn reconstruct_constant_srvfs() {
        let b = from_srvf(&Srvf::from_samples(vec![Vec2::new(1.0, 0.0); 11]).unwrap(), Point2::ORIGIN);
        assert!(b.end().dist(&Point2::new(1.0, 0.0)) < 1e-12);
        let b = from_srvf(&Srvf::from_samples(vec![Vec2::new(SQRT_2, 0.0); 11]).unwrap(), Point2::ORIGIN);
        assert!(b.end().dist(&Point2::new(2.0, 0.0)) < 1e-12);
        assert!(from_srvf(&Srvf::zeros(5), Point2::new(1.0, 1.0)).is_virtual());
    }

    #[test]
    fn half_circle_round_trip() {
        let n = 100;
        let b = arc(1.0, PI, 400);
        let q = to_srvf(&b, n).unwrap();
        let back = from_srvf(&q, b.start());
        let reference = b.resample(n).unwrap();
        let err = back
            .points()
            .iter()
            .zip(reference.points())
            .map(|(p, r)| p.dist(r))
            .fold(0.0, f64::max);
        assert!(err < 1e-2, "max error {err}");
    }

    #[test]
    fn length_identity() {
        let b = arc(0.7, 2.0, 300);
        let q = to_srvf(&b, 100).unwrap();
        let rel = (q.norm_sq() - b.length()).abs() / b.length();
        assert!(rel < 1e-3, "{rel}");
    }

    #[test]
    fn l2_examples() {
        let a = Srvf::from_samples(vec![Vec2::new(1.0, 0.0); 9]).unwrap();
        let b = Srvf::from_samples(vec![Vec2::new(SQRT_2, 0.0); 9]).unwrap();
        assert_eq!(l2_dist_sq(&a, &a).unwrap(), 0.0);
        let d = l2_dist_sq(&a, &b).unwrap();
        assert!((d - (SQRT_2 - 1.0).powi(2)).abs() < 1e-12);
        assert!((d - 0.171573).abs() < 1e-6);
        let d3 = l2_dist_sq(&a.scaled(3.0), &b.scaled(3.0)).unwrap();
        assert!((d3 - 9.0 * d).abs() < 1e-12);
        assert!(l2_dist_sq(&a, &Srvf::zeros(4)).is_err());
    }

    #[test]
    fn rotation_equivariance() {
        let b = arc(1.3, 1.7, 50);
        let angle = 0.83;
        let rotated = b.map_points(|p| p.rotate(angle));
        let rot = *nalgebra::Rotation2::new(angle).matrix();
        let q = to_srvf(&b, 60).unwrap().rotated(&rot);
        let qr = to_srvf(&rotated, 60).unwrap();
        for (u, v) in q.samples().iter().zip(qr.samples()) {
            assert!((u - v).norm() < 1e-9);
        }
    }

    #[test]
    fn srvft_round_trip_with_virtual() {
        let main = Branch::new(crate::synthetic::curve_from_heading(Point2::ORIGIN, 1.1, 80, |u| {
            -std::f64::consts::FRAC_PI_2 + 0.4 * u
        }))
        .unwrap();
        let s = main.point_at(0.3);
        let lat = Branch::new(vec![s, s.translate(0.2, -0.05), s.translate(0.35, -0.15)]).unwrap();
        let tree = RootTree::new(
            "x",
            main.clone(),
            vec![
                Lateral::new(0.3, lat),
                Lateral::new(0.5, Branch::virtual_at(main.point_at(0.5))),
            ],
        )
        .unwrap();
        let q = tree_to_srvft(&tree, Sampling::default()).unwrap();
        assert_eq!(q.laterals.len(), 2);
        assert_eq!(q.laterals[1].s, 0.5);
        assert!(q.laterals[1].q.samples().iter().all(|v| v.norm() == 0.0));
        assert_eq!(q.anchor, Point2::ORIGIN);

        let back = srvft_to_tree(&q, "x").unwrap();
        assert_eq!(back.laterals().len(), 2);
        assert!(back.laterals()[1].branch.is_virtual());
        assert!((back.laterals()[0].t - 0.3).abs() < 1e-3);
        assert!((back.main().length() - main.length()).abs() < 1e-3);
    }

    #[test]
    fn empty_laterals() {
        let tree = RootTree::new("x", line(1.0), vec![]).unwrap();
        let q = tree_to_srvft(&tree, Sampling::default()).unwrap();
        assert!(q.laterals.is_empty());
        assert_eq!(q.n_lat(), None);
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(0.0, 0.0, 0.0).is_err());
        assert!(Weights::new(-1.0, 1.0, 1.0).is_err());
        assert!(Weights::new(0.0, 0.0, 1.0).is_ok());
        assert_eq!(Weights::default(), Weights::new(0.02, 1.0, 1.0).unwrap());
    }

    #[test]
    fn dump_is_json() {
        let tree = RootTree::new("x", line(1.0), vec![]).unwrap();
        let q = tree_to_srvft(&tree, Sampling { n_main: 3, n_lat: 3 }).unwrap();
        let v = serde_json::to_value(&q).unwrap();
        assert_eq!(v["q0"][1], serde_json::json!([1.0, 0.0]));
        let back: SrvfTree = serde_json::from_value(v).unwrap();
        assert_eq!(back, q);
    }
}
