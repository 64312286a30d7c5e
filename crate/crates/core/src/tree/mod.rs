//! Two-layer root trees: a main planar curve with lateral curves attached
//! at normalized arc-length positions along it.
//!
//! Laterals are stored base-to-tip, so the first point of every real lateral
//! sits on the main curve. Virtual laterals are zero-length placeholders (one
//! point at the attachment site) that let two trees share a lateral count.

mod augment;
mod io;

pub use augment::{augment_collection, augment_pair, extract_bio_params, BioParams};
pub use io::{load_collection, load_root, parse_collection, parse_root, save_collection, save_root};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attachment tolerance, relative to main-curve length.
pub const ATTACH_TOL_REL: f64 = 1e-3;

/// A point in the plane. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point2, f: f64) -> Point2 {
        Point2::new(
            self.x + (other.x - self.x) * f,
            self.y + (other.y - self.y) * f,
        )
    }

    pub fn scale(&self, c: f64) -> Point2 {
        Point2::new(self.x * c, self.y * c)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Point2 {
        Point2::new(self.x + dx, self.y + dy)
    }

    /// Rotates counter-clockwise about the origin.
    pub fn rotate(&self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(p: [f64; 2]) -> Self {
        Point2::new(p[0], p[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// A discretized planar curve, or a zero-length virtual branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    points: Vec<Point2>,
    is_virtual: bool,
}

impl Branch {
    /// A real branch: at least two finite points and positive length.
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid(
                "branch",
                format!("a real branch needs at least 2 points, got {}", points.len()),
            ));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(
                "branch",
                format!("non-finite coordinate {:?}", p),
            ));
        }
        let b = Branch {
            points,
            is_virtual: false,
        };
        if b.length() <= 0.0 {
            return Err(Error::invalid("branch", "zero total length"));
        }
        Ok(b)
    }

    /// A zero-length placeholder at `at`.
    pub fn virtual_at(at: Point2) -> Self {
        Branch {
            points: vec![at],
            is_virtual: true,
        }
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn is_virtual(&self) -> bool {
        self.is_virtual
    }

    pub fn start(&self) -> Point2 {
        self.points[0]
    }

    pub fn end(&self) -> Point2 {
        *self.points.last().expect("branches are nonempty")
    }

    /// Total polyline length; zero for virtual branches.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(&w[1])).sum()
    }

    /// Cumulative arc length at every vertex, starting at zero.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        cumulative_lengths(&self.points)
    }

    /// Point at normalized arc-length position `t` in [0, 1].
    pub fn point_at(&self, t: f64) -> Point2 {
        point_at_arclength(&self.points, &self.cumulative_lengths(), t)
    }

    pub fn map_points(&self, f: impl Fn(&Point2) -> Point2) -> Branch {
        Branch {
            points: self.points.iter().map(f).collect(),
            is_virtual: self.is_virtual,
        }
    }

    /// Resamples to `n` points uniformly spaced in arc length. Endpoints are
    /// kept exactly.
    pub fn resample(&self, n: usize) -> Result<Branch> {
        if self.is_virtual {
            return Err(Error::invalid("branch", "cannot resample a virtual branch"));
        }
        if n < 2 {
            return Err(Error::invalid(
                "sample count",
                format!("need n >= 2, got {n}"),
            ));
        }
        let cum = self.cumulative_lengths();
        let mut out = Vec::with_capacity(n);
        out.push(self.start());
        for i in 1..n - 1 {
            out.push(point_at_arclength(
                &self.points,
                &cum,
                i as f64 / (n - 1) as f64,
            ));
        }
        out.push(self.end());
        Ok(Branch {
            points: out,
            is_virtual: false,
        })
    }
}

pub(crate) fn cumulative_lengths(points: &[Point2]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        acc += w[0].dist(&w[1]);
        cum.push(acc);
    }
    cum
}

pub(crate) fn point_at_arclength(points: &[Point2], cum: &[f64], t: f64) -> Point2 {
    let total = *cum.last().expect("nonempty");
    if points.len() == 1 || total <= 0.0 {
        return points[0];
    }
    let target = t.clamp(0.0, 1.0) * total;
    // first vertex whose cumulative length reaches the target
    let idx = cum.partition_point(|&c| c < target);
    if idx == 0 {
        return points[0];
    }
    if idx >= points.len() {
        return points[points.len() - 1];
    }
    let seg = cum[idx] - cum[idx - 1];
    if seg <= 0.0 {
        return points[idx];
    }
    points[idx - 1].lerp(&points[idx], (target - cum[idx - 1]) / seg)
}

/// `resample_branch` as a free function.
pub fn resample_branch(b: &Branch, n: usize) -> Result<Branch> {
    b.resample(n)
}

/// A lateral branch and its attachment position on the main curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Lateral {
    pub t: f64,
    pub branch: Branch,
}

impl Lateral {
    pub fn new(t: f64, branch: Branch) -> Self {
        Lateral { t, branch }
    }
}

/// A main curve with laterals sorted by attachment position.
#[derive(Debug, Clone, PartialEq)]
pub struct RootTree {
    id: String,
    main: Branch,
    laterals: Vec<Lateral>,
}

impl RootTree {
    /// Validates and builds a tree. Laterals are stably sorted by `t`.
    pub fn new(id: impl Into<String>, main: Branch, mut laterals: Vec<Lateral>) -> Result<Self> {
        if main.is_virtual() {
            return Err(Error::invalid("root", "main branch cannot be virtual"));
        }
        let main_len = main.length();
        let tol = ATTACH_TOL_REL * main_len;
        let cum = main.cumulative_lengths();
        for (i, lat) in laterals.iter().enumerate() {
            if !lat.t.is_finite() || !(0.0..=1.0).contains(&lat.t) {
                return Err(Error::invalid(
                    "root",
                    format!("lateral {i}: t out of range [0, 1]: {}", lat.t),
                ));
            }
            if lat.branch.is_virtual() {
                continue;
            }
            let anchor = point_at_arclength(main.points(), &cum, lat.t);
            let gap = anchor.dist(&lat.branch.start());
            if gap > tol {
                return Err(Error::invalid(
                    "root",
                    format!(
                        "lateral {i}: attachment mismatch, first point is {gap:.3e} from main(t={}) (tolerance {tol:.3e})",
                        lat.t
                    ),
                ));
            }
        }
        laterals.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(RootTree {
            id: id.into(),
            main,
            laterals,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn main(&self) -> &Branch {
        &self.main
    }

    pub fn laterals(&self) -> &[Lateral] {
        &self.laterals
    }

    pub fn real_laterals(&self) -> impl Iterator<Item = &Lateral> {
        self.laterals.iter().filter(|l| !l.branch.is_virtual())
    }

    /// Drops every virtual lateral.
    pub fn without_virtual(&self) -> RootTree {
        RootTree {
            id: self.id.clone(),
            main: self.main.clone(),
            laterals: self.real_laterals().cloned().collect(),
        }
    }

    /// Applies a point map to every branch. `t` values are kept; callers
    /// must pass a similarity transform so attachments stay valid.
    pub fn map_points(&self, f: impl Fn(&Point2) -> Point2) -> RootTree {
        RootTree {
            id: self.id.clone(),
            main: self.main.map_points(&f),
            laterals: self
                .laterals
                .iter()
                .map(|l| Lateral::new(l.t, l.branch.map_points(&f)))
                .collect(),
        }
    }

    /// Resamples the main to `n_main` points and every real lateral to
    /// `n_lat` points.
    pub fn resampled(&self, n_main: usize, n_lat: usize) -> Result<RootTree> {
        let main = self.main.resample(n_main)?;
        let laterals = self
            .laterals
            .iter()
            .map(|l| {
                let branch = if l.branch.is_virtual() {
                    l.branch.clone()
                } else {
                    l.branch.resample(n_lat)?
                };
                Ok(Lateral::new(l.t, branch))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RootTree {
            id: self.id.clone(),
            main,
            laterals,
        })
    }
}

/// Divides every coordinate by the main-curve length.
pub fn normalize_scale(tree: &RootTree) -> Result<RootTree> {
    let len = tree.main().length();
    if !(len > 0.0) {
        return Err(Error::invalid("root", "zero-length main branch"));
    }
    Ok(tree.map_points(|p| p.scale(1.0 / len)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[[f64; 2]]) -> Vec<Point2> {
        v.iter().copied().map(Point2::from).collect()
    }

    fn line_tree() -> RootTree {
        let main = Branch::new(pts(&[[0.0, 0.0], [0.0, -10.0]])).unwrap();
        let lat = Branch::new(pts(&[[0.0, -5.0], [3.0, -7.0]])).unwrap();
        RootTree::new("r", main, vec![Lateral::new(0.5, lat)]).unwrap()
    }

    #[test]
    fn resample_straight_segment() {
        let b = Branch::new(pts(&[[0.0, 0.0], [1.0, 0.0]])).unwrap();
        let r = b.resample(5).unwrap();
        let xs: Vec<f64> = r.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn resample_l_shape_hits_corner() {
        let b = Branch::new(pts(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])).unwrap();
        let r = b.resample(3).unwrap();
        assert_eq!(r.points(), &pts(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])[..]);
    }

    #[test]
    fn resample_of_uniform_polyline_is_identity() {
        let once = crate::synthetic::curve_from_heading(Point2::ORIGIN, 2.0, 40, |u| 3.0 * u);
        let b = Branch::new(once.clone()).unwrap();
        let twice = b.resample(40).unwrap();
        for (p, q) in once.iter().zip(twice.points()) {
            assert!(p.dist(q) < 1e-9);
        }
    }

    #[test]
    fn resample_spacing_is_uniform() {
        let b = Branch::new(pts(&[[0.0, 0.0], [1.0, 0.3], [1.5, 2.0], [0.2, 2.4]])).unwrap();
        let r = b.resample(200).unwrap();
        // on a polyline, chord == arc except across corners
        let steps: Vec<f64> = r.points().windows(2).map(|w| w[0].dist(&w[1])).collect();
        let h = b.length() / 199.0;
        let straight = steps.iter().filter(|s| ((*s - h) / h).abs() < 1e-9).count();
        assert!(straight >= 199 - 2);
    }

    #[test]
    fn resample_rejects_small_n_and_virtual() {
        let b = Branch::new(pts(&[[0.0, 0.0], [1.0, 0.0]])).unwrap();
        assert!(b.resample(1).is_err());
        assert!(Branch::virtual_at(Point2::ORIGIN).resample(10).is_err());
    }

    #[test]
    fn branch_invariants() {
        assert!(Branch::new(pts(&[[0.0, 0.0]])).is_err());
        assert!(Branch::new(pts(&[[1.0, 1.0], [1.0, 1.0]])).is_err());
        assert!(Branch::new(pts(&[[0.0, f64::NAN], [1.0, 1.0]])).is_err());
        let v = Branch::virtual_at(Point2::new(2.0, 3.0));
        assert!(v.is_virtual());
        assert_eq!(v.points().len(), 1);
        assert_eq!(v.length(), 0.0);
    }

    #[test]
    fn tree_validation() {
        let t = line_tree();
        assert_eq!(t.laterals().len(), 1);

        let main = Branch::new(pts(&[[0.0, 0.0], [0.0, -10.0]])).unwrap();
        let lat = Branch::new(pts(&[[0.0, -5.0], [3.0, -7.0]])).unwrap();
        let err = RootTree::new("r", main.clone(), vec![Lateral::new(1.7, lat.clone())]).unwrap_err();
        assert!(err.to_string().contains("t out of range"), "{err}");

        // start offset by 3 * tol_attach
        let tol = ATTACH_TOL_REL * 10.0;
        let shifted = lat.map_points(|p| p.translate(3.0 * tol, 0.0));
        let err = RootTree::new("r", main, vec![Lateral::new(0.5, shifted)]).unwrap_err();
        assert!(err.to_string().contains("attachment mismatch"), "{err}");
    }

    #[test]
    fn laterals_sorted_stably() {
        let main = Branch::new(pts(&[[0.0, 0.0], [0.0, -10.0]])).unwrap();
        let at = |t: f64| Branch::virtual_at(main.point_at(t));
        let tree = RootTree::new(
            "r",
            main.clone(),
            vec![
                Lateral::new(0.9, at(0.9)),
                Lateral::new(0.3, Branch::new(pts(&[[0.0, -3.0], [1.0, -4.0]])).unwrap()),
                Lateral::new(0.3, at(0.3)),
            ],
        )
        .unwrap();
        let ts: Vec<f64> = tree.laterals().iter().map(|l| l.t).collect();
        assert_eq!(ts, vec![0.3, 0.3, 0.9]);
        assert!(!tree.laterals()[0].branch.is_virtual());
        assert!(tree.laterals()[1].branch.is_virtual());
    }

    #[test]
    fn normalize_scale_lengths() {
        let t = line_tree();
        let n = normalize_scale(&t).unwrap();
        assert!((n.main().length() - 1.0).abs() < 1e-12);
        let lat_len = t.laterals()[0].branch.length();
        assert!((n.laterals()[0].branch.length() - lat_len / 10.0).abs() < 1e-12);
        let twice = normalize_scale(&n).unwrap();
        for (p, q) in n.main().points().iter().zip(twice.main().points()) {
            assert!(p.dist(q) < 1e-12);
        }
        assert_eq!(n.laterals()[0].t, 0.5);
    }

    #[test]
    fn main_length_10_lateral_3() {
        let main = Branch::new(pts(&[[0.0, 0.0], [0.0, -10.0]])).unwrap();
        let lat = Branch::new(pts(&[[0.0, -2.0], [3.0, -2.0]])).unwrap();
        let t = RootTree::new("r", main, vec![Lateral::new(0.2, lat)]).unwrap();
        let n = normalize_scale(&t).unwrap();
        assert!((n.laterals()[0].branch.length() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn point_at_interpolates_by_arclength() {
        let b = Branch::new(pts(&[[0.0, 0.0], [1.0, 0.0], [1.0, 3.0]])).unwrap();
        let p = b.point_at(0.5);
        assert!(p.dist(&Point2::new(1.0, 1.0)) < 1e-12);
        assert_eq!(b.point_at(0.0), Point2::new(0.0, 0.0));
        assert_eq!(b.point_at(1.0), Point2::new(1.0, 3.0));
    }
}
