//! Random smooth two-layer roots for fixtures, benchmarks and demos.
//!
//! Curves are built by integrating a smoothly varying heading, so they are
//! C¹ and free of self-intersections at the default settings. The main grows
//! downward (-y) from the origin; laterals leave the main at an angle and bend
//! back toward gravity.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use crate::tree::{Branch, Lateral, Point2, RootTree};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub main_length: (f64, f64),
    pub lateral_count: (usize, usize),
    /// Lateral length as a fraction of the main length.
    pub lateral_fraction: (f64, f64),
    /// Attachment positions are drawn from this range.
    pub t_range: (f64, f64),
    /// Peak heading deviation of the main, in radians.
    pub main_wiggle: f64,
    pub main_points: usize,
    pub lateral_points: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            main_length: (0.8, 1.2),
            lateral_count: (2, 5),
            lateral_fraction: (0.15, 0.4),
            t_range: (0.08, 0.92),
            main_wiggle: 0.35,
            main_points: 160,
            lateral_points: 60,
        }
    }
}

/// Polyline of `n` points with arc length `length` whose heading at
/// normalized arc length `u` is `heading(u)`.
pub fn curve_from_heading(start: Point2, length: f64, n: usize, heading: impl Fn(f64) -> f64) -> Vec<Point2> {
    let h = length / (n - 1) as f64;
    let mut pts = Vec::with_capacity(n);
    let mut p = start;
    pts.push(p);
    for i in 1..n {
        // midpoint heading keeps the chord length exactly h
        let u = (i as f64 - 0.5) / (n - 1) as f64;
        let a = heading(u);
        p = p.translate(h * a.cos(), h * a.sin());
        pts.push(p);
    }
    pts
}

/// Draws a random root.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, id: &str, params: &SynthParams) -> RootTree {
    let len = rng.gen_range(params.main_length.0..=params.main_length.1);
    let (a1, a2) = (
        rng.gen_range(-1.0..1.0) * params.main_wiggle,
        rng.gen_range(-1.0..1.0) * params.main_wiggle * 0.5,
    );
    let (f1, f2) = (rng.gen_range(0.5..1.5), rng.gen_range(1.5..3.0));
    let phase = rng.gen_range(0.0..PI);
    let main_heading =
        move |u: f64| -FRAC_PI_2 + a1 * (PI * f1 * u).sin() + a2 * (PI * f2 * u + phase).sin();
    let main = Branch::new(curve_from_heading(Point2::ORIGIN, len, params.main_points, main_heading))
        .expect("main has positive length");

    let count = rng.gen_range(params.lateral_count.0..=params.lateral_count.1);
    let mut side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let laterals = (0..count)
        .map(|_| {
            let t = rng.gen_range(params.t_range.0..=params.t_range.1);
            let lat_len = len * rng.gen_range(params.lateral_fraction.0..=params.lateral_fraction.1);
            let base = main_heading(t) + side * rng.gen_range(0.9..1.3);
            let droop = -side * rng.gen_range(0.2..0.6);
            side = -side;
            let start = main.point_at(t);
            let pts = curve_from_heading(start, lat_len, params.lateral_points, |u| base + droop * u * u);
            Lateral::new(t, Branch::new(pts).expect("lateral has positive length"))
        })
        .collect();
    RootTree::new(id, main, laterals).expect("synthetic tree is valid")
}

/// A straight vertical main of the given length and no laterals.
pub fn straight_root(id: &str, length: f64) -> RootTree {
    let main = Branch::new(vec![Point2::ORIGIN, Point2::new(0.0, -length)]).expect("positive length");
    RootTree::new(id, main, vec![]).expect("valid")
}

/// Straight main of unit length with straight horizontal laterals at the
/// given positions and lengths, alternating sides.
pub fn comb_root(id: &str, laterals: &[(f64, f64)]) -> RootTree {
    let main = Branch::new(vec![Point2::ORIGIN, Point2::new(0.0, -1.0)]).expect("positive length");
    let lats = laterals
        .iter()
        .enumerate()
        .map(|(i, &(t, len))| {
            let start = main.point_at(t);
            let heading = if i % 2 == 0 { -0.3 } else { PI + 0.3 };
            let pts = curve_from_heading(start, len, 20, |_| heading);
            Lateral::new(t, Branch::new(pts).expect("positive length"))
        })
        .collect();
    RootTree::new(id, main, lats).expect("valid")
}
