//! Reparameterization of the main curve by dynamic programming.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::srvf::{l2_dist_sq, Srvf, Vec2};

/// Grid moves `(Δi, Δj)` of the elastic-matching strip: slopes 1/3 to 3.
const MOVES: [(usize, usize); 7] = [(1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2)];

/// A discrete orientation-preserving reparameterization of [0, 1], sampled
/// on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Gamma {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Gamma {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Gamma::new(values)
    }
}

impl From<Gamma> for Vec<f64> {
    fn from(g: Gamma) -> Self {
        g.values
    }
}

impl Gamma {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("gamma", "need at least 2 samples"));
        }
        if values[0] != 0.0 || *values.last().unwrap() != 1.0 {
            return Err(Error::invalid("gamma", "must satisfy gamma(0) = 0 and gamma(1) = 1"));
        }
        if values.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::invalid("gamma", "must be nondecreasing"));
        }
        Ok(Gamma { values })
    }

    pub fn identity(n: usize) -> Self {
        Gamma {
            values: (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        let n = self.len();
        self.values
            .iter()
            .enumerate()
            .all(|(i, v)| (v - i as f64 / (n - 1) as f64).abs() < 1e-15)
    }

    /// Piecewise-linear evaluation at `u` in [0, 1].
    pub fn eval(&self, u: f64) -> f64 {
        let n = self.len();
        let x = u.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }

    /// `γ⁻¹(s)` by monotone linear interpolation.
    pub fn inverse_at(&self, s: f64) -> f64 {
        let n = self.len();
        let s = s.clamp(0.0, 1.0);
        // first node with value >= s
        let j = self.values.partition_point(|&v| v < s);
        if j == 0 {
            return 0.0;
        }
        if j >= n {
            return 1.0;
        }
        let (lo, hi) = (self.values[j - 1], self.values[j]);
        let f = if hi > lo { (s - lo) / (hi - lo) } else { 0.0 };
        ((j - 1) as f64 + f) / (n - 1) as f64
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Gamma) -> Gamma {
        let mut values: Vec<f64> = inner.values.iter().map(|&u| self.eval(u)).collect();
        let n = values.len();
        values[0] = 0.0;
        values[n - 1] = 1.0;
        for i in 1..n {
            if values[i] < values[i - 1] {
                values[i] = values[i - 1];
            }
        }
        Gamma { values }
    }

    /// `γ'` at the grid nodes (central differences, one-sided at the ends).
    pub fn derivative(&self) -> Vec<f64> {
        let n = self.len();
        let h = 1.0 / (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i == 0 {
                    (self.values[1] - self.values[0]) / h
                } else if i == n - 1 {
                    (self.values[n - 1] - self.values[n - 2]) / h
                } else {
                    (self.values[i + 1] - self.values[i - 1]) / (2.0 * h)
                }
            })
            .collect()
    }

    /// The reparameterized SRVF `(q ∘ γ) sqrt(γ')`.
    pub fn warp(&self, q: &Srvf) -> Result<Srvf> {
        if q.len() != self.len() {
            return Err(Error::Mismatch(format!(
                "gamma has {} samples, srvf has {}",
                self.len(),
                q.len()
            )));
        }
        let d = self.derivative();
        Srvf::from_samples(
            self.values
                .iter()
                .zip(&d)
                .map(|(&g, &dg)| q.eval(g) * dg.max(0.0).sqrt())
                .collect(),
        )
    }
}

fn interp(q: &[Vec2], x: f64) -> Vec2 {
    let n = q.len();
    let x = x.clamp(0.0, (n - 1) as f64);
    let i = (x.floor() as usize).min(n - 2);
    let f = x - i as f64;
    q[i] * (1.0 - f) + q[i + 1] * f
}

/// Trapezoid energy of the straight segment from node `(k, l)` to `(i, j)`.
fn segment_cost(q1: &[Vec2], q2: &[Vec2], k: usize, l: usize, i: usize, j: usize, h: f64) -> f64 {
    let slope = (j - l) as f64 / (i - k) as f64;
    let root = slope.sqrt();
    let f = |idx: usize| {
        let x = l as f64 + (idx - k) as f64 * slope;
        (q1[idx] - interp(q2, x) * root).norm_squared()
    };
    let mut acc = 0.5 * (f(k) + f(i));
    for idx in k + 1..i {
        acc += f(idx);
    }
    acc * h
}

/// Reparameterization `γ` of the main curve minimizing
/// `|q1 - (q2 ∘ γ) sqrt(γ')|²` over monotone grid paths.
///
/// The search runs on the `n × n` node grid with the moves in [`MOVES`]. The
/// returned `γ` never does worse than the identity.
pub fn optimal_reparam_main(q1: &Srvf, q2: &Srvf) -> Result<Gamma> {
    optimal_reparam(q1, q2, &[], 1.0, 0.0)
}

/// An attachment of the moving tree at parameter `s` whose partner on the
/// reference tree sits at `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttachmentPair {
    pub target: f64,
    pub s: f64,
}

/// Like [`optimal_reparam_main`] but minimizing
/// `λ_m |q1 - (q2 ∘ γ) sqrt(γ')|² + λ_p Σ (target - γ⁻¹(s))²`.
///
/// A grid path is strictly increasing in both coordinates, so it crosses the
/// level of each attachment exactly once; the crossing is `γ⁻¹(s)` for the
/// piecewise-linear `γ` the path defines, and the penalty is charged to the
/// segment that contains it.
pub fn optimal_reparam(
    q1: &Srvf,
    q2: &Srvf,
    attachments: &[AttachmentPair],
    lambda_m: f64,
    lambda_p: f64,
) -> Result<Gamma> {
    let n = q1.len();
    if q2.len() != n {
        return Err(Error::Mismatch(format!("srvf sample counts {} and {}", n, q2.len())));
    }
    let (a, b) = (q1.samples(), q2.samples());
    let h = 1.0 / (n - 1) as f64;
    let idx = |i: usize, j: usize| i * n + j;

    // attachment levels in grid units, sorted
    let mut levels: Vec<(f64, f64)> = if lambda_p > 0.0 {
        attachments
            .iter()
            .map(|p| (p.s.clamp(0.0, 1.0) * (n - 1) as f64, p.target))
            .collect()
    } else {
        Vec::new()
    };
    levels.sort_by(|x, y| x.0.total_cmp(&y.0));
    let crossing_cost = |k: usize, l: usize, i: usize, j: usize| -> f64 {
        let lo = levels.partition_point(|&(y, _)| y <= l as f64);
        let hi = levels.partition_point(|&(y, _)| y <= j as f64);
        levels[lo..hi]
            .iter()
            .map(|&(y, target)| {
                let t = (k as f64 + (y - l as f64) / (j - l) as f64 * (i - k) as f64) * h;
                (target - t).powi(2)
            })
            .sum::<f64>()
            * lambda_p
    };
    // attachments at level 0 are crossed at t = 0 by every path
    let start_cost: f64 = levels
        .iter()
        .take_while(|&&(y, _)| y <= 0.0)
        .map(|&(_, target)| lambda_p * target * target)
        .sum();

    let mut energy = vec![f64::INFINITY; n * n];
    let mut pred = vec![usize::MAX; n * n];
    energy[0] = start_cost;
    for i in 1..n {
        for j in 1..n {
            let mut best = f64::INFINITY;
            let mut from = usize::MAX;
            for &(di, dj) in &MOVES {
                if di > i || dj > j {
                    continue;
                }
                let (k, l) = (i - di, j - dj);
                let e0 = energy[idx(k, l)];
                if !e0.is_finite() {
                    continue;
                }
                let mut e = e0 + lambda_m * segment_cost(a, b, k, l, i, j, h);
                if !levels.is_empty() {
                    e += crossing_cost(k, l, i, j);
                }
                if e < best {
                    best = e;
                    from = idx(k, l);
                }
            }
            energy[idx(i, j)] = best;
            pred[idx(i, j)] = from;
        }
    }

    // walk back along the optimal path
    let mut path = vec![(n - 1, n - 1)];
    let mut cur = idx(n - 1, n - 1);
    while cur != 0 {
        cur = pred[cur];
        debug_assert!(cur != usize::MAX, "end node is reachable");
        path.push((cur / n, cur % n));
    }
    path.reverse();

    let mut values = vec![0.0; n];
    for w in path.windows(2) {
        let ((k, l), (i, j)) = (w[0], w[1]);
        let slope = (j - l) as f64 / (i - k) as f64;
        for t in k..=i {
            values[t] = (l as f64 + (t - k) as f64 * slope) * h;
        }
    }
    values[n - 1] = 1.0;
    let gamma = Gamma::new(values)?;

    let objective = |g: &Gamma| -> Result<f64> {
        let main = lambda_m * l2_dist_sq(q1, &g.warp(q2)?)?;
        let attach: f64 = if lambda_p > 0.0 {
            attachments.iter().map(|p| lambda_p * (p.target - g.inverse_at(p.s)).powi(2)).sum()
        } else {
            0.0
        };
        Ok(main + attach)
    };
    let identity = Gamma::identity(n);
    if objective(&gamma)? <= objective(&identity)? {
        Ok(gamma)
    } else {
        Ok(identity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_fn(n: usize, f: impl Fn(f64) -> Vec2) -> Srvf {
        Srvf::from_samples((0..n).map(|i| f(i as f64 / (n - 1) as f64)).collect()).unwrap()
    }

    #[test]
    fn gamma_validation() {
        assert!(Gamma::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(Gamma::new(vec![0.1, 0.5, 1.0]).is_err());
        assert!(Gamma::new(vec![0.0, 0.6, 0.5, 1.0]).is_err());
        assert!(Gamma::identity(7).is_identity());
    }

    #[test]
    fn inverse_of_square() {
        let n = 101;
        let g = Gamma::new((0..n).map(|i| (i as f64 / (n - 1) as f64).powi(2)).collect()).unwrap();
        assert!((g.inverse_at(0.25) - 0.5).abs() < 1e-12);
        assert_eq!(g.inverse_at(0.0), 0.0);
        assert_eq!(g.inverse_at(1.0), 1.0);
    }

    #[test]
    fn compose_with_identity() {
        let n = 51;
        let g = Gamma::new((0..n).map(|i| (i as f64 / (n - 1) as f64).powf(1.5)).collect()).unwrap();
        for (x, y) in g.compose(&Gamma::identity(n)).values().iter().zip(g.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        let back = Gamma::identity(n).compose(&g);
        for (x, y) in back.values().iter().zip(g.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_curves_give_identity() {
        let q = from_fn(60, |t| Vec2::new(1.0 + 0.5 * (6.0 * t).sin(), (3.0 * t).cos()));
        let g = optimal_reparam_main(&q, &q).unwrap();
        assert!(g.is_identity());
    }

    #[test]
    fn recovers_square_root_warp_of_a_line() {
        // q1: unit-speed line; q2: the same line traversed as (t², 0), i.e.
        // with speed 2t. (q2 ∘ γ) sqrt(γ') = q1 gives 2γγ' = 1, so γ = √t and
        // γ⁻¹(s) = s². Near s = 0 the slope of s² drops below the smallest
        // grid slope 1/3; the chord of slope 1/3 alone is 1/36 off s². Away
        // from 0 the path is built from the seven grid slopes and sits within
        // a few grid cells of s².
        let n = 100;
        let q1 = from_fn(n, |_| Vec2::new(1.0, 0.0));
        let q2 = from_fn(n, |t| Vec2::new((2.0 * t).sqrt(), 0.0));
        let g = optimal_reparam_main(&q1, &q2).unwrap();
        let cell = 1.0 / (n - 1) as f64;
        let err = |s: f64| (g.inverse_at(s) - s * s).abs();
        let grid: Vec<f64> = (0..=300).map(|k| k as f64 / 300.0).collect();
        let all = grid.iter().map(|&s| err(s)).fold(0.0, f64::max);
        let tail = grid.iter().filter(|&&s| s >= 0.6).map(|&s| err(s)).fold(0.0, f64::max);
        eprintln!("max |γ⁻¹(s) - s²| = {all:.5} overall, {tail:.5} on [0.6, 1]; 2/n = {:.5}", 2.0 / n as f64);
        assert!(all <= 1.0 / 36.0 + cell, "overall {all}");
        assert!(tail < 2.0 / n as f64, "tail {tail}");
        let e = l2_dist_sq(&q1, &g.warp(&q2).unwrap()).unwrap();
        assert!(e < l2_dist_sq(&q1, &q2).unwrap());
    }

    #[test]
    fn attachment_term_slides_the_main() {
        // identical straight mains: only the attachment term can move γ
        let n = 61;
        let q = from_fn(n, |_| Vec2::new(0.0, -1.0));
        let pair = [AttachmentPair { target: 0.3, s: 0.6 }];
        let g = optimal_reparam(&q, &q, &pair, 0.02, 1.0).unwrap();
        let moved = g.inverse_at(0.6);
        assert!((moved - 0.3).abs() < 0.02, "{moved}");
        assert!(optimal_reparam(&q, &q, &pair, 0.02, 0.0).unwrap().is_identity());
    }

    #[test]
    fn never_worse_than_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = 30;
            let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let q1 = from_fn(n, |t| Vec2::new(1.0 + c[0] * (4.0 * t).sin(), c[1] * (7.0 * t + c[2]).cos()));
            let q2 = from_fn(n, |t| Vec2::new(1.0 + c[3] * (5.0 * t).cos(), c[4] + c[5] * t));
            let g = optimal_reparam_main(&q1, &q2).unwrap();
            let e = l2_dist_sq(&q1, &g.warp(&q2).unwrap()).unwrap();
            assert!(e <= l2_dist_sq(&q1, &q2).unwrap());
        }
    }

    #[test]
    fn serde_validates() {
        let g: Gamma = serde_json::from_str("[0.0, 0.3, 1.0]").unwrap();
        assert_eq!(g.values(), &[0.0, 0.3, 1.0]);
        assert!(serde_json::from_str::<Gamma>("[0.0, 0.3, 0.9]").is_err());
    }
}
