//! Registration of one SRVF tree onto another: rotation, reparameterization
//! of the main curve, and lateral correspondence.
//!
//! [`register`] runs coordinate descent on the tree dissimilarity. Each sweep
//! re-solves the assignment, then the rotation, then the main-curve
//! reparameterization, each holding the other two fixed. The assignment and
//! rotation steps are exact minimizers. The reparameterization step minimizes
//! the main-curve term together with the attachment term (attachments move
//! with `γ`) over grid paths, and is kept only when it lowers the full cost,
//! so the cost sequence is nonincreasing.

mod assignment;
mod reparam;
mod rotation;

pub use assignment::{hungarian, lateral_cost_matrix, match_laterals};
pub use reparam::{optimal_reparam, optimal_reparam_main, AttachmentPair, Gamma};
pub use rotation::{cross_covariance, optimal_rotation, rotation_angle, RotationFit};

use nalgebra::{Matrix2, Rotation2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::preshape_dissimilarity_sq;
use crate::srvf::{SrvfLateral, SrvfTree, Weights};

/// `perm[k]` is the lateral of the moving tree paired with lateral `k` of the
/// reference tree.
pub type Permutation = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationOptions {
    /// Maximum number of descent sweeps.
    pub max_iter: usize,
    /// Stop when a sweep lowers the cost by less than this fraction.
    pub tol: f64,
    /// Move attachment parameters with the main curve (`s ← γ⁻¹(s)`). When
    /// false, `s` stays fixed under reparameterization.
    pub remap_attachments: bool,
}

impl Default for RegistrationOptions {
    fn default() -> Self {
        RegistrationOptions {
            max_iter: 10,
            tol: 1e-8,
            remap_attachments: true,
        }
    }
}

/// An alignment of a moving tree onto a reference tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RegistrationDump", try_from = "RegistrationDump")]
pub struct Registration {
    pub rotation: Matrix2<f64>,
    pub gamma: Gamma,
    pub assignment: Permutation,
    /// Dissimilarity after alignment (squared form).
    pub cost: f64,
    /// Cost after initialization and after each sweep.
    pub cost_history: Vec<f64>,
    pub remap_attachments: bool,
}

impl Registration {
    pub fn identity(n_main: usize, n_laterals: usize) -> Self {
        Registration {
            rotation: Matrix2::identity(),
            gamma: Gamma::identity(n_main),
            assignment: (0..n_laterals).collect(),
            cost: f64::NAN,
            cost_history: Vec::new(),
            remap_attachments: true,
        }
    }

    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    pub fn sweeps(&self) -> usize {
        self.cost_history.len().saturating_sub(1)
    }
}

#[derive(Serialize, Deserialize)]
struct RegistrationDump {
    angle: f64,
    gamma: Gamma,
    permutation: Permutation,
    cost: f64,
    #[serde(default)]
    cost_history: Vec<f64>,
    #[serde(default = "yes")]
    remap_attachments: bool,
}

fn yes() -> bool {
    true
}

impl From<Registration> for RegistrationDump {
    fn from(r: Registration) -> Self {
        RegistrationDump {
            angle: r.rotation_angle(),
            gamma: r.gamma,
            permutation: r.assignment,
            cost: r.cost,
            cost_history: r.cost_history,
            remap_attachments: r.remap_attachments,
        }
    }
}

impl TryFrom<RegistrationDump> for Registration {
    type Error = Error;

    fn try_from(d: RegistrationDump) -> Result<Self> {
        if !is_permutation(&d.permutation) {
            return Err(Error::invalid("registration", "assignment is not a permutation"));
        }
        Ok(Registration {
            rotation: *Rotation2::new(d.angle).matrix(),
            gamma: d.gamma,
            assignment: d.permutation,
            cost: d.cost,
            cost_history: d.cost_history,
            remap_attachments: d.remap_attachments,
        })
    }
}

pub(crate) fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&j| j < seen.len() && !std::mem::replace(&mut seen[j], true))
}

fn apply_parts(
    b: &SrvfTree,
    rotation: &Matrix2<f64>,
    gamma: &Gamma,
    assignment: &[usize],
    remap: bool,
) -> Result<SrvfTree> {
    if assignment.len() != b.laterals.len() || !is_permutation(assignment) {
        return Err(Error::Mismatch(format!(
            "assignment of length {} for {} laterals",
            assignment.len(),
            b.laterals.len()
        )));
    }
    let q0 = if gamma.is_identity() {
        b.q0.rotated(rotation)
    } else {
        gamma.warp(&b.q0)?.rotated(rotation)
    };
    let laterals = assignment
        .iter()
        .map(|&j| {
            let lat = &b.laterals[j];
            SrvfLateral {
                q: lat.q.rotated(rotation),
                s: if remap { gamma.inverse_at(lat.s) } else { lat.s },
            }
        })
        .collect();
    Ok(SrvfTree {
        q0,
        laterals,
        anchor: b.anchor,
    })
}

/// Applies a registration to the moving tree: rotates every SRVF, warps the
/// main SRVF by `γ`, moves attachments to `γ⁻¹(s)` and reorders laterals so
/// that lateral `k` of the result pairs with lateral `k` of the reference.
pub fn apply_registration(b: &SrvfTree, r: &Registration) -> Result<SrvfTree> {
    apply_parts(b, &r.rotation, &r.gamma, &r.assignment, r.remap_attachments)
}

struct State {
    rotation: Matrix2<f64>,
    gamma: Gamma,
    assignment: Permutation,
}

fn check_pair(a: &SrvfTree, b: &SrvfTree) -> Result<()> {
    if !a.same_layout(b) {
        return Err(Error::Mismatch(format!(
            "registration needs equal layouts: {} vs {} main samples, {} vs {} laterals",
            a.n_main(),
            b.n_main(),
            a.laterals.len(),
            b.laterals.len()
        )));
    }
    Ok(())
}

fn descend(a: &SrvfTree, b: &SrvfTree, w: &Weights, opts: &RegistrationOptions, mut st: State) -> Result<Registration> {
    let remap = opts.remap_attachments;
    let cost_of = |st: &State| -> Result<f64> {
        preshape_dissimilarity_sq(a, &apply_parts(b, &st.rotation, &st.gamma, &st.assignment, remap)?, w)
    };
    let identity_perm: Permutation = (0..b.laterals.len()).collect();

    let mut cost = cost_of(&st)?;
    let mut history = vec![cost];
    for _ in 0..opts.max_iter {
        if cost <= 0.0 {
            break;
        }
        let prev = cost;

        let rotated = apply_parts(b, &st.rotation, &st.gamma, &identity_perm, remap)?;
        let perm = match_laterals(a, &rotated, w)?;
        if perm != st.assignment {
            let trial = State {
                assignment: perm,
                rotation: st.rotation,
                gamma: st.gamma.clone(),
            };
            let c = cost_of(&trial)?;
            if c <= cost {
                st = trial;
                cost = c;
            }
        }

        let warped = apply_parts(b, &Matrix2::identity(), &st.gamma, &st.assignment, remap)?;
        let fit = optimal_rotation(a, &warped, &identity_perm, w)?;
        if !fit.degenerate {
            let trial = State {
                rotation: fit.rotation,
                gamma: st.gamma.clone(),
                assignment: st.assignment.clone(),
            };
            let c = cost_of(&trial)?;
            if c <= cost {
                st = trial;
                cost = c;
            }
        }

        let slides = remap && w.lambda_p > 0.0 && !a.laterals.is_empty();
        if w.lambda_m > 0.0 || slides {
            let current = apply_parts(b, &st.rotation, &st.gamma, &st.assignment, remap)?;
            let pairs: Vec<AttachmentPair> = if slides {
                a.laterals
                    .iter()
                    .zip(&current.laterals)
                    .map(|(la, lb)| AttachmentPair { target: la.s, s: lb.s })
                    .collect()
            } else {
                Vec::new()
            };
            let step = optimal_reparam(&a.q0, &current.q0, &pairs, w.lambda_m, w.lambda_p)?;
            if !step.is_identity() {
                let trial = State {
                    gamma: st.gamma.compose(&step),
                    rotation: st.rotation,
                    assignment: st.assignment.clone(),
                };
                let c = cost_of(&trial)?;
                if c < cost {
                    st = trial;
                    cost = c;
                }
            }
        }

        history.push(cost);
        if prev - cost <= opts.tol * prev {
            break;
        }
    }

    Ok(Registration {
        rotation: st.rotation,
        gamma: st.gamma,
        assignment: st.assignment,
        cost,
        cost_history: history,
        remap_attachments: remap,
    })
}

/// Descent runs started from the best screened candidates.
const STARTS: usize = 3;

/// Candidate starting points, best first.
///
/// Candidate rotations come from the data: the whole-tree fit under a
/// rotation-invariant provisional matching, the main curves alone, and every
/// pair of real laterals. Each is completed by an assignment and a rotation
/// refit. Since every candidate is derived from the trees themselves, the
/// set turns with `b` and the result does not depend on its orientation.
fn screened_starts(a: &SrvfTree, b: &SrvfTree, w: &Weights, remap: bool) -> Result<Vec<State>> {
    let n = a.n_main();
    let seed_perm = assignment::match_laterals_invariant(a, b, w)?;

    let mut rotations = vec![optimal_rotation(a, b, &seed_perm, w)?];
    rotations.push(rotation::rotation_from_covariance(&rotation::pair_covariance(&a.q0, &b.q0)));
    let real = |t: &SrvfTree| (0..t.laterals.len()).filter(|&k| !t.is_virtual_lateral(k)).collect::<Vec<_>>();
    let (real_a, real_b) = (real(a), real(b));
    for &k in &real_a {
        for &j in &real_b {
            let h = rotation::pair_covariance(&a.laterals[k].q, &b.laterals[j].q);
            rotations.push(rotation::rotation_from_covariance(&h));
        }
    }

    let identity = Gamma::identity(n);
    let mut scored: Vec<(f64, State)> = Vec::with_capacity(rotations.len());
    for fit in rotations.into_iter().filter(|f| !f.degenerate) {
        let perm = match_laterals(a, &b.rotated(&fit.rotation), w)?;
        let refit = optimal_rotation(a, b, &perm, w)?;
        let rotation = if refit.degenerate { fit.rotation } else { refit.rotation };
        let cost = preshape_dissimilarity_sq(a, &apply_parts(b, &rotation, &identity, &perm, remap)?, w)?;
        scored.push((
            cost,
            State {
                rotation,
                gamma: identity.clone(),
                assignment: perm,
            },
        ));
    }
    scored.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut starts: Vec<State> = Vec::with_capacity(STARTS);
    for (_, st) in scored {
        let duplicate = starts.iter().any(|kept| {
            kept.assignment == st.assignment && (kept.rotation - st.rotation).abs().max() < 1e-9
        });
        if !duplicate {
            starts.push(st);
        }
        if starts.len() == STARTS {
            break;
        }
    }
    if starts.is_empty() {
        starts.push(State {
            rotation: Matrix2::identity(),
            gamma: identity,
            assignment: seed_perm,
        });
    }
    Ok(starts)
}

/// Registers `b` onto `a` (both augmented to the same lateral count and
/// sampled alike).
///
/// Coordinate descent runs from a few screened starting points (see
/// [`screened_starts`]) and the lowest final cost wins. If that is still
/// above the cost of the plain identity alignment, a run from the identity
/// is tried as well.
pub fn register(a: &SrvfTree, b: &SrvfTree, w: &Weights, opts: &RegistrationOptions) -> Result<Registration> {
    check_pair(a, b)?;
    w.validate()?;
    let n = a.n_main();

    let mut best: Option<Registration> = None;
    for start in screened_starts(a, b, w, opts.remap_attachments)? {
        let r = descend(a, b, w, opts, start)?;
        if best.as_ref().is_none_or(|x| r.cost < x.cost) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start");

    let identity_cost = preshape_dissimilarity_sq(a, b, w)?;
    if best.cost <= identity_cost {
        return Ok(best);
    }
    let plain = State {
        rotation: Matrix2::identity(),
        gamma: Gamma::identity(n),
        assignment: (0..b.laterals.len()).collect(),
    };
    let fallback = descend(a, b, w, opts, plain)?;
    Ok(if fallback.cost < best.cost { fallback } else { best })
}
