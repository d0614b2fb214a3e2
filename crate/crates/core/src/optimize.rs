//! Derivative-free search for low-mu domains at fixed volume under a
//! uniform ball condition floor. Families are parameterized so that the
//! volume constraint is removed exactly by rescaling; the ball condition
//! is enforced by penalty because its morphological estimate is
//! voxel-quantized and a hard cut would thrash near the floor.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::J1_FIRST_ZERO;
use crate::framework::Objective;
use crate::geometry::ballcond::ball_condition;
use crate::geometry::spec::DomainSpec;
use crate::geometry::voxel::VoxelDomain;
use crate::geometry::{ball_volume, equal_volume_ball_radius};
use crate::math::V3;

/// Violations beyond this fraction of r0 skip the spectral solve; the
/// shape is so far outside the class that only the penalty matters.
const GROSS_VIOLATION: f64 = 0.5;
/// Initialization retries before the class is declared empty in practice.
const INIT_RETRIES: usize = 3;
/// Restarts after stagnation before the search settles.
const MAX_RESTARTS: usize = 3;

/// Shape family searched over. Parameter vectors are dimensionless knobs;
/// decoding produces an origin-centered spec of arbitrary size which is
/// then rescaled to the class volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    Balls,
    /// Two log semi-axis ratios; the ball is the zero point.
    Ellipsoids,
    /// Minor over major radius.
    Tori,
    /// Real spherical harmonic perturbations of the unit sphere up to
    /// the given degree.
    StarShaped { degree: u32 },
    /// Log radii of k balls packed on a fixed slot lattice.
    UnionsOfBalls { k: usize },
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Balls => 0,
            Family::Ellipsoids => 2,
            Family::Tori => 1,
            Family::StarShaped { degree } => (degree * (degree + 2)) as usize,
            Family::UnionsOfBalls { k } => *k,
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Family::Balls => "balls".into(),
            Family::Ellipsoids => "ellipsoids".into(),
            Family::Tori => "tori".into(),
            Family::StarShaped { degree } => format!("star-{degree}"),
            Family::UnionsOfBalls { k } => format!("union-{k}"),
        }
    }

    fn default_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Family::Balls => Vec::new(),
            Family::Ellipsoids => vec![(-1.0, 1.0); 2],
            Family::Tori => vec![(0.15, 0.85)],
            Family::StarShaped { .. } => {
                // Keep the radial graph positive: the coefficient budget
                // shrinks with the number of modes.
                let n = self.dim();
                let b = 0.8 / n as f64;
                vec![(-b, b); n]
            }
            Family::UnionsOfBalls { k } => vec![(-0.7, 0.7); *k],
        }
    }

    /// Origin-centered spec for a parameter vector, before rescaling.
    pub fn decode(&self, theta: &[f64]) -> Result<DomainSpec> {
        if theta.len() != self.dim() {
            return Err(Error::Precondition(format!(
                "{} parameters for a {}-dimensional family",
                theta.len(),
                self.dim()
            )));
        }
        let spec = match self {
            Family::Balls => DomainSpec::ball([0.0; 3], 1.0),
            Family::Ellipsoids => {
                let mut axes = [theta[0].exp(), theta[1].exp(), 1.0];
                axes.sort_by(|a, b| b.partial_cmp(a).unwrap());
                DomainSpec::ellipsoid([0.0; 3], axes)
            }
            Family::Tori => DomainSpec::torus([0.0; 3], 1.0, theta[0]),
            Family::StarShaped { degree } => {
                let mut coeffs = Vec::with_capacity(self.dim());
                let mut it = theta.iter();
                for l in 1..=*degree {
                    for m in -(l as i32)..=(l as i32) {
                        coeffs.push((l, m, *it.next().unwrap()));
                    }
                }
                DomainSpec::StarShaped {
                    center: [0.0; 3],
                    base_radius: 1.0,
                    coeffs,
                }
            }
            Family::UnionsOfBalls { .. } => {
                let radii: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
                union_of_balls(&radii)
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// k balls on a cubic slot lattice: pitch 4x the largest radius keeps
/// every pair separated by at least two of those radii, slots are filled
/// from the origin outward with the largest ball first.
fn union_of_balls(radii: &[f64]) -> DomainSpec {
    if radii.len() == 1 {
        return DomainSpec::ball([0.0; 3], radii[0]);
    }
    let rmax = radii.iter().cloned().fold(0.0f64, f64::max);
    let pitch = 4.0 * rmax;
    let kc = (radii.len() as f64).cbrt().ceil() as usize;
    let off = (kc as f64 - 1.0) / 2.0;
    let mut slots: Vec<V3> = Vec::with_capacity(kc * kc * kc);
    for a in 0..kc {
        for b in 0..kc {
            for c in 0..kc {
                slots.push([
                    (a as f64 - off) * pitch,
                    (b as f64 - off) * pitch,
                    (c as f64 - off) * pitch,
                ]);
            }
        }
    }
    slots.sort_by(|p, q| {
        crate::math::norm(*p)
            .partial_cmp(&crate::math::norm(*q))
            .unwrap()
    });
    let mut rs = radii.to_vec();
    rs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    DomainSpec::Union(
        rs.iter()
            .zip(slots)
            .map(|(&r, c)| DomainSpec::ball(c, r))
            .collect(),
    )
}

/// Search class: shapes of volume `volume` whose uniform ball radius
/// clears `r0`. Nonempty iff the volume admits a ball of radius r0.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibleClass {
    pub r0: f64,
    pub volume: f64,
    pub family: Family,
    pub bounds: Vec<(f64, f64)>,
}

impl FeasibleClass {
    pub fn new(r0: f64, volume: f64, family: Family) -> Result<FeasibleClass> {
        if !(r0.is_finite() && r0 > 0.0 && volume.is_finite() && volume > 0.0) {
            return Err(Error::Precondition(format!(
                "class needs positive r0 and volume, got {r0} and {volume}"
            )));
        }
        if volume < ball_volume(r0) {
            return Err(Error::Infeasible(format!(
                "volume {volume:.4} below the ball volume {:.4} at radius {r0}: \
                 the class is empty",
                ball_volume(r0)
            )));
        }
        Ok(FeasibleClass {
            r0,
            volume,
            family,
            bounds: family.default_bounds(),
        })
    }

    fn class_empty(&self) -> bool {
        self.volume < ball_volume(self.r0)
    }
}

/// Uniform dilation to the requested volume, about the spec's own
/// reference point. Closed-form volumes make this exact; the star
/// family's quadrature volume is treated as exact at its 1e-5 level.
pub fn rescale_to_volume(spec: &DomainSpec, volume: f64) -> Result<DomainSpec> {
    if !(volume.is_finite() && volume > 0.0) {
        return Err(Error::Precondition(format!("target volume {volume}")));
    }
    let v = spec.volume();
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Precondition(format!("spec volume {v}")));
    }
    let s = (volume / v).cbrt();
    Ok(spec.scaled(s, spec.reference_center()))
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub r_uniform: f64,
    /// r0 - 2h: the floor after voxel slack.
    pub required: f64,
    pub margin: f64,
    /// Relative deviation of the spec volume from the class volume.
    pub volume_drift: f64,
    /// The class itself admits no shape (volume below the r0 ball).
    pub class_empty: bool,
}

/// Ball-condition feasibility at resolution h. The spec must already be
/// rescaled to the class volume.
pub fn feasibility(
    spec: &DomainSpec,
    class: &FeasibleClass,
    h: f64,
) -> Result<(bool, FeasibilityReport)> {
    let volume_drift = (spec.volume() - class.volume).abs() / class.volume;
    if volume_drift > 0.01 {
        return Err(Error::Precondition(format!(
            "spec volume is {:.2}% away from the class volume; rescale first",
            100.0 * volume_drift
        )));
    }
    let required = class.r0 - 2.0 * h;
    if class.class_empty() {
        return Ok((
            false,
            FeasibilityReport {
                r_uniform: 0.0,
                required,
                margin: -required,
                volume_drift,
                class_empty: true,
            },
        ));
    }
    let dom = VoxelDomain::rasterize(spec, h, 2)?;
    let rep = ball_condition(&dom, 1.5 * class.r0 + 4.0 * h)?;
    let margin = rep.r_uniform - required;
    Ok((
        margin >= 0.0,
        FeasibilityReport {
            r_uniform: rep.r_uniform,
            required,
            margin,
            volume_drift,
            class_empty: false,
        },
    ))
}

/// One evaluated parameter vector.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub params: Vec<f64>,
    pub spec: DomainSpec,
    pub feasible: bool,
    /// Raw spectral value; NaN when the solve was skipped or failed.
    pub mu: f64,
    /// Search value: mu for feasible points, mu plus a violation
    /// penalty otherwise.
    pub value: f64,
    pub residual: f64,
    pub violation: f64,
}

/// Final search state. `history` records the best feasible value after
/// each evaluation from the first feasible candidate on, and never
/// increases; `log` keeps every evaluation in order.
#[derive(Debug)]
pub struct OptimizerState {
    pub simplex: Vec<Candidate>,
    pub best: Candidate,
    pub evaluations: usize,
    pub history: Vec<f64>,
    pub log: Vec<Candidate>,
    pub seed: u64,
    pub restarts: usize,
}

struct Evaluator<'a> {
    class: &'a FeasibleClass,
    objective: Objective,
    h: f64,
    spectral_tol: f64,
    /// Penalty scale: the closed-form ball value for the class volume.
    scale: f64,
    log: Vec<Candidate>,
    history: Vec<f64>,
    best: Option<Candidate>,
}

impl<'a> Evaluator<'a> {
    fn new(class: &'a FeasibleClass, objective: Objective, h: f64, spectral_tol: f64) -> Self {
        Evaluator {
            class,
            objective,
            h,
            spectral_tol,
            scale: J1_FIRST_ZERO / equal_volume_ball_radius(class.volume),
            log: Vec::new(),
            history: Vec::new(),
            best: None,
        }
    }

    fn evaluations(&self) -> usize {
        self.log.len()
    }

    fn eval(&mut self, params: &[f64]) -> Result<Candidate> {
        let cand = self.eval_inner(params);
        if let Some(c) = &cand {
            if c.feasible {
                let better = match &self.best {
                    None => true,
                    Some(b) => c.value < b.value,
                };
                if better {
                    self.best = Some(c.clone());
                }
            }
        }
        if let Some(b) = &self.best {
            self.history.push(b.value);
        }
        let c = cand.ok_or_else(|| Error::Solver("evaluation produced no candidate".into()))?;
        self.log.push(c.clone());
        Ok(c)
    }

    fn eval_inner(&mut self, params: &[f64]) -> Option<Candidate> {
        let bad = |spec: DomainSpec, violation: f64, scale: f64| Candidate {
            params: params.to_vec(),
            spec,
            feasible: false,
            mu: f64::NAN,
            value: scale * (20.0 + 100.0 * violation),
            residual: f64::NAN,
            violation,
        };
        let decoded = match self.class.family.decode(params) {
            Ok(s) => s,
            // Out-of-family parameters (a star graph pushed negative):
            // maximal penalty, no spectrum.
            Err(_) => {
                return Some(bad(DomainSpec::ball([0.0; 3], 1.0), 1.0, self.scale));
            }
        };
        let spec = match rescale_to_volume(&decoded, self.class.volume) {
            Ok(s) => s,
            Err(_) => return Some(bad(decoded, 1.0, self.scale)),
        };
        let (feasible, rep) = match feasibility(&spec, self.class, self.h) {
            Ok(v) => v,
            Err(_) => return Some(bad(spec, 1.0, self.scale)),
        };
        let violation = (-rep.margin).max(0.0);
        if !feasible && violation > GROSS_VIOLATION * self.class.r0 {
            return Some(bad(spec, violation / self.class.r0, self.scale));
        }
        let dom = match VoxelDomain::rasterize(&spec, self.h, 2) {
            Ok(d) => Arc::new(d),
            Err(_) => return Some(bad(spec, 1.0, self.scale)),
        };
        match self.objective.eval(&dom, self.spectral_tol) {
            Ok(r) => {
                let value = if feasible {
                    r.value
                } else {
                    r.value + self.scale * (1.0 + 10.0 * violation / self.h)
                };
                Some(Candidate {
                    params: params.to_vec(),
                    spec,
                    feasible,
                    mu: r.value,
                    value,
                    residual: r.residual,
                    violation,
                })
            }
            // A spectrum that refuses to converge marks the shape as
            // unusable rather than aborting the whole search.
            Err(_) => Some(bad(spec, (violation / self.class.r0).max(0.1), self.scale)),
        }
    }
}

fn clamp(theta: &mut [f64], bounds: &[(f64, f64)]) {
    for (t, &(lo, hi)) in theta.iter_mut().zip(bounds) {
        *t = t.clamp(lo, hi);
    }
}

/// Nelder-Mead over the family parameters: reflect/expand/contract with
/// clamping to the bounds, shrink toward the best vertex otherwise, and
/// a seeded restart around the incumbent when the simplex collapses.
/// Deterministic for a fixed seed; evaluations run one at a time.
pub fn minimize(
    class: &FeasibleClass,
    objective: Objective,
    budget: usize,
    seed: u64,
    h: f64,
    spectral_tol: f64,
) -> Result<OptimizerState> {
    if class.class_empty() {
        return Err(Error::Infeasible("the class is empty".into()));
    }
    let n = class.family.dim();
    if budget < n + 1 {
        return Err(Error::Precondition(format!(
            "budget {budget} below the simplex size {}",
            n + 1
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut ev = Evaluator::new(class, objective, h, spectral_tol);

    if n == 0 {
        // Single point after rescale; nothing to search.
        let c = ev.eval(&[])?;
        if !c.feasible {
            return Err(Error::Infeasible(
                "the family's only candidate fails the ball condition".into(),
            ));
        }
        return Ok(OptimizerState {
            simplex: vec![c.clone()],
            best: c,
            evaluations: ev.evaluations(),
            history: ev.history,
            log: ev.log,
            seed,
            restarts: 0,
        });
    }

    let bounds = &class.bounds;
    let mid: Vec<f64> = bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    let range: Vec<f64> = bounds.iter().map(|&(lo, hi)| hi - lo).collect();

    // Initial simplex around the neutral point, re-jittered while no
    // vertex is feasible.
    let mut simplex: Vec<Candidate> = Vec::new();
    for attempt in 0..=INIT_RETRIES {
        simplex.clear();
        let jitter = 0.05 + 0.1 * attempt as f64;
        let mut base = mid.clone();
        for (b, r) in base.iter_mut().zip(&range) {
            *b += jitter * r * (rng.gen::<f64>() - 0.5);
        }
        clamp(&mut base, bounds);
        simplex.push(ev.eval(&base)?);
        for i in 0..n {
            let mut p = base.clone();
            p[i] += 0.35 * range[i] * if p[i] > mid[i] { -1.0 } else { 1.0 };
            clamp(&mut p, bounds);
            simplex.push(ev.eval(&p)?);
        }
        if simplex.iter().any(|c| c.feasible) {
            break;
        }
        if attempt == INIT_RETRIES {
            return Err(Error::Infeasible(format!(
                "no feasible candidate in {} initialization attempts",
                INIT_RETRIES + 1
            )));
        }
    }

    let mut restarts = 0;
    let mut since_improvement = 0usize;
    let stall_window = 2 * n + 6;
    while ev.evaluations() < budget {
        simplex.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
        let best_v = simplex[0].value;
        let worst_v = simplex[n].value;

        let collapsed = (worst_v - best_v).abs() <= 1e-4 * best_v.abs().max(1e-12);
        if collapsed || since_improvement > stall_window {
            if restarts >= MAX_RESTARTS {
                break;
            }
            restarts += 1;
            since_improvement = 0;
            // New simplex around the incumbent best parameters.
            let center = ev
                .best
                .as_ref()
                .map(|b| b.params.clone())
                .unwrap_or_else(|| simplex[0].params.clone());
            simplex.truncate(1);
            for i in 0..n {
                if ev.evaluations() >= budget {
                    break;
                }
                let mut p = center.clone();
                for (pj, r) in p.iter_mut().zip(&range) {
                    *pj += 0.2 * r * (rng.gen::<f64>() - 0.5);
                }
                p[i] += 0.2 * range[i];
                clamp(&mut p, bounds);
                simplex.push(ev.eval(&p)?);
            }
            if simplex.len() < n + 1 {
                break;
            }
            continue;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|c| c.params[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();

        let mut refl: Vec<f64> = (0..n)
            .map(|j| centroid[j] + (centroid[j] - worst.params[j]))
            .collect();
        clamp(&mut refl, bounds);
        let r = ev.eval(&refl)?;
        let improved = r.value < best_v;

        if r.value < best_v && ev.evaluations() < budget {
            let mut exp: Vec<f64> = (0..n)
                .map(|j| centroid[j] + 2.0 * (centroid[j] - worst.params[j]))
                .collect();
            clamp(&mut exp, bounds);
            let e = ev.eval(&exp)?;
            simplex[n] = if e.value < r.value { e } else { r };
        } else if r.value < simplex[n - 1].value {
            simplex[n] = r;
        } else if ev.evaluations() < budget {
            let mut con: Vec<f64> = (0..n)
                .map(|j| centroid[j] + 0.5 * (worst.params[j] - centroid[j]))
                .collect();
            clamp(&mut con, bounds);
            let c = ev.eval(&con)?;
            if c.value < worst.value {
                simplex[n] = c;
            } else {
                // Shrink toward the best vertex.
                let anchor = simplex[0].params.clone();
                for i in 1..=n {
                    if ev.evaluations() >= budget {
                        break;
                    }
                    let mut p: Vec<f64> = (0..n)
                        .map(|j| anchor[j] + 0.5 * (simplex[i].params[j] - anchor[j]))
                        .collect();
                    clamp(&mut p, bounds);
                    simplex[i] = ev.eval(&p)?;
                }
            }
        }
        since_improvement = if improved { 0 } else { since_improvement + 1 };
    }

    let best = ev.best.clone().ok_or_else(|| {
        Error::Infeasible("no feasible candidate was found within the budget".into())
    })?;
    simplex.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap());
    Ok(OptimizerState {
        simplex,
        best,
        evaluations: ev.evaluations(),
        history: ev.history,
        log: ev.log,
        seed,
        restarts,
    })
}

/// The incumbent against the closed-form anchors for the class volume:
/// the universal floor 1/R(V) and the ball's own value.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// 1 / R(V): no shape of this volume sits below this.
    pub lower_bound: f64,
    /// Closed-form ball value at volume V.
    pub ball_value: f64,
    pub best: f64,
    pub gap: f64,
    /// Best (discrete) value dipped below the analytic ball value.
    pub beat_the_ball: bool,
    /// best >= lower_bound less 5% numerical slack.
    pub bound_satisfied: bool,
}

pub fn bound_tracker(state: &OptimizerState, class: &FeasibleClass) -> BoundReport {
    let r_v = equal_volume_ball_radius(class.volume);
    let lower_bound = 1.0 / r_v;
    let ball_value = J1_FIRST_ZERO / r_v;
    let best = state.best.value;
    BoundReport {
        lower_bound,
        ball_value,
        best,
        gap: best - lower_bound,
        beat_the_ball: best < ball_value,
        bound_satisfied: best >= lower_bound * 0.95,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const V_UNIT: f64 = 4.0 * PI / 3.0;

    #[test]
    fn empty_class_is_rejected() {
        let err = FeasibleClass::new(1.0, 1.0, Family::Balls).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
        assert!(FeasibleClass::new(0.5, V_UNIT, Family::Balls).is_ok());
    }

    #[test]
    fn rescale_matches_the_closed_forms() {
        let b = rescale_to_volume(&DomainSpec::ball([0.0; 3], 2.0), V_UNIT).unwrap();
        match b {
            DomainSpec::Ball { radius, .. } => assert!((radius - 1.0).abs() <= 1e-12),
            _ => panic!("ball stays a ball"),
        }
        let e =
            rescale_to_volume(&DomainSpec::ellipsoid([0.0; 3], [2.0, 1.0, 1.0]), V_UNIT).unwrap();
        match &e {
            DomainSpec::Ellipsoid { semi_axes, .. } => {
                let s = 0.5f64.cbrt();
                assert!((semi_axes[0] - 2.0 * s).abs() <= 1e-12);
                assert!((semi_axes[2] - s).abs() <= 1e-12);
            }
            _ => panic!("ellipsoid stays an ellipsoid"),
        }
        // Idempotence.
        let twice = rescale_to_volume(&e, V_UNIT).unwrap();
        match (&e, &twice) {
            (
                DomainSpec::Ellipsoid { semi_axes: a, .. },
                DomainSpec::Ellipsoid { semi_axes: b, .. },
            ) => {
                for i in 0..3 {
                    assert!((a[i] - b[i]).abs() <= 1e-12 * a[i]);
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn ball_is_feasible_and_flat_ellipsoid_is_not() {
        let class = FeasibleClass::new(0.7, V_UNIT, Family::Ellipsoids).unwrap();
        let ball = rescale_to_volume(&DomainSpec::ball([0.0; 3], 3.0), V_UNIT).unwrap();
        let (ok, rep) = feasibility(&ball, &class, 0.1).unwrap();
        assert!(ok, "{rep:?}");
        assert!(rep.margin > 0.0);

        // Min curvature radius after rescale: c^2/a = 0.794^2/1.587 ~ 0.40,
        // far below the 0.5 floor.
        let flat =
            rescale_to_volume(&DomainSpec::ellipsoid([0.0; 3], [2.0, 1.0, 1.0]), V_UNIT).unwrap();
        let (ok, rep) = feasibility(&flat, &class, 0.1).unwrap();
        assert!(!ok, "{rep:?}");
        assert!(rep.margin < 0.0);
    }

    #[test]
    fn feasibility_requires_the_rescaled_volume() {
        let class = FeasibleClass::new(0.5, V_UNIT, Family::Balls).unwrap();
        let err = feasibility(&DomainSpec::ball([0.0; 3], 2.0), &class, 0.1).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }

    #[test]
    fn empty_class_feasibility_flags_without_measuring() {
        let class = FeasibleClass {
            r0: 1.2,
            volume: V_UNIT,
            family: Family::Balls,
            bounds: Vec::new(),
        };
        let ball = DomainSpec::ball([0.0; 3], 1.0);
        let (ok, rep) = feasibility(&ball, &class, 0.1).unwrap();
        assert!(!ok);
        assert!(rep.class_empty);
    }

    #[test]
    fn union_decode_packs_disjoint_balls() {
        let fam = Family::UnionsOfBalls { k: 3 };
        let spec = fam.decode(&[0.0, 0.3, -0.2]).unwrap();
        match &spec {
            DomainSpec::Union(ms) => assert_eq!(ms.len(), 3),
            _ => panic!("expected a union"),
        }
        let scaled = rescale_to_volume(&spec, 2.0 * V_UNIT).unwrap();
        assert!((scaled.volume() - 2.0 * V_UNIT).abs() <= 1e-9 * V_UNIT);
        scaled.validate().unwrap();
    }

    #[test]
    fn torus_and_star_decode_to_valid_specs() {
        let t = Family::Tori.decode(&[0.3]).unwrap();
        rescale_to_volume(&t, V_UNIT).unwrap().validate().unwrap();
        let fam = Family::StarShaped { degree: 1 };
        assert_eq!(fam.dim(), 3);
        let s = fam.decode(&[0.1, -0.05, 0.2]).unwrap();
        let s = rescale_to_volume(&s, V_UNIT).unwrap();
        s.validate().unwrap();
        assert!((s.volume() - V_UNIT).abs() <= 1e-3 * V_UNIT);
    }

    #[test]
    fn balls_family_returns_the_ball() {
        let class = FeasibleClass::new(0.5, V_UNIT, Family::Balls).unwrap();
        let state = minimize(&class, Objective::Nu, 4, 11, 0.125, 1e-5).unwrap();
        assert_eq!(state.evaluations, 1);
        assert!(state.best.feasible);
        match &state.best.spec {
            DomainSpec::Ball { radius, .. } => assert!((radius - 1.0).abs() <= 1e-12),
            other => panic!("expected a ball, got {}", other.kind_name()),
        }
        // Discrete value sits near the closed-form ball value.
        let anchor = J1_FIRST_ZERO;
        assert!(
            (state.best.value - anchor).abs() <= 0.08 * anchor,
            "value {}",
            state.best.value
        );
        let bounds = bound_tracker(&state, &class);
        assert!((bounds.lower_bound - 1.0).abs() <= 1e-12);
        assert!(!bounds.beat_the_ball);
        assert!(bounds.bound_satisfied);
        assert!(bounds.gap > 0.0);
    }

    #[test]
    fn histories_never_increase_and_reruns_match() {
        let class = FeasibleClass::new(0.35, V_UNIT, Family::Ellipsoids).unwrap();
        let a = minimize(&class, Objective::Nu, 9, 23, 0.15, 1e-5).unwrap();
        assert!(!a.history.is_empty());
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0], "history increased: {:?}", a.history);
        }
        assert!(a.best.feasible);
        let b = minimize(&class, Objective::Nu, 9, 23, 0.15, 1e-5).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best.value, b.best.value);
        assert_eq!(a.best.params, b.best.params);
    }

    #[test]
    fn best_candidate_reproduces_from_its_serialized_spec() {
        let class = FeasibleClass::new(0.35, V_UNIT, Family::Ellipsoids).unwrap();
        let state = minimize(&class, Objective::Nu, 6, 5, 0.15, 1e-5).unwrap();
        let text = state.best.spec.to_text();
        let parsed = DomainSpec::parse(&text).unwrap();
        let dom = Arc::new(VoxelDomain::rasterize(&parsed, 0.15, 2).unwrap());
        let re = Objective::Nu.eval(&dom, 1e-5).unwrap();
        assert!(
            (re.value - state.best.mu).abs() <= 2.0 * 1e-5 * state.best.mu,
            "re-eval {} vs stored {}",
            re.value,
            state.best.mu
        );
    }

    #[test]
    fn penalized_values_exceed_every_feasible_value() {
        // A floor tight enough that stretched ellipsoids go infeasible.
        let class = FeasibleClass::new(0.55, V_UNIT, Family::Ellipsoids).unwrap();
        let state = minimize(&class, Objective::Nu, 10, 3, 0.15, 1e-5).unwrap();
        let max_feasible = state
            .log
            .iter()
            .filter(|c| c.feasible)
            .map(|c| c.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let infeasible: Vec<&Candidate> = state.log.iter().filter(|c| !c.feasible).collect();
        assert!(
            !infeasible.is_empty(),
            "search never left the feasible set; tighten the test floor"
        );
        for c in infeasible {
            assert!(
                c.value > max_feasible,
                "penalized {} not above the feasible maximum {max_feasible}",
                c.value
            );
        }
    }

    #[test]
    fn doubling_the_class_scales_the_best_value_by_half() {
        let small = FeasibleClass::new(0.5, V_UNIT, Family::Balls).unwrap();
        let big = FeasibleClass::new(1.0, 8.0 * V_UNIT, Family::Balls).unwrap();
        let a = minimize(&small, Objective::Nu, 2, 1, 0.125, 1e-5).unwrap();
        let b = minimize(&big, Objective::Nu, 2, 1, 0.25, 1e-5).unwrap();
        let ratio = a.best.value / b.best.value;
        assert!((ratio - 2.0).abs() <= 0.05 * 2.0, "ratio {ratio}");
    }

    #[test]
    fn budget_below_simplex_size_is_rejected() {
        let class = FeasibleClass::new(0.35, V_UNIT, Family::Ellipsoids).unwrap();
        let err = minimize(&class, Objective::Nu, 2, 1, 0.15, 1e-5).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }
}
