//! Ready-made source fields: constants for operator calibration, the
//! closed-form ball eigenfield, and seeded random divergence-free fields.

use std::sync::Arc;

use crate::error::Result;
use crate::fieldspace::{face_kind, project_div_free_tangent, FaceField, FaceKind};
use crate::geometry::voxel::VoxelDomain;
use crate::math::V3;

/// First nonzero root of the spherical Bessel function j1, equivalently
/// the first positive solution of tan x = x. Governs the ball eigenfield.
pub const J1_FIRST_ZERO: f64 = 4.493409457909064;

/// Constant field sampled onto interior and boundary faces alike, so the
/// represented field really is uniform over the whole cell union.
pub fn uniform(dom: &Arc<VoxelDomain>, v: V3) -> FaceField {
    FaceField::sample_unconstrained(dom, |_| v)
}

fn j0(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn j1(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        x / 3.0 * (1.0 - x2 / 10.0 * (1.0 - x2 / 28.0))
    } else {
        x.sin() / (x * x) - x.cos() / x
    }
}

fn j1_prime(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        1.0 / 3.0 - x2 / 10.0 + x2 * x2 / 168.0
    } else {
        j0(x) - 2.0 * j1(x) / x
    }
}

/// Closed-form curl eigenfield of the ball of radius `radius` about
/// `center`: curl B = (x1/radius) B with x1 the first j1 zero, tangent to
/// the sphere (the radial component carries j1(x1) = 0). Evaluated
/// pointwise; sample it onto a rasterized ball of the same radius.
pub fn ball_eigenfield_at(center: V3, radius: f64, p: V3) -> V3 {
    let lam = J1_FIRST_ZERO / radius;
    let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if r < 1e-12 * radius {
        return [0.0, 0.0, 2.0 / 3.0];
    }
    let x = lam * r;
    let cos_t = d[2] / r;
    let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
    let sin_t = rho / r;
    let b_r = 2.0 * j1(x) / x * cos_t;
    let b_t = -(j1(x) / x + j1_prime(x)) * sin_t;
    let b_p = j1(x) * sin_t;
    let er = [d[0] / r, d[1] / r, d[2] / r];
    let (ep, et);
    if rho < 1e-12 * radius {
        // On the axis both angular components vanish with sin_t.
        ep = [0.0, 0.0, 0.0];
        et = [0.0, 0.0, 0.0];
    } else {
        ep = [-d[1] / rho, d[0] / rho, 0.0];
        et = [
            ep[1] * er[2] - ep[2] * er[1],
            ep[2] * er[0] - ep[0] * er[2],
            ep[0] * er[1] - ep[1] * er[0],
        ];
    }
    [
        b_r * er[0] + b_t * et[0] + b_p * ep[0],
        b_r * er[1] + b_t * et[1] + b_p * ep[1],
        b_r * er[2] + b_t * et[2] + b_p * ep[2],
    ]
}

/// The ball eigenfield sampled onto a domain (tangent faces only),
/// normalized to unit energy.
pub fn ball_eigenfield(dom: &Arc<VoxelDomain>, center: V3, radius: f64) -> FaceField {
    let mut f = FaceField::sample_tangent(dom, |p| ball_eigenfield_at(center, radius, p));
    let e = f.norm();
    if e > 0.0 {
        f.scale_mut(1.0 / e);
    }
    f
}

/// Smooth random field (a handful of vector plane waves), projected onto
/// the divergence-free tangent subspace and normalized to unit energy.
/// Deterministic for a fixed seed. The waves are evaluated in
/// lattice-anchored coordinates (relative to the first inside cell), so
/// a domain translated by whole cells carries the identical field value
/// for value; whole-lattice shifts then reproduce spectra bit for bit.
pub fn random_div_free(dom: &Arc<VoxelDomain>, seed: u64, tol: f64) -> Result<FaceField> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n_waves = 6;
    let mut amps: Vec<V3> = Vec::with_capacity(n_waves);
    let mut ks: Vec<V3> = Vec::with_capacity(n_waves);
    let mut phases: Vec<f64> = Vec::with_capacity(n_waves);
    for _ in 0..n_waves {
        amps.push([
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ]);
        ks.push([
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ]);
        phases.push(rng.gen_range(0.0..std::f64::consts::TAU));
    }
    let grid = dom.grid.clone();
    let anchor = grid.decompose(dom.inside[0] as usize);
    let mut raw = FaceField::zeros(dom);
    for axis in 0..3 {
        let fd = grid.face_dims(axis);
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    if face_kind(dom, axis, i, j, k) != FaceKind::Interior {
                        continue;
                    }
                    let mut q = [
                        grid.h * (i as f64 - anchor[0] as f64),
                        grid.h * (j as f64 - anchor[1] as f64),
                        grid.h * (k as f64 - anchor[2] as f64),
                    ];
                    q[axis] -= 0.5 * grid.h;
                    let mut v = 0.0;
                    for m in 0..n_waves {
                        let s =
                            (ks[m][0] * q[0] + ks[m][1] * q[1] + ks[m][2] * q[2] + phases[m]).sin();
                        v += amps[m][axis] * s;
                    }
                    raw.comp[axis][grid.fidx(axis, i, j, k)] = v;
                }
            }
        }
    }
    let mut f = project_div_free_tangent(&raw, tol)?.field;
    let e = f.norm();
    if e > 0.0 {
        f.scale_mut(1.0 / e);
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldspace::{magnetic_energy, max_abs_divergence};
    use crate::geometry::spec::DomainSpec;

    #[test]
    fn uniform_energy_equals_voxel_volume() {
        let dom = Arc::new(
            VoxelDomain::rasterize(&DomainSpec::ball([0.0; 3], 1.0), 0.1, 2).unwrap(),
        );
        let f = uniform(&dom, [0.0, 0.0, 2.0]);
        let want = 4.0 * dom.volume();
        assert!((magnetic_energy(&f) - want).abs() < 1e-10 * want);
    }

    #[test]
    fn ball_eigenfield_satisfies_curl_relation_pointwise() {
        // Central-difference curl of the analytic field against lambda * B
        // on a grid of interior probe points.
        let lam = J1_FIRST_ZERO;
        let e = 1e-5;
        let mut worst = 0.0f64;
        for &p in &[
            [0.3, 0.1, -0.2],
            [-0.5, 0.2, 0.4],
            [0.0, 0.0, 0.5],
            [0.61, -0.33, 0.11],
            [0.05, 0.62, -0.41],
        ] {
            let at = |q: V3| ball_eigenfield_at([0.0; 3], 1.0, q);
            let mut curl = [0.0; 3];
            let mut dq = |axis: usize, comp: usize| -> f64 {
                let mut hi = p;
                let mut lo = p;
                hi[axis] += e;
                lo[axis] -= e;
                (at(hi)[comp] - at(lo)[comp]) / (2.0 * e)
            };
            curl[0] = dq(1, 2) - dq(2, 1);
            curl[1] = dq(2, 0) - dq(0, 2);
            curl[2] = dq(0, 1) - dq(1, 0);
            let b = at(p);
            let scale = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            for a in 0..3 {
                worst = worst.max((curl[a] - lam * b[a]).abs() / scale.max(1e-12));
            }
        }
        assert!(worst < 1e-6, "curl relation violated by {worst}");
    }

    #[test]
    fn ball_eigenfield_is_nearly_radial_free_at_surface() {
        // j1(x1) = 0 makes the radial component vanish at r = 1.
        for &p in &[[1.0, 0.0, 0.0], [0.6, 0.0, 0.8], [0.0, -0.8, 0.6]] {
            let b = ball_eigenfield_at([0.0; 3], 1.0, p);
            let radial = b[0] * p[0] + b[1] * p[1] + b[2] * p[2];
            assert!(radial.abs() < 1e-12, "radial leak {radial} at {p:?}");
        }
    }

    #[test]
    fn sampled_eigenfield_has_unit_energy_and_small_divergence() {
        let dom = Arc::new(
            VoxelDomain::rasterize(&DomainSpec::ball([0.0; 3], 1.0), 0.05, 2).unwrap(),
        );
        let f = ball_eigenfield(&dom, [0.0; 3], 1.0);
        assert!((magnetic_energy(&f) - 1.0).abs() < 1e-12);
        assert_eq!(f.max_boundary_normal(), 0.0);
        // The analytic field is div-free; sampling keeps cell divergences
        // at truncation level away from the staircase.
        let div = crate::fieldspace::discrete_divergence(&f);
        let d2 = crate::geometry::edt::squared_edt(
            &dom.mask.iter().map(|&b| !b).collect::<Vec<_>>(),
            dom.grid.dims,
        );
        let mut deep_max = 0.0f64;
        for &idx in &dom.inside {
            if d2[idx as usize] > 9.0 {
                deep_max = deep_max.max(div[idx as usize].abs());
            }
        }
        assert!(deep_max < 0.05, "interior divergence {deep_max}");
    }

    #[test]
    fn random_fields_are_seed_deterministic() {
        let dom = Arc::new(
            VoxelDomain::rasterize(&DomainSpec::ball([0.0; 3], 1.0), 0.125, 2).unwrap(),
        );
        let a = random_div_free(&dom, 42, 1e-10).unwrap();
        let b = random_div_free(&dom, 42, 1e-10).unwrap();
        let c = random_div_free(&dom, 43, 1e-10).unwrap();
        for axis in 0..3 {
            assert_eq!(a.comp[axis], b.comp[axis]);
        }
        let mut diff = a.clone();
        diff.axpy(-1.0, &c);
        assert!(diff.norm() > 1e-3);
        assert!(max_abs_divergence(&a) < 1e-6);
        assert!((magnetic_energy(&a) - 1.0).abs() < 1e-12);
    }
}
