//! Interior and exterior ball-condition radii.
//!
//! The interior radius of a voxel set is estimated by two complementary
//! probes and the smaller result wins:
//!
//! * opening test, bisected over r: erode to E_r = {cells deeper than r},
//!   re-dilate by r, and fail when a cell deeper than the one-voxel noise
//!   band is not re-covered. This catches thin features but is blind to
//!   shallow uncovered slivers: at a strongly convex boundary tip the
//!   uncovered sliver thins quadratically, so the opening test alone would
//!   overshoot the true radius there by O(sqrt(h)).
//! * medial pairs: adjacent cells whose nearest-boundary witnesses subtend
//!   a wide angle straddle a medial crossing; their mean depth estimates
//!   the local maximal-ball radius at O(h) accuracy, tips included. The
//!   angular threshold scales like 1/sqrt(depth) to stay above lattice
//!   witness jitter, which subtends ~2*sqrt(h/depth).
//!
//! The exterior radius runs the same estimate on the complement, embedded
//! in a lattice padded by r_cap so every exterior squeeze up to the cap is
//! inside the field of view. Radii at the cap mean "no violation found up
//! to r_cap", not an exact value; the report keeps the cap for that reason.

use crate::error::{Error, Result};
use crate::geometry::edt::{feature_transform, squared_edt};
use crate::geometry::grid::Grid;
use crate::geometry::voxel::VoxelDomain;
use crate::math::V3;
use serde::Serialize;

/// Witness rays must subtend at least this / sqrt(depth-in-cells).
const PAIR_ANGLE_SCALE: f64 = 3.5;
/// Cells within this many cell widths of the set boundary are exempt from
/// the re-covering check; rasterization noise lives there.
const SHALLOW_EXEMPT_CELLS: f64 = 1.5;
/// Refusal threshold for the padded exterior lattice.
const MAX_EXTERIOR_CELLS: usize = 48_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct BallConditionReport {
    pub r_interior: f64,
    pub r_exterior: f64,
    /// min(r_interior, r_exterior)
    pub r_uniform: f64,
    /// Near-boundary point where the interior radius is attained; None when
    /// the estimate ran into the cap instead of a geometric feature.
    pub interior_witness: Option<V3>,
    pub exterior_witness: Option<V3>,
    pub r_cap: f64,
    pub h: f64,
}

/// Estimate the largest radii for which every boundary point is touched by
/// an inside ball (r_interior) and an outside ball (r_exterior), capped at
/// r_cap.
pub fn ball_condition(dom: &VoxelDomain, r_cap: f64) -> Result<BallConditionReport> {
    let h = dom.grid.h;
    if !(r_cap.is_finite() && r_cap > 0.0) {
        return Err(Error::Precondition(format!("r_cap {r_cap} not positive")));
    }
    if r_cap < 2.0 * h {
        return Err(Error::Resolution(format!(
            "r_cap {r_cap} below the resolvable scale 2h = {}",
            2.0 * h
        )));
    }

    let (ri_raw, wi) = opening_radius(&dom.mask, dom.grid.dims, h, r_cap);
    let (r_interior, interior_witness) = if ri_raw < r_cap {
        (ri_raw, wi.map(|w| witness_pos(&dom.grid, w)))
    } else {
        (r_cap, None)
    };

    // Complement, padded so exterior balls up to r_cap fit in view.
    let pad = ((r_cap + 2.0 * h) / h).ceil() as usize + 2;
    let [nx, ny, nz] = dom.grid.dims;
    let ext_dims = [nx + 2 * pad, ny + 2 * pad, nz + 2 * pad];
    let n_ext = ext_dims[0] * ext_dims[1] * ext_dims[2];
    if n_ext > MAX_EXTERIOR_CELLS {
        return Err(Error::Capacity(format!(
            "padded exterior lattice needs {n_ext} cells (> {MAX_EXTERIOR_CELLS}); \
             lower r_cap or coarsen h"
        )));
    }
    let ext_grid = Grid {
        origin: [
            dom.grid.origin[0] - pad as f64 * h,
            dom.grid.origin[1] - pad as f64 * h,
            dom.grid.origin[2] - pad as f64 * h,
        ],
        h,
        dims: ext_dims,
    };
    let mut outside = vec![true; n_ext];
    for &idx in &dom.inside {
        let [i, j, k] = dom.grid.decompose(idx as usize);
        outside[ext_grid.idx(i + pad, j + pad, k + pad)] = false;
    }
    let (re_raw, we) = opening_radius(&outside, ext_dims, h, r_cap);
    let (r_exterior, exterior_witness) = if re_raw < r_cap {
        (re_raw, we.map(|w| witness_pos(&ext_grid, w)))
    } else {
        (r_cap, None)
    };

    Ok(BallConditionReport {
        r_uniform: r_interior.min(r_exterior),
        r_interior,
        r_exterior,
        interior_witness,
        exterior_witness,
        r_cap,
        h,
    })
}

fn witness_pos(grid: &Grid, flat: u32) -> V3 {
    let [i, j, k] = grid.decompose(flat as usize);
    grid.cell_center(i, j, k)
}

/// Largest r (up to r_cap) for which opening the set by a radius-r ball
/// changes nothing beyond one-voxel noise. Returns the radius and a
/// witness cell hugging the boundary where the first violation sits.
fn opening_radius(set: &[bool], dims: [usize; 3], h: f64, r_cap: f64) -> (f64, Option<u32>) {
    let seeds: Vec<bool> = set.iter().map(|&s| !s).collect();
    let ft = feature_transform(&seeds, dims);

    let (pair_r, pair_w) = medial_pair_minimum(set, &ft.dist2, &ft.witness, dims, h, r_cap);

    let max_d2 = ft
        .dist2
        .iter()
        .zip(set)
        .filter(|(_, &s)| s)
        .map(|(&d, _)| d)
        .fold(0.0f64, f64::max);
    let hi0 = (max_d2.sqrt() * h + 2.0 * h).min(r_cap);
    let mut lo = h;
    let mut hi = hi0;
    let mut morph_w: Option<u32> = None;
    let fail = |r: f64| -> Option<u32> { covering_violation(set, &ft.dist2, &ft.witness, dims, r / h) };
    match fail(hi0) {
        None => lo = hi0,
        Some(w) => {
            morph_w = Some(w);
            while hi - lo > 0.5 * h {
                let mid = 0.5 * (lo + hi);
                match fail(mid) {
                    Some(w) => {
                        hi = mid;
                        morph_w = Some(w);
                    }
                    None => lo = mid,
                }
            }
        }
    }
    let morph_r = lo;

    if pair_r < morph_r {
        (pair_r, pair_w)
    } else {
        (morph_r, morph_w)
    }
}

/// Opening failure test at radius r_cells: erode, re-dilate, and report a
/// deep set cell that the dilation no longer covers (witness = its
/// nearest-boundary cell). None when the set survives.
fn covering_violation(
    set: &[bool],
    dist2: &[f64],
    witness: &[u32],
    dims: [usize; 3],
    r_cells: f64,
) -> Option<u32> {
    let rc2 = r_cells * r_cells;
    let exempt2 = SHALLOW_EXEMPT_CELLS * SHALLOW_EXEMPT_CELLS;
    let eroded: Vec<bool> = dist2.iter().map(|&d| d > rc2).collect();
    let have_core = eroded.iter().any(|&e| e);
    let mut worst: Option<(f64, u32)> = None;
    if have_core {
        let cover = squared_edt(&eroded, dims);
        for i in 0..set.len() {
            if set[i] && dist2[i] > exempt2 && cover[i] > rc2 {
                let better = match worst {
                    None => true,
                    Some((d, _)) => dist2[i] < d,
                };
                if better {
                    worst = Some((dist2[i], witness[i]));
                }
            }
        }
    } else {
        for i in 0..set.len() {
            if set[i] && dist2[i] > exempt2 {
                let better = match worst {
                    None => true,
                    Some((d, _)) => dist2[i] < d,
                };
                if better {
                    worst = Some((dist2[i], witness[i]));
                }
            }
        }
    }
    worst.map(|(_, w)| w)
}

/// Minimum maximal-ball radius over detected medial crossings: adjacent
/// in-set cell pairs whose boundary witnesses subtend an angle too wide to
/// be lattice jitter. The h/2 subtraction removes the mean offset between
/// the continuum boundary and the witness cell centers beyond it.
fn medial_pair_minimum(
    set: &[bool],
    dist2: &[f64],
    witness: &[u32],
    dims: [usize; 3],
    h: f64,
    r_cap: f64,
) -> (f64, Option<u32>) {
    let [nx, ny, nz] = dims;
    let strides = [1usize, nx, nx * ny];
    let cellpos = |flat: usize| -> V3 {
        [
            (flat % nx) as f64,
            ((flat / nx) % ny) as f64,
            (flat / (nx * ny)) as f64,
        ]
    };
    let mut best = f64::INFINITY;
    let mut best_w: Option<u32> = None;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                if !set[idx] || dist2[idx] <= 2.0 {
                    continue;
                }
                let here = cellpos(idx);
                for (axis, &stride) in strides.iter().enumerate() {
                    let at_edge = match axis {
                        0 => i + 1 >= nx,
                        1 => j + 1 >= ny,
                        _ => k + 1 >= nz,
                    };
                    if at_edge {
                        continue;
                    }
                    let nidx = idx + stride;
                    if !set[nidx] || dist2[nidx] <= 2.0 {
                        continue;
                    }
                    let r_cells = 0.5 * (dist2[idx].sqrt() + dist2[nidx].sqrt());
                    let r_phys = r_cells * h - 0.5 * h;
                    if r_phys >= best || r_phys > r_cap + 2.0 * h {
                        continue;
                    }
                    let wy = witness[idx];
                    let wn = witness[nidx];
                    if wy == wn {
                        continue;
                    }
                    let mut mu = cellpos(nidx);
                    for a in 0..3 {
                        mu[a] = 0.5 * (mu[a] + here[a]);
                    }
                    let (pw, pn) = (cellpos(wy as usize), cellpos(wn as usize));
                    let u = [pw[0] - mu[0], pw[1] - mu[1], pw[2] - mu[2]];
                    let v = [pn[0] - mu[0], pn[1] - mu[1], pn[2] - mu[2]];
                    let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                    let nv = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if nu == 0.0 || nv == 0.0 {
                        continue;
                    }
                    let cosang =
                        ((u[0] * v[0] + u[1] * v[1] + u[2] * v[2]) / (nu * nv)).clamp(-1.0, 1.0);
                    let angle = cosang.acos();
                    let threshold = PAIR_ANGLE_SCALE / r_cells.max(2.0).sqrt();
                    if angle > threshold {
                        best = r_phys;
                        best_w = Some(wy);
                    }
                }
            }
        }
    }
    (best, best_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::spec::DomainSpec;

    #[test]
    fn unit_ball_radii() {
        let dom = VoxelDomain::rasterize(&DomainSpec::ball([0.0; 3], 1.0), 0.1, 2).unwrap();
        let rep = ball_condition(&dom, 2.0).unwrap();
        assert!(
            (rep.r_interior - 1.0).abs() <= 0.2,
            "interior {}",
            rep.r_interior
        );
        // Convex: no exterior squeeze anywhere, so the cap is reported.
        assert_eq!(rep.r_exterior, 2.0);
        assert!(rep.exterior_witness.is_none());
        assert_eq!(rep.r_uniform, rep.r_interior);
        let w = rep.interior_witness.expect("interior witness");
        let wr = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        assert!((wr - 1.0).abs() <= 0.15, "witness radius {wr}");
    }

    #[test]
    fn slab_interior_radius_is_half_thickness() {
        // 30 x 30 x 9 block of cells: thinnest direction governs.
        let h = 0.1;
        let grid = Grid {
            origin: [0.0; 3],
            h,
            dims: [38, 38, 17],
        };
        let mut mask = vec![false; grid.n_cells()];
        for k in 4..13 {
            for j in 4..34 {
                for i in 4..34 {
                    mask[grid.idx(i, j, k)] = true;
                }
            }
        }
        let dom = VoxelDomain::from_mask(grid, mask).unwrap();
        let rep = ball_condition(&dom, 1.0).unwrap();
        assert!(
            (rep.r_interior - 0.45).abs() <= 0.2,
            "slab interior {}",
            rep.r_interior
        );
        // Box complement is squeeze-free.
        assert_eq!(rep.r_exterior, 1.0);
    }

    #[test]
    fn two_ball_gap_sets_the_exterior_radius() {
        let spec = DomainSpec::Union(vec![
            DomainSpec::ball([-1.0, 0.0, 0.0], 0.5),
            DomainSpec::ball([1.0, 0.0, 0.0], 0.5),
        ]);
        let dom = VoxelDomain::rasterize(&spec, 0.05, 2).unwrap();
        let rep = ball_condition(&dom, 1.0).unwrap();
        assert!(
            (rep.r_interior - 0.5).abs() <= 0.1,
            "interior {}",
            rep.r_interior
        );
        // Exterior ball wedged between the two components: half the gap.
        assert!(
            (rep.r_exterior - 0.5).abs() <= 0.1,
            "exterior {}",
            rep.r_exterior
        );
        let w = rep.exterior_witness.expect("exterior witness");
        assert!(
            (w[0].abs() - 0.5).abs() <= 0.15 && w[1].abs() <= 0.2 && w[2].abs() <= 0.2,
            "squeeze witness at {w:?}"
        );
        assert!((rep.r_uniform - 0.5).abs() <= 0.1);
    }

    #[test]
    fn cap_below_resolution_is_an_error() {
        let dom = VoxelDomain::rasterize(&DomainSpec::ball([0.0; 3], 1.0), 0.1, 2).unwrap();
        match ball_condition(&dom, 0.15) {
            Err(Error::Resolution(_)) => {}
            other => panic!("expected resolution error, got {other:?}"),
        }
    }
}
