//! Hausdorff distance between voxel sets, plain and relative.
//!
//! Both variants embed the operands on one shared lattice window and use
//! exact Euclidean distance transforms, so the sup-min terms see true
//! distances rather than chamfer approximations. Operands must live on the
//! same lattice (equal h, origins an integer number of cells apart).

use crate::error::{Error, Result};
use crate::geometry::edt::squared_edt;
use crate::geometry::voxel::VoxelDomain;

/// Hausdorff distance between the inside-cell unions of two domains.
pub fn hausdorff(a: &VoxelDomain, b: &VoxelDomain) -> Result<f64> {
    let (dims, mask_a, mask_b) = common_window(a, b)?;
    Ok(directed_sup(&mask_a, &mask_b, dims).max(directed_sup(&mask_b, &mask_a, dims)) * a.grid.h)
}

/// Hausdorff distance between the complements of two domains inside the
/// closed ball of radius r0 about the coordinate origin. Both domains must
/// be contained in that ball.
pub fn relative_hausdorff(a: &VoxelDomain, b: &VoxelDomain, r0: f64) -> Result<f64> {
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::Precondition(format!("reference radius {r0} not positive")));
    }
    if !a.grid.same_lattice(&b.grid) {
        return Err(Error::DomainMismatch(
            "relative hausdorff operands on different lattices".into(),
        ));
    }
    let h = a.grid.h;
    for (dom, name) in [(a, "first"), (b, "second")] {
        for &idx in &dom.inside {
            let [i, j, k] = dom.grid.decompose(idx as usize);
            let c = dom.grid.cell_center(i, j, k);
            let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            if r > r0 + 1e-9 * r0.max(1.0) {
                return Err(Error::Precondition(format!(
                    "{name} domain reaches {r:.6}, outside the reference ball of radius {r0}"
                )));
            }
        }
    }

    // Window on a's lattice covering the reference ball with one spare cell.
    let mut lo = [0i64; 3];
    let mut n = [0usize; 3];
    for ax in 0..3 {
        let first = ((-r0 - h - a.grid.origin[ax]) / h).floor() as i64;
        let last = ((r0 + h - a.grid.origin[ax]) / h).ceil() as i64;
        lo[ax] = first;
        n[ax] = (last - first + 1) as usize;
    }
    let dims = n;
    let total = dims[0] * dims[1] * dims[2];
    let center = |i: usize, j: usize, k: usize| -> [f64; 3] {
        [
            a.grid.origin[0] + (lo[0] + i as i64) as f64 * h + 0.5 * h,
            a.grid.origin[1] + (lo[1] + j as i64) as f64 * h + 0.5 * h,
            a.grid.origin[2] + (lo[2] + k as i64) as f64 * h + 0.5 * h,
        ]
    };
    let mut in_ball = vec![false; total];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let c = center(i, j, k);
                in_ball[i + dims[0] * (j + dims[1] * k)] =
                    c[0] * c[0] + c[1] * c[1] + c[2] * c[2] <= r0 * r0;
            }
        }
    }
    let mut comp_a = in_ball.clone();
    let mut comp_b = in_ball;
    for (dom, comp) in [(a, &mut comp_a), (b, &mut comp_b)] {
        let off = offset_cells(&a.grid.origin, &dom.grid.origin, h);
        for &idx in &dom.inside {
            let [i, j, k] = dom.grid.decompose(idx as usize);
            let (ii, jj, kk) = (
                i as i64 + off[0] - lo[0],
                j as i64 + off[1] - lo[1],
                k as i64 + off[2] - lo[2],
            );
            comp[ii as usize + dims[0] * (jj as usize + dims[1] * kk as usize)] = false;
        }
    }
    if !comp_a.iter().any(|&c| c) || !comp_b.iter().any(|&c| c) {
        return Err(Error::Precondition(
            "domain fills the reference ball; complement is empty".into(),
        ));
    }
    Ok(directed_sup(&comp_a, &comp_b, dims).max(directed_sup(&comp_b, &comp_a, dims)) * h)
}

/// sup over eval cells of the distance to the nearest seed cell, in cells.
fn directed_sup(seeds: &[bool], eval: &[bool], dims: [usize; 3]) -> f64 {
    let d2 = squared_edt(seeds, dims);
    let mut worst = 0.0f64;
    for i in 0..eval.len() {
        if eval[i] && d2[i] > worst {
            worst = d2[i];
        }
    }
    worst.sqrt()
}

fn offset_cells(base: &[f64; 3], other: &[f64; 3], h: f64) -> [i64; 3] {
    [
        ((other[0] - base[0]) / h).round() as i64,
        ((other[1] - base[1]) / h).round() as i64,
        ((other[2] - base[2]) / h).round() as i64,
    ]
}

/// Rebuild both inside masks on the union bounding window of a's lattice.
fn common_window(a: &VoxelDomain, b: &VoxelDomain) -> Result<([usize; 3], Vec<bool>, Vec<bool>)> {
    if !a.grid.same_lattice(&b.grid) {
        return Err(Error::DomainMismatch(
            "hausdorff operands on different lattices".into(),
        ));
    }
    let h = a.grid.h;
    let off_b = offset_cells(&a.grid.origin, &b.grid.origin, h);
    let (alo, ahi) = a.cell_bounds();
    let (blo, bhi) = b.cell_bounds();
    let mut lo = [0i64; 3];
    let mut hi = [0i64; 3];
    for ax in 0..3 {
        lo[ax] = (alo[ax] as i64).min(blo[ax] as i64 + off_b[ax]);
        hi[ax] = (ahi[ax] as i64).max(bhi[ax] as i64 + off_b[ax]);
    }
    let dims = [
        (hi[0] - lo[0] + 1) as usize,
        (hi[1] - lo[1] + 1) as usize,
        (hi[2] - lo[2] + 1) as usize,
    ];
    let total = dims[0] * dims[1] * dims[2];
    let mut mask_a = vec![false; total];
    let mut mask_b = vec![false; total];
    for (dom, mask, off) in [(a, &mut mask_a, [0, 0, 0]), (b, &mut mask_b, off_b)] {
        for &idx in &dom.inside {
            let [i, j, k] = dom.grid.decompose(idx as usize);
            let (ii, jj, kk) = (
                i as i64 + off[0] - lo[0],
                j as i64 + off[1] - lo[1],
                k as i64 + off[2] - lo[2],
            );
            mask[ii as usize + dims[0] * (jj as usize + dims[1] * kk as usize)] = true;
        }
    }
    Ok((dims, mask_a, mask_b))
}
