//! Repack connected components into a bounded ball by integer-cell moves.
//!
//! Translations are whole numbers of cells, so every component keeps its
//! exact cell count (volume) and its shape; only positions change. If the
//! input already sits inside the target ball with comfortable gaps it is
//! returned unchanged.

use crate::error::{Error, Result};
use crate::geometry::edt::squared_edt;
use crate::geometry::grid::Grid;
use crate::geometry::voxel::VoxelDomain;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Translate components so all lie inside the ball of radius `r` about the
/// coordinate origin, pairwise closure-gaps at least 2h. Components are
/// placed on a cubic slot lattice spread as wide as containment allows
/// (capped at a gap of about twice the largest component radius), so
/// well-separated inputs stay well separated.
pub fn normalize_components(dom: &VoxelDomain, r: f64) -> Result<VoxelDomain> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Precondition(format!("target radius {r} not positive")));
    }
    if already_normal(dom, r) {
        return Ok(dom.clone());
    }
    let h = dom.grid.h;
    let m = dom.n_components;

    // Per-component cell lists, bounding-box midpoints, circumradii.
    let mut cells: Vec<Vec<[i64; 3]>> = vec![Vec::new(); m];
    for &idx in &dom.inside {
        let [i, j, k] = dom.grid.decompose(idx as usize);
        let label = dom.labels[idx as usize] as usize;
        cells[label - 1].push([i as i64, j as i64, k as i64]);
    }
    let mut mid = vec![[0.0f64; 3]; m];
    let mut rad = vec![0.0f64; m];
    for c in 0..m {
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for cell in &cells[c] {
            for ax in 0..3 {
                lo[ax] = lo[ax].min(cell[ax]);
                hi[ax] = hi[ax].max(cell[ax]);
            }
        }
        for ax in 0..3 {
            mid[c][ax] = dom.grid.origin[ax] + 0.5 * (lo[ax] + hi[ax] + 1) as f64 * h;
        }
        let mut worst2 = 0.0f64;
        for cell in &cells[c] {
            let mut d2 = 0.0;
            for ax in 0..3 {
                let x = dom.grid.origin[ax] + (cell[ax] as f64 + 0.5) * h - mid[c][ax];
                d2 += x * x;
            }
            worst2 = worst2.max(d2);
        }
        rad[c] = worst2.sqrt() + 0.5 * SQRT3 * h;
        if rad[c] > 0.5 * r {
            return Err(Error::Capacity(format!(
                "component {} has radius {:.4}, over half the target radius {r}",
                c + 1,
                rad[c]
            )));
        }
    }
    let rad_max = rad.iter().cloned().fold(0.0f64, f64::max);

    // Slot lattice pitch: as wide as containment allows, but no wider than
    // needed to keep neighbors a full component-diameter apart.
    let k = (m as f64).cbrt().ceil() as usize;
    let p = if k <= 1 {
        0.0
    } else {
        let p_max = (r - rad_max - 0.5 * SQRT3 * h) * 2.0 / (SQRT3 * (k - 1) as f64);
        let p_feasible = 2.0 * rad_max + 4.0 * h;
        let p = p_max.min(4.0 * rad_max + 4.0 * h);
        if p < p_feasible {
            return Err(Error::Capacity(format!(
                "cannot pack {m} components of radius {rad_max:.4} into a ball of radius {r}"
            )));
        }
        p
    };
    if k <= 1 && rad_max + 0.5 * SQRT3 * h > r {
        return Err(Error::Capacity(format!(
            "component radius {rad_max:.4} exceeds the target ball radius {r}"
        )));
    }
    let mut slots: Vec<[f64; 3]> = Vec::with_capacity(k * k * k);
    for c in 0..k {
        for b in 0..k {
            for a in 0..k {
                slots.push([
                    (a as f64 - 0.5 * (k - 1) as f64) * p,
                    (b as f64 - 0.5 * (k - 1) as f64) * p,
                    (c as f64 - 0.5 * (k - 1) as f64) * p,
                ]);
            }
        }
    }
    slots.sort_by(|u, v| {
        let nu = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        let nv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        nu.partial_cmp(&nv)
            .unwrap()
            .then(u.partial_cmp(v).unwrap())
    });

    // Largest components take the most central slots.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&c| std::cmp::Reverse(cells[c].len()));

    let mut shift = vec![[0i64; 3]; m];
    for (slot, &c) in slots.iter().zip(&order) {
        for ax in 0..3 {
            shift[c][ax] = ((slot[ax] - mid[c][ax]) / h).round() as i64;
        }
    }

    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for c in 0..m {
        for cell in &cells[c] {
            for ax in 0..3 {
                let t = cell[ax] + shift[c][ax];
                lo[ax] = lo[ax].min(t);
                hi[ax] = hi[ax].max(t);
            }
        }
    }
    let margin = 2i64;
    let dims = [
        (hi[0] - lo[0] + 1 + 2 * margin) as usize,
        (hi[1] - lo[1] + 1 + 2 * margin) as usize,
        (hi[2] - lo[2] + 1 + 2 * margin) as usize,
    ];
    let grid = Grid {
        origin: [
            dom.grid.origin[0] + (lo[0] - margin) as f64 * h,
            dom.grid.origin[1] + (lo[1] - margin) as f64 * h,
            dom.grid.origin[2] + (lo[2] - margin) as f64 * h,
        ],
        h,
        dims,
    };
    let mut mask = vec![false; grid.n_cells()];
    for c in 0..m {
        for cell in &cells[c] {
            let i = (cell[0] + shift[c][0] - lo[0] + margin) as usize;
            let j = (cell[1] + shift[c][1] - lo[1] + margin) as usize;
            let kk = (cell[2] + shift[c][2] - lo[2] + margin) as usize;
            mask[grid.idx(i, j, kk)] = true;
        }
    }
    let out = VoxelDomain::from_mask(grid, mask)?;
    if out.n_components != m {
        return Err(Error::Solver(format!(
            "normalization merged components: {} in, {} out",
            m, out.n_components
        )));
    }
    Ok(out)
}

/// Inside the target ball with conservative pairwise gaps already.
fn already_normal(dom: &VoxelDomain, r: f64) -> bool {
    let h = dom.grid.h;
    let slack = 0.5 * SQRT3 * h;
    for &idx in &dom.inside {
        let [i, j, k] = dom.grid.decompose(idx as usize);
        let c = dom.grid.cell_center(i, j, k);
        if (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt() + slack > r {
            return false;
        }
    }
    if dom.n_components <= 1 {
        return true;
    }
    // Min center distance across components, via one transform per label.
    let dims = dom.grid.dims;
    let mut min_d2 = f64::INFINITY;
    for label in 1..=dom.n_components as u16 {
        let mut seeds = vec![false; dom.grid.n_cells()];
        for &idx in &dom.inside {
            if dom.labels[idx as usize] == label {
                seeds[idx as usize] = true;
            }
        }
        let d2 = squared_edt(&seeds, dims);
        for &idx in &dom.inside {
            if dom.labels[idx as usize] != label {
                min_d2 = min_d2.min(d2[idx as usize]);
            }
        }
    }
    min_d2.sqrt() * h - SQRT3 * h >= 2.0 * h
}
