//! Uniform cell grid shared by masks, cell data, and staggered face data.
//!
//! Cells are cubes of side `h`; cell `(i, j, k)` occupies
//! `origin + h*[i, i+1] x [j, j+1] x [k, k+1]` and its center sits at
//! `origin + h*(i+1/2, ...)`. Faces normal to axis `a` are indexed with the
//! cell index of the cell on their positive side, so axis-`a` faces have one
//! extra layer along `a`. Storage is x-fastest.

use crate::math::V3;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub origin: V3,
    pub h: f64,
    pub dims: [usize; 3],
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Grid that results from snapping `lo` down and `hi` up to the lattice
    /// `h * Z^3` and adding `margin` empty cells on every side.
    pub fn covering(lo: V3, hi: V3, h: f64, margin: usize) -> Grid {
        assert!(h > 0.0);
        let mut origin = [0.0; 3];
        let mut dims = [0; 3];
        for a in 0..3 {
            let i_lo = (lo[a] / h).floor() as i64 - margin as i64;
            let i_hi = (hi[a] / h).ceil() as i64 + margin as i64;
            origin[a] = i_lo as f64 * h;
            dims[a] = (i_hi - i_lo).max(1) as usize;
        }
        Grid { origin, h, dims }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.dims[0] && j < self.dims[1] && k < self.dims[2]);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn decompose(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> V3 {
        [
            self.origin[0] + self.h * (i as f64 + 0.5),
            self.origin[1] + self.h * (j as f64 + 0.5),
            self.origin[2] + self.h * (k as f64 + 0.5),
        ]
    }

    /// Dimensions of the face lattice normal to `axis`.
    #[inline]
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.dims;
        d[axis] += 1;
        d
    }

    pub fn n_faces(&self, axis: usize) -> usize {
        let d = self.face_dims(axis);
        d[0] * d[1] * d[2]
    }

    #[inline]
    pub fn fidx(&self, axis: usize, i: usize, j: usize, k: usize) -> usize {
        let d = self.face_dims(axis);
        debug_assert!(i < d[0] && j < d[1] && k < d[2]);
        i + d[0] * (j + d[1] * k)
    }

    /// Center of the face with index `(i, j, k)` on the `axis` face lattice.
    #[inline]
    pub fn face_center(&self, axis: usize, i: usize, j: usize, k: usize) -> V3 {
        let mut p = [
            self.origin[0] + self.h * (i as f64 + 0.5),
            self.origin[1] + self.h * (j as f64 + 0.5),
            self.origin[2] + self.h * (k as f64 + 0.5),
        ];
        p[axis] -= 0.5 * self.h;
        p
    }

    /// Cell containing the point, if inside the grid box.
    pub fn locate(&self, p: V3) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let t = (p[a] - self.origin[a]) / self.h;
            if t < 0.0 || t >= self.dims[a] as f64 {
                return None;
            }
            c[a] = t as usize;
        }
        Some(c)
    }

    /// Whether two grids live on the same lattice `h * Z^3` (equal spacing,
    /// origins differing by whole cells). Required by the distance-transform
    /// based comparisons.
    pub fn same_lattice(&self, other: &Grid) -> bool {
        if (self.h - other.h).abs() > 1e-12 * self.h {
            return false;
        }
        for a in 0..3 {
            let d = (other.origin[a] - self.origin[a]) / self.h;
            if (d - d.round()).abs() > 1e-9 {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_grid_contains_box_with_margin() {
        let g = Grid::covering([-1.0, -0.5, 0.2], [1.0, 0.5, 0.9], 0.1, 2);
        for a in 0..3 {
            assert!(g.origin[a] <= [-1.0, -0.5, 0.2][a] - 2.0 * 0.1 + 1e-12);
        }
        assert!(g.origin[0] + g.h * g.dims[0] as f64 >= 1.0 + 0.2 - 1e-12);
        // Origin sits on the lattice.
        for a in 0..3 {
            let t = g.origin[a] / g.h;
            assert!((t - t.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn face_centers_sit_on_cell_boundaries() {
        let g = Grid {
            origin: [0.0, 0.0, 0.0],
            h: 0.5,
            dims: [4, 3, 2],
        };
        let f = g.face_center(0, 2, 1, 0);
        assert!((f[0] - 1.0).abs() < 1e-15);
        assert!((f[1] - 0.75).abs() < 1e-15);
        let c = g.cell_center(1, 1, 0);
        assert!((c[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn lattice_compatibility_detects_offsets() {
        let a = Grid {
            origin: [0.0, 0.0, 0.0],
            h: 0.1,
            dims: [5, 5, 5],
        };
        let mut b = a;
        b.origin = [0.3, -0.2, 1.0];
        assert!(a.same_lattice(&b));
        b.origin[0] = 0.35;
        assert!(!a.same_lattice(&b));
    }
}
