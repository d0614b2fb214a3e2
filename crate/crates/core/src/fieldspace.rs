//! Staggered vector fields on a voxel domain and the projections that
//! carve out the divergence-free tangent and zero-flux subspaces.
//!
//! Fields live on cell faces (marker-and-cell staggering). A face between
//! two inside cells is an interior face and carries a degree of freedom; a
//! face between an inside and an outside cell is a boundary face whose
//! value is the normal component on the staircase boundary, pinned to zero
//! by every constructor and projection in the tangent pipeline, so
//! tangency is exact by construction rather than approximate. Faces not
//! touching any inside cell are structural zeros: the arrays are dense for
//! indexing simplicity, but those entries are never read or written.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::grid::Grid;
use crate::geometry::voxel::VoxelDomain;
use crate::math::V3;

/// Relative residual target used when callers do not pass their own.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Curl-energy eigenvalue (units 1/length^2) below which a mode counts as
/// harmonic. Genuine kernel members sit at solver precision (~1e-12);
/// the first non-kernel mode sits at the squared first curl eigenvalue,
/// O(1) or larger for desk-scale domains.
const KERNEL_CUTOFF: f64 = 1e-2;

#[derive(Clone)]
pub struct FaceField {
    dom: Arc<VoxelDomain>,
    /// One dense array per axis, indexed by Grid::fidx.
    pub comp: [Vec<f64>; 3],
}

impl std::fmt::Debug for FaceField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let d = self.dom.grid.dims;
        write!(
            f,
            "FaceField {{ dims: {:?}, h: {}, energy: {:.6e} }}",
            d,
            self.dom.grid.h,
            self.dot(self)
        )
    }
}

/// Face classification relative to the inside mask.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum FaceKind {
    Interior,
    Boundary,
    Outside,
}

impl FaceField {
    pub fn zeros(dom: &Arc<VoxelDomain>) -> FaceField {
        FaceField {
            dom: Arc::clone(dom),
            comp: [
                vec![0.0; dom.grid.n_faces(0)],
                vec![0.0; dom.grid.n_faces(1)],
                vec![0.0; dom.grid.n_faces(2)],
            ],
        }
    }

    pub fn domain(&self) -> &Arc<VoxelDomain> {
        &self.dom
    }

    pub fn grid(&self) -> &Grid {
        &self.dom.grid
    }

    /// Sample a vector function onto interior faces only; boundary normal
    /// components stay exactly zero. The main constructor for fields that
    /// must respect tangency.
    pub fn sample_tangent<F: Fn(V3) -> V3>(dom: &Arc<VoxelDomain>, f: F) -> FaceField {
        let mut out = FaceField::zeros(dom);
        out.fill(f, false);
        out
    }

    /// Sample onto interior and boundary faces alike. Produces fields that
    /// are generally not tangent; used to calibrate integral operators
    /// against closed-form sources (a uniform field, say) where pinning
    /// the boundary would misrepresent the source near the surface.
    pub fn sample_unconstrained<F: Fn(V3) -> V3>(dom: &Arc<VoxelDomain>, f: F) -> FaceField {
        let mut out = FaceField::zeros(dom);
        out.fill(f, true);
        out
    }

    fn fill<F: Fn(V3) -> V3>(&mut self, f: F, include_boundary: bool) {
        let grid = self.dom.grid.clone();
        for axis in 0..3 {
            let fd = grid.face_dims(axis);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let kind = face_kind(&self.dom, axis, i, j, k);
                        let keep = match kind {
                            FaceKind::Interior => true,
                            FaceKind::Boundary => include_boundary,
                            FaceKind::Outside => false,
                        };
                        if keep {
                            let c = grid.face_center(axis, i, j, k);
                            self.comp[axis][grid.fidx(axis, i, j, k)] = f(c)[axis];
                        }
                    }
                }
            }
        }
    }

    /// Build from per-inside-cell vectors (aligned with `dom.inside`) by
    /// averaging the two adjacent cells onto each face. Boundary faces are
    /// pinned; an interior face always has both cells inside.
    pub fn from_cell_vectors(dom: &Arc<VoxelDomain>, vals: &[V3]) -> Result<FaceField> {
        if vals.len() != dom.inside.len() {
            return Err(Error::Precondition(format!(
                "cell vector count {} does not match inside cell count {}",
                vals.len(),
                dom.inside.len()
            )));
        }
        let grid = &dom.grid;
        let mut cell_slot = vec![u32::MAX; grid.n_cells()];
        for (slot, &idx) in dom.inside.iter().enumerate() {
            cell_slot[idx as usize] = slot as u32;
        }
        let mut out = FaceField::zeros(dom);
        for axis in 0..3 {
            let fd = grid.face_dims(axis);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        if face_kind(dom, axis, i, j, k) != FaceKind::Interior {
                            continue;
                        }
                        let (c1, c2) = face_cells(axis, i, j, k);
                        let a = cell_slot[grid.idx(c1[0], c1[1], c1[2])] as usize;
                        let b = cell_slot[grid.idx(c2[0], c2[1], c2[2])] as usize;
                        out.comp[axis][grid.fidx(axis, i, j, k)] =
                            0.5 * (vals[a][axis] + vals[b][axis]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Average adjacent faces to cell centers, aligned with `dom.inside`.
    pub fn cell_average(&self) -> Vec<V3> {
        let grid = &self.dom.grid;
        let mut out = Vec::with_capacity(self.dom.inside.len());
        for &idx in &self.dom.inside {
            let [i, j, k] = grid.decompose(idx as usize);
            out.push([
                0.5 * (self.comp[0][grid.fidx(0, i, j, k)]
                    + self.comp[0][grid.fidx(0, i + 1, j, k)]),
                0.5 * (self.comp[1][grid.fidx(1, i, j, k)]
                    + self.comp[1][grid.fidx(1, i, j + 1, k)]),
                0.5 * (self.comp[2][grid.fidx(2, i, j, k)]
                    + self.comp[2][grid.fidx(2, i, j, k + 1)]),
            ]);
        }
        out
    }

    pub fn assert_same_domain(&self, other: &FaceField) -> Result<()> {
        if Arc::ptr_eq(&self.dom, &other.dom) {
            return Ok(());
        }
        self.dom.assert_same_grid(&other.dom)?;
        if self.dom.mask != other.dom.mask {
            return Err(Error::DomainMismatch(
                "fields live on different inside masks".into(),
            ));
        }
        Ok(())
    }

    /// L2 inner product: h^3 times the weighted face sum. Boundary faces
    /// count half so that constant fields integrate exactly over the cell
    /// union; interior faces count once.
    pub fn dot(&self, other: &FaceField) -> f64 {
        debug_assert!(self.assert_same_domain(other).is_ok());
        let grid = &self.dom.grid;
        let mut s = 0.0;
        for axis in 0..3 {
            let fd = grid.face_dims(axis);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let w = match face_kind(&self.dom, axis, i, j, k) {
                            FaceKind::Interior => 1.0,
                            FaceKind::Boundary => 0.5,
                            FaceKind::Outside => continue,
                        };
                        let fi = grid.fidx(axis, i, j, k);
                        s += w * self.comp[axis][fi] * other.comp[axis][fi];
                    }
                }
            }
        }
        s * grid.h.powi(3)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale_mut(&mut self, c: f64) {
        for axis in 0..3 {
            for v in &mut self.comp[axis] {
                *v *= c;
            }
        }
    }

    pub fn scaled(&self, c: f64) -> FaceField {
        let mut out = self.clone();
        out.scale_mut(c);
        out
    }

    /// self += c * other
    pub fn axpy(&mut self, c: f64, other: &FaceField) {
        debug_assert!(self.assert_same_domain(other).is_ok());
        for axis in 0..3 {
            for (a, b) in self.comp[axis].iter_mut().zip(&other.comp[axis]) {
                *a += c * b;
            }
        }
    }

    /// Largest |normal component| over boundary faces; zero for every
    /// field in the tangent pipeline.
    pub fn max_boundary_normal(&self) -> f64 {
        let grid = &self.dom.grid;
        let mut worst = 0.0f64;
        for axis in 0..3 {
            let fd = grid.face_dims(axis);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        if face_kind(&self.dom, axis, i, j, k) == FaceKind::Boundary {
                            worst = worst.max(self.comp[axis][grid.fidx(axis, i, j, k)].abs());
                        }
                    }
                }
            }
        }
        worst
    }

    /// Zero all boundary (and outside) faces in place: the orthogonal
    /// projection onto tangent fields.
    pub fn tangentize(&mut self) {
        let grid = self.dom.grid.clone();
        for axis in 0..3 {
            let fd = grid.face_dims(axis);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        if face_kind(&self.dom, axis, i, j, k) != FaceKind::Interior {
                            self.comp[axis][grid.fidx(axis, i, j, k)] = 0.0;
                        }
                    }
                }
            }
        }
    }

    /// Decimal-text export: the owning domain header plus one value per
    /// line for each axis array (structural zeros included, in fidx order).
    pub fn to_text(&self) -> String {
        let mut s = self.dom.to_text();
        for (axis, name) in ["fx", "fy", "fz"].iter().enumerate() {
            s.push_str(&format!("{name} = {}\n", self.comp[axis].len()));
            for v in &self.comp[axis] {
                s.push_str(&format!("{v}\n"));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<FaceField> {
        let mut header = String::new();
        let mut arrays: Vec<Vec<f64>> = Vec::new();
        let mut lines = text.lines().enumerate();
        let mut pending: Option<(usize, usize)> = None;
        for (ln, line) in &mut lines {
            let trimmed = line.trim();
            if let Some(rest) = trimmed
                .strip_prefix("fx =")
                .or_else(|| trimmed.strip_prefix("fy ="))
                .or_else(|| trimmed.strip_prefix("fz ="))
            {
                let n: usize = rest.trim().parse().map_err(|_| Error::Parse {
                    line: ln + 1,
                    msg: "bad face array length".into(),
                })?;
                pending = Some((arrays.len(), n));
                arrays.push(Vec::with_capacity(n));
                continue;
            }
            match pending {
                Some((slot, n)) if arrays[slot].len() < n => {
                    let v: f64 = trimmed.parse().map_err(|_| Error::Parse {
                        line: ln + 1,
                        msg: "bad face value".into(),
                    })?;
                    arrays[slot].push(v);
                }
                _ => {
                    header.push_str(line);
                    header.push('\n');
                }
            }
        }
        if arrays.len() != 3 {
            return Err(Error::Parse {
                line: 0,
                msg: format!("expected 3 face arrays, found {}", arrays.len()),
            });
        }
        let dom = Arc::new(VoxelDomain::parse(&header)?);
        for axis in 0..3 {
            if arrays[axis].len() != dom.grid.n_faces(axis) {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!(
                        "axis {axis} face array has {} entries, grid wants {}",
                        arrays[axis].len(),
                        dom.grid.n_faces(axis)
                    ),
                });
            }
        }
        let mut it = arrays.into_iter();
        Ok(FaceField {
            dom,
            comp: [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()],
        })
    }
}

/// The two cells adjacent to a face, as (lower, upper) cell indices; the
/// lower one may sit off-grid when the face is on the grid hull.
pub(crate) fn face_cells(axis: usize, i: usize, j: usize, k: usize) -> ([usize; 3], [usize; 3]) {
    let mut lo = [i, j, k];
    let hi = [i, j, k];
    lo[axis] = lo[axis].wrapping_sub(1);
    (lo, hi)
}

fn cell_inside(dom: &VoxelDomain, c: [usize; 3]) -> bool {
    let d = dom.grid.dims;
    c[0] < d[0] && c[1] < d[1] && c[2] < d[2] && dom.mask[dom.grid.idx(c[0], c[1], c[2])]
}

pub(crate) fn face_kind(dom: &VoxelDomain, axis: usize, i: usize, j: usize, k: usize) -> FaceKind {
    let (lo, hi) = face_cells(axis, i, j, k);
    match (cell_inside(dom, lo), cell_inside(dom, hi)) {
        (true, true) => FaceKind::Interior,
        (false, false) => FaceKind::Outside,
        _ => FaceKind::Boundary,
    }
}

/// Per-cell net outward face flux divided by h. Inside cells only; zero
/// elsewhere. Output indexed like the full cell lattice.
pub fn discrete_divergence(f: &FaceField) -> Vec<f64> {
    let dom = f.domain();
    let grid = &dom.grid;
    let inv_h = 1.0 / grid.h;
    let mut div = vec![0.0; grid.n_cells()];
    for &idx in &dom.inside {
        let [i, j, k] = grid.decompose(idx as usize);
        let d = (f.comp[0][grid.fidx(0, i + 1, j, k)] - f.comp[0][grid.fidx(0, i, j, k)])
            + (f.comp[1][grid.fidx(1, i, j + 1, k)] - f.comp[1][grid.fidx(1, i, j, k)])
            + (f.comp[2][grid.fidx(2, i, j, k + 1)] - f.comp[2][grid.fidx(2, i, j, k)]);
        div[idx as usize] = d * inv_h;
    }
    div
}

pub fn max_abs_divergence(f: &FaceField) -> f64 {
    discrete_divergence(f)
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Difference quotient of a cell scalar across interior faces; boundary
/// faces get zero (homogeneous Neumann), so gradients are tangent fields.
pub fn gradient_field(dom: &Arc<VoxelDomain>, phi: &[f64]) -> FaceField {
    let grid = &dom.grid;
    let inv_h = 1.0 / grid.h;
    let mut out = FaceField::zeros(dom);
    for axis in 0..3 {
        let fd = grid.face_dims(axis);
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    if face_kind(dom, axis, i, j, k) != FaceKind::Interior {
                        continue;
                    }
                    let (lo, hi) = face_cells(axis, i, j, k);
                    out.comp[axis][grid.fidx(axis, i, j, k)] = (phi
                        [grid.idx(hi[0], hi[1], hi[2])]
                        - phi[grid.idx(lo[0], lo[1], lo[2])])
                        * inv_h;
                }
            }
        }
    }
    out
}

pub fn magnetic_energy(f: &FaceField) -> f64 {
    f.dot(f)
}

/// Conjugate gradient on a symmetric positive (semi)definite operator.
/// `apply(x, y)` writes y = A x. `renorm` projects the right-hand side
/// onto the operator's range once up front (mean removal for the Neumann
/// solve); the operator preserves that subspace exactly, so the iteration
/// never needs re-projection. Convergence is judged on the true residual
/// b - A x, recomputed after the recurrence claims success, with restarts
/// in case roundoff made the recurrence drift. Returns (solution, total
/// iterations, relative true residual).
fn cg_solve<A, R>(
    n: usize,
    mut apply: A,
    b: &[f64],
    tol_rel: f64,
    cap: usize,
    renorm: R,
) -> (Vec<f64>, usize, f64)
where
    A: FnMut(&[f64], &mut [f64]),
    R: Fn(&mut [f64]),
{
    let mut b = b.to_vec();
    renorm(&mut b);
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return (x, 0, 0.0);
    }
    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut total_iters = 0;
    let mut true_res = f64::INFINITY;
    for _restart in 0..4 {
        apply(&x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        true_res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / b_norm;
        if true_res <= tol_rel || total_iters >= cap {
            break;
        }
        p.copy_from_slice(&r);
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        while total_iters < cap {
            apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            total_iters += 1;
            let rr_new: f64 = r.iter().map(|v| v * v).sum();
            if rr_new.sqrt() <= tol_rel * b_norm {
                break;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
    }
    (x, total_iters, true_res)
}

/// Subtract the per-component mean over inside cells (the null space of
/// the Neumann Laplacian) from a cell scalar array.
fn subtract_component_means(dom: &VoxelDomain, v: &mut [f64]) {
    let m = dom.n_components;
    let mut sums = vec![0.0f64; m];
    for &idx in &dom.inside {
        sums[dom.labels[idx as usize] as usize - 1] += v[idx as usize];
    }
    for c in 0..m {
        sums[c] /= dom.component_cells[c] as f64;
    }
    for &idx in &dom.inside {
        v[idx as usize] -= sums[dom.labels[idx as usize] as usize - 1];
    }
}

/// Neumann Laplacian (negated, so positive semidefinite): only interior
/// faces conduct, matching gradient_field.
fn apply_neg_laplacian(dom: &VoxelDomain, phi: &[f64], out: &mut [f64]) {
    let grid = &dom.grid;
    let inv_h2 = 1.0 / (grid.h * grid.h);
    let [nx, ny, _] = grid.dims;
    let strides = [1usize, nx, nx * ny];
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for &idx in &dom.inside {
        let i = idx as usize;
        let [ci, cj, ck] = grid.decompose(i);
        let pos = [ci, cj, ck];
        let mut acc = 0.0;
        for axis in 0..3 {
            if pos[axis] + 1 < grid.dims[axis] {
                let nb = i + strides[axis];
                if dom.mask[nb] {
                    acc += phi[i] - phi[nb];
                }
            }
            if pos[axis] > 0 {
                let nb = i - strides[axis];
                if dom.mask[nb] {
                    acc += phi[i] - phi[nb];
                }
            }
        }
        out[i] = acc * inv_h2;
    }
}

/// Outcome of the Poisson-based projection.
pub struct ProjectionReport {
    pub field: FaceField,
    pub iterations: usize,
    pub residual: f64,
    /// Norm of the removed part (gradient component plus pinned normals).
    pub correction_norm: f64,
}

/// Orthogonal projection onto divergence-free tangent fields: pin boundary
/// normals, then subtract the gradient part found by a conjugate-gradient
/// Neumann Poisson solve with relative residual `tol`.
pub fn project_div_free_tangent(f: &FaceField, tol: f64) -> Result<ProjectionReport> {
    let dom = Arc::clone(f.domain());
    let mut g = f.clone();
    g.tangentize();
    // The CG operator is -div grad; solving (-div grad) phi = -div g
    // gives div(g - grad phi) = 0.
    let mut rhs = discrete_divergence(&g);
    for v in &mut rhs {
        *v = -*v;
    }
    subtract_component_means(&dom, &mut rhs);
    let n = dom.grid.n_cells();
    let cap = 40 * dom.grid.dims.iter().max().unwrap() + 200;
    let (phi, iterations, residual) = cg_solve(
        n,
        |x, y| apply_neg_laplacian(&dom, x, y),
        &rhs,
        tol,
        cap,
        |v| subtract_component_means(&dom, v),
    );
    if residual > tol {
        return Err(Error::Solver(format!(
            "projection Poisson solve stalled at relative residual {residual:.3e} after {iterations} iterations"
        )));
    }
    let grad = gradient_field(&dom, &phi);
    g.axpy(-1.0, &grad);
    let mut removed = f.clone();
    removed.axpy(-1.0, &g);
    Ok(ProjectionReport {
        correction_norm: removed.norm(),
        field: g,
        iterations,
        residual,
    })
}

// Edge-based curl: one circulation per lattice edge whose four incident
// cells are all inside. Restricting rows to such edges keeps the smooth
// interior physics while excluding staircase transitions, where a
// one-sided circulation of a perfectly good tangent field is O(1).

struct EdgeSet {
    /// (axis of edge, i, j, k) packed; per-axis edge lattice dims.
    edges: [Vec<u32>; 3],
    dims: [[usize; 3]; 3],
}

fn interior_edges(dom: &VoxelDomain) -> EdgeSet {
    let grid = &dom.grid;
    let [nx, ny, nz] = grid.dims;
    // Edge along `axis` sits at corner coordinates in the two transverse
    // axes and a cell coordinate along its own axis.
    let dims = [
        [nx, ny + 1, nz + 1],
        [nx + 1, ny, nz + 1],
        [nx + 1, ny + 1, nz],
    ];
    let mut edges: [Vec<u32>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let inside = |i: i64, j: i64, k: i64| -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < nx
            && (j as usize) < ny
            && (k as usize) < nz
            && dom.mask[grid.idx(i as usize, j as usize, k as usize)]
    };
    for axis in 0..3 {
        let d = dims[axis];
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let (ii, jj, kk) = (i as i64, j as i64, k as i64);
                    // The four cells around the edge: offsets in the two
                    // transverse directions.
                    let ok = match axis {
                        0 => {
                            inside(ii, jj - 1, kk - 1)
                                && inside(ii, jj, kk - 1)
                                && inside(ii, jj - 1, kk)
                                && inside(ii, jj, kk)
                        }
                        1 => {
                            inside(ii - 1, jj, kk - 1)
                                && inside(ii, jj, kk - 1)
                                && inside(ii - 1, jj, kk)
                                && inside(ii, jj, kk)
                        }
                        _ => {
                            inside(ii - 1, jj - 1, kk)
                                && inside(ii, jj - 1, kk)
                                && inside(ii - 1, jj, kk)
                                && inside(ii, jj, kk)
                        }
                    };
                    if ok {
                        edges[axis].push((i + d[0] * (j + d[1] * k)) as u32);
                    }
                }
            }
        }
    }
    EdgeSet { edges, dims }
}

/// Circulations per interior edge, physical difference quotients.
fn edge_curls(f: &FaceField, es: &EdgeSet) -> [Vec<f64>; 3] {
    let grid = f.grid();
    let inv_h = 1.0 / grid.h;
    let mut out: [Vec<f64>; 3] = [
        Vec::with_capacity(es.edges[0].len()),
        Vec::with_capacity(es.edges[1].len()),
        Vec::with_capacity(es.edges[2].len()),
    ];
    for axis in 0..3 {
        let d = es.dims[axis];
        for &packed in &es.edges[axis] {
            let p = packed as usize;
            let (i, j, k) = (p % d[0], (p / d[0]) % d[1], p / (d[0] * d[1]));
            let c = match axis {
                // curl_x = dFz/dy - dFy/dz at corner (j,k), cell layer i
                0 => {
                    f.comp[2][grid.fidx(2, i, j, k)] - f.comp[2][grid.fidx(2, i, j - 1, k)]
                        + f.comp[1][grid.fidx(1, i, j, k - 1)]
                        - f.comp[1][grid.fidx(1, i, j, k)]
                }
                // curl_y = dFx/dz - dFz/dx at corner (k,i), cell layer j
                1 => {
                    f.comp[0][grid.fidx(0, i, j, k)] - f.comp[0][grid.fidx(0, i, j, k - 1)]
                        + f.comp[2][grid.fidx(2, i - 1, j, k)]
                        - f.comp[2][grid.fidx(2, i, j, k)]
                }
                // curl_z = dFy/dx - dFx/dy at corner (i,j), cell layer k
                _ => {
                    f.comp[1][grid.fidx(1, i, j, k)] - f.comp[1][grid.fidx(1, i - 1, j, k)]
                        + f.comp[0][grid.fidx(0, i, j - 1, k)]
                        - f.comp[0][grid.fidx(0, i, j, k)]
                }
            };
            out[axis].push(c * inv_h);
        }
    }
    out
}

/// Adjoint scatter of edge circulations back to faces (transpose of
/// edge_curls); all touched faces are interior by construction.
fn scatter_curls(dom: &VoxelDomain, es: &EdgeSet, curls: &[Vec<f64>; 3], out: &mut FaceField) {
    let grid = &dom.grid;
    let inv_h = 1.0 / grid.h;
    for arr in out.comp.iter_mut() {
        for v in arr.iter_mut() {
            *v = 0.0;
        }
    }
    for axis in 0..3 {
        let d = es.dims[axis];
        for (&packed, &c) in es.edges[axis].iter().zip(&curls[axis]) {
            let p = packed as usize;
            let (i, j, k) = (p % d[0], (p / d[0]) % d[1], p / (d[0] * d[1]));
            let w = c * inv_h;
            match axis {
                0 => {
                    out.comp[2][grid.fidx(2, i, j, k)] += w;
                    out.comp[2][grid.fidx(2, i, j - 1, k)] -= w;
                    out.comp[1][grid.fidx(1, i, j, k - 1)] += w;
                    out.comp[1][grid.fidx(1, i, j, k)] -= w;
                }
                1 => {
                    out.comp[0][grid.fidx(0, i, j, k)] += w;
                    out.comp[0][grid.fidx(0, i, j, k - 1)] -= w;
                    out.comp[2][grid.fidx(2, i - 1, j, k)] += w;
                    out.comp[2][grid.fidx(2, i, j, k)] -= w;
                }
                _ => {
                    out.comp[1][grid.fidx(1, i, j, k)] += w;
                    out.comp[1][grid.fidx(1, i - 1, j, k)] -= w;
                    out.comp[0][grid.fidx(0, i, j - 1, k)] += w;
                    out.comp[0][grid.fidx(0, i, j, k)] -= w;
                }
            }
        }
    }
}

/// Maximum |circulation| over interior edges.
pub fn max_interior_curl(f: &FaceField) -> f64 {
    let es = interior_edges(f.domain());
    edge_curls(f, &es)
        .iter()
        .flat_map(|v| v.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
}

pub struct HarmonicBasis {
    pub fields: Vec<FaceField>,
    /// Curl+div quadratic-form eigenvalue of each kept member.
    pub kernel_evals: Vec<f64>,
    /// Smallest rejected eigenvalue, for gap inspection.
    pub first_rejected: Option<f64>,
    /// Set when kept and rejected eigenvalues are not cleanly separated.
    pub gap_warning: bool,
}

impl HarmonicBasis {
    pub fn dimension(&self) -> usize {
        self.fields.len()
    }
}

/// Divergence-free projections of planar section indicators. When a
/// section cuts a handle of the domain, its projection is a nonzero exact
/// member of the harmonic space (it represents the section-flux
/// functional on divergence-free fields); when the section bounds, the
/// projection vanishes identically. Probing a few planes per axis yields
/// seed vectors spanning the harmonic space for any handle orientation
/// the lattice can resolve.
fn section_representers(dom: &Arc<VoxelDomain>) -> Result<Vec<FaceField>> {
    let grid = &dom.grid;
    // Occupied cell-index range per axis.
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &idx in &dom.inside {
        let c = grid.decompose(idx as usize);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let mut reps: Vec<FaceField> = Vec::new();
    for axis in 0..3 {
        for frac in [0.3, 0.5, 0.7] {
            let span = hi[axis] - lo[axis];
            let plane = lo[axis] + 1 + ((span.saturating_sub(1)) as f64 * frac) as usize;
            for cluster in section_clusters(dom, axis, plane).into_iter().take(3) {
                let mut w = FaceField::zeros(dom);
                for &(i, j, k) in &cluster {
                    w.comp[axis][grid.fidx(axis, i, j, k)] = 1.0;
                }
                let w_norm = w.norm();
                let p = project_div_free_tangent(&w, 1e-11)?.field;
                if p.norm() > 1e-6 * w_norm {
                    reps.push(p);
                }
                if reps.len() >= 8 {
                    return Ok(reps);
                }
            }
        }
    }
    Ok(reps)
}

/// Orthonormal basis of the discrete harmonic space {tangent, div = 0 per
/// cell, curl = 0 per interior edge}: inverse subspace iteration on the
/// quadratic form curl^T curl + div^T div over tangent fields, seeded
/// with section representers (already exact kernel members) plus random
/// fields that probe for anything the sections miss and pin down the
/// first non-kernel eigenvalue for the gap check. The kernel dimension
/// recovers the number of independent handles (first Betti number) at
/// adequate resolution.
pub fn harmonic_basis(dom: &Arc<VoxelDomain>, tol: f64) -> Result<HarmonicBasis> {
    use rand::{Rng, SeedableRng};
    let es = interior_edges(dom);
    let shift = 1e-2;
    let grid = dom.grid.clone();

    // A v = curl^T curl v + grad(div v): symmetric positive semidefinite
    // on tangent fields with kernel exactly the harmonic space.
    let apply_a = |v: &FaceField, out: &mut FaceField, scratch: &mut FaceField| {
        let curls = edge_curls(v, &es);
        scatter_curls(dom, &es, &curls, out);
        let div = discrete_divergence(v);
        *scratch = gradient_field(dom, &div);
        out.axpy(-1.0, scratch);
    };

    let mut seeds = section_representers(dom)?;
    orthonormalize(&mut seeds);
    seeds.retain(|f| f.norm() > 0.5);
    seeds.truncate(4);
    let n_candidates = seeds.len() + 2;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x4841524d);
    let mut basis = seeds;
    while basis.len() < n_candidates {
        let mut f = FaceField::zeros(dom);
        for axis in 0..3 {
            let fd = grid.face_dims(axis);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        if face_kind(dom, axis, i, j, k) == FaceKind::Interior {
                            f.comp[axis][grid.fidx(axis, i, j, k)] = rng.gen_range(-1.0..1.0);
                        }
                    }
                }
            }
        }
        basis.push(f);
    }
    orthonormalize(&mut basis);

    // Flatten faces for the inner CG: x = concat of the three arrays.
    let sizes = [grid.n_faces(0), grid.n_faces(1), grid.n_faces(2)];
    let total: usize = sizes.iter().sum();
    let to_flat = |f: &FaceField, x: &mut Vec<f64>| {
        x.clear();
        for axis in 0..3 {
            x.extend_from_slice(&f.comp[axis]);
        }
    };
    let from_flat = |x: &[f64], f: &mut FaceField| {
        let mut off = 0;
        for axis in 0..3 {
            f.comp[axis].copy_from_slice(&x[off..off + sizes[axis]]);
            off += sizes[axis];
        }
    };

    let mut work = FaceField::zeros(dom);
    let mut scratch = FaceField::zeros(dom);
    let mut tmp_in = FaceField::zeros(dom);
    let mut xb = Vec::with_capacity(total);
    let cap = 6000;
    let mut evals = vec![f64::INFINITY; n_candidates];
    for _outer in 0..10 {
        // Inverse iteration step: x_i <- (A + shift)^-1 x_i.
        for f in basis.iter_mut() {
            to_flat(f, &mut xb);
            let (x, _iters, _res) = cg_solve(
                total,
                |p, y| {
                    from_flat(p, &mut tmp_in);
                    tmp_in.tangentize();
                    apply_a(&tmp_in, &mut work, &mut scratch);
                    let mut off = 0;
                    for axis in 0..3 {
                        for (yy, (w, xin)) in y[off..off + sizes[axis]]
                            .iter_mut()
                            .zip(work.comp[axis].iter().zip(&p[off..off + sizes[axis]]))
                        {
                            *yy = w + shift * xin;
                        }
                        off += sizes[axis];
                    }
                },
                &xb,
                1e-9,
                cap,
                |_| {},
            );
            from_flat(&x, f);
            f.tangentize();
        }
        // Orthonormalize in the face inner product, then Rayleigh-Ritz on A.
        orthonormalize(&mut basis);
        let mut a_mat = vec![vec![0.0f64; n_candidates]; n_candidates];
        let mut a_applied: Vec<FaceField> = Vec::with_capacity(n_candidates);
        for f in &basis {
            apply_a(f, &mut work, &mut scratch);
            a_applied.push(work.clone());
        }
        for i in 0..n_candidates {
            for j in i..n_candidates {
                let v = basis[i].dot(&a_applied[j]);
                a_mat[i][j] = v;
                a_mat[j][i] = v;
            }
        }
        let (theta, vecs) = crate::math::sym_eigen_small(&a_mat);
        // Rotate the basis into the Ritz directions (ascending theta).
        let mut rotated: Vec<FaceField> = Vec::with_capacity(n_candidates);
        for col in 0..n_candidates {
            let mut acc = FaceField::zeros(dom);
            for (row, b) in basis.iter().enumerate() {
                acc.axpy(vecs[row][col], b);
            }
            rotated.push(acc);
        }
        basis = rotated;
        let max_rel_change = theta
            .iter()
            .zip(&evals)
            .map(|(t, e)| (t - e).abs() / t.abs().max(1e-30))
            .fold(0.0f64, f64::max);
        evals = theta;
        if max_rel_change < 1e-6 {
            break;
        }
    }

    let dim = evals.iter().filter(|&&t| t < KERNEL_CUTOFF).count();
    let first_rejected = evals.get(dim).copied();
    // Separation check: kept values must sit far below the cutoff and the
    // first rejected value well above it.
    let gap_warning = (dim > 0 && evals[dim - 1] > KERNEL_CUTOFF * 0.1)
        || first_rejected.is_some_and(|t| t < KERNEL_CUTOFF * 10.0);
    let mut fields: Vec<FaceField> = basis.into_iter().take(dim).collect();
    // Polish members: exact divergence removal, then renormalize.
    for f in fields.iter_mut() {
        let rep = project_div_free_tangent(f, tol.min(1e-10))?;
        *f = rep.field;
    }
    orthonormalize(&mut fields);
    Ok(HarmonicBasis {
        kernel_evals: evals[..dim].to_vec(),
        fields,
        first_rejected,
        gap_warning,
    })
}

/// Modified Gram-Schmidt in the face inner product. A vector that loses
/// essentially all of its norm to the preceding ones is zeroed instead of
/// being blown up into roundoff noise; callers filter those out.
fn orthonormalize(fields: &mut [FaceField]) {
    for i in 0..fields.len() {
        let before = fields[i].norm();
        for j in 0..i {
            let c = {
                let (head, tail) = fields.split_at(i);
                tail[0].dot(&head[j])
            };
            let prev = fields[j].clone();
            fields[i].axpy(-c, &prev);
        }
        let n = fields[i].norm();
        if n > 1e-7 * before.max(1e-300) {
            fields[i].scale_mut(1.0 / n);
        } else {
            fields[i].scale_mut(0.0);
        }
    }
}

/// F minus its projection onto the span of the harmonic basis.
pub fn project_zero_flux(f: &FaceField, basis: &HarmonicBasis) -> Result<FaceField> {
    let mut out = f.clone();
    for b in &basis.fields {
        f.assert_same_domain(b).map_err(|_| {
            Error::Precondition("harmonic basis belongs to a different domain".into())
        })?;
        let c = out.dot(b);
        out.axpy(-c, b);
    }
    Ok(out)
}

/// A planar cross-section: all interior faces with the given axis at one
/// face-plane index, split into 4-connected clusters in the transverse
/// plane; `component` picks a cluster (1-based, ordered by first face).
#[derive(Clone, Copy, Debug)]
pub struct SectionSpec {
    pub axis: usize,
    pub plane: usize,
    pub component: usize,
}

impl SectionSpec {
    /// Section through the face plane nearest a physical coordinate.
    pub fn at_coordinate(grid: &Grid, axis: usize, x: f64, component: usize) -> SectionSpec {
        let plane = ((x - grid.origin[axis]) / grid.h).round().max(0.0) as usize;
        SectionSpec {
            axis,
            plane,
            component,
        }
    }
}

/// Interior faces of one face plane, grouped into 4-connected clusters in
/// the transverse coordinates. Clusters are ordered by their first face
/// in scan order; faces are (i, j, k) on the axis face lattice. Empty for
/// an out-of-range plane.
fn section_clusters(dom: &VoxelDomain, axis: usize, plane: usize) -> Vec<Vec<(usize, usize, usize)>> {
    let grid = &dom.grid;
    let fd = grid.face_dims(axis);
    if axis > 2 || plane >= fd[axis] {
        return Vec::new();
    }
    let (t1, t2) = match axis {
        0 => (1usize, 2usize),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (n1, n2) = (fd[t1], fd[t2]);
    let mut present = vec![false; n1 * n2];
    let face_at = |c1: usize, c2: usize| -> (usize, usize, usize) {
        let mut ijk = [0usize; 3];
        ijk[axis] = plane;
        ijk[t1] = c1;
        ijk[t2] = c2;
        (ijk[0], ijk[1], ijk[2])
    };
    for c2 in 0..n2 {
        for c1 in 0..n1 {
            let (i, j, k) = face_at(c1, c2);
            if face_kind(dom, axis, i, j, k) == FaceKind::Interior {
                present[c1 + n1 * c2] = true;
            }
        }
    }
    let mut seen = vec![false; n1 * n2];
    let mut clusters = Vec::new();
    let mut stack = Vec::new();
    for start in 0..present.len() {
        if !present[start] || seen[start] {
            continue;
        }
        let mut cluster = Vec::new();
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (c1, c2) = (p % n1, p / n1);
            cluster.push(face_at(c1, c2));
            let push = |q: usize, seen: &mut Vec<bool>, stack: &mut Vec<usize>| {
                if present[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if c1 > 0 {
                push(p - 1, &mut seen, &mut stack);
            }
            if c1 + 1 < n1 {
                push(p + 1, &mut seen, &mut stack);
            }
            if c2 > 0 {
                push(p - n1, &mut seen, &mut stack);
            }
            if c2 + 1 < n2 {
                push(p + n1, &mut seen, &mut stack);
            }
        }
        clusters.push(cluster);
    }
    clusters
}

/// Signed flux through one cluster of a planar section: sum of crossing
/// face values times h^2.
pub fn flux_through_section(f: &FaceField, section: SectionSpec) -> Result<f64> {
    let dom = f.domain();
    let grid = &dom.grid;
    if section.axis > 2 {
        return Err(Error::Precondition(format!(
            "bad section axis {}",
            section.axis
        )));
    }
    if section.plane >= grid.face_dims(section.axis)[section.axis] {
        return Err(Error::Precondition(format!(
            "section plane {} outside face range 0..{}",
            section.plane,
            grid.face_dims(section.axis)[section.axis]
        )));
    }
    let clusters = section_clusters(dom, section.axis, section.plane);
    if section.component == 0 || section.component > clusters.len() {
        return Err(Error::Precondition(format!(
            "section component {} not found: plane has {} cluster(s)",
            section.component,
            clusters.len()
        )));
    }
    let mut flux = 0.0;
    for &(i, j, k) in &clusters[section.component - 1] {
        flux += f.comp[section.axis][grid.fidx(section.axis, i, j, k)];
    }
    Ok(flux * grid.h * grid.h)
}
