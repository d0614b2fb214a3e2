//! Flow maps of compactly supported smooth velocity fields and the field
//! transport built on them: outward boundary flows, covector pullback,
//! divergence-free pushforward, and the first-order energy estimate.
//!
//! Every generator is forced to zero outside its support ball by a smooth
//! cutoff, so flows are globally defined and reduce to the identity far
//! away. Trajectories integrate with classic RK4 together with the
//! log-determinant of the Jacobian (Liouville: d/ds log det = div X along
//! the path); public flow evaluations cross-check themselves against a
//! half-step integration. The transport Jacobian integrates the
//! variational equation dJ/ds = DX J alongside the trajectory, while the
//! covector pullback differentiates the flow map itself by central
//! differences, so the two routes stay independent.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec;
use crate::fieldspace::{
    face_kind, magnetic_energy, project_div_free_tangent, FaceField, FaceKind,
};
use crate::geometry::edt::squared_edt;
use crate::geometry::grid::Grid;
use crate::geometry::voxel::VoxelDomain;
use crate::math::{self, V3};

/// 3x3 matrix as rows; linear generators and flow Jacobians.
pub type M3 = [[f64; 3]; 3];

/// Position mismatch between full-step and half-step integration above
/// which a flow evaluation is rejected as under-resolved.
const FLOW_CHECK_TOL: f64 = 1e-7;
/// Fraction of the support radius where the cutoff starts to roll off.
const BUMP_FLAT: f64 = 0.8;
/// Minimum acceptable outward alignment for a constructed boundary flow.
const DELTA_FLOOR: f64 = 0.1;
/// Binomial smoothing passes applied to the signed distance field.
const MOLLIFY_PASSES: usize = 2;

/// Velocity field variants. Closed forms carry exact derivatives; the
/// grid-sampled variant uses a C1 tricubic interpolant whose derivatives
/// are analytic per cell.
#[derive(Clone)]
pub enum Generator {
    Constant { v: V3 },
    Linear { a: M3 },
    /// strength * (x - center), smoothly cut off at the support ball.
    RadialBump { center: V3, strength: f64 },
    /// Cell-centered samples on a private grid covering the support.
    GridSampled { grid: Grid, data: Arc<[Vec<f64>; 3]> },
}

/// Flow map psi_t of a generator, including its integration schedule.
#[derive(Clone)]
pub struct FlowMap {
    pub gen: Generator,
    pub t: f64,
    pub steps: usize,
    pub support_radius: f64,
}

/// Smooth cutoff profile: identically 1 for r <= BUMP_FLAT * radius,
/// identically 0 for r >= radius. Returns the value and the radial
/// derivative.
fn bump(r: f64, radius: f64) -> (f64, f64) {
    let lo = BUMP_FLAT * radius;
    if r <= lo {
        return (1.0, 0.0);
    }
    if r >= radius {
        return (0.0, 0.0);
    }
    let width = radius - lo;
    let u = (r - lo) / width;
    // f(u) = exp(-1/u) extended by 0; the standard partition bridge.
    let f = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
    let fp = |u: f64| {
        if u > 0.0 {
            (-1.0 / u).exp() / (u * u)
        } else {
            0.0
        }
    };
    let (n, d) = (f(1.0 - u), f(u) + f(1.0 - u));
    let np = -fp(1.0 - u);
    let dp = fp(u) - fp(1.0 - u);
    let q = n / d;
    let qp = (np * d - n * dp) / (d * d);
    (q, qp / width)
}

impl Generator {
    /// Raw value before the support cutoff.
    fn raw(&self, x: V3) -> V3 {
        match self {
            Generator::Constant { v } => *v,
            Generator::Linear { a } => math::mat_vec(a, x),
            Generator::RadialBump { center, strength } => [
                strength * (x[0] - center[0]),
                strength * (x[1] - center[1]),
                strength * (x[2] - center[2]),
            ],
            Generator::GridSampled { grid, data } => tricubic_value(grid, data, x),
        }
    }

    /// Raw value and Jacobian before the cutoff.
    fn raw_with_jac(&self, x: V3) -> (V3, M3) {
        match self {
            Generator::Constant { v } => (*v, [[0.0; 3]; 3]),
            Generator::Linear { a } => (math::mat_vec(a, x), *a),
            Generator::RadialBump { center, strength } => {
                let s = *strength;
                let v = [
                    s * (x[0] - center[0]),
                    s * (x[1] - center[1]),
                    s * (x[2] - center[2]),
                ];
                (v, [[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]])
            }
            Generator::GridSampled { grid, data } => tricubic_with_jac(grid, data, x),
        }
    }
}

impl FlowMap {
    pub fn new(gen: Generator, t: f64, steps: usize, support_radius: f64) -> Result<FlowMap> {
        if !t.is_finite() || support_radius <= 0.0 {
            return Err(Error::Precondition(format!(
                "flow map needs finite t and positive support, got t={t}, \
                 support={support_radius}"
            )));
        }
        if steps == 0 {
            return Err(Error::Precondition(
                "flow map needs at least one step".into(),
            ));
        }
        Ok(FlowMap {
            gen,
            t,
            steps,
            support_radius,
        })
    }

    /// Step count that keeps the integrator error far below the halving
    /// check for the short horizons this module works with.
    pub fn default_steps(t: f64) -> usize {
        (t.abs() * 400.0).ceil() as usize + 16
    }

    /// Velocity with the support cutoff applied.
    pub fn velocity(&self, x: V3) -> V3 {
        let r = math::norm(x);
        if r >= self.support_radius {
            return [0.0; 3];
        }
        let (b, _) = bump(r, self.support_radius);
        let v = self.gen.raw(x);
        [b * v[0], b * v[1], b * v[2]]
    }

    /// Velocity and its divergence in one evaluation.
    fn rate(&self, x: V3) -> (V3, f64) {
        let (v, jac) = self.rate_jac(x);
        (v, jac[0][0] + jac[1][1] + jac[2][2])
    }

    /// Velocity and full Jacobian of the cut-off field:
    /// D(b V) = b DV + V (x/r)^T b'(r).
    fn rate_jac(&self, x: V3) -> (V3, M3) {
        let r = math::norm(x);
        if r >= self.support_radius {
            return ([0.0; 3], [[0.0; 3]; 3]);
        }
        let (b, bp) = bump(r, self.support_radius);
        let (v, jraw) = self.gen.raw_with_jac(x);
        let grad_b = if r > 0.0 && bp != 0.0 {
            [bp * x[0] / r, bp * x[1] / r, bp * x[2] / r]
        } else {
            [0.0; 3]
        };
        let mut jac = [[0.0f64; 3]; 3];
        for row in 0..3 {
            for col in 0..3 {
                jac[row][col] = b * jraw[row][col] + v[row] * grad_b[col];
            }
        }
        ([b * v[0], b * v[1], b * v[2]], jac)
    }

    /// Divergence of the cut-off velocity at x.
    pub fn divergence(&self, x: V3) -> f64 {
        self.rate(x).1
    }

    /// Joint RK4 integration of position and log det over [0, t].
    fn rk4(&self, x0: V3, steps: usize) -> (V3, f64) {
        let dt = self.t / steps as f64;
        let mut x = x0;
        let mut l = 0.0f64;
        for _ in 0..steps {
            let (k1, d1) = self.rate(x);
            let (k2, d2) = self.rate(offset(x, dt / 2.0, k1));
            let (k3, d3) = self.rate(offset(x, dt / 2.0, k2));
            let (k4, d4) = self.rate(offset(x, dt, k3));
            for a in 0..3 {
                x[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
            l += dt / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
        }
        (x, l)
    }

    /// Trajectory endpoint and Jacobian determinant, with a half-step
    /// self-check; the determinant comes from the Liouville integral and
    /// is positive by construction.
    pub fn flow(&self, x0: V3) -> Result<(V3, f64)> {
        let (coarse, _) = self.rk4(x0, self.steps);
        let (fine, l) = self.rk4(x0, 2 * self.steps);
        let err = math::norm(math::sub(fine, coarse));
        if err > FLOW_CHECK_TOL * (1.0 + math::norm(x0)) {
            return Err(Error::Resolution(format!(
                "flow integration not converged: halving-step mismatch {err:.3e} \
                 at t = {}, steps = {}",
                self.t, self.steps
            )));
        }
        Ok((fine, l.exp()))
    }

    /// Same integrator without the halving check, for inner loops that
    /// evaluate many trajectories after the map has been validated on
    /// representative points.
    pub fn flow_unchecked(&self, x0: V3) -> (V3, f64) {
        let (x, l) = self.rk4(x0, self.steps);
        (x, l.exp())
    }

    /// Endpoint, flow Jacobian, and determinant by integrating the
    /// variational equation dJ/ds = DX(x) J alongside the trajectory.
    pub fn flow_with_jacobian(&self, x0: V3) -> (V3, M3, f64) {
        let dt = self.t / self.steps as f64;
        let mut x = x0;
        let mut jac = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut l = 0.0f64;
        for _ in 0..self.steps {
            let (k1, dx1) = self.rate_jac(x);
            let m1 = math::mat_mul(&dx1, &jac);
            let (k2, dx2) = self.rate_jac(offset(x, dt / 2.0, k1));
            let m2 = math::mat_mul(&dx2, &mat_offset(&jac, dt / 2.0, &m1));
            let (k3, dx3) = self.rate_jac(offset(x, dt / 2.0, k2));
            let m3 = math::mat_mul(&dx3, &mat_offset(&jac, dt / 2.0, &m2));
            let (k4, dx4) = self.rate_jac(offset(x, dt, k3));
            let m4 = math::mat_mul(&dx4, &mat_offset(&jac, dt, &m3));
            for a in 0..3 {
                x[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                for c in 0..3 {
                    jac[a][c] +=
                        dt / 6.0 * (m1[a][c] + 2.0 * m2[a][c] + 2.0 * m3[a][c] + m4[a][c]);
                }
            }
            l += dt / 6.0 * (trace(&dx1) + 2.0 * trace(&dx2) + 2.0 * trace(&dx3) + trace(&dx4));
        }
        (x, jac, l.exp())
    }

    /// The reverse-time map psi_{-t}, i.e. the inverse flow.
    pub fn reversed(&self) -> FlowMap {
        FlowMap {
            gen: self.gen.clone(),
            t: -self.t,
            steps: self.steps,
            support_radius: self.support_radius,
        }
    }

    /// Flow Jacobian at x by central differences of the map itself.
    pub fn jacobian_fd(&self, x: V3, step: f64) -> Result<M3> {
        let mut jac = [[0.0f64; 3]; 3];
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += step;
            xm[a] -= step;
            let (fp, _) = self.flow(xp)?;
            let (fm, _) = self.flow(xm)?;
            for r in 0..3 {
                jac[r][a] = (fp[r] - fm[r]) / (2.0 * step);
            }
        }
        Ok(jac)
    }
}

fn offset(x: V3, c: f64, d: V3) -> V3 {
    [x[0] + c * d[0], x[1] + c * d[1], x[2] + c * d[2]]
}

fn mat_offset(m: &M3, c: f64, d: &M3) -> M3 {
    let mut out = *m;
    for r in 0..3 {
        for col in 0..3 {
            out[r][col] += c * d[r][col];
        }
    }
    out
}

fn trace(m: &M3) -> f64 {
    m[0][0] + m[1][1] + m[2][2]
}

/// Cubic convolution weights and derivatives for one axis: first node
/// index plus 4 value and 4 derivative weights.
fn cubic_axis(coord: f64, origin: f64, h: f64) -> (isize, [f64; 4], [f64; 4]) {
    let u = (coord - origin) / h - 0.5;
    let i0 = u.floor();
    let s = u - i0;
    let w = [
        ((-0.5 * s + 1.0) * s - 0.5) * s,
        (1.5 * s - 2.5) * s * s + 1.0,
        ((-1.5 * s + 2.0) * s + 0.5) * s,
        (0.5 * s - 0.5) * s * s,
    ];
    let dw = [
        (-1.5 * s + 2.0) * s - 0.5,
        (4.5 * s - 5.0) * s,
        (-4.5 * s + 4.0) * s + 0.5,
        (1.5 * s - 1.0) * s,
    ];
    (i0 as isize - 1, w, dw)
}

/// C1 tricubic interpolation of cell-centered vector samples. Nodes
/// outside the sample box count as zero.
fn tricubic_value(grid: &Grid, data: &[Vec<f64>; 3], p: V3) -> V3 {
    let (bi, wx, _) = cubic_axis(p[0], grid.origin[0], grid.h);
    let (bj, wy, _) = cubic_axis(p[1], grid.origin[1], grid.h);
    let (bk, wz, _) = cubic_axis(p[2], grid.origin[2], grid.h);
    let dims = grid.dims;
    let mut val = [0.0f64; 3];
    for (dk, &wk) in wz.iter().enumerate() {
        let k = bk + dk as isize;
        if k < 0 || k as usize >= dims[2] {
            continue;
        }
        for (dj, &wj) in wy.iter().enumerate() {
            let j = bj + dj as isize;
            if j < 0 || j as usize >= dims[1] {
                continue;
            }
            let wjk = wj * wk;
            let row = dims[0] * (j as usize + dims[1] * k as usize);
            for (di, &wi) in wx.iter().enumerate() {
                let i = bi + di as isize;
                if i < 0 || i as usize >= dims[0] {
                    continue;
                }
                let idx = i as usize + row;
                let w = wi * wjk;
                val[0] += w * data[0][idx];
                val[1] += w * data[1][idx];
                val[2] += w * data[2][idx];
            }
        }
    }
    val
}

/// Value and full Jacobian of the tricubic interpolant.
fn tricubic_with_jac(grid: &Grid, data: &[Vec<f64>; 3], p: V3) -> (V3, M3) {
    let (bi, wx, dwx) = cubic_axis(p[0], grid.origin[0], grid.h);
    let (bj, wy, dwy) = cubic_axis(p[1], grid.origin[1], grid.h);
    let (bk, wz, dwz) = cubic_axis(p[2], grid.origin[2], grid.h);
    let dims = grid.dims;
    let inv_h = 1.0 / grid.h;
    let mut val = [0.0f64; 3];
    let mut jac = [[0.0f64; 3]; 3];
    for dk in 0..4 {
        let k = bk + dk as isize;
        if k < 0 || k as usize >= dims[2] {
            continue;
        }
        for dj in 0..4 {
            let j = bj + dj as isize;
            if j < 0 || j as usize >= dims[1] {
                continue;
            }
            let row = dims[0] * (j as usize + dims[1] * k as usize);
            for di in 0..4 {
                let i = bi + di as isize;
                if i < 0 || i as usize >= dims[0] {
                    continue;
                }
                let idx = i as usize + row;
                let w = wx[di] * wy[dj] * wz[dk];
                let gx = dwx[di] * inv_h * wy[dj] * wz[dk];
                let gy = wx[di] * dwy[dj] * inv_h * wz[dk];
                let gz = wx[di] * wy[dj] * dwz[dk] * inv_h;
                for c in 0..3 {
                    let s = data[c][idx];
                    val[c] += w * s;
                    jac[c][0] += gx * s;
                    jac[c][1] += gy * s;
                    jac[c][2] += gz * s;
                }
            }
        }
    }
    (val, jac)
}

/// Construction report for an outward boundary flow.
#[derive(Debug)]
pub struct OutwardReport {
    /// Worst-case alignment of the normalized field with the estimated
    /// outward normal over all boundary cells.
    pub delta: f64,
    pub boundary_cells: usize,
}

/// Velocity field pointing outward everywhere along the discrete
/// boundary: the smoothed gradient of the signed distance function,
/// sampled on a grid covering the whole support ball. Fails when the
/// smoothing washes out a feature so far that alignment with an
/// independent occupancy-based boundary normal drops below a floor.
pub fn outward_field(
    dom: &Arc<VoxelDomain>,
    support_radius: f64,
) -> Result<(Generator, OutwardReport)> {
    let g = &dom.grid;
    let h = g.h;
    let mut extent = 0.0f64;
    for &idx in &dom.inside {
        let [i, j, k] = g.decompose(idx as usize);
        let c = g.cell_center(i, j, k);
        extent = extent.max(math::norm(c) + h);
    }
    if extent > support_radius / 2.0 {
        return Err(Error::Precondition(format!(
            "domain reaches {extent:.3} from the origin, more than half the \
             support radius {support_radius}"
        )));
    }

    // A symmetric box covering the full support ball, so the cutoff
    // reaches zero strictly inside the sampled region.
    let l = support_radius + 2.0 * h;
    let sg = Grid::covering([-l, -l, -l], [l, l, l], h, 1);
    let n = sg.n_cells();
    let mut inside = vec![false; n];
    for i in 0..sg.dims[0] {
        for j in 0..sg.dims[1] {
            for k in 0..sg.dims[2] {
                let c = sg.cell_center(i, j, k);
                if let Some([di, dj, dk]) = g.locate(c) {
                    inside[sg.idx(i, j, k)] = dom.mask[g.idx(di, dj, dk)];
                }
            }
        }
    }
    if inside.iter().all(|&b| !b) {
        return Err(Error::Precondition("empty domain".into()));
    }
    let mut sd = {
        let outside: Vec<bool> = inside.iter().map(|&b| !b).collect();
        let d_in = squared_edt(&inside, sg.dims);
        let d_out = squared_edt(&outside, sg.dims);
        (0..n)
            .map(|i| {
                if inside[i] {
                    -h * d_out[i].sqrt()
                } else {
                    h * d_in[i].sqrt()
                }
            })
            .collect::<Vec<f64>>()
    };
    for _ in 0..MOLLIFY_PASSES {
        binomial_smooth(&mut sd, sg.dims);
    }

    let mut data = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let inv2h = 1.0 / (2.0 * h);
    for k in 0..sg.dims[2] {
        for j in 0..sg.dims[1] {
            for i in 0..sg.dims[0] {
                let idx = sg.idx(i, j, k);
                let (im, jm, km) = (i.saturating_sub(1), j.saturating_sub(1), k.saturating_sub(1));
                data[0][idx] = (at(&sd, &sg, i + 1, j, k) - sd[sg.idx(im, j, k)]) * inv2h;
                data[1][idx] = (at(&sd, &sg, i, j + 1, k) - sd[sg.idx(i, jm, k)]) * inv2h;
                data[2][idx] = (at(&sd, &sg, i, j, k + 1) - sd[sg.idx(i, j, km)]) * inv2h;
            }
        }
    }
    let gen = Generator::GridSampled {
        grid: sg,
        data: Arc::new(data),
    };

    // Alignment report against an independent normal estimate: the
    // occupancy gradient over a 5x5x5 window (complement cells pull the
    // normal toward themselves with inverse-square weight). Degenerates
    // exactly where thin features would defeat the smoothing.
    let probe = FlowMap::new(gen.clone(), 0.0, 1, support_radius)?;
    let mut delta = f64::INFINITY;
    let boundary = dom.boundary_cells();
    for &idx in &boundary {
        let [i, j, k] = g.decompose(idx as usize);
        let mut nrm = [0.0f64; 3];
        for di in -2i64..=2 {
            for dj in -2i64..=2 {
                for dk in -2i64..=2 {
                    if di == 0 && dj == 0 && dk == 0 {
                        continue;
                    }
                    let (qi, qj, qk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    let outside = qi < 0
                        || qj < 0
                        || qk < 0
                        || qi as usize >= g.dims[0]
                        || qj as usize >= g.dims[1]
                        || qk as usize >= g.dims[2]
                        || !dom.mask[g.idx(qi as usize, qj as usize, qk as usize)];
                    if outside {
                        let d = [di as f64, dj as f64, dk as f64];
                        let dn = math::norm(d);
                        nrm = math::add(nrm, math::scale(d, 1.0 / (dn * dn * dn)));
                    }
                }
            }
        }
        let nn = math::norm(nrm);
        let x = probe.velocity(g.cell_center(i, j, k));
        let xn = math::norm(x);
        if nn < 1e-9 || xn == 0.0 {
            delta = 0.0;
            break;
        }
        delta = delta.min(math::dot(x, nrm) / (xn * nn));
    }
    if !delta.is_finite() || delta <= DELTA_FLOOR {
        return Err(Error::Solver(format!(
            "outward field construction failed: worst boundary alignment \
             {delta:.3} (smoothing too wide for the domain's features)"
        )));
    }
    Ok((
        gen,
        OutwardReport {
            delta,
            boundary_cells: boundary.len(),
        },
    ))
}

fn at(v: &[f64], g: &Grid, i: usize, j: usize, k: usize) -> f64 {
    let ci = i.min(g.dims[0] - 1);
    let cj = j.min(g.dims[1] - 1);
    let ck = k.min(g.dims[2] - 1);
    v[g.idx(ci, cj, ck)]
}

/// One separable pass of the [1,4,6,4,1]/16 binomial filter, clamped at
/// the box faces.
fn binomial_smooth(v: &mut Vec<f64>, dims: [usize; 3]) {
    let w = [1.0, 4.0, 6.0, 4.0, 1.0].map(|x| x / 16.0);
    let idx = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);
    for axis in 0..3 {
        let mut out = vec![0.0; v.len()];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let mut s = 0.0;
                    for (o, &ww) in w.iter().enumerate() {
                        let off = o as isize - 2;
                        let mut c = [i as isize, j as isize, k as isize];
                        c[axis] += off;
                        let ci = c[0].clamp(0, dims[0] as isize - 1) as usize;
                        let cj = c[1].clamp(0, dims[1] as isize - 1) as usize;
                        let ck = c[2].clamp(0, dims[2] as isize - 1) as usize;
                        s += ww * v[idx(ci, cj, ck)];
                    }
                    out[idx(i, j, k)] = s;
                }
            }
        }
        *v = out;
    }
}

/// Pullback of a covector field: x maps to (D psi)^T (x) . F(psi(x)),
/// with the Jacobian by central differences of the flow map.
pub fn pullback_covector<F: Fn(V3) -> V3>(map: &FlowMap, f: F, x: V3, fd_step: f64) -> Result<V3> {
    let (y, _) = map.flow(x)?;
    let jac = map.jacobian_fd(x, fd_step)?;
    Ok(math::mat_t_vec(&jac, f(y)))
}

/// MAC sampling of a face field: each component interpolated trilinearly
/// on its own face lattice; faces outside the stored lattice count as 0.
pub fn sample_mac(f: &FaceField, p: V3) -> V3 {
    let g = f.grid();
    let mut out = [0.0f64; 3];
    for axis in 0..3 {
        let fd = g.face_dims(axis);
        let mut base = [0isize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let off = if a == axis { 0.0 } else { 0.5 };
            let u = (p[a] - g.origin[a]) / g.h - off;
            let fl = u.floor();
            base[a] = fl as isize;
            frac[a] = u - fl;
        }
        let mut acc = 0.0;
        for dz in 0..2usize {
            for dy in 0..2usize {
                for dx in 0..2usize {
                    let c = [
                        base[0] + dx as isize,
                        base[1] + dy as isize,
                        base[2] + dz as isize,
                    ];
                    if c[0] < 0
                        || c[1] < 0
                        || c[2] < 0
                        || c[0] as usize >= fd[0]
                        || c[1] as usize >= fd[1]
                        || c[2] as usize >= fd[2]
                    {
                        continue;
                    }
                    let w = (if dx == 1 { frac[0] } else { 1.0 - frac[0] })
                        * (if dy == 1 { frac[1] } else { 1.0 - frac[1] })
                        * (if dz == 1 { frac[2] } else { 1.0 - frac[2] });
                    acc += w
                        * f.comp[axis][g.fidx(axis, c[0] as usize, c[1] as usize, c[2] as usize)];
                }
            }
        }
        out[axis] = acc;
    }
    out
}

/// Constant extension of a face field past its domain: faces fully
/// outside pick up the average of adjacent known faces on their own
/// lattice, repeated `layers` times. Interior values and the zero
/// boundary normals are kept as they are, so trilinear stencils that
/// poke past the staircase boundary see field-sized values instead of
/// hard zeros.
fn extended_for_sampling(b: &FaceField, layers: usize) -> FaceField {
    let dom = b.domain();
    let g = &dom.grid;
    let mut out = b.clone();
    for axis in 0..3 {
        let fd = g.face_dims(axis);
        let mut known = vec![false; out.comp[axis].len()];
        for k in 0..fd[2] {
            for j in 0..fd[1] {
                for i in 0..fd[0] {
                    if face_kind(dom, axis, i, j, k) != FaceKind::Outside {
                        known[g.fidx(axis, i, j, k)] = true;
                    }
                }
            }
        }
        for _ in 0..layers {
            let snap = out.comp[axis].clone();
            let known_snap = known.clone();
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let idx = g.fidx(axis, i, j, k);
                        if known_snap[idx] {
                            continue;
                        }
                        let mut s = 0.0;
                        let mut n = 0usize;
                        let c = [i, j, k];
                        for a in 0..3 {
                            if c[a] > 0 {
                                let mut q = c;
                                q[a] -= 1;
                                let qi = g.fidx(axis, q[0], q[1], q[2]);
                                if known_snap[qi] {
                                    s += snap[qi];
                                    n += 1;
                                }
                            }
                            if c[a] + 1 < fd[a] {
                                let mut q = c;
                                q[a] += 1;
                                let qi = g.fidx(axis, q[0], q[1], q[2]);
                                if known_snap[qi] {
                                    s += snap[qi];
                                    n += 1;
                                }
                            }
                        }
                        if n > 0 {
                            out.comp[axis][idx] = s / n as f64;
                            known[idx] = true;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Rasterization of the flowed domain psi_t(Omega): a cell belongs to the
/// image iff its reverse-flowed center lands in an inside cell of the
/// source mask.
pub fn flowed_domain(dom: &Arc<VoxelDomain>, map: &FlowMap) -> Result<Arc<VoxelDomain>> {
    if map.t == 0.0 {
        return Ok(Arc::clone(dom));
    }
    let g = &dom.grid;
    // Displacement bound from a coarse sample of the velocity field.
    let mut vmax = 0.0f64;
    for &idx in dom.inside.iter().step_by(7) {
        let [i, j, k] = g.decompose(idx as usize);
        vmax = vmax.max(math::norm(map.velocity(g.cell_center(i, j, k))));
    }
    let pad = 1.5 * vmax * map.t.abs() + 2.0 * g.h;
    let (blo, bhi) = dom.cell_bounds();
    let lo = [
        g.origin[0] + g.h * blo[0] as f64 - pad,
        g.origin[1] + g.h * blo[1] as f64 - pad,
        g.origin[2] + g.h * blo[2] as f64 - pad,
    ];
    let hi = [
        g.origin[0] + g.h * (bhi[0] + 1) as f64 + pad,
        g.origin[1] + g.h * (bhi[1] + 1) as f64 + pad,
        g.origin[2] + g.h * (bhi[2] + 1) as f64 + pad,
    ];
    let tg = Grid::covering(lo, hi, g.h, 2);
    let rev = map.reversed();
    // Validate the integrator once on a boundary sample, then run the
    // bulk point tests on the unchecked path.
    for &idx in dom.boundary_cells().iter().step_by(97) {
        let [i, j, k] = g.decompose(idx as usize);
        rev.flow(g.cell_center(i, j, k))?;
    }
    let mut mask = vec![false; tg.n_cells()];
    let row = tg.dims[0];
    exec::for_each_chunk_mut(&mut mask, row, |start, chunk| {
        for (o, m) in chunk.iter_mut().enumerate() {
            let [i, j, k] = tg.decompose(start + o);
            let (y, _) = rev.flow_unchecked(tg.cell_center(i, j, k));
            if let Some([ci, cj, ck]) = g.locate(y) {
                if dom.mask[g.idx(ci, cj, ck)] {
                    *m = true;
                }
            }
        }
    });
    Ok(Arc::new(VoxelDomain::from_mask(tg, mask)?))
}

/// Transported field together with its transport bookkeeping.
pub struct PushforwardResult {
    /// Divergence-free tangent field on the flowed domain.
    pub field: FaceField,
    pub target: Arc<VoxelDomain>,
    /// Relative size of the divergence re-projection correction; a
    /// discretization quality metric that should vanish under refinement.
    pub correction_rel: f64,
}

/// Pushforward B_t(x) = D psi(y) B(y) / det(y) at y = psi^{-1}(x),
/// resampled onto the faces of the flowed domain and re-projected into
/// the divergence-free tangent space. The inverse point comes from
/// reverse-time integration; Jacobian and determinant from the forward
/// variational integration started at y.
pub fn pushforward(b: &FaceField, map: &FlowMap, proj_tol: f64) -> Result<PushforwardResult> {
    let dom = b.domain();
    if map.t == 0.0 {
        return Ok(PushforwardResult {
            field: b.clone(),
            target: Arc::clone(dom),
            correction_rel: 0.0,
        });
    }
    let target = flowed_domain(dom, map)?;
    let rev = map.reversed();
    // Integrator sanity on a sample, as in flowed_domain.
    for &idx in target.boundary_cells().iter().step_by(97) {
        let [i, j, k] = target.grid.decompose(idx as usize);
        rev.flow(target.grid.cell_center(i, j, k))?;
    }
    let bx = extended_for_sampling(b, 2);
    let transported = |x: V3| -> V3 {
        let (y, _) = rev.flow_unchecked(x);
        let (_, jac, det) = map.flow_with_jacobian(y);
        let jv = math::mat_vec(&jac, sample_mac(&bx, y));
        [jv[0] / det, jv[1] / det, jv[2] / det]
    };
    let mut raw = FaceField::zeros(&target);
    let tg = target.grid.clone();
    for (axis, comp) in raw.comp.iter_mut().enumerate() {
        let fd = tg.face_dims(axis);
        let tref = &target;
        exec::for_each_chunk_mut(comp, fd[0], |start, chunk| {
            for (o, slot) in chunk.iter_mut().enumerate() {
                let fi = start + o;
                let i = fi % fd[0];
                let r = fi / fd[0];
                let (j, k) = (r % fd[1], r / fd[1]);
                if face_kind(tref, axis, i, j, k) != FaceKind::Interior {
                    continue;
                }
                *slot = transported(tg.face_center(axis, i, j, k))[axis];
            }
        });
    }
    let raw_norm = raw.norm();
    if raw_norm == 0.0 {
        return Err(Error::Solver("pushforward produced a zero field".into()));
    }
    let proj = project_div_free_tangent(&raw, proj_tol)?;
    let mut diff = proj.field.clone();
    diff.axpy(-1.0, &raw);
    let correction_rel = diff.norm() / raw_norm;
    Ok(PushforwardResult {
        field: proj.field,
        target,
        correction_rel,
    })
}

/// Fitted first-order energy decay constant: the smallest C with
/// M(B_t) >= M(B) (1 - C t) across every probe field and time.
#[derive(Debug)]
pub struct EnergyReport {
    pub c_hat: f64,
    /// Worst margin M_t/M0 - (1 - c_hat t) per time, over the fields.
    pub per_t_margin: Vec<(f64, f64)>,
    /// Smallest valid constant per field.
    pub per_field_c: Vec<f64>,
}

/// Measures the energy decay constant of a generator across probe
/// fields. The constant must come out bounded regardless of the field;
/// callers assert generator-level bounds against it.
pub fn energy_estimate_check(
    gen: &Generator,
    support_radius: f64,
    fields: &[FaceField],
    ts: &[f64],
    proj_tol: f64,
) -> Result<EnergyReport> {
    if fields.is_empty() || ts.is_empty() {
        return Err(Error::Precondition(
            "energy estimate needs at least one field and one time".into(),
        ));
    }
    if ts.iter().any(|&t| t <= 0.0) {
        return Err(Error::Precondition("probe times must be positive".into()));
    }
    let mut per_field_c = Vec::with_capacity(fields.len());
    let mut ratios: Vec<Vec<f64>> = Vec::new();
    for b in fields {
        let m0 = magnetic_energy(b);
        if m0 <= 0.0 {
            return Err(Error::Precondition("probe field has no energy".into()));
        }
        let mut c_field = 0.0f64;
        let mut row = Vec::with_capacity(ts.len());
        for &t in ts {
            let map = FlowMap::new(gen.clone(), t, FlowMap::default_steps(t), support_radius)?;
            let push = pushforward(b, &map, proj_tol)?;
            let ratio = magnetic_energy(&push.field) / m0;
            row.push(ratio);
            c_field = c_field.max((1.0 - ratio) / t);
        }
        ratios.push(row);
        per_field_c.push(c_field);
    }
    let c_hat = per_field_c.iter().cloned().fold(0.0, f64::max);
    let per_t_margin = ts
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let worst = ratios
                .iter()
                .map(|row| row[ti] - (1.0 - c_hat * t))
                .fold(f64::INFINITY, f64::min);
            (t, worst)
        })
        .collect();
    Ok(EnergyReport {
        c_hat,
        per_t_margin,
        per_field_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biotsavart::{helicity, BsPlan};
    use crate::fields;
    use crate::geometry::spec::DomainSpec;

    fn ball(r: f64, h: f64) -> Arc<VoxelDomain> {
        Arc::new(VoxelDomain::rasterize(&DomainSpec::ball([0.0; 3], r), h, 2).unwrap())
    }

    #[test]
    fn constant_flow_translates_exactly() {
        let map = FlowMap::new(Generator::Constant { v: [1.0, 0.0, 0.0] }, 1.0, 32, 50.0).unwrap();
        let (x, det) = map.flow([0.2, -0.3, 0.4]).unwrap();
        assert!((x[0] - 1.2).abs() < 1e-12, "{x:?}");
        assert!((x[1] + 0.3).abs() < 1e-12);
        assert!((x[2] - 0.4).abs() < 1e-12);
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_flow_matches_the_exponential() {
        let a = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let map = FlowMap::new(Generator::Linear { a }, 0.1, 64, 100.0).unwrap();
        let x0 = [0.3, -0.2, 0.5];
        let (x, det) = map.flow(x0).unwrap();
        let s = 0.1f64.exp();
        for a in 0..3 {
            assert!((x[a] - s * x0[a]).abs() < 1e-9, "{x:?}");
        }
        assert!((det - (0.3f64).exp()).abs() < 1e-6, "det {det}");
    }

    #[test]
    fn divergence_free_flows_preserve_volume_elements() {
        // Rigid rotation: antisymmetric matrix, divergence stays zero even
        // through the cutoff because the radial factor is orthogonal to
        // the velocity.
        let a = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let map = FlowMap::new(Generator::Linear { a }, 0.4, 64, 10.0).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x0 = [
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ];
            let (_, det) = map.flow(x0).unwrap();
            assert!((det - 1.0).abs() < 1e-8, "det {det} at {x0:?}");
        }
    }

    #[test]
    fn flows_compose_in_time() {
        let gen = Generator::RadialBump {
            center: [0.1, 0.0, -0.1],
            strength: 0.8,
        };
        let m1 = FlowMap::new(gen.clone(), 0.03, 24, 5.0).unwrap();
        let m2 = FlowMap::new(gen.clone(), 0.05, 24, 5.0).unwrap();
        let m12 = FlowMap::new(gen, 0.08, 48, 5.0).unwrap();
        let x0 = [0.4, -0.2, 0.7];
        let (mid, d1) = m1.flow(x0).unwrap();
        let (end, d2) = m2.flow(mid).unwrap();
        let (direct, d12) = m12.flow(x0).unwrap();
        assert!(
            math::norm(math::sub(end, direct)) < 1e-8,
            "{end:?} vs {direct:?}"
        );
        assert!((d1 * d2 - d12).abs() < 1e-8);
    }

    #[test]
    fn liouville_determinant_matches_finite_differences() {
        let gen = Generator::RadialBump {
            center: [0.0; 3],
            strength: 1.3,
        };
        let map = FlowMap::new(gen, 0.05, 32, 4.0).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x0 = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let (_, det) = map.flow(x0).unwrap();
            let jac = map.jacobian_fd(x0, 0.0125).unwrap();
            let fd = math::det3(&jac);
            assert!(
                (det - fd).abs() <= 0.01 * det.abs(),
                "liouville {det} vs fd {fd}"
            );
        }
    }

    #[test]
    fn variational_jacobian_matches_finite_differences() {
        let gen = Generator::RadialBump {
            center: [0.3, -0.1, 0.0],
            strength: 1.1,
        };
        let map = FlowMap::new(gen, 0.06, 32, 4.0).unwrap();
        let x0 = [0.5, 0.4, -0.6];
        let (end_v, jac_v, det_v) = map.flow_with_jacobian(x0);
        let (end_f, det_f) = map.flow(x0).unwrap();
        assert!(math::norm(math::sub(end_v, end_f)) < 1e-10);
        assert!((det_v - det_f).abs() < 1e-10 * det_f);
        let jac_fd = map.jacobian_fd(x0, 0.005).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert!(
                    (jac_v[r][c] - jac_fd[r][c]).abs() < 1e-4,
                    "J[{r}][{c}]: {} vs {}",
                    jac_v[r][c],
                    jac_fd[r][c]
                );
            }
        }
        assert!((math::det3(&jac_v) - det_v).abs() < 1e-6);
    }

    #[test]
    fn outward_field_on_the_ball_is_radial() {
        let dom = ball(1.0, 0.1);
        let (gen, rep) = outward_field(&dom, 2.5).unwrap();
        assert!(rep.delta >= 0.9, "delta {}", rep.delta);
        assert!(rep.boundary_cells > 100);
        // Support exactness.
        let map = FlowMap::new(gen, 0.01, 8, 2.5).unwrap();
        let v = map.velocity([2.6, 0.3, 0.0]);
        assert_eq!(v, [0.0; 3]);
        // Near the boundary the direction is radial.
        let p = [0.98, 0.0, 0.0];
        let x = map.velocity(p);
        let xr = x[0] / math::norm(x);
        assert!(xr > 0.95, "radial fraction {xr}");
    }

    #[test]
    fn outward_field_on_an_ellipsoid_stays_outward() {
        let spec = DomainSpec::ellipsoid([0.0; 3], [2.0, 1.0, 1.0]);
        let dom = Arc::new(VoxelDomain::rasterize(&spec, 0.1, 2).unwrap());
        let (_, rep) = outward_field(&dom, 4.4).unwrap();
        assert!(rep.delta > 0.0, "delta {}", rep.delta);
    }

    #[test]
    fn pullback_at_zero_time_is_the_identity() {
        let gen = Generator::RadialBump {
            center: [0.0; 3],
            strength: 1.0,
        };
        let map = FlowMap::new(gen, 0.0, 8, 4.0).unwrap();
        let f = |p: V3| [p[1], -p[0], p[2] * p[2]];
        let x = [0.3, 0.4, -0.2];
        let got = pullback_covector(&map, f, x, 0.0125).unwrap();
        let want = f(x);
        assert!(math::norm(math::sub(got, want)) < 1e-9, "{got:?}");
    }

    #[test]
    fn gradients_pull_back_to_gradients_of_the_composition() {
        // F = grad f with f = x y + z^2; the pullback must equal the
        // gradient of f(psi(x)) to finite-difference accuracy.
        let gen = Generator::RadialBump {
            center: [0.2, 0.0, 0.0],
            strength: 0.9,
        };
        let map = FlowMap::new(gen, 0.05, 32, 4.0).unwrap();
        let f = |p: V3| [p[1], p[0], 2.0 * p[2]];
        let scalar = |p: V3| p[0] * p[1] + p[2] * p[2];
        let x = [0.4, -0.3, 0.5];
        let step = 0.0125;
        let got = pullback_covector(&map, f, x, step).unwrap();
        let mut want = [0.0f64; 3];
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += step;
            xm[a] -= step;
            let (pp, _) = map.flow(xp).unwrap();
            let (pm, _) = map.flow(xm).unwrap();
            want[a] = (scalar(pp) - scalar(pm)) / (2.0 * step);
        }
        let rel = math::norm(math::sub(got, want)) / math::norm(want);
        assert!(rel < 1e-3, "pullback {got:?} vs gradient {want:?}");
    }

    #[test]
    fn zero_time_pushforward_is_the_field_itself() {
        let dom = ball(1.0, 0.125);
        let b = fields::random_div_free(&dom, 9, 1e-9).unwrap();
        let gen = Generator::RadialBump {
            center: [0.0; 3],
            strength: 1.0,
        };
        let map = FlowMap::new(gen, 0.0, 8, 4.0).unwrap();
        let push = pushforward(&b, &map, 1e-9).unwrap();
        assert_eq!(push.correction_rel, 0.0);
        let mut diff = push.field.clone();
        diff.axpy(-1.0, &b);
        assert_eq!(diff.norm(), 0.0);
    }

    #[test]
    fn aligned_translation_preserves_helicity_and_energy() {
        let dom = ball(1.0, 0.1);
        // The transport contract requires a discretely divergence-free
        // input, so the analytic sample is projected first.
        let b = project_div_free_tangent(&fields::ball_eigenfield(&dom, [0.0; 3], 1.0), 1e-12)
            .unwrap()
            .field;
        // Displacement 6 * 0.05 = 3h in x: exactly grid aligned.
        let map =
            FlowMap::new(Generator::Constant { v: [6.0, 0.0, 0.0] }, 0.05, 24, 50.0).unwrap();
        let push = pushforward(&b, &map, 1e-10).unwrap();
        let m0 = magnetic_energy(&b);
        let m1 = magnetic_energy(&push.field);
        assert!((m1 - m0).abs() <= 1e-9 * m0, "energy {m0} -> {m1}");
        assert!(push.correction_rel < 1e-7, "correction {}", push.correction_rel);
        let h0 = helicity(&BsPlan::new(&dom), &b).unwrap();
        let h1 = helicity(&BsPlan::new(&push.target), &push.field).unwrap();
        assert!((h1 - h0).abs() <= 1e-9 * h0.abs(), "helicity {h0} -> {h1}");
    }

    #[test]
    fn outward_pushforward_nearly_preserves_helicity() {
        let dom = ball(1.0, 0.07);
        let b = project_div_free_tangent(&fields::ball_eigenfield(&dom, [0.0; 3], 1.0), 1e-10)
            .unwrap()
            .field;
        let (gen, _) = outward_field(&dom, 2.5).unwrap();
        let map = FlowMap::new(gen, 0.05, 36, 2.5).unwrap();
        let push = pushforward(&b, &map, 1e-9).unwrap();
        let h0 = helicity(&BsPlan::new(&dom), &b).unwrap();
        let h1 = helicity(&BsPlan::new(&push.target), &push.field).unwrap();
        let rel = (h1 - h0).abs() / h0.abs();
        assert!(rel <= 0.05, "helicity drift {rel} ({h0} -> {h1})");
    }

    // Divergence-free vortex supported in r < 0.7, so transported samples
    // never touch the staircase boundary layer of the mask.
    fn interior_vortex(p: V3) -> V3 {
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        let s = 0.49 - r2;
        if s <= 0.0 {
            return [0.0; 3];
        }
        let w = 8.0 * s * s * s;
        [-w * p[1], w * p[0], 0.0]
    }

    #[test]
    fn reprojection_correction_shrinks_under_refinement() {
        // A fixed rigid rotation keeps the ball invariant, so the sequence
        // isolates the resampling error from mask quantisation churn.
        let w = [0.36, 0.48, 0.8];
        let a = [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ];
        let mut prev = f64::INFINITY;
        for &h in &[0.1, 0.07, 0.05] {
            let dom = ball(1.0, h);
            let b = project_div_free_tangent(
                &FaceField::sample_tangent(&dom, interior_vortex),
                1e-10,
            )
            .unwrap()
            .field;
            let map = FlowMap::new(Generator::Linear { a }, 0.02, 24, 4.0).unwrap();
            let push = pushforward(&b, &map, 1e-9).unwrap();
            assert!(
                push.correction_rel < prev,
                "correction did not shrink: {prev} then {}",
                push.correction_rel
            );
            prev = push.correction_rel;
        }
        assert!(prev < 0.05, "final correction {prev}");
    }

    #[test]
    fn volume_transport_matches_the_determinant_integral() {
        let dom = ball(1.0, 0.07);
        let (gen, _) = outward_field(&dom, 2.5).unwrap();
        let map = FlowMap::new(gen, 0.04, 24, 2.5).unwrap();
        let target = flowed_domain(&dom, &map).unwrap();
        let mut integral = 0.0;
        for &idx in &dom.inside {
            let [i, j, k] = dom.grid.decompose(idx as usize);
            let (_, det) = map.flow_unchecked(dom.grid.cell_center(i, j, k));
            integral += det;
        }
        integral *= dom.grid.h.powi(3);
        let vol = target.volume();
        assert!(
            (vol - integral).abs() <= 0.02 * integral,
            "volume {vol} vs integral {integral}"
        );
    }

    #[test]
    fn translation_flow_has_zero_energy_decay_constant() {
        let dom = ball(1.0, 0.1);
        let probes: Vec<FaceField> = (0..3)
            .map(|s| fields::random_div_free(&dom, 40 + s, 1e-9).unwrap())
            .collect();
        // Velocity 10 in x: displacements at t = 0.01/0.02/0.04 are whole
        // multiples of h = 0.1, so transport is exact.
        let gen = Generator::Constant {
            v: [10.0, 0.0, 0.0],
        };
        let rep = energy_estimate_check(&gen, 80.0, &probes, &[0.01, 0.02, 0.04], 1e-9).unwrap();
        assert!(rep.c_hat <= 1e-8, "c_hat {}", rep.c_hat);
    }

    #[test]
    fn radial_flow_energy_constant_is_bounded_by_the_stretching() {
        let dom = ball(1.0, 0.1);
        let probes: Vec<FaceField> = (0..5)
            .map(|s| fields::random_div_free(&dom, 50 + s, 1e-9).unwrap())
            .collect();
        let (gen, _) = outward_field(&dom, 2.5).unwrap();
        let rep = energy_estimate_check(&gen, 2.5, &probes, &[0.01, 0.02, 0.04], 1e-9).unwrap();
        // Stretching bound: 3 max ||DX|| over the domain, DX by central
        // differences of the velocity so the bound does not depend on the
        // analytic Jacobian path.
        let map = FlowMap::new(gen, 0.01, 8, 2.5).unwrap();
        let mut dmax = 0.0f64;
        for &idx in dom.inside.iter().step_by(11) {
            let [i, j, k] = dom.grid.decompose(idx as usize);
            let c = dom.grid.cell_center(i, j, k);
            let mut jac = [[0.0f64; 3]; 3];
            let step = 0.025;
            for a in 0..3 {
                let mut cp = c;
                let mut cm = c;
                cp[a] += step;
                cm[a] -= step;
                let vp = map.velocity(cp);
                let vm = map.velocity(cm);
                for r in 0..3 {
                    jac[r][a] = (vp[r] - vm[r]) / (2.0 * step);
                }
            }
            dmax = dmax.max(math::op_norm3(&jac));
        }
        assert!(
            rep.c_hat <= 3.0 * dmax,
            "c_hat {} vs 3 max ||DX|| = {}",
            rep.c_hat,
            3.0 * dmax
        );
        // Margins live inside a linear envelope and stay nonnegative.
        for (t, margin) in &rep.per_t_margin {
            assert!(*margin >= -1e-12, "margin at t={t} is {margin}");
            assert!(
                *margin <= rep.c_hat * t + 1e-9,
                "margin at t={t} is {margin}"
            );
        }
    }
}
