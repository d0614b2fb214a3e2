//! Rasterized domains: a boolean cell mask on a `Grid` plus connectivity
//! labels.
//!
//! A cell belongs to the domain iff its center satisfies the analytic
//! inside test. The covering grid always keeps a shell of outside cells
//! around the mask (margin >= 2), which downstream stencils and distance
//! transforms rely on.

use crate::error::{Error, Result};
use crate::exec;
use crate::geometry::grid::Grid;
use crate::geometry::spec::DomainSpec;
use crate::io::keyval::KeyVal;
use sha2::{Digest, Sha256};
use std::collections::VecDeque;
use std::fmt::Write as _;

#[derive(Clone, Debug)]
pub struct VoxelDomain {
    pub grid: Grid,
    /// True for inside cells; length `grid.n_cells()`.
    pub mask: Vec<bool>,
    /// 0 outside, 1..=n_components inside.
    pub labels: Vec<u16>,
    pub n_components: usize,
    /// Flat indices of inside cells, ascending.
    pub inside: Vec<u32>,
    /// Inside cell count per component, indexed by label-1.
    pub component_cells: Vec<usize>,
}

impl VoxelDomain {
    /// Rasterize on a fresh covering grid. Fails if any spec component
    /// vanishes or merges with another at this resolution.
    pub fn rasterize(spec: &DomainSpec, h: f64, margin: usize) -> Result<VoxelDomain> {
        spec.validate()?;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidSpec(format!("cell size {h} not positive")));
        }
        let (lo, hi) = spec.bounding_box();
        let grid = Grid::covering(lo, hi, h, margin.max(2));
        Self::rasterize_with_grid(spec, &grid)
    }

    /// Rasterize on a caller-provided grid, so related domains can share a
    /// lattice and be compared cell by cell.
    pub fn rasterize_with_grid(spec: &DomainSpec, grid: &Grid) -> Result<VoxelDomain> {
        spec.validate()?;
        let mut mask = vec![false; grid.n_cells()];
        let slab = grid.dims[0] * grid.dims[1];
        let g = *grid;
        exec::for_each_chunk_mut(&mut mask, slab, |start, chunk| {
            for (off, cell) in chunk.iter_mut().enumerate() {
                let [i, j, k] = g.decompose(start + off);
                *cell = spec.contains(g.cell_center(i, j, k));
            }
        });
        let dom = Self::from_mask(*grid, mask)?;
        let expected = match spec {
            DomainSpec::Union(members) => members.len(),
            _ => 1,
        };
        if dom.n_components != expected {
            return Err(Error::Resolution(format!(
                "expected {expected} connected component(s), rasterization produced {} at h = {}",
                dom.n_components, grid.h
            )));
        }
        Ok(dom)
    }

    /// Build from an explicit mask: labels components, collects inside
    /// cells, and enforces the outside-shell invariant.
    pub fn from_mask(grid: Grid, mask: Vec<bool>) -> Result<VoxelDomain> {
        if mask.len() != grid.n_cells() {
            return Err(Error::Precondition(format!(
                "mask length {} does not match grid cell count {}",
                mask.len(),
                grid.n_cells()
            )));
        }
        let [nx, ny, nz] = grid.dims;
        let mut inside = Vec::new();
        for (idx, &m) in mask.iter().enumerate() {
            if !m {
                continue;
            }
            let [i, j, k] = grid.decompose(idx);
            if i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1 {
                return Err(Error::Precondition(
                    "inside cell touches the grid edge; enlarge the covering margin".into(),
                ));
            }
            inside.push(idx as u32);
        }
        if inside.is_empty() {
            return Err(Error::Resolution(
                "no cell center falls inside the domain; refine h".into(),
            ));
        }

        // 6-connected flood fill.
        let mut labels = vec![0u16; mask.len()];
        let mut component_cells = Vec::new();
        let mut queue = VecDeque::new();
        for &start in &inside {
            let start = start as usize;
            if labels[start] != 0 {
                continue;
            }
            let label = (component_cells.len() + 1) as u16;
            let mut count = 0usize;
            labels[start] = label;
            queue.push_back(start);
            while let Some(idx) = queue.pop_front() {
                count += 1;
                let [i, j, k] = grid.decompose(idx);
                let neighbors = [
                    grid.idx(i - 1, j, k),
                    grid.idx(i + 1, j, k),
                    grid.idx(i, j - 1, k),
                    grid.idx(i, j + 1, k),
                    grid.idx(i, j, k - 1),
                    grid.idx(i, j, k + 1),
                ];
                for n in neighbors {
                    if mask[n] && labels[n] == 0 {
                        labels[n] = label;
                        queue.push_back(n);
                    }
                }
            }
            component_cells.push(count);
        }

        Ok(VoxelDomain {
            grid,
            n_components: component_cells.len(),
            mask,
            labels,
            inside,
            component_cells,
        })
    }

    pub fn n_inside(&self) -> usize {
        self.inside.len()
    }

    /// Measure of the rasterized domain (cell count times cell volume).
    pub fn volume(&self) -> f64 {
        self.inside.len() as f64 * self.grid.h.powi(3)
    }

    /// Restrict to one labeled component, keeping the same grid.
    pub fn component(&self, label: u16) -> Result<VoxelDomain> {
        if label == 0 || label as usize > self.n_components {
            return Err(Error::Precondition(format!(
                "component label {label} out of range 1..={}",
                self.n_components
            )));
        }
        let mask: Vec<bool> = self.labels.iter().map(|&l| l == label).collect();
        Self::from_mask(self.grid, mask)
    }

    /// Inside cells with at least one outside 6-neighbor.
    pub fn boundary_cells(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for &idx in &self.inside {
            let [i, j, k] = self.grid.decompose(idx as usize);
            let neighbors = [
                self.grid.idx(i - 1, j, k),
                self.grid.idx(i + 1, j, k),
                self.grid.idx(i, j - 1, k),
                self.grid.idx(i, j + 1, k),
                self.grid.idx(i, j, k - 1),
                self.grid.idx(i, j, k + 1),
            ];
            if neighbors.iter().any(|&n| !self.mask[n]) {
                out.push(idx);
            }
        }
        out
    }

    /// Largest center-to-center distance between inside cells. The maximum
    /// over all pairs is attained on boundary cells, so only those are
    /// compared.
    pub fn diameter(&self) -> f64 {
        let boundary = self.boundary_cells();
        let pts: Vec<[f64; 3]> = boundary
            .iter()
            .map(|&idx| {
                let [i, j, k] = self.grid.decompose(idx as usize);
                self.grid.cell_center(i, j, k)
            })
            .collect();
        let mut best = 0.0f64;
        for a in 0..pts.len() {
            for b in (a + 1)..pts.len() {
                let d = [
                    pts[a][0] - pts[b][0],
                    pts[a][1] - pts[b][1],
                    pts[a][2] - pts[b][2],
                ];
                best = best.max(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
            }
        }
        best.sqrt()
    }

    /// Inclusive index bounds of the inside cells.
    pub fn cell_bounds(&self) -> ([usize; 3], [usize; 3]) {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for &idx in &self.inside {
            let c = self.grid.decompose(idx as usize);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        (lo, hi)
    }

    pub fn assert_same_grid(&self, other: &VoxelDomain) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::DomainMismatch(
                "operation requires both domains on the identical grid".into(),
            ));
        }
        Ok(())
    }

    /// Content hash covering the lattice and the mask, for provenance
    /// records. Stable across platforms (explicit little-endian bytes).
    pub fn domain_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.grid.h.to_le_bytes());
        for v in self.grid.origin {
            hasher.update(v.to_le_bytes());
        }
        for d in self.grid.dims {
            hasher.update((d as u64).to_le_bytes());
        }
        for run in rle_encode(&self.mask) {
            hasher.update(run.to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut s = String::with_capacity(16);
        for b in digest.iter().take(8) {
            let _ = write!(s, "{b:02x}");
        }
        s
    }

    // ---- text serialization ----

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "kind = voxels");
        let _ = writeln!(out, "h = {}", self.grid.h);
        let _ = writeln!(
            out,
            "origin = {} {} {}",
            self.grid.origin[0], self.grid.origin[1], self.grid.origin[2]
        );
        let _ = writeln!(
            out,
            "dims = {} {} {}",
            self.grid.dims[0], self.grid.dims[1], self.grid.dims[2]
        );
        let runs = rle_encode(&self.mask);
        let _ = writeln!(out, "runs = {}", runs.len());
        for (chunk_no, chunk) in runs.chunks(64).enumerate() {
            let list: Vec<String> = chunk.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(out, "rle.{chunk_no} = {}", list.join(" "));
        }
        out
    }

    pub fn parse(text: &str) -> Result<VoxelDomain> {
        let kv = KeyVal::parse(text)?;
        let kind = kv.take_str("kind")?;
        if kind != "voxels" {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected kind = voxels, got '{kind}'"),
            });
        }
        let h = kv.take_f64("h")?;
        let origin = kv.take_vec3("origin")?;
        let dims_f = kv.take_vec3("dims")?;
        let dims = [dims_f[0] as usize, dims_f[1] as usize, dims_f[2] as usize];
        let n_runs = kv.take_usize_or("runs", 0)?;
        let mut runs = Vec::with_capacity(n_runs);
        let n_chunks = n_runs.div_ceil(64);
        for chunk_no in 0..n_chunks {
            let line = kv.take_str(&format!("rle.{chunk_no}"))?;
            for tok in line.split_whitespace() {
                let r: u64 = tok.parse().map_err(|_| Error::Parse {
                    line: 0,
                    msg: format!("bad run length '{tok}'"),
                })?;
                runs.push(r);
            }
        }
        kv.check_consumed()?;
        if runs.len() != n_runs {
            return Err(Error::Parse {
                line: 0,
                msg: format!("declared {n_runs} runs, found {}", runs.len()),
            });
        }
        let grid = Grid { origin, h, dims };
        let mask = rle_decode(&runs, grid.n_cells())?;
        Self::from_mask(grid, mask)
    }
}

/// Run lengths of alternating false/true spans, starting with false.
pub fn rle_encode(mask: &[bool]) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u64;
    for &m in mask {
        if m == current {
            len += 1;
        } else {
            runs.push(len);
            current = m;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn rle_decode(runs: &[u64], n: usize) -> Result<Vec<bool>> {
    let total: u64 = runs.iter().sum();
    if total != n as u64 {
        return Err(Error::Parse {
            line: 0,
            msg: format!("run lengths sum to {total}, grid has {n} cells"),
        });
    }
    let mut mask = Vec::with_capacity(n);
    let mut current = false;
    for &r in runs {
        mask.extend(std::iter::repeat(current).take(r as usize));
        current = !current;
    }
    Ok(mask)
}
