//! Exact Euclidean distance transform on the cell lattice.
//!
//! Separable lower-envelope-of-parabolas construction: one 1D pass per
//! axis yields the exact squared distance (in cell units) from every cell
//! to the nearest seed cell. Results are integer-valued sums of squares,
//! so they carry no floating-point error.

use crate::exec;

/// Stand-in for infinity that keeps parabola intersections finite. Large
/// enough that no real distance competes, small enough that the arithmetic
/// below never overflows.
const FAR: f64 = 1e30;
const SENTINEL: f64 = -1e35;

/// Squared cell-unit distance from each cell to the nearest seed.
/// Cells with no seed anywhere in the lattice end up >= FAR / 2.
pub fn squared_edt(seeds: &[bool], dims: [usize; 3]) -> Vec<f64> {
    squared_edt_impl(seeds, dims, false)
}

/// Single-threaded variant with identical output, kept for benchmarking
/// the parallel speedup and for cross-checks.
pub fn squared_edt_serial(seeds: &[bool], dims: [usize; 3]) -> Vec<f64> {
    squared_edt_impl(seeds, dims, true)
}

fn squared_edt_impl(seeds: &[bool], dims: [usize; 3], force_serial: bool) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    assert_eq!(seeds.len(), nx * ny * nz, "seed mask does not match dims");
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let slab = nx * ny;

    // Pass along x: rows are contiguous.
    let x_pass = |_start: usize, chunk: &mut [f64]| {
        let mut ws = Workspace::new(nx);
        for row in chunk.chunks_mut(nx) {
            ws.transform_row(row);
        }
    };
    // Pass along y: within one z-slab, a y-column has stride nx.
    let y_pass = |_start: usize, chunk: &mut [f64]| {
        let mut ws = Workspace::new(ny);
        let mut col = vec![0.0; ny];
        for x in 0..nx {
            for (j, c) in col.iter_mut().enumerate() {
                *c = chunk[x + nx * j];
            }
            ws.transform_row(&mut col);
            for (j, c) in col.iter().enumerate() {
                chunk[x + nx * j] = *c;
            }
        }
    };

    if force_serial {
        for (s, chunk) in d.chunks_mut(slab).enumerate() {
            x_pass(s * slab, chunk);
        }
        for (s, chunk) in d.chunks_mut(slab).enumerate() {
            y_pass(s * slab, chunk);
        }
    } else {
        exec::for_each_chunk_mut(&mut d, slab, x_pass);
        exec::for_each_chunk_mut(&mut d, slab, y_pass);
    }

    // Pass along z: columns cross slab boundaries, done in one thread.
    let mut ws = Workspace::new(nz);
    let mut col = vec![0.0; nz];
    for y in 0..ny {
        for x in 0..nx {
            let base = x + nx * y;
            for (k, c) in col.iter_mut().enumerate() {
                *c = d[base + slab * k];
            }
            ws.transform_row(&mut col);
            for (k, c) in col.iter().enumerate() {
                d[base + slab * k] = *c;
            }
        }
    }
    d
}

/// Squared distances plus, for every cell, the flat index of the seed cell
/// realizing them. The witness is meaningless for cells whose distance is
/// still >= FAR / 2 (no seed anywhere).
pub struct FeatureTransform {
    pub dist2: Vec<f64>,
    pub witness: Vec<u32>,
}

/// Exact squared EDT that also tracks which seed is nearest. Costs about
/// 50% more than `squared_edt`; use the plain transform when witnesses are
/// not needed.
pub fn feature_transform(seeds: &[bool], dims: [usize; 3]) -> FeatureTransform {
    let [nx, ny, nz] = dims;
    assert_eq!(seeds.len(), nx * ny * nz, "seed mask does not match dims");
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let mut w: Vec<u32> = (0..d.len() as u32).collect();
    let slab = nx * ny;

    // Pass along x. The witness after this pass is the flat index of the
    // winning x-position within the row.
    {
        let rows: Vec<(&mut [f64], &mut [u32])> = d
            .chunks_mut(nx)
            .zip(w.chunks_mut(nx))
            .map(|(a, b)| (a, b))
            .collect();
        crate::exec::for_each_item(rows, |row_no, (fd, fw)| {
            let mut ws = Workspace::new(nx);
            let mut arg = vec![0usize; nx];
            ws.transform_row_arg(fd, &mut arg);
            let base = (row_no * nx) as u32;
            for (q, &p) in arg.iter().enumerate() {
                fw[q] = base + p as u32;
            }
        });
    }

    // Pass along y, one z-slab at a time.
    {
        let slabs: Vec<(&mut [f64], &mut [u32])> = d
            .chunks_mut(slab)
            .zip(w.chunks_mut(slab))
            .map(|(a, b)| (a, b))
            .collect();
        crate::exec::for_each_item(slabs, |_slab_no, (fd, fw)| {
            let mut ws = Workspace::new(ny);
            let mut col = vec![0.0; ny];
            let mut colw = vec![0u32; ny];
            let mut arg = vec![0usize; ny];
            for x in 0..nx {
                for j in 0..ny {
                    col[j] = fd[x + nx * j];
                    colw[j] = fw[x + nx * j];
                }
                ws.transform_row_arg(&mut col, &mut arg);
                for j in 0..ny {
                    fd[x + nx * j] = col[j];
                    fw[x + nx * j] = colw[arg[j]];
                }
            }
        });
    }

    // Pass along z, serial (columns cross slabs).
    {
        let mut ws = Workspace::new(nz);
        let mut col = vec![0.0; nz];
        let mut colw = vec![0u32; nz];
        let mut arg = vec![0usize; nz];
        for y in 0..ny {
            for x in 0..nx {
                let base = x + nx * y;
                for k in 0..nz {
                    col[k] = d[base + slab * k];
                    colw[k] = w[base + slab * k];
                }
                ws.transform_row_arg(&mut col, &mut arg);
                for k in 0..nz {
                    d[base + slab * k] = col[k];
                    w[base + slab * k] = colw[arg[k]];
                }
            }
        }
    }
    FeatureTransform { dist2: d, witness: w }
}

struct Workspace {
    v: Vec<usize>,
    z: Vec<f64>,
    out: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Workspace {
        Workspace {
            v: vec![0; n],
            z: vec![0.0; n + 1],
            out: vec![0.0; n],
        }
    }

    /// 1D squared-distance transform of `f` in place:
    /// out[q] = min_p (q - p)^2 + f[p].
    fn transform_row(&mut self, f: &mut [f64]) {
        let n = f.len();
        if n == 1 {
            return;
        }
        self.build_envelope(f);
        let (v, z, out) = (&self.v, &self.z, &mut self.out);
        let mut k = 0usize;
        for q in 0..n {
            let qf = q as f64;
            while z[k + 1] < qf {
                k += 1;
            }
            let dq = qf - v[k] as f64;
            out[q] = dq * dq + f[v[k]];
        }
        f.copy_from_slice(&out[..n]);
    }

    /// Like `transform_row` but also reports the arg-min position per cell.
    fn transform_row_arg(&mut self, f: &mut [f64], arg: &mut [usize]) {
        let n = f.len();
        if n == 1 {
            arg[0] = 0;
            return;
        }
        self.build_envelope(f);
        let (v, z, out) = (&self.v, &self.z, &mut self.out);
        let mut k = 0usize;
        for q in 0..n {
            let qf = q as f64;
            while z[k + 1] < qf {
                k += 1;
            }
            let dq = qf - v[k] as f64;
            out[q] = dq * dq + f[v[k]];
            arg[q] = v[k];
        }
        f.copy_from_slice(&out[..n]);
    }

    /// Build the lower envelope of the parabolas q -> (x-q)^2 + f[q] into
    /// the v/z stacks.
    fn build_envelope(&mut self, f: &[f64]) {
        let n = f.len();
        let (v, z) = (&mut self.v, &mut self.z);
        let mut k = 0usize;
        v[0] = 0;
        z[0] = SENTINEL;
        z[1] = -SENTINEL;
        for q in 1..n {
            let qf = q as f64;
            let mut s;
            loop {
                let p = v[k];
                let pf = p as f64;
                s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
                if s <= z[k] {
                    // Parabola q hides parabola v[k]; z[0] is low enough
                    // that k never underflows.
                    k -= 1;
                } else {
                    break;
                }
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = -SENTINEL;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute_force(seeds: &[bool], dims: [usize; 3]) -> Vec<f64> {
        let [nx, ny, nz] = dims;
        let seed_cells: Vec<[i64; 3]> = (0..seeds.len())
            .filter(|&i| seeds[i])
            .map(|i| {
                [
                    (i % nx) as i64,
                    ((i / nx) % ny) as i64,
                    (i / (nx * ny)) as i64,
                ]
            })
            .collect();
        (0..seeds.len())
            .map(|i| {
                let c = [
                    (i % nx) as i64,
                    ((i / nx) % ny) as i64,
                    (i / (nx * ny)) as i64,
                ];
                seed_cells
                    .iter()
                    .map(|s| {
                        let d = [c[0] - s[0], c[1] - s[1], c[2] - s[2]];
                        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as f64
                    })
                    .fold(FAR, f64::min)
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for &dims in &[[9usize, 8, 7], [4, 12, 5], [16, 3, 3]] {
            let n = dims[0] * dims[1] * dims[2];
            let seeds: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.12)).collect();
            if !seeds.iter().any(|&s| s) {
                continue;
            }
            let want = brute_force(&seeds, dims);
            let got = squared_edt(&seeds, dims);
            let got_serial = squared_edt_serial(&seeds, dims);
            // Squared distances are exact integers in f64, so compare
            // without tolerance.
            assert_eq!(got, want);
            assert_eq!(got_serial, want);
        }
    }

    #[test]
    fn single_seed_gives_radial_squared_distance() {
        let dims = [7usize, 7, 7];
        let mut seeds = vec![false; 343];
        seeds[3 + 7 * (3 + 7 * 3)] = true;
        let d = squared_edt(&seeds, dims);
        assert_eq!(d[3 + 7 * (3 + 7 * 3)], 0.0);
        assert_eq!(d[6 + 7 * (3 + 7 * 3)], 9.0);
        assert_eq!(d[0], 27.0);
    }

    #[test]
    fn no_seeds_leaves_everything_far() {
        let d = squared_edt(&vec![false; 60], [5, 4, 3]);
        assert!(d.iter().all(|&v| v >= FAR / 2.0));
    }

    #[test]
    fn feature_transform_witnesses_realize_their_distances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let dims = [11usize, 9, 8];
        let n = dims[0] * dims[1] * dims[2];
        let seeds: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.08)).collect();
        let ft = feature_transform(&seeds, dims);
        let want = squared_edt(&seeds, dims);
        assert_eq!(ft.dist2, want);
        let [nx, ny, _] = dims;
        for i in 0..n {
            if ft.dist2[i] >= FAR / 2.0 {
                continue;
            }
            let wi = ft.witness[i] as usize;
            assert!(seeds[wi], "witness of cell {i} is not a seed");
            let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
            let s = [wi % nx, (wi / nx) % ny, wi / (nx * ny)];
            let d2: i64 = (0..3)
                .map(|a| {
                    let d = c[a] as i64 - s[a] as i64;
                    d * d
                })
                .sum();
            assert_eq!(d2 as f64, ft.dist2[i], "witness distance mismatch at {i}");
        }
    }
}
