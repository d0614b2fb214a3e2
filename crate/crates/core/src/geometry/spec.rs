//! Closed-form domain descriptions.
//!
//! A `DomainSpec` is the analytic side of the pipeline: it owns exact
//! inside tests, volumes, and surface samplers, and it serializes to a small
//! key-value text document so optimizer results and CLI inputs round-trip.

use crate::error::{Error, Result};
use crate::geometry::harmonics::real_sph;
use crate::io::keyval::KeyVal;
use crate::math::{self, V3};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub enum DomainSpec {
    Ball {
        center: V3,
        radius: f64,
    },
    /// Semi-axes sorted `a >= b >= c`; `rotation` holds extrinsic Euler
    /// angles applied as Rz*Ry*Rx.
    Ellipsoid {
        center: V3,
        semi_axes: V3,
        rotation: V3,
    },
    /// Solid torus around the z-axis through `center`.
    Torus {
        center: V3,
        major_radius: f64,
        minor_radius: f64,
    },
    /// Radial graph r(dir) = base_radius * (1 + sum c_lm Y_lm(dir)).
    StarShaped {
        center: V3,
        base_radius: f64,
        coeffs: Vec<(u32, i32, f64)>,
    },
    Union(Vec<DomainSpec>),
}

impl DomainSpec {
    pub fn ball(center: V3, radius: f64) -> DomainSpec {
        DomainSpec::Ball { center, radius }
    }

    pub fn ellipsoid(center: V3, semi_axes: V3) -> DomainSpec {
        DomainSpec::Ellipsoid {
            center,
            semi_axes,
            rotation: [0.0; 3],
        }
    }

    pub fn torus(center: V3, major_radius: f64, minor_radius: f64) -> DomainSpec {
        DomainSpec::Torus {
            center,
            major_radius,
            minor_radius,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DomainSpec::Ball { .. } => "ball",
            DomainSpec::Ellipsoid { .. } => "ellipsoid",
            DomainSpec::Torus { .. } => "torus",
            DomainSpec::StarShaped { .. } => "star",
            DomainSpec::Union(_) => "union",
        }
    }

    /// Structural validity: positive sizes, ordered semi-axes, positive
    /// star radius over a dense angular sample, pairwise disjoint closures
    /// for unions.
    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::Ball { radius, .. } => {
                if !radius.is_finite() || *radius <= 0.0 {
                    return Err(Error::InvalidSpec(format!("ball radius {radius} not positive")));
                }
            }
            DomainSpec::Ellipsoid { semi_axes: s, .. } => {
                if s.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                    return Err(Error::InvalidSpec(format!("semi-axes {s:?} not positive")));
                }
                if !(s[0] >= s[1] && s[1] >= s[2]) {
                    return Err(Error::InvalidSpec(format!(
                        "semi-axes {s:?} must be sorted descending"
                    )));
                }
            }
            DomainSpec::Torus {
                major_radius: rmaj,
                minor_radius: rmin,
                ..
            } => {
                if !(rmin.is_finite() && rmaj.is_finite() && *rmin > 0.0 && rmin < rmaj) {
                    return Err(Error::InvalidSpec(format!(
                        "torus radii (major {rmaj}, minor {rmin}) need 0 < minor < major"
                    )));
                }
            }
            DomainSpec::StarShaped {
                base_radius,
                coeffs,
                ..
            } => {
                if !base_radius.is_finite() || *base_radius <= 0.0 {
                    return Err(Error::InvalidSpec("star base radius not positive".into()));
                }
                for &(l, m, c) in coeffs {
                    if m.unsigned_abs() > l {
                        return Err(Error::InvalidSpec(format!("harmonic index |{m}| > {l}")));
                    }
                    if !c.is_finite() {
                        return Err(Error::InvalidSpec("non-finite coefficient".into()));
                    }
                }
                // Positivity of the radial graph, checked on a sample fine
                // enough for the low harmonic degrees this family allows.
                let min_r = self.star_min_radius();
                if min_r <= 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "perturbed radius reaches {min_r:.3e}; boundary graph must stay positive"
                    )));
                }
            }
            DomainSpec::Union(members) => {
                if members.len() < 2 {
                    return Err(Error::InvalidSpec("union needs at least two members".into()));
                }
                for m in members {
                    if matches!(m, DomainSpec::Union(_)) {
                        return Err(Error::InvalidSpec("nested unions are not supported".into()));
                    }
                    m.validate()?;
                }
                for i in 0..members.len() {
                    for j in (i + 1)..members.len() {
                        let gap = members[i].surface_gap(&members[j]);
                        if gap <= 0.0 {
                            return Err(Error::InvalidSpec(format!(
                                "union members {i} and {j} have touching or overlapping closures"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn star_min_radius(&self) -> f64 {
        if let DomainSpec::StarShaped {
            base_radius,
            coeffs,
            ..
        } = self
        {
            let mut min_r = f64::INFINITY;
            let nt = 96;
            let np = 192;
            for it in 0..=nt {
                let th = it as f64 * PI / nt as f64;
                for ip in 0..np {
                    let ph = ip as f64 * 2.0 * PI / np as f64;
                    let mut r = 1.0;
                    for &(l, m, c) in coeffs {
                        r += c * real_sph(l, m, th, ph);
                    }
                    min_r = min_r.min(base_radius * r);
                }
            }
            min_r
        } else {
            f64::INFINITY
        }
    }

    /// Exact inside test (open domain).
    pub fn contains(&self, p: V3) -> bool {
        match self {
            DomainSpec::Ball { center, radius } => {
                let d = math::sub(p, *center);
                math::dot(d, d) < radius * radius
            }
            DomainSpec::Ellipsoid {
                center,
                semi_axes,
                rotation,
            } => {
                let r = math::rotation_zyx(rotation[0], rotation[1], rotation[2]);
                let u = math::mat_t_vec(&r, math::sub(p, *center));
                let q = [u[0] / semi_axes[0], u[1] / semi_axes[1], u[2] / semi_axes[2]];
                math::dot(q, q) < 1.0
            }
            DomainSpec::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let d = math::sub(p, *center);
                let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
                let q = rho - major_radius;
                q * q + d[2] * d[2] < minor_radius * minor_radius
            }
            DomainSpec::StarShaped {
                center,
                base_radius,
                coeffs,
            } => {
                let d = math::sub(p, *center);
                let r = math::norm(d);
                if r == 0.0 {
                    return true;
                }
                let th = (d[2] / r).clamp(-1.0, 1.0).acos();
                let ph = d[1].atan2(d[0]);
                let mut g = 1.0;
                for &(l, m, c) in coeffs {
                    g += c * real_sph(l, m, th, ph);
                }
                r < base_radius * g
            }
            DomainSpec::Union(members) => members.iter().any(|m| m.contains(p)),
        }
    }

    /// Analytic volume; star-shaped volumes use the radial-graph integral
    /// evaluated by quadrature (converged far below rasterization error).
    pub fn volume(&self) -> f64 {
        match self {
            DomainSpec::Ball { radius, .. } => 4.0 / 3.0 * PI * radius.powi(3),
            DomainSpec::Ellipsoid { semi_axes: s, .. } => 4.0 / 3.0 * PI * s[0] * s[1] * s[2],
            DomainSpec::Torus {
                major_radius,
                minor_radius,
                ..
            } => 2.0 * PI * PI * major_radius * minor_radius * minor_radius,
            DomainSpec::StarShaped {
                base_radius,
                coeffs,
                ..
            } => {
                // V = 1/3 * Int r(th,ph)^3 sin(th) dth dph
                let nt = 256;
                let np = 256;
                let mut v = 0.0;
                for it in 0..nt {
                    let th = (it as f64 + 0.5) * PI / nt as f64;
                    let w = th.sin() * (PI / nt as f64) * (2.0 * PI / np as f64) / 3.0;
                    for ip in 0..np {
                        let ph = (ip as f64 + 0.5) * 2.0 * PI / np as f64;
                        let mut g = 1.0;
                        for &(l, m, c) in coeffs {
                            g += c * real_sph(l, m, th, ph);
                        }
                        v += w * (base_radius * g).powi(3);
                    }
                }
                v
            }
            DomainSpec::Union(members) => members.iter().map(|m| m.volume()).sum(),
        }
    }

    /// Axis-aligned bounding box (conservative for rotated/star shapes).
    pub fn bounding_box(&self) -> (V3, V3) {
        match self {
            DomainSpec::Ball { center, radius } => (
                math::sub(*center, [*radius; 3]),
                math::add(*center, [*radius; 3]),
            ),
            DomainSpec::Ellipsoid {
                center, semi_axes, ..
            } => {
                // Rotation can only shrink per-axis extent below the largest
                // semi-axis, so the enclosing ball box is safe.
                let r = semi_axes[0];
                (math::sub(*center, [r; 3]), math::add(*center, [r; 3]))
            }
            DomainSpec::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let re = major_radius + minor_radius;
                (
                    math::sub(*center, [re, re, *minor_radius]),
                    math::add(*center, [re, re, *minor_radius]),
                )
            }
            DomainSpec::StarShaped {
                center,
                base_radius,
                coeffs,
            } => {
                let mut amp = 0.0;
                for &(l, m, c) in coeffs {
                    // |Y_lm| <= K sqrt(2) ... bound by value at a dense
                    // sample plus slack; cheap and safe for low degrees.
                    let _ = (l, m);
                    amp += c.abs();
                }
                let r = base_radius * (1.0 + amp);
                (math::sub(*center, [r; 3]), math::add(*center, [r; 3]))
            }
            DomainSpec::Union(members) => {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for m in members {
                    let (l, h) = m.bounding_box();
                    for a in 0..3 {
                        lo[a] = lo[a].min(l[a]);
                        hi[a] = hi[a].max(h[a]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Reference point the shape is described around; unions use the
    /// volume-weighted centroid of member reference points.
    pub fn reference_center(&self) -> V3 {
        match self {
            DomainSpec::Ball { center, .. }
            | DomainSpec::Ellipsoid { center, .. }
            | DomainSpec::Torus { center, .. }
            | DomainSpec::StarShaped { center, .. } => *center,
            DomainSpec::Union(members) => {
                let mut c = [0.0; 3];
                let mut vtot = 0.0;
                for m in members {
                    let v = m.volume();
                    c = math::add(c, math::scale(m.reference_center(), v));
                    vtot += v;
                }
                math::scale(c, 1.0 / vtot)
            }
        }
    }

    /// Uniform dilation by `s` about `about`; member centers scale with the
    /// dilation so unions stay similar to themselves.
    pub fn scaled(&self, s: f64, about: V3) -> DomainSpec {
        let move_pt = |p: V3| math::add(about, math::scale(math::sub(p, about), s));
        match self {
            DomainSpec::Ball { center, radius } => DomainSpec::Ball {
                center: move_pt(*center),
                radius: radius * s,
            },
            DomainSpec::Ellipsoid {
                center,
                semi_axes,
                rotation,
            } => DomainSpec::Ellipsoid {
                center: move_pt(*center),
                semi_axes: math::scale(*semi_axes, s),
                rotation: *rotation,
            },
            DomainSpec::Torus {
                center,
                major_radius,
                minor_radius,
            } => DomainSpec::Torus {
                center: move_pt(*center),
                major_radius: major_radius * s,
                minor_radius: minor_radius * s,
            },
            DomainSpec::StarShaped {
                center,
                base_radius,
                coeffs,
            } => DomainSpec::StarShaped {
                center: move_pt(*center),
                base_radius: base_radius * s,
                coeffs: coeffs.clone(),
            },
            DomainSpec::Union(members) => {
                DomainSpec::Union(members.iter().map(|m| m.scaled(s, about)).collect())
            }
        }
    }

    pub fn translated(&self, d: V3) -> DomainSpec {
        match self {
            DomainSpec::Ball { center, radius } => DomainSpec::Ball {
                center: math::add(*center, d),
                radius: *radius,
            },
            DomainSpec::Ellipsoid {
                center,
                semi_axes,
                rotation,
            } => DomainSpec::Ellipsoid {
                center: math::add(*center, d),
                semi_axes: *semi_axes,
                rotation: *rotation,
            },
            DomainSpec::Torus {
                center,
                major_radius,
                minor_radius,
            } => DomainSpec::Torus {
                center: math::add(*center, d),
                major_radius: *major_radius,
                minor_radius: *minor_radius,
            },
            DomainSpec::StarShaped {
                center,
                base_radius,
                coeffs,
            } => DomainSpec::StarShaped {
                center: math::add(*center, d),
                base_radius: *base_radius,
                coeffs: coeffs.clone(),
            },
            DomainSpec::Union(members) => {
                DomainSpec::Union(members.iter().map(|m| m.translated(d)).collect())
            }
        }
    }

    /// Points on the boundary surface, used for disjointness validation.
    pub fn sample_surface(&self, n_per_member: usize) -> Vec<V3> {
        match self {
            DomainSpec::Ball { center, radius } => fibonacci_sphere(n_per_member)
                .into_iter()
                .map(|u| math::add(*center, math::scale(u, *radius)))
                .collect(),
            DomainSpec::Ellipsoid {
                center,
                semi_axes,
                rotation,
            } => {
                let r = math::rotation_zyx(rotation[0], rotation[1], rotation[2]);
                fibonacci_sphere(n_per_member)
                    .into_iter()
                    .map(|u| {
                        let v = [u[0] * semi_axes[0], u[1] * semi_axes[1], u[2] * semi_axes[2]];
                        math::add(*center, math::mat_vec(&r, v))
                    })
                    .collect()
            }
            DomainSpec::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let k = (n_per_member as f64).sqrt().ceil() as usize;
                let mut pts = Vec::with_capacity(k * k);
                for iu in 0..k {
                    let u = iu as f64 * 2.0 * PI / k as f64;
                    for iv in 0..k {
                        let v = iv as f64 * 2.0 * PI / k as f64;
                        let rho = major_radius + minor_radius * v.cos();
                        pts.push(math::add(
                            *center,
                            [rho * u.cos(), rho * u.sin(), minor_radius * v.sin()],
                        ));
                    }
                }
                pts
            }
            DomainSpec::StarShaped {
                center,
                base_radius,
                coeffs,
            } => fibonacci_sphere(n_per_member)
                .into_iter()
                .map(|u| {
                    let th = u[2].clamp(-1.0, 1.0).acos();
                    let ph = u[1].atan2(u[0]);
                    let mut g = 1.0;
                    for &(l, m, c) in coeffs {
                        g += c * real_sph(l, m, th, ph);
                    }
                    math::add(*center, math::scale(u, base_radius * g))
                })
                .collect(),
            DomainSpec::Union(members) => {
                let mut pts = Vec::new();
                for m in members {
                    pts.extend(m.sample_surface(n_per_member));
                }
                pts
            }
        }
    }

    /// Lower bound on the distance between the closed surfaces of two
    /// non-union specs, positive only if the closures are disjoint.
    /// Ball pairs are exact; other pairs fall back to bounding-sphere
    /// separation and, when inconclusive, sampled surface distances with
    /// inside-checks to catch containment overlap.
    fn surface_gap(&self, other: &DomainSpec) -> f64 {
        if let (DomainSpec::Ball { center: c1, radius: r1 }, DomainSpec::Ball { center: c2, radius: r2 }) =
            (self, other)
        {
            return math::norm(math::sub(*c1, *c2)) - r1 - r2;
        }
        let (er1, ec1) = self.enclosing_sphere();
        let (er2, ec2) = other.enclosing_sphere();
        let bound = math::norm(math::sub(ec1, ec2)) - er1 - er2;
        if bound > 0.0 {
            return bound;
        }
        let s1 = self.sample_surface(600);
        let s2 = other.sample_surface(600);
        // Overlap or containment shows up as a sampled surface point of one
        // shape landing inside the other.
        for p in &s1 {
            if other.contains(*p) {
                return -1.0;
            }
        }
        for p in &s2 {
            if self.contains(*p) {
                return -1.0;
            }
        }
        let mut min_d2 = f64::INFINITY;
        for p in &s1 {
            for q in &s2 {
                let d = math::sub(*p, *q);
                min_d2 = min_d2.min(math::dot(d, d));
            }
        }
        min_d2.sqrt()
    }

    fn enclosing_sphere(&self) -> (f64, V3) {
        match self {
            DomainSpec::Ball { center, radius } => (*radius, *center),
            DomainSpec::Ellipsoid {
                center, semi_axes, ..
            } => (semi_axes[0], *center),
            DomainSpec::Torus {
                center,
                major_radius,
                minor_radius,
            } => (major_radius + minor_radius, *center),
            DomainSpec::StarShaped { center, .. } => {
                let (lo, hi) = self.bounding_box();
                (0.5 * math::norm(math::sub(hi, lo)), *center)
            }
            DomainSpec::Union(members) => {
                let c = self.reference_center();
                let mut r: f64 = 0.0;
                for m in members {
                    let (mr, mc) = m.enclosing_sphere();
                    r = r.max(math::norm(math::sub(mc, c)) + mr);
                }
                (r, c)
            }
        }
    }

    // ---- text serialization ----

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s, "");
        s
    }

    fn write_text(&self, out: &mut String, prefix: &str) {
        use std::fmt::Write;
        let _ = writeln!(out, "{prefix}kind = {}", self.kind_name());
        match self {
            DomainSpec::Ball { center, radius } => {
                let _ = writeln!(out, "{prefix}center = {} {} {}", center[0], center[1], center[2]);
                let _ = writeln!(out, "{prefix}radius = {radius}");
            }
            DomainSpec::Ellipsoid {
                center,
                semi_axes,
                rotation,
            } => {
                let _ = writeln!(out, "{prefix}center = {} {} {}", center[0], center[1], center[2]);
                let _ = writeln!(
                    out,
                    "{prefix}semi_axes = {} {} {}",
                    semi_axes[0], semi_axes[1], semi_axes[2]
                );
                if rotation.iter().any(|r| *r != 0.0) {
                    let _ = writeln!(
                        out,
                        "{prefix}rotation = {} {} {}",
                        rotation[0], rotation[1], rotation[2]
                    );
                }
            }
            DomainSpec::Torus {
                center,
                major_radius,
                minor_radius,
            } => {
                let _ = writeln!(out, "{prefix}center = {} {} {}", center[0], center[1], center[2]);
                let _ = writeln!(out, "{prefix}major_radius = {major_radius}");
                let _ = writeln!(out, "{prefix}minor_radius = {minor_radius}");
            }
            DomainSpec::StarShaped {
                center,
                base_radius,
                coeffs,
            } => {
                let _ = writeln!(out, "{prefix}center = {} {} {}", center[0], center[1], center[2]);
                let _ = writeln!(out, "{prefix}base_radius = {base_radius}");
                if !coeffs.is_empty() {
                    let list: Vec<String> = coeffs
                        .iter()
                        .map(|(l, m, c)| format!("{l},{m},{c}"))
                        .collect();
                    let _ = writeln!(out, "{prefix}coeffs = {}", list.join(" "));
                }
            }
            DomainSpec::Union(members) => {
                let _ = writeln!(out, "{prefix}members = {}", members.len());
                for (i, m) in members.iter().enumerate() {
                    m.write_text(out, &format!("{prefix}member.{i}."));
                }
            }
        }
    }

    pub fn parse(text: &str) -> Result<DomainSpec> {
        let kv = KeyVal::parse(text)?;
        let spec = Self::from_keyval(&kv, "")?;
        kv.check_consumed()?;
        spec.validate()?;
        Ok(spec)
    }

    fn from_keyval(kv: &KeyVal, prefix: &str) -> Result<DomainSpec> {
        let kind = kv.take_str(&format!("{prefix}kind"))?;
        let key = |name: &str| format!("{prefix}{name}");
        match kind.as_str() {
            "ball" => Ok(DomainSpec::Ball {
                center: kv.take_vec3(&key("center"))?,
                radius: kv.take_f64(&key("radius"))?,
            }),
            "ellipsoid" => Ok(DomainSpec::Ellipsoid {
                center: kv.take_vec3(&key("center"))?,
                semi_axes: kv.take_vec3(&key("semi_axes"))?,
                rotation: kv.take_vec3_or(&key("rotation"), [0.0; 3])?,
            }),
            "torus" => Ok(DomainSpec::Torus {
                center: kv.take_vec3(&key("center"))?,
                major_radius: kv.take_f64(&key("major_radius"))?,
                minor_radius: kv.take_f64(&key("minor_radius"))?,
            }),
            "star" => {
                let coeffs_raw = kv.take_str_or(&key("coeffs"), String::new())?;
                let mut coeffs = Vec::new();
                for tok in coeffs_raw.split_whitespace() {
                    let parts: Vec<&str> = tok.split(',').collect();
                    if parts.len() != 3 {
                        return Err(Error::InvalidSpec(format!(
                            "coefficient entry '{tok}' must be l,m,value"
                        )));
                    }
                    let l: u32 = parts[0]
                        .parse()
                        .map_err(|_| Error::InvalidSpec(format!("bad degree in '{tok}'")))?;
                    let m: i32 = parts[1]
                        .parse()
                        .map_err(|_| Error::InvalidSpec(format!("bad order in '{tok}'")))?;
                    let c: f64 = parts[2]
                        .parse()
                        .map_err(|_| Error::InvalidSpec(format!("bad value in '{tok}'")))?;
                    coeffs.push((l, m, c));
                }
                Ok(DomainSpec::StarShaped {
                    center: kv.take_vec3(&key("center"))?,
                    base_radius: kv.take_f64(&key("base_radius"))?,
                    coeffs,
                })
            }
            "union" => {
                let n: usize = kv.take_f64(&key("members"))? as usize;
                let mut members = Vec::with_capacity(n);
                for i in 0..n {
                    members.push(Self::from_keyval(kv, &format!("{prefix}member.{i}."))?);
                }
                Ok(DomainSpec::Union(members))
            }
            other => Err(Error::InvalidSpec(format!("unknown kind '{other}'"))),
        }
    }
}

/// Nearly uniform unit-sphere sample (Fibonacci lattice).
fn fibonacci_sphere(n: usize) -> Vec<V3> {
    let n = n.max(8);
    let phi = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let a = phi * i as f64;
            [r * a.cos(), r * a.sin(), z]
        })
        .collect()
}
