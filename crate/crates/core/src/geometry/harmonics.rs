//! Real spherical harmonics for star-shaped boundary perturbations.
//!
//! Orthonormal convention on the unit sphere:
//!   Y_{l,0}  = K(l,0) P_l(cos t)
//!   Y_{l,m}  = sqrt(2) K(l,m) P_l^m(cos t) cos(m p),  m > 0
//!   Y_{l,-m} = sqrt(2) K(l,m) P_l^m(cos t) sin(m p),  m > 0
//! with K(l,m) = sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!) and Condon-Shortley
//! phase included in P_l^m.

use std::f64::consts::PI;

/// Associated Legendre P_l^m(x) for m >= 0, |x| <= 1.
fn assoc_legendre(l: u32, m: u32, x: f64) -> f64 {
    debug_assert!(m <= l);
    // P_m^m by the standard closed form, then upward recurrence in l.
    let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= -fact * somx2;
        fact += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * (2.0 * m as f64 + 1.0) * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        let llf = ll as f64;
        let mf = m as f64;
        pll = ((2.0 * llf - 1.0) * x * pmmp1 - (llf + mf - 1.0) * pmm) / (llf - mf);
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

fn norm_k(l: u32, m: u32) -> f64 {
    let mut ratio = 1.0; // (l-m)! / (l+m)!
    for i in (l - m + 1)..=(l + m) {
        ratio /= i as f64;
    }
    ((2.0 * l as f64 + 1.0) / (4.0 * PI) * ratio).sqrt()
}

/// Real spherical harmonic Y_{l,m}(theta, phi); theta is the polar angle.
pub fn real_sph(l: u32, m: i32, theta: f64, phi: f64) -> f64 {
    let x = theta.cos();
    let ma = m.unsigned_abs();
    debug_assert!(ma <= l);
    let k = norm_k(l, ma) * assoc_legendre(l, ma, x);
    if m == 0 {
        k
    } else if m > 0 {
        std::f64::consts::SQRT_2 * k * (ma as f64 * phi).cos()
    } else {
        std::f64::consts::SQRT_2 * k * (ma as f64 * phi).sin()
    }
}
