//! Domain descriptions, voxelization, and metric estimators.

pub mod ballcond;
pub mod edt;
pub mod grid;
pub(crate) mod harmonics;
pub mod hausdorff;
pub mod normalize;
pub mod spec;
pub mod voxel;

use std::f64::consts::PI;

/// Radius of the ball with the given volume.
pub fn equal_volume_ball_radius(volume: f64) -> f64 {
    (3.0 * volume / (4.0 * PI)).cbrt()
}

/// Volume of the ball with the given radius.
pub fn ball_volume(radius: f64) -> f64 {
    4.0 / 3.0 * PI * radius.powi(3)
}

/// Lower volume bound for a connected domain of the given diameter that
/// satisfies a uniform ball condition with radius `r0`: a long domain must
/// contain many disjoint balls of radius `r0 / 2`. The count grows with the
/// decimal order of magnitude of `diameter / r0`, and is at least one as soon
/// as the domain contains a single such ball.
pub fn packing_volume_bound(diameter: f64, r0: f64) -> f64 {
    assert!(r0 > 0.0, "packing bound needs a positive ball radius");
    assert!(diameter >= 0.0, "diameter must be nonnegative");
    let n = if diameter <= r0 {
        1.0
    } else {
        ((diameter / r0).log10().floor()).max(1.0)
    };
    n * ball_volume(r0 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_volume_radius_round_trips() {
        let r = equal_volume_ball_radius(1.0);
        assert!((r - 0.62035049089940009).abs() < 1e-15);
        assert!((ball_volume(r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn packing_bound_thousandfold_diameter() {
        // diameter = 1000 r0 forces three separated interior balls.
        let b = packing_volume_bound(1000.0, 1.0);
        assert!((b - 3.0 * ball_volume(0.5)).abs() < 1e-12);
        assert!((b - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn packing_bound_floors_at_one_ball() {
        let one = ball_volume(0.5);
        assert!((packing_volume_bound(9.0, 1.0) - one).abs() < 1e-12);
        assert!((packing_volume_bound(10.0, 1.0) - one).abs() < 1e-12);
        assert!((packing_volume_bound(0.5, 1.0) - one).abs() < 1e-12);
        // The count steps exactly at powers of ten.
        assert!((packing_volume_bound(101.0, 1.0) - 2.0 * one).abs() < 1e-12);
    }
}
