use landslide_core::geodata::{GeoTransform, RasterGrid};
use landslide_core::terrain::{build_dem_stack, slope_aspect, slope_aspect_grid, DEM_STACK_BANDS};

const TOL_DEG: f64 = 1e-6;

/// Samples `f(x, y)` with x east and y north on an `n x n` grid of `cell` metres.
fn plane(n: usize, cell: f64, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..n * n)
        .map(|i| f((i % n) as f64 * cell, -((i / n) as f64) * cell))
        .collect()
}

fn check_interior(n: usize, values: &[f64], cell: f64, slope: f64, aspect: Option<f64>) {
    let sa = slope_aspect(values, n, n, cell, cell).unwrap();
    assert!(sa.slope_deg.iter().all(|s| (0.0..=90.0).contains(s)));
    for r in 1..n - 1 {
        for c in 1..n - 1 {
            let i = r * n + c;
            assert!((sa.slope_deg[i] - slope).abs() < TOL_DEG, "slope {} vs {slope}", sa.slope_deg[i]);
            match aspect {
                None => assert!(sa.aspect_deg[i].is_nan()),
                Some(a) => assert!((sa.aspect_deg[i] - a).abs() < TOL_DEG, "aspect {} vs {a}", sa.aspect_deg[i]),
            }
        }
    }
}

#[test]
fn analytic_planes() {
    let n = 9;
    for cell in [1.0, 10.0, 30.0] {
        check_interior(n, &plane(n, cell, |_, _| 812.5), cell, 0.0, None);
        // Rising east: gradient (1, 0), downslope points west.
        check_interior(n, &plane(n, cell, |x, _| x), cell, 45.0, Some(270.0));
        // Rising south: gradient (0, -1), downslope points north.
        let sa = slope_aspect(&plane(n, cell, |_, y| -y), n, n, cell, cell).unwrap();
        let a = sa.aspect_deg[4 * n + 4];
        assert!(a.min(360.0 - a) < TOL_DEG, "{a}");
        // Rising north-east: |grad| = sqrt(2), downslope south-west.
        let expect = 2f64.sqrt().atan().to_degrees();
        check_interior(n, &plane(n, cell, |x, y| x + y), cell, expect, Some(225.0));
    }
}

#[test]
fn steep_and_gentle_slopes_match_closed_form() {
    let n = 7;
    for (gx, gy) in [(0.05, -0.02), (3.0, 4.0), (-250.0, 10.0)] {
        let values = plane(n, 10.0, |x, y| gx * x + gy * y);
        let slope = f64::hypot(gx, gy).atan().to_degrees();
        let aspect = (-gx).atan2(-gy).to_degrees().rem_euclid(360.0);
        check_interior(n, &values, 10.0, slope, Some(aspect));
    }
}

#[test]
fn grid_entry_point_uses_pixel_size_and_stack_order() {
    let n = 6;
    let t = GeoTransform::new(0.0, 100.0, 10.0, 10.0, 32618).unwrap();
    let values: Vec<f32> = plane(n, 10.0, |x, _| x).iter().map(|&v| v as f32).collect();
    let dem = RasterGrid::from_f32(n, n, values, t, "elevation").unwrap();
    let sa = slope_aspect_grid(&dem).unwrap();
    assert!((sa.slope_deg[2 * n + 2] - 45.0).abs() < TOL_DEG);

    let stack = build_dem_stack(&dem).unwrap();
    assert_eq!(stack.grid().band_names(), DEM_STACK_BANDS.map(String::from));
    assert_eq!(stack.transform(), &t);
    let i = 2 * n + 2;
    assert!((stack.band(0)[i] - 20.0 / 5000.0).abs() < 1e-9);
    assert!((stack.band(1)[i] - 0.5).abs() < 1e-6);
    // Facing west: sin = -1, cos = 0.
    assert!((stack.band(2)[i] + 1.0).abs() < 1e-6);
    assert!(stack.band(3)[i].abs() < 1e-6);
}
