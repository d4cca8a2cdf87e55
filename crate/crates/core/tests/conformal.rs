use metalattice::geometry::conformal_check;
use metalattice::lattice::triangle_gradient;
use metalattice::linalg::{Mat2, Vec2};

/// Piecewise-linear interpolant of `z^2 / 2` on grid triangles inside the unit disk.
fn half_square_field(n: usize) -> Vec<(f64, Mat2)> {
    let h = 2.0 / n as f64;
    let f = |p: Vec2| Vec2::new(0.5 * (p.x * p.x - p.y * p.y), p.x * p.y);
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let p = |a: usize, b: usize| Vec2::new(-1.0 + a as f64 * h, -1.0 + b as f64 * h);
            let quad = [p(i, j), p(i + 1, j), p(i + 1, j + 1), p(i, j + 1)];
            if quad.iter().any(|q| q.norm() > 1.0) {
                continue;
            }
            for t in [[quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]]] {
                let area = 0.5 * (t[1] - t[0]).cross(t[2] - t[0]);
                out.push((area, triangle_gradient(t, t.map(f))));
            }
        }
    }
    out
}

#[test]
fn squared_map_on_disk_converges_linearly() {
    let mut last = f64::INFINITY;
    for n in [16, 32, 64, 128] {
        let h = 2.0 / n as f64;
        let r = conformal_check(&half_square_field(n), 1e-12).unwrap();
        assert!(r.cr_residual < 2.0 * h, "n = {n}: {}", r.cr_residual);
        assert!(r.max_factor <= 1.0 + h, "n = {n}: {}", r.max_factor);
        if last.is_finite() {
            let rate = last / r.cr_residual;
            assert!(rate > 1.7 && rate < 2.3, "rate {rate}");
        }
        last = r.cr_residual;
    }
}

#[test]
fn linear_maps() {
    let r = conformal_check(&[(1.0, Mat2::rotation(0.7) * 0.5)], 1e-12).unwrap();
    assert!(r.cr_residual < 1e-15);
    assert!((r.max_factor - 0.5).abs() < 1e-15);
    let anti = conformal_check(&[(1.0, Mat2::diag(1.0, -1.0))], 1e-12).unwrap();
    assert!((anti.cr_residual - 2.0).abs() < 1e-15);
    assert!(!anti.orientation_preserving);
}
