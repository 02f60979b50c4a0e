//! Small 2D geometric primitives shared across the crate.

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Signed area of a polygon given by its vertices in order (positive for CCW).
pub fn polygon_signed_area(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

/// Centroid of a (non-self-intersecting) polygon.
pub fn polygon_centroid(pts: &[Vec2]) -> Vec2 {
    let n = pts.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut area = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let cross = a.x * b.y - b.x * a.y;
        area += cross;
        cx += (a.x + b.x) * cross;
        cy += (a.y + b.y) * cross;
    }
    area *= 0.5;
    Vec2::new(cx / (6.0 * area), cy / (6.0 * area))
}

/// Two-point Gauss-Legendre rule on the segment [a, b].
///
/// Exact for polynomials of degree three along the segment; this is the
/// smallest point set that integrates quadratics exactly.
pub fn gauss2_on_segment(a: Vec2, b: Vec2) -> [(Vec2, f64); 2] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let len = (b - a).norm();
    let t = 1.0 / 3.0f64.sqrt();
    [(mid - half * t, 0.5 * len), (mid + half * t, 0.5 * len)]
}

/// Reflect a point across the line through `p` with direction `dir`.
pub fn reflect_across_line(x: Vec2, p: Vec2, dir: Vec2) -> Vec2 {
    let d = dir / dir.norm();
    let v = x - p;
    let proj = d * v.dot(&d);
    p + 2.0 * proj - v
}

/// Outward unit normal of a CCW-traversed polygon edge from `a` to `b`.
pub fn outward_normal_ccw(a: Vec2, b: Vec2) -> Vec2 {
    let t = b - a;
    Vec2::new(t.y, -t.x) / t.norm()
}

/// Outer product a bᵀ: row i of the result is a_i * b.
pub fn outer(a: Vec2, b: Vec2) -> Mat2 {
    Mat2::new(a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_square_area_and_centroid() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ];
        assert_relative_eq!(polygon_signed_area(&pts), 1.0);
        let c = polygon_centroid(&pts);
        assert_relative_eq!(c.x, 0.5);
        assert_relative_eq!(c.y, 0.5);
    }

    #[test]
    fn gauss2_matches_expected_points() {
        // Subface from (0,0) to (0.5,0): points at x = 0.25 +- 0.25/sqrt(3), weights 0.25.
        let pts = gauss2_on_segment(Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0));
        let t = 0.25 / 3.0f64.sqrt();
        assert_relative_eq!(pts[0].0.x, 0.25 - t, epsilon = 1e-15);
        assert_relative_eq!(pts[1].0.x, 0.25 + t, epsilon = 1e-15);
        assert_relative_eq!(pts[0].1, 0.25);
        assert_relative_eq!(pts[1].1, 0.25);
    }

    #[test]
    fn gauss2_exact_for_quadratics() {
        // Simpson's rule is exact for cubics and serves as the independent check.
        let a = Vec2::new(0.2, -0.1);
        let b = Vec2::new(1.3, 0.7);
        let polys: [&dyn Fn(Vec2) -> f64; 6] = [
            &|_| 1.0,
            &|p| p.x,
            &|p| p.y,
            &|p| p.x * p.x,
            &|p| p.x * p.y,
            &|p| p.y * p.y,
        ];
        let len = (b - a).norm();
        for poly in polys {
            let q: f64 = gauss2_on_segment(a, b).iter().map(|(x, w)| w * poly(*x)).sum();
            let mid = 0.5 * (a + b);
            let simpson = len / 6.0 * (poly(a) + 4.0 * poly(mid) + poly(b));
            assert_relative_eq!(q, simpson, max_relative = 1e-13);
        }
    }

    #[test]
    fn reflection_is_involutive() {
        let p = Vec2::new(0.3, 0.4);
        let dir = Vec2::new(1.0, 2.0);
        let x = Vec2::new(-0.7, 1.1);
        let r = reflect_across_line(x, p, dir);
        let rr = reflect_across_line(r, p, dir);
        assert_relative_eq!((rr - x).norm(), 0.0, epsilon = 1e-14);
    }
}
