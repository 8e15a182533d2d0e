//! Small planar geometry helpers shared across modules.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Axis-aligned square window (center, half side).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center_re: f64,
    pub center_im: f64,
    pub half_side: f64,
}

impl Window {
    pub fn new(center: Complex64, half_side: f64) -> Self {
        Window {
            center_re: center.re,
            center_im: center.im,
            half_side,
        }
    }

    pub fn centered(half_side: f64) -> Self {
        Window::new(Complex64::new(0.0, 0.0), half_side)
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(self.center_re, self.center_im)
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_side * self.half_side
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z.re - self.center_re).abs() <= self.half_side
            && (z.im - self.center_im).abs() <= self.half_side
    }

    /// Lower-left corner.
    pub fn origin(&self) -> Complex64 {
        Complex64::new(
            self.center_re - self.half_side,
            self.center_im - self.half_side,
        )
    }

    /// Radius of the smallest disk centered at the origin of the plane that
    /// contains the window (used to size zero searches).
    pub fn circumradius(&self) -> f64 {
        let cx = self.center_re.abs() + self.half_side;
        let cy = self.center_im.abs() + self.half_side;
        (cx * cx + cy * cy).sqrt()
    }
}

/// Max pairwise distance among a set of points, via convex hull and a
/// quadratic sweep over hull vertices (inputs here are small).
pub fn diameter_of(points: &[Complex64]) -> f64 {
    let hull = convex_hull(points);
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in (i + 1)..hull.len() {
            best = best.max((hull[i] - hull[j]).norm());
        }
    }
    best
}

/// Andrew's monotone chain; returns the points themselves for n ≤ 2.
pub fn convex_hull(points: &[Complex64]) -> Vec<Complex64> {
    let mut pts: Vec<Complex64> = points.to_vec();
    pts.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    pts.dedup_by(|a, b| a == b);
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: Complex64, a: Complex64, b: Complex64| {
        (a.re - o.re) * (b.im - o.im) - (a.im - o.im) * (b.re - o.re)
    };
    let mut lower: Vec<Complex64> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Complex64> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Point-in-polygon by the even-odd rule (polygon as vertex loop).
pub fn point_in_polygon(p: Complex64, poly: &[Complex64]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.im > p.im) != (b.im > p.im) {
            let x = a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re);
            if p.re < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hull_and_diameter() {
        let pts = vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0), c(0.0, 1.0), c(0.5, 0.5)];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!((diameter_of(&pts) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn polygon_membership() {
        let square = vec![c(0.0, 0.0), c(2.0, 0.0), c(2.0, 2.0), c(0.0, 2.0)];
        assert!(point_in_polygon(c(1.0, 1.0), &square));
        assert!(!point_in_polygon(c(3.0, 1.0), &square));
    }

    #[test]
    fn window_basics() {
        let w = Window::centered(6.0);
        assert!(w.contains(c(5.9, -5.9)));
        assert!(!w.contains(c(6.1, 0.0)));
        assert!((w.area() - 144.0).abs() < 1e-12);
        assert!((w.circumradius() - 6.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
