//! Small planar geometry helpers.

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min, max }
    }

    /// `[0, width] × [0, height]`
    pub fn from_size(width: f64, height: f64) -> Self {
        Self::new([0.0, 0.0], [width, height])
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p[0] >= self.min[0] - tol && p[0] <= self.max[0] + tol && p[1] >= self.min[1] - tol && p[1] <= self.max[1] + tol
    }

    /// Clips the segment `a-b` to the rectangle (Liang-Barsky). Returns `None`
    /// when nothing of the segment lies inside.
    pub fn clip_segment(&self, a: Point, b: Point) -> Option<(Point, Point)> {
        let d = [b[0] - a[0], b[1] - a[1]];
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        let checks = [
            (-d[0], a[0] - self.min[0]),
            (d[0], self.max[0] - a[0]),
            (-d[1], a[1] - self.min[1]),
            (d[1], self.max[1] - a[1]),
        ];
        for (p, q) in checks {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        if t0 > t1 {
            return None;
        }
        let at = |t: f64| {
            let p = [a[0] + t * d[0], a[1] + t * d[1]];
            [p[0].clamp(self.min[0], self.max[0]), p[1].clamp(self.min[1], self.max[1])]
        };
        Some((at(t0), at(t1)))
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Euclidean distance from `p` to the closed segment `a-b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return distance(p, a);
    }
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    distance(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_projects_and_clamps() {
        assert_eq!(point_segment_distance([0.25, 0.5], [0.0, 0.0], [1.0, 0.0]), 0.5);
        assert_eq!(point_segment_distance([2.0, 0.0], [0.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(point_segment_distance([3.0, 4.0], [0.0, 0.0], [0.0, 0.0]), 5.0);
    }

    #[test]
    fn clipping() {
        let r = Rect::from_size(10.0, 10.0);
        let (a, b) = r.clip_segment([-5.0, 5.0], [15.0, 5.0]).unwrap();
        assert_eq!(a, [0.0, 5.0]);
        assert_eq!(b, [10.0, 5.0]);
        assert!(r.clip_segment([-5.0, -5.0], [-1.0, 20.0]).is_none());
        let (a, b) = r.clip_segment([2.0, 2.0], [3.0, 4.0]).unwrap();
        assert_eq!((a, b), ([2.0, 2.0], [3.0, 4.0]));
    }
}
