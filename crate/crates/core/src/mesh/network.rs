use std::io::{BufRead, Write};

use crate::geometry::{distance, Point, Rect};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    pub aperture: f64,
}

impl Segment {
    pub fn new(a: Point, b: Point, aperture: f64) -> Self {
        Self { a, b, aperture }
    }

    pub fn length(&self) -> f64 {
        distance(self.a, self.b)
    }
}

/// A set of straight fracture segments with hydraulic apertures.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FractureNetwork {
    segments: Vec<Segment>,
}

impl FractureNetwork {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for (index, s) in segments.iter().enumerate() {
            let finite = s.a.iter().chain(&s.b).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Segment { index, reason: "non-finite endpoint".into() });
            }
            if !(s.aperture > 0.0 && s.aperture.is_finite()) {
                return Err(Error::Segment { index, reason: format!("aperture {} is not positive", s.aperture) });
            }
            if s.length() == 0.0 {
                return Err(Error::Segment { index, reason: "zero length".into() });
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Fails with the first segment that leaves `domain`.
    pub fn check_inside(&self, domain: &Rect, tol: f64) -> Result<()> {
        for (index, s) in self.segments.iter().enumerate() {
            if !domain.contains(s.a, tol) || !domain.contains(s.b, tol) {
                return Err(Error::Segment { index, reason: "endpoint outside the domain".into() });
            }
        }
        Ok(())
    }

    /// Pairwise crossing points `(i, j, point)` with `i < j`.
    pub fn intersections(&self) -> Vec<(usize, usize, Point)> {
        let mut out = Vec::new();
        for i in 0..self.segments.len() {
            for j in i + 1..self.segments.len() {
                if let Some(p) = segment_intersection(&self.segments[i], &self.segments[j]) {
                    out.push((i, j, p));
                }
            }
        }
        out
    }

    /// Reads rows `x1 y1 x2 y2 aperture`; `#` starts a comment line.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut segments = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = text
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: k + 1, message: e.to_string() })?;
            if vals.len() != 5 {
                return Err(Error::Parse { line: k + 1, message: format!("expected 5 values, found {}", vals.len()) });
            }
            segments.push(Segment::new([vals[0], vals[1]], [vals[2], vals[3]], vals[4]));
        }
        Self::new(segments)
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# x1 y1 x2 y2 aperture")?;
        for s in &self.segments {
            writeln!(w, "{} {} {} {} {}", s.a[0], s.a[1], s.b[0], s.b[1], s.aperture)?;
        }
        Ok(())
    }
}

fn segment_intersection(s: &Segment, t: &Segment) -> Option<Point> {
    let r = [s.b[0] - s.a[0], s.b[1] - s.a[1]];
    let q = [t.b[0] - t.a[0], t.b[1] - t.a[1]];
    let denom = r[0] * q[1] - r[1] * q[0];
    if denom == 0.0 {
        return None;
    }
    let w = [t.a[0] - s.a[0], t.a[1] - s.a[1]];
    let u = (w[0] * q[1] - w[1] * q[0]) / denom;
    let v = (w[0] * r[1] - w[1] * r[0]) / denom;
    if (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v) {
        Some([s.a[0] + u * r[0], s.a[1] + u * r[1]])
    } else {
        None
    }
}
