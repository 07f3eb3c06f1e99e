//! Bounded domains in one and two dimensions.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A bounded open set: an interval, an axis-aligned rectangle or a disk.
///
/// Lengths are in abstract units. Rectangles and disks carry the offset of
/// their center from the origin, which matters for the star-shapedness test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval {
        a: f64,
        b: f64,
    },
    Rectangle {
        width: f64,
        height: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    Disk {
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
    },
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Domain::Interval { a, b }.validated()
    }

    pub fn rectangle(width: f64, height: f64, center: [f64; 2]) -> Result<Self> {
        Domain::Rectangle { width, height, center }.validated()
    }

    pub fn disk(radius: f64, center: [f64; 2]) -> Result<Self> {
        Domain::Disk { radius, center }.validated()
    }

    /// Checks that every geometry parameter is finite and strictly positive.
    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            Domain::Interval { a, b } => a.is_finite() && b.is_finite() && b > a,
            Domain::Rectangle { width, height, center } => {
                width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0 && center.iter().all(|c| c.is_finite())
            }
            Domain::Disk { radius, center } => radius.is_finite() && radius > 0.0 && center.iter().all(|c| c.is_finite()),
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::Config(format!("degenerate domain {self:?}")))
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            Domain::Interval { a, b } => [0.5 * (a + b), 0.0],
            Domain::Rectangle { center, .. } | Domain::Disk { center, .. } => center,
        }
    }

    /// Lower and upper corners of the bounding box (second axis unused in 1D).
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Domain::Interval { a, b } => ([a, 0.0], [b, 0.0]),
            Domain::Rectangle { width, height, center } => {
                ([center[0] - 0.5 * width, center[1] - 0.5 * height], [center[0] + 0.5 * width, center[1] + 0.5 * height])
            }
            Domain::Disk { radius, center } => ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius]),
        }
    }

    /// Strict membership in the open set.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        self.signed_distance(x) > 0.0
    }

    /// Euclidean distance to the boundary for points inside, negative outside.
    pub fn signed_distance(&self, x: [f64; 2]) -> f64 {
        match *self {
            Domain::Interval { a, b } => (x[0] - a).min(b - x[0]),
            Domain::Rectangle { width, height, center } => {
                let dx = 0.5 * width - (x[0] - center[0]).abs();
                let dy = 0.5 * height - (x[1] - center[1]).abs();
                if dx >= 0.0 && dy >= 0.0 {
                    dx.min(dy)
                } else {
                    let ox = (-dx).max(0.0);
                    let oy = (-dy).max(0.0);
                    -(ox * ox + oy * oy).sqrt()
                }
            }
            Domain::Disk { radius, center } => radius - (x[0] - center[0]).hypot(x[1] - center[1]),
        }
    }

    /// Lebesgue measure |Ω|.
    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { width, height, .. } => width * height,
            Domain::Disk { radius, .. } => PI * radius * radius,
        }
    }

    /// Surface measure |∂Ω|; the two endpoints of an interval count one each.
    pub fn perimeter(&self) -> f64 {
        match *self {
            Domain::Interval { .. } => 2.0,
            Domain::Rectangle { width, height, .. } => 2.0 * (width + height),
            Domain::Disk { radius, .. } => 2.0 * PI * radius,
        }
    }

    /// True iff x·ν(x) > 0 at every boundary point. For the three convex kinds
    /// this holds exactly when the origin lies in the interior.
    pub fn is_star_shaped_wrt_origin(&self) -> bool {
        self.contains([0.0, 0.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_geometry() {
        assert!(Domain::interval(1.0, 1.0).is_err());
        assert!(Domain::rectangle(0.0, 1.0, [0.0, 0.0]).is_err());
        assert!(Domain::disk(-1.0, [0.0, 0.0]).is_err());
        assert!(Domain::disk(f64::NAN, [0.0, 0.0]).is_err());
    }

    #[test]
    fn distances_are_exact() {
        let d = Domain::interval(-1.0, 1.0).unwrap();
        assert_eq!(d.signed_distance([0.25, 0.0]), 0.75);
        let r = Domain::rectangle(2.0, 1.0, [0.0, 0.0]).unwrap();
        assert_eq!(r.signed_distance([0.9, 0.0]), 0.09999999999999998);
        assert!((r.signed_distance([1.3, 0.9]) + (0.3f64.hypot(0.4))).abs() < 1e-15);
        let c = Domain::disk(1.0, [0.5, 0.0]).unwrap();
        assert!((c.signed_distance([0.5, 0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn star_shapedness() {
        assert!(Domain::interval(-1.0, 2.0).unwrap().is_star_shaped_wrt_origin());
        assert!(!Domain::interval(0.5, 2.0).unwrap().is_star_shaped_wrt_origin());
        assert!(Domain::disk(1.0, [0.3, 0.3]).unwrap().is_star_shaped_wrt_origin());
        assert!(!Domain::disk(1.0, [1.0, 0.0]).unwrap().is_star_shaped_wrt_origin());
        // origin on the boundary or outside: x·ν ≤ 0 somewhere
        assert!(!Domain::rectangle(1.0, 1.0, [0.5, 0.0]).unwrap().is_star_shaped_wrt_origin());
        assert!(!Domain::rectangle(1.0, 1.0, [2.0, 2.0]).unwrap().is_star_shaped_wrt_origin());
    }

    #[test]
    fn serde_tagged_form() {
        let d: Domain = serde_json::from_str(r#"{"kind":"disk","radius":2.0}"#).unwrap();
        assert_eq!(d, Domain::Disk { radius: 2.0, center: [0.0, 0.0] });
    }
}
