//! Ramer-Douglas-Peucker simplification of 3-D polylines.

use super::MilestoneError;

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Distance from `p` to the infinite line through `a` and `b`, or to `a`
/// when the two coincide.
pub fn line_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub(b, a);
    let len = norm(d);
    let ap = sub(p, a);
    if len == 0.0 {
        return norm(ap);
    }
    let cross = [
        ap[1] * d[2] - ap[2] * d[1],
        ap[2] * d[0] - ap[0] * d[2],
        ap[0] * d[1] - ap[1] * d[0],
    ];
    norm(cross) / len
}

/// Indices of the points kept by RDP with tolerance `epsilon`, ascending.
/// A point is kept when its distance strictly exceeds `epsilon`; among equal
/// maxima the lowest index splits.
pub fn rdp_simplify(points: &[[f64; 3]], epsilon: f64) -> Result<Vec<usize>, MilestoneError> {
    if points.len() < 2 {
        return Err(MilestoneError::TooFewPoints(points.len()));
    }
    if !(epsilon >= 0.0) {
        return Err(MilestoneError::InvalidEpsilon(epsilon));
    }
    let last = points.len() - 1;
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[last] = true;
    let mut stack = vec![(0usize, last)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let mut best = (lo, -1.0f64);
        for i in lo + 1..hi {
            let d = line_distance(points[i], points[lo], points[hi]);
            if d > best.1 {
                best = (i, d);
            }
        }
        if best.1 > epsilon {
            keep[best.0] = true;
            stack.push((lo, best.0));
            stack.push((best.0, hi));
        }
    }
    Ok((0..points.len()).filter(|&i| keep[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_interior_point_is_dropped() {
        let pts = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.0], [1.0, 1.0, 0.0]];
        assert_eq!(rdp_simplify(&pts, 0.01).unwrap(), vec![0, 2]);
    }

    #[test]
    fn corner_survives_small_tolerance_only() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 0.0, 0.0]];
        assert_eq!(rdp_simplify(&pts, 0.5).unwrap(), vec![0, 1, 2]);
        assert_eq!(rdp_simplify(&pts, 1.5).unwrap(), vec![0, 2]);
    }

    #[test]
    fn degenerate_chord_uses_point_distance() {
        let pts = [[0.0, 0.0, 0.0], [0.0, 0.3, 0.4], [0.0, 0.0, 0.0]];
        assert_eq!(line_distance(pts[1], pts[0], pts[2]), 0.5);
        assert_eq!(rdp_simplify(&pts, 0.49).unwrap(), vec![0, 1, 2]);
        assert_eq!(rdp_simplify(&pts, 0.5).unwrap(), vec![0, 2]);
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(rdp_simplify(&[[0.0; 3]], 0.1).is_err());
        assert!(rdp_simplify(&[[0.0; 3], [1.0; 3]], -1.0).is_err());
        assert!(rdp_simplify(&[[0.0; 3], [1.0; 3]], f64::NAN).is_err());
    }
}
