//! Small fixed-size vector helpers for physical-space points (millimeters, z/y/x order).

pub type Point3 = [f64; 3];

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add_scaled(a: Point3, d: Point3, t: f64) -> Point3 {
    [a[0] + d[0] * t, a[1] + d[1] * t, a[2] + d[2] * t]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn distance(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}

/// Parameter in `[0, 1]` of the point on segment `a..b` closest to `p`.
#[inline]
pub fn closest_param(p: Point3, a: Point3, b: Point3) -> f64 {
    let d = sub(b, a);
    let len2 = dot(d, d);
    if len2 == 0.0 {
        0.0
    } else {
        (dot(sub(p, a), d) / len2).clamp(0.0, 1.0)
    }
}

#[inline]
pub fn point_segment_distance(p: Point3, a: Point3, b: Point3) -> f64 {
    let t = closest_param(p, a, b);
    distance(p, add_scaled(a, sub(b, a), t))
}

/// Minimum distance from `p` to the polyline through `points`.
pub fn point_polyline_distance(p: Point3, points: &[Point3]) -> f64 {
    match points {
        [] => f64::INFINITY,
        [only] => distance(p, *only),
        _ => points
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}
