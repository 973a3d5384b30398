use std::cmp::Ordering;

use crate::pcio::Box3D;

/// Intersections smaller than this (m^2) count as empty.
pub const AREA_EPSILON: f64 = 1e-12;

/// Shoelace area; positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        twice += a[0] * b[1] - b[0] * a[1];
    }
    twice / 2.0
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Sutherland-Hodgman clipping of `subject` by the convex, counter-clockwise
/// polygon `clip`.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (e0, e1) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let d_cur = cross(e0, e1, cur);
            let d_prev = cross(e0, e1, prev);
            if d_cur >= 0.0 {
                if d_prev < 0.0 {
                    output.push(intersect(prev, cur, d_prev, d_cur));
                }
                output.push(cur);
            } else if d_prev >= 0.0 {
                output.push(intersect(prev, cur, d_prev, d_cur));
            }
        }
    }
    output
}

fn intersect(p: [f64; 2], q: [f64; 2], dp: f64, dq: f64) -> [f64; 2] {
    let t = dp / (dp - dq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

fn geometry_key(b: &Box3D) -> [f64; 7] {
    let [x, y, z] = b.location;
    let [h, w, l] = b.dimensions;
    [x, y, z, h, w, l, b.rotation_y]
}

fn cmp_geometry(a: &Box3D, b: &Box3D) -> Ordering {
    geometry_key(a)
        .iter()
        .zip(geometry_key(b).iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Ground-plane overlap area. The pair is put in a canonical order before
/// clipping so the result does not depend on argument order.
pub fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let (a, b) = match cmp_geometry(a, b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let area = polygon_area(&clip_convex(&a.bev_corners(), &b.bev_corners()));
    if area < AREA_EPSILON {
        0.0
    } else {
        area
    }
}

fn ratio(inter: f64, union: f64) -> f64 {
    if inter <= 0.0 || union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// IoU of the yaw-rotated footprints.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    if cmp_geometry(a, b).is_eq() {
        return 1.0;
    }
    let inter = bev_intersection_area(a, b);
    ratio(inter, a.bev_area() + b.bev_area() - inter)
}

/// Volume IoU of yaw-only boxes: footprint overlap times vertical overlap.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    if cmp_geometry(a, b).is_eq() {
        return 1.0;
    }
    let (a_top, a_bottom) = a.vertical_extent();
    let (b_top, b_bottom) = b.vertical_extent();
    let overlap = a_bottom.min(b_bottom) - a_top.max(b_top);
    if overlap <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * overlap;
    ratio(inter, a.volume() + b.volume() - inter)
}
