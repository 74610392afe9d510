use std::f64::consts::PI;

use super::{Singularity, SingularityKind};
use crate::enhance::{BlockMask, OrientationField};

/// Sum of orientation changes, each wrapped into `(-pi/2, pi/2]`, around a
/// closed loop of block coordinates. A loop around one core yields `pi`,
/// around one delta `-pi`, around neither `0`.
pub fn poincare_index(field: &OrientationField, path: &[(usize, usize)]) -> f64 {
    let mut total = 0.0;
    for k in 0..path.len() {
        let (ax, ay) = path[k];
        let (bx, by) = path[(k + 1) % path.len()];
        let mut d = field.angle(bx, by) - field.angle(ax, ay);
        while d > PI / 2.0 {
            d -= PI;
        }
        while d <= -PI / 2.0 {
            d += PI;
        }
        total += d;
    }
    total
}

/// Cores and deltas from the Poincaré index of every 2x2 block loop inside
/// the mask. Detections of the same kind in touching loops are merged into
/// their centroid.
pub fn detect_singularities(field: &OrientationField, mask: &BlockMask) -> Vec<Singularity> {
    let mut hits: Vec<(usize, usize, SingularityKind)> = Vec::new();
    if field.cols < 2 || field.rows < 2 {
        return Vec::new();
    }
    for by in 0..field.rows - 1 {
        for bx in 0..field.cols - 1 {
            let corners = [(bx, by), (bx + 1, by), (bx + 1, by + 1), (bx, by + 1)];
            if !corners
                .iter()
                .all(|&(x, y)| x < mask.cols && y < mask.rows && mask.block(x, y))
            {
                continue;
            }
            let index = poincare_index(field, &corners);
            if (index - PI).abs() < 0.5 {
                hits.push((bx, by, SingularityKind::Core));
            } else if (index + PI).abs() < 0.5 {
                hits.push((bx, by, SingularityKind::Delta));
            }
        }
    }
    let mut group = vec![usize::MAX; hits.len()];
    let mut groups = 0;
    for i in 0..hits.len() {
        if group[i] != usize::MAX {
            continue;
        }
        group[i] = groups;
        let mut stack = vec![i];
        while let Some(a) = stack.pop() {
            for b in 0..hits.len() {
                if group[b] == usize::MAX
                    && hits[b].2 == hits[a].2
                    && hits[b].0.abs_diff(hits[a].0) <= 1
                    && hits[b].1.abs_diff(hits[a].1) <= 1
                {
                    group[b] = groups;
                    stack.push(b);
                }
            }
        }
        groups += 1;
    }
    let bs = field.block_size as f64;
    let mut out = Vec::with_capacity(groups);
    for g in 0..groups {
        let members: Vec<&(usize, usize, SingularityKind)> = hits
            .iter()
            .zip(&group)
            .filter(|(_, &k)| k == g)
            .map(|(h, _)| h)
            .collect();
        let n = members.len() as f64;
        // The loop through block centers of (bx, by)..(bx+1, by+1) encloses
        // the shared block corner.
        let x = members.iter().map(|h| (h.0 + 1) as f64 * bs).sum::<f64>() / n;
        let y = members.iter().map(|h| (h.1 + 1) as f64 * bs).sum::<f64>() / n;
        let x = x.min(mask.width as f64 - 1.0);
        let y = y.min(mask.height as f64 - 1.0);
        out.push(Singularity::new(x, y, members[0].2));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(f: impl FnMut(f64, f64) -> f64) -> OrientationField {
        OrientationField::from_fn(256, 256, 16, f)
    }

    #[test]
    fn analytic_core_is_found_once() {
        let (cx, cy) = (130.0, 120.0);
        let f = field(|x, y| 0.5 * (y - cy).atan2(x - cx));
        let mask = BlockMask::full(256, 256, 16);
        let s = detect_singularities(&f, &mask);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].kind, SingularityKind::Core);
        assert!((s[0].x - cx).abs() <= 16.0 && (s[0].y - cy).abs() <= 16.0);
    }

    #[test]
    fn analytic_delta_is_found_once() {
        let (cx, cy) = (100.0, 140.0);
        let f = field(|x, y| -0.5 * (y - cy).atan2(x - cx));
        let mask = BlockMask::full(256, 256, 16);
        let s = detect_singularities(&f, &mask);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].kind, SingularityKind::Delta);
        assert!((s[0].x - cx).abs() <= 16.0 && (s[0].y - cy).abs() <= 16.0);
    }

    #[test]
    fn uniform_field_has_none() {
        let f = field(|_, _| 0.8);
        let mask = BlockMask::full(256, 256, 16);
        assert!(detect_singularities(&f, &mask).is_empty());
    }

    #[test]
    fn large_loops_count_enclosed_singularities() {
        // Two cores and one delta: any loop around all three sums to pi.
        let pts = [(80.0, 80.0, 0.5), (170.0, 90.0, 0.5), (120.0, 170.0, -0.5)];
        let f = field(|x, y| {
            pts.iter()
                .map(|&(px, py, k)| k * (y - py).atan2(x - px))
                .sum()
        });
        let mut ring = Vec::new();
        for bx in 1..15 {
            ring.push((bx, 1));
        }
        for by in 1..15 {
            ring.push((15, by));
        }
        for bx in (2..=15).rev() {
            ring.push((bx, 15));
        }
        for by in (2..=15).rev() {
            ring.push((1, by));
        }
        assert!((poincare_index(&f, &ring) - PI).abs() < 1e-6);
        // A loop around only the delta.
        let small = [(6, 9), (9, 9), (9, 12), (6, 12)];
        assert!((poincare_index(&f, &small) + PI).abs() < 1e-6);
    }

    #[test]
    fn masked_blocks_are_skipped() {
        let f = field(|x, y| 0.5 * (y - 120.0).atan2(x - 130.0));
        let mask = BlockMask::empty(256, 256, 16);
        assert!(detect_singularities(&f, &mask).is_empty());
    }
}
