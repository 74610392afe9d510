use std::collections::HashSet;
use std::f64::consts::PI;

use super::{angle_between, Minutia, MinutiaKind};
use crate::enhance::{BinaryImage, OrientationField, RidgeMaps, NEIGHBORS_8};

/// Skeleton steps followed when estimating a minutia direction.
const TRACE_STEPS: usize = 10;

/// Half the number of 0/1 transitions around the 8-neighbourhood of
/// `(x, y)`, visited in ring order.
pub fn crossing_number(skel: &BinaryImage, x: usize, y: usize) -> u32 {
    let r = ring(skel, x, y);
    (0..8).filter(|&k| r[k] != r[(k + 1) % 8]).count() as u32 / 2
}

fn ring(skel: &BinaryImage, x: usize, y: usize) -> [bool; 8] {
    let mut r = [false; 8];
    for (k, (dx, dy)) in NEIGHBORS_8.iter().enumerate() {
        r[k] = skel.get_i(x as isize + dx, y as isize + dy);
    }
    r
}

/// Endings (crossing number 1) and bifurcations (crossing number 3) on the
/// skeleton inside the mask. Bifurcation pixels that touch each other are
/// reported once. Quality is 1 until [`assign_quality`] runs.
pub fn extract_minutiae(maps: &RidgeMaps) -> Vec<Minutia> {
    let skel = &maps.skeleton;
    let mut out = Vec::new();
    let mut bif_pixels: Vec<(usize, usize)> = Vec::new();
    for y in 0..skel.height {
        for x in 0..skel.width {
            if !skel.get(x, y) || !maps.mask.contains(x as f64, y as f64) {
                continue;
            }
            match crossing_number(skel, x, y) {
                1 => {
                    if let Some(theta) = ending_direction(skel, x, y) {
                        out.push(Minutia::new(x as f64, y as f64, theta, MinutiaKind::Ending));
                    }
                }
                3 => {
                    let touches = bif_pixels
                        .iter()
                        .any(|&(bx, by)| bx.abs_diff(x) <= 1 && by.abs_diff(y) <= 1);
                    bif_pixels.push((x, y));
                    if touches {
                        continue;
                    }
                    if let Some(theta) = bifurcation_direction(skel, x, y) {
                        out.push(Minutia::new(
                            x as f64,
                            y as f64,
                            theta,
                            MinutiaKind::Bifurcation,
                        ));
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Follows the skeleton from `start` through `first` for up to `steps`
/// pixels and returns the last pixel reached.
fn trace(
    skel: &BinaryImage,
    start: (usize, usize),
    first: (usize, usize),
    steps: usize,
) -> (usize, usize) {
    let mut visited: HashSet<(usize, usize)> = HashSet::new();
    visited.insert(start);
    for (dx, dy) in NEIGHBORS_8 {
        let (nx, ny) = (start.0 as isize + dx, start.1 as isize + dy);
        if skel.get_i(nx, ny) {
            visited.insert((nx as usize, ny as usize));
        }
    }
    let mut cur = first;
    for _ in 1..steps {
        let mut next = None;
        let mut candidates = Vec::new();
        for (dx, dy) in NEIGHBORS_8 {
            let (nx, ny) = (cur.0 as isize + dx, cur.1 as isize + dy);
            if skel.get_i(nx, ny) && !visited.contains(&(nx as usize, ny as usize)) {
                let p = (nx as usize, ny as usize);
                candidates.push(p);
                if next.is_none() && (dx == 0 || dy == 0) {
                    next = Some(p);
                }
            }
        }
        let Some(&fallback) = candidates.first() else {
            break;
        };
        visited.extend(candidates.iter().copied());
        cur = next.unwrap_or(fallback);
    }
    cur
}

/// One neighbour per run of set pixels around `(x, y)`, preferring
/// 4-neighbours.
fn branch_starts(skel: &BinaryImage, x: usize, y: usize) -> Vec<(usize, usize)> {
    let r = ring(skel, x, y);
    let Some(first_gap) = (0..8).find(|&k| !r[k]) else {
        return Vec::new();
    };
    let mut starts = Vec::new();
    let mut current: Option<usize> = None;
    for step in 1..=8 {
        let k = (first_gap + step) % 8;
        if r[k] {
            current = match current {
                None => Some(k),
                Some(c) if c % 2 == 1 && k % 2 == 0 => Some(k),
                keep => keep,
            };
        } else if let Some(c) = current.take() {
            starts.push(c);
        }
    }
    if let Some(c) = current {
        starts.push(c);
    }
    starts
        .into_iter()
        .map(|k| {
            let (dx, dy) = NEIGHBORS_8[k];
            ((x as isize + dx) as usize, (y as isize + dy) as usize)
        })
        .collect()
}

fn branch_direction(skel: &BinaryImage, x: usize, y: usize, first: (usize, usize)) -> Option<f64> {
    let end = trace(skel, (x, y), first, TRACE_STEPS);
    let (dx, dy) = (end.0 as f64 - x as f64, end.1 as f64 - y as f64);
    if dx == 0.0 && dy == 0.0 {
        None
    } else {
        Some(dy.atan2(dx))
    }
}

fn ending_direction(skel: &BinaryImage, x: usize, y: usize) -> Option<f64> {
    let starts = branch_starts(skel, x, y);
    branch_direction(skel, x, y, *starts.first()?)
}

/// The two branches closest in direction form the fork; the minutia points
/// opposite their bisector.
fn bifurcation_direction(skel: &BinaryImage, x: usize, y: usize) -> Option<f64> {
    let dirs: Vec<f64> = branch_starts(skel, x, y)
        .into_iter()
        .filter_map(|s| branch_direction(skel, x, y, s))
        .collect();
    if dirs.len() < 3 {
        return None;
    }
    let mut best = (f64::INFINITY, 0, 1);
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            let d = angle_between(dirs[i], dirs[j]);
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    let (a, b) = (dirs[best.1], dirs[best.2]);
    let bisector = (a.sin() + b.sin()).atan2(a.cos() + b.cos());
    Some(bisector + PI)
}

/// Sets each minutia's quality to the orientation coherence of its block.
pub fn assign_quality(minutiae: &mut [Minutia], field: &OrientationField) {
    for m in minutiae {
        let bx = ((m.x / field.block_size as f64) as usize).min(field.cols - 1);
        let by = ((m.y / field.block_size as f64) as usize).min(field.rows - 1);
        m.quality = field.coherence_at(bx, by).clamp(0.0, 1.0);
    }
}

/// Removes minutiae closer than `border` to the mask boundary, pairs of
/// opposing endings closer than `d_min` (broken ridges), and
/// ending/bifurcation pairs joined by a skeleton path of at most `d_min`
/// pixels (spurs). All rules are evaluated on the input set, so the result
/// is a fixed point. Output is sorted by row, column and kind.
pub fn filter_spurious(
    minutiae: &[Minutia],
    maps: &RidgeMaps,
    d_min: f64,
    border: f64,
) -> Vec<Minutia> {
    let n = minutiae.len();
    let mut drop = vec![false; n];
    for (i, m) in minutiae.iter().enumerate() {
        if maps.mask.distance_to_background(m.x, m.y) < border {
            drop[i] = true;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&minutiae[i], &minutiae[j]);
            if a.kind == MinutiaKind::Ending
                && b.kind == MinutiaKind::Ending
                && a.distance(b) < d_min
                && angle_between(a.theta, b.theta) >= 2.0 * PI / 3.0
            {
                drop[i] = true;
                drop[j] = true;
            }
        }
    }
    let bifurcations: Vec<usize> = (0..n)
        .filter(|&i| minutiae[i].kind == MinutiaKind::Bifurcation)
        .collect();
    if !bifurcations.is_empty() {
        let reach = d_min.max(0.0).ceil() as usize;
        for i in 0..n {
            let e = &minutiae[i];
            if e.kind != MinutiaKind::Ending {
                continue;
            }
            let path = skeleton_path(&maps.skeleton, e.x as usize, e.y as usize, reach);
            for &j in &bifurcations {
                let b = &minutiae[j];
                if e.distance(b) > d_min + 1.5 {
                    continue;
                }
                let hit = path.iter().any(|&(px, py)| {
                    (px as f64 - b.x).abs() <= 1.0 && (py as f64 - b.y).abs() <= 1.0
                });
                if hit {
                    drop[i] = true;
                    drop[j] = true;
                }
            }
        }
    }
    let mut kept: Vec<Minutia> = minutiae
        .iter()
        .zip(&drop)
        .filter(|(_, &d)| !d)
        .map(|(m, _)| *m)
        .collect();
    kept.sort_by(|a, b| {
        a.y.total_cmp(&b.y)
            .then(a.x.total_cmp(&b.x))
            .then(a.kind.cmp(&b.kind))
    });
    kept
}

/// Pixels reached by walking the skeleton from `(x, y)` for up to `steps`
/// pixels.
fn skeleton_path(skel: &BinaryImage, x: usize, y: usize, steps: usize) -> Vec<(usize, usize)> {
    let mut path = vec![(x, y)];
    if !skel.get(x, y) {
        return path;
    }
    let mut visited: HashSet<(usize, usize)> = HashSet::new();
    visited.insert((x, y));
    let mut cur = (x, y);
    for _ in 0..steps {
        let mut next = None;
        for (dx, dy) in NEIGHBORS_8 {
            let (nx, ny) = (cur.0 as isize + dx, cur.1 as isize + dy);
            let p = (nx as usize, ny as usize);
            if skel.get_i(nx, ny) && !visited.contains(&p) {
                visited.insert(p);
                path.push(p);
                if next.is_none() || dx == 0 || dy == 0 {
                    next = Some(p);
                }
            }
        }
        match next {
            Some(p) => cur = p,
            None => break,
        }
    }
    path
}
