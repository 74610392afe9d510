use super::{BinaryImage, BlockMask, FrequencyGrid, Plane, RidgeMaps, NEIGHBORS_8};

/// Binary ridge map and its skeleton. Ridges are the dark lines, so a pixel
/// is set where the response is negative inside the mask.
/// The returned maps carry an all-zero frequency grid.
pub fn binarize_and_thin(response: &Plane, mask: &BlockMask) -> RidgeMaps {
    let mut binary = BinaryImage::new(response.width, response.height);
    for y in 0..response.height {
        for x in 0..response.width {
            if mask.contains(x as f64, y as f64) && response.get(x, y) < 0.0 {
                binary.set(x, y, true);
            }
        }
    }
    let skeleton = thin(&binary);
    RidgeMaps {
        frequency: FrequencyGrid::zeros(mask.cols, mask.rows, mask.block_size),
        mask: mask.clone(),
        binary,
        skeleton,
    }
}

#[inline]
fn ring(img: &BinaryImage, x: usize, y: usize) -> [bool; 8] {
    let mut r = [false; 8];
    for (k, (dx, dy)) in NEIGHBORS_8.iter().enumerate() {
        r[k] = img.get_i(x as isize + dx, y as isize + dy);
    }
    r
}

/// Yokoi connectivity number for 8-connected foreground; a border pixel is
/// simple (deletable without changing topology) iff this equals 1.
#[inline]
fn connectivity_8(r: &[bool; 8]) -> u32 {
    let nb = |k: usize| u32::from(!r[k % 8]);
    [0usize, 2, 4, 6]
        .iter()
        .map(|&k| nb(k) - nb(k) * nb(k + 1) * nb(k + 2))
        .sum()
}

/// Two-subiteration thinning. Each subiteration collects border candidates
/// from a snapshot (south/east borders, then north/west) and deletes them
/// in raster order, re-checking simplicity against the current state so
/// connectivity is never broken. Endpoints are kept.
pub fn thin(binary: &BinaryImage) -> BinaryImage {
    let mut img = binary.clone();
    let (w, h) = (img.width, img.height);
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut candidates = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if !img.get(x, y) {
                        continue;
                    }
                    let r = ring(&img, x, y);
                    // Ring indices: 0 E, 2 N, 4 W, 6 S.
                    let border = if pass == 0 {
                        !r[6] || !r[0]
                    } else {
                        !r[2] || !r[4]
                    };
                    if border {
                        candidates.push((x, y));
                    }
                }
            }
            for (x, y) in candidates {
                let r = ring(&img, x, y);
                let neighbours = r.iter().filter(|&&b| b).count();
                if neighbours >= 2 && connectivity_8(&r) == 1 {
                    img.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    img
}
