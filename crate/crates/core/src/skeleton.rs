//! Pixel reduction: Zhang–Suen thinning and a chessboard medial axis.

use crate::error::{Error, Result};
use crate::segmentation::{count_components, BinaryMask};

/// One-pixel-wide mask derived from a silhouette.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkeletonMask(BinaryMask);

impl SkeletonMask {
    pub fn mask(&self) -> &BinaryMask {
        &self.0
    }

    pub fn into_mask(self) -> BinaryMask {
        self.0
    }
}

// Clockwise ring starting at north: N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];
const N: usize = 0;
const E: usize = 2;
const S: usize = 4;
const W: usize = 6;

#[inline]
fn ring(mask: &BinaryMask, x: usize, y: usize) -> [bool; 8] {
    let (x, y) = (x as isize, y as isize);
    RING.map(|(dx, dy)| mask.get_or_background(x + dx, y + dy))
}

#[inline]
fn stats(ring: &[bool; 8]) -> (u8, u8) {
    let b = ring.iter().filter(|&&v| v).count() as u8;
    let a = (0..8).filter(|&i| !ring[i] && ring[(i + 1) % 8]).count() as u8;
    (b, a)
}

/// `(B, A)` for the pixel at `(x, y)`: the number of foreground
/// 8-neighbors, and the number of background-to-foreground transitions
/// walking the ring clockwise from north back to north.
pub fn neighbor_stats(mask: &BinaryMask, x: usize, y: usize) -> Result<(u8, u8)> {
    if x >= mask.width() || y >= mask.height() {
        return Err(Error::Bounds {
            x,
            y,
            width: mask.width(),
            height: mask.height(),
        });
    }
    Ok(stats(&ring(mask, x, y)))
}

/// Number of 8-connected foreground groups on the neighbor ring. Ring
/// members are 8-adjacent when consecutive; edge neighbors (N, E, S, W) also
/// touch the next edge neighbor across an empty corner.
#[inline]
fn ring_groups(r: &[bool; 8]) -> u8 {
    let mut groups = 0;
    for i in 0..8 {
        if !r[i] {
            continue;
        }
        // `i` starts a group unless its predecessor on the ring joins it.
        let prev = (i + 7) % 8;
        let joined = r[prev] || (i % 2 == 0 && r[(i + 6) % 8]);
        if !joined {
            groups += 1;
        }
    }
    // A fully occupied ring (or one joined all the way round) counts once.
    if groups == 0 && r.iter().any(|&v| v) {
        1
    } else {
        groups
    }
}

/// Deleting the pixel cannot split or erase an 8-connected component: it
/// has at least two foreground neighbors and they form a single group.
#[inline]
fn removable(mask: &BinaryMask, x: usize, y: usize) -> bool {
    let r = ring(mask, x, y);
    r.iter().filter(|&&v| v).count() >= 2 && ring_groups(&r) == 1
}

fn zhang_suen_pass(mask: &mut BinaryMask, first: bool, flagged: &mut Vec<(usize, usize)>) -> bool {
    flagged.clear();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if !mask.get(x, y) {
                continue;
            }
            let r = ring(mask, x, y);
            let (b, a) = stats(&r);
            if !(2..=6).contains(&b) || a != 1 {
                continue;
            }
            let keep = if first {
                (r[N] && r[E] && r[S]) || (r[E] && r[S] && r[W])
            } else {
                (r[N] && r[E] && r[W]) || (r[N] && r[S] && r[W])
            };
            if !keep {
                flagged.push((x, y));
            }
        }
    }
    // Flags come from the unmodified mask. Deleting them all at once can
    // erase a 2x2 square or cut a diagonal, so each deletion is re-checked
    // against the pixels already removed in this sub-iteration: the
    // remaining neighbors must still form one group.
    let mut changed = false;
    for &(x, y) in flagged.iter() {
        if ring_groups(&ring(mask, x, y)) == 1 {
            mask.set(x, y, false);
            changed = true;
        }
    }
    changed
}

// Deleting (x, y) keeps its foreground neighbors mutually reachable
// through the rest of the mask. Used when the local test fails because the
// neighbors only meet again far away (loops through an X-shaped junction).
fn removable_globally(mask: &mut BinaryMask, x: usize, y: usize) -> bool {
    let (w, h) = (mask.width(), mask.height());
    let neighbors: Vec<(usize, usize)> = RING
        .iter()
        .map(|&(dx, dy)| (x as isize + dx, y as isize + dy))
        .filter(|&(nx, ny)| mask.get_or_background(nx, ny))
        .map(|(nx, ny)| (nx as usize, ny as usize))
        .collect();
    if neighbors.len() < 2 {
        return false;
    }
    mask.set(x, y, false);
    let mut seen = vec![false; w * h];
    let mut stack = vec![neighbors[0]];
    seen[neighbors[0].1 * w + neighbors[0].0] = true;
    while let Some((cx, cy)) = stack.pop() {
        for &(dx, dy) in &RING {
            let (nx, ny) = (cx as isize + dx, cy as isize + dy);
            if mask.get_or_background(nx, ny) {
                let i = ny as usize * w + nx as usize;
                if !seen[i] {
                    seen[i] = true;
                    stack.push((nx as usize, ny as usize));
                }
            }
        }
    }
    mask.set(x, y, true);
    neighbors.iter().all(|&(nx, ny)| seen[ny * w + nx])
}

fn block_at(mask: &BinaryMask, x: usize, y: usize) -> bool {
    mask.get(x, y) && mask.get(x + 1, y) && mask.get(x, y + 1) && mask.get(x + 1, y + 1)
}

// Some (x, y) of a 2x2 block whose top-left corner lies within one pixel
// of (px, py).
fn touches_block(mask: &BinaryMask, px: usize, py: usize) -> bool {
    (py.saturating_sub(1)..=py.min(mask.height().saturating_sub(2))).any(|y| {
        (px.saturating_sub(1)..=px.min(mask.width().saturating_sub(2))).any(|x| block_at(mask, x, y))
    })
}

// Cuts a block none of whose pixels can go on its own: restores one pixel
// of the original mask near the block as a detour, then drops a block
// pixel. Accepted only if the component count is unchanged and the
// restored pixel sits in no 2x2 block.
fn reroute_block(mask: &mut BinaryMask, original: &BinaryMask, cells: &[(usize, usize); 4]) -> bool {
    let (w, h) = (mask.width(), mask.height());
    let (x0, y0) = cells[0];
    let components = count_components(mask);
    for qy in y0.saturating_sub(2)..(y0 + 4).min(h) {
        for qx in x0.saturating_sub(2)..(x0 + 4).min(w) {
            if mask.get(qx, qy) || !original.get(qx, qy) {
                continue;
            }
            for &(cx, cy) in cells {
                mask.set(qx, qy, true);
                mask.set(cx, cy, false);
                if !touches_block(mask, qx, qy) && count_components(mask) == components {
                    return true;
                }
                mask.set(cx, cy, true);
                mask.set(qx, qy, false);
            }
        }
    }
    false
}

// Removes one pixel from each remaining 2x2 foreground block where that is
// possible without disconnecting anything. Candidates are tried in raster
// order (top-left, top-right, bottom-left, bottom-right), first with the
// local ring test, then with a flood fill, and finally with a detour
// through a pixel of the original mask.
fn break_blocks(mask: &mut BinaryMask, original: &BinaryMask) -> bool {
    let mut changed = false;
    for y in 0..mask.height().saturating_sub(1) {
        for x in 0..mask.width().saturating_sub(1) {
            if !block_at(mask, x, y) {
                continue;
            }
            let cells = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
            let pick = cells
                .iter()
                .copied()
                .find(|&(cx, cy)| removable(mask, cx, cy))
                .or_else(|| {
                    cells
                        .iter()
                        .copied()
                        .find(|&(cx, cy)| removable_globally(mask, cx, cy))
                });
            if let Some((cx, cy)) = pick {
                mask.set(cx, cy, false);
                changed = true;
            } else if reroute_block(mask, original, &cells) {
                changed = true;
            }
        }
    }
    changed
}

/// Zhang–Suen thinning with a connectivity guard.
///
/// Each sub-iteration flags pixels against the unmodified mask using the
/// Zhang–Suen conditions; flagged pixels are then deleted unless, given the
/// deletions already made, removal would split or erase a component. When
/// the sub-iterations stall, leftover 2x2 blocks are broken where that is
/// connectivity-safe, if need be by restoring a nearby pixel of the input
/// as a detour, and the loop repeats until nothing changes.
pub fn thin(mask: &BinaryMask) -> SkeletonMask {
    let mut out = mask.clone();
    let mut flagged = Vec::new();
    loop {
        let a = zhang_suen_pass(&mut out, true, &mut flagged);
        let b = zhang_suen_pass(&mut out, false, &mut flagged);
        if a || b {
            continue;
        }
        if !break_blocks(&mut out, mask) {
            break;
        }
    }
    SkeletonMask(out)
}

/// Chessboard distance from each foreground pixel to the nearest
/// background pixel, with everything outside the image counted as
/// background. Border foreground pixels get 1; background gets 0.
pub fn chessboard_distance(mask: &BinaryMask) -> Vec<u32> {
    let (w, h) = (mask.width(), mask.height());
    let inf = (w + h + 1) as u32;
    let mut d: Vec<u32> = mask.data().iter().map(|&v| if v { inf } else { 0 }).collect();
    let at = |d: &[u32], x: isize, y: isize| -> u32 {
        if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
            0
        } else {
            d[y as usize * w + x as usize]
        }
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            if d[i] == 0 {
                continue;
            }
            let m = at(&d, x - 1, y)
                .min(at(&d, x - 1, y - 1))
                .min(at(&d, x, y - 1))
                .min(at(&d, x + 1, y - 1));
            d[i] = d[i].min(m + 1);
        }
    }
    for y in (0..h as isize).rev() {
        for x in (0..w as isize).rev() {
            let i = y as usize * w + x as usize;
            if d[i] == 0 {
                continue;
            }
            let m = at(&d, x + 1, y)
                .min(at(&d, x + 1, y + 1))
                .min(at(&d, x, y + 1))
                .min(at(&d, x - 1, y + 1));
            d[i] = d[i].min(m + 1);
        }
    }
    d
}

/// Ridge of the chessboard distance field (pixels at least as far from the
/// background as all 8 neighbors), thinned to one pixel width.
pub fn medial_axis(mask: &BinaryMask) -> SkeletonMask {
    let (w, h) = (mask.width(), mask.height());
    let dist = chessboard_distance(mask);
    let at = |x: isize, y: isize| -> u32 {
        if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
            0
        } else {
            dist[y as usize * w + x as usize]
        }
    };
    let mut ridge = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = dist[y * w + x];
            if v == 0 {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            if RING.iter().all(|&(dx, dy)| v >= at(xi + dx, yi + dy)) {
                ridge.set(x, y, true);
            }
        }
    }
    thin(&ridge)
}
