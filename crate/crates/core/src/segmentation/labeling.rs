//! 8-connected component labeling.
//!
//! Two-pass union-find: the first raster pass assigns provisional labels
//! and records equivalences, the second resolves every label to its root.

use super::image::BinaryMask;

/// Per-component summary, in order of first appearance in a row-major scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Component {
    pub area: usize,
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

/// Result of labeling. `labels[i] == 0` is background, otherwise the
/// 1-based index into `components`.
#[derive(Clone, Debug)]
pub struct Labeling {
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        // The smaller label stays root so roots follow scan order.
        if ra < rb {
            self.parent[rb as usize] = ra;
        } else if rb < ra {
            self.parent[ra as usize] = rb;
        }
    }
}

pub fn label_components(mask: &BinaryMask) -> Labeling {
    let (w, h) = (mask.width(), mask.height());
    let data = mask.data();
    let mut labels = vec![0u32; w * h];
    let mut set = DisjointSet { parent: vec![0] };

    for y in 0..h {
        for x in 0..w {
            if !data[y * w + x] {
                continue;
            }
            // Already-visited neighbors: W, NW, N, NE.
            let mut current = 0u32;
            let mut visit = |l: u32, set: &mut DisjointSet| {
                if l != 0 {
                    if current == 0 {
                        current = l;
                    } else {
                        set.union(current, l);
                    }
                }
            };
            if x > 0 {
                visit(labels[y * w + x - 1], &mut set);
            }
            if y > 0 {
                let row = (y - 1) * w;
                if x > 0 {
                    visit(labels[row + x - 1], &mut set);
                }
                visit(labels[row + x], &mut set);
                if x + 1 < w {
                    visit(labels[row + x + 1], &mut set);
                }
            }
            if current == 0 {
                current = set.parent.len() as u32;
                set.parent.push(current);
            }
            labels[y * w + x] = current;
        }
    }

    let mut compact = vec![0u32; set.parent.len()];
    let mut components: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if labels[i] == 0 {
                continue;
            }
            let root = set.find(labels[i]) as usize;
            if compact[root] == 0 {
                components.push(Component {
                    area: 0,
                    min_x: x,
                    min_y: y,
                    max_x: x,
                    max_y: y,
                });
                compact[root] = components.len() as u32;
            }
            let id = compact[root];
            labels[i] = id;
            let c = &mut components[id as usize - 1];
            c.area += 1;
            c.min_x = c.min_x.min(x);
            c.max_x = c.max_x.max(x);
            c.max_y = y;
        }
    }

    Labeling { labels, components }
}

pub fn count_components(mask: &BinaryMask) -> usize {
    label_components(mask).components.len()
}
