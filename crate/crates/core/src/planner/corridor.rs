use super::GridPath;
use crate::geom::{Aabb, Vec3};
use crate::purr::PurrMap;

/// Path cells `start..=end` all moving along `axis` (`None` for a lone cell).
/// Consecutive runs share their junction cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StraightRun {
    pub start: usize,
    pub end: usize,
    pub axis: Option<usize>,
}

impl StraightRun {
    pub fn steps(&self) -> usize {
        self.end - self.start
    }
}

fn step_axis(a: [usize; 3], b: [usize; 3]) -> usize {
    (0..3).find(|&k| a[k] != b[k]).unwrap_or(0)
}

/// Maximal runs of constant movement axis.
pub fn split_segments(path: &GridPath) -> Vec<StraightRun> {
    let v = &path.voxels;
    if v.len() <= 1 {
        return vec![StraightRun {
            start: 0,
            end: 0,
            axis: None,
        }];
    }
    let mut runs = Vec::new();
    let mut start = 0;
    let mut axis = step_axis(v[0], v[1]);
    for i in 1..v.len() - 1 {
        let next = step_axis(v[i], v[i + 1]);
        if next != axis {
            runs.push(StraightRun {
                start,
                end: i,
                axis: Some(axis),
            });
            start = i;
            axis = next;
        }
    }
    runs.push(StraightRun {
        start,
        end: v.len() - 1,
        axis: Some(axis),
    });
    runs
}

/// Inclusive cell-index box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl VoxelBox {
    pub fn hull(cells: &[[usize; 3]]) -> Self {
        let mut b = VoxelBox {
            lo: cells[0],
            hi: cells[0],
        };
        for c in cells {
            for a in 0..3 {
                b.lo[a] = b.lo[a].min(c[a]);
                b.hi[a] = b.hi[a].max(c[a]);
            }
        }
        b
    }

    pub fn volume(&self) -> u64 {
        (0..3).map(|a| (self.hi[a] - self.lo[a] + 1) as u64).product()
    }

    pub fn intersection_volume(&self, o: &VoxelBox) -> u64 {
        (0..3)
            .map(|a| {
                let lo = self.lo[a].max(o.lo[a]);
                let hi = self.hi[a].min(o.hi[a]);
                if hi >= lo {
                    (hi - lo + 1) as u64
                } else {
                    0
                }
            })
            .product()
    }

    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] <= self.hi[a])
    }

    pub fn to_world(&self, purr: &PurrMap) -> Aabb {
        let h = purr.spacing();
        Aabb::new(
            std::array::from_fn(|a| purr.bbox.min[a] + self.lo[a] as f64 * h[a]),
            std::array::from_fn(|a| purr.bbox.min[a] + (self.hi[a] + 1) as f64 * h[a]),
        )
    }
}

/// Summed-volume table of unsafe cells for O(1) box queries.
pub struct FreeSpace {
    dims: [usize; 3],
    sat: Vec<u32>,
}

impl FreeSpace {
    pub fn new(purr: &PurrMap) -> Self {
        let [nx, ny, nz] = purr.dims;
        let (sx, sy) = (nx + 1, ny + 1);
        let mut sat = vec![0u32; sx * sy * (nz + 1)];
        for k in 0..nz {
            for j in 0..ny {
                let mut row = 0u32;
                for i in 0..nx {
                    row += purr.cells[i + nx * (j + ny * k)] as u32;
                    let here = (i + 1) + sx * ((j + 1) + sy * (k + 1));
                    let below_y = (i + 1) + sx * (j + sy * (k + 1));
                    let below_z = (i + 1) + sx * ((j + 1) + sy * k);
                    let below_yz = (i + 1) + sx * (j + sy * k);
                    // row sums stacked over y and z
                    sat[here] = row + sat[below_y] + sat[below_z] - sat[below_yz];
                }
            }
        }
        FreeSpace {
            dims: purr.dims,
            sat,
        }
    }

    fn at(&self, i: usize, j: usize, k: usize) -> i64 {
        let (sx, sy) = (self.dims[0] + 1, self.dims[1] + 1);
        self.sat[i + sx * (j + sy * k)] as i64
    }

    /// Unsafe cells in the inclusive box.
    pub fn unsafe_count(&self, b: &VoxelBox) -> u64 {
        let (l, h) = (b.lo, b.hi.map(|v| v + 1));
        let v = self.at(h[0], h[1], h[2]) - self.at(l[0], h[1], h[2]) - self.at(h[0], l[1], h[2])
            - self.at(h[0], h[1], l[2])
            + self.at(l[0], l[1], h[2])
            + self.at(l[0], h[1], l[2])
            + self.at(h[0], l[1], l[2])
            - self.at(l[0], l[1], l[2]);
        v as u64
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }
}

/// Grows the cell hull of `cells` one layer at a time, faces in round-robin
/// order +x, -x, +y, -y, +z, -z, retiring a face once its next layer holds an
/// unsafe cell or leaves the grid.
pub fn grow_box(free: &FreeSpace, cells: &[[usize; 3]]) -> VoxelBox {
    let mut b = VoxelBox::hull(cells);
    let dims = free.dims();
    let mut active = [true; 6];
    while active.iter().any(|&a| a) {
        for f in 0..6 {
            if !active[f] {
                continue;
            }
            let axis = f / 2;
            let mut layer = b;
            if f % 2 == 0 {
                if b.hi[axis] + 1 >= dims[axis] {
                    active[f] = false;
                    continue;
                }
                layer.lo[axis] = b.hi[axis] + 1;
                layer.hi[axis] = b.hi[axis] + 1;
            } else {
                if b.lo[axis] == 0 {
                    active[f] = false;
                    continue;
                }
                layer.lo[axis] = b.lo[axis] - 1;
                layer.hi[axis] = b.lo[axis] - 1;
            }
            if free.unsafe_count(&layer) > 0 {
                active[f] = false;
            } else if f % 2 == 0 {
                b.hi[axis] += 1;
            } else {
                b.lo[axis] -= 1;
            }
        }
    }
    b
}

/// Retained box positions. `handover[j]` is the path cell where run `j` meets
/// run `j + 1` (the goal cell for the last run). Box `j > 0` is dropped when
/// the last retained box overlaps at least `theta` of its volume and holds
/// `handover[j]`; that cell also lies in the next box, so consecutive
/// retained boxes stay linked through a path cell.
pub fn prune_boxes(boxes: &[VoxelBox], handover: &[[usize; 3]], theta: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (j, b) in boxes.iter().enumerate() {
        if let Some(&r) = kept.last() {
            let last = &boxes[r];
            let overlap = last.intersection_volume(b) as f64;
            if overlap >= theta * b.volume() as f64 && last.contains(handover[j]) {
                continue;
            }
        }
        kept.push(j);
    }
    kept
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    /// World boxes, shrunk slightly off shared faces with unsafe cells.
    pub boxes: Vec<Aabb>,
    pub voxel_boxes: Vec<VoxelBox>,
    /// Straight runs assigned to each box: its own run and the runs of the
    /// boxes pruned in its favor.
    pub runs: Vec<Vec<usize>>,
}

/// Box per run, pruned, then converted to world coordinates.
///
/// World boxes are inset by `margin` times the cell size so points on them
/// cannot round into a neighboring unsafe cell. The start and goal are then
/// added back to the first and last box; both lie in safe cells of those boxes.
pub fn build_corridor(
    purr: &PurrMap,
    path: &GridPath,
    runs: &[StraightRun],
    theta: f64,
    margin: f64,
) -> Corridor {
    let free = FreeSpace::new(purr);
    let cover: Vec<Vec<[usize; 3]>> = runs
        .iter()
        .map(|r| path.voxels[r.start..=r.end].to_vec())
        .collect();
    let boxes: Vec<VoxelBox> = cover.iter().map(|c| grow_box(&free, c)).collect();
    let handover: Vec<[usize; 3]> = runs.iter().map(|r| path.voxels[r.end]).collect();
    let kept = prune_boxes(&boxes, &handover, theta);
    let mut run_map: Vec<Vec<usize>> = vec![Vec::new(); kept.len()];
    let mut slot = 0;
    for j in 0..runs.len() {
        while slot + 1 < kept.len() && kept[slot + 1] <= j {
            slot += 1;
        }
        run_map[slot].push(j);
    }
    let h = purr.spacing();
    let mut world: Vec<Aabb> = kept
        .iter()
        .map(|&j| {
            let w = boxes[j].to_world(purr);
            Aabb::new(
                std::array::from_fn(|a| w.min[a] + margin * h[a]),
                std::array::from_fn(|a| w.max[a] - margin * h[a]),
            )
        })
        .collect();
    let include = |b: &mut Aabb, p: &Vec3| {
        for a in 0..3 {
            b.min[a] = b.min[a].min(p[a]);
            b.max[a] = b.max[a].max(p[a]);
        }
    };
    include(&mut world[0], &path.start);
    let last = world.len() - 1;
    include(&mut world[last], &path.goal);
    Corridor {
        boxes: world,
        voxel_boxes: kept.iter().map(|&j| boxes[j]).collect(),
        runs: run_map,
    }
}
