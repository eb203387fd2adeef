use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::geom::Vec3;
use crate::purr::PurrMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("start {0:?} lies outside the map")]
    StartOutside([f64; 3]),
    #[error("goal {0:?} lies outside the map")]
    GoalOutside([f64; 3]),
    #[error("start cell {0:?} is unsafe")]
    StartUnsafe([usize; 3]),
    #[error("goal cell {0:?} is unsafe")]
    GoalUnsafe([usize; 3]),
    #[error("no safe path from {from:?} to {to:?}")]
    NoPath { from: [usize; 3], to: [usize; 3] },
}

/// 6-connected chain of safe cells from the start cell to the goal cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub voxels: Vec<[usize; 3]>,
    pub start: Vec3,
    pub goal: Vec3,
}

impl GridPath {
    /// Number of unit steps.
    pub fn steps(&self) -> usize {
        self.voxels.len().saturating_sub(1)
    }
}

fn manhattan(a: [usize; 3], b: [usize; 3]) -> u32 {
    (0..3).map(|k| a[k].abs_diff(b[k]) as u32).sum()
}

/// Neighbor order used everywhere: +x, -x, +y, -y, +z, -z.
pub(crate) fn neighbors(c: [usize; 3], dims: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    (0..6).filter_map(move |k| {
        let axis = k / 2;
        let mut n = c;
        if k % 2 == 0 {
            if c[axis] + 1 >= dims[axis] {
                return None;
            }
            n[axis] += 1;
        } else {
            if c[axis] == 0 {
                return None;
            }
            n[axis] -= 1;
        }
        Some(n)
    })
}

/// Shortest 6-connected path under unit step cost, Manhattan heuristic, ties
/// broken on `(f, h, linear cell index)`.
pub fn astar(purr: &PurrMap, p0: &Vec3, pf: &Vec3) -> Result<GridPath, SearchError> {
    let s = purr.cell_of(p0).ok_or(SearchError::StartOutside([p0.x, p0.y, p0.z]))?;
    let g = purr.cell_of(pf).ok_or(SearchError::GoalOutside([pf.x, pf.y, pf.z]))?;
    if purr.is_unsafe(s) {
        return Err(SearchError::StartUnsafe(s));
    }
    if purr.is_unsafe(g) {
        return Err(SearchError::GoalUnsafe(g));
    }
    let dims = purr.dims;
    let mut cost = vec![u32::MAX; purr.len()];
    let mut parent = vec![u32::MAX; purr.len()];
    let mut heap = BinaryHeap::new();
    let si = purr.index(s);
    let gi = purr.index(g);
    cost[si] = 0;
    let h0 = manhattan(s, g);
    heap.push(Reverse((h0, h0, si)));
    while let Some(Reverse((f, h, idx))) = heap.pop() {
        let gc = f - h;
        if gc > cost[idx] {
            continue;
        }
        if idx == gi {
            break;
        }
        let c = purr.cell_of_index(idx);
        for n in neighbors(c, dims) {
            let ni = purr.index(n);
            if purr.cells[ni] || gc + 1 >= cost[ni] {
                continue;
            }
            cost[ni] = gc + 1;
            parent[ni] = idx as u32;
            let nh = manhattan(n, g);
            heap.push(Reverse((gc + 1 + nh, nh, ni)));
        }
    }
    if cost[gi] == u32::MAX {
        return Err(SearchError::NoPath { from: s, to: g });
    }
    let mut voxels = vec![g];
    let mut cur = gi;
    while cur != si {
        cur = parent[cur] as usize;
        voxels.push(purr.cell_of_index(cur));
    }
    voxels.reverse();
    Ok(GridPath {
        voxels,
        start: *p0,
        goal: *pf,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geom::Aabb;
    use crate::ppp::PppConfig;
    use std::collections::VecDeque;

    pub(crate) fn map(dims: [usize; 3], unsafe_cells: impl Fn([usize; 3]) -> bool) -> PurrMap {
        let mut cells = Vec::new();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    cells.push(unsafe_cells([i, j, k]));
                }
            }
        }
        PurrMap {
            dims,
            bbox: Aabb::new([0.0; 3], dims.map(|d| d as f64)),
            cells,
            config: PppConfig::default(),
            robot_radius: 0.0,
        }
    }

    pub(crate) fn center(c: [usize; 3]) -> Vec3 {
        Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5)
    }

    pub(crate) fn bfs(m: &PurrMap, s: [usize; 3], g: [usize; 3]) -> Option<usize> {
        let mut dist = vec![usize::MAX; m.len()];
        let mut q = VecDeque::new();
        dist[m.index(s)] = 0;
        q.push_back(s);
        while let Some(c) = q.pop_front() {
            let d = dist[m.index(c)];
            if c == g {
                return Some(d);
            }
            for n in neighbors(c, m.dims) {
                let ni = m.index(n);
                if !m.cells[ni] && dist[ni] == usize::MAX {
                    dist[ni] = d + 1;
                    q.push_back(n);
                }
            }
        }
        None
    }

    fn check_path(m: &PurrMap, p: &GridPath) {
        for w in p.voxels.windows(2) {
            assert_eq!(manhattan(w[0], w[1]), 1);
        }
        assert!(p.voxels.iter().all(|&c| !m.is_unsafe(c)));
    }

    #[test]
    fn straight_and_diagonal_in_free_space() {
        let m = map([10, 10, 10], |_| false);
        let p = astar(&m, &center([1, 2, 3]), &center([6, 2, 3])).unwrap();
        assert_eq!(p.steps(), 5);
        let p = astar(&m, &center([1, 1, 1]), &center([4, 5, 1])).unwrap();
        assert_eq!(p.steps(), 7);
        check_path(&m, &p);
        assert_eq!(p.voxels[0], [1, 1, 1]);
        assert_eq!(*p.voxels.last().unwrap(), [4, 5, 1]);
    }

    #[test]
    fn threads_single_gap() {
        let m = map([12, 12, 3], |c| c[0] == 6 && !(c[1] == 9 && c[2] == 1));
        let p = astar(&m, &center([2, 2, 1]), &center([10, 2, 1])).unwrap();
        check_path(&m, &p);
        assert!(p.voxels.contains(&[6, 9, 1]));
        assert_eq!(p.steps(), bfs(&m, [2, 2, 1], [10, 2, 1]).unwrap());
    }

    #[test]
    fn error_cases_are_distinct() {
        let m = map([8, 8, 8], |c| c[0] == 4 || c == [0, 0, 0] || c == [7, 7, 7]);
        assert!(matches!(astar(&m, &center([0, 0, 0]), &center([1, 1, 1])), Err(SearchError::StartUnsafe(_))));
        assert!(matches!(astar(&m, &center([1, 1, 1]), &center([7, 7, 7])), Err(SearchError::GoalUnsafe(_))));
        assert!(matches!(astar(&m, &center([1, 1, 1]), &center([6, 1, 1])), Err(SearchError::NoPath { .. })));
        assert!(matches!(
            astar(&m, &Vec3::new(-1.0, 0.5, 0.5), &center([1, 1, 1])),
            Err(SearchError::StartOutside(_))
        ));
    }

    #[test]
    fn start_equals_goal() {
        let m = map([4, 4, 4], |_| false);
        let p = astar(&m, &center([2, 2, 2]), &Vec3::new(2.7, 2.1, 2.9)).unwrap();
        assert_eq!(p.voxels, vec![[2, 2, 2]]);
    }

    #[test]
    fn matches_bfs_on_random_maps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let occ: Vec<bool> = (0..4096).map(|_| rng.random::<f64>() < 0.3).collect();
            let m = map([16; 3], |c| occ[c[0] + 16 * (c[1] + 16 * c[2])]);
            let free: Vec<usize> = (0..m.len()).filter(|&i| !m.cells[i]).collect();
            let s = m.cell_of_index(free[rng.random_range(0..free.len())]);
            let g = m.cell_of_index(free[rng.random_range(0..free.len())]);
            match (astar(&m, &center(s), &center(g)), bfs(&m, s, g)) {
                (Ok(p), Some(d)) => {
                    check_path(&m, &p);
                    assert_eq!(p.steps(), d);
                }
                (Err(SearchError::NoPath { .. }), None) => {}
                other => panic!("{other:?}"),
            }
        }
    }
}
