//! Hopcroft-Karp maximum bipartite matching and König vertex covers.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct Bipartite {
    pub left: usize,
    pub right: usize,
    pub adj: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub left: Vec<Option<usize>>,
    pub right: Vec<Option<usize>>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cover {
    pub left: Vec<bool>,
    pub right: Vec<bool>,
}

impl Cover {
    pub fn size(&self) -> usize {
        self.left.iter().chain(&self.right).filter(|&&b| b).count()
    }
}

const FREE: usize = usize::MAX;

impl Bipartite {
    pub fn new(left: usize, right: usize) -> Bipartite {
        Bipartite {
            left,
            right,
            adj: vec![Vec::new(); left],
        }
    }

    pub fn add_edge(&mut self, l: usize, r: usize) {
        if !self.adj[l].contains(&r) {
            self.adj[l].push(r);
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(l, rs)| rs.iter().map(move |&r| (l, r)))
    }

    pub fn max_matching(&self) -> Matching {
        let mut ml = vec![FREE; self.left];
        let mut mr = vec![FREE; self.right];
        let mut dist = vec![0usize; self.left];
        let mut size = 0;
        loop {
            // Layer free left vertices and alternate along matched edges.
            let mut queue = VecDeque::new();
            let mut found = false;
            for l in 0..self.left {
                if ml[l] == FREE {
                    dist[l] = 0;
                    queue.push_back(l);
                } else {
                    dist[l] = usize::MAX;
                }
            }
            while let Some(l) = queue.pop_front() {
                for &r in &self.adj[l] {
                    let next = mr[r];
                    if next == FREE {
                        found = true;
                    } else if dist[next] == usize::MAX {
                        dist[next] = dist[l] + 1;
                        queue.push_back(next);
                    }
                }
            }
            if !found {
                break;
            }
            for l in 0..self.left {
                if ml[l] == FREE && self.augment(l, &mut ml, &mut mr, &mut dist) {
                    size += 1;
                }
            }
        }
        let wrap = |v: Vec<usize>| v.into_iter().map(|x| (x != FREE).then_some(x)).collect();
        Matching {
            left: wrap(ml),
            right: wrap(mr),
            size,
        }
    }

    fn augment(&self, l: usize, ml: &mut [usize], mr: &mut [usize], dist: &mut [usize]) -> bool {
        for &r in &self.adj[l] {
            let next = mr[r];
            if next == FREE || (dist[next] == dist[l] + 1 && self.augment(next, ml, mr, dist)) {
                ml[l] = r;
                mr[r] = l;
                return true;
            }
        }
        dist[l] = usize::MAX;
        false
    }

    /// Minimum vertex cover from a maximum matching (König).
    pub fn min_vertex_cover(&self) -> Cover {
        let m = self.max_matching();
        let mut seen_l = vec![false; self.left];
        let mut seen_r = vec![false; self.right];
        let mut queue: VecDeque<usize> = (0..self.left).filter(|&l| m.left[l].is_none()).collect();
        for &l in &queue {
            seen_l[l] = true;
        }
        while let Some(l) = queue.pop_front() {
            for &r in &self.adj[l] {
                if m.left[l] == Some(r) || seen_r[r] {
                    continue;
                }
                seen_r[r] = true;
                if let Some(next) = m.right[r] {
                    if !seen_l[next] {
                        seen_l[next] = true;
                        queue.push_back(next);
                    }
                }
            }
        }
        Cover {
            left: seen_l.iter().map(|&s| !s).collect(),
            right: seen_r,
        }
    }
}
