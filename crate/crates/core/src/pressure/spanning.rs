use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::setops::GridSet;
use crate::system::{step, ControlSequence, ControlSystem, State};

/// Search nodes allowed in the branch-and-bound phase.
const NODE_BUDGET: usize = 5_000_000;

#[derive(Clone, Debug, Serialize)]
pub struct SpanningCount {
    /// Size of the best cover found.
    pub count: usize,
    /// A lower bound on the minimum (a set of cells no two of which share a
    /// covering codeword).
    pub lower_bound: usize,
    /// `count` is proven minimal.
    pub exact: bool,
    /// Codebook indices of the cover.
    pub chosen: Vec<usize>,
    pub cells: usize,
}

type Bits = Vec<u64>;

fn set(b: &mut Bits, i: usize) {
    b[i / 64] |= 1 << (i % 64);
}

fn get(b: &Bits, i: usize) -> bool {
    b[i / 64] >> (i % 64) & 1 == 1
}

fn count_new(cover: &Bits, covered: &Bits) -> usize {
    cover.iter().zip(covered).map(|(c, d)| (c & !d).count_ones() as usize).sum()
}

/// Minimal number of codebook sequences needed so that every cell centre
/// of `k` has its orbit `x_0, …, x_τ` inside `q` under one of them.
///
/// A greedy cover gives an upper bound and a greedy packing a lower bound;
/// when they differ a budgeted branch-and-bound closes the gap (always
/// exhaustive for codebooks of at most 20 entries).
pub fn spanning_count_oracle(
    sys: &dyn ControlSystem,
    k: &GridSet,
    q: &GridSet,
    tau: usize,
    codebook: &[ControlSequence],
) -> Result<SpanningCount> {
    if codebook.is_empty() {
        return Err(Error::Precondition("empty codebook".into()));
    }
    if k.is_empty() {
        return Err(Error::Precondition("K has no cells".into()));
    }
    let n = k.len();
    let words = n.div_ceil(64);
    let centers: Vec<State> = k.cells().iter().map(|&c| State::from_vec(k.center(c))).collect();
    let covers: Vec<Bits> = codebook
        .par_iter()
        .map(|u| {
            let mut b = vec![0u64; words];
            'cell: for (i, x) in centers.iter().enumerate() {
                let mut cur = x.clone();
                if !q.contains_point(cur.as_slice()) {
                    continue;
                }
                for t in 0..tau as i64 {
                    cur = step(sys, &cur, u.at(t)?)?;
                    if !q.contains_point(cur.as_slice()) {
                        continue 'cell;
                    }
                }
                set(&mut b, i);
            }
            Ok(b)
        })
        .collect::<Result<_>>()?;

    let options: Vec<Vec<usize>> =
        (0..n).map(|i| (0..codebook.len()).filter(|&c| get(&covers[c], i)).collect()).collect();
    if options.iter().any(|o| o.is_empty()) {
        return Err(Error::NotAdmissible);
    }

    // greedy cover, then drop redundant members
    let mut covered = vec![0u64; words];
    let mut chosen: Vec<usize> = Vec::new();
    while covered.iter().map(|w| w.count_ones() as usize).sum::<usize>() < n {
        let best = (0..codebook.len()).max_by_key(|&c| (count_new(&covers[c], &covered), std::cmp::Reverse(c))).unwrap();
        chosen.push(best);
        for (a, b) in covered.iter_mut().zip(&covers[best]) {
            *a |= b;
        }
    }
    let mut j = 0;
    while j < chosen.len() {
        let others: Vec<usize> = chosen.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &c)| c).collect();
        let full = (0..n).all(|i| others.iter().any(|&c| get(&covers[c], i)));
        if full {
            chosen.remove(j);
        } else {
            j += 1;
        }
    }

    // greedy packing of cells with pairwise disjoint option sets
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (options[i].len(), i));
    let mut used = vec![false; codebook.len()];
    let mut lower = 0;
    for i in order {
        if options[i].iter().all(|&c| !used[c]) {
            lower += 1;
            for &c in &options[i] {
                used[c] = true;
            }
        }
    }

    let mut exact = lower == chosen.len();
    if !exact {
        let mut search = Search {
            covers: &covers,
            options: &options,
            n,
            best: chosen.clone(),
            nodes: 0,
            max_gain: covers.iter().map(|b| b.iter().map(|w| w.count_ones() as usize).sum()).max().unwrap_or(1).max(1),
        };
        let mut path = Vec::new();
        search.run(&vec![0u64; words], &mut path);
        exact = search.nodes <= NODE_BUDGET;
        chosen = search.best;
    }
    chosen.sort_unstable();
    Ok(SpanningCount { count: chosen.len(), lower_bound: lower.min(chosen.len()), exact, chosen, cells: n })
}

struct Search<'a> {
    covers: &'a [Bits],
    options: &'a [Vec<usize>],
    n: usize,
    best: Vec<usize>,
    nodes: usize,
    max_gain: usize,
}

impl Search<'_> {
    fn run(&mut self, covered: &Bits, path: &mut Vec<usize>) {
        self.nodes += 1;
        if self.nodes > NODE_BUDGET {
            return;
        }
        let done: usize = covered.iter().map(|w| w.count_ones() as usize).sum();
        if done == self.n {
            if path.len() < self.best.len() {
                self.best = path.clone();
            }
            return;
        }
        let need = (self.n - done).div_ceil(self.max_gain);
        if path.len() + need >= self.best.len() {
            return;
        }
        // branch on the uncovered cell with the fewest options
        let cell = (0..self.n).filter(|&i| !get(covered, i)).min_by_key(|&i| self.options[i].len()).unwrap();
        let mut opts = self.options[cell].clone();
        opts.sort_by_key(|&c| std::cmp::Reverse(count_new(&self.covers[c], covered)));
        for c in opts {
            let next: Bits = covered.iter().zip(&self.covers[c]).map(|(a, b)| a | b).collect();
            path.push(c);
            self.run(&next, path);
            path.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{ControlRange, LinearSystem};
    use nalgebra::{DMatrix, DVector};

    fn doubling() -> LinearSystem {
        LinearSystem::new(
            "doubling",
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
            ControlRange::symmetric_box(1, 0.5),
        )
        .unwrap()
    }

    fn constants(values: &[f64]) -> Vec<ControlSequence> {
        values.iter().map(|&v| ControlSequence::constant(DVector::from_element(1, v))).collect()
    }

    #[test]
    fn doubling_one_step_needs_two() {
        let sys = doubling();
        let q = GridSet::full(vec![-0.5], vec![0.5], 64).unwrap();
        let r = spanning_count_oracle(&sys, &q, &q, 1, &constants(&[-0.5, 0.0, 0.5])).unwrap();
        assert_eq!(r.count, 2);
        assert!(r.exact);
        assert_eq!(r.chosen, vec![0, 2]);
    }

    #[test]
    fn contraction_needs_one() {
        let sys = LinearSystem::new(
            "half",
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            ControlRange::symmetric_box(1, 0.5),
        )
        .unwrap();
        let q = GridSet::full(vec![-1.0], vec![1.0], 32).unwrap();
        let k = q.with_cells(vec![3, 4, 20]).unwrap();
        let r = spanning_count_oracle(&sys, &k, &q, 5, &constants(&[0.0, 0.3])).unwrap();
        assert_eq!(r.count, 1);
        assert!(r.exact);
    }

    #[test]
    fn inadmissible_pair() {
        let sys = doubling();
        let q = GridSet::full(vec![-1.0], vec![1.0], 64).unwrap();
        let err = spanning_count_oracle(&sys, &q, &q, 1, &constants(&[0.0])).unwrap_err();
        assert!(matches!(err, Error::NotAdmissible));
    }
}
