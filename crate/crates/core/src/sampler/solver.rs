//! Exact branch-and-bound over joint bucket cells.
//!
//! Every NTD dimension partitions the candidates, so a candidate is fully
//! described (for the constraints) by its cell: the tuple of its buckets.
//! Any feasible selection is a count per cell whose per-dimension marginals
//! hit the targets, and for a fixed count the best choice inside a cell is
//! its top items. The search therefore enumerates cell counts, bounding each
//! partial assignment by the best possible completion of every single
//! dimension taken alone.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::constraints::ConstraintSystem;
use super::{SamplerError, SamplerSolution, SamplerStatus};

struct Cell {
    key: Vec<usize>,
    // candidate indices, best first, truncated to what can ever be selected
    items: Vec<usize>,
    // prefix[k] = objective of the first k items
    prefix: Vec<f64>,
}

/// Sorted-descending objective values of the cells from some depth on,
/// per (dimension, bucket), truncated to the bucket's target.
type Suffix = Vec<Vec<Vec<f64>>>;

struct Search<'a> {
    cs: &'a ConstraintSystem,
    cells: Vec<Cell>,
    // suffix_prefix[j][d][b][k]: best sum of k items from cells[j..] in bucket b of dim d
    suffix_prefix: Vec<Suffix>,
    targets: Vec<Vec<usize>>,
    tol: f64,
    counts: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
    best_ids: Vec<String>,
}

// joint cell of a candidate
type CellKey = fn(&ConstraintSystem, usize) -> Vec<usize>;

/// Returns an optimal selection of `cs`, or `None` when no binary `x`
/// satisfies the constraints. Among equally good selections the one whose
/// sorted id list is lexicographically smallest wins.
pub fn solve_exact(cs: &ConstraintSystem) -> Option<SamplerSolution> {
    let n = cs.list_size();
    // no dimensions: a single bucket covering everything
    let (targets, key_of): (Vec<Vec<usize>>, CellKey) =
        if cs.ntd.dimensions.is_empty() {
            (vec![vec![n]], |_, _| vec![0])
        } else {
            (
                cs.ntd.dimensions.iter().map(|d| d.counts.clone()).collect(),
                |cs, c| cs.membership[c].clone(),
            )
        };

    let mut grouped: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for c in 0..cs.candidates.len() {
        grouped.entry(key_of(cs, c)).or_default().push(c);
    }
    let mut cells = Vec::with_capacity(grouped.len());
    for (key, mut items) in grouped {
        let cap = key
            .iter()
            .enumerate()
            .map(|(d, &b)| targets[d][b])
            .min()
            .unwrap_or(n)
            .min(n);
        if cap == 0 {
            continue;
        }
        items.sort_by(|&a, &b| {
            cs.objective[b]
                .total_cmp(&cs.objective[a])
                .then_with(|| cs.candidates[a].cmp(&cs.candidates[b]))
        });
        items.truncate(cap);
        let mut prefix = Vec::with_capacity(items.len() + 1);
        prefix.push(0.0);
        for &i in &items {
            prefix.push(prefix.last().unwrap() + cs.objective[i]);
        }
        cells.push(Cell { key, items, prefix });
    }
    // strongest cells first so the first leaves reached are good incumbents
    cells.sort_by(|a, b| {
        cs.objective[b.items[0]]
            .total_cmp(&cs.objective[a.items[0]])
            .then_with(|| a.key.cmp(&b.key))
    });

    let scale = cs
        .objective
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        * n as f64;
    let mut search = Search {
        cs,
        suffix_prefix: suffixes(cs, &cells, &targets),
        counts: vec![0; cells.len()],
        cells,
        targets,
        tol: 1e-12 * (1.0 + scale),
        best: None,
        best_ids: Vec::new(),
    };
    let residual = search.targets.clone();
    search.dfs(0, residual, 0.0);

    let (_, chosen) = search.best?;
    let mut ids: Vec<(String, usize)> = chosen
        .iter()
        .map(|&c| (cs.candidates[c].clone(), c))
        .collect();
    ids.sort();
    let objective_value = ids.iter().map(|(_, c)| cs.objective[*c]).sum();
    Some(SamplerSolution {
        achieved_size: ids.len(),
        selected: ids.into_iter().map(|(id, _)| id).collect(),
        objective_value,
        status: SamplerStatus::FullSet,
    })
}

fn suffixes(cs: &ConstraintSystem, cells: &[Cell], targets: &[Vec<usize>]) -> Vec<Suffix> {
    let empty: Suffix = targets
        .iter()
        .map(|t| vec![vec![0.0]; t.len()])
        .collect();
    let mut out = vec![empty.clone(); cells.len() + 1];
    // running sorted values per (d, b)
    let mut values: Vec<Vec<Vec<f64>>> = targets.iter().map(|t| vec![Vec::new(); t.len()]).collect();
    for j in (0..cells.len()).rev() {
        let cell = &cells[j];
        for (d, &b) in cell.key.iter().enumerate() {
            let merged = merge_desc(&values[d][b], cell.items.iter().map(|&i| cs.objective[i]), targets[d][b]);
            values[d][b] = merged;
        }
        for (d, per_bucket) in values.iter().enumerate() {
            for (b, vals) in per_bucket.iter().enumerate() {
                let mut p = Vec::with_capacity(vals.len() + 1);
                p.push(0.0);
                for v in vals {
                    p.push(p.last().unwrap() + v);
                }
                out[j][d][b] = p;
            }
        }
    }
    out
}

fn merge_desc(a: &[f64], b: impl Iterator<Item = f64>, limit: usize) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().copied().chain(b).collect();
    out.sort_by(|x, y| y.total_cmp(x));
    out.truncate(limit);
    out
}

impl Search<'_> {
    fn dfs(&mut self, depth: usize, residual: Vec<Vec<usize>>, value: f64) {
        let suffix = &self.suffix_prefix[depth];
        // feasibility and bound in one pass
        let mut bound = f64::INFINITY;
        for (d, per_bucket) in residual.iter().enumerate() {
            let mut dim_bound = 0.0;
            for (b, &r) in per_bucket.iter().enumerate() {
                let p = &suffix[d][b];
                if r >= p.len() {
                    return;
                }
                dim_bound += p[r];
            }
            bound = bound.min(dim_bound);
        }
        let remaining: usize = residual[0].iter().sum();
        if let Some((best, _)) = &self.best {
            let best = *best;
            if value + bound < best - self.tol {
                return;
            }
            if value + bound <= best + self.tol && !self.may_beat_lexicographically(depth, remaining) {
                return;
            }
        }
        if depth == self.cells.len() {
            // residual is all zero here, otherwise the feasibility check failed
            self.offer(value);
            return;
        }
        if remaining == 0 {
            self.counts[depth..].iter_mut().for_each(|c| *c = 0);
            self.offer(value);
            return;
        }

        let key = self.cells[depth].key.clone();
        let next = &self.suffix_prefix[depth + 1];
        let mut k_max = self.cells[depth].items.len();
        let mut k_min = 0;
        for (d, &b) in key.iter().enumerate() {
            let r = residual[d][b];
            k_max = k_max.min(r);
            let after = next[d][b].len() - 1;
            k_min = k_min.max(r.saturating_sub(after));
        }
        if k_min > k_max {
            return;
        }
        for k in (k_min..=k_max).rev() {
            let mut r = residual.clone();
            for (d, &b) in key.iter().enumerate() {
                r[d][b] -= k;
            }
            self.counts[depth] = k;
            let v = value + self.cells[depth].prefix[k];
            self.dfs(depth + 1, r, v);
        }
        self.counts[depth] = 0;
    }

    fn current_selection(&self, depth: usize) -> Vec<usize> {
        self.cells[..depth]
            .iter()
            .zip(&self.counts)
            .flat_map(|(cell, &k)| cell.items[..k].iter().copied())
            .collect()
    }

    fn offer(&mut self, value: f64) {
        let chosen = self.current_selection(self.cells.len());
        let mut ids: Vec<String> = chosen.iter().map(|&c| self.cs.candidates[c].clone()).collect();
        ids.sort();
        let better = match &self.best {
            None => true,
            Some((best, _)) => {
                value > best + self.tol || (value >= best - self.tol && ids < self.best_ids)
            }
        };
        if better {
            self.best = Some((value, chosen));
            self.best_ids = ids;
        }
    }

    /// Whether some completion of the partial assignment could have a
    /// lexicographically smaller id set than the incumbent. Relaxes the
    /// completion to the `remaining` smallest ids still available.
    fn may_beat_lexicographically(&self, depth: usize, remaining: usize) -> bool {
        let cs = self.cs;
        let mut ids: Vec<&str> = self
            .current_selection(depth)
            .into_iter()
            .map(|c| cs.candidates[c].as_str())
            .collect();
        let mut pool: Vec<&str> = self.cells[depth..]
            .iter()
            .flat_map(|cell| cell.items.iter().map(|&c| cs.candidates[c].as_str()))
            .collect();
        pool.sort_unstable();
        ids.extend(pool.into_iter().take(remaining));
        ids.sort_unstable();
        let best: Vec<&str> = self.best_ids.iter().map(String::as_str).collect();
        ids < best
    }
}

/// Shrinks the list one item at a time, re-rounding the original
/// proportions at each size, and returns the largest size that is feasible.
/// Only valid when the full-size system is infeasible.
pub fn reduce_and_retry(cs: &ConstraintSystem) -> Result<SamplerSolution, SamplerError> {
    if solve_exact(cs).is_some() {
        return Err(SamplerError::AlreadyFeasible);
    }
    for n in (1..cs.list_size()).rev() {
        let reduced = cs.with_size(n)?;
        if let Some(mut sol) = solve_exact(&reduced) {
            sol.status = SamplerStatus::ReducedSet(n);
            return Ok(sol);
        }
    }
    Ok(SamplerSolution::empty())
}
