//! Weighted bipartite networks and their statistics.
//!
//! Global descriptors: web asymmetry, weighted modularity (Barber's Q
//! maximized by a label-propagation + agglomeration scheme after Beckett's
//! LPAwb+), weighted nestedness (WNODF after Almeida-Neto & Ulrich, scaled
//! to [0,1]), link-level interaction asymmetry, and quantitative connectance
//! after Bersier et al. Node descriptors: dependence push/pull and nested
//! rank. Nodes with zero marginal are excluded before any statistic is
//! computed.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{DailyCounts, DayRange};

#[derive(Error, Debug)]
pub enum NetError {
    #[error("network has no links")]
    Empty,
    #[error("statistic needs at least two retained nodes of each kind (have {features}x{activities})")]
    Degenerate { features: usize, activities: usize },
    #[error("range {range} not covered by counts window {window}")]
    RangeOutsideWindow { range: DayRange, window: DayRange },
    #[error("labels and weight matrix shapes disagree")]
    ShapeMismatch,
}

/// Labeled nonnegative weight matrix (features x activities).
#[derive(Debug, Clone)]
pub struct BipartiteNetwork {
    features: Vec<String>,
    activities: Vec<String>,
    weights: Array2<f64>,
}

impl BipartiteNetwork {
    pub fn new(
        features: Vec<String>,
        activities: Vec<String>,
        weights: Array2<f64>,
    ) -> Result<Self, NetError> {
        if weights.nrows() != features.len() || weights.ncols() != activities.len() {
            return Err(NetError::ShapeMismatch);
        }
        Ok(Self {
            features,
            activities,
            weights,
        })
    }

    /// Sum the count tensor over a day range: `W[f,a] = sum_d counts[f,a,d]`.
    pub fn from_counts(counts: &DailyCounts, range: DayRange) -> Result<Self, NetError> {
        let window = counts.window();
        let (Some(start), Some(end)) = (window.index_of(range.start), window.index_of(range.end))
        else {
            return Err(NetError::RangeOutsideWindow { range, window });
        };
        let mut weights = Array2::<f64>::zeros((counts.features().len(), counts.activities().len()));
        for d in start..=end {
            let slice = counts.day_slice(d);
            weights.zip_mut_with(&slice, |w, &c| *w += c as f64);
        }
        Ok(Self {
            features: counts.features().to_vec(),
            activities: counts.activities().to_vec(),
            weights,
        })
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.sum()
    }

    pub fn feature_totals(&self) -> Vec<f64> {
        self.weights.sum_axis(Axis(1)).to_vec()
    }

    pub fn activity_totals(&self) -> Vec<f64> {
        self.weights.sum_axis(Axis(0)).to_vec()
    }

    /// Copy with every zero-marginal row and column dropped.
    pub fn without_isolated(&self) -> BipartiteNetwork {
        let row_keep: Vec<usize> = self
            .feature_totals()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0.0)
            .map(|(i, _)| i)
            .collect();
        let col_keep: Vec<usize> = self
            .activity_totals()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0.0)
            .map(|(i, _)| i)
            .collect();
        let mut weights = Array2::<f64>::zeros((row_keep.len(), col_keep.len()));
        for (ri, &r) in row_keep.iter().enumerate() {
            for (ci, &c) in col_keep.iter().enumerate() {
                weights[[ri, ci]] = self.weights[[r, c]];
            }
        }
        BipartiteNetwork {
            features: row_keep.iter().map(|&r| self.features[r].clone()).collect(),
            activities: col_keep.iter().map(|&c| self.activities[c].clone()).collect(),
            weights,
        }
    }

    pub fn scaled(&self, factor: f64) -> BipartiteNetwork {
        BipartiteNetwork {
            features: self.features.clone(),
            activities: self.activities.clone(),
            weights: &self.weights * factor,
        }
    }
}

/// The five global descriptors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NetworkStats {
    pub web_asymmetry: f64,
    pub modularity: f64,
    pub weighted_nestedness: f64,
    pub interaction_asymmetry: f64,
    pub weighted_connectance: f64,
}

/// Per-node values for one statistic, reported per kind.
#[derive(Debug, Clone, Default)]
pub struct NodeScores {
    pub features: Vec<(String, f64)>,
    pub activities: Vec<(String, f64)>,
}

/// Controls the seeded modularity search.
#[derive(Debug, Clone, Copy)]
pub struct ModularityConfig {
    pub restarts: u32,
    pub seed: u64,
}

impl Default for ModularityConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            seed: 42,
        }
    }
}

/// Module assignments for every retained node.
#[derive(Debug, Clone)]
pub struct Partition {
    pub features: Vec<(String, u32)>,
    pub activities: Vec<(String, u32)>,
}

/// Compute all five global statistics on the retained network.
pub fn network_stats(
    net: &BipartiteNetwork,
    config: &ModularityConfig,
) -> Result<NetworkStats, NetError> {
    let retained = net.without_isolated();
    let (modularity, _) = bipartite_modularity(&retained, config)?;
    Ok(NetworkStats {
        web_asymmetry: web_asymmetry(&retained)?,
        modularity,
        weighted_nestedness: weighted_nestedness(&retained)?,
        interaction_asymmetry: interaction_asymmetry(&retained)?,
        weighted_connectance: weighted_connectance(&retained)?,
    })
}

/// Normalized node-count difference `(A - F) / (A + F)` over retained nodes.
pub fn web_asymmetry(net: &BipartiteNetwork) -> Result<f64, NetError> {
    let retained = net.without_isolated();
    let f = retained.features.len() as f64;
    let a = retained.activities.len() as f64;
    if f + a == 0.0 {
        return Err(NetError::Empty);
    }
    Ok((a - f) / (a + f))
}

fn shannon_entropy_bits(weights: impl Iterator<Item = f64>, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for w in weights {
        if w > 0.0 {
            let p = w / total;
            h -= p * p.log2();
        }
    }
    h
}

/// Quantitative connectance `C_q = LD_q / (F + A)` where the link density
/// `LD_q` weighs each node's effective partner diversity `2^H` by its
/// marginal share (Bersier et al. 2002).
pub fn weighted_connectance(net: &BipartiteNetwork) -> Result<f64, NetError> {
    let retained = net.without_isolated();
    let m = retained.total_weight();
    if m <= 0.0 {
        return Err(NetError::Empty);
    }
    let w = &retained.weights;
    let mut weighted_diversity = 0.0;
    for (a, &col_total) in retained.activity_totals().iter().enumerate() {
        let h = shannon_entropy_bits(w.column(a).iter().copied(), col_total);
        weighted_diversity += col_total * h.exp2();
    }
    for (f, &row_total) in retained.feature_totals().iter().enumerate() {
        let h = shannon_entropy_bits(w.row(f).iter().copied(), row_total);
        weighted_diversity += row_total * h.exp2();
    }
    let linkage_density = weighted_diversity / (2.0 * m);
    let species = (retained.features.len() + retained.activities.len()) as f64;
    Ok(linkage_density / species)
}

/// Strictly greater, with marginal-total ties detected up to a relative
/// 1e-12. Rescaling a network perturbs exactly-tied totals by an ulp;
/// without the tolerance that would create or destroy pairs.
fn definitely_greater(a: f64, b: f64) -> bool {
    a > b && (a - b) > 1e-12 * a.abs().max(b.abs())
}

/// Weighted NODF scaled to [0,1].
///
/// For every unordered pair of rows (and of columns), the pair contributes
/// a paired overlap only when one marginal total strictly exceeds the
/// other: the fraction of the lighter line's nonzero cells that are
/// strictly smaller than the heavier line's matching cells. The mean over
/// all pairs (zero-contributing pairs included) is the conventional
/// NODF/100.
pub fn weighted_nestedness(net: &BipartiteNetwork) -> Result<f64, NetError> {
    let retained = net.without_isolated();
    let nr = retained.features.len();
    let nc = retained.activities.len();
    if nr < 2 || nc < 2 {
        return Err(NetError::Degenerate {
            features: nr,
            activities: nc,
        });
    }
    let w = &retained.weights;
    let row_totals = retained.feature_totals();
    let col_totals = retained.activity_totals();

    let mut overlap_sum = 0.0;
    for i in 0..nr {
        for j in (i + 1)..nr {
            let (hi, lo) = if definitely_greater(row_totals[i], row_totals[j]) {
                (i, j)
            } else if definitely_greater(row_totals[j], row_totals[i]) {
                (j, i)
            } else {
                continue;
            };
            let mut decreasing = 0usize;
            let mut filled = 0usize;
            for c in 0..nc {
                let lo_w = w[[lo, c]];
                if lo_w > 0.0 {
                    filled += 1;
                    if lo_w < w[[hi, c]] {
                        decreasing += 1;
                    }
                }
            }
            if filled > 0 {
                overlap_sum += decreasing as f64 / filled as f64;
            }
        }
    }
    for i in 0..nc {
        for j in (i + 1)..nc {
            let (hi, lo) = if definitely_greater(col_totals[i], col_totals[j]) {
                (i, j)
            } else if definitely_greater(col_totals[j], col_totals[i]) {
                (j, i)
            } else {
                continue;
            };
            let mut decreasing = 0usize;
            let mut filled = 0usize;
            for r in 0..nr {
                let lo_w = w[[r, lo]];
                if lo_w > 0.0 {
                    filled += 1;
                    if lo_w < w[[r, hi]] {
                        decreasing += 1;
                    }
                }
            }
            if filled > 0 {
                overlap_sum += decreasing as f64 / filled as f64;
            }
        }
    }

    let pairs = (nr * (nr - 1) / 2 + nc * (nc - 1) / 2) as f64;
    Ok(overlap_sum / pairs)
}

/// Mean link-level dependence asymmetry
/// `|d(f->a) - d(a->f)| / max(d(f->a), d(a->f))` where
/// `d(f->a) = W[f,a]/W_f+` and `d(a->f) = W[f,a]/W_+a`.
pub fn interaction_asymmetry(net: &BipartiteNetwork) -> Result<f64, NetError> {
    let retained = net.without_isolated();
    if retained.total_weight() <= 0.0 {
        return Err(NetError::Empty);
    }
    let w = &retained.weights;
    let row_totals = retained.feature_totals();
    let col_totals = retained.activity_totals();
    let mut sum = 0.0;
    let mut links = 0usize;
    for f in 0..retained.features.len() {
        for a in 0..retained.activities.len() {
            let weight = w[[f, a]];
            if weight > 0.0 {
                let d_fa = weight / row_totals[f];
                let d_af = weight / col_totals[a];
                sum += (d_fa - d_af).abs() / d_fa.max(d_af);
                links += 1;
            }
        }
    }
    Ok(sum / links as f64)
}

/// Node-level dependence asymmetry: the mean over a node's partners of
/// `(d(partner->node) - d(node->partner)) / max(...)`. Positive nodes push
/// (their partners depend on them more than the reverse).
pub fn push_pull(net: &BipartiteNetwork) -> Result<NodeScores, NetError> {
    let retained = net.without_isolated();
    if retained.total_weight() <= 0.0 {
        return Err(NetError::Empty);
    }
    let w = &retained.weights;
    let row_totals = retained.feature_totals();
    let col_totals = retained.activity_totals();
    let nr = retained.features.len();
    let nc = retained.activities.len();

    let mut scores = NodeScores::default();
    for f in 0..nr {
        let mut sum = 0.0;
        let mut partners = 0usize;
        for a in 0..nc {
            let weight = w[[f, a]];
            if weight > 0.0 {
                let d_fa = weight / row_totals[f]; // f's dependence on a
                let d_af = weight / col_totals[a]; // a's dependence on f
                sum += (d_af - d_fa) / d_af.max(d_fa);
                partners += 1;
            }
        }
        scores
            .features
            .push((retained.features[f].clone(), sum / partners as f64));
    }
    for a in 0..nc {
        let mut sum = 0.0;
        let mut partners = 0usize;
        for f in 0..nr {
            let weight = w[[f, a]];
            if weight > 0.0 {
                let d_fa = weight / row_totals[f];
                let d_af = weight / col_totals[a];
                sum += (d_fa - d_af) / d_af.max(d_fa);
                partners += 1;
            }
        }
        scores
            .activities
            .push((retained.activities[a].clone(), sum / partners as f64));
    }
    Ok(scores)
}

fn ranks_on_grid(labels: &[String], totals: &[f64]) -> Vec<(String, f64)> {
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Descending total, ties by ascending label.
    order.sort_by(|&i, &j| {
        totals[j]
            .partial_cmp(&totals[i])
            .unwrap()
            .then_with(|| labels[i].cmp(&labels[j]))
    });
    // Runs of near-tied totals (relative 1e-12) reorder by label, so the
    // ranking is stable under weight rescaling.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n
            && !definitely_greater(totals[order[end - 1]], totals[order[end]])
        {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by(|&i, &j| labels[i].cmp(&labels[j]));
        }
        start = end;
    }
    let denom = (n - 1).max(1) as f64;
    let mut out: Vec<(String, f64)> = vec![(String::new(), 0.0); n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = (labels[i].clone(), rank as f64 / denom);
    }
    out
}

/// Scaled generality rank within each kind: the node with the largest
/// weighted marginal scores 0 and the smallest scores 1, on the exact grid
/// `k/(n-1)`. Ties break by ascending label.
pub fn nested_rank(net: &BipartiteNetwork) -> Result<NodeScores, NetError> {
    let retained = net.without_isolated();
    let nr = retained.features.len();
    let nc = retained.activities.len();
    if nr < 2 || nc < 2 {
        return Err(NetError::Degenerate {
            features: nr,
            activities: nc,
        });
    }
    Ok(NodeScores {
        features: ranks_on_grid(&retained.features, &retained.feature_totals()),
        activities: ranks_on_grid(&retained.activities, &retained.activity_totals()),
    })
}

/// Barber's weighted bipartite modularity for a given labeling:
/// `Q = (1/m) sum_{f,a} (W[f,a] - W_f+ W_+a / m) delta(g_f, g_a)`.
pub fn modularity_of_partition(
    weights: &Array2<f64>,
    row_modules: &[u32],
    col_modules: &[u32],
) -> f64 {
    let m = weights.sum();
    if m <= 0.0 {
        return 0.0;
    }
    let row_totals = weights.sum_axis(Axis(1));
    let col_totals = weights.sum_axis(Axis(0));
    let mut q = 0.0;
    for f in 0..weights.nrows() {
        for a in 0..weights.ncols() {
            if row_modules[f] == col_modules[a] {
                q += weights[[f, a]] - row_totals[f] * col_totals[a] / m;
            }
        }
    }
    q / m
}

/// Maximize Barber's Q with seeded label propagation plus agglomerative
/// merging, over `config.restarts` restarts. Returns the best Q found and
/// its partition; the trivial one-module labeling (Q = 0) is always a
/// candidate. Identical seeds give identical results; among equal Q the
/// earliest restart wins.
pub fn bipartite_modularity(
    net: &BipartiteNetwork,
    config: &ModularityConfig,
) -> Result<(f64, Partition), NetError> {
    let retained = net.without_isolated();
    let m = retained.total_weight();
    if m <= 0.0 {
        return Err(NetError::Empty);
    }
    // Normalizing by the total makes the search scale-free.
    let weights = &retained.weights / m;

    let mut best_q = 0.0;
    let mut best: (Vec<u32>, Vec<u32>) = (
        vec![0; retained.features.len()],
        vec![0; retained.activities.len()],
    );

    let base = lpa_wb_plus(&weights, None, &mut restart_rng(config.seed, 0));
    let module_count = count_modules(&base.0, &base.1);
    if base.2 > best_q {
        best_q = base.2;
        best = (base.0, base.1);
    }

    // Restart around smaller initial module guesses, as the agglomeration
    // stage can only merge what label propagation separated.
    let guess_range = module_count.max(2) as u32;
    for restart in 1..=config.restarts as u64 {
        let guess = 1 + (restart as u32 - 1) % guess_range;
        let mut rng = restart_rng(config.seed, restart);
        let (rows, cols, q) = lpa_wb_plus(&weights, Some(guess), &mut rng);
        if q > best_q {
            best_q = q;
            best = (rows, cols);
        }
    }

    let partition = Partition {
        features: retained
            .features
            .iter()
            .cloned()
            .zip(best.0.iter().copied())
            .collect(),
        activities: retained
            .activities
            .iter()
            .cloned()
            .zip(best.1.iter().copied())
            .collect(),
    };
    Ok((best_q, partition))
}

fn restart_rng(seed: u64, restart: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ restart.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn count_modules(rows: &[u32], cols: &[u32]) -> usize {
    let mut seen: Vec<u32> = rows.iter().chain(cols.iter()).copied().collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// One run of label propagation (stage 1) refined by agglomerative module
/// merging (stage 2), after Beckett's LPAwb+.
fn lpa_wb_plus(
    weights: &Array2<f64>,
    init_modules: Option<u32>,
    rng: &mut ChaCha8Rng,
) -> (Vec<u32>, Vec<u32>, f64) {
    let nr = weights.nrows();
    let nc = weights.ncols();
    let row_totals: Vec<f64> = weights.sum_axis(Axis(1)).to_vec();
    let col_totals: Vec<f64> = weights.sum_axis(Axis(0)).to_vec();
    let m = weights.sum();

    let mut row_labels: Vec<u32> = match init_modules {
        None => (0..nr as u32).collect(),
        Some(k) => (0..nr).map(|_| rng.random_range(0..k)).collect(),
    };
    let mut col_labels: Vec<u32> = vec![u32::MAX; nc]; // unset

    let mut q = propagate(
        weights,
        &row_totals,
        &col_totals,
        m,
        &mut row_labels,
        &mut col_labels,
        rng,
    );

    // Agglomeration: try merging module pairs while any merge improves Q,
    // re-running propagation after each sweep.
    loop {
        let mut modules: Vec<u32> = {
            let mut v: Vec<u32> = row_labels
                .iter()
                .chain(col_labels.iter())
                .copied()
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        if modules.len() <= 1 {
            break;
        }
        let mut merged_any = false;
        'outer: for i in 0..modules.len() {
            for j in (i + 1)..modules.len() {
                let (from, into) = (modules[i], modules[j]);
                let mut rows_try = row_labels.clone();
                let mut cols_try = col_labels.clone();
                for l in rows_try.iter_mut().chain(cols_try.iter_mut()) {
                    if *l == from {
                        *l = into;
                    }
                }
                let q_try = modularity_of_partition(weights, &rows_try, &cols_try);
                if q_try > q {
                    row_labels = rows_try;
                    col_labels = cols_try;
                    q = q_try;
                    merged_any = true;
                    break 'outer;
                }
            }
        }
        if !merged_any {
            break;
        }
        q = propagate(
            weights,
            &row_totals,
            &col_totals,
            m,
            &mut row_labels,
            &mut col_labels,
            rng,
        );
        modules.clear();
    }

    (row_labels, col_labels, q)
}

/// Alternate best-label sweeps over columns and rows until Q stops
/// improving. A node's best label maximizes its summed within-module weight
/// minus the degree-preserving null expectation.
fn propagate(
    weights: &Array2<f64>,
    row_totals: &[f64],
    col_totals: &[f64],
    m: f64,
    row_labels: &mut Vec<u32>,
    col_labels: &mut Vec<u32>,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let nr = weights.nrows();
    let nc = weights.ncols();

    // Weighted degree of each module on the row side.
    let mut q_prev = f64::NEG_INFINITY;
    loop {
        // Columns adopt the best row-side label.
        let row_choices = distinct(row_labels);
        let mut row_module_degree: BTreeMap<u32, f64> = BTreeMap::new();
        for (r, &l) in row_labels.iter().enumerate() {
            *row_module_degree.entry(l).or_insert(0.0) += row_totals[r];
        }
        for c in 0..nc {
            let mut best_score = f64::NEG_INFINITY;
            let mut best_labels: Vec<u32> = Vec::new();
            for &choice in &row_choices {
                let attached: f64 = (0..nr)
                    .filter(|&r| row_labels[r] == choice)
                    .map(|r| weights[[r, c]])
                    .sum();
                let score = attached - col_totals[c] * row_module_degree[&choice] / m;
                if score > best_score {
                    best_score = score;
                    best_labels.clear();
                    best_labels.push(choice);
                } else if score == best_score {
                    best_labels.push(choice);
                }
            }
            col_labels[c] = *best_labels.choose(rng).expect("non-empty choices");
        }

        // Rows adopt the best column-side label.
        let col_choices = distinct(col_labels);
        let mut col_module_degree: BTreeMap<u32, f64> = BTreeMap::new();
        for (c, &l) in col_labels.iter().enumerate() {
            *col_module_degree.entry(l).or_insert(0.0) += col_totals[c];
        }
        for r in 0..nr {
            let mut best_score = f64::NEG_INFINITY;
            let mut best_labels: Vec<u32> = Vec::new();
            for &choice in &col_choices {
                let attached: f64 = (0..nc)
                    .filter(|&c| col_labels[c] == choice)
                    .map(|c| weights[[r, c]])
                    .sum();
                let score = attached - row_totals[r] * col_module_degree[&choice] / m;
                if score > best_score {
                    best_score = score;
                    best_labels.clear();
                    best_labels.push(choice);
                } else if score == best_score {
                    best_labels.push(choice);
                }
            }
            row_labels[r] = *best_labels.choose(rng).expect("non-empty choices");
        }

        let q = modularity_of_partition(weights, row_labels, col_labels);
        if q <= q_prev {
            return q.max(q_prev);
        }
        q_prev = q;
    }
}

fn distinct(labels: &[u32]) -> Vec<u32> {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    fn net(weights: Array2<f64>) -> BipartiteNetwork {
        let features = (0..weights.nrows()).map(|i| format!("f{i:02}")).collect();
        let activities = (0..weights.ncols()).map(|i| format!("a{i:02}")).collect();
        BipartiteNetwork::new(features, activities, weights).unwrap()
    }

    /// Straight-line re-derivation of the Bersier et al. quantitative
    /// connectance, kept independent of the implementation (natural logs,
    /// index-by-index loops).
    fn connectance_oracle(w: &Array2<f64>) -> f64 {
        let m: f64 = w.iter().sum();
        let ln2 = std::f64::consts::LN_2;
        let mut ld = 0.0;
        for c in 0..w.ncols() {
            let total: f64 = (0..w.nrows()).map(|r| w[[r, c]]).sum();
            if total > 0.0 {
                let mut h = 0.0;
                for r in 0..w.nrows() {
                    let p = w[[r, c]] / total;
                    if p > 0.0 {
                        h -= p * p.ln() / ln2;
                    }
                }
                ld += total * (2.0f64).powf(h);
            }
        }
        for r in 0..w.nrows() {
            let total: f64 = (0..w.ncols()).map(|c| w[[r, c]]).sum();
            if total > 0.0 {
                let mut h = 0.0;
                for c in 0..w.ncols() {
                    let p = w[[r, c]] / total;
                    if p > 0.0 {
                        h -= p * p.ln() / ln2;
                    }
                }
                ld += total * (2.0f64).powf(h);
            }
        }
        ld / (2.0 * m) / ((w.nrows() + w.ncols()) as f64)
    }

    /// Pair-enumeration oracle for WNODF/100, written directly from the
    /// definition over explicit (heavier, lighter) line pairs.
    pub(crate) fn wnodf_oracle(w: &Array2<f64>) -> f64 {
        let nr = w.nrows();
        let nc = w.ncols();
        let row_tot: Vec<f64> = (0..nr).map(|r| (0..nc).map(|c| w[[r, c]]).sum()).collect();
        let col_tot: Vec<f64> = (0..nc).map(|c| (0..nr).map(|r| w[[r, c]]).sum()).collect();
        let mut sum = 0.0;
        for i in 0..nr {
            for j in 0..nr {
                if row_tot[i] > row_tot[j] {
                    let filled = (0..nc).filter(|&c| w[[j, c]] > 0.0).count();
                    let dec = (0..nc)
                        .filter(|&c| w[[j, c]] > 0.0 && w[[j, c]] < w[[i, c]])
                        .count();
                    if filled > 0 {
                        sum += dec as f64 / filled as f64;
                    }
                }
            }
        }
        for i in 0..nc {
            for j in 0..nc {
                if col_tot[i] > col_tot[j] {
                    let filled = (0..nr).filter(|&r| w[[r, j]] > 0.0).count();
                    let dec = (0..nr)
                        .filter(|&r| w[[r, j]] > 0.0 && w[[r, j]] < w[[r, i]])
                        .count();
                    if filled > 0 {
                        sum += dec as f64 / filled as f64;
                    }
                }
            }
        }
        let pairs = (nr * (nr - 1) / 2 + nc * (nc - 1) / 2) as f64;
        sum / pairs
    }

    /// Exhaustive Barber-Q optimum: enumerate every set partition of the
    /// F+A nodes (restricted growth strings) and evaluate Q directly.
    pub(crate) fn modularity_oracle(w: &Array2<f64>) -> f64 {
        let nr = w.nrows();
        let nc = w.ncols();
        let n = nr + nc;
        let mut labels = vec![0u32; n];
        let mut best = f64::NEG_INFINITY;
        fn recurse(
            idx: usize,
            max_used: u32,
            labels: &mut Vec<u32>,
            w: &Array2<f64>,
            nr: usize,
            best: &mut f64,
        ) {
            if idx == labels.len() {
                let rows: Vec<u32> = labels[..nr].to_vec();
                let cols: Vec<u32> = labels[nr..].to_vec();
                let q = modularity_of_partition(w, &rows, &cols);
                if q > *best {
                    *best = q;
                }
                return;
            }
            for l in 0..=max_used.min(idx as u32) {
                labels[idx] = l;
                let next_max = max_used.max(l + 1);
                recurse(idx + 1, next_max, labels, w, nr, best);
            }
        }
        recurse(0, 0, &mut labels, w, nr, &mut best);
        best
    }

    #[test]
    fn web_asymmetry_matches_counts() {
        let w = Array2::<f64>::ones((11, 16));
        assert_abs_diff_eq!(web_asymmetry(&net(w)).unwrap(), 5.0 / 27.0, epsilon = 1e-12);
        let w = Array2::<f64>::ones((39, 186));
        assert_abs_diff_eq!(
            web_asymmetry(&net(w)).unwrap(),
            147.0 / 225.0,
            epsilon = 1e-12
        );
        let w = Array2::<f64>::ones((7, 7));
        assert_abs_diff_eq!(web_asymmetry(&net(w)).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn web_asymmetry_ignores_isolated_nodes() {
        let mut w = Array2::<f64>::ones((12, 16));
        w.row_mut(3).fill(0.0);
        assert_abs_diff_eq!(web_asymmetry(&net(w)).unwrap(), 5.0 / 27.0, epsilon = 1e-12);
    }

    #[test]
    fn connectance_uniform_complete_is_half() {
        for (r, c) in [(2, 2), (3, 5), (11, 16)] {
            let w = Array2::<f64>::from_elem((r, c), 2.5);
            assert_abs_diff_eq!(weighted_connectance(&net(w)).unwrap(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn connectance_diagonal_quarter() {
        let w = array![[3.0, 0.0], [0.0, 3.0]];
        assert_abs_diff_eq!(weighted_connectance(&net(w)).unwrap(), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn connectance_matches_oracle() {
        let w = array![[1.0, 1.0], [0.0, 2.0]];
        let expected = connectance_oracle(&w);
        // Frozen from the oracle: LD_q = (1 + 3*2^H([1/3,2/3]) + 4 + 2)/8
        // with H = log2(3) - 2/3, so 2^H = 3/2^(2/3) = 1.8898815748...
        assert_abs_diff_eq!(expected, 0.395_926_397_64, epsilon = 1e-9);
        assert_abs_diff_eq!(
            weighted_connectance(&net(w)).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn wnodf_perfectly_nested() {
        let w = array![[3.0, 2.0, 1.0], [2.0, 1.0, 0.0], [1.0, 0.0, 0.0]];
        assert_abs_diff_eq!(weighted_nestedness(&net(w)).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wnodf_uniform_is_zero() {
        let w = Array2::<f64>::from_elem((4, 4), 2.0);
        assert_abs_diff_eq!(weighted_nestedness(&net(w)).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn wnodf_matches_pair_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let nr = rng.random_range(2..=5);
            let nc = rng.random_range(2..=5);
            let mut w = Array2::<f64>::zeros((nr, nc));
            for v in w.iter_mut() {
                *v = rng.random_range(0..6) as f64;
            }
            // keep every node linked so retention does not change the matrix
            for r in 0..nr {
                if w.row(r).sum() == 0.0 {
                    w[[r, 0]] = 1.0;
                }
            }
            for c in 0..nc {
                if w.column(c).sum() == 0.0 {
                    w[[0, c]] = 1.0;
                }
            }
            let ours = weighted_nestedness(&net(w.clone())).unwrap();
            assert_abs_diff_eq!(ours, wnodf_oracle(&w), epsilon = 1e-12);
        }
    }

    #[test]
    fn modularity_identity_pattern() {
        let w = array![[1.0, 0.0], [0.0, 1.0]];
        let (q, partition) = bipartite_modularity(&net(w.clone()), &Default::default()).unwrap();
        assert_abs_diff_eq!(q, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(modularity_oracle(&w), 0.5, epsilon = 1e-12);
        // two modules, each pairing one feature with one activity
        assert_eq!(partition.features[0].1, partition.activities[0].1);
        assert_eq!(partition.features[1].1, partition.activities[1].1);
        assert_ne!(partition.features[0].1, partition.features[1].1);
    }

    #[test]
    fn modularity_uniform_is_zero() {
        let w = Array2::<f64>::from_elem((3, 4), 2.0);
        let (q, _) = bipartite_modularity(&net(w), &Default::default()).unwrap();
        assert_abs_diff_eq!(q, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn modularity_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = 0;
        let total = 40;
        for _ in 0..total {
            let nr = rng.random_range(2..=4);
            let nc = rng.random_range(2..=4);
            let mut w = Array2::<f64>::zeros((nr, nc));
            for v in w.iter_mut() {
                *v = rng.random_range(0..5) as f64;
            }
            if w.sum() == 0.0 {
                w[[0, 0]] = 1.0;
            }
            let network = net(w.clone()).without_isolated();
            let (q, _) = bipartite_modularity(&network, &Default::default()).unwrap();
            let best = modularity_oracle(network.weights());
            assert!(q <= best + 1e-12, "found Q above exhaustive optimum");
            if (q - best).abs() <= 1e-12 {
                hits += 1;
            }
        }
        assert!(hits * 100 >= total * 95, "only {hits}/{total} optimal");
    }

    #[test]
    fn modularity_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = Array2::<f64>::zeros((5, 7));
        for v in w.iter_mut() {
            *v = rng.random_range(0..4) as f64;
        }
        let network = net(w);
        let cfg = ModularityConfig {
            restarts: 5,
            seed: 99,
        };
        let (q1, p1) = bipartite_modularity(&network, &cfg).unwrap();
        let (q2, p2) = bipartite_modularity(&network, &cfg).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(p1.features, p2.features);
        assert_eq!(p1.activities, p2.activities);
    }

    #[test]
    fn push_pull_single_link() {
        let w = array![[5.0]];
        let scores = push_pull(&net(w)).unwrap();
        assert_abs_diff_eq!(scores.features[0].1, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(scores.activities[0].1, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn push_pull_star() {
        // One feature linked to three activities with equal weight: the
        // feature pushes with +2/3, every activity is pulled at -2/3.
        let w = array![[1.0, 1.0, 1.0]];
        let scores = push_pull(&net(w)).unwrap();
        assert_abs_diff_eq!(scores.features[0].1, 2.0 / 3.0, epsilon = 1e-12);
        for (_, v) in &scores.activities {
            assert_abs_diff_eq!(*v, -2.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn push_pull_bounded_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut w = Array2::<f64>::zeros((6, 9));
        for v in w.iter_mut() {
            *v = rng.random_range(0..7) as f64;
        }
        let network = net(w).without_isolated();
        let scores = push_pull(&network).unwrap();
        for (_, v) in scores.features.iter().chain(scores.activities.iter()) {
            assert!((-1.0..=1.0).contains(v));
        }
        // d(f->a) * W_f+ = d(a->f) * W_+a = W[f,a] on every link.
        let row = network.feature_totals();
        let col = network.activity_totals();
        for f in 0..network.features().len() {
            for a in 0..network.activities().len() {
                let weight = network.weights()[[f, a]];
                if weight > 0.0 {
                    let d_fa = weight / row[f];
                    let d_af = weight / col[a];
                    assert_abs_diff_eq!(d_fa * row[f], weight, epsilon = 1e-12);
                    assert_abs_diff_eq!(d_af * col[a], weight, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn network_interaction_asymmetry_star() {
        let w = array![[1.0, 1.0, 1.0]];
        assert_abs_diff_eq!(
            interaction_asymmetry(&net(w)).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn nested_rank_forced_grid() {
        let mut w = Array2::<f64>::zeros((3, 2));
        w[[0, 0]] = 5.0;
        w[[1, 0]] = 3.0;
        w[[2, 0]] = 1.0;
        w[[0, 1]] = 0.5;
        w[[1, 1]] = 0.5;
        let scores = nested_rank(&net(w)).unwrap();
        let values: Vec<f64> = scores.features.iter().map(|(_, v)| *v).collect();
        assert_eq!(values, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn nested_rank_ties_break_by_label() {
        let mut w = Array2::<f64>::zeros((3, 2));
        // f00 and f01 tie at 5, f02 has 1
        w[[0, 0]] = 5.0;
        w[[1, 0]] = 5.0;
        w[[2, 0]] = 1.0;
        w[[0, 1]] = 1.0;
        w[[1, 1]] = 1.0;
        w[[2, 1]] = 1.0;
        let scores = nested_rank(&net(w)).unwrap();
        assert_eq!(scores.features[0], ("f00".to_string(), 0.0));
        assert_eq!(scores.features[1], ("f01".to_string(), 0.5));
        assert_eq!(scores.features[2], ("f02".to_string(), 1.0));
    }

    #[test]
    fn nested_rank_grid_is_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let mut w = Array2::<f64>::zeros((11, 16));
            for v in w.iter_mut() {
                *v = rng.random_range(1..100) as f64;
            }
            let scores = nested_rank(&net(w)).unwrap();
            let mut activity_values: Vec<f64> =
                scores.activities.iter().map(|(_, v)| *v).collect();
            activity_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (k, v) in activity_values.iter().enumerate() {
                assert_abs_diff_eq!(*v, k as f64 / 15.0, epsilon = 1e-15);
            }
            let mut feature_values: Vec<f64> = scores.features.iter().map(|(_, v)| *v).collect();
            feature_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (k, v) in feature_values.iter().enumerate() {
                assert_abs_diff_eq!(*v, k as f64 / 10.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn all_statistics_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let mut w = Array2::<f64>::zeros((4, 5));
            for v in w.iter_mut() {
                *v = rng.random_range(0..9) as f64;
            }
            if w.sum() == 0.0 {
                w[[0, 0]] = 1.0;
            }
            let c: f64 = rng.random_range(1e-3..1e3);
            let network = net(w);
            let scaled = network.scaled(c);
            let cfg = ModularityConfig::default();
            let s1 = network_stats(&network, &cfg);
            let s2 = network_stats(&scaled, &cfg);
            match (s1, s2) {
                (Ok(s1), Ok(s2)) => {
                    assert_abs_diff_eq!(s1.web_asymmetry, s2.web_asymmetry, epsilon = 1e-12);
                    assert_abs_diff_eq!(s1.modularity, s2.modularity, epsilon = 1e-12);
                    assert_abs_diff_eq!(
                        s1.weighted_nestedness,
                        s2.weighted_nestedness,
                        epsilon = 1e-12
                    );
                    assert_abs_diff_eq!(
                        s1.interaction_asymmetry,
                        s2.interaction_asymmetry,
                        epsilon = 1e-12
                    );
                    assert_abs_diff_eq!(
                        s1.weighted_connectance,
                        s2.weighted_connectance,
                        epsilon = 1e-12
                    );
                }
                _ => panic!("stats failed on a linked network"),
            }
        }
    }

    #[test]
    fn build_network_sums_range() {
        use crate::ingest::{aggregate, DayRange, EventRecord, Grouping, NodeKind, Taxonomy};
        let mut taxonomy = Taxonomy::new();
        taxonomy.insert(NodeKind::Feature, "park", "urban greenspace").unwrap();
        taxonomy.insert(NodeKind::Activity, "relaxing", "self care").unwrap();
        let d = |s: &str| chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let records = vec![
            EventRecord {
                date: d("2020-01-01"),
                feature: "park".into(),
                activity: "relaxing".into(),
                user: "u1".into(),
                count: 2,
            },
            EventRecord {
                date: d("2020-01-03"),
                feature: "park".into(),
                activity: "relaxing".into(),
                user: "u2".into(),
                count: 1,
            },
        ];
        let window = DayRange::parse("2020-01-01:2020-01-03").unwrap();
        let counts = aggregate(&records, &taxonomy, Grouping::Full, window).unwrap();
        let all = BipartiteNetwork::from_counts(&counts, window).unwrap();
        assert_eq!(all.weights()[[0, 0]], 3.0);
        let single = BipartiteNetwork::from_counts(
            &counts,
            DayRange::parse("2020-01-01:2020-01-01").unwrap(),
        )
        .unwrap();
        assert_eq!(single.weights()[[0, 0]], 2.0);
        assert!(BipartiteNetwork::from_counts(
            &counts,
            DayRange::parse("2019-12-30:2020-01-02").unwrap()
        )
        .is_err());
    }
}
