//! Posterior summaries: co-clustering, partition point estimates, WAIC,
//! trajectories and transition tables.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{ChainArchive, Draw};
use crate::model::Variant;
use crate::partition::Partition;
use crate::random::RngStream;
use crate::spline::SplineBasis;
use crate::stats::quantile_sorted;

/// Posterior co-clustering frequencies of `n` items.
#[derive(Debug, Clone, PartialEq)]
pub struct CoclusterMatrix {
    n: usize,
    probs: Vec<f64>,
}

impl CoclusterMatrix {
    /// Frequencies over a set of labelings of the same `n` items.
    pub fn from_labelings<'a, I>(n: usize, labelings: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [u32]>,
    {
        let mut counts = vec![0u32; n * n];
        let mut draws = 0usize;
        for labels in labelings {
            if labels.len() != n {
                return Err(Error::arg("labeling length differs from item count"));
            }
            draws += 1;
            for a in 0..n {
                let la = labels[a];
                let row = &mut counts[a * n..(a + 1) * n];
                for (b, &lb) in labels.iter().enumerate() {
                    if la == lb {
                        row[b] += 1;
                    }
                }
            }
        }
        if draws == 0 {
            return Err(Error::arg("no draws to summarize"));
        }
        let probs = counts.into_iter().map(|c| c as f64 / draws as f64).collect();
        Ok(CoclusterMatrix { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.n + b]
    }

    #[inline]
    fn row(&self, a: usize) -> &[f64] {
        &self.probs[a * self.n..(a + 1) * self.n]
    }
}

/// Lower bound of the posterior expected variation of information of a
/// candidate partition, in nats.
pub fn expected_vi_lower_bound(labels: &[u32], m: &CoclusterMatrix) -> f64 {
    let n = m.n();
    let mut total = 0.0;
    for i in 0..n {
        let row = m.row(i);
        let mut size = 0.0f64;
        let mut shared = 0.0;
        let mut mass = 0.0;
        for j in 0..n {
            mass += row[j];
            if labels[j] == labels[i] {
                size += 1.0;
                shared += row[j];
            }
        }
        total += size.ln() - 2.0 * shared.ln() + mass.ln();
    }
    total / n as f64
}

/// Incremental bookkeeping for the search: cluster sizes and, per item,
/// the co-clustering mass it shares with its own cluster.
struct Search<'a> {
    m: &'a CoclusterMatrix,
    labels: Vec<u32>,
    sizes: Vec<usize>,
    shared: Vec<f64>,
}

const UNPLACED: u32 = u32::MAX;

impl<'a> Search<'a> {
    fn new(m: &'a CoclusterMatrix) -> Self {
        Search { m, labels: vec![UNPLACED; m.n()], sizes: Vec::new(), shared: vec![0.0; m.n()] }
    }

    fn from_labels(m: &'a CoclusterMatrix, labels: &[u32]) -> Self {
        let mut s = Self::new(m);
        for (i, &l) in labels.iter().enumerate() {
            s.place(i, l);
        }
        s
    }

    fn place(&mut self, i: usize, c: u32) {
        let row = self.m.row(i);
        let mut own = row[i];
        for (k, &l) in self.labels.iter().enumerate() {
            if l == c {
                self.shared[k] += row[k];
                own += row[k];
            }
        }
        if c as usize >= self.sizes.len() {
            self.sizes.resize(c as usize + 1, 0);
        }
        self.sizes[c as usize] += 1;
        self.shared[i] = own;
        self.labels[i] = c;
    }

    fn unplace(&mut self, i: usize) {
        let c = self.labels[i];
        self.labels[i] = UNPLACED;
        let row = self.m.row(i);
        for (k, &l) in self.labels.iter().enumerate() {
            if l == c {
                self.shared[k] -= row[k];
            }
        }
        self.sizes[c as usize] -= 1;
    }

    /// Change in summed per-item loss when unplaced `i` joins `c`.
    fn delta(&self, i: usize, c: u32) -> f64 {
        let s = self.sizes.get(c as usize).copied().unwrap_or(0);
        if s == 0 {
            return 0.0;
        }
        let row = self.m.row(i);
        let (s0, s1) = ((s as f64).ln(), (s as f64 + 1.0).ln());
        let mut d = 0.0;
        let mut own = row[i];
        for (k, &l) in self.labels.iter().enumerate() {
            if l == c {
                d += s1 - s0 - 2.0 * ((self.shared[k] + row[k]).ln() - self.shared[k].ln());
                own += row[k];
            }
        }
        d + s1 - 2.0 * own.ln()
    }

    /// Put unplaced `i` where the loss grows least; ties go to the lowest
    /// label, a new cluster last.
    fn best_place(&mut self, i: usize) {
        let mut best = f64::INFINITY;
        let mut choice = None;
        let mut empty = None;
        for c in 0..self.sizes.len() as u32 {
            if self.sizes[c as usize] == 0 {
                empty.get_or_insert(c);
                continue;
            }
            let d = self.delta(i, c);
            if d < best - 1e-12 {
                best = d;
                choice = Some(c);
            }
        }
        let fresh = empty.unwrap_or(self.sizes.len() as u32);
        let c = match choice {
            Some(c) if best <= 1e-12 => c,
            _ => fresh,
        };
        self.place(i, c);
    }

    fn objective(&self) -> f64 {
        expected_vi_lower_bound(&self.labels, self.m)
    }

    /// Single-item reallocation passes until nothing moves.
    fn sweep(&mut self, order: &[usize], max_passes: usize) {
        for _ in 0..max_passes {
            let mut moved = false;
            for &i in order {
                let before = self.labels[i];
                self.unplace(i);
                self.best_place(i);
                if self.labels[i] != before {
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
    }
}

/// Settings of the partition search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SalsoSettings {
    pub restarts: usize,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SalsoSettings {
    fn default() -> Self {
        SalsoSettings { restarts: 16, max_passes: 10, seed: 1 }
    }
}

/// Greedy sequential allocation in random order followed by reallocation
/// passes, best of `restarts`; candidate partitions from `seeds` are also
/// polished and considered.
pub fn salso(m: &CoclusterMatrix, settings: SalsoSettings, seeds: &[&[u32]]) -> Partition {
    let n = m.n();
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut consider = |s: &Search| {
        let obj = s.objective();
        if best.as_ref().is_none_or(|(b, _)| obj < *b - 1e-12) {
            best = Some((obj, s.labels.clone()));
        }
    };
    let base = RngStream::new(settings.seed);
    for r in 0..settings.restarts.max(1) {
        let mut rng = base.split(r as u64).rng();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut s = Search::new(m);
        for &i in &order {
            s.best_place(i);
        }
        s.sweep(&order, settings.max_passes);
        consider(&s);
    }
    let order: Vec<usize> = (0..n).collect();
    for labels in seeds {
        let mut s = Search::from_labels(m, Partition::from_labels(labels).labels());
        consider(&s);
        s.sweep(&order, settings.max_passes);
        consider(&s);
    }
    Partition::from_labels(&best.map(|(_, l)| l).unwrap_or_default())
}

/// Whether clusters are estimated over all cells jointly or one period at
/// a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SalsoScope {
    Global,
    PerPeriod,
}

impl SalsoScope {
    pub fn for_variant(v: Variant) -> Self {
        if v.is_hierarchical() {
            SalsoScope::Global
        } else {
            SalsoScope::PerPeriod
        }
    }
}

/// Point estimate of the partition sequence as period-major labels. Under
/// per-period scope each period gets its own label range.
pub fn estimate_partition(archive: &ChainArchive, scope: SalsoScope, settings: SalsoSettings) -> Result<Vec<u32>> {
    let (n, periods) = (archive.meta.n, archive.meta.periods);
    if archive.draws.is_empty() {
        return Err(Error::arg("archive has no draws"));
    }
    match scope {
        SalsoScope::Global => {
            let m = CoclusterMatrix::from_labelings(n * periods, archive.draws.iter().map(|d| d.labels.as_slice()))?;
            let seeds: Vec<&[u32]> = archive.draws.iter().map(|d| d.labels.as_slice()).collect();
            Ok(salso(&m, settings, &seeds).labels().to_vec())
        }
        SalsoScope::PerPeriod => {
            let mut out = Vec::with_capacity(n * periods);
            let mut offset = 0;
            for j in 0..periods {
                let slices: Vec<&[u32]> = archive.draws.iter().map(|d| &d.labels[j * n..(j + 1) * n]).collect();
                let m = CoclusterMatrix::from_labelings(n, slices.iter().copied())?;
                let p = salso(&m, settings, &slices);
                out.extend(p.labels().iter().map(|l| l + offset));
                offset += p.n_clusters() as u32;
            }
            Ok(out)
        }
    }
}

/// WAIC and its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub draws_used: usize,
}

fn log_mean_exp(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + (x.iter().map(|v| (v - max).exp()).sum::<f64>() / x.len() as f64).ln()
}

/// WAIC from log-likelihoods indexed `[draw][cell]`.
pub fn waic_from_loglik(loglik: &[Vec<f64>]) -> Result<Waic> {
    let s = loglik.len();
    if s < 2 {
        return Err(Error::arg(format!("WAIC needs at least 2 draws, got {s}")));
    }
    let cells = loglik[0].len();
    if loglik.iter().any(|d| d.len() != cells) {
        return Err(Error::arg("draws disagree on the number of cells"));
    }
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut col = vec![0.0; s];
    for c in 0..cells {
        for (k, d) in loglik.iter().enumerate() {
            col[k] = d[c];
        }
        lppd += log_mean_exp(&col);
        p_waic += crate::stats::variance(&col);
    }
    Ok(Waic { waic: -2.0 * (lppd - p_waic), lppd, p_waic, draws_used: s })
}

/// Indices of an evenly spaced subsample of `k` out of `len`.
pub fn evenly_spaced(len: usize, k: usize) -> Vec<usize> {
    (0..k).map(|r| r * len / k).collect()
}

/// WAIC on an evenly spaced subsample of `⌈fraction · draws⌉` draws taken
/// in iteration order.
pub fn waic(archive: &ChainArchive, fraction: f64) -> Result<Waic> {
    let mut draws: Vec<&Draw> = archive.draws.iter().collect();
    draws.sort_by_key(|d| d.iteration);
    let k = ((fraction * draws.len() as f64).ceil() as usize).min(draws.len());
    let picked: Vec<Vec<f64>> = evenly_spaced(draws.len(), k).into_iter().map(|i| draws[i].loglik.clone()).collect();
    waic_from_loglik(&picked)
}

/// Pointwise posterior curve of one estimated cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCurve {
    /// 1-based label after ordering by descending mean log-odds.
    pub cluster: usize,
    pub size: usize,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Relabel an estimate `1..=K` by descending average posterior log-odds
/// and return the curves in that order. `labels` is rewritten in place.
pub fn trajectory_summary(archive: &ChainArchive, labels: &mut [u32], grid: &[f64]) -> Result<Vec<ClusterCurve>> {
    if grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::arg("grid must lie in [0, 1]"));
    }
    if archive.draws.is_empty() {
        return Err(Error::arg("archive has no draws"));
    }
    let basis = SplineBasis::new(archive.meta.q)?;
    let design = basis.design_matrix(grid)?;
    let canon = Partition::from_labels(labels);
    let k = canon.n_clusters();
    let members: Vec<Vec<usize>> =
        (0..k).map(|c| (0..labels.len()).filter(|&i| canon.labels()[i] as usize == c).collect()).collect();

    let g = grid.len();
    let mut per_cluster: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(archive.draws.len()); k];
    for d in &archive.draws {
        let curves: Vec<Vec<f64>> = d
            .beta
            .iter()
            .map(|b| design.iter().map(|row| row.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
            .collect();
        for (c, ms) in members.iter().enumerate() {
            let mut avg = vec![0.0; g];
            for &cell in ms {
                for (a, v) in avg.iter_mut().zip(&curves[d.labels[cell] as usize]) {
                    *a += v;
                }
            }
            avg.iter_mut().for_each(|a| *a /= ms.len() as f64);
            per_cluster[c].push(avg);
        }
    }
    let mut curves: Vec<ClusterCurve> = per_cluster
        .into_iter()
        .enumerate()
        .map(|(c, draws)| {
            let mut mean = vec![0.0; g];
            let mut lower = vec![0.0; g];
            let mut upper = vec![0.0; g];
            for t in 0..g {
                let mut col: Vec<f64> = draws.iter().map(|d| d[t]).collect();
                mean[t] = col.iter().sum::<f64>() / col.len() as f64;
                col.sort_by(f64::total_cmp);
                lower[t] = quantile_sorted(&col, 0.025);
                upper[t] = quantile_sorted(&col, 0.975);
            }
            ClusterCurve { cluster: c, size: members[c].len(), mean, lower, upper }
        })
        .collect();
    let avg = |c: &ClusterCurve| c.mean.iter().sum::<f64>() / g.max(1) as f64;
    curves.sort_by(|a, b| avg(b).total_cmp(&avg(a)).then(a.cluster.cmp(&b.cluster)));
    let mut rank = vec![0u32; k];
    for (r, c) in curves.iter_mut().enumerate() {
        rank[c.cluster] = r as u32 + 1;
        c.cluster = r + 1;
    }
    for (l, &c) in labels.iter_mut().zip(canon.labels()) {
        *l = rank[c as usize];
    }
    Ok(curves)
}

/// Posterior mean of each cell's smooth function at the given times
/// (internal `[0, 1]` scale), cells in period-major order.
pub fn posterior_smooth(archive: &ChainArchive, times: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let cells = archive.meta.n * archive.meta.periods;
    if times.len() != cells {
        return Err(Error::arg("times do not match the archive shape"));
    }
    if archive.draws.is_empty() {
        return Err(Error::arg("archive has no draws"));
    }
    let basis = SplineBasis::new(archive.meta.q)?;
    let rows: Vec<_> = times.iter().map(|t| basis.design_rows(t)).collect::<Result<_>>()?;
    let mut out: Vec<Vec<f64>> = times.iter().map(|t| vec![0.0; t.len()]).collect();
    for d in &archive.draws {
        for c in 0..cells {
            let beta = &d.beta[d.labels[c] as usize];
            for (o, r) in out[c].iter_mut().zip(&rows[c]) {
                *o += r.dot(beta);
            }
        }
    }
    let s = archive.draws.len() as f64;
    out.iter_mut().flatten().for_each(|v| *v /= s);
    Ok(out)
}

/// Cross-tabulation of cluster moves between two consecutive periods.
/// Rows and columns share the same sorted label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub from_period: usize,
    pub labels: Vec<u32>,
    pub counts: Vec<Vec<usize>>,
}

pub fn transition_tables(labels: &[u32], n: usize) -> Result<Vec<TransitionTable>> {
    if n == 0 || !labels.len().is_multiple_of(n) {
        return Err(Error::arg("labels do not cover whole periods"));
    }
    let periods = labels.len() / n;
    let mut out = Vec::new();
    for j in 0..periods.saturating_sub(1) {
        let (a, b) = (&labels[j * n..(j + 1) * n], &labels[(j + 1) * n..(j + 2) * n]);
        let mut set: Vec<u32> = a.iter().chain(b).copied().collect();
        set.sort_unstable();
        set.dedup();
        let idx = |l: u32| set.binary_search(&l).expect("label in set");
        let mut counts = vec![vec![0usize; set.len()]; set.len()];
        for (&x, &y) in a.iter().zip(b) {
            counts[idx(x)][idx(y)] += 1;
        }
        out.push(TransitionTable { from_period: j, labels: set, counts });
    }
    Ok(out)
}

/// Cluster sizes per period, `[period][(label, size)]`.
pub fn cluster_sizes(labels: &[u32], n: usize) -> Vec<Vec<(u32, usize)>> {
    labels
        .chunks(n)
        .map(|period| {
            let mut counts = std::collections::BTreeMap::new();
            for &l in period {
                *counts.entry(l).or_insert(0usize) += 1;
            }
            counts.into_iter().collect()
        })
        .collect()
}
