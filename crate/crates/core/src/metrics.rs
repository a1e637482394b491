//! Agreement between estimated and true clusterings and functions.

use std::hash::Hash;

use crate::error::{Error, Result};
use crate::gibbs::ChainArchive;
use crate::partition::Partition;

/// Contingency table of two canonical partitions.
fn contingency(a: &Partition, b: &Partition) -> (Vec<usize>, Vec<usize>, Vec<usize>, usize) {
    let (ka, kb) = (a.n_clusters(), b.n_clusters());
    let mut table = vec![0usize; ka * kb];
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        table[x as usize * kb + y as usize] += 1;
    }
    (table, a.sizes(), b.sizes(), kb)
}

fn pair<T: Copy + Eq + Hash>(a: &[T], b: &[T]) -> Result<(Partition, Partition)> {
    if a.len() != b.len() {
        return Err(Error::arg(format!("partitions of {} and {} items", a.len(), b.len())));
    }
    Ok((Partition::from_labels(a), Partition::from_labels(b)))
}

/// Variation of information in nats.
pub fn variation_of_information<T: Copy + Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    let (pa, pb) = pair(a, b)?;
    let n = a.len() as f64;
    if a.is_empty() {
        return Ok(0.0);
    }
    let (table, sa, sb, kb) = contingency(&pa, &pb);
    let h = |sizes: &[usize]| -> f64 {
        sizes.iter().filter(|&&s| s > 0).map(|&s| {
            let p = s as f64 / n;
            -p * p.ln()
        }).sum()
    };
    let mut mi = 0.0;
    for (k, &c) in table.iter().enumerate() {
        if c > 0 {
            let (r, s) = (k / kb, k % kb);
            let p = c as f64 / n;
            mi += p * (p * n * n / (sa[r] as f64 * sb[s] as f64)).ln();
        }
    }
    Ok((h(&sa) + h(&sb) - 2.0 * mi).max(0.0))
}

fn choose2(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert–Arabie). Two partitions with no pair
/// structure to compare score 1 when identical and 0 otherwise.
pub fn adjusted_rand_index<T: Copy + Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    let (pa, pb) = pair(a, b)?;
    let (table, sa, sb, _) = contingency(&pa, &pb);
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let ra: f64 = sa.iter().map(|&s| choose2(s)).sum();
    let rb: f64 = sb.iter().map(|&s| choose2(s)).sum();
    let total = choose2(a.len());
    let expected = if total > 0.0 { ra * rb / total } else { 0.0 };
    let max = 0.5 * (ra + rb);
    if (max - expected).abs() < 1e-300 {
        return Ok(if pa == pb { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Mean squared difference over all observations; inputs are nested per
/// cell.
pub fn mse_smooth(estimate: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::arg("estimate and truth have different numbers of cells"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (e, t) in estimate.iter().zip(truth) {
        if e.len() != t.len() {
            return Err(Error::arg("estimate and truth cells differ in length"));
        }
        sum += e.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += e.len();
    }
    if count == 0 {
        return Err(Error::arg("no observations to compare"));
    }
    Ok(sum / count as f64)
}

/// Share of (draw, participant, period ≥ 2) triples whose fixed flag
/// matches the truth.
pub fn gamma_accuracy(archive: &ChainArchive, truth: &[bool]) -> Result<f64> {
    let meta = &archive.meta;
    if !meta.variant.is_temporal() {
        return Err(Error::arg(format!("variant {} has no fixed flags", meta.variant)));
    }
    if truth.len() != meta.n * meta.periods {
        return Err(Error::arg("truth gamma does not match the archive shape"));
    }
    if archive.draws.is_empty() || meta.periods < 2 {
        return Err(Error::arg("nothing to compare"));
    }
    let mut hits = 0usize;
    for d in &archive.draws {
        hits += d.gamma[meta.n..].iter().zip(&truth[meta.n..]).filter(|(a, b)| a == b).count();
    }
    Ok(hits as f64 / (archive.draws.len() * meta.n * (meta.periods - 1)) as f64)
}

/// Apply `metric` to each period of two period-major labelings and
/// average.
pub fn mean_over_periods<T, F>(estimate: &[T], truth: &[T], n: usize, metric: F) -> Result<f64>
where
    T: Copy + Eq + Hash,
    F: Fn(&[T], &[T]) -> Result<f64>,
{
    if estimate.len() != truth.len() || n == 0 || !estimate.len().is_multiple_of(n) {
        return Err(Error::arg("labelings do not cover whole periods"));
    }
    let periods = estimate.len() / n;
    let mut acc = 0.0;
    for j in 0..periods {
        acc += metric(&estimate[j * n..(j + 1) * n], &truth[j * n..(j + 1) * n])?;
    }
    Ok(acc / periods as f64)
}
