use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{is_compatible, Partition};
use crate::error::{Error, Result};

/// Slot index of a global dish.
pub type DishId = u32;

/// Label of a participant that has been removed from its period.
pub const UNASSIGNED: DishId = u32::MAX;

/// Partition sequence over `periods` periods of `n` participants, held as a
/// Chinese restaurant franchise: each period is a restaurant, each cluster a
/// dish served on one or more tables.
///
/// A customer joining a dish already served in its period sits at the
/// largest such table; a customer bringing a dish to its period opens a new
/// table. In the non-hierarchical layout every dish belongs to one period
/// and is never served elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSequence {
    n: usize,
    periods: usize,
    hierarchical: bool,
    /// Dish per cell, period-major (`j * n + i`).
    labels: Vec<DishId>,
    /// Fixed flags per cell; always false in the first period.
    gamma: Vec<bool>,
    /// Table index within `(period, dish)` per cell.
    seats: Vec<u32>,
    /// `[period][dish]` table occupancies; closed tables hold 0.
    occupancy: Vec<Vec<Vec<u32>>>,
    /// `[period][dish]` customer counts.
    counts: Vec<Vec<u32>>,
    /// Open tables serving each dish across all periods.
    dish_tables: Vec<u32>,
    /// Customers eating each dish across all periods.
    dish_members: Vec<u32>,
    /// Period that created each dish.
    owner: Vec<u32>,
    active: Vec<bool>,
    free: Vec<DishId>,
    total_tables: u32,
    n_active: usize,
}

/// What [`PartitionSequence::remove`] did to the dish the customer left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Removal {
    pub dish: DishId,
    pub table_closed: bool,
    pub dish_emptied: bool,
}

/// Candidate restriction for a cluster move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Allowed {
    Free,
    /// Only this existing dish; no fresh dishes.
    Only(DishId),
    /// Anything except these dishes (sorted).
    Exclude(Vec<DishId>),
}

impl Allowed {
    fn permits(&self, d: DishId) -> bool {
        match self {
            Allowed::Free => true,
            Allowed::Only(o) => *o == d,
            Allowed::Exclude(v) => v.binary_search(&d).is_err(),
        }
    }

    fn permits_fresh(&self) -> bool {
        !matches!(self, Allowed::Only(_))
    }
}

/// Prior log-weights of the franchise predictive. The first `dishes.len()`
/// entries of `log_weights` belong to existing dishes, the remaining
/// `n_fresh` to auxiliary fresh dishes.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictive {
    pub dishes: Vec<DishId>,
    pub log_weights: Vec<f64>,
    pub n_fresh: usize,
}

impl PartitionSequence {
    fn empty(n: usize, periods: usize, hierarchical: bool) -> Self {
        PartitionSequence {
            n,
            periods,
            hierarchical,
            labels: vec![UNASSIGNED; n * periods],
            gamma: vec![false; n * periods],
            seats: vec![0; n * periods],
            occupancy: vec![Vec::new(); periods],
            counts: vec![Vec::new(); periods],
            dish_tables: Vec::new(),
            dish_members: Vec::new(),
            owner: Vec::new(),
            active: Vec::new(),
            free: Vec::new(),
            total_tables: 0,
            n_active: 0,
        }
    }

    /// Everybody in one cluster in every period, all flexible.
    pub fn single_cluster(n: usize, periods: usize, hierarchical: bool) -> Self {
        let labels = vec![0u32; n * periods];
        Self::from_labels(n, periods, hierarchical, &labels, &vec![false; n * periods])
            .expect("single-cluster start is always valid")
    }

    /// Build from arbitrary period-major labels. In the hierarchical layout
    /// equal labels in different periods denote the same dish; otherwise
    /// labels are read per period.
    pub fn from_labels(
        n: usize,
        periods: usize,
        hierarchical: bool,
        labels: &[u32],
        gamma: &[bool],
    ) -> Result<Self> {
        if labels.len() != n * periods || gamma.len() != n * periods {
            return Err(Error::arg("label or gamma length does not match n * periods"));
        }
        if n > 0 && gamma[..n].iter().any(|&g| g) {
            return Err(Error::arg("gamma must be 0 in the first period"));
        }
        let mut seq = Self::empty(n, periods, hierarchical);
        let mut map: BTreeMap<(usize, u32), DishId> = BTreeMap::new();
        for j in 0..periods {
            for i in 0..n {
                let key = (if hierarchical { 0 } else { j }, labels[j * n + i]);
                match map.get(&key) {
                    Some(&d) => seq.assign(i, j, d)?,
                    None => {
                        let d = seq.assign_fresh(i, j)?;
                        map.insert(key, d);
                    }
                }
            }
        }
        seq.gamma.copy_from_slice(gamma);
        for j in 1..periods {
            if !seq.transition_compatible(j) {
                return Err(Error::arg(format!("labels violate the fixed flags at period {j}")));
            }
        }
        Ok(seq)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn is_hierarchical(&self) -> bool {
        self.hierarchical
    }

    #[inline]
    fn cell(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn label(&self, i: usize, j: usize) -> DishId {
        self.labels[self.cell(i, j)]
    }

    /// Period-major dish labels.
    pub fn labels(&self) -> &[DishId] {
        &self.labels
    }

    pub fn period_labels(&self, j: usize) -> &[DishId] {
        &self.labels[j * self.n..(j + 1) * self.n]
    }

    #[inline]
    pub fn gamma(&self, i: usize, j: usize) -> bool {
        self.gamma[self.cell(i, j)]
    }

    pub fn gammas(&self) -> &[bool] {
        &self.gamma
    }

    pub fn period_gamma(&self, j: usize) -> &[bool] {
        &self.gamma[j * self.n..(j + 1) * self.n]
    }

    pub fn set_gamma(&mut self, i: usize, j: usize, value: bool) -> Result<()> {
        if j == 0 {
            return Err(Error::arg("gamma is undefined in the first period"));
        }
        let c = self.cell(i, j);
        self.gamma[c] = value;
        Ok(())
    }

    /// Number of dishes with at least one customer.
    pub fn n_dishes(&self) -> usize {
        self.n_active
    }

    pub fn is_active(&self, d: DishId) -> bool {
        self.active.get(d as usize).copied().unwrap_or(false)
    }

    /// Active dish ids in ascending order.
    pub fn active_dishes(&self) -> impl Iterator<Item = DishId> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(d, _)| d as DishId)
    }

    /// Size of the dish slot arena; every id is below this.
    pub fn dish_capacity(&self) -> usize {
        self.active.len()
    }

    #[inline]
    pub fn customers(&self, j: usize, d: DishId) -> u32 {
        self.counts[j].get(d as usize).copied().unwrap_or(0)
    }

    pub fn dish_members(&self, d: DishId) -> u32 {
        self.dish_members[d as usize]
    }

    pub fn dish_tables(&self, d: DishId) -> u32 {
        self.dish_tables[d as usize]
    }

    pub fn total_tables(&self) -> u32 {
        self.total_tables
    }

    /// Number of distinct clusters in period `j`.
    pub fn n_clusters(&self, j: usize) -> usize {
        self.counts[j].iter().filter(|&&c| c > 0).count()
    }

    pub fn period_partition(&self, j: usize) -> Partition {
        Partition::from_labels(self.period_labels(j))
    }

    /// Labels renumbered by first appearance scanning periods, then
    /// participants.
    pub fn canonical_labels(&self) -> Vec<u32> {
        Partition::from_labels(&self.labels).labels().to_vec()
    }

    /// Remove participant `i` from period `j`.
    pub fn remove(&mut self, i: usize, j: usize) -> Result<Removal> {
        let c = self.cell(i, j);
        let d = self.labels[c];
        if d == UNASSIGNED {
            return Err(Error::arg(format!("participant {i} already removed from period {j}")));
        }
        let du = d as usize;
        let t = self.seats[c] as usize;
        self.occupancy[j][du][t] -= 1;
        self.counts[j][du] -= 1;
        self.dish_members[du] -= 1;
        let table_closed = self.occupancy[j][du][t] == 0;
        if table_closed {
            self.dish_tables[du] -= 1;
            self.total_tables -= 1;
        }
        let dish_emptied = self.dish_members[du] == 0;
        if dish_emptied {
            self.active[du] = false;
            self.free.push(d);
            self.n_active -= 1;
        }
        self.labels[c] = UNASSIGNED;
        Ok(Removal { dish: d, table_closed, dish_emptied })
    }

    fn alloc_dish(&mut self, j: usize) -> DishId {
        let d = match self.free.pop() {
            Some(d) => d,
            None => {
                let d = self.active.len() as DishId;
                self.active.push(false);
                self.dish_tables.push(0);
                self.dish_members.push(0);
                self.owner.push(0);
                for j in 0..self.periods {
                    self.occupancy[j].push(Vec::new());
                    self.counts[j].push(0);
                }
                d
            }
        };
        let du = d as usize;
        self.active[du] = true;
        self.owner[du] = j as u32;
        self.n_active += 1;
        d
    }

    /// Seat a removed participant on a brand-new dish and return its id.
    pub fn assign_fresh(&mut self, i: usize, j: usize) -> Result<DishId> {
        if self.label(i, j) != UNASSIGNED {
            return Err(Error::arg(format!("participant {i} is still seated in period {j}")));
        }
        let d = self.alloc_dish(j);
        self.seat(i, j, d);
        Ok(d)
    }

    /// Seat a removed participant on an existing dish.
    pub fn assign(&mut self, i: usize, j: usize, d: DishId) -> Result<()> {
        if self.label(i, j) != UNASSIGNED {
            return Err(Error::arg(format!("participant {i} is still seated in period {j}")));
        }
        if !self.is_active(d) {
            return Err(Error::arg(format!("dish {d} is not active")));
        }
        if !self.hierarchical && self.owner[d as usize] as usize != j {
            return Err(Error::arg(format!("dish {d} is not on the menu of period {j}")));
        }
        self.seat(i, j, d);
        Ok(())
    }

    fn seat(&mut self, i: usize, j: usize, d: DishId) {
        let du = d as usize;
        let tables = &mut self.occupancy[j][du];
        let t = if self.counts[j][du] > 0 {
            // largest table, lowest index on ties
            let mut best = 0;
            for (k, &o) in tables.iter().enumerate() {
                if o > tables[best] {
                    best = k;
                }
            }
            best
        } else {
            self.dish_tables[du] += 1;
            self.total_tables += 1;
            match tables.iter().position(|&o| o == 0) {
                Some(k) => k,
                None => {
                    tables.push(0);
                    tables.len() - 1
                }
            }
        };
        tables[t] += 1;
        self.counts[j][du] += 1;
        self.dish_members[du] += 1;
        let c = self.cell(i, j);
        self.labels[c] = d;
        self.seats[c] = t as u32;
    }

    /// Candidates that keep period `j + 1` compatible when `i` moves in
    /// period `j`.
    pub fn allowed_for(&self, i: usize, j: usize) -> Allowed {
        if j + 1 >= self.periods || !self.gamma(i, j + 1) {
            return Allowed::Free;
        }
        let next = j + 1;
        let mine = self.label(i, next);
        let fixed = (0..self.n).filter(|&k| k != i && self.gamma(k, next));
        let mut excluded = Vec::new();
        for k in fixed {
            if self.label(k, next) == mine {
                return Allowed::Only(self.label(k, j));
            }
            excluded.push(self.label(k, j));
        }
        excluded.sort_unstable();
        excluded.dedup();
        Allowed::Exclude(excluded)
    }

    /// Prior log-weights for seating the removed participant `i` in period
    /// `j`, restricted to `allowed`.
    ///
    /// Hierarchical: existing dish `d` gets `n_jd + α m_d / (m + α₀)` and
    /// each of the `aux` fresh dishes `α α₀ / ((m + α₀) aux)`, where `m_d`
    /// counts tables serving `d` and `m` all tables. Otherwise only dishes
    /// of period `j` compete, with weights `n_jd`, and each fresh dish gets
    /// `α / aux`.
    pub fn predictive(
        &self,
        i: usize,
        j: usize,
        aux: usize,
        alpha: f64,
        alpha0: f64,
        allowed: &Allowed,
    ) -> Result<Predictive> {
        if self.label(i, j) != UNASSIGNED {
            return Err(Error::arg(format!("participant {i} must be removed from period {j} first")));
        }
        let mut dishes = Vec::new();
        let mut log_weights = Vec::new();
        let m = self.total_tables as f64;
        for d in self.active_dishes() {
            if !allowed.permits(d) {
                continue;
            }
            let n_jd = self.customers(j, d) as f64;
            let w = if self.hierarchical {
                n_jd + alpha * self.dish_tables[d as usize] as f64 / (m + alpha0)
            } else if self.owner[d as usize] as usize == j && n_jd > 0.0 {
                n_jd
            } else {
                continue;
            };
            dishes.push(d);
            log_weights.push(w.ln());
        }
        let n_fresh = if allowed.permits_fresh() { aux } else { 0 };
        if n_fresh > 0 {
            let w = if self.hierarchical {
                alpha * alpha0 / ((m + alpha0) * aux as f64)
            } else {
                alpha / aux as f64
            };
            log_weights.extend(std::iter::repeat_n(w.ln(), n_fresh));
        }
        Ok(Predictive { dishes, log_weights, n_fresh })
    }

    /// Predictive probability that `i` lands in its current period-`j`
    /// cluster, as a block of the partition, given only the fixed
    /// participants of period `j` other than `i`. Joining a fixed member's
    /// cluster has mass `n_Rd + α m_d / (m + α₀)`; a cluster with no fixed
    /// member has the mass left over by all of theirs. Table counts exclude
    /// `i`'s table when `i` sits alone.
    pub fn fixed_set_predictive(&self, i: usize, j: usize, alpha: f64, alpha0: f64) -> f64 {
        let d = self.label(i, j);
        let mut r = 0usize;
        let mut n_rd = 0usize;
        let mut fixed_dishes = Vec::new();
        for k in 0..self.n {
            if k != i && self.gamma(k, j) {
                r += 1;
                let dk = self.label(k, j);
                if dk == d {
                    n_rd += 1;
                }
                fixed_dishes.push(dk);
            }
        }
        let denom = r as f64 + alpha;
        if !self.hierarchical {
            return if n_rd > 0 { n_rd as f64 / denom } else { alpha / denom };
        }
        let du = d as usize;
        let alone = self.occupancy[j][du][self.seats[self.cell(i, j)] as usize] == 1;
        let m = (self.total_tables - u32::from(alone)) as f64 + alpha0;
        if n_rd > 0 {
            return (n_rd as f64 + alpha * self.dish_tables[du] as f64 / m) / denom;
        }
        fixed_dishes.sort_unstable();
        fixed_dishes.dedup();
        let taken: f64 = fixed_dishes.iter().map(|&k| self.dish_tables[k as usize] as f64 / m).sum();
        alpha * (1.0 - taken).max(0.0) / denom
    }

    /// Whether fixing `i` at period `j` keeps its cluster identical, on the
    /// fixed participants of period `j`, to its cluster at `j - 1`.
    pub fn gamma_admissible(&self, i: usize, j: usize) -> bool {
        debug_assert!(j >= 1);
        let (prev_i, cur_i) = (self.label(i, j - 1), self.label(i, j));
        (0..self.n)
            .filter(|&k| k != i && self.gamma(k, j))
            .all(|k| (self.label(k, j - 1) == prev_i) == (self.label(k, j) == cur_i))
    }

    /// Whether periods `j - 1` and `j` agree on the fixed set of `j`.
    pub fn transition_compatible(&self, j: usize) -> bool {
        let fixed: Vec<usize> = (0..self.n).filter(|&i| self.gamma(i, j)).collect();
        is_compatible(self.period_labels(j - 1), self.period_labels(j), &fixed)
    }

    /// Full consistency audit of labels, counts, tables and fixed flags.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let cap = self.active.len();
        let mut members = vec![0u32; cap];
        let mut tables = vec![0u32; cap];
        for j in 0..self.periods {
            let mut counts = vec![0u32; cap];
            let mut occ: Vec<Vec<u32>> = vec![Vec::new(); cap];
            for (d, t) in self.occupancy[j].iter().enumerate() {
                occ[d] = vec![0; t.len()];
            }
            for i in 0..self.n {
                let c = self.cell(i, j);
                let d = self.labels[c];
                if d == UNASSIGNED {
                    return Err(format!("({i}, {j}) unassigned"));
                }
                let du = d as usize;
                if !self.active[du] {
                    return Err(format!("({i}, {j}) on inactive dish {d}"));
                }
                if !self.hierarchical && self.owner[du] as usize != j {
                    return Err(format!("dish {d} shared across periods"));
                }
                counts[du] += 1;
                members[du] += 1;
                let t = self.seats[c] as usize;
                match occ[du].get_mut(t) {
                    Some(o) => *o += 1,
                    None => return Err(format!("({i}, {j}) seated at missing table")),
                }
            }
            if counts.iter().sum::<u32>() as usize != self.n {
                return Err(format!("period {j} counts do not sum to n"));
            }
            for d in 0..cap {
                let stored = self.counts[j].get(d).copied().unwrap_or(0);
                if stored != counts[d] {
                    return Err(format!("period {j} dish {d}: stored count {stored} vs {}", counts[d]));
                }
                let stored_occ = self.occupancy[j].get(d).cloned().unwrap_or_default();
                if stored_occ != occ[d] {
                    return Err(format!("period {j} dish {d}: table occupancy mismatch"));
                }
                tables[d] += occ[d].iter().filter(|&&o| o > 0).count() as u32;
            }
        }
        for d in 0..cap {
            if members[d] != self.dish_members[d] || tables[d] != self.dish_tables[d] {
                return Err(format!("dish {d}: global counts mismatch"));
            }
            if self.active[d] != (members[d] > 0) {
                return Err(format!("dish {d}: activity flag mismatch"));
            }
        }
        if tables.iter().sum::<u32>() != self.total_tables {
            return Err("total table count mismatch".into());
        }
        if self.active.iter().filter(|&&a| a).count() != self.n_active {
            return Err("dish count mismatch".into());
        }
        if self.gamma[..self.n].iter().any(|&g| g) {
            return Err("gamma set in the first period".into());
        }
        for j in 1..self.periods {
            if !self.transition_compatible(j) {
                return Err(format!("period {j} incompatible with period {}", j - 1));
            }
        }
        Ok(())
    }
}
