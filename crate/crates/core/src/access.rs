//! Distributed initial access with dynamic cooperation clusters.
//!
//! A connecting UE (1) appoints the AP with the largest average gain as its
//! master, (2) is given the pilot on which the master observes the least
//! pilot power, and (3) is offered to nearby APs, each of which decides
//! locally whether to serve it on that pilot. Each AP serves at most one UE
//! per pilot, so `|D_l| <= tau_p` regardless of the number of UEs.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::channel::{FrameConfig, SpatialCorrelation};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::topology::LargeScale;

/// Pilot sets `S_t` and the pilot index of every admitted UE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotBook {
    members: Vec<Vec<usize>>,
    pilot_of: Vec<Option<usize>>,
}

impl PilotBook {
    pub fn new(tau_p: usize, num_ues: usize) -> Self {
        Self {
            members: vec![Vec::new(); tau_p],
            pilot_of: vec![None; num_ues],
        }
    }

    /// Builds a book from explicit per-UE pilot indices.
    pub fn from_assignment(tau_p: usize, pilots: &[usize]) -> Self {
        let mut book = Self::new(tau_p, pilots.len());
        for (ue, &t) in pilots.iter().enumerate() {
            book.assign(ue, t);
        }
        book
    }

    pub fn tau_p(&self) -> usize {
        self.members.len()
    }

    pub fn num_ues(&self) -> usize {
        self.pilot_of.len()
    }

    /// `S_t`.
    pub fn members(&self, pilot: usize) -> &[usize] {
        &self.members[pilot]
    }

    pub fn pilot(&self, ue: usize) -> Option<usize> {
        self.pilot_of[ue]
    }

    pub fn assign(&mut self, ue: usize, pilot: usize) {
        assert!(self.pilot_of[ue].is_none(), "UE {ue} already holds a pilot");
        self.pilot_of[ue] = Some(pilot);
        self.members[pilot].push(ue);
    }
}

/// Neighbor selection for step 3 of the access procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccessParams {
    /// APs whose gain is within this many dB of the master's are notified.
    pub neighbor_window_db: f64,
    /// At most this many neighbors (excluding the master) are notified.
    pub max_neighbors: usize,
}

impl Default for AccessParams {
    fn default() -> Self {
        Self {
            neighbor_window_db: 40.0,
            max_neighbors: 20,
        }
    }
}

/// Serving sets `D_l`, UE clusters `M(k)` and master appointments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterState {
    /// `slots[l][t]`: the UE that AP `l` serves on pilot `t`.
    slots: Vec<Vec<Option<usize>>>,
    ue_clusters: Vec<Vec<usize>>,
    master: Vec<Option<usize>>,
    notifications: usize,
    displacements: usize,
}

impl ClusterState {
    pub fn new(num_aps: usize, num_ues: usize, tau_p: usize) -> Self {
        Self {
            slots: vec![vec![None; tau_p]; num_aps],
            ue_clusters: vec![Vec::new(); num_ues],
            master: vec![None; num_ues],
            notifications: 0,
            displacements: 0,
        }
    }

    pub fn num_aps(&self) -> usize {
        self.slots.len()
    }

    pub fn num_ues(&self) -> usize {
        self.master.len()
    }

    pub fn tau_p(&self) -> usize {
        self.slots.first().map_or(0, Vec::len)
    }

    pub fn master(&self, ue: usize) -> Option<usize> {
        self.master[ue]
    }

    /// `M(k)`, ascending AP indices.
    pub fn ue_cluster(&self, ue: usize) -> &[usize] {
        &self.ue_clusters[ue]
    }

    /// `D_l` in pilot order.
    pub fn serving_set(&self, ap: usize) -> Vec<usize> {
        self.slots[ap].iter().flatten().copied().collect()
    }

    pub fn slot(&self, ap: usize, pilot: usize) -> Option<usize> {
        self.slots[ap][pilot]
    }

    /// The DCC predicate: `D_kl = I_N` iff this is true, else `0`.
    pub fn serves(&self, ue: usize, ap: usize) -> bool {
        self.ue_clusters[ue].binary_search(&ap).is_ok()
    }

    /// True if `ap` is the master of the UE it serves on `pilot`.
    pub fn is_master_slot(&self, ap: usize, pilot: usize) -> bool {
        self.slots[ap][pilot].is_some_and(|ue| self.master[ue] == Some(ap))
    }

    pub fn mastered_count(&self, ap: usize) -> usize {
        (0..self.tau_p()).filter(|&t| self.is_master_slot(ap, t)).count()
    }

    pub fn notifications(&self) -> usize {
        self.notifications
    }

    pub fn displacements(&self) -> usize {
        self.displacements
    }

    fn occupy(&mut self, ap: usize, pilot: usize, ue: usize) -> Option<usize> {
        let previous = self.slots[ap][pilot].replace(ue);
        if let Some(old) = previous {
            let c = &mut self.ue_clusters[old];
            if let Ok(pos) = c.binary_search(&ap) {
                c.remove(pos);
            }
            self.displacements += 1;
        }
        let c = &mut self.ue_clusters[ue];
        if let Err(pos) = c.binary_search(&ap) {
            c.insert(pos, ap);
        }
        previous
    }

    /// Checks every structural invariant; returns a description of the first violation.
    pub fn check_invariants(&self, book: &PilotBook) -> std::result::Result<(), String> {
        let tau_p = self.tau_p();
        for (l, slots) in self.slots.iter().enumerate() {
            for (t, slot) in slots.iter().enumerate() {
                if let Some(ue) = *slot {
                    if book.pilot(ue) != Some(t) {
                        return Err(format!("AP {l} serves UE {ue} on pilot {t} it does not hold"));
                    }
                    if !self.serves(ue, l) {
                        return Err(format!("UE {ue} in D_{l} but AP {l} missing from M({ue})"));
                    }
                }
            }
            if self.serving_set(l).len() > tau_p {
                return Err(format!("|D_{l}| exceeds tau_p"));
            }
        }
        for (ue, cluster) in self.ue_clusters.iter().enumerate() {
            for &l in cluster {
                let t = book.pilot(ue).ok_or_else(|| format!("served UE {ue} has no pilot"))?;
                if self.slots[l][t] != Some(ue) {
                    return Err(format!("AP {l} in M({ue}) but UE {ue} not in D_{l}"));
                }
            }
            if let Some(m) = self.master[ue] {
                if !self.serves(ue, m) {
                    return Err(format!("master {m} of UE {ue} does not serve it"));
                }
            }
        }
        Ok(())
    }
}

/// Step 1: the AP with the largest average gain, lowest index on ties.
pub fn appoint_master<T: Real>(ue: usize, large_scale: &LargeScale<T>) -> usize {
    let row = large_scale.beta_row(ue);
    let mut best = 0;
    for (l, &b) in row.iter().enumerate().skip(1) {
        if b > row[best] {
            best = l;
        }
    }
    best
}

/// `tr(Psi_tl) = sum_{i in S_t} tau_p p_i tr(R_il) + N sigma^2`.
pub fn pilot_power_trace<T: Real>(
    pilot: usize,
    ap: usize,
    corr: &SpatialCorrelation<T>,
    book: &PilotBook,
    frame: &FrameConfig<T>,
) -> T {
    let tau_p = T::of(frame.tau_p as f64);
    let n = T::of(corr.antennas() as f64);
    book.members(pilot)
        .iter()
        .map(|&i| tau_p * frame.pilot_powers[i] * corr.r(i, ap).trace_re())
        .sum::<T>()
        + n * frame.noise_power
}

/// Step 2: the pilot with the least received power at the master, skipping
/// pilots on which the master already serves a UE as its master. The UE is
/// added to `S_t` of the chosen pilot.
pub fn assign_pilot<T: Real>(
    ue: usize,
    master: usize,
    corr: &SpatialCorrelation<T>,
    book: &mut PilotBook,
    cluster: &ClusterState,
    frame: &FrameConfig<T>,
) -> Result<usize> {
    let mut best: Option<(usize, T)> = None;
    for t in 0..book.tau_p() {
        if cluster.is_master_slot(master, t) {
            continue;
        }
        let tr = pilot_power_trace(t, master, corr, book, frame);
        if best.is_none_or(|(_, b)| tr < b) {
            best = Some((t, tr));
        }
    }
    let (pilot, _) = best.ok_or(Error::MasterCapacityExhausted { ue, ap: master })?;
    book.assign(ue, pilot);
    Ok(pilot)
}

/// Neighbors notified in step 3: APs other than the master whose gain is
/// within the window of the master's, strongest first, capped.
pub fn neighbor_aps<T: Real>(
    ue: usize,
    master: usize,
    large_scale: &LargeScale<T>,
    params: &AccessParams,
) -> Vec<usize> {
    let row = large_scale.beta_row(ue);
    let floor = row[master].as_f64() * 10f64.powf(-params.neighbor_window_db / 10.0);
    let mut candidates: Vec<usize> = (0..row.len())
        .filter(|&l| l != master && row[l].as_f64() >= floor)
        .collect();
    candidates.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).expect("finite gains").then(a.cmp(&b)));
    candidates.truncate(params.max_neighbors);
    candidates
}

/// What happened when a UE's cluster was formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClusterUpdate {
    pub adopted: Vec<usize>,
    pub declined: Vec<usize>,
    /// `(ue, ap)`: UE that lost service from AP.
    pub displaced: Vec<(usize, usize)>,
}

/// Step 3: the master takes the UE on `pilot`; each neighbor adopts it if its
/// slot is free, or if the UE is stronger there than the incumbent and the
/// AP is not the incumbent's master.
pub fn form_cluster<T: Real>(
    ue: usize,
    pilot: usize,
    master: usize,
    large_scale: &LargeScale<T>,
    cluster: &mut ClusterState,
    params: &AccessParams,
) -> ClusterUpdate {
    let mut update = ClusterUpdate::default();
    debug_assert!(!cluster.is_master_slot(master, pilot));
    cluster.master[ue] = Some(master);
    if let Some(old) = cluster.occupy(master, pilot, ue) {
        update.displaced.push((old, master));
    }
    update.adopted.push(master);

    let neighbors = neighbor_aps(ue, master, large_scale, params);
    cluster.notifications += neighbors.len();
    for l in neighbors {
        let adopt = match cluster.slots[l][pilot] {
            None => true,
            Some(cur) => {
                large_scale.beta(ue, l) > large_scale.beta(cur, l) && cluster.master[cur] != Some(l)
            }
        };
        if adopt {
            if let Some(old) = cluster.occupy(l, pilot, ue) {
                update.displaced.push((old, l));
            }
            update.adopted.push(l);
        } else {
            update.declined.push(l);
        }
    }
    update
}

/// Outcome of admitting a population of UEs.
#[derive(Debug, Clone)]
pub struct Admission {
    pub book: PilotBook,
    pub cluster: ClusterState,
}

/// Admits UEs one at a time in `order`.
pub fn admit_all<T: Real>(
    order: &[usize],
    large_scale: &LargeScale<T>,
    corr: &SpatialCorrelation<T>,
    frame: &FrameConfig<T>,
    params: &AccessParams,
) -> Result<Admission> {
    let k_count = large_scale.num_ues();
    let mut book = PilotBook::new(frame.tau_p, k_count);
    let mut cluster = ClusterState::new(large_scale.num_aps(), k_count, frame.tau_p);
    for &ue in order {
        let master = appoint_master(ue, large_scale);
        let pilot = assign_pilot(ue, master, corr, &mut book, &cluster, frame)?;
        form_cluster(ue, pilot, master, large_scale, &mut cluster, params);
    }
    Ok(Admission { book, cluster })
}

/// Flat index of every served `(UE, AP)` pair.
///
/// Pairs are grouped by AP in pilot order, which is the order per-AP
/// processing visits them. Estimates, precoders, combiners and power
/// coefficients are stored in vectors aligned with this index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedPairs {
    pairs: Vec<(usize, usize)>,
    by_ap: Vec<Range<usize>>,
    by_ue: Vec<Vec<usize>>,
    num_ues: usize,
}

impl ServedPairs {
    pub fn new(cluster: &ClusterState) -> Self {
        let mut pairs = Vec::new();
        let mut by_ap = Vec::with_capacity(cluster.num_aps());
        for l in 0..cluster.num_aps() {
            let start = pairs.len();
            pairs.extend(cluster.serving_set(l).into_iter().map(|k| (k, l)));
            by_ap.push(start..pairs.len());
        }
        let mut by_ue = vec![Vec::new(); cluster.num_ues()];
        for (idx, &(k, _)) in pairs.iter().enumerate() {
            by_ue[k].push(idx);
        }
        Self {
            pairs,
            by_ap,
            by_ue,
            num_ues: cluster.num_ues(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn num_aps(&self) -> usize {
        self.by_ap.len()
    }

    /// `(ue, ap)` of a pair index.
    #[inline]
    pub fn pair(&self, idx: usize) -> (usize, usize) {
        self.pairs[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    /// Pair indices served by `ap`.
    #[inline]
    pub fn at_ap(&self, ap: usize) -> Range<usize> {
        self.by_ap[ap].clone()
    }

    /// Pair indices serving `ue`, ascending AP.
    #[inline]
    pub fn of_ue(&self, ue: usize) -> &[usize] {
        &self.by_ue[ue]
    }

    pub fn index(&self, ue: usize, ap: usize) -> Option<usize> {
        self.at_ap(ap).find(|&i| self.pairs[i].0 == ue)
    }
}

/// Per-UE and per-AP bookkeeping emitted after admission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub cluster_size: Vec<usize>,
    pub master: Vec<usize>,
    pub pilot: Vec<usize>,
    pub ap_load: Vec<usize>,
    pub notifications: usize,
    pub displacements: usize,
}

impl ClusterSummary {
    pub fn new(admission: &Admission) -> Self {
        let c = &admission.cluster;
        Self {
            cluster_size: (0..c.num_ues()).map(|k| c.ue_cluster(k).len()).collect(),
            master: (0..c.num_ues()).map(|k| c.master(k).unwrap_or(usize::MAX)).collect(),
            pilot: (0..c.num_ues())
                .map(|k| admission.book.pilot(k).unwrap_or(usize::MAX))
                .collect(),
            ap_load: (0..c.num_aps()).map(|l| c.serving_set(l).len()).collect(),
            notifications: c.notifications(),
            displacements: c.displacements(),
        }
    }
}
