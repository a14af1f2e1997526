//! Functional commuting zones from bidirectional commuting flows.
//!
//! A region's dominant flow is its largest flow to another region relative
//! to its own labor force, considered only when the partner is larger.
//! Regions whose dominant-flow share exceeds a threshold are merged one at a
//! time, largest share first, re-deriving shares after every merger until
//! none qualifies. A sweep over thresholds keeps the partition with the
//! highest Newman–Girvan modularity.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{AdjacencyRecord, CommutingRecord, LaborForceRecord, ZoneAssignmentRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZoneError {
    #[error("unknown region {0}")]
    UnknownRegion(u64),
    #[error("region {0} listed twice in the labor force table")]
    DuplicateRegion(u64),
    #[error("region {region}: labor force must be positive, got {value}")]
    NonPositiveLaborForce { region: u64, value: f64 },
    #[error("negative or non-finite flow between {from} and {to}")]
    InvalidFlow { from: u64, to: u64 },
    #[error("empty threshold grid")]
    EmptyGrid,
    #[error("partition covers {got} regions, graph has {expected}")]
    PartitionSize { got: usize, expected: usize },
}

/// Symmetric flow matrix over regions.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutingGraph {
    pub region_ids: Vec<u64>,
    /// `flows[i][j] = F_ij + F_ji`, zero diagonal.
    pub flows: Vec<Vec<f64>>,
    pub labor_force: Vec<f64>,
    pub adjacency: Option<Vec<Vec<bool>>>,
}

impl CommutingGraph {
    pub fn new(region_ids: Vec<u64>, flows: Vec<Vec<f64>>, labor_force: Vec<f64>) -> Result<Self, ZoneError> {
        for (i, &lf) in labor_force.iter().enumerate() {
            if !(lf > 0.0 && lf.is_finite()) {
                return Err(ZoneError::NonPositiveLaborForce { region: region_ids[i], value: lf });
            }
        }
        for i in 0..flows.len() {
            for j in 0..flows.len() {
                let f = flows[i][j];
                if !(f >= 0.0 && f.is_finite()) {
                    return Err(ZoneError::InvalidFlow { from: region_ids[i], to: region_ids[j] });
                }
            }
        }
        Ok(Self { region_ids, flows, labor_force, adjacency: None })
    }

    /// Regions are ordered as in `labor_force`; flows in both directions are
    /// summed and self-flows ignored.
    pub fn from_records(
        commuting: &[CommutingRecord],
        labor_force: &[LaborForceRecord],
        adjacency: Option<&[AdjacencyRecord]>,
    ) -> Result<Self, ZoneError> {
        let mut index = BTreeMap::new();
        for (i, r) in labor_force.iter().enumerate() {
            if index.insert(r.region, i).is_some() {
                return Err(ZoneError::DuplicateRegion(r.region));
            }
        }
        let n = labor_force.len();
        let lookup = |r: u64| index.get(&r).copied().ok_or(ZoneError::UnknownRegion(r));
        let mut flows = vec![vec![0.0; n]; n];
        for c in commuting {
            let (i, j) = (lookup(c.from_region)?, lookup(c.to_region)?);
            if !(c.workers >= 0.0 && c.workers.is_finite()) {
                return Err(ZoneError::InvalidFlow { from: c.from_region, to: c.to_region });
            }
            if i != j {
                flows[i][j] += c.workers;
                flows[j][i] += c.workers;
            }
        }
        let ids = labor_force.iter().map(|r| r.region).collect();
        let mut g = Self::new(ids, flows, labor_force.iter().map(|r| r.labor_force).collect())?;
        if let Some(adj) = adjacency {
            let mut m = vec![vec![false; n]; n];
            for a in adj {
                let (i, j) = (lookup(a.region_a)?, lookup(a.region_b)?);
                m[i][j] = true;
                m[j][i] = true;
            }
            g.adjacency = Some(m);
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.region_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Zone index per region, numbered `0..n_zones` in order of each zone's
    /// first region.
    pub assignment: Vec<usize>,
    pub n_zones: usize,
    pub modularity: f64,
    pub commuter_share: f64,
    pub threshold: Option<f64>,
}

impl Partition {
    pub fn from_assignment(graph: &CommutingGraph, assignment: &[usize], threshold: Option<f64>) -> Self {
        let assignment = renumber(assignment);
        let n_zones = assignment.iter().max().map_or(0, |m| m + 1);
        Partition {
            modularity: modularity(graph, &assignment),
            commuter_share: commuter_share(graph, &assignment),
            n_zones,
            assignment,
            threshold,
        }
    }

    pub fn to_records(&self, graph: &CommutingGraph) -> Vec<ZoneAssignmentRecord> {
        graph
            .region_ids
            .iter()
            .zip(&self.assignment)
            .map(|(&region, &z)| ZoneAssignmentRecord { region, zone: z as u64 + 1 })
            .collect()
    }
}

fn renumber(assignment: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    assignment
        .iter()
        .map(|z| {
            let next = map.len();
            *map.entry(*z).or_insert(next)
        })
        .collect()
}

/// `(a, i) < (b, j)` in (labor force, index) order.
fn smaller(lf: &[f64], i: usize, j: usize) -> bool {
    lf[i] < lf[j] || (lf[i] == lf[j] && i < j)
}

fn dominant_in(flows: &[Vec<f64>], lf: &[f64], alive: &[bool], i: usize) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..flows.len() {
        if j == i || !alive[j] || flows[i][j] <= 0.0 {
            continue;
        }
        let share = flows[i][j] / lf[i];
        if best.is_none_or(|(_, s)| share > s) {
            best = Some((j, share));
        }
    }
    best.filter(|&(j, _)| smaller(lf, i, j))
}

/// Partner with the largest flow share relative to `region`'s labor force,
/// if that partner is larger. Equal labor forces are ordered by index.
pub fn dominant_flow(graph: &CommutingGraph, region: usize) -> Option<(usize, f64)> {
    let alive = vec![true; graph.len()];
    dominant_in(&graph.flows, &graph.labor_force, &alive, region)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merger {
    /// Representative region of the absorbed zone.
    pub absorbed: usize,
    pub into: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub assignment: Vec<usize>,
    pub log: Vec<Merger>,
}

/// Merges until no zone's dominant-flow share exceeds `threshold`.
pub fn merge_pass(graph: &CommutingGraph, threshold: f64) -> MergeOutcome {
    let n = graph.len();
    let mut flows = graph.flows.clone();
    let mut lf = graph.labor_force.clone();
    let mut alive = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut log = Vec::new();
    loop {
        let mut pick: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            if let Some((j, share)) = dominant_in(&flows, &lf, &alive, i) {
                if share > threshold && pick.is_none_or(|(_, _, s)| share > s) {
                    pick = Some((i, j, share));
                }
            }
        }
        let Some((i, j, share)) = pick else { break };
        // fold zone i into zone j
        for k in 0..n {
            if k != i && k != j {
                flows[j][k] += flows[i][k];
                flows[k][j] += flows[k][i];
            }
            flows[i][k] = 0.0;
            flows[k][i] = 0.0;
        }
        flows[j][j] = 0.0;
        lf[j] += lf[i];
        alive[i] = false;
        for o in owner.iter_mut() {
            if *o == i {
                *o = j;
            }
        }
        log.push(Merger { absorbed: i, into: j, share });
    }
    MergeOutcome { assignment: renumber(&owner), log }
}

/// Newman–Girvan modularity `Σ_c (e_cc − a_c²)` of the undirected flow graph.
pub fn modularity(graph: &CommutingGraph, assignment: &[usize]) -> f64 {
    let n_zones = assignment.iter().max().map_or(0, |m| m + 1);
    let mut inside = vec![0.0; n_zones];
    let mut degree = vec![0.0; n_zones];
    let mut total = 0.0;
    for i in 0..graph.len() {
        let c = assignment[i];
        let mut k_i = 0.0;
        let mut in_c = 0.0;
        for j in 0..graph.len() {
            let a = graph.flows[i][j];
            k_i += a;
            if assignment[j] == c {
                in_c += a;
            }
        }
        inside[c] += in_c;
        degree[c] += k_i;
        total += k_i;
    }
    if total == 0.0 {
        return 0.0;
    }
    inside.iter().zip(&degree).map(|(e, a)| e / total - (a / total) * (a / total)).sum()
}

/// Flow mass between zones over total flow mass.
pub fn commuter_share(graph: &CommutingGraph, assignment: &[usize]) -> f64 {
    let mut between = 0.0;
    let mut total = 0.0;
    for i in 0..graph.len() {
        for j in (i + 1)..graph.len() {
            let f = graph.flows[i][j];
            total += f;
            if assignment[i] != assignment[j] {
                between += f;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        between / total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub n_zones: usize,
    pub modularity: f64,
    pub commuter_share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub best: Partition,
    pub points: Vec<SweepPoint>,
}

/// Runs [`merge_pass`] at every threshold in parallel and keeps the highest
/// modularity; ties go to fewer zones, then the lower threshold.
pub fn sweep_thresholds(graph: &CommutingGraph, grid: &[f64]) -> Result<SweepResult, ZoneError> {
    if grid.is_empty() {
        return Err(ZoneError::EmptyGrid);
    }
    let partitions: Vec<Partition> = grid
        .par_iter()
        .map(|&t| Partition::from_assignment(graph, &merge_pass(graph, t).assignment, Some(t)))
        .collect();
    let points = partitions
        .iter()
        .map(|p| SweepPoint {
            threshold: p.threshold.expect("sweep partitions carry thresholds"),
            n_zones: p.n_zones,
            modularity: p.modularity,
            commuter_share: p.commuter_share,
        })
        .collect();
    let best = partitions
        .into_iter()
        .reduce(|a, b| {
            let better = b.modularity > a.modularity
                || (b.modularity == a.modularity
                    && (b.n_zones < a.n_zones || (b.n_zones == a.n_zones && b.threshold < a.threshold)));
            if better {
                b
            } else {
                a
            }
        })
        .expect("non-empty grid");
    Ok(SweepResult { best, points })
}

/// `start, start + step, ...` up to and including `end` (within rounding).
pub fn threshold_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || end < start {
        return Vec::new();
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + step * k as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContiguityMode {
    /// Each connected piece of a zone becomes its own zone.
    #[default]
    Split,
    /// Pieces other than a zone's largest join the adjacent zone they share
    /// the most flow with.
    Attach,
}

fn components(adj: &[Vec<bool>], members: &[usize]) -> Vec<Vec<usize>> {
    let set: BTreeSet<usize> = members.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in members {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &set {
                if adj[v][w] && seen.insert(w) {
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn split_all(adj: &[Vec<bool>], assignment: &[usize]) -> Vec<usize> {
    let mut zones: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &z) in assignment.iter().enumerate() {
        zones.entry(z).or_default().push(i);
    }
    let mut out = vec![0; assignment.len()];
    let mut next = 0;
    for members in zones.values() {
        for comp in components(adj, members) {
            for i in comp {
                out[i] = next;
            }
            next += 1;
        }
    }
    renumber(&out)
}

/// Makes every zone adjacency-connected. Without adjacency information the
/// partition is returned unchanged.
pub fn enforce_contiguity(graph: &CommutingGraph, partition: &Partition, mode: ContiguityMode) -> Partition {
    let Some(adj) = &graph.adjacency else {
        warn!("no adjacency supplied; contiguity not enforced");
        return partition.clone();
    };
    let assignment = match mode {
        ContiguityMode::Split => split_all(adj, &partition.assignment),
        ContiguityMode::Attach => {
            let mut assignment = partition.assignment.clone();
            let mut zones: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &z) in assignment.iter().enumerate() {
                zones.entry(z).or_default().push(i);
            }
            for (&z, members) in &zones {
                let mut comps = components(adj, members);
                if comps.len() < 2 {
                    continue;
                }
                let size = |c: &Vec<usize>| c.iter().map(|&i| graph.labor_force[i]).sum::<f64>();
                let main = (0..comps.len())
                    .max_by(|&a, &b| size(&comps[a]).total_cmp(&size(&comps[b])).then(b.cmp(&a)))
                    .expect("at least two components");
                comps.remove(main);
                for enclave in comps {
                    let mut flow_to: BTreeMap<usize, f64> = BTreeMap::new();
                    for &i in &enclave {
                        for j in 0..graph.len() {
                            if adj[i][j] && assignment[j] != z {
                                *flow_to.entry(assignment[j]).or_default() += graph.flows[i][j];
                            }
                        }
                    }
                    let target = flow_to
                        .iter()
                        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
                        .map(|(&zone, _)| zone);
                    if let Some(t) = target {
                        for &i in &enclave {
                            assignment[i] = t;
                        }
                    }
                }
            }
            // Remaining pieces (enclaves without neighbours) become zones of their own.
            split_all(adj, &assignment)
        }
    };
    Partition::from_assignment(graph, &assignment, partition.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(flows: Vec<Vec<f64>>, lf: Vec<f64>) -> CommutingGraph {
        let n = lf.len();
        CommutingGraph::new((1..=n as u64).collect(), flows, lf).unwrap()
    }

    #[test]
    fn two_region_dominant() {
        let g = graph(vec![vec![0.0, 10.0], vec![10.0, 0.0]], vec![100.0, 500.0]);
        assert_eq!(dominant_flow(&g, 0), Some((1, 0.10)));
        assert_eq!(dominant_flow(&g, 1), None);
    }

    #[test]
    fn isolated_region_has_none() {
        let g = graph(vec![vec![0.0; 2]; 2], vec![1.0, 2.0]);
        assert_eq!(dominant_flow(&g, 0), None);
    }

    #[test]
    fn three_region_shares() {
        // region 0 (lf 100): 20 to region 1, 30 to region 2
        let g = graph(
            vec![vec![0.0, 20.0, 30.0], vec![20.0, 0.0, 5.0], vec![30.0, 5.0, 0.0]],
            vec![100.0, 200.0, 300.0],
        );
        assert_eq!(dominant_flow(&g, 0), Some((2, 0.30)));
        // region 1's biggest partner is region 0, which is smaller
        assert_eq!(dominant_flow(&g, 1), None);
    }

    #[test]
    fn threshold_above_all_is_identity() {
        let g = graph(vec![vec![0.0, 10.0], vec![10.0, 0.0]], vec![100.0, 500.0]);
        let out = merge_pass(&g, 0.5);
        assert_eq!(out.assignment, vec![0, 1]);
        assert!(out.log.is_empty());
        let out = merge_pass(&g, 0.05);
        assert_eq!(out.assignment, vec![0, 0]);
    }

    #[test]
    fn modularity_values() {
        // two disconnected triangles
        let mut f = vec![vec![0.0; 6]; 6];
        for (a, b) in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            f[a][b] = 1.0;
            f[b][a] = 1.0;
        }
        let g = graph(f, vec![1.0; 6]);
        assert!((modularity(&g, &[0, 0, 0, 1, 1, 1]) - 0.5).abs() < 1e-15);
        assert_eq!(modularity(&g, &[0; 6]), 0.0);
        assert_eq!(commuter_share(&g, &[0, 0, 0, 1, 1, 1]), 0.0);
        assert_eq!(commuter_share(&g, &[0, 1, 2, 3, 4, 5]), 1.0);
    }

    #[test]
    fn empty_grid_rejected() {
        let g = graph(vec![vec![0.0]], vec![1.0]);
        assert_eq!(sweep_thresholds(&g, &[]).unwrap_err(), ZoneError::EmptyGrid);
    }

    #[test]
    fn grid_endpoints() {
        let g = threshold_grid(0.01, 0.5, 0.01);
        assert_eq!(g.len(), 50);
        assert!((g[49] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn split_fragmented_zone() {
        // path 0-1-2; zone {0, 2} is not connected without 1
        let mut g = graph(vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]], vec![1.0, 1.0, 1.0]);
        g.adjacency = Some(vec![vec![false, true, false], vec![true, false, true], vec![false, true, false]]);
        let p = Partition::from_assignment(&g, &[0, 1, 0], None);
        let split = enforce_contiguity(&g, &p, ContiguityMode::Split);
        assert_eq!(split.assignment, vec![0, 1, 2]);
        let attached = enforce_contiguity(&g, &p, ContiguityMode::Attach);
        assert_eq!(attached.n_zones, 2);
    }

    #[test]
    fn no_adjacency_is_noop() {
        let g = graph(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 1.0]);
        let p = Partition::from_assignment(&g, &[0, 1], None);
        assert_eq!(enforce_contiguity(&g, &p, ContiguityMode::Split), p);
    }
}
