//! Network instances: graph, per-node channel sets, and local label
//! permutations.
//!
//! An instance is the ground truth a simulation runs against. Protocol state
//! machines only ever see local labels; global channel ids live here and in
//! the instance files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::sim::{derive_stream, purpose, RngStream};
use crate::{EdgeId, GlobalChannel, LocalLabel, NodeId};

/// Model parameters of an instance. `k`/`k_max` bound the per-edge channel
/// overlap, `delta_max` bounds node degree, `diam` is the graph diameter.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct NetworkParams {
    pub n: u32,
    pub c: u16,
    pub k: u16,
    pub k_max: u16,
    #[serde(rename = "delta")]
    pub delta_max: u32,
    pub diam: u32,
}

impl NetworkParams {
    /// Checks the structural invariants that do not need the graph.
    pub fn check(&self) -> Result<(), TopologyError> {
        if self.k < 1 || self.k > self.k_max || self.k_max > self.c {
            return Err(TopologyError::BadParams(format!(
                "need 1 <= k <= k_max <= c, got k={} k_max={} c={}",
                self.k, self.k_max, self.c
            )));
        }
        if self.n < 2 || self.delta_max < 1 || self.delta_max > self.n - 1 || self.diam < 1 {
            return Err(TopologyError::BadParams(format!(
                "need n >= 2, 1 <= delta <= n-1, diam >= 1, got n={} delta={} diam={}",
                self.n, self.delta_max, self.diam
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TopologyError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("generation failed after {retries} retries: {hint}")]
    GenerationFailed { retries: u32, hint: String },
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error("instance file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("instance parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One violated instance invariant, as reported by [`NetworkInstance::validate`].
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Violation {
    NotConnected,
    SelfLoop(EdgeId),
    DuplicateEdge(EdgeId),
    OverlapOutOfRange { edge: EdgeId, overlap: u16, k: u16, k_max: u16 },
    DegreeExceeded { node: NodeId, degree: u32, delta_max: u32 },
    DiameterMismatch { expected: u32, actual: u32 },
    ChannelSetSize { node: NodeId, size: usize, c: u16 },
    LabelPermNotBijective { node: NodeId },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NotConnected => write!(f, "graph is not connected"),
            Violation::SelfLoop(e) => write!(f, "self-loop edge {e}"),
            Violation::DuplicateEdge(e) => write!(f, "duplicate edge {e}"),
            Violation::OverlapOutOfRange { edge, overlap, k, k_max } => {
                write!(f, "edge {edge} overlap {overlap} outside [{k}, {k_max}]")
            }
            Violation::DegreeExceeded { node, degree, delta_max } => {
                write!(f, "node {node} degree {degree} exceeds delta {delta_max}")
            }
            Violation::DiameterMismatch { expected, actual } => {
                write!(f, "declared diameter {expected} but computed {actual}")
            }
            Violation::ChannelSetSize { node, size, c } => {
                write!(f, "node {node} has {size} channels, expected {c}")
            }
            Violation::LabelPermNotBijective { node } => {
                write!(f, "node {node} label permutation is not a bijection onto its channel set")
            }
        }
    }
}

/// A concrete network: simple connected graph plus channel assignments.
#[derive(Clone, Debug)]
pub struct NetworkInstance {
    params: NetworkParams,
    edges: Vec<EdgeId>,
    channel_sets: Vec<BTreeSet<GlobalChannel>>,
    label_to_global: Vec<Vec<GlobalChannel>>,
    // Derived state, rebuilt on construction and load.
    neighbors: Vec<Vec<NodeId>>,
    adj_bits: Vec<Vec<u64>>,
    label_to_dense: Vec<Vec<u32>>,
    dense_channels: u32,
    overlaps: BTreeMap<EdgeId, u16>,
}

impl NetworkInstance {
    /// Assembles an instance from raw parts and rebuilds derived state.
    ///
    /// Shape errors (bad node ids, label tables of the wrong length) are
    /// rejected here; semantic invariants are left to [`Self::validate`].
    pub fn from_parts(
        params: NetworkParams,
        mut edges: Vec<EdgeId>,
        channel_sets: Vec<BTreeSet<GlobalChannel>>,
        label_to_global: Vec<Vec<GlobalChannel>>,
    ) -> Result<Self, TopologyError> {
        let n = params.n as usize;
        if channel_sets.len() != n || label_to_global.len() != n {
            return Err(TopologyError::Malformed(format!(
                "expected {n} channel sets and label tables, got {} and {}",
                channel_sets.len(),
                label_to_global.len()
            )));
        }
        for e in &edges {
            if e.0 == e.1 || e.1.index() >= n {
                return Err(TopologyError::Malformed(format!("bad edge {e}")));
            }
        }
        edges.sort();
        edges.dedup();

        let mut neighbors = vec![Vec::new(); n];
        let words = n.div_ceil(64);
        let mut adj_bits = vec![vec![0u64; words]; n];
        for e in &edges {
            let (u, v) = (e.0.index(), e.1.index());
            neighbors[u].push(e.1);
            neighbors[v].push(e.0);
            adj_bits[u][v / 64] |= 1 << (v % 64);
            adj_bits[v][u / 64] |= 1 << (u % 64);
        }

        // Dense channel indices for the hot simulation path.
        let mut dense: BTreeMap<GlobalChannel, u32> = BTreeMap::new();
        for set in &channel_sets {
            for g in set {
                let next = dense.len() as u32;
                dense.entry(*g).or_insert(next);
            }
        }
        let mut label_to_dense = Vec::with_capacity(n);
        for (node, perm) in label_to_global.iter().enumerate() {
            let mut row = Vec::with_capacity(perm.len());
            for g in perm {
                let Some(&d) = dense.get(g) else {
                    return Err(TopologyError::Malformed(format!(
                        "node {node} label maps to unknown channel {}",
                        g.0
                    )));
                };
                row.push(d);
            }
            label_to_dense.push(row);
        }

        let mut overlaps = BTreeMap::new();
        for e in &edges {
            let a = &channel_sets[e.0.index()];
            let b = &channel_sets[e.1.index()];
            let shared = a.intersection(b).count() as u16;
            overlaps.insert(*e, shared);
        }

        Ok(NetworkInstance {
            params,
            edges,
            channel_sets,
            label_to_global,
            neighbors,
            adj_bits,
            label_to_dense,
            dense_channels: dense.len() as u32,
            overlaps,
        })
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n as usize
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.neighbors[u.index()]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.neighbors[u.index()].len()
    }

    #[inline]
    pub fn adjacent(&self, u: NodeId, v: NodeId) -> bool {
        let row = &self.adj_bits[u.index()];
        let i = v.index();
        row[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn channel_set(&self, u: NodeId) -> &BTreeSet<GlobalChannel> {
        &self.channel_sets[u.index()]
    }

    /// Global channel a node's local label refers to.
    pub fn global_of(&self, u: NodeId, label: LocalLabel) -> Option<GlobalChannel> {
        self.label_to_global[u.index()].get(label.index()).copied()
    }

    /// Dense channel index for the hot path; `None` if the label is out of range.
    #[inline]
    pub fn dense_of(&self, u: NodeId, label: LocalLabel) -> Option<u32> {
        self.label_to_dense[u.index()].get(label.index()).copied()
    }

    pub fn dense_channel_count(&self) -> u32 {
        self.dense_channels
    }

    /// Realized channel overlap of an edge.
    pub fn overlap(&self, e: EdgeId) -> Option<u16> {
        self.overlaps.get(&e).copied()
    }

    /// Neighbors of `u` sharing at least `min_overlap` channels with it.
    pub fn good_neighbors(&self, u: NodeId, min_overlap: u16) -> Vec<NodeId> {
        self.neighbors(u)
            .iter()
            .copied()
            .filter(|&v| self.overlap(EdgeId::new(u, v)).unwrap_or(0) >= min_overlap)
            .collect()
    }

    /// Checks every instance invariant; an empty list means the instance is
    /// valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.n();

        for e in &self.edges {
            if e.0 == e.1 {
                out.push(Violation::SelfLoop(*e));
            }
        }
        for w in self.edges.windows(2) {
            if w[0] == w[1] {
                out.push(Violation::DuplicateEdge(w[0]));
            }
        }

        let (connected, diam) = bfs_diameter(&self.neighbors);
        if !connected {
            out.push(Violation::NotConnected);
        } else if diam != self.params.diam {
            out.push(Violation::DiameterMismatch {
                expected: self.params.diam,
                actual: diam,
            });
        }

        for (e, &overlap) in &self.overlaps {
            if overlap < self.params.k || overlap > self.params.k_max {
                out.push(Violation::OverlapOutOfRange {
                    edge: *e,
                    overlap,
                    k: self.params.k,
                    k_max: self.params.k_max,
                });
            }
        }

        for u in 0..n {
            let deg = self.neighbors[u].len() as u32;
            if deg > self.params.delta_max {
                out.push(Violation::DegreeExceeded {
                    node: NodeId(u as u32),
                    degree: deg,
                    delta_max: self.params.delta_max,
                });
            }
            if self.channel_sets[u].len() != self.params.c as usize {
                out.push(Violation::ChannelSetSize {
                    node: NodeId(u as u32),
                    size: self.channel_sets[u].len(),
                    c: self.params.c,
                });
            }
            let perm: BTreeSet<GlobalChannel> = self.label_to_global[u].iter().copied().collect();
            if self.label_to_global[u].len() != self.params.c as usize || perm != self.channel_sets[u]
            {
                out.push(Violation::LabelPermNotBijective {
                    node: NodeId(u as u32),
                });
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), TopologyError> {
        let file = InstanceFile::from_instance(self);
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TopologyError> {
        let text = std::fs::read_to_string(path)?;
        let file: InstanceFile = serde_json::from_str(&text)?;
        file.into_instance()
    }
}

/// On-disk JSON schema:
/// `{params:{n,c,k,k_max,delta,diam}, edges:[[u,v],...], channels:{node:[ids]},
/// labels:{node:[ids in local order]}}`.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    params: NetworkParams,
    edges: Vec<(u32, u32)>,
    channels: BTreeMap<String, Vec<u32>>,
    labels: BTreeMap<String, Vec<u32>>,
}

impl InstanceFile {
    fn from_instance(net: &NetworkInstance) -> Self {
        InstanceFile {
            params: net.params,
            edges: net.edges.iter().map(|e| (e.0 .0, e.1 .0)).collect(),
            channels: net
                .channel_sets
                .iter()
                .enumerate()
                .map(|(u, set)| (u.to_string(), set.iter().map(|g| g.0).collect()))
                .collect(),
            labels: net
                .label_to_global
                .iter()
                .enumerate()
                .map(|(u, perm)| (u.to_string(), perm.iter().map(|g| g.0).collect()))
                .collect(),
        }
    }

    fn into_instance(self) -> Result<NetworkInstance, TopologyError> {
        let n = self.params.n as usize;
        let mut channel_sets = vec![BTreeSet::new(); n];
        for (key, ids) in &self.channels {
            let u: usize = key
                .parse()
                .map_err(|_| TopologyError::Malformed(format!("bad node key {key:?} in channels")))?;
            if u >= n {
                return Err(TopologyError::Malformed(format!("node key {u} out of range")));
            }
            channel_sets[u] = ids.iter().map(|&g| GlobalChannel(g)).collect();
        }
        let mut label_to_global = vec![Vec::new(); n];
        for (key, ids) in &self.labels {
            let u: usize = key
                .parse()
                .map_err(|_| TopologyError::Malformed(format!("bad node key {key:?} in labels")))?;
            if u >= n {
                return Err(TopologyError::Malformed(format!("node key {u} out of range")));
            }
            label_to_global[u] = ids.iter().map(|&g| GlobalChannel(g)).collect();
        }
        let edges = self
            .edges
            .iter()
            .map(|&(a, b)| {
                if a == b || a as usize >= n || b as usize >= n {
                    Err(TopologyError::Malformed(format!("bad edge [{a}, {b}]")))
                } else {
                    Ok(EdgeId::new(NodeId(a), NodeId(b)))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        NetworkInstance::from_parts(self.params, edges, channel_sets, label_to_global)
    }
}

/// Returns (connected, diameter). Diameter is 0 for a single node.
fn bfs_diameter(neighbors: &[Vec<NodeId>]) -> (bool, u32) {
    let n = neighbors.len();
    let mut diam = 0u32;
    let mut dist = vec![u32::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[start] = 0;
        queue.clear();
        queue.push_back(start);
        let mut seen = 1usize;
        let mut ecc = 0u32;
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                let v = v.index();
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    ecc = ecc.max(dist[v]);
                    seen += 1;
                    queue.push_back(v);
                }
            }
        }
        if seen != n {
            return (false, 0);
        }
        diam = diam.max(ecc);
    }
    (true, diam)
}

fn shuffled_labels(
    channel_sets: &[BTreeSet<GlobalChannel>],
    seed: u64,
) -> Vec<Vec<GlobalChannel>> {
    channel_sets
        .iter()
        .enumerate()
        .map(|(u, set)| {
            let mut perm: Vec<GlobalChannel> = set.iter().copied().collect();
            let mut rng = derive_stream(seed, u as u64, purpose::INSTANCE);
            perm.shuffle(&mut rng);
            perm
        })
        .collect()
}

fn recomputed_params(
    n: u32,
    c: u16,
    edges: &[EdgeId],
    channel_sets: &[BTreeSet<GlobalChannel>],
    neighbors: &[Vec<NodeId>],
) -> NetworkParams {
    let mut k = u16::MAX;
    let mut k_max = 0u16;
    for e in edges {
        let shared = channel_sets[e.0.index()]
            .intersection(&channel_sets[e.1.index()])
            .count() as u16;
        k = k.min(shared);
        k_max = k_max.max(shared);
    }
    let delta_max = neighbors.iter().map(|ns| ns.len() as u32).max().unwrap_or(0);
    let (_, diam) = bfs_diameter(neighbors);
    NetworkParams {
        n,
        c,
        k,
        k_max,
        delta_max,
        diam,
    }
}

fn build_with_recomputed_params(
    n: u32,
    c: u16,
    edges: Vec<EdgeId>,
    channel_sets: Vec<BTreeSet<GlobalChannel>>,
    seed: u64,
) -> Result<NetworkInstance, TopologyError> {
    let mut neighbors = vec![Vec::new(); n as usize];
    for e in &edges {
        neighbors[e.0.index()].push(e.1);
        neighbors[e.1.index()].push(e.0);
    }
    let params = recomputed_params(n, c, &edges, &channel_sets, &neighbors);
    let labels = shuffled_labels(&channel_sets, seed);
    NetworkInstance::from_parts(params, edges, channel_sets, labels)
}

/// Two nodes whose channel sets overlap in exactly `k` of `c` channels.
///
/// Viewed through the two label permutations, the overlap is a `k`-matching
/// over the label pairs, uniform over all such matchings.
pub fn gen_two_node(c: u16, k: u16, seed: u64) -> Result<NetworkInstance, TopologyError> {
    if k < 1 || k > c {
        return Err(TopologyError::BadParams(format!(
            "two-node instance needs 1 <= k <= c, got k={k} c={c}"
        )));
    }
    let c_u = c as u32;
    let a: BTreeSet<GlobalChannel> = (0..c_u).map(GlobalChannel).collect();
    let b: BTreeSet<GlobalChannel> = (c_u - k as u32..2 * c_u - k as u32)
        .map(GlobalChannel)
        .collect();
    let edges = vec![EdgeId::new(NodeId(0), NodeId(1))];
    build_with_recomputed_params(2, c, edges, vec![a, b], seed)
}

/// A hub with `delta` leaves; each hub-leaf overlap drawn uniformly from
/// `[k, k_max]`, leaves pairwise non-adjacent.
pub fn gen_star(
    delta: u32,
    c: u16,
    k: u16,
    k_max: u16,
    seed: u64,
) -> Result<NetworkInstance, TopologyError> {
    if delta < 1 {
        return Err(TopologyError::BadParams("star needs delta >= 1".into()));
    }
    if k < 1 || k > k_max || k_max > c {
        return Err(TopologyError::BadParams(format!(
            "star needs 1 <= k <= k_max <= c, got k={k} k_max={k_max} c={c}"
        )));
    }
    let n = delta + 1;
    let mut rng = derive_stream(seed, u64::MAX, purpose::INSTANCE);
    let hub: Vec<GlobalChannel> = (0..c as u32).map(GlobalChannel).collect();
    let mut channel_sets = vec![hub.iter().copied().collect::<BTreeSet<_>>()];
    let mut next_free = c as u32;
    let mut edges = Vec::new();
    for leaf in 1..=delta {
        let overlap = rng.random_range(k..=k_max) as usize;
        let mut hub_perm = hub.clone();
        hub_perm.shuffle(&mut rng);
        let mut set: BTreeSet<GlobalChannel> = hub_perm[..overlap].iter().copied().collect();
        while set.len() < c as usize {
            set.insert(GlobalChannel(next_free));
            next_free += 1;
        }
        channel_sets.push(set);
        edges.push(EdgeId::new(NodeId(0), NodeId(leaf)));
    }
    build_with_recomputed_params(n, c, edges, channel_sets, seed)
}

/// Complete tree of the given height in which every non-leaf has
/// `min(c, delta) - 1` children, siblings share no channels, and each
/// parent-child pair overlaps in exactly one channel.
pub fn gen_complete_tree(
    depth: u32,
    c: u16,
    delta: u32,
    seed: u64,
) -> Result<NetworkInstance, TopologyError> {
    if depth < 1 {
        return Err(TopologyError::BadParams("tree needs depth >= 1".into()));
    }
    let branching = (c as u32).min(delta).saturating_sub(1);
    if branching < 1 {
        return Err(TopologyError::BadParams(format!(
            "tree needs min(c, delta) >= 2, got c={c} delta={delta}"
        )));
    }
    // branching <= c - 1, so every non-leaf can hand a distinct non-parent
    // channel to each child.
    let mut next_free = 0u32;
    let mut fresh = |count: usize| -> Vec<GlobalChannel> {
        let out = (next_free..next_free + count as u32)
            .map(GlobalChannel)
            .collect();
        next_free += count as u32;
        out
    };

    // own_channels[u] lists u's channels with the parent-shared one (if any)
    // last, so the first `branching` entries are free for u's children.
    let mut own_channels: Vec<Vec<GlobalChannel>> = vec![fresh(c as usize)];
    let mut edges = Vec::new();
    let mut level: Vec<u32> = vec![0];
    let mut next_id = 1u32;
    for d in 0..depth {
        let mut next_level = Vec::new();
        for &parent in &level {
            for slot in 0..branching {
                let child = next_id;
                next_id += 1;
                let shared = own_channels[parent as usize][slot as usize];
                let mut chans = fresh(c as usize - 1);
                chans.push(shared);
                own_channels.push(chans);
                edges.push(EdgeId::new(NodeId(parent), NodeId(child)));
                if d + 1 < depth {
                    next_level.push(child);
                }
            }
        }
        level = next_level;
    }
    let channel_sets: Vec<BTreeSet<GlobalChannel>> = own_channels
        .into_iter()
        .map(|v| v.into_iter().collect())
        .collect();
    build_with_recomputed_params(next_id, c, edges, channel_sets, seed)
}

/// Assignment-first random instance: each node draws a random `c`-subset of a
/// `pool`-channel universe, candidate edges are the pairs whose overlap lies
/// in `[k, k_max]`, each kept with probability `edge_density`. Redraws until
/// connected; params are recomputed from the realized instance.
#[allow(clippy::too_many_arguments)]
pub fn gen_random(
    n: u32,
    pool: u32,
    c: u16,
    k: u16,
    k_max: u16,
    edge_density: f64,
    seed: u64,
) -> Result<NetworkInstance, TopologyError> {
    if n < 2 {
        return Err(TopologyError::BadParams("random instance needs n >= 2".into()));
    }
    if pool < c as u32 {
        return Err(TopologyError::BadParams(format!(
            "pool {pool} smaller than c {c}"
        )));
    }
    if k < 1 || k > k_max || k_max > c {
        return Err(TopologyError::BadParams(format!(
            "need 1 <= k <= k_max <= c, got k={k} k_max={k_max} c={c}"
        )));
    }
    if !(0.0..=1.0).contains(&edge_density) || edge_density == 0.0 {
        return Err(TopologyError::BadParams(format!(
            "edge density must be in (0, 1], got {edge_density}"
        )));
    }

    const MAX_RETRIES: u32 = 200;
    let mut rng = derive_stream(seed, u64::MAX, purpose::INSTANCE);
    let universe: Vec<GlobalChannel> = (0..pool).map(GlobalChannel).collect();
    for _ in 0..MAX_RETRIES {
        let channel_sets: Vec<BTreeSet<GlobalChannel>> = (0..n)
            .map(|_| {
                let mut pool_perm = universe.clone();
                pool_perm.shuffle(&mut rng);
                pool_perm[..c as usize].iter().copied().collect()
            })
            .collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let shared = channel_sets[u as usize]
                    .intersection(&channel_sets[v as usize])
                    .count() as u16;
                if shared >= k && shared <= k_max && rng.random_bool(edge_density) {
                    edges.push(EdgeId::new(NodeId(u), NodeId(v)));
                }
            }
        }
        let mut neighbors = vec![Vec::new(); n as usize];
        for e in &edges {
            neighbors[e.0.index()].push(e.1);
            neighbors[e.1.index()].push(e.0);
        }
        let (connected, _) = bfs_diameter(&neighbors);
        if connected {
            return build_with_recomputed_params(n, c, edges, channel_sets, seed);
        }
    }
    Err(TopologyError::GenerationFailed {
        retries: MAX_RETRIES,
        hint: format!(
            "no connected instance for n={n} pool={pool} c={c} k={k} k_max={k_max} density={edge_density}; \
             try a higher density, a smaller pool, or a wider overlap band"
        ),
    })
}

/// A dense instance in which every node has exactly `good_deg` neighbors
/// sharing `good_overlap` channels and `weak_deg` neighbors sharing one.
///
/// The graph is complete on `good_deg + weak_deg + 1` nodes; the good
/// neighborhood is a circulant subgraph, and every edge gets its own private
/// shared channels, so `c = good_deg * good_overlap + weak_deg`.
pub fn gen_split_overlap(
    good_deg: u32,
    good_overlap: u16,
    weak_deg: u32,
    seed: u64,
) -> Result<NetworkInstance, TopologyError> {
    let n = good_deg + weak_deg + 1;
    if good_deg < 1 || weak_deg < 1 || good_overlap < 2 {
        return Err(TopologyError::BadParams(
            "split-overlap instance needs good_deg >= 1, weak_deg >= 1, good_overlap >= 2".into(),
        ));
    }
    if good_deg % 2 == 1 && n % 2 == 1 {
        return Err(TopologyError::BadParams(format!(
            "odd good degree {good_deg} needs an even node count, got n={n}"
        )));
    }
    let c = good_deg as usize * good_overlap as usize + weak_deg as usize;
    if c > u16::MAX as usize {
        return Err(TopologyError::BadParams(format!("channel count {c} too large")));
    }

    // Circulant offsets 1..=good_deg/2 plus n/2 when good_deg is odd.
    let mut good_offsets: Vec<u32> = (1..=good_deg / 2).collect();
    if good_deg % 2 == 1 {
        good_offsets.push(n / 2);
    }
    let is_good = |u: u32, v: u32| -> bool {
        let d = (v + n - u) % n;
        let d = d.min(n - d);
        good_offsets.contains(&d)
    };

    let mut channel_sets: Vec<BTreeSet<GlobalChannel>> = vec![BTreeSet::new(); n as usize];
    let mut edges = Vec::new();
    let mut next_free = 0u32;
    for u in 0..n {
        for v in u + 1..n {
            let shared = if is_good(u, v) { good_overlap as u32 } else { 1 };
            for _ in 0..shared {
                channel_sets[u as usize].insert(GlobalChannel(next_free));
                channel_sets[v as usize].insert(GlobalChannel(next_free));
                next_free += 1;
            }
            edges.push(EdgeId::new(NodeId(u), NodeId(v)));
        }
    }
    build_with_recomputed_params(n, c as u16, edges, channel_sets, seed)
}

/// Uniform random label permutation refresh, preserving everything else.
/// Protocol behavior distributions must be unchanged under this operation.
pub fn reshuffle_labels(net: &NetworkInstance, seed: u64) -> NetworkInstance {
    let labels = shuffled_labels(&net.channel_sets, seed);
    NetworkInstance::from_parts(net.params, net.edges.clone(), net.channel_sets.clone(), labels)
        .expect("relabeling cannot break a valid instance")
}

/// The overlap of a two-node instance expressed as (label at node 0, label at
/// node 1) pairs. This is the matching hidden behind the local labels.
pub fn two_node_label_matching(net: &NetworkInstance) -> Vec<(LocalLabel, LocalLabel)> {
    assert_eq!(net.n(), 2, "label matching is defined for two-node instances");
    let shared: Vec<GlobalChannel> = net
        .channel_set(NodeId(0))
        .intersection(net.channel_set(NodeId(1)))
        .copied()
        .collect();
    let mut out = Vec::with_capacity(shared.len());
    for g in shared {
        let a = net.label_to_global[0].iter().position(|&x| x == g).unwrap();
        let b = net.label_to_global[1].iter().position(|&x| x == g).unwrap();
        out.push((LocalLabel::from_index(a), LocalLabel::from_index(b)));
    }
    out.sort();
    out
}

/// Seeded stream for instance-level draws, exposed for the harness.
pub fn instance_stream(seed: u64) -> RngStream {
    derive_stream(seed, u64::MAX, purpose::INSTANCE)
}
