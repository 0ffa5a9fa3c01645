//! Force-directed 3D layout mirroring the network.
//!
//! Every hidden unit is a node; the input and output layers are collapsed
//! into one aggregate node each. Connected nodes attract with a
//! distance-independent force `k_a·|w|` (w the normalised weight), nodes of
//! the same hidden layer attract as if joined by a unit weight, and every
//! pair repels with `k_r/d²`.

use std::collections::HashMap;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{HiddenLayer, Mlp};

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add_assign(a: &mut Vec3, b: Vec3) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn sub_assign(a: &mut Vec3, b: Vec3) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x -= y);
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    Hidden1,
    Hidden2,
    Output,
}

impl NodeKind {
    pub fn hidden(layer: HiddenLayer) -> Self {
        match layer {
            HiddenLayer::First => NodeKind::Hidden1,
            HiddenLayer::Second => NodeKind::Hidden2,
        }
    }

    pub fn hidden_layer(self) -> Option<HiddenLayer> {
        match self {
            NodeKind::Hidden1 => Some(HiddenLayer::First),
            NodeKind::Hidden2 => Some(HiddenLayer::Second),
            _ => None,
        }
    }
}

/// Which pair of adjacent layers an edge spans; normalisation is per pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerPair {
    InputHidden1,
    Hidden1Hidden2,
    Hidden2Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutNode {
    pub id: u32,
    pub kind: NodeKind,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Held in place by an ongoing drag; skipped by the integrator.
    pub pinned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEdge {
    pub a: u32,
    pub b: u32,
    pub pair: LayerPair,
    pub raw_weight: f64,
    pub norm_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub k_a: f64,
    pub k_r: f64,
    pub dt: f64,
    /// Fraction of velocity retained per step; 1 is lossless.
    pub damping: f64,
    pub max_speed: f64,
    pub epsilon_dist: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            k_a: 1.0,
            k_r: 2.0,
            dt: 1.0 / 60.0,
            damping: 0.98,
            max_speed: 10.0,
            epsilon_dist: 1e-3,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.k_a, self.k_r, self.dt, self.max_speed, self.epsilon_dist];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!("layout parameters must be positive: {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.damping) {
            return Err(Error::invalid(format!("damping {} outside [0, 1]", self.damping)));
        }
        Ok(())
    }
}

/// Distance-independent pull on `a` toward `b` of magnitude `k_a·|w|`.
/// Zero when the nodes (nearly) coincide.
pub fn attractive_force(a: Vec3, b: Vec3, norm_weight: f64, k_a: f64, epsilon_dist: f64) -> Vec3 {
    let delta = sub(b, a);
    let d = norm(delta);
    if d < epsilon_dist {
        return [0.0; 3];
    }
    scale(delta, k_a * norm_weight.abs() / d)
}

/// Attraction between two nodes of the same hidden layer (unit weight).
pub fn intra_layer_attraction(a: Vec3, b: Vec3, k_a: f64, epsilon_dist: f64) -> Vec3 {
    attractive_force(a, b, 1.0, k_a, epsilon_dist)
}

/// Push on `i` away from `j` of magnitude `k_r/d²`, with `d` floored at
/// `epsilon_dist`. Coincident nodes are pushed apart along +x / −x.
pub fn repulsive_force(i: Vec3, j: Vec3, k_r: f64, epsilon_dist: f64) -> Vec3 {
    let delta = sub(i, j);
    let d = norm(delta);
    let magnitude = k_r / d.max(epsilon_dist).powi(2);
    if d == 0.0 {
        return [magnitude, 0.0, 0.0];
    }
    scale(delta, magnitude / d)
}

/// New raw weight after a drag moved a node from `d_old` to `d_new` away
/// from its neighbour: the pair balance `k_a|w| = k_r/d²` gives
/// `w' = w·(d_old/d_new)²`.
pub fn weight_from_drag(raw_weight: f64, d_old: f64, d_new: f64, epsilon_dist: f64) -> f64 {
    let ratio = d_old.max(epsilon_dist) / d_new.max(epsilon_dist);
    raw_weight * ratio * ratio
}

/// Scales each group's weights by the largest magnitude in that group.
fn normalize_group(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max == 0.0 {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|w| (w / max).clamp(-1.0, 1.0)).collect()
}

/// Serializable view of the graph for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSnapshot {
    pub nodes: Vec<SnapshotNode>,
    pub edges: Vec<SnapshotEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub id: u32,
    pub kind: NodeKind,
    pub pos: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEdge {
    pub a: u32,
    pub b: u32,
    pub w: f64,
}

/// Change to one edge's raw weight produced by a drag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragUpdate {
    pub edge: usize,
    pub old_raw: f64,
    pub new_raw: f64,
    /// `new_raw / old_raw`, well defined even when `old_raw` is zero.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutGraph {
    nodes: Vec<LayoutNode>,
    edges: Vec<LayoutEdge>,
    /// Hidden node ids in unit order, per hidden layer.
    hidden: [Vec<u32>; 2],
    index: HashMap<u32, usize>,
    next_id: u32,
}

impl LayoutGraph {
    /// Mirrors `net`: aggregate input and output nodes plus one node per
    /// hidden unit, placed at seeded random points in the unit ball.
    pub fn build(net: &Mlp, seed: u64) -> Self {
        let sizes = net.layer_sizes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::with_capacity(sizes[1] + sizes[2] + 2);
        let mut push = |kind: NodeKind, nodes: &mut Vec<LayoutNode>| {
            let id = nodes.len() as u32;
            nodes.push(LayoutNode {
                id,
                kind,
                position: random_in_unit_ball(&mut rng),
                velocity: [0.0; 3],
                pinned: false,
            });
            id
        };
        push(NodeKind::Input, &mut nodes);
        let h1: Vec<u32> = (0..sizes[1]).map(|_| push(NodeKind::Hidden1, &mut nodes)).collect();
        let h2: Vec<u32> = (0..sizes[2]).map(|_| push(NodeKind::Hidden2, &mut nodes)).collect();
        push(NodeKind::Output, &mut nodes);
        let next_id = nodes.len() as u32;
        let mut graph = LayoutGraph {
            nodes,
            edges: Vec::new(),
            hidden: [h1, h2],
            index: HashMap::new(),
            next_id,
        };
        graph.rebuild_topology();
        graph.sync_weights(net);
        graph
    }

    /// A free-form graph (no mirroring invariants) for experiments on the
    /// force model itself. `norm_weight`s are used as given.
    pub fn from_parts(nodes: Vec<LayoutNode>, edges: Vec<LayoutEdge>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(Error::invalid(format!("duplicate node id {}", n.id)));
            }
        }
        for e in &edges {
            if e.a == e.b || !index.contains_key(&e.a) || !index.contains_key(&e.b) {
                return Err(Error::invalid(format!("bad edge {}-{}", e.a, e.b)));
            }
            if e.norm_weight.abs() > 1.0 {
                return Err(Error::invalid("normalised weight outside [-1, 1]"));
            }
        }
        let hidden = [
            nodes.iter().filter(|n| n.kind == NodeKind::Hidden1).map(|n| n.id).collect(),
            nodes.iter().filter(|n| n.kind == NodeKind::Hidden2).map(|n| n.id).collect(),
        ];
        let next_id = nodes.iter().map(|n| n.id + 1).max().unwrap_or(0);
        Ok(LayoutGraph {
            nodes,
            edges,
            hidden,
            index,
            next_id,
        })
    }

    pub fn nodes(&self) -> &[LayoutNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[LayoutEdge] {
        &self.edges
    }

    pub fn node(&self, id: u32) -> Option<&LayoutNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn hidden_ids(&self, layer: HiddenLayer) -> &[u32] {
        &self.hidden[layer.number() as usize - 1]
    }

    /// `(layer, unit index)` of a hidden node.
    pub fn hidden_position_of(&self, id: u32) -> Option<(HiddenLayer, usize)> {
        [HiddenLayer::First, HiddenLayer::Second].into_iter().find_map(|layer| {
            self.hidden_ids(layer)
                .iter()
                .position(|&x| x == id)
                .map(|unit| (layer, unit))
        })
    }

    fn id_of_kind(&self, kind: NodeKind) -> Option<u32> {
        self.nodes.iter().find(|n| n.kind == kind).map(|n| n.id)
    }

    /// Regenerates the edge list from the node set. Weights start at zero.
    fn rebuild_topology(&mut self) {
        self.index = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let input = self.id_of_kind(NodeKind::Input).expect("input node");
        let output = self.id_of_kind(NodeKind::Output).expect("output node");
        let edge = |a, b, pair| LayoutEdge {
            a,
            b,
            pair,
            raw_weight: 0.0,
            norm_weight: 0.0,
        };
        let [h1, h2] = &self.hidden;
        let mut edges = Vec::with_capacity(h1.len() + h1.len() * h2.len() + h2.len());
        edges.extend(h1.iter().map(|&id| edge(input, id, LayerPair::InputHidden1)));
        for &a in h1 {
            edges.extend(h2.iter().map(|&b| edge(a, b, LayerPair::Hidden1Hidden2)));
        }
        edges.extend(h2.iter().map(|&id| edge(id, output, LayerPair::Hidden2Output)));
        self.edges = edges;
    }

    /// Raw weight each edge should carry for `net`: the `W1` row norm for
    /// input edges, the `W2` entry for hidden-hidden edges and the `W3`
    /// column norm for output edges.
    pub fn raw_weights_for(&self, net: &Mlp) -> Result<Vec<f64>> {
        let sizes = net.layer_sizes();
        if sizes[1] != self.hidden[0].len() || sizes[2] != self.hidden[1].len() {
            return Err(Error::shape(format!(
                "layout has {}/{} hidden nodes, network {}/{}",
                self.hidden[0].len(),
                self.hidden[1].len(),
                sizes[1],
                sizes[2]
            )));
        }
        let w2 = net.weights(2);
        let (n1, n2) = (sizes[1], sizes[2]);
        let mut raw = Vec::with_capacity(self.edges.len());
        raw.extend((0..n1).map(|i| net.input_coupling(i)));
        for i in 0..n1 {
            raw.extend((0..n2).map(|j| w2[[j, i]]));
        }
        raw.extend((0..n2).map(|j| net.output_coupling(j)));
        Ok(raw)
    }

    /// Refreshes all edge weights from the live network.
    pub fn sync_weights(&mut self, net: &Mlp) {
        let raw = self
            .raw_weights_for(net)
            .expect("layout topology mirrors the network");
        self.set_raw_weights(&raw).expect("one weight per edge");
    }

    /// Installs new raw weights (one per edge, in edge order) and
    /// renormalises each layer pair.
    pub fn set_raw_weights(&mut self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.edges.len() {
            return Err(Error::shape(format!(
                "{} weights for {} edges",
                raw.len(),
                self.edges.len()
            )));
        }
        for (e, &w) in self.edges.iter_mut().zip(raw) {
            e.raw_weight = w;
        }
        self.renormalize();
        Ok(())
    }

    pub fn renormalize(&mut self) {
        for pair in [
            LayerPair::InputHidden1,
            LayerPair::Hidden1Hidden2,
            LayerPair::Hidden2Output,
        ] {
            let members: Vec<usize> = (0..self.edges.len())
                .filter(|&i| self.edges[i].pair == pair)
                .collect();
            let raw: Vec<f64> = members.iter().map(|&i| self.edges[i].raw_weight).collect();
            for (&i, w) in members.iter().zip(normalize_group(&raw)) {
                self.edges[i].norm_weight = w;
            }
        }
    }

    /// Sum of all forces acting on each node (in node order).
    pub fn net_forces(&self, params: &LayoutParams) -> Result<Vec<Vec3>> {
        let n = self.nodes.len();
        let mut forces = vec![[0.0; 3]; n];
        let pos = |i: usize| self.nodes[i].position;
        let check = |f: Vec3, a: usize, b: usize| -> Result<Vec3> {
            if f.iter().all(|v| v.is_finite()) {
                Ok(f)
            } else {
                Err(Error::numeric(format!(
                    "non-finite force between nodes {} and {}",
                    self.nodes[a].id, self.nodes[b].id
                )))
            }
        };
        for i in 0..n {
            for j in i + 1..n {
                let f = check(repulsive_force(pos(i), pos(j), params.k_r, params.epsilon_dist), i, j)?;
                add_assign(&mut forces[i], f);
                sub_assign(&mut forces[j], f);
                let same_layer = self.nodes[i].kind == self.nodes[j].kind
                    && self.nodes[i].kind.hidden_layer().is_some();
                if same_layer {
                    let f = check(intra_layer_attraction(pos(i), pos(j), params.k_a, params.epsilon_dist), i, j)?;
                    add_assign(&mut forces[i], f);
                    sub_assign(&mut forces[j], f);
                }
            }
        }
        for e in &self.edges {
            let (a, b) = (self.index[&e.a], self.index[&e.b]);
            let f = check(
                attractive_force(pos(a), pos(b), e.norm_weight, params.k_a, params.epsilon_dist),
                a,
                b,
            )?;
            add_assign(&mut forces[a], f);
            sub_assign(&mut forces[b], f);
        }
        Ok(forces)
    }

    /// One semi-implicit Euler step: `v ← damping·(v + dt·F)`, speed
    /// clamped to `max_speed`, then `p ← p + dt·v`. Pinned nodes stay put.
    pub fn step(&mut self, params: &LayoutParams) -> Result<()> {
        let forces = self.net_forces(params)?;
        for (node, f) in self.nodes.iter_mut().zip(forces) {
            if node.pinned {
                node.velocity = [0.0; 3];
                continue;
            }
            let mut v = node.velocity;
            add_assign(&mut v, scale(f, params.dt));
            v = scale(v, params.damping);
            let speed = norm(v);
            if speed > params.max_speed {
                v = scale(v, params.max_speed / speed);
            }
            node.velocity = v;
            add_assign(&mut node.position, scale(v, params.dt));
        }
        Ok(())
    }

    pub fn max_speed(&self) -> f64 {
        self.nodes.iter().map(|n| norm(n.velocity)).fold(0.0, f64::max)
    }

    pub fn total_momentum(&self) -> Vec3 {
        let mut p = [0.0; 3];
        for n in &self.nodes {
            add_assign(&mut p, n.velocity);
        }
        p
    }

    pub fn center_of_mass(&self) -> Vec3 {
        mean(self.nodes.iter().map(|n| n.position))
    }

    pub fn layer_center(&self, kind: NodeKind) -> Option<Vec3> {
        let members: Vec<Vec3> = self
            .nodes
            .iter()
            .filter(|n| n.kind == kind)
            .map(|n| n.position)
            .collect();
        (!members.is_empty()).then(|| mean(members.into_iter()))
    }

    /// Moves node `id` to `to`, pins it, and rescales the raw weight of
    /// every incident edge with [`weight_from_drag`]. Returns the edits.
    pub fn drag_node(&mut self, id: u32, to: Vec3, params: &LayoutParams) -> Result<Vec<DragUpdate>> {
        if !to.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("drag target is not finite"));
        }
        let &idx = self
            .index
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("no node {id}")))?;
        let from = self.nodes[idx].position;
        let mut updates = Vec::new();
        for (e_idx, e) in self.edges.iter_mut().enumerate() {
            let other = if e.a == id {
                e.b
            } else if e.b == id {
                e.a
            } else {
                continue;
            };
            let other_pos = self.nodes[self.index[&other]].position;
            let old_raw = e.raw_weight;
            let factor = weight_from_drag(
                1.0,
                distance(from, other_pos),
                distance(to, other_pos),
                params.epsilon_dist,
            );
            let new_raw = weight_from_drag(
                old_raw,
                distance(from, other_pos),
                distance(to, other_pos),
                params.epsilon_dist,
            );
            e.raw_weight = new_raw;
            updates.push(DragUpdate {
                edge: e_idx,
                old_raw,
                new_raw,
                factor,
            });
        }
        let node = &mut self.nodes[idx];
        node.position = to;
        node.velocity = [0.0; 3];
        node.pinned = true;
        self.renormalize();
        Ok(updates)
    }

    pub fn release_node(&mut self, id: u32) -> Result<()> {
        let &idx = self
            .index
            .get(&id)
            .ok_or_else(|| Error::invalid(format!("no node {id}")))?;
        self.nodes[idx].pinned = false;
        Ok(())
    }

    /// Appends a node for a newly grown hidden unit at `position`.
    /// Call [`LayoutGraph::sync_weights`] afterwards.
    pub fn push_hidden_node(&mut self, layer: HiddenLayer, position: Vec3) -> u32 {
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.push(LayoutNode {
            id,
            kind: NodeKind::hidden(layer),
            position,
            velocity: [0.0; 3],
            pinned: false,
        });
        self.hidden[layer.number() as usize - 1].push(id);
        self.rebuild_topology();
        id
    }

    /// Drops the node of hidden unit `unit`; surviving nodes keep their ids
    /// and positions. Call [`LayoutGraph::sync_weights`] afterwards.
    pub fn remove_hidden_node(&mut self, layer: HiddenLayer, unit: usize) -> Result<u32> {
        let ids = &mut self.hidden[layer.number() as usize - 1];
        if unit >= ids.len() {
            return Err(Error::invalid(format!("no unit {unit} in {layer:?}")));
        }
        let id = ids.remove(unit);
        self.nodes.retain(|n| n.id != id);
        self.rebuild_topology();
        Ok(id)
    }

    pub fn snapshot(&self) -> LayoutSnapshot {
        LayoutSnapshot {
            nodes: self
                .nodes
                .iter()
                .map(|n| SnapshotNode {
                    id: n.id,
                    kind: n.kind,
                    pos: n.position,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| SnapshotEdge {
                    a: e.a,
                    b: e.b,
                    w: e.norm_weight,
                })
                .collect(),
        }
    }
}

fn mean(points: impl Iterator<Item = Vec3>) -> Vec3 {
    let mut sum = [0.0; 3];
    let mut count = 0usize;
    for p in points {
        add_assign(&mut sum, p);
        count += 1;
    }
    if count == 0 {
        return sum;
    }
    scale(sum, 1.0 / count as f64)
}

fn random_in_unit_ball(rng: &mut ChaCha8Rng) -> Vec3 {
    let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    loop {
        let p = [u.sample(rng), u.sample(rng), u.sample(rng)];
        if norm(p) <= 1.0 {
            return p;
        }
    }
}
