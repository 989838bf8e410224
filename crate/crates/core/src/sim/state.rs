use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::sumtree::SumTree;
use super::SimError;
use crate::model::{Litter, LitterSampler, ModelParams};

const REBUILD_PERIOD: u64 = 1 << 16;

/// One edge as reported to callers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: u64,
    pub endpoints: (u32, u32),
    /// Child edges produced so far.
    pub xi: u64,
    /// Birth events so far.
    pub litters: u64,
    pub alive: bool,
    pub birth_step: u64,
    pub birth_time: f64,
    /// `(step, time)` of deletion.
    pub death: Option<(u64, f64)>,
}

/// Compact storage of a living edge; slots of dead edges are reused.
#[derive(Debug, Clone)]
struct Slot {
    id: u64,
    birth_time: f64,
    birth_step: u64,
    xi: u64,
    endpoints: (u32, u32),
    litters: u32,
    alive: bool,
}

impl Slot {
    fn record(&self) -> EdgeRecord {
        EdgeRecord {
            id: self.id,
            endpoints: self.endpoints,
            xi: self.xi,
            litters: u64::from(self.litters),
            alive: self.alive,
            birth_step: self.birth_step,
            birth_time: self.birth_time,
            death: None,
        }
    }
}

/// Which vertex a tracker binds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerKind {
    /// First vertex born as a semi-cherry.
    FirstSemi,
    /// First vertex born as a cherry.
    FirstCherry,
    /// First vertex born after the initial two.
    FirstVertex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracker {
    pub kind: TrackerKind,
    pub vertex: Option<u32>,
    pub bound_step: Option<u64>,
    /// Step at which the vertex reached degree 0.
    pub isolated_at: Option<u64>,
}

/// Snapshot of the scalar statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub n: u64,
    pub t: f64,
    /// Living edges `E`.
    pub edges: u64,
    /// Vertices ever created `V`.
    pub vertices: u64,
    /// Living edges without any birth event `O`.
    pub childless: u64,
    /// Reproduction events `B`.
    pub births: u64,
    /// Edges ever created `T`.
    pub edges_ever: u64,
    /// Deletion events `D`.
    pub deaths: u64,
    /// `Σ_{i ≤ n} E_i`, counted after each step.
    pub jn: u64,
    /// `∫₀ᵗ E(s) ds`.
    pub jt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventDescriptor {
    Deletion { step: u64, edge: u64, lifetime: f64 },
    Reproduction { step: u64, parent: u64, litter: Litter },
}

/// Mutable state of one run of the graph process.
#[derive(Debug, Clone)]
pub struct GraphState {
    params: ModelParams,
    sampler: LitterSampler,
    b: f64,
    c: f64,
    slots: Vec<Slot>,
    free: Vec<usize>,
    tree: SumTree,
    degrees: Vec<u32>,
    counters: Counters,
    sum_kappa: u64,
    sum_eps: u64,
    dead_life_sum: f64,
    next_id: u64,
    trackers: Vec<Tracker>,
    first_edge_death: Option<(u64, f64)>,
}

impl GraphState {
    /// One edge between vertices 0 and 1.
    pub fn init(params: &ModelParams, trackers: &[TrackerKind]) -> Self {
        let mut s = Self {
            params: params.clone(),
            sampler: params.litter_sampler(),
            b: params.b(),
            c: params.c(),
            slots: Vec::new(),
            free: Vec::new(),
            tree: SumTree::with_capacity(16),
            degrees: vec![0, 0],
            counters: Counters {
                n: 0,
                t: 0.0,
                edges: 0,
                vertices: 2,
                childless: 0,
                births: 0,
                edges_ever: 0,
                deaths: 0,
                jn: 0,
                jt: 0.0,
            },
            sum_kappa: 0,
            sum_eps: 0,
            dead_life_sum: 0.0,
            next_id: 0,
            trackers: trackers
                .iter()
                .map(|&kind| Tracker {
                    kind,
                    vertex: None,
                    bound_step: None,
                    isolated_at: None,
                })
                .collect(),
            first_edge_death: None,
        };
        s.add_edge(0, 1);
        s
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn is_extinct(&self) -> bool {
        self.counters.edges == 0
    }

    pub fn total_weight(&self) -> f64 {
        self.tree.total()
    }

    pub fn degree(&self, v: u32) -> Option<u32> {
        self.degrees.get(v as usize).copied()
    }

    pub fn trackers(&self) -> &[Tracker] {
        &self.trackers
    }

    /// Current degree of the vertex bound to tracker `i`.
    pub fn tracked_degree(&self, i: usize) -> Option<u32> {
        self.trackers[i].vertex.map(|v| self.degrees[v as usize])
    }

    /// `(step, time)` at which the initial edge was deleted.
    pub fn first_edge_death(&self) -> Option<(u64, f64)> {
        self.first_edge_death
    }

    /// Living edges in slot order.
    pub fn living_edges(&self) -> impl Iterator<Item = EdgeRecord> + '_ {
        self.slots.iter().filter(|e| e.alive).map(Slot::record)
    }

    fn weight_of(&self, rec: &Slot) -> f64 {
        1.0 + self.b + self.c * rec.xi as f64
    }

    fn add_edge(&mut self, u: u32, v: u32) {
        let rec = Slot {
            id: self.next_id,
            birth_time: self.counters.t,
            birth_step: self.counters.n,
            xi: 0,
            endpoints: (u, v),
            litters: 0,
            alive: true,
        };
        self.next_id += 1;
        let slot = match self.free.pop() {
            Some(slot) => {
                self.slots[slot] = rec;
                slot
            }
            None => {
                self.slots.push(rec);
                self.tree.reserve(self.slots.len());
                self.slots.len() - 1
            }
        };
        self.tree.set(slot, 1.0 + self.b);
        self.degrees[u as usize] += 1;
        self.degrees[v as usize] += 1;
        self.counters.edges += 1;
        self.counters.edges_ever += 1;
        self.counters.childless += 1;
    }

    fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        loop {
            let x = rng.random::<f64>() * self.tree.total();
            if let Some(slot) = self.tree.find(x) {
                return slot;
            }
        }
    }

    /// Exponential waiting time to the next event at total rate `W`.
    pub fn holding_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e / self.tree.total()
    }

    /// Moves the clock forward by `dt`, accumulating `E·dt` time on test.
    pub fn apply_elapsed(&mut self, dt: f64) {
        self.counters.t += dt;
        self.counters.jt += self.counters.edges as f64 * dt;
    }

    /// Draws the next inter-event time and applies it.
    pub fn advance_clock<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64, SimError> {
        if self.is_extinct() {
            return Err(SimError::Extinct { step: self.counters.n });
        }
        let dt = self.holding_time(rng);
        self.apply_elapsed(dt);
        Ok(dt)
    }

    /// One jump of the chain: pick an edge by weight, then delete it with
    /// probability `1 - 1/w` or let it reproduce.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EventDescriptor, SimError> {
        if self.is_extinct() {
            return Err(SimError::Extinct { step: self.counters.n });
        }
        let slot = self.select(rng);
        let hazard = self.b + self.c * self.slots[slot].xi as f64;
        let event = if rng.random::<f64>() * (1.0 + hazard) < hazard {
            self.delete(slot)
        } else {
            self.reproduce(slot, rng)
        };
        self.counters.n += 1;
        self.counters.jn += self.counters.edges;
        if self.counters.n.is_multiple_of(REBUILD_PERIOD) {
            self.rebuild_index();
        }
        Ok(event)
    }

    fn delete(&mut self, slot: usize) -> EventDescriptor {
        let step = self.counters.n + 1;
        let t = self.counters.t;
        let rec = &mut self.slots[slot];
        rec.alive = false;
        let lifetime = t - rec.birth_time;
        let (id, (u, v), litters) = (rec.id, rec.endpoints, rec.litters);
        if id == 0 {
            self.first_edge_death = Some((step, t));
        }
        self.tree.set(slot, 0.0);
        self.free.push(slot);
        self.counters.edges -= 1;
        self.counters.deaths += 1;
        if litters == 0 {
            self.counters.childless -= 1;
        }
        self.dead_life_sum += lifetime;
        for x in [u, v] {
            self.degrees[x as usize] -= 1;
            if self.degrees[x as usize] == 0 {
                for tr in &mut self.trackers {
                    if tr.vertex == Some(x) && tr.isolated_at.is_none() {
                        tr.isolated_at = Some(step);
                    }
                }
            }
        }
        EventDescriptor::Deletion { step, edge: id, lifetime }
    }

    fn reproduce<R: Rng + ?Sized>(&mut self, slot: usize, rng: &mut R) -> EventDescriptor {
        let step = self.counters.n + 1;
        let litter = self.sampler.sample(rng);
        let (a, z) = self.slots[slot].endpoints;
        // cherries are placed uniformly among the κ new vertices
        let mut cherries_left = litter.cherries;
        for remaining in (1..=litter.kappa).rev() {
            let cherry = cherries_left == remaining
                || (cherries_left > 0 && rng.random_range(0..remaining) < cherries_left);
            let w = self.degrees.len() as u32;
            self.degrees.push(0);
            self.counters.vertices += 1;
            if cherry {
                cherries_left -= 1;
                self.add_edge(w, a);
                self.add_edge(w, z);
            } else {
                let x = if rng.random::<bool>() { a } else { z };
                self.add_edge(w, x);
            }
            for tr in &mut self.trackers {
                let matches = match tr.kind {
                    TrackerKind::FirstSemi => !cherry,
                    TrackerKind::FirstCherry => cherry,
                    TrackerKind::FirstVertex => true,
                };
                if matches && tr.vertex.is_none() {
                    tr.vertex = Some(w);
                    tr.bound_step = Some(step);
                }
            }
        }
        let eps = u64::from(litter.edges());
        let parent = &mut self.slots[slot];
        if parent.litters == 0 {
            self.counters.childless -= 1;
        }
        parent.litters += 1;
        parent.xi += eps;
        let id = parent.id;
        let w = 1.0 + self.b + self.c * parent.xi as f64;
        self.tree.set(slot, w);
        self.counters.births += 1;
        self.sum_kappa += u64::from(litter.kappa);
        self.sum_eps += eps;
        EventDescriptor::Reproduction { step, parent: id, litter }
    }

    /// Recomputes the weight index exactly from the edge records.
    pub fn rebuild_index(&mut self) {
        let (b, c) = (self.b, self.c);
        let slots = &self.slots;
        self.tree.rebuild(|s| match slots.get(s) {
            Some(e) if e.alive => 1.0 + b + c * e.xi as f64,
            _ => 0.0,
        });
    }

    /// `(λ̂₁, λ̂₂)`: time on test per edge ever born, and mean lifetime of dead edges.
    pub fn lifetime_estimators(&self) -> (f64, Option<f64>) {
        let c = &self.counters;
        let l1 = c.jt / c.edges_ever as f64;
        let l2 = (c.deaths > 0).then(|| self.dead_life_sum / c.deaths as f64);
        (l1, l2)
    }

    /// Full consistency check, `O(E + V)`.
    pub fn check_invariants(&self) -> Result<(), String> {
        let c = &self.counters;
        if c.edges != c.edges_ever - c.deaths {
            return Err(format!("E={} but T-D={}", c.edges, c.edges_ever - c.deaths));
        }
        if c.vertices != 2 + self.sum_kappa {
            return Err(format!("V={} but 2+Σκ={}", c.vertices, 2 + self.sum_kappa));
        }
        if c.edges_ever != 1 + self.sum_eps {
            return Err(format!("T={} but 1+Σε={}", c.edges_ever, 1 + self.sum_eps));
        }
        if c.vertices != self.degrees.len() as u64 {
            return Err("vertex count differs from degree table".into());
        }
        let deg_sum: u64 = self.degrees.iter().map(|&d| u64::from(d)).sum();
        if deg_sum != 2 * c.edges {
            return Err(format!("Σdeg={deg_sum} but 2E={}", 2 * c.edges));
        }
        let mut living = 0;
        let mut childless = 0;
        let mut weight = 0.0;
        for (slot, e) in self.slots.iter().enumerate() {
            if !e.alive {
                if self.tree.get(slot) != 0.0 {
                    return Err(format!("dead slot {slot} carries weight"));
                }
                continue;
            }
            living += 1;
            if e.litters == 0 {
                childless += 1;
            }
            if e.endpoints.0 == e.endpoints.1 {
                return Err(format!("self-loop on edge {}", e.id));
            }
            if e.xi < u64::from(e.litters) {
                return Err(format!("edge {} has fewer child edges than litters", e.id));
            }
            let w = self.weight_of(e);
            if (self.tree.get(slot) - w).abs() > 1e-12 * w {
                return Err(format!("slot {slot} weight {} vs {w}", self.tree.get(slot)));
            }
            weight += w;
        }
        if living != c.edges {
            return Err(format!("{living} living records but E={}", c.edges));
        }
        if childless != c.childless {
            return Err(format!("{childless} childless records but O={}", c.childless));
        }
        let total = self.tree.total();
        if (total - weight).abs() > 1e-9 * weight.max(1.0) {
            return Err(format!("index total {total} vs recomputed {weight}"));
        }
        for tr in &self.trackers {
            if let (Some(v), Some(_)) = (tr.vertex, tr.isolated_at) {
                if self.degrees[v as usize] != 0 {
                    return Err(format!("isolated vertex {v} regained an edge"));
                }
            }
        }
        Ok(())
    }
}
