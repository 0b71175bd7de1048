//! Fractal trees grown from the cover sequence.
//!
//! Growth first builds a pre-tree: each node `B` with pre-radius `rho` picks
//! a separated set of cover points `omega_n..omega_{2n-1}` inside `B(x, rho)`
//! and hangs children `B(omega_k, r_n)` below it, `r_n = (2n)^-alpha / 2`.
//! Every radius is then doubled, which keeps siblings inside their parent and
//! at distance at least half their centre distance. Node balls are stored
//! with the doubled radius.
//!
//! Text format, one node per line after `#` header lines:
//! `generation,parent,id,x_1,...,x_d,radius,weight,c_b`, with `-` for the
//! root's parent and for the `c_b` of unexpanded nodes.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use super::select::SeparationGrid;
use super::{greedy_select, invalid, FrostmanError, SelectionParams};
use crate::covering::Schedule;
use crate::geometry::{cell_of, for_each_cell_hit, Ball, CellIndex, Point, DEFAULT_CELL_BUDGET, MAX_LEVEL};
use crate::measures::{
    analytic_profile, log3_2, EmpiricalOracle, ExactOracle, MassOracle, MeasureModel, DEFAULT_RESERVOIR_SIZE,
};

pub const DEFAULT_N0: u64 = 64;
pub const DEFAULT_NODE_BUDGET: u64 = 1 << 22;

/// Minimum number of children a node must receive at selection scale `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChildFloor {
    /// `max(2, ceil(r_n^{-1/alpha + eps}))`.
    Growing,
    /// A fixed count, at least 2.
    AtLeast(usize),
}

impl ChildFloor {
    pub fn at(self, r_n: f64, alpha: f64, eps: f64) -> usize {
        match self {
            ChildFloor::Growing => {
                let f = r_n.powf(-1.0 / alpha + eps).ceil();
                if f >= usize::MAX as f64 {
                    usize::MAX
                } else {
                    (f as usize).max(2)
                }
            }
            ChildFloor::AtLeast(m) => m.max(2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassSource {
    Exact,
    Empirical { samples: u64 },
}

impl std::fmt::Display for MassSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MassSource::Exact => f.write_str("exact"),
            MassSource::Empirical { samples } => write!(f, "empirical({samples})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TreeConfig {
    pub model: MeasureModel,
    pub alpha: f64,
    pub eps: f64,
    pub max_generation: u32,
    pub seed: u64,
    /// Pre-tree root; defaults to the smallest ball around the unit cube.
    pub root: Option<Ball>,
    /// Upper bound on the upper local dimension; defaults to the model's
    /// analytic value.
    pub u: Option<f64>,
    /// `(c, s)` with `mu(B(x, r)) <= c r^s`; built-in defaults for the
    /// uniform and Cantor models.
    pub uniformity: Option<(f64, f64)>,
    pub n0: u64,
    /// Largest cover index a node may look at.
    pub node_budget: u64,
    pub child_floor: ChildFloor,
    pub reservoir_size: usize,
}

impl TreeConfig {
    pub fn new(model: MeasureModel, alpha: f64, eps: f64, max_generation: u32, seed: u64) -> Self {
        TreeConfig {
            model,
            alpha,
            eps,
            max_generation,
            seed,
            root: None,
            u: None,
            uniformity: None,
            n0: DEFAULT_N0,
            node_budget: DEFAULT_NODE_BUDGET,
            child_floor: ChildFloor::Growing,
            reservoir_size: DEFAULT_RESERVOIR_SIZE,
        }
    }

    /// The `(c, s)` pair used for growth: the configured one or the model default.
    pub fn resolved_uniformity(&self) -> Result<(f64, f64), FrostmanError> {
        if let Some(cs) = self.uniformity {
            return Ok(cs);
        }
        match &self.model {
            MeasureModel::UniformBox { dim } => Ok((crate::measures::unit_ball_volume(*dim), *dim as f64)),
            // a ball of radius r meets at most two stage-k intervals, 3^-k <= 6r
            MeasureModel::CantorUniform => Ok((2.0 * 6f64.powf(log3_2()), log3_2())),
            other => Err(invalid("c", format!("no default (c, s) for {}; supply it", other.name()))),
        }
    }

    fn resolved_u(&self) -> Result<f64, FrostmanError> {
        match self.u {
            Some(u) => Ok(u),
            None => analytic_profile(&self.model)
                .map(|p| p.udimp)
                .map_err(|_| invalid("u", format!("no analytic default for {}; supply it", self.model.name()))),
        }
    }

    pub fn validate(&self) -> Result<(), FrostmanError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be positive and finite, got {}", self.alpha)));
        }
        if self.max_generation < 1 {
            return Err(invalid("max_generation", "must be at least 1"));
        }
        if self.n0 < 1 {
            return Err(invalid("n0", "must be at least 1"));
        }
        if self.node_budget < 2 * self.n0 {
            return Err(invalid("node_budget", format!("must be at least 2 n0 = {}", 2 * self.n0)));
        }
        if let ChildFloor::AtLeast(m) = self.child_floor {
            if m < 2 {
                return Err(invalid("child_floor", format!("must be at least 2, got {m}")));
            }
        }
        let (c, s) = self.resolved_uniformity()?;
        self.params(c, s, self.resolved_u()?, self.default_root())?.validate()?;
        if let Ok(p) = analytic_profile(&self.model) {
            if 1.0 / self.alpha >= p.udimh {
                return Err(invalid(
                    "alpha",
                    format!("1/alpha = {} must be below udimh = {}", 1.0 / self.alpha, p.udimh),
                ));
            }
        }
        if let Some(r) = &self.root {
            if r.center().dim() != self.model.dim() {
                return Err(invalid("root", "dimension differs from the model"));
            }
        }
        Ok(())
    }

    fn default_root(&self) -> Ball {
        let d = self.model.dim();
        let centre = Point::new(&vec![0.5; d]).expect("finite");
        self.root.clone().unwrap_or_else(|| Ball::new(centre, 0.5 * (d as f64).sqrt()).expect("positive"))
    }

    fn params(&self, c: f64, s: f64, u: f64, ball: Ball) -> Result<SelectionParams, FrostmanError> {
        Ok(SelectionParams { s, eps: self.eps, c, u, ball, n0: self.n0 })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub generation: u32,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub ball: Ball,
    /// `theta(B)`.
    pub weight: f64,
    /// Radius shared by the children, when expanded.
    pub child_radius: Option<f64>,
    /// Uniformity constant of the children's centre measure, when expanded.
    pub c_b: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FractalTree {
    nodes: Vec<TreeNode>,
    pub meta: Vec<(String, String)>,
}

impl FractalTree {
    /// Build from nodes listed with `id == position`.
    pub fn from_nodes(nodes: Vec<TreeNode>, meta: Vec<(String, String)>) -> Result<Self, FrostmanError> {
        if nodes.is_empty() {
            return Err(FrostmanError::InvalidTree { node: 0, reason: "empty tree".into() });
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(FrostmanError::InvalidTree { node: n.id, reason: format!("listed at position {i}") });
            }
        }
        let tree = FractalTree { nodes, meta };
        tree.validate()?;
        Ok(tree)
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> u32 {
        self.nodes.iter().map(|n| n.generation).max().unwrap_or(0)
    }

    pub fn generation(&self, g: u32) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.generation == g)
    }

    /// Nodes of the deepest generation.
    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.generation(self.depth())
    }

    /// Structural check: links, generations, weights, child radii,
    /// containment, disjoint siblings, and sibling separation
    /// `dist(B1, B2) >= |x1 - x2| / 2`.
    pub fn validate(&self) -> Result<(), FrostmanError> {
        let bad = |node: usize, reason: String| Err(FrostmanError::InvalidTree { node, reason });
        let depth = self.depth();
        let root = &self.nodes[0];
        if root.parent.is_some() || root.generation != 0 {
            return bad(0, "root must have generation 0 and no parent".into());
        }
        if (root.weight - 1.0).abs() > 1e-12 {
            return bad(0, format!("root weight {} is not 1", root.weight));
        }
        for n in &self.nodes {
            if n.id != 0 {
                let Some(p) = n.parent.filter(|&p| p < self.nodes.len()) else {
                    return bad(n.id, "missing parent".into());
                };
                let parent = &self.nodes[p];
                if parent.generation + 1 != n.generation || !parent.children.contains(&n.id) {
                    return bad(n.id, format!("inconsistent link to parent {p}"));
                }
            }
            if n.children.is_empty() {
                if n.generation != depth {
                    return bad(n.id, format!("unexpanded node above the deepest generation {depth}"));
                }
                continue;
            }
            if n.children.len() < 2 {
                return bad(n.id, "fewer than 2 children".into());
            }
            let rho = self.nodes[n.children[0]].ball.radius();
            if n.child_radius != Some(rho) {
                return bad(n.id, "child_radius does not match the children".into());
            }
            if !n.c_b.is_some_and(|c| c > 0.0) {
                return bad(n.id, "expanded node without a positive c_B".into());
            }
            let mut sum = 0.0;
            let mut grid = SeparationGrid::new(4.0 * rho);
            for &c in &n.children {
                let child = &self.nodes[c];
                if child.parent != Some(n.id) {
                    return bad(c, format!("listed under {} but linked elsewhere", n.id));
                }
                if child.ball.radius() != rho {
                    return bad(c, "sibling radii differ".into());
                }
                if !n.ball.contains_ball(&child.ball) {
                    return bad(c, format!("not inside parent {}", n.id));
                }
                let clash = grid.any_near(child.ball.center(), |other| {
                    let b = &self.nodes[other].ball;
                    let d = b.center().dist(child.ball.center());
                    d <= 2.0 * rho || b.dist_to(&child.ball) < 0.5 * d
                });
                if clash {
                    return bad(c, "siblings overlap or violate separation".into());
                }
                grid.insert(child.ball.center(), c);
                sum += child.weight;
            }
            if (sum - n.weight).abs() > 1e-12 * n.weight.max(1e-300) + 1e-15 {
                return bad(n.id, format!("children weights sum to {sum}, node weight {}", n.weight));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let d = self.root().ball.center().dim();
        let xs: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        let _ = writeln!(out, "# columns: generation,parent,id,{},radius,weight,c_b", xs.join(","));
        for n in &self.nodes {
            let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
            let coords: Vec<String> = n.ball.center().coords().iter().map(|c| c.to_string()).collect();
            let c_b = n.c_b.map_or("-".to_string(), |c| c.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                n.generation,
                parent,
                n.id,
                coords.join(","),
                n.ball.radius(),
                n.weight,
                c_b
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, FrostmanError> {
        let mut meta = Vec::new();
        let mut nodes: Vec<TreeNode> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let err = |msg: String| FrostmanError::Parse { line: i + 1, msg };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once(':') {
                    if k.trim() != "columns" {
                        meta.push((k.trim().to_string(), v.trim().to_string()));
                    }
                }
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() < 7 {
                return Err(err(format!("expected at least 7 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
            let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("`{s}`: {e}")));
            let generation = int(f[0])? as u32;
            let parent = if f[1] == "-" { None } else { Some(int(f[1])?) };
            let id = int(f[2])?;
            let k = f.len();
            let coords = f[3..k - 3].iter().map(|s| num(s)).collect::<Result<Vec<_>, _>>()?;
            let centre = Point::new(&coords).map_err(|e| err(e.to_string()))?;
            let ball = Ball::new(centre, num(f[k - 3])?).map_err(|e| err(e.to_string()))?;
            let weight = num(f[k - 2])?;
            let c_b = if f[k - 1] == "-" { None } else { Some(num(f[k - 1])?) };
            if id != nodes.len() {
                return Err(err(format!("node ids must be listed in order, expected {}", nodes.len())));
            }
            nodes.push(TreeNode { id, generation, parent, children: Vec::new(), ball, weight, child_radius: None, c_b });
        }
        for i in 0..nodes.len() {
            if let Some(p) = nodes[i].parent {
                if p >= i {
                    return Err(FrostmanError::InvalidTree { node: i, reason: format!("parent {p} listed later") });
                }
                nodes[p].children.push(i);
                let r = nodes[i].ball.radius();
                nodes[p].child_radius.get_or_insert(r);
            }
        }
        FractalTree::from_nodes(nodes, meta)
    }
}

/// A frontier node during growth: its pre-tree ball and the mass there.
struct Pending {
    node: usize,
    pre: Ball,
    mass: f64,
    best: usize,
}

struct Expansion {
    node: usize,
    r_n: f64,
    kept: Vec<(u64, Point)>,
}

/// Grow a fractal tree to depth `max_generation` on the cover realisation
/// `omega = (model.sample(seed, k))_k`.
pub fn grow_tree(config: &TreeConfig) -> Result<FractalTree, FrostmanError> {
    config.validate()?;
    let (c, s) = config.resolved_uniformity()?;
    let u = config.resolved_u()?;
    let (oracle, source): (Box<dyn MassOracle>, MassSource) = match ExactOracle::new(&config.model) {
        Ok(o) if config.model.dim() == 1 => (Box::new(o), MassSource::Exact),
        _ => {
            let o = EmpiricalOracle::new(&config.model, config.seed, config.reservoir_size)?;
            (Box::new(o), MassSource::Empirical { samples: config.reservoir_size as u64 })
        }
    };
    let w = super::selection_w(c, s, config.eps);
    let root_pre = config.default_root();
    let root_mass = oracle.ball_mass(root_pre.center(), root_pre.radius())?.mass;
    if !(root_mass > 0.0) {
        return Err(invalid("root", "root ball has zero mass"));
    }
    let mut nodes = vec![TreeNode {
        id: 0,
        generation: 0,
        parent: None,
        children: Vec::new(),
        ball: Ball::new(root_pre.center().clone(), 2.0 * root_pre.radius())?,
        weight: 1.0,
        child_radius: None,
        c_b: None,
    }];
    let mut frontier = vec![Pending { node: 0, pre: root_pre, mass: root_mass, best: 0 }];
    let schedule = Schedule::HalfPower(config.alpha);
    for generation in 0..config.max_generation {
        let done = expand_generation(config, &schedule, &mut frontier, oracle.as_ref(), (c, s, u), generation)?;
        let mut next = Vec::new();
        for (e, p) in done.into_iter().zip(&frontier) {
            let parent = &mut nodes[e.node];
            parent.child_radius = Some(2.0 * e.r_n);
            parent.c_b = Some(2.0 * w * w / p.mass);
            let weight = parent.weight / e.kept.len() as f64;
            let base = nodes.len();
            nodes[e.node].children = (base..base + e.kept.len()).collect();
            for (i, (_, x)) in e.kept.into_iter().enumerate() {
                let pre = Ball::new(x.clone(), e.r_n)?;
                let mass = oracle.ball_mass(&x, e.r_n)?.mass;
                next.push(Pending { node: base + i, pre, mass, best: 0 });
                nodes.push(TreeNode {
                    id: base + i,
                    generation: generation + 1,
                    parent: Some(e.node),
                    children: Vec::new(),
                    ball: Ball::new(x, 2.0 * e.r_n)?,
                    weight,
                    child_radius: None,
                    c_b: None,
                });
            }
        }
        frontier = next;
    }
    let meta = vec![
        ("model".to_string(), config.model.name().to_string()),
        ("alpha".to_string(), config.alpha.to_string()),
        ("eps".to_string(), config.eps.to_string()),
        ("seed".to_string(), config.seed.to_string()),
        ("c".to_string(), c.to_string()),
        ("s".to_string(), s.to_string()),
        ("u".to_string(), u.to_string()),
        ("W".to_string(), w.to_string()),
        ("mass_source".to_string(), source.to_string()),
    ];
    FractalTree::from_nodes(nodes, meta)
}

/// Expand every frontier node, sharing one pass over each batch
/// `omega_n..omega_{2n-1}` for `n = n0, 2 n0, ...`. Returns expansions in
/// frontier order.
fn expand_generation(
    config: &TreeConfig,
    schedule: &Schedule,
    frontier: &mut [Pending],
    oracle: &dyn MassOracle,
    (c, s, u): (f64, f64, f64),
    generation: u32,
) -> Result<Vec<Expansion>, FrostmanError> {
    let mut done: Vec<Option<Expansion>> = (0..frontier.len()).map(|_| None).collect();
    let mut open: Vec<usize> = (0..frontier.len()).collect();
    let mut n = config.n0;
    while !open.is_empty() {
        if 2 * n - 1 > config.node_budget {
            let p = &frontier[open[0]];
            let r_n = schedule.radius(n / 2);
            return Err(FrostmanError::GrowthFailure {
                node: p.node,
                generation,
                n_tried: n / 2,
                best: p.best,
                floor: config.child_floor.at(r_n, config.alpha, config.eps),
            });
        }
        let r_n = schedule.radius(n);
        let active: Vec<usize> = open.iter().copied().filter(|&i| r_n <= frontier[i].pre.radius() / 2.0).collect();
        if !active.is_empty() {
            let buckets = bucket_batch(config, frontier, &active, n)?;
            let floor = config.child_floor.at(r_n, config.alpha, config.eps);
            let results: Vec<(usize, Vec<(u64, Point)>)> = active
                .par_iter()
                .zip(buckets.into_par_iter())
                .map(|(&i, batch)| {
                    let params = SelectionParams {
                        s,
                        eps: config.eps,
                        c,
                        u,
                        ball: frontier[i].pre.clone(),
                        n0: config.n0,
                    };
                    greedy_select(&batch, &params, r_n, oracle).map(|kept| (i, kept))
                })
                .collect::<Result<_, _>>()?;
            for (i, kept) in results {
                if kept.len() >= floor {
                    done[i] = Some(Expansion { node: frontier[i].node, r_n, kept });
                } else {
                    frontier[i].best = frontier[i].best.max(kept.len());
                }
            }
            open.retain(|&i| done[i].is_none());
        }
        n *= 2;
    }
    Ok(done.into_iter().map(|e| e.expect("every node expanded")).collect())
}

/// Points of `omega_n..omega_{2n-1}` falling in each active pre-ball, in
/// index order. Pre-balls of one generation are pairwise disjoint.
fn bucket_batch(
    config: &TreeConfig,
    frontier: &[Pending],
    active: &[usize],
    n: u64,
) -> Result<Vec<Vec<(u64, Point)>>, FrostmanError> {
    let max_r = active.iter().map(|&i| frontier[i].pre.radius()).fold(0.0, f64::max);
    let level = (-(2.0 * max_r).log2()).floor().clamp(0.0, MAX_LEVEL as f64) as u32;
    let mut grid: HashMap<CellIndex, Vec<usize>> = HashMap::new();
    for (slot, &i) in active.iter().enumerate() {
        for_each_cell_hit(&frontier[i].pre, level, DEFAULT_CELL_BUDGET, |cell| {
            grid.entry(cell).or_default().push(slot);
        })?;
    }
    let hits: Vec<(usize, u64, Point)> = (n..2 * n)
        .into_par_iter()
        .filter_map(|k| {
            let x = config.model.sample(config.seed, k);
            let slot = *grid.get(&cell_of(&x, level))?.iter().find(|&&slot| frontier[active[slot]].pre.contains(&x))?;
            Some((slot, k, x))
        })
        .collect();
    let mut buckets: Vec<Vec<(u64, Point)>> = vec![Vec::new(); active.len()];
    for (slot, k, x) in hits {
        buckets[slot].push((k, x));
    }
    Ok(buckets)
}
