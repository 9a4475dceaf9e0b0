//! Global general solutions (GGS) and characteristic determinants on compact
//! rooted trees with a global constant delay.
//!
//! A solution on a tree is a vector of per-edge functions; the delayed
//! argument `x - a` on an edge is resolved along the chain of ancestor edges
//! toward the root, so the equation on one edge couples to solutions on its
//! ancestors. The GGS is the general solution of all edge equations before
//! matching and boundary conditions are imposed; substituting it into those
//! conditions yields a `2m x 2m` homogeneous system whose determinant
//! vanishes exactly at the eigenvalues.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{integrate, sin_rho_x_over_rho, GridFn};
use crate::{Error, Result};

/// Nodes per unit edge length used for the internal GGS grids.
const NODES_PER_UNIT: usize = 1000;

fn edge_nodes(length: f64) -> usize {
    2 * ((length * NODES_PER_UNIT as f64 / 2.0).round() as usize).max(2) + 1
}

/// One edge of a rooted tree: `parent` is the index of the vertex it
/// emanates from (0 is the root), and the edge shares the index of the
/// vertex it terminates at.
#[derive(Debug, Clone)]
pub struct TreeEdge {
    pub parent: usize,
    pub length: f64,
    /// Potential on `[0, length]`.
    pub q: GridFn,
    /// Boundary condition order (0 Dirichlet, 1 Neumann) at the far end;
    /// required exactly when the edge terminates at a boundary vertex.
    pub bc: Option<u8>,
}

/// A compact rooted tree with a global delay. Vertices are `v_0..v_m` with
/// root `v_0`; edge `j` (1-based) runs from `v_{parent}` to `v_j`, and
/// parents always carry a smaller index, so edge order is topological.
#[derive(Debug, Clone)]
pub struct Tree {
    pub delay: f64,
    /// Boundary condition order at the root end of edge 1.
    pub root_bc: u8,
    edges: Vec<TreeEdge>,
    /// Distance from the root to vertex `v_j`, index `j - 1`.
    depth: Vec<f64>,
}

impl Tree {
    pub fn new(delay: f64, root_bc: u8, edges: Vec<TreeEdge>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::Validation("tree has no edges".into()));
        }
        if root_bc > 1 {
            return Err(Error::Validation("root boundary order must be 0 or 1".into()));
        }
        let m = edges.len();
        if edges[0].parent != 0 {
            return Err(Error::Validation("edge 1 must emanate from the root".into()));
        }
        if edges.iter().skip(1).any(|e| e.parent == 0) {
            return Err(Error::Validation("root must have degree 1".into()));
        }
        let mut depth = vec![0.0; m];
        for (i, e) in edges.iter().enumerate() {
            let j = i + 1;
            if e.parent >= j {
                return Err(Error::Validation(format!(
                    "edge {j} must emanate from a lower-indexed vertex, got {}",
                    e.parent
                )));
            }
            if !(e.length > 0.0) {
                return Err(Error::Validation(format!("edge {j} has length {}", e.length)));
            }
            if (e.q.start().abs() > 1e-12) || (e.q.end() - e.length).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "potential on edge {j} must be sampled on [0, {}]",
                    e.length
                )));
            }
            depth[i] = if e.parent == 0 { 0.0 } else { depth[e.parent - 1] } + e.length;
        }
        let height = depth.iter().cloned().fold(0.0, f64::max);
        if !(delay > 0.0 && delay <= height) {
            return Err(Error::Validation(format!(
                "delay {delay} must lie in (0, {height}]"
            )));
        }
        let mut has_child = vec![false; m + 1];
        for e in &edges {
            has_child[e.parent] = true;
        }
        for (i, e) in edges.iter().enumerate() {
            let leaf = !has_child[i + 1];
            match (leaf, e.bc) {
                (true, None) => {
                    return Err(Error::Validation(format!(
                        "edge {} terminates at a boundary vertex and needs a boundary order",
                        i + 1
                    )))
                }
                (true, Some(b)) if b > 1 => {
                    return Err(Error::Validation(format!(
                        "boundary order on edge {} must be 0 or 1",
                        i + 1
                    )))
                }
                (false, Some(_)) => {
                    return Err(Error::Validation(format!(
                        "edge {} terminates at an internal vertex; no boundary order applies",
                        i + 1
                    )))
                }
                _ => {}
            }
        }
        let t = Tree { delay, root_bc, edges, depth };
        t.check_admissibility()?;
        Ok(t)
    }

    /// Support condition making the delayed system well defined: on each
    /// edge the potential vanishes wherever the delayed argument would
    /// reach beyond the root.
    fn check_admissibility(&self) -> Result<()> {
        for j in 1..=self.m() {
            let tail = self.tail_depth(j);
            if tail >= self.delay {
                continue;
            }
            let e = self.edge(j);
            let cut = e.length.min(self.delay - tail);
            let scale = 1.0 + e.q.sup_norm();
            for i in 0..e.q.len() {
                let x = e.q.node(i);
                if x < cut - 1e-9 && e.q.sample(i).norm() > 1e-12 * scale {
                    return Err(Error::Validation(format!(
                        "edge {j}: potential must vanish on (0, {cut}) but is nonzero at x = {x}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Edge by 1-based index.
    pub fn edge(&self, j: usize) -> &TreeEdge {
        &self.edges[j - 1]
    }

    /// Distance from the root to the end vertex of edge `j`.
    pub fn head_depth(&self, j: usize) -> f64 {
        self.depth[j - 1]
    }

    /// Distance from the root to the start vertex of edge `j`.
    pub fn tail_depth(&self, j: usize) -> f64 {
        self.head_depth(j) - self.edge(j).length
    }

    pub fn height(&self) -> f64 {
        self.depth.iter().cloned().fold(0.0, f64::max)
    }

    /// Edges emanating from vertex `v_j`.
    pub fn children(&self, j: usize) -> Vec<usize> {
        (1..=self.m()).filter(|&k| self.edge(k).parent == j).collect()
    }
}

/// Split a potential at the delay: the part in `(0, a)` feeds the coupling
/// to ancestor edges, the part in `(a, 1)` keeps the delayed argument on
/// the same edge.
pub fn split_q(q: &GridFn, a: f64) -> (GridFn, GridFn) {
    let minus = GridFn::new(
        q.start(),
        q.end(),
        (0..q.len())
            .map(|i| if q.node(i) <= a { q.sample(i) } else { Complex64::ZERO })
            .collect(),
    )
    .expect("same grid");
    let plus = GridFn::new(
        q.start(),
        q.end(),
        (0..q.len())
            .map(|i| if q.node(i) > a { q.sample(i) } else { Complex64::ZERO })
            .collect(),
    )
    .expect("same grid");
    (minus, plus)
}

/// One component of a GGS on an edge grid: values and first derivative.
#[derive(Debug, Clone)]
pub struct GgsComponent {
    pub y: GridFn,
    pub dy: GridFn,
}

/// Composite cumulative quadrature: `out[i] = int over the first i panels`,
/// fourth order via two interleaved Simpson chains (the odd chain opens
/// with a cubic end-rule). The samples must belong to one smooth piece.
fn cumulative_integral(f: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = f.len();
    let mut out = vec![Complex64::ZERO; n];
    match n {
        0 | 1 => return out,
        2 => {
            out[1] = (f[0] + f[1]) * (h / 2.0);
            return out;
        }
        3 => {
            out[1] = (f[0] * 5.0 + f[1] * 8.0 - f[2]) * (h / 12.0);
            out[2] = (f[0] + f[1] * 4.0 + f[2]) * (h / 3.0);
            return out;
        }
        _ => {}
    }
    let mut i = 2;
    while i < n {
        out[i] = out[i - 2] + (f[i - 2] + f[i - 1] * 4.0 + f[i]) * (h / 3.0);
        i += 2;
    }
    out[1] = (f[0] * 9.0 + f[1] * 19.0 - f[2] * 5.0 + f[3]) * (h / 24.0);
    let mut i = 3;
    while i < n {
        out[i] = out[i - 2] + (f[i - 2] + f[i - 1] * 4.0 + f[i]) * (h / 3.0);
        i += 2;
    }
    out
}

/// A piecewise-smooth integrand on an edge grid. Each piece starts at a
/// node index and carries samples through the start of the next piece (the
/// last piece runs to the final node), so a node at a jump holds both
/// one-sided values: the left limit closes one piece and the right limit
/// opens the next. Quadrature never crosses a jump.
struct Pieces {
    start: f64,
    end: f64,
    n: usize,
    segs: Vec<(usize, Vec<Complex64>)>,
}

impl Pieces {
    fn h(&self) -> f64 {
        (self.end - self.start) / (self.n - 1) as f64
    }

    fn node(&self, i: usize) -> f64 {
        self.start + self.h() * i as f64
    }

    /// Two pieces split at node `idx`; each closure is evaluated on its own
    /// side, including the shared node.
    fn split_at(
        start: f64,
        end: f64,
        n: usize,
        idx: usize,
        left: impl Fn(usize) -> Complex64,
        right: impl Fn(usize) -> Complex64,
    ) -> Self {
        let idx = idx.clamp(0, n - 1);
        Pieces {
            start,
            end,
            n,
            segs: vec![
                (0, (0..=idx).map(left).collect()),
                (idx, (idx..n).map(right).collect()),
            ],
        }
    }
}

/// The variation-of-parameters map `g -> int_0^x sin(rho (x-t))/rho g(t) dt`
/// together with its x-derivative, evaluated on the grid of `g`. The sine
/// kernel is expanded through the angle-addition identity, so one pair of
/// cumulative integrals per smooth piece covers all x.
fn sin_conv(p: &Pieces, rho: Complex64) -> (GridFn, GridFn) {
    let n = p.n;
    let h = p.h();
    let mut cc = vec![Complex64::ZERO; n];
    let mut cs = vec![Complex64::ZERO; n];
    if rho.norm() < 1e-3 {
        return sin_conv_direct(p, rho);
    }
    let mut run_c = Complex64::ZERO;
    let mut run_s = Complex64::ZERO;
    for (s0, vals) in &p.segs {
        let gc: Vec<Complex64> = vals
            .iter()
            .enumerate()
            .map(|(k, v)| (rho * p.node(s0 + k)).cos() * v)
            .collect();
        let gs: Vec<Complex64> = vals
            .iter()
            .enumerate()
            .map(|(k, v)| (rho * p.node(s0 + k)).sin() * v)
            .collect();
        let cum_c = cumulative_integral(&gc, h);
        let cum_s = cumulative_integral(&gs, h);
        for k in 0..vals.len() {
            cc[s0 + k] = run_c + cum_c[k];
            cs[s0 + k] = run_s + cum_s[k];
        }
        run_c += *cum_c.last().unwrap_or(&Complex64::ZERO);
        run_s += *cum_s.last().unwrap_or(&Complex64::ZERO);
    }
    let mut v = vec![Complex64::ZERO; n];
    let mut dv = vec![Complex64::ZERO; n];
    for i in 0..n {
        let (sx, cx) = ((rho * p.node(i)).sin(), (rho * p.node(i)).cos());
        v[i] = (sx * cc[i] - cx * cs[i]) / rho;
        dv[i] = cx * cc[i] + sx * cs[i];
    }
    (
        GridFn::new(p.start, p.end, v).expect("valid grid"),
        GridFn::new(p.start, p.end, dv).expect("valid grid"),
    )
}

/// Direct per-node quadrature with the guarded sinc, for near-degenerate
/// kernels where the angle-addition split would cancel.
fn sin_conv_direct(p: &Pieces, rho: Complex64) -> (GridFn, GridFn) {
    let n = p.n;
    let h = p.h();
    let mut v = vec![Complex64::ZERO; n];
    let mut dv = vec![Complex64::ZERO; n];
    for i in 1..n {
        let xi = p.node(i);
        for (s0, vals) in &p.segs {
            if *s0 >= i {
                continue;
            }
            let top = (i - s0).min(vals.len() - 1);
            if top == 0 {
                continue;
            }
            let sub: Vec<Complex64> = (0..=top)
                .map(|k| sin_rho_x_over_rho(rho, xi - p.node(s0 + k)) * vals[k])
                .collect();
            let dsub: Vec<Complex64> = (0..=top)
                .map(|k| (rho * (xi - p.node(s0 + k))).cos() * vals[k])
                .collect();
            if top == 1 {
                v[i] += (sub[0] + sub[1]) * (h / 2.0);
                dv[i] += (dsub[0] + dsub[1]) * (h / 2.0);
            } else {
                let a = p.node(*s0);
                let b = p.node(s0 + top);
                let sg = GridFn::new(a, b, sub).expect("valid subgrid");
                let dg = GridFn::new(a, b, dsub).expect("valid subgrid");
                v[i] += integrate(&sg).expect("valid grid");
                dv[i] += integrate(&dg).expect("valid grid");
            }
        }
    }
    (
        GridFn::new(p.start, p.end, v).expect("valid grid"),
        GridFn::new(p.start, p.end, dv).expect("valid grid"),
    )
}

/// Number of Volterra iterations needed for delay `a`: the smallest band
/// count whose reach covers the interval.
fn iteration_count(a: f64) -> usize {
    (((1.0 / a) - 1e-12).ceil() as usize).saturating_sub(1).max(1)
}

/// Integrand of one Volterra iterate, `q(t) 1_{t >= a} prev(t - a)`: zero
/// up to the delay, with the jump node carrying the right limit.
fn iterate_pieces(q: &GridFn, prev: &GridFn, a: f64) -> Pieces {
    let idx = (a / q.h()).round() as usize;
    Pieces::split_at(
        q.start(),
        q.end(),
        q.len(),
        idx,
        |_| Complex64::ZERO,
        |i| q.sample(i) * prev.value_at((q.node(i) - a).max(0.0)),
    )
}

/// Fundamental solutions of the homogeneous same-edge-delay equation on
/// `[0, 1]` for delay `a` in `(0, 1]`: `nu = 1` starts from `cos(rho x)`,
/// `nu = 2` from `sin(rho x)/rho`, and the finitely many Volterra iterates
/// against the `(a, 1)` part of the potential complete the sum.
pub fn ggs_y(q: &GridFn, a: f64, lambda: Complex64, nu: u8) -> Result<GgsComponent> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidInput(format!("delay {a} outside (0, 1]")));
    }
    if !(1..=2).contains(&nu) {
        return Err(Error::InvalidInput(format!("nu must be 1 or 2, got {nu}")));
    }
    let rho = lambda.sqrt();
    let n = edge_nodes(q.end());
    let q = q.resample(n);
    let (y0, dy0) = match nu {
        1 => (
            GridFn::from_fn(0.0, q.end(), n, |x| (rho * x).cos()),
            GridFn::from_fn(0.0, q.end(), n, |x| -rho * (rho * x).sin()),
        ),
        _ => (
            GridFn::from_fn(0.0, q.end(), n, |x| sin_rho_x_over_rho(rho, x)),
            GridFn::from_fn(0.0, q.end(), n, |x| (rho * x).cos()),
        ),
    };
    let mut sum = y0.clone();
    let mut dsum = dy0;
    let mut prev = y0;
    for _ in 1..=iteration_count(a) {
        let (v, dv) = sin_conv(&iterate_pieces(&q, &prev, a), rho);
        sum = sum.zip(&v, |s, t| s + t);
        dsum = dsum.zip(&dv, |s, t| s + t);
        prev = v;
    }
    Ok(GgsComponent { y: sum, dy: dsum })
}

/// Coupling solution of the non-homogeneous edge equation with forcing
/// `q^-(x) Y_ref(x - a + 1)` (the reference solution living on the parent
/// edge) and vanishing Cauchy data at `x = 0`.
pub fn ggs_z(q: &GridFn, y_ref: &GgsComponent, a: f64, lambda: Complex64) -> Result<GgsComponent> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::InvalidInput(format!("delay {a} outside (0, 1]")));
    }
    let rho = lambda.sqrt();
    let n = edge_nodes(q.end());
    let q = q.resample(n);
    let idx = (a / q.h()).round() as usize;
    let seed = Pieces::split_at(
        q.start(),
        q.end(),
        n,
        idx,
        |i| {
            let s = (q.node(i) - a + 1.0).clamp(0.0, y_ref.y.end());
            q.sample(i) * y_ref.y.value_at(s)
        },
        |_| Complex64::ZERO,
    );
    let (mut sum, mut dsum) = sin_conv(&seed, rho);
    let mut prev = sum.clone();
    for _ in 1..=iteration_count(a) {
        let (v, dv) = sin_conv(&iterate_pieces(&q, &prev, a), rho);
        sum = sum.zip(&v, |s, t| s + t);
        dsum = dsum.zip(&dv, |s, t| s + t);
        prev = v;
    }
    Ok(GgsComponent { y: sum, dy: dsum })
}

/// Coupling solutions for delays `a` in `[1, 2)` on unit edges: single
/// quadratures against the parent-edge free solutions, starting at
/// `x = a - 1` where the support condition lets the potential switch on.
pub fn ggs_pq(q: &GridFn, a: f64, lambda: Complex64) -> Result<(GgsComponent, GgsComponent)> {
    if !(1.0..2.0).contains(&a) {
        return Err(Error::InvalidInput(format!("delay {a} outside [1, 2)")));
    }
    let rho = lambda.sqrt();
    let n = edge_nodes(q.end());
    let q = q.resample(n);
    let idx = ((a - 1.0) / q.h()).round() as usize;
    let shift = |i: usize| (q.node(i) - a + 1.0).max(0.0);
    let gp = Pieces::split_at(
        q.start(),
        q.end(),
        n,
        idx,
        |_| Complex64::ZERO,
        |i| q.sample(i) * (rho * shift(i)).cos(),
    );
    let gq = Pieces::split_at(
        q.start(),
        q.end(),
        n,
        idx,
        |_| Complex64::ZERO,
        |i| q.sample(i) * sin_rho_x_over_rho(rho, shift(i)),
    );
    let (p, dp) = sin_conv(&gp, rho);
    let (qq, dq) = sin_conv(&gq, rho);
    Ok((
        GgsComponent { y: p, dy: dp },
        GgsComponent { y: qq, dy: dq },
    ))
}

/// Express the delayed point `x - a` on edge `j` as a location on an
/// ancestor edge by walking the chain toward the root; `None` when the
/// point falls beyond the root (the coupling term is then eliminated by
/// the support condition). A point landing exactly on a junction is
/// assigned to the ancestor side (left-limit convention).
pub fn resolve_delay(t: &Tree, j: usize, x: f64, a: f64) -> Option<(usize, f64)> {
    resolve_delay_steps(t, j, x, a).map(|(e, s, _)| (e, s))
}

fn resolve_delay_steps(t: &Tree, j: usize, x: f64, a: f64) -> Option<(usize, f64, usize)> {
    let mut cur = j;
    let mut s = x - a;
    let mut steps = 0;
    while s < 0.0 {
        if cur == 1 {
            return None;
        }
        cur = t.edge(cur).parent;
        s += t.edge(cur).length;
        steps += 1;
    }
    if s == 0.0 && cur != 1 {
        cur = t.edge(cur).parent;
        s = t.edge(cur).length;
        steps += 1;
    }
    Some((cur, s, steps))
}

/// The GGS on a tree: per edge, the active columns of the `2m` constants
/// with their value/derivative profiles. Column `2(j-1)` multiplies the
/// cosine-type constant of edge `j`, column `2(j-1)+1` the sine-type one.
#[derive(Debug)]
pub struct TreeGgs {
    pub lambda: Complex64,
    /// `edges[j-1]` holds `(column, component)` pairs for edge `j`.
    pub edges: Vec<Vec<(usize, GgsComponent)>>,
}

/// Build the GGS on a tree. Two regimes are implemented: delays reaching
/// past every single edge (each delayed argument resolves on a strict
/// ancestor, crossing at most two edges), and same-edge delays on a star
/// with unit edges (the Volterra-iteration construction). Other
/// combinations are rejected.
pub fn assemble_tree_ggs(t: &Tree, lambda: Complex64) -> Result<TreeGgs> {
    let a = t.delay;
    let max_l = (1..=t.m()).map(|j| t.edge(j).length).fold(0.0, f64::max);
    if a >= max_l - 1e-12 {
        return assemble_cross_edge(t, lambda);
    }
    let is_unit_star = (1..=t.m())
        .all(|j| (t.edge(j).length - 1.0).abs() < 1e-12 && t.edge(j).parent == usize::from(j > 1));
    if is_unit_star {
        return assemble_unit_star(t, lambda);
    }
    Err(Error::NotImplemented(format!(
        "delay {a} shorter than an edge on a non-star tree"
    )))
}

fn free_columns(j: usize, length: f64, rho: Complex64) -> Vec<(usize, GgsComponent)> {
    let n = edge_nodes(length);
    vec![
        (
            2 * (j - 1),
            GgsComponent {
                y: GridFn::from_fn(0.0, length, n, |x| (rho * x).cos()),
                dy: GridFn::from_fn(0.0, length, n, |x| -rho * (rho * x).sin()),
            },
        ),
        (
            2 * (j - 1) + 1,
            GgsComponent {
                y: GridFn::from_fn(0.0, length, n, |x| sin_rho_x_over_rho(rho, x)),
                dy: GridFn::from_fn(0.0, length, n, |x| (rho * x).cos()),
            },
        ),
    ]
}

/// Delay no shorter than any edge: process edges in topological order; the
/// coupling integrals read already-solved ancestor columns at the resolved
/// delayed points.
fn assemble_cross_edge(t: &Tree, lambda: Complex64) -> Result<TreeGgs> {
    let rho = lambda.sqrt();
    let a = t.delay;
    let mut edges: Vec<Vec<(usize, GgsComponent)>> = Vec::with_capacity(t.m());
    for j in 1..=t.m() {
        let e = t.edge(j);
        let mut cols = free_columns(j, e.length, rho);
        if e.q.sup_norm() > 1e-13 {
            let n = edge_nodes(e.length);
            let q = e.q.resample(n);
            let mut targets: Vec<Option<(usize, f64)>> = Vec::with_capacity(n);
            for i in 0..n {
                match resolve_delay_steps(t, j, q.node(i), a) {
                    Some((ej, _, steps)) if steps > 2 => {
                        return Err(Error::NotImplemented(format!(
                            "delayed argument on edge {j} crosses {steps} edges \
                             (chain via edge {ej}); at most 2 are supported"
                        )));
                    }
                    // only the single endpoint x = a on edge 1 can resolve
                    // to its own edge here; the support condition makes the
                    // potential vanish a.e. there, so the node contributes
                    // nothing
                    Some((ej, _, _)) if ej == j => targets.push(None),
                    other => targets.push(other.map(|(ej, s, _)| (ej, s))),
                }
            }
            let mut active: Vec<usize> = targets
                .iter()
                .flatten()
                .flat_map(|&(ej, _)| edges[ej - 1].iter().map(|&(c, _)| c))
                .collect();
            active.sort_unstable();
            active.dedup();
            // smooth pieces of the integrand: the source solution switches
            // at nodes where the resolved target changes edge, so each
            // piece carries its own one-sided value at the shared node
            let tgt_edge = |o: &Option<(usize, f64)>| o.map(|(ej, _)| ej);
            let mut bounds = vec![0usize];
            for i in 1..n {
                if tgt_edge(&targets[i]) != tgt_edge(&targets[i - 1]) {
                    // the switch node belongs to the piece holding its own
                    // one-sided value: a delayed point entering the support
                    // (s = 0 at node i) opens the new piece, while a junction
                    // crossing resolves the shared node to the ancestor and
                    // closes the old one
                    let b = match (&targets[i - 1], &targets[i]) {
                        (None, Some((_, s))) if *s < 0.5 * q.h() => i,
                        _ => i - 1,
                    };
                    bounds.push(b);
                }
            }
            bounds.push(n - 1);
            bounds.dedup();
            let coupled: Vec<(usize, GgsComponent)> = active
                .par_iter()
                .map(|&col| {
                    let col_val = |ej: usize, s: f64| {
                        edges[ej - 1]
                            .iter()
                            .find(|&&(cc, _)| cc == col)
                            .map(|(_, comp)| comp.y.value_at(s.clamp(0.0, t.edge(ej).length)))
                            .unwrap_or(Complex64::ZERO)
                    };
                    let segs = bounds
                        .windows(2)
                        .map(|w| {
                            let (lo, hi) = (w[0], w[1]);
                            // the target edge of this piece's interior
                            let interior = if hi > lo + 1 { lo + 1 } else { hi };
                            let piece_tgt = targets[interior];
                            // one-sided potential value at a piece boundary
                            // interior to the edge: the admissibility cut
                            // ends the support of `q` exactly at the switch
                            // node, so the stored sample there holds the
                            // wrong limit; extrapolate from the piece side
                            let q_at = |i: usize| {
                                let boundary = (i == lo && lo > 0) || (i == hi && hi < n - 1);
                                if !boundary || hi - lo < 3 {
                                    return q.sample(i);
                                }
                                if i == lo {
                                    q.sample(lo + 1) * 3.0 - q.sample(lo + 2) * 3.0
                                        + q.sample(lo + 3)
                                } else {
                                    q.sample(hi - 1) * 3.0 - q.sample(hi - 2) * 3.0
                                        + q.sample(hi - 3)
                                }
                            };
                            let vals = (lo..=hi)
                                .map(|i| match piece_tgt {
                                    Some((ej, _)) => {
                                        // local coordinate on the target,
                                        // extrapolated for the shared node
                                        // whose own resolution is one-sided
                                        let s = match targets[i] {
                                            Some((e2, s2)) if e2 == ej => s2,
                                            _ => {
                                                let (_, s_ref) = targets[interior].unwrap();
                                                s_ref + (i as f64 - interior as f64) * q.h()
                                            }
                                        };
                                        q_at(i) * col_val(ej, s)
                                    }
                                    None => Complex64::ZERO,
                                })
                                .collect::<Vec<_>>();
                            (lo, vals)
                        })
                        .collect();
                    let pieces = Pieces { start: 0.0, end: e.length, n, segs };
                    let (v, dv) = sin_conv(&pieces, rho);
                    (col, GgsComponent { y: v, dy: dv })
                })
                .collect();
            cols.extend(coupled);
        }
        edges.push(cols);
    }
    Ok(TreeGgs { lambda, edges })
}

/// Star with unit edges and delay inside `(0, 1)`: fundamental solutions by
/// Volterra iteration on every edge, coupling solutions against the root
/// edge on the peripheral ones.
fn assemble_unit_star(t: &Tree, lambda: Complex64) -> Result<TreeGgs> {
    let a = t.delay;
    let y1 = [
        ggs_y(&t.edge(1).q, a, lambda, 1)?,
        ggs_y(&t.edge(1).q, a, lambda, 2)?,
    ];
    let mut edges = vec![vec![(0usize, y1[0].clone()), (1usize, y1[1].clone())]];
    let rest: Vec<Vec<(usize, GgsComponent)>> = (2..=t.m())
        .into_par_iter()
        .map(|j| -> Result<Vec<(usize, GgsComponent)>> {
            let q = &t.edge(j).q;
            let mut cols = vec![
                (2 * (j - 1), ggs_y(q, a, lambda, 1)?),
                (2 * (j - 1) + 1, ggs_y(q, a, lambda, 2)?),
            ];
            if q.sup_norm() > 1e-13 {
                cols.push((0, ggs_z(q, &y1[0], a, lambda)?));
                cols.push((1, ggs_z(q, &y1[1], a, lambda)?));
            }
            Ok(cols)
        })
        .collect::<Result<_>>()?;
    edges.extend(rest);
    Ok(TreeGgs { lambda, edges })
}

/// Characteristic determinant of the tree problem: substitute the GGS into
/// the matching conditions at internal vertices and the boundary
/// conditions, and take the determinant of the resulting `2m x 2m` system.
/// Zeros (in lambda) are the eigenvalues. The determinant is returned raw,
/// without normalization.
pub fn assemble_tree_det(t: &Tree, lambda: Complex64) -> Result<Complex64> {
    let ggs = assemble_tree_ggs(t, lambda)?;
    let m = t.m();
    let mut mat = nalgebra::DMatrix::<Complex64>::zeros(2 * m, 2 * m);
    let mut row = 0;

    let end_val = |comp: &GgsComponent, order: u8, at_end: bool| {
        let g = if order == 0 { &comp.y } else { &comp.dy };
        if at_end {
            g.sample(g.len() - 1)
        } else {
            g.sample(0)
        }
    };

    // boundary condition at the root end of edge 1
    for (c, comp) in &ggs.edges[0] {
        mat[(row, *c)] += end_val(comp, t.root_bc, false);
    }
    row += 1;

    for j in 1..=m {
        let kids = t.children(j);
        if kids.is_empty() {
            let order = t.edge(j).bc.expect("validated");
            for (c, comp) in &ggs.edges[j - 1] {
                mat[(row, *c)] += end_val(comp, order, true);
            }
            row += 1;
        } else {
            // continuity: parent end value equals each child start value
            for &k in &kids {
                for (c, comp) in &ggs.edges[j - 1] {
                    mat[(row, *c)] += end_val(comp, 0, true);
                }
                for (c, comp) in &ggs.edges[k - 1] {
                    mat[(row, *c)] -= end_val(comp, 0, false);
                }
                row += 1;
            }
            // flux balance
            for (c, comp) in &ggs.edges[j - 1] {
                mat[(row, *c)] += end_val(comp, 1, true);
            }
            for &k in &kids {
                for (c, comp) in &ggs.edges[k - 1] {
                    mat[(row, *c)] -= end_val(comp, 1, false);
                }
            }
            row += 1;
        }
    }
    debug_assert_eq!(row, 2 * m);
    Ok(mat.lu().determinant())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{det_oracle, q_forms, Potential};
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn unit_q(f: impl Fn(f64) -> f64) -> GridFn {
        GridFn::from_real_fn(0.0, 1.0, 1001, f)
    }

    /// Sup of the collocation residual of `-y'' + coupling - lambda y` with
    /// centered second differences, skipping nodes near the listed
    /// breakpoints and the endpoints.
    fn residual_sup(
        comp: &GgsComponent,
        coupling: impl Fn(usize, f64) -> Complex64,
        lambda: Complex64,
        breaks: &[f64],
    ) -> f64 {
        let y = &comp.y;
        let h = y.h();
        let mut worst = 0.0_f64;
        for i in 2..y.len() - 2 {
            let x = y.node(i);
            if breaks.iter().any(|b| (x - b).abs() < 4.5 * h) {
                continue;
            }
            // fourth-order five-point second difference
            let ypp = (-y.sample(i + 2) + y.sample(i + 1) * 16.0 - y.sample(i) * 30.0
                + y.sample(i - 1) * 16.0
                - y.sample(i - 2))
                / (12.0 * h * h);
            let r = -ypp + coupling(i, x) - lambda * y.sample(i);
            worst = worst.max(r.norm());
        }
        worst
    }

    #[test]
    fn split_examples() {
        let q = unit_q(|x| 1.0 + x);
        let (m, p) = split_q(&q, 1.0);
        assert_eq!(m.zip(&q, |a, b| a - b).sup_norm(), 0.0);
        assert_eq!(p.sup_norm(), 0.0);

        let q = unit_q(|_| 1.0);
        let (m, p) = split_q(&q, 0.5);
        assert_eq!(m.value_at(0.25), Complex64::ONE);
        assert_eq!(m.value_at(0.75), Complex64::ZERO);
        assert_eq!(p.value_at(0.25), Complex64::ZERO);
        assert_eq!(p.value_at(0.75), Complex64::ONE);
        let sum = m.zip(&p, |a, b| a + b);
        assert_eq!(sum.zip(&q, |a, b| a - b).sup_norm(), 0.0);
    }

    #[test]
    fn ggs_y_zero_potential_is_free() {
        let lambda = c(2.3);
        let rho = lambda.sqrt();
        let q = unit_q(|_| 0.0);
        let y1 = ggs_y(&q, 0.5, lambda, 1).unwrap();
        let y2 = ggs_y(&q, 0.5, lambda, 2).unwrap();
        let c1 = GridFn::from_fn(0.0, 1.0, y1.y.len(), |x| (rho * x).cos());
        let s1 = GridFn::from_fn(0.0, 1.0, y2.y.len(), |x| (rho * x).sin() / rho);
        assert!(y1.y.zip(&c1, |a, b| a - b).sup_norm() < 1e-14);
        assert!(y2.y.zip(&s1, |a, b| a - b).sup_norm() < 1e-14);
    }

    #[test]
    fn ggs_y_unit_delay_is_free() {
        // at a = 1 the same-edge part of the potential is empty
        let lambda = c(3.0);
        let rho = lambda.sqrt();
        let q = unit_q(|_| 0.8);
        let y1 = ggs_y(&q, 1.0, lambda, 1).unwrap();
        let c1 = GridFn::from_fn(0.0, 1.0, y1.y.len(), |x| (rho * x).cos());
        assert!(y1.y.zip(&c1, |a, b| a - b).sup_norm() < 1e-14);
    }

    #[test]
    fn ggs_y_residual_half_delay() {
        let lambda = Complex64::ONE;
        let a = 0.5;
        let q = unit_q(|_| 0.7);
        let (_, qp) = split_q(&q.resample(1001), a);
        for nu in [1u8, 2u8] {
            let y = ggs_y(&q, a, lambda, nu).unwrap();
            let yy = y.y.clone();
            let res = residual_sup(
                &y,
                |i, x| {
                    if x - a >= 0.0 {
                        qp.sample(i) * yy.value_at(x - a)
                    } else {
                        Complex64::ZERO
                    }
                },
                lambda,
                &[a],
            );
            assert!(res < 1e-6, "nu = {nu}: residual {res}");
        }
    }

    #[test]
    fn ggs_y_initial_values_and_wronskian() {
        let lambda = c(5.5);
        let q = unit_q(|x| (3.0 * x).sin());
        let y1 = ggs_y(&q, 0.4, lambda, 1).unwrap();
        let y2 = ggs_y(&q, 0.4, lambda, 2).unwrap();
        assert!((y1.y.sample(0) - Complex64::ONE).norm() < 1e-14);
        assert!(y1.dy.sample(0).norm() < 1e-14);
        assert!(y2.y.sample(0).norm() < 1e-14);
        assert!((y2.dy.sample(0) - Complex64::ONE).norm() < 1e-14);
        let w = y1.y.sample(0) * y2.dy.sample(0) - y1.dy.sample(0) * y2.y.sample(0);
        assert!((w - Complex64::ONE).norm() < 1e-14);
    }

    #[test]
    fn ggs_z_zero_potential_vanishes() {
        let lambda = c(4.0);
        let q = unit_q(|_| 0.0);
        let yref = ggs_y(&q, 1.0, lambda, 2).unwrap();
        let z = ggs_z(&q, &yref, 1.0, lambda).unwrap();
        assert_eq!(z.y.sup_norm(), 0.0);
    }

    #[test]
    fn ggs_z_unit_delay_matches_q_forms() {
        // a = 1, constant potential: the coupling solution evaluated at the
        // edge end is the standard transfer integral
        let lambda = c(2.7);
        let cval = 0.9;
        let q = unit_q(|_| cval);
        let free = ggs_y(&unit_q(|_| 0.0), 1.0, lambda, 2).unwrap();
        let z = ggs_z(&q, &free, 1.0, lambda).unwrap();
        let (qq, dq) = q_forms(&Potential::from_real_fn(move |_| cval), lambda);
        let end = z.y.sample(z.y.len() - 1);
        let dend = z.dy.sample(z.dy.len() - 1);
        assert!((end - qq).norm() < 1e-9, "Z(1) = {end} vs {qq}");
        assert!((dend - dq).norm() < 1e-9, "Z'(1) = {dend} vs {dq}");
    }

    #[test]
    fn ggs_z_residual() {
        let lambda = c(2.0);
        let a = 0.5;
        let q = unit_q(|_| 0.6);
        let (qm, qp) = split_q(&q.resample(1001), a);
        let yref = ggs_y(&unit_q(|_| 0.0), a, lambda, 1).unwrap();
        let z = ggs_z(&q, &yref, a, lambda).unwrap();
        let zz = z.y.clone();
        // -Z'' + q+ Z(x-a) - lambda Z = -q- Yref(x-a+1)
        let res = residual_sup(
            &z,
            |i, x| {
                let own = if x - a >= 0.0 {
                    qp.sample(i) * zz.value_at(x - a)
                } else {
                    Complex64::ZERO
                };
                own + qm.sample(i) * yref.y.value_at((x - a + 1.0).clamp(0.0, 1.0))
            },
            lambda,
            &[a],
        );
        assert!(res < 1e-6, "residual {res}");
    }

    #[test]
    fn ggs_pq_examples() {
        let lambda = c(3.3);
        let z = unit_q(|_| 0.0);
        let (p, q) = ggs_pq(&z, 1.5, lambda).unwrap();
        assert_eq!(p.y.sup_norm(), 0.0);
        assert_eq!(q.y.sup_norm(), 0.0);

        // a = 1: the Q component at the edge end is the transfer integral
        let cval = 0.45;
        let qc = unit_q(|_| cval);
        let (_, qcomp) = ggs_pq(&qc, 1.0, lambda).unwrap();
        let (qq, _) = q_forms(&Potential::from_real_fn(move |_| cval), lambda);
        let end = qcomp.y.sample(qcomp.y.len() - 1);
        assert!((end - qq).norm() < 1e-9);

        // a = 1.5: P(1) against an independent quadrature of the printed
        // integrand
        let a = 1.5;
        let rho = lambda.sqrt();
        let (pcomp, _) = ggs_pq(&qc, a, lambda).unwrap();
        let direct = integrate(&GridFn::from_fn(a - 1.0, 1.0, 2001, |t| {
            (rho * (1.0 - t)).sin() / rho * cval * (rho * (t - a + 1.0)).cos()
        }))
        .unwrap();
        let end = pcomp.y.sample(pcomp.y.len() - 1);
        assert!((end - direct).norm() < 1e-9, "P(1) = {end} vs {direct}");
    }

    /// The five-edge tree: e1 from the root, e2 and e3 from v1, e4 and e5
    /// from v2; unit lengths.
    fn five_edge_tree(a: f64, qs: [GridFn; 5], bcs: [u8; 4]) -> Result<Tree> {
        let [q1, q2, q3, q4, q5] = qs;
        Tree::new(
            a,
            bcs[0],
            vec![
                TreeEdge { parent: 0, length: 1.0, q: q1, bc: None },
                TreeEdge { parent: 1, length: 1.0, q: q2, bc: None },
                TreeEdge { parent: 1, length: 1.0, q: q3, bc: Some(bcs[1]) },
                TreeEdge { parent: 2, length: 1.0, q: q4, bc: Some(bcs[2]) },
                TreeEdge { parent: 2, length: 1.0, q: q5, bc: Some(bcs[3]) },
            ],
        )
    }

    fn zero_qs() -> [GridFn; 5] {
        std::array::from_fn(|_| unit_q(|_| 0.0))
    }

    #[test]
    fn resolve_delay_fixtures() {
        let t = five_edge_tree(1.5, zero_qs(), [0, 0, 0, 0]).unwrap();
        let (e, s) = resolve_delay(&t, 4, 0.3, 1.5).unwrap();
        assert_eq!(e, 1);
        assert_abs_diff_eq!(s, 0.8, epsilon = 1e-12);

        let (e, s) = resolve_delay(&t, 2, 0.7, 1.0).unwrap();
        assert_eq!(e, 1);
        assert_abs_diff_eq!(s, 0.7, epsilon = 1e-12);

        assert!(resolve_delay(&t, 1, 0.4, 1.0).is_none());
    }

    #[test]
    fn admissibility_is_enforced() {
        // edge 2 has |tail| = 1 < a = 1.5, so its potential must vanish on
        // (0, 1/2)
        let mut qs = zero_qs();
        qs[1] = unit_q(|_| 1.0);
        assert!(matches!(
            five_edge_tree(1.5, qs, [0, 0, 0, 0]),
            Err(Error::Validation(_))
        ));
        let mut qs = zero_qs();
        qs[1] = unit_q(|x| if x > 0.5 { 1.0 } else { 0.0 });
        assert!(five_edge_tree(1.5, qs, [0, 0, 0, 0]).is_ok());
    }

    fn star_tree(q2: &Potential, q3: &Potential, k: u8) -> Tree {
        Tree::new(
            1.0,
            0,
            vec![
                TreeEdge { parent: 0, length: 1.0, q: unit_q(|_| 0.0), bc: None },
                TreeEdge {
                    parent: 1,
                    length: 1.0,
                    q: q2.q().clone(),
                    bc: Some(k - 1),
                },
                TreeEdge {
                    parent: 1,
                    length: 1.0,
                    q: q3.q().clone(),
                    bc: Some(2 - k),
                },
            ],
        )
        .unwrap()
    }

    fn real_zeros(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64, count: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut prev_x = lo;
        let mut prev = f(lo);
        let mut x = lo + step;
        while x < hi && out.len() < count {
            let v = f(x);
            if prev == 0.0 {
                out.push(prev_x);
            } else if prev.signum() != v.signum() {
                let (mut a, mut b) = (prev_x, x);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if f(a).signum() == f(mid).signum() {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                out.push(0.5 * (a + b));
            }
            prev_x = x;
            prev = v;
            x += step;
        }
        out
    }

    #[test]
    fn star_det_matches_forward_oracle() {
        let q2 = Potential::from_real_fn(|x| 0.5 * (std::f64::consts::PI * x).cos());
        let q3 = Potential::from_real_fn(|x| 0.3 * x);
        for k in [1u8, 2u8] {
            let t = star_tree(&q2, &q3, k);
            let tree_det = |rho: f64| {
                let d = assemble_tree_det(&t, c(rho * rho)).unwrap();
                assert!(d.im.abs() < 1e-9 * (1.0 + d.re.abs()));
                d.re
            };
            let oracle = |rho: f64| det_oracle(&q2, &q3, k, c(rho * rho)).re;
            let zt = real_zeros(tree_det, 0.3, 8.0, 0.02, 7);
            let zo = real_zeros(oracle, 0.3, 8.0, 0.02, 7);
            assert_eq!(zt.len(), 7);
            assert_eq!(zo.len(), 7);
            for (a, b) in zt.iter().zip(&zo) {
                assert!((a - b).abs() < 1e-8, "k = {k}: {a} vs {b}");
            }
        }
    }

    /// Free (zero-potential) tree spectrum by recursive propagation of
    /// `(value, derivative)` end data toward the root.
    fn free_tree_det(t: &Tree, rho: f64) -> f64 {
        fn subtree(t: &Tree, j: usize, rho: f64) -> (f64, f64) {
            let l = t.edge(j).length;
            let kids = t.children(j);
            let (v1, f1) = if kids.is_empty() {
                match t.edge(j).bc.unwrap() {
                    0 => ((rho * l).sin() / rho, -(rho * l).cos()),
                    _ => ((rho * l).cos(), rho * (rho * l).sin()),
                }
            } else {
                // common value is the product of child values; flux sums
                let parts: Vec<(f64, f64)> =
                    kids.iter().map(|&k| subtree(t, k, rho)).collect();
                let v: f64 = parts.iter().map(|p| p.0).product();
                let f: f64 = parts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        p.1 * parts
                            .iter()
                            .enumerate()
                            .filter(|&(ii, _)| ii != i)
                            .map(|(_, pp)| pp.0)
                            .product::<f64>()
                    })
                    .sum();
                let end = (v, f);
                // pull back through this edge: y(x) with y(l) = v, y'(l) = f
                let a = end.0 * (rho * l).cos() - end.1 * (rho * l).sin() / rho;
                let b = end.0 * rho * (rho * l).sin() + end.1 * (rho * l).cos();
                (a, b)
            };
            (v1, f1)
        }
        let (v, f) = subtree(t, 1, rho);
        if t.root_bc == 0 {
            v
        } else {
            f
        }
    }

    #[test]
    fn five_edge_free_tree_matches_recursive_oracle() {
        // delay 2 with all potentials zero: the determinant is purely
        // trigonometric and must vanish exactly at the free tree spectrum
        let t = five_edge_tree(2.0, zero_qs(), [0, 0, 0, 0]).unwrap();
        let tree_det = |rho: f64| assemble_tree_det(&t, c(rho * rho)).unwrap().re;
        let zt = real_zeros(tree_det, 0.3, 6.0, 0.01, 8);
        let zo = real_zeros(|rho| free_tree_det(&t, rho), 0.3, 6.0, 0.01, 8);
        assert_eq!(zt.len(), zo.len());
        for (a, b) in zt.iter().zip(&zo) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn five_edge_three_halves_delay_residuals() {
        // delay 3/2: edges 2 and 3 couple to edge 1 on their outer halves,
        // edges 4 and 5 couple to edge 1 then edge 2 across the mid-point
        let mut qs = zero_qs();
        qs[1] = unit_q(|x| if x > 0.5 { (x - 0.5) * 1.2 } else { 0.0 });
        qs[2] = unit_q(|x| if x > 0.5 { 0.7 } else { 0.0 });
        qs[3] = unit_q(|x| (std::f64::consts::PI * x).sin());
        qs[4] = unit_q(|_| -0.4);
        let a = 1.5;
        let t = five_edge_tree(a, qs, [0, 0, 0, 0]).unwrap();
        let lambda = c(3.7);
        let ggs = assemble_tree_ggs(&t, lambda).unwrap();
        for j in 2..=5usize {
            let q = t.edge(j).q.resample(ggs.edges[j - 1][0].1.y.len());
            for (col, comp) in &ggs.edges[j - 1] {
                let res = residual_sup(
                    comp,
                    |i, x| match resolve_delay(&t, j, x, a) {
                        Some((ej, s)) => {
                            let src = ggs.edges[ej - 1]
                                .iter()
                                .find(|&&(cc, _)| cc == *col)
                                .map(|(_, cmp)| cmp.y.value_at(s))
                                .unwrap_or(Complex64::ZERO);
                            q.sample(i) * src
                        }
                        None => Complex64::ZERO,
                    },
                    lambda,
                    &[0.5],
                );
                assert!(res < 1e-6, "edge {j} column {col}: residual {res}");
                // continuity across the source switch at x = 1/2:
                // quadratic extrapolation from each side must agree
                for g in [&comp.y, &comp.dy] {
                    let h = g.h();
                    let mid = (0.5 / h).round() as usize;
                    let left = g.sample(mid - 3) - g.sample(mid - 2) * 3.0 + g.sample(mid - 1) * 3.0;
                    let right = g.sample(mid + 3) - g.sample(mid + 2) * 3.0 + g.sample(mid + 1) * 3.0;
                    let scale = 1.0 + g.sup_norm();
                    assert!(
                        (left - right).norm() / scale < 1e-6,
                        "edge {j} column {col}: jump {}",
                        (left - right).norm()
                    );
                }
            }
        }
    }

    #[test]
    fn invalid_trees_are_rejected() {
        // two edges at the root
        let r = Tree::new(
            1.0,
            0,
            vec![
                TreeEdge { parent: 0, length: 1.0, q: unit_q(|_| 0.0), bc: Some(0) },
                TreeEdge { parent: 0, length: 1.0, q: unit_q(|_| 0.0), bc: Some(0) },
            ],
        );
        assert!(matches!(r, Err(Error::Validation(_))));

        // internal edge with a boundary order
        let r = Tree::new(
            1.0,
            0,
            vec![
                TreeEdge { parent: 0, length: 1.0, q: unit_q(|_| 0.0), bc: Some(0) },
                TreeEdge { parent: 1, length: 1.0, q: unit_q(|_| 0.0), bc: Some(0) },
            ],
        );
        assert!(matches!(r, Err(Error::Validation(_))));

        // missing boundary order at a leaf
        let r = Tree::new(
            1.0,
            0,
            vec![TreeEdge { parent: 0, length: 1.0, q: unit_q(|_| 0.0), bc: None }],
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn unsupported_combinations_raise_not_implemented() {
        // short delay on the non-star tree
        let t = five_edge_tree(0.5, zero_qs(), [0, 0, 0, 0]);
        // admissibility itself passes (all q zero), assembly must refuse
        let t = t.unwrap();
        assert!(matches!(
            assemble_tree_ggs(&t, c(1.0)),
            Err(Error::NotImplemented(_))
        ));
    }
}
