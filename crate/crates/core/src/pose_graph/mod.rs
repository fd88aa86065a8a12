//! Keyframe pose graph with odometry and loop-closure edges, optimised by
//! Levenberg-Marquardt.
//!
//! Keyframes come from two sources. VIO keyframes carry an image and may take
//! part in loop closures; PE keyframes only carry dead-reckoned odometry, so
//! their edges are down-weighted and loop edges touching them are refused.
//!
//! The residual of an edge with measurement `Z` between poses `Xi` and `Xj`
//! is the minimal log of `Z⁻¹ · Xi⁻¹ · Xj`, ordered `[translation; rotation]`.
//! Poses are perturbed as `t + δt`, `R · Exp(δθ)`.

mod envelope;
pub mod g2o;

use std::collections::BTreeSet;
use std::ops::AddAssign;

use nalgebra::{DVector, Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

pub use envelope::{EnvelopeCholesky, EnvelopeMatrix};

use crate::error::{Error, Result};
use crate::geometry::{skew, so3_log, so3_right_jacobian_inv, Pose, RigidTransform};
use crate::switching::SwitchingState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyframeSource {
    VioKf,
    PeKf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeNode {
    pub id: usize,
    pub t: f64,
    pub pose: Pose,
    pub source: KeyframeSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Odometry,
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub kind: EdgeKind,
    pub from: usize,
    pub to: usize,
    /// Measured pose of `to` in the frame of `from`.
    pub relative: RigidTransform,
    pub information: Matrix6<f64>,
}

/// Why a loop edge was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopRejection {
    /// At least one endpoint is a PE keyframe, which has no image to match.
    PeEndpoint { from: KeyframeSource, to: KeyframeSource },
    SelfLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopOutcome {
    Accepted(usize),
    Rejected(LoopRejection),
}

/// Odometry-edge information weights by source pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeWeights {
    pub vio_translation: f64,
    pub vio_rotation: f64,
    /// Multiplier applied when either endpoint is a PE keyframe.
    pub pe_factor: f64,
}

impl Default for EdgeWeights {
    fn default() -> Self {
        Self {
            vio_translation: 1.0,
            vio_rotation: 1.0,
            pe_factor: 0.01,
        }
    }
}

impl EdgeWeights {
    pub fn odometry_information(&self, from: KeyframeSource, to: KeyframeSource) -> Matrix6<f64> {
        let factor = if from == KeyframeSource::PeKf || to == KeyframeSource::PeKf {
            self.pe_factor
        } else {
            1.0
        };
        diagonal_information(self.vio_translation * factor, self.vio_rotation * factor)
    }
}

pub fn diagonal_information(translation: f64, rotation: f64) -> Matrix6<f64> {
    Matrix6::from_diagonal(&Vector6::new(
        translation,
        translation,
        translation,
        rotation,
        rotation,
        rotation,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub initial_lambda: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rel_tol: 1e-9,
            initial_lambda: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    /// Σ rᵀ Ω r before optimisation.
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default)]
pub struct PoseGraph {
    nodes: Vec<KeyframeNode>,
    edges: Vec<GraphEdge>,
    fixed: BTreeSet<usize>,
    weights: EdgeWeights,
    rejected_loops: Vec<(usize, usize, LoopRejection)>,
    last_correction: Option<RigidTransform>,
}

impl PoseGraph {
    pub fn new(weights: EdgeWeights) -> Self {
        Self {
            weights,
            ..Self::default()
        }
    }

    pub fn nodes(&self) -> &[KeyframeNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn node(&self, id: usize) -> Result<&KeyframeNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn fixed(&self) -> &BTreeSet<usize> {
        &self.fixed
    }

    pub fn set_fixed(&mut self, id: usize, fixed: bool) -> Result<()> {
        self.node(id)?;
        if fixed {
            self.fixed.insert(id);
        } else {
            self.fixed.remove(&id);
        }
        Ok(())
    }

    pub fn rejected_loops(&self) -> &[(usize, usize, LoopRejection)] {
        &self.rejected_loops
    }

    /// Correction `optimised · pre⁻¹` of the newest keyframe from the last
    /// [`optimize`](Self::optimize) call.
    pub fn last_correction(&self) -> Option<RigidTransform> {
        self.last_correction
    }

    pub fn loop_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Loop).count()
    }

    /// Appends a keyframe; the first one becomes the gauge. Every later one
    /// is chained to its predecessor by an odometry edge matching the current
    /// relative pose.
    pub fn add_keyframe(&mut self, pose: Pose, t: f64, source: KeyframeSource) -> Result<usize> {
        if let Some(last) = self.nodes.last() {
            if !(t > last.t) {
                return Err(Error::NonMonotonicTimestamp { prev: last.t, next: t });
            }
        }
        if !pose.is_finite() || !t.is_finite() {
            return Err(Error::NonFinite("keyframe pose".into()));
        }
        let id = self.nodes.len();
        self.nodes.push(KeyframeNode { id, t, pose, source });
        if id == 0 {
            self.fixed.insert(0);
        } else {
            let prev = self.nodes[id - 1];
            self.edges.push(GraphEdge {
                kind: EdgeKind::Odometry,
                from: id - 1,
                to: id,
                relative: prev.pose.between(&pose),
                information: self.weights.odometry_information(prev.source, source),
            });
        }
        Ok(id)
    }

    /// Adds a loop-closure constraint between two VIO keyframes.
    pub fn add_loop_edge(
        &mut self,
        from: usize,
        to: usize,
        relative: RigidTransform,
        information: Matrix6<f64>,
    ) -> Result<LoopOutcome> {
        let a = self.node(from)?.source;
        let b = self.node(to)?.source;
        let rejection = if from == to {
            Some(LoopRejection::SelfLoop)
        } else if a == KeyframeSource::PeKf || b == KeyframeSource::PeKf {
            Some(LoopRejection::PeEndpoint { from: a, to: b })
        } else {
            None
        };
        if let Some(r) = rejection {
            self.rejected_loops.push((from, to, r));
            return Ok(LoopOutcome::Rejected(r));
        }
        self.edges.push(GraphEdge {
            kind: EdgeKind::Loop,
            from,
            to,
            relative,
            information,
        });
        Ok(LoopOutcome::Accepted(self.edges.len() - 1))
    }

    /// Σ rᵀ Ω r over all edges at the current poses.
    pub fn cost(&self) -> f64 {
        total_cost(&self.nodes, &self.edges)
    }

    fn check_connected(&self) -> Result<()> {
        if self.fixed.is_empty() {
            return Err(Error::NoGauge);
        }
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in self.edges.iter().filter(|e| e.kind == EdgeKind::Odometry) {
            let (ra, rb) = (find(&mut parent, e.from), find(&mut parent, e.to));
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        if (0..self.nodes.len()).all(|i| find(&mut parent, i) == root) {
            Ok(())
        } else {
            Err(Error::DisconnectedGraph)
        }
    }

    fn check_information(&self) -> Result<()> {
        for (k, e) in self.edges.iter().enumerate() {
            let info = &e.information;
            let symmetric = (info - info.transpose()).amax() <= 1e-9 * info.amax().max(1.0);
            if !symmetric || info.iter().any(|v| !v.is_finite()) || info.cholesky().is_none() {
                return Err(Error::NotPositiveDefinite { edge: k });
            }
        }
        Ok(())
    }

    /// Levenberg-Marquardt over all non-fixed keyframe poses.
    pub fn optimize(&mut self, opts: &OptimizeOptions) -> Result<OptimizeReport> {
        self.check_connected()?;
        self.check_information()?;
        let before_latest = self.nodes.last().map(|n| n.pose);

        let var_of: Vec<Option<usize>> = {
            let mut next = 0;
            self.nodes
                .iter()
                .map(|n| {
                    if self.fixed.contains(&n.id) {
                        None
                    } else {
                        next += 1;
                        Some(next - 1)
                    }
                })
                .collect()
        };
        let n_vars = var_of.iter().flatten().count();
        let mut profile: Vec<usize> = (0..n_vars).collect();
        for e in &self.edges {
            if let (Some(a), Some(b)) = (var_of[e.from], var_of[e.to]) {
                let (hi, lo) = (a.max(b), a.min(b));
                profile[hi] = profile[hi].min(lo);
            }
        }

        let initial_cost = self.cost();
        let mut cost = initial_cost;
        let mut lambda = opts.initial_lambda;
        let mut iterations = 0;
        let mut converged = n_vars == 0 || cost == 0.0;

        while !converged && iterations < opts.max_iters {
            let (h, g) = build_normal_equations(&self.nodes, &self.edges, &var_of, &profile);
            let diag = h.diagonal();
            let mut accepted = false;
            while lambda <= 1e16 {
                let mut damped = h.clone();
                let damping: Vec<f64> = diag.iter().map(|d| lambda * d.max(1e-12)).collect();
                damped.add_to_diagonal(&damping);
                let Ok(chol) = damped.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let step = chol.solve(&(-&g));
                let candidate: Vec<KeyframeNode> = self
                    .nodes
                    .iter()
                    .map(|n| match var_of[n.id] {
                        Some(v) => KeyframeNode {
                            pose: n.pose.retract(&step.fixed_rows::<6>(v * 6).into_owned()),
                            ..*n
                        },
                        None => *n,
                    })
                    .collect();
                let new_cost = total_cost(&candidate, &self.edges);
                if new_cost.is_finite() && new_cost <= cost {
                    self.nodes = candidate;
                    let rel = if cost > 0.0 { (cost - new_cost) / cost } else { 0.0 };
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    if rel < opts.rel_tol || cost < 1e-30 {
                        converged = true;
                    }
                    break;
                }
                lambda *= 10.0;
            }
            iterations += 1;
            if !accepted {
                // No damping level lowers the cost: at a minimum to working precision.
                converged = true;
            }
        }

        self.last_correction = match (before_latest, self.nodes.last()) {
            (Some(pre), Some(post)) => Some(post.pose.compose(&pre.inverse())),
            _ => None,
        };
        Ok(OptimizeReport {
            iterations,
            initial_cost,
            final_cost: cost,
            converged,
        })
    }

    /// Overwrites a node pose (used by tests and by graph import).
    pub fn set_pose(&mut self, id: usize, pose: Pose) -> Result<()> {
        self.nodes.get_mut(id).ok_or(Error::UnknownNode(id))?.pose = pose;
        Ok(())
    }
}

/// Moves the live switching estimate onto the optimised graph by applying
/// the newest keyframe's correction to the anchors and the robust pose.
pub fn reanchor_after_optimize(graph: &PoseGraph, state: &mut SwitchingState) {
    if let Some(c) = graph.last_correction() {
        state.apply_correction(&c);
    }
}

fn total_cost(nodes: &[KeyframeNode], edges: &[GraphEdge]) -> f64 {
    edges
        .iter()
        .map(|e| {
            let r = edge_residual(&e.relative, &nodes[e.from].pose, &nodes[e.to].pose);
            (r.transpose() * e.information * r)[(0, 0)]
        })
        .sum()
}

fn build_normal_equations(
    nodes: &[KeyframeNode],
    edges: &[GraphEdge],
    var_of: &[Option<usize>],
    profile: &[usize],
) -> (EnvelopeMatrix, DVector<f64>) {
    let mut h = EnvelopeMatrix::with_block_profile(profile);
    let mut g = DVector::zeros(profile.len() * 6);
    for e in edges {
        let (vi, vj) = (var_of[e.from], var_of[e.to]);
        if vi.is_none() && vj.is_none() {
            continue;
        }
        let xi = &nodes[e.from].pose;
        let xj = &nodes[e.to].pose;
        let r = edge_residual(&e.relative, xi, xj);
        let (ji, jj) = edge_jacobians(&e.relative, xi, xj);
        let omega = &e.information;
        let blocks = [(vi, ji), (vj, jj)];
        for (va, ja) in blocks.iter() {
            let Some(a) = *va else { continue };
            let ja_t_omega = ja.transpose() * omega;
            g.fixed_rows_mut::<6>(a * 6).add_assign(&(ja_t_omega * r));
            for (vb, jb) in blocks.iter() {
                let Some(b) = *vb else { continue };
                if a >= b {
                    h.add_block(a, b, &(ja_t_omega * jb));
                }
            }
        }
    }
    (h, g)
}

/// Residual `[t; Log(R)]` of `relative⁻¹ · from⁻¹ · to`; zero iff satisfied.
pub fn edge_residual(relative: &RigidTransform, from: &Pose, to: &Pose) -> Vector6<f64> {
    let err = relative.inverse().compose(&from.inverse().compose(to));
    let rot = so3_log(&(relative.orientation.inverse() * from.orientation.inverse() * to.orientation));
    let mut r = Vector6::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&err.position);
    r.fixed_rows_mut::<3>(3).copy_from(&rot);
    r
}

/// Analytic Jacobians of [`edge_residual`] with respect to the tangent
/// perturbations of `from` and `to`.
pub fn edge_jacobians(
    relative: &RigidTransform,
    from: &Pose,
    to: &Pose,
) -> (Matrix6<f64>, Matrix6<f64>) {
    let rz_t = relative.rotation().transpose();
    let ri = from.rotation();
    let ri_t = ri.transpose();
    let rj = to.rotation();
    let local: Vector3<f64> = ri_t * (to.position - from.position);
    let r_rot = so3_log(&(relative.orientation.inverse() * from.orientation.inverse() * to.orientation));
    let jr_inv = so3_right_jacobian_inv(&r_rot);
    let rzri: Matrix3<f64> = rz_t * ri_t;

    let mut j_from = Matrix6::zeros();
    j_from.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-rzri));
    j_from.fixed_view_mut::<3, 3>(0, 3).copy_from(&(rz_t * skew(&local)));
    j_from
        .fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(-jr_inv * rj.transpose() * ri));

    let mut j_to = Matrix6::zeros();
    j_to.fixed_view_mut::<3, 3>(0, 0).copy_from(&rzri);
    j_to.fixed_view_mut::<3, 3>(3, 3).copy_from(&jr_inv);
    (j_from, j_to)
}
