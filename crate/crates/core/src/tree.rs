//! Branched models on a d-ary tree of cubes.
//!
//! Nodes are stored level-order in a flat vector: the root is node 0, the
//! parent of node `i > 0` is `(i - 1) / d` and its children are
//! `d*i + 1 ..= d*i + d`. Generation `j` occupies `[offset(j), offset(j+1))`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::DiagRow;
use crate::model::Dynamics;
use crate::numerics::{power_table, CompensatedSum};

/// Largest supported node count; admits d=8 at depth 8 (19 173 961 nodes).
pub const MAX_NODES: usize = 1 << 25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("invalid tree parameters: {0}")]
    InvalidParams(&'static str),
    #[error("tree with d={d}, depth={depth} exceeds {max} nodes", max = MAX_NODES)]
    TooLarge { d: usize, depth: usize },
    #[error("state has {got} nodes, tree has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid arguments: {0}")]
    InvalidArgs(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeVariant {
    /// `u_Q' = λ^j u_parent u_Q - λ^{j+1} Σ_children u_c^2`
    BranchedObukhov,
    /// `u_Q' = λ^j u_parent^2 - λ^{j+1} u_Q Σ_children u_c`
    BranchedKp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    lambda: f64,
    d: usize,
    depth: usize,
    variant: TreeVariant,
    /// `offsets[j]` = first node of generation `j`; `offsets[depth+1]` = node count.
    offsets: Vec<usize>,
    /// λ^0 ..= λ^{depth+1}
    powers: Vec<f64>,
}

impl TreeParams {
    pub fn new(lambda: f64, d: usize, depth: usize, variant: TreeVariant) -> Result<Self, TreeError> {
        if !(lambda.is_finite() && lambda > 1.0) {
            return Err(TreeError::InvalidParams("lambda must be a finite number > 1"));
        }
        if d < 1 {
            return Err(TreeError::InvalidParams("d must be >= 1"));
        }
        if depth < 1 {
            return Err(TreeError::InvalidParams("depth must be >= 1"));
        }
        let mut offsets = Vec::with_capacity(depth + 2);
        let (mut total, mut width) = (0usize, 1usize);
        for _ in 0..=depth {
            offsets.push(total);
            total = total.checked_add(width).filter(|&t| t <= MAX_NODES).ok_or(TreeError::TooLarge { d, depth })?;
            width = width.saturating_mul(d);
        }
        offsets.push(total);
        let powers = power_table(lambda, depth + 2);
        if !powers.last().is_some_and(|w| w.is_finite()) {
            return Err(TreeError::InvalidParams("lambda^(depth+1) overflows"));
        }
        Ok(Self { lambda, d, depth, variant, offsets, powers })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn variant(&self) -> TreeVariant {
        self.variant
    }

    pub fn node_count(&self) -> usize {
        self.offsets[self.depth + 1]
    }

    /// Node ids of generation `j`.
    pub fn level_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn level_of(&self, node: usize) -> usize {
        self.offsets.partition_point(|&o| o <= node) - 1
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        (node > 0).then(|| (node - 1) / self.d)
    }

    /// Children of `node`, empty for leaves.
    pub fn children(&self, node: usize) -> std::ops::Range<usize> {
        let first = self.d * node + 1;
        let count = self.node_count();
        if first >= count {
            count..count
        } else {
            first..first + self.d
        }
    }

    pub fn rhs_into(&self, u: &[f64], du: &mut [f64]) {
        debug_assert_eq!(u.len(), self.node_count());
        let pw = &self.powers;
        for j in 0..=self.depth {
            let (lo, up) = (pw[j], pw[j + 1]);
            for i in self.level_range(j) {
                let parent = if i == 0 { 0.0 } else { u[(i - 1) / self.d] };
                let ui = u[i];
                let kids = &u[self.children(i)];
                du[i] = match self.variant {
                    TreeVariant::BranchedObukhov => {
                        let sq = kids.iter().fold(0.0, |acc, &c| acc + c * c);
                        lo * parent * ui - up * sq
                    }
                    TreeVariant::BranchedKp => {
                        let sum = kids.iter().fold(0.0, |acc, &c| acc + c);
                        lo * parent * parent - up * ui * sum
                    }
                };
            }
        }
    }

    pub fn rhs_tree(&self, s: &TreeState) -> Result<Vec<f64>, TreeError> {
        self.check(&s.u)?;
        let mut du = vec![0.0; s.u.len()];
        self.rhs_into(&s.u, &mut du);
        Ok(du)
    }

    fn check(&self, u: &[f64]) -> Result<(), TreeError> {
        if u.len() != self.node_count() {
            return Err(TreeError::LengthMismatch { expected: self.node_count(), got: u.len() });
        }
        Ok(())
    }

    /// A state where every node of generation `j` holds `per_level[j]`.
    pub fn symmetric_state(&self, per_level: &[f64]) -> TreeState {
        let mut u = vec![0.0; self.node_count()];
        for (j, &v) in per_level.iter().enumerate().take(self.depth + 1) {
            u[self.level_range(j)].fill(v);
        }
        TreeState { t: 0.0, u }
    }
}

impl Dynamics for TreeParams {
    fn dim(&self) -> usize {
        self.node_count()
    }

    fn eval(&self, u: &[f64], du: &mut [f64]) {
        self.rhs_into(u, du);
    }

    fn scale(&self, i: usize) -> f64 {
        self.powers[self.level_of(i)]
    }
}

/// Node coefficients `u_Q` in level order at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeState {
    pub t: f64,
    pub u: Vec<f64>,
}

impl TreeState {
    pub fn zeros(p: &TreeParams) -> Self {
        Self { t: 0.0, u: vec![0.0; p.node_count()] }
    }
}

/// `sqrt(sum_Q λ^{2s j(Q)} u_Q^2)`.
pub fn tree_sobolev_norm(p: &TreeParams, u: &[f64], s: f64) -> f64 {
    let w = p.lambda.powf(2.0 * s);
    let mut acc = CompensatedSum::new();
    let mut weight = 1.0;
    for j in 0..=p.depth {
        for i in p.level_range(j) {
            acc.add(weight * u[i] * u[i]);
        }
        weight *= w;
    }
    acc.value().max(0.0).sqrt()
}

/// `max_Q λ^{j(Q)} |u_Q|` and the generation where it is attained.
pub fn tree_sup_scaled(p: &TreeParams, u: &[f64]) -> (f64, usize) {
    let mut best = (0.0, 0);
    for j in 0..=p.depth {
        for i in p.level_range(j) {
            let v = p.powers[j] * u[i].abs();
            if v > best.0 {
                best = (v, j);
            }
        }
    }
    best
}

/// Per-sample diagnostics with the tree norms; `argmax` is a generation.
pub fn tree_diag_row(p: &TreeParams, t: f64, u: &[f64], hs_index: f64, extra: &[f64]) -> DiagRow {
    let (sup, argmax) = tree_sup_scaled(p, u);
    DiagRow {
        t,
        energy: tree_sobolev_norm(p, u, 0.0).powi(2),
        h1: tree_sobolev_norm(p, u, 1.0),
        hs: tree_sobolev_norm(p, u, hs_index),
        sup_scaled: sup,
        argmax,
        extra: extra.iter().map(|&r| tree_sobolev_norm(p, u, r)).collect(),
    }
}

/// Guaranteed local-existence horizon for the branched system:
/// `T = 1 / (4 sqrt(2(d+1)) λ^s ||U_0||_{H^s})`.
pub fn picard_time(norm_hs: f64, d: usize, lambda: f64, s: f64) -> Result<f64, TreeError> {
    if !(norm_hs > 0.0 && norm_hs.is_finite()) {
        return Err(TreeError::InvalidArgs("norm must be finite and > 0"));
    }
    if d < 1 {
        return Err(TreeError::InvalidArgs("d must be >= 1"));
    }
    if !(lambda.is_finite() && lambda > 1.0) {
        return Err(TreeError::InvalidArgs("lambda must be > 1"));
    }
    if !(s.is_finite() && s >= 1.0) {
        return Err(TreeError::InvalidArgs("s must be >= 1"));
    }
    let eta_per_t = (2.0 * (d as f64 + 1.0)).sqrt() * lambda.powf(s);
    Ok(1.0 / (4.0 * eta_per_t * norm_hs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing() {
        let p = TreeParams::new(2.0, 3, 2, TreeVariant::BranchedObukhov).unwrap();
        assert_eq!(p.node_count(), 1 + 3 + 9);
        assert_eq!(p.level_range(1), 1..4);
        assert_eq!(p.level_of(0), 0);
        assert_eq!(p.level_of(3), 1);
        assert_eq!(p.level_of(4), 2);
        assert_eq!(p.level_of(12), 2);
        assert_eq!(p.children(1), 4..7);
        assert!(p.children(5).is_empty());
        for i in 1..p.node_count() {
            let par = p.parent(i).unwrap();
            assert!(p.children(par).contains(&i));
            assert_eq!(p.level_of(par) + 1, p.level_of(i));
        }
        assert_eq!(p.parent(0), None);
    }

    #[test]
    fn size_cap() {
        assert!(TreeParams::new(2.0, 8, 8, TreeVariant::BranchedKp).is_ok());
        assert_eq!(
            TreeParams::new(2.0, 8, 9, TreeVariant::BranchedKp).unwrap_err(),
            TreeError::TooLarge { d: 8, depth: 9 }
        );
        assert_eq!(
            TreeParams::new(2.0, 2, 25, TreeVariant::BranchedKp).unwrap_err(),
            TreeError::TooLarge { d: 2, depth: 25 }
        );
        assert!(TreeParams::new(1.0, 2, 2, TreeVariant::BranchedKp).is_err());
        assert!(TreeParams::new(2.0, 0, 2, TreeVariant::BranchedKp).is_err());
        assert!(TreeParams::new(2.0, 2, 0, TreeVariant::BranchedKp).is_err());
    }

    #[test]
    fn rhs_examples() {
        let p = TreeParams::new(2.0, 1, 2, TreeVariant::BranchedObukhov).unwrap();
        let s = TreeState { t: 0.0, u: vec![1.0, 1.0, 0.0] };
        assert_eq!(p.rhs_tree(&s).unwrap(), vec![-2.0, 2.0, 0.0]);

        let p = TreeParams::new(2.0, 2, 2, TreeVariant::BranchedObukhov).unwrap();
        let s = p.symmetric_state(&[1.0, 1.0, 0.0]);
        let du = p.rhs_tree(&s).unwrap();
        assert_eq!(du[0], -4.0);
        assert_eq!(&du[1..3], &[2.0, 2.0]);
        assert!(du[3..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn branched_kp_symmetric_reduction() {
        // Symmetric state (a, b, c) by generation on the 8-ary tree. By hand:
        //   root'       = -λ a (8b)
        //   child'      =  λ a^2 - λ^2 b (8c)
        //   grandchild' =  λ^2 b^2
        // i.e. linear KP with the child amplitude in the loss term scaled by d.
        let lam = 2f64.powf(2.5);
        let (a, b, c) = (0.7, -0.3, 0.2);
        let p = TreeParams::new(lam, 8, 2, TreeVariant::BranchedKp).unwrap();
        let du = p.rhs_tree(&p.symmetric_state(&[a, b, c])).unwrap();
        let expect = [-lam * a * (8.0 * b), lam * a * a - lam * lam * b * (8.0 * c), lam * lam * b * b];
        for j in 0..=2 {
            for i in p.level_range(j) {
                assert!((du[i] - expect[j]).abs() <= 1e-14 * expect[j].abs().max(1.0), "{j}: {} vs {}", du[i], expect[j]);
            }
        }
    }

    #[test]
    fn sobolev_examples() {
        let p = TreeParams::new(2.0, 2, 1, TreeVariant::BranchedObukhov).unwrap();
        assert_eq!(tree_sobolev_norm(&p, &[0.0, 1.0, 1.0], 1.0), 8f64.sqrt());
        assert_eq!(tree_sobolev_norm(&p, &[3.0, 0.0, 0.0], 4.5), 3.0);
        assert_eq!(tree_sobolev_norm(&p, &[0.0; 3], 1.0), 0.0);
    }

    #[test]
    fn picard_examples() {
        assert_eq!(picard_time(1.0, 1, 2.0, 1.0).unwrap(), 0.0625);
        let t8 = picard_time(1.0, 8, 2.0, 1.0).unwrap();
        assert!((t8 - 1.0 / (4.0 * 18f64.sqrt() * 2.0)).abs() < 1e-16);
        assert!((t8 - 0.0294628).abs() < 1e-7);
        let t = picard_time(3.0, 2, 2.0, 1.5).unwrap();
        assert!((picard_time(6.0, 2, 2.0, 1.5).unwrap() - t / 2.0).abs() < 1e-18);
        assert!(picard_time(0.0, 1, 2.0, 1.0).is_err());
        assert!(picard_time(-1.0, 1, 2.0, 1.0).is_err());
        assert!(picard_time(1.0, 1, 2.0, 0.5).is_err());
        assert!(picard_time(1e300, 1, 2.0, 1.0).unwrap() < 1e-300);
    }
}
