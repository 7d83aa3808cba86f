//! Radial feeder model.
//!
//! Nodes and lines share one index: line `k` connects node `k` to its
//! upstream node, and the root (substation) is node 0. Internally nodes are
//! numbered so that every parent has a smaller index than its children, which
//! lets the subtree matrices be accumulated in a single reverse pass.
//!
//! All matrices are dense and indexed from zero: row/column `k - 1` belongs to
//! node (and line) `k`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electrical parameters of the line feeding node `index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    /// Downstream node id, which is also the line id.
    pub index: usize,
    /// Upstream node id (0 is the substation).
    pub upstream: usize,
    /// Resistance, p.u.
    pub r: f64,
    /// Reactance, p.u.
    pub x: f64,
    /// Apparent power limit, p.u.
    pub capacity: f64,
}

impl LineParams {
    fn validate(&self) -> Result<()> {
        let finite = self.r.is_finite() && self.x.is_finite() && self.capacity.is_finite();
        if !finite || self.r < 0.0 || self.x < 0.0 {
            return Err(Error::Input(format!(
                "line {}: r and x must be finite and nonnegative",
                self.index
            )));
        }
        if self.r + self.x <= 0.0 {
            return Err(Error::Input(format!(
                "line {}: zero impedance makes Z singular",
                self.index
            )));
        }
        if self.capacity <= 0.0 {
            return Err(Error::Input(format!(
                "line {}: capacity must be positive",
                self.index
            )));
        }
        if self.index == 0 {
            return Err(Error::Input("node 0 is the substation and has no line".into()));
        }
        Ok(())
    }
}

/// Immutable radial network with its incidence and sensitivity matrices.
#[derive(Clone, Debug)]
pub struct Network {
    n: usize,
    v0: f64,
    /// `lines[k - 1]` feeds internal node `k`; `index`/`upstream` are internal ids.
    lines: Vec<LineParams>,
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    external: Vec<usize>,
    internal: HashMap<usize, usize>,
    upstream: DMatrix<f64>,
    downstream: DMatrix<f64>,
    z_v: DMatrix<f64>,
    m_p: DMatrix<f64>,
    m_q: DMatrix<f64>,
}

impl Network {
    /// Number of non-root nodes, which equals the number of lines.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Substation voltage magnitude, p.u.
    pub fn v0(&self) -> f64 {
        self.v0
    }

    /// Lines in internal order; `lines()[k - 1]` feeds node `k`.
    pub fn lines(&self) -> &[LineParams] {
        &self.lines
    }

    pub fn line(&self, node: usize) -> &LineParams {
        &self.lines[node - 1]
    }

    /// Immediate upstream node `u(i)`.
    pub fn parent(&self, node: usize) -> usize {
        self.parent[node]
    }

    /// Immediate children of `node` (node 0 allowed).
    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Number of lines between `node` and the substation.
    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    /// Nodes in the strict downstream subtree `d{i}`.
    pub fn descendants(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.children[node].iter().rev().copied().collect();
        while let Some(k) = stack.pop() {
            out.push(k);
            stack.extend(self.children[k].iter().rev());
        }
        out
    }

    /// Lines on the path from `node` to the substation, nearest first.
    pub fn path_to_root(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.depth[node]);
        let mut k = node;
        while k != 0 {
            out.push(k);
            k = self.parent[k];
        }
        out
    }

    pub fn external_id(&self, node: usize) -> usize {
        self.external[node]
    }

    pub fn internal_id(&self, external: usize) -> Option<usize> {
        self.internal.get(&external).copied()
    }

    /// True when internal and external numbering coincide.
    pub fn is_identity_numbering(&self) -> bool {
        self.external.iter().enumerate().all(|(i, &e)| i == e)
    }

    /// Upstream node-to-line incidence `𝒰`.
    pub fn upstream(&self) -> &DMatrix<f64> {
        &self.upstream
    }

    /// Downstream incidence `𝒟` with unit diagonal.
    pub fn downstream(&self) -> &DMatrix<f64> {
        &self.downstream
    }

    /// Top `N × 2N` block of `Z⁻¹`.
    pub fn z_v(&self) -> &DMatrix<f64> {
        &self.z_v
    }

    /// Voltage sensitivity to real injections plus losses.
    pub fn m_p(&self) -> &DMatrix<f64> {
        &self.m_p
    }

    /// Voltage sensitivity to reactive injections plus losses.
    pub fn m_q(&self) -> &DMatrix<f64> {
        &self.m_q
    }

    pub fn resistances(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, self.lines.iter().map(|l| l.r))
    }

    pub fn reactances(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, self.lines.iter().map(|l| l.x))
    }
}

/// Builds the network from a line list rooted at external node 0.
///
/// Input that already satisfies "ids are `1..=N` and every parent id is
/// smaller than its child" keeps its numbering. Anything else is renumbered
/// in depth-first preorder and the external ids are kept for reporting.
pub fn build_topology(lines: &[LineParams], v0: f64) -> Result<Network> {
    if !(v0.is_finite() && v0 > 0.0) {
        return Err(Error::Input(format!("substation voltage {v0} is not positive")));
    }
    if lines.is_empty() {
        return Err(Error::Topology("network has no lines".into()));
    }
    let mut by_index: HashMap<usize, &LineParams> = HashMap::with_capacity(lines.len());
    for line in lines {
        line.validate()?;
        if by_index.insert(line.index, line).is_some() {
            return Err(Error::Input(format!("duplicate line index {}", line.index)));
        }
    }

    // Every node has exactly one upstream pointer; walk them to find cycles and orphans.
    for line in lines {
        let mut seen = vec![line.index];
        let mut k = line.upstream;
        while k != 0 {
            if seen.contains(&k) {
                return Err(Error::Topology(format!(
                    "cycle through node {} (path {:?})",
                    k, seen
                )));
            }
            seen.push(k);
            match by_index.get(&k) {
                Some(l) => k = l.upstream,
                None => {
                    return Err(Error::Topology(format!(
                        "node {} has no path to the substation (upstream {} undefined)",
                        line.index, k
                    )))
                }
            }
        }
    }

    let n = lines.len();
    let identity = (1..=n).all(|k| by_index.get(&k).is_some_and(|l| l.upstream < k));

    let mut ext_children: HashMap<usize, Vec<usize>> = HashMap::new();
    for line in lines {
        ext_children.entry(line.upstream).or_default().push(line.index);
    }
    for c in ext_children.values_mut() {
        c.sort_unstable();
    }

    let external: Vec<usize> = if identity {
        (0..=n).collect()
    } else {
        let mut order = Vec::with_capacity(n + 1);
        let mut stack = vec![0usize];
        while let Some(k) = stack.pop() {
            order.push(k);
            if let Some(ch) = ext_children.get(&k) {
                stack.extend(ch.iter().rev());
            }
        }
        order
    };
    if external.len() != n + 1 {
        return Err(Error::Topology("network is not connected to node 0".into()));
    }
    let internal: HashMap<usize, usize> =
        external.iter().enumerate().map(|(i, &e)| (e, i)).collect();

    let mut parent = vec![usize::MAX; n + 1];
    let mut children = vec![Vec::new(); n + 1];
    let mut depth = vec![0usize; n + 1];
    let mut int_lines = Vec::with_capacity(n);
    for k in 1..=n {
        let line = by_index[&external[k]];
        let up = internal[&line.upstream];
        debug_assert!(up < k);
        parent[k] = up;
        children[up].push(k);
        depth[k] = depth[up] + 1;
        int_lines.push(LineParams {
            index: k,
            upstream: up,
            ..line.clone()
        });
    }

    let mut upstream = DMatrix::zeros(n, n);
    for i in 1..=n {
        let mut k = i;
        while k != 0 {
            upstream[(i - 1, k - 1)] = 1.0;
            k = parent[k];
        }
    }
    // One reverse pass: each row of 𝒟 is the node itself plus its children's rows.
    let mut downstream = DMatrix::zeros(n, n);
    for i in (1..=n).rev() {
        downstream[(i - 1, i - 1)] = 1.0;
        for &c in &children[i] {
            for j in 0..n {
                if downstream[(c - 1, j)] != 0.0 {
                    downstream[(i - 1, j)] = 1.0;
                }
            }
        }
    }

    let (_, _, z_v) = impedance_blocks(&int_lines)?;
    let (m_p, m_q) = sensitivity_from_parts(&upstream, &downstream, &z_v);

    Ok(Network {
        n,
        v0,
        lines: int_lines,
        parent,
        children,
        depth,
        external,
        internal,
        upstream,
        downstream,
        z_v,
        m_p,
        m_q,
    })
}

/// Returns `(Z, Z⁻¹, Z_V)` for the given lines in the order supplied.
///
/// `Z = [[Zr, Zx], [Zx, -Zr]]` with `Zrᵢ = rᵢ/(rᵢ²+xᵢ²)` and
/// `Zxᵢ = xᵢ/(rᵢ²+xᵢ²)`. Each 2×2 line block inverts to `[[r, x], [x, -r]]`,
/// so `Z⁻¹` is assembled in closed form.
pub fn impedance_blocks(lines: &[LineParams]) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = lines.len();
    let mut z = DMatrix::zeros(2 * n, 2 * n);
    let mut z_inv = DMatrix::zeros(2 * n, 2 * n);
    for (k, line) in lines.iter().enumerate() {
        let mag2 = line.r * line.r + line.x * line.x;
        if mag2 == 0.0 || !mag2.is_finite() {
            return Err(Error::Input(format!(
                "line {}: r = x = 0 makes Z singular",
                line.index
            )));
        }
        let zr = line.r / mag2;
        let zx = line.x / mag2;
        z[(k, k)] = zr;
        z[(k, n + k)] = zx;
        z[(n + k, k)] = zx;
        z[(n + k, n + k)] = -zr;
        z_inv[(k, k)] = line.r;
        z_inv[(k, n + k)] = line.x;
        z_inv[(n + k, k)] = line.x;
        z_inv[(n + k, n + k)] = -line.r;
    }
    let z_v = z_inv.rows(0, n).into_owned();
    Ok((z, z_inv, z_v))
}

/// `[ℳp ℳq] = 𝒰 · Z_V · blockdiag(𝒟, 𝒟)`.
pub fn sensitivity_matrices(net: &Network) -> (DMatrix<f64>, DMatrix<f64>) {
    (net.m_p.clone(), net.m_q.clone())
}

fn sensitivity_from_parts(
    upstream: &DMatrix<f64>,
    downstream: &DMatrix<f64>,
    z_v: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = upstream.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(downstream);
    block.view_mut((n, n), (n, n)).copy_from(downstream);
    let m = upstream * z_v * block;
    (m.columns(0, n).into_owned(), m.columns(n, n).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(index: usize, upstream: usize, r: f64, x: f64) -> LineParams {
        LineParams {
            index,
            upstream,
            r,
            x,
            capacity: 1.0,
        }
    }

    #[test]
    fn two_line_chain_incidence() {
        let net = build_topology(&[line(1, 0, 0.1, 0.1), line(2, 1, 0.1, 0.1)], 1.0).unwrap();
        assert_eq!(net.upstream(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        assert_eq!(net.downstream(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]));
        assert_eq!(net.parent(2), 1);
        assert_eq!(net.descendants(0), vec![1, 2]);
    }

    #[test]
    fn two_way_edge_is_a_cycle() {
        let err = build_topology(&[line(2, 1, 0.1, 0.1), line(1, 2, 0.1, 0.1)], 1.0).unwrap_err();
        assert!(matches!(err, Error::Topology(ref m) if m.contains("cycle")), "{err}");
    }

    #[test]
    fn orphan_is_rejected() {
        let err = build_topology(&[line(1, 0, 0.1, 0.1), line(3, 2, 0.1, 0.1)], 1.0).unwrap_err();
        assert!(matches!(err, Error::Topology(_)), "{err}");
    }

    #[test]
    fn duplicate_index_is_input_error() {
        let err = build_topology(&[line(1, 0, 0.1, 0.1), line(1, 0, 0.2, 0.1)], 1.0).unwrap_err();
        assert!(matches!(err, Error::Input(_)), "{err}");
    }

    #[test]
    fn zero_impedance_is_rejected() {
        let err = build_topology(&[line(1, 0, 0.0, 0.0)], 1.0).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn single_resistive_line() {
        let (z, z_inv, _) = impedance_blocks(&[line(1, 0, 1.0, 0.0)]).unwrap();
        assert_eq!(z, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert_eq!(z_inv, z);
        let net = build_topology(&[line(1, 0, 1.0, 0.0)], 1.0).unwrap();
        assert_eq!(net.m_p()[(0, 0)], 1.0);
        assert_eq!(net.m_q()[(0, 0)], 0.0);
    }

    #[test]
    fn three_four_five_line() {
        let (z, _, _) = impedance_blocks(&[line(1, 0, 3.0, 4.0)]).unwrap();
        assert_abs_diff_eq!(z[(0, 0)], 3.0 / 25.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[(0, 1)], 4.0 / 25.0, epsilon = 1e-15);
    }

    #[test]
    fn renumbers_when_parent_follows_child() {
        // 0 - 5 - 2 - 7, plus 0 - 3
        let lines = [
            line(2, 5, 0.1, 0.1),
            line(5, 0, 0.2, 0.1),
            line(7, 2, 0.3, 0.1),
            line(3, 0, 0.4, 0.1),
        ];
        let net = build_topology(&lines, 1.0).unwrap();
        assert!(!net.is_identity_numbering());
        for k in 1..=net.n() {
            assert!(net.parent(k) < k);
        }
        let k7 = net.internal_id(7).unwrap();
        assert_eq!(net.external_id(net.parent(k7)), 2);
        assert_eq!(net.line(k7).r, 0.3);
        assert_eq!(net.depth(k7), 3);
    }

    #[test]
    fn keeps_valid_numbering() {
        let net = build_topology(&[line(1, 0, 0.1, 0.1), line(2, 0, 0.1, 0.1), line(3, 1, 0.1, 0.1)], 1.0)
            .unwrap();
        assert!(net.is_identity_numbering());
        assert_eq!(net.children(1), &[3]);
    }
}
