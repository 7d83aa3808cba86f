//! Real and reactive DLMPs and their energy, loss, voltage and congestion
//! components.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::powerflow::{flow_loss_sensitivities, FlowLossSensitivities, LossGradientMode, PfState};

/// Flow, loss and voltage sensitivities to nodal injections (p.u./p.u.).
#[derive(Clone, Debug)]
pub struct SensitivityBundle {
    pub flow_loss: FlowLossSensitivities,
    /// `dv_dp[(k, i)] = ∂Vₖ/∂pᵢ`.
    pub dv_dp: DMatrix<f64>,
    pub dv_dq: DMatrix<f64>,
}

/// `∂V/∂p = −ℳp − ℳp·∂Lᴾ/∂p − ℳq·∂Lᑫ/∂p`, and likewise for `q`.
pub fn voltage_sensitivities(net: &Network, fl: &FlowLossSensitivities) -> (DMatrix<f64>, DMatrix<f64>) {
    let (mp, mq) = (net.m_p(), net.m_q());
    let dv_dp = -(mp + mp * &fl.dlp_dp + mq * &fl.dlq_dp);
    let dv_dq = -(mq + mq * &fl.dlq_dq + mp * &fl.dlp_dq);
    (dv_dp, dv_dq)
}

pub fn flow_and_loss_sensitivities(net: &Network, state: &PfState, mode: LossGradientMode) -> Result<SensitivityBundle> {
    let flow_loss = flow_loss_sensitivities(net, state, mode)?;
    let (dv_dp, dv_dq) = voltage_sensitivities(net, &flow_loss);
    Ok(SensitivityBundle { flow_loss, dv_dp, dv_dq })
}

/// Constraint multipliers of one timeslot in $/MWh-based units, all
/// bound multipliers nonnegative.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeslotDuals {
    pub lambda_p: f64,
    pub lambda_q: f64,
    pub mu_min: Vec<f64>,
    pub mu_max: Vec<f64>,
    pub rho_pp: Vec<f64>,
    pub rho_mm: Vec<f64>,
    pub rho_pm: Vec<f64>,
    pub rho_mp: Vec<f64>,
    /// Duals of explicit nodal balance rows, when the model has them.
    pub nodal_p: Option<Vec<f64>>,
    pub nodal_q: Option<Vec<f64>>,
}

impl TimeslotDuals {
    pub fn rho1(&self, j: usize) -> f64 {
        self.rho_pp[j] - self.rho_mm[j] + self.rho_pm[j] - self.rho_mp[j]
    }

    pub fn rho2(&self, j: usize) -> f64 {
        self.rho_pp[j] - self.rho_mm[j] - self.rho_pm[j] + self.rho_mp[j]
    }
}

/// Which index of `∂V` the voltage multipliers are summed over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoltageOrientation {
    /// `Σₖ μₖ ∂Vₖ/∂pᵢ`: the multiplier of node k weighs the response of V at k.
    #[default]
    Standard,
    /// `Σₖ μₖ ∂Vᵢ/∂pₖ`.
    Transposed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub total: f64,
    pub energy: f64,
    pub loss: f64,
    pub voltage: f64,
    pub congestion: f64,
}

impl Components {
    fn new(energy: f64, loss: f64, voltage: f64, congestion: f64) -> Self {
        Self {
            total: energy + loss + voltage + congestion,
            energy,
            loss,
            voltage,
            congestion,
        }
    }

    pub fn sum_of_parts(&self) -> f64 {
        self.energy + self.loss + self.voltage + self.congestion
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodePrice {
    /// External node id.
    pub node: usize,
    pub t: usize,
    pub p: Components,
    pub q: Components,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DlmpReport {
    pub rows: Vec<NodePrice>,
}

impl DlmpReport {
    pub fn get(&self, node: usize, t: usize) -> Option<&NodePrice> {
        self.rows.iter().find(|r| r.node == node && r.t == t)
    }

    pub fn at_node(&self, node: usize) -> impl Iterator<Item = &NodePrice> {
        self.rows.iter().filter(move |r| r.node == node)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "node", "t", "omega_p", "omega_p_energy", "omega_p_loss", "omega_p_voltage", "omega_p_congestion",
            "omega_q", "omega_q_energy", "omega_q_loss", "omega_q_voltage", "omega_q_congestion",
        ])?;
        for r in &self.rows {
            let mut rec = vec![r.node.to_string(), r.t.to_string()];
            for c in [&r.p, &r.q] {
                for v in [c.total, c.energy, c.loss, c.voltage, c.congestion] {
                    rec.push(format!("{v}"));
                }
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Prices of every node for one timeslot.
///
/// `base_mva` converts the per-unit voltage sensitivities into per-MW ones;
/// every other sensitivity is dimensionless.
pub fn decompose_timeslot(
    net: &Network,
    t: usize,
    duals: &TimeslotDuals,
    bundle: &SensitivityBundle,
    base_mva: f64,
    orientation: VoltageOrientation,
) -> Result<Vec<NodePrice>> {
    let n = net.n();
    let lens = [
        duals.mu_min.len(),
        duals.mu_max.len(),
        duals.rho_pp.len(),
        duals.rho_mm.len(),
        duals.rho_pm.len(),
        duals.rho_mp.len(),
    ];
    if lens.iter().any(|&l| l != n) {
        return Err(Error::Internal(format!("dual vectors do not match {n} nodes: {lens:?}")));
    }
    let fl = &bundle.flow_loss;
    let col_sum = |m: &DMatrix<f64>, i: usize| m.column(i).sum();
    let (lp, lq) = (duals.lambda_p, duals.lambda_q);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (mut vp, mut vq) = (0.0, 0.0);
        for k in 0..n {
            let w = duals.mu_max[k] - duals.mu_min[k];
            if w == 0.0 {
                continue;
            }
            let (a, b) = match orientation {
                VoltageOrientation::Standard => (bundle.dv_dp[(k, i)], bundle.dv_dq[(k, i)]),
                VoltageOrientation::Transposed => (bundle.dv_dp[(i, k)], bundle.dv_dq[(i, k)]),
            };
            vp += w * a / base_mva;
            vq += w * b / base_mva;
        }
        let (mut cp, mut cq) = (0.0, 0.0);
        for j in 0..n {
            let (r1, r2) = (duals.rho1(j), duals.rho2(j));
            if r1 == 0.0 && r2 == 0.0 {
                continue;
            }
            cp += r1 * fl.dpf_dp[(j, i)] + r2 * fl.dqf_dp[(j, i)];
            cq += r1 * fl.dpf_dq[(j, i)] + r2 * fl.dqf_dq[(j, i)];
        }
        let loss_p = lp * col_sum(&fl.dlp_dp, i) + lq * col_sum(&fl.dlq_dp, i);
        let loss_q = lq * col_sum(&fl.dlq_dq, i) + lp * col_sum(&fl.dlp_dq, i);
        out.push(NodePrice {
            node: net.external_id(i + 1),
            t,
            p: Components::new(lp, loss_p, vp, cp),
            q: Components::new(lq, loss_q, vq, cq),
        });
    }
    Ok(out)
}

pub fn decompose(
    net: &Network,
    duals: &[TimeslotDuals],
    bundles: &[SensitivityBundle],
    base_mva: f64,
    orientation: VoltageOrientation,
) -> Result<DlmpReport> {
    if duals.len() != bundles.len() {
        return Err(Error::Internal("one sensitivity bundle per timeslot is required".into()));
    }
    let mut rows = Vec::with_capacity(duals.len() * net.n());
    for (t, (d, b)) in duals.iter().zip(bundles).enumerate() {
        rows.extend(decompose_timeslot(net, t, d, b, base_mva, orientation)?);
    }
    Ok(DlmpReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_topology, LineParams};
    use crate::powerflow::{sweep_power_flow, SweepOptions};
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn chain() -> Network {
        let lines: Vec<_> = (1..=3)
            .map(|k| LineParams {
                index: k,
                upstream: k - 1,
                r: 0.01 * k as f64,
                x: 0.02,
                capacity: 1.0,
            })
            .collect();
        build_topology(&lines, 1.0).unwrap()
    }

    fn zero_duals(n: usize, lp: f64, lq: f64) -> TimeslotDuals {
        TimeslotDuals {
            lambda_p: lp,
            lambda_q: lq,
            mu_min: vec![0.0; n],
            mu_max: vec![0.0; n],
            rho_pp: vec![0.0; n],
            rho_mm: vec![0.0; n],
            rho_pm: vec![0.0; n],
            rho_mp: vec![0.0; n],
            nodal_p: None,
            nodal_q: None,
        }
    }

    #[test]
    fn lossless_voltage_sensitivity_is_minus_m() {
        let net = chain();
        let z = DVector::zeros(3);
        let st = sweep_power_flow(&net, &z, &z, SweepOptions::default()).unwrap();
        let b = flow_and_loss_sensitivities(&net, &st, LossGradientMode::Center).unwrap();
        assert_abs_diff_eq!(b.dv_dp, -net.m_p().clone(), epsilon = 1e-15);
        assert_abs_diff_eq!(b.dv_dq, -net.m_q().clone(), epsilon = 1e-15);
    }

    #[test]
    fn resistive_feeder_reactive_voltage_effect_is_loss_only() {
        let lines: Vec<_> = (1..=2)
            .map(|k| LineParams {
                index: k,
                upstream: k - 1,
                r: 0.02,
                x: 0.0,
                capacity: 1.0,
            })
            .collect();
        let net = build_topology(&lines, 1.0).unwrap();
        let p = DVector::from_vec(vec![0.1, 0.2]);
        let q = DVector::from_vec(vec![0.05, 0.1]);
        let st = sweep_power_flow(&net, &p, &q, SweepOptions::default()).unwrap();
        let b = flow_and_loss_sensitivities(&net, &st, LossGradientMode::Center).unwrap();
        let expect = -(net.m_p() * &b.flow_loss.dlp_dq);
        assert_abs_diff_eq!(b.dv_dq, expect, epsilon = 1e-15);
        assert!(b.dv_dq.iter().any(|v| v.abs() > 0.0));
    }

    #[test]
    fn zero_duals_collapse_to_energy_and_loss() {
        let net = chain();
        let p = DVector::from_vec(vec![0.2, 0.1, 0.3]);
        let q = DVector::from_vec(vec![0.1, 0.05, 0.1]);
        let st = sweep_power_flow(&net, &p, &q, SweepOptions::default()).unwrap();
        let b = flow_and_loss_sensitivities(&net, &st, LossGradientMode::Center).unwrap();
        let d = zero_duals(3, 30.0, 9.0);
        let rows = decompose_timeslot(&net, 0, &d, &b, 10.0, VoltageOrientation::Standard).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let gp: f64 = b.flow_loss.dlp_dp.column(i).sum();
            let gq: f64 = b.flow_loss.dlq_dp.column(i).sum();
            assert_eq!(r.p.voltage, 0.0);
            assert_eq!(r.p.congestion, 0.0);
            assert_abs_diff_eq!(r.p.total, 30.0 * (1.0 + gp) + 9.0 * gq, epsilon = 1e-12);
            assert_eq!(r.p.total, r.p.sum_of_parts());
        }
        // Farther nodes carry larger loss factors on a forward-flow chain.
        assert!(rows[2].p.loss > rows[1].p.loss && rows[1].p.loss > rows[0].p.loss);
    }

    #[test]
    fn congestion_uses_upstream_lines_only() {
        let lines = vec![
            LineParams { index: 1, upstream: 0, r: 0.01, x: 0.01, capacity: 1.0 },
            LineParams { index: 2, upstream: 1, r: 0.01, x: 0.01, capacity: 1.0 },
            LineParams { index: 3, upstream: 1, r: 0.01, x: 0.01, capacity: 1.0 },
        ];
        let net = build_topology(&lines, 1.0).unwrap();
        let p = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let q = DVector::from_vec(vec![0.0, 0.1, 0.1]);
        let st = sweep_power_flow(&net, &p, &q, SweepOptions::default()).unwrap();
        let b = flow_and_loss_sensitivities(&net, &st, LossGradientMode::Center).unwrap();
        let mut d = zero_duals(3, 0.0, 0.0);
        d.rho_pp[1] = 5.0; // line 2 at its P+Q limit
        let rows = decompose_timeslot(&net, 0, &d, &b, 1.0, VoltageOrientation::Standard).unwrap();
        // Node 2 is a leaf: ∂P₂/∂p₂ = 1 and ∂Q₂/∂p₂ = 0.
        assert_abs_diff_eq!(rows[1].p.congestion, 5.0, epsilon = 1e-15);
        assert_eq!(rows[2].p.congestion, 0.0);
        assert_eq!(rows[0].p.congestion, 0.0);
    }

    #[test]
    fn dual_length_mismatch_is_an_error() {
        let net = chain();
        let z = DVector::zeros(3);
        let st = sweep_power_flow(&net, &z, &z, SweepOptions::default()).unwrap();
        let b = flow_and_loss_sensitivities(&net, &st, LossGradientMode::Center).unwrap();
        let d = zero_duals(2, 1.0, 1.0);
        assert!(decompose_timeslot(&net, 0, &d, &b, 1.0, VoltageOrientation::Standard).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = DlmpReport {
            rows: vec![NodePrice {
                node: 2,
                t: 0,
                p: Components::new(1.0, 0.5, 0.0, 0.0),
                q: Components::new(0.3, 0.0, 0.0, 0.0),
            }],
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("node,t,omega_p,"));
        assert!(s.lines().nth(1).unwrap().starts_with("2,0,1.5,1,0.5,"));
    }
}
