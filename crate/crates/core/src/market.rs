//! The DSO day-ahead market: model assembly, clearing and dual extraction.
//!
//! Market quantities are in MW/MVAr while the network works in p.u. on
//! `base_mva`. Every network row (system balance, voltage band, line
//! limits) is the first-order model around a per-timeslot center point,
//! written as an affine function of the nodal net consumption.

use std::time::Duration;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assets::{
    bess_constraints, demand_constraints, gen_constraints, vre_constraints, BessUnit, BessVars, DemandBid,
    DemandVars, GenVars, GeneratorOffer, VreReactiveMode, VreUnit, VreVars,
};
use crate::dlmp::{flow_and_loss_sensitivities, SensitivityBundle, TimeslotDuals, VoltageOrientation};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::pep::PepResult;
use crate::powerflow::{linearized_voltages, sweep_power_flow, LossGradientMode, PfState, SweepOptions};
use crate::solver::{LinExpr, MilpSolver, Model, Row, Solution, SolveStatus, SolverOptions, Var};

/// How nodal injections enter the network rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Network rows written directly in the asset variables.
    #[default]
    Substituted,
    /// Free nodal injection variables tied to the assets by per-node
    /// balance rows, whose duals are the nodal prices.
    NodalBalance,
}

/// Operating point at which DLMP sensitivities are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityPoint {
    /// The center point the market's loss model was built at.
    #[default]
    Center,
    /// A fresh power flow at the cleared injections.
    Cleared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketConfig {
    /// Voltage band half-width, p.u.
    pub epsilon: f64,
    pub gamma: f64,
    /// Scenario-wide VRE scaling K.
    pub vre_scale: f64,
    pub load_scale: f64,
    /// Penalty on curtailed must-serve load, $/MWh.
    pub voll: f64,
    pub vre_reactive_mode: VreReactiveMode,
    pub loss_mode: LossGradientMode,
    /// Allow real power export to the transmission grid.
    pub allow_export: bool,
    pub formulation: Formulation,
    pub sensitivity_point: SensitivityPoint,
    pub voltage_orientation: VoltageOrientation,
    pub mip_rel_gap: f64,
    pub time_limit_s: Option<f64>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            gamma: 0.75,
            vre_scale: 1.0,
            load_scale: 1.0,
            voll: 1000.0,
            vre_reactive_mode: VreReactiveMode::Box,
            loss_mode: LossGradientMode::Center,
            allow_export: false,
            formulation: Formulation::Substituted,
            sensitivity_point: SensitivityPoint::Center,
            voltage_orientation: VoltageOrientation::Standard,
            mip_rel_gap: 1e-6,
            time_limit_s: None,
        }
    }
}

impl MarketConfig {
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            mip_rel_gap: self.mip_rel_gap,
            time_limit: self.time_limit_s.map(Duration::from_secs_f64),
            threads: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MarketCase {
    pub network: Network,
    pub base_mva: f64,
    pub horizon: usize,
    /// Interval length, h.
    pub dt: f64,
    pub lambda_p: Vec<f64>,
    pub lambda_q: Vec<f64>,
    pub loads: Vec<DemandBid>,
    pub generators: Vec<GeneratorOffer>,
    pub bess: Vec<BessUnit>,
    pub vre: Vec<VreUnit>,
    pub config: MarketConfig,
}

impl MarketCase {
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        if self.horizon == 0 {
            return Err(Error::Validation("horizon must be at least one timeslot".into()));
        }
        if !(self.dt > 0.0 && self.base_mva > 0.0) {
            return Err(Error::Validation("dt and base_mva must be positive".into()));
        }
        if !(c.epsilon > 0.0 && c.epsilon < 0.5) {
            return Err(Error::Validation(format!("epsilon must lie in (0, 0.5), got {}", c.epsilon)));
        }
        if !(c.gamma > 0.0 && c.gamma < 1.0) {
            return Err(Error::Validation(format!("gamma must lie in (0, 1), got {}", c.gamma)));
        }
        if !(c.vre_scale >= 0.0 && c.load_scale > 0.0 && c.voll >= 0.0) {
            return Err(Error::Validation("scales and penalties must be nonnegative".into()));
        }
        for (name, v) in [("lambda_p", &self.lambda_p), ("lambda_q", &self.lambda_q)] {
            if v.len() != self.horizon || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("{name} needs {} finite prices", self.horizon)));
            }
        }
        let n = self.network.n();
        let node_ok = |node: usize, what: &str| {
            if node == 0 || node > n {
                Err(Error::Validation(format!("{what} sits on unknown node {node}")))
            } else {
                Ok(())
            }
        };
        for d in &self.loads {
            node_ok(d.node, &d.name)?;
            d.validate(self.horizon)?;
        }
        for g in &self.generators {
            node_ok(g.node, &g.name)?;
            g.validate()?;
        }
        for b in &self.bess {
            node_ok(b.node, &b.name)?;
            b.validate()?;
        }
        for u in &self.vre {
            node_ok(u.node, &u.name)?;
            u.validate()?;
        }
        Ok(())
    }
}

/// Available VRE output per site and timeslot, MW, before scaling.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VreForecast {
    pub sites: Vec<String>,
    /// `v[t][site]`.
    pub v: Vec<Vec<f64>>,
}

impl VreForecast {
    pub fn from_pep(sites: &[String], results: &[PepResult]) -> Self {
        Self {
            sites: sites.to_vec(),
            v: results.iter().map(|r| r.v.clone()).collect(),
        }
    }

    /// Output available to `unit` at `t` including every scaling factor.
    pub fn available(&self, unit: &VreUnit, t: usize, k: f64) -> Result<f64> {
        let m = self
            .sites
            .iter()
            .position(|s| *s == unit.site)
            .ok_or_else(|| Error::Validation(format!("VRE {} refers to unknown site {}", unit.name, unit.site)))?;
        let row = self
            .v
            .get(t)
            .ok_or_else(|| Error::Validation(format!("VRE forecast has no timeslot {t}")))?;
        Ok(row[m] * unit.scale * k)
    }
}

/// Exogenous extra consumption per timeslot and node, MW.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtraLoads {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl ExtraLoads {
    pub fn zeros(horizon: usize, n: usize) -> Self {
        Self {
            p: vec![vec![0.0; n]; horizon],
            q: vec![vec![0.0; n]; horizon],
        }
    }
}

/// Linearization point of one timeslot.
#[derive(Clone, Debug)]
pub struct OperatingPoint {
    pub state: PfState,
    pub bundle: SensitivityBundle,
    /// Linear-model voltages at the center.
    pub v_lin: DVector<f64>,
}

pub fn operating_point(net: &Network, p: &DVector<f64>, q: &DVector<f64>, mode: LossGradientMode) -> Result<OperatingPoint> {
    let state = sweep_power_flow(net, p, q, SweepOptions::default())?;
    let bundle = flow_and_loss_sensitivities(net, &state, mode)?;
    let v_lin = linearized_voltages(net, p, q, &state.loss_p, &state.loss_q);
    Ok(OperatingPoint { state, bundle, v_lin })
}

/// Expected nodal consumption used as the Taylor center, p.u.: must-serve
/// load plus the first bid segment, minus available VRE output.
pub fn center_injections(case: &MarketCase, vre: &VreForecast, t: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = case.network.n();
    let s = case.config.load_scale / case.base_mva;
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for d in &case.loads {
        let segs = &d.segments[t];
        let mw: f64 = segs.iter().take(2).map(|x| x.cap).sum::<f64>() * s;
        p[d.node - 1] += mw;
        q[d.node - 1] += d.kappa * mw;
    }
    for u in &case.vre {
        p[u.node - 1] -= vre.available(u, t, case.config.vre_scale)? / case.base_mva;
    }
    Ok((p, q))
}

pub fn center_points(case: &MarketCase, vre: &VreForecast) -> Result<Vec<OperatingPoint>> {
    (0..case.horizon)
        .map(|t| {
            let (p, q) = center_injections(case, vre, t)?;
            operating_point(&case.network, &p, &q, case.config.loss_mode)
        })
        .collect()
}

/// Handles of one timeslot's variables and rows.
#[derive(Clone, Debug)]
pub struct TimeslotIndex {
    pub p0: Var,
    pub q0: Var,
    pub balance_p: Row,
    pub balance_q: Row,
    pub voltage: Vec<Row>,
    /// `P + Q` and `P − Q` rows per line.
    pub line_sum: Vec<Row>,
    pub line_diff: Vec<Row>,
    pub nodal_rows: Option<(Vec<Row>, Vec<Row>)>,
    /// Net consumption per node, MW.
    pub net_p: Vec<LinExpr>,
    pub net_q: Vec<LinExpr>,
    pub voltage_expr: Vec<LinExpr>,
    pub flow_p: Vec<LinExpr>,
    pub flow_q: Vec<LinExpr>,
    pub loss_p: LinExpr,
    pub loss_q: LinExpr,
    pub gens: Vec<GenVars>,
    pub loads: Vec<DemandVars>,
    pub vre: Vec<VreVars>,
}

#[derive(Clone, Debug)]
pub struct DamModel {
    pub model: Model,
    pub slots: Vec<TimeslotIndex>,
    pub bess: Vec<BessVars>,
    pub formulation: Formulation,
    pub dt: f64,
}

/// `base·(c + Σᵢ aᵢ (eᵢ/base − xᵢ*) + Σᵢ bᵢ (fᵢ/base − yᵢ*))` for MW
/// expressions `e`, `f`; `scale` = `base` for MW rows, 1 for p.u. rows.
#[allow(clippy::too_many_arguments)]
fn affine_row(
    c: f64,
    a: impl Fn(usize) -> f64,
    b: impl Fn(usize) -> f64,
    e: &[LinExpr],
    f: &[LinExpr],
    p_star: &DVector<f64>,
    q_star: &DVector<f64>,
    base: f64,
    scale: f64,
) -> LinExpr {
    let mut out = LinExpr::constant(scale * c);
    for i in 0..e.len() {
        let (ai, bi) = (a(i), b(i));
        if ai != 0.0 {
            out.add_scaled(&e[i], scale * ai / base);
            out.add_constant(-scale * ai * p_star[i]);
        }
        if bi != 0.0 {
            out.add_scaled(&f[i], scale * bi / base);
            out.add_constant(-scale * bi * q_star[i]);
        }
    }
    out
}

pub fn build_dam(
    case: &MarketCase,
    vre: &VreForecast,
    points: &[OperatingPoint],
    extra: Option<&ExtraLoads>,
) -> Result<DamModel> {
    case.validate()?;
    let net = &case.network;
    let n = net.n();
    let cfg = &case.config;
    let (dt, base) = (case.dt, case.base_mva);
    if points.len() != case.horizon {
        return Err(Error::Internal(format!("{} operating points for {} timeslots", points.len(), case.horizon)));
    }
    let mut m = Model::new();
    let bess: Vec<BessVars> = case.bess.iter().map(|b| bess_constraints(&mut m, b, case.horizon, dt)).collect();
    let mut slots = Vec::with_capacity(case.horizon);
    let s_lim = std::f64::consts::SQRT_2;

    for t in 0..case.horizon {
        let op = &points[t];
        let mut pe: Vec<LinExpr> = vec![LinExpr::new(); n];
        let mut qe: Vec<LinExpr> = vec![LinExpr::new(); n];
        let gens: Vec<GenVars> = case
            .generators
            .iter()
            .map(|g| {
                let v = gen_constraints(&mut m, g, t, dt);
                pe[g.node - 1].add_scaled(&v.p, 1.0);
                qe[g.node - 1].add_scaled(&v.q, 1.0);
                v
            })
            .collect();
        let loads: Vec<DemandVars> = case
            .loads
            .iter()
            .map(|d| {
                let v = demand_constraints(&mut m, d, t, dt, cfg.voll, cfg.load_scale);
                pe[d.node - 1].add_scaled(&v.p, 1.0);
                qe[d.node - 1].add_scaled(&v.q, 1.0);
                v
            })
            .collect();
        for (b, bv) in case.bess.iter().zip(&bess) {
            pe[b.node - 1].add_scaled(&bv.p[t], 1.0);
        }
        let mut vres = Vec::with_capacity(case.vre.len());
        for u in &case.vre {
            let avail = vre.available(u, t, cfg.vre_scale)?;
            let v = vre_constraints(&mut m, u, avail, t, dt, cfg.vre_reactive_mode);
            pe[u.node - 1].add_scaled(&v.p, 1.0);
            qe[u.node - 1].add_scaled(&v.q, 1.0);
            vres.push(v);
        }
        if let Some(x) = extra {
            for i in 0..n {
                pe[i].add_constant(x.p[t][i]);
                qe[i].add_constant(x.q[t][i]);
            }
        }
        let pe: Vec<LinExpr> = pe.iter().map(LinExpr::compact).collect();
        let qe: Vec<LinExpr> = qe.iter().map(LinExpr::compact).collect();

        let (net_p, net_q, nodal_rows) = match cfg.formulation {
            Formulation::Substituted => (pe.clone(), qe.clone(), None),
            Formulation::NodalBalance => {
                let mut vp = Vec::with_capacity(n);
                let mut vq = Vec::with_capacity(n);
                let mut rp = Vec::with_capacity(n);
                let mut rq = Vec::with_capacity(n);
                for i in 0..n {
                    let a = m.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0, format!("p[{},{t}]", i + 1));
                    let b = m.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0, format!("q[{},{t}]", i + 1));
                    let mut e = LinExpr::term(a, 1.0);
                    e.add_scaled(&pe[i], -1.0);
                    rp.push(m.add_eq(&e, 0.0, format!("nodal_p[{},{t}]", i + 1)));
                    let mut e = LinExpr::term(b, 1.0);
                    e.add_scaled(&qe[i], -1.0);
                    rq.push(m.add_eq(&e, 0.0, format!("nodal_q[{},{t}]", i + 1)));
                    vp.push(LinExpr::term(a, 1.0));
                    vq.push(LinExpr::term(b, 1.0));
                }
                (vp, vq, Some((rp, rq)))
            }
        };

        let st = &op.state;
        let fl = &op.bundle.flow_loss;
        let (ps, qs) = (&st.p_inj, &st.q_inj);
        let row = |c: f64, a: &dyn Fn(usize) -> f64, b: &dyn Fn(usize) -> f64, scale: f64| {
            affine_row(c, a, b, &net_p, &net_q, ps, qs, base, scale)
        };

        let p0 = m.add_var(
            if cfg.allow_export { f64::NEG_INFINITY } else { 0.0 },
            f64::INFINITY,
            case.lambda_p[t] * dt,
            format!("p0[{t}]"),
        );
        let q0 = m.add_var(f64::NEG_INFINITY, f64::INFINITY, case.lambda_q[t] * dt, format!("q0[{t}]"));

        let loss_p = row(
            st.loss_p.sum(),
            &|i| fl.dlp_dp.column(i).sum(),
            &|i| fl.dlp_dq.column(i).sum(),
            base,
        );
        let loss_q = row(
            st.loss_q.sum(),
            &|i| fl.dlq_dp.column(i).sum(),
            &|i| fl.dlq_dq.column(i).sum(),
            base,
        );
        let mut bal = LinExpr::term(p0, 1.0);
        for e in &net_p {
            bal.add_scaled(e, -1.0);
        }
        bal.add_scaled(&loss_p, -1.0);
        let balance_p = m.add_eq(&bal, 0.0, format!("balance_p[{t}]"));
        let mut bal = LinExpr::term(q0, 1.0);
        for e in &net_q {
            bal.add_scaled(e, -1.0);
        }
        bal.add_scaled(&loss_q, -1.0);
        let balance_q = m.add_eq(&bal, 0.0, format!("balance_q[{t}]"));

        let bd = &op.bundle;
        let mut voltage = Vec::with_capacity(n);
        let mut voltage_expr = Vec::with_capacity(n);
        for k in 0..n {
            let e = row(op.v_lin[k], &|i| bd.dv_dp[(k, i)], &|i| bd.dv_dq[(k, i)], 1.0);
            voltage.push(m.add_row(&e, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon, format!("voltage[{},{t}]", k + 1)));
            voltage_expr.push(e);
        }
        let mut line_sum = Vec::with_capacity(n);
        let mut line_diff = Vec::with_capacity(n);
        let mut flow_p = Vec::with_capacity(n);
        let mut flow_q = Vec::with_capacity(n);
        for j in 0..n {
            let fp = row(st.p_flow[j], &|i| fl.dpf_dp[(j, i)], &|i| fl.dpf_dq[(j, i)], base);
            let fq = row(st.q_flow[j], &|i| fl.dqf_dp[(j, i)], &|i| fl.dqf_dq[(j, i)], base);
            let lim = s_lim * net.line(j + 1).capacity * base;
            let mut s = fp.clone();
            s.add_scaled(&fq, 1.0);
            line_sum.push(m.add_row(&s, -lim, lim, format!("line_sum[{},{t}]", j + 1)));
            let mut d = fp.clone();
            d.add_scaled(&fq, -1.0);
            line_diff.push(m.add_row(&d, -lim, lim, format!("line_diff[{},{t}]", j + 1)));
            flow_p.push(fp);
            flow_q.push(fq);
        }
        slots.push(TimeslotIndex {
            p0,
            q0,
            balance_p,
            balance_q,
            voltage,
            line_sum,
            line_diff,
            nodal_rows,
            net_p: pe,
            net_q: qe,
            voltage_expr,
            flow_p,
            flow_q,
            loss_p,
            loss_q,
            gens,
            loads,
            vre: vres,
        });
    }
    Ok(DamModel {
        model: m,
        slots,
        bess,
        formulation: cfg.formulation,
        dt,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSchedule {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadSchedule {
    pub must_serve: f64,
    pub curtail: f64,
    /// Cleared bid segments `w > 1`.
    pub bids: Vec<f64>,
}

impl LoadSchedule {
    pub fn served(&self) -> f64 {
        self.must_serve - self.curtail + self.bids.iter().sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BessSchedule {
    pub charge: f64,
    pub discharge: f64,
    pub soc: f64,
    pub z_charge: bool,
    pub z_discharge: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VreSchedule {
    pub available: f64,
    pub curtail: f64,
    pub q: f64,
}

impl VreSchedule {
    pub fn output(&self) -> f64 {
        self.available - self.curtail
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeslotSchedule {
    pub p0: f64,
    pub q0: f64,
    pub generators: Vec<GenSchedule>,
    pub loads: Vec<LoadSchedule>,
    pub bess: Vec<BessSchedule>,
    pub vre: Vec<VreSchedule>,
    /// Net consumption per node, MW / MVAr.
    pub net_p: Vec<f64>,
    pub net_q: Vec<f64>,
    /// Linear-model voltages, p.u.
    pub voltage: Vec<f64>,
    pub flow_p: Vec<f64>,
    pub flow_q: Vec<f64>,
    pub loss_p: f64,
    pub loss_q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketSolution {
    pub objective: f64,
    pub optimal: bool,
    pub schedules: Vec<TimeslotSchedule>,
    pub x: Vec<f64>,
}

impl MarketSolution {
    pub fn total_vre_curtailment(&self) -> f64 {
        self.schedules.iter().flat_map(|s| s.vre.iter().map(|v| v.curtail)).sum()
    }
}

fn schedules(case: &MarketCase, dam: &DamModel, sol: &Solution) -> Vec<TimeslotSchedule> {
    let x = &sol.x;
    dam.slots
        .iter()
        .enumerate()
        .map(|(t, s)| TimeslotSchedule {
            p0: x[s.p0.0],
            q0: x[s.q0.0],
            generators: s
                .gens
                .iter()
                .map(|g| GenSchedule {
                    p: g.seg_p.iter().map(|v| x[v.0]).collect(),
                    q: g.seg_q.iter().map(|v| x[v.0]).collect(),
                })
                .collect(),
            loads: s
                .loads
                .iter()
                .zip(&case.loads)
                .map(|(d, bid)| LoadSchedule {
                    must_serve: bid.must_serve(t) * case.config.load_scale,
                    curtail: x[d.curtail.0],
                    bids: d.seg_p.iter().map(|v| x[v.0]).collect(),
                })
                .collect(),
            bess: dam
                .bess
                .iter()
                .map(|b| BessSchedule {
                    charge: x[b.charge[t].0],
                    discharge: x[b.discharge[t].0],
                    soc: x[b.soc[t].0],
                    z_charge: x[b.z_charge[t].0] > 0.5,
                    z_discharge: x[b.z_discharge[t].0] > 0.5,
                })
                .collect(),
            vre: s
                .vre
                .iter()
                .map(|v| VreSchedule {
                    available: v.available,
                    curtail: x[v.curtail.0],
                    q: x[v.q_out.0],
                })
                .collect(),
            net_p: s.net_p.iter().map(|e| e.value(x)).collect(),
            net_q: s.net_q.iter().map(|e| e.value(x)).collect(),
            voltage: s.voltage_expr.iter().map(|e| e.value(x)).collect(),
            flow_p: s.flow_p.iter().map(|e| e.value(x)).collect(),
            flow_q: s.flow_q.iter().map(|e| e.value(x)).collect(),
            loss_p: s.loss_p.value(x),
            loss_q: s.loss_q.value(x),
        })
        .collect()
}

pub fn clear(case: &MarketCase, dam: &DamModel, solver: &dyn MilpSolver) -> Result<MarketSolution> {
    let sol = solver.solve(&dam.model, &case.config.solver_options())?;
    Ok(MarketSolution {
        objective: sol.objective,
        optimal: sol.status == SolveStatus::Optimal,
        schedules: schedules(case, dam, &sol),
        x: sol.x,
    })
}

#[derive(Clone, Debug)]
pub struct Duals {
    pub slots: Vec<TimeslotDuals>,
    /// Objective of the LP with binaries fixed.
    pub lp_objective: f64,
}

/// Fixes the binaries at their cleared values, re-solves the LP and converts
/// its row duals to nonnegative multipliers per unit of energy.
pub fn extract_duals(case: &MarketCase, dam: &DamModel, sol: &MarketSolution, solver: &dyn MilpSolver) -> Result<Duals> {
    let lp = dam.model.fixed_binaries(&sol.x);
    let res = solver.solve(&lp, &case.config.solver_options()).map_err(|e| match e {
        Error::Infeasible(m) => Error::Internal(format!("fixed-binary LP infeasible: {m}")),
        other => other,
    })?;
    let y = res
        .row_duals
        .as_ref()
        .ok_or_else(|| Error::Internal("LP re-solve returned no duals".into()))?;
    let dt = dam.dt;
    let d = |r: Row| y[r.0] / dt;
    let slots = dam
        .slots
        .iter()
        .map(|s| {
            let split = |r: Row| {
                let v = d(r);
                (v.max(0.0), (-v).max(0.0))
            };
            let (mu_min, mu_max): (Vec<f64>, Vec<f64>) = s.voltage.iter().map(|&r| split(r)).unzip();
            let (rho_mm, rho_pp): (Vec<f64>, Vec<f64>) = s.line_sum.iter().map(|&r| split(r)).unzip();
            let (rho_mp, rho_pm): (Vec<f64>, Vec<f64>) = s.line_diff.iter().map(|&r| split(r)).unzip();
            TimeslotDuals {
                lambda_p: d(s.balance_p),
                lambda_q: d(s.balance_q),
                mu_min,
                mu_max,
                rho_pp,
                rho_mm,
                rho_pm,
                rho_mp,
                nodal_p: s.nodal_rows.as_ref().map(|(rp, _)| rp.iter().map(|&r| d(r)).collect()),
                nodal_q: s.nodal_rows.as_ref().map(|(_, rq)| rq.iter().map(|&r| d(r)).collect()),
            }
        })
        .collect();
    Ok(Duals {
        slots,
        lp_objective: res.objective,
    })
}

/// Sensitivities for pricing, at the point chosen by the configuration.
pub fn pricing_bundles(case: &MarketCase, points: &[OperatingPoint], sol: &MarketSolution) -> Result<Vec<SensitivityBundle>> {
    match case.config.sensitivity_point {
        SensitivityPoint::Center => Ok(points.iter().map(|p| p.bundle.clone()).collect()),
        SensitivityPoint::Cleared => sol
            .schedules
            .iter()
            .map(|s| {
                let p = DVector::from_iterator(s.net_p.len(), s.net_p.iter().map(|v| v / case.base_mva));
                let q = DVector::from_iterator(s.net_q.len(), s.net_q.iter().map(|v| v / case.base_mva));
                let st = sweep_power_flow(&case.network, &p, &q, SweepOptions::default())?;
                flow_and_loss_sensitivities(&case.network, &st, case.config.loss_mode)
            })
            .collect(),
    }
}

/// Objective recomputed from the cleared schedule and the bids alone.
pub fn reprice(case: &MarketCase, schedules: &[TimeslotSchedule]) -> f64 {
    let dt = case.dt;
    let mut total = 0.0;
    for (t, s) in schedules.iter().enumerate() {
        let mut o = case.lambda_p[t] * s.p0 + case.lambda_q[t] * s.q0;
        for (g, gs) in case.generators.iter().zip(&s.generators) {
            for ((seg, p), q) in g.segments.iter().zip(&gs.p).zip(&gs.q) {
                o += seg.price * p + seg.reactive_price * q;
            }
        }
        for (d, ls) in case.loads.iter().zip(&s.loads) {
            o += case.config.voll * ls.curtail;
            for (seg, p) in d.segments[t].iter().skip(1).zip(&ls.bids) {
                o -= seg.price * p + seg.reactive_price * d.kappa * p;
            }
        }
        for (b, bs) in case.bess.iter().zip(&s.bess) {
            o += b.discharge_price * bs.discharge - b.charge_price * bs.charge;
        }
        for (u, vs) in case.vre.iter().zip(&s.vre) {
            o += u.zeta * vs.curtail;
        }
        total += o * dt;
    }
    total
}

/// Everything produced by one market clearing.
#[derive(Clone, Debug)]
pub struct ClearedMarket {
    pub points: Vec<OperatingPoint>,
    pub dam: DamModel,
    pub solution: MarketSolution,
    pub duals: Duals,
}

/// Center points, model, clearing and duals in one call.
pub fn clear_market(
    case: &MarketCase,
    vre: &VreForecast,
    extra: Option<&ExtraLoads>,
    solver: &dyn MilpSolver,
) -> Result<ClearedMarket> {
    let points = center_points(case, vre).map_err(|e| e.at("center point"))?;
    let dam = build_dam(case, vre, &points, extra).map_err(|e| e.at("build"))?;
    let solution = clear(case, &dam, solver).map_err(|e| e.at("clear"))?;
    let duals = extract_duals(case, &dam, &solution, solver).map_err(|e| e.at("duals"))?;
    Ok(ClearedMarket {
        points,
        dam,
        solution,
        duals,
    })
}

/// Re-solves with fixed operating points and extra load; used for
/// finite-difference price checks.
pub fn resolve_with_extra(
    case: &MarketCase,
    vre: &VreForecast,
    points: &[OperatingPoint],
    extra: &ExtraLoads,
    solver: &dyn MilpSolver,
) -> Result<MarketSolution> {
    let dam = build_dam(case, vre, points, Some(extra))?;
    clear(case, &dam, solver)
}
