//! Market participants and the variables/constraints they contribute.
//!
//! Quantities are in MW / MVAr, prices in $/MWh / $/MVArh. Builders add
//! their costs to the model objective scaled by the interval length and
//! return the participant's net consumption as affine expressions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{LinExpr, Model, Var};

/// Price/quantity pair of a bid or offer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(default)]
    pub price: f64,
    pub cap: f64,
    #[serde(default)]
    pub reactive_price: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOffer {
    pub name: String,
    /// Internal node index.
    pub node: usize,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub p_min: f64,
    pub p_max: f64,
    /// Reactive capability as a fraction of real output.
    #[serde(default)]
    pub kappa: f64,
}

impl GeneratorOffer {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Validation(format!("generator {} has no segments", self.name)));
        }
        if self.segments.iter().any(|s| !(s.cap >= 0.0 && s.price.is_finite() && s.reactive_price.is_finite())) {
            return Err(Error::Validation(format!("generator {} has an invalid segment", self.name)));
        }
        let caps: f64 = self.segments.iter().map(|s| s.cap).sum();
        if !(self.p_min <= self.p_max) || caps < self.p_min {
            return Err(Error::Validation(format!(
                "generator {}: bounds [{}, {}] inconsistent with segment capacity {caps}",
                self.name, self.p_min, self.p_max
            )));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Validation(format!("generator {} has negative kappa", self.name)));
        }
        Ok(())
    }
}

/// Demand of one node. Segment 0 of every timeslot is must-serve load and
/// its price is ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandBid {
    pub name: String,
    pub node: usize,
    /// `segments[t][w]`.
    pub segments: Vec<Vec<Segment>>,
    /// Fixed reactive-to-real ratio.
    #[serde(default)]
    pub kappa: f64,
}

impl DemandBid {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.segments.len() != horizon {
            return Err(Error::Validation(format!(
                "load {} has {} timeslots, expected {horizon}",
                self.name,
                self.segments.len()
            )));
        }
        if self.segments.iter().any(|t| t.is_empty()) {
            return Err(Error::Validation(format!("load {} has an empty timeslot", self.name)));
        }
        if self
            .segments
            .iter()
            .flatten()
            .any(|s| !(s.cap >= 0.0 && s.price.is_finite() && s.reactive_price.is_finite()))
        {
            return Err(Error::Validation(format!("load {} has an invalid segment", self.name)));
        }
        if !(self.kappa.is_finite()) {
            return Err(Error::Validation(format!("load {} has invalid kappa", self.name)));
        }
        Ok(())
    }

    pub fn must_serve(&self, t: usize) -> f64 {
        self.segments[t][0].cap
    }

    pub fn total(&self, t: usize) -> f64 {
        self.segments[t].iter().map(|s| s.cap).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BessUnit {
    pub name: String,
    pub node: usize,
    pub e_min: f64,
    pub e_max: f64,
    pub e0: f64,
    /// Energy floor at the end of the horizon; defaults to `e_min`.
    #[serde(default)]
    pub e_final_min: Option<f64>,
    /// Smallest charge/discharge rate while active.
    #[serde(default)]
    pub p_min: f64,
    pub p_max: f64,
    /// Self-discharge retention per interval.
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub beta_discharge: f64,
    #[serde(default = "one")]
    pub beta_charge: f64,
    /// Price at which the unit sells (discharges).
    pub discharge_price: f64,
    /// Price at which the unit buys (charges).
    pub charge_price: f64,
}

fn one() -> f64 {
    1.0
}

impl BessUnit {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("BESS {}: {m}", self.name)));
        if !(self.e_min <= self.e0 && self.e0 <= self.e_max) {
            return bad("initial energy outside its bounds");
        }
        for b in [self.beta, self.beta_discharge, self.beta_charge] {
            if !(b > 0.0 && b <= 1.0) {
                return bad("efficiencies must lie in (0, 1]");
            }
        }
        if !(0.0 <= self.p_min && self.p_min <= self.p_max) {
            return bad("power bounds must satisfy 0 <= p_min <= p_max");
        }
        if let Some(f) = self.e_final_min {
            if !(f <= self.e_max) {
                return bad("terminal floor above capacity");
            }
        }
        Ok(())
    }
}

/// How the inverter's reactive output relates to real output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VreReactiveMode {
    Equality,
    #[default]
    Box,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VreUnit {
    pub name: String,
    pub node: usize,
    /// Historical site whose efficient point drives this unit.
    pub site: String,
    /// Unit scaling on top of the scenario-wide factor.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub kappa: f64,
    /// Curtailment penalty.
    #[serde(default = "default_zeta")]
    pub zeta: f64,
}

fn default_zeta() -> f64 {
    100.0
}

impl VreUnit {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.kappa >= 0.0 && self.zeta >= 0.0) {
            return Err(Error::Validation(format!("VRE {} has invalid parameters", self.name)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GenVars {
    pub seg_p: Vec<Var>,
    pub seg_q: Vec<Var>,
    /// Net consumption (negative of output).
    pub p: LinExpr,
    pub q: LinExpr,
}

/// Segments, total bounds and the reactive box `|q_w| ≤ κ p_w`.
pub fn gen_constraints(m: &mut Model, g: &GeneratorOffer, t: usize, dt: f64) -> GenVars {
    let mut p = LinExpr::new();
    let mut q = LinExpr::new();
    let mut total = LinExpr::new();
    let mut seg_p = Vec::new();
    let mut seg_q = Vec::new();
    for (w, s) in g.segments.iter().enumerate() {
        let pw = m.add_var(0.0, s.cap, s.price * dt, format!("pG[{},{w},{t}]", g.name));
        let qw = m.add_var(f64::NEG_INFINITY, f64::INFINITY, s.reactive_price * dt, format!("qG[{},{w},{t}]", g.name));
        let mut hi = LinExpr::term(qw, 1.0);
        hi.add(pw, -g.kappa);
        m.add_le(&hi, 0.0, format!("qG_hi[{},{w},{t}]", g.name));
        let mut lo = LinExpr::term(qw, 1.0);
        lo.add(pw, g.kappa);
        m.add_ge(&lo, 0.0, format!("qG_lo[{},{w},{t}]", g.name));
        total.add(pw, 1.0);
        p.add(pw, -1.0);
        q.add(qw, -1.0);
        seg_p.push(pw);
        seg_q.push(qw);
    }
    m.add_row(&total, g.p_min, g.p_max, format!("pG_total[{},{t}]", g.name));
    GenVars { seg_p, seg_q, p, q }
}

#[derive(Clone, Debug)]
pub struct DemandVars {
    /// Curtailed must-serve load.
    pub curtail: Var,
    /// Bid segments `w > 1`.
    pub seg_p: Vec<Var>,
    pub p: LinExpr,
    pub q: LinExpr,
}

/// Must-serve segment with a lost-load slack plus priced bid segments;
/// reactive demand follows `q = κ p`.
pub fn demand_constraints(m: &mut Model, d: &DemandBid, t: usize, dt: f64, voll: f64, scale: f64) -> DemandVars {
    let segs = &d.segments[t];
    let must = segs[0].cap * scale;
    let curtail = m.add_var(0.0, must, voll * dt, format!("yD[{},{t}]", d.name));
    let mut p = LinExpr::constant(must);
    p.add(curtail, -1.0);
    let mut seg_p = Vec::new();
    for (w, s) in segs.iter().enumerate().skip(1) {
        let cost = -(s.price + s.reactive_price * d.kappa) * dt;
        let v = m.add_var(0.0, s.cap * scale, cost, format!("pD[{},{w},{t}]", d.name));
        p.add(v, 1.0);
        seg_p.push(v);
    }
    let mut q = LinExpr::new();
    q.add_scaled(&p, d.kappa);
    DemandVars { curtail, seg_p, p, q }
}

#[derive(Clone, Debug)]
pub struct BessVars {
    pub charge: Vec<Var>,
    pub discharge: Vec<Var>,
    pub z_charge: Vec<Var>,
    pub z_discharge: Vec<Var>,
    /// Energy at the end of each interval.
    pub soc: Vec<Var>,
    /// Net consumption per interval.
    pub p: Vec<LinExpr>,
}

/// SOC recursion `e_{t+1} = β e_t + Δt (β̌ p̌_t − p̂_t / β̂)`, rate bounds
/// gated by binaries and charge/discharge mutual exclusion.
pub fn bess_constraints(m: &mut Model, b: &BessUnit, horizon: usize, dt: f64) -> BessVars {
    let mut out = BessVars {
        charge: Vec::new(),
        discharge: Vec::new(),
        z_charge: Vec::new(),
        z_discharge: Vec::new(),
        soc: Vec::new(),
        p: Vec::new(),
    };
    let mut prev: Option<Var> = None;
    for t in 0..horizon {
        let n = &b.name;
        let ch = m.add_var(0.0, b.p_max, -b.charge_price * dt, format!("pB_ch[{n},{t}]"));
        let dis = m.add_var(0.0, b.p_max, b.discharge_price * dt, format!("pB_dis[{n},{t}]"));
        let zc = m.add_binary(0.0, format!("zB_ch[{n},{t}]"));
        let zd = m.add_binary(0.0, format!("zB_dis[{n},{t}]"));
        for (p, z, tag) in [(ch, zc, "ch"), (dis, zd, "dis")] {
            let mut hi = LinExpr::term(p, 1.0);
            hi.add(z, -b.p_max);
            m.add_le(&hi, 0.0, format!("pB_{tag}_hi[{n},{t}]"));
            if b.p_min > 0.0 {
                let mut lo = LinExpr::term(p, 1.0);
                lo.add(z, -b.p_min);
                m.add_ge(&lo, 0.0, format!("pB_{tag}_lo[{n},{t}]"));
            }
        }
        let mut excl = LinExpr::term(zc, 1.0);
        excl.add(zd, 1.0);
        m.add_le(&excl, 1.0, format!("zB_excl[{n},{t}]"));

        let floor = if t + 1 == horizon {
            b.e_final_min.unwrap_or(b.e_min).max(b.e_min)
        } else {
            b.e_min
        };
        let e = m.add_var(floor, b.e_max, 0.0, format!("e[{n},{}]", t + 1));
        let mut rec = LinExpr::term(e, 1.0);
        match prev {
            Some(pe) => {
                rec.add(pe, -b.beta);
            }
            None => {
                rec.add_constant(-b.beta * b.e0);
            }
        }
        rec.add(ch, -dt * b.beta_charge);
        rec.add(dis, dt / b.beta_discharge);
        m.add_eq(&rec, 0.0, format!("soc[{n},{}]", t + 1));
        prev = Some(e);

        let mut p = LinExpr::term(ch, 1.0);
        p.add(dis, -1.0);
        out.charge.push(ch);
        out.discharge.push(dis);
        out.z_charge.push(zc);
        out.z_discharge.push(zd);
        out.soc.push(e);
        out.p.push(p);
    }
    out
}

#[derive(Clone, Debug)]
pub struct VreVars {
    pub curtail: Var,
    pub q_out: Var,
    pub available: f64,
    pub p: LinExpr,
    pub q: LinExpr,
}

/// Output `K v − y` with `0 ≤ y ≤ K v` and reactive output tied to the
/// real output by `mode`.
pub fn vre_constraints(
    m: &mut Model,
    u: &VreUnit,
    available: f64,
    t: usize,
    dt: f64,
    mode: VreReactiveMode,
) -> VreVars {
    let available = available.max(0.0);
    let y = m.add_var(0.0, available, u.zeta * dt, format!("yR[{},{t}]", u.name));
    let qr = m.add_var(0.0, f64::INFINITY, 0.0, format!("qR[{},{t}]", u.name));
    // q − κ (avail − y)
    let mut cap = LinExpr::term(qr, 1.0);
    cap.add(y, u.kappa);
    cap.add_constant(-u.kappa * available);
    match mode {
        VreReactiveMode::Box => m.add_le(&cap, 0.0, format!("qR_cap[{},{t}]", u.name)),
        VreReactiveMode::Equality => m.add_eq(&cap, 0.0, format!("qR_cap[{},{t}]", u.name)),
    };
    let mut p = LinExpr::term(y, 1.0);
    p.add_constant(-available);
    VreVars {
        curtail: y,
        q_out: qr,
        available,
        p,
        q: LinExpr::term(qr, -1.0),
    }
}
