//! Case files, scenario presets and the end-to-end study pipeline.
//!
//! A case is one JSON document with the sections `network`, `wholesale`,
//! `loads`, `generators`, `bess`, `vre` and `config`. Node ids in the file
//! are external ids with the substation at 0; they are mapped to internal
//! ids when the case is built.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assets::{BessUnit, DemandBid, GeneratorOffer, Segment, VreUnit};
use crate::dlmp::{decompose, DlmpReport};
use crate::error::{Error, Result};
use crate::market::{
    clear_market, pricing_bundles, reprice, BessSchedule, ClearedMarket, GenSchedule, LoadSchedule, MarketCase,
    MarketConfig, TimeslotSchedule, VreForecast, VreSchedule,
};
use crate::network::{build_topology, LineParams, Network};
use crate::pep::{pep_schedule, History, PepResult};
use crate::solver::MilpSolver;

pub const SOLVER_TAG: &str = "HiGHS via highs 2.4";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpedanceUnit {
    #[default]
    PerUnit,
    /// Ohms, converted with `base_kv` and `base_mva`.
    Ohm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub capacity_mva: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub base_mva: f64,
    #[serde(default)]
    pub base_kv: Option<f64>,
    #[serde(default = "one")]
    pub v0: f64,
    #[serde(default)]
    pub impedance: ImpedanceUnit,
    pub lines: Vec<LineRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WholesaleSection {
    #[serde(default = "one")]
    pub dt_hours: f64,
    /// Substation real-power price per timeslot, $/MWh. Its length sets the horizon.
    pub lambda_p: Vec<f64>,
    /// Defaults to `reactive_ratio · lambda_p`.
    #[serde(default)]
    pub lambda_q: Option<Vec<f64>>,
    #[serde(default = "reactive_ratio")]
    pub reactive_ratio: f64,
}

/// Peak demand of one node, MW and MVAr.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeLoad {
    pub node: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    /// Hourly multiplier of the peak demand; all ones when absent.
    #[serde(default)]
    pub profile: Option<Vec<f64>>,
    /// Share of each segment, must-serve first.
    #[serde(default = "default_split")]
    pub split: Vec<f64>,
    /// Price range of every bid segment after the first, $/MWh.
    #[serde(default = "default_ranges")]
    pub bid_ranges: Vec<(f64, f64)>,
    #[serde(default = "reactive_ratio")]
    pub reactive_ratio: f64,
    #[serde(default)]
    pub seed: u64,
    /// Loads whose bids are drawn from `seed`.
    #[serde(default)]
    pub nodes: Vec<NodeLoad>,
    /// Loads with explicit bids.
    #[serde(default)]
    pub bids: Vec<DemandBid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    #[serde(default)]
    pub name: String,
    pub network: NetworkSection,
    pub wholesale: WholesaleSection,
    pub loads: LoadSection,
    #[serde(default)]
    pub generators: Vec<GeneratorOffer>,
    #[serde(default)]
    pub bess: Vec<BessUnit>,
    #[serde(default)]
    pub vre: Vec<VreUnit>,
    #[serde(default)]
    pub config: MarketConfig,
}

fn one() -> f64 {
    1.0
}

fn reactive_ratio() -> f64 {
    0.3
}

fn default_split() -> Vec<f64> {
    vec![0.5, 0.25, 0.25]
}

fn default_ranges() -> Vec<(f64, f64)> {
    vec![(13.8, 28.1), (10.3, 26.5)]
}

pub fn read_case_file(path: &Path) -> Result<CaseFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_case(&text, path)
}

/// Parses a case document; errors carry the field path and line/column.
pub fn parse_case(text: &str, origin: &Path) -> Result<CaseFile> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = if path == "." {
            format!("line {}, column {}: {inner}", inner.line(), inner.column())
        } else {
            format!("line {}, column {}: field `{path}`: {inner}", inner.line(), inner.column())
        };
        Error::Parse {
            path: origin.to_path_buf(),
            message,
        }
    })
}

/// Reads, builds and validates a case with the bid seed stored in the file.
pub fn load_case(path: &Path) -> Result<MarketCase> {
    read_case_file(path)?.build(None)
}

impl CaseFile {
    pub fn horizon(&self) -> usize {
        self.wholesale.lambda_p.len()
    }

    pub fn seed(&self) -> u64 {
        self.loads.seed
    }

    pub fn build_network(&self) -> Result<Network> {
        let n = &self.network;
        if !(n.base_mva > 0.0) {
            return Err(Error::Input("network.base_mva must be positive".into()));
        }
        let zbase = match n.impedance {
            ImpedanceUnit::PerUnit => 1.0,
            ImpedanceUnit::Ohm => {
                let kv = n
                    .base_kv
                    .filter(|&v| v > 0.0)
                    .ok_or_else(|| Error::Input("network.base_kv is required for ohmic impedances".into()))?;
                kv * kv / n.base_mva
            }
        };
        let lines: Vec<LineParams> = n
            .lines
            .iter()
            .map(|l| LineParams {
                index: l.to,
                upstream: l.from,
                r: l.r / zbase,
                x: l.x / zbase,
                capacity: l.capacity_mva / n.base_mva,
            })
            .collect();
        build_topology(&lines, n.v0)
    }

    /// Builds the market case; `seed` overrides the bid seed of the file.
    pub fn build(&self, seed: Option<u64>) -> Result<MarketCase> {
        let network = self.build_network()?;
        let horizon = self.horizon();
        let w = &self.wholesale;
        let lambda_q = match &w.lambda_q {
            Some(q) => q.clone(),
            None => w.lambda_p.iter().map(|p| p * w.reactive_ratio).collect(),
        };
        let internal = |ext: usize, field: String| -> Result<usize> {
            network
                .internal_id(ext)
                .filter(|&i| i > 0)
                .ok_or_else(|| Error::Input(format!("{field}: unknown or root node {ext}")))
        };

        let l = &self.loads;
        let profile = l.profile.clone().unwrap_or_else(|| vec![1.0; horizon]);
        if profile.len() != horizon {
            return Err(Error::Input(format!(
                "loads.profile has {} entries, expected {horizon}",
                profile.len()
            )));
        }
        let mut mapped = Vec::with_capacity(l.nodes.len());
        for (k, nl) in l.nodes.iter().enumerate() {
            let node = internal(nl.node, format!("loads.nodes[{k}].node"))?;
            mapped.push(NodeLoad { node, ..nl.clone() });
        }
        let mut loads = generate_bids(
            &mapped,
            &profile,
            &l.split,
            &l.bid_ranges,
            l.reactive_ratio,
            seed.unwrap_or(l.seed),
        )?;
        for (k, b) in l.bids.iter().enumerate() {
            let node = internal(b.node, format!("loads.bids[{k}].node"))?;
            loads.push(DemandBid { node, ..b.clone() });
        }
        // Reporting uses external ids, so keep load names tied to them.
        for (d, nl) in loads.iter_mut().zip(&l.nodes) {
            d.name = format!("L{}", nl.node);
        }

        let mut generators = Vec::with_capacity(self.generators.len());
        for (k, g) in self.generators.iter().enumerate() {
            let node = internal(g.node, format!("generators[{k}].node"))?;
            generators.push(GeneratorOffer { node, ..g.clone() });
        }
        let mut bess = Vec::with_capacity(self.bess.len());
        for (k, b) in self.bess.iter().enumerate() {
            let node = internal(b.node, format!("bess[{k}].node"))?;
            bess.push(BessUnit { node, ..b.clone() });
        }
        let mut vre = Vec::with_capacity(self.vre.len());
        for (k, u) in self.vre.iter().enumerate() {
            let node = internal(u.node, format!("vre[{k}].node"))?;
            vre.push(VreUnit { node, ..u.clone() });
        }

        let case = MarketCase {
            network,
            base_mva: self.network.base_mva,
            horizon,
            dt: w.dt_hours,
            lambda_p: w.lambda_p.clone(),
            lambda_q,
            loads,
            generators,
            bess,
            vre,
            config: self.config.clone(),
        };
        case.validate()?;
        Ok(case)
    }
}

/// Splits each node's demand into a must-serve segment and priced bid
/// segments, drawing one price per node, timeslot and segment from
/// `ranges` with a seeded generator. Reactive bids are `reactive_ratio`
/// times the real-power price and κ follows the node's power factor.
pub fn generate_bids(
    nodes: &[NodeLoad],
    profile: &[f64],
    split: &[f64],
    ranges: &[(f64, f64)],
    reactive_ratio: f64,
    seed: u64,
) -> Result<Vec<DemandBid>> {
    if split.len() != ranges.len() + 1 {
        return Err(Error::Input(format!(
            "{} load segments need {} bid ranges, got {}",
            split.len(),
            split.len().saturating_sub(1),
            ranges.len()
        )));
    }
    if split.iter().any(|&s| !(s >= 0.0)) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Input("load split must be nonnegative and sum to 1".into()));
    }
    if ranges.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::Input("bid ranges must be finite with low <= high".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(nodes.len());
    for nl in nodes {
        if !(nl.p_mw >= 0.0 && nl.q_mvar.is_finite()) {
            return Err(Error::Input(format!("node {} has invalid demand", nl.node)));
        }
        let kappa = if nl.p_mw > 0.0 { nl.q_mvar / nl.p_mw } else { 0.0 };
        let segments = profile
            .iter()
            .map(|&f| {
                let mut segs = vec![Segment {
                    price: 0.0,
                    cap: split[0] * nl.p_mw * f,
                    reactive_price: 0.0,
                }];
                for (w, &(lo, hi)) in ranges.iter().enumerate() {
                    let price = rng.gen_range(lo..=hi);
                    segs.push(Segment {
                        price,
                        cap: split[w + 1] * nl.p_mw * f,
                        reactive_price: reactive_ratio * price,
                    });
                }
                segs
            })
            .collect();
        out.push(DemandBid {
            name: format!("L{}", nl.node),
            node: nl.node,
            segments,
            kappa,
        });
    }
    Ok(out)
}

/// One study: scaling of load and VRE, probability level and BESS switch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub load_scale: f64,
    /// VRE output scale K; 0 removes the VRE units.
    pub vre_scale: f64,
    pub gamma: f64,
    pub bess: bool,
    /// Bid seed; the case file's seed when absent.
    pub seed: Option<u64>,
}

impl ScenarioSpec {
    /// Presets `I` to `IV`, optionally suffixed with `+bess`.
    pub fn preset(name: &str) -> Result<Self> {
        let (base, bess) = match name.trim().strip_suffix("+bess") {
            Some(b) => (b, true),
            None => (name.trim(), false),
        };
        let (load_scale, vre_scale) = match base.to_ascii_uppercase().as_str() {
            "I" | "1" => (2.0, 0.0),
            "II" | "2" => (2.0, 1.0),
            "III" | "3" => (1.0, 2.0),
            "IV" | "4" => (1.0, 4.0),
            other => return Err(Error::Input(format!("unknown scenario {other:?}; expected I, II, III or IV"))),
        };
        Ok(Self {
            name: name.trim().to_string(),
            load_scale,
            vre_scale,
            gamma: 0.75,
            bess,
            seed: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.load_scale > 0.0 && self.load_scale.is_finite()) {
            return Err(Error::Validation(format!("load scale must be positive, got {}", self.load_scale)));
        }
        if !(self.vre_scale >= 0.0 && self.vre_scale.is_finite()) {
            return Err(Error::Validation(format!("VRE scale must be nonnegative, got {}", self.vre_scale)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Validation(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }

    /// The case with this scenario's settings applied.
    pub fn apply(&self, file: &CaseFile) -> Result<MarketCase> {
        self.validate()?;
        let mut case = file.build(self.seed)?;
        case.config.load_scale = self.load_scale;
        case.config.vre_scale = self.vre_scale;
        case.config.gamma = self.gamma;
        if self.vre_scale == 0.0 {
            case.vre.clear();
        }
        if !self.bess {
            case.bess.clear();
        }
        case.validate()?;
        Ok(case)
    }
}

/// γ-efficient VRE availability per timeslot; empty when the case has no VRE.
pub fn vre_forecast(case: &MarketCase, history: &History) -> Result<(VreForecast, Vec<PepResult>)> {
    if case.vre.is_empty() {
        return Ok((VreForecast::default(), Vec::new()));
    }
    let sets = history.sample_sets()?;
    if sets.len() != case.horizon {
        return Err(Error::Validation(format!(
            "history covers {} hours but the horizon is {}",
            sets.len(),
            case.horizon
        )));
    }
    let results = pep_schedule(&sets, case.config.gamma)?;
    Ok((VreForecast::from_pep(&history.sites, &results), results))
}

/// Prices every node of a cleared market.
pub fn price(case: &MarketCase, cleared: &ClearedMarket) -> Result<DlmpReport> {
    let bundles = pricing_bundles(case, &cleared.points, &cleared.solution)?;
    decompose(
        &case.network,
        &cleared.duals.slots,
        &bundles,
        case.base_mva,
        case.config.voltage_orientation,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub objective: f64,
    /// Objective of the fixed-binary pricing LP.
    pub lp_objective: f64,
    /// Objective recomputed from the schedule and the bids.
    pub repriced_objective: f64,
    pub optimal: bool,
    pub substation_mwh: f64,
    pub vre_curtailed_mwh: f64,
    pub load_curtailed_mwh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub spec: ScenarioSpec,
    pub seed: u64,
    /// SHA-256 over the inputs and the price and schedule tables.
    pub digest: String,
    pub summary: RunSummary,
    pub dlmp_csv: Option<PathBuf>,
    pub schedule_csv: Option<PathBuf>,
    pub elapsed_s: f64,
    pub solver: String,
}

/// A run with everything it produced.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub record: RunRecord,
    pub case: MarketCase,
    pub forecast: VreForecast,
    pub pep: Vec<PepResult>,
    pub cleared: ClearedMarket,
    pub report: DlmpReport,
}

/// PEP, center sweep, clearing, duals and prices for one scenario.
/// Tables are written to `out_dir` when given.
pub fn run_scenario(
    spec: &ScenarioSpec,
    file: &CaseFile,
    history: &History,
    out_dir: Option<&Path>,
    solver: &dyn MilpSolver,
) -> Result<ScenarioRun> {
    let start = Instant::now();
    let case = spec.apply(file).map_err(|e| e.at("case"))?;
    let (forecast, pep) = vre_forecast(&case, history).map_err(|e| e.at("pep"))?;
    let cleared = clear_market(&case, &forecast, None, solver)?;
    let report = price(&case, &cleared).map_err(|e| e.at("dlmp"))?;

    let mut dlmp_bytes = Vec::new();
    report.write_csv(&mut dlmp_bytes).map_err(|e| e.at("output"))?;
    let mut sched_bytes = Vec::new();
    write_schedule_csv(&case, &cleared.solution.schedules, &mut sched_bytes).map_err(|e| e.at("output"))?;
    let mut hist_bytes = Vec::new();
    history.write_csv(&mut hist_bytes).map_err(|e| e.at("output"))?;

    let mut h = Sha256::new();
    h.update(serde_json::to_vec(file)?);
    h.update(serde_json::to_vec(spec)?);
    h.update(&hist_bytes);
    h.update(&dlmp_bytes);
    h.update(&sched_bytes);
    let digest = hex::encode(h.finalize());

    let sol = &cleared.solution;
    let dt = case.dt;
    let summary = RunSummary {
        objective: sol.objective,
        lp_objective: cleared.duals.lp_objective,
        repriced_objective: reprice(&case, &sol.schedules),
        optimal: sol.optimal,
        substation_mwh: sol.schedules.iter().map(|s| s.p0 * dt).sum(),
        vre_curtailed_mwh: (sol.total_vre_curtailment() * dt).max(0.0),
        load_curtailed_mwh: sol
            .schedules
            .iter()
            .flat_map(|s| s.loads.iter().map(|l| l.curtail * dt))
            .sum::<f64>()
            .max(0.0),
    };

    let (dlmp_csv, schedule_csv) = match out_dir {
        Some(dir) => {
            let write = || -> Result<(PathBuf, PathBuf)> {
                std::fs::create_dir_all(dir)?;
                let d = dir.join("dlmp.csv");
                let s = dir.join("schedule.csv");
                std::fs::write(&d, &dlmp_bytes)?;
                std::fs::write(&s, &sched_bytes)?;
                if !pep.is_empty() {
                    let f = std::fs::File::create(dir.join("pep.csv"))?;
                    write_pep_csv(&forecast.sites, &pep, f)?;
                }
                Ok((d, s))
            };
            let (d, s) = write().map_err(|e| e.at("output"))?;
            (Some(d), Some(s))
        }
        None => (None, None),
    };

    let record = RunRecord {
        scenario: spec.name.clone(),
        spec: spec.clone(),
        seed: spec.seed.unwrap_or(file.seed()),
        digest,
        summary,
        dlmp_csv,
        schedule_csv,
        elapsed_s: start.elapsed().as_secs_f64(),
        solver: SOLVER_TAG.into(),
    };
    if let Some(dir) = out_dir {
        let f = std::fs::File::create(dir.join("record.json")).map_err(|e| Error::from(e).at("output"))?;
        serde_json::to_writer_pretty(f, &record).map_err(|e| Error::from(e).at("output"))?;
    }
    log::info!(
        "scenario {} cleared in {:.2}s, objective {:.4}",
        spec.name,
        record.elapsed_s,
        record.summary.objective
    );
    Ok(ScenarioRun {
        record,
        case,
        forecast,
        pep,
        cleared,
        report,
    })
}

/// Ω_p and Ω_q of one node per timeslot and probability level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    pub gamma: f64,
    pub t: usize,
    pub omega_p: f64,
    pub omega_q: f64,
}

/// Runs `spec` once per γ, concurrently, and tabulates prices at `probe`
/// (external id).
pub fn sweep_confidence(
    spec: &ScenarioSpec,
    file: &CaseFile,
    history: &History,
    gammas: &[f64],
    probe: usize,
    solver: &dyn MilpSolver,
) -> Result<Vec<ConfidenceRow>> {
    if gammas.is_empty() {
        return Err(Error::Validation("confidence sweep needs at least one gamma".into()));
    }
    let runs = gammas
        .par_iter()
        .map(|&gamma| {
            let s = ScenarioSpec {
                gamma,
                name: format!("{}@{gamma}", spec.name),
                ..spec.clone()
            };
            run_scenario(&s, file, history, None, solver)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (run, &gamma) in runs.iter().zip(gammas) {
        let before = rows.len();
        for r in run.report.at_node(probe) {
            rows.push(ConfidenceRow {
                gamma,
                t: r.t,
                omega_p: r.p.total,
                omega_q: r.q.total,
            });
        }
        if rows.len() == before {
            return Err(Error::Validation(format!("probe node {probe} is not in the network")));
        }
    }
    Ok(rows)
}

pub fn write_confidence_csv<W: Write>(rows: &[ConfidenceRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_pep_csv<W: Write>(sites: &[String], results: &[PepResult], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "gamma", "site", "v_mw"])?;
    for (t, r) in results.iter().enumerate() {
        for (site, v) in sites.iter().zip(&r.v) {
            wr.write_record([t.to_string(), r.gamma.to_string(), site.clone(), v.to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Long-format schedule table: `t,kind,unit,field,value`.
pub fn write_schedule_csv<W: Write>(case: &MarketCase, schedules: &[TimeslotSchedule], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "kind", "unit", "field", "value"])?;
    let mut row = |t: usize, kind: &str, unit: &str, field: &str, v: f64| {
        wr.write_record([t.to_string().as_str(), kind, unit, field, v.to_string().as_str()])
    };
    for (t, s) in schedules.iter().enumerate() {
        for (f, v) in [("p0", s.p0), ("q0", s.q0), ("loss_p", s.loss_p), ("loss_q", s.loss_q)] {
            row(t, "substation", "0", f, v)?;
        }
        for (g, gs) in case.generators.iter().zip(&s.generators) {
            for (w, (p, q)) in gs.p.iter().zip(&gs.q).enumerate() {
                row(t, "gen", &g.name, &format!("p{w}"), *p)?;
                row(t, "gen", &g.name, &format!("q{w}"), *q)?;
            }
        }
        for (d, ls) in case.loads.iter().zip(&s.loads) {
            row(t, "load", &d.name, "must_serve", ls.must_serve)?;
            row(t, "load", &d.name, "curtail", ls.curtail)?;
            for (w, p) in ls.bids.iter().enumerate() {
                row(t, "load", &d.name, &format!("bid{}", w + 1), *p)?;
            }
        }
        for (b, bs) in case.bess.iter().zip(&s.bess) {
            row(t, "bess", &b.name, "charge", bs.charge)?;
            row(t, "bess", &b.name, "discharge", bs.discharge)?;
            row(t, "bess", &b.name, "soc", bs.soc)?;
            row(t, "bess", &b.name, "z_charge", f64::from(u8::from(bs.z_charge)))?;
            row(t, "bess", &b.name, "z_discharge", f64::from(u8::from(bs.z_discharge)))?;
        }
        for (u, vs) in case.vre.iter().zip(&s.vre) {
            row(t, "vre", &u.name, "available", vs.available)?;
            row(t, "vre", &u.name, "curtail", vs.curtail)?;
            row(t, "vre", &u.name, "q", vs.q)?;
        }
        for i in 0..s.net_p.len() {
            let node = case.network.external_id(i + 1).to_string();
            row(t, "node", &node, "net_p", s.net_p[i])?;
            row(t, "node", &node, "net_q", s.net_q[i])?;
            row(t, "node", &node, "voltage", s.voltage[i])?;
            row(t, "node", &node, "flow_p", s.flow_p[i])?;
            row(t, "node", &node, "flow_q", s.flow_q[i])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct ScheduleRow {
    t: usize,
    kind: String,
    unit: String,
    field: String,
    value: f64,
}

/// Reads a table written by [`write_schedule_csv`] back into schedules
/// shaped after `case`.
pub fn read_schedule_csv<R: Read>(case: &MarketCase, r: R, origin: &Path) -> Result<Vec<TimeslotSchedule>> {
    let n = case.network.n();
    let perr = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let blank = |t: usize| TimeslotSchedule {
        p0: 0.0,
        q0: 0.0,
        generators: case
            .generators
            .iter()
            .map(|g| GenSchedule {
                p: vec![0.0; g.segments.len()],
                q: vec![0.0; g.segments.len()],
            })
            .collect(),
        loads: case
            .loads
            .iter()
            .map(|d| LoadSchedule {
                must_serve: 0.0,
                curtail: 0.0,
                bids: vec![0.0; d.segments[t].len() - 1],
            })
            .collect(),
        bess: case
            .bess
            .iter()
            .map(|_| BessSchedule {
                charge: 0.0,
                discharge: 0.0,
                soc: 0.0,
                z_charge: false,
                z_discharge: false,
            })
            .collect(),
        vre: case
            .vre
            .iter()
            .map(|_| VreSchedule {
                available: 0.0,
                curtail: 0.0,
                q: 0.0,
            })
            .collect(),
        net_p: vec![0.0; n],
        net_q: vec![0.0; n],
        voltage: vec![0.0; n],
        flow_p: vec![0.0; n],
        flow_q: vec![0.0; n],
        loss_p: 0.0,
        loss_q: 0.0,
    };
    let mut out: Vec<TimeslotSchedule> = (0..case.horizon).map(blank).collect();
    let index = |names: Vec<&str>| -> HashMap<String, usize> {
        names.into_iter().enumerate().map(|(k, s)| (s.to_string(), k)).collect()
    };
    let gens = index(case.generators.iter().map(|g| g.name.as_str()).collect());
    let loads = index(case.loads.iter().map(|d| d.name.as_str()).collect());
    let bess = index(case.bess.iter().map(|b| b.name.as_str()).collect());
    let vre = index(case.vre.iter().map(|u| u.name.as_str()).collect());
    let seg = |field: &str, prefix: &str| field.strip_prefix(prefix).and_then(|s| s.parse::<usize>().ok());

    let mut rdr = csv::Reader::from_reader(r);
    for (i, row) in rdr.deserialize::<ScheduleRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| perr(format!("line {line}: {e}")))?;
        let bad = || perr(format!("line {line}: unknown {} entry {}/{}", row.kind, row.unit, row.field));
        let s = out.get_mut(row.t).ok_or_else(|| perr(format!("line {line}: timeslot {} out of range", row.t)))?;
        let v = row.value;
        let unit = |map: &HashMap<String, usize>| map.get(&row.unit).copied().ok_or_else(bad);
        let slot: &mut f64 = match row.kind.as_str() {
            "substation" => match row.field.as_str() {
                "p0" => &mut s.p0,
                "q0" => &mut s.q0,
                "loss_p" => &mut s.loss_p,
                "loss_q" => &mut s.loss_q,
                _ => return Err(bad()),
            },
            "gen" => {
                let g = &mut s.generators[unit(&gens)?];
                if let Some(w) = seg(&row.field, "p") {
                    g.p.get_mut(w).ok_or_else(bad)?
                } else if let Some(w) = seg(&row.field, "q") {
                    g.q.get_mut(w).ok_or_else(bad)?
                } else {
                    return Err(bad());
                }
            }
            "load" => {
                let l = &mut s.loads[unit(&loads)?];
                match row.field.as_str() {
                    "must_serve" => &mut l.must_serve,
                    "curtail" => &mut l.curtail,
                    f => {
                        let w = seg(f, "bid").filter(|&w| w >= 1).ok_or_else(bad)?;
                        l.bids.get_mut(w - 1).ok_or_else(bad)?
                    }
                }
            }
            "bess" => {
                let b = &mut s.bess[unit(&bess)?];
                match row.field.as_str() {
                    "charge" => &mut b.charge,
                    "discharge" => &mut b.discharge,
                    "soc" => &mut b.soc,
                    "z_charge" => {
                        b.z_charge = v > 0.5;
                        continue;
                    }
                    "z_discharge" => {
                        b.z_discharge = v > 0.5;
                        continue;
                    }
                    _ => return Err(bad()),
                }
            }
            "vre" => {
                let u = &mut s.vre[unit(&vre)?];
                match row.field.as_str() {
                    "available" => &mut u.available,
                    "curtail" => &mut u.curtail,
                    "q" => &mut u.q,
                    _ => return Err(bad()),
                }
            }
            "node" => {
                let ext: usize = row.unit.parse().map_err(|_| bad())?;
                let i = case.network.internal_id(ext).filter(|&i| i > 0).ok_or_else(bad)? - 1;
                match row.field.as_str() {
                    "net_p" => &mut s.net_p[i],
                    "net_q" => &mut s.net_q[i],
                    "voltage" => &mut s.voltage[i],
                    "flow_p" => &mut s.flow_p[i],
                    "flow_q" => &mut s.flow_q[i],
                    _ => return Err(bad()),
                }
            }
            _ => return Err(bad()),
        };
        *slot = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "name": "two-node",
        "network": {
            "base_mva": 1.0,
            "lines": [
                {"from": 0, "to": 1, "r": 0.01, "x": 0.02, "capacity_mva": 5.0},
                {"from": 1, "to": 2, "r": 0.01, "x": 0.02, "capacity_mva": 5.0}
            ]
        },
        "wholesale": {"lambda_p": [20.0, 30.0]},
        "loads": {"seed": 7, "nodes": [{"node": 2, "p_mw": 1.0, "q_mvar": 0.4}]},
        "generators": [{"name": "g", "node": 1, "p_min": 0.0, "p_max": 0.5, "kappa": 0.0,
                        "segments": [{"price": 25.0, "cap": 0.5, "reactive_price": 0.0}]}]
    }"#;

    fn tiny() -> CaseFile {
        parse_case(TINY, Path::new("tiny.json")).unwrap()
    }

    #[test]
    fn tutorial_case_builds() {
        let case = tiny().build(None).unwrap();
        assert_eq!(case.network.n(), 2);
        assert_eq!(case.horizon, 2);
        assert_eq!(case.lambda_q, vec![6.0, 9.0]);
        assert_eq!(case.loads.len(), 1);
        assert_eq!(case.generators.len(), 1);
        let d = &case.loads[0];
        assert_eq!(d.node, 2);
        assert!((d.kappa - 0.4).abs() < 1e-15);
        let caps: Vec<f64> = d.segments[0].iter().map(|s| s.cap).collect();
        assert_eq!(caps, vec![0.5, 0.25, 0.25]);
        for t in 0..2 {
            let s = &d.segments[t];
            assert!((13.8..=28.1).contains(&s[1].price));
            assert!((10.3..=26.5).contains(&s[2].price));
            assert!((s[1].reactive_price - 0.3 * s[1].price).abs() < 1e-12);
        }
    }

    #[test]
    fn bids_follow_the_seed() {
        let f = tiny();
        let a = f.build(None).unwrap();
        let b = f.build(None).unwrap();
        let c = f.build(Some(8)).unwrap();
        assert_eq!(a.loads, b.loads);
        assert_ne!(a.loads, c.loads);
    }

    #[test]
    fn malformed_json_reports_location() {
        let err = parse_case("{\n  \"network\": {\"base_mva\": 1.0,,}\n}", Path::new("bad.json")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.json") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = TINY.replace("\"p_mw\": 1.0", "\"p_mw\": \"lots\"");
        let msg = parse_case(&text, Path::new("c.json")).unwrap_err().to_string();
        assert!(msg.contains("loads.nodes[0].p_mw"), "{msg}");
        let text = TINY.replace("\"capacity_mva\": 5.0}\n", "\"capacity_mva\": 5.0, \"b\": 1}\n");
        let msg = parse_case(&text, Path::new("c.json")).unwrap_err().to_string();
        assert!(msg.contains("network.lines[1]") && msg.contains("unknown field"), "{msg}");
    }

    #[test]
    fn unknown_nodes_are_rejected() {
        let mut f = tiny();
        f.loads.nodes[0].node = 9;
        let msg = f.build(None).unwrap_err().to_string();
        assert!(msg.contains("loads.nodes[0].node"), "{msg}");
    }

    #[test]
    fn topology_errors_propagate() {
        let mut f = tiny();
        f.network.lines[1].from = 2;
        assert!(matches!(f.build(None), Err(Error::Topology(_))));
    }

    #[test]
    fn ohmic_impedances_use_the_base() {
        let mut f = tiny();
        f.network.impedance = ImpedanceUnit::Ohm;
        assert!(f.build(None).is_err());
        f.network.base_kv = Some(2.0);
        let net = f.build_network().unwrap();
        assert!((net.line(1).r - 0.01 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn presets() {
        let s = ScenarioSpec::preset("III+bess").unwrap();
        assert_eq!((s.load_scale, s.vre_scale, s.gamma, s.bess), (1.0, 2.0, 0.75, true));
        assert_eq!(ScenarioSpec::preset("i").unwrap().vre_scale, 0.0);
        assert!(ScenarioSpec::preset("V").is_err());
        let mut s = ScenarioSpec::preset("II").unwrap();
        s.gamma = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn generate_bids_checks_shapes() {
        let nodes = [NodeLoad {
            node: 1,
            p_mw: 1.0,
            q_mvar: 0.0,
        }];
        assert!(generate_bids(&nodes, &[1.0], &[0.5, 0.5], &[], 0.3, 0).is_err());
        assert!(generate_bids(&nodes, &[1.0], &[0.6, 0.6], &[(1.0, 2.0)], 0.3, 0).is_err());
        assert!(generate_bids(&nodes, &[1.0], &[0.5, 0.5], &[(3.0, 2.0)], 0.3, 0).is_err());
        let b = generate_bids(&nodes, &[1.0, 0.5], &[1.0], &[], 0.3, 0).unwrap();
        assert_eq!(b[0].segments[1][0].cap, 0.5);
    }
}
