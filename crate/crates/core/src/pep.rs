//! γ-efficient points of the VRE output distribution from historical samples.
//!
//! For a probability level γ, a selection of whole samples with total
//! probability at least γ is chosen so that the sum over sites of the
//! elementwise maximum is minimal. Ties are broken towards the
//! lexicographically smallest selection vector (sample 1 most significant,
//! unselected before selected).

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{LinExpr, MilpSolver, Model, SolverOptions};

/// Slack on the probability constraint, shared by every solver here.
pub const PROB_TOL: f64 = 1e-9;
/// Totals closer than this count as ties.
pub const TIE_TOL: f64 = 1e-9;
/// Largest sample count the subset-enumeration oracle accepts.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub sites: Vec<String>,
    /// `values[s][m]`: output of site `m` in sample `s`, MW.
    pub values: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
}

impl SampleSet {
    /// Samples with uniform probabilities.
    pub fn uniform(sites: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Input("sample set is empty".into()));
        }
        Self::new(sites, values, vec![1.0 / n as f64; n])
    }

    pub fn new(sites: Vec<String>, values: Vec<Vec<f64>>, probabilities: Vec<f64>) -> Result<Self> {
        let s = Self {
            sites,
            values,
            probabilities,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Input("sample set is empty".into()));
        }
        if self.probabilities.len() != self.values.len() {
            return Err(Error::Input("one probability per sample is required".into()));
        }
        let r = self.sites.len();
        for (s, row) in self.values.iter().enumerate() {
            if row.len() != r {
                return Err(Error::Input(format!("sample {s} has {} values for {r} sites", row.len())));
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Input(format!("sample {s} has a negative or non-finite value")));
            }
        }
        if self.probabilities.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Input("sample probabilities must be positive".into()));
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("sample probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// Elementwise maximum over the selected samples.
    pub fn envelope(&self, selected: &[bool]) -> Vec<f64> {
        let mut v = vec![0.0f64; self.n_sites()];
        for (row, _) in self.values.iter().zip(selected).filter(|(_, &z)| z) {
            for (vm, &x) in v.iter_mut().zip(row) {
                *vm = vm.max(x);
            }
        }
        v
    }

    fn selected_probability(&self, selected: &[bool]) -> f64 {
        self.probabilities.iter().zip(selected).filter(|(_, &z)| z).map(|(p, _)| p).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PepResult {
    pub gamma: f64,
    pub v: Vec<f64>,
    pub selected: Vec<bool>,
    pub total: f64,
}

impl PepResult {
    fn from_selection(samples: &SampleSet, gamma: f64, selected: Vec<bool>) -> Self {
        let v = samples.envelope(&selected);
        let total = v.iter().sum();
        Self {
            gamma,
            v,
            selected,
            total,
        }
    }

    pub fn probability(&self, samples: &SampleSet) -> f64 {
        samples.selected_probability(&self.selected)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Input(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// Options for the branch-and-bound search.
#[derive(Clone, Copy, Debug)]
pub struct PepOptions {
    /// Node budget per phase before giving up with a timeout error.
    pub node_limit: u64,
}

impl Default for PepOptions {
    fn default() -> Self {
        Self { node_limit: 20_000_000 }
    }
}

/// Exact γ-efficient point with deterministic tie-breaking.
pub fn solve_pep(samples: &SampleSet, gamma: f64) -> Result<PepResult> {
    solve_pep_with(samples, gamma, PepOptions::default())
}

pub fn solve_pep_with(samples: &SampleSet, gamma: f64, opts: PepOptions) -> Result<PepResult> {
    samples.validate()?;
    check_gamma(gamma)?;
    let mut search = Search::new(samples, gamma, opts.node_limit);

    // Phase 1: optimal total, exploring cheap samples first.
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        let sa: f64 = samples.values[a].iter().sum();
        let sb: f64 = samples.values[b].iter().sum();
        sa.total_cmp(&sb).then(a.cmp(&b))
    });
    let mut state = State::new(samples);
    search.optimise(&order, 0, &mut state)?;
    let best = search.best;
    if !best.is_finite() {
        return Err(Error::Internal("no selection reaches the probability level".into()));
    }

    // Phase 2: first selection in lexicographic order attaining the optimum.
    search.nodes = 0;
    let limit = best + TIE_TOL * best.abs().max(1.0);
    let natural: Vec<usize> = (0..samples.len()).collect();
    let mut state = State::new(samples);
    let selected = search
        .first_within(&natural, 0, &mut state, limit)?
        .ok_or_else(|| Error::Internal("tie-break search lost the optimum".into()))?;
    Ok(PepResult::from_selection(samples, gamma, selected))
}

#[derive(Clone)]
struct State {
    cur: Vec<f64>,
    prob: f64,
    selected: Vec<bool>,
}

impl State {
    fn new(samples: &SampleSet) -> Self {
        Self {
            cur: vec![0.0; samples.n_sites()],
            prob: 0.0,
            selected: vec![false; samples.len()],
        }
    }
}

struct Search<'a> {
    samples: &'a SampleSet,
    gamma: f64,
    best: f64,
    nodes: u64,
    node_limit: u64,
    scratch: Vec<(f64, f64)>,
}

impl<'a> Search<'a> {
    fn new(samples: &'a SampleSet, gamma: f64, node_limit: u64) -> Self {
        Self {
            samples,
            gamma,
            best: f64::INFINITY,
            nodes: 0,
            node_limit,
            scratch: Vec::with_capacity(samples.len()),
        }
    }

    fn satisfied(&self, prob: f64) -> bool {
        prob >= self.gamma - PROB_TOL
    }

    /// Lower bound on the total of any completion that decides only the
    /// samples in `free`; `None` when no completion is feasible.
    fn bound(&mut self, free: &[usize], st: &State) -> Option<f64> {
        let base: f64 = st.cur.iter().sum();
        if self.satisfied(st.prob) {
            return Some(base);
        }
        let need = self.gamma - PROB_TOL - st.prob;
        self.scratch.clear();
        for &s in free {
            let delta: f64 = self.samples.values[s]
                .iter()
                .zip(&st.cur)
                .map(|(&x, &c)| (x - c).max(0.0))
                .sum();
            self.scratch.push((delta, self.samples.probabilities[s]));
        }
        self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        for &(delta, p) in &self.scratch {
            acc += p;
            if acc >= need {
                return Some(base + delta);
            }
        }
        None
    }

    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            let incumbent = self.best.is_finite().then_some(self.best);
            return Err(Error::Timeout { incumbent });
        }
        Ok(())
    }

    fn include(&self, st: &mut State, s: usize) -> (Vec<f64>, f64) {
        let saved = (st.cur.clone(), st.prob);
        for (c, &x) in st.cur.iter_mut().zip(&self.samples.values[s]) {
            *c = c.max(x);
        }
        st.prob += self.samples.probabilities[s];
        st.selected[s] = true;
        saved
    }

    fn restore(st: &mut State, s: usize, saved: (Vec<f64>, f64)) {
        st.cur = saved.0;
        st.prob = saved.1;
        st.selected[s] = false;
    }

    fn optimise(&mut self, order: &[usize], k: usize, st: &mut State) -> Result<()> {
        self.tick()?;
        if self.satisfied(st.prob) {
            self.best = self.best.min(st.cur.iter().sum());
            return Ok(());
        }
        let Some(b) = self.bound(&order[k..], st) else {
            return Ok(());
        };
        if b >= self.best - TIE_TOL * self.best.abs().max(1.0) {
            return Ok(());
        }
        let s = order[k];
        let saved = self.include(st, s);
        self.optimise(order, k + 1, st)?;
        Self::restore(st, s, saved);
        self.optimise(order, k + 1, st)
    }

    fn first_within(&mut self, order: &[usize], k: usize, st: &mut State, limit: f64) -> Result<Option<Vec<bool>>> {
        self.tick()?;
        if self.satisfied(st.prob) {
            let total: f64 = st.cur.iter().sum();
            return Ok((total <= limit).then(|| st.selected.clone()));
        }
        match self.bound(&order[k..], st) {
            Some(b) if b <= limit => {}
            _ => return Ok(None),
        }
        let s = order[k];
        if let Some(found) = self.first_within(order, k + 1, st, limit)? {
            return Ok(Some(found));
        }
        let saved = self.include(st, s);
        let found = self.first_within(order, k + 1, st, limit)?;
        Self::restore(st, s, saved);
        Ok(found)
    }
}

/// The selection MILP as written, solved by the generic solver.
///
/// Ties among optimal selections are left to the solver.
pub fn solve_pep_milp(samples: &SampleSet, gamma: f64, solver: &dyn MilpSolver) -> Result<PepResult> {
    samples.validate()?;
    check_gamma(gamma)?;
    let mut m = Model::new();
    let v: Vec<_> = samples
        .sites
        .iter()
        .map(|name| m.add_var(0.0, f64::INFINITY, 1.0, format!("v[{name}]")))
        .collect();
    let z: Vec<_> = (0..samples.len()).map(|s| m.add_binary(0.0, format!("z[{s}]"))).collect();
    let mut prob = LinExpr::new();
    for (s, &zs) in z.iter().enumerate() {
        prob.add(zs, samples.probabilities[s]);
    }
    m.add_ge(&prob, gamma - PROB_TOL, "probability");
    for (s, &zs) in z.iter().enumerate() {
        for (mi, &vm) in v.iter().enumerate() {
            let mut e = LinExpr::term(vm, 1.0);
            e.add(zs, -samples.values[s][mi]);
            m.add_ge(&e, 0.0, format!("dominate[{s},{mi}]"));
        }
    }
    let opts = SolverOptions {
        mip_rel_gap: 0.0,
        ..Default::default()
    };
    let sol = solver.solve(&m, &opts)?;
    let selected: Vec<bool> = z.iter().map(|&zs| sol.value(zs) > 0.5).collect();
    Ok(PepResult::from_selection(samples, gamma, selected))
}

/// Subset-enumeration oracle for small sample sets.
pub fn brute_force_pep(samples: &SampleSet, gamma: f64) -> Result<PepResult> {
    samples.validate()?;
    check_gamma(gamma)?;
    let n = samples.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(n, BRUTE_FORCE_LIMIT));
    }
    // Bit n-1-s holds sample s, so increasing masks are increasing
    // selection vectors in lexicographic order.
    let decode = |mask: u32| -> Vec<bool> { (0..n).map(|s| mask >> (n - 1 - s) & 1 == 1).collect() };
    let mut totals = Vec::with_capacity(1 << n);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1u32 << n) {
        let sel = decode(mask);
        if samples.selected_probability(&sel) >= gamma - PROB_TOL {
            let t: f64 = samples.envelope(&sel).iter().sum();
            best = best.min(t);
            totals.push((mask, t));
        }
    }
    let limit = best + TIE_TOL * best.abs().max(1.0);
    let (mask, _) = totals
        .into_iter()
        .find(|&(_, t)| t <= limit)
        .ok_or_else(|| Error::Internal("no subset reaches the probability level".into()))?;
    Ok(PepResult::from_selection(samples, gamma, decode(mask)))
}

/// Independent PEP solve for every timeslot.
pub fn pep_schedule(slots: &[SampleSet], gamma: f64) -> Result<Vec<PepResult>> {
    if let Some(first) = slots.first() {
        if let Some(t) = slots.iter().position(|s| s.sites != first.sites) {
            return Err(Error::Input(format!("timeslot {t} has a different site list")));
        }
    }
    slots.par_iter().map(|s| solve_pep(s, gamma)).collect()
}

/// Historical VRE data: one sample per day, one value per hour and site.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub sites: Vec<String>,
    pub days: Vec<NaiveDate>,
    pub hours: Vec<u32>,
    /// `values[day][hour][site]`, MW.
    pub values: Vec<Vec<Vec<f64>>>,
    pub probabilities: Vec<f64>,
}

impl History {
    /// One sample set per hour.
    pub fn sample_sets(&self) -> Result<Vec<SampleSet>> {
        (0..self.hours.len())
            .map(|h| {
                SampleSet::new(
                    self.sites.clone(),
                    self.values.iter().map(|day| day[h].clone()).collect(),
                    self.probabilities.clone(),
                )
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["timestamp", "site", "mw", "probability"])?;
        for (d, day) in self.days.iter().enumerate() {
            for (h, &hour) in self.hours.iter().enumerate() {
                for (m, site) in self.sites.iter().enumerate() {
                    let ts = d_time(*day, hour);
                    wr.write_record([
                        ts.format("%Y-%m-%d %H:%M").to_string(),
                        site.clone(),
                        format!("{}", self.values[d][h][m]),
                        format!("{}", self.probabilities[d]),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn d_time(day: NaiveDate, hour: u32) -> NaiveDateTime {
    day.and_hms_opt(hour, 0, 0).expect("hour below 24")
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M"];
    let s = s.trim().trim_end_matches('Z');
    FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

#[derive(Deserialize)]
struct HistoryRow {
    timestamp: String,
    site: String,
    mw: f64,
    #[serde(default)]
    probability: Option<f64>,
}

pub fn read_history_csv(path: &Path) -> Result<History> {
    let f = std::fs::File::open(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_history(f, &path.display().to_string())
}

/// Parses `timestamp,site,mw[,probability]` rows grouped into daily samples.
/// Probabilities default to uniform over days.
pub fn parse_history<R: Read>(reader: R, origin: &str) -> Result<History> {
    let perr = |message: String| Error::Parse {
        path: origin.into(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut cells: BTreeMap<(NaiveDate, u32, String), f64> = BTreeMap::new();
    let mut probs: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    let mut sites = BTreeSet::new();
    let mut any_prob = false;
    for (i, row) in rdr.deserialize::<HistoryRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| perr(format!("line {line}: {e}")))?;
        let ts = parse_timestamp(&row.timestamp)
            .ok_or_else(|| perr(format!("line {line}: bad timestamp {:?}", row.timestamp)))?;
        if !(row.mw.is_finite() && row.mw >= 0.0) {
            return Err(perr(format!("line {line}: generation must be a nonnegative number")));
        }
        let key = (ts.date(), ts.hour(), row.site.clone());
        if cells.insert(key, row.mw).is_some() {
            return Err(perr(format!("line {line}: duplicate entry for {} at {ts}", row.site)));
        }
        if let Some(p) = row.probability {
            any_prob = true;
            if let Some(old) = probs.insert(ts.date(), p) {
                if (old - p).abs() > 1e-12 {
                    return Err(perr(format!("line {line}: conflicting probabilities for {}", ts.date())));
                }
            }
        }
        sites.insert(row.site);
    }
    if cells.is_empty() {
        return Err(perr("no samples".into()));
    }
    let days: Vec<NaiveDate> = cells.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
    let hours: Vec<u32> = cells.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();
    let sites: Vec<String> = sites.into_iter().collect();
    let mut values = Vec::with_capacity(days.len());
    for &d in &days {
        let mut day = Vec::with_capacity(hours.len());
        for &h in &hours {
            let mut row = Vec::with_capacity(sites.len());
            for s in &sites {
                let v = cells
                    .get(&(d, h, s.clone()))
                    .ok_or_else(|| perr(format!("missing value for site {s} at {d} {h:02}:00")))?;
                row.push(*v);
            }
            day.push(row);
        }
        values.push(day);
    }
    let probabilities = if any_prob {
        days.iter()
            .map(|d| probs.get(d).copied().ok_or_else(|| perr(format!("no probability given for {d}"))))
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![1.0 / days.len() as f64; days.len()]
    };
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(perr(format!("day probabilities sum to {total}, not 1")));
    }
    Ok(History {
        sites,
        days,
        hours,
        values,
        probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::HighsSolver;
    use proptest::prelude::*;

    fn two() -> SampleSet {
        SampleSet::uniform(vec!["a".into(), "b".into()], vec![vec![10.0, 0.0], vec![0.0, 10.0]]).unwrap()
    }

    #[test]
    fn single_sample() {
        let s = SampleSet::uniform(vec!["a".into(), "b".into()], vec![vec![3.0, 4.0]]).unwrap();
        for g in [0.01, 0.5, 0.99] {
            let r = solve_pep(&s, g).unwrap();
            assert_eq!(r.v, vec![3.0, 4.0]);
            assert_eq!(r.selected, vec![true]);
        }
    }

    #[test]
    fn two_samples_tie_goes_to_later_sample() {
        let r = solve_pep(&two(), 0.4).unwrap();
        assert_eq!(r.total, 10.0);
        // (0,1) precedes (1,0) lexicographically.
        assert_eq!(r.selected, vec![false, true]);
        assert_eq!(r.v, vec![0.0, 10.0]);
        assert_eq!(brute_force_pep(&two(), 0.4).unwrap(), r);
    }

    #[test]
    fn two_samples_forced_full_selection() {
        let r = solve_pep(&two(), 0.9).unwrap();
        assert_eq!(r.v, vec![10.0, 10.0]);
        assert_eq!(r.total, 20.0);
        assert_eq!(brute_force_pep(&two(), 0.9).unwrap(), r);
    }

    #[test]
    fn milp_matches_total() {
        let r = solve_pep_milp(&two(), 0.4, &HighsSolver).unwrap();
        assert_eq!(r.total, 10.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_pep(&two(), 0.0).is_err());
        assert!(solve_pep(&two(), 1.0).is_err());
        assert!(SampleSet::new(vec!["a".into()], vec![vec![1.0]], vec![0.5]).is_err());
        assert!(SampleSet::uniform(vec!["a".into()], vec![vec![-1.0]]).is_err());
        let big = SampleSet::uniform(vec!["a".into()], (0..21).map(|i| vec![i as f64]).collect()).unwrap();
        assert!(matches!(brute_force_pep(&big, 0.5), Err(Error::TooLarge(21, 20))));
    }

    #[test]
    fn anti_correlated_sites_are_not_mixed() {
        // Picking coordinates independently would give (1, 1); whole samples cannot.
        let s = SampleSet::uniform(
            vec!["wind".into(), "pv".into()],
            vec![vec![1.0, 9.0], vec![9.0, 1.0], vec![5.0, 5.0], vec![8.0, 8.0]],
        )
        .unwrap();
        let r = solve_pep(&s, 0.5).unwrap();
        assert_eq!(r.total, 14.0);
        for (m, &vm) in r.v.iter().enumerate() {
            let sel_max = s
                .values
                .iter()
                .zip(&r.selected)
                .filter(|(_, &z)| z)
                .map(|(row, _)| row[m])
                .fold(0.0, f64::max);
            assert_eq!(vm, sel_max);
        }
    }

    #[test]
    fn schedule_flat_and_night() {
        let day = SampleSet::uniform(vec!["pv".into()], vec![vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        let flat = SampleSet::uniform(vec!["pv".into()], vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let mut slots = vec![flat; 24];
        slots[2] = day;
        let res = pep_schedule(&slots, 0.5).unwrap();
        assert_eq!(res[2].v, vec![0.0]);
        assert!(res.iter().enumerate().filter(|(t, _)| *t != 2).all(|(_, r)| r.v == res[0].v));
    }

    #[test]
    fn schedule_rejects_site_mismatch() {
        let a = SampleSet::uniform(vec!["a".into()], vec![vec![1.0]]).unwrap();
        let b = SampleSet::uniform(vec!["b".into()], vec![vec![1.0]]).unwrap();
        assert!(pep_schedule(&[a, b], 0.5).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "timestamp,site,mw\n\
                    2013-01-01 00:00,w,1.5\n2013-01-01 00:00,pv,0\n\
                    2013-01-01 01:00,w,2\n2013-01-01 01:00,pv,0.5\n\
                    2013-01-02 00:00,w,3\n2013-01-02 00:00,pv,0\n\
                    2013-01-02 01:00,w,1\n2013-01-02 01:00,pv,0.25\n";
        let h = parse_history(text.as_bytes(), "mem").unwrap();
        assert_eq!(h.sites, vec!["pv".to_string(), "w".to_string()]);
        assert_eq!(h.hours, vec![0, 1]);
        assert_eq!(h.probabilities, vec![0.5, 0.5]);
        assert_eq!(h.values[1][1], vec![0.25, 1.0]);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(parse_history(buf.as_slice(), "mem").unwrap(), h);
        let sets = h.sample_sets().unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].values, vec![vec![0.0, 1.5], vec![0.0, 3.0]]);
    }

    #[test]
    fn csv_errors_carry_location() {
        let err = parse_history("timestamp,site,mw\nnot-a-time,w,1\n".as_bytes(), "x.csv").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_history("timestamp,site,mw\n2013-01-01 00:00,w,1\n2013-01-01 00:00,pv,1\n2013-01-02 00:00,w,1\n".as_bytes(), "x.csv")
            .unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }

    fn instance() -> impl Strategy<Value = SampleSet> {
        (1usize..=8, 1usize..=3).prop_flat_map(|(s, r)| {
            (
                proptest::collection::vec(proptest::collection::vec(0u8..6, r), s),
                proptest::collection::vec(1u8..5, s),
            )
                .prop_map(move |(vals, w)| {
                    let tot: f64 = w.iter().map(|&x| x as f64).sum();
                    SampleSet::new(
                        (0..r).map(|m| format!("s{m}")).collect(),
                        vals.into_iter().map(|row| row.into_iter().map(f64::from).collect()).collect(),
                        w.iter().map(|&x| x as f64 / tot).collect(),
                    )
                    .unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn branch_and_bound_matches_enumeration(s in instance(), g in 0.05f64..0.95) {
            let a = solve_pep(&s, g).unwrap();
            let b = brute_force_pep(&s, g).unwrap();
            prop_assert_eq!(&a.selected, &b.selected);
            prop_assert!(a.probability(&s) >= g - PROB_TOL);
        }

        #[test]
        fn totals_are_monotone_and_bracketed(s in instance(), g1 in 0.05f64..0.95, g2 in 0.05f64..0.95) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let a = solve_pep(&s, lo).unwrap();
            let b = solve_pep(&s, hi).unwrap();
            prop_assert!(a.total <= b.total + 1e-12);
            for m in 0..s.n_sites() {
                let mx = s.values.iter().map(|r| r[m]).fold(0.0, f64::max);
                prop_assert!(a.v[m] <= mx);
            }
        }
    }

    /// Definition of efficiency: no feasible selection is dominated-strictly-below v.
    #[test]
    fn result_is_minimal() {
        let s = SampleSet::uniform(
            vec!["a".into(), "b".into()],
            vec![vec![2.0, 7.0], vec![4.0, 1.0], vec![6.0, 6.0], vec![1.0, 3.0], vec![5.0, 2.0]],
        )
        .unwrap();
        let r = solve_pep(&s, 0.6).unwrap();
        let n = s.len();
        for mask in 0u32..(1 << n) {
            let sel: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            if s.selected_probability(&sel) < 0.6 - PROB_TOL {
                continue;
            }
            let e = s.envelope(&sel);
            let le = e.iter().zip(&r.v).all(|(a, b)| a <= b);
            let lt = e.iter().zip(&r.v).any(|(a, b)| a < b);
            assert!(!(le && lt), "{e:?} dominates {:?}", r.v);
        }
    }
}
