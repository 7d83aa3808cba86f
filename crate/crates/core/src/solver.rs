//! Minimal LP/MILP modelling layer and the HiGHS backend.
//!
//! Row duals follow the convention `∂objective / ∂(active row bound)` for a
//! minimisation: a binding `≥` row has a nonnegative dual, a binding `≤`
//! row a nonpositive one.

use std::collections::BTreeMap;
use std::time::Duration;

use highs::{HighsModelStatus, RowProblem, Sense};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Row(pub usize);

/// Affine expression `Σ aⱼ xⱼ + c`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(v: Var, a: f64) -> Self {
        Self {
            terms: vec![(v, a)],
            constant: 0.0,
        }
    }

    pub fn add(&mut self, v: Var, a: f64) -> &mut Self {
        if a != 0.0 {
            self.terms.push((v, a));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    /// `self += a · other`.
    pub fn add_scaled(&mut self, other: &LinExpr, a: f64) -> &mut Self {
        if a != 0.0 {
            self.terms.extend(other.terms.iter().map(|&(v, c)| (v, a * c)));
            self.constant += a * other.constant;
        }
        self
    }

    /// Merge duplicate variables and drop zeros.
    pub fn compact(&self) -> Self {
        let mut m: BTreeMap<Var, f64> = BTreeMap::new();
        for &(v, a) in &self.terms {
            *m.entry(v).or_default() += a;
        }
        Self {
            terms: m.into_iter().filter(|&(_, a)| a != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, a)| a * x[v.0]).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug)]
pub struct VarDef {
    pub lb: f64,
    pub ub: f64,
    pub cost: f64,
    pub kind: VarKind,
    pub name: String,
}

#[derive(Clone, Debug)]
pub struct RowDef {
    pub terms: Vec<(Var, f64)>,
    pub lb: f64,
    pub ub: f64,
    pub name: String,
}

/// A minimisation problem.
#[derive(Clone, Debug, Default)]
pub struct Model {
    pub vars: Vec<VarDef>,
    pub rows: Vec<RowDef>,
    pub objective_offset: f64,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, lb: f64, ub: f64, cost: f64, name: impl Into<String>) -> Var {
        self.push_var(lb, ub, cost, VarKind::Continuous, name.into())
    }

    pub fn add_binary(&mut self, cost: f64, name: impl Into<String>) -> Var {
        self.push_var(0.0, 1.0, cost, VarKind::Binary, name.into())
    }

    fn push_var(&mut self, lb: f64, ub: f64, cost: f64, kind: VarKind, name: String) -> Var {
        self.vars.push(VarDef {
            lb,
            ub,
            cost,
            kind,
            name,
        });
        Var(self.vars.len() - 1)
    }

    /// `lb ≤ expr ≤ ub`; the expression constant is moved into the bounds.
    pub fn add_row(&mut self, expr: &LinExpr, lb: f64, ub: f64, name: impl Into<String>) -> Row {
        let e = expr.compact();
        self.rows.push(RowDef {
            terms: e.terms,
            lb: lb - e.constant,
            ub: ub - e.constant,
            name: name.into(),
        });
        Row(self.rows.len() - 1)
    }

    pub fn add_eq(&mut self, expr: &LinExpr, rhs: f64, name: impl Into<String>) -> Row {
        self.add_row(expr, rhs, rhs, name)
    }

    pub fn add_le(&mut self, expr: &LinExpr, rhs: f64, name: impl Into<String>) -> Row {
        self.add_row(expr, f64::NEG_INFINITY, rhs, name)
    }

    pub fn add_ge(&mut self, expr: &LinExpr, rhs: f64, name: impl Into<String>) -> Row {
        self.add_row(expr, rhs, f64::INFINITY, name)
    }

    pub fn add_cost(&mut self, v: Var, c: f64) {
        self.vars[v.0].cost += c;
    }

    /// Adds `expr` to the objective.
    pub fn add_objective(&mut self, expr: &LinExpr) {
        for &(v, a) in &expr.terms {
            self.vars[v.0].cost += a;
        }
        self.objective_offset += expr.constant;
    }

    pub fn fix(&mut self, v: Var, value: f64) {
        let d = &mut self.vars[v.0];
        d.lb = value;
        d.ub = value;
    }

    pub fn set_bounds(&mut self, v: Var, lb: f64, ub: f64) {
        let d = &mut self.vars[v.0];
        d.lb = lb;
        d.ub = ub;
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.kind == VarKind::Binary)
    }

    pub fn binaries(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| Var(i))
    }

    /// Copy with every binary fixed at its rounded value in `x` and relaxed
    /// to a continuous variable.
    pub fn fixed_binaries(&self, x: &[f64]) -> Model {
        let mut m = self.clone();
        for v in m.vars.iter_mut().zip(x) {
            if v.0.kind == VarKind::Binary {
                let z = v.1.round();
                v.0.lb = z;
                v.0.ub = z;
                v.0.kind = VarKind::Continuous;
            }
        }
        m
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.vars.iter().zip(x).map(|(v, x)| v.cost * x).sum::<f64>()
    }

    /// Largest bound violation of `x` over rows and columns.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (d, &v) in self.vars.iter().zip(x) {
            worst = worst.max(d.lb - v).max(v - d.ub);
        }
        for r in &self.rows {
            let a: f64 = r.terms.iter().map(|&(v, c)| c * x[v.0]).sum();
            worst = worst.max(r.lb - a).max(a - r.ub);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Time limit hit with a feasible incumbent.
    TimeLimit,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub mip_rel_gap: f64,
    pub time_limit: Option<Duration>,
    pub threads: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mip_rel_gap: 1e-6,
            time_limit: None,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Present only for continuous problems.
    pub row_duals: Option<Vec<f64>>,
    pub row_values: Vec<f64>,
}

impl Solution {
    pub fn value(&self, v: Var) -> f64 {
        self.x[v.0]
    }

    pub fn dual(&self, r: Row) -> Option<f64> {
        self.row_duals.as_ref().map(|d| d[r.0])
    }
}

pub trait MilpSolver: Send + Sync {
    fn solve(&self, model: &Model, opts: &SolverOptions) -> Result<Solution>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HighsSolver;

fn range(lb: f64, ub: f64) -> std::ops::RangeInclusive<f64> {
    lb..=ub
}

impl MilpSolver for HighsSolver {
    fn solve(&self, model: &Model, opts: &SolverOptions) -> Result<Solution> {
        for (i, v) in model.vars.iter().enumerate() {
            if v.lb > v.ub || v.lb.is_nan() || v.ub.is_nan() || !v.cost.is_finite() {
                return Err(Error::Solver(format!("bad column {i} ({})", v.name)));
            }
        }
        for r in &model.rows {
            if r.lb > r.ub + 1e-12 {
                return Err(Error::Infeasible(format!("row {} has empty range", r.name)));
            }
        }
        let mut pb = RowProblem::default();
        let cols: Vec<_> = model
            .vars
            .iter()
            .map(|v| match v.kind {
                VarKind::Continuous => pb.add_column(v.cost, range(v.lb, v.ub)),
                VarKind::Binary => pb.add_integer_column(v.cost, range(v.lb, v.ub)),
            })
            .collect();
        for r in &model.rows {
            let ub = r.ub.max(r.lb);
            pb.add_row(range(r.lb, ub), r.terms.iter().map(|&(v, a)| (cols[v.0], a)));
        }
        let mut m = pb.optimise(Sense::Minimise);
        m.make_quiet();
        m.set_option("threads", opts.threads.max(1) as i32);
        m.set_option("mip_rel_gap", opts.mip_rel_gap);
        if let Some(t) = opts.time_limit {
            m.set_option("time_limit", t.as_secs_f64());
        }
        let solved = m
            .try_solve()
            .map_err(|s| Error::Solver(format!("HiGHS run failed: {s:?}")))?;
        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            HighsModelStatus::ReachedTimeLimit => {
                let sol = solved.get_solution();
                let x = sol.columns().to_vec();
                let incumbent = (x.len() == model.vars.len() && model.max_violation(&x) < 1e-6)
                    .then(|| model.objective_value(&x));
                return Err(Error::Timeout { incumbent });
            }
            HighsModelStatus::Infeasible => return Err(Error::Infeasible("solver proved infeasibility".into())),
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                return Err(Error::Infeasible("problem unbounded or infeasible".into()))
            }
            other => return Err(Error::Solver(format!("unexpected status {other:?}"))),
        };
        let sol = solved.get_solution();
        let mut x = sol.columns().to_vec();
        if x.len() != model.vars.len() {
            // HiGHS reports an empty model without columns.
            x = model.vars.iter().map(|v| v.lb.max(0.0).min(v.ub)).collect();
        }
        for (xi, v) in x.iter_mut().zip(&model.vars) {
            if v.kind == VarKind::Binary {
                *xi = xi.round();
            }
        }
        let row_duals = (!model.has_integers()).then(|| sol.dual_rows().to_vec());
        let objective = model.objective_value(&x);
        Ok(Solution {
            status,
            objective,
            x,
            row_duals,
            row_values: sol.rows().to_vec(),
        })
    }
}
