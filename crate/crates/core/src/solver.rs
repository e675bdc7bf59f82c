//! Backend-neutral LP / MILP modelling layer.
//!
//! Models are assembled as plain data ([`OptProblem`]) and handed to a
//! [`Backend`]. The default backend is HiGHS. Duals are reported with a single
//! convention regardless of backend or objective sense: the dual of a
//! constraint is the rate of change of the optimal objective per unit increase
//! of its right-hand side.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use highs::{HighsModelStatus, RowProblem};

use crate::error::{Error, Result};

/// Absolute feasibility / duality tolerance inherited by every model.
pub const TOLERANCE: f64 = 1e-6;

/// Default relative MIP gap.
pub const DEFAULT_REL_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConId(usize);

impl ConId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violate this constraint (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A linear program, optionally with binary variables.
#[derive(Debug, Clone)]
pub struct OptProblem {
    sense: Sense,
    vars: Vec<Variable>,
    cons: Vec<Constraint>,
}

impl OptProblem {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            vars: Vec::new(),
            cons: Vec::new(),
        }
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.cons
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.cons.len()
    }

    /// Adds a continuous variable with bounds `[lower, upper]` (either may be infinite).
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.push_var(name.into(), lower, upper, cost, VarKind::Continuous)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> VarId {
        self.push_var(name.into(), 0.0, 1.0, cost, VarKind::Binary)
    }

    fn push_var(&mut self, name: String, lower: f64, upper: f64, cost: f64, kind: VarKind) -> VarId {
        debug_assert!(lower <= upper, "variable {name}: lower bound {lower} > upper bound {upper}");
        self.vars.push(Variable {
            name,
            lower,
            upper,
            cost,
            kind,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.vars[var.0].cost = cost;
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> ConId {
        debug_assert!(terms.iter().all(|(v, _)| v.0 < self.vars.len()));
        self.cons.push(Constraint {
            name: name.into(),
            terms,
            relation,
            rhs,
        });
        ConId(self.cons.len() - 1)
    }

    pub fn set_rhs(&mut self, con: ConId, rhs: f64) {
        self.cons[con.0].rhs = rhs;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.vars[var.0].lower = lower;
        self.vars[var.0].upper = upper;
    }

    pub fn has_binaries(&self) -> bool {
        self.vars.iter().any(|v| v.kind == VarKind::Binary)
    }

    /// Checks structural sanity: bounds ordered and every term refers to a declared variable.
    pub fn validate(&self) -> Result<()> {
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Solver(format!(
                    "variable {} has invalid bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        for c in &self.cons {
            if let Some((v, _)) = c.terms.iter().find(|(v, _)| v.0 >= self.vars.len()) {
                return Err(Error::Solver(format!(
                    "constraint {} references undeclared variable #{}",
                    c.name, v.0
                )));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.vars.iter().zip(values).map(|(v, x)| v.cost * x).sum()
    }

    /// Largest bound or constraint violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let bounds = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0));
        let rows = self.cons.iter().map(|c| c.violation(values));
        bounds.chain(rows).fold(0.0, f64::max)
    }

    /// Renders the problem in CPLEX LP text format.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        let name = |i: usize| sanitize(&self.vars[i].name, 'x', i);
        out.push_str(match self.sense {
            Sense::Minimize => "Minimize\n obj:",
            Sense::Maximize => "Maximize\n obj:",
        });
        for (i, v) in self.vars.iter().enumerate() {
            if v.cost != 0.0 {
                let _ = write!(out, " {} {} {}", sign(v.cost), v.cost.abs(), name(i));
            }
        }
        out.push_str("\nSubject To\n");
        for (j, c) in self.cons.iter().enumerate() {
            let _ = write!(out, " {}:", sanitize(&c.name, 'c', j));
            if c.terms.is_empty() {
                out.push_str(" 0 x_empty");
            }
            for (v, a) in &c.terms {
                let _ = write!(out, " {} {} {}", sign(*a), a.abs(), name(v.0));
            }
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(out, " {rel} {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for (i, v) in self.vars.iter().enumerate() {
            let lo = if v.lower.is_finite() { v.lower.to_string() } else { "-inf".into() };
            let hi = if v.upper.is_finite() { v.upper.to_string() } else { "+inf".into() };
            let _ = writeln!(out, " {lo} <= {} <= {hi}", name(i));
        }
        let binaries: Vec<_> = (0..self.vars.len())
            .filter(|&i| self.vars[i].kind == VarKind::Binary)
            .collect();
        if !binaries.is_empty() {
            out.push_str("Binaries\n");
            for i in binaries {
                let _ = writeln!(out, " {}", name(i));
            }
        }
        out.push_str("End\n");
        out
    }

    pub fn write_lp(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_lp_string().as_bytes())?;
        Ok(())
    }
}

fn sign(x: f64) -> char {
    if x < 0.0 {
        '-'
    } else {
        '+'
    }
}

fn sanitize(name: &str, prefix: char, idx: usize) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if clean.is_empty() || clean.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("{prefix}{idx}_{clean}")
    } else {
        clean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct OptSolution {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    /// Row duals, `d objective / d rhs`. `None` for MILP solves.
    pub duals: Option<Vec<f64>>,
    /// Reduced costs, `d objective / d bound` of the active bound. `None` for MILP solves.
    pub reduced_costs: Option<Vec<f64>>,
}

impl OptSolution {
    fn non_optimal(status: SolveStatus) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective: f64::NAN,
            duals: None,
            reduced_costs: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    pub fn dual(&self, con: ConId) -> Option<f64> {
        self.duals.as_ref().map(|d| d[con.0])
    }

    /// Objective of the dual program built from the reported duals and reduced costs.
    ///
    /// Equals [`OptSolution::objective`] at an optimal LP basis (strong duality).
    pub fn dual_objective(&self, problem: &OptProblem) -> Option<f64> {
        let duals = self.duals.as_ref()?;
        let rc = self.reduced_costs.as_ref()?;
        let rows: f64 = problem.cons.iter().zip(duals).map(|(c, y)| c.rhs * y).sum();
        let cols: f64 = problem
            .vars
            .iter()
            .zip(rc.iter().zip(&self.values))
            .map(|(v, (&z, &x))| {
                if z == 0.0 {
                    0.0
                } else if (x - v.lower).abs() <= (x - v.upper).abs() {
                    z * v.lower
                } else {
                    z * v.upper
                }
            })
            .sum();
        Some(rows + cols)
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub rel_gap: f64,
    pub time_limit_s: Option<f64>,
    /// When set, the problem is written here in LP format before solving.
    pub dump_lp: Option<PathBuf>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_gap: DEFAULT_REL_GAP,
            time_limit_s: None,
            dump_lp: std::env::var_os("EUROEM_DUMP_LP").map(PathBuf::from),
        }
    }
}

/// A solver capable of LP (with duals) and MILP solves.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &OptProblem, integral: bool, options: &SolverOptions) -> Result<OptSolution>;
}

/// HiGHS, linked statically.
#[derive(Debug, Default, Clone, Copy)]
pub struct HighsBackend;

impl Backend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, problem: &OptProblem, integral: bool, options: &SolverOptions) -> Result<OptSolution> {
        if problem.vars.is_empty() {
            return Ok(solve_empty(problem));
        }
        let run = |presolve: bool| -> Result<highs::SolvedModel> {
            let mut rp = RowProblem::default();
            let cols: Vec<highs::Col> = problem
                .vars
                .iter()
                .map(|v| {
                    let integer = integral && v.kind == VarKind::Binary;
                    rp.add_column_with_integrality(v.cost, v.lower..=v.upper, integer)
                })
                .collect();
            for c in &problem.cons {
                let factors = c.terms.iter().map(|(v, a)| (cols[v.0], *a));
                match c.relation {
                    Relation::Le => rp.add_row(..=c.rhs, factors),
                    Relation::Ge => rp.add_row(c.rhs.., factors),
                    Relation::Eq => rp.add_row(c.rhs..=c.rhs, factors),
                }
            }
            let sense = match problem.sense {
                Sense::Minimize => highs::Sense::Minimise,
                Sense::Maximize => highs::Sense::Maximise,
            };
            let mut model = rp.optimise(sense);
            model.make_quiet();
            model.set_option("threads", 1);
            model.set_option("random_seed", 0);
            if !presolve {
                model.set_option("presolve", "off");
            }
            if integral {
                model.set_option("mip_rel_gap", options.rel_gap);
                model.set_option("mip_feasibility_tolerance", 1e-9);
            }
            model.set_option("primal_feasibility_tolerance", 1e-9);
            model.set_option("dual_feasibility_tolerance", 1e-9);
            if let Some(t) = options.time_limit_s {
                model.set_option("time_limit", t);
            }
            model
                .try_solve()
                .map_err(|s| Error::Solver(format!("HiGHS rejected the model: {s:?}")))
        };

        let mut solved = run(true)?;
        if solved.status() == HighsModelStatus::UnboundedOrInfeasible {
            solved = run(false)?;
        }
        match solved.status() {
            HighsModelStatus::Optimal => {}
            HighsModelStatus::Infeasible => return Ok(OptSolution::non_optimal(SolveStatus::Infeasible)),
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                return Ok(OptSolution::non_optimal(SolveStatus::Unbounded))
            }
            other => return Err(Error::Solver(format!("HiGHS stopped with status {other:?}"))),
        }
        let sol = solved.get_solution();
        let mut values = sol.columns().to_vec();
        if integral {
            for (x, v) in values.iter_mut().zip(&problem.vars) {
                if v.kind == VarKind::Binary {
                    *x = x.round();
                }
            }
        }
        let objective = problem.objective_value(&values);
        let (duals, reduced_costs) = if integral {
            (None, None)
        } else {
            // HiGHS already reports d(objective)/d(rhs) for both senses.
            (Some(sol.dual_rows().to_vec()), Some(sol.dual_columns().to_vec()))
        };
        Ok(OptSolution {
            status: SolveStatus::Optimal,
            values,
            objective,
            duals,
            reduced_costs,
        })
    }
}

fn solve_empty(problem: &OptProblem) -> OptSolution {
    let feasible = problem.cons.iter().all(|c| c.violation(&[]) <= TOLERANCE);
    if !feasible {
        return OptSolution::non_optimal(SolveStatus::Infeasible);
    }
    OptSolution {
        status: SolveStatus::Optimal,
        values: Vec::new(),
        objective: 0.0,
        duals: Some(vec![0.0; problem.cons.len()]),
        reduced_costs: Some(Vec::new()),
    }
}

/// Solves a pure LP with the default backend. Duals are always present on an optimal result.
pub fn solve_lp(problem: &OptProblem) -> Result<OptSolution> {
    solve_lp_with(problem, &HighsBackend, &SolverOptions::default())
}

pub fn solve_lp_with(problem: &OptProblem, backend: &dyn Backend, options: &SolverOptions) -> Result<OptSolution> {
    if problem.has_binaries() {
        return Err(Error::Solver("solve_lp called on a problem with binary variables".into()));
    }
    problem.validate()?;
    dump(problem, options)?;
    backend.solve(problem, false, options)
}

/// Solves a MILP to within `rel_gap` of the proven bound. Duals are never reported.
pub fn solve_milp(problem: &OptProblem, rel_gap: f64) -> Result<OptSolution> {
    let options = SolverOptions {
        rel_gap,
        ..SolverOptions::default()
    };
    solve_milp_with(problem, &HighsBackend, &options)
}

pub fn solve_milp_with(problem: &OptProblem, backend: &dyn Backend, options: &SolverOptions) -> Result<OptSolution> {
    if !(options.rel_gap >= 0.0) {
        return Err(Error::Solver(format!("invalid relative gap {}", options.rel_gap)));
    }
    problem.validate()?;
    dump(problem, options)?;
    let mut sol = backend.solve(problem, true, options)?;
    sol.duals = None;
    sol.reduced_costs = None;
    Ok(sol)
}

fn dump(problem: &OptProblem, options: &SolverOptions) -> Result<()> {
    if let Some(path) = &options.dump_lp {
        problem.write_lp(path)?;
    }
    Ok(())
}
