//! DC network physics: islands, PTDF factors and power flow.

mod opf;
mod redispatch;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::SystemModel;

pub use opf::{solve_dc_opf, OpfOptions};
pub use redispatch::{redispatch, redispatch_hours, RedispatchOptions, RedispatchResult, UnitState};

/// Balance tolerance for power-flow injections, MW.
pub const BALANCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GridBranch {
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    pub rating: f64,
}

/// Bus-branch topology with an in-service mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_bus: usize,
    pub branches: Vec<GridBranch>,
    pub in_service: Vec<bool>,
}

/// Factors smaller than this are round-off from the matrix inverse. Storing
/// them as exact zeros keeps them out of LP rows.
const PTDF_ROUNDOFF: f64 = 1e-10;

impl Grid {
    pub fn new(n_bus: usize, branches: Vec<GridBranch>) -> Self {
        let in_service = vec![true; branches.len()];
        Self { n_bus, branches, in_service }
    }

    pub fn from_system(system: &SystemModel) -> Self {
        Self::new(
            system.buses.len(),
            system
                .branches
                .iter()
                .map(|b| GridBranch {
                    from: b.from_bus,
                    to: b.to_bus,
                    reactance: b.reactance,
                    rating: b.rating,
                })
                .collect(),
        )
    }

    pub fn trip(&mut self, branch: usize) {
        self.in_service[branch] = false;
    }

    /// Connected components of the in-service topology.
    pub fn islands(&self) -> Islands {
        let mut parent: Vec<usize> = (0..self.n_bus).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (b, br) in self.branches.iter().enumerate() {
            if self.in_service[b] {
                let (a, c) = (find(&mut parent, br.from), find(&mut parent, br.to));
                if a != c {
                    // keep the lower index as root so roots are the lowest bus of each island
                    parent[a.max(c)] = a.min(c);
                }
            }
        }
        let mut of_bus = vec![usize::MAX; self.n_bus];
        let mut slack = Vec::new();
        for bus in 0..self.n_bus {
            let root = find(&mut parent, bus);
            if of_bus[root] == usize::MAX {
                of_bus[root] = slack.len();
                slack.push(root);
            }
            of_bus[bus] = of_bus[root];
        }
        Islands { of_bus, slack }
    }

    /// PTDF factors with the lowest-index bus of each island as slack.
    pub fn ptdf(&self) -> Result<PtdfMatrix> {
        self.ptdf_with_slack(&[])
    }

    /// PTDF factors; an island containing one of `preferred` uses it as slack.
    pub fn ptdf_with_slack(&self, preferred: &[usize]) -> Result<PtdfMatrix> {
        let mut islands = self.islands();
        for &p in preferred {
            if p >= self.n_bus {
                return Err(Error::Invalid(format!("slack bus {p} does not exist")));
            }
            islands.slack[islands.of_bus[p]] = p;
        }
        let x = self.reactance_inverse(&islands)?;
        let mut factors = DMatrix::zeros(self.branches.len(), self.n_bus);
        for (l, br) in self.branches.iter().enumerate() {
            if !self.in_service[l] {
                continue;
            }
            for b in 0..self.n_bus {
                let f = (x[(br.from, b)] - x[(br.to, b)]) / br.reactance;
                factors[(l, b)] = if f.abs() < PTDF_ROUNDOFF { 0.0 } else { f };
            }
        }
        Ok(PtdfMatrix { factors, islands })
    }

    /// Inverse of the reduced susceptance matrix of every island, padded with
    /// zero rows and columns at the slack buses.
    fn reactance_inverse(&self, islands: &Islands) -> Result<DMatrix<f64>> {
        let mut x = DMatrix::zeros(self.n_bus, self.n_bus);
        for (island, &slack) in islands.slack.iter().enumerate() {
            let buses: Vec<usize> = (0..self.n_bus)
                .filter(|&b| islands.of_bus[b] == island && b != slack)
                .collect();
            if buses.is_empty() {
                continue;
            }
            let mut pos = vec![usize::MAX; self.n_bus];
            for (i, &b) in buses.iter().enumerate() {
                pos[b] = i;
            }
            let mut bmat = DMatrix::zeros(buses.len(), buses.len());
            for (l, br) in self.branches.iter().enumerate() {
                if !self.in_service[l] || islands.of_bus[br.from] != island {
                    continue;
                }
                let y = 1.0 / br.reactance;
                let (i, j) = (pos[br.from], pos[br.to]);
                if i != usize::MAX {
                    bmat[(i, i)] += y;
                }
                if j != usize::MAX {
                    bmat[(j, j)] += y;
                }
                if i != usize::MAX && j != usize::MAX {
                    bmat[(i, j)] -= y;
                    bmat[(j, i)] -= y;
                }
            }
            let inv = bmat
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::Solver(format!("singular susceptance matrix in island of bus {slack}")))?;
            for (i, &bi) in buses.iter().enumerate() {
                for (j, &bj) in buses.iter().enumerate() {
                    x[(bi, bj)] = inv[(i, j)];
                }
            }
        }
        Ok(x)
    }

    /// DC power flow. Injections must balance within each island.
    pub fn dc_power_flow(&self, injections: &[f64]) -> Result<Vec<f64>> {
        if injections.len() != self.n_bus {
            return Err(Error::Invalid(format!(
                "{} injections for {} buses",
                injections.len(),
                self.n_bus
            )));
        }
        let islands = self.islands();
        let mut imbalance = vec![0.0; islands.count()];
        for (b, p) in injections.iter().enumerate() {
            imbalance[islands.of_bus[b]] += p;
        }
        for (i, &m) in imbalance.iter().enumerate() {
            if m.abs() > BALANCE_TOLERANCE {
                return Err(Error::Invalid(format!(
                    "island of bus {} is unbalanced by {m:.9} MW",
                    islands.slack[i]
                )));
            }
        }
        let x = self.reactance_inverse(&islands)?;
        let theta = &x * DVector::from_column_slice(injections);
        Ok(self
            .branches
            .iter()
            .enumerate()
            .map(|(l, br)| {
                if self.in_service[l] {
                    (theta[br.from] - theta[br.to]) / br.reactance
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Island membership; `slack[i]` is the reference bus of island `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Islands {
    pub of_bus: Vec<usize>,
    pub slack: Vec<usize>,
}

impl Islands {
    pub fn count(&self) -> usize {
        self.slack.len()
    }
}

/// Branch × bus flow sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct PtdfMatrix {
    pub factors: DMatrix<f64>,
    pub islands: Islands,
}

impl PtdfMatrix {
    pub fn get(&self, branch: usize, bus: usize) -> f64 {
        self.factors[(branch, bus)]
    }

    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        (&self.factors * DVector::from_column_slice(injections)).iter().copied().collect()
    }

    pub fn flow(&self, branch: usize, injections: &[f64]) -> f64 {
        self.factors.row(branch).iter().zip(injections).map(|(a, p)| a * p).sum()
    }
}

/// Worst ratio of |flow| to rating over in-service branches.
pub fn max_loading(grid: &Grid, flows: &[f64]) -> f64 {
    grid.branches
        .iter()
        .zip(flows)
        .enumerate()
        .filter(|(l, _)| grid.in_service[*l])
        .map(|(_, (br, f))| f.abs() / br.rating)
        .fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn branch(from: usize, to: usize, x: f64, rating: f64) -> GridBranch {
        GridBranch {
            from,
            to,
            reactance: x,
            rating,
        }
    }

    pub(crate) fn ring() -> Grid {
        Grid::new(3, vec![branch(0, 1, 0.1, 100.0), branch(1, 2, 0.1, 100.0), branch(0, 2, 0.1, 100.0)])
    }

    #[test]
    fn radial_identity() {
        let g = Grid::new(2, vec![branch(0, 1, 0.2, 100.0)]);
        let ptdf = g.ptdf().unwrap();
        assert_eq!(ptdf.get(0, 0), 0.0);
        assert!((ptdf.get(0, 1) + 1.0).abs() < 1e-12);
        let flows = g.dc_power_flow(&[50.0, -50.0]).unwrap();
        assert!((flows[0] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn ring_splits_two_thirds() {
        let g = ring();
        let ptdf = g.ptdf_with_slack(&[2]).unwrap();
        assert!((ptdf.get(2, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((ptdf.get(0, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert!(ptdf.factors.column(2).iter().all(|&v| v == 0.0));
        let flows = g.dc_power_flow(&[90.0, 0.0, -90.0]).unwrap();
        assert!((flows[2] - 60.0).abs() < 1e-9);
        assert!((flows[0] - 30.0).abs() < 1e-9 && (flows[1] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn zero_injection_zero_flow() {
        assert!(ring().dc_power_flow(&[0.0; 3]).unwrap().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn unbalanced_injection_is_rejected() {
        let err = ring().dc_power_flow(&[10.0, 0.0, 0.0]).unwrap_err();
        assert!(err.to_string().contains("unbalanced"));
    }

    #[test]
    fn islands_get_their_own_slack() {
        let mut g = Grid::new(4, vec![branch(0, 1, 0.1, 10.0), branch(1, 2, 0.1, 10.0), branch(2, 3, 0.1, 10.0)]);
        g.trip(1);
        let islands = g.islands();
        assert_eq!(islands.slack, vec![0, 2]);
        assert_eq!(islands.of_bus, vec![0, 0, 1, 1]);
        let flows = g.dc_power_flow(&[5.0, -5.0, -3.0, 3.0]).unwrap();
        assert_eq!(flows[1], 0.0);
        assert!((flows[0] - 5.0).abs() < 1e-12 && (flows[2] + 3.0).abs() < 1e-12);
        assert!(g.dc_power_flow(&[5.0, 0.0, -5.0, 0.0]).is_err());
    }

    #[test]
    fn ptdf_matches_power_flow() {
        let g = ring();
        let ptdf = g.ptdf().unwrap();
        let inj = [30.0, -70.0, 40.0];
        let a = ptdf.flows(&inj);
        let b = g.dc_power_flow(&inj).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
