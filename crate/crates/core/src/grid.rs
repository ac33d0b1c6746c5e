//! Time grids on [0, tau] and grid functions sampled at the nodes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CVec, C64};

/// How a grid's nodes were laid out (kept for reporting).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Grading {
    Uniform,
    /// nodes t_k = tau * (k/N)^gamma, clustering at zero for gamma > 1
    TowardZero { gamma: f64 },
    Custom,
}

/// A partition 0 = t_0 < t_1 < ... < t_N = tau.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    grading: Grading,
}

impl TimeGrid {
    pub fn uniform(tau: f64, cells: usize) -> Result<Arc<TimeGrid>> {
        if !(tau > 0.0) || cells == 0 {
            return Err(Error::invalid("grid needs tau > 0 and at least one cell"));
        }
        let nodes = (0..=cells).map(|k| tau * k as f64 / cells as f64).collect();
        Ok(Arc::new(TimeGrid { nodes, grading: Grading::Uniform }))
    }

    pub fn graded_toward_zero(tau: f64, cells: usize, gamma: f64) -> Result<Arc<TimeGrid>> {
        if !(tau > 0.0) || cells == 0 || !(gamma >= 1.0) {
            return Err(Error::invalid("graded grid needs tau > 0, cells > 0, gamma >= 1"));
        }
        let nodes = (0..=cells)
            .map(|k| tau * (k as f64 / cells as f64).powf(gamma))
            .collect();
        Ok(Arc::new(TimeGrid { nodes, grading: Grading::TowardZero { gamma } }))
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Arc<TimeGrid>> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::invalid("grid needs nodes starting at exactly 0"));
        }
        if !nodes.windows(2).all(|w| w[1] > w[0] && w[1].is_finite()) {
            return Err(Error::invalid("grid nodes must be strictly increasing and finite"));
        }
        Ok(Arc::new(TimeGrid { nodes, grading: Grading::Custom }))
    }

    /// Split every cell in two (midpoints), keeping the grading label.
    pub fn refine(&self) -> Arc<TimeGrid> {
        let mut nodes = Vec::with_capacity(2 * self.cells() + 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(*self.nodes.last().unwrap());
        Arc::new(TimeGrid { nodes, grading: self.grading.clone() })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    /// Number of cells N; there are N + 1 nodes.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }
    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }
    pub fn grading(&self) -> &Grading {
        &self.grading
    }
    pub fn cell_width(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }
    pub fn midpoint(&self, k: usize) -> f64 {
        0.5 * (self.nodes[k] + self.nodes[k + 1])
    }
    pub fn max_width(&self) -> f64 {
        (0..self.cells()).map(|k| self.cell_width(k)).fold(0.0, f64::max)
    }

    /// Index of the last node at or before t.
    pub fn node_at_or_before(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon()).contains(&t) {
            return Err(Error::domain(format!("t = {t} outside [0, {}]", self.horizon())));
        }
        Ok(self.nodes.partition_point(|&x| x <= t) - 1)
    }

    /// Index of the cell containing t (the final node maps to the last cell).
    pub fn cell_of(&self, t: f64) -> Result<usize> {
        Ok(self.node_at_or_before(t)?.min(self.cells() - 1))
    }
}

impl PartialEq for TimeGrid {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

/// A vector-valued function sampled at grid nodes (one value per node);
/// quadrature treats it as constant on [t_k, t_{k+1}) with the left value,
/// so the final node's value never enters integral norms.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<TimeGrid>,
    values: Vec<CVec>,
}

impl GridFunction {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<CVec>) -> Result<GridFunction> {
        if values.len() != grid.nodes().len() {
            return Err(Error::invalid(format!(
                "expected one value per node ({}), got {}",
                grid.nodes().len(),
                values.len()
            )));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid("grid-function values must share a dimension"));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Arc<TimeGrid>, dim: usize) -> GridFunction {
        let values = vec![CVec::zeros(dim); grid.nodes().len()];
        GridFunction { grid, values }
    }

    pub fn sample(grid: Arc<TimeGrid>, mut f: impl FnMut(f64) -> CVec) -> GridFunction {
        let values: Vec<CVec> = grid.nodes().iter().map(|&t| f(t)).collect();
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.values[0].len()
    }
    pub fn values(&self) -> &[CVec] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [CVec] {
        &mut self.values
    }
    /// Value at node k.
    pub fn value(&self, k: usize) -> &CVec {
        &self.values[k]
    }

    /// Left-constant evaluation: the value at the last node <= t.
    pub fn value_at(&self, t: f64) -> Result<&CVec> {
        Ok(&self.values[self.grid.node_at_or_before(t)?])
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Resample onto another grid by left-constant evaluation.
    pub fn resample(&self, grid: Arc<TimeGrid>) -> Result<GridFunction> {
        if grid.horizon() > self.grid.horizon() + 1e-12 * self.grid.horizon() {
            return Err(Error::domain("target grid extends beyond the source horizon"));
        }
        let values = grid
            .nodes()
            .iter()
            .map(|&t| self.value_at(t.min(self.grid.horizon())).cloned())
            .collect::<Result<Vec<_>>>()?;
        GridFunction::new(grid, values)
    }

    pub fn map(&self, f: impl Fn(&CVec) -> CVec) -> GridFunction {
        GridFunction { grid: Arc::clone(&self.grid), values: self.values.iter().map(f).collect() }
    }

    /// Map with the node time available: (t_k, value_k) -> new value.
    pub fn map_with_time(&self, f: impl Fn(f64, &CVec) -> CVec) -> GridFunction {
        GridFunction {
            grid: Arc::clone(&self.grid),
            values: self
                .grid
                .nodes()
                .iter()
                .zip(&self.values)
                .map(|(&t, v)| f(t, v))
                .collect(),
        }
    }

    pub fn scale(&self, a: C64) -> GridFunction {
        self.map(|v| v * a)
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        if !self.same_grid(other) || self.dim() != other.dim() {
            return Err(Error::invalid("grid functions must share grid and dimension"));
        }
        Ok(GridFunction {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.add(&other.scale(crate::c(-1.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c;

    #[test]
    fn uniform_layout() {
        let g = TimeGrid::uniform(2.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(g.cells(), 4);
        assert_eq!(g.cell_of(0.0).unwrap(), 0);
        assert_eq!(g.cell_of(0.5).unwrap(), 1);
        assert_eq!(g.cell_of(1.999).unwrap(), 3);
        assert_eq!(g.cell_of(2.0).unwrap(), 3, "right endpoint belongs to the last cell");
        assert_eq!(g.node_at_or_before(2.0).unwrap(), 4);
        assert!(g.cell_of(2.0 + 1e-9).is_err());
    }

    #[test]
    fn graded_clusters_at_zero() {
        let g = TimeGrid::graded_toward_zero(1.0, 8, 2.0).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert!((g.nodes()[1] - (1.0f64 / 64.0)).abs() < 1e-15);
        assert!(g.cell_width(0) < g.cell_width(7));
        assert_eq!(g.horizon(), 1.0);
    }

    #[test]
    fn refine_halves_cells() {
        let g = TimeGrid::uniform(1.0, 3).unwrap();
        let r = g.refine();
        assert_eq!(r.cells(), 6);
        assert_eq!(r.horizon(), 1.0);
        for k in 0..r.cells() {
            assert!((r.cell_width(k) - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(TimeGrid::from_nodes(vec![0.0]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.2, 0.2]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn node_values_and_lookup() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let f = GridFunction::new(
            Arc::clone(&g),
            vec![
                CVec::from_vec(vec![c(1.0)]),
                CVec::from_vec(vec![c(5.0)]),
                CVec::from_vec(vec![c(9.0)]),
            ],
        )
        .unwrap();
        assert_eq!(f.value_at(0.25).unwrap()[0], c(1.0));
        assert_eq!(f.value_at(0.5).unwrap()[0], c(5.0));
        assert_eq!(f.value_at(0.75).unwrap()[0], c(5.0));
        assert_eq!(f.value_at(1.0).unwrap()[0], c(9.0), "final node keeps its own value");
        let s = f.add(&f).unwrap();
        assert_eq!(s.value(1)[0], c(10.0));
        let d = f.sub(&f).unwrap();
        assert_eq!(d.value(0)[0], c(0.0));
    }

    #[test]
    fn resample_is_left_constant() {
        let coarse = TimeGrid::uniform(1.0, 2).unwrap();
        let f = GridFunction::sample(Arc::clone(&coarse), |t| CVec::from_vec(vec![c(t)]));
        let fine = TimeGrid::uniform(1.0, 4).unwrap();
        let r = f.resample(Arc::clone(&fine)).unwrap();
        assert_eq!(r.value(0)[0], c(0.0));
        assert_eq!(r.value(1)[0], c(0.0), "t=0.25 takes the left node value");
        assert_eq!(r.value(2)[0], c(0.5));
        assert_eq!(r.value(4)[0], c(1.0));
    }
}
