use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Piecewise-linear 1-D table, clamped at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Bilinear 2-D table over a rectangular grid, clamped at the edges.
/// `values` is row-major with one row per `x` node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2 {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<f64>,
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::Validation(format!("table axis `{name}` is empty")));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation(format!(
            "table axis `{name}` must be strictly increasing"
        )));
    }
    Ok(())
}

/// Bracketing index and fraction of `v` on `axis` (clamped).
fn locate(axis: &[f64], v: f64) -> (usize, f64) {
    if axis.len() == 1 || v <= axis[0] {
        return (0, 0.0);
    }
    let last = axis.len() - 1;
    if v >= axis[last] {
        return (last - 1, 1.0);
    }
    let i = axis.partition_point(|a| *a <= v) - 1;
    (i, (v - axis[i]) / (axis[i + 1] - axis[i]))
}

impl Table1 {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let t = Table1 { x, y };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        check_axis("x", &self.x)?;
        if self.x.len() != self.y.len() {
            return Err(Error::Validation(format!(
                "table has {} x nodes but {} values",
                self.x.len(),
                self.y.len()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, v: f64) -> f64 {
        if self.x.len() == 1 {
            return self.y[0];
        }
        let (i, f) = locate(&self.x, v);
        self.y[i] + (self.y[i + 1] - self.y[i]) * f
    }
}

impl Table2 {
    pub fn new(x: Vec<f64>, y: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let t = Table2 { x, y, values };
        t.validate()?;
        Ok(t)
    }

    /// Table whose value depends only on `x`.
    pub fn from_rows_constant_y(x: Vec<f64>, y: Vec<f64>, per_x: &[f64]) -> Self {
        let values = per_x
            .iter()
            .flat_map(|v| std::iter::repeat(*v).take(y.len()))
            .collect();
        Table2 { x, y, values }
    }

    pub fn validate(&self) -> Result<()> {
        check_axis("x", &self.x)?;
        check_axis("y", &self.y)?;
        if self.values.len() != self.x.len() * self.y.len() {
            return Err(Error::Validation(format!(
                "table grid {}x{} needs {} values, found {}",
                self.x.len(),
                self.y.len(),
                self.x.len() * self.y.len(),
                self.values.len()
            )));
        }
        Ok(())
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.y.len() + j]
    }

    pub fn eval(&self, xv: f64, yv: f64) -> f64 {
        let (i, fx) = locate(&self.x, xv);
        let (j, fy) = locate(&self.y, yv);
        let i1 = (i + 1).min(self.x.len() - 1);
        let j1 = (j + 1).min(self.y.len() - 1);
        let a = self.at(i, j) + (self.at(i, j1) - self.at(i, j)) * fy;
        let b = self.at(i1, j) + (self.at(i1, j1) - self.at(i1, j)) * fy;
        a + (b - a) * fx
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Table2 {
            x: self.x.clone(),
            y: self.y.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}
