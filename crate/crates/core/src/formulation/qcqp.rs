//! Generic quadratically-constrained quadratic program.
//!
//! Every function is `c + Σ a_k x_k + Σ q_t x_i x_j`, so gradients are
//! affine and Hessians are constant.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadForm {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    /// `(i, j, q)` with `i <= j`, contributing `q * x_i * x_j`.
    pub quadratic: Vec<(usize, usize, f64)>,
}

impl QuadForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lin(&mut self, i: usize, a: f64) -> &mut Self {
        self.linear.push((i, a));
        self
    }

    pub fn quad(&mut self, i: usize, j: usize, q: f64) -> &mut Self {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.quadratic.push((i, j, q));
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant = c;
        self
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.constant;
        for &(i, a) in &self.linear {
            v += a * x[i];
        }
        for &(i, j, q) in &self.quadratic {
            v += q * x[i] * x[j];
        }
        v
    }

    /// `grad += scale * ∇self(x)`.
    pub fn add_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        for &(i, a) in &self.linear {
            grad[i] += scale * a;
        }
        for &(i, j, q) in &self.quadratic {
            if i == j {
                grad[i] += scale * 2.0 * q * x[i];
            } else {
                grad[i] += scale * q * x[j];
                grad[j] += scale * q * x[i];
            }
        }
    }

    /// Emits upper-triangle Hessian entries `(i, j, H_ij)` with `i <= j`.
    pub fn for_each_hessian(&self, mut f: impl FnMut(usize, usize, f64)) {
        for &(i, j, q) in &self.quadratic {
            f(i, j, if i == j { 2.0 * q } else { q });
        }
    }

    /// `out += scale * ∇²self · v`.
    pub fn add_hessian_vector(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        for &(i, j, q) in &self.quadratic {
            if i == j {
                out[i] += scale * 2.0 * q * v[i];
            } else {
                out[i] += scale * q * v[j];
                out[j] += scale * q * v[i];
            }
        }
    }

    /// Sorted, deduplicated list of referenced variables.
    pub fn variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .linear
            .iter()
            .map(|&(i, _)| i)
            .chain(self.quadratic.iter().flat_map(|&(i, j, _)| [i, j]))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// `lower <= form(x) <= upper`; equality when the bounds coincide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub form: QuadForm,
    pub lower: f64,
    pub upper: f64,
    /// Coupling block the row belongs to; `None` for linking rows.
    pub block: Option<usize>,
}

impl Constraint {
    pub fn is_equality(&self) -> bool {
        self.lower == self.upper
    }

    /// Amount by which `value` lies outside `[lower, upper]`.
    pub fn violation(&self, value: f64) -> f64 {
        (self.lower - value).max(value - self.upper).max(0.0)
    }
}

/// `min objective(x)` s.t. constraints and `lower <= x <= upper`.
///
/// Variables and rows may be tagged with a block id. Rows tagged with block
/// `b` may only reference variables of block `b` or linking variables
/// (`None`); the solver exploits this arrowhead structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qcqp {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_block: Vec<Option<usize>>,
    pub constraints: Vec<Constraint>,
    pub objective: QuadForm,
    /// Starting point before interior push.
    pub initial: Vec<f64>,
}

impl Qcqp {
    pub fn n_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn n_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.var_block
            .iter()
            .chain(self.constraints.iter().map(|c| &c.block))
            .filter_map(|b| *b)
            .max()
            .map_or(0, |b| b + 1)
    }

    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.form.eval(x)).collect()
    }

    pub fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.objective.add_gradient(x, 1.0, &mut g);
        g
    }

    /// `∇f(x) + Σ λ_r ∇g_r(x)`.
    pub fn lagrangian_gradient(&self, x: &[f64], obj_scale: f64, lambda: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.objective.add_gradient(x, obj_scale, &mut g);
        for (c, &l) in self.constraints.iter().zip(lambda) {
            if l != 0.0 {
                c.form.add_gradient(x, l, &mut g);
            }
        }
        g
    }

    /// Largest violation over rows and variable bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(c.form.eval(x)))
            .fold(0.0, f64::max);
        let vars = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        rows.max(vars)
    }

    /// Checks index ranges, bound order and the block-structure contract.
    pub fn check_structure(&self) -> Result<(), String> {
        let n = self.n_vars();
        if self.upper.len() != n || self.var_block.len() != n || self.initial.len() != n {
            return Err("variable vectors have inconsistent lengths".into());
        }
        for (i, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(format!("variable {i}: invalid bounds [{l}, {u}]"));
            }
        }
        let within = |block: Option<usize>, vars: &[usize]| -> bool {
            vars.iter().all(|&v| match (block, self.var_block[v]) {
                (_, None) => true,
                (Some(b), Some(vb)) => b == vb,
                (None, Some(_)) => true,
            })
        };
        for (r, c) in self.constraints.iter().enumerate() {
            let vars = c.form.variables();
            if vars.iter().any(|&v| v >= n) {
                return Err(format!("row {r} references a variable out of range"));
            }
            if c.lower.is_nan() || c.upper.is_nan() || c.lower > c.upper {
                return Err(format!("row {r}: invalid bounds [{}, {}]", c.lower, c.upper));
            }
            if !within(c.block, &vars) {
                return Err(format!("row {r} references variables of another block"));
            }
        }
        for &(i, j, _) in &self.objective.quadratic {
            if i >= n || j >= n {
                return Err("objective references a variable out of range".into());
            }
            if let (Some(a), Some(b)) = (self.var_block[i], self.var_block[j]) {
                if a != b {
                    return Err("objective couples variables of different blocks".into());
                }
            }
        }
        if self.objective.linear.iter().any(|&(i, _)| i >= n) {
            return Err("objective references a variable out of range".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_and_hessian_of_a_bilinear_form() {
        let mut q = QuadForm::new();
        q.lin(0, 3.0).quad(0, 0, 2.0).quad(1, 0, -1.0);
        let x = [1.5, -2.0];
        assert_eq!(q.eval(&x), 3.0 * 1.5 + 2.0 * 2.25 + 3.0);
        let mut g = vec![0.0; 2];
        q.add_gradient(&x, 1.0, &mut g);
        assert_eq!(g, vec![3.0 + 4.0 * 1.5 + 2.0, -1.5]);
        let mut h = Vec::new();
        q.for_each_hessian(|i, j, v| h.push((i, j, v)));
        assert_eq!(h, vec![(0, 0, 4.0), (0, 1, -1.0)]);
    }

    #[test]
    fn violation_is_distance_to_interval() {
        let c = Constraint {
            form: QuadForm::new(),
            lower: -1.0,
            upper: 2.0,
            block: None,
        };
        assert_eq!(c.violation(0.0), 0.0);
        assert_eq!(c.violation(3.5), 1.5);
        assert_eq!(c.violation(-4.0), 3.0);
    }
}
