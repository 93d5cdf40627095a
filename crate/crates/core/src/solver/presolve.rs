//! Removal of fixed variables and singleton linear rows.
//!
//! Fixed variables are folded into the remaining forms; a linear row that
//! touches a single free variable becomes a bound on it. The source of every
//! tightened bound is recorded so row multipliers can be recovered after the
//! reduced problem is solved.

use crate::formulation::{Constraint, QuadForm, Qcqp};

/// Gap below which a variable is treated as fixed.
const FIX_GAP: f64 = 1e-10;

/// Bound of a variable that was produced by row `row` with coefficient `coef`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSource {
    pub row: usize,
    pub coef: f64,
}

#[derive(Debug, Clone)]
pub struct Presolved {
    pub reduced: Qcqp,
    /// Reduced variable -> full variable.
    pub var_map: Vec<usize>,
    /// Reduced row -> full row.
    pub row_map: Vec<usize>,
    /// Value of every fixed full variable.
    pub fixed: Vec<Option<f64>>,
    /// Full variables in the order they were fixed.
    pub fix_order: Vec<usize>,
    pub lower_src: Vec<Option<BoundSource>>,
    pub upper_src: Vec<Option<BoundSource>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PresolveError {
    /// Row `row` cannot be satisfied given the variable bounds.
    InfeasibleRow(usize),
    InfeasibleBounds(usize),
}

/// Coefficients of `form` after substituting fixed variables:
/// `(constant, linear terms over free variables, quadratic terms over free
/// variables)`, with duplicate entries merged.
fn substitute(form: &QuadForm, fixed: &[Option<f64>]) -> QuadForm {
    let mut out = QuadForm::new().with_constant(form.constant);
    let mut lin: Vec<(usize, f64)> = Vec::new();
    for &(i, a) in &form.linear {
        match fixed[i] {
            Some(v) => out.constant += a * v,
            None => lin.push((i, a)),
        }
    }
    let mut quad: Vec<(usize, usize, f64)> = Vec::new();
    for &(i, j, q) in &form.quadratic {
        match (fixed[i], fixed[j]) {
            (Some(a), Some(b)) => out.constant += q * a * b,
            (Some(a), None) => lin.push((j, q * a)),
            (None, Some(b)) => lin.push((i, q * b)),
            (None, None) => quad.push((i, j, q)),
        }
    }
    lin.sort_by_key(|&(i, _)| i);
    for (i, a) in lin {
        match out.linear.last_mut() {
            Some((j, b)) if *j == i => *b += a,
            _ => out.linear.push((i, a)),
        }
    }
    out.linear.retain(|&(_, a)| a != 0.0);
    quad.sort_by_key(|&(i, j, _)| (i, j));
    for (i, j, q) in quad {
        match out.quadratic.last_mut() {
            Some((a, b, c)) if (*a, *b) == (i, j) => *c += q,
            _ => out.quadratic.push((i, j, q)),
        }
    }
    out.quadratic.retain(|&(_, _, q)| q != 0.0);
    out
}

fn renumber(form: &QuadForm, map: &[Option<usize>]) -> QuadForm {
    QuadForm {
        constant: form.constant,
        linear: form
            .linear
            .iter()
            .map(|&(i, a)| (map[i].unwrap(), a))
            .collect(),
        quadratic: form
            .quadratic
            .iter()
            .map(|&(i, j, q)| {
                let (a, b) = (map[i].unwrap(), map[j].unwrap());
                (a.min(b), a.max(b), q)
            })
            .collect(),
    }
}

/// `∂form/∂x_j` at `x`.
fn partial(form: &QuadForm, x: &[f64], j: usize) -> f64 {
    let mut d = 0.0;
    for &(i, a) in &form.linear {
        if i == j {
            d += a;
        }
    }
    for &(a, b, q) in &form.quadratic {
        if a == j && b == j {
            d += 2.0 * q * x[j];
        } else if a == j {
            d += q * x[b];
        } else if b == j {
            d += q * x[a];
        }
    }
    d
}

pub fn presolve(q: &Qcqp, tol: f64) -> Result<Presolved, PresolveError> {
    let n = q.n_vars();
    let m = q.n_rows();
    let mut lo = q.lower.clone();
    let mut up = q.upper.clone();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut fix_order = Vec::new();
    let mut lower_src = vec![None; n];
    let mut upper_src = vec![None; n];
    let mut alive = vec![true; m];

    for j in 0..n {
        if up[j] - lo[j] <= FIX_GAP {
            fixed[j] = Some(0.5 * (lo[j] + up[j]));
            fix_order.push(j);
        }
    }

    loop {
        let mut changed = false;
        for r in 0..m {
            if !alive[r] {
                continue;
            }
            let c = &q.constraints[r];
            let form = substitute(&c.form, &fixed);
            if form.linear.is_empty() && form.quadratic.is_empty() {
                if c.violation(form.constant) > tol {
                    return Err(PresolveError::InfeasibleRow(r));
                }
                alive[r] = false;
                changed = true;
                continue;
            }
            if !form.quadratic.is_empty() || form.linear.len() != 1 {
                continue;
            }
            let (j, a) = form.linear[0];
            if a.abs() < 1e-12 {
                continue;
            }
            let (mut new_lo, mut new_up) = ((c.lower - form.constant) / a, (c.upper - form.constant) / a);
            if a < 0.0 {
                std::mem::swap(&mut new_lo, &mut new_up);
            }
            let src = Some(BoundSource { row: r, coef: a });
            if new_lo > lo[j] {
                lo[j] = new_lo;
                lower_src[j] = src;
            }
            if new_up < up[j] {
                up[j] = new_up;
                upper_src[j] = src;
            }
            if lo[j] > up[j] + tol {
                return Err(PresolveError::InfeasibleBounds(j));
            }
            if up[j] - lo[j] <= FIX_GAP {
                let v = 0.5 * (lo[j] + up[j]);
                lo[j] = v;
                up[j] = v;
                fixed[j] = Some(v);
                fix_order.push(j);
            }
            alive[r] = false;
            changed = true;
        }
        if !changed {
            break;
        }
    }

    let mut full_to_red = vec![None; n];
    let mut var_map = Vec::new();
    for j in 0..n {
        if fixed[j].is_none() {
            full_to_red[j] = Some(var_map.len());
            var_map.push(j);
        }
    }
    let mut row_map = Vec::new();
    let mut constraints = Vec::new();
    for r in 0..m {
        if !alive[r] {
            continue;
        }
        let c = &q.constraints[r];
        let form = substitute(&c.form, &fixed);
        constraints.push(Constraint {
            form: renumber(&form, &full_to_red),
            lower: c.lower,
            upper: c.upper,
            block: c.block,
        });
        row_map.push(r);
    }
    let objective = renumber(&substitute(&q.objective, &fixed), &full_to_red);
    let reduced = Qcqp {
        lower: var_map.iter().map(|&j| lo[j]).collect(),
        upper: var_map.iter().map(|&j| up[j]).collect(),
        var_block: var_map.iter().map(|&j| q.var_block[j]).collect(),
        constraints,
        objective,
        initial: var_map.iter().map(|&j| q.initial[j]).collect(),
    };
    Ok(Presolved {
        reduced,
        var_map,
        row_map,
        fixed,
        fix_order,
        lower_src,
        upper_src,
    })
}

impl Presolved {
    /// Expands a reduced point to the full variable space.
    pub fn expand_x(&self, xr: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (k, &j) in self.var_map.iter().enumerate() {
            x[j] = xr[k];
        }
        x
    }

    /// Restricts a full point to the reduced variables.
    pub fn restrict_x(&self, x: &[f64]) -> Vec<f64> {
        self.var_map.iter().map(|&j| x[j]).collect()
    }

    /// Full multipliers `(λ, z_L, z_U)` satisfying stationarity of the full
    /// problem, given multipliers of the reduced problem.
    pub fn recover_duals(
        &self,
        full: &Qcqp,
        x: &[f64],
        obj_scale: f64,
        lambda_r: &[f64],
        zl_r: &[f64],
        zu_r: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = full.n_vars();
        let mut lambda = vec![0.0; full.n_rows()];
        for (k, &r) in self.row_map.iter().enumerate() {
            lambda[r] = lambda_r[k];
        }
        let mut zl = vec![0.0; n];
        let mut zu = vec![0.0; n];

        // Bounds of free variables that stem from rows move to those rows.
        for (k, &j) in self.var_map.iter().enumerate() {
            zl[j] = zl_r[k];
            zu[j] = zu_r[k];
            if let Some(src) = self.lower_src[j] {
                lambda[src.row] += -zl[j] / src.coef;
                zl[j] = 0.0;
            }
            if let Some(src) = self.upper_src[j] {
                lambda[src.row] += zu[j] / src.coef;
                zu[j] = 0.0;
            }
        }

        // Fixed variables, latest first, absorb their stationarity residual.
        let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, c) in full.constraints.iter().enumerate() {
            for v in c.form.variables() {
                rows_of[v].push(r);
            }
        }
        let mut obj_grad = vec![0.0; n];
        full.objective.add_gradient(x, obj_scale, &mut obj_grad);
        for &j in self.fix_order.iter().rev() {
            let mut g = obj_grad[j];
            for &r in &rows_of[j] {
                if lambda[r] != 0.0 {
                    g += lambda[r] * partial(&full.constraints[r].form, x, j);
                }
            }
            // Need -zL + zU = -g.
            if g >= 0.0 {
                match self.lower_src[j] {
                    Some(src) => lambda[src.row] += -g / src.coef,
                    None => zl[j] = g,
                }
            } else {
                match self.upper_src[j] {
                    Some(src) => lambda[src.row] += -g / src.coef,
                    None => zu[j] = -g,
                }
            }
        }
        (lambda, zl, zu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(form: QuadForm, lower: f64, upper: f64) -> Constraint {
        Constraint {
            form,
            lower,
            upper,
            block: None,
        }
    }

    #[test]
    fn singleton_rows_become_bounds_and_fix() {
        // x0 + x1 <= 1 with x1 fixed at 0.25; x2 - x3 = 0 with x3 fixed at 2.
        let mut a = QuadForm::new();
        a.lin(0, 1.0).lin(1, 1.0);
        let mut b = QuadForm::new();
        b.lin(2, 1.0).lin(3, -1.0);
        let q = Qcqp {
            lower: vec![0.0, 0.25, -5.0, 2.0],
            upper: vec![10.0, 0.25, 5.0, 2.0],
            var_block: vec![None; 4],
            constraints: vec![row(a, f64::NEG_INFINITY, 1.0), row(b, 0.0, 0.0)],
            objective: QuadForm::new(),
            initial: vec![0.0; 4],
        };
        let p = presolve(&q, 1e-9).unwrap();
        assert_eq!(p.var_map, vec![0]);
        assert!(p.reduced.constraints.is_empty());
        assert_eq!(p.reduced.upper[0], 0.75);
        assert_eq!(p.upper_src[0].unwrap().row, 0);
        assert_eq!(p.fixed[2], Some(2.0));
    }

    #[test]
    fn contradictory_fixed_row_is_infeasible() {
        let mut a = QuadForm::new();
        a.lin(0, 1.0);
        let q = Qcqp {
            lower: vec![1.0],
            upper: vec![1.0],
            var_block: vec![None],
            constraints: vec![row(a, 2.0, 3.0)],
            objective: QuadForm::new(),
            initial: vec![1.0],
        };
        assert_eq!(presolve(&q, 1e-9).unwrap_err(), PresolveError::InfeasibleRow(0));
    }
}
