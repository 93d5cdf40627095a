//! Block-arrowhead symmetric systems
//!
//! ```text
//! [ K_1            B_1 ]
//! [      ...       ... ]
//! [           K_p  B_p ]
//! [ B_1ᵀ ... B_pᵀ  K_0 ]
//! ```
//!
//! solved through per-block factorizations and the dense Schur complement
//! `S = K_0 − Σ B_iᵀ K_i⁻¹ B_i` on the border. Inertia follows from
//! Haynsworth additivity: `In(K) = Σ In(K_i) + In(S)`.

use super::dense::{Inertia, Ldlt, SymMatrix};

#[derive(Debug, Clone)]
pub struct ArrowSystem {
    pub blocks: Vec<SymMatrix>,
    /// Dense `n_i × n_0` coupling per block, row-major.
    pub coupling: Vec<Vec<f64>>,
    pub border: SymMatrix,
}

impl ArrowSystem {
    pub fn new(block_dims: &[usize], border_dim: usize) -> Self {
        Self {
            blocks: block_dims.iter().map(|&n| SymMatrix::zeros(n)).collect(),
            coupling: block_dims.iter().map(|&n| vec![0.0; n * border_dim]).collect(),
            border: SymMatrix::zeros(border_dim),
        }
    }

    pub fn border_dim(&self) -> usize {
        self.border.dim()
    }

    pub fn add_coupling(&mut self, block: usize, row: usize, col: usize, v: f64) {
        let n0 = self.border_dim();
        self.coupling[block][row * n0 + col] += v;
    }

    pub fn clear(&mut self) {
        self.blocks.iter_mut().for_each(SymMatrix::fill_zero);
        self.coupling
            .iter_mut()
            .for_each(|c| c.iter_mut().for_each(|v| *v = 0.0));
        self.border.fill_zero();
    }

    /// `y = K x` with `x` split per block plus the border part.
    pub fn mul(&self, x: &[Vec<f64>], x0: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n0 = self.border_dim();
        let mut y0 = self.border.mul(x0);
        let mut ys = Vec::with_capacity(self.blocks.len());
        for (i, k) in self.blocks.iter().enumerate() {
            let mut y = k.mul(&x[i]);
            let b = &self.coupling[i];
            for r in 0..k.dim() {
                for c in 0..n0 {
                    let v = b[r * n0 + c];
                    if v != 0.0 {
                        y[r] += v * x0[c];
                        y0[c] += v * x[i][r];
                    }
                }
            }
            ys.push(y);
        }
        (ys, y0)
    }

    pub fn factor(&self, zero_tol: f64) -> ArrowFactor {
        let n0 = self.border_dim();
        let mut schur = self.border.clone();
        let mut factors = Vec::with_capacity(self.blocks.len());
        let mut solved = Vec::with_capacity(self.blocks.len());
        let mut inertia = Inertia::default();
        for (i, k) in self.blocks.iter().enumerate() {
            let f = Ldlt::factor(k, zero_tol);
            inertia = inertia + f.inertia();
            let ni = k.dim();
            let b = &self.coupling[i];
            // X_i = K_i⁻¹ B_i, stored column by column (None for empty columns).
            let mut cols: Vec<Option<Vec<f64>>> = vec![None; n0];
            for (c, col) in cols.iter_mut().enumerate() {
                let bc: Vec<f64> = (0..ni).map(|r| b[r * n0 + c]).collect();
                if bc.iter().any(|&v| v != 0.0) {
                    *col = Some(f.solve(&bc));
                }
            }
            for c1 in 0..n0 {
                if cols[c1].is_none() {
                    continue;
                }
                for c2 in 0..=c1 {
                    if let Some(x2) = &cols[c2] {
                        // (B_iᵀ X_i)[c1][c2] = Σ_r B[r][c1] X[r][c2]
                        let v: f64 = (0..ni).map(|r| b[r * n0 + c1] * x2[r]).sum();
                        schur.add(c1, c2, -v);
                    }
                }
            }
            factors.push(f);
            solved.push(cols);
        }
        let s = Ldlt::factor(&schur, zero_tol);
        inertia = inertia + s.inertia();
        ArrowFactor {
            factors,
            solved,
            coupling: self.coupling.clone(),
            schur: s,
            n0,
            inertia,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArrowFactor {
    factors: Vec<Ldlt>,
    solved: Vec<Vec<Option<Vec<f64>>>>,
    coupling: Vec<Vec<f64>>,
    schur: Ldlt,
    n0: usize,
    inertia: Inertia,
}

impl ArrowFactor {
    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    /// Solves in place: `rhs[i]` for each block and `rhs0` for the border.
    pub fn solve(&self, rhs: &mut [Vec<f64>], rhs0: &mut [f64]) {
        let n0 = self.n0;
        for (i, f) in self.factors.iter().enumerate() {
            f.solve_in_place(&mut rhs[i]);
            let b = &self.coupling[i];
            for (r, &y) in rhs[i].iter().enumerate() {
                if y == 0.0 {
                    continue;
                }
                for c in 0..n0 {
                    rhs0[c] -= b[r * n0 + c] * y;
                }
            }
        }
        self.schur.solve_in_place(rhs0);
        for (i, cols) in self.solved.iter().enumerate() {
            for (c, col) in cols.iter().enumerate() {
                if let Some(x) = col {
                    let z = rhs0[c];
                    if z != 0.0 {
                        for (r, v) in rhs[i].iter_mut().enumerate() {
                            *v -= x[r] * z;
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Assembles the arrow system into one dense matrix.
    fn dense(sys: &ArrowSystem) -> (SymMatrix, Vec<usize>) {
        let dims: Vec<usize> = sys.blocks.iter().map(SymMatrix::dim).collect();
        let n0 = sys.border_dim();
        let total = dims.iter().sum::<usize>() + n0;
        let mut m = SymMatrix::zeros(total);
        let mut off = 0;
        let mut offs = Vec::new();
        for (i, k) in sys.blocks.iter().enumerate() {
            offs.push(off);
            for r in 0..dims[i] {
                for c in 0..=r {
                    m.add(off + r, off + c, k.get(r, c));
                }
                for c in 0..n0 {
                    m.add(total - n0 + c, off + r, sys.coupling[i][r * n0 + c]);
                }
            }
            off += dims[i];
        }
        for r in 0..n0 {
            for c in 0..=r {
                m.add(off + r, off + c, sys.border.get(r, c));
            }
        }
        (m, offs)
    }

    #[test]
    fn matches_dense_solve_and_inertia() {
        let mut sys = ArrowSystem::new(&[3, 2], 2);
        let mut seed = 17u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        for b in 0..2 {
            let n = sys.blocks[b].dim();
            for r in 0..n {
                for c in 0..=r {
                    let v = rnd();
                    sys.blocks[b].add(r, c, v);
                }
                sys.blocks[b].add(r, r, if r % 2 == 0 { 3.0 } else { -3.0 });
                for c in 0..2 {
                    let v = rnd();
                    sys.add_coupling(b, r, c, v);
                }
            }
        }
        sys.border.add(0, 0, 4.0);
        sys.border.add(1, 1, -2.0);
        sys.border.add(1, 0, 0.3);

        let (m, _) = dense(&sys);
        let full = Ldlt::factor(&m, 1e-14);
        let fac = sys.factor(1e-14);
        assert_eq!(fac.inertia(), full.inertia());

        let b: Vec<f64> = (0..7).map(|i| i as f64 - 2.5).collect();
        let expect = full.solve(&b);
        let mut rhs = vec![b[0..3].to_vec(), b[3..5].to_vec()];
        let mut rhs0 = b[5..7].to_vec();
        fac.solve(&mut rhs, &mut rhs0);
        let got: Vec<f64> = rhs.concat().into_iter().chain(rhs0).collect();
        for (a, e) in got.iter().zip(&expect) {
            assert!((a - e).abs() < 1e-10, "{got:?} vs {expect:?}");
        }
    }
}
