//! Dense symmetric indefinite LDLᵀ with Bunch–Kaufman pivoting.

/// Eigenvalue sign counts of a symmetric matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl std::ops::Add for Inertia {
    type Output = Inertia;
    fn add(self, o: Inertia) -> Inertia {
        Inertia {
            positive: self.positive + o.positive,
            negative: self.negative + o.negative,
            zero: self.zero + o.zero,
        }
    }
}

/// Square symmetric matrix; only the lower triangle is read.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `v` to entry `(i, j)`; the pair is mapped to the lower triangle.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.data[i * self.n + j] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.data[i * self.n + j]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            for j in 0..=i {
                let a = self.data[i * n + j];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pivot {
    One,
    /// First column of a 2×2 pivot; the next column is its partner.
    Two,
    Second,
}

/// `P A Pᵀ = L D Lᵀ` with unit lower `L` and 1×1/2×2 block diagonal `D`.
#[derive(Debug, Clone)]
pub struct Ldlt {
    n: usize,
    /// Lower triangle holds `L` below the block diagonal and `D` on it.
    a: Vec<f64>,
    perm: Vec<usize>,
    pivots: Vec<Pivot>,
    /// Symmetric diagonal scaling `S`: the factored matrix is `S A S`.
    scaling: Vec<f64>,
    tiny: f64,
    inertia: Inertia,
}

const ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + √17) / 8

impl Ldlt {
    /// Factorizes `m` after symmetric Ruiz equilibration (which preserves
    /// inertia). Pivots of the equilibrated matrix with magnitude below
    /// `zero_tol` are counted as zero eigenvalues.
    pub fn factor(m: &SymMatrix, zero_tol: f64) -> Self {
        let n = m.n;
        let mut a = m.data.clone();
        let scaling = equilibrate(&mut a, n);
        let tiny = zero_tol;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = vec![Pivot::One; n];
        let mut inertia = Inertia::default();
        let at = |a: &Vec<f64>, i: usize, j: usize| -> f64 {
            if i >= j {
                a[i * n + j]
            } else {
                a[j * n + i]
            }
        };

        let mut k = 0;
        while k < n {
            let akk = a[k * n + k].abs();
            let (mut r, mut lambda) = (k, 0.0);
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > lambda {
                    lambda = v;
                    r = i;
                }
            }
            if akk.max(lambda) <= tiny {
                // Numerically zero column: record a zero pivot and skip.
                inertia.zero += 1;
                a[k * n + k] = 0.0;
                for i in k + 1..n {
                    a[i * n + k] = 0.0;
                }
                pivots[k] = Pivot::One;
                k += 1;
                continue;
            }
            let two = if akk >= ALPHA * lambda {
                false
            } else {
                let mut sigma = 0.0f64;
                for j in k..n {
                    if j != r {
                        sigma = sigma.max(at(&a, r, j).abs());
                    }
                }
                if akk * sigma >= ALPHA * lambda * lambda {
                    false
                } else if a[r * n + r].abs() >= ALPHA * sigma {
                    swap_sym(&mut a, n, &mut perm, k, r);
                    false
                } else {
                    swap_sym(&mut a, n, &mut perm, k + 1, r);
                    true
                }
            };

            if !two {
                let d = a[k * n + k];
                if d.abs() <= tiny {
                    inertia.zero += 1;
                } else if d > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
                let inv = if d.abs() <= tiny { 0.0 } else { 1.0 / d };
                for j in k + 1..n {
                    let cj = a[j * n + k];
                    if cj == 0.0 {
                        continue;
                    }
                    let lj = cj * inv;
                    for i in j..n {
                        a[i * n + j] -= a[i * n + k] * lj;
                    }
                }
                for i in k + 1..n {
                    a[i * n + k] *= inv;
                }
                pivots[k] = Pivot::One;
                k += 1;
            } else {
                let d11 = a[k * n + k];
                let d21 = a[(k + 1) * n + k];
                let d22 = a[(k + 1) * n + k + 1];
                let det = d11 * d22 - d21 * d21;
                // Eigenvalue signs of the 2×2 block.
                if det < 0.0 {
                    inertia.positive += 1;
                    inertia.negative += 1;
                } else if d11 + d22 > 0.0 {
                    inertia.positive += 2;
                } else {
                    inertia.negative += 2;
                }
                for j in k + 2..n {
                    let c1j = a[j * n + k];
                    let c2j = a[j * n + k + 1];
                    let l1j = (c1j * d22 - c2j * d21) / det;
                    let l2j = (c2j * d11 - c1j * d21) / det;
                    for i in j..n {
                        a[i * n + j] -= a[i * n + k] * l1j + a[i * n + k + 1] * l2j;
                    }
                }
                for i in k + 2..n {
                    let c1 = a[i * n + k];
                    let c2 = a[i * n + k + 1];
                    a[i * n + k] = (c1 * d22 - c2 * d21) / det;
                    a[i * n + k + 1] = (c2 * d11 - c1 * d21) / det;
                }
                pivots[k] = Pivot::Two;
                pivots[k + 1] = Pivot::Second;
                k += 2;
            }
        }
        Self {
            n,
            a,
            perm,
            pivots,
            scaling,
            tiny,
            inertia,
        }
    }

    pub fn inertia(&self) -> Inertia {
        self.inertia
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place. Zero pivots act as zero rows (the
    /// corresponding component is set to zero).
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let a = &self.a;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p] * self.scaling[p]).collect();
        // L z = y.
        let mut k = 0;
        while k < n {
            let width = if self.pivots[k] == Pivot::Two { 2 } else { 1 };
            for c in k..k + width {
                let yc = y[c];
                if yc != 0.0 {
                    for i in k + width..n {
                        y[i] -= a[i * n + c] * yc;
                    }
                }
            }
            k += width;
        }
        // D w = z.
        let mut k = 0;
        while k < n {
            if self.pivots[k] == Pivot::Two {
                let d11 = a[k * n + k];
                let d21 = a[(k + 1) * n + k];
                let d22 = a[(k + 1) * n + k + 1];
                let det = d11 * d22 - d21 * d21;
                let (z1, z2) = (y[k], y[k + 1]);
                y[k] = (d22 * z1 - d21 * z2) / det;
                y[k + 1] = (d11 * z2 - d21 * z1) / det;
                k += 2;
            } else {
                let d = a[k * n + k];
                y[k] = if d.abs() <= self.tiny { 0.0 } else { y[k] / d };
                k += 1;
            }
        }
        // Lᵀ v = w.
        let mut k = n;
        while k > 0 {
            let width = if k >= 2 && self.pivots[k - 1] == Pivot::Second { 2 } else { 1 };
            let start = k - width;
            for c in start..k {
                let mut s = y[c];
                for i in k..n {
                    s -= a[i * n + c] * y[i];
                }
                y[c] = s;
            }
            k = start;
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = y[i] * self.scaling[p];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Ruiz scaling of the lower-stored matrix towards unit row max-norms.
fn equilibrate(a: &mut [f64], n: usize) -> Vec<f64> {
    let mut total = vec![1.0; n];
    for _ in 0..4 {
        let mut row = vec![0.0f64; n];
        for i in 0..n {
            for j in 0..=i {
                let v = a[i * n + j].abs();
                row[i] = row[i].max(v);
                row[j] = row[j].max(v);
            }
        }
        let d: Vec<f64> = row
            .iter()
            .map(|&r| if r > 0.0 && r.is_finite() { 1.0 / r.sqrt() } else { 1.0 })
            .collect();
        if d.iter().all(|&v| (v - 1.0).abs() < 1e-3) {
            break;
        }
        for i in 0..n {
            for j in 0..=i {
                a[i * n + j] *= d[i] * d[j];
            }
            total[i] *= d[i];
        }
    }
    total
}

/// Symmetric swap of rows/columns `p < q` in the lower triangle, including
/// the already-factored part of rows `p` and `q`.
fn swap_sym(a: &mut [f64], n: usize, perm: &mut [usize], p: usize, q: usize) {
    if p == q {
        return;
    }
    let (p, q) = if p < q { (p, q) } else { (q, p) };
    perm.swap(p, q);
    a.swap(p * n + p, q * n + q);
    for j in 0..p {
        a.swap(p * n + j, q * n + j);
    }
    for i in p + 1..q {
        a.swap(i * n + p, q * n + i);
    }
    for i in q + 1..n {
        a.swap(i * n + p, i * n + q);
    }
}
