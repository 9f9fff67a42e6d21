//! Dense two-phase revised simplex for the small linear programs behind the
//! hull estimators: `min c.x  s.t.  A x = b, x >= 0` with few rows (about
//! ten) and up to a few thousand columns.

use nalgebra::{DMatrix, DVector};

const COST_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;
const MAX_PIVOTS: usize = 50_000;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    /// Optimal objective value and the row duals `y` (with `y.A_j <= c_j`).
    Optimal { value: f64, duals: Vec<f64> },
    /// Phase-I optimum was positive; `duals` gives a Farkas certificate:
    /// `y.A_j <= 0` for every column and `y.b > 0`.
    Infeasible { duals: Vec<f64> },
    Unbounded,
}

/// Column-major constraint matrix with `m` rows.
pub struct Lp<'a> {
    pub m: usize,
    pub columns: &'a [f64],
}

struct State {
    m: usize,
    n: usize,
    /// Row sign flips that make `b >= 0`.
    sign: Vec<f64>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    b: DVector<f64>,
    pivots: usize,
}

impl<'a> Lp<'a> {
    pub fn new(m: usize, columns: &'a [f64]) -> Self {
        assert!(m > 0 && columns.len().is_multiple_of(m), "column data does not match row count");
        Lp { m, columns }
    }

    pub fn n(&self) -> usize {
        self.columns.len() / self.m
    }

    /// Column `j` of the sign-adjusted system; indices `>= n` are artificials.
    fn column(&self, st: &State, j: usize) -> DVector<f64> {
        if j < st.n {
            DVector::from_iterator(self.m, (0..self.m).map(|i| st.sign[i] * self.columns[j * self.m + i]))
        } else {
            let mut e = DVector::zeros(self.m);
            e[j - st.n] = 1.0;
            e
        }
    }

    fn dot_column(&self, st: &State, y: &DVector<f64>, j: usize) -> f64 {
        if j < st.n {
            let col = &self.columns[j * self.m..(j + 1) * self.m];
            (0..self.m).map(|i| y[i] * st.sign[i] * col[i]).sum()
        } else {
            y[j - st.n]
        }
    }

    fn refactor(&self, st: &mut State) {
        let mut bmat = DMatrix::zeros(st.m, st.m);
        for (k, &j) in st.basis.iter().enumerate() {
            bmat.set_column(k, &self.column(st, j));
        }
        if let Some(inv) = bmat.try_inverse() {
            st.xb = &inv * &st.b;
            st.binv = inv;
        }
    }

    /// Run simplex iterations for `cost` (indexed over real and artificial
    /// columns). Artificial columns never enter when `allow_artificial` is off.
    fn iterate(&self, st: &mut State, cost: &dyn Fn(usize) -> f64, allow_artificial: bool) -> Result<(), ()> {
        let total = st.n + if allow_artificial { st.m } else { 0 };
        let mut stalled = 0usize;
        loop {
            let cb = DVector::from_iterator(st.m, st.basis.iter().map(|&j| cost(j)));
            let y = st.binv.tr_mul(&cb);
            let mut in_basis = vec![false; st.n + st.m];
            for &j in &st.basis {
                in_basis[j] = true;
            }
            // Dantzig pricing, falling back to Bland's rule while stalled.
            let bland = stalled > 2 * st.m;
            let mut entering = None;
            let mut best = -COST_TOL;
            for (j, &basic) in in_basis.iter().enumerate().take(total) {
                if basic {
                    continue;
                }
                let d = cost(j) - self.dot_column(st, &y, j);
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(e) = entering else { return Ok(()) };
            let w = &st.binv * self.column(st, e);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..st.m {
                if w[i] > PIVOT_TOL {
                    let ratio = st.xb[i].max(0.0) / w[i];
                    match leave {
                        Some((r, t)) if ratio > t || (ratio == t && st.basis[i] >= st.basis[r]) => {}
                        _ => leave = Some((i, ratio)),
                    }
                }
            }
            let Some((r, theta)) = leave else { return Err(()) };
            stalled = if theta <= 1e-14 { stalled + 1 } else { 0 };
            for i in 0..st.m {
                if i != r {
                    st.xb[i] -= theta * w[i];
                }
            }
            st.xb[r] = theta;
            let pivot = w[r];
            let row_r = st.binv.row(r).into_owned() / pivot;
            for i in 0..st.m {
                if i != r && w[i] != 0.0 {
                    let f = w[i];
                    for k in 0..st.m {
                        st.binv[(i, k)] -= f * row_r[k];
                    }
                }
            }
            st.binv.set_row(r, &row_r);
            st.basis[r] = e;
            st.pivots += 1;
            if st.pivots.is_multiple_of(REFACTOR_EVERY) {
                self.refactor(st);
            }
            if st.pivots > MAX_PIVOTS {
                return Err(());
            }
        }
    }

    /// Minimise `cost . x` subject to `A x = b, x >= 0`.
    pub fn solve(&self, b: &[f64], cost: &[f64]) -> LpOutcome {
        self.solve_with(b, Some(cost))
    }

    /// Feasibility only (Phase I).
    pub fn feasible(&self, b: &[f64]) -> LpOutcome {
        self.solve_with(b, None)
    }

    fn solve_with(&self, b: &[f64], cost: Option<&[f64]>) -> LpOutcome {
        let (m, n) = (self.m, self.n());
        assert_eq!(b.len(), m);
        let sign: Vec<f64> = b.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let bb = DVector::from_iterator(m, b.iter().zip(&sign).map(|(v, s)| v * s));
        let mut st = State {
            m,
            n,
            sign,
            basis: (n..n + m).collect(),
            binv: DMatrix::identity(m, m),
            xb: bb.clone(),
            b: bb,
            pivots: 0,
        };
        let phase1 = |j: usize| if j >= n { 1.0 } else { 0.0 };
        if self.iterate(&mut st, &phase1, true).is_err() {
            return LpOutcome::Unbounded;
        }
        let infeas: f64 = st.basis.iter().zip(st.xb.iter()).filter(|(&j, _)| j >= n).map(|(_, v)| v).sum();
        let scale = 1.0 + st.b.amax();
        if infeas > 1e-9 * scale {
            let cb = DVector::from_iterator(m, st.basis.iter().map(|&j| phase1(j)));
            // Phase-I duals of the sign-adjusted rows, mapped back to the original ones
            let y = st.binv.tr_mul(&cb);
            let duals = (0..m).map(|i| st.sign[i] * y[i]).collect();
            return LpOutcome::Infeasible { duals };
        }
        let Some(cost) = cost else {
            return LpOutcome::Optimal { value: 0.0, duals: vec![0.0; m] };
        };
        // Drive remaining (zero-level) artificials out of the basis.
        for r in 0..m {
            if st.basis[r] < n {
                continue;
            }
            let in_basis: Vec<usize> = st.basis.clone();
            let row = st.binv.row(r).into_owned();
            let pick = (0..n)
                .filter(|j| !in_basis.contains(j))
                .map(|j| (j, (row.transpose().dot(&self.column(&st, j))).abs()))
                .filter(|&(_, v)| v > PIVOT_TOL)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((j, _)) = pick {
                st.basis[r] = j;
                self.refactor(&mut st);
            }
        }
        let c2 = |j: usize| if j < n { cost[j] } else { 0.0 };
        if self.iterate(&mut st, &c2, false).is_err() {
            return LpOutcome::Unbounded;
        }
        let value = st.basis.iter().zip(st.xb.iter()).map(|(&j, &v)| c2(j) * v).sum();
        let cb = DVector::from_iterator(m, st.basis.iter().map(|&j| c2(j)));
        let y = st.binv.tr_mul(&cb);
        LpOutcome::Optimal {
            value,
            duals: (0..m).map(|i| st.sign[i] * y[i]).collect(),
        }
    }
}
