//! Exact discrete optimal transport by the transportation simplex method.

use crate::error::{Result, RigError};

const MARGINAL_TOLERANCE: f64 = 1e-6;

/// Coupling between `rows` sources and `cols` sinks.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
    objective: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.mass[i * self.cols..(i + 1) * self.cols]
    }

    /// Total transport cost `Σ Γ_ij C_ij`.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Builds a plan from explicit masses; used for hand-made couplings.
    pub fn from_masses(rows: usize, cols: usize, mass: Vec<f64>, cost: &[Vec<f64>]) -> Result<Self> {
        if mass.len() != rows * cols {
            return Err(RigError::ShapeMismatch(format!(
                "{} masses for a {rows}x{cols} plan",
                mass.len()
            )));
        }
        let objective = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| mass[i * cols + j] * cost.get(i).and_then(|r| r.get(j)).copied().unwrap_or(0.0))
            .sum();
        Ok(Self {
            rows,
            cols,
            mass,
            objective,
        })
    }
}

/// Uniform masses `1/n`.
pub fn uniform_mass(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Pairwise Euclidean distances between two point sets.
pub fn euclidean_cost(a: &[crate::geometry::Vec3], b: &[crate::geometry::Vec3]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|p| b.iter().map(|q| (p - q).norm()).collect())
        .collect()
}

/// Solves `min Σ Γ_ij C_ij` subject to `Γ 1 = row_mass`, `Γᵀ 1 = col_mass`,
/// `Γ ≥ 0` exactly.
///
/// Starts from the north-west corner basis and pivots on the most negative
/// reduced cost. After a run of degenerate pivots it switches to Bland's
/// rule, which cannot cycle.
pub fn solve_ot(cost: &[Vec<f64>], row_mass: &[f64], col_mass: &[f64]) -> Result<TransportPlan> {
    let n = row_mass.len();
    let m = col_mass.len();
    if n == 0 || m == 0 {
        return Err(RigError::InvalidTransport("empty marginal".into()));
    }
    if cost.len() != n || cost.iter().any(|r| r.len() != m) {
        return Err(RigError::InvalidTransport(format!(
            "cost matrix is not {n}x{m}"
        )));
    }
    if cost.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(RigError::InvalidTransport("costs must be finite and non-negative".into()));
    }
    if row_mass.iter().chain(col_mass).any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(RigError::InvalidTransport("masses must be positive".into()));
    }
    let row_total: f64 = row_mass.iter().sum();
    let col_total: f64 = col_mass.iter().sum();
    if (row_total - col_total).abs() > MARGINAL_TOLERANCE {
        return Err(RigError::InfeasibleMarginals {
            row_total,
            col_total,
        });
    }
    let rescale = row_total / col_total;
    let demand: Vec<f64> = col_mass.iter().map(|w| w * rescale).collect();

    let mut solver = Simplex::north_west(cost, row_mass, &demand);
    solver.optimize()?;
    let objective = solver
        .basis
        .iter()
        .map(|&(i, j)| solver.flow[i * m + j] * cost[i][j])
        .sum();
    Ok(TransportPlan {
        rows: n,
        cols: m,
        mass: solver.flow,
        objective,
    })
}

struct Simplex<'a> {
    cost: &'a [Vec<f64>],
    n: usize,
    m: usize,
    flow: Vec<f64>,
    basic: Vec<bool>,
    basis: Vec<(usize, usize)>,
}

impl<'a> Simplex<'a> {
    fn north_west(cost: &'a [Vec<f64>], supply: &[f64], demand: &[f64]) -> Self {
        let (n, m) = (supply.len(), demand.len());
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let mut flow = vec![0.0; n * m];
        let mut basic = vec![false; n * m];
        let mut basis = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let f = s[i].min(d[j]).max(0.0);
            flow[i * m + j] = f;
            basic[i * m + j] = true;
            basis.push((i, j));
            s[i] -= f;
            d[j] -= f;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 || s[i] <= d[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            cost,
            n,
            m,
            flow,
            basic,
            basis,
        }
    }

    /// Tree adjacency over `n` row nodes followed by `m` column nodes; each
    /// entry is `(neighbor node, basis slot)`.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n + self.m];
        for (slot, &(i, j)) in self.basis.iter().enumerate() {
            adj[i].push((self.n + j, slot));
            adj[self.n + j].push((i, slot));
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<(usize, usize)>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (n, m) = (self.n, self.m);
        let mut pot = vec![f64::NAN; n + m];
        pot[0] = 0.0;
        let mut stack = vec![0usize];
        let mut seen = 1;
        while let Some(node) = stack.pop() {
            for &(next, slot) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = self.basis[slot];
                    pot[next] = self.cost[i][j] - pot[node];
                    seen += 1;
                    stack.push(next);
                }
            }
        }
        if seen != n + m {
            return Err(RigError::InvalidTransport("basis is not a spanning tree".into()));
        }
        let v = pot.split_off(n);
        Ok((pot, v))
    }

    /// Basis slots on the tree path from column node `n + j` to row node `i`.
    fn tree_path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let mut via = vec![usize::MAX; self.n + self.m];
        let mut prev = vec![usize::MAX; self.n + self.m];
        let start = i;
        let goal = self.n + j;
        prev[start] = start;
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            if node == goal {
                break;
            }
            for &(next, slot) in &adj[node] {
                if prev[next] == usize::MAX {
                    prev[next] = node;
                    via[next] = slot;
                    stack.push(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = goal;
        while node != start {
            path.push(via[node]);
            node = prev[node];
        }
        path
    }

    fn optimize(&mut self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        let scale = self
            .cost
            .iter()
            .flatten()
            .fold(1.0f64, |a, &c| a.max(c));
        let tolerance = 1e-12 * scale;
        let max_pivots = 50 * (n * m + n + m);
        let mut degenerate_run = 0;
        for _ in 0..max_pivots {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj)?;
            let bland = degenerate_run > n + m;

            let mut entering = None;
            let mut best = -tolerance;
            'scan: for i in 0..n {
                for j in 0..m {
                    if self.basic[i * m + j] {
                        continue;
                    }
                    let r = self.cost[i][j] - u[i] - v[j];
                    if r < best {
                        entering = Some((i, j));
                        if bland {
                            break 'scan;
                        }
                        best = r;
                    }
                }
            }
            let Some((ei, ej)) = entering else {
                return Ok(());
            };

            // Cycle: entering cell (+), then path cells alternating -, +, ...
            let path = self.tree_path(&adj, ei, ej);
            let mut leave = None;
            let mut theta = f64::INFINITY;
            for (k, &slot) in path.iter().enumerate().filter(|(k, _)| k % 2 == 0) {
                let (i, j) = self.basis[slot];
                let f = self.flow[i * m + j];
                let better = match leave {
                    None => true,
                    Some((_, li, lj)) => {
                        f < theta || (bland && f == theta && (i, j) < (li, lj))
                    }
                };
                if better {
                    theta = f;
                    leave = Some((k, i, j));
                }
            }
            let (leave_k, li, lj) = leave.expect("cycle has a decreasing cell");
            degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };

            for (k, &slot) in path.iter().enumerate() {
                let (i, j) = self.basis[slot];
                if k % 2 == 0 {
                    self.flow[i * m + j] -= theta;
                } else {
                    self.flow[i * m + j] += theta;
                }
            }
            self.flow[li * m + lj] = 0.0;
            self.flow[ei * m + ej] += theta;
            let leave_slot = path[leave_k];
            self.basic[li * m + lj] = false;
            self.basic[ei * m + ej] = true;
            self.basis[leave_slot] = (ei, ej);
        }
        Err(RigError::InvalidTransport("pivot limit exceeded".into()))
    }
}
