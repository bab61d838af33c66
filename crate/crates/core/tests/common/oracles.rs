//! Brute-force reference computations. Nothing here calls into the solver,
//! DP, regression or planning code of the crate; inputs are plain arrays.

use std::cell::Cell;

/// Hard cap on the number of enumerated objects per oracle call.
pub struct OracleBudget {
    cap: u64,
    used: Cell<u64>,
}

impl OracleBudget {
    pub fn new(cap: u64) -> Self {
        Self { cap, used: Cell::new(0) }
    }

    pub fn spend(&self, n: u64) {
        let used = self.used.get() + n;
        assert!(used <= self.cap, "oracle budget exceeded: {used} > {}", self.cap);
        self.used.set(used);
    }
}

/// Joint-action index with player 0 most significant.
pub fn encode(counts: &[usize], actions: &[usize]) -> usize {
    let mut idx = 0;
    for (n, a) in counts.iter().zip(actions) {
        idx = idx * n + a;
    }
    idx
}

pub fn decode(counts: &[usize], mut joint: usize) -> Vec<usize> {
    let mut out = vec![0; counts.len()];
    for (k, n) in counts.iter().enumerate().rev() {
        out[k] = joint % n;
        joint /= n;
    }
    out
}

/// Every function `0..n -> 0..n`, as vectors.
pub fn all_maps(n: usize, budget: &OracleBudget) -> Vec<Vec<usize>> {
    let total = n.pow(n as u32);
    budget.spend(total as u64);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let v = code % n;
                    code /= n;
                    v
                })
                .collect()
        })
        .collect()
}

/// Largest gain of `player` over `dist` for the given deviation family:
/// unilateral fixed actions when `swap` is false, all maps `a_i -> a_i'`
/// otherwise. `payoffs[i][joint]`.
pub fn exhaustive_gap(counts: &[usize], payoffs: &[Vec<f64>], dist: &[f64], player: usize, swap: bool) -> f64 {
    let budget = OracleBudget::new(100_000);
    let n = counts[player];
    let maps: Vec<Vec<usize>> = if swap {
        all_maps(n, &budget)
    } else {
        (0..n).map(|d| vec![d; n]).collect()
    };
    let size: usize = counts.iter().product();
    let base: f64 = (0..size).map(|a| dist[a] * payoffs[player][a]).sum();
    let mut best = base;
    for map in &maps {
        let mut v = 0.0;
        for (a, &p) in dist.iter().enumerate() {
            let mut acts = decode(counts, a);
            acts[player] = map[acts[player]];
            v += p * payoffs[player][encode(counts, &acts)];
        }
        best = best.max(v);
    }
    best - base
}

/// `max_r (U y)_r - min_c (x^T U)_c` for a row-major matrix `u`.
pub fn duality_gap(u: &[f64], rows: usize, cols: usize, x: &[f64], y: &[f64]) -> f64 {
    let row_best = (0..rows)
        .map(|r| (0..cols).map(|c| u[r * cols + c] * y[c]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let col_best = (0..cols)
        .map(|c| (0..rows).map(|r| u[r * cols + c] * x[r]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    row_best - col_best
}

/// Value of a 2x2 zero-sum game for the row player.
pub fn minimax_2x2(u: [[f64; 2]; 2]) -> f64 {
    let [[a, b], [c, d]] = u;
    let lower = a.min(b).max(c.min(d));
    let upper = a.max(c).min(b.max(d));
    if (lower - upper).abs() < 1e-15 {
        return lower;
    }
    (a * d - b * c) / (a + d - b - c)
}

/// Plain tabular game data: `trans[h][(s * A + a) * S' + s']`,
/// `rew[h][(i * S + s) * A + a]`.
#[derive(Clone, Debug)]
pub struct Game {
    pub counts: Vec<usize>,
    pub states: Vec<usize>,
    pub trans: Vec<Vec<f64>>,
    pub rew: Vec<Vec<f64>>,
    pub init: Vec<f64>,
}

impl Game {
    pub fn horizon(&self) -> usize {
        self.trans.len()
    }

    pub fn joint(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn players(&self) -> usize {
        self.counts.len()
    }
}

/// Value of every player by pushing the state distribution forward and
/// summing expected rewards. `policy[h][s][a]`.
pub fn forward_value(g: &Game, policy: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let a_n = g.joint();
    let m = g.players();
    let mut mu = g.init.clone();
    let mut total = vec![0.0; m];
    for h in 0..g.horizon() {
        let s_n = g.states[h];
        let s2_n = g.states[h + 1];
        let mut next = vec![0.0; s2_n];
        for s in 0..s_n {
            for a in 0..a_n {
                let w = mu[s] * policy[h][s][a];
                if w == 0.0 {
                    continue;
                }
                for (i, t) in total.iter_mut().enumerate() {
                    *t += w * g.rew[h][(i * s_n + s) * a_n + a];
                }
                for (s2, x) in next.iter_mut().enumerate() {
                    *x += w * g.trans[h][(s * a_n + a) * s2_n + s2];
                }
            }
        }
        mu = next;
    }
    total
}

/// Best deviation value of `player` over every deterministic Markov
/// policy (unilateral actions, or swap maps when `swap`), evaluated by
/// [`forward_value`] on the composed policy.
pub fn exhaustive_deviation(g: &Game, policy: &[Vec<Vec<f64>>], player: usize, swap: bool, budget: &OracleBudget) -> f64 {
    let n = g.counts[player];
    let options: Vec<Vec<usize>> = if swap {
        all_maps(n, budget)
    } else {
        (0..n).map(|d| vec![d; n]).collect()
    };
    let slots: Vec<(usize, usize)> = (0..g.horizon())
        .flat_map(|h| (0..g.states[h]).map(move |s| (h, s)))
        .collect();
    let combos = (options.len() as u64).pow(slots.len() as u32);
    budget.spend(combos);
    let mut best = f64::NEG_INFINITY;
    for mut code in 0..combos {
        let mut composed = policy.to_vec();
        for &(h, s) in &slots {
            let map = &options[(code % options.len() as u64) as usize];
            code /= options.len() as u64;
            let mut d = vec![0.0; g.joint()];
            for (a, &p) in policy[h][s].iter().enumerate() {
                let mut acts = decode(&g.counts, a);
                acts[player] = map[acts[player]];
                d[encode(&g.counts, &acts)] += p;
            }
            composed[h][s] = d;
        }
        best = best.max(forward_value(g, &composed)[player]);
    }
    best
}

/// Solve `A x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        assert!(p.abs() > 1e-14, "singular system");
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r][col] / p;
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    (0..n).map(|r| b[r] / a[r][r]).collect()
}

/// Dense ridge `argmin sum_k (x_k . theta - y_k)^2 + lambda |theta|^2`;
/// returns `(theta, mean squared residual + lambda |theta|^2 / n)`.
pub fn dense_ridge(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let d = xs[0].len();
    let mut a = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for (x, y) in xs.iter().zip(ys) {
        for r in 0..d {
            b[r] += x[r] * y;
            for c in 0..d {
                a[r][c] += x[r] * x[c];
            }
        }
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[r] += lambda;
    }
    let theta = gauss_solve(a, b);
    let n = xs.len() as f64;
    let resid: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x.iter().zip(&theta).map(|(p, q)| p * q).sum::<f64>() - y).powi(2))
        .sum();
    let pen: f64 = theta.iter().map(|t| t * t).sum();
    (theta, (resid + lambda * pen) / n)
}

/// `sqrt(x^T (lambda I + sum v v^T)^{-1} x)` by solving the dense system.
pub fn elliptical_norm(x: &[f64], samples: &[Vec<f64>], lambda: f64) -> f64 {
    let d = x.len();
    let mut a = vec![vec![0.0; d]; d];
    for (r, row) in a.iter_mut().enumerate() {
        row[r] = lambda;
    }
    for v in samples {
        for r in 0..d {
            for c in 0..d {
                a[r][c] += v[r] * v[c];
            }
        }
    }
    let y = gauss_solve(a, x.to_vec());
    x.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>().sqrt()
}

/// Upper 1% critical values of the chi-square distribution by degrees of
/// freedom (1..=10), from standard tables.
pub const CHI2_99: [f64; 10] = [6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209];

pub fn chi_square(observed: &[usize]) -> f64 {
    let n: usize = observed.iter().sum();
    let e = n as f64 / observed.len() as f64;
    observed.iter().map(|&o| (o as f64 - e).powi(2) / e).sum()
}

/// Mean over `(s, a)` of `0.5 * sum_s' |p(s, a, s') - q(s, a, s')|`.
pub fn mean_tv(states: usize, actions: usize, next: usize, p: impl Fn(usize, usize, usize) -> f64, q: impl Fn(usize, usize, usize) -> f64) -> f64 {
    let mut total = 0.0;
    for s in 0..states {
        for a in 0..actions {
            total += 0.5 * (0..next).map(|s2| (p(s, a, s2) - q(s, a, s2)).abs()).sum::<f64>();
        }
    }
    total / (states * actions) as f64
}
