#![allow(dead_code)]

use argmin::core::{CostFunction, Error as ArgminError, Executor, Gradient, State};
use argmin::solver::linesearch::condition::ArmijoCondition;
use argmin::solver::linesearch::BacktrackingLineSearch;
use argmin::solver::quasinewton::LBFGS;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use cellfree::harness::{ExperimentConfig, Scheme, SchemeList};
use cellfree::{CMat, CVec, C64};

pub fn desk_config() -> ExperimentConfig {
    ExperimentConfig {
        num_aps: 25,
        antennas_per_ap: 4,
        num_users: 10,
        cluster_size: 5,
        csi_size: 4,
        scheme: SchemeList(vec![
            Scheme::PzfDual,
            Scheme::PzfCentralized,
            Scheme::PinvEpa,
        ]),
        iterations: 2,
        trials: 200,
        seed: 1,
        ..ExperimentConfig::default()
    }
}

pub fn cvec(n: usize, rng: &mut impl Rng) -> CVec {
    CVec::from_fn(n, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn cmat(r: usize, c: usize, rng: &mut impl Rng) -> CMat {
    CMat::from_fn(r, c, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// `[[Re, -Im], [Im, Re]]`, so that `real(A) [Re x; Im x] = [Re Ax; Im Ax]`.
pub fn real_embed(a: &CMat) -> DMatrix<f64> {
    let (r, c) = a.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = a[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

pub fn real_vec(v: &CVec) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

fn lbfgs_minimize<P>(problem: P, x0: Vec<f64>, tol: f64, max_iters: u64) -> (Vec<f64>, f64)
where
    P: CostFunction<Param = Vec<f64>, Output = f64>
        + Gradient<Param = Vec<f64>, Gradient = Vec<f64>>,
{
    let ls = BacktrackingLineSearch::new(ArmijoCondition::new(1e-4).unwrap())
        .rho(0.5)
        .unwrap();
    let solver = LBFGS::new(ls, 20)
        .with_tolerance_grad(tol)
        .unwrap()
        // Stops before a converged run feeds a zero curvature pair back in.
        .with_tolerance_cost(1e-15)
        .unwrap();
    let res = Executor::new(problem, solver)
        .configure(|s| s.param(x0).max_iters(max_iters))
        .run()
        .expect("L-BFGS run");
    let state = res.state();
    (
        state.get_best_param().unwrap().clone(),
        state.get_best_cost(),
    )
}

/// `x^T Q x - ln(a^T x)` over real coordinates; `+inf` where `a^T x <= 0`.
struct LogQuadratic {
    q: DMatrix<f64>,
    a: DVector<f64>,
}

impl CostFunction for LogQuadratic {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        let x = DVector::from_column_slice(x);
        let lin = self.a.dot(&x);
        if lin <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(x.dot(&(&self.q * &x)) - lin.ln())
    }
}

impl Gradient for LogQuadratic {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Vec<f64>) -> Result<Vec<f64>, ArgminError> {
        let x = DVector::from_column_slice(x);
        let lin = self.a.dot(&x);
        let g = (&self.q * &x) * 2.0 - &self.a / lin;
        Ok(g.as_slice().to_vec())
    }
}

/// Minimum of `sum_j lambda_j ||N_j c||^2 - ln Re(h^H N c)` by L-BFGS on the
/// real coordinates of `c`. `blocks` are the per-AP row blocks `N_j`, `h` the
/// stacked channel.
pub fn subproblem_oracle(blocks: &[CMat], h: &CVec, lambda: &[f64], tol: f64) -> f64 {
    let d = blocks[0].ncols();
    let mut q = DMatrix::zeros(2 * d, 2 * d);
    let mut a = DVector::zeros(2 * d);
    let mut offset = 0;
    for (n, &l) in blocks.iter().zip(lambda) {
        let r = real_embed(n);
        q += r.transpose() * &r * l;
        let seg = h.rows(offset, n.nrows()).into_owned();
        a += r.transpose() * real_vec(&seg);
        offset += n.nrows();
    }
    let x0 = (&a / a.norm_squared()).as_slice().to_vec();
    lbfgs_minimize(LogQuadratic { q, a }, x0, tol, 100_000).1
}

/// Per-user data of the joint primal problem.
pub struct PrimalUser {
    /// Real embeddings of `N_{k,j}`, one per serving AP.
    pub blocks: Vec<DMatrix<f64>>,
    pub aps: Vec<usize>,
    pub a: DVector<f64>,
}

/// `-sum_k ln(a_k^T x_k) - mu sum_l ln(1 - p_l(x))`.
struct Barrier<'a> {
    users: &'a [PrimalUser],
    num_aps: usize,
    mu: f64,
}

impl Barrier<'_> {
    fn split(&self, x: &[f64]) -> Vec<DVector<f64>> {
        let mut out = Vec::new();
        let mut off = 0;
        for u in self.users {
            let n = u.a.len();
            out.push(DVector::from_column_slice(&x[off..off + n]));
            off += n;
        }
        out
    }

    fn powers(&self, xs: &[DVector<f64>]) -> Vec<f64> {
        let mut p = vec![0.0; self.num_aps];
        for (u, x) in self.users.iter().zip(xs) {
            for (b, &l) in u.blocks.iter().zip(&u.aps) {
                p[l] += (b * x).norm_squared();
            }
        }
        p
    }
}

impl CostFunction for Barrier<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> Result<f64, ArgminError> {
        let xs = self.split(x);
        let mut v = 0.0;
        for (u, x) in self.users.iter().zip(&xs) {
            let lin = u.a.dot(x);
            if lin <= 0.0 {
                return Ok(f64::INFINITY);
            }
            v -= lin.ln();
        }
        for p in self.powers(&xs) {
            if p >= 1.0 {
                return Ok(f64::INFINITY);
            }
            v -= self.mu * (1.0 - p).ln();
        }
        Ok(v)
    }
}

impl Gradient for Barrier<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, x: &Vec<f64>) -> Result<Vec<f64>, ArgminError> {
        let xs = self.split(x);
        let powers = self.powers(&xs);
        let mut g = Vec::with_capacity(x.len());
        for (u, x) in self.users.iter().zip(&xs) {
            let mut gu = -&u.a / u.a.dot(x);
            for (b, &l) in u.blocks.iter().zip(&u.aps) {
                gu += b.transpose() * (b * x) * (2.0 * self.mu / (1.0 - powers[l]));
            }
            g.extend_from_slice(gu.as_slice());
        }
        Ok(g)
    }
}

/// Optimal `sum_k ln(gain_k)` of the joint problem under unit per-AP budgets,
/// by a log-barrier path from a few random feasible starts.
pub fn primal_oracle(
    users: &[PrimalUser],
    num_aps: usize,
    starts: usize,
    rng: &mut impl Rng,
) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for _ in 0..starts {
        let mut x: Vec<f64> = Vec::new();
        for u in users {
            let jitter: DVector<f64> =
                DVector::from_fn(u.a.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let v = &u.a / u.a.norm() + jitter * 0.1;
            x.extend_from_slice(v.as_slice());
        }
        // Shrink until strictly feasible with positive gains.
        let probe = Barrier {
            users,
            num_aps,
            mu: 1.0,
        };
        let mut scale = 1.0;
        while !probe
            .cost(&x.iter().map(|v| v * scale).collect())
            .unwrap()
            .is_finite()
        {
            scale *= 0.5;
            if scale < 1e-12 {
                break;
            }
        }
        let mut x: Vec<f64> = x.iter().map(|v| v * scale * 0.5).collect();
        let mut mu = 1e-1;
        while mu >= 1e-10 {
            let (xn, _) = lbfgs_minimize(Barrier { users, num_aps, mu }, x, 1e-10, 20_000);
            x = xn;
            mu *= 0.1;
        }
        let b = Barrier {
            users,
            num_aps,
            mu: 0.0,
        };
        let xs = b.split(&x);
        let value: f64 = users.iter().zip(&xs).map(|(u, x)| u.a.dot(x).ln()).sum();
        if value > best {
            best = value;
        }
    }
    best
}
