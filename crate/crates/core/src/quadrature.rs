//! Gauss-Legendre rules and a node-doubling driver.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Roots of `P_n` by Newton iteration from Tricomi's initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos() * (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Shared, lazily built rule.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&n) {
            return Arc::clone(rule);
        }
        let rule = Arc::new(GaussLegendre::new(n));
        cache.lock().expect("quadrature cache poisoned").entry(n).or_insert_with(|| Arc::clone(&rule)).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Node-doubling schedule used by the radial oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingSchedule {
    pub start: usize,
    pub cap: usize,
    /// Stop when two successive estimates agree to this relative tolerance.
    pub target: f64,
    /// Fail when the last doubling still changed the estimate by more than this.
    pub accept: f64,
}

impl Default for DoublingSchedule {
    fn default() -> Self {
        Self { start: 200, cap: 3200, target: 1e-11, accept: 1e-8 }
    }
}

/// Integrate `f` over `[a, b]`, doubling the number of nodes until two
/// successive results agree. Returns the value and the node count used.
pub fn integrate_doubling<F: FnMut(f64) -> f64>(a: f64, b: f64, schedule: DoublingSchedule, mut f: F) -> Result<(f64, usize)> {
    let mut n = schedule.start;
    let mut prev = GaussLegendre::cached(n).integrate(a, b, &mut f);
    let mut rel_change = f64::INFINITY;
    while n < schedule.cap {
        n = (2 * n).min(schedule.cap);
        let next = GaussLegendre::cached(n).integrate(a, b, &mut f);
        rel_change = (next - prev).abs() / next.abs().max(f64::MIN_POSITIVE);
        prev = next;
        if rel_change <= schedule.target {
            return Ok((prev, n));
        }
    }
    if rel_change <= schedule.accept {
        Ok((prev, n))
    } else {
        Err(Error::QuadratureNotConverged { rel_change })
    }
}
