//! Gauss–Legendre rules, a globally adaptive 1-D integrator, geometrically
//! graded panels on the unit interval and compensated summation.
//!
//! Everything here is deterministic: node tables are computed with a fixed
//! Newton iteration and every reduction runs in a fixed order.

use crate::error::{ModelError, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule. Nodes are the roots of `P_n`, found by
    /// Newton iteration from the Tricomi initial guess.
    ///
    /// # Panics
    ///
    /// Panics if `n == 0`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "a Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
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

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mut sum = NeumaierSum::default();
        for (x, w) in self.mapped(a, b) {
            sum.add(w * f(x));
        }
        sum.value()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
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

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Panels `[0, r^depth], [r^depth, r^(depth-1)], ..., [r, 1]` covering the
/// unit interval, refined geometrically toward zero.
///
/// Composite Gauss–Legendre on these panels converges exponentially for
/// integrands with algebraic or boundary-layer behaviour at the origin,
/// which is exactly what the power-law quantile substitution produces.
pub fn graded_unit_panels(ratio: f64, depth: usize) -> Vec<(f64, f64)> {
    assert!(ratio > 0.0 && ratio < 1.0, "grading ratio must be in (0, 1)");
    let mut edges: Vec<f64> = (0..=depth).rev().map(|k| ratio.powi(k as i32)).collect();
    edges.insert(0, 0.0);
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Composite rule: every panel gets the full `rule`. Returned as flat
/// `(node, weight)` pairs in increasing node order.
pub fn composite_nodes(rule: &GaussLegendre, panels: &[(f64, f64)]) -> Vec<(f64, f64)> {
    panels
        .iter()
        .flat_map(|&(a, b)| rule.mapped(a, b).collect::<Vec<_>>())
        .collect()
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveEstimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// Globally adaptive integration of `f` over `[a, b]`.
///
/// Each interval is integrated with a 10- and a 20-point Gauss–Legendre
/// rule; their difference is the local error estimate. The interval with
/// the largest estimate is bisected until the summed estimate drops below
/// `rel_tol * |value|` (or below `abs_floor`), or `max_intervals` is hit.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_floor: f64,
    max_intervals: usize,
) -> Result<AdaptiveEstimate> {
    let coarse = GaussLegendre::new(10);
    let fine = GaussLegendre::new(20);
    let eval = |lo: f64, hi: f64| {
        let c = coarse.integrate(lo, hi, &f);
        let v = fine.integrate(lo, hi, &f);
        (v, (v - c).abs())
    };

    struct Piece {
        lo: f64,
        hi: f64,
        value: f64,
        error: f64,
    }

    let (v, e) = eval(a, b);
    let mut pieces = vec![Piece { lo: a, hi: b, value: v, error: e }];
    loop {
        let value: NeumaierSum = pieces.iter().map(|p| p.value).collect();
        let error: NeumaierSum = pieces.iter().map(|p| p.error).collect();
        let (value, error) = (value.value(), error.value());
        if error <= rel_tol * value.abs() || error <= abs_floor {
            return Ok(AdaptiveEstimate {
                value,
                error,
                intervals: pieces.len(),
            });
        }
        if pieces.len() >= max_intervals {
            return Err(ModelError::Tolerance {
                tol: rel_tol,
                estimate: value,
                error,
            });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one interval");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.lo + p.hi);
        let (lv, le) = eval(p.lo, mid);
        let (rv, re) = eval(mid, p.hi);
        pieces.push(Piece { lo: p.lo, hi: mid, value: lv, error: le });
        pieces.push(Piece { lo: mid, hi: p.hi, value: rv, error: re });
    }
}
