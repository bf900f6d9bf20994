//! Gaussian quadrature rules used by the equilibrium moments and the
//! dispersion integrals.
//!
//! Nodes and weights come from the Golub-Welsch eigenvalue problem for the
//! Jacobi matrix of the orthogonal-polynomial recurrence, solved with a
//! symmetric tridiagonal QL iteration that tracks only the first eigenvector
//! component (all that the weights need).

/// Accumulates `sum w_i * f(x_i)` for any output type that supports it.
macro_rules! impl_sum {
    () => {
        /// Weighted sum `sum_i w_i f(x_i)` over the rule's nodes.
        pub fn sum<T, F>(&self, mut f: F) -> T
        where
            F: FnMut(f64) -> T,
            T: Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
        {
            self.nodes
                .iter()
                .zip(&self.weights)
                .fold(T::default(), |acc, (&x, &w)| acc + f(x) * w)
        }

        pub fn nodes(&self) -> &[f64] {
            &self.nodes
        }

        pub fn weights(&self) -> &[f64] {
            &self.weights
        }

        pub fn len(&self) -> usize {
            self.nodes.len()
        }

        pub fn is_empty(&self) -> bool {
            self.nodes.is_empty()
        }
    };
}

/// Gauss-Legendre rule on [-1, 1] with unit weight.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule with `n` nodes; exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let diag = vec![0.0; n];
        let offdiag: Vec<f64> = (1..n)
            .map(|k| {
                let k = k as f64;
                k / (4.0 * k * k - 1.0).sqrt()
            })
            .collect();
        let (nodes, weights) = golub_welsch(&diag, &offdiag, 2.0);
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self.sum(|x| f(mid + half * x))
    }

    /// Weighted sum over `[a, b]` for complex (or other) outputs.
    pub fn sum_over<T, F>(&self, a: f64, b: f64, mut f: F) -> T
    where
        F: FnMut(f64) -> T,
        T: Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.sum::<T, _>(|x| f(mid + half * x) * half)
    }

    impl_sum!();
}

/// Gauss-Hermite rule: `sum w_i f(x_i)` approximates the integral of
/// `exp(-x^2) f(x)` over the whole real line. Callers factor the Gaussian
/// out of their integrand analytically.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let diag = vec![0.0; n];
        let offdiag: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
        let (nodes, weights) = golub_welsch(&diag, &offdiag, std::f64::consts::PI.sqrt());
        Self { nodes, weights }
    }

    impl_sum!();
}

/// Eigen-decomposition of the symmetric tridiagonal Jacobi matrix.
/// Returns sorted nodes and weights `mu0 * v1_i^2`.
fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    // e[i] couples rows i and i+1; e[n-1] is scratch.
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(offdiag);
    let mut z = vec![0.0; n];
    z[0] = 1.0;

    tql_first_row(&mut d, &mut e, &mut z);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let nodes: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let weights: Vec<f64> = order.iter().map(|&i| mu0 * z[i] * z[i]).collect();
    (nodes, weights)
}

/// QL iteration with implicit shifts on a symmetric tridiagonal matrix,
/// accumulating rotations only into the first-row vector `z`.
fn tql_first_row(d: &mut [f64], e: &mut [f64], z: &mut [f64]) {
    let n = d.len();
    if n == 1 {
        return;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find the smallest m >= l with a negligible off-diagonal e[m].
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 50, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let fz = z[i + 1];
                z[i + 1] = s * z[i] + c * fz;
                z[i] = c * z[i] - s * fz;
            }
            if r == 0.0 && i > l {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}
