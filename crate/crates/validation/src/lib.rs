//! Naive reference implementations used by the acceptance checks.
//!
//! Nothing here shares code with `bodegen`: the GP posterior is computed
//! with an explicit Gauss-Jordan inverse, kernels are written out from their
//! closed forms, and binomials use exact integer arithmetic.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Matern52,
    Rbf,
}

/// `σ_f² · ρ(r)` with `r² = Σ ((x_i - y_i)/l_i)²`.
pub fn kernel(kind: Kernel, lengthscales: &[f64], signal: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for i in 0..x.len() {
        let t = (x[i] - y[i]) / lengthscales[i];
        r2 += t * t;
    }
    let rho = match kind {
        Kernel::Rbf => (-r2 / 2.0).exp(),
        Kernel::Matern52 => {
            let s = (5.0 * r2).sqrt();
            (1.0 + s + s * s / 3.0) * (-s).exp()
        }
    };
    signal * rho
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| aug[p][col].abs().total_cmp(&aug[q][col].abs()))?;
        if aug[pivot][col] == 0.0 {
            return None;
        }
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        let pivot_row = aug[col].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Dense GP posterior `(mean, variance)` at `q`.
///
/// Outputs are standardized with the population standard deviation (1 when
/// it is below 1e-12) and `diag` is added to the covariance diagonal.
#[allow(clippy::too_many_arguments)]
pub fn dense_posterior(
    kind: Kernel,
    lengthscales: &[f64],
    signal: f64,
    diag: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    q: &[f64],
) -> (f64, f64) {
    let n = xs.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
    let scale = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
    let yt: Vec<f64> = ys.iter().map(|y| (y - mean) / scale).collect();

    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = kernel(kind, lengthscales, signal, &xs[i], &xs[j]);
        }
        k[i][i] += diag;
    }
    let inv = invert(&k).expect("covariance is invertible");
    let ks: Vec<f64> = xs.iter().map(|x| kernel(kind, lengthscales, signal, q, x)).collect();

    let mut mu = 0.0;
    let mut explained = 0.0;
    for i in 0..n {
        for j in 0..n {
            mu += ks[i] * inv[i][j] * yt[j];
            explained += ks[i] * inv[i][j] * ks[j];
        }
    }
    (mean + scale * mu, scale * scale * (signal - explained).max(0.0))
}

/// `C(n, k)` in exact integer arithmetic.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Unbiased pass@k estimate `1 - C(n-c, k)/C(n, k)` as an exact fraction
/// `(numerator, denominator)`.
pub fn pass_at_k_fraction(n: u64, c: u64, k: u64) -> (u128, u128) {
    let total = binomial(n, k);
    (total - binomial(n - c, k), total)
}
