//! Shared fixtures and independent oracles for the integration tests.
//!
//! The oracles work on nalgebra matrices and never call into the evidence
//! module, so a bug there cannot hide in both routes at once.

#![allow(dead_code)]

use faer::Mat;
use hubrank::{FeatureMatrix, LabelVector};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn to_na(f: &FeatureMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(f.n(), f.dim(), |i, j| f.get(i, j))
}

pub fn mat_to_na(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn na_to_features(m: &DMatrix<f64>) -> FeatureMatrix {
    FeatureMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]).unwrap()
}

/// A regression instance `y = Fw + ε` with heterogeneous column scales.
pub struct Instance {
    pub features: FeatureMatrix,
    pub y: LabelVector,
}

/// `n ∈ [50, 2000]`, `D ∈ [4, min(256, n/2)]`, noise std log-uniform in `[0.1, 3]`.
pub fn regression_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n = r.random_range(50..=2000usize);
    let d = r.random_range(4..=256usize.min(n / 2));
    let scales: Vec<f64> = (0..d).map(|_| r.random_range(-1.0f64..1.0).exp()).collect();
    let w: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
    let noise = (r.random_range(0.1f64.ln()..3.0f64.ln())).exp();
    let mut data = vec![0.0; n * d];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..d {
            let v = scales[j] * normal(&mut r);
            data[i * d + j] = v;
            acc += v * w[j];
        }
        y[i] = acc + noise * normal(&mut r);
    }
    Instance {
        features: FeatureMatrix::from_rows(n, d, &data).unwrap(),
        y: LabelVector::new(y).unwrap(),
    }
}

/// Gaussian clusters with `c` classes; every class appears.
pub fn classification_instance(
    seed: u64,
    n: usize,
    d: usize,
    c: usize,
) -> (FeatureMatrix, Vec<usize>) {
    let mut r = rng(seed);
    let centers: Vec<f64> = (0..c * d).map(|_| 2.0 * normal(&mut r)).collect();
    let labels: Vec<usize> = (0..n)
        .map(|i| if i < c { i } else { r.random_range(0..c) })
        .collect();
    let f =
        FeatureMatrix::from_fn(n, d, |i, j| centers[labels[i] * d + j] + normal(&mut r)).unwrap();
    (f, labels)
}

/// Log evidence via the eigendecomposition of `FᵀF` (no SVD of `F`).
pub struct GramOracle {
    n: usize,
    d: usize,
    eig: Vec<f64>,
    b: Vec<f64>,
    yy: f64,
}

impl GramOracle {
    pub fn new(f: &DMatrix<f64>, y: &[f64]) -> Self {
        let yv = DVector::from_column_slice(y);
        let gram = f.transpose() * f;
        let eig = SymmetricEigen::new(gram);
        let fty = f.transpose() * &yv;
        let b = eig.eigenvectors.transpose() * fty;
        Self {
            n: f.nrows(),
            d: f.ncols(),
            eig: eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect(),
            b: b.iter().copied().collect(),
            yy: yv.dot(&yv),
        }
    }

    pub fn log_evidence(&self, alpha: f64, beta: f64) -> f64 {
        let (n, d) = (self.n as f64, self.d as f64);
        let mut mm = 0.0;
        let mut mb = 0.0;
        let mut mlm = 0.0;
        let mut logdet = 0.0;
        for (&l, &b) in self.eig.iter().zip(&self.b) {
            let a = alpha + beta * l;
            let m = beta * b / a;
            mm += m * m;
            mb += m * b;
            mlm += l * m * m;
            logdet += a.ln();
        }
        let fit = self.yy - 2.0 * mb + mlm;
        0.5 * n * beta.ln() + 0.5 * d * alpha.ln()
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * beta * fit
            - 0.5 * alpha * mm
            - 0.5 * logdet
    }

    /// Best point of a log-spaced grid; returns `(α, β, L/n)`.
    pub fn grid_max(&self, lo: f64, hi: f64, points: usize) -> (f64, f64, f64) {
        let axis: Vec<f64> = (0..points)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (points - 1) as f64).exp())
            .collect();
        let mut best = (f64::NAN, f64::NAN, f64::NEG_INFINITY);
        for &a in &axis {
            for &b in &axis {
                let v = self.log_evidence(a, b) / self.n as f64;
                if v > best.2 {
                    best = (a, b, v);
                }
            }
        }
        best
    }
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let g = DMatrix::from_fn(d, d, |_, _| normal(&mut r));
    g.qr().q()
}

/// Weighted τ computed pair by pair for tie-free inputs: additive hyperbolic
/// weights on the decreasing rank of each side, averaged over both rankings.
pub fn weighted_tau_pairwise(x: &[f64], y: &[f64]) -> f64 {
    let one_side = |lead: &[f64], other: &[f64]| {
        let m = lead.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| lead[b].total_cmp(&lead[a]));
        let mut rank = vec![0usize; m];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        let w = |i: usize| 1.0 / (1.0 + rank[i] as f64);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..m {
            for j in i + 1..m {
                let wij = w(i) + w(j);
                let s = (lead[i] - lead[j]).signum() * (other[i] - other[j]).signum();
                num += wij * s;
                den += wij;
            }
        }
        num / den
    };
    0.5 * (one_side(x, y) + one_side(y, x))
}
