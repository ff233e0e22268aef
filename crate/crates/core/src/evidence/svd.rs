use faer::{Mat, MatRef};

use super::matrix::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_CUTOFF: f64 = 1e-12;

/// Thin SVD `F = U_r diag(σ) V_rᵀ` truncated to the numerical rank `r`.
///
/// Computed once per feature matrix and shared read-only by every label
/// dimension evaluated against it.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    n: usize,
    d: usize,
    left: Mat<f64>,
    singular: Vec<f64>,
    right: Mat<f64>,
}

impl SvdFactors {
    /// Assembles factors from parts, validating shapes and the ordering of `σ`.
    ///
    /// Orthonormality is checked to 1e-8.
    pub fn from_parts(
        n: usize,
        d: usize,
        left: Mat<f64>,
        singular: Vec<f64>,
        right: Mat<f64>,
    ) -> Result<Self> {
        let r = singular.len();
        if left.shape() != (n, r) {
            return Err(Error::invalid(format!(
                "left vectors are {}x{}, expected {n}x{r}",
                left.nrows(),
                left.ncols()
            )));
        }
        if right.shape() != (d, r) {
            return Err(Error::invalid(format!(
                "right vectors are {}x{}, expected {d}x{r}",
                right.nrows(),
                right.ncols()
            )));
        }
        if r > n.min(d) {
            return Err(Error::invalid(format!("rank {r} exceeds min({n}, {d})")));
        }
        if singular.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid(
                "singular values must be finite and positive",
            ));
        }
        if singular.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("singular values must be non-increasing"));
        }
        for (name, m) in [("left", &left), ("right", &right)] {
            let err = orthonormality_error(m.as_ref());
            if err > 1e-8 {
                return Err(Error::invalid(format!(
                    "{name} vectors are not orthonormal (max deviation {err:e})"
                )));
            }
        }
        Ok(Self {
            n,
            d,
            left,
            singular,
            right,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.singular.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular
    }

    pub fn left_vectors(&self) -> MatRef<'_, f64> {
        self.left.as_ref()
    }

    pub fn right_vectors(&self) -> MatRef<'_, f64> {
        self.right.as_ref()
    }

    /// `U_r diag(σ) V_rᵀ`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let scaled = Mat::from_fn(self.n, self.rank(), |i, k| {
            self.left[(i, k)] * self.singular[k]
        });
        &scaled * self.right.transpose()
    }
}

/// Largest entry of `|QᵀQ - I|`.
pub(crate) fn orthonormality_error(q: MatRef<'_, f64>) -> f64 {
    if q.ncols() == 0 {
        return 0.0;
    }
    let gram = q.transpose() * q;
    let mut worst = 0.0f64;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Thin SVD of `F`, truncated at `σ_i > σ_1 · max(n, D) · 1e-12`.
pub fn decompose(features: &FeatureMatrix) -> Result<SvdFactors> {
    let f = features.as_mat();
    let (n, d) = f.shape();
    let svd = f
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = n.min(d);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].abs().total_cmp(&s[a].abs()));
    let top = order.first().map(|&i| s[i].abs()).unwrap_or(0.0);
    let cutoff = top * (n.max(d) as f64) * RANK_CUTOFF;
    let kept: Vec<usize> = order
        .into_iter()
        .take_while(|&i| top > 0.0 && s[i].abs() > cutoff)
        .collect();
    let r = kept.len();

    let u = svd.U();
    let v = svd.V();
    let mut left = Mat::zeros(n, r);
    let mut right = Mat::zeros(d, r);
    let mut singular = Vec::with_capacity(r);
    for (c, &src) in kept.iter().enumerate() {
        // keep σ positive; flip the left vector if the solver returned a negative value
        let sign = if s[src] < 0.0 { -1.0 } else { 1.0 };
        singular.push(s[src].abs());
        for i in 0..n {
            left[(i, c)] = sign * u[(i, src)];
        }
        for i in 0..d {
            right[(i, c)] = v[(i, src)];
        }
    }
    Ok(SvdFactors {
        n,
        d,
        left,
        singular,
        right,
    })
}

/// Labels expressed in the left singular basis: `z_i = U_iᵀ y` for `i ≤ r`, plus the
/// energy `Δ` left outside the column space of `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedLabels {
    pub z_head: Vec<f64>,
    pub residual_energy: f64,
}

impl ProjectedLabels {
    /// `Σ z_head² + Δ`, which equals `‖y‖²`.
    pub fn total_energy(&self) -> f64 {
        self.z_head.iter().map(|z| z * z).sum::<f64>() + self.residual_energy
    }

    pub(crate) fn from_parts(z_head: Vec<f64>, label_energy: f64) -> Self {
        let head: f64 = z_head.iter().map(|z| z * z).sum();
        let raw = label_energy - head;
        debug_assert!(raw >= -1e-9 * label_energy.max(f64::MIN_POSITIVE));
        Self {
            z_head,
            residual_energy: raw.max(0.0),
        }
    }
}

pub fn project_labels(svd: &SvdFactors, y: &LabelVector) -> Result<ProjectedLabels> {
    if y.len() != svd.n {
        return Err(Error::DimensionMismatch {
            what: "label vector length",
            expected: svd.n,
            got: y.len(),
        });
    }
    let ys = y.as_slice();
    let z_head = (0..svd.rank())
        .map(|k| (0..svd.n).map(|i| svd.left[(i, k)] * ys[i]).sum())
        .collect();
    Ok(ProjectedLabels::from_parts(z_head, y.energy()))
}

/// Projects every column of `Y` (n×C) in one product `U_rᵀ Y`.
pub fn project_label_columns(
    svd: &SvdFactors,
    targets: MatRef<'_, f64>,
) -> Result<Vec<ProjectedLabels>> {
    if targets.nrows() != svd.n {
        return Err(Error::DimensionMismatch {
            what: "label matrix rows",
            expected: svd.n,
            got: targets.nrows(),
        });
    }
    let z = svd.left.transpose() * targets;
    Ok((0..targets.ncols())
        .map(|c| {
            let energy = (0..targets.nrows()).map(|i| targets[(i, c)].powi(2)).sum();
            let head = (0..svd.rank()).map(|k| z[(k, c)]).collect();
            ProjectedLabels::from_parts(head, energy)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng)).unwrap()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let f = FeatureMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 }).unwrap();
        let svd = decompose(&f).unwrap();
        assert_eq!(svd.rank(), 3);
        for s in svd.singular_values() {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let f = FeatureMatrix::from_fn(4, 2, |_, _| 0.0).unwrap();
        let svd = decompose(&f).unwrap();
        assert_eq!(svd.rank(), 0);
        assert_eq!(svd.left_vectors().shape(), (4, 0));
        assert_eq!(svd.right_vectors().shape(), (2, 0));
    }

    #[test]
    fn permuted_diagonal_reads_off_singular_values() {
        let f = FeatureMatrix::from_rows(4, 2, &[3.0, 0.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0]).unwrap();
        let svd = decompose(&f).unwrap();
        assert_eq!(svd.rank(), 2);
        assert!((svd.singular_values()[0] - 4.0).abs() < 1e-14);
        assert!((svd.singular_values()[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn factors_are_orthonormal_and_reconstruct() {
        for (n, d) in [(50, 8), (8, 50), (30, 30)] {
            let f = gaussian(n, d, 7 + n as u64);
            let svd = decompose(&f).unwrap();
            assert_eq!(svd.rank(), n.min(d));
            assert!(orthonormality_error(svd.left_vectors()) < 1e-8);
            assert!(orthonormality_error(svd.right_vectors()) < 1e-8);
            let rec = svd.reconstruct();
            let diff = (&rec - f.as_mat()).norm_l2();
            assert!(diff <= 1e-8 * f.as_mat().norm_l2(), "{n}x{d}: {diff}");
            assert!(svd.singular_values().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn duplicated_columns_do_not_raise_rank() {
        let f = gaussian(40, 5, 3);
        let dup = FeatureMatrix::concat_columns(&[&f, &f, &f]).unwrap();
        assert_eq!(decompose(&dup).unwrap().rank(), 5);
        let zeros = FeatureMatrix::from_fn(40, 16, |_, _| 0.0).unwrap();
        let padded = FeatureMatrix::concat_columns(&[&f, &zeros]).unwrap();
        assert_eq!(decompose(&padded).unwrap().rank(), 5);
    }

    #[test]
    fn projection_of_complete_basis_keeps_energy() {
        let f = FeatureMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 }).unwrap();
        let svd = decompose(&f).unwrap();
        let y = LabelVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let p = project_labels(&svd, &y).unwrap();
        let mut mags: Vec<f64> = p.z_head.iter().map(|z| z.abs()).collect();
        mags.sort_by(f64::total_cmp);
        for (got, want) in mags.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(p.residual_energy, 0.0);
    }

    #[test]
    fn projection_with_rank_zero_is_all_residual() {
        let f = FeatureMatrix::from_fn(4, 2, |_, _| 0.0).unwrap();
        let svd = decompose(&f).unwrap();
        let y = LabelVector::new(vec![1.0; 4]).unwrap();
        let p = project_labels(&svd, &y).unwrap();
        assert!(p.z_head.is_empty());
        assert_eq!(p.residual_energy, 4.0);
    }

    #[test]
    fn energy_identity_on_random_instance() {
        let f = gaussian(50, 8, 11);
        let svd = decompose(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y =
            LabelVector::new((0..50).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
        let p = project_labels(&svd, &y).unwrap();
        assert!(p.residual_energy >= 0.0);
        assert!((p.total_energy() - y.energy()).abs() < 1e-10);
    }

    #[test]
    fn projection_length_mismatch() {
        let f = gaussian(10, 3, 1);
        let svd = decompose(&f).unwrap();
        let y = LabelVector::new(vec![1.0; 9]).unwrap();
        assert!(matches!(
            project_labels(&svd, &y),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn column_projection_matches_single() {
        let f = gaussian(20, 4, 5);
        let svd = decompose(&f).unwrap();
        let y = Mat::from_fn(20, 3, |i, c| ((i * 7 + c * 3) % 5) as f64);
        let all = project_label_columns(&svd, y.as_ref()).unwrap();
        for c in 0..3 {
            let yc = LabelVector::new((0..20).map(|i| y[(i, c)]).collect()).unwrap();
            let one = project_labels(&svd, &yc).unwrap();
            for (a, b) in all[c].z_head.iter().zip(&one.z_head) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((all[c].residual_energy - one.residual_energy).abs() < 1e-10);
        }
    }

    #[test]
    fn from_parts_validates() {
        let left = Mat::from_fn(3, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let right = Mat::from_fn(2, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        assert!(SvdFactors::from_parts(3, 2, left.clone(), vec![2.0], right.clone()).is_ok());
        assert!(SvdFactors::from_parts(3, 2, left.clone(), vec![-2.0], right.clone()).is_err());
        let bad = Mat::from_fn(3, 1, |_, _| 1.0);
        assert!(SvdFactors::from_parts(3, 2, bad, vec![2.0], right).is_err());
    }
}
