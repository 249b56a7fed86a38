//! Standardization followed by PCA.
//!
//! Collinear raw features make the logistic Hessian near-singular, which the
//! influence computation cannot tolerate. Projecting onto the leading
//! principal components removes those directions.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose population std falls below this are treated as constant.
const CONSTANT_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; constant columns hold 1.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let m = x.nrows();
        if m < 2 {
            return Err(Error::validation(format!(
                "standardizer needs at least 2 rows, got {m}"
            )));
        }
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let mean = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let std = var.sqrt();
            means.push(mean);
            stds.push(if std < CONSTANT_STD { 1.0 } else { std });
        }
        Ok(Standardizer { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.means[j]) / self.stds[j]
        }))
    }
}

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Retain {
    Components {
        components: usize,
    },
    /// Smallest count whose cumulative explained variance reaches this
    /// fraction. Exactly 1.0 keeps every component, null directions included.
    Fraction(f64),
}

impl Default for Retain {
    fn default() -> Self {
        Retain::Fraction(0.95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    /// Column means subtracted before projecting (zero for standardized input).
    pub center: Vec<f64>,
    /// p rows of length n, orthonormal.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub retained_fraction: f64,
}

impl PcaTransform {
    pub fn input_dim(&self) -> usize {
        self.center.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x.iter().zip(&self.center))
                    .map(|(a, (v, m))| a * (v - m))
                    .sum()
            })
            .collect())
    }

    /// Maps a projection back to the input space.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: z.len(),
            });
        }
        let mut out = self.center.clone();
        for (c, zi) in self.components.iter().zip(z) {
            for (o, a) in out.iter_mut().zip(c) {
                *o += zi * a;
            }
        }
        Ok(out)
    }
}

/// Eigendecomposition of the population covariance (1/m normalization).
///
/// Components are sorted by decreasing eigenvalue and signed so that the
/// entry of largest magnitude is non-negative.
pub fn fit_pca(x: &DMatrix<f64>, retain: Retain) -> Result<PcaTransform> {
    let (m, n) = x.shape();
    if m == 0 || n == 0 {
        return Err(Error::validation("PCA needs a non-empty matrix"));
    }
    match retain {
        Retain::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::validation(format!(
                "retain fraction must lie in (0, 1], got {f}"
            )))
        }
        Retain::Components { components } if components == 0 || components > m.min(n) => {
            return Err(Error::validation(format!(
                "retain count must lie in 1..={}, got {components}",
                m.min(n)
            )))
        }
        _ => {}
    }

    let center: Vec<f64> = x.column_iter().map(|c| c.sum() / m as f64).collect();
    let centered = DMatrix::from_fn(m, n, |i, j| x[(i, j)] - center[j]);
    let cov = (centered.transpose() * &centered) / m as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();

    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for v in &values {
        acc += v;
        cumulative.push(acc);
    }
    let total = acc;

    let max_components = m.min(n);
    let p = match retain {
        Retain::Components { components } => components,
        Retain::Fraction(f) if f >= 1.0 => max_components,
        Retain::Fraction(f) => {
            let target = f * total;
            cumulative
                .iter()
                .position(|&c| c >= target)
                .map_or(max_components, |i| i + 1)
                .min(max_components)
        }
    };

    let components = order[..p]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v.iter().enumerate().fold(
                0,
                |best, (j, a)| if a.abs() > v[best].abs() { j } else { best },
            );
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|a| *a = -*a);
            }
            v
        })
        .collect();

    Ok(PcaTransform {
        center,
        components,
        explained_variance: values[..p].to_vec(),
        retained_fraction: if total > 0.0 {
            cumulative[p - 1] / total
        } else {
            1.0
        },
    })
}

/// Fitted standardize-then-project pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub standardizer: Standardizer,
    pub pca: PcaTransform,
}

impl Pipeline {
    pub fn fit(x: &DMatrix<f64>, retain: Retain) -> Result<Self> {
        let standardizer = Standardizer::fit(x)?;
        let z = standardizer.apply_matrix(x)?;
        let pca = fit_pca(&z, retain)?;
        Ok(Pipeline { standardizer, pca })
    }

    pub fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.pca.output_dim()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        transform(x, &self.standardizer, &self.pca)
    }
}

pub fn transform(x: &[f64], s: &Standardizer, t: &PcaTransform) -> Result<Vec<f64>> {
    t.project(&s.apply(x)?)
}

pub fn rows_to_matrix(rows: &[&[f64]], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, j| {
            rng.sample::<f64, _>(StandardNormal) * (j + 1) as f64 + j as f64
        })
    }

    #[test]
    fn standardizer_population_convention() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let s = Standardizer::fit(&x).unwrap();
        assert_eq!(s.means, vec![2.0]);
        assert_eq!(s.stds, vec![1.0]);
    }

    #[test]
    fn constant_column_becomes_zero() {
        let x = DMatrix::from_row_slice(3, 1, &[5.0, 5.0, 5.0]);
        let s = Standardizer::fit(&x).unwrap();
        assert_eq!(s.stds, vec![1.0]);
        let z = s.apply_matrix(&x).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standardized_columns_are_centered_and_scaled() {
        let x = random_matrix(40, 5, 1);
        let s = Standardizer::fit(&x).unwrap();
        let z = s.apply_matrix(&x).unwrap();
        for col in z.column_iter() {
            let mean = col.sum() / 40.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 40.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_column_is_dropped() {
        let mut x = random_matrix(30, 4, 2);
        let dup = x.column(1).clone_owned();
        x.set_column(3, &dup);
        let z = Standardizer::fit(&x).unwrap().apply_matrix(&x).unwrap();
        let pca = fit_pca(&z, Retain::Fraction(0.9999)).unwrap();
        assert!(pca.output_dim() <= 3);
    }

    #[test]
    fn full_retention_reconstructs() {
        let x = random_matrix(25, 6, 3);
        let z = Standardizer::fit(&x).unwrap().apply_matrix(&x).unwrap();
        let pca = fit_pca(&z, Retain::Fraction(1.0)).unwrap();
        assert_eq!(pca.output_dim(), 6);
        for row in z.row_iter() {
            let r: Vec<f64> = row.iter().copied().collect();
            let back = pca.reconstruct(&pca.project(&r).unwrap()).unwrap();
            for (a, b) in r.iter().zip(&back) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn components_orthonormal_and_sorted() {
        let x = random_matrix(50, 7, 4);
        let pipe = Pipeline::fit(&x, Retain::Fraction(0.8)).unwrap();
        let c = &pipe.pca.components;
        for i in 0..c.len() {
            for j in 0..c.len() {
                let dot: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
            let lead = c[i]
                .iter()
                .fold(0.0f64, |b, a| if a.abs() > b.abs() { *a } else { b });
            assert!(lead >= 0.0);
        }
        assert!(pipe.pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        assert!(pipe.pca.retained_fraction >= 0.8);
    }

    #[test]
    fn isotropic_data_has_flat_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(20_000, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let pca = fit_pca(&x, Retain::Fraction(1.0)).unwrap();
        for v in &pca.explained_variance {
            assert!((v - 1.0).abs() < 0.05, "{v}");
        }
    }

    #[test]
    fn mean_maps_to_origin() {
        let x = random_matrix(30, 4, 6);
        let pipe = Pipeline::fit(&x, Retain::Fraction(0.9)).unwrap();
        let z = pipe.transform(&pipe.standardizer.means.clone()).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_retain_and_dimension() {
        let x = random_matrix(10, 3, 7);
        assert!(fit_pca(&x, Retain::Fraction(0.0)).is_err());
        assert!(fit_pca(&x, Retain::Fraction(1.5)).is_err());
        assert!(fit_pca(&x, Retain::Components { components: 4 }).is_err());
        let pipe = Pipeline::fit(&x, Retain::Components { components: 2 }).unwrap();
        assert_eq!(pipe.output_dim(), 2);
        assert!(matches!(
            pipe.transform(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
