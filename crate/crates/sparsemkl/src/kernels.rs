//! Kernel dictionary, Gram matrices, and their spectra.
//!
//! Every kernel is rescaled at construction so that sup_x K(x,x) ≤ 1 (the
//! standing boundedness assumption of the estimator): analytically where the
//! supremum is known in closed form (gaussian, sobolev_fourier, linear, the
//! cosine projection family) and via a seeded 1000-point probe grid for
//! arbitrary projection bases. Points live in the box [0,1]^p as dense real
//! vectors.
//!
//! `GramMatrix` stores the *raw* matrix G[l][k] = K(X_l, X_k); the division by
//! n that produces the normalized operator ĥK = G/n happens in [`spectrum`].
//! Kernels with a finite feature map (sobolev_fourier on one coordinate,
//! linear, projection) also carry the factor Φ with G = ΦΦᵀ, which `spectrum`
//! uses to diagonalize the r×r matrix ΦᵀΦ/n instead of the n×n matrix G/n when
//! r < n — the nonzero eigenvalues and eigenvectors are identical
//! (u = Φw/‖Φw‖) and the remaining eigenvalues are exactly zero.

use crate::error::{MklError, Result};
use crate::linalg::eigh_desc;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// A basis function handle for projection kernels.
pub type BasisFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Kernel kinds supported by the dictionary.
#[derive(Clone)]
pub enum KernelKind {
    /// exp(−‖x−y‖² / (2·bandwidth²)) on the full point vector.
    Gaussian { bandwidth: f64 },
    /// Truncated translation-invariant Sobolev kernel on the torus,
    /// k(s,t) ∝ Σ_{|m|≤T} (m²+1)^{−α} e^{2πim(s−t)}, applied per coordinate in
    /// `coordinate_block` and multiplied across the block (tensor product).
    SobolevFourier {
        alpha: f64,
        truncation: usize,
        coordinate_block: Vec<usize>,
    },
    /// Normalized inner product over a coordinate block: Σ_{i∈B} x_i y_i / |B|.
    Linear { coordinate_block: Vec<usize> },
    /// Finite-rank kernel Σ_b ψ_b(x) ψ_b(y), rescaled by the probed or supplied
    /// supremum of Σ_b ψ_b(x)².
    Projection { basis: Vec<BasisFn> },
    /// Pre-tabulated Gram matrix; no pointwise evaluation rule.
    Tabulated { matrix: Array2<f64> },
}

impl fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::Gaussian { bandwidth } => {
                write!(f, "Gaussian {{ bandwidth: {bandwidth} }}")
            }
            KernelKind::SobolevFourier {
                alpha,
                truncation,
                coordinate_block,
            } => write!(
                f,
                "SobolevFourier {{ alpha: {alpha}, truncation: {truncation}, coordinate_block: {coordinate_block:?} }}"
            ),
            KernelKind::Linear { coordinate_block } => {
                write!(f, "Linear {{ coordinate_block: {coordinate_block:?} }}")
            }
            KernelKind::Projection { basis } => {
                write!(f, "Projection {{ rank: {} }}", basis.len())
            }
            KernelKind::Tabulated { matrix } => {
                write!(f, "Tabulated {{ n: {} }}", matrix.nrows())
            }
        }
    }
}

/// Default number of Fourier modes per coordinate for sobolev_fourier kernels.
pub const DEFAULT_TRUNCATION: usize = 200;

/// A kernel with its construction-time normalization baked in.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub id: String,
    pub kind: KernelKind,
    /// Multiplier applied to the raw kernel so that sup K(x,x) ≤ 1.
    scale: f64,
    /// Cached (m²+1)^{−α} weights for sobolev_fourier kinds.
    sobolev_weights: Option<Arc<Vec<f64>>>,
    /// Cached normalizer Z = 1 + 2Σ w_m for sobolev_fourier kinds.
    sobolev_z: f64,
}

impl Kernel {
    pub fn gaussian(id: impl Into<String>, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(MklError::InvalidInput(format!(
                "gaussian bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Kernel {
            id: id.into(),
            kind: KernelKind::Gaussian { bandwidth },
            scale: 1.0, // K(x,x) = 1 already
            sobolev_weights: None,
            sobolev_z: 1.0,
        })
    }

    pub fn sobolev_fourier(
        id: impl Into<String>,
        alpha: f64,
        truncation: usize,
        coordinate_block: Vec<usize>,
    ) -> Result<Self> {
        if !(alpha > 0.5) {
            return Err(MklError::InvalidInput(format!(
                "sobolev_fourier needs alpha > 1/2, got {alpha}"
            )));
        }
        if truncation == 0 {
            return Err(MklError::InvalidInput(
                "sobolev_fourier needs a positive truncation".into(),
            ));
        }
        if coordinate_block.is_empty() {
            return Err(MklError::InvalidInput(
                "sobolev_fourier needs a nonempty coordinate_block".into(),
            ));
        }
        let weights: Vec<f64> = (1..=truncation)
            .map(|m| ((m * m) as f64 + 1.0).powf(-alpha))
            .collect();
        let z = 1.0 + 2.0 * weights.iter().sum::<f64>();
        Ok(Kernel {
            id: id.into(),
            kind: KernelKind::SobolevFourier {
                alpha,
                truncation,
                coordinate_block,
            },
            // Per-coordinate normalization k(0) = 1 is handled through Z; the
            // tensor product across the block therefore has K(x,x) = 1 exactly.
            scale: 1.0,
            sobolev_weights: Some(Arc::new(weights)),
            sobolev_z: z,
        })
    }

    pub fn linear(id: impl Into<String>, coordinate_block: Vec<usize>) -> Result<Self> {
        if coordinate_block.is_empty() {
            return Err(MklError::InvalidInput(
                "linear kernel needs a nonempty coordinate_block".into(),
            ));
        }
        let scale = 1.0 / coordinate_block.len() as f64; // sup over [0,1]^p of Σ x_i² = |B|
        Ok(Kernel {
            id: id.into(),
            kind: KernelKind::Linear { coordinate_block },
            scale,
            sobolev_weights: None,
            sobolev_z: 1.0,
        })
    }

    /// Projection kernel normalized by probing sup Σ ψ_b(x)² on a seeded
    /// 1000-point grid in [0,1]^`domain_dim` (plus box corners when feasible).
    pub fn projection(
        id: impl Into<String>,
        basis: Vec<BasisFn>,
        domain_dim: usize,
    ) -> Result<Self> {
        if basis.is_empty() {
            return Err(MklError::InvalidInput(
                "projection kernel needs at least one basis function".into(),
            ));
        }
        if domain_dim == 0 {
            return Err(MklError::InvalidInput(
                "projection kernel needs a positive domain dimension".into(),
            ));
        }
        let sup = probe_sup(&basis, domain_dim);
        if !(sup > 0.0) || !sup.is_finite() {
            return Err(MklError::Numerical(format!(
                "projection kernel probe found a degenerate supremum {sup}"
            )));
        }
        Ok(Kernel {
            id: id.into(),
            kind: KernelKind::Projection { basis },
            scale: 1.0 / sup,
            sobolev_weights: None,
            sobolev_z: 1.0,
        })
    }

    /// Projection kernel with an analytically known bound on sup Σ ψ_b(x)².
    pub fn projection_with_bound(
        id: impl Into<String>,
        basis: Vec<BasisFn>,
        sup_bound: f64,
    ) -> Result<Self> {
        if basis.is_empty() {
            return Err(MklError::InvalidInput(
                "projection kernel needs at least one basis function".into(),
            ));
        }
        if !(sup_bound > 0.0) || !sup_bound.is_finite() {
            return Err(MklError::InvalidInput(format!(
                "projection sup bound must be positive and finite, got {sup_bound}"
            )));
        }
        Ok(Kernel {
            id: id.into(),
            kind: KernelKind::Projection { basis },
            scale: 1.0 / sup_bound,
            sobolev_weights: None,
            sobolev_z: 1.0,
        })
    }

    /// Tabulated kernel from a precomputed symmetric matrix. Rescaled so the
    /// largest diagonal entry is at most 1.
    pub fn tabulated(id: impl Into<String>, matrix: Array2<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || n != matrix.ncols() {
            return Err(MklError::DimensionMismatch(format!(
                "tabulated kernel needs a square nonempty matrix, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((matrix[[i, j]] - matrix[[j, i]]).abs());
            }
        }
        if asym > 1e-10 {
            return Err(MklError::Data(format!(
                "tabulated kernel matrix is asymmetric (max |G − Gᵀ| = {asym:.3e})"
            )));
        }
        let max_diag = (0..n).map(|i| matrix[[i, i]]).fold(f64::NEG_INFINITY, f64::max);
        let scale = if max_diag > 1.0 { 1.0 / max_diag } else { 1.0 };
        let matrix = (&matrix + &matrix.t()) * (0.5 * scale);
        Ok(Kernel {
            id: id.into(),
            kind: KernelKind::Tabulated { matrix },
            scale: 1.0, // already folded into the stored matrix
            sobolev_weights: None,
            sobolev_z: 1.0,
        })
    }

    /// The normalization multiplier applied to the raw kernel.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// One-coordinate truncated Sobolev kernel value at lag t, normalized so
    /// the value at t = 0 is exactly 1. Uses the Chebyshev recurrence
    /// cos(mθ) = 2cos(θ)cos((m−1)θ) − cos((m−2)θ).
    fn sobolev1(&self, t: f64) -> f64 {
        let weights = self
            .sobolev_weights
            .as_ref()
            .expect("sobolev1 called on a non-sobolev kernel");
        let theta = 2.0 * std::f64::consts::PI * t;
        let c = theta.cos();
        let mut prev = 1.0; // cos(0·θ)
        let mut curr = c; // cos(1·θ)
        let mut sum = 0.0;
        for &w in weights.iter() {
            sum += w * curr;
            let next = 2.0 * c * curr - prev;
            prev = curr;
            curr = next;
        }
        (1.0 + 2.0 * sum) / self.sobolev_z
    }
}

/// Evaluate K(x,y). Errors for tabulated kernels (no pointwise rule) and when
/// point dimensions disagree with the declared coordinate block.
pub fn eval_kernel(k: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(MklError::DimensionMismatch(format!(
            "points have different dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    match &k.kind {
        KernelKind::Gaussian { bandwidth } => {
            let d2: f64 = x
                .iter()
                .zip(y.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            Ok(k.scale * (-d2 / (2.0 * bandwidth * bandwidth)).exp())
        }
        KernelKind::SobolevFourier {
            coordinate_block, ..
        } => {
            check_block(coordinate_block, x.len())?;
            let mut prod = 1.0;
            for &c in coordinate_block {
                prod *= k.sobolev1(x[c] - y[c]);
            }
            Ok(k.scale * prod)
        }
        KernelKind::Linear { coordinate_block } => {
            check_block(coordinate_block, x.len())?;
            let dot: f64 = coordinate_block.iter().map(|&c| x[c] * y[c]).sum();
            Ok(k.scale * dot)
        }
        KernelKind::Projection { basis } => {
            let mut sum = 0.0;
            for b in basis {
                sum += b(x) * b(y);
            }
            Ok(k.scale * sum)
        }
        KernelKind::Tabulated { .. } => Err(MklError::InvalidInput(format!(
            "kernel '{}' is tabulated and has no pointwise evaluation rule",
            k.id
        ))),
    }
}

fn check_block(block: &[usize], dim: usize) -> Result<()> {
    match block.iter().max() {
        Some(&m) if m >= dim => Err(MklError::DimensionMismatch(format!(
            "coordinate_block index {m} out of range for points of dimension {dim}"
        ))),
        _ => Ok(()),
    }
}

/// Probe grid for projection-kernel normalization: 1000 seeded uniform points
/// plus the origin, the center, and the all-ones corner.
fn probe_sup(basis: &[BasisFn], dim: usize) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let mut best = f64::NEG_INFINITY;
    let mut point = vec![0.0f64; dim];
    let mut eval = |p: &[f64]| basis.iter().map(|b| b(p) * b(p)).sum::<f64>();
    best = best.max(eval(&point));
    point.iter_mut().for_each(|v| *v = 0.5);
    best = best.max(eval(&point));
    point.iter_mut().for_each(|v| *v = 1.0);
    best = best.max(eval(&point));
    for _ in 0..1000 {
        point.iter_mut().for_each(|v| *v = rng.random::<f64>());
        best = best.max(eval(&point));
    }
    best
}

/// An ordered dictionary of kernels with unique ids.
#[derive(Clone, Debug)]
pub struct KernelDictionary {
    kernels: Vec<Kernel>,
}

impl KernelDictionary {
    pub fn new(kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(MklError::InvalidInput(
                "a kernel dictionary needs at least one kernel".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for k in &kernels {
            if !seen.insert(k.id.clone()) {
                return Err(MklError::InvalidInput(format!(
                    "duplicate kernel id '{}'",
                    k.id
                )));
            }
        }
        Ok(KernelDictionary { kernels })
    }

    /// N single-coordinate Sobolev kernels, kernel j on coordinate j.
    pub fn sobolev_family(n_kernels: usize, alpha: f64, truncation: usize) -> Result<Self> {
        let kernels = (0..n_kernels)
            .map(|j| Kernel::sobolev_fourier(format!("sob{j}"), alpha, truncation, vec![j]))
            .collect::<Result<Vec<_>>>()?;
        KernelDictionary::new(kernels)
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn get(&self, j: usize) -> &Kernel {
        &self.kernels[j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.kernels.iter().position(|k| k.id == id)
    }
}

/// Raw Gram matrix G[l][k] = K(X_l, X_k) with an optional low-rank factor
/// Φ such that G = ΦΦᵀ (present for finite-feature kernels).
#[derive(Clone, Debug)]
pub struct GramMatrix {
    entries: Array2<f64>,
    n: usize,
    factor: Option<Array2<f64>>,
}

impl GramMatrix {
    /// Wrap a precomputed symmetric matrix (test fixtures, external data).
    /// Symmetry is checked to 1e-10; normalization is the caller's business.
    pub fn from_entries(entries: Array2<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || n != entries.ncols() {
            return Err(MklError::DimensionMismatch(format!(
                "Gram matrix must be square and nonempty, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (entries[[i, j]] - entries[[j, i]]).abs() > 1e-10 {
                    return Err(MklError::Data(format!(
                        "Gram matrix asymmetric at ({i},{j}): {} vs {}",
                        entries[[i, j]],
                        entries[[j, i]]
                    )));
                }
            }
        }
        Ok(GramMatrix {
            entries,
            n,
            factor: None,
        })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> Option<&Array2<f64>> {
        self.factor.as_ref()
    }
}

/// Feature matrix Φ (n×r) with K(x,y) = φ(x)·φ(y), for kernels that admit a
/// finite feature map. `None` for gaussian, tabulated, and multi-coordinate
/// sobolev_fourier kernels.
pub(crate) fn feature_matrix(k: &Kernel, x: &ArrayView2<f64>) -> Result<Option<Array2<f64>>> {
    let n = x.nrows();
    let p = x.ncols();
    match &k.kind {
        KernelKind::SobolevFourier {
            truncation,
            coordinate_block,
            ..
        } if coordinate_block.len() == 1 => {
            check_block(coordinate_block, p)?;
            let c = coordinate_block[0];
            let t = *truncation;
            let weights = k.sobolev_weights.as_ref().unwrap();
            let z = k.sobolev_z;
            // Columns: 1/√Z, then per mode m the pair
            // √(2 w_m / Z)·cos(2πmx), √(2 w_m / Z)·sin(2πmx).
            let mut phi = Array2::<f64>::zeros((n, 2 * t + 1));
            let w0 = (1.0 / z).sqrt();
            for i in 0..n {
                let theta = 2.0 * std::f64::consts::PI * x[[i, c]];
                let (sin1, cos1) = theta.sin_cos();
                phi[[i, 0]] = w0;
                // cos/sin multiple-angle recurrences.
                let mut cos_prev = 1.0;
                let mut cos_curr = cos1;
                let mut sin_prev = 0.0;
                let mut sin_curr = sin1;
                for (m, &w) in weights.iter().enumerate() {
                    let amp = (2.0 * w / z).sqrt();
                    phi[[i, 2 * m + 1]] = amp * cos_curr;
                    phi[[i, 2 * m + 2]] = amp * sin_curr;
                    let cos_next = 2.0 * cos1 * cos_curr - cos_prev;
                    let sin_next = 2.0 * cos1 * sin_curr - sin_prev;
                    cos_prev = cos_curr;
                    cos_curr = cos_next;
                    sin_prev = sin_curr;
                    sin_curr = sin_next;
                }
            }
            Ok(Some(phi))
        }
        KernelKind::Linear { coordinate_block } => {
            check_block(coordinate_block, p)?;
            let s = k.scale.sqrt();
            let mut phi = Array2::<f64>::zeros((n, coordinate_block.len()));
            for i in 0..n {
                for (b, &c) in coordinate_block.iter().enumerate() {
                    phi[[i, b]] = s * x[[i, c]];
                }
            }
            Ok(Some(phi))
        }
        KernelKind::Projection { basis } => {
            let s = k.scale.sqrt();
            let mut phi = Array2::<f64>::zeros((n, basis.len()));
            let mut row = vec![0.0f64; p];
            for i in 0..n {
                row.iter_mut().zip(x.row(i).iter()).for_each(|(d, &s)| *d = s);
                for (b, f) in basis.iter().enumerate() {
                    phi[[i, b]] = s * f(&row);
                }
            }
            Ok(Some(phi))
        }
        _ => Ok(None),
    }
}

/// Pairwise kernel evaluations at the sample points. For tabulated kernels the
/// stored matrix is returned (its size must match `x`); the point values are
/// not consulted.
pub fn gram(k: &Kernel, x: &ArrayView2<f64>) -> Result<GramMatrix> {
    let n = x.nrows();
    if n == 0 {
        return Err(MklError::InvalidInput("gram needs at least one point".into()));
    }
    if let KernelKind::Tabulated { matrix } = &k.kind {
        if matrix.nrows() != n {
            return Err(MklError::DimensionMismatch(format!(
                "tabulated kernel has {} rows but {} points were supplied",
                matrix.nrows(),
                n
            )));
        }
        return Ok(GramMatrix {
            entries: matrix.clone(),
            n,
            factor: None,
        });
    }
    let (entries, factor) = if let Some(phi) = feature_matrix(k, x)? {
        (phi.dot(&phi.t()), Some(phi))
    } else {
        let mut g = Array2::<f64>::zeros((n, n));
        let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
        for i in 0..n {
            for j in i..n {
                let v = eval_kernel(k, &rows[i], &rows[j])?;
                g[[i, j]] = v;
                g[[j, i]] = v;
            }
        }
        (g, None)
    };
    for i in 0..n {
        if entries[[i, i]] > 1.0 + 1e-10 {
            return Err(MklError::Data(format!(
                "kernel '{}' diagonal entry {} exceeds 1 + 1e-10 at point {i}; \
                 normalization is invalid",
                k.id,
                entries[[i, i]]
            )));
        }
    }
    Ok(GramMatrix { entries, n, factor })
}

/// Eigendecomposition of ĥK = G/n: eigenvalues descending and clipped to
/// [0, ∞), eigenvectors orthonormal (one column per retained eigenvalue).
#[derive(Clone, Debug)]
pub struct GramSpectrum {
    /// All n eigenvalues of ĥK, descending, negatives clipped to 0.
    eigenvalues: Vec<f64>,
    /// Orthonormal eigenvector columns for the leading `u.ncols()` eigenvalues.
    u: Array2<f64>,
    n: usize,
}

impl GramSpectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn u(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Largest allowed magnitude of a negative eigenvalue, relative to λ̂_max,
/// before the matrix is declared not numerically PSD.
const CLIP_GUARD_REL: f64 = 1e-8;

pub fn spectrum(g: &GramMatrix) -> Result<GramSpectrum> {
    let n = g.n;
    let nf = n as f64;
    // Factor path: eigenvalues of ΦᵀΦ/n equal the nonzero eigenvalues of
    // ΦΦᵀ/n = G/n, with eigenvectors u = Φw/‖Φw‖.
    if let Some(phi) = &g.factor {
        let r = phi.ncols();
        if r < n {
            let small = phi.t().dot(phi) / nf;
            let (vals, w) = eigh_desc(&small)?;
            let clipped = clip_eigenvalues(&vals)?;
            // Retain directions that can be normalized stably.
            let lam_max = clipped.first().copied().unwrap_or(0.0);
            let keep = clipped
                .iter()
                .take_while(|&&v| v > lam_max * 1e-12 && v > 0.0)
                .count();
            let mut u = Array2::<f64>::zeros((n, keep));
            for kcol in 0..keep {
                let col = phi.dot(&w.column(kcol).to_owned());
                let nrm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
                u.column_mut(kcol).assign(&(&col / nrm));
            }
            let mut eigenvalues = clipped;
            eigenvalues.resize(n, 0.0);
            return Ok(GramSpectrum { eigenvalues, u, n });
        }
    }
    let scaled = &g.entries / nf;
    let (vals, u) = eigh_desc(&scaled)?;
    let eigenvalues = clip_eigenvalues(&vals)?;
    Ok(GramSpectrum { eigenvalues, u, n })
}

/// Clip small negative eigenvalues to zero; error when the most negative
/// eigenvalue is large relative to the top one (matrix not numerically PSD).
fn clip_eigenvalues(desc: &[f64]) -> Result<Vec<f64>> {
    let lam_max = desc.first().copied().unwrap_or(0.0).max(0.0);
    let most_negative = desc.last().copied().unwrap_or(0.0).min(0.0);
    if -most_negative > CLIP_GUARD_REL * lam_max.max(f64::EPSILON) {
        return Err(MklError::Data(format!(
            "matrix is not numerically PSD: eigenvalue {most_negative:.6e} \
             exceeds the clip guard {CLIP_GUARD_REL:.0e}·λ_max (λ_max = {lam_max:.6e})"
        )));
    }
    Ok(desc.iter().map(|&v| v.max(0.0)).collect())
}

/// Σ_i coef_i · K(x_eval_row, x_train_i) for every row of `x_eval`, using the
/// feature map when the kernel has one (O((n+m)·r) instead of O(n·m)).
pub fn apply_sections(
    k: &Kernel,
    x_train: &ArrayView2<f64>,
    coef: &Array1<f64>,
    x_eval: &ArrayView2<f64>,
) -> Result<Array1<f64>> {
    let n = x_train.nrows();
    if coef.len() != n {
        return Err(MklError::DimensionMismatch(format!(
            "{} coefficients for {} training points",
            coef.len(),
            n
        )));
    }
    if x_eval.ncols() != x_train.ncols() {
        return Err(MklError::DimensionMismatch(format!(
            "evaluation points have dimension {} but training points {}",
            x_eval.ncols(),
            x_train.ncols()
        )));
    }
    if let Some(phi_train) = feature_matrix(k, x_train)? {
        let w = phi_train.t().dot(coef);
        let phi_eval = feature_matrix(k, x_eval)?.expect("same kernel kind has features");
        return Ok(phi_eval.dot(&w));
    }
    let m = x_eval.nrows();
    let mut out = Array1::<f64>::zeros(m);
    let train_rows: Vec<Vec<f64>> = (0..n).map(|i| x_train.row(i).to_vec()).collect();
    let mut eval_row = vec![0.0f64; x_eval.ncols()];
    for e in 0..m {
        eval_row
            .iter_mut()
            .zip(x_eval.row(e).iter())
            .for_each(|(d, &s)| *d = s);
        let mut acc = 0.0;
        for i in 0..n {
            acc += coef[i] * eval_kernel(k, &eval_row, &train_rows[i])?;
        }
        out[e] = acc;
    }
    Ok(out)
}

/// Write a Gram matrix as CSV: header line `n=<n>`, then n comma-separated
/// rows. Values use the shortest round-trip float representation.
pub fn write_gram_csv<W: Write>(g: &GramMatrix, mut w: W) -> Result<()> {
    writeln!(w, "n={}", g.n)?;
    for i in 0..g.n {
        let row: Vec<String> = (0..g.n).map(|j| format!("{}", g.entries[[i, j]])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read a Gram matrix written by [`write_gram_csv`].
pub fn read_gram_csv<R: BufRead>(r: R) -> Result<GramMatrix> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| MklError::Data("empty Gram CSV".into()))??;
    let n: usize = header
        .strip_prefix("n=")
        .ok_or_else(|| MklError::Data(format!("Gram CSV header must be n=<n>, got '{header}'")))?
        .trim()
        .parse()
        .map_err(|e| MklError::Data(format!("bad Gram CSV header: {e}")))?;
    let mut entries = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| MklError::Data(format!("Gram CSV ends early at row {i}")))??;
        let mut count = 0;
        for (j, tok) in line.split(',').enumerate() {
            if j >= n {
                return Err(MklError::Data(format!("Gram CSV row {i} has too many columns")));
            }
            entries[[i, j]] = tok
                .trim()
                .parse()
                .map_err(|e| MklError::Data(format!("bad float in Gram CSV row {i}: {e}")))?;
            count += 1;
        }
        if count != n {
            return Err(MklError::Data(format!(
                "Gram CSV row {i} has {count} columns, expected {n}"
            )));
        }
    }
    GramMatrix::from_entries(entries)
}

/// JSON-facing kernel declaration. Projection kernels are declared through the
/// mean-zero cosine family √2·cos(2πm·x_c), m = 1..modes, whose supremum of
/// Σψ² is exactly 2·modes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelConfig {
    Gaussian {
        id: String,
        bandwidth: f64,
    },
    SobolevFourier {
        id: String,
        alpha: f64,
        #[serde(default = "default_truncation")]
        truncation: usize,
        coordinate_block: Vec<usize>,
    },
    Linear {
        id: String,
        coordinate_block: Vec<usize>,
    },
    Projection {
        id: String,
        coordinate: usize,
        modes: usize,
    },
    Tabulated {
        id: String,
        matrix: Vec<Vec<f64>>,
    },
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

impl KernelConfig {
    pub fn id(&self) -> &str {
        match self {
            KernelConfig::Gaussian { id, .. }
            | KernelConfig::SobolevFourier { id, .. }
            | KernelConfig::Linear { id, .. }
            | KernelConfig::Projection { id, .. }
            | KernelConfig::Tabulated { id, .. } => id,
        }
    }

    pub fn to_kernel(&self) -> Result<Kernel> {
        match self {
            KernelConfig::Gaussian { id, bandwidth } => Kernel::gaussian(id.clone(), *bandwidth),
            KernelConfig::SobolevFourier {
                id,
                alpha,
                truncation,
                coordinate_block,
            } => Kernel::sobolev_fourier(id.clone(), *alpha, *truncation, coordinate_block.clone()),
            KernelConfig::Linear {
                id,
                coordinate_block,
            } => Kernel::linear(id.clone(), coordinate_block.clone()),
            KernelConfig::Projection { id, coordinate, modes } => {
                if *modes == 0 {
                    return Err(MklError::Config(format!(
                        "projection kernel '{id}' needs at least one mode"
                    )));
                }
                let c = *coordinate;
                let basis: Vec<BasisFn> = (1..=*modes)
                    .map(|m| {
                        let m = m as f64;
                        Arc::new(move |x: &[f64]| {
                            (2.0f64).sqrt() * (2.0 * std::f64::consts::PI * m * x[c]).cos()
                        }) as BasisFn
                    })
                    .collect();
                Kernel::projection_with_bound(id.clone(), basis, 2.0 * *modes as f64)
            }
            KernelConfig::Tabulated { id, matrix } => {
                let n = matrix.len();
                if n == 0 || matrix.iter().any(|row| row.len() != n) {
                    return Err(MklError::Config(format!(
                        "tabulated kernel '{id}' matrix must be square and nonempty"
                    )));
                }
                let mut m = Array2::<f64>::zeros((n, n));
                for (i, row) in matrix.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        m[[i, j]] = v;
                    }
                }
                Kernel::tabulated(id.clone(), m)
            }
        }
    }
}

/// Build a dictionary from JSON kernel declarations.
pub fn dictionary_from_configs(configs: &[KernelConfig]) -> Result<KernelDictionary> {
    let kernels = configs
        .iter()
        .map(|c| c.to_kernel())
        .collect::<Result<Vec<_>>>()?;
    KernelDictionary::new(kernels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.random::<f64>())
    }

    #[test]
    fn linear_kernel_single_coordinate_value() {
        let k = Kernel::linear("lin", vec![0]).unwrap();
        let v = eval_kernel(&k, &[0.5], &[0.5]).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn kernels_are_symmetric_on_random_pairs() {
        let p = 3;
        let kernels = vec![
            Kernel::gaussian("g", 0.7).unwrap(),
            Kernel::sobolev_fourier("s", 1.0, 50, vec![1]).unwrap(),
            Kernel::linear("l", vec![0, 2]).unwrap(),
            Kernel::projection_with_bound(
                "p",
                vec![
                    Arc::new(|x: &[f64]| x[0]) as BasisFn,
                    Arc::new(|x: &[f64]| x[1] * x[1]) as BasisFn,
                ],
                2.0,
            )
            .unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in &kernels {
            for _ in 0..100 {
                let x: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
                let y: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
                let a = eval_kernel(k, &x, &y).unwrap();
                let b = eval_kernel(k, &y, &x).unwrap();
                assert!(
                    (a - b).abs() < 1e-12,
                    "kernel {} asymmetric: {a} vs {b}",
                    k.id
                );
            }
        }
    }

    #[test]
    fn kernels_bounded_on_sample_grid() {
        let kernels = vec![
            Kernel::gaussian("g", 0.3).unwrap(),
            Kernel::sobolev_fourier("s", 1.0, 80, vec![0]).unwrap(),
            Kernel::linear("l", vec![0, 1, 2]).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in &kernels {
            for _ in 0..500 {
                let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                let v = eval_kernel(k, &x, &x).unwrap();
                assert!(v <= 1.0 + 1e-12, "kernel {} unbounded: K(x,x) = {v}", k.id);
            }
        }
    }

    #[test]
    fn sobolev_matches_direct_series_summation() {
        let alpha = 1.0;
        let t = 50usize;
        let k = Kernel::sobolev_fourier("s", alpha, t, vec![0]).unwrap();
        // At x = y the normalized kernel is exactly 1.
        let at_zero = eval_kernel(&k, &[0.3], &[0.3]).unwrap();
        assert!((at_zero - 1.0).abs() < 1e-12);
        // Away from the diagonal, compare against the signed-mode sum
        // Σ_{|m|≤T} (m²+1)^{−α} e^{2πim(x−y)} / Z.
        let mut z = 0.0;
        for m in -(t as i64)..=(t as i64) {
            z += ((m * m) as f64 + 1.0).powf(-alpha);
        }
        for (x, y) in [(0.2, 0.9), (0.55, 0.1), (0.0, 0.37)] {
            let lag = x - y;
            let mut direct = 0.0;
            for m in -(t as i64)..=(t as i64) {
                direct += ((m * m) as f64 + 1.0).powf(-alpha)
                    * (2.0 * std::f64::consts::PI * m as f64 * lag).cos();
            }
            direct /= z;
            let val = eval_kernel(&k, &[x], &[y]).unwrap();
            assert!(
                (val - direct).abs() < 1e-12,
                "sobolev eval {val} vs direct {direct}"
            );
        }
    }

    #[test]
    fn sobolev_truncation_tail_bound() {
        let alpha = 1.0;
        let t = 20usize;
        let k1 = Kernel::sobolev_fourier("a", alpha, t, vec![0]).unwrap();
        let k2 = Kernel::sobolev_fourier("b", alpha, 2 * t, vec![0]).unwrap();
        // Analytic tail: Σ_{|m|>T} (m²+1)^{−α} = 2 Σ_{m>T} (m²+1)^{−α},
        // bounded by 2·∫_T^∞ m^{−2α} dm = 2·T^{1−2α}/(2α−1) for α > 1/2.
        let tail = 2.0 * (t as f64).powf(1.0 - 2.0 * alpha) / (2.0 * alpha - 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = [rng.random::<f64>()];
            let y = [rng.random::<f64>()];
            let d = (eval_kernel(&k1, &x, &y).unwrap() - eval_kernel(&k2, &x, &y).unwrap()).abs();
            assert!(d <= tail, "entry change {d} exceeds tail bound {tail}");
        }
    }

    #[test]
    fn gaussian_gram_matches_entrywise_evaluation() {
        let k = Kernel::gaussian("g", 0.5).unwrap();
        let x = array![[0.1, 0.2], [0.7, 0.4], [0.3, 0.9]];
        let g = gram(&k, &x.view()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = eval_kernel(&k, &x.row(i).to_vec(), &x.row(j).to_vec()).unwrap();
                assert!((g.entries()[[i, j]] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gram_of_single_unit_point() {
        let k = Kernel::gaussian("g", 1.0).unwrap();
        let x = array![[0.5]];
        let g = gram(&k, &x.view()).unwrap();
        assert_eq!(g.n(), 1);
        assert!((g.entries()[[0, 0]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn projection_gram_has_rank_at_most_m() {
        let modes = 4usize;
        let cfg = KernelConfig::Projection {
            id: "proj".into(),
            coordinate: 0,
            modes,
        };
        let k = cfg.to_kernel().unwrap();
        let x = random_points(60, 1, 5);
        let g = gram(&k, &x.view()).unwrap();
        let s = spectrum(&g).unwrap();
        let lam = s.eigenvalues();
        for &v in lam.iter().skip(modes) {
            assert!(v < 1e-8, "eigenvalue beyond rank bound: {v}");
        }
        assert!(lam[modes - 1] > 1e-8, "projection Gram lost rank");
    }

    #[test]
    fn spectrum_of_scaled_identity() {
        let n = 4;
        let g = GramMatrix::from_entries(Array2::from_diag_elem(n, n as f64)).unwrap();
        let s = spectrum(&g).unwrap();
        for &v in s.eigenvalues() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_of_rank_one_matrix() {
        let n = 5usize;
        let u = Array1::from_vec(vec![1.0; n]); // ‖u‖² = n
        let mut m = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = u[i] * u[j];
            }
        }
        let g = GramMatrix::from_entries(m).unwrap();
        let s = spectrum(&g).unwrap();
        assert!((s.eigenvalues()[0] - 1.0).abs() < 1e-12);
        for &v in s.eigenvalues().iter().skip(1) {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_reconstructs_random_psd() {
        let n = 30usize;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
        let psd = b.dot(&b.t()) / (n as f64); // keep diagonal modest
        let g = GramMatrix::from_entries(psd.clone()).unwrap();
        let s = spectrum(&g).unwrap();
        let d = Array2::from_diag(&Array1::from(s.eigenvalues().to_vec()));
        let rec = s.u().dot(&d).dot(&s.u().t());
        let scaled = &psd / (n as f64);
        let mut max_err: f64 = 0.0;
        for (a, b) in rec.iter().zip(scaled.iter()) {
            max_err = max_err.max((a - b).abs());
        }
        assert!(max_err < 1e-8, "reconstruction error {max_err}");
        // Orthonormality.
        let gram_u = s.u().t().dot(s.u());
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram_u[[i, j]] - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn factor_and_dense_spectra_agree() {
        let n = 120usize;
        let x = random_points(n, 1, 21);
        let k = Kernel::sobolev_fourier("s", 1.0, 40, vec![0]).unwrap(); // r = 81 < n
        let g = gram(&k, &x.view()).unwrap();
        assert!(g.factor().is_some());
        let s_fact = spectrum(&g).unwrap();
        let g_dense = GramMatrix::from_entries(g.entries().clone()).unwrap();
        let s_dense = spectrum(&g_dense).unwrap();
        for (a, b) in s_fact
            .eigenvalues()
            .iter()
            .zip(s_dense.eigenvalues().iter())
        {
            assert!((a - b).abs() < 1e-9, "factor {a} vs dense {b}");
        }
        // Reconstruction through the truncated eigenbasis.
        let keep = s_fact.u().ncols();
        let d = Array2::from_diag(&Array1::from(s_fact.eigenvalues()[..keep].to_vec()));
        let rec = s_fact.u().dot(&d).dot(&s_fact.u().t());
        let scaled = g.entries() / (n as f64);
        for (a, b) in rec.iter().zip(scaled.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn eigenvalues_sum_to_trace() {
        let n = 50usize;
        let x = random_points(n, 2, 31);
        for k in [
            Kernel::gaussian("g", 0.4).unwrap(),
            Kernel::sobolev_fourier("s", 1.5, 30, vec![0]).unwrap(),
            Kernel::linear("l", vec![0, 1]).unwrap(),
        ] {
            let g = gram(&k, &x.view()).unwrap();
            let s = spectrum(&g).unwrap();
            let trace: f64 = (0..n).map(|i| g.entries()[[i, i]]).sum::<f64>() / n as f64;
            let sum: f64 = s.eigenvalues().iter().sum();
            assert!(
                (trace - sum).abs() < 1e-8,
                "kernel {}: trace {trace} vs eigenvalue sum {sum}",
                k.id
            );
            assert!(s.eigenvalues().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn spectrum_rejects_indefinite_matrix() {
        let m = array![[1.0, 0.0], [0.0, -0.5]];
        let g = GramMatrix::from_entries(m).unwrap();
        assert!(matches!(spectrum(&g), Err(MklError::Data(_))));
    }

    #[test]
    fn eval_rejects_out_of_range_block() {
        let k = Kernel::linear("l", vec![3]).unwrap();
        assert!(matches!(
            eval_kernel(&k, &[0.1, 0.2], &[0.3, 0.4]),
            Err(MklError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn tabulated_kernel_gram_roundtrip_and_eval_error() {
        let m = array![[1.0, 0.2], [0.2, 0.8]];
        let k = Kernel::tabulated("t", m.clone()).unwrap();
        assert!(eval_kernel(&k, &[0.0], &[0.0]).is_err());
        let x = Array2::<f64>::zeros((2, 1));
        let g = gram(&k, &x.view()).unwrap();
        assert!((g.entries()[[0, 1]] - 0.2).abs() < 1e-15);
        let y = Array2::<f64>::zeros((3, 1));
        assert!(gram(&k, &y.view()).is_err());
    }

    #[test]
    fn gram_csv_roundtrip() {
        let k = Kernel::gaussian("g", 0.9).unwrap();
        let x = random_points(7, 2, 41);
        let g = gram(&k, &x.view()).unwrap();
        let mut buf = Vec::new();
        write_gram_csv(&g, &mut buf).unwrap();
        let g2 = read_gram_csv(std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(g2.n(), g.n());
        for (a, b) in g.entries().iter().zip(g2.entries().iter()) {
            assert_eq!(a, b, "CSV round-trip must be lossless");
        }
    }

    #[test]
    fn dictionary_rejects_duplicate_ids() {
        let k1 = Kernel::gaussian("same", 1.0).unwrap();
        let k2 = Kernel::linear("same", vec![0]).unwrap();
        assert!(KernelDictionary::new(vec![k1, k2]).is_err());
    }

    #[test]
    fn kernel_config_json_roundtrip() {
        let configs = vec![
            KernelConfig::Gaussian {
                id: "g".into(),
                bandwidth: 0.5,
            },
            KernelConfig::SobolevFourier {
                id: "s".into(),
                alpha: 1.0,
                truncation: 64,
                coordinate_block: vec![0],
            },
            KernelConfig::Linear {
                id: "l".into(),
                coordinate_block: vec![1, 2],
            },
            KernelConfig::Projection {
                id: "p".into(),
                coordinate: 0,
                modes: 3,
            },
        ];
        let json = serde_json::to_string(&configs).unwrap();
        let back: Vec<KernelConfig> = serde_json::from_str(&json).unwrap();
        let dict = dictionary_from_configs(&back).unwrap();
        assert_eq!(dict.len(), 4);
        assert_eq!(dict.get(1).id, "s");
    }

    #[test]
    fn projection_config_normalization_is_exact() {
        let cfg = KernelConfig::Projection {
            id: "p".into(),
            coordinate: 0,
            modes: 5,
        };
        let k = cfg.to_kernel().unwrap();
        // K(x,x) at x = 0 attains the supremum Σ 2cos²(0) / (2·modes) = 1.
        let v = eval_kernel(&k, &[0.0], &[0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_sections_matches_direct_sum() {
        let x_train = random_points(25, 2, 51);
        let x_eval = random_points(9, 2, 52);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let coef = Array1::from_shape_fn(25, |_| rng.random::<f64>() - 0.5);
        for k in [
            Kernel::gaussian("g", 0.6).unwrap(),
            Kernel::sobolev_fourier("s", 1.0, 30, vec![1]).unwrap(),
            Kernel::linear("l", vec![0, 1]).unwrap(),
        ] {
            let fast = apply_sections(&k, &x_train.view(), &coef, &x_eval.view()).unwrap();
            for e in 0..9 {
                let mut want = 0.0;
                for i in 0..25 {
                    want += coef[i]
                        * eval_kernel(&k, &x_eval.row(e).to_vec(), &x_train.row(i).to_vec())
                            .unwrap();
                }
                assert!(
                    (fast[e] - want).abs() < 1e-10,
                    "kernel {}: {} vs {}",
                    k.id,
                    fast[e],
                    want
                );
            }
        }
    }
}
