//! The feature x activity x day count tensor and its higher-order SVD.
//!
//! Unfoldings use the cyclic convention: for mode n the column index runs
//! over the remaining axes in cyclic order with the next axis varying
//! slowest. Factor matrices are the left singular vectors of each mode
//! unfolding, computed from the smaller Gram matrix of the unfolding; the
//! core is the tensor contracted with the transposed factors. Every factor
//! column is oriented so its largest-magnitude entry is positive, which
//! makes outer-product matrices reproducible across platforms.

use chrono::NaiveDate;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3, ArrayView2, Axis};
use thiserror::Error;

use crate::ingest::DailyCounts;

#[derive(Error, Debug)]
pub enum TensorError {
    #[error("tensor contains non-finite entries")]
    NonFinite,
    #[error("truncation rank {rank} exceeds mode size {size}")]
    RankTooLarge { rank: usize, size: usize },
    #[error("unfolded shape {rows}x{cols} does not match tensor")]
    BadShape { rows: usize, cols: usize },
}

/// Tensor axes. CLI-facing mode numbers 1, 2, 3 map to feature, activity,
/// day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Feature,
    Activity,
    Day,
}

impl Mode {
    pub fn axis(self) -> usize {
        match self {
            Mode::Feature => 0,
            Mode::Activity => 1,
            Mode::Day => 2,
        }
    }

    pub fn from_number(n: usize) -> Option<Mode> {
        match n {
            1 => Some(Mode::Feature),
            2 => Some(Mode::Activity),
            3 => Some(Mode::Day),
            _ => None,
        }
    }
}

/// Labeled 3-way array of daily co-occurrence counts.
#[derive(Debug, Clone)]
pub struct CesTensor {
    features: Vec<String>,
    activities: Vec<String>,
    start: NaiveDate,
    data: Array3<f64>,
}

impl CesTensor {
    pub fn new(
        features: Vec<String>,
        activities: Vec<String>,
        start: NaiveDate,
        data: Array3<f64>,
    ) -> Self {
        assert_eq!(data.len_of(Axis(0)), features.len());
        assert_eq!(data.len_of(Axis(1)), activities.len());
        Self {
            features,
            activities,
            start,
            data,
        }
    }

    pub fn from_counts(counts: &DailyCounts) -> Self {
        let data = counts.counts().mapv(|c| c as f64);
        Self {
            features: counts.features().to_vec(),
            activities: counts.activities().to_vec(),
            start: counts.window().start,
            data,
        }
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2])
    }

    pub fn num_days(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Summing over days recovers the bipartite weight matrix.
    pub fn day_marginal(&self) -> Array2<f64> {
        self.data.sum_axis(Axis(2))
    }

    /// Labels along one mode; day labels are ISO dates.
    pub fn labels(&self, mode: Mode) -> Vec<String> {
        match mode {
            Mode::Feature => self.features.clone(),
            Mode::Activity => self.activities.clone(),
            Mode::Day => self
                .start
                .iter_days()
                .take(self.num_days())
                .map(|d| d.to_string())
                .collect(),
        }
    }

    /// Subtract the all-tensor mean from every entry.
    pub fn centered(&self) -> CesTensor {
        let mean = self.data.mean().unwrap_or(0.0);
        CesTensor {
            features: self.features.clone(),
            activities: self.activities.clone(),
            start: self.start,
            data: &self.data - mean,
        }
    }

    /// Divide every day slice by its total (slices summing to zero are left
    /// untouched).
    pub fn day_normalized(&self) -> CesTensor {
        let mut data = self.data.clone();
        for d in 0..self.num_days() {
            let mut slice = data.index_axis_mut(Axis(2), d);
            let total = slice.sum();
            if total > 0.0 {
                slice.mapv_inplace(|v| v / total);
            }
        }
        CesTensor {
            features: self.features.clone(),
            activities: self.activities.clone(),
            start: self.start,
            data,
        }
    }
}

/// Mode-n unfolding with cyclic column ordering.
///
/// For a tensor of shape `(F, A, D)`:
/// * feature mode: `F x (A*D)`, column index `a*D + d`
/// * activity mode: `A x (D*F)`, column index `d*F + f`
/// * day mode: `D x (F*A)`, column index `f*A + a`
///
/// ```
/// use ces_core::tensor::{unfold, Mode};
/// use ndarray::Array3;
///
/// // Entries 1..=8 with the feature index varying fastest.
/// let mut x = Array3::<f64>::zeros((2, 2, 2));
/// let mut v = 1.0;
/// for d in 0..2 {
///     for a in 0..2 {
///         for f in 0..2 {
///             x[[f, a, d]] = v;
///             v += 1.0;
///         }
///     }
/// }
/// let m = unfold(&x, Mode::Feature);
/// assert_eq!(m.shape(), &[2, 4]);
/// assert_eq!(m.row(0).to_vec(), vec![1.0, 5.0, 3.0, 7.0]);
/// assert_eq!(m.row(1).to_vec(), vec![2.0, 6.0, 4.0, 8.0]);
/// ```
pub fn unfold(x: &Array3<f64>, mode: Mode) -> Array2<f64> {
    let (nf, na, nd) = (x.len_of(Axis(0)), x.len_of(Axis(1)), x.len_of(Axis(2)));
    match mode {
        Mode::Feature => {
            let mut m = Array2::zeros((nf, na * nd));
            for f in 0..nf {
                for a in 0..na {
                    for d in 0..nd {
                        m[[f, a * nd + d]] = x[[f, a, d]];
                    }
                }
            }
            m
        }
        Mode::Activity => {
            let mut m = Array2::zeros((na, nd * nf));
            for f in 0..nf {
                for a in 0..na {
                    for d in 0..nd {
                        m[[a, d * nf + f]] = x[[f, a, d]];
                    }
                }
            }
            m
        }
        Mode::Day => {
            let mut m = Array2::zeros((nd, nf * na));
            for f in 0..nf {
                for a in 0..na {
                    for d in 0..nd {
                        m[[d, f * na + a]] = x[[f, a, d]];
                    }
                }
            }
            m
        }
    }
}

/// Inverse of [`unfold`] for a tensor of the given shape.
pub fn refold(
    m: &ArrayView2<f64>,
    mode: Mode,
    shape: (usize, usize, usize),
) -> Result<Array3<f64>, TensorError> {
    let (nf, na, nd) = shape;
    let expected = match mode {
        Mode::Feature => (nf, na * nd),
        Mode::Activity => (na, nd * nf),
        Mode::Day => (nd, nf * na),
    };
    if m.nrows() != expected.0 || m.ncols() != expected.1 {
        return Err(TensorError::BadShape {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let mut x = Array3::zeros(shape);
    for f in 0..nf {
        for a in 0..na {
            for d in 0..nd {
                x[[f, a, d]] = match mode {
                    Mode::Feature => m[[f, a * nd + d]],
                    Mode::Activity => m[[a, d * nf + f]],
                    Mode::Day => m[[d, f * na + a]],
                };
            }
        }
    }
    Ok(x)
}

/// Contract the tensor along `mode` with the transpose of `u`
/// (`u` has shape `mode_size x k`), producing a tensor whose `mode` axis
/// has length `k`.
fn mode_contract(x: &Array3<f64>, mode: Mode, u: &Array2<f64>) -> Array3<f64> {
    let (nf, na, nd) = (x.len_of(Axis(0)), x.len_of(Axis(1)), x.len_of(Axis(2)));
    let k = u.ncols();
    match mode {
        Mode::Feature => {
            let mut out = Array3::zeros((k, na, nd));
            for a in 0..na {
                for d in 0..nd {
                    for kk in 0..k {
                        let mut s = 0.0;
                        for f in 0..nf {
                            s += u[[f, kk]] * x[[f, a, d]];
                        }
                        out[[kk, a, d]] = s;
                    }
                }
            }
            out
        }
        Mode::Activity => {
            let mut out = Array3::zeros((nf, k, nd));
            for f in 0..nf {
                for d in 0..nd {
                    for kk in 0..k {
                        let mut s = 0.0;
                        for a in 0..na {
                            s += u[[a, kk]] * x[[f, a, d]];
                        }
                        out[[f, kk, d]] = s;
                    }
                }
            }
            out
        }
        Mode::Day => {
            let mut out = Array3::zeros((nf, na, k));
            for f in 0..nf {
                for a in 0..na {
                    for kk in 0..k {
                        let mut s = 0.0;
                        for d in 0..nd {
                            s += u[[d, kk]] * x[[f, a, d]];
                        }
                        out[[f, a, kk]] = s;
                    }
                }
            }
            out
        }
    }
}

/// Expand the tensor along `mode` with `u` (shape `out_size x k`).
fn mode_expand(x: &Array3<f64>, mode: Mode, u: &Array2<f64>) -> Array3<f64> {
    // Expansion is contraction with u^T.
    let ut = u.t().to_owned();
    mode_contract(x, mode, &ut)
}

/// Left singular vectors and singular values of `a`, via the
/// eigendecomposition of the smaller Gram matrix.
///
/// When `a` has at least as many columns as rows this returns a complete
/// orthonormal basis of the row space (square factor). For tall matrices
/// it returns the economy factor spanning the numerical column space.
fn left_singular_basis(a: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let rows = a.nrows();
    let cols = a.ncols();

    if rows <= cols {
        // Gram on the row side: full orthonormal basis even when rank-deficient.
        let mut gram = DMatrix::<f64>::zeros(rows, rows);
        for i in 0..rows {
            for j in i..rows {
                let mut s = 0.0;
                for c in 0..cols {
                    s += a[[i, c]] * a[[j, c]];
                }
                gram[(i, j)] = s;
                gram[(j, i)] = s;
            }
        }
        let eigen = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..rows).collect();
        order.sort_by(|&i, &j| eigen.eigenvalues[j].partial_cmp(&eigen.eigenvalues[i]).unwrap());
        let mut u = Array2::zeros((rows, rows));
        let mut sigma = Vec::with_capacity(rows);
        for (k, &idx) in order.iter().enumerate() {
            sigma.push(eigen.eigenvalues[idx].max(0.0).sqrt());
            for r in 0..rows {
                u[[r, k]] = eigen.eigenvectors[(r, idx)];
            }
        }
        (u, sigma)
    } else {
        // Gram on the column side, then map right vectors through `a`.
        let mut gram = DMatrix::<f64>::zeros(cols, cols);
        for i in 0..cols {
            for j in i..cols {
                let mut s = 0.0;
                for r in 0..rows {
                    s += a[[r, i]] * a[[r, j]];
                }
                gram[(i, j)] = s;
                gram[(j, i)] = s;
            }
        }
        let eigen = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..cols).collect();
        order.sort_by(|&i, &j| eigen.eigenvalues[j].partial_cmp(&eigen.eigenvalues[i]).unwrap());
        let sigma_max = eigen.eigenvalues[order[0]].max(0.0).sqrt();
        let tol = sigma_max * 1e-12 * (rows.max(cols) as f64);

        let mut kept: Vec<(f64, Vec<f64>)> = Vec::new();
        for &idx in &order {
            let sigma = eigen.eigenvalues[idx].max(0.0).sqrt();
            if sigma <= tol {
                break;
            }
            let mut col = vec![0.0; rows];
            for (r, item) in col.iter_mut().enumerate() {
                let mut s = 0.0;
                for c in 0..cols {
                    s += a[[r, c]] * eigen.eigenvectors[(c, idx)];
                }
                *item = s / sigma;
            }
            kept.push((sigma, col));
        }
        if kept.is_empty() {
            // Zero matrix: a single arbitrary orthonormal column keeps shapes valid.
            let mut col = vec![0.0; rows];
            col[0] = 1.0;
            kept.push((0.0, col));
        }

        let mut u = Array2::zeros((rows, kept.len()));
        let mut sigma = Vec::with_capacity(kept.len());
        for (k, (s, col)) in kept.iter().enumerate() {
            sigma.push(*s);
            for r in 0..rows {
                u[[r, k]] = col[r];
            }
        }
        orthonormalize_columns(&mut u);
        (u, sigma)
    }
}

/// Two rounds of modified Gram-Schmidt; keeps the Gram identity at the
/// 1e-12 level even when singular values are clustered.
fn orthonormalize_columns(u: &mut Array2<f64>) {
    for _ in 0..2 {
        for k in 0..u.ncols() {
            for prev in 0..k {
                let dot: f64 = (0..u.nrows()).map(|r| u[[r, k]] * u[[r, prev]]).sum();
                for r in 0..u.nrows() {
                    u[[r, k]] -= dot * u[[r, prev]];
                }
            }
            let norm: f64 = (0..u.nrows()).map(|r| u[[r, k]] * u[[r, k]]).sum::<f64>().sqrt();
            if norm > 0.0 {
                for r in 0..u.nrows() {
                    u[[r, k]] /= norm;
                }
            }
        }
    }
}

/// Orient every factor column so its largest-magnitude entry is positive
/// (first occurrence wins on ties).
fn fix_column_signs(u: &mut Array2<f64>) {
    for k in 0..u.ncols() {
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for r in 0..u.nrows() {
            let abs = u[[r, k]].abs();
            if abs > best_abs {
                best_abs = abs;
                best = r;
            }
        }
        if u[[best, k]] < 0.0 {
            for r in 0..u.nrows() {
                u[[r, k]] = -u[[r, k]];
            }
        }
    }
}

/// Higher-order SVD of a labeled tensor.
#[derive(Debug, Clone)]
pub struct Hosvd {
    /// All-orthogonal core; axes match the factor column counts.
    pub core: Array3<f64>,
    /// Orthonormal factor matrices per mode (feature, activity, day).
    pub factors: [Array2<f64>; 3],
    /// Frobenius norms of the core slices along each mode, non-increasing.
    pub singular_values: [Vec<f64>; 3],
    /// True when the input tensor was identically zero.
    pub degenerate: bool,
    features: Vec<String>,
    activities: Vec<String>,
    day_labels: Vec<String>,
}

/// A matrix with row and column labels attached, ready for CSV export.
#[derive(Debug, Clone)]
pub struct LabeledMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Array2<f64>,
}

impl LabeledMatrix {
    /// Location and value of the maximum-magnitude entry.
    pub fn peak(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, 0.0f64);
        for r in 0..self.values.nrows() {
            for c in 0..self.values.ncols() {
                let v = self.values[[r, c]];
                if v.abs() > best.2.abs() {
                    best = (r, c, v);
                }
            }
        }
        best
    }
}

/// Compute the HOSVD, optionally truncating each mode to the leading ranks.
pub fn hosvd(tensor: &CesTensor, truncation: Option<[usize; 3]>) -> Result<Hosvd, TensorError> {
    let x = tensor.data();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite);
    }
    let shape = tensor.shape();
    let degenerate = x.iter().all(|&v| v == 0.0);

    let mut factors = Vec::with_capacity(3);
    for mode in [Mode::Feature, Mode::Activity, Mode::Day] {
        let unfolding = unfold(x, mode);
        let (mut u, _sigma) = left_singular_basis(&unfolding);
        if let Some(ranks) = truncation {
            let want = ranks[mode.axis()];
            let size = [shape.0, shape.1, shape.2][mode.axis()];
            if want > size {
                return Err(TensorError::RankTooLarge { rank: want, size });
            }
            if want < u.ncols() {
                u = u.slice(ndarray::s![.., ..want]).to_owned();
            }
        }
        fix_column_signs(&mut u);
        factors.push(u);
    }

    let core = mode_contract(
        &mode_contract(
            &mode_contract(x, Mode::Feature, &factors[0]),
            Mode::Activity,
            &factors[1],
        ),
        Mode::Day,
        &factors[2],
    );

    let singular_values = [
        slice_norms(&core, Mode::Feature),
        slice_norms(&core, Mode::Activity),
        slice_norms(&core, Mode::Day),
    ];

    Ok(Hosvd {
        core,
        factors: [
            factors[0].clone(),
            factors[1].clone(),
            factors[2].clone(),
        ],
        singular_values,
        degenerate,
        features: tensor.features().to_vec(),
        activities: tensor.activities().to_vec(),
        day_labels: tensor.labels(Mode::Day),
    })
}

fn slice_norms(core: &Array3<f64>, mode: Mode) -> Vec<f64> {
    let axis = Axis(mode.axis());
    (0..core.len_of(axis))
        .map(|i| {
            core.index_axis(axis, i)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

impl Hosvd {
    /// Reconstruct the tensor from the core and factors.
    pub fn reconstruct(&self) -> Array3<f64> {
        let x = mode_expand(&self.core, Mode::Feature, &self.factors[0]);
        let x = mode_expand(&x, Mode::Activity, &self.factors[1]);
        mode_expand(&x, Mode::Day, &self.factors[2])
    }

    pub fn labels(&self, mode: Mode) -> &[String] {
        match mode {
            Mode::Feature => &self.features,
            Mode::Activity => &self.activities,
            Mode::Day => &self.day_labels,
        }
    }

    /// Leading factor column of one mode.
    pub fn leading_vector(&self, mode: Mode) -> Vec<f64> {
        self.factors[mode.axis()].column(0).to_vec()
    }

    /// Outer product of the leading factor columns of two modes, with axis
    /// labels attached.
    pub fn leading_outer_product(&self, mode_a: Mode, mode_b: Mode) -> LabeledMatrix {
        let a = self.leading_vector(mode_a);
        let b = self.leading_vector(mode_b);
        let mut values = Array2::zeros((a.len(), b.len()));
        for (i, &av) in a.iter().enumerate() {
            for (j, &bv) in b.iter().enumerate() {
                values[[i, j]] = av * bv;
            }
        }
        LabeledMatrix {
            row_labels: self.labels(mode_a).to_vec(),
            col_labels: self.labels(mode_b).to_vec(),
            values,
        }
    }
}
