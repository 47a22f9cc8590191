//! Spectral kernel: Hermitian and general eigendecompositions, occupied
//! subspace frames, operator compression onto a frame, and Loewdin
//! orthogonalization.
//!
//! Projected position operators are never formed at full size; every
//! diagonalization happens on the compressed r x r matrix B^H O B and
//! eigenvectors are lifted back through the frame.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eig, JobSvd, SVDDC};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const GAP_TOL: f64 = 1e-8;
pub const RANK_TOL: f64 = 1e-10;
pub const CONDITION_LIMIT: f64 = 1e10;

/// Matrix with orthonormal columns; the projector it represents is B B^H.
#[derive(Debug, Clone)]
pub struct Frame {
    pub columns: Array2<Complex64>,
    pub provenance: String,
}

impl Frame {
    pub fn new(columns: Array2<Complex64>, provenance: impl Into<String>) -> Self {
        Frame { columns, provenance: provenance.into() }
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    /// Largest entry of |B^H B - I|.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.columns.t().mapv(|z| z.conj()).dot(&self.columns);
        let mut worst = 0.0f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                worst = worst.max((g[[i, j]] - target).norm());
            }
        }
        worst
    }

    /// Apply the projector B B^H to a stack of column vectors.
    pub fn project(&self, x: &Array2<Complex64>) -> Array2<Complex64> {
        self.columns.dot(&self.columns.t().mapv(|z| z.conj()).dot(x))
    }
}

/// Full Hermitian eigendecomposition, values ascending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Array1<f64>,
    pub vectors: Array2<Complex64>,
}

/// Right eigenpairs of a general complex matrix.
#[derive(Debug, Clone)]
pub struct GeneralEig {
    pub values: Array1<Complex64>,
    pub vectors: Array2<Complex64>,
}

pub fn hermiticity_defect(a: &ArrayView2<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in i..a.ncols() {
            worst = worst.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    worst
}

/// Diagonalize a Hermitian matrix. Rejects inputs whose Hermiticity defect
/// exceeds the module tolerance.
///
/// Backed by LAPACK's divide-and-conquer driver zheevd, which is several
/// times faster than zheev at the matrix sizes the 30 x 30 systems produce.
pub fn hermitian_eig(a: &Array2<Complex64>) -> Result<HermitianEig> {
    let defect = hermiticity_defect(&a.view());
    if defect > HERMITICITY_TOL {
        return Err(Error::NonHermitian { deviation: defect });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(HermitianEig { values: Array1::zeros(0), vectors: Array2::zeros((0, 0)) });
    }
    let (values, vectors) = zheevd(a)?;
    Ok(HermitianEig { values, vectors })
}

/// Thin wrapper over zheevd. The input is copied column-major; eigenvectors
/// come back in the buffer's columns and are re-read into an ndarray whose
/// column k is the eigenvector for values[k]. Residual tests below pin the
/// convention.
fn zheevd(a: &Array2<Complex64>) -> Result<(Array1<f64>, Array2<Complex64>)> {
    let n = a.nrows();
    let ni = n as i32;
    let mut buf: Vec<Complex64> = a.t().iter().cloned().collect();
    let mut w = vec![0.0f64; n];
    let mut info = 0i32;
    let jobz = b'V' as std::ffi::c_char;
    let uplo = b'L' as std::ffi::c_char;

    // Workspace query.
    let mut work_q = [Complex64::new(0.0, 0.0)];
    let mut rwork_q = [0.0f64];
    let mut iwork_q = [0i32];
    let neg = -1i32;
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr() as *mut _,
            &ni,
            w.as_mut_ptr(),
            work_q.as_mut_ptr() as *mut _,
            &neg,
            rwork_q.as_mut_ptr(),
            &neg,
            iwork_q.as_mut_ptr(),
            &neg,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::InvalidInput(format!("zheevd workspace query failed: info = {info}")));
    }
    let lwork = work_q[0].re as i32;
    let lrwork = rwork_q[0] as i32;
    let liwork = iwork_q[0];
    let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1) as usize];
    let mut rwork = vec![0.0f64; lrwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::zheevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr() as *mut _,
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr() as *mut _,
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::InvalidInput(format!("zheevd failed to converge: info = {info}")));
    }
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| buf[j * n + i]);
    Ok((Array1::from_vec(w), vectors))
}

/// Frame of the n_occ lowest eigenvectors. Fails with GapClosed when the
/// filling cuts through a near-degenerate cluster.
pub fn occupied_frame(h: &Array2<Complex64>, n_occ: usize) -> Result<(Frame, HermitianEig)> {
    let eig = hermitian_eig(h)?;
    let n = eig.values.len();
    if n_occ > n {
        return Err(Error::InvalidInput(format!("n_occ = {n_occ} exceeds dimension {n}")));
    }
    if n_occ > 0 && n_occ < n {
        let gap = eig.values[n_occ] - eig.values[n_occ - 1];
        if gap < GAP_TOL {
            return Err(Error::GapClosed { n_occ, gap });
        }
    }
    let cols = eig.vectors.slice(ndarray::s![.., ..n_occ]).to_owned();
    Ok((Frame::new(cols, format!("occupied(n_occ={n_occ})")), eig))
}

/// Operators that can be compressed onto a frame. Implementations provide
/// left-multiplication against a tall matrix.
pub trait MatrixOp {
    fn dim(&self) -> usize;
    fn is_hermitian(&self) -> bool;
    /// O * X for a dim x r matrix X.
    fn apply(&self, x: &ArrayView2<Complex64>) -> Array2<Complex64>;

    /// Dense realization, for oracles and small checks.
    fn to_dense(&self) -> Array2<Complex64> {
        let n = self.dim();
        let id = Array2::<Complex64>::eye(n);
        self.apply(&id.view())
    }
}

impl MatrixOp for Array2<Complex64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn is_hermitian(&self) -> bool {
        hermiticity_defect(&self.view()) <= HERMITICITY_TOL
    }

    fn apply(&self, x: &ArrayView2<Complex64>) -> Array2<Complex64> {
        self.dot(x)
    }
}

/// Compress an operator onto a frame: B^H O B.
pub fn restricted_operator(b: &Frame, op: &dyn MatrixOp) -> Result<Array2<Complex64>> {
    if op.dim() != b.dim() {
        return Err(Error::InvalidInput(format!(
            "operator dimension {} does not match frame dimension {}",
            op.dim(),
            b.dim()
        )));
    }
    let ob = op.apply(&b.columns.view());
    Ok(b.columns.t().mapv(|z| z.conj()).dot(&ob))
}

/// Right eigenpairs of a general (diagonalizable) matrix. Fails when the
/// eigenvector matrix is numerically singular.
pub fn general_eig(m: &Array2<Complex64>) -> Result<GeneralEig> {
    let (values, vectors) = m.eig()?;
    let (_, sigma, _) = vectors.svddc(JobSvd::None)?;
    let cond = sigma[0] / sigma[sigma.len() - 1].max(f64::MIN_POSITIVE);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned { cond });
    }
    Ok(GeneralEig { values, vectors })
}

/// Loewdin orthogonalization V (V^H V)^{-1/2} computed from the thin SVD
/// U S W^H as U W^H: the closest frame to V in Frobenius norm.
pub fn loewdin(v: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let (u, sigma, wt) = v.svddc(JobSvd::Some)?;
    let u = u.ok_or_else(|| Error::InvalidInput("svd did not return U".into()))?;
    let wt = wt.ok_or_else(|| Error::InvalidInput("svd did not return V^H".into()))?;
    let smin = sigma[sigma.len() - 1];
    if smin < RANK_TOL {
        return Err(Error::RankDeficient { sigma_min: smin });
    }
    Ok(u.dot(&wt))
}

/// Max-norm of A - A restricted checks used across tests.
pub fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0f64, f64::max)
}

/// Distance between the spans of two equal-rank frames, reported as
/// ||B - W (W^H B)||_F. For exact frames this is the Frobenius norm of
/// (I - W W^H) B, an upper bound on the spectral and entrywise max norms of
/// B B^H - W W^H, and it stays accurate down to machine precision.
pub fn span_distance(b: &Frame, w: &Frame) -> Result<f64> {
    if b.rank() != w.rank() || b.dim() != w.dim() {
        return Err(Error::InvalidInput("span_distance requires frames of equal shape".into()));
    }
    if b.rank() == 0 {
        return Ok(0.0);
    }
    let wb = w.columns.t().mapv(|z| z.conj()).dot(&b.columns);
    let residual = &b.columns - &w.columns.dot(&wb);
    Ok(residual.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
}

/// Concatenate column blocks into one matrix.
pub fn hstack(blocks: &[Array2<Complex64>]) -> Array2<Complex64> {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("column blocks share row count")
}
