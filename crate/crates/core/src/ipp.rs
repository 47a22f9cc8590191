//! The iterated projected position algorithm: detect uniform spectral gaps,
//! split frames into cluster sub-frames along a sequence of position
//! observables, and emit the final set of localized functions.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::lattice::{Boundary, Lattice};
use crate::linalg::{self, Frame, MatrixOp};
use crate::models::ModelKind;
use crate::position::{
    self, build_observable, sort_key, Observable, PositionFunctional, PositionSpec, SortKeyKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    Relative,
    FixedCount,
}

/// Quantitative rule deciding where a sorted spectrum breaks into clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPolicy {
    pub mode: GapMode,
    #[serde(default = "default_relative_factor")]
    pub relative_factor: f64,
    #[serde(default)]
    pub expected_cluster_count: usize,
    #[serde(default = "default_min_gap_floor")]
    pub min_gap_floor: f64,
}

fn default_relative_factor() -> f64 {
    10.0
}

fn default_min_gap_floor() -> f64 {
    1e-6
}

impl GapPolicy {
    pub fn relative(factor: f64) -> Self {
        GapPolicy {
            mode: GapMode::Relative,
            relative_factor: factor,
            expected_cluster_count: 0,
            min_gap_floor: default_min_gap_floor(),
        }
    }

    pub fn fixed_count(count: usize) -> Self {
        GapPolicy {
            mode: GapMode::FixedCount,
            relative_factor: default_relative_factor(),
            expected_cluster_count: count,
            min_gap_floor: default_min_gap_floor(),
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.min_gap_floor = floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            GapMode::Relative => {
                if self.relative_factor <= 1.0 {
                    return Err(Error::InvalidInput("relative_factor must exceed 1".into()));
                }
            }
            GapMode::FixedCount => {
                if self.expected_cluster_count == 0 {
                    return Err(Error::InvalidInput(
                        "expected_cluster_count must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Partition of a sorted spectrum into clusters separated by distinguished
/// gaps.
#[derive(Debug, Clone)]
pub struct GapDecomposition {
    pub n: usize,
    /// Start index of every cluster after the first.
    pub boundaries: Vec<usize>,
    pub min_inter_gap: f64,
    pub max_intra_gap: f64,
    pub max_intra_spread: f64,
    pub circular: bool,
}

impl GapDecomposition {
    pub fn n_clusters(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.boundaries.len() + 1
        }
    }

    pub fn clusters(&self) -> Vec<Range<usize>> {
        if self.n == 0 {
            return vec![];
        }
        let mut starts = vec![0usize];
        starts.extend_from_slice(&self.boundaries);
        starts
            .iter()
            .enumerate()
            .map(|(j, &s)| s..*starts.get(j + 1).unwrap_or(&self.n))
            .collect()
    }

    /// Index of the cluster containing sorted position `i`.
    pub fn cluster_of(&self, i: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= i)
    }
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Decide whether sorted keys decompose into clusters separated by
/// distinguished gaps, and where. Circular inputs live on [0, 2 pi) with the
/// wrap-around gap counted as an inter-cluster separation.
pub fn detect_uniform_gaps(
    keys: &[f64],
    policy: &GapPolicy,
    circular: bool,
) -> Result<GapDecomposition> {
    policy.validate()?;
    let n = keys.len();
    if n == 0 {
        return Ok(GapDecomposition {
            n,
            boundaries: vec![],
            min_inter_gap: f64::INFINITY,
            max_intra_gap: 0.0,
            max_intra_spread: 0.0,
            circular,
        });
    }
    for w in keys.windows(2) {
        if w[1] < w[0] {
            return Err(Error::InvalidInput("keys must be sorted ascending".into()));
        }
    }

    let gaps: Vec<f64> = keys.windows(2).map(|w| w[1] - w[0]).collect();
    let wrap_gap = if circular { Some(keys[0] + 2.0 * PI - keys[n - 1]) } else { None };

    let boundaries: Vec<usize> = match policy.mode {
        GapMode::Relative => {
            let mut all = gaps.clone();
            if let Some(wg) = wrap_gap {
                all.push(wg);
            }
            let med = median(&mut all);
            let threshold = (policy.relative_factor * med).max(policy.min_gap_floor);
            let picked: Vec<usize> = (0..gaps.len()).filter(|&i| gaps[i] > threshold).collect();
            if picked.is_empty() {
                let spread = keys[n - 1] - keys[0];
                if spread > policy.min_gap_floor {
                    return Err(Error::NoUniformGaps {
                        detail: format!(
                            "no distinguished gaps: spread {spread:.3e}, median gap {med:.3e}"
                        ),
                        path: vec![],
                    });
                }
            }
            picked.iter().map(|&i| i + 1).collect()
        }
        GapMode::FixedCount => {
            let count = policy.expected_cluster_count;
            if n % count != 0 {
                return Err(Error::InvalidInput(format!(
                    "expected_cluster_count {count} does not divide spectrum size {n}"
                )));
            }
            let mut order: Vec<usize> = (0..gaps.len()).collect();
            order.sort_by(|&a, &b| {
                gaps[b].partial_cmp(&gaps[a]).unwrap().then(a.cmp(&b))
            });
            let mut picked: Vec<usize> = order.into_iter().take(count - 1).map(|i| i + 1).collect();
            picked.sort_unstable();
            picked
        }
    };

    let is_boundary = |i: usize| boundaries.binary_search(&(i + 1)).is_ok();
    let mut min_inter: f64 = f64::INFINITY;
    let mut max_intra: f64 = 0.0;
    for (i, &g) in gaps.iter().enumerate() {
        if is_boundary(i) {
            min_inter = min_inter.min(g);
        } else {
            max_intra = max_intra.max(g);
        }
    }
    if let Some(wg) = wrap_gap {
        min_inter = min_inter.min(wg);
    }

    let decomp = GapDecomposition {
        n,
        boundaries,
        min_inter_gap: min_inter,
        max_intra_gap: max_intra,
        max_intra_spread: 0.0,
        circular,
    };
    let max_spread = decomp
        .clusters()
        .iter()
        .map(|r| keys[r.end - 1] - keys[r.start])
        .fold(0.0f64, f64::max);
    let decomp = GapDecomposition { max_intra_spread: max_spread, ..decomp };

    if decomp.n_clusters() > 1 || circular {
        if decomp.min_inter_gap <= decomp.max_intra_gap {
            return Err(Error::NoUniformGaps {
                detail: format!(
                    "uniformity violated: min inter-cluster gap {:.3e} <= max intra-cluster gap {:.3e}",
                    decomp.min_inter_gap, decomp.max_intra_gap
                ),
                path: vec![],
            });
        }
        if decomp.min_inter_gap <= policy.min_gap_floor {
            return Err(Error::NoUniformGaps {
                detail: format!(
                    "min inter-cluster gap {:.3e} at or below floor {:.3e}",
                    decomp.min_inter_gap, policy.min_gap_floor
                ),
                path: vec![],
            });
        }
    } else if decomp.n_clusters() == 1 && decomp.max_intra_spread > policy.min_gap_floor {
        // A single non-degenerate cluster means the spectrum has spread but no
        // structure to exploit.
        if policy.mode == GapMode::Relative {
            return Err(Error::NoUniformGaps {
                detail: format!(
                    "single cluster with spread {:.3e} above floor",
                    decomp.max_intra_spread
                ),
                path: vec![],
            });
        }
    }

    Ok(decomp)
}

/// One cluster sub-frame produced by `split_frame`.
#[derive(Debug)]
pub struct SubFrame {
    pub frame: Frame,
    pub mean_key: f64,
    pub cluster_index: usize,
}

/// Diagonalize the compression of `op` onto `b` and split the lifted
/// eigenvectors by the detected gap clusters. Hermitian observables give
/// exactly orthonormal sub-frames; the complex-exponential path applies
/// Loewdin orthogonalization per cluster.
pub fn split_frame(
    b: &Frame,
    op: &Observable,
    key_kind: SortKeyKind,
    policy: &GapPolicy,
) -> Result<Vec<SubFrame>> {
    let m = linalg::restricted_operator(b, op)?;
    let (sorted_keys, sorted_vectors): (Vec<f64>, Array2<Complex64>) = if op.is_hermitian() {
        let eig = linalg::hermitian_eig(&m)?;
        (eig.values.to_vec(), eig.vectors)
    } else {
        let eig = linalg::general_eig(&m)?;
        let sk = sort_key(eig.values.as_slice().unwrap(), key_kind)?;
        let mut vs = Array2::zeros(eig.vectors.raw_dim());
        for (dst, &src) in sk.order.iter().enumerate() {
            vs.column_mut(dst).assign(&eig.vectors.column(src));
        }
        (sk.order.iter().map(|&i| sk.keys[i]).collect(), vs)
    };

    let circular = key_kind == SortKeyKind::ImagLog;
    let decomp = detect_uniform_gaps(&sorted_keys, policy, circular)?;

    let mut out = Vec::with_capacity(decomp.n_clusters());
    for (j, range) in decomp.clusters().into_iter().enumerate() {
        let small = sorted_vectors.slice(s![.., range.clone()]).to_owned();
        let small = if op.is_hermitian() { small } else { linalg::loewdin(&small)? };
        let cols = b.columns.dot(&small);
        let mean = sorted_keys[range.clone()].iter().sum::<f64>() / range.len() as f64;
        out.push(SubFrame {
            frame: Frame::new(cols, format!("{}/{}", b.provenance, j)),
            mean_key: mean,
            cluster_index: j,
        });
    }
    debug_assert_eq!(out.iter().map(|s| s.frame.rank()).sum::<usize>(), b.rank());
    Ok(out)
}

/// Result of a full IPP run: orthonormal localized functions with centers
/// and the cluster-index provenance of every function.
#[derive(Debug, Clone)]
pub struct WannierSet {
    pub functions: Array2<Complex64>,
    pub centers: Vec<[f64; 2]>,
    /// Cluster index at each splitting stage, then the eigenvalue position
    /// within the final leaf.
    pub provenance: Vec<Vec<usize>>,
    pub sequence: Vec<PositionSpec>,
    pub orthonormality_error: f64,
    pub span_error: f64,
    /// Largest cross-cluster orthogonality defect seen after per-cluster
    /// Loewdin steps; None for all-Hermitian sequences.
    pub loewdin_residual: Option<f64>,
}

impl WannierSet {
    pub fn n_functions(&self) -> usize {
        self.functions.ncols()
    }
}

/// Largest |<b_i, c_j>| between columns of two frames.
fn cross_defect(a: &Frame, b: &Frame) -> f64 {
    let g = a.columns.t().mapv(|z| z.conj()).dot(&b.columns);
    g.iter().map(|z| z.norm()).fold(0.0f64, f64::max)
}

/// Run the IPP algorithm over a sequence of position observables. All but
/// the last observable split the frame recursively; the last is
/// diagonalized within each leaf and its eigenvectors become the output
/// functions.
pub fn run_ipp(
    fermi: &Frame,
    sequence: &[PositionSpec],
    policy: &GapPolicy,
    lattice: &Lattice,
    model: ModelKind,
) -> Result<WannierSet> {
    if sequence.len() < 2 {
        return Err(Error::InvalidInput("IPP sequences need at least two observables".into()));
    }
    let any_complex_exp =
        sequence.iter().any(|s| s.functional == PositionFunctional::ComplexExp);

    let mut leaves: Vec<(Frame, Vec<usize>)> = vec![(fermi.clone(), vec![])];
    let mut loewdin_residual: Option<f64> = None;

    for spec in &sequence[..sequence.len() - 1] {
        let obs = build_observable(spec, lattice, model)?;
        let mut next = Vec::new();
        for (frame, path) in leaves {
            let subs = split_frame(&frame, &obs, spec.sort_key_kind(), policy).map_err(|e| {
                path.iter().rev().fold(e, |acc, &c| acc.push_path(c))
            })?;
            if !obs.is_hermitian() && subs.len() > 1 {
                let mut worst = loewdin_residual.unwrap_or(0.0);
                for i in 0..subs.len() {
                    for j in (i + 1)..subs.len() {
                        worst = worst.max(cross_defect(&subs[i].frame, &subs[j].frame));
                    }
                }
                loewdin_residual = Some(worst);
            }
            for sub in subs {
                let mut p = path.clone();
                p.push(sub.cluster_index);
                next.push((sub.frame, p));
            }
        }
        leaves = next;
    }

    // Final stage: diagonalize within each leaf and lift every eigenvector.
    let last = &sequence[sequence.len() - 1];
    let obs = build_observable(last, lattice, model)?;
    let mut columns: Vec<Array2<Complex64>> = Vec::new();
    let mut provenance: Vec<Vec<usize>> = Vec::new();
    for (frame, path) in &leaves {
        let m = linalg::restricted_operator(frame, &obs)?;
        let lifted = if obs.is_hermitian() {
            let eig = linalg::hermitian_eig(&m)?;
            frame.columns.dot(&eig.vectors)
        } else {
            let eig = linalg::general_eig(&m)?;
            let sk = sort_key(eig.values.as_slice().unwrap(), last.sort_key_kind())?;
            let mut vs = Array2::zeros(eig.vectors.raw_dim());
            for (dst, &src) in sk.order.iter().enumerate() {
                vs.column_mut(dst).assign(&eig.vectors.column(src));
            }
            frame.columns.dot(&vs)
        };
        for k in 0..lifted.ncols() {
            let mut p = path.clone();
            p.push(k);
            provenance.push(p);
        }
        columns.push(lifted);
    }
    let mut w = linalg::hstack(&columns);

    if any_complex_exp {
        let pre = Frame::new(w.clone(), "pre-loewdin");
        let defect = pre.orthonormality_defect();
        loewdin_residual = Some(loewdin_residual.unwrap_or(0.0).max(defect));
        w = linalg::loewdin(&w)?;
    }

    // Phase convention: largest-modulus entry of each function real positive.
    for mut col in w.columns_mut() {
        let mut best = 0usize;
        let mut best_mod = -1.0f64;
        for (i, z) in col.iter().enumerate() {
            if z.norm() > best_mod {
                best_mod = z.norm();
                best = i;
            }
        }
        let phase = col[best] / col[best].norm();
        col.mapv_inplace(|z| z * phase.conj());
    }

    let out_frame = Frame::new(w, "wannier");
    let orthonormality_error = out_frame.orthonormality_defect();
    let span_error = linalg::span_distance(fermi, &out_frame)?;

    let mut centers = Vec::with_capacity(out_frame.rank());
    for k in 0..out_frame.rank() {
        let col = out_frame.columns.column(k).to_owned();
        centers.push(center_of(col.view(), lattice, model)?);
    }

    Ok(WannierSet {
        functions: out_frame.columns,
        centers,
        provenance,
        sequence: sequence.to_vec(),
        orthonormality_error,
        span_error,
        loewdin_residual,
    })
}

/// Center of a normalized function: the Resta circular mean per axis under
/// periodic boundary, the plain expectation otherwise.
pub fn center_of(
    w: ndarray::ArrayView1<Complex64>,
    lattice: &Lattice,
    model: ModelKind,
) -> Result<[f64; 2]> {
    let mut out = [0.0f64; 2];
    for axis in [1u8, 2] {
        let coords = position::coordinate_diagonal(model, lattice, axis)?;
        out[(axis - 1) as usize] = match lattice.boundary {
            Boundary::Periodic => {
                let l = if axis == 1 { lattice.l1 as f64 } else { lattice.l2 as f64 };
                let mut z = Complex64::new(0.0, 0.0);
                for (amp, x) in w.iter().zip(coords.iter()) {
                    z += amp.conj() * amp * Complex64::from_polar(1.0, 2.0 * PI * x / l);
                }
                if z.norm() < 1e-6 {
                    return Err(Error::DelocalizedCenter { modulus: z.norm() });
                }
                (l / (2.0 * PI) * z.arg()).rem_euclid(l)
            }
            Boundary::Dirichlet => {
                w.iter().zip(coords.iter()).map(|(amp, x)| amp.norm_sqr() * x).sum::<f64>()
            }
        };
    }
    Ok(out)
}

/// Expectation values used by spectrum exports: the sorted keys, raw
/// eigenvalues, and cluster decomposition of the first-stage projected
/// observable.
pub struct StageSpectrum {
    pub raw: Vec<Complex64>,
    pub keys: Vec<f64>,
    /// Cluster id per sorted entry; None when detection failed.
    pub decomposition: Option<GapDecomposition>,
    pub detect_error: Option<Error>,
}

/// Sorted spectrum of the first-stage projected observable, with cluster
/// detection attempted but failures reported rather than raised.
pub fn stage_spectrum(
    fermi: &Frame,
    spec: &PositionSpec,
    policy: &GapPolicy,
    lattice: &Lattice,
    model: ModelKind,
) -> Result<StageSpectrum> {
    let obs = build_observable(spec, lattice, model)?;
    if fermi.rank() == 0 {
        return Ok(StageSpectrum {
            raw: vec![],
            keys: vec![],
            decomposition: None,
            detect_error: None,
        });
    }
    let m = linalg::restricted_operator(fermi, &obs)?;
    let (raw, keys): (Vec<Complex64>, Vec<f64>) = if obs.is_hermitian() {
        let eig = linalg::hermitian_eig(&m)?;
        (eig.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), eig.values.to_vec())
    } else {
        let eig = linalg::general_eig(&m)?;
        let sk = sort_key(eig.values.as_slice().unwrap(), spec.sort_key_kind())?;
        let raw: Vec<Complex64> = sk.order.iter().map(|&i| eig.values[i]).collect();
        let keys: Vec<f64> = sk.order.iter().map(|&i| sk.keys[i]).collect();
        (raw, keys)
    };
    let circular = spec.sort_key_kind() == SortKeyKind::ImagLog;
    match detect_uniform_gaps(&keys, policy, circular) {
        Ok(d) => Ok(StageSpectrum { raw, keys, decomposition: Some(d), detect_error: None }),
        Err(e) => Ok(StageSpectrum { raw, keys, decomposition: None, detect_error: Some(e) }),
    }
}

/// Helper assembling the Fermi frame of a Hamiltonian at a given filling.
pub fn fermi_frame(h: &Array2<Complex64>, n_occ: usize) -> Result<(Frame, Array1<f64>)> {
    let (frame, eig) = linalg::occupied_frame(h, n_occ)?;
    Ok((frame, eig.values))
}
