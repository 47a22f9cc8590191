//! Position observables: linear cell-index operators, complex exponentials,
//! sin/cos periodic operators, Cartesian coordinates for quasicrystal
//! patches, and the time-reversal breaking perturbation added to them.
//!
//! Honeycomb coordinates are cell indices along the lattice vectors, so L1
//! and L2 are the natural periods; quasicrystal coordinates are Cartesian.

use ndarray::{s, Array1, Array2, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{self, MatrixOp};
use crate::models::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionFunctional {
    Linear,
    ComplexExp,
    Sin,
    Cos,
}

impl PositionFunctional {
    pub fn is_hermitian(self) -> bool {
        self != PositionFunctional::ComplexExp
    }

    /// Periodic functionals need a cell count to set the period.
    fn needs_period(self) -> bool {
        self != PositionFunctional::Linear
    }

    fn eval(self, x: f64, period: f64) -> Complex64 {
        match self {
            PositionFunctional::Linear => Complex64::new(x, 0.0),
            PositionFunctional::ComplexExp => Complex64::from_polar(1.0, 2.0 * PI * x / period),
            PositionFunctional::Sin => Complex64::new((2.0 * PI * x / period).sin(), 0.0),
            PositionFunctional::Cos => Complex64::new((2.0 * PI * x / period).cos(), 0.0),
        }
    }
}

/// One position observable in an IPP sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionSpec {
    pub functional: PositionFunctional,
    /// 1 for the a1 direction, 2 for a2 (Cartesian x/y on quasicrystals).
    pub axis: u8,
    #[serde(default)]
    pub trb: bool,
    #[serde(default = "default_trb_strength")]
    pub trb_strength: f64,
}

fn default_trb_strength() -> f64 {
    0.5
}

impl PositionSpec {
    pub fn new(functional: PositionFunctional, axis: u8) -> Self {
        PositionSpec { functional, axis, trb: false, trb_strength: 0.5 }
    }

    pub fn with_trb(mut self) -> Self {
        self.trb = true;
        self
    }

    /// Sort key kind matching the observable's spectrum.
    pub fn sort_key_kind(&self) -> SortKeyKind {
        if self.functional == PositionFunctional::ComplexExp {
            SortKeyKind::ImagLog
        } else {
            SortKeyKind::RealValue
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKeyKind {
    RealValue,
    ImagLog,
}

/// Diagonal or cell-block-diagonal observable.
#[derive(Debug, Clone)]
pub enum ObservableData {
    Diagonal(Array1<Complex64>),
    /// Contiguous equal-size blocks along the diagonal.
    BlockDiagonal { size: usize, blocks: Vec<Array2<Complex64>> },
}

#[derive(Debug, Clone)]
pub struct Observable {
    pub data: ObservableData,
    pub hermitian: bool,
}

impl MatrixOp for Observable {
    fn dim(&self) -> usize {
        match &self.data {
            ObservableData::Diagonal(d) => d.len(),
            ObservableData::BlockDiagonal { size, blocks } => size * blocks.len(),
        }
    }

    fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    fn apply(&self, x: &ArrayView2<Complex64>) -> Array2<Complex64> {
        match &self.data {
            ObservableData::Diagonal(d) => {
                let mut out = x.to_owned();
                for (mut row, scale) in out.rows_mut().into_iter().zip(d.iter()) {
                    row.mapv_inplace(|z| z * scale);
                }
                out
            }
            ObservableData::BlockDiagonal { size, blocks } => {
                let mut out = Array2::zeros(x.raw_dim());
                for (c, block) in blocks.iter().enumerate() {
                    let rows = s![c * size..(c + 1) * size, ..];
                    out.slice_mut(rows).assign(&block.dot(&x.slice(rows)));
                }
                out
            }
        }
    }
}

/// Base coordinate per site: honeycomb cell index along the axis, Cartesian
/// coordinate for quasicrystal vertices.
pub fn base_coordinate(lattice: &Lattice, axis: u8) -> Result<Array1<f64>> {
    if axis != 1 && axis != 2 {
        return Err(Error::InvalidInput(format!("axis must be 1 or 2, got {axis}")));
    }
    let values = lattice
        .sites
        .iter()
        .map(|site| match site.cell {
            Some([m, n]) => {
                if axis == 1 {
                    m as f64
                } else {
                    n as f64
                }
            }
            None => site.position[(axis - 1) as usize],
        })
        .collect();
    Ok(Array1::from_vec(values))
}

/// Per-orbital coordinate diagonal in the model's orbital ordering.
pub fn coordinate_diagonal(model: ModelKind, lattice: &Lattice, axis: u8) -> Result<Array1<f64>> {
    let per_site = base_coordinate(lattice, axis)?;
    let n = model.orbital_count(lattice);
    Ok(Array1::from_shape_fn(n, |o| per_site[model.orbital_site(o)]))
}

fn period_for(lattice: &Lattice, axis: u8) -> f64 {
    if axis == 1 {
        lattice.l1 as f64
    } else {
        lattice.l2 as f64
    }
}

/// The per-cell spin-coupling block of the time-reversal breaker, scaled by
/// `strength`: pairs up/down on the same sublattice, eigenvalues +-strength.
fn trb_block(strength: f64) -> Array2<Complex64> {
    let mut k = Array2::<Complex64>::zeros((4, 4));
    for (a, b) in [(0usize, 2usize), (1, 3)] {
        k[[a, b]] = Complex64::new(strength, 0.0);
        k[[b, a]] = Complex64::new(strength, 0.0);
    }
    k
}

/// Block-diagonal A_TRB for the Kane-Mele orbital layout. Self-adjoint,
/// anticommutes with the time-reversal operator, commutes with both cell
/// coordinates.
pub fn a_trb(lattice: &Lattice, model: ModelKind, strength: f64) -> Result<Observable> {
    if model != ModelKind::KaneMele || !lattice.is_honeycomb() {
        return Err(Error::InvalidInput(
            "A_TRB requires the Kane-Mele orbital layout on a honeycomb lattice".into(),
        ));
    }
    let blocks = vec![trb_block(strength); lattice.n_cells()];
    Ok(Observable { data: ObservableData::BlockDiagonal { size: 4, blocks }, hermitian: true })
}

/// Build the observable for one step of an IPP sequence. Without trb the
/// functional is applied entrywise to the coordinate diagonal; with trb it is
/// applied as a matrix function to the per-cell block X + A_TRB.
pub fn build_observable(
    spec: &PositionSpec,
    lattice: &Lattice,
    model: ModelKind,
) -> Result<Observable> {
    if spec.axis != 1 && spec.axis != 2 {
        return Err(Error::InvalidInput(format!("axis must be 1 or 2, got {}", spec.axis)));
    }
    if spec.functional.needs_period() && !lattice.is_honeycomb() {
        return Err(Error::InvalidInput(
            "periodic position functionals require a honeycomb lattice".into(),
        ));
    }
    if spec.trb && (model != ModelKind::KaneMele || !lattice.is_honeycomb()) {
        return Err(Error::InvalidInput(
            "trb position operators require the Kane-Mele orbital layout".into(),
        ));
    }
    let hermitian = spec.functional.is_hermitian();

    if !spec.trb {
        let coords = coordinate_diagonal(model, lattice, spec.axis)?;
        let period = period_for(lattice, spec.axis);
        let diag = coords.mapv(|x| spec.functional.eval(x, period));
        return Ok(Observable { data: ObservableData::Diagonal(diag), hermitian });
    }

    // Kane-Mele with trb: apply the functional per 4x4 cell block through its
    // eigendecomposition, keeping the observable block-diagonal.
    let period = period_for(lattice, spec.axis);
    let coords = base_coordinate(lattice, spec.axis)?;
    let k = trb_block(spec.trb_strength);
    let mut blocks = Vec::with_capacity(lattice.n_cells());
    for cell in 0..lattice.n_cells() {
        // All four orbitals of the cell share the cell coordinate; read it
        // from the cell's A site.
        let x = coords[2 * cell];
        let mut block = k.clone();
        for d in 0..4 {
            block[[d, d]] += Complex64::new(x, 0.0);
        }
        let eig = linalg::hermitian_eig(&block)?;
        let f = Array2::from_diag(&eig.values.mapv(|v| spec.functional.eval(v, period)));
        let rebuilt = eig.vectors.dot(&f).dot(&eig.vectors.t().mapv(|z| z.conj()));
        blocks.push(rebuilt);
    }
    Ok(Observable { data: ObservableData::BlockDiagonal { size: 4, blocks }, hermitian })
}

/// Sort keys plus the stable ordering they induce.
#[derive(Debug, Clone)]
pub struct SortKeys {
    /// Key per input value, aligned with the input order.
    pub keys: Vec<f64>,
    /// Stable permutation sorting the keys ascending.
    pub order: Vec<usize>,
    /// Branch cut angle for imag_log keys, in [0, 2 pi).
    pub branch_cut: Option<f64>,
}

/// Turn eigenvalues into real sort keys. For imag_log the argument is
/// rotated so the branch cut sits in the middle of the largest angular gap
/// of the value set, then mapped to [0, 2 pi).
pub fn sort_key(values: &[Complex64], kind: SortKeyKind) -> Result<SortKeys> {
    match kind {
        SortKeyKind::RealValue => {
            let keys: Vec<f64> = values.iter().map(|z| z.re).collect();
            Ok(SortKeys { order: argsort(&keys), keys, branch_cut: None })
        }
        SortKeyKind::ImagLog => {
            for z in values {
                if z.norm() <= 0.5 {
                    return Err(Error::NearZeroModulus { modulus: z.norm() });
                }
            }
            if values.is_empty() {
                return Ok(SortKeys { keys: vec![], order: vec![], branch_cut: Some(0.0) });
            }
            let angles: Vec<f64> = values.iter().map(|z| z.arg()).collect();
            let mut sorted = angles.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = sorted.len();
            let (mut best_gap, mut cut) = (f64::NEG_INFINITY, 0.0);
            for i in 0..n {
                let (lo, hi) = if i + 1 < n {
                    (sorted[i], sorted[i + 1])
                } else {
                    (sorted[n - 1], sorted[0] + 2.0 * PI)
                };
                let gap = hi - lo;
                if gap > best_gap {
                    best_gap = gap;
                    cut = lo + gap / 2.0;
                }
            }
            let cut = cut.rem_euclid(2.0 * PI);
            let keys: Vec<f64> = angles.iter().map(|a| (a - cut).rem_euclid(2.0 * PI)).collect();
            Ok(SortKeys { order: argsort(&keys), keys, branch_cut: Some(cut) })
        }
    }
}

/// Stable ascending argsort.
pub fn argsort(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap().then(a.cmp(&b)));
    idx
}
