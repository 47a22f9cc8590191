//! Dense Hermitian Hamiltonians for the Haldane, Kane-Mele, and p_x + i p_y
//! models, plus seeded Gaussian on-site disorder.
//!
//! Orbital ordering is fixed per model so position operators and symmetry
//! maps can be built without extra bookkeeping:
//! - Haldane: one orbital per site, ordered (A, B) within each cell.
//! - Kane-Mele: four orbitals per cell in the order A-up, B-up, A-down, B-down.
//! - p_x + i p_y: two particle-hole orbitals per quasicrystal vertex.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BondKind, Lattice, LatticeKind, Sublattice};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Haldane,
    KaneMele,
    PxIpy,
}

impl ModelKind {
    pub fn orbitals_per_site(self) -> usize {
        match self {
            ModelKind::Haldane => 1,
            ModelKind::KaneMele | ModelKind::PxIpy => 2,
        }
    }

    pub fn orbital_count(self, lattice: &Lattice) -> usize {
        lattice.n_sites() * self.orbitals_per_site()
    }

    /// Orbital index of (site, flavor). For Kane-Mele the flavor is spin and
    /// orbitals interleave per cell as A-up, B-up, A-down, B-down; for
    /// p_x + i p_y the flavor is the particle-hole index.
    pub fn orbital_index(self, site: usize, flavor: usize) -> usize {
        match self {
            ModelKind::Haldane => site,
            ModelKind::KaneMele => {
                let cell = site / 2;
                let sub = site % 2;
                4 * cell + 2 * flavor + sub
            }
            ModelKind::PxIpy => 2 * site + flavor,
        }
    }

    /// Site owning a global orbital index.
    pub fn orbital_site(self, orbital: usize) -> usize {
        match self {
            ModelKind::Haldane => orbital,
            ModelKind::KaneMele => {
                let cell = orbital / 4;
                let sub = orbital % 2;
                2 * cell + sub
            }
            ModelKind::PxIpy => orbital / 2,
        }
    }
}

/// Gaussian on-site disorder request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub variance: f64,
    pub seed: u64,
}

/// Dense Hermitian Hamiltonian bound to a model's orbital ordering over the
/// lattice it was assembled from.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub matrix: Array2<Complex64>,
    pub model: ModelKind,
    /// Echoed when disorder has been applied.
    pub disorder: Option<DisorderSpec>,
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest entry of |H - H^dagger|.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            for j in i..self.dim() {
                let d = (self.matrix[[i, j]] - self.matrix[[j, i]].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }
}

fn sublattice_sign(s: Sublattice) -> f64 {
    match s {
        Sublattice::A => 1.0,
        Sublattice::B => -1.0,
    }
}

/// True for exactly one orientation of every directed bond pair. Bonds with
/// equal endpoints (ribbon self-loops) are ordered by wrap.
fn is_canonical(bond: &crate::lattice::Bond) -> bool {
    (bond.from, bond.to, bond.wrap) < (bond.to, bond.from, [-bond.wrap[0], -bond.wrap[1]])
}

/// Haldane model: staggered potential v, nearest-neighbor hopping t, and
/// next-nearest hopping with amplitude i * tprime * nu. A purely imaginary
/// tprime yields a real symmetric matrix.
pub fn assemble_haldane(
    lattice: &Lattice,
    v: f64,
    t: f64,
    tprime: Complex64,
) -> Result<Hamiltonian> {
    haldane_matrix(lattice, v, t, tprime, &no_phase)
}

fn no_phase(_: &crate::lattice::Bond) -> Complex64 {
    Complex64::new(1.0, 0.0)
}

/// Assembly core with a per-bond phase hook; ribbon Bloch Hamiltonians pass
/// exp(i kappa * wrap). The phase of a reversed bond must be the conjugate,
/// which holds for wrap-based phases since reversal negates the wrap.
fn haldane_matrix(
    lattice: &Lattice,
    v: f64,
    t: f64,
    tprime: Complex64,
    phase: &dyn Fn(&crate::lattice::Bond) -> Complex64,
) -> Result<Hamiltonian> {
    if !lattice.is_honeycomb() {
        return Err(Error::InvalidInput("the Haldane model requires a honeycomb lattice".into()));
    }
    let n = lattice.n_sites();
    let mut h = Array2::<Complex64>::zeros((n, n));
    for site in &lattice.sites {
        h[[site.index, site.index]] +=
            Complex64::new(v * sublattice_sign(site.sublattice.unwrap()), 0.0);
    }
    for bond in lattice.bonds_of_kind(BondKind::Nn) {
        h[[bond.from, bond.to]] += t * phase(bond);
    }
    // One term per unordered bond plus its conjugate, so the matrix stays
    // Hermitian for complex tprime as well.
    for bond in lattice.bonds_of_kind(BondKind::Nnn) {
        if !is_canonical(bond) {
            continue;
        }
        let amp = Complex64::i() * tprime * bond.nu as f64 * phase(bond);
        h[[bond.from, bond.to]] += amp;
        h[[bond.to, bond.from]] += amp.conj();
    }
    Ok(Hamiltonian { matrix: h, model: ModelKind::Haldane, disorder: None })
}

const PAULI_X: [[Complex64; 2]; 2] = [
    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
];
const PAULI_Y: [[Complex64; 2]; 2] = [
    [Complex64::new(0.0, 0.0), Complex64::new(0.0, -1.0)],
    [Complex64::new(0.0, 1.0), Complex64::new(0.0, 0.0)],
];
const PAULI_Z: [[Complex64; 2]; 2] = [
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    [Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
];

fn add_block(
    h: &mut Array2<Complex64>,
    model: ModelKind,
    from_site: usize,
    to_site: usize,
    block: &[[Complex64; 2]; 2],
) {
    for (a, row) in block.iter().enumerate() {
        for (b, val) in row.iter().enumerate() {
            if val.norm_sqr() != 0.0 {
                h[[model.orbital_index(from_site, a), model.orbital_index(to_site, b)]] += val;
            }
        }
    }
}

/// Kane-Mele model: spinful Haldane-like terms with a sigma_z sign on the
/// spin-orbit hopping and a Rashba coupling i * lambda_r * (s x d)_z on
/// nearest-neighbor bonds (d is the unit bond direction).
pub fn assemble_kane_mele(
    lattice: &Lattice,
    v: f64,
    t: f64,
    tprime: f64,
    lambda_r: f64,
) -> Result<Hamiltonian> {
    kane_mele_matrix(lattice, v, t, tprime, lambda_r, &no_phase)
}

fn kane_mele_matrix(
    lattice: &Lattice,
    v: f64,
    t: f64,
    tprime: f64,
    lambda_r: f64,
    phase: &dyn Fn(&crate::lattice::Bond) -> Complex64,
) -> Result<Hamiltonian> {
    if !lattice.is_honeycomb() {
        return Err(Error::InvalidInput("the Kane-Mele model requires a honeycomb lattice".into()));
    }
    let model = ModelKind::KaneMele;
    let n = model.orbital_count(lattice);
    let mut h = Array2::<Complex64>::zeros((n, n));

    for site in &lattice.sites {
        let xi = v * sublattice_sign(site.sublattice.unwrap());
        for spin in 0..2 {
            let o = model.orbital_index(site.index, spin);
            h[[o, o]] += Complex64::new(xi, 0.0);
        }
    }

    for bond in lattice.bonds_of_kind(BondKind::Nn) {
        let (dx, dy) = (bond.angle.cos(), bond.angle.sin());
        let ph = phase(bond);
        let mut block = [[Complex64::new(0.0, 0.0); 2]; 2];
        for s in 0..2 {
            block[s][s] += Complex64::new(t, 0.0);
        }
        // i * lambda_r * (sigma_x d_y - sigma_y d_x)
        let i_l = Complex64::i() * lambda_r;
        for a in 0..2 {
            for b in 0..2 {
                block[a][b] += i_l * (PAULI_X[a][b] * dy - PAULI_Y[a][b] * dx);
                block[a][b] *= ph;
            }
        }
        add_block(&mut h, model, bond.from, bond.to, &block);
    }

    for bond in lattice.bonds_of_kind(BondKind::Nnn) {
        let amp = Complex64::i() * tprime * bond.nu as f64 * phase(bond);
        let mut block = [[Complex64::new(0.0, 0.0); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                block[a][b] = amp * PAULI_Z[a][b];
            }
        }
        add_block(&mut h, model, bond.from, bond.to, &block);
    }

    Ok(Hamiltonian { matrix: h, model, disorder: None })
}

/// p_x + i p_y model on a quasicrystal patch: on-site -mu sigma_z and bond
/// blocks -t sigma_z - (i Delta / 2)(cos(a) sigma_x + sin(a) sigma_y).
pub fn assemble_pxipy(lattice: &Lattice, mu: f64, t: f64, delta: f64) -> Result<Hamiltonian> {
    if lattice.kind != LatticeKind::AmmannBeenker {
        return Err(Error::InvalidInput(
            "p_x + i p_y model requires an Ammann-Beenker lattice".into(),
        ));
    }
    let model = ModelKind::PxIpy;
    let n = model.orbital_count(lattice);
    let mut h = Array2::<Complex64>::zeros((n, n));

    for site in &lattice.sites {
        for (tau, sign) in [(0usize, -mu), (1usize, mu)] {
            let o = model.orbital_index(site.index, tau);
            h[[o, o]] += Complex64::new(sign, 0.0);
        }
    }

    for bond in lattice.bonds_of_kind(BondKind::Nn) {
        let (c, s) = (bond.angle.cos(), bond.angle.sin());
        let half_i_delta = Complex64::i() * (delta / 2.0);
        let mut block = [[Complex64::new(0.0, 0.0); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                block[a][b] = -t * PAULI_Z[a][b] - half_i_delta * (c * PAULI_X[a][b] + s * PAULI_Y[a][b]);
            }
        }
        add_block(&mut h, model, bond.from, bond.to, &block);
    }

    Ok(Hamiltonian { matrix: h, model, disorder: None })
}

/// Add independent N(0, variance) draws to every diagonal entry. Draws are
/// taken in orbital order from the pinned generator, so a seed fully
/// determines the realization.
pub fn apply_onsite_disorder(h: &Hamiltonian, spec: DisorderSpec) -> Result<Hamiltonian> {
    if spec.variance < 0.0 {
        return Err(Error::InvalidInput("disorder variance must be nonnegative".into()));
    }
    let mut out = h.clone();
    if spec.variance > 0.0 {
        let sigma = spec.variance.sqrt();
        let mut rng = SplitMix64::new(spec.seed);
        for i in 0..out.dim() {
            out.matrix[[i, i]] += Complex64::new(sigma * rng.next_normal(), 0.0);
        }
    }
    out.disorder = Some(spec);
    Ok(out)
}

/// Complex scalar that serializes as [re, im] but also accepts a bare real
/// number in configuration files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexParam(pub Complex64);

impl From<Complex64> for ComplexParam {
    fn from(z: Complex64) -> Self {
        ComplexParam(z)
    }
}

impl From<f64> for ComplexParam {
    fn from(x: f64) -> Self {
        ComplexParam(Complex64::new(x, 0.0))
    }
}

impl Serialize for ComplexParam {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexParam {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Real(f64),
            Pair([f64; 2]),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Real(x) => ComplexParam(Complex64::new(x, 0.0)),
            Repr::Pair([re, im]) => ComplexParam(Complex64::new(re, im)),
        })
    }
}

/// Model choice plus its named parameters, as they appear in run
/// configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "parameters", rename_all = "snake_case")]
pub enum ModelParams {
    Haldane { v: f64, t: f64, tprime: ComplexParam },
    KaneMele { v: f64, t: f64, tprime: f64, lambda_r: f64 },
    PxIpy { mu: f64, t: f64, delta: f64 },
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Haldane { .. } => ModelKind::Haldane,
            ModelParams::KaneMele { .. } => ModelKind::KaneMele,
            ModelParams::PxIpy { .. } => ModelKind::PxIpy,
        }
    }

    pub fn assemble(&self, lattice: &Lattice) -> Result<Hamiltonian> {
        match *self {
            ModelParams::Haldane { v, t, tprime } => assemble_haldane(lattice, v, t, tprime.0),
            ModelParams::KaneMele { v, t, tprime, lambda_r } => {
                assemble_kane_mele(lattice, v, t, tprime, lambda_r)
            }
            ModelParams::PxIpy { mu, t, delta } => assemble_pxipy(lattice, mu, t, delta),
        }
    }

    /// Assembly with a per-bond Bloch phase, for ribbon Hamiltonians.
    pub(crate) fn assemble_with_phase(
        &self,
        lattice: &Lattice,
        phase: &dyn Fn(&crate::lattice::Bond) -> Complex64,
    ) -> Result<Hamiltonian> {
        match *self {
            ModelParams::Haldane { v, t, tprime } => {
                haldane_matrix(lattice, v, t, tprime.0, phase)
            }
            ModelParams::KaneMele { v, t, tprime, lambda_r } => {
                kane_mele_matrix(lattice, v, t, tprime, lambda_r, phase)
            }
            ModelParams::PxIpy { .. } => Err(Error::InvalidInput(
                "Bloch phases are only defined for the honeycomb models".into(),
            )),
        }
    }
}

/// Half-filling occupation the figures use; p_x + i p_y fills all negative
/// energy states, which depends on the spectrum and is resolved by the caller.
pub fn default_occupation(model: ModelKind, lattice: &Lattice) -> Option<usize> {
    match model {
        ModelKind::Haldane => Some(lattice.n_cells()),
        ModelKind::KaneMele => Some(2 * lattice.n_cells()),
        ModelKind::PxIpy => None,
    }
}

/// Apply the Fermionic time-reversal operator Theta = (i sigma_y) K to a
/// Kane-Mele state: (psi_up, psi_down) -> (-conj(psi_down), conj(psi_up)).
pub fn apply_theta_kane_mele(lattice: &Lattice, psi: &[Complex64]) -> Vec<Complex64> {
    let model = ModelKind::KaneMele;
    let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
    for site in 0..lattice.n_sites() {
        let up = model.orbital_index(site, 0);
        let down = model.orbital_index(site, 1);
        out[up] = -psi[down].conj();
        out[down] = psi[up].conj();
    }
    out
}
