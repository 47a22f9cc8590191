//! Wannier charge center sweeps on ribbon geometries, Chern numbers from
//! branch winding, and the Z2 index from time-reversal polarization.
//!
//! A ribbon is L1 cells periodic along a1 and one cell along a2; bonds that
//! cross the a2 boundary pick up exp(i kappa2 * wrap). Charge centers per
//! transverse momentum come from the compressed complex-exponential position
//! operator on the occupied frame, so the finite ring has no boundary
//! artifacts.

use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lattice::{honeycomb_lattice, Boundary, Lattice};
use crate::linalg;
use crate::models::{default_occupation, ModelKind, ModelParams};
use crate::position::{build_observable, PositionFunctional, PositionSpec};

/// Ribbon Hamiltonians over a uniform transverse momentum grid on
/// [-pi, pi), endpoint identified.
pub struct BlochFamily {
    pub l1: usize,
    pub model: ModelKind,
    pub kappa_grid: Vec<f64>,
    pub hamiltonians: Vec<Array2<Complex64>>,
    pub ribbon: Lattice,
    pub n_occ: usize,
}

/// Build the ribbon family for a honeycomb model. `n_k` must be even and at
/// least 32 so that kappa = 0 and the identified endpoint pi sit on the grid.
pub fn bloch_family(params: &ModelParams, l1: usize, n_k: usize) -> Result<BlochFamily> {
    if params.kind() == ModelKind::PxIpy {
        return Err(Error::InvalidInput("ribbon sweeps require a honeycomb model".into()));
    }
    if n_k < 32 || n_k % 2 != 0 {
        return Err(Error::InvalidInput("n_k must be even and at least 32".into()));
    }
    if l1 < 2 {
        return Err(Error::InvalidInput("ribbon width must be at least 2 cells".into()));
    }
    let ribbon = honeycomb_lattice(l1, 1, Boundary::Periodic);
    let kappa_grid: Vec<f64> =
        (0..n_k).map(|i| -PI + 2.0 * PI * i as f64 / n_k as f64).collect();
    let mut hamiltonians = Vec::with_capacity(n_k);
    for &kappa in &kappa_grid {
        let h = params.assemble_with_phase(&ribbon, &|bond: &crate::lattice::Bond| {
            Complex64::from_polar(1.0, kappa * bond.wrap[1] as f64)
        })?;
        hamiltonians.push(h.matrix);
    }
    let n_occ = default_occupation(params.kind(), &ribbon)
        .expect("honeycomb models have a fixed half filling");
    Ok(BlochFamily { l1, model: params.kind(), kappa_grid, hamiltonians, ribbon, n_occ })
}

/// Charge center branches per momentum slice, sorted ascending in [0, L1),
/// with the occupied-frame eigenvectors that produced them.
pub struct WccSweep {
    pub l1: f64,
    pub kappa_grid: Vec<f64>,
    /// branches[i] holds n_occ centers, sorted.
    pub branches: Vec<Vec<f64>>,
    /// states[i] column k is the ribbon state behind branches[i][k].
    pub states: Vec<Array2<Complex64>>,
}

impl WccSweep {
    pub fn n_branches(&self) -> usize {
        self.branches.first().map_or(0, Vec::len)
    }

    /// Smallest circular inter-branch gap over all slices, in cells.
    pub fn min_branch_gap(&self) -> f64 {
        let mut min_gap = f64::INFINITY;
        for slice in &self.branches {
            let n = slice.len();
            for k in 0..n {
                let next = if k + 1 < n { slice[k + 1] } else { slice[0] + self.l1 };
                min_gap = min_gap.min(next - slice[k]);
            }
        }
        min_gap
    }
}

/// Sweep the occupied frame across the momentum grid and read the charge
/// centers from the compressed exponential position operator. With `trb`
/// the time-reversal breaker is added to the position operator first.
pub fn wcc_sweep(family: &BlochFamily, n_occ: usize, trb: bool) -> Result<WccSweep> {
    let mut spec = PositionSpec::new(PositionFunctional::ComplexExp, 1);
    if trb {
        spec = spec.with_trb();
    }
    let obs = build_observable(&spec, &family.ribbon, family.model)?;
    let l1 = family.l1 as f64;

    let mut branches = Vec::with_capacity(family.hamiltonians.len());
    let mut states = Vec::with_capacity(family.hamiltonians.len());
    for h in &family.hamiltonians {
        let (frame, _) = linalg::occupied_frame(h, n_occ)?;
        let m = linalg::restricted_operator(&frame, &obs)?;
        let eig = linalg::general_eig(&m)?;
        // Fixed branch convention: argument in [0, 2 pi) scaled to cells.
        let mut centers: Vec<(f64, usize)> = eig
            .values
            .iter()
            .enumerate()
            .map(|(k, z)| {
                if z.norm() <= 0.5 {
                    return Err(Error::NearZeroModulus { modulus: z.norm() });
                }
                Ok((l1 * z.arg().rem_euclid(2.0 * PI) / (2.0 * PI), k))
            })
            .collect::<Result<_>>()?;
        centers.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

        let mut slice_states = Array2::<Complex64>::zeros((frame.dim(), n_occ));
        for (dst, &(_, src)) in centers.iter().enumerate() {
            let lifted = frame.columns.dot(&eig.vectors.column(src).to_owned());
            slice_states.column_mut(dst).assign(&lifted);
        }
        branches.push(centers.into_iter().map(|(c, _)| c).collect());
        states.push(slice_states);
    }
    Ok(WccSweep { l1, kappa_grid: family.kappa_grid.clone(), branches, states })
}

fn circ_signed(from: f64, to: f64, l: f64) -> f64 {
    let mut d = (to - from).rem_euclid(l);
    if d > l / 2.0 {
        d -= l;
    }
    d
}

fn circ_dist(a: f64, b: f64, l: f64) -> f64 {
    circ_signed(a, b, l).abs()
}

/// Nearest-center assignment between two sorted slices on the circle, with
/// a uniqueness guard: colliding assignments between branches closer than
/// 1e-3 * L1 are reported as ambiguous.
fn match_nearest(cur: &[f64], next: &[f64], l1: f64) -> Result<Vec<usize>> {
    let n = cur.len();
    let mut assignment = vec![usize::MAX; n];
    let mut taken = vec![usize::MAX; n];
    for b in 0..n {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, &t) in next.iter().enumerate() {
            let d = circ_dist(cur[b], t, l1);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        if taken[best] != usize::MAX {
            let other = taken[best];
            let separation = circ_dist(cur[b], cur[other], l1);
            return Err(Error::TrackingAmbiguous { slice: 0, separation });
        }
        taken[best] = b;
        assignment[b] = best;
    }
    Ok(assignment)
}

/// Total winding of the tracked branches over the full momentum loop,
/// divided by the ribbon width, as an integer Chern number plus the
/// rounding residual.
pub fn chern_from_winding(sweep: &WccSweep) -> Result<(i64, f64)> {
    let n_k = sweep.branches.len();
    let n_b = sweep.n_branches();
    if n_k == 0 || n_b == 0 {
        return Err(Error::InvalidInput("empty sweep".into()));
    }
    // displacement accumulated by each branch identity (started at slice 0).
    let mut ids: Vec<usize> = (0..n_b).collect();
    let mut disp = vec![0.0f64; n_b];
    for i in 0..n_k {
        let next_i = (i + 1) % n_k;
        let assignment = match_nearest(&sweep.branches[i], &sweep.branches[next_i], sweep.l1)
            .map_err(|e| match e {
                Error::TrackingAmbiguous { separation, .. } => {
                    Error::TrackingAmbiguous { slice: i, separation }
                }
                other => other,
            })?;
        for b in 0..n_b {
            let j = assignment[b];
            disp[ids[b]] += circ_signed(sweep.branches[i][b], sweep.branches[next_i][j], sweep.l1);
            ids[b] = j;
        }
        // After the step, branch identity b sits at slot assignment[b]; remap.
        let mut new_ids = vec![0usize; n_b];
        for b in 0..n_b {
            new_ids[assignment[b]] = ids[b];
        }
        // ids currently maps slot -> identity for slice i; build for next_i.
        ids = new_ids;
    }
    let total: f64 = disp.iter().sum();
    let c = total / sweep.l1;
    let rounded = c.round();
    let residual = (c - rounded).abs();
    Ok((rounded as i64, residual))
}

const KRAMERS_TOL: f64 = 1e-6;

/// Kramers pairs of a degenerate slice: consecutive sorted values pair up,
/// possibly offset by one around the circle. Returns index pairs.
fn kramers_pairs(values: &[f64], l1: f64) -> Result<Vec<(usize, usize)>> {
    let n = values.len();
    if n % 2 != 0 {
        return Err(Error::InvalidInput("Kramers pairing needs an even branch count".into()));
    }
    let split_for = |offset: usize| -> f64 {
        let mut worst = 0.0f64;
        for p in 0..n / 2 {
            let a = (2 * p + offset) % n;
            let b = (2 * p + 1 + offset) % n;
            worst = worst.max(circ_dist(values[a], values[b], l1));
        }
        worst
    };
    let (s0, s1) = (split_for(0), split_for(1));
    let offset = if s0 <= s1 { 0 } else { 1 };
    let splitting = s0.min(s1);
    if splitting > KRAMERS_TOL {
        return Err(Error::PairingAmbiguous { splitting });
    }
    Ok((0..n / 2).map(|p| ((2 * p + offset) % n, (2 * p + 1 + offset) % n)).collect())
}

/// Overlap-based branch matching between consecutive slices. Resolves exact
/// crossings that position-based matching cannot, using the states behind
/// the branches.
fn match_by_overlap(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Result<Vec<usize>> {
    let n = a.ncols();
    let overlap = a.t().mapv(|z| z.conj()).dot(b);
    // Greedy assignment by descending overlap magnitude.
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            entries.push((overlap[[i, j]].norm(), i, j));
        }
    }
    entries.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let mut row_done = vec![false; n];
    let mut col_done = vec![false; n];
    let mut assignment = vec![usize::MAX; n];
    let mut assigned = 0;
    for (_, i, j) in entries {
        if !row_done[i] && !col_done[j] {
            row_done[i] = true;
            col_done[j] = true;
            assignment[i] = j;
            assigned += 1;
            if assigned == n {
                break;
            }
        }
    }
    Ok(assignment)
}

/// Time-reversal polarization parity from the half-loop kappa2: 0 -> pi.
/// Branches are paired at kappa2 = 0 (Kramers degeneracy), each partner is
/// tracked to pi by state overlap, and the parity of the accumulated
/// partner displacement difference per cell column is returned.
pub fn z2_from_wcc(sweep: &WccSweep) -> Result<u8> {
    let n_k = sweep.branches.len();
    let n_b = sweep.n_branches();
    if n_b == 0 || n_b % 2 != 0 {
        return Err(Error::InvalidInput("Z2 requires an even number of branches".into()));
    }
    // Grid is -pi..pi (endpoint identified): kappa = 0 sits at n_k/2 and the
    // endpoint pi is slice 0.
    let start = n_k / 2;
    let path: Vec<usize> = (start..n_k).chain([0usize]).collect();

    let pairs = kramers_pairs(&sweep.branches[start], sweep.l1)?;
    kramers_pairs(&sweep.branches[0], sweep.l1)?;

    // Track every branch along the path, accumulating displacement.
    let mut ids: Vec<usize> = (0..n_b).collect();
    let mut disp = vec![0.0f64; n_b];
    for w in path.windows(2) {
        let (i, j) = (w[0], w[1]);
        let assignment = match_by_overlap(&sweep.states[i], &sweep.states[j])?;
        for b in 0..n_b {
            let t = assignment[b];
            disp[ids[b]] += circ_signed(sweep.branches[i][b], sweep.branches[j][t], sweep.l1);
            ids[b] = t;
        }
        let mut new_ids = vec![0usize; n_b];
        for b in 0..n_b {
            new_ids[assignment[b]] = ids[b];
        }
        ids = new_ids;
    }

    // Per pair: difference of partner displacements, labeling the positive
    // mover consistently. Summed over all pairs this is L1 times the
    // time-reversal polarization difference.
    let total: f64 = pairs
        .iter()
        .map(|&(a, b)| (disp[a] - disp[b]).abs())
        .sum();
    let delta = total / sweep.l1;
    let rounded = delta.round() as i64;
    Ok((rounded.rem_euclid(2)) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermiticity_defect;
    use crate::models::ComplexParam;

    fn haldane(v: f64, t: f64, tp: f64) -> ModelParams {
        ModelParams::Haldane { v, t, tprime: ComplexParam::from(tp) }
    }

    fn km(v: f64, t: f64, tp: f64, lr: f64) -> ModelParams {
        ModelParams::KaneMele { v, t, tprime: tp, lambda_r: lr }
    }

    #[test]
    fn bloch_family_hermitian_and_periodic() {
        let fam = bloch_family(&haldane(3.0, 1.0, 0.5), 6, 32).unwrap();
        for h in &fam.hamiltonians {
            assert!(hermiticity_defect(&h.view()) < 1e-12);
        }
        // H(-pi) equals H(pi): rebuild at +pi explicitly.
        let ribbon = honeycomb_lattice(6, 1, Boundary::Periodic);
        let h_pi = haldane(3.0, 1.0, 0.5)
            .assemble_with_phase(&ribbon, &|b: &crate::lattice::Bond| {
                Complex64::from_polar(1.0, PI * b.wrap[1] as f64)
            })
            .unwrap();
        let d = linalg::max_abs_diff(&fam.hamiltonians[0], &h_pi.matrix);
        assert!(d < 1e-12, "endpoint mismatch {d}");
    }

    #[test]
    fn bloch_family_zero_slice_matches_periodic_hamiltonian() {
        let fam = bloch_family(&haldane(3.0, 1.0, 0.5), 6, 32).unwrap();
        let idx0 = fam.kappa_grid.iter().position(|&k| k.abs() < 1e-12).unwrap();
        let ribbon = honeycomb_lattice(6, 1, Boundary::Periodic);
        let h0 = haldane(3.0, 1.0, 0.5).assemble(&ribbon).unwrap();
        let d = linalg::max_abs_diff(&fam.hamiltonians[idx0], &h0.matrix);
        assert!(d < 1e-12);
    }

    #[test]
    fn bloch_family_gapped_along_sweep() {
        let fam = bloch_family(&haldane(3.0, 1.0, 0.5), 6, 32).unwrap();
        for h in &fam.hamiltonians {
            let eig = linalg::hermitian_eig(h).unwrap();
            let gap = eig.values[fam.n_occ] - eig.values[fam.n_occ - 1];
            assert!(gap > 0.5, "gap {gap}");
        }
    }

    #[test]
    fn flat_insulator_has_constant_branches_and_zero_chern() {
        // t = t' = 0, v > 0: kappa-independent occupied space.
        let fam = bloch_family(&haldane(3.0, 0.0, 0.0), 4, 32).unwrap();
        let sweep = wcc_sweep(&fam, fam.n_occ, false).unwrap();
        for slice in &sweep.branches {
            for (a, b) in slice.iter().zip(sweep.branches[0].iter()) {
                assert!(circ_dist(*a, *b, sweep.l1) < 1e-9);
            }
        }
        let (c, residual) = chern_from_winding(&sweep).unwrap();
        assert_eq!(c, 0);
        assert!(residual < 1e-9);
    }

    #[test]
    fn haldane_trivial_and_topological_winding() {
        let fam = bloch_family(&haldane(3.0, 1.0, 0.5), 10, 64).unwrap();
        let sweep = wcc_sweep(&fam, fam.n_occ, false).unwrap();
        let (c, res) = chern_from_winding(&sweep).unwrap();
        assert_eq!(c, 0);
        assert!(res < 0.1);

        let fam = bloch_family(&haldane(0.0, 1.0, 0.5), 10, 64).unwrap();
        let sweep = wcc_sweep(&fam, fam.n_occ, false).unwrap();
        let (c, res) = chern_from_winding(&sweep).unwrap();
        assert_eq!(c.abs(), 1, "chern {c}");
        assert!(res < 0.1);
    }

    #[test]
    fn kane_mele_z2_even_and_odd() {
        let fam = bloch_family(&km(4.0, 1.0, 0.6, 0.5), 10, 64).unwrap();
        let sweep = wcc_sweep(&fam, fam.n_occ, false).unwrap();
        assert_eq!(z2_from_wcc(&sweep).unwrap(), 0);

        let fam = bloch_family(&km(0.0, 1.0, 0.6, 0.5), 10, 64).unwrap();
        let sweep = wcc_sweep(&fam, fam.n_occ, false).unwrap();
        assert_eq!(z2_from_wcc(&sweep).unwrap(), 1);
    }

    #[test]
    fn decoupled_spins_give_odd_z2_matching_per_sector_winding() {
        // lambda_R = 0: spin sectors are independent Haldane copies with
        // opposite fluxes, so the per-sector winding oracle fixes Z2 = 1.
        let fam = bloch_family(&km(0.0, 1.0, 0.6, 0.0), 8, 64).unwrap();
        let sweep = wcc_sweep(&fam, fam.n_occ, false).unwrap();
        let z2 = z2_from_wcc(&sweep).unwrap();

        let up = bloch_family(&haldane(0.0, 1.0, 0.6), 8, 64).unwrap();
        let up_sweep = wcc_sweep(&up, up.n_occ, false).unwrap();
        let (c_up, _) = chern_from_winding(&up_sweep).unwrap();
        assert_eq!(z2, (c_up.rem_euclid(2)) as u8);
        assert_eq!(z2, 1);
    }

    #[test]
    fn trb_opens_branch_gaps_on_odd_kane_mele() {
        let fam = bloch_family(&km(0.0, 1.0, 0.6, 0.5), 8, 64).unwrap();
        let bare = wcc_sweep(&fam, fam.n_occ, false).unwrap();
        let broken = wcc_sweep(&fam, fam.n_occ, true).unwrap();
        let threshold = 1e-3 * 8.0;
        assert!(bare.min_branch_gap() < threshold, "bare gap {}", bare.min_branch_gap());
        assert!(broken.min_branch_gap() > threshold, "trb gap {}", broken.min_branch_gap());
    }

    #[test]
    fn winding_stable_under_grid_refinement() {
        for params in [haldane(3.0, 1.0, 0.5), haldane(0.0, 1.0, 0.5)] {
            let c: Vec<i64> = [32usize, 64]
                .iter()
                .map(|&nk| {
                    let fam = bloch_family(&params, 6, nk).unwrap();
                    let sweep = wcc_sweep(&fam, fam.n_occ, false).unwrap();
                    chern_from_winding(&sweep).unwrap().0
                })
                .collect();
            assert_eq!(c[0], c[1]);
        }
    }

    #[test]
    fn rejects_bad_grids_and_models() {
        assert!(bloch_family(&haldane(3.0, 1.0, 0.5), 6, 31).is_err());
        assert!(bloch_family(&haldane(3.0, 1.0, 0.5), 6, 16).is_err());
        let px = ModelParams::PxIpy { mu: 3.0, t: 0.5, delta: 1.0 };
        assert!(bloch_family(&px, 6, 64).is_err());
    }
}
