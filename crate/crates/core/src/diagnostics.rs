//! Localization and symmetry diagnostics: per-cell norm matrices,
//! exponential decay fits, the Marzari-Vanderbilt spread decomposition, and
//! symmetry metrics for the output functions.

use ndarray::{Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ipp::WannierSet;
use crate::lattice::{Boundary, Lattice};
use crate::linalg::Frame;
use crate::models::{apply_theta_kane_mele, ModelKind};
use crate::position::coordinate_diagonal;

pub const NORM_FLOOR: f64 = 1e-12;
pub const MIN_FIT_SAMPLES: usize = 5;

/// Per-function localization summary.
#[derive(Debug, Clone, Serialize)]
pub struct LocalizationReport {
    pub center: [f64; 2],
    pub decay_rate: f64,
    pub fit_r2: f64,
    /// Root second moment about the center in the fit's distance metric.
    pub spread: f64,
}

/// Euclidean norm of the function over the orbitals of each cell, as an
/// L1 x L2 matrix. Honeycomb models only; quasicrystal functions use
/// `site_norms` scatter data instead.
pub fn cell_norm_matrix(
    w: ArrayView1<Complex64>,
    lattice: &Lattice,
    model: ModelKind,
) -> Result<Array2<f64>> {
    if !lattice.is_honeycomb() {
        return Err(Error::InvalidInput(
            "cell_norm_matrix requires a honeycomb lattice; use site_norms for quasicrystals".into(),
        ));
    }
    let mut out = Array2::<f64>::zeros((lattice.l1, lattice.l2));
    for (o, amp) in w.iter().enumerate() {
        let site = model.orbital_site(o);
        let [m, n] = lattice.sites[site].cell.expect("honeycomb sites carry cells");
        out[[m, n]] += amp.norm_sqr();
    }
    Ok(out.mapv(f64::sqrt))
}

/// Euclidean norm of the function over the orbitals of each site.
pub fn site_norms(w: ArrayView1<Complex64>, lattice: &Lattice, model: ModelKind) -> Vec<f64> {
    let mut out = vec![0.0f64; lattice.n_sites()];
    for (o, amp) in w.iter().enumerate() {
        out[model.orbital_site(o)] += amp.norm_sqr();
    }
    out.into_iter().map(f64::sqrt).collect()
}

/// Distance between two cell coordinates, measured along the lattice
/// vectors so that it agrees with real-space separation, and wrapped on the
/// torus when the boundary is periodic.
fn cell_distance(a: [f64; 2], b: [f64; 2], boundary: Boundary, l: [f64; 2]) -> f64 {
    use crate::lattice::{A1, A2};
    let euclid = |dm: f64, dn: f64| -> f64 {
        (dm * A1[0] + dn * A2[0]).hypot(dm * A1[1] + dn * A2[1])
    };
    let (dm, dn) = (a[0] - b[0], a[1] - b[1]);
    match boundary {
        Boundary::Dirichlet => euclid(dm, dn),
        Boundary::Periodic => {
            let mut best = f64::INFINITY;
            for wm in [-1.0, 0.0, 1.0] {
                for wn in [-1.0, 0.0, 1.0] {
                    best = best.min(euclid(dm + wm * l[0], dn + wn * l[1]));
                }
            }
            best
        }
    }
}

/// (distance, norm) samples for a honeycomb function measured from `center`
/// in cell coordinates. On the torus, cells beyond half the shortest period
/// are dropped: their norms superpose wrap-around tails from several
/// directions and no single distance describes them.
pub fn decay_samples_honeycomb(
    cell_norms: &ArrayView2<f64>,
    center: [f64; 2],
    boundary: Boundary,
) -> Vec<(f64, f64)> {
    let (l1, l2) = cell_norms.dim();
    let d_cut = match boundary {
        Boundary::Periodic => 0.5 * l1.min(l2) as f64,
        Boundary::Dirichlet => f64::INFINITY,
    };
    let mut samples = Vec::with_capacity(l1 * l2);
    for m in 0..l1 {
        for n in 0..l2 {
            let d = cell_distance(
                [m as f64, n as f64],
                center,
                boundary,
                [l1 as f64, l2 as f64],
            );
            if d < d_cut {
                samples.push((d, cell_norms[[m, n]]));
            }
        }
    }
    samples
}

/// (distance, norm) samples for a quasicrystal function in Cartesian
/// coordinates.
pub fn decay_samples_quasicrystal(
    norms: &[f64],
    lattice: &Lattice,
    center: [f64; 2],
) -> Vec<(f64, f64)> {
    norms
        .iter()
        .enumerate()
        .map(|(s, &v)| {
            let p = lattice.sites[s].position;
            ((p[0] - center[0]).hypot(p[1] - center[1]), v)
        })
        .collect()
}

/// Least-squares fit of log(norm) against distance to center over the
/// radial envelope: within each unit-distance shell only the largest norm
/// enters the fit, so direction-dependent decay rates do not masquerade as
/// poor exponentiality. Samples below the norm floor are ignored. Returns
/// (decay_rate, r_squared) where the rate is the magnitude of the fitted
/// slope of the envelope.
pub fn decay_fit(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    let mut shells: std::collections::BTreeMap<i64, (f64, f64)> = std::collections::BTreeMap::new();
    for &(d, v) in samples.iter().filter(|(_, v)| *v > NORM_FLOOR) {
        let shell = d.floor() as i64;
        let entry = shells.entry(shell).or_insert((d, v));
        if v > entry.1 {
            *entry = (d, v);
        }
    }
    let pts: Vec<(f64, f64)> = shells.values().map(|&(d, v)| (d, v.ln())).collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples { count: pts.len(), needed: MIN_FIT_SAMPLES });
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(Error::TooFewSamples { count: pts.len(), needed: MIN_FIT_SAMPLES });
    }
    let slope = sxy / sxx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let pred = mean_y + slope * (p.0 - mean_x);
            (p.1 - pred) * (p.1 - pred)
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 0.0 };
    Ok((slope.abs(), r2))
}

/// Root second moment of the sample weights about the center.
fn spread_from_samples(samples: &[(f64, f64)]) -> f64 {
    samples.iter().map(|&(d, v)| d * d * v * v).sum::<f64>().sqrt()
}

/// Full localization report for one function.
pub fn localization_report(
    w: ArrayView1<Complex64>,
    center: [f64; 2],
    lattice: &Lattice,
    model: ModelKind,
) -> Result<LocalizationReport> {
    let samples = if lattice.is_honeycomb() {
        let norms = cell_norm_matrix(w, lattice, model)?;
        decay_samples_honeycomb(&norms.view(), center, lattice.boundary)
    } else {
        let norms = site_norms(w, lattice, model);
        decay_samples_quasicrystal(&norms, lattice, center)
    };
    let (decay_rate, fit_r2) = decay_fit(&samples)?;
    Ok(LocalizationReport { center, decay_rate, fit_r2, spread: spread_from_samples(&samples) })
}

/// Marzari-Vanderbilt variance split for one function: the total variance in
/// the two bare coordinates, the gauge-dependent part, and the
/// gauge-invariant remainder.
#[derive(Debug, Clone, Serialize)]
pub struct MVReport {
    pub total_variance: f64,
    pub gauge_dependent: f64,
    pub gauge_invariant: f64,
}

/// Decompose Var_X + Var_Y of every column of `w` (all of which must lie in
/// the span of `fermi`) into ||P (X - mu) P w||^2 + ||Q X P w||^2 per axis.
/// One matrix product per axis covers all functions.
pub fn mv_decomposition_batch(
    w: &Array2<Complex64>,
    fermi: &Frame,
    lattice: &Lattice,
    model: ModelKind,
) -> Result<Vec<MVReport>> {
    let r = w.ncols();
    let pw = fermi.project(w);
    for k in 0..r {
        let leak: f64 = (&w.column(k) - &pw.column(k))
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        if leak > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "function {k} lies outside the Fermi projection: residual {leak:.3e}"
            )));
        }
    }

    let mut reports =
        vec![MVReport { total_variance: 0.0, gauge_dependent: 0.0, gauge_invariant: 0.0 }; r];
    for axis in [1u8, 2] {
        let coords = coordinate_diagonal(model, lattice, axis)?;
        // Centered columns (X - mu_k) w_k assembled in one pass.
        let mut centered = Array2::<Complex64>::zeros(w.raw_dim());
        for k in 0..r {
            let col = w.column(k);
            let mu: f64 = col.iter().zip(coords.iter()).map(|(z, x)| z.norm_sqr() * x).sum();
            for (i, z) in col.iter().enumerate() {
                centered[[i, k]] = z * Complex64::new(coords[i] - mu, 0.0);
            }
        }
        let p_centered = fermi.project(&centered);
        for k in 0..r {
            let total: f64 = centered.column(k).iter().map(|z| z.norm_sqr()).sum();
            let dep: f64 = p_centered.column(k).iter().map(|z| z.norm_sqr()).sum();
            let inv: f64 = (&centered.column(k) - &p_centered.column(k))
                .iter()
                .map(|z| z.norm_sqr())
                .sum();
            reports[k].total_variance += total;
            reports[k].gauge_dependent += dep;
            reports[k].gauge_invariant += inv;
        }
    }
    Ok(reports)
}

/// Single-function variant of `mv_decomposition_batch`.
pub fn mv_decomposition(
    w: ArrayView1<Complex64>,
    fermi: &Frame,
    lattice: &Lattice,
    model: ModelKind,
) -> Result<MVReport> {
    let wcol = w.insert_axis(ndarray::Axis(1)).to_owned();
    Ok(mv_decomposition_batch(&wcol, fermi, lattice, model)?.remove(0))
}

/// Symmetry metrics of a Wannier set. Values are reported; thresholds are
/// the caller's business.
#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    /// Max |Im| over entries after aligning each function's global phase.
    pub bosonic_imag: Option<f64>,
    /// Max over functions of the Theta-image leakage out of the span.
    pub fermionic_closure: Option<f64>,
    /// Translation covariance defect per generator, when applicable.
    pub translation: Option<[TranslationCovariance; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TranslationCovariance {
    /// True when the overlap matrix has exactly one near-unimodular entry
    /// per row and per column.
    pub permutation_like: bool,
    /// Largest deviation |1 - |s|| of the selected entries.
    pub modulus_defect: f64,
}

/// Phase-aligned maximum imaginary part over all functions.
pub fn bosonic_reality_metric(w: &Array2<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for col in w.columns() {
        let mut best = Complex64::new(1.0, 0.0);
        let mut best_mod = -1.0;
        for z in col.iter() {
            if z.norm() > best_mod {
                best_mod = z.norm();
                best = *z;
            }
        }
        let phase = if best_mod > 0.0 { best / best.norm() } else { Complex64::new(1.0, 0.0) };
        for z in col.iter() {
            worst = worst.max((z * phase.conj()).im.abs());
        }
    }
    worst
}

/// Max over functions of ||(I - W W^H) Theta w_i||_2 for the Kane-Mele
/// layout: closure of the span under time reversal.
pub fn fermionic_closure_metric(
    w: &Array2<Complex64>,
    lattice: &Lattice,
) -> Result<f64> {
    let frame = Frame::new(w.clone(), "wannier");
    let mut theta_w = Array2::<Complex64>::zeros(w.raw_dim());
    let mut col_buf = vec![Complex64::new(0.0, 0.0); w.nrows()];
    for (k, col) in w.columns().into_iter().enumerate() {
        for (dst, src) in col_buf.iter_mut().zip(col.iter()) {
            *dst = *src;
        }
        let theta = apply_theta_kane_mele(lattice, &col_buf);
        for (i, z) in theta.into_iter().enumerate() {
            theta_w[[i, k]] = z;
        }
    }
    let proj = frame.project(&theta_w);
    let mut worst = 0.0f64;
    for k in 0..w.ncols() {
        let leak: f64 = (&theta_w.column(k) - &proj.column(k))
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(leak);
    }
    Ok(worst)
}

/// Overlap of the Wannier set with its translate by `v` cells. Clean
/// periodic systems should produce a permutation-times-phase matrix.
pub fn translation_covariance_metric(
    w: &Array2<Complex64>,
    lattice: &Lattice,
    model: ModelKind,
    v: (i32, i32),
    tol: f64,
) -> Result<TranslationCovariance> {
    let site_perm = crate::lattice::translation_map(lattice, v)?;
    let flavors = model.orbitals_per_site();
    let n = w.nrows();
    let mut tw = Array2::<Complex64>::zeros(w.raw_dim());
    for site in 0..lattice.n_sites() {
        for f in 0..flavors {
            let src = model.orbital_index(site, f);
            let dst = model.orbital_index(site_perm[site], f);
            for k in 0..w.ncols() {
                tw[[dst, k]] = w[[src, k]];
            }
        }
    }
    debug_assert_eq!(n, tw.nrows());
    let s = w.t().mapv(|z| z.conj()).dot(&tw);

    let r = s.nrows();
    let mut row_hits = vec![0usize; r];
    let mut col_hits = vec![0usize; r];
    let mut modulus_defect = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            let m = s[[i, j]].norm();
            if m >= 1.0 - tol {
                row_hits[i] += 1;
                col_hits[j] += 1;
                modulus_defect = modulus_defect.max((1.0 - m).abs());
            }
        }
    }
    let permutation_like =
        row_hits.iter().all(|&c| c == 1) && col_hits.iter().all(|&c| c == 1);
    Ok(TranslationCovariance { permutation_like, modulus_defect })
}

/// Bundle the symmetry checks appropriate for a model run.
pub fn symmetry_checks(
    ws: &WannierSet,
    lattice: &Lattice,
    model: ModelKind,
    clean_periodic: bool,
) -> Result<SymmetryReport> {
    let bosonic_imag = Some(bosonic_reality_metric(&ws.functions));
    let fermionic_closure = if model == ModelKind::KaneMele {
        Some(fermionic_closure_metric(&ws.functions, lattice)?)
    } else {
        None
    };
    let translation = if clean_periodic && lattice.boundary == Boundary::Periodic {
        let a1 = translation_covariance_metric(&ws.functions, lattice, model, (1, 0), 1e-6)?;
        let a2 = translation_covariance_metric(&ws.functions, lattice, model, (0, 1), 1e-6)?;
        Some([a1, a2])
    } else {
        None
    };
    Ok(SymmetryReport { bosonic_imag, fermionic_closure, translation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_honeycomb, LatticeSpec, Sublattice};
    use ndarray::Array1;
    use crate::linalg::loewdin;
    use crate::rng::SplitMix64;

    fn delta_state(lattice: &Lattice, m: usize, n: usize, s: Sublattice) -> Array1<Complex64> {
        let mut w = Array1::<Complex64>::zeros(lattice.n_sites());
        w[lattice.site_index(m, n, s)] = Complex64::new(1.0, 0.0);
        w
    }

    #[test]
    fn cell_norms_delta_and_uniform() {
        let lat = build_honeycomb(&LatticeSpec::honeycomb(4, 5, Boundary::Dirichlet)).unwrap();
        let w = delta_state(&lat, 2, 3, Sublattice::B);
        let norms = cell_norm_matrix(w.view(), &lat, ModelKind::Haldane).unwrap();
        for m in 0..4 {
            for n in 0..5 {
                let expect = if (m, n) == (2, 3) { 1.0 } else { 0.0 };
                assert_eq!(norms[[m, n]], expect);
            }
        }

        let n_sites = lat.n_sites();
        let u = Array1::from_elem(n_sites, Complex64::new(1.0 / (n_sites as f64).sqrt(), 0.0));
        let norms = cell_norm_matrix(u.view(), &lat, ModelKind::Haldane).unwrap();
        let first = norms[[0, 0]];
        for v in norms.iter() {
            assert!((v - first).abs() < 1e-14);
        }
        // Entries square-sum to the norm of the state.
        let total: f64 = norms.iter().map(|v| v * v).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cell_norms_reject_quasicrystal() {
        let ab =
            crate::lattice::build_ammann_beenker(&LatticeSpec::ammann_beenker(1)).unwrap();
        let w = Array1::<Complex64>::zeros(ab.n_sites() * 2);
        assert!(cell_norm_matrix(w.view(), &ab, ModelKind::PxIpy).is_err());
    }

    #[test]
    fn decay_fit_exact_exponential() {
        let lat = build_honeycomb(&LatticeSpec::honeycomb(10, 10, Boundary::Dirichlet)).unwrap();
        let center = [4.0, 5.0];
        let mut norms = Array2::<f64>::zeros((10, 10));
        for m in 0..10 {
            for n in 0..10 {
                let d = cell_distance([m as f64, n as f64], center, Boundary::Dirichlet, [10.0, 10.0]);
                norms[[m, n]] = (-d).exp();
            }
        }
        let samples = decay_samples_honeycomb(&norms.view(), center, lat.boundary);
        let (rate, r2) = decay_fit(&samples).unwrap();
        assert!((rate - 1.0).abs() < 1e-6, "rate {rate}");
        assert!(r2 > 0.999999, "r2 {r2}");
    }

    #[test]
    fn decay_fit_uniform_state_is_flat() {
        let norms = Array2::<f64>::from_elem((6, 6), 1.0 / 6.0);
        let samples = decay_samples_honeycomb(&norms.view(), [2.5, 2.5], Boundary::Dirichlet);
        let (rate, _) = decay_fit(&samples).unwrap();
        assert!(rate.abs() < 1e-12);
    }

    #[test]
    fn decay_fit_needs_samples() {
        let samples = vec![(0.0, 1.0), (1.0, 0.1)];
        assert!(matches!(decay_fit(&samples), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn mv_identity_and_eigvector_case() {
        let lat = build_honeycomb(&LatticeSpec::honeycomb(4, 4, Boundary::Dirichlet)).unwrap();
        let h = crate::models::assemble_haldane(&lat, 3.0, 1.0, Complex64::new(0.5, 0.0)).unwrap();
        let (fermi, _) = crate::linalg::occupied_frame(&h.matrix, lat.n_cells()).unwrap();

        // Any normalized vector in the span satisfies the identity.
        let mut rng = SplitMix64::new(17);
        let mut coeffs = Array1::<Complex64>::zeros(fermi.rank());
        for z in coeffs.iter_mut() {
            *z = Complex64::new(rng.next_normal(), rng.next_normal());
        }
        let mut w = fermi.columns.dot(&coeffs);
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        w.mapv_inplace(|z| z / norm);

        let report = mv_decomposition(w.view(), &fermi, &lat, ModelKind::Haldane).unwrap();
        let defect =
            (report.total_variance - report.gauge_dependent - report.gauge_invariant).abs();
        assert!(defect < 1e-10, "identity defect {defect}");
        assert!(report.total_variance > 0.0);
    }

    #[test]
    fn mv_rejects_states_outside_projection() {
        let lat = build_honeycomb(&LatticeSpec::honeycomb(4, 4, Boundary::Dirichlet)).unwrap();
        let h = crate::models::assemble_haldane(&lat, 3.0, 1.0, Complex64::new(0.5, 0.0)).unwrap();
        let (fermi, _) = crate::linalg::occupied_frame(&h.matrix, lat.n_cells()).unwrap();
        let w = delta_state(&lat, 0, 0, Sublattice::A);
        assert!(mv_decomposition(w.view(), &fermi, &lat, ModelKind::Haldane).is_err());
    }

    #[test]
    fn mv_invariant_part_stable_under_remix() {
        let lat = build_honeycomb(&LatticeSpec::honeycomb(4, 4, Boundary::Dirichlet)).unwrap();
        let h = crate::models::assemble_haldane(&lat, 3.0, 1.0, Complex64::new(0.5, 0.0)).unwrap();
        let (fermi, _) = crate::linalg::occupied_frame(&h.matrix, lat.n_cells()).unwrap();
        let r = fermi.rank();

        let sum_invariant = |w: &Array2<Complex64>| -> f64 {
            (0..w.ncols())
                .map(|k| {
                    mv_decomposition(w.column(k), &fermi, &lat, ModelKind::Haldane)
                        .unwrap()
                        .gauge_invariant
                })
                .sum()
        };

        let base = sum_invariant(&fermi.columns);

        let mut rng = SplitMix64::new(23);
        let g = Array2::from_shape_fn((r, r), |_| {
            Complex64::new(rng.next_normal(), rng.next_normal())
        });
        let u = loewdin(&g).unwrap();
        let remixed = fermi.columns.dot(&u);
        let after = sum_invariant(&remixed);
        assert!((base - after).abs() < 1e-8, "invariant sum moved by {}", (base - after).abs());
    }

    #[test]
    fn bosonic_metric_ignores_global_phase() {
        let mut w = Array2::<Complex64>::zeros((4, 1));
        let phase = Complex64::from_polar(1.0, 1.1);
        w[[0, 0]] = Complex64::new(0.8, 0.0) * phase;
        w[[1, 0]] = Complex64::new(0.6, 0.0) * phase;
        assert!(bosonic_reality_metric(&w) < 1e-14);

        w[[1, 0]] = Complex64::new(0.6, 0.1) * phase;
        assert!(bosonic_reality_metric(&w) > 0.05);
    }
}
