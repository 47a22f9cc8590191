//! End-to-end pipelines behind the command-line subcommands: build the
//! system, run the requested computation, and write every artifact with a
//! checksummed manifest.

use ndarray::Array1;
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;
use crate::diagnostics::{
    self, LocalizationReport, MVReport, SymmetryReport,
};
use crate::error::{Error, Result};
use crate::ipp::{self, WannierSet};
use crate::lattice::{build_lattice, Boundary, Lattice};
use crate::linalg::{self, Frame};
use crate::models::{apply_onsite_disorder, default_occupation, Hamiltonian, ModelKind};
use crate::position::{PositionFunctional, PositionSpec};
use crate::wcc;

/// Hard output tolerances: a run that violates them exits nonzero.
pub const ORTHONORMALITY_TOL_HERMITIAN: f64 = 1e-8;
pub const ORTHONORMALITY_TOL_UNITARY: f64 = 1e-6;
pub const SPAN_TOL: f64 = 1e-6;

/// Assembled system ready for projection work.
pub struct PreparedSystem {
    pub lattice: Lattice,
    pub hamiltonian: Hamiltonian,
    pub n_occ: usize,
    pub fermi: Frame,
    pub eigenvalues: Array1<f64>,
}

/// Build lattice and Hamiltonian, apply disorder, pick the filling, and
/// extract the Fermi frame.
pub fn prepare(config: &RunConfig) -> Result<PreparedSystem> {
    config.validate()?;
    let lattice = build_lattice(&config.lattice)?;
    let mut hamiltonian = config.model.assemble(&lattice)?;
    if let Some(spec) = config.disorder {
        hamiltonian = apply_onsite_disorder(&hamiltonian, spec)?;
    }
    let eig = linalg::hermitian_eig(&hamiltonian.matrix)?;
    let n_occ = match config.n_occ {
        Some(n) => n,
        None => match default_occupation(config.model.kind(), &lattice) {
            Some(n) => n,
            None => eig.values.iter().filter(|&&e| e < 0.0).count(),
        },
    };
    let n = eig.values.len();
    if n_occ > n {
        return Err(Error::Config(format!("n_occ = {n_occ} exceeds dimension {n}")));
    }
    if n_occ > 0 && n_occ < n {
        let gap = eig.values[n_occ] - eig.values[n_occ - 1];
        if gap < linalg::GAP_TOL {
            return Err(Error::GapClosed { n_occ, gap });
        }
    }
    let fermi = Frame::new(
        eig.vectors.slice(ndarray::s![.., ..n_occ]).to_owned(),
        format!("fermi(n_occ={n_occ})"),
    );
    Ok(PreparedSystem { lattice, hamiltonian, n_occ, fermi, eigenvalues: eig.values })
}

fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}

/// Written artifacts with their checksums, accumulated per run.
pub struct ArtifactSink {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactSink { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    pub fn write(&mut self, rel: &str, content: &str) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, content)?;
        let mut hasher = Sha256::new();
        hasher.update(content.as_bytes());
        self.entries.push((rel.to_string(), format!("{:x}", hasher.finalize())));
        Ok(())
    }

    pub fn write_json(&mut self, rel: &str, value: &serde_json::Value) -> Result<()> {
        self.write(rel, &format!("{:#}\n", value))
    }

    /// Write the manifest last so it can list every other artifact.
    pub fn finish_manifest(
        &mut self,
        config: &RunConfig,
        tolerances: serde_json::Value,
        started: Instant,
    ) -> Result<()> {
        let seeds: Vec<u64> = config.disorder.iter().map(|d| d.seed).collect();
        let manifest = json!({
            "config": config,
            "seeds": seeds,
            "tolerances": tolerances,
            "wall_time_seconds": started.elapsed().as_secs_f64(),
            "artifacts": self.entries.iter().map(|(p, h)| json!({"path": p, "sha256": h})).collect::<Vec<_>>(),
        });
        self.write_json("manifest.json", &manifest)
    }

    pub fn checksums(&self) -> &[(String, String)] {
        &self.entries
    }
}

/// Sorted first-stage spectrum with sort keys and cluster ids.
pub fn cmd_spectrum(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    let mut sink = ArtifactSink::new(out_dir)?;
    let prep = prepare(config)?;
    let sequence = config.sequence.resolve()?;
    let spectrum = ipp::stage_spectrum(
        &prep.fermi,
        &sequence[0],
        &config.gap_policy,
        &prep.lattice,
        config.model.kind(),
    )?;

    let mut csv = String::from("rank,re,im,sort_key,cluster\n");
    for (i, (z, key)) in spectrum.raw.iter().zip(spectrum.keys.iter()).enumerate() {
        let cluster = spectrum
            .decomposition
            .as_ref()
            .map(|d| d.cluster_of(i) as i64)
            .unwrap_or(-1);
        let _ = writeln!(csv, "{},{},{},{},{}", i, fmt_f(z.re), fmt_f(z.im), fmt_f(*key), cluster);
    }
    sink.write("spectrum.csv", &csv)?;

    let tolerances = match &spectrum.decomposition {
        Some(d) => json!({
            "n_clusters": d.n_clusters(),
            "min_inter_gap": d.min_inter_gap,
            "max_intra_gap": d.max_intra_gap,
            "max_intra_spread": d.max_intra_spread,
        }),
        None => json!({ "detect_error": spectrum.detect_error.as_ref().map(|e| e.to_string()) }),
    };
    sink.finish_manifest(config, tolerances, started)?;

    match spectrum.detect_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Everything cmd_ipp knows after a successful pipeline run.
pub struct IppOutcome {
    pub wannier: WannierSet,
    pub reports: Vec<LocalizationReport>,
    pub mv: Vec<MVReport>,
    pub symmetry: SymmetryReport,
}

/// Run the full pipeline in memory; shared by `cmd_ipp` and `cmd_diagnose`.
pub fn run_pipeline(config: &RunConfig, prep: &PreparedSystem) -> Result<IppOutcome> {
    let sequence = config.sequence.resolve()?;
    let model = config.model.kind();
    let wannier = ipp::run_ipp(&prep.fermi, &sequence, &config.gap_policy, &prep.lattice, model)?;

    let reports: Vec<LocalizationReport> = (0..wannier.n_functions())
        .into_par_iter()
        .map(|k| {
            diagnostics::localization_report(
                wannier.functions.column(k),
                wannier.centers[k],
                &prep.lattice,
                model,
            )
        })
        .collect::<Result<_>>()?;

    let mv = diagnostics::mv_decomposition_batch(&wannier.functions, &prep.fermi, &prep.lattice, model)?;
    let clean_periodic =
        config.disorder.map_or(true, |d| d.variance == 0.0) && prep.lattice.boundary == Boundary::Periodic;
    let symmetry = diagnostics::symmetry_checks(&wannier, &prep.lattice, model, clean_periodic)?;

    Ok(IppOutcome { wannier, reports, mv, symmetry })
}

fn hermitian_sequence(sequence: &[PositionSpec]) -> bool {
    sequence.iter().all(|s| s.functional != PositionFunctional::ComplexExp)
}

/// The orthonormality budget depends on whether the sequence needed the
/// Loewdin step.
pub fn orthonormality_tolerance(sequence: &[PositionSpec]) -> f64 {
    if hermitian_sequence(sequence) {
        ORTHONORMALITY_TOL_HERMITIAN
    } else {
        ORTHONORMALITY_TOL_UNITARY
    }
}

fn diagnostics_json(config: &RunConfig, outcome: &IppOutcome) -> serde_json::Value {
    let ws = &outcome.wannier;
    let min_rate =
        outcome.reports.iter().map(|r| r.decay_rate).fold(f64::INFINITY, f64::min);
    let min_r2 = outcome.reports.iter().map(|r| r.fit_r2).fold(f64::INFINITY, f64::min);
    let max_mv_defect = outcome
        .mv
        .iter()
        .map(|m| (m.total_variance - m.gauge_dependent - m.gauge_invariant).abs())
        .fold(0.0f64, f64::max);
    let invariant_total: f64 = outcome.mv.iter().map(|m| m.gauge_invariant).sum();
    json!({
        "n_functions": ws.n_functions(),
        "orthonormality_error": ws.orthonormality_error,
        "span_error": ws.span_error,
        "loewdin_residual": ws.loewdin_residual,
        "decay_rate_min": min_rate,
        "fit_r2_min": min_r2,
        "functions": outcome.reports,
        "mv": {
            "max_identity_defect": max_mv_defect,
            "gauge_invariant_total": invariant_total,
            "per_function": outcome.mv,
        },
        "symmetry": outcome.symmetry,
        "seed": config.disorder.map(|d| d.seed),
    })
}

fn enforce_output_tolerances(config: &RunConfig, ws: &WannierSet) -> Result<()> {
    let sequence = config.sequence.resolve()?;
    let tol = orthonormality_tolerance(&sequence);
    if ws.orthonormality_error > tol {
        return Err(Error::InvalidInput(format!(
            "orthonormality error {:.3e} exceeds tolerance {tol:.1e}",
            ws.orthonormality_error
        )));
    }
    if ws.span_error > SPAN_TOL {
        return Err(Error::InvalidInput(format!(
            "span error {:.3e} exceeds tolerance {SPAN_TOL:.1e}",
            ws.span_error
        )));
    }
    Ok(())
}

/// Full run: Wannier set, localization data, diagnostics, manifest.
pub fn cmd_ipp(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    let mut sink = ArtifactSink::new(out_dir)?;
    let prep = prepare(config)?;
    let outcome = run_pipeline(config, &prep)?;
    let ws = &outcome.wannier;
    let model = config.model.kind();

    // Amplitudes: one row per orbital, Re/Im pair per function.
    let r = ws.n_functions();
    let mut csv = String::from("orbital");
    for k in 0..r {
        let _ = write!(csv, ",re_{k},im_{k}");
    }
    csv.push('\n');
    for i in 0..ws.functions.nrows() {
        let _ = write!(csv, "{i}");
        for k in 0..r {
            let z = ws.functions[[i, k]];
            let _ = write!(csv, ",{},{}", fmt_f(z.re), fmt_f(z.im));
        }
        csv.push('\n');
    }
    sink.write("amplitudes.csv", &csv)?;

    // Localization data: cell-norm matrices per function on honeycomb
    // lattices, per-site scatter norms on quasicrystal patches.
    if prep.lattice.is_honeycomb() {
        for k in 0..r {
            let norms =
                diagnostics::cell_norm_matrix(ws.functions.column(k), &prep.lattice, model)?;
            let mut csv = String::new();
            for m in 0..norms.nrows() {
                let row: Vec<String> =
                    (0..norms.ncols()).map(|n| fmt_f(norms[[m, n]])).collect();
                let _ = writeln!(csv, "{}", row.join(","));
            }
            sink.write(&format!("cell_norms/function_{k:04}.csv"), &csv)?;
        }
    } else {
        for k in 0..r {
            let norms = diagnostics::site_norms(ws.functions.column(k), &prep.lattice, model);
            let mut csv = String::from("site,x,y,norm\n");
            for (s, v) in norms.iter().enumerate() {
                let p = prep.lattice.sites[s].position;
                let _ = writeln!(csv, "{s},{},{},{}", fmt_f(p[0]), fmt_f(p[1]), fmt_f(*v));
            }
            sink.write(&format!("site_norms/function_{k:04}.csv"), &csv)?;
        }
    }

    let meta = json!({
        "sequence": ws.sequence,
        "gap_policy": config.gap_policy,
        "centers": ws.centers,
        "provenance": ws.provenance,
        "seed": config.disorder.map(|d| d.seed),
        "tolerances": {
            "orthonormality_error": ws.orthonormality_error,
            "span_error": ws.span_error,
            "loewdin_residual": ws.loewdin_residual,
        },
    });
    sink.write_json("wannier.json", &meta)?;
    sink.write_json("lattice.json", &prep.lattice.to_json())?;
    sink.write_json("diagnostics.json", &diagnostics_json(config, &outcome))?;

    let tolerances = json!({
        "orthonormality_error": ws.orthonormality_error,
        "span_error": ws.span_error,
        "loewdin_residual": ws.loewdin_residual,
    });
    sink.finish_manifest(config, tolerances, started)?;

    enforce_output_tolerances(config, ws)
}

/// Diagnostics-only run: no amplitude or norm dumps.
pub fn cmd_diagnose(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    let mut sink = ArtifactSink::new(out_dir)?;
    let prep = prepare(config)?;
    let outcome = run_pipeline(config, &prep)?;
    sink.write_json("diagnostics.json", &diagnostics_json(config, &outcome))?;
    let tolerances = json!({
        "orthonormality_error": outcome.wannier.orthonormality_error,
        "span_error": outcome.wannier.span_error,
    });
    sink.finish_manifest(config, tolerances, started)?;
    enforce_output_tolerances(config, &outcome.wannier)
}

/// Charge-center sweep with Chern or Z2 diagnosis.
pub fn cmd_wcc(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    if config.disorder.map_or(false, |d| d.variance > 0.0) {
        return Err(Error::Config(
            "charge-center sweeps need translation symmetry; remove the disorder block".into(),
        ));
    }
    let model = config.model.kind();
    if model == ModelKind::PxIpy {
        return Err(Error::Config("charge-center sweeps require a honeycomb model".into()));
    }
    let wcfg = config.wcc.unwrap_or_default();
    let mut sink = ArtifactSink::new(out_dir)?;

    let family = wcc::bloch_family(&config.model, wcfg.l1, wcfg.n_k)?;
    let n_occ = config.n_occ.unwrap_or(family.n_occ);
    let sweep = wcc::wcc_sweep(&family, n_occ, false)?;

    let mut csv = String::from("kappa2,branch,center\n");
    for (i, slice) in sweep.branches.iter().enumerate() {
        for (b, x) in slice.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{}", fmt_f(sweep.kappa_grid[i]), b, fmt_f(*x));
        }
    }
    sink.write("wcc.csv", &csv)?;

    let (chern, residual, z2) = match model {
        ModelKind::Haldane => {
            let (c, res) = wcc::chern_from_winding(&sweep)?;
            (Some(c), Some(res), None)
        }
        ModelKind::KaneMele => (None, None, Some(wcc::z2_from_wcc(&sweep)?)),
        ModelKind::PxIpy => unreachable!(),
    };
    let invariants = json!({
        "chern": chern,
        "chern_residual": residual,
        "z2": z2,
        "min_branch_gap": sweep.min_branch_gap(),
        "l1": wcfg.l1,
        "n_k": wcfg.n_k,
        "n_occ": n_occ,
    });
    sink.write_json("invariants.json", &invariants)?;
    sink.finish_manifest(config, invariants, started)?;
    Ok(())
}

/// Resolve the output directory: CLI flag, then config, else an error.
pub fn resolve_out_dir(config: &RunConfig, flag: Option<&Path>) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))
}

/// Recompute and verify the checksums listed in a manifest file.
pub fn verify_manifest(dir: &Path) -> Result<bool> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let artifacts = manifest["artifacts"]
        .as_array()
        .ok_or_else(|| Error::Config("manifest has no artifact list".into()))?;
    for entry in artifacts {
        let rel = entry["path"].as_str().unwrap_or_default();
        let expect = entry["sha256"].as_str().unwrap_or_default();
        let bytes = std::fs::read(dir.join(rel))?;
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        if format!("{:x}", hasher.finalize()) != expect {
            return Ok(false);
        }
    }
    Ok(true)
}
