//! One function per subcommand. Work is parallel over ω or realizations;
//! results are collected in grid order and written by this thread only, so
//! output bytes do not depend on the thread count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bdgchain::correlations::{equal_time, freq_correlations, lro_parameter, FreqCorrelations};
use bdgchain::disorder::{clean_singular_gap, critical_point, disorder_sweep, rescale};
use bdgchain::green::{singular_values_at, svd_at};
use bdgchain::io::{write_json, write_matrix_csv, Cell, CsvWriter, Header};
use bdgchain::linalg;
use bdgchain::models::{dynamical_matrix, Boundary, BlochGenerator};
use bdgchain::topology::winding_array;
use bdgchain::validate::{run_suite, ValidationReport};
use bdgchain::CMat;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::Failure;

struct Sink {
    dir: PathBuf,
    header: Header,
    written: Vec<PathBuf>,
}

impl Sink {
    fn new(cfg: &RunConfig) -> Result<Self, Failure> {
        let dir = cfg.outputs.dir.clone();
        fs::create_dir_all(&dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
        // probe writability up front rather than after a long computation
        let probe = dir.join(".bdgchain-write-test");
        File::create(&probe)
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| Failure::Config(format!("{} is not writable: {e}", dir.display())))?;
        Ok(Self {
            dir,
            header: Header::new(cfg.hash()),
            written: Vec::new(),
        })
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| Failure::Output(path.clone(), e))?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    fn path(&self) -> &Path {
        self.written.last().expect("a file was opened")
    }

    fn csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<Cell>]) -> Result<(), Failure> {
        let out = self.open(name)?;
        let io_err = |s: &Self, e| Failure::Output(s.path().to_path_buf(), e);
        let mut w = CsvWriter::new(out, &self.header, columns).map_err(|e| io_err(self, e))?;
        for r in rows {
            w.row(r).map_err(|e| io_err(self, e))?;
        }
        w.finish().map_err(|e| io_err(self, e))?;
        Ok(())
    }

    fn matrix(&mut self, name: &str, m: &CMat) -> Result<(), Failure> {
        let out = self.open(name)?;
        write_matrix_csv(out, &self.header, m, true).map_err(|e| Failure::Output(self.path().to_path_buf(), e))?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<(), Failure> {
        let out = self.open(name)?;
        write_json(out, &self.header, data).map_err(|e| Failure::Output(self.path().to_path_buf(), e))?;
        Ok(())
    }
}

pub fn spectrum(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let mut sink = Sink::new(cfg)?;
    let cs = cfg.chain()?;
    let h = dynamical_matrix(&cs);
    h.require_stable()?;
    let omegas = cfg.omega_grid.points();
    let bands: Vec<Vec<f64>> = match cfg.boundary {
        Boundary::Obc => omegas.par_iter().map(|&w| singular_values_at(&h, w)).collect::<bdgchain::Result<_>>()?,
        Boundary::Pbc => {
            let gen = BlochGenerator::new(&cs)?;
            let nk = cfg.spectrum.k_points;
            omegas
                .par_iter()
                .map(|&w| band_minima(&gen, w, nk))
                .collect::<bdgchain::Result<_>>()?
        }
    };
    let mut rows = Vec::new();
    for (w, s) in omegas.iter().zip(&bands) {
        for (i, v) in s.iter().enumerate() {
            rows.push(vec![Cell::from(*w), Cell::from(i), Cell::from(*v)]);
        }
    }
    sink.csv("spectrum.csv", &["omega", "index", "singular_value"], &rows)?;
    Ok(sink.written)
}

/// `min_k s_b(ω − ℍ(k))` for each band `b`.
fn band_minima(gen: &BlochGenerator, omega: f64, nk: usize) -> bdgchain::Result<Vec<f64>> {
    let mut best = vec![f64::INFINITY; gen.dim()];
    for m in 0..nk {
        let k = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * m as f64 / nk as f64;
        let s = linalg::singular_values_ascending(&linalg::shifted(&gen.at(k), omega))?;
        for (b, v) in best.iter_mut().zip(s) {
            *b = b.min(v);
        }
    }
    Ok(best)
}

pub fn winding(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let mut sink = Sink::new(cfg)?;
    // the Bloch matrix is read off the bulk, so the boundary setting is moot
    let cs = cfg.chain()?;
    let g = &cfg.omega_grid;
    let wa = winding_array(&cs, g.min.abs().max(g.max.abs()), g.count, cfg.winding.refine_tol)?;
    sink.json("winding.json", &wa)?;
    Ok(sink.written)
}

#[derive(Serialize)]
struct EqualTimeSummary {
    omega_c: f64,
    panels: usize,
    evaluations: usize,
    estimated_error: f64,
    min_eigenvalue: f64,
    excluded_sites: Vec<usize>,
    lambda_n: f64,
    lambda_m: f64,
}

pub fn correlations(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let mut sink = Sink::new(cfg)?;
    let cs = cfg.chain()?;
    let h = dynamical_matrix(&cs);
    h.require_stable()?;
    let at = |w: f64| -> bdgchain::Result<FreqCorrelations> { freq_correlations(&svd_at(&h, w)?, &cs) };

    let omegas = cfg.omega_grid.points();
    let lro: Vec<(f64, f64)> = omegas
        .par_iter()
        .map(|&w| at(w).map(|f| (lro_parameter(&f.n_bar), lro_parameter(&f.m_bar))))
        .collect::<bdgchain::Result<_>>()?;
    let picked: Vec<FreqCorrelations> = cfg.correlations.omegas.par_iter().map(|&w| at(w)).collect::<bdgchain::Result<_>>()?;
    let et = if cfg.correlations.equal_time { Some(equal_time(&cs, &cfg.quadrature)?) } else { None };

    let rows: Vec<Vec<Cell>> =
        omegas.iter().zip(&lro).map(|(w, (a, b))| vec![Cell::from(*w), Cell::from(*a), Cell::from(*b)]).collect();
    sink.csv("lro.csv", &["omega", "lambda_N", "lambda_M"], &rows)?;
    for (i, f) in picked.iter().enumerate() {
        sink.matrix(&format!("freq_{i}_n.csv"), &f.n_mat)?;
        sink.matrix(&format!("freq_{i}_m.csv"), &f.m_mat)?;
        sink.matrix(&format!("freq_{i}_nbar.csv"), &f.n_bar)?;
        sink.matrix(&format!("freq_{i}_mbar.csv"), &f.m_bar)?;
    }
    if let Some(et) = et {
        sink.matrix("equal_time_n.csv", &et.n_mat)?;
        sink.matrix("equal_time_m.csv", &et.m_mat)?;
        sink.matrix("equal_time_nbar.csv", &et.n_bar)?;
        sink.matrix("equal_time_mbar.csv", &et.m_bar)?;
        let summary = EqualTimeSummary {
            omega_c: et.report.omega_c,
            panels: et.report.panels,
            evaluations: et.report.evaluations,
            estimated_error: et.report.estimated_error,
            min_eigenvalue: et.min_eigenvalue()?,
            excluded_sites: et.excluded.clone(),
            lambda_n: lro_parameter(&et.n_bar),
            lambda_m: lro_parameter(&et.m_bar),
        };
        sink.json("equal_time.json", &summary)?;
    }
    Ok(sink.written)
}

#[derive(Serialize)]
struct DisorderSummary {
    observable: String,
    seed: u64,
    n_r: usize,
    delta_sg: f64,
    /// `null` when the curve has no resolvable transition.
    w_c: Option<f64>,
    /// `W_c/√Δ_sg`.
    c: Option<f64>,
    w_c_note: Option<String>,
    n_unstable: Vec<usize>,
    warnings: Vec<String>,
}

pub fn disorder(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let mut sink = Sink::new(cfg)?;
    let d = cfg
        .disorder
        .as_ref()
        .ok_or_else(|| Failure::Config("the disorder command needs a [disorder] table".into()))?;
    let base = cfg.chain()?;
    let seed = cfg.disorder_seed();
    let sweep = disorder_sweep(&base, &d.w_grid, d.n_r, seed, d.observable)?;
    let omega = match d.observable {
        bdgchain::disorder::Observable::LambdaN { omega } | bdgchain::disorder::Observable::R { omega } => omega,
    };
    let delta_sg = clean_singular_gap(&base, omega, d.n_edge)?;
    let x = rescale(&sweep.w_grid, delta_sg);
    let (w_c, note) = match critical_point(&sweep.w_grid, &sweep.means, &sweep.stderrs, d.smooth_window) {
        Ok(w) => (Some(w), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let rows: Vec<Vec<Cell>> = (0..sweep.w_grid.len())
        .map(|i| {
            vec![
                Cell::from(sweep.w_grid[i]),
                Cell::from(sweep.means[i]),
                Cell::from(sweep.stderrs[i]),
                Cell::from(sweep.n_unstable[i]),
            ]
        })
        .collect();
    sink.csv("disorder_sweep.csv", &["W", "mean", "stderr", "n_unstable"], &rows)?;
    let rows: Vec<Vec<Cell>> = (0..sweep.w_grid.len())
        .map(|i| {
            vec![Cell::from(sweep.w_grid[i]), Cell::from(x[i]), Cell::from(sweep.means[i]), Cell::from(sweep.stderrs[i])]
        })
        .collect();
    sink.csv("disorder_collapse.csv", &["W", "W_over_sqrt_delta_sg", "mean", "stderr"], &rows)?;
    let summary = DisorderSummary {
        observable: sweep.observable_name.clone(),
        seed,
        n_r: d.n_r,
        delta_sg,
        w_c,
        c: w_c.map(|w| w / delta_sg.sqrt()),
        w_c_note: note,
        n_unstable: sweep.n_unstable.clone(),
        warnings: sweep.warnings.clone(),
    };
    sink.json("disorder_summary.json", &summary)?;
    Ok(sink.written)
}

pub fn validate(cfg: &RunConfig, out: &mut impl Write) -> Result<(ValidationReport, Vec<PathBuf>), Failure> {
    let mut sink = Sink::new(cfg)?;
    let rep = run_suite(&cfg.validate)?;
    for c in &rep.checks {
        let _ = writeln!(
            out,
            "{} {:<42} value {:>11.3e}  threshold {:>9.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    let _ = writeln!(out, "{} checks in {:.1} s", rep.checks.len(), rep.seconds);
    // wall time varies run to run, so only the checks go to the file
    sink.json("validate.json", &rep.checks)?;
    Ok((rep, sink.written))
}
