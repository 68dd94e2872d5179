use nalgebra::DMatrix;
use num_complex::Complex64;

use super::fit::{inner, Atom};
use crate::error::{Error, Result};
use crate::signal_model::{PathParams, RadarGrid};

/// Fisher information `(2 / sigma^2) Re(D^H D)` over
/// `(Re gamma, Im gamma, tau, alpha)` per path, delays and Dopplers in bin
/// units.
pub fn fisher_information(paths: &[PathParams], grid: &RadarGrid, noise_var: f64) -> DMatrix<f64> {
    fisher(paths, grid, noise_var, false)
}

fn fisher(paths: &[PathParams], grid: &RadarGrid, noise_var: f64, project: bool) -> DMatrix<f64> {
    let atoms: Vec<Atom> = paths
        .iter()
        .map(|p| Atom::new(grid, p.delay, p.doppler, project))
        .collect();
    let one = Complex64::new(1.0, 0.0);
    let j = Complex64::new(0.0, 1.0);
    // Column c of D is scale * x (x) y with (x, y) taken from the atom.
    let column = |c: usize| -> (Complex64, &Vec<Complex64>, &Vec<Complex64>) {
        let p = c / 4;
        let atom = &atoms[p];
        match c % 4 {
            0 => (one, &atom.a, &atom.b),
            1 => (j, &atom.a, &atom.b),
            2 => (paths[p].weight, &atom.da, &atom.b),
            _ => (paths[p].weight, &atom.a, &atom.db),
        }
    };
    let n = 4 * paths.len();
    let mut fim = DMatrix::zeros(n, n);
    for c in 0..n {
        let (sc, xc, yc) = column(c);
        for d in c..n {
            let (sd, xd, yd) = column(d);
            let v = (sc.conj() * sd * inner(xc, xd) * inner(yc, yd)).re * 2.0 / noise_var;
            fim[(c, d)] = v;
            fim[(d, c)] = v;
        }
    }
    fim
}

/// Cramer-Rao variance of each path's weight magnitude `|gamma_p|`.
///
/// The 2x2 weight block of the inverse Fisher information is projected onto
/// the direction of `gamma_p` in the complex plane.
pub fn crb_weight_variance(
    paths: &[PathParams],
    grid: &RadarGrid,
    noise_var: f64,
) -> Result<Vec<f64>> {
    crb_projected(paths, grid, noise_var, false)
}

/// As [`crb_weight_variance`], optionally for background-subtracted data.
pub(crate) fn crb_projected(
    paths: &[PathParams],
    grid: &RadarGrid,
    noise_var: f64,
    project: bool,
) -> Result<Vec<f64>> {
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::Validation(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    if paths.is_empty() {
        return Ok(Vec::new());
    }
    let fim = fisher(paths, grid, noise_var, project);
    let coupled = || {
        let atoms: Vec<Atom> = paths
            .iter()
            .map(|p| Atom::new(grid, p.delay, p.doppler, project))
            .collect();
        let mut idx = Vec::new();
        for p in 0..atoms.len() {
            for q in p + 1..atoms.len() {
                let c = (inner(&atoms[p].a, &atoms[q].a) * inner(&atoms[p].b, &atoms[q].b)).norm();
                let norm_p = inner(&atoms[p].b, &atoms[p].b).re * grid.subcarriers() as f64;
                let norm_q = inner(&atoms[q].b, &atoms[q].b).re * grid.subcarriers() as f64;
                if c > (1.0 - 1e-6) * (norm_p * norm_q).sqrt() {
                    idx.extend([p, q]);
                }
            }
            if paths[p].weight.norm() == 0.0 {
                idx.push(p);
            }
        }
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() {
            idx = (0..paths.len()).collect();
        }
        idx
    };
    let inv = fim
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularFisher { paths: coupled() })?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularFisher { paths: coupled() });
    }
    Ok(paths
        .iter()
        .enumerate()
        .map(|(p, path)| {
            let m = path.weight.norm();
            let (u0, u1) = if m > 0.0 {
                (path.weight.re / m, path.weight.im / m)
            } else {
                (1.0, 0.0)
            };
            let b = 4 * p;
            u0 * u0 * inv[(b, b)] + 2.0 * u0 * u1 * inv[(b, b + 1)] + u1 * u1 * inv[(b + 1, b + 1)]
        })
        .collect())
}
