//! Weight least squares and damped Gauss-Newton over delays and Dopplers.
//!
//! Atoms are separable (`a_p[k] * b_p[l]`), so every inner product needed by
//! the normal equations factors into a delay part and a Doppler part. The
//! nonlinear parameters are iterated in bin units (`tau / delta_tau`,
//! `alpha / delta_alpha`) which keeps the normal matrix well scaled.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::MleConfig;
use crate::error::{Error, Result};
use crate::signal_model::{
    delay_steering, doppler_steering, superpose, validate_paths, ChannelFrame, PathParams,
    RadarGrid,
};
use crate::spectrum::background_subtract;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Atoms whose normalised coherence exceeds this are treated as duplicates.
const DUPLICATE_COHERENCE: f64 = 1.0 - 1e-10;

pub(crate) fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Steering vectors of one path plus their bin-unit derivatives.
///
/// With `project` set, the Doppler vectors have their mean removed, which is
/// what background subtraction does to a path.
pub(crate) struct Atom {
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
    pub da: Vec<Complex64>,
    pub db: Vec<Complex64>,
}

impl Atom {
    pub fn new(grid: &RadarGrid, delay: f64, doppler: f64, project: bool) -> Self {
        let a = delay_steering(grid, delay);
        let mut b = doppler_steering(grid, doppler);
        let (k_len, l_len) = (grid.subcarriers() as f64, grid.symbols() as f64);
        let da = a
            .iter()
            .enumerate()
            .map(|(k, z)| z * Complex64::new(0.0, -2.0 * PI * k as f64 / k_len))
            .collect();
        let mut db: Vec<Complex64> = b
            .iter()
            .enumerate()
            .map(|(l, z)| z * Complex64::new(0.0, 2.0 * PI * l as f64 / l_len))
            .collect();
        if project {
            remove_mean(&mut b);
            remove_mean(&mut db);
        }
        Self { a, b, da, db }
    }
}

fn remove_mean(v: &mut [Complex64]) {
    let mean = v.iter().sum::<Complex64>() / v.len() as f64;
    for z in v {
        *z -= mean;
    }
}

/// `x^H R conj(y)` style projection helper: returns `R * conj(y)` (length K).
fn row_project(r: &[Complex64], y: &[Complex64], k_len: usize) -> Vec<Complex64> {
    let l_len = y.len();
    (0..k_len)
        .map(|k| {
            r[k * l_len..(k + 1) * l_len]
                .iter()
                .zip(y)
                .map(|(z, w)| z * w.conj())
                .sum()
        })
        .collect()
}

fn duplicate_pairs(gram: &DMatrix<Complex64>, threshold: f64) -> Vec<(usize, usize)> {
    let n = gram.nrows();
    let mut pairs = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            let denom = (gram[(p, p)].re * gram[(q, q)].re).sqrt();
            if denom > 0.0 && gram[(p, q)].norm() / denom >= threshold {
                pairs.push((p, q));
            }
        }
    }
    pairs
}

fn solve_atoms(atoms: &[Atom], frame: &ChannelFrame) -> Result<Vec<Complex64>> {
    let n = atoms.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let k_len = frame.grid().subcarriers();
    let gram = DMatrix::from_fn(n, n, |p, q| {
        inner(&atoms[p].a, &atoms[q].a) * inner(&atoms[p].b, &atoms[q].b)
    });
    let dups = duplicate_pairs(&gram, DUPLICATE_COHERENCE);
    if !dups.is_empty() {
        return Err(Error::IllConditioned { pairs: dups });
    }
    let rhs = DVector::from_iterator(
        n,
        atoms
            .iter()
            .map(|atom| inner(&atom.a, &row_project(frame.data(), &atom.b, k_len))),
    );
    let ridge = 1e-12 * gram.diagonal().iter().map(|z| z.re).sum::<f64>();
    let mut regularised = gram.clone();
    for i in 0..n {
        regularised[(i, i)] += ridge;
    }
    let chol = regularised
        .cholesky()
        .ok_or_else(|| Error::IllConditioned {
            pairs: {
                let mut p = duplicate_pairs(&gram, 0.999);
                if p.is_empty() {
                    p = (0..n)
                        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                        .collect();
                }
                p
            },
        })?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Least-squares weights for atoms at the given `(delay, doppler)` pairs:
/// minimises `||H - B gamma||^2` through the ridge-regularised normal
/// equations (ridge `1e-12 * trace(B^H B)`).
pub fn solve_weights(taus_alphas: &[(f64, f64)], frame: &ChannelFrame) -> Result<Vec<Complex64>> {
    let grid = frame.grid();
    let atoms: Vec<Atom> = taus_alphas
        .iter()
        .map(|&(t, a)| Atom::new(grid, t, a, false))
        .collect();
    solve_atoms(&atoms, frame)
}

/// Noiseless model `sum_p gamma_p a_p b_p^T`.
pub fn model_response(paths: &[PathParams], grid: &RadarGrid) -> Result<ChannelFrame> {
    validate_paths(paths, grid)?;
    Ok(ChannelFrame::from_raw(*grid, superpose(paths, grid)))
}

/// Dense model Jacobian with respect to `(tau_1, alpha_1, tau_2, ...)` in
/// seconds and Hz, `K L x 2P`, rows in subcarrier-major order.
pub fn model_jacobian(paths: &[PathParams], grid: &RadarGrid) -> DMatrix<Complex64> {
    let (k_len, l_len) = (grid.subcarriers(), grid.symbols());
    let mut jac = DMatrix::from_element(k_len * l_len, 2 * paths.len(), ZERO);
    for (p, path) in paths.iter().enumerate() {
        let a = delay_steering(grid, path.delay);
        let b = doppler_steering(grid, path.doppler);
        for k in 0..k_len {
            let dk = Complex64::new(0.0, -2.0 * PI * k as f64 * grid.delta_f());
            for l in 0..l_len {
                let dl = Complex64::new(0.0, 2.0 * PI * l as f64 * grid.delta_t());
                let atom = path.weight * a[k] * b[l];
                jac[(k * l_len + l, 2 * p)] = atom * dk;
                jac[(k * l_len + l, 2 * p + 1)] = atom * dl;
            }
        }
    }
    jac
}

/// Outcome of a refinement run.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub paths: Vec<PathParams>,
    /// Cost after initial weight fit followed by the cost of every accepted step.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct State {
    theta: Vec<f64>,
    atoms: Vec<Atom>,
    weights: Vec<Complex64>,
    residual: Vec<Complex64>,
    cost: f64,
}

fn to_params(theta: &[f64], weights: &[Complex64], grid: &RadarGrid) -> Vec<PathParams> {
    weights
        .iter()
        .enumerate()
        .map(|(p, w)| {
            PathParams::new(
                *w,
                theta[2 * p] * grid.delay_resolution(),
                theta[2 * p + 1] * grid.doppler_resolution(),
            )
        })
        .collect()
}

fn evaluate(theta: Vec<f64>, frame: &ChannelFrame, project: bool) -> Result<State> {
    let grid = frame.grid();
    let atoms: Vec<Atom> = theta
        .chunks_exact(2)
        .map(|c| {
            Atom::new(
                grid,
                c[0] * grid.delay_resolution(),
                c[1] * grid.doppler_resolution(),
                project,
            )
        })
        .collect();
    let weights = solve_atoms(&atoms, frame)?;
    let l_len = grid.symbols();
    let mut residual = frame.data().to_vec();
    for (atom, w) in atoms.iter().zip(&weights) {
        for (k, ak) in atom.a.iter().enumerate() {
            let ga = w * ak;
            for (z, bl) in residual[k * l_len..(k + 1) * l_len].iter_mut().zip(&atom.b) {
                *z -= ga * bl;
            }
        }
    }
    let cost = residual.iter().map(|z| z.norm_sqr()).sum();
    Ok(State {
        theta,
        atoms,
        weights,
        residual,
        cost,
    })
}

/// Reduced normal equations `Re(J_P^H J_P)` and `Re(J^H r)` in bin units,
/// where `J_P` is the Jacobian projected off the atom span.
fn normal_equations(state: &State, k_len: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = state.atoms.len();
    // Column c = 2p (delay) is gamma_p * da_p (x) b_p, 2p+1 is gamma_p * a_p (x) db_p.
    let parts = |c: usize| {
        let atom = &state.atoms[c / 2];
        if c.is_multiple_of(2) {
            (&atom.da, &atom.b)
        } else {
            (&atom.a, &atom.db)
        }
    };
    let mut jtj = DMatrix::zeros(2 * n, 2 * n);
    for c in 0..2 * n {
        let (xc, yc) = parts(c);
        for d in c..2 * n {
            let (xd, yd) = parts(d);
            let v =
                state.weights[c / 2].conj() * state.weights[d / 2] * inner(xc, xd) * inner(yc, yd);
            jtj[(c, d)] = v.re;
            jtj[(d, c)] = v.re;
        }
    }
    // Variable projection: remove the part of each derivative column that
    // the re-solved weights absorb, `J^H B (B^H B)^-1 B^H J`.
    let gram = DMatrix::from_fn(n, n, |p, q| {
        inner(&state.atoms[p].a, &state.atoms[q].a) * inner(&state.atoms[p].b, &state.atoms[q].b)
    });
    let ridge = 1e-12 * gram.diagonal().iter().map(|z| z.re).sum::<f64>();
    let mut regularised = gram;
    for i in 0..n {
        regularised[(i, i)] += ridge;
    }
    let cross = DMatrix::from_fn(n, 2 * n, |q, c| {
        let (x, y) = parts(c);
        state.weights[c / 2] * inner(&state.atoms[q].a, x) * inner(&state.atoms[q].b, y)
    });
    if let Some(chol) = regularised.cholesky() {
        let absorbed = cross.adjoint() * chol.solve(&cross);
        jtj -= absorbed.map(|z| z.re);
    }
    let mut jtr = DVector::zeros(2 * n);
    for (p, atom) in state.atoms.iter().enumerate() {
        let g = state.weights[p].conj();
        let rb = row_project(&state.residual, &atom.b, k_len);
        let rdb = row_project(&state.residual, &atom.db, k_len);
        jtr[2 * p] = (g * inner(&atom.da, &rb)).re;
        jtr[2 * p + 1] = (g * inner(&atom.a, &rdb)).re;
    }
    (jtj, jtr)
}

fn solve_damped(jtj: &DMatrix<f64>, jtr: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let mut m = jtj.clone();
    for i in 0..m.nrows() {
        let d = jtj[(i, i)];
        m[(i, i)] += lambda * if d > 0.0 { d } else { 1.0 };
    }
    match m.clone().cholesky() {
        Some(c) => Some(c.solve(jtr)),
        None => m.lu().solve(jtr),
    }
}

fn clamp_theta(theta: &mut [f64], grid: &RadarGrid) {
    let u_max = grid.subcarriers() as f64 * (1.0 - 1e-12);
    let v_max = 0.5 * grid.symbols() as f64 * (1.0 - 1e-12);
    for c in theta.chunks_exact_mut(2) {
        c[0] = c[0].clamp(0.0, u_max);
        c[1] = c[1].clamp(-v_max, v_max);
    }
}

/// Joint Levenberg-damped Gauss-Newton refinement of all delays and
/// Dopplers; weights are re-solved after every step.
///
/// The damping is Marquardt-scaled (`lambda * diag(J^H J)`), halved after an
/// accepted step and multiplied by ten after a rejected one. Iteration stops
/// once the largest parameter change relative to `max(1, max |theta|)` (bin
/// units) drops below `step_tol`, or after `n_grad_max` steps.
///
/// With `config.background_subtraction` the frame is background-subtracted
/// (idempotent) and the model is fitted through the same projection, so the
/// returned weights describe the paths before subtraction.
pub fn refine_with_trace(
    paths: &[PathParams],
    frame: &ChannelFrame,
    config: &MleConfig,
) -> Result<Refinement> {
    config.validate()?;
    if paths.is_empty() {
        return Err(Error::Validation(
            "refinement needs at least one path".into(),
        ));
    }
    let grid = *frame.grid();
    validate_paths(paths, &grid)?;
    let project = config.background_subtraction;
    let subtracted;
    let frame = if project {
        subtracted = background_subtract(frame);
        &subtracted
    } else {
        frame
    };

    let mut theta: Vec<f64> = paths
        .iter()
        .flat_map(|p| {
            [
                p.delay / grid.delay_resolution(),
                p.doppler / grid.doppler_resolution(),
            ]
        })
        .collect();
    clamp_theta(&mut theta, &grid);
    let mut state = evaluate(theta, frame, project)?;
    if !state.cost.is_finite() {
        return Err(Error::RefinementAborted {
            reason: "initial cost is not finite".into(),
            last: paths.to_vec(),
        });
    }

    let mut history = vec![state.cost];
    let mut lambda = config.damping_init;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.n_grad_max {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&state, grid.subcarriers());
        let Some(step) = solve_damped(&jtj, &jtr, lambda) else {
            lambda = lambda.max(1e-12) * 10.0;
            continue;
        };
        let mut trial = state.theta.clone();
        for (t, s) in trial.iter_mut().zip(step.iter()) {
            *t += s;
        }
        clamp_theta(&mut trial, &grid);
        let scale = state.theta.iter().fold(1.0f64, |m, t| m.max(t.abs()));
        let moved = trial
            .iter()
            .zip(&state.theta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let small = moved / scale < config.step_tol;

        match evaluate(trial, frame, project) {
            Ok(next) if !next.cost.is_finite() => {
                return Err(Error::RefinementAborted {
                    reason: format!("cost became non-finite at iteration {iterations}"),
                    last: to_params(&state.theta, &state.weights, &grid),
                });
            }
            Ok(next) if next.cost <= state.cost => {
                state = next;
                history.push(state.cost);
                lambda *= 0.5;
            }
            // Rejected step, including atoms that collapsed onto each other.
            Ok(_) | Err(Error::IllConditioned { .. }) => {
                lambda = lambda.max(1e-12) * 10.0;
            }
            Err(e) => return Err(e),
        }
        if small {
            converged = true;
            break;
        }
    }

    Ok(Refinement {
        paths: to_params(&state.theta, &state.weights, &grid),
        cost_history: history,
        iterations,
        converged,
    })
}

/// [`refine_with_trace`] returning only the refined paths.
pub fn gauss_newton_refine(
    paths: &[PathParams],
    frame: &ChannelFrame,
    config: &MleConfig,
) -> Result<Vec<PathParams>> {
    refine_with_trace(paths, frame, config).map(|r| r.paths)
}
