//! Periodic-grid simulation of a scheme and modal measurement of transport
//! coefficients.
//!
//! Units are lattice units: one step is `Δt = 1` and velocity `j` moves
//! particles by `c_j` sites, so a site spacing is `Δx = λ`. A mode with
//! integer index `m` on an `n`-site axis has wavevector `K = 2π m / (n λ)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::diffop::OpMatrix;
use crate::dispersion::{symbol, FloatScheme};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::expansion::expand;
use crate::number::{to_f64, Rational};
use crate::scheme::LatticeScheme;

/// Periodic lattice with axis 0 varying fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub sizes: Vec<usize>,
}

impl Lattice {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self { sizes }
    }

    pub fn cubic(dim: usize, n: usize) -> Self {
        Self { sizes: vec![n; dim] }
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sites(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn coords(&self, mut site: usize) -> Vec<usize> {
        self.sizes
            .iter()
            .map(|&n| {
                let c = site % n;
                site /= n;
                c
            })
            .collect()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.sizes).rev().fold(0, |acc, (&c, &n)| acc * n + c)
    }

    /// Site reached from `site` by the integer offset `shift`.
    pub fn shifted(&self, site: usize, shift: &[i64]) -> usize {
        let c: Vec<usize> = self
            .coords(site)
            .iter()
            .zip(shift)
            .zip(&self.sizes)
            .map(|((&x, &s), &n)| (x as i64 + s).rem_euclid(n as i64) as usize)
            .collect();
        self.index(&c)
    }
}

/// Integer site offsets `c_j`; fails when a velocity does not map sites to
/// sites.
pub fn lattice_offsets(scheme: &LatticeScheme) -> Result<Vec<Vec<i64>>> {
    scheme
        .velocities
        .iter()
        .enumerate()
        .map(|(index, v)| {
            if v.len() != scheme.dim {
                return Err(Error::LatticeIncompatible { index, reason: "wrong number of components".into() });
            }
            v.iter()
                .map(|c| {
                    if c.is_integer() {
                        i64::try_from(c.to_integer()).map_err(|_| Error::LatticeIncompatible {
                            index,
                            reason: "component too large".into(),
                        })
                    } else {
                        Err(Error::LatticeIncompatible {
                            index,
                            reason: format!("component {c} is not an integer multiple of λΔt"),
                        })
                    }
                })
                .collect()
        })
        .collect()
}

/// For every slot `site·q + j`, the slot it gathers from when streaming:
/// `f_j(x) ← f_j(x − c_j)`.
pub fn gather_table(lattice: &Lattice, offsets: &[Vec<i64>]) -> Vec<usize> {
    let q = offsets.len();
    let back: Vec<Vec<i64>> = offsets.iter().map(|c| c.iter().map(|x| -x).collect()).collect();
    let mut table = vec![0; lattice.sites() * q];
    for site in 0..lattice.sites() {
        for (j, b) in back.iter().enumerate() {
            table[site * q + j] = lattice.shifted(site, b) * q + j;
        }
    }
    table
}

/// Pure gather `dst[i] = src[table[i]]`.
pub fn stream_gather<T: Clone + Send + Sync>(table: &[usize], src: &[T], dst: &mut [T], exec: Execution) {
    const CHUNK: usize = 4096;
    exec.for_each_chunk_mut(dst, CHUNK, |c, out| {
        let base = c * CHUNK;
        for (i, x) in out.iter_mut().enumerate() {
            *x = src[table[base + i]].clone();
        }
    });
}

/// One exact relax-then-stream step on rational particle fields.
pub fn exact_step(scheme: &LatticeScheme, lattice: &Lattice, f: &[Rational]) -> Result<Vec<Rational>> {
    let q = scheme.q();
    let table = gather_table(lattice, &lattice_offsets(scheme)?);
    let mut post = Vec::with_capacity(f.len());
    for site in f.chunks(q) {
        let m = scheme.relax(&scheme.moments_of(site)?)?;
        post.extend(scheme.particles_of(&m)?);
    }
    let mut out = vec![Rational::zero(); f.len()];
    stream_gather(&table, &post, &mut out, Execution::Sequential);
    Ok(out)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Particle field in double precision, stored site-major.
#[derive(Clone, Debug)]
pub struct Grid {
    pub lattice: Lattice,
    pub q: usize,
    pub lambda: f64,
    pub f: Vec<f64>,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn sites(&self) -> usize {
        self.lattice.sites()
    }

    /// Site spacing in domain units for a unit-length domain along axis 0.
    pub fn dx(&self) -> f64 {
        1.0 / self.lattice.sizes[0] as f64
    }
}

/// Relax-then-stream stepper.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub scheme: FloatScheme,
    pub grid: Grid,
    jac: DMatrix<f64>,
    offset: Vec<f64>,
    rates: Vec<f64>,
    table: Vec<usize>,
    scratch: Vec<f64>,
    /// Row-major copies of `M` and `M⁻¹` for the collision kernel.
    m_flat: Vec<f64>,
    minv_flat: Vec<f64>,
    pub exec: Execution,
    pub steps_taken: usize,
}

impl Simulation {
    pub fn new(scheme: &LatticeScheme, lattice: Lattice, exec: Execution) -> Result<Self> {
        let scheme = scheme.clone().checked()?;
        if lattice.dim() != scheme.dim {
            return Err(Error::Dimension(format!("{}-d grid for a {}-d scheme", lattice.dim(), scheme.dim)));
        }
        let table = gather_table(&lattice, &lattice_offsets(&scheme)?);
        let fs = FloatScheme::new(&scheme)?;
        let q = fs.q;
        let e = &scheme.equilibrium_jacobian;
        let grid = Grid { f: vec![0.0; lattice.sites() * q], lattice, q, lambda: to_f64(&scheme.lambda) };
        Ok(Self {
            jac: DMatrix::from_fn(e.rows(), e.cols(), |i, j| to_f64(&e[(i, j)])),
            offset: scheme.equilibrium_offset.iter().map(to_f64).collect(),
            rates: scheme.rates.iter().map(to_f64).collect(),
            scratch: vec![0.0; grid.f.len()],
            m_flat: row_major(&fs.m),
            minv_flat: row_major(&fs.minv),
            scheme: fs,
            grid,
            table,
            exec,
            steps_taken: 0,
        })
    }

    /// Sets every site from its moment vector.
    pub fn set_moments(&mut self, moments: impl Fn(&[usize]) -> Vec<f64> + Sync) {
        let q = self.grid.q;
        let (minv, lattice) = (&self.scheme.minv, &self.grid.lattice);
        self.exec.for_each_chunk_mut(&mut self.grid.f, q, |site, f| {
            let m = moments(&lattice.coords(site));
            for (j, x) in f.iter_mut().enumerate() {
                *x = (0..q).map(|k| minv[(j, k)] * m[k]).sum();
            }
        });
        self.steps_taken = 0;
    }

    /// Conserved moments given, the rest at equilibrium `Φ(W)`.
    pub fn set_equilibrium(&mut self, conserved: impl Fn(&[usize]) -> Vec<f64> + Sync) {
        let (jac, offset) = (self.jac.clone(), self.offset.clone());
        self.set_moments(|x| {
            let w = conserved(x);
            let mut m = w.clone();
            m.extend((0..jac.nrows()).map(|k| offset[k] + (0..w.len()).map(|l| jac[(k, l)] * w[l]).sum::<f64>()));
            m
        });
    }

    fn collide(&mut self) {
        let (q, n_c) = (self.grid.q, self.scheme.conserved);
        let (m_flat, minv_flat) = (&self.m_flat, &self.minv_flat);
        let (jac, offset, rates) = (&self.jac, &self.offset, &self.rates);
        self.exec.for_each_chunk_mut(&mut self.grid.f, q, |_, f| {
            let mut buf = [0.0f64; 64];
            let mut heap;
            let m: &mut [f64] = if q <= 64 {
                &mut buf[..q]
            } else {
                heap = vec![0.0; q];
                &mut heap
            };
            for (k, mk) in m.iter_mut().enumerate() {
                *mk = m_flat[k * q..(k + 1) * q].iter().zip(f.iter()).map(|(a, b)| a * b).sum();
            }
            for k in n_c..q {
                let y = k - n_c;
                let eq = offset[y] + (0..n_c).map(|l| jac[(y, l)] * m[l]).sum::<f64>();
                m[k] = rates[y] * (eq - m[k]);
            }
            for (j, fj) in f.iter_mut().enumerate() {
                *fj += minv_flat[j * q + n_c..(j + 1) * q].iter().zip(&m[n_c..]).map(|(a, b)| a * b).sum::<f64>();
            }
        });
    }

    pub fn step(&mut self) {
        self.collide();
        stream_gather(&self.table, &self.grid.f, &mut self.scratch, self.exec);
        std::mem::swap(&mut self.grid.f, &mut self.scratch);
        self.steps_taken += 1;
    }

    pub fn run(&mut self, steps: usize) {
        for _ in 0..steps {
            self.step();
        }
    }

    /// Moment vector at one site.
    pub fn moments_at(&self, site: usize) -> Vec<f64> {
        let q = self.grid.q;
        let f = &self.grid.f[site * q..(site + 1) * q];
        (0..q).map(|k| (0..q).map(|j| self.scheme.m[(k, j)] * f[j]).sum()).collect()
    }

    /// `Σ_x W_k(x)` for each conserved moment, compensated.
    pub fn conserved_totals(&self) -> Vec<f64> {
        let q = self.grid.q;
        (0..self.scheme.conserved)
            .map(|k| {
                compensated_sum(
                    self.grid.f.chunks(q).map(|f| compensated_sum((0..q).map(|j| self.scheme.m[(k, j)] * f[j]))),
                )
            })
            .collect()
    }

    /// `Σ_x m(x) e^{−i K·x}` for every moment.
    pub fn moment_dft(&self, mode: &[i64]) -> Vec<Complex64> {
        let phases = mode_phases(&self.grid.lattice, mode);
        let q = self.grid.q;
        let per_site = self.exec.map(&(0..self.grid.sites()).collect::<Vec<_>>(), |&s| {
            self.moments_at(s).into_iter().map(|m| phases[s] * m).collect::<Vec<_>>()
        });
        (0..q)
            .map(|k| {
                let re = compensated_sum(per_site.iter().map(|v| v[k].re));
                let im = compensated_sum(per_site.iter().map(|v| v[k].im));
                Complex64::new(re, im)
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.grid.f.iter().all(|x| x.is_finite())
    }
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

/// `e^{−i 2π Σ m_a x_a / n_a}` per site.
pub fn mode_phases(lattice: &Lattice, mode: &[i64]) -> Vec<Complex64> {
    (0..lattice.sites())
        .map(|s| {
            let theta: f64 = lattice
                .coords(s)
                .iter()
                .zip(mode)
                .zip(&lattice.sizes)
                .map(|((&x, &m), &n)| 2.0 * PI * (m * x as i64).rem_euclid(n as i64) as f64 / n as f64)
                .sum();
            Complex64::from_polar(1.0, -theta)
        })
        .collect()
}

/// Physical wavevector `2π m_a / (n_a λ)`.
pub fn wavevector(lattice: &Lattice, mode: &[i64], lambda: f64) -> Vec<f64> {
    mode.iter().zip(&lattice.sizes).map(|(&m, &n)| 2.0 * PI * m as f64 / (n as f64 * lambda)).collect()
}

/// Evaluates a `∂`-operator matrix at `∂_α = i K_α`.
pub fn evaluate_symbol(op: &OpMatrix, k: &[f64]) -> DMatrix<Complex64> {
    let s = symbol(op);
    DMatrix::from_fn(s.rows(), s.cols(), |i, j| {
        s.get(i, j)
            .terms()
            .map(|(beta, c)| {
                let mono: f64 = beta.exponents().iter().zip(k).map(|(&e, &x)| x.powi(e as i32)).product();
                Complex64::new(to_f64(&c.re), to_f64(&c.im)) * mono
            })
            .sum()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Initialization {
    /// Non-conserved moments at `Φ(W)`.
    #[default]
    Equilibrium,
    /// `Y = Φ(W) + S⁻¹ Ψ₁ W`.
    FirstOrderCorrected,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeConfig {
    pub n: usize,
    pub mode: Vec<i64>,
    pub steps: usize,
    pub amplitude: f64,
    /// Leading fraction of steps excluded from the fit.
    pub skip_fraction: f64,
    pub init: Initialization,
    pub exec: Execution,
}

impl ModeConfig {
    pub fn new(dim: usize, n: usize, steps: usize) -> Self {
        let mut mode = vec![0; dim];
        mode[0] = 1;
        Self {
            n,
            mode,
            steps,
            amplitude: 1e-4,
            skip_fraction: 0.2,
            init: Initialization::Equilibrium,
            exec: Execution::default(),
        }
    }
}

/// Conserved-moment mode measurement.
///
/// `decay` is `−d ln|Â|/dt` and `frequency` is `−d arg Â/dt` per step.
/// Predictions at order `p` are `Re/Im Σ_{j≤p} Γ_j(iK)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub grid: usize,
    pub mode: Vec<i64>,
    pub wavevector: Vec<f64>,
    pub steps: usize,
    pub measured_decay: Option<f64>,
    pub measured_frequency: Option<f64>,
    pub predicted_decay: [f64; 4],
    pub predicted_frequency: [f64; 4],
    pub fit_residual: f64,
    /// `|ln|Â(0)| − fitted intercept|`.
    pub initial_layer: f64,
}

impl SimReport {
    /// `|measured − predicted_p| / |measured|`.
    pub fn relative_error(&self, order: usize) -> Option<f64> {
        self.measured_decay.map(|m| ((m - self.predicted_decay[order - 1]) / m).abs())
    }
}

pub const FIT_RESIDUAL_THRESHOLD: f64 = 1e-6;
pub const BLOWUP_FACTOR: f64 = 1e3;

/// Least-squares line `y = a + b t`; returns `(a, b, max |residual|)`.
pub fn fit_line(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let (tm, ym) = (t.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut stt, mut sty) = (0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        stt += (a - tm) * (a - tm);
        sty += (a - tm) * (b - ym);
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let intercept = ym - slope * tm;
    let res = t.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).abs()).fold(0.0, f64::max);
    (intercept, slope, res)
}

fn unwrap_phase(phases: &mut [f64]) {
    for i in 1..phases.len() {
        let mut d = phases[i] - phases[i - 1];
        while d > PI {
            phases[i] -= 2.0 * PI;
            d -= 2.0 * PI;
        }
        while d < -PI {
            phases[i] += 2.0 * PI;
            d += 2.0 * PI;
        }
    }
}

/// Predicted `(decay, frequency)` for orders 1..4 at wavevector `k`.
pub fn predictions(scheme: &LatticeScheme, k: &[f64]) -> Result<([f64; 4], [f64; 4])> {
    if scheme.conserved != 1 {
        return Err(Error::Unsupported("modal measurement needs exactly one conserved moment".into()));
    }
    let r = expand(scheme, 4)?;
    let (mut decay, mut freq) = ([0.0; 4], [0.0; 4]);
    let mut acc = Complex64::zero();
    for p in 0..4 {
        acc += evaluate_symbol(r.gamma(p + 1), k)[(0, 0)];
        decay[p] = acc.re;
        freq[p] = acc.im;
    }
    Ok((decay, freq))
}

/// Runs one sinusoidal mode `W = 1 + a sin(K·x)` and fits its decay.
pub fn measure_mode(scheme: &LatticeScheme, cfg: &ModeConfig) -> Result<SimReport> {
    let lattice = Lattice::cubic(scheme.dim, cfg.n);
    if cfg.mode.len() != scheme.dim {
        return Err(Error::Dimension(format!("mode has {} components, expected {}", cfg.mode.len(), scheme.dim)));
    }
    let mut sim = Simulation::new(scheme, lattice.clone(), cfg.exec)?;
    let k = wavevector(&lattice, &cfg.mode, sim.grid.lambda);
    let (predicted_decay, predicted_frequency) = predictions(scheme, &k)?;
    let mut report = SimReport {
        grid: cfg.n,
        mode: cfg.mode.clone(),
        wavevector: k.clone(),
        steps: cfg.steps,
        measured_decay: None,
        measured_frequency: None,
        predicted_decay,
        predicted_frequency,
        fit_residual: 0.0,
        initial_layer: 0.0,
    };
    if cfg.steps == 0 {
        return Ok(report);
    }
    initialize_mode(&mut sim, scheme, cfg, &k)?;

    let phases = mode_phases(&lattice, &cfg.mode);
    let amplitude = |sim: &Simulation| -> Complex64 {
        let q = sim.grid.q;
        let row = sim.scheme.m.row(0);
        let vals: Vec<Complex64> = (0..sim.grid.sites())
            .map(|s| phases[s] * (0..q).map(|j| row[j] * sim.grid.f[s * q + j]).sum::<f64>())
            .collect();
        Complex64::new(compensated_sum(vals.iter().map(|z| z.re)), compensated_sum(vals.iter().map(|z| z.im)))
    };
    let reference = sim.grid.f.clone();
    let base_dev = deviation(&sim.grid.f, &reference).max(cfg.amplitude);
    let mut amps = vec![amplitude(&sim)];
    for step in 1..=cfg.steps {
        sim.step();
        if step % 10 == 0 || step == cfg.steps {
            if !sim.is_finite() {
                return Err(Error::NumericInstability { step, reason: "non-finite particle values".into() });
            }
            let dev = deviation(&sim.grid.f, &reference);
            if dev > BLOWUP_FACTOR * base_dev {
                return Err(Error::NumericInstability {
                    step,
                    reason: format!("deviation grew by {:.1e}", dev / base_dev),
                });
            }
        }
        amps.push(amplitude(&sim));
    }

    let start = ((cfg.steps as f64 * cfg.skip_fraction).ceil() as usize).min(cfg.steps.saturating_sub(1));
    let t: Vec<f64> = (start..=cfg.steps).map(|s| s as f64).collect();
    let logs: Vec<f64> = amps[start..].iter().map(|z| z.norm().ln()).collect();
    let mut args: Vec<f64> = amps.iter().map(|z| z.arg()).collect();
    unwrap_phase(&mut args);
    let (a0, slope, res_mod) = fit_line(&t, &logs);
    let (_, omega, res_arg) = fit_line(&t, &args[start..]);
    report.measured_decay = Some(-slope);
    report.measured_frequency = Some(-omega);
    report.fit_residual = res_mod.max(res_arg);
    report.initial_layer = (amps[0].norm().ln() - a0).abs();
    if !report.fit_residual.is_finite() || report.fit_residual > FIT_RESIDUAL_THRESHOLD {
        return Err(Error::FitResidual { residual: report.fit_residual, threshold: FIT_RESIDUAL_THRESHOLD });
    }
    if slope > 1e-9 {
        return Err(Error::NumericInstability { step: cfg.steps, reason: format!("mode grows at rate {slope:.3e}") });
    }
    Ok(report)
}

fn deviation(f: &[f64], reference: &[f64]) -> f64 {
    f.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn initialize_mode(sim: &mut Simulation, scheme: &LatticeScheme, cfg: &ModeConfig, k: &[f64]) -> Result<()> {
    let lattice = sim.grid.lattice.clone();
    let mode = cfg.mode.clone();
    let a = cfg.amplitude;
    let theta = move |x: &[usize]| -> f64 {
        x.iter()
            .zip(&mode)
            .zip(&lattice.sizes)
            .map(|((&xi, &m), &n)| 2.0 * PI * m as f64 * xi as f64 / n as f64)
            .sum()
    };
    let base: Vec<f64> = scheme.base_state.iter().map(to_f64).collect();
    match cfg.init {
        Initialization::Equilibrium => {
            sim.set_equilibrium(|x| {
                let mut w = base.clone();
                w[0] += a * theta(x).sin();
                w
            });
        }
        Initialization::FirstOrderCorrected => {
            // Y = Φ(W) + S⁻¹ Ψ₁(iK) â e^{iθ}, imaginary part for the sine.
            let r = expand(scheme, 2)?;
            let psi = evaluate_symbol(r.psi(1), k);
            let rates: Vec<f64> = scheme.rates.iter().map(to_f64).collect();
            let jac = sim.jac.clone();
            let offset = sim.offset.clone();
            let n_c = scheme.conserved;
            sim.set_moments(|x| {
                let th = theta(x);
                let mut w = base.clone();
                w[0] += a * th.sin();
                let e = Complex64::from_polar(a, th);
                let mut m = w.clone();
                for (y, s) in rates.iter().enumerate() {
                    let eq = offset[y] + (0..n_c).map(|l| jac[(y, l)] * w[l]).sum::<f64>();
                    m.push(eq + (psi[(y, 0)] * e).im / s);
                }
                m
            });
        }
    }
    Ok(())
}

/// One row of a refinement study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub report: SimReport,
    pub rel_err_o2: f64,
    pub rel_err_o4: f64,
    /// `log₂(e_prev / e)` against the previous (coarser) grid.
    pub order_est_o2: Option<f64>,
    pub order_est_o4: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceStudy {
    /// `e_{i}/e_{i+1}` for the order-`p` prediction.
    pub fn error_ratios(&self, order: usize) -> Vec<f64> {
        let e: Vec<f64> = self
            .rows
            .iter()
            .map(|r| if order == 2 { r.rel_err_o2 } else { r.rel_err_o4 })
            .collect();
        e.windows(2).map(|w| w[0] / w[1]).collect()
    }

    /// `grid,measured,predicted_o2,predicted_o4,rel_err,order_est`, errors
    /// against the order-2 prediction.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid,measured,predicted_o2,predicted_o4,rel_err,order_est\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.6e},{}",
                r.report.grid,
                r.report.measured_decay.unwrap_or(f64::NAN),
                r.report.predicted_decay[1],
                r.report.predicted_decay[3],
                r.rel_err_o2,
                r.order_est_o2.map(|o| format!("{o:.4}")).unwrap_or_default()
            );
        }
        out
    }

    /// Whitespace-separated columns for gnuplot, including the order-4 errors.
    pub fn to_dat(&self) -> String {
        let mut out = String::from("# grid measured predicted_o2 predicted_o4 rel_err_o2 rel_err_o4 order_est_o2 order_est_o4\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{} {:.17e} {:.17e} {:.17e} {:.6e} {:.6e} {} {}",
                r.report.grid,
                r.report.measured_decay.unwrap_or(f64::NAN),
                r.report.predicted_decay[1],
                r.report.predicted_decay[3],
                r.rel_err_o2,
                r.rel_err_o4,
                r.order_est_o2.map(|o| format!("{o:.4}")).unwrap_or_else(|| "nan".into()),
                r.order_est_o4.map(|o| format!("{o:.4}")).unwrap_or_else(|| "nan".into()),
            );
        }
        out
    }
}

pub fn convergence_study(scheme: &LatticeScheme, grids: &[usize], base: &ModeConfig) -> Result<ConvergenceStudy> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(grids.len());
    for &n in grids {
        let report = measure_mode(scheme, &ModeConfig { n, ..base.clone() })?;
        let (e2, e4) = (report.relative_error(2).unwrap_or(f64::NAN), report.relative_error(4).unwrap_or(f64::NAN));
        let (o2, o4) = match rows.last() {
            Some(prev) => (Some((prev.rel_err_o2 / e2).log2()), Some((prev.rel_err_o4 / e4).log2())),
            None => (None, None),
        };
        rows.push(ConvergenceRow { report, rel_err_o2: e2, rel_err_o4: e4, order_est_o2: o2, order_est_o4: o4 });
    }
    Ok(ConvergenceStudy { rows })
}

/// Largest deviation between the simulated moment DFT at `mode` and `G(K)^t`
/// applied to the initial one, over `steps` steps, relative to the larger of
/// the initial and the current predicted modal amplitude.
pub fn fourier_single_mode_check(
    scheme: &LatticeScheme,
    n: usize,
    mode: &[i64],
    steps: usize,
    exec: Execution,
) -> Result<f64> {
    let lattice = Lattice::cubic(scheme.dim, n);
    let mut sim = Simulation::new(scheme, lattice.clone(), exec)?;
    let cfg = ModeConfig { mode: mode.to_vec(), exec, ..ModeConfig::new(scheme.dim, n, steps) };
    let k = wavevector(&lattice, mode, sim.grid.lambda);
    initialize_mode(&mut sim, scheme, &cfg, &k)?;
    let kc: Vec<Complex64> = k.iter().map(|&x| Complex64::from(x)).collect();
    let g = sim.scheme.amplification(&kc);
    let mut predicted = nalgebra::DVector::from_vec(sim.moment_dft(mode));
    let cmax = |v: &nalgebra::DVector<Complex64>| v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = cmax(&predicted);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        sim.step();
        predicted = &g * predicted;
        let measured = nalgebra::DVector::from_vec(sim.moment_dft(mode));
        worst = worst.max(cmax(&(&measured - &predicted)) / scale.max(cmax(&predicted)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::number::{int, rat};
    use crate::scheme::{builtin, builtin_d2q9};

    #[test]
    fn lattice_indexing_round_trips() {
        let l = Lattice::new(vec![4, 3, 5]);
        for s in 0..l.sites() {
            assert_eq!(l.index(&l.coords(s)), s);
        }
        assert_eq!(l.coords(1), vec![1, 0, 0]);
        assert_eq!(l.shifted(0, &[-1, 0, 0]), 3);
        assert_eq!(l.shifted(0, &[0, -1, 1]), l.index(&[0, 2, 1]));
    }

    #[test]
    fn gather_table_is_a_permutation() {
        let s = builtin("d2q9-advection").unwrap();
        let l = Lattice::cubic(2, 5);
        let mut t = gather_table(&l, &lattice_offsets(&s).unwrap());
        t.sort_unstable();
        assert!(t.iter().enumerate().all(|(i, &x)| i == x));
    }

    #[test]
    fn fractional_velocity_is_rejected() {
        let mut s = builtin("d1q3-advection").unwrap();
        s.velocities[1][0] = rat(1, 2);
        assert!(matches!(lattice_offsets(&s), Err(Error::LatticeIncompatible { index: 1, .. })));
    }

    #[test]
    fn exact_step_conserves_mass() {
        let s = builtin("d2q9-oblique").unwrap();
        let l = Lattice::cubic(2, 3);
        let f: Vec<Rational> = (0..l.sites() * 9).map(|i| rat((i * 7 % 13) as i64 + 1, (i % 5) as i64 + 2)).collect();
        let total = |f: &[Rational]| f.iter().fold(Rational::zero(), |a, x| a + x);
        let g = exact_step(&s, &l, &f).unwrap();
        assert_eq!(total(&f), total(&g));
    }

    #[test]
    fn uniform_equilibrium_is_fixed() {
        let s = builtin_d2q9(int(1), int(0), int(0), int(1), crate::scheme::d2q9_reference_rates()).unwrap();
        let mut sim = Simulation::new(&s, Lattice::cubic(2, 4), Execution::Sequential).unwrap();
        sim.set_equilibrium(|_| vec![1.0]);
        let before = sim.grid.f.clone();
        sim.run(5);
        let dev = deviation(&sim.grid.f, &before);
        assert!(dev < 1e-15, "{dev}");
    }

    #[test]
    fn sequential_and_parallel_are_bitwise_equal() {
        let s = builtin("d2q9-oblique").unwrap();
        let run = |exec| {
            let mut cfg = ModeConfig::new(2, 16, 0);
            cfg.exec = exec;
            let l = Lattice::cubic(2, 16);
            let mut sim = Simulation::new(&s, l.clone(), exec).unwrap();
            let k = wavevector(&l, &cfg.mode, 1.0);
            initialize_mode(&mut sim, &s, &cfg, &k).unwrap();
            sim.run(20);
            sim.grid.f
        };
        let (a, b) = (run(Execution::Sequential), run(Execution::Parallel));
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn line_fit_is_exact_on_lines() {
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = t.iter().map(|x| 0.5 - 0.25 * x).collect();
        let (a, b, r) = fit_line(&t, &y);
        assert!((a - 0.5).abs() < 1e-15 && (b + 0.25).abs() < 1e-15 && r < 1e-15);
    }

    #[test]
    fn zero_steps_gives_empty_report() {
        let s = builtin("d2q9-diffusion").unwrap();
        let r = measure_mode(&s, &ModeConfig::new(2, 8, 0)).unwrap();
        assert!(r.measured_decay.is_none());
        assert!(r.predicted_decay[1] > 0.0);
    }

    #[test]
    fn diffusion_rate_near_prediction() {
        let s = builtin("d2q9-diffusion").unwrap();
        let r = measure_mode(&s, &ModeConfig::new(2, 32, 400)).unwrap();
        let k = 2.0 * PI / 32.0;
        assert!((r.predicted_decay[1] - 5.0 / 18.0 * k * k).abs() < 1e-15);
        assert!(r.relative_error(2).unwrap() < 1e-2);
        assert!(r.relative_error(4).unwrap() < r.relative_error(2).unwrap());
    }

    #[test]
    fn advection_frequency_matches_velocity() {
        let s = builtin("d1q3-advection").unwrap();
        let r = measure_mode(&s, &ModeConfig::new(1, 64, 400)).unwrap();
        let k = 2.0 * PI / 64.0;
        assert!((r.measured_frequency.unwrap() - 0.2 * k).abs() < 1e-4 * k);
    }

    #[test]
    fn unstable_rates_are_detected() {
        let mut rates = crate::scheme::d2q9_reference_rates();
        rates[3] = rat(5, 2);
        let s = builtin_d2q9(int(1), int(0), int(0), int(1), rates).unwrap();
        let err = measure_mode(&s, &ModeConfig::new(2, 16, 200)).unwrap_err();
        assert!(matches!(err, Error::NumericInstability { .. }), "{err}");
    }

    #[test]
    fn single_mode_matches_amplification() {
        let s = builtin("d2q9-oblique").unwrap();
        let err = fourier_single_mode_check(&s, 16, &[1, 2], 30, Execution::default()).unwrap();
        assert!(err < 1e-11, "{err}");
    }

    #[test]
    fn corrected_initialization_shrinks_initial_layer() {
        let s = builtin("d2q9-advection").unwrap();
        let mut cfg = ModeConfig::new(2, 32, 200);
        let plain = measure_mode(&s, &cfg).unwrap();
        cfg.init = Initialization::FirstOrderCorrected;
        let corrected = measure_mode(&s, &cfg).unwrap();
        assert!(corrected.initial_layer < plain.initial_layer, "{} vs {}", corrected.initial_layer, plain.initial_layer);
    }
}
