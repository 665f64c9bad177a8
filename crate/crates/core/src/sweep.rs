//! Parameter-space exploration: final-time optimization, infidelity and
//! purity maps over the (x0/g, omega_c/x0) plane with regime overlays, and
//! seeded robustness statistics under relative parameter noise.

use crate::dynamics::{
    evolve_unitary, initial_state, DynamicsError, TimeGrid, Trajectory,
};
use crate::model::{ModelError, ModelParams, SpectatorSpec};
use crate::spectrum::{
    classify_with_threshold, delta, delta_c2, DeltaC2, DeltaC2Config, RayDirection, Regime,
    SpectrumError,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Rectangular grid over coupling strength and spectator-frequency ratio.
/// Axes are stored as dimensionless ratios; `g` and `epsilon` fix the scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub x0_over_g: Vec<f64>,
    pub omega_c_over_x0: Vec<f64>,
    pub g: f64,
    pub epsilon: f64,
    pub spectator: SpectatorSpec,
}

/// `n` log-spaced values over [lo, hi], endpoints exact.
pub fn log_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|k| (llo + (lhi - llo) * k as f64 / (n - 1) as f64).exp())
        .collect();
    v[0] = lo;
    v[n - 1] = hi;
    v
}

/// `n` linearly spaced values over [lo, hi].
pub fn linear_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(hi > lo && n >= 2);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

impl SweepGrid {
    /// 81x81 log-spaced map, both ratios in [0.05, 8], g = 1, eps = 2 g^2.
    pub fn default_map() -> Self {
        Self {
            x0_over_g: log_axis(0.05, 8.0, 81),
            omega_c_over_x0: log_axis(0.05, 8.0, 81),
            g: 1.0,
            epsilon: 2.0,
            spectator: SpectatorSpec::qubit(),
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.g <= 0.0 || self.epsilon <= 0.0 {
            return Err(SweepError::Invalid("g and epsilon must be positive".into()));
        }
        for axis in [&self.x0_over_g, &self.omega_c_over_x0] {
            if axis.len() < 2 {
                return Err(SweepError::Invalid("axes need at least 2 points".into()));
            }
            if !axis.windows(2).all(|w| w[0] < w[1]) {
                return Err(SweepError::Invalid("axes must be strictly increasing".into()));
            }
            if axis[0] < 0.0 || !axis.iter().all(|v| v.is_finite()) {
                return Err(SweepError::Invalid("axis values must be finite and >= 0".into()));
            }
        }
        self.spectator.validate().map_err(SweepError::Model)?;
        // every grid point must build valid model parameters
        let p = self.params_at(self.x0_over_g.len() - 1, self.omega_c_over_x0.len() - 1)?;
        p.validate()?;
        Ok(())
    }

    /// Model parameters at grid indices (row = x0 axis, column = ratio axis).
    pub fn params_at(&self, ix: usize, iw: usize) -> Result<ModelParams, SweepError> {
        let x0 = self.x0_over_g[ix] * self.g;
        let omega_c = self.omega_c_over_x0[iw] * x0;
        Ok(ModelParams::new(self.g, self.epsilon, x0, omega_c).with_spectator(self.spectator))
    }
}

/// Propagation settings shared by every grid point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Adaptive-step tolerance.
    pub tol: f64,
    /// Half protocol window in units of g/eps; evolution covers
    /// [-window, window + tf_half_window].
    pub window_factor: f64,
    /// Half-width of the final-time search window in units of g/eps.
    pub tf_half_window_factor: f64,
    /// Output samples along each trajectory.
    pub sample_count: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { tol: 1e-10, window_factor: 10.0, tf_half_window_factor: 4.0, sample_count: 2401 }
    }
}

/// Result of the nearest-local-minimum final-time search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimizedTf {
    pub t_f: f64,
    pub p_min: f64,
    /// Set when no interior local minimum exists in the window; the values
    /// then refer to the target time itself.
    pub monotone_window: bool,
}

/// Discrete local minimum of P(t) nearest to `target` within
/// `target +/- half_window`, refined by parabolic interpolation through the
/// three neighboring samples.
pub fn optimize_tf(traj: &Trajectory, target: f64, half_window: f64) -> OptimizedTf {
    let ts = &traj.times;
    let ps = &traj.p_of_t;
    let (lo, hi) = (target - half_window, target + half_window);
    let mut best: Option<(f64, f64)> = None;
    for k in 1..ts.len() - 1 {
        if ts[k] < lo || ts[k] > hi {
            continue;
        }
        if ps[k] <= ps[k - 1] && ps[k] <= ps[k + 1] {
            let (t_ref, p_ref) = parabolic_refine(
                ts[k - 1], ps[k - 1], ts[k], ps[k], ts[k + 1], ps[k + 1],
            );
            let closer = match best {
                Some((t_prev, _)) => (t_ref - target).abs() < (t_prev - target).abs(),
                None => true,
            };
            if closer {
                best = Some((t_ref, p_ref));
            }
        }
    }
    match best {
        Some((t_f, p_min)) => OptimizedTf { t_f, p_min, monotone_window: false },
        None => OptimizedTf { t_f: target, p_min: traj.p_at(target), monotone_window: true },
    }
}

/// Vertex of the parabola through three points; falls back to the middle
/// sample when the points are collinear.
fn parabolic_refine(x0: f64, y0: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> (f64, f64) {
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv <= 0.0 || !curv.is_finite() {
        return (x1, y1);
    }
    let xv = 0.5 * (x0 + x1 - d01 / curv);
    let xv = xv.clamp(x0, x2);
    // evaluate the interpolating parabola at the vertex
    let yv = y0 + d01 * (xv - x0) + curv * (xv - x0) * (xv - x1);
    (xv, yv.max(0.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ix: usize,
    pub iw: usize,
    pub x0: f64,
    pub omega_c: f64,
    pub delta: f64,
    pub regime: Regime,
    pub tf_opt: f64,
    pub infidelity: f64,
    pub purity_bar: f64,
    pub monotone_window: bool,
    pub failed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: SweepGrid,
    pub config: SweepConfig,
    /// Row-major over (x0 index, ratio index); every grid point present
    /// exactly once.
    pub points: Vec<SweepPoint>,
    pub failed_count: usize,
}

/// Single-point pipeline: adiabatic initial state at -window, unitary
/// evolution across the crossing, final-time optimization near +window.
pub fn evaluate_point(
    p: &ModelParams,
    cfg: &SweepConfig,
) -> Result<(OptimizedTf, f64), SweepError> {
    let scale = p.g / p.epsilon;
    let t_i = -cfg.window_factor * scale;
    let t_end = (cfg.window_factor + cfg.tf_half_window_factor) * scale;
    let grid = TimeGrid::new(t_i, t_end, cfg.sample_count)?;
    let psi0 = initial_state(p, t_i)?;
    let traj = evolve_unitary(p, &grid, &psi0, cfg.tol, false)?;
    let opt = optimize_tf(&traj, cfg.window_factor * scale, cfg.tf_half_window_factor * scale);
    let purity_bar = traj.purity_at(opt.t_f);
    Ok((opt, purity_bar))
}

/// Full grid scan. Points run in parallel; output ordering and content are
/// independent of the worker count. Per-point failures are recorded in
/// place and do not abort the scan.
pub fn run_sweep(grid: &SweepGrid, cfg: &SweepConfig) -> Result<SweepResult, SweepError> {
    run_sweep_resumed(grid, cfg, &std::collections::HashMap::new())
}

/// Grid scan that reuses previously computed points. Because every point is
/// a pure function of the grid and config, splicing cached rows in is
/// exactly equivalent to recomputing them.
pub fn run_sweep_resumed(
    grid: &SweepGrid,
    cfg: &SweepConfig,
    cache: &std::collections::HashMap<(usize, usize), SweepPoint>,
) -> Result<SweepResult, SweepError> {
    grid.validate()?;
    let dc2_cfg = DeltaC2Config::default();
    let template = ModelParams::new(grid.g, grid.epsilon, grid.g, grid.g);
    // delta_c2 depends only on the ray direction, which is constant along
    // each ratio column; resolve each column's threshold once
    let thresholds: Vec<DeltaC2> = grid
        .omega_c_over_x0
        .par_iter()
        .map(|&r| {
            let ray = RayDirection { omega_c_over_x0: Some(r) };
            delta_c2(&ray, &template, &dc2_cfg)
        })
        .collect::<Result<_, _>>()?;
    let indices: Vec<(usize, usize)> = (0..grid.x0_over_g.len())
        .flat_map(|ix| (0..grid.omega_c_over_x0.len()).map(move |iw| (ix, iw)))
        .collect();
    let points: Vec<SweepPoint> = indices
        .par_iter()
        .map(|&(ix, iw)| {
            if let Some(cached) = cache.get(&(ix, iw)) {
                if !cached.failed {
                    return cached.clone();
                }
            }
            let p = match grid.params_at(ix, iw) {
                Ok(p) => p,
                Err(e) => return failed_point(grid, ix, iw, e.to_string()),
            };
            let class = classify_with_threshold(&p, thresholds[iw]);
            match evaluate_point(&p, &SweepConfig { ..*cfg }) {
                Ok((opt, purity_bar)) => SweepPoint {
                    ix,
                    iw,
                    x0: p.x0,
                    omega_c: p.omega_c,
                    delta: class.delta,
                    regime: class.regime,
                    tf_opt: opt.t_f,
                    infidelity: opt.p_min,
                    purity_bar,
                    monotone_window: opt.monotone_window,
                    failed: false,
                    error: None,
                },
                Err(e) => failed_point(grid, ix, iw, e.to_string()),
            }
        })
        .collect();
    let failed_count = points.iter().filter(|pt| pt.failed).count();
    Ok(SweepResult { grid: grid.clone(), config: *cfg, points, failed_count })
}

fn failed_point(grid: &SweepGrid, ix: usize, iw: usize, error: String) -> SweepPoint {
    let x0 = grid.x0_over_g[ix] * grid.g;
    let omega_c = grid.omega_c_over_x0[iw] * x0;
    let p = ModelParams::new(grid.g, grid.epsilon, x0, omega_c);
    SweepPoint {
        ix,
        iw,
        x0,
        omega_c,
        delta: delta(&p),
        regime: Regime::I,
        tf_opt: f64::NAN,
        infidelity: f64::NAN,
        purity_bar: f64::NAN,
        monotone_window: false,
        failed: true,
        error: Some(error),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessStats {
    pub n_samples: usize,
    pub failed: usize,
    pub rel_sigma: f64,
    pub noise: NoiseKind,
    pub seed: u64,
    pub nominal_infidelity: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
}

/// Rerun the transfer pipeline `n_samples` times with (x0, omega_c, g)
/// independently perturbed by relative noise of scale `rel_sigma`
/// (epsilon and the protocol times stay fixed). Seeded and reproducible.
pub fn robustness_study(
    p: &ModelParams,
    cfg: &SweepConfig,
    rel_sigma: f64,
    n_samples: usize,
    seed: u64,
    noise: NoiseKind,
) -> Result<RobustnessStats, SweepError> {
    if !(0.0..=0.5).contains(&rel_sigma) {
        return Err(SweepError::Invalid(format!("rel_sigma {rel_sigma} outside [0, 0.5]")));
    }
    if n_samples < 10 {
        return Err(SweepError::Invalid("n_samples must be >= 10".into()));
    }
    p.validate()?;
    let (nominal, _) = evaluate_point(p, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // draw all factors up front in a fixed order so the sample set is a
    // pure function of the seed
    let draws: Vec<[f64; 3]> = (0..n_samples)
        .map(|_| {
            let mut f = [0.0; 3];
            for slot in &mut f {
                let u: f64 = match noise {
                    NoiseKind::Uniform => rng.gen_range(-1.0..=1.0) * rel_sigma,
                    NoiseKind::Gaussian => {
                        // Box-Muller from two uniforms
                        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos()
                            * rel_sigma
                    }
                };
                *slot = 1.0 + u;
            }
            f
        })
        .collect();
    let outcomes: Vec<Result<f64, SweepError>> = draws
        .par_iter()
        .map(|f| {
            let mut q = *p;
            q.x0 *= f[0];
            q.omega_c *= f[1];
            q.g *= f[2];
            if q.g <= 0.0 || q.x0 < 0.0 || q.omega_c < 0.0 {
                return Err(SweepError::Invalid("perturbed parameters left the domain".into()));
            }
            // protocol times are an experimental setting: keep the nominal
            // window while the Hamiltonian parameters fluctuate
            let scale = p.g / p.epsilon;
            let t_i = -cfg.window_factor * scale;
            let t_end = (cfg.window_factor + cfg.tf_half_window_factor) * scale;
            let grid = TimeGrid::new(t_i, t_end, cfg.sample_count)?;
            let psi0 = initial_state(&q, t_i)?;
            let traj = evolve_unitary(&q, &grid, &psi0, cfg.tol, false)?;
            let opt =
                optimize_tf(&traj, cfg.window_factor * scale, cfg.tf_half_window_factor * scale);
            Ok(opt.p_min)
        })
        .collect();
    let mut infids: Vec<f64> = Vec::with_capacity(n_samples);
    let mut failed = 0usize;
    for o in outcomes {
        match o {
            Ok(v) => infids.push(v),
            Err(_) => failed += 1,
        }
    }
    if infids.is_empty() {
        return Err(SweepError::Invalid("all robustness samples failed".into()));
    }
    infids.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = infids.iter().sum::<f64>() / infids.len() as f64;
    Ok(RobustnessStats {
        n_samples,
        failed,
        rel_sigma,
        noise,
        seed,
        nominal_infidelity: nominal.p_min,
        mean,
        min: infids[0],
        max: *infids.last().unwrap(),
        q10: quantile(&infids, 0.10),
        median: quantile(&infids, 0.50),
        q90: quantile(&infids, 0.90),
    })
}

/// Linear-interpolated quantile of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    if k + 1 < sorted.len() {
        sorted[k] * (1.0 - frac) + sorted[k + 1] * frac
    } else {
        sorted[k]
    }
}
