//! Adiabatic-basis analysis of the composite Hamiltonian: branch-tracked
//! instantaneous spectra, the spectator splitting Delta and its two
//! thresholds, regime classification, gap minima, and the adiabatic-theorem
//! ratio.

use crate::model::{dh_dt, h_total, ModelParams};
use crate::qcore::{eigh, ComplexMatrix, QcoreError, Tolerances};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Qcore(#[from] QcoreError),
    #[error("gap refinement did not converge in [{lo}, {hi}]")]
    NoConvergence { lo: f64, hi: f64 },
    #[error("all level pairs degenerate at t = {0}")]
    AllDegenerate(f64),
}

/// Instantaneous eigenvalues and gauge-fixed eigenvectors at one time.
#[derive(Debug, Clone)]
pub struct SpectrumSlice {
    pub t: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns, index-matched to `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
    /// True when gauge fixing was skipped inside a (near-)degenerate block.
    pub degenerate_flag: bool,
}

/// Spectator splitting energy Delta = sqrt(4 x0^2 + omega_c^2).
pub fn delta(p: &ModelParams) -> f64 {
    (4.0 * p.x0 * p.x0 + p.omega_c * p.omega_c).sqrt()
}

fn fix_gauge_absolute(vectors: &mut ComplexMatrix) {
    // No reference slice: make the largest-magnitude component of each
    // column real and positive.
    let n = vectors.rows();
    for k in 0..n {
        let mut best = 0usize;
        let mut best_mag = 0.0f64;
        for i in 0..n {
            let m = vectors[(i, k)].norm();
            if m > best_mag {
                best_mag = m;
                best = i;
            }
        }
        let z = vectors[(best, k)];
        if z.norm() > 0.0 {
            let phase = z.conj() / z.norm();
            for i in 0..n {
                vectors[(i, k)] *= phase;
            }
        }
    }
}

/// Eigendecomposition of the composite Hamiltonian at `t`, with the
/// eigenvector gauge chained to `prev` so that branch overlaps have
/// non-negative real part. Gauge fixing is skipped (and flagged) inside
/// blocks whose eigenvalue spacing is below the degeneracy tolerance.
pub fn spectrum_slice(
    t: f64,
    p: &ModelParams,
    prev: Option<&SpectrumSlice>,
) -> Result<SpectrumSlice, SpectrumError> {
    let eig = eigh(&h_total(t, p))?;
    let mut vectors = eig.eigenvectors;
    let n = vectors.rows();
    let tol = Tolerances::default();
    let mut degenerate_flag = false;
    match prev {
        Some(prev) => {
            for k in 0..n {
                let near_degenerate = (k > 0
                    && eig.eigenvalues[k] - eig.eigenvalues[k - 1] < tol.degeneracy)
                    || (k + 1 < n && eig.eigenvalues[k + 1] - eig.eigenvalues[k] < tol.degeneracy);
                if near_degenerate {
                    degenerate_flag = true;
                    continue;
                }
                // overlap <v_k(prev)|v_k(t)>
                let mut overlap = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    overlap += prev.eigenvectors[(i, k)].conj() * vectors[(i, k)];
                }
                if overlap.norm() > 0.0 {
                    let phase = overlap.conj() / overlap.norm();
                    for i in 0..n {
                        vectors[(i, k)] *= phase;
                    }
                }
            }
        }
        None => fix_gauge_absolute(&mut vectors),
    }
    Ok(SpectrumSlice { t, eigenvalues: eig.eigenvalues, eigenvectors: vectors, degenerate_flag })
}

/// Branch-tracked spectrum over a uniform time scan.
pub fn spectrum_scan(
    p: &ModelParams,
    t_start: f64,
    t_end: f64,
    n_samples: usize,
) -> Result<Vec<SpectrumSlice>, SpectrumError> {
    assert!(n_samples >= 2 && t_end > t_start);
    let mut slices = Vec::with_capacity(n_samples);
    let dt = (t_end - t_start) / (n_samples - 1) as f64;
    for k in 0..n_samples {
        let t = t_start + k as f64 * dt;
        let slice = spectrum_slice(t, p, slices.last())?;
        slices.push(slice);
    }
    Ok(slices)
}

/// Minimum of one adjacent-branch gap.
#[derive(Debug, Clone, Copy)]
pub struct GapMinimum {
    /// Lower branch index of the pair.
    pub pair: usize,
    pub gap: f64,
    pub t_at: f64,
}

/// Minimum of the central-pair gap (the anticrossing between the middle
/// branches), refined by golden-section search from a coarse scan;
/// per-pair minima are reported for all adjacent pairs.
#[derive(Debug, Clone)]
pub struct MinimalGap {
    /// Central-pair minimum.
    pub gap: f64,
    pub t_at: f64,
    pub per_pair: Vec<GapMinimum>,
}

fn gap_at(t: f64, p: &ModelParams, pair: usize) -> Result<f64, SpectrumError> {
    let eig = eigh(&h_total(t, p))?;
    Ok(eig.eigenvalues[pair + 1] - eig.eigenvalues[pair])
}

fn golden_section_min(
    mut lo: f64,
    mut hi: f64,
    f: &mut dyn FnMut(f64) -> Result<f64, SpectrumError>,
) -> Result<(f64, f64), SpectrumError> {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let tol = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut iterations = 0;
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2)?;
        }
        iterations += 1;
        if iterations > 200 {
            return Err(SpectrumError::NoConvergence { lo, hi });
        }
    }
    let xm = 0.5 * (lo + hi);
    Ok((xm, f(xm)?))
}

/// Minimum over `t_range` of the gap between the two central branches,
/// from a coarse scan of `n_samples` points plus golden-section refinement
/// around each coarse minimum. All other adjacent pairs are refined and
/// reported the same way.
pub fn minimal_gap(
    p: &ModelParams,
    t_range: (f64, f64),
    n_samples: usize,
) -> Result<MinimalGap, SpectrumError> {
    assert!(n_samples >= 3, "need at least 3 scan samples");
    let (t_start, t_end) = t_range;
    let dt = (t_end - t_start) / (n_samples - 1) as f64;
    let n_levels = p.composite_dim();
    let mut gaps: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); n_levels - 1];
    for k in 0..n_samples {
        let t = t_start + k as f64 * dt;
        let eig = eigh(&h_total(t, p))?;
        for pair in 0..n_levels - 1 {
            gaps[pair].push(eig.eigenvalues[pair + 1] - eig.eigenvalues[pair]);
        }
    }
    let mut per_pair = Vec::with_capacity(n_levels - 1);
    for (pair, series) in gaps.iter().enumerate() {
        let (k_min, _) = series
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let lo = t_start + dt * (k_min.saturating_sub(1)) as f64;
        let hi = t_start + dt * ((k_min + 1).min(n_samples - 1)) as f64;
        let (t_at, gap) = if hi > lo {
            golden_section_min(lo, hi, &mut |t| gap_at(t, p, pair))?
        } else {
            (t_start + dt * k_min as f64, series[k_min])
        };
        per_pair.push(GapMinimum { pair, gap, t_at });
    }
    let central = per_pair[n_levels / 2 - 1];
    Ok(MinimalGap { gap: central.gap, t_at: central.t_at, per_pair })
}

/// Direction of a ray in the (x0, omega_c) plane, given as omega_c / x0.
/// `None` encodes the pure-omega_c ray (x0 = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayDirection {
    pub omega_c_over_x0: Option<f64>,
}

impl RayDirection {
    pub fn of(p: &ModelParams) -> Self {
        if p.x0 > 0.0 {
            Self { omega_c_over_x0: Some(p.omega_c / p.x0) }
        } else {
            Self { omega_c_over_x0: None }
        }
    }

    /// Parameters at splitting `delta` along this ray.
    pub fn params_at(&self, delta: f64, template: &ModelParams) -> ModelParams {
        let mut p = *template;
        match self.omega_c_over_x0 {
            Some(r) => {
                p.x0 = delta / (4.0 + r * r).sqrt();
                p.omega_c = r * p.x0;
            }
            None => {
                p.x0 = 0.0;
                p.omega_c = delta;
            }
        }
        p
    }
}

/// Outcome of the off-center gap-closing threshold search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaC2 {
    Threshold(f64),
    /// No off-center closing found up to the search cap.
    AboveWindow,
}

#[derive(Debug, Clone, Copy)]
pub struct DeltaC2Config {
    /// Near-closing gap threshold as a fraction of g.
    pub gap_fraction: f64,
    /// Exclusion half-width around t = 0, in units of g/epsilon.
    pub t_width_factor: f64,
    /// Protocol window |t| <= window_factor * g/epsilon.
    pub t_window_factor: f64,
    /// Anticrossing search cap in units of g/epsilon.
    pub t_cap_factor: f64,
    /// Delta search cap in units of g.
    pub delta_cap_factor: f64,
    /// Ultra-strong splitting threshold in units of sqrt(epsilon).
    pub split_factor: f64,
    /// Samples in the off-center t scan.
    pub t_samples: usize,
}

impl Default for DeltaC2Config {
    fn default() -> Self {
        Self {
            gap_fraction: 0.1,
            t_width_factor: 0.5,
            t_window_factor: 10.0,
            t_cap_factor: 40.0,
            delta_cap_factor: 40.0,
            split_factor: 2.0,
            t_samples: 400,
        }
    }
}

/// The off-center diabatic mechanism is tied to the secondary anticrossing
/// of the two central branches at |t| = t_eps ~ Delta/eps. The coupling is
/// considered to close the transfer channel when that anticrossing exists
/// and one of the following holds:
/// - its gap G is nearly closed, G < gap_fraction * g;
/// - the splitting is ultra-strong, G >= split_factor * sqrt(eps), so the
///   passage is no longer diabatic there and the adiabatic structure of
///   the central anticrossing is deformed;
/// - its traversal does not complete inside the protocol window,
///   eps*t_star/g + G/g > t_window_factor.
fn off_center_gap_closes(
    ray: &RayDirection,
    delta: f64,
    template: &ModelParams,
    cfg: &DeltaC2Config,
) -> Result<bool, SpectrumError> {
    let p = ray.params_at(delta, template);
    if p.x0 == 0.0 {
        // decoupled spectator: branch intersections are exact crossings of
        // independent sectors and promote no transitions
        return Ok(false);
    }
    let t_lo = cfg.t_width_factor * p.g / p.epsilon;
    let t_hi = cfg.t_cap_factor * p.g / p.epsilon;
    // Spectrum is symmetric in t; scanning the positive side suffices.
    let n = cfg.t_samples;
    let dt = (t_hi - t_lo) / (n - 1) as f64;
    let n_levels = p.composite_dim();
    let central = n_levels / 2 - 1;
    let mut gaps = Vec::with_capacity(n);
    for k in 0..n {
        let t = t_lo + k as f64 * dt;
        let eig = eigh(&h_total(t, &p))?;
        gaps.push(eig.eigenvalues[central + 1] - eig.eigenvalues[central]);
    }
    // first interior local minimum = the secondary anticrossing
    let k_min = match (1..n - 1).find(|&k| gaps[k] <= gaps[k - 1] && gaps[k] <= gaps[k + 1]) {
        Some(k) => k,
        None => return Ok(false),
    };
    let (t_star, g_min) = golden_section_min(
        t_lo + dt * (k_min - 1) as f64,
        t_lo + dt * (k_min + 1) as f64,
        &mut |t| gap_at(t, &p, central),
    )?;
    let near_closing = g_min < cfg.gap_fraction * p.g;
    let ultra_strong = g_min >= cfg.split_factor * p.epsilon.sqrt();
    let incomplete =
        p.epsilon * t_star / p.g + g_min / p.g > cfg.t_window_factor;
    Ok(near_closing || ultra_strong || incomplete)
}

/// Smallest Delta along `ray` at which the off-center anticrossing closes
/// the transfer channel (see [`off_center_gap_closes`]), located by
/// bisection to relative precision 1e-3. Returns
/// [`DeltaC2::AboveWindow`] when no closing exists below the search cap.
pub fn delta_c2(
    ray: &RayDirection,
    template: &ModelParams,
    cfg: &DeltaC2Config,
) -> Result<DeltaC2, SpectrumError> {
    let g = template.g;
    let cap = cfg.delta_cap_factor * g;
    // Coarse multiplicative scan for the first closing.
    let mut lo = g;
    let mut hi = None;
    let mut d = g * 1.2;
    while d <= cap {
        if off_center_gap_closes(ray, d, template, cfg)? {
            hi = Some(d);
            break;
        }
        lo = d;
        d *= 1.25;
    }
    let mut hi = match hi {
        Some(h) => h,
        None => {
            if off_center_gap_closes(ray, cap, template, cfg)? {
                lo = d / 1.25;
                cap
            } else {
                return Ok(DeltaC2::AboveWindow);
            }
        }
    };
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if off_center_gap_closes(ray, mid, template, cfg)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(DeltaC2::Threshold(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    I,
    II,
    III,
}

/// Delta and threshold values for one parameter point, with its regime
/// label. Boundaries are half-open: [0, Dc1) -> I, [Dc1, Dc2) -> II,
/// [Dc2, inf) -> III.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub delta: f64,
    pub delta_c1: f64,
    pub delta_c2: DeltaC2,
    pub regime: Regime,
}

/// Classify a parameter point against the two thresholds; Delta_c1 is
/// exactly g, Delta_c2 is searched along the point's own (x0, omega_c) ray.
pub fn classify_regime(
    p: &ModelParams,
    cfg: &DeltaC2Config,
) -> Result<RegimeClassification, SpectrumError> {
    let d = delta(p);
    let dc1 = p.g;
    if d < dc1 {
        return Ok(RegimeClassification {
            delta: d,
            delta_c1: dc1,
            delta_c2: DeltaC2::AboveWindow,
            regime: Regime::I,
        });
    }
    let ray = RayDirection::of(p);
    let dc2 = delta_c2(&ray, p, cfg)?;
    let regime = match dc2 {
        DeltaC2::Threshold(v) if d >= v => Regime::III,
        _ => Regime::II,
    };
    Ok(RegimeClassification { delta: d, delta_c1: dc1, delta_c2: dc2, regime })
}

/// Same classification with a memoized Delta_c2 value (used by the sweep,
/// where all points of one grid column share the same ray).
pub fn classify_with_threshold(p: &ModelParams, dc2: DeltaC2) -> RegimeClassification {
    let d = delta(p);
    let dc1 = p.g;
    let regime = if d < dc1 {
        Regime::I
    } else {
        match dc2 {
            DeltaC2::Threshold(v) if d >= v => Regime::III,
            _ => Regime::II,
        }
    };
    RegimeClassification { delta: d, delta_c1: dc1, delta_c2: dc2, regime }
}

/// Adiabatic-theorem ratio max_{i != j} |<i| dH/dt |j>| / (E_i - E_j)^2
/// at time `t`. Pairs closer than the degeneracy tolerance are excluded;
/// `degenerate_pairs` counts them.
#[derive(Debug, Clone, Copy)]
pub struct AdiabaticityRatio {
    pub ratio: f64,
    pub degenerate_pairs: usize,
}

pub fn adiabaticity_ratio(
    t: f64,
    p: &ModelParams,
) -> Result<AdiabaticityRatio, SpectrumError> {
    let eig = eigh(&h_total(t, p))?;
    let d = dh_dt(p);
    let n = eig.eigenvalues.len();
    let tol = Tolerances::default().degeneracy;
    let mut max_ratio = 0.0f64;
    let mut degenerate_pairs = 0usize;
    let mut any = false;
    for i in 0..n {
        let vi = eig.eigenvectors.column(i);
        let dvi = d.matvec(&vi);
        for j in 0..n {
            if i == j {
                continue;
            }
            let de = eig.eigenvalues[i] - eig.eigenvalues[j];
            if de.abs() < tol {
                degenerate_pairs += 1;
                continue;
            }
            any = true;
            let vj = eig.eigenvectors.column(j);
            let elem: Complex64 =
                vj.iter().zip(&dvi).map(|(b, a)| b.conj() * a).sum();
            let ratio = elem.norm() / (de * de);
            max_ratio = max_ratio.max(ratio);
        }
    }
    if !any {
        return Err(SpectrumError::AllDegenerate(t));
    }
    Ok(AdiabaticityRatio { ratio: max_ratio, degenerate_pairs: degenerate_pairs / 2 })
}
