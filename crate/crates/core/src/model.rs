//! Time-dependent Hamiltonians of the swept qubit, the spectator
//! (second qubit or truncated oscillator), and their linear coupling.
//!
//! Conventions, frozen for golden-file stability:
//! - qubit factor first, spectator second in all Kronecker products;
//! - qubit basis {|0> = sigma_z:+1, |1> = sigma_z:-1};
//! - spectator qubit basis {|up>, |down>} with tau_z|up> = +|up>;
//! - oscillator Fock basis in ascending occupation;
//! - hbar = 1, energies in units of g by default, times in 1/g.

use crate::qcore::{kron, ComplexMatrix, QcoreError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn sigma_x() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]).unwrap()
}

pub fn sigma_y() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]).unwrap()
}

pub fn sigma_z() -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&[1.0, -1.0])
}

/// Lowering operator |down><up| in the {up, down} basis.
pub fn tau_minus() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)]).unwrap()
}

/// Annihilation operator on a Fock space truncated at `dim` levels.
pub fn annihilation(dim: usize) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectatorKind {
    Qubit,
    Oscillator,
}

/// Initial spectator state selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectatorInitial {
    /// |down> for the qubit spectator, vacuum for the oscillator.
    Ground,
    /// |up> for the qubit spectator, first Fock state for the oscillator.
    Excited,
    /// tau_x = +1 eigenstate (qubit spectator only).
    TauXPlus,
    /// tau_x = -1 eigenstate (qubit spectator only).
    TauXMinus,
    /// Fock state |n> (oscillator only).
    Fock(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectatorSpec {
    pub kind: SpectatorKind,
    /// Hilbert-space dimension of the spectator; forced to 2 for a qubit.
    pub truncation: usize,
    pub initial_state: SpectatorInitial,
}

impl SpectatorSpec {
    pub fn qubit() -> Self {
        Self { kind: SpectatorKind::Qubit, truncation: 2, initial_state: SpectatorInitial::Ground }
    }

    pub fn oscillator(truncation: usize) -> Self {
        Self {
            kind: SpectatorKind::Oscillator,
            truncation,
            initial_state: SpectatorInitial::Ground,
        }
    }

    pub fn with_initial(mut self, initial: SpectatorInitial) -> Self {
        self.initial_state = initial;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.truncation < 2 {
            return Err(ModelError::Invalid("spectator truncation must be >= 2".into()));
        }
        if self.kind == SpectatorKind::Qubit && self.truncation != 2 {
            return Err(ModelError::Invalid("qubit spectator requires truncation = 2".into()));
        }
        match self.initial_state {
            SpectatorInitial::Fock(n) => {
                if self.kind != SpectatorKind::Oscillator {
                    return Err(ModelError::Invalid("Fock initial state requires oscillator".into()));
                }
                if n >= self.truncation {
                    return Err(ModelError::Invalid(format!(
                        "Fock({n}) beyond truncation {}",
                        self.truncation
                    )));
                }
            }
            SpectatorInitial::TauXPlus | SpectatorInitial::TauXMinus => {
                if self.kind != SpectatorKind::Qubit {
                    return Err(ModelError::Invalid(
                        "tau_x eigenstates require a qubit spectator".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Which Pauli matrix the coupling acts through on the swept qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CouplingAxis {
    #[default]
    X,
    Y,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Qcore(#[from] QcoreError),
}

/// Physical parameters: minimum gap g, sweep rate epsilon (dimension
/// energy^2), coupling x0, spectator frequency omega_c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub g: f64,
    pub epsilon: f64,
    pub x0: f64,
    pub omega_c: f64,
    pub spectator: SpectatorSpec,
    #[serde(default)]
    pub coupling_axis: CouplingAxis,
}

impl ModelParams {
    /// Reference defaults: g = 1, epsilon = 2 g^2, qubit spectator.
    pub fn new(g: f64, epsilon: f64, x0: f64, omega_c: f64) -> Self {
        Self {
            g,
            epsilon,
            x0,
            omega_c,
            spectator: SpectatorSpec::qubit(),
            coupling_axis: CouplingAxis::X,
        }
    }

    pub fn with_spectator(mut self, spectator: SpectatorSpec) -> Self {
        self.spectator = spectator;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.g > 0.0) || !self.g.is_finite() {
            return Err(ModelError::Invalid(format!("g must be > 0, got {}", self.g)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(ModelError::Invalid(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.x0 >= 0.0) || !self.x0.is_finite() {
            return Err(ModelError::Invalid(format!("x0 must be >= 0, got {}", self.x0)));
        }
        if !(self.omega_c >= 0.0) || !self.omega_c.is_finite() {
            return Err(ModelError::Invalid(format!(
                "omega_c must be >= 0, got {}",
                self.omega_c
            )));
        }
        self.spectator.validate()
    }

    pub fn spectator_dim(&self) -> usize {
        self.spectator.truncation
    }

    pub fn composite_dim(&self) -> usize {
        2 * self.spectator.truncation
    }
}

/// Swept-qubit Hamiltonian (epsilon t sigma_z + g sigma_x) / 2.
pub fn h_system(t: f64, p: &ModelParams) -> ComplexMatrix {
    let z = sigma_z().scale(c(0.5 * p.epsilon * t, 0.0));
    let x = sigma_x().scale(c(0.5 * p.g, 0.0));
    z.add(&x)
}

/// Free spectator Hamiltonian: omega_c tau_z / 2 for the qubit spectator,
/// omega_c a^dagger a for the oscillator (zero-point energy dropped).
pub fn h_spectator(p: &ModelParams) -> ComplexMatrix {
    match p.spectator.kind {
        SpectatorKind::Qubit => sigma_z().scale(c(0.5 * p.omega_c, 0.0)),
        SpectatorKind::Oscillator => {
            let diag: Vec<f64> =
                (0..p.spectator.truncation).map(|n| p.omega_c * n as f64).collect();
            ComplexMatrix::from_diagonal(&diag)
        }
    }
}

/// Coupling Hamiltonian x0 sigma_axis (x) tau_x, or
/// x0 sigma_axis (x) (a + a^dagger) for the oscillator.
pub fn h_interaction(p: &ModelParams) -> ComplexMatrix {
    let qubit_op = match p.coupling_axis {
        CouplingAxis::X => sigma_x(),
        CouplingAxis::Y => sigma_y(),
    };
    let spectator_op = match p.spectator.kind {
        SpectatorKind::Qubit => sigma_x(),
        SpectatorKind::Oscillator => {
            let a = annihilation(p.spectator.truncation);
            a.add(&a.dagger())
        }
    };
    kron(&qubit_op, &spectator_op)
        .expect("composite dimension within cap")
        .scale(c(p.x0, 0.0))
}

/// Full composite Hamiltonian H_s(t) (x) I + H_int + I (x) H_f.
pub fn h_total(t: f64, p: &ModelParams) -> ComplexMatrix {
    let nf = p.spectator.truncation;
    let sys = kron(&h_system(t, p), &ComplexMatrix::identity(nf)).expect("dim within cap");
    let free = kron(&ComplexMatrix::identity(2), &h_spectator(p)).expect("dim within cap");
    sys.add(&h_interaction(p)).add(&free)
}

/// Exact time derivative of the composite Hamiltonian: (epsilon/2) sigma_z (x) I,
/// constant in t.
pub fn dh_dt(p: &ModelParams) -> ComplexMatrix {
    let nf = p.spectator.truncation;
    kron(&sigma_z(), &ComplexMatrix::identity(nf))
        .expect("dim within cap")
        .scale(c(0.5 * p.epsilon, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::eigh;

    #[test]
    fn h_system_at_zero_is_half_sigma_x() {
        let p = ModelParams::new(1.0, 2.0, 0.0, 0.0);
        let h = h_system(0.0, &p);
        let eig = eigh(&h).unwrap();
        assert!((eig.eigenvalues[0] + 0.5).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn h_system_eigenvalues_closed_form() {
        let p = ModelParams::new(1.0, 2.0, 0.0, 0.0);
        for &t in &[-3.0, -0.7, 0.0, 1.3, 5.0] {
            let eig = eigh(&h_system(t, &p)).unwrap();
            let e = 0.5 * (p.epsilon * p.epsilon * t * t + p.g * p.g).sqrt();
            assert!((eig.eigenvalues[0] + e).abs() < 1e-12);
            assert!((eig.eigenvalues[1] - e).abs() < 1e-12);
        }
        // t = 10 g/eps with eps = 2: eigenvalues +- sqrt(101)/2
        let t = 10.0 * p.g / p.epsilon;
        let eig = eigh(&h_system(t, &p)).unwrap();
        assert!((eig.eigenvalues[1] - 0.5 * 101f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn h_spectator_qubit_diagonal() {
        let p = ModelParams::new(1.0, 2.0, 0.0, 0.5);
        let h = h_spectator(&p);
        assert!((h[(0, 0)].re - 0.25).abs() < 1e-15);
        assert!((h[(1, 1)].re + 0.25).abs() < 1e-15);

        let p0 = ModelParams::new(1.0, 2.0, 0.0, 0.0);
        assert!(h_spectator(&p0).norm_max() == 0.0);
    }

    #[test]
    fn h_spectator_oscillator_number_operator() {
        let p = ModelParams::new(1.0, 2.0, 0.0, 1.0)
            .with_spectator(SpectatorSpec::oscillator(4));
        let h = h_spectator(&p);
        for n in 0..4 {
            assert!((h[(n, n)].re - n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn h_interaction_zero_coupling() {
        let p = ModelParams::new(1.0, 2.0, 0.0, 0.5);
        assert!(h_interaction(&p).norm_max() == 0.0);
    }

    #[test]
    fn h_interaction_qubit_eigenvalues() {
        let p = ModelParams::new(1.0, 2.0, 0.7, 0.5);
        let eig = eigh(&h_interaction(&p)).unwrap();
        // sigma_x (x) tau_x has eigenvalues +-1, each twice
        assert!((eig.eigenvalues[0] + 0.7).abs() < 1e-12);
        assert!((eig.eigenvalues[1] + 0.7).abs() < 1e-12);
        assert!((eig.eigenvalues[2] - 0.7).abs() < 1e-12);
        assert!((eig.eigenvalues[3] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn oscillator_truncation_two_matches_qubit_coupling() {
        let pq = ModelParams::new(1.0, 2.0, 0.9, 0.0);
        let po = ModelParams::new(1.0, 2.0, 0.9, 0.0)
            .with_spectator(SpectatorSpec::oscillator(2));
        // (a + a^dagger) truncated to 2 levels is sigma_x in the Fock basis
        assert!(h_interaction(&pq).sub(&h_interaction(&po)).norm_max() < 1e-15);
    }

    #[test]
    fn h_total_decoupled_limit() {
        let p = ModelParams::new(1.0, 2.0, 0.0, 0.0);
        let expect = kron(&h_system(1.3, &p), &ComplexMatrix::identity(2)).unwrap();
        assert!(h_total(1.3, &p).sub(&expect).norm_max() < 1e-15);
    }

    #[test]
    fn h_total_t0_closed_form_spectrum() {
        let p = ModelParams::new(1.0, 2.0, 2.0, 0.5);
        let delta = (4.0 * p.x0 * p.x0 + p.omega_c * p.omega_c).sqrt();
        let eig = eigh(&h_total(0.0, &p)).unwrap();
        let mut expect = [
            -0.5 * p.g - 0.5 * delta,
            -0.5 * p.g + 0.5 * delta,
            0.5 * p.g - 0.5 * delta,
            0.5 * p.g + 0.5 * delta,
        ];
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in eig.eigenvalues.iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        // quoted values for g=1, x0=2, omega_c=0.5
        assert!((eig.eigenvalues[0] + 2.5156).abs() < 1e-3);
        assert!((eig.eigenvalues[3] - 2.5156).abs() < 1e-3);
    }

    #[test]
    fn h_total_large_time_asymptote() {
        let p = ModelParams::new(1.0, 2.0, 0.4, 0.3);
        let t = 1000.0 * p.g / p.epsilon;
        let eig = eigh(&h_total(t, &p)).unwrap();
        let et = 0.5 * p.epsilon * t;
        let mut expect =
            vec![-et - 0.15, -et + 0.15, et - 0.15, et + 0.15];
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in eig.eigenvalues.iter().zip(&expect) {
            // O(g^2/(eps t)) corrections
            assert!((got - want).abs() < 2e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn dh_dt_expansion_and_linearity() {
        let p = ModelParams::new(1.0, 2.0, 0.8, 0.6);
        let d = dh_dt(&p);
        let expect = ComplexMatrix::from_diagonal(&[1.0, 1.0, -1.0, -1.0]);
        assert!(d.sub(&expect).norm_max() < 1e-15);

        // h_total(t + delta) - h_total(t) = delta * dh_dt, exactly
        let (t, delta) = (0.7, 0.25);
        let lhs = h_total(t + delta, &p).sub(&h_total(t, &p));
        let rhs = d.scale(Complex64::new(delta, 0.0));
        assert!(lhs.sub(&rhs).norm_max() < 1e-14);
    }

    #[test]
    fn t0_commutes_with_sigma_x_for_qubit_spectator() {
        let p = ModelParams::new(1.0, 2.0, 1.2, 0.9);
        let h0 = h_total(0.0, &p);
        let x = kron(&sigma_x(), &ComplexMatrix::identity(2)).unwrap();
        let comm = h0.matmul(&x).sub(&x.matmul(&h0));
        assert!(comm.norm_max() < 1e-14);
    }

    #[test]
    fn spectrum_symmetric_in_time() {
        let p = ModelParams::new(1.0, 2.0, 1.5, 0.7);
        for &t in &[0.3, 1.1, 4.0] {
            let ep = eigh(&h_total(t, &p)).unwrap().eigenvalues;
            let em = eigh(&h_total(-t, &p)).unwrap().eigenvalues;
            for (a, b) in ep.iter().zip(&em) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn validation_rejects_bad_params() {
        assert!(ModelParams::new(0.0, 2.0, 0.0, 0.0).validate().is_err());
        assert!(ModelParams::new(1.0, -1.0, 0.0, 0.0).validate().is_err());
        let bad = ModelParams::new(1.0, 2.0, 0.0, 0.0).with_spectator(SpectatorSpec {
            kind: SpectatorKind::Qubit,
            truncation: 3,
            initial_state: SpectatorInitial::Ground,
        });
        assert!(bad.validate().is_err());
        let bad_fock = ModelParams::new(1.0, 2.0, 0.0, 0.0).with_spectator(
            SpectatorSpec::oscillator(4).with_initial(SpectatorInitial::Fock(4)),
        );
        assert!(bad_fock.validate().is_err());
    }
}
