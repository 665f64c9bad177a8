//! Dense complex linear algebra for small Hilbert spaces: Kronecker
//! products, Hermitian eigendecomposition, unitary matrix exponentials,
//! partial traces and purity.
//!
//! Everything here operates on immutable values and is safe to call from
//! many worker threads at once.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Hard cap on matrix dimension; exceeding it usually means a runaway
/// oscillator truncation upstream.
pub const MAX_DIM: usize = 4096;

/// Numerical tolerances used across the crate, collected in one place.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Max allowed Hermiticity defect relative to the matrix magnitude.
    pub hermiticity: f64,
    /// Unitarity / orthonormality checks.
    pub unitarity: f64,
    /// Eigenvalue spacing below which a block is treated as degenerate.
    pub degeneracy: f64,
    /// Trace-one check for density matrices.
    pub trace: f64,
    /// State-vector normalization check.
    pub norm: f64,
    /// Allowed negativity of density-matrix eigenvalues.
    pub negativity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-10,
            unitarity: 1e-10,
            degeneracy: 1e-9,
            trace: 1e-10,
            norm: 1e-10,
            negativity: 1e-10,
        }
    }
}

#[derive(Debug, Error)]
pub enum QcoreError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix dimension {0} exceeds maximum {MAX_DIM}")]
    DimensionOverflow(usize),
    #[error("matrix is not Hermitian: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },
    #[error("non-finite entry encountered")]
    NonFinite,
    #[error("invalid state: {0}")]
    InvalidState(String),
}

pub type Result<T> = std::result::Result<T, QcoreError>;

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Build from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(QcoreError::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                entries.len(),
                rows,
                cols
            )));
        }
        let m = Self { rows, cols, entries };
        if !m.is_finite() {
            return Err(QcoreError::NonFinite);
        }
        Ok(m)
    }

    /// Real diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn norm_max(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest |a_ij - conj(a_ji)|.
    pub fn hermitian_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                defect = defect.max(d);
            }
        }
        defect
    }

    pub fn check_hermitian(&self, tol: f64) -> Result<()> {
        if !self.is_square() {
            return Err(QcoreError::DimensionMismatch(format!(
                "{}x{} matrix is not square",
                self.rows, self.cols
            )));
        }
        let defect = self.hermitian_defect();
        let scale = self.norm_max().max(1.0);
        if defect > tol * scale {
            return Err(QcoreError::NotHermitian { defect, tol: tol * scale });
        }
        Ok(())
    }

    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let row = &self.entries[i * self.cols..(i + 1) * self.cols];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, x) in row.iter().zip(v) {
                acc += a * x;
            }
            out[i] = acc;
        }
        out
    }

    /// In-place y += scale * A x without allocating.
    pub fn matvec_acc(&self, v: &[Complex64], scale: Complex64, out: &mut [Complex64]) {
        assert_eq!(self.cols, v.len());
        assert_eq!(self.rows, out.len());
        for i in 0..self.rows {
            let row = &self.entries[i * self.cols..(i + 1) * self.cols];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, x) in row.iter().zip(v) {
                acc += a * x;
            }
            out[i] += scale * acc;
        }
    }

    pub fn trace(&self) -> Complex64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[i * self.cols + j]
    }
}

/// Normalized complex state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<Complex64>, tol: &Tolerances) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(QcoreError::InvalidState("empty amplitude vector".into()));
        }
        if !amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(QcoreError::NonFinite);
        }
        let norm = vec_norm(&amplitudes);
        if (norm - 1.0).abs() > tol.norm {
            return Err(QcoreError::InvalidState(format!(
                "norm {norm} deviates from 1 beyond {:.1e}",
                tol.norm
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalize and wrap; rejects the zero vector.
    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = vec_norm(&amplitudes);
        if !norm.is_finite() || norm == 0.0 {
            return Err(QcoreError::InvalidState("cannot normalize zero/non-finite vector".into()));
        }
        for z in &mut amplitudes {
            *z /= norm;
        }
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        matrix.check_hermitian(tol.hermiticity.max(1e-12))?;
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tol.trace || tr.im.abs() > tol.trace {
            return Err(QcoreError::InvalidState(format!("trace {tr} deviates from 1")));
        }
        let eig = eigh(&matrix)?;
        if let Some(&min) = eig
            .eigenvalues
            .first()
        {
            if min < -tol.negativity {
                return Err(QcoreError::InvalidState(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(Self { matrix })
    }

    /// Wrap without the (eigendecomposition-based) positivity check;
    /// used on propagator output where positivity is monitored separately.
    pub fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn pure(state: &QuantumState) -> Self {
        let d = state.dim();
        let mut m = ComplexMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = state.amplitudes[i] * state.amplitudes[j].conj();
            }
        }
        Self { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

/// Kronecker product; output dimension is capped at [`MAX_DIM`].
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.rows() * b.rows();
    let cols = a.cols() * b.cols();
    if rows > MAX_DIM || cols > MAX_DIM {
        return Err(QcoreError::DimensionOverflow(rows.max(cols)));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(QcoreError::NonFinite);
    }
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let aij = a[(i, j)];
            if aij.norm_sqr() == 0.0 {
                continue;
            }
            for k in 0..b.rows() {
                for l in 0..b.cols() {
                    out[(i * b.rows() + k, j * b.cols() + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct EighResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, index-matched to `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending
/// (ties broken by stable index).
pub fn eigh(h: &ComplexMatrix) -> Result<EighResult> {
    h.check_hermitian(Tolerances::default().hermiticity)?;
    let n = h.rows();
    // Symmetrize first so the backend sees an exactly Hermitian matrix.
    let mut sym = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let z = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            sym[(i, j)] = z;
        }
        sym[(i, i)] = Complex64::new(sym[(i, i)].re, 0.0);
    }
    let se = sym.to_nalgebra().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[a]
            .partial_cmp(&se.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (j, &k) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[(i, j)] = se.eigenvectors[(i, k)];
        }
    }
    Ok(EighResult { eigenvalues, eigenvectors })
}

/// exp(-i h dt) via eigendecomposition of the Hermitian `h`.
pub fn expm_unitary(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    let eig = eigh(h)?;
    let n = h.rows();
    // U = V exp(-i Lambda dt) V^dagger
    let mut out = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let phase = Complex64::from_polar(1.0, -eig.eigenvalues[k] * dt);
        for i in 0..n {
            let vik = eig.eigenvectors[(i, k)] * phase;
            for j in 0..n {
                out[(i, j)] += vik * eig.eigenvectors[(j, k)].conj();
            }
        }
    }
    Ok(out)
}

/// Reduced state of the qubit: trace out a spectator of dimension
/// `spectator_dim` from a composite pure state (qubit factor first).
pub fn partial_trace_spectator_state(
    state: &QuantumState,
    spectator_dim: usize,
) -> Result<DensityMatrix> {
    if state.dim() != 2 * spectator_dim {
        return Err(QcoreError::DimensionMismatch(format!(
            "state dim {} != 2 x spectator dim {}",
            state.dim(),
            spectator_dim
        )));
    }
    let amp = state.amplitudes();
    let mut rho = ComplexMatrix::zeros(2, 2);
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..spectator_dim {
                acc += amp[a * spectator_dim + k] * amp[b * spectator_dim + k].conj();
            }
            rho[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(rho))
}

/// Same as [`partial_trace_spectator_state`] for a composite density matrix.
pub fn partial_trace_spectator_rho(
    rho: &ComplexMatrix,
    spectator_dim: usize,
) -> Result<DensityMatrix> {
    if !rho.is_square() || rho.rows() != 2 * spectator_dim {
        return Err(QcoreError::DimensionMismatch(format!(
            "rho dim {}x{} != 2 x spectator dim {}",
            rho.rows(),
            rho.cols(),
            spectator_dim
        )));
    }
    let mut out = ComplexMatrix::zeros(2, 2);
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..spectator_dim {
                acc += rho[(a * spectator_dim + k, b * spectator_dim + k)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// Tr(rho^2).
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    let mut acc = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            // Tr(rho^2) = sum_ij rho_ij rho_ji = sum_ij |rho_ij|^2 for Hermitian rho
            acc += (m[(i, j)] * m[(j, i)]).re;
        }
    }
    acc
}

/// Renyi-2 entropy, S2 = -ln Tr(rho^2).
pub fn renyi2(rho: &DensityMatrix) -> f64 {
    -purity(rho).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]).unwrap()
    }

    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&[1.0, -1.0])
    }

    #[test]
    fn kron_identities() {
        let i2 = ComplexMatrix::identity(2);
        let i4 = kron(&i2, &i2).unwrap();
        assert_eq!(i4, ComplexMatrix::identity(4));

        let sz_i = kron(&sigma_z(), &i2).unwrap();
        let expect = ComplexMatrix::from_diagonal(&[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(sz_i, expect);
    }

    #[test]
    fn kron_sigma_x_tau_x() {
        let m = kron(&sigma_x(), &sigma_x()).unwrap();
        // anti-diagonal: entries (0,3), (1,2), (2,1), (3,0) are 1
        assert_eq!(m[(0, 3)], c(1., 0.));
        assert_eq!(m[(1, 2)], c(1., 0.));
        for i in 0..4 {
            assert_eq!(m[(i, i)], c(0., 0.));
        }
    }

    #[test]
    fn kron_overflow_rejected() {
        let big = ComplexMatrix::identity(64);
        let err = kron(&kron(&big, &big).unwrap(), &big);
        assert!(matches!(err, Err(QcoreError::DimensionOverflow(_))));
    }

    #[test]
    fn eigh_sigma_z() {
        let eig = eigh(&sigma_z()).unwrap();
        assert!((eig.eigenvalues[0] + 1.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigh_half_sigma_x() {
        let h = sigma_x().scale(c(0.5, 0.0));
        let eig = eigh(&h).unwrap();
        assert!((eig.eigenvalues[0] + 0.5).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let m = ComplexMatrix::from_vec(2, 2, vec![c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)])
            .unwrap();
        assert!(matches!(eigh(&m), Err(QcoreError::NotHermitian { .. })));
    }

    #[test]
    fn expm_zero_time_is_identity() {
        let u = expm_unitary(&sigma_z(), 0.0).unwrap();
        assert!(u.sub(&ComplexMatrix::identity(2)).norm_max() < 1e-14);
    }

    #[test]
    fn expm_sigma_z_pi() {
        let u = expm_unitary(&sigma_z(), std::f64::consts::PI).unwrap();
        let minus_i2 = ComplexMatrix::identity(2).scale(c(-1., 0.));
        assert!(u.sub(&minus_i2).norm_max() < 1e-12);
    }

    #[test]
    fn partial_trace_product_state() {
        let tol = Tolerances::default();
        // |0> x |down>  (spectator basis {up, down}, down = index 1)
        let psi =
            QuantumState::new(vec![c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)], &tol).unwrap();
        let rho = partial_trace_spectator_state(&psi, 2).unwrap();
        assert!((rho.matrix()[(0, 0)] - c(1., 0.)).norm() < 1e-14);
        assert!(rho.matrix()[(1, 1)].norm() < 1e-14);
        assert!((purity(&rho) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_bell_state() {
        let tol = Tolerances::default();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // (|0 down> + |1 up>)/sqrt(2)
        let psi =
            QuantumState::new(vec![c(0., 0.), c(s, 0.), c(s, 0.), c(0., 0.)], &tol).unwrap();
        let rho = partial_trace_spectator_state(&psi, 2).unwrap();
        assert!((rho.matrix()[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!((rho.matrix()[(1, 1)].re - 0.5).abs() < 1e-14);
        assert!(rho.matrix()[(0, 1)].norm() < 1e-14);
        assert!((purity(&rho) - 0.5).abs() < 1e-12);
        assert!((renyi2(&rho) - 0.5f64.ln().abs()).abs() < 1e-12);
    }

    #[test]
    fn purity_maximally_mixed() {
        let rho = DensityMatrix::from_matrix_unchecked(
            ComplexMatrix::from_diagonal(&[0.5, 0.5]),
        );
        assert!((purity(&rho) - 0.5).abs() < 1e-15);
    }
}
