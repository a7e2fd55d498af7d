//! Truncated Fock-space and two-level operator algebra.
//!
//! Provides ladder and Pauli operators, tensor embedding into composite
//! spaces, and canonical state constructors. Basis conventions, fixed once
//! for the whole crate:
//!
//! - qubit basis is (|g>, |e>), so `sz = |e><e| - |g><g| = diag(-1, +1)`;
//! - Fock basis is (|0>, ..., |N-1>);
//! - tensor order follows the layout list, first slot most significant
//!   (standard Kronecker ordering).

use crate::error::{Error, Result};
use crate::sparse::Csr;
use ndarray::{Array1, Array2, ArrayView1};
use num_complex::Complex64 as C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Ordered list of (label, dimension) pairs describing a composite space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemLayout {
    slots: Vec<(String, usize)>,
}

impl SubsystemLayout {
    pub fn new<S: Into<String>>(slots: Vec<(S, usize)>) -> Result<Self> {
        let slots: Vec<(String, usize)> = slots.into_iter().map(|(l, d)| (l.into(), d)).collect();
        if slots.is_empty() {
            return Err(Error::InvalidArgument("layout must have at least one slot".into()));
        }
        for (i, (label, dim)) in slots.iter().enumerate() {
            if *dim < 2 {
                return Err(Error::InvalidArgument(format!(
                    "slot `{label}` has dim {dim}; dims must be >= 2"
                )));
            }
            if slots[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::DuplicateSlot(label.clone()));
            }
        }
        Ok(SubsystemLayout { slots })
    }

    /// Layout with a single bosonic mode of dimension `n`.
    pub fn single_mode(n: usize) -> Self {
        SubsystemLayout::new(vec![("M", n)]).expect("valid")
    }

    pub fn total_dim(&self) -> usize {
        self.slots.iter().map(|(_, d)| d).product()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|(l, _)| l.as_str())
    }

    pub fn dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().map(|(_, d)| *d)
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        self.index_of(label).map(|i| self.slots[i].1)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.slots
            .iter()
            .position(|(l, _)| l == label)
            .ok_or_else(|| Error::UnknownSlot(label.to_string()))
    }

    /// Stride of each slot in the flattened index (first slot largest).
    pub fn strides(&self) -> Vec<usize> {
        let n = self.slots.len();
        let mut s = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.slots[i + 1].1;
        }
        s
    }

    /// Decompose a flat basis index into per-slot occupation indices.
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut out = Vec::with_capacity(self.slots.len());
        for s in strides {
            out.push(idx / s);
            idx %= s;
        }
        out
    }
}

/// Storage for an operator matrix.
#[derive(Debug, Clone)]
pub enum OpData {
    Dense(Array2<C64>),
    Sparse(Csr),
}

/// Complex square matrix over a tensor-product space, tagged with its layout.
#[derive(Debug, Clone)]
pub struct Operator {
    layout: SubsystemLayout,
    data: OpData,
}

impl Operator {
    pub fn from_csr(layout: SubsystemLayout, m: Csr) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() != layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, layout total_dim is {}",
                m.nrows(),
                m.ncols(),
                layout.total_dim()
            )));
        }
        Ok(Operator { layout, data: OpData::Sparse(m) })
    }

    pub fn from_dense(layout: SubsystemLayout, m: Array2<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() != layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, layout total_dim is {}",
                m.nrows(),
                m.ncols(),
                layout.total_dim()
            )));
        }
        Ok(Operator { layout, data: OpData::Dense(m) })
    }

    pub fn identity(layout: SubsystemLayout) -> Self {
        let n = layout.total_dim();
        Operator { layout, data: OpData::Sparse(Csr::identity(n)) }
    }

    pub fn zeros(layout: SubsystemLayout) -> Self {
        let n = layout.total_dim();
        Operator { layout, data: OpData::Sparse(Csr::from_triplets(n, n, &[])) }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.data, OpData::Sparse(_))
    }

    pub fn nnz(&self) -> usize {
        match &self.data {
            OpData::Sparse(m) => m.nnz(),
            OpData::Dense(m) => m.iter().filter(|v| v.norm() > 0.0).count(),
        }
    }

    pub fn as_csr(&self) -> Csr {
        match &self.data {
            OpData::Sparse(m) => m.clone(),
            OpData::Dense(m) => Csr::from_dense(m, 0.0),
        }
    }

    pub fn to_dense(&self) -> Array2<C64> {
        match &self.data {
            OpData::Sparse(m) => m.to_dense(),
            OpData::Dense(m) => m.clone(),
        }
    }

    /// Densify in place when the dimension is below `threshold`.
    pub fn densify_below(&mut self, threshold: usize) {
        if self.dim() < threshold {
            if let OpData::Sparse(m) = &self.data {
                self.data = OpData::Dense(m.to_dense());
            }
        }
    }

    pub fn dagger(&self) -> Operator {
        let data = match &self.data {
            OpData::Sparse(m) => OpData::Sparse(m.dagger()),
            OpData::Dense(m) => OpData::Dense(m.t().mapv(|v| v.conj())),
        };
        Operator { layout: self.layout.clone(), data }
    }

    pub fn scaled(&self, s: C64) -> Operator {
        let data = match &self.data {
            OpData::Sparse(m) => OpData::Sparse(m.scale(s)),
            OpData::Dense(m) => OpData::Dense(m.mapv(|v| v * s)),
        };
        Operator { layout: self.layout.clone(), data }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.check_same_layout(other)?;
        let data = match (&self.data, &other.data) {
            (OpData::Sparse(a), OpData::Sparse(b)) => OpData::Sparse(a.add(b)),
            _ => OpData::Dense(self.to_dense() + other.to_dense()),
        };
        Ok(Operator { layout: self.layout.clone(), data })
    }

    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        self.check_same_layout(other)?;
        let data = match (&self.data, &other.data) {
            (OpData::Sparse(a), OpData::Sparse(b)) => OpData::Sparse(a.matmul(b)),
            _ => OpData::Dense(self.to_dense().dot(&other.to_dense())),
        };
        Ok(Operator { layout: self.layout.clone(), data })
    }

    /// [A, B] = AB - BA
    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        let ab = self.matmul(other)?;
        let ba = other.matmul(self)?;
        ab.add(&ba.scaled(c(-1.0, 0.0)))
    }

    pub fn matvec(&self, x: ArrayView1<C64>) -> Array1<C64> {
        match &self.data {
            OpData::Sparse(m) => m.matvec(x),
            OpData::Dense(m) => m.dot(&x),
        }
    }

    /// y += alpha * A x
    pub fn matvec_acc(&self, alpha: C64, x: ArrayView1<C64>, y: &mut Array1<C64>) {
        match &self.data {
            OpData::Sparse(m) => m.matvec_acc(alpha, x, y),
            OpData::Dense(m) => {
                let prod = m.dot(&x);
                y.zip_mut_with(&prod, |yi, pi| *yi += alpha * pi);
            }
        }
    }

    /// Largest absolute entry of A - A†.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.to_dense();
        let mut worst = 0.0f64;
        for i in 0..d.nrows() {
            for j in i..d.ncols() {
                worst = worst.max((d[[i, j]] - d[[j, i]].conj()).norm());
            }
        }
        worst
    }

    pub fn norm_max(&self) -> f64 {
        match &self.data {
            OpData::Sparse(m) => m.norm_max(),
            OpData::Dense(m) => m.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    /// Max absolute row sum; cheap upper bound on the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        match &self.data {
            OpData::Sparse(m) => m.norm_inf(),
            OpData::Dense(m) => {
                let mut best = 0.0f64;
                for r in m.rows() {
                    best = best.max(r.iter().map(|v| v.norm()).sum());
                }
                best
            }
        }
    }

    fn check_same_layout(&self, other: &Operator) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::DimensionMismatch("operator layouts differ".into()));
        }
        Ok(())
    }
}

/// Which ladder-type operator to construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderKind {
    Annihilate,
    Create,
    Number,
    Identity,
}

/// Truncated bosonic operator on an `n_dim`-level Fock space:
/// `<n-1|a|n> = sqrt(n)`.
pub fn ladder(kind: LadderKind, n_dim: usize) -> Result<Operator> {
    if n_dim < 2 {
        return Err(Error::InvalidArgument(format!("Fock dimension {n_dim} < 2")));
    }
    let layout = SubsystemLayout::single_mode(n_dim);
    let t: Vec<(usize, usize, C64)> = match kind {
        LadderKind::Annihilate => {
            (1..n_dim).map(|n| (n - 1, n, c((n as f64).sqrt(), 0.0))).collect()
        }
        LadderKind::Create => (1..n_dim).map(|n| (n, n - 1, c((n as f64).sqrt(), 0.0))).collect(),
        LadderKind::Number => (0..n_dim).map(|n| (n, n, c(n as f64, 0.0))).collect(),
        LadderKind::Identity => (0..n_dim).map(|n| (n, n, c(1.0, 0.0))).collect(),
    };
    Operator::from_csr(layout, Csr::from_triplets(n_dim, n_dim, &t))
}

/// Two-level operators in the ordered basis (|g>, |e>).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitKind {
    Sx,
    Sz,
    /// |e><g|
    Raise,
    /// |g><e|
    Lower,
    ProjGg,
    ProjEe,
    /// |+><+| with |+> = (|e> + |g>)/sqrt(2)
    ProjPp,
    /// |-><-| with |-> = (|e> - |g>)/sqrt(2)
    ProjMm,
}

pub fn qubit_op(kind: QubitKind) -> Operator {
    let layout = SubsystemLayout::new(vec![("Q", 2)]).expect("valid");
    let h = c(0.5, 0.0);
    let one = c(1.0, 0.0);
    let t: Vec<(usize, usize, C64)> = match kind {
        QubitKind::Sx => vec![(0, 1, one), (1, 0, one)],
        QubitKind::Sz => vec![(0, 0, -one), (1, 1, one)],
        QubitKind::Raise => vec![(1, 0, one)],
        QubitKind::Lower => vec![(0, 1, one)],
        QubitKind::ProjGg => vec![(0, 0, one)],
        QubitKind::ProjEe => vec![(1, 1, one)],
        QubitKind::ProjPp => vec![(0, 0, h), (0, 1, h), (1, 0, h), (1, 1, h)],
        QubitKind::ProjMm => vec![(0, 0, h), (0, 1, -h), (1, 0, -h), (1, 1, h)],
    };
    Operator::from_csr(layout, Csr::from_triplets(2, 2, &t)).expect("valid 2x2")
}

/// Kronecker-embed a single-subsystem operator into `layout` at `slot`,
/// with identities on every other slot. Linear and adjoint-compatible.
pub fn embed(op: &Operator, layout: &SubsystemLayout, slot: &str) -> Result<Operator> {
    let idx = layout.index_of(slot)?;
    let slot_dim = layout.dim_of(slot)?;
    if op.dim() != slot_dim {
        return Err(Error::DimensionMismatch(format!(
            "operator dim {} does not match slot `{slot}` dim {slot_dim}",
            op.dim()
        )));
    }
    let mut acc = Csr::identity(1);
    for (i, d) in layout.dims().enumerate() {
        let factor = if i == idx { op.as_csr() } else { Csr::identity(d) };
        acc = acc.kron(&factor);
    }
    Operator::from_csr(layout.clone(), acc)
}

/// One factor of a product state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorSpec {
    Fock(usize),
    Coherent(C64),
    G,
    E,
    Plus,
    Minus,
}

/// Pure state vector (or density matrix) over a layout.
#[derive(Debug, Clone)]
pub struct QState {
    layout: SubsystemLayout,
    amplitudes: Array1<C64>,
}

impl QState {
    pub fn from_amplitudes(layout: SubsystemLayout, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} amplitudes, layout total_dim is {}",
                amplitudes.len(),
                layout.total_dim()
            )));
        }
        let norm = amplitudes.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "state norm {norm} deviates from 1 by more than 1e-10"
            )));
        }
        Ok(QState { layout, amplitudes })
    }

    /// Skip the norm check (used internally on states produced by unitary maps).
    pub(crate) fn from_amplitudes_unchecked(layout: SubsystemLayout, amplitudes: Array1<C64>) -> Self {
        QState { layout, amplitudes }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> ArrayView1<'_, C64> {
        self.amplitudes.view()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn renormalized(&self) -> QState {
        let n = self.norm();
        QState {
            layout: self.layout.clone(),
            amplitudes: self.amplitudes.mapv(|v| v / c(n, 0.0)),
        }
    }

    /// |<self|other>|^2
    pub fn overlap(&self, other: &QState) -> f64 {
        let ip: C64 = self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        ip.norm_sqr()
    }
}

/// Normalized coherent-state amplitudes on a truncated space, plus the
/// untruncated tail weight that was cut off.
fn coherent_amplitudes(n_dim: usize, nu: C64) -> (Array1<C64>, f64) {
    let mut amps = Array1::zeros(n_dim);
    if nu.norm() == 0.0 {
        amps[0] = c(1.0, 0.0);
        return (amps, 0.0);
    }
    // log-domain magnitudes avoid factorial overflow at large n
    let log_nu = nu.norm().ln();
    let mut log_fact = 0.0;
    let mut kept = 0.0;
    for n in 0..n_dim {
        if n > 0 {
            log_fact += (n as f64).ln();
        }
        let log_mag = n as f64 * log_nu - 0.5 * log_fact - 0.5 * nu.norm_sqr();
        let mag = log_mag.exp();
        let phase = c(0.0, nu.arg() * n as f64).exp();
        amps[n] = mag * phase;
        kept += mag * mag;
    }
    let leakage = (1.0 - kept).max(0.0);
    let norm = kept.sqrt();
    amps.mapv_inplace(|v| v / norm);
    (amps, leakage)
}

/// A constructed state together with its truncation-leakage report.
#[derive(Debug, Clone)]
pub struct PreparedState {
    pub state: QState,
    /// Probability weight of the untruncated tail, summed over factors.
    pub leakage: f64,
}

/// Tensor product of normalized factors, one per layout slot.
/// Coherent factors are renormalized over the truncated space and the
/// cut tail weight is reported.
pub fn make_state(factors: &[FactorSpec], layout: &SubsystemLayout) -> Result<PreparedState> {
    if factors.len() != layout.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors for a {}-slot layout",
            factors.len(),
            layout.len()
        )));
    }
    let mut amps = Array1::from(vec![c(1.0, 0.0)]);
    let mut leakage = 0.0;
    let inv_sqrt2 = c(1.0 / 2.0_f64.sqrt(), 0.0);
    for (factor, dim) in factors.iter().zip(layout.dims()) {
        let f: Array1<C64> = match factor {
            FactorSpec::Fock(n) => {
                if *n >= dim {
                    return Err(Error::InvalidArgument(format!(
                        "Fock level {n} outside truncation {dim}"
                    )));
                }
                let mut v = Array1::zeros(dim);
                v[*n] = c(1.0, 0.0);
                v
            }
            FactorSpec::Coherent(nu) => {
                if !nu.re.is_finite() || !nu.im.is_finite() {
                    return Err(Error::InvalidArgument("coherent amplitude must be finite".into()));
                }
                let (v, leak) = coherent_amplitudes(dim, *nu);
                leakage += leak;
                v
            }
            FactorSpec::G | FactorSpec::E | FactorSpec::Plus | FactorSpec::Minus => {
                if dim != 2 {
                    return Err(Error::DimensionMismatch(format!(
                        "qubit factor on a slot of dim {dim}"
                    )));
                }
                let mut v = Array1::zeros(2);
                match factor {
                    FactorSpec::G => v[0] = c(1.0, 0.0),
                    FactorSpec::E => v[1] = c(1.0, 0.0),
                    FactorSpec::Plus => {
                        v[0] = inv_sqrt2;
                        v[1] = inv_sqrt2;
                    }
                    FactorSpec::Minus => {
                        v[0] = -inv_sqrt2;
                        v[1] = inv_sqrt2;
                    }
                    _ => unreachable!(),
                }
                v
            }
        };
        // kron of vectors
        let mut next = Array1::zeros(amps.len() * f.len());
        for (i, &ai) in amps.iter().enumerate() {
            for (j, &fj) in f.iter().enumerate() {
                next[i * f.len() + j] = ai * fj;
            }
        }
        amps = next;
    }
    Ok(PreparedState { state: QState::from_amplitudes(layout.clone(), amps)?, leakage })
}

/// Apply an operator to a pure state (no renormalization).
pub fn apply(op: &Operator, state: &QState) -> Result<QState> {
    if op.layout() != state.layout() {
        return Err(Error::DimensionMismatch("operator/state layouts differ".into()));
    }
    Ok(QState {
        layout: state.layout.clone(),
        amplitudes: op.matvec(state.amplitudes()),
    })
}

/// <psi| O |psi>
pub fn expect(op: &Operator, state: &QState) -> Result<C64> {
    if op.layout() != state.layout() {
        return Err(Error::DimensionMismatch("operator/state layouts differ".into()));
    }
    let oy = op.matvec(state.amplitudes());
    Ok(state.amplitudes.iter().zip(oy.iter()).map(|(a, b)| a.conj() * b).sum())
}
