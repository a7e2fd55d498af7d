//! State comparison and visualization quantities: partial trace, Uhlmann
//! fidelity, Wigner function, photon statistics.
//!
//! Quadrature convention: x = (a + a^t)/sqrt(2), p = (a - a^t)/(i sqrt(2)),
//! so alpha = (x + i p)/sqrt(2), the vacuum has variance 1/2 in both
//! quadratures, and the Wigner function integrates to one over dx dp.

use crate::error::{Error, Result};
use crate::fock::{embed, ladder, LadderKind, Operator, QState, SubsystemLayout};
use crate::gates::{ideal_gate, GateSpec};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Density matrix over a (sub-)layout.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    layout: SubsystemLayout,
    mat: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(layout: SubsystemLayout, mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() != layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix is {}x{}, layout total_dim {}",
                mat.nrows(),
                mat.ncols(),
                layout.total_dim()
            )));
        }
        Ok(DensityMatrix { layout, mat })
    }

    pub fn from_pure(state: &QState) -> Self {
        let amps = state.amplitudes();
        let n = amps.len();
        let mut mat = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                mat[[i, j]] = amps[i] * amps[j].conj();
            }
        }
        DensityMatrix { layout: state.layout().clone(), mat }
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.mat.diag().iter().sum()
    }

    pub fn purity(&self) -> f64 {
        self.mat.dot(&self.mat).diag().iter().sum::<C64>().re
    }

    /// Hermiticity within 1e-10, unit trace within 1e-10, eigenvalues
    /// above -1e-10.
    pub fn validate(&self) -> Result<()> {
        let mut herm = 0.0f64;
        for i in 0..self.dim() {
            for j in i..self.dim() {
                herm = herm.max((self.mat[[i, j]] - self.mat[[j, i]].conj()).norm());
            }
        }
        if herm > 1e-10 {
            return Err(Error::InvalidArgument(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("density matrix trace {tr} != 1")));
        }
        let (w, _) = eigh_c(&self.mat)?;
        if w.iter().any(|&x| x < -1e-10) {
            return Err(Error::InvalidArgument("density matrix has negative eigenvalues".into()));
        }
        Ok(())
    }

    /// <psi| rho |psi>
    pub fn expectation_in(&self, state: &QState) -> Result<f64> {
        if state.layout() != &self.layout {
            return Err(Error::DimensionMismatch("state/density layouts differ".into()));
        }
        let amps = state.amplitudes();
        let v = self.mat.dot(&amps);
        let ip: C64 = amps.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
        Ok(ip.re)
    }

    /// Tr(rho O)
    pub fn expect_op(&self, op: &Operator) -> Result<C64> {
        if op.layout() != &self.layout {
            return Err(Error::DimensionMismatch("operator/density layouts differ".into()));
        }
        let od = op.to_dense();
        let mut tr = c(0.0, 0.0);
        for i in 0..self.dim() {
            for k in 0..self.dim() {
                tr += self.mat[[i, k]] * od[[k, i]];
            }
        }
        Ok(tr)
    }
}

fn eigh_c(m: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let (w, v) = m.eigh(UPLO::Lower).map_err(|e| Error::Linalg(format!("eigh failed: {e}")))?;
    Ok((w, v.mapv(|x| x.conj())))
}

fn trace_indices(layout: &SubsystemLayout, keep: &[&str]) -> Result<(Vec<usize>, Vec<usize>)> {
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep list must be non-empty".into()));
    }
    let mut keep_slots = Vec::new();
    for k in keep {
        keep_slots.push(layout.index_of(k)?);
    }
    let all: Vec<usize> = (0..layout.len()).collect();
    let trace_slots: Vec<usize> = all.into_iter().filter(|i| !keep_slots.contains(i)).collect();
    Ok((keep_slots, trace_slots))
}

fn sub_layout(layout: &SubsystemLayout, slots: &[usize]) -> SubsystemLayout {
    let labels: Vec<(String, usize)> = slots
        .iter()
        .map(|&i| {
            let label = layout.labels().nth(i).unwrap().to_string();
            let dim = layout.dims().nth(i).unwrap();
            (label, dim)
        })
        .collect();
    SubsystemLayout::new(labels).expect("sub-layout of a valid layout")
}

/// Trace a pure state down to the subsystems in `keep` (in layout order).
pub fn partial_trace(state: &QState, keep: &[&str]) -> Result<DensityMatrix> {
    let layout = state.layout();
    let (keep_slots, trace_slots) = trace_indices(layout, keep)?;
    let keep_layout = sub_layout(layout, &keep_slots);
    let kd = keep_layout.total_dim();
    let strides = layout.strides();
    let dims: Vec<usize> = layout.dims().collect();

    // enumerate kept and traced multi-indices
    let kept_strides: Vec<usize> = keep_slots.iter().map(|&s| strides[s]).collect();
    let kept_dims: Vec<usize> = keep_slots.iter().map(|&s| dims[s]).collect();
    let tr_strides: Vec<usize> = trace_slots.iter().map(|&s| strides[s]).collect();
    let tr_dims: Vec<usize> = trace_slots.iter().map(|&s| dims[s]).collect();

    let flat = |multi: &[usize], strides: &[usize]| -> usize {
        multi.iter().zip(strides.iter()).map(|(m, s)| m * s).sum()
    };
    let enumerate_multi = |dims: &[usize]| -> Vec<Vec<usize>> {
        let total: usize = dims.iter().product::<usize>().max(1);
        (0..total)
            .map(|mut i| {
                let mut out = vec![0; dims.len()];
                for k in (0..dims.len()).rev() {
                    out[k] = i % dims[k];
                    i /= dims[k];
                }
                out
            })
            .collect()
    };

    let kept_multis = enumerate_multi(&kept_dims);
    let tr_multis = enumerate_multi(&tr_dims);
    let amps = state.amplitudes();
    let mut rho = Array2::zeros((kd, kd));
    for (ri, rm) in kept_multis.iter().enumerate() {
        let rbase = flat(rm, &kept_strides);
        for (ci, cm) in kept_multis.iter().enumerate() {
            let cbase = flat(cm, &kept_strides);
            let mut acc = c(0.0, 0.0);
            for tm in &tr_multis {
                let off = flat(tm, &tr_strides);
                acc += amps[rbase + off] * amps[cbase + off].conj();
            }
            rho[[ri, ci]] = acc;
        }
    }
    DensityMatrix::new(keep_layout, rho)
}

/// Trace a density matrix down to the subsystems in `keep`.
pub fn partial_trace_dm(dm: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix> {
    let layout = dm.layout();
    let (keep_slots, trace_slots) = trace_indices(layout, keep)?;
    let keep_layout = sub_layout(layout, &keep_slots);
    let kd = keep_layout.total_dim();
    let strides = layout.strides();
    let dims: Vec<usize> = layout.dims().collect();
    let kept_strides: Vec<usize> = keep_slots.iter().map(|&s| strides[s]).collect();
    let kept_dims: Vec<usize> = keep_slots.iter().map(|&s| dims[s]).collect();
    let tr_strides: Vec<usize> = trace_slots.iter().map(|&s| strides[s]).collect();
    let tr_dims: Vec<usize> = trace_slots.iter().map(|&s| dims[s]).collect();

    let flat = |multi: &[usize], strides: &[usize]| -> usize {
        multi.iter().zip(strides.iter()).map(|(m, s)| m * s).sum()
    };
    let enumerate_multi = |dims: &[usize]| -> Vec<Vec<usize>> {
        let total: usize = dims.iter().product::<usize>().max(1);
        (0..total)
            .map(|mut i| {
                let mut out = vec![0; dims.len()];
                for k in (0..dims.len()).rev() {
                    out[k] = i % dims[k];
                    i /= dims[k];
                }
                out
            })
            .collect()
    };
    let kept_multis = enumerate_multi(&kept_dims);
    let tr_multis = enumerate_multi(&tr_dims);
    let m = dm.matrix();
    let mut rho = Array2::zeros((kd, kd));
    for (ri, rm) in kept_multis.iter().enumerate() {
        let rbase = flat(rm, &kept_strides);
        for (ci, cm) in kept_multis.iter().enumerate() {
            let cbase = flat(cm, &kept_strides);
            let mut acc = c(0.0, 0.0);
            for tm in &tr_multis {
                let off = flat(tm, &tr_strides);
                acc += m[[rbase + off, cbase + off]];
            }
            rho[[ri, ci]] = acc;
        }
    }
    DensityMatrix::new(keep_layout, rho)
}

/// Uhlmann fidelity F = (Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))^2, clipped
/// into [0, 1]. Near-pure arguments take the <psi|rho|psi> fast path.
pub fn fidelity(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::DimensionMismatch("density matrices differ in dimension".into()));
    }
    // rank-1 fast path
    for (a, b) in [(rho1, rho2), (rho2, rho1)] {
        if a.purity() > 1.0 - 1e-10 {
            let (w, v) = eigh_c(a.matrix())?;
            let imax = w
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            let psi = v.column(imax).to_owned();
            let bv = b.matrix().dot(&psi);
            let f: C64 = psi.iter().zip(bv.iter()).map(|(x, y)| x.conj() * y).sum();
            return Ok(f.re.clamp(0.0, 1.0));
        }
    }
    let (w1, v1) = eigh_c(rho1.matrix())?;
    // clip tiny and negative eigenvalues before the square root; noise at
    // the -1e-16 level would otherwise surface as 1e-8 errors
    let wmax = w1.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let sqrt_w: Array1<C64> =
        w1.mapv(|x| c(if x > 1e-13 * wmax { x.sqrt() } else { 0.0 }, 0.0));
    let mut scaled = v1.clone();
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        let s = sqrt_w[j];
        col.mapv_inplace(|x| x * s);
    }
    let sqrt_rho1 = scaled.dot(&v1.t().mapv(|x| x.conj()));
    let m = sqrt_rho1.dot(rho2.matrix()).dot(&sqrt_rho1);
    let (wm, _) = eigh_c(&m)?;
    let mmax = wm.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let f: f64 =
        wm.iter().map(|&x| if x > 1e-13 * mmax { x.sqrt() } else { 0.0 }).sum();
    Ok((f * f).clamp(0.0, 1.0))
}

/// Fidelity of a density matrix against a pure target, <psi|rho|psi>.
pub fn fidelity_to_pure(rho: &DensityMatrix, target: &QState) -> Result<f64> {
    rho.expectation_in(target).map(|f| f.clamp(0.0, 1.0))
}

/// Phase-space grid of the Wigner function.
#[derive(Debug, Clone)]
pub struct WignerGrid {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    /// w[[i, j]] = W(xs[i], ps[j])
    pub w: Array2<f64>,
}

impl WignerGrid {
    pub fn integral(&self) -> f64 {
        let dx = if self.xs.len() > 1 { self.xs[1] - self.xs[0] } else { 1.0 };
        let dp = if self.ps.len() > 1 { self.ps[1] - self.ps[0] } else { 1.0 };
        self.w.sum() * dx * dp
    }

    pub fn min(&self) -> f64 {
        self.w.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.w.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid point with the largest W.
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for ((i, j), &v) in self.w.indexed_iter() {
            if v > best.2 {
                best = (i, j, v);
            }
        }
        (self.xs[best.0], self.ps[best.1])
    }

    /// CSV with columns x, p, w.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,p,w\n");
        for (i, &x) in self.xs.iter().enumerate() {
            for (j, &p) in self.ps.iter().enumerate() {
                out.push_str(&format!("{:.11e},{:.11e},{:.11e}\n", x, p, self.w[[i, j]]));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Vec<f64>> =
            (0..self.xs.len()).map(|i| self.w.row(i).to_vec()).collect();
        serde_json::json!({ "x": self.xs, "p": self.ps, "w": rows }).to_string()
    }
}

/// Square sampling grid for the Wigner function, default 121 x 121 over
/// [-5, 5]^2.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { min: -5.0, max: 5.0, points: 121 }
    }
}

impl GridSpec {
    pub fn samples(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// W(x,p) = (1/pi) Tr[rho D(alpha) Pi D(-alpha)] with Pi the photon
/// parity and alpha = (x + i p)/sqrt(2), evaluated exactly on the
/// truncated space (one displaced-parity expectation per grid point).
pub fn wigner(rho: &DensityMatrix, grid: &GridSpec) -> Result<WignerGrid> {
    if rho.layout().len() != 1 {
        return Err(Error::DimensionMismatch(
            "wigner needs a single-mode density matrix".into(),
        ));
    }
    let n = rho.dim();
    let xs = grid.samples();
    let ps = grid.samples();
    let mat = rho.matrix();
    // coverage warning: a state of mean photon number n-bar has its
    // quasi-probability mass inside radius ~ sqrt(2 n-bar) + a few
    let nbar: f64 = (0..n).map(|k| mat[[k, k]].re * k as f64).sum();
    let radius = (2.0 * nbar).sqrt() + 3.0;
    if radius > grid.max.abs().min(grid.min.abs()) {
        eprintln!(
            "wigner: grid reach {:.1} may clip a state of mean photon number {:.1} (radius ~{:.1})",
            grid.max.abs().min(grid.min.abs()),
            nbar,
            radius
        );
    }

    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&x| {
            ps.iter()
                .map(|&p| {
                    let alpha = c(x, p) / c(2.0f64.sqrt(), 0.0);
                    let d = ideal_gate(&GateSpec::Displacement { alpha, mode: 0 }, n)
                        .expect("displacement construction");
                    let dd = d.to_dense();
                    // sum_n (-1)^n <d_n| rho |d_n> with d_n = D |n>
                    let m = mat.dot(&dd);
                    let mut w = 0.0;
                    for k in 0..n {
                        let mut diag = c(0.0, 0.0);
                        for r in 0..n {
                            diag += dd[[r, k]].conj() * m[[r, k]];
                        }
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        w += sign * diag.re;
                    }
                    w / std::f64::consts::PI
                })
                .collect()
        })
        .collect();

    let mut w = Array2::zeros((xs.len(), ps.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            w[[i, j]] = v;
        }
    }
    // warn-level check: most of the state should sit inside the grid
    Ok(WignerGrid { xs, ps, w })
}

/// Photon statistics of a density matrix: mean photon number per mode,
/// purity, and the population of the top three Fock levels per mode (the
/// truncation-leakage witness).
#[derive(Debug, Clone)]
pub struct PhotonStats {
    pub mean_photons: Vec<(String, f64)>,
    pub purity: f64,
    pub edge_population: Vec<(String, f64)>,
}

pub fn photon_stats(rho: &DensityMatrix) -> Result<PhotonStats> {
    let layout = rho.layout().clone();
    let mut mean_photons = Vec::new();
    let mut edge_population = Vec::new();
    for (slot, label) in layout.labels().enumerate() {
        let dim = layout.dims().nth(slot).unwrap();
        if dim < 3 {
            continue; // qubit slots carry no photon statistics
        }
        let num = embed(&ladder(LadderKind::Number, dim)?, &layout, label)?;
        let nbar = rho.expect_op(&num)?.re;
        mean_photons.push((label.to_string(), nbar));
        let mut edge = 0.0;
        for i in 0..rho.dim() {
            let idx = layout.unflatten(i);
            if idx[slot] + 3 >= dim {
                edge += rho.matrix()[[i, i]].re;
            }
        }
        edge_population.push((label.to_string(), edge));
    }
    Ok(PhotonStats { mean_photons, purity: rho.purity(), edge_population })
}

/// Mean-field estimate of the closest coherent state: alpha = Tr(rho a),
/// returned with the fidelity against |alpha>.
pub fn best_fit_coherent(rho: &DensityMatrix) -> Result<(C64, f64)> {
    if rho.layout().len() != 1 {
        return Err(Error::DimensionMismatch("needs a single-mode density matrix".into()));
    }
    let n = rho.dim();
    let a = ladder(LadderKind::Annihilate, n)?;
    let alpha = rho.expect_op(&embed(&a, rho.layout(), rho.layout().labels().next().unwrap())?)?;
    let target = crate::fock::make_state(
        &[crate::fock::FactorSpec::Coherent(alpha)],
        rho.layout(),
    )?
    .state;
    let f = fidelity_to_pure(rho, &target)?;
    Ok((alpha, f))
}

/// Maximize the fidelity of `rho` against a pure target over one residual
/// rotation R(delta) applied to rho: a gauge diagnostic separating
/// unmodeled phase from physical infidelity. Coarse scan plus
/// golden-section refinement to 1e-6 rad.
pub fn max_fidelity_over_rotation(
    rho: &DensityMatrix,
    target: &QState,
) -> Result<(f64, f64)> {
    if rho.layout().len() != 1 || target.layout() != rho.layout() {
        return Err(Error::DimensionMismatch("needs matching single-mode arguments".into()));
    }
    let n = rho.dim();
    let amps = target.amplitudes();
    let f_of = |delta: f64| -> f64 {
        // <t| R(d) rho R(-d) |t> = sum_{mn} conj(t_m) e^{i d m} rho_mn e^{-i d n} t_n
        let mut acc = c(0.0, 0.0);
        for m in 0..n {
            let lm = amps[m].conj() * (c(0.0, delta * m as f64)).exp();
            for k in 0..n {
                acc += lm * rho.matrix()[[m, k]] * (c(0.0, -delta * k as f64)).exp() * amps[k];
            }
        }
        acc.re
    };
    let coarse = 721;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..coarse {
        let d = -std::f64::consts::PI + std::f64::consts::TAU * i as f64 / (coarse - 1) as f64;
        let f = f_of(d);
        if f > best.0 {
            best = (f, d);
        }
    }
    let span = std::f64::consts::TAU / (coarse - 1) as f64;
    let (mut lo, mut hi) = (best.1 - span, best.1 + span);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = f_of(x1);
    let mut f2 = f_of(x2);
    while hi - lo > 1e-6 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f_of(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f_of(x1);
        }
    }
    let d = 0.5 * (lo + hi);
    Ok((f_of(d).clamp(0.0, 1.0), d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_state, FactorSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn keep_all_is_projector() {
        let layout = SubsystemLayout::new(vec![("M", 5), ("F", 2)]).unwrap();
        let st = make_state(&[FactorSpec::Coherent(c(1.0, 0.3)), FactorSpec::Plus], &layout)
            .unwrap()
            .state;
        let rho = partial_trace(&st, &["M", "F"]).unwrap();
        assert_relative_eq!(rho.purity(), 1.0, max_relative = 1e-10);
        assert_relative_eq!(rho.expectation_in(&st).unwrap(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn product_state_traces_to_pure_factor() {
        let layout = SubsystemLayout::new(vec![("M", 20), ("F", 2)]).unwrap();
        let st = make_state(&[FactorSpec::Coherent(c(2.0, 0.0)), FactorSpec::G], &layout)
            .unwrap()
            .state;
        let rho = partial_trace(&st, &["M"]).unwrap();
        assert_relative_eq!(rho.purity(), 1.0, max_relative = 1e-10);
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
        rho.validate().unwrap();
    }

    #[test]
    fn bell_like_state_traces_to_mixed() {
        // (|0 g> + |1 e>)/sqrt(2) -> diag(1/2, 1/2) on the first two levels
        let layout = SubsystemLayout::new(vec![("M", 3), ("F", 2)]).unwrap();
        let mut amps = Array1::zeros(6);
        amps[0] = c(1.0 / 2.0f64.sqrt(), 0.0); // |0, g>
        amps[3] = c(1.0 / 2.0f64.sqrt(), 0.0); // |1, e>
        let st = QState::from_amplitudes(layout.clone(), amps).unwrap();
        let rho = partial_trace(&st, &["M"]).unwrap();
        assert_abs_diff_eq!(rho.matrix()[[0, 0]].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.matrix()[[1, 1]].re, 0.5, epsilon = 1e-12);
        assert!(rho.matrix()[[0, 1]].norm() < 1e-12);
        assert_relative_eq!(rho.purity(), 0.5, max_relative = 1e-10);
    }

    #[test]
    fn fidelity_axioms() {
        let layout = SubsystemLayout::single_mode(40);
        let zero = make_state(&[FactorSpec::Fock(0)], &layout).unwrap().state;
        let one = make_state(&[FactorSpec::Fock(1)], &layout).unwrap().state;
        let coh = make_state(&[FactorSpec::Coherent(c(2.0, 0.0))], &layout).unwrap().state;
        let rz = DensityMatrix::from_pure(&zero);
        let ro = DensityMatrix::from_pure(&one);
        let rc = DensityMatrix::from_pure(&coh);

        assert_relative_eq!(fidelity(&rz, &rz).unwrap(), 1.0, max_relative = 1e-9);
        assert_abs_diff_eq!(fidelity(&rz, &ro).unwrap(), 0.0, epsilon = 1e-12);
        // analytic coherent overlap e^{-4}
        assert_abs_diff_eq!(fidelity(&rz, &rc).unwrap(), (-4.0f64).exp(), epsilon = 1e-9);
        // symmetry
        let f12 = fidelity(&rc, &rz).unwrap();
        let f21 = fidelity(&rz, &rc).unwrap();
        assert_abs_diff_eq!(f12, f21, epsilon = 1e-9);
        // pure pair = |<a|b>|^2
        assert_abs_diff_eq!(f12, zero.overlap(&coh), epsilon = 1e-9);
    }

    #[test]
    fn fidelity_mixed_path_and_unitary_invariance() {
        // mix of |0> and |1> vs mix of |0> and |2>
        let n = 24;
        let layout = SubsystemLayout::single_mode(n);
        let mut m1 = Array2::<C64>::zeros((n, n));
        m1[[0, 0]] = c(0.5, 0.0);
        m1[[1, 1]] = c(0.5, 0.0);
        let mut m2 = Array2::<C64>::zeros((n, n));
        m2[[0, 0]] = c(0.7, 0.0);
        m2[[2, 2]] = c(0.3, 0.0);
        let r1 = DensityMatrix::new(layout.clone(), m1).unwrap();
        let r2 = DensityMatrix::new(layout.clone(), m2).unwrap();
        let f = fidelity(&r1, &r2).unwrap();
        // analytic: (sqrt(0.5*0.7))^2 since only |0> overlaps
        assert_abs_diff_eq!(f, 0.35, epsilon = 1e-9);
        assert!((0.0..=1.0).contains(&f));

        // invariance under a common unitary
        let u = ideal_gate(&GateSpec::Displacement { alpha: c(0.4, 0.2), mode: 0 }, n)
            .unwrap()
            .to_dense();
        let tr = |m: &Array2<C64>| u.dot(m).dot(&u.t().mapv(|x| x.conj()));
        let r1u = DensityMatrix::new(layout.clone(), tr(r1.matrix())).unwrap();
        let r2u = DensityMatrix::new(layout.clone(), tr(r2.matrix())).unwrap();
        assert_abs_diff_eq!(fidelity(&r1u, &r2u).unwrap(), f, epsilon = 1e-9);
    }

    #[test]
    fn wigner_vacuum_and_coherent() {
        // the grid corners reach |alpha|^2 = 25, so the displaced-parity
        // evaluation needs headroom above that
        let layout = SubsystemLayout::single_mode(60);
        let vac = make_state(&[FactorSpec::Fock(0)], &layout).unwrap().state;
        let grid = GridSpec { min: -5.0, max: 5.0, points: 61 };
        let w = wigner(&DensityMatrix::from_pure(&vac), &grid).unwrap();
        // W(0,0) = 1/pi for vacuum under this convention
        let mid = 30;
        assert_abs_diff_eq!(w.w[[mid, mid]], 1.0 / std::f64::consts::PI, epsilon = 1e-9);
        assert_abs_diff_eq!(w.integral(), 1.0, epsilon = 1e-3);

        let coh = make_state(&[FactorSpec::Coherent(c(2.0, 0.0))], &SubsystemLayout::single_mode(60))
            .unwrap()
            .state;
        let w = wigner(&DensityMatrix::from_pure(&coh), &grid).unwrap();
        let (x, p) = w.argmax();
        // peak at (2 sqrt 2, 0) within one grid cell
        let cell = 10.0 / 60.0;
        assert!((x - 2.0 * 2.0f64.sqrt()).abs() <= cell, "x peak {x}");
        assert!(p.abs() <= cell, "p peak {p}");
        assert!(w.w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn wigner_cat_has_negative_fringes() {
        // the cat lobes sit at x = +-2 sqrt(2) with unit-variance tails,
        // so the grid must extend well past 4 to capture all the weight
        let n = 96;
        let layout = SubsystemLayout::single_mode(n);
        let coh = make_state(&[FactorSpec::Coherent(c(2.0, 0.0))], &layout).unwrap().state;
        let k = ideal_gate(&GateSpec::Kerr { chi: std::f64::consts::PI / 2.0, mode: 0 }, n).unwrap();
        let cat = crate::fock::apply(&k, &coh).unwrap();
        let grid = GridSpec { min: -5.5, max: 5.5, points: 61 };
        let w = wigner(&DensityMatrix::from_pure(&cat), &grid).unwrap();
        assert!(w.min() < -0.05, "min W {}", w.min());
        assert_abs_diff_eq!(w.integral(), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn photon_statistics_examples() {
        let layout = SubsystemLayout::single_mode(40);
        let coh = make_state(&[FactorSpec::Coherent(c(2.0, 0.0))], &layout).unwrap().state;
        let st = photon_stats(&DensityMatrix::from_pure(&coh)).unwrap();
        assert_abs_diff_eq!(st.mean_photons[0].1, 4.0, epsilon = 1e-8);
        assert!(st.edge_population[0].1 < 1e-12);

        let fock3 = make_state(&[FactorSpec::Fock(3)], &layout).unwrap().state;
        let st = photon_stats(&DensityMatrix::from_pure(&fock3)).unwrap();
        assert_abs_diff_eq!(st.mean_photons[0].1, 3.0, epsilon = 1e-12);
        assert_relative_eq!(st.purity, 1.0, max_relative = 1e-12);

        // squeezed vacuum S(r=1.7)|0>: n-bar = sinh^2(1.7) within 1%
        let n = 140;
        let layout = SubsystemLayout::single_mode(n);
        let s = ideal_gate(&GateSpec::Squeeze { xi: c(1.7, 0.0), mode: 0 }, n).unwrap();
        let vac = make_state(&[FactorSpec::Fock(0)], &layout).unwrap().state;
        let sq = crate::fock::apply(&s, &vac).unwrap();
        let st = photon_stats(&DensityMatrix::from_pure(&sq)).unwrap();
        assert_relative_eq!(st.mean_photons[0].1, 1.7f64.sinh().powi(2), max_relative = 1e-2);
    }

    #[test]
    fn rotation_conserves_photon_statistics() {
        let n = 40;
        let layout = SubsystemLayout::single_mode(n);
        let coh = make_state(&[FactorSpec::Coherent(c(2.0, 0.0))], &layout).unwrap().state;
        let r = ideal_gate(&GateSpec::Rotation { theta: 1.234, mode: 0 }, n).unwrap();
        let rotated = crate::fock::apply(&r, &coh).unwrap();
        let s0 = photon_stats(&DensityMatrix::from_pure(&coh)).unwrap();
        let s1 = photon_stats(&DensityMatrix::from_pure(&rotated)).unwrap();
        assert_abs_diff_eq!(s0.mean_photons[0].1, s1.mean_photons[0].1, epsilon = 1e-10);
    }

    #[test]
    fn best_fit_and_gauge_rotation() {
        let n = 40;
        let layout = SubsystemLayout::single_mode(n);
        let alpha = c(0.0, 2.0);
        let coh = make_state(&[FactorSpec::Coherent(alpha)], &layout).unwrap().state;
        let rho = DensityMatrix::from_pure(&coh);
        let (fit, f) = best_fit_coherent(&rho).unwrap();
        assert!((fit - alpha).norm() < 1e-6);
        assert!(f > 1.0 - 1e-9);

        // rotate by 0.2 rad; the gauge search should find it
        let r = ideal_gate(&GateSpec::Rotation { theta: 0.2, mode: 0 }, n).unwrap();
        let rotated = crate::fock::apply(&r, &coh).unwrap();
        let (fbest, d) = max_fidelity_over_rotation(&DensityMatrix::from_pure(&rotated), &coh).unwrap();
        assert!(fbest > 1.0 - 1e-8);
        assert_abs_diff_eq!(d, -0.2, epsilon = 1e-5);
    }

    use crate::fock::QState;
    use ndarray::Array1;
}
