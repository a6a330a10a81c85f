//! Time evolution: unitary segment products, per-pulse rotating-frame
//! propagation with pure-dephasing damping, and a lab-frame integrator
//! used as a cross-check on frame approximations.
//!
//! Convention for states: unless stated otherwise, density matrices are
//! expressed in the drift eigenbasis and compose in the interaction
//! picture — each pulse window contributes its gate content plus a local
//! free-phase wrap, so diagonal observables and target fidelities can be
//! evaluated on the propagated matrix directly.

use crate::linalg::{c, cr, herm_eigen, is_hermitian, CMat, CVec, C64};
use crate::model::{CounterSet, HamiltonianModel};
use crate::pulses::{FrameRule, PulseSegment, PulseSequence};
use crate::qspace::QState;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynError {
    #[error("segment Hamiltonian is not Hermitian")]
    NotHermitian,
    #[error("segment duration must be positive")]
    BadDuration,
    #[error("jump operator must be diagonal for pure dephasing")]
    NonDiagonalJump,
    #[error("negative jump rate")]
    NegativeRate,
    #[error("overlapping pulses without a parallel group at t = {0} ns")]
    OverlapWithoutParallel(f64),
    #[error("unknown counter subsystem {0}")]
    UnknownSubsystem(String),
    #[error("unknown drive axis {0}")]
    UnknownAxis(String),
    #[error("lab-frame substep {substep} ns too coarse: need <= {required} ns (1/(20 f_max))")]
    SubstepTooCoarse { substep: f64, required: f64 },
    #[error("invalid state: {0}")]
    BadState(String),
}

/// Drift + drives + pure-dephasing jumps. Jump operators must be
/// Hermitian and diagonal (dephasing form); `rate` is 1/T2 in 1/ns and
/// the physical jump operator is √(2·rate)·op, so a single-quantum
/// coherence of the operator decays exactly as e^{−t/T2}.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub jumps: Vec<(CMat, f64)>,
}

impl LindbladModel {
    pub fn new(jumps: Vec<(CMat, f64)>) -> Result<Self, DynError> {
        for (op, rate) in &jumps {
            if *rate < 0.0 {
                return Err(DynError::NegativeRate);
            }
            for i in 0..op.nrows() {
                for j in 0..op.ncols() {
                    if i != j && op[(i, j)].norm() > 1e-12 {
                        return Err(DynError::NonDiagonalJump);
                    }
                    if i == j && op[(i, j)].im.abs() > 1e-12 {
                        return Err(DynError::NonDiagonalJump);
                    }
                }
            }
        }
        Ok(Self { jumps })
    }

    /// Coherence decay-rate matrix Γ_ij = Σ_k γ_k (l_i − l_j)² in the
    /// basis where the jump operators are diagonal.
    pub fn dephasing_matrix(&self, dim: usize) -> DMatrix<f64> {
        let mut g = DMatrix::<f64>::zeros(dim, dim);
        for (op, rate) in &self.jumps {
            for i in 0..dim {
                for j in 0..dim {
                    let d = op[(i, i)].re - op[(j, j)].re;
                    g[(i, j)] += rate * d * d;
                }
            }
        }
        g
    }

    pub fn is_trivial(&self) -> bool {
        self.jumps.iter().all(|(_, r)| *r == 0.0)
    }
}

/// Frame/integrator selection for `lindblad_propagate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationMode {
    LabFrame,
    RotatingWave,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationConfig {
    pub mode: PropagationMode,
    /// Lab-frame integration step (ns).
    pub substep_ns: f64,
    /// Maximum damping substep inside one rotating-frame window (ns).
    pub dt_max_ns: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { mode: PropagationMode::RotatingWave, substep_ns: 0.002, dt_max_ns: 0.5 }
    }
}

/// Time-ordered product of segment exponentials U = Π exp(−i H_j Δt_j).
pub fn propagate_unitary(segments: &[(CMat, f64)]) -> Result<CMat, DynError> {
    let n = segments.first().map(|(h, _)| h.nrows()).unwrap_or(0);
    let mut u = CMat::identity(n, n);
    for (h, dt) in segments {
        if *dt <= 0.0 {
            return Err(DynError::BadDuration);
        }
        if !is_hermitian(h, 1e-10) {
            return Err(DynError::NotHermitian);
        }
        u = crate::linalg::expm_minus_i_herm(h, *dt) * u;
    }
    Ok(u)
}

/// The effective static generator of one pulse window: the frame-shifted
/// diagonal plus the co-rotating drive terms of all active pulses, and
/// the frame vector used for the end-of-window phase wrap.
pub fn rotating_frame_generator(
    model: &HamiltonianModel,
    counters: &CounterSet,
    active: &[&PulseSegment],
) -> Result<(CMat, Vec<f64>), DynError> {
    let n = model.evals.len();
    let mut hp = CMat::from_fn(n, n, |i, j| if i == j { cr(model.evals[i]) } else { C64::new(0.0, 0.0) });
    let mut frame = model.evals.clone();
    for seg in active {
        let mt = model
            .drive_in_eigenbasis(&seg.axis)
            .ok_or_else(|| DynError::UnknownAxis(seg.axis.clone()))?;
        let w = seg.omega_rad_per_ns;
        let nc: Vec<f64> = match &seg.frame {
            FrameRule::RoundEnergy => model.evals.iter().map(|&e| (e / w).round()).collect(),
            FrameRule::Counter { subsystem, orientation } => {
                let raw = counters
                    .counters
                    .get(subsystem)
                    .ok_or_else(|| DynError::UnknownSubsystem(subsystem.clone()))?;
                raw.iter().map(|&v| orientation * v).collect()
            }
        };
        // co-rotating drive block A, oriented by the frame rule
        let mut a = CMat::zeros(n, n);
        match &seg.frame {
            FrameRule::RoundEnergy => {
                for i in 0..n {
                    for j in 0..n {
                        if (nc[i] - nc[j] - 1.0).abs() < 0.5 {
                            a[(i, j)] = mt[(i, j)];
                        }
                    }
                }
            }
            FrameRule::Counter { subsystem, .. } => {
                // keep counter-adjacent pairs that leave the other
                // subsystems untouched
                let others: Vec<&Vec<f64>> = counters
                    .counters
                    .iter()
                    .filter(|(name, _)| *name != subsystem)
                    .map(|(_, v)| v)
                    .collect();
                for i in 0..n {
                    for j in 0..n {
                        let dn = nc[i] - nc[j];
                        let other: f64 = others.iter().map(|v| (v[i] - v[j]).abs()).sum();
                        if (dn + 1.0).abs() < 1e-9 && other < 1e-9 {
                            a[(i, j)] = mt[(i, j)];
                        }
                    }
                }
            }
        }
        let eph = c(0.0, -seg.phase_rad).exp();
        let drive = (a.clone().map(|z| z * eph) + a.adjoint().map(|z| z * eph.conj()))
            .scale(seg.b1_gauss / 2.0);
        for i in 0..n {
            hp[(i, i)] -= cr(w * nc[i]);
            frame[i] -= w * nc[i];
        }
        hp += drive;
    }
    Ok((hp, frame))
}

fn apply_decay(
    rho: &mut CMat,
    v: &CMat,
    gamma: &DMatrix<f64>,
    h: f64,
) {
    // decay acts elementwise in the basis where the jump operators are
    // diagonal (the product basis); transform, damp, transform back
    let mut rp = v * rho.clone() * v.adjoint();
    for i in 0..rp.nrows() {
        for j in 0..rp.ncols() {
            rp[(i, j)] *= cr((-gamma[(i, j)] * h).exp());
        }
    }
    *rho = v.adjoint() * rp * v;
}

/// Propagates a density matrix (drift eigenbasis, interaction picture)
/// through a pulse program in the per-pulse rotating frame. Overlapping
/// segments are summed into one multi-tone generator; `gamma` (if any)
/// applies pure-dephasing damping in the product basis with substeps of
/// at most `dt_max` ns.
pub fn propagate_sequence(
    model: &HamiltonianModel,
    counters: &CounterSet,
    segments: &[PulseSegment],
    mut rho: CMat,
    gamma: Option<&DMatrix<f64>>,
    dt_max: f64,
) -> Result<CMat, DynError> {
    let mut bounds: Vec<f64> = segments
        .iter()
        .flat_map(|s| [s.t_start_ns, s.t_end_ns])
        .collect();
    bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bounds.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    for win in bounds.windows(2) {
        let (a, b) = (win[0], win[1]);
        let s = b - a;
        if s < 1e-12 {
            continue;
        }
        let active: Vec<&PulseSegment> = segments
            .iter()
            .filter(|r| r.t_start_ns <= a + 1e-9 && r.t_end_ns >= b - 1e-9)
            .collect();
        if active.len() > 1 && active.iter().any(|r| r.parallel_group.is_none()) {
            return Err(DynError::OverlapWithoutParallel(a));
        }
        let (hp, frame) = rotating_frame_generator(model, counters, &active)?;
        let (evals, q) = herm_eigen(&hp);
        let unitary_for = |t: f64| -> CMat {
            let d = CVec::from_iterator(evals.len(), evals.iter().map(|&l| c(0.0, -l * t).exp()));
            let mut qe = q.clone();
            for (jcol, dj) in d.iter().enumerate() {
                for i in 0..qe.nrows() {
                    qe[(i, jcol)] *= dj;
                }
            }
            qe * q.adjoint()
        };
        match gamma.filter(|g| g.amax() > 0.0) {
            Some(g) => {
                let nstep = (s / dt_max).ceil().max(1.0) as usize;
                let h = s / nstep as f64;
                let u = unitary_for(h);
                for _ in 0..nstep {
                    rho = &u * rho * u.adjoint();
                    apply_decay(&mut rho, &model.evecs, g, h);
                }
            }
            None => {
                let u = unitary_for(s);
                rho = &u * rho * u.adjoint();
            }
        }
        // local-time wrap back to the interaction picture
        for i in 0..rho.nrows() {
            for j in 0..rho.ncols() {
                rho[(i, j)] *= c(0.0, (frame[i] - frame[j]) * s).exp();
            }
        }
    }
    Ok(rho)
}

/// Lindblad propagation of a state through a pulse program. The state
/// and the returned density matrix live in the drift eigenbasis
/// (interaction picture, see module docs). Lab-frame mode integrates the
/// cosine drive directly and is restricted to dephasing-free programs.
pub fn lindblad_propagate(
    model: &HamiltonianModel,
    counters: &CounterSet,
    lind: &LindbladModel,
    rho0: &QState,
    sequence: &PulseSequence,
    config: &PropagationConfig,
) -> Result<CMat, DynError> {
    rho0.validate().map_err(|e| DynError::BadState(e.to_string()))?;
    let rho = rho0.density();
    match config.mode {
        PropagationMode::RotatingWave => {
            let gamma = if lind.is_trivial() { None } else { Some(lind.dephasing_matrix(rho.nrows())) };
            propagate_sequence(model, counters, &sequence.segments, rho, gamma.as_ref(), config.dt_max_ns)
        }
        PropagationMode::LabFrame => {
            if !lind.is_trivial() {
                return Err(DynError::BadState(
                    "lab-frame mode supports dephasing-free programs only".into(),
                ));
            }
            let psi = match rho0 {
                QState::Ket(k) => model.evecs.clone() * k,
                QState::Density(_) => {
                    return Err(DynError::BadState("lab-frame mode requires a ket".into()))
                }
            };
            let (psi_prod, t) = propagate_lab_frame(model, &sequence.segments, psi, config.substep_ns)?;
            let psi_i = to_interaction_picture(model, &psi_prod, t);
            Ok(&psi_i * psi_i.adjoint())
        }
    }
}

/// Direct lab-frame integration of a ket (product basis) under
/// H0 + B1·cos(ωt + φ)·M, Strang-split per substep. The carrier is
/// phase-coherent in absolute time. Returns the product-basis ket and
/// the total duration.
pub fn propagate_lab_frame(
    model: &HamiltonianModel,
    segments: &[PulseSegment],
    mut psi: CVec,
    substep: f64,
) -> Result<(CVec, f64), DynError> {
    let n = model.evals.len();
    let f_max = segments
        .iter()
        .map(|s| s.omega_rad_per_ns)
        .chain(model.evals.iter().map(|&e| e.abs() * 2.0))
        .fold(0.0f64, f64::max)
        / (2.0 * std::f64::consts::PI);
    let required = 1.0 / (20.0 * f_max);
    if substep > required {
        return Err(DynError::SubstepTooCoarse { substep, required });
    }
    let mut t_end_total = 0.0f64;
    for seg in segments {
        let mt_prod = model
            .drives
            .iter()
            .find(|(name, _)| *name == seg.axis)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| DynError::UnknownAxis(seg.axis.clone()))?;
        let (mev, mq) = herm_eigen(&mt_prod);
        let tau = seg.duration();
        if tau <= 0.0 {
            continue;
        }
        let nstep = (tau / substep).ceil() as usize;
        let h = tau / nstep as f64;
        // half-step free propagator in the product basis
        let half = {
            let d = CVec::from_iterator(n, model.evals.iter().map(|&e| c(0.0, -e * h / 2.0).exp()));
            let mut ve = model.evecs.clone();
            for (jcol, dj) in d.iter().enumerate() {
                for i in 0..n {
                    ve[(i, jcol)] *= dj;
                }
            }
            ve * model.evecs.adjoint()
        };
        for k in 0..nstep {
            let t_mid = seg.t_start_ns + (k as f64 + 0.5) * h;
            let kick = seg.b1_gauss * (seg.omega_rad_per_ns * t_mid + seg.phase_rad).cos() * h;
            psi = &half * psi;
            // exp(−i·kick·M) via the drive eigenbasis
            let mut y = mq.adjoint() * &psi;
            for (i, yi) in y.iter_mut().enumerate() {
                *yi *= c(0.0, -mev[i] * kick).exp();
            }
            psi = &mq * y;
            psi = &half * psi;
        }
        t_end_total = t_end_total.max(seg.t_end_ns);
    }
    Ok((psi, t_end_total))
}

/// Rotates a product-basis lab-frame ket at time `t` into the drift
/// eigenbasis interaction picture used by `propagate_sequence`.
pub fn to_interaction_picture(model: &HamiltonianModel, psi_product: &CVec, t: f64) -> CVec {
    let mut y = model.evecs.adjoint() * psi_product;
    for (i, yi) in y.iter_mut().enumerate() {
        *yi *= c(0.0, model.evals[i] * t).exp();
    }
    y
}
