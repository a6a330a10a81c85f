//! Gate-to-pulse compilation: planar rotations as resonant square pulses,
//! the five-pulse qubit–qudit entangling sequence, the fifteen-pulse
//! two-qudit sequence with an ancilla-mediated controlled phase, a Givens
//! decomposition of 4×4 unitaries into adjacent-level rotations, and the
//! compiled measurement-basis sequences for the four-outcome inequality.

use crate::linalg::{c, cr, is_unitary, max_abs, CMat, C64};
use crate::model::{trimer_index, CounterSet, HamiltonianModel, ModelError};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PulseError {
    #[error("forbidden transition: zero drive matrix element between {0} and {1}")]
    ForbiddenTransition(usize, usize),
    #[error("input matrix is not unitary (max deviation {0:.2e})")]
    NotUnitary(f64),
    #[error("decomposition verification failed (off-diagonal residue {0:.2e})")]
    VerificationFailed(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown counter subsystem {0}")]
    UnknownSubsystem(String),
}

/// How the per-pulse rotating frame assigns an integer winding number to
/// each eigenstate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FrameRule {
    /// Winding number `round(E_k / omega)`; suited to sequential pulses on
    /// a system with a single driven ladder at a time.
    RoundEnergy,
    /// Winding number = `orientation ×` a named subsystem excitation
    /// counter; the drive couples only counter-adjacent pairs with the
    /// other subsystems unchanged. Supports simultaneous tones.
    Counter { subsystem: String, orientation: f64 },
}

/// A single resonant square pulse. Times in ns, amplitude in gauss,
/// carrier in rad/ns, phase in radians.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseSegment {
    pub b1_gauss: f64,
    pub omega_rad_per_ns: f64,
    pub phase_rad: f64,
    pub t_start_ns: f64,
    pub t_end_ns: f64,
    /// Drive-operator label in the model (e.g. "y").
    pub axis: String,
    /// Pulses sharing a group run simultaneously by construction.
    pub parallel_group: Option<String>,
    pub frame: FrameRule,
}

impl PulseSegment {
    pub fn duration(&self) -> f64 {
        self.t_end_ns - self.t_start_ns
    }
}

/// An ordered pulse program; serializable for inspection and replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseSequence {
    pub schema_version: String,
    pub segments: Vec<PulseSegment>,
}

pub const PULSE_SCHEMA_VERSION: &str = "1";

impl PulseSequence {
    pub fn new(segments: Vec<PulseSegment>) -> Self {
        Self { schema_version: PULSE_SCHEMA_VERSION.into(), segments }
    }

    /// End time of the last segment (ns).
    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.t_end_ns).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Rotation in the plane of two levels: angle θ about an axis set by φ.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlanarRotation {
    /// Product-basis labels of the two levels.
    pub x: usize,
    pub y: usize,
    pub theta: f64,
    pub phi: f64,
}

/// Relative phase gate between two levels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseGate {
    pub x: usize,
    pub y: usize,
    pub alpha: f64,
}

/// Controlled phase on one two-qudit component, realized as a 2π ancilla
/// rotation conditioned on the component |μ, ν⟩.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ControlledZSpec {
    pub mu: usize,
    pub nu: usize,
}

/// Matrix of a planar rotation on levels (x, y) of a d-level system:
/// diagonal cos(θ/2) on the pair, off-diagonal ±sin(θ/2)e^{±iφ}.
pub fn planar(d: usize, x: usize, y: usize, theta: f64, phi: f64) -> CMat {
    let mut u = CMat::identity(d, d);
    let (ch, sh) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    u[(x, x)] = cr(ch);
    u[(y, y)] = cr(ch);
    u[(y, x)] = c(0.0, phi).exp().scale(sh);
    u[(x, y)] = -c(0.0, -phi).exp().scale(sh);
    u
}

/// Orientation sign that makes the named counter increase with energy
/// along the addressed eigenstate transition.
fn counter_orientation(
    counters: &CounterSet,
    subsystem: &str,
    model: &HamiltonianModel,
    kx: usize,
    ky: usize,
) -> Result<f64, PulseError> {
    let raw = counters
        .counters
        .get(subsystem)
        .ok_or_else(|| PulseError::UnknownSubsystem(subsystem.into()))?;
    Ok(if (raw[ky] - raw[kx]) * (model.evals[ky] - model.evals[kx]) > 0.0 { 1.0 } else { -1.0 })
}

/// Compiles one planar rotation into a resonant square pulse. The carrier
/// is the transition frequency, the duration θ/(B1·|⟨y|M|x⟩|), and the
/// pulse phase is taken verbatim from the rotation.
pub fn compile_rotation(
    model: &HamiltonianModel,
    rot: &PlanarRotation,
    b1: f64,
    axis: &str,
    t_start: f64,
    frame: FrameRule,
) -> Result<PulseSegment, PulseError> {
    let kx = model.eigenstate(rot.x)?;
    let ky = model.eigenstate(rot.y)?;
    let mt = model
        .drive_in_eigenbasis(axis)
        .ok_or_else(|| PulseError::UnknownSubsystem(axis.into()))?;
    let me = mt[(ky, kx)].norm();
    if me < 1e-14 {
        return Err(PulseError::ForbiddenTransition(rot.x, rot.y));
    }
    let omega = (model.evals[ky] - model.evals[kx]).abs();
    let tau = rot.theta / (b1 * me);
    Ok(PulseSegment {
        b1_gauss: b1,
        omega_rad_per_ns: omega,
        phase_rad: rot.phi,
        t_start_ns: t_start,
        t_end_ns: t_start + tau,
        axis: axis.into(),
        parallel_group: None,
        frame,
    })
}

/// Dimer product-basis index: qubit (0 = up, 1 = down) × nuclear level
/// counted downward from m = 5/2.
fn dimer_pidx(q: usize, nuc_level: usize) -> usize {
    q * 6 + nuc_level
}

/// Five-pulse sequence preparing the qubit–qudit entangled state from the
/// dimer ground state |↓, −5/2⟩: two nuclear climbs, a conditional qubit
/// rotation, and two more nuclear climbs on the qubit-up branch.
pub fn prep_chsh_sequence(model: &HamiltonianModel, b1: f64) -> Result<PulseSequence, PulseError> {
    let th_cond = 2.0 * (2.0f64 / 3.0).sqrt().asin();
    // (x, y, theta, phi) with nuclear levels counted 0 = 5/2 .. 5 = -5/2
    let rots = [
        (dimer_pidx(1, 5), dimer_pidx(1, 4), PI, PI),
        (dimer_pidx(1, 4), dimer_pidx(1, 3), 2.0 * PI / 3.0, PI),
        (dimer_pidx(1, 3), dimer_pidx(0, 3), th_cond, PI),
        (dimer_pidx(0, 3), dimer_pidx(0, 2), PI / 2.0, 0.0),
        (dimer_pidx(0, 2), dimer_pidx(0, 1), PI, 0.0),
    ];
    let mut segs = Vec::with_capacity(5);
    let mut t = 0.0;
    for (x, y, theta, phi) in rots {
        let seg = compile_rotation(
            model,
            &PlanarRotation { x, y, theta, phi },
            b1,
            "y",
            t,
            FrameRule::RoundEnergy,
        )?;
        t = seg.t_end_ns;
        segs.push(seg);
    }
    Ok(PulseSequence::new(segs))
}

fn counter_frame(
    model: &HamiltonianModel,
    counters: &CounterSet,
    subsystem: &str,
    kx: usize,
    ky: usize,
) -> Result<FrameRule, PulseError> {
    Ok(FrameRule::Counter {
        subsystem: subsystem.into(),
        orientation: counter_orientation(counters, subsystem, model, kx, ky)?,
    })
}

/// Fifteen-pulse sequence preparing the maximally entangled two-qudit
/// state on the trimer from |−3/2, ↓, −3/2⟩: three rotations on qudit 1,
/// then three ancilla-mediated controlled blocks acting on qudit 3.
/// `b_lo` drives everything except the qudit-3 π/2 rotations, which use
/// `b_hi`.
pub fn prep_cglmp_sequence(
    model: &HamiltonianModel,
    counters: &CounterSet,
    b_lo: f64,
    b_hi: f64,
) -> Result<PulseSequence, PulseError> {
    let th_cond = 2.0 * (2.0f64 / 3.0).sqrt().asin();
    // (subsystem, x product idx, y product idx, theta, phi, amplitude)
    let q1 = |f: usize, to: usize, th: f64, ph: f64| {
        ("q1", trimer_index(f, true, 3), trimer_index(to, true, 3), th, ph, b_lo)
    };
    let q3 = |f: usize, to: usize, th: f64, ph: f64, b: f64| {
        ("q3", trimer_index(3, true, f), trimer_index(3, true, to), th, ph, b)
    };
    let w = |spec: ControlledZSpec| {
        (
            "anc",
            trimer_index(spec.mu, true, spec.nu),
            trimer_index(spec.mu, false, spec.nu),
            2.0 * PI,
            0.0,
            b_lo,
        )
    };
    let mut list: Vec<(&str, usize, usize, f64, f64, f64)> = vec![
        q1(3, 2, 2.0 * PI / 3.0, PI),
        q1(2, 1, th_cond, PI),
        q1(1, 0, PI / 2.0, PI),
    ];
    list.extend([
        q3(3, 2, PI / 2.0, PI, b_hi),
        w(ControlledZSpec { mu: 0, nu: 2 }),
        q3(3, 2, PI / 2.0, 0.0, b_hi),
        q3(2, 1, PI, 0.0, b_lo),
        q3(1, 0, PI, PI, b_lo),
    ]);
    list.extend([
        q3(3, 2, PI / 2.0, PI, b_hi),
        w(ControlledZSpec { mu: 1, nu: 2 }),
        q3(3, 2, PI / 2.0, 0.0, b_hi),
        q3(2, 1, PI, 0.0, b_lo),
    ]);
    // final block: the π/2 pair carries the opposite phase pattern
    list.extend([
        q3(3, 2, PI / 2.0, 0.0, b_hi),
        w(ControlledZSpec { mu: 2, nu: 2 }),
        q3(3, 2, PI / 2.0, PI, b_hi),
    ]);

    let mut segs = Vec::with_capacity(list.len());
    let mut t = 0.0;
    for (sub, x, y, theta, phi, b) in list {
        let kx = model.eigenstate(x)?;
        let ky = model.eigenstate(y)?;
        let frame = counter_frame(model, counters, sub, kx, ky)?;
        let seg =
            compile_rotation(model, &PlanarRotation { x, y, theta, phi }, b, "y", t, frame)?;
        t = seg.t_end_ns;
        segs.push(seg);
    }
    Ok(PulseSequence::new(segs))
}

/// Output of the Givens-style triangularization of a 4×4 unitary:
/// `W = e^{iλ} P(α12) P(α23) P(α34) · U_6⁻¹ ⋯ U_1⁻¹` with planar
/// rotations U_k listed in elimination order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Su4Decomposition {
    /// (x, y, θ, β) with x < y, θ/2 ∈ [0, π/2], β ∈ (−π, π].
    pub rotations: Vec<(usize, usize, f64, f64)>,
    /// Relative phases (α12, α23, α34) of the diagonal remainder.
    pub alphas: [f64; 3],
    pub global_phase: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI) % (2.0 * PI);
    if x < 0.0 {
        x += 2.0 * PI;
    }
    x - PI
}

/// Triangularizes `w` by right-multiplying planar rotations that zero the
/// below-diagonal entries column by column.
pub fn decompose_su4(w: &CMat) -> Result<Su4Decomposition, PulseError> {
    if !is_unitary(w, 1e-10) {
        let dev = max_abs(&(w.adjoint() * w - CMat::identity(4, 4)));
        return Err(PulseError::NotUnitary(dev));
    }
    let mut m = w.clone();
    let seq: [(usize, usize); 6] = [(2, 3), (1, 3), (0, 3), (1, 2), (0, 2), (0, 1)];
    let rows: [usize; 6] = [3, 3, 3, 2, 2, 1];
    let mut rotations = Vec::with_capacity(6);
    for (&(x, y), &r) in seq.iter().zip(rows.iter()) {
        let a = m[(r, x)];
        let b = m[(r, y)];
        let (th2, beta) = if a.norm() < 1e-15 {
            (0.0, 0.0)
        } else if b.norm() < 1e-15 {
            (PI / 2.0, wrap_angle(PI + a.arg()))
        } else {
            (((a / b).norm()).atan(), wrap_angle(PI + (a / b).arg()))
        };
        let u = planar(4, x, y, 2.0 * th2, beta);
        m = &m * u;
        rotations.push((x, y, 2.0 * th2, beta));
    }
    let d: Vec<C64> = (0..4).map(|i| m[(i, i)]).collect();
    let lam = (d[0] * d[1] * d[2] * d[3]).arg() / 4.0;
    let a12 = wrap_angle(d[0].arg() - lam);
    let a23 = wrap_angle(d[1].arg() - lam + a12);
    let a34 = wrap_angle(d[2].arg() - lam + a23);
    Ok(Su4Decomposition { rotations, alphas: [a12, a23, a34], global_phase: lam })
}

/// Rebuilds the unitary from its decomposition (the binding round-trip
/// contract of `decompose_su4`).
pub fn recompose_su4(dec: &Su4Decomposition) -> CMat {
    let [a12, a23, a34] = dec.alphas;
    let diag = |v: [f64; 4]| {
        CMat::from_fn(4, 4, |i, j| if i == j { c(0.0, v[i]).exp() } else { C64::new(0.0, 0.0) })
    };
    let mut w = diag([a12, -a12, 0.0, 0.0]) * diag([0.0, a23, -a23, 0.0]) * diag([0.0, 0.0, a34, -a34]);
    w = w.map(|z| z * c(0.0, dec.global_phase).exp());
    for &(x, y, th, be) in dec.rotations.iter().rev() {
        w = w * planar(4, x, y, th, be).adjoint();
    }
    w
}

/// Expresses a rotation between arbitrary levels x < y as a time-ordered
/// list of adjacent-level rotations: conjugation by π swaps moves the
/// upper level down until the pair is adjacent.
pub fn expand_adjacent(x: usize, y: usize, theta: f64, beta: f64) -> Vec<(usize, usize, f64, f64)> {
    if y == x + 1 {
        return vec![(x, y, theta, beta)];
    }
    let mut out = vec![(y - 1, y, PI, PI)];
    out.extend(expand_adjacent(x, y - 1, theta, beta));
    out.push((y - 1, y, PI, 0.0));
    out
}

/// Compiles a 4×4 unitary into a time-ordered list of adjacent-level
/// planar rotations whose product equals `diag × w` for some diagonal —
/// exact for any population measurement that follows. Verifies the
/// product before returning.
pub fn compile_unitary(w: &CMat) -> Result<Vec<(usize, usize, f64, f64)>, PulseError> {
    let dec = decompose_su4(w)?;
    let mut seq = Vec::new();
    for &(x, y, th, be) in &dec.rotations {
        // the inverse rotation is the same rotation with β shifted by π
        seq.extend(expand_adjacent(x, y, th, wrap_angle(be + PI)));
    }
    let mut p = CMat::identity(4, 4);
    for &(x, y, th, be) in &seq {
        p = planar(4, x, y, th, be) * p;
    }
    let r = &p * w.adjoint();
    let mut offdiag = 0.0f64;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                offdiag = offdiag.max(r[(i, j)].norm());
            }
        }
    }
    if offdiag > 1e-9 {
        return Err(PulseError::VerificationFailed(offdiag));
    }
    Ok(seq)
}

/// Measurement-basis unitary for the first party: DFT-like with setting α.
pub fn cglmp_ua(alpha: f64) -> CMat {
    CMat::from_fn(4, 4, |k, l| c(0.0, 2.0 * PI * l as f64 * (alpha + k as f64) / 4.0).exp().scale(0.5))
}

/// Measurement-basis unitary for the second party with setting β.
pub fn cglmp_ub(beta: f64) -> CMat {
    CMat::from_fn(4, 4, |k, l| c(0.0, 2.0 * PI * l as f64 * (beta - k as f64) / 4.0).exp().scale(0.5))
}

/// Compiles one adjacent-level rotation on qudit 1 or 3 of the trimer
/// into a pulse whose carrier and Rabi rate are branch-averaged over the
/// other qudit's four levels (ancilla down throughout). The pulse phase
/// maps the abstract rotation phase β through the engine's realized-gate
/// convention, which depends on whether level y sits below level x in
/// energy.
#[allow(clippy::too_many_arguments)]
pub fn qudit_measure_pulse(
    model: &HamiltonianModel,
    counters: &CounterSet,
    subsystem: &str,
    lx: usize,
    ly: usize,
    theta: f64,
    beta: f64,
    b1: f64,
    t_start: f64,
    parallel_group: &str,
) -> Result<PulseSegment, PulseError> {
    let pairs: Vec<(usize, usize)> = (0..4)
        .map(|j| {
            let (px, py) = if subsystem == "q1" {
                (trimer_index(lx, true, j), trimer_index(ly, true, j))
            } else {
                (trimer_index(j, true, lx), trimer_index(j, true, ly))
            };
            Ok((model.eigenstate(px)?, model.eigenstate(py)?))
        })
        .collect::<Result<_, PulseError>>()?;
    let mt = model.drive_in_eigenbasis("y").expect("y drive present");
    let mut w_sum = 0.0;
    let mut m_sum = 0.0;
    let mut arg_m = 0.0;
    for (idx, &(a, b)) in pairs.iter().enumerate() {
        let (hi, lo) = if model.evals[a] > model.evals[b] { (a, b) } else { (b, a) };
        w_sum += (model.evals[b] - model.evals[a]).abs();
        let me = mt[(hi, lo)];
        m_sum += me.norm();
        if idx == 0 {
            arg_m = me.arg();
        }
    }
    let omega = w_sum / 4.0;
    let me_avg = m_sum / 4.0;
    if me_avg < 1e-14 {
        return Err(PulseError::ForbiddenTransition(lx, ly));
    }
    let (a0, b0) = pairs[0];
    // realized gate: U[hiE, loE] = sin(θ/2) e^{i(φ + arg M − π/2)}
    let ly_is_lower_energy = model.evals[b0] < model.evals[a0];
    let phase = if ly_is_lower_energy {
        1.5 * PI - beta - arg_m
    } else {
        beta - arg_m + 0.5 * PI
    };
    let tau = theta / (b1 * me_avg);
    let frame = counter_frame(model, counters, subsystem, a0, b0)?;
    Ok(PulseSegment {
        b1_gauss: b1,
        omega_rad_per_ns: omega,
        phase_rad: phase,
        t_start_ns: t_start,
        t_end_ns: t_start + tau,
        axis: "y".into(),
        parallel_group: Some(parallel_group.into()),
        frame,
    })
}

/// Compiles one party's 4×4 measurement unitary into a pulse train on the
/// given trimer qudit, starting at t = 0.
pub fn side_measurement_sequence(
    model: &HamiltonianModel,
    counters: &CounterSet,
    w: &CMat,
    subsystem: &str,
    b1: f64,
) -> Result<Vec<PulseSegment>, PulseError> {
    let seq = compile_unitary(w)?;
    let mut segs = Vec::new();
    let mut t = 0.0;
    for (x, y, th, be) in seq {
        if th.abs() < 1e-12 {
            continue;
        }
        let seg =
            qudit_measure_pulse(model, counters, subsystem, x, y, th, be, b1, t, subsystem)?;
        t = seg.t_end_ns;
        segs.push(seg);
    }
    Ok(segs)
}

/// The four measurement pulse programs (one per setting pair (i, j)),
/// each running the party-1 train on qudit 1 in parallel with the party-2
/// train on qudit 3.
pub fn cglmp_measurement_sequences(
    model: &HamiltonianModel,
    counters: &CounterSet,
    b1: f64,
) -> Result<[[PulseSequence; 2]; 2], PulseError> {
    let uas = [cglmp_ua(0.0), cglmp_ua(0.5)];
    let ubs = [cglmp_ub(0.25), cglmp_ub(-0.25)];
    let make = |i: usize, j: usize| -> Result<PulseSequence, PulseError> {
        let mut segs = side_measurement_sequence(model, counters, &uas[i], "q1", b1)?;
        segs.extend(side_measurement_sequence(model, counters, &ubs[j], "q3", b1)?);
        Ok(PulseSequence::new(segs))
    };
    Ok([[make(0, 0)?, make(0, 1)?], [make(1, 0)?, make(1, 1)?]])
}
