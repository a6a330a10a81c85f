//! Drift Hamiltonians for the two studied molecules: an electro-nuclear
//! dimer (electronic spin 1/2 coupled to a nuclear spin 5/2, dimension 12)
//! and a three-spin trimer (3/2 ⊗ 1/2 ⊗ 3/2, dimension 32).
//!
//! Internal energy unit: angular frequency in rad/ns. Couplings quoted in
//! MHz or meV are plain (h-based) frequencies and are converted on build.

use crate::linalg::{cr, herm_eigen, CMat, C64};
use crate::qspace::{embed, spin_operators, SpinSystem};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 2π, for converting plain frequency to angular frequency.
pub const TWO_PI: f64 = std::f64::consts::TAU;
/// Bohr magneton over h, GHz per tesla.
pub const MU_B_GHZ_PER_T: f64 = 13.996_244_9;
/// Nuclear magneton over h, GHz per tesla.
pub const MU_N_GHZ_PER_T: f64 = 7.622_593_2e-3;
/// One meV as a plain frequency, GHz.
pub const MEV_GHZ: f64 = 241.799_050;

/// Bohr magneton in rad/ns per gauss (1 T = 1e4 G; 1 GHz = 2π rad/ns).
pub const MU_B_RAD_NS_PER_G: f64 = MU_B_GHZ_PER_T * TWO_PI * 1e-4;
/// Nuclear magneton in rad/ns per gauss.
pub const MU_N_RAD_NS_PER_G: f64 = MU_N_GHZ_PER_T * TWO_PI * 1e-4;
/// One meV in rad/ns.
pub const MEV_RAD_NS: f64 = MEV_GHZ * TWO_PI;
/// One MHz in rad/ns.
pub const MHZ_RAD_NS: f64 = TWO_PI * 1e-3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("no eigenstate with dominant product character at index {0}")]
    AmbiguousLabel(usize),
    #[error("empty or invalid field range")]
    BadRange,
}

/// Parameters of the electro-nuclear dimer. Defaults are the measured
/// values for the studied compound.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimerParams {
    /// Electronic g-factor, (x, y, z).
    pub g_s: [f64; 3],
    /// Nuclear g-factor (dimensionless).
    pub g_i: f64,
    /// Longitudinal hyperfine coupling, MHz.
    pub a_par_mhz: f64,
    /// Transverse hyperfine coupling, MHz.
    pub a_perp_mhz: f64,
    /// Quadrupole coupling, MHz.
    pub p_mhz: f64,
    /// Static field along z, tesla.
    pub bz_tesla: f64,
}

impl Default for DimerParams {
    fn default() -> Self {
        Self {
            g_s: [2.9, 2.9, 4.3],
            g_i: -0.2592,
            a_par_mhz: -883.0,
            a_perp_mhz: -628.0,
            p_mhz: -66.0,
            bz_tesla: 0.3,
        }
    }
}

/// Parameters of the three-spin trimer. Defaults are the characterized values for the target compound.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrimerParams {
    /// g-factor of qudit 1 (spin 3/2).
    pub g1: f64,
    /// z g-factor of the ancilla (spin 1/2).
    pub g2z: f64,
    /// Transverse g-factor of the ancilla (drives only).
    pub g2_perp: f64,
    /// g-factor of qudit 3 (spin 3/2).
    pub g3: f64,
    /// Exchange coupling between sites 1 and 2, meV.
    pub j12_mev: f64,
    /// Exchange coupling between sites 2 and 3, meV.
    pub j23_mev: f64,
    /// Axial zero-field splitting on site 1, meV.
    pub d1_mev: f64,
    /// Axial zero-field splitting on site 3, meV.
    pub d3_mev: f64,
    /// Static field along z, tesla.
    pub bz_tesla: f64,
}

impl Default for TrimerParams {
    fn default() -> Self {
        Self {
            g1: 2.0,
            g2z: 4.3,
            g2_perp: 2.9,
            g3: 1.95,
            j12_mev: 5e-3,
            j23_mev: 3e-3,
            d1_mev: -3e-2,
            d3_mev: -2e-2,
            bz_tesla: 1.3,
        }
    }
}

/// A drift Hamiltonian together with its drive (control) operators and a
/// cached eigendecomposition with product-character labels.
#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    pub system: SpinSystem,
    /// Drift, rad/ns, in the product basis.
    pub h0: CMat,
    /// Labeled drive operators in the product basis, rad/ns per gauss.
    pub drives: Vec<(String, CMat)>,
    /// Eigenvalues, ascending, rad/ns.
    pub evals: Vec<f64>,
    /// Eigenvector columns; gauge-fixed so the dominant component of each
    /// eigenvector is real positive.
    pub evecs: CMat,
    /// `label[p]` = eigenstate index whose dominant product component is `p`.
    pub labels: Vec<usize>,
    /// Dominant-component weight |⟨p|v⟩|² per product index.
    pub label_weight: Vec<f64>,
}

impl HamiltonianModel {
    pub fn new(system: SpinSystem, h0: CMat, drives: Vec<(String, CMat)>) -> Result<Self, ModelError> {
        let n = system.total_dim;
        assert_eq!(h0.nrows(), n);
        let (evals, mut evecs) = herm_eigen(&h0);
        let mut labels = vec![usize::MAX; n];
        let mut label_weight = vec![0.0; n];
        for k in 0..n {
            let (mut imax, mut best) = (0usize, 0.0f64);
            for i in 0..n {
                let w = evecs[(i, k)].norm_sqr();
                if w > best {
                    best = w;
                    imax = i;
                }
            }
            // gauge: dominant component real positive
            let ph = evecs[(imax, k)] / cr(evecs[(imax, k)].norm());
            for i in 0..n {
                let v = evecs[(i, k)] * ph.conj();
                evecs[(i, k)] = v;
            }
            labels[imax] = k;
            label_weight[imax] = best;
        }
        Ok(Self { system, h0, drives, evals, evecs, labels, label_weight })
    }

    /// Eigenstate index labeled by dominant product-basis character.
    /// Errors if no eigenstate has > 0.5 weight on that product state.
    pub fn eigenstate(&self, product_index: usize) -> Result<usize, ModelError> {
        let k = *self
            .labels
            .get(product_index)
            .ok_or(ModelError::AmbiguousLabel(product_index))?;
        if k == usize::MAX || self.label_weight[product_index] <= 0.5 {
            return Err(ModelError::AmbiguousLabel(product_index));
        }
        Ok(k)
    }

    /// A drive operator transformed to the eigenbasis.
    pub fn drive_in_eigenbasis(&self, axis: &str) -> Option<CMat> {
        self.drives
            .iter()
            .find(|(name, _)| name == axis)
            .map(|(_, m)| self.evecs.adjoint() * m * &self.evecs)
    }
}

/// Signed transition frequency `E_j - E_i` (rad/ns) and the drive matrix
/// element `⟨j|M|i⟩` between two labeled eigenstates.
pub fn transition(
    model: &HamiltonianModel,
    i: usize,
    j: usize,
    axis: &str,
) -> Result<(f64, C64), ModelError> {
    let ei = model.eigenstate(i)?;
    let ej = model.eigenstate(j)?;
    let m = model
        .drive_in_eigenbasis(axis)
        .ok_or_else(|| ModelError::BadParam(format!("unknown drive axis {axis}")))?;
    Ok((model.evals[ej] - model.evals[ei], m[(ej, ei)]))
}

/// Builds the 12-dimensional dimer model (qubit first, nucleus second).
pub fn build_dimer(p: &DimerParams) -> Result<HamiltonianModel, ModelError> {
    if p.bz_tesla < 0.0 {
        return Err(ModelError::BadParam("bz_tesla must be >= 0".into()));
    }
    let system = SpinSystem::new(&[0.5, 2.5]).expect("static spins");
    let (sx, sy, sz) = spin_operators(0.5).unwrap();
    let (ix, iy, iz) = spin_operators(2.5).unwrap();
    let e = |site: usize, op: &CMat| embed(&system, site, op).unwrap();
    let bz_g = p.bz_tesla * 1e4;

    let mut h0 = e(0, &sz).scale(p.g_s[2] * MU_B_RAD_NS_PER_G * bz_g);
    h0 += e(1, &iz).scale(p.g_i * MU_N_RAD_NS_PER_G * bz_g);
    let two = |a: &CMat, b: &CMat| embed(&system, 0, a).unwrap() * embed(&system, 1, b).unwrap();
    h0 += (two(&sx, &ix) + two(&sy, &iy)).scale(p.a_perp_mhz * MHZ_RAD_NS);
    h0 += two(&sz, &iz).scale(p.a_par_mhz * MHZ_RAD_NS);
    h0 += e(1, &(&iz * &iz)).scale(p.p_mhz * MHZ_RAD_NS);

    // Magnetic-moment drive along y, per gauss; both spins couple through
    // their full moments (transverse electronic g).
    let my = e(0, &sy).scale(p.g_s[1] * MU_B_RAD_NS_PER_G)
        + e(1, &iy).scale(p.g_i * MU_N_RAD_NS_PER_G);
    HamiltonianModel::new(system, h0, vec![("y".into(), my)])
}

/// Builds the 32-dimensional trimer model (site order 1, 2, 3).
pub fn build_trimer(p: &TrimerParams) -> Result<HamiltonianModel, ModelError> {
    if p.bz_tesla < 0.0 {
        return Err(ModelError::BadParam("bz_tesla must be >= 0".into()));
    }
    let system = SpinSystem::new(&[1.5, 0.5, 1.5]).expect("static spins");
    let s1 = spin_operators(1.5).unwrap();
    let s2 = spin_operators(0.5).unwrap();
    let s3 = spin_operators(1.5).unwrap();
    let e = |site: usize, op: &CMat| embed(&system, site, op).unwrap();
    let bz_g = p.bz_tesla * 1e4;

    let mut h0 = e(0, &s1.2).scale(p.g1 * MU_B_RAD_NS_PER_G * bz_g);
    h0 += e(1, &s2.2).scale(p.g2z * MU_B_RAD_NS_PER_G * bz_g);
    h0 += e(2, &s3.2).scale(p.g3 * MU_B_RAD_NS_PER_G * bz_g);
    let ops1 = [&s1.0, &s1.1, &s1.2];
    let ops2 = [&s2.0, &s2.1, &s2.2];
    let ops3 = [&s3.0, &s3.1, &s3.2];
    for a in 0..3 {
        h0 += (e(0, ops1[a]) * e(1, ops2[a])).scale(p.j12_mev * MEV_RAD_NS);
        h0 += (e(1, ops2[a]) * e(2, ops3[a])).scale(p.j23_mev * MEV_RAD_NS);
    }
    h0 += e(0, &(&s1.2 * &s1.2)).scale(p.d1_mev * MEV_RAD_NS);
    h0 += e(2, &(&s3.2 * &s3.2)).scale(p.d3_mev * MEV_RAD_NS);

    let my = e(0, &s1.1).scale(p.g1 * MU_B_RAD_NS_PER_G)
        + e(1, &s2.1).scale(p.g2_perp * MU_B_RAD_NS_PER_G)
        + e(2, &s3.1).scale(p.g3 * MU_B_RAD_NS_PER_G);
    HamiltonianModel::new(system, h0, vec![("y".into(), my)])
}

/// Product-basis index helpers (descending-m ordering per site).
pub fn dimer_index(qubit_down: bool, m_times_2: i32) -> usize {
    // nucleus levels: m = 5/2, 3/2, ..., -5/2 -> 0..6
    let n = ((5 - m_times_2) / 2) as usize;
    (qubit_down as usize) * 6 + n
}

pub fn trimer_index(i1: usize, anc_down: bool, i3: usize) -> usize {
    i1 * 8 + (anc_down as usize) * 4 + i3
}

/// Per-subsystem excitation counters evaluated on each eigenstate (through
/// its dominant product character). Used to define per-pulse rotating
/// frames that follow one subsystem's ladder.
#[derive(Debug, Clone, Default)]
pub struct CounterSet {
    pub counters: std::collections::BTreeMap<String, Vec<f64>>,
}

fn counter_from_digit(model: &HamiltonianModel, digit: impl Fn(usize) -> f64) -> Vec<f64> {
    let n = model.labels.len();
    let mut out = vec![0.0; n];
    for (p, &k) in model.labels.iter().enumerate() {
        if k != usize::MAX {
            out[k] = digit(p);
        }
    }
    out
}

/// Counters for the dimer: electron flip index and nuclear ladder index.
pub fn dimer_counters(model: &HamiltonianModel) -> CounterSet {
    let mut counters = std::collections::BTreeMap::new();
    counters.insert("electron".into(), counter_from_digit(model, |p| (p / 6) as f64));
    counters.insert("nucleus".into(), counter_from_digit(model, |p| (p % 6) as f64));
    CounterSet { counters }
}

/// Counters for the trimer: qudit-1 level, ancilla flip, qudit-3 level.
pub fn trimer_counters(model: &HamiltonianModel) -> CounterSet {
    let mut counters = std::collections::BTreeMap::new();
    counters.insert("q1".into(), counter_from_digit(model, |p| (p / 8) as f64));
    counters.insert("anc".into(), counter_from_digit(model, |p| ((p / 4) % 2) as f64));
    counters.insert("q3".into(), counter_from_digit(model, |p| (p % 4) as f64));
    CounterSet { counters }
}

/// Eigenvalue table over a static-field sweep: rows `(Bz, E_1..E_n)` with
/// eigenvalues sorted ascending, field grid monotone.
pub fn level_diagram<F>(build: F, b_min: f64, b_max: f64, n: usize) -> Result<Vec<(f64, Vec<f64>)>, ModelError>
where
    F: Fn(f64) -> Result<HamiltonianModel, ModelError>,
{
    if n < 2 || !(b_max > b_min) {
        return Err(ModelError::BadRange);
    }
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let b = b_min + (b_max - b_min) * k as f64 / (n - 1) as f64;
        let m = build(b)?;
        rows.push((b, m.evals.clone()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_hermitian, max_abs_diff, CVec};

    #[test]
    fn dimer_is_hermitian_and_eigen_reconstructs() {
        let m = build_dimer(&DimerParams::default()).unwrap();
        assert!(is_hermitian(&m.h0, 1e-10));
        let d = CMat::from_diagonal(&CVec::from_iterator(12, m.evals.iter().map(|&v| cr(v))));
        let recon = &m.evecs * d * m.evecs.adjoint();
        let scale = m.evals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(max_abs_diff(&m.h0, &recon) < 1e-10 * scale);
    }

    #[test]
    fn dimer_ground_state_is_down_minus_five_half() {
        let m = build_dimer(&DimerParams::default()).unwrap();
        let p = dimer_index(true, -5);
        let k = m.eigenstate(p).unwrap();
        assert_eq!(k, 0, "ground state");
        assert!(m.label_weight[p] > 0.99);
    }

    #[test]
    fn dimer_factorized_regime() {
        let m = build_dimer(&DimerParams::default()).unwrap();
        for p in 0..12 {
            assert!(m.label_weight[p] > 0.99, "product index {p}: {}", m.label_weight[p]);
        }
    }

    #[test]
    fn dimer_decoupled_limit_factorizes() {
        let p = DimerParams { a_par_mhz: 0.0, a_perp_mhz: 0.0, p_mhz: 0.0, ..Default::default() };
        let m = build_dimer(&p).unwrap();
        for i in 0..12 {
            assert!(m.label_weight[i] > 1.0 - 1e-12);
        }
        // eigenvalues are sums of the two Zeeman ladders
        let bz_g = 0.3e4;
        let we = 4.3 * MU_B_RAD_NS_PER_G * bz_g;
        let wn = -0.2592 * MU_N_RAD_NS_PER_G * bz_g;
        let mut expect: Vec<f64> = Vec::new();
        for q in [0.5, -0.5] {
            for twom in [5, 3, 1, -1, -3, -5] {
                expect.push(q * we + (twom as f64 / 2.0) * wn);
            }
        }
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in m.evals.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-9 * we.abs());
        }
    }

    #[test]
    fn unit_roundtrip_mhz() {
        let f_mhz = -883.0;
        let rad_ns = f_mhz * MHZ_RAD_NS;
        assert!((rad_ns / MHZ_RAD_NS - f_mhz).abs() < 1e-12 * f_mhz.abs());
    }

    #[test]
    fn trimer_shape_and_decoupled_limit() {
        let m = build_trimer(&TrimerParams::default()).unwrap();
        assert_eq!(m.h0.nrows(), 32);
        assert!(is_hermitian(&m.h0, 1e-10));
        let p = TrimerParams { j12_mev: 0.0, j23_mev: 0.0, ..Default::default() };
        let m = build_trimer(&p).unwrap();
        for i in 0..32 {
            assert!(m.label_weight[i] > 1.0 - 1e-12);
        }
    }

    #[test]
    fn trimer_qudit1_transition_frequency() {
        let m = build_trimer(&TrimerParams::default()).unwrap();
        // qudit-1 |-3/2> -> |-1/2>, ancilla and qudit 3 in their reference states
        let i = trimer_index(3, true, 3);
        let j = trimer_index(2, true, 3);
        let (w, me) = transition(&m, i, j, "y").unwrap();
        assert!((w.abs() - 315.82).abs() / 315.82 < 0.01, "w = {w}");
        assert!(me.norm() > 0.0);
        // antisymmetry
        let (wr, _) = transition(&m, j, i, "y").unwrap();
        assert!((w + wr).abs() < 1e-9);
    }

    #[test]
    fn dimer_qubit_transition_close_to_zeeman() {
        let m = build_dimer(&DimerParams::default()).unwrap();
        let i = dimer_index(true, -1);
        let j = dimer_index(false, -1);
        let (w, _) = transition(&m, i, j, "y").unwrap();
        let zeeman = 4.3 * MU_B_RAD_NS_PER_G * 0.3e4;
        // hyperfine shifts the splitting by up to ~A/2
        assert!((w.abs() - zeeman).abs() < 883.0 * MHZ_RAD_NS, "w={w} zeeman={zeeman}");
    }

    #[test]
    fn level_diagram_shape_and_zero_field_symmetry() {
        let rows = level_diagram(
            |b| build_dimer(&DimerParams { bz_tesla: b, ..Default::default() }),
            0.0,
            0.5,
            11,
        )
        .unwrap();
        assert_eq!(rows.len(), 11);
        assert!(rows.windows(2).all(|w| w[1].0 > w[0].0));
        // at Bz = 0 the axial hyperfine coupling leaves five degenerate
        // +/-m pairs and two m = 0 singlets (integer total spin)
        let e0 = &rows[0].1;
        let (mut pairs, mut singlets, mut i) = (0, 0, 0);
        while i < e0.len() {
            if i + 1 < e0.len() && (e0[i + 1] - e0[i]).abs() < 1e-9 {
                pairs += 1;
                i += 2;
            } else {
                singlets += 1;
                i += 1;
            }
        }
        assert_eq!((pairs, singlets), (5, 2), "{e0:?}");
        assert!(level_diagram(|b| build_dimer(&DimerParams { bz_tesla: b, ..Default::default() }), 0.0, 0.5, 1).is_err());
    }

    #[test]
    fn large_field_slopes_match_zeeman_coefficients() {
        let rows = level_diagram(
            |b| build_dimer(&DimerParams { bz_tesla: b, ..Default::default() }),
            4.0,
            4.1,
            5,
        )
        .unwrap();
        let (b0, e0) = (&rows[0].0, &rows[0].1);
        let (b1, e1) = (&rows[4].0, &rows[4].1);
        let slope_top = (e1[11] - e0[11]) / ((b1 - b0) * 1e4);
        let expect = 0.5 * 4.3 * MU_B_RAD_NS_PER_G; // qubit-up branch dominates
        assert!((slope_top - expect).abs() / expect < 0.01, "{slope_top} vs {expect}");
    }
}
