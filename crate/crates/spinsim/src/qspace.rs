//! Operator algebra for composite spin systems: spin matrices, tensor
//! embeddings, partial trace, fidelity and the qubit–qudit Pauli
//! decomposition.
//!
//! Basis convention: each spin's levels are ordered by *descending* magnetic
//! quantum number (`s, s-1, …, -s`); the composite basis is the tensor
//! product in the declared site order.

use crate::linalg::{c, cr, kron, max_abs_diff, CMat, CVec, C64};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QspaceError {
    #[error("spin magnitude {0} is not a non-negative half-integer")]
    BadSpin(f64),
    #[error("operator dimension {got} does not match site dimension {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("invalid site set: {0}")]
    BadSites(String),
    #[error("not a valid quantum state: {0}")]
    BadState(String),
}

/// An ordered list of spins defining a composite Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    pub spins: Vec<f64>,
    pub dims: Vec<usize>,
    pub total_dim: usize,
}

impl SpinSystem {
    pub fn new(spins: &[f64]) -> Result<Self, QspaceError> {
        let mut dims = Vec::with_capacity(spins.len());
        for &s in spins {
            let two_s = 2.0 * s;
            if s < 0.0 || (two_s - two_s.round()).abs() > 1e-12 {
                return Err(QspaceError::BadSpin(s));
            }
            let d = two_s.round() as usize + 1;
            if d < 2 {
                return Err(QspaceError::BadSpin(s));
            }
            dims.push(d);
        }
        let total_dim = dims.iter().product();
        Ok(Self { spins: spins.to_vec(), dims, total_dim })
    }
}

/// Standard angular-momentum matrices `(Sx, Sy, Sz)` for spin `s`, in the
/// descending-m basis. All three are Hermitian; `Sz` is diagonal.
pub fn spin_operators(s: f64) -> Result<(CMat, CMat, CMat), QspaceError> {
    let two_s = 2.0 * s;
    if s < 0.0 || (two_s - two_s.round()).abs() > 1e-12 {
        return Err(QspaceError::BadSpin(s));
    }
    let d = two_s.round() as usize + 1;
    let ms: Vec<f64> = (0..d).map(|k| s - k as f64).collect();
    let mut sz = CMat::zeros(d, d);
    let mut sp = CMat::zeros(d, d); // raising operator S+
    for k in 0..d {
        sz[(k, k)] = cr(ms[k]);
    }
    for k in 1..d {
        let m = ms[k];
        sp[(k - 1, k)] = cr((s * (s + 1.0) - m * (m + 1.0)).sqrt());
    }
    let sm = sp.adjoint();
    let sx = (&sp + &sm).scale(0.5);
    let sy = (&sp - &sm) * c(0.0, -0.5);
    Ok((sx, sy, sz))
}

/// Embeds a single-site operator into the full space (identity elsewhere).
pub fn embed(system: &SpinSystem, site: usize, op: &CMat) -> Result<CMat, QspaceError> {
    if site >= system.dims.len() {
        return Err(QspaceError::BadSites(format!("site {site} out of range")));
    }
    if op.nrows() != system.dims[site] || op.ncols() != system.dims[site] {
        return Err(QspaceError::DimMismatch { got: op.nrows(), want: system.dims[site] });
    }
    let mut out = CMat::identity(1, 1);
    for (k, &d) in system.dims.iter().enumerate() {
        if k == site {
            out = kron(&out, op);
        } else {
            out = kron(&out, &CMat::identity(d, d));
        }
    }
    Ok(out)
}

/// A pure or mixed state on a composite spin space.
#[derive(Debug, Clone)]
pub enum QState {
    Ket(CVec),
    Density(CMat),
}

impl QState {
    /// Validates norm / Hermiticity / trace / positivity.
    pub fn validate(&self) -> Result<(), QspaceError> {
        match self {
            QState::Ket(v) => {
                let n = v.norm();
                if (n - 1.0).abs() > 1e-12 {
                    return Err(QspaceError::BadState(format!("ket norm {n} != 1")));
                }
            }
            QState::Density(r) => {
                if max_abs_diff(r, &r.adjoint()) > 1e-10 {
                    return Err(QspaceError::BadState("density matrix not Hermitian".into()));
                }
                let tr: C64 = r.diagonal().iter().sum();
                if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
                    return Err(QspaceError::BadState(format!("trace {tr} != 1")));
                }
                let evmin = crate::linalg::herm_eigvals(r)[0];
                if evmin < -1e-10 {
                    return Err(QspaceError::BadState(format!("negative eigenvalue {evmin}")));
                }
            }
        }
        Ok(())
    }

    pub fn density(&self) -> CMat {
        match self {
            QState::Ket(v) => v * v.adjoint(),
            QState::Density(r) => r.clone(),
        }
    }
}

/// Partial trace keeping the sites in `keep` (ascending order preserved).
pub fn partial_trace(rho: &CMat, system: &SpinSystem, keep: &[usize]) -> Result<CMat, QspaceError> {
    let nsites = system.dims.len();
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() || keep.iter().any(|&k| k >= nsites) {
        return Err(QspaceError::BadSites(format!("{keep:?}")));
    }
    if rho.nrows() != system.total_dim {
        return Err(QspaceError::DimMismatch { got: rho.nrows(), want: system.total_dim });
    }
    let kept_dims: Vec<usize> = keep.iter().map(|&k| system.dims[k]).collect();
    let dk: usize = kept_dims.iter().product();
    let traced: Vec<usize> = (0..nsites).filter(|s| !keep.contains(s)).collect();
    let dt: usize = traced.iter().map(|&s| system.dims[s]).product();

    // Decompose a full index into per-site indices (row-major / big-endian).
    let strides: Vec<usize> = {
        let mut st = vec![1usize; nsites];
        for i in (0..nsites.saturating_sub(1)).rev() {
            st[i] = st[i + 1] * system.dims[i + 1];
        }
        st
    };
    let full_index = |kept: &[usize], tr: &[usize]| -> usize {
        let mut idx = 0;
        for (pos, &site) in keep.iter().enumerate() {
            idx += kept[pos] * strides[site];
        }
        for (pos, &site) in traced.iter().enumerate() {
            idx += tr[pos] * strides[site];
        }
        idx
    };
    let unflatten = |mut flat: usize, dims: &[usize]| -> Vec<usize> {
        let mut out = vec![0; dims.len()];
        for i in (0..dims.len()).rev() {
            out[i] = flat % dims[i];
            flat /= dims[i];
        }
        out
    };
    let traced_dims: Vec<usize> = traced.iter().map(|&s| system.dims[s]).collect();

    let mut out = CMat::zeros(dk, dk);
    for a in 0..dk {
        let ka = unflatten(a, &kept_dims);
        for b in 0..dk {
            let kb = unflatten(b, &kept_dims);
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..dt {
                let tt = unflatten(t, &traced_dims);
                acc += rho[(full_index(&ka, &tt), full_index(&kb, &tt))];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// `⟨ψ|ρ|ψ⟩`, real within numerical noise for valid inputs.
pub fn fidelity(rho: &CMat, psi: &CVec) -> Result<f64, QspaceError> {
    if rho.nrows() != psi.len() {
        return Err(QspaceError::DimMismatch { got: psi.len(), want: rho.nrows() });
    }
    Ok((psi.adjoint() * rho * psi)[(0, 0)].re)
}

/// The 2x2 Pauli matrices `(𝟙, σ1, σ2, σ3)`.
pub fn paulis() -> [CMat; 4] {
    [
        CMat::identity(2, 2),
        CMat::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]),
        CMat::from_row_slice(2, 2, &[cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)]),
        CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)]),
    ]
}

/// Pauli decomposition of a qubit ⊗ 4-level-qudit density matrix:
/// `σ̃_α = Tr_qubit[(σ_α ⊗ 𝟙₄) ρ]`, so that
/// `ρ = ½ [𝟙⊗σ̃₀ + Σ_i σ_i⊗σ̃_i]`.
#[derive(Debug, Clone)]
pub struct PauliDecomposition {
    pub sigma_tilde: [CMat; 4],
}

pub fn pauli_decompose(rho: &CMat) -> Result<PauliDecomposition, QspaceError> {
    if rho.nrows() != 8 || rho.ncols() != 8 {
        return Err(QspaceError::DimMismatch { got: rho.nrows(), want: 8 });
    }
    let ps = paulis();
    let mut out: Vec<CMat> = Vec::with_capacity(4);
    for p in &ps {
        let mut st = CMat::zeros(4, 4);
        for j in 0..4 {
            for l in 0..4 {
                let mut acc = C64::new(0.0, 0.0);
                // Tr over the qubit: sum_{a,b} σ_{ab} ρ_{(b j),(a l)}
                for a in 0..2 {
                    for b in 0..2 {
                        acc += p[(a, b)] * rho[(b * 4 + j, a * 4 + l)];
                    }
                }
                st[(j, l)] = acc;
            }
        }
        out.push(st);
    }
    Ok(PauliDecomposition {
        sigma_tilde: [out[0].clone(), out[1].clone(), out[2].clone(), out[3].clone()],
    })
}

impl PauliDecomposition {
    /// Rebuilds the 8x8 density matrix from the decomposition.
    pub fn reconstruct(&self) -> CMat {
        let ps = paulis();
        let mut rho = CMat::zeros(8, 8);
        for (p, st) in ps.iter().zip(self.sigma_tilde.iter()) {
            rho += kron(p, st);
        }
        rho.scale(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{herm_eigvals, max_abs, I};

    #[test]
    fn spin_half_is_pauli_over_two() {
        let (sx, sy, sz) = spin_operators(0.5).unwrap();
        let ps = paulis();
        assert!(max_abs_diff(&sx, &ps[1].scale(0.5)) < 1e-15);
        assert!(max_abs_diff(&sy, &ps[2].scale(0.5)) < 1e-15);
        assert!(max_abs_diff(&sz, &ps[3].scale(0.5)) < 1e-15);
    }

    #[test]
    fn sz_diagonal_descending() {
        let (_, _, sz) = spin_operators(1.5).unwrap();
        let want = [1.5, 0.5, -0.5, -1.5];
        for (k, &m) in want.iter().enumerate() {
            assert!((sz[(k, k)] - cr(m)).norm() < 1e-15);
        }
    }

    #[test]
    fn commutation_relation() {
        for s in [0.5, 1.0, 1.5, 2.5] {
            let (sx, sy, sz) = spin_operators(s).unwrap();
            let comm = &sx * &sy - &sy * &sx;
            assert!(max_abs_diff(&comm, &(sz.clone() * I)) < 1e-13, "s={s}");
        }
    }

    #[test]
    fn rejects_non_half_integer() {
        assert!(spin_operators(0.7).is_err());
        assert!(SpinSystem::new(&[0.5, 0.3]).is_err());
    }

    #[test]
    fn embed_tensor_structure() {
        let sys = SpinSystem::new(&[0.5, 1.5]).unwrap();
        let (_, _, sz) = spin_operators(0.5).unwrap();
        let e = embed(&sys, 0, &sz).unwrap();
        for k in 0..8 {
            let want = if k < 4 { 0.5 } else { -0.5 };
            assert!((e[(k, k)] - cr(want)).norm() < 1e-15);
        }
        // trace multiplicativity
        let (_, _, iz) = spin_operators(1.5).unwrap();
        let e = embed(&sys, 1, &(&iz * &iz)).unwrap();
        let tr: C64 = e.diagonal().iter().sum();
        let trop: C64 = (&iz * &iz).diagonal().iter().sum();
        assert!((tr - trop * cr(2.0)).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_product_state() {
        let sys = SpinSystem::new(&[0.5, 0.5]).unwrap();
        let ra = CMat::from_row_slice(2, 2, &[cr(0.7), cr(0.1), cr(0.1), cr(0.3)]);
        let rb = CMat::from_row_slice(2, 2, &[cr(0.4), c(0.0, 0.2), c(0.0, -0.2), cr(0.6)]);
        let rho = kron(&ra, &rb);
        assert!(max_abs_diff(&partial_trace(&rho, &sys, &[1]).unwrap(), &rb) < 1e-14);
        assert!(max_abs_diff(&partial_trace(&rho, &sys, &[0]).unwrap(), &ra) < 1e-14);
    }

    #[test]
    fn partial_trace_bell_state() {
        let sys = SpinSystem::new(&[0.5, 0.5]).unwrap();
        let mut v = CVec::zeros(4);
        v[0] = cr(1.0 / 2f64.sqrt());
        v[3] = cr(1.0 / 2f64.sqrt());
        let rho = &v * v.adjoint();
        for keep in [[0usize], [1usize]] {
            let r = partial_trace(&rho, &sys, &keep).unwrap();
            assert!(max_abs_diff(&r, &CMat::identity(2, 2).scale(0.5)) < 1e-14);
        }
    }

    #[test]
    fn fidelity_basic_cases() {
        let mut v = CVec::zeros(4);
        v[1] = cr(1.0);
        let rho = &v * v.adjoint();
        assert!((fidelity(&rho, &v).unwrap() - 1.0).abs() < 1e-14);
        let id = CMat::identity(4, 4).scale(0.25);
        assert!((fidelity(&id, &v).unwrap() - 0.25).abs() < 1e-14);
        let mut w = CVec::zeros(4);
        w[2] = cr(1.0);
        assert!(fidelity(&rho, &w).unwrap().abs() < 1e-14);
        // global phase invariance
        let vp = v.map(|z| z * (I * cr(0.73)).exp());
        assert!((fidelity(&rho, &vp).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pauli_decompose_identity_and_roundtrip() {
        let rho = CMat::identity(8, 8).scale(1.0 / 8.0);
        let dec = pauli_decompose(&rho).unwrap();
        assert!(max_abs_diff(&dec.sigma_tilde[0], &CMat::identity(4, 4).scale(0.25)) < 1e-14);
        for k in 1..4 {
            assert!(max_abs(&dec.sigma_tilde[k]) < 1e-14);
        }
        assert!(max_abs_diff(&dec.reconstruct(), &rho) < 1e-14);
    }

    #[test]
    fn density_validation() {
        let mut v = CVec::zeros(3);
        v[0] = cr(1.0);
        assert!(QState::Ket(v.clone()).validate().is_ok());
        let rho = &v * v.adjoint();
        assert!(QState::Density(rho).validate().is_ok());
        let bad = CMat::identity(3, 3); // trace 3
        assert!(QState::Density(bad).validate().is_err());
        let evs = herm_eigvals(&CMat::identity(2, 2));
        assert!((evs[0] - 1.0).abs() < 1e-14);
    }
}
