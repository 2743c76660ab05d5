//! Rank-one extraction of the communication beam and eigen-decomposition
//! of the sensing covariance into individual beams.

use thiserror::Error;

use crate::linalg::{self, CMatrix, CVector, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error("no communication power reaches the user (h^H W_c h = {power:e}, Tr W_c = {trace:e})")]
    DegenerateCommunication { power: f64, trace: f64 },
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// `ŵ_c = W_c h / sqrt(h^H W_c h)`
    pub beam: CVector,
    /// `Ŵ_c = ŵ_c ŵ_c^H`
    pub comm: CMatrix,
    /// `Ŝ = S + W_c − Ŵ_c`
    pub sensing: CMatrix,
}

/// Moves everything in `W_c` that the user does not see into the sensing
/// covariance. The total covariance, and with it the beampattern and all
/// per-antenna powers, is unchanged; so are `h^H W_c h` and `h^H S h`.
pub fn rank_one_reconstruct(
    comm: &CMatrix,
    sensing: &CMatrix,
    user: &CVector,
) -> Result<Reconstruction, ReconstructError> {
    let power = linalg::quad_form(comm, user);
    let trace = linalg::trace_re(comm);
    if !(power > 1e-12 * trace.max(0.0)) || power <= 0.0 {
        return Err(ReconstructError::DegenerateCommunication { power, trace });
    }
    let beam = (comm * user).unscale(power.sqrt());
    let comm_hat = linalg::outer(&beam);
    let sensing_hat = linalg::hermitian_part(&(sensing + comm - &comm_hat));
    Ok(Reconstruction {
        beam,
        comm: comm_hat,
        sensing: sensing_hat,
    })
}

/// Beams `sqrt(λ_i) v_i` for eigenpairs of `s` with `λ_i > threshold ·
/// λ_max`, by descending eigenvalue. Each beam's phase is fixed so that its
/// largest-magnitude entry is real and positive.
pub fn extract_sensing_beams(s: &CMatrix, threshold: f64) -> Vec<CVector> {
    let (values, vectors) = linalg::hermitian_eigen(s);
    let Some(&lmax) = values.last() else {
        return Vec::new();
    };
    if lmax <= 0.0 {
        return Vec::new();
    }
    let mut beams = Vec::new();
    for k in (0..values.len()).rev() {
        if values[k] <= threshold * lmax {
            break;
        }
        let v = vectors.column(k).into_owned() * C64::from(values[k].sqrt());
        beams.push(fix_phase(v));
    }
    beams
}

fn fix_phase(v: CVector) -> CVector {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let z = v[best];
    if z.norm() == 0.0 {
        return v;
    }
    let rot = z.conj() / z.norm();
    v * rot
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut impl Rng) -> C64 {
        Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    fn random_psd(m: usize, rank: usize, rng: &mut impl Rng) -> CMatrix {
        let f = CMatrix::from_fn(m, rank, |_, _| rand_c(rng));
        &f * f.adjoint()
    }

    #[test]
    fn rank_one_input_is_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let w = CVector::from_fn(5, |_, _| rand_c(&mut rng));
        let h = CVector::from_fn(5, |_, _| rand_c(&mut rng));
        let comm = linalg::outer(&w);
        let r = rank_one_reconstruct(&comm, &CMatrix::zeros(5, 5), &h).unwrap();
        assert!(linalg::frobenius(&(&r.comm - &comm)) < 1e-12 * linalg::frobenius(&comm));
        assert!(linalg::frobenius(&r.sensing) < 1e-12);
    }

    #[test]
    fn identity_with_first_basis_user() {
        let m = 3;
        let mut h = CVector::zeros(m);
        h[0] = C64::from(1.0);
        let s = random_psd(m, 2, &mut ChaCha8Rng::seed_from_u64(22));
        let r = rank_one_reconstruct(&CMatrix::identity(m, m), &s, &h).unwrap();
        assert!((&r.beam - &h).norm() < 1e-15);
        let want = &s + CMatrix::identity(m, m) - linalg::outer(&h);
        assert!(linalg::frobenius(&(r.sensing - want)) < 1e-14);
    }

    #[test]
    fn degenerate_when_user_sees_nothing() {
        let mut comm = CMatrix::zeros(2, 2);
        comm[(1, 1)] = C64::from(1.0);
        let mut h = CVector::zeros(2);
        h[0] = C64::from(1.0);
        assert!(matches!(
            rank_one_reconstruct(&comm, &CMatrix::zeros(2, 2), &h),
            Err(ReconstructError::DegenerateCommunication { .. })
        ));
    }

    #[test]
    fn sensing_beams_from_known_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        assert!(extract_sensing_beams(&CMatrix::zeros(4, 4), 1e-6).is_empty());
        let v = CVector::from_fn(4, |_, _| rand_c(&mut rng)).normalize();
        let beams = extract_sensing_beams(&(linalg::outer(&v) * C64::from(2.0)), 1e-6);
        assert_eq!(beams.len(), 1);
        let overlap = beams[0].dotc(&v).norm();
        assert!((overlap - 2f64.sqrt()).abs() < 1e-10);
        let s = random_psd(8, 3, &mut rng);
        let beams = extract_sensing_beams(&s, 1e-6);
        assert_eq!(beams.len(), 3);
        let mut back = CMatrix::zeros(8, 8);
        for b in &beams {
            back += linalg::outer(b);
        }
        assert!(linalg::frobenius(&(back - &s)) <= 1e-8 * linalg::frobenius(&s));
        let norms: Vec<f64> = beams.iter().map(|b| b.norm()).collect();
        assert!(norms.windows(2).all(|w| w[0] >= w[1]));
    }
}
