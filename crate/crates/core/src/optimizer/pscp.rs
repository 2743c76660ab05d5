//! Binary penalty `H(u) = Σ (u_m − u_m²)` and its affine majorizer.

/// Zero exactly on binary vectors, positive inside the unit box.
pub fn binariness(u: &[f64]) -> f64 {
    u.iter().map(|x| x - x * x).sum()
}

/// `H̃(u) = Σ [(1 − 2p_m) u_m + p_m²]`, the tangent of the concave penalty at
/// `u_prev = p`. Lies above `H` everywhere with equality at `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedPenalty {
    pub slopes: Vec<f64>,
    pub constant: f64,
}

impl LinearizedPenalty {
    pub fn eval(&self, u: &[f64]) -> f64 {
        self.constant + self.slopes.iter().zip(u).map(|(a, x)| a * x).sum::<f64>()
    }
}

pub fn pscp_linearize(u_prev: &[f64]) -> LinearizedPenalty {
    LinearizedPenalty {
        slopes: u_prev.iter().map(|p| 1.0 - 2.0 * p).collect(),
        constant: u_prev.iter().map(|p| p * p).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_anchor_gives_sum() {
        let lin = pscp_linearize(&[0.0; 4]);
        assert_relative_eq!(lin.eval(&[0.1, 0.2, 0.3, 0.4]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn touches_at_anchor_and_majorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p: Vec<f64> = (0..8).map(|_| rng.random()).collect();
            let lin = pscp_linearize(&p);
            assert_relative_eq!(lin.eval(&p), binariness(&p), epsilon = 1e-14);
            for _ in 0..100 {
                let u: Vec<f64> = (0..8).map(|_| rng.random()).collect();
                let gap: f64 = u.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
                assert_relative_eq!(lin.eval(&u) - binariness(&u), gap, epsilon = 1e-12);
                assert!(lin.eval(&u) >= binariness(&u) - 1e-15);
            }
        }
    }

    #[test]
    fn binary_vectors_have_zero_penalty() {
        assert_eq!(binariness(&[0.0, 1.0, 1.0, 0.0]), 0.0);
        assert!(binariness(&[0.5, 0.5]) > 0.0);
    }
}
