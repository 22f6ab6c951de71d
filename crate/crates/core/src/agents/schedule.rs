use rand::Rng;

use crate::config::{ExplorationConfig, ScheduleConfig};
use crate::matrix::Vector;
use crate::rng::standard_normal;

/// Step sizes `α_t = min{α′_t, 1/‖x_t‖⁴}` with `α′_t = a/(b + t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRate {
    pub alpha: f64,
    pub alpha_prime: f64,
    /// `A_t = α_t / α′_t ∈ (0, 1]`
    pub scaling: f64,
}

impl Schedule {
    pub fn new(a: f64, b: f64) -> Self {
        Schedule { a, b }
    }

    pub fn base(&self, t: u64) -> f64 {
        self.a / (self.b + t as f64)
    }

    pub fn learning_rate(&self, t: u64, x: &Vector) -> LearningRate {
        self.learning_rate_for_norm(t, x.norm())
    }

    pub fn learning_rate_for_norm(&self, t: u64, norm: f64) -> LearningRate {
        let alpha_prime = self.base(t);
        let alpha = if norm > 0.0 {
            alpha_prime.min(1.0 / norm.powi(4))
        } else {
            alpha_prime
        };
        LearningRate {
            alpha,
            alpha_prime,
            scaling: alpha / alpha_prime,
        }
    }
}

impl From<ScheduleConfig> for Schedule {
    fn from(c: ScheduleConfig) -> Self {
        Schedule::new(c.a, c.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplorationNoise {
    pub sigma: f64,
    pub decay: f64,
}

impl ExplorationNoise {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, dim: usize) -> Vector {
        if self.sigma == 0.0 {
            return Vector::zeros(dim);
        }
        standard_normal(rng, dim) * self.sigma
    }

    pub fn end_episode(&mut self) {
        self.sigma *= self.decay;
    }
}

impl From<ExplorationConfig> for ExplorationNoise {
    fn from(c: ExplorationConfig) -> Self {
        ExplorationNoise {
            sigma: c.sigma,
            decay: c.decay,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn learning_rate_examples() {
        let one_over_t = Schedule::new(1.0, 0.0);
        let lr = one_over_t.learning_rate(100, &Vector::from_element(1, 1.0));
        assert_abs_diff_eq!(lr.alpha, 0.01, epsilon = 1e-15);
        assert_eq!(lr.scaling, 1.0);

        // α′ = 0.01 at t = 0 with a = 1, b = 100
        let s = Schedule::new(1.0, 100.0);
        let lr = s.learning_rate(0, &Vector::from_vec(vec![6.0, 8.0]));
        assert_abs_diff_eq!(lr.alpha, 1e-4, epsilon = 1e-18);
        assert_abs_diff_eq!(lr.scaling, 1e-2, epsilon = 1e-14);

        let lr = s.learning_rate(0, &Vector::zeros(2));
        assert_eq!(lr.alpha, lr.alpha_prime);
        assert_eq!(lr.scaling, 1.0);
    }

    #[test]
    fn partial_sums_grow_while_squares_stay_bounded() {
        let s = Schedule::new(1.0, 100.0);
        let (mut sum, mut sq) = (0.0, 0.0);
        let mut last_sum = 0.0;
        for t in 0..1_000_000u64 {
            let a = s.base(t);
            sum += a;
            sq += a * a;
            if t % 100_000 == 99_999 {
                assert!(sum > last_sum + 0.05);
                last_sum = sum;
            }
        }
        // Σ 1/(100+t)² < 1/99
        assert!(sq < 1.0 / 99.0);
    }

    #[test]
    fn zero_sigma_noise_is_exactly_zero() {
        let mut rng = crate::rng::stream_rng(0, crate::rng::Stream::Exploration);
        let mut noise = ExplorationNoise { sigma: 0.0, decay: 0.5 };
        assert_eq!(noise.sample(&mut rng, 3), Vector::zeros(3));
        noise.sigma = 1.0;
        noise.end_episode();
        assert_eq!(noise.sigma, 0.5);
    }
}
