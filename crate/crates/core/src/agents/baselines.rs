use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Policy;
use crate::envmdp::Env;
use crate::error::{Error, Result};

/// Uniform random normalized action for `mirrors` mirrors; each component
/// maps to an angle uniform in `[-pi/2, pi/2]`.
pub fn random_orientation_policy<R: Rng + ?Sized>(mirrors: usize, rng: &mut R) -> Vec<f64> {
    (0..2 * mirrors).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Random orientation drawn once per episode and held fixed.
#[derive(Clone, Debug, Default)]
pub struct RandomOrientation {
    action: Vec<f64>,
}

impl RandomOrientation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn action(&self) -> &[f64] {
        &self.action
    }
}

impl Policy for RandomOrientation {
    fn name(&self) -> &str {
        "random"
    }

    fn begin_episode(&mut self, env: &Env<f64>, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_a11e);
        self.action = random_orientation_policy(env.scene().mirror_count(), &mut rng);
    }

    fn act(&mut self, _observation: &[f64], env: &Env<f64>) -> Result<Vec<f64>> {
        if self.action.len() != env.action_dim() {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            self.action = random_orientation_policy(env.scene().mirror_count(), &mut rng);
        }
        Ok(self.action.clone())
    }
}

/// Normalized action value of grid point `j` out of `levels`.
pub fn grid_value(j: usize, levels: usize) -> f64 {
    super::level_value(j, levels)
}

/// Evaluates the frozen scene's sum rate at every point of a `levels`-per-
/// angle grid and returns the best action. Points are visited in
/// lexicographic order (first component most significant); ties keep the
/// first point found.
pub fn exhaustive_search(env: &Env<f64>, levels: usize, budget: u128) -> Result<(Vec<f64>, f64)> {
    if levels == 0 {
        return Err(Error::Input("grid needs at least one level".into()));
    }
    let dims = env.action_dim();
    let required = (levels as u128).checked_pow(dims as u32).unwrap_or(u128::MAX);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let mut index = vec![0usize; dims];
    let mut action = vec![grid_value(0, levels); dims];
    let mut best = (action.clone(), env.frozen_sum_rate(&action)?);
    loop {
        // odometer increment, last component fastest
        let mut d = dims;
        loop {
            if d == 0 {
                return Ok(best);
            }
            d -= 1;
            index[d] += 1;
            if index[d] < levels {
                action[d] = grid_value(index[d], levels);
                break;
            }
            index[d] = 0;
            action[d] = grid_value(0, levels);
        }
        let rate = env.frozen_sum_rate(&action)?;
        if rate > best.1 {
            best = (action.clone(), rate);
        }
    }
}
