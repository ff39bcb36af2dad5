use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// `G_t = sum_{k >= t} gamma^(k-t) r_k`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    discounted_returns_bootstrapped(rewards, gamma, 0.0)
}

/// Discounted returns with `bootstrap` standing in for the value after the
/// last reward (0 for a terminal state).
pub fn discounted_returns_bootstrapped(
    rewards: &[f64],
    gamma: f64,
    bootstrap: f64,
) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// Generalized advantage estimates. `values[t]` is `V(s_t)` and `bootstrap`
/// the value of the state after the last step.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if rewards.len() != values.len() {
        return Err(Error::LengthMismatch(rewards.len(), values.len()));
    }
    let n = rewards.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// Shifts to zero mean and scales to unit variance. A constant batch is
/// only centered.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    for x in xs.iter_mut() {
        *x -= mean;
    }
    let var = xs.iter().map(|x| x * x).sum::<f64>() / n;
    if var > 1e-24 {
        let inv = 1.0 / math::sqrt64(var);
        for x in xs.iter_mut() {
            *x *= inv;
        }
    }
    // Second centering pass removes rounding drift.
    let drift = xs.iter().sum::<f64>() / n;
    for x in xs.iter_mut() {
        *x -= drift;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_enters_every_return() {
        let g = discounted_returns_bootstrapped(&[0.0, 0.0], 0.5, 4.0).unwrap();
        assert_eq!(g, vec![1.0, 2.0]);
    }

    #[test]
    fn lambda_zero_is_one_step_td() {
        let a = gae(&[1.0, 2.0], &[0.5, 0.25], 1.0, 0.9, 0.0).unwrap();
        assert!((a[0] - (1.0 + 0.9 * 0.25 - 0.5)).abs() < 1e-12);
        assert!((a[1] - (2.0 + 0.9 * 1.0 - 0.25)).abs() < 1e-12);
    }
}
