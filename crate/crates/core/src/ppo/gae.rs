use super::PpoError;

/// Generalized advantage estimation over one segment.
///
/// `dones[t]` masks the successor of step `t`; `bootstrap_value` stands in for
/// `V(s_T)` after the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    for (what, got) in [("values", values.len()), ("dones", dones.len())] {
        if got != n {
            return Err(PpoError::LengthMismatch {
                what,
                expected: n,
                got,
            });
        }
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let keep = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * keep - values[t];
        next_adv = delta + gamma * lambda * keep * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Discounted reward-to-go by direct summation, restarting after each done.
/// Quadratic; meant as a reference.
pub fn discounted_sums(
    rewards: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut discount = 1.0;
            let mut k = t;
            loop {
                total += discount * rewards[k];
                if dones[k] {
                    break total;
                }
                discount *= gamma;
                k += 1;
                if k == n {
                    break total + discount * bootstrap_value;
                }
            }
        })
        .collect()
}
