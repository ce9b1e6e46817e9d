//! Exact expected welfare of small fixed instances by exhaustive recursion.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::market::{PhiMatrix, Regime};

pub const BRUTE_FORCE_MAX_N: usize = 8;

/// Exact expected average welfare of serial dictatorship with unit capacities
/// on the fixed instance `(q, φ)`, averaging only over the regime's own
/// randomness (uniform choice, uniform tie-breaking).
///
/// The state is the set of taken items; agent `k` moves when `k` items are
/// gone, so memoizing on the bitmask covers every choice order in `2ⁿ` states.
pub fn brute_force_capacitated(q: &[f64], phi: &PhiMatrix, rho: f64, regime: Regime) -> Result<f64> {
    let n = q.len();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::Resource(format!(
            "exhaustive evaluation is limited to n <= {BRUTE_FORCE_MAX_N} (got {n})"
        )));
    }
    if n == 0 || phi.rows() != n || phi.cols() != n {
        return Err(Error::domain("instance must be a nonempty square market"));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("rho must lie in [0, 1], got {rho}")));
    }
    let mut memo = HashMap::new();
    let total = expected_total(0, q, phi, rho, regime, &mut memo);
    Ok(total / n as f64)
}

fn expected_total(
    taken: u32,
    q: &[f64],
    phi: &PhiMatrix,
    rho: f64,
    regime: Regime,
    memo: &mut HashMap<u32, f64>,
) -> f64 {
    let n = q.len();
    let agent = taken.count_ones() as usize;
    if agent == n {
        return 0.0;
    }
    if let Some(&v) = memo.get(&taken) {
        return v;
    }
    let w = 1.0 - rho;
    let perceived = |y: usize| match regime {
        Regime::NoInformation => 0.0,
        Regime::OnlyQuality => q[y],
        Regime::FullInformation => w * q[y] + rho * phi.get(agent, y),
    };
    let free: Vec<usize> = (0..n).filter(|&y| taken & (1 << y) == 0).collect();
    let best = free.iter().map(|&y| perceived(y)).fold(f64::NEG_INFINITY, f64::max);
    let choices: Vec<usize> = free.into_iter().filter(|&y| perceived(y) == best).collect();
    let mut sum = 0.0;
    for &y in &choices {
        let realized = w * q[y] + rho * phi.get(agent, y);
        sum += realized + expected_total(taken | (1 << y), q, phi, rho, regime, memo);
    }
    let v = sum / choices.len() as f64;
    memo.insert(taken, v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> PhiMatrix {
        PhiMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn two_by_two_examples() {
        let zero = matrix(vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let q = [1.0, 0.0];
        assert_eq!(brute_force_capacitated(&q, &zero, 0.5, Regime::NoInformation).unwrap(), 0.25);
        assert_eq!(brute_force_capacitated(&q, &zero, 0.5, Regime::OnlyQuality).unwrap(), 0.25);
        let phi = matrix(vec![vec![3.0, 1.0], vec![2.0, 5.0]]);
        assert_eq!(brute_force_capacitated(&[0.0, 0.0], &phi, 1.0, Regime::FullInformation).unwrap(), 4.0);
    }

    #[test]
    fn ties_average_over_choices() {
        // both items look identical to agent 0, agent 1 takes the rest
        let phi = matrix(vec![vec![0.0, 0.0], vec![4.0, 0.0]]);
        let v = brute_force_capacitated(&[1.0, 1.0], &phi, 1.0, Regime::OnlyQuality).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn budget_and_shape_errors() {
        let big = matrix(vec![vec![0.0; 9]; 9]);
        assert!(matches!(
            brute_force_capacitated(&[0.0; 9], &big, 0.5, Regime::NoInformation),
            Err(Error::Resource(_))
        ));
        let rect = matrix(vec![vec![0.0; 3]; 2]);
        assert!(brute_force_capacitated(&[0.0; 2], &rect, 0.5, Regime::NoInformation).is_err());
    }
}
