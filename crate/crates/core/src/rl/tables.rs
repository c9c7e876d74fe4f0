use rand::Rng;

use crate::env::{Action, StateId};

/// Tabular softmax policy mixed with uniform exploration.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    pub theta: Vec<[f64; 4]>,
    pub epsilon: f64,
}

impl PolicyTable {
    pub fn new(num_states: usize, epsilon: f64) -> Self {
        Self {
            theta: vec![[0.0; 4]; num_states],
            epsilon,
        }
    }

    /// Softmax of the preferences alone.
    pub fn softmax(&self, s: StateId) -> [f64; 4] {
        let t = &self.theta[s];
        let m = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = t.map(|x| (x - m).exp());
        let z: f64 = e.iter().sum();
        e.map(|x| x / z)
    }

    /// Behaviour probabilities including exploration.
    pub fn probs(&self, s: StateId) -> [f64; 4] {
        let u = self.epsilon / Action::COUNT as f64;
        self.softmax(s).map(|p| (1.0 - self.epsilon) * p + u)
    }

    pub fn select_action(&self, s: StateId, rng: &mut impl Rng) -> Action {
        if rng.gen::<f64>() < self.epsilon {
            return Action::ALL[rng.gen_range(0..Action::COUNT)];
        }
        let p = self.softmax(s);
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if x < acc {
                return Action::ALL[i];
            }
        }
        // Rounding can leave the cumulative sum a hair below 1.
        let last = p.iter().rposition(|&pi| pi > 0.0).unwrap_or(Action::COUNT - 1);
        Action::ALL[last]
    }
}

/// Tabular state values for the λ-return critic.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticTable {
    pub v: Vec<f64>,
    pub lambda: f64,
}

impl CriticTable {
    pub fn new(num_states: usize, lambda: f64) -> Self {
        Self {
            v: vec![0.0; num_states],
            lambda,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pure_exploration_is_uniform() {
        let pol = PolicyTable {
            theta: vec![[5.0, 0.0, 0.0, 0.0]],
            epsilon: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[pol.select_action(0, &mut rng).index()] += 1;
        }
        let (mean, sd) = (n as f64 / 4.0, (n as f64 * 0.25 * 0.75).sqrt());
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn greedy_softmax_concentrates() {
        let pol = PolicyTable {
            theta: vec![[10.0, 0.0, 0.0, 0.0]],
            epsilon: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hits = (0..10_000)
            .filter(|_| pol.select_action(0, &mut rng) == Action::Up)
            .count();
        assert!(hits >= 9990, "{hits}");
    }

    #[test]
    fn same_seed_same_actions() {
        let pol = PolicyTable {
            theta: vec![[0.3, -0.2, 1.0, 0.0]],
            epsilon: 0.1,
        };
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100).map(|_| pol.select_action(0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn probabilities_normalize() {
        let pol = PolicyTable {
            theta: vec![[300.0, -2.0, 0.5, 1e-3]],
            epsilon: 0.1,
        };
        assert!((pol.probs(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
