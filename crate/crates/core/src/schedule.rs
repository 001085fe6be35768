/// True regime per individual per coarse step. Step `k` (zero-based) is
/// coarse time `t = k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeSchedule {
    models: Vec<Vec<usize>>,
}

/// Per-individual regime in each third of the run for the second study.
pub const SIM2_THIRDS: [[usize; 3]; 6] = [
    [1, 0, 1],
    [0, 1, 0],
    [0, 1, 1],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 0],
];

impl RegimeSchedule {
    pub fn new(models: Vec<Vec<usize>>) -> Self {
        Self { models }
    }

    /// Thirds split at `⌊T/3⌋` and `⌊2T/3⌋`; one pattern per individual.
    pub fn thirds(horizon: usize, patterns: &[[usize; 3]]) -> Self {
        let b1 = horizon / 3;
        let b2 = 2 * horizon / 3;
        let models = patterns
            .iter()
            .map(|p| {
                (0..horizon)
                    .map(|k| {
                        if k < b1 {
                            p[0]
                        } else if k < b2 {
                            p[1]
                        } else {
                            p[2]
                        }
                    })
                    .collect()
            })
            .collect();
        Self { models }
    }

    /// Every individual runs model 0, then 1, then 0.
    pub fn sim1(individuals: usize, horizon: usize) -> Self {
        Self::thirds(horizon, &vec![[0, 1, 0]; individuals])
    }

    /// Individual-specific patterns for six individuals.
    pub fn sim2(horizon: usize) -> Self {
        Self::thirds(horizon, &SIM2_THIRDS)
    }

    pub fn num_individuals(&self) -> usize {
        self.models.len()
    }

    /// Model for individual `d` at zero-based coarse step `step`.
    pub fn model(&self, d: usize, step: usize) -> usize {
        self.models[d][step]
    }

    pub fn sequence(&self, d: usize) -> &[usize] {
        &self.models[d]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.models
    }

    /// Problems with coverage or model indices for the given shape.
    pub fn check(&self, individuals: usize, horizon: usize, num_models: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.models.len() != individuals {
            out.push(format!(
                "schedule has {} individuals, config has {individuals}",
                self.models.len()
            ));
        }
        for (d, row) in self.models.iter().enumerate() {
            if row.len() != horizon {
                out.push(format!(
                    "schedule for individual {d} covers {} steps, expected {horizon}",
                    row.len()
                ));
            }
            if let Some(m) = row.iter().find(|&&m| m >= num_models) {
                out.push(format!("schedule for individual {d} uses model {m} of {num_models}"));
            }
        }
        out
    }

    /// Zero-based steps at which the model differs from the previous step.
    pub fn switch_steps(&self, d: usize) -> Vec<usize> {
        let row = &self.models[d];
        (1..row.len()).filter(|&k| row[k] != row[k - 1]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // coarse time t (1-based) to step index
    fn at(s: &RegimeSchedule, d: usize, t: usize) -> usize {
        s.model(d, t - 1)
    }

    #[test]
    fn sim1_thirds() {
        let s = RegimeSchedule::sim1(6, 100);
        for d in 0..6 {
            assert_eq!(at(&s, d, 50), 1);
            assert_eq!(at(&s, d, 33), 0);
            assert_eq!(at(&s, d, 34), 1);
            assert_eq!(at(&s, d, 66), 1);
            assert_eq!(at(&s, d, 67), 0);
            let row = s.sequence(d);
            assert_eq!(row.iter().filter(|&&m| m == 1).count(), 33);
            assert_eq!(row.iter().filter(|&&m| m == 0).count(), 67);
            assert_eq!(s.switch_steps(d), vec![33, 66]);
        }
    }

    #[test]
    fn sim1_minimal() {
        assert_eq!(RegimeSchedule::sim1(1, 3).sequence(0), &[0, 1, 0]);
    }

    #[test]
    fn sim2_patterns() {
        let s = RegimeSchedule::sim2(100);
        assert_eq!(at(&s, 3, 80), 0); // d = 4
        assert_eq!(at(&s, 3, 60), 1);
        for t in 1..=66 {
            assert_eq!(at(&s, 4, t), 0); // d = 5
        }
        for t in 67..=100 {
            assert_eq!(at(&s, 4, t), 1);
        }
        assert_eq!((at(&s, 0, 1), at(&s, 0, 50), at(&s, 0, 100)), (1, 0, 1));
        assert_eq!((at(&s, 5, 1), at(&s, 5, 50), at(&s, 5, 100)), (1, 0, 0));
        assert!(s.check(6, 100, 2).is_empty());
        assert!(!s.check(6, 99, 2).is_empty());
        assert!(!s.check(6, 100, 1).is_empty());
    }
}
