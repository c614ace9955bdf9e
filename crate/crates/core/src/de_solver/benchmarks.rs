use super::{DeProblem, Evaluation};
use crate::error::{Error, Result};

/// Maximize `−Σ (x_i − 1/n)²` on a box with `Σ x = 1`. The optimum is the
/// uniform vector with objective 0.
#[derive(Debug, Clone)]
pub struct ConstrainedSphere {
    lower: Vec<f64>,
    upper: Vec<f64>,
    tolerance: f64,
}

impl ConstrainedSphere {
    pub fn new(n: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: vec![lower; n],
            upper: vec![upper; n],
            tolerance: 0.01,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn optimum(&self) -> Vec<f64> {
        let n = self.lower.len();
        vec![1.0 / n as f64; n]
    }
}

impl DeProblem for ConstrainedSphere {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    fn equality_tolerance(&self) -> f64 {
        self.tolerance
    }

    fn evaluate(&self, genome: &[f64]) -> Result<Evaluation> {
        if genome.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                got: genome.len(),
                context: "sphere genome",
            });
        }
        let c = 1.0 / self.dim() as f64;
        let ss: f64 = genome.iter().map(|x| (x - c) * (x - c)).sum();
        Ok(Evaluation {
            objective: -ss,
            ret: -ss,
            risk: 0.0,
        })
    }

    /// Everything in the first coordinate (clipped), far from the optimum.
    fn initial_genome(&self) -> Result<Vec<f64>> {
        let mut g = self.lower.clone();
        g[0] = self.upper[0];
        Ok(g)
    }
}
