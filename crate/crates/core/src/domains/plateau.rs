//! Flat-objective domain: every solution scores 1, so the only signal is
//! measure-space novelty. Exposes the archive-annealing difference between
//! elitist and soft acceptance (an elitist archive rejects everything after a
//! cell fills; a soft archive keeps paying improvement while the threshold
//! anneals).

use crate::domains::{check_dim, EvalResult, Evaluator};
use crate::error::{Error, Result};

pub const BOUND: f64 = 5.12;

#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    dim: usize,
}

impl Plateau {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("plateau needs at least 2 parameters, got {dim}")));
        }
        Ok(Self { dim })
    }
}

impl Evaluator for Plateau {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn measure_dim(&self) -> usize {
        2
    }

    fn parameter_box(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-BOUND; self.dim], vec![BOUND; self.dim])
    }

    fn start_point(&self) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    // Narrow relative to the 0.41-wide cells: an elitist archive stops
    // rewarding a converged emitter once nearby cells fill, while an annealed
    // archive keeps a density gradient alive, so the contrast is visible at
    // this scale. At 0.5 any emitter saturates the archive.
    fn default_sigma(&self) -> f64 {
        0.1
    }

    fn measure_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-BOUND; 2], vec![BOUND; 2])
    }

    fn default_resolution(&self) -> Vec<usize> {
        vec![25, 25]
    }

    fn evaluate(&self, params: &[f64]) -> Result<EvalResult> {
        check_dim(self.dim, params.len())?;
        let m: Vec<f64> = params[..2].iter().map(|&p| p.clamp(-BOUND, BOUND)).collect();
        Ok(EvalResult::analytic(1.0, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_is_one_everywhere() {
        let d = Plateau::new(20).unwrap();
        for k in 0..10 {
            let params: Vec<f64> = (0..20).map(|i| (i as f64 - k as f64) * 0.9).collect();
            assert_eq!(d.evaluate(&params).unwrap().objective, 1.0);
        }
    }

    #[test]
    fn measures_are_first_two_components_clipped() {
        let d = Plateau::new(4).unwrap();
        let r = d.evaluate(&[0.3, 0.7, 9.0, -9.0]).unwrap();
        assert_eq!(r.measures, vec![0.3, 0.7]);
        let r = d.evaluate(&[99.0, -99.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.measures, vec![BOUND, -BOUND]);
    }
}
