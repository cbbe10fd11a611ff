//! Shifted sphere with linear-projection measures: a differentiable QD
//! benchmark. The objective peaks at theta = 2.048 in every coordinate; the
//! two measures split the coordinates in half and sum them with each
//! component clipped to [-5.12, 5.12], so extreme parameters saturate at the
//! archive boundary.

use crate::domains::{check_dim, EvalResult, Evaluator, Gradients};
use crate::error::{Error, Result};

pub const BOUND: f64 = 5.12;
pub const OPTIMUM: f64 = 0.4 * BOUND;

#[derive(Debug, Clone, PartialEq)]
pub struct SphereLp {
    dim: usize,
    f_max: f64,
}

impl SphereLp {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!(
                "sphere-lp needs at least 2 parameters for two measures, got {dim}"
            )));
        }
        // Worst box corner is -5.12 in every coordinate, at squared distance
        // (BOUND + OPTIMUM)^2 per dimension; this offset keeps f >= 0 on the
        // box.
        let f_max = dim as f64 * (BOUND + OPTIMUM) * (BOUND + OPTIMUM);
        Ok(Self { dim, f_max })
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    fn first_half(&self) -> usize {
        self.dim.div_ceil(2)
    }
}

impl Evaluator for SphereLp {
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

    fn default_sigma(&self) -> f64 {
        0.5
    }

    fn measure_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        // Summed (not multiplied) so a fully saturated input lands bit-exactly
        // on the bound, matching the clip-sum in evaluate.
        let sum = |n: usize| (0..n).map(|_| BOUND).sum::<f64>();
        let h1 = sum(self.first_half());
        let h2 = sum(self.dim - self.first_half());
        (vec![-h1, -h2], vec![h1, h2])
    }

    fn default_resolution(&self) -> Vec<usize> {
        vec![25, 25]
    }

    fn gradients_available(&self) -> bool {
        true
    }

    fn evaluate(&self, params: &[f64]) -> Result<EvalResult> {
        check_dim(self.dim, params.len())?;
        let raw: f64 = params.iter().map(|&p| (p - OPTIMUM) * (p - OPTIMUM)).sum();
        let clipped = self.f_max - raw < 0.0;
        let objective = (self.f_max - raw).max(0.0);

        let split = self.first_half();
        let clip = |p: f64| p.clamp(-BOUND, BOUND);
        let m1: f64 = params[..split].iter().map(|&p| clip(p)).sum();
        let m2: f64 = params[split..].iter().map(|&p| clip(p)).sum();

        let grad_f: Vec<f64> = if clipped {
            vec![0.0; self.dim]
        } else {
            params.iter().map(|&p| -2.0 * (p - OPTIMUM)).collect()
        };
        let in_clip = |p: f64| p.abs() < BOUND;
        let grad_m1: Vec<f64> = params
            .iter()
            .enumerate()
            .map(|(i, &p)| if i < split && in_clip(p) { 1.0 } else { 0.0 })
            .collect();
        let grad_m2: Vec<f64> = params
            .iter()
            .enumerate()
            .map(|(i, &p)| if i >= split && in_clip(p) { 1.0 } else { 0.0 })
            .collect();

        let mut result = EvalResult::analytic(objective, vec![m1, m2]);
        result.gradients = Some(Gradients { objective: grad_f, measures: vec![grad_m1, grad_m2] });
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_diff(d: &SphereLp, params: &[f64], out: impl Fn(&EvalResult) -> f64) -> Vec<f64> {
        let h = 1e-5;
        (0..params.len())
            .map(|i| {
                let mut plus = params.to_vec();
                let mut minus = params.to_vec();
                plus[i] += h;
                minus[i] -= h;
                (out(&d.evaluate(&plus).unwrap()) - out(&d.evaluate(&minus).unwrap())) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    #[test]
    fn optimum_attains_f_max() {
        let d = SphereLp::new(20).unwrap();
        let r = d.evaluate(&vec![OPTIMUM; 20]).unwrap();
        assert_eq!(r.objective, d.f_max());
    }

    #[test]
    fn objective_is_non_negative_on_and_off_the_box() {
        let d = SphereLp::new(4).unwrap();
        assert_eq!(d.evaluate(&[-BOUND; 4]).unwrap().objective, 0.0);
        assert_eq!(d.evaluate(&[-50.0; 4]).unwrap().objective, 0.0);
    }

    #[test]
    fn gradient_at_origin_matches_finite_differences() {
        let d = SphereLp::new(10).unwrap();
        let params = vec![0.0; 10];
        let r = d.evaluate(&params).unwrap();
        let g = r.gradients.as_ref().unwrap();
        let fd = central_diff(&d, &params, |r| r.objective);
        assert!(max_rel_err(&g.objective, &fd) < 1e-6, "rel err {}", max_rel_err(&g.objective, &fd));
    }

    #[test]
    fn gradients_match_finite_differences_away_from_clips() {
        let d = SphereLp::new(7).unwrap();
        // Deterministic probe points well inside the clip region.
        for k in 0..20 {
            let params: Vec<f64> =
                (0..7).map(|i| ((i * 7 + k * 13) as f64 * 0.37).sin() * 4.0).collect();
            let r = d.evaluate(&params).unwrap();
            let g = r.gradients.as_ref().unwrap();
            let fd_f = central_diff(&d, &params, |r| r.objective);
            assert!(max_rel_err(&g.objective, &fd_f) < 1e-5);
            for m in 0..2 {
                let fd_m = central_diff(&d, &params, |r| r.measures[m]);
                assert!(max_rel_err(&g.measures[m], &fd_m) < 1e-5);
            }
        }
    }

    #[test]
    fn saturated_components_pin_measures_to_their_bounds() {
        let d = SphereLp::new(20).unwrap();
        let r = d.evaluate(&vec![9.9; 20]).unwrap();
        let (_, ub) = d.measure_bounds();
        assert_eq!(r.measures, ub);
        // Clipped components carry zero measure gradient.
        let g = r.gradients.unwrap();
        assert!(g.measures[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn odd_dimension_splits_ceil_floor() {
        let d = SphereLp::new(5).unwrap();
        let r = d.evaluate(&[1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.measures, vec![3.0, 2.0]);
    }
}
