//! Shared-control teleoperation scenario domain.
//!
//! A scenario places three goal objects in the unit-square workspace and
//! parameterizes a simulated human: an angular noise scale sigma_h and a
//! rationality beta. Each step the human produces a direction input, the
//! robot scores every goal by how well it explains that input, and moves
//! toward the MAP goal once it is confident. The objective is normalized
//! completion time, so maximizing it surfaces scenarios where goal inference
//! fails.
//!
//! Human model: with probability sigmoid(beta) (the two-way softmax over
//! goal-direction alignment) the input points at the true goal, rotated by
//! Gaussian angular noise of scale sigma_h; otherwise it is a uniformly
//! random direction. Only the Gaussian part counts as injected noise for the
//! human-variation measure, so m1 = 0 exactly when sigma_h = 0.
//!
//! Robot model: per-step evidence beta_r * cos(input, direction-to-goal)
//! accumulates into an exponentially discounted score per goal (the robot
//! tracks a recent-evidence posterior rather than an ever-growing one, since
//! its own motion makes old geometry stale), and the robot advances once the
//! posterior of the MAP goal clears a confidence gate, staying committed
//! until it falls below a lower release threshold (hysteresis). Evidence
//! discrimination scales with the angular separation between goals as seen
//! from the robot: well-separated goals clear the gate immediately for any
//! rationality in range, while a tight, distant cluster pins the posterior
//! below the gate and the robot never commits. That reproduces the studied
//! failure structure: timeouts only below a goal-distance threshold, and
//! there even a nearly noise-free human can fail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::domains::{check_dim, EvalResult, Evaluator};
use crate::error::{Error, Result};
use crate::rng;

/// Number of scenario parameters: three goals (x, y each), sigma_h, beta,
/// and the floored true-goal selector.
pub const PARAM_DIM: usize = 9;
const GOALS: usize = 3;
/// Tolerance for the pairwise-separation check, shared by validity and
/// repair. Repair's split-then-clamp step approaches the minimum separation
/// only geometrically when a pair presses against the workspace wall, so the
/// tolerance is sized for that approach to land within the 50-sweep budget.
const SEP_TOL: f64 = 1e-6;

/// Fixed rollout constants. The paper-level description pins none of these;
/// they are defaults chosen so that ambiguous goal layouts can exhaust the
/// horizon while well-separated ones cannot, and they are recorded in every
/// run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleopConsts {
    /// Simulated seconds per step (bookkeeping only; dynamics are per-step).
    pub dt: f64,
    /// Horizon in steps.
    pub horizon: u32,
    /// Robot translation per step.
    pub robot_speed: f64,
    /// Success when within this distance of the true goal.
    pub success_radius: f64,
    /// Robot's likelihood sharpness when scoring inputs against goals.
    pub robot_beta: f64,
    /// Minimum pairwise goal separation.
    pub min_separation: f64,
    pub robot_start: [f64; 2],
    /// Per-step discount on accumulated goal evidence.
    pub memory_decay: f64,
    /// MAP posterior probability required before the robot commits to a goal.
    pub confidence_gate: f64,
    /// Once committed, the robot keeps moving until the MAP posterior falls
    /// below this (hysteresis, so wobble around the gate does not stall it).
    pub confidence_release: f64,
    /// Seeded rollouts averaged per evaluation.
    pub rollouts: usize,
    pub sigma_h_max: f64,
    pub beta_max: f64,
    /// Archive bound for the human-variation measure.
    pub m1_max: f64,
    /// Archive bound for mean pairwise goal distance.
    pub m2_max: f64,
    /// Side length of the square visitation grid.
    pub occupancy_res: usize,
}

impl Default for TeleopConsts {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 400,
            robot_speed: 0.02,
            success_radius: 0.03,
            robot_beta: 5.0,
            min_separation: 0.08,
            robot_start: [0.5, 0.5],
            memory_decay: 0.9,
            confidence_gate: 0.55,
            confidence_release: 0.45,
            rollouts: 5,
            sigma_h_max: 0.5,
            beta_max: 20.0,
            m1_max: 120.0,
            m2_max: 1.2,
            occupancy_res: 8,
        }
    }
}

impl TeleopConsts {
    /// Key/value rows for the run manifest.
    pub fn manifest_rows(&self) -> Vec<(String, String)> {
        vec![
            ("teleop.dt".into(), format!("{}", self.dt)),
            ("teleop.horizon".into(), format!("{}", self.horizon)),
            ("teleop.robot_speed".into(), format!("{}", self.robot_speed)),
            ("teleop.success_radius".into(), format!("{}", self.success_radius)),
            ("teleop.robot_beta".into(), format!("{}", self.robot_beta)),
            ("teleop.min_separation".into(), format!("{}", self.min_separation)),
            (
                "teleop.robot_start".into(),
                format!("{},{}", self.robot_start[0], self.robot_start[1]),
            ),
            ("teleop.memory_decay".into(), format!("{}", self.memory_decay)),
            ("teleop.confidence_gate".into(), format!("{}", self.confidence_gate)),
            ("teleop.confidence_release".into(), format!("{}", self.confidence_release)),
            ("teleop.rollouts".into(), format!("{}", self.rollouts)),
            ("teleop.sigma_h_max".into(), format!("{}", self.sigma_h_max)),
            ("teleop.beta_max".into(), format!("{}", self.beta_max)),
            ("teleop.m1_max".into(), format!("{}", self.m1_max)),
            ("teleop.m2_max".into(), format!("{}", self.m2_max)),
            ("teleop.occupancy_res".into(), format!("{}", self.occupancy_res)),
        ]
    }
}

/// Which quantity feeds the first archive measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum M1Kind {
    /// Total injected angular-noise magnitude (sum of |Gaussian noise|).
    HumanVariation,
    /// Maximum posterior probability the robot ever assigned to a wrong
    /// goal, averaged over rollouts.
    WrongGoalBelief,
}

impl std::str::FromStr for M1Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human-variation" => Ok(M1Kind::HumanVariation),
            "wrong-goal-belief" => Ok(M1Kind::WrongGoalBelief),
            other => Err(Error::Parse(format!(
                "unknown m1 measure {other:?} (expected human-variation or wrong-goal-belief)"
            ))),
        }
    }
}

impl M1Kind {
    pub fn name(&self) -> &'static str {
        match self {
            M1Kind::HumanVariation => "human-variation",
            M1Kind::WrongGoalBelief => "wrong-goal-belief",
        }
    }
}

// --- scenario ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub goals: [[f64; 2]; GOALS],
    pub sigma_h: f64,
    pub beta: f64,
    /// Continuous selector in [0, 3); floor gives the true goal index.
    pub true_goal_param: f64,
}

impl Scenario {
    pub fn from_params(params: &[f64]) -> Result<Self> {
        check_dim(PARAM_DIM, params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("scenario parameters".into()));
        }
        Ok(Self {
            goals: [
                [params[0], params[1]],
                [params[2], params[3]],
                [params[4], params[5]],
            ],
            sigma_h: params[6],
            beta: params[7],
            true_goal_param: params[8],
        })
    }

    pub fn to_params(&self) -> Vec<f64> {
        vec![
            self.goals[0][0],
            self.goals[0][1],
            self.goals[1][0],
            self.goals[1][1],
            self.goals[2][0],
            self.goals[2][1],
            self.sigma_h,
            self.beta,
            self.true_goal_param,
        ]
    }

    pub fn true_goal(&self) -> usize {
        (self.true_goal_param.floor() as i64).clamp(0, GOALS as i64 - 1) as usize
    }

    pub fn mean_pairwise_distance(&self) -> f64 {
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        (d(self.goals[0], self.goals[1])
            + d(self.goals[0], self.goals[2])
            + d(self.goals[1], self.goals[2]))
            / 3.0
    }
}

// --- single rollout ---

/// Outcome of one seeded rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Steps executed (equals the horizon on timeout).
    pub steps: u32,
    pub succeeded: bool,
    /// Sum of injected Gaussian angular-noise magnitudes.
    pub noise_sum: f64,
    /// Max posterior probability ever assigned to a non-true goal.
    pub max_wrong_prob: f64,
    /// Visitation counts, row-major occupancy_res x occupancy_res.
    pub occupancy: Vec<f64>,
    pub trajectory: Vec<(f64, f64)>,
    /// MAP goal index after each step's posterior update.
    pub map_trace: Vec<u8>,
}

impl Rollout {
    pub fn objective(&self, horizon: u32) -> f64 {
        if self.succeeded {
            self.steps as f64 / horizon as f64
        } else {
            1.0
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn unit_toward(from: [f64; 2], to: [f64; 2]) -> Option<[f64; 2]> {
    let dx = to[0] - from[0];
    let dy = to[1] - from[1];
    let n = (dx * dx + dy * dy).sqrt();
    if n < 1e-9 {
        None
    } else {
        Some([dx / n, dy / n])
    }
}

pub fn rollout(consts: &TeleopConsts, scenario: &Scenario, seed: u64) -> Rollout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let true_goal = scenario.true_goal();
    let target = scenario.goals[true_goal];
    let p_rational = sigmoid(scenario.beta);
    let grid = consts.occupancy_res;
    let mut occupancy = vec![0.0; grid * grid];
    let mut pos = consts.robot_start;
    let mut trajectory = vec![(pos[0], pos[1])];
    let mut map_trace = Vec::new();
    // Discounted per-goal log-evidence; the posterior is its softmax.
    let mut evidence = [0.0f64; GOALS];
    let mut noise_sum = 0.0;
    let mut max_wrong_prob = 0.0;

    let dist_to_true = |p: [f64; 2]| {
        ((p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2)).sqrt()
    };
    if dist_to_true(pos) <= consts.success_radius {
        return Rollout {
            steps: 0,
            succeeded: true,
            noise_sum,
            max_wrong_prob,
            occupancy,
            trajectory,
            map_trace,
        };
    }

    let mut steps = 0;
    let mut succeeded = false;
    let mut committed = false;
    for t in 1..=consts.horizon {
        // Human input: rational steps point at the true goal with injected
        // Gaussian angular noise; the rest are uniformly random directions.
        let input_angle = if rng.gen::<f64>() < p_rational {
            let goal_angle = (target[1] - pos[1]).atan2(target[0] - pos[0]);
            let gauss: f64 = rng.sample::<f64, _>(StandardNormal) * scenario.sigma_h;
            noise_sum += gauss.abs();
            goal_angle + gauss
        } else {
            rng.gen_range(-PI..PI)
        };
        let input = [input_angle.cos(), input_angle.sin()];

        // Evidence update; a goal the robot is sitting on has no defined
        // direction, so it only decays.
        for (g, goal) in scenario.goals.iter().enumerate() {
            evidence[g] *= consts.memory_decay;
            if let Some(dir) = unit_toward(pos, *goal) {
                evidence[g] += consts.robot_beta * (input[0] * dir[0] + input[1] * dir[1]);
            }
        }
        let max_ev = evidence.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights = evidence.map(|e| (e - max_ev).exp());
        let z: f64 = weights.iter().sum();
        for (g, w) in weights.iter().enumerate() {
            if g != true_goal {
                max_wrong_prob = max_wrong_prob.max(w / z);
            }
        }

        // Advance toward the MAP goal (ties to the lowest index) once the
        // posterior clears the confidence gate; stay committed while it holds
        // above the release threshold so wobble does not stall the robot.
        let mut map_goal = 0;
        for g in 1..GOALS {
            if evidence[g] > evidence[map_goal] {
                map_goal = g;
            }
        }
        map_trace.push(map_goal as u8);
        let map_prob = weights[map_goal] / z;
        committed = map_prob >= consts.confidence_gate
            || (committed && map_prob >= consts.confidence_release);
        if committed {
            if let Some(dir) = unit_toward(pos, scenario.goals[map_goal]) {
                let dx = scenario.goals[map_goal][0] - pos[0];
                let dy = scenario.goals[map_goal][1] - pos[1];
                let dist = (dx * dx + dy * dy).sqrt();
                let step_len = consts.robot_speed.min(dist);
                pos[0] += dir[0] * step_len;
                pos[1] += dir[1] * step_len;
            }
        }

        let gx = ((pos[0] * grid as f64).floor() as i64).clamp(0, grid as i64 - 1) as usize;
        let gy = ((pos[1] * grid as f64).floor() as i64).clamp(0, grid as i64 - 1) as usize;
        occupancy[gy * grid + gx] += 1.0;
        trajectory.push((pos[0], pos[1]));
        steps = t;

        if dist_to_true(pos) <= consts.success_radius {
            succeeded = true;
            break;
        }
    }

    Rollout { steps, succeeded, noise_sum, max_wrong_prob, occupancy, trajectory, map_trace }
}

// --- domain ---

#[derive(Debug, Clone)]
pub struct Teleop {
    pub consts: TeleopConsts,
    pub m1: M1Kind,
    master_seed: u64,
}

impl Teleop {
    pub fn new(consts: TeleopConsts, m1: M1Kind, master_seed: u64) -> Self {
        Self { consts, m1, master_seed }
    }

    /// Violated constraints, by name. Empty means valid.
    pub fn validity(&self, scenario: &Scenario) -> Vec<String> {
        let mut violations = Vec::new();
        for (g, goal) in scenario.goals.iter().enumerate() {
            if goal.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
                violations.push(format!(
                    "containment: goal {g} at ({}, {}) outside the unit workspace",
                    goal[0], goal[1]
                ));
            }
        }
        for a in 0..GOALS {
            for b in (a + 1)..GOALS {
                let dx = scenario.goals[a][0] - scenario.goals[b][0];
                let dy = scenario.goals[a][1] - scenario.goals[b][1];
                let d = (dx * dx + dy * dy).sqrt();
                if d < self.consts.min_separation - SEP_TOL {
                    violations.push(format!(
                        "separation: goals {a} and {b} are {d:.4} apart, need {}",
                        self.consts.min_separation
                    ));
                }
            }
        }
        if !(0.0..=self.consts.sigma_h_max).contains(&scenario.sigma_h) {
            violations.push(format!(
                "range: sigma_h {} outside [0, {}]",
                scenario.sigma_h, self.consts.sigma_h_max
            ));
        }
        if !(0.0..=self.consts.beta_max).contains(&scenario.beta) {
            violations
                .push(format!("range: beta {} outside [0, {}]", scenario.beta, self.consts.beta_max));
        }
        if !(0.0..3.0).contains(&scenario.true_goal_param) {
            violations.push(format!(
                "range: true-goal selector {} outside [0, 3)",
                scenario.true_goal_param
            ));
        }
        violations
    }

    /// Project a scenario onto the feasible set, minimizing the squared L2
    /// edit over goal positions. Returns the repaired scenario and that edit
    /// distance. Non-positional parameters clamp to their ranges (not counted
    /// in the distance).
    pub fn repair_scenario(&self, scenario: &Scenario) -> Result<(Scenario, f64)> {
        let d_min = self.consts.min_separation;
        let mut s = scenario.clone();
        for goal in &mut s.goals {
            goal[0] = goal[0].clamp(0.0, 1.0);
            goal[1] = goal[1].clamp(0.0, 1.0);
        }
        s.sigma_h = s.sigma_h.clamp(0.0, self.consts.sigma_h_max);
        s.beta = s.beta.clamp(0.0, self.consts.beta_max);
        s.true_goal_param = s.true_goal_param.clamp(0.0, 3.0 - 1e-9);

        let mut converged = false;
        'sweeps: for _ in 0..50 {
            let mut moved = false;
            for a in 0..GOALS {
                for b in (a + 1)..GOALS {
                    let dx = s.goals[b][0] - s.goals[a][0];
                    let dy = s.goals[b][1] - s.goals[a][1];
                    let d = (dx * dx + dy * dy).sqrt();
                    if d >= d_min - SEP_TOL {
                        continue;
                    }
                    moved = true;
                    let mid = [
                        (s.goals[a][0] + s.goals[b][0]) / 2.0,
                        (s.goals[a][1] + s.goals[b][1]) / 2.0,
                    ];
                    // Coincident points split along the x axis.
                    let dir = if d < 1e-12 { [1.0, 0.0] } else { [dx / d, dy / d] };
                    let half = d_min / 2.0;
                    s.goals[a] = [mid[0] - dir[0] * half, mid[1] - dir[1] * half];
                    s.goals[b] = [mid[0] + dir[0] * half, mid[1] + dir[1] * half];
                    for g in [a, b] {
                        s.goals[g][0] = s.goals[g][0].clamp(0.0, 1.0);
                        s.goals[g][1] = s.goals[g][1].clamp(0.0, 1.0);
                    }
                }
            }
            if !moved {
                converged = true;
                break 'sweeps;
            }
        }
        if !converged {
            return Err(Error::RepairFailed(format!(
                "separation repair did not converge within 50 sweeps for goals {:?}",
                scenario.goals
            )));
        }
        let edit: f64 = s
            .goals
            .iter()
            .flatten()
            .zip(scenario.goals.iter().flatten())
            .map(|(r, o)| (r - o) * (r - o))
            .sum();
        Ok((s, edit))
    }

    /// Average the seeded rollouts of a (valid) scenario.
    pub fn evaluate_scenario(&self, scenario: &Scenario) -> Result<(EvalResult, Vec<Rollout>)> {
        let violations = self.validity(scenario);
        if !violations.is_empty() {
            return Err(Error::InvalidScenario(violations.join("; ")));
        }
        let params = scenario.to_params();
        let seeds =
            rng::rollout_seeds(rng::hash_params(self.master_seed, &params), self.consts.rollouts);
        let rollouts: Vec<Rollout> =
            seeds.iter().map(|&s| rollout(&self.consts, scenario, s)).collect();

        let n = rollouts.len() as f64;
        let objective = rollouts.iter().map(|r| r.objective(self.consts.horizon)).sum::<f64>() / n;
        let m1 = match self.m1 {
            M1Kind::HumanVariation => rollouts.iter().map(|r| r.noise_sum).sum::<f64>() / n,
            M1Kind::WrongGoalBelief => rollouts.iter().map(|r| r.max_wrong_prob).sum::<f64>() / n,
        };
        let m2 = scenario.mean_pairwise_distance();

        let grid = self.consts.occupancy_res;
        let mut occupancy = vec![0.0; grid * grid];
        for r in &rollouts {
            for (acc, &v) in occupancy.iter_mut().zip(&r.occupancy) {
                *acc += v;
            }
        }
        for v in &mut occupancy {
            *v /= n;
        }

        let result = EvalResult {
            objective,
            measures: vec![m1, m2],
            gradients: None,
            occupancy: Some(occupancy),
            trajectory: Some(rollouts[0].trajectory.clone()),
            seeds,
        };
        Ok((result, rollouts))
    }

    /// Trajectory polyline as CSV (step, x, y) for debugging.
    pub fn trajectory_csv(trajectory: &[(f64, f64)]) -> String {
        let mut out = String::from("step,x,y\n");
        for (i, (x, y)) in trajectory.iter().enumerate() {
            out.push_str(&format!("{i},{x},{y}\n"));
        }
        out
    }
}

impl Evaluator for Teleop {
    fn param_dim(&self) -> usize {
        PARAM_DIM
    }

    fn measure_dim(&self) -> usize {
        2
    }

    fn parameter_box(&self) -> (Vec<f64>, Vec<f64>) {
        (
            vec![0.0; PARAM_DIM],
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, self.consts.sigma_h_max, self.consts.beta_max, 3.0],
        )
    }

    fn start_point(&self) -> Vec<f64> {
        let (lb, ub) = self.parameter_box();
        lb.iter().zip(&ub).map(|(&l, &u)| (l + u) / 2.0).collect()
    }

    fn default_sigma(&self) -> f64 {
        0.1
    }

    fn measure_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m1_max = match self.m1 {
            M1Kind::HumanVariation => self.consts.m1_max,
            M1Kind::WrongGoalBelief => 1.0,
        };
        (vec![0.0, 0.0], vec![m1_max, self.consts.m2_max])
    }

    fn default_resolution(&self) -> Vec<usize> {
        vec![25, 25]
    }

    fn repair(&self, params: &[f64]) -> Result<(Vec<f64>, f64)> {
        let scenario = Scenario::from_params(params)?;
        let (repaired, edit) = self.repair_scenario(&scenario)?;
        Ok((repaired.to_params(), edit))
    }

    fn evaluate(&self, params: &[f64]) -> Result<EvalResult> {
        let scenario = Scenario::from_params(params)?;
        Ok(self.evaluate_scenario(&scenario)?.0)
    }
}
