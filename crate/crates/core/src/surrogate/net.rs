//! A small feedforward surrogate with hand-rolled reverse-mode gradients.
//!
//! Layout: input -> 64 tanh -> 64 tanh -> two heads. The occupancy head maps
//! the second hidden layer through softplus to 64 non-negative cell counts;
//! the prediction head reads the hidden features concatenated with that
//! occupancy estimate and emits objective and measures. Predicting where the
//! robot spends time first, and conditioning the score prediction on it,
//! is what makes the cheap net a usable stand-in for rollouts.
//!
//! Inputs and prediction targets are standardized; the statistics are set
//! explicitly from a dataset and frozen, so a trained net is a pure function
//! of its weights. Backward passes expose exact input gradients, which lets
//! gradient emitters search the surrogate directly.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domains::Gradients;
use crate::error::{Error, Result};
use crate::rng;

use super::dataset::Dataset;

/// Standard deviations below this are clamped so constant columns do not
/// blow up standardization.
const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// Identity activations make the whole net linear; used to validate
    /// gradients against closed-form matrix products.
    Identity,
}

impl Activation {
    fn apply(&self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }

    /// Derivative expressed through the activation output h.
    fn derivative(&self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub input_dim: usize,
    pub measure_dim: usize,
    pub hidden: usize,
    pub occupancy_cells: usize,
    /// Ablation switch: without the occupancy head the prediction head reads
    /// the hidden features alone.
    pub use_occupancy: bool,
    pub activation: Activation,
}

impl NetConfig {
    pub fn new(input_dim: usize, measure_dim: usize) -> Self {
        Self {
            input_dim,
            measure_dim,
            hidden: 64,
            occupancy_cells: 64,
            use_occupancy: true,
            activation: Activation::Tanh,
        }
    }

    /// Outputs of the prediction head: objective plus measures.
    fn pred_dim(&self) -> usize {
        1 + self.measure_dim
    }

    fn occ_dim(&self) -> usize {
        if self.use_occupancy {
            self.occupancy_cells
        } else {
            0
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(Error::Config("net layer sizes must be positive".into()));
        }
        if self.use_occupancy && self.occupancy_cells == 0 {
            return Err(Error::Config("occupancy head enabled with zero cells".into()));
        }
        Ok(())
    }
}

/// Numerically stable softplus and its derivative (the logistic sigmoid).
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateNet {
    cfg: NetConfig,
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
    w_occ: DMatrix<f64>,
    b_occ: DVector<f64>,
    w_pred: DMatrix<f64>,
    b_pred: DVector<f64>,
    in_mu: DVector<f64>,
    in_sigma: DVector<f64>,
    t_mu: DVector<f64>,
    t_sigma: DVector<f64>,
    /// Occupancy targets are divided by this during training and predictions
    /// multiplied back, keeping the head's outputs near unit scale.
    occ_scale: f64,
}

/// Raw-unit outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub objective: f64,
    pub measures: Vec<f64>,
    /// None when the occupancy head is disabled.
    pub occupancy: Option<Vec<f64>>,
}

/// Intermediate activations kept for the backward pass. All values live in
/// standardized space.
struct Cache {
    x: DVector<f64>,
    h1: DVector<f64>,
    h2: DVector<f64>,
    occ_raw: DVector<f64>,
    occ: DVector<f64>,
    pred: DVector<f64>,
}

/// Per-tensor gradients, mirroring the weight layout.
struct NetGrads {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
    w_occ: DMatrix<f64>,
    b_occ: DVector<f64>,
    w_pred: DMatrix<f64>,
    b_pred: DVector<f64>,
}

impl NetGrads {
    fn zeros_like(net: &SurrogateNet) -> Self {
        let zm = |m: &DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
        let zv = |v: &DVector<f64>| DVector::zeros(v.len());
        Self {
            w1: zm(&net.w1),
            b1: zv(&net.b1),
            w2: zm(&net.w2),
            b2: zv(&net.b2),
            w_occ: zm(&net.w_occ),
            b_occ: zv(&net.b_occ),
            w_pred: zm(&net.w_pred),
            b_pred: zv(&net.b_pred),
        }
    }

    fn accumulate(&mut self, other: &NetGrads) {
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
        self.w_occ += &other.w_occ;
        self.b_occ += &other.b_occ;
        self.w_pred += &other.w_pred;
        self.b_pred += &other.b_pred;
    }

    fn scale(&mut self, s: f64) {
        self.w1 *= s;
        self.b1 *= s;
        self.w2 *= s;
        self.b2 *= s;
        self.w_occ *= s;
        self.b_occ *= s;
        self.w_pred *= s;
        self.b_pred *= s;
    }
}

impl SurrogateNet {
    /// Fresh net with N(0, 1/fan_in) weights and zero biases; standardization
    /// starts as the identity.
    pub fn new(cfg: NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |rows: usize, cols: usize| {
            let scale = 1.0 / (cols.max(1) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
        };
        let pred_in = cfg.hidden + cfg.occ_dim();
        let (w1, w2) = (mat(cfg.hidden, cfg.input_dim), mat(cfg.hidden, cfg.hidden));
        let w_occ = mat(cfg.occ_dim(), cfg.hidden);
        let w_pred = mat(cfg.pred_dim(), pred_in);
        Ok(Self {
            b1: DVector::zeros(cfg.hidden),
            b2: DVector::zeros(cfg.hidden),
            b_occ: DVector::zeros(cfg.occ_dim()),
            b_pred: DVector::zeros(cfg.pred_dim()),
            in_mu: DVector::zeros(cfg.input_dim),
            in_sigma: DVector::from_element(cfg.input_dim, 1.0),
            t_mu: DVector::zeros(cfg.pred_dim()),
            t_sigma: DVector::from_element(cfg.pred_dim(), 1.0),
            occ_scale: 1.0,
            w1,
            w2,
            w_occ,
            w_pred,
            cfg,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    /// Freeze input and target statistics from a dataset: per-column mean and
    /// (floored) standard deviation, plus the mean occupancy count used to
    /// scale the occupancy head.
    pub fn set_standardization(&mut self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Config("cannot standardize from an empty dataset".into()));
        }
        let n = data.len() as f64;
        let rows = data.rows();
        let in_dim = self.cfg.input_dim;
        let t_dim = self.cfg.pred_dim();
        for row in rows {
            if row.params.len() != in_dim || row.measures.len() != self.cfg.measure_dim {
                return Err(Error::DimensionMismatch {
                    expected: in_dim,
                    got: row.params.len(),
                    context: "dataset row",
                });
            }
        }

        let mut in_mu = DVector::<f64>::zeros(in_dim);
        let mut t_mu = DVector::<f64>::zeros(t_dim);
        for row in rows {
            for d in 0..in_dim {
                in_mu[d] += row.params[d] / n;
            }
            t_mu[0] += row.objective / n;
            for (k, &m) in row.measures.iter().enumerate() {
                t_mu[k + 1] += m / n;
            }
        }
        let mut in_var = DVector::<f64>::zeros(in_dim);
        let mut t_var = DVector::<f64>::zeros(t_dim);
        for row in rows {
            for d in 0..in_dim {
                in_var[d] += (row.params[d] - in_mu[d]).powi(2) / n;
            }
            t_var[0] += (row.objective - t_mu[0]).powi(2) / n;
            for (k, &m) in row.measures.iter().enumerate() {
                t_var[k + 1] += (m - t_mu[k + 1]).powi(2) / n;
            }
        }
        self.in_mu = in_mu;
        self.in_sigma = in_var.map(|v| v.sqrt().max(SIGMA_FLOOR));
        self.t_mu = t_mu;
        self.t_sigma = t_var.map(|v| v.sqrt().max(SIGMA_FLOOR));

        if self.cfg.use_occupancy {
            let cells = self.cfg.occupancy_cells as f64;
            let mean_occ = rows
                .iter()
                .map(|r| r.occupancy.iter().sum::<f64>() / cells)
                .sum::<f64>()
                / n;
            self.occ_scale = mean_occ.max(1.0);
        }
        Ok(())
    }

    fn check_input(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.cfg.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.input_dim,
                got: params.len(),
                context: "net input",
            });
        }
        Ok(())
    }

    fn forward(&self, params: &[f64]) -> Result<Cache> {
        self.check_input(params)?;
        let raw = DVector::from_column_slice(params);
        let x = (raw - &self.in_mu).component_div(&self.in_sigma);
        let h1 = (&self.w1 * &x + &self.b1).map(|a| self.cfg.activation.apply(a));
        let h2 = (&self.w2 * &h1 + &self.b2).map(|a| self.cfg.activation.apply(a));
        let (occ_raw, occ) = if self.cfg.use_occupancy {
            let raw = &self.w_occ * &h2 + &self.b_occ;
            let occ = raw.map(softplus);
            (raw, occ)
        } else {
            (DVector::zeros(0), DVector::zeros(0))
        };
        let mut z = DVector::zeros(self.cfg.hidden + self.cfg.occ_dim());
        z.rows_mut(0, self.cfg.hidden).copy_from(&h2);
        if self.cfg.use_occupancy {
            z.rows_mut(self.cfg.hidden, self.cfg.occupancy_cells).copy_from(&occ);
        }
        let pred = &self.w_pred * z + &self.b_pred;
        Ok(Cache { x, h1, h2, occ_raw, occ, pred })
    }

    /// Forward pass in raw units: standardization applied on the way in and
    /// inverted on the way out.
    pub fn predict(&self, params: &[f64]) -> Result<Prediction> {
        let cache = self.forward(params)?;
        Ok(self.prediction_from(&cache))
    }

    fn prediction_from(&self, cache: &Cache) -> Prediction {
        let raw = |j: usize| cache.pred[j] * self.t_sigma[j] + self.t_mu[j];
        Prediction {
            objective: raw(0),
            measures: (0..self.cfg.measure_dim).map(|k| raw(k + 1)).collect(),
            occupancy: self
                .cfg
                .use_occupancy
                .then(|| cache.occ.iter().map(|&o| o * self.occ_scale).collect()),
        }
    }

    /// Reverse pass from output seeds to every weight, bias, and the input.
    /// `d_pred` seeds the prediction head (standardized space), `d_occ` the
    /// occupancy head (scaled space); either may be zero.
    fn backward(
        &self,
        cache: &Cache,
        d_pred: &DVector<f64>,
        d_occ: &DVector<f64>,
    ) -> (NetGrads, DVector<f64>) {
        let hidden = self.cfg.hidden;
        let act = self.cfg.activation;

        let mut z = DVector::zeros(hidden + self.cfg.occ_dim());
        z.rows_mut(0, hidden).copy_from(&cache.h2);
        if self.cfg.use_occupancy {
            z.rows_mut(hidden, self.cfg.occupancy_cells).copy_from(&cache.occ);
        }
        let w_pred_grad = d_pred * z.transpose();
        let d_z = self.w_pred.transpose() * d_pred;
        let mut d_h2 = d_z.rows(0, hidden).clone_owned();

        let (w_occ_grad, b_occ_grad) = if self.cfg.use_occupancy {
            let cells = self.cfg.occupancy_cells;
            let d_occ_total = d_z.rows(hidden, cells).clone_owned() + d_occ;
            let d_occ_raw = DVector::from_fn(cells, |c, _| {
                d_occ_total[c] * sigmoid(cache.occ_raw[c])
            });
            d_h2 += self.w_occ.transpose() * &d_occ_raw;
            (&d_occ_raw * cache.h2.transpose(), d_occ_raw)
        } else {
            (DMatrix::zeros(0, hidden), DVector::zeros(0))
        };

        let d_a2 =
            DVector::from_fn(hidden, |i, _| d_h2[i] * act.derivative(cache.h2[i]));
        let w2_grad = &d_a2 * cache.h1.transpose();
        let d_h1 = self.w2.transpose() * &d_a2;
        let d_a1 =
            DVector::from_fn(hidden, |i, _| d_h1[i] * act.derivative(cache.h1[i]));
        let w1_grad = &d_a1 * cache.x.transpose();
        let d_x = self.w1.transpose() * &d_a1;

        (
            NetGrads {
                w1: w1_grad,
                b1: d_a1,
                w2: w2_grad,
                b2: d_a2,
                w_occ: w_occ_grad,
                b_occ: b_occ_grad,
                w_pred: w_pred_grad,
                b_pred: d_pred.clone(),
            },
            d_x,
        )
    }

    /// Exact gradients of the raw-unit objective and measures with respect to
    /// the raw input, one backward pass per output.
    pub fn input_gradients(&self, params: &[f64]) -> Result<Gradients> {
        let cache = self.forward(params)?;
        let zero_occ = DVector::zeros(self.cfg.occ_dim());
        let mut grads = Vec::with_capacity(self.cfg.pred_dim());
        for j in 0..self.cfg.pred_dim() {
            let mut seed = DVector::zeros(self.cfg.pred_dim());
            seed[j] = 1.0;
            let (_, d_x) = self.backward(&cache, &seed, &zero_occ);
            // Chain through both standardizations: output scaled by
            // t_sigma[j], input columns by 1/in_sigma.
            let g: Vec<f64> = (0..self.cfg.input_dim)
                .map(|i| self.t_sigma[j] * d_x[i] / self.in_sigma[i])
                .collect();
            grads.push(g);
        }
        let objective = grads.remove(0);
        Ok(Gradients { objective, measures: grads })
    }

    /// Flat text checkpoint: a shape header per tensor followed by one value
    /// per line. Values round-trip exactly via shortest decimal form.
    pub fn to_text(&self) -> String {
        let mut out = String::from("surrogate-net v1\n");
        out.push_str(&format!(
            "dims {} {} {} {} {} {}\n",
            self.cfg.input_dim,
            self.cfg.measure_dim,
            self.cfg.hidden,
            self.cfg.occupancy_cells,
            u8::from(self.cfg.use_occupancy),
            match self.cfg.activation {
                Activation::Tanh => "tanh",
                Activation::Identity => "identity",
            }
        ));
        out.push_str(&format!("occ_scale {}\n", self.occ_scale));
        let mut tensor = |name: &str, rows: usize, cols: usize, vals: &[f64]| {
            out.push_str(&format!("tensor {name} {rows} {cols}\n"));
            for v in vals {
                out.push_str(&format!("{v}\n"));
            }
        };
        tensor("w1", self.w1.nrows(), self.w1.ncols(), self.w1.as_slice());
        tensor("b1", self.b1.len(), 1, self.b1.as_slice());
        tensor("w2", self.w2.nrows(), self.w2.ncols(), self.w2.as_slice());
        tensor("b2", self.b2.len(), 1, self.b2.as_slice());
        tensor("w_occ", self.w_occ.nrows(), self.w_occ.ncols(), self.w_occ.as_slice());
        tensor("b_occ", self.b_occ.len(), 1, self.b_occ.as_slice());
        tensor("w_pred", self.w_pred.nrows(), self.w_pred.ncols(), self.w_pred.as_slice());
        tensor("b_pred", self.b_pred.len(), 1, self.b_pred.as_slice());
        tensor("in_mu", self.in_mu.len(), 1, self.in_mu.as_slice());
        tensor("in_sigma", self.in_sigma.len(), 1, self.in_sigma.as_slice());
        tensor("t_mu", self.t_mu.len(), 1, self.t_mu.as_slice());
        tensor("t_sigma", self.t_sigma.len(), 1, self.t_sigma.as_slice());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("net checkpoint: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some("surrogate-net v1") {
            return Err(bad("missing or unsupported header"));
        }
        let dims = lines.next().ok_or_else(|| bad("missing dims"))?;
        let parts: Vec<&str> = dims.split_whitespace().collect();
        if parts.len() != 7 || parts[0] != "dims" {
            return Err(bad("malformed dims line"));
        }
        let num =
            |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad integer {s:?}")));
        let cfg = NetConfig {
            input_dim: num(parts[1])?,
            measure_dim: num(parts[2])?,
            hidden: num(parts[3])?,
            occupancy_cells: num(parts[4])?,
            use_occupancy: parts[5] == "1",
            activation: match parts[6] {
                "tanh" => Activation::Tanh,
                "identity" => Activation::Identity,
                other => return Err(bad(&format!("unknown activation {other:?}"))),
            },
        };
        let occ_line = lines.next().ok_or_else(|| bad("missing occ_scale"))?;
        let occ_scale = occ_line
            .strip_prefix("occ_scale ")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| bad("malformed occ_scale line"))?;

        let mut net = SurrogateNet::new(cfg, 0)?;
        net.occ_scale = occ_scale;
        let mut read_tensor = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            let header = lines.next().ok_or_else(|| bad("truncated checkpoint"))?;
            let expect = format!("tensor {name} {rows} {cols}");
            if header != expect {
                return Err(bad(&format!("expected {expect:?}, found {header:?}")));
            }
            (0..rows * cols)
                .map(|_| {
                    lines
                        .next()
                        .ok_or_else(|| bad("truncated tensor"))?
                        .parse::<f64>()
                        .map_err(|_| bad("bad float"))
                })
                .collect()
        };
        macro_rules! fill {
            (mat $field:ident) => {{
                let (r, c) = (net.$field.nrows(), net.$field.ncols());
                let vals = read_tensor(stringify!($field), r, c)?;
                net.$field = DMatrix::from_column_slice(r, c, &vals);
            }};
            (vec $field:ident) => {{
                let r = net.$field.len();
                let vals = read_tensor(stringify!($field), r, 1)?;
                net.$field = DVector::from_column_slice(&vals);
            }};
        }
        fill!(mat w1);
        fill!(vec b1);
        fill!(mat w2);
        fill!(vec b2);
        fill!(mat w_occ);
        fill!(vec b_occ);
        fill!(mat w_pred);
        fill!(vec b_pred);
        fill!(vec in_mu);
        fill!(vec in_sigma);
        fill!(vec t_mu);
        fill!(vec t_sigma);
        Ok(net)
    }
}

// --- training ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Weight of the occupancy MSE relative to the prediction MSE.
    pub loss_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            loss_weight: 1.0,
            seed: 0,
        }
    }
}

/// Mean losses over one epoch, in standardized/scaled space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub total: f64,
    pub prediction: f64,
    pub occupancy: f64,
}

/// Mini-batch SGD with momentum on MSE(prediction) + weight * MSE(occupancy).
/// Standardization must already be frozen; training never changes it. Returns
/// one loss record per epoch. Deterministic in (net, dataset order, seed).
pub fn train(net: &mut SurrogateNet, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<EpochLoss>> {
    if data.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if cfg.batch_size == 0 || !cfg.learning_rate.is_finite() || cfg.learning_rate <= 0.0 {
        return Err(Error::Config("training needs a positive batch size and learning rate".into()));
    }
    let pred_dim = net.cfg.pred_dim();
    let occ_dim = net.cfg.occ_dim();
    let use_occ = net.cfg.use_occupancy;
    for row in data.rows() {
        if use_occ && row.occupancy.len() != net.cfg.occupancy_cells {
            return Err(Error::DimensionMismatch {
                expected: net.cfg.occupancy_cells,
                got: row.occupancy.len(),
                context: "occupancy row",
            });
        }
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(rng::splitmix64(cfg.seed));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = NetGrads::zeros_like(net);
    let mut trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut pred_sum = 0.0;
        let mut occ_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grad = NetGrads::zeros_like(net);
            for &i in chunk {
                let row = &data.rows()[i];
                let cache = net.forward(&row.params)?;

                // Standardized prediction residual.
                let mut t = DVector::zeros(pred_dim);
                t[0] = (row.objective - net.t_mu[0]) / net.t_sigma[0];
                for k in 0..net.cfg.measure_dim {
                    t[k + 1] = (row.measures[k] - net.t_mu[k + 1]) / net.t_sigma[k + 1];
                }
                let resid = &cache.pred - &t;
                let pred_loss = resid.norm_squared() / pred_dim as f64;
                let d_pred = resid.map(|r| 2.0 * r / pred_dim as f64);

                // Scaled occupancy residual.
                let (occ_loss, d_occ) = if use_occ {
                    let target = DVector::from_fn(occ_dim, |c, _| {
                        row.occupancy[c] / net.occ_scale
                    });
                    let r = &cache.occ - &target;
                    let loss = r.norm_squared() / occ_dim as f64;
                    (loss, r.map(|v| 2.0 * cfg.loss_weight * v / occ_dim as f64))
                } else {
                    (0.0, DVector::zeros(0))
                };

                pred_sum += pred_loss;
                occ_sum += occ_loss;
                let (g, _) = net.backward(&cache, &d_pred, &d_occ);
                grad.accumulate(&g);
            }
            grad.scale(1.0 / chunk.len() as f64);

            let gamma = cfg.momentum;
            let lr = cfg.learning_rate;
            macro_rules! step {
                ($field:ident) => {
                    velocity.$field *= gamma;
                    velocity.$field -= grad.$field * lr;
                    net.$field += &velocity.$field;
                };
            }
            step!(w1);
            step!(b1);
            step!(w2);
            step!(b2);
            step!(w_occ);
            step!(b_occ);
            step!(w_pred);
            step!(b_pred);
        }
        let n = data.len() as f64;
        let prediction = pred_sum / n;
        let occupancy = occ_sum / n;
        trace.push(EpochLoss {
            total: prediction + cfg.loss_weight * occupancy,
            prediction,
            occupancy,
        });
    }
    Ok(trace)
}
