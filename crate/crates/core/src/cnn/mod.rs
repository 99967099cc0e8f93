//! Two conv/pool blocks, one hidden dense layer, one output layer.
//!
//! ```text
//! input 1xGxG -> conv k (f1) -> act -> maxpool p -> conv k (f2) -> act -> maxpool p
//!             -> flatten -> dense (fc_units) -> act -> dense (classes) -> logits
//! ```
//!
//! All arithmetic is `f64`. Convolutions are valid with stride 1.

mod checkpoint;
pub mod layers;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::Activation;
pub use train::{
    batch_loss_and_grads, evaluate, format_history_csv, sgd_step, train, Evaluation, HistoryRow, Labeled,
};

use crate::error::{Error, Result};
use crate::raster::GrayImage;
use crate::rng::{stage, RngStream};
use layers::{conv2d_backward, conv2d_forward, cross_entropy, dense_backward, dense_forward, maxpool_backward, maxpool_forward};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_data(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::Shape { expected: format!("{shape:?}"), actual: format!("{} values", data.len()) });
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub input_size: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub fc_units: usize,
    pub classes: usize,
    pub activation: Activation,
    pub init: Init,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Epochs without a new best validation error before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Compute per-sample gradients of a batch on the rayon pool. The
    /// reduction order is fixed, so results match the sequential path.
    pub data_parallel: bool,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            input_size: 48,
            conv1_filters: 3,
            conv2_filters: 5,
            kernel: 5,
            pool: 2,
            fc_units: 50,
            classes: 2,
            activation: Activation::Relu,
            init: Init::Glorot,
            lr: 0.01,
            batch: 100,
            epochs: 500,
            patience: 50,
            seed: 0,
            data_parallel: false,
        }
    }
}

impl CnnConfig {
    /// Wider variant used for the trade-flow networks.
    pub fn trade() -> Self {
        CnnConfig { conv1_filters: 15, conv2_filters: 30, fc_units: 300, ..Default::default() }
    }

    pub fn geometry(&self) -> Result<Geometry> {
        let bad = |why: String| Err(Error::InvalidParams(format!("CNN config: {why}")));
        if [self.input_size, self.conv1_filters, self.conv2_filters, self.kernel, self.pool, self.fc_units, self.classes, self.batch]
            .contains(&0)
        {
            return bad("all sizes must be positive".into());
        }
        if self.kernel % 2 == 0 {
            return bad(format!("kernel {} must be odd", self.kernel));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("learning rate {}", self.lr));
        }
        let conv = |side: usize| -> Option<usize> { (side >= self.kernel).then(|| side - self.kernel + 1) };
        let pool = |side: usize| -> Option<usize> { (side % self.pool == 0).then(|| side / self.pool) };
        let Some(conv1) = conv(self.input_size) else { return bad("input smaller than kernel".into()) };
        let Some(pool1) = pool(conv1) else { return bad(format!("conv1 side {conv1} not divisible by pool")) };
        let Some(conv2) = conv(pool1) else { return bad(format!("pool1 side {pool1} smaller than kernel")) };
        let Some(pool2) = pool(conv2) else { return bad(format!("conv2 side {conv2} not divisible by pool")) };
        if pool2 == 0 {
            return bad("feature map vanishes".into());
        }
        Ok(Geometry { input: self.input_size, conv1, pool1, conv2, pool2, flatten: self.conv2_filters * pool2 * pool2 })
    }
}

/// Side lengths of each square feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub input: usize,
    pub conv1: usize,
    pub pool1: usize,
    pub conv2: usize,
    pub pool2: usize,
    pub flatten: usize,
}

/// Every trainable tensor, in checkpoint order. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
}

pub const PARAM_NAMES: [&str; 8] = ["conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b"];

impl Params {
    pub fn zeros(cfg: &CnnConfig) -> Result<Self> {
        let g = cfg.geometry()?;
        let k = cfg.kernel;
        Ok(Params {
            conv1_w: Tensor::zeros(&[cfg.conv1_filters, 1, k, k]),
            conv1_b: Tensor::zeros(&[cfg.conv1_filters]),
            conv2_w: Tensor::zeros(&[cfg.conv2_filters, cfg.conv1_filters, k, k]),
            conv2_b: Tensor::zeros(&[cfg.conv2_filters]),
            fc1_w: Tensor::zeros(&[cfg.fc_units, g.flatten]),
            fc1_b: Tensor::zeros(&[cfg.fc_units]),
            fc2_w: Tensor::zeros(&[cfg.classes, cfg.fc_units]),
            fc2_b: Tensor::zeros(&[cfg.classes]),
        })
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        [&self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b, &self.fc1_w, &self.fc1_b, &self.fc2_w, &self.fc2_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += other`, element by element in declared order.
    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn norms(&self) -> String {
        PARAM_NAMES
            .iter()
            .zip(self.tensors())
            .map(|(n, t)| format!("{n}={:.3e}", t.norm()))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Activations kept by [`CnnModel::forward`] for backpropagation and for
/// inspecting feature maps.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub conv1_pre: Vec<f64>,
    pub conv1_act: Vec<f64>,
    pub pool1: Vec<f64>,
    pub pool1_arg: Vec<usize>,
    pub conv2_pre: Vec<f64>,
    pub conv2_act: Vec<f64>,
    pub pool2: Vec<f64>,
    pub pool2_arg: Vec<usize>,
    pub fc1_pre: Vec<f64>,
    pub fc1_act: Vec<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub config: CnnConfig,
    pub geometry: Geometry,
    pub params: Params,
}

/// Uniform weight initialisation scheme; biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// `±sqrt(6 / (fan_in + fan_out))`.
    #[default]
    Glorot,
    /// `±sqrt(6 / fan_in)`.
    He,
}

impl Init {
    pub fn limit(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            Init::Glorot => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            Init::He => (6.0 / fan_in as f64).sqrt(),
        }
    }
}

fn init_uniform(t: &mut Tensor, limit: f64, rng: &mut RngStream) {
    for x in &mut t.data {
        *x = rng.random_range(-limit..=limit);
    }
}

impl CnnModel {
    /// Uniform weights per `config.init`, zero biases, drawn from the config seed.
    pub fn new(config: CnnConfig) -> Result<Self> {
        let geometry = config.geometry()?;
        let mut params = Params::zeros(&config)?;
        let mut rng = RngStream::new(config.seed, stage::INIT);
        let k2 = config.kernel * config.kernel;
        let (f1, f2) = (config.conv1_filters, config.conv2_filters);
        let init = config.init;
        init_uniform(&mut params.conv1_w, init.limit(k2, f1 * k2), &mut rng);
        init_uniform(&mut params.conv2_w, init.limit(f1 * k2, f2 * k2), &mut rng);
        init_uniform(&mut params.fc1_w, init.limit(geometry.flatten, config.fc_units), &mut rng);
        init_uniform(&mut params.fc2_w, init.limit(config.fc_units, config.classes), &mut rng);
        Ok(CnnModel { config, geometry, params })
    }

    pub fn from_params(config: CnnConfig, params: Params) -> Result<Self> {
        let geometry = config.geometry()?;
        let expected = Params::zeros(&config)?;
        for ((name, want), got) in PARAM_NAMES.iter().zip(expected.tensors()).zip(params.tensors()) {
            if want.shape != got.shape {
                return Err(Error::Shape {
                    expected: format!("{name} {:?}", want.shape),
                    actual: format!("{:?}", got.shape),
                });
            }
        }
        Ok(CnnModel { config, geometry, params })
    }

    pub fn forward(&self, image: &[f64]) -> Result<ForwardCache> {
        let g = &self.geometry;
        let c = &self.config;
        let p = &self.params;
        if image.len() != g.input * g.input {
            return Err(Error::Shape {
                expected: format!("{0}x{0} image", g.input),
                actual: format!("{} pixels", image.len()),
            });
        }
        let act = c.activation;
        let conv1_pre = conv2d_forward(image, 1, g.input, &p.conv1_w.data, &p.conv1_b.data, c.conv1_filters, c.kernel);
        let conv1_act: Vec<f64> = conv1_pre.iter().map(|&x| act.apply(x)).collect();
        let (pool1, pool1_arg) = maxpool_forward(&conv1_act, c.conv1_filters, g.conv1, c.pool);
        let conv2_pre = conv2d_forward(&pool1, c.conv1_filters, g.pool1, &p.conv2_w.data, &p.conv2_b.data, c.conv2_filters, c.kernel);
        let conv2_act: Vec<f64> = conv2_pre.iter().map(|&x| act.apply(x)).collect();
        let (pool2, pool2_arg) = maxpool_forward(&conv2_act, c.conv2_filters, g.conv2, c.pool);
        let fc1_pre = dense_forward(&pool2, &p.fc1_w.data, &p.fc1_b.data);
        let fc1_act: Vec<f64> = fc1_pre.iter().map(|&x| act.apply(x)).collect();
        let logits = dense_forward(&fc1_act, &p.fc2_w.data, &p.fc2_b.data);
        Ok(ForwardCache {
            input: image.to_vec(),
            conv1_pre,
            conv1_act,
            pool1,
            pool1_arg,
            conv2_pre,
            conv2_act,
            pool2,
            pool2_arg,
            fc1_pre,
            fc1_act,
            logits,
        })
    }

    pub fn forward_image(&self, image: &GrayImage) -> Result<ForwardCache> {
        self.forward(&image.pixels)
    }

    pub fn logits(&self, image: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(image)?.logits)
    }

    /// Arg-max class, lowest index on ties.
    pub fn predict(&self, image: &[f64]) -> Result<usize> {
        let logits = self.logits(image)?;
        Ok(logits
            .iter()
            .enumerate()
            .fold(0, |best, (i, &z)| if z > logits[best] { i } else { best }))
    }

    /// Cross-entropy of one sample and its gradient with respect to every
    /// parameter.
    pub fn loss_and_grads(&self, image: &[f64], label: usize) -> Result<(f64, Params)> {
        let c = &self.config;
        if label >= c.classes {
            return Err(Error::InvalidParams(format!("label {label} outside {} classes", c.classes)));
        }
        let g = &self.geometry;
        let p = &self.params;
        let act = c.activation;
        let cache = self.forward(image)?;
        let loss = cross_entropy(&cache.logits, label);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(format!(
                "loss {loss}; parameter norms: {}; logits {:?}",
                p.norms(),
                cache.logits
            )));
        }

        let mut dlogits = layers::softmax(&cache.logits);
        dlogits[label] -= 1.0;
        let (fc2_w, fc2_b, dh) = dense_backward(&cache.fc1_act, &p.fc2_w.data, &dlogits);
        let dh_pre: Vec<f64> = dh
            .iter()
            .zip(cache.fc1_pre.iter().zip(&cache.fc1_act))
            .map(|(&d, (&pre, &out))| d * act.derivative(pre, out))
            .collect();
        let (fc1_w, fc1_b, dflat) = dense_backward(&cache.pool2, &p.fc1_w.data, &dh_pre);
        let dconv2_act = maxpool_backward(&dflat, &cache.pool2_arg, cache.conv2_act.len());
        let dconv2_pre: Vec<f64> = dconv2_act
            .iter()
            .zip(cache.conv2_pre.iter().zip(&cache.conv2_act))
            .map(|(&d, (&pre, &out))| d * act.derivative(pre, out))
            .collect();
        let (conv2_w, conv2_b, dpool1) =
            conv2d_backward(&cache.pool1, c.conv1_filters, g.pool1, &p.conv2_w.data, c.conv2_filters, c.kernel, &dconv2_pre, true);
        let dconv1_act = maxpool_backward(&dpool1.unwrap(), &cache.pool1_arg, cache.conv1_act.len());
        let dconv1_pre: Vec<f64> = dconv1_act
            .iter()
            .zip(cache.conv1_pre.iter().zip(&cache.conv1_act))
            .map(|(&d, (&pre, &out))| d * act.derivative(pre, out))
            .collect();
        let (conv1_w, conv1_b, _) =
            conv2d_backward(&cache.input, 1, g.input, &p.conv1_w.data, c.conv1_filters, c.kernel, &dconv1_pre, false);

        let t = |like: &Tensor, data: Vec<f64>| Tensor { shape: like.shape.clone(), data };
        let grads = Params {
            conv1_w: t(&p.conv1_w, conv1_w),
            conv1_b: t(&p.conv1_b, conv1_b),
            conv2_w: t(&p.conv2_w, conv2_w),
            conv2_b: t(&p.conv2_b, conv2_b),
            fc1_w: t(&p.fc1_w, fc1_w),
            fc1_b: t(&p.fc1_b, fc1_b),
            fc2_w: t(&p.fc2_w, fc2_w),
            fc2_b: t(&p.fc2_b, fc2_b),
        };
        Ok((loss, grads))
    }

    /// Layer-1 pooled feature map of `filter`, `pool1 x pool1`, row-major.
    pub fn layer1_feature_map<'c>(&self, cache: &'c ForwardCache, filter: usize) -> Result<&'c [f64]> {
        if filter >= self.config.conv1_filters {
            return Err(Error::InvalidParams(format!(
                "filter {filter} out of range ({} layer-1 filters)",
                self.config.conv1_filters
            )));
        }
        let side = self.geometry.pool1;
        Ok(&cache.pool1[filter * side * side..(filter + 1) * side * side])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry() {
        let g = CnnConfig::default().geometry().unwrap();
        assert_eq!((g.conv1, g.pool1, g.conv2, g.pool2, g.flatten), (44, 22, 18, 9, 405));
        assert_eq!(CnnConfig::trade().geometry().unwrap().flatten, 30 * 81);
    }

    #[test]
    fn intermediate_shapes() {
        let m = CnnModel::new(CnnConfig::default()).unwrap();
        let cache = m.forward(&vec![0.3; 48 * 48]).unwrap();
        assert_eq!(cache.conv1_act.len(), 3 * 44 * 44);
        assert_eq!(cache.pool1.len(), 3 * 22 * 22);
        assert_eq!(cache.conv2_act.len(), 5 * 18 * 18);
        assert_eq!(cache.pool2.len(), 5 * 9 * 9);
        assert_eq!(cache.fc1_act.len(), 50);
        assert_eq!(cache.logits.len(), 2);
    }

    #[test]
    fn zero_image_gives_uniform_softmax() {
        let m = CnnModel::new(CnnConfig::default()).unwrap();
        let cache = m.forward(&vec![0.0; 48 * 48]).unwrap();
        assert_eq!(cache.logits, vec![0.0, 0.0]);
        assert_eq!(layers::softmax(&cache.logits), vec![0.5, 0.5]);
        let (loss, _) = m.loss_and_grads(&vec![0.0; 48 * 48], 0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes_and_configs() {
        let m = CnnModel::new(CnnConfig::default()).unwrap();
        assert!(matches!(m.forward(&[0.0; 10]), Err(Error::Shape { .. })));
        assert!(m.loss_and_grads(&vec![0.0; 48 * 48], 2).is_err());
        assert!(CnnConfig { kernel: 4, ..Default::default() }.geometry().is_err());
        assert!(CnnConfig { input_size: 47, ..Default::default() }.geometry().is_err());
        assert!(CnnConfig { input_size: 8, ..Default::default() }.geometry().is_err());
        assert!(m.layer1_feature_map(&m.forward(&vec![0.0; 2304]).unwrap(), 3).is_err());
    }

    #[test]
    fn init_is_seeded_glorot() {
        let a = CnnModel::new(CnnConfig { seed: 3, ..Default::default() }).unwrap();
        let b = CnnModel::new(CnnConfig { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / (405.0 + 50.0)).sqrt();
        assert!(a.params.fc1_w.data.iter().all(|x| x.abs() <= limit));
        assert!(a.params.conv1_b.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn predict_breaks_ties_low() {
        let m = CnnModel::new(CnnConfig::default()).unwrap();
        assert_eq!(m.predict(&vec![0.0; 2304]).unwrap(), 0);
    }
}
