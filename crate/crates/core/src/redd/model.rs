use std::io::{Cursor, Read};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingField, PageRecord};
use crate::error::{Error, Result};
use crate::util::{self, seeded_rng};

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

const MODEL_MAGIC: &[u8; 8] = b"REDDMDL1";

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

pub fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Linear,
    #[default]
    Nonlinear,
}

/// Affine layer; `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub(crate) fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub epochs_run: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: String,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub n_train: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReddModel {
    pub architecture: Architecture,
    pub layers: Vec<Dense>,
    pub selu_lambda: f64,
    pub selu_alpha: f64,
    pub version: u64,
    pub training: Option<TrainingMeta>,
}

fn layer_sizes(
    architecture: Architecture,
    input_dim: usize,
    hidden: &[usize],
) -> Result<Vec<usize>> {
    if input_dim == 0 {
        return Err(Error::InvalidArgument(
            "input dimension must be positive".into(),
        ));
    }
    let mut dims = vec![input_dim];
    match architecture {
        Architecture::Linear => {}
        Architecture::Nonlinear => {
            if hidden.len() != 3 || hidden.contains(&0) {
                return Err(Error::InvalidArgument(format!(
                    "nonlinear REDD needs exactly three positive hidden widths, got {hidden:?}"
                )));
            }
            dims.extend_from_slice(hidden);
        }
    }
    dims.push(1);
    Ok(dims)
}

/// Rounds to the nearest f32 so the model file reproduces parameters exactly.
fn round_f32(x: f64) -> f64 {
    f64::from(x as f32)
}

impl ReddModel {
    /// Seeded Gaussian initialization with standard deviation `1/sqrt(fan_in)`, zero biases.
    /// `hidden` is ignored for the linear variant.
    pub fn init(
        architecture: Architecture,
        input_dim: usize,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let dims = layer_sizes(architecture, input_dim, hidden)?;
        let mut rng = seeded_rng(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let std = 1.0 / (w[0] as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((w[1], w[0]), || {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    round_f32(z * std)
                });
                Dense {
                    weights,
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self::from_layers(architecture, layers))
    }

    pub fn zeros(architecture: Architecture, input_dim: usize, hidden: &[usize]) -> Result<Self> {
        let dims = layer_sizes(architecture, input_dim, hidden)?;
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self::from_layers(architecture, layers))
    }

    fn from_layers(architecture: Architecture, layers: Vec<Dense>) -> Self {
        ReddModel {
            architecture,
            layers,
            selu_lambda: SELU_LAMBDA,
            selu_alpha: SELU_ALPHA,
            version: 1,
            training: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::outputs));
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }

    pub(crate) fn round_to_f32(&mut self) {
        for l in &mut self.layers {
            l.weights.mapv_inplace(round_f32);
            l.bias.mapv_inplace(round_f32);
        }
    }

    fn activation(&self, z: f64) -> f64 {
        if z > 0.0 {
            self.selu_lambda * z
        } else {
            self.selu_lambda * self.selu_alpha * z.exp_m1()
        }
    }

    pub(crate) fn activation_derivative(&self, z: f64) -> f64 {
        if z > 0.0 {
            self.selu_lambda
        } else {
            self.selu_lambda * self.selu_alpha * z.exp()
        }
    }

    /// Pre-activations and activations of every layer. `activations[0]` is the input,
    /// the last pre-activation is the output logit column.
    pub(crate) fn forward_cached(
        &self,
        x: ArrayView2<f64>,
    ) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&acts[i].view());
            if i < last {
                acts.push(z.mapv(|v| self.activation(v)));
            }
            pre.push(z);
        }
        (pre, acts)
    }

    pub(crate) fn logits_unchecked(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h.view());
            h = if i < last {
                z.mapv(|v| self.activation(v))
            } else {
                z
            };
        }
        h.index_axis_move(Axis(1), 0)
    }

    /// Disinformation probabilities for each row of `batch` (`N x input_dim`).
    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array1<f64>> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::dims("model input", self.input_dim(), batch.ncols()));
        }
        if let Some((row, _)) = batch.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite input in row {}",
                row.0
            )));
        }
        if batch.nrows() == 0 {
            return Ok(Array1::zeros(0));
        }
        Ok(self.logits_unchecked(batch).mapv(sigmoid))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = ModelHeader {
            architecture: self.architecture,
            layer_dims: self.layer_dims(),
            selu_lambda: self.selu_lambda,
            selu_alpha: self.selu_alpha,
            version: self.version,
            training_meta: self.training.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.n_params());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for l in &self.layers {
            for &w in l.weights.iter().chain(l.bias.iter()) {
                out.extend_from_slice(&(w as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: String| Error::Format(format!("model file: {m}"));
        let mut cur = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic)
            .map_err(|_| fmt("truncated".into()))?;
        if &magic != MODEL_MAGIC {
            return Err(fmt("bad magic".into()));
        }
        let mut len = [0u8; 4];
        cur.read_exact(&mut len)
            .map_err(|_| fmt("truncated".into()))?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        cur.read_exact(&mut header)
            .map_err(|_| fmt("truncated header".into()))?;
        let header: ModelHeader =
            serde_json::from_slice(&header).map_err(|e| fmt(e.to_string()))?;
        let dims = &header.layer_dims;
        let hidden = if dims.len() >= 2 {
            &dims[1..dims.len() - 1]
        } else {
            &[][..]
        };
        let expected = layer_sizes(
            header.architecture,
            dims.first().copied().unwrap_or(0),
            hidden,
        )?;
        if &expected != dims {
            return Err(fmt(format!(
                "layer_dims {dims:?} inconsistent with {:?}",
                header.architecture
            )));
        }
        let mut values = bytes[cur.position() as usize..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))));
        let n_expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if bytes.len() - cur.position() as usize != 4 * n_expected {
            return Err(fmt(format!("expected {n_expected} parameters")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let weights =
                    Array2::from_shape_simple_fn((w[1], w[0]), || values.next().expect("sized"));
                let bias = Array1::from_shape_simple_fn(w[1], || values.next().expect("sized"));
                Dense { weights, bias }
            })
            .collect();
        let model = ReddModel {
            architecture: header.architecture,
            layers,
            selu_lambda: header.selu_lambda,
            selu_alpha: header.selu_alpha,
            version: header.version,
            training: header.training_meta,
        };
        if !model.is_finite() {
            return Err(fmt("non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&util::read_bytes(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    architecture: Architecture,
    layer_dims: Vec<usize>,
    selu_lambda: f64,
    selu_alpha: f64,
    version: u64,
    training_meta: Option<TrainingMeta>,
}

/// Stacks the chosen embedding of each page into an `N x D` matrix.
pub fn embedding_matrix(pages: &[&PageRecord], field: EmbeddingField) -> Result<Array2<f64>> {
    let Some(first) = pages.first() else {
        return Ok(Array2::zeros((0, 0)));
    };
    let d = first.require_embedding(field)?.len();
    let mut m = Array2::zeros((pages.len(), d));
    for (i, p) in pages.iter().enumerate() {
        let v = p.require_embedding(field)?;
        if v.len() != d {
            return Err(Error::dims(
                format!("embedding of `{}`", p.page_id),
                d,
                v.len(),
            ));
        }
        m.row_mut(i)
            .iter_mut()
            .zip(v)
            .for_each(|(dst, &x)| *dst = f64::from(x));
    }
    Ok(m)
}

/// Scores pages in input order.
pub fn predict_pages<'a, I>(model: &ReddModel, pages: I) -> Result<Vec<(String, f64)>>
where
    I: IntoIterator<Item = &'a PageRecord>,
{
    let pages: Vec<&PageRecord> = pages.into_iter().collect();
    if pages.is_empty() {
        return Ok(Vec::new());
    }
    let x = embedding_matrix(&pages, EmbeddingField::Reduced)?;
    let p = model.forward(x.view())?;
    Ok(pages
        .iter()
        .zip(p)
        .map(|(pg, s)| (pg.page_id.clone(), s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn selu_examples() {
        assert_eq!(selu(0.0), 0.0);
        assert_eq!(selu(1.0), 1.0507009873554805);
        assert!((selu(-40.0) + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-6);
        assert!((SELU_LAMBDA * SELU_ALPHA - 1.7581).abs() < 1e-4);
    }

    #[test]
    fn zero_linear_model_outputs_half() {
        let m = ReddModel::zeros(Architecture::Linear, 4, &[]).unwrap();
        let p = m
            .forward(array![[1.0, -2.0, 3.0, 0.5], [0.0, 0.0, 0.0, 0.0]].view())
            .unwrap();
        assert_eq!(p.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn architecture_shapes() {
        let m = ReddModel::init(Architecture::Nonlinear, 100, &[128, 64, 32], 1).unwrap();
        assert_eq!(m.layer_dims(), vec![100, 128, 64, 32, 1]);
        let l = ReddModel::init(Architecture::Linear, 100, &[128, 64, 32], 1).unwrap();
        assert_eq!(l.layer_dims(), vec![100, 1]);
        assert!(ReddModel::init(Architecture::Nonlinear, 100, &[8, 8], 1).is_err());
    }

    #[test]
    fn forward_errors() {
        let m = ReddModel::init(Architecture::Linear, 3, &[], 1).unwrap();
        assert!(matches!(
            m.forward(array![[1.0, 2.0]].view()).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
        assert!(m.forward(array![[1.0, f64::NAN, 0.0]].view()).is_err());
    }

    #[test]
    fn rows_are_independent() {
        let m = ReddModel::init(Architecture::Nonlinear, 10, &[16, 8, 4], 3).unwrap();
        let mut rng = seeded_rng(1);
        let batch = Array2::from_shape_simple_fn((64, 10), || rng.random_range(-2.0..2.0));
        let all = m.forward(batch.view()).unwrap();
        for i in [0, 17, 63] {
            let one = m.forward(batch.slice(ndarray::s![i..i + 1, ..])).unwrap();
            assert!((one[0] - all[i]).abs() < 1e-7);
        }
        assert!(all.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    /// Scalar loops over plain vectors, independent of ndarray.
    fn oracle_forward(m: &ReddModel, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        for (li, l) in m.layers.iter().enumerate() {
            let mut z = vec![0.0; l.outputs()];
            for (o, zo) in z.iter_mut().enumerate() {
                *zo = l.bias[o];
                for (i, hi) in h.iter().enumerate() {
                    *zo += l.weights[[o, i]] * hi;
                }
            }
            h = if li + 1 < m.layers.len() {
                z.iter()
                    .map(|&v| {
                        if v > 0.0 {
                            1.0507009873554805 * v
                        } else {
                            1.0507009873554805 * 1.6732632423543772 * (v.exp() - 1.0)
                        }
                    })
                    .collect()
            } else {
                z
            };
        }
        1.0 / (1.0 + (-h[0]).exp())
    }

    #[test]
    fn tiny_model_matches_oracle() {
        let mut m = ReddModel::init(Architecture::Nonlinear, 3, &[2, 2, 2], 7).unwrap();
        let mut rng = seeded_rng(2);
        for l in &mut m.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let batch = Array2::from_shape_simple_fn((5, 3), || rng.random_range(-3.0..3.0));
        let p = m.forward(batch.view()).unwrap();
        for i in 0..5 {
            let want = oracle_forward(&m, &batch.row(i).to_vec());
            assert!((p[i] - want).abs() < 1e-6, "{} vs {}", p[i], want);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let mut m = ReddModel::init(Architecture::Nonlinear, 5, &[4, 3, 2], 9).unwrap();
        m.version = 7;
        let back = ReddModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let bytes = m.to_bytes();
        assert!(ReddModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(ReddModel::from_bytes(b"garbage!").is_err());
    }

    #[test]
    fn predict_pages_order_and_empty() {
        let m = ReddModel::init(Architecture::Linear, 2, &[], 1).unwrap();
        assert!(predict_pages(&m, &[]).unwrap().is_empty());
        let mut a = PageRecord::new("a", "d", "en");
        a.embedding_reduced = Some(vec![1.0, 0.0]);
        let mut b = PageRecord::new("b", "d", "en");
        b.embedding_reduced = Some(vec![0.0, 1.0]);
        let out = predict_pages(&m, &[b.clone(), a.clone()]).unwrap();
        assert_eq!(out[0].0, "b");
        let single = predict_pages(&m, std::iter::once(&a)).unwrap();
        assert!((single[0].1 - out[1].1).abs() < 1e-7);
    }
}
