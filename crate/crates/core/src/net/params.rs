use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Gate block order inside the stacked `4H` rows of every LSTM weight matrix.
pub const GATE_ORDER: &str = "ifgo";

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_LAYERS: usize = 2;
pub const DEFAULT_DROPOUT: f64 = 0.2;

/// Which activations receive a dropout mask.
///
/// `input` masks the raw features entering the first layer, `hidden` masks
/// the hidden state each lower layer passes upward, and `head` masks the
/// post-ReLU features entering the linear output layer. The output of the
/// head itself is never dropped, and neither is the recurrent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DropoutSites {
    pub input: bool,
    pub hidden: bool,
    pub head: bool,
}

impl Default for DropoutSites {
    fn default() -> Self {
        Self {
            input: true,
            hidden: true,
            head: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub num_layers: usize,
    pub output_dim: usize,
    pub dropout_rate: f64,
    pub sites: DropoutSites,
}

impl NetConfig {
    /// Same input and output width, default sites.
    pub fn new(width: usize, hidden: usize, num_layers: usize, dropout_rate: f64) -> Self {
        Self {
            input_dim: width,
            hidden,
            num_layers,
            output_dim: width,
            dropout_rate,
            sites: DropoutSites::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.num_layers == 0 || self.output_dim == 0
        {
            return Err(Error::invalid(format!(
                "network dimensions must be positive (input {}, hidden {}, layers {}, output {})",
                self.input_dim, self.hidden, self.num_layers, self.output_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.hidden
        }
    }

    /// Whether the input of `layer` is masked.
    pub fn layer_input_dropped(&self, layer: usize) -> bool {
        if layer == 0 {
            self.sites.input
        } else {
            self.sites.hidden
        }
    }

    pub fn param_count(&self) -> usize {
        count(self.input_dim, self.hidden, self.num_layers, self.output_dim)
    }
}

/// Number of learnable scalars in a stacked LSTM with dual bias vectors and a
/// linear head: `Σ_l [4H·D_l + 4H·H + 8H] + out·H + out`.
pub fn param_count(
    input_dim: usize,
    hidden: usize,
    num_layers: usize,
    output_dim: usize,
) -> Result<usize> {
    if input_dim == 0 || hidden == 0 || num_layers == 0 || output_dim == 0 {
        return Err(Error::invalid("param_count dimensions must be at least 1"));
    }
    Ok(count(input_dim, hidden, num_layers, output_dim))
}

fn count(input_dim: usize, hidden: usize, num_layers: usize, output_dim: usize) -> usize {
    let g = 4 * hidden;
    (0..num_layers)
        .map(|l| {
            let d = if l == 0 { input_dim } else { hidden };
            g * d + g * hidden + 2 * g
        })
        .sum::<usize>()
        + output_dim * hidden
        + output_dim
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// `4H × D_in`, gate blocks stacked in [`GATE_ORDER`].
    pub w_ih: Matrix,
    /// `4H × H`.
    pub w_hh: Matrix,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_ih: Matrix::zeros(4 * hidden, input_dim),
            w_hh: Matrix::zeros(4 * hidden, hidden),
            b_ih: vec![0.0; 4 * hidden],
            b_hh: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.cols()
    }
}

/// All learnable tensors. Gradients and optimizer moments share this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<LstmLayerParams>,
    /// `out × H`.
    pub head_w: Matrix,
    pub head_b: Vec<f64>,
}

impl Weights {
    pub fn zeros(config: &NetConfig) -> Self {
        let layers = (0..config.num_layers)
            .map(|l| LstmLayerParams::zeros(config.layer_input_dim(l), config.hidden))
            .collect();
        Self {
            layers,
            head_w: Matrix::zeros(config.output_dim, config.hidden),
            head_b: vec![0.0; config.output_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut w = self.clone();
        w.tensors_mut().into_iter().for_each(|(_, t)| t.fill(0.0));
        w
    }

    /// Tensors in checkpoint order: per layer `w_ih, w_hh, b_ih, b_hh`, then
    /// `head_w, head_b`.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(4 * self.layers.len() + 2);
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_ih"), layer.w_ih.as_slice()));
            out.push((format!("layer{l}.w_hh"), layer.w_hh.as_slice()));
            out.push((format!("layer{l}.b_ih"), layer.b_ih.as_slice()));
            out.push((format!("layer{l}.b_hh"), layer.b_hh.as_slice()));
        }
        out.push(("head.w".to_string(), self.head_w.as_slice()));
        out.push(("head.b".to_string(), self.head_b.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(4 * self.layers.len() + 2);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{l}.w_ih"), layer.w_ih.as_mut_slice()));
            out.push((format!("layer{l}.w_hh"), layer.w_hh.as_mut_slice()));
            out.push((format!("layer{l}.b_ih"), layer.b_ih.as_mut_slice()));
            out.push((format!("layer{l}.b_hh"), layer.b_hh.as_mut_slice()));
        }
        out.push(("head.w".to_string(), self.head_w.as_mut_slice()));
        out.push(("head.b".to_string(), self.head_b.as_mut_slice()));
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Checks that `other` has exactly the same tensor shapes.
    pub fn check_congruent(&self, other: &Weights) -> Result<()> {
        let a = self.tensors();
        let b = other.tensors();
        if a.len() != b.len() {
            return Err(Error::shape(format!(
                "expected {} tensors, got {}",
                a.len(),
                b.len()
            )));
        }
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            if x.len() != y.len() {
                return Err(Error::shape(format!(
                    "{name}: expected {} values, got {}",
                    x.len(),
                    y.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedLstmParams {
    pub config: NetConfig,
    pub weights: Weights,
}

impl StackedLstmParams {
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let weights = Weights::zeros(&config);
        Ok(Self { config, weights })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    /// Rounds every weight to the nearest single-precision value, which is
    /// what a checkpoint stores.
    pub fn round_to_f32(&self) -> Self {
        let mut out = self.clone();
        for (_, t) in out.weights.tensors_mut() {
            t.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
        out
    }

    pub fn with_dropout_rate(mut self, rate: f64) -> Result<Self> {
        self.config.dropout_rate = rate;
        self.config.validate()?;
        Ok(self)
    }
}

/// Draws every weight and bias uniformly from `[-1/√H, 1/√H]`.
pub fn init_params(config: NetConfig, seed: u64) -> Result<StackedLstmParams> {
    let mut params = StackedLstmParams::zeros(config)?;
    let bound = 1.0 / (params.config.hidden as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, t) in params.weights.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.gen_range(-bound..=bound);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_has_857140_parameters() {
        assert_eq!(param_count(52, 256, 2, 52).unwrap(), 857_140);
        // layer 1, layer 2, head
        assert_eq!(4 * 256 * 52 + 4 * 256 * 256 + 8 * 256, 317_440);
        assert_eq!(4 * 256 * 256 + 4 * 256 * 256 + 8 * 256, 526_336);
        assert_eq!(52 * 256 + 52, 13_364);
    }

    #[test]
    fn scalar_network_count() {
        assert_eq!(param_count(1, 1, 1, 1).unwrap(), 18);
    }

    #[test]
    fn zero_hidden_rejected() {
        assert!(param_count(52, 0, 2, 52).is_err());
        assert!(StackedLstmParams::zeros(NetConfig::new(52, 0, 2, 0.2)).is_err());
    }

    #[test]
    fn allocated_tensors_agree_with_formula() {
        let p = StackedLstmParams::zeros(NetConfig::new(52, 256, 2, 0.2)).unwrap();
        assert_eq!(p.param_count(), 857_140);
        let p = StackedLstmParams::zeros(NetConfig::new(5, 8, 3, 0.2)).unwrap();
        assert_eq!(p.param_count(), param_count(5, 8, 3, 5).unwrap());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = NetConfig::new(52, 256, 2, 0.2);
        let a = init_params(cfg.clone(), 7).unwrap();
        let b = init_params(cfg.clone(), 7).unwrap();
        let c = init_params(cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.weights, c.weights);
        for (_, t) in a.weights.tensors() {
            assert!(t.iter().all(|x| x.abs() <= 1.0 / 16.0));
        }
    }

    #[test]
    fn dropout_rate_of_one_rejected() {
        assert!(NetConfig::new(3, 4, 1, 1.0).validate().is_err());
        assert!(NetConfig::new(3, 4, 1, -0.1).validate().is_err());
    }
}
