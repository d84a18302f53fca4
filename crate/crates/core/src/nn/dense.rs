use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};

use super::tape::{all_finite, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default negative slope for hidden leaky-ReLU layers.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HiddenActivation {
    LeakyRelu(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
}

/// Multilayer affine network: `x W_lᵀ + b_l`, leaky-ReLU between layers,
/// linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layer_dims: Vec<usize>,
    /// Layer `l` maps `layer_dims[l]` → `layer_dims[l + 1]`; shape out × in.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    hidden: HiddenActivation,
    output: OutputActivation,
}

/// A network's parameters registered on a tape.
#[derive(Debug, Clone)]
pub struct BoundNet {
    weights: Vec<Var>,
    biases: Vec<Var>,
    slope: f64,
}

impl BoundNet {
    /// Parameter handles in checkpoint order: W0, b0, W1, b1, ...
    pub fn params(&self) -> Vec<Var> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [*w, *b])
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, input: Var) -> Var {
        let mut h = input;
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wt = tape.transpose(*w);
            let a = tape.matmul(h, wt);
            h = tape.add_row(a, *b);
            if l < last {
                h = tape.leaky_relu(h, self.slope);
            }
        }
        h
    }
}

impl DenseNet {
    /// He-normal weights (std √(2/fan_in)), zero biases.
    pub fn new(layer_dims: &[usize], slope: f64, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, slope)?;
        for w in &mut net.weights {
            let fan_in = w.ncols() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            w.mapv_inplace(|_| normal.sample(rng));
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize], slope: f64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must be positive, got {layer_dims:?}"
            )));
        }
        if !slope.is_finite() {
            return Err(Error::Config("leaky-relu slope must be finite".into()));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_dims[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            hidden: HiddenActivation::LeakyRelu(slope),
            output: OutputActivation::Linear,
        })
    }

    /// Rebuild from explicit layer matrices (out × in) and biases.
    pub fn from_layers(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        slope: f64,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Config(
                "need one bias per weight matrix and at least one layer".into(),
            ));
        }
        let mut dims = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *dims.last().unwrap() || b.len() != w.nrows() {
                return Err(Error::Config(format!("layer {l} shape mismatch")));
            }
            dims.push(w.nrows());
        }
        let mut net = Self::zeros(&dims, slope)?;
        net.weights = weights;
        net.biases = biases;
        net.check_finite()?;
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn slope(&self) -> f64 {
        match self.hidden {
            HiddenActivation::LeakyRelu(s) => s,
        }
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Batch forward pass; row `i` of the output depends only on row `i`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Config(format!(
                "input has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let slope = self.slope();
        let last = self.weights.len() - 1;
        let mut h = batch.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = h.dot(&w.t()) + b.view().insert_axis(Axis(0));
            if l < last {
                h.mapv_inplace(|x| if x > 0.0 { x } else { slope * x });
            }
        }
        Ok(h)
    }

    /// Register parameters on `tape`, as variables when `trainable`,
    /// otherwise as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundNet {
        let mut weights = Vec::with_capacity(self.weights.len());
        let mut biases = Vec::with_capacity(self.biases.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let b = b.view().insert_axis(Axis(0)).to_owned();
            if trainable {
                weights.push(tape.var(w.clone()));
                biases.push(tape.var(b));
            } else {
                weights.push(tape.constant(w.clone()));
                biases.push(tape.constant(b));
            }
        }
        BoundNet {
            weights,
            biases,
            slope: self.slope(),
        }
    }

    /// Mutable flat views in checkpoint order: W0, b0, W1, b1, ...
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| {
                [
                    w.as_slice_mut().expect("standard layout"),
                    b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Usage(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut off = 0;
        for slot in self.param_slices_mut() {
            let n = slot.len();
            slot.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self.weights.iter().all(all_finite)
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()));
        if ok {
            Ok(())
        } else {
            Err(Error::Numeric("non-finite network parameter".into()))
        }
    }
}

/// Flatten per-parameter gradient tensors (as returned by [`Tape::grad`] on
/// [`BoundNet::params`]) into checkpoint order.
pub fn flatten_grads(tape: &Tape, grads: &[Var]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|g| tape.value(*g).iter().copied().collect::<Vec<_>>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use ndarray::array;

    #[test]
    fn identity_single_layer() {
        let net = DenseNet::from_layers(
            vec![array![[1.0, 0.0], [0.0, 1.0]]],
            vec![array![0.0, 0.0]],
            LEAKY_SLOPE,
        )
        .unwrap();
        let out = net.forward(&array![[1.0, 2.0]]).unwrap();
        assert_eq!(out, array![[1.0, 2.0]]);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 5, 2], LEAKY_SLOPE).unwrap();
        let out = net.forward(&array![[1.0, -7.0, 3.0], [0.1, 0.2, 0.3]]).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_layer_hand_evaluation() {
        // h = leaky([1, -2]·W0ᵀ + b0), W0 = [[1, 1], [2, -1]], b0 = [0.5, -5]
        //   pre = [1 - 2 + 0.5, 2 + 2 - 5] = [-0.5, -1] → [-0.1, -0.2]
        // y = h·W1ᵀ + b1, W1 = [[3, -4]], b1 = [0.25] → -0.3 + 0.8 + 0.25 = 0.75
        let net = DenseNet::from_layers(
            vec![array![[1.0, 1.0], [2.0, -1.0]], array![[3.0, -4.0]]],
            vec![array![0.5, -5.0], array![0.25]],
            0.2,
        )
        .unwrap();
        let out = net.forward(&array![[1.0, -2.0]]).unwrap();
        assert!((out[[0, 0]] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let net = DenseNet::zeros(&[3, 2], LEAKY_SLOPE).unwrap();
        assert!(matches!(
            net.forward(&array![[1.0, 2.0]]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let mut rng = stream(3, Stream::Init);
        let net = DenseNet::new(&[4, 6, 6, 2], LEAKY_SLOPE, &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 - 2.0) * 0.3 + j as f64 * 0.1);
        let plain = net.forward(&x).unwrap();
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, true);
        let xi = tape.constant(x);
        let y = bound.forward(&mut tape, xi);
        assert_eq!(tape.value(y), &plain);
    }

    #[test]
    fn rows_are_independent() {
        let mut rng = stream(4, Stream::Init);
        let net = DenseNet::new(&[3, 8, 1], LEAKY_SLOPE, &mut rng).unwrap();
        let batch = array![[0.1, 0.2, 0.3], [-1.0, 2.0, 0.5]];
        let out = net.forward(&batch).unwrap();
        for i in 0..2 {
            let row = batch.row(i).insert_axis(Axis(0)).to_owned();
            assert_eq!(net.forward(&row).unwrap()[[0, 0]], out[[i, 0]]);
        }
    }

    #[test]
    fn flat_params_round_trip() {
        let mut rng = stream(5, Stream::Init);
        let net = DenseNet::new(&[3, 4, 2], LEAKY_SLOPE, &mut rng).unwrap();
        let flat = net.flat_params();
        let mut other = DenseNet::zeros(&[3, 4, 2], LEAKY_SLOPE).unwrap();
        other.set_flat_params(&flat).unwrap();
        assert_eq!(net, other);
    }
}
