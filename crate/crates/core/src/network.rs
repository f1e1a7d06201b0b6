//! Multi-layer perceptron model, input images and activation traces.

use crate::error::{Error, Result};
use crate::kernels::{activation_forward, bias_add, gemm, Activation, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<S> {
    /// `n_k x n_{k-1}`.
    pub weights: Matrix<S>,
    pub bias: Vec<S>,
}

/// A fully connected network. `sizes[0]` is the input dimension and
/// `sizes[k]` the width of layer `k` for `k = 1..=L`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<S> {
    sizes: Vec<usize>,
    layers: Vec<Layer<S>>,
    activation: Activation,
}

impl<S: Scalar> Network<S> {
    pub fn new(sizes: Vec<usize>, layers: Vec<Layer<S>>, activation: Activation) -> Result<Network<S>> {
        if layers.is_empty() || sizes.len() != layers.len() + 1 {
            return Err(Error::Shape(format!(
                "{} layer sizes for {} weight layers",
                sizes.len(),
                layers.len()
            )));
        }
        if let Some(k) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::Shape(format!("layer {k} has zero width")));
        }
        for (k, layer) in layers.iter().enumerate() {
            let (rows, cols) = (sizes[k + 1], sizes[k]);
            if layer.weights.rows() != rows || layer.weights.cols() != cols {
                return Err(Error::Shape(format!(
                    "layer {} weights are {}x{}, expected {rows}x{cols}",
                    k + 1,
                    layer.weights.rows(),
                    layer.weights.cols()
                )));
            }
            if layer.bias.len() != rows {
                return Err(Error::Shape(format!(
                    "layer {} bias has {} values, expected {rows}",
                    k + 1,
                    layer.bias.len()
                )));
            }
        }
        Ok(Network {
            sizes,
            layers,
            activation,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of weight layers `L`.
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    /// Neurons in layers `1..=L`; input pixels are not neurons.
    pub fn neuron_count(&self) -> usize {
        self.sizes[1..].iter().sum()
    }

    /// Converts every weight and bias to another carrier.
    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T + Copy) -> Network<T> {
        Network {
            sizes: self.sizes.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: l.weights.map(f),
                    bias: l.bias.iter().map(|&b| f(b)).collect(),
                })
                .collect(),
            activation: self.activation,
        }
    }

    /// Decoded double-precision copy, evaluated with the exact logistic.
    pub fn to_f64(&self) -> Network<f64> {
        self.map(Scalar::to_f64)
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {len} values, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass through the kernel models: `u = W y + b`, `y = act(u)`.
    pub fn forward_eval(&self, input: &ImageVec<S>) -> Result<ActivationTrace<S>> {
        self.forward_values(input.pixels())
    }

    pub fn forward_values(&self, input: &[S]) -> Result<ActivationTrace<S>> {
        self.check_input(input.len())?;
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut previous = input.to_vec();
        for layer in &self.layers {
            let product = gemm(&layer.weights, &Matrix::column(&previous))?;
            let potentials = bias_add(&product, &layer.bias)?.into_data();
            let outputs = activation_forward(&potentials, self.activation);
            previous = outputs.clone();
            layers.push(LayerTrace { potentials, outputs });
        }
        Ok(ActivationTrace { layers })
    }

    /// Single-pass evaluation of the final layer into reusable buffers; read
    /// the results through [`Scratch::outputs`] and
    /// [`Scratch::potentials`]. Bit-identical to [`Network::forward_eval`].
    pub fn eval_into(&self, input: &[S], scratch: &mut Scratch<S>) -> Result<()> {
        self.check_input(input.len())?;
        scratch.outputs.clear();
        scratch.outputs.extend_from_slice(input);
        for layer in &self.layers {
            scratch.potentials.clear();
            for (r, &b) in layer.bias.iter().enumerate() {
                let mut sum = S::zero();
                for (&w, &x) in layer.weights.row(r).iter().zip(&scratch.outputs) {
                    sum = sum + w * x;
                }
                scratch.potentials.push(sum + b);
            }
            scratch.outputs.clear();
            let activation = self.activation;
            scratch
                .outputs
                .extend(scratch.potentials.iter().map(|&u| activation.apply(u)));
        }
        Ok(())
    }
}

/// Reusable buffers for [`Network::eval_into`].
#[derive(Clone, Debug, Default)]
pub struct Scratch<S> {
    potentials: Vec<S>,
    outputs: Vec<S>,
}

impl<S> Scratch<S> {
    pub fn new() -> Scratch<S> {
        Scratch {
            potentials: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Final-layer potentials of the last evaluation.
    pub fn potentials(&self) -> &[S] {
        &self.potentials
    }

    /// Final-layer outputs of the last evaluation.
    pub fn outputs(&self) -> &[S] {
        &self.outputs
    }
}

/// Normalized image: `width * height` pixels in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageVec<S> {
    width: usize,
    height: usize,
    pixels: Vec<S>,
}

impl<S: Scalar> ImageVec<S> {
    pub fn new(width: usize, height: usize, pixels: Vec<S>) -> Result<ImageVec<S>> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(i) = pixels
            .iter()
            .position(|p| !(0.0..=1.0).contains(&p.to_f64()))
        {
            return Err(Error::Shape(format!(
                "pixel {i} = {} is outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(ImageVec {
            width,
            height,
            pixels,
        })
    }

    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Result<ImageVec<S>> {
        ImageVec::new(width, height, values.iter().map(|&v| S::from_f64(v)).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[S] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<S> {
        self.pixels
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> ImageVec<T> {
        ImageVec {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace<S> {
    pub potentials: Vec<S>,
    pub outputs: Vec<S>,
}

/// Potentials and outputs of every neuron in layers `1..=L` for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace<S> {
    layers: Vec<LayerTrace<S>>,
}

impl<S: Scalar> ActivationTrace<S> {
    /// Builds a trace from recorded potentials, deriving the outputs.
    pub fn from_potentials(potentials: Vec<Vec<S>>, activation: Activation) -> Result<ActivationTrace<S>> {
        if potentials.is_empty() || potentials.iter().any(Vec::is_empty) {
            return Err(Error::Shape("trace needs at least one non-empty layer".into()));
        }
        let layers = potentials
            .into_iter()
            .map(|u| {
                let outputs = activation_forward(&u, activation);
                LayerTrace {
                    potentials: u,
                    outputs,
                }
            })
            .collect();
        Ok(ActivationTrace { layers })
    }

    pub fn layers(&self) -> &[LayerTrace<S>] {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Widths of layers `1..=L`.
    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.potentials.len()).collect()
    }

    /// Potentials of layer `k` (1-based).
    pub fn potentials(&self, k: usize) -> &[S] {
        &self.layers[k - 1].potentials
    }

    /// Outputs of layer `k` (1-based).
    pub fn outputs(&self, k: usize) -> &[S] {
        &self.layers[k - 1].outputs
    }

    pub fn final_outputs(&self) -> &[S] {
        &self.layers[self.layers.len() - 1].outputs
    }

    pub fn final_potentials(&self) -> &[S] {
        &self.layers[self.layers.len() - 1].potentials
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted label: argmax over the output layer.
pub fn classify<S: Scalar>(trace: &ActivationTrace<S>) -> usize {
    argmax(trace.final_outputs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::Fx;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer(rows: &[&[f64]], bias: &[f64]) -> Layer<Fx> {
        let w: Vec<Vec<Fx>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| Fx::from_f64(v)).collect())
            .collect();
        Layer {
            weights: Matrix::from_rows(&w).unwrap(),
            bias: bias.iter().map(|&v| Fx::from_f64(v)).collect(),
        }
    }

    fn random_net(rng: &mut ChaCha8Rng, sizes: &[usize], activation: Activation) -> Network<Fx> {
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weights: Matrix::new(
                    w[1],
                    w[0],
                    (0..w[0] * w[1]).map(|_| Fx::from_f64(rng.gen_range(-2.0..2.0))).collect(),
                )
                .unwrap(),
                bias: (0..w[1]).map(|_| Fx::from_f64(rng.gen_range(-1.0..1.0))).collect(),
            })
            .collect();
        Network::new(sizes.to_vec(), layers, activation).unwrap()
    }

    #[test]
    fn shape_validation() {
        let bad = Network::new(vec![2, 1], vec![layer(&[&[1.0]], &[0.0])], Activation::Sigmoid);
        assert!(matches!(bad, Err(Error::Shape(_))));
        let bad_bias = Network::new(vec![1, 1], vec![layer(&[&[1.0]], &[0.0, 1.0])], Activation::Sigmoid);
        assert!(matches!(bad_bias, Err(Error::Shape(_))));
    }

    #[test]
    fn zero_weights_give_bias_potentials() {
        let net = Network::new(
            vec![2, 2],
            vec![layer(&[&[0.0, 0.0], &[0.0, 0.0]], &[0.75, -2.0])],
            Activation::Sigmoid,
        )
        .unwrap();
        let img = ImageVec::from_f64(2, 1, &[0.3, 0.9]).unwrap();
        let t = net.forward_eval(&img).unwrap();
        assert_eq!(t.potentials(1), &[Fx::from_f64(0.75), Fx::from_f64(-2.0)]);
        assert_eq!(t.outputs(1)[0], Fx::from_f64(0.75).sigmoid());
    }

    #[test]
    fn unit_weight_zero_input() {
        let net = Network::new(vec![1, 1], vec![layer(&[&[1.0]], &[0.0])], Activation::Sigmoid).unwrap();
        let t = net.forward_values(&[Fx::ZERO]).unwrap();
        assert_eq!(t.potentials(1), &[Fx::ZERO]);
        assert_eq!(t.outputs(1), &[Fx::HALF]);
    }

    #[test]
    fn relu_is_exact() {
        let net = Network::new(vec![1, 2], vec![layer(&[&[1.0], &[-1.0]], &[0.0, 0.0])], Activation::Relu).unwrap();
        let t = net.forward_values(&[Fx::from_f64(0.25)]).unwrap();
        assert_eq!(t.outputs(1), &[Fx::from_f64(0.25), Fx::ZERO]);
    }

    #[test]
    fn wrong_input_length() {
        let net = Network::new(vec![2, 1], vec![layer(&[&[1.0, 1.0]], &[0.0])], Activation::Sigmoid).unwrap();
        assert!(matches!(net.forward_values(&[Fx::ZERO]), Err(Error::Shape(_))));
    }

    #[test]
    fn classify_examples() {
        let t = ActivationTrace::from_potentials(vec![vec![Fx::from_f64(0.9), Fx::from_f64(0.1)]], Activation::Relu).unwrap();
        assert_eq!(classify(&t), 0);
        let tie = ActivationTrace::from_potentials(vec![vec![Fx::HALF, Fx::HALF]], Activation::Relu).unwrap();
        assert_eq!(classify(&tie), 0);
    }

    #[test]
    fn image_rejects_out_of_range_pixels() {
        assert!(ImageVec::<Fx>::from_f64(1, 1, &[1.5]).is_err());
        assert!(ImageVec::<Fx>::from_f64(2, 1, &[0.5]).is_err());
    }

    // Double-precision reference with its own loop, including the exact
    // logistic; the fixed-point trace must stay within the accumulated
    // rounding budget of the first layer.
    #[test]
    fn first_layer_matches_double_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let net = random_net(&mut rng, &[3, 4, 2], Activation::Sigmoid);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let input: Vec<Fx> = x.iter().map(|&v| Fx::from_f64(v)).collect();
            let trace = net.forward_values(&input).unwrap();
            let l1 = &net.layers()[0];
            for r in 0..4 {
                let exact: f64 = (0..3)
                    .map(|c| l1.weights.get(r, c).decode() * input[c].decode())
                    .sum::<f64>()
                    + l1.bias[r].decode();
                let got = trace.potentials(1)[r].decode();
                assert!((got - exact).abs() <= 3.0 * 2f64.powi(-15), "{got} vs {exact}");
            }
            let exact_net = net.to_f64();
            let reference = exact_net.forward_values(&x.iter().map(|&v| Fx::from_f64(v).decode()).collect::<Vec<_>>()).unwrap();
            for (a, b) in trace.final_outputs().iter().zip(reference.final_outputs()) {
                assert!((a.decode() - b).abs() < 0.02);
            }
        }
    }

    proptest! {
        #[test]
        fn fused_matches_kernel_path(seed in any::<u64>(), relu in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let act = if relu { Activation::Relu } else { Activation::Sigmoid };
            let sizes: Vec<usize> = (0..rng.gen_range(2..5)).map(|_| rng.gen_range(1..7)).collect();
            let net = random_net(&mut rng, &sizes, act);
            let input: Vec<Fx> = (0..sizes[0]).map(|_| Fx::from_f64(rng.gen_range(0.0..1.0))).collect();
            let trace = net.forward_values(&input).unwrap();
            let mut scratch = Scratch::new();
            net.eval_into(&input, &mut scratch).unwrap();
            prop_assert_eq!(scratch.outputs(), trace.final_outputs());
            prop_assert_eq!(scratch.potentials(), trace.final_potentials());
            let again = net.forward_values(&input).unwrap();
            prop_assert_eq!(&again, &trace);
            for l in trace.layers() {
                for (u, y) in l.potentials.iter().zip(&l.outputs) {
                    prop_assert_eq!(act.apply(*u), *y);
                }
            }
        }

        #[test]
        fn nonnegative_weights_are_monotone(seed in any::<u64>(), pixel in 0usize..4, bump in 1i32..20000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<Fx> = (0..12).map(|_| Fx::from_f64(rng.gen_range(0.0..3.0))).collect();
            let net = Network::new(
                vec![4, 3],
                vec![Layer { weights: Matrix::new(3, 4, w).unwrap(), bias: vec![Fx::ZERO; 3] }],
                Activation::Sigmoid,
            ).unwrap();
            let mut x: Vec<Fx> = (0..4).map(|_| Fx::from_raw(rng.gen_range(0..40000))).collect();
            let before = net.forward_values(&x).unwrap();
            x[pixel] = Fx::from_raw(x[pixel].raw() + bump);
            let after = net.forward_values(&x).unwrap();
            for (a, b) in before.potentials(1).iter().zip(after.potentials(1)) {
                prop_assert!(a <= b);
            }
        }
    }
}
