//! Small dense networks with hand-written backpropagation.
//!
//! Layers are generic over the float type so that a 64-bit replica of a
//! trained 32-bit model can be built for finite-difference checks.

pub mod optim;

use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, NdFloat};
use num_traits::NumCast;
use rand::Rng as _;

use crate::rng::Rng;

/// Float types the networks run on.
pub trait Float: NdFloat + NumCast + Default + Send + Sync {}
impl Float for f32 {}
impl Float for f64 {}

pub fn cast<A: Float, B: Float>(v: A) -> B {
    <B as NumCast>::from(v).expect("finite float casts")
}

/// Affine map `y = x W + b` with `W` stored as `(inputs, outputs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Float> Linear<F> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear { weight: Array2::zeros((inputs, outputs)), bias: Array1::zeros(outputs) }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((inputs, outputs), || cast(rng.random_range(-limit..limit)));
        Linear { weight, bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<F>, dy: ArrayView2<F>, grad: &mut Linear<F>, need_dx: bool) -> Option<Array2<F>> {
        ndarray::linalg::general_mat_mul(F::one(), &x.t(), &dy, F::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
        need_dx.then(|| dy.dot(&self.weight.t()))
    }

    pub fn cast<G: Float>(&self) -> Linear<G> {
        Linear { weight: self.weight.mapv(cast), bias: self.bias.mapv(cast) }
    }
}

/// Stack of linear layers with `tanh` between them and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Linear<F>>,
}

/// Per-layer inputs saved by the forward pass.
pub struct MlpCache<F> {
    inputs: Vec<Array2<F>>,
}

impl<F: Float> Mlp<F> {
    pub fn init(sizes: &[usize], rng: &mut Rng) -> Self {
        Mlp { layers: sizes.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect() }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp { layers: self.layers.iter().map(|l| Linear::zeros(l.inputs(), l.outputs())).collect() }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn forward(&self, x: Array2<F>) -> (Array2<F>, MlpCache<F>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(h.view());
            if i + 1 < self.layers.len() {
                y.mapv_inplace(|v| v.tanh());
            }
            inputs.push(h);
            h = y;
        }
        (h, MlpCache { inputs })
    }

    pub fn predict(&self, x: Array2<F>) -> Array2<F> {
        self.forward(x).0
    }

    /// Backpropagates `dout`, accumulating into `grad`; returns `dL/dx` when
    /// requested.
    pub fn backward(&self, cache: &MlpCache<F>, dout: Array2<F>, grad: &mut Mlp<F>, need_dx: bool) -> Option<Array2<F>> {
        let mut d = dout;
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            let want = need_dx || i > 0;
            let dx = self.layers[i].backward(x.view(), d.view(), &mut grad.layers[i], want);
            match dx {
                Some(mut dx) if i > 0 => {
                    // x is tanh output of the previous layer.
                    ndarray::Zip::from(&mut dx).and(x).for_each(|g, &a| *g = *g * (F::one() - a * a));
                    d = dx;
                }
                other => return other,
            }
        }
        None
    }

    pub fn cast<G: Float>(&self) -> Mlp<G> {
        Mlp { layers: self.layers.iter().map(Linear::cast).collect() }
    }

    pub fn tensors(&self, prefix: &str) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), l.weight.view().into_dyn()));
            out.push((format!("{prefix}.{i}.bias"), l.bias.view().into_dyn()));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>> {
        let mut out = Vec::new();
        for l in self.layers.iter_mut() {
            out.push(l.weight.view_mut().into_dyn());
            out.push(l.bias.view_mut().into_dyn());
        }
        out
    }
}

/// Models whose parameters can be enumerated in a fixed order.
pub trait Parameters<F> {
    fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, F>)>;
    fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, F>>;

    fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn all_finite(&self) -> bool
    where
        F: Float,
    {
        self.named_tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Reads the `index`-th scalar in declaration order.
pub fn get_param<F: Float, P: Parameters<F>>(model: &P, index: usize) -> F {
    let mut i = index;
    for (_, t) in model.named_tensors() {
        if i < t.len() {
            return *t.iter().nth(i).expect("in range");
        }
        i -= t.len();
    }
    panic!("parameter index {index} out of range")
}

/// Writes the `index`-th scalar in declaration order.
pub fn set_param<F: Float, P: Parameters<F>>(model: &mut P, index: usize, value: F) {
    let mut i = index;
    for mut t in model.tensors_mut() {
        if i < t.len() {
            *t.iter_mut().nth(i).expect("in range") = value;
            return;
        }
        i -= t.len();
    }
    panic!("parameter index {index} out of range")
}
