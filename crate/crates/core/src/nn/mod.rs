//! Fully connected index network with hand-written back-propagation.
//!
//! Hidden layers use rectifiers, the output layer is a single linear unit.
//! Parameters live in one flat vector; layer `l` stores its `out x in`
//! weight matrix row-major followed by its `out` biases.

mod adam;
mod checkpoint;

pub use adam::AdamState;
pub use checkpoint::Checkpoint;

use crate::arm::{logistic, Action};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Flat gradient aligned with [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &GradientVector, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Scratch buffers for a forward pass whose activations are reused by the
/// backward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub fn new(sizes: &[usize]) -> Self {
        let widest = sizes.iter().copied().max().unwrap_or(1);
        Self {
            acts: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; widest],
            delta_prev: vec![0.0; widest],
        }
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!("invalid layer sizes {sizes:?}")));
    }
    if *sizes.last().unwrap() != 1 {
        return Err(Error::InvalidArgument(format!(
            "index network must have one output, got {sizes:?}"
        )));
    }
    Ok(())
}

impl Mlp {
    /// `sum_l (n_l * n_{l+1} + n_{l+1})`.
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        validate_sizes(sizes)?;
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
        })
    }

    /// Weights uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init(sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = bound * (2.0 * rng.uniform() - 1.0);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        validate_sizes(sizes)?;
        let expected = Self::param_count(sizes);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.sizes)
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut ws = self.workspace();
        Ok(self.forward_ws(input, &mut ws))
    }

    /// Forward pass that keeps the activations in `ws` for a later
    /// [`Mlp::accumulate_grad`]. The caller guarantees the input length.
    pub fn forward_ws(&self, input: &[f64], ws: &mut Workspace) -> f64 {
        debug_assert_eq!(input.len(), self.input_dim());
        ws.acts[0].copy_from_slice(input);
        let layers = self.sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[off..off + n_in * n_out];
            let biases = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let x = &before[l];
            let y = &mut after[0];
            let hidden = l + 1 < layers;
            for j in 0..n_out {
                let row = &weights[j * n_in..(j + 1) * n_in];
                let z = biases[j] + row.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>();
                y[j] = if hidden { z.max(0.0) } else { z };
            }
            off += n_in * n_out + n_out;
        }
        ws.acts[layers][0]
    }

    /// Adds `scale * d f / d theta` to `grad`, using the activations of the
    /// last [`Mlp::forward_ws`] call on `ws`.
    pub fn accumulate_grad(&self, ws: &mut Workspace, scale: f64, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut off = self.params.len();
        ws.delta[0] = scale;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            off -= n_in * n_out + n_out;
            let x = &ws.acts[l];
            for j in 0..n_out {
                let d = ws.delta[j];
                if d == 0.0 {
                    continue;
                }
                let gw = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (g, v) in gw.iter_mut().zip(x.iter()) {
                    *g += d * v;
                }
                grad[off + n_in * n_out + j] += d;
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                for i in 0..n_in {
                    ws.delta_prev[i] = if x[i] > 0.0 {
                        (0..n_out).map(|j| weights[j * n_in + i] * ws.delta[j]).sum()
                    } else {
                        0.0
                    };
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
    }

    /// Smallest `|pre-activation|` over the hidden units at `input`. Finite
    /// differences are only meaningful when this exceeds the step size.
    pub fn kink_margin(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut x = input.to_vec();
        let mut margin = f64::INFINITY;
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers - 1 {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let z: Vec<f64> = (0..n_out)
                .map(|j| b[j] + (0..n_in).map(|i| w[j * n_in + i] * x[i]).sum::<f64>())
                .collect();
            margin = z.iter().fold(margin, |acc, v| acc.min(v.abs()));
            x = z.into_iter().map(|v| v.max(0.0)).collect();
            off += n_in * n_out + n_out;
        }
        Ok(margin)
    }

    /// Gradient of the network output with respect to every parameter.
    pub fn output_grad(&self, input: &[f64]) -> Result<GradientVector> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut ws = self.workspace();
        self.forward_ws(input, &mut ws);
        let mut g = GradientVector::zeros(self.len());
        self.accumulate_grad(&mut ws, 1.0, &mut g.0);
        Ok(g)
    }
}

/// `d/df ln P(a)` for the gate `P(active) = sigmoid(m (f - lambda))`.
pub fn log_prob_slope(f: f64, lambda: f64, m: f64, action: Action) -> f64 {
    let z = m * (f - lambda);
    match action {
        Action::Active => m * logistic(-z),
        Action::Passive => -m * logistic(z),
    }
}

/// `ln P(a)` under the sigmoid gate, in log-sum-exp safe form.
pub fn log_prob(net: &Mlp, input: &[f64], lambda: f64, m: f64, action: Action) -> Result<f64> {
    let f = net.forward(input)?;
    let z = m * (f - lambda);
    // ln sigmoid(z) = -softplus(-z); ln(1 - sigmoid(z)) = -softplus(z)
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    Ok(match action {
        Action::Active => -softplus(-z),
        Action::Passive => -softplus(z),
    })
}

/// Gradient of `ln P(a)` with respect to the network parameters.
pub fn grad_log_prob(
    net: &Mlp,
    input: &[f64],
    lambda: f64,
    m: f64,
    action: Action,
) -> Result<GradientVector> {
    if !(m > 0.0 && m.is_finite()) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda={lambda}, m={m}")));
    }
    if input.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: input.len(),
        });
    }
    let mut ws = net.workspace();
    let f = net.forward_ws(input, &mut ws);
    let slope = log_prob_slope(f, lambda, m, action);
    let mut g = GradientVector::zeros(net.len());
    net.accumulate_grad(&mut ws, slope, &mut g.0);
    if !g.is_finite() {
        return Err(Error::NonFinite("log-probability gradient".into()));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(Mlp::param_count(&[2, 16, 32, 1]), 625);
        assert_eq!(Mlp::param_count(&[1, 16, 32, 1]), 609);
        assert_eq!(Mlp::param_count(&[2, 48, 64, 1]), 3345);
        assert_eq!(Mlp::param_count(&[1, 48, 64, 1]), 3297);
        assert_eq!(Mlp::param_count(&[2, 8, 14, 1]), 165);
        assert_eq!(Mlp::param_count(&[1, 8, 14, 1]), 157);
        let net = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(net.len(), 625);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[2, 16, 32, 1]).unwrap();
        assert_eq!(net.forward(&[0.3, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn constant_network_outputs_bias() {
        let mut net = Mlp::zeros(&[2, 16, 32, 1]).unwrap();
        let n = net.len();
        net.params_mut()[n - 1] = 1.25;
        for x in [[0.0, 0.0], [1.0, 0.5], [0.2, 0.7]] {
            assert_eq!(net.forward(&x).unwrap(), 1.25);
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(4, 0)).unwrap();
        let b = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(4, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.forward(&[0.5, 0.5]).unwrap().to_bits(), b.forward(&[0.5, 0.5]).unwrap().to_bits());
        let c = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(5, 0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dimension_mismatch() {
        let net = Mlp::zeros(&[2, 4, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(Mlp::from_params(&[2, 4, 1], vec![0.0; 3]).is_err());
        assert!(Mlp::zeros(&[2, 4, 2]).is_err());
    }

    #[test]
    fn gradient_at_indifference() {
        let net = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(9, 0)).unwrap();
        let x = [0.4, 0.6];
        let lambda = net.forward(&x).unwrap();
        let m = 3.0;
        let up = grad_log_prob(&net, &x, lambda, m, Action::Active).unwrap();
        let down = grad_log_prob(&net, &x, lambda, m, Action::Passive).unwrap();
        let df = net.output_grad(&x).unwrap();
        for i in 0..net.len() {
            assert!((up.0[i] - 0.5 * m * df.0[i]).abs() < 1e-12);
            assert_eq!(up.0[i], -down.0[i]);
        }
    }

    #[test]
    fn saturated_gate_stays_finite() {
        let mut net = Mlp::zeros(&[1, 3, 1]).unwrap();
        let n = net.len();
        net.params_mut()[n - 1] = 1e6;
        for a in [Action::Active, Action::Passive] {
            assert!(grad_log_prob(&net, &[0.5], -1e6, 50.0, a).unwrap().is_finite());
            assert!(log_prob(&net, &[0.5], -1e6, 50.0, a).unwrap().is_finite());
        }
    }

    #[test]
    fn forward_sweep_is_finite_and_continuous() {
        let net = Mlp::init(&[2, 16, 32, 1], &mut RngStream::new(21, 0)).unwrap();
        let mut prev = net.forward(&[0.0, 0.5]).unwrap();
        // Lipschitz bound: product of layer operator norms is below this for
        // the 1/sqrt(fan_in) initialization; steps are 1e-4.
        for k in 1..=10_000 {
            let x = k as f64 / 10_000.0;
            let y = net.forward(&[x, 0.5]).unwrap();
            assert!(y.is_finite());
            assert!((y - prev).abs() < 1e-2, "jump at {x}");
            prev = y;
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn analytic_gradient_matches_finite_differences(
            seed in any::<u64>(),
            dim in 1usize..=2,
            lambda in -2.0f64..2.0,
            m in 0.25f64..5.0,
            active in any::<bool>(),
        ) {
            let sizes = [dim, 16, 32, 1];
            let mut rng = RngStream::new(seed, 0);
            let mut net = Mlp::init(&sizes, &mut rng).unwrap();
            for p in net.params_mut() {
                *p += 0.2 * (2.0 * rng.uniform() - 1.0);
            }
            let x: Vec<f64> = (0..dim).map(|_| rng.uniform()).collect();
            prop_assume!(net.kink_margin(&x).unwrap() > 1e-3);
            let a = Action::from_active(active);
            let g = grad_log_prob(&net, &x, lambda, m, a).unwrap();
            let h = 1e-5;
            for i in 0..net.len() {
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let fd = (log_prob(&plus, &x, lambda, m, a).unwrap()
                    - log_prob(&minus, &x, lambda, m, a).unwrap())
                    / (2.0 * h);
                prop_assert!(rel_err(g.0[i], fd) <= 1e-5, "param {} analytic {} fd {}", i, g.0[i], fd);
            }
        }
    }
}
