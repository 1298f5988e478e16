use super::{Activation, DropoutMask, Layer, LayerGrad, MlpGrads, MlpParams, NnetError};

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Effective (post-dropout) input to each layer.
    pub inputs: Vec<Vec<f64>>,
    /// Dropout multipliers applied to each layer's raw input.
    pub scales: Vec<Option<Vec<f64>>>,
    /// Pre-activations of each layer.
    pub pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Tape {
    pub fn logits(&self) -> &[f64] {
        &self.pre[self.pre.len() - 1]
    }
}

fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
    let n_in = layer.n_in;
    (0..layer.n_out)
        .map(|o| {
            let row = &layer.weights[o * n_in..(o + 1) * n_in];
            layer.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        })
        .collect()
}

fn activate(act: Activation, z: &[f64]) -> Vec<f64> {
    match act {
        Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
        Activation::Identity => z.to_vec(),
        Activation::Softmax => softmax(z),
    }
}

fn check_input(params: &MlpParams, x: &[f64]) -> Result<(), NnetError> {
    if x.len() != params.input_dim() {
        return Err(NnetError::DimensionMismatch { context: "network input", expected: params.input_dim(), got: x.len() });
    }
    Ok(())
}

pub fn mlp_forward(params: &MlpParams, x: &[f64], mask: Option<&DropoutMask>) -> Result<(Vec<f64>, Tape), NnetError> {
    check_input(params, x)?;
    if let Some(m) = mask {
        if !m.matches(params) {
            return Err(NnetError::InvalidArchitecture("dropout mask does not match the network".into()));
        }
    }
    let n = params.n_layers();
    let mut tape = Tape {
        inputs: Vec::with_capacity(n),
        scales: Vec::with_capacity(n),
        pre: Vec::with_capacity(n),
        output: Vec::new(),
    };
    let mut h = x.to_vec();
    for (i, layer) in params.layers().iter().enumerate() {
        let scale = mask.and_then(|m| m.scales(i));
        if let Some(s) = &scale {
            h.iter_mut().zip(s).for_each(|(v, s)| *v *= s);
        }
        let z = affine(layer, &h);
        let a = activate(layer.activation, &z);
        tape.inputs.push(h);
        tape.scales.push(scale);
        tape.pre.push(z);
        h = a;
    }
    tape.output = h.clone();
    Ok((h, tape))
}

/// Forward pass without dropout and without recording a tape.
pub fn mlp_predict(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>, NnetError> {
    check_input(params, x)?;
    let mut h = affine(&params.layers()[0], x);
    h = activate(params.layers()[0].activation, &h);
    for layer in &params.layers()[1..] {
        h = activate(layer.activation, &affine(layer, &h));
    }
    Ok(h)
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: MlpGrads,
    pub input_grad: Vec<f64>,
    /// ∂(scalar)/∂(pre-activation) for every layer.
    pub deltas: Vec<Vec<f64>>,
}

/// Backpropagates a gradient with respect to the network output.
pub fn mlp_backward(params: &MlpParams, tape: &Tape, upstream: &[f64]) -> Result<Backprop, NnetError> {
    check_tape(params, tape)?;
    if upstream.len() != params.output_dim() {
        return Err(NnetError::DimensionMismatch {
            context: "upstream gradient",
            expected: params.output_dim(),
            got: upstream.len(),
        });
    }
    let last = params.n_layers() - 1;
    let delta = act_backward(params.layers()[last].activation, &tape.pre[last], &tape.output, upstream);
    backward_from(params, tape, delta)
}

/// Backpropagates a gradient given directly with respect to the final
/// pre-activation (e.g. `softmax − onehot` for cross-entropy on logits).
pub fn mlp_backward_from_pre(params: &MlpParams, tape: &Tape, delta_last: &[f64]) -> Result<Backprop, NnetError> {
    check_tape(params, tape)?;
    if delta_last.len() != params.output_dim() {
        return Err(NnetError::DimensionMismatch {
            context: "pre-activation gradient",
            expected: params.output_dim(),
            got: delta_last.len(),
        });
    }
    backward_from(params, tape, delta_last.to_vec())
}

fn check_tape(params: &MlpParams, tape: &Tape) -> Result<(), NnetError> {
    let ok = tape.pre.len() == params.n_layers()
        && tape.inputs.len() == params.n_layers()
        && params.layers().iter().zip(&tape.pre).all(|(l, z)| l.n_out == z.len())
        && params.layers().iter().zip(&tape.inputs).all(|(l, h)| l.n_in == h.len());
    if ok {
        Ok(())
    } else {
        Err(NnetError::InvalidArchitecture("tape does not match the network".into()))
    }
}

fn act_backward(act: Activation, pre: &[f64], out: &[f64], upstream: &[f64]) -> Vec<f64> {
    match act {
        Activation::Relu => pre.iter().zip(upstream).map(|(z, u)| if *z > 0.0 { *u } else { 0.0 }).collect(),
        Activation::Identity => upstream.to_vec(),
        Activation::Softmax => {
            let dot: f64 = out.iter().zip(upstream).map(|(y, u)| y * u).sum();
            out.iter().zip(upstream).map(|(y, u)| y * (u - dot)).collect()
        }
    }
}

fn backward_from(params: &MlpParams, tape: &Tape, mut delta: Vec<f64>) -> Result<Backprop, NnetError> {
    let n = params.n_layers();
    let mut layers = Vec::with_capacity(n);
    let mut deltas = vec![Vec::new(); n];
    let mut input_grad = Vec::new();
    for i in (0..n).rev() {
        let layer = &params.layers()[i];
        let h = &tape.inputs[i];
        let mut gw = vec![0.0; layer.weights.len()];
        for (o, d) in delta.iter().enumerate() {
            if *d != 0.0 {
                let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                row.iter_mut().zip(h).for_each(|(g, v)| *g = d * v);
            }
        }
        let mut g_in = vec![0.0; layer.n_in];
        for (o, d) in delta.iter().enumerate() {
            if *d != 0.0 {
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                g_in.iter_mut().zip(row).for_each(|(g, w)| *g += d * w);
            }
        }
        if let Some(s) = &tape.scales[i] {
            g_in.iter_mut().zip(s).for_each(|(g, s)| *g *= s);
        }
        layers.push(LayerGrad { weights: gw, bias: delta.clone() });
        deltas[i] = std::mem::take(&mut delta);
        if i > 0 {
            let prev = params.layers()[i - 1].activation;
            delta = act_backward(prev, &tape.pre[i - 1], &tape.inputs[i], &g_in);
        } else {
            input_grad = g_in;
        }
    }
    layers.reverse();
    Ok(Backprop { grads: MlpGrads { layers }, input_grad, deltas })
}

/// Directional pass of the network linearized at a recorded forward call:
/// biases dropped, activation masks and dropout scales frozen.
#[derive(Debug, Clone)]
pub struct LinearizedPass {
    /// Effective input direction reaching each layer.
    pub inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Pushes an input-space direction through the linearized network.
///
/// For a scalar ReLU/identity network ψ with input gradient v(W) at fixed
/// activation pattern, ⟨v, u⟩ is this pass evaluated at `u`, so
/// ∂⟨v, u⟩/∂W_l = δ_l ⊗ inputs_l where δ_l are the deltas of ψ itself.
pub fn linearized_pass(params: &MlpParams, tape: &Tape, direction: &[f64]) -> Result<LinearizedPass, NnetError> {
    check_tape(params, tape)?;
    check_input(params, direction)?;
    let mut inputs = Vec::with_capacity(params.n_layers());
    let mut h = direction.to_vec();
    for (i, layer) in params.layers().iter().enumerate() {
        if let Some(s) = &tape.scales[i] {
            h.iter_mut().zip(s).for_each(|(v, s)| *v *= s);
        }
        let mut z: Vec<f64> = (0..layer.n_out)
            .map(|o| {
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        match layer.activation {
            Activation::Relu => z.iter_mut().zip(&tape.pre[i]).for_each(|(v, p)| {
                if *p <= 0.0 {
                    *v = 0.0
                }
            }),
            Activation::Identity => {}
            Activation::Softmax => {
                return Err(NnetError::InvalidArchitecture("linearized pass through softmax".into()));
            }
        }
        inputs.push(h);
        h = z;
    }
    Ok(LinearizedPass { inputs, output: h })
}

/// Weight gradients `δ_l ⊗ inputs_l` with zero bias gradients.
pub fn weight_grads_from_directions(deltas: &[Vec<f64>], pass: &LinearizedPass) -> MlpGrads {
    let layers = deltas
        .iter()
        .zip(&pass.inputs)
        .map(|(d, h)| {
            let mut weights = Vec::with_capacity(d.len() * h.len());
            for dv in d {
                weights.extend(h.iter().map(|v| dv * v));
            }
            LayerGrad { weights, bias: vec![0.0; d.len()] }
        })
        .collect();
    MlpGrads { layers }
}
