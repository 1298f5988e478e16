//! Conditional critic ψ(π; w, x) = nn3([nn1(x), nn2(π)]) and its gradient
//! penalty.

use super::LossError;
use crate::nnet::{
    adam_step, linearized_pass, mlp_backward, mlp_forward, weight_grads_from_directions, Activation, AdamConfig,
    MlpGrads, MlpParams, OptState, Tape,
};
use crate::numerics::RngState;

#[derive(Debug, Clone, PartialEq)]
pub struct CriticModel {
    /// Input-feature branch.
    pub nn1: MlpParams,
    /// Simplex branch.
    pub nn2: MlpParams,
    /// Merge head on the concatenated branch outputs.
    pub nn3: MlpParams,
}

impl CriticModel {
    pub fn new(nn1: MlpParams, nn2: MlpParams, nn3: MlpParams) -> Result<Self, LossError> {
        if nn3.input_dim() != nn1.output_dim() + nn2.output_dim() {
            return Err(LossError::Config(format!(
                "merge head reads {} values, branches emit {} + {}",
                nn3.input_dim(),
                nn1.output_dim(),
                nn2.output_dim()
            )));
        }
        if nn3.output_dim() != 1 {
            return Err(LossError::Config("critic head must have a scalar output".into()));
        }
        for net in [&nn1, &nn2, &nn3] {
            if net.layers().iter().any(|l| l.activation == Activation::Softmax) {
                return Err(LossError::Config("critic nets must be ReLU/identity".into()));
            }
        }
        Ok(Self { nn1, nn2, nn3 })
    }

    /// nn1: d → hidden, nn2: K → hidden, nn3: 2·hidden → hidden → 1.
    pub fn init(input_dim: usize, k: usize, hidden: usize, rng: &mut RngState) -> Result<Self, LossError> {
        let nn1 = MlpParams::init(&[input_dim, hidden], Activation::Relu, Activation::Relu, rng)?;
        let nn2 = MlpParams::init(&[k, hidden], Activation::Relu, Activation::Relu, rng)?;
        let nn3 = MlpParams::init(&[2 * hidden, hidden, 1], Activation::Relu, Activation::Identity, rng)?;
        Self::new(nn1, nn2, nn3)
    }

    pub fn k(&self) -> usize {
        self.nn2.input_dim()
    }

    pub(crate) fn context(&self, x: &[f64]) -> Result<Context, LossError> {
        let (a, tape) = mlp_forward(&self.nn1, x, None)?;
        Ok(Context { a, tape })
    }

    fn eval(&self, ctx: &Context, pi: &[f64]) -> Result<Eval, LossError> {
        if pi.len() != self.k() {
            return Err(LossError::Config(format!("critic expects K = {}, got {}", self.k(), pi.len())));
        }
        let (b, tape2) = mlp_forward(&self.nn2, pi, None)?;
        let joined: Vec<f64> = ctx.a.iter().chain(&b).copied().collect();
        let (out, tape3) = mlp_forward(&self.nn3, &joined, None)?;
        Ok(Eval { value: out[0], tape2, tape3 })
    }

    /// ∇_π ψ and the backward passes behind it.
    fn grad_pi(&self, ev: &Eval) -> Result<GradPi, LossError> {
        let bp3 = mlp_backward(&self.nn3, &ev.tape3, &[1.0])?;
        let na = self.nn1.output_dim();
        let bp2 = mlp_backward(&self.nn2, &ev.tape2, &bp3.input_grad[na..])?;
        Ok(GradPi { v: bp2.input_grad.clone(), deltas2: bp2.deltas, deltas3: bp3.deltas })
    }
}

pub(crate) struct Context {
    a: Vec<f64>,
    tape: Tape,
}

struct Eval {
    value: f64,
    tape2: Tape,
    tape3: Tape,
}

struct GradPi {
    v: Vec<f64>,
    deltas2: Vec<Vec<f64>>,
    deltas3: Vec<Vec<f64>>,
}

pub fn critic_forward(c: &CriticModel, x: &[f64], pi: &[f64]) -> Result<f64, LossError> {
    Ok(c.eval(&c.context(x)?, pi)?.value)
}

pub(crate) fn critic_forward_ctx(c: &CriticModel, ctx: &Context, pi: &[f64]) -> Result<f64, LossError> {
    Ok(c.eval(ctx, pi)?.value)
}

pub fn critic_grad_pi(c: &CriticModel, x: &[f64], pi: &[f64]) -> Result<Vec<f64>, LossError> {
    let ctx = c.context(x)?;
    Ok(c.grad_pi(&c.eval(&ctx, pi)?)?.v)
}

/// ∇_π ψ at every point, sharing the nn1 pass.
pub(crate) fn critic_grads_pi<P: AsRef<[f64]>>(c: &CriticModel, ctx: &Context, points: &[P]) -> Result<Vec<Vec<f64>>, LossError> {
    points.iter().map(|p| Ok(c.grad_pi(&c.eval(ctx, p.as_ref())?)?.v)).collect()
}

#[derive(Debug, Clone)]
pub struct CriticGrads {
    pub nn1: MlpGrads,
    pub nn2: MlpGrads,
    pub nn3: MlpGrads,
}

impl CriticGrads {
    pub fn zeros_like(c: &CriticModel) -> Self {
        Self { nn1: MlpGrads::zeros_like(&c.nn1), nn2: MlpGrads::zeros_like(&c.nn2), nn3: MlpGrads::zeros_like(&c.nn3) }
    }

    pub fn is_zero(&self) -> bool {
        self.nn1.is_zero() && self.nn2.is_zero() && self.nn3.is_zero()
    }
}

#[derive(Debug, Clone)]
pub struct CriticOpt {
    pub nn1: OptState,
    pub nn2: OptState,
    pub nn3: OptState,
}

impl CriticOpt {
    pub fn new(c: &CriticModel, cfg: AdamConfig) -> Self {
        Self { nn1: OptState::new(&c.nn1, cfg), nn2: OptState::new(&c.nn2, cfg), nn3: OptState::new(&c.nn3, cfg) }
    }

    pub fn step(&mut self, c: &mut CriticModel, g: &CriticGrads) -> Result<(), LossError> {
        adam_step(&mut c.nn1, &g.nn1, &mut self.nn1)?;
        adam_step(&mut c.nn2, &g.nn2, &mut self.nn2)?;
        adam_step(&mut c.nn3, &g.nn3, &mut self.nn3)?;
        Ok(())
    }
}

/// Interpolation pairs π̂ = u·p + (1 − u)·q.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyPairs {
    pub pairs: Vec<(usize, usize, f64)>,
}

impl PenaltyPairs {
    pub fn sample(np: usize, nq: usize, n: usize, rng: &mut RngState) -> Self {
        Self { pairs: (0..n).map(|_| (rng.below(np), rng.below(nq), rng.uniform())).collect() }
    }

    pub fn points<P: AsRef<[f64]>, Q: AsRef<[f64]>>(&self, p: &[P], q: &[Q]) -> Vec<Vec<f64>> {
        self.pairs
            .iter()
            .map(|&(i, j, u)| p[i].as_ref().iter().zip(q[j].as_ref()).map(|(a, b)| u * a + (1.0 - u) * b).collect())
            .collect()
    }
}

/// Adds `weight · ∂ψ(π)/∂w` for each point to `grads`.
pub(crate) fn accumulate_value_grads<P: AsRef<[f64]>>(
    c: &CriticModel,
    ctx: &Context,
    points: &[P],
    weight: f64,
    grads: &mut CriticGrads,
) -> Result<f64, LossError> {
    let na = c.nn1.output_dim();
    let mut sum_a = vec![0.0; na];
    let mut total = 0.0;
    for p in points {
        let ev = c.eval(ctx, p.as_ref())?;
        total += ev.value;
        let bp3 = mlp_backward(&c.nn3, &ev.tape3, &[weight])?;
        grads.nn3.add_scaled(&bp3.grads, 1.0);
        let bp2 = mlp_backward(&c.nn2, &ev.tape2, &bp3.input_grad[na..])?;
        grads.nn2.add_scaled(&bp2.grads, 1.0);
        sum_a.iter_mut().zip(&bp3.input_grad[..na]).for_each(|(s, g)| *s += g);
    }
    let bp1 = mlp_backward(&c.nn1, &ctx.tape, &sum_a)?;
    grads.nn1.add_scaled(&bp1.grads, 1.0);
    Ok(total)
}

/// mean_i (‖∇ψ(π̂_i)‖ − 1)², adding `lambda · ∂R/∂w` to `grads` when given.
pub(crate) fn penalty_with_grads(
    c: &CriticModel,
    ctx: &Context,
    interpolates: &[Vec<f64>],
    lambda: f64,
    mut grads: Option<&mut CriticGrads>,
) -> Result<f64, LossError> {
    let n = interpolates.len() as f64;
    let na = c.nn1.output_dim();
    let mut r = 0.0;
    for pi in interpolates {
        let ev = c.eval(ctx, pi)?;
        let gp = c.grad_pi(&ev)?;
        let norm = gp.v.iter().map(|v| v * v).sum::<f64>().sqrt();
        r += (norm - 1.0).powi(2) / n;
        let Some(g) = grads.as_deref_mut() else { continue };
        if norm == 0.0 || lambda == 0.0 {
            continue;
        }
        // ∂R/∂v, then ⟨v, u⟩ differentiated through the frozen activation pattern
        let f = lambda * 2.0 * (norm - 1.0) / (norm * n);
        let u: Vec<f64> = gp.v.iter().map(|v| f * v).collect();
        let lin2 = linearized_pass(&c.nn2, &ev.tape2, &u)?;
        g.nn2.add_scaled(&weight_grads_from_directions(&gp.deltas2, &lin2), 1.0);
        let dir3: Vec<f64> = std::iter::repeat_n(0.0, na).chain(lin2.output.iter().copied()).collect();
        let lin3 = linearized_pass(&c.nn3, &ev.tape3, &dir3)?;
        g.nn3.add_scaled(&weight_grads_from_directions(&gp.deltas3, &lin3), 1.0);
    }
    Ok(r)
}

/// Gradient penalty over `max(|P|, |Q|)` interpolates drawn from `rng`.
pub fn gradient_penalty<P: AsRef<[f64]>, Q: AsRef<[f64]>>(
    c: &CriticModel,
    x: &[f64],
    p: &[P],
    q: &[Q],
    rng: &mut RngState,
) -> Result<f64, LossError> {
    if p.is_empty() || q.is_empty() {
        return Err(LossError::Config("gradient penalty needs nonempty sets".into()));
    }
    let pairs = PenaltyPairs::sample(p.len(), q.len(), p.len().max(q.len()), rng);
    let ctx = c.context(x)?;
    penalty_with_grads(c, &ctx, &pairs.points(p, q), 0.0, None)
}
