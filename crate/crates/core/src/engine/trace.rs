use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::schedules::{beta_schedule, sigma_schedule};
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim};
use crate::network::{evaluate, forward_net, init_network, ArchConfig, NetworkParams};
use crate::operators::ForwardOperator;
use crate::optim::{Adam, AdamConfig};
use crate::tensor::{Scalar, Tensor};

const STREAM_NET: u64 = 1;
const STREAM_INPUT: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_REINIT: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for one random stream (network init, input noise,
/// per-step perturbation, per-step re-init) of a run.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub disable_coupling: bool,
    pub disable_perturbation: bool,
    pub disable_inheritance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Trajectory length `T`.
    pub steps: usize,
    /// Optimizer steps `K` per state (also used for the initial fit).
    pub inner_steps: usize,
    pub lr: f64,
    pub beta_hi: f64,
    pub beta_lo: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub eta: f64,
    pub arch: ArchConfig,
    pub seed: u64,
    pub ablation: Ablation,
    /// Keep every n-th state (plus `x_T` and `x_0`).
    pub snapshot_every: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            steps: 40,
            inner_steps: 150,
            lr: 1e-3,
            beta_hi: 5e-3,
            beta_lo: 5e-4,
            beta_start: 1e-4,
            beta_end: 1e-2,
            eta: 1.0,
            arch: ArchConfig::default(),
            seed: 0,
            ablation: Ablation::default(),
            snapshot_every: 1,
        }
    }
}

/// `β_t` and `σ_t` indexed by `t = 0..T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedules {
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("trajectory needs at least one step"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::invalid("snapshot cadence must be positive"));
        }
        self.arch.validate()
    }

    /// With coupling disabled every `β_t` is 0; with perturbation disabled
    /// every `σ_t` is 0.
    pub fn schedules(&self) -> Result<Schedules> {
        let beta = if self.ablation.disable_coupling {
            vec![0.0; self.steps]
        } else {
            beta_schedule(self.steps, self.beta_hi, self.beta_lo)?
        };
        let sigma = if self.ablation.disable_perturbation {
            vec![0.0; self.steps]
        } else {
            sigma_schedule(self.steps, self.beta_start, self.beta_end, self.eta)?
        };
        Ok(Schedules { beta, sigma })
    }

    /// `K` for the initial fit plus `T·K` coupled updates.
    pub fn total_updates(&self) -> usize {
        self.inner_steps * (self.steps + 1)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// Measurements and forward model of one reconstruction.
#[derive(Clone)]
pub struct Problem {
    pub y: Tensor<f32>,
    pub op: Arc<ForwardOperator>,
    pub image_shape: Vec<usize>,
}

impl Problem {
    pub fn new(y: Tensor<f32>, op: ForwardOperator, image_shape: &[usize]) -> Result<Self> {
        let expected = op.output_shape(image_shape)?;
        if expected != y.shape() {
            return Err(Error::shape("problem", format!("{expected:?}"), format!("{:?}", y.shape())));
        }
        Ok(Problem {
            y,
            op: Arc::new(op),
            image_shape: image_shape.to_vec(),
        })
    }
}

pub struct LossTerms {
    pub total: Var,
    pub data: Var,
    pub coupling: Option<Var>,
    pub output: Var,
}

/// `½‖A D_θ(u) − y‖² + (β/2)‖D_θ(u) − x_prev‖²`. The coupling term is left
/// out when `beta` is 0 or there is no previous state.
#[allow(clippy::too_many_arguments)]
pub fn training_loss<T: Scalar>(
    g: &mut Graph<T>,
    arch: &ArchConfig,
    params: &[Var],
    u: Var,
    x_prev: Option<Var>,
    y: Var,
    op: &Arc<ForwardOperator>,
    beta: f64,
) -> Result<LossTerms> {
    let output = forward_net(g, arch, params, u)?;
    let ax = op.apply_in_graph(g, output)?;
    let residual = g.sub(ax, y)?;
    let ss = g.sum_squares(residual)?;
    let data = g.scale(ss, T::lit(0.5))?;
    let coupling = match x_prev {
        Some(prev) if beta > 0.0 => {
            let diff = g.sub(output, prev)?;
            let ss = g.sum_squares(diff)?;
            Some(g.scale(ss, T::lit(0.5 * beta))?)
        }
        _ => None,
    };
    let total = match coupling {
        Some(c) => g.add(data, c)?,
        None => data,
    };
    Ok(LossTerms {
        total,
        data,
        coupling,
        output,
    })
}

/// Runs `steps` Adam updates (fresh moments) on the training loss with a
/// fixed network input. Returns the loss recorded before each update.
fn optimize(
    params: &mut NetworkParams,
    input: &Tensor<f32>,
    x_prev: Option<&Tensor<f32>>,
    problem: &Problem,
    beta: f64,
    steps: usize,
    adam: AdamConfig,
) -> Result<Vec<f64>> {
    let mut optimizer = Adam::new(adam, &params.tensors);
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut g = Graph::<f32>::new();
        let vars = params.tensors.iter().map(|t| g.param(t.clone())).collect::<Result<Vec<_>>>()?;
        let u = g.input(input.clone())?;
        let prev = x_prev.map(|x| g.input(x.clone())).transpose()?;
        let y = g.input(problem.y.clone())?;
        let terms = training_loss(&mut g, &params.arch, &vars, u, prev, y, &problem.op, beta)?;
        losses.push(g.value(terms.total).item()? as f64);
        let grads = g.backward(terms.total)?.into_vec();
        optimizer.update(&mut params.tensors, &grads)?;
    }
    Ok(losses)
}

pub struct DipInit {
    pub x: Tensor<f32>,
    pub params: NetworkParams,
    pub z: Tensor<f32>,
    pub losses: Vec<f64>,
}

/// Uncoupled fit of `D_θ(z)` to the measurements, `z ~ U[0, 0.1]` drawn once.
pub fn dip_initialize(problem: &Problem, arch: ArchConfig, steps: usize, lr: f64, seed: u64) -> Result<DipInit> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_INPUT, 0));
    let z = Tensor::from_fn(&problem.image_shape, |_| rng.random_range(0.0..=0.1f32));
    let mut params = init_network(arch, derive_seed(seed, STREAM_NET, 0))?;
    let adam = AdamConfig {
        lr,
        ..AdamConfig::default()
    };
    let losses = optimize(&mut params, &z, None, problem, 0.0, steps, adam)?;
    let x = evaluate(&params, &z)?;
    x.ensure_finite("initial state")?;
    Ok(DipInit { x, params, z, losses })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSettings {
    pub beta: f64,
    pub sigma: f64,
    pub inner_steps: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub ablation: Ablation,
}

pub struct StepOutcome {
    pub x: Tensor<f32>,
    pub u: Tensor<f32>,
    /// `θ_t^0`.
    pub start_params: NetworkParams,
    /// `θ_t^K`.
    pub params: NetworkParams,
    pub losses: Vec<f64>,
}

/// One coupled update `x_{t+1} → x_t`.
pub fn trace_step(
    t: usize,
    x_prev: &Tensor<f32>,
    warm: &NetworkParams,
    problem: &Problem,
    settings: &StepSettings,
) -> Result<StepOutcome> {
    let beta = if settings.ablation.disable_coupling { 0.0 } else { settings.beta };
    let sigma = if settings.ablation.disable_perturbation { 0.0 } else { settings.sigma };
    let u = if sigma == 0.0 {
        x_prev.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, STREAM_NOISE, t as u64));
        let s = sigma as f32;
        let data = x_prev
            .data()
            .iter()
            .map(|&v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + s * e as f32
            })
            .collect();
        Tensor::new(x_prev.shape().to_vec(), data)?
    };
    let start_params = if settings.ablation.disable_inheritance {
        init_network(warm.arch, derive_seed(settings.seed, STREAM_REINIT, t as u64))?
    } else {
        warm.clone()
    };
    let mut params = start_params.clone();
    let losses = optimize(&mut params, &u, Some(x_prev), problem, beta, settings.inner_steps, settings.adam)?;
    let x = evaluate(&params, &u)?;
    x.ensure_finite("trajectory state")?;
    Ok(StepOutcome {
        x,
        u,
        start_params,
        params,
        losses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: usize,
    /// `‖x_t − x_{t+1}‖₂`.
    pub delta: f64,
    pub beta: f64,
    pub beta_delta: f64,
    /// `½‖A x_t − y‖²`.
    pub loss_data: f64,
    /// `(β_t/2)‖x_t − x_{t+1}‖²`.
    pub loss_couple: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub steps: usize,
    /// Ordered `t = T−1, …, 0`.
    pub transitions: Vec<Transition>,
    /// `(t, x_t)` for `t = T, …, 0` thinned to the snapshot cadence.
    pub snapshots: Vec<(usize, Tensor<f32>)>,
    pub initial: Tensor<f32>,
    pub reconstruction: Tensor<f32>,
    pub initial_psnr: Option<f64>,
    pub initial_ssim: Option<f64>,
    /// Loss before every optimizer update, initial fit first.
    pub loss_history: Vec<f64>,
    pub optimizer_steps: usize,
}

impl TrajectoryRecord {
    pub fn deltas(&self) -> Vec<f64> {
        self.transitions.iter().map(|s| s.delta).collect()
    }

    pub fn mean_delta(&self) -> f64 {
        self.transitions.iter().map(|s| s.delta).sum::<f64>() / self.transitions.len() as f64
    }

    pub fn final_psnr(&self) -> Option<f64> {
        self.transitions.last().and_then(|s| s.psnr)
    }

    pub fn final_ssim(&self) -> Option<f64> {
        self.transitions.last().and_then(|s| s.ssim)
    }
}

pub enum StepEvent<'a> {
    Initialized {
        x: &'a Tensor<f32>,
        params: &'a NetworkParams,
    },
    Step {
        transition: &'a Transition,
        outcome: &'a StepOutcome,
    },
}

pub fn run_trace(config: &TraceConfig, problem: &Problem, ground_truth: Option<&Tensor<f32>>) -> Result<TrajectoryRecord> {
    run_trace_observed(config, problem, ground_truth, &mut |_| {})
}

/// [`run_trace`] with a callback after the initial fit and after every step.
pub fn run_trace_observed(
    config: &TraceConfig,
    problem: &Problem,
    ground_truth: Option<&Tensor<f32>>,
    observer: &mut dyn FnMut(StepEvent<'_>),
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let schedules = config.schedules()?;
    if let Some(gt) = ground_truth {
        if gt.shape() != problem.image_shape {
            return Err(Error::shape("run_trace", format!("{:?}", problem.image_shape), format!("{:?}", gt.shape())));
        }
    }
    let metrics = |x: &Tensor<f32>| -> Result<(Option<f64>, Option<f64>)> {
        match ground_truth {
            Some(gt) => Ok((Some(psnr(x, gt)?), Some(ssim(x, gt)?))),
            None => Ok((None, None)),
        }
    };
    let t_max = config.steps;
    let wrap = |step: usize| move |e: Error| Error::Step { step, source: Box::new(e) };

    let init = dip_initialize(problem, config.arch, config.inner_steps, config.lr, config.seed).map_err(wrap(t_max))?;
    observer(StepEvent::Initialized {
        x: &init.x,
        params: &init.params,
    });
    let (initial_psnr, initial_ssim) = metrics(&init.x)?;
    let mut optimizer_steps = init.losses.len();
    let mut loss_history = init.losses;
    let mut snapshots = vec![(t_max, init.x.clone())];
    let mut transitions = Vec::with_capacity(t_max);
    let mut state = init.x.clone();
    let mut params = init.params;

    for t in (0..t_max).rev() {
        let settings = StepSettings {
            beta: schedules.beta[t],
            sigma: schedules.sigma[t],
            inner_steps: config.inner_steps,
            adam: config.adam(),
            seed: config.seed,
            ablation: config.ablation,
        };
        let outcome = trace_step(t, &state, &params, problem, &settings).map_err(wrap(t))?;
        optimizer_steps += outcome.losses.len();
        loss_history.extend_from_slice(&outcome.losses);

        let delta = outcome.x.distance(&state)?;
        let residual = problem.op.apply(&outcome.x)?.sub(&problem.y)?;
        let beta = schedules.beta[t];
        let (psnr, ssim) = metrics(&outcome.x)?;
        let transition = Transition {
            t,
            delta,
            beta,
            beta_delta: beta * delta,
            loss_data: 0.5 * residual.sum_sq(),
            loss_couple: 0.5 * beta * delta * delta,
            psnr,
            ssim,
        };
        observer(StepEvent::Step {
            transition: &transition,
            outcome: &outcome,
        });
        transitions.push(transition);
        if t == 0 || t % config.snapshot_every == 0 {
            snapshots.push((t, outcome.x.clone()));
        }
        state = outcome.x;
        params = outcome.params;
    }
    debug_assert_eq!(optimizer_steps, config.total_updates());

    Ok(TrajectoryRecord {
        steps: t_max,
        transitions,
        snapshots,
        initial: init.x,
        reconstruction: state,
        initial_psnr,
        initial_ssim,
        loss_history,
        optimizer_steps,
    })
}
