//! Spiking adaptive compensator.
//!
//! Each control channel is a population of leaky integrate-and-fire neurons.
//! A scalar input is encoded into input currents `J = m a + J_b`, spikes are
//! low-pass filtered by an exponential synapse into activities `s`, and the
//! channel output is the linear decode `w's`. Decoders start at zero and are
//! adapted online with the PES rule `w <- w - gamma s e`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vehicle::Twist;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnnError {
    #[error("population needs at least one neuron")]
    EmptyPopulation,
    #[error("invalid neuron parameters: {0}")]
    InvalidParams(String),
}

/// Leaky integrate-and-fire constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifParams {
    /// Membrane time constant (s).
    pub tau_d: f64,
    /// Membrane resistance.
    pub r_m: f64,
    pub v_th: f64,
    pub v_reset: f64,
    /// Refractory period (s).
    pub tau_ref: f64,
    /// Post-synaptic filter time constant (s).
    pub tau_p: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau_d: 0.02,
            r_m: 1.0,
            v_th: 1.0,
            v_reset: 0.0,
            tau_ref: 0.002,
            tau_p: 0.1,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<(), SnnError> {
        let times = [self.tau_d, self.tau_ref, self.tau_p];
        if !times.iter().all(|t| *t > 0.0 && t.is_finite()) {
            return Err(SnnError::InvalidParams("time constants must be positive".into()));
        }
        if !(self.r_m > 0.0) {
            return Err(SnnError::InvalidParams("membrane resistance must be positive".into()));
        }
        if !(self.v_th > self.v_reset) {
            return Err(SnnError::InvalidParams("threshold must exceed reset voltage".into()));
        }
        Ok(())
    }

    /// Steady firing rate (spikes/s) for a constant input current.
    pub fn rate(&self, current: f64) -> f64 {
        let drive = self.r_m * current;
        if drive <= self.v_th {
            return 0.0;
        }
        1.0 / (self.tau_ref + self.tau_d * ((drive - self.v_reset) / (drive - self.v_th)).ln())
    }

    /// Input current that produces `rate`; inverse of [`LifParams::rate`].
    fn current_for_rate(&self, rate: f64) -> f64 {
        let z = ((1.0 / rate - self.tau_ref) / self.tau_d).exp();
        (z * self.v_th - self.v_reset) / ((z - 1.0) * self.r_m)
    }
}

/// Tuning-curve ranges used when drawing encoders and biases.
const INTERCEPT_RANGE: (f64, f64) = (-1.0, 1.0);
const MAX_RATE_RANGE: (f64, f64) = (100.0, 200.0);

#[derive(Debug, Clone, PartialEq)]
pub struct SnnPopulation {
    params: LifParams,
    seed: u64,
    encoders: Vec<f64>,
    bias: Vec<f64>,
    decoders: Vec<f64>,
    voltage: Vec<f64>,
    synapse: Vec<f64>,
    refractory: Vec<f64>,
    spikes: Vec<f64>,
    clock: f64,
    raster: Option<Vec<(f64, usize)>>,
}

/// Draws a population with random tuning curves and zero decoders.
///
/// Each neuron gets a preferred direction of +1 or -1, a firing onset uniform
/// in (-1, 1) of the normalized input and a rate at `|a| = 1` uniform in
/// 100..200 spikes/s. Initial membrane voltages are spread over
/// `[v_reset, v_th)` so the population does not fire in lockstep.
pub fn init_population(n: usize, seed: u64, params: LifParams) -> Result<SnnPopulation, SnnError> {
    if n == 0 {
        return Err(SnnError::EmptyPopulation);
    }
    params.validate()?;
    if 1.0 / MAX_RATE_RANGE.1 <= params.tau_ref {
        return Err(SnnError::InvalidParams(
            "refractory period too long for the requested firing rates".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let threshold_current = params.v_th / params.r_m;
    let mut encoders = Vec::with_capacity(n);
    let mut bias = Vec::with_capacity(n);
    let mut voltage = Vec::with_capacity(n);
    for _ in 0..n {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let intercept = rng.random_range(INTERCEPT_RANGE.0..INTERCEPT_RANGE.1);
        let max_rate = rng.random_range(MAX_RATE_RANGE.0..=MAX_RATE_RANGE.1);
        let max_current = params.current_for_rate(max_rate);
        let gain = (max_current - threshold_current) / (1.0 - intercept);
        encoders.push(sign * gain);
        bias.push(threshold_current - gain * intercept);
        voltage.push(rng.random_range(params.v_reset..params.v_th));
    }
    Ok(SnnPopulation {
        params,
        seed,
        encoders,
        bias,
        decoders: vec![0.0; n],
        voltage,
        synapse: vec![0.0; n],
        refractory: vec![0.0; n],
        spikes: vec![0.0; n],
        clock: 0.0,
        raster: None,
    })
}

impl SnnPopulation {
    pub fn len(&self) -> usize {
        self.encoders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encoders.is_empty()
    }

    pub fn params(&self) -> &LifParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Input-current gains, including the preferred direction.
    pub fn encoders(&self) -> &[f64] {
        &self.encoders
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn decoders(&self) -> &[f64] {
        &self.decoders
    }

    pub fn decoders_mut(&mut self) -> &mut [f64] {
        &mut self.decoders
    }

    pub fn voltage(&self) -> &[f64] {
        &self.voltage
    }

    pub fn voltage_mut(&mut self) -> &mut [f64] {
        &mut self.voltage
    }

    /// Filtered post-synaptic activities `s`.
    pub fn activities(&self) -> &[f64] {
        &self.synapse
    }

    pub fn activities_mut(&mut self) -> &mut [f64] {
        &mut self.synapse
    }

    /// Simulated time of this population (s).
    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Starts or stops collecting `(spike time, neuron)` pairs.
    pub fn record_spikes(&mut self, on: bool) {
        self.raster = on.then(Vec::new);
    }

    pub fn take_raster(&mut self) -> Vec<(f64, usize)> {
        self.raster.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Input currents for normalized input `a`.
    pub fn currents(&self, a: f64) -> impl Iterator<Item = f64> + '_ {
        self.encoders.iter().zip(&self.bias).map(move |(m, b)| m * a + b)
    }

    /// Advances membrane voltages by `dt_n` with input `a`.
    ///
    /// Returns the spike vector, `1 / dt_n` for neurons that fired and 0
    /// otherwise. Spike times inside the step are interpolated so that the
    /// refractory period starts at the threshold crossing.
    pub fn lif_step(&mut self, a: f64, dt_n: f64) -> &[f64] {
        let p = self.params;
        let start = self.clock;
        for i in 0..self.encoders.len() {
            let drive = p.r_m * (self.encoders[i] * a + self.bias[i]);
            self.refractory[i] -= dt_n;
            let active = (dt_n - self.refractory[i]).clamp(0.0, dt_n);
            let v = drive + (self.voltage[i] - drive) * (-active / p.tau_d).exp();
            if v >= p.v_th {
                let crossing = if drive > p.v_th {
                    dt_n + p.tau_d * (-(v - p.v_th) / (drive - p.v_th)).ln_1p()
                } else {
                    dt_n
                };
                let crossing = crossing.clamp(0.0, dt_n);
                self.voltage[i] = p.v_reset;
                self.refractory[i] = p.tau_ref + crossing;
                self.spikes[i] = 1.0 / dt_n;
                if let Some(r) = self.raster.as_mut() {
                    r.push((start + crossing, i));
                }
            } else {
                self.voltage[i] = v;
                self.spikes[i] = 0.0;
            }
        }
        self.clock += dt_n;
        &self.spikes
    }

    /// Exponential synapse: `s <- s exp(-dt/tau_p) + spike dt / tau_p`.
    ///
    /// A spike of height `1/dt_n` therefore contributes a unit-area kernel.
    pub fn synapse_step(&mut self, spikes: &[f64], dt_n: f64) -> &[f64] {
        let decay = (-dt_n / self.params.tau_p).exp();
        let scale = dt_n / self.params.tau_p;
        for (s, spike) in self.synapse.iter_mut().zip(spikes) {
            *s = *s * decay + spike * scale;
        }
        &self.synapse
    }

    /// One neuron substep: membrane update followed by synaptic filtering.
    pub fn substep(&mut self, a: f64, dt_n: f64) {
        self.lif_step(a, dt_n);
        let decay = (-dt_n / self.params.tau_p).exp();
        let scale = dt_n / self.params.tau_p;
        for (s, spike) in self.synapse.iter_mut().zip(&self.spikes) {
            *s = *s * decay + spike * scale;
        }
    }

    /// Linear readout `w's`.
    pub fn decode(&self) -> f64 {
        self.decoders
            .iter()
            .zip(&self.synapse)
            .map(|(w, s)| w * s)
            .sum()
    }

    /// PES decoder update `w <- w - gamma s e`.
    pub fn pes_update(&mut self, error: f64, rule: &PesRule) -> &[f64] {
        if rule.enabled && rule.learning_rate != 0.0 && error != 0.0 {
            let step = rule.learning_rate * error;
            for (w, s) in self.decoders.iter_mut().zip(&self.synapse) {
                *w -= step * s;
            }
        }
        &self.decoders
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PesRule {
    pub learning_rate: f64,
    pub enabled: bool,
}

/// Runs both populations for one controller period and returns `u_a`.
///
/// The control is decoded from the end-of-period activities before the PES
/// step, so each update uses the error of the period whose activities produced
/// the applied control. With `pes_per_substep` the update is instead applied
/// after every neuron substep.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_control(
    pop_v: &mut SnnPopulation,
    pop_w: &mut SnnPopulation,
    e_p: f64,
    e_theta: f64,
    input_v: f64,
    input_w: f64,
    dt: f64,
    dt_n: f64,
    rule: &PesRule,
    pes_per_substep: bool,
) -> Twist {
    let substeps = ((dt / dt_n).round() as usize).max(1);
    for _ in 0..substeps {
        pop_v.substep(input_v, dt_n);
        pop_w.substep(input_w, dt_n);
        if pes_per_substep {
            pop_v.pes_update(e_p, rule);
            pop_w.pes_update(e_theta, rule);
        }
    }
    let u = Twist::new(pop_v.decode(), pop_w.decode());
    if !pes_per_substep {
        pop_v.pes_update(e_p, rule);
        pop_w.pes_update(e_theta, rule);
    }
    u
}

/// Settings of the two-population compensator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnnConfig {
    pub neurons: usize,
    /// PES rate. The per-period decoder change scales with the summed squared
    /// activity, about 5e5 for 100 neurons, so useful values are small.
    pub learning_rate: f64,
    /// Neuron substep (s).
    pub neuron_dt: f64,
    pub pes_per_substep: bool,
    /// Position error that maps to a normalized input of 1 (m).
    pub position_scale: f64,
    pub seed_velocity: u64,
    pub seed_angular: u64,
    pub lif: LifParams,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            neurons: 100,
            learning_rate: 1e-8,
            neuron_dt: 1e-3,
            pes_per_substep: false,
            position_scale: 1.0,
            seed_velocity: 1,
            seed_angular: 2,
            lif: LifParams::default(),
        }
    }
}

/// Velocity and angular populations together with their learning rule.
#[derive(Debug, Clone)]
pub struct AdaptiveSnn {
    pub velocity: SnnPopulation,
    pub angular: SnnPopulation,
    pub rule: PesRule,
    cfg: SnnConfig,
}

impl AdaptiveSnn {
    pub fn new(cfg: &SnnConfig) -> Result<Self, SnnError> {
        if !(cfg.neuron_dt > 0.0 && cfg.position_scale > 0.0) {
            return Err(SnnError::InvalidParams(
                "neuron_dt and position_scale must be positive".into(),
            ));
        }
        if !(cfg.learning_rate >= 0.0) {
            return Err(SnnError::InvalidParams("learning rate must be non-negative".into()));
        }
        Ok(Self {
            velocity: init_population(cfg.neurons, cfg.seed_velocity, cfg.lif)?,
            angular: init_population(cfg.neurons, cfg.seed_angular, cfg.lif)?,
            rule: PesRule {
                learning_rate: cfg.learning_rate,
                enabled: true,
            },
            cfg: *cfg,
        })
    }

    pub fn config(&self) -> &SnnConfig {
        &self.cfg
    }

    /// Normalized network inputs for the given errors.
    pub fn encode(&self, e_p: f64, e_theta: f64) -> (f64, f64) {
        (
            (e_p / self.cfg.position_scale).clamp(-1.0, 1.0),
            (e_theta / PI).clamp(-1.0, 1.0),
        )
    }

    pub fn control(&mut self, e_p: f64, e_theta: f64, dt: f64) -> Twist {
        let (input_v, input_w) = self.encode(e_p, e_theta);
        adaptive_control(
            &mut self.velocity,
            &mut self.angular,
            e_p,
            e_theta,
            input_v,
            input_w,
            dt,
            self.cfg.neuron_dt,
            &self.rule,
            self.cfg.pes_per_substep,
        )
    }

    pub fn record_spikes(&mut self, on: bool) {
        self.velocity.record_spikes(on);
        self.angular.record_spikes(on);
    }
}
