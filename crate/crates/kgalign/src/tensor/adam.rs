//! Adam with linear warmup into a constant learning rate.

use super::params::ParamSet;
use super::{MathError, Result, Tensor};

const BETA1: f32 = 0.9;
const BETA2: f32 = 0.999;
const EPS: f32 = 1e-8;

/// Per-parameter first/second moment estimates plus the shared schedule.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    base_lr: f32,
    warmup_ratio: f32,
}

impl AdamState {
    pub fn new(params: &ParamSet, base_lr: f32, warmup_ratio: f32) -> Self {
        let m = params
            .ids()
            .map(|id| {
                let s = params.value(id).shape();
                Tensor::zeros(s[0], s[1])
            })
            .collect::<Vec<_>>();
        let v = m.clone();
        Self {
            m,
            v,
            step: 0,
            base_lr,
            warmup_ratio,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate at a given step: linear ramp from 0 over the warmup
    /// span, constant afterwards.
    pub fn lr_at(&self, step: u64, total_steps: u64) -> f32 {
        let warmup = (self.warmup_ratio * total_steps as f32).ceil() as u64;
        if warmup > 0 && step < warmup {
            self.base_lr * step as f32 / warmup as f32
        } else {
            self.base_lr
        }
    }

    /// One Adam update from the gradients currently held in `params`.
    pub fn step(&mut self, params: &mut ParamSet, total_steps: u64) -> Result<()> {
        if total_steps == 0 {
            return Err(MathError::ZeroTotalSteps);
        }
        let lr = self.lr_at(self.step, total_steps);
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2 = 1.0 - BETA2.powi(t);
        for id in params.ids() {
            let g = params.grad(id).clone();
            let m = &mut self.m[idx(id)];
            let v = &mut self.v[idx(id)];
            let value = params.value_mut(id);
            for i in 0..g.data().len() {
                let gi = g.data()[i];
                m.data_mut()[i] = BETA1 * m.data()[i] + (1.0 - BETA1) * gi;
                v.data_mut()[i] = BETA2 * v.data()[i] + (1.0 - BETA2) * gi * gi;
                let mhat = m.data()[i] / bias1;
                let vhat = v.data()[i] / bias2;
                value.data_mut()[i] -= lr * mhat / (vhat.sqrt() + EPS);
            }
        }
        Ok(())
    }
}

fn idx(id: super::params::ParamId) -> usize {
    id.0
}
