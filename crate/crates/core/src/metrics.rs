//! Environment-step ledger of one training run.

use serde::{Deserialize, Serialize};

/// Evaluation result after `step` fine-tuning environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub mean: f64,
    pub std: f64,
}

/// Step counts and evaluation history of one run.
///
/// `n_tot = n_exp + n_rol + n_fro + n_fine`. Evaluation and expert
/// calibration episodes are never counted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n_exp: u64,
    pub n_rol: u64,
    pub n_fro: u64,
    pub n_fine: u64,
    pub n_tot: u64,
    pub eval_curve: Vec<EvalPoint>,
    pub reached_target: bool,
    /// Fine-tuning step at which the target was first met.
    pub stop_step: Option<u64>,
    /// Fine-tuning step at which a frozen actor was released.
    pub unfreeze_step: Option<u64>,
}

impl RunMetrics {
    pub fn pretraining_steps(&self) -> u64 {
        self.n_exp + self.n_rol
    }

    pub fn finetune_steps(&self) -> u64 {
        self.n_fro + self.n_fine
    }

    pub fn update_total(&mut self) {
        self.n_tot = self.n_exp + self.n_rol + self.n_fro + self.n_fine;
    }

    pub fn ledger_balances(&self) -> bool {
        self.n_tot == self.n_exp + self.n_rol + self.n_fro + self.n_fine
    }

    pub fn final_return(&self) -> Option<f64> {
        self.eval_curve.last().map(|p| p.mean)
    }
}
