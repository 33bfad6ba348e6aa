//! Training loop with the automatic MSE -> Tukey loss switch.
//!
//! The controller watches the validation loss: once it fails to improve for
//! `patience` consecutive epochs (plus an optional delay), or a deadline
//! epoch is reached, training switches to Tukey's biweight and never
//! switches back. Per-epoch RNG streams are derived from (seed, epoch), so a
//! run can be resumed from a saved state and continue bit-identically.

use crate::checkpoint::{read_container, write_container};
use crate::error::{Error, Result};
use crate::loss::{loss_gradient, loss_value, LossKind, LossSpec};
use crate::model::{ArchSpec, Network};
use crate::nn::{AdamParams, Mode};
use crate::rng::{derive_rng, STREAM_DROPOUT, STREAM_SHUFFLE};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    MsePhase,
    TukeyPhase,
}

/// Decides when to abandon MSE for Tukey's biweight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchController {
    phase: Phase,
    best_val_loss: Option<f64>,
    epochs_since_improvement: u32,
    /// Consecutive non-improving epochs before the output counts as stable.
    /// `None` disables stabilization-based switching.
    pub patience: Option<u32>,
    /// Deadline epoch: switch here even if never judged stable. `None`
    /// disables the deadline.
    pub forced_switch_epoch: Option<u32>,
    /// Extra epochs between the stabilization judgement and the switch.
    pub switch_delay: u32,
    stabilized_at: Option<u32>,
    switch_epoch_actual: Option<u32>,
    last_epoch: Option<u32>,
}

impl SwitchController {
    pub fn new(patience: Option<u32>, forced_switch_epoch: Option<u32>, switch_delay: u32) -> Self {
        Self {
            phase: Phase::MsePhase,
            best_val_loss: None,
            epochs_since_improvement: 0,
            patience,
            forced_switch_epoch,
            switch_delay,
            stabilized_at: None,
            switch_epoch_actual: None,
            last_epoch: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Epoch at which the transition fired, once it has.
    pub fn switch_epoch(&self) -> Option<u32> {
        self.switch_epoch_actual
    }

    /// Feeds one epoch's validation loss. Epochs are 1-based and must be
    /// observed in increasing order.
    pub fn observe_epoch(&mut self, epoch: u32, val_loss: f64) -> Result<()> {
        if let Some(last) = self.last_epoch {
            if epoch <= last {
                return Err(Error::InvalidArgument(format!(
                    "epochs must increase: observed {epoch} after {last}"
                )));
            }
        }
        self.last_epoch = Some(epoch);
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {epoch}")));
        }

        let improved = match self.best_val_loss {
            None => true,
            Some(best) => val_loss < best,
        };
        if improved {
            self.best_val_loss = Some(val_loss);
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }

        if self.phase == Phase::TukeyPhase {
            return Ok(());
        }
        if self.stabilized_at.is_none() {
            if let Some(patience) = self.patience {
                if self.epochs_since_improvement >= patience {
                    self.stabilized_at = Some(epoch);
                }
            }
        }
        let stable_fire = self
            .stabilized_at
            .map(|s| epoch >= s.saturating_add(self.switch_delay))
            .unwrap_or(false);
        let forced_fire = self.forced_switch_epoch.map(|f| epoch >= f).unwrap_or(false);
        if stable_fire || forced_fire {
            self.phase = Phase::TukeyPhase;
            self.switch_epoch_actual = Some(epoch);
            // Loss scales are incomparable across phases; restart tracking.
            self.best_val_loss = None;
            self.epochs_since_improvement = 0;
        }
        Ok(())
    }
}

/// Which loss drives training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LossPolicy {
    Fixed(LossSpec),
    /// MSE until the controller fires, Tukey's biweight afterwards.
    MseThenTukey {
        mse: LossSpec,
        tukey: LossSpec,
        patience: Option<u32>,
        forced_switch_epoch: Option<u32>,
        switch_delay: u32,
    },
}

impl LossPolicy {
    pub fn mse_then_tukey(
        tukey: LossSpec,
        patience: Option<u32>,
        forced_switch_epoch: Option<u32>,
        switch_delay: u32,
    ) -> Self {
        LossPolicy::MseThenTukey {
            mse: LossSpec::mse(),
            tukey,
            patience,
            forced_switch_epoch,
            switch_delay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub policy: LossPolicy,
    pub seed: u64,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if let LossPolicy::MseThenTukey {
            forced_switch_epoch: Some(f),
            ..
        } = self.policy
        {
            if self.epochs < f {
                return Err(Error::InvalidArgument(format!(
                    "epochs ({}) must be >= forced_switch_epoch ({f}) when switching is enabled",
                    self.epochs
                )));
            }
        }
        Ok(())
    }
}

/// One history row, serialized as CSV `epoch,phase,train_loss,val_loss,val_mae`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub phase: &'static str,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}\n",
            self.epoch, self.phase, self.train_loss, self.val_loss, self.val_mae
        )
    }
}

pub const HISTORY_CSV_HEADER: &str = "epoch,phase,train_loss,val_loss,val_mae\n";

/// Best-so-far parameters and the metric that selected them.
#[derive(Debug, Clone, PartialEq)]
pub struct BestParams {
    pub metric: f64,
    pub epoch: u32,
    pub params: Vec<Vec<f64>>,
}

/// Everything needed to continue (or conclude) a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch_completed: u32,
    pub controller: Option<SwitchController>,
    /// Best validation MAE over the whole run; the final-evaluation choice.
    pub best_overall: Option<BestParams>,
    /// Best validation loss within the MSE (or fixed-loss) phase.
    pub best_mse_phase: Option<BestParams>,
    /// Best validation loss within the Tukey phase.
    pub best_tukey_phase: Option<BestParams>,
}

impl TrainState {
    pub fn fresh(cfg: &TrainConfig) -> Self {
        let controller = match &cfg.policy {
            LossPolicy::Fixed(_) => None,
            LossPolicy::MseThenTukey {
                patience,
                forced_switch_epoch,
                switch_delay,
                ..
            } => Some(SwitchController::new(
                *patience,
                *forced_switch_epoch,
                *switch_delay,
            )),
        };
        Self {
            epoch_completed: 0,
            controller,
            best_overall: None,
            best_mse_phase: None,
            best_tukey_phase: None,
        }
    }

    fn current_spec(&self, cfg: &TrainConfig) -> LossSpec {
        match &cfg.policy {
            LossPolicy::Fixed(spec) => *spec,
            LossPolicy::MseThenTukey { mse, tukey, .. } => {
                match self.controller.as_ref().map(|c| c.phase()) {
                    Some(Phase::TukeyPhase) => *tukey,
                    _ => *mse,
                }
            }
        }
    }
}

/// A training pair: model input and normalized-year target.
pub type SamplePair = (Tensor, f64);

#[derive(Debug)]
pub struct TrainOutcome {
    /// Records for the epochs run by this call (empty prefix when resuming).
    pub history: Vec<EpochRecord>,
    pub state: TrainState,
}

/// Mean loss over a split, dropout in evaluation mode.
pub fn evaluate_split(net: &Network, samples: &[SamplePair], spec: &LossSpec) -> Result<f64> {
    let (preds, targets) = predict_split(net, samples)?;
    loss_value(spec, &preds, &targets)
}

fn predict_split(net: &Network, samples: &[SamplePair]) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty split".into()));
    }
    let mut preds = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for (input, target) in samples {
        preds.push(net.predict(input)?);
        targets.push(*target);
    }
    Ok((preds, targets))
}

pub fn mean_abs_error(preds: &[f64], targets: &[f64]) -> f64 {
    preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / preds.len() as f64
}

/// Called after every epoch with the new record, the live network, and the
/// updated state; used for history/state persistence.
pub type EpochCallback<'a> = dyn FnMut(&EpochRecord, &Network, &TrainState) -> Result<()> + 'a;

/// Runs (or resumes) training. `state` must come from the same config; pass
/// `TrainState::fresh(cfg)` to start over. The network is left at its
/// final-epoch parameters; best-checkpoint parameters live in the state.
pub fn train(
    net: &mut Network,
    train_set: &[SamplePair],
    val_set: &[SamplePair],
    cfg: &TrainConfig,
    mut state: TrainState,
    mut on_epoch: Option<&mut EpochCallback<'_>>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument(
            "training requires non-empty train and validation splits".into(),
        ));
    }
    let hp = AdamParams::with_lr(cfg.learning_rate);
    let mut history = Vec::new();

    for epoch in state.epoch_completed + 1..=cfg.epochs {
        let spec = state.current_spec(cfg);

        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut derive_rng(cfg.seed, STREAM_SHUFFLE, epoch as u64));
        let mut dropout_rng = derive_rng(cfg.seed, STREAM_DROPOUT, epoch as u64);

        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut preds = Vec::with_capacity(batch.len());
            let mut targets = Vec::with_capacity(batch.len());
            let mut traces = Vec::with_capacity(batch.len());
            for &i in batch {
                let (out, trace) =
                    net.forward(&train_set[i].0, Mode::Train, Some(&mut dropout_rng))?;
                if out.len() != 1 {
                    return Err(Error::shape(
                        "train",
                        format!("model emitted {} values, expected a scalar", out.len()),
                    ));
                }
                preds.push(out.data()[0]);
                targets.push(train_set[i].1);
                traces.push(trace);
            }
            let batch_loss = loss_value(&spec, &preds, &targets).map_err(|e| {
                Error::NonFinite(format!("epoch {epoch} batch {batch_idx}: {e}"))
            })?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss diverged at epoch {epoch}, batch {batch_idx}"
                )));
            }
            loss_sum += batch_loss * batch.len() as f64;

            let grads = loss_gradient(&spec, &preds, &targets)?;
            net.zero_grads();
            for (trace, g) in traces.iter().zip(&grads) {
                net.backward(trace, &Tensor::scalar(*g))?;
            }
            for p in net.parameters_mut() {
                p.step_with_accumulated(&hp).map_err(|e| {
                    Error::NonFinite(format!("epoch {epoch} batch {batch_idx}: {e}"))
                })?;
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let (val_preds, val_targets) = predict_split(net, val_set)?;
        let val_loss = loss_value(&spec, &val_preds, &val_targets)?;
        let val_mae = mean_abs_error(&val_preds, &val_targets);
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation loss diverged at epoch {epoch}"
            )));
        }

        let record = EpochRecord {
            epoch,
            phase: spec.kind.as_str(),
            train_loss,
            val_loss,
            val_mae,
        };

        let improved_overall = state
            .best_overall
            .as_ref()
            .map(|b| val_mae < b.metric)
            .unwrap_or(true);
        if improved_overall {
            state.best_overall = Some(BestParams {
                metric: val_mae,
                epoch,
                params: net.params_snapshot(),
            });
        }
        let phase_best = match spec.kind {
            LossKind::Tukey => &mut state.best_tukey_phase,
            _ => &mut state.best_mse_phase,
        };
        if phase_best.as_ref().map(|b| val_loss < b.metric).unwrap_or(true) {
            *phase_best = Some(BestParams {
                metric: val_loss,
                epoch,
                params: net.params_snapshot(),
            });
        }

        if let Some(ctrl) = state.controller.as_mut() {
            ctrl.observe_epoch(epoch, val_loss)?;
        }
        state.epoch_completed = epoch;

        if let Some(cb) = on_epoch.as_mut() {
            cb(&record, net, &state)?;
        }
        history.push(record);
    }

    Ok(TrainOutcome { history, state })
}

// --- training-state persistence -------------------------------------------

#[derive(Serialize, Deserialize)]
struct StateHeader {
    kind: String,
    version: u32,
    arch: ArchSpec,
    epoch_completed: u32,
    controller: Option<SwitchController>,
    step_counts: Vec<u64>,
    best_overall: Option<(f64, u32)>,
    best_mse_phase: Option<(f64, u32)>,
    best_tukey_phase: Option<(f64, u32)>,
}

/// Saves network parameters, Adam moments, and the training state so that a
/// resumed run continues bit-identically.
pub fn save_train_state(path: &Path, net: &Network, state: &TrainState) -> Result<()> {
    let params = net.parameters();
    let header = StateHeader {
        kind: "train_state".into(),
        version: 1,
        arch: net.arch().clone(),
        epoch_completed: state.epoch_completed,
        controller: state.controller.clone(),
        step_counts: params.iter().map(|p| p.step_count).collect(),
        best_overall: state.best_overall.as_ref().map(|b| (b.metric, b.epoch)),
        best_mse_phase: state.best_mse_phase.as_ref().map(|b| (b.metric, b.epoch)),
        best_tukey_phase: state.best_tukey_phase.as_ref().map(|b| (b.metric, b.epoch)),
    };
    let header = serde_json::to_string(&header).map_err(|e| Error::Format(e.to_string()))?;

    let mut sections: Vec<(String, &[f64])> = Vec::new();
    for (i, p) in params.iter().enumerate() {
        sections.push((format!("param.{i}"), p.value.data()));
        sections.push((format!("m.{i}"), p.first_moment.data()));
        sections.push((format!("v.{i}"), p.second_moment.data()));
    }
    for (name, best) in [
        ("best_overall", &state.best_overall),
        ("best_mse", &state.best_mse_phase),
        ("best_tukey", &state.best_tukey_phase),
    ] {
        if let Some(b) = best {
            for (i, t) in b.params.iter().enumerate() {
                sections.push((format!("{name}.{i}"), t));
            }
        }
    }
    write_container(path, &header, &sections)
}

/// Loads a saved training state, rebuilding the network it belongs to.
pub fn load_train_state(path: &Path) -> Result<(Network, TrainState)> {
    let (header, sections) = read_container(path)?;
    let header: StateHeader =
        serde_json::from_str(&header).map_err(|e| Error::Format(e.to_string()))?;
    if header.kind != "train_state" {
        return Err(Error::Format(format!(
            "{} is not a training state",
            path.display()
        )));
    }
    let mut net = Network::from_arch(&header.arch)?;
    let n_params = net.parameters().len();

    let lookup = |prefix: &str| -> Vec<Vec<f64>> {
        (0..n_params)
            .filter_map(|i| {
                sections
                    .iter()
                    .find(|(n, _)| *n == format!("{prefix}.{i}"))
                    .map(|(_, d)| d.clone())
            })
            .collect()
    };

    let params = lookup("param");
    let moments_m = lookup("m");
    let moments_v = lookup("v");
    if params.len() != n_params || moments_m.len() != n_params || moments_v.len() != n_params {
        return Err(Error::Format("training state is missing parameter sections".into()));
    }
    net.restore_params(&params)?;
    {
        let mut ps = net.parameters_mut();
        for (i, p) in ps.iter_mut().enumerate() {
            p.first_moment = Tensor::new(p.value.shape().to_vec(), moments_m[i].clone())?;
            p.second_moment = Tensor::new(p.value.shape().to_vec(), moments_v[i].clone())?;
            p.step_count = header.step_counts[i];
        }
    }

    let rebuild = |meta: Option<(f64, u32)>, prefix: &str| -> Option<BestParams> {
        meta.map(|(metric, epoch)| BestParams {
            metric,
            epoch,
            params: lookup(prefix),
        })
    };
    let state = TrainState {
        epoch_completed: header.epoch_completed,
        controller: header.controller,
        best_overall: rebuild(header.best_overall, "best_overall"),
        best_mse_phase: rebuild(header.best_mse_phase, "best_mse"),
        best_tukey_phase: rebuild(header.best_tukey_phase, "best_tukey"),
    };
    Ok((net, state))
}
