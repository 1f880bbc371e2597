use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    batches, check_loss, diverged, info_nce, Algo, Branch, EncoderConfig, EpochLog, FeatureQueue, PretrainOutput, Setup,
    SslError, TAG_AUG_K, TAG_AUG_Q, TAG_QUEUE,
};
use crate::csi::Dataset;
use crate::nn::{Model, NnError, Sgd, SgdConfig};
use crate::preprocess::{augment_baseline, select_antennas, AugmentPolicy, FeatureMode, ViewTensor};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MocoConfig {
    pub temperature: f64,
    pub queue_size: usize,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: SgdConfig,
    pub encoder: EncoderConfig,
    /// Draw one antenna triple per batch instead of per sample.
    pub per_batch_triple: bool,
    /// Augmentations applied to both views by the non-ARC baseline.
    pub augment: Vec<AugmentPolicy>,
    pub queue_init: QueueInit,
}

/// Initial queue contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueInit {
    /// Random unit vectors. Features of a fresh encoder share one narrow
    /// cone, so against random negatives the cheapest early win is to
    /// collapse; this is what happens without batch normalization.
    Random,
    /// Keys of the initial key encoder on training views.
    Keys,
}

impl Default for MocoConfig {
    fn default() -> Self {
        Self {
            temperature: 0.07,
            queue_size: 256,
            momentum: 0.99,
            batch_size: 16,
            epochs: 10,
            optimizer: SgdConfig {
                lr: 0.03,
                momentum: 0.9,
                max_grad_norm: Some(5.0),
            },
            encoder: EncoderConfig::default(),
            per_batch_triple: false,
            augment: AugmentPolicy::default_pipeline(),
            queue_init: QueueInit::Keys,
        }
    }
}

impl MocoConfig {
    pub fn validate(&self) -> Result<(), SslError> {
        let bad = |m: String| Err(SslError::InvalidConfig(m));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("moco.temperature must be positive, got {}", self.temperature));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return bad(format!("moco.momentum must lie in [0, 1], got {}", self.momentum));
        }
        if self.batch_size == 0 || self.queue_size == 0 {
            return bad("moco.batch_size and moco.queue_size must be positive".into());
        }
        if self.queue_size % self.batch_size != 0 {
            return bad(format!(
                "moco.queue_size {} is not a multiple of moco.batch_size {}",
                self.queue_size, self.batch_size
            ));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}

/// `theta_k <- m * theta_k + (1 - m) * theta_q`.
pub fn momentum_update(query: &Model, key: &mut Model, m: f64) -> Result<(), SslError> {
    if query.architecture() != key.architecture() {
        return Err(NnError::ShapeMismatch {
            expected: key.param_count(),
            got: query.param_count(),
        }
        .into());
    }
    if m == 1.0 {
        // leave signed zeros alone too
        return Ok(());
    }
    for (k, &q) in key.params_mut().iter_mut().zip(query.params()) {
        *k = m * *k + (1.0 - m) * q;
    }
    Ok(())
}

pub fn pretrain_moco_arc(train: &Dataset, mode: FeatureMode, cfg: &MocoConfig, seed: u64) -> Result<PretrainOutput, SslError> {
    self::train(train, mode, cfg, seed, true)
}

struct BranchState {
    branch: Branch,
    query: Model,
    key: Model,
    queue: FeatureQueue,
    opt: Sgd,
}

fn augmented(x: &ViewTensor, policies: &[AugmentPolicy], rng: &mut Rng) -> ViewTensor {
    policies.iter().fold(x.clone(), |v, &p| augment_baseline(&v, rng, p))
}

pub(super) fn train(ds: &Dataset, mode: FeatureMode, cfg: &MocoConfig, seed: u64, arc: bool) -> Result<PretrainOutput, SslError> {
    cfg.validate()?;
    let setup = Setup::new(ds, mode)?;
    let mut states = Vec::new();
    for &branch in &setup.branches {
        let query = setup.encoder(&cfg.encoder, branch, seed)?;
        let mut qrng = rng::stream(seed, &[TAG_QUEUE, branch.id()]);
        let mut queue = FeatureQueue::random(query.output_len(), cfg.queue_size, &mut qrng)?;
        if cfg.queue_init == QueueInit::Keys {
            for _ in 0..cfg.queue_size {
                let i = qrng.random_range(0..ds.len());
                let t = select_antennas(setup.antennas, &mut qrng)?;
                let x = branch.view(&setup.stats, &ds.samples()[i].csi, t.k, t.reference)?;
                queue.push(&query.forward(&x.values)?)?;
            }
        }
        let opt = Sgd::new(cfg.optimizer, query.param_count())?;
        states.push(BranchState {
            branch,
            key: query.clone(),
            query,
            queue,
            opt,
        });
    }
    let monitor = |states: &[BranchState]| {
        let encs: Vec<&Model> = states.iter().map(|s| &s.query).collect();
        setup.alignment(ds, &encs, seed)
    };
    let initial_alignment = monitor(&states)?;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let order = setup.order(ds.len(), epoch, seed);
        let mut sums = vec![0.0; states.len()];
        for (b, idx) in batches(&order, cfg.batch_size).enumerate() {
            let scale = 1.0 / idx.len() as f64;
            for (si, st) in states.iter_mut().enumerate() {
                let mut grads = vec![0.0; st.query.param_count()];
                let mut keys = Vec::with_capacity(idx.len());
                for &i in idx {
                    let h = &ds.samples()[i].csi;
                    let t = setup.triple(seed, epoch, b, i, cfg.per_batch_triple)?;
                    let (xq, xk) = if arc {
                        (
                            st.branch.view(&setup.stats, h, t.q, t.reference)?,
                            st.branch.view(&setup.stats, h, t.k, t.reference)?,
                        )
                    } else {
                        let x = st.branch.view(&setup.stats, h, t.q, t.reference)?;
                        let path = |tag| rng::stream(seed, &[tag, epoch as u64, i as u64, st.branch.id()]);
                        (
                            augmented(&x, &cfg.augment, &mut path(TAG_AUG_Q)),
                            augmented(&x, &cfg.augment, &mut path(TAG_AUG_K)),
                        )
                    };
                    let trace = st.query.forward_trace(&xq.values)?;
                    let zk = st.key.forward(&xk.values)?;
                    let out = info_nce(trace.output(), &zk, &st.queue, cfg.temperature)
                        .map_err(|e| SslError::Diverged {
                            epoch,
                            step,
                            branch: st.branch.name(),
                            detail: e.to_string(),
                        })?;
                    check_loss(out.loss, epoch, step, st.branch)?;
                    sums[si] += out.loss;
                    let g: Vec<f64> = out.grad_query.iter().map(|v| v * scale).collect();
                    st.query.backward(&trace, &g, &mut grads, false);
                    keys.push(zk);
                }
                st.opt
                    .step(st.query.params_mut(), &grads)
                    .map_err(|e| diverged(e, epoch, step, st.branch))?;
                momentum_update(&st.query, &mut st.key, cfg.momentum)?;
                for k in &keys {
                    st.queue.push(k)?;
                }
            }
            step += 1;
        }
        let (loss_a, loss_p) = setup.split_losses(&sums, ds.len());
        log.push(EpochLog {
            epoch,
            loss_a,
            loss_p,
            alignment: monitor(&states)?,
        });
        log::debug!("moco epoch {epoch}: {:?}", log.last());
    }

    let (mut amp, mut phase, mut amp_key, mut phase_key) = (None, None, None, None);
    for st in states {
        match st.branch {
            Branch::Amplitude => (amp, amp_key) = (Some(st.query), Some(st.key)),
            Branch::Phase(_) => (phase, phase_key) = (Some(st.query), Some(st.key)),
        }
    }
    Ok(PretrainOutput {
        algo: if arc { Algo::MocoArc } else { Algo::Moco },
        mode,
        stats: setup.stats,
        amp,
        phase,
        amp_decoder: None,
        phase_decoder: None,
        amp_key,
        phase_key,
        initial_alignment,
        log,
    })
}
