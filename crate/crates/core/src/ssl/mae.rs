use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{
    batches, check_loss, cosine, diverged, Algo, Branch, EncoderConfig, EpochLog, PretrainOutput, Setup, SslError,
    TAG_DECODER, TAG_EVAL_MASK, TAG_MASK_K, TAG_MASK_Q,
};
use crate::csi::Dataset;
use crate::nn::{arch, loss, Model, Sgd, SgdConfig};
use crate::preprocess::{select_antennas, FeatureMode, ViewTensor};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaeConfig {
    pub mask_ratio: f64,
    /// Patch size as `[subcarriers, packets]`.
    pub patch: [usize; 2],
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: SgdConfig,
    pub encoder: EncoderConfig,
    /// Score reconstruction only on masked positions.
    pub masked_only_mse: bool,
    pub per_batch_triple: bool,
}

impl Default for MaeConfig {
    fn default() -> Self {
        Self {
            mask_ratio: 0.5,
            patch: [6, 25],
            alpha: 0.1,
            batch_size: 16,
            epochs: 10,
            optimizer: SgdConfig {
                lr: 0.05,
                momentum: 0.9,
                max_grad_norm: Some(5.0),
            },
            encoder: EncoderConfig::default(),
            masked_only_mse: false,
            per_batch_triple: false,
        }
    }
}

impl MaeConfig {
    pub fn validate(&self) -> Result<(), SslError> {
        let bad = |m: String| Err(SslError::InvalidConfig(m));
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return bad(format!("mae.mask_ratio must lie in [0, 1), got {}", self.mask_ratio));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("mae.alpha must be finite and >= 0, got {}", self.alpha));
        }
        if self.patch.contains(&0) || self.batch_size == 0 {
            return bad("mae.patch and mae.batch_size must be positive".into());
        }
        self.optimizer.validate()?;
        Ok(())
    }

    fn grid(&self, subcarriers: usize, packets: usize) -> Result<(usize, usize), SslError> {
        let [pk, pt] = self.patch;
        if pk == 0 || pt == 0 || subcarriers % pk != 0 || packets % pt != 0 {
            return Err(SslError::InvalidConfig(format!(
                "patch {pk}x{pt} does not tile a {subcarriers}x{packets} view"
            )));
        }
        Ok((subcarriers / pk, packets / pt))
    }
}

/// Boolean patch grid; `true` marks a masked patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchMask {
    pub rows: usize,
    pub cols: usize,
    pub patch: [usize; 2],
    pub masked: Vec<bool>,
}

impl PatchMask {
    pub fn count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    /// Per-position mask over the `(subcarriers, packets)` view.
    pub fn positions(&self) -> Vec<bool> {
        let [pk, pt] = self.patch;
        let packets = self.cols * pt;
        let mut out = vec![false; self.rows * pk * packets];
        for (i, v) in out.iter_mut().enumerate() {
            let (k, t) = (i / packets, i % packets);
            *v = self.masked[(k / pk) * self.cols + t / pt];
        }
        out
    }
}

/// Zeroes exactly `round(ratio * patches)` patches chosen uniformly.
pub fn random_mask(x: &ViewTensor, cfg: &MaeConfig, rng: &mut Rng) -> Result<(ViewTensor, PatchMask), SslError> {
    let (rows, cols) = cfg.grid(x.subcarriers, x.packets)?;
    let n = rows * cols;
    let m = ((cfg.mask_ratio * n as f64).round() as usize).min(n);
    let mut masked = vec![false; n];
    for i in index::sample(rng, n, m) {
        masked[i] = true;
    }
    let mask = PatchMask {
        rows,
        cols,
        patch: cfg.patch,
        masked,
    };
    let mut out = x.clone();
    for (v, hide) in out.values.iter_mut().zip(mask.positions()) {
        if hide {
            *v = 0.0;
        }
    }
    Ok((out, mask))
}

/// Composite loss `MSE(recon, target) + alpha * (1 - cos(z_q, z_k))` with its
/// gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeArcLoss {
    pub total: f64,
    pub mse: f64,
    pub cosine: f64,
    pub grad_recon: Vec<f64>,
    pub grad_query: Vec<f64>,
    pub grad_key: Vec<f64>,
}

pub fn mae_arc_loss(
    recon: &[f64],
    target: &[f64],
    z_q: &[f64],
    z_k: &[f64],
    alpha: f64,
    mask: Option<&[bool]>,
) -> Result<MaeArcLoss, SslError> {
    if recon.len() != target.len() {
        return Err(SslError::Dimension { expected: target.len(), got: recon.len() });
    }
    if z_q.len() != z_k.len() {
        return Err(SslError::Dimension { expected: z_q.len(), got: z_k.len() });
    }
    let (mse, grad_recon) = loss::mse(recon, target, mask);
    let d = z_q.len();
    let (cos, grad_query, grad_key) = match cosine(z_q, z_k) {
        Some(c) => {
            let nq = z_q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nk = z_k.iter().map(|v| v * v).sum::<f64>().sqrt();
            // d cos / dq = k / (|q||k|) - cos q / |q|^2
            let gq = (0..d).map(|i| -alpha * (z_k[i] / (nq * nk) - c * z_q[i] / (nq * nq))).collect();
            let gk = (0..d).map(|i| -alpha * (z_q[i] / (nq * nk) - c * z_k[i] / (nk * nk))).collect();
            (c, gq, gk)
        }
        None => {
            log::warn!("zero-norm feature in cosine term; using cos = 0");
            (0.0, vec![0.0; d], vec![0.0; d])
        }
    };
    Ok(MaeArcLoss {
        total: mse + alpha * (1.0 - cos),
        mse,
        cosine: cos,
        grad_recon,
        grad_query,
        grad_key,
    })
}

pub fn pretrain_mae_arc(train: &Dataset, mode: FeatureMode, cfg: &MaeConfig, seed: u64) -> Result<PretrainOutput, SslError> {
    self::train(train, mode, cfg, seed, true)
}

struct BranchState {
    branch: Branch,
    enc: Model,
    dec: Model,
    enc_opt: Sgd,
    dec_opt: Sgd,
}

pub(super) fn train(ds: &Dataset, mode: FeatureMode, cfg: &MaeConfig, seed: u64, arc: bool) -> Result<PretrainOutput, SslError> {
    cfg.validate()?;
    let setup = Setup::new(ds, mode)?;
    cfg.grid(setup.input.height, setup.input.width)?;
    let mut states = Vec::new();
    for &branch in &setup.branches {
        let enc = setup.encoder(&cfg.encoder, branch, seed)?;
        let dec = Model::init(
            arch::decoder(enc.architecture())?,
            &mut rng::stream(seed, &[TAG_DECODER, branch.id()]),
        )?;
        states.push(BranchState {
            branch,
            enc_opt: Sgd::new(cfg.optimizer, enc.param_count())?,
            dec_opt: Sgd::new(cfg.optimizer, dec.param_count())?,
            enc,
            dec,
        });
    }
    let monitor = |states: &[BranchState]| {
        let encs: Vec<&Model> = states.iter().map(|s| &s.enc).collect();
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
                let mut enc_grads = vec![0.0; st.enc.param_count()];
                let mut dec_grads = vec![0.0; st.dec.param_count()];
                for &i in idx {
                    let h = &ds.samples()[i].csi;
                    let t = setup.triple(seed, epoch, b, i, cfg.per_batch_triple)?;
                    let path = |tag| rng::stream(seed, &[tag, epoch as u64, i as u64, st.branch.id()]);
                    let target = st.branch.view(&setup.stats, h, t.q, t.reference)?;
                    let (masked_q, mask) = random_mask(&target, cfg, &mut path(TAG_MASK_Q))?;
                    let tq = st.enc.forward_trace(&masked_q.values)?;
                    let td = st.dec.forward_trace(tq.output())?;
                    let key = if arc {
                        let xk = st.branch.view(&setup.stats, h, t.k, t.reference)?;
                        let (masked_k, _) = random_mask(&xk, cfg, &mut path(TAG_MASK_K))?;
                        Some(st.enc.forward_trace(&masked_k.values)?)
                    } else {
                        None
                    };
                    let positions = cfg.masked_only_mse.then(|| mask.positions());
                    let zk = key.as_ref().map(|k| k.output()).unwrap_or(tq.output());
                    let alpha = if arc { cfg.alpha } else { 0.0 };
                    let l = mae_arc_loss(td.output(), &target.values, tq.output(), zk, alpha, positions.as_deref())?;
                    check_loss(l.total, epoch, step, st.branch)?;
                    sums[si] += l.total;

                    let gr: Vec<f64> = l.grad_recon.iter().map(|v| v * scale).collect();
                    let mut gz = st.dec.backward(&td, &gr, &mut dec_grads, true).expect("input gradient requested");
                    if let (Some(tk), true) = (&key, alpha != 0.0) {
                        for (g, v) in gz.iter_mut().zip(&l.grad_query) {
                            *g += v * scale;
                        }
                        let gk: Vec<f64> = l.grad_key.iter().map(|v| v * scale).collect();
                        st.enc.backward(tk, &gk, &mut enc_grads, false);
                    }
                    st.enc.backward(&tq, &gz, &mut enc_grads, false);
                }
                st.enc_opt
                    .step(st.enc.params_mut(), &enc_grads)
                    .map_err(|e| diverged(e, epoch, step, st.branch))?;
                st.dec_opt
                    .step(st.dec.params_mut(), &dec_grads)
                    .map_err(|e| diverged(e, epoch, step, st.branch))?;
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
        log::debug!("mae epoch {epoch}: {:?}", log.last());
    }

    let mut out = PretrainOutput {
        algo: if arc { Algo::MaeArc } else { Algo::Mae },
        mode,
        stats: setup.stats,
        amp: None,
        phase: None,
        amp_decoder: None,
        phase_decoder: None,
        amp_key: None,
        phase_key: None,
        initial_alignment,
        log,
    };
    for st in states {
        match st.branch {
            Branch::Amplitude => {
                out.amp = Some(st.enc);
                out.amp_decoder = Some(st.dec);
            }
            Branch::Phase(_) => {
                out.phase = Some(st.enc);
                out.phase_decoder = Some(st.dec);
            }
        }
    }
    Ok(out)
}

/// Mean full-view reconstruction MSE of masked views of `ds` through the
/// trained encoder/decoder pairs. Masks and antennas are drawn from `seed`.
pub fn reconstruction_mse(out: &PretrainOutput, ds: &Dataset, cfg: &MaeConfig, seed: u64) -> Result<f64, SslError> {
    let antennas = ds.dims().antennas;
    let mut total = 0.0;
    let mut n = 0usize;
    for branch in Branch::for_mode(out.mode) {
        let (Some(enc), Some(dec)) = (out.encoder(branch), out.decoder(branch)) else {
            return Err(SslError::InvalidConfig(format!("no {} encoder/decoder pair", branch.name())));
        };
        for (i, s) in ds.samples().iter().enumerate() {
            let t = select_antennas(antennas, &mut rng::stream(seed, &[TAG_EVAL_MASK, i as u64]))?;
            let x = branch.view(&out.stats, &s.csi, t.q, t.reference)?;
            let (masked, _) = random_mask(&x, cfg, &mut rng::stream(seed, &[TAG_EVAL_MASK, i as u64, branch.id()]))?;
            let recon = dec.forward(&enc.forward(&masked.values)?)?;
            total += loss::mse(&recon, &x.values, None).0;
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_difference, max_relative_error};
    use crate::preprocess::ViewKind;
    use rand::Rng as _;

    fn view(k: usize, t: usize, seed: u64) -> ViewTensor {
        let mut r = rng::seeded(seed);
        let values = (0..k * t).map(|_| r.random_range(0.5..2.0)).collect();
        ViewTensor::new(ViewKind::Amplitude, k, t, values).unwrap()
    }

    fn cfg(ratio: f64) -> MaeConfig {
        MaeConfig {
            mask_ratio: ratio,
            ..MaeConfig::default()
        }
    }

    #[test]
    fn zero_ratio_masks_nothing() {
        let x = view(30, 500, 1);
        let (m, mask) = random_mask(&x, &cfg(0.0), &mut rng::seeded(0)).unwrap();
        assert_eq!(mask.count(), 0);
        assert_eq!(m, x);
    }

    #[test]
    fn half_ratio_masks_fifty_of_hundred_patches() {
        let x = view(30, 500, 2);
        let (_, mask) = random_mask(&x, &cfg(0.5), &mut rng::seeded(1)).unwrap();
        assert_eq!((mask.rows, mask.cols), (5, 20));
        assert_eq!(mask.count(), 50);
    }

    #[test]
    fn masked_positions_are_the_zeroed_positions() {
        let x = view(30, 500, 3);
        for seed in 0..5 {
            let (m, mask) = random_mask(&x, &cfg(0.3), &mut rng::seeded(seed)).unwrap();
            let changed: Vec<bool> = m.values.iter().zip(&x.values).map(|(a, b)| a != b).collect();
            assert_eq!(changed, mask.positions());
            assert_eq!(changed.iter().filter(|&&c| c).count(), mask.count() * 6 * 25);
        }
    }

    #[test]
    fn patch_grid_must_tile_the_view() {
        let x = view(30, 490, 4);
        assert!(random_mask(&x, &cfg(0.5), &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn alpha_zero_is_pure_mse() {
        let recon = [1.0, 2.0, 3.0];
        let target = [1.5, 2.0, 2.0];
        let l = mae_arc_loss(&recon, &target, &[1.0, 0.0], &[0.0, 1.0], 0.0, None).unwrap();
        assert_eq!(l.total, l.mse);
        assert!((l.mse - (0.25 + 1.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn joint_optimum_is_zero() {
        let x = [0.3, -0.2, 0.9];
        let z = [0.4, 0.1];
        let l = mae_arc_loss(&x, &x, &z, &z, 0.1, None).unwrap();
        assert!(l.total.abs() < 1e-15);
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut r = rng::seeded(5);
        for _ in 0..20 {
            let n = r.random_range(1..20);
            let d = r.random_range(1..8);
            let recon: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let target: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let zq: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let zk: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let alpha = r.random_range(0.0..3.0);

            let mut mse = 0.0;
            for i in 0..n {
                mse += (recon[i] - target[i]).powi(2);
            }
            mse /= n as f64;
            let (mut dot, mut qq, mut kk) = (0.0, 0.0, 0.0);
            for i in 0..d {
                dot += zq[i] * zk[i];
                qq += zq[i] * zq[i];
                kk += zk[i] * zk[i];
            }
            let want = mse + alpha * (1.0 - dot / (qq.sqrt() * kk.sqrt()));
            let got = mae_arc_loss(&recon, &target, &zq, &zk, alpha, None).unwrap().total;
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::seeded(6);
        let recon: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let zq: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let zk: Vec<f64> = (0..5).map(|_| r.random_range(-1.0..1.0)).collect();
        let mask: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
        for m in [None, Some(mask.as_slice())] {
            let l = mae_arc_loss(&recon, &target, &zq, &zk, 0.7, m).unwrap();
            let f = |a: &[f64], b: &[f64], c: &[f64]| mae_arc_loss(a, &target, b, c, 0.7, m).unwrap().total;
            let fr = central_difference(|x| f(x, &zq, &zk), &recon, 1e-5);
            let fq = central_difference(|x| f(&recon, x, &zk), &zq, 1e-5);
            let fk = central_difference(|x| f(&recon, &zq, x), &zk, 1e-5);
            assert!(max_relative_error(&l.grad_recon, &fr) < 1e-6);
            assert!(max_relative_error(&l.grad_query, &fq) < 1e-6);
            assert!(max_relative_error(&l.grad_key, &fk) < 1e-6);
        }
    }

    #[test]
    fn zero_norm_feature_gives_zero_cosine() {
        let l = mae_arc_loss(&[0.0], &[0.0], &[0.0, 0.0], &[1.0, 0.0], 2.0, None).unwrap();
        assert_eq!(l.cosine, 0.0);
        assert_eq!(l.total, 2.0);
    }
}
