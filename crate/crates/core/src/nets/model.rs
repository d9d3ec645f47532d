//! Detector `g_β ∘ f_α`, policy network `h_γ`, their losses and gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_out_len, conv_tanh_backward, conv_tanh_forward, dense, dense_backward, global_avg_pool,
    Maps, KERNEL,
};
use super::params::{ParamStore, Tensor};
use crate::augment::{realize_op, AugContext, AugOp, AugPolicy, FaceFrame, OpSet};
use crate::curriculum::Label;
use crate::error::{CdfaError, Result};
use crate::grid::Image;

/// Architecture of the three networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub input_height: usize,
    pub input_width: usize,
    /// Output channels of each stride-2 convolution block.
    pub channels: Vec<usize>,
    pub feature_dim: usize,
    /// Hidden widths of the policy MLP (its output layer has 3 units).
    pub policy_hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_height: 64,
            input_width: 64,
            channels: vec![8, 16, 32, 32],
            feature_dim: 64,
            policy_hidden: vec![64, 32],
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_height == 0 || self.input_width == 0 {
            return Err(CdfaError::Config("input size must be positive".into()));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(CdfaError::Config(
                "need at least one convolution block with positive width".into(),
            ));
        }
        if self.feature_dim == 0 || self.policy_hidden.contains(&0) {
            return Err(CdfaError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Spatial size after the convolution stack.
    pub fn final_map_size(&self) -> (usize, usize) {
        self.channels
            .iter()
            .fold((self.input_height, self.input_width), |(h, w), _| {
                (conv_out_len(h), conv_out_len(w))
            })
    }
}

/// Latent representation `z = f_α(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub logit: f64,
    pub probability: f64,
}

impl Prediction {
    pub fn from_logit(logit: f64) -> Self {
        Prediction {
            logit,
            probability: sigmoid(logit),
        }
    }

    pub fn from_probability(p: f64) -> Self {
        Prediction {
            logit: (p / (1.0 - p)).ln(),
            probability: p,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probabilities are clamped to `[1e-7, 1 − 1e-7]` before the loss.
pub const PROB_CLAMP: f64 = 1e-7;

fn logit_bound() -> f64 {
    ((1.0 - PROB_CLAMP) / PROB_CLAMP).ln()
}

/// Binary cross-entropy in logit form and its derivative with respect to the
/// logit. Outside the clamp the loss is flat.
pub fn bce_with_logit(logit: f64, target: f64) -> (f64, f64) {
    let bound = logit_bound();
    let l = logit.clamp(-bound, bound);
    let loss = l.max(0.0) - l * target + (-l.abs()).exp().ln_1p();
    let grad = if logit.abs() > bound {
        0.0
    } else {
        sigmoid(l) - target
    };
    (loss, grad)
}

pub fn bce_loss(pred: &Prediction, label: Label) -> f64 {
    bce_with_logit(pred.logit, label.target()).0
}

// Tensor layout helpers. α: conv{l}.weight/bias…, proj.weight/bias.
// β: head.weight/bias. γ: policy{k}.weight/bias….

fn init_alpha<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> ParamStore {
    let mut tensors = Vec::new();
    let mut cin = Image::CHANNELS;
    for (l, &cout) in cfg.channels.iter().enumerate() {
        let fan = KERNEL * KERNEL;
        tensors.push(Tensor::glorot(
            format!("conv{l}.weight"),
            vec![cout, cin, KERNEL, KERNEL],
            cin * fan,
            cout * fan,
            rng,
        ));
        tensors.push(Tensor::zeros(format!("conv{l}.bias"), vec![cout]));
        cin = cout;
    }
    tensors.push(Tensor::glorot(
        "proj.weight",
        vec![cfg.feature_dim, cin],
        cin,
        cfg.feature_dim,
        rng,
    ));
    tensors.push(Tensor::zeros("proj.bias", vec![cfg.feature_dim]));
    ParamStore::new(tensors).expect("consistent shapes")
}

fn init_beta<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> ParamStore {
    ParamStore::new(vec![
        Tensor::glorot(
            "head.weight",
            vec![1, cfg.feature_dim],
            cfg.feature_dim,
            1,
            rng,
        ),
        Tensor::zeros("head.bias", vec![1]),
    ])
    .expect("consistent shapes")
}

fn init_gamma<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> ParamStore {
    let mut tensors = Vec::new();
    let mut n_in = cfg.feature_dim;
    let widths = cfg.policy_hidden.iter().copied().chain([AugOp::COUNT]);
    for (k, n_out) in widths.enumerate() {
        tensors.push(Tensor::glorot(
            format!("policy{k}.weight"),
            vec![n_out, n_in],
            n_in,
            n_out,
            rng,
        ));
        tensors.push(Tensor::zeros(format!("policy{k}.bias"), vec![n_out]));
        n_in = n_out;
    }
    ParamStore::new(tensors).expect("consistent shapes")
}

/// The feature extractor `f_α`, classifier `g_β` and policy `h_γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    pub config: NetConfig,
    pub alpha: ParamStore,
    pub beta: ParamStore,
    pub gamma: ParamStore,
}

impl Networks {
    pub fn init<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let alpha = init_alpha(&config, rng);
        let beta = init_beta(&config, rng);
        let gamma = init_gamma(&config, rng);
        Ok(Networks {
            config,
            alpha,
            beta,
            gamma,
        })
    }

    /// Checks that the stored tensors match the architecture.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let reference = Networks::init(self.config.clone(), &mut rng)?;
        for (have, want, which) in [
            (&self.alpha, &reference.alpha, "alpha"),
            (&self.beta, &reference.beta, "beta"),
            (&self.gamma, &reference.gamma, "gamma"),
        ] {
            if !have.same_layout(want) {
                return Err(CdfaError::Dimension(format!(
                    "{which} parameters do not match the network configuration"
                )));
            }
            if !have.is_finite() {
                return Err(CdfaError::DataIntegrity(format!(
                    "{which} has non-finite entries"
                )));
            }
        }
        Ok(())
    }

    pub fn features(&self, x: &Image) -> Result<FeatureVector> {
        features(&self.config, &self.alpha, x)
    }

    pub fn classify(&self, z: &FeatureVector) -> Result<Prediction> {
        classify(z, &self.beta)
    }

    pub fn predict(&self, x: &Image) -> Result<Prediction> {
        self.classify(&self.features(x)?)
    }

    pub fn policy(&self, x: &Image, enabled: OpSet) -> Result<AugPolicy> {
        policy_head(&self.features(x)?, &self.gamma, enabled)
    }
}

/// Forward intermediates of `f_α`.
#[derive(Debug, Clone)]
pub struct ExtractorCache {
    /// `maps[0]` is the input; `maps[l + 1]` the output of block `l`.
    maps: Vec<Maps>,
    pooled: Vec<f64>,
    pub z: Vec<f64>,
}

fn image_to_maps(x: &Image) -> Maps {
    let (h, w) = (x.height(), x.width());
    let mut m = Maps::zeros(Image::CHANNELS, h, w);
    for (px, rgb) in x.data().chunks_exact(Image::CHANNELS).enumerate() {
        for (c, &v) in rgb.iter().enumerate() {
            m.data[c * h * w + px] = v;
        }
    }
    m
}

pub fn extractor_forward(cfg: &NetConfig, alpha: &ParamStore, x: &Image) -> Result<ExtractorCache> {
    if x.height() != cfg.input_height || x.width() != cfg.input_width {
        return Err(CdfaError::Dimension(format!(
            "extractor expects {}x{} input, got {}x{}",
            cfg.input_height,
            cfg.input_width,
            x.height(),
            x.width()
        )));
    }
    let n_blocks = cfg.channels.len();
    if alpha.tensors().len() != 2 * n_blocks + 2 {
        return Err(CdfaError::Dimension(
            "alpha does not match the configured block count".into(),
        ));
    }
    let mut maps = Vec::with_capacity(n_blocks + 1);
    maps.push(image_to_maps(x));
    for (l, &cout) in cfg.channels.iter().enumerate() {
        let next = conv_tanh_forward(
            &maps[l],
            &alpha.tensor(2 * l).values,
            &alpha.tensor(2 * l + 1).values,
            cout,
        );
        maps.push(next);
    }
    let pooled = global_avg_pool(maps.last().expect("non-empty"));
    let z = dense(
        &alpha.tensor(2 * n_blocks).values,
        &alpha.tensor(2 * n_blocks + 1).values,
        &pooled,
    );
    Ok(ExtractorCache { maps, pooled, z })
}

/// Accumulates `∂L/∂α` into `grad` given `∂L/∂z`.
pub fn extractor_backward(
    cfg: &NetConfig,
    alpha: &ParamStore,
    cache: &ExtractorCache,
    dz: &[f64],
    grad: &mut ParamStore,
) {
    let n_blocks = cfg.channels.len();
    let (dw, rest) = store_pair(grad, 2 * n_blocks);
    let d_pooled = dense_backward(
        &alpha.tensor(2 * n_blocks).values,
        &cache.pooled,
        dz,
        dw,
        rest,
    );

    let last = &cache.maps[n_blocks];
    let area = (last.height * last.width) as f64;
    let mut d_act: Vec<f64> = d_pooled
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g / area, last.height * last.width))
        .collect();
    for l in (0..n_blocks).rev() {
        let (dw, db) = store_pair(grad, 2 * l);
        let d_in = conv_tanh_backward(
            &cache.maps[l],
            &cache.maps[l + 1],
            &d_act,
            &alpha.tensor(2 * l).values,
            dw,
            db,
            l > 0,
        );
        if let Some(d) = d_in {
            d_act = d;
        }
    }
}

fn store_pair(store: &mut ParamStore, weight_idx: usize) -> (&mut [f64], &mut [f64]) {
    store_tensors_mut(store, weight_idx, weight_idx + 1)
}

fn store_tensors_mut(store: &mut ParamStore, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let tensors = store.tensors_mut();
    let (left, right) = tensors.split_at_mut(j);
    (&mut left[i].values, &mut right[0].values)
}

pub fn features(cfg: &NetConfig, alpha: &ParamStore, x: &Image) -> Result<FeatureVector> {
    Ok(FeatureVector(extractor_forward(cfg, alpha, x)?.z))
}

/// Single-logit affine head followed by a sigmoid.
pub fn classify(z: &FeatureVector, beta: &ParamStore) -> Result<Prediction> {
    let w = &beta.tensor(0).values;
    if w.len() != z.len() {
        return Err(CdfaError::Dimension(format!(
            "head expects {} features, got {}",
            w.len(),
            z.len()
        )));
    }
    let logit = beta.tensor(1).values[0] + w.iter().zip(&z.0).map(|(a, b)| a * b).sum::<f64>();
    Ok(Prediction::from_logit(logit))
}

/// Forward intermediates of `h_γ`.
#[derive(Debug, Clone)]
pub struct PolicyCache {
    /// `acts[0] = z`; hidden activations follow; the last entry is the logits.
    acts: Vec<Vec<f64>>,
    pub probs: [f64; AugOp::COUNT],
}

/// Softmax restricted to the enabled operators.
pub fn masked_softmax(logits: &[f64], enabled: OpSet) -> [f64; AugOp::COUNT] {
    let max = AugOp::ALL
        .iter()
        .filter(|op| enabled.contains(**op))
        .map(|op| logits[op.index()])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; AugOp::COUNT];
    let mut sum = 0.0;
    for op in enabled.iter() {
        let e = (logits[op.index()] - max).exp();
        p[op.index()] = e;
        sum += e;
    }
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

pub fn policy_forward(z: &[f64], gamma: &ParamStore, enabled: OpSet) -> Result<PolicyCache> {
    if enabled.is_empty() {
        return Err(CdfaError::Config("no augmentation operator enabled".into()));
    }
    let n_layers = gamma.tensors().len() / 2;
    if gamma.tensor(0).shape[1] != z.len() {
        return Err(CdfaError::Dimension(format!(
            "policy expects {} features, got {}",
            gamma.tensor(0).shape[1],
            z.len()
        )));
    }
    let mut acts = vec![z.to_vec()];
    for k in 0..n_layers {
        let mut y = dense(
            &gamma.tensor(2 * k).values,
            &gamma.tensor(2 * k + 1).values,
            acts.last().expect("non-empty"),
        );
        if k + 1 < n_layers {
            y.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(y);
    }
    let probs = masked_softmax(acts.last().expect("logits"), enabled);
    Ok(PolicyCache { acts, probs })
}

/// Accumulates `∂L/∂γ` given `∂L/∂p`.
pub fn policy_backward(
    gamma: &ParamStore,
    cache: &PolicyCache,
    d_probs: [f64; AugOp::COUNT],
    grad: &mut ParamStore,
) {
    let p = cache.probs;
    let dot: f64 = (0..AugOp::COUNT).map(|j| p[j] * d_probs[j]).sum();
    let mut dy: Vec<f64> = (0..AugOp::COUNT)
        .map(|j| p[j] * (d_probs[j] - dot))
        .collect();
    let n_layers = gamma.tensors().len() / 2;
    for k in (0..n_layers).rev() {
        if k + 1 < n_layers {
            let act = &cache.acts[k + 1];
            dy.iter_mut().zip(act).for_each(|(d, a)| *d *= 1.0 - a * a);
        }
        let (dw, db) = store_tensors_mut(grad, 2 * k, 2 * k + 1);
        dy = dense_backward(&gamma.tensor(2 * k).values, &cache.acts[k], &dy, dw, db);
    }
}

/// `softmax(h_γ(z))` over the enabled operators.
pub fn policy_head(z: &FeatureVector, gamma: &ParamStore, enabled: OpSet) -> Result<AugPolicy> {
    let cache = policy_forward(&z.0, gamma, enabled)?;
    AugPolicy::new(cache.probs)
}

/// Loss and gradients of one detector phase.
#[derive(Debug, Clone)]
pub struct DetectorGrads {
    pub loss: f64,
    pub alpha: ParamStore,
    pub beta: ParamStore,
}

/// Mean BCE over `items` and its exact gradient with respect to α and β.
pub fn backward_detector(nets: &Networks, items: &[(&Image, Label)]) -> Result<DetectorGrads> {
    if items.is_empty() {
        return Err(CdfaError::Usage(
            "detector backward on an empty batch".into(),
        ));
    }
    let n = items.len() as f64;
    let per_item: Vec<(f64, ParamStore, ParamStore)> = items
        .par_iter()
        .map(|(x, label)| {
            let cache = extractor_forward(&nets.config, &nets.alpha, x)?;
            let z = FeatureVector(cache.z.clone());
            let pred = classify(&z, &nets.beta)?;
            let (loss, dlogit) = bce_with_logit(pred.logit, label.target());
            let dlogit = dlogit / n;

            let mut g_beta = nets.beta.zeros_like();
            let head_w = &nets.beta.tensor(0).values;
            let dz: Vec<f64> = head_w.iter().map(|w| w * dlogit).collect();
            {
                let (dw, db) = store_tensors_mut(&mut g_beta, 0, 1);
                dw.iter_mut().zip(&z.0).for_each(|(d, v)| *d += dlogit * v);
                db[0] += dlogit;
            }
            let mut g_alpha = nets.alpha.zeros_like();
            if dlogit != 0.0 {
                extractor_backward(&nets.config, &nets.alpha, &cache, &dz, &mut g_alpha);
            }
            Ok((loss, g_alpha, g_beta))
        })
        .collect::<Result<_>>()?;

    let mut out = DetectorGrads {
        loss: 0.0,
        alpha: nets.alpha.zeros_like(),
        beta: nets.beta.zeros_like(),
    };
    for (loss, ga, gb) in &per_item {
        out.loss += loss / n;
        out.alpha.add_scaled(ga, 1.0);
        out.beta.add_scaled(gb, 1.0);
    }
    Ok(out)
}

/// Mean detector loss without gradients.
pub fn detector_loss(nets: &Networks, items: &[(&Image, Label)]) -> Result<f64> {
    if items.is_empty() {
        return Err(CdfaError::Usage("loss of an empty batch".into()));
    }
    let losses: Vec<f64> = items
        .par_iter()
        .map(|(x, label)| Ok(bce_loss(&nets.predict(x)?, *label)))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / items.len() as f64)
}

/// Operator randomness for one soft-mixture call: one independent seed per
/// operator, drawn in operator order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorDraws {
    pub seeds: [u64; AugOp::COUNT],
}

impl OperatorDraws {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        OperatorDraws {
            seeds: std::array::from_fn(|_| rng.gen()),
        }
    }

    /// `τ_j(x)` under this call's fixed randomness.
    pub fn realize(&self, op: AugOp, x: &FaceFrame, ctx: &AugContext<'_>) -> Result<Image> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seeds[op.index()]);
        Ok(realize_op(op, x, ctx, &mut rng)?.image)
    }
}

/// Intermediates of `g_β(Σ_j p_j f_α(τ_j(x)))` with `p = h_γ(f_α(x))`.
#[derive(Debug, Clone)]
pub struct MixtureCache {
    policy: PolicyCache,
    op_features: [Option<Vec<f64>>; AugOp::COUNT],
    mixed: Vec<f64>,
    pub draws: OperatorDraws,
    pub prediction: Prediction,
    /// Plain detector prediction on `x` itself.
    pub clean_prediction: Prediction,
}

impl MixtureCache {
    pub fn policy(&self) -> [f64; AugOp::COUNT] {
        self.policy.probs
    }

    pub fn mixed_features(&self) -> &[f64] {
        &self.mixed
    }
}

/// Relaxed augmentation forward: each enabled operator is realized once and
/// its features are mixed with the policy weights.
pub fn soft_mixture_forward<R: Rng + ?Sized>(
    nets: &Networks,
    x: &FaceFrame,
    ctx: &AugContext<'_>,
    enabled: OpSet,
    rng: &mut R,
) -> Result<(Prediction, MixtureCache)> {
    let draws = OperatorDraws::sample(rng);
    soft_mixture_with_draws(nets, x, ctx, enabled, draws)
}

pub fn soft_mixture_with_draws(
    nets: &Networks,
    x: &FaceFrame,
    ctx: &AugContext<'_>,
    enabled: OpSet,
    draws: OperatorDraws,
) -> Result<(Prediction, MixtureCache)> {
    let z0 = features(&nets.config, &nets.alpha, &x.image)?;
    let clean_prediction = classify(&z0, &nets.beta)?;
    let policy = policy_forward(&z0.0, &nets.gamma, enabled)?;

    let mut op_features: [Option<Vec<f64>>; AugOp::COUNT] = Default::default();
    let mut mixed = vec![0.0; nets.config.feature_dim];
    for op in enabled.iter() {
        let img = draws.realize(op, x, ctx)?;
        let z = features(&nets.config, &nets.alpha, &img)?.0;
        let p = policy.probs[op.index()];
        mixed.iter_mut().zip(&z).for_each(|(m, v)| *m += p * v);
        op_features[op.index()] = Some(z);
    }
    let prediction = classify(&FeatureVector(mixed.clone()), &nets.beta)?;
    Ok((
        prediction,
        MixtureCache {
            policy,
            op_features,
            mixed,
            draws,
            prediction,
            clean_prediction,
        },
    ))
}

/// The search batch `B_sc`: real frames (label real) and their relaxed
/// pseudo-fakes (label fake).
#[derive(Debug, Clone, Default)]
pub struct SearchBatch {
    pub mixtures: Vec<MixtureCache>,
    pub gamma_params: usize,
}

impl SearchBatch {
    pub fn len(&self) -> usize {
        2 * self.mixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mixtures.is_empty()
    }

    pub fn mean_policy(&self) -> Option<[f64; AugOp::COUNT]> {
        mean_probs(self.mixtures.iter().map(MixtureCache::policy))
    }
}

pub fn mean_probs(it: impl Iterator<Item = [f64; AugOp::COUNT]>) -> Option<[f64; AugOp::COUNT]> {
    let mut acc = [0.0; AugOp::COUNT];
    let mut n = 0usize;
    for p in it {
        n += 1;
        acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
    }
    (n > 0).then(|| acc.map(|v| v / n as f64))
}

pub fn build_search_batch<R: Rng + ?Sized>(
    nets: &Networks,
    reals: &[&FaceFrame],
    ctx: &AugContext<'_>,
    enabled: OpSet,
    rng: &mut R,
) -> Result<SearchBatch> {
    let draws: Vec<OperatorDraws> = reals.iter().map(|_| OperatorDraws::sample(rng)).collect();
    let mixtures = reals
        .par_iter()
        .zip(draws.par_iter())
        .map(|(x, d)| Ok(soft_mixture_with_draws(nets, x, ctx, enabled, *d)?.1))
        .collect::<Result<_>>()?;
    Ok(SearchBatch {
        mixtures,
        gamma_params: nets.gamma.num_params(),
    })
}

#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub loss: f64,
    pub gamma: ParamStore,
}

/// Mean BCE over `B_sc` and its exact gradient with respect to γ. Gradients
/// reach γ only through `p`; α and β are treated as constants.
pub fn backward_policy(nets: &Networks, search: &SearchBatch) -> Result<PolicyGrads> {
    if search.is_empty() {
        return Err(CdfaError::Usage(
            "policy backward called without forward caches".into(),
        ));
    }
    if search.gamma_params != nets.gamma.num_params() {
        return Err(CdfaError::Usage(
            "search batch was built with a different policy network".into(),
        ));
    }
    let n = search.len() as f64;
    let head_w = &nets.beta.tensor(0).values;
    let mut grad = nets.gamma.zeros_like();
    let mut loss = 0.0;
    for m in &search.mixtures {
        loss += bce_loss(&m.clean_prediction, Label::Real) / n;
        let (l, dlogit) = bce_with_logit(m.prediction.logit, Label::Fake.target());
        loss += l / n;
        let dlogit = dlogit / n;
        if dlogit == 0.0 {
            continue;
        }
        let mut d_probs = [0.0; AugOp::COUNT];
        for (j, z) in m.op_features.iter().enumerate() {
            if let Some(z) = z {
                d_probs[j] = dlogit * head_w.iter().zip(z).map(|(w, v)| w * v).sum::<f64>();
            }
        }
        policy_backward(&nets.gamma, &m.policy, d_probs, &mut grad);
    }
    Ok(PolicyGrads { loss, gamma: grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::tests::ring_landmarks;
    use crate::augment::AugParams;
    use crate::geometry::MaskParams;

    fn tiny_config() -> NetConfig {
        NetConfig {
            input_height: 4,
            input_width: 4,
            channels: vec![2],
            feature_dim: 2,
            policy_hidden: vec![3, 3],
        }
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
        Image::from_vec(h, w, (0..h * w * 3).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn zero_image_gives_zero_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let nets = Networks::init(NetConfig::default(), &mut rng).unwrap();
        let z = nets.features(&Image::new(64, 64)).unwrap();
        assert_eq!(z.len(), 64);
        assert!(z.0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_shape_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (h, w) in [(16, 16), (20, 12), (5, 9)] {
            let cfg = NetConfig {
                input_height: h,
                input_width: w,
                feature_dim: 7,
                ..NetConfig::default()
            };
            let nets = Networks::init(cfg, &mut rng).unwrap();
            let x = random_image(&mut rng, h, w);
            let a = nets.features(&x).unwrap();
            assert_eq!(a.len(), 7);
            assert_eq!(a, nets.features(&x).unwrap());
            assert!(matches!(
                nets.features(&Image::new(h + 1, w)),
                Err(CdfaError::Dimension(_))
            ));
        }
    }

    #[test]
    fn classify_properties() {
        let z = FeatureVector(vec![0.4, -1.0, 2.0]);
        let zero = ParamStore::new(vec![
            Tensor::zeros("head.weight", vec![1, 3]),
            Tensor::zeros("head.bias", vec![1]),
        ])
        .unwrap();
        assert_eq!(classify(&z, &zero).unwrap().probability, 0.5);

        let mut beta = zero.clone();
        beta.tensor_mut(0).values = vec![0.3, 0.2, -0.1];
        beta.tensor_mut(1).values = vec![0.05];
        let mut halved = beta.clone();
        halved
            .tensor_mut(0)
            .values
            .iter_mut()
            .for_each(|v| *v /= 2.0);
        let doubled = FeatureVector(z.0.iter().map(|v| 2.0 * v).collect());
        let a = classify(&z, &beta).unwrap().logit;
        let b = classify(&doubled, &halved).unwrap().logit;
        assert!((a - b).abs() < 1e-15);

        assert!(Prediction::from_logit(0.0).probability < Prediction::from_logit(3.0).probability);
        assert!(Prediction::from_logit(40.0).probability > 0.999_999);
        assert!(classify(&FeatureVector(vec![1.0]), &beta).is_err());
    }

    #[test]
    fn policy_head_simplex_and_shift_invariance() {
        assert_eq!(
            masked_softmax(&[0.0, 0.0, 0.0], OpSet::all()),
            [1.0 / 3.0; 3]
        );
        let a = masked_softmax(&[0.3, -1.2, 2.0], OpSet::all());
        let b = masked_softmax(&[100.3, 98.8, 102.0], OpSet::all());
        for j in 0..3 {
            assert!((a[j] - b[j]).abs() < 1e-12);
        }
        let masked = masked_softmax(
            &[5.0, 1.0, 1.0],
            OpSet::from_ops(&[AugOp::Sbi, AugOp::Ssbi]),
        );
        assert_eq!(masked, [0.0, 0.5, 0.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let nets = Networks::init(NetConfig::default(), &mut rng).unwrap();
        for _ in 0..20 {
            let x = random_image(&mut rng, 64, 64);
            let p = nets.policy(&x, OpSet::all()).unwrap().probs();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bce_values() {
        let half = Prediction::from_logit(0.0);
        assert!((bce_loss(&half, Label::Real) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(&half, Label::Fake) - std::f64::consts::LN_2).abs() < 1e-12);
        let p = Prediction::from_probability(0.9);
        assert!((bce_loss(&p, Label::Fake) - 0.105_360_515_657_826_3).abs() < 1e-9);
        for prob in [0.01, 0.3, 0.77, 0.999] {
            let a = bce_loss(&Prediction::from_probability(prob), Label::Fake);
            let b = bce_loss(&Prediction::from_probability(1.0 - prob), Label::Real);
            assert!((a - b).abs() < 1e-9);
        }
        let (l, g) = bce_with_logit(80.0, 0.0);
        assert!((l - (1.0 / PROB_CLAMP).ln()).abs() < 1e-6);
        assert_eq!(g, 0.0);
    }

    fn numeric_grad(
        store: &ParamStore,
        idx: (usize, usize),
        h: f64,
        mut eval: impl FnMut(&ParamStore) -> f64,
    ) -> f64 {
        let mut plus = store.clone();
        plus.tensor_mut(idx.0).values[idx.1] += h;
        let mut minus = store.clone();
        minus.tensor_mut(idx.0).values[idx.1] -= h;
        (eval(&plus) - eval(&minus)) / (2.0 * h)
    }

    fn assert_close(analytic: f64, numeric: f64, what: &str) {
        let scale = analytic.abs().max(numeric.abs()).max(1e-4);
        assert!(
            (analytic - numeric).abs() / scale < 1e-4,
            "{what}: analytic {analytic} vs numeric {numeric}"
        );
    }

    #[test]
    fn detector_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = NetConfig {
            input_height: 6,
            input_width: 5,
            channels: vec![3, 2],
            feature_dim: 3,
            policy_hidden: vec![4],
        };
        let nets = Networks::init(cfg, &mut rng).unwrap();
        let images: Vec<Image> = (0..4).map(|_| random_image(&mut rng, 6, 5)).collect();
        let labels = [Label::Real, Label::Fake, Label::Fake, Label::Real];
        let items: Vec<(&Image, Label)> = images.iter().zip(labels).collect();
        let g = backward_detector(&nets, &items).unwrap();
        for (ti, t) in nets.alpha.tensors().iter().enumerate() {
            for k in 0..t.len() {
                let num = numeric_grad(&nets.alpha, (ti, k), 1e-5, |a| {
                    let n = Networks {
                        alpha: a.clone(),
                        ..nets.clone()
                    };
                    detector_loss(&n, &items).unwrap()
                });
                assert_close(g.alpha.tensor(ti).values[k], num, &t.name);
            }
        }
        for (ti, t) in nets.beta.tensors().iter().enumerate() {
            for k in 0..t.len() {
                let num = numeric_grad(&nets.beta, (ti, k), 1e-5, |b| {
                    let n = Networks {
                        beta: b.clone(),
                        ..nets.clone()
                    };
                    detector_loss(&n, &items).unwrap()
                });
                assert_close(g.beta.tensor(ti).values[k], num, &t.name);
            }
        }
    }

    #[test]
    fn duplicating_the_batch_keeps_the_mean_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nets = Networks::init(tiny_config(), &mut rng).unwrap();
        let images: Vec<Image> = (0..3).map(|_| random_image(&mut rng, 4, 4)).collect();
        let items: Vec<(&Image, Label)> = images
            .iter()
            .zip([Label::Real, Label::Fake, Label::Real])
            .collect();
        let doubled: Vec<(&Image, Label)> = items.iter().chain(items.iter()).cloned().collect();
        let a = backward_detector(&nets, &items).unwrap();
        let b = backward_detector(&nets, &doubled).unwrap();
        for (x, y) in a.alpha.values().zip(b.alpha.values()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((a.loss - b.loss).abs() < 1e-14);
    }

    #[test]
    fn saturated_correct_predictions_give_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut nets = Networks::init(tiny_config(), &mut rng).unwrap();
        nets.beta.tensor_mut(0).values = vec![0.0, 0.0];
        nets.beta.tensor_mut(1).values = vec![40.0];
        let img = random_image(&mut rng, 4, 4);
        let g = backward_detector(&nets, &[(&img, Label::Fake)]).unwrap();
        assert!(g.alpha.l2_norm() + g.beta.l2_norm() < 1e-6);
    }

    fn tiny_world() -> Vec<Vec<FaceFrame>> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..3)
            .map(|v| {
                (0..12)
                    .map(|i| FaceFrame {
                        image: random_image(&mut rng, 4, 4),
                        landmarks: ring_landmarks(2.0, 2.0, 1.2),
                        video_id: format!("v{v}").as_str().into(),
                        frame_index: i,
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let videos = tiny_world();
        let ctx = AugContext::new(
            videos.iter().flatten(),
            videos.iter().map(Vec::as_slice),
            AugParams {
                mask: MaskParams {
                    deform_magnitude: 8.0,
                    sigma_min: 0.3,
                    sigma_max: 0.8,
                    ..MaskParams::default()
                },
                ..AugParams::default()
            },
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nets = Networks::init(tiny_config(), &mut rng).unwrap();
        let reals: Vec<&FaceFrame> = vec![&videos[0][2], &videos[1][7], &videos[2][0]];
        let batch_seed = 17;
        let loss_at = |gamma: &ParamStore| {
            let n = Networks {
                gamma: gamma.clone(),
                ..nets.clone()
            };
            let sb = build_search_batch(
                &n,
                &reals,
                &ctx,
                OpSet::all(),
                &mut ChaCha8Rng::seed_from_u64(batch_seed),
            )
            .unwrap();
            backward_policy(&n, &sb).unwrap().loss
        };
        let sb = build_search_batch(
            &nets,
            &reals,
            &ctx,
            OpSet::all(),
            &mut ChaCha8Rng::seed_from_u64(batch_seed),
        )
        .unwrap();
        let g = backward_policy(&nets, &sb).unwrap();
        assert!(g.gamma.l2_norm() > 0.0);
        for (ti, t) in nets.gamma.tensors().iter().enumerate() {
            for k in 0..t.len() {
                let num = numeric_grad(&nets.gamma, (ti, k), 1e-5, &loss_at);
                assert_close(g.gamma.tensor(ti).values[k], num, &t.name);
            }
        }
    }

    #[test]
    fn one_hot_policy_collapses_to_hard_forward() {
        let videos = tiny_world();
        let ctx = AugContext::new(
            videos.iter().flatten(),
            videos.iter().map(Vec::as_slice),
            AugParams::default(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut nets = Networks::init(tiny_config(), &mut rng).unwrap();
        let last = nets.gamma.tensors().len() - 2;
        for op in AugOp::ALL {
            nets.gamma.tensor_mut(last).values.fill(0.0);
            let mut bias = [0.0; 3];
            bias[op.index()] = 1000.0;
            nets.gamma.tensor_mut(last + 1).values = bias.to_vec();

            let x = &videos[1][5];
            let draws = OperatorDraws::sample(&mut rng);
            let (pred, cache) =
                soft_mixture_with_draws(&nets, x, &ctx, OpSet::all(), draws).unwrap();
            assert_eq!(cache.policy(), AugPolicy::one_hot(op).probs());
            let hard = nets.predict(&draws.realize(op, x, &ctx).unwrap()).unwrap();
            assert_eq!(pred.logit.to_bits(), hard.logit.to_bits());
        }
    }

    #[test]
    fn uniform_mixture_of_identical_outputs_is_plain_forward() {
        let videos = tiny_world();
        let params = AugParams {
            mask: MaskParams {
                intensity_levels: vec![0.0],
                use_intensity: true,
                ..MaskParams::default()
            },
            ..AugParams::default()
        };
        let ctx = AugContext::new(
            videos.iter().flatten(),
            videos.iter().map(Vec::as_slice),
            params,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut nets = Networks::init(tiny_config(), &mut rng).unwrap();
        for t in nets.gamma.tensors_mut() {
            t.values.fill(0.0);
        }
        let x = &videos[2][3];
        let draws = OperatorDraws::sample(&mut rng);
        for op in AugOp::ALL {
            assert_eq!(draws.realize(op, x, &ctx).unwrap(), x.image);
        }
        let (pred, cache) = soft_mixture_with_draws(&nets, x, &ctx, OpSet::all(), draws).unwrap();
        assert_eq!(cache.policy(), [1.0 / 3.0; 3]);
        let plain = nets.predict(&x.image).unwrap();
        assert!((pred.logit - plain.logit).abs() < 1e-12);
    }

    #[test]
    fn policy_backward_requires_caches() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let nets = Networks::init(tiny_config(), &mut rng).unwrap();
        assert!(matches!(
            backward_policy(&nets, &SearchBatch::default()),
            Err(CdfaError::Usage(_))
        ));
    }
}
