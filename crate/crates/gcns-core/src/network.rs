//! The full network model: declarative architecture strings, parameter construction,
//! and the full forward/backward pass over the coarsening hierarchy
//! (graph conv -> batch norm -> Softplus, masked max pooling, flatten,
//! dropout, FC layers, softmax head).

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::cheb::{cheb_basis, cheb_conv_backward, cheb_conv_forward, ChebBasis, ChebConvParams, GraphOperator};
use crate::coarsen::CoarseningPlan;
use crate::error::{Error, Result};
use crate::params::{glorot_fill, Gradients, ParameterSet, Tensor};
use crate::util::seeded_rng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerToken {
    Conv,
    Pool,
    Fc,
    Softmax,
}

/// Expand an architecture string like `(C-P)x6-S` or `C-C-P-F-S` into a flat
/// layer list. Groups repeat with `x<n>`; the sequence must end with a single
/// terminal `S`.
pub fn parse_arch(text: &str) -> Result<Vec<LayerToken>> {
    let bytes: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut pos = 0usize;
    let tokens = parse_seq(&bytes, &mut pos)?;
    if pos != bytes.len() {
        return Err(Error::ArchParse(format!(
            "unexpected '{}' at position {pos}",
            bytes[pos]
        )));
    }
    if tokens.is_empty() {
        return Err(Error::ArchParse("empty architecture".into()));
    }
    if tokens.last() != Some(&LayerToken::Softmax) {
        return Err(Error::ArchParse("missing terminal S".into()));
    }
    if tokens[..tokens.len() - 1].contains(&LayerToken::Softmax) {
        return Err(Error::ArchParse("S must be the final layer".into()));
    }
    Ok(tokens)
}

fn parse_seq(chars: &[char], pos: &mut usize) -> Result<Vec<LayerToken>> {
    let mut out = Vec::new();
    loop {
        out.extend(parse_item(chars, pos)?);
        if *pos < chars.len() && chars[*pos] == '-' {
            *pos += 1;
            continue;
        }
        return Ok(out);
    }
}

fn parse_item(chars: &[char], pos: &mut usize) -> Result<Vec<LayerToken>> {
    let Some(&c) = chars.get(*pos) else {
        return Err(Error::ArchParse("unexpected end of input".into()));
    };
    if c == '(' {
        *pos += 1;
        let inner = parse_seq(chars, pos)?;
        if chars.get(*pos) != Some(&')') {
            return Err(Error::ArchParse("unclosed '('".into()));
        }
        *pos += 1;
        let reps = if matches!(chars.get(*pos), Some('x') | Some('X')) {
            *pos += 1;
            let start = *pos;
            while *pos < chars.len() && chars[*pos].is_ascii_digit() {
                *pos += 1;
            }
            let digits: String = chars[start..*pos].iter().collect();
            digits
                .parse::<usize>()
                .map_err(|_| Error::ArchParse("expected repetition count after x".into()))?
        } else {
            1
        };
        if reps == 0 {
            return Err(Error::ArchParse("repetition count must be >= 1".into()));
        }
        let mut out = Vec::with_capacity(inner.len() * reps);
        for _ in 0..reps {
            out.extend(inner.iter().copied());
        }
        return Ok(out);
    }
    let token = match c {
        'C' => LayerToken::Conv,
        'P' => LayerToken::Pool,
        'F' => LayerToken::Fc,
        'S' => LayerToken::Softmax,
        other => return Err(Error::ArchParse(format!("unknown token '{other}'"))),
    };
    *pos += 1;
    if matches!(chars.get(*pos), Some('x') | Some('X')) && {
        // 'x' directly after a bare token is a repetition without a group.
        chars.get(*pos + 1).map(|c| c.is_ascii_digit()).unwrap_or(false)
    } {
        return Err(Error::ArchParse(
            "repetition requires a parenthesized group".into(),
        ));
    }
    Ok(vec![token])
}

/// Declarative model description, paired with a CoarseningPlan at build time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch_text: String,
    pub layers: Vec<LayerToken>,
    pub filters: Vec<usize>,
    pub order: usize,
    pub fc_sizes: Vec<usize>,
    pub n_classes: usize,
    pub dropout_rate: f64,
}

impl ModelSpec {
    pub fn new(
        arch_text: &str,
        filters: Vec<usize>,
        order: usize,
        fc_sizes: Vec<usize>,
        n_classes: usize,
        dropout_rate: f64,
    ) -> Result<Self> {
        let layers = parse_arch(arch_text)?;
        let n_conv = layers.iter().filter(|t| **t == LayerToken::Conv).count();
        let n_fc = layers.iter().filter(|t| **t == LayerToken::Fc).count();
        if n_conv != filters.len() {
            return Err(Error::InvalidArgument(format!(
                "{n_conv} conv layers but {} filter counts",
                filters.len()
            )));
        }
        if n_fc != fc_sizes.len() {
            return Err(Error::InvalidArgument(format!(
                "{n_fc} FC layers but {} sizes",
                fc_sizes.len()
            )));
        }
        if order < 1 {
            return Err(Error::InvalidArgument("order must be >= 1".into()));
        }
        if n_classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {dropout_rate} not in [0,1)"
            )));
        }
        // FC tokens may only appear after every conv/pool layer.
        let last_graph = layers
            .iter()
            .rposition(|t| matches!(t, LayerToken::Conv | LayerToken::Pool));
        let first_fc = layers.iter().position(|t| *t == LayerToken::Fc);
        if let (Some(g), Some(f)) = (last_graph, first_fc) {
            if f < g {
                return Err(Error::InvalidArgument(
                    "FC layers must follow all conv/pool layers".into(),
                ));
            }
        }
        Ok(ModelSpec {
            arch_text: arch_text.to_string(),
            layers,
            filters,
            order,
            fc_sizes,
            n_classes,
            dropout_rate,
        })
    }

    pub fn n_pools(&self) -> usize {
        self.layers.iter().filter(|t| **t == LayerToken::Pool).count()
    }

    pub fn n_convs(&self) -> usize {
        self.layers.iter().filter(|t| **t == LayerToken::Conv).count()
    }
}

// Graph-stage schedule derived from spec + plan: per conv, which level it
// runs at and its fan-in/out; flatten dimensions for the dense tail.
#[derive(Debug, Clone)]
struct Schedule {
    convs: Vec<(usize, usize, usize)>, // (level, f_in, f_out)
    flat_level: usize,
    flat_features: usize,
    flat_dim: usize,
}

fn schedule(spec: &ModelSpec, plan: &CoarseningPlan) -> Result<Schedule> {
    if spec.n_pools() > plan.levels {
        return Err(Error::InvalidArgument(format!(
            "architecture has {} pool layers but the plan provides {} levels",
            spec.n_pools(),
            plan.levels
        )));
    }
    let mut level = 0usize;
    let mut features = 1usize;
    let mut conv_ix = 0usize;
    let mut convs = Vec::new();
    for token in &spec.layers {
        match token {
            LayerToken::Conv => {
                let f_out = spec.filters[conv_ix];
                convs.push((level, features, f_out));
                features = f_out;
                conv_ix += 1;
            }
            LayerToken::Pool => level += 1,
            LayerToken::Fc | LayerToken::Softmax => {}
        }
    }
    let flat_dim = plan.padded_size(level) * features;
    Ok(Schedule {
        convs,
        flat_level: level,
        flat_features: features,
        flat_dim,
    })
}

fn build_tensors(spec: &ModelSpec, plan: &CoarseningPlan, mut init: Option<&mut impl Rng>) -> Result<Vec<Tensor>> {
    let sched = schedule(spec, plan)?;
    let mut tensors = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, fill: f64, trainable: bool, regularized: bool| {
        let len: usize = shape.iter().product();
        tensors.push(Tensor {
            name,
            shape,
            data: vec![fill; len],
            trainable,
            regularized,
        });
    };
    for (i, &(level, f_in, f_out)) in sched.convs.iter().enumerate() {
        let np = plan.padded_size(level);
        push(format!("conv{i}.theta"), vec![f_in, f_out, spec.order], 0.0, true, true);
        push(format!("conv{i}.bias"), vec![np, f_out], 0.0, true, true);
        push(format!("bn{i}.gamma"), vec![f_out], 1.0, true, false);
        push(format!("bn{i}.beta"), vec![f_out], 0.0, true, false);
        push(format!("bn{i}.running_mean"), vec![f_out], 0.0, false, false);
        push(format!("bn{i}.running_var"), vec![f_out], 1.0, false, false);
    }
    let mut in_dim = sched.flat_dim;
    for (i, &size) in spec.fc_sizes.iter().enumerate() {
        push(format!("fc{i}.weight"), vec![in_dim, size], 0.0, true, true);
        push(format!("fc{i}.bias"), vec![size], 0.0, true, true);
        in_dim = size;
    }
    push("head.weight".into(), vec![in_dim, spec.n_classes], 0.0, true, true);
    push("head.bias".into(), vec![spec.n_classes], 0.0, true, true);

    if let Some(rng) = init.as_deref_mut() {
        for t in tensors.iter_mut() {
            if t.name.ends_with(".theta") {
                let (f_in, f_out) = (t.shape[0], t.shape[1]);
                glorot_fill(&mut t.data, f_in * spec.order, f_out * spec.order, rng);
            } else if t.name.ends_with(".weight") {
                glorot_fill(&mut t.data, t.shape[0], t.shape[1], rng);
            }
        }
    }
    Ok(tensors)
}

/// Glorot-uniform theta and FC weights (half-width sqrt(6/(fan_in+fan_out)),
/// fan counted as F*K for conv coefficients), zero biases, unit batch-norm
/// scale. Deterministic per seed.
pub fn init_params(spec: &ModelSpec, plan: &CoarseningPlan, seed: u64) -> Result<ParameterSet> {
    let mut rng = seeded_rng(seed, 0x1217);
    let tensors = build_tensors(spec, plan, Some(&mut rng))?;
    Ok(ParameterSet::new(tensors))
}

/// Total trainable parameter count for a spec over a plan.
pub fn count_params(spec: &ModelSpec, plan: &CoarseningPlan) -> Result<usize> {
    let tensors = build_tensors(spec, plan, None::<&mut rand_chacha::ChaCha8Rng>)?;
    Ok(tensors
        .iter()
        .filter(|t| t.trainable)
        .map(|t| t.data.len())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

// Per-conv-stage cache kept from the forward pass.
struct ConvCache {
    level: usize,
    basis: Vec<ChebBasis>,
    bn_var: Vec<f64>,
    x_hat: Vec<Array2<f64>>,
    sp_in: Vec<Array2<f64>>,
}

struct FcCache {
    input: Array2<f64>,
    pre_act: Array2<f64>,
}

/// Everything backward needs from one train-mode forward pass.
pub struct ForwardCache {
    mode: Mode,
    batch_size: usize,
    conv: Vec<ConvCache>,
    // Per pool stage, per item: winning child (0/1) or 2 when both invalid.
    pool_choices: Vec<Vec<Array2<u8>>>,
    dropout_scale: Option<Array2<f64>>,
    fc: Vec<FcCache>,
    head_input: Array2<f64>,
    pub probs: Array2<f64>,
}

pub struct ForwardPass {
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    pub cache: ForwardCache,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.outer_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

fn tensor_ix(params: &ParameterSet, name: &str) -> Result<usize> {
    params
        .index_of(name)
        .ok_or_else(|| Error::ShapeMismatch(format!("missing tensor '{name}'")))
}

/// Full forward pass over a batch of original-N samples (rows). Train mode
/// needs B >= 2 for batch statistics and updates the running estimates;
/// eval mode is deterministic. Dropout is applied only at the flattened
/// features feeding the dense tail, seeded explicitly for reproducibility.
pub fn forward(
    params: &mut ParameterSet,
    spec: &ModelSpec,
    plan: &CoarseningPlan,
    batch: &Array2<f64>,
    mode: Mode,
    dropout_seed: u64,
) -> Result<ForwardPass> {
    let sched = schedule(spec, plan)?;
    let b = batch.nrows();
    if batch.ncols() != plan.perm.len() {
        return Err(Error::ShapeMismatch(format!(
            "batch has {} channels, graph has {}",
            batch.ncols(),
            plan.perm.len()
        )));
    }
    if mode == Mode::Train && b < 2 {
        return Err(Error::InvalidArgument(
            "train mode needs a batch of at least 2 for batch-norm statistics".into(),
        ));
    }

    let ops: Vec<GraphOperator> = plan
        .laplacian_sets
        .iter()
        .map(|ls| GraphOperator::from_matrix(&ls.scaled))
        .collect();

    // Scatter into the padded finest layout, one N_pad x 1 matrix per item.
    let n0 = plan.padded_size(0);
    let mut acts: Vec<Array2<f64>> = (0..b)
        .map(|i| {
            let mut x = Array2::<f64>::zeros((n0, 1));
            for (v, &p) in plan.perm.iter().enumerate() {
                x[[p, 0]] = batch[[i, v]];
            }
            x
        })
        .collect();

    let mut level = 0usize;
    let mut conv_ix = 0usize;
    let mut conv_caches = Vec::new();
    let mut pool_choices = Vec::new();
    for token in &spec.layers {
        match token {
            LayerToken::Conv => {
                let (lvl, f_in, f_out) = sched.convs[conv_ix];
                debug_assert_eq!(lvl, level);
                let np = plan.padded_size(level);
                let theta_t = params.by_name(&format!("conv{conv_ix}.theta")).unwrap();
                let theta =
                    Array3::from_shape_vec((f_in, f_out, spec.order), theta_t.data.clone())
                        .expect("theta shape");
                let bias_t = params.by_name(&format!("conv{conv_ix}.bias")).unwrap();
                let bias = Array2::from_shape_vec((np, f_out), bias_t.data.clone())
                    .expect("bias shape");
                let conv_params = ChebConvParams {
                    order: spec.order,
                    theta,
                    bias,
                };
                let mut bases = Vec::with_capacity(b);
                let mut outs = Vec::with_capacity(b);
                for x in &acts {
                    let basis = cheb_basis(&ops[level], x, spec.order)?;
                    outs.push(cheb_conv_forward(&conv_params, &basis)?);
                    bases.push(basis);
                }

                // Batch norm over valid positions only, then Softplus.
                let mask = &plan.valid_mask[level];
                let n_valid = mask.iter().filter(|m| **m).count();
                let gamma = params.by_name(&format!("bn{conv_ix}.gamma")).unwrap().data.clone();
                let beta = params.by_name(&format!("bn{conv_ix}.beta")).unwrap().data.clone();
                let (mean, var) = match mode {
                    Mode::Train => {
                        let count = (b * n_valid) as f64;
                        let mut mean = vec![0.0; f_out];
                        let mut var = vec![0.0; f_out];
                        for out in &outs {
                            for (node, &valid) in mask.iter().enumerate() {
                                if valid {
                                    for f in 0..f_out {
                                        mean[f] += out[[node, f]];
                                    }
                                }
                            }
                        }
                        for m in mean.iter_mut() {
                            *m /= count;
                        }
                        for out in &outs {
                            for (node, &valid) in mask.iter().enumerate() {
                                if valid {
                                    for f in 0..f_out {
                                        let d = out[[node, f]] - mean[f];
                                        var[f] += d * d;
                                    }
                                }
                            }
                        }
                        for v in var.iter_mut() {
                            *v /= count;
                        }
                        let rm_ix = tensor_ix(params, &format!("bn{conv_ix}.running_mean"))?;
                        let rv_ix = tensor_ix(params, &format!("bn{conv_ix}.running_var"))?;
                        for f in 0..f_out {
                            let rm = &mut params.tensors[rm_ix].data[f];
                            *rm = BN_MOMENTUM * *rm + (1.0 - BN_MOMENTUM) * mean[f];
                            let rv = &mut params.tensors[rv_ix].data[f];
                            *rv = BN_MOMENTUM * *rv + (1.0 - BN_MOMENTUM) * var[f];
                        }
                        (mean, var)
                    }
                    Mode::Eval => (
                        params.by_name(&format!("bn{conv_ix}.running_mean")).unwrap().data.clone(),
                        params.by_name(&format!("bn{conv_ix}.running_var")).unwrap().data.clone(),
                    ),
                };
                let inv_sd: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut x_hats = Vec::with_capacity(b);
                let mut sp_ins = Vec::with_capacity(b);
                for out in outs {
                    let mut x_hat = out;
                    let mut sp_in = Array2::<f64>::zeros(x_hat.dim());
                    for node in 0..np {
                        for f in 0..f_out {
                            let xh = (x_hat[[node, f]] - mean[f]) * inv_sd[f];
                            x_hat[[node, f]] = xh;
                            sp_in[[node, f]] = gamma[f] * xh + beta[f];
                        }
                    }
                    x_hats.push(x_hat);
                    sp_ins.push(sp_in);
                }
                acts = sp_ins.iter().map(|z| z.mapv(softplus)).collect();
                conv_caches.push(ConvCache {
                    level,
                    basis: bases,
                    bn_var: var,
                    x_hat: x_hats,
                    sp_in: sp_ins,
                });
                conv_ix += 1;
            }
            LayerToken::Pool => {
                let mask = &plan.valid_mask[level];
                let mut choices = Vec::with_capacity(b);
                let mut pooled = Vec::with_capacity(b);
                for x in &acts {
                    let (n, f) = x.dim();
                    let half = n / 2;
                    let mut out = Array2::<f64>::zeros((half, f));
                    let mut choice = Array2::<u8>::zeros((half, f));
                    for i in 0..half {
                        let (a, c) = (2 * i, 2 * i + 1);
                        for j in 0..f {
                            let (v, w) = match (mask[a], mask[c]) {
                                // Ties go to the first child.
                                (true, true) => {
                                    if x[[a, j]] >= x[[c, j]] {
                                        (x[[a, j]], 0)
                                    } else {
                                        (x[[c, j]], 1)
                                    }
                                }
                                (true, false) => (x[[a, j]], 0),
                                (false, true) => (x[[c, j]], 1),
                                (false, false) => (0.0, 2),
                            };
                            out[[i, j]] = v;
                            choice[[i, j]] = w;
                        }
                    }
                    pooled.push(out);
                    choices.push(choice);
                }
                acts = pooled;
                pool_choices.push(choices);
                level += 1;
            }
            LayerToken::Fc | LayerToken::Softmax => {}
        }
    }

    // Flatten node-major with fake positions zero-filled (keeps the head
    // weight shape aligned with the padded level size).
    let mask = &plan.valid_mask[sched.flat_level];
    let np = plan.padded_size(sched.flat_level);
    let f_last = sched.flat_features;
    let mut flat = Array2::<f64>::zeros((b, sched.flat_dim));
    for (i, x) in acts.iter().enumerate() {
        for node in 0..np {
            if mask[node] {
                for f in 0..f_last {
                    flat[[i, node * f_last + f]] = x[[node, f]];
                }
            }
        }
    }

    // Inverted dropout on the flattened features, train mode only.
    let (mut dense, dropout_scale) = if mode == Mode::Train && spec.dropout_rate > 0.0 {
        let keep = 1.0 - spec.dropout_rate;
        let mut rng = seeded_rng(dropout_seed, 0xd0);
        let mut scale = Array2::<f64>::zeros((b, sched.flat_dim));
        for v in scale.iter_mut() {
            *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
        }
        (&flat * &scale, Some(scale))
    } else {
        (flat.clone(), None)
    };

    // Dense tail: FC layers with Softplus, then the softmax head.
    let mut fc_caches = Vec::new();
    for i in 0..spec.fc_sizes.len() {
        let w_t = params.by_name(&format!("fc{i}.weight")).unwrap();
        let (in_dim, out_dim) = (w_t.shape[0], w_t.shape[1]);
        let w = Array2::from_shape_vec((in_dim, out_dim), w_t.data.clone()).unwrap();
        let bias = params.by_name(&format!("fc{i}.bias")).unwrap().data.clone();
        let mut pre = dense.dot(&w);
        for mut row in pre.outer_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += bias[j];
            }
        }
        fc_caches.push(FcCache {
            input: dense,
            pre_act: pre.clone(),
        });
        dense = pre.mapv(softplus);
    }
    let w_t = params.by_name("head.weight").unwrap();
    let w = Array2::from_shape_vec((w_t.shape[0], w_t.shape[1]), w_t.data.clone()).unwrap();
    let bias = params.by_name("head.bias").unwrap().data.clone();
    let mut logits = dense.dot(&w);
    for mut row in logits.outer_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v += bias[j];
        }
    }
    let probs = softmax_rows(&logits);

    Ok(ForwardPass {
        logits,
        probs: probs.clone(),
        cache: ForwardCache {
            mode,
            batch_size: b,
            conv: conv_caches,
            pool_choices,
            dropout_scale,
            fc: fc_caches,
            head_input: dense,
            probs,
        },
    })
}

/// Exact gradients of the mean cross-entropy plus the L2 penalty with
/// respect to every trainable tensor. Softmax and cross-entropy are fused
/// as (prob - onehot)/B; pooling routes gradient to the winning child.
pub fn backward(
    params: &ParameterSet,
    spec: &ModelSpec,
    plan: &CoarseningPlan,
    cache: &ForwardCache,
    labels: &[usize],
    l2_lambda: f64,
) -> Result<Gradients> {
    if cache.mode != Mode::Train {
        return Err(Error::InvalidArgument(
            "backward requires a train-mode forward cache".into(),
        ));
    }
    let b = cache.batch_size;
    if labels.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for batch of {b}",
            labels.len()
        )));
    }
    let sched = schedule(spec, plan)?;
    let mut grads = Gradients::zeros_like(params);

    // Head: fused softmax + cross-entropy.
    let mut dlogits = cache.probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        if label >= spec.n_classes {
            return Err(Error::LabelOutOfRange {
                sample: i,
                label,
                n_classes: spec.n_classes,
            });
        }
        dlogits[[i, label]] -= 1.0;
    }
    dlogits.mapv_inplace(|v| v / b as f64);

    let head_w_ix = tensor_ix(params, "head.weight")?;
    let head_b_ix = tensor_ix(params, "head.bias")?;
    let head_w = &params.tensors[head_w_ix];
    let (in_dim, o) = (head_w.shape[0], head_w.shape[1]);
    let w = Array2::from_shape_vec((in_dim, o), head_w.data.clone()).unwrap();
    let dw = cache.head_input.t().dot(&dlogits);
    grads.by_tensor[head_w_ix].copy_from_slice(dw.as_slice().unwrap());
    for j in 0..o {
        grads.by_tensor[head_b_ix][j] = dlogits.column(j).sum();
    }
    let mut ddense = dlogits.dot(&w.t());

    // FC layers in reverse, Softplus derivative = sigmoid(pre-activation).
    for i in (0..spec.fc_sizes.len()).rev() {
        let fcc = &cache.fc[i];
        let dpre = &ddense * &fcc.pre_act.mapv(sigmoid);
        let w_ix = tensor_ix(params, &format!("fc{i}.weight"))?;
        let b_ix = tensor_ix(params, &format!("fc{i}.bias"))?;
        let w_t = &params.tensors[w_ix];
        let w = Array2::from_shape_vec((w_t.shape[0], w_t.shape[1]), w_t.data.clone()).unwrap();
        let dw = fcc.input.t().dot(&dpre);
        grads.by_tensor[w_ix].copy_from_slice(dw.as_slice().unwrap());
        for j in 0..w_t.shape[1] {
            grads.by_tensor[b_ix][j] = dpre.column(j).sum();
        }
        ddense = dpre.dot(&w.t());
    }

    // Dropout backward reuses the forward scale mask.
    if let Some(scale) = &cache.dropout_scale {
        ddense = &ddense * scale;
    }

    // Unflatten to per-item padded matrices; fake rows get zero gradient.
    let mask_flat = &plan.valid_mask[sched.flat_level];
    let np = plan.padded_size(sched.flat_level);
    let f_last = sched.flat_features;
    let mut dacts: Vec<Array2<f64>> = (0..b)
        .map(|i| {
            let mut d = Array2::<f64>::zeros((np, f_last));
            for node in 0..np {
                if mask_flat[node] {
                    for f in 0..f_last {
                        d[[node, f]] = ddense[[i, node * f_last + f]];
                    }
                }
            }
            d
        })
        .collect();

    let ops: Vec<GraphOperator> = plan
        .laplacian_sets
        .iter()
        .map(|ls| GraphOperator::from_matrix(&ls.scaled))
        .collect();

    // Graph stages in reverse.
    let mut conv_ix = spec.n_convs();
    let mut pool_ix = cache.pool_choices.len();
    let mut level = sched.flat_level;
    for token in spec.layers.iter().rev() {
        match token {
            LayerToken::Pool => {
                pool_ix -= 1;
                level -= 1;
                let choices = &cache.pool_choices[pool_ix];
                let n_fine = plan.padded_size(level);
                dacts = dacts
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        let (half, f) = d.dim();
                        let mut out = Array2::<f64>::zeros((n_fine, f));
                        for r in 0..half {
                            for j in 0..f {
                                match choices[i][[r, j]] {
                                    0 => out[[2 * r, j]] = d[[r, j]],
                                    1 => out[[2 * r + 1, j]] = d[[r, j]],
                                    _ => {}
                                }
                            }
                        }
                        out
                    })
                    .collect();
            }
            LayerToken::Conv => {
                conv_ix -= 1;
                let cc = &cache.conv[conv_ix];
                debug_assert_eq!(cc.level, level);
                let (_, f_in, f_out) = sched.convs[conv_ix];
                let np = plan.padded_size(level);
                let mask = &plan.valid_mask[level];
                let n_valid = mask.iter().filter(|m| **m).count();
                let count = (b * n_valid) as f64;
                let gamma = &params.tensors[tensor_ix(params, &format!("bn{conv_ix}.gamma"))?].data;

                // Softplus backward.
                let dsp: Vec<Array2<f64>> = dacts
                    .iter()
                    .zip(&cc.sp_in)
                    .map(|(d, z)| d * &z.mapv(sigmoid))
                    .collect();

                // Batch-norm backward with mask-aware statistics. Upstream
                // gradient at fake positions is structurally zero (they are
                // masked at pooling and zero-filled at flatten).
                let inv_sd: Vec<f64> =
                    cc.bn_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut sum_dy = vec![0.0; f_out];
                let mut sum_dy_xhat = vec![0.0; f_out];
                for (i, dy) in dsp.iter().enumerate() {
                    for (node, &valid) in mask.iter().enumerate() {
                        if valid {
                            for f in 0..f_out {
                                sum_dy[f] += dy[[node, f]];
                                sum_dy_xhat[f] += dy[[node, f]] * cc.x_hat[i][[node, f]];
                            }
                        }
                    }
                }
                let g_ix = tensor_ix(params, &format!("bn{conv_ix}.gamma"))?;
                let be_ix = tensor_ix(params, &format!("bn{conv_ix}.beta"))?;
                grads.by_tensor[g_ix].copy_from_slice(&sum_dy_xhat);
                grads.by_tensor[be_ix].copy_from_slice(&sum_dy);

                let dconv: Vec<Array2<f64>> = dsp
                    .iter()
                    .enumerate()
                    .map(|(i, dy)| {
                        let mut d = Array2::<f64>::zeros((np, f_out));
                        for (node, &valid) in mask.iter().enumerate() {
                            for f in 0..f_out {
                                let scale = gamma[f] * inv_sd[f];
                                d[[node, f]] = if valid {
                                    scale
                                        * (dy[[node, f]]
                                            - sum_dy[f] / count
                                            - cc.x_hat[i][[node, f]] * sum_dy_xhat[f] / count)
                                } else {
                                    scale * dy[[node, f]]
                                };
                            }
                        }
                        d
                    })
                    .collect();

                // Conv backward per item, accumulated in ascending batch
                // index order for bit-reproducibility.
                let theta_ix = tensor_ix(params, &format!("conv{conv_ix}.theta"))?;
                let bias_ix = tensor_ix(params, &format!("conv{conv_ix}.bias"))?;
                let theta_t = &params.tensors[theta_ix];
                let theta = Array3::from_shape_vec(
                    (f_in, f_out, spec.order),
                    theta_t.data.clone(),
                )
                .unwrap();
                let conv_params = ChebConvParams {
                    order: spec.order,
                    theta,
                    bias: Array2::zeros((np, f_out)),
                };
                let mut dx_items = Vec::with_capacity(b);
                for (i, dout) in dconv.iter().enumerate() {
                    let g = cheb_conv_backward(&conv_params, &cc.basis[i], &ops[level], dout)?;
                    for (slot, &v) in grads.by_tensor[theta_ix]
                        .iter_mut()
                        .zip(g.theta.as_slice().unwrap())
                    {
                        *slot += v;
                    }
                    for (slot, &v) in grads.by_tensor[bias_ix]
                        .iter_mut()
                        .zip(g.bias.as_slice().unwrap())
                    {
                        *slot += v;
                    }
                    dx_items.push(g.x);
                }
                dacts = dx_items;
            }
            LayerToken::Fc | LayerToken::Softmax => {}
        }
    }

    // L2 term: 2 * lambda * value on every regularized tensor.
    if l2_lambda > 0.0 {
        for (ix, tensor) in params.tensors.iter().enumerate() {
            if tensor.regularized {
                for (g, &v) in grads.by_tensor[ix].iter_mut().zip(&tensor.data) {
                    *g += 2.0 * l2_lambda * v;
                }
            }
        }
    }

    Ok(grads)
}
