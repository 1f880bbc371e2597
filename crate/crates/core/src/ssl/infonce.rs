use super::{FeatureQueue, SslError};

/// InfoNCE value with gradients with respect to the unnormalized query and key.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceOutput {
    pub loss: f64,
    pub grad_query: Vec<f64>,
    pub grad_key: Vec<f64>,
    /// Cosine similarity of the positive pair.
    pub positive: f64,
}

pub(crate) fn unit(v: &[f64]) -> Result<(Vec<f64>, f64), SslError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(SslError::NonFinite("feature has zero or non-finite norm".into()));
    }
    Ok((v.iter().map(|x| x / norm).collect(), norm))
}

/// Gradient through `v -> v / |v|`: `(g - (g . u) u) / |v|`.
pub(crate) fn through_normalization(g: &[f64], u: &[f64], norm: f64) -> Vec<f64> {
    let gu: f64 = g.iter().zip(u).map(|(a, b)| a * b).sum();
    g.iter().zip(u).map(|(gi, ui)| (gi - gu * ui) / norm).collect()
}

/// `-log(exp(s+/t) / (exp(s+/t) + sum_i exp(s_i/t)))` with `s+ = q.k` and
/// `s_i = q.n_i` on unit-normalized features.
pub fn info_nce(query: &[f64], key: &[f64], queue: &FeatureQueue, temperature: f64) -> Result<InfoNceOutput, SslError> {
    if queue.is_empty() {
        return Err(SslError::InvalidConfig("InfoNCE needs at least one negative".into()));
    }
    if !(temperature > 0.0) {
        return Err(SslError::InvalidConfig(format!("temperature must be positive, got {temperature}")));
    }
    if query.len() != queue.dim() || key.len() != queue.dim() {
        return Err(SslError::Dimension { expected: queue.dim(), got: query.len() });
    }
    let (q, qn) = unit(query)?;
    let (k, kn) = unit(key)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let positive = dot(&q, &k);
    let mut logits = Vec::with_capacity(queue.len() + 1);
    logits.push(positive / temperature);
    logits.extend(queue.iter().map(|n| dot(&q, n) / temperature));
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[0];

    // dL/dq_hat = ((p0 - 1) k + sum_i p_i n_i) / t ; dL/dk_hat = (p0 - 1) q / t
    let p0 = exps[0] / sum;
    let mut gq: Vec<f64> = k.iter().map(|kv| (p0 - 1.0) * kv).collect();
    for (n, e) in queue.iter().zip(&exps[1..]) {
        let p = e / sum;
        for (g, nv) in gq.iter_mut().zip(n) {
            *g += p * nv;
        }
    }
    gq.iter_mut().for_each(|g| *g /= temperature);
    let gk: Vec<f64> = q.iter().map(|qv| (p0 - 1.0) * qv / temperature).collect();

    Ok(InfoNceOutput {
        loss,
        grad_query: through_normalization(&gq, &q, qn),
        grad_key: through_normalization(&gk, &k, kn),
        positive,
    })
}
