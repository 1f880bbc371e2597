//! Layer kinds with explicit forward and backward passes over `(c, h, w)`
//! activations stored row-major.

use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Non-overlapping mean pooling; trailing rows/columns that do not fill a window are dropped.
    AvgPool { kh: usize, kw: usize },
    /// 3x3 convolution, stride 1, zero padding 1.
    Conv3x3 { in_channels: usize, out_channels: usize },
    /// Dense layer over the flattened input.
    Linear { inputs: usize, outputs: usize },
    Relu,
    Tanh,
    /// Reinterprets the flat activation with a new shape of equal size.
    Reshape { channels: usize, height: usize, width: usize },
    /// Nearest-neighbour resampling of every channel to `height x width`.
    Resize { height: usize, width: usize },
}

impl LayerSpec {
    pub fn output_shape(&self, input: Shape3) -> Result<Shape3, NnError> {
        let bad = |msg: String| Err(NnError::InvalidArchitecture(msg));
        match *self {
            LayerSpec::AvgPool { kh, kw } => {
                if kh == 0 || kw == 0 || input.height < kh || input.width < kw {
                    return bad(format!("pool {kh}x{kw} does not fit {input:?}"));
                }
                Ok(Shape3::new(input.channels, input.height / kh, input.width / kw))
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                if in_channels != input.channels || out_channels == 0 {
                    return bad(format!("conv expects {in_channels} channels, input is {input:?}"));
                }
                Ok(Shape3::new(out_channels, input.height, input.width))
            }
            LayerSpec::Linear { inputs, outputs } => {
                if inputs != input.len() || outputs == 0 {
                    return bad(format!("linear expects {inputs} inputs, got {}", input.len()));
                }
                Ok(Shape3::new(outputs, 1, 1))
            }
            LayerSpec::Relu | LayerSpec::Tanh => Ok(input),
            LayerSpec::Reshape {
                channels,
                height,
                width,
            } => {
                let out = Shape3::new(channels, height, width);
                if out.len() != input.len() {
                    return bad(format!("cannot reshape {input:?} to {out:?}"));
                }
                Ok(out)
            }
            LayerSpec::Resize { height, width } => {
                if height == 0 || width == 0 {
                    return bad("resize target must be positive".into());
                }
                Ok(Shape3::new(input.channels, height, width))
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => out_channels * in_channels * 9 + out_channels,
            LayerSpec::Linear { inputs, outputs } => outputs * inputs + outputs,
            _ => 0,
        }
    }

    /// Fan-in of the weights, or `None` for parameter-free layers.
    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerSpec::Conv3x3 { in_channels, .. } => Some(in_channels * 9),
            LayerSpec::Linear { inputs, .. } => Some(inputs),
            _ => None,
        }
    }

    /// Number of leading parameters that are weights (the rest are biases).
    pub fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => out_channels * in_channels * 9,
            LayerSpec::Linear { inputs, outputs } => outputs * inputs,
            _ => 0,
        }
    }
}

/// A layer placed inside a network: spec, shapes, and parameter span.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input: Shape3,
    pub output: Shape3,
    pub offset: usize,
}

impl Layer {
    pub fn params<'a>(&self, all: &'a [f64]) -> &'a [f64] {
        &all[self.offset..self.offset + self.spec.param_count()]
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        y.resize(self.output.len(), 0.0);
        let p = self.params(params);
        match self.spec {
            LayerSpec::AvgPool { kh, kw } => avgpool_forward(self.input, self.output, kh, kw, x, y),
            LayerSpec::Conv3x3 { .. } => conv_forward(self.input, self.output.channels, p, x, y),
            LayerSpec::Linear { inputs, outputs } => {
                let (w, b) = p.split_at(inputs * outputs);
                for o in 0..outputs {
                    y[o] = b[o] + dot(&w[o * inputs..(o + 1) * inputs], x);
                }
            }
            LayerSpec::Relu => {
                for (o, &v) in y.iter_mut().zip(x) {
                    *o = v.max(0.0);
                }
            }
            LayerSpec::Tanh => {
                for (o, &v) in y.iter_mut().zip(x) {
                    *o = v.tanh();
                }
            }
            LayerSpec::Reshape { .. } => y.copy_from_slice(x),
            LayerSpec::Resize { .. } => resize_forward(self.input, self.output, x, y),
        }
    }

    /// Accumulates parameter gradients into `grads` and, if `gx` is given,
    /// writes the gradient with respect to the layer input.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        y: &[f64],
        gy: &[f64],
        grads: &mut [f64],
        gx: Option<&mut Vec<f64>>,
    ) {
        let n = self.spec.param_count();
        let p = self.params(params);
        let g = &mut grads[self.offset..self.offset + n];
        let mut scratch = Vec::new();
        let (gx, want_gx) = match gx {
            Some(v) => (v, true),
            None => (&mut scratch, false),
        };
        gx.clear();
        gx.resize(self.input.len(), 0.0);
        match self.spec {
            LayerSpec::AvgPool { kh, kw } => {
                if want_gx {
                    avgpool_backward(self.input, self.output, kh, kw, gy, gx);
                }
            }
            LayerSpec::Conv3x3 { .. } => {
                conv_backward(self.input, self.output.channels, p, x, gy, g, want_gx.then_some(gx))
            }
            LayerSpec::Linear { inputs, outputs } => {
                let (gw, gb) = g.split_at_mut(inputs * outputs);
                for o in 0..outputs {
                    let go = gy[o];
                    gb[o] += go;
                    if go != 0.0 {
                        axpy(go, x, &mut gw[o * inputs..(o + 1) * inputs]);
                    }
                }
                if want_gx {
                    let w = &p[..inputs * outputs];
                    for o in 0..outputs {
                        let go = gy[o];
                        if go != 0.0 {
                            axpy(go, &w[o * inputs..(o + 1) * inputs], gx);
                        }
                    }
                }
            }
            LayerSpec::Relu => {
                if want_gx {
                    for ((d, &xi), &g) in gx.iter_mut().zip(x).zip(gy) {
                        *d = if xi > 0.0 { g } else { 0.0 };
                    }
                }
            }
            LayerSpec::Tanh => {
                if want_gx {
                    for ((d, &yi), &g) in gx.iter_mut().zip(y).zip(gy) {
                        *d = g * (1.0 - yi * yi);
                    }
                }
            }
            LayerSpec::Reshape { .. } => {
                if want_gx {
                    gx.copy_from_slice(gy);
                }
            }
            LayerSpec::Resize { .. } => {
                if want_gx {
                    resize_backward(self.input, self.output, gy, gx);
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators so the loop vectorizes
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn avgpool_forward(inp: Shape3, out: Shape3, kh: usize, kw: usize, x: &[f64], y: &mut [f64]) {
    let scale = 1.0 / (kh * kw) as f64;
    for c in 0..out.channels {
        for oy in 0..out.height {
            let row = &mut y[(c * out.height + oy) * out.width..][..out.width];
            for dy in 0..kh {
                let src = &x[(c * inp.height + oy * kh + dy) * inp.width..][..inp.width];
                for (ox, r) in row.iter_mut().enumerate() {
                    *r += src[ox * kw..ox * kw + kw].iter().sum::<f64>();
                }
            }
            row.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

fn avgpool_backward(inp: Shape3, out: Shape3, kh: usize, kw: usize, gy: &[f64], gx: &mut [f64]) {
    let scale = 1.0 / (kh * kw) as f64;
    for c in 0..out.channels {
        for oy in 0..out.height {
            let g = &gy[(c * out.height + oy) * out.width..][..out.width];
            for dy in 0..kh {
                let dst = &mut gx[(c * inp.height + oy * kh + dy) * inp.width..][..inp.width];
                for (ox, &gv) in g.iter().enumerate() {
                    dst[ox * kw..ox * kw + kw].iter_mut().for_each(|d| *d += gv * scale);
                }
            }
        }
    }
}

/// Valid output column range for kernel column `kx` with padding 1.
#[inline]
fn col_range(kx: usize, width: usize) -> (usize, usize) {
    let lo = 1usize.saturating_sub(kx);
    let hi = (width + 1 - kx).min(width);
    (lo, hi)
}

/// Unfolds `x` into `[cin * 9][h * w]` rows, one per kernel tap, zero-padded.
fn im2col(inp: Shape3, x: &[f64]) -> Vec<f64> {
    let (cin, h, w) = (inp.channels, inp.height, inp.width);
    let plane = h * w;
    let mut cols = vec![0.0; cin * 9 * plane];
    for ci in 0..cin {
        let src = &x[ci * plane..(ci + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * plane..][..plane];
                let (lo, hi) = col_range(kx, w);
                if lo >= hi {
                    continue;
                }
                for oy in 0..h {
                    let iy = oy + ky;
                    if iy < 1 || iy > h {
                        continue;
                    }
                    row[oy * w + lo..oy * w + hi].copy_from_slice(&src[(iy - 1) * w + lo + kx - 1..(iy - 1) * w + hi + kx - 1]);
                }
            }
        }
    }
    cols
}

fn conv_forward(inp: Shape3, out_channels: usize, p: &[f64], x: &[f64], y: &mut [f64]) {
    let plane = inp.height * inp.width;
    let taps = inp.channels * 9;
    let (weights, bias) = p.split_at(out_channels * taps);
    let cols = im2col(inp, x);
    for co in 0..out_channels {
        let out = &mut y[co * plane..(co + 1) * plane];
        out.fill(bias[co]);
        for (j, &wv) in weights[co * taps..(co + 1) * taps].iter().enumerate() {
            if wv != 0.0 {
                axpy(wv, &cols[j * plane..(j + 1) * plane], out);
            }
        }
    }
}

fn conv_backward(
    inp: Shape3,
    out_channels: usize,
    p: &[f64],
    x: &[f64],
    gy: &[f64],
    g: &mut [f64],
    gx: Option<&mut Vec<f64>>,
) {
    let (cin, h, w) = (inp.channels, inp.height, inp.width);
    let plane = h * w;
    let taps = cin * 9;
    let (gw, gb) = g.split_at_mut(out_channels * taps);
    let weights = &p[..out_channels * taps];
    let cols = im2col(inp, x);
    let mut gcols = if gx.is_some() { vec![0.0; taps * plane] } else { Vec::new() };
    for co in 0..out_channels {
        let gout = &gy[co * plane..(co + 1) * plane];
        gb[co] += gout.iter().sum::<f64>();
        for j in 0..taps {
            gw[co * taps + j] += dot(gout, &cols[j * plane..(j + 1) * plane]);
        }
        if !gcols.is_empty() {
            for (j, &wv) in weights[co * taps..(co + 1) * taps].iter().enumerate() {
                axpy(wv, gout, &mut gcols[j * plane..(j + 1) * plane]);
            }
        }
    }
    // fold tap rows back onto the input grid
    if let Some(gx) = gx {
        for ci in 0..cin {
            let dst = &mut gx[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = &gcols[(ci * 9 + ky * 3 + kx) * plane..][..plane];
                    let (lo, hi) = col_range(kx, w);
                    if lo >= hi {
                        continue;
                    }
                    for oy in 0..h {
                        let iy = oy + ky;
                        if iy < 1 || iy > h {
                            continue;
                        }
                        let d = &mut dst[(iy - 1) * w + lo + kx - 1..(iy - 1) * w + hi + kx - 1];
                        for (dv, &gv) in d.iter_mut().zip(&row[oy * w + lo..oy * w + hi]) {
                            *dv += gv;
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn nearest(i: usize, from: usize, to: usize) -> usize {
    i * from / to
}

fn resize_forward(inp: Shape3, out: Shape3, x: &[f64], y: &mut [f64]) {
    let cols: Vec<usize> = (0..out.width).map(|ox| nearest(ox, inp.width, out.width)).collect();
    for c in 0..out.channels {
        for oy in 0..out.height {
            let iy = nearest(oy, inp.height, out.height);
            let src = &x[(c * inp.height + iy) * inp.width..][..inp.width];
            let dst = &mut y[(c * out.height + oy) * out.width..][..out.width];
            for (d, &ix) in dst.iter_mut().zip(&cols) {
                *d = src[ix];
            }
        }
    }
}

fn resize_backward(inp: Shape3, out: Shape3, gy: &[f64], gx: &mut [f64]) {
    let cols: Vec<usize> = (0..out.width).map(|ox| nearest(ox, inp.width, out.width)).collect();
    for c in 0..out.channels {
        for oy in 0..out.height {
            let iy = nearest(oy, inp.height, out.height);
            let g = &gy[(c * out.height + oy) * out.width..][..out.width];
            let dst = &mut gx[(c * inp.height + iy) * inp.width..][..inp.width];
            for (&gv, &ix) in g.iter().zip(&cols) {
                dst[ix] += gv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn place(spec: LayerSpec, input: Shape3) -> Layer {
        Layer {
            spec,
            input,
            output: spec.output_shape(input).unwrap(),
            offset: 0,
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let input = Shape3::new(2, 4, 5);
        let layer = place(LayerSpec::Conv3x3 { in_channels: 2, out_channels: 3 }, input);
        let params: Vec<f64> = (0..layer.spec.param_count()).map(|i| ((i * 7) % 11) as f64 * 0.1 - 0.5).collect();
        let x: Vec<f64> = (0..input.len()).map(|i| ((i * 5) % 13) as f64 * 0.2 - 1.0).collect();
        let mut y = Vec::new();
        layer.forward(&params, &x, &mut y);
        let at = |c: usize, r: isize, col: isize| -> f64 {
            if r < 0 || col < 0 || r >= 4 || col >= 5 {
                0.0
            } else {
                x[(c * 4 + r as usize) * 5 + col as usize]
            }
        };
        for co in 0..3 {
            for r in 0..4 {
                for c in 0..5 {
                    let mut want = params[3 * 2 * 9 + co];
                    for ci in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                want += params[(co * 2 + ci) * 9 + ky * 3 + kx]
                                    * at(ci, r as isize + ky as isize - 1, c as isize + kx as isize - 1);
                            }
                        }
                    }
                    assert!((y[(co * 4 + r) * 5 + c] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_and_resize_shapes() {
        let s = Shape3::new(2, 7, 11);
        assert_eq!(LayerSpec::AvgPool { kh: 2, kw: 3 }.output_shape(s).unwrap(), Shape3::new(2, 3, 3));
        assert!(LayerSpec::AvgPool { kh: 8, kw: 1 }.output_shape(s).is_err());
        assert_eq!(LayerSpec::Resize { height: 30, width: 500 }.output_shape(s).unwrap(), Shape3::new(2, 30, 500));
        assert!(LayerSpec::Reshape { channels: 1, height: 1, width: 5 }.output_shape(s).is_err());
        assert!(LayerSpec::Linear { inputs: 3, outputs: 2 }.output_shape(s).is_err());
    }

    #[test]
    fn avgpool_averages_blocks() {
        let layer = place(LayerSpec::AvgPool { kh: 2, kw: 2 }, Shape3::new(1, 2, 5));
        let x = vec![1.0, 2.0, 3.0, 4.0, 100.0, 5.0, 6.0, 7.0, 8.0, 100.0];
        let mut y = Vec::new();
        layer.forward(&[], &x, &mut y);
        assert_eq!(y, vec![3.5, 5.5]);
    }
}
