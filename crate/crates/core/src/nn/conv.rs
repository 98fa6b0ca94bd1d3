//! 2-D convolution kernels over a single sample via im2col.
//!
//! Filters flagged inactive are skipped entirely: their output plane stays
//! zero and they receive no gradient. Inactive input channels (pruned filters
//! of the previous layer) are skipped in the inner products, which is exact
//! because their activations are zero.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeom {
    /// Returns `None` when the kernel does not fit the padded input.
    pub fn new(
        in_channels: usize,
        height: usize,
        width: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Option<Self> {
        let ph = height + 2 * padding;
        let pw = width + 2 * padding;
        if kernel == 0 || stride == 0 || ph < kernel || pw < kernel {
            return None;
        }
        Some(Self {
            in_channels,
            height,
            width,
            filters,
            kernel,
            stride,
            padding,
            out_height: (ph - kernel) / stride + 1,
            out_width: (pw - kernel) / stride + 1,
        })
    }

    pub fn out_positions(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn col_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn output_len(&self) -> usize {
        self.filters * self.out_positions()
    }

    /// Multiply-accumulate count for one sample with the given numbers of
    /// live filters and live input channels.
    pub fn macs(&self, live_filters: usize, live_inputs: usize) -> usize {
        live_filters * live_inputs * self.kernel * self.kernel * self.out_positions()
    }

    /// Maps column row `r`, output position `(oy, ox)` to an input offset,
    /// or `None` if it falls in the zero padding.
    #[inline]
    fn source(&self, ky: usize, kx: usize, oy: usize, ox: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.padding)?;
        let ix = (ox * self.stride + kx).checked_sub(self.padding)?;
        (iy < self.height && ix < self.width).then_some((iy, ix))
    }
}

/// Unfolds one `[C, H, W]` sample into `[C*k*k, Ho*Wo]` columns.
pub fn im2col(x: &[f64], g: &ConvGeom, active_in: &[bool], cols: &mut [f64]) {
    let p = g.out_positions();
    let kk = g.kernel * g.kernel;
    cols.fill(0.0);
    for c in (0..g.in_channels).filter(|&c| active_in[c]) {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = &mut cols[(c * kk + ky * g.kernel + kx) * p..][..p];
                for oy in 0..g.out_height {
                    for ox in 0..g.out_width {
                        if let Some((iy, ix)) = g.source(ky, kx, oy, ox) {
                            row[oy * g.out_width + ox] = plane[iy * g.width + ix];
                        }
                    }
                }
            }
        }
    }
}

/// Folds column gradients back onto a `[C, H, W]` input gradient (accumulating).
pub fn col2im(dcols: &[f64], g: &ConvGeom, active_in: &[bool], dx: &mut [f64]) {
    let p = g.out_positions();
    let kk = g.kernel * g.kernel;
    for c in (0..g.in_channels).filter(|&c| active_in[c]) {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = &dcols[(c * kk + ky * g.kernel + kx) * p..][..p];
                for oy in 0..g.out_height {
                    for ox in 0..g.out_width {
                        if let Some((iy, ix)) = g.source(ky, kx, oy, ox) {
                            plane[iy * g.width + ix] += row[oy * g.out_width + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out[f] = bias[f] + W[f] . cols` for active filters; inactive planes are zeroed.
pub fn forward(
    weight: &[f64],
    bias: &[f64],
    cols: &[f64],
    g: &ConvGeom,
    active_out: &[bool],
    active_in: &[bool],
    out: &mut [f64],
) {
    let p = g.out_positions();
    let kk = g.kernel * g.kernel;
    let rows = g.col_rows();
    for f in 0..g.filters {
        let plane = &mut out[f * p..(f + 1) * p];
        if !active_out[f] {
            plane.fill(0.0);
            continue;
        }
        plane.fill(bias[f]);
        let wf = &weight[f * rows..(f + 1) * rows];
        for c in (0..g.in_channels).filter(|&c| active_in[c]) {
            for r in c * kk..(c + 1) * kk {
                let w = wf[r];
                let col = &cols[r * p..(r + 1) * p];
                plane.iter_mut().zip(col).for_each(|(o, &x)| *o += w * x);
            }
        }
    }
}

/// Accumulates weight/bias gradients from `dpre` (gradient w.r.t. the
/// pre-activation output) and, if requested, writes column gradients.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    weight: &[f64],
    cols: &[f64],
    dpre: &[f64],
    g: &ConvGeom,
    active_out: &[bool],
    active_in: &[bool],
    gw: &mut [f64],
    gb: &mut [f64],
    mut dcols: Option<&mut [f64]>,
) {
    let p = g.out_positions();
    let kk = g.kernel * g.kernel;
    let rows = g.col_rows();
    if let Some(d) = dcols.as_deref_mut() {
        d.fill(0.0);
    }
    for f in (0..g.filters).filter(|&f| active_out[f]) {
        let df = &dpre[f * p..(f + 1) * p];
        gb[f] += df.iter().sum::<f64>();
        let wf = &weight[f * rows..(f + 1) * rows];
        let gwf = &mut gw[f * rows..(f + 1) * rows];
        for c in (0..g.in_channels).filter(|&c| active_in[c]) {
            for r in c * kk..(c + 1) * kk {
                let col = &cols[r * p..(r + 1) * p];
                gwf[r] += df.iter().zip(col).map(|(a, b)| a * b).sum::<f64>();
                if let Some(d) = dcols.as_deref_mut() {
                    let w = wf[r];
                    d[r * p..(r + 1) * p]
                        .iter_mut()
                        .zip(df)
                        .for_each(|(o, &v)| *o += w * v);
                }
            }
        }
    }
}
