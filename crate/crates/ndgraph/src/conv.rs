//! Direct "same"-padded 2-D cross-correlation and its adjoints.

/// Geometry of one convolution: x [cin, h, w], k [cout, cin, kh, kw].
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvDims {
    pub fn new(x: &[usize], k: &[usize]) -> Self {
        Self {
            cin: x[0],
            h: x[1],
            w: x[2],
            cout: k[0],
            kh: k[2],
            kw: k[3],
        }
    }

    /// Output rows `y` such that `y + dy - ph` stays inside the input, and
    /// the matching column range, for tap (dy, dx).
    #[inline]
    fn valid(&self, dy: usize, dx: usize) -> (usize, usize, usize, usize) {
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let y0 = ph.saturating_sub(dy);
        let y1 = (self.h + ph).saturating_sub(dy).min(self.h);
        let x0 = pw.saturating_sub(dx);
        let x1 = (self.w + pw).saturating_sub(dx).min(self.w);
        (y0, y1, x0, x1)
    }
}

/// out[o, y, x] = Σ_{c, dy, dx} x[c, y + dy - ph, x + dx - pw] · k[o, c, dy, dx]
pub(crate) fn forward(d: ConvDims, x: &[f64], k: &[f64]) -> Vec<f64> {
    let plane = d.h * d.w;
    let mut out = vec![0.0; d.cout * plane];
    let (ph, pw) = (d.kh / 2, d.kw / 2);
    for o in 0..d.cout {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        for c in 0..d.cin {
            let in_plane = &x[c * plane..(c + 1) * plane];
            for dy in 0..d.kh {
                for dx in 0..d.kw {
                    let kv = k[((o * d.cin + c) * d.kh + dy) * d.kw + dx];
                    if kv == 0.0 {
                        continue;
                    }
                    let (y0, y1, x0, x1) = d.valid(dy, dx);
                    for y in y0..y1 {
                        let sy = y + dy - ph;
                        let src = &in_plane[sy * d.w + x0 + dx - pw..sy * d.w + x1 + dx - pw];
                        let dst = &mut out_plane[y * d.w + x0..y * d.w + x1];
                        for (o, s) in dst.iter_mut().zip(src) {
                            *o += kv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients (dx, dk) given upstream gradient `g` of the output.
pub(crate) fn backward(d: ConvDims, x: &[f64], k: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let plane = d.h * d.w;
    let mut gx = vec![0.0; d.cin * plane];
    let mut gk = vec![0.0; d.cout * d.cin * d.kh * d.kw];
    let (ph, pw) = (d.kh / 2, d.kw / 2);
    for o in 0..d.cout {
        let g_plane = &g[o * plane..(o + 1) * plane];
        for c in 0..d.cin {
            let in_plane = &x[c * plane..(c + 1) * plane];
            let gx_plane = &mut gx[c * plane..(c + 1) * plane];
            for dy in 0..d.kh {
                for dx in 0..d.kw {
                    let ki = ((o * d.cin + c) * d.kh + dy) * d.kw + dx;
                    let kv = k[ki];
                    let (y0, y1, x0, x1) = d.valid(dy, dx);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + dy - ph;
                        let off = sy * d.w + dx;
                        let gr = &g_plane[y * d.w + x0..y * d.w + x1];
                        let xr = &in_plane[off + x0 - pw..off + x1 - pw];
                        for (gv, xv) in gr.iter().zip(xr) {
                            acc += gv * xv;
                        }
                        if kv != 0.0 {
                            let gxr = &mut gx_plane[off + x0 - pw..off + x1 - pw];
                            for (t, gv) in gxr.iter_mut().zip(gr) {
                                *t += kv * gv;
                            }
                        }
                    }
                    gk[ki] += acc;
                }
            }
        }
    }
    (gx, gk)
}
