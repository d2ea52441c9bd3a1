use super::dims4;
use crate::{shape_err, Real, Tensor, TensorError};

/// Output columns `ox` whose input column `ox*stride + kx - pad` lies in `[0, w)`.
#[inline]
fn valid_range(w: usize, wo: usize, k_off: usize, pad: usize, stride: usize) -> (usize, usize) {
    // ox*stride + k_off >= pad  and  ox*stride + k_off < w + pad
    let lo = if k_off >= pad { 0 } else { (pad - k_off).div_ceil(stride) };
    let hi = if w + pad > k_off { (w + pad - k_off - 1) / stride + 1 } else { 0 };
    (lo.min(wo), hi.min(wo).max(lo.min(wo)))
}

struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
}

/// Cross-correlation (no kernel flip) with zero padding.
/// `x: [N, Cin, H, W]`, `w: [Cout, Cin, k, k]`, `b: [Cout]`.
pub fn conv2d<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>, TensorError> {
    let [n, cin, h, wd] = dims4(x.shape(), "conv2d")?;
    let [cout, wcin, k, k2] = dims4(w.shape(), "conv2d")?;
    if wcin != cin || k != k2 || k == 0 {
        return Err(shape_err(
            "conv2d",
            format!("input {:?} with kernel {:?}", x.shape(), w.shape()),
        ));
    }
    if stride == 0 {
        return Err(shape_err("conv2d", "stride must be >= 1"));
    }
    if let Some(b) = b {
        if b.shape() != [cout] {
            return Err(shape_err("conv2d", format!("bias {:?} for {cout} channels", b.shape())));
        }
    }
    let (ph, pw) = (h + 2 * pad, wd + 2 * pad);
    if ph < k || pw < k || (ph - k) % stride != 0 || (pw - k) % stride != 0 {
        return Err(shape_err(
            "conv2d",
            format!("non-integral output for {h}x{wd}, k={k}, stride={stride}, pad={pad}"),
        ));
    }
    let g = Geometry {
        n,
        cin,
        h,
        w: wd,
        cout,
        k,
        ho: (ph - k) / stride + 1,
        wo: (pw - k) / stride + 1,
        stride,
        pad,
    };
    let out = forward(&g, &x.data(), &w.data(), b.map(|b| b.data().clone()).as_deref());
    let mut parents = vec![x.clone(), w.clone()];
    if let Some(b) = b {
        parents.push(b.clone());
    }
    let (xc, wc, has_bias) = (x.clone(), w.clone(), b.is_some());
    let shape = vec![n, cout, g.ho, g.wo];
    Ok(Tensor::from_op(
        shape,
        out,
        parents,
        Box::new(move |gout, _| {
            let gx = xc.requires_grad().then(|| grad_input(&g, gout, &wc.data()));
            let gw = wc.requires_grad().then(|| grad_weight(&g, gout, &xc.data()));
            let mut grads = vec![gx, gw];
            if has_bias {
                grads.push(Some(grad_bias(&g, gout)));
            }
            grads
        }),
    ))
}

fn forward<T: Real>(g: &Geometry, x: &[T], w: &[T], b: Option<&[T]>) -> Vec<T> {
    let (hw, ohw) = (g.h * g.w, g.ho * g.wo);
    let mut out = vec![T::zero(); g.n * g.cout * ohw];
    for n in 0..g.n {
        for co in 0..g.cout {
            let o = &mut out[(n * g.cout + co) * ohw..][..ohw];
            if let Some(b) = b {
                o.fill(b[co]);
            }
            for ci in 0..g.cin {
                let xp = &x[(n * g.cin + ci) * hw..][..hw];
                for ky in 0..g.k {
                    let (oy_lo, oy_hi) = valid_range(g.h, g.ho, ky, g.pad, g.stride);
                    for kx in 0..g.k {
                        let wv = w[((co * g.cin + ci) * g.k + ky) * g.k + kx];
                        let (ox_lo, ox_hi) = valid_range(g.w, g.wo, kx, g.pad, g.stride);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.stride + ky - g.pad;
                            let orow = &mut o[oy * g.wo..][..g.wo];
                            let xrow = &xp[iy * g.w..][..g.w];
                            if g.stride == 1 {
                                let ix0 = ox_lo + kx - g.pad;
                                let len = ox_hi - ox_lo;
                                for (ov, &xv) in orow[ox_lo..ox_hi].iter_mut().zip(&xrow[ix0..ix0 + len]) {
                                    *ov += wv * xv;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    orow[ox] += wv * xrow[ox * g.stride + kx - g.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn grad_input<T: Real>(g: &Geometry, gout: &[T], w: &[T]) -> Vec<T> {
    let (hw, ohw) = (g.h * g.w, g.ho * g.wo);
    let mut gx = vec![T::zero(); g.n * g.cin * hw];
    for n in 0..g.n {
        for ci in 0..g.cin {
            let gxp = &mut gx[(n * g.cin + ci) * hw..][..hw];
            for co in 0..g.cout {
                let gp = &gout[(n * g.cout + co) * ohw..][..ohw];
                for ky in 0..g.k {
                    let (oy_lo, oy_hi) = valid_range(g.h, g.ho, ky, g.pad, g.stride);
                    for kx in 0..g.k {
                        let wv = w[((co * g.cin + ci) * g.k + ky) * g.k + kx];
                        let (ox_lo, ox_hi) = valid_range(g.w, g.wo, kx, g.pad, g.stride);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.stride + ky - g.pad;
                            let grow = &gp[oy * g.wo..][..g.wo];
                            let xrow = &mut gxp[iy * g.w..][..g.w];
                            if g.stride == 1 {
                                let ix0 = ox_lo + kx - g.pad;
                                let len = ox_hi - ox_lo;
                                for (xv, &gv) in xrow[ix0..ix0 + len].iter_mut().zip(&grow[ox_lo..ox_hi]) {
                                    *xv += wv * gv;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    xrow[ox * g.stride + kx - g.pad] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

fn grad_weight<T: Real>(g: &Geometry, gout: &[T], x: &[T]) -> Vec<T> {
    let (hw, ohw) = (g.h * g.w, g.ho * g.wo);
    let mut gw = vec![T::zero(); g.cout * g.cin * g.k * g.k];
    for co in 0..g.cout {
        for ci in 0..g.cin {
            for ky in 0..g.k {
                let (oy_lo, oy_hi) = valid_range(g.h, g.ho, ky, g.pad, g.stride);
                for kx in 0..g.k {
                    let (ox_lo, ox_hi) = valid_range(g.w, g.wo, kx, g.pad, g.stride);
                    let mut acc = T::zero();
                    for n in 0..g.n {
                        let gp = &gout[(n * g.cout + co) * ohw..][..ohw];
                        let xp = &x[(n * g.cin + ci) * hw..][..hw];
                        for oy in oy_lo..oy_hi {
                            let iy = oy * g.stride + ky - g.pad;
                            let grow = &gp[oy * g.wo..][..g.wo];
                            let xrow = &xp[iy * g.w..][..g.w];
                            if g.stride == 1 {
                                let ix0 = ox_lo + kx - g.pad;
                                let len = ox_hi - ox_lo;
                                for (&gv, &xv) in grow[ox_lo..ox_hi].iter().zip(&xrow[ix0..ix0 + len]) {
                                    acc += gv * xv;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    acc += grow[ox] * xrow[ox * g.stride + kx - g.pad];
                                }
                            }
                        }
                    }
                    gw[((co * g.cin + ci) * g.k + ky) * g.k + kx] = acc;
                }
            }
        }
    }
    gw
}

fn grad_bias<T: Real>(g: &Geometry, gout: &[T]) -> Vec<T> {
    let ohw = g.ho * g.wo;
    (0..g.cout)
        .map(|co| {
            let mut acc = T::zero();
            for n in 0..g.n {
                for &v in &gout[(n * g.cout + co) * ohw..][..ohw] {
                    acc += v;
                }
            }
            acc
        })
        .collect()
}
