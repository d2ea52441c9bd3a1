use super::dims4;
use crate::branch::note_branch;
use crate::{shape_err, Real, Tensor, TensorError};

/// 2x2 max pooling with stride 2. Ties go to the first element in row-major
/// window order, which also receives the whole gradient.
pub fn maxpool2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let [n, c, h, w] = dims4(x.shape(), "maxpool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err("maxpool2", format!("odd spatial size {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    {
        let xd = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let top = base + 2 * oy * w + 2 * ox;
                    let mut best = top;
                    for idx in [top + 1, top + w, top + w + 1] {
                        if xd[idx] > xd[best] {
                            best = idx;
                        }
                    }
                    note_branch((best - top) as u64);
                    out.push(xd[best]);
                    argmax.push(best as u32);
                }
            }
        }
    }
    let len = x.numel();
    Ok(Tensor::from_op(
        vec![n, c, ho, wo],
        out,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut gx = vec![T::zero(); len];
            for (&gv, &i) in g.iter().zip(&argmax) {
                gx[i as usize] += gv;
            }
            vec![Some(gx)]
        }),
    ))
}

/// Nearest-neighbour 2x upsampling; the adjoint sums each 2x2 block.
pub fn upsample_nearest2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let [n, c, h, w] = dims4(x.shape(), "upsample_nearest2")?;
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    {
        let xd = x.data();
        for plane in 0..n * c {
            let src = &xd[plane * h * w..][..h * w];
            for oy in 0..ho {
                let row = &src[(oy / 2) * w..][..w];
                for &v in row {
                    out.push(v);
                    out.push(v);
                }
            }
        }
    }
    Ok(Tensor::from_op(
        vec![n, c, ho, wo],
        out,
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut gx = vec![T::zero(); n * c * h * w];
            for plane in 0..n * c {
                let gp = &g[plane * ho * wo..][..ho * wo];
                let dst = &mut gx[plane * h * w..][..h * w];
                for y in 0..h {
                    for x in 0..w {
                        let t = 2 * y * wo + 2 * x;
                        dst[y * w + x] = gp[t] + gp[t + 1] + gp[t + wo] + gp[t + wo + 1];
                    }
                }
            }
            vec![Some(gx)]
        }),
    ))
}
