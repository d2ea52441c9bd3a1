use super::dims4;
use crate::{shape_err, Real, Tensor, TensorError};

/// Group normalization over `(C/groups)·H·W` elements per sample and group,
/// followed by a per-channel affine map. Variance is the biased two-pass
/// estimate.
pub fn group_norm<T: Real>(
    x: &Tensor<T>,
    groups: usize,
    scale: &Tensor<T>,
    shift: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>, TensorError> {
    let [n, c, h, w] = dims4(x.shape(), "group_norm")?;
    if groups == 0 || c % groups != 0 {
        return Err(shape_err("group_norm", format!("{c} channels in {groups} groups")));
    }
    if scale.shape() != [c] || shift.shape() != [c] {
        return Err(shape_err(
            "group_norm",
            format!("affine {:?}/{:?} for {c} channels", scale.shape(), shift.shape()),
        ));
    }
    let cg = c / groups;
    let hw = h * w;
    let m = cg * hw;
    let mf = T::of(m as f64);
    let mut out = vec![T::zero(); x.numel()];
    let mut stats = Vec::with_capacity(n * groups);
    {
        let (xd, sc, sh) = (x.data(), scale.data(), shift.data());
        for i in 0..n * groups {
            let seg = &xd[i * m..][..m];
            let mut s = T::zero();
            for &v in seg {
                s += v;
            }
            let mean = s / mf;
            let mut ss = T::zero();
            for &v in seg {
                let d = v - mean;
                ss += d * d;
            }
            let rstd = T::one() / (ss / mf + eps).sqrt();
            stats.push((mean, rstd));
            let g = i % groups;
            for (j, &v) in seg.iter().enumerate() {
                let ch = g * cg + j / hw;
                out[i * m + j] = (v - mean) * rstd * sc[ch] + sh[ch];
            }
        }
    }
    let (xc, scc) = (x.clone(), scale.clone());
    Ok(Tensor::from_op(
        vec![n, c, h, w],
        out,
        vec![x.clone(), scale.clone(), shift.clone()],
        Box::new(move |gout, _| {
            let (xd, sc) = (xc.data(), scc.data());
            let mut gx = vec![T::zero(); xd.len()];
            let mut gscale = vec![T::zero(); c];
            let mut gshift = vec![T::zero(); c];
            for i in 0..n * groups {
                let (mean, rstd) = stats[i];
                let g = i % groups;
                let seg = &xd[i * m..][..m];
                let gseg = &gout[i * m..][..m];
                let mut sum_d = T::zero();
                let mut sum_dx = T::zero();
                for j in 0..m {
                    let ch = g * cg + j / hw;
                    let xhat = (seg[j] - mean) * rstd;
                    let d = gseg[j] * sc[ch];
                    sum_d += d;
                    sum_dx += d * xhat;
                    gscale[ch] += gseg[j] * xhat;
                    gshift[ch] += gseg[j];
                }
                for j in 0..m {
                    let ch = g * cg + j / hw;
                    let xhat = (seg[j] - mean) * rstd;
                    let d = gseg[j] * sc[ch];
                    gx[i * m + j] = rstd / mf * (mf * d - sum_d - xhat * sum_dx);
                }
            }
            vec![Some(gx), Some(gscale), Some(gshift)]
        }),
    ))
}
