use super::dims4;
use crate::{shape_err, Real, Tensor, TensorError};

/// Concatenates along the channel axis: `[N,Ca,H,W] ++ [N,Cb,H,W] -> [N,Ca+Cb,H,W]`.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let [n, ca, h, w] = dims4(a.shape(), "concat_channels")?;
    let [nb, cb, hb, wb] = dims4(b.shape(), "concat_channels")?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(shape_err(
            "concat_channels",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let (sa, sb) = (ca * h * w, cb * h * w);
    let mut out = Vec::with_capacity(n * (sa + sb));
    {
        let (ad, bd) = (a.data(), b.data());
        for i in 0..n {
            out.extend_from_slice(&ad[i * sa..][..sa]);
            out.extend_from_slice(&bd[i * sb..][..sb]);
        }
    }
    Ok(Tensor::from_op(
        vec![n, ca + cb, h, w],
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g, _| {
            let mut ga = Vec::with_capacity(n * sa);
            let mut gb = Vec::with_capacity(n * sb);
            for chunk in g.chunks_exact(sa + sb) {
                ga.extend_from_slice(&chunk[..sa]);
                gb.extend_from_slice(&chunk[sa..]);
            }
            vec![Some(ga), Some(gb)]
        }),
    ))
}
