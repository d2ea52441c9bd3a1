use crate::branch::note_branch;
use crate::{shape_err, Real, Tensor, TensorError};

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn unary<T: Real>(
    x: &Tensor<T>,
    f: impl Fn(T) -> T,
    dfdx: impl Fn(T, T) -> T + 'static,
) -> Tensor<T> {
    let data: Vec<T> = x.data().iter().map(|&v| f(v)).collect();
    let xc = x.clone();
    Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |g, out| {
            let xd = xc.data();
            vec![Some(
                g.iter()
                    .zip(xd.iter())
                    .zip(out)
                    .map(|((&g, &x), &y)| g * dfdx(x, y))
                    .collect(),
            )]
        }),
    )
}

pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(|g, _| vec![Some(g.to_vec()), Some(g.to_vec())]),
    ))
}

pub fn sub<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape("sub", a, b)?;
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x - y).collect();
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(|g, _| vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())]),
    ))
}

pub fn mul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape("mul", a, b)?;
    let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x * y).collect();
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |g, _| {
            let (ad, bd) = (ac.data(), bc.data());
            vec![
                Some(g.iter().zip(bd.iter()).map(|(&g, &y)| g * y).collect()),
                Some(g.iter().zip(ad.iter()).map(|(&g, &x)| g * x).collect()),
            ]
        }),
    ))
}

/// Elementwise product with a constant buffer of the same length.
pub fn mul_const<T: Real>(x: &Tensor<T>, c: &[T]) -> Result<Tensor<T>, TensorError> {
    if c.len() != x.numel() {
        return Err(shape_err("mul_const", format!("{} constants for {} elements", c.len(), x.numel())));
    }
    let data = x.data().iter().zip(c).map(|(&v, &k)| v * k).collect();
    let c = c.to_vec();
    Ok(Tensor::from_op(
        x.shape().to_vec(),
        data,
        vec![x.clone()],
        Box::new(move |g, _| vec![Some(g.iter().zip(&c).map(|(&g, &k)| g * k).collect())]),
    ))
}

pub fn scale<T: Real>(x: &Tensor<T>, k: T) -> Tensor<T> {
    unary(x, move |v| v * k, move |_, _| k)
}

/// Sum of all elements, accumulated in index order.
pub fn sum<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut s = T::zero();
    for &v in x.data().iter() {
        s += v;
    }
    let n = x.numel();
    Tensor::from_op(vec![], vec![s], vec![x.clone()], Box::new(move |g, _| vec![Some(vec![g[0]; n])]))
}

pub fn mean<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let n = T::of(x.numel().max(1) as f64);
    scale(&sum(x), T::one() / n)
}

/// `max(x, 0)`; the subgradient at 0 is 0.
pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    for &v in x.data().iter() {
        note_branch(u64::from(v > T::zero()));
    }
    unary(
        x,
        // NaN passes through so that numeric faults stay visible.
        |v| if v <= T::zero() { T::zero() } else { v },
        |x, _| if x > T::zero() { T::one() } else { T::zero() },
    )
}

/// Logistic function, evaluated without overflow on either side.
#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` as `max(x, 0) + ln(1 + e^-|x|)`.
#[inline]
pub fn softplus_scalar<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    unary(x, sigmoid_scalar, |_, y| y * (T::one() - y))
}

pub fn softplus<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    unary(x, softplus_scalar, |x, _| sigmoid_scalar(x))
}

/// `|a - b|`; the subgradient at equality is 0.
pub fn abs_diff<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape("abs_diff", a, b)?;
    let data: Vec<T> = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| {
            let d = x - y;
            note_branch(if d > T::zero() { 1 } else if d < T::zero() { 2 } else { 0 });
            d.abs()
        })
        .collect();
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Tensor::from_op(
        a.shape().to_vec(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(move |g, _| {
            let (ad, bd) = (ac.data(), bc.data());
            let ga: Vec<T> = g
                .iter()
                .zip(ad.iter().zip(bd.iter()))
                .map(|(&g, (&x, &y))| {
                    if x > y {
                        g
                    } else if x < y {
                        -g
                    } else {
                        T::zero()
                    }
                })
                .collect();
            let gb = ga.iter().map(|&v| -v).collect();
            vec![Some(ga), Some(gb)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_anchors() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert!((softplus_scalar(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus_scalar(0.0f32) - 0.693_147).abs() < 1e-6);
        assert_eq!(softplus_scalar(1000.0f64), 1000.0);
        assert_eq!(softplus_scalar(-1000.0f64), 0.0);
        assert!(sigmoid_scalar(-1000.0f64) >= 0.0 && sigmoid_scalar(1000.0f64) == 1.0);
    }

    #[test]
    fn relu_propagates_nan() {
        let y = relu(&Tensor::from_vec(&[3], vec![f32::NAN, -1.0, 2.0]));
        let v = y.to_vec();
        assert!(v[0].is_nan());
        assert_eq!(&v[1..], &[0.0, 2.0]);
    }

    #[test]
    fn relu_subgradient() {
        let x = Tensor::leaf(&[3], vec![2.0f64, -1.0, 0.0]);
        sum(&relu(&x)).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn abs_diff_is_symmetric() {
        let a = Tensor::from_vec(&[3], vec![0.1f32, -2.5, 3.0]);
        let b = Tensor::from_vec(&[3], vec![0.7f32, 1.25, 3.0]);
        let ab = abs_diff(&a, &b).unwrap().to_vec();
        let ba = abs_diff(&b, &a).unwrap().to_vec();
        assert_eq!(ab.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), ba.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(abs_diff(&a, &a).unwrap().to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn sum_and_product_rule() {
        let x = Tensor::leaf(&[3], vec![1.0f64, 2.0, 3.0]);
        let y = Tensor::leaf(&[3], vec![4.0f64, 5.0, 6.0]);
        sum(&x).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 3]);
        x.zero_grad();
        sum(&mul(&x, &y).unwrap()).backward().unwrap();
        assert_eq!(x.grad().unwrap(), y.to_vec());
        assert_eq!(y.grad().unwrap(), x.to_vec());
    }

    #[test]
    fn shared_subexpression_sums_both_paths() {
        // f = sum(u * u + 3u) with u = x * y: df/dx = (2u + 3) * y.
        let x = Tensor::leaf(&[2], vec![1.5f64, -2.0]);
        let y = Tensor::leaf(&[2], vec![0.5f64, 4.0]);
        let u = mul(&x, &y).unwrap();
        let f = sum(&add(&mul(&u, &u).unwrap(), &scale(&u, 3.0)).unwrap());
        f.backward().unwrap();
        let gx = x.grad().unwrap();
        for i in 0..2 {
            let (xv, yv) = (x.data()[i], y.data()[i]);
            assert!((gx[i] - (2.0 * xv * yv + 3.0) * yv).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_backward_accumulates() {
        let x = Tensor::leaf(&[2], vec![1.0f64, 2.0]);
        let loss = sum(&scale(&x, 2.0));
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![4.0, 4.0]);
        assert!(matches!(scale(&x, 1.0).backward(), Err(TensorError::NonScalar(_))));
    }

    #[test]
    fn no_grad_builds_no_graph() {
        let x = Tensor::leaf(&[2], vec![1.0f32, 2.0]);
        let y = crate::no_grad(|| sum(&x));
        assert!(!y.requires_grad());
        assert!(crate::is_grad_enabled());
    }
}
