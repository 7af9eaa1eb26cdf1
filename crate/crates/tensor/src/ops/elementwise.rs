use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Backward, Tensor};

fn unary<T: Scalar, B: Backward<T> + 'static>(x: &Tensor<T>, f: impl Fn(T) -> T, b: B) -> Result<Tensor<T>> {
    let value = x.value().map(f);
    Tensor::from_op(&[x], value, b)
}

struct Neg;
impl<T: Scalar> Backward<T> for Neg {
    fn name(&self) -> &'static str {
        "neg"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.neg()?)])
    }
}

struct Scale(f64);
impl<T: Scalar> Backward<T> for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.scale(self.0)?)])
    }
}

struct AddScalar;
impl<T: Scalar> Backward<T> for AddScalar {
    fn name(&self) -> &'static str {
        "add_scalar"
    }
    fn vjp(&self, _: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.clone())])
    }
}

struct Square;
impl<T: Scalar> Backward<T> for Square {
    fn name(&self) -> &'static str {
        "square"
    }
    fn vjp(&self, x: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.mul(&x[0])?.scale(2.0)?)])
    }
}

struct Sqrt;
impl<T: Scalar> Backward<T> for Sqrt {
    fn name(&self) -> &'static str {
        "sqrt"
    }
    fn vjp(&self, _: &[Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.div(out)?.scale(0.5)?)])
    }
}

struct Powf(f64);
impl<T: Scalar> Backward<T> for Powf {
    fn name(&self) -> &'static str {
        "powf"
    }
    fn vjp(&self, x: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let d = x[0].powf(self.0 - 1.0)?.scale(self.0)?;
        Ok(vec![Some(g.mul(&d)?)])
    }
}

struct Exp;
impl<T: Scalar> Backward<T> for Exp {
    fn name(&self) -> &'static str {
        "exp"
    }
    fn vjp(&self, _: &[Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.mul(out)?)])
    }
}

struct Log;
impl<T: Scalar> Backward<T> for Log {
    fn name(&self) -> &'static str {
        "log"
    }
    fn vjp(&self, x: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.div(&x[0])?)])
    }
}

struct Softplus;
impl<T: Scalar> Backward<T> for Softplus {
    fn name(&self) -> &'static str {
        "softplus"
    }
    fn vjp(&self, x: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        Ok(vec![Some(g.mul(&x[0].sigmoid()?)?)])
    }
}

struct Sigmoid;
impl<T: Scalar> Backward<T> for Sigmoid {
    fn name(&self) -> &'static str {
        "sigmoid"
    }
    fn vjp(&self, _: &[Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let d = out.mul(&out.neg()?.add_scalar(1.0)?)?;
        Ok(vec![Some(g.mul(&d)?)])
    }
}

struct Tanh;
impl<T: Scalar> Backward<T> for Tanh {
    fn name(&self) -> &'static str {
        "tanh"
    }
    fn vjp(&self, _: &[Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let d = out.square()?.neg()?.add_scalar(1.0)?;
        Ok(vec![Some(g.mul(&d)?)])
    }
}

struct LeakyRelu(f64);
impl<T: Scalar> Backward<T> for LeakyRelu {
    fn name(&self) -> &'static str {
        "leaky_relu"
    }
    fn vjp(&self, x: &[Tensor<T>], _: &Tensor<T>, g: &Tensor<T>, _: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        // piecewise linear: the slope mask is a constant
        let alpha = T::of(self.0);
        let slope = x[0].value().map(|v| if v >= T::zero() { T::one() } else { alpha });
        Ok(vec![Some(g.mul(&Tensor::constant(slope))?)])
    }
}

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

struct Binary(BinaryKind);
impl<T: Scalar> Backward<T> for Binary {
    fn name(&self) -> &'static str {
        match self.0 {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }
    fn vjp(&self, x: &[Tensor<T>], out: &Tensor<T>, g: &Tensor<T>, needs: &[bool]) -> Result<Vec<Option<Tensor<T>>>> {
        let (a, b) = (&x[0], &x[1]);
        let ga = if needs[0] {
            let d = match self.0 {
                BinaryKind::Add | BinaryKind::Sub => g.clone(),
                BinaryKind::Mul => g.mul(b)?,
                BinaryKind::Div => g.div(b)?,
            };
            Some(d.sum_to(a.shape())?)
        } else {
            None
        };
        let gb = if needs[1] {
            let d = match self.0 {
                BinaryKind::Add => g.clone(),
                BinaryKind::Sub => g.neg()?,
                BinaryKind::Mul => g.mul(a)?,
                // d(a/b)/db = -(a/b)/b
                BinaryKind::Div => g.mul(out)?.div(b)?.neg()?,
            };
            Some(d.sum_to(b.shape())?)
        } else {
            None
        };
        Ok(vec![ga, gb])
    }
}

fn binary<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, kind: BinaryKind) -> Result<Tensor<T>> {
    let value = match kind {
        BinaryKind::Add => a.value().zip_broadcast(b.value(), "add", |x, y| x + y)?,
        BinaryKind::Sub => a.value().zip_broadcast(b.value(), "sub", |x, y| x - y)?,
        BinaryKind::Mul => a.value().zip_broadcast(b.value(), "mul", |x, y| x * y)?,
        BinaryKind::Div => {
            if b.data().iter().any(|v| *v == T::zero()) {
                return Err(TensorError::DivisionByZero("div"));
            }
            a.value().zip_broadcast(b.value(), "div", |x, y| x / y)?
        }
    };
    Tensor::from_op(&[a, b], value, Binary(kind))
}

/// Overflow-safe `ln(1 + e^x)`.
pub fn softplus_scalar(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinaryKind::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinaryKind::Sub)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinaryKind::Mul)
    }

    /// Errors if any divisor element is exactly zero.
    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        binary(self, other, BinaryKind::Div)
    }

    pub fn neg(&self) -> Result<Tensor<T>> {
        unary(self, |v| -v, Neg)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor<T>> {
        let c_t = T::of(c);
        unary(self, move |v| v * c_t, Scale(c))
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor<T>> {
        let c_t = T::of(c);
        unary(self, move |v| v + c_t, AddScalar)
    }

    pub fn square(&self) -> Result<Tensor<T>> {
        unary(self, |v| v * v, Square)
    }

    pub fn sqrt(&self) -> Result<Tensor<T>> {
        if let Some(v) = self.data().iter().find(|v| **v < T::zero()) {
            return Err(TensorError::NegativeInput {
                op: "sqrt",
                value: v.f64(),
            });
        }
        unary(self, |v| v.sqrt(), Sqrt)
    }

    /// `x^p`; inputs must be positive unless `p` is a non-negative integer.
    pub fn powf(&self, p: f64) -> Result<Tensor<T>> {
        let integral = p.fract() == 0.0 && p >= 0.0;
        if !integral {
            if let Some(v) = self.data().iter().find(|v| **v <= T::zero()) {
                return Err(TensorError::NonPositiveInput {
                    op: "powf",
                    value: v.f64(),
                });
            }
        }
        let p_t = T::of(p);
        unary(self, move |v| v.powf(p_t), Powf(p))
    }

    pub fn exp(&self) -> Result<Tensor<T>> {
        unary(self, |v| v.exp(), Exp)
    }

    pub fn log(&self) -> Result<Tensor<T>> {
        if let Some(v) = self.data().iter().find(|v| **v <= T::zero()) {
            return Err(TensorError::NonPositiveInput {
                op: "log",
                value: v.f64(),
            });
        }
        unary(self, |v| v.ln(), Log)
    }

    pub fn softplus(&self) -> Result<Tensor<T>> {
        unary(self, |v| T::of(softplus_scalar(v.f64())), Softplus)
    }

    pub fn sigmoid(&self) -> Result<Tensor<T>> {
        unary(self, |v| T::of(sigmoid_scalar(v.f64())), Sigmoid)
    }

    pub fn tanh(&self) -> Result<Tensor<T>> {
        unary(self, |v| v.tanh(), Tanh)
    }

    /// `x` for `x >= 0`, `alpha * x` otherwise.
    pub fn leaky_relu(&self, alpha: f64) -> Result<Tensor<T>> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(TensorError::InvalidArgument {
                op: "leaky_relu",
                msg: format!("alpha must lie in (0, 1), got {alpha}"),
            });
        }
        let a = T::of(alpha);
        unary(self, move |v| if v >= T::zero() { v } else { a * v }, LeakyRelu(alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;
    use crate::tape::Tape;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::constant(Array::from_f64(shape, v).unwrap())
    }

    #[test]
    fn leaky_relu_values_and_slope() {
        let y = t(&[3], &[-1.0, 0.0, 2.0]).leaky_relu(0.2).unwrap();
        assert_eq!(y.data(), &[-0.2, 0.0, 2.0]);
        let pos = t(&[3], &[0.0, 1.5, 3.0]);
        assert_eq!(pos.leaky_relu(0.2).unwrap().data(), pos.data());

        let tape = Tape::<f64>::new();
        let x = tape.leaf(Array::from_f64(&[1], &[-3.0]).unwrap());
        let y = x.leaky_relu(0.2).unwrap().sum().unwrap();
        let g = tape.grad(&y, &[&x], false).unwrap();
        assert_eq!(g[0].data(), &[0.2]);
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert!((softplus_scalar(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let y = t(&[1], &[50.0]).softplus().unwrap();
        assert!((y.data()[0] - 50.0).abs() < 1e-12);
        let y = t(&[1], &[800.0]).softplus().unwrap();
        assert_eq!(y.data()[0], 800.0);
        assert!(t(&[1], &[-800.0]).softplus().unwrap().data()[0] >= 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            t(&[2], &[1.0, -1.0]).sqrt(),
            Err(TensorError::NegativeInput { .. })
        ));
        assert!(matches!(
            t(&[2], &[1.0, 2.0]).div(&t(&[2], &[1.0, 0.0])),
            Err(TensorError::DivisionByZero(_))
        ));
        assert!(t(&[1], &[0.0]).log().is_err());
        assert!(t(&[1], &[1.0]).leaky_relu(1.5).is_err());
    }

    #[test]
    fn second_order_through_square() {
        // d/dx (d/dx x^3) = 6x
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Array::from_f64(&[1], &[2.0]).unwrap());
        let y = x.square().unwrap().mul(&x).unwrap().sum().unwrap();
        let g = tape.grad(&y, &[&x], true).unwrap();
        assert!((g[0].item() - 12.0).abs() < 1e-12);
        let gg = tape.grad(&g[0].sum().unwrap(), &[&x], false).unwrap();
        assert!((gg[0].item() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn broadcast_gradients_reduce() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Array::from_f64(&[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap());
        let b = tape.leaf(Array::from_f64(&[1, 3], &[1., 1., 1.]).unwrap());
        let y = x.mul(&b).unwrap().sum().unwrap();
        let g = tape.grad(&y, &[&x, &b], false).unwrap();
        assert_eq!(g[0].data(), &[1.; 6]);
        assert_eq!(g[1].data(), &[5., 7., 9.]);
    }
}
