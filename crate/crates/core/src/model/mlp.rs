use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Logistic function evaluated without overflow for either sign of `z`.
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy of `sigmoid(z)` against `y`, as `max(z,0) - z*y + ln(1 + e^-|z|)`.
pub fn bce_with_logit<T: Scalar>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (-z.abs()).exp().ln_1p()
}

/// Cross-entropy for a probability score; converts back to the logit first.
pub fn loss<T: Scalar>(score: T, label: u8) -> T {
    let z = score.ln() - (-score).ln_1p();
    bce_with_logit(z, if label == 1 { T::one() } else { T::zero() })
}

/// `input_dim -> input_dim` ReLU layer followed by a single sigmoid output.
/// Row `j` of `w1` holds the incoming weights of hidden unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array1<T>,
    pub b2: T,
}

/// Parameter-shaped gradient (or any other per-parameter quantity).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array1<T>,
    pub b2: T,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(dim: usize) -> Self {
        Gradients {
            w1: Array2::zeros((dim, dim)),
            b1: Array1::zeros(dim),
            w2: Array1::zeros(dim),
            b2: T::zero(),
        }
    }

    pub fn scale(&mut self, f: T) {
        self.w1 *= f;
        self.b1 *= f;
        self.w2 *= f;
        self.b2 *= f;
    }

    /// Flattened in the order `w1` (row-major), `b1`, `w2`, `b2`.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.w1.len() + 2 * self.b1.len() + 1);
        out.extend(self.w1.iter().copied());
        out.extend(self.b1.iter().copied());
        out.extend(self.w2.iter().copied());
        out.push(self.b2);
        out
    }
}

impl<T: Scalar> MlpModel<T> {
    pub fn zeros(input_dim: usize) -> Self {
        let g = Gradients::<T>::zeros(input_dim);
        MlpModel {
            w1: g.w1,
            b1: g.b1,
            w2: g.w2,
            b2: g.b2,
        }
    }

    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))` per layer), zero biases.
    pub fn init(input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = input_dim as f64;
        let a1 = (6.0 / (2.0 * d)).sqrt();
        let a2 = (6.0 / (d + 1.0)).sqrt();
        let w1 = Array2::from_shape_simple_fn((input_dim, input_dim), || T::of(rng.random_range(-a1..=a1)));
        let w2 = Array1::from_shape_simple_fn(input_dim, || T::of(rng.random_range(-a2..=a2)));
        MlpModel {
            w1,
            b1: Array1::zeros(input_dim),
            w2,
            b2: T::zero(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.b1.len()
    }

    pub fn param_count(&self) -> usize {
        let d = self.input_dim();
        d * d + 2 * d + 1
    }

    /// Flattened in the same order as [`Gradients::flatten`].
    pub fn params(&self) -> Vec<T> {
        Gradients {
            w1: self.w1.clone(),
            b1: self.b1.clone(),
            w2: self.w2.clone(),
            b2: self.b2,
        }
        .flatten()
    }

    pub fn set_params(&mut self, values: &[T]) -> Result<()> {
        let d = self.input_dim();
        if values.len() != self.param_count() {
            return Err(Error::LengthMismatch(values.len(), self.param_count()));
        }
        let (w1, rest) = values.split_at(d * d);
        let (b1, rest) = rest.split_at(d);
        let (w2, rest) = rest.split_at(d);
        self.w1.as_slice_mut().expect("standard layout").copy_from_slice(w1);
        self.b1.as_slice_mut().expect("standard layout").copy_from_slice(b1);
        self.w2.as_slice_mut().expect("standard layout").copy_from_slice(w2);
        self.b2 = rest[0];
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.b2.is_finite()
            && self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
    }

    fn check(&self, found: usize) -> Result<()> {
        if found != self.input_dim() {
            return Err(Error::InputDimension {
                expected: self.input_dim(),
                found,
            });
        }
        Ok(())
    }

    /// Pre-sigmoid output for one input.
    pub fn logit(&self, x: &[T]) -> Result<T> {
        self.check(x.len())?;
        let x = ArrayView1::from(x);
        let h = (self.w1.dot(&x) + &self.b1).mapv(|v| v.max(T::zero()));
        Ok(h.dot(&self.w2) + self.b2)
    }

    pub fn forward(&self, x: &[T]) -> Result<T> {
        self.logit(x).map(sigmoid)
    }

    fn hidden(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut z1 = x.dot(&self.w1.t());
        z1 += &self.b1;
        z1
    }

    /// Logits for every row of `x`.
    pub fn logits(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        self.check(x.ncols())?;
        let h = self.hidden(x).mapv(|v| v.max(T::zero()));
        Ok(h.dot(&self.w2) + self.b2)
    }

    pub fn scores(&self, x: ArrayView2<'_, T>) -> Result<Array1<T>> {
        Ok(self.logits(x)?.mapv(sigmoid))
    }

    /// Summed loss and summed gradients over the rows of `x` (divide by the batch size for a mean).
    pub fn batch_gradients(&self, x: ArrayView2<'_, T>, labels: &[u8]) -> Result<(T, Gradients<T>)> {
        self.check(x.ncols())?;
        if labels.len() != x.nrows() {
            return Err(Error::LengthMismatch(x.nrows(), labels.len()));
        }
        let z1 = self.hidden(x);
        let h = z1.mapv(|v| v.max(T::zero()));
        let z = h.dot(&self.w2) + self.b2;
        let y = Array1::from_iter(labels.iter().map(|&l| if l == 1 { T::one() } else { T::zero() }));
        let loss_sum = Zip::from(&z).and(&y).fold(T::zero(), |acc, &z, &y| acc + bce_with_logit(z, y));
        let dz = Zip::from(&z).and(&y).map_collect(|&z, &y| sigmoid(z) - y);

        let w2 = h.t().dot(&dz);
        let b2 = dz.sum();
        // dH[i, j] = dz[i] * w2[j], zeroed where the ReLU was inactive (subgradient 0 at 0).
        let mut dh = Array2::zeros(z1.raw_dim());
        Zip::indexed(&mut dh).and(&z1).for_each(|(i, j), d, &pre| {
            if pre > T::zero() {
                *d = dz[i] * self.w2[j];
            }
        });
        let w1 = dh.t().dot(&x);
        let b1 = dh.sum_axis(Axis(0));
        Ok((loss_sum, Gradients { w1, b1, w2, b2 }))
    }

    /// Gradient of the single-sample loss.
    pub fn backward(&self, x: &[T], label: u8) -> Result<Gradients<T>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        Ok(self.batch_gradients(view, &[label])?.1)
    }
}
