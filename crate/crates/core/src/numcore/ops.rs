//! Forward definitions of the numeric primitives.
//!
//! These are plain functions over slices. The tape in [`super::tape`] calls
//! them for its forward values and adds the matching backward rules.

use rand::Rng;

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Norms below this are treated as zero by [`cosine`].
pub const COSINE_EPS: f64 = 1e-12;

/// `W x + b`.
pub fn linear(x: &[f64], w: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != w.rows() {
        return Err(Error::shape(
            "linear",
            format!("W {}x{}", w.rows(), w.cols()),
            format!("b[{}]", b.len()),
        ));
    }
    let mut y = w.matvec(x)?;
    y.iter_mut().zip(b).for_each(|(y, b)| *y += b);
    Ok(y)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    // exp underflows to zero far below -700; keep the output strictly positive.
    y.max(f64::MIN_POSITIVE)
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid_scalar(v)).collect()
}

pub fn tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Max-shifted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `ln softmax(x)`, computed without forming the probabilities.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

fn same_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, a.len(), b.len()));
    }
    Ok(())
}

pub fn elementwise_mul(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    same_len("elementwise_mul", a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

pub fn add(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    same_len("add", a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x + y).collect())
}

pub fn abs_diff(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    same_len("abs_diff", a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect())
}

pub fn concat<S: AsRef<[f64]>>(parts: &[S]) -> Vec<f64> {
    parts
        .iter()
        .flat_map(|p| p.as_ref().iter().copied())
        .collect()
}

/// Cosine similarity; 0 when either norm is below [`COSINE_EPS`].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len("cosine", a, b)?;
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na < COSINE_EPS || nb < COSINE_EPS {
        return Ok(0.0);
    }
    Ok(dot(a, b) / (na * nb))
}

/// Column-wise maximum over the rows of `m`, with the winning row per
/// column. Ties go to the lowest row index.
pub fn max_over_time(m: &Matrix) -> Result<(Vec<f64>, Vec<usize>)> {
    if m.rows() == 0 {
        return Err(Error::EmptySequence("max_over_time"));
    }
    let mut best = m.row(0).to_vec();
    let mut arg = vec![0; m.cols()];
    for r in 1..m.rows() {
        for (c, &v) in m.row(r).iter().enumerate() {
            if v > best[c] {
                best[c] = v;
                arg[c] = r;
            }
        }
    }
    Ok((best, arg))
}

/// Inverted dropout. Returns the output and the multiplicative mask
/// (0 or `1/(1-p)` per entry; all ones outside training).
pub fn dropout<R: Rng + ?Sized>(
    x: &[f64],
    p: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!(
            "dropout probability {p} not in [0, 1)"
        )));
    }
    if !training || p == 0.0 {
        return Ok((x.to_vec(), vec![1.0; x.len()]));
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect();
    let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((y, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::rng::{stream, Stream};

    #[test]
    fn linear_cases() {
        let y = linear(&[3.0, -1.0], &Matrix::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(y, vec![3.0, -1.0]);
        let y = linear(&[7.0, 9.0], &Matrix::zeros(2, 2), &[1.0, 2.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0]);
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(
            linear(&[1.0, 1.0], &w, &[0.0, 0.0]).unwrap(),
            vec![3.0, 7.0]
        );
    }

    #[test]
    fn linear_shape_error_names_both_shapes() {
        let err = linear(&[1.0, 2.0, 3.0], &Matrix::zeros(2, 2), &[0.0, 0.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x2") && msg.contains("vector[3]"), "{msg}");
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        assert_eq!(tanh(&[0.0]), vec![0.0]);
        let s = sigmoid_scalar(-1e6);
        assert!(s > 0.0 && s <= 1e-300 && !s.is_nan());
        assert_eq!(sigmoid_scalar(1e6), 1.0);
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        for c in [-50.0, 0.0, 3.5, 1e4] {
            for v in softmax(&[c, c, c]) {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let s = softmax(&[1000.0, 0.0]);
        assert!((s[0] - 1.0).abs() < 1e-15 && s[1] >= 0.0 && s[1] < 1e-300);
        let ls = log_softmax(&[1000.0, 0.0]);
        assert!((ls[1] + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn vector_ops() {
        assert_eq!(
            elementwise_mul(&[1.0, 2.0], &[3.0, 4.0]).unwrap(),
            vec![3.0, 8.0]
        );
        assert_eq!(abs_diff(&[1.0, -2.0], &[3.0, 1.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(concat(&[vec![1.0], vec![2.0, 3.0]]), vec![1.0, 2.0, 3.0]);
        assert!(abs_diff(&[1.0], &[1.0, 2.0]).is_err());
        assert!(elementwise_mul(&[1.0], &[]).is_err());
    }

    #[test]
    fn cosine_cases() {
        let v = [0.3, -2.0, 5.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn max_over_time_cases() {
        let m = Matrix::from_rows(&[[1.0, 3.0], [2.0, 0.0]]).unwrap();
        assert_eq!(max_over_time(&m).unwrap(), (vec![2.0, 3.0], vec![1, 0]));
        let single = Matrix::from_rows(&[[4.0, -1.0, 2.0]]).unwrap();
        assert_eq!(max_over_time(&single).unwrap().0, vec![4.0, -1.0, 2.0]);
        let ties = Matrix::from_rows(&[[5.0, 5.0], [5.0, 5.0]]).unwrap();
        assert_eq!(max_over_time(&ties).unwrap(), (vec![5.0, 5.0], vec![0, 0]));
        assert!(matches!(
            max_over_time(&Matrix::zeros(0, 3)),
            Err(Error::EmptySequence(_))
        ));
    }

    #[test]
    fn dropout_cases() {
        let mut rng = stream(7, Stream::Dropout);
        let x = [1.0, -2.0, 3.0];
        assert_eq!(dropout(&x, 0.5, false, &mut rng).unwrap().0, x.to_vec());
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap().0, x.to_vec());
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&x, -0.1, true, &mut rng).is_err());

        let ones = [1.0; 4];
        let a = dropout(&ones, 0.5, true, &mut stream(11, Stream::Dropout)).unwrap();
        let b = dropout(&ones, 0.5, true, &mut stream(11, Stream::Dropout)).unwrap();
        assert_eq!(a, b);
        assert!(a.0.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
