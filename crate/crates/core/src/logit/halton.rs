use serde::{Deserialize, Serialize};

use crate::prelude::*;
use crate::{Error, Result};

/// Bases used for successive random-coefficient dimensions.
pub const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    r
}

/// Radical-inverse sequence of `base` at indices `skip + 1 ..= skip + n`.
pub fn halton(base: u64, n: usize, skip: usize) -> Result<Vec<f64>> {
    if base < 2 || !(2..base).take_while(|d| d * d <= base).all(|d| !base.is_multiple_of(d)) {
        return Err(Error::arg(format!("Halton base must be a prime, got {base}")));
    }
    Ok((1..=n as u64).map(|i| radical_inverse(i + skip as u64, base)).collect())
}

/// Quasi-random simulation nodes: uniform Halton points and their standard
/// normal transforms, laid out `[(individual * n_draws + draw) * n_dims + dim]`.
/// Individual `i` owns the contiguous block `i*n_draws .. (i+1)*n_draws` of
/// each dimension's sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaltonDraws {
    pub n_individuals: usize,
    pub n_draws: usize,
    pub n_dims: usize,
    pub bases: Vec<u64>,
    pub skip: usize,
    pub uniform: Vec<f64>,
    pub normals: Vec<f64>,
}

impl HaltonDraws {
    #[inline]
    pub fn normal(&self, individual: usize, draw: usize, dim: usize) -> f64 {
        self.normals[(individual * self.n_draws + draw) * self.n_dims + dim]
    }

    #[inline]
    pub fn uniform(&self, individual: usize, draw: usize, dim: usize) -> f64 {
        self.uniform[(individual * self.n_draws + draw) * self.n_dims + dim]
    }
}

pub fn normal_draws(n_individuals: usize, n_draws: usize, dims: usize, skip: usize) -> Result<HaltonDraws> {
    if dims > PRIMES.len() {
        return Err(Error::arg(format!("at most {} dimensions are supported", PRIMES.len())));
    }
    let total = n_individuals * n_draws;
    let mut uniform = vec![0.0; total * dims];
    for (d, &base) in PRIMES.iter().take(dims).enumerate() {
        for (j, u) in halton(base, total, skip)?.into_iter().enumerate() {
            uniform[j * dims + d] = u;
        }
    }
    let normals = uniform.iter().map(|&u| inverse_normal_cdf(u)).collect();
    Ok(HaltonDraws { n_individuals, n_draws, n_dims: dims, bases: PRIMES[..dims].to_vec(), skip, uniform, normals })
}

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative accuracy).
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}
