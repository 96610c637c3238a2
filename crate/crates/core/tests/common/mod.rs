#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::TAU;

pub use num_complex::Complex64 as C;

pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// The catalog written out directly from the closed forms, in dimension `n`.
pub fn starlike(j: usize, z: &[C]) -> Vec<C> {
    let one = c(1.0, 0.0);
    let mut w = z.to_vec();
    match j {
        1 => w[0] = z[0] / ((one - z[0]) * (one - z[0])),
        2 => w[0] = z[0] * (one + z[1]) * (one + z[1]),
        3 => {
            w[0] = z[0] * (one + z[1]) / (one - z[1]);
            w[1] = z[1] / (one - z[1]);
        }
        4 => w[0] = z[0] + z[1] * z[1],
        5 => {
            w[0] = (z[0] - z[0] * z[1] + z[1] * z[1]) / (one - z[1]);
            w[1] = z[1] / (one - z[1]);
        }
        6 => w[0] = z[0] + z[1] * z[2],
        7 => {
            w[0] = z[0] + z[1] * z[2] * ((one + z[1]).ln() - (one + z[2]).ln()) / (z[1] - z[2]);
            w[1] = z[1] / (one + z[1]);
            w[2] = z[2] / (one + z[2]);
        }
        _ => unreachable!(),
    }
    w
}

pub fn generator(j: usize, z: &[C]) -> Vec<C> {
    let one = c(1.0, 0.0);
    let mut w: Vec<C> = z.iter().map(|v| -v).collect();
    match j {
        1 => w[0] = -z[0] * (z[0] - one) / (-one - z[0]),
        2 => w[0] = -z[0] * (z[1] - one) / (-one - z[1]),
        3 => {
            w[0] = -z[0] * (z[1] - one) / (-one - z[1]);
            w[1] = -z[1] * (one - z[1]);
        }
        4 => w[0] = -z[0] + z[1] * z[1],
        5 => {
            w[0] = -z[0] + z[1] * z[1];
            w[1] = -z[1] * (one - z[1]);
        }
        6 => w[0] = -z[0] + z[1] * z[2],
        7 => {
            w[0] = -z[0] + z[1] * z[2];
            w[1] = -z[1] * (one + z[1]);
            w[2] = -z[2] * (one + z[2]);
        }
        _ => unreachable!(),
    }
    w
}

pub fn min_dim(j: usize) -> usize {
    if j >= 6 {
        3
    } else {
        2
    }
}

/// Multi-indices of total degree `<= degree` in `n` variables.
pub fn indices(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p: Vec<u32>| {
                let used: u32 = p.iter().sum();
                (0..=degree - used).map(move |e| {
                    let mut q = p.clone();
                    q.push(e);
                    q
                })
            })
            .collect();
    }
    out
}

/// Taylor coefficients by the discrete Cauchy formula on the torus of radius `r`.
///
/// Returns `coeffs[component][alpha]`. Aliasing is `O(r^nodes)`.
pub fn taylor(
    f: &dyn Fn(&[C]) -> Vec<C>,
    n: usize,
    degree: u32,
    r: f64,
    nodes: usize,
) -> Vec<BTreeMap<Vec<u32>, C>> {
    let total = nodes.pow(n as u32);
    let mut samples = Vec::with_capacity(total);
    for flat in 0..total {
        let mut k = vec![0usize; n];
        let mut rem = flat;
        for kv in k.iter_mut() {
            *kv = rem % nodes;
            rem /= nodes;
        }
        let z: Vec<C> = k.iter().map(|kv| C::from_polar(r, TAU * *kv as f64 / nodes as f64)).collect();
        samples.push((k, f(&z)));
    }
    let m = samples[0].1.len();
    let mut out = vec![BTreeMap::new(); m];
    for alpha in indices(n, degree) {
        let scale = r.powi(alpha.iter().sum::<u32>() as i32) * total as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = c(0.0, 0.0);
            for (k, v) in &samples {
                let phase: f64 = k.iter().zip(&alpha).map(|(kv, a)| *kv as f64 * *a as f64).sum();
                acc += v[i] * C::from_polar(1.0, -TAU * phase / nodes as f64);
            }
            o.insert(alpha.clone(), acc / scale);
        }
    }
    out
}

/// Naive truncated product of sparse series.
pub fn series_mul(a: &BTreeMap<Vec<u32>, C>, b: &BTreeMap<Vec<u32>, C>, degree: u32) -> BTreeMap<Vec<u32>, C> {
    let mut out = BTreeMap::new();
    for (x, u) in a {
        for (y, v) in b {
            let s: Vec<u32> = x.iter().zip(y).map(|(p, q)| p + q).collect();
            if s.iter().sum::<u32>() <= degree {
                *out.entry(s).or_insert(c(0.0, 0.0)) += u * v;
            }
        }
    }
    out
}

/// `e^t a_{(0,2)}(t)` for `H4` on `[0, 1)` followed by `-z`: `∫_0^{min(t,1)} e^{-s} ds`.
pub fn h4_switch_integral(t: f64) -> f64 {
    1.0 - (-t.min(1.0)).exp()
}

/// Points of the closed polydisc of radius `r_max`, deterministic.
pub fn lattice_points(n: usize, count: usize, r_max: f64) -> Vec<Vec<C>> {
    (0..count)
        .map(|i| {
            (0..n)
                .map(|k| {
                    let t = ((i * 7 + k * 13) % 17) as f64 / 16.0;
                    let a = ((i * 11 + k * 5) % 23) as f64 / 23.0 * TAU;
                    C::from_polar(r_max * t, a)
                })
                .collect()
        })
        .collect()
}
