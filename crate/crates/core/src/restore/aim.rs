//! Adaptive iterative mean filter used to pre-fill missing pixels.
//!
//! Every missing pixel gets a budget of `ceil(d)` rounds, `d` being its
//! Euclidean distance to the nearest known pixel. Each round replaces every
//! missing pixel that still has budget by the mean of its 3x3 neighbours that
//! are known or were estimated in an earlier round. Rounds are Jacobi style:
//! a round reads only the previous round's values.

use crate::error::{check_dims, Error, Result};
use crate::image::{Image, SamplingMask};
use crate::par::{self, Execution};

pub fn aim_interpolate(corrupted: &Image, mask: &SamplingMask) -> Result<Image> {
    aim_interpolate_with(corrupted, mask, Execution::default())
}

pub fn aim_interpolate_with(corrupted: &Image, mask: &SamplingMask, exec: Execution) -> Result<Image> {
    check_dims(corrupted.dims(), mask.dims())?;
    if mask.known_count() == 0 {
        return Err(Error::UnrecoverableInput("no known pixels to interpolate from".into()));
    }
    let (w, h) = corrupted.dims();
    let known = mask.known();
    let mut budget: Vec<u32> = squared_distance_to_known(mask)
        .into_iter()
        .map(|d2| ceil_sqrt(d2) as u32)
        .collect();
    let mut value: Vec<f64> = corrupted
        .as_slice()
        .iter()
        .zip(known)
        .map(|(&v, &k)| if k { v } else { 0.0 })
        .collect();
    let mut valid = known.to_vec();

    let mut next_value = value.clone();
    let mut next_valid = valid.clone();
    while budget.iter().any(|&b| b > 0) {
        {
            let (value, valid, budget) = (&value, &valid, &budget);
            let mut rows: Vec<(&mut [f64], &mut [bool])> =
                next_value.chunks_mut(w).zip(next_valid.chunks_mut(w)).collect();
            par::for_each_row(exec, &mut rows, 1, |r, row| {
                let (out_v, out_ok) = &mut row[0];
                for c in 0..w {
                    let i = r * w + c;
                    if budget[i] == 0 {
                        continue;
                    }
                    let (mut sum, mut count) = (0.0, 0u32);
                    for rr in r.saturating_sub(1)..(r + 2).min(h) {
                        for cc in c.saturating_sub(1)..(c + 2).min(w) {
                            let j = rr * w + cc;
                            if j != i && valid[j] {
                                sum += value[j];
                                count += 1;
                            }
                        }
                    }
                    if count > 0 {
                        out_v[c] = sum / count as f64;
                        out_ok[c] = true;
                    }
                }
            });
        }
        value.copy_from_slice(&next_value);
        valid.copy_from_slice(&next_valid);
        budget.iter_mut().for_each(|b| *b = b.saturating_sub(1));
    }
    Image::new(w, h, value)
}

fn ceil_sqrt(v: u64) -> u64 {
    let s = v.isqrt();
    if s * s == v {
        s
    } else {
        s + 1
    }
}

/// Exact squared Euclidean distance from each pixel to the nearest known one
/// (zero at known pixels), by the separable lower-envelope method.
pub(crate) fn squared_distance_to_known(mask: &SamplingMask) -> Vec<u64> {
    let (w, h) = mask.dims();
    const INF: u64 = u64::MAX / 4;
    let mut grid: Vec<u64> = mask.known().iter().map(|&k| if k { 0 } else { INF }).collect();

    let mut f = Vec::new();
    let mut out = Vec::new();
    for c in 0..w {
        f.clear();
        f.extend((0..h).map(|r| grid[r * w + c]));
        lower_envelope(&f, &mut out);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for row in grid.chunks_mut(w) {
        f.clear();
        f.extend_from_slice(row);
        lower_envelope(&f, &mut out);
        row.copy_from_slice(&out);
    }
    grid
}

/// `out[q] = min_p (q - p)^2 + f[p]`, with `f` entries at or above `u64::MAX / 4`
/// treated as absent.
fn lower_envelope(f: &[u64], out: &mut Vec<u64>) {
    const INF: u64 = u64::MAX / 4;
    let n = f.len();
    out.clear();
    out.resize(n, INF);
    let sites: Vec<usize> = (0..n).filter(|&p| f[p] < INF).collect();
    if sites.is_empty() {
        return;
    }
    // parabola apexes and the boundaries between consecutive envelope pieces
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let meet = |p: usize, q: usize| -> f64 {
        let (pf, qf) = (p as f64, q as f64);
        ((f[q] as f64 + qf * qf) - (f[p] as f64 + pf * pf)) / (2.0 * (qf - pf))
    };
    for &q in &sites {
        while let Some(&p) = v.last() {
            if meet(p, q) <= z[z.len() - 1] {
                v.pop();
                z.pop();
            } else {
                break;
            }
        }
        if v.is_empty() {
            z.push(f64::NEG_INFINITY);
        } else {
            z.push(meet(*v.last().unwrap(), q));
        }
        v.push(q);
    }
    z.push(f64::INFINITY);
    let mut j = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let d = q.abs_diff(v[j]) as u64;
        *o = d * d + f[v[j]];
    }
}
