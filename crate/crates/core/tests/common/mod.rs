//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Least squares through the normal equations `X'X b = X'y`, solved by
/// Gaussian elimination with partial pivoting. Returns `(beta, r_squared)`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let n = y.len();
    let p = x[0].len() + 1;
    let row = |i: usize| {
        let mut r = vec![1.0];
        r.extend_from_slice(&x[i]);
        r
    };
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..n {
        let r = row(i);
        for j in 0..p {
            for k in 0..p {
                a[j][k] += r[j] * r[k];
            }
            a[j][p] += r[j] * y[i];
        }
    }
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for i in 0..n {
        let fit: f64 = row(i).iter().zip(&beta).map(|(a, b)| a * b).sum();
        ssr += (y[i] - fit).powi(2);
        sst += (y[i] - mean).powi(2);
    }
    (beta, 1.0 - ssr / sst)
}

/// Random well-conditioned regression problem with `k` predictors.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let coef: Vec<f64> = (0..=k).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| {
            coef[0]
                + r.iter().zip(&coef[1..]).map(|(a, b)| a * b).sum::<f64>()
                + rng.random_range(-3.0..3.0)
        })
        .collect();
    (x, y)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, left, eps / 2.0, depth - 1) + adaptive(f, m, b, right, eps / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature on a finite interval.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    // split so that narrow peaks are not missed by the first estimate
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            adaptive(f, lo, hi, simpson(f, lo, hi), 1e-14, 40)
        })
        .sum()
}

/// Integral of `f` over `[from, inf)` via `x = from + u / (1 - u)`.
pub fn integrate_to_inf(f: &dyn Fn(f64) -> f64, from: f64) -> f64 {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let x = from + u / (1.0 - u);
        f(x) / ((1.0 - u) * (1.0 - u))
    };
    integrate(&g, 0.0, 1.0)
}

/// P(T > t) for Student's t, from the unnormalized density.
pub fn t_tail_numeric(t: f64, df: f64) -> f64 {
    let pdf = |x: f64| (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let half = integrate_to_inf(&pdf, 0.0);
    let total = 2.0 * half;
    if t >= 0.0 {
        integrate_to_inf(&pdf, t) / total
    } else {
        1.0 - integrate_to_inf(&pdf, -t) / total
    }
}

/// P(F > f) for the F(d1, d2) distribution, from the unnormalized density.
pub fn f_tail_numeric(f: f64, d1: f64, d2: f64) -> f64 {
    let pdf = |x: f64| {
        if x <= 0.0 {
            return if d1 == 2.0 { 1.0 } else { 0.0 };
        }
        x.powf(d1 / 2.0 - 1.0) * (1.0 + d1 * x / d2).powf(-(d1 + d2) / 2.0)
    };
    let head = integrate(&pdf, 0.0, f);
    let tail = integrate_to_inf(&pdf, f);
    tail / (head + tail)
}

/// Shortest 8-neighbour path lengths by repeated relaxation until nothing changes.
pub fn bellman_ford_field(rows: usize, cols: usize, walkable: &[bool], goals: &[usize]) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; rows * cols];
    for &g in goals {
        d[g] = 0.0;
    }
    loop {
        let mut changed = false;
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if !walkable[i] {
                    continue;
                }
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                            continue;
                        }
                        let j = nr as usize * cols + nc as usize;
                        if !walkable[j] {
                            continue;
                        }
                        let w = if dr != 0 && dc != 0 { 2f64.sqrt() } else { 1.0 };
                        if d[j] + w < d[i] - 1e-12 {
                            d[i] = d[j] + w;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return d;
        }
    }
}

/// Random mask where every walkable cell connects to the goal row 0:
/// a full first row plus random cells that get linked upward.
pub fn random_connected_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> (Vec<bool>, Vec<usize>) {
    let mut walkable: Vec<bool> = (0..rows * cols).map(|_| rng.random_bool(0.65)).collect();
    for c in 0..cols {
        walkable[c] = true;
    }
    // keep only cells reachable from row 0 (flood fill over 8-neighbours)
    let mut reach = vec![false; rows * cols];
    let mut stack: Vec<usize> = (0..cols).collect();
    while let Some(i) = stack.pop() {
        if reach[i] {
            continue;
        }
        reach[i] = true;
        let (r, c) = ((i / cols) as i64, (i % cols) as i64);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                    continue;
                }
                let j = nr as usize * cols + nc as usize;
                if walkable[j] && !reach[j] {
                    stack.push(j);
                }
            }
        }
    }
    let goals: Vec<usize> = (0..cols).filter(|_| rng.random_bool(0.5)).collect();
    let goals = if goals.is_empty() { vec![0] } else { goals };
    (reach, goals)
}
