//! Synthetic datasets for tests, benchmarks and the browser demo.

use crate::error::Result;
use crate::rng::RunRng;
use crate::tensor::Tensor;

/// Two Gaussian clusters in the plane whose centers sit `separation`
/// standard deviations apart on each axis, placed on the diagonal.
/// Returns features [n, 2] and binary targets [n, 1], class order
/// shuffled.
pub fn gaussian_blobs(n: usize, separation: f64, rng: &mut RunRng) -> Result<(Tensor, Tensor)> {
    let half_gap = separation / 2.0;
    let mut rows: Vec<([f64; 2], f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as f64;
        let sign = if class == 0.0 { -1.0 } else { 1.0 };
        let x = sign * half_gap + rng.normal();
        let y = sign * half_gap + rng.normal();
        rows.push(([x, y], class));
    }
    rng.shuffle(&mut rows);
    pack2(rows)
}

/// The four XOR corners with their parity labels.
pub fn xor_four() -> Result<(Tensor, Tensor)> {
    let x = Tensor::new(vec![4, 2], vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0])?;
    let y = Tensor::new(vec![4, 1], vec![0.0, 1.0, 1.0, 0.0])?;
    Ok((x, y))
}

/// Noisy clusters at the four XOR corners, labeled by parity. Returns
/// features [n, 2] and binary targets [n, 1].
pub fn xor_blobs(n: usize, noise: f64, rng: &mut RunRng) -> Result<(Tensor, Tensor)> {
    let corners = [(0.0, 0.0, 0.0), (0.0, 1.0, 1.0), (1.0, 0.0, 1.0), (1.0, 1.0, 0.0)];
    let mut rows: Vec<([f64; 2], f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let (cx, cy, label) = corners[i % 4];
        rows.push((
            [cx + noise * rng.normal(), cy + noise * rng.normal()],
            label,
        ));
    }
    rng.shuffle(&mut rows);
    pack2(rows)
}

/// Two interleaved spirals, one per class. Returns features [n, 2] and
/// binary targets [n, 1].
pub fn spiral(n: usize, noise: f64, rng: &mut RunRng) -> Result<(Tensor, Tensor)> {
    let mut rows: Vec<([f64; 2], f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let t = (i / 2) as f64 / ((n / 2).max(1) as f64);
        let angle = t * 3.0 * std::f64::consts::PI + class as f64 * std::f64::consts::PI;
        let radius = 0.2 + t;
        rows.push((
            [
                radius * angle.cos() + noise * rng.normal(),
                radius * angle.sin() + noise * rng.normal(),
            ],
            class as f64,
        ));
    }
    rng.shuffle(&mut rows);
    pack2(rows)
}

/// Multiclass point cloud: each class gets a random center of norm
/// roughly `spread` in `features` dimensions, and rows scatter around
/// their center with unit noise. Returns features [n, features] and
/// one-hot targets [n, classes], rows shuffled but balanced within one
/// row per class.
pub fn shifted_multiclass(
    n: usize,
    classes: usize,
    features: usize,
    spread: f64,
    rng: &mut RunRng,
) -> Result<(Tensor, Tensor)> {
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..features).map(|_| spread * rng.normal()).collect())
        .collect();
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let point = centers[class]
            .iter()
            .map(|c| c + rng.normal())
            .collect();
        rows.push((point, class));
    }
    rng.shuffle(&mut rows);

    let mut x = Vec::with_capacity(n * features);
    let mut y = vec![0.0; n * classes];
    for (i, (point, class)) in rows.iter().enumerate() {
        x.extend_from_slice(point);
        y[i * classes + class] = 1.0;
    }
    Ok((
        Tensor::new(vec![n, features], x)?,
        Tensor::new(vec![n, classes], y)?,
    ))
}

fn pack2(rows: Vec<([f64; 2], f64)>) -> Result<(Tensor, Tensor)> {
    let n = rows.len();
    let mut x = Vec::with_capacity(n * 2);
    let mut y = Vec::with_capacity(n);
    for (point, label) in rows {
        x.extend_from_slice(&point);
        y.push(label);
    }
    Ok((Tensor::new(vec![n, 2], x)?, Tensor::new(vec![n, 1], y)?))
}
