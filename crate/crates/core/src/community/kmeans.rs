use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::seed;

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub assignment: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squares after each update step.
    pub inertia: Vec<f64>,
}

pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_row(p: &[f64], flat: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    'rows: for (k, c) in flat.chunks_exact(p.len()).enumerate() {
        // Partial sums only grow, so a row can be abandoned once it reaches
        // the best distance without changing the result.
        let mut d = 0.0;
        for (xs, ys) in p.chunks(4).zip(c.chunks(4)) {
            for (x, y) in xs.iter().zip(ys) {
                d += (x - y) * (x - y);
            }
            if d >= best_d {
                continue 'rows;
            }
        }
        best_d = d;
        best = k;
    }
    best
}

/// Index of the closest row of `centroids`; ties go to the lowest index.
pub fn nearest_centroid(point: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> usize {
    if let (Some(p), Some(flat)) = (point.as_slice(), centroids.as_slice()) {
        if !p.is_empty() {
            return nearest_row(p, flat);
        }
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn plus_plus(points: ArrayView2<'_, f64>, k: usize, rng: &mut seed::Rng) -> Array2<f64> {
    let p = points.nrows();
    let mut chosen = vec![rng.random_range(0..p)];
    let mut d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = p - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            // All points coincide with a centre: any unused index will do.
            let free: Vec<usize> = (0..p).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, r) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, points.row(next)));
        }
    }
    points.select(Axis(0), &chosen)
}

/// Lloyd's algorithm from k-means++ seeding.
///
/// Runs until the assignment stops changing or [`MAX_ITERATIONS`]. An empty
/// cluster is re-seeded with the point farthest from its own centroid, so
/// every returned cluster is non-empty.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, seed: u64, exec: Exec) -> Result<KMeans> {
    let p = points.nrows();
    if k == 0 || p < k {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {p} points"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut assignment = vec![usize::MAX; p];
    let mut inertia = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let next = exec.map(p, |i| nearest_centroid(points.row(i), centroids.view()));
        if next == assignment {
            break;
        }
        assignment = next;
        fill_empty(points, &mut assignment, &centroids, k);
        centroids = means(points, &assignment, k);
        inertia.push(wcss(points, &assignment, &centroids));
    }
    Ok(KMeans {
        assignment,
        centroids,
        inertia,
    })
}

fn fill_empty(
    points: ArrayView2<'_, f64>,
    assignment: &mut [usize],
    centroids: &Array2<f64>,
    k: usize,
) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        // Farthest point among clusters that can spare one.
        let donor = (0..points.nrows())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&i, &j| {
                let di = sq_dist(points.row(i), centroids.row(assignment[i]));
                let dj = sq_dist(points.row(j), centroids.row(assignment[j]));
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .expect("p >= k guarantees a cluster with two members");
        assignment[donor] = empty;
    }
}

pub(crate) fn means(points: ArrayView2<'_, f64>, assignment: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (r, &a) in points.rows().into_iter().zip(assignment) {
        sums.row_mut(a).scaled_add(1.0, &r);
        counts[a] += 1;
    }
    for (mut row, &c) in sums.rows_mut().into_iter().zip(&counts) {
        if c > 0 {
            row /= c as f64;
        }
    }
    sums
}

pub fn wcss(points: ArrayView2<'_, f64>, assignment: &[usize], centroids: &Array2<f64>) -> f64 {
    points
        .rows()
        .into_iter()
        .zip(assignment)
        .map(|(r, &a)| sq_dist(r, centroids.row(a)))
        .sum()
}
