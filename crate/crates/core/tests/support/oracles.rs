//! Independent reference implementations used to check the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simgrade::ProgramEmbedding;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (unit(a), unit(b));
    a.iter().zip(&b).map(|(x, y)| x * y).sum()
}

pub fn embeddings(vectors: &[Vec<f64>]) -> Vec<ProgramEmbedding> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| ProgramEmbedding {
            submission_id: format!("s{i:04}"),
            vector: v.clone(),
        })
        .collect()
}

pub fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if v.iter().any(|x| x.abs() > 1e-3) {
                break v;
            }
        })
        .collect()
}

/// Points scattered tightly around `k` mutually distant directions, each
/// direction used at least once. Returns the points and their bundle.
pub fn direction_bundles(rng: &mut ChaCha8Rng, n: usize, k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let centers: Vec<Vec<f64>> = loop {
        let c: Vec<Vec<f64>> = random_vectors(rng, k, dim).iter().map(|v| unit(v)).collect();
        let spread = (0..k).all(|i| (0..i).all(|j| cos(&c[i], &c[j]) < 0.3));
        if spread {
            break c;
        }
    };
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    // Shuffle so bundle membership is not tied to position.
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    let points = labels
        .iter()
        .map(|&l| {
            let scale = rng.random_range(0.5..2.0);
            centers[l]
                .iter()
                .map(|c| scale * (c + rng.random_range(-0.05..0.05)))
                .collect()
        })
        .collect();
    (points, labels)
}

/// Partition as sorted groups of member indices, for label-free comparison.
pub fn canonical(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .filter(|g: &Vec<usize>| !g.is_empty())
        .collect();
    groups.sort();
    groups
}

/// Exhaustive spherical k-means optimum: the partition into exactly `k`
/// non-empty groups maximizing the sum of resultant lengths of unit vectors.
pub fn brute_force_kmeans(points: &[Vec<f64>], k: usize) -> (Vec<Vec<usize>>, f64) {
    let n = points.len();
    let units: Vec<Vec<f64>> = points.iter().map(|p| unit(p)).collect();
    let dim = units[0].len();
    let mut labels = vec![0usize; n];
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    loop {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut used = vec![false; k];
        for (u, &l) in units.iter().zip(&labels) {
            used[l] = true;
            for (s, x) in sums[l].iter_mut().zip(u) {
                *s += x;
            }
        }
        if used.iter().all(|&u| u) {
            let score: f64 = sums.iter().map(|s| s.iter().map(|x| x * x).sum::<f64>().sqrt()).sum();
            if score > best.1 {
                best = (canonical(&labels), score);
            }
        }
        // Odometer increment over k^n labelings.
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Greedy nearest-neighbour ordering written independently: candidates are
/// kept sorted by id and a later candidate only wins on a strictly higher score.
pub fn greedy_oracle(ids: &[String], start: usize, sim: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..ids.len()).filter(|&i| i != start).collect();
    remaining.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    let mut order = vec![start];
    while !remaining.is_empty() {
        let cur = *order.last().unwrap();
        let mut pick = 0;
        for c in 1..remaining.len() {
            if sim(cur, remaining[c]) > sim(cur, remaining[pick]) {
                pick = c;
            }
        }
        order.push(remaining.remove(pick));
    }
    order
}

pub fn cycle_length(points: &[[f64; 2]], tour: &[usize]) -> f64 {
    let n = tour.len();
    (0..n)
        .map(|i| {
            let (a, b) = (points[tour[i]], points[tour[(i + 1) % n]]);
            (a[0] - b[0]).hypot(a[1] - b[1])
        })
        .sum()
}

/// Optimal closed tour length by enumerating every permutation with point 0 fixed.
pub fn tsp_optimum(points: &[[f64; 2]]) -> f64 {
    fn permute(rest: &mut Vec<usize>, k: usize, points: &[[f64; 2]], best: &mut f64) {
        if k == rest.len() {
            let mut tour = vec![0];
            tour.extend_from_slice(rest);
            *best = best.min(cycle_length(points, &tour));
            return;
        }
        for i in k..rest.len() {
            rest.swap(k, i);
            permute(rest, k + 1, points, best);
            rest.swap(k, i);
        }
    }
    let mut rest: Vec<usize> = (1..points.len()).collect();
    let mut best = f64::INFINITY;
    permute(&mut rest, 0, points, &mut best);
    best
}

/// Central finite difference of `f` along coordinate `i`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}
