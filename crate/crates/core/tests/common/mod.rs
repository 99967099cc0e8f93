//! Independent reference implementations shared by the oracle and
//! acceptance tests.

#![allow(dead_code)]

use netclass::cnn::{CnnConfig, CnnModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Direct valid convolution: for each output, sum over `(c, ki, kj)` in that
/// order from zero, then add the bias.
pub fn conv_oracle(input: &[f64], in_c: usize, side: usize, w: &[f64], b: &[f64], out_c: usize, k: usize) -> Vec<f64> {
    let os = side - k + 1;
    let mut out = vec![0.0; out_c * os * os];
    for f in 0..out_c {
        for i in 0..os {
            for j in 0..os {
                let mut s = 0.0;
                for c in 0..in_c {
                    for ki in 0..k {
                        for kj in 0..k {
                            s += w[((f * in_c + c) * k + ki) * k + kj] * input[(c * side + i + ki) * side + j + kj];
                        }
                    }
                }
                out[(f * os + i) * os + j] = s + b[f];
            }
        }
    }
    out
}

/// Cyclic Jacobi eigen-decomposition of a symmetric `d x d` matrix.
/// Returns eigenvalues descending and matching unit eigenvectors.
pub fn jacobi_eigen(a: &[f64], d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * d + j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| a[y * d + y].total_cmp(&a[x * d + x]));
    let values = order.iter().map(|&i| a[i * d + i]).collect();
    let vectors = order.iter().map(|&i| (0..d).map(|k| v[k * d + i]).collect()).collect();
    (values, vectors)
}

/// Sample covariance (divisor `n - 1`) of row-major `n x d` data.
pub fn covariance(data: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| data[i * d + j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += (data[i * d + a] - mean[a]) * (data[i * d + b] - mean[b]);
            }
        }
    }
    cov.iter_mut().for_each(|x| *x /= (n - 1) as f64);
    (mean, cov)
}

/// Largest deviation between `pca_project_rows` and a Jacobi-based
/// projection of the same data, after aligning component signs.
pub fn pca_vs_jacobi(data: &[f64], n: usize, d: usize, out_dim: usize) -> f64 {
    let proj = netclass::embed::pca_project_rows(data, n, d, out_dim).unwrap();
    let (mean, cov) = covariance(data, n, d);
    let (values, vectors) = jacobi_eigen(&cov, d);
    let mut worst: f64 = 0.0;
    for (x, y) in proj.eigenvalues.iter().zip(&values) {
        worst = worst.max((x - y).abs());
    }
    for c in 0..out_dim {
        let ours = &proj.components[c];
        let theirs = &vectors[c];
        let sign = if ours.iter().zip(theirs).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        for (a, b) in ours.iter().zip(theirs) {
            worst = worst.max((a - sign * b).abs());
        }
        for i in 0..n {
            let oracle: f64 = (0..d).map(|j| (data[i * d + j] - mean[j]) * theirs[j]).sum::<f64>() * sign;
            worst = worst.max((proj.coord(i, c) - oracle).abs());
        }
    }
    worst
}

pub fn random_matrix(r: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<f64> {
    // distinct column scales keep the spectrum well separated
    (0..n * d).map(|i| r.random_range(-1.0..1.0) * (1.0 + (i % d) as f64)).collect()
}

/// Outcome of comparing every analytic parameter gradient against central
/// differences.
#[derive(Debug)]
pub struct GradCheck {
    pub checked: usize,
    pub failed: Vec<String>,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-4)`.
    pub worst_rel: f64,
}

pub const FD_EPS: f64 = 1e-4;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Differences below this are treated as agreement whatever their relative size.
pub const GRAD_ABS_FLOOR: f64 = 1e-8;

/// Seeded model with Glorot weights and random biases in `[-0.1, 0.1]`, so
/// no unit sits exactly on a ReLU kink.
pub fn random_model(cfg: &CnnConfig) -> CnnModel {
    let mut model = CnnModel::new(cfg.clone()).unwrap();
    let mut r = rng(cfg.seed ^ 0xb1a5);
    for (t, name) in model.params.tensors_mut().into_iter().zip(netclass::cnn::PARAM_NAMES) {
        if name.ends_with("_b") {
            t.data.iter_mut().for_each(|x| *x = r.random_range(-0.1..0.1));
        }
    }
    model
}

pub fn grad_check(cfg: &CnnConfig, image: &[f64], label: usize) -> GradCheck {
    let model = random_model(cfg);
    let (_, grads) = model.loss_and_grads(image, label).unwrap();
    let mut probe = model.clone();
    let mut out = GradCheck { checked: 0, failed: Vec::new(), worst_rel: 0.0 };
    for t in 0..grads.tensors().len() {
        for i in 0..grads.tensors()[t].data.len() {
            let original = probe.params.tensors()[t].data[i];
            probe.params.tensors_mut()[t].data[i] = original + FD_EPS;
            let up = probe.loss_and_grads(image, label).unwrap().0;
            probe.params.tensors_mut()[t].data[i] = original - FD_EPS;
            let down = probe.loss_and_grads(image, label).unwrap().0;
            probe.params.tensors_mut()[t].data[i] = original;
            let numeric = (up - down) / (2.0 * FD_EPS);
            let analytic = grads.tensors()[t].data[i];
            let diff = (numeric - analytic).abs();
            let scale = numeric.abs().max(analytic.abs());
            out.checked += 1;
            // relative error, with the absolute floor folded into the scale
            let rel = diff / scale.max(GRAD_ABS_FLOOR / GRAD_REL_TOL);
            out.worst_rel = out.worst_rel.max(rel);
            if rel > GRAD_REL_TOL {
                out.failed.push(format!("{}[{i}]: analytic {analytic:e}, numeric {numeric:e}", netclass::cnn::PARAM_NAMES[t]));
            }
        }
    }
    out
}

/// Gradient-check configurations: the default kernel at 14x14, a 1x1 kernel
/// at 8x8, and a multi-channel variant.
pub fn grad_check_configs() -> Vec<CnnConfig> {
    let small = CnnConfig {
        input_size: 14,
        conv1_filters: 1,
        conv2_filters: 1,
        kernel: 3,
        fc_units: 4,
        activation: netclass::cnn::Activation::Tanh,
        ..Default::default()
    };
    vec![
        CnnConfig { seed: 11, ..small.clone() },
        CnnConfig { input_size: 8, kernel: 1, seed: 12, ..small.clone() },
        CnnConfig { conv1_filters: 2, conv2_filters: 3, seed: 13, ..small.clone() },
        CnnConfig { input_size: 20, kernel: 5, conv1_filters: 2, conv2_filters: 2, classes: 3, seed: 14, ..small.clone() },
        CnnConfig { conv1_filters: 2, conv2_filters: 2, activation: netclass::cnn::Activation::Relu, seed: 15, ..small },
    ]
}

pub fn random_image(r: &mut ChaCha8Rng, side: usize) -> Vec<f64> {
    (0..side * side).map(|_| r.random_range(0.0..1.0)).collect()
}

/// Largest relative deviation of `sgns_pair_gradient` from central
/// differences of `pair_objective`, over `trials` random pairs.
pub fn sgns_grad_worst(trials: usize, seed: u64) -> f64 {
    use netclass::embed::{pair_objective, sgns_pair_gradient, PairLabel};
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let eps = 1e-6;
    for t in 0..trials {
        let dim = 2 + t % 20;
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        for label in [PairLabel::Positive, PairLabel::Negative] {
            let (gv, gu) = sgns_pair_gradient(&v, &u, label);
            for (which, grad) in [(0, &gv), (1, &gu)] {
                for i in 0..dim {
                    let (mut up, mut down) = ((v.clone(), u.clone()), (v.clone(), u.clone()));
                    if which == 0 {
                        up.0[i] += eps;
                        down.0[i] -= eps;
                    } else {
                        up.1[i] += eps;
                        down.1[i] -= eps;
                    }
                    let numeric = (pair_objective(&up.0, &up.1, label) - pair_objective(&down.0, &down.1, label)) / (2.0 * eps);
                    let diff = (numeric - grad[i]).abs();
                    if diff > 1e-10 {
                        worst = worst.max(diff / numeric.abs().max(grad[i].abs()));
                    }
                }
            }
        }
    }
    worst
}

/// Result of counting walk transitions out of the heavy-edge source of a
/// weighted triangle.
#[derive(Debug)]
pub struct CycleCheck {
    pub draws: usize,
    pub observed: f64,
    pub expected: f64,
    pub sigma: f64,
}

impl CycleCheck {
    pub fn z(&self) -> f64 {
        (self.observed - self.expected).abs() / self.sigma
    }
}

/// Writes a directed 3-cycle carrying weights (1, 1, 8) in both directions,
/// loads it through a manifest, walks it and counts where the first `draws`
/// steps out of node 2 go. The heavy edge joins 2 and 0, so the reference
/// probability of `2 -> 0` comes from `transition_distribution`.
pub fn weighted_cycle_check(dir: &std::path::Path, draws: usize, seed: u64) -> CycleCheck {
    use netclass::experiments::parse_manifest;
    use netclass::graph::read_edge_list;
    use netclass::walker::{generate_corpus, transition_distribution, WalkConfig};

    let edges = "0,1,1\n1,2,1\n2,0,8\n1,0,1\n2,1,1\n0,2,8\n";
    std::fs::write(dir.join("cycle.edges"), edges).unwrap();
    let manifest = dir.join("cycle.csv");
    std::fs::write(&manifest, "path,label,directed\ncycle.edges,0,1\n").unwrap();
    let entries = parse_manifest(&std::fs::read_to_string(&manifest).unwrap(), dir, &manifest).unwrap();
    let (g, _) = read_edge_list(&entries[0].path, entries[0].directed).unwrap();
    assert!(g.is_directed());

    let expected = transition_distribution(&g, 2).unwrap().into_iter().find(|&(v, _)| v == 0).unwrap().1;
    let cfg = WalkConfig { num_walks: draws, walk_length: 10, ..Default::default() };
    let corpus = generate_corpus(&g, &cfg, &netclass::RngStream::new(seed, 0)).unwrap();
    let (mut total, mut heavy) = (0usize, 0usize);
    'outer: for w in &corpus.walks {
        for pair in w.windows(2) {
            if pair[0] == 2 {
                total += 1;
                heavy += usize::from(pair[1] == 0);
                if total == draws {
                    break 'outer;
                }
            }
        }
    }
    assert_eq!(total, draws, "corpus too short");
    CycleCheck {
        draws,
        observed: heavy as f64 / draws as f64,
        expected,
        sigma: (expected * (1.0 - expected) / draws as f64).sqrt(),
    }
}
