//! Linear probe: ridge least squares on scene vectors, thresholded at 0.5.

#![allow(dead_code)]

use groundgram::scenegen::Corpus;

/// Solve `(XᵀX + λI) w = Xᵀy` by Cholesky.
fn ridge(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let d = x[0].len();
    let mut a = vec![vec![0.0; d]; d];
    let mut r = vec![0.0; d];
    for (row, &t) in x.iter().zip(y) {
        for i in 0..d {
            r[i] += row[i] * t;
            for j in 0..=i {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        a[i][i] += lambda;
    }
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut u = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l[i][k] * u[k]).sum();
        u[i] = (r[i] - s) / l[i][i];
    }
    let mut w = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|k| l[k][i] * w[k]).sum();
        w[i] = (u[i] - s) / l[i][i];
    }
    w
}

/// Held-out accuracy of per-slot presence probes over the corpus scenes,
/// using degraded vectors (`degraded = true`) or label vectors.
pub fn presence_probe_accuracy(corpus: &Corpus, degraded: bool) -> f64 {
    let mut seen = std::collections::BTreeSet::new();
    let mut feats = Vec::new();
    let mut targets = Vec::new();
    for it in &corpus.items {
        if !seen.insert(it.scene_id) {
            continue;
        }
        let mut f = if degraded { it.degraded.clone() } else { it.label.clone() };
        f.push(1.0);
        feats.push(f);
        targets.push(corpus.layout.presence(&it.label));
    }
    let n_train = feats.len() * 7 / 10;
    let slots = corpus.layout.slots;
    let (mut correct, mut total) = (0usize, 0usize);
    for s in 0..slots {
        let y: Vec<f64> = targets[..n_train].iter().map(|t| if t[s] { 1.0 } else { 0.0 }).collect();
        let w = ridge(&feats[..n_train], &y, 1.0);
        for (f, t) in feats[n_train..].iter().zip(&targets[n_train..]) {
            let p: f64 = f.iter().zip(&w).map(|(a, b)| a * b).sum();
            correct += usize::from((p > 0.5) == t[s]);
            total += 1;
        }
    }
    correct as f64 / total as f64
}
