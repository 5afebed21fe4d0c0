//! Checks shared by the property tests and the acceptance target.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use flowlab::flow::{Activation, FlowNetwork};
use flowlab::numlin::{slogdet, svd, sym_eig, Matrix};
use flowlab::optimize::{load_checkpoint, save_checkpoint, Model, Trainable};
use flowlab::realnvp::RealNvp;
use flowlab::rng::GaussianRng;

pub type Check = Result<String, String>;

fn orthogonality_error(m: &Matrix) -> f64 {
    m.t_matmul(m).unwrap().sub(&Matrix::identity(m.rows())).unwrap().frobenius_norm()
}

/// Largest-magnitude entry positive, lowest row on exact ties.
fn sign_ok(col: &[f64]) -> bool {
    let mut best = 0;
    for (i, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = i;
        }
    }
    col[best] >= 0.0
}

/// SVD, slogdet and sym_eig on `count` N(0,1) matrices with D cycling 1..=8.
pub fn numlin_suite(count: usize, seed: u64) -> Check {
    let mut rng = GaussianRng::new(seed);
    let (mut recon, mut orth, mut logdet, mut eig) = (0f64, 0f64, 0f64, 0f64);
    for k in 0..count {
        let n = k % 8 + 1;
        let a = rng.normal_matrix(n, n);
        let f = svd(&a).map_err(|e| format!("svd #{k}: {e}"))?;

        let scale = a.frobenius_norm().max(1.0);
        recon = recon.max(f.reconstruct().sub(&a).unwrap().frobenius_norm() / scale);
        orth = orth.max(orthogonality_error(&f.u)).max(orthogonality_error(&f.v));
        if f.s.windows(2).any(|w| w[0] < w[1]) || f.s.iter().any(|&s| s < 0.0) {
            return Err(format!("matrix #{k}: singular values not descending: {:?}", f.s));
        }
        if (0..n).any(|j| !sign_ok(&f.u.column(j))) {
            return Err(format!("matrix #{k}: sign convention violated"));
        }

        // slogdet against the SVD: |det| = Π s, sign = det U · det V.
        let (sign, lad) = slogdet(&a).map_err(|e| e.to_string())?;
        let (su, _) = slogdet(&f.u).unwrap();
        let (sv, _) = slogdet(&f.v).unwrap();
        let from_svd: f64 = f.s.iter().map(|s| s.ln()).sum();
        if sign != su * sv {
            return Err(format!("matrix #{k}: slogdet sign {sign} vs {}", su * sv));
        }
        logdet = logdet.max((lad - from_svd).abs());

        let ata = a.t_matmul(&a).unwrap();
        let (lam, vecs) = sym_eig(&ata).map_err(|e| format!("eig #{k}: {e}"))?;
        for (i, &l) in lam.iter().enumerate() {
            let s2 = f.s[i] * f.s[i];
            eig = eig.max((l - s2).abs() / s2.max(1e-300).max(f.s[0] * f.s[0] * 1e-16));
            let v = vecs.column(i);
            let av = ata.matvec(&v).unwrap();
            let resid = av.iter().zip(&v).map(|(x, y)| (x - l * y).powi(2)).sum::<f64>().sqrt();
            if resid > 1e-9 * ata.frobenius_norm().max(1.0) {
                return Err(format!("matrix #{k}: eigen residual {resid:e}"));
            }
            if !sign_ok(&v) {
                return Err(format!("matrix #{k}: eigenvector sign convention violated"));
            }
        }
        orth = orth.max(orthogonality_error(&vecs));
    }
    let summary = format!(
        "{count} matrices: recon {recon:.1e}, orth {orth:.1e}, logdet {logdet:.1e}, eig rel {eig:.1e}"
    );
    if recon <= 1e-10 && orth <= 1e-10 && logdet <= 1e-8 && eig <= 1e-8 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

pub fn perturbed_dense(dim: usize, layers: usize, act: Activation, seed: u64) -> FlowNetwork {
    let mut net = FlowNetwork::random(dim, layers, act, seed).unwrap();
    let mut rng = GaussianRng::new(seed ^ 0x5eed);
    let p: Vec<f64> = net.params().iter().map(|v| v + 0.1 * rng.normal()).collect();
    net.set_params(&p).unwrap();
    net
}

pub fn perturbed_realnvp(dim: usize, seed: u64) -> RealNvp {
    let mut nvp = RealNvp::stack(dim, 4, 1, 8, seed).unwrap();
    let mut rng = GaussianRng::new(seed ^ 0x5eed);
    let p: Vec<f64> = Trainable::params(&nvp).iter().map(|v| v + 0.1 * rng.normal()).collect();
    Trainable::set_params(&mut nvp, &p).unwrap();
    nvp
}

/// save → load must reproduce every parameter bit for bit.
pub fn checkpoint_round_trip(dir: &Path) -> Check {
    let mut n = 0;
    for seed in 0..10u64 {
        let models: [Model; 3] = [
            perturbed_dense(3, 4, Activation::Asinh, seed).into(),
            perturbed_dense(2, 2, Activation::Softplus, seed).into(),
            perturbed_realnvp(3, seed).into(),
        ];
        for m in models {
            let path = dir.join(format!("rt-{seed}-{n}.ckpt"));
            save_checkpoint(&path, &m).map_err(|e| e.to_string())?;
            let back = load_checkpoint(&path).map_err(|e| e.to_string())?;
            let (a, b) = match (&m, &back) {
                (Model::Dense(a), Model::Dense(b)) => (a.params(), b.params()),
                (Model::RealNvp(a), Model::RealNvp(b)) => (Trainable::params(a), Trainable::params(b)),
                _ => return Err(format!("model kind changed for {}", path.display())),
            };
            if a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) || a.len() != b.len() {
                return Err(format!("{}: parameters differ after reload", path.display()));
            }
            n += 1;
        }
    }
    Ok(format!("{n} checkpoints bit-exact"))
}

pub fn flowlab_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_flowlab"))
}

pub fn flowlab(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(flowlab_bin()).current_dir(dir).args(args).output().expect("spawn flowlab")
}

/// generate → train → project → sample → plot in `dir`; returns the
/// produced file names.
pub fn run_pipeline(dir: &Path, arch: &str) -> Result<Vec<&'static str>, String> {
    let steps: [&[&str]; 5] = [
        &["generate", "--dataset", "sine", "--n", "600", "--seed", "1", "--out", "d.csv"],
        &[
            "train",
            "--data",
            "d.csv",
            "--arch",
            arch,
            "--layers",
            "2",
            "--hidden",
            "8",
            "--alpha",
            if arch == "dense" { "1e-3" } else { "0" },
            "--batch-size",
            "100",
            "--epochs",
            "5",
            "--seed",
            "1",
            "--out",
            "m.ckpt",
            "--metrics",
            "m.csv",
        ],
        &["project", "--model", "m.ckpt", "--data", "d.csv", "--k", "2", "--out", "proj.csv"],
        &["sample", "--model", "m.ckpt", "--n", "50", "--seed", "2", "--out", "s.csv"],
        &["plot", "--in", "proj.csv", "--out", "fig.svg"],
    ];
    for args in steps {
        let out = flowlab(dir, args);
        if !out.status.success() {
            return Err(format!(
                "`flowlab {}` exited {:?}: {}",
                args.join(" "),
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            ));
        }
    }
    Ok(vec!["d.csv", "m.ckpt", "m.csv", "proj.csv", "s.csv", "fig.svg"])
}

/// Two seeded pipelines in fresh directories must agree byte for byte.
pub fn cli_reproducible(root: &Path) -> Check {
    let mut files = 0;
    for arch in ["dense", "realnvp"] {
        let a = root.join(format!("{arch}-a"));
        let b = root.join(format!("{arch}-b"));
        std::fs::create_dir_all(&a).unwrap();
        std::fs::create_dir_all(&b).unwrap();
        let names = run_pipeline(&a, arch)?;
        run_pipeline(&b, arch)?;
        for name in names {
            let x = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
            let y = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
            if x != y {
                return Err(format!("{arch}: {name} differs between runs"));
            }
            files += 1;
        }
    }
    Ok(format!("{files} output files byte-identical across repeated runs"))
}

/// Analytic vs central-difference gradients of the full regularized loss
/// over `count` random dense configurations with D ≤ 3 and L ≤ 4.
pub fn gradient_suite(count: usize, seed: u64) -> Check {
    let mut rng = GaussianRng::new(seed);
    let mut worst = 0f64;
    for k in 0..count {
        let dim = 1 + rng.below(3);
        let layers = 1 + rng.below(4);
        let act = if rng.below(2) == 0 { Activation::Asinh } else { Activation::Softplus };
        let alpha = [0.0, 5e-5, 1e-2][rng.below(3)];
        let net = perturbed_dense(dim, layers, act, seed * 1000 + k as u64);
        let batch = rng.normal_matrix(4, dim);
        let err = flowlab::objective::gradient_check(&net, &batch, alpha, 1e-6)
            .map_err(|e| format!("config #{k}: {e}"))?;
        if err > 1e-4 {
            return Err(format!(
                "config #{k} (D={dim}, L={layers}, {}, alpha={alpha}): rel err {err:e}",
                act.name()
            ));
        }
        worst = worst.max(err);
    }
    Ok(format!("{count} configurations, max rel err {worst:.2e}"))
}
