//! Stage-I model selection: cross-validated grid search scored by the
//! held-out SNR, and the J-criterion kernel choice used by opt-mmd-witness.

use faer::Mat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, WitsError};
use crate::kernel::{bandwidth_grid, log_space, Kernel};
use crate::mmd_stats;
use crate::parallel;
use crate::sample::Sample;
use crate::witness::{default_c, snr_from_values, KfdaSystem};

pub const DEFAULT_FOLDS: usize = 5;

/// Variance floor added when scoring a validation fold.
pub const SCORE_REG: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    kernels: Vec<Kernel>,
    lambdas: Vec<f64>,
}

impl ParamGrid {
    pub fn new(kernels: Vec<Kernel>, lambdas: Vec<f64>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(WitsError::param("grid", "no kernels"));
        }
        if lambdas.is_empty() {
            return Err(WitsError::param("grid", "no lambdas"));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(WitsError::param("grid", format!("lambda {l} is not positive")));
        }
        Ok(Self { kernels, lambdas })
    }

    /// Ten Gaussian bandwidths on `[1e-3, 1e1]` and five λ on `[1e-4, 1e3]`,
    /// both log-spaced.
    pub fn default_grid() -> Self {
        Self {
            kernels: bandwidth_grid(-3.0, 1.0, 10).expect("static grid"),
            lambdas: log_space(-4.0, 3.0, 5).expect("static grid"),
        }
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.kernels.len() * self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// One cross-validation fold: indices into the X and Y training samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train_x: Vec<usize>,
    pub train_y: Vec<usize>,
    pub val_x: Vec<usize>,
    pub val_y: Vec<usize>,
}

fn stratum(len: usize, folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

fn complement(len: usize, held: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; len];
    for &i in held {
        keep[i] = false;
    }
    (0..len).filter(|&i| keep[i]).collect()
}

/// Class-stratified k-fold partition: each class is shuffled and dealt round
/// robin into the folds.
pub fn kfold_split(n_x: usize, n_y: usize, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(WitsError::param("folds", format!("need at least 2, got {folds}")));
    }
    if n_x < folds || n_y < folds {
        return Err(WitsError::param(
            "folds",
            format!("{folds} folds need at least {folds} points per class, got {n_x} and {n_y}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = stratum(n_x, folds, &mut rng);
    let ys = stratum(n_y, folds, &mut rng);
    Ok(xs
        .into_iter()
        .zip(ys)
        .map(|(val_x, val_y)| Fold {
            train_x: complement(n_x, &val_x),
            train_y: complement(n_y, &val_y),
            val_x,
            val_y,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub kernel: Kernel,
    pub lambda: f64,
    /// Validation SNR per fold; `-inf` where the fold was degenerate.
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub candidates: Vec<CandidateScore>,
    pub kernel: Kernel,
    pub lambda: f64,
    pub folds: usize,
    pub seed: u64,
}

impl CvReport {
    pub fn best(&self) -> &CandidateScore {
        self.candidates
            .iter()
            .find(|c| c.kernel == self.kernel && c.lambda == self.lambda)
            .expect("chosen candidate is in the report")
    }
}

/// Ordering used for selection: higher score, then larger λ, then larger
/// bandwidth.
fn better(a: &CandidateScore, b: &CandidateScore) -> bool {
    if a.mean_score != b.mean_score {
        return a.mean_score > b.mean_score;
    }
    if a.lambda != b.lambda {
        return a.lambda > b.lambda;
    }
    a.kernel.bandwidth().unwrap_or(f64::INFINITY) > b.kernel.bandwidth().unwrap_or(f64::INFINITY)
}

/// Scores of every λ on one fold, from the Gram matrix of the pooled training
/// sample (X first, then Y).
fn fold_scores(gram: &Mat<f64>, n_x: usize, fold: &Fold, lambdas: &[f64]) -> Vec<f64> {
    let train: Vec<usize> = fold
        .train_x
        .iter()
        .copied()
        .chain(fold.train_y.iter().map(|&j| j + n_x))
        .collect();
    let n_train_x = fold.train_x.len();
    let sub = Mat::from_fn(train.len(), train.len(), |i, j| gram[(train[i], train[j])]);
    let c = default_c(n_train_x, fold.train_y.len());
    let system = match KfdaSystem::new(sub, n_train_x, c) {
        Ok(s) => s,
        Err(_) => return vec![f64::NEG_INFINITY; lambdas.len()],
    };
    let val_x: Vec<usize> = fold.val_x.clone();
    let val_y: Vec<usize> = fold.val_y.iter().map(|&j| j + n_x).collect();
    let evaluate = |alpha: &[f64], sign: f64, points: &[usize]| -> Vec<f64> {
        points
            .iter()
            .map(|&p| {
                let col = gram.col(p);
                sign * train.iter().zip(alpha).map(|(&t, a)| a * col[t]).sum::<f64>()
            })
            .collect()
    };
    lambdas
        .iter()
        .map(|&lambda| {
            let Ok(sol) = system.solve(lambda) else {
                return f64::NEG_INFINITY;
            };
            let sign = if system.mean_difference(&sol.coefficients) < 0.0 { -1.0 } else { 1.0 };
            let hx = evaluate(&sol.coefficients, sign, &val_x);
            let hy = evaluate(&sol.coefficients, sign, &val_y);
            let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
            if constant(&hx) && constant(&hy) {
                return f64::NEG_INFINITY;
            }
            let vx = (hx.len() + hy.len()) as f64;
            let c_val = hx.len() as f64 / vx;
            snr_from_values(&hx, &hy, c_val, SCORE_REG).unwrap_or(f64::NEG_INFINITY)
        })
        .collect()
}

/// Cross-validated grid search over `(kernel, λ)` for the exact KFDA witness,
/// scored by validation SNR. Uses only the Stage-I samples it is given.
pub fn grid_search_cv(
    grid: &ParamGrid,
    x_train: &Sample,
    y_train: &Sample,
    folds: usize,
    seed: u64,
) -> Result<CvReport> {
    x_train.check_dim(y_train)?;
    let fold_list = kfold_split(x_train.len(), y_train.len(), folds, seed)?;
    let pooled = x_train.concat(y_train)?;
    let n_x = x_train.len();
    let lambdas = grid.lambdas();

    let per_kernel: Vec<Vec<Vec<f64>>> = grid
        .kernels()
        .iter()
        .map(|k| {
            let gram = k.gram_symmetric(&pooled)?;
            // [fold][lambda]
            Ok(parallel::map_range(fold_list.len(), |f| {
                fold_scores(&gram, n_x, &fold_list[f], lambdas)
            }))
        })
        .collect::<Result<_>>()?;

    let mut candidates = Vec::with_capacity(grid.len());
    for (k, scores) in grid.kernels().iter().zip(&per_kernel) {
        for (l, &lambda) in lambdas.iter().enumerate() {
            let fold_scores: Vec<f64> = scores.iter().map(|s| s[l]).collect();
            let mean_score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
            candidates.push(CandidateScore {
                kernel: *k,
                lambda,
                fold_scores,
                mean_score,
            });
        }
    }
    let mut best: Option<&CandidateScore> = None;
    for cand in candidates.iter().filter(|c| c.mean_score > f64::NEG_INFINITY) {
        if best.is_none_or(|b| better(cand, b)) {
            best = Some(cand);
        }
    }
    let (kernel, lambda) = match (best, grid.len()) {
        (Some(b), _) => (b.kernel, b.lambda),
        // A single candidate is returned whatever its score.
        (None, 1) => (grid.kernels()[0], lambdas[0]),
        (None, _) => {
            return Err(WitsError::Numerical(
                "every grid candidate produced a constant validation witness".into(),
            ))
        }
    };
    Ok(CvReport {
        candidates,
        kernel,
        lambda,
        folds,
        seed,
    })
}

/// Kernel maximizing the J criterion on the training pairs. Unequal samples
/// are truncated to the first `min(n, m)` points of each. Ties go to the
/// larger bandwidth.
pub fn select_kernel_by_j(kernels: &[Kernel], x_train: &Sample, y_train: &Sample) -> Result<(Kernel, f64)> {
    if kernels.is_empty() {
        return Err(WitsError::param("grid", "no kernels"));
    }
    let pairs = x_train.len().min(y_train.len());
    if pairs < 2 {
        return Err(WitsError::param("samples", "J needs at least two training pairs"));
    }
    let idx: Vec<usize> = (0..pairs).collect();
    let (x, y) = (x_train.select(&idx), y_train.select(&idx));
    let mut best: Option<(Kernel, f64)> = None;
    for k in kernels {
        let j = mmd_stats::j_criterion(k, &x, &y, mmd_stats::DEFAULT_J_EPS)?;
        let wins = match best {
            None => true,
            Some((bk, bj)) => {
                j > bj || (j == bj && k.bandwidth().unwrap_or(f64::INFINITY) > bk.bandwidth().unwrap_or(f64::INFINITY))
            }
        };
        if wins {
            best = Some((*k, j));
        }
    }
    Ok(best.expect("nonempty kernel list"))
}
