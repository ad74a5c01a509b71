//! Repeated simulation runs comparing TRACE with word-count Topic-SCORE.

use serde::Serialize;

use crate::density::{DensityModel, Kernel};
use crate::net::{count_matrix, fit_net, KMeansParams, VoronoiNet};
use crate::sim::{
    align_topics, gen_truth, loss_lambda, loss_trace_values, loss_tscore, model_densities_at_centers, sample_corpus,
    LossKind, LossScale, SimConfig,
};
use crate::tscore::topic_score_skip_empty;
use crate::Error;

/// Net and smoothing settings shared by all repetitions.
#[derive(Debug, Clone)]
pub struct HarnessOptions {
    pub net_sizes: Vec<usize>,
    pub bandwidths: Vec<f64>,
    pub kernel: Kernel,
    /// k-means restarts per net.
    pub n_init: usize,
    pub max_iters: usize,
    /// Also fit Topic-SCORE on the word counts.
    pub baseline: bool,
    pub loss_scale: LossScale,
}

impl HarnessOptions {
    pub fn new(net_sizes: Vec<usize>, bandwidths: Vec<f64>) -> Self {
        Self {
            net_sizes,
            bandwidths,
            kernel: Kernel::gaussian(),
            n_init: 1,
            max_iters: 100,
            baseline: true,
            loss_scale: LossScale::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceLoss {
    pub m: usize,
    pub h: f64,
    pub loss: f64,
}

/// Losses of one seeded draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Repetition {
    pub seed: u64,
    pub trace: Vec<TraceLoss>,
    pub tscore: Option<f64>,
}

impl Repetition {
    pub fn trace_loss(&self, m: usize, h: f64) -> Option<f64> {
        self.trace.iter().find(|t| t.m == m && t.h == h).map(|t| t.loss)
    }
}

/// Generates one draw from `cfg` and scores every `(M, h)` setting on it.
pub fn run_repetition(cfg: &SimConfig, opts: &HarnessOptions) -> Result<Repetition, Error> {
    let truth = gen_truth(cfg)?;
    let sample = sample_corpus(&truth, cfg);
    let truth_dens = truth.densities_at_centers();
    let lambda = loss_lambda(opts.loss_scale, &truth_dens, cfg.d);
    let k = cfg.k;

    let mut trace = Vec::new();
    for &m in &opts.net_sizes {
        let mut params = KMeansParams::new(m, cfg.seed ^ (m as u64).rotate_left(32));
        params.n_init = opts.n_init;
        params.max_iters = opts.max_iters;
        let net = fit_net(&sample.corpus, &params)?;
        let counts = count_matrix(&net, &sample.corpus)?;
        let fit = topic_score_skip_empty(&counts, k, &net)?;
        let base = DensityModel::new(fit, opts.bandwidths[0], opts.kernel.clone())?;
        for &h in &opts.bandwidths {
            let model = base.with_bandwidth(h)?;
            let est = model_densities_at_centers(&model, &truth)?;
            let perm = align_topics(&est, &truth_dens, LossKind::Trace { lambda })?;
            let loss = loss_trace_values(&est, &truth_dens, lambda, &perm)?;
            log::info!("seed {} M {m} h {h}: trace loss {loss:.6}", cfg.seed);
            trace.push(TraceLoss { m, h, loss });
        }
    }

    let tscore = if opts.baseline {
        // the vocabulary plays the role of the net; centers only label rows
        let vocab = VoronoiNet::new(cfg.d, truth.mu.transpose().as_slice().to_vec())?;
        let fit = topic_score_skip_empty(&sample.word_counts, k, &vocab)?;
        let est = fit.topic_columns();
        let perm = align_topics(&est, &truth.topic_columns(), LossKind::TScore)?;
        let loss = loss_tscore(&fit.a_net, &truth, &perm)?;
        log::info!("seed {}: tscore loss {loss:.6}", cfg.seed);
        Some(loss)
    } else {
        None
    };
    Ok(Repetition {
        seed: cfg.seed,
        trace,
        tscore,
    })
}

/// Runs `reps` draws with seeds `base_seed, base_seed + 1, ...`.
pub fn run_experiment(cfg: &SimConfig, opts: &HarnessOptions, reps: usize, base_seed: u64) -> Result<Vec<Repetition>, Error> {
    (0..reps as u64)
        .map(|r| {
            let cfg = SimConfig {
                seed: base_seed.wrapping_add(r),
                ..cfg.clone()
            };
            run_repetition(&cfg, opts)
        })
        .collect()
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            std_error,
            count: n,
        }
    }

    /// `mean +- std_error` intervals are disjoint.
    pub fn separated_from(&self, other: &Summary) -> bool {
        self.mean + self.std_error < other.mean - other.std_error
            || other.mean + other.std_error < self.mean - self.std_error
    }
}

pub fn summarize_trace(reps: &[Repetition], m: usize, h: f64) -> Option<Summary> {
    let vals: Option<Vec<f64>> = reps.iter().map(|r| r.trace_loss(m, h)).collect();
    vals.filter(|v| !v.is_empty()).map(|v| Summary::of(&v))
}

pub fn summarize_tscore(reps: &[Repetition]) -> Option<Summary> {
    let vals: Option<Vec<f64>> = reps.iter().map(|r| r.tscore).collect();
    vals.filter(|v| !v.is_empty()).map(|v| Summary::of(&v))
}
