use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use thiserror::Error;
use trace_core::density::make_kernel;
use trace_core::experiment::{run_experiment, summarize_trace, summarize_tscore, HarnessOptions, Summary};
use trace_core::metrics::{embedded_tc, embedded_td, membership_coords, top_words, WordEmbeddingTable};
use trace_core::select::{default_grid, select_bandwidth_with, DEFAULT_NEIGHBORS, DEFAULT_SUBSAMPLE};
use trace_core::sim::{
    align_topics, gen_truth, loss_lambda, loss_trace_values, model_densities_at_centers, sample_corpus, LossKind,
    LossScale, SimConfig, TruthFile,
};
use trace_core::tscore::{scree as scree_values, suggest_k, topic_score_skip_empty};
use trace_core::weights::{estimate_weights, DEFAULT_RIDGE};
use trace_core::{
    count_matrix, fit_net, read_corpus, write_corpus, DensityModel, EmbeddingCorpus, KMeansParams, ModelFile,
    VoronoiNet,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] trace_core::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }

    /// Output was closed early, e.g. piped into `head`.
    pub fn is_broken_pipe(&self) -> bool {
        matches!(self, CliError::Io(e) if e.kind() == io::ErrorKind::BrokenPipe)
    }
}

macro_rules! core_err {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

core_err!(
    trace_core::CorpusError,
    trace_core::NetError,
    trace_core::TopicScoreError,
    trace_core::DensityError,
    trace_core::WeightsError,
    trace_core::SelectError,
    trace_core::SimError,
    trace_core::ModelError,
    trace_core::metrics::MetricsError
);

type Result<T> = std::result::Result<T, CliError>;

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn echo_seed(what: &str, seed: u64) {
    eprintln!("{what} seed: {seed}");
}

fn load_model(path: &Path) -> Result<DensityModel> {
    Ok(ModelFile::read(path)?.to_model()?)
}

fn check_dims(model: &DensityModel, corpus: &EmbeddingCorpus) -> Result<()> {
    if model.dim() != corpus.dim() {
        return Err(CliError::Data(format!(
            "model dimension {} does not match corpus dimension {}",
            model.dim(),
            corpus.dim()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Vocabulary size.
    #[arg(long, default_value_t = 2500)]
    pub p: usize,
    /// Number of documents.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Expected document length.
    #[arg(long = "N", default_value_t = 200.0)]
    pub doc_len: f64,
    #[arg(long = "K", default_value_t = 3)]
    pub k: usize,
    /// Embedding dimension (defaults to K).
    #[arg(long)]
    pub d: Option<usize>,
    /// Pure documents per topic.
    #[arg(long, default_value_t = 5)]
    pub rho: usize,
    /// Anchor threshold.
    #[arg(long, default_value_t = 0.8)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig> {
        let cfg = SimConfig {
            p: self.p,
            n: self.n,
            doc_len: self.doc_len,
            k: self.k,
            d: self.d.unwrap_or(self.k),
            rho: self.rho,
            tau: self.tau,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Corpus output (TRC1).
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth output (JSON).
    #[arg(long)]
    pub truth: PathBuf,
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = a.sim.config()?;
    echo_seed("simulation", cfg.seed);
    let truth = gen_truth(&cfg)?;
    let sample = sample_corpus(&truth, &cfg);
    write_corpus(&sample.corpus, &a.out)?;
    let json = serde_json::to_string(&TruthFile::new(&cfg, &truth)).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(&a.truth, json + "\n")?;
    eprintln!(
        "wrote {} documents, {} embeddings",
        sample.corpus.n_docs(),
        sample.corpus.total_len()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Number of hyperwords.
    #[arg(long = "M", default_value_t = 600)]
    pub m: usize,
    /// k-means restarts.
    #[arg(long, default_value_t = 100)]
    pub n_init: usize,
    /// Mini-batch size (defaults to 10% of all embeddings).
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl NetArgs {
    fn fit(&self, corpus: &EmbeddingCorpus) -> Result<VoronoiNet> {
        echo_seed("k-means", self.seed);
        let mut params = KMeansParams::new(self.m, self.seed);
        params.n_init = self.n_init;
        params.batch_size = self.batch_size;
        params.max_iters = self.max_iters;
        Ok(fit_net(corpus, &params)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Candidate bandwidths, comma separated (defaults to a geometric grid
    /// over the net's center spacing).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Points in the default grid.
    #[arg(long, default_value_t = 8)]
    pub grid_size: usize,
    /// Embeddings sampled for the entropy score.
    #[arg(long, default_value_t = DEFAULT_SUBSAMPLE)]
    pub subsample: usize,
    /// Neighbor rank in the entropy estimate.
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    pub neighbors: usize,
    #[arg(long, default_value_t = 0)]
    pub select_seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
    /// Number of topics (chosen from the scree plot when omitted).
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// Bandwidth (chosen by maximum entropy when omitted).
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub kernel_order: usize,
    #[command(flatten)]
    pub select: GridArgs,
    /// Model output (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn fit(a: FitArgs) -> Result<()> {
    if a.k_min < 2 || a.k_min > a.k_max {
        return Err(CliError::Usage("need 2 <= --k-min <= --k-max".into()));
    }
    if a.h.is_some_and(|h| !(h > 0.0 && h.is_finite())) {
        return Err(CliError::Usage("--h must be positive".into()));
    }
    let kernel = make_kernel(a.kernel_order).map_err(|e| CliError::Usage(e.to_string()))?;
    let corpus = read_corpus(&a.corpus)?;
    let net = a.net.fit(&corpus)?;
    let counts = count_matrix(&net, &corpus)?;
    let empty = counts.row_totals().iter().filter(|&&t| t == 0).count();
    if empty > 0 {
        log::warn!("{empty} hyperwords have no counts and get zero topic mass");
    }
    let k = match a.k {
        Some(k) => k,
        None => {
            let keep: Vec<usize> = (0..counts.n_rows()).filter(|&m| counts.row_totals()[m] > 0).collect();
            let sub = counts.select_rows(&keep);
            let rank = (a.k_max + 1).min(sub.n_rows().min(sub.n_docs()));
            let values = scree_values(&sub, rank)?;
            let k = suggest_k(&values, a.k_min..=a.k_max)
                .ok_or_else(|| CliError::Data("too few singular values to choose K".into()))?;
            eprintln!("K from scree: {k}");
            k
        }
    };
    let fit = topic_score_skip_empty(&counts, k, &net)?;
    let h = match a.h {
        Some(h) => h,
        None => {
            let grid = a
                .select
                .grid
                .clone()
                .unwrap_or_else(|| default_grid(&fit, a.select.grid_size, 0.02, 4.0));
            echo_seed("bandwidth subsample", a.select.select_seed);
            let curve = select_bandwidth_with(
                &fit,
                kernel.clone(),
                &corpus,
                &grid,
                a.select.subsample,
                a.select.neighbors,
                a.select.select_seed,
            )?;
            eprintln!("h from entropy: {}", curve.best);
            curve.best
        }
    };
    let model = DensityModel::new(fit, h, kernel)?;
    ModelFile::from_model(&model).write(&a.out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ZetaArg {
    Centers,
    Points,
}

#[derive(Debug, Args)]
pub struct DensitiesArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Query points, one comma-separated row per line.
    #[arg(long, conflicts_with = "at_corpus")]
    pub points: Option<PathBuf>,
    /// Corpus for points-mode weights or for querying at every embedding.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Query at every embedding of --corpus.
    #[arg(long, requires = "corpus")]
    pub at_corpus: bool,
    #[arg(long, value_enum, default_value_t = ZetaArg::Centers)]
    pub zeta: ZetaArg,
    /// Report positive-part densities.
    #[arg(long)]
    pub positive: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_points(path: &Path, dim: usize) -> Result<Vec<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if vals.len() != dim || vals.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Data(format!(
                "{}:{}: expected {dim} finite values",
                path.display(),
                i + 1
            )));
        }
        out.extend(vals);
    }
    Ok(out)
}

pub fn densities(a: DensitiesArgs) -> Result<()> {
    let mut model = load_model(&a.model)?;
    let corpus = a.corpus.as_ref().map(read_corpus).transpose()?;
    if let Some(c) = &corpus {
        check_dims(&model, c)?;
    }
    if let ZetaArg::Points = a.zeta {
        let c = corpus
            .as_ref()
            .ok_or_else(|| CliError::Usage("--zeta points requires --corpus".into()))?;
        model = model.with_points(c)?;
    }
    let points = match (&a.points, a.at_corpus) {
        (Some(p), _) => read_points(p, model.dim())?,
        (None, true) => corpus.as_ref().expect("required by clap").embeddings().to_vec(),
        (None, false) => return Err(CliError::Usage("give --points or --at-corpus".into())),
    };
    let (d, k) = (model.dim(), model.k());
    let mut w = output(&a.out)?;
    let header: Vec<String> = (1..=d)
        .map(|i| format!("z{i}"))
        .chain((1..=k).map(|i| format!("A{i}")))
        .chain((1..=k).map(|i| format!("B{i}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for z in points.chunks_exact(d) {
        let dens = if a.positive {
            model.estimate_density_positive(z)?
        } else {
            model.estimate_density(z)?
        };
        let rel = model.relevance(z)?;
        if rel.degenerate {
            log::warn!("all densities vanish at {z:?}; relevance set to uniform");
        }
        let row: Vec<String> = z
            .iter()
            .chain(&dens)
            .chain(&rel.values)
            .map(|v| v.to_string())
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Ridge penalty.
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    pub lambda: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn weights(a: WeightsArgs) -> Result<()> {
    if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
        return Err(CliError::Usage("--lambda must be nonnegative".into()));
    }
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.corpus)?;
    check_dims(&model, &corpus)?;
    let counts = count_matrix(&model.fit.net, &corpus)?;
    let w_hat = estimate_weights(&model.fit, &counts, a.lambda)?;
    let mut w = output(&a.out)?;
    let header: Vec<String> = std::iter::once("doc".to_string())
        .chain((1..=model.k()).map(|i| format!("w{i}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..corpus.n_docs() {
        let row: Vec<String> = w_hat.doc(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{i},{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct AnchorsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Topic number, 1-based (all topics when omitted).
    #[arg(long)]
    pub topic: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    /// Keep only the first occurrence of each surface word.
    #[arg(long)]
    pub dedupe: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn anchors(a: AnchorsArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.corpus)?;
    check_dims(&model, &corpus)?;
    let topics: Vec<usize> = match a.topic {
        Some(t) if t >= 1 && t <= model.k() => vec![t - 1],
        Some(t) => return Err(CliError::Usage(format!("--topic {t} outside 1..={}", model.k()))),
        None => (0..model.k()).collect(),
    };
    let mut w = output(&a.out)?;
    writeln!(w, "topic\trank\tdoc\tposition\tword\trelevance")?;
    for k in topics {
        let hits = model.top_anchor_embeddings(&corpus, k, a.top, a.dedupe)?;
        for (rank, hit) in hits.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                k + 1,
                rank + 1,
                hit.doc,
                hit.position,
                hit.word.as_deref().unwrap_or(""),
                hit.score
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScreeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Reuse the net of this model instead of fitting one.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long, default_value_t = 20)]
    pub max_rank: usize,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
}

pub fn scree(a: ScreeArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let net = match &a.model {
        Some(p) => {
            let model = load_model(p)?;
            check_dims(&model, &corpus)?;
            model.fit.net
        }
        None => a.net.fit(&corpus)?,
    };
    let counts = count_matrix(&net, &corpus)?;
    let values = scree_values(&counts, a.max_rank)?;
    let mut w = output(&None)?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{}\t{v}", i + 1)?;
    }
    w.flush()?;
    if let Some(k) = suggest_k(&values, a.k_min..=a.k_max) {
        eprintln!("suggested K: {k}");
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SelectHArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub select: GridArgs,
}

pub fn select_h(a: SelectHArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.corpus)?;
    check_dims(&model, &corpus)?;
    let grid = a
        .select
        .grid
        .clone()
        .unwrap_or_else(|| default_grid(&model.fit, a.select.grid_size, 0.02, 4.0));
    echo_seed("bandwidth subsample", a.select.select_seed);
    let curve = select_bandwidth_with(
        &model.fit,
        model.kernel().clone(),
        &corpus,
        &grid,
        a.select.subsample,
        a.select.neighbors,
        a.select.select_seed,
    )
    .map_err(|e| match e {
        trace_core::SelectError::EmptyGrid | trace_core::SelectError::InvalidGrid => CliError::Usage(e.to_string()),
        e => e.into(),
    })?;
    let mut w = output(&None)?;
    writeln!(w, "h\tscore")?;
    for (h, s) in curve.bandwidths.iter().zip(&curve.scores) {
        writeln!(w, "{h}\t{s}")?;
    }
    writeln!(w, "selected\t{}", curve.best)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossScaleArg {
    TruthMass,
    GaussianPeak,
}

impl From<LossScaleArg> for LossScale {
    fn from(a: LossScaleArg) -> Self {
        match a {
            LossScaleArg::TruthMass => LossScale::TruthMass,
            LossScaleArg::GaussianPeak => LossScale::GaussianPeak,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score this model against --truth instead of running repetitions.
    #[arg(long, requires = "truth")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Net sizes for repeated runs.
    #[arg(long = "M-grid", value_delimiter = ',', default_value = "100,400,800,2500")]
    pub m_grid: Vec<usize>,
    /// Bandwidths for repeated runs.
    #[arg(long = "h-grid", value_delimiter = ',', default_value = "0.1,0.2")]
    pub h_grid: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// k-means restarts per net in repeated runs.
    #[arg(long, default_value_t = 1)]
    pub n_init: usize,
    /// Skip the word-count Topic-SCORE baseline.
    #[arg(long)]
    pub no_baseline: bool,
    #[arg(long, value_enum, default_value_t = LossScaleArg::TruthMass)]
    pub loss_scale: LossScaleArg,
}

fn config_label(c: &SimConfig) -> String {
    format!(
        "p={},n={},N={},K={},d={},rho={},tau={}",
        c.p, c.n, c.doc_len, c.k, c.d, c.rho, c.tau
    )
}

fn summary_row(w: &mut dyn Write, config: &str, method: &str, s: &Summary) -> io::Result<()> {
    writeln!(w, "{config}\t{method}\t{}\t{}", s.mean, s.std_error)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let scale: LossScale = a.loss_scale.into();
    let mut w = output(&None)?;
    writeln!(w, "config\tmethod\tmean_loss\tstd_error")?;
    if let Some(model_path) = &a.model {
        let truth_path = a.truth.as_ref().expect("required by clap");
        let text = std::fs::read_to_string(truth_path)?;
        let file: TruthFile = serde_json::from_str(&text).map_err(|e| CliError::Data(e.to_string()))?;
        let truth = file.to_truth()?;
        let model = load_model(model_path)?;
        if model.k() != truth.k() {
            return Err(CliError::Data(format!(
                "model has {} topics, truth has {}",
                model.k(),
                truth.k()
            )));
        }
        let truth_dens = truth.densities_at_centers();
        let lambda = loss_lambda(scale, &truth_dens, truth.d());
        let est = model_densities_at_centers(&model, &truth)?;
        let perm = align_topics(&est, &truth_dens, LossKind::Trace { lambda })?;
        let loss = loss_trace_values(&est, &truth_dens, lambda, &perm)?;
        let method = format!("trace(M={},h={})", model.fit.m(), model.h());
        summary_row(&mut w, &config_label(&file.cfg), &method, &Summary::of(&[loss]))?;
        w.flush()?;
        return Ok(());
    }
    if a.reps == 0 || a.m_grid.is_empty() || a.h_grid.is_empty() {
        return Err(CliError::Usage("need --reps >= 1 and nonempty grids".into()));
    }
    if a.h_grid.iter().any(|h| !(*h > 0.0)) {
        return Err(CliError::Usage("bandwidths must be positive".into()));
    }
    let cfg = a.sim.config()?;
    echo_seed("first repetition", cfg.seed);
    let mut opts = HarnessOptions::new(a.m_grid.clone(), a.h_grid.clone());
    opts.n_init = a.n_init;
    opts.baseline = !a.no_baseline;
    opts.loss_scale = scale;
    let reps = run_experiment(&cfg, &opts, a.reps, cfg.seed)?;
    let label = config_label(&cfg);
    for &m in &a.m_grid {
        for &h in &a.h_grid {
            let s = summarize_trace(&reps, m, h).expect("every setting scored");
            summary_row(&mut w, &label, &format!("trace(M={m},h={h})"), &s)?;
        }
    }
    if let Some(s) = summarize_tscore(&reps) {
        summary_row(&mut w, &label, "tscore", &s)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Word embedding table (word, then tab-separated values).
    #[arg(long)]
    pub table: PathBuf,
    /// Top-word counts to score, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub top: Vec<usize>,
}

pub fn metrics(a: MetricsArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.corpus)?;
    check_dims(&model, &corpus)?;
    let table = WordEmbeddingTable::read(&a.table)?;
    let mut w = output(&None)?;
    writeln!(w, "top_m\tembedded_tc\tembedded_td")?;
    for &m in &a.top {
        let top = top_words(&model, &corpus, m)?;
        let tc = embedded_tc(&top, &table)?;
        let td = embedded_td(&top, &table)?;
        writeln!(w, "{m}\t{tc}\t{td}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct CoordsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn coords(a: CoordsArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.corpus)?;
    check_dims(&model, &corpus)?;
    let k = model.k();
    let b = model.relevance_at_rows(&corpus)?;
    let tokens = corpus.tokens();
    let mut w = output(&a.out)?;
    writeln!(w, "doc,position,word,x,y")?;
    for (row, rel) in b.chunks_exact(k).enumerate() {
        let (doc, pos) = corpus.locate(row);
        let [x, y] = membership_coords(rel)?;
        let word = tokens.map_or("", |t| t[row].as_str());
        writeln!(w, "{doc},{pos},{},{x},{y}", csv_field(word))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
