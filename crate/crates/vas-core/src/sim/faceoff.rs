//! Head-to-head comparison of selection strategies on simulated worlds.
//!
//! Each trial samples a world, exposes the train split to the strategies
//! through exact-teacher embeddings, trains the closed-form head on every
//! selected subset, and scores it on the shared test split.

use alloc::vec::Vec;

use crate::embed::{EmbeddingMatrix, Modality};
use crate::error::Error;
use crate::linalg::Mat;
use crate::optdesign::{a_optimal_select, default_lambda, random_select, v_optimal_select};
use crate::rng::derive_seed;
use crate::scoring::{vas_scores, MomentMatrix, ScoreKind, ScoreVector};
use crate::selection::{select_top_k, vas_d, SelectionResult};
use crate::Result;

use super::config::SynthConfig;
use super::lemma::world_for_trial;
use super::metrics::{classification_accuracy, test_loss, ClassSpec};
use super::train::closed_form_train;
use super::world::SynthWorld;

const TAG_STRATEGY: u64 = 0x44_00;
const CLASS_COUNT: usize = 4;
const CLASS_TRIALS: usize = 4000;

/// Registered selection strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Random,
    VasPrior,
    VasD,
    AOpt,
    VOpt,
    ClipTop,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::VasPrior => "vas_prior",
            Strategy::VasD => "vas_d",
            Strategy::AOpt => "a_opt",
            Strategy::VOpt => "v_opt",
            Strategy::ClipTop => "clip_top",
        }
    }

    pub fn parse(name: &str) -> Option<Strategy> {
        match name {
            "random" => Some(Strategy::Random),
            "vas_prior" => Some(Strategy::VasPrior),
            "vas_d" => Some(Strategy::VasD),
            "a_opt" => Some(Strategy::AOpt),
            "v_opt" => Some(Strategy::VOpt),
            "clip_top" => Some(Strategy::ClipTop),
            _ => None,
        }
    }

    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::VasPrior,
        Strategy::VasD,
        Strategy::AOpt,
        Strategy::VOpt,
        Strategy::ClipTop,
    ];
}

/// Per-trial outcome of one strategy.
#[derive(Debug, Clone)]
pub struct FaceoffRow {
    pub strategy: &'static str,
    pub trial: usize,
    pub subset_size: usize,
    pub loss_contrast: f64,
    pub loss_simplified: f64,
    pub class_acc: f64,
}

/// Mean and sample standard deviation over trials.
#[derive(Debug, Clone)]
pub struct FaceoffAggregate {
    pub strategy: &'static str,
    pub trials: usize,
    pub mean_simplified: f64,
    pub std_simplified: f64,
    pub mean_contrast: f64,
    pub std_contrast: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
}

#[derive(Debug, Clone)]
pub struct FaceoffTable {
    pub rows: Vec<FaceoffRow>,
    pub aggregates: Vec<FaceoffAggregate>,
}

fn to_embedding(m: &Mat, modality: Modality) -> EmbeddingMatrix {
    let data: Vec<f32> = m.data().iter().map(|&v| v as f32).collect();
    EmbeddingMatrix::new(m.cols(), data, None, modality, false).expect("valid embedding shape")
}

/// Teacher embeddings of a split: `x * map` per modality, `n x r`.
fn teacher_embeddings(world: &SynthWorld) -> (Mat, Mat, Mat) {
    let train_v = world.train.obs_v.matmul(&world.map_v);
    let train_l = world.train.obs_l.matmul(&world.map_l);
    let test_v = world.test.obs_v.matmul(&world.map_v);
    (train_v, train_l, test_v)
}

fn embedding_moment(e: &Mat) -> Mat {
    let r = e.cols();
    let n = e.rows();
    let mut m = Mat::zeros(r, r);
    for i in 0..n {
        let row = e.row(i);
        for (a, &va) in row.iter().enumerate() {
            for (b, &vb) in row.iter().enumerate() {
                m.set(a, b, m.get(a, b) + va * vb);
            }
        }
    }
    m.scale(1.0 / n as f64);
    m
}

fn select(
    strategy: Strategy,
    world: &SynthWorld,
    emb_v: &EmbeddingMatrix,
    train_l: &Mat,
    proxy: &MomentMatrix,
    budget: usize,
    tau: usize,
    seed: u64,
) -> Result<SelectionResult> {
    let n = world.cfg.n_train;
    let full = SelectionResult::full(n);
    match strategy {
        Strategy::Random => random_select(n, budget, seed),
        Strategy::VasPrior => {
            let scores = vas_scores(emb_v, emb_v, proxy)?;
            select_top_k(&scores, budget)
        }
        Strategy::VasD => {
            let (result, _) = vas_d(emb_v, &full, budget, tau)?;
            Ok(result)
        }
        Strategy::AOpt => {
            let lambda = default_lambda(emb_v, full.kept());
            a_optimal_select(emb_v, &full, budget, tau, lambda)
        }
        Strategy::VOpt => {
            let lambda = default_lambda(emb_v, full.kept());
            v_optimal_select(emb_v, &full, budget, tau, lambda, proxy)
        }
        Strategy::ClipTop => {
            let train_v = world.train.obs_v.matmul(&world.map_v);
            let scores: Vec<f64> = (0..n)
                .map(|i| crate::linalg::dot(train_v.row(i), train_l.row(i)))
                .collect();
            let sv = ScoreVector::new(scores, ScoreKind::ClipScore)?;
            select_top_k(&sv, budget)
        }
    }
}

/// Class templates drawn from the test split itself (evenly spaced rows), so
/// every class is guaranteed at least its own template sample.
fn class_spec(world: &SynthWorld, seed: u64) -> ClassSpec {
    let n = world.test.n();
    let c = CLASS_COUNT.min(n).max(2);
    let r = world.cfg.latent_dim;
    let mut templates = Mat::zeros(c, r);
    for t in 0..c {
        let src = t * n / c;
        templates.row_mut(t).copy_from_slice(world.test.latents_v.row(src));
    }
    ClassSpec::nearest_assignment(world, templates, CLASS_TRIALS, seed)
}

/// Run every strategy on `trials` worlds and aggregate.
pub fn strategy_faceoff(
    cfg: &SynthConfig,
    budget: usize,
    strategies: &[Strategy],
    trials: usize,
    tau: usize,
) -> Result<FaceoffTable> {
    cfg.validate()?;
    if budget == 0 || budget > cfg.n_train {
        return Err(Error::TargetExceedsInput { target: budget, input: cfg.n_train });
    }
    if budget < 2 {
        return Err(Error::SubsetTooSmall(budget));
    }
    if strategies.is_empty() {
        return Err(Error::ConfigInvalid("no strategies requested".into()));
    }
    let mut rows = Vec::with_capacity(trials * strategies.len());
    for trial in 0..trials {
        let world = world_for_trial(cfg, 0x5_000 + trial as u64)?;
        let (train_v, train_l, test_v) = teacher_embeddings(&world);
        let emb_v = to_embedding(&train_v, Modality::Vision);
        let proxy = MomentMatrix::new(
            embedding_moment(&test_v),
            world.cfg.n_test as u64,
            Modality::Vision,
            Modality::Vision,
            alloc::string::String::from("test-proxy"),
        )?;
        let classes = class_spec(&world, derive_seed(cfg.seed, 0x7_000 + trial as u64));
        for (s_idx, &strategy) in strategies.iter().enumerate() {
            let seed = derive_seed(cfg.seed, TAG_STRATEGY + (trial as u64) * 64 + s_idx as u64);
            let picked =
                select(strategy, &world, &emb_v, &train_l, &proxy, budget, tau, seed)?;
            let map = closed_form_train(&world, picked.kept(), cfg.rho)?;
            let losses = test_loss(&map, &world)?;
            let acc = classification_accuracy(&map, &world, &classes)?;
            rows.push(FaceoffRow {
                strategy: strategy.as_str(),
                trial,
                subset_size: picked.kept().len(),
                loss_contrast: losses.contrast,
                loss_simplified: losses.simplified,
                class_acc: acc,
            });
        }
    }

    let mut aggregates = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let name = strategy.as_str();
        let picked: Vec<&FaceoffRow> = rows.iter().filter(|r| r.strategy == name).collect();
        let n = picked.len();
        let stat = |f: &dyn Fn(&FaceoffRow) -> f64| -> (f64, f64) {
            let mean = picked.iter().map(|r| f(r)).sum::<f64>() / n as f64;
            let var = if n > 1 {
                picked.iter().map(|r| (f(r) - mean) * (f(r) - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            (mean, libm::sqrt(var))
        };
        let (mean_simplified, std_simplified) = stat(&|r| r.loss_simplified);
        let (mean_contrast, std_contrast) = stat(&|r| r.loss_contrast);
        let (mean_acc, std_acc) = stat(&|r| r.class_acc);
        aggregates.push(FaceoffAggregate {
            strategy: name,
            trials: n,
            mean_simplified,
            std_simplified,
            mean_contrast,
            std_contrast,
            mean_acc,
            std_acc,
        });
    }
    Ok(FaceoffTable { rows, aggregates })
}
