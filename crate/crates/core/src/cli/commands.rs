use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use super::artifact::{
    check_lineage, svr_pair_from_text, svr_pair_to_text, write_artifact, Meta, WorkLock,
};
use super::config::{Config, Settings};
use super::{
    BaselineArgs, Cli, CliError, Command, EnsembleCommand, EnsemblePredictArgs, EnsembleTrainArgs,
    EvaluateArgs, GbtOpts, GridArgs, IngestArgs, KernelArgs, KernelOpts, RunArgs, SvrCommand,
    SvrOofArgs, SvrOpts, SvrPredictArgs, SvrTrainArgs, SynthArgs,
};
use crate::corpus::{
    generate_synthetic, load_corpus, split_corpus, write_corpus, Coordinate, Corpus, CorpusRole,
    SyntheticSpec,
};
use crate::ensemble::{
    assemble_meta_features, kfold_base_predictions, predict_stacking, train_stacking,
    validate_model_name, GbtParams, PredictionSet, StackingModel, SvrBaseTrainer,
};
use crate::error::GeoError;
use crate::geo_metrics::{baseline_predictions, evaluate, DistanceReport};
use crate::nu_svr::{
    grid_search_svr, predict_svr, train_nu_svr, GridCriterion, StringKernelSvr, SvrGrid, SvrParams,
};
use crate::string_kernel::{cross_matrix, gram_matrix, KernelMatrix, NGramRange};
use crate::{GeoPoint, PerCoordinate};

type CliResult<T> = Result<T, CliError>;

struct Ctx {
    config: Config,
    quiet: bool,
    strict: bool,
    unconverged: Vec<String>,
}

impl Ctx {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn check_converged(&mut self, what: &str, converged: bool) {
        if !converged {
            eprintln!("warning: {what} reached max-passes before converging");
            self.unconverged.push(what.to_string());
        }
    }

    fn finish(self) -> CliResult<()> {
        if self.strict && !self.unconverged.is_empty() {
            return Err(CliError::NotConverged(format!(
                "not converged: {}",
                self.unconverged.join(", ")
            )));
        }
        Ok(())
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let mut ctx = Ctx {
        config,
        quiet: cli.quiet,
        strict: cli.strict,
        unconverged: Vec::new(),
    };
    match &cli.command {
        Command::Synth(a) => synth(&mut ctx, a),
        Command::Ingest(a) => ingest(&mut ctx, a),
        Command::Kernel(a) => kernel(&mut ctx, a),
        Command::Svr(SvrCommand::Train(a)) => svr_train(&mut ctx, a),
        Command::Svr(SvrCommand::Predict(a)) => svr_predict(&mut ctx, a),
        Command::Svr(SvrCommand::Oof(a)) => svr_oof(&mut ctx, a),
        Command::Gridsearch(a) => gridsearch(&mut ctx, a),
        Command::Ensemble(EnsembleCommand::Train(a)) => ensemble_train(&mut ctx, a),
        Command::Ensemble(EnsembleCommand::Predict(a)) => ensemble_predict(&mut ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&mut ctx, a),
        Command::Baseline(a) => baseline(&mut ctx, a),
        Command::Run(a) => run(&mut ctx, a),
    }?;
    ctx.finish()
}

/// How the meta-learner's training inputs are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackMode {
    Kfold,
    Holdout,
}

impl fmt::Display for StackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StackMode::Kfold => "kfold",
            StackMode::Holdout => "holdout",
        })
    }
}

impl FromStr for StackMode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "kfold" => Ok(StackMode::Kfold),
            "holdout" => Ok(StackMode::Holdout),
            other => Err(CliError::Usage(format!(
                "unknown mode '{other}' (kfold or holdout)"
            ))),
        }
    }
}

fn parsed<T: FromStr>(flag: Option<&str>) -> CliResult<Option<T>>
where
    CliError: From<T::Err>,
{
    flag.map(str::parse::<T>)
        .transpose()
        .map_err(CliError::from)
}

fn kernel_settings(s: &mut Settings, k: &KernelOpts) -> CliResult<(NGramRange, bool)> {
    let range = s.value(
        "ngram-range",
        parsed(k.ngram_range.as_deref())?,
        NGramRange::default(),
    )?;
    let normalize = s.value("normalize", k.normalize, true)?;
    Ok((range, normalize))
}

fn svr_settings(s: &mut Settings, o: &SvrOpts) -> CliResult<PerCoordinate<SvrParams>> {
    let d = SvrParams::default();
    let c = s.value("svr-c", o.svr_c, d.c)?;
    let nu = s.value("svr-nu", o.svr_nu, d.nu)?;
    let tol = s.value("tol", o.tol, d.tol)?;
    let max_passes = s.value("max-passes", o.max_passes, d.max_passes)?;
    let lat = SvrParams {
        c: s.value("svr-c-lat", o.svr_c_lat, c)?,
        nu: s.value("svr-nu-lat", o.svr_nu_lat, nu)?,
        tol,
        max_passes,
    };
    let lon = SvrParams {
        c: s.value("svr-c-lon", o.svr_c_lon, c)?,
        nu: s.value("svr-nu-lon", o.svr_nu_lon, nu)?,
        tol,
        max_passes,
    };
    lat.validate()?;
    lon.validate()?;
    Ok(PerCoordinate { lat, lon })
}

fn gbt_settings(s: &mut Settings, o: &GbtOpts, seed: u64) -> CliResult<PerCoordinate<GbtParams>> {
    let preset = s.value("gbt-preset", o.gbt_preset.clone(), "reference".to_string())?;
    let (mut lat, mut lon) = match preset.as_str() {
        "reference" => (
            GbtParams::reference_latitude(),
            GbtParams::reference_longitude(),
        ),
        "default" => (GbtParams::default(), GbtParams::default()),
        other => {
            return Err(CliError::Usage(format!(
                "unknown gbt preset '{other}' (reference or default)"
            )))
        }
    };
    lat.n_estimators = s.value("lat-estimators", o.lat_estimators, lat.n_estimators)?;
    lat.max_depth = s.value("lat-depth", o.lat_depth, lat.max_depth)?;
    lon.n_estimators = s.value("lon-estimators", o.lon_estimators, lon.n_estimators)?;
    lon.max_depth = s.value("lon-depth", o.lon_depth, lon.max_depth)?;
    let d = GbtParams::default();
    let learning_rate = s.value("learning-rate", o.learning_rate, d.learning_rate)?;
    let lambda = s.value("lambda", o.lambda, d.lambda)?;
    let gamma = s.value("gamma", o.gamma, d.gamma)?;
    let colsample = s.value("colsample", o.colsample, d.colsample_bytree)?;
    let mcw = s.value("min-child-weight", o.min_child_weight, d.min_child_weight)?;
    for p in [&mut lat, &mut lon] {
        p.learning_rate = learning_rate;
        p.lambda = lambda;
        p.gamma = gamma;
        p.colsample_bytree = colsample;
        p.min_child_weight = mcw;
        p.seed = seed;
        p.validate()?;
    }
    Ok(PerCoordinate { lat, lon })
}

fn load(path: &Path, role: CorpusRole) -> CliResult<Corpus> {
    Ok(load_corpus(path, role)?)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| GeoError::from(e).in_file(path).into())
}

fn synth(ctx: &mut Ctx, a: &SynthArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let out = s.path("out", a.out.clone())?;
    let seed: u64 = s.required("seed", a.seed)?;
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        n_regions: s.value("regions", a.regions, d.n_regions)?,
        posts_per_region: s.value("per-region", a.per_region, d.posts_per_region)?,
        vocab_size: s.value("vocab", a.vocab, d.vocab_size)?,
        region_word_bias: s.value("bias", a.bias, d.region_word_bias)?,
        seed,
    };
    let _lock = WorkLock::for_output(&out)?;
    let corpus = generate_synthetic(&spec)?;
    write_artifact(
        &out,
        write_corpus(&corpus).as_bytes(),
        &Meta::new("synth", Some(seed), s.hash()),
    )?;
    ctx.info(format!(
        "synth: {} posts -> {}",
        corpus.len(),
        out.display()
    ));
    Ok(())
}

fn ingest(ctx: &mut Ctx, a: &IngestArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let inputs = s.paths("input", a.input.clone());
    if inputs.is_empty() {
        return Err(CliError::Usage("missing required --input".into()));
    }
    let role: CorpusRole = s.required("role", parsed(a.role.as_deref())?)?;
    let out = s.path("out", a.out.clone())?;
    let split = s.opt("split", a.split)?;
    let _lock = WorkLock::for_output(&out)?;

    let mut meta = Meta::new("ingest", None, String::new());
    let mut parts = Vec::with_capacity(inputs.len());
    for (i, p) in inputs.iter().enumerate() {
        meta.input(&format!("input{i}"), p)?;
        parts.push(load(p, role)?);
    }
    let corpus = if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        Corpus::merge(&parts.iter().collect::<Vec<_>>(), role)?
    };

    let Some(fraction) = split else {
        meta.config_hash = s.hash();
        write_artifact(&out, write_corpus(&corpus).as_bytes(), &meta)?;
        ctx.info(format!(
            "ingest: {} posts -> {}",
            corpus.len(),
            out.display()
        ));
        return Ok(());
    };
    let split_out = s.path("split-out", a.split_out.clone())?;
    let split_role: CorpusRole = s.value(
        "split-role",
        parsed(a.split_role.as_deref())?,
        CorpusRole::Dev,
    )?;
    let seed: u64 = s.required("seed", a.seed)?;
    let (first, second) = split_corpus(&corpus, fraction, seed)?;
    let second = second.with_role(split_role)?;
    meta.seed = Some(seed);
    meta.config_hash = s.hash();
    let mut second_meta = meta.clone();
    meta.stage = "ingest:first".into();
    second_meta.stage = "ingest:second".into();
    write_artifact(&out, write_corpus(&first).as_bytes(), &meta)?;
    write_artifact(&split_out, write_corpus(&second).as_bytes(), &second_meta)?;
    ctx.info(format!(
        "ingest: {} posts -> {} ({}) and {} ({})",
        corpus.len(),
        out.display(),
        first.len(),
        split_out.display(),
        second.len()
    ));
    Ok(())
}

fn kernel(ctx: &mut Ctx, a: &KernelArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let train_path = s.path("train", a.train.clone())?;
    let test_path = s.opt_path("test", a.test.clone())?;
    let out = s.path("out", a.out.clone())?;
    let (range, normalize) = kernel_settings(&mut s, &a.kernel)?;
    let _lock = WorkLock::for_output(&out)?;

    let mut meta = Meta::new("kernel", None, s.hash());
    meta.input("train", &train_path)?;
    let train = load(&train_path, CorpusRole::Test)?;
    let start = Instant::now();
    let km = match &test_path {
        None => gram_matrix(&train, range, normalize)?,
        Some(p) => {
            meta.input("test", p)?;
            cross_matrix(&load(p, CorpusRole::Test)?, &train, range, normalize)?
        }
    };
    ctx.info(format!(
        "kernel: {}x{} matrix, n-grams {range}, normalized={normalize}, {:.2}s",
        km.rows(),
        km.cols(),
        start.elapsed().as_secs_f64()
    ));
    write_artifact(&out, &km.to_bytes(), &meta)
}

fn svr_train(ctx: &mut Ctx, a: &SvrTrainArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let train_path = s.path("train", a.train.clone())?;
    let kernel_path = s.path("kernel", a.kernel.clone())?;
    let out = s.path("out", a.out.clone())?;
    let params = svr_settings(&mut s, &a.svr)?;
    let _lock = WorkLock::for_output(&out)?;

    let mut meta = Meta::new("svr-train", None, s.hash());
    let train_sha = meta.input("train", &train_path)?;
    meta.input("kernel", &kernel_path)?;
    check_lineage(&kernel_path, "train", &train_sha)?;
    let corpus = load(&train_path, CorpusRole::Train)?;
    let gram = KernelMatrix::load(&kernel_path)?;
    if !gram.is_gram() {
        return Err(GeoError::InvalidData(format!(
            "{} is not a Gram matrix; compute it without --test",
            kernel_path.display()
        ))
        .into());
    }
    if gram.row_ids() != corpus.ids().as_slice() {
        return Err(GeoError::FingerprintMismatch {
            what: "kernel rows against the training corpus".into(),
            expected: format!("{} posts", corpus.len()),
            found: format!("{} kernel rows with different ids", gram.rows()),
        }
        .into());
    }

    let start = Instant::now();
    let (lat, lon) = rayon::join(
        || {
            train_nu_svr(
                &gram,
                &corpus.targets(Coordinate::Lat)?,
                &params.lat,
                Coordinate::Lat,
            )
        },
        || {
            train_nu_svr(
                &gram,
                &corpus.targets(Coordinate::Lon)?,
                &params.lon,
                Coordinate::Lon,
            )
        },
    );
    let models = PerCoordinate {
        lat: lat?,
        lon: lon?,
    };
    for coord in Coordinate::BOTH {
        let m = models.get(coord);
        ctx.info(format!(
            "svr {coord}: {} support vectors, {} iterations, converged={}",
            m.support_indices.len(),
            m.iterations,
            m.converged
        ));
        ctx.check_converged(&format!("svr {coord}"), m.converged);
    }
    ctx.info(format!("svr train: {:.2}s", start.elapsed().as_secs_f64()));
    write_artifact(&out, svr_pair_to_text(&models).as_bytes(), &meta)
}

fn svr_predict(ctx: &mut Ctx, a: &SvrPredictArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let model_path = s.path("model", a.model.clone())?;
    let kernel_path = s.path("kernel", a.kernel.clone())?;
    let out = s.path("out", a.out.clone())?;
    let name = s.value("name", a.name.clone(), "svr".to_string())?;
    validate_model_name(&name)?;
    let _lock = WorkLock::for_output(&out)?;

    let mut meta = Meta::new("svr-predict", None, s.hash());
    meta.input("model", &model_path)?;
    meta.input("kernel", &kernel_path)?;
    if let (Some(mm), Some(km)) = (Meta::read_for(&model_path)?, Meta::read_for(&kernel_path)?) {
        if let (Some(a), Some(b)) = (mm.inputs.get("train"), km.inputs.get("train")) {
            if a != b {
                return Err(GeoError::FingerprintMismatch {
                    what: "training corpus of the model and of the cross matrix".into(),
                    expected: a.clone(),
                    found: b.clone(),
                }
                .into());
            }
        }
    }
    let models = svr_pair_from_text(&read_text(&model_path)?)?;
    let kx = KernelMatrix::load(&kernel_path)?;
    let lat = predict_svr(&models.lat, &kx)?;
    let lon = predict_svr(&models.lon, &kx)?;
    let points = lat
        .into_iter()
        .zip(lon)
        .map(|(a, b)| GeoPoint::from_regression(a, b))
        .collect::<Result<Vec<_>, _>>()?;
    let set = PredictionSet::from_points(name, kx.row_ids(), points)?;
    ctx.info(format!(
        "svr predict: {} posts -> {}",
        set.len(),
        out.display()
    ));
    write_artifact(&out, set.to_text().as_bytes(), &meta)
}

fn svr_trainer(
    s: &mut Settings,
    k: &KernelOpts,
    o: &SvrOpts,
    name: String,
) -> CliResult<SvrBaseTrainer> {
    let (range, normalize) = kernel_settings(s, k)?;
    let params = svr_settings(s, o)?;
    Ok(SvrBaseTrainer {
        name,
        model: StringKernelSvr {
            range,
            normalize,
            params,
        },
    })
}

fn svr_oof(ctx: &mut Ctx, a: &SvrOofArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let train_path = s.path("train", a.train.clone())?;
    let out = s.path("out", a.out.clone())?;
    let folds = s.value("folds", a.folds, 5usize)?;
    let seed: u64 = s.required("seed", a.seed)?;
    let name = s.value("name", a.name.clone(), "svr".to_string())?;
    validate_model_name(&name)?;
    let trainer = svr_trainer(&mut s, &a.kernel, &a.svr, name)?;
    let _lock = WorkLock::for_output(&out)?;

    let mut meta = Meta::new("svr-oof", Some(seed), s.hash());
    meta.input("train", &train_path)?;
    let corpus = load(&train_path, CorpusRole::Train)?;
    let start = Instant::now();
    let set = kfold_base_predictions(&corpus, folds, &trainer, seed)?;
    ctx.info(format!(
        "svr oof: {folds} folds over {} posts, {:.2}s",
        corpus.len(),
        start.elapsed().as_secs_f64()
    ));
    write_artifact(&out, set.to_text().as_bytes(), &meta)
}

fn gridsearch(ctx: &mut Ctx, a: &GridArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let train_path = s.path("train", a.train.clone())?;
    let dev_path = s.path("dev", a.dev.clone())?;
    let out = s.path("out", a.out.clone())?;
    let best_out = s.opt_path("best-out", a.best_out.clone())?;
    let (range, normalize) = kernel_settings(&mut s, &a.kernel)?;
    let d = SvrGrid::default();
    let grid = SvrGrid {
        c_values: s
            .list("c-values", a.c_values.clone())?
            .unwrap_or(d.c_values),
        nu_values: s
            .list("nu-values", a.nu_values.clone())?
            .unwrap_or(d.nu_values),
        base: SvrParams {
            tol: s.value("tol", a.tol, d.base.tol)?,
            max_passes: s.value("max-passes", a.max_passes, d.base.max_passes)?,
            ..d.base
        },
    };
    let criterion = s.value(
        "criterion",
        parsed::<GridCriterion>(a.criterion.as_deref())?,
        GridCriterion::Mse,
    )?;
    let _lock = WorkLock::for_output(&out)?;

    let mut meta = Meta::new("gridsearch", None, s.hash());
    meta.input("train", &train_path)?;
    meta.input("dev", &dev_path)?;
    let train = load(&train_path, CorpusRole::Train)?;
    let dev = load(&dev_path, CorpusRole::Dev)?;
    let start = Instant::now();
    let kt = gram_matrix(&train, range, normalize)?;
    let kd = cross_matrix(&dev, &train, range, normalize)?;
    let truth = dev.locations()?;
    let mut text = String::new();
    let mut best = String::new();
    for coord in Coordinate::BOTH {
        let report = grid_search_svr(
            &kt,
            &kd,
            &train.targets(coord)?,
            &dev.targets(coord)?,
            coord,
            &grid,
            criterion,
            Some(&truth),
        )?;
        let stalled = report.cells.iter().filter(|c| !c.converged).count();
        if stalled > 0 {
            ctx.check_converged(&format!("{stalled} {coord} grid cells"), false);
        }
        ctx.info(format!(
            "gridsearch {coord}: best C={} nu={}",
            report.best_params.c, report.best_params.nu
        ));
        best.push_str(&format!(
            "svr-c-{coord} = {}\nsvr-nu-{coord} = {}\n",
            report.best_params.c, report.best_params.nu
        ));
        text.push_str(&report.to_text());
        text.push('\n');
    }
    ctx.info(format!(
        "gridsearch: {} cells per coordinate, {:.2}s",
        grid.c_values.len() * grid.nu_values.len(),
        start.elapsed().as_secs_f64()
    ));
    write_artifact(&out, text.as_bytes(), &meta)?;
    if let Some(path) = best_out {
        let cfg = format!("ngram-range = {range}\nnormalize = {normalize}\n{best}");
        let mut m = meta.clone();
        m.stage = "gridsearch:best".into();
        write_artifact(&path, cfg.as_bytes(), &m)?;
    }
    Ok(())
}

fn load_predictions(paths: &[PathBuf], meta: &mut Meta) -> CliResult<Vec<PredictionSet>> {
    let mut sets = Vec::with_capacity(paths.len());
    for p in paths {
        let set = PredictionSet::load(p)?;
        meta.input(&format!("pred.{}", set.model_name()), p)?;
        sets.push(set);
    }
    Ok(sets)
}

fn ensemble_train(ctx: &mut Ctx, a: &EnsembleTrainArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let mode = s.value(
        "mode",
        parsed::<StackMode>(a.mode.as_deref())?,
        StackMode::Kfold,
    )?;
    let corpus_path = s.path("corpus", a.corpus.clone())?;
    let out = s.path("out", a.out.clone())?;
    let pred_paths = s.paths("pred", a.pred.clone());
    let internal = s.value("internal-svr", a.internal_svr, true)?;
    let seed: u64 = match mode {
        StackMode::Kfold => s.required("seed", a.seed)?,
        StackMode::Holdout => s.value("seed", a.seed, 0)?,
    };
    let folds = s.value("folds", a.folds, 5usize)?;
    let gbt = gbt_settings(&mut s, &a.gbt, seed)?;
    let trainer = svr_trainer(&mut s, &a.kernel, &a.svr, "svr".into())?;
    let train_path = match (internal, mode) {
        (true, StackMode::Holdout) => Some(s.path("train", a.train.clone())?),
        _ => None,
    };
    let base_out = s.opt_path("base-out", a.base_out.clone())?;
    let _lock = WorkLock::for_output(&out)?;

    let mut meta = Meta::new("ensemble-train", Some(seed), s.hash());
    meta.input("corpus", &corpus_path)?;
    let role = match mode {
        StackMode::Kfold => CorpusRole::Train,
        StackMode::Holdout => CorpusRole::Dev,
    };
    let corpus = load(&corpus_path, role)?;
    let mut sets = load_predictions(&pred_paths, &mut meta)?;

    if internal {
        let start = Instant::now();
        let set = match &train_path {
            None => kfold_base_predictions(&corpus, folds, &trainer, seed)?,
            Some(tp) => {
                meta.input("train", tp)?;
                let fitted = trainer.model.fit(&load(tp, CorpusRole::Train)?)?;
                ctx.check_converged("built-in svr", fitted.converged());
                PredictionSet::from_points("svr", &corpus.ids(), fitted.predict(&corpus)?)?
            }
        };
        ctx.info(format!(
            "ensemble: built-in svr base predictions ({mode}) in {:.2}s",
            start.elapsed().as_secs_f64()
        ));
        if let Some(p) = &base_out {
            let mut m = meta.clone();
            m.stage = "ensemble-train:base".into();
            write_artifact(p, set.to_text().as_bytes(), &m)?;
        }
        sets.push(set);
    }
    if sets.is_empty() {
        return Err(CliError::Usage(
            "no base models: pass --pred files or enable --internal-svr".into(),
        ));
    }

    let x = assemble_meta_features(&sets, &corpus)?;
    ctx.info(format!(
        "meta-features: {} rows x {} columns ({})",
        x.rows(),
        x.cols(),
        x.column_names().join(", ")
    ));
    let start = Instant::now();
    let model = train_stacking(&corpus, &sets, &gbt)?;
    ctx.info(format!(
        "ensemble train: {} + {} trees in {:.2}s",
        model.boosters.lat.trees.len(),
        model.boosters.lon.trees.len(),
        start.elapsed().as_secs_f64()
    ));
    write_artifact(&out, model.to_text().as_bytes(), &meta)
}

fn ensemble_predict(ctx: &mut Ctx, a: &EnsemblePredictArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let model_path = s.path("model", a.model.clone())?;
    let corpus_path = s.path("corpus", a.corpus.clone())?;
    let out = s.path("out", a.out.clone())?;
    let pred_paths = s.paths("pred", a.pred.clone());
    if pred_paths.is_empty() {
        return Err(CliError::Usage("missing required --pred".into()));
    }
    let _lock = WorkLock::for_output(&out)?;

    let mut meta = Meta::new("ensemble-predict", None, s.hash());
    meta.input("model", &model_path)?;
    meta.input("corpus", &corpus_path)?;
    let model = StackingModel::from_text(&read_text(&model_path)?)?;
    let corpus = load(&corpus_path, CorpusRole::Test)?;
    let sets = load_predictions(&pred_paths, &mut meta)?;
    let names: Vec<&str> = {
        let mut n: Vec<&str> = sets.iter().map(PredictionSet::model_name).collect();
        n.sort_unstable();
        n
    };
    if names != model.base_models() {
        return Err(GeoError::InvalidData(format!(
            "booster was trained on [{}], got predictions from [{}]",
            model.base_models().join(", "),
            names.join(", ")
        ))
        .into());
    }
    let set = predict_stacking(&model, &sets, &corpus)?;
    ctx.info(format!(
        "ensemble predict: {} posts -> {}",
        set.len(),
        out.display()
    ));
    write_artifact(&out, set.to_text().as_bytes(), &meta)
}

fn report_text(name: &str, report: &DistanceReport) -> String {
    format!(
        "model={name}\nposts={}\n{}",
        report.per_post.len(),
        report.summary_text()
    )
}

fn evaluate_cmd(ctx: &mut Ctx, a: &EvaluateArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let pred_path = s.path("pred", a.pred.clone())?;
    let corpus_path = s.path("corpus", a.corpus.clone())?;
    let out = s.opt_path("out", a.out.clone())?;
    let per_post = s.opt_path("per-post", a.per_post.clone())?;
    let plot = s.opt_path("plot-data", a.plot_data.clone())?;

    let mut meta = Meta::new("evaluate", None, s.hash());
    meta.input("pred", &pred_path)?;
    meta.input("corpus", &corpus_path)?;
    let pred = PredictionSet::load(&pred_path)?;
    let corpus = load(&corpus_path, CorpusRole::Dev)?;
    let report = evaluate(&pred, &corpus)?;
    let text = report_text(pred.model_name(), &report);
    let lock_target = out.as_ref().or(per_post.as_ref()).or(plot.as_ref());
    let _lock = lock_target.map(|p| WorkLock::for_output(p)).transpose()?;
    match &out {
        Some(p) => write_artifact(p, text.as_bytes(), &meta)?,
        None => print!("{text}"),
    }
    if let Some(p) = &per_post {
        write_artifact(p, report.per_post_tsv().as_bytes(), &meta)?;
    }
    if let Some(p) = &plot {
        write_artifact(p, report.plot_tsv().as_bytes(), &meta)?;
    }
    ctx.info(format!(
        "evaluate {}: median {:.2} km",
        pred.model_name(),
        report.median_km
    ));
    Ok(())
}

fn baseline(ctx: &mut Ctx, a: &BaselineArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let train_path = s.path("train", a.train.clone())?;
    let corpus_path = s.path("corpus", a.corpus.clone())?;
    let out = s.path("out", a.out.clone())?;
    let _lock = WorkLock::for_output(&out)?;
    let mut meta = Meta::new("baseline", None, s.hash());
    meta.input("train", &train_path)?;
    meta.input("corpus", &corpus_path)?;
    let set = baseline_predictions(
        &load(&train_path, CorpusRole::Train)?,
        &load(&corpus_path, CorpusRole::Test)?,
    )?;
    ctx.info(format!(
        "baseline: {} posts -> {}",
        set.len(),
        out.display()
    ));
    write_artifact(&out, set.to_text().as_bytes(), &meta)
}

/// Base models fit on one corpus, applied to another.
fn fit_and_predict(
    ctx: &mut Ctx,
    trainers: &[SvrBaseTrainer],
    train: &Corpus,
    targets: &[&Corpus],
) -> CliResult<Vec<Vec<PredictionSet>>> {
    let mut out = vec![Vec::new(); targets.len()];
    for t in trainers {
        let start = Instant::now();
        let fitted = t.model.fit(train)?;
        ctx.check_converged(&t.name, fitted.converged());
        for (slot, corpus) in out.iter_mut().zip(targets) {
            slot.push(PredictionSet::from_points(
                t.name.clone(),
                &corpus.ids(),
                fitted.predict(corpus)?,
            )?);
        }
        ctx.info(format!(
            "run: fit {} on {} posts in {:.2}s",
            t.name,
            train.len(),
            start.elapsed().as_secs_f64()
        ));
    }
    Ok(out)
}

fn run(ctx: &mut Ctx, a: &RunArgs) -> CliResult<()> {
    let mut s = Settings::new(&ctx.config);
    let train_path = s.path("train", a.train.clone())?;
    let dev_path = s.path("dev", a.dev.clone())?;
    let test_path = s.opt_path("test", a.test.clone())?;
    let work = s.path("work-dir", a.work_dir.clone())?;
    let seed: u64 = s.required("seed", a.seed)?;
    let mode = s.value(
        "mode",
        parsed::<StackMode>(a.mode.as_deref())?,
        StackMode::Kfold,
    )?;
    let folds = s.value("folds", a.folds, 5usize)?;
    let ranges: Vec<NGramRange> = s
        .list("ngram-ranges", a.ngram_ranges.clone())?
        .unwrap_or_else(|| vec![NGramRange::default()]);
    let normalize = s.value("normalize", a.normalize, true)?;
    let params = svr_settings(&mut s, &a.svr)?;
    let gbt = gbt_settings(&mut s, &a.gbt, seed)?;
    let retrain_final = s.value("retrain-final", a.retrain_final.then_some(true), false)?;
    let _lock = WorkLock::acquire(&work)?;

    let mut meta = Meta::new("run", Some(seed), s.hash());
    meta.input("train", &train_path)?;
    meta.input("dev", &dev_path)?;
    let train = load(&train_path, CorpusRole::Train)?;
    let dev = load(&dev_path, CorpusRole::Dev)?;
    let test = match &test_path {
        Some(p) => {
            meta.input("test", p)?;
            Some(load(p, CorpusRole::Test)?)
        }
        None => None,
    };
    let trainers: Vec<SvrBaseTrainer> = ranges
        .iter()
        .map(|r| SvrBaseTrainer {
            name: if ranges.len() == 1 {
                "svr".to_string()
            } else {
                format!("svr_{}_{}", r.min_n(), r.max_n())
            },
            model: StringKernelSvr {
                range: *r,
                normalize,
                params: params.clone(),
            },
        })
        .collect();
    let save = |name: &str, bytes: &[u8], stage: &str| -> CliResult<()> {
        let mut m = meta.clone();
        m.stage = format!("run:{stage}");
        write_artifact(&work.join(name), bytes, &m)
    };

    // Base models on train, scored on dev (and applied to test).
    let mut targets = vec![&dev];
    if let (Some(t), false) = (&test, retrain_final) {
        targets.push(t);
    }
    let mut preds = fit_and_predict(ctx, &trainers, &train, &targets)?;
    let dev_sets = preds.remove(0);
    for p in &dev_sets {
        save(
            &format!("dev.{}.tsv", p.model_name()),
            p.to_text().as_bytes(),
            "base",
        )?;
    }
    let dev_baseline = baseline_predictions(&train, &dev)?;
    save(
        "dev.baseline.tsv",
        dev_baseline.to_text().as_bytes(),
        "baseline",
    )?;

    let meta_sets =
        |ctx: &mut Ctx, corpus: &Corpus, prefix: &str| -> CliResult<Vec<PredictionSet>> {
            let mut out = Vec::with_capacity(trainers.len());
            for t in &trainers {
                let start = Instant::now();
                let set = kfold_base_predictions(corpus, folds, t, seed)?;
                ctx.info(format!(
                    "run: {folds}-fold predictions for {} in {:.2}s",
                    t.name,
                    start.elapsed().as_secs_f64()
                ));
                save(
                    &format!("{prefix}.{}.tsv", t.name),
                    set.to_text().as_bytes(),
                    "oof",
                )?;
                out.push(set);
            }
            Ok(out)
        };

    let (meta_corpus, meta_train) = match mode {
        StackMode::Kfold => (&train, meta_sets(ctx, &train, "oof")?),
        StackMode::Holdout => (&dev, dev_sets.clone()),
    };
    let model = train_stacking(meta_corpus, &meta_train, &gbt)?;
    save("stacking.model", model.to_text().as_bytes(), "stacking")?;
    let dev_ensemble = predict_stacking(&model, &dev_sets, &dev)?;
    save(
        "dev.ensemble.tsv",
        dev_ensemble.to_text().as_bytes(),
        "ensemble",
    )?;
    if mode == StackMode::Holdout {
        ctx.info("run: holdout mode trains the booster on dev, so its dev score is in-sample");
    }

    let mut report = String::new();
    for set in std::iter::once(&dev_baseline)
        .chain(dev_sets.iter())
        .chain(std::iter::once(&dev_ensemble))
    {
        let r = evaluate(set, &dev)?;
        ctx.info(format!(
            "dev {}: median {:.2} km",
            set.model_name(),
            r.median_km
        ));
        report.push_str(&report_text(set.model_name(), &r));
        report.push('\n');
    }
    save("dev.report.txt", report.as_bytes(), "evaluate")?;

    let Some(test) = test else { return Ok(()) };
    let (test_sets, test_model, baseline_train) = if retrain_final {
        let full = Corpus::merge(&[&train, &dev], CorpusRole::Train)?;
        let sets = fit_and_predict(ctx, &trainers, &full, &[&test])?.remove(0);
        let oof = meta_sets(ctx, &full, "final.oof")?;
        let final_model = train_stacking(&full, &oof, &gbt)?;
        save(
            "final.stacking.model",
            final_model.to_text().as_bytes(),
            "stacking",
        )?;
        (sets, final_model, full)
    } else {
        (preds.remove(0), model, train)
    };
    for p in &test_sets {
        save(
            &format!("test.{}.tsv", p.model_name()),
            p.to_text().as_bytes(),
            "base",
        )?;
    }
    let test_baseline = baseline_predictions(&baseline_train, &test)?;
    save(
        "test.baseline.tsv",
        test_baseline.to_text().as_bytes(),
        "baseline",
    )?;
    let test_ensemble = predict_stacking(&test_model, &test_sets, &test)?;
    save(
        "test.ensemble.tsv",
        test_ensemble.to_text().as_bytes(),
        "ensemble",
    )?;
    if test.is_labeled() {
        let mut report = String::new();
        for set in std::iter::once(&test_baseline)
            .chain(test_sets.iter())
            .chain(std::iter::once(&test_ensemble))
        {
            let r = evaluate(set, &test)?;
            ctx.info(format!(
                "test {}: median {:.2} km",
                set.model_name(),
                r.median_km
            ));
            report.push_str(&report_text(set.model_name(), &r));
            report.push('\n');
        }
        save("test.report.txt", report.as_bytes(), "evaluate")?;
    }
    Ok(())
}
