//! One function per subcommand. Each writes its artifacts atomically and a
//! manifest next to them.

use std::path::{Path, PathBuf};

use pbgc::analysis::{loss_surface, SurfaceOptions};
use pbgc::compression::{cross_evaluate, CompressorConfig, NamedSet};
use pbgc::generative::{
    generate as sample, resume, train_with, write_history_csv, EpochMetrics, VaeConfig, VaeMode,
    VaeModel,
};
use pbgc::metrics::{mmd_detailed, wasserstein2_with, MetricRecord};
use pbgc::{
    extract_paths, generate_dataset, load_dataset, save_dataset, AngleGrid, ArrayConfig,
    ChannelDataset, Dictionary, Exec, GainMatrix, PathParams, SampleSet, ScenarioSpec,
};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::Recorder;
use crate::{
    CrossEvalArgs, EvaluateArgs, ExtractArgs, GenerateArgs, SurfaceArgs, SynthesizeArgs, TrainArgs,
};

/// `out` if given, else `dir/default`. Parent directories are created.
fn resolve_out(out: &Option<PathBuf>, dir: &Path, default: &str) -> CliResult<PathBuf> {
    let path = out.clone().unwrap_or_else(|| dir.join(default));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(path)
}

/// Prefixes validation errors with the file they came from.
fn in_file<T>(path: &Path, r: pbgc::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        pbgc::Error::Spec { .. } | pbgc::Error::InvalidConfig(_) => {
            CliError::Usage(format!("{}: {e}", path.display()))
        }
        other => other.into(),
    })
}

pub fn synthesize(args: &SynthesizeArgs, dir: &Path) -> CliResult<()> {
    let rec = Recorder::start("synthesize");
    let (spec, inputs) = match (&args.spec, &args.preset) {
        (Some(p), _) => (in_file(p, ScenarioSpec::load(p))?, vec![p.clone()]),
        (None, Some(name)) => (ScenarioSpec::preset(name, args.n)?, vec![]),
        (None, None) => {
            return Err(CliError::Usage(
                "one of --spec or --preset is required".into(),
            ))
        }
    };
    let out = resolve_out(&args.out, dir, "dataset.chnl")?;
    let ds = generate_dataset(&spec, args.count, args.seed)?;
    save_dataset(&ds, &out)?;
    rec.finish(
        &json!({ "args": args, "scenario": spec }),
        Some(args.seed),
        inputs,
        &out,
        vec![out.clone()],
    )?;
    println!(
        "wrote {} samples of scenario `{}` to {}",
        ds.len(),
        spec.name,
        out.display()
    );
    Ok(())
}

fn report_epoch(total_epochs: usize) -> impl FnMut(&EpochMetrics) {
    move |m: &EpochMetrics| {
        if m.epoch.is_multiple_of(10) || m.epoch == total_epochs || m.epoch == 1 {
            eprintln!(
                "epoch {:>4}  total {:.6e}  mse {:.6e}  kl {:.4e}  l1 {:.4e}  nmse {:.5}",
                m.epoch, m.total, m.mse, m.kl, m.l1, m.nmse
            );
        }
    }
}

fn relaxed_dictionary(model: &VaeModel, budget: u64) -> CliResult<Option<Dictionary>> {
    match model.grid() {
        Some(grid) if model.mode() == VaeMode::Relaxed => Ok(Some(Dictionary::build(
            grid,
            model.array(),
            budget,
            Exec::default(),
        )?)),
        _ => Ok(None),
    }
}

fn resolve_train_config(args: &TrainArgs, array: &ArrayConfig) -> CliResult<VaeConfig> {
    let mut cfg = match &args.config {
        Some(p) => in_file(p, VaeConfig::from_toml_str(&std::fs::read_to_string(p)?))?,
        None => VaeConfig::default(),
    };
    if let Some(m) = &args.mode {
        cfg.mode = m.parse()?;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = &args.$flag { cfg.$field = v.clone(); })*
        };
    }
    set!(latent => latent_dim, encoder_widths => encoder_widths,
        decoder_widths => decoder_widths, alpha_d => alpha_d, alpha_s => alpha_s,
        paths => num_paths, epochs => epochs, batch => batch_size, lr => learning_rate,
        seed => seed);
    cfg.u = array.u;
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(args: &TrainArgs, dir: &Path) -> CliResult<()> {
    let rec = Recorder::start("train");
    let ds = load_dataset(&args.data)?;
    let array = ds.array().ok_or(pbgc::Error::EmptyDataset)?;
    let out = resolve_out(&args.out, dir, "model.ckpt")?;
    let mut inputs = vec![args.data.clone()];

    let model = if let Some(ck) = &args.resume {
        let overridden = args.mode.is_some()
            || args.latent.is_some()
            || args.encoder_widths.is_some()
            || args.decoder_widths.is_some()
            || args.alpha_d.is_some()
            || args.alpha_s.is_some()
            || args.paths.is_some()
            || args.batch.is_some()
            || args.lr.is_some()
            || args.seed.is_some();
        if overridden {
            return Err(CliError::Usage(
                "--resume keeps the checkpoint's configuration; only --epochs may be given".into(),
            ));
        }
        inputs.push(ck.clone());
        let model = VaeModel::load(ck)?;
        let dict = relaxed_dictionary(&model, args.memory_budget)?;
        let epochs = args.epochs.unwrap_or(model.config().epochs);
        let target = model.history().len() + epochs;
        resume(
            model,
            &ds.channels,
            dict.as_ref(),
            epochs,
            Exec::default(),
            report_epoch(target),
        )?
    } else {
        let cfg = resolve_train_config(args, &array)?;
        let dict = match cfg.mode {
            VaeMode::Relaxed => Some(Dictionary::build(
                &AngleGrid::front(args.resolution),
                &array,
                args.memory_budget,
                Exec::default(),
            )?),
            VaeMode::Direct => None,
        };
        train_with(
            &ds.channels,
            dict.as_ref(),
            &cfg,
            Exec::default(),
            report_epoch(cfg.epochs),
        )?
    };

    model.save(&out)?;
    let metrics = out.with_extension("metrics.csv");
    let mut buf = Vec::new();
    write_history_csv(model.history(), &mut buf)?;
    pbgc::write_atomic(&metrics, &buf)?;
    let resolution = model.grid().map(|g| g.resolution);
    rec.finish(
        &json!({ "args": args, "model": model.config(), "resolution": resolution }),
        Some(model.config().seed),
        inputs,
        &out,
        vec![out.clone(), metrics],
    )?;
    let last = model.history().last().map(|m| m.nmse).unwrap_or(f64::NAN);
    println!(
        "trained {} epochs, final nmse {last:.6}; checkpoint {}",
        model.history().len(),
        out.display()
    );
    Ok(())
}

fn write_gains_csv(path: &Path, gains: &[GainMatrix]) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for g in gains {
        w.write_record(g.weights().iter().map(|v| v.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    pbgc::write_atomic(path, &bytes)?;
    Ok(())
}

fn read_gains_csv(path: &Path) -> CliResult<Vec<GainMatrix>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("{} row {}: {e}", path.display(), row + 1)))?;
        let r = (vals.len() as f64).sqrt().round() as usize;
        if r * r != vals.len() || r == 0 {
            return Err(CliError::Usage(format!(
                "{} row {}: {} values is not a square gain matrix",
                path.display(),
                row + 1,
                vals.len()
            )));
        }
        let w = ndarray::Array2::from_shape_vec((r, r), vals).expect("r² values");
        out.push(GainMatrix(w));
    }
    Ok(out)
}

pub fn generate(args: &GenerateArgs, dir: &Path) -> CliResult<()> {
    let rec = Recorder::start("generate");
    let model = VaeModel::load(&args.model)?;
    let out = resolve_out(&args.out, dir, "generated.chnl")?;
    let dict = relaxed_dictionary(&model, args.memory_budget)?;
    if args.gains_out.is_some() && dict.is_none() {
        return Err(CliError::Usage("--gains-out needs a relaxed model".into()));
    }
    let set = sample(&model, dict.as_ref(), args.count, args.seed)?;
    let mut ds = ChannelDataset::from_channels(set.channels)?;
    if model.mode() == VaeMode::Direct {
        ds.truth = Some(set.paths);
    }
    save_dataset(&ds, &out)?;
    let mut outputs = vec![out.clone()];
    if let Some(g) = &args.gains_out {
        write_gains_csv(g, &set.gains)?;
        outputs.push(g.clone());
    }
    rec.finish(
        &json!({ "args": args }),
        Some(args.seed),
        vec![args.model.clone()],
        &out,
        outputs,
    )?;
    println!("wrote {} generated channels to {}", ds.len(), out.display());
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, dir: &Path) -> CliResult<()> {
    let rec = Recorder::start("evaluate");
    let a = SampleSet::from_channels(&load_dataset(&args.a)?.channels)?;
    let b = SampleSet::from_channels(&load_dataset(&args.b)?.channels)?;
    let out = resolve_out(&args.out, dir, "evaluate.json")?;
    let mut records = Vec::new();
    for m in &args.metrics {
        let record = match m.trim() {
            "w2" => MetricRecord {
                metric: "w2".into(),
                value: wasserstein2_with(&a, &b, Exec::default())?,
                n_a: a.len(),
                n_b: b.len(),
                bandwidth: None,
            },
            "mmd" => {
                let r = mmd_detailed(&a, &b, Exec::default())?;
                MetricRecord {
                    metric: "mmd".into(),
                    value: r.value,
                    n_a: a.len(),
                    n_b: b.len(),
                    bandwidth: Some(r.bandwidth),
                }
            }
            other => {
                return Err(CliError::Usage(format!(
                    "unknown metric `{other}` (expected w2 or mmd)"
                )))
            }
        };
        records.push(record);
    }
    let report = json!({ "a": args.a, "b": args.b, "metrics": records });
    pbgc::write_atomic(
        &out,
        (serde_json::to_string_pretty(&report)? + "\n").as_bytes(),
    )?;
    rec.finish(
        &json!({ "args": args }),
        None,
        vec![args.a.clone(), args.b.clone()],
        &out,
        vec![out.clone()],
    )?;
    let parts: Vec<String> = records
        .iter()
        .map(|r| format!("{}={:.6e}", r.metric, r.value))
        .collect();
    println!("{} (n_a={}, n_b={})", parts.join(" "), a.len(), b.len());
    Ok(())
}

pub fn surface(args: &SurfaceArgs, dir: &Path) -> CliResult<()> {
    let rec = Recorder::start("surface");
    let truth = PathParams::new(args.gain, args.theta_a, args.theta_d);
    let array = ArrayConfig::new(args.n, args.n, args.u)?;
    let opts = SurfaceOptions {
        grid_points: args.grid,
        pin_truth: !args.no_pin,
        ..Default::default()
    };
    let out = resolve_out(&args.out, dir, "surface.csv")?;
    let s = loss_surface(&truth, &array, &opts)?;
    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    pbgc::write_atomic(&out, &buf)?;
    let summary = s.summary(args.epsilon);
    let summary_path = out.with_extension("summary.json");
    pbgc::write_atomic(
        &summary_path,
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;
    rec.finish(
        &json!({ "args": args }),
        None,
        vec![],
        &out,
        vec![out.clone(), summary_path],
    )?;
    println!(
        "n={} flatness_fraction={:.6} plateau_fraction={:.6} min={:.3e} at ({:.6}, {:.6})",
        summary.n,
        summary.flatness_fraction,
        summary.plateau_fraction,
        summary.min_value,
        summary.argmin_theta_a,
        summary.argmin_theta_d
    );
    Ok(())
}

pub fn extract_params(args: &ExtractArgs, dir: &Path) -> CliResult<()> {
    let rec = Recorder::start("extract-params");
    let out = resolve_out(&args.out, dir, "paths.csv")?;
    let (gains, grid, input, seed) = match (&args.model, &args.gains) {
        (Some(m), _) => {
            let model = VaeModel::load(m)?;
            let dict = relaxed_dictionary(&model, args.memory_budget)?
                .ok_or_else(|| CliError::Usage("--model must be a relaxed checkpoint".into()))?;
            let set = sample(&model, Some(&dict), args.count, args.seed)?;
            (set.gains, *dict.grid(), m.clone(), Some(args.seed))
        }
        (None, Some(g)) => {
            let gains = read_gains_csv(g)?;
            let r = gains.first().map_or(1, GainMatrix::resolution);
            if gains.iter().any(|w| w.resolution() != r) {
                return Err(CliError::Usage(format!(
                    "{}: rows differ in resolution",
                    g.display()
                )));
            }
            (gains, AngleGrid::front(r.max(2)), g.clone(), None)
        }
        (None, None) => {
            return Err(CliError::Usage(
                "one of --model or --gains is required".into(),
            ))
        }
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample", "rank", "gain", "aoa", "aod"])?;
    let mut found = 0usize;
    for (i, g) in gains.iter().enumerate() {
        for (k, p) in extract_paths(g, &grid, args.threshold)?.iter().enumerate() {
            w.write_record([
                i.to_string(),
                k.to_string(),
                p.gain.to_string(),
                p.aoa.to_string(),
                p.aod.to_string(),
            ])?;
            found += 1;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    pbgc::write_atomic(&out, &bytes)?;
    rec.finish(
        &json!({ "args": args }),
        seed,
        vec![input],
        &out,
        vec![out.clone()],
    )?;
    println!(
        "extracted {found} paths from {} gain matrices to {}",
        gains.len(),
        out.display()
    );
    Ok(())
}

fn named_sets(specs: &[String]) -> CliResult<(Vec<NamedSet>, Vec<PathBuf>)> {
    let mut sets = Vec::new();
    let mut paths = Vec::new();
    for s in specs {
        let (name, path) = s
            .split_once('=')
            .filter(|(n, p)| !n.is_empty() && !p.is_empty())
            .ok_or_else(|| CliError::Usage(format!("expected name=path, got `{s}`")))?;
        let path = PathBuf::from(path);
        sets.push((name.to_string(), load_dataset(&path)?.channels));
        paths.push(path);
    }
    Ok((sets, paths))
}

pub fn cross_eval(args: &CrossEvalArgs, dir: &Path) -> CliResult<()> {
    let rec = Recorder::start("cross-eval");
    let (train, mut inputs) = named_sets(&args.train)?;
    let (test, test_paths) = named_sets(&args.test)?;
    inputs.extend(test_paths);
    let cfg = CompressorConfig {
        bottleneck_dim: args.bottleneck,
        widths: args.widths.clone(),
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: args.seed,
        ..Default::default()
    };
    let out = resolve_out(&args.out, dir, "cross_eval.csv")?;
    let m = cross_evaluate(&train, &test, &cfg, args.jobs)?;
    let mut buf = Vec::new();
    m.write_csv(&mut buf)?;
    pbgc::write_atomic(&out, &buf)?;
    rec.finish(
        &json!({ "args": args, "compressor": cfg }),
        Some(args.seed),
        inputs,
        &out,
        vec![out.clone()],
    )?;
    print!("{}", String::from_utf8_lossy(&buf));
    Ok(())
}
