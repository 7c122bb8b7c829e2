use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pfl_core::dataio::checkpoint::PFLC_MAGIC;
use pfl_core::dataio::manifest::manifest_base;
use pfl_core::dataio::pgm::Pgm;
use pfl_core::dataio::predictions::{
    decode_map, map_path, read_predictions, write_predictions, PredictionRow,
};
use pfl_core::dataio::record::{read_record, RecordHeader, FLAG_POST_LN, PFLE_MAGIC};
use pfl_core::dataio::synth::generate_synthetic;
use pfl_core::infer_eval::{evaluate, EvalItem, Grid, MetricsReport, TSV_HEADER};
use pfl_core::{
    run_inference, train_loop, Checkpoint, DataErrorKind, EmbeddingRecord, Manifest, PflError,
    PflModel, Prediction, Result, Sample, SynthConfig, TrainConfig,
};

use crate::{EvalArgs, InferArgs, InspectArgs, SynthArgs, TrainArgs};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| PflError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| PflError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| PflError::io(path, e))
}

fn load_manifest(path: &Path) -> Result<(Manifest, PathBuf)> {
    Ok((Manifest::load(path)?, manifest_base(path)))
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => SynthConfig::from_toml(&read_text(p)?)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let manifest = generate_synthetic(&config, &args.out)?;
    println!(
        "wrote {} images to {}",
        manifest.images.len(),
        args.out.display()
    );
    Ok(())
}

fn train_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut config = match path {
        Some(p) => TrainConfig::from_toml(&read_text(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let config = train_config(args.config.as_deref(), args.seed)?;
    let (manifest, base) = load_manifest(&args.manifest)?;
    let first = manifest
        .entries(pfl_core::Split::Train)
        .next()
        .ok_or_else(|| PflError::config("manifest has no training images"))?;
    let header = read_record(&base.join(&first.record))?.header;
    if header.layers as usize != config.layers.len() {
        return Err(PflError::config(format!(
            "records hold {} layers but the config selects {}",
            header.layers,
            config.layers.len()
        )));
    }
    let mut model = PflModel::new(
        config.model_config(header.dim as usize, header.raw_dim as usize)?,
        config.seed,
    )?;
    create_dir(&args.out)?;
    let ckpt = args.out.join("model.ckpt");
    if args.init_only {
        Checkpoint::from_model(&model, &config).save(&ckpt)?;
        println!("wrote untrained model to {}", ckpt.display());
        return Ok(());
    }
    let train = manifest.load_split(&base, pfl_core::Split::Train)?;
    let val = manifest.load_split(&base, pfl_core::Split::Val)?;
    let log_path = args.out.join("train.log");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| PflError::io(&log_path, e))?);
    let outcome = train_loop(&mut model, &train, &val, &config, &mut log)?;
    model.params = outcome.best_params.clone();
    Checkpoint::from_model(&model, &config).save(&ckpt)?;
    let best = outcome
        .best_metric
        .map_or("n/a".to_string(), |m| format!("{m:.6}"));
    println!(
        "trained {} epochs ({} steps) in {:.1}s; best validation {best} at epoch {}",
        outcome.epochs_run,
        outcome.steps,
        started.elapsed().as_secs_f64(),
        outcome.best_epoch + 1
    );
    Ok(())
}

fn report_for(samples: &[Sample], preds: &[Prediction], fpr_limit: f64) -> Result<MetricsReport> {
    let maps = samples
        .iter()
        .zip(preds)
        .map(|(s, p)| Grid::new(s.mask.width, s.mask.height, p.map.clone()))
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<EvalItem<'_>> = samples
        .iter()
        .zip(preds)
        .zip(&maps)
        .map(|((s, p), map)| EvalItem {
            category: &s.category,
            label: s.label,
            score: p.score.total,
            map,
            mask: &s.mask,
        })
        .collect();
    evaluate(&items, fpr_limit)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn infer(args: &InferArgs) -> Result<()> {
    if args.repeat == 0 {
        return Err(PflError::argument("--repeat must be at least 1"));
    }
    let ck = Checkpoint::load(&args.checkpoint)?;
    let model = ck.to_model()?;
    let ck_config = ck.config;
    let samples_per = args.samples.unwrap_or(ck_config.infer_samples);
    let seed = args.seed.unwrap_or(ck_config.seed);
    let (manifest, base) = load_manifest(&args.manifest)?;
    let samples = manifest.load_split(&base, args.split)?;
    if samples.is_empty() {
        return Err(PflError::config(format!("split {} is empty", args.split)));
    }
    let features: Vec<_> = samples.iter().map(|s| s.features.clone()).collect();
    let preds = run_inference(&model, &features, samples_per, args.mode, seed)?;

    let rows: Vec<PredictionRow> = samples
        .iter()
        .zip(&preds)
        .map(|(s, p)| PredictionRow {
            id: s.id.clone(),
            category: s.category.clone(),
            label: s.label,
            score: p.score.total,
            s_text: p.score.text,
            s_img: p.score.image,
            map: map_path(&s.id),
        })
        .collect();
    let maps: Vec<Vec<f64>> = preds.iter().map(|p| p.map.clone()).collect();
    write_predictions(&args.out, &rows, &maps)?;
    if args.pgm {
        for (s, p) in samples.iter().zip(&preds) {
            Pgm::from_unit(s.mask.width, s.mask.height, &p.map)?
                .write(&args.out.join(format!("maps/{}.pgm", s.id)))?;
        }
    }
    println!("wrote {} predictions to {}", rows.len(), args.out.display());

    if args.repeat > 1 {
        let mut per_seed = vec![report_for(&samples, &preds, args.fpr_limit)?];
        for k in 1..args.repeat {
            let p = run_inference(&model, &features, samples_per, args.mode, seed + k as u64)?;
            per_seed.push(report_for(&samples, &p, args.fpr_limit)?);
        }
        let names: Vec<&str> = TSV_HEADER.split('\t').skip(1).collect();
        let mut table = String::from("metric\tmean\tstd");
        for k in 0..args.repeat {
            table.push_str(&format!("\tseed{}", seed + k as u64));
        }
        table.push('\n');
        for (j, name) in names.iter().enumerate() {
            let values: Vec<f64> = per_seed.iter().map(|r| mean_row(r)[j]).collect();
            let (m, s) = mean_std(&values);
            table.push_str(&format!("{name}\t{m:.9}\t{s:.9}"));
            for v in &values {
                table.push_str(&format!("\t{v:.9}"));
            }
            table.push('\n');
            println!("{name:<12} {m:.4} ± {s:.4}");
        }
        write_text(&args.out.join("repeat.tsv"), &table)?;
    }
    Ok(())
}

fn mean_row(r: &MetricsReport) -> [f64; 6] {
    let m = &r.mean;
    [
        m.image_auroc,
        m.image_f1max,
        m.image_ap,
        m.pixel_auroc,
        m.pixel_pro,
        m.pixel_ap,
    ]
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let (manifest, base) = load_manifest(&args.manifest)?;
    let masks = manifest.masks(&base, args.split)?;
    let rows = read_predictions(&args.predictions)?;
    let by_id: HashMap<&str, &PredictionRow> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
    let entries: Vec<_> = manifest.entries(args.split).collect();
    let mut maps = Vec::with_capacity(entries.len());
    let mut scored = Vec::with_capacity(entries.len());
    for e in &entries {
        let row = by_id.get(e.id.as_str()).ok_or_else(|| {
            PflError::data(
                DataErrorKind::MissingFile,
                format!("{}: no prediction for this image", e.id),
            )
        })?;
        let path = args.predictions.join(&row.map);
        let bytes = std::fs::read(&path).map_err(|err| PflError::io(&path, err))?;
        maps.push(Grid::new(
            e.width,
            e.height,
            decode_map(&bytes, e.width * e.height)?,
        )?);
        scored.push(*row);
    }
    let items: Vec<EvalItem<'_>> = entries
        .iter()
        .zip(&scored)
        .zip(maps.iter().zip(&masks))
        .map(|((e, row), (map, mask))| EvalItem {
            category: &e.category,
            label: e.label == 1,
            score: row.score,
            map,
            mask,
        })
        .collect();
    let report = evaluate(&items, args.fpr_limit)?;
    create_dir(&args.out)?;
    write_text(&args.out.join("metrics.tsv"), &report.to_tsv())?;
    let text = report.to_text();
    write_text(&args.out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn describe_header(h: &RecordHeader) -> String {
    format!(
        "C={} L={} grid={}x{} D_raw={} features={}",
        h.dim,
        h.layers,
        h.grid_h,
        h.grid_w,
        h.raw_dim,
        if h.flags & FLAG_POST_LN != 0 {
            "post-ln"
        } else {
            "pre-ln"
        }
    )
}

fn inspect_one(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| PflError::io(path, e))?;
    if bytes.starts_with(&PFLE_MAGIC) {
        let r = EmbeddingRecord::decode(&bytes)?;
        return Ok(format!(
            "PFLE record, {} bytes, {}",
            bytes.len(),
            describe_header(&r.header)
        ));
    }
    if bytes.starts_with(&PFLC_MAGIC) {
        let ck = Checkpoint::decode(&bytes)?;
        ck.to_model()?;
        let values: usize = ck.params.iter().map(|p| p.value.data().len()).sum();
        let trainable = ck.params.iter().filter(|p| p.trainable).count();
        return Ok(format!(
            "PFLC checkpoint, C={} D_raw={} L={} B={} K={} P={} Q={}, {} tensors ({trainable} trainable), {values} values",
            ck.dim,
            ck.raw_dim,
            ck.layers,
            ck.config.banks,
            ck.config.flow_len,
            ck.config.context_len,
            ck.config.state_len,
            ck.params.len()
        ));
    }
    if bytes.starts_with(b"P5") {
        let pgm = Pgm::decode(&bytes)?;
        let on = pgm.to_mask().values.iter().filter(|&&v| v).count();
        return Ok(format!(
            "PGM {}x{}, {on} pixels above threshold",
            pgm.width, pgm.height
        ));
    }
    let text =
        std::str::from_utf8(&bytes).map_err(|_| PflError::format(0, "unrecognised file type"))?;
    let manifest = Manifest::parse(text)?;
    let problems = manifest.validate(&manifest_base(path));
    if let Some(first) = problems.first() {
        for p in &problems {
            eprintln!("  {p}");
        }
        return Err(PflError::data(
            match first {
                PflError::Data { kind, .. } => *kind,
                _ => DataErrorKind::Malformed,
            },
            format!(
                "{} of {} manifest entries are invalid",
                problems.len(),
                manifest.images.len()
            ),
        ));
    }
    Ok(format!(
        "manifest with {} images, all valid",
        manifest.images.len()
    ))
}

pub fn inspect(args: &InspectArgs) -> Result<()> {
    let mut failure = None;
    for path in &args.paths {
        match inspect_one(path) {
            Ok(desc) => println!("{}: {desc}", path.display()),
            Err(e) => {
                println!("{}: INVALID: {e}", path.display());
                failure.get_or_insert(e);
            }
        }
    }
    failure.map_or(Ok(()), Err)
}
