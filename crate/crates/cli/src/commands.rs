use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use thir_core::eval::EvalReport;
use thir_core::{
    build_index, evaluate, image_topology, load_image, load_index, render_report, resize,
    save_index, scan_dataset, split, BettiCurveSpec, BuildMode, DatasetRecord, Error,
    Magnification, SplitSpec,
};
use thir_service::{query_response, AppState};

use crate::args::{
    CurvesArgs, DescriptorArgs, EvaluateArgs, ExtractArgs, QueryArgs, QueryFormat, ServeArgs,
};

const CHANNELS: [&str; 3] = ["r", "g", "b"];

fn curve_spec(resolution: u16, range: crate::args::RangeArg) -> Result<BettiCurveSpec> {
    Ok(BettiCurveSpec::new(resolution as usize, range.into())?)
}

fn resize_dims(d: &DescriptorArgs) -> (usize, usize) {
    (d.width as usize, d.height as usize)
}

/// Writes to stdout; a reader that went away (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn extract(args: ExtractArgs, jobs: usize) -> Result<()> {
    let records = scan_dataset(&args.data, args.manifest.as_deref())?;
    log::info!("describing {} images with {jobs} workers", records.len());
    let spec = curve_spec(args.descriptor.resolution, args.descriptor.range)?;
    let mode = if args.lenient {
        BuildMode::Lenient
    } else {
        BuildMode::Strict
    };
    let (ix, skipped) = build_index(
        &args.data,
        &records,
        spec,
        resize_dims(&args.descriptor),
        jobs,
        mode,
    )?;
    save_index(&ix, &args.out)?;
    if !skipped.is_empty() {
        eprintln!("skipped {} unreadable image(s)", skipped.len());
    }
    emit(&format!(
        "{} entries written to {}\n",
        ix.len(),
        args.out.display()
    ))
}

pub fn query(args: QueryArgs) -> Result<()> {
    let ix = load_index(&args.index)?;
    let img = load_image(&args.image)?;
    let resp = query_response(&ix, &img, args.k as usize, args.normalize)?;
    match args.format {
        QueryFormat::Json => emit(&(serde_json::to_string(&resp)? + "\n"))?,
        QueryFormat::Table => {
            let mut out = String::new();
            for (rank, r) in resp.results.iter().enumerate() {
                let path = &ix.entries()[r.id as usize].record.path;
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{:.6}\t{}",
                    rank + 1,
                    r.id,
                    r.label,
                    r.magnification,
                    r.distance,
                    path.display()
                );
            }
            emit(&out)?;
        }
    }
    Ok(())
}

/// Groups records by magnification; with `only`, keeps that group alone.
fn magnification_groups(
    records: Vec<DatasetRecord>,
    only: Option<Magnification>,
) -> BTreeMap<Magnification, Vec<DatasetRecord>> {
    let mut groups: BTreeMap<Magnification, Vec<DatasetRecord>> = BTreeMap::new();
    for r in records {
        if only.is_none_or(|m| m == r.magnification) {
            groups.entry(r.magnification).or_default().push(r);
        }
    }
    groups
}

pub fn evaluate_cmd(args: EvaluateArgs, jobs: usize) -> Result<()> {
    let records = scan_dataset(&args.data, args.manifest.as_deref())?;
    let spec = curve_spec(args.descriptor.resolution, args.descriptor.range)?;
    let split_spec = SplitSpec::new(args.split, args.seed, true)?;
    let ks: Vec<usize> = args.k.iter().map(|&k| k as usize).collect();
    let only = args.magnification.0;
    let groups = magnification_groups(records, only);
    if groups.is_empty() {
        bail!(
            "no images at magnification {}",
            only.map_or("any".into(), |m| m.to_string())
        );
    }

    let several = groups.len() > 1;
    let mut report: Option<EvalReport> = None;
    for (mag, group) in groups {
        let (train, test) = match split(&group, &split_spec) {
            Ok(parts) => parts,
            Err(Error::InsufficientData(msg)) if several => {
                log::warn!("skipping magnification {mag}: {msg}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        log::info!(
            "{mag}: indexing {} train images, scoring {} queries",
            train.len(),
            test.len()
        );
        let (ix, _) = build_index(
            &args.data,
            &train,
            spec,
            resize_dims(&args.descriptor),
            jobs,
            BuildMode::Strict,
        )?;
        let part = evaluate(&ix, &args.data, &test, &ks, &spec, jobs)?;
        match report.as_mut() {
            Some(r) => r.extend(part),
            None => report = Some(part.with_split(split_spec)),
        }
    }
    let Some(report) = report else {
        bail!("no magnification group has enough images to split");
    };
    let text = render_report(&report, args.format.into());
    emit(&text)?;
    if let Some(path) = &args.report {
        write_output(path, &text)?;
    }
    Ok(())
}

pub fn curves(args: CurvesArgs) -> Result<()> {
    let spec = curve_spec(args.resolution, args.range)?;
    let mut img = load_image(&args.image)?;
    if let (Some(w), Some(h)) = (args.width, args.height) {
        img = resize(&img, w as usize, h as usize)?;
    }
    let topology = image_topology(&img, &spec);

    let mut csv = String::from("channel,sample_index,filtration_value,count\n");
    for (name, curve) in CHANNELS.iter().zip(&topology.curves) {
        for (j, (x, n)) in curve.samples.iter().zip(&curve.counts).enumerate() {
            let _ = writeln!(csv, "{name},{j},{x},{n}");
        }
    }
    match &args.out {
        Some(path) => write_output(path, &csv)?,
        None => emit(&csv)?,
    }

    if let Some(path) = &args.diagram {
        let mut out = String::from("channel,dim,birth,death\n");
        for (name, diagram) in CHANNELS.iter().zip(&topology.diagrams) {
            for line in diagram.to_csv().lines().skip(1) {
                let _ = writeln!(out, "{name},{line}");
            }
        }
        write_output(path, &out)?;
    }
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let ix = load_index(&args.index)?;
    if !args.data_root.is_dir() {
        bail!("data root {} is not a directory", args.data_root.display());
    }
    if let Some(dir) = &args.static_dir {
        if !dir.is_dir() {
            bail!("static directory {} does not exist", dir.display());
        }
    }
    eprintln!("serving {} entries on http://{}", ix.len(), args.addr);
    let state = AppState::new(ix, args.data_root);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(thir_service::serve(state, args.addr, args.static_dir))?;
    Ok(())
}
