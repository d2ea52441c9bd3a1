use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use landslide_bbunet::synth::{write_synthetic_dataset, SynthConfig};
use landslide_bbunet::{
    collate, evaluate as eval_model, predict_mask, train as train_model, write_report, BbuNet,
    DiskSource, ReportRow, TrainConfig,
};
use landslide_core::geodata::{
    import_geotiff, read_raster_pack, resample_to_grid, write_raster_pack, EventInventory,
    GeoTransform, RasterGrid, Resampling,
};
use landslide_core::patchkit::{
    assemble_pairs, extract_dataset, read_manifest, read_sample, split_dataset, write_manifest,
    ExtractConfig, Region, SceneInput, Split, SplitSpec,
};
use landslide_core::stac::{
    build_query, classify_epoch, search_items, FixtureTransport, SceneRecord, Transport,
};
use landslide_core::terrain::build_dem_stack;
use landslide_tensor::{read_checkpoint, write_checkpoint};
use serde::Serialize;

use crate::live::LiveTransport;
use crate::region::RegionConfig;
use crate::{
    EvaluateArgs, PredictArgs, PrepareArgs, SplitArgs, StacSearchArgs, SynthArgs, TrainArgs,
};

const MANIFEST: &str = "manifest.jsonl";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

pub fn stac_search(a: &StacSearchArgs) -> Result<()> {
    let (region, _) = RegionConfig::read(&a.region_config)?;
    let mut query = build_query(region.bbox()?, region.event_window()?)?;
    if let Some(url) = &a.endpoint {
        query = query.with_endpoint(url.clone());
    }
    if let Some(n) = a.max_items {
        query = query.with_max_items(n);
    }
    let transport: Box<dyn Transport> = match &a.fixture {
        Some(path) => Box::new(
            FixtureTransport::from_file(path)
                .with_context(|| format!("reading fixture {}", path.display()))?,
        ),
        None => Box::new(LiveTransport::new()),
    };
    let excluded: HashSet<&str> = region.excluded_item_ids.iter().map(String::as_str).collect();
    let records: Vec<SceneRecord> = search_items(&query, transport.as_ref())?
        .into_iter()
        .filter(|r| !excluded.contains(r.item_id.as_str()))
        .collect();
    ensure_parent(&a.out)?;
    write_json(&a.out, &records)?;
    let count = |e| records.iter().filter(|r| r.epoch == e).count();
    use landslide_core::stac::Epoch;
    println!(
        "{} scenes: {} pre, {} post, {} ambiguous",
        records.len(),
        count(Epoch::Pre),
        count(Epoch::Post),
        count(Epoch::Ambiguous)
    );
    Ok(())
}

fn read_raster(path: &Path) -> Result<RasterGrid> {
    let is_tiff = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("tif") || e.eq_ignore_ascii_case("tiff"));
    let grid = if is_tiff {
        import_geotiff(path)
    } else {
        read_raster_pack(path)
    };
    grid.with_context(|| format!("reading {}", path.display()))
}

/// Brings `grid` onto the reference pixel grid: resamples when the pixel size
/// differs, then crops the window covering the reference extent.
fn align(
    name: &str,
    grid: RasterGrid,
    reference: &GeoTransform,
    rows: usize,
    cols: usize,
    method: Resampling,
) -> Result<RasterGrid> {
    let t = *grid.transform();
    ensure!(
        t.crs_code == reference.crs_code,
        "{name} is in EPSG:{}, scenes are in EPSG:{}",
        t.crs_code,
        reference.crs_code
    );
    let tol = 1e-9 * reference.pixel_width.max(1.0);
    let same_res = (t.pixel_width - reference.pixel_width).abs() <= tol
        && (t.pixel_height - reference.pixel_height).abs() <= tol;
    let grid = if same_res {
        grid
    } else {
        ensure!(
            (reference.pixel_width - reference.pixel_height).abs() <= tol,
            "reference grid has non-square pixels"
        );
        log::info!("resampling {name} to {} units/px", reference.pixel_width);
        resample_to_grid(&grid, reference.pixel_width, method)
            .with_context(|| format!("resampling {name}"))?
    };
    let (fc, fr) = grid
        .transform()
        .world_to_pixel(reference.origin_x, reference.origin_y);
    let (c0, r0) = (fc.round(), fr.round());
    ensure!(
        (fc - c0).abs() < 1e-6 && (fr - r0).abs() < 1e-6 && c0 >= 0.0 && r0 >= 0.0,
        "{name} is not aligned with the scene grid (offset {fc:.3},{fr:.3} px)"
    );
    let (c0, r0) = (c0 as usize, r0 as usize);
    if c0 == 0 && r0 == 0 && grid.rows() == rows && grid.cols() == cols {
        return Ok(grid);
    }
    grid.crop(c0, r0, cols, rows)
        .with_context(|| format!("{name} does not cover the scene extent"))
}

pub fn prepare(a: &PrepareArgs) -> Result<()> {
    let (region, region_text) = RegionConfig::read(&a.region_config)?;
    let window = region.event_window()?;
    ensure!(
        a.patch_size > 0 && a.stride > 0,
        "patch size and stride must be positive"
    );
    let inventory = EventInventory::read_geojson(&a.inventory)
        .with_context(|| format!("reading inventory {}", a.inventory.display()))?;
    ensure!(
        a.dem.exists(),
        "DEM file {} does not exist",
        a.dem.display()
    );

    let items: Vec<SceneRecord> = read_json(&a.scenes.join("items.json"))?;
    let excluded: HashSet<&str> = region.excluded_item_ids.iter().map(String::as_str).collect();
    let mut records: Vec<SceneRecord> = items
        .into_iter()
        .filter(|r| !excluded.contains(r.item_id.as_str()))
        .collect();
    for r in &mut records {
        r.epoch = classify_epoch(r.acquired, &window);
    }
    let pairs_by_id = assemble_pairs(&records);
    ensure!(
        !pairs_by_id.is_empty(),
        "no pre/post scene pair among {} scenes",
        records.len()
    );
    let mut used: Vec<&str> = Vec::new();
    for (p, q) in &pairs_by_id {
        for id in [p.item_id.as_str(), q.item_id.as_str()] {
            if !used.contains(&id) {
                used.push(id);
            }
        }
    }

    let first = read_raster(&a.scenes.join(format!("{}.rpk", used[0])))?;
    let reference = *first.transform();
    let (rows, cols) = (first.rows(), first.cols());
    let mut scenes = Vec::with_capacity(used.len());
    for (i, id) in used.iter().enumerate() {
        let spectra = if i == 0 {
            first.clone()
        } else {
            read_raster(&a.scenes.join(format!("{id}.rpk")))?
        };
        let cloud = read_raster(&a.scenes.join(format!("{id}.cloud.rpk")))?;
        scenes.push(SceneInput {
            scene_id: id.to_string(),
            spectra: align(&format!("scene {id}"), spectra, &reference, rows, cols, Resampling::Bilinear)?,
            cloud: align(&format!("cloud mask {id}"), cloud, &reference, rows, cols, Resampling::Nearest)?,
        });
    }
    let dem = align("DEM", read_raster(&a.dem)?, &reference, rows, cols, Resampling::Bilinear)?;
    let dem = build_dem_stack(&dem).context("building the DEM stack")?;
    let gt = landslide_core::geodata::rasterize_polygons(&inventory, &reference, rows, cols)?;
    let pairs: Vec<(usize, usize)> = pairs_by_id
        .iter()
        .map(|(p, q)| {
            let idx = |id: &str| used.iter().position(|u| *u == id).expect("collected above");
            (idx(&p.item_id), idx(&q.item_id))
        })
        .collect();
    let inventory_id = inventory.inventory_id.clone();
    let region_data = Region {
        inventory_id: inventory_id.clone(),
        scenes,
        dem,
        gt,
    };

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let manifest_path = a.out.join(MANIFEST);
    let mut manifest = if a.append && manifest_path.exists() {
        read_manifest(&manifest_path)?
    } else {
        Vec::new()
    };
    let cfg = ExtractConfig {
        patch_size: a.patch_size,
        stride: a.stride,
    };
    let (new_records, summary) = extract_dataset(&region_data, &pairs, &cfg, &a.out)?;
    let known: HashSet<String> = manifest.iter().map(|r| r.meta.sample_id.clone()).collect();
    if let Some(dup) = new_records.iter().find(|r| known.contains(&r.meta.sample_id)) {
        bail!("sample {} already in {}", dup.meta.sample_id, manifest_path.display());
    }
    manifest.extend(new_records);
    write_manifest(&manifest_path, &manifest)?;
    fs::write(a.out.join(format!("region_{inventory_id}.json")), region_text)?;
    println!(
        "{inventory_id}: {} pairs, {} windows, kept {}, rejected nodata {}, cloud_cover {}, no_landslide {}",
        pairs.len(),
        summary.windows,
        summary.kept,
        summary.rejected_nodata,
        summary.rejected_cloud,
        summary.rejected_no_landslide
    );
    Ok(())
}

pub fn split(a: &SplitArgs) -> Result<()> {
    let spec: SplitSpec = read_json(&a.spec)?;
    let path = a.dataset.join(MANIFEST);
    let records = read_manifest(&path)?;
    let labelled = split_dataset(&records, &spec, a.seed)?;
    write_manifest(&path, &labelled)?;
    let count = |s| labelled.iter().filter(|r| r.split == s).count();
    println!(
        "train {}, val {}, test {}, excluded_eval {}",
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        count(Split::ExcludedEval)
    );
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    best_epoch: usize,
    best_val_loss: f64,
    epochs: usize,
    param_count: usize,
    dataset: &'a str,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    let config: TrainConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    config.validate()?;
    let dataset: PathBuf = match (&a.dataset, &config.dataset_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => bail!("no dataset given: pass --dataset or set dataset_dir"),
    };
    let records = read_manifest(&dataset.join(MANIFEST))?;
    let train_set = DiskSource::split(&dataset, &records, Split::Train);
    let val_set = DiskSource::split(&dataset, &records, Split::Val);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(a.out.join("config.json"), &text)?;
    let outcome = train_model(&config, &train_set, &val_set, Some(&a.out))?;
    write_checkpoint(&a.out.join("best.ckpt"), &outcome.best)?;
    write_json(
        &a.out.join("summary.json"),
        &RunSummary {
            best_epoch: outcome.best_epoch,
            best_val_loss: outcome.best_val_loss,
            epochs: outcome.stats.len(),
            param_count: outcome.model.param_count(),
            dataset: &dataset.to_string_lossy(),
        },
    )?;
    println!(
        "best epoch {} (val loss {:.6}) of {}",
        outcome.best_epoch,
        outcome.best_val_loss,
        outcome.stats.len()
    );
    Ok(())
}

fn parse_split(name: &str) -> Result<Split> {
    Ok(match name {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        "excluded_eval" => Split::ExcludedEval,
        other => bail!("unknown split {other:?}"),
    })
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let split = parse_split(&a.split)?;
    ensure!(a.batch_size > 0, "batch size must be positive");
    let ck = read_checkpoint(&a.checkpoint)
        .with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let model = BbuNet::<f32>::from_checkpoint(&ck)?;
    if let Some(path) = &a.config {
        let config: TrainConfig = read_json(path)?;
        let expected = serde_json::to_value(&config.model)?;
        ensure!(
            expected == ck.header.model,
            "model config in {} does not match the checkpoint",
            path.display()
        );
    }
    let records = read_manifest(&a.dataset.join(MANIFEST))?;
    let source = DiskSource::split(&a.dataset, &records, split);
    ensure!(!source.records().is_empty(), "split {} is empty", a.split);
    let result = eval_model(&model, &source, a.batch_size)?;
    let name = a.model_name.clone().unwrap_or_else(|| {
        if model.config().use_bbf { "bbunet" } else { "bbunet_no_bbf" }.to_string()
    });
    ensure_parent(&a.report)?;
    write_report(
        &a.report,
        &[ReportRow {
            model: name,
            counts: result.counts,
        }],
    )?;
    println!(
        "{} samples: f1 {:.4}, precision {:.4}, recall {:.4}, loss {:.6}",
        result.samples,
        result.counts.f1(),
        result.counts.precision(),
        result.counts.recall(),
        result.loss
    );
    Ok(())
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let ck = read_checkpoint(&a.checkpoint)
        .with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let model = BbuNet::<f32>::from_checkpoint(&ck)?;
    let sample = read_sample(&a.sample).with_context(|| format!("reading {}", a.sample.display()))?;
    let n = sample.size;
    let transform = match sample.meta.transform {
        Some(t) => t,
        None => GeoTransform::new(0.0, n as f64, 1.0, 1.0, sample.meta.crs)?,
    };
    let batch = collate::<f32>(std::slice::from_ref(&sample))?;
    let logits = model.forward(&batch.pre, &batch.post, &batch.dem)?;
    let mask = predict_mask(&logits.data(), model.config().threshold);
    let grid = RasterGrid::from_u8(n, n, mask, transform, "change")?;
    ensure_parent(&a.out)?;
    write_raster_pack(&grid, &a.out)?;
    let changed = grid.band_u8(0).expect("u8").iter().filter(|&&v| v == 1).count();
    println!("{changed} of {} pixels flagged", n * n);
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        size: a.size,
        ..SynthConfig::default()
    };
    let records = write_synthetic_dataset(&a.out, &cfg, a.seed, [a.train, a.val, a.test])?;
    println!("{} samples written to {}", records.len(), a.out.display());
    Ok(())
}
