use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use marf::dataset::{featurize, read_features, read_scans, synthesize_scans, write_features, write_scans};
use marf::eval::{benchmark, confusion_and_rates, noise_study, pr_curve, NoiseStudyOptions};
use marf::marf::train_marf;
use marf::model_io::{load_model, model_to_string};
use marf::sim::{random_room, RoomSpec, SceneConfig};
use marf::{FeatureVector, Label, MarfModel};
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, Effective};
use crate::provenance::Provenance;
use crate::CliError;

fn op(context: impl std::fmt::Display) -> impl FnOnce(marf::Error) -> CliError {
    move |e| CliError::Op(format!("{context}: {e}"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Op(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Op(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Op(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Op(format!("{}: {e}", path.display()))
}

fn load_features(prov: &mut Provenance, path: &Path) -> Result<Vec<FeatureVector>, CliError> {
    let bytes = prov.read_input(path)?;
    read_features(&bytes[..]).map_err(op(path.display()))
}

fn load(prov: &mut Provenance, path: &Path) -> Result<MarfModel, CliError> {
    prov.read_input(path)?;
    load_model(path).map_err(op(path.display()))
}

pub struct Ctx<'a> {
    pub cfg: &'a Effective,
    pub quiet: bool,
}

impl Ctx<'_> {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub fn run(cmd: Command, ctx: &Ctx<'_>) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    match cmd {
        Command::Synth { out, rooms, frames, beams, noise_sigma } => {
            if rooms == 0 || frames == 0 || beams == 0 {
                return Err(CliError::Usage("--rooms, --frames and --beams must be positive".into()));
            }
            if noise_sigma.is_nan() || noise_sigma < 0.0 {
                return Err(CliError::Usage("--noise-sigma must be >= 0".into()));
            }
            let prov = Provenance::new("synth", cfg);
            let spec = RoomSpec { beam_count: beams, frames, range_noise_sigma: noise_sigma, ..RoomSpec::default() };
            let scans = synthesize_scans(&spec, rooms, cfg.seed).map_err(op("synth"))?;
            let mut w = create(&out)?;
            let header = json!({ "provenance": prov.to_value(), "room_spec": spec }).to_string();
            write_scans(&mut w, &scans, Some(&header)).and_then(|_| w.flush()).map_err(io_err(&out))?;
            ctx.note(format!("wrote {} scans to {}", scans.len(), out.display()));
        }
        Command::Features { scans, out } => {
            let mut prov = Provenance::new("features", cfg);
            let bytes = prov.read_input(&scans)?;
            let data = read_scans(&bytes[..]).map_err(op(scans.display()))?;
            let vectors = featurize(&data, cfg.jump_threshold).map_err(op(scans.display()))?;
            let mut w = create(&out)?;
            write_features(&mut w, &vectors, Some(&prov.to_line())).map_err(op(out.display()))?;
            w.flush().map_err(io_err(&out))?;
            let legs = vectors.iter().filter(|v| v.is_leg()).count();
            ctx.note(format!("{} clusters ({legs} legs) from {} scans", vectors.len(), data.len()));
        }
        Command::Train { features, out } => {
            let mut prov = Provenance::new("train", cfg);
            let data = load_features(&mut prov, &features)?;
            let config = cfg.marf_config();
            ctx.note(format!("training {} trees on {} clusters", config.trees_per_scale.iter().sum::<usize>(), data.len()));
            let mut model = train_marf(&data, &config).map_err(op(features.display()))?;
            model.provenance = Some(prov.to_value());
            let mut w = create(&out)?;
            w.write_all(model_to_string(&model).as_bytes())
                .and_then(|_| w.flush())
                .map_err(io_err(&out))?;
            ctx.note(format!("wrote {}", out.display()));
        }
        Command::Predict { model, features, out } => {
            let mut prov = Provenance::new("predict", cfg);
            let m = load(&mut prov, &model)?;
            let data = load_features(&mut prov, &features)?;
            let mut w = create(&out)?;
            let mut body = || -> std::io::Result<()> {
                writeln!(w, "# {}", prov.to_line())?;
                writeln!(w, "id,scan_id,probability,label")?;
                for (i, v) in data.iter().enumerate() {
                    let p = m.predict(v);
                    writeln!(w, "{i},{},{},{}", v.scan_id, p.probability, p.label.bit())?;
                }
                w.flush()
            };
            body().map_err(io_err(&out))?;
            ctx.note(format!("{} predictions written to {}", data.len(), out.display()));
        }
        Command::Eval { model, features, out_dir } => {
            let mut prov = Provenance::new("eval", cfg);
            let m = load(&mut prov, &model)?;
            let data = load_features(&mut prov, &features)?;
            if data.is_empty() {
                return Err(CliError::Op(format!("{}: empty dataset, nothing to evaluate", features.display())));
            }
            let truth = data
                .iter()
                .enumerate()
                .map(|(i, v)| v.label.ok_or_else(|| CliError::Op(format!("{}: row {i} has no label", features.display()))))
                .collect::<Result<Vec<Label>, _>>()?;
            let pred: Vec<Label> = data.iter().map(|v| m.predict(v).label).collect();
            let (counts, precision, recall) = confusion_and_rates(&pred, &truth).map_err(op("eval"))?;
            let curve = pr_curve(&m, &data).map_err(op("eval"))?;
            let metrics = json!({
                "provenance": prov.to_value(),
                "beta": m.beta,
                "clusters": data.len(),
                "counts": counts,
                "precision": precision,
                "recall": recall,
                "pr_curve": "pr_curve.csv",
                "pr_grid": curve.grid,
            });
            write_json(&out_dir.join("metrics.json"), &metrics)?;
            let path = out_dir.join("pr_curve.csv");
            let mut w = create(&path)?;
            let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            let mut body = || -> std::io::Result<()> {
                writeln!(w, "# {}", prov.to_line())?;
                writeln!(w, "beta,precision,recall,tp,fp,fn,tn")?;
                for p in &curve.points {
                    let c = p.counts;
                    writeln!(w, "{},{},{},{},{},{},{}", p.beta, fmt(p.precision), fmt(p.recall), c.tp, c.fp, c.fn_, c.tn)?;
                }
                w.flush()
            };
            body().map_err(io_err(&path))?;
            let show = |x: Option<f64>| x.map_or("undefined".to_string(), |v| format!("{:.2}%", v * 100.0));
            ctx.note(format!("precision {} recall {} ({} clusters)", show(precision), show(recall), data.len()));
        }
        Command::Bench { model, scans, repetitions, out } => {
            let mut prov = Provenance::new("bench", cfg);
            let m = load(&mut prov, &model)?;
            let bytes = prov.read_input(&scans)?;
            let scans_data: Vec<_> = read_scans(&bytes[..])
                .map_err(op(scans.display()))?
                .into_iter()
                .map(|(s, _)| s)
                .collect();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .map_err(|e| CliError::Op(format!("thread pool: {e}")))?;
            let report = pool
                .install(|| benchmark(&m, &scans_data, repetitions, cfg.jump_threshold))
                .map_err(op("bench"))?;
            ctx.note(format!(
                "median {:.3} ms/scan, p95 {:.3} ms, {:.1} scans/s",
                report.total.median * 1e3,
                report.total.p95 * 1e3,
                report.scans_per_second
            ));
            write_json(&out, &json!({ "provenance": prov.to_value(), "report": report }))?;
        }
        Command::NoiseStudy { out, scene, sigmas, frames, min_points } => {
            let mut prov = Provenance::new("noise-study", cfg);
            let scene: SceneConfig = match &scene {
                Some(p) => {
                    let bytes = prov.read_input(p)?;
                    serde_json::from_slice(&bytes).map_err(|e| CliError::Op(format!("{}: {e}", p.display())))?
                }
                None => random_room(&RoomSpec { frames: 200, ..RoomSpec::default() }, cfg.seed),
            };
            let opts = NoiseStudyOptions { jump_threshold: cfg.jump_threshold, seed: cfg.seed, min_points, ..Default::default() };
            let report = noise_study(&scene, &sigmas, frames, &opts).map_err(op("noise-study"))?;
            for level in &report.levels {
                ctx.note(format!(
                    "sigma {}: {} pairs, {} frames skipped",
                    level.sigma, level.clusters_matched, level.frames_skipped
                ));
            }
            write_json(&out, &json!({ "provenance": prov.to_value(), "report": report }))?;
        }
        Command::TreeStats { model, out } => {
            let mut prov = Provenance::new("tree-stats", cfg);
            let m = load(&mut prov, &model)?;
            let per_scale: Vec<_> = m
                .arfs
                .iter()
                .map(|arf| {
                    let stats: Vec<_> = arf.trees.iter().map(|t| t.stats()).collect();
                    let n = stats.len() as f64;
                    json!({
                        "scale": arf.scale,
                        "trees": stats.len(),
                        "mean_leaf_count": stats.iter().map(|s| s.leaf_count as f64).sum::<f64>() / n,
                        "mean_leaf_depth": stats.iter().map(|s| s.mean_leaf_depth).sum::<f64>() / n,
                        "mean_node_count": stats.iter().map(|s| s.node_count as f64).sum::<f64>() / n,
                        "dichotomous_fraction": stats.iter().map(|s| s.dichotomous_count as f64).sum::<f64>()
                            / stats.iter().map(|s| (s.node_count - s.leaf_count) as f64).sum::<f64>().max(1.0),
                    })
                })
                .collect();
            let all: Vec<_> = m.arfs.iter().flat_map(|a| a.trees.iter().map(|t| t.stats())).collect();
            let summary = json!({
                "trees": all.len(),
                "mean_leaf_count": all.iter().map(|s| s.leaf_count as f64).sum::<f64>() / all.len() as f64,
                "mean_leaf_depth": all.iter().map(|s| s.mean_leaf_depth).sum::<f64>() / all.len() as f64,
            });
            ctx.note(format!("{} trees, mean leaf depth {:.2}", all.len(), summary["mean_leaf_depth"]));
            write_json(&out, &json!({ "provenance": prov.to_value(), "summary": summary, "scales": per_scale }))?;
        }
    }
    Ok(())
}
