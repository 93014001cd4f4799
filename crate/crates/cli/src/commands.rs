use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use sentifuse_annotation::http::AppState;
use sentifuse_annotation::{CampaignError, CampaignStore, DEFAULT_LEASE_SECS};
use sentifuse_core::dataset::{
    aggregate_per_image, consensus_subset, dedupe_grades, read_grades_csv, write_dataset,
    ClassCounts, ClassSet, Dataset, DatasetError, SentimentLabel,
};
use sentifuse_core::experiment::{
    cross_dataset, cross_dataset_matrix, fit_dataset, indoor_influence, render_ablation,
    render_cross_matrix, render_cv, render_indoor, run_ablation_suite, run_cv, AttributeSet,
    ExperimentError, NeutralPolicy,
};
use sentifuse_core::fusion::{save_checkpoint, ClassWeights, FusionError};
use sentifuse_core::geo::{
    cluster_class, default_cluster_params, filter_outdoor, heatmap_grid, income_report,
    points_bbox, read_points_csv, render_income_report, write_clusters_csv, write_grid_csv,
    write_points_csv, BBox, GeoError, GeoPoint, PolygonLayer,
};
use sentifuse_core::synthetic::{synthetic_dataset, SyntheticConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{Command, Failure};

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Fusion(f) => f.into(),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<FusionError> for Failure {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::Config(_) | FusionError::Dimension { .. } | FusionError::EmptyClass(_) => {
                Failure::Input(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<GeoError> for Failure {
    fn from(e: GeoError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::Storage(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn runtime(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{context}: {e}"))
}

/// Output directory for one run. Every file goes through here so the
/// directory always carries the resolved run configuration.
struct Output {
    dir: PathBuf,
}

impl Output {
    fn create(dir: &Path, subcommand: &str, config: Value) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| runtime(dir.display(), e))?;
        let out = Output {
            dir: dir.to_path_buf(),
        };
        let mut record = serde_json::Map::new();
        record.insert("subcommand".into(), json!(subcommand));
        if let Value::Object(m) = config {
            record.extend(m);
        }
        out.json("run_config.json", &Value::Object(record))?;
        Ok(out)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, text: &str) -> Result<(), Failure> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| runtime(p.display(), e))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| runtime(name, e))?;
        s.push('\n');
        self.text(name, &s)
    }

    fn file(&self, name: &str) -> Result<fs::File, Failure> {
        let p = self.path(name);
        fs::File::create(&p).map_err(|e| runtime(p.display(), e))
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    Ok(Dataset::load(path)?)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn open_input(path: &Path) -> Result<fs::File, Failure> {
    fs::File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_points(path: &Path) -> Result<Vec<GeoPoint>, Failure> {
    Ok(read_points_csv(open_input(path)?)?)
}

fn parse_label(s: &str) -> Result<SentimentLabel, Failure> {
    s.parse()
        .map_err(|_| Failure::Usage(format!("unknown class {s:?} (negative, neutral, positive)")))
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::AggregateLabels { grades, out } => aggregate_labels(&grades, &out.out),
        Command::Consensus { votes, k, out } => consensus(&votes, k, &out.out),
        Command::ValidateManifest { manifest } => validate_manifest(&manifest),
        Command::ServeAnnotation {
            port,
            host,
            data_dir,
            lease_hours,
        } => serve(&host, port, &data_dir, lease_hours),
        Command::Cv {
            manifest,
            save_model,
            train,
            out,
        } => {
            let resolved = train.resolve(AttributeSet::SunYolo)?;
            let ds = load_dataset(&manifest)?;
            let report = run_cv(&ds, resolved.attrs, &resolved.train)?;
            let output = Output::create(
                &out.out,
                "cv",
                json!({"manifest": manifest, "training": resolved, "save_model": save_model}),
            )?;
            let text = render_cv(&stem(&manifest), &report);
            output.text("report.txt", &text)?;
            output.json("report.json", &report)?;
            if let Some(path) = save_model {
                let model = fit_dataset(&ds, resolved.attrs, &resolved.train)?;
                save_checkpoint(&path, &model).map_err(|e| runtime(path.display(), e))?;
            }
            print!("{text}");
            Ok(())
        }
        Command::Ablation {
            manifest,
            train,
            out,
        } => {
            let resolved = train.resolve(AttributeSet::SunYolo)?;
            let datasets = manifest
                .iter()
                .map(|m| load_dataset(m))
                .collect::<Result<Vec<_>, _>>()?;
            let mut by_attrs: Vec<(AttributeSet, Vec<_>)> =
                AttributeSet::ALL.iter().map(|&a| (a, Vec::new())).collect();
            for ds in &datasets {
                for (row, (attrs, report)) in by_attrs
                    .iter_mut()
                    .zip(run_ablation_suite(ds, &resolved.train)?)
                {
                    debug_assert_eq!(row.0, attrs);
                    row.1.push(report);
                }
            }
            let columns: Vec<String> = manifest.iter().map(|m| stem(m)).collect();
            let output = Output::create(
                &out.out,
                "ablation",
                json!({"manifests": manifest, "training": resolved.train}),
            )?;
            let text = render_ablation(&columns, &by_attrs);
            output.text("report.txt", &text)?;
            let rows: Vec<Value> = by_attrs
                .iter()
                .map(|(a, reports)| json!({"attrs": a, "reports": reports}))
                .collect();
            output.json("report.json", &json!({"columns": columns, "rows": rows}))?;
            print!("{text}");
            Ok(())
        }
        Command::IndoorInfluence {
            manifest,
            indoor,
            train,
            out,
        } => {
            let resolved = train.resolve(AttributeSet::SunYolo)?;
            let outdoor_ds = load_dataset(&manifest)?;
            let indoor_ds = load_dataset(&indoor)?;
            let result =
                indoor_influence(&outdoor_ds, &indoor_ds, resolved.attrs, &resolved.train)?;
            let output = Output::create(
                &out.out,
                "indoor-influence",
                json!({"manifest": manifest, "indoor": indoor, "training": resolved}),
            )?;
            let mut text = render_indoor(&result);
            text.push('\n');
            text.push_str(&render_cv("outdoor only", &result.outdoor_only));
            text.push('\n');
            text.push_str(&render_cv("outdoor + indoor", &result.with_indoor));
            output.text("report.txt", &text)?;
            output.json("report.json", &result)?;
            print!("{text}");
            Ok(())
        }
        Command::CrossEval {
            manifest,
            train,
            test,
            flags,
            out,
        } => {
            let resolved = flags.resolve(AttributeSet::SunYolo)?;
            match (train, test) {
                (Some(train), Some(test)) => {
                    if !manifest.is_empty() {
                        return Err(Failure::Usage(
                            "use either --train/--test or --manifest".into(),
                        ));
                    }
                    let tr = load_dataset(&train)?;
                    let te = load_dataset(&test)?;
                    let policy = NeutralPolicy::infer(tr.class_set(), te.class_set());
                    let outcome = cross_dataset(&tr, &te, policy, resolved.attrs, &resolved.train)?;
                    let output = Output::create(
                        &out.out,
                        "cross-eval",
                        json!({"train": train, "test": test, "training": resolved}),
                    )?;
                    let text = format!(
                        "train: {}\ntest: {}\npolicy: {:?}\ntraining records: {}\nexcluded (id overlap): {}\ndropped neutral test records: {}\naccuracy: {:.2}\nF-score: {:.2}\n",
                        stem(&train),
                        stem(&test),
                        outcome.policy,
                        outcome.train_size,
                        outcome.excluded_overlap,
                        outcome.dropped_test,
                        outcome.report.accuracy,
                        outcome.report.macro_f1,
                    );
                    output.text("report.txt", &text)?;
                    output.json("report.json", &outcome)?;
                    print!("{text}");
                }
                _ => {
                    if manifest.len() < 2 {
                        return Err(Failure::Usage(
                            "cross-eval needs --train and --test, or at least two --manifest"
                                .into(),
                        ));
                    }
                    let datasets = manifest
                        .iter()
                        .map(|m| Ok((stem(m), load_dataset(m)?)))
                        .collect::<Result<Vec<_>, Failure>>()?;
                    let matrix = cross_dataset_matrix(&datasets, resolved.attrs, &resolved.train)?;
                    let output = Output::create(
                        &out.out,
                        "cross-eval",
                        json!({"manifests": manifest, "training": resolved}),
                    )?;
                    let text = render_cross_matrix(&matrix);
                    output.text("report.txt", &text)?;
                    output.json("report.json", &matrix)?;
                    print!("{text}");
                }
            }
            Ok(())
        }
        Command::GeoFilter {
            points,
            footprints,
            out,
        } => {
            let pts = read_points(&points)?;
            let layer = PolygonLayer::load(&footprints)?;
            let kept = filter_outdoor(&pts, &layer);
            let output = Output::create(
                &out.out,
                "geo-filter",
                json!({"points": points, "footprints": footprints}),
            )?;
            write_points_csv(output.file("outdoor_points.csv")?, &kept)?;
            let summary = json!({
                "input_points": pts.len(),
                "footprints": layer.features.len(),
                "kept": kept.len(),
                "removed": pts.len() - kept.len(),
            });
            output.json("summary.json", &summary)?;
            println!(
                "kept {} of {} points ({} inside footprints)",
                kept.len(),
                pts.len(),
                pts.len() - kept.len()
            );
            Ok(())
        }
        Command::Cluster {
            points,
            eps,
            minpts,
            class,
            out,
        } => {
            let labels = match &class {
                Some(c) => vec![parse_label(c)?],
                None => ClassSet::Ternary.labels().to_vec(),
            };
            let pts = read_points(&points)?;
            let mut runs = Vec::new();
            for label in &labels {
                let (d_eps, d_min) = default_cluster_params(*label);
                runs.push((*label, eps.unwrap_or(d_eps), minpts.unwrap_or(d_min)));
            }
            let params: Vec<Value> = runs
                .iter()
                .map(|(l, e, m)| json!({"class": l, "eps": e, "minpts": m}))
                .collect();
            let output = Output::create(
                &out.out,
                "cluster",
                json!({"points": points, "runs": params}),
            )?;
            let mut summary = Vec::new();
            for (label, eps, min_pts) in runs {
                let (selected, result) = cluster_class(&pts, label, eps, min_pts)?;
                write_clusters_csv(
                    output.file(&format!("clusters_{label}.csv"))?,
                    &selected,
                    &result,
                )?;
                println!(
                    "{label}: {} points, {} clusters, {} noise (eps {eps}, minpts {min_pts})",
                    selected.len(),
                    result.n_clusters,
                    result.noise_count()
                );
                summary.push(json!({
                    "class": label,
                    "eps": eps,
                    "minpts": min_pts,
                    "points": selected.len(),
                    "clusters": result.n_clusters,
                    "cluster_sizes": result.cluster_sizes(),
                    "noise": result.noise_count(),
                }));
            }
            output.json("summary.json", &summary)?;
            Ok(())
        }
        Command::IncomeReport {
            points,
            tracts,
            income_attr,
            out,
        } => {
            let pts = read_points(&points)?;
            let layer = PolygonLayer::load(&tracts)?;
            let report = income_report(&pts, &layer, &income_attr);
            let output = Output::create(
                &out.out,
                "income-report",
                json!({"points": points, "tracts": tracts, "income_attr": income_attr}),
            )?;
            let text = render_income_report(&report);
            output.text("income_report.txt", &text)?;
            output.json("income_report.json", &report)?;
            print!("{text}");
            Ok(())
        }
        Command::Heatmap {
            points,
            cell_size,
            bbox,
            out,
        } => {
            let pts = read_points(&points)?;
            let bbox = match bbox {
                Some(b) if b.len() != 4 => {
                    return Err(Failure::Usage(format!(
                        "--bbox takes min_lat,min_lon,max_lat,max_lon, got {} values",
                        b.len()
                    )))
                }
                Some(b) => BBox {
                    min_lat: b[0],
                    min_lon: b[1],
                    max_lat: b[2],
                    max_lon: b[3],
                },
                None => points_bbox(&pts).ok_or_else(|| Failure::Input("no points".into()))?,
            };
            let grid =
                heatmap_grid(&pts, cell_size, bbox).map_err(|e| Failure::Usage(e.to_string()))?;
            let output = Output::create(
                &out.out,
                "heatmap",
                json!({"points": points, "cell_size": cell_size, "bbox": bbox}),
            )?;
            for label in ClassSet::Ternary.labels() {
                write_grid_csv(
                    output.file(&format!("heatmap_{label}.csv"))?,
                    grid.class_grid(*label),
                )?;
            }
            output.json(
                "heatmap.json",
                &json!({
                    "bbox": grid.bbox,
                    "cell_size": grid.cell_size,
                    "rows": grid.rows,
                    "cols": grid.cols,
                    "row_order": "south to north",
                    "counted": grid.total(),
                    "outside": grid.outside,
                }),
            )?;
            println!(
                "{} x {} grid, {} points counted, {} outside",
                grid.rows,
                grid.cols,
                grid.total(),
                grid.outside
            );
            Ok(())
        }
        Command::Synth {
            n,
            deep_dim,
            classes,
            seed,
            uninformative,
            name,
            out,
        } => {
            let class_set = ClassSet::from_n_classes(classes).ok_or_else(|| {
                Failure::Usage(format!("--classes must be 2 or 3, got {classes}"))
            })?;
            let ds = synthetic_dataset(&SyntheticConfig {
                n,
                deep_dim,
                class_set,
                informative_attributes: !uninformative,
                seed,
                id_prefix: name.clone(),
                ..SyntheticConfig::default()
            });
            let output = Output::create(
                &out.out,
                "synth",
                json!({"n": n, "deep_dim": deep_dim, "classes": classes, "seed": seed, "informative": !uninformative, "name": name}),
            )?;
            let manifest = output.path(&format!("{name}.toml"));
            write_dataset(&manifest, &ds).map_err(|e| runtime(manifest.display(), e))?;
            let points: Vec<GeoPoint> = ds
                .records
                .iter()
                .filter_map(|r| {
                    Some(GeoPoint {
                        image_id: r.image_id.clone(),
                        lat: r.geo?.0,
                        lon: r.geo?.1,
                        label: r.label?,
                    })
                })
                .collect();
            write_points_csv(output.file(&format!("{name}_points.csv"))?, &points)?;
            println!(
                "wrote {} ({} records)",
                manifest.display(),
                ds.records.len()
            );
            Ok(())
        }
    }
}

fn aggregate_labels(grades: &Path, out: &Path) -> Result<(), Failure> {
    let records = read_grades_csv(open_input(grades)?)?;
    let deduped = dedupe_grades(&records);
    let labels = aggregate_per_image(&deduped)?;
    let output = Output::create(out, "aggregate-labels", json!({"grades": grades}))?;
    let mut w = csv::Writer::from_writer(output.file("labels.csv")?);
    w.write_record(["image_id", "mean_grade", "n_raters", "label"])
        .map_err(|e| runtime("labels.csv", e))?;
    let mut counts = ClassCounts::default();
    for l in &labels {
        w.write_record([
            l.image_id.as_str(),
            &format!("{:.4}", l.mean_grade),
            &l.n_raters.to_string(),
            l.label.as_str(),
        ])
        .map_err(|e| runtime("labels.csv", e))?;
        match l.label {
            SentimentLabel::Negative => counts.negative += 1,
            SentimentLabel::Neutral => counts.neutral += 1,
            SentimentLabel::Positive => counts.positive += 1,
        }
    }
    w.flush().map_err(|e| runtime("labels.csv", e))?;
    let present: Vec<usize> = [counts.negative, counts.neutral, counts.positive]
        .into_iter()
        .filter(|&c| c > 0)
        .collect();
    let weights = ClassWeights::from_counts(&[counts.negative, counts.neutral, counts.positive])
        .ok()
        .map(|w| w.0);
    let summary = json!({
        "grades_read": records.len(),
        "duplicates_dropped": records.len() - deduped.len(),
        "images": labels.len(),
        "counts": {"negative": counts.negative, "neutral": counts.neutral, "positive": counts.positive},
        "class_weights": weights,
        "classes_present": present.len(),
    });
    output.json("summary.json", &summary)?;
    println!(
        "{} images: {} negative, {} neutral, {} positive ({} duplicate grades dropped)",
        labels.len(),
        counts.negative,
        counts.neutral,
        counts.positive,
        records.len() - deduped.len()
    );
    Ok(())
}

fn consensus(votes: &Path, k: Option<usize>, out: &Path) -> Result<(), Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_input(votes)?);
    let mut by_image: BTreeMap<String, Vec<SentimentLabel>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Failure::Input(format!("{}: {e}", votes.display())))?;
        if row.len() < 2 {
            return Err(Failure::Input(format!(
                "{}: expected image_id,vote",
                votes.display()
            )));
        }
        let vote: SentimentLabel = row[1].parse()?;
        by_image.entry(row[0].to_string()).or_default().push(vote);
    }
    let levels = match k {
        Some(k) => vec![k],
        None => vec![5, 4, 3],
    };
    let output = Output::create(out, "consensus", json!({"votes": votes, "levels": levels}))?;
    let mut summary = Vec::new();
    for k in levels {
        let subset = consensus_subset(&by_image, k)?;
        let mut w = csv::Writer::from_writer(output.file(&format!("consensus_k{k}.csv"))?);
        w.write_record(["image_id", "label"])
            .map_err(|e| runtime("consensus", e))?;
        for (id, label) in &subset {
            w.write_record([id.as_str(), label.as_str()])
                .map_err(|e| runtime("consensus", e))?;
        }
        w.flush().map_err(|e| runtime("consensus", e))?;
        let pos = subset
            .values()
            .filter(|&&l| l == SentimentLabel::Positive)
            .count();
        let neg = subset.len() - pos;
        println!(
            "k={k}: {} images ({pos} positive, {neg} negative)",
            subset.len()
        );
        summary.push(json!({"k": k, "images": subset.len(), "positive": pos, "negative": neg}));
    }
    output.json("summary.json", &summary)
}

fn validate_manifest(manifest: &Path) -> Result<(), Failure> {
    let ds = load_dataset(manifest)?;
    let m = &ds.manifest;
    println!("{}: ok", manifest.display());
    println!("dataset: {:?}", m.dataset_id);
    println!("deep dimension: {}", m.deep_dim);
    println!("class set: {:?}", m.class_set);
    println!(
        "records: {} (negative {}, neutral {}, positive {}, unlabeled {})",
        m.record_count,
        m.class_counts.negative,
        m.class_counts.neutral,
        m.class_counts.positive,
        m.class_counts.unlabeled
    );
    Ok(())
}

fn serve(host: &str, port: u16, data_dir: &Path, lease_hours: u64) -> Result<(), Failure> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Failure::Usage(format!("bad address {host}:{port}: {e}")))?;
    fs::create_dir_all(data_dir).map_err(|e| runtime(data_dir.display(), e))?;
    let lease_secs = lease_hours.checked_mul(3600).unwrap_or(DEFAULT_LEASE_SECS);
    let store = CampaignStore::open(data_dir.join("campaigns.log"))?.with_lease_secs(lease_secs);
    let images = data_dir.join("images");
    let state = Arc::new(AppState {
        store,
        image_dir: images.is_dir().then_some(images),
        data_dir: Some(data_dir.to_path_buf()),
    });
    let rt = tokio::runtime::Runtime::new().map_err(|e| runtime("runtime", e))?;
    eprintln!(
        "serving annotation campaigns on http://{addr} (data: {})",
        data_dir.display()
    );
    rt.block_on(sentifuse_annotation::http::serve(addr, state))
        .map_err(|e| runtime(addr, e))
}
