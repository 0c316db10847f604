use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use otgate::evaluation::{metric_report, MetricReport};
use otgate::gating::{cluster_sample, label_sample, ClusteringSource, LabelMethod, TclustParams, TemplateDatabase, UNMATCHED};
use otgate::io::{
    dendrogram_to_json, load_csv, load_templates, save_summary, save_templates, to_newick, write_atomic, write_csv,
    DatasetManifest, ManifestEntry, ManifestOptions, Role, TemplateBundle,
};
use otgate::partition::{default_min_cluster_size, summarize_cytometry, DistanceMatrix, PartitionMetric};
use otgate::synthetic::{generate_synthetic, SyntheticSpec};
use otgate::templates::{
    optimal_flow_templates, BarycenterOptions, GroupCount, Linkage, MetaMethod, TemplateConfig, TemplateMethod,
};
use otgate::{CytometrySummary, LabeledEvents};

use crate::{ClassifyArgs, EvalArgs, Failure, SimulateArgs, SummarizeArgs, TemplatesArgs};

type Outcome = Result<(), Failure>;

fn stem(path: &Path) -> anyhow::Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| anyhow!("cannot derive an id from {}", path.display()))
}

fn read_events(path: &Path) -> anyhow::Result<LabeledEvents> {
    load_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn summarize_events(
    id: &str,
    x: &LabeledEvents,
    min_cluster_size: Option<usize>,
    equal_weights: bool,
) -> anyhow::Result<CytometrySummary> {
    if !x.is_labeled() {
        bail!(otgate::Error::Configuration(format!("'{id}' has no label column to summarize")));
    }
    let min = min_cluster_size.unwrap_or_else(|| default_min_cluster_size(x.dim()));
    summarize_cytometry(id, x, min, equal_weights).with_context(|| format!("summarizing '{id}'"))
}

pub fn summarize(a: SummarizeArgs) -> Outcome {
    let x = read_events(&a.input)?;
    let id = match a.id {
        Some(id) => id,
        None => stem(&a.input)?,
    };
    let s = summarize_events(&id, &x, a.min_cluster_size, a.equal_weights)?;
    save_summary(&s, &a.output)?;
    Ok(())
}

fn load_manifest(path: Option<&PathBuf>) -> anyhow::Result<Option<DatasetManifest>> {
    path.map(|p| DatasetManifest::load(p).with_context(|| format!("loading manifest {}", p.display())))
        .transpose()
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn parse_meta(name: &str, min_group_size: usize) -> Result<MetaMethod, Failure> {
    if name == "hdbscan" {
        return Ok(MetaMethod::Hdbscan {
            min_cluster_size: min_group_size,
        });
    }
    name.parse::<Linkage>()
        .map(MetaMethod::Hierarchical)
        .map_err(|_| usage(format!("unknown meta method '{name}' (complete, single, average, hdbscan)")))
}

fn parse_template_method(name: &str, template_k: usize, min_group_size: usize) -> Result<TemplateMethod, Failure> {
    match name {
        "pooling" => Ok(TemplateMethod::Pooling),
        "density" => Ok(TemplateMethod::Density {
            min_cluster_size: min_group_size,
        }),
        "kbarycenter" | "k-barycenter" => Ok(TemplateMethod::KBarycenter { k: template_k }),
        other => Err(usage(format!("unknown template method '{other}' (pooling, density, kbarycenter)"))),
    }
}

pub fn templates(a: TemplatesArgs) -> Outcome {
    let manifest = load_manifest(a.manifest.as_ref())?;
    let opts = manifest.as_ref().map(|m| m.options.clone()).unwrap_or_default();

    let mut sources: Vec<(String, PathBuf)> = manifest
        .iter()
        .flat_map(|m| m.entries_with(Role::Database))
        .map(|e| (e.id.clone(), e.path.clone()))
        .collect();
    for p in &a.inputs {
        sources.push((stem(p)?, p.clone()));
    }
    if sources.len() < 2 {
        return Err(usage("templates needs at least two database cytometries (--manifest or --input)"));
    }

    let min_cluster_size = a.min_cluster_size.or(opts.min_cluster_size);
    let equal_weights = a.equal_weights || opts.equal_weights;
    let markers = manifest.as_ref().and_then(|m| m.markers.clone());
    let db = sources
        .iter()
        .map(|(id, path)| {
            let x = read_events(path)?;
            if let Some(markers) = &markers {
                if x.markers() != markers.as_slice() {
                    bail!("'{id}' has markers {:?}, manifest expects {:?}", x.markers(), markers);
                }
            }
            summarize_events(id, &x, min_cluster_size, equal_weights)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let metric: PartitionMetric = a
        .metric
        .or(opts.metric.clone())
        .map(|m| m.parse())
        .transpose()
        .map_err(|e: otgate::Error| usage(e.to_string()))?
        .unwrap_or_default();
    let min_group_size = a.min_group_size.or(opts.min_group_size).unwrap_or(2);
    let meta = parse_meta(a.meta_method.as_deref().or(opts.meta_method.as_deref()).unwrap_or("complete"), min_group_size)?;
    let template_k = a
        .template_k
        .or(opts.template_k)
        .unwrap_or_else(|| db.iter().map(CytometrySummary::len).max().unwrap_or(1));
    let template = parse_template_method(
        a.template_method.as_deref().or(opts.template_method.as_deref()).unwrap_or("pooling"),
        template_k,
        min_group_size,
    )?;
    let groups = match a.k.or(opts.k) {
        Some(k) => GroupCount::Fixed(k),
        None => GroupCount::Auto,
    };
    let config = TemplateConfig {
        metric,
        meta,
        template,
        groups,
        barycenter: BarycenterOptions {
            seed: a.seed.or(opts.seed).unwrap_or(0),
            ..BarycenterOptions::default()
        },
    };

    let outcome = optimal_flow_templates(&db, &config)?;
    log::info!("{} groups, {} templates", outcome.partition.n_groups(), outcome.templates.len());

    let dir = &a.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(&dir.join("distances.csv"), distance_csv(&outcome.distances)?.as_bytes())?;
    let mut partition_csv = String::from("id,group\n");
    for (id, g) in outcome.partition.ids().iter().zip(outcome.partition.assignment()) {
        let g = g.map(|g| g.to_string()).unwrap_or_else(|| "noise".into());
        partition_csv.push_str(&format!("{},{g}\n", csv_field(id)));
    }
    write_atomic(&dir.join("partition.csv"), partition_csv.as_bytes())?;
    if let Some(tree) = &outcome.dendrogram {
        write_atomic(&dir.join("dendrogram.nwk"), format!("{}\n", to_newick(tree)).as_bytes())?;
        write_atomic(&dir.join("dendrogram.json"), dendrogram_to_json(tree).as_bytes())?;
    }
    let bundle = TemplateBundle {
        metric,
        database: db,
        partition: outcome.partition,
        templates: outcome.templates,
        dendrogram: outcome.dendrogram,
    };
    save_templates(&bundle, &dir.join("templates.json"))?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn distance_csv(dm: &DistanceMatrix) -> anyhow::Result<String> {
    let mut out = String::from("id");
    for id in dm.ids() {
        out.push(',');
        out.push_str(&csv_field(id));
    }
    out.push('\n');
    for (i, id) in dm.ids().iter().enumerate() {
        out.push_str(&csv_field(id));
        for j in 0..dm.len() {
            out.push_str(&format!(",{}", dm.get(i, j)));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct MethodResult {
    method: String,
    nearest_entry: Option<String>,
    unmatched: usize,
    metrics: Option<MetricReport>,
}

#[derive(Serialize)]
struct ClassificationReport {
    input: String,
    events: usize,
    group: usize,
    template: String,
    clustering_clusters: usize,
    results: Vec<MethodResult>,
}

fn read_cluster_ids(path: &Path, n: usize) -> anyhow::Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let ids = rdr
        .records()
        .map(|r| r.map(|r| r.get(0).unwrap_or("").to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    if ids.len() != n {
        bail!("{} has {} cluster ids for {n} events", path.display(), ids.len());
    }
    Ok(ids)
}

pub fn classify(a: ClassifyArgs) -> Outcome {
    let method: LabelMethod = a.method.parse().map_err(|e: otgate::Error| usage(e.to_string()))?;
    let manifest = load_manifest(a.manifest.as_ref())?;
    let opts: ManifestOptions = manifest.map(|m| m.options).unwrap_or_default();
    let bundle = load_templates(&a.templates).with_context(|| format!("loading {}", a.templates.display()))?;
    if bundle.templates.is_empty() {
        return Err(otgate::Error::Configuration("template bundle has no templates".into()).into());
    }
    let x = read_events(&a.input)?;

    let defaults = TclustParams::default();
    let source = match &a.clusters {
        Some(path) => ClusteringSource::External(read_cluster_ids(path, x.len())?),
        None => ClusteringSource::TclustTemplates(TclustParams {
            alpha: a.alpha.or(opts.tclust.alpha).unwrap_or(defaults.alpha),
            restriction_c: a.restriction_c.or(opts.tclust.restriction_c).unwrap_or(defaults.restriction_c),
            max_iter: a.max_iter.or(opts.tclust.max_iter).unwrap_or(defaults.max_iter),
            n_restarts: opts.tclust.n_restarts.unwrap_or(defaults.n_restarts),
            seed: a.seed.or(opts.seed).unwrap_or(defaults.seed),
            ..defaults
        }),
    };
    let metric = bundle.metric.cluster_metric().unwrap_or_default();
    let database = TemplateDatabase {
        db: &bundle.database,
        partition: &bundle.partition,
        templates: &bundle.templates,
    };

    let sample = cluster_sample(x.events(), &bundle.templates, &source)?;
    let primary = label_sample(x.events(), &sample, database, method, metric)?;
    let score = |labels: &[String]| x.labels().map(|truth| metric_report(truth, labels)).transpose();
    let result_of = |m: LabelMethod, c: &otgate::gating::Classification| -> anyhow::Result<MethodResult> {
        Ok(MethodResult {
            method: m.name().to_string(),
            nearest_entry: c.nearest_entry.clone(),
            unmatched: c.labels.iter().filter(|l| *l == UNMATCHED).count(),
            metrics: score(&c.labels)?,
        })
    };
    let mut results = vec![result_of(method, &primary)?];
    if a.all_methods {
        for m in LabelMethod::ALL.into_iter().filter(|&m| m != method) {
            match label_sample(x.events(), &sample, database, m, metric) {
                Ok(c) => results.push(result_of(m, &c)?),
                Err(otgate::Error::Configuration(msg)) => log::warn!("skipping {m}: {msg}"),
                Err(e) => return Err(e.into()),
            }
        }
    }

    let labelled = LabeledEvents::with_markers(x.markers().to_vec(), x.events().clone(), Some(primary.labels.clone()))?;
    write_csv(&labelled, &a.output)?;
    let report = ClassificationReport {
        input: a.input.display().to_string(),
        events: x.len(),
        group: primary.group,
        template: bundle.templates.iter().find(|t| t.group == primary.group).map(|t| t.summary.source_id.clone()).unwrap_or_default(),
        clustering_clusters: primary.clustering.len(),
        results,
    };
    let report_path = a.report.unwrap_or_else(|| a.output.with_extension("report.json"));
    write_json(&report, &report_path)?;
    Ok(())
}

pub fn eval(a: EvalArgs) -> Outcome {
    let truth = read_events(&a.truth)?;
    let predicted = read_events(&a.predicted)?;
    let (Some(t), Some(p)) = (truth.labels(), predicted.labels()) else {
        return Err(usage("both files need a label column"));
    };
    let report = metric_report(t, p)?;
    match &a.output {
        Some(path) => write_json(&report, path)?,
        None => {
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            match std::io::stdout().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Outcome {
    let mut spec: SyntheticSpec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if a.holdout >= spec.per_group {
        return Err(usage(format!(
            "--holdout {} leaves no database members out of {} per group",
            a.holdout, spec.per_group
        )));
    }
    let ds = generate_synthetic(&spec)?;

    let dir = &a.output_dir;
    let events_dir = dir.join("cytometries");
    let truth_dir = dir.join("truth");
    for d in [&events_dir, &truth_dir] {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let mut entries = Vec::new();
    let mut groups_csv = String::from("id,group,role\n");
    for (i, c) in ds.cytometries.iter().enumerate() {
        let member = i % spec.per_group;
        let role = if member >= spec.per_group - a.holdout { Role::Test } else { Role::Database };
        let rel = PathBuf::from("cytometries").join(format!("{}.csv", c.id));
        write_csv(&c.events, &dir.join(&rel))?;
        groups_csv.push_str(&format!(
            "{},{},{}\n",
            c.id,
            c.group,
            if role == Role::Test { "test" } else { "database" }
        ));
        entries.push(ManifestEntry {
            id: c.id.clone(),
            path: rel,
            role,
        });
    }
    for t in &ds.templates {
        save_summary(&t.summary, &truth_dir.join(format!("{}.json", t.summary.source_id)))?;
    }
    write_atomic(&dir.join("groups.csv"), groups_csv.as_bytes())?;
    write_json(&spec, &dir.join("spec.json"))?;
    let mut manifest = DatasetManifest::new(entries);
    manifest.options.seed = Some(spec.seed);
    manifest.save(&dir.join("manifest.json"))?;
    Ok(())
}
