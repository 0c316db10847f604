mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otgate::io::{load_templates, save_templates, TemplateBundle};
use otgate::partition::{default_min_cluster_size, summarize_cytometry, DistanceMatrix, PartitionMetric};
use otgate::synthetic::{generate_synthetic, SyntheticSpec};
use otgate::templates::{
    cut_tree, density_cluster, gaussian_barycenter, hierarchical_cluster, k_barycenter, optimal_flow_templates,
    template_density, template_kbarycenter, template_pooling, BarycenterOptions, GroupCount, Linkage, MetaMethod,
    TemplateConfig, TemplateMethod,
};
use otgate::transport::gaussian_w2_squared;
use otgate::{ClusterModel, CytometrySummary, SpdMatrix};

use common::*;

const LINKAGES: [Linkage; 3] = [Linkage::Single, Linkage::Complete, Linkage::Average];

fn matrix(n: usize, f: impl FnMut(usize, usize) -> f64) -> DistanceMatrix {
    DistanceMatrix::from_fn((0..n).map(|i| format!("e{i}")).collect(), f).unwrap()
}

/// `n` blocks of `size` entries; within-block distances in `[0.5, 1)`, across blocks in `[50, 60)`.
fn block_matrix(rng: &mut ChaCha8Rng, blocks: usize, size: usize) -> (DistanceMatrix, Vec<usize>) {
    let n = blocks * size;
    let truth: Vec<usize> = (0..n).map(|i| i / size).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = if truth[i] == truth[j] { rng.random_range(0.5..1.0) } else { rng.random_range(50.0..60.0) };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    (DistanceMatrix::new((0..n).map(|i| format!("e{i}")).collect(), m).unwrap(), truth)
}

fn groups_of(assignment: &[Option<usize>]) -> BTreeSet<BTreeSet<usize>> {
    let mut out: std::collections::BTreeMap<Option<usize>, BTreeSet<usize>> = Default::default();
    for (i, g) in assignment.iter().enumerate() {
        out.entry(*g).or_default().insert(i);
    }
    out.into_values().collect()
}

fn gaussian(mean: &[f64], var: &[f64], w: f64, label: Option<&str>) -> ClusterModel {
    ClusterModel::new(
        DVector::from_column_slice(mean),
        SpdMatrix::from_diagonal(var).unwrap(),
        w,
        label.map(str::to_string),
    )
    .unwrap()
}

/// A labelled summary with populations near `centers`, jittered by `rng`.
fn jittered_summary(rng: &mut ChaCha8Rng, id: &str, centers: &[[f64; 2]], jitter: f64) -> CytometrySummary {
    let w = random_weights(rng, centers.len());
    let clusters = centers
        .iter()
        .zip(&w)
        .enumerate()
        .map(|(k, (c, &w))| {
            let m: Vec<f64> = c.iter().map(|x| x + jitter * rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..2).map(|_| 1.0 + jitter * rng.random_range(0.0..1.0)).collect();
            gaussian(&m, &v, w, Some(&format!("p{k}")))
        })
        .collect();
    CytometrySummary::new(id, clusters).unwrap()
}

const FOUR: [[f64; 2]; 4] = [[0.0, 0.0], [30.0, 0.0], [0.0, 30.0], [30.0, 30.0]];

#[test]
fn closest_pair_merges_first_under_any_linkage() {
    let dm = matrix(3, |i, j| if i + j == 1 { 1.0 } else { 10.0 });
    for linkage in LINKAGES {
        let t = hierarchical_cluster(&dm, linkage).unwrap();
        let m = &t.merges()[0];
        assert_eq!((m.left, m.right, m.height), (0, 1, 1.0));
        assert_eq!(t.merges()[1].height, 10.0);
    }
}

#[test]
fn equal_distances_merge_in_index_order() {
    let dm = matrix(5, |_, _| 2.0);
    for linkage in LINKAGES {
        let t = hierarchical_cluster(&dm, linkage).unwrap();
        assert!(t.merges().iter().all(|m| m.height == 2.0));
        assert_eq!((t.merges()[0].left, t.merges()[0].right), (0, 1));
        // the first merged pair keeps absorbing the next leaf
        let clusters = dendrogram_clusters(&t);
        for (s, (members, _)) in clusters.iter().enumerate() {
            assert_eq!(*members, (0..s + 2).collect());
        }
    }
}

#[test]
fn cut_extremes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dm = random_distance_matrix(&mut rng, 7);
    let t = hierarchical_cluster(&dm, Linkage::Complete).unwrap();
    assert_eq!(cut_tree(&t, 7).unwrap().n_groups(), 7);
    let one = cut_tree(&t, 1).unwrap();
    assert_eq!(one.n_groups(), 1);
    assert!(one.assignment().iter().all(|g| *g == Some(0)));
    assert!(cut_tree(&t, 0).is_err());
    assert!(cut_tree(&t, 8).is_err());
}

#[test]
fn cut_of_27_leaves_matches_undone_merges() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dm = random_distance_matrix(&mut rng, 27);
    let t = hierarchical_cluster(&dm, Linkage::Average).unwrap();
    let naive = naive_agglomeration(dm.as_matrix(), Linkage::Average);
    // the groups left after the first 27 − 7 merges: maximal merged sets plus untouched leaves
    let applied = &naive[..27 - 7];
    let mut expected: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
    for (i, (set, _)) in applied.iter().enumerate() {
        if !applied[i + 1..].iter().any(|(later, _)| later.is_superset(set)) {
            expected.insert(set.clone());
        }
    }
    for leaf in 0..27 {
        if !expected.iter().any(|s| s.contains(&leaf)) {
            expected.insert(BTreeSet::from([leaf]));
        }
    }
    let cut = cut_tree(&t, 7).unwrap();
    assert_eq!(cut.n_groups(), 7);
    assert_eq!(groups_of(cut.assignment()), expected);
}

#[test]
fn hdbscan_separates_two_tight_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dm = matrix(10, |i, j| if (i < 5) == (j < 5) { rng.random_range(0.1..1.0) } else { 100.0 });
    let p = density_cluster(&dm, 2).unwrap();
    assert_eq!(p.n_groups(), 2);
    assert!(p.noise().is_empty());
    assert_eq!(p.members(0), vec![0, 1, 2, 3, 4]);
}

#[test]
fn hdbscan_finds_no_structure_in_equal_distances() {
    let p = density_cluster(&matrix(8, |_, _| 3.0), 2).unwrap();
    assert!(p.n_groups() <= 1);
}

#[test]
fn hdbscan_recovers_planted_blocks() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (dm, truth) = block_matrix(&mut rng, 3, 6);
        let p = density_cluster(&dm, 2).unwrap();
        assert!(p.noise().is_empty());
        let found: Vec<usize> = p.assignment().iter().map(|g| g.unwrap()).collect();
        assert_eq!(adjusted_rand_index(&truth, &found), 1.0, "seed {seed}");
    }
}

#[test]
fn barycenter_of_identical_models_is_that_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = random_model(&mut rng, 3, 2.0, 1.0);
    let fit = gaussian_barycenter(&[m.clone(), m.clone(), m.clone()], &[0.2, 0.3, 0.5], &BarycenterOptions::default())
        .unwrap();
    assert_eq!(fit.iterations, 0);
    assert_eq!(fit.model.mean, m.mean);
    assert_eq!(fit.model.cov, m.cov);
}

#[test]
fn barycenter_with_shared_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = random_spd(&mut rng, 3);
    let models: Vec<ClusterModel> = (0..4)
        .map(|_| ClusterModel::new(DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0)), s.clone(), 1.0, None).unwrap())
        .collect();
    let fit = gaussian_barycenter(&models, &[0.25; 4], &BarycenterOptions::default()).unwrap();
    let mean = models.iter().fold(DVector::zeros(3), |acc, m| acc + &m.mean) * 0.25;
    assert!((&fit.model.mean - mean).amax() < 1e-12);
    assert!((fit.model.cov.as_matrix() - s.as_matrix()).amax() < 1e-10);
}

#[test]
fn one_dimensional_barycenter_averages_standard_deviations() {
    let sd = [0.5, 1.0, 3.0];
    let lambdas = [0.5, 0.3, 0.2];
    let models: Vec<ClusterModel> = sd.iter().map(|s| gaussian(&[*s], &[s * s], 1.0, None)).collect();
    let fit = gaussian_barycenter(&models, &lambdas, &BarycenterOptions::default()).unwrap();
    let expected: f64 = sd.iter().zip(&lambdas).map(|(s, l)| s * l).sum();
    assert!((fit.model.cov.as_matrix()[(0, 0)].sqrt() - expected).abs() < 1e-8);
}

#[test]
fn k_barycenter_with_k_equal_n_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let models: Vec<ClusterModel> = (0..5).map(|_| random_model(&mut rng, 2, 5.0, 1.0)).collect();
    let fit = k_barycenter(&models, 5, &BarycenterOptions::default()).unwrap();
    assert!(fit.objective.abs() < 1e-12);
    let used: BTreeSet<usize> = fit.assignment.iter().map(|a| a.unwrap()).collect();
    assert_eq!(used.len(), 5);
}

#[test]
fn k_barycenter_recovers_identical_group_representatives() {
    let a = gaussian(&[0.0, 0.0], &[1.0, 2.0], 1.0, None);
    let b = gaussian(&[20.0, 5.0], &[3.0, 0.5], 1.0, None);
    let models: Vec<ClusterModel> = (0..8).map(|i| if i % 2 == 0 { a.clone() } else { b.clone() }).collect();
    let fit = k_barycenter(&models, 2, &BarycenterOptions::default()).unwrap();
    assert!(fit.objective.abs() < 1e-12);
    for (i, model) in models.iter().enumerate() {
        let c = &fit.centers[fit.assignment[i].unwrap()];
        assert!(gaussian_w2_squared(c, model).unwrap() < 1e-12);
    }
}

fn two_clouds(rng: &mut ChaCha8Rng, per: usize) -> (Vec<ClusterModel>, Vec<usize>) {
    let mut models = Vec::new();
    let mut truth = Vec::new();
    for i in 0..2 * per {
        let g = i % 2;
        let base = if g == 0 { [0.0, 0.0] } else { [15.0, -10.0] };
        let m: Vec<f64> = base.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..2).map(|_| rng.random_range(0.5..2.0)).collect();
        models.push(gaussian(&m, &v, rng.random_range(0.05..1.0), None));
        truth.push(g);
    }
    (models, truth)
}

#[test]
fn trimmed_k_barycenter_drops_outliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut models, truth) = two_clouds(&mut rng, 10);
    models.push(gaussian(&[200.0, 200.0], &[1.0, 1.0], 1.0, None));
    models.push(gaussian(&[-150.0, 80.0], &[1.0, 1.0], 1.0, None));
    let opts = BarycenterOptions { trim_alpha: 0.1, ..Default::default() };
    let fit = k_barycenter(&models, 2, &opts).unwrap();
    // ⌈22 · 0.1⌉ = 3 models go: both outliers and the worst-fitting inlier
    assert_eq!(fit.assignment.iter().filter(|a| a.is_none()).count(), 3);
    assert_eq!(fit.assignment[20], None);
    assert_eq!(fit.assignment[21], None);
    let (kept_truth, found): (Vec<usize>, Vec<usize>) = truth
        .iter()
        .zip(&fit.assignment[..20])
        .filter_map(|(t, a)| a.map(|a| (*t, a)))
        .unzip();
    assert_eq!(adjusted_rand_index(&kept_truth, &found), 1.0);
    assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn k_barycenter_attains_the_best_two_way_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (models, _) = two_clouds(&mut rng, 5);
    let n = models.len();
    let total: f64 = models.iter().map(|m| m.weight).sum();
    let opts = BarycenterOptions::default();
    let part_cost = |idx: &[usize]| -> f64 {
        let members: Vec<ClusterModel> = idx.iter().map(|&i| models[i].clone()).collect();
        let mass: f64 = members.iter().map(|m| m.weight).sum();
        let lambdas: Vec<f64> = members.iter().map(|m| m.weight / mass).collect();
        let center = gaussian_barycenter(&members, &lambdas, &opts).unwrap().model;
        idx.iter().map(|&i| models[i].weight / total * gaussian_w2_squared(&models[i], &center).unwrap()).sum()
    };
    let mut best = f64::INFINITY;
    // fix model 0 on side A to skip mirrored splits
    for mask in 0u32..(1 << (n - 1)) {
        let b: Vec<usize> = (1..n).filter(|i| mask >> (i - 1) & 1 == 1).collect();
        if b.is_empty() {
            continue;
        }
        let a: Vec<usize> = (0..n).filter(|i| !b.contains(i)).collect();
        best = best.min(part_cost(&a) + part_cost(&b));
    }
    let fit = k_barycenter(&models, 2, &opts).unwrap();
    assert!((fit.objective - best).abs() < 1e-6 * best, "{} vs {best}", fit.objective);
}

#[test]
fn pooling_of_a_single_cytometry_is_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = jittered_summary(&mut rng, "only", &FOUR, 0.5);
    let t = template_pooling(std::slice::from_ref(&s), 0, &BarycenterOptions::default()).unwrap();
    assert_eq!(t.summary.clusters(), s.clusters());
}

#[test]
fn pooling_matches_direct_barycenters() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let group: Vec<CytometrySummary> = (0..5).map(|i| jittered_summary(&mut rng, &format!("c{i}"), &FOUR, 1.0)).collect();
    let opts = BarycenterOptions::default();
    let t = template_pooling(&group, 0, &opts).unwrap();
    assert_eq!(t.summary.len(), 4);
    for (k, cluster) in t.summary.clusters().iter().enumerate() {
        let members: Vec<ClusterModel> = group.iter().map(|s| s.clusters()[k].clone()).collect();
        let mass: f64 = members.iter().map(|m| m.weight).sum();
        let lambdas: Vec<f64> = members.iter().map(|m| m.weight / mass).collect();
        let direct = gaussian_barycenter(&members, &lambdas, &opts).unwrap().model;
        assert_eq!(cluster.label.as_deref(), Some(format!("p{k}").as_str()));
        assert!((&cluster.mean - &direct.mean).amax() < 1e-12);
        assert!((cluster.cov.as_matrix() - direct.cov.as_matrix()).amax() < 1e-10);
        // every member has every label, so the weight is the mean member weight
        assert!((cluster.weight - mass / 5.0).abs() < 1e-12);
    }
}

#[test]
fn pooling_omits_labels_absent_everywhere_and_keeps_partial_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = jittered_summary(&mut rng, "a", &FOUR[..3], 0.5);
    let b = jittered_summary(&mut rng, "b", &FOUR[..2], 0.5);
    let t = template_pooling(&[a, b], 0, &BarycenterOptions::default()).unwrap();
    let labels: Vec<&str> = t.summary.clusters().iter().map(|c| c.label.as_deref().unwrap()).collect();
    assert_eq!(labels, ["p0", "p1", "p2"]);
    assert!((t.summary.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn density_template_of_one_cytometry_keeps_its_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let s = jittered_summary(&mut rng, "only", &FOUR, 0.0);
    let t = template_density(std::slice::from_ref(&s), 0, 1, &BarycenterOptions::default()).unwrap();
    assert_eq!(t.summary.len(), 4);
}

#[test]
fn density_template_finds_recurring_populations() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let group: Vec<CytometrySummary> = (0..5).map(|i| jittered_summary(&mut rng, &format!("c{i}"), &FOUR, 1.0)).collect();
    let opts = BarycenterOptions::default();
    let t = template_density(&group, 0, 2, &opts).unwrap();
    assert_eq!(t.summary.len(), 4);
    assert!(!t.is_labeled());
    let twice: Vec<CytometrySummary> = group
        .iter()
        .chain(&group)
        .enumerate()
        .map(|(i, s)| CytometrySummary::new(format!("d{i:02}"), s.clusters().to_vec()).unwrap())
        .collect();
    assert_eq!(template_density(&twice, 0, 2, &opts).unwrap().summary.len(), 4);
}

#[test]
fn kbarycenter_template_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let group: Vec<CytometrySummary> = (0..5).map(|i| jittered_summary(&mut rng, &format!("c{i}"), &FOUR, 1.0)).collect();
    let opts = BarycenterOptions::default();
    let t = template_kbarycenter(&group, 0, 4, &opts).unwrap();
    assert_eq!(t.summary.len(), 4);
    let mut found: Vec<[i64; 2]> = t
        .summary
        .clusters()
        .iter()
        .map(|c| [(c.mean[0] / 30.0).round() as i64, (c.mean[1] / 30.0).round() as i64])
        .collect();
    found.sort();
    assert_eq!(found, [[0, 0], [0, 1], [1, 0], [1, 1]]);
    assert_eq!(template_kbarycenter(&group, 0, 1, &opts).unwrap().summary.len(), 1);
}

#[test]
fn duplicated_database_is_grouped_by_duplication() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let bases: Vec<CytometrySummary> = (0..3).map(|g| random_summary(&mut rng, &format!("b{g}"), 3 + g, 2)).collect();
    let db: Vec<CytometrySummary> = (0..12)
        .map(|i| CytometrySummary::new(format!("s{i:02}"), bases[i % 3].clusters().to_vec()).unwrap())
        .collect();
    for meta in [MetaMethod::Hierarchical(Linkage::Complete), MetaMethod::Hdbscan { min_cluster_size: 2 }] {
        let config = TemplateConfig {
            meta,
            template: TemplateMethod::KBarycenter { k: 3 },
            ..Default::default()
        };
        let out = optimal_flow_templates(&db, &config).unwrap();
        let truth: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let found: Vec<usize> = out.partition.assignment().iter().map(|g| g.unwrap()).collect();
        assert_eq!(adjusted_rand_index(&truth, &found), 1.0);
        assert_eq!(out.templates.len(), 3);
    }
}

#[test]
fn two_identical_summaries_form_one_group() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let s = random_summary(&mut rng, "a", 3, 2);
    let t = CytometrySummary::new("b", s.clusters().to_vec()).unwrap();
    let config = TemplateConfig {
        groups: GroupCount::Fixed(1),
        template: TemplateMethod::KBarycenter { k: 3 },
        ..Default::default()
    };
    let out = optimal_flow_templates(&[s, t], &config).unwrap();
    assert_eq!(out.partition.n_groups(), 1);
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_27.json")
}

fn golden_config() -> TemplateConfig {
    TemplateConfig {
        metric: PartitionMetric::default(),
        meta: MetaMethod::Hierarchical(Linkage::Complete),
        template: TemplateMethod::Pooling,
        groups: GroupCount::Fixed(7),
        barycenter: BarycenterOptions::default(),
    }
}

/// Rewrites the stored 27-entry reference; run with `--ignored` after an intended change.
#[test]
#[ignore]
fn write_golden_database() {
    let spec = SyntheticSpec { seed: 27, ..Default::default() };
    let data = generate_synthetic(&spec).unwrap();
    let db: Vec<CytometrySummary> = data
        .cytometries
        .iter()
        .map(|c| summarize_cytometry(c.id.clone(), &c.events, default_min_cluster_size(spec.dim), false).unwrap())
        .collect();
    let config = golden_config();
    let out = optimal_flow_templates(&db, &config).unwrap();
    // every group of the cut lies inside one planted group
    for g in 0..out.partition.n_groups() {
        let planted: BTreeSet<usize> = out.partition.members(g).iter().map(|&i| data.cytometries[i].group).collect();
        assert_eq!(planted.len(), 1);
    }
    let bundle = TemplateBundle {
        metric: config.metric,
        database: db,
        partition: out.partition,
        templates: out.templates,
        dendrogram: out.dendrogram,
    };
    std::fs::create_dir_all(golden_path().parent().unwrap()).unwrap();
    save_templates(&bundle, &golden_path()).unwrap();
}

#[test]
fn pipeline_reproduces_the_stored_27_entry_partition() {
    let golden = load_templates(&golden_path()).expect("stored reference missing; run write_golden_database");
    assert_eq!(golden.database.len(), 27);
    let out = optimal_flow_templates(&golden.database, &golden_config()).unwrap();
    assert_eq!(out.partition, golden.partition);
    let (tree, stored) = (out.dendrogram.unwrap(), golden.dendrogram.unwrap());
    for (a, b) in tree.merges().iter().zip(stored.merges()) {
        assert_eq!((a.left, a.right, a.size), (b.left, b.right, b.size));
        assert!((a.height - b.height).abs() <= 1e-12 * b.height.max(1.0));
    }
    assert_eq!(out.templates.len(), 7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn agglomeration_matches_naive_reference(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dm = random_distance_matrix(&mut rng, n);
        for linkage in LINKAGES {
            let t = hierarchical_cluster(&dm, linkage).unwrap();
            prop_assert_eq!(t.merges().len(), n - 1);
            let naive = naive_agglomeration(dm.as_matrix(), linkage);
            for ((set, h), (ref_set, ref_h)) in dendrogram_clusters(&t).iter().zip(&naive) {
                prop_assert_eq!(set, ref_set);
                prop_assert!((h - ref_h).abs() < 1e-12);
            }
            prop_assert!(t.merges().windows(2).all(|w| w[0].height <= w[1].height));
        }
    }

    #[test]
    fn cuts_refine_each_other(seed in any::<u64>(), n in 2usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = hierarchical_cluster(&random_distance_matrix(&mut rng, n), Linkage::Average).unwrap();
        for k in 2..=n {
            let fine = cut_tree(&t, k).unwrap();
            let coarse = cut_tree(&t, k - 1).unwrap();
            prop_assert_eq!(fine.n_groups(), k);
            for g in 0..k {
                let owners: BTreeSet<Option<usize>> = fine.members(g).iter().map(|&i| coarse.assignment()[i]).collect();
                prop_assert_eq!(owners.len(), 1);
            }
        }
    }

    #[test]
    fn barycenter_mean_is_linear_and_covariance_is_a_fixed_point(seed in any::<u64>(), d in 1usize..=4, n in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<ClusterModel> = (0..n).map(|_| random_model(&mut rng, d, 3.0, 1.0)).collect();
        let lambdas = random_weights(&mut rng, n);
        let fit = gaussian_barycenter(&models, &lambdas, &BarycenterOptions::default()).unwrap();
        let mean = models.iter().zip(&lambdas).fold(DVector::zeros(d), |acc, (m, l)| acc + &m.mean * *l);
        prop_assert!((&fit.model.mean - &mean).amax() < 1e-10 * (1.0 + mean.amax()));
        // S = Σ λᵢ (S^{1/2} Sᵢ S^{1/2})^{1/2}
        let s = fit.model.cov.as_matrix();
        let r = sym_sqrt(s);
        let image = models.iter().zip(&lambdas)
            .fold(DMatrix::zeros(d, d), |acc, (m, l)| acc + sym_sqrt(&(&r * m.cov.as_matrix() * &r)) * *l);
        prop_assert!((&image - s).norm() < 1e-6 * s.norm());
    }

    #[test]
    fn pooling_ignores_member_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let group: Vec<CytometrySummary> = (0..4).map(|i| jittered_summary(&mut rng, &format!("c{i}"), &FOUR, 2.0)).collect();
        let mut shuffled = group.clone();
        shuffled.rotate_left(1 + (seed % 3) as usize);
        shuffled.swap(0, 2);
        let opts = BarycenterOptions::default();
        prop_assert_eq!(template_pooling(&group, 0, &opts).unwrap(), template_pooling(&shuffled, 0, &opts).unwrap());
    }

    #[test]
    fn k_barycenter_objective_never_increases(seed in any::<u64>(), k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<ClusterModel> = (0..12)
            .map(|_| {
                let w = rng.random_range(0.05..1.0);
                random_model(&mut rng, 2, 4.0, w)
            })
            .collect();
        let opts = BarycenterOptions { trim_alpha: 0.1, restarts: 3, seed, ..Default::default() };
        let fit = k_barycenter(&models, k, &opts).unwrap();
        prop_assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12));
        prop_assert_eq!(fit.assignment.iter().filter(|a| a.is_none()).count(), 2);
    }
}
