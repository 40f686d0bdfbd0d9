//! Seeded synthetic EHR corpus.
//!
//! The tree is root → chapters → three-digit categories → leaves `cat.k`;
//! a fraction of categories stay shallow and are recorded directly. Leaves
//! are grouped into comorbidity clusters that mostly follow categories.
//! Each patient carries a two-cluster mixture; every admission picks one
//! cluster from it and draws codes from that cluster with probability
//! `affinity`, otherwise uniformly. Between admissions the primary cluster
//! may drift to a fixed successor, and some successors lead into the
//! (absorbing) cluster holding the `428` category, which gives the
//! heart-failure label a temporal signal.

use rand::distr::weighted::WeightedIndex;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AdmissionRecord, DataError, EhrDataset, PatientRecord, HF_PREFIX};
use crate::ontology::ROOT_TOKEN;

fn d_single() -> usize {
    3000
}
fn d_multi() -> usize {
    600
}
fn d_chapters() -> usize {
    6
}
fn d_categories() -> usize {
    5
}
fn d_min_leaves() -> usize {
    3
}
fn d_max_leaves() -> usize {
    7
}
fn d_shallow() -> f64 {
    0.1
}
fn d_clusters() -> usize {
    20
}
fn d_affinity() -> f64 {
    0.95
}
fn d_leaf_noise() -> f64 {
    0.1
}
fn d_primary() -> f64 {
    0.9
}
fn d_drift() -> f64 {
    0.5
}
fn d_feeders() -> f64 {
    0.6
}
fn d_skew() -> f64 {
    0.0
}
fn d_extra_adm() -> f64 {
    0.66
}
fn d_max_adm() -> usize {
    12
}
fn d_codes() -> f64 {
    7.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "d_single")]
    pub single_patients: usize,
    #[serde(default = "d_multi")]
    pub multi_patients: usize,
    #[serde(default = "d_chapters")]
    pub chapters: usize,
    #[serde(default = "d_categories")]
    pub categories_per_chapter: usize,
    #[serde(default = "d_min_leaves")]
    pub min_leaves: usize,
    #[serde(default = "d_max_leaves")]
    pub max_leaves: usize,
    /// Share of categories recorded directly, without leaves.
    #[serde(default = "d_shallow")]
    pub shallow_fraction: f64,
    #[serde(default = "d_clusters")]
    pub clusters: usize,
    /// Probability a code is drawn from the admission's cluster.
    #[serde(default = "d_affinity")]
    pub affinity: f64,
    /// Probability a leaf joins a random cluster instead of its category's.
    #[serde(default = "d_leaf_noise")]
    pub leaf_noise: f64,
    /// Weight of the primary cluster in a patient's mixture.
    #[serde(default = "d_primary")]
    pub primary_weight: f64,
    /// Probability the primary cluster moves to its successor between
    /// admissions.
    #[serde(default = "d_drift")]
    pub drift: f64,
    /// Share of clusters whose successor is the heart-failure cluster.
    #[serde(default = "d_feeders")]
    pub feeder_fraction: f64,
    /// Mean admissions beyond the second for multiple-admission patients.
    /// Zipf exponent of code popularity (0 = all codes equally common).
    #[serde(default = "d_skew")]
    pub code_skew: f64,
    #[serde(default = "d_extra_adm")]
    pub mean_extra_admissions: f64,
    #[serde(default = "d_max_adm")]
    pub max_admissions: usize,
    /// Mean codes drawn per admission (before deduplication).
    #[serde(default = "d_codes")]
    pub mean_codes: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("all other fields default")
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: &str| Err(DataError::Config(m.to_string()));
        if self.chapters == 0 || self.categories_per_chapter == 0 {
            return err("chapters and categories_per_chapter must be positive");
        }
        if self.chapters * self.categories_per_chapter > 900 {
            return err("at most 900 categories fit three-digit labels");
        }
        if self.min_leaves == 0 || self.min_leaves > self.max_leaves {
            return err("need 1 <= min_leaves <= max_leaves");
        }
        if self.clusters < 2 {
            return err("need at least two clusters");
        }
        for (name, p) in [
            ("shallow_fraction", self.shallow_fraction),
            ("affinity", self.affinity),
            ("leaf_noise", self.leaf_noise),
            ("primary_weight", self.primary_weight),
            ("drift", self.drift),
            ("feeder_fraction", self.feeder_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if !(self.code_skew >= 0.0 && self.code_skew.is_finite()) {
            return err("code_skew must be finite and non-negative");
        }
        if !(self.mean_extra_admissions > 0.0 && self.mean_codes >= 1.0) {
            return err("mean_extra_admissions must be > 0 and mean_codes >= 1");
        }
        if self.max_admissions < 2 {
            return err("max_admissions must be at least 2");
        }
        if self.single_patients + self.multi_patients == 0 {
            return err("no patients requested");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    /// `(parent, child)` edges, root marked with [`ROOT_TOKEN`].
    pub edges: Vec<(String, String)>,
    pub dataset: EhrDataset,
    /// Recorded code strings per cluster.
    pub clusters: Vec<Vec<String>>,
    pub target_cluster: usize,
}

struct World {
    clusters: Vec<Vec<usize>>,
    codes: Vec<String>,
    successor: Vec<usize>,
    /// Popularity-weighted draws within each cluster and over all codes.
    in_cluster: Vec<WeightedIndex<f64>>,
    anywhere: WeightedIndex<f64>,
}

fn build_world(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Vec<(String, String)>, World, usize) {
    let root = "root".to_string();
    let mut edges = vec![(ROOT_TOKEN.to_string(), root.clone())];
    let n_cat = cfg.chapters * cfg.categories_per_chapter;
    let mut numbers: Vec<u32> = (100..1000).filter(|&n| n.to_string() != HF_PREFIX).collect();
    numbers.shuffle(rng);
    let mut cat_labels: Vec<String> = numbers[..n_cat].iter().map(|n| n.to_string()).collect();
    let hf_cat = rng.random_range(0..n_cat);
    cat_labels[hf_cat] = HF_PREFIX.to_string();

    let mut order: Vec<usize> = (0..n_cat).collect();
    order.shuffle(rng);
    let cat_cluster: Vec<usize> = {
        let mut v = vec![0; n_cat];
        for (k, &c) in order.iter().enumerate() {
            v[c] = k % cfg.clusters;
        }
        v
    };
    let target = cat_cluster[hf_cat];

    let mut codes = Vec::new();
    let mut clusters = vec![Vec::new(); cfg.clusters];
    for ch in 0..cfg.chapters {
        let ch_label = format!("ch{:02}", ch + 1);
        edges.push((root.clone(), ch_label.clone()));
        for k in 0..cfg.categories_per_chapter {
            let c = ch * cfg.categories_per_chapter + k;
            let cat = cat_labels[c].clone();
            edges.push((ch_label.clone(), cat.clone()));
            let shallow = c != hf_cat && rng.random_bool(cfg.shallow_fraction);
            if shallow {
                clusters[cat_cluster[c]].push(codes.len());
                codes.push(cat);
                continue;
            }
            for leaf in 0..rng.random_range(cfg.min_leaves..=cfg.max_leaves) {
                let label = format!("{cat}.{leaf}");
                edges.push((cat.clone(), label.clone()));
                let cluster = if c != hf_cat && rng.random_bool(cfg.leaf_noise) {
                    rng.random_range(0..cfg.clusters)
                } else {
                    cat_cluster[c]
                };
                clusters[cluster].push(codes.len());
                codes.push(label);
            }
        }
    }
    // Every cluster needs at least one code to be drawable.
    for k in 0..cfg.clusters {
        if clusters[k].is_empty() {
            let pick = rng.random_range(0..codes.len());
            clusters[k].push(pick);
        }
    }

    let others: Vec<usize> = (0..cfg.clusters).filter(|&k| k != target).collect();
    let feeders = ((others.len() as f64) * cfg.feeder_fraction).round() as usize;
    let mut shuffled = others.clone();
    shuffled.shuffle(rng);
    let mut successor = vec![0; cfg.clusters];
    for (rank, &k) in shuffled.iter().enumerate() {
        successor[k] = if rank < feeders {
            target
        } else {
            *others.iter().filter(|&&o| o != k).collect::<Vec<_>>().choose(rng).copied().unwrap_or(&target)
        };
    }
    // Heart failure is chronic: once reached, the target cluster stays primary.
    successor[target] = target;

    let mut rank: Vec<usize> = (0..codes.len()).collect();
    rank.shuffle(rng);
    let popularity: Vec<f64> = rank.iter().map(|&r| (r as f64 + 1.0).powf(-cfg.code_skew)).collect();
    let weighted = |members: &[usize]| {
        WeightedIndex::new(members.iter().map(|&i| popularity[i])).expect("positive weights")
    };
    let in_cluster = clusters.iter().map(|m| weighted(m)).collect();
    let anywhere = weighted(&(0..codes.len()).collect::<Vec<_>>());
    (
        edges,
        World {
            clusters,
            codes,
            successor,
            in_cluster,
            anywhere,
        },
        target,
    )
}

fn draw_admission(cfg: &SynthConfig, world: &World, cluster: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let extra = Poisson::new(cfg.mean_codes - 1.0).map_or(0.0, |d| d.sample(rng)) as usize;
    let mut picked: Vec<usize> = (0..1 + extra)
        .map(|_| {
            if rng.random_bool(cfg.affinity) {
                world.clusters[cluster][world.in_cluster[cluster].sample(rng)]
            } else {
                world.anywhere.sample(rng)
            }
        })
        .collect();
    picked.sort_unstable();
    picked.dedup();
    picked.into_iter().map(|i| world.codes[i].clone()).collect()
}

fn draw_patient(cfg: &SynthConfig, world: &World, index: usize, multi: bool) -> PatientRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let k = cfg.clusters;
    let mut primary = rng.random_range(0..k);
    let secondary = rng.random_range(0..k);
    let count = if multi {
        let p = 1.0 / (1.0 + cfg.mean_extra_admissions);
        let extra = Geometric::new(p).map_or(0, |g| g.sample(&mut rng)) as usize;
        (2 + extra).min(cfg.max_admissions)
    } else {
        1
    };
    let mut t = 0i64;
    let mut admissions = Vec::with_capacity(count);
    for a in 0..count {
        if a > 0 {
            t += rng.random_range(1..=365);
            if rng.random_bool(cfg.drift) {
                primary = world.successor[primary];
            }
        }
        let cluster = if rng.random_bool(cfg.primary_weight) { primary } else { secondary };
        admissions.push(AdmissionRecord {
            t,
            codes: draw_admission(cfg, world, cluster, &mut rng),
        });
    }
    let id = if multi { format!("m{index:06}") } else { format!("s{index:06}") };
    PatientRecord { id, admissions }
}

/// Builds the ontology edge list and dataset; byte-identical under a seed.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthCorpus, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (edges, world, target) = build_world(cfg, &mut rng);
    let total = cfg.single_patients + cfg.multi_patients;
    // Multiple-admission patients are interleaved so that the file order
    // carries no role information.
    let stride = (total / cfg.multi_patients.max(1)).max(1);
    let is_multi = |i: usize| cfg.multi_patients > 0 && i.is_multiple_of(stride) && i / stride < cfg.multi_patients;
    let patients: Vec<PatientRecord> = (0..total)
        .into_par_iter()
        .map(|i| draw_patient(cfg, &world, i, is_multi(i)))
        .collect();
    let clusters = world
        .clusters
        .iter()
        .map(|c| c.iter().map(|&i| world.codes[i].clone()).collect())
        .collect();
    Ok(SynthCorpus {
        edges,
        dataset: EhrDataset { patients },
        clusters,
        target_cluster: target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::Ontology;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            single_patients: 200,
            multi_patients: 40,
            ..SynthConfig::with_seed(seed)
        }
    }

    #[test]
    fn seeded_output_is_identical() {
        let a = generate_synthetic(&small(5)).unwrap();
        let b = generate_synthetic(&small(5)).unwrap();
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.dataset, b.dataset);
        let c = generate_synthetic(&small(6)).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn corpus_round_trips_through_validation() {
        let corpus = generate_synthetic(&small(1)).unwrap();
        let ont = Ontology::from_edges(&corpus.edges).unwrap().pad_virtual_leaves("~v");
        assert_eq!(ont.depth(), 4);
        let mut buf = Vec::new();
        corpus.dataset.write_json(&mut buf).unwrap();
        let (ds, report) = EhrDataset::read_json(buf.as_slice()).unwrap();
        assert_eq!(report.resorted_patients, 0);
        let enc = ds.encode(&ont.code_vocabulary(), true, &mut Default::default()).unwrap();
        assert_eq!(enc.len(), 240);
        assert_eq!(enc.iter().filter(|p| p.is_multi()).count(), 40);
    }

    #[test]
    fn full_affinity_keeps_admissions_in_one_cluster() {
        let cfg = SynthConfig {
            affinity: 1.0,
            ..small(3)
        };
        let corpus = generate_synthetic(&cfg).unwrap();
        for p in &corpus.dataset.patients {
            for a in &p.admissions {
                assert!(
                    corpus.clusters.iter().any(|c| a.codes.iter().all(|code| c.contains(code))),
                    "{:?}",
                    a.codes
                );
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SynthConfig {
            affinity: 1.5,
            ..small(1)
        };
        assert!(matches!(generate_synthetic(&cfg), Err(DataError::Config(_))));
        assert!(serde_json::from_str::<SynthConfig>("{}").is_err(), "seed is mandatory");
    }
}
