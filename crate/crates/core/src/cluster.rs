//! Per-clinician editing profiles and k-means clustering.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_range, Parallelism};
use crate::frequency::SectionDelta;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no points to cluster")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{points} points cannot form {k} clusters")]
    TooFewPoints { points: usize, k: usize },
    #[error("points have inconsistent dimensions")]
    RaggedDimensions,
    #[error("non-finite feature value")]
    NonFinite,
}

/// Which sections count as "zero change".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroChangeDefinition {
    /// Both consumer and clinical change are zero.
    #[default]
    Both,
    ConsumerOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditingProfile {
    pub clinician_id: String,
    pub section_volume: usize,
    pub mean_consumer_change: f64,
    pub mean_clinical_change: f64,
    /// Share of sections where consumer and clinical change are both zero.
    pub zero_change_rate: f64,
    /// Share of sections where the consumer change is zero.
    pub zero_change_rate_consumer_only: f64,
    pub cluster_label: Option<usize>,
}

impl EditingProfile {
    pub fn zero_rate(&self, definition: ZeroChangeDefinition) -> f64 {
        match definition {
            ZeroChangeDefinition::Both => self.zero_change_rate,
            ZeroChangeDefinition::ConsumerOnly => self.zero_change_rate_consumer_only,
        }
    }

    /// Clustering features: mean consumer change and zero-change rate.
    pub fn features(&self, definition: ZeroChangeDefinition) -> Vec<f64> {
        vec![self.mean_consumer_change, self.zero_rate(definition)]
    }
}

/// Profiles for clinicians with strictly more than `eligibility_threshold`
/// sections, ordered by clinician id.
pub fn build_profiles(deltas: &[SectionDelta], eligibility_threshold: usize) -> Vec<EditingProfile> {
    let mut by_clinician: BTreeMap<&str, Vec<&SectionDelta>> = BTreeMap::new();
    for d in deltas {
        by_clinician.entry(d.clinician_id.as_str()).or_default().push(d);
    }
    by_clinician
        .into_iter()
        .filter(|(_, ds)| ds.len() > eligibility_threshold)
        .map(|(id, ds)| {
            let n = ds.len() as f64;
            let zero_both = ds.iter().filter(|d| d.consumer.change == 0 && d.clinical.change == 0).count();
            let zero_consumer = ds.iter().filter(|d| d.consumer.change == 0).count();
            EditingProfile {
                clinician_id: id.to_string(),
                section_volume: ds.len(),
                mean_consumer_change: ds.iter().map(|d| d.consumer.change as f64).sum::<f64>() / n,
                mean_clinical_change: ds.iter().map(|d| d.clinical.change as f64).sum::<f64>() / n,
                zero_change_rate: zero_both as f64 / n,
                zero_change_rate_consumer_only: zero_consumer as f64 / n,
                cluster_label: None,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once no centroid moves farther than this.
    pub tolerance: f64,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 3,
            seed: 20240601,
            restarts: 10,
            max_iterations: 100,
            tolerance: 1e-6,
            parallelism: Parallelism::Rayon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// Centroids in standardized feature space.
    pub centroids: Vec<Vec<f64>>,
    /// Centroids in the original feature units (cluster means).
    pub raw_centroids: Vec<Vec<Option<f64>>>,
    /// Within-cluster sum of squares in standardized space.
    pub sse: f64,
    pub iterations: usize,
    /// SSE after every assignment step of the winning restart.
    pub sse_history: Vec<f64>,
    pub best_restart: usize,
    pub nonempty_clusters: usize,
    pub warnings: Vec<String>,
}

impl KMeansResult {
    pub fn is_degenerate(&self) -> bool {
        self.nonempty_clusters < self.centroids.len()
    }
}

/// Z-scores each dimension (population standard deviation). Constant
/// dimensions become all zeros and are reported.
pub fn standardize(points: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<String>) {
    let n = points.len() as f64;
    let dims = points.first().map_or(0, Vec::len);
    let mut out = points.to_vec();
    let mut warnings = Vec::new();
    for d in 0..dims {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if sd.is_nan() || sd <= 1e-12 * mean.abs().max(1.0) {
            warnings.push(format!("feature {d} has zero variance; standardized to 0"));
            for p in out.iter_mut() {
                p[d] = 0.0;
            }
        } else {
            for p in out.iter_mut() {
                p[d] = (p[d] - mean) / sd;
            }
        }
    }
    (out, warnings)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    sse: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

/// Nearest centroid per point (lowest index on ties), squared distances and SSE.
fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for p in points {
        let (best, d) = centroids
            .iter()
            .enumerate()
            .map(|(c, centroid)| (c, dist2(p, centroid)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        labels.push(best);
        dists.push(d);
    }
    let sse = dists.iter().sum();
    (labels, dists, sse)
}

fn lloyd(points: &[Vec<f64>], config: &KMeansConfig, restart: usize) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let k = config.k;
    let dims = points[0].len();
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let (mut labels, mut dists, mut sse) = assign(points, &centroids);
    let mut history = vec![sse];
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut sums = vec![vec![0.0; dims]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &c), old)| if c > 0 { s.into_iter().map(|x| x / c as f64).collect() } else { old.clone() })
            .collect();
        // Empty clusters take the point farthest from its own centroid.
        let mut taken = vec![false; points.len()];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..points.len()).filter(|&i| !taken[i]).fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
            if let Some(i) = far {
                taken[i] = true;
                next[c] = points[i].clone();
            }
        }
        let shift = centroids.iter().zip(&next).map(|(a, b)| dist2(a, b).sqrt()).fold(0.0, f64::max);
        centroids = next;
        let (l, d, s) = assign(points, &centroids);
        assert!(
            s <= sse + 1e-9 * sse.abs().max(1.0),
            "k-means SSE increased from {sse} to {s} at iteration {iterations}"
        );
        labels = l;
        dists = d;
        sse = s;
        history.push(sse);
        if shift < config.tolerance {
            break;
        }
    }
    Run { labels, centroids, sse, iterations, history }
}

/// k-means++ seeded Lloyd iterations on z-scored features; the best of
/// `restarts` runs by SSE wins, ties going to the lowest restart index.
/// Restart `r` draws from a ChaCha8 stream `r` of `seed`, so the result does
/// not depend on how restarts are scheduled.
pub fn kmeans(points: &[Vec<f64>], config: &KMeansConfig) -> Result<KMeansResult, ClusterError> {
    if config.k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if points.is_empty() {
        return Err(ClusterError::Empty);
    }
    if points.len() < config.k {
        return Err(ClusterError::TooFewPoints { points: points.len(), k: config.k });
    }
    let dims = points[0].len();
    if points.iter().any(|p| p.len() != dims) {
        return Err(ClusterError::RaggedDimensions);
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ClusterError::NonFinite);
    }
    let (std_points, warnings) = standardize(points);
    for w in &warnings {
        log::warn!("{w}");
    }
    let restarts = config.restarts.max(1);
    let runs = map_range(restarts, config.parallelism, |r| lloyd(&std_points, config, r));
    let (best_restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.sse < a.1.sse { b } else { a })
        .expect("at least one restart");

    let mut raw_sums = vec![vec![0.0; dims]; config.k];
    let mut counts = vec![0usize; config.k];
    for (p, &l) in points.iter().zip(&best.labels) {
        counts[l] += 1;
        for (s, x) in raw_sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    let raw_centroids = raw_sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|x| (c > 0).then(|| x / c as f64)).collect())
        .collect();
    Ok(KMeansResult {
        nonempty_clusters: counts.iter().filter(|&&c| c > 0).count(),
        labels: best.labels,
        centroids: best.centroids,
        raw_centroids,
        sse: best.sse,
        iterations: best.iterations,
        sse_history: best.history,
        best_restart,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub label: usize,
    pub profile: String,
    pub n: usize,
    pub pct: f64,
    pub mean_consumer_change: f64,
    pub mean_clinical_change: f64,
    pub mean_zero_change_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub rows: Vec<ClusterRow>,
    pub degenerate: bool,
}

/// Summarizes labelled profiles per nonempty cluster, ordered by the
/// magnitude of the mean consumer change, largest first.
pub fn profile_report(
    profiles: &[EditingProfile],
    definition: ZeroChangeDefinition,
    k: usize,
) -> Result<ClusterReport, ClusterError> {
    if profiles.is_empty() {
        return Err(ClusterError::Empty);
    }
    let mut groups: BTreeMap<usize, Vec<&EditingProfile>> = BTreeMap::new();
    for p in profiles {
        if let Some(l) = p.cluster_label {
            groups.entry(l).or_default().push(p);
        }
    }
    let total: usize = groups.values().map(Vec::len).sum();
    let mut rows: Vec<ClusterRow> = groups
        .into_iter()
        .map(|(label, ps)| {
            let n = ps.len() as f64;
            ClusterRow {
                label,
                profile: String::new(),
                n: ps.len(),
                pct: ps.len() as f64 / total as f64 * 100.0,
                mean_consumer_change: ps.iter().map(|p| p.mean_consumer_change).sum::<f64>() / n,
                mean_clinical_change: ps.iter().map(|p| p.mean_clinical_change).sum::<f64>() / n,
                mean_zero_change_rate: ps.iter().map(|p| p.zero_rate(definition)).sum::<f64>() / n,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean_consumer_change.abs().total_cmp(&a.mean_consumer_change.abs()).then(a.label.cmp(&b.label))
    });
    let names: &[&str] =
        if rows.len() == 3 { &["High-intensity editors", "Moderate editors", "Minimal editors"] } else { &[] };
    for (i, row) in rows.iter_mut().enumerate() {
        row.profile = names.get(i).map_or_else(|| format!("Cluster {}", row.label), |s| s.to_string());
    }
    Ok(ClusterReport { degenerate: rows.len() < k, rows })
}
