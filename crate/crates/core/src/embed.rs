//! Embedding-space metrics: paired cosine similarity densities, the in-batch
//! contrastive loss and four intrinsic-dimension estimators.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{Histogram, HistogramKind};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("not an EMB1 file or CSV text")]
    BadMagic,
    #[error("expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("cannot parse {value:?} as a number (row {row})")]
    InvalidNumber { row: usize, value: String },
    #[error("embedding set is empty")]
    Empty,
    #[error("shape {left:?} does not match {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("bin count must be positive")]
    InvalidBins,
    #[error("{required} points needed, got {n}")]
    TooFewPoints { n: usize, required: usize },
    #[error("every point was excluded as a duplicate ({excluded} excluded)")]
    AllDuplicates { excluded: usize },
    #[error("covariance is degenerate")]
    DegenerateCovariance,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
    pub labels: Option<Vec<String>>,
}

impl EmbeddingSet {
    /// Row-major `n × d` values.
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self, EmbedError> {
        if n == 0 || d == 0 {
            return Err(EmbedError::Empty);
        }
        if data.len() != n * d {
            return Err(EmbedError::DimensionMismatch {
                expected: n * d,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFiniteValue {
                row: i / d,
                col: i % d,
            });
        }
        Ok(Self {
            n,
            d,
            data,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EmbedError> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(EmbedError::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn to_emb1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        out.extend_from_slice(b"EMB1");
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }
}

pub fn parse_emb1(bytes: &[u8]) -> Result<EmbeddingSet, EmbedError> {
    if bytes.len() < 12 || &bytes[..4] != b"EMB1" {
        return Err(EmbedError::BadMagic);
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    let expected = n.saturating_mul(d);
    if body.len() % 4 != 0 || body.len() / 4 != expected {
        return Err(EmbedError::DimensionMismatch {
            expected,
            found: body.len() / 4,
        });
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    EmbeddingSet::new(n, d, data)
}

/// CSV with a header row. A first column named `label` holds row names.
pub fn parse_embedding_csv(text: &str) -> Result<EmbeddingSet, EmbedError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let labelled = header.get(0).is_some_and(|h| h.trim() == "label");
    let d = header.len() - labelled as usize;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(EmbedError::DimensionMismatch {
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut fields = record.iter();
        if labelled {
            labels.push(fields.next().unwrap_or_default().to_string());
        }
        for (col, field) in fields.enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| EmbedError::InvalidNumber {
                row,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(EmbedError::NonFiniteValue { row, col });
            }
            data.push(v);
        }
        n += 1;
    }
    let mut set = EmbeddingSet::new(n, d, data)?;
    if labelled {
        set.labels = Some(labels);
    }
    Ok(set)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet, EmbedError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"EMB1") {
        return parse_emb1(&bytes);
    }
    match std::str::from_utf8(&bytes) {
        Ok(text) => parse_embedding_csv(text),
        Err(_) => Err(EmbedError::BadMagic),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norms(e: &EmbeddingSet) -> Result<Vec<f64>, EmbedError> {
    e.rows()
        .enumerate()
        .map(|(i, r)| {
            let n = dot(r, r).sqrt();
            if n > 0.0 {
                Ok(n)
            } else {
                Err(EmbedError::ZeroNormRow(i))
            }
        })
        .collect()
}

fn check_shapes(z: &EmbeddingSet, zbar: &EmbeddingSet) -> Result<(), EmbedError> {
    if (z.n, z.d) != (zbar.n, zbar.d) {
        return Err(EmbedError::ShapeMismatch {
            left: (z.n, z.d),
            right: (zbar.n, zbar.d),
        });
    }
    Ok(())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Density of the paired similarities `cos(z_i, z̄_i)` over `bins` equal
/// bins on [-1, 1]. Bin labels are the lower edges.
pub fn cosine_pair_density(
    z: &EmbeddingSet,
    zbar: &EmbeddingSet,
    bins: usize,
) -> Result<Histogram, EmbedError> {
    check_shapes(z, zbar)?;
    if bins == 0 {
        return Err(EmbedError::InvalidBins);
    }
    let (nz, nb) = (norms(z)?, norms(zbar)?);
    let labels = (0..bins)
        .map(|b| (-1.0 + 2.0 * b as f64 / bins as f64).to_string())
        .collect();
    let mut h = Histogram::new(HistogramKind::CosineSimilarity, labels);
    for i in 0..z.n {
        let s = (dot(z.row(i), zbar.row(i)) / (nz[i] * nb[i])).clamp(-1.0, 1.0);
        let b = (((s + 1.0) / 2.0 * bins as f64).floor() as usize).min(bins - 1);
        h.counts[b] += 1;
    }
    h.normalize();
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastiveReport {
    pub tau: f64,
    pub per_example_loss: Vec<f64>,
    pub mean_loss: f64,
}

/// `ℓ_i = logsumexp_j(sim(z_i, z̄_j)/τ) − sim(z_i, z̄_i)/τ`.
pub fn contrastive_loss(
    z: &EmbeddingSet,
    zbar: &EmbeddingSet,
    tau: f64,
) -> Result<ContrastiveReport, EmbedError> {
    check_shapes(z, zbar)?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(EmbedError::NonPositiveTau(tau));
    }
    let (nz, nb) = (norms(z)?, norms(zbar)?);
    let per_example_loss: Vec<f64> = (0..z.n)
        .into_par_iter()
        .map(|i| {
            let logits: Vec<f64> = (0..zbar.n)
                .map(|j| dot(z.row(i), zbar.row(j)) / (nz[i] * nb[j]) / tau)
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            lse - logits[i]
        })
        .collect();
    let mean_loss = per_example_loss.iter().sum::<f64>() / z.n as f64;
    Ok(ContrastiveReport {
        tau,
        per_example_loss,
        mean_loss,
    })
}

/// Sorted Euclidean distances from every point to its `k` nearest other
/// points, by brute force.
pub fn knn_distances(e: &EmbeddingSet, k: usize) -> Vec<Vec<f64>> {
    (0..e.n)
        .into_par_iter()
        .map(|i| {
            let xi = e.row(i);
            let mut best: Vec<f64> = Vec::with_capacity(k + 1);
            for j in 0..e.n {
                if j == i {
                    continue;
                }
                let d2: f64 = xi
                    .iter()
                    .zip(e.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if best.len() == k && d2 >= best[k - 1] {
                    continue;
                }
                let at = best.partition_point(|&x| x <= d2);
                best.insert(at, d2);
                best.truncate(k);
            }
            best.into_iter().map(f64::sqrt).collect()
        })
        .collect()
}

fn centered(e: &EmbeddingSet) -> DMatrix<f64> {
    let mut x = DMatrix::from_row_slice(e.n, e.d, &e.data);
    for c in 0..e.d {
        let mean = x.column(c).sum() / e.n as f64;
        x.column_mut(c).add_scalar_mut(-mean);
    }
    x
}

/// Eigenpairs of the sample covariance, largest eigenvalue first.
fn covariance_spectrum(e: &EmbeddingSet) -> Result<(Vec<f64>, DMatrix<f64>), EmbedError> {
    if e.n < 2 {
        return Err(EmbedError::TooFewPoints { n: e.n, required: 2 });
    }
    if e.rows().all(|r| r == e.row(0)) {
        return Err(EmbedError::DegenerateCovariance);
    }
    let x = centered(e);
    let cov = (x.transpose() * &x) / (e.n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..e.d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if !(values[0] > 0.0) {
        return Err(EmbedError::DegenerateCovariance);
    }
    let vectors = DMatrix::from_fn(e.d, e.d, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Count of covariance eigenvalues above `alpha` times the largest.
pub fn id_lpca(e: &EmbeddingSet, alpha: f64) -> Result<f64, EmbedError> {
    let (values, _) = covariance_spectrum(e)?;
    Ok(values.iter().filter(|&&l| l > alpha * values[0]).count() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeighborEstimate {
    pub estimate: f64,
    pub used: usize,
    pub excluded: usize,
}

pub fn id_mom(e: &EmbeddingSet, k: usize) -> Result<NeighborEstimate, EmbedError> {
    if k < 2 || e.n <= k {
        return Err(EmbedError::TooFewPoints {
            n: e.n,
            required: k.max(2) + 1,
        });
    }
    let mut local: Vec<f64> = Vec::with_capacity(e.n);
    let mut excluded = 0;
    for r in knn_distances(e, k) {
        let w = r[k - 1];
        let m1 = r.iter().sum::<f64>() / k as f64;
        if w > m1 {
            local.push(m1 / (w - m1));
        } else {
            excluded += 1;
        }
    }
    if local.is_empty() {
        return Err(EmbedError::AllDuplicates { excluded });
    }
    local.sort_by(f64::total_cmp);
    Ok(NeighborEstimate {
        estimate: local.iter().sum::<f64>() / local.len() as f64,
        used: local.len(),
        excluded,
    })
}

/// Maximum likelihood on the ratios `μ = r2/r1`, which follow a Pareto law
/// with the intrinsic dimension as exponent. The largest `discard_fraction`
/// of ratios are treated as censored at the largest retained ratio.
pub fn id_twonn(e: &EmbeddingSet, discard_fraction: f64) -> Result<NeighborEstimate, EmbedError> {
    if e.n < 3 {
        return Err(EmbedError::TooFewPoints { n: e.n, required: 3 });
    }
    let mut mu = Vec::with_capacity(e.n);
    let mut excluded = 0;
    for r in knn_distances(e, 2) {
        if r[0] > 0.0 {
            mu.push(r[1] / r[0]);
        } else {
            excluded += 1;
        }
    }
    if mu.is_empty() {
        return Err(EmbedError::AllDuplicates { excluded });
    }
    mu.sort_by(f64::total_cmp);
    let valid = mu.len();
    let dropped = ((discard_fraction.clamp(0.0, 1.0) * valid as f64).floor() as usize).min(valid - 1);
    let m = valid - dropped;
    let logs: f64 = mu[..m].iter().map(|x| x.ln()).sum();
    let denom = logs + dropped as f64 * mu[m - 1].ln();
    if !(denom > 0.0) {
        return Err(EmbedError::AllDuplicates { excluded });
    }
    Ok(NeighborEstimate {
        estimate: m as f64 / denom,
        used: m,
        excluded,
    })
}

/// Principal branch of the Lambert W function for `x ≥ 0`.
pub fn lambert_w0(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut w = (1.0 + x).ln();
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let step = f / (ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0));
        w -= step;
        if step.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    w
}

pub fn default_fisher_alphas() -> Vec<f64> {
    (0..20).map(|i| (60 + 2 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherPoint {
    pub alpha: f64,
    pub inseparable_fraction: f64,
    pub dimension: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherEstimate {
    pub estimate: f64,
    pub selected_alpha: f64,
    pub retained_components: usize,
    pub profile: Vec<FisherPoint>,
}

/// Dimension of a uniform sphere with inseparable fraction `p` at `alpha`.
fn sphere_dimension(alpha: f64, p: f64) -> f64 {
    let a2 = alpha * alpha;
    let w = -(1.0 - a2).ln();
    lambert_w0(w / (2.0 * std::f64::consts::PI * p * p * a2 * (1.0 - a2))) / w
}

/// Fisher separability estimate. Data are centered, reduced to principal
/// components with eigenvalue above a tenth of the largest, whitened and
/// projected on the unit sphere. Point `x` is inseparable from `y` at
/// `alpha` when `⟨x, y⟩ > alpha`.
pub fn id_fishers(e: &EmbeddingSet, alphas: &[f64]) -> Result<FisherEstimate, EmbedError> {
    if e.n < 3 {
        return Err(EmbedError::TooFewPoints { n: e.n, required: 3 });
    }
    let (values, vectors) = covariance_spectrum(e)?;
    let keep = values.iter().filter(|&&l| l > values[0] / 10.0).count();
    let x = centered(e);
    let proj = x * vectors.columns(0, keep);
    let points: Vec<Vec<f64>> = (0..e.n)
        .filter_map(|i| {
            let r: Vec<f64> = (0..keep).map(|c| proj[(i, c)] / values[c].sqrt()).collect();
            let norm = dot(&r, &r).sqrt();
            (norm > 0.0).then(|| r.iter().map(|v| v / norm).collect())
        })
        .collect();
    let n = points.len();
    if n < 3 {
        return Err(EmbedError::TooFewPoints { n, required: 3 });
    }

    let mut sorted_alphas: Vec<f64> = alphas.to_vec();
    sorted_alphas.sort_by(f64::total_cmp);
    let counts: Vec<Vec<u64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut c = vec![0u64; sorted_alphas.len()];
            for (j, pj) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let s = dot(&points[i], pj);
                let above = sorted_alphas.partition_point(|&a| a < s);
                for slot in &mut c[..above] {
                    *slot += 1;
                }
            }
            c
        })
        .collect();
    let pairs = (n * (n - 1)) as f64;
    let profile: Vec<FisherPoint> = sorted_alphas
        .iter()
        .enumerate()
        .map(|(a, &alpha)| {
            let p = counts.iter().map(|c| c[a]).sum::<u64>() as f64 / pairs;
            let dimension = (p > 0.0 && alpha > 0.0 && alpha < 1.0)
                .then(|| sphere_dimension(alpha, p))
                .filter(|d| d.is_finite());
            FisherPoint {
                alpha,
                inseparable_fraction: p,
                dimension,
            }
        })
        .collect();

    let valid: Vec<&FisherPoint> = profile.iter().filter(|p| p.dimension.is_some()).collect();
    let alpha_max = valid
        .iter()
        .map(|p| p.alpha)
        .fold(f64::NEG_INFINITY, f64::max);
    let target = 0.9 * alpha_max;
    let chosen = valid
        .iter()
        .min_by(|a, b| (a.alpha - target).abs().total_cmp(&(b.alpha - target).abs()))
        .ok_or(EmbedError::AllDuplicates { excluded: e.n - n })?;
    Ok(FisherEstimate {
        estimate: chosen.dimension.unwrap(),
        selected_alpha: chosen.alpha,
        retained_components: keep,
        profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdParams {
    pub lpca_alpha: f64,
    pub mom_k: usize,
    pub twonn_discard: f64,
    pub fishers_alphas: Vec<f64>,
}

impl Default for IdParams {
    fn default() -> Self {
        Self {
            lpca_alpha: 0.05,
            mom_k: 20,
            twonn_discard: 0.1,
            fishers_alphas: default_fisher_alphas(),
        }
    }
}

/// All four estimates, each capped at the ambient dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdEstimates {
    pub lpca: f64,
    pub mom: f64,
    pub twonn: f64,
    pub fishers: f64,
    pub params: IdParams,
    pub mom_excluded: usize,
    pub twonn_excluded: usize,
    pub fishers_selected_alpha: f64,
    pub fishers_profile: Vec<FisherPoint>,
}

pub fn id_estimates(e: &EmbeddingSet, params: &IdParams) -> Result<IdEstimates, EmbedError> {
    let cap = |v: f64| v.min(e.d as f64);
    let mom = id_mom(e, params.mom_k)?;
    let twonn = id_twonn(e, params.twonn_discard)?;
    let fishers = id_fishers(e, &params.fishers_alphas)?;
    Ok(IdEstimates {
        lpca: cap(id_lpca(e, params.lpca_alpha)?),
        mom: cap(mom.estimate),
        twonn: cap(twonn.estimate),
        fishers: cap(fishers.estimate),
        params: params.clone(),
        mom_excluded: mom.excluded,
        twonn_excluded: twonn.excluded,
        fishers_selected_alpha: fishers.selected_alpha,
        fishers_profile: fishers.profile,
    })
}
