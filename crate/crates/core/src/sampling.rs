//! Seeded synthesis of homodyne and heterodyne records.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::gaussian::{
    marginal_variance, to_heterodyne_cov, to_homodyne_cov, CovMat, DetectionModel,
};
use crate::rng::{self, tag, RNG_ALGORITHM};
use crate::stats::{self, HeterodyneStats, HomodyneStats, BATCH};

/// `count` equally spaced angles starting at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleProtocol {
    pub count: usize,
    pub offset: f64,
}

impl AngleProtocol {
    pub fn new(count: usize, offset: f64) -> Result<Self> {
        if count == 0 {
            return Err(TomoError::InvalidProtocol(
                "angle count must be positive".into(),
            ));
        }
        let step = 2.0 * PI / count as f64;
        if !(0.0..step).contains(&offset) {
            return Err(TomoError::InvalidProtocol(format!(
                "offset {offset} outside [0, {step})"
            )));
        }
        Ok(AngleProtocol { count, offset })
    }

    /// Offset drawn uniformly from `[0, 2pi/count)`.
    pub fn random_offset(count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(TomoError::InvalidProtocol(
                "angle count must be positive".into(),
            ));
        }
        let step = 2.0 * PI / count as f64;
        let offset = rng::stream(seed, &[tag::OFFSET]).gen_range(0.0..step);
        Self::new(count, offset)
    }

    pub fn step(&self) -> f64 {
        2.0 * PI / self.count as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.offset + k as f64 * self.step())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub label: String,
    pub detection: DetectionModel,
    pub rng: String,
    /// Provenance of post-processing steps, oldest first.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl DatasetMeta {
    pub fn new(seed: u64, label: impl Into<String>, detection: DetectionModel) -> Self {
        DatasetMeta {
            seed,
            label: label.into(),
            detection,
            rng: RNG_ALGORITHM.to_string(),
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomodyneDataset {
    pub angles: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub meta: DatasetMeta,
}

impl HomodyneDataset {
    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(TomoError::InvalidProtocol("dataset has no angles".into()));
        }
        if self.angles.len() != self.samples.len() {
            return Err(TomoError::InvalidProtocol(
                "angle list and sample bins differ in length".into(),
            ));
        }
        if self.angles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TomoError::InvalidProtocol(
                "angles must be strictly increasing".into(),
            ));
        }
        if self.samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TomoError::InvalidState("non-finite sample value".into()));
        }
        Ok(())
    }

    pub fn stats(&self) -> HomodyneStats {
        HomodyneStats::from_samples(&self.angles, &self.samples)
    }

    pub fn total_count(&self) -> usize {
        self.samples.iter().map(Vec::len).sum()
    }

    pub fn is_ragged(&self) -> bool {
        let first = self.samples.first().map_or(0, Vec::len);
        self.samples.iter().any(|s| s.len() != first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterodyneDataset {
    pub pairs: Vec<[f64; 2]>,
    pub meta: DatasetMeta,
}

impl HeterodyneDataset {
    pub fn validate(&self) -> Result<()> {
        if self.pairs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TomoError::InvalidState("non-finite sample value".into()));
        }
        Ok(())
    }

    pub fn stats(&self) -> HeterodyneStats {
        HeterodyneStats::from_pairs(&self.pairs)
    }
}

fn require_physical(g_w: &CovMat) -> Result<()> {
    if g_w.physical {
        Ok(())
    } else {
        Err(TomoError::InvalidState(
            "true covariance must be positive semidefinite".into(),
        ))
    }
}

/// Noise model for one homodyne angle.
#[derive(Clone, Copy)]
struct QuadratureSource {
    signal_sd: f64,
    elec_sd: f64,
}

impl QuadratureSource {
    fn new(g_hom: &CovMat, g_elec: &CovMat, theta: f64) -> Self {
        QuadratureSource {
            signal_sd: marginal_variance(g_hom, theta).max(0.0).sqrt(),
            elec_sd: marginal_variance(g_elec, theta).max(0.0).sqrt(),
        }
    }

    fn fill(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        if self.elec_sd > 0.0 {
            for v in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                *v = self.signal_sd * z + self.elec_sd * e;
            }
        } else {
            for v in out.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = self.signal_sd * z;
            }
        }
    }
}

fn batch_len(total: usize, b: usize) -> usize {
    BATCH.min(total - b * BATCH)
}

fn n_batches(total: usize) -> usize {
    total.div_ceil(BATCH)
}

fn homodyne_angle(src: QuadratureSource, seed: u64, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (b, chunk) in out.chunks_mut(BATCH).enumerate() {
        let mut rng = rng::stream(seed, &[tag::HOMODYNE, k as u64, b as u64]);
        src.fill(&mut rng, chunk);
    }
    out
}

fn homodyne_angle_sum_sq(src: QuadratureSource, seed: u64, k: usize, n: usize) -> f64 {
    let mut buf = vec![0.0; BATCH.min(n)];
    (0..n_batches(n))
        .map(|b| {
            let len = batch_len(n, b);
            let mut rng = rng::stream(seed, &[tag::HOMODYNE, k as u64, b as u64]);
            src.fill(&mut rng, &mut buf[..len]);
            stats::sum_sq(&buf[..len])
        })
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

fn homodyne_sources(g_w: &CovMat, det: &DetectionModel, angles: &[f64]) -> Vec<QuadratureSource> {
    let g_hom = to_homodyne_cov(g_w, det);
    angles
        .iter()
        .map(|&th| QuadratureSource::new(&g_hom, &det.g_elec, th))
        .collect()
}

/// Draw `n_per_angle` homodyne values at each protocol angle.
///
/// Each value is `N(0, sigma^2_theta(G_hom)) + N(0, sigma^2_theta(G_elec))`.
pub fn sample_homodyne(
    g_w: &CovMat,
    det: &DetectionModel,
    protocol: &AngleProtocol,
    n_per_angle: usize,
    seed: u64,
) -> Result<HomodyneDataset> {
    if protocol.count == 0 {
        return Err(TomoError::InvalidProtocol(
            "angle count must be positive".into(),
        ));
    }
    require_physical(g_w)?;
    if n_per_angle == 0 {
        return Err(TomoError::TooFewSamples { got: 0, need: 1 });
    }
    let angles = protocol.angles();
    let sources = homodyne_sources(g_w, det, &angles);
    let samples = sources
        .par_iter()
        .enumerate()
        .map(|(k, &src)| homodyne_angle(src, seed, k, n_per_angle))
        .collect();
    Ok(HomodyneDataset {
        angles,
        samples,
        meta: DatasetMeta::new(seed, "", *det),
    })
}

/// Streaming counterpart of [`sample_homodyne`]: same random stream, only the
/// per-angle sums of squares are kept.
pub fn sample_homodyne_stats(
    g_w: &CovMat,
    det: &DetectionModel,
    protocol: &AngleProtocol,
    n_per_angle: usize,
    seed: u64,
) -> Result<HomodyneStats> {
    if protocol.count == 0 {
        return Err(TomoError::InvalidProtocol(
            "angle count must be positive".into(),
        ));
    }
    require_physical(g_w)?;
    if n_per_angle == 0 {
        return Err(TomoError::TooFewSamples { got: 0, need: 1 });
    }
    let angles = protocol.angles();
    let sources = homodyne_sources(g_w, det, &angles);
    let sum_sq = sources
        .par_iter()
        .enumerate()
        .map(|(k, &src)| homodyne_angle_sum_sq(src, seed, k, n_per_angle))
        .collect();
    Ok(HomodyneStats {
        counts: vec![n_per_angle; angles.len()],
        angles,
        sum_sq,
    })
}

#[derive(Clone, Copy)]
struct PairSource {
    signal: (f64, f64, f64),
    elec: Option<(f64, f64, f64)>,
}

impl PairSource {
    fn new(g_w: &CovMat, det: &DetectionModel) -> Result<Self> {
        let signal = to_heterodyne_cov(g_w, det).cholesky()?;
        let elec = if det.g_elec == CovMat::zero() {
            None
        } else {
            Some(det.g_elec.cholesky()?)
        };
        Ok(PairSource { signal, elec })
    }

    fn fill(&self, rng: &mut ChaCha8Rng, out: &mut [[f64; 2]]) {
        let (l11, l21, l22) = self.signal;
        for v in out.iter_mut() {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let mut x = l11 * z1;
            let mut p = l21 * z1 + l22 * z2;
            if let Some((e11, e21, e22)) = self.elec {
                let w1: f64 = rng.sample(StandardNormal);
                let w2: f64 = rng.sample(StandardNormal);
                x += e11 * w1;
                p += e21 * w1 + e22 * w2;
            }
            *v = [x, p];
        }
    }
}

/// Draw `n_pairs` heterodyne pairs from `N(0, G_het + G_elec)`.
pub fn sample_heterodyne(
    g_w: &CovMat,
    det: &DetectionModel,
    n_pairs: usize,
    seed: u64,
) -> Result<HeterodyneDataset> {
    require_physical(g_w)?;
    if n_pairs == 0 {
        return Err(TomoError::TooFewSamples { got: 0, need: 1 });
    }
    let src = PairSource::new(g_w, det)?;
    let mut pairs = vec![[0.0; 2]; n_pairs];
    pairs
        .par_chunks_mut(BATCH)
        .enumerate()
        .for_each(|(b, chunk)| {
            let mut rng = rng::stream(seed, &[tag::HETERODYNE, b as u64]);
            src.fill(&mut rng, chunk);
        });
    Ok(HeterodyneDataset {
        pairs,
        meta: DatasetMeta::new(seed, "", *det),
    })
}

/// Streaming counterpart of [`sample_heterodyne`].
pub fn sample_heterodyne_stats(
    g_w: &CovMat,
    det: &DetectionModel,
    n_pairs: usize,
    seed: u64,
) -> Result<HeterodyneStats> {
    require_physical(g_w)?;
    if n_pairs == 0 {
        return Err(TomoError::TooFewSamples { got: 0, need: 1 });
    }
    let src = PairSource::new(g_w, det)?;
    let parts: Vec<HeterodyneStats> = (0..n_batches(n_pairs))
        .into_par_iter()
        .map_init(
            || vec![[0.0; 2]; BATCH.min(n_pairs)],
            |buf, b| {
                let len = batch_len(n_pairs, b);
                let mut rng = rng::stream(seed, &[tag::HETERODYNE, b as u64]);
                src.fill(&mut rng, &mut buf[..len]);
                HeterodyneStats::accumulate(&buf[..len])
            },
        )
        .collect();
    let mut acc = HeterodyneStats::default();
    for p in &parts {
        acc.merge(p);
    }
    Ok(acc)
}

/// Randomly redistribute all homodyne values over the angle bins, keeping
/// per-bin counts. Removes any phase information from the record.
pub fn thermalize_homodyne(d: &HomodyneDataset, seed: u64) -> Result<HomodyneDataset> {
    if d.angles.len() < 2 {
        return Err(TomoError::InvalidProtocol(
            "thermalization needs at least two angle bins".into(),
        ));
    }
    let per_bin = d.samples[0].len();
    if d.is_ragged() {
        let min = d.samples.iter().map(Vec::len).min().unwrap_or(0);
        let max = d.samples.iter().map(Vec::len).max().unwrap_or(0);
        return Err(TomoError::RaggedDataset { min, max });
    }
    let mut all: Vec<f64> = d.samples.iter().flatten().copied().collect();
    all.shuffle(&mut rng::stream(seed, &[tag::SHUFFLE]));
    let samples = all.chunks(per_bin).map(<[f64]>::to_vec).collect();
    let mut meta = d.meta.clone();
    meta.notes.push(format!(
        "thermalized by uniform shuffle across angle bins; source seed={}, shuffle seed={seed}",
        d.meta.seed
    ));
    Ok(HomodyneDataset {
        angles: d.angles.clone(),
        samples,
        meta,
    })
}

/// Rotate every pair by an independent uniform phase.
pub fn thermalize_heterodyne(d: &HeterodyneDataset, seed: u64) -> Result<HeterodyneDataset> {
    if d.pairs.is_empty() {
        return Err(TomoError::TooFewSamples { got: 0, need: 1 });
    }
    let mut pairs = d.pairs.clone();
    pairs
        .par_chunks_mut(BATCH)
        .enumerate()
        .for_each(|(b, chunk)| {
            let mut rng = rng::stream(seed, &[tag::ROTATE, b as u64]);
            for v in chunk.iter_mut() {
                let phi: f64 = rng.gen_range(0.0..2.0 * PI);
                let (s, c) = phi.sin_cos();
                let [x, p] = *v;
                *v = [c * x - s * p, s * x + c * p];
            }
        });
    let mut meta = d.meta.clone();
    meta.notes.push(format!(
        "thermalized by independent uniform rotation of each pair; source seed={}, rotation seed={seed}",
        d.meta.seed
    ));
    Ok(HeterodyneDataset { pairs, meta })
}
