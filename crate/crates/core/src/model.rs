//! The symmetric mixture `½N(θ*, σ²I) + ½N(-θ*, σ²I)`, the regions the
//! convergence results live on, and seeded data generation.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, domain, Error, Result};
use crate::rng::{self, Purpose, StreamRng};
use crate::vector::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    theta_star: Vec<f64>,
    sigma: f64,
}

impl MixtureModel {
    pub fn new(theta_star: Vec<f64>, sigma: f64) -> Result<Self> {
        if theta_star.is_empty() {
            return domain("dimension must be at least 1");
        }
        if !theta_star.iter().all(|v| v.is_finite()) || !(norm(&theta_star) > 0.0) {
            return domain("θ* must be finite and non-zero");
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return domain(format!("σ must be positive and finite, got {sigma}"));
        }
        Ok(Self { theta_star, sigma })
    }

    /// Center `s·σ·e₁`, the canonical model for a given signal-to-noise ratio.
    pub fn with_snr(d: usize, snr: f64, sigma: f64) -> Result<Self> {
        if d == 0 {
            return domain("dimension must be at least 1");
        }
        let mut theta_star = vec![0.0; d];
        theta_star[0] = snr * sigma;
        Self::new(theta_star, sigma)
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta_norm(&self) -> f64 {
        norm(&self.theta_star)
    }

    /// Signal-to-noise ratio `s = ‖θ*‖/σ`.
    pub fn snr(&self) -> f64 {
        self.theta_norm() / self.sigma
    }

    /// Hex digest of `(d, σ, θ*)` in little-endian bit patterns; first 16
    /// hex digits of SHA-256.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.dim() as u64).to_le_bytes());
        hasher.update(self.sigma.to_bits().to_le_bytes());
        for v in &self.theta_star {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hasher.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The same model with the center mapped through `map`, for rotation
    /// checks.
    pub fn map_center(&self, map: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        Self::new(map(&self.theta_star), self.sigma)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.dim(), theta.len())
    }

    /// `⟨θ, θ*⟩ ≥ a‖θ*‖²`
    pub fn in_half_space(&self, theta: &[f64], a: f64) -> Result<bool> {
        self.check(theta)?;
        Ok(dot(theta, &self.theta_star) >= a * dot(&self.theta_star, &self.theta_star))
    }

    /// `‖θ‖ ≤ r‖θ*‖`
    pub fn in_ball(&self, theta: &[f64], r: f64) -> Result<bool> {
        self.check(theta)?;
        Ok(norm(theta) <= r * self.theta_norm())
    }

    pub fn in_d(&self, theta: &[f64], region: Region) -> Result<bool> {
        Ok(self.in_half_space(theta, region.a())? && self.in_ball(theta, region.r())?)
    }

    /// Sign-symmetrized region: `|⟨θ, θ*⟩| ≥ a‖θ*‖²` and `θ ∈ B_r`.
    pub fn in_d_tilde(&self, theta: &[f64], region: Region) -> Result<bool> {
        self.check(theta)?;
        let aligned = dot(theta, &self.theta_star).abs() >= region.a() * dot(&self.theta_star, &self.theta_star);
        Ok(aligned && self.in_ball(theta, region.r())?)
    }

    /// One draw `η·θ* + σz` into `out`, returning the label `η`.
    fn draw_into(&self, rng: &mut StreamRng, out: &mut [f64]) -> i8 {
        let eta: i8 = if rng.random::<bool>() { 1 } else { -1 };
        let sign = f64::from(eta);
        for (o, t) in out.iter_mut().zip(&self.theta_star) {
            let z: f64 = rng.sample(StandardNormal);
            *o = sign * t + self.sigma * z;
        }
        eta
    }

    /// `n` draws from the mixture with latent labels recorded.
    pub fn sample_dataset(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return domain("dataset size must be at least 1");
        }
        let d = self.dim();
        let mut rng = rng::stream(seed, Purpose::Dataset, 0);
        let mut points = vec![0.0; n * d];
        let mut labels = Vec::with_capacity(n);
        for row in points.chunks_exact_mut(d) {
            labels.push(self.draw_into(&mut rng, row));
        }
        Ok(Dataset {
            n,
            d,
            points,
            labels: Some(labels),
            seed,
            model_fingerprint: self.fingerprint(),
        })
    }

    /// Fresh draws for Monte Carlo estimators that never materialize a
    /// [`Dataset`].
    pub(crate) fn for_each_draw(&self, count: usize, rng: &mut StreamRng, mut f: impl FnMut(&[f64])) {
        let mut buf = vec![0.0; self.dim()];
        for _ in 0..count {
            self.draw_into(rng, &mut buf);
            f(&buf);
        }
    }
}

/// Parameters `(a, r)` of the half-space `H_a` and ball `B_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    a: f64,
    r: f64,
}

impl Region {
    pub fn new(a: f64, r: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return domain(format!("region needs a ∈ (0, 1), got a = {a}"));
        }
        if !(r >= 1.0 && r.is_finite()) {
            return domain(format!("region needs r ≥ 1, got r = {r}"));
        }
        Ok(Self { a, r })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    points: Vec<f64>,
    labels: Option<Vec<i8>>,
    seed: u64,
    model_fingerprint: String,
}

/// JSON sidecar written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub seed: u64,
    pub model_fingerprint: String,
}

impl Dataset {
    /// Wraps an existing row-major `n × d` matrix.
    pub fn from_rows(rows: Vec<Vec<f64>>, seed: u64, model_fingerprint: impl Into<String>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return domain("dataset must have at least one row");
        }
        let d = rows[0].len();
        if d == 0 {
            return domain("dataset rows must be non-empty");
        }
        let mut points = Vec::with_capacity(n * d);
        for row in &rows {
            check_dim(d, row.len())?;
            if !row.iter().all(|v| v.is_finite()) {
                return domain("dataset rows must be finite");
            }
            points.extend_from_slice(row);
        }
        Ok(Self {
            n,
            d,
            points,
            labels: None,
            seed,
            model_fingerprint: model_fingerprint.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }

    /// Latent component signs. Diagnostics only; no estimator reads them.
    pub fn labels(&self) -> Option<&[i8]> {
        self.labels.as_deref()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.d)
    }

    pub fn meta(&self, sigma: f64) -> DatasetMeta {
        DatasetMeta {
            n: self.n,
            d: self.d,
            sigma,
            seed: self.seed,
            model_fingerprint: self.model_fingerprint.clone(),
        }
    }

    /// Writes `y1,…,yd[,label]` to `csv_path` and the sidecar JSON to
    /// `meta_path`.
    pub fn write(&self, csv_path: &Path, meta_path: &Path, sigma: f64) -> Result<()> {
        let mut writer = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
        let mut header: Vec<String> = (1..=self.d).map(|j| format!("y{j}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        writer.write_record(&header)?;
        for (i, row) in self.rows().enumerate() {
            let mut record: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            if let Some(labels) = &self.labels {
                record.push(labels[i].to_string());
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(meta_path)?), &self.meta(sigma))?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write`] (the label column is
    /// optional). Returns the dataset and its sidecar.
    pub fn read(csv_path: &Path, meta_path: &Path) -> Result<(Self, DatasetMeta)> {
        let meta: DatasetMeta = serde_json::from_reader(BufReader::new(File::open(meta_path)?))?;
        let mut reader = csv::Reader::from_reader(BufReader::new(File::open(csv_path)?));
        let header = reader.headers()?.clone();
        let has_label = header.iter().next_back() == Some("label");
        let d = header.len() - usize::from(has_label);
        for (j, name) in header.iter().take(d).enumerate() {
            if name != format!("y{}", j + 1) {
                return Err(Error::Config(vec![format!("unexpected CSV column {name:?} at position {j}")]));
            }
        }
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record?;
            for field in record.iter().take(d) {
                points.push(parse_field(field)?);
            }
            if has_label {
                let label: i8 = record
                    .get(d)
                    .and_then(|f| f.trim().parse().ok())
                    .ok_or_else(|| Error::Config(vec!["label must be -1 or 1".into()]))?;
                labels.push(label);
            }
        }
        let n = points.len() / d.max(1);
        if n != meta.n || d != meta.d {
            return Err(Error::Config(vec![format!(
                "sidecar says {}×{} but CSV holds {n}×{d}",
                meta.n, meta.d
            )]));
        }
        if n == 0 {
            return domain("dataset must have at least one row");
        }
        let dataset = Self {
            n,
            d,
            points,
            labels: has_label.then_some(labels),
            seed: meta.seed,
            model_fingerprint: meta.model_fingerprint.clone(),
        };
        Ok((dataset, meta))
    }
}

fn parse_field(field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Config(vec![format!("not a number: {field:?}")]))?;
    if v.is_finite() {
        Ok(v)
    } else {
        domain("dataset rows must be finite")
    }
}

/// Shortest representation that round-trips exactly.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Subtracts the column mean from every row. Returns the centered rows and
/// the mean.
pub fn center_data(points: &[f64], d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if d == 0 || points.is_empty() || !points.len().is_multiple_of(d) {
        return domain("center_data needs a non-empty n × d matrix");
    }
    let n = points.len() / d;
    let mut mean = vec![0.0; d];
    for row in points.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = points
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m))
        .collect();
    Ok((centered, mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    UniformRejection,
    StratifiedAxis,
}

/// Region probes together with rejection statistics.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub points: Vec<Vec<f64>>,
    /// Candidate draws made by the rejection sampler (0 for stratified).
    pub tries: u64,
}

/// Below this estimated acceptance rate the rejection sampler refuses.
pub const MIN_ACCEPTANCE: f64 = 1e-6;
pub const MAX_REJECTION_DIM: usize = 64;

/// Points of `D_{a,r}` for verifying statements that hold on the whole
/// region.
pub fn sample_region_points(
    model: &MixtureModel,
    region: Region,
    count: usize,
    seed: u64,
    mode: ProbeMode,
) -> Result<Vec<Vec<f64>>> {
    Ok(sample_region_probes(model, region, count, seed, mode)?.points)
}

pub fn sample_region_probes(
    model: &MixtureModel,
    region: Region,
    count: usize,
    seed: u64,
    mode: ProbeMode,
) -> Result<ProbeSet> {
    if count == 0 {
        return domain("probe count must be at least 1");
    }
    match mode {
        ProbeMode::UniformRejection => rejection_probes(model, region, count, seed),
        ProbeMode::StratifiedAxis => Ok(ProbeSet {
            points: stratified_probes(model, region, count, seed),
            tries: 0,
        }),
    }
}

/// Uniform point of the ball `B_r`.
fn uniform_in_ball(model: &MixtureModel, radius: f64, rng: &mut StreamRng) -> Vec<f64> {
    let d = model.dim();
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let len = norm(&v);
    let u: f64 = rng.random();
    let scale = radius * u.powf(1.0 / d as f64) / len;
    for x in &mut v {
        *x *= scale;
    }
    v
}

/// Draws from `B_r` until one lands in `H_a`.
pub(crate) fn rejection_draw(model: &MixtureModel, region: Region, rng: &mut StreamRng) -> (Vec<f64>, u64) {
    let radius = region.r() * model.theta_norm();
    let mut tries = 0;
    loop {
        tries += 1;
        let p = uniform_in_ball(model, radius, rng);
        if model.in_half_space(&p, region.a()).unwrap_or(false) {
            return (p, tries);
        }
    }
}

/// Guards the rejection sampler against regions too thin to hit.
pub(crate) fn check_rejection_feasible(model: &MixtureModel, region: Region, seed: u64) -> Result<()> {
    if model.dim() > MAX_REJECTION_DIM {
        return Err(Error::Precondition(format!(
            "rejection probes need d ≤ {MAX_REJECTION_DIM} (d = {}); use stratified-axis mode",
            model.dim()
        )));
    }
    const QUICK: u64 = 10_000;
    const PILOT: u64 = 1_000_000;
    let mut rng = rng::stream(seed, Purpose::Pilot, 0);
    let radius = region.r() * model.theta_norm();
    let mut hits = 0u64;
    for i in 0..PILOT {
        let p = uniform_in_ball(model, radius, &mut rng);
        if model.in_half_space(&p, region.a())? {
            hits += 1;
        }
        if i + 1 == QUICK && hits >= 10 {
            return Ok(());
        }
    }
    if (hits as f64) / (PILOT as f64) < MIN_ACCEPTANCE {
        return Err(Error::Precondition(format!(
            "estimated rejection acceptance {:.1e} is below {MIN_ACCEPTANCE:e}; use stratified-axis mode",
            hits as f64 / PILOT as f64
        )));
    }
    Ok(())
}

fn rejection_probes(model: &MixtureModel, region: Region, count: usize, seed: u64) -> Result<ProbeSet> {
    check_rejection_feasible(model, region, seed)?;
    let mut rng = rng::stream(seed, Purpose::Probe, 0);
    let mut tries = 0;
    let points = (0..count)
        .map(|_| {
            let (p, t) = rejection_draw(model, region, &mut rng);
            tries += t;
            p
        })
        .collect();
    Ok(ProbeSet { points, tries })
}

/// The point with `⟨θ,θ*⟩ = c‖θ*‖²` and `‖θ‖ = ρ‖θ*‖`, leaving the θ* axis
/// along `dir` (a unit vector orthogonal to θ*).
fn axis_point(model: &MixtureModel, c: f64, rho: f64, dir: Option<&[f64]>) -> Vec<f64> {
    let tn = model.theta_norm();
    let off = (rho * rho - c * c).max(0.0).sqrt() * tn;
    let mut p: Vec<f64> = model.theta_star().iter().map(|t| c * t).collect();
    if let Some(dir) = dir {
        for (x, u) in p.iter_mut().zip(dir) {
            *x += off * u;
        }
    }
    p
}

/// Random unit vector orthogonal to θ*, or `None` when `d = 1`.
fn orthogonal_direction(model: &MixtureModel, rng: &mut StreamRng) -> Option<Vec<f64>> {
    if model.dim() < 2 {
        return None;
    }
    let t = model.theta_star();
    let tt = dot(t, t);
    loop {
        let mut v: Vec<f64> = (0..model.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let proj = dot(&v, t) / tt;
        for (x, ti) in v.iter_mut().zip(t) {
            *x -= proj * ti;
        }
        let len = norm(&v);
        if len > 1e-8 {
            for x in &mut v {
                *x /= len;
            }
            return Some(v);
        }
    }
}

/// Inset keeping probe points strictly inside the inclusive boundaries
/// after rounding.
const BOUNDARY_INSET: f64 = 1e-9;

fn stratified_probes(model: &MixtureModel, region: Region, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, Purpose::Probe, 1);
    let (a, r) = (region.a(), region.r());
    let c_lo = a * (1.0 + BOUNDARY_INSET);
    let rho_hi = r * (1.0 - BOUNDARY_INSET);
    let mut points = vec![model.theta_star().to_vec()];
    if count > 1 {
        let dir = orthogonal_direction(model, &mut rng);
        // Near-boundary point: on the half-space face at the ball's rim.
        points.push(axis_point(model, c_lo, rho_hi, dir.as_deref()));
    }
    let remaining = count.saturating_sub(points.len());
    if remaining > 0 {
        let side = (remaining as f64).sqrt().ceil().max(2.0) as usize;
        let mut grid = Vec::with_capacity(side * side);
        for i in 0..side {
            let c = c_lo + (rho_hi - c_lo) * i as f64 / (side - 1) as f64;
            for j in 0..side {
                let rho = c + (rho_hi - c) * j as f64 / (side - 1) as f64;
                grid.push((c, rho));
            }
        }
        // Corners and the θ*-axis segment first, then the interior.
        grid.sort_by_key(|&(c, rho)| {
            let corner = (c == c_lo || c == rho_hi) && (rho == c || rho == rho_hi);
            let axis = rho == c;
            match (corner, axis) {
                (true, _) => 0,
                (false, true) => 1,
                _ => 2,
            }
        });
        for (c, rho) in grid.into_iter().take(remaining) {
            let dir = orthogonal_direction(model, &mut rng);
            points.push(axis_point(model, c, rho, dir.as_deref()));
        }
    }
    points.retain(|p| model.in_d(p, region).unwrap_or(false));
    while points.len() < count {
        points.push(model.theta_star().to_vec());
    }
    points
}

/// Half stratified, half uniform-rejection probes; all stratified when the
/// rejection sampler refuses the region.
pub fn mixed_region_probes(model: &MixtureModel, region: Region, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return domain("probe count must be at least 1");
    }
    let n_strat = count.div_ceil(2);
    let mut points = stratified_probes(model, region, n_strat, seed);
    if count > n_strat {
        match rejection_probes(model, region, count - n_strat, seed) {
            Ok(set) => points.extend(set.points),
            Err(Error::Precondition(_)) => points = stratified_probes(model, region, count, seed),
            Err(e) => return Err(e),
        }
    }
    Ok(points)
}

/// Probe sets where the first `k` points do not depend on `count`: θ*, the
/// four corners of the `(⟨θ,θ*⟩/‖θ*‖², ‖θ‖/‖θ*‖)` profile, then uniform
/// points of `D_{a,r}` each drawn from its own stream.
pub fn nested_region_probes(model: &MixtureModel, region: Region, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return domain("probe count must be at least 1");
    }
    check_rejection_feasible(model, region, seed)?;
    let (a, r) = (region.a(), region.r());
    let c_lo = a * (1.0 + BOUNDARY_INSET);
    let rho_hi = r * (1.0 - BOUNDARY_INSET);
    let mut dir_rng = rng::stream(seed, Purpose::Probe, 2);
    let dir = orthogonal_direction(model, &mut dir_rng);
    let anchors = [
        model.theta_star().to_vec(),
        axis_point(model, c_lo, c_lo, None),
        axis_point(model, c_lo, rho_hi, dir.as_deref()),
        axis_point(model, rho_hi, rho_hi, None),
        axis_point(model, 1.0, 0.5 * (1.0 + rho_hi).max(1.0), dir.as_deref()),
    ];
    let mut points: Vec<Vec<f64>> = anchors
        .into_iter()
        .filter(|p| model.in_d(p, region).unwrap_or(false))
        .take(count)
        .collect();
    let mut index = 0u64;
    while points.len() < count {
        let mut rng = rng::stream(seed, Purpose::Probe, 1_000 + index);
        points.push(rejection_draw(model, region, &mut rng).0);
        index += 1;
    }
    Ok(points)
}
