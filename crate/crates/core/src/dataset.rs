//! Descriptor, ground-truth and similarity files, plus a synthetic
//! trajectory generator.
//!
//! File formats:
//! - EPRD descriptors (little-endian): magic `EPRD`, `u16` version (1),
//!   `u16` reserved (0), `u32` count, `u32` dim, then `count * dim`
//!   IEEE-754 `f32` values in row-major order.
//! - Ground truth CSV: `db_index,query_index,label` with label `hard` or
//!   `soft`; lines starting with `#` are comments.
//! - Sparse similarity CSV: `db_index,query_index,similarity`, similarity
//!   printed with 9 significant digits.
//!
//! All indices are 0-based.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::engine::{SparseColumn, SparseSimilarityMatrix};
use crate::error::{EprError, Result};

pub const EPRD_MAGIC: &[u8; 4] = b"EPRD";
pub const EPRD_VERSION: u16 = 1;
const EPRD_HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Database,
    Query,
}

/// An ordered set of descriptors, one row per image.
///
/// Values are held in `f64`; files store `f32`, so sets read from disk (and
/// sets produced by [`generate_synthetic`]) round-trip bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorSet {
    role: Role,
    dim: usize,
    data: Vec<f64>,
}

impl DescriptorSet {
    /// Builds a set from row-major data. Only the shape is checked here; use
    /// [`DescriptorSet::validate`] for the value invariants.
    pub fn new(role: Role, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(EprError::Validation(
                "descriptor dimension must be >= 1".into(),
            ));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(EprError::Validation(format!(
                "data length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(Self { role, dim, data })
    }

    pub fn from_rows(role: Role, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(EprError::Validation(format!(
                "row {i} has {} values, expected {dim}",
                r.len()
            )));
        }
        Self::new(role, dim.max(1), rows.concat())
    }

    /// Checks count >= 1, finite entries and nonzero row norms.
    pub fn validate(&self) -> Result<()> {
        if self.count() == 0 {
            return Err(EprError::Validation("descriptor set has no rows".into()));
        }
        for (i, row) in self.rows().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(EprError::Validation(format!(
                    "non-finite value at row {i}, column {j}"
                )));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(EprError::Validation(format!("row {i} has zero norm")));
            }
        }
        Ok(())
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn load_descriptors(path: impl AsRef<Path>, role: Role) -> Result<DescriptorSet> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_eprd(&bytes, role)
}

fn decode_eprd(bytes: &[u8], role: Role) -> Result<DescriptorSet> {
    if bytes.len() < EPRD_HEADER_LEN {
        return Err(EprError::Format(format!(
            "file holds {} bytes, shorter than the {EPRD_HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != EPRD_MAGIC {
        return Err(EprError::Format(format!(
            "bad magic {:?}, expected \"EPRD\"",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != EPRD_VERSION {
        return Err(EprError::Format(format!("unsupported version {version}")));
    }
    let reserved = u16::from_le_bytes([bytes[6], bytes[7]]);
    if reserved != 0 {
        return Err(EprError::Format(format!(
            "reserved field is {reserved}, expected 0"
        )));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if count == 0 || dim == 0 {
        return Err(EprError::Validation(format!(
            "header announces count={count}, dim={dim}; both must be >= 1"
        )));
    }

    let payload = &bytes[EPRD_HEADER_LEN..];
    let expected = count * dim;
    if !payload.len().is_multiple_of(4) || payload.len() / 4 != expected {
        return Err(EprError::Truncated {
            expected,
            actual: payload.len() / 4,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();

    let set = DescriptorSet::new(role, dim, data)?;
    set.validate()?;
    Ok(set)
}

/// Writes `set` as an EPRD file. Values are rounded to `f32`.
pub fn save_descriptors(set: &DescriptorSet, path: impl AsRef<Path>) -> Result<()> {
    set.validate()?;
    let count = u32::try_from(set.count())
        .map_err(|_| EprError::Validation("count exceeds u32 range".into()))?;
    let dim = u32::try_from(set.dim())
        .map_err(|_| EprError::Validation("dim exceeds u32 range".into()))?;

    let mut out = Vec::with_capacity(EPRD_HEADER_LEN + set.as_slice().len() * 4);
    out.extend_from_slice(EPRD_MAGIC);
    out.extend_from_slice(&EPRD_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for (n, &v) in set.as_slice().iter().enumerate() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(EprError::Validation(format!(
                "value at row {}, column {} overflows f32",
                n / set.dim(),
                n % set.dim()
            )));
        }
        out.extend_from_slice(&narrowed.to_le_bytes());
    }
    let mut file = File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Required (hard) and allowed (soft) matches between database and query.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    db_count: usize,
    q_count: usize,
    hard: BTreeSet<(usize, usize)>,
    soft: BTreeSet<(usize, usize)>,
}

impl GroundTruth {
    pub fn new(db_count: usize, q_count: usize) -> Self {
        Self {
            db_count,
            q_count,
            ..Self::default()
        }
    }

    fn check_range(&self, db: usize, q: usize) -> Result<()> {
        if db >= self.db_count {
            return Err(EprError::Range(format!(
                "database index {db} >= database count {}",
                self.db_count
            )));
        }
        if q >= self.q_count {
            return Err(EprError::Range(format!(
                "query index {q} >= query count {}",
                self.q_count
            )));
        }
        Ok(())
    }

    /// Adds a required match; it is also added to the soft relation.
    pub fn insert_hard(&mut self, db: usize, q: usize) -> Result<()> {
        self.check_range(db, q)?;
        self.hard.insert((db, q));
        self.soft.insert((db, q));
        Ok(())
    }

    pub fn insert_soft(&mut self, db: usize, q: usize) -> Result<()> {
        self.check_range(db, q)?;
        self.soft.insert((db, q));
        Ok(())
    }

    pub fn db_count(&self) -> usize {
        self.db_count
    }

    pub fn q_count(&self) -> usize {
        self.q_count
    }

    pub fn hard(&self) -> &BTreeSet<(usize, usize)> {
        &self.hard
    }

    pub fn soft(&self) -> &BTreeSet<(usize, usize)> {
        &self.soft
    }

    pub fn is_hard(&self, db: usize, q: usize) -> bool {
        self.hard.contains(&(db, q))
    }

    pub fn is_soft(&self, db: usize, q: usize) -> bool {
        self.soft.contains(&(db, q))
    }

    /// Per-query flag: does the query have at least one hard match.
    pub fn queries_with_hard_match(&self) -> Vec<bool> {
        let mut has = vec![false; self.q_count];
        for &(_, q) in &self.hard {
            has[q] = true;
        }
        has
    }
}

pub fn load_ground_truth(
    path: impl AsRef<Path>,
    db_count: usize,
    q_count: usize,
) -> Result<GroundTruth> {
    let reader = BufReader::new(File::open(path)?);
    let mut gt = GroundTruth::new(db_count, q_count);
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(EprError::Format(format!(
                "line {}: expected `db_index,query_index,label`, got {line:?}",
                n + 1
            )));
        }
        let db = parse_index(fields[0], n)?;
        let q = parse_index(fields[1], n)?;
        match fields[2] {
            "hard" => gt.insert_hard(db, q)?,
            "soft" => gt.insert_soft(db, q)?,
            other => {
                return Err(EprError::Format(format!(
                    "line {}: unknown label {other:?} (expected hard or soft)",
                    n + 1
                )))
            }
        }
    }
    Ok(gt)
}

pub fn save_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# db_index,query_index,label")?;
    for &(db, q) in &gt.soft {
        let label = if gt.is_hard(db, q) { "hard" } else { "soft" };
        writeln!(w, "{db},{q},{label}")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_index(token: &str, line: usize) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| EprError::Format(format!("line {}: invalid index {token:?}", line + 1)))
}

/// Formats a similarity with 9 significant digits.
pub fn format_similarity(value: f64) -> String {
    format!("{value:.8e}")
}

/// Writes every evaluated entry, query-major and then by database index.
pub fn save_similarity_csv(matrix: &SparseSimilarityMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_similarity_csv(matrix, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_similarity_csv(matrix: &SparseSimilarityMatrix, w: &mut impl Write) -> Result<()> {
    writeln!(w, "# db_index,query_index,similarity")?;
    for (db, q, s) in matrix.iter() {
        writeln!(w, "{db},{q},{}", format_similarity(s))?;
    }
    Ok(())
}

pub fn load_similarity_csv(
    path: impl AsRef<Path>,
    db_count: usize,
    q_count: usize,
) -> Result<SparseSimilarityMatrix> {
    let reader = BufReader::new(File::open(path)?);
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); q_count];
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(EprError::Format(format!(
                "line {}: expected `db_index,query_index,similarity`, got {line:?}",
                n + 1
            )));
        }
        let db = parse_index(fields[0], n)?;
        let q = parse_index(fields[1], n)?;
        let s: f64 = fields[2].parse().map_err(|_| {
            EprError::Format(format!(
                "line {}: invalid similarity {:?}",
                n + 1,
                fields[2]
            ))
        })?;
        if db >= db_count || q >= q_count {
            return Err(EprError::Range(format!(
                "line {}: pair ({db},{q}) outside {db_count}x{q_count}",
                n + 1
            )));
        }
        if !s.is_finite() || !(-1.0..=1.0).contains(&s) {
            return Err(EprError::Validation(format!(
                "line {}: similarity {s} outside [-1, 1]",
                n + 1
            )));
        }
        columns[q].push((db, s));
    }

    let mut matrix = SparseSimilarityMatrix::new(db_count, q_count);
    for (q, mut entries) in columns.into_iter().enumerate() {
        entries.sort_by_key(|&(db, _)| db);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(EprError::Format(format!(
                "duplicate entry ({},{q})",
                w[0].0
            )));
        }
        matrix.set_column(q, SparseColumn::from_sorted(entries));
    }
    Ok(matrix)
}

/// One step of a synthetic route.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RouteEntry {
    Place(usize),
    /// A place that does not exist in the database.
    Explore,
}

impl fmt::Display for RouteEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteEntry::Place(p) => write!(f, "{p}"),
            RouteEntry::Explore => f.write_str("X"),
        }
    }
}

impl FromStr for RouteEntry {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "X" | "x" | "-1" => Ok(RouteEntry::Explore),
            t => t
                .parse::<usize>()
                .map(RouteEntry::Place)
                .map_err(|_| format!("invalid route token {t:?}")),
        }
    }
}

/// Parses a comma-separated route. Tokens are place indices, `X` (or `-1`)
/// for an exploration frame, or `a..b` for the places `a, a+1, ..., b-1`.
pub fn parse_route(s: &str) -> std::result::Result<Vec<RouteEntry>, String> {
    let mut route = Vec::new();
    for token in s.split(',').map(str::trim) {
        if let Some((lo, hi)) = token.split_once("..") {
            let bad = || format!("invalid route token {token:?}");
            let lo: usize = lo.parse().map_err(|_| bad())?;
            let hi: usize = hi.parse().map_err(|_| bad())?;
            if lo >= hi {
                return Err(bad());
            }
            route.extend((lo..hi).map(RouteEntry::Place));
        } else {
            route.push(token.parse()?);
        }
    }
    Ok(route)
}

/// Parameters of a synthetic trajectory dataset.
///
/// `db_route` may revisit places (loops) or repeat them consecutively
/// (stops). `query_route` may contain [`RouteEntry::Explore`] frames.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub num_places: usize,
    pub dim: usize,
    pub db_route: Vec<usize>,
    pub query_route: Vec<RouteEntry>,
    /// Standard deviation of the per-component Gaussian appearance noise.
    pub condition_noise_sigma: f64,
    pub rng_seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_places == 0 || self.dim == 0 {
            return Err(EprError::Validation(
                "num_places and dim must be >= 1".into(),
            ));
        }
        if self.db_route.is_empty() || self.query_route.is_empty() {
            return Err(EprError::Validation("routes must be nonempty".into()));
        }
        if let Some(&p) = self.db_route.iter().find(|&&p| p >= self.num_places) {
            return Err(EprError::Validation(format!(
                "database route place {p} >= num_places {}",
                self.num_places
            )));
        }
        for entry in &self.query_route {
            if let RouteEntry::Place(p) = *entry {
                if p >= self.num_places {
                    return Err(EprError::Validation(format!(
                        "query route place {p} >= num_places {}",
                        self.num_places
                    )));
                }
            }
        }
        if !(self.condition_noise_sigma.is_finite() && self.condition_noise_sigma >= 0.0) {
            return Err(EprError::Validation(format!(
                "condition_noise_sigma must be finite and >= 0, got {}",
                self.condition_noise_sigma
            )));
        }
        Ok(())
    }
}

/// Generates database and query descriptors plus ground truth.
///
/// Each place gets a latent unit vector drawn uniformly on the sphere. A
/// frame at place `p` is `normalize(L_p + eps)` with `eps ~ N(0, sigma^2 I)`,
/// rounded to `f32` precision. Exploration frames draw a fresh latent vector
/// each. Hard matches are same-place pairs; soft matches additionally
/// include database frames adjacent (one step along the database route) to
/// a frame of the query's place.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(DescriptorSet, DescriptorSet, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let dim = spec.dim;

    let latents: Vec<Vec<f64>> = (0..spec.num_places)
        .map(|_| random_unit_vector(&mut rng, dim))
        .collect();

    let frame = |rng: &mut ChaCha8Rng, latent: &[f64]| -> Vec<f64> {
        let mut v: Vec<f64> = latent
            .iter()
            .map(|&l| {
                let e: f64 = StandardNormal.sample(rng);
                l + spec.condition_noise_sigma * e
            })
            .collect();
        normalize_to_f32_precision(&mut v);
        v
    };

    let mut db_data = Vec::with_capacity(spec.db_route.len() * dim);
    for &p in &spec.db_route {
        db_data.extend(frame(&mut rng, &latents[p]));
    }
    let mut q_data = Vec::with_capacity(spec.query_route.len() * dim);
    for entry in &spec.query_route {
        match *entry {
            RouteEntry::Place(p) => q_data.extend(frame(&mut rng, &latents[p])),
            RouteEntry::Explore => {
                let fresh = random_unit_vector(&mut rng, dim);
                q_data.extend(frame(&mut rng, &fresh));
            }
        }
    }

    let db = DescriptorSet::new(Role::Database, dim, db_data)?;
    let query = DescriptorSet::new(Role::Query, dim, q_data)?;
    db.validate()?;
    query.validate()?;

    let mut visits: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &p) in spec.db_route.iter().enumerate() {
        visits.entry(p).or_default().push(i);
    }
    let n_db = spec.db_route.len();
    let mut gt = GroundTruth::new(n_db, spec.query_route.len());
    for (t, entry) in spec.query_route.iter().enumerate() {
        let RouteEntry::Place(p) = *entry else {
            continue;
        };
        let Some(frames) = visits.get(&p) else {
            continue;
        };
        for &i in frames {
            gt.insert_hard(i, t)?;
            if i > 0 {
                gt.insert_soft(i - 1, t)?;
            }
            if i + 1 < n_db {
                gt.insert_soft(i + 1, t)?;
            }
        }
    }
    Ok((db, query, gt))
}

fn random_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn normalize_to_f32_precision(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = f64::from((*x / norm) as f32);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SyntheticSpec {
        SyntheticSpec {
            num_places: 3,
            dim: 8,
            db_route: vec![0, 1, 2],
            query_route: vec![
                RouteEntry::Place(0),
                RouteEntry::Place(1),
                RouteEntry::Place(2),
            ],
            condition_noise_sigma: 0.0,
            rng_seed: 7,
        }
    }

    #[test]
    fn minimal_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.eprd");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"EPRD");
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&0u16.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        for v in [1.0f32, 0.0, 0.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let set = load_descriptors(&path, Role::Database).unwrap();
        assert_eq!(set.count(), 1);
        assert_eq!(set.dim(), 3);
        assert_eq!(set.row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = b"XXXX".to_vec();
        bytes.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(
            decode_eprd(&bytes, Role::Query),
            Err(EprError::Format(_))
        ));
    }

    #[test]
    fn wrong_version_is_format_error() {
        let mut bytes = b"EPRD".to_vec();
        bytes.extend_from_slice(&[2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(
            decode_eprd(&bytes, Role::Query),
            Err(EprError::Format(_))
        ));
    }

    #[test]
    fn short_payload_is_truncation_error() {
        let mut bytes = b"EPRD".to_vec();
        bytes.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(
            decode_eprd(&bytes, Role::Query),
            Err(EprError::Truncated {
                expected: 4,
                actual: 1
            })
        ));
    }

    #[test]
    fn non_finite_payload_is_validation_error() {
        let mut bytes = b"EPRD".to_vec();
        bytes.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_eprd(&bytes, Role::Query),
            Err(EprError::Validation(_))
        ));
    }

    #[test]
    fn save_rejects_nan_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.eprd");
        let nan = DescriptorSet::new(Role::Database, 2, vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(
            save_descriptors(&nan, &path),
            Err(EprError::Validation(_))
        ));
        let empty = DescriptorSet::new(Role::Database, 2, vec![]).unwrap();
        assert!(matches!(
            save_descriptors(&empty, &path),
            Err(EprError::Validation(_))
        ));
    }

    #[test]
    fn save_to_missing_directory_is_io_error() {
        let set = DescriptorSet::new(Role::Database, 1, vec![1.0]).unwrap();
        let err = save_descriptors(&set, "/nonexistent-dir/x/y.eprd").unwrap_err();
        assert!(matches!(err, EprError::Io(_)));
    }

    #[test]
    fn ground_truth_closure_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.csv");
        std::fs::write(&path, "# comment\n0,0,hard\n1,0,soft\n").unwrap();
        let gt = load_ground_truth(&path, 10, 1).unwrap();
        assert_eq!(gt.hard().iter().copied().collect::<Vec<_>>(), vec![(0, 0)]);
        assert_eq!(
            gt.soft().iter().copied().collect::<Vec<_>>(),
            vec![(0, 0), (1, 0)]
        );

        std::fs::write(&path, "").unwrap();
        let gt = load_ground_truth(&path, 10, 1).unwrap();
        assert!(gt.hard().is_empty() && gt.soft().is_empty());

        std::fs::write(&path, "99,0,hard\n").unwrap();
        assert!(matches!(
            load_ground_truth(&path, 10, 1),
            Err(EprError::Range(_))
        ));

        std::fs::write(&path, "0,0,maybe\n").unwrap();
        assert!(matches!(
            load_ground_truth(&path, 10, 1),
            Err(EprError::Format(_))
        ));
    }

    #[test]
    fn route_parsing() {
        assert_eq!(
            parse_route("X,x,-1,3").unwrap(),
            vec![
                RouteEntry::Explore,
                RouteEntry::Explore,
                RouteEntry::Explore,
                RouteEntry::Place(3)
            ]
        );
        assert_eq!(parse_route("2..5").unwrap().len(), 3);
        let err = parse_route("0,1,banana").unwrap_err();
        assert!(err.contains("banana"));
        assert!(parse_route("5..5").is_err());
    }

    #[test]
    fn zero_noise_gives_identical_db_and_query() {
        let (db, q, gt) = generate_synthetic(&tiny_spec()).unwrap();
        assert_eq!(db.as_slice(), q.as_slice());
        let hard: Vec<_> = gt.hard().iter().copied().collect();
        assert_eq!(hard, vec![(0, 0), (1, 1), (2, 2)]);
        // adjacency: place 1 sits next to db frames 0 and 2
        assert!(gt.is_soft(0, 1) && gt.is_soft(2, 1) && !gt.is_hard(0, 1));
    }

    #[test]
    fn loop_duplicates_hard_matches() {
        let spec = SyntheticSpec {
            db_route: vec![0, 1, 2, 0, 1],
            query_route: vec![RouteEntry::Place(2), RouteEntry::Place(0)],
            ..tiny_spec()
        };
        let (db, _, gt) = generate_synthetic(&spec).unwrap();
        assert_eq!(db.count(), 5);
        assert!(gt.is_hard(0, 1) && gt.is_hard(3, 1));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            condition_noise_sigma: 0.1,
            query_route: vec![RouteEntry::Explore, RouteEntry::Place(1)],
            ..tiny_spec()
        };
        assert_eq!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&spec).unwrap()
        );
        let other = SyntheticSpec {
            rng_seed: 8,
            ..spec.clone()
        };
        assert_ne!(
            generate_synthetic(&spec).unwrap().0,
            generate_synthetic(&other).unwrap().0
        );
    }

    #[test]
    fn explore_frames_have_no_ground_truth() {
        let spec = SyntheticSpec {
            query_route: vec![RouteEntry::Explore, RouteEntry::Place(0)],
            ..tiny_spec()
        };
        let (_, _, gt) = generate_synthetic(&spec).unwrap();
        assert!(gt.soft().iter().all(|&(_, t)| t == 1));
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = SyntheticSpec {
            db_route: vec![0, 3],
            ..tiny_spec()
        };
        assert!(matches!(
            generate_synthetic(&spec),
            Err(EprError::Validation(_))
        ));
        let spec = SyntheticSpec {
            condition_noise_sigma: -1.0,
            ..tiny_spec()
        };
        assert!(generate_synthetic(&spec).is_err());
    }
}
