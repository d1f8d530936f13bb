//! The online matcher.
//!
//! For every query after the first, the candidate set is built from the K
//! best matches of the previous timestep, extended by their intra-database
//! neighbors (loops and stops) and by their `v` sequence successors. Only
//! those candidates are compared to the query. A relocalization (full
//! comparison against the database) runs on the first query and whenever
//! the strategy asks for it; otherwise the K best matches of the current
//! timestep contribute their intra-database neighbors as well.
//!
//! Timesteps are 0-based internally. The periodic schedule uses the 1-based
//! query number, so with `t_reloc = 100` the 100th, 200th, ... queries are
//! relocalized.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::autotune::{autotune, robust_fit_in_place, ThresholdModel, P_DB, P_RELOC};
use crate::dataset::DescriptorSet;
use crate::error::{EprError, Result};
use crate::similarity::{
    cosine_from_parts, dot, intra_db_matrix, intra_db_neighbors, k_argmax, squared_norms,
    IntraDbSimilarities,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Relocalize every `t_reloc` queries.
    Periodic { t_reloc: usize },
    /// Relocalize when no candidate reaches the relocalization threshold.
    EventBased,
    /// Compare every query to the whole database.
    FullBaseline,
    /// Periodic relocalization without intra-database expansion.
    NoSdb { t_reloc: usize },
}

impl Strategy {
    pub fn uses_intra_db(&self) -> bool {
        matches!(self, Strategy::Periodic { .. } | Strategy::EventBased)
    }

    /// Short name used on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Periodic { .. } => "pr",
            Strategy::EventBased => "er",
            Strategy::FullBaseline => "full",
            Strategy::NoSdb { .. } => "pr-no-sdb",
        }
    }

    /// Decision that does not depend on the current similarities, if any.
    fn scheduled(&self, timestep: usize) -> Option<bool> {
        match *self {
            Strategy::Periodic { t_reloc } | Strategy::NoSdb { t_reloc } => {
                Some(timestep.is_multiple_of(t_reloc))
            }
            Strategy::FullBaseline => Some(true),
            Strategy::EventBased => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EprConfig {
    /// Number of best matches carried over from the previous timestep.
    pub k: usize,
    /// Number of sequence successors added per candidate.
    pub v: usize,
    pub strategy: Strategy,
    pub p_db: f64,
    pub p_reloc: f64,
    pub standardize_db: bool,
}

impl Default for EprConfig {
    fn default() -> Self {
        Self {
            k: 5,
            v: 5,
            strategy: Strategy::Periodic { t_reloc: 100 },
            p_db: P_DB,
            p_reloc: P_RELOC,
            standardize_db: true,
        }
    }
}

impl EprConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(EprError::Validation("k must be >= 1".into()));
        }
        match self.strategy {
            Strategy::Periodic { t_reloc: 0 } | Strategy::NoSdb { t_reloc: 0 } => {
                return Err(EprError::Validation("t_reloc must be >= 1".into()));
            }
            _ => {}
        }
        for (name, p) in [("p_db", self.p_db), ("p_reloc", self.p_reloc)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(EprError::Validation(format!("{name} = {p} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Evaluated similarities of one query, sorted by database index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseColumn {
    entries: Vec<(usize, f64)>,
}

impl SparseColumn {
    /// `entries` must be sorted by index without duplicates.
    pub fn from_sorted(entries: Vec<(usize, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, db: usize) -> Option<f64> {
        self.entries
            .binary_search_by_key(&db, |&(i, _)| i)
            .ok()
            .map(|k| self.entries[k].1)
    }

    /// Highest similarity; ties go to the smaller index.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.entries
            .iter()
            .copied()
            .reduce(|best, e| if e.1 > best.1 { e } else { best })
    }
}

/// The |DB| x |Q| similarity matrix, holding values only for evaluated
/// pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSimilarityMatrix {
    db_count: usize,
    columns: Vec<SparseColumn>,
}

impl SparseSimilarityMatrix {
    pub fn new(db_count: usize, q_count: usize) -> Self {
        Self {
            db_count,
            columns: vec![SparseColumn::default(); q_count],
        }
    }

    pub fn db_count(&self) -> usize {
        self.db_count
    }

    pub fn q_count(&self) -> usize {
        self.columns.len()
    }

    pub fn set_column(&mut self, q: usize, column: SparseColumn) {
        self.columns[q] = column;
    }

    pub fn column(&self, q: usize) -> &SparseColumn {
        &self.columns[q]
    }

    pub fn columns(&self) -> &[SparseColumn] {
        &self.columns
    }

    pub fn get(&self, db: usize, q: usize) -> Option<f64> {
        self.columns[q].get(db)
    }

    pub fn entry_count(&self) -> usize {
        self.columns.iter().map(SparseColumn::len).sum()
    }

    /// Percentage of the full matrix that holds a value.
    pub fn density_pct(&self) -> f64 {
        let total = self.db_count * self.q_count();
        if total == 0 {
            0.0
        } else {
            100.0 * self.entry_count() as f64 / total as f64
        }
    }

    /// `(db_index, query_index, similarity)`, query-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(q, c)| c.entries.iter().map(move |&(db, s)| (db, q, s)))
    }
}

/// Relocalization decision for the query with 1-based number `timestep`,
/// given the similarities evaluated so far at that timestep.
pub fn relocalize_decision(
    strategy: &Strategy,
    timestep: usize,
    column: &SparseColumn,
    theta_reloc: f64,
) -> bool {
    strategy
        .scheduled(timestep)
        .unwrap_or_else(|| !column.entries.iter().any(|&(_, s)| s >= theta_reloc))
}

/// Database indices gathered for one timestep, with O(1) membership.
struct CandidateBuffer {
    order: Vec<usize>,
    stamp: Vec<u32>,
    generation: u32,
}

impl CandidateBuffer {
    fn new(db_count: usize) -> Self {
        Self {
            order: Vec::new(),
            stamp: vec![0; db_count],
            generation: 0,
        }
    }

    fn reset(&mut self) {
        self.order.clear();
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
    }

    /// Returns true if `i` was not yet present.
    fn insert(&mut self, i: usize) -> bool {
        if self.stamp[i] == self.generation {
            return false;
        }
        self.stamp[i] = self.generation;
        self.order.push(i);
        true
    }

    /// Adds the intra-database neighbors of every current member.
    fn expand_neighbors(&mut self, neighbors: &[Vec<usize>]) {
        let snapshot = self.order.len();
        for n in 0..snapshot {
            let c = self.order[n];
            for &j in &neighbors[c] {
                self.insert(j);
            }
        }
    }

    /// Adds `c+1, ..., c+v` (clipped to the database) for every current
    /// member.
    fn expand_sequence(&mut self, v: usize, db_count: usize) {
        let snapshot = self.order.len();
        for n in 0..snapshot {
            let c = self.order[n];
            for j in c + 1..=(c + v).min(db_count - 1) {
                self.insert(j);
            }
        }
    }
}

/// The online matcher for one database.
pub struct Engine<'a> {
    db: &'a DescriptorSet,
    config: EprConfig,
    db_sq_norms: Vec<f64>,
    sdb: Option<IntraDbSimilarities>,
    /// `neighbors[c]` = indices with S^DB >= theta_db against `c`.
    neighbors: Vec<Vec<usize>>,
    theta_db: Option<ThresholdModel>,
    theta_reloc: Option<ThresholdModel>,
    t: usize,
    prev_column: SparseColumn,
    reloc_events: Vec<usize>,
    candidates: CandidateBuffer,
    setup_duration: Duration,
}

impl<'a> Engine<'a> {
    /// Validates the inputs and, for strategies that use it, computes the
    /// intra-database similarities and tunes `theta_db` on their strict
    /// upper triangle.
    pub fn new(db: &'a DescriptorSet, config: EprConfig) -> Result<Self> {
        let start = Instant::now();
        config.validate()?;
        db.validate()?;
        let n = db.count();

        let (sdb, theta_db, neighbors) = if config.strategy.uses_intra_db() {
            let sdb = intra_db_matrix(db, config.standardize_db)?;
            let mut sample = sdb.upper_triangle();
            if sample.is_empty() {
                return Err(EprError::Domain(
                    "threshold tuning needs at least 2 database descriptors".into(),
                ));
            }
            let (mu, sigma) = robust_fit_in_place(&mut sample)?;
            drop(sample);
            let theta = ThresholdModel::from_fit(mu, sigma, config.p_db)?;
            let neighbors = (0..n)
                .map(|c| intra_db_neighbors(&sdb, c, theta.theta).into_vec())
                .collect();
            (Some(sdb), Some(theta), neighbors)
        } else {
            (None, None, vec![Vec::new(); n])
        };

        Ok(Self {
            db,
            config,
            db_sq_norms: squared_norms(db),
            sdb,
            neighbors,
            theta_db,
            theta_reloc: None,
            t: 0,
            prev_column: SparseColumn::default(),
            reloc_events: Vec::new(),
            candidates: CandidateBuffer::new(n),
            setup_duration: start.elapsed(),
        })
    }

    pub fn config(&self) -> &EprConfig {
        &self.config
    }

    pub fn intra_db(&self) -> Option<&IntraDbSimilarities> {
        self.sdb.as_ref()
    }

    pub fn theta_db(&self) -> Option<&ThresholdModel> {
        self.theta_db.as_ref()
    }

    pub fn theta_reloc(&self) -> Option<&ThresholdModel> {
        self.theta_reloc.as_ref()
    }

    /// Number of queries processed so far.
    pub fn timestep(&self) -> usize {
        self.t
    }

    pub fn prev_column(&self) -> &SparseColumn {
        &self.prev_column
    }

    /// 0-based timesteps at which a full comparison was made.
    pub fn reloc_events(&self) -> &[usize] {
        &self.reloc_events
    }

    /// Largest number of intra-database neighbors of any row, excluding
    /// the row itself.
    pub fn max_neighbor_count(&self) -> usize {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(c, n)| n.iter().filter(|&&j| j != c).count())
            .max()
            .unwrap_or(0)
    }

    pub fn setup_duration(&self) -> Duration {
        self.setup_duration
    }

    fn similarity(&self, db_index: usize, query: &[f64], query_sq_norm: f64) -> f64 {
        cosine_from_parts(
            dot(self.db.row(db_index), query),
            self.db_sq_norms[db_index],
            query_sq_norm,
        )
    }

    fn full_column(&self, query: &[f64], query_sq_norm: f64) -> SparseColumn {
        SparseColumn::from_sorted(
            (0..self.db.count())
                .map(|i| (i, self.similarity(i, query, query_sq_norm)))
                .collect(),
        )
    }

    fn check_query(&self, query: &[f64]) -> Result<f64> {
        if query.len() != self.db.dim() {
            return Err(EprError::Domain(format!(
                "query dimension {} does not match database dimension {}",
                query.len(),
                self.db.dim()
            )));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(EprError::Validation("query has non-finite values".into()));
        }
        let sq = dot(query, query);
        if sq == 0.0 {
            return Err(EprError::Validation("query has zero norm".into()));
        }
        Ok(sq)
    }

    /// Processes the next query and returns its evaluated similarities.
    pub fn process(&mut self, query: &[f64]) -> Result<SparseColumn> {
        let q_sq = self.check_query(query)?;
        let column = if self.t == 0 {
            self.process_first(query, q_sq)?
        } else {
            self.process_next(query, q_sq)
        };
        self.prev_column = column.clone();
        self.t += 1;
        Ok(column)
    }

    fn process_first(&mut self, query: &[f64], q_sq: f64) -> Result<SparseColumn> {
        let column = self.full_column(query, q_sq);
        let sims: Vec<f64> = column.entries.iter().map(|&(_, s)| s).collect();
        self.theta_reloc = Some(autotune(&sims, self.config.p_reloc)?);
        self.reloc_events.push(0);
        Ok(column)
    }

    fn process_next(&mut self, query: &[f64], q_sq: f64) -> SparseColumn {
        let timestep = self.t + 1;
        let n = self.db.count();
        let use_sdb = self.config.strategy.uses_intra_db();

        if self.config.strategy.scheduled(timestep) == Some(true) {
            // The decision does not depend on the candidates, so they need
            // not be evaluated first; the full column subsumes them.
            self.reloc_events.push(self.t);
            return self.full_column(query, q_sq);
        }

        let mut cands = std::mem::replace(&mut self.candidates, CandidateBuffer::new(0));
        cands.reset();
        for c in k_argmax(&self.prev_column.entries, self.config.k).iter() {
            cands.insert(c);
        }
        if use_sdb {
            cands.expand_neighbors(&self.neighbors);
        }
        cands.expand_sequence(self.config.v, n);

        let mut entries: Vec<(usize, f64)> = cands
            .order
            .iter()
            .map(|&c| (c, self.similarity(c, query, q_sq)))
            .collect();
        entries.sort_unstable_by_key(|&(i, _)| i);
        let column = SparseColumn::from_sorted(entries);

        let theta_reloc = self.theta_reloc.map_or(f64::INFINITY, |m| m.theta);
        let column = if relocalize_decision(&self.config.strategy, timestep, &column, theta_reloc) {
            self.reloc_events.push(self.t);
            self.full_column(query, q_sq)
        } else if use_sdb {
            let mut entries = column.entries;
            for c in k_argmax(&entries, self.config.k).iter() {
                for &j in &self.neighbors[c] {
                    if cands.insert(j) {
                        entries.push((j, self.similarity(j, query, q_sq)));
                    }
                }
            }
            entries.sort_unstable_by_key(|&(i, _)| i);
            SparseColumn::from_sorted(entries)
        } else {
            column
        };
        self.candidates = cands;
        column
    }
}

/// Summary of a complete run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub evaluated_pairs: usize,
    pub density_pct: f64,
    pub reloc_events: Vec<usize>,
    pub theta_db: Option<ThresholdModel>,
    pub theta_reloc: Option<ThresholdModel>,
    /// Intra-database similarities and threshold tuning.
    pub setup_seconds: f64,
    pub query_loop_seconds: f64,
    pub total_seconds: f64,
}

/// Processes every query in order and collects the sparse matrix.
pub fn run(
    db: &DescriptorSet,
    query: &DescriptorSet,
    config: EprConfig,
) -> Result<(SparseSimilarityMatrix, RunReport)> {
    let start = Instant::now();
    if db.dim() != query.dim() {
        return Err(EprError::Domain(format!(
            "database dimension {} does not match query dimension {}",
            db.dim(),
            query.dim()
        )));
    }
    query.validate()?;
    let mut engine = Engine::new(db, config)?;
    let loop_start = Instant::now();
    let mut matrix = SparseSimilarityMatrix::new(db.count(), query.count());
    for (t, q) in query.rows().enumerate() {
        let column = engine.process(q)?;
        matrix.set_column(t, column);
    }
    let query_loop_seconds = loop_start.elapsed().as_secs_f64();

    let report = RunReport {
        evaluated_pairs: matrix.entry_count(),
        density_pct: matrix.density_pct(),
        reloc_events: engine.reloc_events().to_vec(),
        theta_db: engine.theta_db().copied(),
        theta_reloc: engine.theta_reloc().copied(),
        setup_seconds: engine.setup_duration().as_secs_f64(),
        query_loop_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((matrix, report))
}
