//! Seeded Monte-Carlo scans of parameter disks.
//!
//! Sample `i` of radius `j` is drawn from its own ChaCha8 stream, keyed by the
//! seed and selected by `(j, i)`, so the sample set does not depend on thread
//! scheduling. Every sample orbit is computed once at the largest budget and
//! truncated for the smaller ones, which matches a fresh run at that budget
//! because the orbit stops at its first escape or cycle suspicion.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{classify_record, ParamTag};
use crate::motion::sample_disk;
use crate::orbit::{singular_orbit, EscapePolicy, OrbitRecord, OrbitStatus, Param, DEFAULT_RE_THRESHOLD};
use crate::Complex;

/// `delta` used by [`escaping_density`], where only the escape count matters.
pub const ESCAPE_SCAN_DELTA: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid scan input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DensityCell {
    pub n_attracting: usize,
    pub n_escaping: usize,
    pub n_candidate: usize,
    pub n_undecided: usize,
    /// Samples with an orbit point (index >= 1) in the hit annulus.
    pub n_hit_annulus: usize,
    /// Samples whose orbit avoids `D(0, delta)` within budget, whatever
    /// their class (escaping orbits included).
    pub n_delta_nonrecurrent: usize,
}

impl DensityCell {
    pub fn total(&self) -> usize {
        self.n_attracting + self.n_escaping + self.n_candidate + self.n_undecided
    }

    pub fn candidate_fraction(&self) -> f64 {
        self.n_candidate as f64 / self.total() as f64
    }

    pub fn escaping_fraction(&self) -> f64 {
        self.n_escaping as f64 / self.total() as f64
    }

    fn add(&mut self, o: &SampleOutcome) {
        match o.tag {
            Tag::Attracting => self.n_attracting += 1,
            Tag::Escaping => self.n_escaping += 1,
            Tag::Candidate => self.n_candidate += 1,
            Tag::Undecided => self.n_undecided += 1,
        }
        self.n_hit_annulus += o.hit as usize;
        self.n_delta_nonrecurrent += o.holds as usize;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
}

impl Annulus {
    pub fn contains(&self, z: Complex) -> bool {
        let m = z.norm();
        self.inner <= m && m <= self.outer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub lambda0: Param,
    pub delta: f64,
    pub radii: Vec<f64>,
    pub budgets: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub re_threshold: f64,
    /// `cells[radius][budget]`.
    pub cells: Vec<Vec<DensityCell>>,
    /// `A(delta/4, delta)`.
    pub annulus: Annulus,
    /// `A(delta/2, 3 delta/4)`, the region counted by `n_hit_annulus`.
    pub hit_annulus: Annulus,
}

impl DensityReport {
    /// Candidate fractions, one row per radius.
    pub fn candidate_fractions(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(DensityCell::candidate_fraction).collect())
            .collect()
    }

    /// True when the candidate fraction never increases with the budget.
    pub fn is_budget_monotone(&self) -> bool {
        self.cells
            .iter()
            .all(|row| row.windows(2).all(|w| w[1].n_candidate <= w[0].n_candidate))
    }

    /// Matrix of candidate fractions: rows are radii, columns budgets.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "radius")?;
        for b in &self.budgets {
            write!(w, ",{b}")?;
        }
        writeln!(w)?;
        for (r, row) in self.radii.iter().zip(&self.cells) {
            write!(w, "{r:e}")?;
            for cell in row {
                write!(w, ",{}", cell.candidate_fraction())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Tag {
    Attracting,
    Escaping,
    Candidate,
    Undecided,
}

struct SampleOutcome {
    tag: Tag,
    hit: bool,
    holds: bool,
}

/// The record a run with `max_iter = budget` would have produced.
fn truncate(record: &OrbitRecord, budget: usize) -> OrbitRecord {
    let mut out = record.clone();
    out.policy.max_iter = budget;
    if record.last_index() > budget {
        out.points.truncate(budget + 1);
        out.status = OrbitStatus::Completed;
    }
    out
}

fn outcomes(lambda: Param, delta: f64, budgets: &[usize], re_threshold: f64, hit: Annulus) -> Vec<SampleOutcome> {
    let max_budget = *budgets.last().expect("non-empty budgets");
    let policy = EscapePolicy::new(re_threshold, max_budget).expect("validated policy");
    let full = singular_orbit(lambda, &policy);
    budgets
        .iter()
        .map(|&b| {
            let rec = truncate(&full, b);
            let cls = classify_record(&rec, delta).expect("validated delta");
            let tag = match cls.tag {
                ParamTag::Attracting { .. } => Tag::Attracting,
                ParamTag::Escaping { .. } => Tag::Escaping,
                ParamTag::NonRecurrentCandidate { .. } => Tag::Candidate,
                ParamTag::Undecided => Tag::Undecided,
            };
            let hit = rec.values().skip(1).any(|z| hit.contains(z));
            let holds = rec.values().skip(1).all(|z| z.norm() >= delta);
            SampleOutcome { tag, hit, holds }
        })
        .collect()
}

/// Sample `index` for radius number `radius_index`.
pub fn sample_point(lambda0: Param, r: f64, seed: u64, radius_index: usize, index: usize) -> Complex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((radius_index as u64) << 40) | index as u64);
    sample_disk(&mut rng, lambda0.value(), r)
}

fn hit_annulus(delta: f64) -> Annulus {
    Annulus {
        inner: delta / 2.0,
        outer: 0.75 * delta,
    }
}

/// Classification counts for explicit parameters, one cell per budget.
pub fn tally(points: &[Param], delta: f64, budgets: &[usize], re_threshold: f64) -> Vec<DensityCell> {
    let per_sample: Vec<Vec<SampleOutcome>> = points
        .par_iter()
        .map(|&l| outcomes(l, delta, budgets, re_threshold, hit_annulus(delta)))
        .collect();
    let mut cells = vec![DensityCell::default(); budgets.len()];
    for sample in &per_sample {
        for (cell, o) in cells.iter_mut().zip(sample) {
            cell.add(o);
        }
    }
    cells
}

fn validate(delta: f64, radii: &[f64], budgets: &[usize], samples: usize) -> Result<(), MeasureError> {
    let bad = |m: &str| Err(MeasureError::InvalidInput(m.into()));
    if !(delta > 0.0) {
        return bad("delta must be positive");
    }
    if samples == 0 {
        return bad("samples must be at least 1");
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return bad("radii must be positive and finite");
    }
    if radii.windows(2).any(|w| w[1] > w[0]) {
        return bad("radii must be descending");
    }
    if budgets.is_empty() || budgets[0] == 0 || budgets.windows(2).any(|w| w[1] < w[0]) {
        return bad("budgets must be positive and ascending");
    }
    Ok(())
}

fn scan(
    lambda0: Param,
    delta: f64,
    radii: &[f64],
    budgets: &[usize],
    samples: usize,
    seed: u64,
    re_threshold: f64,
) -> Result<DensityReport, MeasureError> {
    validate(delta, radii, budgets, samples)?;
    let cells = radii
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            // a sample landing exactly on 0 is counted as undecided
            let points: Vec<Option<Param>> = (0..samples)
                .map(|i| Param::new(sample_point(lambda0, r, seed, j, i)).ok())
                .collect();
            let valid: Vec<Param> = points.iter().flatten().copied().collect();
            let mut row = tally(&valid, delta, budgets, re_threshold);
            for cell in &mut row {
                cell.n_undecided += samples - valid.len();
            }
            row
        })
        .collect();
    Ok(DensityReport {
        lambda0,
        delta,
        radii: radii.to_vec(),
        budgets: budgets.to_vec(),
        samples,
        seed,
        re_threshold,
        cells,
        annulus: Annulus {
            inner: delta / 4.0,
            outer: delta,
        },
        hit_annulus: hit_annulus(delta),
    })
}

/// Density of the classes in `D(lambda0, r)` for each radius and budget.
pub fn density_scan(
    lambda0: Param,
    delta: f64,
    radii: &[f64],
    budgets: &[usize],
    samples: usize,
    seed: u64,
) -> Result<DensityReport, MeasureError> {
    scan(lambda0, delta, radii, budgets, samples, seed, DEFAULT_RE_THRESHOLD)
}

/// Escaping fraction per radius at the policy's budget and threshold.
pub fn escaping_density(
    lambda0: Param,
    radii: &[f64],
    samples: usize,
    policy: &EscapePolicy,
    seed: u64,
) -> Result<DensityReport, MeasureError> {
    scan(
        lambda0,
        ESCAPE_SCAN_DELTA,
        radii,
        &[policy.max_iter],
        samples,
        seed,
        policy.re_threshold,
    )
}
