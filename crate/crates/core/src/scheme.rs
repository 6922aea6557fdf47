//! The multi-colour allocation scheme: `K` independent conditional rows over
//! the same `N` boxes, and occupancy counts over the resulting matrix.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::power_series::{PowerSeriesFamily, DEFAULT_INVERSE_TOL};
use crate::sampler::{RowSampler, SamplerStrategy};

/// One colour: its family, ball count and optional `θ` override.
#[derive(Debug, Clone)]
pub struct ColourSpec {
    pub family: PowerSeriesFamily,
    pub n: u64,
    pub theta: Option<f64>,
}

impl ColourSpec {
    pub fn new(family: PowerSeriesFamily, n: u64) -> Self {
        ColourSpec {
            family,
            n,
            theta: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub colours: Vec<ColourSpec>,
    pub boxes: usize,
}

impl SchemeConfig {
    pub fn new(colours: Vec<ColourSpec>, boxes: usize) -> Result<Self> {
        let config = SchemeConfig { colours, boxes };
        config.validate()?;
        Ok(config)
    }

    /// Single colour shorthand.
    pub fn single(family: PowerSeriesFamily, boxes: usize, n: u64) -> Result<Self> {
        Self::new(vec![ColourSpec::new(family, n)], boxes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.colours.is_empty() {
            return Err(Error::Precondition("at least one colour is required".to_string()));
        }
        if self.boxes == 0 {
            return Err(Error::Precondition("at least one box is required".to_string()));
        }
        for (i, c) in self.colours.iter().enumerate() {
            if let Some(t) = c.theta {
                if !(t > 0.0 && t < c.family.radius()) {
                    return Err(Error::Domain {
                        theta: t,
                        radius: c.family.radius(),
                    }
                    .in_colour(i));
                }
            }
            if let Some(sb) = c.family.support_bound() {
                if c.n as u128 > sb as u128 * self.boxes as u128 {
                    return Err(Error::Infeasible {
                        boxes: self.boxes,
                        n: c.n as usize,
                    }
                    .in_colour(i));
                }
            }
        }
        Ok(())
    }

    pub fn colours(&self) -> usize {
        self.colours.len()
    }

    /// `α_i = n_i / N`.
    pub fn alpha(&self) -> Vec<f64> {
        self.colours.iter().map(|c| c.n as f64 / self.boxes as f64).collect()
    }

    pub fn ball_counts(&self) -> Vec<u64> {
        self.colours.iter().map(|c| c.n).collect()
    }

    /// Fitted `θ_i = m_i⁻¹(α_i)`, ignoring overrides.
    pub fn fitted_thetas(&self) -> Result<Vec<f64>> {
        self.alpha()
            .iter()
            .zip(&self.colours)
            .enumerate()
            .map(|(i, (&a, c))| {
                c.family
                    .mean_inverse(a, DEFAULT_INVERSE_TOL)
                    .map(|t| t.get())
                    .map_err(|e| e.in_colour(i))
            })
            .collect()
    }

    /// The same scheme with every `θ_i` set to its fitted value.
    pub fn fit_thetas(&self) -> Result<SchemeConfig> {
        let thetas = self.fitted_thetas()?;
        let mut out = self.clone();
        for (c, t) in out.colours.iter_mut().zip(thetas) {
            c.theta = Some(t);
        }
        Ok(out)
    }

    /// `θ_i` in use: the override when present, else the fitted value.
    pub fn effective_thetas(&self) -> Result<Vec<f64>> {
        let alpha = self.alpha();
        self.colours
            .iter()
            .enumerate()
            .map(|(i, c)| match c.theta {
                Some(t) => Ok(t),
                None => c
                    .family
                    .mean_inverse(alpha[i], DEFAULT_INVERSE_TOL)
                    .map(|t| t.get())
                    .map_err(|e| e.in_colour(i)),
            })
            .collect()
    }
}

/// Box contents `η_{ij}`, stored row-major (`K` rows of `N`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationMatrix {
    colours: usize,
    boxes: usize,
    eta: Vec<u64>,
}

impl AllocationMatrix {
    pub fn zeros(colours: usize, boxes: usize) -> Self {
        AllocationMatrix {
            colours,
            boxes,
            eta: vec![0; colours * boxes],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let colours = rows.len();
        let boxes = rows.first().map_or(0, Vec::len);
        if colours == 0 || boxes == 0 || rows.iter().any(|r| r.len() != boxes) {
            return Err(Error::Precondition("rows must be non-empty and of equal length".to_string()));
        }
        Ok(AllocationMatrix {
            colours,
            boxes,
            eta: rows.concat(),
        })
    }

    pub fn colours(&self) -> usize {
        self.colours
    }

    pub fn boxes(&self) -> usize {
        self.boxes
    }

    pub fn row(&self, colour: usize) -> &[u64] {
        &self.eta[colour * self.boxes..(colour + 1) * self.boxes]
    }

    fn row_mut(&mut self, colour: usize) -> &mut [u64] {
        &mut self.eta[colour * self.boxes..(colour + 1) * self.boxes]
    }

    pub fn get(&self, colour: usize, j: usize) -> u64 {
        self.eta[colour * self.boxes + j]
    }

    /// Colour-content vector of box `j`.
    pub fn column(&self, j: usize) -> Vec<u64> {
        (0..self.colours).map(|i| self.get(i, j)).collect()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.colours).map(|i| self.row(i).iter().sum()).collect()
    }

    /// `Σ_i η_{ij}` for every box.
    pub fn column_totals(&self) -> Vec<u64> {
        let mut totals = self.row(0).to_vec();
        for i in 1..self.colours {
            for (t, &x) in totals.iter_mut().zip(self.row(i)) {
                *t += x;
            }
        }
        totals
    }
}

/// The occupancy statistic to count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OccupancyTarget {
    /// Boxes whose content vector equals `s` exactly.
    Vector(Vec<u64>),
    /// Boxes holding `s` balls in total, of any colour.
    Total(u64),
}

impl OccupancyTarget {
    pub fn count(&self, matrix: &AllocationMatrix) -> Result<u64> {
        match self {
            OccupancyTarget::Vector(s) => count_occupancy_vector(matrix, s),
            OccupancyTarget::Total(s) => Ok(count_occupancy_total(matrix, *s)),
        }
    }

    /// Entries as a list (a single entry for the colour-blind form).
    pub fn values(&self) -> Vec<u64> {
        match self {
            OccupancyTarget::Vector(s) => s.clone(),
            OccupancyTarget::Total(s) => vec![*s],
        }
    }
}

/// `μ = #{j : η_{·j} = s}`.
pub fn count_occupancy_vector(matrix: &AllocationMatrix, s: &[u64]) -> Result<u64> {
    if s.len() != matrix.colours {
        return Err(Error::Precondition(format!(
            "target has {} entries for {} colours",
            s.len(),
            matrix.colours
        )));
    }
    let mut hit = vec![true; matrix.boxes];
    for (i, &si) in s.iter().enumerate() {
        for (h, &x) in hit.iter_mut().zip(matrix.row(i)) {
            *h &= x == si;
        }
    }
    Ok(hit.iter().filter(|&&h| h).count() as u64)
}

/// `#{j : Σ_i η_{ij} = s}`.
pub fn count_occupancy_total(matrix: &AllocationMatrix, s: u64) -> u64 {
    matrix.column_totals().iter().filter(|&&t| t == s).count() as u64
}

/// Number of boxes per distinct content vector, in one pass.
pub fn occupancy_histogram(matrix: &AllocationMatrix) -> BTreeMap<Vec<u64>, u64> {
    let mut hist = BTreeMap::new();
    for j in 0..matrix.boxes {
        *hist.entry(matrix.column(j)).or_insert(0) += 1;
    }
    hist
}

/// Prepared per-colour samplers for repeated draws of the whole matrix.
#[derive(Debug, Clone)]
pub struct SchemeSampler {
    rows: Vec<RowSampler>,
    boxes: usize,
}

impl SchemeSampler {
    pub fn new(config: &SchemeConfig, strategy: SamplerStrategy) -> Result<Self> {
        config.validate()?;
        let rows = config
            .colours
            .iter()
            .enumerate()
            .map(|(i, c)| {
                RowSampler::new(&c.family, c.theta, config.boxes, c.n, strategy).map_err(|e| e.in_colour(i))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SchemeSampler {
            rows,
            boxes: config.boxes,
        })
    }

    pub fn colours(&self) -> usize {
        self.rows.len()
    }

    pub fn boxes(&self) -> usize {
        self.boxes
    }

    /// Redraws every row of `matrix`, colour by colour from the same stream.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, matrix: &mut AllocationMatrix) -> Result<()> {
        if matrix.colours != self.rows.len() || matrix.boxes != self.boxes {
            return Err(Error::Precondition("matrix shape does not match the scheme".to_string()));
        }
        for (i, sampler) in self.rows.iter().enumerate() {
            sampler.fill(rng, matrix.row_mut(i)).map_err(|e| e.in_colour(i))?;
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AllocationMatrix> {
        let mut m = AllocationMatrix::zeros(self.rows.len(), self.boxes);
        self.fill(rng, &mut m)?;
        Ok(m)
    }
}

/// One draw of the scheme with the default sampler strategy.
pub fn sample_allocation<R: Rng + ?Sized>(config: &SchemeConfig, rng: &mut R) -> Result<AllocationMatrix> {
    SchemeSampler::new(config, SamplerStrategy::Auto)?.sample(rng)
}
