//! Pairwise binary (Ising) models over `±1` spins: graph topologies, random
//! coupling assignment, exact enumeration for small models, and a Gibbs
//! sampler.
//!
//! A model is parameterized by per-node fields `h_r` and symmetric pairwise
//! couplings `w_rt`, with `P(x) ∝ exp(Σ_r h_r x_r + Σ_{(r,t)} w_rt x_r x_t)`.
//! The edge set of the model is exactly the set of pairs with a nonzero
//! coupling, and the single-site conditional is logistic:
//! `P(x_r = +1 | x_rest) = σ(2 a_r)` with `a_r = h_r + Σ_t w_rt x_t`.
//!
//! Note the factor two: the conditional logistic losses in [`crate::losses`]
//! parameterize the same conditional as `σ(m)` with margin
//! `m = x_r (c_r + Σ c_rt x_t)`, so the population minimizer of a node loss
//! has coefficients equal to twice the model couplings. Support recovery is
//! unaffected; [`IsingModel::node_loss_target`] exposes the mapping.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::losses::sigmoid;
use crate::structure::EdgeSet;

/// Largest node count for which exact state enumeration is allowed.
pub const MAX_EXACT_NODES: usize = 15;

#[derive(Debug, Error)]
pub enum IsingError {
    #[error("graph requires at least {min} nodes, got {p}")]
    TooFewNodes { p: usize, min: usize },
    #[error("grid graph requires a perfect square node count, got {0}")]
    NotPerfectSquare(usize),
    #[error("hub degree {hub_degree} out of range 1..={max} for {p} nodes")]
    DegreeOutOfRange {
        p: usize,
        hub_degree: usize,
        max: usize,
    },
    #[error("exact enumeration limited to {MAX_EXACT_NODES} nodes, got {0}")]
    TooLarge(usize),
    #[error("coupling magnitude must be positive, got {0}")]
    NonPositiveMagnitude(f64),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node index {index} out of range for {p} nodes")]
    NodeOutOfRange { index: usize, p: usize },
    #[error("sample entry at row {row}, column {col} is {value}; entries must be -1 or +1")]
    NonBinaryData { row: usize, col: usize, value: i64 },
    #[error("sampler settings invalid: {0}")]
    InvalidSettings(String),
    #[error("empty sample matrix")]
    EmptySample,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Derives an independent 64-bit seed from a base seed and a stream index.
///
/// This is the stream-splitting rule used throughout the crate: a batch of
/// trials shares one base seed, and trial `i` draws its randomness from
/// `derive_seed(base, i)`. SplitMix64 over `base ^ (stream * golden ratio)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Edge structure of a graph before couplings are assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSkeleton {
    p: usize,
    edges: Vec<(usize, usize)>,
}

impl GraphSkeleton {
    fn new(p: usize, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        GraphSkeleton { p, edges }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Canonical `(min, max)` pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree_sequence(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.p];
        for &(r, t) in &self.edges {
            deg[r] += 1;
            deg[t] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degree_sequence().into_iter().max().unwrap_or(0)
    }
}

/// Path graph: node `i` joined to `i + 1`.
pub fn make_chain(p: usize) -> Result<GraphSkeleton, IsingError> {
    if p < 2 {
        return Err(IsingError::TooFewNodes { p, min: 2 });
    }
    let edges = (0..p - 1).map(|i| (i, i + 1)).collect();
    Ok(GraphSkeleton::new(p, edges))
}

/// Four-nearest-neighbor lattice on a `√p × √p` grid.
pub fn make_grid4(p: usize) -> Result<GraphSkeleton, IsingError> {
    if p < 4 {
        return Err(IsingError::TooFewNodes { p, min: 4 });
    }
    let side = (p as f64).sqrt().round() as usize;
    if side * side != p {
        return Err(IsingError::NotPerfectSquare(p));
    }
    let at = |row: usize, col: usize| row * side + col;
    let mut edges = Vec::with_capacity(2 * side * (side - 1));
    for row in 0..side {
        for col in 0..side {
            if col + 1 < side {
                edges.push((at(row, col), at(row, col + 1)));
            }
            if row + 1 < side {
                edges.push((at(row, col), at(row + 1, col)));
            }
        }
    }
    Ok(GraphSkeleton::new(p, edges))
}

/// Hub node 0 joined to nodes `1..=hub_degree`; remaining nodes isolated.
pub fn make_star(p: usize, hub_degree: usize) -> Result<GraphSkeleton, IsingError> {
    if p < 2 {
        return Err(IsingError::TooFewNodes { p, min: 2 });
    }
    if hub_degree < 1 || hub_degree > p - 1 {
        return Err(IsingError::DegreeOutOfRange {
            p,
            hub_degree,
            max: p - 1,
        });
    }
    let edges = (1..=hub_degree).map(|t| (0, t)).collect();
    Ok(GraphSkeleton::new(p, edges))
}

/// Assigns each skeleton edge a coupling of `+magnitude` or `-magnitude`
/// with equal probability, drawing signs in canonical edge order from the
/// seeded generator. Node fields are set to zero.
pub fn assign_couplings(
    skeleton: &GraphSkeleton,
    magnitude: f64,
    seed: u64,
) -> Result<IsingModel, IsingError> {
    if magnitude <= 0.0 {
        return Err(IsingError::NonPositiveMagnitude(magnitude));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut couplings = BTreeMap::new();
    for &(r, t) in skeleton.edges() {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        couplings.insert((r, t), sign * magnitude);
    }
    IsingModel::new(skeleton.p(), vec![0.0; skeleton.p()], couplings)
}

/// An Ising model: node fields plus symmetric pairwise couplings. The edge
/// set is the set of pairs with a nonzero coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    p: usize,
    node_fields: Vec<f64>,
    couplings: BTreeMap<(usize, usize), f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl IsingModel {
    /// Couplings are given over unordered pairs; keys are canonicalized to
    /// `(min, max)`, self-loops are rejected, and exact zeros are dropped so
    /// that the stored pairs coincide with the edge set.
    pub fn new(
        p: usize,
        node_fields: Vec<f64>,
        couplings: BTreeMap<(usize, usize), f64>,
    ) -> Result<Self, IsingError> {
        assert_eq!(node_fields.len(), p, "field vector length must equal p");
        let mut canonical = BTreeMap::new();
        for ((r, t), w) in couplings {
            if r == t {
                return Err(IsingError::SelfLoop(r));
            }
            let (a, b) = (r.min(t), r.max(t));
            if b >= p {
                return Err(IsingError::NodeOutOfRange { index: b, p });
            }
            if w != 0.0 {
                canonical.insert((a, b), w);
            }
        }
        let mut adjacency = vec![Vec::new(); p];
        for (&(r, t), &w) in &canonical {
            adjacency[r].push((t, w));
            adjacency[t].push((r, w));
        }
        Ok(IsingModel {
            p,
            node_fields,
            couplings: canonical,
            adjacency,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn node_fields(&self) -> &[f64] {
        &self.node_fields
    }

    /// Coupling on the unordered pair `{r, t}`; zero when no edge.
    pub fn coupling(&self, r: usize, t: usize) -> f64 {
        let key = (r.min(t), r.max(t));
        self.couplings.get(&key).copied().unwrap_or(0.0)
    }

    /// Neighbors of `r` with their couplings.
    pub fn neighbors(&self, r: usize) -> &[(usize, f64)] {
        &self.adjacency[r]
    }

    pub fn edge_set(&self) -> EdgeSet {
        EdgeSet::from_edges(self.p, self.couplings.keys().copied())
            .expect("stored couplings are canonical")
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Conditional probability that spin `r` is `+1` given the other spins.
    pub fn conditional_plus(&self, r: usize, state: &[i8]) -> f64 {
        let mut a = self.node_fields[r];
        for &(t, w) in &self.adjacency[r] {
            a += w * state[t] as f64;
        }
        sigmoid(2.0 * a)
    }

    /// Coefficients of the population minimizer of the node-conditional
    /// logistic loss at node `r`: twice the couplings (and twice the node
    /// field for the intercept coordinate), laid out as the loss lays out
    /// its parameters.
    pub fn node_loss_target(&self, r: usize, include_intercept: bool) -> Vec<f64> {
        let mut coeffs = Vec::with_capacity(self.p - 1 + include_intercept as usize);
        for t in (0..self.p).filter(|&t| t != r) {
            coeffs.push(2.0 * self.coupling(r, t));
        }
        if include_intercept {
            coeffs.push(2.0 * self.node_fields[r]);
        }
        coeffs
    }

    /// Full probability table over the `2^p` spin configurations. State `s`
    /// assigns spin `+1` to node `i` when bit `i` of `s` is set.
    pub fn exact_distribution(&self) -> Result<Vec<f64>, IsingError> {
        if self.p > MAX_EXACT_NODES {
            return Err(IsingError::TooLarge(self.p));
        }
        let states = 1usize << self.p;
        let mut energy = vec![0.0f64; states];
        for (s, e) in energy.iter_mut().enumerate() {
            let spin = |i: usize| if (s >> i) & 1 == 1 { 1.0 } else { -1.0 };
            let mut val = 0.0;
            for r in 0..self.p {
                val += self.node_fields[r] * spin(r);
            }
            for (&(r, t), &w) in &self.couplings {
                val += w * spin(r) * spin(t);
            }
            *e = val;
        }
        let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = energy.iter().map(|e| (e - max).exp()).collect();
        let z: f64 = probs.iter().sum();
        for prob in &mut probs {
            *prob /= z;
        }
        Ok(probs)
    }

    /// Exact pairwise moment `E[x_r x_t]` from the enumerated distribution.
    pub fn exact_pair_moment(&self, r: usize, t: usize) -> Result<f64, IsingError> {
        let probs = self.exact_distribution()?;
        let mut m = 0.0;
        for (s, prob) in probs.iter().enumerate() {
            let xr = if (s >> r) & 1 == 1 { 1.0 } else { -1.0 };
            let xt = if (s >> t) & 1 == 1 { 1.0 } else { -1.0 };
            m += prob * xr * xt;
        }
        Ok(m)
    }
}

/// Gibbs sampler settings. Burn-in sweeps run before the first recorded
/// sample; one sample is then recorded every `thin_sweeps` full sweeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GibbsSettings {
    pub burn_in_sweeps: usize,
    pub thin_sweeps: usize,
    pub seed: u64,
}

impl Default for GibbsSettings {
    fn default() -> Self {
        GibbsSettings {
            burn_in_sweeps: 200,
            thin_sweeps: 10,
            seed: 0,
        }
    }
}

impl GibbsSettings {
    pub fn with_seed(seed: u64) -> Self {
        GibbsSettings {
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), IsingError> {
        if self.thin_sweeps < 1 {
            return Err(IsingError::InvalidSettings(
                "thin_sweeps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Draws `n` samples by systematic-scan Gibbs sampling from a uniform random
/// initial state. Deterministic given the settings seed.
pub fn gibbs_sample(
    model: &IsingModel,
    n: usize,
    settings: &GibbsSettings,
) -> Result<SampleMatrix, IsingError> {
    settings.validate()?;
    if n < 1 {
        return Err(IsingError::InvalidSettings(
            "sample count must be at least 1".into(),
        ));
    }
    let p = model.p();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut state: Vec<i8> = (0..p)
        .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
        .collect();
    let sweep = |state: &mut Vec<i8>, rng: &mut ChaCha8Rng| {
        for r in 0..p {
            let p_plus = model.conditional_plus(r, state);
            state[r] = if rng.random::<f64>() < p_plus { 1 } else { -1 };
        }
    };
    for _ in 0..settings.burn_in_sweeps {
        sweep(&mut state, &mut rng);
    }
    let mut data = Array2::<i8>::zeros((n, p));
    for i in 0..n {
        for _ in 0..settings.thin_sweeps {
            sweep(&mut state, &mut rng);
        }
        for (r, &s) in state.iter().enumerate() {
            data[[i, r]] = s;
        }
    }
    Ok(SampleMatrix {
        data,
        provenance: Some(Provenance {
            graph: None,
            magnitude: None,
            seed: settings.seed,
            burn_in_sweeps: settings.burn_in_sweeps,
            thin_sweeps: settings.thin_sweeps,
        }),
    })
}

/// Where a sample matrix came from: generator seed and sampler settings,
/// plus optional model description filled in by callers.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub graph: Option<String>,
    pub magnitude: Option<f64>,
    pub seed: u64,
    pub burn_in_sweeps: usize,
    pub thin_sweeps: usize,
}

/// An `n × p` matrix of `±1` observations, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Array2<i8>,
    provenance: Option<Provenance>,
}

impl SampleMatrix {
    /// Validates that every entry is `-1` or `+1`.
    pub fn from_entries(data: Array2<i8>) -> Result<Self, IsingError> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(IsingError::EmptySample);
        }
        for ((row, col), &value) in data.indexed_iter() {
            if value != 1 && value != -1 {
                return Err(IsingError::NonBinaryData {
                    row,
                    col,
                    value: value as i64,
                });
            }
        }
        Ok(SampleMatrix {
            data,
            provenance: None,
        })
    }

    pub fn from_rows(rows: Vec<Vec<i8>>) -> Result<Self, IsingError> {
        if rows.is_empty() {
            return Err(IsingError::EmptySample);
        }
        let n = rows.len();
        let p = rows[0].len();
        let mut flat = Vec::with_capacity(n * p);
        for row in &rows {
            assert_eq!(row.len(), p, "ragged sample rows");
            flat.extend_from_slice(row);
        }
        let data = Array2::from_shape_vec((n, p), flat).expect("shape checked above");
        Self::from_entries(data)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    #[inline]
    pub fn get(&self, sample: usize, node: usize) -> i8 {
        self.data[[sample, node]]
    }

    pub fn row(&self, sample: usize) -> ArrayView1<'_, i8> {
        self.data.row(sample)
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn set_provenance(&mut self, provenance: Provenance) {
        self.provenance = Some(provenance);
    }

    /// Copy of the first `count` rows (used for train/validation splits).
    pub fn head(&self, count: usize) -> SampleMatrix {
        assert!(count >= 1 && count <= self.n());
        SampleMatrix {
            data: self.data.slice(ndarray::s![..count, ..]).to_owned(),
            provenance: self.provenance.clone(),
        }
    }

    /// Copy of the rows from `start` to the end.
    pub fn tail(&self, start: usize) -> SampleMatrix {
        assert!(start < self.n());
        SampleMatrix {
            data: self.data.slice(ndarray::s![start.., ..]).to_owned(),
            provenance: self.provenance.clone(),
        }
    }

    /// Copy with columns relabeled: new column `j` is old column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> SampleMatrix {
        assert_eq!(perm.len(), self.p());
        let mut data = Array2::<i8>::zeros((self.n(), self.p()));
        for i in 0..self.n() {
            for (j, &src) in perm.iter().enumerate() {
                data[[i, j]] = self.data[[i, src]];
            }
        }
        SampleMatrix {
            data,
            provenance: self.provenance.clone(),
        }
    }

    pub fn column_mean(&self, node: usize) -> f64 {
        let n = self.n() as f64;
        (0..self.n()).map(|i| self.get(i, node) as f64).sum::<f64>() / n
    }

    pub fn pair_moment(&self, r: usize, t: usize) -> f64 {
        let n = self.n() as f64;
        (0..self.n())
            .map(|i| (self.get(i, r) * self.get(i, t)) as f64)
            .sum::<f64>()
            / n
    }

    /// Writes the samples as plain-text CSV of `±1` integers, one sample per
    /// row.
    pub fn write_csv(&self, path: &Path) -> Result<(), IsingError> {
        let mut out = String::with_capacity(self.n() * (2 * self.p() + 1));
        for i in 0..self.n() {
            for j in 0..self.p() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.get(i, j));
            }
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Writes the sidecar metadata record: flat JSON with the sample shape
    /// and whatever provenance is known.
    pub fn write_metadata(&self, path: &Path) -> Result<(), IsingError> {
        let mut out = String::new();
        let _ = write!(out, "{{\"n\": {}, \"p\": {}", self.n(), self.p());
        if let Some(prov) = &self.provenance {
            if let Some(graph) = &prov.graph {
                let _ = write!(out, ", \"graph\": \"{graph}\"");
            }
            if let Some(mag) = prov.magnitude {
                let _ = write!(out, ", \"omega\": {mag}");
            }
            let _ = write!(
                out,
                ", \"seed\": {}, \"burn_in_sweeps\": {}, \"thin_sweeps\": {}",
                prov.seed, prov.burn_in_sweeps, prov.thin_sweeps
            );
        }
        out.push_str("}\n");
        let mut file = fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Reads a `±1` CSV written by [`SampleMatrix::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self, IsingError> {
        let text = fs::read_to_string(path)?;
        let mut rows: Vec<Vec<i8>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for field in line.split(',') {
                let value: i64 =
                    field
                        .trim()
                        .parse()
                        .map_err(|_| IsingError::Parse {
                            line: lineno + 1,
                            message: format!("not an integer: {field:?}"),
                        })?;
                if value != 1 && value != -1 {
                    return Err(IsingError::NonBinaryData {
                        row: lineno,
                        col: row.len(),
                        value,
                    });
                }
                row.push(value as i8);
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(IsingError::Parse {
                        line: lineno + 1,
                        message: format!(
                            "row has {} fields, expected {}",
                            row.len(),
                            first.len()
                        ),
                    });
                }
            }
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}
