//! Photon-counting detectors with spectral and temporal acceptance,
//! post-selection on count patterns, and the resulting conditioned states.
//!
//! A detector with frequency response `mu` and time window `eta` is modelled
//! by splitting each photon on its port into a seen part
//! `sqrt(eta) IFT[sqrt(mu) f]`, which stays on the port, and one or two lost
//! parts routed to fresh environment modes that are traced out.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{parse_number, split_call, FilterBranch, FrequencyFilter, OverlapCache, PacketId, PacketTable, TimeFilter};
use crate::state::{term_overlap, ModeRoster, Photon, PhotonList, PhotonicState, TermAccumulator, WavepacketTerm};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Spectral acceptance `mu(w)` of a detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrequencyResponse {
    Flat,
    /// `mu(w) = exp(-w^2 / bandwidth^2)`
    GaussianBand { bandwidth: f64 },
}

impl FrequencyResponse {
    pub fn value(&self, w: f64) -> f64 {
        match *self {
            FrequencyResponse::Flat => 1.0,
            FrequencyResponse::GaussianBand { bandwidth } => (-(w * w) / (bandwidth * bandwidth)).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FrequencyResponse::GaussianBand { bandwidth } if !(bandwidth.is_finite() && bandwidth > 0.0) => {
                Err(Error::invalid(format!("detector bandwidth must be positive, got {bandwidth}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, FrequencyResponse::Flat)
    }

    pub(crate) fn hash_bits<H: Hasher>(&self, state: &mut H) {
        match *self {
            FrequencyResponse::Flat => 0u8.hash(state),
            FrequencyResponse::GaussianBand { bandwidth } => (1u8, bandwidth.to_bits()).hash(state),
        }
    }
}

/// Temporal acceptance `eta(t)` of a detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeResponse {
    Always,
    /// `eta(t) = 1` for `|t| <= half_width`, else 0.
    RectWindow { half_width: f64 },
}

impl TimeResponse {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeResponse::Always => 1.0,
            TimeResponse::RectWindow { half_width } => {
                if t.abs() <= half_width {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeResponse::RectWindow { half_width } if !(half_width.is_finite() && half_width > 0.0) => {
                Err(Error::invalid(format!("window half-width must be positive, got {half_width}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_always(&self) -> bool {
        matches!(self, TimeResponse::Always)
    }

    pub(crate) fn hash_bits<H: Hasher>(&self, state: &mut H) {
        match *self {
            TimeResponse::Always => 0u8.hash(state),
            TimeResponse::RectWindow { half_width } => (1u8, half_width.to_bits()).hash(state),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorModel {
    pub frequency: FrequencyResponse,
    pub time: TimeResponse,
}

impl DetectorModel {
    pub const IDEAL: DetectorModel = DetectorModel { frequency: FrequencyResponse::Flat, time: TimeResponse::Always };

    pub fn new(frequency: FrequencyResponse, time: TimeResponse) -> Result<Self> {
        frequency.validate()?;
        time.validate()?;
        Ok(Self { frequency, time })
    }

    pub fn is_ideal(&self) -> bool {
        self.frequency.is_flat() && self.time.is_always()
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self::IDEAL
    }
}

/// Accepts `flat`, `gauss(bw=2.0)`, `window(half=1.5)` and `+`-joined
/// combinations such as `gauss(bw=2.0)+window(half=1.5)`.
impl FromStr for DetectorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut frequency = None;
        let mut time = None;
        for part in s.split('+') {
            let (name, args) = split_call(part)?;
            let arg = |key: &str| -> Result<f64> {
                let (k, v) = match args.as_slice() {
                    [(k, v)] => (k, v),
                    _ => return Err(Error::invalid(format!("'{name}' takes exactly one argument '{key}'"))),
                };
                if k != key {
                    return Err(Error::invalid(format!("'{name}' expects '{key}', found '{k}'")));
                }
                parse_number(k, v)
            };
            let slot_err = |what: &str| Error::invalid(format!("detector spec '{s}' sets the {what} response twice"));
            match name.as_str() {
                "flat" | "ideal" if args.is_empty() => {}
                "gauss" | "gaussian" => {
                    if frequency.replace(FrequencyResponse::GaussianBand { bandwidth: arg("bw")? }).is_some() {
                        return Err(slot_err("frequency"));
                    }
                }
                "window" | "rect" => {
                    if time.replace(TimeResponse::RectWindow { half_width: arg("half")? }).is_some() {
                        return Err(slot_err("time"));
                    }
                }
                _ => return Err(Error::invalid(format!("unknown detector component '{part}'"))),
            }
        }
        DetectorModel::new(frequency.unwrap_or(FrequencyResponse::Flat), time.unwrap_or(TimeResponse::Always))
    }
}

impl fmt::Display for DetectorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let FrequencyResponse::GaussianBand { bandwidth } = self.frequency {
            parts.push(format!("gauss(bw={bandwidth:?})"));
        }
        if let TimeResponse::RectWindow { half_width } = self.time {
            parts.push(format!("window(half={half_width:?})"));
        }
        if parts.is_empty() {
            f.write_str("flat")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

/// Detector models per port, with a default for unlisted ports.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectorBank {
    default: DetectorModel,
    ports: BTreeMap<usize, DetectorModel>,
}

impl DetectorBank {
    pub fn uniform(model: DetectorModel) -> Self {
        Self { default: model, ports: BTreeMap::new() }
    }

    pub fn with_port(mut self, port: usize, model: DetectorModel) -> Self {
        self.ports.insert(port, model);
        self
    }

    pub fn model(&self, port: usize) -> DetectorModel {
        self.ports.get(&port).copied().unwrap_or(self.default)
    }
}

/// Required photon count on each monitored port.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionPattern {
    counts: BTreeMap<usize, usize>,
}

impl ConditionPattern {
    pub fn new(counts: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (port, n) in counts {
            if map.insert(port, n).is_some() {
                return Err(Error::invalid(format!("port {port} listed twice in pattern")));
            }
        }
        Ok(Self { counts: map })
    }

    /// Parses `v1=0,v2=0,a1=1,a2=1` against a roster.
    pub fn parse(text: &str, roster: &ModeRoster) -> Result<Self> {
        let mut pairs = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (label, n) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected port=count, found '{item}'")))?;
            let n: usize = n.trim().parse().map_err(|_| Error::invalid(format!("bad count in '{item}'")))?;
            pairs.push((roster.index(label.trim())?, n));
        }
        Self::new(pairs)
    }

    pub fn ports(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.counts.iter().map(|(&p, &n)| (p, n))
    }

    pub fn required(&self, port: usize) -> Option<usize> {
        self.counts.get(&port).copied()
    }
}

/// Result of [`split_by_filter`]: the expanded state and the indices of the
/// environment modes that were appended (if any).
#[derive(Clone, Debug)]
pub struct SplitOutcome {
    pub state: PhotonicState,
    pub frequency_env: Option<usize>,
    pub time_env: Option<usize>,
}

/// Splits every photon on `port` into its detected part and its lost parts.
/// Trivial responses add no environment mode.
pub fn split_by_filter(
    state: &PhotonicState,
    port: usize,
    frequency: FrequencyResponse,
    time: TimeResponse,
    table: &PacketTable,
) -> Result<SplitOutcome> {
    frequency.validate()?;
    time.validate()?;
    if port >= state.mode_count() {
        return Err(Error::invalid(format!("port {port} outside roster")));
    }
    let mut next_mode = state.mode_count();
    let mut alloc = |needed: bool| {
        needed.then(|| {
            next_mode += 1;
            next_mode - 1
        })
    };
    let frequency_env = alloc(!frequency.is_flat());
    let time_env = alloc(!time.is_always());
    let mode_count = next_mode;
    if frequency_env.is_none() && time_env.is_none() {
        return Ok(SplitOutcome { state: state.with_mode_count(mode_count)?, frequency_env, time_env });
    }

    let mut views: BTreeMap<PacketId, Vec<Photon>> = BTreeMap::new();
    let mut view_of = |packet: PacketId| -> Result<Vec<Photon>> {
        if let Some(v) = views.get(&packet) {
            return Ok(v.clone());
        }
        let base = table.get(packet)?;
        let seen_freq = if frequency.is_flat() {
            (*base).clone()
        } else {
            base.with_frequency_filter(FrequencyFilter { response: frequency, branch: FilterBranch::Transmitted })?
        };
        let mut out = Vec::new();
        let seen = if time.is_always() {
            seen_freq.clone()
        } else {
            seen_freq.with_time_filter(TimeFilter { response: time, branch: FilterBranch::Transmitted })?
        };
        out.push(Photon { mode: port, packet: table.intern(seen) });
        if let Some(m) = frequency_env {
            let lost = base.with_frequency_filter(FrequencyFilter { response: frequency, branch: FilterBranch::Complement })?;
            out.push(Photon { mode: m, packet: table.intern(lost) });
        }
        if let Some(m) = time_env {
            let lost = seen_freq.with_time_filter(TimeFilter { response: time, branch: FilterBranch::Complement })?;
            out.push(Photon { mode: m, packet: table.intern(lost) });
        }
        views.insert(packet, out.clone());
        Ok(out)
    };

    let mut acc = TermAccumulator::new();
    for term in state.terms() {
        let mut partial: Vec<PhotonList> = vec![PhotonList::new()];
        for photon in &term.photons {
            if photon.mode != port {
                partial.iter_mut().for_each(|p| p.push(*photon));
                continue;
            }
            let options = view_of(photon.packet)?;
            partial = partial
                .into_iter()
                .flat_map(|p| {
                    options.iter().map(move |o| {
                        let mut q = p.clone();
                        q.push(*o);
                        q
                    })
                })
                .collect();
        }
        for p in partial {
            acc.add(term.coefficient, p);
        }
    }
    Ok(SplitOutcome { state: acc.finish(mode_count), frequency_env, time_env })
}

/// Post-selected, partially traced state
/// `rho = sum_{ab} W[a][b] |R_a><R_b|` with `W[a][b] = <T_b|T_a>`, where
/// `T_a` runs over distinct traced monomials (detected photons and
/// environment photons) and `R_a` is the residual state paired with it.
#[derive(Clone, Debug)]
pub struct ConditionedDensity {
    mode_count: usize,
    residual_modes: Vec<usize>,
    branches: Vec<PhotonicState>,
    weights: Vec<Complex64>,
}

impl ConditionedDensity {
    pub fn from_pure(state: PhotonicState) -> Self {
        let mode_count = state.mode_count();
        Self {
            mode_count,
            residual_modes: (0..mode_count).collect(),
            branches: vec![state],
            weights: vec![Complex64::new(1.0, 0.0)],
        }
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn residual_modes(&self) -> &[usize] {
        &self.residual_modes
    }

    pub fn branches(&self) -> &[PhotonicState] {
        &self.branches
    }

    /// `W[a][b]`.
    pub fn weight(&self, a: usize, b: usize) -> Complex64 {
        self.weights[a * self.branches.len() + b]
    }

    /// `tr rho`, the post-selection probability for a normalised input.
    pub fn trace(&self, cache: &OverlapCache) -> Result<f64> {
        let n = self.branches.len();
        let mut total = ZERO;
        for a in 0..n {
            for b in 0..n {
                let w = self.weights[a * n + b];
                if w != ZERO {
                    total += w * self.branches[b].inner_product(&self.branches[a], cache)?;
                }
            }
        }
        Ok(total.re)
    }

    /// `<psi|rho|psi>`.
    pub fn expectation(&self, psi: &PhotonicState, cache: &OverlapCache) -> Result<f64> {
        let proj: Vec<Complex64> = self.branches.iter().map(|r| psi.inner_product(r, cache)).collect::<Result<_>>()?;
        let n = proj.len();
        let mut total = ZERO;
        for a in 0..n {
            for b in 0..n {
                total += self.weights[a * n + b] * proj[a] * proj[b].conj();
            }
        }
        Ok(total.re)
    }

    /// Flat `(ket term, bra term, weight)` listing of `rho`.
    pub fn pairs(&self) -> Vec<(WavepacketTerm, WavepacketTerm, Complex64)> {
        let n = self.branches.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let w = self.weights[a * n + b];
                if w == ZERO {
                    continue;
                }
                for ket in self.branches[a].terms() {
                    for bra in self.branches[b].terms() {
                        out.push((ket.clone(), bra.clone(), w));
                    }
                }
            }
        }
        out
    }

    pub fn packet_ids(&self) -> Vec<PacketId> {
        let mut ids: Vec<PacketId> = self.branches.iter().flat_map(PhotonicState::packet_ids).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Conditioned states of several inputs sharing one set of traced monomials,
/// so that cross terms `rho_ij = sum W[a][b] |R^i_a><R^j_b|` are available.
#[derive(Clone, Debug)]
pub struct ConditionedFamily {
    pub mode_count: usize,
    pub residual_modes: Vec<usize>,
    /// `branches[i][a]` is `R^i_a`.
    pub branches: Vec<Vec<PhotonicState>>,
    /// Row-major `W[a][b] = <T_b|T_a>`.
    pub weights: Vec<Complex64>,
}

impl ConditionedFamily {
    pub fn branch_count(&self) -> usize {
        self.branches.first().map_or(0, Vec::len)
    }

    pub fn member(&self, i: usize) -> ConditionedDensity {
        ConditionedDensity {
            mode_count: self.mode_count,
            residual_modes: self.residual_modes.clone(),
            branches: self.branches[i].clone(),
            weights: self.weights.clone(),
        }
    }
}

/// Post-selects several states on `pattern` and traces out detected and
/// lost photons. Populates `cache` with every packet the result refers to.
pub fn condition_family(
    states: &[PhotonicState],
    pattern: &ConditionPattern,
    detectors: &DetectorBank,
    table: &PacketTable,
    cache: &OverlapCache,
) -> Result<ConditionedFamily> {
    let first = states.first().ok_or_else(|| Error::invalid("no states to condition"))?;
    let base_modes = first.mode_count();
    if states.iter().any(|s| s.mode_count() != base_modes) {
        return Err(Error::invalid("conditioned states must share a roster"));
    }
    if let Some((p, _)) = pattern.ports().find(|(p, _)| *p >= base_modes) {
        return Err(Error::invalid(format!("pattern port {p} outside roster")));
    }

    let mut split: Vec<PhotonicState> = states.to_vec();
    for (port, _) in pattern.ports() {
        let model = detectors.model(port);
        split = split
            .iter()
            .map(|s| split_by_filter(s, port, model.frequency, model.time, table).map(|o| o.state))
            .collect::<Result<_>>()?;
    }
    let mode_count = split[0].mode_count();
    let traced_mode = |m: usize| m >= base_modes || pattern.required(m).is_some();
    let residual_modes: Vec<usize> = (0..base_modes).filter(|&m| !traced_mode(m)).collect();

    let mut keys: BTreeMap<PhotonList, usize> = BTreeMap::new();
    let mut grouped: Vec<BTreeMap<usize, TermAccumulator>> = (0..split.len()).map(|_| BTreeMap::new()).collect();
    for (i, s) in split.iter().enumerate() {
        for term in s.terms() {
            let accepted = pattern.ports().all(|(port, n)| term.count_in(port) == n);
            if !accepted {
                continue;
            }
            let (traced, residual): (PhotonList, PhotonList) = term.photons.iter().copied().partition(|p| traced_mode(p.mode));
            let next = keys.len();
            let k = *keys.entry(traced).or_insert(next);
            grouped[i].entry(k).or_default().add(term.coefficient, residual);
        }
    }

    let mut ordered: Vec<(PhotonList, usize)> = keys.into_iter().collect();
    ordered.sort_by_key(|(_, k)| *k);
    let n = ordered.len();
    let branches: Vec<Vec<PhotonicState>> = grouped
        .into_iter()
        .map(|mut g| {
            (0..n)
                .map(|k| g.remove(&k).map_or_else(|| PhotonicState::zero(mode_count), |acc| acc.finish(mode_count)))
                .collect()
        })
        .collect();

    let mut ids: Vec<PacketId> = ordered.iter().flat_map(|(t, _)| t.iter().map(|p| p.packet)).collect();
    ids.extend(branches.iter().flatten().flat_map(PhotonicState::packet_ids));
    cache.populate(table, &ids)?;

    let mut weights = vec![ZERO; n * n];
    for a in 0..n {
        for b in a..n {
            let w = term_overlap(&ordered[b].0, &ordered[a].0, cache)?;
            weights[a * n + b] = w;
            weights[b * n + a] = w.conj();
        }
    }
    Ok(ConditionedFamily { mode_count, residual_modes, branches, weights })
}

pub fn condition(
    state: &PhotonicState,
    pattern: &ConditionPattern,
    detectors: &DetectorBank,
    table: &PacketTable,
    cache: &OverlapCache,
) -> Result<ConditionedDensity> {
    Ok(condition_family(std::slice::from_ref(state), pattern, detectors, table, cache)?.member(0))
}

/// Trace of a conditioned density; tiny negative round-off is clamped, real
/// negatives are reported.
pub fn trace_residual(rho: &ConditionedDensity, cache: &OverlapCache) -> Result<f64> {
    let t = rho.trace(cache)?;
    if t < -1e-9 {
        return Err(Error::Internal(format!("conditioned state has negative trace {t}")));
    }
    Ok(t.max(0.0))
}
