//! Coincidence rates, gate fidelity and success probability, worst-case
//! searches over input superpositions and jitter averaging.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{condition, condition_family, trace_residual, ConditionPattern, ConditionedDensity, DetectorBank};
use crate::error::{Error, Result};
use crate::network::{apply_circuit, beamsplitter_unitary, build_cnot, BeamsplitterSpec, CnotReflectivities, LinearCircuit};
use crate::quadrature::gauss_hermite;
use crate::spectral::{OverlapCache, PacketId, PacketTable, SpectralAmplitude};
use crate::state::{ModeRoster, PhotonicState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Slack allowed on the `[0, 1]` bounds of F and P.
const BOUND_SLACK: f64 = 1e-9;
/// Success probabilities at or below this leave the fidelity undefined.
const MIN_TRACE: f64 = 1e-14;

/// `<N_a N_b>` of a state.
pub fn coincidence(state: &PhotonicState, mode_a: usize, mode_b: usize, cache: &OverlapCache) -> Result<f64> {
    if mode_a >= state.mode_count() || mode_b >= state.mode_count() {
        return Err(Error::invalid("coincidence modes outside roster"));
    }
    state.number_correlation(mode_a, mode_b, cache)
}

/// Coincidence rate behind a balanced beamsplitter with `f` entering one
/// port and `g` the other, computed through the full state pipeline.
pub fn hom_coincidence(f: &SpectralAmplitude, g: &SpectralAmplitude) -> Result<f64> {
    let table = PacketTable::new();
    let (pf, pg) = (table.intern(f.clone()), table.intern(g.clone()));
    let cache = OverlapCache::new();
    cache.populate(&table, &[pf, pg])?;
    let input = PhotonicState::single_photon(2, 0, pf)?.tensor(&PhotonicState::single_photon(2, 1, pg)?)?;
    let roster = ModeRoster::new(["a", "b"])?;
    let bs = beamsplitter_unitary(&roster, BeamsplitterSpec::new(0, 1, 0.5)?)?;
    let out = apply_circuit(&bs, &input)?;
    coincidence(&out, 0, 1, &cache)
}

/// Two-qubit input `alpha|HH> + beta|HV> + gamma|VH> + delta|VV>`
/// (control first, then target).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputSuperposition {
    amplitudes: [Complex64; 4],
}

impl InputSuperposition {
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("amplitudes must be finite"));
        }
        let n: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("amplitudes have squared norm {n}, expected 1")));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales to unit norm.
    pub fn normalized(amplitudes: [Complex64; 4]) -> Result<Self> {
        let n: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("cannot normalise a zero or non-finite superposition"));
        }
        Ok(Self { amplitudes: amplitudes.map(|a| a / n) })
    }

    pub fn basis(index: usize) -> Self {
        let mut a = [ZERO; 4];
        a[index] = Complex64::new(1.0, 0.0);
        Self { amplitudes: a }
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        self.amplitudes
    }
}

/// Logical amplitudes after an ideal CNOT: `(alpha, beta, delta, gamma)`.
pub fn cnot_truth_table(input: &InputSuperposition) -> InputSuperposition {
    let [a, b, c, d] = input.amplitudes;
    InputSuperposition { amplitudes: [a, b, d, c] }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateMetrics {
    pub fidelity: f64,
    pub success_probability: f64,
}

fn check_bounds(f: f64, p: f64) -> Result<GateMetrics> {
    let ok = |x: f64| x.is_finite() && (-BOUND_SLACK..=1.0 + BOUND_SLACK).contains(&x);
    if !ok(f) || !ok(p) {
        return Err(Error::Internal(format!("gate metrics out of bounds: F = {f}, P = {p}")));
    }
    Ok(GateMetrics { fidelity: f.clamp(0.0, 1.0), success_probability: p.clamp(0.0, 1.0) })
}

/// `F = <psi|rho|psi> / (tr(rho) <psi|psi>)`.
pub fn fidelity(density: &ConditionedDensity, expected: &PhotonicState, cache: &OverlapCache) -> Result<f64> {
    let tr = trace_residual(density, cache)?;
    if tr <= MIN_TRACE {
        return Err(Error::UndefinedFidelity);
    }
    let norm = expected.norm_squared(cache)?;
    if norm <= 0.0 {
        return Err(Error::invalid("expected state has zero norm"));
    }
    let f = density.expectation(expected, cache)? / (tr * norm);
    if !(f.is_finite() && (-BOUND_SLACK..=1.0 + BOUND_SLACK).contains(&f)) {
        return Err(Error::Internal(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(f.clamp(0.0, 1.0))
}

/// Time shifts of the three input roles; both ancillas share one shift.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Shifts {
    pub control: f64,
    pub target: f64,
    pub ancilla: f64,
}

/// Unshifted packets of the three input roles.
#[derive(Clone, Debug, PartialEq)]
pub struct RolePackets {
    pub control: SpectralAmplitude,
    pub target: SpectralAmplitude,
    pub ancilla: SpectralAmplitude,
}

impl RolePackets {
    pub fn uniform(packet: SpectralAmplitude) -> Self {
        Self { control: packet.clone(), target: packet.clone(), ancilla: packet }
    }
}

/// Everything needed to evaluate the heralded CNOT: circuit, inputs and
/// counters. Mode roles are looked up by label (`cH cV tH tV v1 v2 a1 a2`).
#[derive(Clone, Debug)]
pub struct GateSetup {
    pub circuit: LinearCircuit,
    pub packets: RolePackets,
    pub shifts: Shifts,
    pub detectors: DetectorBank,
    pub pattern: ConditionPattern,
    control_rails: [usize; 2],
    target_rails: [usize; 2],
    ancilla_ports: [usize; 2],
}

impl GateSetup {
    pub fn new(circuit: LinearCircuit, packets: RolePackets, shifts: Shifts, detectors: DetectorBank) -> Result<Self> {
        let r = circuit.roster();
        let control_rails = [r.index("cH")?, r.index("cV")?];
        let target_rails = [r.index("tH")?, r.index("tV")?];
        let ancilla_ports = [r.index("a1")?, r.index("a2")?];
        let pattern = ConditionPattern::parse("v1=0,v2=0,a1=1,a2=1", r)?;
        for s in [shifts.control, shifts.target, shifts.ancilla] {
            if !s.is_finite() {
                return Err(Error::invalid("shifts must be finite"));
            }
        }
        Ok(Self { circuit, packets, shifts, detectors, pattern, control_rails, target_rails, ancilla_ports })
    }

    /// The default CNOT with the same packet in every role.
    pub fn cnot(packet: SpectralAmplitude, shifts: Shifts, detectors: DetectorBank) -> Result<Self> {
        Self::new(build_cnot(&CnotReflectivities::default())?, RolePackets::uniform(packet), shifts, detectors)
    }

    pub fn ancilla_ports(&self) -> [usize; 2] {
        self.ancilla_ports
    }

    fn shifted_ids(&self, table: &PacketTable) -> Result<[PacketId; 3]> {
        Ok([
            table.intern(self.packets.control.shifted(self.shifts.control)?),
            table.intern(self.packets.target.shifted(self.shifts.target)?),
            table.intern(self.packets.ancilla.shifted(self.shifts.ancilla)?),
        ])
    }

    fn rails(index: usize) -> (usize, usize) {
        (index / 2, index % 2)
    }

    /// Four-photon input for logical basis state `index` (0..4).
    pub fn basis_input(&self, index: usize, table: &PacketTable) -> Result<PhotonicState> {
        let m = self.circuit.mode_count();
        let [c, t, a] = self.shifted_ids(table)?;
        let (ci, ti) = Self::rails(index);
        PhotonicState::single_photon(m, self.control_rails[ci], c)?
            .tensor(&PhotonicState::single_photon(m, self.target_rails[ti], t)?)?
            .tensor(&PhotonicState::single_photon(m, self.ancilla_ports[0], a)?)?
            .tensor(&PhotonicState::single_photon(m, self.ancilla_ports[1], a)?)
    }

    pub fn input_state(&self, x: &InputSuperposition, table: &PacketTable) -> Result<PhotonicState> {
        let mut acc = PhotonicState::zero(self.circuit.mode_count());
        for (i, amp) in x.amplitudes.iter().enumerate() {
            if *amp != ZERO {
                acc = acc.add(&self.basis_input(i, table)?.scaled(*amp))?;
            }
        }
        Ok(acc)
    }

    /// Two-photon logical state with zero-shift role packets.
    pub fn logical_state(&self, x: &InputSuperposition, mode_count: usize, table: &PacketTable) -> Result<PhotonicState> {
        let c = table.intern(self.packets.control.clone());
        let t = table.intern(self.packets.target.clone());
        let mut acc = PhotonicState::zero(mode_count);
        for (i, amp) in x.amplitudes.iter().enumerate() {
            if *amp == ZERO {
                continue;
            }
            let (ci, ti) = Self::rails(i);
            let term = PhotonicState::single_photon(mode_count, self.control_rails[ci], c)?
                .tensor(&PhotonicState::single_photon(mode_count, self.target_rails[ti], t)?)?;
            acc = acc.add(&term.scaled(*amp))?;
        }
        Ok(acc)
    }

    /// Expected output state for input `x`.
    pub fn expected_output(&self, x: &InputSuperposition, mode_count: usize, table: &PacketTable) -> Result<PhotonicState> {
        self.logical_state(&cnot_truth_table(x), mode_count, table)
    }
}

/// F and P for one input, computed directly from the conditioned density.
/// Slower than [`GateResponse`] but shares no code path with it.
pub fn gate_metrics_direct(setup: &GateSetup, x: &InputSuperposition, table: &PacketTable, cache: &OverlapCache) -> Result<GateMetrics> {
    let input = setup.input_state(x, table)?;
    let out = apply_circuit(&setup.circuit, &input)?;
    let rho = condition(&out, &setup.pattern, &setup.detectors, table, cache)?;
    let p = trace_residual(&rho, cache)?;
    let expected = setup.expected_output(x, rho.mode_count(), table)?;
    let mut ids = expected.packet_ids();
    ids.extend(rho.packet_ids());
    cache.populate(table, &ids)?;
    let f = fidelity(&rho, &expected, cache)?;
    check_bounds(f, p)
}

/// Quadratic-form description of the gate: for any input `x`,
/// `P(x) = sum x_i conj(x_j) T[i][j]` and
/// `<psi|rho|psi> = sum x_i conj(x_j) conj(y_m) y_l N[i][j][m][l]`
/// with `y` the ideal output amplitudes.
#[derive(Clone, Debug)]
pub struct GateResponse {
    trace: [[Complex64; 4]; 4],
    numerator: Vec<Complex64>,
}

impl GateResponse {
    pub fn compute(setup: &GateSetup, table: &PacketTable, cache: &OverlapCache) -> Result<Self> {
        let inputs: Vec<PhotonicState> = (0..4)
            .map(|i| apply_circuit(&setup.circuit, &setup.basis_input(i, table)?))
            .collect::<Result<_>>()?;
        let family = condition_family(&inputs, &setup.pattern, &setup.detectors, table, cache)?;
        let k = family.branch_count();
        let basis: Vec<PhotonicState> = (0..4)
            .map(|m| setup.logical_state(&InputSuperposition::basis(m), family.mode_count, table))
            .collect::<Result<_>>()?;
        let ids: Vec<PacketId> = basis.iter().flat_map(PhotonicState::packet_ids).collect();
        let mut all = ids.clone();
        all.extend(family.branches.iter().flatten().flat_map(PhotonicState::packet_ids));
        cache.populate(table, &all)?;

        // v[i][a][m] = <e_m|R^i_a>
        let v: Vec<Vec<[Complex64; 4]>> = family
            .branches
            .par_iter()
            .map(|bs| {
                bs.iter()
                    .map(|r| {
                        let mut row = [ZERO; 4];
                        for (m, e) in basis.iter().enumerate() {
                            row[m] = e.inner_product(r, cache)?;
                        }
                        Ok(row)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let w = &family.weights;
        let nonzero: Vec<(usize, usize, Complex64)> = (0..k)
            .flat_map(|a| (0..k).map(move |b| (a, b)))
            .filter_map(|(a, b)| {
                let x = w[a * k + b];
                (x != ZERO).then_some((a, b, x))
            })
            .collect();

        let pairs: Vec<(usize, usize)> = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
        let traces: Vec<Complex64> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let mut s = ZERO;
                for &(a, b, x) in &nonzero {
                    let (ra, rb) = (&family.branches[i][a], &family.branches[j][b]);
                    if ra.is_zero() || rb.is_zero() {
                        continue;
                    }
                    s += x * rb.inner_product(ra, cache)?;
                }
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let mut trace = [[ZERO; 4]; 4];
        for (&(i, j), t) in pairs.iter().zip(traces) {
            trace[i][j] = t;
        }

        let mut numerator = vec![ZERO; 256];
        for &(a, b, x) in &nonzero {
            for i in 0..4 {
                for j in 0..4 {
                    let (va, vb) = (&v[i][a], &v[j][b]);
                    for m in 0..4 {
                        let xa = x * va[m];
                        if xa == ZERO {
                            continue;
                        }
                        for l in 0..4 {
                            numerator[((i * 4 + j) * 4 + m) * 4 + l] += xa * vb[l].conj();
                        }
                    }
                }
            }
        }
        Ok(Self { trace, numerator })
    }

    /// Builds the response of `setup` with a private packet table and cache.
    pub fn for_setup(setup: &GateSetup) -> Result<Self> {
        Self::compute(setup, &PacketTable::new(), &OverlapCache::new())
    }

    pub fn success_probability(&self, x: &InputSuperposition) -> f64 {
        let a = x.amplitudes;
        let mut p = ZERO;
        for i in 0..4 {
            for j in 0..4 {
                p += a[i] * a[j].conj() * self.trace[i][j];
            }
        }
        p.re
    }

    pub fn evaluate(&self, x: &InputSuperposition) -> Result<GateMetrics> {
        let a = x.amplitudes;
        let y = cnot_truth_table(x).amplitudes;
        let p = self.success_probability(x);
        if p <= MIN_TRACE {
            return Err(Error::UndefinedFidelity);
        }
        let mut num = ZERO;
        for i in 0..4 {
            for j in 0..4 {
                let xij = a[i] * a[j].conj();
                if xij == ZERO {
                    continue;
                }
                let base = (i * 4 + j) * 16;
                let mut inner = ZERO;
                for m in 0..4 {
                    for l in 0..4 {
                        inner += y[m].conj() * y[l] * self.numerator[base + m * 4 + l];
                    }
                }
                num += xij * inner;
            }
        }
        check_bounds(num.re / p, p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub samples: usize,
    pub seed: u64,
    /// Coordinate-wise golden-section polish after the Monte Carlo pass.
    pub refine: bool,
}

impl SearchConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed, refine: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub f_min: f64,
    pub p_min: f64,
    pub argmin_f: InputSuperposition,
    pub argmin_p: InputSuperposition,
    pub samples: usize,
    pub seed: u64,
}

/// The four basis states followed by `(|i> + phi |j>)/sqrt(2)` for every
/// pair `i < j` and `phi` in `{1, i}`.
pub fn deterministic_probes() -> Vec<InputSuperposition> {
    let mut out: Vec<InputSuperposition> = (0..4).map(InputSuperposition::basis).collect();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..4 {
        for j in i + 1..4 {
            for phase in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
                let mut a = [ZERO; 4];
                a[i] = Complex64::new(h, 0.0);
                a[j] = phase * h;
                out.push(InputSuperposition { amplitudes: a });
            }
        }
    }
    out
}

/// Haar-random superposition number `index` of the stream seeded by `seed`.
/// Each index owns its own ChaCha stream, so results do not depend on
/// evaluation order.
pub fn haar_sample(seed: u64, index: u64) -> InputSuperposition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let mut a = [ZERO; 4];
        for z in &mut a {
            *z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        if let Ok(x) = InputSuperposition::normalized(a) {
            return x;
        }
    }
}

pub fn worst_case_search(setup: &GateSetup, config: &SearchConfig) -> Result<SearchResult> {
    search_response(&GateResponse::for_setup(setup)?, config)
}

/// Minimises F and P over the deterministic probes and `config.samples`
/// Haar-random inputs.
pub fn search_response(response: &GateResponse, config: &SearchConfig) -> Result<SearchResult> {
    if config.samples == 0 {
        return Err(Error::invalid("search needs at least one sample"));
    }
    let probes = deterministic_probes();
    let total = probes.len() + config.samples;
    let point = |k: usize| -> InputSuperposition {
        if k < probes.len() {
            probes[k]
        } else {
            haar_sample(config.seed, (k - probes.len()) as u64)
        }
    };

    // (F or NaN when undefined, P, index)
    let evaluated: Vec<(f64, f64, usize)> = (0..total)
        .into_par_iter()
        .map(|k| {
            let x = point(k);
            match response.evaluate(&x) {
                Ok(m) => Ok((m.fidelity, m.success_probability, k)),
                Err(Error::UndefinedFidelity) => Ok((f64::NAN, response.success_probability(&x).max(0.0), k)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let p_best = evaluated
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)))
        .copied()
        .expect("at least one probe");
    let f_best = evaluated
        .iter()
        .filter(|e| !e.0.is_nan())
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)))
        .copied()
        .ok_or(Error::SearchDegenerate)?;

    let mut result = SearchResult {
        f_min: f_best.0,
        p_min: p_best.1,
        argmin_f: point(f_best.2),
        argmin_p: point(p_best.2),
        samples: config.samples,
        seed: config.seed,
    };
    if config.refine {
        let (x, f) = polish(&result.argmin_f, result.f_min, |x| response.evaluate(x).ok().map(|m| m.fidelity));
        result.argmin_f = x;
        result.f_min = f;
        let (x, p) = polish(&result.argmin_p, result.p_min, |x| Some(response.success_probability(x)));
        result.argmin_p = x;
        result.p_min = p;
    }
    Ok(result)
}

/// Hyperspherical magnitudes and relative phases (6 real numbers).
fn to_params(x: &InputSuperposition) -> [f64; 6] {
    let a = x.amplitudes;
    let r: Vec<f64> = a.iter().map(|z| z.norm()).collect();
    let t1 = r[0].clamp(-1.0, 1.0).acos();
    let t2 = r[2].hypot(r[3]).atan2(r[1]);
    let t3 = r[3].atan2(r[2]);
    let ph = |i: usize| a[i].arg() - a[0].arg();
    [t1, t2, t3, ph(1), ph(2), ph(3)]
}

fn from_params(p: &[f64; 6]) -> InputSuperposition {
    let (s1, c1) = p[0].sin_cos();
    let (s2, c2) = p[1].sin_cos();
    let (s3, c3) = p[2].sin_cos();
    let mags = [c1, s1 * c2, s1 * s2 * c3, s1 * s2 * s3];
    let phases = [0.0, p[3], p[4], p[5]];
    let mut a = [ZERO; 4];
    for i in 0..4 {
        a[i] = Complex64::from_polar(mags[i], phases[i]);
    }
    InputSuperposition::normalized(a).expect("unit vector")
}

fn polish<F: Fn(&InputSuperposition) -> Option<f64>>(start: &InputSuperposition, start_value: f64, f: F) -> (InputSuperposition, f64) {
    const GOLD: f64 = 0.618_033_988_749_895;
    let mut params = to_params(start);
    let mut best = start_value;
    let eval = |p: &[f64; 6]| f(&from_params(p)).unwrap_or(f64::INFINITY);
    for sweep in 0..4 {
        let half = 0.3 / (sweep + 1) as f64;
        for d in 0..6 {
            let (mut lo, mut hi) = (params[d] - half, params[d] + half);
            let at = |v: f64| {
                let mut q = params;
                q[d] = v;
                eval(&q)
            };
            let mut x1 = hi - GOLD * (hi - lo);
            let mut x2 = lo + GOLD * (hi - lo);
            let (mut f1, mut f2) = (at(x1), at(x2));
            for _ in 0..30 {
                if f1 < f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - GOLD * (hi - lo);
                    f1 = at(x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + GOLD * (hi - lo);
                    f2 = at(x2);
                }
            }
            let (xv, fv) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
            if fv < best {
                best = fv;
                params[d] = xv;
            }
        }
    }
    if best < start_value {
        (from_params(&params), best)
    } else {
        (*start, start_value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JitterParameter {
    TimeShift,
    FrequencyShift,
}

/// Gaussian distribution of an offset with standard deviation `std_dev`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterModel {
    pub parameter: JitterParameter,
    pub std_dev: f64,
    pub quadrature_points: usize,
}

impl JitterModel {
    pub fn new(parameter: JitterParameter, std_dev: f64, quadrature_points: usize) -> Result<Self> {
        if !(std_dev.is_finite() && std_dev > 0.0) {
            return Err(Error::invalid("jitter standard deviation must be positive"));
        }
        if quadrature_points < 8 {
            return Err(Error::invalid("jitter averaging needs at least 8 quadrature points"));
        }
        Ok(Self { parameter, std_dev, quadrature_points })
    }
}

/// `E[g(X)]` for `X ~ N(0, std_dev^2)` by Gauss-Hermite quadrature.
pub fn jitter_average<F>(curve: F, model: &JitterModel) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (x, w) = gauss_hermite(model.quadrature_points);
    let scale = std::f64::consts::SQRT_2 * model.std_dev;
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        acc += wi * curve(scale * xi)?;
    }
    Ok(acc / PI.sqrt())
}
