//! Frequency-independent linear mode transformations.
//!
//! Matrices act on creation operators column by column: input mode `k`
//! becomes `sum_n U[n][k] a†_n`. A beamsplitter of reflectivity `eta` on
//! modes `(a, b)` maps `a† -> sqrt(eta) a† - sqrt(1-eta) b†` and
//! `b† -> sqrt(1-eta) a† + sqrt(eta) b†`.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{ModeRoster, PhotonList, PhotonicState, TermAccumulator};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamsplitterSpec {
    pub mode_a: usize,
    pub mode_b: usize,
    pub reflectivity: f64,
}

impl BeamsplitterSpec {
    pub fn new(mode_a: usize, mode_b: usize, reflectivity: f64) -> Result<Self> {
        if mode_a == mode_b {
            return Err(Error::invalid("beamsplitter needs two distinct modes"));
        }
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(Error::invalid(format!("reflectivity {reflectivity} outside [0, 1]")));
        }
        Ok(Self { mode_a, mode_b, reflectivity })
    }
}

/// One step of a circuit description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Element {
    Beamsplitter(BeamsplitterSpec),
    /// Two lines cross: whatever travelled on one continues on the other.
    Swap(usize, usize),
}

/// An `m x m` unitary on a labelled roster.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCircuit {
    roster: ModeRoster,
    matrix: Vec<Complex64>,
}

impl LinearCircuit {
    pub fn identity(roster: ModeRoster) -> Self {
        let m = roster.len();
        let mut matrix = vec![ZERO; m * m];
        for k in 0..m {
            matrix[k * m + k] = ONE;
        }
        Self { roster, matrix }
    }

    /// Row-major matrix; `matrix[n * m + k]` is `U[n][k]`.
    pub fn from_matrix(roster: ModeRoster, matrix: Vec<Complex64>) -> Result<Self> {
        let m = roster.len();
        if matrix.len() != m * m {
            return Err(Error::invalid(format!("matrix has {} entries, roster needs {}", matrix.len(), m * m)));
        }
        Ok(Self { roster, matrix })
    }

    pub fn roster(&self) -> &ModeRoster {
        &self.roster
    }

    pub fn mode_count(&self) -> usize {
        self.roster.len()
    }

    pub fn entry(&self, out: usize, input: usize) -> Complex64 {
        self.matrix[out * self.mode_count() + input]
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    /// Largest entry of `|U^dagger U - 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        let m = self.mode_count();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let mut s = ZERO;
                for n in 0..m {
                    s += self.entry(n, i).conj() * self.entry(n, j);
                }
                if i == j {
                    s -= ONE;
                }
                worst = worst.max(s.norm());
            }
        }
        worst
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &LinearCircuit) -> Result<Self> {
        if self.roster != next.roster {
            return Err(Error::invalid("cannot compose circuits on different rosters"));
        }
        let m = self.mode_count();
        let mut out = vec![ZERO; m * m];
        for r in 0..m {
            for c in 0..m {
                let mut s = ZERO;
                for k in 0..m {
                    s += next.entry(r, k) * self.entry(k, c);
                }
                out[r * m + c] = s;
            }
        }
        Ok(Self { roster: self.roster.clone(), matrix: out })
    }
}

pub fn beamsplitter_unitary(roster: &ModeRoster, spec: BeamsplitterSpec) -> Result<LinearCircuit> {
    let m = roster.len();
    if spec.mode_a >= m || spec.mode_b >= m {
        return Err(Error::invalid("beamsplitter mode outside roster"));
    }
    let BeamsplitterSpec { mode_a: a, mode_b: b, reflectivity } = BeamsplitterSpec::new(spec.mode_a, spec.mode_b, spec.reflectivity)?;
    let r = reflectivity.sqrt();
    let t = (1.0 - reflectivity).sqrt();
    let mut c = LinearCircuit::identity(roster.clone());
    c.matrix[a * m + a] = Complex64::new(r, 0.0);
    c.matrix[b * m + a] = Complex64::new(-t, 0.0);
    c.matrix[a * m + b] = Complex64::new(t, 0.0);
    c.matrix[b * m + b] = Complex64::new(r, 0.0);
    Ok(c)
}

pub fn swap_unitary(roster: &ModeRoster, a: usize, b: usize) -> Result<LinearCircuit> {
    let m = roster.len();
    if a >= m || b >= m || a == b {
        return Err(Error::invalid("swap needs two distinct modes inside the roster"));
    }
    let mut c = LinearCircuit::identity(roster.clone());
    c.matrix[a * m + a] = ZERO;
    c.matrix[b * m + b] = ZERO;
    c.matrix[b * m + a] = ONE;
    c.matrix[a * m + b] = ONE;
    Ok(c)
}

/// Product of stages applied in order (first stage acts first).
pub fn compose(stages: &[LinearCircuit]) -> Result<LinearCircuit> {
    let (first, rest) = stages.split_first().ok_or_else(|| Error::invalid("nothing to compose"))?;
    rest.iter().try_fold(first.clone(), |acc, s| acc.then(s))
}

/// Pushes every creation operator through the circuit. Modes beyond the
/// circuit's roster pass through unchanged.
pub fn apply_circuit(circuit: &LinearCircuit, state: &PhotonicState) -> Result<PhotonicState> {
    let m = circuit.mode_count();
    if state.mode_count() < m {
        return Err(Error::invalid(format!("state has {} modes, circuit needs {m}", state.mode_count())));
    }
    let columns: Vec<Vec<(usize, Complex64)>> = (0..m)
        .map(|k| (0..m).filter_map(|n| Some((n, circuit.entry(n, k))).filter(|(_, u)| *u != ZERO)).collect())
        .collect();
    let mut acc = TermAccumulator::new();
    for term in state.terms() {
        let mut partial: Vec<(Complex64, PhotonList)> = vec![(term.coefficient, PhotonList::new())];
        for photon in &term.photons {
            if photon.mode >= m {
                for p in &mut partial {
                    p.1.push(*photon);
                }
                continue;
            }
            let col = &columns[photon.mode];
            let mut next = Vec::with_capacity(partial.len() * col.len());
            for (c, photons) in &partial {
                for &(n, u) in col {
                    let mut ps = photons.clone();
                    ps.push(crate::state::Photon { mode: n, packet: photon.packet });
                    next.push((c * u, ps));
                }
            }
            partial = next;
        }
        for (c, photons) in partial {
            acc.add(c, photons);
        }
    }
    Ok(acc.finish(state.mode_count()))
}

/// Text form of a circuit: a `modes` line followed by `bs` / `swap` lines.
///
/// ```text
/// modes: cH cV tH tV v1 v2 a1 a2
/// bs tH tV 0.5
/// swap cV a1
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitDescription {
    pub roster: ModeRoster,
    pub elements: Vec<Element>,
}

impl CircuitDescription {
    pub fn parse(text: &str) -> Result<Self> {
        let mut roster: Option<ModeRoster> = None;
        let mut elements = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let perr = |message: String| Error::Parse { line, message };
            let words: Vec<&str> = content.split_whitespace().collect();
            match words[0].trim_end_matches(':') {
                "modes" => {
                    if roster.is_some() {
                        return Err(perr("duplicate modes line".into()));
                    }
                    roster = Some(ModeRoster::new(words[1..].iter().copied()).map_err(|e| perr(e.to_string()))?);
                }
                "bs" | "swap" => {
                    let r = roster.as_ref().ok_or_else(|| perr("modes line must come first".into()))?;
                    let want = if words[0] == "bs" { 4 } else { 3 };
                    if words.len() != want {
                        return Err(perr(format!("'{}' takes {} arguments", words[0], want - 1)));
                    }
                    let a = r.index(words[1]).map_err(|e| perr(e.to_string()))?;
                    let b = r.index(words[2]).map_err(|e| perr(e.to_string()))?;
                    if a == b {
                        return Err(perr("element needs two distinct modes".into()));
                    }
                    if words[0] == "bs" {
                        let eta: f64 = words[3].parse().map_err(|_| perr(format!("bad reflectivity '{}'", words[3])))?;
                        let spec = BeamsplitterSpec::new(a, b, eta).map_err(|e| perr(e.to_string()))?;
                        elements.push(Element::Beamsplitter(spec));
                    } else {
                        elements.push(Element::Swap(a, b));
                    }
                }
                other => return Err(perr(format!("unknown directive '{other}'"))),
            }
        }
        let roster = roster.ok_or(Error::Parse { line: 0, message: "missing modes line".into() })?;
        Ok(Self { roster, elements })
    }

    pub fn to_circuit(&self) -> Result<LinearCircuit> {
        let stages = self
            .elements
            .iter()
            .map(|e| match *e {
                Element::Beamsplitter(spec) => beamsplitter_unitary(&self.roster, spec),
                Element::Swap(a, b) => swap_unitary(&self.roster, a, b),
            })
            .collect::<Result<Vec<_>>>()?;
        if stages.is_empty() {
            return Ok(LinearCircuit::identity(self.roster.clone()));
        }
        compose(&stages)
    }

    /// Reflectivities of the beamsplitters in file order.
    pub fn reflectivities(&self) -> Vec<f64> {
        self.elements
            .iter()
            .filter_map(|e| match e {
                Element::Beamsplitter(s) => Some(s.reflectivity),
                Element::Swap(..) => None,
            })
            .collect()
    }
}

impl fmt::Display for CircuitDescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "modes: {}", self.roster.labels().join(" "))?;
        let name = |i: usize| self.roster.label(i).unwrap_or("?");
        for e in &self.elements {
            match *e {
                Element::Beamsplitter(s) => writeln!(f, "bs {} {} {:?}", name(s.mode_a), name(s.mode_b), s.reflectivity)?,
                Element::Swap(a, b) => writeln!(f, "swap {} {}", name(a), name(b))?,
            }
        }
        Ok(())
    }
}

/// Mode labels of the heralded CNOT, in roster order.
pub const CNOT_MODES: [&str; 8] = ["cH", "cV", "tH", "tV", "v1", "v2", "a1", "a2"];

/// Reflectivities of the eight CNOT beamsplitters, ordered as
/// target-in, mixer-in, mixer-out, target-out, then the control-arm
/// ancilla and vacuum couplers and the target-arm ancilla and vacuum
/// couplers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CnotReflectivities(pub [f64; 8]);

impl Default for CnotReflectivities {
    fn default() -> Self {
        let r2 = std::f64::consts::SQRT_2;
        let coupler = (4.0 + r2) / 7.0;
        let vacuum = 5.0 - 3.0 * r2;
        Self([0.5, 0.5, 0.5, 0.5, coupler, vacuum, coupler, vacuum])
    }
}

/// Success probability of the ideal gate with default reflectivities.
pub fn ideal_cnot_success_probability() -> f64 {
    let t = (3.0 - std::f64::consts::SQRT_2) / 7.0;
    t * t
}

pub fn cnot_description(etas: &CnotReflectivities) -> Result<CircuitDescription> {
    let roster = ModeRoster::new(CNOT_MODES)?;
    let ix = |l: &str| roster.index(l);
    let [e1, e2, e3, e4, e5, e6, e7, e8] = etas.0;
    let bs = |a: &str, b: &str, eta: f64| -> Result<Element> { Ok(Element::Beamsplitter(BeamsplitterSpec::new(ix(a)?, ix(b)?, eta)?)) };
    let elements = vec![
        bs("tH", "tV", e1)?,
        bs("tV", "cV", e2)?,
        bs("cV", "a1", e5)?,
        bs("a1", "v1", e6)?,
        Element::Swap(ix("cV")?, ix("a1")?),
        bs("tV", "a2", e7)?,
        bs("a2", "v2", e8)?,
        Element::Swap(ix("tV")?, ix("a2")?),
        bs("cV", "tV", e3)?,
        bs("tV", "tH", e4)?,
    ];
    Ok(CircuitDescription { roster, elements })
}

/// The heralded CNOT: control on `cH/cV`, target on `tH/tV`, one ancilla
/// photon into each of `a1` and `a2`, vacuum into `v1` and `v2`. Success is
/// heralded by one photon in each of `a1`, `a2` and none in `v1`, `v2`.
pub fn build_cnot(etas: &CnotReflectivities) -> Result<LinearCircuit> {
    cnot_description(etas)?.to_circuit()
}
