//! Multiphoton states as superpositions of creation-operator products.
//!
//! A term `c a†_{m1}[f1] a†_{m2}[f2] ... |0>` is stored unnormalised, so a
//! term with two photons in the same mode and packet has norm `2 |c|^2`.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::spectral::{OverlapCache, PacketId};

/// Terms whose coefficient magnitude falls below this are dropped.
pub const COEFFICIENT_CUTOFF: f64 = 1e-14;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Ordered, labelled list of optical modes.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ModeRoster {
    labels: Vec<String>,
}

impl ModeRoster {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut r = Self::default();
        for l in labels {
            r.push(l)?;
        }
        Ok(r)
    }

    /// Appends a mode and returns its index.
    pub fn push(&mut self, label: impl Into<String>) -> Result<usize> {
        let label = label.into();
        if label.is_empty() || label.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("bad mode label '{label}'")));
        }
        if self.labels.contains(&label) {
            return Err(Error::invalid(format!("duplicate mode label '{label}'")));
        }
        self.labels.push(label);
        Ok(self.labels.len() - 1)
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::invalid(format!("unknown mode '{label}'")))
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Photon {
    pub mode: usize,
    pub packet: PacketId,
}

pub type PhotonList = SmallVec<[Photon; 4]>;

#[derive(Clone, Debug, PartialEq)]
pub struct WavepacketTerm {
    pub coefficient: Complex64,
    /// Sorted by mode, then packet.
    pub photons: PhotonList,
}

impl WavepacketTerm {
    pub fn photon_count(&self) -> usize {
        self.photons.len()
    }

    pub fn count_in(&self, mode: usize) -> usize {
        self.photons.iter().filter(|p| p.mode == mode).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhotonicState {
    mode_count: usize,
    terms: Vec<WavepacketTerm>,
}

impl PhotonicState {
    pub fn vacuum(mode_count: usize) -> Self {
        Self {
            mode_count,
            terms: vec![WavepacketTerm { coefficient: Complex64::new(1.0, 0.0), photons: PhotonList::new() }],
        }
    }

    pub fn zero(mode_count: usize) -> Self {
        Self { mode_count, terms: Vec::new() }
    }

    pub fn single_photon(mode_count: usize, mode: usize, packet: PacketId) -> Result<Self> {
        if mode >= mode_count {
            return Err(Error::invalid(format!("mode {mode} outside roster of {mode_count}")));
        }
        let mut photons = PhotonList::new();
        photons.push(Photon { mode, packet });
        Ok(Self { mode_count, terms: vec![WavepacketTerm { coefficient: Complex64::new(1.0, 0.0), photons }] })
    }

    /// Builds a state from arbitrary `(coefficient, photons)` pairs, merging
    /// equal photon multisets and dropping negligible terms.
    pub fn from_terms<I>(mode_count: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Complex64, PhotonList)>,
    {
        let mut acc = TermAccumulator::new();
        for (c, photons) in terms {
            if let Some(p) = photons.iter().find(|p| p.mode >= mode_count) {
                return Err(Error::invalid(format!("photon in mode {} outside roster of {mode_count}", p.mode)));
            }
            if !c.is_finite() {
                return Err(Error::invalid("non-finite term coefficient"));
            }
            acc.add(c, photons);
        }
        Ok(acc.finish(mode_count))
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn terms(&self) -> &[WavepacketTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Same terms on a roster with extra trailing modes.
    pub fn with_mode_count(&self, mode_count: usize) -> Result<Self> {
        if mode_count < self.mode_count {
            return Err(Error::invalid("cannot shrink a state's roster"));
        }
        Ok(Self { mode_count, terms: self.terms.clone() })
    }

    /// Product of the two creation-operator polynomials acting on vacuum.
    pub fn tensor(&self, other: &PhotonicState) -> Result<Self> {
        if self.mode_count != other.mode_count {
            return Err(Error::invalid("tensor product needs states on the same roster"));
        }
        let mut acc = TermAccumulator::new();
        for a in &self.terms {
            for b in &other.terms {
                let mut photons = a.photons.clone();
                photons.extend(b.photons.iter().copied());
                acc.add(a.coefficient * b.coefficient, photons);
            }
        }
        Ok(acc.finish(self.mode_count))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut acc = TermAccumulator::new();
        for t in &self.terms {
            acc.add(t.coefficient * factor, t.photons.clone());
        }
        acc.finish(self.mode_count)
    }

    pub fn add(&self, other: &PhotonicState) -> Result<Self> {
        if self.mode_count != other.mode_count {
            return Err(Error::invalid("cannot add states on different rosters"));
        }
        let mut acc = TermAccumulator::new();
        for t in self.terms.iter().chain(&other.terms) {
            acc.add(t.coefficient, t.photons.clone());
        }
        Ok(acc.finish(self.mode_count))
    }

    /// Every packet id referenced by the state, sorted and deduplicated.
    pub fn packet_ids(&self) -> Vec<PacketId> {
        let mut ids: Vec<PacketId> = self.terms.iter().flat_map(|t| t.photons.iter().map(|p| p.packet)).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Total photon number of every term, if it is the same for all terms.
    pub fn photon_number(&self) -> Option<usize> {
        let mut it = self.terms.iter().map(WavepacketTerm::photon_count);
        let first = it.next()?;
        it.all(|n| n == first).then_some(first)
    }

    /// `<self|ket>`.
    pub fn inner_product(&self, ket: &PhotonicState, cache: &OverlapCache) -> Result<Complex64> {
        weighted_inner_product(self, ket, cache, |_| 1.0)
    }

    pub fn norm_squared(&self, cache: &OverlapCache) -> Result<f64> {
        Ok(self.inner_product(self, cache)?.re)
    }

    /// `<psi| N_a N_b |psi>`; `a == b` gives `<N_a^2>`.
    pub fn number_correlation(&self, a: usize, b: usize, cache: &OverlapCache) -> Result<f64> {
        let v = weighted_inner_product(self, self, cache, |modes| {
            let na = modes.iter().filter(|&&m| m == a).count();
            let nb = modes.iter().filter(|&&m| m == b).count();
            (na * nb) as f64
        })?;
        Ok(v.re)
    }
}

/// Sums terms keyed by their sorted photon list.
#[derive(Default)]
pub(crate) struct TermAccumulator {
    map: BTreeMap<PhotonList, Complex64>,
}

impl TermAccumulator {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(&mut self, c: Complex64, mut photons: PhotonList) {
        photons.sort_unstable();
        *self.map.entry(photons).or_insert(ZERO) += c;
    }

    pub(crate) fn finish(self, mode_count: usize) -> PhotonicState {
        let terms = self
            .map
            .into_iter()
            .filter(|(_, c)| c.norm() >= COEFFICIENT_CUTOFF)
            .map(|(photons, coefficient)| WavepacketTerm { coefficient, photons })
            .collect();
        PhotonicState { mode_count, terms }
    }
}

fn mode_signature(t: &WavepacketTerm) -> SmallVec<[usize; 4]> {
    t.photons.iter().map(|p| p.mode).collect()
}

/// `sum_{ij} conj(b_i) k_j w(modes) prod_modes perm(G)` over term pairs with
/// equal occupations.
pub(crate) fn weighted_inner_product<W>(bra: &PhotonicState, ket: &PhotonicState, cache: &OverlapCache, weight: W) -> Result<Complex64>
where
    W: Fn(&[usize]) -> f64,
{
    let mut by_occupation: HashMap<SmallVec<[usize; 4]>, Vec<usize>> = HashMap::new();
    for (j, t) in ket.terms.iter().enumerate() {
        by_occupation.entry(mode_signature(t)).or_default().push(j);
    }
    let mut total = ZERO;
    for b in &bra.terms {
        let sig = mode_signature(b);
        let Some(partners) = by_occupation.get(&sig) else { continue };
        let w = weight(&sig);
        if w == 0.0 {
            continue;
        }
        for &j in partners {
            let k = &ket.terms[j];
            let amp = term_overlap(&b.photons, &k.photons, cache)?;
            total += b.coefficient.conj() * k.coefficient * amp * w;
        }
    }
    Ok(total)
}

/// `<0| A_bra^dagger A_ket |0>` for two monomials with the same occupations:
/// the product over modes of the permanent of the packet-overlap matrix.
pub fn term_overlap(bra: &[Photon], ket: &[Photon], cache: &OverlapCache) -> Result<Complex64> {
    if bra.len() != ket.len() || bra.iter().zip(ket).any(|(x, y)| x.mode != y.mode) {
        return Ok(ZERO);
    }
    let mut total = Complex64::new(1.0, 0.0);
    let mut start = 0;
    while start < bra.len() {
        let mode = bra[start].mode;
        let mut end = start;
        while end < bra.len() && bra[end].mode == mode {
            end += 1;
        }
        let n = end - start;
        let v = match n {
            1 => cache.get(bra[start].packet, ket[start].packet)?,
            _ => {
                let mut m = Vec::with_capacity(n * n);
                for r in start..end {
                    for c in start..end {
                        m.push(cache.get(bra[r].packet, ket[c].packet)?);
                    }
                }
                permanent(&m, n)
            }
        };
        total *= v;
        start = end;
    }
    Ok(total)
}

/// Permanent of a row-major `n x n` matrix by Ryser's formula with Gray-code
/// updates.
pub fn permanent(m: &[Complex64], n: usize) -> Complex64 {
    assert_eq!(m.len(), n * n, "matrix must be n x n");
    match n {
        0 => return Complex64::new(1.0, 0.0),
        1 => return m[0],
        2 => return m[0] * m[3] + m[1] * m[2],
        _ => {}
    }
    let mut row_sums = vec![ZERO; n];
    let mut total = ZERO;
    let mut gray: u64 = 0;
    for k in 1u64..(1u64 << n) {
        let next = k ^ (k >> 1);
        let changed = (gray ^ next).trailing_zeros() as usize;
        let adding = next & (1 << changed) != 0;
        for (r, s) in row_sums.iter_mut().enumerate() {
            let v = m[r * n + changed];
            if adding {
                *s += v;
            } else {
                *s -= v;
            }
        }
        gray = next;
        let prod: Complex64 = row_sums.iter().product();
        if (n - gray.count_ones() as usize) % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{PacketTable, SpectralAmplitude};
    use approx::assert_abs_diff_eq;
    use smallvec::smallvec;

    fn naive_permanent(m: &[Complex64], n: usize) -> Complex64 {
        fn rec(m: &[Complex64], n: usize, row: usize, used: &mut Vec<bool>) -> Complex64 {
            if row == n {
                return Complex64::new(1.0, 0.0);
            }
            let mut s = ZERO;
            for c in 0..n {
                if !used[c] {
                    used[c] = true;
                    s += m[row * n + c] * rec(m, n, row + 1, used);
                    used[c] = false;
                }
            }
            s
        }
        rec(m, n, 0, &mut vec![false; n])
    }

    #[test]
    fn ryser_matches_expansion() {
        for n in 1..=6 {
            let m: Vec<Complex64> = (0..n * n)
                .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 1.3).cos()))
                .collect();
            let a = permanent(&m, n);
            let b = naive_permanent(&m, n);
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-11);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-11);
        }
    }

    #[test]
    fn permanent_of_ones_is_factorial() {
        let m = vec![Complex64::new(1.0, 0.0); 25];
        assert_abs_diff_eq!(permanent(&m, 5).re, 120.0, epsilon = 1e-9);
    }

    fn setup() -> (PacketTable, OverlapCache, PacketId, PacketId) {
        let t = PacketTable::new();
        let a = t.intern(SpectralAmplitude::gaussian(1.0).unwrap());
        let b = t.intern(SpectralAmplitude::gaussian(1.0).unwrap().shifted(1.0).unwrap());
        let c = OverlapCache::new();
        c.populate(&t, &[a, b]).unwrap();
        (t, c, a, b)
    }

    #[test]
    fn double_occupation_norm() {
        let (_t, cache, a, b) = setup();
        let one = PhotonicState::single_photon(2, 0, a).unwrap();
        let same = one.tensor(&one).unwrap();
        assert_abs_diff_eq!(same.norm_squared(&cache).unwrap(), 2.0, epsilon = 1e-12);
        let other = PhotonicState::single_photon(2, 0, b).unwrap();
        let mixed = one.tensor(&other).unwrap();
        let g = cache.get(a, b).unwrap().norm_sqr();
        assert_abs_diff_eq!(mixed.norm_squared(&cache).unwrap(), 1.0 + g, epsilon = 1e-12);
    }

    #[test]
    fn terms_merge_and_cancel() {
        let (_t, _cache, a, _b) = setup();
        let p: PhotonList = smallvec![Photon { mode: 1, packet: a }, Photon { mode: 0, packet: a }];
        let q: PhotonList = smallvec![Photon { mode: 0, packet: a }, Photon { mode: 1, packet: a }];
        let s = PhotonicState::from_terms(2, [(Complex64::new(1.0, 0.0), p.clone()), (Complex64::new(0.5, 0.0), q)]).unwrap();
        assert_eq!(s.terms().len(), 1);
        assert_abs_diff_eq!(s.terms()[0].coefficient.re, 1.5);
        let z = PhotonicState::from_terms(2, [(Complex64::new(1.0, 0.0), p.clone()), (Complex64::new(-1.0, 0.0), p)]).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn orthogonal_modes_do_not_overlap() {
        let (_t, cache, a, _) = setup();
        let x = PhotonicState::single_photon(2, 0, a).unwrap();
        let y = PhotonicState::single_photon(2, 1, a).unwrap();
        assert_eq!(x.inner_product(&y, &cache).unwrap(), ZERO);
    }

    #[test]
    fn number_correlations() {
        let (_t, cache, a, _) = setup();
        let x = PhotonicState::single_photon(2, 0, a).unwrap();
        let y = PhotonicState::single_photon(2, 1, a).unwrap();
        let s = x.tensor(&y).unwrap();
        assert_abs_diff_eq!(s.number_correlation(0, 1, &cache).unwrap(), 1.0, epsilon = 1e-12);
        let d = x.tensor(&x).unwrap();
        assert_abs_diff_eq!(d.number_correlation(0, 0, &cache).unwrap(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn roster_rules() {
        let mut r = ModeRoster::new(["a", "b"]).unwrap();
        assert_eq!(r.index("b").unwrap(), 1);
        assert!(r.push("a").is_err());
        assert!(r.index("zz").is_err());
        assert!(PhotonicState::single_photon(2, 2, PacketId(0)).is_err());
    }
}
