#![allow(dead_code)]

use std::collections::HashMap;

use photonwave_core::quadrature::gauss_legendre;
use photonwave_core::spectral::{PacketTable, SpectralAmplitude};
use photonwave_core::state::{Photon, PhotonList, PhotonicState};
use photonwave_core::{Complex64, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Discrete frequency bins: each continuous mode becomes `nodes.len()`
/// independent oscillators with creation operator weights `sqrt(w_j) f(w_j)`.
pub struct FockGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl FockGrid {
    pub fn new(lo: f64, hi: f64, panels: usize, order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        let h = (hi - lo) / panels as f64;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for p in 0..panels {
            let a = lo + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(a + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    fn amplitudes(&self, packet: &SpectralAmplitude) -> Result<Vec<Complex64>> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(w, q)| Ok(packet.evaluate(*w)? * q.sqrt()))
            .collect()
    }

    /// Expands a state into discrete occupation monomials keyed by the sorted
    /// list of (mode, bin) labels.
    fn expand(&self, state: &PhotonicState, table: &PacketTable) -> Result<HashMap<Vec<(usize, usize)>, Complex64>> {
        let mut cache: HashMap<u32, Vec<Complex64>> = HashMap::new();
        let mut out: HashMap<Vec<(usize, usize)>, Complex64> = HashMap::new();
        for term in state.terms() {
            let mut rows = Vec::new();
            for p in &term.photons {
                if !cache.contains_key(&p.packet.0) {
                    cache.insert(p.packet.0, self.amplitudes(&*table.get(p.packet)?)?);
                }
                rows.push((p.mode, cache[&p.packet.0].clone()));
            }
            let bins = self.nodes.len();
            let n = rows.len();
            let total = bins.pow(n as u32);
            for flat in 0..total {
                let mut k = flat;
                let mut key = Vec::with_capacity(n);
                let mut amp = term.coefficient;
                for (mode, row) in &rows {
                    let j = k % bins;
                    k /= bins;
                    key.push((*mode, j));
                    amp *= row[j];
                }
                key.sort_unstable();
                *out.entry(key).or_insert(Complex64::new(0.0, 0.0)) += amp;
            }
        }
        Ok(out)
    }

    /// `<bra|ket>` from occupation-number algebra: `<n|n> = prod n_i!`.
    pub fn inner_product(&self, bra: &PhotonicState, ket: &PhotonicState, table: &PacketTable) -> Result<Complex64> {
        let a = self.expand(bra, table)?;
        let b = self.expand(ket, table)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (key, va) in &a {
            let Some(vb) = b.get(key) else { continue };
            let mut norm = 1.0;
            let mut run = 1;
            for i in 1..=key.len() {
                if i < key.len() && key[i] == key[i - 1] {
                    run += 1;
                } else {
                    norm *= (1..=run).product::<usize>() as f64;
                    run = 1;
                }
            }
            acc += va.conj() * vb * norm;
        }
        Ok(acc)
    }
}

/// Random state of at most `max_photons` photons per term on `modes` modes,
/// drawing packets from `packets`.
pub fn random_state(rng: &mut ChaCha8Rng, modes: usize, max_photons: usize, packets: &[photonwave_core::spectral::PacketId], terms: usize) -> PhotonicState {
    let items = (0..terms).map(|_| {
        let n = rng.random_range(0..=max_photons);
        let photons: PhotonList = (0..n)
            .map(|_| Photon { mode: rng.random_range(0..modes), packet: packets[rng.random_range(0..packets.len())] })
            .collect();
        (Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)), photons)
    });
    PhotonicState::from_terms(modes, items.collect::<Vec<_>>()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smallest eigenvalue of a Hermitian matrix stored row-major.
pub fn min_eigenvalue(n: usize, m: &[Complex64]) -> f64 {
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i * n + j]);
    mat.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Largest relative deviation between the permanent engine and the Fock-bin
/// oracle over `cases` random small states built from two shifted Gaussians.
pub fn permanent_oracle_error(seed: u64, cases: usize) -> Result<f64> {
    use photonwave_core::spectral::OverlapCache;
    let table = PacketTable::new();
    let mut r = rng(seed);
    let grid = FockGrid::new(-9.0, 9.0, 6, 16);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let k2 = r.random_range(0.6..1.6);
        let t1 = r.random_range(-1.5..1.5);
        let t2 = r.random_range(-1.5..1.5);
        let ids = [
            table.intern(SpectralAmplitude::gaussian(1.0)?.shifted(t1)?),
            table.intern(SpectralAmplitude::gaussian(k2)?.shifted(t2)?),
        ];
        let cache = OverlapCache::new();
        cache.populate(&table, &ids)?;
        let a = random_state(&mut r, 3, 3, &ids, 3);
        let b = random_state(&mut r, 3, 3, &ids, 3);
        for (x, y) in [(&a, &b), (&a, &a), (&b, &b)] {
            let exact = x.inner_product(y, &cache)?;
            let oracle = grid.inner_product(x, y, &table)?;
            let scale = exact.norm().max(1.0);
            worst = worst.max((exact - oracle).norm() / scale);
        }
    }
    Ok(worst)
}
