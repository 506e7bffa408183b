//! Single-photon spectral amplitudes and the pairwise overlap engine.
//!
//! Frequencies are measured from the common carrier in units of the
//! reference linewidth. The time-domain dual of an amplitude `a(w)` is
//! `F(t) = (2 pi)^{-1/2} \int a(w) e^{i w t} dw`, so a shift `tau` (which
//! multiplies `a` by `e^{i w tau}`) moves the temporal profile to `t = -tau`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use parking_lot::RwLock;
use rayon::prelude::*;

use crate::detection::{FrequencyResponse, TimeResponse};
use crate::error::{Error, Result};
use crate::quadrature::{self, AdaptiveOptions};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Gaussian tails beyond this many widths are dropped (`e^{-144}`).
const GAUSS_CUTOFF: f64 = 12.0;
/// Exponential tails beyond this many decay lengths are dropped.
const EXP_CUTOFF: f64 = 60.0;
/// Sampled grids with more nodes than this are not split at every node.
const MAX_GRID_BREAKPOINTS: usize = 8192;

/// Handle into a [`PacketTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PacketId(pub u32);

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Lorentzian,
    DownConversion,
    Sampled,
}

/// A tabulated complex spectrum, linearly interpolated and zero outside
/// its node range. Normalised on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSpectrum {
    omega: Vec<f64>,
    values: Vec<Complex64>,
}

impl SampledSpectrum {
    pub fn new(omega: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if omega.len() != values.len() {
            return Err(Error::invalid("frequency and amplitude columns differ in length"));
        }
        if omega.len() < 2 {
            return Err(Error::invalid("a sampled spectrum needs at least two nodes"));
        }
        if omega.iter().any(|w| !w.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sampled spectrum contains non-finite entries"));
        }
        if omega.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("sampled frequencies must be strictly increasing"));
        }
        let mut norm2 = 0.0;
        for k in 0..omega.len() - 1 {
            let h = omega[k + 1] - omega[k];
            let (z0, z1) = (values[k], values[k + 1]);
            norm2 += h * (z0.norm_sqr() + (z0.conj() * z1).re + z1.norm_sqr()) / 3.0;
        }
        if norm2 <= 0.0 {
            return Err(Error::invalid("sampled spectrum has zero norm"));
        }
        let s = norm2.sqrt();
        let values = values.into_iter().map(|v| v / s).collect();
        Ok(Self { omega, values })
    }

    /// Reads `omega,re,im` rows. A leading header row is skipped.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut omega = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 1;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if rec.len() != 3 {
                return Err(Error::Parse { line, message: format!("expected 3 columns, found {}", rec.len()) });
            }
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) => {
                    omega.push(v[0]);
                    values.push(Complex64::new(v[1], v[2]));
                }
                Err(_) if i == 0 => continue,
                Err(e) => return Err(Error::Parse { line, message: e.to_string() }),
            }
        }
        Self::new(omega, values)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv(file)
    }

    pub fn value(&self, w: f64) -> Complex64 {
        let n = self.omega.len();
        if w < self.omega[0] || w > self.omega[n - 1] {
            return ZERO;
        }
        let k = match self.omega.partition_point(|&x| x <= w) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (w0, w1) = (self.omega[k], self.omega[k + 1]);
        let u = (w - w0) / (w1 - w0);
        self.values[k] * (1.0 - u) + self.values[k + 1] * u
    }

    pub fn support(&self) -> (f64, f64) {
        (self.omega[0], self.omega[self.omega.len() - 1])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.omega
    }

    /// Root-mean-square spectral width about the origin.
    fn rms_width(&self) -> f64 {
        let mut m2 = 0.0;
        for k in 0..self.omega.len() - 1 {
            let h = self.omega[k + 1] - self.omega[k];
            let wm = 0.5 * (self.omega[k] + self.omega[k + 1]);
            let a = 0.5 * (self.values[k].norm_sqr() + self.values[k + 1].norm_sqr());
            m2 += h * a * wm * wm;
        }
        m2.sqrt().max(1e-6)
    }
}

/// Spectral line shape before any shift or filter.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Gaussian { kappa: f64 },
    Lorentzian { kappa: f64 },
    /// Down-conversion shape; `chi` is carried for bookkeeping only.
    DownConversion { kappa: f64, chi: f64 },
    Sampled(Arc<SampledSpectrum>),
}

impl Shape {
    pub fn family(&self) -> Family {
        match self {
            Shape::Gaussian { .. } => Family::Gaussian,
            Shape::Lorentzian { .. } => Family::Lorentzian,
            Shape::DownConversion { .. } => Family::DownConversion,
            Shape::Sampled(_) => Family::Sampled,
        }
    }

    fn kappa(&self) -> Option<f64> {
        match *self {
            Shape::Gaussian { kappa } | Shape::Lorentzian { kappa } | Shape::DownConversion { kappa, .. } => {
                Some(kappa)
            }
            Shape::Sampled(_) => None,
        }
    }

    pub fn value(&self, w: f64) -> Complex64 {
        match self {
            Shape::Gaussian { kappa } => {
                let n = (2.0 / (kappa * kappa * PI)).powf(0.25);
                Complex64::new(n * (-(w * w) / (kappa * kappa)).exp(), 0.0)
            }
            Shape::Lorentzian { kappa } => Complex64::new((kappa / PI).sqrt(), 0.0) / Complex64::new(*kappa, w),
            Shape::DownConversion { kappa, .. } => {
                Complex64::new((2.0 * kappa.powi(3) / PI).sqrt() / (kappa * kappa + w * w), 0.0)
            }
            Shape::Sampled(s) => s.value(w),
        }
    }
}

/// Which half of a filter a packet represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FilterBranch {
    /// Amplitude multiplied by the square root of the response.
    Transmitted,
    /// Amplitude multiplied by the square root of one minus the response.
    Complement,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyFilter {
    pub response: FrequencyResponse,
    pub branch: FilterBranch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeFilter {
    pub response: TimeResponse,
    pub branch: FilterBranch,
}

/// A single-photon spectral amplitude: a line shape, a time shift and
/// optional filter factors. The frequency factor acts before the time factor.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralAmplitude {
    shape: Shape,
    time_shift: f64,
    frequency_filter: Option<FrequencyFilter>,
    time_filter: Option<TimeFilter>,
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa.is_finite() && kappa > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("linewidth must be positive and finite, got {kappa}")))
    }
}

impl SpectralAmplitude {
    pub fn gaussian(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self::from_shape(Shape::Gaussian { kappa }))
    }

    pub fn lorentzian(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self::from_shape(Shape::Lorentzian { kappa }))
    }

    pub fn down_conversion(kappa: f64, chi: f64) -> Result<Self> {
        check_kappa(kappa)?;
        if !chi.is_finite() {
            return Err(Error::invalid("nonlinear coefficient must be finite"));
        }
        Ok(Self::from_shape(Shape::DownConversion { kappa, chi }))
    }

    pub fn sampled(spectrum: SampledSpectrum) -> Self {
        Self::from_shape(Shape::Sampled(Arc::new(spectrum)))
    }

    fn from_shape(shape: Shape) -> Self {
        Self { shape, time_shift: 0.0, frequency_filter: None, time_filter: None }
    }

    /// Adds `tau` to the packet's time shift.
    pub fn shifted(&self, tau: f64) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::invalid("time shift must be finite"));
        }
        let mut out = self.clone();
        out.time_shift += tau;
        Ok(out)
    }

    pub fn with_frequency_filter(&self, filter: FrequencyFilter) -> Result<Self> {
        if self.frequency_filter.is_some() || self.time_filter.is_some() {
            return Err(Error::invalid("a frequency filter can only be applied to an unfiltered packet"));
        }
        filter.response.validate()?;
        let mut out = self.clone();
        out.frequency_filter = Some(filter);
        Ok(out)
    }

    pub fn with_time_filter(&self, filter: TimeFilter) -> Result<Self> {
        if self.time_filter.is_some() {
            return Err(Error::invalid("packet already carries a time filter"));
        }
        filter.response.validate()?;
        let mut out = self.clone();
        out.time_filter = Some(filter);
        Ok(out)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn family(&self) -> Family {
        self.shape.family()
    }

    pub fn time_shift(&self) -> f64 {
        self.time_shift
    }

    pub fn frequency_filter(&self) -> Option<FrequencyFilter> {
        self.frequency_filter
    }

    pub fn time_filter(&self) -> Option<TimeFilter> {
        self.time_filter
    }

    /// Every packet is centred on the common carrier.
    pub fn center_frequency(&self) -> f64 {
        0.0
    }

    fn without_time_filter(&self) -> Self {
        let mut out = self.clone();
        out.time_filter = None;
        out
    }

    /// Square root of the frequency response seen by this packet.
    fn frequency_weight(&self, w: f64) -> f64 {
        filter_root(self.frequency_filter, w)
    }

    /// Amplitude including shift and frequency factor but not the time factor.
    fn frequency_core(&self, w: f64) -> Complex64 {
        let r = self.frequency_weight(w);
        if r == 0.0 {
            return ZERO;
        }
        self.shape.value(w) * Complex64::from_polar(r, w * self.time_shift)
    }

    /// Evaluates the amplitude at frequency `w`, all factors applied.
    pub fn evaluate(&self, w: f64) -> Result<Complex64> {
        if !w.is_finite() {
            return Err(Error::invalid("frequency must be finite"));
        }
        let Some(tf) = self.time_filter else {
            return Ok(self.frequency_core(w));
        };
        let base = self.frequency_core(w);
        let half = match tf.response {
            TimeResponse::Always => {
                return Ok(match tf.branch {
                    FilterBranch::Transmitted => base,
                    FilterBranch::Complement => ZERO,
                })
            }
            TimeResponse::RectWindow { half_width } => half_width,
        };
        let core = self.without_time_filter();
        let (lo, hi) = clip(core.time_extent(), (-half, half));
        let opts = AdaptiveOptions { initial_panels: oscillation_panels(hi - lo, w), ..Default::default() };
        let inside = try_integrate(
            |t| Ok(core.time_core(t)? * Complex64::from_polar(1.0, -w * t)),
            lo,
            hi,
            &core.time_kinks(),
            opts,
        )? / (2.0 * PI).sqrt();
        Ok(match tf.branch {
            FilterBranch::Transmitted => inside,
            FilterBranch::Complement => base - inside,
        })
    }

    /// Evaluates the time-domain dual at `t`, all factors applied.
    pub fn time_domain(&self, t: f64) -> Result<Complex64> {
        if !t.is_finite() {
            return Err(Error::invalid("time must be finite"));
        }
        let gate = match self.time_filter {
            None => 1.0,
            Some(tf) => {
                let eta = tf.response.value(t);
                match tf.branch {
                    FilterBranch::Transmitted => eta,
                    FilterBranch::Complement => 1.0 - eta,
                }
            }
        };
        if gate == 0.0 {
            return Ok(ZERO);
        }
        Ok(self.time_core(t)? * gate)
    }

    /// Gaussian width parameter `A` with `F(t) ~ exp(-(t + tau)^2 / 4A)`,
    /// when the time profile has that closed form.
    fn gaussian_time_parameter(&self) -> Option<f64> {
        let Shape::Gaussian { kappa } = self.shape else { return None };
        let base = 1.0 / (kappa * kappa);
        match root_factor(self.frequency_filter) {
            RootFactor::One => Some(base),
            RootFactor::Zero => None,
            RootFactor::SqrtMu(b) => Some(base + 0.5 / (b * b)),
            RootFactor::SqrtOneMinusMu(_) => None,
        }
    }

    fn has_closed_time_form(&self) -> bool {
        match self.shape {
            Shape::Gaussian { .. } => self.gaussian_time_parameter().is_some(),
            Shape::Lorentzian { .. } | Shape::DownConversion { .. } => {
                matches!(root_factor(self.frequency_filter), RootFactor::One)
            }
            Shape::Sampled(_) => false,
        }
    }

    /// Time profile ignoring the time factor.
    fn time_core(&self, t: f64) -> Result<Complex64> {
        if matches!(root_factor(self.frequency_filter), RootFactor::Zero) {
            return Ok(ZERO);
        }
        let s = t + self.time_shift;
        if self.has_closed_time_form() {
            let v = match self.shape {
                Shape::Gaussian { kappa } => {
                    let a = self.gaussian_time_parameter().expect("closed form");
                    let n = (2.0 / (kappa * kappa * PI)).powf(0.25);
                    n / (2.0 * a).sqrt() * (-s * s / (4.0 * a)).exp()
                }
                Shape::Lorentzian { kappa } => {
                    if s >= 0.0 {
                        (2.0 * kappa).sqrt() * (-kappa * s).exp()
                    } else {
                        0.0
                    }
                }
                Shape::DownConversion { kappa, .. } => kappa.sqrt() * (-kappa * s.abs()).exp(),
                Shape::Sampled(_) => unreachable!(),
            };
            return Ok(Complex64::new(v, 0.0));
        }
        let Some((lo, hi)) = self.frequency_support() else {
            return Err(Error::NumericConvergence { estimate: ZERO, relative_change: f64::INFINITY });
        };
        let opts = AdaptiveOptions { initial_panels: oscillation_panels(hi - lo, s), ..Default::default() };
        let v = try_integrate(
            |w| Ok(self.frequency_core(w) * Complex64::from_polar(1.0, w * t)),
            lo,
            hi,
            &self.frequency_breakpoints(),
            opts,
        )?;
        Ok(v / (2.0 * PI).sqrt())
    }

    /// Interval outside which the frequency-domain amplitude is negligible,
    /// or `None` for heavy-tailed amplitudes.
    fn frequency_support(&self) -> Option<(f64, f64)> {
        let mut sup = match &self.shape {
            Shape::Gaussian { kappa } => Some((-GAUSS_CUTOFF * kappa, GAUSS_CUTOFF * kappa)),
            Shape::Sampled(s) => Some(s.support()),
            _ => None,
        };
        match root_factor(self.frequency_filter) {
            RootFactor::Zero => return Some((0.0, 0.0)),
            RootFactor::SqrtMu(b) => {
                let band = (-GAUSS_CUTOFF * b, GAUSS_CUTOFF * b);
                sup = Some(match sup {
                    Some(s) => clip(s, band),
                    None => band,
                });
            }
            _ => {}
        }
        sup
    }

    fn frequency_breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Sampled(s) if s.nodes().len() <= MAX_GRID_BREAKPOINTS => s.nodes().to_vec(),
            _ => vec![0.0],
        }
    }

    /// Interval outside which the time profile (without time factor) is negligible.
    fn time_extent(&self) -> (f64, f64) {
        let c = -self.time_shift;
        if let Some(a) = self.gaussian_time_parameter() {
            let h = 2.0 * GAUSS_CUTOFF * a.sqrt();
            return (c - h, c + h);
        }
        let blur = match root_factor(self.frequency_filter) {
            RootFactor::SqrtMu(b) => 2.0 * GAUSS_CUTOFF / b,
            RootFactor::SqrtOneMinusMu(b) => 2.0 * GAUSS_CUTOFF / b,
            _ => 0.0,
        };
        match self.shape {
            Shape::Gaussian { kappa } => {
                let h = 2.0 * GAUSS_CUTOFF / kappa + blur;
                (c - h, c + h)
            }
            Shape::Lorentzian { kappa } => (c - blur, c + EXP_CUTOFF / kappa + blur),
            Shape::DownConversion { kappa, .. } => {
                let h = EXP_CUTOFF / kappa + blur;
                (c - h, c + h)
            }
            Shape::Sampled(ref s) => {
                let h = 100.0 / s.rms_width() + blur;
                (c - h, c + h)
            }
        }
    }

    fn time_kinks(&self) -> Vec<f64> {
        let c = -self.time_shift;
        match self.shape {
            Shape::Lorentzian { .. } | Shape::DownConversion { .. } => vec![c],
            _ => Vec::new(),
        }
    }

    /// Squared norm `<f|f>`.
    pub fn norm_squared(&self) -> Result<f64> {
        Ok(overlap(self, self)?.re)
    }
}

impl Eq for SpectralAmplitude {}

impl Hash for SpectralAmplitude {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match &self.shape {
            Shape::Gaussian { kappa } => (0u8, kappa.to_bits()).hash(state),
            Shape::Lorentzian { kappa } => (1u8, kappa.to_bits()).hash(state),
            Shape::DownConversion { kappa, chi } => (2u8, kappa.to_bits(), chi.to_bits()).hash(state),
            Shape::Sampled(s) => {
                3u8.hash(state);
                s.omega.len().hash(state);
                for (w, v) in s.omega.iter().zip(&s.values) {
                    (w.to_bits(), v.re.to_bits(), v.im.to_bits()).hash(state);
                }
            }
        }
        self.time_shift.to_bits().hash(state);
        if let Some(f) = self.frequency_filter {
            f.branch.hash(state);
            f.response.hash_bits(state);
        }
        if let Some(f) = self.time_filter {
            f.branch.hash(state);
            f.response.hash_bits(state);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum RootFactor {
    One,
    Zero,
    SqrtMu(f64),
    SqrtOneMinusMu(f64),
}

fn root_factor(filter: Option<FrequencyFilter>) -> RootFactor {
    match filter {
        None => RootFactor::One,
        Some(FrequencyFilter { response: FrequencyResponse::Flat, branch }) => match branch {
            FilterBranch::Transmitted => RootFactor::One,
            FilterBranch::Complement => RootFactor::Zero,
        },
        Some(FrequencyFilter { response: FrequencyResponse::GaussianBand { bandwidth }, branch }) => match branch {
            FilterBranch::Transmitted => RootFactor::SqrtMu(bandwidth),
            FilterBranch::Complement => RootFactor::SqrtOneMinusMu(bandwidth),
        },
    }
}

fn filter_root(filter: Option<FrequencyFilter>, w: f64) -> f64 {
    match filter {
        None => 1.0,
        Some(f) => {
            let mu = f.response.value(w);
            match f.branch {
                FilterBranch::Transmitted => mu.sqrt(),
                FilterBranch::Complement => (1.0 - mu).max(0.0).sqrt(),
            }
        }
    }
}

fn clip(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.max(b.0), a.1.min(b.1))
}

fn oscillation_panels(width: f64, rate: f64) -> usize {
    let cycles = width * rate.abs() / (2.0 * PI);
    ((cycles / 4.0).ceil() as usize).clamp(2, 4096)
}

/// Adaptive integration of a fallible integrand; the first error wins.
fn try_integrate<F>(f: F, a: f64, b: f64, breaks: &[f64], opts: AdaptiveOptions) -> Result<Complex64>
where
    F: Fn(f64) -> Result<Complex64>,
{
    let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
    let g = |x: f64| match f(x) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            ZERO
        }
    };
    let v = quadrature::integrate(g, a, b, breaks, opts);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    v
}

/// How a product of two frequency factors decomposes.
#[derive(Clone, Copy, Debug)]
enum Weight {
    One,
    /// `exp(-s w^2)`
    Gauss(f64),
    General,
}

fn weight_terms(f: &SpectralAmplitude, g: &SpectralAmplitude) -> Vec<(f64, Weight)> {
    use RootFactor::*;
    let (a, b) = (root_factor(f.frequency_filter), root_factor(g.frequency_filter));
    let s = |x: RootFactor| match x {
        SqrtMu(bw) => Some(0.5 / (bw * bw)),
        One => Some(0.0),
        _ => None,
    };
    match (a, b) {
        (Zero, _) | (_, Zero) => Vec::new(),
        (One, One) => vec![(1.0, Weight::One)],
        (SqrtOneMinusMu(b1), SqrtOneMinusMu(b2)) if b1 == b2 => {
            vec![(1.0, Weight::One), (-1.0, Weight::Gauss(1.0 / (b1 * b1)))]
        }
        _ => match (s(a), s(b)) {
            (Some(x), Some(y)) => vec![(1.0, Weight::Gauss(x + y))],
            _ => vec![(1.0, Weight::General)],
        },
    }
}

/// `<f|g>` for two single-photon amplitudes.
///
/// Closed forms are used for same-family pairs and for Gaussian pairs seen
/// through Gaussian bands; analytic time profiles are integrated in time;
/// everything else is integrated in frequency.
pub fn overlap(f: &SpectralAmplitude, g: &SpectralAmplitude) -> Result<Complex64> {
    if f.time_filter.is_none() && g.time_filter.is_none() {
        return frequency_overlap(f, g);
    }
    let (f0, g0) = (f.without_time_filter(), g.without_time_filter());
    let mut total = ZERO;
    for (c, half) in window_terms(f.time_filter, g.time_filter) {
        let part = match half {
            None => frequency_overlap(&f0, &g0)?,
            Some(h) => time_overlap(&f0, &g0, (-h, h))?,
        };
        total += part * c;
    }
    Ok(total)
}

/// Expands a product of two time factors as `sum c * eta_T` where `None`
/// stands for the constant 1. Valid because windows are 0/1 valued.
fn window_terms(a: Option<TimeFilter>, b: Option<TimeFilter>) -> Vec<(f64, Option<f64>)> {
    fn expand(f: Option<TimeFilter>) -> Vec<(f64, Option<f64>)> {
        match f {
            None => vec![(1.0, None)],
            Some(TimeFilter { response: TimeResponse::Always, branch }) => match branch {
                FilterBranch::Transmitted => vec![(1.0, None)],
                FilterBranch::Complement => Vec::new(),
            },
            Some(TimeFilter { response: TimeResponse::RectWindow { half_width }, branch }) => match branch {
                FilterBranch::Transmitted => vec![(1.0, Some(half_width))],
                FilterBranch::Complement => vec![(1.0, None), (-1.0, Some(half_width))],
            },
        }
    }
    let mut out: Vec<(f64, Option<f64>)> = Vec::new();
    for (ca, ha) in expand(a) {
        for (cb, hb) in expand(b) {
            let h = match (ha, hb) {
                (None, x) | (x, None) => x,
                (Some(x), Some(y)) => Some(x.min(y)),
            };
            match out.iter_mut().find(|(_, k)| *k == h) {
                Some(slot) => slot.0 += ca * cb,
                None => out.push((ca * cb, h)),
            }
        }
    }
    out.retain(|(c, _)| *c != 0.0);
    out
}

fn frequency_overlap(f: &SpectralAmplitude, g: &SpectralAmplitude) -> Result<Complex64> {
    let mut total = ZERO;
    for (c, w) in weight_terms(f, g) {
        let part = match w {
            Weight::One => plain_overlap(f, g)?,
            Weight::Gauss(s) => gauss_weighted_overlap(f, g, s)?,
            Weight::General => {
                numeric_frequency_overlap(f, g, |w| filter_root(f.frequency_filter, w) * filter_root(g.frequency_filter, w), None)?
            }
        };
        total += part * c;
    }
    Ok(total)
}

/// Overlap of the bare shapes (shift included, filters ignored).
fn plain_overlap(f: &SpectralAmplitude, g: &SpectralAmplitude) -> Result<Complex64> {
    let (tf, tg) = (f.time_shift, g.time_shift);
    match (&f.shape, &g.shape) {
        (Shape::Gaussian { kappa: k1 }, Shape::Gaussian { kappa: k2 }) => Ok(gaussian_kernel(*k1, *k2, tg - tf, 0.0)),
        (Shape::Lorentzian { kappa: k1 }, Shape::Lorentzian { kappa: k2 }) => {
            Ok(Complex64::new(lorentzian_kernel(*k1, -tf, *k2, -tg), 0.0))
        }
        (Shape::DownConversion { kappa: k1, .. }, Shape::DownConversion { kappa: k2, .. }) => {
            Ok(Complex64::new(down_conversion_kernel(*k1, -tf, *k2, -tg), 0.0))
        }
        (a, b) if a.family() != Family::Sampled && b.family() != Family::Sampled => {
            let (f0, g0) = (bare(f), bare(g));
            time_overlap(&f0, &g0, (f64::NEG_INFINITY, f64::INFINITY))
        }
        _ => numeric_frequency_overlap(f, g, |_| 1.0, None),
    }
}

fn bare(f: &SpectralAmplitude) -> SpectralAmplitude {
    SpectralAmplitude { shape: f.shape.clone(), time_shift: f.time_shift, frequency_filter: None, time_filter: None }
}

fn gauss_weighted_overlap(f: &SpectralAmplitude, g: &SpectralAmplitude, s: f64) -> Result<Complex64> {
    if s == 0.0 {
        return plain_overlap(f, g);
    }
    if let (Shape::Gaussian { kappa: k1 }, Shape::Gaussian { kappa: k2 }) = (&f.shape, &g.shape) {
        return Ok(gaussian_kernel(*k1, *k2, g.time_shift - f.time_shift, s));
    }
    let reach = (GAUSS_CUTOFF * GAUSS_CUTOFF / s).sqrt();
    numeric_frequency_overlap(f, g, |w| (-s * w * w).exp(), Some((-reach, reach)))
}

/// `\int N1 N2 exp(-w^2/k1^2 - w^2/k2^2 - s w^2 + i w d) dw`
fn gaussian_kernel(k1: f64, k2: f64, d: f64, s: f64) -> Complex64 {
    let n1 = (2.0 / (k1 * k1 * PI)).powf(0.25);
    let n2 = (2.0 / (k2 * k2 * PI)).powf(0.25);
    let a = 1.0 / (k1 * k1) + 1.0 / (k2 * k2) + s;
    Complex64::new(n1 * n2 * (PI / a).sqrt() * (-d * d / (4.0 * a)).exp(), 0.0)
}

/// Causal exponentials starting at `s1` and `s2`.
fn lorentzian_kernel(k1: f64, s1: f64, k2: f64, s2: f64) -> f64 {
    let m = s1.max(s2);
    2.0 * (k1 * k2).sqrt() / (k1 + k2) * (-k1 * (m - s1) - k2 * (m - s2)).exp()
}

/// Two-sided exponentials centred on `c1` and `c2`.
fn down_conversion_kernel(k1: f64, c1: f64, k2: f64, c2: f64) -> f64 {
    let (ka, a, kb, b) = if c1 <= c2 { (k1, c1, k2, c2) } else { (k2, c2, k1, c1) };
    let d = b - a;
    let outer = ((-kb * d).exp() + (-ka * d).exp()) / (ka + kb);
    let delta = kb - ka;
    let middle = if delta == 0.0 {
        d * (-ka * d).exp()
    } else {
        (-ka * d).exp() * -(-delta * d).exp_m1() / delta
    };
    (ka * kb).sqrt() * (outer + middle)
}

/// `\int conj(f(w)) g(w) weight(w) dw` by adaptive quadrature over the
/// common support (mapped to a finite interval when unbounded).
fn numeric_frequency_overlap<W: Fn(f64) -> f64>(
    f: &SpectralAmplitude,
    g: &SpectralAmplitude,
    weight: W,
    extra: Option<(f64, f64)>,
) -> Result<Complex64> {
    let (f0, g0) = (f.without_time_filter(), g.without_time_filter());
    let integrand = |w: f64| {
        let r = weight(w);
        if r == 0.0 {
            return ZERO;
        }
        (f0.shape.value(w).conj() * g0.shape.value(w))
            * Complex64::from_polar(r, w * (g0.time_shift - f0.time_shift))
    };
    let sup = [f0.frequency_support(), g0.frequency_support(), extra]
        .into_iter()
        .flatten()
        .reduce(clip);
    let mut breaks = f0.frequency_breakpoints();
    breaks.extend(g0.frequency_breakpoints());
    let dt = (g0.time_shift - f0.time_shift).abs();
    match sup {
        Some((lo, hi)) => {
            if hi <= lo {
                return Ok(ZERO);
            }
            let opts = AdaptiveOptions { initial_panels: oscillation_panels(hi - lo, dt), ..Default::default() };
            quadrature::integrate(integrand, lo, hi, &breaks, opts)
        }
        None => {
            let scale = f0.shape.kappa().into_iter().chain(g0.shape.kappa()).fold(1.0, f64::max);
            let opts = AdaptiveOptions { initial_panels: 8, ..Default::default() };
            quadrature::integrate_real_line(integrand, 0.0, scale, opts)
        }
    }
}

/// `\int_{window} conj(F(t)) G(t) dt` using the time profiles without time factors.
fn time_overlap(f: &SpectralAmplitude, g: &SpectralAmplitude, window: (f64, f64)) -> Result<Complex64> {
    let (lo, hi) = clip(clip(f.time_extent(), g.time_extent()), window);
    if hi <= lo {
        return Ok(ZERO);
    }
    let mut breaks = f.time_kinks();
    breaks.extend(g.time_kinks());
    let opts = AdaptiveOptions { initial_panels: 4, ..Default::default() };
    try_integrate(|t| Ok(f.time_core(t)?.conj() * g.time_core(t)?), lo, hi, &breaks, opts)
}

/// `\int eta(t) conj(f(t)) g(t) dt`, evaluated in the time domain.
pub fn windowed_overlap(f: &SpectralAmplitude, g: &SpectralAmplitude, window: TimeResponse) -> Result<Complex64> {
    window.validate()?;
    let mut range = clip(f.time_extent(), g.time_extent());
    if let TimeResponse::RectWindow { half_width } = window {
        range = clip(range, (-half_width, half_width));
    }
    if range.1 <= range.0 {
        return Ok(ZERO);
    }
    let mut breaks = f.time_kinks();
    breaks.extend(g.time_kinks());
    for tf in [f.time_filter, g.time_filter].into_iter().flatten() {
        if let TimeResponse::RectWindow { half_width } = tf.response {
            breaks.extend([-half_width, half_width]);
        }
    }
    let opts = AdaptiveOptions { initial_panels: 4, ..Default::default() };
    try_integrate(|t| Ok(f.time_domain(t)?.conj() * g.time_domain(t)?), range.0, range.1, &breaks, opts)
}

/// Brute-force `<f|g>` by frequency quadrature of the evaluated amplitudes.
/// Slow; intended as an independent check on [`overlap`].
pub fn overlap_by_quadrature(f: &SpectralAmplitude, g: &SpectralAmplitude, lo: f64, hi: f64, points: usize) -> Result<Complex64> {
    let grid = quadrature::FrequencyGrid::new(lo, hi, points, quadrature::QuadratureRule::CompositeGaussLegendre)?;
    let (x, w) = grid.nodes_and_weights();
    let mut acc = ZERO;
    for (xi, wi) in x.iter().zip(&w) {
        acc += f.evaluate(*xi)?.conj() * g.evaluate(*xi)? * *wi;
    }
    Ok(acc)
}

/// Interning table of packets; equal packets share an id.
#[derive(Debug, Default)]
pub struct PacketTable {
    inner: RwLock<TableInner>,
}

#[derive(Debug, Default)]
struct TableInner {
    packets: Vec<Arc<SpectralAmplitude>>,
    index: HashMap<Arc<SpectralAmplitude>, PacketId>,
}

impl PacketTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&self, packet: SpectralAmplitude) -> PacketId {
        if let Some(id) = self.inner.read().index.get(&packet) {
            return *id;
        }
        let mut inner = self.inner.write();
        if let Some(id) = inner.index.get(&packet) {
            return *id;
        }
        let id = PacketId(inner.packets.len() as u32);
        let p = Arc::new(packet);
        inner.packets.push(p.clone());
        inner.index.insert(p, id);
        id
    }

    pub fn get(&self, id: PacketId) -> Result<Arc<SpectralAmplitude>> {
        self.inner
            .read()
            .packets
            .get(id.0 as usize)
            .cloned()
            .ok_or_else(|| Error::invalid(format!("unknown packet {id}")))
    }

    pub fn len(&self) -> usize {
        self.inner.read().packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Precomputed pairwise overlaps. Lookups of pairs that were never
/// populated are errors, never silent zeros.
#[derive(Debug, Default)]
pub struct OverlapCache {
    entries: RwLock<HashMap<(PacketId, PacketId), Complex64>>,
}

impl OverlapCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Computes every missing pair among `ids`.
    pub fn populate(&self, table: &PacketTable, ids: &[PacketId]) -> Result<()> {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let missing: Vec<(PacketId, PacketId)> = {
            let entries = self.entries.read();
            let mut v = Vec::new();
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i..] {
                    if !entries.contains_key(&(a, b)) {
                        v.push((a, b));
                    }
                }
            }
            v
        };
        if missing.is_empty() {
            return Ok(());
        }
        let computed: Vec<((PacketId, PacketId), Complex64)> = missing
            .par_iter()
            .map(|&(a, b)| {
                let (pa, pb) = (table.get(a)?, table.get(b)?);
                let mut v = overlap(&pa, &pb)?;
                if a == b {
                    v = Complex64::new(v.re, 0.0);
                }
                Ok(((a, b), v))
            })
            .collect::<Result<_>>()?;
        self.entries.write().extend(computed);
        Ok(())
    }

    /// `<a|b>`.
    pub fn get(&self, a: PacketId, b: PacketId) -> Result<Complex64> {
        let entries = self.entries.read();
        if a <= b {
            entries.get(&(a, b)).copied()
        } else {
            entries.get(&(b, a)).map(|v| v.conj())
        }
        .ok_or(Error::MissingOverlap(a, b))
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parses `gaussian(kappa=1.0,tau=0.25)`, `lorentzian(kappa=1)`,
/// `dc(kappa=1,chi=0.1)` or `grid(file=path.csv)`. Relative grid paths are
/// resolved against `base`.
pub fn parse_packet_spec(spec: &str, base: Option<&Path>) -> Result<SpectralAmplitude> {
    let (name, args) = split_call(spec)?;
    let mut kappa = None;
    let mut tau = 0.0;
    let mut chi = 0.0;
    let mut file = None;
    for (k, v) in args {
        match k.as_str() {
            "kappa" => kappa = Some(parse_number(&k, &v)?),
            "tau" => tau = parse_number(&k, &v)?,
            "chi" => chi = parse_number(&k, &v)?,
            "file" => file = Some(v),
            other => return Err(Error::invalid(format!("unknown packet parameter '{other}'"))),
        }
    }
    let kappa = || kappa.ok_or_else(|| Error::invalid(format!("packet '{name}' needs kappa")));
    let packet = match name.as_str() {
        "gaussian" | "gauss" => SpectralAmplitude::gaussian(kappa()?)?,
        "lorentzian" => SpectralAmplitude::lorentzian(kappa()?)?,
        "dc" | "downconversion" => SpectralAmplitude::down_conversion(kappa()?, chi)?,
        "grid" => {
            let f = file.ok_or_else(|| Error::invalid("grid packet needs file=..."))?;
            let p = Path::new(&f);
            let p = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.to_path_buf(),
            };
            SpectralAmplitude::sampled(SampledSpectrum::from_csv_path(&p)?)
        }
        other => return Err(Error::invalid(format!("unknown packet family '{other}'"))),
    };
    packet.shifted(tau)
}

/// Splits `name(k=v,k=v)` into its parts; bare `name` has no arguments.
pub(crate) fn split_call(spec: &str) -> Result<(String, Vec<(String, String)>)> {
    let s = spec.trim();
    let Some(open) = s.find('(') else {
        if s.is_empty() || !s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::invalid(format!("malformed specifier '{spec}'")));
        }
        return Ok((s.to_ascii_lowercase(), Vec::new()));
    };
    if !s.ends_with(')') {
        return Err(Error::invalid(format!("missing ')' in '{spec}'")));
    }
    let name = s[..open].trim().to_ascii_lowercase();
    let body = &s[open + 1..s.len() - 1];
    let mut args = Vec::new();
    for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected key=value, found '{part}'")))?;
        args.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    Ok((name, args))
}

pub(crate) fn parse_number(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::invalid(format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(Error::invalid(format!("{key} must be finite")));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn transmitted_band(b: f64) -> FrequencyFilter {
        FrequencyFilter { response: FrequencyResponse::GaussianBand { bandwidth: b }, branch: FilterBranch::Transmitted }
    }

    fn complement_band(b: f64) -> FrequencyFilter {
        FrequencyFilter { response: FrequencyResponse::GaussianBand { bandwidth: b }, branch: FilterBranch::Complement }
    }

    fn families(kappa: f64) -> Vec<SpectralAmplitude> {
        vec![
            SpectralAmplitude::gaussian(kappa).unwrap(),
            SpectralAmplitude::lorentzian(kappa).unwrap(),
            SpectralAmplitude::down_conversion(kappa, 0.3).unwrap(),
        ]
    }

    #[test]
    fn shapes_are_normalised() {
        for k in [0.5, 1.0, 2.3] {
            for p in families(k) {
                assert_abs_diff_eq!(p.norm_squared().unwrap(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lorentzian_closed_form_matches_frequency_quadrature() {
        let f = SpectralAmplitude::lorentzian(1.0).unwrap().shifted(0.4).unwrap();
        let g = SpectralAmplitude::lorentzian(1.7).unwrap().shifted(-0.3).unwrap();
        let closed = overlap(&f, &g).unwrap();
        let numeric = numeric_frequency_overlap(&f, &g, |_| 1.0, Some((-4000.0, 4000.0))).unwrap();
        assert_abs_diff_eq!(closed.re, numeric.re, epsilon = 1e-5);
        assert_abs_diff_eq!(closed.im, numeric.im, epsilon = 1e-5);
    }

    #[test]
    fn down_conversion_closed_form_matches_time_quadrature() {
        for (k1, k2) in [(1.0, 1.0), (0.7, 1.9), (1.0, 1.0 + 1e-12)] {
            let f = SpectralAmplitude::down_conversion(k1, 0.0).unwrap().shifted(0.2).unwrap();
            let g = SpectralAmplitude::down_conversion(k2, 0.0).unwrap().shifted(-1.1).unwrap();
            let closed = overlap(&f, &g).unwrap();
            let numeric = time_overlap(&f, &g, (f64::NEG_INFINITY, f64::INFINITY)).unwrap();
            assert_abs_diff_eq!(closed.re, numeric.re, epsilon = 1e-10);
        }
    }

    #[test]
    fn cross_family_overlap_is_hermitian() {
        let f = SpectralAmplitude::gaussian(1.0).unwrap().shifted(0.5).unwrap();
        let g = SpectralAmplitude::lorentzian(1.2).unwrap();
        let a = overlap(&f, &g).unwrap();
        let b = overlap(&g, &f).unwrap();
        assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
        assert_abs_diff_eq!(a.im, -b.im, epsilon = 1e-12);
        assert!(a.norm() < 1.0);
    }

    #[test]
    fn time_profiles_match_numeric_inverse_transform() {
        for p in families(1.3) {
            let p = p.shifted(0.3).unwrap();
            for t in [-2.0, -0.5, 0.1, 1.7] {
                let closed = p.time_domain(t).unwrap();
                let numeric = quadrature::integrate_real_line(
                    |w| p.evaluate(w).unwrap() * Complex64::from_polar(1.0, w * t),
                    0.0,
                    1.0,
                    AdaptiveOptions { relative_tolerance: 1e-7, max_refinements: 8, initial_panels: 64 },
                );
                if let Ok(n) = numeric {
                    let n = n / (2.0 * PI).sqrt();
                    assert_abs_diff_eq!(closed.re, n.re, epsilon = 2e-4);
                }
            }
        }
    }

    #[test]
    fn positive_shift_moves_profile_earlier() {
        let p = SpectralAmplitude::gaussian(1.0).unwrap().shifted(2.0).unwrap();
        let at = |t: f64| p.time_domain(t).unwrap().norm();
        assert!(at(-2.0) > at(-1.9) && at(-2.0) > at(-2.1));
    }

    #[test]
    fn parseval_holds_for_every_family() {
        for p in families(0.9) {
            let q = p.shifted(0.7).unwrap();
            let freq = overlap(&p, &q).unwrap();
            let time = windowed_overlap(&p, &q, TimeResponse::Always).unwrap();
            assert_abs_diff_eq!(freq.re, time.re, epsilon = 1e-9);
            assert_abs_diff_eq!(freq.im, time.im, epsilon = 1e-9);
        }
    }

    #[test]
    fn band_split_conserves_overlap() {
        for p in families(1.0) {
            let q = p.shifted(0.6).unwrap();
            let b = 1.4;
            let seen = overlap(&p.with_frequency_filter(transmitted_band(b)).unwrap(), &q.with_frequency_filter(transmitted_band(b)).unwrap()).unwrap();
            let lost = overlap(&p.with_frequency_filter(complement_band(b)).unwrap(), &q.with_frequency_filter(complement_band(b)).unwrap()).unwrap();
            let full = overlap(&p, &q).unwrap();
            assert_abs_diff_eq!((seen + lost).re, full.re, epsilon = 1e-10);
        }
    }

    #[test]
    fn complement_band_matches_brute_force() {
        let p = SpectralAmplitude::gaussian(1.0).unwrap();
        let q = p.shifted(0.8).unwrap();
        let (a, b) = (p.with_frequency_filter(complement_band(0.9)).unwrap(), q.with_frequency_filter(complement_band(0.9)).unwrap());
        let fast = overlap(&a, &b).unwrap();
        let slow = overlap_by_quadrature(&a, &b, -14.0, 14.0, 2048).unwrap();
        assert_abs_diff_eq!(fast.re, slow.re, epsilon = 1e-10);
        assert_abs_diff_eq!(fast.im, slow.im, epsilon = 1e-10);
    }

    #[test]
    fn seen_and_lost_halves_are_cross_orthogonal_in_total() {
        // <s f|s g> + <c f|c g> reproduces <f|g>; the cross term <s f|c g> need not vanish.
        let p = SpectralAmplitude::gaussian(1.0).unwrap();
        let s = p.with_frequency_filter(transmitted_band(1.0)).unwrap();
        let c = p.with_frequency_filter(complement_band(1.0)).unwrap();
        let x = overlap(&s, &c).unwrap();
        let slow = overlap_by_quadrature(&s, &c, -14.0, 14.0, 2048).unwrap();
        assert_abs_diff_eq!(x.re, slow.re, epsilon = 1e-10);
        assert!(x.re > 0.0);
    }

    #[test]
    fn window_split_conserves_norm() {
        let win = TimeResponse::RectWindow { half_width: 0.8 };
        for p in families(1.0) {
            let p = p.shifted(0.25).unwrap();
            let seen = p.with_time_filter(TimeFilter { response: win, branch: FilterBranch::Transmitted }).unwrap();
            let lost = p.with_time_filter(TimeFilter { response: win, branch: FilterBranch::Complement }).unwrap();
            let total = seen.norm_squared().unwrap() + lost.norm_squared().unwrap();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(overlap(&seen, &lost).unwrap().norm(), 0.0, epsilon = 1e-12);
            let direct = windowed_overlap(&p, &p, win).unwrap();
            assert_abs_diff_eq!(direct.re, seen.norm_squared().unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn windowed_packet_evaluates_to_transform_of_truncated_profile() {
        let win = TimeResponse::RectWindow { half_width: 1.0 };
        let p = SpectralAmplitude::down_conversion(1.0, 0.0).unwrap();
        let seen = p.with_time_filter(TimeFilter { response: win, branch: FilterBranch::Transmitted }).unwrap();
        // sqrt(k) * \int_{-1}^{1} e^{-|t|} e^{-iwt} dt / sqrt(2 pi) at w = 0
        let expect = 2.0 * (1.0 - (-1.0f64).exp()) / (2.0 * PI).sqrt();
        assert_abs_diff_eq!(seen.evaluate(0.0).unwrap().re, expect, epsilon = 1e-12);
        let norm_freq = overlap_by_quadrature(&seen, &seen, -60.0, 60.0, 4096).unwrap().re;
        assert_abs_diff_eq!(norm_freq, seen.norm_squared().unwrap(), epsilon = 2e-3);
    }

    #[test]
    fn sampled_spectrum_reproduces_gaussian() {
        let g = SpectralAmplitude::gaussian(1.0).unwrap();
        let omega: Vec<f64> = (0..=2400).map(|k| -12.0 + 0.01 * k as f64).collect();
        let vals = omega.iter().map(|&w| g.evaluate(w).unwrap()).collect();
        let s = SpectralAmplitude::sampled(SampledSpectrum::new(omega, vals).unwrap());
        assert_abs_diff_eq!(s.norm_squared().unwrap(), 1.0, epsilon = 1e-10);
        let q = g.shifted(0.5).unwrap();
        let a = overlap(&s, &q).unwrap();
        let b = overlap(&g, &q).unwrap();
        assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-5);
    }

    #[test]
    fn sampled_csv_roundtrip() {
        let text = "omega,re,im\n-1,0,0\n0,1,0.5\n1,0,0\n";
        let s = SampledSpectrum::from_csv(text.as_bytes()).unwrap();
        assert_eq!(s.nodes().len(), 3);
        assert!(SampledSpectrum::from_csv("0,1\n".as_bytes()).is_err());
        assert!(SampledSpectrum::from_csv("1,0,0\n0,1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn packet_specs_parse() {
        let p = parse_packet_spec("gaussian(kappa=1.0,tau=0.25)", None).unwrap();
        assert_eq!(p.time_shift(), 0.25);
        assert_eq!(p.family(), Family::Gaussian);
        assert_eq!(parse_packet_spec("lorentzian(kappa=2)", None).unwrap().family(), Family::Lorentzian);
        assert_eq!(parse_packet_spec("dc(kappa=1.0)", None).unwrap().family(), Family::DownConversion);
        assert!(parse_packet_spec("gaussian(kappa=-1)", None).is_err());
        assert!(parse_packet_spec("gaussian(tau=1)", None).is_err());
        assert!(parse_packet_spec("sech(kappa=1)", None).is_err());
        assert!(parse_packet_spec("gaussian(kappa=1", None).is_err());
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(SpectralAmplitude::gaussian(0.0).is_err());
        assert!(SpectralAmplitude::lorentzian(f64::NAN).is_err());
        let g = SpectralAmplitude::gaussian(1.0).unwrap();
        assert!(g.shifted(f64::INFINITY).is_err());
        assert!(g.evaluate(f64::NAN).is_err());
        let f = g.with_frequency_filter(transmitted_band(1.0)).unwrap();
        assert!(f.with_frequency_filter(transmitted_band(1.0)).is_err());
    }

    #[test]
    fn table_interns_by_value() {
        let t = PacketTable::new();
        let a = t.intern(SpectralAmplitude::gaussian(1.0).unwrap());
        let b = t.intern(SpectralAmplitude::gaussian(1.0).unwrap());
        let c = t.intern(SpectralAmplitude::gaussian(1.0).unwrap().shifted(0.1).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn cache_reports_missing_pairs() {
        let t = PacketTable::new();
        let a = t.intern(SpectralAmplitude::gaussian(1.0).unwrap());
        let b = t.intern(SpectralAmplitude::lorentzian(1.0).unwrap());
        let cache = OverlapCache::new();
        assert!(matches!(cache.get(a, b), Err(Error::MissingOverlap(..))));
        cache.populate(&t, &[a, b]).unwrap();
        let ab = cache.get(a, b).unwrap();
        let ba = cache.get(b, a).unwrap();
        assert_abs_diff_eq!(ab.im, -ba.im, epsilon = 0.0);
        assert_abs_diff_eq!(cache.get(a, a).unwrap().re, 1.0, epsilon = 1e-12);
    }
}
