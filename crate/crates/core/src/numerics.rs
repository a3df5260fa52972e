//! Special functions, adaptive quadrature, monotone root finding and scalar
//! line search.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_subdivisions: usize,
}

impl<T: Real> Default for QuadSettings<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::of(1e-8),
            abs_tol: T::of(1e-12),
            max_subdivisions: 200,
        }
    }
}

impl<T: Real> QuadSettings<T> {
    pub fn new(rel_tol: T, abs_tol: T, max_subdivisions: usize) -> Result<Self> {
        if !(rel_tol > T::zero()) || !(abs_tol >= T::zero()) || max_subdivisions == 0 {
            return Err(Error::invalid(
                "quadrature settings need rel_tol > 0, abs_tol >= 0, max_subdivisions >= 1",
            ));
        }
        Ok(Self {
            rel_tol,
            abs_tol,
            max_subdivisions,
        })
    }

    pub fn with_rel_tol(mut self, rel_tol: T) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: T) -> Self {
        self.abs_tol = abs_tol;
        self
    }
}

/// Closed interval `[lo, hi]`; `hi` may be `+inf` for integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Bracket<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(Error::invalid(format!("bracket needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

// ---------------------------------------------------------------------------
// Special functions

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let xf = x.to_f64_lossy();
    T::of(ln_gamma_f64(xf))
}

fn ln_gamma_f64(x: f64) -> f64 {
    if x < 0.5 {
        let s = (std::f64::consts::PI * x).sin();
        return std::f64::consts::PI.ln() - s.abs().ln() - ln_gamma_f64(1.0 - x);
    }
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_beta<T: Real>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln C(n, k)`.
pub fn ln_binomial<T: Real>(n: u32, k: u32) -> T {
    if k > n {
        return T::neg_infinity();
    }
    let n1 = T::of(n as f64 + 1.0);
    ln_gamma(n1) - ln_gamma(T::of(k as f64 + 1.0)) - ln_gamma(T::of((n - k) as f64 + 1.0))
}

/// `C(n, k)` accumulated as a product; exact for the small arguments used here.
pub fn binomial<T: Real>(n: u32, k: u32) -> T {
    if k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    T::of(acc.round())
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta<T: Real>(x: T, a: T, b: T) -> Result<T> {
    if !(a > T::zero()) || !(b > T::zero()) || !(x >= T::zero()) || !(x <= T::one()) {
        return Err(Error::invalid(format!(
            "incomplete beta needs x in [0,1], a > 0, b > 0; got x={x}, a={a}, b={b}"
        )));
    }
    Ok(beta_inc_pair(x, T::one() - x, a, b, ln_beta(a, b)).0)
}

/// `(I_x(a,b), 1 - I_x(a,b))` with `y = 1 - x` passed explicitly so that the
/// smaller of the two is returned with full relative accuracy.
pub fn beta_inc_pair<T: Real>(x: T, y: T, a: T, b: T, ln_beta_ab: T) -> (T, T) {
    if x <= T::zero() {
        return (T::zero(), T::one());
    }
    if y <= T::zero() {
        return (T::one(), T::zero());
    }
    let xf = x.to_f64_lossy();
    let yf = y.to_f64_lossy();
    let af = a.to_f64_lossy();
    let bf = b.to_f64_lossy();
    let front = (af * xf.ln() + bf * yf.ln() - ln_beta_ab.to_f64_lossy()).exp();
    if xf < (af + 1.0) / (af + bf + 2.0) {
        let i = front * beta_cf(af, bf, xf) / af;
        (T::of(i), T::of(1.0 - i))
    } else {
        let ic = front * beta_cf(bf, af, yf) / bf;
        (T::of(1.0 - ic), T::of(ic))
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..20_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, 0.0f64);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k as f64 + 1.0) * z * p1 - k as f64 * p2) / (k as f64 + 1.0);
            }
            dp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = T::of(-z);
        nodes[n - 1 - i] = T::of(z);
        weights[i] = T::of(w);
        weights[n - 1 - i] = T::of(w);
    }
    (nodes, weights)
}

// ---------------------------------------------------------------------------
// Quadrature

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Panel<T> {
    lo: T,
    hi: T,
    value: T,
    error: T,
}

fn gk15<T: Real, F: FnMut(T) -> Result<T>>(f: &mut F, lo: T, hi: T) -> Result<Panel<T>> {
    let half = T::of(0.5);
    let centr = half * (lo + hi);
    let hlgth = half * (hi - lo);
    let fc = f(centr)?;
    let mut resg = fc * T::of(WG[3]);
    let mut resk = fc * T::of(WGK[7]);
    let mut resabs = resk.abs();
    let mut fv1 = [T::zero(); 7];
    let mut fv2 = [T::zero(); 7];
    for (j, wg) in WG.iter().take(3).enumerate() {
        let jtw = 2 * j + 1;
        let dx = hlgth * T::of(XGK[jtw]);
        let f1 = f(centr - dx)?;
        let f2 = f(centr + dx)?;
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += T::of(*wg) * (f1 + f2);
        resk += T::of(WGK[jtw]) * (f1 + f2);
        resabs += T::of(WGK[jtw]) * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let jtwm1 = 2 * j;
        let dx = hlgth * T::of(XGK[jtwm1]);
        let f1 = f(centr - dx)?;
        let f2 = f(centr + dx)?;
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += T::of(WGK[jtwm1]) * (f1 + f2);
        resabs += T::of(WGK[jtwm1]) * (f1.abs() + f2.abs());
    }
    let reskh = resk * half;
    let mut resasc = T::of(WGK[7]) * (fc - reskh).abs();
    for j in 0..7 {
        resasc += T::of(WGK[j]) * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let value = resk * hlgth;
    let resabs = resabs * hlgth.abs();
    let resasc = resasc * hlgth.abs();
    let mut error = ((resk - resg) * hlgth).abs();
    if resasc != T::zero() && error != T::zero() {
        let ratio = (T::of(200.0) * error / resasc).powf(T::of(1.5));
        error = resasc * ratio.min(T::one());
    }
    let eps = T::epsilon();
    if resabs > T::min_positive_value() / (T::of(50.0) * eps) {
        error = error.max(T::of(50.0) * eps * resabs);
    }
    if !value.is_finite() {
        return Err(Error::ModelViolation(format!(
            "non-finite integrand on [{lo}, {hi}]"
        )));
    }
    Ok(Panel {
        lo,
        hi,
        value,
        error,
    })
}

fn adaptive<T: Real, F: FnMut(T) -> Result<T>>(
    f: &mut F,
    lo: T,
    hi: T,
    settings: &QuadSettings<T>,
) -> Result<T> {
    let mut panels = vec![gk15(f, lo, hi)?];
    loop {
        let total: T = panels.iter().map(|p| p.value).sum();
        let err: T = panels.iter().map(|p| p.error).sum();
        if err <= settings.abs_tol.max(settings.rel_tol * total.abs()) {
            return Ok(total);
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, p)| {
                if p.error > acc.1 {
                    (i, p.error)
                } else {
                    acc
                }
            });
        let p = panels.swap_remove(worst);
        let mid = T::of(0.5) * (p.lo + p.hi);
        let too_narrow = mid <= p.lo || mid >= p.hi;
        if panels.len() + 2 > settings.max_subdivisions || too_narrow {
            panels.push(p);
            return Err(Error::Convergence {
                estimate: total.to_f64_lossy(),
                error_bound: err.to_f64_lossy(),
                context: String::new(),
            });
        }
        panels.push(gk15(f, p.lo, mid)?);
        panels.push(gk15(f, mid, p.hi)?);
    }
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of a fallible integrand.
///
/// An infinite upper limit is handled with `x = lo + t/(1-t)`.
pub fn try_integrate_1d<T: Real, F: FnMut(T) -> Result<T>>(
    mut f: F,
    bracket: Bracket<T>,
    settings: &QuadSettings<T>,
) -> Result<T> {
    if bracket.lo.is_infinite() {
        return Err(Error::invalid("integration lower limit must be finite"));
    }
    if bracket.hi.is_infinite() {
        let lo = bracket.lo;
        let mut g = |t: T| -> Result<T> {
            let one_m = T::one() - t;
            let x = lo + t / one_m;
            let v = f(x)?;
            if v == T::zero() {
                Ok(v)
            } else {
                Ok(v / (one_m * one_m))
            }
        };
        adaptive(&mut g, T::zero(), T::one(), settings)
    } else {
        adaptive(&mut f, bracket.lo, bracket.hi, settings)
    }
}

pub fn integrate_1d<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    bracket: Bracket<T>,
    settings: &QuadSettings<T>,
) -> Result<T> {
    try_integrate_1d(|x| Ok(f(x)), bracket, settings)
}

/// Integrates over `[lo, hi]` split at the interior `breaks` (unsorted,
/// duplicates and out-of-range points ignored).
pub fn try_integrate_pieces<T: Real, F: FnMut(T) -> Result<T>>(
    mut f: F,
    lo: T,
    hi: T,
    breaks: &[T],
    settings: &QuadSettings<T>,
) -> Result<T> {
    if !(hi > lo) {
        return Ok(T::zero());
    }
    let mut cuts: Vec<T> = breaks
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    cuts.dedup();
    let mut total = T::zero();
    let mut a = lo;
    for b in cuts.into_iter().chain(std::iter::once(hi)) {
        if b > a {
            total += try_integrate_1d(&mut f, Bracket { lo: a, hi: b }, settings)?;
        }
        a = b;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Interpolation

/// Piecewise Chebyshev interpolant of a smooth function on `[lo, hi]`,
/// refined by bisection until the trailing coefficients of every panel fall
/// below `rel_tol` times the larger of the panel's own scale and a small
/// fraction of the global one.
#[derive(Debug, Clone)]
pub struct PiecewiseChebyshev<T> {
    breaks: Vec<T>,
    coefs: Vec<Vec<T>>,
}

impl<T: Real> PiecewiseChebyshev<T> {
    pub fn build<F: FnMut(T) -> Result<T>>(mut f: F, lo: T, hi: T, points: usize, rel_tol: T) -> Result<Self> {
        if !(hi > lo) || points < 4 {
            return Err(Error::invalid("interpolant needs a nonempty interval and at least 4 points"));
        }
        let mut fit = |a: T, b: T| -> Result<(Vec<T>, T)> {
            let nf = T::of_usize(points);
            let (mid, half) = (T::of(0.5) * (a + b), T::of(0.5) * (b - a));
            let thetas: Vec<T> = (0..points)
                .map(|j| T::PI() * (T::of_usize(j) + T::of(0.5)) / nf)
                .collect();
            let vals = thetas
                .iter()
                .map(|t| f(mid + half * t.cos()))
                .collect::<Result<Vec<T>>>()?;
            let scale = vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let coefs = (0..points)
                .map(|k| {
                    let kf = T::of_usize(k);
                    let s: T = vals.iter().zip(&thetas).map(|(v, t)| *v * (kf * *t).cos()).sum();
                    s * T::of(2.0) / nf
                })
                .collect();
            Ok((coefs, scale))
        };
        let initial = 4;
        let width = (hi - lo) / T::of_usize(initial);
        let mut stack = Vec::new();
        let mut global = T::zero();
        for i in (0..initial).rev() {
            let a = lo + width * T::of_usize(i);
            let b = if i + 1 == initial { hi } else { a + width };
            let (c, scale) = fit(a, b)?;
            global = global.max(scale);
            stack.push((a, b, c, scale, 0u32));
        }
        let mut breaks = vec![lo];
        let mut coefs = Vec::new();
        let floor = T::of(1e-6);
        while let Some((a, b, c, scale, depth)) = stack.pop() {
            let tail = c[points - 3..].iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let ok = tail <= rel_tol * scale.max(floor * global);
            if ok || depth >= 40 || (b - a) <= T::epsilon() * (hi - lo) {
                breaks.push(b);
                coefs.push(c);
                continue;
            }
            let m = T::of(0.5) * (a + b);
            let (cl, sl) = fit(a, m)?;
            let (cr, sr) = fit(m, b)?;
            global = global.max(sl).max(sr);
            stack.push((m, b, cr, sr, depth + 1));
            stack.push((a, m, cl, sl, depth + 1));
        }
        Ok(Self { breaks, coefs })
    }

    pub fn lo(&self) -> T {
        self.breaks[0]
    }

    pub fn hi(&self) -> T {
        self.breaks[self.breaks.len() - 1]
    }

    /// Panel boundaries, both ends included.
    pub fn breaks(&self) -> &[T] {
        &self.breaks
    }

    /// Value at `x`; zero outside the interval.
    pub fn eval(&self, x: T) -> T {
        if !(x >= self.lo()) || !(x <= self.hi()) {
            return T::zero();
        }
        let i = self.breaks.partition_point(|&b| b <= x).clamp(1, self.coefs.len()) - 1;
        let (a, b) = (self.breaks[i], self.breaks[i + 1]);
        let t = (T::of(2.0) * x - a - b) / (b - a);
        let c = &self.coefs[i];
        let (mut b1, mut b2) = (T::zero(), T::zero());
        for &ck in c[1..].iter().rev() {
            let b0 = T::of(2.0) * t * b1 - b2 + ck;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + T::of(0.5) * c[0]
    }
}

// ---------------------------------------------------------------------------
// Root finding

/// Outcome of a bracketed monotone root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootSearch<T> {
    Root(T),
    /// No sign change; the root lies below `lo`.
    BelowBracket,
    /// No sign change; the root lies above `hi`.
    AboveBracket,
}

impl<T: Copy> RootSearch<T> {
    pub fn root(self) -> Option<T> {
        match self {
            RootSearch::Root(x) => Some(x),
            _ => None,
        }
    }
}

pub fn find_root_monotone<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    bracket: Bracket<T>,
    tol: T,
) -> Result<RootSearch<T>> {
    try_find_root_monotone(|x| Ok(f(x)), bracket, tol)
}

/// Brent's method on a monotone function, with a monotonicity audit of every
/// sample against the current bracket.
pub fn try_find_root_monotone<T: Real, F: FnMut(T) -> Result<T>>(
    mut f: F,
    bracket: Bracket<T>,
    tol: T,
) -> Result<RootSearch<T>> {
    let (mut a, mut b) = (bracket.lo, bracket.hi);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == T::zero() {
        return Ok(RootSearch::Root(a));
    }
    if fb == T::zero() {
        return Ok(RootSearch::Root(b));
    }
    if fa.signum() == fb.signum() {
        return Ok(if fa.abs() > fb.abs() {
            RootSearch::AboveBracket
        } else {
            RootSearch::BelowBracket
        });
    }
    let increasing = fb > fa;
    // (lo, f_lo) and (hi, f_hi) are the audited bracket ends in x-order.
    let (mut lo, mut f_lo, mut hi, mut f_hi) = (a, fa, b, fb);
    let audit = |x: T, fx: T, lo: T, f_lo: T, hi: T, f_hi: T| -> Result<()> {
        if x > lo && x < hi {
            let slack = T::of(1e-9) * (f_lo.abs() + f_hi.abs());
            let ok = if increasing {
                fx >= f_lo - slack && fx <= f_hi + slack
            } else {
                fx <= f_lo + slack && fx >= f_hi - slack
            };
            if !ok {
                return Err(Error::ModelViolation(format!(
                    "non-monotone sample f({x}) = {fx} outside [{f_lo}, {f_hi}]"
                )));
            }
        }
        Ok(())
    };

    let two = T::of(2.0);
    let half = T::of(0.5);
    let eps = T::epsilon();
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * eps * b.abs() + half * tol;
        let xm = half * (c - b);
        if xm.abs() <= tol1 || fb == T::zero() {
            return Ok(RootSearch::Root(b));
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = T::of(3.0) * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol1 {
            b + d
        } else {
            b + tol1.copysign(xm)
        };
        fb = f(b)?;
        audit(b, fb, lo, f_lo, hi, f_hi)?;
        if b > lo && b < hi {
            let below = if increasing { fb < T::zero() } else { fb > T::zero() };
            if below {
                lo = b;
                f_lo = fb;
            } else {
                hi = b;
                f_hi = fb;
            }
        }
    }
    Ok(RootSearch::Root(b))
}

// ---------------------------------------------------------------------------
// Scalar minimization

/// Grid scan over `grid_points` equispaced abscissae followed by golden-section
/// refinement inside the neighbouring cells of the best grid point. Ties go
/// to the smallest argument.
pub fn minimize_scalar_unimodal<T, E, F>(
    mut f: F,
    bracket: Bracket<T>,
    tol: T,
    grid_points: usize,
) -> std::result::Result<(T, T), E>
where
    T: Real,
    F: FnMut(T) -> std::result::Result<T, E>,
{
    let g = grid_points.max(3);
    let step = bracket.width() / T::of_usize(g - 1);
    let mut best_x = bracket.lo;
    let mut best_f = T::infinity();
    let mut best_i = 0;
    let keep = |x: T, fx: T, bx: &mut T, bf: &mut T| {
        if fx < *bf || (fx == *bf && x < *bx) {
            *bx = x;
            *bf = fx;
        }
    };
    for i in 0..g {
        let x = if i == g - 1 {
            bracket.hi
        } else {
            bracket.lo + step * T::of_usize(i)
        };
        let fx = f(x)?;
        if fx < best_f {
            best_i = i;
        }
        keep(x, fx, &mut best_x, &mut best_f);
    }
    let mut a = bracket.lo + step * T::of_usize(best_i.saturating_sub(1));
    let mut b = if best_i + 1 >= g {
        bracket.hi
    } else {
        bracket.lo + step * T::of_usize(best_i + 1)
    };
    let invphi = T::of((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = b - invphi * (b - a);
    let mut x2 = a + invphi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    keep(x1, f1, &mut best_x, &mut best_f);
    keep(x2, f2, &mut best_x, &mut best_f);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = f(x1)?;
            keep(x1, f1, &mut best_x, &mut best_f);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = f(x2)?;
            keep(x2, f2, &mut best_x, &mut best_f);
        }
    }
    Ok((best_x, best_f))
}
