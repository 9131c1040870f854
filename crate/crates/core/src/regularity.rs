//! Regularity measurements on grid fields: oscillation, Lipschitz and Hölder
//! seminorms, doubling-of-variables certificates and the cone bound.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid};
use crate::scalar::Real;

/// Ordered pairs scanned exhaustively; above this, pairs are subsampled.
pub const PAIR_CAP: usize = 10_000_000;

/// Seed of the subsampled pair scan.
const PAIR_SEED: u64 = 0x005e_ed0f_7a17;

/// Upper end of the `A2` bracket searched by [`minimal_certificate_a2`].
pub const A2_CAP: f64 = 1e6;

/// Round-off allowance for `M ≤ 0` decisions: a few ulps of `1 + |v|∞`.
pub fn roundoff_tol<T: Real>(field: &ScalarField<T>) -> T {
    T::of(8.0) * T::epsilon() * (T::one() + field.sup_norm())
}

pub fn oscillation<T: Real>(field: &ScalarField<T>) -> T {
    field.max() - field.min()
}

/// Largest axis-neighbour difference quotient `|Δ_k v| / h_k`.
pub fn lipschitz_seminorm<T: Real>(field: &ScalarField<T>) -> T {
    let grid = field.grid();
    let v = field.values();
    let mut out = T::zero();
    for k in 0..grid.dim() {
        let inv_h = T::of_usize(grid.count(k));
        for i in 0..grid.len() {
            let j = grid.shift(i, k, 1);
            out = out.max((v[j] - v[i]).abs() * inv_h);
        }
    }
    out
}

/// Distances indexed by per-axis wrapped offsets `(o0, o1)`.
struct OffsetTable<T> {
    width: usize,
    values: Vec<T>,
}

impl<T: Real> OffsetTable<T> {
    fn new(grid: &TorusGrid, f: impl Fn(T) -> T) -> Self {
        let half = |k: usize| {
            if k < grid.dim() {
                grid.count(k) / 2 + 1
            } else {
                1
            }
        };
        let width = half(1);
        let mut values = Vec::with_capacity(half(0) * width);
        for o0 in 0..half(0) {
            for o1 in 0..width {
                values.push(f(grid.periodic_distance([0, 0], [o0, o1])));
            }
        }
        Self { width, values }
    }

    #[inline]
    fn get(&self, grid: &TorusGrid, i: usize, j: usize) -> T {
        let (a, b) = (grid.unravel(i), grid.unravel(j));
        let o0 = grid.wrapped_offset(a[0], b[0], 0);
        let o1 = if grid.dim() == 2 {
            grid.wrapped_offset(a[1], b[1], 1)
        } else {
            0
        };
        self.values[o0 * self.width + o1]
    }
}

/// Visits every ordered pair `(i, j)`, or above [`PAIR_CAP`] all axis-neighbour
/// pairs plus `PAIR_CAP` seeded random pairs. Returns whether the scan was exhaustive.
fn scan_pairs(grid: &TorusGrid, mut visit: impl FnMut(usize, usize)) -> bool {
    let n = grid.len();
    if n.saturating_mul(n) <= PAIR_CAP {
        for i in 0..n {
            for j in 0..n {
                visit(i, j);
            }
        }
        return true;
    }
    for i in 0..n {
        for k in 0..grid.dim() {
            let j = grid.shift(i, k, 1);
            visit(i, j);
            visit(j, i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
    for _ in 0..PAIR_CAP {
        visit(rng.gen_range(0..n), rng.gen_range(0..n));
    }
    false
}

/// `max |v(x) − v(y)| / d(x,y)^γ` over node pairs.
pub fn holder_seminorm<T: Real>(field: &ScalarField<T>, gamma: T) -> Result<T> {
    if !(gamma > T::zero() && gamma <= T::one()) {
        return Err(Error::InvalidInput(format!(
            "Hölder exponent must lie in (0,1], got {gamma}"
        )));
    }
    let grid = field.grid();
    let v = field.values();
    let inv = OffsetTable::new(grid, |d: T| {
        if d > T::zero() {
            T::one() / d.powf(gamma)
        } else {
            T::zero()
        }
    });
    let mut out = T::zero();
    scan_pairs(grid, |i, j| {
        out = out.max((v[i] - v[j]) * inv.get(grid, i, j));
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateVariant {
    /// `Ψ(s) = A1 s^γ`.
    HolderPower,
    /// `Ψ(s) = A1 [A2 s − (A2 s)^{1+γ}]` for `s ≤ r`, constant beyond.
    ConcaveLip,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CertificateParams<T> {
    pub gamma: T,
    #[serde(rename = "A1")]
    pub a1: T,
    #[serde(rename = "A2")]
    pub a2: T,
    pub r: T,
    pub variant: CertificateVariant,
}

impl<T: Real> CertificateParams<T> {
    pub fn holder_power(constant: T, gamma: T) -> Self {
        Self {
            gamma,
            a1: constant,
            a2: T::one(),
            r: T::infinity(),
            variant: CertificateVariant::HolderPower,
        }
    }

    /// Concave penalty with `A2 r = 1/3` and `Ψ(r) = osc + 1`.
    pub fn concave_lip(osc: T, a2: T, gamma: T) -> Self {
        let third = T::one() / T::of(3.0);
        let a1 = (osc + T::one()) / (third - third.powf(T::one() + gamma));
        Self {
            gamma,
            a1,
            a2,
            r: third / a2,
            variant: CertificateVariant::ConcaveLip,
        }
    }

    pub fn psi(&self, s: T) -> T {
        match self.variant {
            CertificateVariant::HolderPower => self.a1 * s.powf(self.gamma),
            CertificateVariant::ConcaveLip => {
                let t = self.a2 * s.min(self.r);
                self.a1 * (t - t.powf(T::one() + self.gamma))
            }
        }
    }

    /// `Ψ'(0) = A1 A2`, the Lipschitz-type constant certified by the concave penalty.
    pub fn slope_at_zero(&self) -> T {
        self.a1 * self.a2
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Certificate<T> {
    pub params: CertificateParams<T>,
    /// `max v(x) − v(y) − Ψ(d(x,y))`; never negative since `x = y` is scanned.
    pub max_value: T,
    pub argmax: (usize, usize),
    /// `2 Lip(v) h`, an allowance for maxima falling between nodes.
    pub slack: T,
    /// `max_value` is zero up to round-off.
    pub certified: bool,
    /// Largest value over pairs `x ≠ y`, with `slack` added.
    pub off_diagonal_with_slack: T,
    pub exhaustive: bool,
}

/// Maximum over node pairs of `v(x) − v(y) − Ψ(d(x,y))`.
pub fn doubling_certificate<T: Real>(
    field: &ScalarField<T>,
    params: &CertificateParams<T>,
) -> Certificate<T> {
    let grid = field.grid();
    let v = field.values();
    let psi = OffsetTable::new(grid, |d| params.psi(d));
    let mut best = (T::neg_infinity(), (0, 0));
    let mut off = T::neg_infinity();
    let exhaustive = scan_pairs(grid, |i, j| {
        let m = v[i] - v[j] - psi.get(grid, i, j);
        if m > best.0 {
            best = (m, (i, j));
        }
        if i != j && m > off {
            off = m;
        }
    });
    let slack = T::two() * lipschitz_seminorm(field) * grid.min_spacing::<T>();
    Certificate {
        params: *params,
        max_value: best.0,
        argmax: best.1,
        slack,
        certified: best.0 <= roundoff_tol(field),
        off_diagonal_with_slack: off + slack,
        exhaustive,
    }
}

/// Smallest `A2` (to 1% relative) whose concave penalty certifies `field`.
pub fn minimal_certificate_a2<T: Real>(
    field: &ScalarField<T>,
    gamma: T,
) -> Result<CertificateParams<T>> {
    if !(gamma > T::zero() && gamma <= T::one()) {
        return Err(Error::InvalidInput(format!(
            "exponent must lie in (0,1], got {gamma}"
        )));
    }
    let osc = oscillation(field);
    let ok = |a2: T| {
        doubling_certificate(field, &CertificateParams::concave_lip(osc, a2, gamma)).certified
    };
    let mut lo = T::one();
    if ok(lo) {
        return Ok(CertificateParams::concave_lip(osc, lo, gamma));
    }
    let cap = T::of(A2_CAP);
    let mut hi = lo;
    loop {
        hi = (hi * T::of(4.0)).min(cap);
        if ok(hi) {
            break;
        }
        if hi >= cap {
            return Err(Error::NotCertifiable { cap: A2_CAP });
        }
        lo = hi;
    }
    while hi > lo * T::of(1.01) {
        let mid = (lo * hi).sqrt();
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CertificateParams::concave_lip(osc, hi, gamma))
}

/// `max_x v(x) − v(x*) − L d(x, x*)` with `x*` the argmin; `≤ 0` when the cone bound holds.
pub fn cone_bound_check<T: Real>(field: &ScalarField<T>, l: T) -> T {
    let grid = field.grid();
    let star = field.argmin();
    let vmin = field.at(star);
    (0..grid.len())
        .map(|i| field.at(i) - vmin - l * grid.distance_flat::<T>(i, star))
        .fold(T::neg_infinity(), |a, b| a.max(b))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HolderEntry<T> {
    pub gamma: T,
    pub seminorm: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConeCheck<T> {
    #[serde(rename = "L")]
    pub l: T,
    pub worst_defect: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RegularityReport<T> {
    pub osc: T,
    pub lip: T,
    pub holder: Vec<HolderEntry<T>>,
    /// Minimal concave certificate at the first requested exponent, if certifiable.
    pub certificate: Option<Certificate<T>>,
    pub cone_check: Option<ConeCheck<T>>,
}

impl<T: Real> RegularityReport<T> {
    pub fn holder_at(&self, gamma: T) -> Option<T> {
        self.holder
            .iter()
            .find(|e| e.gamma == gamma)
            .map(|e| e.seminorm)
    }
}

/// All analyzer quantities for one field.
pub fn analyze<T: Real>(
    field: &ScalarField<T>,
    gammas: &[T],
    cone_l: Option<T>,
) -> Result<RegularityReport<T>> {
    let holder = gammas
        .iter()
        .map(|&gamma| {
            Ok(HolderEntry {
                gamma,
                seminorm: holder_seminorm(field, gamma)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let certificate = match gammas.first() {
        Some(&g) if g < T::one() => match minimal_certificate_a2(field, g) {
            Ok(params) => Some(doubling_certificate(field, &params)),
            Err(Error::NotCertifiable { .. }) => None,
            Err(e) => return Err(e),
        },
        _ => None,
    };
    Ok(RegularityReport {
        osc: oscillation(field),
        lip: lipschitz_seminorm(field),
        holder,
        certificate,
        cone_check: cone_l.map(|l| ConeCheck {
            l,
            worst_defect: cone_bound_check(field, l),
        }),
    })
}

/// Per-exponent seminorm table with header `label,gamma,seminorm`.
pub fn write_holder_csv<T: Real>(
    path: &Path,
    rows: &[(String, RegularityReport<T>)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "gamma", "seminorm"])?;
    for (label, report) in rows {
        for e in &report.holder {
            w.write_record([
                label.clone(),
                format!("{:e}", e.gamma),
                format!("{:e}", e.seminorm),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a report as pretty JSON.
pub fn write_report_json<T: Real>(path: &Path, report: &RegularityReport<T>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;

    fn sawtooth(n: usize, slope: f64) -> ScalarField<f64> {
        let g = TorusGrid::line(n).unwrap();
        ScalarField::from_fn(g, |x: Point<f64>| slope * (x[0] - 0.5).abs())
    }

    #[test]
    fn constant_field_has_zero_seminorms() {
        let f = ScalarField::constant(TorusGrid::square(8).unwrap(), 2.5);
        assert_eq!(oscillation(&f), 0.0);
        assert_eq!(lipschitz_seminorm(&f), 0.0);
        assert_eq!(holder_seminorm(&f, 0.5).unwrap(), 0.0);
        assert!(cone_bound_check(&f, 1.0) <= 0.0);
        let p = minimal_certificate_a2(&f, 0.5).unwrap();
        assert_eq!(p.a2, 1.0);
    }

    #[test]
    fn sawtooth_seminorms() {
        let f = sawtooth(64, 2.0);
        assert!((lipschitz_seminorm(&f) - 2.0).abs() < 1e-12);
        assert!((holder_seminorm(&f, 1.0).unwrap() - 2.0).abs() < 1e-12);
        let cone = cone_bound_check(&sawtooth(64, 1.0), 1.0);
        assert!(cone.abs() < 1e-12);
    }

    #[test]
    fn holder_cusp_is_close_to_one() {
        let g = TorusGrid::line(512).unwrap();
        let f = ScalarField::from_fn(g, |x: Point<f64>| (x[0] - 0.5).abs().sqrt());
        let s = holder_seminorm(&f, 0.5).unwrap();
        assert!((s - 1.0).abs() <= 0.05, "{s}");
    }

    #[test]
    fn certificate_is_tight_for_holder_power() {
        let g = TorusGrid::line(128).unwrap();
        let f = ScalarField::from_fn(g, |x: Point<f64>| {
            (std::f64::consts::TAU * x[0]).cos() + 0.3 * (x[0] - 0.3).abs()
        });
        for gamma in [0.25, 0.5, 1.0] {
            let k = holder_seminorm(&f, gamma).unwrap();
            let at = doubling_certificate(&f, &CertificateParams::holder_power(k, gamma));
            assert!(at.certified, "gamma={gamma}: {}", at.max_value);
            let below =
                doubling_certificate(&f, &CertificateParams::holder_power(k * 0.999999, gamma));
            assert!(below.max_value > 0.0);
        }
    }

    #[test]
    fn concave_penalty_matches_its_normalization() {
        let p = CertificateParams::<f64>::concave_lip(2.0, 5.0, 0.5);
        assert!((p.a2 * p.r - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.psi(p.r) - 3.0).abs() < 1e-12);
        assert_eq!(p.psi(1.0), p.psi(p.r));
        let s: Vec<f64> = (0..=100).map(|i| p.r * i as f64 / 100.0).collect();
        for w in s.windows(3) {
            let (a, b, c) = (p.psi(w[0]), p.psi(w[1]), p.psi(w[2]));
            assert!(b > a && c > b);
            assert!(b - a >= c - b - 1e-12);
        }
    }

    #[test]
    fn minimal_a2_brackets_sawtooth_slope() {
        let f = sawtooth(256, 2.0);
        let gamma: f64 = 0.5;
        let p = minimal_certificate_a2(&f, gamma).unwrap();
        let k = p.slope_at_zero();
        let upper = 2.0 / (1.0 - (1.0 + gamma) * 3f64.powf(-gamma));
        assert!(k >= 2.0 && k <= upper, "{k} vs [2, {upper}]");
    }

    /// Once `r = 1/(3 A2)` drops below `h`, every off-diagonal pair sees `Ψ = osc + 1`.
    #[test]
    fn minimal_a2_never_exceeds_grid_scale() {
        let g = TorusGrid::line(64).unwrap();
        let mut v = vec![0.0; 64];
        v[10] = 1e3;
        let f = ScalarField::new(g, v).unwrap();
        let p = minimal_certificate_a2(&f, 0.5).unwrap();
        assert!(p.a2 <= 64.0 / 3.0 * 1.01, "{}", p.a2);
    }

    #[test]
    fn subsampled_scan_is_deterministic_and_keeps_neighbours() {
        let g = TorusGrid::square(64).unwrap();
        let f = ScalarField::from_fn(g, |x: Point<f64>| (x[0] * 7.0).sin() * (x[1] * 3.0).cos());
        let a = holder_seminorm(&f, 1.0).unwrap();
        let b = holder_seminorm(&f, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a >= lipschitz_seminorm(&f));
    }
}
