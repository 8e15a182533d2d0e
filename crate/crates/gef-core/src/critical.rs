//! Singular points of the gradient field: zeros of f (the sinks), saddles
//! and local maxima of the potential.
//!
//! Zeros are located exhaustively by a winding-number quadtree with Newton
//! polish, then cross-checked against the boundary winding number of the
//! whole search disk. Critical points solve `∇U = conj(f′/f) − z = 0` by
//! damped Newton with the true real Jacobian (the map involves conj(z), so
//! it is not analytic) and are classified by the sign of
//! `det Hess U = 1 − |(f′/f)′|²`; the trace is identically −2, so a positive
//! determinant forces a local maximum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};
use crate::gef::GefSample;
use crate::geom::Window;

/// Normalized residual tolerance for polished zeros: |f| ≤ 1e−10·e^{|z|²/2}.
pub const ZERO_RESIDUAL_TOL: f64 = 1e-10;
/// Absolute residual tolerance on |∇U| for critical points.
pub const CRITICAL_RESIDUAL_TOL: f64 = 1e-8;
/// Two singular points closer than this are considered one.
pub const DEDUPE_RADIUS: f64 = 1e-4;
/// |det Hess U| below this floor is reported as degenerate, never classified.
pub const DEGENERACY_FLOOR: f64 = 1e-6;

/// A polished zero of f.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Zero {
    pub location_re: f64,
    pub location_im: f64,
    /// |f| at the polished location, relative to the scale e^{|z|²/2}.
    pub residual: f64,
    pub newton_iters: u32,
}

impl Zero {
    pub fn location(&self) -> Complex64 {
        Complex64::new(self.location_re, self.location_im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Saddle,
    LocalMax,
}

/// Outcome of classifying one candidate location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Saddle,
    LocalMax,
    Degenerate,
}

/// A non-degenerate critical point of U.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location_re: f64,
    pub location_im: f64,
    pub kind: CriticalKind,
    pub hessian_det: f64,
    /// |∇U| re-verified at the returned location.
    pub residual: f64,
}

impl CriticalPoint {
    pub fn location(&self) -> Complex64 {
        Complex64::new(self.location_re, self.location_im)
    }
}

/// Output of the critical point search. Degeneracy floor violations and
/// uncovered start regions are reported, never silently dropped.
#[derive(Debug, Clone, Default)]
pub struct CriticalPointSearch {
    pub points: Vec<CriticalPoint>,
    /// Converged locations whose |det Hess U| fell below the floor.
    pub degenerate: Vec<Complex64>,
    /// Grid starts from which damped Newton failed to converge.
    pub coverage_warnings: Vec<Complex64>,
}

/// Counts of singular points in a window, per unit area.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MorseCensus {
    pub window: Window,
    pub n_zeros: usize,
    pub n_saddles: usize,
    pub n_maxima: usize,
    pub zero_density: f64,
    pub saddle_density: f64,
    pub max_density: f64,
    /// #zeros + #maxima − #saddles; interior contributions cancel, so this
    /// stays O(window perimeter).
    pub alternating_sum: i64,
}

// ---------------------------------------------------------------------------
// winding numbers

/// Outcome of tracking arg f along a closed contour.
enum Winding {
    Count(i64),
    /// |f| got too small at a contour sample; carries the location.
    NearZero(Complex64),
}

/// Tracks the continuous argument of f along the closed polyline through
/// `corners`, refining each segment until consecutive phase jumps are below
/// π/2. Near-zero contour samples abort the tracking so the caller can
/// jitter the contour.
fn track_winding(sample: &GefSample, corners: &[Complex64]) -> Result<Winding> {
    const PHASE_LIMIT: f64 = std::f64::consts::FRAC_PI_2;
    const NEAR_ZERO: f64 = 1e-12;
    let value = |z: Complex64| -> Result<std::result::Result<Complex64, Complex64>> {
        let jet = sample.eval_jet(z)?;
        if jet.at_zero || jet.normalized_abs_f() < NEAR_ZERO {
            return Ok(Err(z));
        }
        Ok(Ok(jet.f))
    };
    let mut total = 0.0f64;
    let n = corners.len();
    for i in 0..n {
        let a = corners[i];
        let b = corners[(i + 1) % n];
        // split long edges so the initial samples already resolve the phase
        let pieces = ((b - a).norm() / 0.25).ceil().max(1.0) as usize;
        let mut prev_z = a;
        let mut prev_f = match value(a)? {
            Ok(f) => f,
            Err(z) => return Ok(Winding::NearZero(z)),
        };
        for p in 1..=pieces {
            let z = a + (b - a) * (p as f64 / pieces as f64);
            let f = match value(z)? {
                Ok(f) => f,
                Err(zz) => return Ok(Winding::NearZero(zz)),
            };
            // refine this piece until the phase step is resolved
            let mut stack = vec![(prev_z, prev_f, z, f, 0u32)];
            while let Some((za, fa, zb, fb, depth)) = stack.pop() {
                let delta = (fb / fa).arg();
                if depth >= 48 {
                    return Ok(Winding::NearZero(0.5 * (za + zb)));
                }
                if delta.abs() < PHASE_LIMIT {
                    total += delta;
                } else {
                    let zm = 0.5 * (za + zb);
                    let fm = match value(zm)? {
                        Ok(f) => f,
                        Err(zz) => return Ok(Winding::NearZero(zz)),
                    };
                    stack.push((zm, fm, zb, fb, depth + 1));
                    stack.push((za, fa, zm, fm, depth + 1));
                }
            }
            prev_z = z;
            prev_f = f;
        }
        let _ = (prev_z, prev_f);
    }
    let turns = total / (2.0 * std::f64::consts::PI);
    let rounded = turns.round();
    if (turns - rounded).abs() > 0.05 {
        return Err(GefError::Inconsistency(format!(
            "winding number {turns} did not round cleanly"
        )));
    }
    Ok(Winding::Count(rounded as i64))
}

fn rect_corners(lo: Complex64, hi: Complex64) -> [Complex64; 4] {
    [
        lo,
        Complex64::new(hi.re, lo.im),
        hi,
        Complex64::new(lo.re, hi.im),
    ]
}

/// Zero count inside `|z − center| = radius` by adaptive Simpson quadrature
/// of `(1/2πi) ∮ f′/f dz`. Independent of the phase-tracking route; used as
/// the argument-principle oracle.
pub fn winding_by_quadrature(sample: &GefSample, center: Complex64, radius: f64) -> Result<i64> {
    let g = |theta: f64| -> Result<Complex64> {
        let z = center + radius * Complex64::new(theta.cos(), theta.sin());
        let jet = sample.eval_jet(z)?;
        if jet.at_zero {
            return Err(GefError::Domain(format!("zero of f on the contour at {z}")));
        }
        // (1/2πi) f'/f dz with dz = i(z−c)dθ
        Ok(jet.f_prime / jet.f * (z - center) / (2.0 * std::f64::consts::PI))
    };
    fn simpson(
        g: &dyn Fn(f64) -> Result<Complex64>,
        a: f64,
        b: f64,
        fa: Complex64,
        fm: Complex64,
        fb: Complex64,
        tol: f64,
        depth: u32,
    ) -> Result<Complex64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = g(lm)?;
        let frm = g(rm)?;
        let whole = (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
        let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
        let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
        let err = (left + right - whole).norm();
        if err < tol || depth > 24 {
            return Ok(left + right + (left + right - whole) / 15.0);
        }
        Ok(simpson(g, a, m, fa, flm, fm, tol / 2.0, depth + 1)?
            + simpson(g, m, b, fm, frm, fb, tol / 2.0, depth + 1)?)
    }
    // seed with several panels so lobes between zeros are not missed
    let panels = 16usize;
    let mut acc = Complex64::new(0.0, 0.0);
    let two_pi = 2.0 * std::f64::consts::PI;
    for p in 0..panels {
        let a = two_pi * p as f64 / panels as f64;
        let b = two_pi * (p + 1) as f64 / panels as f64;
        let m = 0.5 * (a + b);
        acc += simpson(&g, a, b, g(a)?, g(m)?, g(b)?, 1e-8, 0)?;
    }
    let count = acc.re;
    if (count - count.round()).abs() > 0.01 {
        return Err(GefError::Inconsistency(format!(
            "quadrature winding {count} did not round cleanly"
        )));
    }
    Ok(count.round() as i64)
}

// ---------------------------------------------------------------------------
// zero finding

/// Polishes a zero of f by Newton from `start`; returns None when the
/// iteration leaves the disk of radius `max_radius` or fails to converge.
fn newton_zero(sample: &GefSample, start: Complex64, max_radius: f64) -> Option<Zero> {
    let mut z = start;
    for it in 0..60 {
        let jet = sample.eval_jet_unchecked(z);
        if jet.at_zero {
            return Some(Zero {
                location_re: z.re,
                location_im: z.im,
                residual: 0.0,
                newton_iters: it,
            });
        }
        let res = jet.normalized_abs_f();
        if res <= ZERO_RESIDUAL_TOL {
            return Some(Zero {
                location_re: z.re,
                location_im: z.im,
                residual: res,
                newton_iters: it,
            });
        }
        if jet.f_prime.norm() == 0.0 {
            return None;
        }
        let step = jet.f / jet.f_prime;
        z -= step;
        if z.norm() > max_radius {
            return None;
        }
    }
    None
}

struct QuadtreeState<'a> {
    sample: &'a GefSample,
    max_radius: f64,
    zeros: Vec<Zero>,
}

impl QuadtreeState<'_> {
    /// Processes the rectangle [lo, hi]; grows the cell by a quarter side and
    /// retries when a zero sits too close to the proposed boundary.
    fn descend(&mut self, lo: Complex64, hi: Complex64, jitter: u32) -> Result<()> {
        let side = (hi.re - lo.re).max(hi.im - lo.im);
        let corner_reach = lo.norm().max(hi.norm()).max(
            Complex64::new(lo.re, hi.im)
                .norm()
                .max(Complex64::new(hi.re, lo.im).norm()),
        );
        if corner_reach > self.sample.valid_radius() {
            return Err(GefError::Domain(format!(
                "zero-search cell around {} reaches past the valid radius",
                0.5 * (lo + hi)
            )));
        }
        // jitter by expansion only: an enlarged cell still covers the
        // original, so no zero can fall through a gap between siblings
        const PADS: [f64; 6] = [0.25, 0.37, 0.13, 0.31, 0.19, 0.43];
        let winding = match track_winding(self.sample, &rect_corners(lo, hi))? {
            Winding::Count(w) => w,
            Winding::NearZero(_) if (jitter as usize) < PADS.len() => {
                let pad = PADS[jitter as usize] * side;
                return self.descend(
                    lo - Complex64::new(pad, pad),
                    hi + Complex64::new(pad, pad),
                    jitter + 1,
                );
            }
            Winding::NearZero(z) => {
                return Err(GefError::Inconsistency(format!(
                    "could not jitter a cell boundary away from the zero near {z}"
                )))
            }
        };
        if winding <= 0 {
            return Ok(());
        }
        if winding > 40 && side <= 0.5 {
            return Err(GefError::Inconsistency(format!(
                "high-multiplicity zero cluster (winding {winding}) near {}",
                0.5 * (lo + hi)
            )));
        }
        if winding == 1 && side <= 0.5 {
            let center = 0.5 * (lo + hi);
            let starts = [
                center,
                lo + 0.25 * (hi - lo),
                lo + 0.75 * (hi - lo),
                Complex64::new(lo.re + 0.25 * (hi.re - lo.re), lo.im + 0.75 * (hi.im - lo.im)),
                Complex64::new(lo.re + 0.75 * (hi.re - lo.re), lo.im + 0.25 * (hi.im - lo.im)),
            ];
            // Newton must land inside (an inflated copy of) this cell;
            // converging to a neighbouring zero would lose this one to dedupe
            let pad = 0.3 * side;
            let inside = |z: Complex64| {
                z.re >= lo.re - pad
                    && z.re <= hi.re + pad
                    && z.im >= lo.im - pad
                    && z.im <= hi.im + pad
            };
            for s in starts {
                if let Some(z) = newton_zero(self.sample, s, self.max_radius) {
                    if inside(z.location()) {
                        self.zeros.push(z);
                        return Ok(());
                    }
                }
            }
            if side > 1e-3 {
                // fall through to subdivision; a smaller cell gives Newton a
                // start the right zero can win from
            } else {
                return Err(GefError::Inconsistency(format!(
                    "winding 1 in the cell around {center} but Newton found no zero there"
                )));
            }
        }
        if side < 1e-4 {
            return Err(GefError::Inconsistency(format!(
                "cluster of {winding} zeros below resolution near {}",
                0.5 * (lo + hi)
            )));
        }
        let mid = 0.5 * (lo + hi);
        self.descend(lo, mid, 0)?;
        self.descend(
            Complex64::new(mid.re, lo.im),
            Complex64::new(hi.re, mid.im),
            0,
        )?;
        self.descend(
            Complex64::new(lo.re, mid.im),
            Complex64::new(mid.re, hi.im),
            0,
        )?;
        self.descend(mid, hi, 0)?;
        Ok(())
    }
}

/// Finds every zero of f in the disk `|z| ≤ search_radius`.
///
/// A quadtree on winding numbers localizes zeros, Newton polishes them, and
/// the final count is verified against the boundary winding number of the
/// search circle. On a mismatch an inconsistency error is returned; the
/// caller may retry with a jittered subdivision.
pub fn find_zeros(sample: &GefSample, search_radius: f64) -> Result<Vec<Zero>> {
    if search_radius > sample.valid_radius() - 2.0 {
        return Err(GefError::Domain(format!(
            "search radius {search_radius} needs a margin of 2 inside the valid radius {}",
            sample.valid_radius()
        )));
    }
    let mut state = QuadtreeState {
        sample,
        max_radius: search_radius + 1.0,
        zeros: Vec::new(),
    };
    // tile the bounding square with cells small enough that jittered cells
    // intersecting the search disk stay inside the valid disk; the slight
    // origin offset keeps subdivision lines off symmetric zero locations
    let pad = 0.01;
    let margin = sample.valid_radius() - search_radius;
    let cell = (margin / 3.0).min(1.0);
    let full = 2.0 * (search_radius + pad);
    let n_cells = (full / cell).ceil() as i64;
    let step = full / n_cells as f64;
    let base = Complex64::new(-search_radius - pad, -search_radius - pad)
        + Complex64::new(0.0131 * step, 0.0173 * step);
    for i in 0..n_cells {
        for j in 0..n_cells {
            let lo = base + Complex64::new(i as f64 * step, j as f64 * step);
            let hi = lo + Complex64::new(step, step);
            // skip cells that cannot contain a zero of the search disk
            let dx = if 0.0 < lo.re {
                lo.re
            } else if 0.0 > hi.re {
                -hi.re
            } else {
                0.0
            };
            let dy = if 0.0 < lo.im {
                lo.im
            } else if 0.0 > hi.im {
                -hi.im
            } else {
                0.0
            };
            if (dx * dx + dy * dy).sqrt() > search_radius {
                continue;
            }
            state.descend(lo, hi, 0)?;
        }
    }

    let mut zeros = dedupe_zeros(state.zeros);
    zeros.retain(|z| z.location().norm() < search_radius);

    // argument-principle check over the search circle; move the circle a
    // little if a zero happens to sit on it
    let mut radius = search_radius;
    let mut circle_count = None;
    for attempt in 0..5 {
        let corners: Vec<Complex64> = (0..64)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / 64.0;
                radius * Complex64::new(th.cos(), th.sin())
            })
            .collect();
        match track_winding(sample, &corners)? {
            Winding::Count(w) => {
                circle_count = Some(w);
                break;
            }
            Winding::NearZero(_) => {
                radius = search_radius + 1e-3 * (attempt + 1) as f64;
            }
        }
    }
    let expected = zeros
        .iter()
        .filter(|z| z.location().norm() < radius)
        .count() as i64;
    match circle_count {
        Some(w) if w == expected => Ok(zeros),
        Some(w) => Err(GefError::Inconsistency(format!(
            "found {expected} zeros but the boundary winding is {w}"
        ))),
        None => Err(GefError::Inconsistency(
            "could not move the verification circle off a zero".into(),
        )),
    }
}

fn dedupe_zeros(mut zeros: Vec<Zero>) -> Vec<Zero> {
    zeros.sort_by(|a, b| {
        (a.location_re, a.location_im)
            .partial_cmp(&(b.location_re, b.location_im))
            .unwrap()
    });
    let mut out: Vec<Zero> = Vec::with_capacity(zeros.len());
    for z in zeros {
        if out
            .iter()
            .all(|w| (w.location() - z.location()).norm() > DEDUPE_RADIUS)
        {
            out.push(z);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// critical points

/// One damped Newton run on the map m(z) = conj(f′/f) − z.
/// The Jacobian in (x, y) coordinates is
/// [[Re G − 1, −Im G], [−Im G, −Re G − 1]] with G = (f′/f)′.
fn newton_critical(sample: &GefSample, start: Complex64, max_radius: f64) -> Option<Complex64> {
    let mut z = start;
    for _ in 0..80 {
        let jet = sample.eval_jet_unchecked(z);
        if jet.at_zero {
            return None;
        }
        let g = jet.grad_u;
        if g.norm() <= CRITICAL_RESIDUAL_TOL {
            return Some(z);
        }
        let gg = jet.log_deriv_prime();
        let (a, b) = (gg.re - 1.0, -gg.im);
        let d = -gg.re - 1.0;
        let det = a * d - b * b;
        if det.abs() < 1e-14 {
            return None;
        }
        // solve J δ = −g
        let dx = (-g.re * d + g.im * b) / det;
        let dy = (-a * g.im + b * g.re) / det;
        let mut step = Complex64::new(dx, dy);
        // damping: halve until the residual decreases
        let mut accepted = false;
        for _ in 0..10 {
            let zn = z + step;
            if zn.norm() > max_radius {
                step *= 0.5;
                continue;
            }
            let jn = sample.eval_jet_unchecked(zn);
            if !jn.at_zero && jn.grad_u.norm() < g.norm() {
                z = zn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    None
}

/// Grid pitch for Newton starts; singular points have density of order one
/// per unit area, so this oversamples them.
pub const START_GRID_PITCH: f64 = 0.4;

/// Locates the critical points of U in the disk `|z| ≤ search_radius`.
///
/// Starts on a uniform grid plus the midpoints of nearby zero pairs
/// (saddles lie between competing sinks).
pub fn find_critical_points(
    sample: &GefSample,
    search_radius: f64,
    zeros: &[Zero],
) -> Result<CriticalPointSearch> {
    if search_radius > sample.valid_radius() - 2.0 {
        return Err(GefError::Domain(format!(
            "search radius {search_radius} needs a margin of 2 inside the valid radius {}",
            sample.valid_radius()
        )));
    }
    let mut starts: Vec<Complex64> = Vec::new();
    let steps = (2.0 * search_radius / START_GRID_PITCH).ceil() as i64;
    for i in 0..=steps {
        for j in 0..=steps {
            let z = Complex64::new(
                -search_radius + START_GRID_PITCH * i as f64,
                -search_radius + START_GRID_PITCH * j as f64,
            );
            if z.norm() <= search_radius + 0.2 {
                starts.push(z);
            }
        }
    }
    for (i, a) in zeros.iter().enumerate() {
        for b in zeros.iter().skip(i + 1) {
            let (za, zb) = (a.location(), b.location());
            if (za - zb).norm() < 3.0 {
                starts.push(0.5 * (za + zb));
            }
        }
    }

    let search_bound = (search_radius + 1.0).min(sample.valid_radius() - 1.0);
    let mut found: Vec<Complex64> = Vec::new();
    let mut coverage_warnings: Vec<Complex64> = Vec::new();
    for &s in &starts {
        match newton_critical(sample, s, search_bound) {
            Some(z) => found.push(z),
            None => coverage_warnings.push(s),
        }
    }

    found.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    let mut points: Vec<CriticalPoint> = Vec::new();
    let mut degenerate: Vec<Complex64> = Vec::new();
    let mut kept: Vec<Complex64> = Vec::new();
    for z in found {
        if z.norm() > search_radius {
            continue;
        }
        if kept.iter().any(|w| (w - z).norm() <= DEDUPE_RADIUS) {
            continue;
        }
        // not a disguised zero
        if zeros
            .iter()
            .any(|w| (w.location() - z).norm() <= DEDUPE_RADIUS)
        {
            continue;
        }
        kept.push(z);
        let jet = sample.eval_jet_unchecked(z);
        let det = jet.hessian_det;
        if det.abs() < DEGENERACY_FLOOR {
            degenerate.push(z);
            continue;
        }
        points.push(CriticalPoint {
            location_re: z.re,
            location_im: z.im,
            kind: if det < 0.0 {
                CriticalKind::Saddle
            } else {
                CriticalKind::LocalMax
            },
            hessian_det: det,
            residual: jet.grad_u.norm(),
        });
    }
    Ok(CriticalPointSearch {
        points,
        degenerate,
        coverage_warnings,
    })
}

/// Classifies a location by the sign of det Hess U with the degeneracy floor.
pub fn classify(sample: &GefSample, location: Complex64) -> Result<Classification> {
    let jet = sample.eval_jet(location)?;
    if jet.at_zero || jet.normalized_abs_f() < 1e-13 {
        return Err(GefError::Domain(format!(
            "cannot classify at {location}: f vanishes there"
        )));
    }
    let det = jet.hessian_det;
    Ok(if det.abs() < DEGENERACY_FLOOR {
        Classification::Degenerate
    } else if det < 0.0 {
        Classification::Saddle
    } else {
        Classification::LocalMax
    })
}

/// Counts zeros, saddles and maxima inside the window.
pub fn morse_census(
    zeros: &[Zero],
    critical_points: &[CriticalPoint],
    window: Window,
) -> MorseCensus {
    let n_zeros = zeros
        .iter()
        .filter(|z| window.contains(z.location()))
        .count();
    let n_saddles = critical_points
        .iter()
        .filter(|p| p.kind == CriticalKind::Saddle && window.contains(p.location()))
        .count();
    let n_maxima = critical_points
        .iter()
        .filter(|p| p.kind == CriticalKind::LocalMax && window.contains(p.location()))
        .count();
    let area = window.area();
    MorseCensus {
        window,
        n_zeros,
        n_saddles,
        n_maxima,
        zero_density: n_zeros as f64 / area,
        saddle_density: n_saddles as f64 / area,
        max_density: n_maxima as f64 / area,
        alternating_sum: n_zeros as i64 + n_maxima as i64 - n_saddles as i64,
    }
}
