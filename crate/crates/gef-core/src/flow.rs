//! Gradient-curve integration: dZ/dt = −∇U(Z).
//!
//! The field is smooth away from the zeros of f and has a simple pole at
//! each zero, where `∇U(z) = (z−a)/|z−a|² + O(1)`. Trajectories are followed
//! with an embedded Dormand–Prince 5(4) pair with PI step control; once a
//! trajectory comes within the capture radius ε of a listed zero, the
//! remaining motion is replaced by the analytic local correction
//! (time ε²/2 + O(ε³), length ε + O(ε²)), which keeps the exact travel-time
//! law testable at tight tolerance.
//!
//! Because div(∇U) = −2 off the zeros, the time-t preimage of any region
//! contracts in area by exactly e^{−2t}; [`liouville_flow_area`] measures
//! that contraction by advecting a point cloud up the gradient and
//! cross-checking the image area with a membership Monte Carlo.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::critical::Zero;
use crate::error::{GefError, Result};
use crate::gef::{FieldJet, GefSample};
use crate::geom::{convex_hull, diameter_of, point_in_polygon};

/// Adaptive step control and termination thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Radius ε around a listed zero at which integration stops and the
    /// analytic capture correction is applied.
    pub capture_radius: f64,
    /// |∇U| below this (away from zeros) terminates as saddle stagnation.
    pub stagnation_grad_floor: f64,
    pub max_time: f64,
    pub max_steps: usize,
    /// Trajectories beyond this radius terminate as LeftWindow; when absent,
    /// the sample's valid radius minus the evaluation margin of 2 is used.
    pub window_bound: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            capture_radius: 1e-3,
            stagnation_grad_floor: 1e-9,
            // survival e^{-100}; exhausting this is an anomaly, not truncation
            max_time: 50.0,
            max_steps: 200_000,
            window_bound: None,
        }
    }
}

/// Why a trajectory stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    Sink { zero_index: usize },
    SaddleStagnation { location_re: f64, location_im: f64 },
    LeftWindow,
    Budget,
    /// Fixed-horizon advection reached its requested time.
    TimeReached,
}

impl Terminal {
    pub fn name(&self) -> &'static str {
        match self {
            Terminal::Sink { .. } => "sink",
            Terminal::SaddleStagnation { .. } => "saddle_stagnation",
            Terminal::LeftWindow => "left_window",
            Terminal::Budget => "budget",
            Terminal::TimeReached => "time_reached",
        }
    }
}

/// One gradient curve with its measured observables.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub start: Complex64,
    /// (time, location, U) at every accepted step.
    pub polyline: Vec<(f64, Complex64, f64)>,
    pub arc_length: f64,
    pub travel_time: f64,
    pub diameter: f64,
    pub terminal: Terminal,
    pub capture_correction_applied: bool,
}

/// Slim result of a sink assignment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SinkAssignment {
    pub zero_index: usize,
    pub sink_re: f64,
    pub sink_im: f64,
    pub travel_time: f64,
    pub arc_length: f64,
    pub diameter: f64,
}

impl SinkAssignment {
    pub fn sink(&self) -> Complex64 {
        Complex64::new(self.sink_re, self.sink_im)
    }
}

// ---------------------------------------------------------------------------
// spatial index over zeros

/// Uniform-grid index answering "nearest zero within distance 1" queries.
pub struct ZeroIndex {
    zeros: Vec<Complex64>,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl ZeroIndex {
    pub fn build(zeros: &[Zero]) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        let zs: Vec<Complex64> = zeros.iter().map(|z| z.location()).collect();
        for (i, z) in zs.iter().enumerate() {
            cells
                .entry((z.re.floor() as i64, z.im.floor() as i64))
                .or_default()
                .push(i as u32);
        }
        ZeroIndex { zeros: zs, cells }
    }

    pub fn len(&self) -> usize {
        self.zeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeros.is_empty()
    }

    pub fn location(&self, index: usize) -> Complex64 {
        self.zeros[index]
    }

    /// Nearest zero within distance 1 of z, if any.
    pub fn nearest(&self, z: Complex64) -> Option<(usize, f64)> {
        let (cx, cy) = (z.re.floor() as i64, z.im.floor() as i64);
        let mut best: Option<(usize, f64)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &i in bucket {
                        let d = (self.zeros[i as usize] - z).norm();
                        if d <= 1.0 && best.map_or(true, |(_, bd)| d < bd) {
                            best = Some((i as usize, d));
                        }
                    }
                }
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Dormand–Prince 5(4)

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    /// dZ/dt = −∇U (downhill, toward sinks).
    Descent,
    /// dZ/dt = +∇U (uphill; used for the Liouville area measurement).
    Ascent,
}

/// Field evaluation outcome for one stage point.
enum Stage {
    Ok(Complex64, FieldJet),
    AtZero(Complex64),
}

/// Step-by-step gradient-curve integrator; drives one trajectory and hands
/// each accepted point to the caller.
pub struct FlowIntegrator<'a> {
    sample: &'a GefSample,
    zeros: Option<&'a ZeroIndex>,
    config: IntegratorConfig,
    dir: FlowDirection,
    /// Stop exactly at this time instead of flowing to a sink.
    t_end: Option<f64>,
    bound: f64,

    pub z: Complex64,
    pub t: f64,
    pub arc_length: f64,
    pub u: f64,
    h: f64,
    err_prev: f64,
    jet: FieldJet,
    steps: usize,
    terminal: Option<Terminal>,
    capture_correction_applied: bool,
}

/// What happened on one `advance` call.
pub enum Advance {
    /// Step accepted; the integrator's public fields hold the new state.
    Step,
    Done(Terminal),
}

impl<'a> FlowIntegrator<'a> {
    pub fn new(
        sample: &'a GefSample,
        z0: Complex64,
        zeros: Option<&'a ZeroIndex>,
        config: IntegratorConfig,
        dir: FlowDirection,
        t_end: Option<f64>,
    ) -> Result<Self> {
        let bound = config
            .window_bound
            .unwrap_or(sample.valid_radius() - 2.0)
            .min(sample.valid_radius());
        if z0.norm() > bound {
            return Err(GefError::Domain(format!(
                "start {z0} lies outside the working window (radius {bound})"
            )));
        }
        let jet = sample.eval_jet(z0)?;
        if jet.at_zero {
            return Err(GefError::Domain(format!(
                "start {z0} is a zero of f; the gradient field is singular there"
            )));
        }
        Ok(FlowIntegrator {
            sample,
            zeros,
            config,
            dir,
            t_end,
            bound,
            z: z0,
            t: 0.0,
            arc_length: 0.0,
            u: jet.u,
            h: 1e-4,
            err_prev: 1.0,
            jet,
            steps: 0,
            terminal: None,
            capture_correction_applied: false,
        })
    }

    pub fn capture_correction_applied(&self) -> bool {
        self.capture_correction_applied
    }

    fn field(&self, jet: &FieldJet) -> Complex64 {
        match self.dir {
            FlowDirection::Descent => -jet.grad_u,
            FlowDirection::Ascent => jet.grad_u,
        }
    }

    fn stage(&self, z: Complex64) -> Result<Stage> {
        if z.norm() > self.sample.valid_radius() {
            return Err(GefError::Integration {
                location: z,
                reason: "stage point left the valid disk".into(),
            });
        }
        let jet = self.sample.eval_jet_unchecked(z);
        // subnormal |f| yields garbage log-derivatives; treat like a zero
        if jet.at_zero || !jet.grad_u.is_finite() || jet.f.norm() < 1e-300 {
            return Ok(Stage::AtZero(z));
        }
        Ok(Stage::Ok(self.field(&jet), jet))
    }

    /// Distance to the nearest listed zero (capped at 1).
    fn zero_distance(&self) -> (Option<usize>, f64) {
        match self.zeros.and_then(|ix| ix.nearest(self.z)) {
            Some((i, d)) => (Some(i), d),
            None => (None, 1.0),
        }
    }

    /// Checks the current state against every termination rule.
    fn check_terminal(&mut self) -> Option<Terminal> {
        if let Some(te) = self.t_end {
            if self.t >= te - 1e-15 {
                return Some(Terminal::TimeReached);
            }
        }
        let (zi, d) = self.zero_distance();
        if self.dir == FlowDirection::Descent && self.t_end.is_none() {
            if let Some(i) = zi {
                if d <= self.config.capture_radius {
                    // remaining roll-down inside the capture disk
                    self.t += 0.5 * d * d;
                    self.arc_length += d;
                    self.capture_correction_applied = true;
                    return Some(Terminal::Sink { zero_index: i });
                }
            }
        }
        if self.jet.grad_u.norm() < self.config.stagnation_grad_floor
            && d > 10.0 * self.config.capture_radius
        {
            return Some(Terminal::SaddleStagnation {
                location_re: self.z.re,
                location_im: self.z.im,
            });
        }
        if self.z.norm() > self.bound {
            return Some(Terminal::LeftWindow);
        }
        if self.t >= self.config.max_time || self.steps >= self.config.max_steps {
            return Some(Terminal::Budget);
        }
        None
    }

    /// Advances by one accepted step (or reports termination).
    pub fn advance(&mut self) -> Result<Advance> {
        if let Some(t) = self.terminal {
            return Ok(Advance::Done(t));
        }
        if let Some(t) = self.check_terminal() {
            self.terminal = Some(t);
            return Ok(Advance::Done(t));
        }

        let (_, d) = self.zero_distance();
        loop {
            self.steps += 1;
            if self.steps > self.config.max_steps {
                self.terminal = Some(Terminal::Budget);
                return Ok(Advance::Done(Terminal::Budget));
            }
            let k1 = self.field(&self.jet);
            // keep單 steps short of the nearest sink and of the window scale
            let speed = k1.norm().max(1e-30);
            let reach = (0.25 * d).max(0.45 * self.config.capture_radius).min(0.5);
            let mut h = self.h.min(reach / speed).max(1e-16);
            if let Some(te) = self.t_end {
                h = h.min(te - self.t);
            }

            let mut k = [Complex64::new(0.0, 0.0); 7];
            k[0] = k1;
            let mut jets: [Option<FieldJet>; 7] = [None; 7];
            let mut rejected_at_zero = false;
            for s in 0..6 {
                let mut zs = self.z;
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    zs += *kj * (h * A[s][j]);
                }
                match self.stage(zs)? {
                    Stage::Ok(v, jet) => {
                        k[s + 1] = v;
                        jets[s + 1] = Some(jet);
                    }
                    Stage::AtZero(_) => {
                        rejected_at_zero = true;
                        break;
                    }
                }
            }
            if rejected_at_zero {
                self.h = h * 0.25;
                if self.h < 1e-15 {
                    return Err(GefError::Integration {
                        location: self.z,
                        reason: "step underflow at an exact zero of f".into(),
                    });
                }
                continue;
            }

            let mut z5 = self.z;
            let mut err = Complex64::new(0.0, 0.0);
            let mut dlen = 0.0;
            for s in 0..7 {
                z5 += k[s] * (h * B5[s]);
                err += k[s] * (h * (B5[s] - B4[s]));
                dlen += k[s].norm() * (h * B5[s]);
            }
            let sc = self.config.abs_tol + self.config.rel_tol * self.z.norm().max(z5.norm());
            let err_norm = err.norm() / sc;

            // the 7th stage sits at z5 (FSAL)
            let jet5 = match jets[6] {
                Some(j) => j,
                None => self.sample.eval_jet_unchecked(z5),
            };

            let u_ok = match self.dir {
                FlowDirection::Descent => jet5.u <= self.u + 1e-9,
                FlowDirection::Ascent => jet5.u >= self.u - 1e-9,
            };

            if err_norm <= 1.0 && (u_ok || h < 1e-13) && !jet5.at_zero {
                // PI controller
                let fac = 0.9 * err_norm.max(1e-10).powf(-0.7 / 5.0)
                    * self.err_prev.max(1e-10).powf(0.4 / 5.0);
                self.err_prev = err_norm.max(1e-10);
                self.h = h * fac.clamp(0.2, 5.0);
                self.z = z5;
                self.t += h;
                self.arc_length += dlen;
                self.u = jet5.u;
                self.jet = jet5;
                return Ok(Advance::Step);
            }

            // rejected: shrink and retry
            let fac = if err_norm > 1.0 {
                0.9 * err_norm.powf(-1.0 / 5.0)
            } else {
                0.25
            };
            self.h = h * fac.clamp(0.05, 0.7);
            if self.h < 1e-15 {
                let near = self.zeros.and_then(|ix| ix.nearest(self.z)).is_some();
                if near {
                    // numerical corner right at the capture boundary
                    self.h = 1e-13;
                    continue;
                }
                return Err(GefError::Integration {
                    location: self.z,
                    reason: "step-size underflow; the field looks singular here but no \
                             listed zero is nearby (unlisted zero?)"
                        .into(),
                });
            }
        }
    }
}

// ---------------------------------------------------------------------------
// public operations

/// Integrates the gradient curve from z0 down to a sink (or another
/// terminal), recording the full polyline.
pub fn integrate_gradient_curve(
    sample: &GefSample,
    z0: Complex64,
    zeros: &ZeroIndex,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut it = FlowIntegrator::new(sample, z0, Some(zeros), *config, FlowDirection::Descent, None)?;
    let mut polyline = vec![(0.0, z0, it.u)];
    let terminal = loop {
        match it.advance()? {
            Advance::Step => polyline.push((it.t, it.z, it.u)),
            Advance::Done(t) => break t,
        }
    };
    let mut pts: Vec<Complex64> = polyline.iter().map(|p| p.1).collect();
    if let Terminal::Sink { zero_index } = terminal {
        pts.push(zeros.location(zero_index));
    }
    let diameter = diameter_of(&pts);
    Ok(Trajectory {
        start: z0,
        polyline,
        arc_length: it.arc_length,
        travel_time: it.t,
        diameter,
        terminal,
        capture_correction_applied: it.capture_correction_applied(),
    })
}

/// Thin wrapper over the integration that demands a sink terminal.
pub fn assign_sink(
    sample: &GefSample,
    z0: Complex64,
    zeros: &ZeroIndex,
    config: &IntegratorConfig,
) -> Result<SinkAssignment> {
    let traj = integrate_gradient_curve(sample, z0, zeros, config)?;
    match traj.terminal {
        Terminal::Sink { zero_index } => {
            let sink = zeros.location(zero_index);
            Ok(SinkAssignment {
                zero_index,
                sink_re: sink.re,
                sink_im: sink.im,
                travel_time: traj.travel_time,
                arc_length: traj.arc_length,
                diameter: traj.diameter,
            })
        }
        t => Err(GefError::Assignment {
            terminal: t.name().into(),
        }),
    }
}

/// Advects a point for exactly time `t` along the chosen direction;
/// `Ok(None)` means the point was captured by a sink before the horizon
/// (possible only for descent).
pub fn flow_for_time(
    sample: &GefSample,
    z0: Complex64,
    t: f64,
    zeros: Option<&ZeroIndex>,
    config: &IntegratorConfig,
    dir: FlowDirection,
) -> Result<Option<Complex64>> {
    if t == 0.0 {
        return Ok(Some(z0));
    }
    let mut cfg = *config;
    cfg.max_time = f64::INFINITY;
    let mut it = FlowIntegrator::new(sample, z0, zeros, cfg, dir, Some(t))?;
    loop {
        match it.advance()? {
            Advance::Step => {}
            Advance::Done(Terminal::TimeReached) => return Ok(Some(it.z)),
            Advance::Done(Terminal::Sink { .. }) => return Ok(None),
            Advance::Done(term) => {
                return Err(GefError::Integration {
                    location: it.z,
                    reason: format!("fixed-horizon advection ended early: {}", term.name()),
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Liouville contraction

/// Region shapes understood by the area-contraction measurement.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum RegionSpec {
    Disk {
        center_re: f64,
        center_im: f64,
        radius: f64,
    },
    /// Radii [r0, r1], angles [theta0, theta1].
    AnnularSector {
        r0: f64,
        r1: f64,
        theta0: f64,
        theta1: f64,
    },
}

impl RegionSpec {
    pub fn area(&self) -> f64 {
        match *self {
            RegionSpec::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            RegionSpec::AnnularSector { r0, r1, theta0, theta1 } => {
                0.5 * (theta1 - theta0) * (r1 * r1 - r0 * r0)
            }
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        match *self {
            RegionSpec::Disk {
                center_re,
                center_im,
                radius,
            } => (z - Complex64::new(center_re, center_im)).norm() <= radius,
            RegionSpec::AnnularSector { r0, r1, theta0, theta1 } => {
                let r = z.norm();
                let th = z.arg();
                r >= r0 && r <= r1 && th >= theta0 && th <= theta1
            }
        }
    }

    /// Deterministic interior grid cloud plus a boundary loop (the boundary
    /// images make the hull of the advected cloud tight).
    fn cloud(&self, interior_target: usize, boundary_points: usize) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut interior = Vec::new();
        match *self {
            RegionSpec::Disk {
                center_re,
                center_im,
                radius,
            } => {
                let c = Complex64::new(center_re, center_im);
                let n = (interior_target as f64).sqrt().ceil() as i64;
                let step = 2.0 * radius / n as f64;
                for i in 0..n {
                    for j in 0..n {
                        let p = c + Complex64::new(
                            -radius + (i as f64 + 0.5) * step,
                            -radius + (j as f64 + 0.5) * step,
                        );
                        if (p - c).norm() <= radius {
                            interior.push(p);
                        }
                    }
                }
                let boundary = (0..boundary_points)
                    .map(|i| {
                        let th = 2.0 * std::f64::consts::PI * i as f64 / boundary_points as f64;
                        c + radius * Complex64::new(th.cos(), th.sin())
                    })
                    .collect();
                (interior, boundary)
            }
            RegionSpec::AnnularSector { r0, r1, theta0, theta1 } => {
                let n = (interior_target as f64).sqrt().ceil() as i64;
                for i in 0..n {
                    for j in 0..n {
                        let r = r0 + (i as f64 + 0.5) / n as f64 * (r1 - r0);
                        let th = theta0 + (j as f64 + 0.5) / n as f64 * (theta1 - theta0);
                        interior.push(r * Complex64::new(th.cos(), th.sin()));
                    }
                }
                let mut boundary = Vec::new();
                let m = boundary_points / 4;
                for i in 0..m {
                    let th = theta0 + (theta1 - theta0) * i as f64 / m as f64;
                    boundary.push(r0 * Complex64::new(th.cos(), th.sin()));
                    boundary.push(r1 * Complex64::new(th.cos(), th.sin()));
                }
                for i in 0..m {
                    let r = r0 + (r1 - r0) * i as f64 / m as f64;
                    boundary.push(r * Complex64::new(theta0.cos(), theta0.sin()));
                    boundary.push(r * Complex64::new(theta1.cos(), theta1.sin()));
                }
                (interior, boundary)
            }
        }
    }
}

/// Result of the Liouville contraction measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiouvilleEstimate {
    pub initial_area: f64,
    /// Weight sum × e^{−2t} — the Jacobian identity applied to the cloud.
    pub primary_area: f64,
    /// Independent membership Monte Carlo over the advected hull.
    pub monte_carlo_area: f64,
    pub monte_carlo_se: f64,
    pub expected_ratio: f64,
    pub measured_ratio: f64,
}

/// Flows a region up the gradient for time `t` and measures the image area.
///
/// The image is the set of points whose downhill time-t flow lands in the
/// region, so its area is exactly `e^{−2t}` times the region's. The primary
/// estimate applies that Jacobian identity to the cloud's weight sum; the
/// Monte Carlo estimate samples the advected hull and tests membership by
/// flowing each sample back down — a route fully independent of the
/// identity being verified.
pub fn liouville_flow_area(
    sample: &GefSample,
    region: &RegionSpec,
    t: f64,
    zeros: &ZeroIndex,
    config: &IntegratorConfig,
    mc_samples: usize,
    mc_seed: u64,
) -> Result<LiouvilleEstimate> {
    let (interior, boundary) = region.cloud(400, 128);
    if interior.is_empty() {
        return Err(GefError::Domain("region produced an empty cloud".into()));
    }

    // containment: a spread of cloud points must agree on the sink
    let mut sink: Option<usize> = None;
    let probe_step = (interior.len() / 24).max(1);
    for z in interior
        .iter()
        .step_by(probe_step)
        .chain(boundary.iter().step_by((boundary.len() / 12).max(1)))
    {
        let a = assign_sink(sample, *z, zeros, config).map_err(|e| {
            GefError::RegionNotContained(format!("probe at {z} failed to reach a sink: {e}"))
        })?;
        match sink {
            None => sink = Some(a.zero_index),
            Some(s) if s == a.zero_index => {}
            Some(s) => {
                return Err(GefError::RegionNotContained(format!(
                    "points scatter to different sinks ({} vs {})",
                    s, a.zero_index
                )))
            }
        }
    }
    let sink_ix = sink.expect("cloud not empty");
    let sink_z = zeros.location(sink_ix);
    if region.contains(sink_z) {
        return Err(GefError::RegionNotContained(
            "region contains its own sink; the advected image is not defined".into(),
        ));
    }

    if t == 0.0 {
        return Ok(LiouvilleEstimate {
            initial_area: region.area(),
            primary_area: region.area(),
            monte_carlo_area: region.area(),
            monte_carlo_se: 0.0,
            expected_ratio: 1.0,
            measured_ratio: 1.0,
        });
    }

    // advect everything uphill for time t
    let mut images: Vec<Complex64> = Vec::with_capacity(interior.len() + boundary.len());
    for &z in interior.iter().chain(boundary.iter()) {
        match flow_for_time(sample, z, t, None, config, FlowDirection::Ascent)? {
            Some(w) => images.push(w),
            None => unreachable!("ascent never reaches a sink"),
        }
    }

    let contraction = (-2.0 * t).exp();
    let primary_area = region.area() * contraction;

    // membership Monte Carlo over the dilated hull of the image cloud
    let hull = convex_hull(&images);
    let centroid = hull.iter().sum::<Complex64>() / hull.len() as f64;
    let dilate = 1.06;
    let poly: Vec<Complex64> = hull
        .iter()
        .map(|p| centroid + (p - centroid) * dilate)
        .collect();
    let (mut lo, mut hi) = (poly[0], poly[0]);
    for p in &poly {
        lo = Complex64::new(lo.re.min(p.re), lo.im.min(p.im));
        hi = Complex64::new(hi.re.max(p.re), hi.im.max(p.im));
    }
    let bbox_area = (hi.re - lo.re) * (hi.im - lo.im);
    let mut rng = ChaCha12Rng::seed_from_u64(mc_seed);
    let mut tried = 0usize;
    let mut in_poly = 0usize;
    let mut hits = 0usize;
    while tried < mc_samples {
        let p = Complex64::new(
            lo.re + (hi.re - lo.re) * rng.gen::<f64>(),
            lo.im + (hi.im - lo.im) * rng.gen::<f64>(),
        );
        tried += 1;
        if !point_in_polygon(p, &poly) {
            continue;
        }
        in_poly += 1;
        let down = flow_for_time(sample, p, t, Some(zeros), config, FlowDirection::Descent)?;
        if let Some(q) = down {
            if region.contains(q) {
                hits += 1;
            }
        }
    }
    let poly_area = bbox_area * in_poly as f64 / tried as f64;
    let p_hit = hits as f64 / in_poly.max(1) as f64;
    let monte_carlo_area = poly_area * p_hit;
    let monte_carlo_se = poly_area * (p_hit * (1.0 - p_hit) / in_poly.max(1) as f64).sqrt();

    Ok(LiouvilleEstimate {
        initial_area: region.area(),
        primary_area,
        monte_carlo_area,
        monte_carlo_se,
        expected_ratio: contraction,
        measured_ratio: monte_carlo_area / region.area(),
    })
}

// ---------------------------------------------------------------------------
// ridge separatrix tracking (ring specimen)

/// Closed-form travel time of the pure-monomial radial flow from ρ0 to ρ1
/// (both inside the singular circle |z| = √n): t = ½ ln((n−ρ1²)/(n−ρ0²)).
pub fn monomial_travel_time(n: u32, rho0: f64, rho1: f64) -> f64 {
    let n = n as f64;
    0.5 * ((n - rho1 * rho1) / (n - rho0 * rho0)).ln()
}

/// A gradient curve of the ring specimen that rides the singular ridge.
#[derive(Debug, Clone)]
pub struct RidgeTrace {
    /// Polyline of the traced descending curve, ordered by increasing angle.
    pub polyline: Vec<Complex64>,
    /// Largest radial bracket width at any restart (tracking accuracy).
    pub max_bracket: f64,
    /// Sides (−1 inward / +1 outward) of the five demonstration starts.
    pub demo_exits: Vec<i8>,
}

#[derive(Clone, Copy, PartialEq)]
enum RideOutcome {
    Inward,
    Outward,
    ReachedAngle,
}

/// Runs one descent from (θ, ρ) and classifies how it leaves the ridge band.
/// Returns the outcome together with the last point that was still within
/// `sub_band` of the ridge (the usable part of the arc), appending that part
/// to `arc` when requested.
fn ride(
    sample: &GefSample,
    r: f64,
    z0: Complex64,
    theta_stop: f64,
    band: f64,
    sub_band: f64,
    config: &IntegratorConfig,
    arc: Option<&mut Vec<Complex64>>,
) -> Result<(RideOutcome, Complex64)> {
    let mut it = FlowIntegrator::new(sample, z0, None, *config, FlowDirection::Descent, None)?;
    let mut last_tight = z0;
    let mut arc = arc;
    loop {
        match it.advance()? {
            Advance::Step => {
                let z = it.z;
                let dr = z.norm() - r;
                if dr.abs() <= sub_band {
                    if let Some(v) = arc.as_deref_mut() {
                        v.push(z);
                    }
                    last_tight = z;
                }
                if dr.abs() > band {
                    let side = if dr > 0.0 {
                        RideOutcome::Outward
                    } else {
                        RideOutcome::Inward
                    };
                    return Ok((side, last_tight));
                }
                if z.arg() >= theta_stop {
                    return Ok((RideOutcome::ReachedAngle, z));
                }
            }
            Advance::Done(_) => {
                // budget or stagnation while in-band counts as staying near
                // the ridge at the reached angle
                return Ok((RideOutcome::ReachedAngle, it.z));
            }
        }
    }
}

/// Traces the descending gradient curve of the ring specimen that enters the
/// sector at the right edge and follows the singular circle `|z| = √n`.
///
/// The ridge is radially repelling at rate 2 while the angular drift is only
/// ~1/(10R), so a plain shot cannot stay on it; the tracer restarts from a
/// bisection bracket at a sequence of angles (every start still lies on a
/// true trajectory, and the concatenation shadows the separatrix to the
/// bracket tolerance).
pub fn trace_ring_separatrix(
    sample: &GefSample,
    n: u32,
    theta_start: f64,
    theta_end: f64,
    config: &IntegratorConfig,
) -> Result<RidgeTrace> {
    let r = (n as f64).sqrt();
    let band = 0.45;
    let sub_band = 0.03;
    let mut cfg = *config;
    cfg.max_time = 60.0;
    cfg.window_bound = Some(r + 3.0);

    let at = |theta: f64, rho: f64| rho * Complex64::new(theta.cos(), theta.sin());

    // demonstration starts across the sector's right edge
    let mut demo_exits = Vec::new();
    for i in 0..5 {
        let rho = r - 0.8 + 0.4 * i as f64;
        let (side, _) = ride(
            sample,
            r,
            at(theta_start, rho),
            theta_end,
            band,
            sub_band,
            &cfg,
            None,
        )?;
        demo_exits.push(match side {
            RideOutcome::Inward => -1,
            RideOutcome::Outward => 1,
            RideOutcome::ReachedAngle => 0,
        });
    }

    let mut polyline: Vec<Complex64> = Vec::new();
    let mut theta = theta_start;
    let mut bracket = (r - 0.8, r + 0.8);
    let mut max_bracket = 0.0f64;
    let mut restarts = 0usize;
    while theta < theta_end {
        restarts += 1;
        if restarts > 400 {
            return Err(GefError::Capacity(
                "ridge tracking exceeded its restart budget".into(),
            ));
        }
        // bisect the bracket at this angle down to machine-level width
        let mut lo = bracket.0;
        let mut hi = bracket.1;
        let mut reached_from_mid = false;
        for _ in 0..64 {
            if (hi - lo) < 4e-14 * r {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (side, _) = ride(
                sample,
                r,
                at(theta, mid),
                theta_end,
                band,
                sub_band,
                &cfg,
                None,
            )?;
            match side {
                RideOutcome::Inward => lo = mid,
                RideOutcome::Outward => hi = mid,
                RideOutcome::ReachedAngle => {
                    lo = mid;
                    hi = mid;
                    reached_from_mid = true;
                    break;
                }
            }
        }
        max_bracket = max_bracket.max(hi - lo);
        let mid = 0.5 * (lo + hi);
        let mut arc = Vec::new();
        let (outcome, last_tight) = ride(
            sample,
            r,
            at(theta, mid),
            theta_end,
            band,
            sub_band,
            &cfg,
            Some(&mut arc),
        )?;
        polyline.extend(arc);
        if reached_from_mid || outcome == RideOutcome::ReachedAngle {
            break;
        }
        // re-anchor at the last point that still hugged the ridge
        let new_theta = last_tight.arg();
        if new_theta <= theta + 1e-7 {
            return Err(GefError::Inconsistency(format!(
                "ridge tracking stalled at angle {theta}"
            )));
        }
        theta = new_theta;
        let rho = last_tight.norm();
        // fresh bracket around the surviving radius, widened until its ends
        // verifiably escape to opposite sides
        let mut w = 1e-6 * r.max(1.0);
        loop {
            let lo_side = ride(
                sample,
                r,
                at(theta, rho - w),
                theta_end,
                band,
                sub_band,
                &cfg,
                None,
            )?
            .0;
            let hi_side = ride(
                sample,
                r,
                at(theta, rho + w),
                theta_end,
                band,
                sub_band,
                &cfg,
                None,
            )?
            .0;
            let lo_ok = lo_side != RideOutcome::Outward;
            let hi_ok = hi_side != RideOutcome::Inward;
            if lo_ok && hi_ok {
                break;
            }
            w *= 4.0;
            if w > band {
                return Err(GefError::Inconsistency(format!(
                    "lost the ridge bracket at angle {theta}"
                )));
            }
        }
        bracket = (rho - w, rho + w);
    }

    Ok(RidgeTrace {
        polyline,
        max_bracket,
        demo_exits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::find_zeros;
    use crate::gef::{make_specimen, sample_gef, SampleKind};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn origin_zero() -> Vec<Zero> {
        vec![Zero {
            location_re: 0.0,
            location_im: 0.0,
            residual: 0.0,
            newton_iters: 0,
        }]
    }

    #[test]
    fn monomial_radial_descent_matches_closed_form() {
        // n is kept small: |f| ~ ρ^n/√(n!) must stay representable down to
        // the capture radius
        let n = 25u32;
        let sample = make_specimen(SampleKind::SpecimenMonomial { n }).unwrap();
        let zeros = origin_zero();
        let index = ZeroIndex::build(&zeros);
        let config = IntegratorConfig::default();
        let rho0 = 3.0;
        let traj = integrate_gradient_curve(&sample, c(rho0, 0.0), &index, &config).unwrap();
        assert!(matches!(traj.terminal, Terminal::Sink { zero_index: 0 }));
        assert!(traj.capture_correction_applied);
        assert!(
            (traj.arc_length - rho0).abs() < 1e-5,
            "radial arc length {} vs {}",
            traj.arc_length,
            rho0
        );
        // oracle: the radial ODE dρ/dt = (ρ²−n)/ρ in closed form down to the
        // capture radius, plus the same d²/2 capture convention (the actual
        // stopping distance differs from ε by O(ε), worth only ~ε² here)
        let d = config.capture_radius;
        let oracle = monomial_travel_time(n, rho0, d) + 0.5 * d * d;
        assert!(
            (traj.travel_time - oracle).abs() < 5e-6,
            "time {} vs oracle {}",
            traj.travel_time,
            oracle
        );
        // the polyline is a radial segment
        for (_, z, _) in &traj.polyline {
            assert!(z.im.abs() < 1e-9, "trajectory left the ray: {z}");
        }
        // U decreases monotonically
        for w in traj.polyline.windows(2) {
            assert!(w[1].2 <= w[0].2 + 1e-9);
        }
    }

    #[test]
    fn start_inside_capture_radius() {
        let sample = make_specimen(SampleKind::SpecimenMonomial { n: 4 }).unwrap();
        let zeros = origin_zero();
        let index = ZeroIndex::build(&zeros);
        let config = IntegratorConfig::default();
        let z0 = c(5e-4, 0.0);
        let traj = integrate_gradient_curve(&sample, z0, &index, &config).unwrap();
        assert!(matches!(traj.terminal, Terminal::Sink { .. }));
        assert_eq!(traj.polyline.len(), 1);
        assert!((traj.travel_time - 0.5 * 25e-8).abs() < 1e-12);
        assert!((traj.arc_length - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn metric_inequalities_and_sink_stability() {
        let sample = sample_gef(101, 8.0, 1e-10).unwrap();
        let zeros = find_zeros(&sample, 6.0).unwrap();
        let index = ZeroIndex::build(&zeros);
        let config = IntegratorConfig::default();
        let mut stable_checked = 0;
        for i in 0..12 {
            let z0 = c(
                -2.0 + 4.0 * ((i * 7) % 12) as f64 / 11.0,
                -2.0 + 4.0 * ((i * 5) % 12) as f64 / 11.0,
            );
            if sample.eval_jet(z0).unwrap().normalized_abs_f() < 1e-6 {
                continue;
            }
            let a = assign_sink(&sample, z0, &index, &config).unwrap();
            let sink = a.sink();
            assert!((z0 - sink).norm() <= a.diameter + 1e-9);
            assert!(a.diameter <= a.arc_length + 1e-9);
            // perturbing the start off boundaries keeps the sink
            let b = assign_sink(&sample, z0 + c(1e-6, -1e-6), &index, &config);
            if let Ok(b) = b {
                if b.zero_index == a.zero_index {
                    stable_checked += 1;
                }
            }
        }
        assert!(stable_checked >= 8, "only {stable_checked} stable");
    }

    #[test]
    fn step_halving_convergence() {
        let sample = sample_gef(55, 8.0, 1e-10).unwrap();
        let zeros = find_zeros(&sample, 6.0).unwrap();
        let index = ZeroIndex::build(&zeros);
        let coarse = IntegratorConfig {
            rel_tol: 1e-6,
            ..Default::default()
        };
        let fine = IntegratorConfig {
            rel_tol: 5e-7,
            ..Default::default()
        };
        for z0 in [c(1.3, 0.4), c(-2.0, 2.2), c(0.1, -1.7)] {
            let a = assign_sink(&sample, z0, &index, &coarse).unwrap();
            let b = assign_sink(&sample, z0, &index, &fine).unwrap();
            assert_eq!(a.zero_index, b.zero_index);
            let dt = (a.travel_time - b.travel_time).abs() / b.travel_time.max(1e-9);
            let dl = (a.arc_length - b.arc_length).abs() / b.arc_length.max(1e-9);
            assert!(dt < 10.0 * coarse.rel_tol, "time drift {dt}");
            assert!(dl < 10.0 * coarse.rel_tol, "length drift {dl}");
        }
    }

    #[test]
    fn travel_time_is_roughly_exponential() {
        // smoke-scale version of the exact law P{τ > t} = e^{−2t}
        let mut taus = Vec::new();
        for seed in 0..60u64 {
            let sample = sample_gef(1000 + seed, 7.0, 1e-9).unwrap();
            let zeros = match find_zeros(&sample, 5.0) {
                Ok(z) => z,
                Err(_) => continue,
            };
            let index = ZeroIndex::build(&zeros);
            let config = IntegratorConfig::default();
            if let Ok(a) = assign_sink(&sample, c(0.0, 0.0), &index, &config) {
                taus.push(a.travel_time);
            }
        }
        assert!(taus.len() >= 55, "only {} assignments", taus.len());
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        // Exp(2) has mean 0.5; 60 samples put the SE near 0.065
        assert!((mean - 0.5).abs() < 0.26, "mean travel time {mean}");
    }

    #[test]
    fn liouville_monomial_annular_sector_exact() {
        let n = 25u32;
        let sample = make_specimen(SampleKind::SpecimenMonomial { n }).unwrap();
        let zeros = origin_zero();
        let index = ZeroIndex::build(&zeros);
        let config = IntegratorConfig::default();
        let region = RegionSpec::AnnularSector {
            r0: 3.2,
            r1: 4.2,
            theta0: 0.3,
            theta1: 0.8,
        };
        let t = 0.4;
        let est =
            liouville_flow_area(&sample, &region, t, &index, &config, 4000, 77).unwrap();
        // closed form: u = n − ρ² obeys u(t) = u(0)e^{−2t} uphill, the sector
        // contracts exactly; the MC estimate must agree within its noise
        assert!((est.primary_area / est.initial_area - (-2.0 * t as f64).exp()).abs() < 1e-12);
        assert!(
            (est.monte_carlo_area - est.primary_area).abs()
                < 3.5 * est.monte_carlo_se + 0.01 * est.primary_area,
            "mc {} vs primary {} (se {})",
            est.monte_carlo_area,
            est.primary_area,
            est.monte_carlo_se
        );
    }

    #[test]
    fn liouville_time_zero_identity() {
        let sample = make_specimen(SampleKind::SpecimenMonomial { n: 25 }).unwrap();
        let index = ZeroIndex::build(&origin_zero());
        let config = IntegratorConfig::default();
        let region = RegionSpec::Disk {
            center_re: 3.0,
            center_im: 0.0,
            radius: 0.3,
        };
        let est = liouville_flow_area(&sample, &region, 0.0, &index, &config, 10, 1).unwrap();
        assert_eq!(est.measured_ratio, 1.0);
    }

    #[test]
    fn ring_separatrix_reaches_the_top() {
        let n = 400u32;
        let sample = make_specimen(SampleKind::SpecimenRing { n }).unwrap();
        let config = IntegratorConfig::default();
        let th0 = std::f64::consts::FRAC_PI_2 - 0.1;
        let th1 = std::f64::consts::FRAC_PI_2 + 0.002;
        let trace = trace_ring_separatrix(&sample, n, th0, th1, &config).unwrap();
        // the five demonstration shots bracket the ridge
        assert!(trace.demo_exits.contains(&-1));
        assert!(trace.demo_exits.contains(&1));
        // the traced curve passes near i√n = 20i
        let target = c(0.0, 20.0);
        let min_dist = trace
            .polyline
            .iter()
            .map(|z| (z - target).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(min_dist <= 0.1, "closest approach {min_dist}");
        let diam = crate::geom::diameter_of(&trace.polyline);
        assert!(diam >= 1.0, "diameter {diam}");
    }
}
