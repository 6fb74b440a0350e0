//! Lumped electrothermal model of a current-biased nanowire.
//!
//! The wire (kinetic inductance `L`) is shunted by a load `R_L`. Each photon
//! absorption nucleates a normal domain whose two walls move at the
//! current-dependent velocity
//! `v(I) = v0·(u - 2)/sqrt(u - 1)`, `u = max(ψ·(I/I_sw)², u_floor)`.
//! Domains grow while `u > 2` and shrink once the current has been diverted
//! into the load. The circuit obeys
//! `L dI/dt = (I_b - I)·R_L - I·R_n`, `R_n = R_sq·(total normal length)/w`.
//!
//! Integration is fixed-step RK4 on a uniform output grid. Absorptions that
//! fall between grid points are handled with partial steps.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest relative change in rise time or domain lifetime tolerated when the
/// time step is halved.
pub const CONVERGENCE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElectrothermalParams {
    pub kinetic_inductance_henries: f64,
    pub load_resistance_ohms: f64,
    pub bias_current_amperes: f64,
    pub switching_current_amperes: f64,
    pub sheet_resistance_ohms_per_square: f64,
    pub wire_width_meters: f64,
    pub wire_length_meters: f64,
    pub wall_velocity_scale_meters_per_second: f64,
    pub stekly: f64,
    /// Lower bound on the velocity drive `u`. Caps the shrink speed of a
    /// domain once the current has collapsed; must exceed 1.
    pub velocity_drive_floor: f64,
    pub seed_domain_length_meters: f64,
    pub max_time_seconds: f64,
    pub time_step_seconds: f64,
}

impl Default for ElectrothermalParams {
    fn default() -> Self {
        Self {
            kinetic_inductance_henries: 400e-9,
            load_resistance_ohms: 50.0,
            bias_current_amperes: 0.97 * 37.5e-6,
            switching_current_amperes: 37.5e-6,
            sheet_resistance_ohms_per_square: 300.0,
            wire_width_meters: 70e-9,
            wire_length_meters: 800e-6,
            wall_velocity_scale_meters_per_second: 55.0,
            stekly: 3.0,
            velocity_drive_floor: 1.92,
            seed_domain_length_meters: 20e-9,
            max_time_seconds: 60e-9,
            time_step_seconds: 5e-12,
        }
    }
}

impl ElectrothermalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kinetic_inductance_henries", self.kinetic_inductance_henries),
            ("load_resistance_ohms", self.load_resistance_ohms),
            ("bias_current_amperes", self.bias_current_amperes),
            ("switching_current_amperes", self.switching_current_amperes),
            ("sheet_resistance_ohms_per_square", self.sheet_resistance_ohms_per_square),
            ("wire_width_meters", self.wire_width_meters),
            ("wire_length_meters", self.wire_length_meters),
            ("wall_velocity_scale_meters_per_second", self.wall_velocity_scale_meters_per_second),
            ("stekly", self.stekly),
            ("seed_domain_length_meters", self.seed_domain_length_meters),
            ("max_time_seconds", self.max_time_seconds),
            ("time_step_seconds", self.time_step_seconds),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.bias_current_amperes > self.switching_current_amperes {
            return Err(Error::config("bias current exceeds switching current"));
        }
        if !(self.velocity_drive_floor > 1.0 && self.velocity_drive_floor.is_finite()) {
            return Err(Error::config("velocity_drive_floor must exceed 1"));
        }
        if self.seed_domain_length_meters >= self.wire_length_meters {
            return Err(Error::config("seed domain longer than the wire"));
        }
        if self.time_step_seconds > self.max_time_seconds {
            return Err(Error::config("time step exceeds max_time"));
        }
        Ok(())
    }

    /// Speed of one domain wall, positive when the domain grows.
    pub fn wall_velocity(&self, current: f64) -> f64 {
        let j = current / self.switching_current_amperes;
        let u = (self.stekly * j * j).max(self.velocity_drive_floor);
        self.wall_velocity_scale_meters_per_second * (u - 2.0) / (u - 1.0).sqrt()
    }

    fn normal_resistance(&self, length: f64) -> f64 {
        self.sheet_resistance_ohms_per_square * length / self.wire_width_meters
    }

    fn with_step(&self, time_step_seconds: f64) -> Self {
        Self {
            time_step_seconds,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    pub times: Vec<f64>,
    /// Current through the nanowire.
    pub current: Vec<f64>,
    /// Voltage across the load, `(I_b - I)·R_L`.
    pub voltage: Vec<f64>,
    /// Per absorption, the length of the domain containing its site. A merged
    /// domain is reported under every site it covers.
    pub domain_lengths: Vec<Vec<f64>>,
    pub total_normal_length: Vec<f64>,
    /// Time from the first absorption until the total normal length first
    /// returns to zero.
    pub domain_lifetime: Option<f64>,
}

impl TransientResult {
    pub fn rise_time(&self) -> Result<f64> {
        extract_rise_time(&self.times, &self.voltage, 0.1, 0.9)
    }

    /// Linear interpolation of the current at `t`.
    pub fn current_at(&self, t: f64) -> f64 {
        interpolate(&self.times, &self.current, t)
    }

    /// CSV with columns `time_seconds, current_amperes, voltage_volts,
    /// total_normal_length_meters`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "time_seconds",
            "current_amperes",
            "voltage_volts",
            "total_normal_length_meters",
        ])?;
        for i in 0..self.times.len() {
            w.write_record(&[
                self.times[i].to_string(),
                self.current[i].to_string(),
                self.voltage[i].to_string(),
                self.total_normal_length[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.partition_point(|&v| v <= x) {
        0 => ys[0],
        i if i == xs.len() => ys[xs.len() - 1],
        i => {
            let (x0, x1) = (xs[i - 1], xs[i]);
            ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
        }
    }
}

/// Interval between the first crossings of `low·peak` and `high·peak`,
/// linearly interpolated between samples.
pub fn extract_rise_time(times: &[f64], signal: &[f64], low: f64, high: f64) -> Result<f64> {
    if times.len() != signal.len() || times.len() < 2 {
        return Err(Error::domain("rise time needs matching arrays of at least two samples"));
    }
    if !(0.0 < low && low < high && high <= 1.0) {
        return Err(Error::domain(format!("bad rise fractions {low}, {high}")));
    }
    let peak = signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::NoPulse("signal never rises above zero".into()));
    }
    let first = |level: f64| -> Option<f64> {
        if signal[0] >= level {
            return Some(times[0]);
        }
        signal.windows(2).zip(times.windows(2)).find_map(|(s, t)| {
            (s[0] < level && level <= s[1])
                .then(|| t[0] + (level - s[0]) / (s[1] - s[0]) * (t[1] - t[0]))
        })
    };
    match (first(low * peak), first(high * peak)) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Err(Error::NoPulse(format!(
            "pulse never reaches {high} of its peak"
        ))),
    }
}

#[derive(Debug, Clone)]
struct Domain {
    left: f64,
    right: f64,
    sites: Vec<usize>,
}

impl Domain {
    fn length(&self) -> f64 {
        (self.right - self.left).max(0.0)
    }
}

struct Solver<'a> {
    p: &'a ElectrothermalParams,
    current: f64,
    domains: Vec<Domain>,
    ever_normal: bool,
    first_absorption: Option<f64>,
    lifetime: Option<f64>,
}

impl Solver<'_> {
    fn rates(&self, current: f64, walls: &[(f64, f64)]) -> (f64, Vec<(f64, f64)>) {
        let p = self.p;
        let length: f64 = walls.iter().map(|&(l, r)| (r - l).max(0.0)).sum();
        let di = ((p.bias_current_amperes - current) * p.load_resistance_ohms
            - current * p.normal_resistance(length))
            / p.kinetic_inductance_henries;
        let v = p.wall_velocity(current);
        let wire = p.wire_length_meters;
        let dw = walls
            .iter()
            .map(|&(l, r)| {
                // Walls pinned at the wire ends cannot advance further out.
                let dl = if l <= 0.0 && v > 0.0 { 0.0 } else { -v };
                let dr = if r >= wire && v > 0.0 { 0.0 } else { v };
                (dl, dr)
            })
            .collect();
        (di, dw)
    }

    /// One RK4 step of length `h` starting at time `t`.
    fn step(&mut self, t: f64, h: f64) {
        let walls0: Vec<(f64, f64)> = self.domains.iter().map(|d| (d.left, d.right)).collect();
        let i0 = self.current;
        let shifted = |di: f64, dw: &[(f64, f64)], s: f64| {
            let walls: Vec<(f64, f64)> = walls0
                .iter()
                .zip(dw)
                .map(|(&(l, r), &(a, b))| (l + s * a, r + s * b))
                .collect();
            (i0 + s * di, walls)
        };
        let (k1i, k1w) = self.rates(i0, &walls0);
        let (i2, w2) = shifted(k1i, &k1w, 0.5 * h);
        let (k2i, k2w) = self.rates(i2, &w2);
        let (i3, w3) = shifted(k2i, &k2w, 0.5 * h);
        let (k3i, k3w) = self.rates(i3, &w3);
        let (i4, w4) = shifted(k3i, &k3w, h);
        let (k4i, k4w) = self.rates(i4, &w4);

        self.current = i0 + h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
        let wire = self.p.wire_length_meters;
        let mut last_collapse: Option<f64> = None;
        for (idx, d) in self.domains.iter_mut().enumerate() {
            let before = d.right - d.left;
            let comb = |k: usize| {
                let pick = |w: &[(f64, f64)]| if k == 0 { w[idx].0 } else { w[idx].1 };
                pick(&k1w) + 2.0 * pick(&k2w) + 2.0 * pick(&k3w) + pick(&k4w)
            };
            d.left = (d.left + h / 6.0 * comb(0)).max(0.0);
            d.right = (d.right + h / 6.0 * comb(1)).min(wire);
            let after = d.right - d.left;
            if after <= 0.0 {
                let tc = t + h * before / (before - after);
                last_collapse = Some(last_collapse.map_or(tc, |c: f64| c.max(tc)));
            }
        }
        self.domains.retain(|d| d.right > d.left);
        self.merge();
        if self.domains.is_empty() && self.ever_normal && self.lifetime.is_none() {
            if let (Some(tc), Some(t0)) = (last_collapse, self.first_absorption) {
                self.lifetime = Some(tc - t0);
            }
        }
    }

    fn merge(&mut self) {
        if self.domains.len() < 2 {
            return;
        }
        self.domains.sort_by(|a, b| a.left.total_cmp(&b.left));
        let mut merged: Vec<Domain> = Vec::with_capacity(self.domains.len());
        for d in self.domains.drain(..) {
            match merged.last_mut() {
                Some(last) if d.left <= last.right => {
                    last.right = last.right.max(d.right);
                    last.sites.extend(d.sites);
                }
                _ => merged.push(d),
            }
        }
        self.domains = merged;
    }

    fn absorb(&mut self, t: f64, site_index: usize, site: f64) {
        let half = 0.5 * self.p.seed_domain_length_meters;
        let wire = self.p.wire_length_meters;
        let left = (site - half).clamp(0.0, wire - 2.0 * half);
        self.domains.push(Domain {
            left,
            right: left + 2.0 * half,
            sites: vec![site_index],
        });
        self.ever_normal = true;
        self.first_absorption.get_or_insert(t);
        self.merge();
    }
}

fn check_absorptions(params: &ElectrothermalParams, absorption_times: &[f64]) -> Result<()> {
    if absorption_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::domain("absorption times must be finite and >= 0"));
    }
    if absorption_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("absorption times must be sorted"));
    }
    if absorption_times.iter().any(|&t| t > params.max_time_seconds) {
        return Err(Error::domain("absorption after max_time"));
    }
    Ok(())
}

/// Integrates at the configured step without the convergence check.
pub fn simulate_transient_fixed_step(
    params: &ElectrothermalParams,
    absorption_times: &[f64],
) -> Result<TransientResult> {
    params.validate()?;
    check_absorptions(params, absorption_times)?;

    let dt = params.time_step_seconds;
    let steps = (params.max_time_seconds / dt).round() as usize;
    let m = absorption_times.len();
    // Evenly spaced sites keep simultaneous absorptions in separate domains.
    let sites: Vec<f64> = (0..m)
        .map(|i| params.wire_length_meters * (i as f64 + 0.5) / m as f64)
        .collect();

    let mut solver = Solver {
        p: params,
        current: params.bias_current_amperes,
        domains: Vec::new(),
        ever_normal: false,
        first_absorption: None,
        lifetime: None,
    };
    let mut out = TransientResult {
        times: Vec::with_capacity(steps + 1),
        current: Vec::with_capacity(steps + 1),
        voltage: Vec::with_capacity(steps + 1),
        domain_lengths: vec![Vec::with_capacity(steps + 1); m],
        total_normal_length: Vec::with_capacity(steps + 1),
        domain_lifetime: None,
    };

    let mut next = 0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        // Absorptions within rounding of this grid point land on it.
        while next < m && absorption_times[next] <= t + 1e-6 * dt {
            solver.absorb(t, next, sites[next]);
            next += 1;
        }
        record(&solver, t, &mut out);
        if k == steps {
            break;
        }
        let t_end = (k + 1) as f64 * dt;
        let mut t_now = t;
        while next < m && absorption_times[next] < t_end - 1e-6 * dt {
            let ta = absorption_times[next];
            solver.step(t_now, ta - t_now);
            t_now = ta;
            while next < m && absorption_times[next] <= ta {
                solver.absorb(ta, next, sites[next]);
                next += 1;
            }
        }
        solver.step(t_now, t_end - t_now);
    }
    out.domain_lifetime = solver.lifetime;
    Ok(out)
}

fn record(solver: &Solver, t: f64, out: &mut TransientResult) {
    let p = solver.p;
    out.times.push(t);
    out.current.push(solver.current);
    out.voltage
        .push((p.bias_current_amperes - solver.current) * p.load_resistance_ohms);
    out.total_normal_length
        .push(solver.domains.iter().map(Domain::length).sum());
    for series in out.domain_lengths.iter_mut() {
        series.push(0.0);
    }
    for d in &solver.domains {
        for &s in &d.sites {
            *out.domain_lengths[s].last_mut().expect("pushed above") = d.length();
        }
    }
}

fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Integrates the transient and verifies it against a run at half the time
/// step: rise time and domain lifetime must agree within 1%.
pub fn simulate_transient(
    params: &ElectrothermalParams,
    absorption_times: &[f64],
) -> Result<TransientResult> {
    let coarse = simulate_transient_fixed_step(params, absorption_times)?;
    if absorption_times.is_empty() {
        return Ok(coarse);
    }
    let fine = simulate_transient_fixed_step(
        &params.with_step(0.5 * params.time_step_seconds),
        absorption_times,
    )?;
    match (coarse.rise_time(), fine.rise_time()) {
        (Ok(a), Ok(b)) if relative_change(a, b) > CONVERGENCE_TOLERANCE => {
            return Err(Error::Accuracy(format!(
                "rise time moved from {a:e} s to {b:e} s when the step was halved"
            )));
        }
        (Ok(_), Err(_)) | (Err(_), Ok(_)) => {
            return Err(Error::Accuracy("pulse detection depends on the time step".into()));
        }
        _ => {}
    }
    match (coarse.domain_lifetime, fine.domain_lifetime) {
        (Some(a), Some(b)) if relative_change(a, b) > CONVERGENCE_TOLERANCE => {
            Err(Error::Accuracy(format!(
                "domain lifetime moved from {a:e} s to {b:e} s when the step was halved"
            )))
        }
        (Some(_), None) | (None, Some(_)) => Err(Error::Accuracy(
            "domain collapse depends on the time step".into(),
        )),
        _ => Ok(coarse),
    }
}

/// Least-squares slope of `ln t_R` against `ln n`.
pub fn power_law_exponent(points: &[(u64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::domain("need at least two points for a slope"));
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, t)| ((n as f64).ln(), t.ln()))
        .collect();
    let len = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / len;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / len;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("photon numbers must differ"));
    }
    Ok(sxy / sxx)
}

/// 10–90% rise times of `n` simultaneous absorptions for `n = 1..=n_max`.
pub fn rise_times(params: &ElectrothermalParams, n_max: u64) -> Result<Vec<(u64, f64)>> {
    (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let r = simulate_transient(params, &vec![0.0; n as usize])?;
            Ok((n, r.rise_time()?))
        })
        .collect()
}

/// Exponent `p` of `t_R(n) ∝ n^p` fitted over `n = 1..=n_max`.
pub fn fit_rise_exponent(params: &ElectrothermalParams, n_max: u64) -> Result<f64> {
    if n_max < 3 {
        return Err(Error::domain("rise exponent fit needs n_max >= 3"));
    }
    power_law_exponent(&rise_times(params, n_max)?)
}

/// `I(delay)/I_b` after a single absorption at `t = 0`: the share of bias
/// current left to detect a second, delayed photon.
pub fn delayed_current_fraction(params: &ElectrothermalParams, delay: f64) -> Result<f64> {
    if !(delay >= 0.0) || delay > params.max_time_seconds {
        return Err(Error::domain(format!("delay {delay} outside [0, max_time]")));
    }
    let r = simulate_transient(params, &[0.0])?;
    Ok(r.current_at(delay) / params.bias_current_amperes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_absorption_is_quiescent() {
        let p = ElectrothermalParams::default();
        let r = simulate_transient(&p, &[]).unwrap();
        assert!(r.current.iter().all(|&i| i == p.bias_current_amperes));
        assert!(r.voltage.iter().all(|&v| v == 0.0));
        assert_eq!(r.domain_lifetime, None);
    }

    #[test]
    fn linear_ramp_rise() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 1e-12).collect();
        let ramp: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let tr = extract_rise_time(&times, &ramp, 0.1, 0.9).unwrap();
        assert!((tr - 80e-12).abs() < 1e-24);
    }

    #[test]
    fn single_pole_step_rise() {
        let tau = 1e-9;
        let dt = 1e-13;
        let times: Vec<f64> = (0..200_000).map(|i| i as f64 * dt).collect();
        let v: Vec<f64> = times.iter().map(|t| 1.0 - (-t / tau).exp()).collect();
        let tr = extract_rise_time(&times, &v, 0.1, 0.9).unwrap();
        assert!((tr - tau * 9f64.ln()).abs() < 1e-6 * tau);
    }

    #[test]
    fn flat_signal_has_no_pulse() {
        let times = [0.0, 1.0, 2.0];
        assert!(matches!(
            extract_rise_time(&times, &[0.0, 0.0, 0.0], 0.1, 0.9),
            Err(Error::NoPulse(_))
        ));
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(u64, f64)> = (1..=7).map(|n| (n, 3.0 * (n as f64).powf(-0.3))).collect();
        assert!((power_law_exponent(&pts).unwrap() + 0.3).abs() < 1e-9);
    }

    #[test]
    fn single_photon_pulse_respects_circuit_bounds() {
        let p = ElectrothermalParams::default();
        let r = simulate_transient(&p, &[0.0]).unwrap();
        let ib = p.bias_current_amperes;
        assert_eq!(r.current[0], ib);
        let peak = r.voltage.iter().copied().fold(0.0, f64::max);
        assert!(peak <= ib * p.load_resistance_ohms);
        assert!(r.current.iter().all(|&i| (0.0..=ib * (1.0 + 1e-12)).contains(&i)));
        for (i, v) in r.current.iter().zip(&r.voltage) {
            assert_eq!(*v, (ib - i) * p.load_resistance_ohms);
        }
        assert!(r.domain_lifetime.is_some());
        assert!((r.current.last().unwrap() - ib).abs() < 0.01 * ib);
    }

    #[test]
    fn rejects_bad_absorptions() {
        let p = ElectrothermalParams::default();
        assert!(matches!(simulate_transient(&p, &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(simulate_transient(&p, &[2e-9, 1e-9]), Err(Error::Domain(_))));
        assert!(matches!(simulate_transient(&p, &[-1e-9]), Err(Error::Domain(_))));
        assert!(matches!(delayed_current_fraction(&p, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn delayed_fraction_starts_at_one_and_falls() {
        let p = ElectrothermalParams::default();
        assert_eq!(delayed_current_fraction(&p, 0.0).unwrap(), 1.0);
        let r = simulate_transient(&p, &[0.0]).unwrap();
        let argmin = r
            .current
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        for w in r.current[..=argmin].windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn off_grid_absorption_matches_shifted_grid_run() {
        let p = ElectrothermalParams::default();
        let on = simulate_transient_fixed_step(&p, &[1e-9]).unwrap();
        let off = simulate_transient_fixed_step(&p, &[1e-9 + 0.5 * p.time_step_seconds]).unwrap();
        let a = on.domain_lifetime.unwrap();
        let b = off.domain_lifetime.unwrap();
        assert!((a - b).abs() < 1e-3 * a);
    }
}
