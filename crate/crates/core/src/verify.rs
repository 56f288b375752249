//! Predicted versus tomographic fidelity of routed bit pairs.

use serde::{Deserialize, Serialize};

use crate::characterize::CalibrationSet;
use crate::device::DeviceModel;
use crate::error::{RouteError, TomographyError};
use crate::qstate::{fidelity, partial_trace, PureState};
use crate::router::{hop_schedule, predicted_state, predict_fidelity, synthesize_program, Route, RoutedState};
use crate::tomography::{expectations_from_counts, reconstruct, tomographic_fidelity, TomographyJob};

pub const INPUTS: [&str; 4] = ["00", "01", "10", "11"];

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Tomography(#[from] TomographyError),
}

/// Where the bits that started on `path[0]` and `path[1]` sit after
/// `n_hops` hops.
pub fn routed_pair(route: &Route, n_hops: usize) -> (usize, usize) {
    let mut at = (route.path[0], route.path[1]);
    let mv = |q: usize, a: usize, b: usize| if q == a { b } else if q == b { a } else { q };
    for (a, b) in hop_schedule(route, n_hops) {
        at = (mv(at.0, a, b), mv(at.1, a, b));
    }
    at
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub bits: String,
    pub hops: usize,
    /// Full path register.
    pub predicted: f64,
    /// Routed pair only, the quantity tomography estimates.
    pub predicted_pair: f64,
    pub tomographic: f64,
    pub clipped_mass: f64,
}

impl VerifyRow {
    pub fn abs_diff(&self) -> f64 {
        (self.predicted_pair - self.tomographic).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub shots: u64,
    pub seed: u64,
    pub max_hops: usize,
    pub mitigate: bool,
}

fn parse_bits(bits: &str) -> Result<(u8, u8), RouteError> {
    match RoutedState::bits(bits) {
        Some(RoutedState::Bits(b0, b1)) => Ok((b0, b1)),
        _ => Err(RouteError::BadRoute(format!("input bits {bits:?} must be one of 00, 01, 10, 11"))),
    }
}

/// One row per hop count `1..=max_hops`. The prediction uses `calib`;
/// tomography samples `device`, mitigated with `calib.confusion` if asked.
pub fn verify_series(
    device: &DeviceModel,
    calib: &CalibrationSet,
    route: &Route,
    bits: &str,
    opts: &VerifyOptions,
) -> Result<Vec<VerifyRow>, VerifyError> {
    route.check(device)?;
    let (b0, b1) = parse_bits(bits)?;
    let state = RoutedState::Bits(b0, b1);
    let ideal = PureState::from_bits(&[b0, b1]).map_err(RouteError::from)?;
    let mut register = route.path.clone();
    register.sort_unstable();
    let mut rows = Vec::with_capacity(opts.max_hops);
    for n in 1..=opts.max_hops {
        let predicted = predict_fidelity(calib, route, &state, n)?;
        let pair = routed_pair(route, n);
        let local = |q: usize| register.iter().position(|&r| r == q).expect("path qubit");
        let rho = predicted_state(calib, route, &state, n)?;
        let reduced = partial_trace(&rho, &[local(pair.0), local(pair.1)]).map_err(RouteError::from)?;
        let predicted_pair = fidelity(&ideal, &reduced).map_err(RouteError::from)?.clamp(0.0, 1.0);

        let targets = vec![pair.0, pair.1];
        let job = TomographyJob::new(targets.clone(), synthesize_program(route, (b0, b1), n), opts.shots)?;
        let records = job.sample(device, crate::characterize::experiment_seed(opts.seed, n))?;
        let mitigation = opts.mitigate.then_some(&calib.confusion);
        let recon = reconstruct(&expectations_from_counts(&targets, &records, mitigation)?);
        rows.push(VerifyRow {
            bits: bits.to_string(),
            hops: n,
            predicted,
            predicted_pair,
            tomographic: tomographic_fidelity(&ideal, &recon)?,
            clipped_mass: recon.diagnostics.clipped_mass.max(0.0) + 0.0,
        });
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "bits,hops,predicted,predicted_pair,tomographic,abs_diff,clipped_mass";

pub fn to_csv(rows: &[VerifyRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.bits,
            r.hops,
            r.predicted,
            r.predicted_pair,
            r.tomographic,
            r.abs_diff(),
            r.clipped_mass
        ));
    }
    out
}
