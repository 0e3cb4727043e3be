use serde::Serialize;

use super::datasets::Dataset;
use crate::error::{invalid, Result};
use crate::filter::{Observation, PriorLaw};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KalmanState {
    pub time: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Exact filtering moments for `dX = −ρX ds + dB` observed as `y ~ N(x, σ²)`, at every
/// observation time of `data`. Observations without a value only propagate the moments.
pub fn kalman_oracle(rho: f64, sigma: f64, data: &Dataset) -> Result<Vec<KalmanState>> {
    if !(rho > 0.0) || !(sigma >= 0.0) {
        return invalid("need rho > 0 and sigma >= 0");
    }
    let (mut m, mut v) = match data.prior {
        PriorLaw::Point { x } => (x, 0.0),
        PriorLaw::Normal { mean, var } => (mean, var),
    };
    let mut t = data.start_time;
    let mut out = Vec::with_capacity(data.observations.len());
    for obs in &data.observations {
        let dt = obs.time() - t;
        if !(dt > 0.0) {
            return invalid("observation times must be increasing");
        }
        let decay = (-rho * dt).exp();
        m *= decay;
        v = decay * decay * v - (-2.0 * rho * dt).exp_m1() / (2.0 * rho);
        if let Observation::Noisy { value, .. } = *obs {
            if sigma.is_finite() {
                let gain = v / (v + sigma * sigma);
                m += gain * (value - m);
                v *= 1.0 - gain;
            }
        }
        t = obs.time();
        out.push(KalmanState {
            time: t,
            mean: m,
            variance: v,
        });
    }
    Ok(out)
}
