//! Simulated data sets and their on-disk format.
//!
//! A data set file starts with one `# key=value ...` header line, followed by CSV records
//! `time,value,is_pseudo` (value empty for Cox events and pseudo-observations). The latent
//! path lives in a sibling `<stem>.truth.csv` with records `time,state`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::bridge::bridge_interpolate;
use crate::error::{invalid, Error, Result};
use crate::exact::ea1_propagate;
use crate::filter::{Observation, PriorLaw};
use crate::models::{DiffusionModel, OuCoxModel, SineModel};
use crate::rng::SeedTree;

/// A model selected by name with its numeric parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelSpec {
    #[default]
    Sine,
    /// Ornstein–Uhlenbeck process without an intensity.
    Ou { rho: f64 },
    OuCox { rho: f64, a: f64, beta: f64 },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Box<dyn DiffusionModel>> {
        Ok(match *self {
            ModelSpec::Sine => Box::new(SineModel),
            ModelSpec::Ou { rho } => Box::new(OuCoxModel::ou(rho)?),
            ModelSpec::OuCox { rho, a, beta } => Box::new(OuCoxModel::new(rho, a, beta)?),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            ModelSpec::Sine => "sine",
            ModelSpec::Ou { .. } => "ou",
            ModelSpec::OuCox { .. } => "ou_cox",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `y ~ N(x, σ²)` at each observation time.
    Gaussian,
    /// Event times of a Cox process with intensity `ν(x)`.
    Cox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub model: ModelSpec,
    pub regime: Regime,
    pub prior: PriorLaw,
    pub start_time: f64,
    pub end_time: f64,
    pub observations: Vec<Observation>,
    /// Latent states `(time, x)` sorted by time.
    pub truth: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn observation_times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.time()).collect()
    }

    /// Latent state at `t` by linear interpolation of the stored truth.
    pub fn truth_at(&self, t: f64) -> f64 {
        let tr = &self.truth;
        let i = tr.partition_point(|p| p.0 < t);
        if i == 0 {
            return tr[0].1;
        }
        if i == tr.len() {
            return tr[tr.len() - 1].1;
        }
        let (t0, x0) = tr[i - 1];
        let (t1, x1) = tr[i];
        if t1 == t0 {
            x1
        } else {
            x0 + (x1 - x0) * (t - t0) / (t1 - t0)
        }
    }

    /// Keeps every `every`-th observation (the `every`-th, `2·every`-th, ...).
    pub fn subsample(&self, every: usize) -> Result<Dataset> {
        if every == 0 {
            return invalid("subsampling step must be positive");
        }
        let observations: Vec<Observation> = self
            .observations
            .iter()
            .skip(every - 1)
            .step_by(every)
            .copied()
            .collect();
        Ok(Dataset {
            observations,
            ..self.clone()
        })
    }

    fn sigma(&self) -> Option<f64> {
        self.observations.iter().find_map(|o| match *o {
            Observation::Noisy { sigma, .. } => Some(sigma),
            _ => None,
        })
    }

    fn header(&self) -> String {
        let mut h = String::from("#");
        let regime = match self.regime {
            Regime::Gaussian => "gaussian",
            Regime::Cox => "cox",
        };
        write!(h, " regime={regime} model={}", self.model.name()).unwrap();
        match self.model {
            ModelSpec::Sine => {}
            ModelSpec::Ou { rho } => write!(h, " rho={rho}").unwrap(),
            ModelSpec::OuCox { rho, a, beta } => write!(h, " rho={rho} a={a} beta={beta}").unwrap(),
        }
        if let Some(s) = self.sigma() {
            write!(h, " sigma={s}").unwrap();
        }
        match self.prior {
            PriorLaw::Point { x } => write!(h, " prior_mean={x} prior_var=0").unwrap(),
            PriorLaw::Normal { mean, var } => write!(h, " prior_mean={mean} prior_var={var}").unwrap(),
        }
        write!(h, " start_time={} end_time={}", self.start_time, self.end_time).unwrap();
        h
    }

    /// Serialises the observations (with header) and the truth file contents.
    pub fn to_csv(&self) -> Result<(String, String)> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "value", "is_pseudo"]).map_err(csv_err)?;
        for o in &self.observations {
            let value = match *o {
                Observation::Noisy { value, .. } | Observation::Constrained { value, .. } => value.to_string(),
                _ => String::new(),
            };
            let pseudo = if o.is_pseudo() { "1" } else { "0" };
            w.write_record([o.time().to_string(), value, pseudo.to_string()])
                .map_err(csv_err)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::Parse(e.to_string()))?;

        let mut t = csv::Writer::from_writer(Vec::new());
        t.write_record(["time", "state"]).map_err(csv_err)?;
        for (time, x) in &self.truth {
            t.write_record([time.to_string(), x.to_string()]).map_err(csv_err)?;
        }
        let truth = String::from_utf8(t.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::Parse(e.to_string()))?;
        Ok((format!("{}\n{}", self.header(), body), truth))
    }

    pub fn from_csv(data: &str, truth: &str) -> Result<Dataset> {
        let (header, body) = data
            .split_once('\n')
            .ok_or_else(|| Error::Parse("empty data set".into()))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("missing '#' header line".into()))?;
        let mut kv = std::collections::HashMap::new();
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token {tok:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<&str> {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Parse(format!("header lacks {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let regime = match get("regime")? {
            "gaussian" => Regime::Gaussian,
            "cox" => Regime::Cox,
            other => return Err(Error::Parse(format!("unknown regime {other}"))),
        };
        let model = match get("model")? {
            "sine" => ModelSpec::Sine,
            "ou" => ModelSpec::Ou { rho: num("rho")? },
            "ou_cox" => ModelSpec::OuCox {
                rho: num("rho")?,
                a: num("a")?,
                beta: num("beta")?,
            },
            other => return Err(Error::Parse(format!("unknown model {other}"))),
        };
        let prior_var = num("prior_var")?;
        let prior = if prior_var == 0.0 {
            PriorLaw::Point { x: num("prior_mean")? }
        } else {
            PriorLaw::Normal {
                mean: num("prior_mean")?,
                var: prior_var,
            }
        };
        let sigma = kv.get("sigma").map(|s| s.parse::<f64>()).transpose().map_err(|e| Error::Parse(e.to_string()))?;

        let mut observations = Vec::new();
        let mut r = csv::Reader::from_reader(body.as_bytes());
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 3 {
                return Err(Error::Parse(format!("expected 3 fields, got {}", rec.len())));
            }
            let time: f64 = rec[0].parse().map_err(|e| Error::Parse(format!("time: {e}")))?;
            let pseudo = match &rec[2] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse(format!("is_pseudo must be 0 or 1, got {other}"))),
            };
            let obs = match (regime, rec[1].is_empty(), pseudo) {
                (Regime::Cox, _, is_pseudo) => Observation::Event { time, is_pseudo },
                (Regime::Gaussian, true, _) | (Regime::Gaussian, _, true) => Observation::Uninformative { time },
                (Regime::Gaussian, false, false) => Observation::Noisy {
                    time,
                    value: rec[1].parse().map_err(|e| Error::Parse(format!("value: {e}")))?,
                    sigma: sigma.ok_or_else(|| Error::Parse("gaussian data set needs sigma".into()))?,
                },
            };
            observations.push(obs);
        }

        let mut truth_rows = Vec::new();
        let mut r = csv::Reader::from_reader(truth.as_bytes());
        for rec in r.deserialize::<(f64, f64)>() {
            truth_rows.push(rec.map_err(csv_err)?);
        }
        Ok(Dataset {
            model,
            regime,
            prior,
            start_time: num("start_time")?,
            end_time: num("end_time")?,
            observations,
            truth: truth_rows,
        })
    }

    /// Writes `path` and its sibling truth file.
    pub fn write(&self, path: &Path) -> Result<()> {
        let (data, truth) = self.to_csv()?;
        fs::write(path, data)?;
        Ok(fs::write(truth_path(path), truth)?)
    }

    pub fn read(path: &Path) -> Result<Dataset> {
        let data = fs::read_to_string(path)?;
        let truth = fs::read_to_string(truth_path(path))?;
        Dataset::from_csv(&data, &truth)
    }
}

/// `<dir>/<stem>.truth.csv` for a data file `<dir>/<stem>.<ext>`.
pub fn truth_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.truth.csv"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}


/// Sine diffusion started at 0, sampled exactly at `delta, 2·delta, ..., T` and observed
/// with `N(0, σ²)` noise.
pub fn simulate_sine_dataset(t_end: f64, delta: f64, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(t_end > 0.0 && delta > 0.0) || !(sigma >= 0.0) {
        return invalid("need T, delta > 0 and sigma >= 0");
    }
    let n = (t_end / delta).round() as usize;
    if n == 0 {
        return invalid("T must be at least delta");
    }
    let seeds = SeedTree::new(seed);
    let model = SineModel;
    let mut x = 0.0;
    let mut truth = vec![(0.0, 0.0)];
    let mut observations = Vec::with_capacity(n);
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for i in 1..=n {
        let mut rng = seeds.child(i as u64).rng();
        x = ea1_propagate(&model, x, delta, &mut rng)?;
        let time = i as f64 * delta;
        truth.push((time, x));
        observations.push(Observation::Noisy {
            time,
            value: x + noise.sample(&mut rng),
            sigma,
        });
    }
    Ok(Dataset {
        model: ModelSpec::Sine,
        regime: Regime::Gaussian,
        prior: PriorLaw::Point { x: 0.0 },
        start_time: 0.0,
        end_time: n as f64 * delta,
        observations,
        truth,
    })
}

/// Stationary OU process observed with Gaussian noise at `n_obs` times spaced `delta`.
pub fn simulate_ou_dataset(rho: f64, sigma: f64, n_obs: usize, delta: f64, seed: u64) -> Result<Dataset> {
    let model = OuCoxModel::ou(rho)?;
    if !(sigma > 0.0 && delta > 0.0) || n_obs == 0 {
        return invalid("need sigma, delta > 0 and at least one observation");
    }
    let seeds = SeedTree::new(seed);
    let var0 = model.stationary_variance();
    let mut rng = seeds.child(0).rng();
    let mut x = Normal::new(0.0, var0.sqrt()).unwrap().sample(&mut rng);
    let mut truth = vec![(0.0, x)];
    let mut observations = Vec::with_capacity(n_obs);
    for i in 1..=n_obs {
        let mut rng = seeds.child(i as u64).rng();
        let (m, v) = model.transition_moments(x, delta).expect("OU has Gaussian transitions");
        x = Normal::new(m, v.sqrt()).unwrap().sample(&mut rng);
        let time = i as f64 * delta;
        truth.push((time, x));
        observations.push(Observation::Noisy {
            time,
            value: x + sigma * Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng),
            sigma,
        });
    }
    Ok(Dataset {
        model: ModelSpec::Ou { rho },
        regime: Regime::Gaussian,
        prior: PriorLaw::Normal { mean: 0.0, var: var0 },
        start_time: 0.0,
        end_time: n_obs as f64 * delta,
        observations,
        truth,
    })
}

/// Multiplicative safety factor on the per-cell intensity bound.
pub const COX_BOUND_FACTOR: f64 = 1.5;
/// Additive inflation, in units of `β √dt`, covering within-cell excursions.
pub const COX_BOUND_EXCURSION: f64 = 3.0;
const COX_MAX_REFINEMENTS: u32 = 8;

/// Outcome of one attempt at simulating a Cox data set on a fixed grid.
enum CoxAttempt {
    Done(Vec<f64>, Vec<(f64, f64)>),
    BoundViolated,
}

fn cox_attempt(model: &OuCoxModel, t_end: f64, grid_dt: f64, seeds: SeedTree) -> Result<CoxAttempt> {
    let steps = (t_end / grid_dt).ceil() as usize;
    let h = t_end / steps as f64;
    let nu = |x: f64| model.intensity(x).expect("Cox model has an intensity");
    let mut rng = seeds.child(0).rng();
    let mut x = Normal::new(0.0, model.stationary_variance().sqrt())
        .unwrap()
        .sample(&mut rng);
    let mut truth = Vec::with_capacity(steps + 1);
    truth.push((0.0, x));
    let mut events = Vec::new();
    let mut cands = Vec::new();
    for k in 0..steps {
        let (s0, s1) = (k as f64 * h, (k + 1) as f64 * h);
        let (m, v) = model.transition_moments(x, h).expect("OU has Gaussian transitions");
        let x1 = Normal::new(m, v.sqrt()).unwrap().sample(&mut rng);
        let bound = COX_BOUND_FACTOR * nu(x).max(nu(x1)) + COX_BOUND_EXCURSION * model.beta * h.sqrt();
        if bound > 0.0 {
            let count = Poisson::new(bound * h).unwrap().sample(&mut rng) as usize;
            cands.clear();
            cands.extend((0..count).map(|_| s0 + h * rng.random::<f64>()));
            cands.sort_by(f64::total_cmp);
            let (mut sp, mut wp) = (s0, x);
            for &s in &cands {
                let w = bridge_interpolate(sp, wp, s1, x1, s, &mut rng);
                let rate = nu(w);
                if rate > bound {
                    return Ok(CoxAttempt::BoundViolated);
                }
                if rng.random::<f64>() * bound < rate {
                    events.push(s);
                }
                truth.push((s, w));
                (sp, wp) = (s, w);
            }
        }
        truth.push((s1, x1));
        x = x1;
    }
    Ok(CoxAttempt::Done(events, truth))
}

/// OU-driven Cox process on `[0, T]` started from stationarity. The latent path is exact
/// on a grid of spacing `grid_dt`; events come from thinning against a per-cell bound, and
/// a bound violation restarts the simulation on a grid twice as fine.
///
/// The observations are the event times followed by a pseudo event at `T`, so filters see
/// the event-free stretch after the last arrival.
pub fn simulate_cox_dataset(a: f64, beta: f64, rho: f64, t_end: f64, grid_dt: f64, seed: u64) -> Result<Dataset> {
    if !(grid_dt > 0.0) || !(t_end > 0.0) {
        return invalid("need grid_dt > 0 and T > 0");
    }
    let model = OuCoxModel::new(rho, a, beta)?;
    let seeds = SeedTree::new(seed);
    let mut dt = grid_dt;
    for attempt in 0..COX_MAX_REFINEMENTS {
        match cox_attempt(&model, t_end, dt, seeds.child(attempt as u64))? {
            CoxAttempt::Done(events, truth) => {
                let mut observations: Vec<Observation> = events
                    .iter()
                    .map(|&time| Observation::Event { time, is_pseudo: false })
                    .collect();
                if events.last().is_none_or(|&t| t < t_end) {
                    observations.push(Observation::Event {
                        time: t_end,
                        is_pseudo: true,
                    });
                }
                return Ok(Dataset {
                    model: ModelSpec::OuCox { rho, a, beta },
                    regime: Regime::Cox,
                    prior: PriorLaw::Normal {
                        mean: 0.0,
                        var: model.stationary_variance(),
                    },
                    start_time: 0.0,
                    end_time: t_end,
                    observations,
                    truth,
                });
            }
            CoxAttempt::BoundViolated => dt /= 2.0,
        }
    }
    Err(Error::Degenerate(format!(
        "intensity bound still violated after {COX_MAX_REFINEMENTS} grid refinements"
    )))
}
