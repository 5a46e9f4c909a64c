//! Synthetic datasets with planted ground truth, used to check that each
//! stage recovers what was put in.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EncodedMatrix, Panel, PanelRow};
use crate::fm::FMModel;
use crate::{rng, Error, Result};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn bernoulli_half_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|_| (0..d).filter(|_| rng.random_bool(0.5)).collect())
        .collect()
}

fn feature_names(prefix: &str, d: usize) -> Vec<String> {
    let width = (d.max(2) - 1).to_string().len();
    (0..d).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Binary Bernoulli(0.5) inputs with targets from a random FM.
///
/// `w0`, `w` and `V` entries are standard normal, with `V` scaled by
/// `1/sqrt(k)`. Targets are `predict_naive(x) + Normal(0, noise_sigma)`.
pub fn synth_fm_data(
    n: usize,
    d: usize,
    k: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(EncodedMatrix, FMModel)> {
    if n == 0 || d == 0 || k == 0 {
        return Err(Error::invalid("synth_fm_data needs n, d, k >= 1"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::invalid("noise_sigma must be >= 0"));
    }
    let mut rng = rng::seeded(seed);
    let scale = 1.0 / (k as f64).sqrt();
    let w0 = normal(&mut rng);
    let w: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let v: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..k).map(|_| normal(&mut rng) * scale).collect())
        .collect();
    let model = FMModel::new(w0, w, v)?;

    let rows = bernoulli_half_rows(&mut rng, n, d);
    let mut target = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for row in &rows {
        x.iter_mut().for_each(|xi| *xi = 0.0);
        for &i in row {
            x[i] = 1.0;
        }
        let mut y = model.predict_naive(&x)?;
        if noise_sigma > 0.0 {
            y += noise_sigma * normal(&mut rng);
        }
        target.push(y);
    }
    let matrix = EncodedMatrix::new(feature_names("f", d), rows, target)?;
    Ok((matrix, model))
}

/// Ground truth behind [`synth_presence_data`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceTruth {
    /// Sorted indices of the features with nonzero coefficient.
    pub active: Vec<usize>,
    /// Length d; zero outside `active`.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl PresenceTruth {
    fn draw(rng: &mut ChaCha8Rng, d: usize, n_active: usize) -> Self {
        let mut active = index::sample(rng, d, n_active).into_vec();
        active.sort_unstable();
        let mut coefficients = vec![0.0; d];
        for &i in &active {
            let magnitude = rng.random_range(5.0..8.0);
            coefficients[i] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        }
        // Inputs are Bernoulli(0.5), so centring each term at x = 1/2 puts
        // the mean logit at zero.
        let bias = -0.5 * coefficients.iter().sum::<f64>();
        PresenceTruth {
            active,
            coefficients,
            bias,
        }
    }

    pub fn probability(&self, provisions: impl IntoIterator<Item = usize>) -> f64 {
        let z: f64 = self.bias + provisions.into_iter().map(|i| self.coefficients[i]).sum::<f64>();
        sigmoid(z)
    }
}

/// Binary inputs with labels drawn from a sparse planted logistic model.
pub fn synth_presence_data(
    n: usize,
    d: usize,
    n_active: usize,
    seed: u64,
) -> Result<(EncodedMatrix, PresenceTruth)> {
    if n == 0 || n_active == 0 || n_active > d {
        return Err(Error::invalid("synth_presence_data needs n >= 1 and 1 <= n_active <= d"));
    }
    let mut rng = rng::seeded(seed);
    let truth = PresenceTruth::draw(&mut rng, d, n_active);
    let rows = bernoulli_half_rows(&mut rng, n, d);
    let target = rows
        .iter()
        .map(|row| f64::from(u8::from(rng.random_bool(truth.probability(row.iter().copied())))))
        .collect();
    let matrix = EncodedMatrix::new(feature_names("p", d), rows, target)?;
    Ok((matrix, truth))
}

/// Shape of a synthetic trade panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSynthSpec {
    pub n_countries: usize,
    pub first_year: i32,
    pub n_years: usize,
    pub n_provisions: usize,
    /// Provisions that drive whether a flow is present.
    pub n_presence_active: usize,
    /// `<v_a, v_b>` of the planted provision pair.
    pub interaction_strength: f64,
    /// Standard deviation of the noise on ln(flow).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PanelSynthSpec {
    pub fn new(seed: u64) -> Self {
        PanelSynthSpec {
            n_countries: 16,
            first_year: 2000,
            n_years: 15,
            n_provisions: 20,
            n_presence_active: 5,
            interaction_strength: 1.5,
            noise_sigma: 0.3,
            seed,
        }
    }
}

/// Ground truth behind [`synth_panel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelTruth {
    pub presence: PresenceTruth,
    /// FM over the provision vector giving the provision part of ln(flow).
    pub flow_model: FMModel,
    pub planted_pair: (usize, usize),
    pub exporter_effects: BTreeMap<String, f64>,
    pub importer_effects: BTreeMap<String, f64>,
    pub year_effects: BTreeMap<i32, f64>,
}

/// Panel over all ordered country pairs and years with random provision
/// vectors.
///
/// Presence follows a sparse logistic model in the provisions. Positive
/// flows satisfy `ln(flow) = fm(provisions) + exporter + importer + year +
/// noise`, where the FM carries one strong positive pair interaction.
pub fn synth_panel(spec: &PanelSynthSpec) -> Result<(Panel, PanelTruth)> {
    let d = spec.n_provisions;
    if spec.n_countries < 2 || spec.n_years == 0 || d < 2 {
        return Err(Error::invalid(
            "synth_panel needs >= 2 countries, >= 1 year and >= 2 provisions",
        ));
    }
    if spec.n_presence_active == 0 || spec.n_presence_active > d {
        return Err(Error::invalid("n_presence_active must be in [1, n_provisions]"));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::invalid("noise_sigma must be >= 0"));
    }

    let mut rng = rng::seeded(spec.seed);
    let presence = PresenceTruth::draw(&mut rng, d, spec.n_presence_active);

    let pair = index::sample(&mut rng, d, 2).into_vec();
    let planted_pair = (pair[0].min(pair[1]), pair[0].max(pair[1]));
    let small = Normal::new(0.0, 0.1).map_err(|e| Error::invalid(e.to_string()))?;
    let w: Vec<f64> = (0..d).map(|_| 0.5 * normal(&mut rng)).collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|_| vec![small.sample(&mut rng), small.sample(&mut rng)])
        .collect();
    let root = spec.interaction_strength.abs().sqrt();
    let sign = spec.interaction_strength.signum();
    v[planted_pair.0] = vec![root, 0.0];
    v[planted_pair.1] = vec![sign * root, 0.0];
    let flow_model = FMModel::new(10.0, w, v)?;

    let countries = feature_names("C", spec.n_countries);
    let years: Vec<i32> = (0..spec.n_years as i32).map(|t| spec.first_year + t).collect();
    let exporter_effects: BTreeMap<String, f64> =
        countries.iter().map(|c| (c.clone(), normal(&mut rng))).collect();
    let importer_effects: BTreeMap<String, f64> =
        countries.iter().map(|c| (c.clone(), normal(&mut rng))).collect();
    let year_effects: BTreeMap<i32, f64> =
        years.iter().map(|&y| (y, 0.5 * normal(&mut rng))).collect();

    let mut rows = Vec::new();
    for &year in &years {
        for e in &countries {
            for i in &countries {
                if e == i {
                    continue;
                }
                let set: Vec<usize> = (0..d).filter(|_| rng.random_bool(0.5)).collect();
                let mut provisions = vec![0u8; d];
                for &p in &set {
                    provisions[p] = 1;
                }
                let present = rng.random_bool(presence.probability(set.iter().copied()));
                let flow = if present {
                    let ln_flow = flow_model.predict_active(&set)
                        + exporter_effects[e]
                        + importer_effects[i]
                        + year_effects[&year]
                        + spec.noise_sigma * normal(&mut rng);
                    ln_flow.exp()
                } else {
                    0.0
                };
                rows.push(PanelRow {
                    exporter: e.clone(),
                    importer: i.clone(),
                    year,
                    provisions,
                    flow,
                    flow_present: flow > 0.0,
                });
            }
        }
    }

    let panel = Panel {
        provision_ids: feature_names("PRV ", d),
        rows,
    };
    let truth = PanelTruth {
        presence,
        flow_model,
        planted_pair,
        exporter_effects,
        importer_effects,
        year_effects,
    };
    Ok((panel, truth))
}
