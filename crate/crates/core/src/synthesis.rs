//! Synthetic respondent populations drawn from known 3PL parameters.
//!
//! Respondent `j` draws from its own ChaCha8 stream (`stream = j`) of the
//! seeded generator, so output does not depend on thread count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ItemParameters, LabeledInstance, ModelPredictions, ResponseMatrix};
use crate::error::{Error, Result};
use crate::irt::prob_unchecked;

/// Identifies the random stream layout. Bump when draws change.
pub const GENERATOR_ID: &str = "chacha8-stream-per-respondent/rand_distr-0.5/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbilityDistribution {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Explicit { values: Vec<f64> },
}

impl Default for AbilityDistribution {
    fn default() -> Self {
        AbilityDistribution::Normal { mean: 0.0, sd: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_respondents: usize,
    #[serde(default)]
    pub ability_distribution: AbilityDistribution,
    pub items: Vec<ItemParameters<f64>>,
    pub seed: u64,
    /// Respondent ids are this prefix plus a zero-padded index.
    #[serde(default = "default_prefix")]
    pub respondent_prefix: String,
}

fn default_prefix() -> String {
    "r".to_string()
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_respondents == 0 {
            return Err(Error::invalid("population needs at least one respondent"));
        }
        if self.items.is_empty() {
            return Err(Error::invalid("population needs at least one item"));
        }
        self.items.iter().try_for_each(|it| it.validate())?;
        match &self.ability_distribution {
            AbilityDistribution::Normal { mean, sd } => {
                if !(mean.is_finite() && sd.is_finite() && *sd > 0.0) {
                    return Err(Error::invalid(format!(
                        "invalid normal ability distribution ({mean}, {sd})"
                    )));
                }
            }
            AbilityDistribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::invalid(format!(
                        "invalid uniform ability distribution ({lo}, {hi})"
                    )));
                }
            }
            AbilityDistribution::Explicit { values } => {
                if values.len() != self.n_respondents {
                    return Err(Error::invalid(format!(
                        "{} explicit abilities for {} respondents",
                        values.len(),
                        self.n_respondents
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("explicit abilities must be finite"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub matrix: ResponseMatrix,
    /// True abilities, aligned with the matrix rows.
    pub abilities: Vec<f64>,
}

pub(crate) fn padded_ids(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(3);
    (0..n).map(|j| format!("{prefix}{j:0width$}")).collect()
}

pub fn generate_population(spec: &PopulationSpec) -> Result<Population> {
    spec.validate()?;
    let ids = padded_ids(&spec.respondent_prefix, spec.n_respondents);
    let normal = match spec.ability_distribution {
        AbilityDistribution::Normal { mean, sd } => {
            Some(Normal::new(mean, sd).map_err(|e| Error::invalid(e.to_string()))?)
        }
        _ => None,
    };
    let rows: Vec<(f64, Vec<u8>)> = (0..spec.n_respondents)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(j as u64);
            let theta = match &spec.ability_distribution {
                AbilityDistribution::Normal { .. } => {
                    normal.expect("normal built above").sample(&mut rng)
                }
                AbilityDistribution::Uniform { lo, hi } => rng.random_range(*lo..*hi),
                AbilityDistribution::Explicit { values } => values[j],
            };
            let row = spec
                .items
                .iter()
                .map(|it| (rng.random::<f64>() < prob_unchecked(theta, it)) as u8)
                .collect();
            (theta, row)
        })
        .collect();
    let (abilities, rows): (Vec<f64>, Vec<Vec<u8>>) = rows.into_iter().unzip();
    let item_ids = spec.items.iter().map(|it| it.item_id.clone()).collect();
    Ok(Population {
        matrix: ResponseMatrix::new(ids, item_ids, rows)?,
        abilities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemRanges {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub c: (f64, f64),
}

impl Default for ItemRanges {
    fn default() -> Self {
        Self {
            a: (0.8, 2.2),
            b: (-2.0, 2.0),
            c: (0.0, 0.25),
        }
    }
}

/// Items with parameters drawn uniformly from `ranges`, ids `{prefix}NNN`.
pub fn random_items(
    n: usize,
    ranges: &ItemRanges,
    prefix: &str,
    seed: u64,
) -> Result<Vec<ItemParameters<f64>>> {
    for (name, (lo, hi)) in [("a", ranges.a), ("b", ranges.b), ("c", ranges.c)] {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!(
                "invalid range for {name}: ({lo}, {hi})"
            )));
        }
    }
    if !(ranges.c.0 >= 0.0 && ranges.c.1 < 1.0) {
        return Err(Error::invalid("guessing range must lie in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        }
    };
    padded_ids(prefix, n)
        .into_iter()
        .map(|id| {
            let a = draw(&mut rng, ranges.a);
            let b = draw(&mut rng, ranges.b);
            let c = draw(&mut rng, ranges.c);
            ItemParameters::new(id, a, b, c)
        })
        .collect()
}

/// Ground-truth labels with exactly `n_positive` positives in seeded order.
pub fn random_labels(
    item_ids: &[String],
    n_positive: usize,
    seed: u64,
) -> Result<Vec<LabeledInstance>> {
    if n_positive > item_ids.len() {
        return Err(Error::invalid(format!(
            "{n_positive} positives requested for {} instances",
            item_ids.len()
        )));
    }
    let mut labels: Vec<u8> = (0..item_ids.len())
        .map(|k| (k < n_positive) as u8)
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(item_ids
        .iter()
        .zip(labels)
        .map(|(id, label)| LabeledInstance {
            instance_id: id.clone(),
            label,
        })
        .collect())
}

/// Turns correctness rows into hard predictions: a correct answer repeats the
/// true label, a wrong one flips it.
pub fn predictions_from_responses(
    truth: &[LabeledInstance],
    matrix: &ResponseMatrix,
) -> Result<Vec<ModelPredictions>> {
    let index = matrix.item_index();
    let columns = truth
        .iter()
        .map(|t| {
            index.get(t.instance_id.as_str()).copied().ok_or_else(|| {
                Error::invalid(format!(
                    "instance `{}` not in response matrix",
                    t.instance_id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if columns.len() != matrix.n_items() {
        return Err(Error::invalid("labels do not cover every response column"));
    }
    Ok(matrix
        .respondent_ids()
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let predictions = truth
                .iter()
                .zip(&columns)
                .map(|(t, &i)| LabeledInstance {
                    instance_id: t.instance_id.clone(),
                    label: if matrix.get(j, i) == 1 {
                        t.label
                    } else {
                        1 - t.label
                    },
                })
                .collect();
            ModelPredictions::new(id.clone(), predictions)
        })
        .collect())
}

/// Complete synthetic benchmark: labelled instances, a calibration
/// population and a few held-out models to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub n_instances: usize,
    pub n_positive: usize,
    pub n_population: usize,
    pub n_heldout: usize,
    pub seed: u64,
    pub item_ranges: ItemRanges,
    /// Share of items whose discrimination is flipped negative.
    pub negative_fraction: f64,
    pub population_abilities: AbilityDistribution,
    pub heldout_abilities: AbilityDistribution,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_instances: 81,
            n_positive: 36,
            n_population: 200,
            n_heldout: 10,
            seed: 0,
            item_ranges: ItemRanges::default(),
            negative_fraction: 0.1,
            population_abilities: AbilityDistribution::Normal { mean: 0.0, sd: 1.0 },
            heldout_abilities: AbilityDistribution::Normal {
                mean: 0.75,
                sd: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub labels: Vec<LabeledInstance>,
    pub items: Vec<ItemParameters<f64>>,
    pub population: Population,
    pub heldout: Population,
}

// Independent sub-seeds for the parts of a fixture.
fn sub_seed(seed: u64, part: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(part)
}

pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    if spec.n_instances < 2 {
        return Err(Error::invalid("fixture needs at least two instances"));
    }
    if !(0.0..=1.0).contains(&spec.negative_fraction) {
        return Err(Error::invalid(format!(
            "negative_fraction {} outside [0, 1]",
            spec.negative_fraction
        )));
    }
    let mut items = random_items(
        spec.n_instances,
        &spec.item_ranges,
        "i",
        sub_seed(spec.seed, 1),
    )?;
    let n_negative = (spec.negative_fraction * spec.n_instances as f64).round() as usize;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, 2)));
    for &k in &order[..n_negative] {
        items[k].a = -items[k].a;
    }
    let ids: Vec<String> = items.iter().map(|it| it.item_id.clone()).collect();
    let labels = random_labels(&ids, spec.n_positive, sub_seed(spec.seed, 3))?;
    let population = generate_population(&PopulationSpec {
        n_respondents: spec.n_population,
        ability_distribution: spec.population_abilities.clone(),
        items: items.clone(),
        seed: sub_seed(spec.seed, 4),
        respondent_prefix: "r".into(),
    })?;
    let heldout = generate_population(&PopulationSpec {
        n_respondents: spec.n_heldout,
        ability_distribution: spec.heldout_abilities.clone(),
        items: items.clone(),
        seed: sub_seed(spec.seed, 5),
        respondent_prefix: "m".into(),
    })?;
    Ok(Fixture {
        labels,
        items,
        population,
        heldout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::build_response_matrix;

    fn spec(
        items: Vec<ItemParameters<f64>>,
        n: usize,
        dist: AbilityDistribution,
        seed: u64,
    ) -> PopulationSpec {
        PopulationSpec {
            n_respondents: n,
            ability_distribution: dist,
            items,
            seed,
            respondent_prefix: "r".into(),
        }
    }

    #[test]
    fn same_seed_same_matrix() {
        let items = random_items(12, &ItemRanges::default(), "i", 3).unwrap();
        let s = spec(items, 50, AbilityDistribution::default(), 7);
        assert_eq!(
            generate_population(&s).unwrap(),
            generate_population(&s).unwrap()
        );
        let mut other = s.clone();
        other.seed = 8;
        assert_ne!(
            generate_population(&s).unwrap().matrix,
            generate_population(&other).unwrap().matrix
        );
    }

    #[test]
    fn independent_of_thread_count() {
        let items = random_items(10, &ItemRanges::default(), "i", 1).unwrap();
        let s = spec(items, 300, AbilityDistribution::default(), 99);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| generate_population(&s).unwrap());
        let b = four.install(|| generate_population(&s).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn low_ability_hits_guessing_floor() {
        let n = 10_000;
        let item = ItemParameters::new("i", 2.0, 0.0, 0.3).unwrap();
        let s = spec(
            vec![item],
            n,
            AbilityDistribution::Explicit {
                values: vec![-10.0; n],
            },
            5,
        );
        let pop = generate_population(&s).unwrap();
        let rate = pop.matrix.column_sums()[0] as f64 / n as f64;
        let tol = 3.0 * (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((rate - 0.3).abs() < tol, "rate {rate}");
    }

    #[test]
    fn flat_item_ignores_ability() {
        let n = 10_000;
        let item = ItemParameters::new("i", 0.0, 1.0, 0.2).unwrap();
        let s = spec(
            vec![item],
            n,
            AbilityDistribution::Uniform { lo: -4.0, hi: 4.0 },
            5,
        );
        let pop = generate_population(&s).unwrap();
        let rate = pop.matrix.column_sums()[0] as f64 / n as f64;
        let p = 0.2 + 0.8 / 2.0;
        assert!((rate - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn invalid_specs_rejected() {
        let items = random_items(3, &ItemRanges::default(), "i", 1).unwrap();
        assert!(
            generate_population(&spec(items.clone(), 0, AbilityDistribution::default(), 1))
                .is_err()
        );
        assert!(generate_population(&spec(
            items.clone(),
            5,
            AbilityDistribution::Normal { mean: 0.0, sd: 0.0 },
            1
        ))
        .is_err());
        assert!(generate_population(&spec(
            items.clone(),
            5,
            AbilityDistribution::Uniform { lo: 1.0, hi: 1.0 },
            1
        ))
        .is_err());
        assert!(generate_population(&spec(
            items,
            5,
            AbilityDistribution::Explicit {
                values: vec![0.0; 4]
            },
            1
        ))
        .is_err());
    }

    #[test]
    fn labels_have_requested_balance() {
        let ids = padded_ids("i", 81);
        let labels = random_labels(&ids, 36, 4).unwrap();
        assert_eq!(labels.iter().filter(|l| l.label == 1).count(), 36);
        assert!(random_labels(&ids, 82, 4).is_err());
    }

    #[test]
    fn predictions_reproduce_matrix() {
        let items = random_items(20, &ItemRanges::default(), "i", 2).unwrap();
        let pop = generate_population(&spec(items, 30, AbilityDistribution::default(), 3)).unwrap();
        let labels = random_labels(pop.matrix.item_ids(), 9, 1).unwrap();
        let preds = predictions_from_responses(&labels, &pop.matrix).unwrap();
        let rebuilt = build_response_matrix(&labels, &preds).unwrap();
        assert_eq!(rebuilt, pop.matrix);
    }

    #[test]
    fn spec_json_round_trip() {
        let items = random_items(2, &ItemRanges::default(), "i", 2).unwrap();
        let s = spec(
            items,
            3,
            AbilityDistribution::Uniform { lo: -1.0, hi: 1.0 },
            3,
        );
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains(r#""kind":"uniform""#));
        let back: PopulationSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn fixture_shape_and_balance() {
        let f = generate_fixture(&FixtureSpec::default()).unwrap();
        assert_eq!(f.labels.iter().filter(|l| l.label == 1).count(), 36);
        assert_eq!(f.population.matrix.n_respondents(), 200);
        assert_eq!(f.heldout.matrix.n_respondents(), 10);
        assert_eq!(f.items.iter().filter(|i| i.a < 0.0).count(), 8);
        assert_eq!(f.heldout.matrix.respondent_ids()[0], "m000");
        assert_eq!(f, generate_fixture(&FixtureSpec::default()).unwrap());
    }
}
