//! Individual sub-phases of a plant step. Each is a small function so it can be
//! tested in isolation; [`super::EnvState::step`] sequences them.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::plant::{Bale, Container, Press};
use crate::config::{EnvConfig, N_CONTAINERS};
use crate::error::{Error, Result};
use crate::material::{MaterialVector, MATERIAL_GROUP, N_MATERIALS};
use crate::spaces::SortingMode;

pub const MIN_ACCURACY: f64 = 0.5;
pub const MAX_ACCURACY: f64 = 1.0;

/// Draws a fresh input: uniform total volume, composition from normalized
/// unit-exponential draws.
pub fn generate_input<R: Rng + ?Sized>(rng: &mut R, config: &EnvConfig) -> MaterialVector {
    let [lo, hi] = config.input_volume_range;
    let u: f64 = rng.random();
    let total = lo + (hi - lo) * u;
    let mut draws = [0.0; N_MATERIALS];
    for d in draws.iter_mut() {
        *d = rng.sample(Exp1);
    }
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 || total <= 0.0 {
        return MaterialVector::ZERO;
    }
    MaterialVector(draws.map(|d| total * d / sum))
}

/// Shifts the belt by one slot. The new input is admitted only up to the belt
/// capacity; the rest is returned as withheld material.
///
/// Returns `(delivered, admitted, withheld)`.
pub fn advance_belt(
    belt: &mut VecDeque<MaterialVector>,
    offered: MaterialVector,
    belt_capacity: f64,
) -> (MaterialVector, MaterialVector, MaterialVector) {
    let delivered = belt.pop_front().unwrap_or_default();
    let on_belt: f64 = belt.iter().map(MaterialVector::total).sum();
    let room = (belt_capacity - on_belt).max(0.0);
    let offered_total = offered.total();
    let admitted = if offered_total <= room {
        offered
    } else {
        offered.scaled(room / offered_total)
    };
    let withheld = offered - admitted;
    belt.push_back(admitted);
    (delivered, admitted, withheld)
}

/// Noisy per-group accuracies for the chosen mode, clamped to `[0.5, 1]`.
pub fn sample_accuracies<R: Rng + ?Sized>(rng: &mut R, mode: SortingMode, config: &EnvConfig) -> [f64; 2] {
    let table = config.accuracy_table[mode.index()];
    let sigma = config.accuracy_noise_sigma;
    table.map(|base| {
        let z: f64 = rng.sample(StandardNormal);
        (base + sigma * z).clamp(MIN_ACCURACY, MAX_ACCURACY)
    })
}

/// Expected-value routing: a share `a_g` of material `i` reaches container `i`,
/// the rest is spread evenly over the other containers.
pub fn route_material(delivered: &MaterialVector, accuracies: [f64; 2]) -> [MaterialVector; N_CONTAINERS] {
    let mut inflow = [MaterialVector::ZERO; N_CONTAINERS];
    let spread = (N_CONTAINERS - 1) as f64;
    for (i, &q) in delivered.iter().enumerate() {
        if q <= 0.0 {
            continue;
        }
        let a = accuracies[MATERIAL_GROUP[i].index()];
        let correct = a * q;
        let miss = (q - correct) / spread;
        for (c, dest) in inflow.iter_mut().enumerate() {
            dest[i] += if c == i { correct } else { miss };
        }
    }
    inflow
}

/// Routes `delivered` into the containers. Returns the deposited volume per
/// container and the total overflow.
pub fn sort_material(
    delivered: &MaterialVector,
    accuracies: [f64; 2],
    containers: &mut [Container],
) -> ([f64; N_CONTAINERS], f64) {
    let inflow = route_material(delivered, accuracies);
    let mut deposits = [0.0; N_CONTAINERS];
    let mut overflow = 0.0;
    for ((container, flow), dep) in containers.iter_mut().zip(inflow).zip(deposits.iter_mut()) {
        let lost = container.deposit(flow);
        *dep = flow.total() - lost;
        overflow += lost;
    }
    (deposits, overflow)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PressOutcome {
    NoOp,
    Ignored { press: usize, container: usize },
    Executed { press: usize, container: usize, bales: f64 },
}

impl PressOutcome {
    pub fn bales(&self) -> Option<f64> {
        match *self {
            PressOutcome::Executed { bales, .. } => Some(bales),
            _ => None,
        }
    }

    pub fn is_ignored(&self) -> bool {
        matches!(self, PressOutcome::Ignored { .. })
    }
}

/// Empties `container_id` into `press_id` if the press is idle and the
/// container holds material; otherwise the action is ignored.
///
/// Returns the outcome and the emptied volume.
pub fn execute_press(
    presses: &mut [Press],
    containers: &mut [Container],
    press_id: usize,
    container_id: usize,
    config: &EnvConfig,
    now: usize,
) -> Result<(PressOutcome, f64)> {
    if press_id >= presses.len() || container_id >= containers.len() {
        return Err(Error::Contract(format!(
            "press action (press {press_id}, container {container_id}) out of range"
        )));
    }
    let press = &mut presses[press_id];
    let container = &mut containers[container_id];
    if !press.is_idle() || container.is_empty() {
        return Ok((
            PressOutcome::Ignored {
                press: press_id,
                container: container_id,
            },
            0.0,
        ));
    }
    let volume = container.fill();
    let bales = volume / config.bale_size;
    let purity = container.purity();
    container.contents = MaterialVector::ZERO;
    let duration = (config.press_time_base + config.press_time_per_bale * bales).ceil();
    press.remaining = duration as u32;
    press.history.push(Bale {
        size_bales: bales,
        volume,
        purity,
        material: container.dominant_type,
        press: press_id,
        created_at: now,
    });
    Ok((
        PressOutcome::Executed {
            press: press_id,
            container: container_id,
            bales,
        },
        volume,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mv(q: [f64; 5]) -> MaterialVector {
        MaterialVector::new(q)
    }

    fn containers(cfg: &EnvConfig) -> Vec<Container> {
        (0..5)
            .map(|i| Container::new(i, cfg.container_capacity, cfg.purity_thresholds[i]))
            .collect()
    }

    #[test]
    fn degenerate_range_gives_fixed_total() {
        let cfg = EnvConfig {
            input_volume_range: [3.0, 3.0],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let v = generate_input(&mut rng, &cfg);
            assert!((v.total() - 3.0).abs() < 1e-12);
            assert!(v.iter().all(|&q| q >= 0.0));
        }
    }

    #[test]
    fn input_shares_average_one_fifth() {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut share = [0.0; 5];
        for _ in 0..n {
            let v = generate_input(&mut rng, &cfg);
            let t = v.total();
            assert!((2.0..=6.0).contains(&t));
            for (s, p) in share.iter_mut().zip(v.proportions()) {
                *s += p / n as f64;
            }
        }
        for s in share {
            assert!((s - 0.2).abs() <= 0.02, "{share:?}");
        }
    }

    #[test]
    fn belt_is_fifo() {
        let a = mv([1.0, 0.0, 0.0, 0.0, 0.0]);
        let b = mv([0.0, 1.0, 0.0, 0.0, 0.0]);
        let c = mv([0.0, 0.0, 1.0, 0.0, 0.0]);
        let d = mv([0.0, 0.0, 0.0, 1.0, 0.0]);
        let mut belt: VecDeque<_> = [a, b, c].into_iter().collect();
        let (delivered, admitted, withheld) = advance_belt(&mut belt, d, 30.0);
        assert_eq!(delivered, a);
        assert_eq!(admitted, d);
        assert_eq!(withheld, MaterialVector::ZERO);
        assert_eq!(belt, VecDeque::from(vec![b, c, d]));
    }

    #[test]
    fn cold_belt_delivers_nothing() {
        let mut belt: VecDeque<_> = std::iter::repeat_n(MaterialVector::ZERO, 3).collect();
        let (delivered, _, _) = advance_belt(&mut belt, mv([1.0; 5]), 30.0);
        assert_eq!(delivered, MaterialVector::ZERO);
    }

    #[test]
    fn full_belt_withholds_excess() {
        // Remaining slots hold 12 + 12 after the shift, leaving room for 6 of the 10 offered.
        let slot = mv([12.0, 0.0, 0.0, 0.0, 0.0]);
        let mut belt: VecDeque<_> = [slot, slot, slot].into_iter().collect();
        let offered = mv([2.0, 2.0, 2.0, 2.0, 2.0]);
        let (_, admitted, withheld) = advance_belt(&mut belt, offered, 30.0);
        assert!((admitted.total() - 6.0).abs() < 1e-12);
        assert!((withheld.total() - 4.0).abs() < 1e-12);
        let belt_total: f64 = belt.iter().map(MaterialVector::total).sum();
        assert!((belt_total - 30.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_returns_table() {
        let cfg = EnvConfig {
            accuracy_noise_sigma: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_accuracies(&mut rng, SortingMode::GroupA, &cfg), [0.9, 0.7]);
        assert_eq!(sample_accuracies(&mut rng, SortingMode::GroupB, &cfg), [0.7, 0.9]);
    }

    #[test]
    fn accuracies_clamped_and_mode_zero_favours_a() {
        let cfg = EnvConfig {
            accuracy_noise_sigma: 0.3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mean = [0.0; 2];
        for _ in 0..10_000 {
            let a = sample_accuracies(&mut rng, SortingMode::GroupA, &cfg);
            assert!(a.iter().all(|&x| (0.5..=1.0).contains(&x)));
            mean[0] += a[0] / 1e4;
            mean[1] += a[1] / 1e4;
        }
        assert!(mean[0] > mean[1], "{mean:?}");
    }

    #[test]
    fn perfect_accuracy_routes_home() {
        let cfg = EnvConfig::default();
        let mut cs = containers(&cfg);
        let (dep, over) = sort_material(&mv([5.0, 0.0, 0.0, 0.0, 0.0]), [1.0, 1.0], &mut cs);
        assert_eq!(dep, [5.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(over, 0.0);
    }

    #[test]
    fn misclassified_share_spreads_evenly() {
        let cfg = EnvConfig::default();
        let mut cs = containers(&cfg);
        let (dep, _) = sort_material(&mv([10.0, 0.0, 0.0, 0.0, 0.0]), [0.9, 0.7], &mut cs);
        assert!((dep[0] - 9.0).abs() < 1e-12);
        for d in &dep[1..] {
            assert!((d - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn overflowing_container_loses_excess() {
        let cfg = EnvConfig::default();
        let mut cs = containers(&cfg);
        cs[0].contents = mv([39.5, 0.0, 0.0, 0.0, 0.0]);
        let (dep, over) = sort_material(&mv([2.0, 0.0, 0.0, 0.0, 0.0]), [1.0, 1.0], &mut cs);
        assert_eq!(dep[0], 0.5);
        assert_eq!(over, 1.5);
        assert_eq!(cs[0].fill(), 40.0);
    }

    #[test]
    fn press_executes_and_sets_timer() {
        let cfg = EnvConfig::default();
        let mut cs = containers(&cfg);
        let mut ps = vec![Press::default(), Press::default()];
        cs[2].contents = mv([0.0, 0.0, 20.0, 0.0, 0.0]);
        let (out, vol) = execute_press(&mut ps, &mut cs, 0, 2, &cfg, 9).unwrap();
        assert_eq!(
            out,
            PressOutcome::Executed {
                press: 0,
                container: 2,
                bales: 2.0
            }
        );
        assert_eq!(vol, 20.0);
        assert!(cs[2].is_empty());
        assert_eq!(ps[0].remaining, 15);
        assert_eq!(ps[0].history.len(), 1);
        assert_eq!(ps[0].history[0].purity, 1.0);
        assert_eq!(ps[0].history[0].created_at, 9);
    }

    #[test]
    fn busy_press_or_empty_container_is_ignored() {
        let cfg = EnvConfig::default();
        let mut cs = containers(&cfg);
        let mut ps = vec![Press::default(), Press::default()];
        let (out, _) = execute_press(&mut ps, &mut cs, 1, 0, &cfg, 0).unwrap();
        assert!(out.is_ignored());

        cs[0].contents = mv([5.0, 0.0, 0.0, 0.0, 0.0]);
        ps[1].remaining = 3;
        let before = cs.clone();
        let (out, _) = execute_press(&mut ps, &mut cs, 1, 0, &cfg, 0).unwrap();
        assert!(out.is_ignored());
        assert_eq!(cs, before);
        assert_eq!(ps[1].remaining, 3);
    }

    #[test]
    fn out_of_range_press_is_contract_error() {
        let cfg = EnvConfig::default();
        let mut cs = containers(&cfg);
        let mut ps = vec![Press::default(), Press::default()];
        assert!(matches!(
            execute_press(&mut ps, &mut cs, 2, 0, &cfg, 0),
            Err(Error::Contract(_))
        ));
        assert!(execute_press(&mut ps, &mut cs, 0, 5, &cfg, 0).is_err());
    }
}
