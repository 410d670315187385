//! Brute-force reference implementations for cross-checking the solver
//! paths. Everything here trades speed for obviousness: dynamic programming
//! over discretized battery states, exhaustive grid search over the
//! imputation simplex, and the permutation-sum Shapley formula. Only test
//! code should depend on this crate.

use prosumer_coop::model::{Coalition, Scenario};

/// Dispatch cost by dynamic programming over stored-energy levels
/// discretized to `grid_frac * capacity` (the reference uses 0.01).
/// Supports coalitions of one or two members; feasible DP schedules are a
/// subset of the LP's feasible set, so the result upper-bounds the true
/// optimum within one grid step's worth of cost.
pub fn dp_dispatch_cost(scenario: &Scenario, coalition: Coalition, grid_frac: f64) -> f64 {
    let members = coalition.members();
    match members.len() {
        0 => 0.0,
        1 => dp_single(scenario, members[0], grid_frac),
        2 => dp_pair(scenario, members[0], members[1], grid_frac),
        n => panic!("DP oracle supports at most 2 members, got {n}"),
    }
}

/// Stored-energy levels anchored at the initial charge so the start state
/// is exactly representable, clipped to the SoC band.
struct StateGrid {
    levels: Vec<f64>,
    start: usize,
}

fn state_grid(scenario: &Scenario, prosumer: usize, grid_frac: f64) -> StateGrid {
    let spec = &scenario.prosumers[prosumer].storage;
    if spec.capacity_kwh <= 0.0 {
        return StateGrid {
            levels: vec![0.0],
            start: 0,
        };
    }
    let step = grid_frac * spec.capacity_kwh;
    let lo = spec.soc_min * spec.capacity_kwh;
    let hi = spec.soc_max * spec.capacity_kwh;
    let initial = spec.soc0 * spec.capacity_kwh;

    let down = ((initial - lo) / step).floor() as usize;
    let up = ((hi - initial) / step).floor() as usize;
    let levels: Vec<f64> = (0..=(down + up))
        .map(|j| initial + (j as f64 - down as f64) * step)
        .collect();
    StateGrid {
        levels,
        start: down,
    }
}

/// Grid-side battery energy to move a battery from `from` to `to` stored
/// kWh, or None if the per-interval limits forbid it.
fn transition_energy(
    scenario: &Scenario,
    prosumer: usize,
    from: f64,
    to: f64,
) -> Option<f64> {
    let spec = &scenario.prosumers[prosumer].storage;
    let delta = to - from;
    let b = if delta >= 0.0 {
        delta / spec.eff_in
    } else {
        delta * spec.eff_out
    };
    if b > spec.charge_limit_kwh + 1e-12 || b < spec.discharge_limit_kwh - 1e-12 {
        None
    } else {
        Some(b)
    }
}

fn stage_cost(scenario: &Scenario, t: usize, net: f64) -> f64 {
    if net >= 0.0 {
        scenario.tariff.import_price[t] * net
    } else {
        scenario.tariff.export_price[t] * net
    }
}

fn dp_single(scenario: &Scenario, prosumer: usize, grid_frac: f64) -> f64 {
    let r = scenario.horizon;
    let grid = state_grid(scenario, prosumer, grid_frac);
    let n_levels = grid.levels.len();
    let q = &scenario.prosumers[prosumer].net_load;

    // value[u] = best cost from interval t onward, ending the horizon back
    // at the start level.
    let mut value = vec![f64::INFINITY; n_levels];
    value[grid.start] = 0.0;
    for t in (0..r).rev() {
        let mut next = vec![f64::INFINITY; n_levels];
        for (u, &from) in grid.levels.iter().enumerate() {
            let mut best = f64::INFINITY;
            for (u2, &to) in grid.levels.iter().enumerate() {
                if value[u2].is_infinite() {
                    continue;
                }
                let Some(b) = transition_energy(scenario, prosumer, from, to) else {
                    continue;
                };
                let c = stage_cost(scenario, t, q[t] + b) + value[u2];
                if c < best {
                    best = c;
                }
            }
            next[u] = best;
        }
        value = next;
    }
    value[grid.start]
}

fn dp_pair(scenario: &Scenario, p1: usize, p2: usize, grid_frac: f64) -> f64 {
    let r = scenario.horizon;
    let g1 = state_grid(scenario, p1, grid_frac);
    let g2 = state_grid(scenario, p2, grid_frac);
    let (n1, n2) = (g1.levels.len(), g2.levels.len());
    let q1 = &scenario.prosumers[p1].net_load;
    let q2 = &scenario.prosumers[p2].net_load;

    // Precompute feasible transitions and their grid-side energies.
    let moves1: Vec<Vec<(usize, f64)>> = (0..n1)
        .map(|u| {
            (0..n1)
                .filter_map(|u2| {
                    transition_energy(scenario, p1, g1.levels[u], g1.levels[u2])
                        .map(|b| (u2, b))
                })
                .collect()
        })
        .collect();
    let moves2: Vec<Vec<(usize, f64)>> = (0..n2)
        .map(|u| {
            (0..n2)
                .filter_map(|u2| {
                    transition_energy(scenario, p2, g2.levels[u], g2.levels[u2])
                        .map(|b| (u2, b))
                })
                .collect()
        })
        .collect();

    let idx = |u1: usize, u2: usize| u1 * n2 + u2;
    let mut value = vec![f64::INFINITY; n1 * n2];
    value[idx(g1.start, g2.start)] = 0.0;

    for t in (0..r).rev() {
        let base = q1[t] + q2[t];
        let mut next = vec![f64::INFINITY; n1 * n2];
        for u1 in 0..n1 {
            for u2 in 0..n2 {
                let mut best = f64::INFINITY;
                for &(v1, b1) in &moves1[u1] {
                    let row = v1 * n2;
                    for &(v2, b2) in &moves2[u2] {
                        let tail = value[row + v2];
                        if tail.is_infinite() {
                            continue;
                        }
                        let c = stage_cost(scenario, t, base + b1 + b2) + tail;
                        if c < best {
                            best = c;
                        }
                    }
                }
                next[idx(u1, u2)] = best;
            }
        }
        value = next;
    }
    value[idx(g1.start, g2.start)]
}

/// Abstract game value table used by the grid oracles: `values[mask]`.
pub struct AbstractGame {
    pub n_players: usize,
    pub values: Vec<f64>,
}

impl AbstractGame {
    pub fn value(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }
}

/// Lexicographic nucleolus by exhaustive search over the imputation
/// simplex on a fixed grid. Assumes zero singleton values; `step` should
/// divide `v(N)` exactly. Returns the grid imputation whose descending
/// excess vector is lexicographically minimal.
pub fn grid_nucleolus(game: &AbstractGame, step: f64) -> Vec<f64> {
    let n = game.n_players;
    let grand = (1u64 << n) - 1;
    let v_n = game.value(grand);
    let units = (v_n / step).round() as u64;
    assert!(
        (units as f64 * step - v_n).abs() < 1e-9,
        "step must divide v(N)"
    );

    let proper: Vec<u64> = (1..grand).collect();
    let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut composition = vec![0u64; n];

    enumerate_compositions(units, n, &mut composition, &mut |comp| {
        let x: Vec<f64> = comp.iter().map(|&k| k as f64 * step).collect();
        let mut excesses: Vec<f64> = proper
            .iter()
            .map(|&mask| {
                let paid: f64 = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| x[i])
                    .sum();
                game.value(mask) - paid
            })
            .collect();
        excesses.sort_by(|a, b| b.total_cmp(a));
        let better = match &best {
            None => true,
            Some((_, incumbent)) => lex_less(&excesses, incumbent),
        };
        if better {
            best = Some((x, excesses));
        }
    });

    best.expect("imputation grid is nonempty").0
}

/// Values within `LEX_TIE_EPS` are treated as equal so that floating-point
/// noise in `k * step` products cannot decide a lexicographic comparison at
/// a genuinely tied level.
const LEX_TIE_EPS: f64 = 1e-9;

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() <= LEX_TIE_EPS {
            continue;
        }
        return x < y;
    }
    false
}

fn enumerate_compositions(
    total: u64,
    slots: usize,
    buffer: &mut Vec<u64>,
    visit: &mut impl FnMut(&[u64]),
) {
    fn rec(total: u64, slot: usize, slots: usize, buffer: &mut Vec<u64>, visit: &mut impl FnMut(&[u64])) {
        if slot == slots - 1 {
            buffer[slot] = total;
            visit(buffer);
            return;
        }
        for k in 0..=total {
            buffer[slot] = k;
            rec(total - k, slot + 1, slots, buffer, visit);
        }
    }
    rec(total, 0, slots, buffer, visit);
}

/// Shapley value by explicit enumeration of all `n!` player orderings.
pub fn permutation_shapley(game: &AbstractGame) -> Vec<f64> {
    let n = game.n_players;
    let mut phi = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    let mut count = 0u64;
    permute(&mut order, 0, &mut |perm| {
        count += 1;
        let mut mask = 0u64;
        for &p in perm {
            let with = mask | (1 << p);
            phi[p] += game.value(with) - game.value(mask);
            mask = with;
        }
    });
    for p in phi.iter_mut() {
        *p /= count as f64;
    }
    phi
}

fn permute(order: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == order.len() {
        visit(order);
        return;
    }
    for i in k..order.len() {
        order.swap(k, i);
        permute(order, k + 1, visit);
        order.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use prosumer_coop::model::{
        validate_scenario, Prosumer, StorageSpec, TariffSchedule,
    };

    #[test]
    fn dp_matches_hand_computed_arbitrage() {
        let s = validate_scenario(Scenario {
            prosumers: vec![Prosumer::new("a", vec![1.0, 1.0]).with_storage(StorageSpec {
                capacity_kwh: 1.0,
                charge_limit_kwh: 1.0,
                discharge_limit_kwh: -1.0,
                eff_in: 1.0,
                eff_out: 1.0,
                soc0: 0.0,
                soc_min: 0.0,
                soc_max: 1.0,
            })],
            tariff: TariffSchedule {
                import_price: vec![0.072, 0.1681],
                export_price: vec![0.0485, 0.0485],
            },
            horizon: 2,
            interval_hours: 0.5,
        })
        .unwrap();
        let c = dp_dispatch_cost(&s, Coalition::grand(1), 0.01);
        assert!((c - 0.144).abs() < 1e-9);
    }

    #[test]
    fn dp_pair_nets_complementary_loads() {
        let s = validate_scenario(Scenario {
            prosumers: vec![
                Prosumer::new("gen", vec![-1.0, -1.0]),
                Prosumer::new("con", vec![1.0, 1.0]),
            ],
            tariff: TariffSchedule::flat(2, 0.2, 0.1),
            horizon: 2,
            interval_hours: 0.5,
        })
        .unwrap();
        let c = dp_dispatch_cost(&s, Coalition::grand(2), 0.01);
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn grid_nucleolus_matches_symmetric_split() {
        let game = AbstractGame {
            n_players: 3,
            values: vec![0.0, 0.0, 0.0, 0.3, 0.0, 0.3, 0.3, 0.9],
        };
        let u = grid_nucleolus(&game, 1e-3);
        for x in u {
            assert!((x - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn permutation_shapley_two_players() {
        let game = AbstractGame {
            n_players: 2,
            values: vec![0.0, 0.1, 0.3, 1.0],
        };
        let phi = permutation_shapley(&game);
        // phi_0 = (v1 - v0 + vN - v2) / 2.
        assert!((phi[0] - 0.4).abs() < 1e-12);
        assert!((phi[1] - 0.6).abs() < 1e-12);
    }
}
