//! Synthetic scenario generation.
//!
//! Scenarios vary along two axes: where chargers may go (TAZ sites,
//! existing depots, or both) and the operating policy (single-agency or
//! multi-agency). Geometry is drawn identically for every combination
//! under the same seed — depots, TAZ sites, and households come out of the
//! RNG in a fixed order — and the axes only change candidacy flags and
//! agency labels. That makes the feasible station set of the
//! both+multi scenario a superset of every other scenario's on the same
//! seed, so objective values are comparable across scenarios.
//!
//! Households cluster around depot centres with an exponential radial
//! falloff: dense near the centre, sparse at the fringe.

use super::{
    ChargerType, GlobalParams, Household, Instance, InstanceError, Policy, Position, Station,
    StationKind, TravelModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Amortization horizons for converting capital costs to USD/day.
const STATION_LIFETIME_DAYS: f64 = 40.0 * 365.0;
const CHARGER_LIFETIME_DAYS: f64 = 10.0 * 365.0;

/// Region the synthetic geometry lives in (a metro-sized box).
const CENTER_LAT: f64 = 41.85;
const CENTER_LON: f64 = -87.75;
const REGION_HALF_DEG: f64 = 0.25;

/// Mean radial distance of a household from its depot, km.
const CLUSTER_MEAN_KM: f64 = 4.0;

const KM_PER_DEG_LAT: f64 = 110.574;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationChoice {
    Taz,
    Depot,
    Both,
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_households: usize,
    pub n_taz: usize,
    pub n_depots: usize,
    pub locations: LocationChoice,
    pub policy: Policy,
    /// Neighborhood size `k_c`.
    pub k_c: usize,
    /// Average deliveries per vehicle per day; the charge probability is
    /// its reciprocal (one charging stop per vehicle per day).
    pub deliveries_per_vehicle: f64,
    /// Number of distinct agencies depots are spread across.
    pub n_agencies: usize,
    /// Global parameters; charger caps and costs below.
    pub params: GlobalParams,
    /// Charger catalogue for the instance.
    pub charger_types: Vec<ChargerType>,
    pub travel_model: TravelModel,
}

impl ScenarioSpec {
    /// Baseline configuration: metro-scale default costs and the
    /// three-type charger catalogue.
    pub fn baseline(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            seed,
            n_households: 100,
            n_taz: 20,
            n_depots: 4,
            locations: LocationChoice::Both,
            policy: Policy::Multi,
            k_c: 2,
            deliveries_per_vehicle: 120.0,
            n_agencies: 4,
            params: default_params(2),
            charger_types: default_charger_types(),
            travel_model: TravelModel::default(),
        }
    }
}

/// Defaults: station capital 1,000,000 USD over 40 years, budgets of
/// 150,000 and 500,000 USD/day, at most 1,000 stations, a 30 minute
/// queueing cap, and unit detour scaling.
pub fn default_params(k_c: usize) -> GlobalParams {
    GlobalParams {
        detour_cost: 1.09,
        wait_cost: 0.70,
        station_budget: 150_000.0,
        charger_budget: 500_000.0,
        max_stations: 1000,
        max_wait: 30.0,
        epsilon: 0.01,
        k_c,
        detour_cost_multiplier: 1.0,
    }
}

/// TAZ station opening cost, USD/day.
pub fn default_station_open_cost() -> f64 {
    1_000_000.0 / STATION_LIFETIME_DAYS
}

/// The three-type charger catalogue: basic / moderate / fast, capital
/// amortized over ten years, service rates converted to charges per day.
pub fn default_charger_types() -> Vec<ChargerType> {
    let mk = |id: &str, per_hour: f64, capital: f64| ChargerType {
        id: id.into(),
        mu: per_hour * 24.0,
        install_cost: capital / CHARGER_LIFETIME_DAYS,
        max_per_station: 20,
    };
    vec![
        mk("basic", 0.53, 73_000.0),
        mk("moderate", 1.90, 157_000.0),
        mk("fast", 3.81, 228_000.0),
    ]
}

/// Generate a deterministic instance from a scenario description.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Instance, InstanceError> {
    if spec.n_depots == 0 {
        return Err(InstanceError::BadConfig(
            "at least one depot is required (households need a home base)".into(),
        ));
    }
    if spec.locations == LocationChoice::Taz && spec.n_taz == 0 {
        return Err(InstanceError::BadConfig(
            "locations=taz needs at least one TAZ site".into(),
        ));
    }
    if spec.n_households == 0 {
        return Err(InstanceError::BadConfig(
            "at least one household is required".into(),
        ));
    }
    if spec.charger_types.is_empty() {
        return Err(InstanceError::BadConfig(
            "at least one charger type is required".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Geometry is drawn in a fixed order, independent of the scenario
    // axes, so the same seed yields the same map for every scenario.
    let depot_positions: Vec<Position> = (0..spec.n_depots)
        .map(|_| {
            let lat = CENTER_LAT + rng.gen_range(-REGION_HALF_DEG..REGION_HALF_DEG);
            let lon = CENTER_LON + rng.gen_range(-REGION_HALF_DEG..REGION_HALF_DEG);
            Position { lat, lon }
        })
        .collect();

    // TAZ sites on a jittered grid over the region.
    let grid = (spec.n_taz.max(1) as f64).sqrt().ceil() as usize;
    let cell = 2.0 * REGION_HALF_DEG / grid as f64;
    let taz_positions: Vec<Position> = (0..spec.n_taz)
        .map(|t| {
            let gx = t % grid;
            let gy = t / grid;
            let lat = CENTER_LAT - REGION_HALF_DEG
                + (gy as f64 + rng.gen_range(0.2..0.8)) * cell;
            let lon = CENTER_LON - REGION_HALF_DEG
                + (gx as f64 + rng.gen_range(0.2..0.8)) * cell;
            Position { lat, lon }
        })
        .collect();

    // Households: pick a depot, then an exponential radial offset — heavy
    // centre, sparse fringe.
    struct RawHousehold {
        position: Position,
        depot: usize,
        gamma: f64,
    }
    let raw_households: Vec<RawHousehold> = (0..spec.n_households)
        .map(|_| {
            let depot = rng.gen_range(0..spec.n_depots);
            let radius_km = -CLUSTER_MEAN_KM * (1.0 - rng.gen_range(0.0..1.0f64)).ln();
            let bearing = rng.gen_range(0.0..std::f64::consts::TAU);
            let base = depot_positions[depot];
            let dlat = radius_km * bearing.sin() / KM_PER_DEG_LAT;
            let dlon =
                radius_km * bearing.cos() / (KM_PER_DEG_LAT * base.lat.to_radians().cos());
            // Log-normal delivery rate around one visit per day.
            let z = sample_standard_normal(&mut rng);
            let gamma = (0.4 * z).exp();
            RawHousehold {
                position: Position {
                    lat: base.lat + dlat,
                    lon: base.lon + dlon,
                },
                depot,
                gamma,
            }
        })
        .collect();

    // Scenario axes only touch labels and flags from here on.
    let n_agencies = spec.n_agencies.clamp(1, spec.n_depots);
    let agency_label = |a: usize| format!("agency{a}");
    let depot_candidate = spec.locations != LocationChoice::Taz;
    let taz_candidate = spec.locations != LocationChoice::Depot;

    let mut stations = Vec::with_capacity(spec.n_depots + spec.n_taz);
    for (d, &position) in depot_positions.iter().enumerate() {
        stations.push(Station {
            id: format!("d{d:03}"),
            position,
            kind: StationKind::Depot,
            agency: Some(agency_label(d % n_agencies)),
            open_cost: 0.0,
            candidate: depot_candidate,
        });
    }
    for (t, &position) in taz_positions.iter().enumerate() {
        // Under a single-agency policy TAZ sites are operated by the
        // agency of the nearest depot; under multi-agency they are shared.
        let agency = match spec.policy {
            Policy::Multi => None,
            Policy::Single => {
                let nearest = depot_positions
                    .iter()
                    .enumerate()
                    .map(|(d, p)| (position.great_circle_km(p), d))
                    .min_by(|a, b| a.partial_cmp(b).unwrap())
                    .map(|(_, d)| d)
                    .unwrap();
                Some(agency_label(nearest % n_agencies))
            }
        };
        stations.push(Station {
            id: format!("t{t:03}"),
            position,
            kind: StationKind::Taz,
            agency,
            open_cost: default_station_open_cost(),
            candidate: taz_candidate,
        });
    }

    let pi = 1.0 / spec.deliveries_per_vehicle;
    let households: Vec<Household> = raw_households
        .into_iter()
        .enumerate()
        .map(|(i, raw)| Household {
            id: format!("h{i:05}"),
            position: raw.position,
            depot_id: format!("d{:03}", raw.depot),
            gamma: raw.gamma,
            pi,
            lambda: raw.gamma * pi,
        })
        .collect();

    let mut params = spec.params.clone();
    params.k_c = spec.k_c;

    Instance::assemble(
        params,
        spec.charger_types.clone(),
        stations,
        households,
        spec.policy,
        spec.travel_model,
        None,
    )
}

/// Box-Muller from two uniforms; enough for synthetic demand draws.
fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_costs_match_amortization() {
        let c = default_charger_types();
        assert!((c[0].install_cost - 20.0).abs() < 1e-12);
        assert!((c[1].install_cost - 157_000.0 / 3650.0).abs() < 1e-12);
        assert!((c[2].install_cost - 228_000.0 / 3650.0).abs() < 1e-12);
        assert!((c[0].mu - 12.72).abs() < 1e-12);
        assert!((c[1].mu - 45.6).abs() < 1e-12);
        assert!((c[2].mu - 91.44).abs() < 1e-12);
        assert!((default_station_open_cost() - 1_000_000.0 / 14_600.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = ScenarioSpec {
            n_households: 30,
            n_taz: 6,
            n_depots: 2,
            ..ScenarioSpec::baseline(9)
        };
        let a = generate_scenario(&spec).unwrap();
        let b = generate_scenario(&spec).unwrap();
        assert_eq!(a.stations, b.stations);
        assert_eq!(a.households, b.households);
    }

    #[test]
    fn both_multi_candidate_set_is_full() {
        let spec = ScenarioSpec {
            n_households: 10,
            n_taz: 5,
            n_depots: 3,
            ..ScenarioSpec::baseline(3)
        };
        let inst = generate_scenario(&spec).unwrap();
        let candidates = inst.stations.iter().filter(|s| s.candidate).count();
        assert_eq!(candidates, 8);
    }

    #[test]
    fn candidate_sets_nest_into_baseline_scenario() {
        for seed in [1u64, 2, 3] {
            let base = ScenarioSpec {
                n_households: 20,
                n_taz: 6,
                n_depots: 2,
                ..ScenarioSpec::baseline(seed)
            };
            let full = generate_scenario(&base).unwrap();
            let full_ids: Vec<&String> = full
                .stations
                .iter()
                .filter(|s| s.candidate)
                .map(|s| &s.id)
                .collect();
            for locations in [LocationChoice::Taz, LocationChoice::Depot] {
                for policy in [Policy::Single, Policy::Multi] {
                    let spec = ScenarioSpec {
                        locations,
                        policy,
                        ..base.clone()
                    };
                    let inst = generate_scenario(&spec).unwrap();
                    // Same geometry under the same seed.
                    assert_eq!(inst.stations.len(), full.stations.len());
                    for (a, b) in inst.stations.iter().zip(&full.stations) {
                        assert_eq!(a.position, b.position);
                    }
                    assert_eq!(inst.households.len(), full.households.len());
                    for (a, b) in inst.households.iter().zip(&full.households) {
                        assert_eq!(a.position, b.position);
                        assert_eq!(a.lambda, b.lambda);
                    }
                    // Candidate stations nest into the both+multi set.
                    for st in inst.stations.iter().filter(|s| s.candidate) {
                        assert!(full_ids.contains(&&st.id));
                    }
                }
            }
        }
    }

    #[test]
    fn depot_only_with_zero_depots_is_rejected() {
        let spec = ScenarioSpec {
            n_depots: 0,
            locations: LocationChoice::Depot,
            ..ScenarioSpec::baseline(1)
        };
        assert!(generate_scenario(&spec).is_err());
    }
}
