//! The planning instance: households with stochastic charging demand,
//! candidate stations, charger types, global parameters, and the derived
//! structures the solvers consume (neighborhoods and detour times).
//!
//! Unit conventions, used everywhere downstream: rates are per day
//! (delivery rate `gamma`, charging rate `lambda`, service rate `mu`),
//! times are minutes (travel, detour, waiting, the `max_wait` cap), costs
//! are USD per day for stations and chargers and USD per minute for the
//! detour and waiting cost coefficients.
//!
//! An [`Instance`] is immutable once assembled and safe to share read-only
//! across worker threads.

mod io;
mod neighbors;
mod scenario;

pub use io::{load_instance, save_instance};
pub use neighbors::{build_neighborhoods, Neighborhoods};
pub use scenario::{generate_scenario, LocationChoice, ScenarioSpec};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

pub const MINUTES_PER_DAY: f64 = 1440.0;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{entity}: missing field `{field}`")]
    MissingField { entity: String, field: String },
    #[error("{entity}: {detail}")]
    Invalid { entity: String, detail: String },
    #[error("household {household} has no eligible station under the current policy")]
    EmptyNeighborhood { household: String },
    #[error("travel matrix has shape {rows}x{cols}, expected {expected_rows}x{expected_cols} (stations x stations+households)")]
    MatrixShape {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

/// Latitude/longitude in degrees. Under the Euclidean travel model the
/// coordinates are treated as an abstract plane instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub lat: f64,
    pub lon: f64,
}

impl Position {
    /// Great-circle distance in kilometres (haversine).
    pub fn great_circle_km(&self, other: &Position) -> f64 {
        const EARTH_RADIUS_KM: f64 = 6371.0;
        let (lat1, lon1) = (self.lat.to_radians(), self.lon.to_radians());
        let (lat2, lon2) = (other.lat.to_radians(), other.lon.to_radians());
        let dlat = lat2 - lat1;
        let dlon = lon2 - lon1;
        let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_KM * a.sqrt().asin()
    }

    /// Point on the unit sphere; chord distance between such points is
    /// monotone in great-circle distance, which makes spatial trees exact.
    pub(crate) fn unit_sphere(&self) -> [f64; 3] {
        let lat = self.lat.to_radians();
        let lon = self.lon.to_radians();
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationKind {
    Taz,
    Depot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Each household may only use stations of its own agency.
    Single,
    /// Any household may use any candidate station.
    Multi,
}

/// How travel times between nodes are produced when no explicit matrix is
/// given. An explicit `travel_matrix` in the instance file always wins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TravelModel {
    /// Great-circle distance at a constant speed.
    GreatCircle { speed_kmh: f64 },
    /// Planar distance on raw coordinates, scaled to minutes. Useful for
    /// synthetic geometry in tests.
    Euclidean { minutes_per_unit: f64 },
}

impl Default for TravelModel {
    fn default() -> Self {
        TravelModel::GreatCircle { speed_kmh: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: String,
    pub position: Position,
    /// Station id of the depot this household's delivery vehicle starts from.
    pub depot_id: String,
    /// Delivery rate, per day.
    pub gamma: f64,
    /// Probability that a delivery to this household is preceded by a charge.
    pub pi: f64,
    /// Charging rate, per day; always `gamma * pi`.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub position: Position,
    pub kind: StationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agency: Option<String>,
    /// Opening cost, USD per day. Zero for existing depots.
    pub open_cost: f64,
    /// Whether chargers may be installed here in the current scenario.
    /// Non-candidate depots still exist as route origins.
    #[serde(default = "default_true")]
    pub candidate: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargerType {
    pub id: String,
    /// Service rate, charges per day.
    pub mu: f64,
    /// Installation cost, USD per day.
    pub install_cost: f64,
    /// Uniform per-station cap on chargers of this type.
    pub max_per_station: u32,
}

impl ChargerType {
    /// Service rate per minute, for waiting times expressed in minutes.
    pub fn mu_per_minute(&self) -> f64 {
        self.mu / MINUTES_PER_DAY
    }

    /// Upper bound on the expected time in system: `EW + 1/mu`, minutes.
    pub fn wait_cap_minutes(&self, params: &GlobalParams) -> f64 {
        params.max_wait + 1.0 / self.mu_per_minute()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalParams {
    /// Detour cost, USD per minute.
    pub detour_cost: f64,
    /// Waiting cost, USD per minute.
    pub wait_cost: f64,
    /// Station opening budget, USD per day.
    pub station_budget: f64,
    /// Charger installation budget, USD per day.
    pub charger_budget: f64,
    /// Cap on the number of open stations.
    pub max_stations: u32,
    /// Cap on expected queueing delay (time in system minus service), minutes.
    pub max_wait: f64,
    /// Stability safety margin in (0, 1).
    pub epsilon: f64,
    /// Number of nearest eligible stations each household may detour to.
    pub k_c: usize,
    /// Scaling applied to the detour cost term of the objective.
    #[serde(default = "default_multiplier")]
    pub detour_cost_multiplier: f64,
}

fn default_multiplier() -> f64 {
    1.0
}

/// A fully assembled, validated planning instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: GlobalParams,
    pub charger_types: Vec<ChargerType>,
    pub stations: Vec<Station>,
    pub households: Vec<Household>,
    pub policy: Policy,
    pub travel_model: TravelModel,
    /// Optional explicit travel times: rows are stations in file order,
    /// columns are stations then households in file order, minutes.
    pub travel_matrix: Option<Vec<Vec<f64>>>,
    /// `J_i` and `I_j`.
    pub neighborhoods: Neighborhoods,
    /// Detour minutes aligned with `neighborhoods.stations_for`.
    detour: Vec<Vec<f64>>,
    /// Station index of `F_i` per household.
    depot_of: Vec<usize>,
    station_index: HashMap<String, usize>,
}

/// Either endpoint of a travel leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Station(usize),
    Household(usize),
}

impl Instance {
    /// Validate raw parts, build neighborhoods and detour times.
    pub fn assemble(
        params: GlobalParams,
        charger_types: Vec<ChargerType>,
        stations: Vec<Station>,
        households: Vec<Household>,
        policy: Policy,
        travel_model: TravelModel,
        travel_matrix: Option<Vec<Vec<f64>>>,
    ) -> Result<Instance, InstanceError> {
        validate_params(&params)?;
        if charger_types.is_empty() {
            return Err(InstanceError::BadConfig(
                "at least one charger type is required".into(),
            ));
        }
        for ct in &charger_types {
            if ct.mu <= 0.0 {
                return Err(InstanceError::Invalid {
                    entity: format!("charger type {}", ct.id),
                    detail: format!("service rate must be positive, got {}", ct.mu),
                });
            }
        }

        let mut station_index = HashMap::new();
        for (idx, st) in stations.iter().enumerate() {
            if station_index.insert(st.id.clone(), idx).is_some() {
                return Err(InstanceError::Invalid {
                    entity: format!("station {}", st.id),
                    detail: "duplicate station id".into(),
                });
            }
            if st.kind == StationKind::Depot && st.open_cost != 0.0 {
                return Err(InstanceError::Invalid {
                    entity: format!("station {}", st.id),
                    detail: format!("depots have zero opening cost, got {}", st.open_cost),
                });
            }
        }

        let mut depot_of = Vec::with_capacity(households.len());
        let mut seen_households = HashMap::new();
        for (idx, hh) in households.iter().enumerate() {
            if seen_households.insert(hh.id.clone(), idx).is_some() {
                return Err(InstanceError::Invalid {
                    entity: format!("household {}", hh.id),
                    detail: "duplicate household id".into(),
                });
            }
            let depot_idx = station_index.get(&hh.depot_id).copied().ok_or_else(|| {
                InstanceError::Invalid {
                    entity: format!("household {}", hh.id),
                    detail: format!("depot_id `{}` does not name a station", hh.depot_id),
                }
            })?;
            if stations[depot_idx].kind != StationKind::Depot {
                return Err(InstanceError::Invalid {
                    entity: format!("household {}", hh.id),
                    detail: format!("depot_id `{}` is not a depot", hh.depot_id),
                });
            }
            if hh.gamma <= 0.0 || !(hh.pi > 0.0 && hh.pi <= 1.0) {
                return Err(InstanceError::Invalid {
                    entity: format!("household {}", hh.id),
                    detail: format!("need gamma > 0 and pi in (0, 1], got {}, {}", hh.gamma, hh.pi),
                });
            }
            let expect = hh.gamma * hh.pi;
            if (hh.lambda - expect).abs() > 1e-9 * (1.0 + expect.abs()) {
                return Err(InstanceError::Invalid {
                    entity: format!("household {}", hh.id),
                    detail: format!(
                        "lambda must equal gamma * pi = {expect}, got {}",
                        hh.lambda
                    ),
                });
            }
            depot_of.push(depot_idx);
        }

        if let Some(matrix) = &travel_matrix {
            let expected_cols = stations.len() + households.len();
            if matrix.len() != stations.len()
                || matrix.iter().any(|row| row.len() != expected_cols)
            {
                return Err(InstanceError::MatrixShape {
                    rows: matrix.len(),
                    cols: matrix.first().map_or(0, |r| r.len()),
                    expected_rows: stations.len(),
                    expected_cols,
                });
            }
        }

        let neighborhoods =
            build_neighborhoods(&stations, &households, &depot_of, policy, params.k_c)?;

        let mut instance = Instance {
            params,
            charger_types,
            stations,
            households,
            policy,
            travel_model,
            travel_matrix,
            neighborhoods,
            detour: Vec::new(),
            depot_of,
            station_index,
        };
        instance.detour = instance.compute_detours();
        Ok(instance)
    }

    fn compute_detours(&self) -> Vec<Vec<f64>> {
        self.households
            .iter()
            .enumerate()
            .map(|(i, _)| {
                self.neighborhoods.stations_for[i]
                    .iter()
                    .map(|&j| self.detour_raw(i, j))
                    .collect()
            })
            .collect()
    }

    fn detour_raw(&self, household: usize, station: usize) -> f64 {
        let depot = self.depot_of[household];
        let t_dj = self.travel_minutes(Node::Station(depot), Node::Station(station));
        let t_ji = self.travel_minutes(Node::Station(station), Node::Household(household));
        let t_di = self.travel_minutes(Node::Station(depot), Node::Household(household));
        (t_dj + t_ji - t_di).max(0.0)
    }

    /// Travel time in minutes. When an explicit matrix is present it takes
    /// precedence over the geometric model; matrix legs must start at a
    /// station, which covers every leg the model needs.
    pub fn travel_minutes(&self, from: Node, to: Node) -> f64 {
        if let Some(matrix) = &self.travel_matrix {
            if let Node::Station(s) = from {
                let col = match to {
                    Node::Station(j) => j,
                    Node::Household(i) => self.stations.len() + i,
                };
                return matrix[s][col];
            }
        }
        let a = self.node_position(from);
        let b = self.node_position(to);
        match self.travel_model {
            TravelModel::GreatCircle { speed_kmh } => a.great_circle_km(&b) / speed_kmh * 60.0,
            TravelModel::Euclidean { minutes_per_unit } => {
                let d = ((a.lat - b.lat).powi(2) + (a.lon - b.lon).powi(2)).sqrt();
                d * minutes_per_unit
            }
        }
    }

    fn node_position(&self, node: Node) -> Position {
        match node {
            Node::Station(j) => self.stations[j].position,
            Node::Household(i) => self.households[i].position,
        }
    }

    /// Detour minutes for household `i` charging at station `j`;
    /// `j` must be in `J_i`.
    pub fn detour_minutes(&self, household: usize, station: usize) -> f64 {
        let slot = self.neighborhoods.stations_for[household]
            .iter()
            .position(|&j| j == station)
            .unwrap_or_else(|| {
                panic!(
                    "station {} is not in the neighborhood of household {}",
                    self.stations[station].id, self.households[household].id
                )
            });
        self.detour[household][slot]
    }

    /// Station index of the depot serving household `i`.
    pub fn depot_of(&self, household: usize) -> usize {
        self.depot_of[household]
    }

    pub fn station_idx(&self, id: &str) -> Option<usize> {
        self.station_index.get(id).copied()
    }

    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn num_households(&self) -> usize {
        self.households.len()
    }

    pub fn num_charger_types(&self) -> usize {
        self.charger_types.len()
    }

    /// Detour cost coefficient for one assignment:
    /// `lambda_i * C_delta * T_delta * multiplier`, USD per day.
    pub fn detour_cost_per_day(&self, household: usize, station: usize) -> f64 {
        self.households[household].lambda
            * self.params.detour_cost
            * self.params.detour_cost_multiplier
            * self.detour_minutes(household, station)
    }
}

fn validate_params(params: &GlobalParams) -> Result<(), InstanceError> {
    let checks = [
        ("detour_cost", params.detour_cost),
        ("wait_cost", params.wait_cost),
        ("station_budget", params.station_budget),
        ("charger_budget", params.charger_budget),
        ("max_wait", params.max_wait),
        ("detour_cost_multiplier", params.detour_cost_multiplier),
    ];
    for (name, value) in checks {
        if value < 0.0 || !value.is_finite() {
            return Err(InstanceError::Invalid {
                entity: "params".into(),
                detail: format!("{name} must be nonnegative, got {value}"),
            });
        }
    }
    if !(params.epsilon > 0.0 && params.epsilon < 1.0) {
        return Err(InstanceError::Invalid {
            entity: "params".into(),
            detail: format!("epsilon must lie in (0, 1), got {}", params.epsilon),
        });
    }
    if params.k_c == 0 {
        return Err(InstanceError::Invalid {
            entity: "params".into(),
            detail: "k_c must be at least 1".into(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn test_params(k_c: usize) -> GlobalParams {
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

    fn charger() -> ChargerType {
        ChargerType {
            id: "basic".into(),
            mu: 12.72,
            install_cost: 20.0,
            max_per_station: 20,
        }
    }

    fn station(id: &str, kind: StationKind, lat: f64, lon: f64) -> Station {
        Station {
            id: id.into(),
            position: Position { lat, lon },
            kind,
            agency: None,
            open_cost: if kind == StationKind::Depot { 0.0 } else { 68.49 },
            candidate: true,
        }
    }

    fn household(id: &str, depot: &str, lat: f64, lon: f64) -> Household {
        Household {
            id: id.into(),
            position: Position { lat, lon },
            depot_id: depot.into(),
            gamma: 1.2,
            pi: 1.0 / 120.0,
            lambda: 1.2 / 120.0,
        }
    }

    #[test]
    fn detour_zero_for_collinear_station_and_own_depot() {
        // Euclidean plane: depot at origin, household at (0, 10), station
        // on the segment between them.
        let stations = vec![
            station("d0", StationKind::Depot, 0.0, 0.0),
            station("t0", StationKind::Taz, 0.0, 5.0),
        ];
        let households = vec![household("h0", "d0", 0.0, 10.0)];
        let inst = Instance::assemble(
            test_params(2),
            vec![charger()],
            stations,
            households,
            Policy::Multi,
            TravelModel::Euclidean {
                minutes_per_unit: 1.0,
            },
            None,
        )
        .unwrap();
        let t0 = inst.station_idx("t0").unwrap();
        let d0 = inst.station_idx("d0").unwrap();
        assert!(inst.detour_minutes(0, t0).abs() < 1e-12);
        // Charging at the household's own depot is also detour-free.
        assert!(inst.detour_minutes(0, d0).abs() < 1e-12);
    }

    #[test]
    fn detour_euclidean_triangle() {
        let stations = vec![
            station("d0", StationKind::Depot, 0.0, 0.0),
            station("t0", StationKind::Taz, 5.0, 5.0),
        ];
        let households = vec![household("h0", "d0", 0.0, 10.0)];
        let inst = Instance::assemble(
            test_params(2),
            vec![charger()],
            stations,
            households,
            Policy::Multi,
            TravelModel::Euclidean {
                minutes_per_unit: 1.0,
            },
            None,
        )
        .unwrap();
        let t0 = inst.station_idx("t0").unwrap();
        let expect = 50f64.sqrt() + 50f64.sqrt() - 10.0;
        assert!((inst.detour_minutes(0, t0) - expect).abs() < 1e-9);
    }

    #[test]
    fn lambda_consistency_is_enforced() {
        let stations = vec![station("d0", StationKind::Depot, 0.0, 0.0)];
        let mut hh = household("h0", "d0", 0.0, 1.0);
        hh.lambda = 0.5; // gamma * pi = 0.01
        let err = Instance::assemble(
            test_params(1),
            vec![charger()],
            stations,
            vec![hh],
            Policy::Multi,
            TravelModel::default(),
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("household h0"), "{err}");
    }

    #[test]
    fn travel_matrix_overrides_geometry() {
        let stations = vec![station("d0", StationKind::Depot, 0.0, 0.0)];
        let households = vec![household("h0", "d0", 0.0, 1.0)];
        // 1 station x (1 station + 1 household): station->station = 0,
        // station->household = 42 regardless of geometry.
        let matrix = vec![vec![0.0, 42.0]];
        let inst = Instance::assemble(
            test_params(1),
            vec![charger()],
            stations,
            households,
            Policy::Multi,
            TravelModel::default(),
            Some(matrix),
        )
        .unwrap();
        assert_eq!(
            inst.travel_minutes(Node::Station(0), Node::Household(0)),
            42.0
        );
    }

    #[test]
    fn depot_with_nonzero_open_cost_rejected() {
        let mut bad = station("d0", StationKind::Depot, 0.0, 0.0);
        bad.open_cost = 5.0;
        let err = Instance::assemble(
            test_params(1),
            vec![charger()],
            vec![bad],
            vec![],
            Policy::Multi,
            TravelModel::default(),
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("station d0"), "{err}");
    }
}
