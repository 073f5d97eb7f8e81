//! Instance files: a single JSON document with top-level keys `comment`,
//! `policy`, `params`, `charger_types`, `stations`, `households`,
//! `travel`, and optional `travel_matrix`.
//!
//! Units: rates per day, costs USD/day (except the per-minute detour and
//! wait cost coefficients), times minutes. The optional travel matrix is
//! row-major minutes with one row per station (file order) and one column
//! per station followed by one per household (file order); when present
//! it overrides the geometric travel model.
//!
//! Field order on save is fixed by the struct definitions, so the same
//! instance always serializes to the same bytes.

use super::{
    ChargerType, GlobalParams, Household, Instance, InstanceError, Policy, Position, Station,
    TravelModel,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

const FILE_COMMENT: &str = "scla instance; rates per day, costs USD/day (detour_cost and wait_cost USD/min), times minutes; travel_matrix rows = stations, cols = stations then households, row-major minutes";

#[derive(Serialize)]
struct FileOut<'a> {
    comment: &'static str,
    policy: Policy,
    params: &'a GlobalParams,
    travel: &'a TravelModel,
    charger_types: &'a [ChargerType],
    stations: &'a [Station],
    households: Vec<HouseholdOut<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    travel_matrix: Option<&'a Vec<Vec<f64>>>,
}

/// Serialized household; identical to [`Household`], spelled out so the
/// on-disk schema is explicit and stable.
#[derive(Serialize)]
struct HouseholdOut<'a> {
    id: &'a str,
    position: Position,
    depot_id: &'a str,
    gamma: f64,
    pi: f64,
    lambda: f64,
}

#[derive(Deserialize)]
struct FileIn {
    #[serde(default)]
    #[allow(dead_code)]
    comment: Option<String>,
    policy: Policy,
    params: GlobalParams,
    #[serde(default)]
    travel: Option<TravelModel>,
    charger_types: Vec<ChargerType>,
    stations: Vec<Station>,
    households: Vec<HouseholdIn>,
    #[serde(default)]
    travel_matrix: Option<Vec<Vec<f64>>>,
}

/// Households are deserialized leniently so that a missing or
/// inconsistent field produces an error naming the household, not just a
/// byte offset.
#[derive(Deserialize)]
struct HouseholdIn {
    id: String,
    position: Position,
    depot_id: String,
    gamma: Option<f64>,
    pi: Option<f64>,
    lambda: Option<f64>,
}

impl HouseholdIn {
    fn validate(self) -> Result<Household, InstanceError> {
        let entity = format!("household {}", self.id);
        let need = |field: &str, value: Option<f64>| {
            value.ok_or_else(|| InstanceError::MissingField {
                entity: entity.clone(),
                field: field.into(),
            })
        };
        Ok(Household {
            gamma: need("gamma", self.gamma)?,
            pi: need("pi", self.pi)?,
            lambda: need("lambda", self.lambda)?,
            id: self.id,
            position: self.position,
            depot_id: self.depot_id,
        })
    }
}

pub fn save_instance(instance: &Instance, path: &Path) -> Result<(), InstanceError> {
    let households = instance
        .households
        .iter()
        .map(|h| HouseholdOut {
            id: &h.id,
            position: h.position,
            depot_id: &h.depot_id,
            gamma: h.gamma,
            pi: h.pi,
            lambda: h.lambda,
        })
        .collect();
    let out = FileOut {
        comment: FILE_COMMENT,
        policy: instance.policy,
        params: &instance.params,
        travel: &instance.travel_model,
        charger_types: &instance.charger_types,
        stations: &instance.stations,
        households,
        travel_matrix: instance.travel_matrix.as_ref(),
    };
    let text = serde_json::to_string_pretty(&out)?;
    std::fs::write(path, text + "\n").map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_instance(path: &Path) -> Result<Instance, InstanceError> {
    let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let FileIn {
        comment: _,
        policy,
        params,
        travel,
        charger_types,
        stations,
        households,
        travel_matrix,
    } = serde_json::from_str(&text)?;
    let households = households
        .into_iter()
        .map(HouseholdIn::validate)
        .collect::<Result<Vec<_>, _>>()?;
    Instance::assemble(
        params,
        charger_types,
        stations,
        households,
        policy,
        travel.unwrap_or_default(),
        travel_matrix,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::scenario::{generate_scenario, ScenarioSpec};

    #[test]
    fn save_load_round_trip() {
        let spec = ScenarioSpec {
            n_households: 15,
            n_taz: 4,
            n_depots: 2,
            ..ScenarioSpec::baseline(5)
        };
        let inst = generate_scenario(&spec).unwrap();
        let dir = std::env::temp_dir().join("scla-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.json");
        save_instance(&inst, &path).unwrap();
        let loaded = load_instance(&path).unwrap();
        assert_eq!(inst.stations, loaded.stations);
        assert_eq!(inst.households, loaded.households);
        assert_eq!(inst.charger_types, loaded.charger_types);
        assert_eq!(inst.params, loaded.params);
        assert_eq!(inst.policy, loaded.policy);
        // Saving again produces identical bytes.
        let path2 = dir.join("roundtrip2.json");
        save_instance(&loaded, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn missing_lambda_names_the_household() {
        let text = r#"{
            "policy": "multi",
            "params": {"detour_cost": 1.0, "wait_cost": 1.0, "station_budget": 10.0,
                       "charger_budget": 10.0, "max_stations": 5, "max_wait": 30.0,
                       "epsilon": 0.01, "k_c": 1},
            "travel": {"model": "euclidean", "minutes_per_unit": 1.0},
            "charger_types": [{"id": "c", "mu": 10.0, "install_cost": 1.0, "max_per_station": 3}],
            "stations": [{"id": "d0", "position": {"lat": 0.0, "lon": 0.0}, "kind": "depot", "open_cost": 0.0}],
            "households": [{"id": "h3", "position": {"lat": 0.0, "lon": 1.0}, "depot_id": "d0", "gamma": 1.0, "pi": 0.5}]
        }"#;
        let dir = std::env::temp_dir().join("scla-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("missing-lambda.json");
        std::fs::write(&path, text).unwrap();
        let err = load_instance(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("household h3") && msg.contains("lambda"), "{msg}");
    }

    #[test]
    fn wrong_matrix_shape_is_reported() {
        let spec = ScenarioSpec {
            n_households: 3,
            n_taz: 2,
            n_depots: 1,
            ..ScenarioSpec::baseline(5)
        };
        let mut inst = generate_scenario(&spec).unwrap();
        inst.travel_matrix = Some(vec![vec![0.0; 2]; 3]);
        let dir = std::env::temp_dir().join("scla-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad-matrix.json");
        save_instance(&inst, &path).unwrap();
        let err = load_instance(&path).unwrap_err();
        assert!(matches!(err, InstanceError::MatrixShape { .. }), "{err}");
    }
}
