//! Neighborhood construction: for every household the `k_c` nearest
//! eligible stations (`J_i`), and the inverse map `I_j`.
//!
//! Eligibility is decided before the nearest-neighbor query: a station
//! must be a candidate in the current scenario, and under a single-agency
//! policy it must carry the same agency as the household's depot. Stations
//! are grouped by eligibility class and each class gets its own spatial
//! index, so `J_i` always holds `k_c` stations whenever the class has that
//! many.
//!
//! Queries use great-circle distance. Small classes are scanned
//! exhaustively; larger ones go through a k-d tree over unit-sphere
//! coordinates, where chord distance is monotone in great-circle distance
//! and therefore returns the same ranking.

use super::{Household, InstanceError, Policy, Station};
use std::collections::HashMap;

/// Exhaustive scan is fine below this many stations per eligibility class.
const BRUTE_FORCE_LIMIT: usize = 1024;

#[derive(Debug, Clone, Default)]
pub struct Neighborhoods {
    /// `J_i`: station indices per household, nearest first.
    pub stations_for: Vec<Vec<usize>>,
    /// `I_j`: household indices per station, ascending.
    pub households_for: Vec<Vec<usize>>,
}

impl Neighborhoods {
    /// Membership symmetry check: `i in I_j` iff `j in J_i`.
    pub fn is_symmetric(&self) -> bool {
        let mut pairs = 0usize;
        for (i, js) in self.stations_for.iter().enumerate() {
            for &j in js {
                if !self.households_for[j].contains(&i) {
                    return false;
                }
                pairs += 1;
            }
        }
        let inverse: usize = self.households_for.iter().map(|v| v.len()).sum();
        pairs == inverse
    }
}

/// Build `J_i` and `I_j` for the given policy and neighborhood size.
pub fn build_neighborhoods(
    stations: &[Station],
    households: &[Household],
    depot_of: &[usize],
    policy: Policy,
    k_c: usize,
) -> Result<Neighborhoods, InstanceError> {
    // Group candidate stations by eligibility class: one shared class
    // under a multi-agency policy, one class per agency label otherwise.
    let mut classes: HashMap<Option<&str>, Vec<usize>> = HashMap::new();
    for (j, st) in stations.iter().enumerate() {
        if !st.candidate {
            continue;
        }
        let key = match policy {
            Policy::Multi => None,
            Policy::Single => st.agency.as_deref(),
        };
        classes.entry(key).or_default().push(j);
    }

    let mut indexes: HashMap<Option<&str>, ClassIndex> = classes
        .into_iter()
        .map(|(key, members)| (key, ClassIndex::build(members, stations)))
        .collect();

    let mut stations_for = Vec::with_capacity(households.len());
    let mut households_for = vec![Vec::new(); stations.len()];
    for (i, hh) in households.iter().enumerate() {
        let key = match policy {
            Policy::Multi => None,
            Policy::Single => stations[depot_of[i]].agency.as_deref(),
        };
        let nearest = indexes
            .get_mut(&key)
            .map(|index| index.nearest(hh, k_c, stations))
            .unwrap_or_default();
        if nearest.is_empty() {
            return Err(InstanceError::EmptyNeighborhood {
                household: hh.id.clone(),
            });
        }
        for &j in &nearest {
            households_for[j].push(i);
        }
        stations_for.push(nearest);
    }

    Ok(Neighborhoods {
        stations_for,
        households_for,
    })
}

enum ClassIndex {
    Brute(Vec<usize>),
    Tree(KdTree),
}

impl ClassIndex {
    fn build(members: Vec<usize>, stations: &[Station]) -> ClassIndex {
        if members.len() <= BRUTE_FORCE_LIMIT {
            ClassIndex::Brute(members)
        } else {
            ClassIndex::Tree(KdTree::build(members, stations))
        }
    }

    /// Up to `k` nearest members, ties broken toward the lower station
    /// index (file order).
    fn nearest(&mut self, household: &Household, k: usize, stations: &[Station]) -> Vec<usize> {
        match self {
            ClassIndex::Brute(members) => {
                let mut ranked: Vec<(f64, usize)> = members
                    .iter()
                    .map(|&j| {
                        (
                            household.position.great_circle_km(&stations[j].position),
                            j,
                        )
                    })
                    .collect();
                ranked.sort_by(|a, b| a.partial_cmp(b).unwrap());
                ranked.truncate(k);
                ranked.into_iter().map(|(_, j)| j).collect()
            }
            ClassIndex::Tree(tree) => tree.nearest(household.position.unit_sphere(), k),
        }
    }
}

/// 3-d k-d tree over unit-sphere station coordinates.
struct KdTree {
    /// Station index and point per node, heap-ordered by the build.
    nodes: Vec<TreeNode>,
    root: Option<usize>,
}

struct TreeNode {
    point: [f64; 3],
    station: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

impl KdTree {
    fn build(members: Vec<usize>, stations: &[Station]) -> KdTree {
        let mut items: Vec<([f64; 3], usize)> = members
            .into_iter()
            .map(|j| (stations[j].position.unit_sphere(), j))
            .collect();
        let mut tree = KdTree {
            nodes: Vec::with_capacity(items.len()),
            root: None,
        };
        tree.root = tree.build_rec(&mut items, 0);
        tree
    }

    fn build_rec(&mut self, items: &mut [([f64; 3], usize)], axis: usize) -> Option<usize> {
        if items.is_empty() {
            return None;
        }
        let mid = items.len() / 2;
        items.select_nth_unstable_by(mid, |a, b| {
            (a.0[axis], a.1).partial_cmp(&(b.0[axis], b.1)).unwrap()
        });
        let (point, station) = items[mid];
        let slot = self.nodes.len();
        self.nodes.push(TreeNode {
            point,
            station,
            axis,
            left: None,
            right: None,
        });
        let next_axis = (axis + 1) % 3;
        let (lo, rest) = items.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_rec(lo, next_axis);
        let right = self.build_rec(hi, next_axis);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }

    fn nearest(&self, query: [f64; 3], k: usize) -> Vec<usize> {
        // Best candidates as (chord^2, station), worst kept at the end.
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if let Some(root) = self.root {
            self.search(root, query, k, &mut best);
        }
        best.into_iter().map(|(_, j)| j).collect()
    }

    fn search(&self, node: usize, query: [f64; 3], k: usize, best: &mut Vec<(f64, usize)>) {
        let n = &self.nodes[node];
        let d2 = dist2(&n.point, &query);
        let entry = (d2, n.station);
        let pos = best.partition_point(|e| *e < entry);
        best.insert(pos, entry);
        if best.len() > k {
            best.pop();
        }

        let diff = query[n.axis] - n.point[n.axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        if let Some(child) = near {
            self.search(child, query, k, best);
        }
        // The far side can only matter if the splitting plane is closer
        // than the current worst candidate (or the candidate list is short).
        let plane_d2 = diff * diff;
        let must_cross = best.len() < k || plane_d2 < best.last().unwrap().0;
        if must_cross {
            if let Some(child) = far {
                self.search(child, query, k, best);
            }
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Position, StationKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mk_station(idx: usize, lat: f64, lon: f64) -> Station {
        Station {
            id: format!("s{idx}"),
            position: Position { lat, lon },
            kind: StationKind::Taz,
            agency: None,
            open_cost: 1.0,
            candidate: true,
        }
    }

    fn mk_household(idx: usize, lat: f64, lon: f64) -> Household {
        Household {
            id: format!("h{idx}"),
            position: Position { lat, lon },
            depot_id: "s0".into(),
            gamma: 1.0,
            pi: 0.5,
            lambda: 0.5,
        }
    }

    #[test]
    fn saturation_when_kc_covers_all() {
        let stations: Vec<Station> = (0..4)
            .map(|j| mk_station(j, 41.0 + j as f64 * 0.01, -87.0))
            .collect();
        let households = vec![mk_household(0, 41.0, -87.0)];
        let nb = build_neighborhoods(&stations, &households, &[0], Policy::Multi, 4).unwrap();
        assert_eq!(nb.stations_for[0].len(), 4);
    }

    #[test]
    fn single_nearest_station() {
        let stations = vec![mk_station(0, 41.0, -87.0), mk_station(1, 42.0, -87.0)];
        let households = vec![mk_household(0, 41.1, -87.0)];
        let nb = build_neighborhoods(&stations, &households, &[0], Policy::Multi, 1).unwrap();
        assert_eq!(nb.stations_for[0], vec![0]);
        assert_eq!(nb.households_for[0], vec![0]);
        assert!(nb.households_for[1].is_empty());
    }

    #[test]
    fn distance_ties_prefer_lower_station_index() {
        // Co-located stations give bit-identical distances; the earlier
        // one in file order must win.
        let stations = vec![mk_station(0, 41.2, -87.1), mk_station(1, 41.2, -87.1)];
        let households = vec![mk_household(0, 41.0, -87.0)];
        let nb = build_neighborhoods(&stations, &households, &[0], Policy::Multi, 1).unwrap();
        assert_eq!(nb.stations_for[0], vec![0]);
    }

    #[test]
    fn symmetry_on_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let stations: Vec<Station> = (0..12)
            .map(|j| {
                mk_station(
                    j,
                    41.0 + rng.gen_range(-0.5..0.5),
                    -87.0 + rng.gen_range(-0.5..0.5),
                )
            })
            .collect();
        let households: Vec<Household> = (0..50)
            .map(|i| {
                mk_household(
                    i,
                    41.0 + rng.gen_range(-0.5..0.5),
                    -87.0 + rng.gen_range(-0.5..0.5),
                )
            })
            .collect();
        let depots = vec![0usize; 50];
        let nb = build_neighborhoods(&stations, &households, &depots, Policy::Multi, 3).unwrap();
        assert!(nb.is_symmetric());
        // Every station set is exactly k_c and every household appears.
        assert!(nb.stations_for.iter().all(|v| v.len() == 3));
        let covered: usize = nb.households_for.iter().map(|v| v.len()).sum();
        assert_eq!(covered, 150);
    }

    #[test]
    fn tree_matches_brute_force_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let stations: Vec<Station> = (0..300)
            .map(|j| {
                mk_station(
                    j,
                    41.0 + rng.gen_range(-1.0..1.0),
                    -87.0 + rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let members: Vec<usize> = (0..stations.len()).collect();
        let tree = KdTree::build(members.clone(), &stations);
        for t in 0..100 {
            let hh = mk_household(
                t,
                41.0 + rng.gen_range(-1.0..1.0),
                -87.0 + rng.gen_range(-1.0..1.0),
            );
            let k = rng.gen_range(1..=8usize);
            let from_tree = tree.nearest(hh.position.unit_sphere(), k);
            let mut brute = ClassIndex::Brute(members.clone());
            let from_scan = brute.nearest(&hh, k, &stations);
            assert_eq!(from_tree, from_scan, "query {t} (k={k})");
        }
    }

    #[test]
    fn single_agency_filters_by_depot_agency() {
        let mut stations = vec![
            mk_station(0, 41.0, -87.0),
            mk_station(1, 41.0, -87.001),
            mk_station(2, 41.0, -87.002),
        ];
        stations[0].kind = StationKind::Depot;
        stations[0].open_cost = 0.0;
        stations[0].agency = Some("a".into());
        stations[1].agency = Some("b".into());
        stations[2].agency = Some("a".into());
        let households = vec![mk_household(0, 41.0, -87.0015)];
        let nb = build_neighborhoods(&stations, &households, &[0], Policy::Single, 2).unwrap();
        // Station 1 is nearest but belongs to the other agency.
        assert_eq!(nb.stations_for[0], vec![2, 0]);
    }
}
