//! Time-stamped trip requests between zone-tagged stops.
//!
//! Demand is a pair of homogeneous Poisson processes: outbound trips from
//! peripheral housing stops to central opportunity stops, and inbound trips
//! in the reverse direction.

use alloc::vec::Vec;

use rand::Rng;

use crate::netgraph::{RoadGraph, Stop, Zone};
use crate::rng::{exponential, rng_for};
use crate::{Error, RequestId, Result, StopId};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TripRequest {
    pub id: RequestId,
    pub origin: StopId,
    pub destination: StopId,
    /// Seconds from simulation start.
    pub request_time: f64,
    pub party_size: u32,
}

impl TripRequest {
    pub fn validate(&self) -> Result<()> {
        if self.origin == self.destination {
            return Err(Error::InvalidInput(alloc::format!(
                "request {} has identical origin and destination",
                self.id
            )));
        }
        if self.party_size == 0 {
            return Err(Error::InvalidInput(alloc::format!(
                "request {} has party size 0",
                self.id
            )));
        }
        if !(self.request_time >= 0.0 && self.request_time.is_finite()) {
            return Err(Error::InvalidInput(alloc::format!(
                "request {} has invalid request time {}",
                self.id,
                self.request_time
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DemandProfile {
    /// Requests per hour, peripheral housing -> central opportunity.
    pub outbound_rate: f64,
    /// Requests per hour, central opportunity -> peripheral housing.
    pub inbound_rate: f64,
    /// Probabilities of party sizes 1, 2 and 3.
    pub party_size_weights: [f64; 3],
    /// Seconds during which requests are generated.
    pub horizon: f64,
}

impl Default for DemandProfile {
    /// Calibrated against the default synthetic network so that a fleet of
    /// about eight vehicles absorbs the load while smaller fleets build up
    /// long queues.
    fn default() -> Self {
        Self {
            outbound_rate: 16.0,
            inbound_rate: 8.0,
            party_size_weights: [0.7, 0.2, 0.1],
            horizon: 3.0 * 3600.0,
        }
    }
}

impl DemandProfile {
    pub fn none() -> Self {
        Self {
            outbound_rate: 0.0,
            inbound_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(alloc::format!("demand profile: {msg}")));
        if !(self.outbound_rate >= 0.0 && self.outbound_rate.is_finite())
            || !(self.inbound_rate >= 0.0 && self.inbound_rate.is_finite())
        {
            return bad("rates must be finite and >= 0");
        }
        if self.party_size_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("party size weights must be >= 0");
        }
        let sum: f64 = self.party_size_weights.iter().sum();
        if libm::fabs(sum - 1.0) > 1e-9 {
            return bad("party size weights must sum to 1");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be > 0");
        }
        Ok(())
    }
}

fn zone_stops(stops: &[Stop], zone: Zone) -> Vec<StopId> {
    let mut ids: Vec<StopId> = stops
        .iter()
        .filter(|s| s.zone == zone)
        .map(|s| s.id)
        .collect();
    ids.sort_unstable();
    ids
}

fn draw_party(rng: &mut crate::rng::SimRng, weights: &[f64; 3]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i as u32 + 1;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .map_or(1, |i| i as u32 + 1)
}

/// Draws the requests of one replication, sorted by request time and
/// numbered from 0 in that order.
pub fn generate_requests(
    profile: &DemandProfile,
    stops: &[Stop],
    seed: u64,
) -> Result<Vec<TripRequest>> {
    profile.validate()?;
    let housing = zone_stops(stops, Zone::PeripheralHousing);
    let central = zone_stops(stops, Zone::CentralOpportunity);

    let directions = [
        (1u64, profile.outbound_rate, &housing, &central),
        (2u64, profile.inbound_rate, &central, &housing),
    ];
    let mut drawn: Vec<(f64, u64, TripRequest)> = Vec::new();
    for (stream, rate, origins, destinations) in directions {
        if rate == 0.0 {
            continue;
        }
        if origins.is_empty() || destinations.is_empty() {
            return Err(Error::InvalidInput(
                "a nonzero demand rate needs stops in both peripheral_housing and central_opportunity zones"
                    .into(),
            ));
        }
        let per_second = rate / 3600.0;
        let mut rng = rng_for(seed, stream);
        let mut t = 0.0;
        loop {
            t += exponential(&mut rng, per_second);
            if t >= profile.horizon {
                break;
            }
            let origin = origins[rng.random_range(0..origins.len())];
            let destination = destinations[rng.random_range(0..destinations.len())];
            let party_size = draw_party(&mut rng, &profile.party_size_weights);
            drawn.push((
                t,
                stream,
                TripRequest {
                    id: 0,
                    origin,
                    destination,
                    request_time: t,
                    party_size,
                },
            ));
        }
    }
    drawn.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(drawn
        .into_iter()
        .enumerate()
        .map(|(i, (_, _, r))| TripRequest {
            id: i as RequestId,
            ..r
        })
        .collect())
}

/// Checks externally supplied requests against the graph's stops and sorts
/// them by (request time, id).
pub fn validate_requests(
    mut requests: Vec<TripRequest>,
    graph: &RoadGraph,
) -> Result<Vec<TripRequest>> {
    let mut seen = alloc::collections::BTreeSet::new();
    for r in &requests {
        for stop in [r.origin, r.destination] {
            if graph.stop(stop).is_err() {
                return Err(Error::UnknownStop {
                    request: r.id,
                    stop,
                });
            }
        }
        r.validate()?;
        if !seen.insert(r.id) {
            return Err(Error::InvalidInput(alloc::format!(
                "duplicate request id {}",
                r.id
            )));
        }
    }
    requests.sort_by(|a, b| {
        a.request_time
            .total_cmp(&b.request_time)
            .then(a.id.cmp(&b.id))
    });
    Ok(requests)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stops() -> Vec<Stop> {
        let mk = |id, zone| Stop {
            id,
            edge: 0,
            slack: 0.0,
            zone,
        };
        vec![
            mk(0, Zone::PeripheralHousing),
            mk(1, Zone::PeripheralHousing),
            mk(2, Zone::CentralOpportunity),
            mk(3, Zone::CentralOpportunity),
            mk(4, Zone::Other),
        ]
    }

    #[test]
    fn zero_rates_give_no_requests() {
        assert!(generate_requests(&DemandProfile::none(), &stops(), 1)
            .unwrap()
            .is_empty());
        // no zones needed when both rates are zero
        assert!(generate_requests(&DemandProfile::none(), &[], 1)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let p = DemandProfile::default();
        let a = generate_requests(&p, &stops(), 42).unwrap();
        let b = generate_requests(&p, &stops(), 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_requests(&p, &stops(), 43).unwrap());
    }

    #[test]
    fn requests_are_sorted_valid_and_zone_consistent() {
        let p = DemandProfile {
            outbound_rate: 30.0,
            inbound_rate: 20.0,
            ..DemandProfile::default()
        };
        let all = stops();
        let zone_of = |id: StopId| all.iter().find(|s| s.id == id).unwrap().zone;
        let rs = generate_requests(&p, &all, 9).unwrap();
        assert!(!rs.is_empty());
        for (i, w) in rs.windows(2).enumerate() {
            assert!(w[0].request_time <= w[1].request_time);
            assert_eq!(w[0].id as usize, i);
        }
        for r in &rs {
            r.validate().unwrap();
            assert!(r.request_time < p.horizon);
            assert!((1..=3).contains(&r.party_size));
            match zone_of(r.origin) {
                Zone::PeripheralHousing => {
                    assert_eq!(zone_of(r.destination), Zone::CentralOpportunity)
                }
                Zone::CentralOpportunity => {
                    assert_eq!(zone_of(r.destination), Zone::PeripheralHousing)
                }
                Zone::Other => panic!("origin in untagged zone"),
            }
        }
    }

    #[test]
    fn missing_zone_is_rejected() {
        let only_housing: Vec<Stop> = stops()
            .into_iter()
            .filter(|s| s.zone == Zone::PeripheralHousing)
            .collect();
        let p = DemandProfile {
            inbound_rate: 0.0,
            ..DemandProfile::default()
        };
        assert!(matches!(
            generate_requests(&p, &only_housing, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn profile_validation() {
        let p = DemandProfile {
            party_size_weights: [0.5, 0.2, 0.1],
            ..DemandProfile::default()
        };
        assert!(p.validate().is_err());
        let p = DemandProfile {
            horizon: 0.0,
            ..DemandProfile::default()
        };
        assert!(p.validate().is_err());
        let p = DemandProfile {
            outbound_rate: -1.0,
            ..DemandProfile::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn poisson_mean_over_many_seeds() {
        // rate * horizon = 10/h * 10 h = 100 expected arrivals
        let p = DemandProfile {
            outbound_rate: 10.0,
            inbound_rate: 0.0,
            party_size_weights: [1.0, 0.0, 0.0],
            horizon: 10.0 * 3600.0,
        };
        let seeds = 10_000u64;
        let total: usize = (0..seeds)
            .map(|s| generate_requests(&p, &stops(), s).unwrap().len())
            .sum();
        let mean = total as f64 / seeds as f64;
        assert!((95.0..=105.0).contains(&mean), "mean {mean}");
        assert!((mean - 100.0).abs() <= 5.0);
    }

    #[test]
    fn party_size_distribution_follows_weights() {
        let p = DemandProfile {
            outbound_rate: 200.0,
            inbound_rate: 0.0,
            ..DemandProfile::default()
        };
        let mut counts = [0usize; 3];
        for s in 0..50 {
            for r in generate_requests(&p, &stops(), s).unwrap() {
                counts[r.party_size as usize - 1] += 1;
            }
        }
        let n: usize = counts.iter().sum();
        let share = |i: usize| counts[i] as f64 / n as f64;
        assert!((share(0) - 0.7).abs() < 0.02);
        assert!((share(1) - 0.2).abs() < 0.02);
        assert!((share(2) - 0.1).abs() < 0.02);
    }
}
