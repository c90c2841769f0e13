//! Geometric value-of-information study: what a driver pays to charge (or earns
//! by discharging) when it only knows where the nearest station is, versus when
//! it can see every station's price and pick the best one.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{Estimate, RunningStats};

/// Per-kWh price levels stations are drawn from.
pub const PRICE_LEVELS: [f64; 3] = [0.15, 0.20, 0.25];

#[derive(Debug, Error)]
pub enum VoiError {
    #[error("topology has no stations")]
    EmptyTopology,
    #[error("station {index} at ({x}, {y}) lies outside the {area} km square")]
    OutsideArea { index: usize, x: f64, y: f64, area: f64 },
    #[error("station {index} has non-positive price {price}")]
    BadPrice { index: usize, price: f64 },
    #[error("position ({x}, {y}) lies outside the {area} km square")]
    BadPosition { x: f64, y: f64, area: f64 },
    #[error("{field} must be positive, got {value}")]
    BadParam { field: &'static str, value: f64 },
    #[error("topology line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("cannot take {requested} stations from a topology of {available}")]
    TooFewStations { requested: usize, available: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub x: f64,
    pub y: f64,
    pub price: f64,
}

impl Station {
    pub fn distance(&self, (x, y): (f64, f64)) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// Side of the square service area, km.
    pub area: f64,
    pub stations: Vec<Station>,
}

impl Topology {
    pub fn new(area: f64, stations: Vec<Station>) -> Result<Self, VoiError> {
        let t = Self { area, stations };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), VoiError> {
        if !(self.area > 0.0) {
            return Err(VoiError::BadParam {
                field: "area",
                value: self.area,
            });
        }
        if self.stations.is_empty() {
            return Err(VoiError::EmptyTopology);
        }
        for (index, s) in self.stations.iter().enumerate() {
            let inside = |v: f64| (0.0..=self.area).contains(&v);
            if !inside(s.x) || !inside(s.y) {
                return Err(VoiError::OutsideArea {
                    index,
                    x: s.x,
                    y: s.y,
                    area: self.area,
                });
            }
            if !(s.price > 0.0) || !s.price.is_finite() {
                return Err(VoiError::BadPrice { index, price: s.price });
            }
        }
        Ok(())
    }

    /// Uniformly placed stations; prices cycle through [`PRICE_LEVELS`] in a
    /// shuffled order so every prefix carries a near-even price mix.
    pub fn random<R: Rng + ?Sized>(area: f64, n: usize, rng: &mut R) -> Self {
        let mut prices = Vec::with_capacity(n);
        while prices.len() < n {
            let mut block = PRICE_LEVELS;
            block.shuffle(rng);
            prices.extend_from_slice(&block);
        }
        let stations = prices
            .into_iter()
            .take(n)
            .map(|price| Station {
                x: rng.gen::<f64>() * area,
                y: rng.gen::<f64>() * area,
                price,
            })
            .collect();
        Self { area, stations }
    }

    /// Default study layout: 20 stations in a 10 km square from a fixed seed.
    pub fn default_instance() -> Self {
        Self::random(10.0, 20, &mut ChaCha8Rng::seed_from_u64(DEFAULT_TOPOLOGY_SEED))
    }

    /// The first `n` stations, so growing station counts are nested layouts.
    pub fn prefix(&self, n: usize) -> Result<Self, VoiError> {
        if n == 0 || n > self.stations.len() {
            return Err(VoiError::TooFewStations {
                requested: n,
                available: self.stations.len(),
            });
        }
        Ok(Self {
            area: self.area,
            stations: self.stations[..n].to_vec(),
        })
    }

    /// Reads `x_km,y_km,price_mu_per_kwh` rows (header required).
    pub fn from_csv<R: Read>(area: f64, reader: R) -> Result<Self, VoiError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut stations = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| VoiError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != 3 {
                return Err(VoiError::Parse {
                    line,
                    reason: format!("expected 3 fields, found {}", record.len()),
                });
            }
            let field = |i: usize, name: &str| -> Result<f64, VoiError> {
                record[i].parse::<f64>().map_err(|e| VoiError::Parse {
                    line,
                    reason: format!("{name}: {e} ({:?})", &record[i]),
                })
            };
            stations.push(Station {
                x: field(0, "x_km")?,
                y: field(1, "y_km")?,
                price: field(2, "price_mu_per_kwh")?,
            });
        }
        Self::new(area, stations)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), VoiError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x_km", "y_km", "price_mu_per_kwh"])?;
        for s in &self.stations {
            w.write_record([s.x.to_string(), s.y.to_string(), s.price.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Seed of the built-in 20-station layout.
pub const DEFAULT_TOPOLOGY_SEED: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Energy bought or sold per visit, kWh.
    pub charge_amount: f64,
    /// Energy spent per km driven to the station, kWh/km.
    pub travel_rate: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            charge_amount: 60.0,
            travel_rate: 0.2,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VoiError> {
        for (field, value) in [
            ("charge_amount", self.charge_amount),
            ("travel_rate", self.travel_rate),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(VoiError::BadParam { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Charge,
    Discharge,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Charge => "charge",
            Mode::Discharge => "discharge",
        }
    }
}

/// Charge cost `(E + r·d)·price` or discharge profit `(E − r·d)·price` at one station.
pub fn station_value(station: &Station, pos: (f64, f64), params: &VehicleParams, mode: Mode) -> f64 {
    let travel = params.travel_rate * station.distance(pos);
    match mode {
        Mode::Charge => (params.charge_amount + travel) * station.price,
        Mode::Discharge => (params.charge_amount - travel) * station.price,
    }
}

/// Cost (charge) or profit (discharge) of one trip. Uninformed drivers use the
/// Euclidean-nearest station; informed drivers pick the best one.
pub fn scenario_cost(
    pos: (f64, f64),
    topology: &Topology,
    params: &VehicleParams,
    mode: Mode,
    informed: bool,
) -> Result<f64, VoiError> {
    if topology.stations.is_empty() {
        return Err(VoiError::EmptyTopology);
    }
    let inside = |v: f64| (0.0..=topology.area).contains(&v);
    if !inside(pos.0) || !inside(pos.1) {
        return Err(VoiError::BadPosition {
            x: pos.0,
            y: pos.1,
            area: topology.area,
        });
    }
    Ok(scenario_cost_unchecked(pos, topology, params, mode, informed))
}

fn scenario_cost_unchecked(
    pos: (f64, f64),
    topology: &Topology,
    params: &VehicleParams,
    mode: Mode,
    informed: bool,
) -> f64 {
    let value = |s: &Station| station_value(s, pos, params, mode);
    if informed {
        let values = topology.stations.iter().map(value);
        match mode {
            Mode::Charge => values.fold(f64::INFINITY, f64::min),
            Mode::Discharge => values.fold(f64::NEG_INFINITY, f64::max),
        }
    } else {
        // Ties in distance break toward the cheaper station for charging and the
        // dearer one for selling, which keeps the result order-independent.
        let better = |a: &Station, b: &Station| {
            let (da, db) = (a.distance(pos), b.distance(pos));
            da.total_cmp(&db).then_with(|| match mode {
                Mode::Charge => a.price.total_cmp(&b.price),
                Mode::Discharge => b.price.total_cmp(&a.price),
            })
        };
        let nearest = topology
            .stations
            .iter()
            .min_by(|a, b| better(a, b))
            .expect("non-empty");
        value(nearest)
    }
}

/// Means of the four arms over common random positions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoiTable {
    pub stations: usize,
    pub trials: u64,
    pub charge_informed: Estimate,
    pub charge_uninformed: Estimate,
    pub discharge_informed: Estimate,
    pub discharge_uninformed: Estimate,
    /// Per-trial uninformed − informed charge cost (paired, so its stderr is small).
    pub charge_gain: Estimate,
    /// Per-trial informed − uninformed discharge profit.
    pub discharge_gain: Estimate,
}

impl VoiTable {
    /// `(arm, mode, estimate)` rows in a fixed order.
    pub fn rows(&self) -> [(&'static str, Mode, Estimate); 4] {
        [
            ("informed", Mode::Charge, self.charge_informed),
            ("uninformed", Mode::Charge, self.charge_uninformed),
            ("informed", Mode::Discharge, self.discharge_informed),
            ("uninformed", Mode::Discharge, self.discharge_uninformed),
        ]
    }
}

/// Positions are uniform over the area; every arm sees the same position.
pub fn monte_carlo_voi<R: Rng + ?Sized>(
    topology: &Topology,
    params: &VehicleParams,
    trials: u64,
    rng: &mut R,
) -> Result<VoiTable, VoiError> {
    topology.validate()?;
    params.validate()?;
    if trials == 0 {
        return Err(VoiError::BadParam {
            field: "trials",
            value: 0.0,
        });
    }
    let mut acc = [RunningStats::new(); 6];
    for _ in 0..trials {
        let pos = (rng.gen::<f64>() * topology.area, rng.gen::<f64>() * topology.area);
        let ci = scenario_cost_unchecked(pos, topology, params, Mode::Charge, true);
        let cu = scenario_cost_unchecked(pos, topology, params, Mode::Charge, false);
        let di = scenario_cost_unchecked(pos, topology, params, Mode::Discharge, true);
        let du = scenario_cost_unchecked(pos, topology, params, Mode::Discharge, false);
        for (s, v) in acc.iter_mut().zip([ci, cu, di, du, cu - ci, di - du]) {
            s.push(v);
        }
    }
    Ok(VoiTable {
        stations: topology.stations.len(),
        trials,
        charge_informed: acc[0].summary(),
        charge_uninformed: acc[1].summary(),
        discharge_informed: acc[2].summary(),
        discharge_uninformed: acc[3].summary(),
        charge_gain: acc[4].summary(),
        discharge_gain: acc[5].summary(),
    })
}

/// Runs [`monte_carlo_voi`] on nested prefixes of `topology`, reseeding each
/// count with the same `seed` so all counts share positions.
pub fn station_count_study(
    topology: &Topology,
    counts: &[usize],
    params: &VehicleParams,
    trials: u64,
    seed: u64,
) -> Result<Vec<VoiTable>, VoiError> {
    use rayon::prelude::*;
    counts
        .par_iter()
        .map(|&n| {
            let sub = topology.prefix(n)?;
            monte_carlo_voi(&sub, params, trials, &mut ChaCha8Rng::seed_from_u64(seed))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_station() -> Topology {
        Topology::new(
            10.0,
            vec![
                Station { x: 6.0, y: 5.0, price: 0.25 },
                Station { x: 5.0, y: 0.0, price: 0.15 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn colocated_station_costs_energy_only() {
        let t = Topology::new(10.0, vec![Station { x: 3.0, y: 4.0, price: 0.15 }]).unwrap();
        let p = VehicleParams::default();
        for informed in [false, true] {
            let c = scenario_cost((3.0, 4.0), &t, &p, Mode::Charge, informed).unwrap();
            assert!((c - 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn informed_driver_travels_further_for_cheaper_energy() {
        let t = two_station();
        let p = VehicleParams::default();
        let pos = (5.0, 5.0);
        let cu = scenario_cost(pos, &t, &p, Mode::Charge, false).unwrap();
        let ci = scenario_cost(pos, &t, &p, Mode::Charge, true).unwrap();
        assert!((cu - 60.2 * 0.25).abs() < 1e-12);
        assert!((ci - 61.0 * 0.15).abs() < 1e-12);
        // Selling: nearest is already the dearer station.
        let du = scenario_cost(pos, &t, &p, Mode::Discharge, false).unwrap();
        let di = scenario_cost(pos, &t, &p, Mode::Discharge, true).unwrap();
        assert!((du - 59.8 * 0.25).abs() < 1e-12);
        assert_eq!(du, di);
    }

    #[test]
    fn empty_and_outside_rejected() {
        let empty = Topology {
            area: 10.0,
            stations: vec![],
        };
        let p = VehicleParams::default();
        assert!(matches!(
            scenario_cost((1.0, 1.0), &empty, &p, Mode::Charge, true),
            Err(VoiError::EmptyTopology)
        ));
        assert!(scenario_cost((11.0, 1.0), &two_station(), &p, Mode::Charge, true).is_err());
        assert!(Topology::new(10.0, vec![Station { x: 12.0, y: 0.0, price: 0.2 }]).is_err());
        assert!(Topology::new(10.0, vec![Station { x: 1.0, y: 0.0, price: 0.0 }]).is_err());
    }

    #[test]
    fn single_trial_is_single_scenario() {
        let t = Topology::default_instance();
        let p = VehicleParams::default();
        let table = monte_carlo_voi(&t, &p, 1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pos = (rng.gen::<f64>() * 10.0, rng.gen::<f64>() * 10.0);
        let direct = scenario_cost(pos, &t, &p, Mode::Charge, false).unwrap();
        assert_eq!(table.charge_uninformed.mean, direct);
        let direct = scenario_cost(pos, &t, &p, Mode::Discharge, true).unwrap();
        assert_eq!(table.discharge_informed.mean, direct);
    }

    #[test]
    fn permutation_invariant_and_deterministic() {
        let t = Topology::default_instance();
        let mut rev = t.clone();
        rev.stations.reverse();
        let p = VehicleParams::default();
        let a = monte_carlo_voi(&t, &p, 2000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = monte_carlo_voi(&rev, &p, 2000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = monte_carlo_voi(&t, &p, 2000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for ((_, _, x), (_, _, y)) in a.rows().iter().zip(b.rows().iter()) {
            assert!((x.mean - y.mean).abs() < 1e-9);
        }
        assert_eq!(a, c);
    }

    #[test]
    fn csv_round_trip_and_line_numbers() {
        let t = Topology::default_instance();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Topology::from_csv(10.0, buf.as_slice()).unwrap();
        assert_eq!(back, t);

        let bad = "x_km,y_km,price_mu_per_kwh\n1,2,0.15\n3,oops,0.2\n";
        match Topology::from_csv(10.0, bad.as_bytes()) {
            Err(VoiError::Parse { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("y_km"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let short = "x_km,y_km,price_mu_per_kwh\n1,2\n";
        assert!(matches!(
            Topology::from_csv(10.0, short.as_bytes()),
            Err(VoiError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn random_prices_come_from_levels() {
        let t = Topology::random(10.0, 20, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(t.stations.len(), 20);
        assert!(t.validate().is_ok());
        assert!(t.stations.iter().all(|s| PRICE_LEVELS.contains(&s.price)));
    }

    #[test]
    fn equal_prices_make_more_stations_never_worse() {
        // With one price level only travel distance differs, and nested layouts
        // can only shorten the trip to the nearest station.
        let mut t = Topology::random(10.0, 20, &mut ChaCha8Rng::seed_from_u64(3));
        t.stations.iter_mut().for_each(|s| s.price = 0.2);
        let p = VehicleParams::default();
        let tabs = station_count_study(&t, &[5, 10, 15, 20], &p, 5000, 8).unwrap();
        for w in tabs.windows(2) {
            assert!(w[1].charge_uninformed.mean <= w[0].charge_uninformed.mean);
            assert!(w[1].discharge_uninformed.mean >= w[0].discharge_uninformed.mean);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn informed_dominates(seed in any::<u64>(), n in 1usize..25, x in 0.0f64..10.0, y in 0.0f64..10.0) {
                let t = Topology::random(10.0, n, &mut ChaCha8Rng::seed_from_u64(seed));
                let p = VehicleParams::default();
                let ci = scenario_cost((x, y), &t, &p, Mode::Charge, true).unwrap();
                let cu = scenario_cost((x, y), &t, &p, Mode::Charge, false).unwrap();
                let di = scenario_cost((x, y), &t, &p, Mode::Discharge, true).unwrap();
                let du = scenario_cost((x, y), &t, &p, Mode::Discharge, false).unwrap();
                prop_assert!(ci <= cu);
                prop_assert!(di >= du);
                prop_assert!(ci > 0.0 && di > 0.0);
            }
        }
    }
}
