//! CVRP instance model, CVRPLIB I/O and an XML-style instance generator.
//!
//! Vertex 0 is always the depot; customers are `1..=n`. Distances are
//! precomputed into a dense matrix at construction time.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("parse error: missing {0}")]
    MissingSection(&'static str),
    #[error("parse error on line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("validation error: {0}")]
    Invalid(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How Euclidean distances are turned into arc costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Round to the nearest integer (CVRPLIB `nint`).
    #[default]
    Nearest,
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    name: String,
    coords: Vec<(f64, f64)>,
    demands: Vec<u64>,
    capacity: u64,
    rounding: Rounding,
    bks: Option<f64>,
    dist: Vec<f64>,
}

impl Instance {
    /// Builds and validates an instance. `coords[0]` and `demands[0]` belong to the depot.
    pub fn new(
        name: impl Into<String>,
        coords: Vec<(f64, f64)>,
        demands: Vec<u64>,
        capacity: u64,
        rounding: Rounding,
    ) -> Result<Self, InstanceError> {
        if coords.len() < 2 {
            return Err(InstanceError::Invalid("instance needs at least one customer".into()));
        }
        if coords.len() != demands.len() {
            return Err(InstanceError::Invalid(format!(
                "{} coordinates but {} demands",
                coords.len(),
                demands.len()
            )));
        }
        if capacity == 0 {
            return Err(InstanceError::Invalid("capacity must be positive".into()));
        }
        if demands[0] != 0 {
            return Err(InstanceError::Invalid(format!(
                "depot demand is {}, expected 0",
                demands[0]
            )));
        }
        for (i, &d) in demands.iter().enumerate().skip(1) {
            if d == 0 || d > capacity {
                return Err(InstanceError::Invalid(format!(
                    "customer {i} has demand {d}, must lie in [1, {capacity}]"
                )));
            }
        }
        if let Some(i) = coords.iter().position(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(InstanceError::Invalid(format!("vertex {i} has non-finite coordinates")));
        }
        let mut inst = Instance {
            name: name.into(),
            coords,
            demands,
            capacity,
            rounding,
            bks: None,
            dist: Vec::new(),
        };
        inst.fill_distances();
        Ok(inst)
    }

    fn fill_distances(&mut self) {
        let v = self.coords.len();
        self.dist = vec![0.0; v * v];
        for i in 0..v {
            for j in (i + 1)..v {
                let (xi, yi) = self.coords[i];
                let (xj, yj) = self.coords[j];
                let raw = (xi - xj).hypot(yi - yj);
                let d = match self.rounding {
                    Rounding::Nearest => raw.round(),
                    Rounding::Exact => raw,
                };
                self.dist[i * v + j] = d;
                self.dist[j * v + i] = d;
            }
        }
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        if rounding != self.rounding {
            self.rounding = rounding;
            self.fill_distances();
        }
        self
    }

    pub fn with_bks(mut self, bks: Option<f64>) -> Self {
        self.bks = bks;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of customers.
    pub fn n(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn demand(&self, i: usize) -> u64 {
        self.demands[i]
    }

    pub fn demands(&self) -> &[u64] {
        &self.demands
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn bks(&self) -> Option<f64> {
        self.bks
    }

    pub fn total_demand(&self) -> u64 {
        self.demands.iter().sum()
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.coords.len() + j]
    }

    /// Mean arc cost over all unordered vertex pairs, depot included.
    pub fn mean_edge_cost(&self) -> f64 {
        let v = self.coords.len();
        let mut sum = 0.0;
        for i in 0..v {
            for j in (i + 1)..v {
                sum += self.distance(i, j);
            }
        }
        sum / ((v * (v - 1)) / 2) as f64
    }

    pub fn mean_demand(&self) -> f64 {
        self.total_demand() as f64 / self.n() as f64
    }

    /// Customers sorted by increasing distance from `i` (ties by smaller index), `i` excluded.
    pub fn customers_by_distance(&self, i: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (1..=self.n()).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| self.distance(i, a).total_cmp(&self.distance(i, b)).then(a.cmp(&b)));
        order
    }

    /// Restriction of this instance to the depot plus `customers`, in the given order.
    /// Customer `customers[k]` becomes vertex `k + 1` of the returned instance.
    pub fn subinstance(&self, name: impl Into<String>, customers: &[usize]) -> Result<Instance, InstanceError> {
        let mut coords = vec![self.coords[0]];
        let mut demands = vec![0];
        for &c in customers {
            if c == 0 || c > self.n() {
                return Err(InstanceError::Invalid(format!("vertex {c} is not a customer")));
            }
            coords.push(self.coords[c]);
            demands.push(self.demands[c]);
        }
        Instance::new(name, coords, demands, self.capacity, self.rounding)
    }

    /// Structural attributes encoded in names produced by [`generate_instance`].
    pub fn attributes(&self) -> Option<InstanceAttributes> {
        InstanceAttributes::from_name(&self.name)
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> InstanceError {
    InstanceError::Syntax { line, msg: msg.into() }
}

#[derive(PartialEq)]
enum Section {
    Header,
    Coords,
    Demands,
    Depot,
    Skip,
}

/// Parses a CVRPLIB `.vrp` file (EUC_2D only). The depot is remapped to vertex 0;
/// the remaining vertices keep their file order.
pub fn parse_cvrplib(text: &str) -> Result<Instance, InstanceError> {
    let mut name = String::new();
    let mut dimension: Option<usize> = None;
    let mut capacity: Option<u64> = None;
    let mut weight_type: Option<String> = None;
    let mut coords: Vec<(usize, f64, f64)> = Vec::new();
    let mut demands: Vec<(usize, u64)> = Vec::new();
    let mut depots: Vec<usize> = Vec::new();
    let (mut saw_coords, mut saw_demands) = (false, false);
    let mut section = Section::Header;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        let upper = line.to_ascii_uppercase();
        if upper.ends_with("_SECTION") {
            section = match upper.as_str() {
                "NODE_COORD_SECTION" => {
                    saw_coords = true;
                    Section::Coords
                }
                "DEMAND_SECTION" => {
                    saw_demands = true;
                    Section::Demands
                }
                "DEPOT_SECTION" => Section::Depot,
                "EDGE_WEIGHT_SECTION" => {
                    return Err(InstanceError::Unsupported("explicit edge weights".into()));
                }
                _ => Section::Skip,
            };
            continue;
        }
        if let Some((key, value)) = line.split_once(':') {
            if !key
                .trim()
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_digit() || c == '-')
            {
                let value = value.trim().trim_matches('"');
                match key.trim().to_ascii_uppercase().as_str() {
                    "NAME" => name = value.to_string(),
                    "DIMENSION" => dimension = Some(value.parse().map_err(|_| syntax(lineno, "bad DIMENSION"))?),
                    "CAPACITY" => capacity = Some(value.parse().map_err(|_| syntax(lineno, "bad CAPACITY"))?),
                    "EDGE_WEIGHT_TYPE" => weight_type = Some(value.to_ascii_uppercase()),
                    "TYPE" if !value.eq_ignore_ascii_case("CVRP") => {
                        return Err(InstanceError::Unsupported(format!("problem type {value}")));
                    }
                    _ => {}
                }
                section = Section::Header;
                continue;
            }
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Coords => {
                if fields.len() != 3 {
                    return Err(syntax(lineno, "expected `<id> <x> <y>`"));
                }
                let id = fields[0].parse().map_err(|_| syntax(lineno, "bad node id"))?;
                let x = fields[1].parse().map_err(|_| syntax(lineno, "bad x coordinate"))?;
                let y = fields[2].parse().map_err(|_| syntax(lineno, "bad y coordinate"))?;
                coords.push((id, x, y));
            }
            Section::Demands => {
                if fields.len() != 2 {
                    return Err(syntax(lineno, "expected `<id> <demand>`"));
                }
                let id = fields[0].parse().map_err(|_| syntax(lineno, "bad node id"))?;
                let d = fields[1].parse().map_err(|_| syntax(lineno, "bad demand"))?;
                demands.push((id, d));
            }
            Section::Depot => {
                for f in fields {
                    let id: i64 = f.parse().map_err(|_| syntax(lineno, "bad depot id"))?;
                    if id >= 1 {
                        depots.push(id as usize);
                    }
                }
            }
            Section::Skip => {}
            Section::Header => return Err(syntax(lineno, format!("unexpected line `{line}`"))),
        }
    }

    let dimension = dimension.ok_or(InstanceError::MissingSection("DIMENSION"))?;
    let capacity = capacity.ok_or(InstanceError::MissingSection("CAPACITY"))?;
    match weight_type.as_deref() {
        None => return Err(InstanceError::MissingSection("EDGE_WEIGHT_TYPE")),
        Some("EUC_2D") => {}
        Some(other) => return Err(InstanceError::Unsupported(format!("EDGE_WEIGHT_TYPE {other}"))),
    }
    if !saw_coords {
        return Err(InstanceError::MissingSection("NODE_COORD_SECTION"));
    }
    if !saw_demands {
        return Err(InstanceError::MissingSection("DEMAND_SECTION"));
    }
    if dimension < 2 {
        return Err(InstanceError::Invalid(format!(
            "DIMENSION {dimension} leaves no customers"
        )));
    }
    if depots.len() > 1 {
        return Err(InstanceError::Unsupported("multiple depots".into()));
    }
    let depot = depots.first().copied().unwrap_or(1);

    let mut xy = vec![None; dimension + 1];
    for (id, x, y) in coords {
        if id == 0 || id > dimension {
            return Err(InstanceError::Invalid(format!("node id {id} outside 1..={dimension}")));
        }
        if xy[id].replace((x, y)).is_some() {
            return Err(InstanceError::Invalid(format!("duplicate coordinates for node {id}")));
        }
    }
    let mut dem = vec![None; dimension + 1];
    for (id, d) in demands {
        if id == 0 || id > dimension {
            return Err(InstanceError::Invalid(format!("node id {id} outside 1..={dimension}")));
        }
        if dem[id].replace(d).is_some() {
            return Err(InstanceError::Invalid(format!("duplicate demand for node {id}")));
        }
    }
    if depot > dimension {
        return Err(InstanceError::Invalid(format!("depot {depot} outside 1..={dimension}")));
    }

    let order = std::iter::once(depot).chain((1..=dimension).filter(|&v| v != depot));
    let mut out_coords = Vec::with_capacity(dimension);
    let mut out_demands = Vec::with_capacity(dimension);
    for v in order {
        out_coords.push(xy[v].ok_or_else(|| InstanceError::Invalid(format!("node {v} has no coordinates")))?);
        out_demands.push(dem[v].ok_or_else(|| InstanceError::Invalid(format!("node {v} has no demand")))?);
    }
    Instance::new(name, out_coords, out_demands, capacity, Rounding::Nearest)
}

/// Writes the instance in CVRPLIB format with the depot as node 1.
pub fn emit_cvrplib(inst: &Instance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME : {}", inst.name);
    let _ = writeln!(out, "TYPE : CVRP");
    let _ = writeln!(out, "DIMENSION : {}", inst.num_vertices());
    let _ = writeln!(out, "EDGE_WEIGHT_TYPE : EUC_2D");
    let _ = writeln!(out, "CAPACITY : {}", inst.capacity);
    out.push_str("NODE_COORD_SECTION\n");
    for (v, (x, y)) in inst.coords.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}", v + 1, x, y);
    }
    out.push_str("DEMAND_SECTION\n");
    for (v, d) in inst.demands.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}", v + 1, d);
    }
    out.push_str("DEPOT_SECTION\n\t1\n\t-1\nEOF\n");
    out
}

/// Reads a `.bks` sidecar: a single line holding the reference cost.
pub fn parse_bks(text: &str) -> Result<f64, InstanceError> {
    let value = text
        .split_whitespace()
        .next()
        .ok_or(InstanceError::MissingSection("reference cost"))?;
    let z: f64 = value
        .parse()
        .map_err(|_| syntax(1, format!("bad reference cost `{value}`")))?;
    if !(z.is_finite() && z > 0.0) {
        return Err(InstanceError::Invalid(format!("reference cost {z} must be positive")));
    }
    Ok(z)
}

/// Loads `path`, picking up a sibling `.bks` file when one exists.
pub fn load_instance(path: &Path) -> Result<Instance, InstanceError> {
    let text = std::fs::read_to_string(path)?;
    let mut inst = parse_cvrplib(&text)?;
    if inst.name.is_empty() {
        inst.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    let sidecar = path.with_extension("bks");
    if sidecar.is_file() {
        inst.bks = Some(parse_bks(&std::fs::read_to_string(sidecar)?)?);
    }
    Ok(inst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepotMode {
    Central,
    Eccentric,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CustomerMode {
    Random,
    Clustered,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandMode {
    /// Every demand is 1.
    Unitary,
    /// Uniform in [1, 10].
    SmallRange,
    /// Uniform in [5, 100].
    LargeRange,
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:ident => $kw:literal),* $(,)? }) => {
        impl $ty {
            pub fn keyword(self) -> &'static str {
                match self { $(Self::$variant => $kw),* }
            }
        }
        impl FromStr for $ty {
            type Err = InstanceError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($kw => Ok(Self::$variant),)*
                    _ => Err(InstanceError::InvalidSpec(format!("unknown mode `{s}`"))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.keyword())
            }
        }
    };
}

keyword_enum!(DepotMode { Central => "central", Eccentric => "eccentric", Random => "random" });
keyword_enum!(CustomerMode { Random => "random", Clustered => "clustered", Mixed => "mixed" });
keyword_enum!(DemandMode { Unitary => "unitary", SmallRange => "small", LargeRange => "large" });

/// Parameters of the XML-style generator. Outputs mimic the axes of the XML
/// benchmark family (depot, layout, demand, route size); they make no claim
/// of distributional equality with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GeneratorSpec {
    pub n: usize,
    pub depot: DepotMode,
    pub customers: CustomerMode,
    pub demand: DemandMode,
    /// Target average number of customers per route.
    pub route_size: f64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.n < 1 {
            return Err(InstanceError::InvalidSpec("n must be at least 1".into()));
        }
        if !(self.route_size >= 1.0 && self.route_size.is_finite()) {
            return Err(InstanceError::InvalidSpec("route size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Parses `n=100,depot=central,customers=clustered,demand=small,r=5`.
impl FromStr for GeneratorSpec {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut spec = GeneratorSpec {
            n: 100,
            depot: DepotMode::Random,
            customers: CustomerMode::Random,
            demand: DemandMode::Unitary,
            route_size: 10.0,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| InstanceError::InvalidSpec(format!("expected key=value, got `{part}`")))?;
            let bad = || InstanceError::InvalidSpec(format!("bad value for {k}: `{v}`"));
            match k.trim() {
                "n" => spec.n = v.parse().map_err(|_| bad())?,
                "depot" => spec.depot = v.parse()?,
                "customers" => spec.customers = v.parse()?,
                "demand" => spec.demand = v.parse()?,
                "r" | "route-size" => spec.route_size = v.parse().map_err(|_| bad())?,
                other => return Err(InstanceError::InvalidSpec(format!("unknown key `{other}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

const GRID: i64 = 1000;

/// Generates an XML-style instance on a 1000x1000 integer grid. Deterministic in `(spec, seed)`.
///
/// Capacity is `ceil(r * mean demand)` over the drawn demands; demands are then
/// clamped to `[1, Q]`, which only bites for large-range demand with tiny `r`.
pub fn generate_instance(spec: &GeneratorSpec, seed: u64) -> Result<Instance, InstanceError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depot = match spec.depot {
        DepotMode::Central => (GRID / 2, GRID / 2),
        DepotMode::Eccentric => (0, 0),
        DepotMode::Random => (rng.gen_range(0..=GRID), rng.gen_range(0..=GRID)),
    };

    let n = spec.n;
    let n_clustered = match spec.customers {
        CustomerMode::Random => 0,
        CustomerMode::Clustered => n,
        CustomerMode::Mixed => n / 2,
    };
    let seeds: Vec<(i64, i64)> = if n_clustered > 0 {
        let k = rng.gen_range(3..=8usize).min(n_clustered);
        (0..k)
            .map(|_| (rng.gen_range(0..=GRID), rng.gen_range(0..=GRID)))
            .collect()
    } else {
        Vec::new()
    };
    let mut points = Vec::with_capacity(n);
    for c in 0..n {
        if c < n_clustered {
            let (sx, sy) = seeds[rng.gen_range(0..seeds.len())];
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            // exponential radius with mean 40
            let radius = -40.0 * (1.0 - rng.gen::<f64>()).ln();
            let x = (sx as f64 + radius * angle.cos()).round() as i64;
            let y = (sy as f64 + radius * angle.sin()).round() as i64;
            points.push((x.clamp(0, GRID), y.clamp(0, GRID)));
        } else {
            points.push((rng.gen_range(0..=GRID), rng.gen_range(0..=GRID)));
        }
    }

    let mut demands: Vec<u64> = (0..n)
        .map(|_| match spec.demand {
            DemandMode::Unitary => 1,
            DemandMode::SmallRange => rng.gen_range(1..=10),
            DemandMode::LargeRange => rng.gen_range(5..=100),
        })
        .collect();
    let sum: u64 = demands.iter().sum();
    let capacity = capacity_for(spec.route_size, sum, n);
    for d in &mut demands {
        *d = (*d).clamp(1, capacity);
    }

    let coords = std::iter::once(depot)
        .chain(points)
        .map(|(x, y)| (x as f64, y as f64))
        .collect();
    let demands = std::iter::once(0).chain(demands).collect();
    let name = format!(
        "XMLS-n{}-{}-{}-{}-r{}-s{}",
        n, spec.depot, spec.customers, spec.demand, spec.route_size, seed
    );
    Instance::new(name, coords, demands, capacity, Rounding::Nearest)
}

/// `ceil(r * total / n)`, with a small guard against representation noise.
pub fn capacity_for(route_size: f64, total_demand: u64, n: usize) -> u64 {
    let raw = route_size * total_demand as f64 / n as f64;
    ((raw - 1e-9).ceil() as u64).max(1)
}

/// Grouping keys used by the grouped-gap report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAttributes {
    pub depot: DepotMode,
    pub customers: CustomerMode,
    pub demand: DemandMode,
    pub route_size: f64,
}

impl InstanceAttributes {
    pub fn from_name(name: &str) -> Option<Self> {
        let mut parts = name.split('-');
        if parts.next()? != "XMLS" {
            return None;
        }
        parts.next()?.strip_prefix('n')?;
        let depot = parts.next()?.parse().ok()?;
        let customers = parts.next()?.parse().ok()?;
        let demand = parts.next()?.parse().ok()?;
        let route_size = parts.next()?.strip_prefix('r')?.parse().ok()?;
        Some(InstanceAttributes {
            depot,
            customers,
            demand,
            route_size,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "NAME : tri\nTYPE : CVRP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 10\n\
        NODE_COORD_SECTION\n1 0 0\n2 3 4\n3 0 5\nDEMAND_SECTION\n1 0\n2 1\n3 1\nDEPOT_SECTION\n1\n-1\nEOF\n";

    #[test]
    fn parses_minimal_triangle() {
        let inst = parse_cvrplib(TRIANGLE).unwrap();
        assert_eq!(inst.n(), 2);
        assert_eq!(inst.capacity(), 10);
        assert_eq!(inst.distance(0, 1), 5.0);
        assert_eq!(inst.distance(1, 0), 5.0);
        assert_eq!(inst.distance(2, 2), 0.0);
        assert_eq!(inst.name(), "tri");
    }

    #[test]
    fn depot_is_remapped_to_zero() {
        let text = TRIANGLE
            .replace("1 0\n2 1\n3 1", "1 1\n2 0\n3 1")
            .replace("DEPOT_SECTION\n1\n", "DEPOT_SECTION\n2\n");
        let inst = parse_cvrplib(&text).unwrap();
        assert_eq!(inst.coords()[0], (3.0, 4.0));
        assert_eq!(inst.coords()[1], (0.0, 0.0));
        assert_eq!(inst.demands(), &[0, 1, 1]);
    }

    #[test]
    fn rejects_demand_above_capacity() {
        let text = TRIANGLE.replace("2 1\n", "2 11\n");
        assert!(matches!(parse_cvrplib(&text), Err(InstanceError::Invalid(_))));
    }

    #[test]
    fn missing_section_is_named() {
        let text = TRIANGLE.replace("DEMAND_SECTION\n1 0\n2 1\n3 1\n", "");
        match parse_cvrplib(&text) {
            Err(InstanceError::MissingSection(s)) => assert_eq!(s, "DEMAND_SECTION"),
            other => panic!("unexpected {other:?}"),
        }
        let text = TRIANGLE.replace("CAPACITY : 10\n", "");
        assert!(matches!(
            parse_cvrplib(&text),
            Err(InstanceError::MissingSection("CAPACITY"))
        ));
    }

    #[test]
    fn rejects_non_euclidean_weights() {
        let text = TRIANGLE.replace("EUC_2D", "GEO");
        assert!(matches!(parse_cvrplib(&text), Err(InstanceError::Unsupported(_))));
    }

    #[test]
    fn rounding_modes() {
        let inst = Instance::new("sq", vec![(0.0, 0.0), (1.0, 1.0)], vec![0, 1], 1, Rounding::Nearest).unwrap();
        assert_eq!(inst.distance(0, 1), 1.0);
        let exact = inst.with_rounding(Rounding::Exact);
        assert!((exact.distance(0, 1) - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn emit_then_parse_is_identity() {
        let inst = parse_cvrplib(TRIANGLE).unwrap();
        assert_eq!(parse_cvrplib(&emit_cvrplib(&inst)).unwrap(), inst);
    }

    #[test]
    fn bks_sidecar() {
        assert_eq!(parse_bks("27591\n").unwrap(), 27591.0);
        assert!(parse_bks("").is_err());
        assert!(parse_bks("-3").is_err());
    }

    #[test]
    fn unitary_generator_sets_capacity_to_route_size() {
        let spec: GeneratorSpec = "n=100,depot=random,customers=random,demand=unitary,r=10"
            .parse()
            .unwrap();
        let inst = generate_instance(&spec, 42).unwrap();
        assert_eq!(inst.n(), 100);
        assert_eq!(inst.capacity(), 10);
        assert!(inst.demands()[1..].iter().all(|&d| d == 1));
        assert_eq!(generate_instance(&spec, 42).unwrap(), inst);
        assert_eq!(
            emit_cvrplib(&generate_instance(&spec, 42).unwrap()),
            emit_cvrplib(&inst)
        );
    }

    #[test]
    fn small_range_capacity_matches_mean_demand() {
        let spec = GeneratorSpec {
            n: 100,
            depot: DepotMode::Central,
            customers: CustomerMode::Clustered,
            demand: DemandMode::SmallRange,
            route_size: 5.0,
        };
        let inst = generate_instance(&spec, 7).unwrap();
        assert_eq!(inst.coords()[0], (500.0, 500.0));
        let d = &inst.demands()[1..];
        assert!(d.iter().all(|&x| (1..=10).contains(&x)));
        // independent recomputation from the emitted vector
        let mean = d.iter().sum::<u64>() as f64 / d.len() as f64;
        assert_eq!(inst.capacity(), (5.0 * mean).ceil() as u64);
        for &(x, y) in inst.coords() {
            assert!((0.0..=1000.0).contains(&x) && (0.0..=1000.0).contains(&y));
            assert_eq!(x.fract(), 0.0);
        }
    }

    #[test]
    fn generator_rejects_bad_spec() {
        assert!("n=0".parse::<GeneratorSpec>().is_err());
        assert!("n=10,r=0.5".parse::<GeneratorSpec>().is_err());
    }

    #[test]
    fn generated_names_round_trip_attributes() {
        let spec: GeneratorSpec = "n=20,depot=eccentric,customers=mixed,demand=large,r=3.5"
            .parse()
            .unwrap();
        let inst = generate_instance(&spec, 3).unwrap();
        let attrs = inst.attributes().unwrap();
        assert_eq!(attrs.depot, DepotMode::Eccentric);
        assert_eq!(attrs.customers, CustomerMode::Mixed);
        assert_eq!(attrs.demand, DemandMode::LargeRange);
        assert_eq!(attrs.route_size, 3.5);
        assert!(inst.demands()[1..].iter().all(|&d| d <= inst.capacity()));
    }
}
