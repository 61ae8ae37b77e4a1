//! Readers for the case-study data files.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    derive_bale_parameters, BaleClass, BaleGeometry, BinStorage, ClassKey, EquipmentKind, EquipmentNode, FeedstockId,
    Moisture, NodeId, ProcessNetwork,
};
use crate::saa::EmpiricalDist;
use crate::sequencing::Inventory;

use super::RunConfig;

/// Per-moisture parameter rows keyed by a short identifier.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EquipmentTable {
    rows: BTreeMap<String, EquipmentRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquipmentRow {
    pub stage: String,
    pub parameter: String,
    pub unit: String,
    /// Indexed by `Moisture as usize` (low, medium, high).
    pub values: [f64; 3],
}

impl EquipmentTable {
    /// Parses `key | stage | parameter | unit | High | Medium | Low` lines.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cells: Vec<&str> = line.split('|').map(str::trim).collect();
            if cells.len() != 7 {
                return Err(Error::parse(source, i + 1, format!("expected 7 cells, found {}", cells.len())));
            }
            let mut values = [0.0; 3];
            for (col, (name, m)) in [("High", Moisture::High), ("Medium", Moisture::Medium), ("Low", Moisture::Low)]
                .into_iter()
                .enumerate()
            {
                let cell = cells[4 + col];
                values[m as usize] = cell
                    .parse()
                    .map_err(|_| Error::parse(source, i + 1, format!("column {name} of `{}`: `{cell}` is not a number", cells[0])))?;
            }
            let row = EquipmentRow {
                stage: cells[1].to_string(),
                parameter: cells[2].to_string(),
                unit: cells[3].to_string(),
                values,
            };
            if rows.insert(cells[0].to_string(), row).is_some() {
                return Err(Error::parse(source, i + 1, format!("duplicate key `{}`", cells[0])));
            }
        }
        Ok(EquipmentTable { rows })
    }

    pub fn row(&self, key: &str) -> Option<&EquipmentRow> {
        self.rows.get(key)
    }

    /// Value in model units: rates per period, fractions instead of
    /// percentages. `expr` may add several keys with `+`.
    pub fn value(&self, expr: &str, moisture: Moisture, period_minutes: f64) -> Result<f64> {
        let mut total = 0.0;
        for key in expr.split('+').map(str::trim) {
            let row = self
                .rows
                .get(key)
                .ok_or_else(|| Error::validation("equipment", format!("no row `{key}`")))?;
            let v = row.values[moisture as usize];
            total += match row.unit.as_str() {
                "Mg/h" => v * period_minutes / 60.0,
                "%" => v / 100.0,
                _ => v,
            };
        }
        Ok(total)
    }
}

/// Network rows as written in the file, before parameters are looked up.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub kind: EquipmentKind,
    pub predecessors: Vec<String>,
    pub feedstock: Option<FeedstockId>,
    pub bypass: bool,
    pub capacity: String,
    pub loss: String,
    pub split: String,
    pub mass_cap: String,
    pub volume_cap: String,
    pub density: String,
}

/// Parses the network file. Columns: name, kind, predecessors (separated by
/// `;`), feedstock, bypass flag, then equipment-table keys for capacity,
/// loss, bypass split, bin mass, bin volume and stored density.
pub fn parse_network(text: &str, source: &str) -> Result<Vec<NodeSpec>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(source, 1, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(source, 1, format!("missing column `{name}`")))
    };
    let cols = [
        "name",
        "kind",
        "predecessors",
        "feedstock",
        "bypass",
        "capacity",
        "loss",
        "split",
        "mass_cap",
        "volume_cap",
        "density",
    ]
    .map(col);
    let mut idx = [0usize; 11];
    for (slot, c) in idx.iter_mut().zip(cols) {
        *slot = c?;
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(source, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let get = |k: usize| rec.get(idx[k]).unwrap_or("").to_string();
        let kind_text = get(1);
        let kind = EquipmentKind::parse(&kind_text)
            .ok_or_else(|| Error::parse(source, line, format!("unknown equipment kind `{kind_text}`")))?;
        let feed = get(3);
        let bypass = match get(4).as_str() {
            "" | "no" | "false" => false,
            "yes" | "true" | "bypass" => true,
            other => return Err(Error::parse(source, line, format!("bypass flag `{other}`"))),
        };
        out.push(NodeSpec {
            name: get(0),
            kind,
            predecessors: get(2).split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
            feedstock: (!feed.is_empty()).then(|| FeedstockId::new(feed)),
            bypass,
            capacity: get(5),
            loss: get(6),
            split: get(7),
            mass_cap: get(8),
            volume_cap: get(9),
            density: get(10),
        });
    }
    Ok(out)
}

/// Parses `feedstock,name,low,medium,high,mean_carb` rows. Returns the
/// inventory, display names and mean carbohydrate fractions, in file order.
pub fn parse_inventory(text: &str, source: &str) -> Result<(Inventory, Vec<String>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut inv = Inventory::default();
    let mut names = Vec::new();
    let mut means = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(source, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 6 {
            return Err(Error::parse(source, line, format!("expected 6 columns, found {}", rec.len())));
        }
        let feed = FeedstockId::new(&rec[0]);
        if inv.feedstocks.contains(&feed) {
            return Err(Error::parse(source, line, format!("feedstock {feed} listed twice")));
        }
        inv.feedstocks.push(feed.clone());
        for (k, m) in Moisture::ALL.into_iter().enumerate() {
            let n: u32 = rec[2 + k]
                .parse()
                .map_err(|_| Error::parse(source, line, format!("column {} is not a count", ["low", "medium", "high"][k])))?;
            if n > 0 {
                inv.add(ClassKey { feedstock: feed.clone(), moisture: m }, n);
            }
        }
        let mean: f64 = rec[5]
            .parse()
            .map_err(|_| Error::parse(source, line, "column mean_carb is not a number"))?;
        if !(mean > 0.0 && mean < 1.0) {
            return Err(Error::parse(source, line, format!("mean carbohydrate {mean} outside (0,1)")));
        }
        names.push(rec[1].to_string());
        means.push(mean);
    }
    if inv.total() == 0 {
        return Err(Error::parse(source, 0, "inventory lists no bales"));
    }
    Ok((inv, names, means))
}

/// Parses `value,weight` lines into a distribution.
pub fn parse_distribution(text: &str, source: &str, feedstock: FeedstockId) -> Result<EmpiricalDist> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let (mut support, mut weights) = (Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(source, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.get(0) == Some("value") {
            continue;
        }
        let num = |k: usize, what: &str| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(source, line, format!("bad {what}")))
        };
        support.push(num(0, "value")?);
        weights.push(if rec.len() > 1 { num(1, "weight")? } else { 1.0 });
    }
    EmpiricalDist::new(feedstock, support, weights)
}

/// Everything needed to build models for one case.
#[derive(Debug, Clone)]
pub struct CaseData {
    pub network: ProcessNetwork,
    /// One entry per class of `network.classes`, parameters derived.
    pub classes: Vec<BaleClass>,
    pub geometry: BaleGeometry,
    pub inventory: Inventory,
    pub names: Vec<String>,
    /// Mean carbohydrate fraction per feedstock, aligned with
    /// `inventory.feedstocks`.
    pub means: Vec<f64>,
    /// Aligned with `inventory.feedstocks`.
    pub dists: Vec<EmpiricalDist>,
}

/// Assembles the network and bale classes from parsed files.
pub fn assemble_case(
    specs: &[NodeSpec],
    table: &EquipmentTable,
    inventory: Inventory,
    names: Vec<String>,
    means: Vec<f64>,
    dists: Vec<EmpiricalDist>,
    cfg: &RunConfig,
) -> Result<CaseData> {
    let geometry = BaleGeometry::new(cfg.bale_width, cfg.bale_height, cfg.bale_length, cfg.period_minutes)?;
    let dt = cfg.period_minutes;
    let keys: Vec<ClassKey> = inventory
        .feedstocks
        .iter()
        .flat_map(|f| {
            Moisture::ALL.into_iter().map(move |m| ClassKey {
                feedstock: f.clone(),
                moisture: m,
            })
        })
        .collect();
    let per_class = |expr: &str, what: &str, node: &str| -> Result<BTreeMap<ClassKey, f64>> {
        if expr.is_empty() {
            return Err(Error::validation(what, format!("node {node} needs a `{what}` entry")));
        }
        keys.iter()
            .map(|k| Ok((k.clone(), table.value(expr, k.moisture, dt)?)))
            .collect()
    };
    let single = |expr: &str, what: &str, node: &str| -> Result<f64> {
        if expr.is_empty() {
            return Err(Error::validation(what, format!("node {node} needs a `{what}` entry")));
        }
        table.value(expr, Moisture::Low, dt)
    };

    let mut nodes = Vec::with_capacity(specs.len());
    for s in specs {
        let mut n = EquipmentNode::new(&s.name, s.kind);
        n.feedstock = s.feedstock.clone();
        n.bypass = s.bypass;
        n.capacity = per_class(&s.capacity, "capacity", &s.name)?;
        match s.kind {
            EquipmentKind::Grinder => {
                n.dry_matter_loss = Some(single(&s.loss, "loss", &s.name)?);
            }
            EquipmentKind::Separator => {
                n.bypass_ratio = per_class(&s.split, "split", &s.name)?;
            }
            k if k.is_bin() => {
                n.storage = Some(BinStorage {
                    mass_cap: single(&s.mass_cap, "mass_cap", &s.name)?,
                    volume_cap: single(&s.volume_cap, "volume_cap", &s.name)?,
                    density: per_class(&s.density, "density", &s.name)?,
                });
            }
            _ => {}
        }
        nodes.push(n);
    }
    for (i, s) in specs.iter().enumerate() {
        for p in &s.predecessors {
            let j = specs
                .iter()
                .position(|o| o.name == *p)
                .ok_or_else(|| Error::validation("network", format!("node {} lists unknown predecessor {p}", s.name)))?;
            nodes[i].predecessors.push(NodeId(j));
        }
    }
    let roots: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].predecessors.is_empty()).collect();
    let [infeed] = roots[..] else {
        return Err(Error::validation("network", format!("expected one infeed node, found {}", roots.len())));
    };
    let reactor_feeders = (0..nodes.len())
        .filter(|&i| nodes[i].kind == EquipmentKind::ReactorFeeder)
        .map(NodeId)
        .collect();

    let density = table.value("bale_density", Moisture::Low, dt)?;
    let bale_mass = cfg.bale_width * cfg.bale_height * cfg.bale_length * density;
    let classes = keys
        .iter()
        .map(|k| {
            let d = table.value("bale_density", k.moisture, dt)?;
            let class = BaleClass::new(k.clone(), bale_mass * d / density, inventory.count(k), d)?;
            derive_bale_parameters(&geometry, &class, nodes[infeed].capacity[k])
        })
        .collect::<Result<Vec<_>>>()?;
    let network = ProcessNetwork {
        nodes,
        classes: keys,
        reactor_feeders,
        infeed: NodeId(infeed),
        horizon: cfg.horizon,
        big_m: ProcessNetwork::default_big_m(cfg.bale_length, cfg.horizon),
    };
    for (f, (d, m)) in inventory.feedstocks.iter().zip(dists.iter().zip(&means)) {
        if (d.mean() - m).abs() > 0.01 * m {
            log::warn!("distribution mean {:.4} of {f} is more than 1% from the listed mean {m}", d.mean());
        }
    }
    Ok(CaseData {
        network,
        classes,
        geometry,
        inventory,
        names,
        means,
        dists,
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads every case file named in `cfg`.
pub fn load_case(cfg: &RunConfig) -> Result<CaseData> {
    let specs = parse_network(&read(&cfg.network)?, &cfg.network.display().to_string())?;
    let table = EquipmentTable::parse(&read(&cfg.equipment)?, &cfg.equipment.display().to_string())?;
    let (inventory, names, means) = parse_inventory(&read(&cfg.inventory)?, &cfg.inventory.display().to_string())?;
    let dists = inventory
        .feedstocks
        .iter()
        .map(|f| {
            let path = cfg.distributions.join(format!("{f}.csv"));
            parse_distribution(&read(&path)?, &path.display().to_string(), f.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_case(&specs, &table, inventory, names, means, dists, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = "\
# key | stage | parameter | unit | High | Medium | Low
g1_infeed | First-stage grinder | Maximum in-feed rate | Mg/h | 2.20 | 4.53 | 5.23
g1_dml | First-stage grinder | Dry matter loss | % | 1.50 | 1.50 | 1.50
bale_density | Bale | Dry bulk density | Mg/m3 | 0.144 | 0.144 | 0.144
";

    #[test]
    fn table_values_convert_units() {
        let t = EquipmentTable::parse(TABLE, "t").unwrap();
        assert_eq!(t.row("g1_infeed").unwrap().values[Moisture::High as usize], 2.20);
        assert!((t.value("g1_infeed", Moisture::High, 60.0).unwrap() - 2.20).abs() < 1e-12);
        assert!((t.value("g1_infeed", Moisture::Low, 1.0).unwrap() - 5.23 / 60.0).abs() < 1e-12);
        assert!((t.value("g1_dml", Moisture::Medium, 1.0).unwrap() - 0.015).abs() < 1e-12);
        assert!((t.value("g1_dml+bale_density", Moisture::Low, 1.0).unwrap() - 0.159).abs() < 1e-12);
    }

    #[test]
    fn bad_cell_is_named() {
        let err = EquipmentTable::parse("k | s | p | u | 1 | x | 3\n", "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("column Medium") && msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn inventory_rows() {
        let (inv, names, means) = parse_inventory(
            "feedstock,name,low,medium,high,mean_carb\nM,Miscanthus,3,5,2,0.817\n",
            "inv",
        )
        .unwrap();
        assert_eq!(inv.total(), 10);
        assert_eq!(inv.by_moisture(Moisture::Medium), 5);
        assert_eq!(names, vec!["Miscanthus"]);
        assert_eq!(means, vec![0.817]);
    }

    #[test]
    fn distribution_rows() {
        let d = parse_distribution("value,weight\n0.5,1\n0.7,3\n", "d", FeedstockId::new("S")).unwrap();
        assert!((d.mean() - 0.65).abs() < 1e-12);
        assert!(parse_distribution("0.5,x\n", "d", FeedstockId::new("S")).is_err());
    }
}
