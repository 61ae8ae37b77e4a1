use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{MilpInstance, RowTag, VarKind};

pub fn tag_counts(instance: &MilpInstance) -> BTreeMap<RowTag, usize> {
    let mut counts = BTreeMap::new();
    for row in &instance.constraints {
        *counts.entry(row.tag).or_insert(0) += 1;
    }
    counts
}

/// Row counts per family and variable counts as `key,count` lines.
pub fn write_stats(instance: &MilpInstance) -> String {
    let mut out = String::from("item,count\n");
    let binaries = instance.variables.iter().filter(|v| v.kind == VarKind::Binary).count();
    let _ = writeln!(out, "variables,{}", instance.variables.len());
    let _ = writeln!(out, "binaries,{binaries}");
    let _ = writeln!(out, "rows,{}", instance.constraints.len());
    for (tag, n) in tag_counts(instance) {
        let _ = writeln!(out, "{tag},{n}");
    }
    out
}
