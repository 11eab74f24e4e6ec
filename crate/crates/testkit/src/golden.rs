//! Checks computed layouts against compiler output and independently hashed slots.

use kaya_core::layout::{
    compute_layout, resolve_location, Accessor, AddressRegistry, VariablePath,
};
use kaya_core::minisol::{parse_source, ContractDecl, TypeExpr};
use kaya_core::word::{parse_hex, U256};
use serde::Deserialize;

use crate::{fixture, fixtures_dir};

/// MiniSol fixture files paired with their golden layout names.
pub const LAYOUT_FIXTURES: [(&str, &str); 5] = [
    ("layout/packing.msol", "packing"),
    ("layout/mappings.msol", "mappings"),
    ("layout/arrays.msol", "arrays"),
    ("layout/mixed.msol", "mixed"),
    ("snailthrone.msol", "snailthrone"),
];

#[derive(Debug, Deserialize)]
pub struct GoldenLayout {
    pub contract: String,
    pub compiler: String,
    pub storage: Vec<GoldenVar>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GoldenVar {
    pub label: String,
    pub slot: String,
    pub offset: u8,
    #[serde(rename = "type")]
    pub ty: String,
    pub number_of_bytes: String,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldenAccessor {
    Key(String),
    Index(String),
    #[serde(untagged)]
    Length(String),
}

#[derive(Debug, Deserialize)]
pub struct GoldenLocation {
    pub contract: String,
    pub root: String,
    pub accessors: Vec<GoldenAccessor>,
    pub slot: String,
    pub offset: u8,
    pub width: u8,
}

#[derive(Debug, Deserialize)]
struct DerivedDoc {
    locations: Vec<GoldenLocation>,
}

fn read_json<T: for<'de> Deserialize<'de>>(name: &str) -> T {
    let path = fixtures_dir().join("golden").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn golden_layout(name: &str) -> GoldenLayout {
    read_json(&format!("{name}.layout.json"))
}

pub fn derived_locations() -> Vec<GoldenLocation> {
    read_json::<DerivedDoc>("derived_slots.json").locations
}

pub fn fixture_contract(file: &str) -> ContractDecl {
    parse_source(&fixture(file)).unwrap().contracts.remove(0)
}

/// Compares every variable's slot, offset and width with the compiler's layout.
pub fn check_layout(file: &str, golden: &str) -> Result<usize, String> {
    let decl = fixture_contract(file);
    let layout = compute_layout(&decl).map_err(|e| e.to_string())?;
    let gold = golden_layout(golden);
    if gold.contract != decl.name {
        return Err(format!("{file}: golden is for {}", gold.contract));
    }
    if gold.storage.len() != layout.vars.len() {
        return Err(format!(
            "{file}: {} vars, golden has {}",
            layout.vars.len(),
            gold.storage.len()
        ));
    }
    for (v, g) in layout.vars.iter().zip(&gold.storage) {
        let slot: U256 = g
            .slot
            .parse::<u128>()
            .map(U256::from)
            .map_err(|e| e.to_string())?;
        let bytes: u64 = g
            .number_of_bytes
            .parse()
            .map_err(|e: std::num::ParseIntError| e.to_string())?;
        let width_ok = match &v.ty {
            TypeExpr::Elementary(e) => u64::from(e.width()) == bytes,
            _ => true,
        };
        if v.name != g.label
            || v.base.slot != slot
            || v.base.offset != g.offset
            || !width_ok
            || v.ty.to_string() != g.ty
        {
            return Err(format!(
                "{file}: {} {} at ({}, {}, {}) but solc says {} {} at ({}, {}, {} bytes)",
                v.ty,
                v.name,
                v.base.slot,
                v.base.offset,
                v.base.width,
                g.ty,
                g.label,
                g.slot,
                g.offset,
                g.number_of_bytes
            ));
        }
    }
    Ok(layout.vars.len())
}

pub fn golden_path(g: &GoldenLocation) -> VariablePath {
    let mut p = VariablePath::new(&g.contract, &g.root);
    for a in &g.accessors {
        p.accessors.push(match a {
            GoldenAccessor::Key(k) => Accessor::Key(parse_hex(k).expect("hex key")),
            GoldenAccessor::Index(i) => {
                Accessor::Index(i.parse::<u128>().map(U256::from).expect("index"))
            }
            GoldenAccessor::Length(_) => Accessor::Length,
        });
    }
    p
}

/// Resolves every hashed golden path and compares slot and byte range.
pub fn check_derived() -> Result<usize, String> {
    let golden = derived_locations();
    for g in &golden {
        let file = LAYOUT_FIXTURES
            .iter()
            .find(|(f, _)| fixture_contract(f).name == g.contract)
            .map(|(f, _)| *f)
            .ok_or_else(|| format!("no fixture for {}", g.contract))?;
        let layout = compute_layout(&fixture_contract(file)).map_err(|e| e.to_string())?;
        let path = golden_path(g);
        let mut reg = AddressRegistry::new();
        let loc = resolve_location(&layout, &path, &mut reg).map_err(|e| e.to_string())?;
        let want = parse_hex(&g.slot).ok_or("bad golden slot")?;
        if loc.addr.slot != want || loc.addr.offset != g.offset || loc.addr.width != g.width {
            return Err(format!(
                "{path}: computed ({:#x}, {}, {}), golden ({}, {}, {})",
                loc.addr.slot, loc.addr.offset, loc.addr.width, g.slot, g.offset, g.width
            ));
        }
    }
    Ok(golden.len())
}
