//! Storage layout: packing state variables into 32-byte slots, deriving the
//! slots of mapping values and array elements, and decoding slots back into
//! variable paths.
//!
//! Packing follows the Solidity rules: value types fill the current slot from
//! the low-order byte upward and spill to a fresh slot when they do not fit;
//! mappings and arrays always start a fresh slot, and so does whatever follows
//! them. A mapping value for key `k` under base slot `p` lives at
//! `keccak256(pad32(k) ‖ pad32(p))`; dynamic array data starts at
//! `keccak256(pad32(p))` with the length stored at `p` itself.
//!
//! Keccak is one-way, so every derived slot is journaled in an
//! [`AddressRegistry`] when it is resolved. Decoding a derived slot is a
//! registry lookup; static slots are decoded by scanning the layout.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::keccak::{keccak256, keccak_words};
use crate::minisol::{ContractDecl, ElemType, TypeExpr};
use crate::word::{from_be_slice, pad32, to_hex, U256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotAddress {
    pub slot: U256,
    /// Byte offset from the least significant end of the word.
    pub offset: u8,
    pub width: u8,
}

impl SlotAddress {
    pub fn full(slot: U256) -> Self {
        SlotAddress {
            slot,
            offset: 0,
            width: 32,
        }
    }

    pub fn covers(&self, offset: u8, width: u8) -> bool {
        self.offset <= offset
            && u16::from(offset) + u16::from(width)
                <= u16::from(self.offset) + u16::from(self.width)
    }

    pub fn overlaps(&self, offset: u8, width: u8) -> bool {
        let (a0, a1) = (
            u16::from(self.offset),
            u16::from(self.offset) + u16::from(self.width),
        );
        let (b0, b1) = (u16::from(offset), u16::from(offset) + u16::from(width));
        a0 < b1 && b0 < a1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarLayout {
    pub name: String,
    pub ty: TypeExpr,
    pub base: SlotAddress,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorageLayout {
    pub contract: String,
    pub vars: Vec<VarLayout>,
    /// First slot not occupied by any statically placed variable.
    pub next_free_slot: U256,
}

impl StorageLayout {
    pub fn var(&self, name: &str) -> Option<&VarLayout> {
        self.vars.iter().find(|v| v.name == name)
    }

    /// JSON export: `{"vars":[{"name","type","slot","offset","width"}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Row<'a> {
            name: &'a str,
            #[serde(rename = "type")]
            ty: &'a TypeExpr,
            slot: String,
            offset: u8,
            width: u8,
        }
        let vars: Vec<Row> = self
            .vars
            .iter()
            .map(|v| Row {
                name: &v.name,
                ty: &v.ty,
                slot: to_hex(v.base.slot),
                offset: v.base.offset,
                width: v.base.width,
            })
            .collect();
        serde_json::json!({ "vars": vars })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Accessor {
    Key(U256),
    Index(U256),
    /// The length word of a dynamic array.
    Length,
}

/// A named storage location: `contract.root[k1][k2]…`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariablePath {
    pub contract: String,
    pub root: String,
    pub accessors: Vec<Accessor>,
}

impl VariablePath {
    pub fn new(contract: impl Into<String>, root: impl Into<String>) -> Self {
        VariablePath {
            contract: contract.into(),
            root: root.into(),
            accessors: Vec::new(),
        }
    }

    pub fn key(mut self, k: U256) -> Self {
        self.accessors.push(Accessor::Key(k));
        self
    }

    pub fn index(mut self, i: U256) -> Self {
        self.accessors.push(Accessor::Index(i));
        self
    }

    pub fn length(mut self) -> Self {
        self.accessors.push(Accessor::Length);
        self
    }

    /// Canonical text without the contract prefix.
    pub fn root_text(&self) -> String {
        let mut s = self.root.clone();
        for a in &self.accessors {
            match a {
                Accessor::Key(k) => s.push_str(&format!("[{}]", to_hex(*k))),
                Accessor::Index(i) => s.push_str(&format!("[{i}]")),
                Accessor::Length => s.push_str(".length"),
            }
        }
        s
    }
}

impl fmt::Display for VariablePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.contract, self.root_text())
    }
}

impl Serialize for VariablePath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// What a fully resolved path points at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Leaf {
    Value(ElemType),
    Length,
}

impl Leaf {
    pub fn elem_type(self) -> ElemType {
        match self {
            Leaf::Value(e) => e,
            Leaf::Length => ElemType::Uint(256),
        }
    }

    pub fn width(self) -> u8 {
        self.elem_type().width()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Location {
    pub path: VariablePath,
    pub addr: SlotAddress,
    pub leaf: Leaf,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("unsupported type: {0}")]
    UnsupportedType(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("type mismatch in path {0}")]
    TypeMismatch(String),
    #[error("accessor depth does not match the type of {0}")]
    DepthMismatch(String),
    #[error("index {index} out of range for {path} (length {len})")]
    IndexOutOfRange {
        path: String,
        index: U256,
        len: U256,
    },
    #[error("no variable is known at slot {}", to_hex(*.0))]
    UnknownAddress(U256),
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct RegistryEntry {
    path: VariablePath,
    offset: u8,
    width: u8,
    leaf: Leaf,
}

/// Append-only journal of derived slots, keyed by (contract, slot).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AddressRegistry {
    entries: BTreeMap<(String, U256), Vec<RegistryEntry>>,
    len: usize,
}

impl AddressRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn journal(&mut self, loc: &Location) {
        let bucket = self
            .entries
            .entry((loc.path.contract.clone(), loc.addr.slot))
            .or_default();
        if !bucket.iter().any(|e| e.path == loc.path) {
            bucket.push(RegistryEntry {
                path: loc.path.clone(),
                offset: loc.addr.offset,
                width: loc.addr.width,
                leaf: loc.leaf,
            });
            self.len += 1;
        }
    }

    fn lookup(&self, contract: &str, slot: U256) -> impl Iterator<Item = Location> + '_ {
        self.entries
            .get(&(contract.to_string(), slot))
            .into_iter()
            .flatten()
            .map(move |e| Location {
                path: e.path.clone(),
                addr: SlotAddress {
                    slot,
                    offset: e.offset,
                    width: e.width,
                },
                leaf: e.leaf,
            })
    }

    /// All journaled slots for a contract.
    pub fn slots(&self, contract: &str) -> Vec<U256> {
        self.entries
            .keys()
            .filter(|(c, _)| c == contract)
            .map(|(_, s)| *s)
            .collect()
    }
}

/// Number of slots a variable of this type occupies in its static position.
pub fn slots_of(ty: &TypeExpr) -> Result<U256, LayoutError> {
    match ty {
        TypeExpr::Elementary(_) | TypeExpr::Mapping(..) | TypeExpr::DynArray(_) => Ok(U256::ONE),
        TypeExpr::FixedArray(elem, len) => match elem.as_value() {
            Some(e) => {
                let per_slot = U256::from(32 / e.width());
                let rem = if *len % per_slot == U256::ZERO {
                    U256::ZERO
                } else {
                    U256::ONE
                };
                Ok(*len / per_slot + rem)
            }
            None => slots_of(elem)?
                .checked_mul(*len)
                .ok_or_else(|| LayoutError::UnsupportedType(format!("{ty} exceeds storage"))),
        },
    }
}

fn per_slot(e: ElemType) -> U256 {
    U256::from(32 / e.width())
}

/// Assigns every state variable its base location.
pub fn compute_layout(contract: &ContractDecl) -> Result<StorageLayout, LayoutError> {
    let mut slot = U256::ZERO;
    let mut offset: u8 = 0;
    let mut vars = Vec::with_capacity(contract.state_vars.len());
    let overflow = |ty: &TypeExpr| LayoutError::UnsupportedType(format!("{ty} exceeds storage"));
    for v in &contract.state_vars {
        match v.ty.as_value() {
            Some(e) => {
                let w = e.width();
                if u16::from(offset) + u16::from(w) > 32 {
                    slot = slot.checked_add(U256::ONE).ok_or_else(|| overflow(&v.ty))?;
                    offset = 0;
                }
                vars.push(VarLayout {
                    name: v.name.clone(),
                    ty: v.ty.clone(),
                    base: SlotAddress {
                        slot,
                        offset,
                        width: w,
                    },
                });
                offset += w;
            }
            None => {
                if offset > 0 {
                    slot = slot.checked_add(U256::ONE).ok_or_else(|| overflow(&v.ty))?;
                    offset = 0;
                }
                vars.push(VarLayout {
                    name: v.name.clone(),
                    ty: v.ty.clone(),
                    base: SlotAddress::full(slot),
                });
                slot = slot
                    .checked_add(slots_of(&v.ty)?)
                    .ok_or_else(|| overflow(&v.ty))?;
            }
        }
    }
    let next_free_slot = if offset > 0 {
        slot.checked_add(U256::ONE)
            .ok_or_else(|| LayoutError::UnsupportedType("layout exceeds storage".into()))?
    } else {
        slot
    };
    Ok(StorageLayout {
        contract: contract.name.clone(),
        vars,
        next_free_slot,
    })
}

fn key_fits(key_ty: ElemType, key: U256) -> bool {
    match key_ty {
        ElemType::Int256 => true,
        other => key <= other.max_unsigned(),
    }
}

/// Resolves a path to its slot and byte range, journaling derived slots.
pub fn resolve_location(
    layout: &StorageLayout,
    path: &VariablePath,
    registry: &mut AddressRegistry,
) -> Result<Location, LayoutError> {
    let var = layout
        .var(&path.root)
        .ok_or_else(|| LayoutError::UnknownVariable(path.root.clone()))?;
    let mismatch = || LayoutError::TypeMismatch(path.to_string());
    let depth = || LayoutError::DepthMismatch(path.to_string());

    let mut ty = &var.ty;
    let mut addr = var.base;
    let mut derived = false;
    let mut leaf = None;
    for acc in &path.accessors {
        if leaf.is_some() {
            return Err(depth());
        }
        match (ty, acc) {
            (TypeExpr::Mapping(key_ty, value), Accessor::Key(k)) => {
                if !key_fits(*key_ty, *k) {
                    return Err(mismatch());
                }
                let slot = from_be_slice(&keccak_words(&pad32(*k), &pad32(addr.slot)));
                derived = true;
                ty = value;
                addr = element_addr(value, slot, U256::ZERO);
            }
            (TypeExpr::DynArray(elem), Accessor::Index(idx)) => {
                let data = from_be_slice(&keccak256(&pad32(addr.slot)));
                derived = true;
                addr = element_addr(elem, data, *idx);
                ty = elem;
            }
            (TypeExpr::DynArray(_), Accessor::Length) => {
                addr = SlotAddress::full(addr.slot);
                leaf = Some(Leaf::Length);
            }
            (TypeExpr::FixedArray(elem, len), Accessor::Index(idx)) => {
                if idx >= len {
                    return Err(LayoutError::IndexOutOfRange {
                        path: path.to_string(),
                        index: *idx,
                        len: *len,
                    });
                }
                addr = element_addr(elem, addr.slot, *idx);
                ty = elem;
            }
            (TypeExpr::Elementary(_), _) => return Err(depth()),
            // Length on a non-dynamic array, or a key/index kind mismatch.
            _ => return Err(mismatch()),
        }
    }
    let leaf = match leaf {
        Some(l) => l,
        None => Leaf::Value(ty.as_value().ok_or_else(depth)?),
    };
    let loc = Location {
        path: path.clone(),
        addr,
        leaf,
    };
    if derived {
        registry.journal(&loc);
    }
    Ok(loc)
}

// Location of element `idx` of an array region starting at `base`.
fn element_addr(elem: &TypeExpr, base: U256, idx: U256) -> SlotAddress {
    match elem.as_value() {
        Some(e) => {
            let n = per_slot(e);
            SlotAddress {
                slot: base.wrapping_add(idx / n),
                offset: ((idx % n).as_u8()) * e.width(),
                width: e.width(),
            }
        }
        None => {
            let span = slots_of(elem).unwrap_or(U256::ONE);
            SlotAddress::full(base.wrapping_add(idx.wrapping_mul(span)))
        }
    }
}

pub fn resolve_address(
    layout: &StorageLayout,
    path: &VariablePath,
    registry: &mut AddressRegistry,
) -> Result<SlotAddress, LayoutError> {
    resolve_location(layout, path, registry).map(|l| l.addr)
}

/// Every known leaf location in `slot`: static placements plus journaled ones.
pub fn locations_in_slot(
    layout: &StorageLayout,
    registry: &AddressRegistry,
    slot: U256,
) -> Vec<Location> {
    let mut out = Vec::new();
    if slot < layout.next_free_slot {
        for v in &layout.vars {
            let root = VariablePath::new(&layout.contract, &v.name);
            static_locations(&v.ty, v.base, root, slot, &mut out);
        }
    }
    out.extend(registry.lookup(&layout.contract, slot));
    out
}

fn static_locations(
    ty: &TypeExpr,
    base: SlotAddress,
    path: VariablePath,
    slot: U256,
    out: &mut Vec<Location>,
) {
    match ty {
        TypeExpr::Elementary(e) => {
            if base.slot == slot {
                out.push(Location {
                    path,
                    addr: base,
                    leaf: Leaf::Value(*e),
                });
            }
        }
        TypeExpr::DynArray(_) => {
            if base.slot == slot {
                out.push(Location {
                    path: path.length(),
                    addr: SlotAddress::full(slot),
                    leaf: Leaf::Length,
                });
            }
        }
        TypeExpr::Mapping(..) => {}
        TypeExpr::FixedArray(elem, len) => {
            let span = match slots_of(ty) {
                Ok(s) => s,
                Err(_) => return,
            };
            if slot < base.slot || slot - base.slot >= span {
                return;
            }
            let k = slot - base.slot;
            match elem.as_value() {
                Some(e) => {
                    let n = per_slot(e);
                    let first = k * n;
                    let last = (first + n).min(*len);
                    let mut i = first;
                    while i < last {
                        out.push(Location {
                            path: path.clone().index(i),
                            addr: element_addr(elem, base.slot, i),
                            leaf: Leaf::Value(e),
                        });
                        i += U256::ONE;
                    }
                }
                None => {
                    let elem_span = slots_of(elem).unwrap_or(U256::ONE);
                    let i = k / elem_span;
                    let inner = SlotAddress::full(base.slot + i * elem_span);
                    static_locations(elem, inner, path.index(i), slot, out);
                }
            }
        }
    }
}

/// Names the variable whose byte range covers `(offset, width)` in `slot`.
pub fn decode_address(
    layout: &StorageLayout,
    registry: &AddressRegistry,
    slot: U256,
    byte_range: (u8, u8),
) -> Result<VariablePath, LayoutError> {
    locations_in_slot(layout, registry, slot)
        .into_iter()
        .find(|l| l.addr.covers(byte_range.0, byte_range.1))
        .map(|l| l.path)
        .ok_or(LayoutError::UnknownAddress(slot))
}

/// Locations in `slot` whose byte ranges intersect `(offset, width)`.
pub fn overlapping_locations(
    layout: &StorageLayout,
    registry: &AddressRegistry,
    slot: U256,
    byte_range: (u8, u8),
) -> Vec<Location> {
    locations_in_slot(layout, registry, slot)
        .into_iter()
        .filter(|l| l.addr.overlaps(byte_range.0, byte_range.1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minisol::parse_source;

    fn layout(src: &str) -> StorageLayout {
        compute_layout(&parse_source(src).unwrap().contracts[0]).unwrap()
    }

    fn at(l: &StorageLayout, name: &str) -> (u64, u8, u8) {
        let b = l.var(name).unwrap().base;
        (b.slot.as_u64(), b.offset, b.width)
    }

    #[test]
    fn packs_two_halves_then_spills() {
        let l = layout("contract C { uint128 a; uint128 b; uint256 c; }");
        assert_eq!(at(&l, "a"), (0, 0, 16));
        assert_eq!(at(&l, "b"), (0, 16, 16));
        assert_eq!(at(&l, "c"), (1, 0, 32));
        assert_eq!(l.next_free_slot, U256::new(2));
    }

    #[test]
    fn single_full_width() {
        let l = layout("contract C { uint256 x; }");
        assert_eq!(at(&l, "x"), (0, 0, 32));
    }

    #[test]
    fn mapping_forces_fresh_slots() {
        let l = layout("contract C { bool f; mapping(address => uint256) m; uint8 g; }");
        assert_eq!(at(&l, "f"), (0, 0, 1));
        assert_eq!(at(&l, "m"), (1, 0, 32));
        assert_eq!(at(&l, "g"), (2, 0, 1));
    }

    #[test]
    fn fixed_array_spans() {
        let l = layout("contract C { uint8 a; uint64[5] b; uint8 c; uint256[2][3] d; }");
        assert_eq!(at(&l, "b"), (1, 0, 32));
        // 5 elements, 4 per slot
        assert_eq!(at(&l, "c"), (3, 0, 1));
        assert_eq!(at(&l, "d"), (4, 0, 32));
        assert_eq!(l.next_free_slot, U256::new(10));
    }

    #[test]
    fn plain_path_needs_no_keccak() {
        let l = layout("contract C { uint256 a; uint256 c; }");
        let mut r = AddressRegistry::new();
        let a = resolve_address(&l, &VariablePath::new("C", "c"), &mut r).unwrap();
        assert_eq!(a, SlotAddress::full(U256::ONE));
        assert!(r.is_empty());
    }

    #[test]
    fn fixed_array_element_offsets() {
        let l = layout("contract C { uint64[5] b; }");
        let mut r = AddressRegistry::new();
        let p = VariablePath::new("C", "b").index(U256::new(4));
        let a = resolve_address(&l, &p, &mut r).unwrap();
        assert_eq!((a.slot.as_u64(), a.offset, a.width), (1, 0, 8));
        let p = VariablePath::new("C", "b").index(U256::new(3));
        let a = resolve_address(&l, &p, &mut r).unwrap();
        assert_eq!((a.slot.as_u64(), a.offset, a.width), (0, 24, 8));
        assert_eq!(decode_address(&l, &r, U256::ZERO, (24, 8)).unwrap(), p);
        let err = resolve_address(&l, &VariablePath::new("C", "b").index(U256::new(5)), &mut r);
        assert!(matches!(err, Err(LayoutError::IndexOutOfRange { .. })));
    }

    #[test]
    fn depth_and_kind_errors() {
        let l = layout("contract C { uint256 x; mapping(address => uint8[]) m; }");
        let mut r = AddressRegistry::new();
        let e = resolve_address(&l, &VariablePath::new("C", "x").key(U256::ONE), &mut r);
        assert!(matches!(e, Err(LayoutError::DepthMismatch(_))));
        let e = resolve_address(&l, &VariablePath::new("C", "m"), &mut r);
        assert!(matches!(e, Err(LayoutError::DepthMismatch(_))));
        let e = resolve_address(&l, &VariablePath::new("C", "m").index(U256::ONE), &mut r);
        assert!(matches!(e, Err(LayoutError::TypeMismatch(_))));
        let e = resolve_address(&l, &VariablePath::new("C", "m").key(U256::MAX), &mut r);
        assert!(matches!(e, Err(LayoutError::TypeMismatch(_))));
        let ok = resolve_location(
            &l,
            &VariablePath::new("C", "m").key(U256::ONE).length(),
            &mut r,
        )
        .unwrap();
        assert_eq!(ok.leaf, Leaf::Length);
    }

    #[test]
    fn decode_packed_half() {
        let l = layout("contract C { uint128 a; uint128 b; }");
        let r = AddressRegistry::new();
        assert_eq!(
            decode_address(&l, &r, U256::ZERO, (16, 16)).unwrap(),
            VariablePath::new("C", "b")
        );
        assert_eq!(
            decode_address(&l, &r, U256::ZERO, (0, 16)).unwrap(),
            VariablePath::new("C", "a")
        );
        assert_eq!(overlapping_locations(&l, &r, U256::ZERO, (0, 32)).len(), 2);
    }

    #[test]
    fn unknown_slot() {
        let l = layout("contract C { uint256 x; }");
        let r = AddressRegistry::new();
        let slot = U256::from_words(0x1234_5678, 0x9abc_def0);
        assert_eq!(
            decode_address(&l, &r, slot, (0, 32)),
            Err(LayoutError::UnknownAddress(slot))
        );
    }

    #[test]
    fn derived_slots_are_journaled() {
        let l = layout("contract C { mapping(address => uint256) m; uint256[] arr; }");
        let mut r = AddressRegistry::new();
        let p = VariablePath::new("C", "m").key(U256::ONE);
        let a = resolve_address(&l, &p, &mut r).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(decode_address(&l, &r, a.slot, (0, 32)).unwrap(), p);
        // resolving again does not grow the journal
        resolve_address(&l, &p, &mut r).unwrap();
        assert_eq!(r.len(), 1);
        let len_path = VariablePath::new("C", "arr").length();
        assert_eq!(
            decode_address(&l, &r, U256::ONE, (0, 32)).unwrap(),
            len_path
        );
    }

    #[test]
    fn layout_json_shape() {
        let l = layout("contract C { uint128 a; uint128 b; }");
        assert_eq!(
            l.to_json().to_string(),
            r#"{"vars":[{"name":"a","offset":0,"slot":"0x0","type":"uint128","width":16},{"name":"b","offset":16,"slot":"0x0","type":"uint128","width":16}]}"#
        );
    }

    #[test]
    fn path_text() {
        let p = VariablePath::new("C", "m")
            .key(U256::new(255))
            .index(U256::new(3))
            .length();
        assert_eq!(p.to_string(), "C.m[0xff][3].length");
    }
}
