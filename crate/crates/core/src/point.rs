//! Point types, the semantic class taxonomy and the raw SemanticKITTI label remapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 19 SemanticKITTI evaluation classes plus `Unlabeled`.
///
/// Discriminants are the class codes stored in descriptors and label exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticClass {
    Unlabeled = 0,
    Car = 1,
    Bicycle = 2,
    Motorcycle = 3,
    Truck = 4,
    OtherVehicle = 5,
    Person = 6,
    Bicyclist = 7,
    Motorcyclist = 8,
    Road = 9,
    Parking = 10,
    Sidewalk = 11,
    OtherGround = 12,
    Building = 13,
    Fence = 14,
    Vegetation = 15,
    Trunk = 16,
    Terrain = 17,
    Pole = 18,
    TrafficSign = 19,
}

pub const NUM_CLASSES: usize = 20;

impl SemanticClass {
    pub const ALL: [SemanticClass; NUM_CLASSES] = [
        SemanticClass::Unlabeled,
        SemanticClass::Car,
        SemanticClass::Bicycle,
        SemanticClass::Motorcycle,
        SemanticClass::Truck,
        SemanticClass::OtherVehicle,
        SemanticClass::Person,
        SemanticClass::Bicyclist,
        SemanticClass::Motorcyclist,
        SemanticClass::Road,
        SemanticClass::Parking,
        SemanticClass::Sidewalk,
        SemanticClass::OtherGround,
        SemanticClass::Building,
        SemanticClass::Fence,
        SemanticClass::Vegetation,
        SemanticClass::Trunk,
        SemanticClass::Terrain,
        SemanticClass::Pole,
        SemanticClass::TrafficSign,
    ];

    #[inline]
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticClass::Unlabeled => "unlabeled",
            SemanticClass::Car => "car",
            SemanticClass::Bicycle => "bicycle",
            SemanticClass::Motorcycle => "motorcycle",
            SemanticClass::Truck => "truck",
            SemanticClass::OtherVehicle => "other-vehicle",
            SemanticClass::Person => "person",
            SemanticClass::Bicyclist => "bicyclist",
            SemanticClass::Motorcyclist => "motorcyclist",
            SemanticClass::Road => "road",
            SemanticClass::Parking => "parking",
            SemanticClass::Sidewalk => "sidewalk",
            SemanticClass::OtherGround => "other-ground",
            SemanticClass::Building => "building",
            SemanticClass::Fence => "fence",
            SemanticClass::Vegetation => "vegetation",
            SemanticClass::Trunk => "trunk",
            SemanticClass::Terrain => "terrain",
            SemanticClass::Pole => "pole",
            SemanticClass::TrafficSign => "traffic-sign",
        }
    }

    /// Canonical raw SemanticKITTI id of the static class, i.e. the id written
    /// into `.label` files for this class.
    pub fn raw_id(self) -> u32 {
        match self {
            SemanticClass::Unlabeled => 0,
            SemanticClass::Car => 10,
            SemanticClass::Bicycle => 11,
            SemanticClass::Motorcycle => 15,
            SemanticClass::Truck => 18,
            SemanticClass::OtherVehicle => 20,
            SemanticClass::Person => 30,
            SemanticClass::Bicyclist => 31,
            SemanticClass::Motorcyclist => 32,
            SemanticClass::Road => 40,
            SemanticClass::Parking => 44,
            SemanticClass::Sidewalk => 48,
            SemanticClass::OtherGround => 49,
            SemanticClass::Building => 50,
            SemanticClass::Fence => 51,
            SemanticClass::Vegetation => 70,
            SemanticClass::Trunk => 71,
            SemanticClass::Terrain => 72,
            SemanticClass::Pole => 80,
            SemanticClass::TrafficSign => 81,
        }
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SemanticClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown class name `{s}`")))
    }
}

/// Maps a raw SemanticKITTI label to its evaluation class.
///
/// The upper 16 bits (instance id) are dropped; the lower 16 bits go through the
/// SemanticKITTI learning map with moving classes folded onto their static
/// counterparts. Unknown ids map to `Unlabeled`.
pub fn remap_label(raw: u32) -> SemanticClass {
    use SemanticClass::*;
    match raw & 0xFFFF {
        10 | 252 => Car,
        11 => Bicycle,
        15 => Motorcycle,
        18 | 258 => Truck,
        13 | 16 | 20 | 256 | 257 | 259 => OtherVehicle,
        30 | 254 => Person,
        31 | 253 => Bicyclist,
        32 | 255 => Motorcyclist,
        40 | 60 => Road,
        44 => Parking,
        48 => Sidewalk,
        49 => OtherGround,
        50 => Building,
        51 => Fence,
        70 => Vegetation,
        71 => Trunk,
        72 => Terrain,
        80 => Pole,
        81 => TrafficSign,
        // 0 unlabeled, 1 outlier, 52 other-structure, 99 other-object, anything else
        _ => Unlabeled,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub label: SemanticClass,
}

impl SemanticPoint {
    pub fn new(x: f64, y: f64, z: f64, label: SemanticClass) -> Self {
        Self { x, y, z, label }
    }
}

/// One scan: points in sensor scan order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCloud {
    pub points: Vec<SemanticPoint>,
    pub frame_id: u32,
}

impl LabeledCloud {
    pub fn new(points: Vec<SemanticPoint>, frame_id: u32) -> Self {
        Self { points, frame_id }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SemanticPoint> {
        self.points.iter()
    }
}

/// Total order over classes used by the descriptor's argmax encoding.
///
/// Higher rank means more representative. Ranks form a permutation of
/// `0..NUM_CLASSES` with `Unlabeled` at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityTable {
    rank: [u8; NUM_CLASSES],
}

/// Rarity order, most representative first.
const DEFAULT_ORDER: [SemanticClass; NUM_CLASSES] = [
    SemanticClass::TrafficSign,
    SemanticClass::Pole,
    SemanticClass::Trunk,
    SemanticClass::Person,
    SemanticClass::Bicyclist,
    SemanticClass::Motorcyclist,
    SemanticClass::Bicycle,
    SemanticClass::Motorcycle,
    SemanticClass::Truck,
    SemanticClass::OtherVehicle,
    SemanticClass::Car,
    SemanticClass::Fence,
    SemanticClass::Building,
    SemanticClass::OtherGround,
    SemanticClass::Parking,
    SemanticClass::Sidewalk,
    SemanticClass::Terrain,
    SemanticClass::Vegetation,
    SemanticClass::Road,
    SemanticClass::Unlabeled,
];

impl Default for PriorityTable {
    fn default() -> Self {
        default_priority()
    }
}

pub fn default_priority() -> PriorityTable {
    let mut rank = [0u8; NUM_CLASSES];
    for (pos, class) in DEFAULT_ORDER.iter().enumerate() {
        rank[class.code() as usize] = (NUM_CLASSES - 1 - pos) as u8;
    }
    PriorityTable { rank }
}

impl PriorityTable {
    /// Builds a table from per-class ranks indexed by class code.
    pub fn from_ranks(rank: [u8; NUM_CLASSES]) -> Result<Self> {
        let mut seen = [false; NUM_CLASSES];
        for &r in &rank {
            let slot = seen
                .get_mut(r as usize)
                .ok_or_else(|| Error::Config(format!("rank {r} out of range 0..{NUM_CLASSES}")))?;
            if *slot {
                return Err(Error::Config(format!("rank {r} assigned twice")));
            }
            *slot = true;
        }
        if rank[SemanticClass::Unlabeled.code() as usize] != 0 {
            return Err(Error::Config("unlabeled must have rank 0".into()));
        }
        Ok(Self { rank })
    }

    #[inline]
    pub fn rank(&self, class: SemanticClass) -> u8 {
        self.rank[class.code() as usize]
    }

    /// Classes sorted by descending rank.
    pub fn ordered(&self) -> Vec<SemanticClass> {
        let mut classes = SemanticClass::ALL.to_vec();
        classes.sort_by_key(|c| std::cmp::Reverse(self.rank(*c)));
        classes
    }

    /// Parses the `class-name rank` per-line config format. Blank lines and
    /// lines starting with `#` are ignored. Every class must appear once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rank = [u8::MAX; NUM_CLASSES];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Config(format!(
                    "line {}: expected `class-name rank`",
                    lineno + 1
                )));
            };
            let class: SemanticClass = name.parse()?;
            let value: u8 = value
                .parse()
                .map_err(|_| Error::Config(format!("line {}: bad rank `{value}`", lineno + 1)))?;
            if rank[class.code() as usize] != u8::MAX {
                return Err(Error::Config(format!("line {}: `{name}` listed twice", lineno + 1)));
            }
            rank[class.code() as usize] = value;
        }
        if let Some(missing) = SemanticClass::ALL.iter().find(|c| rank[c.code() as usize] == u8::MAX) {
            return Err(Error::Config(format!("class `{missing}` has no rank")));
        }
        Self::from_ranks(rank)
    }

    /// Renders the config format, highest rank first.
    pub fn to_config_string(&self) -> String {
        self.ordered()
            .into_iter()
            .map(|c| format!("{} {}\n", c.name(), self.rank(c)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remap_known_ids() {
        assert_eq!(remap_label(0), SemanticClass::Unlabeled);
        assert_eq!(remap_label(252), SemanticClass::Car);
        assert_eq!(remap_label(81), SemanticClass::TrafficSign);
        assert_eq!(remap_label(1), SemanticClass::Unlabeled);
        assert_eq!(remap_label(52), SemanticClass::Unlabeled);
        assert_eq!(remap_label(60), SemanticClass::Road);
        assert_eq!(remap_label(259), SemanticClass::OtherVehicle);
    }

    #[test]
    fn remap_drops_instance_bits() {
        assert_eq!(remap_label((7 << 16) | 50), SemanticClass::Building);
        assert_eq!(remap_label(0xFFFF_0000), SemanticClass::Unlabeled);
        assert_eq!(remap_label(u32::MAX), SemanticClass::Unlabeled);
    }

    #[test]
    fn canonical_raw_ids_round_trip() {
        for c in SemanticClass::ALL {
            assert_eq!(remap_label(c.raw_id()), c);
            assert_eq!(SemanticClass::from_code(c.code()), Some(c));
            assert_eq!(c.name().parse::<SemanticClass>().unwrap(), c);
        }
        assert_eq!(SemanticClass::from_code(20), None);
    }

    #[test]
    fn default_priority_ordering() {
        let p = default_priority();
        assert!(p.rank(SemanticClass::TrafficSign) > p.rank(SemanticClass::Road));
        assert_eq!(p.rank(SemanticClass::Unlabeled), 0);
        let mut ranks: Vec<u8> = SemanticClass::ALL.iter().map(|c| p.rank(*c)).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, (0..NUM_CLASSES as u8).collect::<Vec<_>>());
        assert_eq!(p.ordered()[0], SemanticClass::TrafficSign);
    }

    #[test]
    fn priority_config_round_trip() {
        let p = default_priority();
        let text = p.to_config_string();
        assert!(text.starts_with("traffic-sign 19\n"));
        assert_eq!(PriorityTable::parse(&text).unwrap(), p);
    }

    #[test]
    fn priority_config_rejects_bad_tables() {
        let p = default_priority();
        let text = p.to_config_string();
        // drop a line
        let short: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert!(PriorityTable::parse(&short).is_err());
        // duplicate rank
        let dup = text.replace("pole 18", "pole 19");
        assert!(PriorityTable::parse(&dup).is_err());
        // unlabeled not minimal
        let swapped = text.replace("unlabeled 0", "unlabeled 1").replace("road 1", "road 0");
        assert!(PriorityTable::parse(&swapped).is_err());
        assert!(PriorityTable::parse("car x\n").is_err());
        assert!(PriorityTable::parse("boat 3\n").is_err());
    }

    #[test]
    fn priority_config_accepts_override() {
        let text = default_priority()
            .to_config_string()
            .replace("traffic-sign 19", "traffic-sign 18")
            .replace("pole 18", "pole 19");
        let p = PriorityTable::parse(&format!("# custom\n\n{text}")).unwrap();
        assert!(p.rank(SemanticClass::Pole) > p.rank(SemanticClass::TrafficSign));
    }
}
