//! Node identifiers.
//!
//! Every level of the hierarchy has its own counter and a one-letter prefix
//! (`f3`, `r12`, `a4`, `o187`, `k40`), so ids are unique across the whole
//! graph and stay readable in dumps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed id {0:?}")]
pub struct ParseIdError(pub String);

macro_rules! node_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
        pub struct $name(pub u64);

        impl $name {
            pub const PREFIX: &'static str = $prefix;
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }

        impl FromStr for $name {
            type Err = ParseIdError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.strip_prefix($prefix)
                    .and_then(|n| n.parse::<u64>().ok())
                    .map($name)
                    .ok_or_else(|| ParseIdError(s.to_string()))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

node_id!(FloorId, "f");
node_id!(RoomId, "r");
node_id!(AreaId, "a");
node_id!(ObjectId, "o");
node_id!(KeyframeId, "k");

/// Sentinel text used on disk for objects that sit over no room mask.
pub const UNASSIGNED: &str = "unassigned";

/// serde adapter for `Option<RoomId>` that writes `"unassigned"` for `None`.
pub mod room_ref {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<RoomId>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(id) => s.collect_str(id),
            None => s.serialize_str(UNASSIGNED),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<RoomId>, D::Error> {
        let s = String::deserialize(d)?;
        if s == UNASSIGNED {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(serde::de::Error::custom)
        }
    }
}

/// Per-level monotone counters. Values only ever grow, which is what keeps
/// retired ids from being handed out again.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdCounters {
    pub floor: u64,
    pub room: u64,
    pub area: u64,
    pub object: u64,
}

impl Default for IdCounters {
    fn default() -> Self {
        IdCounters { floor: 1, room: 1, area: 1, object: 1 }
    }
}

impl IdCounters {
    pub fn next_floor(&mut self) -> FloorId {
        let id = FloorId(self.floor);
        self.floor += 1;
        id
    }

    pub fn next_room(&mut self) -> RoomId {
        let id = RoomId(self.room);
        self.room += 1;
        id
    }

    pub fn next_area(&mut self) -> AreaId {
        let id = AreaId(self.area);
        self.area += 1;
        id
    }

    pub fn next_object(&mut self) -> ObjectId {
        let id = ObjectId(self.object);
        self.object += 1;
        id
    }
}
