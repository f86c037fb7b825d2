//! Built-in systems and their liftings, shipped as JSON data files.

use crate::error::{Error, Result};
use crate::group::CarnotGroup;
use crate::systems::{parse_system, HomogeneousSystem};

pub const SYSTEM_NAMES: [&str; 3] = ["euclid2", "grushin", "grushin3"];

pub fn system_json(name: &str) -> Option<&'static str> {
    match name {
        "euclid2" => Some(include_str!("../data/euclid2.json")),
        "grushin" => Some(include_str!("../data/grushin.json")),
        "grushin3" => Some(include_str!("../data/grushin3.json")),
        _ => None,
    }
}

pub fn group_json(name: &str) -> Option<&'static str> {
    match name {
        "euclid2" => Some(include_str!("../data/euclid2.group.json")),
        "grushin" => Some(include_str!("../data/grushin.group.json")),
        "grushin3" => Some(include_str!("../data/grushin3.group.json")),
        _ => None,
    }
}

pub fn system(name: &str) -> Result<HomogeneousSystem> {
    let doc = system_json(name).ok_or_else(|| Error::Config(format!("unknown catalog system `{name}`")))?;
    parse_system(doc)
}

/// The catalog lifting of the catalog system `name`.
pub fn group(name: &str) -> Result<CarnotGroup> {
    let sys = system(name)?;
    let doc = group_json(name).ok_or_else(|| Error::Config(format!("no catalog lifting for `{name}`")))?;
    CarnotGroup::from_json(doc, sys)
}
