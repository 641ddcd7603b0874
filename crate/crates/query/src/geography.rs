//! Gazetteer lookup, administrative regions and point-in-polygon chains.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};
use soilfuse_core::GeoPoint;

use crate::error::QueryError;

/// Separator between region ids in a gazetteer `admin_path`.
pub const ADMIN_PATH_SEP: char = '/';

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GazetteerEntry {
    pub name: String,
    pub location: GeoPoint,
    pub admin_path: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    by_name: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct GazetteerRow {
    name: String,
    lon: f64,
    lat: f64,
    #[serde(default)]
    admin_path: String,
}

impl Gazetteer {
    pub fn new(entries: Vec<GazetteerEntry>) -> Result<Self, QueryError> {
        let mut by_name = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.name.trim().is_empty() {
                return Err(QueryError::InvalidData(format!("gazetteer entry {} has an empty name", i + 1)));
            }
            if by_name.insert(e.name.to_lowercase(), i).is_some() {
                return Err(QueryError::InvalidData(format!("gazetteer name `{}` appears twice", e.name)));
            }
        }
        Ok(Gazetteer { entries, by_name })
    }

    /// CSV with header `name,lon,lat,admin_path`; path ids joined by `/`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, QueryError> {
        let mut entries = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize::<GazetteerRow>() {
            let row = row.map_err(|e| QueryError::InvalidData(format!("gazetteer: {e}")))?;
            let location = GeoPoint::new(row.lon, row.lat)
                .map_err(|e| QueryError::InvalidData(format!("gazetteer `{}`: {e}", row.name)))?;
            let admin_path = row
                .admin_path
                .split(ADMIN_PATH_SEP)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect();
            entries.push(GazetteerEntry { name: row.name.trim().to_owned(), location, admin_path });
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    /// Case-insensitive exact name match.
    pub fn lookup(&self, name: &str) -> Option<&GazetteerEntry> {
        self.by_name.get(&name.trim().to_lowercase()).map(|&i| &self.entries[i])
    }

    /// Every admin path id must name a known region.
    pub fn check_paths(&self, regions: &RegionSet) -> Result<(), QueryError> {
        for e in &self.entries {
            if let Some(id) = e.admin_path.iter().find(|id| regions.get(id).is_none()) {
                return Err(QueryError::InvalidData(format!("gazetteer `{}` references unknown region `{id}`", e.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdminRegion {
    pub id: String,
    pub level: u32,
    pub parent_id: Option<String>,
    /// Closed ring: the first vertex is repeated at the end.
    pub boundary: Vec<GeoPoint>,
}

fn cross(o: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn on_segment(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> bool {
    cross(a, b, p) == 0.0
        && p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn segments_intersect(a: &GeoPoint, b: &GeoPoint, c: &GeoPoint, d: &GeoPoint) -> bool {
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Even-odd ray casting; points on an edge or vertex count as inside.
pub fn point_in_polygon(p: &GeoPoint, ring: &[GeoPoint]) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

impl AdminRegion {
    pub fn new(id: &str, level: u32, parent_id: Option<&str>, mut boundary: Vec<GeoPoint>) -> Result<Self, QueryError> {
        let bad = |reason: &str| QueryError::InvalidData(format!("region `{id}`: {reason}"));
        if id.trim().is_empty() {
            return Err(QueryError::InvalidData("region with empty id".into()));
        }
        if let (Some(&first), Some(last)) = (boundary.first(), boundary.last()) {
            if first != *last {
                boundary.push(first);
            }
        }
        if boundary.len() < 4 {
            return Err(bad("polygon needs at least three distinct vertices"));
        }
        let n = boundary.len() - 1;
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(&boundary[i], &boundary[i + 1], &boundary[j], &boundary[j + 1]) {
                    return Err(bad("polygon is self-intersecting"));
                }
            }
        }
        Ok(AdminRegion { id: id.to_owned(), level, parent_id: parent_id.map(str::to_owned), boundary })
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        point_in_polygon(p, &self.boundary)
    }
}

#[derive(Deserialize)]
struct RegionRow {
    id: String,
    level: u32,
    #[serde(default)]
    parent: String,
    vertices: String,
}

/// `lon lat;lon lat;...`
pub fn parse_vertices(text: &str) -> Result<Vec<GeoPoint>, QueryError> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let mut it = pair.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(lon)), Some(Ok(lat)), None) => {
                    GeoPoint::new(lon, lat).map_err(|e| QueryError::InvalidData(e.to_string()))
                }
                _ => Err(QueryError::InvalidData(format!("bad vertex `{pair}`"))),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct RegionSet {
    regions: BTreeMap<String, AdminRegion>,
}

impl RegionSet {
    /// Checks parent links: parents exist and sit exactly one level up.
    pub fn new(regions: Vec<AdminRegion>) -> Result<Self, QueryError> {
        let mut map = BTreeMap::new();
        for r in regions {
            let id = r.id.clone();
            if map.insert(id.clone(), r).is_some() {
                return Err(QueryError::InvalidData(format!("region `{id}` defined twice")));
            }
        }
        for r in map.values() {
            match &r.parent_id {
                Some(pid) => {
                    let parent = map
                        .get(pid)
                        .ok_or_else(|| QueryError::InvalidData(format!("region `{}` has unknown parent `{pid}`", r.id)))?;
                    if parent.level + 1 != r.level {
                        return Err(QueryError::InvalidData(format!("region `{}` is not one level below `{pid}`", r.id)));
                    }
                }
                None if r.level != 0 => {
                    return Err(QueryError::InvalidData(format!("region `{}` at level {} has no parent", r.id, r.level)))
                }
                None => {}
            }
        }
        Ok(RegionSet { regions: map })
    }

    /// CSV with header `id,level,parent,vertices`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, QueryError> {
        let mut regions = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize::<RegionRow>() {
            let row = row.map_err(|e| QueryError::InvalidData(format!("regions: {e}")))?;
            let parent = Some(row.parent.trim()).filter(|p| !p.is_empty());
            regions.push(AdminRegion::new(row.id.trim(), row.level, parent, parse_vertices(&row.vertices)?)?);
        }
        Self::new(regions)
    }

    pub fn get(&self, id: &str) -> Option<&AdminRegion> {
        self.regions.get(id)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Regions containing `p`, coarse to fine. At each level the first region
    /// (by id) whose parent is the previous chain element is taken, so points
    /// on a shared border still produce a single consistent chain.
    pub fn admin_hierarchy(&self, p: &GeoPoint) -> Vec<&AdminRegion> {
        let mut containing: Vec<&AdminRegion> = self.regions.values().filter(|r| r.contains(p)).collect();
        containing.sort_by(|a, b| a.level.cmp(&b.level).then_with(|| a.id.cmp(&b.id)));
        let mut chain: Vec<&AdminRegion> = Vec::new();
        for r in containing {
            let expected_level = chain.last().map_or(0, |last| last.level + 1);
            if r.level != expected_level {
                continue;
            }
            if r.parent_id.as_deref() == chain.last().map(|l| l.id.as_str()) {
                chain.push(r);
            }
        }
        chain
    }
}
