use serde_json::{Map, Value};

use super::GeoError;

/// Closed ring of `[lon, lat]` vertices; the first vertex is repeated at
/// the end.
pub type Ring = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
    bbox: BBox,
}

/// Axis-aligned bounds in degrees.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn empty() -> Self {
        BBox {
            min_lat: f64::INFINITY,
            min_lon: f64::INFINITY,
            max_lat: f64::NEG_INFINITY,
            max_lon: f64::NEG_INFINITY,
        }
    }

    pub fn extend(&mut self, lat: f64, lon: f64) {
        self.min_lat = self.min_lat.min(lat);
        self.max_lat = self.max_lat.max(lat);
        self.min_lon = self.min_lon.min(lon);
        self.max_lon = self.max_lon.max(lon);
    }

    pub fn union(&mut self, other: &BBox) {
        self.extend(other.min_lat, other.min_lon);
        self.extend(other.max_lat, other.max_lon);
    }

    pub fn is_empty(&self) -> bool {
        self.min_lat > self.max_lat || self.min_lon > self.max_lon
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.min_lat && lat <= self.max_lat && lon >= self.min_lon && lon <= self.max_lon
    }
}

fn validate_ring(ring: &Ring) -> Result<(), GeoError> {
    if ring.len() < 4 {
        return Err(GeoError::InvalidRing(format!(
            "ring has {} vertices, need at least 4",
            ring.len()
        )));
    }
    if ring.first() != ring.last() {
        return Err(GeoError::InvalidRing("ring is not closed".into()));
    }
    if ring.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GeoError::InvalidRing("non-finite coordinate".into()));
    }
    Ok(())
}

impl Polygon {
    pub fn new(exterior: Ring, holes: Vec<Ring>) -> Result<Self, GeoError> {
        validate_ring(&exterior)?;
        for h in &holes {
            validate_ring(h)?;
        }
        let mut bbox = BBox::empty();
        for &[lon, lat] in &exterior {
            bbox.extend(lat, lon);
        }
        Ok(Polygon {
            exterior,
            holes,
            bbox,
        })
    }

    /// Axis-aligned rectangle, handy for fixtures.
    pub fn rect(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Self {
        Polygon::new(
            vec![
                [min_lon, min_lat],
                [max_lon, min_lat],
                [max_lon, max_lat],
                [min_lon, max_lat],
                [min_lon, min_lat],
            ],
            Vec::new(),
        )
        .expect("rectangle ring is valid")
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(&self.holes)
    }
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    cross == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Even-odd ray casting over the exterior and every hole. Points on any
/// ring edge count as inside.
pub fn point_in_polygon(lat: f64, lon: f64, polygon: &Polygon) -> bool {
    if !polygon.bbox.contains(lat, lon) {
        return false;
    }
    let p = [lon, lat];
    let mut inside = false;
    for ring in polygon.rings() {
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            if on_segment(a, b, p) {
                return true;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// One geographic feature: a (multi)polygon plus its properties.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub polygons: Vec<Polygon>,
    pub properties: Map<String, Value>,
}

impl Feature {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        self.polygons.iter().any(|p| point_in_polygon(lat, lon, p))
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox::empty();
        for p in &self.polygons {
            b.union(&p.bbox());
        }
        b
    }

    /// Numeric property; numeric strings are accepted since census
    /// extracts often quote every value.
    pub fn number(&self, key: &str) -> Option<f64> {
        match self.properties.get(key)? {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
    }

    /// Property rendered as plain text (strings unquoted).
    pub fn text(&self, key: &str) -> Option<String> {
        match self.properties.get(key)? {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            v => Some(v.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolygonLayer {
    pub name: String,
    pub features: Vec<Feature>,
}

fn ring(v: &Value) -> Result<Ring, GeoError> {
    v.as_array()
        .ok_or_else(|| GeoError::GeoJson("ring is not an array".into()))?
        .iter()
        .map(|pos| {
            let pos = pos
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| GeoError::GeoJson("position needs [lon, lat]".into()))?;
            let num = |i: usize| {
                pos[i]
                    .as_f64()
                    .ok_or_else(|| GeoError::GeoJson("non-numeric coordinate".into()))
            };
            Ok([num(0)?, num(1)?])
        })
        .collect()
}

fn polygon(v: &Value) -> Result<Polygon, GeoError> {
    let rings = v
        .as_array()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| GeoError::GeoJson("polygon needs at least one ring".into()))?;
    let mut rings = rings.iter().map(ring).collect::<Result<Vec<_>, _>>()?;
    let exterior = rings.remove(0);
    Polygon::new(exterior, rings)
}

fn geometry(v: &Value) -> Result<Vec<Polygon>, GeoError> {
    let kind = v.get("type").and_then(Value::as_str).unwrap_or_default();
    let coords = v.get("coordinates");
    match (kind, coords) {
        ("Polygon", Some(c)) => Ok(vec![polygon(c)?]),
        ("MultiPolygon", Some(Value::Array(ps))) => ps.iter().map(polygon).collect(),
        ("GeometryCollection", _) => {
            let mut out = Vec::new();
            for g in v
                .get("geometries")
                .and_then(Value::as_array)
                .into_iter()
                .flatten()
            {
                out.extend(geometry(g)?);
            }
            Ok(out)
        }
        (other, _) => Err(GeoError::GeoJson(format!(
            "unsupported geometry type {other:?}"
        ))),
    }
}

impl PolygonLayer {
    /// Parses a GeoJSON `FeatureCollection`, `Feature` or bare geometry.
    /// Coordinates are `[lon, lat]`; features with null geometry are
    /// skipped.
    pub fn from_geojson(name: impl Into<String>, text: &str) -> Result<Self, GeoError> {
        let doc: Value = serde_json::from_str(text)?;
        let feature = |f: &Value| -> Result<Option<Feature>, GeoError> {
            let geom = match f.get("geometry") {
                None | Some(Value::Null) => return Ok(None),
                Some(g) => g,
            };
            let properties = match f.get("properties") {
                Some(Value::Object(m)) => m.clone(),
                _ => Map::new(),
            };
            Ok(Some(Feature {
                polygons: geometry(geom)?,
                properties,
            }))
        };
        let features = match doc.get("type").and_then(Value::as_str) {
            Some("FeatureCollection") => {
                let list = doc
                    .get("features")
                    .and_then(Value::as_array)
                    .ok_or_else(|| GeoError::GeoJson("missing features array".into()))?;
                let mut out = Vec::with_capacity(list.len());
                for (i, f) in list.iter().enumerate() {
                    match feature(f) {
                        Ok(Some(f)) => out.push(f),
                        Ok(None) => {}
                        Err(e) => return Err(GeoError::GeoJson(format!("feature {i}: {e}"))),
                    }
                }
                out
            }
            Some("Feature") => feature(&doc)?.into_iter().collect(),
            _ => vec![Feature {
                polygons: geometry(&doc)?,
                properties: Map::new(),
            }],
        };
        Ok(PolygonLayer {
            name: name.into(),
            features,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, GeoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GeoError::Io {
            context: format!("reading {}", path.display()),
            source: e,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::from_geojson(name, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_with_hole() -> Polygon {
        let outer = Polygon::rect(0.0, 0.0, 4.0, 4.0).exterior;
        let hole = Polygon::rect(1.0, 1.0, 3.0, 3.0).exterior;
        Polygon::new(outer, vec![hole]).unwrap()
    }

    #[test]
    fn unit_square() {
        let sq = Polygon::rect(0.0, 0.0, 1.0, 1.0);
        assert!(point_in_polygon(0.5, 0.5, &sq));
        assert!(!point_in_polygon(2.0, 2.0, &sq));
    }

    #[test]
    fn boundary_counts_as_inside() {
        let sq = Polygon::rect(0.0, 0.0, 1.0, 1.0);
        for (lat, lon) in [(0.0, 0.5), (1.0, 1.0), (0.0, 0.0), (0.3, 1.0)] {
            assert!(point_in_polygon(lat, lon, &sq), "({lat}, {lon})");
        }
        let holed = square_with_hole();
        assert!(point_in_polygon(2.0, 1.0, &holed));
    }

    #[test]
    fn hole_is_outside() {
        let p = square_with_hole();
        assert!(!point_in_polygon(2.0, 2.0, &p));
        assert!(point_in_polygon(0.5, 2.0, &p));
        assert!(point_in_polygon(3.5, 3.5, &p));
    }

    #[test]
    fn concave_polygon() {
        // U shape opening upwards.
        let u = Polygon::new(
            vec![
                [0.0, 0.0],
                [3.0, 0.0],
                [3.0, 3.0],
                [2.0, 3.0],
                [2.0, 1.0],
                [1.0, 1.0],
                [1.0, 3.0],
                [0.0, 3.0],
                [0.0, 0.0],
            ],
            vec![],
        )
        .unwrap();
        assert!(!point_in_polygon(2.0, 1.5, &u));
        assert!(point_in_polygon(2.0, 0.5, &u));
        assert!(point_in_polygon(0.5, 1.5, &u));
    }

    #[test]
    fn ring_validation() {
        assert!(matches!(
            Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]], vec![]),
            Err(GeoError::InvalidRing(_))
        ));
        assert!(matches!(
            Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], vec![]),
            Err(GeoError::InvalidRing(_))
        ));
    }

    #[test]
    fn geojson_parsing() {
        let text = r#"{
          "type": "FeatureCollection",
          "features": [
            {"type": "Feature", "properties": {"GEOID": "17031010100", "income": "45000"},
             "geometry": {"type": "Polygon", "coordinates": [[[-87.7,41.8],[-87.6,41.8],[-87.6,41.9],[-87.7,41.9],[-87.7,41.8]]]}},
            {"type": "Feature", "properties": {"GEOID": 2, "income": 120000},
             "geometry": {"type": "MultiPolygon", "coordinates": [
               [[[0,0],[1,0],[1,1],[0,1],[0,0]]],
               [[[5,5],[6,5],[6,6],[5,6],[5,5]]]]}},
            {"type": "Feature", "properties": {}, "geometry": null}
          ]
        }"#;
        let layer = PolygonLayer::from_geojson("tracts", text).unwrap();
        assert_eq!(layer.features.len(), 2);
        let f = &layer.features[0];
        assert!(f.contains(41.85, -87.65));
        assert!(!f.contains(-87.65, 41.85));
        assert_eq!(f.number("income"), Some(45000.0));
        assert_eq!(f.text("GEOID").as_deref(), Some("17031010100"));
        let g = &layer.features[1];
        assert_eq!(g.polygons.len(), 2);
        assert!(g.contains(5.5, 5.5) && g.contains(0.5, 0.5) && !g.contains(3.0, 3.0));
        assert_eq!(g.text("GEOID").as_deref(), Some("2"));

        let open = r#"{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1]]]}"#;
        assert!(PolygonLayer::from_geojson("x", open).is_err());
        let point = r#"{"type":"Point","coordinates":[0,0]}"#;
        assert!(matches!(
            PolygonLayer::from_geojson("x", point),
            Err(GeoError::GeoJson(_))
        ));
    }
}
