use super::polygon::{BBox, PolygonLayer};

/// Uniform grid over a layer's extent; each cell lists the features whose
/// bounding box touches it, in layer order.
#[derive(Debug, Clone)]
pub struct LayerIndex<'a> {
    layer: &'a PolygonLayer,
    bbox: BBox,
    rows: usize,
    cols: usize,
    cell_lat: f64,
    cell_lon: f64,
    cells: Vec<Vec<usize>>,
}

impl<'a> LayerIndex<'a> {
    pub fn new(layer: &'a PolygonLayer) -> Self {
        let mut bbox = BBox::empty();
        let boxes: Vec<BBox> = layer.features.iter().map(|f| f.bbox()).collect();
        for b in &boxes {
            if !b.is_empty() {
                bbox.union(b);
            }
        }
        let side = ((layer.features.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let (rows, cols) = if bbox.is_empty() {
            (0, 0)
        } else {
            (side, side)
        };
        let cell_lat = ((bbox.max_lat - bbox.min_lat) / side as f64).max(f64::MIN_POSITIVE);
        let cell_lon = ((bbox.max_lon - bbox.min_lon) / side as f64).max(f64::MIN_POSITIVE);
        let mut index = LayerIndex {
            layer,
            bbox,
            rows,
            cols,
            cell_lat,
            cell_lon,
            cells: vec![Vec::new(); rows * cols],
        };
        for (i, b) in boxes.iter().enumerate() {
            if b.is_empty() {
                continue;
            }
            let (r0, c0) = index.cell_of(b.min_lat, b.min_lon);
            let (r1, c1) = index.cell_of(b.max_lat, b.max_lon);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    index.cells[r * cols + c].push(i);
                }
            }
        }
        index
    }

    fn cell_of(&self, lat: f64, lon: f64) -> (usize, usize) {
        let r = ((lat - self.bbox.min_lat) / self.cell_lat).floor() as usize;
        let c = ((lon - self.bbox.min_lon) / self.cell_lon).floor() as usize;
        (r.min(self.rows - 1), c.min(self.cols - 1))
    }

    /// Features whose bounding box may contain the point, ascending.
    pub fn candidates(&self, lat: f64, lon: f64) -> &[usize] {
        if self.rows == 0 || !self.bbox.contains(lat, lon) {
            return &[];
        }
        let (r, c) = self.cell_of(lat, lon);
        &self.cells[r * self.cols + c]
    }

    /// Index of the first feature (layer order) containing the point.
    pub fn first_containing(&self, lat: f64, lon: f64) -> Option<usize> {
        self.candidates(lat, lon)
            .iter()
            .copied()
            .find(|&i| self.layer.features[i].contains(lat, lon))
    }
}
