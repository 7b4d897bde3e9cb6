use std::collections::{HashMap, VecDeque};

use super::{GeometryError, ObjectPointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    /// Neighborhood radius in meters (inclusive).
    pub eps: f64,
    /// Minimum neighborhood size for a core point, the point itself included.
    pub min_pts: usize,
}

impl DbscanParams {
    /// Scale-free defaults: 5% of the cloud's bounding-box diagonal and
    /// `max(5, ceil(0.5% of the points))`.
    ///
    /// The radius is raised to `SPACING_FACTOR` times the median nearest-neighbor
    /// distance (capped at 15% of the diagonal) when that is larger. Sparse clouds from
    /// distant objects otherwise have a radius below their own sampling step and fall
    /// apart into noise.
    pub fn for_cloud(points: &[[f64; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let diag = (0..3).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt();
        if !(diag > 0.0) {
            return DbscanParams { eps: f64::MIN_POSITIVE, min_pts: 5 };
        }
        let base = 0.05 * diag;
        let spacing = median_nn_distance(points, base);
        DbscanParams {
            eps: base.max(SPACING_FACTOR * spacing),
            min_pts: 5.max((points.len() as f64 * 0.005).ceil() as usize),
        }
    }
}

pub const SPACING_FACTOR: f64 = 2.5;

/// Median distance to the nearest other point, with each distance capped at `cap`.
fn median_nn_distance(points: &[[f64; 3]], cap: f64) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let grid = Grid::new(points, cap);
    let cap2 = cap * cap;
    let mut nn: Vec<f64> = (0..points.len())
        .map(|i| {
            grid.neighbors(i, cap2)
                .into_iter()
                .filter(|&j| j != i)
                .map(|j| dist2(&points[i], &points[j]))
                .fold(cap2, f64::min)
                .sqrt()
        })
        .collect();
    let mid = nn.len() / 2;
    *nn.select_nth_unstable_by(mid, f64::total_cmp).1
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

struct Grid<'a> {
    points: &'a [[f64; 3]],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [[f64; 3]], eps: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Grid { points, cell: eps, cells }
    }

    fn key(p: &[f64; 3], cell: f64) -> [i64; 3] {
        p.map(|c| (c / cell).floor() as i64)
    }

    /// Indices within `eps` of point `i` (including `i`), ascending.
    fn neighbors(&self, i: usize, eps2: f64) -> Vec<usize> {
        let p = &self.points[i];
        let k = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        out.extend(bucket.iter().copied().filter(|&j| dist2(p, &self.points[j]) <= eps2));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// DBSCAN cluster labels (`None` = noise).
///
/// Core points are connected when within `eps` of each other. A border point (non-core
/// with a core neighbor) joins the cluster of its nearest core neighbor, ties going to the
/// lower index, so labels do not depend on traversal order. Clusters are numbered by their
/// lowest point index.
pub fn dbscan(points: &[[f64; 3]], params: DbscanParams) -> Result<Vec<Option<usize>>, GeometryError> {
    if !(params.eps > 0.0) || params.min_pts == 0 {
        return Err(GeometryError::InvalidParameter(format!(
            "eps={} min_pts={}",
            params.eps, params.min_pts
        )));
    }
    let eps2 = params.eps * params.eps;
    let grid = Grid::new(points, params.eps);
    let neighbors: Vec<Vec<usize>> = (0..points.len()).map(|i| grid.neighbors(i, eps2)).collect();
    let core: Vec<bool> = neighbors.iter().map(|n| n.len() >= params.min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut next = 0;
    for seed in 0..points.len() {
        if !core[seed] || labels[seed].is_some() {
            continue;
        }
        labels[seed] = Some(next);
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            for &j in &neighbors[i] {
                if core[j] && labels[j].is_none() {
                    labels[j] = Some(next);
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    for i in 0..points.len() {
        if core[i] {
            continue;
        }
        let nearest = neighbors[i]
            .iter()
            .copied()
            .filter(|&j| core[j])
            .min_by(|&a, &b| {
                dist2(&points[i], &points[a])
                    .total_cmp(&dist2(&points[i], &points[b]))
                    .then(a.cmp(&b))
            });
        labels[i] = nearest.and_then(|j| labels[j]);
    }
    // Renumber by lowest member index (border points may precede their cluster's first core).
    let mut remap = vec![None; next];
    let mut fresh = 0;
    for l in labels.iter_mut().flatten() {
        let id = *remap[*l].get_or_insert_with(|| {
            fresh += 1;
            fresh - 1
        });
        *l = id;
    }
    Ok(labels)
}

/// Keeps the largest DBSCAN cluster. Equal sizes go to the cluster holding the
/// lexicographically smallest point, which keeps the result independent of input order.
pub fn dbscan_largest_cluster(
    pc: &ObjectPointCloud,
    params: DbscanParams,
) -> Result<ObjectPointCloud, GeometryError> {
    let labels = dbscan(&pc.points, params)?;
    let clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    if clusters == 0 {
        return Err(GeometryError::EmptyObject);
    }
    let mut size = vec![0usize; clusters];
    let mut smallest: Vec<Option<[f64; 3]>> = vec![None; clusters];
    for (p, l) in pc.points.iter().zip(&labels) {
        if let Some(l) = *l {
            size[l] += 1;
            let s = smallest[l].get_or_insert(*p);
            if lex_cmp(p, s).is_lt() {
                *s = *p;
            }
        }
    }
    let best = (0..clusters)
        .max_by(|&a, &b| {
            size[a]
                .cmp(&size[b])
                .then_with(|| lex_cmp(&smallest[b].unwrap(), &smallest[a].unwrap()))
        })
        .unwrap();
    let points = pc
        .points
        .iter()
        .zip(&labels)
        .filter(|(_, l)| **l == Some(best))
        .map(|(p, _)| *p)
        .collect();
    Ok(ObjectPointCloud {
        object_id: pc.object_id,
        points,
        source_pixels: pc.source_pixels,
    })
}

fn lex_cmp(a: &[f64; 3], b: &[f64; 3]) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}
