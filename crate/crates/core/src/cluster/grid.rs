use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::point::Point3;

type Cell = (i64, i64, i64);

/// Uniform grid with cell edge `radius`; a closed-ball query only has to look
/// at the 27 cells around the query point.
pub(crate) struct Grid<'a> {
    points: &'a [Point3],
    radius: f64,
    cells: BTreeMap<Cell, Vec<usize>>,
}

impl<'a> Grid<'a> {
    pub(crate) fn new(points: &'a [Point3], radius: f64) -> Self {
        let mut cells: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, radius)).or_default().push(i);
        }
        Grid { points, radius, cells }
    }

    /// Indices within `radius` of point `i` (including `i`), ascending.
    pub(crate) fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let (cx, cy, cz) = cell_of(p, self.radius);
        let r2 = self.radius * self.radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = (cx.saturating_add(dx), cy.saturating_add(dy), cz.saturating_add(dz));
                    if let Some(members) = self.cells.get(&key) {
                        out.extend(members.iter().copied().filter(|&j| within(p, &self.points[j], r2)));
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// The neighborhood predicate shared by the grid and exhaustive searches.
#[inline]
pub(crate) fn within(a: &Point3, b: &Point3, radius_sq: f64) -> bool {
    a.dist_sq(b) <= radius_sq
}

fn cell_of(p: &Point3, radius: f64) -> Cell {
    (
        libm::floor(p.x / radius) as i64,
        libm::floor(p.y / radius) as i64,
        libm::floor(p.z / radius) as i64,
    )
}
