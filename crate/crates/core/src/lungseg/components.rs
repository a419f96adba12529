use super::BinaryMask2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn neighbours(self) -> &'static [(isize, isize)] {
        const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        const N8: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &N4,
            Connectivity::Eight => &N8,
        }
    }
}

/// Statistics of one connected region.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: u32,
    pub area: usize,
    pub touches_border: bool,
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
    /// Pixel coordinates in raster order of discovery.
    pub pixels: Vec<(usize, usize)>,
}

impl Region {
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.area as f64;
        let (sr, sc) = self
            .pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
        (sr / n, sc / n)
    }
}

/// Label image (0 = background, regions numbered from 1 in raster order of
/// their first pixel) plus per-region statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn label_at(&self, r: usize, c: usize) -> u32 {
        self.labels[r * self.cols + c]
    }
}

pub fn connected_components(m: &BinaryMask2D, connectivity: Connectivity) -> Components {
    let (rows, cols) = (m.rows(), m.cols());
    let mut labels = vec![0u32; rows * cols];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    let nbrs = connectivity.neighbours();
    for start in 0..rows * cols {
        if m.bits()[start] == 0 || labels[start] != 0 {
            continue;
        }
        let label = regions.len() as u32 + 1;
        let (r0, c0) = (start / cols, start % cols);
        let mut reg = Region {
            label,
            area: 0,
            touches_border: false,
            row_min: r0,
            row_max: r0,
            col_min: c0,
            col_max: c0,
            pixels: Vec::new(),
        };
        labels[start] = label;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (r, c) = (p / cols, p % cols);
            reg.area += 1;
            reg.pixels.push((r, c));
            reg.row_min = reg.row_min.min(r);
            reg.row_max = reg.row_max.max(r);
            reg.col_min = reg.col_min.min(c);
            reg.col_max = reg.col_max.max(c);
            if r == 0 || c == 0 || r + 1 == rows || c + 1 == cols {
                reg.touches_border = true;
            }
            for &(dr, dc) in nbrs {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr < 0 || cc < 0 || rr >= rows as isize || cc >= cols as isize {
                    continue;
                }
                let q = rr as usize * cols + cc as usize;
                if m.bits()[q] != 0 && labels[q] == 0 {
                    labels[q] = label;
                    stack.push(q);
                }
            }
        }
        reg.pixels.sort_unstable();
        regions.push(reg);
    }
    Components {
        rows,
        cols,
        labels,
        regions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_mask_has_no_components() {
        let c = connected_components(&BinaryMask2D::zeros(4, 6), Connectivity::Eight);
        assert!(c.is_empty());
        assert!(c.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = BinaryMask2D::parse(
            "#..
             .#.
             ...",
        )
        .unwrap();
        assert_eq!(connected_components(&m, Connectivity::Four).len(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).len(), 1);
    }

    #[test]
    fn region_statistics() {
        let m = BinaryMask2D::parse(
            "......
             .##...
             .##..#
             .....#",
        )
        .unwrap();
        let c = connected_components(&m, Connectivity::Eight);
        assert_eq!(c.len(), 2);
        let a = &c.regions[0];
        assert_eq!((a.area, a.touches_border), (4, false));
        assert_eq!((a.row_min, a.row_max, a.col_min, a.col_max), (1, 2, 1, 2));
        assert_eq!(a.centroid(), (1.5, 1.5));
        assert!(c.regions[1].touches_border);
        assert_eq!(c.label_at(2, 5), 2);
    }

    /// Independent oracle: iterate min-label propagation to a fixed point.
    fn propagate_oracle(m: &BinaryMask2D, conn: Connectivity) -> Vec<usize> {
        let (rows, cols) = (m.rows(), m.cols());
        let mut lab: Vec<usize> = (0..rows * cols)
            .map(|p| if m.bits()[p] != 0 { p + 1 } else { 0 })
            .collect();
        loop {
            let mut changed = false;
            for r in 0..rows {
                for c in 0..cols {
                    let p = r * cols + c;
                    if lab[p] == 0 {
                        continue;
                    }
                    for dr in -1isize..=1 {
                        for dc in -1isize..=1 {
                            if (dr, dc) == (0, 0) || (conn == Connectivity::Four && dr != 0 && dc != 0) {
                                continue;
                            }
                            let (rr, cc) = (r as isize + dr, c as isize + dc);
                            if rr < 0 || cc < 0 || rr >= rows as isize || cc >= cols as isize {
                                continue;
                            }
                            let q = rr as usize * cols + cc as usize;
                            if lab[q] != 0 && lab[q] < lab[p] {
                                lab[p] = lab[q];
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                return lab;
            }
        }
    }

    proptest! {
        #[test]
        fn agrees_with_flood_oracle(bits in prop::collection::vec(prop::bool::weighted(0.45), 144), four in any::<bool>()) {
            let m = BinaryMask2D::from_vec(12, 12, bits.into_iter().map(u8::from).collect()).unwrap();
            let conn = if four { Connectivity::Four } else { Connectivity::Eight };
            let c = connected_components(&m, conn);
            let oracle = propagate_oracle(&m, conn);
            // Same partition: labels equal iff oracle labels equal.
            for p in 0..144 {
                prop_assert_eq!(c.labels[p] == 0, oracle[p] == 0);
                for q in 0..144 {
                    if c.labels[p] != 0 && c.labels[q] != 0 {
                        prop_assert_eq!(c.labels[p] == c.labels[q], oracle[p] == oracle[q]);
                    }
                }
            }
            // Dense labels 1..=n.
            let max = c.labels.iter().copied().max().unwrap_or(0) as usize;
            prop_assert_eq!(max, c.len());
            let areas: usize = c.regions.iter().map(|r| r.area).sum();
            prop_assert_eq!(areas, m.count());
        }
    }
}
