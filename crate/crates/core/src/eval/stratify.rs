use std::fmt;

use super::NoduleAnnotation;

/// Half-open diameter bins (lower bound inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SizeBin {
    From3To6,
    From6To8,
    From8To15,
    From15,
}

impl SizeBin {
    pub const ALL: [SizeBin; 4] = [SizeBin::From3To6, SizeBin::From6To8, SizeBin::From8To15, SizeBin::From15];

    /// `None` below 3 mm (outside the inclusion range).
    pub fn of(diameter_mm: f64) -> Option<SizeBin> {
        match diameter_mm {
            d if d >= 15.0 => Some(SizeBin::From15),
            d if d >= 8.0 => Some(SizeBin::From8To15),
            d if d >= 6.0 => Some(SizeBin::From6To8),
            d if d >= 3.0 => Some(SizeBin::From3To6),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SizeBin::From3To6 => "3-6 mm",
            SizeBin::From6To8 => "6-8 mm",
            SizeBin::From8To15 => "8-15 mm",
            SizeBin::From15 => ">=15 mm",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SizeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoduleType {
    GroundGlass,
    PartSolid,
    Solid,
}

impl NoduleType {
    pub const ALL: [NoduleType; 3] = [NoduleType::GroundGlass, NoduleType::PartSolid, NoduleType::Solid];

    /// Ground-glass when a strict majority of votes is 1, solid when a strict
    /// majority is 5, part-solid otherwise (including ties and no votes).
    pub fn from_votes(votes: &[u8]) -> NoduleType {
        let half = votes.len() / 2;
        let count = |v: u8| votes.iter().filter(|&&x| x == v).count();
        if count(1) > half {
            NoduleType::GroundGlass
        } else if count(5) > half {
            NoduleType::Solid
        } else {
            NoduleType::PartSolid
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NoduleType::GroundGlass => "ground-glass",
            NoduleType::PartSolid => "part-solid",
            NoduleType::Solid => "solid",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NoduleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StratCell {
    pub total: usize,
    pub detected: usize,
}

impl StratCell {
    fn add(&mut self, o: StratCell) {
        self.total += o.total;
        self.detected += o.detected;
    }

    /// `None` for an empty cell.
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.detected as f64 / self.total as f64)
    }
}

/// Detection counts by size bin (rows) and nodule type (columns).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stratification {
    cells: [[StratCell; 3]; 4],
    /// Indices of annotations below 3 mm, left out of every count.
    pub excluded: Vec<usize>,
}

impl Stratification {
    pub fn cell(&self, bin: SizeBin, ty: NoduleType) -> StratCell {
        self.cells[bin.index()][ty.index()]
    }

    pub fn by_size(&self, bin: SizeBin) -> StratCell {
        let mut c = StratCell::default();
        self.cells[bin.index()].iter().for_each(|x| c.add(*x));
        c
    }

    pub fn by_type(&self, ty: NoduleType) -> StratCell {
        let mut c = StratCell::default();
        self.cells.iter().for_each(|row| c.add(row[ty.index()]));
        c
    }

    pub fn overall(&self) -> StratCell {
        let mut c = StratCell::default();
        self.cells.iter().flatten().for_each(|x| c.add(*x));
        c
    }
}

/// Counts annotations and detections per size bin and nodule type.
/// `detected[i]` flags annotation `i`.
pub fn stratify(anns: &[NoduleAnnotation], detected: &[bool]) -> Stratification {
    assert_eq!(anns.len(), detected.len(), "one detected flag per annotation");
    let mut out = Stratification::default();
    for (i, (a, &d)) in anns.iter().zip(detected).enumerate() {
        let Some(bin) = SizeBin::of(a.diameter_mm) else {
            out.excluded.push(i);
            continue;
        };
        let cell = &mut out.cells[bin.index()][NoduleType::from_votes(&a.texture_votes).index()];
        cell.total += 1;
        cell.detected += d as usize;
    }
    out
}
