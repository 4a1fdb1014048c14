use serde::{Deserialize, Serialize};

use super::DashboardError;

pub const GRID_COLUMNS: u32 = 12;
pub const MIN_SIZE: u32 = 2;

/// A widget rectangle in grid cells. Rows are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> u64 {
        u64::from(self.x) + u64::from(self.w)
    }

    pub fn bottom(&self) -> u64 {
        u64::from(self.y) + u64::from(self.h)
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        u64::from(self.x) < other.right()
            && u64::from(other.x) < self.right()
            && u64::from(self.y) < other.bottom()
            && u64::from(other.y) < self.bottom()
    }

    /// Size and column bounds, independent of other widgets.
    pub fn check_bounds(&self) -> Result<(), DashboardError> {
        if self.w < MIN_SIZE || self.h < MIN_SIZE {
            return Err(DashboardError::Geometry(format!(
                "widget must be at least {MIN_SIZE}x{MIN_SIZE}, got {}x{}",
                self.w, self.h
            )));
        }
        if self.right() > u64::from(GRID_COLUMNS) {
            return Err(DashboardError::Geometry(format!(
                "widget spans columns {}..{} but the grid has {GRID_COLUMNS}",
                self.x,
                self.right()
            )));
        }
        if self.bottom() > u64::from(u32::MAX) {
            return Err(DashboardError::Geometry("widget extends past the last row".into()));
        }
        Ok(())
    }
}

/// Checks bounds for every rectangle and that no two overlap.
pub fn check_layout<'a>(rects: impl IntoIterator<Item = &'a Rect>) -> Result<(), DashboardError> {
    let rects: Vec<&Rect> = rects.into_iter().collect();
    for (i, a) in rects.iter().enumerate() {
        a.check_bounds()?;
        if let Some(b) = rects[i + 1..].iter().find(|b| a.overlaps(b)) {
            return Err(DashboardError::Geometry(format!(
                "widget at ({}, {}) overlaps widget at ({}, {})",
                a.x, a.y, b.x, b.y
            )));
        }
    }
    Ok(())
}

/// First-fit placement: scans rows top to bottom and columns left to right
/// for the first cell where a `w`x`h` rectangle fits. Always succeeds since
/// the grid grows downward. `w` is clamped to `[2, 12]`, `h` to at least 2.
pub fn auto_place(existing: &[Rect], w: u32, h: u32) -> (u32, u32) {
    let w = w.clamp(MIN_SIZE, GRID_COLUMNS);
    let h = h.max(MIN_SIZE);
    let bottom = existing
        .iter()
        .map(|r| r.bottom())
        .max()
        .unwrap_or(0)
        .min(u64::from(u32::MAX - h)) as u32;
    for y in 0..=bottom {
        for x in 0..=GRID_COLUMNS - w {
            let candidate = Rect::new(x, y, w, h);
            if !existing.iter().any(|r| r.overlaps(&candidate)) {
                return (x, y);
            }
        }
    }
    (0, bottom)
}
