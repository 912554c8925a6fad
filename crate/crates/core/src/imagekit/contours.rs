//! Suzuki-Abe border following with hierarchy.
//!
//! Foreground is 8-connected and background 4-connected. The mask is padded
//! with a one-pixel background frame, so pixels on the image edge are border
//! pixels.

use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BorderKind {
    Outer,
    Hole,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    /// Border pixels as `(row, col)` in following order. A pixel may repeat
    /// where the region is one pixel thin.
    pub points: Vec<(usize, usize)>,
    pub kind: BorderKind,
    /// Index of the enclosing border in the returned list; `None` when the
    /// enclosing border is the image frame.
    pub parent: Option<usize>,
    /// Border sequence number assigned during the raster scan (the frame is 1).
    pub label: i32,
}

// Clockwise starting east, in (row, col) with rows growing downward.
const DIRS: [(isize, isize); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

fn dir_index(dr: isize, dc: isize) -> usize {
    DIRS.iter()
        .position(|&d| d == (dr, dc))
        .expect("offset must be an 8-neighbor")
}

struct Grid {
    cols: usize,
    f: Vec<i32>,
}

impl Grid {
    fn at(&self, r: usize, c: usize) -> i32 {
        self.f[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: i32) {
        self.f[r * self.cols + c] = v;
    }

    fn step(&self, (r, c): (usize, usize), d: usize) -> (usize, usize) {
        let (dr, dc) = DIRS[d];
        ((r as isize + dr) as usize, (c as isize + dc) as usize)
    }
}

/// Traces every border of `m` in raster order of their starting pixels.
pub fn trace_borders(m: &BinaryMask) -> Vec<Contour> {
    let (h, w) = (m.height(), m.width());
    let rows = h + 2;
    let cols = w + 2;
    let mut grid = Grid {
        cols,
        f: vec![0; rows * cols],
    };
    for r in 0..h {
        for c in 0..w {
            if m.get(r, c) {
                grid.set(r + 1, c + 1, 1);
            }
        }
    }

    let mut contours: Vec<Contour> = Vec::new();
    let mut nbd: i32 = 1;

    for i in 1..rows - 1 {
        let mut lnbd: i32 = 1;
        for j in 1..cols - 1 {
            let fij = grid.at(i, j);
            if fij == 0 {
                continue;
            }
            let start = if fij == 1 && grid.at(i, j - 1) == 0 {
                Some((BorderKind::Outer, (i, j - 1)))
            } else if fij >= 1 && grid.at(i, j + 1) == 0 {
                if fij > 1 {
                    lnbd = fij;
                }
                Some((BorderKind::Hole, (i, j + 1)))
            } else {
                None
            };

            if let Some((kind, from)) = start {
                nbd += 1;
                let parent = resolve_parent(&contours, kind, lnbd);
                let points = follow(&mut grid, (i, j), from, nbd);
                contours.push(Contour {
                    points: points.into_iter().map(|(r, c)| (r - 1, c - 1)).collect(),
                    kind,
                    parent,
                    label: nbd,
                });
            }

            let f = grid.at(i, j);
            if f != 1 {
                lnbd = f.abs();
            }
        }
    }
    contours
}

fn resolve_parent(contours: &[Contour], kind: BorderKind, lnbd: i32) -> Option<usize> {
    // Label 1 is the frame, which behaves as a hole border with no parent.
    let (prev_kind, prev_index, prev_parent) = if lnbd <= 1 {
        (BorderKind::Hole, None, None)
    } else {
        let idx = (lnbd - 2) as usize;
        (contours[idx].kind, Some(idx), contours[idx].parent)
    };
    if kind == prev_kind {
        prev_parent
    } else {
        prev_index
    }
}

fn follow(grid: &mut Grid, start: (usize, usize), from: (usize, usize), nbd: i32) -> Vec<(usize, usize)> {
    let rel = |a: (usize, usize), b: (usize, usize)| {
        dir_index(a.0 as isize - b.0 as isize, a.1 as isize - b.1 as isize)
    };

    // Clockwise search around the start pixel beginning at `from`.
    let d0 = rel(from, start);
    let first = (0..8)
        .map(|k| (d0 + k) % 8)
        .map(|d| grid.step(start, d))
        .find(|&p| grid.at(p.0, p.1) != 0);
    let Some(p1) = first else {
        grid.set(start.0, start.1, -nbd);
        return vec![start];
    };

    let mut points = Vec::new();
    let mut p2 = p1;
    let mut p3 = start;
    loop {
        points.push(p3);
        // Counter-clockwise search around p3 starting just after p2.
        let d2 = rel(p2, p3);
        let mut east_zero = false;
        let mut p4 = p2;
        for k in 1..=8 {
            let d = (d2 + 8 - k) % 8;
            let q = grid.step(p3, d);
            if grid.at(q.0, q.1) != 0 {
                p4 = q;
                break;
            }
            if d == 0 {
                east_zero = true;
            }
        }
        if east_zero {
            grid.set(p3.0, p3.1, -nbd);
        } else if grid.at(p3.0, p3.1) == 1 {
            grid.set(p3.0, p3.1, nbd);
        }
        if p4 == start && p3 == p1 {
            break;
        }
        p2 = p3;
        p3 = p4;
    }
    points
}
