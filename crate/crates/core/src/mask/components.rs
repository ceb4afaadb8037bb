use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        const EIGHT: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectedComponent {
    pub mask: BinaryMask,
    pub area: usize,
    /// `(min_x, min_y, max_x, max_y)`, inclusive.
    pub bbox: (usize, usize, usize, usize),
    pub centroid: (f64, f64),
    /// Raster index of the first pixel; components are ordered by it.
    pub min_index: usize,
}

/// Labels set pixels with component ids `1..=n` (0 = background) in order of
/// each component's first raster pixel. Returns the label raster and `n`.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> (Vec<u32>, usize) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits[j] && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, next as usize)
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<ConnectedComponent> {
    let (w, h) = mask.dims();
    let (labels, n) = label_components(mask, connectivity);
    let mut comps: Vec<ConnectedComponent> = (0..n)
        .map(|_| ConnectedComponent {
            mask: BinaryMask::empty(w, h),
            area: 0,
            bbox: (usize::MAX, usize::MAX, 0, 0),
            centroid: (0.0, 0.0),
            min_index: usize::MAX,
        })
        .collect();
    for (i, &label) in labels.iter().enumerate() {
        if label == 0 {
            continue;
        }
        let c = &mut comps[label as usize - 1];
        let (x, y) = (i % w, i / w);
        c.mask.bits[i] = true;
        c.area += 1;
        c.bbox.0 = c.bbox.0.min(x);
        c.bbox.1 = c.bbox.1.min(y);
        c.bbox.2 = c.bbox.2.max(x);
        c.bbox.3 = c.bbox.3.max(y);
        c.centroid.0 += x as f64;
        c.centroid.1 += y as f64;
        c.min_index = c.min_index.min(i);
    }
    for c in &mut comps {
        c.centroid.0 /= c.area as f64;
        c.centroid.1 /= c.area as f64;
    }
    comps
}
