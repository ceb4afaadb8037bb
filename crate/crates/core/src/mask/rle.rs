use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

/// Uncompressed COCO-style run-length encoding: column-major runs that
/// alternate zeros and ones, always starting with a (possibly empty) run of
/// zeros. `size` is `[height, width]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

impl RleMask {
    pub fn encode(mask: &BinaryMask) -> Self {
        let (w, h) = mask.dims();
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for x in 0..w {
            for y in 0..h {
                let bit = mask.get(x, y);
                if bit != current {
                    counts.push(run);
                    run = 0;
                    current = bit;
                }
                run += 1;
            }
        }
        counts.push(run);
        RleMask { size: [h, w], counts }
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        let [h, w] = self.size;
        let total: u64 = self.counts.iter().sum();
        if total != (w * h) as u64 {
            return Err(Error::InvalidRle(format!(
                "run lengths sum to {total}, expected {}",
                w * h
            )));
        }
        let mut mask = BinaryMask::empty(w, h);
        let mut pos = 0usize;
        for (i, &run) in self.counts.iter().enumerate() {
            let run = run as usize;
            if i % 2 == 1 {
                for p in pos..pos + run {
                    // column-major position -> (x, y)
                    mask.set(p / h, p % h, true);
                }
            }
            pos += run;
        }
        Ok(mask)
    }

    pub fn width(&self) -> usize {
        self.size[1]
    }

    pub fn height(&self) -> usize {
        self.size[0]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("RLE serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl BinaryMask {
    pub fn to_rle(&self) -> RleMask {
        RleMask::encode(self)
    }
}
