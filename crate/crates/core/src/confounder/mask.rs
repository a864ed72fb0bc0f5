use crate::error::{Error, Result};
use crate::types::{BoundingBox, Grid};

/// A grid with the subject region zeroed out, tagged with its sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextImage {
    pub grid: Grid,
    pub provenance: String,
}

impl ContextImage {
    /// Wraps an unmasked grid (synthetic context records and the masking
    /// ablation).
    pub fn unmasked(grid: Grid, provenance: impl Into<String>) -> Self {
        ContextImage {
            grid,
            provenance: provenance.into(),
        }
    }

    /// Lays a synthetic context block out as a 1 × len × 1 grid.
    pub fn from_record(values: &[f64], provenance: impl Into<String>) -> Result<Self> {
        Ok(ContextImage {
            grid: Grid::new(1, values.len(), 1, values.to_vec())?,
            provenance: provenance.into(),
        })
    }
}

/// Zeroes every cell (all channels) inside `bbox`; everything else is copied.
pub fn mask_subject(image: &Grid, bbox: &BoundingBox) -> Result<Grid> {
    bbox.check_within(image.width, image.height)
        .map_err(|m| Error::Validation {
            sample: "<image>".into(),
            message: m,
        })?;
    let mut out = image.clone();
    for y in bbox.y0 as usize..bbox.y1 as usize {
        let start = out.index(y, bbox.x0 as usize, 0);
        let end = out.index(y, bbox.x1 as usize - 1, image.channels - 1) + 1;
        out.data[start..end].fill(0.0);
    }
    Ok(out)
}

/// [`mask_subject`] with the sample id carried through for error messages.
pub fn mask_sample(image: &Grid, bbox: &BoundingBox, sample_id: &str) -> Result<ContextImage> {
    let grid = mask_subject(image, bbox).map_err(|e| match e {
        Error::Validation { message, .. } => Error::Validation {
            sample: sample_id.to_string(),
            message,
        },
        other => other,
    })?;
    Ok(ContextImage {
        grid,
        provenance: sample_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_box_zeroes_everything() {
        let g = Grid::filled(3, 4, 2, 1.5);
        let b = BoundingBox::new(0, 0, 4, 3).unwrap();
        assert!(mask_subject(&g, &b).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corner_cell_of_ones() {
        let g = Grid::filled(2, 2, 1, 1.0);
        let b = BoundingBox::new(0, 0, 1, 1).unwrap();
        assert_eq!(mask_subject(&g, &b).unwrap().data, vec![0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn masking_is_idempotent() {
        let g = Grid::new(3, 3, 1, (0..9).map(|v| v as f64).collect()).unwrap();
        let b = BoundingBox::new(1, 0, 3, 2).unwrap();
        let once = mask_subject(&g, &b).unwrap();
        assert_eq!(mask_subject(&once, &b).unwrap(), once);
    }

    #[test]
    fn out_of_bounds_box_rejected() {
        let g = Grid::filled(2, 2, 1, 1.0);
        let b = BoundingBox::new(0, 0, 3, 1).unwrap();
        assert!(matches!(mask_subject(&g, &b), Err(Error::Validation { .. })));
        assert!(matches!(
            mask_sample(&g, &b, "s9"),
            Err(Error::Validation { sample, .. }) if sample == "s9"
        ));
    }

    proptest! {
        #[test]
        fn inside_zero_outside_bit_identical(
            h in 1usize..7, w in 1usize..7, ch in 1usize..3,
            seed in proptest::collection::vec(-1e6f64..1e6, 1..200),
            a in 0u32..7, b in 0u32..7, c in 0u32..7, d in 0u32..7,
        ) {
            let data: Vec<f64> = (0..h * w * ch).map(|i| seed[i % seed.len()] * (i as f64 + 0.5)).collect();
            let g = Grid::new(h, w, ch, data).unwrap();
            let (x0, x1) = (a.min(b) % w as u32, (a.max(b) % w as u32) + 1);
            let (y0, y1) = (c.min(d) % h as u32, (c.max(d) % h as u32) + 1);
            prop_assume!(x0 < x1 && y0 < y1);
            let bbox = BoundingBox::new(x0, y0, x1, y1).unwrap();
            let m = mask_subject(&g, &bbox).unwrap();
            for y in 0..h {
                for x in 0..w {
                    for k in 0..ch {
                        let v = m.get(y, x, k);
                        if bbox.contains(x, y) {
                            prop_assert_eq!(v.to_bits(), 0f64.to_bits());
                        } else {
                            prop_assert_eq!(v.to_bits(), g.get(y, x, k).to_bits());
                        }
                    }
                }
            }
        }
    }
}
