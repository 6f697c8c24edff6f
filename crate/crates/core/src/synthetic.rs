//! A toy backbone and a planted dataset whose metric values are known by
//! construction. Used for demos, smoke tests and the `synthetic` perturbed mode.
//!
//! The backbone tiles the image into square cells and describes each cell by
//! the mean RGB of its left half followed by the mean RGB of its right half,
//! scaled by [`FEATURE_SCALE`]. A prototype `m` of the fixture is
//! `FEATURE_SCALE · e_m`; it is matched exactly by a cell whose left (m < 3) or
//! right (m ≥ 3) half is the pure colour channel `m mod 3` and whose other
//! half is black.

use std::collections::BTreeMap;

use crate::error::{shape_err, validation_err, Result};
use crate::grid::{Grid, Image, Mask};
use crate::interchange::{
    Bundle, ModelBundle, PartPoint, PerturbedMode, PerturbedRecord, SampleBundle,
};
use crate::kernel::{FeatureMap, ModelKind, DEFAULT_EPSILON};
use crate::pipeline::{plan_perturbations, SuiteConfig};

pub const FEATURE_SCALE: f64 = 10.0;
pub const FEATURE_DEPTH: usize = 6;
pub const FIXTURE_CLASSES: usize = 3;
pub const FIXTURE_PROTOTYPES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyBackbone {
    /// Cell side in pixels; must be even.
    pub cell: usize,
}

impl ToyBackbone {
    pub fn new(cell: usize) -> Result<Self> {
        if cell < 2 || !cell.is_multiple_of(2) {
            return Err(validation_err!(
                "toy backbone cell size {cell} must be even and >= 2"
            ));
        }
        Ok(ToyBackbone { cell })
    }

    /// Infers the cell size from an image and the feature map it produced.
    pub fn for_dims(image: (usize, usize), features: (usize, usize)) -> Result<Self> {
        let cell = image.0.checked_div(features.0).unwrap_or(0);
        if cell == 0 || image.0 != cell * features.0 || image.1 != cell * features.1 {
            return Err(shape_err!(
                "image {image:?} is not a square tiling of feature grid {features:?}"
            ));
        }
        Self::new(cell)
    }

    pub fn features(&self, image: &Image) -> Result<FeatureMap> {
        let (h, w) = (image.height(), image.width());
        if h % self.cell != 0 || w % self.cell != 0 {
            return Err(shape_err!(
                "{h}x{w} image does not tile into {0}x{0} cells",
                self.cell
            ));
        }
        let (rows, cols) = (h / self.cell, w / self.cell);
        let half = self.cell / 2;
        let norm = (self.cell * half) as f64;
        let mut data = Vec::with_capacity(rows * cols * FEATURE_DEPTH);
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = [0.0; FEATURE_DEPTH];
                for dr in 0..self.cell {
                    for dc in 0..self.cell {
                        let px = image.pixel(r * self.cell + dr, c * self.cell + dc);
                        let offset = if dc < half { 0 } else { 3 };
                        for ch in 0..3 {
                            acc[offset + ch] += px[ch];
                        }
                    }
                }
                data.extend(acc.iter().map(|a| FEATURE_SCALE * a / norm));
            }
        }
        FeatureMap::new(rows, cols, FEATURE_DEPTH, data)
    }

    /// Chroma (max − min channel) of every pixel: an explainer that lights up
    /// exactly the coloured regions, independent of the prototype.
    pub fn saliency(&self, image: &Image) -> Grid {
        Grid::from_fn(image.height(), image.width(), |r, c| {
            let [a, b, d] = image.pixel(r, c);
            a.max(b).max(d) - a.min(b).min(d)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub samples: usize,
    /// Feature grid side (cells per image side).
    pub grid: usize,
    pub cell: usize,
    /// Gray level of the background.
    pub background: f64,
    pub perturbed_mode: PerturbedMode,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            samples: 20,
            grid: 8,
            cell: 4,
            background: 0.2,
            perturbed_mode: PerturbedMode::Synthetic,
        }
    }
}

/// Three classes, six prototypes, one positive weight per prototype.
pub fn fixture_model() -> ModelBundle {
    let prototypes = (0..FIXTURE_PROTOTYPES)
        .map(|m| {
            (0..FEATURE_DEPTH)
                .map(|d| if d == m { FEATURE_SCALE } else { 0.0 })
                .collect()
        })
        .collect();
    ModelBundle {
        kind: ModelKind::ExplicitClassSpecific,
        prototypes: Some(prototypes),
        slot_assignment: None,
        classifier_weights: Grid::from_fn(FIXTURE_CLASSES, FIXTURE_PROTOTYPES, |k, m| {
            if m / 2 == k {
                1.0
            } else {
                0.0
            }
        }),
        class_of_prototype: Some((0..FIXTURE_PROTOTYPES).map(|m| m / 2).collect()),
        epsilon: DEFAULT_EPSILON,
    }
}

/// Cells holding the two planted prototypes of sample `index`.
pub fn planted_cells(index: usize, grid: usize) -> [(usize, usize); 2] {
    [
        (index % grid, (3 * index) % grid),
        ((index + grid / 2) % grid, (3 * index + 5) % grid),
    ]
}

/// Pixel rectangle `(row0, col0, row1, col1)` of the coloured half-cell of prototype `m` at `cell`.
fn coloured_half(m: usize, cell: (usize, usize), size: usize) -> (usize, usize, usize, usize) {
    let half = size / 2;
    let col0 = cell.1 * size + if m < 3 { 0 } else { half };
    (cell.0 * size, col0, cell.0 * size + size, col0 + half)
}

/// Image of a class-`class` sample with its prototypes planted at `cells`.
pub fn planted_image(spec: &FixtureSpec, class: usize, cells: [(usize, usize); 2]) -> Image {
    let side = spec.grid * spec.cell;
    let mut img = Image::from_fn(side, side, |_, _| [spec.background; 3]);
    for (m, cell) in [2 * class, 2 * class + 1].into_iter().zip(cells) {
        // the whole cell goes black, then the coloured half is painted
        for r in 0..spec.cell {
            for c in 0..spec.cell {
                img.set_pixel(cell.0 * spec.cell + r, cell.1 * spec.cell + c, [0.0; 3]);
            }
        }
        let (r0, c0, r1, c1) = coloured_half(m, cell, spec.cell);
        let mut colour = [0.0; 3];
        colour[m % 3] = 1.0;
        for r in r0..r1 {
            for c in c0..c1 {
                img.set_pixel(r, c, colour);
            }
        }
    }
    img
}

/// The planted dataset: class `i mod 3` for sample `i`, object mask and part
/// points on the coloured regions, saliency from [`ToyBackbone::saliency`].
pub fn planted_bundle(spec: &FixtureSpec) -> Result<Bundle> {
    if spec.grid < 2 || !spec.grid.is_multiple_of(2) {
        return Err(validation_err!(
            "fixture grid {} must be even and >= 2",
            spec.grid
        ));
    }
    if !(0.0..=1.0).contains(&spec.background) {
        return Err(validation_err!(
            "background level {} outside [0, 1]",
            spec.background
        ));
    }
    let backbone = ToyBackbone::new(spec.cell)?;
    let model = fixture_model();
    let layer = model.layer();
    let mut samples = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let class = i % FIXTURE_CLASSES;
        let cells = planted_cells(i, spec.grid);
        let image = planted_image(spec, class, cells);
        let features = backbone.features(&image)?;
        let forward = layer.forward(&features)?;
        let saliency = backbone.saliency(&image);
        let side = spec.grid * spec.cell;
        let mut object = vec![false; side * side];
        let mut parts = Vec::new();
        for (m, cell) in [2 * class, 2 * class + 1].into_iter().zip(cells) {
            let (r0, c0, r1, c1) = coloured_half(m, cell, spec.cell);
            for r in r0..r1 {
                for c in c0..c1 {
                    object[r * side + c] = true;
                }
            }
            parts.push(PartPoint {
                part_id: m as u32,
                row: (r0 + r1) as f64 / 2.0,
                col: (c0 + c1) as f64 / 2.0,
                visible: true,
            });
        }
        let saliency_maps: BTreeMap<usize, Grid> = (0..FIXTURE_PROTOTYPES)
            .map(|m| (m, saliency.clone()))
            .collect();
        samples.push(SampleBundle {
            id: format!("planted-{i:03}"),
            image,
            feature_map: Some(features),
            similarity_maps: forward.similarity_maps,
            similarity_scores: forward.similarity_scores,
            saliency_maps,
            object_mask: Some(Mask::new(side, side, object)?),
            parts,
            labels: vec![class],
            output: forward.output,
            perturbed: Vec::<PerturbedRecord>::new(),
        });
    }
    Ok(Bundle {
        dataset_name: "planted".into(),
        class_count: FIXTURE_CLASSES,
        multilabel: false,
        part_vocabulary: (0..FIXTURE_PROTOTYPES as u32).collect(),
        perturbed_mode: spec.perturbed_mode,
        model,
        samples,
    })
}

/// Plays the role of the export adapter for a bundle built on the toy
/// backbone: runs every planned perturbation through the backbone and attaches
/// the resulting entries in the requested mode (`Regenerate` stores perturbed
/// feature maps, `Bundle` stores maps, scores and outputs).
pub fn attach_perturbed_records(
    bundle: &mut Bundle,
    config: &SuiteConfig,
    mode: PerturbedMode,
) -> Result<()> {
    if mode == PerturbedMode::Synthetic {
        bundle.perturbed_mode = mode;
        return Ok(());
    }
    let (planned, _) = plan_perturbations(bundle, config);
    let layer_model = bundle.model.clone();
    let layer = layer_model.layer();
    for item in planned {
        let sample = bundle
            .samples
            .iter_mut()
            .find(|s| s.id == item.sample_id)
            .expect("planned sample exists");
        let fm = sample
            .feature_map
            .as_ref()
            .ok_or_else(|| validation_err!("sample {} has no feature map", sample.id))?;
        let backbone = ToyBackbone::for_dims(
            (sample.image.height(), sample.image.width()),
            (fm.height(), fm.width()),
        )?;
        let features = backbone.features(&item.image)?;
        let saliency = item.prototype.map(|_| backbone.saliency(&item.image));
        let record = match mode {
            PerturbedMode::Regenerate => PerturbedRecord {
                protocol: item.protocol,
                prototype: item.prototype,
                feature_map: Some(features),
                similarity_maps: None,
                similarity_scores: None,
                output: None,
                saliency_map: saliency,
            },
            _ => {
                let forward = layer.forward(&features)?;
                PerturbedRecord {
                    protocol: item.protocol,
                    prototype: item.prototype,
                    feature_map: None,
                    similarity_maps: Some(forward.similarity_maps),
                    similarity_scores: Some(forward.similarity_scores),
                    output: Some(forward.output),
                    saliency_map: saliency,
                }
            }
        };
        sample
            .perturbed
            .retain(|r| !(r.protocol == record.protocol && r.prototype == record.prototype));
        sample.perturbed.push(record);
    }
    bundle.perturbed_mode = mode;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_cell_reproduces_its_prototype() {
        let spec = FixtureSpec::default();
        let cells = planted_cells(4, spec.grid);
        let img = planted_image(&spec, 1, cells);
        let fm = ToyBackbone::new(spec.cell).unwrap().features(&img).unwrap();
        let expect =
            |m: usize| -> Vec<f64> { (0..6).map(|d| if d == m { 10.0 } else { 0.0 }).collect() };
        assert_eq!(fm.cell(cells[0].0, cells[0].1), expect(2).as_slice());
        assert_eq!(fm.cell(cells[1].0, cells[1].1), expect(3).as_slice());
        let bg = if cells.contains(&(0, 1)) {
            (1, 1)
        } else {
            (0, 1)
        };
        assert!(fm.cell(bg.0, bg.1).iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn planted_cells_are_distinct() {
        for i in 0..50 {
            let [a, b] = planted_cells(i, 8);
            assert_ne!(a, b);
        }
    }

    #[test]
    fn fixture_validates_and_classifies() {
        let bundle = planted_bundle(&FixtureSpec {
            samples: 6,
            ..Default::default()
        })
        .unwrap();
        bundle.validate().unwrap();
        for s in &bundle.samples {
            let pred = crate::metrics::predicted_class(&s.output);
            assert_eq!(vec![pred], s.labels);
        }
    }

    #[test]
    fn attached_records_validate_in_both_modes() {
        for mode in [PerturbedMode::Regenerate, PerturbedMode::Bundle] {
            let mut b = planted_bundle(&FixtureSpec {
                samples: 2,
                ..Default::default()
            })
            .unwrap();
            attach_perturbed_records(&mut b, &SuiteConfig::default(), mode).unwrap();
            assert_eq!(b.perturbed_mode, mode);
            assert_eq!(b.samples[0].perturbed.len(), 6);
            b.validate().unwrap();
        }
    }

    #[test]
    fn backbone_rejects_bad_tiling() {
        assert!(ToyBackbone::new(3).is_err());
        let img = Image::from_fn(6, 6, |_, _| [0.0; 3]);
        assert!(ToyBackbone::new(4).unwrap().features(&img).is_err());
        assert_eq!(ToyBackbone::for_dims((32, 32), (8, 8)).unwrap().cell, 4);
        assert!(ToyBackbone::for_dims((32, 32), (8, 4)).is_err());
    }
}
