//! Boxes, overlap measures, box regression encoding, the five-way region
//! division, and the sub-region prior templates.
//!
//! Coordinates are continuous (sub-pixel), corner-based `(x1, y1, x2, y2)`
//! with a top-left origin. All geometry here is pure value math and safe to
//! call from any thread.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of adjacency predictions made per anchor: the anchor itself,
/// three vertical stripes, three horizontal stripes and four neighboring
/// squares.
pub const NUM_PRIORS: usize = 11;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid box [{x1},{y1},{x2},{y2}]: corners must be finite with x2 > x1 and y2 > y1")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("decode produced a non-finite box from target ({tx},{ty},{tw},{th})")]
    NonFiniteDecode { tx: f64, ty: f64, tw: f64, th: f64 },
    #[error("prior table must hold exactly {NUM_PRIORS} templates, got {0}")]
    BadPriorCount(usize),
    #[error("prior template at position {position} has index {index}, expected {position}")]
    BadPriorIndex { position: usize, index: usize },
    #[error("prior template 0 must be the identity rect [0,0,1,1] with kind \"self\"")]
    BadSelfPrior,
    #[error("prior table JSON: {0}")]
    PriorTableJson(#[from] serde_json::Error),
}

/// Axis-aligned rectangle in pixel coordinates. The universal geometric
/// currency: anchor regions, ground-truth objects and proposals are all
/// `BBox` values.
///
/// Invariant: `x2 > x1` and `y2 > y1`, all corners finite. Serialized as
/// the JSON array `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        let b = BBox { x1, y1, x2, y2 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(GeometryError::InvalidBox { x1, y1, x2, y2 })
        }
    }

    /// Box from center point and dimensions.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        self.x1.is_finite()
            && self.y1.is_finite()
            && self.x2.is_finite()
            && self.y2.is_finite()
            && self.x2 > self.x1
            && self.y2 > self.y1
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Shorter of the two sides.
    pub fn min_side(&self) -> f64 {
        self.width().min(self.height())
    }

    /// Intersection rectangle, or `None` when the boxes are disjoint or
    /// touch only along an edge.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        if x2 > x1 && y2 > y1 {
            Some(BBox { x1, y1, x2, y2 })
        } else {
            None
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Intersection over union. Symmetric, in `[0, 1]`, zero for disjoint
    /// boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter <= 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// True when `other` lies entirely inside `self` (boundaries allowed).
    pub fn contains(&self, other: &BBox) -> bool {
        other.x1 >= self.x1 && other.y1 >= self.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.x1, self.y1, self.x2, self.y2].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x1, y1, x2, y2] = <[f64; 4]>::deserialize(deserializer)?;
        BBox::new(x1, y1, x2, y2).map_err(D::Error::custom)
    }
}

/// Fast-R-CNN-style box parameterization relative to an anchor:
/// dimensionless center offsets and log-scale factors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegressionTarget {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
}

impl RegressionTarget {
    pub const ZERO: RegressionTarget = RegressionTarget { tx: 0.0, ty: 0.0, tw: 0.0, th: 0.0 };

    pub fn new(tx: f64, ty: f64, tw: f64, th: f64) -> Self {
        RegressionTarget { tx, ty, tw, th }
    }

    pub fn is_finite(&self) -> bool {
        self.tx.is_finite() && self.ty.is_finite() && self.tw.is_finite() && self.th.is_finite()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.tx, self.ty, self.tw, self.th]
    }
}

impl Serialize for RegressionTarget {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RegressionTarget {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [tx, ty, tw, th] = <[f64; 4]>::deserialize(deserializer)?;
        let t = RegressionTarget { tx, ty, tw, th };
        if t.is_finite() {
            Ok(t)
        } else {
            Err(D::Error::custom("regression target components must be finite"))
        }
    }
}

/// Encode `target` relative to `anchor`:
/// `tx = (cx_t - cx_a) / w_a`, `ty = (cy_t - cy_a) / h_a`,
/// `tw = ln(w_t / w_a)`, `th = ln(h_t / h_a)`.
pub fn encode_box(anchor: &BBox, target: &BBox) -> RegressionTarget {
    let (cxa, cya) = anchor.center();
    let (cxt, cyt) = target.center();
    RegressionTarget {
        tx: (cxt - cxa) / anchor.width(),
        ty: (cyt - cya) / anchor.height(),
        tw: (target.width() / anchor.width()).ln(),
        th: (target.height() / anchor.height()).ln(),
    }
}

/// Inverse of [`encode_box`]. Fails when `exp(tw)`/`exp(th)` overflows into
/// a non-finite width or height.
pub fn decode_box(anchor: &BBox, t: &RegressionTarget) -> Result<BBox, GeometryError> {
    let (cxa, cya) = anchor.center();
    let cx = cxa + t.tx * anchor.width();
    let cy = cya + t.ty * anchor.height();
    let w = t.tw.exp() * anchor.width();
    let h = t.th.exp() * anchor.height();
    BBox::from_center(cx, cy, w, h)
        .map_err(|_| GeometryError::NonFiniteDecode { tx: t.tx, ty: t.ty, tw: t.tw, th: t.th })
}

/// Divide a region into five half-size sub-regions: the four corner
/// quadrants (which tile the parent exactly) plus a centered box covering
/// the gap at the parent's center. Each child has a quarter of the parent
/// area.
///
/// Order: top-left, top-right, bottom-left, bottom-right, center.
pub fn divide_region(b: &BBox) -> [BBox; 5] {
    let (cx, cy) = b.center();
    let qw = b.width() / 4.0;
    let qh = b.height() / 4.0;
    [
        BBox { x1: b.x1, y1: b.y1, x2: cx, y2: cy },
        BBox { x1: cx, y1: b.y1, x2: b.x2, y2: cy },
        BBox { x1: b.x1, y1: cy, x2: cx, y2: b.y2 },
        BBox { x1: cx, y1: cy, x2: b.x2, y2: b.y2 },
        BBox { x1: cx - qw, y1: cy - qh, x2: cx + qw, y2: cy + qh },
    ]
}

/// Intersection with the frame `[0, 0, w, h]`, or `None` when the box lies
/// fully outside it.
pub fn clip_to_frame(b: &BBox, w: f64, h: f64) -> Option<BBox> {
    b.intersection(&BBox { x1: 0.0, y1: 0.0, x2: w, y2: h })
}

/// The geometric flavor of a sub-region prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    /// The anchor region itself.
    #[serde(rename = "self")]
    SelfRegion,
    /// Tall sub-region for detecting tall objects.
    VerticalStripe,
    /// Wide sub-region for detecting wide objects.
    HorizontalStripe,
    /// Anchor-sized square shifted by half a side, catching objects that
    /// fall in the gaps between anchors.
    NeighborSquare,
}

/// One of the [`NUM_PRIORS`] sub-region templates, expressed in
/// anchor-normalized coordinates (the anchor mapped to the unit square).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorTemplate {
    pub index: usize,
    pub kind: PriorKind,
    pub rect: BBox,
}

/// Map a template from anchor-normalized coordinates to absolute pixels.
pub fn instantiate_prior(anchor: &BBox, p: &PriorTemplate) -> BBox {
    let w = anchor.width();
    let h = anchor.height();
    BBox {
        x1: anchor.x1 + p.rect.x1 * w,
        y1: anchor.y1 + p.rect.y1 * h,
        x2: anchor.x1 + p.rect.x2 * w,
        y2: anchor.y1 + p.rect.y2 * h,
    }
}

/// The full set of sub-region prior templates used for adjacency
/// prediction. Always exactly [`NUM_PRIORS`] entries with template 0 the
/// identity rect; the rects themselves are swappable via JSON config.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTable {
    templates: Vec<PriorTemplate>,
}

#[derive(Serialize, Deserialize)]
struct PriorTableFile {
    priors: Vec<PriorTemplate>,
}

impl PriorTable {
    /// Build a table from templates, enforcing the table invariants.
    pub fn new(templates: Vec<PriorTemplate>) -> Result<Self, GeometryError> {
        if templates.len() != NUM_PRIORS {
            return Err(GeometryError::BadPriorCount(templates.len()));
        }
        for (position, t) in templates.iter().enumerate() {
            if t.index != position {
                return Err(GeometryError::BadPriorIndex { position, index: t.index });
            }
            if !t.rect.is_valid() {
                return Err(GeometryError::InvalidBox {
                    x1: t.rect.x1,
                    y1: t.rect.y1,
                    x2: t.rect.x2,
                    y2: t.rect.y2,
                });
            }
        }
        let unit = BBox { x1: 0.0, y1: 0.0, x2: 1.0, y2: 1.0 };
        if templates[0].rect != unit || templates[0].kind != PriorKind::SelfRegion {
            return Err(GeometryError::BadSelfPrior);
        }
        Ok(PriorTable { templates })
    }

    pub fn templates(&self) -> &[PriorTemplate] {
        &self.templates
    }

    pub fn get(&self, index: usize) -> &PriorTemplate {
        &self.templates[index]
    }

    /// Parse a table from JSON of the form `{"priors": [...]}`.
    pub fn from_json(json: &str) -> Result<Self, GeometryError> {
        let file: PriorTableFile = serde_json::from_str(json)?;
        PriorTable::new(file.priors)
    }

    pub fn to_json(&self) -> String {
        let file = PriorTableFile { priors: self.templates.clone() };
        serde_json::to_string_pretty(&file).expect("prior table serializes")
    }
}

impl Default for PriorTable {
    /// The default template table: the anchor itself, three 1:3 vertical
    /// stripes, three 3:1 horizontal stripes, and four neighbor squares
    /// half-overlapping the anchor.
    fn default() -> Self {
        let rect = |x1, y1, x2, y2| BBox { x1, y1, x2, y2 };
        let t = |index, kind, rect| PriorTemplate { index, kind, rect };
        use PriorKind::*;
        PriorTable::new(vec![
            t(0, SelfRegion, rect(0.0, 0.0, 1.0, 1.0)),
            t(1, VerticalStripe, rect(0.0, -0.25, 0.5, 1.25)),
            t(2, VerticalStripe, rect(0.25, -0.25, 0.75, 1.25)),
            t(3, VerticalStripe, rect(0.5, -0.25, 1.0, 1.25)),
            t(4, HorizontalStripe, rect(-0.25, 0.0, 1.25, 0.5)),
            t(5, HorizontalStripe, rect(-0.25, 0.25, 1.25, 0.75)),
            t(6, HorizontalStripe, rect(-0.25, 0.5, 1.25, 1.0)),
            t(7, NeighborSquare, rect(-0.5, 0.0, 0.5, 1.0)),
            t(8, NeighborSquare, rect(0.5, 0.0, 1.5, 1.0)),
            t(9, NeighborSquare, rect(0.0, -0.5, 1.0, 0.5)),
            t(10, NeighborSquare, rect(0.0, 0.5, 1.0, 1.5)),
        ])
        .expect("default prior table is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_identity_is_one() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(20.0, 20.0, 30.0, 30.0);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn iou_partial_overlap() {
        // intersection 5x5 = 25, union 100 + 100 - 25 = 175
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(5.0, 5.0, 15.0, 15.0);
        assert!((a.iou(&b) - 25.0 / 175.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_box_rejected() {
        assert!(BBox::new(10.0, 0.0, 10.0, 5.0).is_err());
        assert!(BBox::new(10.0, 0.0, 5.0, 5.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 5.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::INFINITY, 5.0).is_err());
    }

    #[test]
    fn encode_identity_is_zero() {
        let b = bb(5.0, 5.0, 15.0, 15.0);
        assert_eq!(encode_box(&b, &b), RegressionTarget::ZERO);
    }

    #[test]
    fn encode_hand_example() {
        // anchor center (10,10) size 10x10; target center (15,10) size 20x10
        let anchor = bb(5.0, 5.0, 15.0, 15.0);
        let target = bb(5.0, 5.0, 25.0, 15.0);
        let t = encode_box(&anchor, &target);
        assert!((t.tx - 0.5).abs() < 1e-12);
        assert!(t.ty.abs() < 1e-12);
        assert!((t.tw - 2.0f64.ln()).abs() < 1e-12);
        assert!(t.th.abs() < 1e-12);
    }

    #[test]
    fn decode_hand_example() {
        let anchor = bb(5.0, 5.0, 15.0, 15.0);
        let t = RegressionTarget::new(0.5, 0.0, 2.0f64.ln(), 0.0);
        let d = decode_box(&anchor, &t).unwrap();
        let expected = bb(5.0, 5.0, 25.0, 15.0);
        assert!((d.x1 - expected.x1).abs() < 1e-9);
        assert!((d.y1 - expected.y1).abs() < 1e-9);
        assert!((d.x2 - expected.x2).abs() < 1e-9);
        assert!((d.y2 - expected.y2).abs() < 1e-9);
    }

    #[test]
    fn decode_overflow_is_error() {
        let anchor = bb(0.0, 0.0, 10.0, 10.0);
        let t = RegressionTarget::new(0.0, 0.0, 1e4, 0.0);
        assert!(matches!(decode_box(&anchor, &t), Err(GeometryError::NonFiniteDecode { .. })));
    }

    #[test]
    fn divide_hand_example() {
        let parent = bb(0.0, 0.0, 100.0, 100.0);
        let kids = divide_region(&parent);
        assert_eq!(kids[0], bb(0.0, 0.0, 50.0, 50.0));
        assert_eq!(kids[1], bb(50.0, 0.0, 100.0, 50.0));
        assert_eq!(kids[2], bb(0.0, 50.0, 50.0, 100.0));
        assert_eq!(kids[3], bb(50.0, 50.0, 100.0, 100.0));
        assert_eq!(kids[4], bb(25.0, 25.0, 75.0, 75.0));
    }

    #[test]
    fn instantiate_default_table_examples() {
        let table = PriorTable::default();
        let anchor = bb(0.0, 0.0, 100.0, 100.0);
        // template 0 is the anchor itself
        assert_eq!(instantiate_prior(&anchor, table.get(0)), anchor);
        // right-neighbor square
        assert_eq!(instantiate_prior(&anchor, table.get(8)), bb(50.0, 0.0, 150.0, 100.0));
        // center vertical stripe
        assert_eq!(instantiate_prior(&anchor, table.get(2)), bb(25.0, -25.0, 75.0, 125.0));
    }

    #[test]
    fn clip_examples() {
        assert_eq!(
            clip_to_frame(&bb(-10.0, -10.0, 50.0, 50.0), 100.0, 100.0),
            Some(bb(0.0, 0.0, 50.0, 50.0))
        );
        assert_eq!(
            clip_to_frame(&bb(10.0, 10.0, 20.0, 20.0), 100.0, 100.0),
            Some(bb(10.0, 10.0, 20.0, 20.0))
        );
        assert_eq!(clip_to_frame(&bb(-20.0, -20.0, -5.0, -5.0), 100.0, 100.0), None);
    }

    #[test]
    fn prior_table_json_round_trip() {
        let table = PriorTable::default();
        let json = table.to_json();
        let parsed = PriorTable::from_json(&json).unwrap();
        assert_eq!(parsed, table);
    }

    #[test]
    fn prior_table_rejects_wrong_count() {
        let mut templates = PriorTable::default().templates().to_vec();
        templates.pop();
        assert!(matches!(PriorTable::new(templates), Err(GeometryError::BadPriorCount(10))));
    }

    #[test]
    fn prior_table_rejects_non_identity_first() {
        let mut templates = PriorTable::default().templates().to_vec();
        templates[0].rect = bb(0.0, 0.0, 2.0, 1.0);
        assert!(matches!(PriorTable::new(templates), Err(GeometryError::BadSelfPrior)));
    }

    #[test]
    fn bbox_serializes_as_array() {
        let b = bb(1.0, 2.0, 3.0, 4.0);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,2.0,3.0,4.0]");
        let parsed: BBox = serde_json::from_str("[1,2,3,4]").unwrap();
        assert_eq!(parsed, b);
        assert!(serde_json::from_str::<BBox>("[3,2,1,4]").is_err());
    }

    prop_compose! {
        fn arb_box()(x1 in -500.0..500.0f64, y1 in -500.0..500.0f64,
                     w in 1e-3..400.0f64, h in 1e-3..400.0f64) -> BBox {
            BBox { x1, y1, x2: x1 + w, y2: y1 + h }
        }
    }

    proptest! {
        #[test]
        fn iou_axioms(a in arb_box(), b in arb_box()) {
            let ab = a.iou(&b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - b.iou(&a)).abs() < 1e-12);
            prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn encode_decode_round_trip(anchor in arb_box(), target in arb_box()) {
            let t = encode_box(&anchor, &target);
            let d = decode_box(&anchor, &t).unwrap();
            prop_assert!((d.x1 - target.x1).abs() < 1e-9);
            prop_assert!((d.y1 - target.y1).abs() < 1e-9);
            prop_assert!((d.x2 - target.x2).abs() < 1e-9);
            prop_assert!((d.y2 - target.y2).abs() < 1e-9);
        }

        #[test]
        fn divide_children_contained_and_tiling(b in arb_box()) {
            let kids = divide_region(&b);
            prop_assert_eq!(kids.len(), 5);
            for k in &kids {
                prop_assert!(b.contains(k));
                prop_assert!((k.area() - b.area() / 4.0).abs() <= 1e-9 * b.area());
            }
            // quadrants tile the parent: areas sum and they are disjoint
            let quad_area: f64 = kids[..4].iter().map(BBox::area).sum();
            prop_assert!((quad_area - b.area()).abs() <= 1e-9 * b.area());
            for i in 0..4 {
                for j in (i + 1)..4 {
                    prop_assert_eq!(kids[i].intersection(&kids[j]), None);
                }
            }
        }

        #[test]
        fn instantiate_commutes_with_translation_and_scale(
            anchor in arb_box(),
            dx in -100.0..100.0f64,
            dy in -100.0..100.0f64,
            s in 0.1..10.0f64,
            idx in 0usize..NUM_PRIORS,
        ) {
            let table = PriorTable::default();
            let p = table.get(idx);
            let moved = BBox {
                x1: anchor.x1 * s + dx,
                y1: anchor.y1 * s + dy,
                x2: anchor.x2 * s + dx,
                y2: anchor.y2 * s + dy,
            };
            let base = instantiate_prior(&anchor, p);
            let mapped = instantiate_prior(&moved, p);
            let tol = 1e-9 * (1.0 + anchor.x2.abs() + anchor.y2.abs()) * s.max(1.0);
            prop_assert!((mapped.x1 - (base.x1 * s + dx)).abs() < tol);
            prop_assert!((mapped.y1 - (base.y1 * s + dy)).abs() < tol);
            prop_assert!((mapped.x2 - (base.x2 * s + dx)).abs() < tol);
            prop_assert!((mapped.y2 - (base.y2 * s + dy)).abs() < tol);
        }
    }
}
