use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::mask::{BBox, Mask};

/// A segmenter proposal: a nonempty mask plus the segmenter's own metadata.
///
/// `area` and `bbox` are derived from the mask and re-checked whenever a
/// segment is deserialized, so a segment from the wire can't disagree with
/// its own mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SegmentJson", into = "SegmentJson")]
pub struct Segment {
    mask: Mask,
    area: usize,
    bbox: BBox,
    backend_score: f64,
    segment_id: String,
}

#[derive(Serialize, Deserialize)]
struct SegmentJson {
    mask: Mask,
    area: usize,
    bbox: BBox,
    backend_score: f64,
    segment_id: String,
}

impl Segment {
    pub fn new(mask: Mask, backend_score: f64, segment_id: impl Into<String>) -> Result<Self, CoreError> {
        let bbox = mask
            .bbox()
            .ok_or_else(|| CoreError::MalformedRuns("segment mask is empty".into()))?;
        if !(0.0..=1.0).contains(&backend_score) {
            return Err(CoreError::MalformedRuns(format!(
                "backend_score {backend_score} outside [0, 1]"
            )));
        }
        let segment_id = segment_id.into();
        if segment_id.is_empty() {
            return Err(CoreError::MalformedRuns("segment_id is empty".into()));
        }
        Ok(Self {
            area: mask.area(),
            mask,
            bbox,
            backend_score,
            segment_id,
        })
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn backend_score(&self) -> f64 {
        self.backend_score
    }

    pub fn id(&self) -> &str {
        &self.segment_id
    }
}

impl TryFrom<SegmentJson> for Segment {
    type Error = CoreError;

    fn try_from(j: SegmentJson) -> Result<Self, Self::Error> {
        let seg = Segment::new(j.mask, j.backend_score, j.segment_id)?;
        if seg.area != j.area {
            return Err(CoreError::MalformedRuns(format!(
                "declared area {} but mask covers {}",
                j.area, seg.area
            )));
        }
        if seg.bbox != j.bbox {
            return Err(CoreError::MalformedRuns(format!(
                "declared bbox {:?} is not the tight box {:?}",
                j.bbox, seg.bbox
            )));
        }
        Ok(seg)
    }
}

impl From<Segment> for SegmentJson {
    fn from(s: Segment) -> Self {
        SegmentJson {
            mask: s.mask,
            area: s.area,
            bbox: s.bbox,
            backend_score: s.backend_score,
            segment_id: s.segment_id,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derives_area_and_bbox() {
        let m = Mask::from_indices(4, 4, [5, 6, 10]).unwrap();
        let s = Segment::new(m, 0.5, "a").unwrap();
        assert_eq!(s.area(), 3);
        assert_eq!(s.bbox(), [1, 1, 3, 3].into());
    }

    #[test]
    fn rejects_inconsistent_wire_form() {
        let ok = r#"{"mask":{"w":4,"h":1,"runs":[[1,2]]},"area":2,"bbox":[1,0,3,1],"backend_score":0.5,"segment_id":"x"}"#;
        assert!(serde_json::from_str::<Segment>(ok).is_ok());
        let bad_area = ok.replace("\"area\":2", "\"area\":3");
        assert!(serde_json::from_str::<Segment>(&bad_area).is_err());
        let bad_box = ok.replace("[1,0,3,1]", "[0,0,3,1]");
        assert!(serde_json::from_str::<Segment>(&bad_box).is_err());
        let bad_score = ok.replace("0.5", "1.5");
        assert!(serde_json::from_str::<Segment>(&bad_score).is_err());
        assert!(Segment::new(Mask::empty(2, 2), 0.1, "e").is_err());
    }
}
