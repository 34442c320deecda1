//! Scene graphs: objects with class labels and boxes, plus predicate edges.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use thiserror::Error;

pub type ObjectId = u32;
pub type ClassId = usize;
pub type PredicateId = usize;

/// Axis-aligned box in normalized image coordinates, `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
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

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        let inter = w * h;
        inter / (self.area() + other.area() - inter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneObject {
    pub id: ObjectId,
    pub label: ClassId,
    pub bbox: BBox,
}

/// A `(subject, predicate, object)` edge between object ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Relation {
    pub subject: ObjectId,
    pub object: ObjectId,
    pub predicate: PredicateId,
}

impl Relation {
    pub fn new(subject: ObjectId, object: ObjectId, predicate: PredicateId) -> Self {
        Self {
            subject,
            object,
            predicate,
        }
    }
}

/// Class-level triplet `(subject class, predicate, object class)`.
pub type ClassTriplet = (ClassId, PredicateId, ClassId);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("relation references unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("relation links object {0} to itself")]
    SelfLoop(ObjectId),
    #[error("duplicate relation ({}, {}, {})", .0.subject, .0.predicate, .0.object)]
    Duplicate(Relation),
    #[error("duplicate object id {0}")]
    DuplicateObject(ObjectId),
    #[error("object {0} has an invalid box")]
    InvalidBox(ObjectId),
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneGraph {
    pub objects: Vec<SceneObject>,
    pub relations: Vec<Relation>,
}

impl SceneGraph {
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return Err(GraphError::DuplicateObject(o.id));
            }
            if !o.bbox.is_valid() {
                return Err(GraphError::InvalidBox(o.id));
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.relations {
            for id in [r.subject, r.object] {
                if !ids.contains(&id) {
                    return Err(GraphError::UnknownObject(id));
                }
            }
            if r.subject == r.object {
                return Err(GraphError::SelfLoop(r.subject));
            }
            if !seen.insert(*r) {
                return Err(GraphError::Duplicate(*r));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn label(&self, id: ObjectId) -> Option<ClassId> {
        self.object(id).map(|o| o.label)
    }

    pub fn class_triplet(&self, r: &Relation) -> Option<ClassTriplet> {
        Some((self.label(r.subject)?, r.predicate, self.label(r.object)?))
    }

    /// Distinct ordered `(subject, object)` pairs carrying at least one relation.
    pub fn pairs(&self) -> BTreeSet<(ObjectId, ObjectId)> {
        self.relations.iter().map(|r| (r.subject, r.object)).collect()
    }
}
