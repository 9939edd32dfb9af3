//! Robot descriptions and the heterogeneous morphology graph built from them.
//!
//! Nodes are the base body, the actuated joints, and the feet; edges are the
//! links between them. Each edge carries a relation given by the ordered pair
//! of its endpoint node types.

mod graph;
mod urdf;

pub use graph::{build_graph, leg_automorphisms, Edge, GraphDump, MorphologyGraph, Node, NodeType, Relation};
pub use urdf::{parse_urdf, Joint, JointKind, Link, RobotModel};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorphologyError {
    #[error("malformed robot description: {0}")]
    MalformedXml(String),
    #[error("unsupported joint type for joint '{0}'")]
    UnsupportedJointType(String),
    #[error("kinematic tree is not a single connected tree: {0}")]
    DisconnectedTree(String),
    #[error("duplicate name '{0}'")]
    DuplicateName(String),
    #[error("joint '{joint}' references unknown link '{link}'")]
    UnknownLink { joint: String, link: String },
    #[error("revolute joint '{0}' has a degenerate axis")]
    BadAxis(String),
    #[error("no foot frame found (no leaf fixed joint below an actuated joint)")]
    NoFootFound,
    #[error("cannot determine a unique base link")]
    AmbiguousBase,
    #[error("invalid graph document: {0}")]
    BadGraph(String),
}

/// The quadruped description used by tests, examples and the data generator.
pub const A1_LIKE_URDF: &str = include_str!("../../fixtures/a1_like.urdf");
