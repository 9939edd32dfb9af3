//! Parser for the subset of URDF needed to build a morphology graph and the
//! per-leg rigid-body models: links with inertial data, and revolute,
//! continuous, or fixed joints. Meshes, limits, transmissions and `mimic`
//! tags are ignored.

use std::collections::{HashMap, HashSet};

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::MorphologyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    /// kg
    pub mass: f64,
    /// Rotational inertia about the center of mass, expressed in the link frame.
    pub inertia: Matrix3<f64>,
    /// Center of mass in the link frame (m).
    pub com_offset: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent_link: String,
    pub child_link: String,
    pub origin_translation: Vector3<f64>,
    /// Roll, pitch, yaw (rad), applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub origin_rotation: Vector3<f64>,
    /// Unit rotation axis in the joint frame; unused for fixed joints.
    pub axis: Vector3<f64>,
}

impl Joint {
    pub fn origin_rotation_matrix(&self) -> Matrix3<f64> {
        rpy_matrix(&self.origin_rotation)
    }
}

pub(crate) fn rpy_matrix(rpy: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::from_euler_angles(rpy.x, rpy.y, rpy.z).into_inner()
}

/// A parsed kinematic tree. Joints keep document order.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
}

impl RobotModel {
    pub fn link(&self, name: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.name == name)
    }

    pub fn joint(&self, name: &str) -> Option<&Joint> {
        self.joints.iter().find(|j| j.name == name)
    }

    /// The joint whose child is `link`, if any.
    pub fn parent_joint(&self, link: &str) -> Option<&Joint> {
        self.joints.iter().find(|j| j.child_link == link)
    }

    pub fn child_joints<'a>(&'a self, link: &'a str) -> impl Iterator<Item = &'a Joint> + 'a {
        self.joints.iter().filter(move |j| j.parent_link == link)
    }

    /// Links that are not the child of any joint.
    pub fn roots(&self) -> Vec<&Link> {
        let children: HashSet<&str> = self.joints.iter().map(|j| j.child_link.as_str()).collect();
        self.links
            .iter()
            .filter(|l| !children.contains(l.name.as_str()))
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    /// Checks the tree invariants: unique names, known endpoints, one root,
    /// every link reachable, unit revolute axes.
    pub fn validate(&self) -> Result<(), MorphologyError> {
        let mut names = HashSet::new();
        for l in &self.links {
            if !names.insert(l.name.as_str()) {
                return Err(MorphologyError::DuplicateName(l.name.clone()));
            }
        }
        let mut jnames = HashSet::new();
        for j in &self.joints {
            if !jnames.insert(j.name.as_str()) {
                return Err(MorphologyError::DuplicateName(j.name.clone()));
            }
            for end in [&j.parent_link, &j.child_link] {
                if !names.contains(end.as_str()) {
                    return Err(MorphologyError::UnknownLink {
                        joint: j.name.clone(),
                        link: end.clone(),
                    });
                }
            }
            if j.kind == JointKind::Revolute && (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(MorphologyError::BadAxis(j.name.clone()));
            }
        }
        let mut child_count: HashMap<&str, usize> = HashMap::new();
        for j in &self.joints {
            *child_count.entry(j.child_link.as_str()).or_default() += 1;
            if *child_count.get(j.child_link.as_str()).unwrap() > 1 {
                return Err(MorphologyError::DisconnectedTree(format!(
                    "link '{}' has more than one parent joint",
                    j.child_link
                )));
            }
        }
        let roots = self.roots();
        if roots.len() != 1 {
            return Err(MorphologyError::DisconnectedTree(format!(
                "expected exactly one root link, found {}",
                roots.len()
            )));
        }
        let mut seen = HashSet::new();
        let mut stack = vec![roots[0].name.as_str()];
        while let Some(l) = stack.pop() {
            if !seen.insert(l) {
                return Err(MorphologyError::DisconnectedTree(format!("cycle through link '{l}'")));
            }
            stack.extend(self.child_joints(l).map(|j| j.child_link.as_str()));
        }
        if seen.len() != self.links.len() {
            return Err(MorphologyError::DisconnectedTree(
                "some links are unreachable from the root".into(),
            ));
        }
        Ok(())
    }
}

fn parse_vec3(s: Option<&str>, default: Vector3<f64>) -> Result<Vector3<f64>, MorphologyError> {
    let Some(s) = s else { return Ok(default) };
    let parts: Vec<f64> = s
        .split_whitespace()
        .map(|p| p.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| MorphologyError::MalformedXml(format!("bad number in '{s}': {e}")))?;
    if parts.len() != 3 {
        return Err(MorphologyError::MalformedXml(format!("expected 3 components in '{s}'")));
    }
    Ok(Vector3::new(parts[0], parts[1], parts[2]))
}

fn parse_f64(node: roxmltree::Node, attr: &str) -> Result<f64, MorphologyError> {
    match node.attribute(attr) {
        None => Ok(0.0),
        Some(v) => v
            .trim()
            .parse()
            .map_err(|e| MorphologyError::MalformedXml(format!("bad '{attr}'='{v}': {e}"))),
    }
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn parse_link(node: roxmltree::Node) -> Result<Link, MorphologyError> {
    let name = node
        .attribute("name")
        .ok_or_else(|| MorphologyError::MalformedXml("link without a name".into()))?
        .to_string();
    let mut link = Link {
        name,
        mass: 0.0,
        inertia: Matrix3::zeros(),
        com_offset: Vector3::zeros(),
    };
    if let Some(inertial) = child(node, "inertial") {
        if let Some(m) = child(inertial, "mass") {
            link.mass = parse_f64(m, "value")?;
        }
        let mut rot = Matrix3::identity();
        if let Some(o) = child(inertial, "origin") {
            link.com_offset = parse_vec3(o.attribute("xyz"), Vector3::zeros())?;
            rot = rpy_matrix(&parse_vec3(o.attribute("rpy"), Vector3::zeros())?);
        }
        if let Some(i) = child(inertial, "inertia") {
            let (xx, xy, xz) = (parse_f64(i, "ixx")?, parse_f64(i, "ixy")?, parse_f64(i, "ixz")?);
            let (yy, yz, zz) = (parse_f64(i, "iyy")?, parse_f64(i, "iyz")?, parse_f64(i, "izz")?);
            let local = Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz);
            link.inertia = rot * local * rot.transpose();
        }
    }
    Ok(link)
}

fn parse_joint(node: roxmltree::Node) -> Result<Joint, MorphologyError> {
    let name = node
        .attribute("name")
        .ok_or_else(|| MorphologyError::MalformedXml("joint without a name".into()))?
        .to_string();
    let kind = match node.attribute("type") {
        Some("revolute") | Some("continuous") => JointKind::Revolute,
        Some("fixed") => JointKind::Fixed,
        _ => return Err(MorphologyError::UnsupportedJointType(name)),
    };
    let endpoint = |tag: &str| -> Result<String, MorphologyError> {
        child(node, tag)
            .and_then(|c| c.attribute("link"))
            .map(str::to_string)
            .ok_or_else(|| MorphologyError::MalformedXml(format!("joint '{name}' lacks <{tag}>")))
    };
    let parent_link = endpoint("parent")?;
    let child_link = endpoint("child")?;
    let (origin_translation, origin_rotation) = match child(node, "origin") {
        Some(o) => (
            parse_vec3(o.attribute("xyz"), Vector3::zeros())?,
            parse_vec3(o.attribute("rpy"), Vector3::zeros())?,
        ),
        None => (Vector3::zeros(), Vector3::zeros()),
    };
    let mut axis = match child(node, "axis") {
        Some(a) => parse_vec3(a.attribute("xyz"), Vector3::x())?,
        None => Vector3::x(),
    };
    if kind == JointKind::Revolute {
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(MorphologyError::BadAxis(name));
        }
        axis /= n;
    }
    Ok(Joint {
        name,
        kind,
        parent_link,
        child_link,
        origin_translation,
        origin_rotation,
        axis,
    })
}

/// Parses URDF text into a validated [`RobotModel`].
pub fn parse_urdf(text: &str) -> Result<RobotModel, MorphologyError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| MorphologyError::MalformedXml(e.to_string()))?;
    let robot = doc.root_element();
    if !robot.has_tag_name("robot") {
        return Err(MorphologyError::MalformedXml(format!(
            "root element is <{}>, expected <robot>",
            robot.tag_name().name()
        )));
    }
    let name = robot.attribute("name").unwrap_or("").to_string();
    let mut links = Vec::new();
    let mut joints = Vec::new();
    for node in robot.children().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "link" => links.push(parse_link(node)?),
            "joint" => joints.push(parse_joint(node)?),
            _ => {}
        }
    }
    let model = RobotModel { name, links, joints };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_link_robot() {
        let m = parse_urdf(r#"<robot name="r"><link name="base"/></robot>"#).unwrap();
        assert_eq!(m.links.len(), 1);
        assert!(m.joints.is_empty());
        assert_eq!(m.roots()[0].name, "base");
    }

    #[test]
    fn rejects_prismatic() {
        let text = r#"<robot name="r"><link name="a"/><link name="b"/>
            <joint name="slide" type="prismatic"><parent link="a"/><child link="b"/></joint></robot>"#;
        assert_eq!(
            parse_urdf(text),
            Err(MorphologyError::UnsupportedJointType("slide".into()))
        );
    }

    #[test]
    fn continuous_is_revolute_and_axis_normalized() {
        let text = r#"<robot name="r"><link name="a"/><link name="b"/>
            <joint name="j" type="continuous"><parent link="a"/><child link="b"/><axis xyz="0 0 2"/></joint></robot>"#;
        let m = parse_urdf(text).unwrap();
        assert_eq!(m.joints[0].kind, JointKind::Revolute);
        assert!((m.joints[0].axis - Vector3::z()).norm() < 1e-15);
    }

    #[test]
    fn malformed_and_structural_errors() {
        assert!(matches!(parse_urdf("<robot"), Err(MorphologyError::MalformedXml(_))));
        assert!(matches!(parse_urdf("<model/>"), Err(MorphologyError::MalformedXml(_))));
        let dup = r#"<robot name="r"><link name="a"/><link name="a"/></robot>"#;
        assert_eq!(parse_urdf(dup), Err(MorphologyError::DuplicateName("a".into())));
        let two_roots = r#"<robot name="r"><link name="a"/><link name="b"/></robot>"#;
        assert!(matches!(parse_urdf(two_roots), Err(MorphologyError::DisconnectedTree(_))));
        let unknown = r#"<robot name="r"><link name="a"/>
            <joint name="j" type="fixed"><parent link="a"/><child link="zz"/></joint></robot>"#;
        assert!(matches!(parse_urdf(unknown), Err(MorphologyError::UnknownLink { .. })));
    }

    #[test]
    fn inertia_rotated_into_link_frame() {
        let text = r#"<robot name="r"><link name="a"><inertial>
            <origin xyz="0.1 0 0" rpy="0 0 1.5707963267948966"/><mass value="2"/>
            <inertia ixx="1" ixy="0" ixz="0" iyy="2" iyz="0" izz="3"/></inertial></link></robot>"#;
        let m = parse_urdf(text).unwrap();
        let l = &m.links[0];
        assert_eq!(l.mass, 2.0);
        assert!((l.inertia[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((l.inertia[(1, 1)] - 1.0).abs() < 1e-12);
        assert!((l.com_offset.x - 0.1).abs() < 1e-15);
    }
}
