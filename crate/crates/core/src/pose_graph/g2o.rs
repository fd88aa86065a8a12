//! Plain-text graph files in the `VERTEX_SE3:QUAT` / `EDGE_SE3:QUAT` layout.
//!
//! Quaternions are written `qx qy qz qw`; the 21 information entries are the
//! upper triangle of the 6×6 matrix in row-major order. Unknown tags are
//! skipped so files from other tools load as long as they hold SE3 records.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{Matrix6, Quaternion, UnitQuaternion, Vector3};

use super::{EdgeKind, PoseGraph};
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, PartialEq)]
pub struct G2oVertex {
    pub id: usize,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2oEdge {
    pub from: usize,
    pub to: usize,
    pub relative: Pose,
    pub information: Matrix6<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct G2oDocument {
    pub vertices: Vec<G2oVertex>,
    pub edges: Vec<G2oEdge>,
}

impl G2oDocument {
    pub fn from_graph(graph: &PoseGraph) -> Self {
        Self {
            vertices: graph
                .nodes()
                .iter()
                .map(|n| G2oVertex { id: n.id, pose: n.pose })
                .collect(),
            edges: graph
                .edges()
                .iter()
                .map(|e| G2oEdge {
                    from: e.from,
                    to: e.to,
                    relative: e.relative,
                    information: e.information,
                })
                .collect(),
        }
    }
}

fn push_pose(line: &mut String, p: &Pose) {
    let q = p.orientation.quaternion();
    for v in [p.position.x, p.position.y, p.position.z, q.i, q.j, q.k, q.w] {
        let _ = write!(line, " {v:?}");
    }
}

/// Writes vertices, `FIX` records for the gauge and then edges. Loop edges
/// are preceded by a `# loop` comment.
pub fn write_graph<W: Write>(graph: &PoseGraph, mut out: W) -> Result<()> {
    for n in graph.nodes() {
        let mut line = format!("VERTEX_SE3:QUAT {}", n.id);
        push_pose(&mut line, &n.pose);
        writeln!(out, "{line}")?;
    }
    for id in graph.fixed() {
        writeln!(out, "FIX {id}")?;
    }
    for e in graph.edges() {
        if e.kind == EdgeKind::Loop {
            writeln!(out, "# loop")?;
        }
        writeln!(out, "{}", render_edge(e.from, e.to, &e.relative, &e.information))?;
    }
    Ok(())
}

pub fn render_edge(from: usize, to: usize, relative: &Pose, info: &Matrix6<f64>) -> String {
    let mut line = format!("EDGE_SE3:QUAT {from} {to}");
    push_pose(&mut line, relative);
    for r in 0..6 {
        for c in r..6 {
            let _ = write!(line, " {:?}", info[(r, c)]);
        }
    }
    line
}

pub fn write_document<W: Write>(doc: &G2oDocument, mut out: W) -> Result<()> {
    for v in &doc.vertices {
        let mut line = format!("VERTEX_SE3:QUAT {}", v.id);
        push_pose(&mut line, &v.pose);
        writeln!(out, "{line}")?;
    }
    for e in &doc.edges {
        writeln!(out, "{}", render_edge(e.from, e.to, &e.relative, &e.information))?;
    }
    Ok(())
}

struct Fields<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn next_token(&mut self, what: &str) -> Result<&'a str> {
        self.tokens
            .next()
            .ok_or_else(|| Error::parse(self.line, "", format!("missing {what}")))
    }

    fn float(&mut self, what: &str) -> Result<f64> {
        let tok = self.next_token(what)?;
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::parse(self.line, tok, format!("bad {what}"))),
        }
    }

    fn index(&mut self, what: &str) -> Result<usize> {
        let tok = self.next_token(what)?;
        tok.parse::<usize>()
            .map_err(|_| Error::parse(self.line, tok, format!("bad {what}")))
    }

    fn pose(&mut self) -> Result<Pose> {
        let mut v = [0.0; 7];
        for (k, name) in ["x", "y", "z", "qx", "qy", "qz", "qw"].iter().enumerate() {
            v[k] = self.float(name)?;
        }
        let q = Quaternion::new(v[6], v[3], v[4], v[5]);
        if q.norm() < 1e-12 {
            return Err(Error::parse(self.line, "", "zero quaternion"));
        }
        // Near-unit input is kept bit-exact so files round-trip.
        let orientation = if (q.norm() - 1.0).abs() <= 1e-9 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Pose {
            position: Vector3::new(v[0], v[1], v[2]),
            orientation,
        })
    }
}

pub fn read_document<R: BufRead>(input: R) -> Result<G2oDocument> {
    let mut doc = G2oDocument::default();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        let mut f = Fields {
            line: k + 1,
            tokens: line.split_whitespace(),
        };
        match f.tokens.next() {
            Some("VERTEX_SE3:QUAT") => {
                let id = f.index("vertex id")?;
                let pose = f.pose()?;
                doc.vertices.push(G2oVertex { id, pose });
            }
            Some("EDGE_SE3:QUAT") => {
                let from = f.index("edge source")?;
                let to = f.index("edge target")?;
                let relative = f.pose()?;
                let mut information = Matrix6::zeros();
                for r in 0..6 {
                    for c in r..6 {
                        let v = f.float("information entry")?;
                        information[(r, c)] = v;
                        information[(c, r)] = v;
                    }
                }
                doc.edges.push(G2oEdge {
                    from,
                    to,
                    relative,
                    information,
                });
            }
            _ => continue,
        }
        if let Some(extra) = f.tokens.next() {
            return Err(Error::parse(k + 1, extra, "trailing token"));
        }
    }
    Ok(doc)
}
