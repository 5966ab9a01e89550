//! Simple polygons and the area of the symmetric difference of their
//! interiors.
//!
//! `|Ω₁ ∩ Ω₂|` is computed as a boundary integral: every edge of each polygon
//! is split at all its contacts with the other polygon, and a piece
//! contributes its shoelace term when it lies inside the other polygon.
//! Pieces lying on a common edge count once if both boundaries run the same
//! way and not at all otherwise. Orientation tests use exact predicates.

use robust::{orient2d, Coord};

use crate::error::{Error, Result};
use crate::geometry::{ClosedCurve, Vec2};

/// Closed polygon without self-intersections, stored counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplePolygon {
    vertices: Vec<Vec2>,
}

fn coord(p: Vec2) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    orient2d(coord(a), coord(b), coord(c))
}

/// `p` on segment `[a, b]`, given that the three points are collinear.
fn within_collinear(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_touch(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && within_collinear(a, b, c))
        || (o2 == 0.0 && within_collinear(a, b, d))
        || (o3 == 0.0 && within_collinear(c, d, a))
        || (o4 == 0.0 && within_collinear(c, d, b))
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
}

impl SimplePolygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::TooFewNodes(n));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("polygon vertex {p:?}")));
        }
        let edge = |i: usize| (vertices[i], vertices[(i + 1) % n]);
        for i in 0..n {
            let (a, b) = edge(i);
            if a == b {
                return Err(Error::DegenerateEdge { edge: i, length: 0.0 });
            }
            for j in i + 1..n {
                let (c, d) = edge(j);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // consecutive edges share one vertex; they must not fold back
                    let (shared, p, q) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                    if orient(p, shared, q) == 0.0 && (p - shared).dot(q - shared) > 0.0 {
                        return Err(Error::NonSimpleInput(i, j));
                    }
                    if n == 3 {
                        continue;
                    }
                    // the far endpoints must not touch the other edge
                    let touches = if j == i + 1 {
                        (orient(c, d, a) == 0.0 && within_collinear(c, d, a))
                            || (orient(a, b, d) == 0.0 && within_collinear(a, b, d))
                    } else {
                        (orient(c, d, b) == 0.0 && within_collinear(c, d, b))
                            || (orient(a, b, c) == 0.0 && within_collinear(a, b, c))
                    };
                    if touches {
                        return Err(Error::NonSimpleInput(i, j));
                    }
                } else if segments_touch(a, b, c, d) {
                    return Err(Error::NonSimpleInput(i, j));
                }
            }
        }
        let mut vertices = vertices;
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Ok(SimplePolygon { vertices })
    }

    pub fn from_curve(curve: &ClosedCurve) -> Result<Self> {
        Self::new(curve.nodes().to_vec())
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Nonzero winding number test; boundary points count as outside.
    pub fn contains(&self, p: Vec2) -> bool {
        let mut winding = 0i32;
        for (a, b) in self.edges() {
            if a.y <= p.y {
                if b.y > p.y && orient(a, b, p) > 0.0 {
                    winding += 1;
                }
            } else if b.y <= p.y && orient(a, b, p) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Overlap {
    None,
    Same,
    Opposite,
}

/// Shoelace contribution of the parts of `p`'s boundary inside `q`.
fn boundary_inside(p: &SimplePolygon, q: &SimplePolygon, origin: Vec2, count_shared: bool) -> f64 {
    let mut total = 0.0;
    for (a, b) in p.edges() {
        let ab = b - a;
        let ab2 = ab.norm_squared();
        let param = |x: Vec2| (x - a).dot(ab) / ab2;
        let mut cuts = vec![0.0, 1.0];
        for (c, d) in q.edges() {
            let o1 = orient(c, d, a);
            let o2 = orient(c, d, b);
            let o3 = orient(a, b, c);
            let o4 = orient(a, b, d);
            if (o1 > 0.0 && o2 > 0.0) || (o1 < 0.0 && o2 < 0.0) || (o3 > 0.0 && o4 > 0.0) || (o3 < 0.0 && o4 < 0.0) {
                continue;
            }
            if o1 == 0.0 && o2 == 0.0 {
                cuts.push(param(c));
                cuts.push(param(d));
            } else if o3 == 0.0 {
                cuts.push(param(c));
            } else if o4 == 0.0 {
                cuts.push(param(d));
            } else if o1 != 0.0 && o2 != 0.0 {
                cuts.push(o1 / (o1 - o2));
            }
        }
        cuts.retain(|t| (0.0..=1.0).contains(t));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let point = |t: f64| {
            if t == 0.0 {
                a
            } else if t == 1.0 {
                b
            } else {
                a + ab * t
            }
        };
        for w in cuts.windows(2) {
            let (s, e) = (point(w[0]), point(w[1]));
            if s == e {
                continue;
            }
            let mid = a + ab * (0.5 * (w[0] + w[1]));
            let mut overlap = Overlap::None;
            for (c, d) in q.edges() {
                if orient(c, d, a) == 0.0 && orient(c, d, b) == 0.0 {
                    let cd = d - c;
                    let tm = (mid - c).dot(cd) / cd.norm_squared();
                    if tm > 0.0 && tm < 1.0 {
                        overlap = if cd.dot(ab) > 0.0 {
                            Overlap::Same
                        } else {
                            Overlap::Opposite
                        };
                        break;
                    }
                }
            }
            let include = match overlap {
                Overlap::Same => count_shared,
                Overlap::Opposite => false,
                Overlap::None => q.contains(mid),
            };
            if include {
                total += 0.5 * (s - origin).cross(e - origin);
            }
        }
    }
    total
}

/// `|Ω₁ ∩ Ω₂|` for two simple polygons.
pub fn intersection_area(p1: &SimplePolygon, p2: &SimplePolygon) -> f64 {
    // shoelace terms are taken about a nearby origin to limit cancellation
    let origin = p1.vertices()[0];
    let area = boundary_inside(p1, p2, origin, true) + boundary_inside(p2, p1, origin, false);
    area.max(0.0)
}

/// `M(Γ₁, Γ₂) = 2|Ω₁ ∪ Ω₂| - |Ω₁| - |Ω₂| = |Ω₁ △ Ω₂|`.
pub fn manifold_distance(p1: &SimplePolygon, p2: &SimplePolygon) -> f64 {
    // the two area evaluations round differently even for equal input
    if p1.vertices() == p2.vertices() {
        return 0.0;
    }
    (p1.area() + p2.area() - 2.0 * intersection_area(p1, p2)).max(0.0)
}
