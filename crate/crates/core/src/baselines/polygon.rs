/// A convex polygon in the plane, vertices in counter-clockwise order.
///
/// Degenerate polygons (segments, points) are allowed; an empty vertex list
/// is the empty set.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<[f64; 2]>,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn project_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return a;
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    lerp(a, b, t)
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

impl ConvexPolygon {
    pub fn from_box(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { vertices: vec![[x_min, y_min], [x_max, y_min], [x_max, y_max], [x_min, y_max]] }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Intersection with the half-plane `n·p ≤ c`.
    pub fn clip(&self, n: [f64; 2], c: f64) -> Self {
        let k = self.vertices.len();
        let mut out = Vec::with_capacity(k + 1);
        for i in 0..k {
            let s = self.vertices[(i + k - 1) % k];
            let e = self.vertices[i];
            let (ds, de) = (dot(n, s) - c, dot(n, e) - c);
            if de <= 0.0 {
                if ds > 0.0 {
                    out.push(lerp(s, e, ds / (ds - de)));
                }
                out.push(e);
            } else if ds <= 0.0 && k > 1 {
                out.push(lerp(s, e, ds / (ds - de)));
            }
        }
        out.dedup();
        if out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
        Self { vertices: out }
    }

    /// Whether `p` lies inside or on the boundary.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self.vertices.len() {
            0 => false,
            1 => self.vertices[0] == p,
            2 => project_on_segment(p, self.vertices[0], self.vertices[1]) == p,
            k => (0..k).all(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % k];
                let e = sub(b, a);
                let w = sub(p, a);
                e[0] * w[1] - e[1] * w[0] >= 0.0
            }),
        }
    }

    /// Euclidean projection of `p`; `p` itself when it is already inside.
    pub fn project(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        if self.vertices.is_empty() {
            return None;
        }
        if self.contains(p) {
            return Some(p);
        }
        let k = self.vertices.len();
        let mut best = self.vertices[0];
        let mut best_d = dist2(p, best);
        for i in 0..k {
            let q = project_on_segment(p, self.vertices[i], self.vertices[(i + 1) % k]);
            let d = dist2(p, q);
            if d < best_d {
                best = q;
                best_d = d;
            }
        }
        Some(best)
    }
}
