//! Differentiable soft silhouette rasterizer.
//!
//! Each triangle contributes `α = s·w(d/τ)·σ(d/τ)` at a pixel center, where
//! `d` is a signed distance (positive inside), `w` is a C² taper that reaches
//! zero at `d = -5τ` and `s` fades out projected triangles that are both
//! small and thin relative to τ, so a face turning edge-on leaves the image
//! smoothly. Occupancy is `1 - Π(1 - α)`.

use crate::diff::Vec3;
use crate::error::{ensure, Error, Result};
use crate::render::camera::{Camera, MIN_DEPTH};
use crate::render::image::SilhouetteImage;

/// Support radius of a triangle's influence, in units of τ.
pub const CUTOFF: f64 = 5.0;
const TAPER_START: f64 = -4.0;
/// Exponent of the soft minimum over edge distances inside a triangle.
const SOFT_MIN_POWER: i32 = 8;
/// Twice-area (in units of τ²) below which a triangle counts as small.
const SLIVER_AREA: f64 = 3.0;
/// Width `2·area / √Σ edge²` (in units of τ) below which a triangle counts
/// as thin. Measuring thinness against τ rather than the triangle's own size
/// keeps the fade as smooth as the blur for tiny triangles.
const SLIVER_WIDTH: f64 = 1.0;

#[derive(Clone, Copy)]
struct Edge {
    a: [f64; 2],
    e: [f64; 2],
    len: f64,
    // Sign making the distance positive on the interior side.
    orient: f64,
    /// Unit normal pointing inside (zero for a degenerate edge).
    n: [f64; 2],
    inv_len2: f64,
}

impl Edge {
    fn new(a: [f64; 2], b: [f64; 2], orient: f64) -> Self {
        let e = [b[0] - a[0], b[1] - a[1]];
        let len2 = e[0] * e[0] + e[1] * e[1];
        let len = len2.sqrt();
        let (n, inv_len2) =
            if len2 > 0.0 { ([-orient * e[1] / len, orient * e[0] / len], 1.0 / len2) } else { ([0.0; 2], 0.0) };
        Self { a, e, len, orient, n, inv_len2 }
    }

    #[inline]
    fn line_distance(&self, p: [f64; 2]) -> f64 {
        self.n[0] * (p[0] - self.a[0]) + self.n[1] * (p[1] - self.a[1])
    }

    /// Distance to the segment plus the clamped parameter of the closest point.
    #[inline]
    fn segment_distance(&self, p: [f64; 2]) -> (f64, f64) {
        let q = [p[0] - self.a[0], p[1] - self.a[1]];
        let t = ((q[0] * self.e[0] + q[1] * self.e[1]) * self.inv_len2).clamp(0.0, 1.0);
        let dx = q[0] - t * self.e[0];
        let dy = q[1] - t * self.e[1];
        ((dx * dx + dy * dy).sqrt(), t)
    }
}

struct Triangle {
    idx: [usize; 3],
    pts: [[f64; 2]; 3],
    edges: [Edge; 3],
    /// Sliver fade weight and its partials with respect to the signed doubled
    /// area and the sum of squared edge lengths.
    fade: (f64, f64, f64),
}

fn signed_area2(p: [[f64; 2]; 3]) -> f64 {
    (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0])
}

#[inline]
fn smoothstep(r: f64) -> (f64, f64) {
    if r >= 1.0 {
        (1.0, 0.0)
    } else {
        (r * r * r * (10.0 + r * (6.0 * r - 15.0)), 30.0 * r * r * (1.0 - r) * (1.0 - r))
    }
}

impl Triangle {
    fn new(idx: [usize; 3], proj: &[[f64; 2]], tau: f64) -> Self {
        let pts = [proj[idx[0]], proj[idx[1]], proj[idx[2]]];
        let area2 = signed_area2(pts);
        let orient = if area2 >= 0.0 { 1.0 } else { -1.0 };
        let abs2 = area2.abs();
        let small_scale = SLIVER_AREA * tau * tau;
        let perim2: f64 = (0..3)
            .map(|k| {
                let (a, b) = (pts[k], pts[(k + 1) % 3]);
                (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
            })
            .sum();
        let (sa, dsa) = smoothstep(abs2 / small_scale);
        let thin_scale = SLIVER_WIDTH * tau;
        let perim = perim2.sqrt();
        let (sb, dsb) = if perim > 0.0 { smoothstep(abs2 / (perim * thin_scale)) } else { (0.0, 0.0) };
        let fade = if sa == 1.0 || sb == 1.0 {
            (1.0, 0.0, 0.0)
        } else {
            let d_area = (1.0 - sb) * dsa / small_scale + (1.0 - sa) * dsb / (perim * thin_scale);
            let d_perim = -(1.0 - sa) * dsb * abs2 / (2.0 * perim2 * perim * thin_scale);
            (1.0 - (1.0 - sa) * (1.0 - sb), d_area * orient, d_perim)
        };
        let edges = std::array::from_fn(|k| Edge::new(pts[k], pts[(k + 1) % 3], orient));
        Self { idx, pts, edges, fade }
    }

    fn visible(&self) -> bool {
        self.fade.0 > 0.0
    }

    /// Gradient of the doubled signed area with respect to the three corners.
    fn area2_gradient(&self) -> [[f64; 2]; 3] {
        let [a, b, c] = self.pts;
        [[b[1] - c[1], c[0] - b[0]], [c[1] - a[1], a[0] - c[0]], [a[1] - b[1], b[0] - a[0]]]
    }

    /// Pulls a gradient on the fade weight back to the corners.
    fn fade_backward(&self, g: f64, acc: &mut [[f64; 2]; 3]) {
        let ga = self.area2_gradient();
        for k in 0..3 {
            let n = (k + 1) % 3;
            let e = [self.pts[k][0] - self.pts[n][0], self.pts[k][1] - self.pts[n][1]];
            acc[k][0] += g * self.fade.1 * ga[k][0];
            acc[k][1] += g * self.fade.1 * ga[k][1];
            acc[k][0] += g * self.fade.2 * 2.0 * e[0];
            acc[k][1] += g * self.fade.2 * 2.0 * e[1];
            acc[n][0] -= g * self.fade.2 * 2.0 * e[0];
            acc[n][1] -= g * self.fade.2 * 2.0 * e[1];
        }
    }

    /// Calls `visit(pixel_index, px, py)` for every pixel center within
    /// `margin` of the triangle's bounding region, row by row.
    fn for_each_pixel(&self, width: usize, height: usize, margin: f64, mut visit: impl FnMut(usize, [f64; 2])) {
        let ys = self.pts.iter().map(|p| p[1]);
        let ymin = ys.clone().fold(f64::INFINITY, f64::min) - margin;
        let ymax = ys.fold(f64::NEG_INFINITY, f64::max) + margin;
        let r0 = (ymin - 0.5).ceil().max(0.0);
        let r1 = (ymax - 0.5).floor().min(height as f64 - 1.0);
        if r0 > r1 {
            return;
        }
        for row in r0 as usize..=r1 as usize {
            let py = row as f64 + 0.5;
            let Some((xlo, xhi)) = self.slab_span(py - margin, py + margin) else { continue };
            let c0 = (xlo - margin - 0.5).ceil().max(0.0);
            let c1 = (xhi + margin - 0.5).floor().min(width as f64 - 1.0);
            if c0 > c1 {
                continue;
            }
            for col in c0 as usize..=c1 as usize {
                visit(row * width + col, [col as f64 + 0.5, py]);
            }
        }
    }

    /// Horizontal extent of the triangle clipped to `lo <= y <= hi`.
    fn slab_span(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let mut xlo = f64::INFINITY;
        let mut xhi = f64::NEG_INFINITY;
        let mut take = |x: f64| {
            xlo = xlo.min(x);
            xhi = xhi.max(x);
        };
        for k in 0..3 {
            let a = self.pts[k];
            let b = self.pts[(k + 1) % 3];
            if a[1] >= lo && a[1] <= hi {
                take(a[0]);
            }
            for line in [lo, hi] {
                if (a[1] - line) * (b[1] - line) < 0.0 {
                    let t = (line - a[1]) / (b[1] - a[1]);
                    take(a[0] + t * (b[0] - a[0]));
                }
            }
        }
        (xlo <= xhi).then_some((xlo, xhi))
    }

    /// Signed distance at `p` (positive inside) or `None` beyond `limit`.
    #[inline]
    fn signed_distance(&self, p: [f64; 2], limit: f64) -> Option<Sample> {
        let h = [self.edges[0].line_distance(p), self.edges[1].line_distance(p), self.edges[2].line_distance(p)];
        let hmin = h[0].min(h[1]).min(h[2]);
        if hmin < 0.0 {
            if hmin <= -limit {
                return None;
            }
            return self.outside(p, [h[0] < 0.0, h[1] < 0.0, h[2] < 0.0], limit);
        }
        Some(Sample::Inside { h })
    }

    #[inline]
    fn outside(&self, p: [f64; 2], candidates: [bool; 3], limit: f64) -> Option<Sample> {
        let mut best = (f64::INFINITY, 0, 0.0);
        for (k, (edge, on)) in self.edges.iter().zip(candidates).enumerate() {
            if on {
                let (dist, t) = edge.segment_distance(p);
                if dist < best.0 {
                    best = (dist, k, t);
                }
            }
        }
        (best.0 < limit).then_some(Sample::Outside { dist: best.0, edge: best.1, t: best.2 })
    }
}

#[derive(Clone, Copy)]
enum Sample {
    Inside { h: [f64; 3] },
    Outside { dist: f64, edge: usize, t: f64 },
}

impl Sample {
    fn distance(&self) -> f64 {
        match *self {
            Sample::Inside { h } => {
                let hmin = h[0].min(h[1]).min(h[2]);
                if hmin > 0.0 {
                    soft_min_value(h, hmin)
                } else {
                    0.0
                }
            }
            Sample::Outside { dist, .. } => -dist,
        }
    }
}

/// p-norm soft minimum of positive edge distances and its partials.
#[inline]
fn soft_min(h: [f64; 3]) -> (f64, [f64; 3]) {
    let hmin = h[0].min(h[1]).min(h[2]);
    if hmin <= 0.0 {
        let k = if h[0] <= 0.0 {
            0
        } else if h[1] <= 0.0 {
            1
        } else {
            2
        };
        let mut g = [0.0; 3];
        g[k] = 1.0;
        return (0.0, g);
    }
    let d = soft_min_value(h, hmin);
    (d, h.map(|x| (d / x).powi(SOFT_MIN_POWER + 1)))
}

/// `(Σ h⁻⁸)^(-1/8)` for positive `h`, normalized by the minimum.
#[inline]
fn soft_min_value(h: [f64; 3], hmin: f64) -> f64 {
    let s: f64 = h.iter().map(|&x| (hmin / x).powi(SOFT_MIN_POWER)).sum();
    // s^(-1/8) as three square roots; tied to SOFT_MIN_POWER = 8.
    hmin / s.sqrt().sqrt().sqrt()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Taper weight and its derivative with respect to `x = d/τ`.
#[inline]
fn taper(x: f64) -> (f64, f64) {
    if x >= TAPER_START {
        (1.0, 0.0)
    } else if x <= -CUTOFF {
        (0.0, 0.0)
    } else {
        let (w, dw) = smoothstep((x + CUTOFF) / (CUTOFF + TAPER_START));
        (w, dw / (CUTOFF + TAPER_START))
    }
}

/// Per-triangle opacity `α` and `1 - α`, both computed without cancellation.
#[inline]
fn coverage(x: f64, fade: f64) -> (f64, f64) {
    let sw = fade * taper(x).0;
    let e = (-x.abs()).exp();
    let (hi, lo) = (1.0 / (1.0 + e), e / (1.0 + e));
    let (sg, sg_neg) = if x >= 0.0 { (hi, lo) } else { (lo, hi) };
    (sw * sg, (1.0 - sw) + sw * sg_neg)
}

/// Forward state kept for the backward pass.
#[derive(Clone)]
pub(crate) struct RenderState {
    pub(crate) image: SilhouetteImage,
    projected: Vec<[f64; 2]>,
    transmit: Vec<f64>,
    tau: f64,
}

/// Most moved vertices [`render_forward_update`] handles before deferring to
/// a full render.
const MAX_MOVED: usize = 8;
/// Smallest old transmittance that [`render_forward_update`] divides out.
const MIN_DIVISOR: f64 = 1e-12;

fn check_inputs(camera: &Camera, vertices: &[Vec3], faces: &[[usize; 3]], tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("blur radius must be positive, got {tau}")));
    }
    camera.validate()?;
    for f in faces {
        ensure(f.iter().all(|&i| i < vertices.len()), || {
            format!("face {f:?} indexes past {} vertices", vertices.len())
        })?;
    }
    for v in vertices {
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite vertex position".into()));
        }
        if !(v.z > MIN_DEPTH) {
            return Err(Error::BehindCamera { z: v.z });
        }
    }
    Ok(())
}

pub(crate) fn render_forward(
    camera: &Camera,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    tau: f64,
) -> Result<RenderState> {
    check_inputs(camera, vertices, faces, tau)?;
    let (w, h) = (camera.width, camera.height);
    let projected: Vec<[f64; 2]> = vertices.iter().map(|v| camera.project_unchecked(v)).collect();
    let limit = CUTOFF * tau;
    let inv_tau = 1.0 / tau;
    let mut transmit = vec![1.0; w * h];
    for f in faces {
        let tri = Triangle::new(*f, &projected, tau);
        if !tri.visible() {
            continue;
        }
        tri.for_each_pixel(w, h, limit, |pix, p| {
            if let Some(s) = tri.signed_distance(p, limit) {
                transmit[pix] *= coverage(s.distance() * inv_tau, tri.fade.0).1;
            }
        });
    }
    let image = SilhouetteImage::from_raw(w, h, transmit.iter().map(|t| 1.0 - t).collect());
    Ok(RenderState { image, projected, transmit, tau })
}

/// Renders `vertices` by patching `base`, a render of the same mesh and
/// camera in which only a few vertices sit elsewhere: the coverage of every
/// face touching a moved vertex is divided out and its new coverage
/// multiplied in. Returns `None` when a full render is needed instead.
/// Agrees with [`render_forward`] up to rounding.
pub(crate) fn render_forward_update(
    camera: &Camera,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    tau: f64,
    base: &RenderState,
) -> Result<Option<RenderState>> {
    check_inputs(camera, vertices, faces, tau)?;
    let (w, h) = (camera.width, camera.height);
    if base.tau != tau || base.transmit.len() != w * h || base.projected.len() != vertices.len() {
        return Ok(None);
    }
    let projected: Vec<[f64; 2]> = vertices.iter().map(|v| camera.project_unchecked(v)).collect();
    let moved: Vec<bool> = projected.iter().zip(&base.projected).map(|(a, b)| a != b).collect();
    if moved.iter().filter(|&&m| m).count() > MAX_MOVED {
        return Ok(None);
    }
    let limit = CUTOFF * tau;
    let inv_tau = 1.0 / tau;
    let mut transmit = base.transmit.clone();
    let mut exact = true;
    for f in faces.iter().filter(|f| f.iter().any(|&i| moved[i])) {
        let old = Triangle::new(*f, &base.projected, tau);
        if old.visible() {
            old.for_each_pixel(w, h, limit, |pix, p| {
                if let Some(s) = old.signed_distance(p, limit) {
                    let keep = coverage(s.distance() * inv_tau, old.fade.0).1;
                    exact &= keep >= MIN_DIVISOR;
                    transmit[pix] /= keep;
                }
            });
        }
        let new = Triangle::new(*f, &projected, tau);
        if new.visible() {
            new.for_each_pixel(w, h, limit, |pix, p| {
                if let Some(s) = new.signed_distance(p, limit) {
                    transmit[pix] *= coverage(s.distance() * inv_tau, new.fade.0).1;
                }
            });
        }
    }
    if !exact {
        return Ok(None);
    }
    let image = SilhouetteImage::from_raw(w, h, transmit.iter().map(|t| 1.0 - t).collect());
    Ok(Some(RenderState { image, projected, transmit, tau }))
}

/// Gradient of `Σ grad_image · occupancy` with respect to the 3D vertices.
pub(crate) fn render_backward(
    camera: &Camera,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    tau: f64,
    state: &RenderState,
    grad_image: &[f64],
) -> Vec<Vec3> {
    let (w, h) = (camera.width, camera.height);
    let limit = CUTOFF * tau;
    let mut g2 = vec![[0.0f64; 2]; vertices.len()];
    for f in faces {
        let tri = Triangle::new(*f, &state.projected, tau);
        if !tri.visible() {
            continue;
        }
        let fade = tri.fade.0;
        let mut acc = [[0.0f64; 2]; 3];
        let mut g_fade = 0.0;
        tri.for_each_pixel(w, h, limit, |pix, p| {
            let upstream = grad_image[pix] * state.transmit[pix];
            if upstream == 0.0 {
                return;
            }
            let Some(s) = tri.signed_distance(p, limit) else { return };
            let x = s.distance() / tau;
            let sg = sigmoid(x);
            let (wt, dw) = taper(x);
            // d occupancy / d alpha = transmit / (1 - alpha)
            let dl_dd = if wt == 1.0 && fade == 1.0 {
                upstream * sg / tau
            } else {
                let scale = upstream / coverage(x, fade).1;
                g_fade += scale * wt * sg;
                scale * fade * (dw * sg + wt * sg * (1.0 - sg)) / tau
            };
            if dl_dd == 0.0 {
                return;
            }
            match s {
                Sample::Inside { h } => {
                    let (_, dh) = soft_min(h);
                    for (k, (edge, &w)) in tri.edges.iter().zip(&dh).enumerate() {
                        if w != 0.0 {
                            line_distance_backward(edge, p, dl_dd * w, k, &mut acc);
                        }
                    }
                }
                Sample::Outside { dist, edge, t } => {
                    if dist <= 0.0 {
                        return;
                    }
                    let e = &tri.edges[edge];
                    let c = [e.a[0] + t * e.e[0], e.a[1] + t * e.e[1]];
                    // d = -|p - c|; moving an endpoint along n moves c toward p.
                    let n = [(p[0] - c[0]) / dist, (p[1] - c[1]) / dist];
                    let (ka, kb) = (edge, (edge + 1) % 3);
                    acc[ka][0] += dl_dd * n[0] * (1.0 - t);
                    acc[ka][1] += dl_dd * n[1] * (1.0 - t);
                    acc[kb][0] += dl_dd * n[0] * t;
                    acc[kb][1] += dl_dd * n[1] * t;
                }
            }
        });
        if g_fade != 0.0 && fade < 1.0 {
            tri.fade_backward(g_fade, &mut acc);
        }
        for k in 0..3 {
            g2[tri.idx[k]][0] += acc[k][0];
            g2[tri.idx[k]][1] += acc[k][1];
        }
    }
    vertices.iter().zip(&g2).map(|(v, g)| camera.project_backward(v, *g)).collect()
}

#[inline]
fn line_distance_backward(edge: &Edge, p: [f64; 2], g: f64, k: usize, acc: &mut [[f64; 2]; 3]) {
    let q = [p[0] - edge.a[0], p[1] - edge.a[1]];
    let e = edge.e;
    let l = edge.len;
    let cross = e[0] * q[1] - e[1] * q[0];
    let s = edge.orient * g;
    // Partials of orient·cross(e, q)/|e| with respect to e and q.
    let de = [s * (q[1] / l - cross * e[0] / (l * l * l)), s * (-q[0] / l - cross * e[1] / (l * l * l))];
    let dq = [-s * e[1] / l, s * e[0] / l];
    let (ka, kb) = (k, (k + 1) % 3);
    acc[kb][0] += de[0];
    acc[kb][1] += de[1];
    acc[ka][0] -= de[0] + dq[0];
    acc[ka][1] -= de[1] + dq[1];
}

/// Renders a soft silhouette of the mesh.
pub fn render_silhouette(
    camera: &Camera,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    tau: f64,
) -> Result<SilhouetteImage> {
    Ok(render_forward(camera, vertices, faces, tau)?.image)
}

/// Renders and returns the vertex gradient of `Σ grad_image · occupancy`.
pub fn render_silhouette_with_gradient(
    camera: &Camera,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    tau: f64,
    grad_image: &[f64],
) -> Result<(SilhouetteImage, Vec<Vec3>)> {
    ensure(grad_image.len() == camera.width * camera.height, || {
        format!("image gradient has {} values, expected {}", grad_image.len(), camera.width * camera.height)
    })?;
    let state = render_forward(camera, vertices, faces, tau)?;
    let grad = render_backward(camera, vertices, faces, tau, &state, grad_image);
    Ok((state.image, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(z: f64, half: f64) -> (Vec<Vec3>, Vec<[usize; 3]>) {
        let v = vec![
            Vec3::new(-half, -half, z),
            Vec3::new(half, -half, z),
            Vec3::new(half, half, z),
            Vec3::new(-half, half, z),
        ];
        (v, vec![[0, 1, 2], [0, 2, 3]])
    }

    #[test]
    fn soft_min_is_bounded_by_hard_min() {
        let (d, g) = soft_min([1.0, 2.0, 3.0]);
        assert!(d <= 1.0 && d > 0.9);
        assert!(g.iter().all(|x| *x >= 0.0));
        let (d, _) = soft_min([0.0, 2.0, 3.0]);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn taper_is_c1() {
        let h = 1e-7;
        for &x in &[-4.9, -4.5, -4.1, -3.0] {
            let fd = (taper(x + h).0 - taper(x - h).0) / (2.0 * h);
            assert!((fd - taper(x).1).abs() < 1e-5, "x={x}");
        }
        assert_eq!(taper(-4.0), (1.0, 0.0));
        assert!(taper(-5.0 + 1e-9).0 < 1e-15);
    }

    #[test]
    fn large_square_is_saturated_inside_and_empty_far_away() {
        let cam = Camera::new(64, 64).unwrap();
        let (v, f) = quad(2.0, 0.5);
        let img = render_silhouette(&cam, &v, &f, 0.5).unwrap();
        assert!(img.get(42, 22) > 0.999);
        // On the shared diagonal both halves contribute one half each.
        assert!((img.get(32, 32) - 0.75).abs() < 1e-12);
        assert_eq!(img.get(1, 32), 0.0);
        // Square edge at u = 32 ± 16; a pixel center on the boundary line.
        let near = img.get(47, 32);
        assert!(near > 0.5 && near < 1.0);
    }

    #[test]
    fn argument_errors() {
        let cam = Camera::new(16, 16).unwrap();
        let (v, f) = quad(2.0, 0.5);
        assert!(matches!(render_silhouette(&cam, &v, &f, 0.0), Err(Error::InvalidArgument(_))));
        let (v2, _) = quad(-1.0, 0.5);
        assert!(matches!(render_silhouette(&cam, &v2, &f, 1.0), Err(Error::BehindCamera { .. })));
        assert!(render_silhouette(&cam, &v, &[[0, 1, 9]], 1.0).is_err());
    }

    #[test]
    fn degenerate_triangle_is_invisible() {
        let cam = Camera::new(32, 32).unwrap();
        let v = vec![Vec3::new(-0.2, 0.0, 1.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.2, 0.0, 1.0)];
        let img = render_silhouette(&cam, &v, &[[0, 1, 2]], 1.0).unwrap();
        assert!(img.data().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn fade_gradient_matches_differences() {
        let proj = [[1.0, 2.0], [4.5, 2.5], [2.6, 2.45]];
        let tri = Triangle::new([0, 1, 2], &proj, 1.0);
        assert!(tri.fade.0 > 0.0 && tri.fade.0 < 1.0);
        let mut acc = [[0.0; 2]; 3];
        tri.fade_backward(1.0, &mut acc);
        for k in 0..3 {
            for c in 0..2 {
                let h = 1e-7;
                let mut q = proj;
                q[k][c] += h;
                let up = Triangle::new([0, 1, 2], &q, 1.0).fade.0;
                q[k][c] -= 2.0 * h;
                let down = Triangle::new([0, 1, 2], &q, 1.0).fade.0;
                assert!(((up - down) / (2.0 * h) - acc[k][c]).abs() < 1e-6, "{k} {c}");
            }
        }
    }

    #[test]
    fn area_gradient_matches_differences() {
        let proj = [[1.0, 2.0], [4.5, 2.5], [2.0, 6.0]];
        let tri = Triangle::new([0, 1, 2], &proj, 1.0);
        let g = tri.area2_gradient();
        for k in 0..3 {
            for c in 0..2 {
                let mut q = proj;
                q[k][c] += 1e-6;
                let fd = (signed_area2(q) - signed_area2(proj)) / 1e-6;
                assert!((fd - g[k][c]).abs() < 1e-6);
            }
        }
    }

    fn grid(n: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
        let mut v = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                let (x, y) = (i as f64 / n as f64 - 0.5, j as f64 / n as f64 - 0.5);
                v.push(Vec3::new(0.4 * x, 0.4 * y + 0.03 * (7.0 * x).sin(), 1.0 + 0.1 * x * y));
            }
        }
        let mut f = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let a = i * (n + 1) + j;
                f.push([a, a + n + 1, a + 1]);
                f.push([a + 1, a + n + 1, a + n + 2]);
            }
        }
        (v, f)
    }

    #[test]
    fn update_matches_full_render() {
        let cam = Camera::new(40, 40).unwrap();
        let (mut v, f) = grid(6);
        let base = render_forward(&cam, &v, &f, 2.0).unwrap();
        v[17].x += 0.003;
        v[30].y -= 0.002;
        let full = render_forward(&cam, &v, &f, 2.0).unwrap();
        let patched = render_forward_update(&cam, &v, &f, 2.0, &base).unwrap().expect("few vertices moved");
        assert!(full.image.data() != base.image.data());
        for (a, b) in full.image.data().iter().zip(patched.image.data()) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn update_defers_to_full_render() {
        let cam = Camera::new(40, 40).unwrap();
        let (mut v, f) = grid(6);
        let base = render_forward(&cam, &v, &f, 2.0).unwrap();
        assert!(render_forward_update(&cam, &v, &f, 1.0, &base).unwrap().is_none());
        for p in v.iter_mut().take(MAX_MOVED + 1) {
            p.x += 1e-3;
        }
        assert!(render_forward_update(&cam, &v, &f, 2.0, &base).unwrap().is_none());
        v[0].z = -1.0;
        assert!(render_forward_update(&cam, &v, &f, 2.0, &base).is_err());
    }
}
