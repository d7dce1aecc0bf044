//! Pluggable per-frame editors standing in for an instruction-driven 2D
//! editing model.

use ndarray::Array3;

/// Edits one RGB frame. Output must keep the input dimensions and stay in
/// [0,1].
pub trait ToyEditor {
    fn apply(&self, frame: &Array3<f32>) -> Array3<f32>;
}

/// Inclusive-exclusive pixel rectangle [x0, x1) × [y0, y1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

/// Built-in editors.
#[derive(Debug, Clone, PartialEq)]
pub enum Editor {
    Identity,
    /// Rotate hue by the given angle: a rotation of RGB space about the gray
    /// diagonal (120° is exactly the cyclic channel permutation).
    HueRotate { degrees: f64 },
    /// Per-channel affine recolor c' = clamp(gain·c + bias).
    Recolor { gains: [f32; 3], biases: [f32; 3] },
    /// Recolor restricted to a pixel rectangle.
    MaskRecolor { region: PixelRect, gains: [f32; 3], biases: [f32; 3] },
}

impl Editor {
    /// The editor's action on a single color, when it is a pure per-pixel
    /// map (everything except the spatially varying MaskRecolor). Used to
    /// edit scene point colors directly for oracle ground truth.
    pub fn point_color_edit(&self, color: [f32; 3]) -> Option<[f32; 3]> {
        match self {
            Editor::Identity => Some(color),
            Editor::HueRotate { degrees } => Some(hue_rotate_color(color, *degrees)),
            Editor::Recolor { gains, biases } => Some(recolor(color, gains, biases)),
            Editor::MaskRecolor { .. } => None,
        }
    }
}

fn recolor(c: [f32; 3], gains: &[f32; 3], biases: &[f32; 3]) -> [f32; 3] {
    let mut out = [0.0f32; 3];
    for ch in 0..3 {
        out[ch] = (gains[ch] * c[ch] + biases[ch]).clamp(0.0, 1.0);
    }
    out
}

fn hue_rotate_color(c: [f32; 3], degrees: f64) -> [f32; 3] {
    let m = hue_matrix(degrees);
    let mut out = [0.0f32; 3];
    for row in 0..3 {
        let v = m[row][0] * c[0] as f64 + m[row][1] * c[1] as f64 + m[row][2] * c[2] as f64;
        out[row] = (v as f32).clamp(0.0, 1.0);
    }
    out
}

/// Rotation of RGB space about the (1,1,1)/√3 axis.
fn hue_matrix(degrees: f64) -> [[f64; 3]; 3] {
    let theta = degrees.to_radians();
    let (s, c) = theta.sin_cos();
    let a = 1.0 / 3.0f64;
    let k = 1.0 / 3.0f64.sqrt();
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let identity = if i == j { 1.0 } else { 0.0 };
            // Cross-product matrix of the unit gray axis has off-diagonal
            // entries ±1/√3 with the sign pattern of a cyclic permutation.
            let cross = if i == j {
                0.0
            } else if (j + 1) % 3 == i {
                k
            } else {
                -k
            };
            m[i][j] = c * identity + s * cross + (1.0 - c) * a;
        }
    }
    m
}

impl ToyEditor for Editor {
    fn apply(&self, frame: &Array3<f32>) -> Array3<f32> {
        let shape = frame.shape();
        let (h, w) = (shape[0], shape[1]);
        let mut out = frame.clone();
        for y in 0..h {
            for x in 0..w {
                let c = [frame[(y, x, 0)], frame[(y, x, 1)], frame[(y, x, 2)]];
                let edited = match self {
                    Editor::Identity => c,
                    Editor::HueRotate { degrees } => hue_rotate_color(c, *degrees),
                    Editor::Recolor { gains, biases } => recolor(c, gains, biases),
                    Editor::MaskRecolor { region, gains, biases } => {
                        if region.contains(x, y) {
                            recolor(c, gains, biases)
                        } else {
                            c
                        }
                    }
                };
                for ch in 0..3 {
                    out[(y, x, ch)] = edited[ch];
                }
            }
        }
        out
    }
}
