//! Exact integrals of Q1 shape functions on an axis-aligned cube of side `h`.
//!
//! Local vertex `a` sits at offset `(a >> i) & 1` along axis `i`, so every
//! integral factorizes into 1D pieces.

use super::Tensor;

/// 1D slope sign of the hat function at local end `e` (0 or 1).
fn sgn(e: usize) -> f64 {
    if e == 0 {
        -1.0
    } else {
        1.0
    }
}

fn bit(a: usize, i: usize) -> usize {
    (a >> i) & 1
}

#[derive(Debug, Clone)]
pub struct Q1Tables {
    pub dim: usize,
    pub h: f64,
    /// `gg[i][j][a][b] = ∫ ∂_i φ_a ∂_j φ_b`
    gg: [[[[f64; 8]; 8]; 3]; 3],
    /// `grad_int[i][a] = ∫ ∂_i φ_a`
    pub grad_int: [[f64; 8]; 3],
    /// `mass[a][b] = ∫ φ_a φ_b`
    pub mass: [[f64; 8]; 8],
}

impl Q1Tables {
    pub fn new(dim: usize, h: f64) -> Self {
        let nv = 1 << dim;
        let m1 = |a: usize, b: usize| if a == b { h / 3.0 } else { h / 6.0 };
        let s1 = |a: usize, b: usize| sgn(a) * sgn(b) / h;
        // ∫ ψ_a' ψ_b
        let d1 = |a: usize, _b: usize| sgn(a) / 2.0;
        let mut gg = [[[[0.0; 8]; 8]; 3]; 3];
        let mut mass = [[0.0; 8]; 8];
        let mut grad_int = [[0.0; 8]; 3];
        for a in 0..nv {
            for b in 0..nv {
                let mut m = 1.0;
                for k in 0..dim {
                    m *= m1(bit(a, k), bit(b, k));
                }
                mass[a][b] = m;
                for i in 0..dim {
                    for j in 0..dim {
                        let mut v = 1.0;
                        for k in 0..dim {
                            let (ak, bk) = (bit(a, k), bit(b, k));
                            v *= if k == i && k == j {
                                s1(ak, bk)
                            } else if k == i {
                                d1(ak, bk)
                            } else if k == j {
                                d1(bk, ak)
                            } else {
                                m1(ak, bk)
                            };
                        }
                        gg[i][j][a][b] = v;
                    }
                }
            }
            for i in 0..dim {
                let mut v = sgn(bit(a, i));
                for k in 0..dim {
                    if k != i {
                        v *= h / 2.0;
                    }
                }
                grad_int[i][a] = v;
            }
        }
        Self {
            dim,
            h,
            gg,
            grad_int,
            mass,
        }
    }

    pub fn nodes(&self) -> usize {
        1 << self.dim
    }

    pub fn volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Element matrix `K_ab = ∫ σ ∇φ_b · ∇φ_a` for constant `σ`.
    pub fn stiffness(&self, sigma: &Tensor) -> [[f64; 8]; 8] {
        let nv = self.nodes();
        let mut k = [[0.0; 8]; 8];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let s = sigma[(i, j)];
                if s == 0.0 {
                    continue;
                }
                for a in 0..nv {
                    for b in 0..nv {
                        k[a][b] += s * self.gg[i][j][a][b];
                    }
                }
            }
        }
        k
    }

    /// `∫ σ ∇w` over the element for nodal values `w`.
    pub fn flux(&self, sigma: &Tensor, w: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for j in 0..self.dim {
            for (a, wa) in w.iter().enumerate().take(self.nodes()) {
                g[j] += wa * self.grad_int[j][a];
            }
        }
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i] += sigma[(i, j)] * g[j];
            }
        }
        out
    }
}
