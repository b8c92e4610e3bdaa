use irisforge_nn::{ParamSet, Tensor};

/// Tiny critic in 64-bit arithmetic, read straight from the parameter set.
pub struct ReferenceCritic {
    layers: Vec<(Vec<f64>, Vec<f64>, usize, usize)>,
    head: Vec<f64>,
    head_bias: f64,
}

impl ReferenceCritic {
    pub fn from_params(ps: &ParamSet, stages: usize) -> Self {
        let get = |n: &str| ps.by_name(n).unwrap();
        let f64s = |t: &Tensor| t.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
        let layers = (0..stages)
            .map(|i| {
                let w = get(&format!("critic.conv{i}.w"));
                (f64s(w), f64s(get(&format!("critic.conv{i}.b"))), w.shape()[0], w.shape()[1])
            })
            .collect();
        Self { layers, head: f64s(get("critic.real.w")), head_bias: get("critic.real.b").data()[0] as f64 }
    }

    /// Realness score of one `side × side` single-channel image.
    pub fn score(&self, x: &[f64], side: usize) -> f64 {
        let mut h = x.to_vec();
        let mut s = side;
        for (w, b, cout, cin) in &self.layers {
            let o = s / 2;
            let mut out = vec![0.0; cout * o * o];
            for co in 0..*cout {
                for oy in 0..o {
                    for ox in 0..o {
                        let mut acc = b[co];
                        for ci in 0..*cin {
                            for ky in 0..4 {
                                for kx in 0..4 {
                                    let iy = (oy * 2 + ky) as i64 - 1;
                                    let ix = (ox * 2 + kx) as i64 - 1;
                                    if iy < 0 || ix < 0 || iy >= s as i64 || ix >= s as i64 {
                                        continue;
                                    }
                                    acc += w[((co * cin + ci) * 4 + ky) * 4 + kx]
                                        * h[(ci * s + iy as usize) * s + ix as usize];
                                }
                            }
                        }
                        out[(co * o + oy) * o + ox] = if acc > 0.0 { acc } else { 0.2 * acc };
                    }
                }
            }
            h = out;
            s = o;
        }
        self.head_bias + self.head.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
    }

    /// `(‖∇D‖ − 1)²` averaged over the batch, with central differences.
    pub fn penalty(&self, batch: &[Vec<f64>], side: usize) -> f64 {
        let h = 1e-6;
        batch
            .iter()
            .map(|x| {
                let mut sq = 0.0;
                for i in 0..x.len() {
                    let (mut p, mut m) = (x.clone(), x.clone());
                    p[i] += h;
                    m[i] -= h;
                    let g = (self.score(&p, side) - self.score(&m, side)) / (2.0 * h);
                    sq += g * g;
                }
                (sq.sqrt() - 1.0).powi(2)
            })
            .sum::<f64>()
            / batch.len() as f64
    }
}
