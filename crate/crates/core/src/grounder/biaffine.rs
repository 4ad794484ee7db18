use rand::Rng;

use crate::nn::{normal, Graph, Mat, ParamId, ParamStore, Var};

/// Bilinear-plus-linear scorer over (variable, token) pairs, one score per
/// BIO tag: `s_k(v, t) = u_v^T W_k u_t + a_k^T u_v + c_k^T u_t + b_k`.
#[derive(Debug, Clone)]
pub struct Biaffine {
    pub bilinear: Vec<ParamId>,
    pub var_linear: Vec<ParamId>,
    pub tok_linear: Vec<ParamId>,
    pub bias: Vec<ParamId>,
}

impl Biaffine {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, tags: usize, rng: &mut impl Rng) -> Self {
        let std = 1.0 / dim as f64;
        let mut b = Biaffine {
            bilinear: Vec::new(),
            var_linear: Vec::new(),
            tok_linear: Vec::new(),
            bias: Vec::new(),
        };
        for k in 0..tags {
            b.bilinear.push(store.add(format!("{name}.w{k}"), normal(rng, dim, dim, std)));
            b.var_linear.push(store.add(format!("{name}.a{k}"), normal(rng, dim, 1, std)));
            b.tok_linear.push(store.add(format!("{name}.c{k}"), normal(rng, 1, dim, std)));
            b.bias.push(store.add(format!("{name}.b{k}"), Mat::zeros((1, 1))));
        }
        b
    }

    pub fn tags(&self) -> usize {
        self.bilinear.len()
    }

    /// `vars` is `C x r`, `tokens` is `T x r`; returns `(C * T) x tags`
    /// with row `c * T + t`.
    pub fn forward(&self, g: &mut Graph, vars: Var, tokens: Var) -> Var {
        let mut per_tag = Vec::with_capacity(self.tags());
        for k in 0..self.tags() {
            let w = g.param(self.bilinear[k]);
            let a = g.param(self.var_linear[k]);
            let c = g.param(self.tok_linear[k]);
            let b = g.param(self.bias[k]);
            let vw = g.matmul(vars, w);
            let s = g.matmul_bt(vw, tokens);
            let lv = g.matmul(vars, a);
            let lv = g.add_row(lv, b);
            let s = g.add_col(s, lv);
            let lt = g.matmul_bt(c, tokens);
            per_tag.push(g.add_row(s, lt));
        }
        g.stack_columns(per_tag)
    }

    pub fn zero(&self, store: &mut ParamStore) {
        for id in self
            .bilinear
            .iter()
            .chain(&self.var_linear)
            .chain(&self.tok_linear)
            .chain(&self.bias)
        {
            store.value_mut(*id).fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_the_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let bi = Biaffine::new(&mut store, "bi", 4, 3, &mut rng);
        for &b in &bi.bias {
            store.value_mut(b).fill(rng.random_range(-1.0..1.0));
        }
        let vars = normal(&mut rng, 2, 4, 1.0);
        let toks = normal(&mut rng, 5, 4, 1.0);
        let mut g = Graph::new(&store);
        let v = g.constant(vars.clone());
        let t = g.constant(toks.clone());
        let out = bi.forward(&mut g, v, t);
        let out = g.value(out);
        assert_eq!(out.dim(), (10, 3));
        for c in 0..2 {
            for t in 0..5 {
                for k in 0..3 {
                    let uv = vars.row(c);
                    let ut = toks.row(t);
                    let w = store.value(bi.bilinear[k]);
                    let expected = uv.dot(&w.dot(&ut))
                        + uv.dot(&store.value(bi.var_linear[k]).column(0))
                        + ut.dot(&store.value(bi.tok_linear[k]).row(0))
                        + store.value(bi.bias[k])[[0, 0]];
                    assert!((out[[c * 5 + t, k]] - expected).abs() < 1e-12);
                }
            }
        }
    }
}
