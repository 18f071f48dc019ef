//! Parameterized building blocks. Each block has a `declare_*` function
//! listing its parameters and an apply function using them by name.

use crate::nn::{self, AttentionMap, Tape, Tensor, Var};

use super::params::{Init, ParamStore};

/// Parameter declaration callback: name, shape, initializer.
pub type Declare<'a> = dyn FnMut(&str, &[usize], Init) + 'a;

/// One forward pass: a tape plus lazily bound parameters.
pub struct Session<'t, 'p> {
    pub tape: &'t mut Tape,
    params: &'p ParamStore,
    bound: Vec<Option<Var>>,
    attention: Vec<(String, Var)>,
}

impl<'t, 'p> Session<'t, 'p> {
    pub fn new(tape: &'t mut Tape, params: &'p ParamStore) -> Self {
        let bound = vec![None; params.len()];
        Self { tape, params, bound, attention: Vec::new() }
    }

    /// Session whose parameters are already on the tape (gradient checks
    /// perturb them as ordinary inputs).
    pub fn with_bound(tape: &'t mut Tape, params: &'p ParamStore, bound: Vec<Option<Var>>) -> Self {
        assert_eq!(bound.len(), params.len());
        Self { tape, params, bound, attention: Vec::new() }
    }

    /// The tape variable holding parameter `name`.
    pub fn p(&mut self, name: &str) -> Var {
        let id = self.params.id(name).unwrap_or_else(|| panic!("parameter {name} not declared"));
        if let Some(v) = self.bound[id] {
            return v;
        }
        let v = self.tape.leaf(self.params.tensor(id).clone());
        self.bound[id] = Some(v);
        v
    }

    pub fn bound(&self) -> &[Option<Var>] {
        &self.bound
    }

    fn record_attention(&mut self, name: &str, v: Var) {
        self.attention.push((name.to_string(), v));
    }

    /// Attention maps recorded so far, by block name.
    pub fn attention_maps(&self) -> Vec<(String, AttentionMap)> {
        self.attention
            .iter()
            .filter_map(|(n, v)| self.tape.attention_map(*v).map(|m| (n.clone(), m)))
            .collect()
    }
}

pub fn declare_linear(d: &mut Declare, name: &str, i: usize, o: usize) {
    d(&format!("{name}.w"), &[i, o], Init::Xavier { fan_in: i, fan_out: o });
    d(&format!("{name}.b"), &[o], Init::Zeros);
}

pub fn linear(s: &mut Session, x: Var, name: &str) -> Var {
    let w = s.p(&format!("{name}.w"));
    let b = s.p(&format!("{name}.b"));
    let y = s.tape.matmul(x, w);
    s.tape.add_row(y, b)
}

pub fn declare_ln(d: &mut Declare, name: &str, c: usize) {
    d(&format!("{name}.g"), &[c], Init::Ones);
    d(&format!("{name}.b"), &[c], Init::Zeros);
}

pub fn layer_norm(s: &mut Session, x: Var, name: &str) -> Var {
    let g = s.p(&format!("{name}.g"));
    let b = s.p(&format!("{name}.b"));
    s.tape.layer_norm(x, g, b)
}

/// 3×3 convolution with zero padding, applied to each of `n` stacked frames.
pub fn declare_conv3x3(d: &mut Declare, name: &str, ci: usize, co: usize) {
    declare_linear(d, name, 9 * ci, co);
}

pub fn conv3x3(s: &mut Session, x: Var, n: usize, h: usize, w: usize, name: &str) -> Var {
    let c = s.tape.value(x).cols();
    let cols = s.tape.gather(x, nn::im2col_3x3_frames(n, h, w, c), &[n * h * w, 9 * c]);
    linear(s, cols, name)
}

/// `T×3×3` convolution with spatial padding and no temporal padding, so
/// `T` frames collapse into one.
pub fn declare_conv3d(d: &mut Declare, name: &str, t: usize, ci: usize, co: usize) {
    declare_linear(d, name, t * 9 * ci, co);
}

pub fn conv3d(s: &mut Session, x: Var, t: usize, h: usize, w: usize, name: &str) -> Var {
    let c = s.tape.value(x).cols();
    let cols = s.tape.gather(x, nn::im2col_3x3(t, h, w, c), &[h * w, t * 9 * c]);
    linear(s, cols, name)
}

pub fn declare_attention(d: &mut Declare, name: &str, c: usize) {
    for part in ["q", "k", "v", "o"] {
        declare_linear(d, &format!("{name}.{part}"), c, c);
    }
}

/// Multi-head attention of queries from `xq` over keys/values from `xkv`.
pub fn attention(s: &mut Session, xq: Var, xkv: Var, groups: usize, heads: usize, name: &str) -> Var {
    let q = linear(s, xq, &format!("{name}.q"));
    let k = linear(s, xkv, &format!("{name}.k"));
    let v = linear(s, xkv, &format!("{name}.v"));
    let a = s.tape.attention(q, k, v, groups, heads);
    s.record_attention(name, a);
    linear(s, a, &format!("{name}.o"))
}

pub fn declare_ffn(d: &mut Declare, name: &str, c: usize, ratio: usize) {
    declare_linear(d, &format!("{name}.fc1"), c, ratio * c);
    declare_linear(d, &format!("{name}.fc2"), ratio * c, c);
}

pub fn ffn(s: &mut Session, x: Var, name: &str) -> Var {
    let h = linear(s, x, &format!("{name}.fc1"));
    let h = s.tape.gelu(h);
    linear(s, h, &format!("{name}.fc2"))
}

pub fn declare_gru(d: &mut Declare, name: &str, c: usize) {
    for part in ["wz", "wr", "wn", "uz", "ur", "un"] {
        declare_linear(d, &format!("{name}.{part}"), c, c);
    }
}

/// One GRU update `h' = n + z ⊙ (h - n)` for a batch of rows.
pub fn gru_step(s: &mut Session, x: Var, h: Var, name: &str) -> Var {
    let gate = |s: &mut Session, w: &str, u: &str| {
        let a = linear(s, x, &format!("{name}.{w}"));
        let b = linear(s, h, &format!("{name}.{u}"));
        let sum = s.tape.add(a, b);
        s.tape.sigmoid(sum)
    };
    let z = gate(s, "wz", "uz");
    let r = gate(s, "wr", "ur");
    let xn = linear(s, x, &format!("{name}.wn"));
    let hn = linear(s, h, &format!("{name}.un"));
    let rh = s.tape.mul(r, hn);
    let pre = s.tape.add(xn, rh);
    let n = s.tape.tanh(pre);
    let diff = s.tape.sub(h, n);
    let zd = s.tape.mul(z, diff);
    s.tape.add(n, zd)
}

pub fn declare_cross_transformer(d: &mut Declare, name: &str, c: usize, ratio: usize) {
    declare_ln(d, &format!("{name}.ln1"), c);
    declare_attention(d, &format!("{name}.msa"), c);
    declare_ln(d, &format!("{name}.ln2"), c);
    declare_attention(d, &format!("{name}.mca"), c);
    declare_ln(d, &format!("{name}.ln3"), c);
    declare_ffn(d, &format!("{name}.ffn"), c, ratio);
}

/// `F' = MSA(LN(F)) + F`, `F'' = MCA(LN(F'), A) + F'`, `FFN(LN(F'')) + F''`.
pub fn cross_transformer(s: &mut Session, f: Var, a: Var, heads: usize, name: &str) -> Var {
    let n = layer_norm(s, f, &format!("{name}.ln1"));
    let sa = attention(s, n, n, 1, heads, &format!("{name}.msa"));
    let f1 = s.tape.add(sa, f);
    let n = layer_norm(s, f1, &format!("{name}.ln2"));
    let ca = attention(s, n, a, 1, heads, &format!("{name}.mca"));
    let f2 = s.tape.add(ca, f1);
    let n = layer_norm(s, f2, &format!("{name}.ln3"));
    let ff = ffn(s, n, &format!("{name}.ffn"));
    s.tape.add(ff, f2)
}

/// Zero matrix placed on the tape as a constant.
pub fn zeros(s: &mut Session, rows: usize, cols: usize) -> Var {
    s.tape.leaf(Tensor::zeros(&[rows, cols]))
}
