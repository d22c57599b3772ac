use rand::Rng;

use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Weights of one LSTM cell: `z = W [x; h] + b`, split into i, f, o, g.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_uniform(&format!("{name}.w"), &[4 * hidden, input + hidden], 0.1, rng);
        let b = store.add_uniform(&format!("{name}.b"), &[4 * hidden], 0.1, rng);
        Self { w, b, input, hidden }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> (Var, Var) {
        let h = tape.leaf(Tensor::zeros(&[self.hidden]));
        let c = tape.leaf(Tensor::zeros(&[self.hidden]));
        (h, c)
    }

    /// Records the weights on `tape` once so repeated steps share gradient buffers.
    pub fn bind(&self, tape: &mut Tape) -> BoundLstm {
        BoundLstm {
            w: tape.param(self.w),
            b: tape.param(self.b),
            hidden: self.hidden,
        }
    }

    /// One step; returns the new `(h, c)`.
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        self.bind(tape).step(tape, x, h, c)
    }
}

/// LSTM weights already recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundLstm {
    pub w: Var,
    pub b: Var,
    pub hidden: usize,
}

impl BoundLstm {
    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        let (w, b) = (self.w, self.b);
        let xh = tape.concat(&[x, h]);
        let wz = tape.linear(w, xh);
        let z = tape.add(wz, b);
        let n = self.hidden;
        let zi = tape.slice(z, 0, n);
        let zf = tape.slice(z, n, n);
        let zo = tape.slice(z, 2 * n, n);
        let zg = tape.slice(z, 3 * n, n);
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let o = tape.sigmoid(zo);
        let g = tape.tanh(zg);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c2 = tape.add(fc, ig);
        let tc = tape.tanh(c2);
        let h2 = tape.mul(o, tc);
        (h2, c2)
    }
}
