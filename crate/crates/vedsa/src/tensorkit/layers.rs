use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, ParamId, ParamStore, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Softplus,
    Exp,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Softplus => tape.softplus(x),
            Activation::Exp => tape.exp(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

fn uniform_fan_in(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Fully connected layer: affine map plus pointwise activation.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            vec![out_dim, in_dim],
            uniform_fan_in(rng, in_dim, out_dim * in_dim),
        );
        let b = store.add(format!("{name}.b"), vec![out_dim], vec![0.0; out_dim]);
        Dense { w, b, in_dim, out_dim, activation }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> NodeId {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let h = tape.matvec(w, x, self.out_dim, self.in_dim);
        let h = tape.add(h, b);
        self.activation.apply(tape, h)
    }
}

/// Recurrent state of one LSTM layer: (hidden, cell) node pair on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub hidden: NodeId,
    pub cell: NodeId,
}

/// One LSTM layer with input, forget, candidate, and output gates.
#[derive(Debug, Clone)]
pub struct LstmCell {
    /// Gate order: input, forget, candidate, output.
    pub wx: [ParamId; 4],
    pub wh: [ParamId; 4],
    pub b: [ParamId; 4],
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        let gates = ["i", "f", "g", "o"];
        let mut wx = [ParamId(0); 4];
        let mut wh = [ParamId(0); 4];
        let mut b = [ParamId(0); 4];
        for (k, gate) in gates.iter().enumerate() {
            wx[k] = store.add(
                format!("{name}.wx_{gate}"),
                vec![hidden_dim, input_dim],
                uniform_fan_in(rng, input_dim + hidden_dim, hidden_dim * input_dim),
            );
            wh[k] = store.add(
                format!("{name}.wh_{gate}"),
                vec![hidden_dim, hidden_dim],
                uniform_fan_in(rng, input_dim + hidden_dim, hidden_dim * hidden_dim),
            );
            // forget-gate bias starts at +1
            let bias = if *gate == "f" { vec![1.0; hidden_dim] } else { vec![0.0; hidden_dim] };
            b[k] = store.add(format!("{name}.b_{gate}"), vec![hidden_dim], bias);
        }
        LstmCell { wx, wh, b, input_dim, hidden_dim }
    }

    /// Zero initial state as constant tape nodes.
    pub fn init_state(&self, tape: &mut Tape) -> LstmState {
        let hidden = tape.input(vec![0.0; self.hidden_dim]);
        let cell = tape.input(vec![0.0; self.hidden_dim]);
        LstmState { hidden, cell }
    }

    fn gate(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        k: usize,
        x: NodeId,
        h: NodeId,
    ) -> NodeId {
        let wx = tape.param(store, self.wx[k]);
        let wh = tape.param(store, self.wh[k]);
        let b = tape.param(store, self.b[k]);
        let a = tape.matvec(wx, x, self.hidden_dim, self.input_dim);
        let r = tape.matvec(wh, h, self.hidden_dim, self.hidden_dim);
        let s = tape.add(a, r);
        tape.add(s, b)
    }

    /// Standard LSTM gate equations; the output vector is the new hidden
    /// state.
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        state: LstmState,
        x: NodeId,
    ) -> LstmState {
        let pre_i = self.gate(tape, store, 0, x, state.hidden);
        let pre_f = self.gate(tape, store, 1, x, state.hidden);
        let pre_g = self.gate(tape, store, 2, x, state.hidden);
        let pre_o = self.gate(tape, store, 3, x, state.hidden);
        let i = tape.sigmoid(pre_i);
        let f = tape.sigmoid(pre_f);
        let g = tape.tanh(pre_g);
        let o = tape.sigmoid(pre_o);
        let fc = tape.mul(f, state.cell);
        let ig = tape.mul(i, g);
        let cell = tape.add(fc, ig);
        let tc = tape.tanh(cell);
        let hidden = tape.mul(o, tc);
        LstmState { hidden, cell }
    }
}

/// 1-D convolution layer (valid padding) with per-output-channel bias.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub ksize: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        ksize: usize,
        stride: usize,
    ) -> Self {
        let fan_in = in_ch * ksize;
        let kernel = store.add(
            format!("{name}.kernel"),
            vec![out_ch, in_ch, ksize],
            uniform_fan_in(rng, fan_in, out_ch * in_ch * ksize),
        );
        let bias = store.add(format!("{name}.bias"), vec![out_ch], vec![0.0; out_ch]);
        Conv1d { kernel, bias, in_ch, out_ch, ksize, stride }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        (in_len - self.ksize) / self.stride + 1
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        in_len: usize,
    ) -> crate::error::Result<NodeId> {
        let k = tape.param(store, self.kernel);
        let b = tape.param(store, self.bias);
        tape.conv1d(x, k, b, self.in_ch, self.out_ch, self.ksize, self.stride, in_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn lstm_zero_weights_zero_hidden() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::new(&mut store, &mut rng, "lstm", 2, 3);
        for pid in cell.wx.iter().chain(&cell.wh).chain(&cell.b) {
            store.tensors[pid.0].values.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let st = cell.init_state(&mut tape);
        let x = tape.input(vec![0.7, -0.3]);
        let st = cell.step(&mut tape, &store, st, x);
        assert!(tape.values(st.hidden).iter().all(|&h| h == 0.0));
    }

    #[test]
    fn lstm_scalar_hand_computation() {
        // Single unit, gates forced wide open with large biases: the cell
        // value approaches tanh(candidate preactivation).
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::new(&mut store, &mut rng, "lstm", 1, 1);
        for pid in cell.wx.iter().chain(&cell.wh) {
            store.tensors[pid.0].values[0] = 0.0;
        }
        // candidate path: weight 1 on input, bias 0
        store.tensors[cell.wx[2].0].values[0] = 1.0;
        store.tensors[cell.b[2].0].values[0] = 0.0;
        // input/output gates open, forget open (irrelevant on step 1)
        store.tensors[cell.b[0].0].values[0] = 50.0;
        store.tensors[cell.b[1].0].values[0] = 50.0;
        store.tensors[cell.b[3].0].values[0] = 50.0;

        let x_val = 0.4;
        let mut tape = Tape::new();
        let st = cell.init_state(&mut tape);
        let x = tape.input(vec![x_val]);
        let st = cell.step(&mut tape, &store, st, x);
        let expected_cell = sigmoid(50.0) * x_val.tanh();
        let expected_hidden = sigmoid(50.0) * expected_cell.tanh();
        assert!((tape.values(st.cell)[0] - expected_cell).abs() < 1e-12);
        assert!((tape.values(st.hidden)[0] - expected_hidden).abs() < 1e-12);
    }

    #[test]
    fn lstm_stepwise_is_deterministic() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell = LstmCell::new(&mut store, &mut rng, "lstm", 1, 4);
        let seq = [0.1, 0.9, -0.4, 0.0, 0.3];
        let run = |store: &ParamStore| {
            let mut tape = Tape::new();
            let mut st = cell.init_state(&mut tape);
            for &v in &seq {
                let x = tape.input(vec![v]);
                st = cell.step(&mut tape, store, st, x);
            }
            tape.values(st.hidden).to_vec()
        };
        assert_eq!(run(&store), run(&store));
    }

    #[test]
    fn dense_identity_passthrough() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = Dense::new(&mut store, &mut rng, "fc", 3, 3, Activation::Identity);
        let w = &mut store.tensors[layer.w.0].values;
        w.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let mut tape = Tape::new();
        let x = tape.input(vec![0.5, -2.0, 7.0]);
        let y = layer.forward(&mut tape, &store, x);
        assert_eq!(tape.values(y), &[0.5, -2.0, 7.0]);
    }

    #[test]
    fn exp_head_is_positive() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = Dense::new(&mut store, &mut rng, "fc", 4, 2, Activation::Exp);
        for _ in 0..20 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut tape = Tape::new();
            let xn = tape.input(x);
            let y = layer.forward(&mut tape, &store, xn);
            assert!(tape.values(y).iter().all(|&v| v > 0.0));
        }
    }
}
