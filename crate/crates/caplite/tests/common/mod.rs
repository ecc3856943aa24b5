//! Fixtures shared by the integration suites: a runner for the compiled
//! binary and an enumerable two-step sampling policy whose expected-reward
//! gradient has a closed form.

use std::path::Path;
use std::process::Output;

use caplite::numerics::{
    sample_categorical, softmax_rows, NodeId, ParamId, ParamSet, Rng, Tape, Tensor2D,
};

/// Run the CLI binary with `args` from `dir`, capturing both streams.
#[allow(dead_code)]
pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_caplite"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("the caplite binary should spawn")
}

/// Stdout of a finished CLI run as a string, panicking on a nonzero exit.
#[allow(dead_code)]
pub fn run_cli_ok(dir: &Path, args: &[&str]) -> String {
    let out = run_cli(dir, args);
    assert!(
        out.status.success(),
        "caplite {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// A two-step policy over two tokens: step one samples from softmax(th1),
/// step two from softmax of the th2 row picked by the first choice. Four
/// paths total, each with a fixed reward, so the expected reward and its
/// gradient are computable exactly on the same tape the sampler uses.
#[allow(dead_code)]
pub struct ToyPolicy {
    pub params: ParamSet<f64>,
    pub th1: ParamId,
    pub th2: ParamId,
    pub rewards: [[f64; 2]; 2],
}

#[allow(dead_code)]
impl ToyPolicy {
    pub fn new() -> ToyPolicy {
        let mut params = ParamSet::new();
        let th1 = params.add("th1", Tensor2D::from_rows(&[vec![0.2, 0.0]]).unwrap());
        let th2 = params.add(
            "th2",
            Tensor2D::from_rows(&[vec![0.0, -0.1], vec![0.15, 0.0]]).unwrap(),
        );
        ToyPolicy {
            params,
            th1,
            th2,
            rewards: [[0.0, 2.0], [3.0, 7.0]],
        }
    }

    /// Sum over the four paths of p(path) * reward(path), built on a tape.
    fn expectation_node(&self, tape: &mut Tape<f64>) -> NodeId {
        let p1 = {
            let logits = tape.param(&self.params, self.th1);
            tape.softmax_rows(logits)
        };
        let p2 = {
            let logits = tape.param(&self.params, self.th2);
            tape.softmax_rows(logits)
        };
        let mut terms = Vec::new();
        for a in 0..2 {
            for b in 0..2 {
                let pick_a = {
                    let sel = tape.constant(one_hot_col(a));
                    tape.matmul(p1, sel)
                };
                let pick_b = {
                    let row = tape.row_select(p2, a);
                    let sel = tape.constant(one_hot_col(b));
                    tape.matmul(row, sel)
                };
                let joint = tape.mul(pick_a, pick_b);
                terms.push(tape.affine(joint, self.rewards[a][b], 0.0));
            }
        }
        tape.sum_nodes(&terms)
    }

    /// Exact expected reward under the current logits.
    pub fn expected_reward(&self) -> f64 {
        let mut tape = Tape::new();
        let j = self.expectation_node(&mut tape);
        tape.scalar(j)
    }

    /// Exact gradient of the expected reward, flattened th1 then th2.
    pub fn expected_reward_gradient(&mut self) -> Vec<f64> {
        self.params.zero_grads();
        let mut tape = Tape::new();
        let j = self.expectation_node(&mut tape);
        tape.backward(j, &mut self.params);
        self.flat_grads()
    }

    /// Sample one path and differentiate its summed step cross-entropies.
    /// Returns the path reward and d(ce)/d(logits), flattened th1 then th2.
    pub fn sample_ce_gradient(&mut self, rng: &mut Rng) -> (f64, Vec<f64>) {
        let p1 = softmax_rows(&self.params.get(self.th1).value);
        let a = sample_categorical(p1.row(0), rng).unwrap();
        let p2 = softmax_rows(&self.params.get(self.th2).value);
        let b = sample_categorical(p2.row(a), rng).unwrap();

        self.params.zero_grads();
        let mut tape = Tape::new();
        let th1 = tape.param(&self.params, self.th1);
        let ce_a = tape.cross_entropy_logits(th1, a);
        let th2 = tape.param(&self.params, self.th2);
        let row = tape.row_select(th2, a);
        let ce_b = tape.cross_entropy_logits(row, b);
        let ce_sum = tape.add(ce_a, ce_b);
        tape.backward(ce_sum, &mut self.params);
        (self.rewards[a][b], self.flat_grads())
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(6);
        for id in [self.th1, self.th2] {
            let g = &self.params.get(id).grad;
            for r in 0..g.rows() {
                out.extend_from_slice(g.row(r));
            }
        }
        out
    }
}

fn one_hot_col(row: usize) -> Tensor2D<f64> {
    let mut t = Tensor2D::zeros(2, 1);
    t.row_mut(row)[0] = 1.0;
    t
}
