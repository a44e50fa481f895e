pub mod adam;
pub mod array;
pub mod check;
pub mod tape;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use array::Array;
pub use check::{grad_check, grad_check_with_step, GRAD_TOL};
pub use tape::{NodeId, ParamId, ParamStore, Tape};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use crate::rng::stream;
    use rand::Rng;

    fn seeded_array(rows: usize, cols: usize, name: &str, point: u64) -> Array {
        let mut rng = stream(point, name);
        // Keep magnitudes moderate and away from zero crossings of ln/div.
        let data = (0..rows * cols).map(|_| rng.gen_range(0.25..1.75)).collect();
        Array::from_vec(rows, cols, data).unwrap()
    }

    /// Run grad_check at several seeded points and return the worst error.
    fn check_at_points(
        shapes: &[(usize, usize)],
        build: impl Fn(&mut Tape, &ParamStore) -> Result<NodeId>,
    ) -> f64 {
        let mut worst = 0.0f64;
        for point in 0..10u64 {
            let mut store = ParamStore::new();
            for (i, &(r, c)) in shapes.iter().enumerate() {
                store.add(format!("p{i}"), seeded_array(r, c, &format!("gradcheck/{i}"), point));
            }
            worst = worst.max(grad_check(&mut store, &build));
        }
        worst
    }

    macro_rules! op_grad_test {
        ($name:ident, $shapes:expr, $build:expr) => {
            #[test]
            fn $name() {
                let worst = check_at_points(&$shapes, $build);
                assert!(worst < GRAD_TOL, "worst relative error {worst:e}");
            }
        };
    }

    op_grad_test!(grad_add, [(2, 3), (2, 3)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let x = t.add(a, b)?;
        let x = t.mul(x, x)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_sub, [(2, 3), (2, 3)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let x = t.sub(a, b)?;
        let x = t.mul(x, x)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_mul, [(2, 3), (2, 3)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let x = t.mul(a, b)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_div, [(2, 3), (2, 3)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let x = t.div(a, b)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_add_row, [(3, 2), (1, 2)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let x = t.add_row(a, b)?;
        let x = t.tanh(x);
        Ok(t.sum(x))
    });

    op_grad_test!(grad_sub_row, [(3, 2), (1, 2)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let x = t.sub_row(a, b)?;
        let x = t.mul(x, x)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_add_scalar_and_ln, [(2, 2)], |t, s| {
        let a = t.param(0, s);
        let x = t.add_scalar(a, 1.0);
        let x = t.ln(x);
        Ok(t.sum(x))
    });

    op_grad_test!(grad_scale_neg, [(2, 2)], |t, s| {
        let a = t.param(0, s);
        let x = t.scale(a, -2.5);
        let x = t.neg(x);
        let x = t.exp(x);
        Ok(t.sum(x))
    });

    op_grad_test!(grad_mul_scalar_node, [(2, 3), (1, 1)], |t, s| {
        let (a, sc) = (t.param(0, s), t.param(1, s));
        let x = t.mul_scalar_node(a, sc)?;
        let x = t.sigmoid(x);
        Ok(t.sum(x))
    });

    op_grad_test!(grad_div_scalar_node, [(2, 3), (1, 1)], |t, s| {
        let (a, sc) = (t.param(0, s), t.param(1, s));
        let x = t.div_scalar_node(a, sc)?;
        let x = t.mul(x, x)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_matmul, [(2, 3), (3, 4)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let x = t.matmul(a, b)?;
        let x = t.tanh(x);
        Ok(t.sum(x))
    });

    op_grad_test!(grad_transpose, [(2, 3), (2, 4)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let at = t.transpose(a);
        let x = t.matmul(at, b)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_exp, [(2, 2)], |t, s| {
        let a = t.param(0, s);
        let x = t.exp(a);
        Ok(t.sum(x))
    });

    op_grad_test!(grad_sigmoid, [(2, 2)], |t, s| {
        let a = t.param(0, s);
        let x = t.sigmoid(a);
        let x = t.mul(x, x)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_tanh, [(2, 2)], |t, s| {
        let a = t.param(0, s);
        let x = t.tanh(a);
        Ok(t.sum(x))
    });

    op_grad_test!(grad_bce_with_logits, [(4, 1)], |t, s| {
        let a = t.param(0, s);
        t.bce_with_logits(a, vec![1.0, 0.0, 1.0, 0.0])
    });

    op_grad_test!(grad_row_sum, [(3, 4)], |t, s| {
        let a = t.param(0, s);
        let x = t.row_sum(a);
        let x = t.mul(x, x)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_hconcat, [(2, 2), (2, 3)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let x = t.hconcat(&[a, b])?;
        let x = t.tanh(x);
        Ok(t.sum(x))
    });

    op_grad_test!(grad_vconcat, [(2, 3), (1, 3)], |t, s| {
        let (a, b) = (t.param(0, s), t.param(1, s));
        let x = t.vconcat(&[a, b])?;
        let x = t.mul(x, x)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_gather_rows_with_repeats, [(3, 2)], |t, s| {
        let a = t.param(0, s);
        let x = t.gather_rows(a, &[0, 2, 0])?;
        let x = t.mul(x, x)?;
        Ok(t.sum(x))
    });

    op_grad_test!(grad_gather_cols, [(2, 4)], |t, s| {
        let a = t.param(0, s);
        let x = t.gather_cols(a, &[3, 1, 1])?;
        let x = t.exp(x);
        Ok(t.sum(x))
    });

    // A parameter bound twice must see gradients from both leaves.
    op_grad_test!(grad_param_bound_twice, [(2, 2)], |t, s| {
        let a1 = t.param(0, s);
        let a2 = t.param(0, s);
        let x = t.mul(a1, a2)?;
        Ok(t.sum(x))
    });

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.add("used", Array::scalar(2.0));
        let unused = store.add("unused", Array::from_vec(2, 2, vec![1.0; 4]).unwrap());
        let mut tape = Tape::new();
        let a = tape.param(used, &store);
        let loss = tape.mul(a, a).unwrap();
        let grads = tape.backward(loss, &store).unwrap();
        assert_eq!(grads[used].item(), 4.0);
        assert_eq!(grads[unused].data(), &[0.0; 4]);
    }

    #[test]
    fn backward_rejects_nonscalar_loss() {
        let mut store = ParamStore::new();
        let p = store.add("w", Array::from_vec(2, 1, vec![1.0, 2.0]).unwrap());
        let mut tape = Tape::new();
        let a = tape.param(p, &store);
        assert!(tape.backward(a, &store).is_err());
    }

    #[test]
    fn shape_mismatch_reports_node_and_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Array::zeros(2, 3));
        let b = tape.constant(Array::zeros(3, 2));
        let err = tape.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add") && msg.contains("2x3"), "{msg}");
    }

    #[test]
    fn forward_values_match_plain_evaluation() {
        let mut store = ParamStore::new();
        let w = store.add("w", Array::from_vec(2, 2, vec![0.5, -1.0, 2.0, 0.25]).unwrap());
        let mut tape = Tape::new();
        let x = tape.constant(Array::from_vec(1, 2, vec![3.0, -2.0]).unwrap());
        let wn = tape.param(w, &store);
        let y = tape.matmul(x, wn).unwrap();
        // [3, -2] @ [[0.5, -1], [2, 0.25]] = [3*0.5 - 2*2, -3 - 0.5]
        assert_eq!(tape.value(y).data(), &[-2.5, -3.5]);
    }
}
