use ndarray::{s, Array2, ArrayView2, ArrayView3, Axis, Zip};

use super::{EmError, EmModel, LstmLayerParams};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations kept for the backward pass of one layer.
struct LayerTrace {
    /// Per step: gate activations, B × 4H in [`super::Gate`] column order.
    gates: Vec<Array2<f64>>,
    /// Cell state, T + 1 entries with the zero initial state first.
    cells: Vec<Array2<f64>>,
    /// tanh of the cell state per step.
    cell_tanh: Vec<Array2<f64>>,
    /// Hidden state, T + 1 entries with the zero initial state first.
    hidden: Vec<Array2<f64>>,
}

struct Step {
    gates: Array2<f64>,
    cell: Array2<f64>,
    cell_tanh: Array2<f64>,
    hidden: Array2<f64>,
}

fn lstm_step(params: &LstmLayerParams, x: ArrayView2<f64>, h_prev: &Array2<f64>, c_prev: &Array2<f64>) -> Step {
    let h = params.hidden();
    let mut z = x.dot(&params.w_input.t());
    z += &h_prev.dot(&params.w_recurrent.t());
    z += &params.bias;
    z.slice_mut(s![.., 0..2 * h]).mapv_inplace(sigmoid);
    z.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
    z.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);

    let mut cell = Array2::zeros(c_prev.raw_dim());
    Zip::from(&mut cell)
        .and(c_prev)
        .and(z.slice(s![.., 0..h]))
        .and(z.slice(s![.., h..2 * h]))
        .and(z.slice(s![.., 2 * h..3 * h]))
        .for_each(|c, &cp, &i, &f, &g| *c = f * cp + i * g);
    let cell_tanh = cell.mapv(f64::tanh);
    let hidden = &z.slice(s![.., 3 * h..]) * &cell_tanh;
    Step {
        gates: z,
        cell,
        cell_tanh,
        hidden,
    }
}

fn layer_forward<'a>(
    params: &LstmLayerParams,
    steps: impl Iterator<Item = ArrayView2<'a, f64>>,
    batch: usize,
) -> LayerTrace {
    let h = params.hidden();
    let mut trace = LayerTrace {
        gates: Vec::new(),
        cells: vec![Array2::zeros((batch, h))],
        cell_tanh: Vec::new(),
        hidden: vec![Array2::zeros((batch, h))],
    };
    for x in steps {
        let step = lstm_step(params, x, trace.hidden.last().unwrap(), trace.cells.last().unwrap());
        trace.gates.push(step.gates);
        trace.cells.push(step.cell);
        trace.cell_tanh.push(step.cell_tanh);
        trace.hidden.push(step.hidden);
    }
    trace
}

fn check_input(m: &EmModel, inputs: &ArrayView3<f64>) -> Result<(), EmError> {
    if inputs.shape()[2] != m.dims.features {
        return Err(EmError::ShapeMismatch(format!(
            "input has {} features, model expects {}",
            inputs.shape()[2],
            m.dims.features
        )));
    }
    if inputs.shape()[1] == 0 {
        return Err(EmError::ShapeMismatch("empty input window".into()));
    }
    Ok(())
}

struct ForwardTrace {
    layer1: LayerTrace,
    layer2: LayerTrace,
    output: Array2<f64>,
}

fn head(m: &EmModel, last_hidden: &Array2<f64>) -> Array2<f64> {
    let mut output = last_hidden.dot(&m.head_w.t());
    output += &m.head_b;
    output
}

fn forward_trace(m: &EmModel, inputs: &ArrayView3<f64>) -> ForwardTrace {
    let batch = inputs.shape()[0];
    let layer1 = layer_forward(&m.layer1, inputs.axis_iter(Axis(1)), batch);
    let layer2 = layer_forward(&m.layer2, layer1.hidden[1..].iter().map(|a| a.view()), batch);
    let output = head(m, layer2.hidden.last().unwrap());
    ForwardTrace { layer1, layer2, output }
}

/// Runs the model on a B × T × F batch of scaled inputs, returning B × horizon
/// scaled predictions.
pub fn forward(m: &EmModel, inputs: ArrayView3<f64>) -> Result<Array2<f64>, EmError> {
    check_input(m, &inputs)?;
    let batch = inputs.shape()[0];
    let hidden = m.dims.hidden;
    let zeros = || Array2::<f64>::zeros((batch, hidden));
    let (mut h1, mut c1, mut h2, mut c2) = (zeros(), zeros(), zeros(), zeros());
    for x in inputs.axis_iter(Axis(1)) {
        let s1 = lstm_step(&m.layer1, x, &h1, &c1);
        let s2 = lstm_step(&m.layer2, s1.hidden.view(), &h2, &c2);
        (h1, c1, h2, c2) = (s1.hidden, s1.cell, s2.hidden, s2.cell);
    }
    Ok(head(m, &h2))
}

/// Mean squared error over all batch entries and horizon steps.
pub fn mse(pred: &ArrayView2<f64>, targets: &ArrayView2<f64>) -> f64 {
    let n = pred.len() as f64;
    Zip::from(pred)
        .and(targets)
        .fold(0.0, |acc, &p, &y| acc + (p - y) * (p - y))
        / n
}

/// Backward pass of one layer. `dh_from_above[t]` is the loss gradient with
/// respect to the layer's hidden output at step t (None where it is zero).
/// Returns the gradient with respect to the layer's inputs when requested.
fn layer_backward(
    params: &LstmLayerParams,
    trace: &LayerTrace,
    inputs: &[ArrayView2<f64>],
    dh_from_above: &[Option<Array2<f64>>],
    grads: &mut LstmLayerParams,
    want_dx: bool,
) -> Vec<Array2<f64>> {
    let h = params.hidden();
    let steps = inputs.len();
    let batch = inputs[0].nrows();
    let mut dh_next = Array2::<f64>::zeros((batch, h));
    let mut dc_next = Array2::<f64>::zeros((batch, h));
    let mut dx = vec![Array2::zeros((0, 0)); if want_dx { steps } else { 0 }];
    let mut da = Array2::<f64>::zeros((batch, 4 * h));

    for t in (0..steps).rev() {
        let mut dh = dh_next;
        if let Some(above) = &dh_from_above[t] {
            dh += above;
        }
        let gates = &trace.gates[t];
        let (i, f, g, o) = (
            gates.slice(s![.., 0..h]),
            gates.slice(s![.., h..2 * h]),
            gates.slice(s![.., 2 * h..3 * h]),
            gates.slice(s![.., 3 * h..]),
        );
        let tc = &trace.cell_tanh[t];
        let c_prev = &trace.cells[t];

        // dc = dc_next + dh · o · (1 − tanh²c)
        let mut dc = dc_next;
        Zip::from(&mut dc)
            .and(&dh)
            .and(o)
            .and(tc)
            .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));

        {
            let (mut da_i, rest) = da.view_mut().split_at(Axis(1), h);
            let (mut da_f, rest) = rest.split_at(Axis(1), h);
            let (mut da_g, mut da_o) = rest.split_at(Axis(1), h);
            Zip::from(&mut da_i)
                .and(&dc)
                .and(g)
                .and(i)
                .for_each(|d, &dc, &g, &i| *d = dc * g * i * (1.0 - i));
            Zip::from(&mut da_f)
                .and(&dc)
                .and(c_prev)
                .and(f)
                .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
            Zip::from(&mut da_g)
                .and(&dc)
                .and(i)
                .and(g)
                .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
            Zip::from(&mut da_o)
                .and(&dh)
                .and(tc)
                .and(o)
                .for_each(|d, &dh, &tc, &o| *d = dh * tc * o * (1.0 - o));
        }

        grads.w_input += &da.t().dot(&inputs[t]);
        grads.w_recurrent += &da.t().dot(&trace.hidden[t]);
        grads.bias += &da.sum_axis(Axis(0));
        if want_dx {
            dx[t] = da.dot(&params.w_input);
        }
        dh_next = da.dot(&params.w_recurrent);
        dc = dc * f;
        dc_next = dc;
    }
    dx
}

/// MSE in scaled space and its gradient with respect to every parameter, by
/// backpropagation through all time steps.
pub fn loss_and_grads(
    m: &EmModel,
    inputs: ArrayView3<f64>,
    targets: ArrayView2<f64>,
) -> Result<(f64, EmModel), EmError> {
    check_input(m, &inputs)?;
    let batch = inputs.shape()[0];
    if targets.dim() != (batch, m.dims.horizon) {
        return Err(EmError::ShapeMismatch(format!(
            "targets {:?}, expected ({batch}, {})",
            targets.dim(),
            m.dims.horizon
        )));
    }
    let trace = forward_trace(m, &inputs);
    let loss = mse(&trace.output.view(), &targets);
    if !loss.is_finite() {
        return Err(EmError::NonFiniteLoss {
            epoch: 0,
            partial: None,
        });
    }

    let mut grads = m.zeros_like();
    let scale = 2.0 / (batch * m.dims.horizon) as f64;
    let d_out = (&trace.output - &targets) * scale;
    let h_last = trace.layer2.hidden.last().unwrap();
    grads.head_w = d_out.t().dot(h_last);
    grads.head_b = d_out.sum_axis(Axis(0));

    let steps = inputs.shape()[1];
    let mut dh2: Vec<Option<Array2<f64>>> = vec![None; steps];
    dh2[steps - 1] = Some(d_out.dot(&m.head_w));
    let layer2_inputs: Vec<ArrayView2<f64>> = trace.layer1.hidden[1..].iter().map(|a| a.view()).collect();
    let dh1 = layer_backward(&m.layer2, &trace.layer2, &layer2_inputs, &dh2, &mut grads.layer2, true);

    let layer1_inputs: Vec<ArrayView2<f64>> = inputs.axis_iter(Axis(1)).collect();
    let dh1: Vec<Option<Array2<f64>>> = dh1.into_iter().map(Some).collect();
    layer_backward(&m.layer1, &trace.layer1, &layer1_inputs, &dh1, &mut grads.layer1, false);

    Ok((loss, grads))
}
