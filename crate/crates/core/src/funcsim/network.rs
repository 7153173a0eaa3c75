use super::conv::{conv_blocked_with_fault, conv_oracle, max_pool, Fault};
use super::{auto_exponent, relu, requantize, AccTensor, QuantTensor, QuantWeights};
use crate::error::{Error, Result};
use crate::netir::{ActivationFn, LayerKind, NetworkSpec, TensorShape};
use crate::perfmodel::HardwareConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Oracle,
    Blocked,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerParams {
    /// Required for convolution layers.
    pub weights: Option<QuantWeights>,
    /// Output exponent after requantization. For a convolution it applies
    /// only when no activation follows. `None` picks the smallest exponent
    /// that avoids saturation.
    pub out_scale_exponent: Option<i32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

/// Output plus the accumulators of every convolution layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunTrace {
    pub output: QuantTensor,
    pub accumulators: Vec<(usize, AccTensor)>,
}

enum Value {
    Quant(QuantTensor),
    Acc(AccTensor),
}

fn settle(value: Value, exponent: Option<i32>) -> QuantTensor {
    match value {
        Value::Quant(q) => q,
        Value::Acc(acc) => {
            let e = exponent.unwrap_or_else(|| auto_exponent(&acc));
            requantize(&acc, e)
        }
    }
}

fn widen(q: &QuantTensor) -> AccTensor {
    AccTensor {
        shape: q.shape,
        data: q.data.iter().map(|&v| v as i32).collect(),
        scale_exponent: q.scale_exponent,
    }
}

pub fn run_network(
    input: &QuantTensor,
    net: &NetworkSpec,
    params: &NetworkParams,
    hw: &HardwareConfig,
    order: Order,
) -> Result<QuantTensor> {
    Ok(run_network_traced(input, net, params, hw, order, None)?.output)
}

/// Runs layers in sequence. A `fault` as `(layer, fault)` perturbs that
/// layer's blocked output.
pub fn run_network_traced(
    input: &QuantTensor,
    net: &NetworkSpec,
    params: &NetworkParams,
    hw: &HardwareConfig,
    order: Order,
    fault: Option<(usize, Fault)>,
) -> Result<RunTrace> {
    if input.shape != net.input_shape() {
        return Err(Error::ShapeMismatch(format!(
            "input {} does not match network input {}",
            input.shape,
            net.input_shape()
        )));
    }
    let layers = net.layers();
    let mut value = Value::Quant(input.clone());
    let mut accumulators = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        let p = params.layers.get(i);
        let exponent = p.and_then(|p| p.out_scale_exponent);
        value = match layer.kind {
            LayerKind::Conv(_) => {
                let weights = p
                    .and_then(|p| p.weights.as_ref())
                    .ok_or(Error::MissingParams(i))?;
                let x = settle(value, None);
                let acc = match order {
                    Order::Oracle => conv_oracle(&x, weights, layer)?,
                    Order::Blocked => {
                        let f = fault.filter(|(l, _)| *l == i).map(|(_, f)| f);
                        conv_blocked_with_fault(&x, weights, layer, hw, f)?
                    }
                };
                accumulators.push((i, acc.clone()));
                let next_is_activation = layers.get(i + 1).is_some_and(|l| l.is_activation());
                if next_is_activation {
                    Value::Acc(acc)
                } else {
                    Value::Quant(settle(Value::Acc(acc), exponent))
                }
            }
            LayerKind::Activation(act) => {
                let acc = match value {
                    Value::Acc(acc) => acc,
                    Value::Quant(q) => widen(&q),
                };
                let acc = if act == ActivationFn::Relu { relu(&acc) } else { acc };
                Value::Quant(settle(Value::Acc(acc), exponent))
            }
            LayerKind::Pool => Value::Quant(max_pool(&settle(value, None), layer)?),
        };
    }
    Ok(RunTrace {
        output: settle(value, None),
        accumulators,
    })
}

/// First differing element between the two execution orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mismatch {
    pub layer: usize,
    pub channel: usize,
    pub y: usize,
    pub x: usize,
    pub oracle: i32,
    pub blocked: i32,
}

/// Runs both orders and compares every convolution's accumulators.
pub fn compare_orders(
    input: &QuantTensor,
    net: &NetworkSpec,
    params: &NetworkParams,
    hw: &HardwareConfig,
    fault: Option<(usize, Fault)>,
) -> Result<Option<Mismatch>> {
    let oracle = run_network_traced(input, net, params, hw, Order::Oracle, None)?;
    let blocked = run_network_traced(input, net, params, hw, Order::Blocked, fault)?;
    for ((layer, a), (_, b)) in oracle.accumulators.iter().zip(&blocked.accumulators) {
        if let Some(index) = (0..a.data.len()).find(|&k| a.data[k] != b.data[k]) {
            let (channel, y, x) = a.coordinate(index);
            return Ok(Some(Mismatch {
                layer: *layer,
                channel,
                y,
                x,
                oracle: a.data[index],
                blocked: b.data[index],
            }));
        }
    }
    Ok(None)
}

pub const INPUT_EXPONENT: i32 = -7;
pub const WEIGHT_EXPONENT: i32 = -7;

pub fn random_tensor(shape: TensorShape, seed: u64) -> QuantTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QuantTensor::random(shape, INPUT_EXPONENT, &mut rng)
}

/// Seeded random weights for every convolution; exponents left automatic.
pub fn random_params(net: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let layers = net
        .layers()
        .iter()
        .map(|layer| {
            let weights = if layer.is_conv() {
                Some(QuantWeights::random(layer, WEIGHT_EXPONENT, &mut rng)?)
            } else {
                None
            };
            Ok(LayerParams {
                weights,
                out_scale_exponent: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkParams { layers })
}
