use super::graph::{Bindings, Graph};
use crate::error::Result;

/// Compares analytic gradients of the scalar root with central differences.
///
/// Returns the maximum over all parameter elements of
/// `|analytic - fd| / max(1, |fd|)`.
pub fn finite_difference_check(
    graph: &mut Graph<f64>,
    bindings: &Bindings<f64>,
    h: f64,
) -> Result<f64> {
    graph.evaluate(bindings)?;
    let analytic = graph.backward()?;
    let mut probe = bindings.clone();
    let mut worst = 0.0f64;
    for name in graph.param_names() {
        let grad = analytic.get(&name).expect("every parameter has a gradient");
        for i in 0..grad.numel() {
            let orig = probe.get(&name).expect("bound").data()[i];
            probe.get_mut(&name).expect("bound").data_mut()[i] = orig + h;
            let plus = graph.evaluate(&probe)?.item();
            probe.get_mut(&name).expect("bound").data_mut()[i] = orig - h;
            let minus = graph.evaluate(&probe)?.item();
            probe.get_mut(&name).expect("bound").data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let err = (grad.data()[i] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    // leave the graph holding values for the unperturbed bindings
    graph.evaluate(bindings)?;
    Ok(worst)
}
