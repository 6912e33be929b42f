use crate::error::{Error, Result};

/// One step of classical momentum SGD with L2 decay:
/// `buf <- mu buf + (grad + l2 theta)`, `theta <- theta - lr buf`.
///
/// A non-finite gradient aborts with the step index before anything is
/// modified.
pub fn sgd_step(
    params: &mut [f64],
    grads: &[f64],
    buffer: &mut [f64],
    lr: f64,
    momentum: f64,
    l2: f64,
    step: usize,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != buffer.len() {
        return Err(Error::shape(format!(
            "sgd step with {} params, {} grads, {} buffers",
            params.len(),
            grads.len(),
            buffer.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!(
            "non-finite gradient component {i} at step {step}"
        )));
    }
    for ((p, &g), b) in params.iter_mut().zip(grads).zip(buffer.iter_mut()) {
        *b = momentum * *b + (g + l2 * *p);
        *p -= lr * *b;
    }
    Ok(())
}
