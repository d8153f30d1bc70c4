use super::Target;

/// `½(xᵀθ − y)²`, gradient `(xᵀθ − y)·x`.
pub(super) fn sample(theta: &[f64], x: &[f64], target: Target, grad: Option<&mut [f64]>) -> f64 {
    let Target::Real(y) = target else {
        unreachable!("least squares given a class label")
    };
    let residual = theta.iter().zip(x).map(|(t, xi)| t * xi).sum::<f64>() - y;
    if let Some(g) = grad {
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj = residual * xj;
        }
    }
    0.5 * residual * residual
}
