use super::evaluate::Spectrum;
use super::solution::SolverOptions;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Step {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Outcome {
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Drives `(α, β) ← step(α, β)` until `t = α/β` settles.
///
/// On non-convergence the iterate with the highest evidence is returned. A
/// vanishing posterior mean after the first step means `t` ran off towards
/// infinity and is treated the same way.
pub(crate) fn run<F>(
    options: &SolverOptions,
    spectrum: &Spectrum<'_>,
    mut step: F,
) -> Result<Outcome>
where
    F: FnMut(f64, f64) -> Result<Step>,
{
    let mut alpha = options.initial_alpha;
    let mut beta = options.initial_beta;
    let mut best: Option<(f64, Step)> = None;

    for iteration in 1..=options.max_iterations {
        let t = alpha / beta;
        let next = match (step(alpha, beta), best) {
            (Ok(next), _) => next,
            (Err(Error::DegenerateLabels(_)), Some((_, s))) => {
                log::warn!("posterior mean vanished at step {iteration} (t = {t:e})");
                return Ok(Outcome {
                    alpha: s.alpha,
                    beta: s.beta,
                    iterations: iteration,
                    converged: false,
                });
            }
            (Err(e), _) => return Err(e),
        };
        let valid =
            next.alpha.is_finite() && next.beta.is_finite() && next.alpha > 0.0 && next.beta > 0.0;
        if !valid {
            log::warn!("evidence iteration left the positive orthant at step {iteration}");
            let (a, b) = best
                .map(|(_, s)| (s.alpha, s.beta))
                .unwrap_or((alpha, beta));
            return Ok(Outcome {
                alpha: a,
                beta: b,
                iterations: iteration,
                converged: false,
            });
        }
        let score = spectrum.log_evidence(next.alpha, next.beta);
        if best.map_or(true, |(s, _)| score > s) {
            best = Some((score, next));
        }
        alpha = next.alpha;
        beta = next.beta;
        if ((alpha / beta) - t).abs() <= options.tolerance * t {
            return Ok(Outcome {
                alpha,
                beta,
                iterations: iteration,
                converged: true,
            });
        }
    }

    log::warn!(
        "evidence iteration did not converge in {} steps",
        options.max_iterations
    );
    let (_, s) = best.expect("at least one valid iterate");
    Ok(Outcome {
        alpha: s.alpha,
        beta: s.beta,
        iterations: options.max_iterations,
        converged: false,
    })
}
