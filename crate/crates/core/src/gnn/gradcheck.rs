use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, init_params, initial_embeddings, EmbeddingFrame, GnnError, GnnHyper, GnnParams};
use crate::grounding::State;
use crate::pddl::{Domain, GroundAtom, ObjId, PredId};

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is numerically zero are compared in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Parameter index attaining `max_rel_error`.
    pub worst_index: usize,
    pub checked: usize,
    /// Coordinates skipped because a perturbation switched a ReLU, where
    /// the finite difference straddles a kink and is not a derivative.
    pub skipped: usize,
}

impl GradcheckReport {
    pub fn merge(&mut self, other: &GradcheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst_index = other.worst_index;
        }
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

/// Compares the analytic gradient of `V` against central differences on
/// every parameter coordinate.
pub fn gradcheck(params: &GnnParams, state: &State, frame: &EmbeddingFrame) -> Result<GradcheckReport, GnnError> {
    let tape = forward(params, state, frame)?;
    let pattern = tape.activation_pattern();
    let analytic = backward(&tape, params)?;
    let mut work = params.clone();
    let mut report = GradcheckReport::default();
    for i in 0..params.len() {
        let orig = params.values()[i];
        work.values_mut()[i] = orig + GRADCHECK_STEP;
        let plus = forward(&work, state, frame)?;
        work.values_mut()[i] = orig - GRADCHECK_STEP;
        let minus = forward(&work, state, frame)?;
        work.values_mut()[i] = orig;
        if plus.activation_pattern() != pattern || minus.activation_pattern() != pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus.value() - minus.value()) / (2.0 * GRADCHECK_STEP);
        let a = analytic.values[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Keeps each possible atom over `num_objects` objects with probability
/// `density`. The result need not be reachable in any instance.
pub fn random_state(domain: &Domain, num_objects: usize, density: f64, rng: &mut impl Rng) -> State {
    let mut atoms = Vec::new();
    for (i, p) in domain.predicates.iter().enumerate() {
        for mut code in 0..num_objects.pow(p.arity as u32) {
            let args: Vec<ObjId> = (0..p.arity)
                .map(|_| {
                    let o = ObjId((code % num_objects) as u32);
                    code /= num_objects;
                    o
                })
                .collect();
            if rng.random_bool(density) {
                atoms.push(GroundAtom::new(PredId(i as u32), args));
            }
        }
    }
    State::new(atoms)
}

/// [`gradcheck`] over `states` random states of one to three objects for
/// each parameter seed `hyper.seed .. hyper.seed + seeds`. `rng_seed`
/// drives the states and the initial embeddings.
pub fn gradcheck_suite(
    domain: &Domain,
    hyper: GnnHyper,
    states: usize,
    seeds: u64,
    rng_seed: u64,
) -> Result<GradcheckReport, GnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let sample: Vec<(usize, State)> = (0..states)
        .map(|_| {
            let n = rng.random_range(1..=3);
            (n, random_state(domain, n, 0.3, &mut rng))
        })
        .collect();
    let mut total = GradcheckReport::default();
    for seed in hyper.seed..hyper.seed + seeds {
        let params = init_params(domain, GnnHyper { seed, ..hyper })?;
        for (n, s) in &sample {
            let frame = initial_embeddings(*n, hyper.k, &mut rng);
            total.merge(&gradcheck(&params, s, &frame)?);
        }
    }
    Ok(total)
}
