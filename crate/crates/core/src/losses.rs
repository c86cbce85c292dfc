//! Training loss terms: ℓ1 reconstruction, angular gaze loss, and the
//! batch-hard embedding-consistency family (person-specific, the
//! person-independent variant, and a triplet variant).
//!
//! All angular values are radians; degrees appear only at reporting
//! boundaries.

use nalgebra::{Matrix3xX, Vector3};

use crate::error::{FazeError, Result};
use crate::geometry::{self, RotationMatrix3, ACOS_CLAMP};
use crate::latent::frontalize_gaze_code;
use crate::network::ImagePatch;

/// Person identity label used for intra-batch grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PersonId(pub u32);

impl std::fmt::Display for PersonId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p{:03}", self.0)
    }
}

/// One batch entry for the embedding-consistency losses: a gaze sub-code,
/// the sample's ground-truth gaze rotation, and its identity label.
#[derive(Debug, Clone)]
pub struct CodeSample {
    pub code: Matrix3xX<f64>,
    pub rotation: RotationMatrix3,
    pub person: PersonId,
}

/// Which embedding-consistency variant to apply during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EcVariant {
    /// Batch-hard consistency over same-identity pairs only.
    PersonSpecific,
    /// Identity constraint removed: hardest pair over the whole batch.
    PersonIndependent,
    /// Batch-hard triplet loss with the given margin (radians).
    Triplet { margin: f64 },
}

/// Mean absolute pixel difference between two equally-sized patches.
pub fn recon_l1(target: &ImagePatch, predicted: &ImagePatch) -> Result<f64> {
    if target.width() != predicted.width() || target.height() != predicted.height() {
        return Err(FazeError::invalid(format!(
            "patch dimensions differ: {}x{} vs {}x{}",
            target.width(),
            target.height(),
            predicted.width(),
            predicted.height()
        )));
    }
    let n = target.pixels().len() as f64;
    let sum: f64 = target
        .pixels()
        .iter()
        .zip(predicted.pixels())
        .map(|(t, p)| (p - t).abs())
        .sum();
    Ok(sum / n)
}

/// Angular error between a predicted and a target gaze direction, radians.
pub fn gaze_angular_loss(predicted: &Vector3<f64>, target: &Vector3<f64>) -> Result<f64> {
    geometry::angular_distance(predicted, target)
}

/// Mean over columns of the angle between corresponding 3D column vectors.
pub fn mean_columnwise_angular_distance(a: &Matrix3xX<f64>, b: &Matrix3xX<f64>) -> Result<f64> {
    Ok(mcad_with_grad(a, b)?.0)
}

/// Like [`mean_columnwise_angular_distance`] but also returns the gradients
/// with respect to both inputs.
pub(crate) fn mcad_with_grad(
    a: &Matrix3xX<f64>,
    b: &Matrix3xX<f64>,
) -> Result<(f64, Matrix3xX<f64>, Matrix3xX<f64>)> {
    if a.ncols() != b.ncols() {
        return Err(FazeError::invalid(format!(
            "column counts differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let cols = a.ncols();
    let mut value = 0.0;
    let mut da = Matrix3xX::zeros(cols);
    let mut db = Matrix3xX::zeros(cols);
    for c in 0..cols {
        let ac = a.column(c).into_owned();
        let bc = b.column(c).into_owned();
        let (na, nb) = (ac.norm(), bc.norm());
        if na < 1e-12 || nb < 1e-12 {
            return Err(FazeError::invalid(format!(
                "zero column {c} in angular distance"
            )));
        }
        let cos = ac.dot(&bc) / (na * nb);
        value += geometry::clamped_acos(cos);
        // Zero gradient in the clamped region.
        if cos.abs() <= ACOS_CLAMP {
            let dacos = -1.0 / (1.0 - cos * cos).sqrt() / cols as f64;
            let dcos_da = bc / (na * nb) - ac * (cos / (na * na));
            let dcos_db = ac / (na * nb) - bc * (cos / (nb * nb));
            da.set_column(c, &(dcos_da * dacos));
            db.set_column(c, &(dcos_db * dacos));
        }
    }
    Ok((value / cols as f64, da, db))
}

fn frontalized(batch: &[CodeSample]) -> Vec<Matrix3xX<f64>> {
    batch
        .iter()
        .map(|s| frontalize_gaze_code(&s.code, &s.rotation))
        .collect()
}

/// Batch-hard embedding consistency: for each sample with at least one
/// same-identity partner, the maximum frontalized distance to a partner;
/// averaged over such samples. Samples without partners contribute nothing.
pub fn embedding_consistency_loss(batch: &[CodeSample]) -> Result<f64> {
    Ok(ec_loss_and_code_grads(batch, EcVariant::PersonSpecific)?.0)
}

/// [`embedding_consistency_loss`] with the identity constraint removed.
pub fn person_independent_ec_loss(batch: &[CodeSample]) -> Result<f64> {
    if batch.len() < 2 {
        return Err(FazeError::invalid(
            "person-independent consistency needs a batch of at least 2",
        ));
    }
    Ok(ec_loss_and_code_grads(batch, EcVariant::PersonIndependent)?.0)
}

/// Result of [`triplet_ec_loss`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletEcLoss {
    pub value: f64,
    /// Set when no anchor had both a positive and a negative; the value is 0.
    pub no_valid_triplet: bool,
}

/// Batch-hard triplet loss on frontalized codes: per anchor,
/// `max(0, hardest-positive − hardest-negative + margin)`, averaged over
/// anchors that have both a positive and a negative.
pub fn triplet_ec_loss(batch: &[CodeSample], margin: f64) -> Result<TripletEcLoss> {
    let (value, _, had_triplet) =
        ec_loss_grads_inner(batch, EcVariant::Triplet { margin }, false)?;
    Ok(TripletEcLoss {
        value,
        no_valid_triplet: !had_triplet,
    })
}

/// Loss value plus gradients with respect to the raw (non-frontalized)
/// codes, for use inside the training step.
pub(crate) fn ec_loss_and_code_grads(
    batch: &[CodeSample],
    variant: EcVariant,
) -> Result<(f64, Vec<Matrix3xX<f64>>)> {
    let (value, grads, _) = ec_loss_grads_inner(batch, variant, true)?;
    Ok((value, grads))
}

fn ec_loss_grads_inner(
    batch: &[CodeSample],
    variant: EcVariant,
    with_grads: bool,
) -> Result<(f64, Vec<Matrix3xX<f64>>, bool)> {
    let n = batch.len();
    let cols = batch.first().map(|s| s.code.ncols()).unwrap_or(0);
    if batch.iter().any(|s| s.code.ncols() != cols) {
        return Err(FazeError::invalid("mixed gaze-code widths in batch"));
    }
    let front = frontalized(batch);
    let mut front_grads: Vec<Matrix3xX<f64>> = if with_grads {
        vec![Matrix3xX::zeros(cols); n]
    } else {
        Vec::new()
    };

    // Pairwise frontalized distances with per-side gradients, computed lazily.
    let mut sum = 0.0;
    let mut contributing = 0usize;
    let mut any_triplet = false;

    for i in 0..n {
        match variant {
            EcVariant::PersonSpecific | EcVariant::PersonIndependent => {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    if matches!(variant, EcVariant::PersonSpecific)
                        && batch[j].person != batch[i].person
                    {
                        continue;
                    }
                    let d = mean_columnwise_angular_distance(&front[i], &front[j])?;
                    // Strict comparison keeps the first maximal index on ties.
                    if best.map(|(_, b)| d > b).unwrap_or(true) {
                        best = Some((j, d));
                    }
                }
                if let Some((j, d)) = best {
                    sum += d;
                    contributing += 1;
                    if with_grads {
                        let (_, da, db) = mcad_with_grad(&front[i], &front[j])?;
                        front_grads[i] += da;
                        front_grads[j] += db;
                    }
                }
            }
            EcVariant::Triplet { margin } => {
                let mut pos: Option<(usize, f64)> = None;
                let mut neg: Option<(usize, f64)> = None;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let d = mean_columnwise_angular_distance(&front[i], &front[j])?;
                    if batch[j].person == batch[i].person {
                        if pos.map(|(_, b)| d > b).unwrap_or(true) {
                            pos = Some((j, d));
                        }
                    } else if neg.map(|(_, b)| d < b).unwrap_or(true) {
                        neg = Some((j, d));
                    }
                }
                if let (Some((jp, dp)), Some((jn, dn))) = (pos, neg) {
                    any_triplet = true;
                    contributing += 1;
                    let hinge = dp - dn + margin;
                    if hinge > 0.0 {
                        sum += hinge;
                        if with_grads {
                            let (_, dai, dap) = mcad_with_grad(&front[i], &front[jp])?;
                            let (_, dbi, dbn) = mcad_with_grad(&front[i], &front[jn])?;
                            front_grads[i] += dai - dbi;
                            front_grads[jp] += dap;
                            front_grads[jn] -= dbn;
                        }
                    }
                }
            }
        }
    }

    let value = if contributing == 0 {
        0.0
    } else {
        sum / contributing as f64
    };
    let code_grads = if with_grads && contributing > 0 {
        let scale = 1.0 / contributing as f64;
        batch
            .iter()
            .zip(front_grads)
            .map(|(s, g)| s.rotation.matrix() * g * scale)
            .collect()
    } else if with_grads {
        front_grads
    } else {
        Vec::new()
    };
    Ok((value, code_grads, any_triplet))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{euler_to_rotation, EulerAngles};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix3 {
        euler_to_rotation(&EulerAngles::new(
            rng.random_range(-1.2..1.2),
            rng.random_range(-1.2..1.2),
        ))
        .unwrap()
    }

    fn random_code(rng: &mut ChaCha8Rng, cols: usize) -> Matrix3xX<f64> {
        Matrix3xX::from_fn(cols, |_, _| rng.random_range(-1.5..1.5))
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, persons: u32, cols: usize) -> Vec<CodeSample> {
        (0..n)
            .map(|_| CodeSample {
                code: random_code(rng, cols),
                rotation: random_rotation(rng),
                person: PersonId(rng.random_range(0..persons)),
            })
            .collect()
    }

    // Brute-force oracles, written independently of the implementation path.

    fn oracle_col_angle(a: &Matrix3xX<f64>, b: &Matrix3xX<f64>) -> f64 {
        let mut acc = 0.0;
        for c in 0..a.ncols() {
            let (ac, bc) = (a.column(c), b.column(c));
            let cos = ac.dot(&bc) / (ac.norm() * bc.norm());
            acc += cos.clamp(-ACOS_CLAMP, ACOS_CLAMP).acos();
        }
        acc / a.ncols() as f64
    }

    fn oracle_ec(batch: &[CodeSample], respect_identity: bool) -> f64 {
        let front: Vec<_> = batch
            .iter()
            .map(|s| s.rotation.matrix().transpose() * &s.code)
            .collect();
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..batch.len() {
            let mut best = f64::NEG_INFINITY;
            for j in 0..batch.len() {
                if i == j || (respect_identity && batch[i].person != batch[j].person) {
                    continue;
                }
                best = best.max(oracle_col_angle(&front[i], &front[j]));
            }
            if best > f64::NEG_INFINITY {
                sum += best;
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    fn oracle_triplet(batch: &[CodeSample], margin: f64) -> (f64, bool) {
        let front: Vec<_> = batch
            .iter()
            .map(|s| s.rotation.matrix().transpose() * &s.code)
            .collect();
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..batch.len() {
            let mut dp = f64::NEG_INFINITY;
            let mut dn = f64::INFINITY;
            for j in 0..batch.len() {
                if i == j {
                    continue;
                }
                let d = oracle_col_angle(&front[i], &front[j]);
                if batch[i].person == batch[j].person {
                    dp = dp.max(d);
                } else {
                    dn = dn.min(d);
                }
            }
            if dp > f64::NEG_INFINITY && dn < f64::INFINITY {
                sum += (dp - dn + margin).max(0.0);
                count += 1;
            }
        }
        if count == 0 {
            (0.0, false)
        } else {
            (sum / count as f64, true)
        }
    }

    #[test]
    fn recon_l1_hand_cases() {
        let a = ImagePatch::new(2, 1, vec![0.2, 0.8]).unwrap();
        let b = ImagePatch::new(2, 1, vec![0.5, 0.4]).unwrap();
        assert!((recon_l1(&a, &b).unwrap() - 0.35).abs() < 1e-15);
        assert_eq!(recon_l1(&a, &a).unwrap(), 0.0);
        let zeros = ImagePatch::new(3, 2, vec![0.0; 6]).unwrap();
        let ones = ImagePatch::new(3, 2, vec![1.0; 6]).unwrap();
        assert_eq!(recon_l1(&zeros, &ones).unwrap(), 1.0);
        assert!(recon_l1(&a, &zeros).is_err());
    }

    #[test]
    fn gaze_angular_loss_basics() {
        let g = Vector3::new(0.2, -0.1, 0.97);
        assert!(gaze_angular_loss(&g, &g).unwrap() < 1e-3);
        assert!(
            (gaze_angular_loss(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(0.0, 1.0, 0.0))
                .unwrap()
                - std::f64::consts::FRAC_PI_2)
                .abs()
                < 1e-12
        );
        assert!((gaze_angular_loss(&g, &(-g)).unwrap() - std::f64::consts::PI).abs() < 1e-3);
        assert!(gaze_angular_loss(&Vector3::zeros(), &g).is_err());
    }

    #[test]
    fn columnwise_distance_hand_cases() {
        let a = Matrix3xX::from_columns(&[
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ]);
        // Each column rotated by 90°.
        let b = Matrix3xX::from_columns(&[
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ]);
        let d = mean_columnwise_angular_distance(&a, &b).unwrap();
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

        assert!(mean_columnwise_angular_distance(&a, &a).unwrap() < 1e-3);
        let neg = -a.clone();
        assert!(
            (mean_columnwise_angular_distance(&a, &neg).unwrap() - std::f64::consts::PI).abs()
                < 1e-3
        );
        let zero_col = Matrix3xX::from_columns(&[
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        ]);
        assert!(mean_columnwise_angular_distance(&a, &zero_col).is_err());
    }

    #[test]
    fn ec_zero_when_frontalized_codes_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let base = random_code(&mut rng, 2);
        let batch: Vec<CodeSample> = (0..4)
            .map(|_| {
                let r = random_rotation(&mut rng);
                CodeSample {
                    code: r.matrix() * &base,
                    rotation: r,
                    person: PersonId(0),
                }
            })
            .collect();
        assert!(embedding_consistency_loss(&batch).unwrap() < 1e-3);
    }

    #[test]
    fn ec_zero_for_all_distinct_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let batch: Vec<CodeSample> = (0..5)
            .map(|i| CodeSample {
                code: random_code(&mut rng, 2),
                rotation: random_rotation(&mut rng),
                person: PersonId(i),
            })
            .collect();
        assert_eq!(embedding_consistency_loss(&batch).unwrap(), 0.0);
    }

    #[test]
    fn ec_matches_brute_force_on_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..50 {
            let n = rng.random_range(2..32);
            let persons = rng.random_range(1..6);
            let batch = random_batch(&mut rng, n, persons, 2);
            let got = embedding_consistency_loss(&batch).unwrap();
            assert!((got - oracle_ec(&batch, true)).abs() < 1e-12);
            let got_pi = person_independent_ec_loss(&batch).unwrap();
            assert!((got_pi - oracle_ec(&batch, false)).abs() < 1e-12);
        }
    }

    #[test]
    fn pi_ec_equals_ec_for_single_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let batch = random_batch(&mut rng, 8, 1, 2);
        let a = embedding_consistency_loss(&batch).unwrap();
        let b = person_independent_ec_loss(&batch).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn ec_invariant_under_common_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..50 {
            let batch = random_batch(&mut rng, 10, 3, 2);
            let extra = random_rotation(&mut rng);
            let rotated: Vec<CodeSample> = batch
                .iter()
                .map(|s| CodeSample {
                    code: extra.matrix() * &s.code,
                    rotation: extra.compose(&s.rotation),
                    person: s.person,
                })
                .collect();
            let a = embedding_consistency_loss(&batch).unwrap();
            let b = embedding_consistency_loss(&rotated).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn losses_invariant_under_batch_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let batch = random_batch(&mut rng, 12, 3, 2);
        let mut reversed = batch.clone();
        reversed.reverse();
        assert!(
            (embedding_consistency_loss(&batch).unwrap()
                - embedding_consistency_loss(&reversed).unwrap())
            .abs()
                < 1e-12
        );
        assert!(
            (triplet_ec_loss(&batch, 0.2).unwrap().value
                - triplet_ec_loss(&reversed, 0.2).unwrap().value)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn triplet_hand_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        // Two identical same-person codes (positive distance 0) and one far
        // negative: a satisfied margin.
        let base = random_code(&mut rng, 2);
        let far = Matrix3xX::from_columns(&[
            -base.column(0).into_owned(),
            -base.column(1).into_owned(),
        ]);
        let id = RotationMatrix3::identity();
        let batch = vec![
            CodeSample {
                code: base.clone(),
                rotation: id,
                person: PersonId(0),
            },
            CodeSample {
                code: base.clone(),
                rotation: id,
                person: PersonId(0),
            },
            CodeSample {
                code: far,
                rotation: id,
                person: PersonId(1),
            },
        ];
        let t = triplet_ec_loss(&batch, 0.2).unwrap();
        assert!(!t.no_valid_triplet);
        assert!(t.value < 1e-3);

        // Positive and negative at equal distances: hinge sits at the margin.
        let equal = vec![
            CodeSample {
                code: base.clone(),
                rotation: id,
                person: PersonId(0),
            },
            CodeSample {
                code: base.clone(),
                rotation: id,
                person: PersonId(0),
            },
            CodeSample {
                code: base.clone(),
                rotation: id,
                person: PersonId(1),
            },
        ];
        let t = triplet_ec_loss(&equal, 0.2).unwrap();
        // anchors 0/1: dp = 0 (to each other) = dn = 0, hinge = margin;
        // anchor 2 has no positive.
        assert!((t.value - 0.2).abs() < 1e-3);
    }

    #[test]
    fn triplet_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        for _ in 0..50 {
            let n = rng.random_range(3..24);
            let batch = random_batch(&mut rng, n, 3, 2);
            let got = triplet_ec_loss(&batch, 0.2).unwrap();
            let (want, had) = oracle_triplet(&batch, 0.2);
            assert_eq!(got.no_valid_triplet, !had);
            assert!((got.value - want).abs() < 1e-12);
        }
    }

    #[test]
    fn triplet_without_valid_triplets_warns() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        // All same identity: no negatives anywhere.
        let batch = random_batch(&mut rng, 4, 1, 2);
        let t = triplet_ec_loss(&batch, 0.2).unwrap();
        assert!(t.no_valid_triplet);
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn ec_code_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for variant in [
            EcVariant::PersonSpecific,
            EcVariant::PersonIndependent,
            EcVariant::Triplet { margin: 0.2 },
        ] {
            let mut batch = random_batch(&mut rng, 6, 2, 2);
            let (_, grads) = ec_loss_and_code_grads(&batch, variant).unwrap();
            let eps = 1e-6;
            for s in 0..batch.len() {
                for r in 0..3 {
                    for c in 0..2 {
                        let orig = batch[s].code[(r, c)];
                        batch[s].code[(r, c)] = orig + eps;
                        let fp = ec_loss_grads_inner(&batch, variant, false).unwrap().0;
                        batch[s].code[(r, c)] = orig - eps;
                        let fm = ec_loss_grads_inner(&batch, variant, false).unwrap().0;
                        batch[s].code[(r, c)] = orig;
                        let numeric = (fp - fm) / (2.0 * eps);
                        let analytic = grads[s][(r, c)];
                        assert!(
                            (numeric - analytic).abs() < 1e-6,
                            "variant {variant:?} sample {s} ({r},{c}): {numeric} vs {analytic}"
                        );
                    }
                }
            }
        }
    }
}
