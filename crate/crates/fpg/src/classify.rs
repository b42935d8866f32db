//! Sample-based classification predicates: Berwald and Douglas tests and
//! the projective-flatness report for a changed spray.
//!
//! "Vanishes identically" is undecidable numerically, so every verdict is
//! explicitly sample-relative: a predicate *holds* when the residual stays
//! below the threshold at every tested sample, *fails* when some sample
//! exceeds it, and is *inconclusive* when any sample could not be evaluated.
//! The threshold scales with the observed tensor magnitude, which makes
//! verdicts monotone: enlarging the sample set can only flip holds → fails,
//! never the reverse.

use crate::error::{Error, Result};
use crate::jet::EvalPoint;
use crate::metrics::SprayData;
use crate::projective::{apply_projective_change, weyl_deviation_and_torsion, ProjectiveFactor};
use crate::spray::{h_curvature, hv_curvature};

/// Relative part of the verdict threshold τ = `TAU_REL`·(1 + tensor scale).
pub const TAU_REL: f64 = 1e-8;

const MIN_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Holds,
    Fails,
    Inconclusive,
}

/// One sample-relative predicate result.
#[derive(Clone, Debug)]
pub struct Verdict {
    pub predicate: String,
    pub samples: usize,
    pub max_residual: f64,
    pub threshold: f64,
    pub outcome: Outcome,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        self.outcome == Outcome::Holds
    }
}

/// Fold per-sample tensor magnitudes into a verdict. An evaluation error at
/// any sample makes the verdict inconclusive (and is recorded, not
/// propagated: partial information is still information).
fn verdict_from_samples<F>(predicate: &str, samples: &[EvalPoint], mut norm: F) -> Result<Verdict>
where
    F: FnMut(&EvalPoint) -> Result<f64>,
{
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Usage(format!(
            "classification needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let mut max_residual: f64 = 0.0;
    let mut errored = false;
    for p in samples {
        match norm(p) {
            Ok(v) => max_residual = max_residual.max(v),
            Err(_) => errored = true,
        }
    }
    let threshold = TAU_REL * (1.0 + max_residual);
    let outcome = if errored {
        Outcome::Inconclusive
    } else if max_residual <= threshold {
        Outcome::Holds
    } else {
        Outcome::Fails
    };
    Ok(Verdict {
        predicate: predicate.to_string(),
        samples: samples.len(),
        max_residual,
        threshold,
        outcome,
    })
}

/// Berwald test: the hv-curvature P° vanishes on the samples (equivalently,
/// the connection coefficients G^i_jk are y-independent).
pub fn is_berwald(s: &SprayData, samples: &[EvalPoint]) -> Result<Verdict> {
    verdict_from_samples("berwald", samples, |p| {
        Ok(hv_curvature(s, p)?.max_abs())
    })
}

/// Douglas test: the Douglas tensor ℙ vanishes on the samples.
pub fn is_douglas(s: &SprayData, samples: &[EvalPoint]) -> Result<Verdict> {
    verdict_from_samples("douglas", samples, |p| {
        Ok(crate::projective::douglas_tensor(s, p)?.max_abs())
    })
}

/// Flatness report for the projective change G̃ = G + λy.
#[derive(Clone, Debug)]
pub struct FlatnessReport {
    /// hv-projective flatness: P̃° ≡ 0 on the samples.
    pub hv_flat: Verdict,
    /// h-projective flatness: R̃° ≡ 0 on the samples.
    pub h_flat: Verdict,
    /// Projective flatness: both curvatures vanish.
    pub projectively_flat: Verdict,
    /// Douglas test on the *base* spray.
    pub douglas: Verdict,
    /// hv-flat ⇒ Douglas: false only if the implication is violated.
    pub hv_flat_implies_douglas: bool,
    /// When the h-flat verdict holds, the Weyl torsion must vanish too:
    /// max‖W₂‖ over the samples, and whether it stayed ≤ 10τ.
    pub weyl_torsion_check: Option<(f64, bool)>,
}

pub fn flatness_report(
    s: &SprayData,
    lambda: &ProjectiveFactor,
    samples: &[EvalPoint],
) -> Result<FlatnessReport> {
    let changed = apply_projective_change(s, lambda)?;
    let hv_flat = verdict_from_samples("hv-projectively-flat", samples, |p| {
        Ok(hv_curvature(&changed, p)?.max_abs())
    })?;
    let h_flat = verdict_from_samples("h-projectively-flat", samples, |p| {
        Ok(h_curvature(&changed, p)?.max_abs())
    })?;
    let projectively_flat = Verdict {
        predicate: "projectively-flat".to_string(),
        samples: samples.len(),
        max_residual: hv_flat.max_residual.max(h_flat.max_residual),
        threshold: hv_flat.threshold.max(h_flat.threshold),
        outcome: match (hv_flat.outcome, h_flat.outcome) {
            (Outcome::Inconclusive, _) | (_, Outcome::Inconclusive) => Outcome::Inconclusive,
            (Outcome::Holds, Outcome::Holds) => Outcome::Holds,
            _ => Outcome::Fails,
        },
    };
    let douglas = is_douglas(s, samples)?;
    let hv_flat_implies_douglas = !hv_flat.holds() || douglas.holds();
    // W₂ is projectively invariant, so it may be read off either spray; the
    // changed spray keeps the check self-contained.
    let weyl_torsion_check = if h_flat.holds() {
        let mut w2_max: f64 = 0.0;
        for p in samples {
            let (_, w2) = weyl_deviation_and_torsion(&changed, p)?;
            w2_max = w2_max.max(w2.max_abs());
        }
        Some((w2_max, w2_max <= 10.0 * h_flat.threshold))
    } else {
        None
    };
    Ok(FlatnessReport {
        hv_flat,
        h_flat,
        projectively_flat,
        douglas,
        hv_flat_implies_douglas,
        weyl_torsion_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sample::{sample_points, Domain};

    fn samples(seed: u64, count: usize) -> Vec<EvalPoint> {
        sample_points(3, &Domain::default_box(3), seed, count)
    }

    fn lam_zero() -> ProjectiveFactor {
        ProjectiveFactor::new(fixtures::lambda_zero(), "zero").unwrap()
    }

    #[test]
    fn riemannian_and_minkowski_sprays_are_berwald() {
        let pts = samples(5, 10);
        for m in [fixtures::m_euc(), fixtures::m_sph(), fixtures::m_mink()] {
            let v = is_berwald(&m.canonical_spray(), &pts).unwrap();
            assert!(v.holds(), "{}: {v:?}", m.family_name());
        }
    }

    #[test]
    fn randers_spray_is_not_berwald_or_douglas() {
        let pts = samples(5, 10);
        let s = fixtures::m_rand().canonical_spray();
        let b = is_berwald(&s, &pts).unwrap();
        assert_eq!(b.outcome, Outcome::Fails);
        assert!(b.max_residual > 1e-3, "{}", b.max_residual);
        let d = is_douglas(&s, &pts).unwrap();
        assert_eq!(d.outcome, Outcome::Fails);
    }

    #[test]
    fn berwald_sprays_are_douglas() {
        let pts = samples(6, 10);
        for m in [fixtures::m_sph(), fixtures::m_mink()] {
            let v = is_douglas(&m.canonical_spray(), &pts).unwrap();
            assert!(v.holds(), "{}: {v:?}", m.family_name());
        }
    }

    #[test]
    fn projective_image_of_a_berwald_spray_is_douglas() {
        let lam = ProjectiveFactor::new(fixtures::lambda_lin(), "lin").unwrap();
        let changed =
            apply_projective_change(&fixtures::m_sph().canonical_spray(), &lam).unwrap();
        let v = is_douglas(&changed, &samples(7, 10)).unwrap();
        assert!(v.holds(), "{v:?}");
    }

    #[test]
    fn euclidean_identity_change_is_flat() {
        let r = flatness_report(
            &fixtures::m_euc().canonical_spray(),
            &lam_zero(),
            &samples(8, 10),
        )
        .unwrap();
        assert!(r.hv_flat.holds());
        assert!(r.h_flat.holds());
        assert!(r.projectively_flat.holds());
        assert!(r.hv_flat_implies_douglas);
        let (w2, ok) = r.weyl_torsion_check.unwrap();
        assert!(ok, "w2 max {w2}");
    }

    #[test]
    fn curved_space_is_hv_flat_but_not_h_flat() {
        let r = flatness_report(
            &fixtures::m_sph().canonical_spray(),
            &lam_zero(),
            &samples(9, 10),
        )
        .unwrap();
        assert!(r.hv_flat.holds());
        assert_eq!(r.h_flat.outcome, Outcome::Fails);
        assert_eq!(r.projectively_flat.outcome, Outcome::Fails);
        assert!(r.hv_flat_implies_douglas);
        assert!(r.weyl_torsion_check.is_none());
    }

    #[test]
    fn implication_never_violated_on_the_fixture_grid() {
        let pts = samples(10, 10);
        let lams = || {
            [
                ProjectiveFactor::new(fixtures::lambda_zero(), "zero").unwrap(),
                ProjectiveFactor::new(fixtures::lambda_lin(), "lin").unwrap(),
            ]
        };
        for m in [
            fixtures::m_euc(),
            fixtures::m_sph(),
            fixtures::m_rand(),
            fixtures::m_mink(),
        ] {
            for lam in lams() {
                let r = flatness_report(&m.canonical_spray(), &lam, &pts).unwrap();
                assert!(r.hv_flat_implies_douglas, "{}", m.family_name());
            }
        }
    }

    #[test]
    fn enlarging_samples_never_flips_fails_to_holds() {
        let s = fixtures::m_rand().canonical_spray();
        let small = is_berwald(&s, &samples(11, 10)).unwrap();
        assert_eq!(small.outcome, Outcome::Fails);
        let large = is_berwald(&s, &samples(11, 25)).unwrap();
        assert_eq!(large.outcome, Outcome::Fails);
        assert!(large.max_residual >= small.max_residual);
    }

    #[test]
    fn too_few_samples_rejected() {
        let s = fixtures::m_euc().canonical_spray();
        assert!(matches!(
            is_berwald(&s, &samples(12, 9)),
            Err(Error::Usage(_))
        ));
    }
}
