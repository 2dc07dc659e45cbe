//! Paired significance testing: Student-t p-values via the regularized
//! incomplete beta function, Bonferroni-adjusted pairwise comparison tables,
//! and the numerically stable mean used by every aggregate in this crate.

use std::collections::BTreeMap;

use super::EvalError;

/// Lanczos approximation (g = 7, 9 coefficients), accurate to ~1e-13 over
/// the positive reals.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx).
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().abs().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function, evaluated with the
/// modified Lentz method.
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-15;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// I_x(a, b), the regularized incomplete beta function.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    assert!((0.0..=1.0).contains(&x), "x must lie in [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The continued fraction converges fast only below the distribution's
    // bulk; use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the other side.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value for a Student-t statistic with `dof` degrees of
/// freedom: P(|T| ≥ |t|) = I_{ν/(ν+t²)}(ν/2, 1/2).
pub fn t_two_sided_p(t: f64, dof: u64) -> f64 {
    assert!(dof >= 1, "need at least one degree of freedom");
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let v = dof as f64;
    regularized_incomplete_beta(v / 2.0, 0.5, v / (v + t * t))
}

/// Pairwise (cascade) summation: deterministic and far more stable than a
/// running sum on long, similar-magnitude inputs.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        n if n <= 8 => values.iter().sum(),
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

pub fn stable_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub n: u64,
    pub mean_diff: f64,
}

/// Classic paired t-test over two per-query score maps covering the same
/// queries. When every difference is structurally identical the sampling
/// variance is zero, so by convention: mean 0 → (t=0, p=1), anything else →
/// p=0 with an infinite t carrying the sign of the difference.
pub fn paired_ttest(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<TTest, EvalError> {
    let only_a: Vec<String> = a.keys().filter(|k| !b.contains_key(*k)).cloned().collect();
    let only_b: Vec<String> = b.keys().filter(|k| !a.contains_key(*k)).cloned().collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(EvalError::KeyMismatch { only_a, only_b });
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewPairs(n));
    }
    let diffs: Vec<f64> = a.iter().map(|(k, va)| va - b[k]).collect();
    let mean = stable_mean(&diffs);
    let all_equal = diffs.iter().all(|d| *d == diffs[0]);
    if all_equal {
        return Ok(if mean == 0.0 {
            TTest { t: 0.0, p: 1.0, n: n as u64, mean_diff: 0.0 }
        } else {
            TTest { t: f64::INFINITY.copysign(mean), p: 0.0, n: n as u64, mean_diff: mean }
        });
    }
    let var = pairwise_sum(&diffs.iter().map(|d| (d - mean).powi(2)).collect::<Vec<_>>())
        / (n as f64 - 1.0);
    let t = mean / (var / n as f64).sqrt();
    Ok(TTest { t, p: t_two_sided_p(t, n as u64 - 1), n: n as u64, mean_diff: mean })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    /// Indices into the system list.
    pub a: usize,
    pub b: usize,
    pub t: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceTable {
    pub systems: Vec<String>,
    pub alpha: f64,
    /// Bonferroni multiplier: the number of unordered pairs.
    pub multiplier: u64,
    pub pairs: Vec<PairComparison>,
}

impl SignificanceTable {
    fn pair(&self, i: usize, j: usize) -> &PairComparison {
        self.pairs
            .iter()
            .find(|p| (p.a, p.b) == (i.min(j), i.max(j)))
            .expect("all pairs present")
    }

    /// Single-letter label for a system, used in the annotation column.
    pub fn letter(&self, i: usize) -> String {
        if i < 26 {
            ((b'a' + i as u8) as char).to_string()
        } else {
            format!("s{i}")
        }
    }

    /// For each system, the letters of the other systems it is NOT
    /// significantly different from after adjustment.
    pub fn non_significant_letters(&self) -> Vec<String> {
        (0..self.systems.len())
            .map(|i| {
                (0..self.systems.len())
                    .filter(|&j| j != i && !self.pair(i, j).significant)
                    .map(|j| self.letter(j))
                    .collect::<Vec<_>>()
                    .join("")
            })
            .collect()
    }
}

/// Runs every pairwise paired t-test over one measure's per-query values and
/// applies a Bonferroni correction sized to the number of pairs.
pub fn significance_matrix(
    systems: &[(String, BTreeMap<String, f64>)],
    alpha: f64,
) -> Result<SignificanceTable, EvalError> {
    if systems.len() < 2 {
        return Err(EvalError::TooFewSystems(systems.len()));
    }
    let n_pairs = systems.len() * (systems.len() - 1) / 2;
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..systems.len() {
        for j in i + 1..systems.len() {
            let test = paired_ttest(&systems[i].1, &systems[j].1)?;
            let adjusted = (test.p * n_pairs as f64).min(1.0);
            pairs.push(PairComparison {
                a: i,
                b: j,
                t: test.t,
                raw_p: test.p,
                adjusted_p: adjusted,
                significant: adjusted < alpha,
            });
        }
    }
    Ok(SignificanceTable {
        systems: systems.iter().map(|(name, _)| name.clone()).collect(),
        alpha,
        multiplier: n_pairs as u64,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn ln_gamma_known_values() {
        // Γ(1) = Γ(2) = 1, Γ(5) = 24, Γ(1/2) = √π.
        assert!(ln_gamma(1.0).abs() < 1e-12);
        assert!(ln_gamma(2.0).abs() < 1e-12);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_spot_values() {
        // I_0.4(2,3): binomial closed form 1 - 0.6^4 - 4(0.4)(0.6^3).
        assert!((regularized_incomplete_beta(2.0, 3.0, 0.4) - 0.5248).abs() < 1e-12);
        // Symmetry point.
        assert!((regularized_incomplete_beta(5.0, 5.0, 0.5) - 0.5).abs() < 1e-12);
        // Arcsine law: I_x(1/2,1/2) = (2/π) asin(√x).
        assert!((regularized_incomplete_beta(0.5, 0.5, 0.25) - 1.0 / 3.0).abs() < 1e-12);
        // Numerically integrated reference.
        assert!((regularized_incomplete_beta(4.5, 1.5, 0.7) - 0.3372935861).abs() < 1e-9);
        assert_eq!(regularized_incomplete_beta(3.0, 4.0, 0.0), 0.0);
        assert_eq!(regularized_incomplete_beta(3.0, 4.0, 1.0), 1.0);
    }

    #[test]
    fn t_p_values_match_integration_oracle() {
        // Frozen from Simpson integration of the t density; the ν=1 and ν=2
        // entries also have exact closed forms that agree.
        let cases = [
            (2.262, 9, 0.0500128455),
            (1.0, 1, 0.5),
            (4.303, 2, 0.0499925250),
            (2.0, 30, 0.0546250450),
            (0.5, 3, 0.6514479648),
            (3.169, 10, 0.0100046334),
            (1.96, 1000, 0.0502731850),
            (0.0, 5, 1.0),
        ];
        for (t, dof, want) in cases {
            let got = t_two_sided_p(t, dof);
            assert!((got - want).abs() < 1e-6, "t={t} dof={dof}: got {got}, want {want}");
            assert_eq!(t_two_sided_p(-t, dof), got, "two-sided p is even in t");
        }
    }

    #[test]
    fn paired_test_conventions() {
        let a = scores(&[("q1", 0.5), ("q2", 0.7), ("q3", 0.2)]);
        let same = paired_ttest(&a, &a.clone()).unwrap();
        assert_eq!((same.t, same.p), (0.0, 1.0));

        // The shift must be exactly representable or the diffs are not
        // structurally equal and the degenerate rule correctly stays out.
        let shifted: BTreeMap<String, f64> = a.iter().map(|(k, v)| (k.clone(), v + 0.25)).collect();
        let degenerate = paired_ttest(&shifted, &a).unwrap();
        assert_eq!(degenerate.p, 0.0);
        assert_eq!(degenerate.t, f64::INFINITY);
        let reversed = paired_ttest(&a, &shifted).unwrap();
        assert_eq!(reversed.t, f64::NEG_INFINITY);
        assert_eq!(reversed.p, 0.0);
    }

    #[test]
    fn paired_test_basic_value() {
        // Hand-checked: diffs [0.1, -0.1, 0.3, 0.1], mean 0.1,
        // sd = sqrt(0.08/3), t = 0.1/(sd/2) = 1.224744871.
        let a = scores(&[("a", 0.6), ("b", 0.4), ("c", 0.9), ("d", 0.5)]);
        let b = scores(&[("a", 0.5), ("b", 0.5), ("c", 0.6), ("d", 0.4)]);
        let r = paired_ttest(&a, &b).unwrap();
        assert_eq!(r.n, 4);
        assert!((r.mean_diff - 0.1).abs() < 1e-12);
        assert!((r.t - 1.2247448713915892).abs() < 1e-9);
        let swapped = paired_ttest(&b, &a).unwrap();
        assert!((swapped.t + r.t).abs() < 1e-12);
        assert!((swapped.p - r.p).abs() < 1e-12);
    }

    #[test]
    fn paired_test_errors() {
        let a = scores(&[("q1", 0.5), ("q2", 0.7)]);
        let b = scores(&[("q1", 0.5), ("q3", 0.7)]);
        match paired_ttest(&a, &b) {
            Err(EvalError::KeyMismatch { only_a, only_b }) => {
                assert_eq!(only_a, vec!["q2"]);
                assert_eq!(only_b, vec!["q3"]);
            }
            other => panic!("expected key mismatch, got {other:?}"),
        }
        let single = scores(&[("q1", 0.5)]);
        assert!(matches!(paired_ttest(&single, &single.clone()), Err(EvalError::TooFewPairs(1))));
    }

    #[test]
    fn matrix_adjustment_and_letters() {
        // Three systems: a and b identical, c far away from both.
        let qids = ["q1", "q2", "q3", "q4", "q5", "q6"];
        let base: BTreeMap<String, f64> =
            qids.iter().enumerate().map(|(i, q)| (q.to_string(), 0.5 + 0.01 * i as f64)).collect();
        let far: BTreeMap<String, f64> = qids
            .iter()
            .enumerate()
            .map(|(i, q)| (q.to_string(), 0.9 + 0.012 * i as f64))
            .collect();
        let systems = vec![
            ("a".to_string(), base.clone()),
            ("b".to_string(), base.clone()),
            ("c".to_string(), far),
        ];
        let table = significance_matrix(&systems, 0.05).unwrap();
        assert_eq!(table.multiplier, 3);
        let ab = table.pair(0, 1);
        assert_eq!(ab.raw_p, 1.0);
        assert_eq!(ab.adjusted_p, 1.0);
        assert!(!ab.significant);
        let ac = table.pair(0, 2);
        assert!(ac.significant, "adjusted p {}", ac.adjusted_p);
        let letters = table.non_significant_letters();
        assert_eq!(letters, vec!["b", "a", ""]);
    }

    #[test]
    fn bonferroni_arithmetic() {
        // Raw p of 0.02 over 3 pairs adjusts to 0.06: not significant at 0.05.
        let adjusted = (0.02f64 * 3.0).min(1.0);
        assert!((adjusted - 0.06).abs() < 1e-12);
        assert!(adjusted >= 0.05);
        // Six systems give 15 pairs.
        let systems: Vec<(String, BTreeMap<String, f64>)> = (0..6)
            .map(|i| {
                let m = scores(&[("q1", 0.1 * i as f64), ("q2", 0.2), ("q3", 0.1 + 0.05 * i as f64)]);
                (format!("s{i}"), m)
            })
            .collect();
        let table = significance_matrix(&systems, 0.05).unwrap();
        assert_eq!(table.multiplier, 15);
        assert_eq!(table.pairs.len(), 15);
        for p in &table.pairs {
            assert!((p.adjusted_p - (p.raw_p * 15.0).min(1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_systems_rejected() {
        let one = vec![("only".to_string(), scores(&[("q1", 0.1), ("q2", 0.2)]))];
        assert!(matches!(significance_matrix(&one, 0.05), Err(EvalError::TooFewSystems(1))));
    }

    #[test]
    fn stable_mean_matches_exact_fractions() {
        assert_eq!(stable_mean(&[]), 0.0);
        assert_eq!(stable_mean(&[0.25]), 0.25);
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert!((stable_mean(&v) - 50.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetry_on_random_inputs(
            diffs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..40),
        ) {
            let a: BTreeMap<String, f64> =
                diffs.iter().enumerate().map(|(i, (x, _))| (format!("q{i:03}"), *x)).collect();
            let b: BTreeMap<String, f64> =
                diffs.iter().enumerate().map(|(i, (_, y))| (format!("q{i:03}"), *y)).collect();
            let ab = paired_ttest(&a, &b).unwrap();
            let ba = paired_ttest(&b, &a).unwrap();
            prop_assert!((ab.t + ba.t).abs() < 1e-9 || (ab.t.is_infinite() && ba.t == -ab.t));
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }

        #[test]
        fn mean_is_stable_and_order_free(values in proptest::collection::vec(-1e3f64..1e3, 0..64)) {
            let naive: f64 = values.iter().sum::<f64>() / values.len().max(1) as f64;
            let stable = stable_mean(&values);
            prop_assert!((stable - naive).abs() < 1e-9);
        }
    }
}
