use std::fmt::Write as _;

use super::experiment::LearningCurve;
use super::HarnessError;

/// Trapezoidal area under `values` against `episodes`.
pub fn area_under_curve(episodes: &[usize], values: &[f64]) -> f64 {
    episodes
        .windows(2)
        .zip(values.windows(2))
        .map(|(e, v)| (e[1] - e[0]) as f64 * (v[0] + v[1]) / 2.0)
        .sum()
}

/// Reward within 10% of `best`, measured on the side that stays meaningful
/// when the best final mean is negative.
pub fn threshold_for(best: f64) -> f64 {
    best - 0.1 * best.abs()
}

/// First evaluated episode whose reward reaches `threshold`.
pub fn episodes_to_threshold(episodes: &[usize], values: &[f64], threshold: f64) -> Option<usize> {
    episodes.iter().zip(values).find(|(_, &v)| v >= threshold).map(|(&e, _)| e)
}

/// One-sided sign test: probability of at least `wins` successes among
/// `wins + losses` fair coin flips. Ties are discarded; no decisive pairs
/// gives 1.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut tail = 0.0;
    let mut binom = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            binom = binom * (n - k + 1) as f64 / k as f64;
        }
        if k >= wins {
            tail += binom;
        }
    }
    (tail / 2f64.powi(n as i32)).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub agent: String,
    pub final_mean: f64,
    /// AUC of the cross-replicate mean curve.
    pub auc: f64,
    pub replicate_auc: Vec<f64>,
    /// Episodes to threshold of the mean curve.
    pub episodes_to_threshold: Option<usize>,
    pub replicate_episodes_to_threshold: Vec<Option<usize>>,
}

/// Replicate-paired comparison of agent `a` against agent `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTest {
    pub a: String,
    pub b: String,
    pub metric: &'static str,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided p-value for `a` beating `b`.
    pub p_value: f64,
}

impl PairedTest {
    fn new(a: &AgentSummary, b: &AgentSummary, metric: &'static str, outcomes: impl Iterator<Item = std::cmp::Ordering>) -> Self {
        let (mut wins, mut losses, mut ties) = (0, 0, 0);
        for o in outcomes {
            match o {
                std::cmp::Ordering::Greater => wins += 1,
                std::cmp::Ordering::Less => losses += 1,
                std::cmp::Ordering::Equal => ties += 1,
            }
        }
        PairedTest {
            a: a.agent.clone(),
            b: b.agent.clone(),
            metric,
            wins,
            losses,
            ties,
            p_value: sign_test(wins, losses),
        }
    }

    /// Replicates where `a` is at least as good as `b`.
    pub fn at_least_as_good(&self) -> usize {
        self.wins + self.ties
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub episodes: Vec<usize>,
    pub threshold: f64,
    pub agents: Vec<AgentSummary>,
    /// AUC and episodes-to-threshold tests for every ordered agent pair.
    pub tests: Vec<PairedTest>,
}

fn threshold_text(e: Option<usize>) -> String {
    e.map_or_else(|| "not reached".to_string(), |e| e.to_string())
}

impl Comparison {
    pub fn agent(&self, name: &str) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.agent == name)
    }

    pub fn test(&self, a: &str, b: &str, metric: &str) -> Option<&PairedTest> {
        self.tests.iter().find(|t| t.a == a && t.b == b && t.metric == metric)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "threshold {:.6} (best final mean less 10%)", self.threshold);
        let _ = writeln!(out, "{:<12} {:>12} {:>14} {:>18}", "agent", "final_mean", "auc", "episodes_to_thr");
        for a in &self.agents {
            let _ = writeln!(
                out,
                "{:<12} {:>12.6} {:>14.3} {:>18}",
                a.agent,
                a.final_mean,
                a.auc,
                threshold_text(a.episodes_to_threshold)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:<12} {:<20} {:>5} {:>6} {:>5} {:>10}",
            "a", "b", "metric", "wins", "losses", "ties", "p(a>b)"
        );
        for t in &self.tests {
            let _ = writeln!(
                out,
                "{:<12} {:<12} {:<20} {:>5} {:>6} {:>5} {:>10.6}",
                t.a, t.b, t.metric, t.wins, t.losses, t.ties, t.p_value
            );
        }
        out
    }
}

/// Summarises curves sharing one episode grid and replicate count.
pub fn compare_curves(curves: &[LearningCurve]) -> Result<Comparison, HarnessError> {
    let first = curves
        .first()
        .ok_or_else(|| HarnessError::GridMismatch("no curves to compare".into()))?;
    if first.episodes.is_empty() || first.rewards.is_empty() {
        return Err(HarnessError::GridMismatch(format!("curve {} is empty", first.agent)));
    }
    for c in curves {
        if c.episodes != first.episodes {
            return Err(HarnessError::GridMismatch(format!(
                "{} and {} use different episode grids",
                first.agent, c.agent
            )));
        }
        if c.replicates() != first.replicates() {
            return Err(HarnessError::GridMismatch(format!(
                "{} has {} replicates, {} has {}",
                first.agent,
                first.replicates(),
                c.agent,
                c.replicates()
            )));
        }
        if c.rewards.iter().any(|r| r.len() != c.episodes.len()) {
            return Err(HarnessError::GridMismatch(format!("{} has ragged rows", c.agent)));
        }
    }
    let episodes = &first.episodes;
    let last = episodes.len() - 1;
    let best = curves.iter().map(|c| c.mean(last)).fold(f64::NEG_INFINITY, f64::max);
    let threshold = threshold_for(best);
    let agents: Vec<AgentSummary> = curves
        .iter()
        .map(|c| {
            let means = c.means();
            AgentSummary {
                agent: c.agent.clone(),
                final_mean: means[last],
                auc: area_under_curve(episodes, &means),
                replicate_auc: c.rewards.iter().map(|r| area_under_curve(episodes, r)).collect(),
                episodes_to_threshold: episodes_to_threshold(episodes, &means, threshold),
                replicate_episodes_to_threshold: c
                    .rewards
                    .iter()
                    .map(|r| episodes_to_threshold(episodes, r, threshold))
                    .collect(),
            }
        })
        .collect();
    let mut tests = Vec::new();
    for a in &agents {
        for b in &agents {
            if a.agent == b.agent {
                continue;
            }
            let auc = a.replicate_auc.iter().zip(&b.replicate_auc).map(|(x, y)| x.total_cmp(y));
            tests.push(PairedTest::new(a, b, "auc", auc));
            // Fewer episodes is better; never reaching counts as infinitely many.
            let key = |e: &Option<usize>| e.unwrap_or(usize::MAX);
            let ett = a
                .replicate_episodes_to_threshold
                .iter()
                .zip(&b.replicate_episodes_to_threshold)
                .map(|(x, y)| key(y).cmp(&key(x)));
            tests.push(PairedTest::new(a, b, "episodes_to_threshold", ett));
        }
    }
    Ok(Comparison {
        episodes: episodes.clone(),
        threshold,
        agents,
        tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(agent: &str, rewards: Vec<Vec<f64>>) -> LearningCurve {
        let n = rewards[0].len();
        LearningCurve {
            agent: agent.into(),
            episodes: (1..=n).map(|k| k * 100).collect(),
            rewards,
        }
    }

    fn binomial_tail(n: u64, k: u64) -> f64 {
        let choose = |n: u64, r: u64| (0..r).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128);
        let hits: u128 = (k..=n).map(|r| choose(n, r)).sum();
        hits as f64 / (1u128 << n) as f64
    }

    #[test]
    fn identical_curves_tie() {
        let a = curve("a", vec![vec![-10.0, 50.0, 90.0]; 10]);
        let b = LearningCurve { agent: "b".into(), ..a.clone() };
        let cmp = compare_curves(&[a, b]).unwrap();
        assert_eq!(cmp.agents[0].auc, cmp.agents[1].auc);
        let t = cmp.test("a", "b", "auc").unwrap();
        assert_eq!((t.wins, t.losses, t.ties), (0, 0, 10));
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn dominating_curve_is_detected() {
        let low: Vec<Vec<f64>> = (0..10).map(|r| vec![-10.0, r as f64, 50.0]).collect();
        let high: Vec<Vec<f64>> = (0..10).map(|r| vec![-5.0, 20.0 + r as f64, 90.0]).collect();
        let cmp = compare_curves(&[curve("low", low), curve("high", high)]).unwrap();
        let t = cmp.test("high", "low", "auc").unwrap();
        assert_eq!(t.wins, 10);
        assert!(t.p_value < 0.01);
        assert_eq!(t.p_value, 1.0 / 1024.0);
        assert_eq!(cmp.test("low", "high", "auc").unwrap().p_value, 1.0);
    }

    #[test]
    fn unreached_threshold_is_reported() {
        let cmp = compare_curves(&[
            curve("fast", vec![vec![90.0, 92.0]; 2]),
            curve("never", vec![vec![-10.0, -10.0]; 2]),
        ])
        .unwrap();
        assert!((cmp.threshold - 82.8).abs() < 1e-12);
        assert_eq!(cmp.agent("fast").unwrap().episodes_to_threshold, Some(100));
        assert_eq!(cmp.agent("never").unwrap().episodes_to_threshold, None);
        assert!(cmp.to_table().contains("not reached"));
        let t = cmp.test("fast", "never", "episodes_to_threshold").unwrap();
        assert_eq!((t.wins, t.losses), (2, 0));
    }

    #[test]
    fn negative_best_threshold_is_below_best() {
        assert_eq!(threshold_for(-20.0), -22.0);
        assert_eq!(threshold_for(50.0), 45.0);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = curve("a", vec![vec![0.0, 1.0]]);
        let mut b = curve("b", vec![vec![0.0, 1.0]]);
        b.episodes = vec![50, 100];
        assert!(matches!(compare_curves(&[a.clone(), b]), Err(HarnessError::GridMismatch(_))));
        let c = curve("c", vec![vec![0.0, 1.0]; 2]);
        assert!(compare_curves(&[a, c]).is_err());
        assert!(compare_curves(&[]).is_err());
    }

    #[test]
    fn trapezoid_area() {
        assert_eq!(area_under_curve(&[100, 200, 400], &[0.0, 10.0, 10.0]), 500.0 + 2000.0);
        assert_eq!(area_under_curve(&[100], &[5.0]), 0.0);
    }

    proptest! {
        #[test]
        fn sign_test_matches_exact_binomial(n in 0u64..40, k_frac in 0.0f64..=1.0) {
            let wins = (k_frac * n as f64).round() as u64;
            let p = sign_test(wins as usize, (n - wins) as usize);
            let expected = if n == 0 { 1.0 } else { binomial_tail(n, wins) };
            prop_assert!((p - expected).abs() < 1e-12);
        }
    }
}
