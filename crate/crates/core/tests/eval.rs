use durembed::eval::{
    build_trials, compute_eer, eer_confidence_interval, evaluate, parse_scores, parse_trials,
    write_scores, write_trials, NamedScoreSet, Polarity, ScoreSet,
};
use durembed::synth::{generate_corpus, sample_speakers, SynthConfig};
use durembed::{Error, PhonemeInventory};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exhaustive sweep: the smallest |FAR - FRR| over all accept-if-score>=t
/// thresholds, reported as the mean of the two rates.
fn brute_force_eer(scores: &[f64], labels: &[bool]) -> f64 {
    let n_tar = labels.iter().filter(|&&l| l).count() as f64;
    let n_non = labels.len() as f64 - n_tar;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    let mut best = (f64::INFINITY, 0.0);
    for &t in &thresholds {
        let fa = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as f64 / n_non;
        let fr = scores.iter().zip(labels).filter(|(&s, &l)| l && s < t).count() as f64 / n_tar;
        if (fa - fr).abs() < best.0 {
            best = ((fa - fr).abs(), (fa + fr) / 2.0);
        }
    }
    best.1
}

/// Operating points just before and at the first threshold where FRR
/// reaches FAR: the EER must lie in `[max(frr0, far1), min(far0, frr1)]`.
fn crossing_bracket(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let n_tar = labels.iter().filter(|&&l| l).count() as f64;
    let n_non = labels.len() as f64 - n_tar;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let rates = |t: f64| {
        let fa = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as f64 / n_non;
        let fr = scores.iter().zip(labels).filter(|(&s, &l)| l && s < t).count() as f64 / n_tar;
        (fa, fr)
    };
    let j = thresholds.iter().position(|&t| rates(t).1 >= rates(t).0).unwrap();
    let (far1, frr1) = rates(thresholds[j]);
    if j == 0 || far1 == frr1 {
        return (frr1, frr1);
    }
    let (far0, frr0) = rates(thresholds[j - 1]);
    (frr0.max(far1), far0.min(frr1))
}

/// Heavily tied scores on a coarse grid.
fn score_set() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0i32..60, any::<bool>()), 2..400)
        .prop_map(|v| {
            let mut v = v;
            v[0].1 = true;
            v[1].1 = false;
            (v.iter().map(|p| f64::from(p.0) / 7.0).collect(), v.iter().map(|p| p.1).collect())
        })
}

/// Distinct scores, targets shifted upwards.
fn continuous_score_set() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..1000), 0.0f64..1.5).prop_map(|(v, shift)| {
        let mut v = v;
        v[0].1 = true;
        v[1].1 = false;
        let scores = v
            .iter()
            .enumerate()
            .map(|(i, p)| p.0 + if p.1 { shift } else { 0.0 } + i as f64 * 1e-9)
            .collect();
        (scores, v.iter().map(|p| p.1).collect())
    })
}

proptest! {
    #[test]
    fn matches_brute_force((scores, labels) in continuous_score_set()) {
        let n_tar = labels.iter().filter(|&&l| l).count();
        let step = 1.0 / n_tar.min(labels.len() - n_tar) as f64;
        let set = ScoreSet::from_scores(scores.clone(), labels.clone(), Polarity::LargerIsSimilar);
        let got = compute_eer(&set).unwrap().eer;
        prop_assert!((got - brute_force_eer(&scores, &labels)).abs() <= step + 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn tied_scores_stay_within_crossing((scores, labels) in score_set()) {
        let set = ScoreSet::from_scores(scores.clone(), labels.clone(), Polarity::LargerIsSimilar);
        let got = compute_eer(&set).unwrap().eer;
        let (lo, hi) = crossing_bracket(&scores, &labels);
        prop_assert!(lo - 1e-12 <= got && got <= hi + 1e-12, "{} not in [{}, {}]", got, lo, hi);
    }

    #[test]
    fn invariant_under_monotone_maps_and_flips((scores, labels) in score_set()) {
        let base = compute_eer(&ScoreSet::from_scores(scores.clone(), labels.clone(), Polarity::LargerIsSimilar)).unwrap().eer;
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let a = compute_eer(&ScoreSet::from_scores(mapped, labels.clone(), Polarity::LargerIsSimilar)).unwrap().eer;
        let b = compute_eer(&ScoreSet::from_scores(negated, labels, Polarity::SmallerIsSimilar)).unwrap().eer;
        prop_assert_eq!(base, a);
        prop_assert_eq!(base, b);
    }

    #[test]
    fn scores_round_trip((scores, labels) in score_set(), flip in any::<bool>()) {
        let polarity = if flip { Polarity::SmallerIsSimilar } else { Polarity::LargerIsSimilar };
        let set = ScoreSet::from_scores(scores, labels, polarity);
        let mut text = Vec::new();
        write_scores(&set, &mut text).unwrap();
        let back = parse_scores(text.as_slice()).unwrap();
        prop_assert_eq!(back, set);
    }
}

#[test]
fn separated_scores_give_zero() {
    let set = ScoreSet::from_scores(vec![0.1, 0.2, 0.8, 0.9], vec![false, false, true, true], Polarity::LargerIsSimilar);
    assert_eq!(compute_eer(&set).unwrap().eer, 0.0);
}

#[test]
fn degenerate_lists_rejected() {
    let set = ScoreSet::from_scores(vec![0.1, 0.2], vec![true, true], Polarity::LargerIsSimilar);
    assert!(matches!(compute_eer(&set), Err(Error::DegenerateList(_))));
}

#[test]
fn interval_matches_formula() {
    let direct = 1.959963984540054 * (0.1f64 * 0.9 / 1000.0).sqrt();
    assert!((eer_confidence_interval(0.1, 1000, 0.95) - direct).abs() < 1e-9);
    let reports = evaluate(
        &[NamedScoreSet {
            condition: "c".into(),
            scores: ScoreSet::from_scores(vec![0.0, 1.0, 0.4, 0.6], vec![false, true, true, false], Polarity::LargerIsSimilar),
        }],
        0.95,
    )
    .unwrap();
    assert_eq!(reports[0].n_trials, 4);
    let (lo, hi) = reports[0].interval();
    assert!(lo <= reports[0].eer && reports[0].eer <= hi);
}

fn corpus(n_speakers: usize, utts: usize) -> durembed::Corpus {
    let config = SynthConfig {
        n_speakers,
        utts_per_speaker: utts,
        phones_per_utt: (5, 10),
        ..SynthConfig::default()
    };
    let inv = PhonemeInventory::new(["a", "b", "c"]).unwrap();
    let profiles = sample_speakers(&config, inv.len(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    generate_corpus(&profiles, &config, &inv, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
}

#[test]
fn trial_sets_are_disjoint_and_labelled() {
    let corpus = corpus(6, 13);
    let list = build_trials(&corpus, 4, 2, &mut ChaCha8Rng::seed_from_u64(9), 9, 5).unwrap();
    assert_eq!(list.n_targets(), 6 * 4);
    assert_eq!(list.n_nontargets(), 6 * 5);
    for t in &list.trials {
        assert_eq!(t.enroll_utts.len(), 4);
        assert_eq!(t.trial_utts.len(), 2);
        let trial_spk = &corpus.utterance(&t.trial_utts[0]).unwrap().speaker_id;
        assert_eq!(t.is_target, *trial_spk == t.enroll_speaker);
        assert!(t.trial_utts.iter().all(|u| !t.enroll_utts.contains(u)));
        for u in &t.enroll_utts {
            assert_eq!(corpus.utterance(u).unwrap().speaker_id, t.enroll_speaker);
        }
    }
    let mut text = Vec::new();
    write_trials(&list, &mut text).unwrap();
    assert_eq!(parse_trials(text.as_slice()).unwrap(), list);
}

#[test]
fn speakers_without_enough_utterances_are_skipped() {
    let corpus = corpus(3, 4);
    let list = build_trials(&corpus, 3, 1, &mut ChaCha8Rng::seed_from_u64(0), 0, 20).unwrap();
    assert_eq!(list.skipped_speakers, 0);
    assert!(matches!(
        build_trials(&corpus, 4, 1, &mut ChaCha8Rng::seed_from_u64(0), 0, 20),
        Err(Error::NoEligibleSpeakers)
    ));
}
