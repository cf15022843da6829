use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use softcrowd_core::aggregation::agreement_report;
use softcrowd_core::event::tally;
use softcrowd_core::synthgen::{
    corpus_manifest, gen_corpus, simulate_campaign, Ambiguity, AnnotatorPersona, CampaignConfig, CorpusConfig,
    PersonaShare,
};
use softcrowd_core::trainer::split_by_subject;

#[test]
fn default_corpus_splits_by_subject() {
    let cfg = CorpusConfig::default();
    let items = gen_corpus::<f32>(&cfg).unwrap();
    assert_eq!(items.len(), 1192);
    let manifest = corpus_manifest(&items);
    let (train, test) = split_by_subject(&manifest, &cfg.held_out_subject_ids()).unwrap();
    assert_eq!((train.len(), test.len()), (1141, 51));
    let ambiguous = items.iter().filter(|i| i.ambiguity != Ambiguity::Pure).count() as f64 / items.len() as f64;
    assert!((ambiguous - 0.4).abs() < 1.0 / items.len() as f64 + 1e-12);
}

#[test]
fn mixed_crowd_agrees_less_than_faithful_crowd() {
    let corpus = gen_corpus::<f64>(&CorpusConfig {
        n_subjects: 5,
        items_per_subject: 28,
        subject_item_counts: None,
        held_out_subjects: 1,
        seed: 21,
        ..CorpusConfig::default()
    })
    .unwrap();
    let agreement = |cfg: &CampaignConfig| {
        let log = simulate_campaign(&corpus, cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let counts = tally(log.events.iter());
        let data: Vec<_> = corpus.iter().map(|i| (i.posed, counts[&i.item_id])).collect();
        agreement_report(&data, None).unwrap().overall_rate
    };
    let faithful = CampaignConfig {
        n_workers: 20,
        votes_per_item: 5,
        personas: vec![PersonaShare { persona: AnnotatorPersona::Faithful { fidelity: 1.0 }, weight: 1.0 }],
        ..CampaignConfig::default()
    };
    let mixed = CampaignConfig::mixed_crowd(20, 5);
    let (a, b) = (agreement(&mixed), agreement(&faithful));
    assert!(a < b, "mixed {a} vs faithful {b}");
}
