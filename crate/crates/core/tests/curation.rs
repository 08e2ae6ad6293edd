use std::collections::BTreeSet;

use moral_core::curation::*;
use moral_core::retrieval::{split_recursive, SplitConfig, TrigramEmbedder};
use moral_core::RetrievalConfig;

fn corpus() -> Vec<Document> {
    let topics = [
        (
            "physics",
            "Lasers emit coherent light. A cavity reflects photons between mirrors. Gain media amplify the beam.",
        ),
        (
            "physics",
            "Superconductors lose all resistance. Cooling below a critical temperature is required.",
        ),
        (
            "biology",
            "The heart pumps blood through arteries. Veins return blood to the heart. Valves prevent backflow.",
        ),
        (
            "biology",
            "Bees pollinate flowering plants. A colony follows a single queen. Workers gather nectar all day.",
        ),
        (
            "computing",
            "The compiler translates source code. It checks types before emitting machine code. Errors stop the build.",
        ),
    ];
    topics
        .iter()
        .enumerate()
        .map(|(i, (tag, text))| Document {
            id: format!("{tag}/doc{i}"),
            domain_tag: tag.to_string(),
            text: text.repeat(3),
        })
        .collect()
}

fn cfg() -> CurationConfig {
    CurationConfig {
        split: SplitConfig {
            target_size: 120,
            overlap: 20,
            ..SplitConfig::default()
        },
        retrieval: RetrievalConfig { theta: 0.3 },
        seed: 3,
        ..CurationConfig::default()
    }
}

#[test]
fn one_record_per_chunk() {
    let c = cfg();
    let expected: usize = corpus()
        .iter()
        .map(|d| {
            split_recursive(&d.text, c.split.target_size, c.split.overlap, &c.split.separators)
                .unwrap()
                .len()
        })
        .sum();
    let out = curate(&corpus(), &StubGenerator, &TrigramEmbedder::default(), &c).unwrap();
    assert_eq!(out.train.len() + out.test.len(), expected);
    assert_eq!(out.chunks.len(), expected);
    assert_eq!(out.train.len(), train_size(expected, 0.8));

    let train_ids: BTreeSet<_> = out.train.iter().map(|r| &r.context_id).collect();
    let test_ids: BTreeSet<_> = out.test.iter().map(|r| &r.context_id).collect();
    assert!(train_ids.is_disjoint(&test_ids));
    assert_eq!(train_ids.len() + test_ids.len(), expected);

    check_references(&out.train, &out.index).unwrap();
    check_references(&out.test, &out.index).unwrap();
    let total: usize = out.domain_counts.values().map(|c| c.train + c.test).sum();
    assert_eq!(total, expected);
    assert_eq!(
        out.domain_counts.keys().collect::<Vec<_>>(),
        ["biology", "computing", "physics"]
    );
}

#[test]
fn reruns_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = curate(&corpus(), &StubGenerator, &TrigramEmbedder::default(), &cfg()).unwrap();
        write_curated(dir.path(), &out).unwrap();
    }
    for file in [INDEX_FILE, TRAIN_FILE, TEST_FILE, SUMMARY_FILE] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let train = read_records(&a.path().join(TRAIN_FILE)).unwrap();
    let index = moral_core::VectorIndex::load(&a.path().join(INDEX_FILE)).unwrap();
    check_references(&train, &index).unwrap();
}

#[test]
fn documents_load_with_domain_tags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("law")).unwrap();
    std::fs::write(dir.path().join("law/contracts.txt"), "A contract binds parties.").unwrap();
    std::fs::write(dir.path().join("loose.md"), "Loose notes.").unwrap();
    std::fs::write(dir.path().join("skip.bin"), "x").unwrap();
    let docs = load_documents(dir.path()).unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!(
        (docs[0].id.as_str(), docs[0].domain_tag.as_str()),
        ("law/contracts", "law")
    );
    assert_eq!((docs[1].id.as_str(), docs[1].domain_tag.as_str()), ("loose", "general"));
}
