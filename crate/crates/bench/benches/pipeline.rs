use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use spiralmark::codec::encode_quiz;
use spiralmark::layout::{fill_boxes, render_sheet};
use spiralmark::pattern::{render_pattern, PatternSpec};
use spiralmark::pipeline::correct_sheet;
use spiralmark::rectify::{page_detector, rectify};
use spiralmark::simulate::simulate_scan;
use spiralmark::symmetry::{detect_coarse_to_fine, detect_with, DetectorConfig};
use spiralmark::{AnswerKey, AnswerKeys, CorrectionSetup, Roster, RosterEntry, ScanParams, SheetLayout, StudentRecord};

fn student() -> StudentRecord {
    StudentRecord {
        student_index: 417,
        name: "Bench Student".into(),
        email: "bench@example.org".into(),
        person_id: "900101".into(),
    }
}

fn scan(layout: &SheetLayout) -> spiralmark::GrayImage {
    let sheet = render_sheet(layout, &encode_quiz(37).unwrap(), &student()).unwrap();
    let answers: Vec<(u8, u8)> = (1..=20).map(|q| (q, q % 4)).collect();
    let sheet = fill_boxes(&sheet, layout, &answers).unwrap();
    let params = ScanParams {
        rotation_deg: 4.0,
        scale: 1.05,
        noise_sigma: 0.05,
        occlusion: 0.2,
        seed: 3,
        ..ScanParams::default()
    };
    simulate_scan(&sheet, layout, &params).unwrap()
}

fn detection(c: &mut Criterion) {
    let spec = PatternSpec::new(-2, 0.7, 10.0).unwrap();
    let patch = render_pattern(&spec);
    let config = DetectorConfig::for_extent(10.0);
    c.bench_function("detect_patch", |b| b.iter(|| detect_with(black_box(&patch), &config).unwrap()));

    let layout = SheetLayout::default();
    let page = scan(&layout);
    let config = page_detector(&layout);
    let mut g = c.benchmark_group("detect_page_150dpi");
    g.sample_size(10);
    g.bench_function("full_resolution", |b| b.iter(|| detect_with(black_box(&page), &config).unwrap()));
    g.bench_function("coarse_to_fine", |b| {
        b.iter(|| detect_coarse_to_fine(black_box(&page), &config).unwrap())
    });
    g.finish();
}

fn render(c: &mut Criterion) {
    let layout = SheetLayout::default();
    let quiz = encode_quiz(37).unwrap();
    let mut g = c.benchmark_group("render");
    g.sample_size(10);
    g.bench_function("sheet_150dpi", |b| b.iter(|| render_sheet(&layout, &quiz, &student()).unwrap()));
    g.finish();
}

fn correction(c: &mut Criterion) {
    let layout = SheetLayout::default();
    let page = scan(&layout);
    let s = student();
    let setup = CorrectionSetup {
        layout: layout.clone(),
        keys: AnswerKeys::new([AnswerKey::new(37, vec![0; 20]).unwrap()]).unwrap(),
        roster: Roster::new(vec![RosterEntry {
            student_index: s.student_index,
            name: s.name,
            email: s.email,
            person_id: s.person_id,
            quiz_index: 37,
        }])
        .unwrap(),
        annotate: false,
        workers: 1,
    };
    let mut g = c.benchmark_group("correct_150dpi");
    g.sample_size(10);
    g.bench_function("rectify", |b| b.iter(|| rectify(black_box(&page), &layout).unwrap()));
    g.bench_function("correct_sheet", |b| {
        b.iter(|| correct_sheet(black_box(&page), "bench.png", &setup).unwrap())
    });
    g.finish();
}

criterion_group!(benches, detection, render, correction);
criterion_main!(benches);
