#![allow(dead_code)]

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;

use spiralmark::layout::fill_boxes;
use spiralmark::pipeline::{generate_batch, sheet_file_name};
use spiralmark::{AnswerKey, AnswerKeys, CorrectionSetup, GrayImage, Roster, RosterEntry, SheetLayout};

/// Alternatives marked for each of the 20 questions.
pub type Marks = Vec<Vec<u8>>;

pub fn roster(n: usize, rng: &mut impl Rng) -> Roster {
    let mut students: Vec<u32> = sample(rng, 1296, n).into_iter().map(|i| i as u32).collect();
    students.sort();
    let entries = students
        .into_iter()
        .map(|i| RosterEntry {
            student_index: i,
            name: format!("Student {i}"),
            email: format!("s{i}@example.org"),
            person_id: format!("{:06}", 100_000 + i),
            quiz_index: rng.random_range(0..125),
        })
        .collect();
    Roster::new(entries).unwrap()
}

pub fn keys_for(roster: &Roster, rng: &mut impl Rng) -> AnswerKeys {
    let mut quizzes: Vec<u32> = roster.entries().iter().map(|e| e.quiz_index).collect();
    quizzes.sort();
    quizzes.dedup();
    AnswerKeys::new(
        quizzes
            .into_iter()
            .map(|q| AnswerKey::new(q, (0..20).map(|_| rng.random_range(0..4)).collect()).unwrap()),
    )
    .unwrap()
}

/// Mostly single marks, with some blanks and double marks.
pub fn random_marks(rng: &mut impl Rng) -> Marks {
    (0..20)
        .map(|_| match rng.random_range(0..10) {
            0 => vec![],
            1 => {
                let a = rng.random_range(0..4u8);
                vec![a, (a + 1 + rng.random_range(0..3u8)) % 4]
            }
            _ => vec![rng.random_range(0..4)],
        })
        .collect()
}

pub fn mark_list(marks: &Marks) -> Vec<(u8, u8)> {
    marks
        .iter()
        .enumerate()
        .flat_map(|(q, alts)| alts.iter().map(move |&a| (q as u8 + 1, a)))
        .collect()
}

/// Verdict letters computed directly from the marks and the key.
pub fn expected_verdicts(marks: &Marks, key: &AnswerKey) -> String {
    marks
        .iter()
        .zip(&key.correct)
        .map(|(alts, &k)| match alts.as_slice() {
            [] => 'B',
            [a] if *a == k => 'C',
            [_] => 'X',
            _ => 'M',
        })
        .collect()
}

pub fn setup(layout: &SheetLayout, keys: AnswerKeys, roster: Roster, workers: usize) -> CorrectionSetup {
    CorrectionSetup {
        layout: layout.clone(),
        keys,
        roster,
        annotate: false,
        workers,
    }
}

/// Generates the roster's sheets into `sheets`, fills random marks and
/// writes the marked scans into `scans`. Returns the marks per student.
pub fn marked_batch(layout: &SheetLayout, roster: &Roster, sheets: &Path, scans: &Path, rng: &mut impl Rng) -> Vec<(u32, Marks)> {
    generate_batch(layout, roster, sheets).unwrap();
    std::fs::create_dir_all(scans).unwrap();
    roster
        .entries()
        .iter()
        .map(|e| {
            let name = sheet_file_name(e.student_index);
            let marks = random_marks(rng);
            let sheet = GrayImage::load(sheets.join(&name)).unwrap();
            fill_boxes(&sheet, layout, &mark_list(&marks)).unwrap().save(scans.join(&name)).unwrap();
            (e.student_index, marks)
        })
        .collect()
}
