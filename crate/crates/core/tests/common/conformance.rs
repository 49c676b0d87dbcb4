//! Canned program corpus, each paired with a direct Rust computation of the
//! expected result, plus the fuzzing harness.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vpe_core::api::ApiVariant;
use vpe_core::lang::{execute, parse, to_source, ExecutionLimits, ExecutionOutcome, ProgramInput, Value};
use vpe_core::scene::{box_distance, SceneFixture, SceneObject};
use vpe_core::toolbox::Toolbox;
use vpe_core::tools::{FixtureBackend, ToolConfig};

use super::{bx, ensure, object, Check};

pub enum Expect {
    Value(Value),
    Error(&'static str),
}

pub fn market() -> SceneFixture {
    let mut objects = vec![
        object("person", bx(10.0, 30.0, 30.0, 90.0), 7.0, 0.9),
        object("person", bx(60.0, 20.0, 80.0, 90.0), 3.0, 0.8),
        object("person", bx(120.0, 35.0, 135.0, 90.0), 5.0, 0.7),
        object("person", bx(160.0, 40.0, 175.0, 90.0), 1.0, 0.05),
        object("car", bx(85.0, 50.0, 115.0, 90.0), 4.0, 0.95),
        object("dog", bx(140.0, 70.0, 155.0, 90.0), 2.0, 0.6),
    ];
    objects[4].attributes.insert("red".into());
    objects[0].attributes.insert("tall".into());
    SceneFixture {
        scene_id: "market".into(),
        width: 200,
        height: 100,
        background_depth: 50.0,
        caption: "people walking near a red car and a dog".into(),
        qa: [("what color is the car?".to_string(), "red".to_string())].into_iter().collect(),
        objects,
    }
}

/// Objects a detector at the default threshold reports for `name`, most
/// confident first.
fn detected<'a>(s: &'a SceneFixture, name: &str) -> Vec<&'a SceneObject> {
    let threshold = ToolConfig::default().detection_threshold;
    let mut v: Vec<&SceneObject> = s.objects.iter().filter(|o| o.name == name && o.confidence >= threshold).collect();
    v.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    v
}

fn patch_of(s: &SceneFixture, o: &SceneObject) -> Value {
    Value::Patch(vpe_core::scene::ImagePatch::new(s.scene_id.clone(), o.bbox))
}

fn cx(o: &SceneObject) -> f64 {
    (o.bbox.x0() + o.bbox.x1()) / 2.0
}

fn cy(o: &SceneObject) -> f64 {
    (o.bbox.y0() + o.bbox.y1()) / 2.0
}

type Oracle = fn(&SceneFixture) -> Expect;

pub fn corpus() -> Vec<(&'static str, Oracle)> {
    vec![
        ("return 1 + 2 * 3", |_| Expect::Value(Value::Int(7))),
        ("return 7 / 2", |_| Expect::Value(Value::Float(3.5))),
        ("return -7 // 2", |_| Expect::Value(Value::Int((-7f64 / 2.0).floor() as i64))),
        ("return -7 % 3", |_| Expect::Value(Value::Int((-7i64).rem_euclid(3)))),
        ("return float(3) / 2", |_| Expect::Value(Value::Float(1.5))),
        ("return 1 < 2 < 3", |_| Expect::Value(Value::Bool(true))),
        ("xs = [5, 3, 8, 1]\nreturn xs[1:3]", |_| Expect::Value(Value::List(vec![Value::Int(3), Value::Int(8)]))),
        ("return max([abs(-3), 2, round(2.4)])", |_| Expect::Value(Value::Int(3))),
        ("t = 0\nfor i in range(5):\n    t = t + i\nreturn t", |_| Expect::Value(Value::Int((0..5).sum()))),
        ("return len(find(image, 'person'))", |s| Expect::Value(Value::Int(detected(s, "person").len() as i64))),
        ("return 'n=' + str(len(find(image, 'person')))", |s| {
            Expect::Value(Value::Str(format!("n={}", detected(s, "person").len())))
        }),
        ("people = find(image, 'person')\nreturn people[0]", |s| Expect::Value(patch_of(s, detected(s, "person")[0]))),
        ("return sort_patches_left_to_right(find(image, 'person'))[0]", |s| {
            let p = detected(s, "person");
            let best = p.iter().fold(p[0], |b, o| if cx(o) < cx(b) { o } else { b });
            Expect::Value(patch_of(s, best))
        }),
        ("people = sort_patches_left_to_right(find(image, 'person'))\nreturn people[-2]", |s| {
            let mut xs: Vec<&SceneObject> = detected(s, "person");
            xs.sort_by(|a, b| cx(a).total_cmp(&cx(b)));
            Expect::Value(patch_of(s, xs[xs.len() - 2]))
        }),
        (
            "best = None\nfor p in find(image, 'person'):\n    if best == None or p.height > best.height:\n        best = p\nreturn best",
            |s| {
                let p = detected(s, "person");
                let best = p.iter().fold(p[0], |b, o| if o.bbox.height() > b.bbox.height() { o } else { b });
                Expect::Value(patch_of(s, best))
            },
        ),
        (
            "if exists(image, 'cat'):\n    return 'cat'\nelif exists(image, 'dog'):\n    return 'dog'\nelse:\n    return 'none'",
            |s| {
                let answer = if !detected(s, "cat").is_empty() {
                    "cat"
                } else if !detected(s, "dog").is_empty() {
                    "dog"
                } else {
                    "none"
                };
                Expect::Value(Value::Str(answer.into()))
            },
        ),
        ("return verify_property(image, 'car', 'red')", |s| {
            Expect::Value(Value::Bool(detected(s, "car").iter().any(|o| o.attributes.contains("red"))))
        }),
        ("return exists(image, 'cat') or exists(image, 'car')", |s| {
            Expect::Value(Value::Bool(!detected(s, "cat").is_empty() || !detected(s, "car").is_empty()))
        }),
        ("return sort_patches_front_to_back(find(image, 'person'))[0]", |s| {
            let p = detected(s, "person");
            let best = p.iter().fold(p[0], |b, o| if o.depth < b.depth { o } else { b });
            Expect::Value(patch_of(s, best))
        }),
        ("return sort_patches_bottom_to_top(find(image, 'person'))[0]", |s| {
            let p = detected(s, "person");
            let best = p.iter().fold(p[0], |b, o| if cy(o) > cy(b) { o } else { b });
            Expect::Value(patch_of(s, best))
        }),
        ("return get_middle_patch(find(image, 'person'))", |s| {
            let mut xs = detected(s, "person");
            xs.sort_by(|a, b| cx(a).total_cmp(&cx(b)));
            Expect::Value(patch_of(s, xs[(xs.len() - 1) / 2]))
        }),
        ("car = find(image, 'car')[0]\nreturn get_patch_left_of(find(image, 'person'), car)", |s| {
            let car = detected(s, "car")[0];
            let left = detected(s, "person").into_iter().filter(|o| cx(o) < car.bbox.x0()).map(|o| patch_of(s, o));
            Expect::Value(Value::List(left.collect()))
        }),
        ("car = find(image, 'car')[0]\nreturn get_patch_closest_to_anchor_object(find(image, 'person'), car)", |s| {
            let car = detected(s, "car")[0];
            let d = |o: &SceneObject| (cx(o) - cx(car)).hypot(cy(o) - cy(car));
            let p = detected(s, "person");
            let best = p.iter().fold(p[0], |b, o| if d(o) < d(b) { o } else { b });
            Expect::Value(patch_of(s, best))
        }),
        ("car = find(image, 'car')[0]\ndog = find(image, 'dog')[0]\nreturn distance(car, dog)", |s| {
            Expect::Value(Value::Float(box_distance(&detected(s, "car")[0].bbox, &detected(s, "dog")[0].bbox)))
        }),
        ("return simple_query(image, 'What color is the car?')", |s| {
            Expect::Value(Value::Str(s.qa["what color is the car?"].clone()))
        }),
        ("opts = ['a cat on a sofa', 'a red car and a dog']\nreturn select_answer(simple_query(image, 'describe'), opts)", |s| {
            let words = |t: &str| t.split_whitespace().map(str::to_string).collect::<std::collections::BTreeSet<_>>();
            let caption = words(&s.caption);
            let score = |t: &str| words(t).intersection(&caption).count();
            let opts = ["a cat on a sofa", "a red car and a dog"];
            let best = (0..opts.len()).fold(0, |b, i| if score(opts[i]) > score(opts[b]) { i } else { b });
            Expect::Value(Value::Int(best as i64))
        }),
        ("return people", |_| Expect::Error("NameError")),
        ("return find(image, 'person')[10]", |_| Expect::Error("IndexError")),
        ("return find(image, 'unicorn')[0]", |_| Expect::Error("ToolError")),
        ("for i in range(0, 10**9):\n    x = i\nreturn x", |_| Expect::Error("LimitExceeded")),
        ("return 'box' + 1", |_| Expect::Error("TypeError")),
    ]
}

fn same_value(a: &Value, b: &Value) -> bool {
    a.type_name() == b.type_name() && a.loose_eq(b)
}

pub fn run_program(src: &str, s: &SceneFixture, backend: &FixtureBackend, limits: &ExecutionLimits) -> ExecutionOutcome {
    let prog = match parse(src) {
        Ok(p) => p,
        Err(e) => return ExecutionOutcome::Failure(e),
    };
    let tb = Toolbox::new(backend, ToolConfig::default(), ApiVariant::Abstract);
    execute(&prog, &ProgramInput::new(Value::Patch(s.full_patch())), &tb, limits)
}

pub fn corpus_check() -> Check {
    let start = Instant::now();
    let s = market();
    let backend = FixtureBackend::new().with_scene(s.clone());
    let limits = ExecutionLimits::default();
    let corpus = corpus();
    ensure!(corpus.len() >= 20, "corpus has only {} programs", corpus.len());
    for (src, oracle) in &corpus {
        let got = run_program(src, &s, &backend, &limits);
        match (oracle(&s), &got) {
            (Expect::Value(want), ExecutionOutcome::Result(v)) => {
                ensure!(same_value(v, &want), "{src:?}: got {v:?}, oracle {want:?}")
            }
            (Expect::Error(class), ExecutionOutcome::Failure(e)) => {
                ensure!(e.class_name() == class, "{src:?}: got {}, oracle {class}", e.class_name())
            }
            (_, other) => return Err(format!("{src:?}: outcome kind differs from oracle: {other:?}")),
        }
        // the printer's output must parse back to the same tree
        let prog = parse(src).map_err(|e| format!("{src:?}: {e}"))?;
        let again = parse(&to_source(&prog)).map_err(|e| format!("{src:?} reprinted: {e}"))?;
        ensure!(prog.same_structure(&again), "{src:?}: round-trip changed the tree");
        // determinism
        ensure!(got == run_program(src, &s, &backend, &limits), "{src:?}: second run differs");
    }
    ensure!(start.elapsed() < Duration::from_secs(60), "corpus took {:?}", start.elapsed());
    Ok(())
}

const TOKENS: &[&str] = &[
    "return", "if", "elif", "else", "for", "in", "not", "and", "or", "None", "True", "False", "image", "find", "exists",
    "len", "range", "x", "y", "people", "(", ")", "[", "]", ":", ",", ".", "=", "==", "+", "-", "*", "/", "//", "%",
    "**", "<", ">", "'person'", "'car'", "0", "1", "-1", "2.5", "10**9", "\n", "\n    ", "\n        ", "import",
    "while", "lambda", "def", "execute_command", "sort_patches_left_to_right", "get_middle_patch", "left", "\t", "#",
    "\"", "'", "\\", "@", "[-2]", "max", "min", "str", "simple_query", "select_answer", "append",
];

fn token_soup(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..40);
    let mut out = String::new();
    for _ in 0..n {
        out.push_str(TOKENS.choose(rng).unwrap());
        if rng.gen_bool(0.6) {
            out.push(' ');
        }
    }
    out
}

fn mutate(rng: &mut ChaCha8Rng, src: &str) -> String {
    let mut chars: Vec<char> = src.chars().collect();
    for _ in 0..rng.gen_range(1..6) {
        let pos = rng.gen_range(0..=chars.len());
        match rng.gen_range(0..3) {
            0 if pos < chars.len() => {
                chars.remove(pos);
            }
            1 => {
                let tok = TOKENS.choose(rng).unwrap();
                for (i, c) in tok.chars().enumerate() {
                    chars.insert(pos + i, c);
                }
            }
            _ if pos < chars.len() => chars[pos] = (rng.gen_range(0x20u8..0x7f)) as char,
            _ => {}
        }
    }
    chars.into_iter().collect()
}

pub fn fuzz_check() -> Check {
    let start = Instant::now();
    let s = market();
    let backend = FixtureBackend::new().with_scene(s.clone());
    let limits = ExecutionLimits {
        max_steps: 20_000,
        max_loop_iterations: 2_000,
        max_collection_length: 2_000,
        wall_clock: Duration::from_secs(2),
    };
    let sources: Vec<&str> = corpus().into_iter().map(|(src, _)| src).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut results, mut failures) = (0, 0);
    for i in 0..10_000 {
        let input = if i % 2 == 0 {
            token_soup(&mut rng)
        } else {
            let base = *sources.choose(&mut rng).unwrap();
            mutate(&mut rng, base)
        };
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run_program(&input, &s, &backend, &limits)))
            .map_err(|_| format!("input {i} panicked: {input:?}"))?;
        let took = t0.elapsed();
        ensure!(took <= limits.wall_clock + Duration::from_millis(500), "input {i} ran {took:?}: {input:?}");
        match outcome {
            ExecutionOutcome::Result(_) => results += 1,
            ExecutionOutcome::Failure(e) => {
                let _bucket = e.bucket();
                failures += 1;
            }
        }
    }
    ensure!(results + failures == 10_000, "unclassified outcomes");
    ensure!(start.elapsed() < Duration::from_secs(60), "fuzzing took {:?}", start.elapsed());
    Ok(())
}
