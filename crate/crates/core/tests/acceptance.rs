//! Acceptance suite. Every criterion prints one `[PASS]` or `[FAIL]` line;
//! the process exits non-zero when any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdiou::cluster::{self, internal_indices, load_annotations, AnnotationFormat, Distance};
use cdiou::geometry::Box;
use cdiou::gradcheck;
use cdiou::losses::{self, BaseLoss, LossKind};
use cdiou::metrics::{self, MetricKind};
use cdiou::simulator::{self, FloatRule, SimulationConfig};

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> Box {
    Box::try_new(x1, y1, x2, y2).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn within(elapsed: Duration, limit: Duration) -> Outcome {
    if elapsed < limit {
        Ok(format!("{:.2}s", elapsed.as_secs_f64()))
    } else {
        Err(format!(
            "took {:.2}s, limit {:.0}s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        ))
    }
}

/// Area of `a ∩ b` and `a ∪ b` by counting cell centers on a `1/steps` grid.
fn raster_areas(a: &Box, b: &Box, lo: f64, hi: f64, steps: usize) -> (f64, f64, f64) {
    let cell = (hi - lo) / steps as f64;
    let (mut inter, mut union, mut hull) = (0usize, 0usize, 0usize);
    let inside = |bx: &Box, x: f64, y: f64| x > bx.x1 && x < bx.x2 && y > bx.y1 && y < bx.y2;
    let hx1 = a.x1.min(b.x1);
    let hy1 = a.y1.min(b.y1);
    let hx2 = a.x2.max(b.x2);
    let hy2 = a.y2.max(b.y2);
    for i in 0..steps {
        let x = lo + (i as f64 + 0.5) * cell;
        for j in 0..steps {
            let y = lo + (j as f64 + 0.5) * cell;
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
            hull += (x > hx1 && x < hx2 && y > hy1 && y < hy2) as usize;
        }
    }
    let c2 = cell * cell;
    (inter as f64 * c2, union as f64 * c2, hull as f64 * c2)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let rp = b(0.0, 0.0, 2.0, 2.0);
    let gt = b(1.0, 1.0, 3.0, 3.0);
    let tol = 1e-6;

    let (inter, union, hull) = raster_areas(&rp, &gt, 0.0, 3.0, 600);
    let raster_iou = inter / union;
    let raster_giou = raster_iou - (hull - union) / hull;
    ensure!(
        close(raster_iou, 1.0 / 7.0, tol),
        "raster oracle iou {raster_iou}"
    );
    ensure!(
        close(raster_giou, -5.0 / 63.0, tol),
        "raster oracle giou {raster_giou}"
    );
    // Corners are each sqrt(2) apart; the enclosing box is 3x3.
    let diou_closed = 4.0 * 2f64.sqrt() / (4.0 * 18f64.sqrt());

    let iou = metrics::iou(&rp, &gt).unwrap();
    let giou = metrics::giou(&rp, &gt).unwrap();
    let diou = metrics::diou_ratio(&rp, &gt).unwrap();
    let cd = metrics::cdiou(&rp, &gt, 0.001).unwrap();
    let l_diou = losses::loss(&rp, &gt, LossKind::DIoU).unwrap().value;
    let l_cdiou = losses::loss(&rp, &gt, LossKind::cdiou()).unwrap().value;
    ensure!(close(iou, 1.0 / 7.0, tol), "iou {iou}");
    ensure!(close(giou, -5.0 / 63.0, tol), "giou {giou}");
    ensure!(
        close(diou, 1.0 / 3.0, tol) && close(diou_closed, 1.0 / 3.0, 1e-15),
        "diou {diou}"
    );
    ensure!(close(cd, 0.143524, tol), "cdiou {cd}");
    ensure!(
        close(cd, 1.0 / 7.0 + 0.001 * (2.0 / 3.0), 1e-15),
        "cdiou closed form {cd}"
    );
    ensure!(close(l_diou, 61.0 / 63.0, tol), "L_DIoU {l_diou}");
    ensure!(close(l_cdiou, 25.0 / 21.0, tol), "L_CDIoU {l_cdiou}");
    within(start.elapsed(), Duration::from_secs(1))
}

fn random_pair(rng: &mut ChaCha8Rng) -> (Box, Box) {
    let draw = |rng: &mut ChaCha8Rng| {
        let cx = rng.gen_range(-10.0..10.0);
        let cy = rng.gen_range(-10.0..10.0);
        let w = 10f64.powf(rng.gen_range(-2.0..1.0));
        let h = 10f64.powf(rng.gen_range(-2.0..1.0));
        Box::from_center(cx, cy, w, h)
    };
    (draw(rng), draw(rng))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bases: Vec<(BaseLoss, LossKind)> = BaseLoss::ALL
        .iter()
        .map(|&base| (base, LossKind::CDIoU { base }))
        .collect();
    let (mut contained, mut disjoint) = (0, 0);
    for i in 0..100_000 {
        let (rp, gt) = random_pair(&mut rng);
        let iou = metrics::iou(&rp, &gt).unwrap();
        let giou = metrics::giou(&rp, &gt).unwrap();
        let diou = metrics::diou_ratio(&rp, &gt).unwrap();
        ensure!((0.0..=1.0).contains(&iou), "pair {i}: iou {iou}");
        ensure!(giou > -1.0 && giou <= 1.0, "pair {i}: giou {giou}");
        ensure!((0.0..1.0).contains(&diou), "pair {i}: diou {diou}");
        for &(base, kind) in &bases {
            let with = losses::loss(&rp, &gt, kind).unwrap().value;
            let plain = losses::loss(&rp, &gt, LossKind::from(base)).unwrap().value;
            ensure!(
                with == plain + diou,
                "pair {i}: {} is {with}, base + diou is {}",
                kind.name(),
                plain + diou
            );
        }
        contained += (rp.contains(&gt) || gt.contains(&rp)) as usize;
        disjoint += (iou == 0.0) as usize;
    }
    ensure!(
        contained > 0 && disjoint > 0,
        "sample lacks containment or disjoint pairs"
    );
    within(start.elapsed(), Duration::from_secs(10))
}

fn criterion_3() -> Outcome {
    let gt = b(0.0, 0.0, 4.0, 2.0);
    let rp1 = b(1.0, 0.0, 3.0, 2.0);
    let rp2 = b(0.0, 0.5, 4.0, 1.5);
    for (name, rp) in [("rp1", rp1), ("rp2", rp2)] {
        let iou = metrics::iou(&rp, &gt).unwrap();
        let l = losses::loss(&rp, &gt, LossKind::DIoU).unwrap().value;
        ensure!(iou == 0.5, "{name}: iou {iou}");
        ensure!(l == 0.5, "{name}: L_DIoU {l}");
    }
    let d1 = metrics::diou_ratio(&rp1, &gt).unwrap();
    let d2 = metrics::diou_ratio(&rp2, &gt).unwrap();
    ensure!(close(d1, 0.223607, 1e-5), "diou rp1 {d1}");
    ensure!(close(d2, 0.111803, 1e-5), "diou rp2 {d2}");
    let order = metrics::rank_proposals(&[rp1, rp2], &gt, MetricKind::cdiou()).unwrap();
    let c1 = metrics::cdiou(&rp1, &gt, 0.001).unwrap();
    let c2 = metrics::cdiou(&rp2, &gt, 0.001).unwrap();
    ensure!(
        order == vec![1, 0] && c2 > c1,
        "ranking {order:?} ({c1} vs {c2})"
    );

    // Concentric proposals inside the target with equal area: same IoU, zero
    // center distance, so DIoU cannot tell them apart.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut found, mut tries) = (0, 0);
    while found < 100 && tries < 10_000 {
        tries += 1;
        let (cx, cy) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let (gw, gh) = (rng.gen_range(1.0..10.0), rng.gen_range(1.0..10.0));
        let gt = Box::from_center(cx, cy, gw, gh);
        let w1 = rng.gen_range(0.1..1.0) * gw;
        let h1 = rng.gen_range(0.1..1.0) * gh;
        let w2 = rng.gen_range(0.1..1.0) * gw;
        let h2 = w1 * h1 / w2;
        if h2 >= gh {
            continue;
        }
        let rp1 = Box::from_center(cx, cy, w1, h1);
        let rp2 = Box::from_center(cx, cy, w2, h2);
        let l1 = losses::loss(&rp1, &gt, LossKind::DIoU).unwrap().value;
        let l2 = losses::loss(&rp2, &gt, LossKind::DIoU).unwrap().value;
        let c1 = metrics::cdiou(&rp1, &gt, 0.001).unwrap();
        let c2 = metrics::cdiou(&rp2, &gt, 0.001).unwrap();
        if (l1 - l2).abs() <= 1e-12 && (c1 - c2).abs() > 1e-9 {
            found += 1;
        }
    }
    ensure!(
        found >= 100,
        "only {found} tied/separated pairs in {tries} draws"
    );
    Ok(format!("{found} tied pairs separated in {tries} draws"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let kinds = LossKind::all();
    let reports = gradcheck::sweep(&kinds, 1000, 4, 1e-5, 1e-4).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for r in &reports {
        ensure!(
            r.passed && r.failures == 0 && r.n_pairs == 1000,
            "{}: {} failures, max rel error {:e}",
            r.kind,
            r.failures,
            r.max_rel_error
        );
        worst = worst.max(r.max_rel_error);
    }
    within(start.elapsed(), Duration::from_secs(30))
        .map(|t| format!("{} kinds, worst rel error {worst:.2e}, {t}", reports.len()))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..1000 {
        let (ow, oh) = (rng.gen_range(0.5..10.0), rng.gen_range(0.5..10.0));
        let outer = Box::from_center(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), ow, oh);
        let iw = rng.gen_range(0.05..1.0) * ow;
        let ih = rng.gen_range(0.05..1.0) * oh;
        let x1 = outer.x1 + rng.gen_range(0.0..1.0) * (ow - iw);
        let y1 = outer.y1 + rng.gen_range(0.0..1.0) * (oh - ih);
        let inner = Box::new(x1, y1, (x1 + iw).min(outer.x2), (y1 + ih).min(outer.y2));
        ensure!(outer.contains(&inner), "pair {i} is not contained");
        let (rp, gt) = if i % 2 == 0 {
            (inner, outer)
        } else {
            (outer, inner)
        };
        let iou = metrics::iou(&rp, &gt).unwrap();
        let giou = metrics::giou(&rp, &gt).unwrap();
        ensure!(giou == iou, "pair {i}: giou {giou} vs iou {iou}");
        let lg = losses::loss(&rp, &gt, LossKind::GIoU).unwrap().value;
        let li = losses::loss(&rp, &gt, LossKind::IoULinear).unwrap().value;
        ensure!(lg == li, "pair {i}: L_GIoU {lg} vs L_IoU {li}");
    }
    Ok("1000 contained pairs".into())
}

fn criterion_6() -> Outcome {
    let config = SimulationConfig::default();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let report = pool
        .install(|| simulator::run(&config))
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(report.scenarios >= 1000, "{} scenarios", report.scenarios);
    ensure!(report.iterations == 200, "{} iterations", report.iterations);
    let get = |name: &str| report.curve(name).ok_or_else(|| format!("no {name} curve"));
    let (cd, gi, il) = (get("cdiou")?, get("giou")?, get("iou_log")?);
    let table = report
        .curves
        .iter()
        .map(|c| {
            format!(
                "{} lr={} final={:.4} reach={}",
                c.loss,
                c.initial_lr,
                c.final_corner_error(),
                c.iterations_to_threshold
                    .map_or("never".into(), |i| i.to_string())
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    ensure!(
        cd.final_corner_error() <= gi.final_corner_error(),
        "final error cdiou > giou [{table}]"
    );
    ensure!(
        cd.final_corner_error() <= il.final_corner_error(),
        "final error cdiou > iou_log [{table}]"
    );
    let reach = match (cd.iterations_to_threshold, gi.iterations_to_threshold) {
        (Some(c), Some(g)) => c <= g,
        (Some(_), None) => true,
        (None, _) => false,
    };
    ensure!(
        reach,
        "cdiou reaches the threshold {:.4} later than giou [{table}]",
        report.threshold
    );
    within(elapsed, Duration::from_secs(120)).map(|t| format!("{table}; {t} single-threaded"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..5 {
        let k = 2 + trial;
        let points: Vec<[f64; 2]> = (0..200)
            .map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)])
            .collect();
        let labels: Vec<usize> = (0..200)
            .map(|i| if i < k { i } else { rng.gen_range(0..k) })
            .collect();
        let wrapped: Vec<Option<usize>> = labels.iter().map(|&l| Some(l)).collect();
        let got = internal_indices(&points, &wrapped);
        let (sse, sil, ch) = brute_force_indices(&points, &labels, k);
        ensure!(
            close(got.sse, sse, 1e-9),
            "trial {trial}: sse {} vs {sse}",
            got.sse
        );
        let gs = got.silhouette.ok_or("silhouette undefined")?;
        ensure!(
            close(gs, sil, 1e-9),
            "trial {trial}: silhouette {gs} vs {sil}"
        );
        let gc = got.calinski_harabasz.ok_or("CH undefined")?;
        ensure!(close(gc, ch, 1e-9), "trial {trial}: CH {gc} vs {ch}");
    }

    let fixture = fixture_path("three_blobs.csv");
    let set =
        load_annotations(&fixture, AnnotationFormat::Csv, false).map_err(|e| e.to_string())?;
    let report =
        cluster::recommend(&set, &cluster::SearchSpace::default()).map_err(|e| e.to_string())?;
    ensure!(
        report.recommendations.len() == 2,
        "{} recommendations",
        report.recommendations.len()
    );
    for r in &report.recommendations {
        ensure!(
            r.scheme.k == 3,
            "recommended {} with k={}",
            r.scheme.method.name(),
            r.scheme.k
        );
    }

    let mut steps = 0;
    for k in 2..=8 {
        let run = cluster::kmeans(&set.points, k, Distance::Euclidean, 42, 300)
            .map_err(|e| e.to_string())?;
        for (i, w) in run.objective_trace.windows(2).enumerate() {
            ensure!(
                w[1] <= w[0] + 1e-12 * w[0].abs(),
                "k={k}: SSE rose at step {i}: {} -> {}",
                w[0],
                w[1]
            );
            steps += 1;
        }
    }
    Ok(format!(
        "indices match oracle, two k=3 recommendations, {steps} monotone Lloyd steps"
    ))
}

/// Direct O(n²) SSE, mean silhouette and Calinski-Harabasz.
fn brute_force_indices(points: &[[f64; 2]], labels: &[usize], k: usize) -> (f64, f64, f64) {
    let n = points.len();
    let d = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let centroid = |c: usize| {
        let m: Vec<&[f64; 2]> = (0..n)
            .filter(|&i| labels[i] == c)
            .map(|i| &points[i])
            .collect();
        let len = m.len() as f64;
        [
            m.iter().map(|p| p[0]).sum::<f64>() / len,
            m.iter().map(|p| p[1]).sum::<f64>() / len,
        ]
    };
    let centroids: Vec<[f64; 2]> = (0..k).map(centroid).collect();
    let sse: f64 = (0..n)
        .map(|i| d(&points[i], &centroids[labels[i]]).powi(2))
        .sum();
    let overall = [
        points.iter().map(|p| p[0]).sum::<f64>() / n as f64,
        points.iter().map(|p| p[1]).sum::<f64>() / n as f64,
    ];
    let between: f64 = (0..k)
        .map(|c| {
            labels.iter().filter(|&&l| l == c).count() as f64 * d(&centroids[c], &overall).powi(2)
        })
        .sum();
    let ch = (between / (k - 1) as f64) / (sse / (n - k) as f64);
    let mut sil = 0.0;
    for i in 0..n {
        let mean_to = |c: usize| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == c).collect();
            others
                .iter()
                .map(|&j| d(&points[i], &points[j]))
                .sum::<f64>()
                / others.len() as f64
        };
        let own_size = labels.iter().filter(|&&l| l == labels[i]).count();
        if own_size == 1 {
            continue;
        }
        let a = mean_to(labels[i]);
        let b = (0..k)
            .filter(|&c| c != labels[i])
            .map(mean_to)
            .fold(f64::INFINITY, f64::min);
        sil += (b - a) / a.max(b);
    }
    (sse, sil / n as f64, ch)
}

fn criterion_8() -> Outcome {
    let lr = 0.1;
    let flat = [1.0; 6];
    let falling = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5];
    let short = [1.0, 1.0, 1.0];
    let step = |h: &[f64], rule| simulator::floating_lr_step(lr, h, 5, 1.05, rule).unwrap();
    let cases = [
        ("prose stagnation", step(&flat, FloatRule::Prose), 1.05 * lr),
        ("prose decrease", step(&falling, FloatRule::Prose), lr),
        ("prose warm-up", step(&short, FloatRule::Prose), lr),
        ("literal stagnation", step(&flat, FloatRule::Literal), lr),
        (
            "literal decrease",
            step(&falling, FloatRule::Literal),
            1.05 * lr,
        ),
        ("literal warm-up", step(&short, FloatRule::Literal), lr),
    ];
    for (name, got, want) in cases {
        ensure!(got == want, "{name}: {got} vs {want}");
    }
    ensure!(
        close(step(&flat, FloatRule::Prose), 0.105, 1e-15),
        "stagnation is not 0.105"
    );
    ensure!(
        simulator::floating_lr_step(lr, &flat, 0, 1.05, FloatRule::Prose).is_err(),
        "k = 0 accepted"
    );
    Ok("6 cases".into())
}

fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn run_cli(args: &[&str], out: &Path) -> std::result::Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_cdiou"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .status()
        .map_err(|e| e.to_string())?;
    ensure!(status.success(), "{args:?} exited with {status}");
    Ok(())
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let read = |p: PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    let blobs = fixture_path("three_blobs.csv");
    let blobs = blobs.to_str().unwrap();
    let mut compared = 0;
    for run in ["a", "b"] {
        let d = dir.path().join(run);
        std::fs::create_dir_all(&d).map_err(|e| e.to_string())?;
        run_cli(
            &["grad", "--kinds", "all", "--n", "1000", "--seed", "42"],
            &d.join("grad.json"),
        )?;
        run_cli(&["sim", "--seed", "42"], &d.join("sim"))?;
        run_cli(
            &[
                "cluster",
                "--annotations",
                blobs,
                "--format",
                "csv",
                "--method",
                "auto",
                "--seed",
                "42",
            ],
            &d.join("report.json"),
        )?;
    }
    for file in [
        "grad.json",
        "sim/curves.csv",
        "sim/summary.json",
        "report.json",
    ] {
        let a = read(dir.path().join("a").join(file))?;
        let b = read(dir.path().join("b").join(file))?;
        ensure!(!a.is_empty() && a == b, "{file} differs between runs");
        compared += 1;
    }
    Ok(format!("{compared} outputs byte-identical"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 worked-example golden values", criterion_1),
        ("2 range invariants on 1e5 pairs", criterion_2),
        ("3 discrimination suite", criterion_3),
        ("4 analytic vs numeric gradients", criterion_4),
        ("5 containment degeneracy", criterion_5),
        ("6 convergence benchmark", criterion_6),
        ("7 clustering indices and recommendations", criterion_7),
        ("8 floating learning-rate rule", criterion_8),
        ("9 command determinism", criterion_9),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome =
            std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("[PASS] criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
