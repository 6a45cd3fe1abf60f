//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criterion 1 (published benchmark numbers on real encoder embeddings) needs data
//! that is not available here and is reported as SKIP.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use embalign_core::correspondence::{build_pseudo_pairs, qap_2opt, qap_objective, SimilarityMatrix};
use embalign_core::io::{decode_embeddings, decode_model, encode_embeddings, encode_model, Dtype};
use embalign_core::linalg::{frobenius_distance, orthogonality_defect, spectral_norm};
use embalign_core::mapping::{procrustes_views, smooth_update};
use embalign_core::pipeline::{pessimistic_ranks, EvalReport};
use embalign_core::rng::{derive_seed, rng_from_seed};
use embalign_core::synth::random_orthogonal;
use embalign_core::{
    evaluate, fit_stages, synth_generate, EmbeddingMatrix, FormatError, PipelineConfig, Stage, StagedFit, SynthData,
    SynthSpec,
};
use ndarray::{array, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

// Criterion 2 thresholds.
const MIN_TOP1: f64 = 0.95;
const MAX_AVG_RANK: f64 = 1.2;
const MIN_MEAN_COSINE: f64 = 0.90;
const MAX_RECOVERY_TIME: Duration = Duration::from_secs(300);

const PROCRUSTES_TOL: f64 = 1e-8;
const QAP_TRIALS: usize = 100;
const QAP_MIN_OPTIMAL: usize = 99;
const QAP_MAX_TIME: Duration = Duration::from_secs(10);
const PAIR_TOL: f64 = 1e-12;
const REFINE2_SLACK: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// The criterion-2 fixture: 4000 rows per pool, d = 64, 20 components,
/// noise 0.01, 500 evaluation pairs, generator seed 0.
fn fixture() -> SynthData {
    let spec = SynthSpec { n: 4000, d: 64, components: 20, noise_sigma: 0.01, eval_pairs: 500, ..SynthSpec::default() };
    synth_generate(&spec).expect("fixture spec is valid")
}

fn small_with_seed(seed: u64) -> PipelineConfig {
    PipelineConfig { seed, ..PipelineConfig::small() }
}

fn meets_recovery(r: &EvalReport) -> bool {
    r.top1 >= MIN_TOP1 && r.avg_rank <= MAX_AVG_RANK && r.mean_cosine >= MIN_MEAN_COSINE
}

fn describe(r: &EvalReport) -> String {
    format!("top1={:.4} avgRank={:.4} meanCosine={:.4}", r.top1, r.avg_rank, r.mean_cosine)
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Shared state for the criteria that run the full pipeline on the fixture.
struct Recovery {
    data: SynthData,
    staged: StagedFit,
    report: EvalReport,
    elapsed: Duration,
}

fn recovery_run() -> Recovery {
    let start = Instant::now();
    let data = fixture();
    let staged = fit_stages(&data.xa, &data.xb, &PipelineConfig::small()).expect("fit succeeds");
    let model = staged.model_at(Stage::Refine2).expect("final model");
    let report = evaluate(&model, &data.eval_a, &data.eval_b).expect("evaluation succeeds");
    Recovery { data, staged, report, elapsed: start.elapsed() }
}

fn criterion2(run: &Recovery) -> Outcome {
    let pass = meets_recovery(&run.report) && run.elapsed <= MAX_RECOVERY_TIME;
    outcome(pass, format!("{} wall={:.1}s", describe(&run.report), run.elapsed.as_secs_f64()))
}

fn criterion3() -> Outcome {
    let a = gaussian(200, 16, 31);
    let q = random_orthogonal(16, 32);
    let b = a.dot(&q);
    let w = procrustes_views(a.view(), b.view()).expect("procrustes").w;
    let err = frobenius_distance(w.view(), q.view());
    outcome(err <= PROCRUSTES_TOL, format!("|W - Q|_F = {err:.2e}"))
}

fn criterion4() -> Outcome {
    fn permutations(c: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut perm: Vec<usize> = (0..c).collect();
        heap(c, &mut perm, &mut out);
        out
    }
    fn heap(k: usize, perm: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(perm.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, perm, out);
            let j = if k.is_multiple_of(2) { i } else { 0 };
            perm.swap(j, k - 1);
        }
    }

    let start = Instant::now();
    let mut optimal = 0;
    let all: Vec<Vec<Vec<usize>>> = (0..=7).map(permutations).collect();
    for trial in 0..QAP_TRIALS {
        let c = 3 + trial % 5;
        let points = gaussian(c, 6, derive_seed(400, trial as u64));
        let norms = points.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        let unit = &points / &norms.insert_axis(Axis(1));
        let sa = SimilarityMatrix::new(unit.dot(&unit.t())).expect("symmetric");
        let mut hidden: Vec<usize> = (0..c).collect();
        hidden.shuffle(&mut rng_from_seed(derive_seed(401, trial as u64)));
        let sb = sa.permuted(&hidden);

        let found = qap_2opt(&sa, &sb, 30, trial as u64).expect("qap");
        let best = all[c]
            .iter()
            .map(|p| qap_objective(&sa, &sb, p).expect("valid permutation"))
            .fold(f64::NEG_INFINITY, f64::max);
        if found.score >= best - 1e-9 * best.abs().max(1.0) {
            optimal += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        optimal >= QAP_MIN_OPTIMAL && elapsed <= QAP_MAX_TIME,
        format!("{optimal}/{QAP_TRIALS} trials optimal in {:.2}s", elapsed.as_secs_f64()),
    )
}

fn criterion5() -> Outcome {
    let mut worst_defect: f64 = 0.0;
    for trial in 0..200u64 {
        let d = 2 + (trial % 15) as usize;
        let m = 1 + (trial * 7 % 60) as usize;
        let a = gaussian(m, d, derive_seed(500, trial));
        let b = gaussian(m, d, derive_seed(501, trial));
        let w = procrustes_views(a.view(), b.view()).expect("procrustes").w;
        worst_defect = worst_defect.max(orthogonality_defect(w.view()));
    }
    let mut worst_norm: f64 = 0.0;
    for trial in 0..50u64 {
        let d = 8;
        let mut rng = rng_from_seed(derive_seed(502, trial));
        let mut w = random_orthogonal(d, derive_seed(503, trial));
        for step in 0..20u64 {
            let alpha = rng.random_range(0.05..=1.0);
            let w_new = random_orthogonal(d, derive_seed(derive_seed(504, trial), step));
            w = smooth_update(w.view(), w_new.view(), alpha).expect("smooth");
            worst_norm = worst_norm.max(spectral_norm(w.view()));
        }
    }
    outcome(
        worst_defect <= 1e-8 && worst_norm <= 1.0 + 1e-8,
        format!("max |W^T W - I|_max = {worst_defect:.2e}, max spectral norm after smoothing = {worst_norm:.12}"),
    )
}

fn criterion6() -> Outcome {
    fn cosine(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
        let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            a.dot(&b) / (na * nb)
        }
    }

    let mut worst: f64 = 0.0;
    let mut index_mismatch = 0;
    for trial in 0..100u64 {
        let mut rng = rng_from_seed(derive_seed(600, trial));
        let na = rng.random_range(1..=50);
        let nb = rng.random_range(1..=50);
        let d = rng.random_range(2..=8);
        let width = rng.random_range(2..=12);
        let k = rng.random_range(1..=nb);
        let xa = gaussian(na, d, derive_seed(601, trial));
        let xb = gaussian(nb, d, derive_seed(602, trial));
        let ra = gaussian(na, width, derive_seed(603, trial));
        let rb = gaussian(nb, width, derive_seed(604, trial));

        let pairs = build_pseudo_pairs(xa.view(), ra.view(), xb.view(), rb.view(), k).expect("pairs");
        for i in 0..na {
            let mut order: Vec<(f64, usize)> = (0..nb).map(|j| (cosine(ra.row(i), rb.row(j)), j)).collect();
            order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            let mut mean = ndarray::Array1::<f64>::zeros(d);
            for &(_, j) in order.iter().take(k) {
                mean += &xb.row(j);
            }
            mean /= k as f64;
            let gap = (&pairs.target.row(i) - &mean).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gap > PAIR_TOL {
                index_mismatch += 1;
            }
            worst = worst.max(gap);
            if pairs.source.row(i) != xa.row(i) {
                index_mismatch += 1;
            }
        }
    }
    outcome(index_mismatch == 0, format!("100 instances, max |target - oracle| = {worst:.2e}"))
}

fn criterion7(run: &Recovery) -> Outcome {
    let again = fit_stages(&run.data.xa, &run.data.xb, &PipelineConfig::small()).expect("fit succeeds");
    let first = encode_model(&run.staged.model_at(Stage::Refine2).expect("model")).expect("encode");
    let second = encode_model(&again.model_at(Stage::Refine2).expect("model")).expect("encode");
    let identical = first == second;

    let mut details = vec![format!("byte-identical={identical}"), format!("seed0 {}", describe(&run.report))];
    let mut all_pass = meets_recovery(&run.report);
    for seed in [1, 2] {
        let staged = fit_stages(&run.data.xa, &run.data.xb, &small_with_seed(seed)).expect("fit succeeds");
        let model = staged.into_model().expect("model");
        let report = evaluate(&model, &run.data.eval_a, &run.data.eval_b).expect("evaluation");
        all_pass &= meets_recovery(&report);
        details.push(format!("seed{seed} {}", describe(&report)));
    }
    outcome(identical && all_pass, details.join("; "))
}

fn criterion8(run: &Recovery) -> Outcome {
    let diag = &run.staged.diagnostics;
    let (initial, refine1) = (diag.initial.unwrap_or(f64::NAN), diag.refine1.unwrap_or(f64::NAN));
    let skipped = run.staged.model_at(Stage::Refine1).expect("refine-1 model");
    let without = evaluate(&skipped, &run.data.eval_a, &run.data.eval_b).expect("evaluation");
    let pass = refine1 > initial && run.report.top1 >= without.top1 - REFINE2_SLACK;
    outcome(
        pass,
        format!(
            "diagnostic initial={initial:.4} refine1={refine1:.4}; top1 full={:.4} without refine-2={:.4}",
            run.report.top1, without.top1
        ),
    )
}

fn criterion9() -> Outcome {
    // Row i holds the true match on the diagonal; it is beaten by i others.
    let sims = array![[0.9, 0.1, 0.2], [0.8, 0.5, 0.1], [0.7, 0.6, 0.3]];
    let ranks = pessimistic_ranks(sims.view());
    let cosines: Vec<f64> = (0..3).map(|i| sims[[i, i]]).collect();
    let report = EvalReport::from_ranks(&ranks, &cosines).expect("report");
    let pass = ranks == vec![1, 2, 3] && report.top1 == 1.0 / 3.0 && report.avg_rank == 2.0;
    outcome(pass, format!("ranks={ranks:?} top1={} avgRank={}", report.top1, report.avg_rank))
}

fn criterion10(run: &Recovery) -> Outcome {
    let x = EmbeddingMatrix::new(gaussian(3, 4, 1000), "round-trip").expect("matrix");
    let emb_bytes = encode_embeddings(&x, Dtype::F64);
    let back = decode_embeddings(&emb_bytes).expect("decode");
    let emb_ok = back.data().iter().zip(x.data().iter()).all(|(a, b)| a.to_bits() == b.to_bits());

    let model = run.staged.model_at(Stage::Refine2).expect("model");
    let model_bytes = encode_model(&model).expect("encode");
    let loaded = decode_model(&model_bytes).expect("decode");
    let model_ok = loaded.w.iter().zip(model.w.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
        && encode_model(&loaded).expect("encode") == model_bytes;

    let mut corrupt = model_bytes.clone();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x40;
    let model_rejected = matches!(decode_model(&corrupt), Err(FormatError::ChecksumMismatch));
    let emb_rejected = matches!(
        decode_embeddings(&emb_bytes[..emb_bytes.len() - 1]),
        Err(FormatError::TruncatedPayload { .. })
    );
    outcome(
        emb_ok && model_ok && model_rejected && emb_rejected,
        format!("emb={emb_ok} model={model_ok} corrupt-model-rejected={model_rejected} truncated-emb-rejected={emb_rejected}"),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failures += 1;
        }
        println!("{tag} criterion {id:>2} {name}: {}", o.detail);
    };

    println!("SKIP criterion  1 published benchmark reproduction: needs real encoder embeddings, not available offline");
    let run = catch_unwind(recovery_run).ok();
    match &run {
        Some(run) => report(2, "synthetic recovery", guarded(|| criterion2(run))),
        None => report(2, "synthetic recovery", outcome(false, "pipeline panicked".into())),
    }
    report(3, "exact procrustes recovery", guarded(criterion3));
    report(4, "QAP exhaustive-oracle equivalence", guarded(criterion4));
    report(5, "orthogonality suite", guarded(criterion5));
    report(6, "kNN and pseudo-pair brute-force equivalence", guarded(criterion6));
    match &run {
        Some(run) => {
            report(7, "determinism and seed stability", guarded(|| criterion7(run)));
            report(8, "refinement progression", guarded(|| criterion8(run)));
        }
        None => {
            report(7, "determinism and seed stability", outcome(false, "pipeline panicked".into()));
            report(8, "refinement progression", outcome(false, "pipeline panicked".into()));
        }
    }
    report(9, "metric fixture", guarded(criterion9));
    match &run {
        Some(run) => report(10, "format round-trips", guarded(|| criterion10(run))),
        None => report(10, "format round-trips", outcome(false, "pipeline panicked".into())),
    }

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
