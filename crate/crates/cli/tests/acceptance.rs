//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use claimtrust::claims::TemplateSet;
use claimtrust::embed::{select_candidate_pairs, CandidatePair, EmbeddingIndex};
use claimtrust::eval::{render_table, run_eval, EvalCase, EvalSettings};
use claimtrust::graph::build_graph;
use claimtrust::ingest::save_documents;
use claimtrust::providers::MockProvider;
use claimtrust::rerank::{embed_documents, rerank, RankMode, RankedResult, Retrieved};
use claimtrust::solver::claimrank;
use claimtrust::{Claim, DocId, Document, Polarity, Relation, Seed, TrustConfig, TrustScores};

/// Agreement with the closed-form two-node solution.
const TWO_NODE_TOLERANCE: f64 = 1e-4;
/// Isolated trusted documents settle at (1 − α)·1 + α·½.
const ISOLATED_TRUSTED: f64 = 0.575;
const ISOLATED_TOLERANCE: f64 = 1e-4;
const CONTRACTION_SLACK: f64 = 1e-12;
const MAX_ROUNDS: usize = 81;
const MIN_SEPARATION: f64 = 0.1;

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Outcome {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:?}, limit {limit:?}"))
}

fn doc(i: usize, seed: Seed) -> Document {
    Document {
        id: DocId::from_index(i).unwrap(),
        title: format!("Story {i}"),
        body: format!("Body of story {i}."),
        published: None,
        seed,
    }
}

fn claim_of(d: usize, ordinal: usize) -> Claim {
    Claim::new(
        DocId::from_index(d).unwrap(),
        ordinal,
        format!("claim {ordinal} of {d}"),
    )
}

fn relation(a: &Claim, b: &Claim, polarity: Polarity) -> Relation {
    let (a, b) = if a.claim_id < b.claim_id {
        (a, b)
    } else {
        (b, a)
    };
    Relation {
        claim_a: a.claim_id.clone(),
        claim_b: b.claim_id.clone(),
        polarity,
        similarity: 0.9,
    }
}

struct Instance {
    docs: Vec<Document>,
    claims: Vec<Claim>,
    relations: Vec<Relation>,
}

impl Instance {
    fn rank(
        &self,
        config: &TrustConfig,
    ) -> claimtrust::Result<(TrustScores, claimtrust::solver::IterationTrace)> {
        let ids: Vec<DocId> = self.docs.iter().map(|d| d.id.clone()).collect();
        let (graph, _) = build_graph(&self.relations, &self.claims, &ids)?;
        claimrank(&graph, &self.docs, config)
    }
}

fn two_node(polarity: Polarity) -> Instance {
    let docs = vec![doc(0, Seed::Trusted), doc(1, Seed::Unknown)];
    let claims = vec![claim_of(0, 0), claim_of(1, 0)];
    let relations = vec![relation(&claims[0], &claims[1], polarity)];
    Instance {
        docs,
        claims,
        relations,
    }
}

/// Random instance with three claims per document and up to `edges`
/// distinct signed claim relations, some within a single document.
fn random_instance(r: &mut ChaCha8Rng, n: usize, edges: usize) -> Instance {
    let docs: Vec<Document> = (0..n)
        .map(|i| {
            doc(
                i,
                if r.random_bool(0.5) {
                    Seed::Trusted
                } else {
                    Seed::Unknown
                },
            )
        })
        .collect();
    let claims: Vec<Claim> = (0..n)
        .flat_map(|d| (0..3).map(move |o| claim_of(d, o)))
        .collect();
    let mut seen = HashSet::new();
    let mut relations = Vec::new();
    for _ in 0..edges {
        let i = r.random_range(0..claims.len());
        let j = r.random_range(0..claims.len());
        if i == j || !seen.insert((i.min(j), i.max(j))) {
            continue;
        }
        let polarity = if r.random_bool(0.5) {
            Polarity::Supports
        } else {
            Polarity::Refutes
        };
        relations.push(relation(&claims[i], &claims[j], polarity));
    }
    Instance {
        docs,
        claims,
        relations,
    }
}

/// Solves the two-node affine system by Cramer's rule. With a supporting
/// edge `s_i = (1 − α)s⁰_i + α(1 + s_j)/2`; with a refuting edge
/// `s_i = (1 − α)s⁰_i + α(1 − s_j)/2`.
fn two_node_closed_form(config: &TrustConfig, supporting: bool) -> (f64, f64) {
    let a = config.alpha;
    let c = if supporting { a / 2.0 } else { -a / 2.0 };
    let b0 = (1.0 - a) * config.initial_trusted + a / 2.0;
    let b1 = (1.0 - a) * config.initial_unknown + a / 2.0;
    // [1  −c; −c  1] · s = b
    let det = 1.0 - c * c;
    ((b0 + c * b1) / det, (b1 + c * b0) / det)
}

fn two_node_fixed_points() -> Outcome {
    let start = Instant::now();
    let config = TrustConfig::default();
    for (polarity, supporting, printed) in [
        (Polarity::Supports, true, ("0.9611", "0.9085")),
        (Polarity::Refutes, false, ("0.4424", "0.3120")),
    ] {
        let (scores, trace) = two_node(polarity)
            .rank(&config)
            .map_err(|e| e.to_string())?;
        check(trace.converged, || {
            format!("{polarity:?} fixture did not converge")
        })?;
        let got = (
            scores.get(&DocId::from_index(0).unwrap()).unwrap(),
            scores.get(&DocId::from_index(1).unwrap()).unwrap(),
        );
        let want = two_node_closed_form(&config, supporting);
        check(
            (got.0 - want.0).abs() < TWO_NODE_TOLERANCE
                && (got.1 - want.1).abs() < TWO_NODE_TOLERANCE,
            || format!("{polarity:?}: got {got:?}, closed form {want:?}"),
        )?;
        let shown = (format!("{:.4}", got.0), format!("{:.4}", got.1));
        check(
            shown == (printed.0.to_string(), printed.1.to_string()),
            || format!("{polarity:?}: printed {shown:?}, expected {printed:?}"),
        )?;
    }
    within_time(start, Duration::from_secs(1))
}

fn isolated_documents() -> Outcome {
    // Documents 0–1 form a refuting pair; 2–7 are isolated with mixed seeds.
    let seeds = [
        Seed::Trusted,
        Seed::Unknown,
        Seed::Unknown,
        Seed::Trusted,
        Seed::Unknown,
        Seed::Trusted,
        Seed::Unknown,
        Seed::Unknown,
    ];
    let docs: Vec<Document> = seeds.iter().enumerate().map(|(i, &s)| doc(i, s)).collect();
    let claims: Vec<Claim> = (0..docs.len()).map(|d| claim_of(d, 0)).collect();
    let relations = vec![relation(&claims[0], &claims[1], Polarity::Refutes)];
    let inst = Instance {
        docs,
        claims,
        relations,
    };
    let config = TrustConfig::default();
    let (scores, _) = inst.rank(&config).map_err(|e| e.to_string())?;
    for d in &inst.docs[2..] {
        let s = scores.get(&d.id).unwrap();
        match d.seed {
            Seed::Unknown => check(
                (s - 0.5).abs() <= config.tolerance && format!("{s:.4}") == "0.5000",
                || format!("unknown {} ended at {s}", d.id),
            )?,
            Seed::Trusted => check((s - ISOLATED_TRUSTED).abs() <= ISOLATED_TOLERANCE, || {
                format!("trusted {} ended at {s}", d.id)
            })?,
        }
    }
    Ok(())
}

fn contraction_suite() -> Outcome {
    let start = Instant::now();
    let config = TrustConfig::default();
    let mut r = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst_rounds = 0;
    let mut failures = Vec::new();
    for case in 0..100 {
        let n = r.random_range(1..=50);
        let edges = r.random_range(0..=3 * n);
        let inst = random_instance(&mut r, n, edges);
        let (scores, trace) = inst.rank(&config).map_err(|e| e.to_string())?;
        for (k, w) in trace.deltas.windows(2).enumerate() {
            if w[1] > config.alpha * w[0] + CONTRACTION_SLACK {
                failures.push(format!(
                    "case {case}: Δ{} = {} > 0.85·{}",
                    k + 2,
                    w[1],
                    w[0]
                ));
            }
        }
        if let Some((id, s)) = scores
            .scores
            .iter()
            .find(|(_, s)| !(0.0..=1.0).contains(*s))
        {
            failures.push(format!("case {case}: score {s} for {id}"));
        }
        if !trace.converged || trace.deltas.len() > MAX_ROUNDS {
            failures.push(format!(
                "case {case} (n={n}): {} rounds, converged={}",
                trace.deltas.len(),
                trace.converged
            ));
        }
        worst_rounds = worst_rounds.max(trace.deltas.len());
    }
    check(failures.is_empty(), || {
        format!("{} violations, first: {}", failures.len(), failures[0])
    })?;
    within_time(start, Duration::from_secs(10))?;
    println!("    most rounds over 100 graphs: {worst_rounds}");
    Ok(())
}

fn permutation_equivariance() -> Outcome {
    let config = TrustConfig::default();
    let mut r = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    for case in 0..20 {
        let n = r.random_range(2..=40);
        let edges = r.random_range(0..=4 * n);
        let inst = random_instance(&mut r, n, edges);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);

        let mut docs: Vec<Document> = (0..n).map(|i| doc(i, Seed::Unknown)).collect();
        for (old, d) in inst.docs.iter().enumerate() {
            docs[perm[old]].seed = d.seed;
        }
        let rename = |claim_id: &str| -> Claim {
            let (d, o) = claim_id.split_once('-').unwrap();
            claim_of(perm[d.parse::<usize>().unwrap()], o.parse().unwrap())
        };
        let claims: Vec<Claim> = (0..n)
            .flat_map(|d| (0..3).map(move |o| claim_of(d, o)))
            .collect();
        let mut relations: Vec<Relation> = inst
            .relations
            .iter()
            .map(|x| relation(&rename(&x.claim_a), &rename(&x.claim_b), x.polarity))
            .collect();
        relations.shuffle(&mut r);
        let permuted = Instance {
            docs,
            claims,
            relations,
        };

        let (a, ta) = inst.rank(&config).map_err(|e| e.to_string())?;
        let (b, tb) = permuted.rank(&config).map_err(|e| e.to_string())?;
        check(ta.deltas.len() == tb.deltas.len(), || {
            format!("case {case}: round counts differ")
        })?;
        for (old, &image) in perm.iter().enumerate() {
            let x = a.get(&DocId::from_index(old).unwrap()).unwrap();
            let y = b.get(&DocId::from_index(image).unwrap()).unwrap();
            check(x.to_bits() == y.to_bits(), || {
                format!("case {case}: document {old} scored {x} but its image {image} scored {y}")
            })?;
        }
    }
    Ok(())
}

/// All cross-document pairs sorted by the nomination order, cut to `k`.
fn brute_force_pairs(claims: &[Claim], rows: &[Vec<f64>], k: usize) -> Vec<CandidatePair> {
    let mut all = Vec::new();
    for i in 0..claims.len() {
        for j in 0..claims.len() {
            if claims[i].doc_id == claims[j].doc_id || claims[i].claim_id >= claims[j].claim_id {
                continue;
            }
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(x, y)| x * y).sum();
            all.push(CandidatePair {
                claim_a: claims[i].claim_id.clone(),
                claim_b: claims[j].claim_id.clone(),
                similarity: s.clamp(-1.0, 1.0),
            });
        }
    }
    all.sort_by(|x, y| {
        y.similarity
            .partial_cmp(&x.similarity)
            .unwrap()
            .then_with(|| x.claim_a.cmp(&y.claim_a))
            .then_with(|| x.claim_b.cmp(&y.claim_b))
    });
    all.truncate(k);
    all
}

fn unit(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn top_k_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let mut tied_instances = 0;
    for case in 0..50 {
        let n_claims = r.random_range(2..=200);
        let n_docs = r.random_range(1..=n_claims.min(60));
        let dim = r.random_range(2..=16);
        // Half the instances draw rows from a small palette to force ties.
        let palette: Option<Vec<Vec<f64>>> =
            (case % 2 == 0).then(|| (0..5).map(|_| unit(&mut r, dim)).collect());
        let mut ordinals = vec![0; n_docs];
        let mut claims = Vec::with_capacity(n_claims);
        let mut rows = Vec::with_capacity(n_claims);
        for _ in 0..n_claims {
            let d = r.random_range(0..n_docs);
            claims.push(claim_of(d, ordinals[d]));
            ordinals[d] += 1;
            rows.push(match &palette {
                Some(p) => p[r.random_range(0..p.len())].clone(),
                None => unit(&mut r, dim),
            });
        }
        let k = match case % 3 {
            0 => r.random_range(0..=20),
            1 => r.random_range(0..=n_claims * 4),
            _ => usize::MAX / 2,
        };
        let ids = claims.iter().map(|c| c.claim_id.clone()).collect();
        let index = EmbeddingIndex::new(dim, ids, rows.clone()).map_err(|e| e.to_string())?;
        let got = select_candidate_pairs(&index, &claims, k.min(n_claims * n_claims))
            .map_err(|e| e.to_string())?;
        let want = brute_force_pairs(&claims, &rows, k.min(n_claims * n_claims));
        if want.windows(2).any(|w| w[0].similarity == w[1].similarity) {
            tied_instances += 1;
        }
        check(got == want, || {
            let at = got
                .iter()
                .zip(&want)
                .position(|(x, y)| x != y)
                .unwrap_or(got.len().min(want.len()));
            format!(
                "case {case}: first difference at position {at} (lengths {} vs {})",
                got.len(),
                want.len()
            )
        })?;
    }
    check(tied_instances > 0, || {
        "no instance exercised tie-breaking".into()
    })?;
    within_time(start, Duration::from_secs(10))
}

fn separation_benchmark() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let trusted = 20;
    let unknown = 20;
    let docs: Vec<Document> = (0..trusted + unknown)
        .map(|i| {
            doc(
                i,
                if i < trusted {
                    Seed::Trusted
                } else {
                    Seed::Unknown
                },
            )
        })
        .collect();
    let mut ordinals = vec![0; docs.len()];
    let mut claims = Vec::new();
    let mut relations = Vec::new();
    let mut fresh = |d: usize, claims: &mut Vec<Claim>| -> Claim {
        let c = claim_of(d, ordinals[d]);
        ordinals[d] += 1;
        claims.push(c.clone());
        c
    };
    for a in 0..trusted {
        for b in a + 1..trusted {
            let (x, y) = (fresh(a, &mut claims), fresh(b, &mut claims));
            relations.push(relation(&x, &y, Polarity::Supports));
        }
    }
    for u in trusted..trusted + unknown {
        let mut refuters: Vec<usize> = (0..trusted).collect();
        refuters.shuffle(&mut r);
        for &t in &refuters[..r.random_range(2..=4)] {
            let (x, y) = (fresh(t, &mut claims), fresh(u, &mut claims));
            relations.push(relation(&x, &y, Polarity::Refutes));
        }
    }
    let inst = Instance {
        docs,
        claims,
        relations,
    };
    let (scores, _) = inst
        .rank(&TrustConfig::default())
        .map_err(|e| e.to_string())?;
    let mean = |range: std::ops::Range<usize>| -> f64 {
        let len = range.len() as f64;
        range
            .map(|i| scores.get(&DocId::from_index(i).unwrap()).unwrap())
            .sum::<f64>()
            / len
    };
    let (hi, lo) = (mean(0..trusted), mean(trusted..trusted + unknown));
    println!("    trusted cluster {hi:.4}, refuted cluster {lo:.4}");
    check(hi - lo >= MIN_SEPARATION, || {
        format!("gap {} below {MIN_SEPARATION}", hi - lo)
    })
}

fn rerank_degeneracy_and_monotonicity() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let order = |v: &[RankedResult]| v.iter().map(|x| x.doc_id.clone()).collect::<Vec<_>>();
    for case in 0..50 {
        let n = r.random_range(1..=30);
        // Coarse similarities produce ties that the id tie-break must settle.
        let results: Vec<Retrieved> = (0..n)
            .map(|i| Retrieved {
                doc_id: DocId::from_index(i).unwrap(),
                similarity: f64::from(r.random_range(-10..=10)) / 10.0,
            })
            .collect();
        let mut trust = TrustScores {
            scores: results
                .iter()
                .filter(|_| r.random_bool(0.9))
                .map(|x| x.doc_id.clone())
                .collect::<Vec<_>>()
                .into_iter()
                .map(|id| (id, r.random_range(0.0..=1.0)))
                .collect(),
            ..Default::default()
        };
        let vanilla =
            rerank(&results, &trust, RankMode::Vanilla, 0.5).map_err(|e| e.to_string())?;
        let zero = rerank(&results, &trust, RankMode::Score, 0.0).map_err(|e| e.to_string())?;
        check(order(&vanilla.results) == order(&zero.results), || {
            format!("case {case}: lambda 0 order differs from vanilla")
        })?;

        let lambda = r.random_range(0.0..=1.0);
        let target = results[r.random_range(0..n)].doc_id.clone();
        let base = trust.get(&target).unwrap_or(0.5);
        let before =
            rerank(&results, &trust, RankMode::Score, lambda).map_err(|e| e.to_string())?;
        trust
            .scores
            .insert(target.clone(), r.random_range(base..=1.0));
        let after = rerank(&results, &trust, RankMode::Score, lambda).map_err(|e| e.to_string())?;
        let rank = |v: &[RankedResult]| v.iter().find(|x| x.doc_id == target).unwrap().rank;
        check(rank(&after.results) <= rank(&before.results), || {
            format!(
                "case {case}: raising trust of {target} moved it from {} to {}",
                rank(&before.results),
                rank(&after.results)
            )
        })?;
    }
    Ok(())
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(work: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_claimtrust"))
        .arg("--work-dir")
        .arg(work)
        .args(args)
        .env_remove("CLAIMRANK_API_BASE")
        .env_remove("CLAIMRANK_API_KEY")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn run_pipeline(work: &Path) -> Result<String, String> {
    let true_csv = fixtures().join("true.csv");
    let fake_csv = fixtures().join("fake.csv");
    let stages: Vec<Vec<&str>> = vec![
        vec![
            "ingest",
            "--true-csv",
            true_csv.to_str().unwrap(),
            "--fake-csv",
            fake_csv.to_str().unwrap(),
        ],
        vec!["extract"],
        vec!["embed"],
        vec!["pairs"],
        vec!["classify"],
        vec!["graph"],
        vec!["rank", "--trace-log"],
        vec![
            "rerank",
            "--query",
            "Did the storm hit the coast?",
            "--mode",
            "both",
        ],
        vec!["eval", "--synthetic", "6"],
        vec!["stats"],
    ];
    let mut trace = String::new();
    for stage in stages {
        let mut args = vec!["--provider", "mock"];
        args.extend(&stage);
        let run = cli(work, &args);
        if run.code != 0 {
            return Err(format!(
                "`{}` exited {}: {}",
                stage.join(" "),
                run.code,
                run.stderr.trim()
            ));
        }
        if stage[0] == "rank" {
            trace = run.stdout;
        }
    }
    Ok(trace)
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// `Converged at round <n>, quantity of change: <delta>`.
fn matches_trace_header(line: &str) -> bool {
    let Some(rest) = line.strip_prefix("Converged at round ") else {
        return false;
    };
    let Some((round, delta)) = rest.split_once(", quantity of change: ") else {
        return false;
    };
    !round.is_empty()
        && round.bytes().all(|b| b.is_ascii_digit())
        && delta.parse::<f64>().is_ok_and(|d| d >= 0.0)
}

fn end_to_end_pipeline() -> Outcome {
    let start = Instant::now();
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let trace = run_pipeline(first.path())?;
    run_pipeline(second.path())?;
    let header = trace.lines().next().unwrap_or("");
    check(matches_trace_header(header), || {
        format!("trace header {header:?}")
    })?;
    let score_lines = trace
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("Document "))
        .count();
    check(score_lines == 6, || format!("{score_lines} score lines"))?;
    let (a, b) = (artifacts(first.path()), artifacts(second.path()));
    check(a.len() >= 15, || {
        format!("only {} artifacts written", a.len())
    })?;
    let names = |v: &[(String, Vec<u8>)]| v.iter().map(|x| x.0.clone()).collect::<Vec<_>>();
    check(names(&a) == names(&b), || {
        "runs wrote different files".into()
    })?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        check(x == y, || format!("{name} differs between runs"))?;
    }
    within_time(start, Duration::from_secs(30))
}

fn write_graph_fixture(dir: &Path, inst: &Instance) {
    save_documents(&inst.docs, &dir.join("documents.jsonl")).unwrap();
    let ids: Vec<DocId> = inst.docs.iter().map(|d| d.id.clone()).collect();
    let (graph, _) = build_graph(&inst.relations, &inst.claims, &ids).unwrap();
    graph.save(&dir.join("graph.jsonl")).unwrap();
}

fn cli_rank_fixtures() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    write_graph_fixture(dir.path(), &two_node(Polarity::Supports));
    let run = cli(dir.path(), &["rank"]);
    check(run.code == 0, || {
        format!("exit {}: {}", run.code, run.stderr)
    })?;
    for line in [
        "Document 0000 's score: 0.9611",
        "Document 0001 's score: 0.9085",
    ] {
        check(run.stdout.lines().any(|l| l == line), || {
            format!("missing {line:?} in {:?}", run.stdout)
        })?;
    }

    let dir = tempfile::tempdir().unwrap();
    let docs: Vec<Document> = (0..4).map(|i| doc(i, Seed::Unknown)).collect();
    write_graph_fixture(
        dir.path(),
        &Instance {
            docs,
            claims: Vec::new(),
            relations: Vec::new(),
        },
    );
    let run = cli(dir.path(), &["rank"]);
    check(run.code == 0, || {
        format!("exit {}: {}", run.code, run.stderr)
    })?;
    let lines: Vec<&str> = run.stdout.lines().collect();
    check(
        lines
            .first()
            .is_some_and(|l| l.starts_with("Converged at round 1,")),
        || format!("header {:?}", lines.first()),
    )?;
    check(
        lines[1..].len() == 4 && lines[1..].iter().all(|l| l.ends_with("'s score: 0.5000")),
        || format!("scores {:?}", &lines[1..]),
    )
}

fn cli_exit_codes() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let usage = cli(dir.path(), &["rank", "--no-such-flag"]);
    check(usage.code == 64 && usage.stderr.contains("Usage"), || {
        format!("unknown flag exited {}", usage.code)
    })?;
    let missing = cli(dir.path(), &["rank"]);
    check(missing.code == 1, || {
        format!("missing artifacts exited {}", missing.code)
    })?;
    let help = cli(dir.path(), &["--help"]);
    check(help.code == 0, || format!("--help exited {}", help.code))?;

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let closed = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    save_documents(
        &[doc(0, Seed::Trusted)],
        &dir.path().join("documents.jsonl"),
    )
    .unwrap();
    let provider = cli(
        dir.path(),
        &[
            "--provider",
            "http",
            "--api-base",
            &closed,
            "--set",
            "provider.max_retries=0",
            "extract",
        ],
    );
    check(provider.code == 2, || {
        format!("unreachable provider exited {}", provider.code)
    })
}

fn table_format() -> Outcome {
    let docs: Vec<Document> = (0..5)
        .map(|i| Document {
            body: format!("Report number {i} about topic {i}."),
            ..doc(
                i,
                if i % 2 == 0 {
                    Seed::Trusted
                } else {
                    Seed::Unknown
                },
            )
        })
        .collect();
    let cases: Vec<EvalCase> = (0..4)
        .map(|i| EvalCase {
            query: format!("What about topic {i}?"),
            expected: format!("answer {i}"),
        })
        .collect();
    // Per mode: four answers, then four judge replies.
    let script = [
        "answer 0",
        "wrong",
        "The answer 2.",
        "nope",
        "SCORE: 0.2",
        "SCORE: 0.4",
        "SCORE: 0.6",
        "SCORE: 0.8",
        "answer 0",
        "ANSWER 1",
        "answer 2",
        "no",
        "SCORE: 1.0",
        "SCORE: 1",
        "SCORE: 1.0",
        "SCORE: 1.0",
    ];
    let provider = MockProvider::scripted(script);
    let index = embed_documents(&docs, &provider, 2000, 64).map_err(|e| e.to_string())?;
    let trust = TrustScores {
        scores: docs
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.clone(), i as f64 / 5.0))
            .collect(),
        ..Default::default()
    };
    let templates = TemplateSet::bundled();
    let report = run_eval(
        &cases,
        &docs,
        &index,
        &trust,
        &RankMode::ALL,
        &provider,
        &templates.answer,
        &templates.judge,
        &EvalSettings::default(),
    )
    .map_err(|e| e.to_string())?;
    let table = render_table(&report);
    let rows: Vec<Vec<String>> = table
        .lines()
        .map(|l| {
            l.split("  ")
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(String::from)
                .collect()
        })
        .collect();
    let expected = vec![
        vec!["Mode", "Substring Accuracy", "LLM Avg Score"],
        vec!["vanilla", "0.50000", "0.50000"],
        vec!["score", "0.75000", "1.00000"],
    ];
    check(rows == expected, || format!("table was:\n{table}"))?;
    check(provider.remaining_script() == 0, || {
        "transcript not fully consumed".into()
    })
}

fn main() {
    let criteria: [Criterion; 11] = [
        (
            "two-node fixed points match the closed form",
            two_node_fixed_points,
        ),
        (
            "isolated documents keep their anchored scores",
            isolated_documents,
        ),
        ("contraction on 100 random graphs", contraction_suite),
        (
            "permutation equivariance is bit-exact",
            permutation_equivariance,
        ),
        ("top-k nomination equals brute force", top_k_oracle),
        (
            "trusted cluster separates from refuted cluster",
            separation_benchmark,
        ),
        (
            "rerank degeneracy and monotonicity",
            rerank_degeneracy_and_monotonicity,
        ),
        (
            "end-to-end mock pipeline is reproducible",
            end_to_end_pipeline,
        ),
        (
            "table has the two mode rows and fixed columns",
            table_format,
        ),
        ("rank prints fixture scores via the CLI", cli_rank_fixtures),
        ("CLI exit codes", cli_exit_codes),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        match criterion() {
            Ok(()) => println!("PASS  {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
