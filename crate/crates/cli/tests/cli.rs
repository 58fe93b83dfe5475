use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use steval::align::{edit_distance, resegment_system_output_with, ResegmentOptions};
use steval::evalset::{format_system_output, load_system_output, load_testset, Condition, SystemOutput};
use steval::metrics::{read_score_table, score_systems, Granularity, Metric, MetricConfig, ScoreTable};
use steval::stats::{correlate, render_report, ReportFormat};
use steval::textproc::{tokenize, TokenizationLevel};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn mini() -> PathBuf {
    fixture("mini/offline_en-de_TED")
}

fn steval<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_steval"))
        .args(args)
        .env_remove("STEVAL_CAMPAIGN_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn reseg_all(dir: &Path) -> Vec<PathBuf> {
    ["sysA", "sysB", "sysC"]
        .iter()
        .map(|s| {
            let out = dir.join(format!("{s}.hyp"));
            ok(&steval([
                "reseg".as_ref(),
                "--hyp".as_ref(),
                mini().join(format!("hyp/{s}.hyp")).as_os_str(),
                "--ref-manifest".as_ref(),
                mini().as_os_str(),
                "--ref-set".as_ref(),
                "original".as_ref(),
                "--out".as_ref(),
                out.as_os_str(),
            ]));
            out
        })
        .collect()
}

#[test]
fn reseg_writes_one_line_per_reference_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let outs = reseg_all(tmp.path());
    let text = fs::read_to_string(&outs[0]).unwrap();
    let content_lines = text.lines().filter(|l| !l.starts_with("#!steval")).count();
    assert_eq!(content_lines, 50);
    assert_eq!(text.matches("resegmented=true").count(), 2);
}

#[test]
fn reseg_matches_library_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let outs = reseg_all(tmp.path());

    let testset = load_testset(mini()).unwrap();
    let set = testset.only().unwrap();
    let raw = load_system_output(mini().join("hyp/sysB.hyp"), &set.condition, &testset).unwrap();
    let opts = ResegmentOptions {
        reference_set: Some("original".into()),
        ..Default::default()
    };
    let mut docs = Vec::new();
    for doc in &set.documents {
        let (s, _) = resegment_system_output_with(&raw, doc, TokenizationLevel::Word, &opts).unwrap();
        docs.extend(s.documents);
    }
    let expected = SystemOutput {
        documents: docs,
        resegmented: true,
        ..raw
    };
    assert_eq!(fs::read_to_string(&outs[1]).unwrap(), format_system_output(&expected));

    let again = tmp.path().join("again.hyp");
    ok(&steval([
        "reseg".as_ref(),
        "--hyp".as_ref(),
        outs[1].as_os_str(),
        "--ref-manifest".as_ref(),
        mini().as_os_str(),
        "--ref-set".as_ref(),
        "original".as_ref(),
        "--out".as_ref(),
        again.as_os_str(),
    ]));
    assert_eq!(fs::read(&outs[1]).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn reseg_char_level_matches_library_wer() {
    let dir = fixture("zh/offline_en-zh_TED");
    let tmp = tempfile::tempdir().unwrap();
    let out_path = tmp.path().join("z.hyp");
    let stdout = ok(&steval([
        "reseg".as_ref(),
        "--hyp".as_ref(),
        dir.join("hyp/sysZ.hyp").as_os_str(),
        "--ref-manifest".as_ref(),
        dir.as_os_str(),
        "--level".as_ref(),
        "char".as_ref(),
        "--out".as_ref(),
        out_path.as_os_str(),
    ]));
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split('\t').collect();
    let distance: usize = row[1].parse().unwrap();
    let ref_len: usize = row[2].parse().unwrap();

    let testset = load_testset(&dir).unwrap();
    let set = testset.only().unwrap();
    let doc = &set.documents[0];
    let sys = load_system_output(dir.join("hyp/sysZ.hyp"), &set.condition, &testset).unwrap();
    let hyp = tokenize(&sys.documents[0].segments.concat(), TokenizationLevel::Character);
    let reference = tokenize(
        &doc.reference_lines("original").unwrap().concat(),
        TokenizationLevel::Character,
    );
    assert_eq!(ref_len, reference.len());
    assert_eq!(distance, edit_distance(&hyp, &reference).unwrap());
    let wer = distance as f64 / ref_len as f64;
    assert_eq!(row[3], format!("{wer:.4}"));
}

#[test]
fn score_parity_and_reference_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let hyps = reseg_all(tmp.path());
    let mut tables = Vec::new();
    for refset in ["new", "original"] {
        let out = tmp.path().join(format!("chrf.{refset}.tsv"));
        let fx = mini();
        let mut args: Vec<&std::ffi::OsStr> = vec![
            "score".as_ref(),
            "--testset".as_ref(),
            fx.as_os_str(),
            "--metric".as_ref(),
            "chrf".as_ref(),
            "--ref-set".as_ref(),
            refset.as_ref(),
            "--out".as_ref(),
            out.as_os_str(),
            "--systems".as_ref(),
        ];
        args.extend(hyps.iter().map(|p| p.as_os_str()));
        ok(&steval(args));
        let table = read_score_table(&out).unwrap();
        assert_eq!(table.system_scores().len(), 3);
        assert_eq!(table.reference_set.as_deref(), Some(refset));
        tables.push(table);
    }
    assert_ne!(tables[0].system_scores(), tables[1].system_scores());

    let testset = load_testset(mini()).unwrap();
    let set = testset.only().unwrap();
    let systems: Vec<SystemOutput> = hyps
        .iter()
        .map(|p| load_system_output(p, &set.condition, &testset).unwrap())
        .collect();
    let refs: Vec<&SystemOutput> = systems.iter().collect();
    let lib = score_systems(set, &refs, &MetricConfig::new(Metric::ChrF), "new").unwrap();
    assert_eq!(lib, tables[0]);
}

#[test]
fn score_refuses_unsegmented_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out = steval([
        "score".as_ref(),
        "--testset".as_ref(),
        mini().as_os_str(),
        "--systems".as_ref(),
        mini().join("hyp/sysA.hyp").as_os_str(),
        "--ref-set".as_ref(),
        "new".as_ref(),
        "--out".as_ref(),
        tmp.path().join("x.tsv").as_os_str(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not been resegmented"), "{err}");
}

#[test]
fn exit_codes() {
    let out = steval(["reseg", "--hyp", "/nonexistent.hyp", "--ref-manifest", "/nonexistent", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = steval(["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let out = steval(["--help"]);
    assert_eq!(out.status.code(), Some(0));
    // missing campaign dir and no environment default
    let out = steval(["campaign", "progress"]);
    assert_eq!(out.status.code(), Some(1));
}

fn build_campaign(dir: &Path, hyps: &[PathBuf]) -> Output {
    let fx = mini();
    let mut args: Vec<&std::ffi::OsStr> = vec![
        "campaign".as_ref(),
        "build".as_ref(),
        dir.as_os_str(),
        "--testset".as_ref(),
        fx.as_os_str(),
        "--k".as_ref(),
        "20".as_ref(),
        "--seed".as_ref(),
        "11".as_ref(),
        "--shuffle-seed".as_ref(),
        "12".as_ref(),
        "--annotators".as_ref(),
        "a1,a2,a3".as_ref(),
        "--systems".as_ref(),
    ];
    args.extend(hyps.iter().map(|p| p.as_os_str()));
    steval(args)
}

#[test]
fn campaign_build_ingest_export() {
    let tmp = tempfile::tempdir().unwrap();
    let hyps = reseg_all(tmp.path());
    let camp = tmp.path().join("camp");
    let stdout = ok(&build_campaign(&camp, &hyps));
    assert!(stdout.starts_with("60 tasks"), "{stdout}");
    // refuses to overwrite
    assert_eq!(build_campaign(&camp, &hyps).status.code(), Some(1));

    let tasks: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(camp.join("tasks.json")).unwrap()).unwrap();
    let mut tsv = String::from("annotator_id\tsystem_id\tsegment_id\tscore\n");
    for (i, t) in tasks.iter().enumerate() {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            t["annotator_id"].as_str().unwrap(),
            t["system_id"].as_str().unwrap(),
            t["segment_id"].as_str().unwrap(),
            (i * 7 % 101) as f64
        ));
    }
    tsv.push_str("a1\tsysA\ttalk1:0\t150\n");
    let scores = tmp.path().join("scores.tsv");
    fs::write(&scores, tsv).unwrap();

    let out = steval(["campaign".as_ref(), "ingest".as_ref(), camp.as_os_str(), "--scores".as_ref(), scores.as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("accepted 60 records, rejected 1"));

    let wmt = tmp.path().join("wmt.tsv");
    let out = Command::new(env!("CARGO_BIN_EXE_steval"))
        .args(["campaign".as_ref(), "export".as_ref(), "--out".as_ref(), wmt.as_os_str()])
        .env("STEVAL_CAMPAIGN_DIR", &camp)
        .output()
        .unwrap();
    ok(&out);
    assert_eq!(fs::read_to_string(&wmt).unwrap().lines().count(), 61);

    let da = tmp.path().join("da.tsv");
    ok(&steval([
        "campaign".as_ref(),
        "aggregate".as_ref(),
        camp.as_os_str(),
        "--mode".as_ref(),
        "annotator-z".as_ref(),
        "--out".as_ref(),
        da.as_os_str(),
    ]));
    let table = read_score_table(&da).unwrap();
    assert_eq!(table.variant.as_deref(), Some("annotator-z"));
    assert_eq!(table.system_scores().len(), 3);
}

fn system_table(method: &str, cond: &str, scores: &[(&str, f64)]) -> ScoreTable {
    let c: Condition = cond.parse().unwrap();
    let mut t = ScoreTable::new(method, Granularity::System, c);
    for (s, v) in scores {
        t.insert_system(s, *v);
    }
    t
}

fn write_table(dir: &Path, name: &str, t: &ScoreTable) -> PathBuf {
    let p = dir.join(name);
    t.write_tsv(&p).unwrap();
    p
}

#[test]
fn correlate_bolds_significant_values() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = ["s1", "s2", "s3", "s4", "s5", "s6"];
    let da_vals = [10.0, 25.0, 30.0, 52.0, 60.0, 81.0];
    let chrf_vals = [40.0, 44.0, 47.0, 55.0, 58.0, 66.0];
    let da = system_table("da", "offline/en-de/TED", &sys.iter().copied().zip(da_vals).collect::<Vec<_>>());
    let chrf = system_table("chrf", "offline/en-de/TED", &sys.iter().copied().zip(chrf_vals).collect::<Vec<_>>());
    let h = write_table(tmp.path(), "da.tsv", &da);
    let m = write_table(tmp.path(), "chrf.tsv", &chrf);
    let stdout = ok(&steval(["correlate".as_ref(), "--human".as_ref(), h.as_os_str(), "--metric".as_ref(), m.as_os_str(), "--format".as_ref(), "md".as_ref()]));
    assert_eq!(stdout, render_report(&[correlate(&da, &chrf).unwrap()], ReportFormat::Markdown));
    assert!(stdout.contains("**0.99**") || stdout.contains("**1.00**"), "{stdout}");
}

#[test]
fn correlate_pool_and_average() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = ["s1", "s2", "s3", "s4"];
    let mk = |method: &str, cond: &str, vals: [f64; 4]| {
        system_table(method, cond, &sys.iter().copied().zip(vals).collect::<Vec<_>>())
    };
    let tables = [
        ("da_off.tsv", mk("da", "offline/en-de/TED", [60.0, 70.0, 75.0, 90.0])),
        ("da_sim.tsv", mk("da", "simultaneous/en-de/TED", [50.0, 52.0, 66.0, 71.0])),
        ("chrf_off.tsv", mk("chrf", "offline/en-de/TED", [50.0, 55.0, 58.0, 62.0])),
        ("chrf_sim.tsv", mk("chrf", "simultaneous/en-de/TED", [45.0, 49.0, 51.0, 52.0])),
        ("da_acl.tsv", mk("da", "offline/en-de/ACL", [55.0, 71.0, 73.0, 80.0])),
        ("chrf_acl.tsv", mk("chrf", "offline/en-de/ACL", [48.0, 57.0, 56.0, 65.0])),
    ];
    let paths: Vec<PathBuf> = tables.iter().map(|(n, t)| write_table(tmp.path(), n, t)).collect();

    let stdout = ok(&steval([
        "correlate".as_ref(),
        "--human".as_ref(),
        paths[0].as_os_str(),
        paths[1].as_os_str(),
        "--metric".as_ref(),
        paths[2].as_os_str(),
        paths[3].as_os_str(),
        "--pool".as_ref(),
        "task".as_ref(),
    ]));
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "{stdout}");
    let cells: Vec<&str> = rows[0].split('\t').collect();
    assert_eq!(cells[0], "offline+simultaneous");
    assert_eq!(cells[6], "8");

    let stdout = ok(&steval([
        "correlate".as_ref(),
        "--human".as_ref(),
        paths[0].as_os_str(),
        paths[4].as_os_str(),
        "--metric".as_ref(),
        paths[2].as_os_str(),
        paths[5].as_os_str(),
        "--average-domains".as_ref(),
    ]));
    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "{stdout}");
    let cells: Vec<&str> = rows[0].split('\t').collect();
    assert_eq!(cells[2], "TED+ACL");
    assert_eq!(cells[6], "4");

    // no matching condition
    let out = steval(["correlate".as_ref(), "--human".as_ref(), paths[0].as_os_str(), "--metric".as_ref(), paths[3].as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_reports_port_in_use() {
    let tmp = tempfile::tempdir().unwrap();
    let hyps = reseg_all(tmp.path());
    let camp = tmp.path().join("camp");
    ok(&build_campaign(&camp, &hyps));
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let out = steval(["campaign".as_ref(), "serve".as_ref(), camp.as_os_str(), "--addr".as_ref(), addr.as_ref()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let out = steval(["campaign".as_ref(), "serve".as_ref(), tmp.path().join("missing").as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
}
