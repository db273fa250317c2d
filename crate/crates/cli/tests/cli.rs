use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn csspipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csspipe")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path) -> PathBuf {
    let out = csspipe(&[
        "simulate", "--conditions", "OV10", "--length", "15", "--pool-speakers", "3", "--seed", "3", "--outdir", s(dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("manifest.toml")
}

#[test]
fn gen_config_output_loads_back() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("cfg.toml");
    let out = csspipe(&["gen-config", "--output", s(&path)]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let cfg = csspipe::pipeline::PipelineConfig::from_toml_str(&text).unwrap();
    assert_eq!(cfg, csspipe::pipeline::PipelineConfig::default());

    let stdout = csspipe(&["gen-config"]);
    assert_eq!(String::from_utf8(stdout.stdout).unwrap(), text);
}

#[test]
fn bad_config_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = simulate(&tmp.path().join("corpus"));
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[separation]\nchunk_hop = 9.0\n").unwrap();
    let out = csspipe(&["pipeline", "--manifest", s(&manifest), "--config", s(&cfg), "--outdir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    std::fs::write(&cfg, "mystery = 1\n").unwrap();
    let out = csspipe(&["pipeline", "--manifest", s(&manifest), "--config", s(&cfg), "--outdir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn self_score_is_zero_and_truncated_rttm_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(&tmp.path().join("corpus"));
    let session = tmp.path().join("corpus").join("OV10_0");
    let rttm = session.join("reference.rttm");
    let tr = session.join("transcript.json");
    let out_dir = tmp.path().join("score");
    let args = |hyp: &Path| {
        vec![
            "score".to_string(),
            "--reference-rttm".into(),
            s(&rttm).into(),
            "--reference-transcript".into(),
            s(&tr).into(),
            "--hypothesis-rttm".into(),
            s(hyp).into(),
            "--hypothesis-transcript".into(),
            s(&tr).into(),
            "--outdir".into(),
            s(&out_dir).into(),
        ]
    };
    let run = |a: Vec<String>| csspipe(&a.iter().map(String::as_str).collect::<Vec<_>>());

    let out = run(args(&rttm));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("all    sessions=1 failed=0 DER=0.00% cpWER=0.00%"), "{stdout}");
    assert!(out_dir.join("report.json").exists());

    let text = std::fs::read_to_string(&rttm).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let cut: String = lines[2].split_whitespace().take(4).collect::<Vec<_>>().join(" ");
    lines[2] = &cut;
    let broken = tmp.path().join("broken.rttm");
    std::fs::write(&broken, lines.join("\n")).unwrap();
    let out = run(args(&broken));
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken.rttm:3:"), "{stderr}");
}

#[test]
fn partial_failure_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let out = csspipe(&[
        "simulate", "--conditions", "OV10,OV20", "--length", "15", "--pool-speakers", "3", "--seed", "3", "--outdir",
        s(&corpus),
    ]);
    assert!(out.status.success());
    std::fs::write(corpus.join("OV20_0").join("transcript.json"), "{").unwrap();
    let out = csspipe(&[
        "pipeline", "--manifest", s(&corpus.join("manifest.toml")), "--no-separation", "--outdir",
        s(&tmp.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("out").join("report.csv")).unwrap();
    assert!(csv.contains("session,OV20_0,OV20,failed"));
    assert!(csv.contains("session,OV10_0,OV10,ok"));
}
