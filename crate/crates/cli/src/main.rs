use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use csspipe::diarization::Clusterer;
use csspipe::pipeline::{
    run_pipeline, run_stage, score_external, simulate_corpus, AsrConfig, Condition, CorpusSpec, DiarizationSource,
    ExternalSession, Manifest, PipelineConfig, PipelineReport, PipelineStage,
};
use csspipe::separation::StitchMode;
use csspipe::signal::wav::WavFormat;
use csspipe::sim::{synthetic_pool, ArrayGeometry, MeetingSpec, RoomSpec, UtterancePool};

#[derive(Parser)]
#[command(name = "csspipe", version, about = "Meeting separation, diarization and scoring")]
struct Cli {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "csspipe-out")]
    outdir: PathBuf,
    /// Sessions processed concurrently; overrides the config file.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a corpus of meetings and write its manifest.
    Simulate(SimulateArgs),
    /// Run chunked separation and beamforming on every session.
    Separate(StageArgs),
    /// Diarize separated streams (or channel 0 when separation is off).
    Diarize(StageArgs),
    /// Score hypothesis RTTM and transcript files against references.
    Score(ScoreArgs),
    /// Separation, diarization, simulated ASR and scoring end to end.
    Pipeline(StageArgs),
    /// Print the reference configuration with every default.
    GenConfig {
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Overlap conditions to generate.
    #[arg(long, value_delimiter = ',', default_value = "0L,0S,OV10,OV20,OV30,OV40")]
    conditions: Vec<String>,
    #[arg(long, default_value_t = 1)]
    sessions_per_condition: usize,
    #[arg(long, default_value_t = 2)]
    speakers: usize,
    /// Session length in seconds.
    #[arg(long, default_value_t = 60.0)]
    length: f64,
    #[arg(long, default_value_t = 40.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 0.5)]
    absorption: f64,
    #[arg(long, default_value_t = 3)]
    reflection_order: usize,
    /// Directory of `<speaker>-<id>.wav` utterances with `.txt` transcripts;
    /// a synthetic pool is used when absent.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Talkers in the synthetic pool.
    #[arg(long, default_value_t = 4)]
    pool_speakers: usize,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pcm16: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum StitchArg {
    Masks,
    Signals,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClustererArg {
    Spectral,
    Ahc,
}

#[derive(Args)]
struct StageArgs {
    /// Session manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Pipeline config (TOML); defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only process these sessions.
    #[arg(long = "session")]
    sessions: Vec<String>,
    /// Diarize channel 0 of the mixture instead of separated streams.
    #[arg(long)]
    no_separation: bool,
    #[arg(long)]
    num_streams: Option<usize>,
    #[arg(long)]
    chunk_len: Option<f64>,
    #[arg(long)]
    chunk_hop: Option<f64>,
    #[arg(long)]
    ref_channel: Option<usize>,
    #[arg(long, value_enum)]
    stitch: Option<StitchArg>,
    /// Shuffle each chunk's oracle outputs before stitching.
    #[arg(long)]
    scramble: bool,
    #[arg(long, value_enum)]
    clusterer: Option<ClustererArg>,
    #[arg(long)]
    max_speakers: Option<usize>,
    #[arg(long)]
    p_keep: Option<f64>,
    /// Merge spectral clusters separated by less than this multiple of their spread (0 disables).
    #[arg(long)]
    merge_ratio: Option<f64>,
    #[arg(long)]
    ahc_threshold: Option<f64>,
    /// Use the reference segments instead of clustering.
    #[arg(long)]
    oracle_diarization: bool,
    #[arg(long)]
    no_enclosed_filter: bool,
    #[arg(long)]
    collar: Option<f64>,
    #[arg(long)]
    sub_rate: Option<f64>,
    #[arg(long)]
    del_rate: Option<f64>,
    #[arg(long)]
    ins_rate: Option<f64>,
}

#[derive(Args)]
struct ScoreArgs {
    /// TOML file of `[[session]]` entries naming reference and hypothesis files.
    #[arg(long, conflicts_with_all = ["reference_rttm", "hypothesis_rttm"])]
    external: Option<PathBuf>,
    #[arg(long, requires_all = ["reference_transcript", "hypothesis_rttm", "hypothesis_transcript"])]
    reference_rttm: Option<PathBuf>,
    #[arg(long)]
    reference_transcript: Option<PathBuf>,
    #[arg(long)]
    hypothesis_rttm: Option<PathBuf>,
    #[arg(long)]
    hypothesis_transcript: Option<PathBuf>,
    #[arg(long, default_value = "OV10")]
    condition: String,
    #[arg(long, default_value_t = 0.0)]
    collar: f64,
}

enum Outcome {
    Success,
    Partial,
}

fn load_config(cli: &Cli, args: &StageArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if args.no_separation {
        cfg.stages.separation = false;
    }
    let sep = &mut cfg.separation;
    if let Some(v) = args.num_streams {
        sep.num_streams = v;
    }
    if let Some(v) = args.chunk_len {
        sep.chunk_len = v;
    }
    if let Some(v) = args.chunk_hop {
        sep.chunk_hop = v;
    }
    if let Some(v) = args.ref_channel {
        sep.ref_channel = v;
    }
    if let Some(v) = args.stitch {
        sep.stitch = match v {
            StitchArg::Masks => StitchMode::Masks,
            StitchArg::Signals => StitchMode::Signals,
        };
    }
    if args.scramble {
        cfg.estimator.scramble = true;
    }
    let d = &mut cfg.diarization;
    if let Some(v) = args.clusterer {
        d.clusterer = match v {
            ClustererArg::Spectral => Clusterer::Spectral,
            ClustererArg::Ahc => Clusterer::Ahc,
        };
    }
    if let Some(v) = args.max_speakers {
        d.max_speakers = v;
    }
    if let Some(v) = args.p_keep {
        d.p_keep = v;
    }
    if let Some(v) = args.merge_ratio {
        d.merge_ratio = v;
    }
    if let Some(v) = args.ahc_threshold {
        d.ahc_threshold = v;
    }
    if args.oracle_diarization {
        cfg.stages.diarization = DiarizationSource::Oracle;
    }
    if args.no_enclosed_filter {
        cfg.stages.enclosed_filter = false;
    }
    if let Some(v) = args.collar {
        cfg.metrics.collar = v;
    }
    cfg.asr = AsrConfig {
        substitution: args.sub_rate.unwrap_or(cfg.asr.substitution),
        deletion: args.del_rate.unwrap_or(cfg.asr.deletion),
        insertion: args.ins_rate.unwrap_or(cfg.asr.insertion),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_manifest(args: &StageArgs) -> Result<Manifest> {
    let mut manifest = Manifest::load(&args.manifest)?;
    if !args.sessions.is_empty() {
        for name in &args.sessions {
            if !manifest.sessions.iter().any(|s| &s.name == name) {
                bail!("session {name} is not in {}", args.manifest.display());
            }
        }
        manifest.sessions.retain(|s| args.sessions.contains(&s.name));
    }
    Ok(manifest)
}

fn print_summary(report: &PipelineReport) {
    for c in &report.conditions {
        let s = &c.summary;
        println!(
            "{:<6} sessions={} failed={} DER={} cpWER={}{}",
            c.condition.label(),
            s.sessions,
            s.failed,
            pct(s.der_rate),
            pct(s.cpwer_rate),
            s.mean_sdr_db.map(|v| format!(" SI-SDR={v:.2}dB")).unwrap_or_default()
        );
    }
    let s = &report.overall;
    println!(
        "{:<6} sessions={} failed={} DER={} cpWER={}{}",
        "all",
        s.sessions,
        s.failed,
        pct(s.der_rate),
        pct(s.cpwer_rate),
        s.mean_sdr_db.map(|v| format!(" SI-SDR={v:.2}dB")).unwrap_or_default()
    );
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}%", 100.0 * x)).unwrap_or_else(|| "n/a".into())
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<Outcome> {
    let conditions = args
        .conditions
        .iter()
        .map(|c| Condition::parse(c.trim()))
        .collect::<csspipe::Result<Vec<_>>>()?;
    let room = RoomSpec {
        max_reflection_order: args.reflection_order,
        ..RoomSpec::default()
    }
    .with_uniform_absorption(args.absorption);
    room.validate()?;
    let mics = ArrayGeometry::default_circular([room.dimensions[0] / 2.0, room.dimensions[1] / 2.0, 1.0]);
    let seed = cli.seed.unwrap_or(0);
    let pool = match &args.pool {
        Some(dir) => UtterancePool::load_dir(dir)?,
        None => {
            if args.pool_speakers < args.speakers {
                bail!("--pool-speakers {} is below --speakers {}", args.pool_speakers, args.speakers);
            }
            // enough material for every talker to fill the session alone
            let per_speaker = (args.length / 2.5).ceil() as usize + 8;
            synthetic_pool(args.pool_speakers, per_speaker, room.sample_rate, seed)
        }
    };
    let spec = CorpusSpec {
        conditions,
        sessions_per_condition: args.sessions_per_condition,
        meeting: MeetingSpec {
            num_speakers: args.speakers,
            session_length: args.length,
            noise_snr_db: args.snr_db,
            ..MeetingSpec::default()
        },
        seed,
    };
    let format = if args.pcm16 { WavFormat::Pcm16 } else { WavFormat::Float32 };
    let manifest = simulate_corpus(&cli.outdir, &spec, &room, &mics, &pool, format)?;
    println!(
        "wrote {} sessions to {}",
        manifest.sessions.len(),
        cli.outdir.join("manifest.toml").display()
    );
    Ok(Outcome::Success)
}

fn stage(cli: &Cli, args: &StageArgs, stage: PipelineStage) -> Result<Outcome> {
    let cfg = load_config(cli, args)?;
    let manifest = load_manifest(args)?;
    let results = run_stage(&cfg, &manifest, &cli.outdir, stage)?;
    let mut failed = 0;
    for (name, err) in &results {
        match err {
            None => println!("{name}: ok"),
            Some(e) => {
                failed += 1;
                println!("{name}: failed: {e}");
            }
        }
    }
    Ok(if failed > 0 { Outcome::Partial } else { Outcome::Success })
}

fn pipeline(cli: &Cli, args: &StageArgs) -> Result<Outcome> {
    let cfg = load_config(cli, args)?;
    let manifest = load_manifest(args)?;
    let report = run_pipeline(&cfg, &manifest, &cli.outdir)?;
    print_summary(&report);
    let failed = report.failed_sessions();
    if failed.is_empty() {
        Ok(Outcome::Success)
    } else {
        eprintln!("failed sessions: {}", failed.join(", "));
        Ok(Outcome::Partial)
    }
}

fn score(cli: &Cli, args: &ScoreArgs) -> Result<Outcome> {
    let sessions = match &args.external {
        Some(path) => ExternalSession::load_list(path)?,
        None => {
            let (Some(rr), Some(rt), Some(hr), Some(ht)) = (
                &args.reference_rttm,
                &args.reference_transcript,
                &args.hypothesis_rttm,
                &args.hypothesis_transcript,
            ) else {
                bail!("give --external or all four of --reference-rttm, --reference-transcript, --hypothesis-rttm, --hypothesis-transcript");
            };
            let session = ExternalSession {
                name: "hypothesis".into(),
                condition: Condition::parse(&args.condition)?,
                reference_rttm: rr.clone(),
                reference_transcript: rt.clone(),
                hypothesis_rttm: hr.clone(),
                hypothesis_transcript: ht.clone(),
            };
            // a single hypothesis that cannot be read is an input error
            session.score(args.collar)?;
            vec![session]
        }
    };
    let report = score_external(&sessions, args.collar);
    std::fs::create_dir_all(&cli.outdir).with_context(|| format!("creating {}", cli.outdir.display()))?;
    report.write(&cli.outdir)?;
    print_summary(&report);
    Ok(if report.failed_sessions().is_empty() {
        Outcome::Success
    } else {
        Outcome::Partial
    })
}

fn gen_config(output: Option<&Path>) -> Result<Outcome> {
    let text = PipelineConfig::default().to_toml_string()?;
    match output {
        Some(p) => csspipe::fsutil::write_atomic(p, text)?,
        None => print!("{text}"),
    }
    Ok(Outcome::Success)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Simulate(a) => simulate(&cli, a),
        Command::Separate(a) => stage(&cli, a, PipelineStage::Separation),
        Command::Diarize(a) => stage(&cli, a, PipelineStage::Diarization),
        Command::Score(a) => score(&cli, a),
        Command::Pipeline(a) => pipeline(&cli, a),
        Command::GenConfig { output } => gen_config(output.as_deref()),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
