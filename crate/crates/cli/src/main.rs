mod config;

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use procinv_core::codec::{Codec, TokenSequence};
use procinv_core::dataset;
use procinv_core::decode::{self, bridge, BridgePolicy, Mode, Policy, RankPolicy, UniformPolicy};
use procinv_core::metrics::{evaluate_corpus, EvalPair};
use procinv_core::prior::{build_catalog, sample_with_report, AssetCatalog};
use procinv_core::render::{
    building_mesh, dropout_voxels, perturb_drop_center, perturb_drop_random, perturb_split, read_ply, render_stages, voxelize,
    write_ply, PointCloud, DEFAULT_MAX_POINTS, DEFAULT_VOXEL_EDGE,
};
use procinv_core::schema::BuildingAbstraction;
use serde::Deserialize;

use config::CliConfig;

#[derive(Parser)]
#[command(name = "procinv", version, about = "Procedural building abstractions: sample, render, tokenize, decode, evaluate")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML or JSON file with a resolved-config layout; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    catalog_seed: Option<u64>,
    #[arg(long, global = true)]
    catalog_size: Option<usize>,
    /// Surface samples per square meter.
    #[arg(long, global = true)]
    density: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sharded dataset of (building, point cloud) records.
    GenDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        n: u64,
        #[arg(long)]
        records_per_building: Option<u64>,
        #[arg(long)]
        records_per_shard: Option<u64>,
        /// Assign a seeded holdout split of this fraction.
        #[arg(long)]
        holdout: Option<f64>,
        /// Re-read every record and check its tokens afterwards.
        #[arg(long)]
        verify: bool,
    },
    /// Draw one building from the prior and write it as JSON.
    SampleBuilding {
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a building JSON to a binary PLY point cloud.
    Render {
        #[arg(long)]
        building: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Noise level in meters; defaults to the building's own.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Apply an inpainting perturbation to a PLY point cloud.
    Perturb {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        op: PerturbOp,
        /// Edge of removed blocks, meters.
        #[arg(long, default_value_t = 2.0)]
        edge: f64,
        #[arg(long, default_value_t = 3)]
        blocks: usize,
        #[arg(long, default_value_t = 4.0)]
        gap: f64,
        #[arg(long, default_value_t = 0.5)]
        rate: f64,
        #[arg(long, default_value_t = DEFAULT_VOXEL_EDGE)]
        voxel_edge: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_POINTS)]
        max_points: usize,
    },
    /// Encode a building JSON into a token id array (JSON).
    Encode {
        #[arg(long)]
        building: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a token id array (JSON) into a building JSON.
    Decode {
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grammar-constrained inference with a built-in or external policy.
    Rollout {
        #[arg(long, value_enum, default_value_t = PolicyKind::Uniform)]
        policy: PolicyKind,
        /// External policy command line, split on whitespace.
        #[arg(long)]
        bridge: Option<String>,
        /// Handle passed to the policy, usually a point-cloud path.
        #[arg(long, default_value = "")]
        conditioning: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        max_length: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tokens_out: Option<PathBuf>,
    },
    /// Structural and geometric evaluation over a corpus of pairs.
    Eval {
        /// `self` pairs prior samples with themselves; otherwise a JSON-lines
        /// file of {"inferred": .., "truth": ..} objects.
        #[arg(long, default_value = "self")]
        pairs: String,
        #[arg(long, default_value_t = 20)]
        n: u64,
        /// Comma-separated noise levels; renders each truth at each level
        /// and adds the geometric-error curve.
        #[arg(long, value_delimiter = ',')]
        sigmas: Vec<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write the placed geometry of a building as Wavefront OBJ.
    ExportObj {
        #[arg(long)]
        building: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the vocabulary manifest.
    Vocab {
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a built-in policy over the logits bridge on stdin/stdout.
    #[command(hide = true)]
    BridgeServe {
        #[arg(long, value_enum, default_value_t = ServePolicy::Uniform)]
        policy: ServePolicy,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PerturbOp {
    DropRandom,
    DropCenter,
    Split,
    Dropout,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Uniform,
    Bridge,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Greedy,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum ServePolicy {
    Uniform,
    Rank,
}

fn resolve(g: &Global, cmd: &Command) -> Result<CliConfig> {
    let mut c = match &g.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(v) = g.seed {
        c.seed = v;
        c.decode.seed = v;
    }
    if let Some(v) = g.catalog_seed {
        c.catalog_seed = v;
    }
    if let Some(v) = g.catalog_size {
        c.catalog_size = v;
    }
    if let Some(v) = g.density {
        c.density = v;
    }
    match cmd {
        Command::GenDataset { records_per_building, records_per_shard, holdout, .. } => {
            c.records_per_building = records_per_building.unwrap_or(c.records_per_building);
            c.records_per_shard = records_per_shard.unwrap_or(c.records_per_shard);
            c.holdout_fraction = holdout.unwrap_or(c.holdout_fraction);
        }
        Command::Rollout { bridge, mode, temperature, max_length, .. } => {
            if let Some(b) = bridge {
                c.bridge_command = b.split_whitespace().map(str::to_string).collect();
            }
            if let Some(m) = mode {
                c.decode.mode = match m {
                    ModeArg::Greedy => Mode::Greedy,
                    ModeArg::Sample => Mode::Sample,
                };
            }
            c.decode.temperature = temperature.unwrap_or(c.decode.temperature);
            c.decode.max_length = max_length.unwrap_or(c.decode.max_length);
        }
        _ => {}
    }
    Ok(c)
}

fn read_building(path: &Path) -> Result<BuildingAbstraction> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    BuildingAbstraction::from_json(&text).with_context(|| format!("parsing building {}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_ply(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn catalog(c: &CliConfig) -> Result<AssetCatalog> {
    Ok(build_catalog(c.catalog_seed, c.catalog_size)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairLine {
    inferred: BuildingAbstraction,
    truth: BuildingAbstraction,
}

fn run(cli: Cli) -> Result<()> {
    let c = resolve(&cli.global, &cli.command)?;
    if !matches!(cli.command, Command::BridgeServe { .. }) {
        println!("config sha256={} {}", c.hash(), c.to_json());
    }
    match cli.command {
        Command::GenDataset { out, n, holdout, verify, .. } => {
            let report = dataset::generate(&out, n, c.seed, &c.dataset())?;
            let mut manifest = report.manifest;
            if holdout.is_some() {
                manifest = dataset::split(&manifest, c.holdout_fraction, c.split_seed)?;
                manifest.save(&out)?;
            }
            println!(
                "{} records ({} written, {} reused) in {} shards, {} augmented",
                manifest.record_count,
                report.written,
                report.reused,
                manifest.shards.len(),
                manifest.augmented_count
            );
            if let Some(s) = &manifest.splits {
                println!("split: {} train, {} holdout", s.train.len(), s.holdout.len());
            }
            if verify {
                let v = dataset::verify(&out)?;
                println!(
                    "verified {} records: {} token mismatches, {} corrupt",
                    v.records,
                    v.token_mismatches.len(),
                    v.corrupt.len()
                );
                if !v.token_mismatches.is_empty() || !v.corrupt.is_empty() {
                    bail!("dataset verification failed: mismatches {:?}, corrupt {:?}", v.token_mismatches, v.corrupt);
                }
            }
        }
        Command::SampleBuilding { out } => {
            c.prior.check()?;
            let cat = catalog(&c)?;
            let s = sample_with_report(c.seed, &c.prior, &cat);
            write_file(&out, s.building.to_json())?;
            let b = &s.building;
            println!(
                "building: {} storeys, {} facades, {} cells, {} asset types, {} attempts{}",
                b.storeys.len(),
                b.facades.len(),
                b.cell_count(),
                b.asset_types().len(),
                s.attempts,
                if s.fallback { " (fallback)" } else { "" }
            );
        }
        Command::Render { building, out, sigma } => {
            let b = read_building(&building)?;
            let cat = catalog(&c)?;
            let r = render_stages(&b, &cat, c.density, sigma.unwrap_or(b.noise_level), c.seed)?;
            write_file(&out, write_ply(&r.noisy))?;
            println!("{} surface points, {} after interior filtering", r.surface.len(), r.noisy.len());
        }
        Command::Perturb { input, out, op, edge, blocks, gap, rate, voxel_edge, max_points } => {
            let pc = read_cloud(&input)?;
            let result = match op {
                PerturbOp::DropRandom => perturb_drop_random(&pc, edge, blocks, c.seed)?,
                PerturbOp::DropCenter => perturb_drop_center(&pc, edge)?,
                PerturbOp::Split => perturb_split(&pc, gap)?,
                PerturbOp::Dropout => {
                    let grid = voxelize(&pc, voxel_edge, max_points, c.seed);
                    let kept = dropout_voxels(&grid, rate, c.seed)?;
                    println!("{} of {} voxels kept", kept.len(), grid.len());
                    kept.gather(&pc)
                }
            };
            write_file(&out, write_ply(&result))?;
            println!("{} -> {} points", pc.len(), result.len());
        }
        Command::Encode { building, out } => {
            let b = read_building(&building)?;
            let codec = Codec::for_catalog(c.catalog_size);
            let t = codec.encode(&b)?;
            write_file(&out, serde_json::to_string(&t.0)?)?;
            println!("{} tokens, vocabulary {}", t.len(), codec.vocab().hash());
        }
        Command::Decode { tokens, out } => {
            let text = std::fs::read_to_string(&tokens).with_context(|| format!("reading {}", tokens.display()))?;
            let ids: Vec<u32> = serde_json::from_str(&text).context("token file must be a JSON array of ids")?;
            let b = Codec::for_catalog(c.catalog_size).decode(&TokenSequence(ids))?;
            write_file(&out, b.to_json())?;
            println!("building: {} storeys, {} facades", b.storeys.len(), b.facades.len());
        }
        Command::Rollout { policy, conditioning, out, tokens_out, .. } => {
            let codec = Codec::for_catalog(c.catalog_size);
            let vocab_size = codec.vocab().size();
            let p: Box<dyn Policy> = match policy {
                PolicyKind::Uniform => Box::new(UniformPolicy { vocab_size }),
                PolicyKind::Bridge => {
                    if c.bridge_command.is_empty() {
                        bail!("--policy bridge needs --bridge or bridge_command in the config");
                    }
                    Box::new(BridgePolicy::spawn(&c.bridge_command, vocab_size)?)
                }
            };
            let r = decode::rollout(p.as_ref(), &conditioning, &c.decode, &codec)?;
            write_file(&out, r.building.to_json())?;
            if let Some(t) = tokens_out {
                write_file(&t, serde_json::to_string(&r.tokens.0)?)?;
            }
            println!("{} tokens, {} storeys, {} facades", r.tokens.len(), r.building.storeys.len(), r.building.facades.len());
        }
        Command::Eval { pairs, n, sigmas, out_dir } => {
            let cat = catalog(&c)?;
            let mut corpus = Vec::new();
            let buildings: Vec<(BuildingAbstraction, BuildingAbstraction, u64)> = if pairs == "self" {
                c.prior.check()?;
                (0..n)
                    .map(|i| {
                        let b = sample_with_report(c.seed.wrapping_add(i), &c.prior, &cat).building;
                        (b.clone(), b, c.seed.wrapping_add(i))
                    })
                    .collect()
            } else {
                let f = std::fs::File::open(&pairs).with_context(|| format!("opening {pairs}"))?;
                let mut v = Vec::new();
                for (i, line) in BufReader::new(f).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let p: PairLine = serde_json::from_str(&line).with_context(|| format!("{pairs}:{}", i + 1))?;
                    v.push((p.inferred, p.truth, c.seed.wrapping_add(i as u64)));
                }
                v
            };
            for (inferred, truth, seed) in &buildings {
                if sigmas.is_empty() {
                    corpus.push(EvalPair {
                        inferred: inferred.clone(),
                        truth: truth.clone(),
                        cloud: None,
                        noise_level: truth.noise_level,
                    });
                }
                for &sigma in &sigmas {
                    let cloud = render_stages(truth, &cat, c.density, sigma, *seed)?.noisy;
                    corpus.push(EvalPair {
                        inferred: inferred.clone(),
                        truth: truth.clone(),
                        cloud: Some(cloud),
                        noise_level: sigma,
                    });
                }
            }
            let report = evaluate_corpus(&corpus, &cat);
            print!("{}", report.to_text());
            if !report.curve.is_empty() {
                print!("{}", report.curve_csv());
            }
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write_file(&dir.join("metrics.csv"), report.to_csv())?;
                write_file(&dir.join("table.txt"), report.to_text())?;
                write_file(&dir.join("curve.csv"), report.curve_csv())?;
                write_file(&dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::ExportObj { building, out } => {
            let b = read_building(&building)?;
            let g = building_mesh(&b, &catalog(&c)?)?;
            let name = out.file_stem().and_then(|s| s.to_str()).unwrap_or("building");
            write_file(&out, g.mesh.to_obj(name))?;
            println!("{} triangles", g.mesh.triangle_count());
        }
        Command::Vocab { out } => {
            let codec = Codec::for_catalog(c.catalog_size);
            write_file(&out, codec.vocab().manifest_json())?;
            println!("{} tokens, hash {}", codec.vocab().size(), codec.vocab().hash());
        }
        Command::BridgeServe { policy } => {
            let vocab_size = Codec::for_catalog(c.catalog_size).vocab().size();
            let p: Box<dyn Policy> = match policy {
                ServePolicy::Uniform => Box::new(UniformPolicy { vocab_size }),
                ServePolicy::Rank => Box::new(RankPolicy { vocab_size, salt: c.seed, spacing: 1.0 }),
            };
            let stdin = std::io::stdin();
            bridge::serve(p.as_ref(), stdin.lock(), std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            let record = serde_json::json!({ "error": e.to_string(), "causes": causes });
            let _ = writeln!(std::io::stderr(), "{record}");
            ExitCode::FAILURE
        }
    }
}
