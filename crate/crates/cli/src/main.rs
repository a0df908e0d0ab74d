use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ncdnet_cli::bench::{scaling_report, ScalingConfig};
use ncdnet_cli::experiment::{run_experiment, ExperimentConfig};
use ncdnet_core::compress::{Codec, Compressor};
use ncdnet_core::convnet::FeatureMap;
use ncdnet_core::image::{augment, load_pgm, save_pgm, AugmentOp};
use ncdnet_core::matio::{read_columns, read_square, write_square};
use ncdnet_core::ncd::{distance_matrix, ncd_bytes, DistanceMatrix, DEFAULT_EPSILON};
use ncdnet_core::network::Network;
use ncdnet_core::select::{select_features, SelectionConfig};
use ncdnet_core::spectral::{eig_symmetric, embed_2d, partition, spectral_bundle, SquareMat};

#[derive(Parser)]
#[command(
    name = "ncdnet",
    version,
    about = "Compression-distance feature selection and spectral clustering over convolutional feature maps"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Normalized compression distance between two files
    Ncd {
        file_a: PathBuf,
        file_b: PathBuf,
        /// bzip, deflate or rle
        #[arg(long, default_value = "bzip")]
        compressor: String,
    },
    /// Pairwise NCD matrix over files
    Distmat {
        /// Two or more input files
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "bzip")]
        compressor: String,
    },
    /// Select feature-vector columns by dissimilarity criterion
    Select {
        /// CSV whose columns are feature vectors
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        criterion: f64,
        #[arg(long, default_value = "bzip")]
        compressor: String,
        /// Kept indices (with criterion/fallback header)
        #[arg(long)]
        out: PathBuf,
        /// Optional distance-matrix CSV
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Spectral pipeline on a distance matrix, or on a prebuilt Laplacian
    Spectral {
        #[arg(long, conflicts_with = "laplacian")]
        matrix: Option<PathBuf>,
        #[arg(long)]
        laplacian: Option<PathBuf>,
        /// Gaussian bandwidth, or "auto" for the median off-diagonal distance
        #[arg(long, default_value = "auto")]
        sigma: String,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Embedding CSV (index,x,y,label)
        #[arg(long)]
        out: PathBuf,
        /// Optional labels CSV (index,label)
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Run a network forward and dump one layer's output tensor
    Forward {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Layer index to dump (0-based)
        #[arg(long)]
        dump_layer: usize,
        /// Output tensor CSV; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Apply training-time behavior (dropout active)
        #[arg(long)]
        training: bool,
    },
    /// Apply augmentation ops to every PGM in a directory
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated: complement,rot90,rot180,rot270,translate:DX:DY,partition:R:C
        #[arg(long)]
        ops: String,
    },
    /// Run an end-to-end experiment from a config file
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Measure distance-matrix and convolution runtime scaling
    Bench {
        /// Item counts for the distance matrix
        #[arg(long, default_value = "16,32,64,128")]
        sizes: String,
        /// Spatial sizes for the convolution
        #[arg(long, default_value = "32,64,128")]
        conv_sizes: String,
        /// Write the timing report here as well as stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit 1 on usage errors, 2 on data errors.
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> CliError {
        CliError::Data(e.to_string())
    }
}

fn parse_codec(raw: &str) -> Result<Compressor, CliError> {
    raw.parse::<Codec>()
        .map(Compressor::with_codec)
        .map_err(CliError::Usage)
}

fn parse_sizes(raw: &str) -> Result<Vec<usize>, CliError> {
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad size {:?}", tok.trim())))
        })
        .collect()
}

fn read_distance_csv(path: &Path) -> Result<DistanceMatrix, CliError> {
    let file = fs::File::open(path).map_err(CliError::data)?;
    let (_, rows) = read_square(BufReader::new(file)).map_err(CliError::data)?;
    DistanceMatrix::from_rows(&rows, DEFAULT_EPSILON).map_err(CliError::data)
}

fn write_embedding_csv(
    path: &Path,
    embedding: &[[f64; 2]],
    labels: &[usize],
) -> Result<(), CliError> {
    let mut out = String::from("index,x,y,label\n");
    for (i, (p, l)) in embedding.iter().zip(labels).enumerate() {
        out.push_str(&format!("{i},{:.6},{:.6},{l}\n", p[0], p[1]));
    }
    fs::write(path, out).map_err(CliError::data)
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Ncd {
            file_a,
            file_b,
            compressor,
        } => {
            let comp = parse_codec(&compressor)?;
            let a = fs::read(&file_a).map_err(CliError::data)?;
            let b = fs::read(&file_b).map_err(CliError::data)?;
            let d = ncd_bytes(&a, &b, &comp).map_err(CliError::data)?;
            println!("{d:.5}");
        }
        Cmd::Distmat {
            paths,
            out,
            compressor,
        } => {
            if paths.len() < 2 {
                return Err(CliError::Usage("distmat needs at least two files".into()));
            }
            let comp = parse_codec(&compressor)?;
            let items: Vec<Vec<u8>> = paths
                .iter()
                .map(|p| fs::read(p).map_err(CliError::data))
                .collect::<Result<_, _>>()?;
            let m = distance_matrix(&items, &comp).map_err(CliError::data)?;
            let mut file = fs::File::create(&out).map_err(CliError::data)?;
            write_square(&mut file, m.n(), |i, j| m.get(i, j)).map_err(CliError::data)?;
            println!("wrote {} ({} items)", out.display(), m.n());
        }
        Cmd::Select {
            features,
            criterion,
            compressor,
            out,
            matrix_out,
        } => {
            let comp = parse_codec(&compressor)?;
            let file = fs::File::open(&features).map_err(CliError::data)?;
            let columns = read_columns(BufReader::new(file)).map_err(CliError::data)?;
            if columns.is_empty() {
                return Err(CliError::Data("feature file holds no columns".into()));
            }
            let cfg = SelectionConfig {
                criterion,
                compressor: comp,
            };
            let sel = select_features(&columns, &cfg).map_err(CliError::data)?;
            let kept: Vec<String> = sel.kept.iter().map(usize::to_string).collect();
            fs::write(
                &out,
                format!(
                    "# criterion={criterion} criterion_used={:.5} fallback_applied={} full={} kept={}\n{}\n",
                    sel.criterion_used,
                    sel.fallback_applied,
                    columns.len(),
                    sel.kept.len(),
                    kept.join(",")
                ),
            )
            .map_err(CliError::data)?;
            if let Some(path) = matrix_out {
                let mut file = fs::File::create(&path).map_err(CliError::data)?;
                write_square(&mut file, sel.matrix.n(), |i, j| sel.matrix.get(i, j))
                    .map_err(CliError::data)?;
            }
            println!(
                "kept {}/{} columns (criterion_used={:.5}, fallback={})",
                sel.kept.len(),
                columns.len(),
                sel.criterion_used,
                sel.fallback_applied
            );
        }
        Cmd::Spectral {
            matrix,
            laplacian,
            sigma,
            k,
            seed,
            out,
            labels,
        } => {
            let (embedding, label_vec) = match (matrix, laplacian) {
                (Some(path), None) => {
                    let m = read_distance_csv(&path)?;
                    let sigma = match sigma.as_str() {
                        "auto" => None,
                        raw => Some(
                            raw.parse::<f64>()
                                .map_err(|_| CliError::Usage(format!("bad sigma {raw:?}")))?,
                        ),
                    };
                    let bundle = spectral_bundle(&m, sigma).map_err(CliError::data)?;
                    let labels = partition(&bundle.embedding, k, seed).map_err(CliError::data)?;
                    (bundle.embedding, labels)
                }
                (None, Some(path)) => {
                    let file = fs::File::open(&path).map_err(CliError::data)?;
                    let (_, rows) = read_square(BufReader::new(file)).map_err(CliError::data)?;
                    let lap = SquareMat::from_rows(&rows).map_err(CliError::data)?;
                    let (_, vecs) = eig_symmetric(&lap).map_err(CliError::data)?;
                    let embedding = embed_2d(&vecs).map_err(CliError::data)?;
                    let labels = partition(&embedding, k, seed).map_err(CliError::data)?;
                    (embedding, labels)
                }
                _ => {
                    return Err(CliError::Usage(
                        "provide exactly one of --matrix or --laplacian".into(),
                    ))
                }
            };
            write_embedding_csv(&out, &embedding, &label_vec)?;
            if let Some(path) = labels {
                let mut text = String::from("index,label\n");
                for (i, l) in label_vec.iter().enumerate() {
                    text.push_str(&format!("{i},{l}\n"));
                }
                fs::write(path, text).map_err(CliError::data)?;
            }
            println!("wrote {} ({} points, k={k})", out.display(), embedding.len());
        }
        Cmd::Forward {
            config,
            image,
            dump_layer,
            out,
            training,
        } => {
            let net = Network::load(&config).map_err(CliError::data)?;
            if dump_layer >= net.layers.len() {
                return Err(CliError::Usage(format!(
                    "--dump-layer {dump_layer} out of range: network has {} layers",
                    net.layers.len()
                )));
            }
            let img = load_pgm(&image).map_err(CliError::data)?;
            let input = FeatureMap::single(img.h(), img.w(), 1, img.to_unit_values())
                .map_err(CliError::data)?;
            let (outputs, _) = net.forward(input, training).map_err(CliError::data)?;
            let map = &outputs[dump_layer];
            match out {
                Some(path) => {
                    let mut file = fs::File::create(&path).map_err(CliError::data)?;
                    map.write_csv(&mut file).map_err(CliError::data)?;
                }
                None => {
                    let stdout = std::io::stdout();
                    map.write_csv(stdout.lock()).map_err(CliError::data)?;
                }
            }
        }
        Cmd::Augment { input, out, ops } => {
            let ops: Vec<AugmentOp> = ops
                .split(',')
                .map(|tok| tok.trim().parse().map_err(CliError::Usage))
                .collect::<Result<_, _>>()?;
            if ops.is_empty() {
                return Err(CliError::Usage("no augmentation ops given".into()));
            }
            let mut files: Vec<PathBuf> = fs::read_dir(&input)
                .map_err(CliError::data)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(CliError::Data(format!(
                    "no .pgm files in {}",
                    input.display()
                )));
            }
            fs::create_dir_all(&out).map_err(CliError::data)?;
            let mut written = 0usize;
            for file in &files {
                let img = load_pgm(file).map_err(CliError::data)?;
                let stem = file.file_stem().unwrap_or_default().to_string_lossy();
                for op in &ops {
                    let results = augment(&img, *op).map_err(CliError::data)?;
                    let tag = op.to_string().replace(':', "_");
                    for (i, result) in results.iter().enumerate() {
                        let name = if results.len() == 1 {
                            format!("{stem}_{tag}.pgm")
                        } else {
                            format!("{stem}_{tag}_{i}.pgm")
                        };
                        save_pgm(out.join(name), result, true).map_err(CliError::data)?;
                        written += 1;
                    }
                }
            }
            println!("wrote {written} images to {}", out.display());
        }
        Cmd::Experiment { config } => {
            let cfg = ExperimentConfig::from_file(&config).map_err(CliError::data)?;
            let output = run_experiment(&cfg).map_err(CliError::data)?;
            print!("{}", output.report.render());
            println!("report: {}", cfg.out_dir.join("report.txt").display());
            if let Some((stage, err)) = &output.report.failed_stage {
                return Err(CliError::Data(format!("stage {stage} failed: {err}")));
            }
        }
        Cmd::Bench {
            sizes,
            conv_sizes,
            out,
        } => {
            let cfg = ScalingConfig {
                matrix_sizes: parse_sizes(&sizes)?,
                conv_sizes: parse_sizes(&conv_sizes)?,
                ..ScalingConfig::default()
            };
            let report = scaling_report(&cfg).map_err(CliError::data)?;
            print!("{}", report.render());
            if let Some(path) = out {
                let mut file = fs::File::create(&path).map_err(CliError::data)?;
                file.write_all(report.render().as_bytes())
                    .map_err(CliError::data)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own help/version output is not an error
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
