//! `holoquilt` command line.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use holoquilt_core::io::{
    load_avatar, load_expression_stream, load_profile_file, load_quilt, save_avatar, save_quilt,
    write_image_png, ExpressionStream, ProfileFile,
};
use holoquilt_core::synthetic::{random_avatar, synthetic_head};
use holoquilt_core::{simulate_observer, BlendShapeAvatar, ExpressionFrame, ViewSpec};
use serde::Serialize;

use crate::bench::run_bench;
use crate::pipeline::Renderer;
use crate::protocol::Encoding;
use crate::server::{serve, ServeConfig};
use crate::session::Session;

#[derive(Debug, Parser)]
#[command(name = "holoquilt", version, about = "Multi-view quilt rendering for Gaussian avatars")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one expression into a quilt PNG plus JSON sidecar.
    RenderQuilt {
        #[command(flatten)]
        input: AvatarInput,
        #[command(flatten)]
        expr: ExpressionInput,
        #[command(flatten)]
        display: DisplayOverrides,
        /// Output path; the quilt suffix is added to the file name.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render every record of an expression stream, one quilt per frame.
    RenderAnim {
        #[command(flatten)]
        input: AvatarInput,
        #[arg(long)]
        stream: PathBuf,
        #[command(flatten)]
        display: DisplayOverrides,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibration utilities.
    Calib {
        #[command(subcommand)]
        command: CalibCommand,
    },
    /// Write the view an observer at `--angle` degrees would see.
    Simulate {
        /// Existing quilt PNG. Without it the quilt is rendered from `--avatar`.
        #[arg(long, conflicts_with = "avatar")]
        quilt: Option<PathBuf>,
        #[arg(long)]
        avatar: Option<PathBuf>,
        #[command(flatten)]
        expr: ExpressionInput,
        #[command(flatten)]
        display: DisplayOverrides,
        #[arg(long, allow_hyphen_values = true)]
        angle: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the live WebSocket session.
    Serve {
        #[command(flatten)]
        input: AvatarInput,
        /// Expression stream available for playback.
        #[arg(long)]
        stream: Option<PathBuf>,
        #[command(flatten)]
        display: DisplayOverrides,
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: String,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long, value_enum, default_value_t = EncodingArg::Raw)]
        encoding: EncodingArg,
    },
    /// Time each pipeline stage and print a JSON report.
    Bench {
        #[arg(long, required_unless_present = "synthetic")]
        avatar: Option<PathBuf>,
        /// Use a generated head with this many primitives instead of a file.
        #[arg(long, conflicts_with = "avatar")]
        synthetic: Option<usize>,
        #[command(flatten)]
        expr: ExpressionInput,
        #[command(flatten)]
        display: DisplayOverrides,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        /// Size of the worker pool; defaults to the global pool.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a generated avatar container.
    SynthAvatar {
        #[arg(long, default_value_t = 2000)]
        primitives: usize,
        /// Random blend shapes instead of the named head shapes.
        #[arg(long)]
        random_shapes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CalibCommand {
    /// Print every view's offset and matrices as JSON.
    Dump {
        #[command(flatten)]
        display: DisplayOverrides,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Raw,
    Png,
}

#[derive(Debug, Args)]
pub struct AvatarInput {
    #[arg(long)]
    pub avatar: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExpressionInput {
    /// Comma-separated weights, one per blend shape.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "stream")]
    pub psi: Option<String>,
    /// Take the expression from this stream...
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// ...at this frame number (default: first record).
    #[arg(long, requires = "stream")]
    pub frame: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct DisplayOverrides {
    #[arg(long, env = "HOLOQUILT_PROFILE")]
    pub profile: Option<PathBuf>,
    /// Number of views. A count that does not fit the profile grid becomes a
    /// single row.
    #[arg(long)]
    pub views: Option<usize>,
    /// Per-view size as WxH.
    #[arg(long, value_parser = parse_size)]
    pub view_size: Option<(usize, usize)>,
    /// Viewer distance in metres.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Force the vertical field of view, in degrees.
    #[arg(long)]
    pub fov_deg: Option<f64>,
    #[arg(long)]
    pub cam_size: Option<f64>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("size must be non-zero".into());
    }
    Ok((w, h))
}

fn parse_psi(s: &str) -> anyhow::Result<Vec<f32>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|w| w.trim().parse::<f32>().with_context(|| format!("bad psi weight {w:?}")))
        .collect()
}

impl DisplayOverrides {
    pub fn resolve(&self) -> anyhow::Result<ProfileFile> {
        let mut p = match &self.profile {
            Some(path) => load_profile_file(path).with_context(|| format!("loading profile {}", path.display()))?,
            None => ProfileFile::default(),
        };
        if let Some(n) = self.views {
            p.display.total_views = n;
            if p.display.quilt_cols * p.display.quilt_rows != n {
                p.display.quilt_cols = n;
                p.display.quilt_rows = 1;
            }
        }
        if let Some((w, h)) = self.view_size {
            p.display.view_width = w;
            p.display.view_height = h;
        }
        if let Some(d) = self.distance {
            p.rig.viewer_distance_m = d;
        }
        if let Some(c) = self.cam_size {
            p.rig.cam_size = c;
        }
        p.display.validate().context("invalid display profile")?;
        p.rig.validate().context("invalid rig")?;
        Ok(p)
    }

    pub fn views(&self, renderer: &Renderer) -> anyhow::Result<Vec<ViewSpec>> {
        match self.fov_deg {
            Some(f) => renderer.views_with_fov(f.to_radians()),
            None => renderer.views(None),
        }
    }
}

pub fn read_avatar(path: &Path) -> anyhow::Result<BlendShapeAvatar> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read avatar {}", path.display()))?;
    load_avatar(&bytes).with_context(|| format!("invalid avatar {}", path.display()))
}

pub fn read_stream(path: &Path) -> anyhow::Result<ExpressionStream> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read stream {}", path.display()))?;
    load_expression_stream(&bytes).with_context(|| format!("invalid stream {}", path.display()))
}

impl ExpressionInput {
    pub fn resolve(&self, k: usize) -> anyhow::Result<ExpressionFrame> {
        let frame = if let Some(path) = &self.stream {
            let stream = read_stream(path)?;
            let rec = match self.frame {
                Some(f) => stream
                    .records
                    .iter()
                    .find(|r| r.frame == f)
                    .with_context(|| format!("no frame {f} in {}", path.display()))?,
                None => stream.records.first().with_context(|| format!("{} is empty", path.display()))?,
            };
            rec.to_frame()
        } else if let Some(s) = &self.psi {
            ExpressionFrame {
                psi: parse_psi(s)?,
                ..ExpressionFrame::neutral(k)
            }
        } else {
            ExpressionFrame::neutral(k)
        };
        if frame.psi.len() != k {
            bail!("expression has {} weights, avatar has {k} blend shapes", frame.psi.len());
        }
        Ok(frame)
    }
}

#[derive(Serialize)]
struct CalibRecord {
    i: usize,
    alpha_off_deg: f64,
    t_off: f64,
    view: Vec<f64>,
    proj: Vec<f64>,
}

pub fn calib_dump_json(views: &[ViewSpec]) -> String {
    let records: Vec<_> = views
        .iter()
        .map(|v| CalibRecord {
            i: v.index,
            alpha_off_deg: v.alpha_off_deg,
            t_off: v.t_off,
            view: v.view.as_slice().to_vec(),
            proj: v.proj.as_slice().to_vec(),
        })
        .collect();
    serde_json::to_string_pretty(&records).expect("calibration serializes")
}

/// File name for frame `frame` of an animation.
pub fn anim_frame_name(frame: u64) -> String {
    format!("frame_{frame:06}.png")
}

fn render_anim(renderer: &Renderer, views: &[ViewSpec], stream: &ExpressionStream, out: &Path) -> anyhow::Result<()> {
    if stream.is_empty() {
        return Ok(());
    }
    let created_dir = !out.exists();
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> anyhow::Result<()> {
        for rec in &stream.records {
            let quilt = renderer.render_quilt(views, &rec.to_frame())?;
            let path = holoquilt_core::io::quilt_path(out.join(anim_frame_name(rec.frame)), &quilt);
            write_image_png(&quilt.image, &path).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        Ok(())
    })();
    if result.is_err() {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        if created_dir {
            let _ = std::fs::remove_dir(out);
        }
    }
    result
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::RenderQuilt { input, expr, display, out } => {
            let avatar = read_avatar(&input.avatar)?;
            let frame = expr.resolve(avatar.k())?;
            let renderer = Renderer::new(Arc::new(avatar), display.resolve()?);
            let views = display.views(&renderer)?;
            let quilt = renderer.render_quilt(&views, &frame)?;
            let path = save_quilt(&quilt, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("{}", path.display());
        }
        Command::RenderAnim { input, stream, display, out } => {
            let avatar = read_avatar(&input.avatar)?;
            let stream = read_stream(&stream)?;
            if let Some(k) = stream.k() {
                if k != avatar.k() {
                    bail!("stream has {k} weights per frame, avatar has {} blend shapes", avatar.k());
                }
            }
            let renderer = Renderer::new(Arc::new(avatar), display.resolve()?);
            let views = display.views(&renderer)?;
            render_anim(&renderer, &views, &stream, &out)?;
            println!("{} frames", stream.len());
        }
        Command::Calib {
            command: CalibCommand::Dump { display },
        } => {
            let profile = display.resolve()?;
            let renderer = Renderer::new(Arc::new(BlendShapeAvatar::default()), profile);
            println!("{}", calib_dump_json(&display.views(&renderer)?));
        }
        Command::Simulate {
            quilt,
            avatar,
            expr,
            display,
            angle,
            out,
        } => {
            let profile = display.resolve()?;
            let quilt = match (quilt, avatar) {
                (Some(q), _) => load_quilt(&q).with_context(|| format!("loading quilt {}", q.display()))?,
                (None, Some(a)) => {
                    let avatar = read_avatar(&a)?;
                    let frame = expr.resolve(avatar.k())?;
                    let renderer = Renderer::new(Arc::new(avatar), profile.clone());
                    renderer.render_quilt(&display.views(&renderer)?, &frame)?
                }
                (None, None) => bail!("simulate needs --quilt or --avatar"),
            };
            let image = simulate_observer(&quilt, angle, &profile.display)?;
            write_image_png(&image, &out).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Serve {
            input,
            stream,
            display,
            bind,
            fps,
            encoding,
        } => {
            let avatar = read_avatar(&input.avatar)?;
            let stream = stream.as_deref().map(read_stream).transpose()?;
            let mut profile = display.resolve()?;
            if display.fov_deg.is_some() {
                log::warn!("--fov-deg is ignored by serve; the field of view follows the viewer distance");
            }
            profile.rig.viewer_distance_m = display.distance.unwrap_or(profile.rig.viewer_distance_m);
            let encoding = match encoding {
                EncodingArg::Raw => Encoding::RawRgba8,
                EncodingArg::Png => Encoding::Png,
            };
            let session = Session::new(Renderer::new(Arc::new(avatar), profile), stream, encoding)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let handle = serve(session, ServeConfig { bind, fps }).await?;
                println!("listening on ws://{}", handle.local_addr);
                tokio::signal::ctrl_c().await?;
                handle.shutdown().await;
                anyhow::Ok(())
            })?;
        }
        Command::Bench {
            avatar,
            synthetic,
            expr,
            display,
            iterations,
            workers,
        } => {
            let avatar = match (avatar, synthetic) {
                (Some(p), _) => read_avatar(&p)?,
                (None, Some(n)) => synthetic_head(n, 0),
                (None, None) => bail!("bench needs --avatar or --synthetic"),
            };
            let frame = expr.resolve(avatar.k())?;
            let renderer = Renderer::new(Arc::new(avatar), display.resolve()?);
            let views = display.views(&renderer)?;
            println!("{}", run_bench(&renderer, &views, &frame, iterations, workers)?.to_json());
        }
        Command::SynthAvatar {
            primitives,
            random_shapes,
            seed,
            out,
        } => {
            let avatar = match random_shapes {
                Some(k) => random_avatar(primitives, k, seed),
                None => synthetic_head(primitives, seed),
            };
            let bytes = save_avatar(&avatar)?;
            std::fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
        }
    }
    Ok(())
}

pub fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("holoquilt: error: {e:#}");
            std::process::ExitCode::from(1)
        }
    }
}
