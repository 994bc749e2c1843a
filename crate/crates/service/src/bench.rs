//! Per-stage timing of the full quilt pipeline.

use std::time::{Duration, Instant};

use holoquilt_core::calib::ViewSpec;
use holoquilt_core::ExpressionFrame;
use serde::{Deserialize, Serialize};

use crate::pipeline::Renderer;

pub const STAGES: [&str; 4] = ["blend", "raster", "quilt", "shade"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    /// One sample per iteration, in milliseconds. For `raster` this is the
    /// sum over views.
    pub samples_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub primitives: usize,
    pub views: usize,
    pub view_width: usize,
    pub view_height: usize,
    pub workers: usize,
    pub iterations: usize,
    pub stages: Vec<StageReport>,
    /// `[iteration][view]` raster time in milliseconds.
    pub raster_per_view_ms: Vec<Vec<f64>>,
    /// Wall time of each complete frame, milliseconds.
    pub frame_ms: Vec<f64>,
}

impl BenchReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Renders `iterations` full frames on a pool of `workers` threads, or on the
/// global pool when `workers` is `None`.
pub fn run_bench(
    renderer: &Renderer,
    views: &[ViewSpec],
    frame: &ExpressionFrame,
    iterations: usize,
    workers: Option<usize>,
) -> anyhow::Result<BenchReport> {
    let pool = match workers {
        Some(n) => {
            anyhow::ensure!(n > 0, "workers must be at least 1");
            Some(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
        }
        None => None,
    };
    let run = || -> anyhow::Result<_> {
        let mut stages: Vec<Vec<f64>> = vec![Vec::with_capacity(iterations); STAGES.len()];
        let mut per_view = Vec::with_capacity(iterations);
        let mut frame_ms = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let t = Instant::now();
            let (_, _, times) = renderer.timed_frame(views, frame)?;
            frame_ms.push(ms(t.elapsed()));
            stages[0].push(ms(times.blend));
            stages[1].push(ms(times.raster_per_view.iter().sum()));
            stages[2].push(ms(times.quilt));
            stages[3].push(ms(times.shade));
            per_view.push(times.raster_per_view.into_iter().map(ms).collect());
        }
        Ok((stages, per_view, frame_ms, rayon::current_num_threads()))
    };
    let (stages, raster_per_view_ms, frame_ms, threads) = match &pool {
        Some(p) => p.install(run)?,
        None => run()?,
    };
    let d = &renderer.profile.display;
    Ok(BenchReport {
        primitives: renderer.avatar.len(),
        views: views.len(),
        view_width: d.view_width,
        view_height: d.view_height,
        workers: threads,
        iterations,
        stages: STAGES
            .iter()
            .zip(stages)
            .map(|(name, samples_ms)| StageReport {
                name: name.to_string(),
                samples_ms,
            })
            .collect(),
        raster_per_view_ms,
        frame_ms,
    })
}
