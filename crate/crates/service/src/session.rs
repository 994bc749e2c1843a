//! Live session state and command handling.
//!
//! A [`Session`] is owned by exactly one render loop. Commands arrive in
//! batches; each batch is applied in order onto a working copy of the state
//! (later values for a field replace earlier ones) and only then becomes
//! visible, so a rendered frame never mixes half of a batch.

use holoquilt_core::avatar::UNIT_NORM_TOL;
use holoquilt_core::calib::ViewSpec;
use holoquilt_core::io::{encode_png, ExpressionStream};
use holoquilt_core::quilt::observed_view_index;
use holoquilt_core::{ExpressionFrame, Image};

use crate::pipeline::Renderer;
use crate::protocol::{ControlMessage, Encoding, FrameMessage, Mode, PlaybackAction};

#[derive(Debug, Clone, PartialEq)]
pub struct Playback {
    pub stream: ExpressionStream,
    /// Index of the next record to show.
    pub cursor: usize,
    pub playing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub current_psi: Vec<f32>,
    pub head_rotation: [f32; 4],
    pub head_translation: [f32; 3],
    pub viewer_angle_deg: f64,
    pub viewer_distance_m: f64,
    pub mode: Mode,
    pub playback: Option<Playback>,
}

impl SessionState {
    pub fn expression(&self) -> ExpressionFrame {
        ExpressionFrame {
            psi: self.current_psi.clone(),
            head_rotation: self.head_rotation,
            head_translation: self.head_translation,
            timestamp: 0.0,
        }
    }
}

pub struct Session {
    renderer: Renderer,
    state: SessionState,
    views: Vec<ViewSpec>,
    encoding: Encoding,
    recalibrations: u64,
    next_frame_id: u64,
    dirty: bool,
}

fn quat_is_unit(q: &[f32; 4]) -> bool {
    let n = q.iter().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt();
    (n - 1.0).abs() <= UNIT_NORM_TOL
}

impl Session {
    pub fn new(renderer: Renderer, stream: Option<ExpressionStream>, encoding: Encoding) -> anyhow::Result<Self> {
        let k = renderer.avatar.k();
        if let Some(sk) = stream.as_ref().and_then(|s| s.k()) {
            anyhow::ensure!(sk == k, "stream has {sk} weights per frame, avatar has {k} blend shapes");
        }
        let distance = renderer.profile.rig.viewer_distance_m;
        let views = renderer.views(Some(distance))?;
        let state = SessionState {
            current_psi: vec![0.0; k],
            head_rotation: [1.0, 0.0, 0.0, 0.0],
            head_translation: [0.0; 3],
            viewer_angle_deg: 0.0,
            viewer_distance_m: distance,
            mode: Mode::Observer,
            playback: stream.filter(|s| !s.is_empty()).map(|stream| Playback {
                stream,
                cursor: 0,
                playing: false,
            }),
        };
        Ok(Self {
            renderer,
            state,
            views,
            encoding,
            recalibrations: 0,
            next_frame_id: 0,
            dirty: true,
        })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn renderer(&self) -> &Renderer {
        &self.renderer
    }

    pub fn views(&self) -> &[ViewSpec] {
        &self.views
    }

    /// Times the view matrices were recomputed after a distance change.
    pub fn recalibrations(&self) -> u64 {
        self.recalibrations
    }

    /// True once per state change; the render loop uses it to skip idle frames.
    pub fn take_dirty(&mut self) -> bool {
        std::mem::take(&mut self.dirty)
    }

    fn apply_one(&self, next: &mut SessionState, msg: ControlMessage) -> Result<(), String> {
        match msg {
            ControlMessage::SetExpression { psi } => {
                let k = self.renderer.avatar.k();
                if psi.len() != k {
                    return Err(format!("psi has {} weights, avatar expects {k}", psi.len()));
                }
                if psi.iter().any(|w| !w.is_finite()) {
                    return Err("psi contains a non-finite weight".into());
                }
                next.current_psi = psi;
                if let Some(p) = next.playback.as_mut() {
                    p.playing = false;
                }
            }
            ControlMessage::SetPose { rotation, translation } => {
                if !quat_is_unit(&rotation) {
                    return Err("rotation must be a unit quaternion".into());
                }
                if translation.iter().any(|c| !c.is_finite()) {
                    return Err("translation must be finite".into());
                }
                next.head_rotation = rotation;
                next.head_translation = translation;
            }
            ControlMessage::SetViewer { angle_deg, distance_m } => {
                if let Some(a) = angle_deg {
                    if !a.is_finite() {
                        return Err("angle_deg must be finite".into());
                    }
                }
                if let Some(d) = distance_m {
                    if !(d > 0.0 && d.is_finite()) {
                        return Err(format!("distance_m must be positive, got {d}"));
                    }
                }
                if let Some(a) = angle_deg {
                    next.viewer_angle_deg = a;
                }
                if let Some(d) = distance_m {
                    next.viewer_distance_m = d;
                }
            }
            ControlMessage::SetMode { mode } => next.mode = mode,
            ControlMessage::Playback { action, frame } => {
                let Some(p) = next.playback.as_mut() else {
                    return Err("no expression stream loaded".into());
                };
                match action {
                    PlaybackAction::Play => {
                        if p.cursor >= p.stream.len() {
                            p.cursor = 0;
                        }
                        p.playing = true;
                    }
                    PlaybackAction::Pause => p.playing = false,
                    PlaybackAction::Seek => {
                        let target = frame.ok_or("seek needs a frame")?;
                        let pos = p
                            .stream
                            .records
                            .iter()
                            .position(|r| r.frame >= target)
                            .ok_or_else(|| format!("frame {target} is past the end of the stream"))?;
                        p.cursor = pos;
                        let rec = &p.stream.records[pos];
                        next.current_psi = rec.psi.clone();
                        next.head_rotation = rec.head_rotation;
                        next.head_translation = rec.head_translation;
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies a batch of messages and returns `(tag, detail)` for every
    /// rejected one. Rejected messages leave the state untouched. A viewer
    /// distance change recalibrates once per batch, with the final value.
    pub fn apply_batch<T>(&mut self, batch: impl IntoIterator<Item = (T, ControlMessage)>) -> Vec<(T, String)> {
        let mut next = self.state.clone();
        let mut errors = Vec::new();
        for (tag, msg) in batch {
            let mut trial = next.clone();
            match self.apply_one(&mut trial, msg) {
                Ok(()) => next = trial,
                Err(detail) => errors.push((tag, detail)),
            }
        }
        if next.viewer_distance_m != self.state.viewer_distance_m {
            match self.renderer.views(Some(next.viewer_distance_m)) {
                Ok(views) => {
                    self.views = views;
                    self.recalibrations += 1;
                }
                Err(e) => {
                    log::warn!("recalibration failed: {e}");
                    next.viewer_distance_m = self.state.viewer_distance_m;
                }
            }
        }
        if next != self.state {
            self.state = next;
            self.dirty = true;
        }
        errors
    }

    /// Moves playback forward one record. Returns true when the state changed.
    pub fn advance_playback(&mut self) -> bool {
        let Some(p) = self.state.playback.as_mut() else {
            return false;
        };
        if !p.playing {
            return false;
        }
        let rec = &p.stream.records[p.cursor];
        self.state.current_psi = rec.psi.clone();
        self.state.head_rotation = rec.head_rotation;
        self.state.head_translation = rec.head_translation;
        p.cursor += 1;
        if p.cursor >= p.stream.len() {
            p.cursor = p.stream.len() - 1;
            p.playing = false;
        }
        self.dirty = true;
        true
    }

    /// The image the current mode shows for the current state.
    pub fn render_image(&self) -> anyhow::Result<Image> {
        let set = self.renderer.pose(&self.state.expression())?;
        Ok(match self.state.mode {
            Mode::Quilt => self.renderer.render_posed(&self.views, &set)?.image,
            Mode::Native => {
                let quilt = self.renderer.render_posed(&self.views, &set)?;
                self.renderer.shade(&quilt)?.to_image()
            }
            Mode::Observer => {
                let idx = observed_view_index(self.state.viewer_angle_deg, &self.renderer.profile.display);
                self.renderer.render_view(&self.views, idx, &set)?
            }
        })
    }

    pub fn render_frame(&mut self) -> anyhow::Result<FrameMessage> {
        let image = self.render_image()?;
        let payload = match self.encoding {
            Encoding::RawRgba8 => image.to_rgba8(),
            Encoding::Png => encode_png(&image)?,
        };
        let id = self.next_frame_id;
        self.next_frame_id += 1;
        Ok(FrameMessage::new(id, self.state.mode, image.width, image.height, self.encoding, payload)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use holoquilt_core::io::{ExpressionRecord, ProfileFile};
    use holoquilt_core::quilt::extract_view;
    use holoquilt_core::synthetic::synthetic_head;
    use holoquilt_core::DisplayProfile;
    use std::sync::Arc;

    pub(crate) fn small_renderer() -> Renderer {
        let mut profile = ProfileFile::default();
        profile.display = DisplayProfile {
            view_width: 12,
            view_height: 16,
            ..DisplayProfile::default()
        };
        profile.display.lenticular.screen_width_px = 48;
        profile.display.lenticular.screen_height_px = 64;
        profile.display.lenticular.subp = 1.0 / 144.0;
        Renderer::new(Arc::new(synthetic_head(300, 3)), profile)
    }

    fn stream(n: u64) -> ExpressionStream {
        ExpressionStream {
            records: (0..n)
                .map(|i| ExpressionRecord {
                    frame: i * 2,
                    t: i as f64,
                    psi: vec![i as f32 * 0.1, 0.0, 0.0, 0.0],
                    head_rotation: [1.0, 0.0, 0.0, 0.0],
                    head_translation: [0.0; 3],
                })
                .collect(),
        }
    }

    #[test]
    fn two_distance_changes_recalibrate_once_with_latest() {
        let mut s = Session::new(small_renderer(), None, Encoding::RawRgba8).unwrap();
        let errs = s.apply_batch([
            ((), ControlMessage::SetViewer { angle_deg: None, distance_m: Some(0.9) }),
            ((), ControlMessage::SetViewer { angle_deg: Some(5.0), distance_m: Some(1.3) }),
        ]);
        assert!(errs.is_empty());
        assert_eq!(s.recalibrations(), 1);
        assert_eq!(s.state().viewer_distance_m, 1.3);
        assert_eq!(s.views(), s.renderer().views(Some(1.3)).unwrap().as_slice());
        // Angle-only change does not recalibrate.
        s.apply_batch([((), ControlMessage::SetViewer { angle_deg: Some(-3.0), distance_m: None })]);
        assert_eq!(s.recalibrations(), 1);
    }

    #[test]
    fn wrong_k_is_rejected_and_state_kept() {
        let mut s = Session::new(small_renderer(), None, Encoding::RawRgba8).unwrap();
        s.take_dirty();
        let before = s.state().clone();
        let errs = s.apply_batch([(7u32, ControlMessage::SetExpression { psi: vec![1.0, 2.0] })]);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].0, 7);
        assert!(errs[0].1.contains("expects 4"));
        assert_eq!(s.state(), &before);
        assert!(!s.take_dirty());
    }

    #[test]
    fn latest_wins_within_batch() {
        let mut s = Session::new(small_renderer(), None, Encoding::RawRgba8).unwrap();
        s.apply_batch([
            ((), ControlMessage::SetExpression { psi: vec![1.0, 0.0, 0.0, 0.0] }),
            ((), ControlMessage::SetMode { mode: Mode::Quilt }),
            ((), ControlMessage::SetExpression { psi: vec![0.0, 0.5, 0.0, 0.0] }),
            ((), ControlMessage::SetExpression { psi: vec![0.0] }),
            ((), ControlMessage::SetMode { mode: Mode::Native }),
        ]);
        assert_eq!(s.state().current_psi, vec![0.0, 0.5, 0.0, 0.0]);
        assert_eq!(s.state().mode, Mode::Native);
    }

    #[test]
    fn observer_frame_matches_quilt_cell() {
        let mut s = Session::new(small_renderer(), None, Encoding::RawRgba8).unwrap();
        s.apply_batch([((), ControlMessage::SetViewer { angle_deg: Some(-20.0), distance_m: None })]);
        let frame = s.render_frame().unwrap();
        assert_eq!(frame.header.mode, Mode::Observer);
        let quilt = s
            .renderer()
            .render_quilt(s.views(), &s.state().expression())
            .unwrap();
        assert_eq!(frame.payload, extract_view(&quilt, 0).unwrap().to_rgba8());
        assert_eq!(s.render_frame().unwrap().header.frame_id, 1);
    }

    #[test]
    fn mode_dimensions() {
        let mut s = Session::new(small_renderer(), None, Encoding::Png).unwrap();
        s.apply_batch([((), ControlMessage::SetMode { mode: Mode::Quilt })]);
        let f = s.render_frame().unwrap();
        assert_eq!((f.header.width, f.header.height), (96, 96));
        s.apply_batch([((), ControlMessage::SetMode { mode: Mode::Native })]);
        let f = s.render_frame().unwrap();
        assert_eq!((f.header.width, f.header.height), (48, 64));
        assert_eq!(&f.payload[1..4], b"PNG");
    }

    #[test]
    fn playback_runs_and_stops() {
        let mut s = Session::new(small_renderer(), Some(stream(3)), Encoding::RawRgba8).unwrap();
        assert!(!s.advance_playback());
        s.apply_batch([((), ControlMessage::Playback { action: PlaybackAction::Play, frame: None })]);
        for expected in [0.0, 0.1, 0.2] {
            assert!(s.advance_playback());
            assert_eq!(s.state().current_psi[0], expected);
        }
        assert!(!s.advance_playback());
        let errs = s.apply_batch([((), ControlMessage::Playback { action: PlaybackAction::Seek, frame: Some(3) })]);
        assert!(errs.is_empty());
        assert_eq!(s.state().current_psi[0], 0.2);
        let errs = s.apply_batch([((), ControlMessage::Playback { action: PlaybackAction::Seek, frame: Some(99) })]);
        assert_eq!(errs.len(), 1);
    }

    #[test]
    fn playback_without_stream_errors() {
        let mut s = Session::new(small_renderer(), None, Encoding::RawRgba8).unwrap();
        let errs = s.apply_batch([((), ControlMessage::Playback { action: PlaybackAction::Play, frame: None })]);
        assert_eq!(errs.len(), 1);
    }
}
