//! When buffered input is processed.

use serde::{Deserialize, Serialize};

/// Pending actions above this count trigger processing.
pub const ACTION_THRESHOLD: usize = 20;
/// Pending sentences above this count trigger processing.
pub const SENTENCE_THRESHOLD: usize = 20;
/// Seconds without a new action, while recording, that trigger processing.
pub const PAUSE_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BufferState {
    pub pending_sentences: usize,
    pub pending_actions: usize,
    pub seconds_since_last_action: f64,
    pub recording: bool,
    /// Set when recording stopped; forces out whatever is pending.
    #[serde(default)]
    pub flush: bool,
}

impl BufferState {
    pub fn has_pending(&self) -> bool {
        self.pending_sentences > 0 || self.pending_actions > 0
    }
}

/// All thresholds are strict. Nothing triggers without pending content.
pub fn should_trigger(state: &BufferState) -> bool {
    if !state.has_pending() {
        return false;
    }
    state.pending_actions > ACTION_THRESHOLD
        || state.pending_sentences > SENTENCE_THRESHOLD
        || (state.recording && state.seconds_since_last_action > PAUSE_THRESHOLD)
        || state.flush
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(a: usize, s: usize, secs: f64, recording: bool) -> BufferState {
        BufferState {
            pending_sentences: s,
            pending_actions: a,
            seconds_since_last_action: secs,
            recording,
            flush: false,
        }
    }

    #[test]
    fn thresholds_are_strict() {
        assert!(!should_trigger(&st(20, 5, 1.0, true)));
        assert!(should_trigger(&st(21, 5, 1.0, true)));
        assert!(!should_trigger(&st(0, 20, 1.0, true)));
        assert!(should_trigger(&st(0, 21, 1.0, true)));
        assert!(!should_trigger(&st(3, 2, 3.0, true)));
        assert!(should_trigger(&st(3, 2, 3.1, true)));
    }

    #[test]
    fn pause_only_counts_while_recording() {
        assert!(!should_trigger(&st(3, 2, 10.0, false)));
    }

    #[test]
    fn nothing_pending() {
        assert!(!should_trigger(&st(0, 0, 10.0, true)));
        let mut s = st(0, 0, 0.0, false);
        s.flush = true;
        assert!(!should_trigger(&s));
        s.pending_sentences = 1;
        assert!(should_trigger(&s));
    }
}
