use std::time::{Duration, SystemTime, UNIX_EPOCH};

use tokio::time::Instant;

/// Scenario time on the wall clock: seconds since `start`.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    start: Instant,
    epoch: i64,
}

impl WallClock {
    pub fn start() -> Self {
        let epoch = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0);
        WallClock {
            start: Instant::now(),
            epoch,
        }
    }

    /// Seconds elapsed since the clock started.
    pub fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Unix second corresponding to scenario time 0 on the wire.
    pub fn epoch(&self) -> i64 {
        self.epoch
    }

    pub fn instant_at(&self, t: f64) -> Instant {
        self.start + Duration::from_secs_f64(t.max(0.0))
    }

    pub async fn sleep_until(&self, t: f64) {
        tokio::time::sleep_until(self.instant_at(t)).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn now_tracks_elapsed_time() {
        let clock = WallClock::start();
        clock.sleep_until(0.05).await;
        let now = clock.now();
        assert!((0.05..0.5).contains(&now), "{now}");
    }
}
