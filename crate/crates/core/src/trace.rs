//! Per-iteration experiment log.

/// One evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub replication: usize,
    /// Zero-based evaluation index.
    pub iteration: usize,
    pub x: Vec<f64>,
    /// Fidelity, constituent or output tag; `None` for a full evaluation.
    pub tag: Option<usize>,
    /// Observed value (of the queried surface).
    pub y: f64,
    /// Best true objective value known so far; `-inf` before any.
    pub best_so_far: f64,
    /// `f* - best_so_far`.
    pub regret: f64,
    pub cumulative_cost: f64,
    pub acq_value: Option<f64>,
    pub wall_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Best-so-far of the last row, `-inf` if empty.
    pub fn best(&self) -> f64 {
        self.rows.last().map_or(f64::NEG_INFINITY, |r| r.best_so_far)
    }

    pub fn total_cost(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.cumulative_cost)
    }

    /// Appends a row. `candidate` is a newly known true objective value
    /// (if any); best-so-far, regret and cumulative cost are derived.
    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        replication: usize,
        x: Vec<f64>,
        tag: Option<usize>,
        y: f64,
        candidate: Option<f64>,
        optimum: f64,
        cost: f64,
        acq_value: Option<f64>,
        wall_ms: Option<f64>,
    ) {
        let mut best = self.best();
        if let Some(c) = candidate {
            if c > best {
                best = c;
            }
        }
        let regret = if best == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            (optimum - best).max(0.0)
        };
        self.rows.push(TraceRow {
            replication,
            iteration: self.rows.len(),
            x,
            tag,
            y,
            best_so_far: best,
            regret,
            cumulative_cost: self.total_cost() + cost,
            acq_value,
            wall_ms,
        });
    }

    /// Checks best-so-far monotonicity and strictly increasing cost.
    pub fn is_consistent(&self) -> bool {
        self.rows.windows(2).all(|w| {
            w[1].best_so_far >= w[0].best_so_far
                && w[1].cumulative_cost > w[0].cumulative_cost
                && w[1].regret <= w[0].regret
        })
    }
}
