use std::fmt::Write as _;

/// Online-update outcome recorded at a trigger iteration.
#[derive(Clone, Debug, PartialEq)]
pub enum UpdateEvent {
    Accepted { loss_before: f64, loss_after: f64, lr: f64, halvings: usize },
    /// Backtracking ran out of halvings; parameters kept.
    Skipped { loss_before: f64 },
    /// Gradient contained NaN or infinity; parameters kept.
    NonFinite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    /// 1-based iteration index.
    pub iter: usize,
    pub sigma: f64,
    /// `||y - H T_M x||`.
    pub fidelity: f64,
    /// `||q - T_M x||`; absent for GAP.
    pub primal_q: Option<f64>,
    /// `||x - v||`; absent for GAP.
    pub primal_x: Option<f64>,
    pub psnr: Option<f64>,
    /// `||y - H T_M v||^2`, recorded by the adaptive solver.
    pub online_loss: Option<f64>,
    pub update: Option<UpdateEvent>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    /// `||y - H x0||` before the first iteration.
    pub initial_fidelity: f64,
    pub stopped_early: bool,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn final_fidelity(&self) -> f64 {
        self.rows.last().map_or(self.initial_fidelity, |r| r.fidelity)
    }

    pub fn update_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!(r.update, Some(UpdateEvent::Accepted { .. })))
            .count()
    }

    pub fn to_csv(&self) -> String {
        let adaptive = self.rows.iter().any(|r| r.online_loss.is_some());
        let mut s = String::from("iter,sigma,fidelity,primal_q,primal_x,psnr_if_truth_given");
        if adaptive {
            s.push_str(",online_loss,update");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{:.10e},{},{},{}",
                r.iter,
                r.sigma,
                r.fidelity,
                opt(r.primal_q),
                opt(r.primal_x),
                opt(r.psnr)
            );
            if adaptive {
                let ev = match &r.update {
                    None => "",
                    Some(UpdateEvent::Accepted { .. }) => "accepted",
                    Some(UpdateEvent::Skipped { .. }) => "skipped",
                    Some(UpdateEvent::NonFinite) => "non_finite",
                };
                let _ = write!(s, ",{},{ev}", opt(r.online_loss));
            }
            s.push('\n');
        }
        s
    }
}
