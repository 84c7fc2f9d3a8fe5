use crate::config::Experiment;

/// One entry of the experiment registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub experiment: Experiment,
    pub section: &'static str,
    pub doc: &'static str,
}

impl Entry {
    /// `name → §n  doc`, the line printed by `fracergo list`.
    pub fn line(&self) -> String {
        format!("{:<14} → {:<3} {}", self.experiment.name(), self.section, self.doc)
    }
}

pub const REGISTRY: [Entry; 9] = [
    Entry {
        experiment: Experiment::VerifyKernel,
        section: "§2",
        doc: "certify the kernel regularity bounds and increment square-integrability",
    },
    Entry {
        experiment: Experiment::VerifyDrift,
        section: "§2",
        doc: "check drift monotonicity and estimate the contraction radius outside a ball",
    },
    Entry {
        experiment: Experiment::Decay,
        section: "§3",
        doc: "mean squared gap of synchronous pairs against a stationary copy",
    },
    Entry {
        experiment: Experiment::Rates,
        section: "§2",
        doc: "fit a stretched-exponential rate to the decay curve with bootstrap bands",
    },
    Entry {
        experiment: Experiment::Schedule,
        section: "§4",
        doc: "stopping-time schedules, memory bounds and the stopping-time tail check",
    },
    Entry {
        experiment: Experiment::Contraction,
        section: "§5",
        doc: "one-step contraction under adversarial memory and step-wise moment decay",
    },
    Entry {
        experiment: Experiment::Coalesce,
        section: "§6",
        doc: "sticking drift coupling, its Wiener-level shift and the Girsanov price",
    },
    Entry {
        experiment: Experiment::Tv,
        section: "§6",
        doc: "two-stage total variation estimate: synchronous phase then a sticking attempt",
    },
    Entry {
        experiment: Experiment::LaplaceCheck,
        section: "§6",
        doc: "Laplace-transform identity between the kernel and its conjugate",
    },
];

pub fn list_experiments() -> &'static [Entry] {
    &REGISTRY
}

pub fn section_of(experiment: Experiment) -> &'static str {
    REGISTRY
        .iter()
        .find(|e| e.experiment == experiment)
        .map(|e| e.section)
        .unwrap_or("?")
}
