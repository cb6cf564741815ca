//! Published closed-loop robustness results for four driving models.
//!
//! Values are exactly as printed (two decimals). They are used as an
//! arithmetic regression fixture for [`crate::metrics::robustness_degradation`]
//! and [`crate::metrics::aggregate`]; no simulation is involved.

/// `[RD, DS, SR, Eff, Comf]` as printed.
pub type Columns = [f64; 5];

#[derive(Debug, Clone, Copy)]
pub struct PublishedRow {
    pub setting: &'static str,
    pub latency: bool,
    pub values: Columns,
}

#[derive(Debug, Clone, Copy)]
pub struct PublishedModel {
    pub model: &'static str,
    pub baseline: Columns,
    pub rows: &'static [PublishedRow],
    pub avg_perturb: Columns,
    pub avg_latency: Columns,
    pub avg_all: Columns,
}

impl PublishedModel {
    pub fn row(&self, setting: &str) -> Option<&PublishedRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }

    pub fn baseline_ds(&self) -> f64 {
        self.baseline[1]
    }
}

const fn r(setting: &'static str, latency: bool, values: Columns) -> PublishedRow {
    PublishedRow {
        setting,
        latency,
        values,
    }
}

pub const PUBLISHED: [PublishedModel; 4] = [
    PublishedModel {
        model: "TCP-traj",
        baseline: [0.00, 59.90, 30.00, 76.54, 18.08],
        rows: &[
            r("Occlusion 0.5", false, [0.16, 50.16, 24.09, 75.28, 30.24]),
            r("Occlusion 0.8", false, [0.24, 45.54, 18.18, 76.10, 25.24]),
            r("Burst 1s", false, [0.01, 59.17, 28.64, 78.41, 23.84]),
            r("Burst 3s", false, [0.05, 56.80, 25.00, 78.26, 23.67]),
            r("GPS 5 m", false, [0.30, 41.88, 18.18, 71.37, 20.04]),
            r("GPS 15 m", false, [0.65, 21.12, 0.45, 58.37, 29.22]),
            r("Speed-N(0.5)", false, [0.04, 57.49, 27.72, 91.43, 23.82]),
            r("Speed-N(0.2)", false, [0.07, 55.61, 23.64, 123.01, 23.73]),
            r("Latency 100 ms", true, [-0.02, 60.91, 32.27, 77.75, 13.49]),
            r("Latency 200 ms", true, [0.44, 33.43, 0.00, 77.22, 2.35]),
            r("Latency 500 ms", true, [0.46, 32.22, 0.00, 80.22, 3.03]),
        ],
        avg_perturb: [0.19, 48.47, 20.74, 81.53, 24.98],
        avg_latency: [0.30, 42.19, 10.76, 78.40, 6.29],
        avg_all: [0.22, 46.76, 18.02, 80.67, 19.88],
    },
    PublishedModel {
        model: "UniAD",
        baseline: [0.00, 45.81, 16.36, 129.21, 43.58],
        rows: &[
            r("Occlusion 0.5", false, [0.11, 40.71, 15.45, 127.46, 42.25]),
            r("Occlusion 0.8", false, [0.39, 28.03, 2.27, 133.95, 46.66]),
            r("Burst 1s", false, [0.03, 44.26, 14.55, 134.70, 27.50]),
            r("Burst 3s", false, [0.08, 42.20, 13.64, 126.88, 43.82]),
            r("GPS 5 m", false, [0.15, 39.07, 11.36, 141.52, 51.11]),
            r("GPS 15 m", false, [0.55, 20.50, 0.00, 117.55, 48.91]),
            r("Speed-N(0.5)", false, [0.19, 37.27, 12.72, 184.92, 51.85]),
            r("Speed-N(0.2)", false, [0.37, 29.08, 4.55, 221.40, 54.46]),
            r("Latency 100 ms", true, [0.19, 37.01, 14.09, 123.44, 47.00]),
            r("Latency 200 ms", true, [0.26, 33.84, 10.45, 130.93, 8.12]),
            r("Latency 500 ms", true, [0.30, 31.85, 7.73, 143.88, 5.42]),
        ],
        avg_perturb: [0.23, 35.14, 9.32, 148.55, 45.82],
        avg_latency: [0.25, 34.23, 10.76, 132.75, 20.18],
        avg_all: [0.24, 34.89, 9.71, 144.24, 38.83],
    },
    PublishedModel {
        model: "VAD",
        baseline: [0.00, 42.35, 15.00, 157.94, 46.01],
        rows: &[
            r("Occlusion 0.5", false, [0.00, 42.21, 17.73, 163.26, 41.88]),
            r("Occlusion 0.8", false, [0.22, 33.15, 6.39, 167.09, 49.50]),
            r("Burst 1s", false, [-0.02, 43.04, 17.73, 151.75, 47.69]),
            r("Burst 3s", false, [0.08, 39.09, 13.18, 149.70, 50.76]),
            r("GPS 5 m", false, [0.13, 37.02, 12.27, 163.82, 32.64]),
            r("GPS 15 m", false, [0.62, 16.26, 0.00, 155.12, 57.99]),
            r("Speed-N(0.5)", false, [0.06, 39.64, 14.09, 213.24, 50.31]),
            r("Speed-N(0.2)", false, [0.19, 34.33, 8.64, 243.92, 54.21]),
            r("Latency 100 ms", true, [0.14, 36.52, 11.36, 144.35, 53.10]),
            r("Latency 200 ms", true, [0.36, 27.15, 3.64, 252.31, 11.70]),
            r("Latency 500 ms", true, [0.44, 23.55, 2.27, 242.62, 9.75]),
        ],
        avg_perturb: [0.16, 35.59, 11.25, 175.99, 48.12],
        avg_latency: [0.31, 29.07, 5.76, 213.09, 24.85],
        avg_all: [0.20, 33.81, 9.75, 186.11, 41.78],
    },
    PublishedModel {
        model: "SimLingo",
        baseline: [0.00, 85.94, 66.82, 244.18, 25.49],
        rows: &[
            r("Occlusion 0.5", false, [0.29, 60.71, 25.00, 226.06, 37.57]),
            r("Occlusion 0.8", false, [0.83, 14.79, 0.00, 199.93, 70.22]),
            r("Burst 1s", false, [0.01, 85.47, 66.36, 235.40, 31.01]),
            r("Burst 3s", false, [0.00, 85.82, 69.09, 236.16, 31.68]),
            r("GPS 5 m", false, [-0.02, 87.91, 73.64, 238.02, 33.41]),
            r("GPS 15 m", false, [-0.02, 87.53, 70.91, 238.64, 32.98]),
            r("Speed-N(0.5)", false, [0.28, 61.77, 29.09, 276.62, 33.51]),
            r("Speed-N(0.2)", false, [0.50, 42.73, 6.36, 282.45, 27.15]),
            r("Latency 100 ms", true, [0.67, 28.45, 2.27, 218.92, 63.66]),
            r("Latency 200 ms", true, [0.77, 19.47, 0.00, 189.95, 64.52]),
            r("Latency 500 ms", true, [0.82, 15.70, 0.00, 177.93, 59.78]),
        ],
        avg_perturb: [0.23, 65.84, 42.56, 241.66, 37.19],
        avg_latency: [0.75, 21.21, 0.76, 195.60, 62.65],
        avg_all: [0.38, 53.67, 31.16, 229.10, 44.14],
    },
];

pub fn published(model: &str) -> Option<&'static PublishedModel> {
    PUBLISHED.iter().find(|m| m.model == model)
}
