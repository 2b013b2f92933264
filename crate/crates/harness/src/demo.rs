//! Four `M = 3` point clouds on the simplex and the two collapse losses
//! evaluated on each.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use simplexvq::diagnostics::export_scatter;
use simplexvq::regularize::{knn_loss_value, ppl_loss_value, KnnMetric, KnnRegConfig};
use simplexvq::simplex::{Provenance, SimplexBatch};

use crate::Result;

pub const POINTS: usize = 300;
pub const DEMO_K: usize = 8;

/// Name and Dirichlet mixture components of each cloud.
pub const CLOUDS: [(&str, &[[f64; 3]]); 4] = [
    ("vertex_clustered", &[[30.0, 1.0, 1.0], [1.0, 30.0, 1.0], [1.0, 1.0, 30.0]]),
    ("collapsed", &[[50.0, 1.0, 1.0]]),
    ("centered", &[[20.0, 20.0, 20.0]]),
    ("uniform", &[[1.0, 1.0, 1.0]]),
];

#[derive(Clone, Debug, PartialEq)]
pub struct CloudLoss {
    pub name: &'static str,
    pub ppl: f64,
    pub knn: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoReport {
    pub clouds: Vec<CloudLoss>,
}

impl DemoReport {
    pub fn get(&self, name: &str) -> &CloudLoss {
        self.clouds.iter().find(|c| c.name == name).expect("known cloud")
    }

    /// `ppl` separates the collapsed cloud from the other three and nothing
    /// more.
    pub fn ppl_pattern_holds(&self) -> bool {
        self.clouds
            .iter()
            .all(|c| if c.name == "collapsed" { c.ppl >= 0.5 } else { c.ppl <= 0.05 })
    }

    /// `knn` orders vertex-clustered < uniform < centered and puts the
    /// collapsed cloud at least 5× above the vertex-clustered one.
    pub fn knn_pattern_holds(&self) -> bool {
        let v = self.get("vertex_clustered").knn;
        v < self.get("uniform").knn
            && self.get("uniform").knn < self.get("centered").knn
            && self.get("collapsed").knn >= 5.0 * v
    }
}

impl fmt::Display for DemoReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18} {:>10} {:>10}", "cloud", "ppl_loss", "knn_loss")?;
        for c in &self.clouds {
            writeln!(f, "{:<18} {:>10.4} {:>10.4}", c.name, c.ppl, c.knn)?;
        }
        writeln!(f, "ppl pattern: {}", if self.ppl_pattern_holds() { "PASS" } else { "FAIL" })?;
        write!(f, "knn pattern: {}", if self.knn_pattern_holds() { "PASS" } else { "FAIL" })
    }
}

/// Samples `POINTS` rows split evenly over the mixture components.
pub fn sample_cloud(components: &[[f64; 3]], rng: &mut ChaCha8Rng) -> Result<SimplexBatch> {
    let per = POINTS / components.len();
    let mut rows = Vec::with_capacity(POINTS);
    for alpha in components {
        let d = Dirichlet::new(*alpha).expect("positive concentrations");
        for _ in 0..per {
            let r: [f64; 3] = d.sample(rng);
            let s: f64 = r.iter().sum();
            rows.push(r.iter().map(|v| v / s).collect());
        }
    }
    Ok(SimplexBatch::from_rows(&rows, Provenance::AssignmentProb)?)
}

pub fn generate_clouds(seed: u64) -> Result<Vec<(&'static str, SimplexBatch)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CLOUDS
        .iter()
        .map(|&(name, comps)| Ok((name, sample_cloud(comps, &mut rng)?)))
        .collect()
}

/// Evaluates both losses on every cloud and, with `out` set, writes
/// `<cloud>.csv` scatter files there.
pub fn run_demo(seed: u64, out: Option<&Path>) -> Result<DemoReport> {
    let cfg = KnnRegConfig {
        k: DEMO_K,
        metric: KnnMetric::Ce,
        target: Provenance::AssignmentProb,
        ..KnnRegConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clouds = Vec::with_capacity(CLOUDS.len());
    for (name, batch) in generate_clouds(seed)? {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            export_scatter(&batch, &[name], dir.join(format!("{name}.csv")))?;
        }
        clouds.push(CloudLoss {
            name,
            ppl: ppl_loss_value(&batch),
            knn: knn_loss_value(&batch, &cfg, &mut rng)?,
        });
    }
    Ok(DemoReport { clouds })
}
