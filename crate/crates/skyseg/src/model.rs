//! Unified trained-model wrapper: one type that any of the segmentation
//! methods fits into, carrying its feature specification, optional
//! standardization statistics and cross-validated decision prior, with a
//! versioned flat-file serialization.

use std::path::Path;

use crate::discriminative::{self, LinearKind, LinearModel};
use crate::error::{Error, Result};
use crate::features::{FeatureFrame, FeatureSpec, SampleSet, Standardizer};
use crate::gaussian::GaussianClass;
use crate::generative::{self, GenerativeKind, GenerativeModel};
use crate::grid::Grid;
use crate::linalg::Mat;
use crate::mrf::{self, AnnealSchedule, CliqueOrder, MrfModel, SegmentMode};
use crate::poly::PolyMap;

/// Decision rule shared by every model: a pixel is cloud when the scaled
/// posterior `lambda * p` reaches 0.5. Ties predict cloud.
pub fn decide(p_cloud: f64, lambda: f64) -> u8 {
    u8::from(lambda * p_cloud >= 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Gda,
    Nbc,
    KMeans,
    Gmm,
    Rrc,
    Svc,
    Gpc,
    Mrf,
    SaMrf,
    IcmMrf,
    SaIcmMrf,
}

impl ModelFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelFamily::Gda => "gda",
            ModelFamily::Nbc => "nbc",
            ModelFamily::KMeans => "kmeans",
            ModelFamily::Gmm => "gmm",
            ModelFamily::Rrc => "rrc",
            ModelFamily::Svc => "svc",
            ModelFamily::Gpc => "gpc",
            ModelFamily::Mrf => "mrf",
            ModelFamily::SaMrf => "sa-mrf",
            ModelFamily::IcmMrf => "icm-mrf",
            ModelFamily::SaIcmMrf => "sa-icm-mrf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gda" => Ok(ModelFamily::Gda),
            "nbc" => Ok(ModelFamily::Nbc),
            "kmeans" | "k-means" => Ok(ModelFamily::KMeans),
            "gmm" => Ok(ModelFamily::Gmm),
            "rrc" => Ok(ModelFamily::Rrc),
            "svc" => Ok(ModelFamily::Svc),
            "gpc" => Ok(ModelFamily::Gpc),
            "mrf" => Ok(ModelFamily::Mrf),
            "sa-mrf" => Ok(ModelFamily::SaMrf),
            "icm-mrf" => Ok(ModelFamily::IcmMrf),
            "sa-icm-mrf" => Ok(ModelFamily::SaIcmMrf),
            other => Err(Error::Config(format!("unknown model family `{other}`"))),
        }
    }

    pub const ALL: [ModelFamily; 11] = [
        ModelFamily::Gda,
        ModelFamily::Nbc,
        ModelFamily::KMeans,
        ModelFamily::Gmm,
        ModelFamily::Rrc,
        ModelFamily::Svc,
        ModelFamily::Gpc,
        ModelFamily::Mrf,
        ModelFamily::SaMrf,
        ModelFamily::IcmMrf,
        ModelFamily::SaIcmMrf,
    ];

    /// Whether training needs labeled frames.
    pub fn is_supervised(&self) -> bool {
        !matches!(
            self,
            ModelFamily::KMeans | ModelFamily::Gmm | ModelFamily::IcmMrf | ModelFamily::SaIcmMrf
        )
    }
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub family: ModelFamily,
    pub feature_spec: FeatureSpec,
    /// Covariance/ridge/prior regularizer (GDA, GMM, RRC, GPC, MRF).
    pub gamma: f64,
    /// Squared-hinge penalty (SVC).
    pub cost: f64,
    /// Clique coupling strength (MRF families).
    pub beta: f64,
    pub clique: CliqueOrder,
    /// Cooling schedule for the annealed variants.
    pub schedule: AnnealSchedule,
    /// Polynomial map order (discriminative families).
    pub order: u32,
    pub seed: u64,
    /// Decision prior applied at prediction time.
    pub lambda: f64,
}

impl TrainConfig {
    pub fn new(family: ModelFamily, feature_spec: FeatureSpec) -> Self {
        Self {
            family,
            feature_spec,
            gamma: 1.0,
            cost: 1.0,
            beta: 1.0,
            clique: CliqueOrder::FourConnected,
            schedule: AnnealSchedule::default(),
            order: 1,
            seed: 0,
            lambda: 1.0,
        }
    }
}

/// Family-specific trained state.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelCore {
    Generative(GenerativeModel),
    Linear(LinearModel),
    /// Supervised MRF; `sa` switches inference to simulated annealing.
    Mrf {
        model: MrfModel,
        sa: Option<AnnealSchedule>,
        seed: u64,
    },
    /// Unsupervised per-frame MRF: nothing to train ahead of time, the
    /// class parameters are inferred on every frame at prediction time.
    IcmMrf {
        beta: f64,
        clique: CliqueOrder,
        gamma: f64,
        seed: u64,
        sa: Option<AnnealSchedule>,
    },
}

/// A trained segmentation model plus everything needed to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct SegModel {
    pub family: ModelFamily,
    pub feature_spec: FeatureSpec,
    pub standardizer: Option<Standardizer>,
    pub lambda: f64,
    pub core: ModelCore,
}

/// Trains any family on labeled feature frames (labels are ignored by the
/// unsupervised families except for cluster-to-class mapping).
pub fn train(config: &TrainConfig, frames: &[&FeatureFrame]) -> Result<SegModel> {
    for frame in frames {
        if frame.spec().family != config.feature_spec.family
            || frame.spec().neighborhood != config.feature_spec.neighborhood
        {
            return Err(Error::Config(format!(
                "frame extracted as `{}` but the model wants `{}`",
                frame.spec(),
                config.feature_spec
            )));
        }
    }

    let standardizer = if config.feature_spec.standardize {
        Some(Standardizer::fit(frames)?)
    } else {
        None
    };
    let owned: Vec<FeatureFrame> = match &standardizer {
        Some(std) => frames
            .iter()
            .map(|f| {
                let mut f = (*f).clone();
                std.transform(&mut f);
                f
            })
            .collect(),
        None => frames.iter().map(|f| (*f).clone()).collect(),
    };
    let refs: Vec<&FeatureFrame> = owned.iter().collect();
    let samples = SampleSet::from_frames(&refs)?;
    let warmth = config.feature_spec.warmth_dim();

    let core = match config.family {
        ModelFamily::Gda => ModelCore::Generative(generative::fit_gda(&samples, config.gamma)?),
        ModelFamily::Nbc => ModelCore::Generative(generative::fit_nbc(&samples)?),
        ModelFamily::KMeans => {
            ModelCore::Generative(generative::fit_kmeans_model(&samples, config.seed, warmth)?)
        }
        ModelFamily::Gmm => ModelCore::Generative(generative::fit_gmm_model(
            &samples,
            config.gamma,
            config.seed,
            warmth,
        )?),
        ModelFamily::Rrc => {
            ModelCore::Linear(discriminative::rrc_model(&samples, config.order, config.gamma)?)
        }
        ModelFamily::Svc => {
            ModelCore::Linear(discriminative::svc_model(&samples, config.order, config.cost)?)
        }
        ModelFamily::Gpc => {
            ModelCore::Linear(discriminative::gpc_model(&samples, config.order, config.gamma)?)
        }
        ModelFamily::Mrf | ModelFamily::SaMrf => {
            let model =
                mrf::fit_supervised(&samples, config.gamma, config.beta, config.clique)?;
            ModelCore::Mrf {
                model,
                sa: (config.family == ModelFamily::SaMrf).then_some(config.schedule),
                seed: config.seed,
            }
        }
        ModelFamily::IcmMrf | ModelFamily::SaIcmMrf => ModelCore::IcmMrf {
            beta: config.beta,
            clique: config.clique,
            gamma: config.gamma,
            seed: config.seed,
            sa: (config.family == ModelFamily::SaIcmMrf).then_some(config.schedule),
        },
    };

    Ok(SegModel {
        family: config.family,
        feature_spec: config.feature_spec,
        standardizer,
        lambda: config.lambda,
        core,
    })
}

impl SegModel {
    fn check_frame(&self, features: &FeatureFrame) -> Result<()> {
        if features.spec().family != self.feature_spec.family
            || features.spec().neighborhood != self.feature_spec.neighborhood
        {
            return Err(Error::Config(format!(
                "frame extracted as `{}` but the model wants `{}`",
                features.spec(),
                self.feature_spec
            )));
        }
        Ok(())
    }

    fn standardized(&self, features: &FeatureFrame) -> FeatureFrame {
        match &self.standardizer {
            Some(std) => {
                let mut f = features.clone();
                std.transform(&mut f);
                f
            }
            None => features.clone(),
        }
    }

    /// Per-pixel cloud scores for one frame.
    pub fn score_frame(&self, features: &FeatureFrame) -> Result<Vec<f64>> {
        self.check_frame(features)?;
        let frame = self.standardized(features);
        let n = frame.n_pixels();
        match &self.core {
            ModelCore::Generative(model) => {
                let prepared = model.prepare()?;
                Ok((0..n).map(|p| prepared.posterior(frame.vector(p))).collect())
            }
            ModelCore::Linear(model) => {
                let mut phi = vec![0.0; model.poly.output_dim()];
                Ok((0..n)
                    .map(|p| {
                        model.poly.expand_into(frame.vector(p), &mut phi);
                        model.score_mapped(&phi)
                    })
                    .collect())
            }
            ModelCore::Mrf { model, sa, seed } => {
                let mode = match sa {
                    Some(schedule) => SegmentMode::Sa {
                        schedule: *schedule,
                        seed: *seed,
                    },
                    None => SegmentMode::Icm,
                };
                let labels = mrf::segment(model, &frame, &mode)?;
                let prepared = mrf::PreparedMrf::new(model, &frame)?;
                let cols = frame.cols();
                Ok((0..n)
                    .map(|p| prepared.local_posterior(&labels, p / cols, p % cols))
                    .collect())
            }
            ModelCore::IcmMrf {
                beta,
                clique,
                gamma,
                seed,
                sa,
            } => {
                let fit = mrf::fit_icm_unsupervised(
                    &frame,
                    *beta,
                    *clique,
                    *gamma,
                    *seed,
                    self.feature_spec.warmth_dim(),
                    sa.as_ref(),
                )?;
                Ok(fit.scores)
            }
        }
    }

    /// Scores plus the thresholded mask under this model's decision prior.
    pub fn predict_frame(&self, features: &FeatureFrame) -> Result<(Vec<f64>, Grid<u8>)> {
        let scores = self.score_frame(features)?;
        let mask = Grid::from_vec(
            features.rows(),
            features.cols(),
            scores.iter().map(|&p| decide(p, self.lambda)).collect(),
        );
        Ok((scores, mask))
    }
}

// ---------------------------------------------------------------------------
// Flat-file serialization
// ---------------------------------------------------------------------------

const FORMAT_HEADER: &str = "skyseg-model v1";

fn push_floats(out: &mut String, name: &str, values: &[f64]) {
    out.push_str(name);
    out.push(' ');
    out.push_str(&values.len().to_string());
    for v in values {
        out.push(' ');
        out.push_str(&format!("{v}"));
    }
    out.push('\n');
}

fn push_class(out: &mut String, idx: usize, class: &GaussianClass) {
    out.push_str(&format!("class {idx}\n"));
    out.push_str(&format!("prior {}\n", class.prior));
    push_floats(out, "mean", &class.mean);
    push_floats(out, "cov", class.covariance.data());
}

fn push_schedule(out: &mut String, schedule: &AnnealSchedule) {
    out.push_str(&format!(
        "sa {} {} {}\n",
        schedule.initial_temp, schedule.cooling, schedule.steps
    ));
}

/// Renders a model into the versioned flat text format. Float fields use the
/// shortest round-trip representation, so save/load is exact.
pub fn render_model(model: &SegModel) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_HEADER);
    out.push('\n');
    out.push_str(&format!("family {}\n", model.family.as_str()));
    out.push_str(&format!("features {}\n", model.feature_spec));
    out.push_str(&format!("lambda {}\n", model.lambda));
    if let Some(std) = &model.standardizer {
        push_floats(&mut out, "standardize_mean", &std.mean);
        push_floats(&mut out, "standardize_var", &std.variance);
    }
    match &model.core {
        ModelCore::Generative(m) => {
            out.push_str("core generative\n");
            let kind = match m.kind {
                GenerativeKind::Gda => "gda",
                GenerativeKind::Nbc => "nbc",
                GenerativeKind::KMeans => "kmeans",
                GenerativeKind::Gmm => "gmm",
            };
            out.push_str(&format!("kind {kind}\n"));
            out.push_str(&format!("gamma {}\n", m.gamma));
            push_class(&mut out, 0, &m.classes[0]);
            push_class(&mut out, 1, &m.classes[1]);
        }
        ModelCore::Linear(m) => {
            out.push_str("core linear\n");
            let kind = match m.kind {
                LinearKind::Rrc => "rrc",
                LinearKind::Svc => "svc",
                LinearKind::Gpc => "gpc",
            };
            out.push_str(&format!("kind {kind}\n"));
            out.push_str(&format!("order {}\n", m.poly.order()));
            out.push_str(&format!("input_dim {}\n", m.poly.input_dim()));
            out.push_str(&format!("hyper {}\n", m.hyper));
            out.push_str(&format!("converged {}\n", m.converged));
            push_floats(&mut out, "weights", &m.weights);
            if let Some(cov) = &m.posterior_cov {
                push_floats(&mut out, "posterior_cov", cov.data());
            }
        }
        ModelCore::Mrf { model: m, sa, seed } => {
            out.push_str("core mrf\n");
            out.push_str(&format!("beta {}\n", m.beta));
            out.push_str(&format!("clique {}\n", m.clique.as_str()));
            out.push_str(&format!("gamma {}\n", m.gamma));
            out.push_str(&format!("seed {seed}\n"));
            if let Some(schedule) = sa {
                push_schedule(&mut out, schedule);
            }
            push_class(&mut out, 0, &m.classes[0]);
            push_class(&mut out, 1, &m.classes[1]);
        }
        ModelCore::IcmMrf {
            beta,
            clique,
            gamma,
            seed,
            sa,
        } => {
            out.push_str("core icm\n");
            out.push_str(&format!("beta {beta}\n"));
            out.push_str(&format!("clique {}\n", clique.as_str()));
            out.push_str(&format!("gamma {gamma}\n"));
            out.push_str(&format!("seed {seed}\n"));
            if let Some(schedule) = sa {
                push_schedule(&mut out, schedule);
            }
        }
    }
    out
}

pub fn save_model(model: &SegModel, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(path, e))?;
        }
    }
    std::fs::write(path, render_model(model)).map_err(|e| Error::io(path, e))
}

struct LineReader<'a> {
    path: &'a Path,
    lines: Vec<&'a str>,
    cursor: usize,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        while self.cursor < self.lines.len() {
            let line = self.lines[self.cursor].trim();
            self.cursor += 1;
            if !line.is_empty() {
                return Ok(line);
            }
        }
        Err(Error::parse(self.path, self.lines.len(), "unexpected end of model file"))
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines[self.cursor..]
            .iter()
            .map(|l| l.trim())
            .find(|l| !l.is_empty())
    }

    fn line_no(&self) -> usize {
        self.cursor
    }

    fn expect_key(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        line.strip_prefix(key)
            .map(str::trim)
            .ok_or_else(|| Error::parse(self.path, self.line_no(), format!("expected `{key} ...`")))
    }

    fn parse_after<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let value = self.expect_key(key)?;
        value
            .parse()
            .map_err(|_| Error::parse(self.path, self.line_no(), format!("invalid `{key}` value")))
    }

    fn floats_after(&mut self, key: &str) -> Result<Vec<f64>> {
        let value = self.expect_key(key)?;
        let mut parts = value.split_whitespace();
        let count: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(self.path, self.line_no(), "missing vector length"))?;
        let values: Vec<f64> = parts
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(self.path, self.line_no(), "invalid float"))?;
        if values.len() != count {
            return Err(Error::parse(
                self.path,
                self.line_no(),
                format!("expected {count} values, found {}", values.len()),
            ));
        }
        Ok(values)
    }

    fn class(&mut self, idx: usize) -> Result<GaussianClass> {
        let declared: usize = self.parse_after("class")?;
        if declared != idx {
            return Err(Error::parse(self.path, self.line_no(), "classes out of order"));
        }
        let prior: f64 = self.parse_after("prior")?;
        let mean = self.floats_after("mean")?;
        let cov = self.floats_after("cov")?;
        let d = mean.len();
        if cov.len() != d * d {
            return Err(Error::parse(self.path, self.line_no(), "covariance size mismatch"));
        }
        Ok(GaussianClass {
            mean,
            covariance: Mat::from_vec(d, d, cov),
            prior,
        })
    }

    fn optional_schedule(&mut self) -> Result<Option<AnnealSchedule>> {
        if let Some(line) = self.peek() {
            if let Some(rest) = line.strip_prefix("sa ") {
                self.next()?;
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::parse(self.path, self.line_no(), "invalid `sa` line"));
                }
                let schedule = AnnealSchedule {
                    initial_temp: parts[0].parse().map_err(|_| {
                        Error::parse(self.path, self.line_no(), "invalid temperature")
                    })?,
                    cooling: parts[1]
                        .parse()
                        .map_err(|_| Error::parse(self.path, self.line_no(), "invalid cooling"))?,
                    steps: parts[2]
                        .parse()
                        .map_err(|_| Error::parse(self.path, self.line_no(), "invalid steps"))?,
                };
                return Ok(Some(schedule));
            }
        }
        Ok(None)
    }
}

pub fn parse_model(path: &Path, content: &str) -> Result<SegModel> {
    let mut reader = LineReader {
        path,
        lines: content.lines().collect(),
        cursor: 0,
    };
    let header = reader.next()?;
    if header != FORMAT_HEADER {
        return Err(Error::parse(path, 1, format!("expected `{FORMAT_HEADER}` header")));
    }
    let family = ModelFamily::parse(reader.expect_key("family")?)?;
    let features_line = reader.expect_key("features")?;
    let parts: Vec<&str> = features_line.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::parse(path, reader.line_no(), "invalid `features` line"));
    }
    let feature_spec = FeatureSpec {
        family: crate::features::FeatureFamily::parse(parts[0])?,
        neighborhood: crate::features::Neighborhood::parse(parts[1])?,
        standardize: parts[2] == "true",
    };
    let lambda: f64 = reader.parse_after("lambda")?;

    let standardizer = if reader
        .peek()
        .is_some_and(|l| l.starts_with("standardize_mean"))
    {
        let mean = reader.floats_after("standardize_mean")?;
        let variance = reader.floats_after("standardize_var")?;
        Some(Standardizer { mean, variance })
    } else {
        None
    };

    let core = match reader.expect_key("core")? {
        "generative" => {
            let kind = match reader.expect_key("kind")? {
                "gda" => GenerativeKind::Gda,
                "nbc" => GenerativeKind::Nbc,
                "kmeans" => GenerativeKind::KMeans,
                "gmm" => GenerativeKind::Gmm,
                other => {
                    return Err(Error::parse(
                        path,
                        reader.line_no(),
                        format!("unknown generative kind `{other}`"),
                    ))
                }
            };
            let gamma: f64 = reader.parse_after("gamma")?;
            let classes = [reader.class(0)?, reader.class(1)?];
            ModelCore::Generative(GenerativeModel {
                kind,
                classes,
                gamma,
            })
        }
        "linear" => {
            let kind = match reader.expect_key("kind")? {
                "rrc" => LinearKind::Rrc,
                "svc" => LinearKind::Svc,
                "gpc" => LinearKind::Gpc,
                other => {
                    return Err(Error::parse(
                        path,
                        reader.line_no(),
                        format!("unknown linear kind `{other}`"),
                    ))
                }
            };
            let order: u32 = reader.parse_after("order")?;
            let input_dim: usize = reader.parse_after("input_dim")?;
            let hyper: f64 = reader.parse_after("hyper")?;
            let converged: bool = reader.parse_after("converged")?;
            let weights = reader.floats_after("weights")?;
            let poly = PolyMap::new(input_dim, order)?;
            if weights.len() != poly.output_dim() {
                return Err(Error::parse(path, reader.line_no(), "weight vector size mismatch"));
            }
            let posterior_cov = if reader.peek().is_some_and(|l| l.starts_with("posterior_cov")) {
                let values = reader.floats_after("posterior_cov")?;
                let p = poly.output_dim();
                if values.len() != p * p {
                    return Err(Error::parse(
                        path,
                        reader.line_no(),
                        "posterior covariance size mismatch",
                    ));
                }
                Some(Mat::from_vec(p, p, values))
            } else {
                None
            };
            ModelCore::Linear(LinearModel {
                kind,
                poly,
                weights,
                hyper,
                posterior_cov,
                converged,
            })
        }
        "mrf" => {
            let beta: f64 = reader.parse_after("beta")?;
            let clique = CliqueOrder::parse(reader.expect_key("clique")?)?;
            let gamma: f64 = reader.parse_after("gamma")?;
            let seed: u64 = reader.parse_after("seed")?;
            let sa = reader.optional_schedule()?;
            let classes = [reader.class(0)?, reader.class(1)?];
            ModelCore::Mrf {
                model: MrfModel {
                    classes,
                    beta,
                    clique,
                    gamma,
                },
                sa,
                seed,
            }
        }
        "icm" => {
            let beta: f64 = reader.parse_after("beta")?;
            let clique = CliqueOrder::parse(reader.expect_key("clique")?)?;
            let gamma: f64 = reader.parse_after("gamma")?;
            let seed: u64 = reader.parse_after("seed")?;
            let sa = reader.optional_schedule()?;
            ModelCore::IcmMrf {
                beta,
                clique,
                gamma,
                seed,
                sa,
            }
        }
        other => {
            return Err(Error::parse(
                path,
                reader.line_no(),
                format!("unknown core `{other}`"),
            ))
        }
    };

    Ok(SegModel {
        family,
        feature_spec,
        standardizer,
        lambda,
        core,
    })
}

pub fn load_model(path: &Path) -> Result<SegModel> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(path, &content)
}
